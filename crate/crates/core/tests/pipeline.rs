use csvreg::datasets::{build_group_index, read_dataset, write_dataset};
use csvreg::harness::{
    build_datasets, checkpoint_path, parse_config, read_report, run_experiment, seed_train_config, ExperimentConfig,
};
use csvreg::trainer::{load_checkpoint, Method};

#[test]
fn file_datasets_train_like_generated_ones() {
    let dir = tempfile::tempdir().unwrap();
    let toy = ExperimentConfig::toy(Method::Rcsv);
    let (train, tests) = build_datasets(&toy, 3).unwrap();
    let (train_path, test_path) = (dir.path().join("train.grpd"), dir.path().join("test.grpd"));
    write_dataset(&train_path, &train).unwrap();
    write_dataset(&test_path, &tests.last().unwrap().2).unwrap();
    assert_eq!(read_dataset(&train_path).unwrap(), train);

    let text = format!(
        "[dataset]\nkind = \"from_file\"\npath = {:?}\ntest_path = {:?}\n[train]\nmethod = \"rcsv\"\nsteps = 400\n[run]\nseeds = [3]\n",
        train_path.display().to_string(),
        test_path.display().to_string()
    );
    let report = run_experiment(&parse_config(&text).unwrap(), None).unwrap();
    assert_eq!(report.summary.len(), 1);
    assert_eq!(report.summary[0].label, "file");
    assert!(report.seeds[0].csv.is_some());
}

#[test]
fn checkpoints_reload_for_evaluation() {
    let dir = tempfile::tempdir().unwrap();
    let mut config = ExperimentConfig::toy(Method::RcsvU);
    config.train.steps = 200;
    config.run.seeds = vec![7];
    let report = run_experiment(&config, Some(dir.path())).unwrap();
    let state = load_checkpoint(&checkpoint_path(dir.path(), 7), &seed_train_config(&config, 7)).unwrap();
    assert_eq!(state.step, 200);
    assert_eq!(state.trace, report.seeds[0].trace);
    // a different seed's config does not open this checkpoint
    assert!(load_checkpoint(&checkpoint_path(dir.path(), 7), &seed_train_config(&config, 8)).is_err());
    assert_eq!(read_report(dir.path()).unwrap(), report);
}

#[test]
fn report_invariants_hold_for_every_method() {
    for method in Method::ALL {
        let mut config = ExperimentConfig::toy(method);
        config.train.steps = 300;
        config.run.seeds = vec![1, 2];
        let report = run_experiment(&config, None).unwrap();
        for seed in &report.seeds {
            for e in &seed.evaluations {
                assert!(e.worst <= e.average + 1e-12 && e.average <= 100.0, "{method:?}");
                let n: usize = e.groups.iter().map(|g| g.count).sum();
                let weighted: f64 = e.groups.iter().map(|g| g.accuracy * g.count as f64).sum::<f64>() / n as f64;
                assert!((weighted - e.total).abs() < 1e-9);
            }
            assert!(seed.csv_u + 1e-12 >= seed.csv.unwrap());
        }
    }
}

#[test]
fn training_sets_satisfy_census_for_every_seed() {
    let config = ExperimentConfig::toy(Method::Rcsv);
    for seed in 0..20 {
        let (train, tests) = build_datasets(&config, seed).unwrap();
        assert!(build_group_index(&train).census_complete());
        assert_eq!(train.len(), 1000);
        assert!(tests.iter().all(|(_, _, t)| t.len() == 200));
    }
}
