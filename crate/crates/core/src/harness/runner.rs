use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::datasets::{
    build_group_index, colorize, colorize_mixture, gen_toy, read_dataset, read_idx_file, ColorAssignment, ColorScheme,
    GroupedDataset, IdxData, ToySpec,
};
use crate::error::{Error, Result};
use crate::grad::{softmax_cross_entropy, Architecture, ModelParams, Tensor};
use crate::harness::{emit_report, DatasetKind, ExperimentConfig};
use crate::metrics::{csv_unobserved, empirical_csv, group_mean_losses};
use crate::rng::{derive_seed, STREAM_TEST_DATA, STREAM_TRAIN_DATA};
use crate::trainer::{save_checkpoint, train, Method, StepRecord, TrainConfig};

/// Attempts at drawing a toy training set that fills every group.
const CENSUS_ATTEMPTS: u64 = 100;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupAccuracy {
    pub y: usize,
    pub z: Option<usize>,
    pub count: usize,
    /// Percent.
    pub accuracy: f64,
}

/// Accuracy of one model on one test set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub label: String,
    pub sigma_test: Option<f64>,
    pub groups: Vec<GroupAccuracy>,
    /// Unweighted mean over nonempty groups (percent).
    pub average: f64,
    /// Fraction of correct predictions over the whole set (percent).
    pub total: f64,
    /// Minimum over nonempty groups (percent).
    pub worst: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedReport {
    pub seed: u64,
    pub train_provenance: String,
    pub evaluations: Vec<Evaluation>,
    /// Empirical CSV of the final model on the training set (needs a full census).
    pub csv: Option<f64>,
    pub csv_u: f64,
    pub cosine: Option<f64>,
    pub trace: Vec<StepRecord>,
}

/// Mean and sample standard deviation over seeds for one test set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalSummary {
    pub label: String,
    pub sigma_test: Option<f64>,
    pub average: (f64, f64),
    pub total: (f64, f64),
    pub worst: (f64, f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub method: Method,
    pub config: ExperimentConfig,
    pub seeds: Vec<SeedReport>,
    pub summary: Vec<EvalSummary>,
    pub cosine: Option<(f64, f64)>,
    pub csv: Option<f64>,
    pub csv_u: f64,
    pub wall_clock_secs: f64,
    pub note: String,
}

pub(crate) fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n;
    let var = if values.len() > 1 {
        values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    (mean, var.sqrt())
}

fn argmax(row: &[f64]) -> usize {
    row.iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |best, (i, &v)| if v > best.1 { (i, v) } else { best })
        .0
}

/// Per-group, average-over-groups, total and worst-group accuracy in percent.
/// Groups are `(y, z)` when attributes are observed and classes otherwise.
pub fn evaluate(params: &ModelParams, dataset: &GroupedDataset, label: &str, sigma_test: Option<f64>) -> Result<Evaluation> {
    let logits = params.predict(&dataset.all_features())?;
    let k_z = if dataset.attributes_observed() { dataset.k_z() } else { 1 };
    let mut correct = vec![0usize; dataset.k_y() * k_z];
    let mut count = vec![0usize; dataset.k_y() * k_z];
    for (i, s) in dataset.iter().enumerate() {
        let g = s.y * k_z + s.z.unwrap_or(0);
        count[g] += 1;
        correct[g] += usize::from(argmax(logits.row(i)) == s.y);
    }
    let groups: Vec<GroupAccuracy> = (0..correct.len())
        .filter(|&g| count[g] > 0)
        .map(|g| GroupAccuracy {
            y: g / k_z,
            z: dataset.attributes_observed().then_some(g % k_z),
            count: count[g],
            accuracy: 100.0 * correct[g] as f64 / count[g] as f64,
        })
        .collect();
    if groups.is_empty() {
        return Err(Error::Validation(format!("test set `{label}` is empty")));
    }
    let average = groups.iter().map(|g| g.accuracy).sum::<f64>() / groups.len() as f64;
    let worst = groups.iter().map(|g| g.accuracy).fold(f64::INFINITY, f64::min);
    let total = 100.0 * correct.iter().sum::<usize>() as f64 / dataset.len() as f64;
    Ok(Evaluation {
        label: label.to_string(),
        sigma_test,
        groups,
        average,
        total,
        worst,
    })
}

/// `|cos(θ₂, μ₂)|` where `θ₂` is the trailing `dim(μ₂)` block of the
/// class-1-minus-class-0 weight direction of a binary linear model.
/// `None` when either vector is zero.
pub fn cosine_similarity_diag(params: &ModelParams, mu2: &[f64]) -> Result<Option<f64>> {
    if params.architecture != Architecture::Linear || params.layers.len() != 1 {
        return Err(Error::Contract("cosine diagnostic needs a linear model".into()));
    }
    let w = &params.layers[0].weight;
    let (rows, cols) = (w.rows(), w.cols());
    if rows < mu2.len() {
        return Err(Error::Dimension {
            context: "cosine diagnostic",
            left: vec![rows],
            right: vec![mu2.len()],
        });
    }
    let theta2: Vec<f64> = (rows - mu2.len()..rows)
        .map(|r| match cols {
            1 => w.row(r)[0],
            _ => w.row(r)[1] - w.row(r)[0],
        })
        .collect();
    let dot: f64 = theta2.iter().zip(mu2).map(|(a, b)| a * b).sum();
    let na = theta2.iter().map(|v| v * v).sum::<f64>().sqrt();
    let nb = mu2.iter().map(|v| v * v).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        return Ok(None);
    }
    Ok(Some((dot / (na * nb)).abs().min(1.0)))
}

fn toy_spec(config: &ExperimentConfig, sigma: f64) -> ToySpec {
    let d = &config.dataset;
    ToySpec::with_norms(d.block_dim, d.mu1_norm, d.mu2_norm, sigma)
}

/// Toy training set for `seed`, redrawn on the next sub-seed until every
/// `(y, z)` group is nonempty.
pub fn toy_training_set(config: &ExperimentConfig, seed: u64) -> Result<GroupedDataset> {
    let spec = toy_spec(config, config.dataset.sigma_train);
    let base = derive_seed(seed, STREAM_TRAIN_DATA);
    for attempt in 0..CENSUS_ATTEMPTS {
        let data = gen_toy(&spec, config.dataset.n_train, derive_seed(base, attempt))?;
        if build_group_index(&data).census_complete() {
            return Ok(data);
        }
    }
    let data = gen_toy(&spec, config.dataset.n_train, base)?;
    let (class, attr) = build_group_index(&data).first_empty_group().unwrap_or((0, 0));
    Err(Error::EmptyGroup { class, attr })
}

fn load_mnist(dir: &Path, prefix: &str) -> Result<(Tensor, Vec<usize>)> {
    let images = read_idx_file(&dir.join(format!("{prefix}-images-idx3-ubyte")))?;
    let labels = read_idx_file(&dir.join(format!("{prefix}-labels-idx1-ubyte")))?;
    match (images, labels) {
        (IdxData::Images(t), IdxData::Labels(l)) => Ok((t, l)),
        _ => Err(Error::Validation(format!("{prefix} IDX files have the wrong kinds"))),
    }
}

fn truncate(images: Tensor, labels: Vec<usize>, n: usize) -> Result<(Tensor, Vec<usize>)> {
    let n = n.min(labels.len());
    let per = images.shape()[1] * images.shape()[2];
    let shape = vec![n, images.shape()[1], images.shape()[2]];
    Ok((Tensor::new(shape, images.into_data()[..n * per].to_vec())?, labels[..n].to_vec()))
}

/// The four MNIST files the colored-digit path needs.
pub fn mnist_files_present(dir: &Path) -> bool {
    ["train-images-idx3-ubyte", "train-labels-idx1-ubyte", "t10k-images-idx3-ubyte", "t10k-labels-idx1-ubyte"]
        .iter()
        .all(|f| dir.join(f).is_file())
}

/// Training set and labelled test sets for one seed.
pub fn build_datasets(config: &ExperimentConfig, seed: u64) -> Result<(GroupedDataset, Vec<(String, Option<f64>, GroupedDataset)>)> {
    let d = &config.dataset;
    match d.kind {
        DatasetKind::Toy => {
            let train_set = toy_training_set(config, seed)?;
            let test_base = derive_seed(seed, STREAM_TEST_DATA);
            let tests = config
                .eval
                .sigma_test
                .iter()
                .enumerate()
                .map(|(i, &s)| {
                    let data = gen_toy(&toy_spec(config, s), config.eval.n_test, derive_seed(test_base, i as u64))?;
                    Ok((format!("{s:.2}"), Some(s), data))
                })
                .collect::<Result<_>>()?;
            Ok((train_set, tests))
        }
        DatasetKind::ColoredDigits => {
            let dir = PathBuf::from(d.mnist_dir.as_deref().unwrap_or_default());
            let (img, lab) = load_mnist(&dir, "train")?;
            let (img, lab) = truncate(img, lab, d.n_train)?;
            let mut scheme = ColorScheme::new(ColorAssignment::Fixed1);
            scheme.alpha = d.alpha;
            let train_set = colorize_mixture(&img, &lab, &scheme, derive_seed(seed, STREAM_TRAIN_DATA))?;
            let (timg, tlab) = load_mnist(&dir, "t10k")?;
            let (timg, tlab) = truncate(timg, tlab, config.eval.n_test.max(1))?;
            let test_seed = derive_seed(seed, STREAM_TEST_DATA);
            let random = colorize(&timg, &tlab, &ColorScheme::new(ColorAssignment::Random), test_seed)?;
            let fixed2 = colorize(&timg, &tlab, &ColorScheme::new(ColorAssignment::Fixed2), test_seed)?;
            Ok((train_set, vec![("random".into(), None, random), ("fixed_2".into(), None, fixed2)]))
        }
        DatasetKind::FromFile => {
            let train_set = read_dataset(Path::new(d.path.as_deref().unwrap_or_default()))?;
            let test = read_dataset(Path::new(d.test_path.as_deref().unwrap_or_default()))?;
            Ok((train_set, vec![("file".into(), None, test)]))
        }
    }
}

/// Per-sample cross-entropy of `params` on every training sample.
pub fn per_sample_losses(params: &ModelParams, dataset: &GroupedDataset) -> Result<Vec<f64>> {
    softmax_cross_entropy(&params.predict(&dataset.all_features())?, dataset.labels())
}

/// Final empirical CSV (if every group is present) and CSV_U on the training set.
pub fn training_csv(params: &ModelParams, dataset: &GroupedDataset) -> Result<(Option<f64>, f64)> {
    let losses = per_sample_losses(params, dataset)?;
    let index = build_group_index(dataset);
    let csv = if index.census_complete() {
        Some(empirical_csv(&group_mean_losses(&losses, &index)?)?)
    } else {
        None
    };
    let per_class: Vec<Vec<f64>> = (0..index.k_y())
        .map(|k| index.class(k).iter().map(|&i| losses[i]).collect())
        .collect();
    let csv_u = csv_unobserved(&per_class, &index.p_hat())?;
    Ok((csv, csv_u))
}

/// Training configuration actually used for `seed`.
pub fn seed_train_config(config: &ExperimentConfig, seed: u64) -> TrainConfig {
    TrainConfig {
        seed,
        ..config.train.clone()
    }
}

pub fn checkpoint_path(dir: &Path, seed: u64) -> PathBuf {
    dir.join(format!("checkpoint_seed{seed}.ckpt"))
}

/// Trains and evaluates one seed, saving the final state under
/// `checkpoint_dir` when given.
pub fn run_seed(config: &ExperimentConfig, seed: u64, checkpoint_dir: Option<&Path>) -> Result<SeedReport> {
    let (train_set, tests) = build_datasets(config, seed)?;
    let tc = seed_train_config(config, seed);
    let state = train(&tc, &train_set)?;
    if let Some(dir) = checkpoint_dir {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        save_checkpoint(&checkpoint_path(dir, seed), &state, &tc)?;
    }
    let evaluations = tests
        .iter()
        .map(|(label, sigma, data)| evaluate(&state.params, data, label, *sigma))
        .collect::<Result<_>>()?;
    let (csv, csv_u) = training_csv(&state.params, &train_set)?;
    let cosine = match (config.dataset.kind, state.params.architecture) {
        (DatasetKind::Toy, Architecture::Linear) => cosine_similarity_diag(&state.params, &toy_spec(config, 0.0).mu2)?,
        _ => None,
    };
    Ok(SeedReport {
        seed,
        train_provenance: train_set.provenance().to_string(),
        evaluations,
        csv,
        csv_u,
        cosine,
        trace: state.trace,
    })
}

fn summarize(seeds: &[SeedReport]) -> Vec<EvalSummary> {
    let first = &seeds[0].evaluations;
    first
        .iter()
        .enumerate()
        .map(|(i, e)| {
            let pick = |f: fn(&Evaluation) -> f64| mean_std(&seeds.iter().map(|s| f(&s.evaluations[i])).collect::<Vec<_>>());
            EvalSummary {
                label: e.label.clone(),
                sigma_test: e.sigma_test,
                average: pick(|e| e.average),
                total: pick(|e| e.total),
                worst: pick(|e| e.worst),
            }
        })
        .collect()
}

/// Trains one model per configured seed, evaluates every test set and
/// aggregates over seeds. Writes the report files to `out` when given.
pub fn run_experiment(config: &ExperimentConfig, out: Option<&Path>) -> Result<RunReport> {
    config.validate()?;
    let start = Instant::now();
    let seeds: Vec<SeedReport> = config.run.seeds.iter().map(|&s| run_seed(config, s, out)).collect::<Result<_>>()?;
    let cosines: Vec<f64> = seeds.iter().filter_map(|s| s.cosine).collect();
    let csvs: Vec<f64> = seeds.iter().filter_map(|s| s.csv).collect();
    let note = if config.train.method == Method::GroupDro {
        "group_dro weights the four (y, z) groups; the two-domain reading (y = z vs y != z) is not used".into()
    } else {
        String::new()
    };
    let report = RunReport {
        method: config.train.method,
        config: config.clone(),
        summary: summarize(&seeds),
        cosine: (cosines.len() == seeds.len()).then(|| mean_std(&cosines)),
        csv: (csvs.len() == seeds.len()).then(|| mean_std(&csvs).0),
        csv_u: mean_std(&seeds.iter().map(|s| s.csv_u).collect::<Vec<_>>()).0,
        seeds,
        wall_clock_secs: start.elapsed().as_secs_f64(),
        note,
    };
    if let Some(dir) = out {
        emit_report(&report, dir)?;
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grad::Layer;

    fn linear(weight: Vec<f64>, rows: usize) -> ModelParams {
        ModelParams::from_layers(
            Architecture::Linear,
            vec![Layer {
                weight: Tensor::matrix(rows, 2, weight).unwrap(),
                bias: Tensor::vector(vec![0.0, 0.0]),
            }],
        )
        .unwrap()
    }

    #[test]
    fn cosine_of_aligned_and_orthogonal_blocks() {
        // rows: two class-block coordinates, then two spurious coordinates
        let p = linear(vec![0.0, 1.0, 0.0, 1.0, 0.0, 1.0, 0.0, 1.0], 4);
        assert!((cosine_similarity_diag(&p, &[1.0, 1.0]).unwrap().unwrap() - 1.0).abs() < 1e-12);
        let q = linear(vec![0.0, 1.0, 0.0, 1.0, 0.0, 1.0, 0.0, -1.0], 4);
        assert!(cosine_similarity_diag(&q, &[1.0, 1.0]).unwrap().unwrap().abs() < 1e-12);
        let z = linear(vec![0.0; 8], 4);
        assert_eq!(cosine_similarity_diag(&z, &[1.0, 1.0]).unwrap(), None);
        assert!(cosine_similarity_diag(&z, &[1.0; 5]).is_err());
    }

    #[test]
    fn evaluation_consistency() {
        let spec = ToySpec::default_with_sigma(0.0);
        let data = gen_toy(&spec, 300, 2).unwrap();
        let p = linear(vec![0.0, 1.0, 0.0, 1.0, 0.0, 1.0, 0.0, 1.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0], 10);
        let e = evaluate(&p, &data, "x", Some(0.0)).unwrap();
        assert!(e.worst <= e.average && e.average <= 100.0);
        let weighted: f64 = e.groups.iter().map(|g| g.accuracy * g.count as f64).sum::<f64>() / data.len() as f64;
        assert!((weighted - e.total).abs() < 1e-9);
        assert_eq!(e.groups.len(), 4);
    }

    #[test]
    fn untrained_model_is_near_chance() {
        let mut c = ExperimentConfig::toy(Method::Erm);
        c.train.steps = 0;
        c.train.init_scale = 0.0;
        c.run.seeds = vec![0, 1, 2];
        c.eval.sigma_test = vec![0.0];
        let r = run_experiment(&c, None).unwrap();
        // zero weights predict class 0 everywhere
        assert!((r.summary[0].total.0 - 50.0).abs() < 8.0, "{:?}", r.summary);
    }

    #[test]
    fn census_regenerates_small_sets() {
        let mut c = ExperimentConfig::toy(Method::Rcsv);
        c.dataset.n_train = 300;
        let d = toy_training_set(&c, 4).unwrap();
        assert!(build_group_index(&d).census_complete());
    }

    #[test]
    fn mean_std_values() {
        assert_eq!(mean_std(&[2.0]), (2.0, 0.0));
        let (m, s) = mean_std(&[1.0, 3.0]);
        assert_eq!(m, 2.0);
        assert!((s - 2f64.sqrt()).abs() < 1e-12);
    }
}
