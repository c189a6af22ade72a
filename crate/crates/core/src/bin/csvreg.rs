use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use csvreg::datasets::write_dataset;
use csvreg::harness::{
    build_datasets, checkpoint_path, evaluate, mnist_files_present, parse_config, read_report, reproduce_toy_table,
    run_experiment, run_oracle_suite, seed_train_config, ExperimentConfig, RunReport,
};
use csvreg::oracles::write_reports;
use csvreg::trainer::{load_checkpoint, Method};
use csvreg::{Error, Result};

#[derive(Parser)]
#[command(name = "csvreg", version, about = "CSV-regularized training, oracles and toy reproductions")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone, Default)]
struct Common {
    /// Experiment file (`[section]` headers, `key = value` lines).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Run a single seed instead of the configured list.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Method override; unset keys take that method's defaults.
    #[arg(long)]
    method: Option<String>,
    /// Comma-separated test correlations, e.g. `0,-0.5,-0.99`.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    sigma_test: Option<Vec<f64>>,
}

#[derive(Subcommand)]
enum Command {
    /// Write the training and test sets of each seed as dataset containers.
    Generate(Common),
    /// Train every seed, evaluate, write reports and checkpoints.
    Train(Common),
    /// Re-evaluate checkpoints saved by `train` in `--out`.
    Evaluate(Common),
    /// Run every method on the toy task and print the accuracy table.
    ReproduceToy(Common),
    /// Compare rcsv and erm on colored digits (needs the MNIST IDX files).
    ReproduceCmnist {
        #[command(flatten)]
        common: Common,
        /// Directory holding the four MNIST IDX files.
        #[arg(long)]
        mnist: PathBuf,
    },
    /// Run the oracle suite and write JSON-lines reports.
    Verify {
        #[command(flatten)]
        common: Common,
        /// Smaller horizons and fewer trials.
        #[arg(long)]
        quick: bool,
    },
    /// Print the summary of a report directory written by `train`.
    Report(Common),
}

fn load_config(common: &Common) -> Result<ExperimentConfig> {
    let mut config = match &common.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| Error::Io {
                path: path.clone(),
                source: e,
            })?;
            match &common.method {
                Some(m) => {
                    Method::parse(m)?;
                    let mut table: toml::Table = text
                        .parse()
                        .map_err(|e: toml::de::Error| Error::Validation(format!("{}: {e}", path.display())))?;
                    let train = table
                        .entry("train")
                        .or_insert_with(|| toml::Value::Table(toml::Table::new()));
                    if let toml::Value::Table(t) = train {
                        t.insert("method".into(), toml::Value::String(m.clone()));
                    }
                    parse_config(&table.to_string())?
                }
                None => parse_config(&text)?,
            }
        }
        None => ExperimentConfig::toy(Method::parse(common.method.as_deref().unwrap_or("rcsv"))?),
    };
    if let Some(seed) = common.seed {
        config.run.seeds = vec![seed];
    }
    if let Some(out) = &common.out {
        config.run.out = out.display().to_string();
    }
    if let Some(sigmas) = &common.sigma_test {
        config.eval.sigma_test = sigmas.clone();
    }
    config.validate()?;
    Ok(config)
}

fn print_summary(report: &RunReport) {
    println!("method {}  seeds {:?}", report.method.name(), report.config.run.seeds);
    println!("{:<10}{:>16}{:>16}{:>16}", "test", "avg", "total", "worst");
    for e in &report.summary {
        let cell = |(m, s): (f64, f64)| format!("{m:.1} ± {s:.1}");
        println!("{:<10}{:>16}{:>16}{:>16}", e.label, cell(e.average), cell(e.total), cell(e.worst));
    }
    if let Some((m, s)) = report.cosine {
        println!("|cos(theta2, mu2)| {m:.3} ± {s:.3}");
    }
    if let Some(csv) = report.csv {
        println!("train csv {csv:.4}");
    }
    println!("train csv_u {:.4}", report.csv_u);
    if !report.note.is_empty() {
        println!("note: {}", report.note);
    }
}

fn generate(common: &Common) -> Result<()> {
    let config = load_config(common)?;
    let out = PathBuf::from(&config.run.out);
    for &seed in &config.run.seeds {
        let dir = out.join(format!("seed{seed}"));
        std::fs::create_dir_all(&dir).map_err(|e| Error::Io {
            path: dir.clone(),
            source: e,
        })?;
        let (train, tests) = build_datasets(&config, seed)?;
        write_dataset(&dir.join("train.grpd"), &train)?;
        for (label, _, data) in &tests {
            write_dataset(&dir.join(format!("test_{label}.grpd")), data)?;
        }
        println!("{}: train {} samples, {} test sets", dir.display(), train.len(), tests.len());
    }
    Ok(())
}

fn evaluate_checkpoints(common: &Common) -> Result<()> {
    let config = load_config(common)?;
    let dir = PathBuf::from(&config.run.out);
    for &seed in &config.run.seeds {
        let tc = seed_train_config(&config, seed);
        let state = load_checkpoint(&checkpoint_path(&dir, seed), &tc)?;
        let (_, tests) = build_datasets(&config, seed)?;
        for (label, sigma, data) in &tests {
            let e = evaluate(&state.params, data, label, *sigma)?;
            println!(
                "seed {seed} test {label}: avg {:.1} total {:.1} worst {:.1}",
                e.average, e.total, e.worst
            );
        }
    }
    Ok(())
}

fn reproduce_cmnist(common: &Common, mnist: &Path) -> Result<()> {
    if !mnist_files_present(mnist) {
        return Err(Error::Validation(format!("MNIST IDX files not found in {}", mnist.display())));
    }
    for method in [Method::Erm, Method::Rcsv] {
        let mut c = common.clone();
        c.method = Some(method.name().into());
        let mut config = load_config(&c)?;
        if common.config.is_none() {
            let text = format!(
                "[dataset]\nkind = \"colored_digits\"\nmnist_dir = {:?}\nn_train = 10000\n[train]\nmethod = {:?}\n[eval]\nn_test = 2000\n",
                mnist.display().to_string(),
                method.name()
            );
            let run = config.run.clone();
            config = parse_config(&text)?;
            config.run = run;
        }
        config.dataset.mnist_dir = Some(mnist.display().to_string());
        let out = PathBuf::from(&config.run.out).join(method.name());
        print_summary(&run_experiment(&config, Some(&out))?);
    }
    Ok(())
}

fn run(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::Generate(c) => generate(&c)?,
        Command::Train(c) => {
            let config = load_config(&c)?;
            let out = PathBuf::from(&config.run.out);
            let report = run_experiment(&config, Some(&out))?;
            print_summary(&report);
            println!("wrote {}", out.display());
        }
        Command::Evaluate(c) => evaluate_checkpoints(&c)?,
        Command::ReproduceToy(c) => {
            let start = c.seed.unwrap_or(0);
            let seeds: Vec<u64> = (start..start + 5).collect();
            let out = c.out.clone().unwrap_or_else(|| PathBuf::from("runs/toy"));
            let table = reproduce_toy_table(&seeds, Some(&out))?;
            print!("{}", table.render());
            println!("{:.1}s, written to {}", table.wall_clock_secs, out.display());
        }
        Command::ReproduceCmnist { common, mnist } => reproduce_cmnist(&common, &mnist)?,
        Command::Verify { common, quick } => {
            let reports = run_oracle_suite(common.seed.unwrap_or(0), quick)?;
            for r in &reports {
                println!("{}", r.to_json_line()?);
            }
            if let Some(out) = &common.out {
                std::fs::create_dir_all(out).map_err(|e| Error::Io {
                    path: out.clone(),
                    source: e,
                })?;
                write_reports(&out.join("oracles.jsonl"), &reports)?;
            }
            return Ok(reports.iter().all(|r| r.passed));
        }
        Command::Report(c) => {
            let dir = c.out.clone().unwrap_or_else(|| PathBuf::from("runs"));
            print_summary(&read_report(&dir)?);
        }
    }
    Ok(true)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
