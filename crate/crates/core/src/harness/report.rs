use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::harness::{run_experiment, ExperimentConfig, RunReport};
use crate::trainer::Method;

/// Row order of the toy accuracy table.
pub const TABLE_METHODS: [Method; 7] = [
    Method::Erm,
    Method::ErmrsY,
    Method::ErmrsYz,
    Method::GroupDro,
    Method::Correlation,
    Method::Rcsv,
    Method::RcsvU,
];

const CSV_HEADER: &str = "method,seed,sigma_test_or_group,metric,value\n";

fn write_file(path: &Path, contents: &str) -> Result<()> {
    std::fs::write(path, contents).map_err(|e| Error::io(path, e))
}

/// RFC-4180 rows `method,seed,sigma_test_or_group,metric,value`; accuracies in percent.
pub fn results_csv(report: &RunReport) -> String {
    let mut out = String::from(CSV_HEADER);
    let m = report.method.name();
    let mut row = |seed: &str, key: &str, metric: &str, value: f64| {
        let _ = writeln!(out, "{m},{seed},{key},{metric},{value}");
    };
    for s in &report.seeds {
        let seed = s.seed.to_string();
        for e in &s.evaluations {
            row(&seed, &e.label, "avg_acc", e.average);
            row(&seed, &e.label, "total_acc", e.total);
            row(&seed, &e.label, "worst_acc", e.worst);
            for g in &e.groups {
                let key = match g.z {
                    Some(z) => format!("{}:y{}z{}", e.label, g.y, z),
                    None => format!("{}:y{}", e.label, g.y),
                };
                row(&seed, &key, "group_acc", g.accuracy);
            }
        }
        if let Some(csv) = s.csv {
            row(&seed, "train", "csv", csv);
        }
        row(&seed, "train", "csv_u", s.csv_u);
        if let Some(c) = s.cosine {
            row(&seed, "train", "cosine", c);
        }
    }
    for e in &report.summary {
        for (metric, (mean, std)) in [("avg_acc", e.average), ("total_acc", e.total), ("worst_acc", e.worst)] {
            row("mean", &e.label, metric, mean);
            row("std", &e.label, metric, std);
        }
    }
    if let Some((mean, std)) = report.cosine {
        row("mean", "train", "cosine", mean);
        row("std", "train", "cosine", std);
    }
    out
}

/// Writes `results.csv`, `metrics.json` and `config.echo` into `dir`.
pub fn emit_report(report: &RunReport, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write_file(&dir.join("results.csv"), &results_csv(report))?;
    write_file(&dir.join("metrics.json"), &(serde_json::to_string_pretty(report)? + "\n"))?;
    write_file(&dir.join("config.echo"), &report.config.to_toml_string()?)
}

pub fn read_report(dir: &Path) -> Result<RunReport> {
    let path = dir.join("metrics.json");
    let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    Ok(serde_json::from_str(&text)?)
}

/// Seed-averaged accuracy grid over methods and test correlations plus the
/// cosine diagnostic per method.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToyTable {
    pub methods: Vec<Method>,
    pub sigma_test: Vec<f64>,
    /// `accuracy[method][sigma]` = (mean, std) of total accuracy in percent.
    pub accuracy: Vec<Vec<(f64, f64)>>,
    pub cosine: Vec<Option<(f64, f64)>>,
    pub seeds: Vec<u64>,
    pub wall_clock_secs: f64,
}

impl ToyTable {
    pub fn accuracy_of(&self, method: Method, sigma: f64) -> Option<f64> {
        let m = self.methods.iter().position(|&x| x == method)?;
        let s = self.sigma_test.iter().position(|&x| (x - sigma).abs() < 1e-12)?;
        Some(self.accuracy[m][s].0)
    }

    pub fn cosine_of(&self, method: Method) -> Option<f64> {
        let m = self.methods.iter().position(|&x| x == method)?;
        self.cosine[m].map(|c| c.0)
    }

    /// Plain-text rendering: accuracy grid, then the cosine row.
    pub fn render(&self) -> String {
        let mut out = String::new();
        let _ = write!(out, "{:<14}", "method/sigma");
        for s in &self.sigma_test {
            let _ = write!(out, "{s:>14.2}");
        }
        out.push('\n');
        for (m, row) in self.methods.iter().zip(&self.accuracy) {
            let _ = write!(out, "{:<14}", m.name());
            for (mean, std) in row {
                let _ = write!(out, "{:>14}", format!("{mean:.1} ± {std:.1}"));
            }
            out.push('\n');
        }
        out.push('\n');
        let _ = write!(out, "{:<14}", "methods");
        for m in &self.methods {
            let _ = write!(out, "{:>14}", m.name());
        }
        out.push('\n');
        let _ = write!(out, "{:<14}", "|cos(t2,mu2)|");
        for c in &self.cosine {
            let cell = c.map_or("null".to_string(), |(mean, _)| format!("{mean:.3}"));
            let _ = write!(out, "{cell:>14}");
        }
        out.push('\n');
        let _ = writeln!(
            out,
            "\nmean of {} seeds, total test accuracy (%). group_dro weights the four (y, z) groups.",
            self.seeds.len()
        );
        out
    }

    /// Machine-readable grid: `method,sigma_test,mean,std`, then `method,cosine,mean,std`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("method,column,mean,std\n");
        for (m, row) in self.methods.iter().zip(&self.accuracy) {
            for (s, (mean, std)) in self.sigma_test.iter().zip(row) {
                let _ = writeln!(out, "{},{s},{mean},{std}", m.name());
            }
        }
        for (m, c) in self.methods.iter().zip(&self.cosine) {
            match c {
                Some((mean, std)) => {
                    let _ = writeln!(out, "{},cosine,{mean},{std}", m.name());
                }
                None => {
                    let _ = writeln!(out, "{},cosine,,", m.name());
                }
            }
        }
        out
    }
}

/// Runs every table method on the toy task with its defaults over
/// `seeds`. With `out`, each method's report goes to `out/<method>/` and
/// the table to `out/table.txt` and `out/table.csv`.
pub fn reproduce_toy_table(seeds: &[u64], out: Option<&Path>) -> Result<ToyTable> {
    let start = std::time::Instant::now();
    let mut reports: Vec<RunReport> = Vec::new();
    for method in TABLE_METHODS {
        let mut config = ExperimentConfig::toy(method);
        config.run.seeds = seeds.to_vec();
        if let Some(dir) = out {
            config.run.out = dir.join(method.name()).display().to_string();
        }
        let dir = out.map(|d| d.join(method.name()));
        reports.push(run_experiment(&config, dir.as_deref())?);
    }
    let sigma_test = reports[0].summary.iter().filter_map(|e| e.sigma_test).collect();
    let table = ToyTable {
        methods: TABLE_METHODS.to_vec(),
        sigma_test,
        accuracy: reports.iter().map(|r| r.summary.iter().map(|e| e.total).collect()).collect(),
        cosine: reports.iter().map(|r| r.cosine).collect(),
        seeds: seeds.to_vec(),
        wall_clock_secs: start.elapsed().as_secs_f64(),
    };
    if let Some(dir) = out {
        write_file(&dir.join("table.txt"), &table.render())?;
        write_file(&dir.join("table.csv"), &table.to_csv())?;
    }
    Ok(table)
}
