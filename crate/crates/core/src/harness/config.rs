use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::datasets::{DEFAULT_BLOCK_DIM, DEFAULT_MU1_NORM, DEFAULT_MU2_NORM};
use crate::error::{Error, Result};
use crate::trainer::{Method, TrainConfig};

pub const TOY_SIGMA_TEST: [f64; 6] = [0.0, -0.2, -0.4, -0.6, -0.8, -0.99];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DatasetKind {
    Toy,
    ColoredDigits,
    FromFile,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetConfig {
    pub kind: DatasetKind,
    pub n_train: usize,
    pub sigma_train: f64,
    pub mu1_norm: f64,
    pub mu2_norm: f64,
    pub block_dim: usize,
    /// Fraction of fixed-colour samples in the colored-digit training mixture.
    pub alpha: f64,
    /// Directory holding the four MNIST IDX files.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mnist_dir: Option<String>,
    /// Training container for `from_file`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path: Option<String>,
    /// Test container for `from_file`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub test_path: Option<String>,
}

impl DatasetConfig {
    pub fn toy() -> Self {
        Self {
            kind: DatasetKind::Toy,
            n_train: 1000,
            sigma_train: 0.99,
            mu1_norm: DEFAULT_MU1_NORM,
            mu2_norm: DEFAULT_MU2_NORM,
            block_dim: DEFAULT_BLOCK_DIM,
            alpha: 0.99,
            mnist_dir: None,
            path: None,
            test_path: None,
        }
    }

    fn defaults_for(kind: DatasetKind) -> Self {
        match kind {
            DatasetKind::ColoredDigits => Self {
                kind,
                n_train: 60_000,
                ..Self::toy()
            },
            _ => Self { kind, ..Self::toy() },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalConfig {
    /// Test correlations for synthetic data; ignored for file and digit datasets.
    pub sigma_test: Vec<f64>,
    pub n_test: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            sigma_test: TOY_SIGMA_TEST.to_vec(),
            n_test: 200,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub seeds: Vec<u64>,
    pub out: String,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seeds: (0..5).collect(),
            out: "runs".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub dataset: DatasetConfig,
    pub train: TrainConfig,
    pub eval: EvalConfig,
    pub run: RunConfig,
}

impl ExperimentConfig {
    /// Toy task with the method's defaults.
    pub fn toy(method: Method) -> Self {
        Self {
            dataset: DatasetConfig::toy(),
            train: TrainConfig::toy_defaults(method),
            eval: EvalConfig::default(),
            run: RunConfig::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.train.validate()?;
        if self.run.seeds.is_empty() {
            return Err(Error::Validation("run.seeds needs at least one seed".into()));
        }
        let d = &self.dataset;
        if !(-1.0..=1.0).contains(&d.sigma_train) {
            return Err(Error::Validation(format!("sigma_train must lie in [-1, 1], got {}", d.sigma_train)));
        }
        if let Some(s) = self.eval.sigma_test.iter().find(|s| !(-1.0..=1.0).contains(*s)) {
            return Err(Error::Validation(format!("sigma_test values must lie in [-1, 1], got {s}")));
        }
        if d.n_train == 0 || self.eval.n_test == 0 {
            return Err(Error::Validation("n_train and n_test must be positive".into()));
        }
        if !(0.0..=1.0).contains(&d.alpha) {
            return Err(Error::Validation(format!("alpha must lie in [0, 1], got {}", d.alpha)));
        }
        match d.kind {
            DatasetKind::Toy if self.eval.sigma_test.is_empty() => {
                Err(Error::Validation("toy runs need at least one sigma_test".into()))
            }
            DatasetKind::ColoredDigits if d.mnist_dir.is_none() => {
                Err(Error::Validation("colored_digits needs dataset.mnist_dir".into()))
            }
            DatasetKind::FromFile if d.path.is_none() || d.test_path.is_none() => {
                Err(Error::Validation("from_file needs dataset.path and dataset.test_path".into()))
            }
            _ => Ok(()),
        }
    }

    /// Canonical TOML form; parses back to an equal config.
    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Validation(format!("serialize config: {e}")))
    }
}

/// 1-based line on which `key` is assigned inside `[section]`, 0 if absent.
fn key_line(text: &str, section: &str, key: &str) -> usize {
    let mut current = String::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
            current = name.trim().to_string();
            continue;
        }
        if let Some((lhs, _)) = line.split_once('=') {
            if current == section && lhs.trim().trim_matches('"') == key {
                return i + 1;
            }
        }
    }
    0
}

fn section_line(text: &str, section: &str) -> usize {
    text.lines()
        .position(|l| l.trim() == format!("[{section}]"))
        .map_or(0, |i| i + 1)
}

fn config_error(key: impl Into<String>, line: usize, message: impl Into<String>) -> Error {
    Error::Config {
        key: key.into(),
        line,
        message: message.into(),
    }
}

/// Overlays the user's keys for one section onto `defaults`, checking
/// every key individually so the error can name it.
fn merge_section<T: Serialize + DeserializeOwned>(
    text: &str,
    section: &str,
    defaults: &T,
    optional: &[&str],
    user: Option<&toml::Value>,
) -> Result<T> {
    let mut merged = toml::Table::try_from(defaults)
        .map_err(|e| config_error(section, 0, format!("default table: {e}")))?;
    let Some(user) = user else {
        return Ok(toml::Value::Table(merged)
            .try_into()
            .map_err(|e| config_error(section, 0, e.to_string()))?);
    };
    let toml::Value::Table(user) = user else {
        return Err(config_error(section, section_line(text, section), "expected a [section] table"));
    };
    for (key, value) in user {
        let line = key_line(text, section, key);
        let qualified = format!("{section}.{key}");
        if !merged.contains_key(key) && !optional.contains(&key.as_str()) {
            return Err(config_error(qualified, line, "unknown key"));
        }
        let mut trial = merged.clone();
        trial.insert(key.clone(), value.clone());
        if let Err(e) = toml::Value::Table(trial.clone()).try_into::<T>() {
            return Err(config_error(qualified, line, e.to_string().trim().to_string()));
        }
        merged = trial;
    }
    toml::Value::Table(merged)
        .try_into()
        .map_err(|e| config_error(section, section_line(text, section), e.to_string()))
}

fn lookup_str<'a>(table: &'a toml::Table, section: &str, key: &str) -> Option<&'a toml::Value> {
    table.get(section)?.as_table()?.get(key)
}

/// Parses an experiment document (`[section]` headers, `key = value`
/// lines, `#` comments). Missing keys take the defaults for the chosen
/// method and dataset kind; unknown keys and type mismatches are rejected
/// with the offending key and line.
pub fn parse_config(text: &str) -> Result<ExperimentConfig> {
    let table: toml::Table = text.parse().map_err(|e: toml::de::Error| {
        let line = e.span().map_or(0, |s| text[..s.start.min(text.len())].lines().count().max(1));
        config_error("", line, e.message().to_string())
    })?;
    for key in table.keys() {
        if !["dataset", "train", "eval", "run"].contains(&key.as_str()) {
            let line = section_line(text, key).max(key_line(text, "", key));
            return Err(config_error(key.clone(), line, "unknown section"));
        }
    }
    let method = match lookup_str(&table, "train", "method") {
        None => return Err(config_error("train.method", section_line(text, "train"), "missing required key")),
        Some(toml::Value::String(s)) => {
            Method::parse(s).map_err(|e| config_error("train.method", key_line(text, "train", "method"), e.to_string()))?
        }
        Some(_) => return Err(config_error("train.method", key_line(text, "train", "method"), "expected a string")),
    };
    let kind = match lookup_str(&table, "dataset", "kind") {
        None => DatasetKind::Toy,
        Some(v) => v
            .clone()
            .try_into()
            .map_err(|e: toml::de::Error| config_error("dataset.kind", key_line(text, "dataset", "kind"), e.to_string()))?,
    };
    let train_defaults = match kind {
        DatasetKind::ColoredDigits => TrainConfig::colored_digits_defaults(method),
        _ => TrainConfig::toy_defaults(method),
    };
    let config = ExperimentConfig {
        dataset: merge_section(
            text,
            "dataset",
            &DatasetConfig::defaults_for(kind),
            &["mnist_dir", "path", "test_path"],
            table.get("dataset"),
        )?,
        train: merge_section(text, "train", &train_defaults, &["sampler"], table.get("train"))?,
        eval: merge_section(text, "eval", &EvalConfig::default(), &[], table.get("eval"))?,
        run: merge_section(text, "run", &RunConfig::default(), &[], table.get("run"))?,
    };
    config.validate()?;
    Ok(config)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datasets::SamplerStrategy;

    #[test]
    fn minimal_config_takes_toy_defaults() {
        let c = parse_config("[train]\nmethod = \"rcsv\"\n").unwrap();
        assert_eq!(c.train.lambda, 1.0);
        assert_eq!(c.train.gamma, 0.9);
        assert_eq!(c.train.rho, 0.01);
        assert_eq!(c.dataset.n_train, 1000);
        assert_eq!(c.eval.sigma_test, TOY_SIGMA_TEST.to_vec());
        assert_eq!(c.run.seeds.len(), 5);
        let u = parse_config("[train]\nmethod = \"rcsv_u\"\n").unwrap();
        assert_eq!(u.train.lambda, 5.0);
    }

    #[test]
    fn negative_lambda_is_rejected() {
        assert!(matches!(
            parse_config("[train]\nmethod = \"rcsv\"\nlambda = -1\n"),
            Err(Error::Validation(_))
        ));
    }

    #[test]
    fn unknown_key_names_key_and_line() {
        let text = "# toy\n[train]\nmethod = \"erm\"\nlearning_rate = 0.1\n";
        match parse_config(text) {
            Err(Error::Config { key, line, .. }) => {
                assert_eq!(key, "train.learning_rate");
                assert_eq!(line, 4);
            }
            other => panic!("{other:?}"),
        }
        assert!(matches!(
            parse_config("[train]\nmethod = \"erm\"\n[extra]\nx = 1\n"),
            Err(Error::Config { line: 3, .. })
        ));
    }

    #[test]
    fn type_mismatch_names_key() {
        match parse_config("[train]\nmethod = \"erm\"\n\nsteps = \"many\"\n") {
            Err(Error::Config { key, line, .. }) => assert_eq!((key.as_str(), line), ("train.steps", 4)),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn missing_method_is_reported() {
        assert!(matches!(
            parse_config("[run]\nseeds = [1]\n"),
            Err(Error::Config { ref key, .. }) if key == "train.method"
        ));
    }

    #[test]
    fn syntax_error_has_line() {
        match parse_config("[train]\nmethod = \"erm\"\nlr = = 2\n") {
            Err(Error::Config { line, .. }) => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn round_trip() {
        let text = "[dataset]\nsigma_train = 0.9\n[train]\nmethod = \"group_dro\"\nsampler = \"uniform\"\n\
                    [eval]\nsigma_test = [0.0, -0.5]\n[run]\nseeds = [3, 4]\nout = \"x\"\n";
        let c = parse_config(text).unwrap();
        assert_eq!(c.train.sampler, Some(SamplerStrategy::Uniform));
        let again = parse_config(&c.to_toml_string().unwrap()).unwrap();
        assert_eq!(again, c);
    }

    #[test]
    fn invariants_checked() {
        assert!(parse_config("[train]\nmethod = \"erm\"\n[run]\nseeds = []\n").is_err());
        assert!(parse_config("[train]\nmethod = \"erm\"\n[eval]\nsigma_test = [1.5]\n").is_err());
        assert!(parse_config("[dataset]\nkind = \"colored_digits\"\n[train]\nmethod = \"erm\"\n").is_err());
        let c = parse_config("[dataset]\nkind = \"colored_digits\"\nmnist_dir = \"m\"\n[train]\nmethod = \"rcsv_u\"\n").unwrap();
        assert_eq!(c.train.lambda, 0.05);
        assert_eq!(c.train.batch_size, 128);
    }
}
