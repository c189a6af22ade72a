use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Machine-readable outcome of one verification check.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleReport {
    pub check: String,
    /// Largest observed amount by which the checked quantity exceeds its
    /// reference (negative when every trial held with room to spare).
    pub max_deviation: f64,
    pub tolerance: f64,
    pub passed: bool,
    pub trials: usize,
    pub seed: u64,
    /// Fitted slope or other summary statistic, when the check has one.
    pub statistic: Option<f64>,
    pub note: String,
}

impl OracleReport {
    /// Builds a report whose pass flag is `max_deviation <= tolerance`.
    pub fn new(check: impl Into<String>, max_deviation: f64, tolerance: f64, trials: usize, seed: u64) -> Self {
        Self {
            check: check.into(),
            max_deviation,
            tolerance,
            passed: max_deviation <= tolerance,
            trials,
            seed,
            statistic: None,
            note: String::new(),
        }
    }

    pub fn with_statistic(mut self, value: f64) -> Self {
        self.statistic = Some(value);
        self
    }

    pub fn with_note(mut self, note: impl Into<String>) -> Self {
        self.note = note.into();
        self
    }

    /// Marks the report failed regardless of the deviation.
    pub fn failed(mut self, note: impl Into<String>) -> Self {
        self.passed = false;
        self.note = note.into();
        self
    }

    pub fn to_json_line(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }
}

/// Writes one JSON object per line.
pub fn write_reports(path: &Path, reports: &[OracleReport]) -> Result<()> {
    let mut file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    for r in reports {
        writeln!(file, "{}", r.to_json_line()?).map_err(|e| Error::io(path, e))?;
    }
    Ok(())
}

pub fn read_reports(path: &Path) -> Result<Vec<OracleReport>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).map_err(Error::from))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pass_flag_follows_tolerance() {
        assert!(OracleReport::new("a", 1e-13, 1e-12, 1, 0).passed);
        assert!(!OracleReport::new("a", 2e-12, 1e-12, 1, 0).passed);
        assert!(!OracleReport::new("a", f64::NAN, 1.0, 1, 0).passed);
    }

    #[test]
    fn json_lines_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("r.jsonl");
        let reports = vec![
            OracleReport::new("x", -0.5, 0.0, 3, 7).with_statistic(-0.41),
            OracleReport::new("y", 0.0, 0.0, 1, 8).with_note("n"),
        ];
        write_reports(&path, &reports).unwrap();
        assert_eq!(read_reports(&path).unwrap(), reports);
    }
}
