//! Per-epoch metrics records and their CSV serialization.

use std::fmt;
use std::fs;
use std::io::Write;
use std::path::Path;

use crate::{Error, Result};

/// Exact header of every metrics file.
pub const METRICS_HEADER: &str =
    "epoch,split,total_loss,kl_loss,ce_loss,rk_loss,accuracy,mean_exact_tau";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    Test,
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Split::Train => write!(f, "train"),
            Split::Test => write!(f, "test"),
        }
    }
}

/// One logged evaluation: losses, accuracy, and the mean exact Kendall tau
/// between reference (teacher) and model logits.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricsRow {
    pub epoch: usize,
    pub split: Split,
    pub total_loss: f64,
    pub kl_loss: f64,
    pub ce_loss: f64,
    pub rk_loss: f64,
    pub accuracy: f64,
    pub mean_exact_tau: f64,
}

impl MetricsRow {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("total_loss", self.total_loss),
            ("kl_loss", self.kl_loss),
            ("ce_loss", self.ce_loss),
            ("rk_loss", self.rk_loss),
        ] {
            if !v.is_finite() {
                return Err(Error::InvalidParameter {
                    name,
                    message: format!("metrics row at epoch {} is non-finite: {v}", self.epoch),
                });
            }
        }
        if !(0.0..=1.0).contains(&self.accuracy) {
            return Err(Error::InvalidParameter {
                name: "accuracy",
                message: format!("must lie in [0, 1], got {}", self.accuracy),
            });
        }
        if !(-1.0..=1.0).contains(&self.mean_exact_tau) {
            return Err(Error::InvalidParameter {
                name: "mean_exact_tau",
                message: format!("must lie in [-1, 1], got {}", self.mean_exact_tau),
            });
        }
        Ok(())
    }
}

/// Locale-independent float formatting with exactly 9 significant digits.
pub fn format_float9(v: f64) -> String {
    format!("{v:.8e}")
}

/// Renders rows to CSV text with the exact [`METRICS_HEADER`].
pub fn metrics_to_csv(rows: &[MetricsRow]) -> Result<String> {
    let mut out = String::from(METRICS_HEADER);
    out.push('\n');
    for row in rows {
        row.validate()?;
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            row.epoch,
            row.split,
            format_float9(row.total_loss),
            format_float9(row.kl_loss),
            format_float9(row.ce_loss),
            format_float9(row.rk_loss),
            format_float9(row.accuracy),
            format_float9(row.mean_exact_tau),
        ));
    }
    Ok(out)
}

/// Writes the metrics file atomically (temp file + rename).
pub fn write_metrics(rows: &[MetricsRow], path: &Path) -> Result<()> {
    let text = metrics_to_csv(rows)?;
    let tmp = path.with_extension("tmp");
    let mut file = fs::File::create(&tmp)?;
    file.write_all(text.as_bytes())?;
    file.sync_all()?;
    fs::rename(&tmp, path)?;
    Ok(())
}
