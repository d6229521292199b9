use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Normal quantile for a two-sided 95% interval.
pub const Z_95: f64 = 1.96;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RunStatistics {
    pub mean: f64,
    /// `1.96·s/√n` with the sample standard deviation; zero for one run.
    pub ci_radius: f64,
    pub n_runs: usize,
}

pub fn multi_run_stats(values: &[f64]) -> Result<RunStatistics> {
    if values.is_empty() {
        return Err(Error::Config("statistics over zero runs".into()));
    }
    let n = values.len() as f64;
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mean = sorted.iter().sum::<f64>() / n;
    let ci_radius = if values.len() < 2 || sorted[0] == sorted[sorted.len() - 1] {
        0.0
    } else {
        let var = sorted.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
        Z_95 * var.sqrt() / n.sqrt()
    };
    Ok(RunStatistics {
        mean,
        ci_radius,
        n_runs: values.len(),
    })
}
