use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::config::ExperimentConfig;
use crate::error::{CliError, CliResult};

/// Mean and standard error of the mean over seeds.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Stat {
    pub mean: f64,
    pub sem: f64,
    pub n: usize,
}

impl Stat {
    /// Sample standard deviation over `sqrt(n)`; zero for a single value.
    pub fn of(values: &[f64]) -> Stat {
        let n = values.len();
        if n == 0 {
            return Stat { mean: f64::NAN, sem: f64::NAN, n };
        }
        let mean = values.iter().sum::<f64>() / n as f64;
        let sem = if n < 2 {
            0.0
        } else {
            let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
            (var / n as f64).sqrt()
        };
        Stat { mean, sem, n }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeedResult {
    pub seed: u64,
    pub metrics: BTreeMap<String, f64>,
    pub switches: usize,
    pub iterations: usize,
}

/// Per-seed and aggregated results of one experiment. Contains nothing that
/// depends on wall-clock time, so identical runs serialize identically.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResultSummary {
    pub schema_version: u32,
    pub experiment: String,
    pub method: String,
    /// `toy`, `synthetic` or `idx:<dir>`.
    pub data_source: String,
    pub seeds: Vec<SeedResult>,
    pub metrics: BTreeMap<String, Stat>,
    pub config: ExperimentConfig,
}

impl ResultSummary {
    pub fn new(config: &ExperimentConfig, data_source: String, seeds: Vec<SeedResult>) -> Self {
        Self {
            schema_version: crate::config::SCHEMA_VERSION,
            experiment: config.experiment.to_string(),
            method: config.method.clone(),
            data_source,
            metrics: aggregate(&seeds),
            seeds,
            config: config.clone(),
        }
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("summary serializes");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str, origin: &str) -> CliResult<Self> {
        serde_json::from_str(text).map_err(|e| CliError::Other(format!("{origin}: not a result summary: {e}")))
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Self::from_json(&text, &path.display().to_string())
    }
}

/// Aggregates every metric present in at least one seed.
pub fn aggregate(seeds: &[SeedResult]) -> BTreeMap<String, Stat> {
    let mut columns: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for s in seeds {
        for (k, v) in &s.metrics {
            columns.entry(k.clone()).or_default().push(*v);
        }
    }
    columns.into_iter().map(|(k, v)| (k, Stat::of(&v))).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stat_oracle() {
        let s = Stat::of(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(s.mean, 2.5);
        // sample variance 5/3
        assert!((s.sem - (5.0f64 / 3.0 / 4.0).sqrt()).abs() < 1e-15);
        assert_eq!(Stat::of(&[7.0]), Stat { mean: 7.0, sem: 0.0, n: 1 });
    }

    #[test]
    fn aggregate_from_seed_records() {
        let seed = |s, v| SeedResult {
            seed: s,
            metrics: BTreeMap::from([("mse".to_string(), v)]),
            switches: 0,
            iterations: 1,
        };
        let m = aggregate(&[seed(0, 1.0), seed(1, 3.0)]);
        assert_eq!(m["mse"].mean, 2.0);
        assert_eq!(m["mse"].n, 2);
    }
}
