use std::collections::BTreeSet;
use std::fmt::Write as _;

use crate::error::{CliError, CliResult};
use crate::summary::{ResultSummary, Stat};

/// Methods as rows, shared metrics as columns.
#[derive(Clone, Debug, PartialEq)]
pub struct Comparison {
    pub metrics: Vec<String>,
    pub rows: Vec<(String, Vec<Stat>)>,
    /// Index of the best row for each metric.
    pub best: Vec<usize>,
}

/// Accuracies are maximized; everything else (errors, losses) minimized.
pub fn higher_is_better(metric: &str) -> bool {
    metric.contains("accuracy")
}

pub fn compare(summaries: &[ResultSummary]) -> CliResult<Comparison> {
    if summaries.len() < 2 {
        return Err(CliError::Other(format!(
            "compare needs at least 2 summaries, got {}",
            summaries.len()
        )));
    }
    let mut shared: BTreeSet<&String> = summaries[0].metrics.keys().collect();
    for s in &summaries[1..] {
        shared.retain(|k| s.metrics.contains_key(*k));
    }
    if shared.is_empty() {
        return Err(CliError::Other("summaries share no metric names".into()));
    }
    let metrics: Vec<String> = shared.into_iter().cloned().collect();
    let rows: Vec<(String, Vec<Stat>)> = summaries
        .iter()
        .map(|s| (s.method.clone(), metrics.iter().map(|m| s.metrics[m]).collect()))
        .collect();
    let best = (0..metrics.len())
        .map(|j| {
            let up = higher_is_better(&metrics[j]);
            let mut best = 0;
            for (i, (_, stats)) in rows.iter().enumerate() {
                let (v, b) = (stats[j].mean, rows[best].1[j].mean);
                if (up && v > b) || (!up && v < b) {
                    best = i;
                }
            }
            best
        })
        .collect();
    Ok(Comparison { metrics, rows, best })
}

impl Comparison {
    /// Aligned plain-text table, `mean ± sem`, best value marked with `*`.
    pub fn to_table(&self) -> String {
        let cell = |i: usize, j: usize| {
            let s = self.rows[i].1[j];
            let mark = if self.best[j] == i { "*" } else { "" };
            format!("{:.4} ± {:.4}{mark}", s.mean, s.sem)
        };
        let mut widths: Vec<usize> = std::iter::once("method".len())
            .chain(self.metrics.iter().map(|m| m.chars().count()))
            .collect();
        for (i, (name, _)) in self.rows.iter().enumerate() {
            widths[0] = widths[0].max(name.chars().count());
            for j in 0..self.metrics.len() {
                widths[j + 1] = widths[j + 1].max(cell(i, j).chars().count());
            }
        }
        let pad = |s: &str, w: usize| format!("{s}{}", " ".repeat(w - s.chars().count()));
        let mut out = String::new();
        let header: Vec<String> = std::iter::once("method".to_string())
            .chain(self.metrics.iter().cloned())
            .enumerate()
            .map(|(k, h)| pad(&h, widths[k]))
            .collect();
        let _ = writeln!(out, "{}", header.join("  ").trim_end());
        let rule: Vec<String> = widths.iter().map(|w| "-".repeat(*w)).collect();
        let _ = writeln!(out, "{}", rule.join("  "));
        for (i, (name, _)) in self.rows.iter().enumerate() {
            let mut cols = vec![pad(name, widths[0])];
            cols.extend((0..self.metrics.len()).map(|j| pad(&cell(i, j), widths[j + 1])));
            let _ = writeln!(out, "{}", cols.join("  ").trim_end());
        }
        out
    }

    /// `method,<metric>_mean,<metric>_sem,...,best` with the best flags as a
    /// `;`-separated list of metric names.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("method");
        for m in &self.metrics {
            let _ = write!(out, ",{m}_mean,{m}_sem");
        }
        out.push_str(",best\n");
        for (i, (name, stats)) in self.rows.iter().enumerate() {
            out.push_str(&csv_field(name));
            for s in stats {
                let _ = write!(out, ",{},{}", s.mean, s.sem);
            }
            let best: Vec<&str> = (0..self.metrics.len())
                .filter(|&j| self.best[j] == i)
                .map(|j| self.metrics[j].as_str())
                .collect();
            let _ = writeln!(out, ",{}", best.join(";"));
        }
        out
    }
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}
