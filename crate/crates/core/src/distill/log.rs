use std::fmt::Write as _;

/// One optimization step.
#[derive(Clone, Debug, PartialEq)]
pub struct IterRecord {
    pub iteration: usize,
    /// `student`, `augmentor` or `joint`.
    pub phase: &'static str,
    pub loss_st: f64,
    /// Absent when the step never evaluated the teacher on clean inputs.
    pub loss_tt: Option<f64>,
    pub metric: f64,
    pub pool_size: usize,
}

/// A named scalar measured at some iteration, e.g. held-out accuracy.
#[derive(Clone, Debug, PartialEq)]
pub struct EvalRecord {
    pub iteration: usize,
    pub name: String,
    pub value: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainLog {
    pub records: Vec<IterRecord>,
    pub evals: Vec<EvalRecord>,
    pub switches: usize,
}

pub const CSV_HEADER: &str = "iteration,phase,loss_st,loss_tt,metric,pool_size";

impl TrainLog {
    pub fn student_updates(&self) -> usize {
        self.records.iter().filter(|r| r.phase != "augmentor").count()
    }

    pub fn augmentor_updates(&self) -> usize {
        self.records.iter().filter(|r| r.phase != "student").count()
    }

    /// Per-iteration records as CSV. Floats use Rust's shortest round-trip
    /// formatting so equal runs give equal bytes.
    pub fn to_csv(&self) -> String {
        let mut out = String::with_capacity(64 * (self.records.len() + 1));
        out.push_str(CSV_HEADER);
        out.push('\n');
        for r in &self.records {
            let tt = r.loss_tt.map(|v| v.to_string()).unwrap_or_default();
            let _ = writeln!(
                out,
                "{},{},{},{},{},{}",
                r.iteration, r.phase, r.loss_st, tt, r.metric, r.pool_size
            );
        }
        out
    }

    pub fn evals_csv(&self) -> String {
        let mut out = String::from("iteration,name,value\n");
        for e in &self.evals {
            let _ = writeln!(out, "{},{},{}", e.iteration, e.name, e.value);
        }
        out
    }
}
