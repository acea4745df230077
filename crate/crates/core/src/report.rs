use serde::{Deserialize, Serialize};

/// Outcome of one inequality checked over a finite sample set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckOutcome {
    pub name: String,
    pub passed: bool,
    /// Smallest observed `bound - value`; negative means violated.
    pub worst_margin: f64,
    /// Sample point(s) attaining the worst margin.
    pub witness: Vec<f64>,
}

impl CheckOutcome {
    pub(crate) fn new(name: &str) -> Self {
        Self {
            name: name.to_string(),
            passed: true,
            worst_margin: f64::INFINITY,
            witness: Vec::new(),
        }
    }

    /// Records `value ≤ bound` at `witness`.
    pub(crate) fn record(&mut self, value: f64, bound: f64, witness: &[f64]) {
        let margin = bound - value;
        if margin < self.worst_margin || (margin.is_nan() && self.passed) {
            self.worst_margin = margin;
            self.witness = witness.to_vec();
        }
        if !(margin >= 0.0) {
            self.passed = false;
        }
    }

    pub(crate) fn fail_with(name: &str, witness: &[f64]) -> Self {
        Self {
            name: name.to_string(),
            passed: false,
            worst_margin: f64::NEG_INFINITY,
            witness: witness.to_vec(),
        }
    }
}

/// Necessary-condition checks of a structural assumption on a finite grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub subject: String,
    pub checks: Vec<CheckOutcome>,
}

impl ValidationReport {
    pub fn new(subject: impl Into<String>) -> Self {
        Self {
            subject: subject.into(),
            checks: Vec::new(),
        }
    }

    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn check(&self, name: &str) -> Option<&CheckOutcome> {
        self.checks.iter().find(|c| c.name == name)
    }

    pub fn failures(&self) -> impl Iterator<Item = &CheckOutcome> {
        self.checks.iter().filter(|c| !c.passed)
    }

    pub(crate) fn push(&mut self, check: CheckOutcome) {
        self.checks.push(check);
    }
}

impl std::fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        writeln!(f, "{}", self.subject)?;
        for c in &self.checks {
            let tag = if c.passed { "pass" } else { "FAIL" };
            write!(f, "  [{tag}] {} (margin {:.3e}", c.name, c.worst_margin)?;
            if !c.passed && !c.witness.is_empty() {
                write!(f, ", at {:?}", c.witness)?;
            }
            writeln!(f, ")")?;
        }
        Ok(())
    }
}
