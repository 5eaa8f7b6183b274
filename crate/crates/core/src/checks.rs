//! Residual bookkeeping shared by the identity suites.

use serde::Serialize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Expect {
    /// Pass when the largest residual is at most the tolerance.
    AtMost,
    /// Pass when the largest residual exceeds the tolerance.
    Exceeds,
}

/// Outcome of one named identity over a sample set.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub residual: f64,
    pub tolerance: f64,
    pub expect: Expect,
    pub samples: usize,
    /// Samples where the identity could not be evaluated.
    pub errors: usize,
    pub passed: bool,
}

/// Running maximum of a residual.
#[derive(Debug, Clone)]
pub struct Tally {
    name: String,
    tolerance: f64,
    expect: Expect,
    max: f64,
    samples: usize,
    errors: usize,
}

impl Tally {
    pub fn new(name: impl Into<String>, tolerance: f64) -> Self {
        Tally {
            name: name.into(),
            tolerance,
            expect: Expect::AtMost,
            max: 0.0,
            samples: 0,
            errors: 0,
        }
    }

    pub fn exceeding(name: impl Into<String>, threshold: f64) -> Self {
        Tally {
            expect: Expect::Exceeds,
            ..Tally::new(name, threshold)
        }
    }

    pub fn record(&mut self, residual: f64) {
        if residual.is_nan() {
            self.errors += 1;
            return;
        }
        self.samples += 1;
        self.max = self.max.max(residual);
    }

    pub fn error(&mut self) {
        self.errors += 1;
    }

    pub fn max(&self) -> f64 {
        self.max
    }

    pub fn finish(self) -> Check {
        let ok = match self.expect {
            Expect::AtMost => self.max <= self.tolerance,
            Expect::Exceeds => self.max > self.tolerance,
        };
        Check {
            passed: ok && self.errors == 0 && self.samples > 0,
            name: self.name,
            residual: self.max,
            tolerance: self.tolerance,
            expect: self.expect,
            samples: self.samples,
            errors: self.errors,
        }
    }
}

/// Relative residual `|a - b| / max(|b|, floor)`.
pub fn rel(a: f64, b: f64, floor: f64) -> f64 {
    (a - b).abs() / b.abs().max(floor)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tally_outcomes() {
        let mut t = Tally::new("a", 1e-9);
        t.record(1e-12);
        t.record(5e-10);
        assert!(t.clone().finish().passed);
        t.record(f64::NAN);
        assert!(!t.finish().passed);
        let mut e = Tally::exceeding("b", 1e-3);
        e.record(2e-3);
        assert!(e.finish().passed);
        assert!(!Tally::new("empty", 1.0).finish().passed);
    }
}
