//! The full sampled identity suite for one structure: the defining
//! identities of the structure plus the connection invariants.

use serde::{Deserialize, Serialize};

use crate::checks::{Check, Tally};
use crate::connections::{
    covariant_derivative, nonlinear_generic, spray, ConnectionKind, ConnectionSample, DerivativeKind, MetricField,
};
use crate::sampling::{Sample, SamplingPlan};
use crate::structure::{FinslerStructure, ValidationTolerances};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Tolerances {
    /// Identities evaluated through the derivative tower.
    pub identity: f64,
    /// Identities forced by construction.
    pub exact: f64,
    /// Index symmetry.
    pub symmetry: f64,
    /// Identities that pass through an inverse-metric solve.
    pub connection: f64,
    /// Agreement between the Finsler and Riemannian field pipelines.
    pub correspondence: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            identity: 1e-9,
            exact: 1e-10,
            symmetry: 1e-12,
            connection: 1e-8,
            correspondence: 1e-6,
        }
    }
}

impl Tolerances {
    pub fn validation(&self) -> ValidationTolerances {
        ValidationTolerances {
            identity: self.identity,
            exact: self.exact,
            symmetry: self.symmetry,
        }
    }

    pub fn all_positive(&self) -> bool {
        [
            self.identity,
            self.exact,
            self.symmetry,
            self.connection,
            self.correspondence,
        ]
        .iter()
        .all(|t| *t > 0.0 && t.is_finite())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SuiteReport {
    pub structure: String,
    pub used: usize,
    pub skipped: usize,
    /// Sorted by name.
    pub checks: Vec<Check>,
}

impl SuiteReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn check(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }
}

/// Connection invariants on the given samples.
pub fn connection_checks(s: &FinslerStructure, samples: &[Sample], tol: &Tolerances) -> Vec<Check> {
    let riemannian = s.is_riemannian();
    let mut berwald_contraction = Tally::new("berwald_contraction", tol.identity);
    let mut spray_contraction = Tally::new("spray_contraction", tol.identity);
    let mut spray_homogeneity = Tally::new("spray_homogeneity", tol.exact);
    let mut nonlinear_paths = Tally::new("nonlinear_paths", tol.exact);
    let mut cartan_condition = Tally::new("cartan_condition", tol.connection);
    let mut lower_symmetry = Tally::new("lower_symmetry", tol.symmetry);
    let mut compat_h = Tally::new("metric_compatibility_h", tol.connection);
    let mut compat_v = Tally::new("metric_compatibility_v", tol.connection);
    let mut reduction = Tally::new("riemannian_reduction", tol.connection);
    let mut cartan_v_flat = Tally::new("riemannian_cartan_v", tol.exact);

    let g = MetricField(s);
    for smp in samples {
        let (x, y) = (&smp.x[..], &smp.y[..]);
        let Ok(cs) = ConnectionSample::compute(s, x, y) else {
            for t in [
                &mut berwald_contraction,
                &mut spray_contraction,
                &mut spray_homogeneity,
                &mut nonlinear_paths,
                &mut cartan_condition,
                &mut lower_symmetry,
                &mut compat_h,
                &mut compat_v,
                &mut reduction,
                &mut cartan_v_flat,
            ] {
                t.error();
            }
            continue;
        };
        let scale = cs.scale();
        berwald_contraction.record(cs.berwald_contraction_residual() / scale);
        spray_contraction.record(cs.spray_contraction_residual() / scale);
        cartan_condition.record(cs.cartan_condition_residual());
        lower_symmetry.record(cs.lower_symmetry_residual());

        let y2: Vec<f64> = y.iter().map(|v| 2.0 * v).collect();
        match spray(s, x, &y2) {
            Ok(g2) => spray_homogeneity.record(
                g2.iter()
                    .zip(&cs.spray)
                    .map(|(a, b)| (a - 4.0 * b).abs() / (4.0 * scale))
                    .fold(0.0, f64::max),
            ),
            Err(_) => spray_homogeneity.error(),
        }
        match nonlinear_generic(s, x, y) {
            Ok(nl) => nonlinear_paths.record(
                nl.iter()
                    .flatten()
                    .zip(cs.nonlinear.iter().flatten())
                    .map(|(a, b)| (a - b).abs() / scale)
                    .fold(0.0, f64::max),
            ),
            Err(_) => nonlinear_paths.error(),
        }
        for (kind, tally) in [
            (DerivativeKind::Horizontal, &mut compat_h),
            (DerivativeKind::Vertical, &mut compat_v),
        ] {
            match covariant_derivative(s, &g, x, y, kind, ConnectionKind::Cartan) {
                Ok(t) => tally.record(t.max_abs()),
                Err(_) => tally.error(),
            }
        }
        if riemannian {
            let n = s.dim();
            let mut worst = 0.0f64;
            let mut flat = 0.0f64;
            for k in 0..n {
                for i in 0..n {
                    for j in 0..n {
                        let c = cs.christoffel[k][i][j];
                        worst = worst
                            .max((cs.berwald[k][i][j] - c).abs())
                            .max((cs.cartan_h[k][i][j] - c).abs());
                        flat = flat.max(cs.cartan_v[k][i][j].abs());
                    }
                }
            }
            reduction.record(worst);
            cartan_v_flat.record(flat);
        }
    }

    let mut out = vec![
        berwald_contraction.finish(),
        spray_contraction.finish(),
        spray_homogeneity.finish(),
        nonlinear_paths.finish(),
        cartan_condition.finish(),
        lower_symmetry.finish(),
        compat_h.finish(),
        compat_v.finish(),
    ];
    if riemannian {
        out.push(reduction.finish());
        out.push(cartan_v_flat.finish());
    }
    out
}

/// Structure validation followed by the connection invariants on the same
/// sample set.
pub fn identity_suite(s: &FinslerStructure, plan: &SamplingPlan, tol: &Tolerances) -> SuiteReport {
    let base = s.validate(plan, &tol.validation());
    let (samples, _) = s.draw_samples(plan);
    let mut checks = base.checks;
    checks.extend(connection_checks(s, &samples, tol));
    checks.sort_by(|a, b| a.name.cmp(&b.name));
    SuiteReport {
        structure: base.structure,
        used: base.used,
        skipped: base.skipped,
        checks,
    }
}
