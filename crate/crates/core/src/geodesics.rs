//! Fixed-step RK4 integration of `x' = y, y' = -2 G(x, y)` with
//! conservation monitoring.

use serde::{Deserialize, Serialize};

use crate::connections::spray;
use crate::error::{GeometryError, Result};
use crate::structure::{FinslerStructure, Kind};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scheme {
    Rk4,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntegratorConfig {
    pub steps: usize,
    #[serde(default = "default_scheme")]
    pub scheme: Scheme,
    #[serde(default = "default_drift_tolerance")]
    pub drift_tolerance: f64,
}

fn default_scheme() -> Scheme {
    Scheme::Rk4
}

fn default_drift_tolerance() -> f64 {
    1e-8
}

impl IntegratorConfig {
    pub fn rk4(steps: usize) -> Self {
        IntegratorConfig {
            steps,
            scheme: Scheme::Rk4,
            drift_tolerance: default_drift_tolerance(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum PathStatus {
    Complete,
    /// The trajectory left the smoothness domain; samples stop before the exit.
    DomainExit,
    DriftExceeded,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PathSample {
    pub t: f64,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub f: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GeodesicPath {
    pub kind: Kind,
    pub samples: Vec<PathSample>,
    /// `max |F(t) - F(0)| / |F(0)|`.
    pub drift: f64,
    pub status: PathStatus,
}

impl GeodesicPath {
    pub fn endpoint(&self) -> &PathSample {
        self.samples.last().expect("paths hold at least the initial sample")
    }

    pub fn is_flagged(&self) -> bool {
        self.status != PathStatus::Complete
    }

    /// Drift recomputed from the stored samples.
    pub fn recompute_drift(&self) -> f64 {
        let f0 = self.samples[0].f;
        self.samples
            .iter()
            .map(|s| (s.f - f0).abs() / f0.abs())
            .fold(0.0, f64::max)
    }
}

/// `X(x, y) = (y, -2 G(x, y))`.
pub fn spray_flow_field(s: &FinslerStructure, x: &[f64], y: &[f64]) -> Result<Vec<f64>> {
    let g = spray(s, x, y)?;
    Ok(y.iter().cloned().chain(g.iter().map(|v| -2.0 * v)).collect())
}

/// One classical RK4 step of `z' = field(z)` with `z = (x, y)`.
pub fn rk4_step<F>(field: F, z: &[f64], h: f64) -> Result<Vec<f64>>
where
    F: Fn(&[f64]) -> Result<Vec<f64>>,
{
    let shifted = |k: &[f64], c: f64| -> Vec<f64> { z.iter().zip(k).map(|(a, b)| a + c * b).collect() };
    let k1 = field(z)?;
    let k2 = field(&shifted(&k1, 0.5 * h))?;
    let k3 = field(&shifted(&k2, 0.5 * h))?;
    let k4 = field(&shifted(&k3, h))?;
    Ok((0..z.len())
        .map(|i| z[i] + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]))
        .collect())
}

fn structure_field(s: &FinslerStructure) -> impl Fn(&[f64]) -> Result<Vec<f64>> + '_ {
    let n = s.dim();
    move |z: &[f64]| spray_flow_field(s, &z[..n], &z[n..])
}

pub fn integrate(
    s: &FinslerStructure,
    x0: &[f64],
    y0: &[f64],
    t_end: f64,
    cfg: &IntegratorConfig,
) -> Result<GeodesicPath> {
    let n = s.dim();
    if cfg.steps == 0 {
        return Err(GeometryError::Invalid("step count must be at least 1".into()));
    }
    if !(t_end > 0.0) || !t_end.is_finite() {
        return Err(GeometryError::Invalid(format!("t_end must be positive, got {t_end}")));
    }
    if x0.len() != n || y0.len() != n {
        return Err(GeometryError::Invalid(format!("expected {n}-dimensional initial data")));
    }
    let f0 = s.eval_f(x0, y0)?;
    let h = t_end / cfg.steps as f64;
    let field = structure_field(s);

    let mut samples = vec![PathSample {
        t: 0.0,
        x: x0.to_vec(),
        y: y0.to_vec(),
        f: f0,
    }];
    let mut z: Vec<f64> = x0.iter().chain(y0).cloned().collect();
    let mut drift = 0.0f64;
    let mut status = PathStatus::Complete;
    for step in 1..=cfg.steps {
        let next = match rk4_step(&field, &z, h) {
            Ok(v) => v,
            Err(e) if e.is_domain() => {
                status = PathStatus::DomainExit;
                break;
            }
            Err(e) => {
                return Err(GeometryError::Step {
                    step,
                    source: Box::new(e),
                })
            }
        };
        let f = match s.eval_f(&next[..n], &next[n..]) {
            Ok(f) => f,
            Err(e) if e.is_domain() => {
                status = PathStatus::DomainExit;
                break;
            }
            Err(e) => {
                return Err(GeometryError::Step {
                    step,
                    source: Box::new(e),
                })
            }
        };
        drift = drift.max((f - f0).abs() / f0.abs());
        samples.push(PathSample {
            t: if step == cfg.steps { t_end } else { step as f64 * h },
            x: next[..n].to_vec(),
            y: next[n..].to_vec(),
            f,
        });
        z = next;
    }
    if status == PathStatus::Complete && drift > cfg.drift_tolerance {
        status = PathStatus::DriftExceeded;
    }
    Ok(GeodesicPath {
        kind: s.kind(),
        samples,
        drift,
        status,
    })
}

/// `s = integral of L dt` by composite Simpson, closing with the 3/8 rule
/// when the interval count is odd.
pub fn arc_length(path: &GeodesicPath) -> Result<f64> {
    if path.kind != Kind::Positive {
        return Err(GeometryError::UnsupportedKind("alternating"));
    }
    let l: Vec<f64> = path.samples.iter().map(|s| s.f.max(0.0).sqrt()).collect();
    let t: Vec<f64> = path.samples.iter().map(|s| s.t).collect();
    Ok(simpson(&t, &l))
}

/// Composite Simpson on an (assumed uniform) grid.
pub fn simpson(t: &[f64], v: &[f64]) -> f64 {
    let m = v.len().saturating_sub(1);
    match m {
        0 => 0.0,
        1 => 0.5 * (t[1] - t[0]) * (v[0] + v[1]),
        _ => {
            let h = (t[m] - t[0]) / m as f64;
            let even = if m.is_multiple_of(2) { m } else { m - 3 };
            let mut acc = 0.0;
            for i in (0..even).step_by(2) {
                acc += h / 3.0 * (v[i] + 4.0 * v[i + 1] + v[i + 2]);
            }
            if even < m {
                let i = even;
                acc += 3.0 * h / 8.0 * (v[i] + 3.0 * v[i + 1] + 3.0 * v[i + 2] + v[i + 3]);
            }
            acc
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn euclidean_line() {
        let s = FinslerStructure::euclidean(2).unwrap();
        let p = integrate(&s, &[0.0, 0.0], &[1.0, 0.0], 1.0, &IntegratorConfig::rk4(100)).unwrap();
        let e = p.endpoint();
        assert!((e.x[0] - 1.0).abs() <= 1e-12 && e.x[1].abs() <= 1e-12);
        assert_eq!(p.status, PathStatus::Complete);
        assert_eq!(
            spray_flow_field(&s, &[0.3, 0.1], &[2.0, -1.0]).unwrap(),
            vec![2.0, -1.0, 0.0, 0.0]
        );
    }

    #[test]
    fn euclidean_arc_lengths() {
        let s = FinslerStructure::euclidean(2).unwrap();
        let p = integrate(&s, &[0.0, 0.0], &[0.6, 0.8], 2.0, &IntegratorConfig::rk4(10)).unwrap();
        assert!((arc_length(&p).unwrap() - 2.0).abs() <= 1e-10);
        let p = integrate(&s, &[0.0, 0.0], &[3.0, 4.0], 1.0, &IntegratorConfig::rk4(7)).unwrap();
        assert!((arc_length(&p).unwrap() - 5.0).abs() <= 1e-10);
    }

    #[test]
    fn half_plane_flow_field() {
        let s = FinslerStructure::poincare_half_plane();
        let v = spray_flow_field(&s, &[0.0, 1.0], &[1.0, 0.0]).unwrap();
        let expect = [1.0, 0.0, 0.0, -1.0];
        for (a, b) in v.iter().zip(expect) {
            assert!((a - b).abs() <= 1e-14);
        }
    }

    #[test]
    fn step_matches_flow_field_driver() {
        let s = FinslerStructure::poincare_half_plane();
        let (x0, y0) = ([0.0, 1.0], [1.0, 0.0]);
        let p = integrate(&s, &x0, &y0, 0.01, &IntegratorConfig::rk4(1)).unwrap();
        let z = rk4_step(|z| spray_flow_field(&s, &z[..2], &z[2..]), &[0.0, 1.0, 1.0, 0.0], 0.01).unwrap();
        let e = p.endpoint();
        assert_eq!([e.x.clone(), e.y.clone()].concat(), z);
    }

    #[test]
    fn half_plane_endpoint_and_length() {
        let s = FinslerStructure::poincare_half_plane();
        let p = integrate(&s, &[0.0, 1.0], &[1.0, 0.0], 1.0, &IntegratorConfig::rk4(1000)).unwrap();
        let e = p.endpoint();
        assert!((e.x[0] - 1f64.tanh()).abs() <= 1e-6);
        assert!((e.x[1] - 1.0 / 1f64.cosh()).abs() <= 1e-6);
        assert!((arc_length(&p).unwrap() - 1.0).abs() <= 1e-6);
        assert!(p.drift <= 1e-8);
        assert_eq!(p.drift, p.recompute_drift());
    }

    #[test]
    fn fourth_order_convergence() {
        let s = FinslerStructure::poincare_half_plane();
        let err = |steps| {
            let p = integrate(&s, &[0.0, 1.0], &[1.0, 0.0], 1.0, &IntegratorConfig::rk4(steps)).unwrap();
            let e = p.endpoint();
            (e.x[0] - 1f64.tanh()).hypot(e.x[1] - 1.0 / 1f64.cosh())
        };
        let (e10, e20, e40) = (err(10), err(20), err(40));
        assert!(e10 / e20 >= 8.0 && e20 / e40 >= 8.0, "{e10} {e20} {e40}");
    }

    #[test]
    fn randers_conserves_f() {
        let s = FinslerStructure::randers_example();
        let p = integrate(&s, &[0.1, -0.2], &[0.6, 0.5], 1.0, &IntegratorConfig::rk4(1000)).unwrap();
        assert_eq!(p.status, PathStatus::Complete);
        assert!(p.drift <= 1e-8, "{}", p.drift);
    }

    #[test]
    fn reversibility_of_quadratic_family() {
        let s = FinslerStructure::poincare_half_plane();
        let cfg = IntegratorConfig::rk4(400);
        let p = integrate(&s, &[0.2, 1.1], &[0.7, 0.4], 1.0, &cfg).unwrap();
        let e = p.endpoint();
        let back: Vec<f64> = e.y.iter().map(|v| -v).collect();
        let q = integrate(&s, &e.x, &back, 1.0, &cfg).unwrap();
        let r = q.endpoint();
        assert!((r.x[0] - 0.2).abs() <= 1e-6 && (r.x[1] - 1.1).abs() <= 1e-6);
    }

    #[test]
    fn geodesic_beats_chord() {
        // The straight chord between the endpoints has hyperbolic length
        // 1.0340642 by adaptive quadrature; the geodesic has length 1.
        let s = FinslerStructure::poincare_half_plane();
        let p = integrate(&s, &[0.0, 1.0], &[1.0, 0.0], 1.0, &IntegratorConfig::rk4(1000)).unwrap();
        let geo = arc_length(&p).unwrap();
        let end = p.endpoint().x.clone();
        let steps = 1000;
        let d = [end[0], end[1] - 1.0];
        let t: Vec<f64> = (0..=steps).map(|i| i as f64 / steps as f64).collect();
        let l: Vec<f64> = t
            .iter()
            .map(|&t| s.eval_l(&[t * d[0], 1.0 + t * d[1]], &d).unwrap())
            .collect();
        let chord = simpson(&t, &l);
        assert!((chord - 1.0340642).abs() <= 1e-6, "{chord}");
        assert!(chord - geo > 0.03);
    }

    #[test]
    fn domain_exit_truncates() {
        let s = FinslerStructure::poincare_half_plane();
        // The exact flow never reaches x1 = 0, but one oversized step does.
        let p = integrate(&s, &[0.0, 0.1], &[0.0, -5.0], 1.0, &IntegratorConfig::rk4(1)).unwrap();
        assert_eq!(p.status, PathStatus::DomainExit);
        assert_eq!(p.samples.len(), 1);
    }

    #[test]
    fn drift_flag_and_bad_config() {
        let s = FinslerStructure::randers_example();
        let mut cfg = IntegratorConfig::rk4(3);
        cfg.drift_tolerance = 1e-15;
        let p = integrate(&s, &[0.1, -0.2], &[2.0, 1.5], 1.0, &cfg).unwrap();
        assert_eq!(p.status, PathStatus::DriftExceeded);
        assert!(integrate(&s, &[0.0, 0.0], &[1.0, 0.0], 1.0, &IntegratorConfig::rk4(0)).is_err());
        let m = FinslerStructure::minkowski();
        let q = integrate(&m, &[0.0; 4], &[1.0, 0.1, 0.0, 0.0], 1.0, &IntegratorConfig::rk4(2)).unwrap();
        assert!(matches!(arc_length(&q), Err(GeometryError::UnsupportedKind(_))));
    }

    #[test]
    fn simpson_rules() {
        let t: Vec<f64> = (0..=5).map(|i| i as f64 * 0.2).collect();
        let v: Vec<f64> = t.iter().map(|x| x * x * x).collect();
        assert!((simpson(&t, &v) - 0.25).abs() < 1e-15);
        let t4 = &t[..5];
        let v4: Vec<f64> = t4.iter().map(|x| x * x * x).collect();
        assert!((simpson(t4, &v4) - 0.8f64.powi(4) / 4.0).abs() < 1e-15);
    }
}
