//! Maxwell's equations on a four-dimensional (pseudo-)Finsler background.
//!
//! Index 0 is timelike. `F_hv[a][b]` holds the mixed block `F_{a b-bar}`, and
//! every rank-3 result is indexed `[alpha][beta][gamma]`.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::connections::{
    covariant_derivative, nonlinear_connection, nonlinear_generic, seed_xy, ConnectionKind, DerivativeKind, Tensor,
    TensorField, Variance,
};
use crate::error::{GeometryError, Result};
use crate::expr::{self, Expr};
use crate::linalg::{self, Matrix};
use crate::structure::{metric_components, FinslerStructure, Fundamental, MetricSample};
use crate::tower::{Jet, Scalar};

pub const DIM: usize = 4;

/// A covector potential `A_a(x)` or `A_a(x, y)`.
#[derive(Debug, Clone, PartialEq)]
pub struct PotentialField {
    components: Vec<Expr>,
    y_dependent: bool,
}

impl PotentialField {
    pub fn parse<T: AsRef<str>>(texts: &[T]) -> Result<Self> {
        if texts.len() != DIM {
            return Err(GeometryError::Invalid(format!(
                "potential needs {DIM} components, got {}",
                texts.len()
            )));
        }
        let components: Vec<Expr> = texts
            .iter()
            .map(|t| expr::parse(t.as_ref(), DIM).map_err(|d| GeometryError::Invalid(format!("{:?}: {d}", t.as_ref()))))
            .collect::<Result<_>>()?;
        let y_dependent = components.iter().any(Expr::depends_on_y);
        Ok(PotentialField {
            components,
            y_dependent,
        })
    }

    pub fn zero() -> Self {
        Self::parse(&["0"; DIM]).expect("zero potential")
    }

    pub fn is_y_dependent(&self) -> bool {
        self.y_dependent
    }

    pub fn components(&self) -> &[Expr] {
        &self.components
    }

    pub fn eval<S: Scalar>(&self, x: &[S], y: &[S]) -> Result<Vec<S>> {
        self.components.iter().map(|e| Ok(e.eval(x, y)?)).collect()
    }
}

/// Which leading sign the source equation carries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Convention {
    /// `+4 pi / c` on the source side.
    PaperRiemann,
    /// `-4 pi / c` on the source side.
    PaperFinsler,
}

impl Convention {
    pub fn sign(self) -> f64 {
        match self {
            Convention::PaperRiemann => 1.0,
            Convention::PaperFinsler => -1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FieldSample {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub f_hh: Matrix<f64>,
    pub f_hv: Matrix<f64>,
    pub f_hh_up: Matrix<f64>,
    pub f_hv_up: Matrix<f64>,
    pub metric: MetricSample,
}

impl FieldSample {
    pub fn antisymmetry_residual(&self) -> f64 {
        let mut worst = 0.0f64;
        for a in 0..DIM {
            for b in 0..DIM {
                worst = worst.max((self.f_hh[a][b] + self.f_hh[b][a]).abs());
            }
        }
        worst
    }

    /// `max |g F^up g - F|` over both blocks.
    pub fn lowering_residual(&self) -> f64 {
        let lower = |up: &Matrix<f64>| -> Matrix<f64> {
            let g = &self.metric.g;
            (0..DIM)
                .map(|a| {
                    (0..DIM)
                        .map(|b| {
                            let mut acc = 0.0;
                            for m in 0..DIM {
                                for n in 0..DIM {
                                    acc += g[a][m] * g[b][n] * up[m][n];
                                }
                            }
                            acc
                        })
                        .collect()
                })
                .collect()
        };
        let mut worst = 0.0f64;
        for (low, up) in [(&self.f_hh, &self.f_hh_up), (&self.f_hv, &self.f_hv_up)] {
            for (r1, r2) in lower(up).iter().zip(low) {
                for (a, b) in r1.iter().zip(r2) {
                    worst = worst.max((a - b).abs());
                }
            }
        }
        worst
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CurrentSample {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub j: Vec<f64>,
    pub convention: Convention,
    pub c: f64,
}

struct Blocks<S> {
    hh: Matrix<S>,
    hv: Matrix<S>,
    hh_up: Matrix<S>,
    hv_up: Matrix<S>,
    volume: S,
}

fn raise<S: Scalar>(g_inv: &Matrix<S>, f: &Matrix<S>) -> Matrix<S> {
    let half: Matrix<S> = (0..DIM)
        .map(|a| {
            (0..DIM)
                .map(|n| {
                    let mut acc = S::zero();
                    for m in 0..DIM {
                        acc.mul_acc(&g_inv[a][m], &f[m][n]);
                    }
                    acc
                })
                .collect()
        })
        .collect();
    (0..DIM)
        .map(|a| {
            (0..DIM)
                .map(|b| {
                    let mut acc = S::zero();
                    for n in 0..DIM {
                        acc.mul_acc(&half[a][n], &g_inv[b][n]);
                    }
                    acc
                })
                .collect()
        })
        .collect()
}

/// Field-strength blocks and their raised forms on any scalar type.
fn blocks<M: Fundamental, S: Scalar>(a: &PotentialField, m: &M, x: &[S], y: &[S]) -> Result<Blocks<S>> {
    let n = DIM;
    let (xs, ys) = seed_xy(x, y, 1);
    let comps = a.eval(&xs, &ys)?;
    // delta_i A_b = dA_b/dx^i - N^k_i dA_b/dy^k
    let mut delta: Matrix<S> = comps
        .iter()
        .map(|c| (0..n).map(|i| c.derivative(&[i])).collect())
        .collect();
    let dy: Matrix<S> = comps
        .iter()
        .map(|c| (0..n).map(|k| c.derivative(&[n + k])).collect())
        .collect();
    if a.y_dependent {
        let nl = nonlinear_generic(m, x, y)?;
        for (row, dyb) in delta.iter_mut().zip(&dy) {
            for (i, d) in row.iter_mut().enumerate() {
                for k in 0..n {
                    *d = d.clone() - nl[k][i].clone() * dyb[k].clone();
                }
            }
        }
    }
    let hh: Matrix<S> = (0..n)
        .map(|al| (0..n).map(|be| delta[be][al].clone() - delta[al][be].clone()).collect())
        .collect();
    let hv: Matrix<S> = (0..n)
        .map(|al| (0..n).map(|be| -dy[al][be].clone()).collect())
        .collect();
    let g = metric_components(m, x, y)?;
    let (g_inv, det) = linalg::invert(&g).ok_or(GeometryError::Degenerate {
        det: 0.0,
        threshold: 0.0,
    })?;
    Ok(Blocks {
        hh_up: raise(&g_inv, &hh),
        hv_up: raise(&g_inv, &hv),
        hh,
        hv,
        volume: det.abs().sqrt(),
    })
}

fn check_dim<M: Fundamental>(m: &M) -> Result<()> {
    if m.dim() != DIM {
        return Err(GeometryError::Invalid(format!(
            "electrodynamics needs a {DIM}-dimensional structure, got {}",
            m.dim()
        )));
    }
    Ok(())
}

fn require_riemannian(a: &PotentialField, s: &FinslerStructure) -> Result<()> {
    check_dim(s)?;
    if a.y_dependent {
        return Err(GeometryError::WrongOperation(
            "potential depends on y; use the Finsler field strength".into(),
        ));
    }
    if !s.is_riemannian() {
        return Err(GeometryError::WrongOperation(
            "metric depends on y; use the Finsler pipeline".into(),
        ));
    }
    Ok(())
}

fn field_sample(a: &PotentialField, s: &FinslerStructure, x: &[f64], y: &[f64]) -> Result<FieldSample> {
    let b = blocks(a, s, x, y)?;
    Ok(FieldSample {
        x: x.to_vec(),
        y: y.to_vec(),
        f_hh: b.hh,
        f_hv: b.hv,
        f_hh_up: b.hh_up,
        f_hv_up: b.hv_up,
        metric: s.metric_tensor(x, y)?,
    })
}

/// `F_ab = dA_b/dx^a - dA_a/dx^b` with indices raised by `g(x, y_ref)`.
pub fn field_strength_riemann(
    a: &PotentialField,
    s: &FinslerStructure,
    x: &[f64],
    y_ref: &[f64],
) -> Result<FieldSample> {
    require_riemannian(a, s)?;
    field_sample(a, s, x, y_ref)
}

/// Cyclic sum `d_g F_ab + d_a F_bg + d_b F_ga` with plain partials.
pub fn first_equation_residual_riemann(a: &PotentialField, x: &[f64]) -> Result<Tensor> {
    if a.y_dependent {
        return Err(GeometryError::WrongOperation(
            "potential depends on y; use the Finsler residual".into(),
        ));
    }
    let xs = Jet::variables(x, 2);
    let ys = vec![Jet::constant(0.0); DIM];
    let comps = a.eval(&xs, &ys)?;
    // dF_ab / dx^g
    let df = |al: usize, be: usize, ga: usize| comps[be].derivative(&[ga, al]) - comps[al].derivative(&[ga, be]);
    let mut out = Vec::with_capacity(DIM * DIM * DIM);
    for al in 0..DIM {
        for be in 0..DIM {
            for ga in 0..DIM {
                out.push(df(al, be, ga) + df(be, ga, al) + df(ga, al, be));
            }
        }
    }
    Ok(Tensor {
        dim: DIM,
        rank: 3,
        components: out,
    })
}

/// `j^b = (c / 4 pi) (1/v) d_a (v F^ab)` with `v = sqrt|det g|`.
pub fn source_current_riemann(
    a: &PotentialField,
    s: &FinslerStructure,
    x: &[f64],
    y_ref: &[f64],
    c: f64,
) -> Result<CurrentSample> {
    require_riemannian(a, s)?;
    let xs = Jet::variables(x, 1);
    let ys: Vec<Jet> = y_ref.iter().map(|&v| Jet::constant(v)).collect();
    let b = blocks(a, s, &xs, &ys)?;
    let v = *b.volume.value();
    let j = (0..DIM)
        .map(|be| {
            let div: f64 = (0..DIM)
                .map(|al| (b.volume.clone() * b.hh_up[al][be].clone()).derivative(&[al]))
                .sum();
            c / (4.0 * PI) * div / v
        })
        .collect();
    Ok(CurrentSample {
        x: x.to_vec(),
        y: y_ref.to_vec(),
        j,
        convention: Convention::PaperRiemann,
        c,
    })
}

/// `F_ab = delta_a A_b - delta_b A_a`, `F_{a b-bar} = -dA_a/dy^b`, raised by
/// `g(x, y)`.
pub fn field_strength_finsler(a: &PotentialField, s: &FinslerStructure, x: &[f64], y: &[f64]) -> Result<FieldSample> {
    check_dim(s)?;
    field_sample(a, s, x, y)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Block {
    /// `F_{a-bar b} = -F_hv[b][a]`.
    BarredFirst,
    /// `F_{a b-bar}`.
    BarredSecond,
    Horizontal,
}

struct BlockField<'a, M> {
    a: &'a PotentialField,
    m: &'a M,
    block: Block,
}

impl<M: Fundamental> TensorField for BlockField<'_, M> {
    fn dim(&self) -> usize {
        DIM
    }
    fn variances(&self) -> Vec<Variance> {
        vec![Variance::Covariant; 2]
    }
    fn eval<S: Scalar>(&self, x: &[S], y: &[S]) -> Result<Vec<S>> {
        let b = blocks(self.a, self.m, x, y)?;
        let mut out = Vec::with_capacity(DIM * DIM);
        for i in 0..DIM {
            for j in 0..DIM {
                out.push(match self.block {
                    Block::BarredFirst => -b.hv[j][i].clone(),
                    Block::BarredSecond => b.hv[i][j].clone(),
                    Block::Horizontal => b.hh[i][j].clone(),
                });
            }
        }
        Ok(out)
    }
}

/// Cyclic sum `F_{a-bar b;g} + F_{g a-bar;b} + F_{b g;a-bar}` under the
/// Cartan connection: unbarred derivative slots are horizontal, barred ones
/// vertical.
pub fn first_equation_residual_finsler(
    a: &PotentialField,
    s: &FinslerStructure,
    x: &[f64],
    y: &[f64],
) -> Result<Tensor> {
    check_dim(s)?;
    let field = |block| BlockField { a, m: s, block };
    let h = DerivativeKind::Horizontal;
    let t1 = covariant_derivative(s, &field(Block::BarredFirst), x, y, h, ConnectionKind::Cartan)?;
    let t2 = covariant_derivative(s, &field(Block::BarredSecond), x, y, h, ConnectionKind::Cartan)?;
    let t3 = covariant_derivative(
        s,
        &field(Block::Horizontal),
        x,
        y,
        DerivativeKind::Vertical,
        ConnectionKind::Cartan,
    )?;
    let mut out = Vec::with_capacity(DIM * DIM * DIM);
    for al in 0..DIM {
        for be in 0..DIM {
            for ga in 0..DIM {
                out.push(t1.get(&[al, be, ga]) + t2.get(&[ga, al, be]) + t3.get(&[be, ga, al]));
            }
        }
    }
    Ok(Tensor {
        dim: DIM,
        rank: 3,
        components: out,
    })
}

/// `j^a = sign (c / 4 pi) (1/v) [delta_b (v F^ab) + d/dy^b (v F^{a b-bar})]`
/// where `sign` comes from the convention.
pub fn source_current_finsler(
    a: &PotentialField,
    s: &FinslerStructure,
    x: &[f64],
    y: &[f64],
    convention: Convention,
    c: f64,
) -> Result<CurrentSample> {
    check_dim(s)?;
    let n = DIM;
    let nl = nonlinear_connection(s, x, y)?;
    let (xs, ys) = seed_xy(x, y, 1);
    let b = blocks(a, s, &xs, &ys)?;
    let v = *b.volume.value();
    let j = (0..n)
        .map(|al| {
            let mut div = 0.0;
            for be in 0..n {
                let h = b.volume.clone() * b.hh_up[al][be].clone();
                div += h.derivative(&[be]);
                for k in 0..n {
                    div -= nl[k][be] * h.derivative(&[n + k]);
                }
                div += (b.volume.clone() * b.hv_up[al][be].clone()).derivative(&[n + be]);
            }
            convention.sign() * c / (4.0 * PI) * div / v
        })
        .collect();
    Ok(CurrentSample {
        x: x.to_vec(),
        y: y.to_vec(),
        j,
        convention,
        c,
    })
}

/// Largest differences between the Finsler and Riemannian pipelines.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CorrespondenceReport {
    pub samples: usize,
    /// `max |F_hh(Finsler) - F(Riemann)|`, lower and upper indices.
    pub field_strength: f64,
    /// `max |F_hv|`.
    pub vertical_block: f64,
    /// `max |R(Finsler)| + |R(Riemann)|` over the cyclic residuals.
    pub residual: f64,
    /// `max |j(Finsler) - j(Riemann)|` with each equation's own sign.
    pub current: f64,
    /// The same with the Finsler sign flipped to `+4 pi / c`.
    pub current_flipped_sign: f64,
}

impl CorrespondenceReport {
    pub fn max_discrepancy(&self) -> f64 {
        [self.field_strength, self.vertical_block, self.residual, self.current]
            .into_iter()
            .fold(0.0, f64::max)
    }
}

fn max_diff(a: &Matrix<f64>, b: &Matrix<f64>) -> f64 {
    a.iter()
        .flatten()
        .zip(b.iter().flatten())
        .map(|(p, q)| (p - q).abs())
        .fold(0.0, f64::max)
}

/// Compare both pipelines for a y-free potential on a y-independent metric.
pub fn correspondence_report(
    a: &PotentialField,
    s: &FinslerStructure,
    samples: &[(Vec<f64>, Vec<f64>)],
    c: f64,
) -> Result<CorrespondenceReport> {
    require_riemannian(a, s)?;
    let mut r = CorrespondenceReport {
        samples: samples.len(),
        field_strength: 0.0,
        vertical_block: 0.0,
        residual: 0.0,
        current: 0.0,
        current_flipped_sign: 0.0,
    };
    for (x, y) in samples {
        let fr = field_strength_riemann(a, s, x, y)?;
        let ff = field_strength_finsler(a, s, x, y)?;
        r.field_strength = r
            .field_strength
            .max(max_diff(&fr.f_hh, &ff.f_hh))
            .max(max_diff(&fr.f_hh_up, &ff.f_hh_up));
        r.vertical_block = r.vertical_block.max(linalg::max_abs(&ff.f_hv));
        let rr = first_equation_residual_riemann(a, x)?.max_abs();
        let rf = first_equation_residual_finsler(a, s, x, y)?.max_abs();
        r.residual = r.residual.max(rr + rf);
        let jr = source_current_riemann(a, s, x, y, c)?;
        let jf = source_current_finsler(a, s, x, y, Convention::PaperFinsler, c)?;
        let jp = source_current_finsler(a, s, x, y, Convention::PaperRiemann, c)?;
        for k in 0..DIM {
            r.current = r.current.max((jf.j[k] - jr.j[k]).abs());
            r.current_flipped_sign = r.current_flipped_sign.max((jp.j[k] - jr.j[k]).abs());
        }
    }
    Ok(r)
}

/// The potentials exercised by the test suites.
pub mod potentials {
    /// Transverse wave `A_2 = sin(2 (x0 - x1))`.
    pub const PLANE_WAVE: [&str; 4] = ["0", "0", "sin(2*(x0 - x1))", "0"];
    /// `A_0 = 1/r`.
    pub const COULOMB: [&str; 4] = ["1/sqrt(x1^2 + x2^2 + x3^2)", "0", "0", "0"];
    /// `A_1 = x0^2`.
    pub const POLYNOMIAL: [&str; 4] = ["0", "x0^2", "0", "0"];
}
