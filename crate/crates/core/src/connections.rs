//! Spray, nonlinear connection, Berwald and Cartan connections, and
//! covariant derivatives of low-rank tensor fields.
//!
//! Index layout: `nonlinear[k][i] = N^k_i`, three-index arrays are
//! `[upper][lower][lower]`, and derivative directions are always appended as
//! the last index.

use crate::error::{GeometryError, Result};
use crate::expr::{self, Expr};
use crate::linalg::{self, Matrix};
use crate::structure::{metric_components, Fundamental};
use crate::tower::{Jet, Scalar};

pub type Array3 = Vec<Matrix<f64>>;

fn zeros3(n: usize) -> Array3 {
    vec![vec![vec![0.0; n]; n]; n]
}

pub(crate) fn seed_xy<S: Scalar>(x: &[S], y: &[S], order: usize) -> (Vec<Jet<S>>, Vec<Jet<S>>) {
    let n = x.len();
    let all: Vec<S> = x.iter().chain(y).cloned().collect();
    let mut v = Jet::variables(&all, order);
    let ys = v.split_off(n);
    (v, ys)
}

fn degenerate<S: Scalar>(g: &Matrix<S>) -> GeometryError {
    GeometryError::Degenerate {
        det: 0.0,
        threshold: 1e-12 * g.iter().flatten().map(|v| v.re().abs()).fold(0.0, f64::max),
    }
}

/// `G^k = 1/4 g^{ki} (d2F/dy^i dx^j y^j - dF/dx^i)` on any scalar type.
pub fn spray_generic<M: Fundamental, S: Scalar>(m: &M, x: &[S], y: &[S]) -> Result<Vec<S>> {
    let n = m.dim();
    let (xs, ys) = seed_xy(x, y, 2);
    let f = m.fundamental(&xs, &ys)?;
    let g: Matrix<S> = (0..n)
        .map(|i| (0..n).map(|j| f.derivative(&[n + i, n + j]).scale(0.5)).collect())
        .collect();
    let (g_inv, _) = linalg::invert(&g).ok_or_else(|| degenerate(&g))?;
    let w: Vec<S> = (0..n)
        .map(|i| {
            let mut acc = -f.derivative(&[i]);
            for (j, yj) in y.iter().enumerate() {
                acc.mul_acc(&f.derivative(&[n + i, j]), yj);
            }
            acc
        })
        .collect();
    Ok(linalg::mat_vec(&g_inv, &w).into_iter().map(|v| v.scale(0.25)).collect())
}

/// `N^k_i` on any scalar type.
pub fn nonlinear_generic<M: Fundamental, S: Scalar>(m: &M, x: &[S], y: &[S]) -> Result<Matrix<S>> {
    let xs: Vec<Jet<S>> = x.iter().map(|v| Jet::constant(v.clone())).collect();
    let ys = Jet::variables(y, 1);
    let gk = spray_generic(m, &xs, &ys)?;
    Ok(gk.iter().map(|g| g.gradient(m.dim())).collect())
}

/// Geodesic spray `G^k(x, y)`.
pub fn spray<M: Fundamental>(m: &M, x: &[f64], y: &[f64]) -> Result<Vec<f64>> {
    spray_generic(m, x, y)
}

/// Spray with its first and second vertical derivatives:
/// `(G^k, N^k_i, G^k_ij)`.
pub fn spray_jet<M: Fundamental>(m: &M, x: &[f64], y: &[f64]) -> Result<(Vec<f64>, Matrix<f64>, Array3)> {
    let n = m.dim();
    let xs: Vec<Jet> = x.iter().map(|&v| Jet::constant(v)).collect();
    let ys = Jet::variables(y, 2);
    let gk = spray_generic(m, &xs, &ys)?;
    let spray = gk.iter().map(|g| *g.value()).collect();
    let nl = gk.iter().map(|g| g.gradient(n)).collect();
    let bw = gk
        .iter()
        .map(|g| {
            (0..n)
                .map(|i| (0..n).map(|j| g.derivative(&[i, j])).collect())
                .collect()
        })
        .collect();
    Ok((spray, nl, bw))
}

/// Nonlinear connection `N^k_i = dG^k/dy^i`.
pub fn nonlinear_connection<M: Fundamental>(m: &M, x: &[f64], y: &[f64]) -> Result<Matrix<f64>> {
    Ok(spray_jet(m, x, y)?.1)
}

/// Berwald coefficients `G^k_ij = d2G^k/dy^i dy^j`.
pub fn berwald_coeffs<M: Fundamental>(m: &M, x: &[f64], y: &[f64]) -> Result<Array3> {
    Ok(spray_jet(m, x, y)?.2)
}

/// Every connection quantity at one point of the slit tangent bundle.
#[derive(Debug, Clone, PartialEq)]
pub struct ConnectionSample {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub g: Matrix<f64>,
    pub g_inv: Matrix<f64>,
    /// `C_ijk`.
    pub cartan_tensor: Array3,
    /// `dg[s][i][j] = d g_ij / dx^s` at frozen `y`.
    pub dg: Array3,
    pub spray: Vec<f64>,
    pub nonlinear: Matrix<f64>,
    pub berwald: Array3,
    pub christoffel: Array3,
    /// `Gamma*^k_ij`.
    pub cartan_h: Array3,
    /// `C^k_ij`.
    pub cartan_v: Array3,
}

impl ConnectionSample {
    pub fn compute<M: Fundamental>(m: &M, x: &[f64], y: &[f64]) -> Result<Self> {
        let n = m.dim();
        let (xs, ys) = seed_xy(x, y, 3);
        let f = m.fundamental(&xs, &ys)?;
        let mut g = vec![vec![0.0; n]; n];
        let mut c = zeros3(n);
        let mut dg = zeros3(n);
        for i in 0..n {
            for j in 0..n {
                g[i][j] = 0.5 * f.derivative(&[n + i, n + j]);
                for k in 0..n {
                    c[i][j][k] = 0.25 * f.derivative(&[n + i, n + j, n + k]);
                    dg[k][i][j] = 0.5 * f.derivative(&[k, n + i, n + j]);
                }
            }
        }
        let (g_inv, _) = linalg::invert(&g).ok_or_else(|| degenerate(&g))?;
        let (spray, nonlinear, berwald) = spray_jet(m, x, y)?;

        let mut christoffel = zeros3(n);
        let mut cartan_h = zeros3(n);
        let mut cartan_v = zeros3(n);
        for k in 0..n {
            for i in 0..n {
                for j in 0..n {
                    let mut chr = 0.0;
                    let mut corr = 0.0;
                    let mut cv = 0.0;
                    for p in 0..n {
                        chr += g_inv[k][p] * (dg[i][p][j] + dg[j][i][p] - dg[p][i][j]);
                        let mut t = 0.0;
                        for s in 0..n {
                            t += c[p][i][s] * nonlinear[s][j] + c[j][p][s] * nonlinear[s][i]
                                - c[i][j][s] * nonlinear[s][p];
                        }
                        corr += g_inv[k][p] * t;
                        cv += g_inv[k][p] * c[p][i][j];
                    }
                    christoffel[k][i][j] = 0.5 * chr;
                    // g_{ij.s} = 2 C_ijs, so the 1/2 prefactor cancels.
                    cartan_h[k][i][j] = 0.5 * chr - corr;
                    cartan_v[k][i][j] = cv;
                }
            }
        }
        Ok(ConnectionSample {
            x: x.to_vec(),
            y: y.to_vec(),
            g,
            g_inv,
            cartan_tensor: c,
            dg,
            spray,
            nonlinear,
            berwald,
            christoffel,
            cartan_h,
            cartan_v,
        })
    }

    pub fn dim(&self) -> usize {
        self.x.len()
    }

    /// Magnitude used to make identity residuals relative.
    pub fn scale(&self) -> f64 {
        let m = self
            .spray
            .iter()
            .chain(self.nonlinear.iter().flatten())
            .chain(self.berwald.iter().flatten().flatten())
            .map(|v| v.abs())
            .fold(0.0, f64::max);
        m.max(1.0)
    }

    /// `max |N^k_i - G^k_ij y^j|`.
    pub fn berwald_contraction_residual(&self) -> f64 {
        let n = self.dim();
        let mut worst = 0.0f64;
        for k in 0..n {
            for i in 0..n {
                let v: f64 = (0..n).map(|j| self.berwald[k][i][j] * self.y[j]).sum();
                worst = worst.max((v - self.nonlinear[k][i]).abs());
            }
        }
        worst
    }

    /// `max |G^k_ij y^i y^j - 2 G^k|`.
    pub fn spray_contraction_residual(&self) -> f64 {
        let n = self.dim();
        (0..n)
            .map(|k| (linalg::bilinear(&self.berwald[k], &self.y, &self.y) - 2.0 * self.spray[k]).abs())
            .fold(0.0, f64::max)
    }

    /// `max |N^k_i - Gamma*^k_ij y^j|`.
    pub fn cartan_condition_residual(&self) -> f64 {
        let n = self.dim();
        let mut worst = 0.0f64;
        for k in 0..n {
            for i in 0..n {
                let v: f64 = (0..n).map(|j| self.cartan_h[k][i][j] * self.y[j]).sum();
                worst = worst.max((v - self.nonlinear[k][i]).abs());
            }
        }
        worst
    }

    /// Largest lower-index asymmetry over the four coefficient arrays.
    pub fn lower_symmetry_residual(&self) -> f64 {
        let n = self.dim();
        let mut worst = 0.0f64;
        for a in [&self.berwald, &self.christoffel, &self.cartan_h, &self.cartan_v] {
            for k in 0..n {
                for i in 0..n {
                    for j in 0..n {
                        worst = worst.max((a[k][i][j] - a[k][j][i]).abs());
                    }
                }
            }
        }
        worst
    }
}

pub fn cartan_coeffs<M: Fundamental>(m: &M, x: &[f64], y: &[f64]) -> Result<(Array3, Array3)> {
    let s = ConnectionSample::compute(m, x, y)?;
    Ok((s.cartan_h, s.cartan_v))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Variance {
    Covariant,
    Contravariant,
}

/// A tensor field of rank 0 to 2 on the slit tangent bundle. Components are
/// stored row-major.
pub trait TensorField {
    fn dim(&self) -> usize;
    fn variances(&self) -> Vec<Variance>;
    fn eval<S: Scalar>(&self, x: &[S], y: &[S]) -> Result<Vec<S>>;

    fn rank(&self) -> usize {
        self.variances().len()
    }
}

/// The fundamental function as a scalar field.
pub struct FundamentalField<'a, M>(pub &'a M);

impl<M: Fundamental> TensorField for FundamentalField<'_, M> {
    fn dim(&self) -> usize {
        self.0.dim()
    }
    fn variances(&self) -> Vec<Variance> {
        Vec::new()
    }
    fn eval<S: Scalar>(&self, x: &[S], y: &[S]) -> Result<Vec<S>> {
        Ok(vec![self.0.fundamental(x, y)?])
    }
}

/// `g_ij(x, y)` as a covariant rank-2 field.
pub struct MetricField<'a, M>(pub &'a M);

impl<M: Fundamental> TensorField for MetricField<'_, M> {
    fn dim(&self) -> usize {
        self.0.dim()
    }
    fn variances(&self) -> Vec<Variance> {
        vec![Variance::Covariant; 2]
    }
    fn eval<S: Scalar>(&self, x: &[S], y: &[S]) -> Result<Vec<S>> {
        Ok(metric_components(self.0, x, y)?.into_iter().flatten().collect())
    }
}

/// A field given component-wise by expressions in `x` and `y`.
#[derive(Debug, Clone)]
pub struct ExprField {
    dim: usize,
    variances: Vec<Variance>,
    components: Vec<Expr>,
}

impl ExprField {
    pub fn parse(texts: &[&str], dim: usize, variances: Vec<Variance>) -> Result<Self> {
        if variances.len() > 2 {
            return Err(GeometryError::UnsupportedRank(variances.len()));
        }
        if texts.len() != dim.pow(variances.len() as u32) {
            return Err(GeometryError::Invalid(format!(
                "{} components for a rank-{} field in dimension {dim}",
                texts.len(),
                variances.len()
            )));
        }
        let components = texts
            .iter()
            .map(|t| expr::parse(t, dim).map_err(|d| GeometryError::Invalid(d.to_string())))
            .collect::<Result<_>>()?;
        Ok(ExprField {
            dim,
            variances,
            components,
        })
    }
}

impl TensorField for ExprField {
    fn dim(&self) -> usize {
        self.dim
    }
    fn variances(&self) -> Vec<Variance> {
        self.variances.clone()
    }
    fn eval<S: Scalar>(&self, x: &[S], y: &[S]) -> Result<Vec<S>> {
        self.components.iter().map(|e| Ok(e.eval(x, y)?)).collect()
    }
}

/// Values and first partials of a field: `(T, dT/dx[c][i], dT/dy[c][i])`.
pub fn field_partials<T: TensorField>(t: &T, x: &[f64], y: &[f64]) -> Result<(Vec<f64>, Matrix<f64>, Matrix<f64>)> {
    let n = t.dim();
    let (xs, ys) = seed_xy(x, y, 1);
    let comps = t.eval(&xs, &ys)?;
    let vals = comps.iter().map(|c| *c.value()).collect();
    let dx = comps
        .iter()
        .map(|c| (0..n).map(|i| c.derivative(&[i])).collect())
        .collect();
    let dy = comps
        .iter()
        .map(|c| (0..n).map(|i| c.derivative(&[n + i])).collect())
        .collect();
    Ok((vals, dx, dy))
}

/// `delta_i T = dT/dx^i - N^k_i dT/dy^k`, indexed `[component][i]`.
pub fn horizontal_derivative<M: Fundamental, T: TensorField>(
    m: &M,
    t: &T,
    x: &[f64],
    y: &[f64],
) -> Result<Matrix<f64>> {
    let nl = nonlinear_connection(m, x, y)?;
    let (_, dx, dy) = field_partials(t, x, y)?;
    Ok(delta(&nl, &dx, &dy))
}

fn delta(nl: &Matrix<f64>, dx: &Matrix<f64>, dy: &Matrix<f64>) -> Matrix<f64> {
    let n = nl.len();
    dx.iter()
        .zip(dy)
        .map(|(gx, gy)| {
            (0..n)
                .map(|i| gx[i] - (0..n).map(|k| nl[k][i] * gy[k]).sum::<f64>())
                .collect()
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DerivativeKind {
    Horizontal,
    Vertical,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConnectionKind {
    /// `Gamma*^k_ij` horizontally, `C^k_ij` vertically.
    Cartan,
    /// `G^k_ij` horizontally, no vertical coefficients.
    Berwald,
}

/// Dense tensor, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub dim: usize,
    pub rank: usize,
    pub components: Vec<f64>,
}

impl Tensor {
    pub fn get(&self, index: &[usize]) -> f64 {
        assert_eq!(index.len(), self.rank);
        self.components[index.iter().fold(0, |acc, &i| acc * self.dim + i)]
    }

    pub fn max_abs(&self) -> f64 {
        self.components.iter().map(|v| v.abs()).fold(0.0, f64::max)
    }
}

/// Covariant derivative of `t`, with the derivative direction as the last
/// index of the result.
pub fn covariant_derivative<M: Fundamental, T: TensorField>(
    m: &M,
    t: &T,
    x: &[f64],
    y: &[f64],
    kind: DerivativeKind,
    connection: ConnectionKind,
) -> Result<Tensor> {
    let variances = t.variances();
    let rank = variances.len();
    if rank > 2 {
        return Err(GeometryError::UnsupportedRank(rank));
    }
    let n = m.dim();
    let cs = ConnectionSample::compute(m, x, y)?;
    let (vals, dx, dy) = field_partials(t, x, y)?;
    let (base, coeff) = match kind {
        DerivativeKind::Horizontal => (
            delta(&cs.nonlinear, &dx, &dy),
            match connection {
                ConnectionKind::Cartan => cs.cartan_h,
                ConnectionKind::Berwald => cs.berwald,
            },
        ),
        DerivativeKind::Vertical => (
            dy,
            match connection {
                ConnectionKind::Cartan => cs.cartan_v,
                ConnectionKind::Berwald => zeros3(n),
            },
        ),
    };

    let stride = |slot: usize| n.pow((rank - 1 - slot) as u32);
    let mut out = vec![0.0; vals.len() * n];
    for (c, row) in base.iter().enumerate() {
        for k in 0..n {
            let mut v = row[k];
            for (slot, var) in variances.iter().enumerate() {
                let st = stride(slot);
                let idx = (c / st) % n;
                for s in 0..n {
                    let other = c - idx * st + s * st;
                    match var {
                        Variance::Covariant => v -= coeff[s][idx][k] * vals[other],
                        Variance::Contravariant => v += coeff[idx][s][k] * vals[other],
                    }
                }
            }
            out[c * n + k] = v;
        }
    }
    Ok(Tensor {
        dim: n,
        rank: rank + 1,
        components: out,
    })
}

/// Coordinate change `x' = phi(x)` given by x-only expressions.
#[derive(Debug, Clone)]
pub struct ChartMap {
    components: Vec<Expr>,
}

const MIN_JACOBIAN: f64 = 1e-10;

impl ChartMap {
    pub fn parse(texts: &[&str]) -> Result<Self> {
        let n = texts.len();
        let components: Vec<Expr> = texts
            .iter()
            .map(|t| expr::parse(t, n).map_err(|d| GeometryError::Invalid(format!("{t:?}: {d}"))))
            .collect::<Result<_>>()?;
        if components.iter().any(Expr::depends_on_y) {
            return Err(GeometryError::Invalid("chart maps depend on x only".into()));
        }
        Ok(ChartMap { components })
    }

    pub fn identity(n: usize) -> Self {
        let names: Vec<String> = (0..n).map(|i| format!("x{i}")).collect();
        let refs: Vec<&str> = names.iter().map(String::as_str).collect();
        Self::parse(&refs).expect("identity chart")
    }

    /// `x' = x + q(x) / 2` with `q = (0.2 x0 x1, 0.1 x0^2)` on the plane.
    pub fn shipped_quadratic() -> Self {
        Self::parse(&["x0 + 0.1*x0*x1", "x1 + 0.05*x0^2"]).expect("shipped chart")
    }

    pub fn dim(&self) -> usize {
        self.components.len()
    }

    pub fn forward<S: Scalar>(&self, x: &[S]) -> Result<Vec<S>> {
        self.components.iter().map(|e| Ok(e.eval(x, &[])?)).collect()
    }

    /// `J[k][i] = d phi^k / dx^i`.
    pub fn jacobian<S: Scalar>(&self, x: &[S]) -> Result<Matrix<S>> {
        let n = self.dim();
        let xs = Jet::variables(x, 1);
        Ok(self.forward(&xs)?.iter().map(|p| p.gradient(n)).collect())
    }

    /// `H[k][i][j] = d2 phi^k / dx^i dx^j`.
    pub fn hessian(&self, x: &[f64]) -> Result<Array3> {
        let n = self.dim();
        let xs = Jet::variables(x, 2);
        Ok(self
            .forward(&xs)?
            .iter()
            .map(|p| {
                (0..n)
                    .map(|i| (0..n).map(|j| p.derivative(&[i, j])).collect())
                    .collect()
            })
            .collect())
    }

    fn checked_jacobian_inverse(&self, x: &[f64]) -> Result<Matrix<f64>> {
        let j = self.jacobian(x)?;
        match linalg::invert(&j) {
            Some((inv, det)) if det.abs() > MIN_JACOBIAN => Ok(inv),
            Some((_, det)) => Err(GeometryError::SingularChart(det)),
            None => Err(GeometryError::SingularChart(0.0)),
        }
    }

    /// Solve `phi(x) = target` by Newton iteration from `guess`.
    pub fn inverse(&self, target: &[f64], guess: &[f64]) -> Result<Vec<f64>> {
        let mut x = guess.to_vec();
        for _ in 0..50 {
            let r: Vec<f64> = self.forward(&x)?.iter().zip(target).map(|(a, b)| a - b).collect();
            let step = linalg::mat_vec(&self.checked_jacobian_inverse(&x)?, &r);
            let mut moved = 0.0f64;
            for (xi, si) in x.iter_mut().zip(&step) {
                *xi -= si;
                moved = moved.max(si.abs());
            }
            if moved <= 1e-15 * (1.0 + x.iter().map(|v| v.abs()).fold(0.0, f64::max)) {
                return Ok(x);
            }
        }
        Err(GeometryError::Invalid("chart inverse did not converge".into()))
    }
}

/// A structure expressed in the coordinates of a chart map:
/// `F'(x', y') = F(psi(x'), J(psi(x'))^-1 y')` with `psi` the inverse chart.
pub struct PushedStructure<'a, M> {
    base: &'a M,
    chart: &'a ChartMap,
    /// Starting point for the Newton inverse.
    hint: Vec<f64>,
}

/// Chord iterations applied on top of the converged value; each one gains
/// at least one order of Taylor accuracy.
const CHORD_STEPS: usize = 8;

impl<'a, M: Fundamental> PushedStructure<'a, M> {
    pub fn new(base: &'a M, chart: &'a ChartMap, hint: &[f64]) -> Self {
        PushedStructure {
            base,
            chart,
            hint: hint.to_vec(),
        }
    }
}

impl<M: Fundamental> Fundamental for PushedStructure<'_, M> {
    fn dim(&self) -> usize {
        self.base.dim()
    }

    fn fundamental<S: Scalar>(&self, xp: &[S], yp: &[S]) -> Result<S> {
        let target: Vec<f64> = xp.iter().map(Scalar::re).collect();
        let x0 = self.chart.inverse(&target, &self.hint)?;
        let j0_inv = self.chart.checked_jacobian_inverse(&x0)?;
        let j0_inv: Matrix<S> = j0_inv.iter().map(|r| r.iter().map(|&v| S::cst(v)).collect()).collect();
        let mut x: Vec<S> = x0.iter().map(|&v| S::cst(v)).collect();
        for _ in 0..CHORD_STEPS {
            let r: Vec<S> = self
                .chart
                .forward(&x)?
                .into_iter()
                .zip(xp)
                .map(|(a, b)| a - b.clone())
                .collect();
            let step = linalg::mat_vec(&j0_inv, &r);
            x = x.into_iter().zip(step).map(|(a, s)| a - s).collect();
        }
        let j = self.chart.jacobian(&x)?;
        let y = linalg::solve(&j, yp).ok_or(GeometryError::SingularChart(0.0))?;
        self.base.fundamental(&x, &y)
    }
}

/// Max componentwise residual of `G'^k = J^k_i G^i - 1/2 H^k_ij y^i y^j`,
/// with `G'` computed directly from the pushed structure.
pub fn transform_spray_check<M: Fundamental>(m: &M, chart: &ChartMap, x: &[f64], y: &[f64]) -> Result<f64> {
    if chart.dim() != m.dim() {
        return Err(GeometryError::Invalid("chart and structure dimensions differ".into()));
    }
    chart.checked_jacobian_inverse(x)?;
    let xp = chart.forward(x)?;
    let j = chart.jacobian(x)?;
    let h = chart.hessian(x)?;
    let yp = linalg::mat_vec(&j, y);
    let g = spray(m, x, y)?;
    let pushed = PushedStructure::new(m, chart, x);
    let gp = spray(&pushed, &xp, &yp)?;
    let jg = linalg::mat_vec(&j, &g);
    Ok((0..m.dim())
        .map(|k| {
            let rhs = jg[k] - 0.5 * linalg::bilinear(&h[k], y, y);
            (gp[k] - rhs).abs()
        })
        .fold(0.0, f64::max))
}
