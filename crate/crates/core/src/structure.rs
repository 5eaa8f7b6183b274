//! Finsler structures: the fundamental function `F(x, y)`, its metric and
//! Cartan tensors, the indicatrix, and sampled validation of the defining
//! identities.
//!
//! Throughout, `g_ij = 1/2 d^2 F / dy^i dy^j`, which makes `g_ij y^i y^j = F`
//! hold for a degree-2 homogeneous `F`, and `C_ijk = 1/2 dg_ij/dy^k`.

use serde::{Deserialize, Serialize};

use crate::checks::{rel, Check, Tally};
use crate::error::{GeometryError, Result};
use crate::expr::{self, Expr};
use crate::linalg::{self, Matrix};
use crate::sampling::{Sample, SamplingPlan};
use crate::tower::{Jet, Scalar};

/// Relative radius of the excluded neighbourhood of the zero section.
pub const SLIT_GUARD: f64 = 1e-8;

/// Default `|eta(y, y)| >= guard * |y|^2` bound for perturbed quadratic forms.
pub const DEFAULT_NULL_GUARD: f64 = 0.25;

/// Largest supported dimension; jet bases grow combinatorially with it.
pub const MAX_DIMENSION: usize = 16;

fn check_dimension(n: usize) -> Result<()> {
    if (2..=MAX_DIMENSION).contains(&n) {
        Ok(())
    } else {
        Err(GeometryError::Invalid(format!(
            "dimension {n} outside 2..={MAX_DIMENSION}"
        )))
    }
}

const DEGENERACY_FACTOR: f64 = 1e-12;
const MAX_CONDITION: f64 = 1e12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Kind {
    /// `F = L^2` with `L > 0` off the zero section and positive-definite `g`.
    Positive,
    /// Sign-indefinite, nondegenerate `F` (pseudo-Finsler).
    Alternating,
}

/// How a structure was built.
#[derive(Debug, Clone)]
pub enum Provenance {
    QuadraticConstant {
        matrix: Matrix<f64>,
    },
    /// `F = a_ij(x) y^i y^j`; only the upper triangle of `a` is read.
    Riemannian {
        a: Vec<Vec<Expr>>,
    },
    /// `L = sqrt(a_ij y^i y^j) + b_i y^i`, `F = L^2`.
    Randers {
        a: Vec<Vec<Expr>>,
        b: Vec<Expr>,
    },
    /// `F = eta(y, y) + epsilon (y^d)^4 / eta(y, y)`.
    PerturbedQuadratic {
        matrix: Matrix<f64>,
        epsilon: f64,
        direction: usize,
        null_guard: f64,
    },
    Expression {
        f: Expr,
    },
}

impl Provenance {
    pub fn label(&self) -> &'static str {
        match self {
            Provenance::QuadraticConstant { .. } => "quadratic-constant",
            Provenance::Riemannian { .. } => "riemannian",
            Provenance::Randers { .. } => "randers",
            Provenance::PerturbedQuadratic { .. } => "perturbed-quadratic",
            Provenance::Expression { .. } => "expression",
        }
    }
}

/// Anything with a degree-2 fundamental function that can be evaluated on
/// any [`Scalar`].
pub trait Fundamental: Sync {
    fn dim(&self) -> usize;
    fn fundamental<S: Scalar>(&self, x: &[S], y: &[S]) -> Result<S>;
}

#[derive(Debug, Clone)]
pub struct FinslerStructure {
    name: String,
    dim: usize,
    kind: Kind,
    provenance: Provenance,
    /// x-only expression that must be strictly positive.
    domain: Option<Expr>,
    sample_box: Vec<(f64, f64)>,
    reference: Sample,
    signature: Option<(usize, usize)>,
}

fn parse_x_field(text: &str, dim: usize) -> Result<Expr> {
    let e = expr::parse(text, dim).map_err(|d| GeometryError::Invalid(format!("{text:?}: {d}")))?;
    if e.depends_on_y() {
        return Err(GeometryError::Invalid(format!(
            "field component {text:?} must depend on x only"
        )));
    }
    Ok(e)
}

fn parse_matrix_field<R: AsRef<[T]>, T: AsRef<str>>(rows: &[R], dim: usize) -> Result<Vec<Vec<Expr>>> {
    if rows.len() != dim || rows.iter().any(|r| r.as_ref().len() != dim) {
        return Err(GeometryError::Invalid(format!("a-field must be {dim}x{dim}")));
    }
    let a: Vec<Vec<Expr>> = rows
        .iter()
        .map(|r| r.as_ref().iter().map(|t| parse_x_field(t.as_ref(), dim)).collect())
        .collect::<Result<_>>()?;
    for i in 0..dim {
        for j in 0..i {
            if a[i][j] != a[j][i] {
                return Err(GeometryError::Invalid(format!(
                    "a-field is not symmetric at ({i}, {j})"
                )));
            }
        }
    }
    Ok(a)
}

fn check_constant_matrix(m: &Matrix<f64>) -> Result<usize> {
    let n = m.len();
    check_dimension(n)?;
    if m.iter().any(|r| r.len() != n) {
        return Err(GeometryError::Invalid("matrix must be square".into()));
    }
    for i in 0..n {
        for j in 0..i {
            if m[i][j] != m[j][i] {
                return Err(GeometryError::Invalid(format!("matrix not symmetric at ({i}, {j})")));
            }
        }
    }
    if m.iter().flatten().any(|v| !v.is_finite()) {
        return Err(GeometryError::Invalid("matrix has non-finite entries".into()));
    }
    Ok(n)
}

fn minkowski_matrix() -> Matrix<f64> {
    let mut m = vec![vec![0.0; 4]; 4];
    m[0][0] = 1.0;
    for (i, row) in m.iter_mut().enumerate().skip(1) {
        row[i] = -1.0;
    }
    m
}

fn quad_const<S: Scalar>(m: &Matrix<f64>, y: &[S]) -> S {
    let mut acc = S::zero();
    for (i, row) in m.iter().enumerate() {
        for (j, &mij) in row.iter().enumerate() {
            if mij != 0.0 {
                acc.mul_acc(&y[i].scale(mij), &y[j]);
            }
        }
    }
    acc
}

fn eval_matrix_field<S: Scalar>(a: &[Vec<Expr>], x: &[S]) -> Result<Matrix<S>> {
    let n = a.len();
    let mut out = vec![vec![S::zero(); n]; n];
    for i in 0..n {
        for j in i..n {
            let v = a[i][j].eval::<S>(x, &[])?;
            out[j][i] = v.clone();
            out[i][j] = v;
        }
    }
    Ok(out)
}

fn eval_vector_field<S: Scalar>(b: &[Expr], x: &[S]) -> Result<Vec<S>> {
    b.iter().map(|e| Ok(e.eval::<S>(x, &[])?)).collect()
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|a| a * a).sum::<f64>().sqrt()
}

impl FinslerStructure {
    fn assemble(name: &str, dim: usize, kind: Kind, provenance: Provenance) -> Self {
        let sample_box = vec![(-1.0, 1.0); dim];
        let mut y = vec![0.0; dim];
        y[0] = 1.0;
        let mut s = FinslerStructure {
            name: name.to_string(),
            dim,
            kind,
            provenance,
            domain: None,
            sample_box,
            reference: Sample { x: vec![0.0; dim], y },
            signature: None,
        };
        s.refresh_signature();
        s
    }

    fn refresh_signature(&mut self) {
        self.signature = None;
        let (x, y) = (self.reference.x.clone(), self.reference.y.clone());
        self.signature = self.metric_tensor(&x, &y).ok().map(|m| m.signature);
    }

    /// Constant quadratic form `F = m_ij y^i y^j`.
    pub fn quadratic(name: &str, matrix: Matrix<f64>, kind: Kind) -> Result<Self> {
        let dim = check_constant_matrix(&matrix)?;
        Ok(Self::assemble(
            name,
            dim,
            kind,
            Provenance::QuadraticConstant { matrix },
        ))
    }

    pub fn euclidean(dim: usize) -> Result<Self> {
        check_dimension(dim)?;
        let m = (0..dim)
            .map(|i| (0..dim).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
            .collect();
        Self::quadratic("euclidean", m, Kind::Positive)
    }

    /// `diag(1, -1, -1, -1)`.
    pub fn minkowski() -> Self {
        Self::quadratic("minkowski", minkowski_matrix(), Kind::Alternating).expect("minkowski matrix is valid")
    }

    /// Riemannian structure with an x-dependent metric given as expressions.
    pub fn riemannian<R: AsRef<[T]>, T: AsRef<str>>(name: &str, a: &[R], kind: Kind) -> Result<Self> {
        let dim = a.len();
        check_dimension(dim)?;
        let a = parse_matrix_field(a, dim)?;
        Ok(Self::assemble(name, dim, kind, Provenance::Riemannian { a }))
    }

    /// Upper half-plane `F = (y0^2 + y1^2) / x1^2`, domain `x1 > 0`.
    pub fn poincare_half_plane() -> Self {
        let s = Self::riemannian("poincare", &[["1/x1^2", "0"], ["0", "1/x1^2"]], Kind::Positive)
            .expect("half-plane metric is valid");
        s.with_domain("x1")
            .expect("domain expression is valid")
            .with_box(vec![(-1.0, 1.0), (0.5, 2.0)])
            .with_reference(&[0.0, 1.0], &[1.0, 0.0])
    }

    pub fn randers<R: AsRef<[T]>, T: AsRef<str>>(name: &str, a: &[R], b: &[&str]) -> Result<Self> {
        let dim = a.len();
        check_dimension(dim)?;
        if b.len() != dim {
            return Err(GeometryError::Invalid(
                "randers needs an n x n a-field and an n-vector b-field".into(),
            ));
        }
        let a = parse_matrix_field(a, dim)?;
        let b = b.iter().map(|t| parse_x_field(t, dim)).collect::<Result<_>>()?;
        Ok(Self::assemble(name, dim, Kind::Positive, Provenance::Randers { a, b }))
    }

    /// Randers structure with Euclidean `a` and constant `b`.
    pub fn randers_constant(b: &[f64]) -> Result<Self> {
        let n = b.len();
        check_dimension(n)?;
        let a: Vec<Vec<String>> = (0..n)
            .map(|i| (0..n).map(|j| if i == j { "1".into() } else { "0".into() }).collect())
            .collect();
        let b_text: Vec<String> = b.iter().map(|v| format!("{v:?}")).collect();
        let b_ref: Vec<&str> = b_text.iter().map(String::as_str).collect();
        Self::randers("randers-constant", &a, &b_ref)
    }

    /// The shipped x-dependent Randers example on the plane:
    /// `a = (1 + x0^2 / 10) I`, `b = (0.2 sin x1, 0.15 cos x0)`.
    pub fn randers_example() -> Self {
        Self::randers(
            "randers",
            &[["1 + 0.1*x0^2", "0"], ["0", "1 + 0.1*x0^2"]],
            &["0.2*sin(x1)", "0.15*cos(x0)"],
        )
        .expect("shipped randers example is valid")
    }

    pub fn perturbed_quadratic(
        name: &str,
        matrix: Matrix<f64>,
        epsilon: f64,
        direction: usize,
        kind: Kind,
    ) -> Result<Self> {
        let dim = check_constant_matrix(&matrix)?;
        if direction >= dim {
            return Err(GeometryError::Invalid(format!("direction {direction} out of range")));
        }
        if !epsilon.is_finite() {
            return Err(GeometryError::Invalid("epsilon must be finite".into()));
        }
        Ok(Self::assemble(
            name,
            dim,
            kind,
            Provenance::PerturbedQuadratic {
                matrix,
                epsilon,
                direction,
                null_guard: DEFAULT_NULL_GUARD,
            },
        ))
    }

    /// `F = eta(y, y) + epsilon (y^1)^4 / eta(y, y)` with `eta = diag(1, -1, -1, -1)`.
    pub fn perturbed_minkowski(epsilon: f64) -> Self {
        Self::perturbed_quadratic("perturbed-minkowski", minkowski_matrix(), epsilon, 1, Kind::Alternating)
            .expect("perturbed minkowski is valid")
    }

    pub fn from_expression(text: &str, dim: usize, kind: Kind) -> Result<Self> {
        check_dimension(dim)?;
        let f = expr::parse(text, dim).map_err(|d| GeometryError::Invalid(format!("{text:?}: {d}")))?;
        Ok(Self::assemble("expression", dim, kind, Provenance::Expression { f }))
    }

    /// Restrict the domain to points where the x-only expression is positive.
    pub fn with_domain(mut self, text: &str) -> Result<Self> {
        self.domain = Some(parse_x_field(text, self.dim)?);
        self.refresh_signature();
        Ok(self)
    }

    pub fn with_box(mut self, sample_box: Vec<(f64, f64)>) -> Self {
        assert_eq!(sample_box.len(), self.dim, "sample box dimension");
        self.reference.x = sample_box.iter().map(|(lo, hi)| 0.5 * (lo + hi)).collect();
        self.sample_box = sample_box;
        self.refresh_signature();
        self
    }

    /// Point at which the signature is determined.
    pub fn with_reference(mut self, x: &[f64], y: &[f64]) -> Self {
        self.reference = Sample {
            x: x.to_vec(),
            y: y.to_vec(),
        };
        self.refresh_signature();
        self
    }

    pub fn with_name(mut self, name: &str) -> Self {
        self.name = name.to_string();
        self
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn kind(&self) -> Kind {
        self.kind
    }

    pub fn provenance(&self) -> &Provenance {
        &self.provenance
    }

    pub fn sample_box(&self) -> &[(f64, f64)] {
        &self.sample_box
    }

    pub fn reference(&self) -> &Sample {
        &self.reference
    }

    /// Signature `(p, q)` fixed at the reference sample, if the metric there
    /// is nondegenerate.
    pub fn signature(&self) -> Option<(usize, usize)> {
        self.signature
    }

    /// True when `g` is independent of `y` by construction.
    pub fn is_riemannian(&self) -> bool {
        matches!(
            self.provenance,
            Provenance::QuadraticConstant { .. } | Provenance::Riemannian { .. }
        )
    }

    /// True when no ingredient depends on `x`.
    pub fn is_x_independent(&self) -> bool {
        let no_x = |e: &Expr| e.free_vars().iter().all(|v| !matches!(v, expr::Var::X(_)));
        let domain_free = self.domain.as_ref().is_none_or(no_x);
        domain_free
            && match &self.provenance {
                Provenance::QuadraticConstant { .. } | Provenance::PerturbedQuadratic { .. } => true,
                Provenance::Riemannian { a } => a.iter().flatten().all(no_x),
                Provenance::Randers { a, b } => a.iter().flatten().chain(b).all(no_x),
                Provenance::Expression { f } => no_x(f),
            }
    }

    fn check_point(&self, x: &[f64], y: &[f64]) -> Result<()> {
        if x.len() != self.dim || y.len() != self.dim {
            return Err(GeometryError::Invalid(format!(
                "expected {}-dimensional x and y, got {} and {}",
                self.dim,
                x.len(),
                y.len()
            )));
        }
        if x.iter().chain(y).any(|v| !v.is_finite()) {
            return Err(GeometryError::Domain("non-finite coordinates".into()));
        }
        let guard = SLIT_GUARD * (1.0 + norm(x));
        if norm(y) < guard {
            return Err(GeometryError::Domain(format!(
                "|y| = {:e} inside the slit guard {guard:e}",
                norm(y)
            )));
        }
        if let Some(d) = &self.domain {
            let v = d.eval::<f64>(x, &[])?;
            if !(v > 0.0) {
                return Err(GeometryError::Domain(format!("domain guard {d} = {v} is not positive")));
            }
        }
        Ok(())
    }

    fn randers_bound(&self, a: &[Vec<Expr>], b: &[Expr], x: &[f64]) -> Result<()> {
        let am = eval_matrix_field::<f64>(a, x)?;
        let bv = eval_vector_field::<f64>(b, x)?;
        let ainv_b = linalg::solve(&am, &bv).ok_or_else(|| GeometryError::Domain("singular a-field".into()))?;
        let len2: f64 = bv.iter().zip(&ainv_b).map(|(p, q)| p * q).sum();
        if !(len2 < 1.0) {
            return Err(GeometryError::Domain(format!(
                "randers b-field has a-length^2 {len2} >= 1"
            )));
        }
        Ok(())
    }

    /// `F(x, y)`.
    pub fn eval_f(&self, x: &[f64], y: &[f64]) -> Result<f64> {
        self.fundamental(x, y)
    }

    /// `L(x, y) = sqrt(F)`, positive-definite structures only.
    pub fn eval_l(&self, x: &[f64], y: &[f64]) -> Result<f64> {
        if self.kind != Kind::Positive {
            return Err(GeometryError::UnsupportedKind("alternating"));
        }
        if let Provenance::Randers { a, b } = &self.provenance {
            self.check_point(x, y)?;
            self.randers_bound(a, b, x)?;
            return randers_l(a, b, x, y);
        }
        let f = self.fundamental(x, y)?;
        if !(f > 0.0) {
            return Err(GeometryError::Domain(format!("F = {f} is not positive")));
        }
        Ok(f.sqrt())
    }

    /// Metric tensor, inverse, determinant and signature at `(x, y)`.
    pub fn metric_tensor(&self, x: &[f64], y: &[f64]) -> Result<MetricSample> {
        let g = metric_components(self, x, y)?;
        let n = self.dim;
        let scale = linalg::max_abs(&g);
        let (g_inv, det) = linalg::invert(&g).ok_or(GeometryError::Degenerate {
            det: 0.0,
            threshold: DEGENERACY_FACTOR * scale.powi(n as i32),
        })?;
        let threshold = DEGENERACY_FACTOR * scale.powi(n as i32);
        if !(det.abs() >= threshold) || scale == 0.0 {
            return Err(GeometryError::Degenerate { det, threshold });
        }
        let condition = linalg::condition_number(&g);
        if !(condition <= MAX_CONDITION) {
            return Err(GeometryError::IllConditioned { condition });
        }
        Ok(MetricSample {
            x: x.to_vec(),
            y: y.to_vec(),
            signature: linalg::signature(&g),
            g,
            g_inv,
            det_g: det,
            volume_factor: det.abs().sqrt(),
        })
    }

    /// Cartan tensor `C_ijk = 1/4 d^3 F / dy^i dy^j dy^k`.
    pub fn cartan_tensor(&self, x: &[f64], y: &[f64]) -> Result<CartanTensorSample> {
        let xs: Vec<Jet> = x.iter().map(|&v| Jet::constant(v)).collect();
        let ys = Jet::variables(y, 3);
        let f = self.fundamental(&xs, &ys)?;
        let n = self.dim;
        let mut c = vec![vec![vec![0.0; n]; n]; n];
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    c[i][j][k] = 0.25 * f.derivative(&[i, j, k]);
                }
            }
        }
        Ok(CartanTensorSample {
            x: x.to_vec(),
            y: y.to_vec(),
            c,
        })
    }

    /// Radius `r` with `L(x, r u) = 1` along the unit direction `u`.
    pub fn indicatrix_radius(&self, x: &[f64], u: &[f64]) -> Result<f64> {
        if self.kind != Kind::Positive {
            return Err(GeometryError::UnsupportedKind("alternating"));
        }
        if (norm(u) - 1.0).abs() > 1e-9 {
            return Err(GeometryError::Invalid(format!("direction has norm {} != 1", norm(u))));
        }
        Ok(1.0 / self.eval_l(x, u)?)
    }

    /// Sampling plan over this structure's default box.
    pub fn sampling_plan(&self, count: usize, seed: u64) -> SamplingPlan {
        SamplingPlan::new(count, seed, self.sample_box.clone())
    }

    /// Draw samples that lie in the smoothness domain.
    pub fn draw_samples(&self, plan: &SamplingPlan) -> (Vec<Sample>, usize) {
        plan.draw(|s| self.eval_f(&s.x, &s.y).is_ok())
    }

    /// Check the defining identities on sampled points.
    pub fn validate(&self, plan: &SamplingPlan, tol: &ValidationTolerances) -> ValidationReport {
        let (samples, mut skipped) = self.draw_samples(plan);
        let positive = self.kind == Kind::Positive;
        let lambdas: &[f64] = if positive { &[0.5, 2.0] } else { &[-1.0, 0.5, 2.0] };

        let mut homogeneity = Tally::new("homogeneity", tol.identity);
        let mut positivity = Tally::new("positivity", 0.0);
        let mut euler_first = Tally::new("euler_first", tol.identity);
        let mut euler_second = Tally::new("euler_second", tol.identity);
        let mut degree_zero = Tally::new("metric_degree_zero", tol.identity);
        let mut metric_scaling = Tally::new("metric_scaling", tol.exact);
        let mut nondegeneracy = Tally::new("nondegeneracy", 0.0);
        let mut signature = Tally::new("signature", 0.0);
        let mut symmetry = Tally::new("cartan_symmetry", tol.symmetry);

        let mut used = 0;
        for s in &samples {
            let (x, y) = (&s.x[..], &s.y[..]);
            let Ok(f) = self.eval_f(x, y) else {
                skipped += 1;
                continue;
            };
            used += 1;

            let mut h = 0.0f64;
            let mut h_ok = true;
            for &lam in lambdas {
                let ly: Vec<f64> = y.iter().map(|v| lam * v).collect();
                match self.eval_f(x, &ly) {
                    Ok(fl) => h = h.max(rel(fl, lam * lam * f, f64::MIN_POSITIVE)),
                    Err(_) => h_ok = false,
                }
                if positive {
                    match (self.eval_l(x, &ly), self.eval_l(x, y)) {
                        (Ok(ll), Ok(l)) => h = h.max(rel(ll, lam * l, f64::MIN_POSITIVE)),
                        _ => h_ok = false,
                    }
                }
            }
            if h_ok {
                homogeneity.record(h);
            } else {
                homogeneity.error();
            }

            if positive {
                positivity.record(if f > 0.0 { 0.0 } else { 1.0 });
            }

            match first_derivatives(self, x, y) {
                Ok(df) => {
                    let ydf: f64 = df.iter().zip(y).map(|(d, v)| d * v).sum();
                    euler_first.record(rel(ydf, 2.0 * f, f64::MIN_POSITIVE));
                }
                Err(_) => euler_first.error(),
            }

            match self.metric_tensor(x, y) {
                Ok(m) => {
                    nondegeneracy.record(0.0);
                    let gyy = linalg::bilinear(&m.g, y, y);
                    euler_second.record(rel(gyy, f, f64::MIN_POSITIVE));
                    match self.signature {
                        Some(sig) => signature.record(if sig == m.signature { 0.0 } else { 1.0 }),
                        None => signature.error(),
                    }
                    let mut worst = 0.0f64;
                    let mut ok = true;
                    for lam in [0.5, 2.0] {
                        let ly: Vec<f64> = y.iter().map(|v| lam * v).collect();
                        match metric_components(self, x, &ly) {
                            Ok(gl) => {
                                let scale = linalg::max_abs(&m.g);
                                for (ra, rb) in gl.iter().zip(&m.g) {
                                    for (a, b) in ra.iter().zip(rb) {
                                        worst = worst.max((a - b).abs() / scale);
                                    }
                                }
                            }
                            Err(_) => ok = false,
                        }
                    }
                    if ok {
                        metric_scaling.record(worst);
                    } else {
                        metric_scaling.error();
                    }
                    match self.cartan_tensor(x, y) {
                        Ok(c) => {
                            let scale = linalg::max_abs(&m.g);
                            degree_zero.record(2.0 * c.contraction_residual() / scale);
                            symmetry.record(c.symmetry_residual());
                        }
                        Err(_) => {
                            degree_zero.error();
                            symmetry.error();
                        }
                    }
                }
                Err(_) => {
                    nondegeneracy.record(1.0);
                    euler_second.error();
                    signature.error();
                    metric_scaling.error();
                    degree_zero.error();
                    symmetry.error();
                }
            }
        }

        let mut checks = vec![
            homogeneity.finish(),
            euler_first.finish(),
            euler_second.finish(),
            degree_zero.finish(),
            metric_scaling.finish(),
            nondegeneracy.finish(),
            signature.finish(),
            symmetry.finish(),
        ];
        if positive {
            checks.push(positivity.finish());
        }
        checks.sort_by(|a, b| a.name.cmp(&b.name));
        ValidationReport {
            structure: self.name.clone(),
            requested: plan.count,
            used,
            skipped,
            checks,
        }
    }
}

fn randers_l<S: Scalar>(a: &[Vec<Expr>], b: &[Expr], x: &[S], y: &[S]) -> Result<S> {
    let am = eval_matrix_field(a, x)?;
    let bv = eval_vector_field(b, x)?;
    let alpha2 = linalg::bilinear(&am, y, y);
    if !(alpha2.re() > 0.0) {
        return Err(GeometryError::Domain("a(y, y) is not positive".into()));
    }
    let mut beta = S::zero();
    for (bi, yi) in bv.iter().zip(y) {
        beta.mul_acc(bi, yi);
    }
    Ok(alpha2.sqrt() + beta)
}

impl Fundamental for FinslerStructure {
    fn dim(&self) -> usize {
        self.dim
    }

    fn fundamental<S: Scalar>(&self, x: &[S], y: &[S]) -> Result<S> {
        let xr: Vec<f64> = x.iter().map(Scalar::re).collect();
        let yr: Vec<f64> = y.iter().map(Scalar::re).collect();
        self.check_point(&xr, &yr)?;
        let f = match &self.provenance {
            Provenance::QuadraticConstant { matrix } => quad_const(matrix, y),
            Provenance::Riemannian { a } => {
                let am = eval_matrix_field(a, x)?;
                linalg::bilinear(&am, y, y)
            }
            Provenance::Randers { a, b } => {
                self.randers_bound(a, b, &xr)?;
                let l = randers_l(a, b, x, y)?;
                l.clone() * l
            }
            Provenance::PerturbedQuadratic {
                matrix,
                epsilon,
                direction,
                null_guard,
            } => {
                let eta = quad_const(matrix, y);
                let y2: f64 = yr.iter().map(|v| v * v).sum();
                if eta.re().abs() < null_guard * y2 {
                    return Err(GeometryError::Domain(format!(
                        "|eta(y, y)| = {:e} below null-cone guard",
                        eta.re().abs()
                    )));
                }
                let quartic = y[*direction].powi(4).scale(*epsilon);
                eta.clone() + quartic / eta
            }
            Provenance::Expression { f } => f.eval(x, y)?,
        };
        if !f.all_finite() {
            return Err(GeometryError::Domain("non-finite fundamental function".into()));
        }
        Ok(f)
    }
}

/// `g_ij = 1/2 d^2 F / dy^i dy^j` on any scalar type.
pub fn metric_components<M: Fundamental, S: Scalar>(m: &M, x: &[S], y: &[S]) -> Result<Matrix<S>> {
    let n = m.dim();
    let xs: Vec<Jet<S>> = x.iter().map(|v| Jet::constant(v.clone())).collect();
    let ys = Jet::variables(y, 2);
    let f = m.fundamental(&xs, &ys)?;
    let g: Matrix<S> = (0..n)
        .map(|i| (0..n).map(|j| f.derivative(&[i, j]).scale(0.5)).collect())
        .collect();
    if !g.iter().flatten().all(Scalar::all_finite) {
        return Err(GeometryError::Domain("non-finite metric".into()));
    }
    Ok(g)
}

fn first_derivatives<M: Fundamental>(m: &M, x: &[f64], y: &[f64]) -> Result<Vec<f64>> {
    let xs: Vec<Jet> = x.iter().map(|&v| Jet::constant(v)).collect();
    let ys = Jet::variables(y, 1);
    let f = m.fundamental(&xs, &ys)?;
    Ok(f.gradient(m.dim()))
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricSample {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub g: Matrix<f64>,
    pub g_inv: Matrix<f64>,
    pub det_g: f64,
    /// `sqrt(|det g|)`.
    pub volume_factor: f64,
    /// Number of positive and negative eigenvalues.
    pub signature: (usize, usize),
}

impl MetricSample {
    /// `max |g g^-1 - I|`.
    pub fn inverse_residual(&self) -> f64 {
        let n = self.g.len();
        let mut worst = 0.0f64;
        for i in 0..n {
            for j in 0..n {
                let v: f64 = (0..n).map(|k| self.g[i][k] * self.g_inv[k][j]).sum();
                let id = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((v - id).abs());
            }
        }
        worst
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CartanTensorSample {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub c: Vec<Matrix<f64>>,
}

impl CartanTensorSample {
    pub fn max_abs(&self) -> f64 {
        self.c.iter().flatten().flatten().map(|v| v.abs()).fold(0.0, f64::max)
    }

    /// Largest deviation from full index symmetry.
    pub fn symmetry_residual(&self) -> f64 {
        let n = self.c.len();
        let mut worst = 0.0f64;
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    let v = self.c[i][j][k];
                    for w in [self.c[j][i][k], self.c[i][k][j], self.c[k][j][i]] {
                        worst = worst.max((v - w).abs());
                    }
                }
            }
        }
        worst
    }

    /// `max |C_ijk y^k|`.
    pub fn contraction_residual(&self) -> f64 {
        let n = self.c.len();
        let mut worst = 0.0f64;
        for i in 0..n {
            for j in 0..n {
                let v: f64 = (0..n).map(|k| self.c[i][j][k] * self.y[k]).sum();
                worst = worst.max(v.abs());
            }
        }
        worst
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ValidationTolerances {
    /// Identities computed through the derivative tower.
    pub identity: f64,
    /// Identities forced by construction.
    pub exact: f64,
    /// Index symmetry of derivative tensors.
    pub symmetry: f64,
}

impl Default for ValidationTolerances {
    fn default() -> Self {
        ValidationTolerances {
            identity: 1e-9,
            exact: 1e-10,
            symmetry: 1e-12,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ValidationReport {
    pub structure: String,
    pub requested: usize,
    pub used: usize,
    pub skipped: usize,
    /// Sorted by name.
    pub checks: Vec<Check>,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn check(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }
}

/// The shipped structures exercised by the identity suites.
pub fn shipped_structures() -> Vec<FinslerStructure> {
    vec![
        FinslerStructure::euclidean(3).expect("euclidean"),
        FinslerStructure::minkowski(),
        FinslerStructure::poincare_half_plane(),
        FinslerStructure::randers_example(),
        FinslerStructure::perturbed_minkowski(0.01),
    ]
}
