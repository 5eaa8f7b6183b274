//! Scalar arithmetic tower for exact directional derivatives.
//!
//! A [`Jet`] is a truncated multivariate Taylor polynomial in a fixed set of
//! seed variables. Its coefficients are themselves [`Scalar`]s, so jets nest:
//! `Jet<Jet<f64>>` carries derivatives with respect to two independent groups
//! of variables (for example order 1 in `x` on the outside and order 3 in `y`
//! on the inside). All geometry code is written generically over [`Scalar`]
//! and is differentiated by instantiating it at a jet type.
//!
//! [`fd_oracle`] is an independent central-difference estimator used to
//! cross-check the tower.

use std::collections::{BTreeMap, HashMap};
use std::fmt::{self, Debug};
use std::ops::{Add, Div, Mul, Neg, Sub};
use std::sync::{Arc, Mutex, OnceLock};

use thiserror::Error;

/// Highest per-level truncation order supported by [`Jet`].
pub const MAX_ORDER: usize = 3;

/// A non-finite value was produced while evaluating a function.
#[derive(Debug, Clone, PartialEq, Error)]
pub struct DomainError {
    /// Byte offset of the offending sub-expression, when known.
    pub position: Option<usize>,
    pub message: String,
}

impl DomainError {
    pub fn new(message: impl Into<String>) -> Self {
        DomainError {
            position: None,
            message: message.into(),
        }
    }

    pub fn at(position: usize, message: impl Into<String>) -> Self {
        DomainError {
            position: Some(position),
            message: message.into(),
        }
    }
}

impl fmt::Display for DomainError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.position {
            Some(p) => write!(f, "domain error at offset {p}: {}", self.message),
            None => write!(f, "domain error: {}", self.message),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TowerError {
    #[error("invalid derivative request: {0}")]
    Request(String),
    #[error(transparent)]
    Domain(#[from] DomainError),
    #[error("finite-difference step {step:e} underflows at coordinate {slot} (value {value:e})")]
    StepUnderflow { slot: usize, step: f64, value: f64 },
}

/// Numeric type the geometry code is generic over.
///
/// Implemented by `f64` and by [`Jet<T>`] for any `T: Scalar`.
pub trait Scalar:
    Clone
    + Debug
    + Send
    + Sync
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
{
    fn cst(v: f64) -> Self;

    /// The primal (innermost value) part.
    fn re(&self) -> f64;

    /// True when every coefficient at every nesting level is finite.
    fn all_finite(&self) -> bool;

    /// `self += a * b` without intermediate allocation.
    fn mul_acc(&mut self, a: &Self, b: &Self);

    /// `self += a`.
    fn add_acc(&mut self, a: &Self);

    fn scale(&self, k: f64) -> Self;
    fn recip(&self) -> Self;
    fn sqrt(&self) -> Self;
    fn exp(&self) -> Self;
    fn ln(&self) -> Self;
    fn sin(&self) -> Self;
    fn cos(&self) -> Self;
    fn tanh(&self) -> Self;
    /// Absolute value; not differentiable at zero (derivative slots become NaN).
    fn abs(&self) -> Self;
    fn powi(&self, n: i32) -> Self;
    fn powf(&self, p: f64) -> Self;

    fn zero() -> Self {
        Self::cst(0.0)
    }
}

impl Scalar for f64 {
    fn cst(v: f64) -> Self {
        v
    }
    fn re(&self) -> f64 {
        *self
    }
    fn all_finite(&self) -> bool {
        self.is_finite()
    }
    fn mul_acc(&mut self, a: &Self, b: &Self) {
        *self += a * b;
    }
    fn add_acc(&mut self, a: &Self) {
        *self += a;
    }
    fn scale(&self, k: f64) -> Self {
        self * k
    }
    fn recip(&self) -> Self {
        1.0 / self
    }
    fn sqrt(&self) -> Self {
        f64::sqrt(*self)
    }
    fn exp(&self) -> Self {
        f64::exp(*self)
    }
    fn ln(&self) -> Self {
        f64::ln(*self)
    }
    fn sin(&self) -> Self {
        f64::sin(*self)
    }
    fn cos(&self) -> Self {
        f64::cos(*self)
    }
    fn tanh(&self) -> Self {
        f64::tanh(*self)
    }
    fn abs(&self) -> Self {
        f64::abs(*self)
    }
    fn powi(&self, n: i32) -> Self {
        f64::powi(*self, n)
    }
    fn powf(&self, p: f64) -> Self {
        f64::powf(*self, p)
    }
}

/// Monomial layout of a jet with `vars` seed variables truncated at `order`.
#[derive(Debug)]
pub struct Basis {
    vars: usize,
    order: usize,
    exponents: Vec<Vec<u8>>,
    lookup: HashMap<Vec<u8>, usize>,
    /// `(i, j, k)` with `exponents[i] + exponents[j] == exponents[k]`.
    products: Vec<(u32, u32, u32)>,
}

impl Basis {
    fn build(vars: usize, order: usize) -> Basis {
        let mut exponents = Vec::new();
        let mut degree = Vec::new();
        for d in 0..=order {
            let mut cur = vec![0u8; vars];
            push_with_degree(&mut exponents, &mut cur, 0, d);
            degree.resize(exponents.len(), d);
        }
        let lookup: HashMap<Vec<u8>, usize> = exponents.iter().enumerate().map(|(i, e)| (e.clone(), i)).collect();
        let mut products = Vec::new();
        for i in 0..exponents.len() {
            for j in 0..exponents.len() {
                if degree[i] + degree[j] > order {
                    continue;
                }
                let sum: Vec<u8> = exponents[i].iter().zip(&exponents[j]).map(|(a, b)| a + b).collect();
                products.push((i as u32, j as u32, lookup[&sum] as u32));
            }
        }
        Basis {
            vars,
            order,
            exponents,
            lookup,
            products,
        }
    }

    pub fn vars(&self) -> usize {
        self.vars
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn len(&self) -> usize {
        self.exponents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.exponents.is_empty()
    }

    fn index_of(&self, vars: &[usize]) -> (usize, f64) {
        assert!(
            vars.len() <= self.order,
            "derivative of order {} requested from a jet truncated at order {}",
            vars.len(),
            self.order
        );
        let mut e = vec![0u8; self.vars];
        for &v in vars {
            assert!(v < self.vars, "seed variable {v} out of range");
            e[v] += 1;
        }
        let weight: f64 = e.iter().map(|&k| factorial(k as usize)).product();
        (self.lookup[&e], weight)
    }
}

fn push_with_degree(out: &mut Vec<Vec<u8>>, cur: &mut Vec<u8>, pos: usize, remaining: usize) {
    if cur.is_empty() {
        if remaining == 0 {
            out.push(Vec::new());
        }
        return;
    }
    if pos + 1 == cur.len() {
        cur[pos] = remaining as u8;
        out.push(cur.clone());
        cur[pos] = 0;
        return;
    }
    for k in (0..=remaining).rev() {
        cur[pos] = k as u8;
        push_with_degree(out, cur, pos + 1, remaining - k);
    }
    cur[pos] = 0;
}

fn factorial(k: usize) -> f64 {
    (1..=k).map(|i| i as f64).product()
}

type BasisCache = Mutex<HashMap<(usize, usize), Arc<Basis>>>;

fn basis(vars: usize, order: usize) -> Arc<Basis> {
    static CACHE: OnceLock<BasisCache> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    let mut guard = cache.lock().unwrap_or_else(|e| e.into_inner());
    guard
        .entry((vars, order))
        .or_insert_with(|| Arc::new(Basis::build(vars, order)))
        .clone()
}

/// Truncated multivariate Taylor polynomial with coefficients in `T`.
///
/// A jet without a basis is a constant. Coefficients are stored as Taylor
/// coefficients (partial derivative divided by the multi-index factorial).
#[derive(Clone)]
pub struct Jet<T = f64> {
    basis: Option<Arc<Basis>>,
    coeffs: Vec<T>,
}

impl<T: Scalar> Debug for Jet<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.basis {
            None => write!(f, "Jet({:?})", self.coeffs[0]),
            Some(b) => write!(f, "Jet[vars={}, order={}]{:?}", b.vars, b.order, self.coeffs),
        }
    }
}

impl<T: Scalar> Jet<T> {
    pub fn constant(v: T) -> Self {
        Jet {
            basis: None,
            coeffs: vec![v],
        }
    }

    /// Seed one jet variable per entry of `values`, truncated at `order`.
    pub fn variables(values: &[T], order: usize) -> Vec<Self> {
        assert!(
            (1..=MAX_ORDER).contains(&order),
            "jet order must be in 1..={MAX_ORDER}, got {order}"
        );
        let b = basis(values.len(), order);
        values
            .iter()
            .enumerate()
            .map(|(i, v)| {
                let mut coeffs = vec![T::zero(); b.len()];
                coeffs[0] = v.clone();
                // Degree-one monomials follow the constant term in descending
                // lexicographic order, i.e. variable i sits at index 1 + i.
                coeffs[1 + i] = T::cst(1.0);
                Jet {
                    basis: Some(b.clone()),
                    coeffs,
                }
            })
            .collect()
    }

    /// Value part.
    pub fn value(&self) -> &T {
        &self.coeffs[0]
    }

    pub fn is_constant(&self) -> bool {
        self.basis.is_none()
    }

    /// Partial derivative with respect to the multiset `vars` of seed variables.
    pub fn derivative(&self, vars: &[usize]) -> T {
        if vars.is_empty() {
            return self.coeffs[0].clone();
        }
        match &self.basis {
            None => T::zero(),
            Some(b) => {
                let (idx, weight) = b.index_of(vars);
                self.coeffs[idx].scale(weight)
            }
        }
    }

    /// Gradient with respect to all seed variables (empty for a constant).
    pub fn gradient(&self, vars: usize) -> Vec<T> {
        (0..vars).map(|i| self.derivative(&[i])).collect()
    }

    fn full_zero(b: &Arc<Basis>) -> Self {
        Jet {
            basis: Some(b.clone()),
            coeffs: vec![T::zero(); b.len()],
        }
    }

    fn ensure_full(&mut self, b: &Arc<Basis>) {
        match &self.basis {
            None => {
                self.coeffs.resize(b.len(), T::zero());
                self.basis = Some(b.clone());
            }
            Some(own) => {
                assert!(
                    Arc::ptr_eq(own, b) || (own.vars == b.vars && own.order == b.order),
                    "mixing jets with different seed layouts"
                );
            }
        }
    }

    /// Multiply every coefficient by the scalar `s`.
    pub fn scale_by(&self, s: &T) -> Self {
        Jet {
            basis: self.basis.clone(),
            coeffs: self
                .coeffs
                .iter()
                .map(|c| {
                    let mut out = T::zero();
                    out.mul_acc(c, s);
                    out
                })
                .collect(),
        }
    }

    /// Compose with a univariate function given its derivatives at the value.
    fn lift(&self, derivs: impl FnOnce(&T, usize) -> Vec<T>) -> Self {
        let Some(b) = self.basis.clone() else {
            let mut d = derivs(&self.coeffs[0], 0);
            return Jet::constant(d.swap_remove(0));
        };
        let d = derivs(&self.coeffs[0], b.order);
        let mut delta = self.clone();
        delta.coeffs[0] = T::zero();
        let mut out = Jet::full_zero(&b);
        out.coeffs[0] = d[0].clone();
        let mut power = delta.clone();
        for (k, dk) in d.iter().enumerate().skip(1) {
            let term = power.scale_by(&dk.scale(1.0 / factorial(k)));
            out.add_acc(&term);
            if k < b.order {
                let mut next = Jet::full_zero(&b);
                next.mul_acc(&power, &delta);
                power = next;
            }
        }
        out
    }

    fn nan_like(&self) -> Self {
        Jet {
            basis: self.basis.clone(),
            coeffs: vec![T::cst(f64::NAN); self.coeffs.len()],
        }
    }
}

fn falling(p: f64, k: usize) -> f64 {
    (0..k).map(|i| p - i as f64).product()
}

impl<T: Scalar> Scalar for Jet<T> {
    fn cst(v: f64) -> Self {
        Jet::constant(T::cst(v))
    }

    fn re(&self) -> f64 {
        self.coeffs[0].re()
    }

    fn all_finite(&self) -> bool {
        self.coeffs.iter().all(Scalar::all_finite)
    }

    fn mul_acc(&mut self, a: &Self, b: &Self) {
        match (&a.basis, &b.basis) {
            (None, None) => self.coeffs[0].mul_acc(&a.coeffs[0], &b.coeffs[0]),
            (Some(bs), None) => {
                self.ensure_full(bs);
                for (out, ai) in self.coeffs.iter_mut().zip(&a.coeffs) {
                    out.mul_acc(ai, &b.coeffs[0]);
                }
            }
            (None, Some(bs)) => {
                self.ensure_full(bs);
                for (out, bi) in self.coeffs.iter_mut().zip(&b.coeffs) {
                    out.mul_acc(&a.coeffs[0], bi);
                }
            }
            (Some(bs), Some(other)) => {
                assert!(
                    Arc::ptr_eq(bs, other) || (bs.vars == other.vars && bs.order == other.order),
                    "mixing jets with different seed layouts"
                );
                let bs = bs.clone();
                self.ensure_full(&bs);
                for &(i, j, k) in &bs.products {
                    self.coeffs[k as usize].mul_acc(&a.coeffs[i as usize], &b.coeffs[j as usize]);
                }
            }
        }
    }

    fn add_acc(&mut self, a: &Self) {
        match &a.basis {
            None => self.coeffs[0].add_acc(&a.coeffs[0]),
            Some(bs) => {
                self.ensure_full(bs);
                for (out, ai) in self.coeffs.iter_mut().zip(&a.coeffs) {
                    out.add_acc(ai);
                }
            }
        }
    }

    fn scale(&self, k: f64) -> Self {
        Jet {
            basis: self.basis.clone(),
            coeffs: self.coeffs.iter().map(|c| c.scale(k)).collect(),
        }
    }

    fn recip(&self) -> Self {
        self.lift(|u, order| {
            let r = u.recip();
            let mut d = vec![r.clone()];
            let mut p = r.clone();
            for k in 1..=order {
                p = p * r.clone();
                d.push(p.scale(falling(-1.0, k)));
            }
            d
        })
    }

    fn sqrt(&self) -> Self {
        self.lift(|u, order| {
            let s = u.sqrt();
            let mut d = vec![s.clone()];
            if order >= 1 {
                d.push(s.recip().scale(0.5));
            }
            if order >= 2 {
                d.push((s.clone() * u.clone()).recip().scale(-0.25));
            }
            if order >= 3 {
                d.push((s * u.clone() * u.clone()).recip().scale(0.375));
            }
            d
        })
    }

    fn exp(&self) -> Self {
        self.lift(|u, order| vec![u.exp(); order + 1])
    }

    fn ln(&self) -> Self {
        self.lift(|u, order| {
            let r = u.recip();
            let mut d = vec![u.ln()];
            let mut p = T::cst(1.0);
            for k in 1..=order {
                p = p * r.clone();
                // d^k/du^k ln u = (-1)^(k-1) (k-1)! u^-k
                let c = if k % 2 == 1 { 1.0 } else { -1.0 } * factorial(k - 1);
                d.push(p.scale(c));
            }
            d
        })
    }

    fn sin(&self) -> Self {
        self.lift(|u, order| {
            let (s, c) = (u.sin(), u.cos());
            let cycle = [s.clone(), c.clone(), -s, -c];
            cycle.into_iter().take(order + 1).collect()
        })
    }

    fn cos(&self) -> Self {
        self.lift(|u, order| {
            let (s, c) = (u.sin(), u.cos());
            let cycle = [c.clone(), -s.clone(), -c, s];
            cycle.into_iter().take(order + 1).collect()
        })
    }

    fn tanh(&self) -> Self {
        self.lift(|u, order| {
            let t = u.tanh();
            let p = T::cst(1.0) - t.clone() * t.clone();
            let mut d = vec![t.clone()];
            if order >= 1 {
                d.push(p.clone());
            }
            if order >= 2 {
                d.push((t.clone() * p.clone()).scale(-2.0));
            }
            if order >= 3 {
                d.push(p * ((t.clone() * t).scale(6.0) - T::cst(2.0)));
            }
            d
        })
    }

    fn abs(&self) -> Self {
        if self.basis.is_some() && self.re() == 0.0 {
            return self.nan_like();
        }
        self.lift(|u, order| {
            let sign = if u.re() < 0.0 { -1.0 } else { 1.0 };
            let mut d = vec![u.abs()];
            if order >= 1 {
                d.push(T::cst(sign));
            }
            for _ in 2..=order {
                d.push(T::zero());
            }
            d
        })
    }

    fn powi(&self, n: i32) -> Self {
        self.lift(|u, order| {
            (0..=order)
                .map(|k| {
                    let e = n - k as i32;
                    let c = falling(n as f64, k);
                    if c == 0.0 {
                        T::zero()
                    } else if e == 0 {
                        T::cst(c)
                    } else {
                        u.powi(e).scale(c)
                    }
                })
                .collect()
        })
    }

    fn powf(&self, p: f64) -> Self {
        if p.fract() == 0.0 && p.abs() < i32::MAX as f64 {
            return self.powi(p as i32);
        }
        self.lift(|u, order| (0..=order).map(|k| u.powf(p - k as f64).scale(falling(p, k))).collect())
    }
}

impl<T: Scalar> Add for Jet<T> {
    type Output = Self;
    fn add(mut self, rhs: Self) -> Self {
        self.add_acc(&rhs);
        self
    }
}

impl<T: Scalar> Sub for Jet<T> {
    type Output = Self;
    fn sub(mut self, rhs: Self) -> Self {
        self.add_acc(&(-rhs));
        self
    }
}

impl<T: Scalar> Mul for Jet<T> {
    type Output = Self;
    fn mul(self, rhs: Self) -> Self {
        let mut out = Jet::constant(T::zero());
        out.mul_acc(&self, &rhs);
        out
    }
}

impl<T: Scalar> Div for Jet<T> {
    type Output = Self;
    #[allow(clippy::suspicious_arithmetic_impl)]
    fn div(self, rhs: Self) -> Self {
        if rhs.is_constant() {
            let r = rhs.coeffs[0].recip();
            return self.scale_by(&r);
        }
        self * rhs.recip()
    }
}

impl<T: Scalar> Neg for Jet<T> {
    type Output = Self;
    fn neg(self) -> Self {
        Jet {
            basis: self.basis,
            coeffs: self.coeffs.into_iter().map(|c| -c).collect(),
        }
    }
}

/// Which coordinates to differentiate, where, and how deep.
#[derive(Debug, Clone, PartialEq)]
pub struct DerivativeRequest {
    pub at: Vec<f64>,
    pub slots: Vec<usize>,
    pub order: usize,
}

impl DerivativeRequest {
    pub fn new(at: &[f64], slots: &[usize], order: usize) -> Self {
        DerivativeRequest {
            at: at.to_vec(),
            slots: slots.to_vec(),
            order,
        }
    }

    pub fn validate(&self) -> Result<(), TowerError> {
        if !(1..=MAX_ORDER).contains(&self.order) {
            return Err(TowerError::Request(format!(
                "order {} outside 1..={MAX_ORDER}",
                self.order
            )));
        }
        if self.slots.is_empty() {
            return Err(TowerError::Request("no slots requested".into()));
        }
        for (i, &s) in self.slots.iter().enumerate() {
            if s >= self.at.len() {
                return Err(TowerError::Request(format!(
                    "slot {s} out of range for dimension {}",
                    self.at.len()
                )));
            }
            if self.slots[..i].contains(&s) {
                return Err(TowerError::Request(format!("slot {s} requested twice")));
            }
        }
        Ok(())
    }
}

/// All mixed partials of a scalar field up to some order, keyed by the
/// sorted multiset of coordinate indices.
#[derive(Debug, Clone, PartialEq)]
pub struct Partials {
    pub value: f64,
    pub order: usize,
    pub slots: Vec<usize>,
    entries: BTreeMap<Vec<usize>, f64>,
}

impl Partials {
    /// Partial derivative with respect to the coordinates in `index`
    /// (any order of the indices).
    pub fn get(&self, index: &[usize]) -> f64 {
        if index.is_empty() {
            return self.value;
        }
        let mut key = index.to_vec();
        key.sort_unstable();
        *self
            .entries
            .get(&key)
            .unwrap_or_else(|| panic!("partial {index:?} was not requested"))
    }

    pub fn iter(&self) -> impl Iterator<Item = (&Vec<usize>, &f64)> {
        self.entries.iter()
    }

    /// Largest componentwise relative discrepancy against another estimate,
    /// with the denominator floored at `floor`.
    pub fn max_rel_diff(&self, other: &Partials, floor: f64) -> f64 {
        self.entries
            .iter()
            .map(|(k, a)| {
                let b = other.get(k);
                (a - b).abs() / a.abs().max(b.abs()).max(floor)
            })
            .fold(0.0, f64::max)
    }
}

/// Sorted multisets of `slots` with sizes `1..=order`.
fn multisets(slots: &[usize], order: usize) -> Vec<Vec<usize>> {
    fn rec(slots: &[usize], start: usize, size: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == size {
            out.push(cur.clone());
            return;
        }
        for i in start..slots.len() {
            cur.push(i);
            rec(slots, i, size, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    for size in 1..=order {
        rec(slots, 0, size, &mut Vec::new(), &mut out);
    }
    out
}

/// All partials of `f` with respect to `req.slots` up to `req.order`, computed
/// with a single jet evaluation.
pub fn derive<F>(f: F, req: &DerivativeRequest) -> Result<Partials, TowerError>
where
    F: FnOnce(&[Jet]) -> Result<Jet, DomainError>,
{
    req.validate()?;
    let seeds: Vec<f64> = req.slots.iter().map(|&s| req.at[s]).collect();
    let vars = Jet::variables(&seeds, req.order);
    let mut inputs: Vec<Jet> = req.at.iter().map(|&v| Jet::constant(v)).collect();
    for (&slot, v) in req.slots.iter().zip(vars) {
        inputs[slot] = v;
    }
    let out = f(&inputs)?;
    // Checked after factorial scaling, which can overflow a finite coefficient.
    let entries: BTreeMap<Vec<usize>, f64> = multisets(&req.slots, req.order)
        .into_iter()
        .map(|positions| {
            let key: Vec<usize> = {
                let mut k: Vec<usize> = positions.iter().map(|&p| req.slots[p]).collect();
                k.sort_unstable();
                k
            };
            (key, out.derivative(&positions))
        })
        .collect();
    if !out.re().is_finite() || entries.values().any(|d| !d.is_finite()) {
        return Err(DomainError::new("non-finite derivative").into());
    }
    Ok(Partials {
        value: out.re(),
        order: req.order,
        slots: req.slots.clone(),
        entries,
    })
}

/// Default finite-difference step for partials up to `order`.
///
/// After one Richardson level the truncation error is `O(h^4)` while
/// rounding contributes `eps / h^order`; the two balance at
/// `h ~ eps^(1 / (4 + order))`.
pub fn default_step(coordinate: f64, order: usize) -> f64 {
    f64::EPSILON.powf(1.0 / (4 + order) as f64) * coordinate.abs().max(1.0)
}

fn stencil<F>(f: &F, at: &[f64], axes: &[usize], h: f64) -> Result<f64, DomainError>
where
    F: Fn(&[f64]) -> Result<f64, DomainError>,
{
    let k = axes.len();
    let mut acc = 0.0;
    let mut point = at.to_vec();
    for mask in 0u32..(1 << k) {
        point.copy_from_slice(at);
        let mut sign = 1.0;
        for (bit, &axis) in axes.iter().enumerate() {
            if mask & (1 << bit) != 0 {
                point[axis] -= h;
                sign = -sign;
            } else {
                point[axis] += h;
            }
        }
        acc += sign * f(&point)?;
    }
    Ok(acc / (2.0 * h).powi(k as i32))
}

/// Central-difference estimate of all partials with one Richardson level.
///
/// Each mixed partial uses the tensor-product central stencil (error
/// `O(h^2)`), then `(4 D(h/2) - D(h)) / 3` cancels the leading term, leaving
/// `O(h^4)` truncation error. `step` defaults to [`default_step`] of the
/// largest-magnitude requested coordinate.
pub fn fd_oracle<F>(f: F, req: &DerivativeRequest, step: Option<f64>) -> Result<Partials, TowerError>
where
    F: Fn(&[f64]) -> Result<f64, DomainError>,
{
    req.validate()?;
    let h = match step {
        Some(h) => h,
        None => {
            let m = req.slots.iter().map(|&s| req.at[s].abs()).fold(0.0, f64::max);
            default_step(m, req.order)
        }
    };
    if !(h > 0.0) || !h.is_finite() {
        return Err(TowerError::Request(format!("step must be positive, got {h}")));
    }
    for &s in &req.slots {
        let v = req.at[s];
        if v + 0.5 * h == v || v - 0.5 * h == v {
            return Err(TowerError::StepUnderflow {
                slot: s,
                step: h,
                value: v,
            });
        }
    }
    let value = f(&req.at)?;
    let mut entries = BTreeMap::new();
    for positions in multisets(&req.slots, req.order) {
        let axes: Vec<usize> = positions.iter().map(|&p| req.slots[p]).collect();
        let coarse = stencil(&f, &req.at, &axes, h)?;
        let fine = stencil(&f, &req.at, &axes, 0.5 * h)?;
        let mut key = axes.clone();
        key.sort_unstable();
        entries.insert(key, (4.0 * fine - coarse) / 3.0);
    }
    Ok(Partials {
        value,
        order: req.order,
        slots: req.slots.clone(),
        entries,
    })
}
