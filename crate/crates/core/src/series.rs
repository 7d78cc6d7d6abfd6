//! Truncated multivariate formal power series over `Complex64`.
//!
//! A [`ScalarSeries`] stores the coefficients of total degree `<= D` of a
//! series in `n` variables; everything above `D` is dropped by every
//! operation. A [`VectorSeries`] is a tuple of scalar series sharing `n` and
//! `D`. Coefficients are kept in a sparse map whose iteration order is the
//! graded order of [`CoefIndex`], so every traversal is deterministic.

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};

use num_complex::Complex64;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SeriesError {
    #[error("series have different numbers of variables ({0} vs {1})")]
    VariableMismatch(usize, usize),
    #[error("series have different truncation degrees ({0} vs {1})")]
    TruncationMismatch(u32, u32),
    #[error("expected {expected} components, found {found}")]
    ComponentMismatch { expected: usize, found: usize },
    #[error("composition needs every inner component to vanish at the origin; component {0} has valuation 0")]
    InnerNotInMaximalIdeal(usize),
    #[error("series must have valuation >= {required}, found {found}")]
    ValuationTooLow { required: u32, found: Valuation },
    #[error("multi-index {0} has {1} entries, series has {2} variables")]
    IndexArity(CoefIndex, usize, usize),
}

/// A multi-index `α ∈ ℕⁿ`.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct CoefIndex(Vec<u32>);

impl CoefIndex {
    pub fn new(entries: Vec<u32>) -> Self {
        CoefIndex(entries)
    }

    pub fn zero(n: usize) -> Self {
        CoefIndex(vec![0; n])
    }

    /// The unit vector `e_i`.
    pub fn unit(n: usize, i: usize) -> Self {
        let mut v = vec![0; n];
        v[i] = 1;
        CoefIndex(v)
    }

    pub fn entries(&self) -> &[u32] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// `|α| = α₁ + … + αₙ`.
    pub fn degree(&self) -> u32 {
        self.0.iter().sum()
    }

    /// Component-wise `self ≥ other`.
    pub fn dominates(&self, other: &CoefIndex) -> bool {
        self.0.iter().zip(&other.0).all(|(a, b)| a >= b)
    }

    pub fn checked_sub(&self, other: &CoefIndex) -> Option<CoefIndex> {
        if !self.dominates(other) {
            return None;
        }
        Some(CoefIndex(self.0.iter().zip(&other.0).map(|(a, b)| a - b).collect()))
    }

    pub fn plus(&self, other: &CoefIndex) -> CoefIndex {
        CoefIndex(self.0.iter().zip(&other.0).map(|(a, b)| a + b).collect())
    }

    /// `α! = α₁!…αₙ!` as a float.
    pub fn factorial(&self) -> f64 {
        self.0.iter().map(|&a| factorial(a)).product()
    }

    /// `binom(α, β) = Π binom(αᵢ, βᵢ)`, zero unless `α ≥ β`.
    pub fn binomial(&self, beta: &CoefIndex) -> f64 {
        self.0
            .iter()
            .zip(&beta.0)
            .map(|(&a, &b)| binomial(a, b))
            .product()
    }

    pub fn to_momentum(&self) -> Momentum {
        Momentum(self.0.iter().map(|&a| a as i64).collect())
    }
}

impl Ord for CoefIndex {
    /// Graded order: total degree first, then reverse lexicographic on the
    /// entries so that `z₁² < z₁z₂ < z₂²`.
    fn cmp(&self, other: &Self) -> Ordering {
        self.degree()
            .cmp(&other.degree())
            .then_with(|| other.0.cmp(&self.0))
    }
}

impl PartialOrd for CoefIndex {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Debug for CoefIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self}")
    }
}

impl fmt::Display for CoefIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (i, a) in self.0.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{a}")?;
        }
        write!(f, ")")
    }
}

/// A signed multi-index `ν ∈ ℤⁿ`, used only for divisor evaluation.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Momentum(Vec<i64>);

impl Momentum {
    pub fn new(entries: Vec<i64>) -> Self {
        Momentum(entries)
    }

    pub fn zero(n: usize) -> Self {
        Momentum(vec![0; n])
    }

    pub fn entries(&self) -> &[i64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// `Σ νᵢ`.
    pub fn signed_degree(&self) -> i64 {
        self.0.iter().sum()
    }

    /// `Σ |νᵢ|`.
    pub fn abs_degree(&self) -> i64 {
        self.0.iter().map(|v| v.abs()).sum()
    }

    pub fn is_zero(&self) -> bool {
        self.0.iter().all(|&v| v == 0)
    }

    pub fn plus(&self, other: &Momentum) -> Momentum {
        Momentum(self.0.iter().zip(&other.0).map(|(a, b)| a + b).collect())
    }

    pub fn minus(&self, other: &Momentum) -> Momentum {
        Momentum(self.0.iter().zip(&other.0).map(|(a, b)| a - b).collect())
    }

    /// `self − e_i`.
    pub fn minus_unit(&self, i: usize) -> Momentum {
        let mut v = self.0.clone();
        v[i] -= 1;
        Momentum(v)
    }

    /// Back to a multi-index when every entry is non-negative.
    pub fn to_index(&self) -> Option<CoefIndex> {
        self.0
            .iter()
            .map(|&v| u32::try_from(v).ok())
            .collect::<Option<Vec<_>>>()
            .map(CoefIndex)
    }

    pub fn dot(&self, w: &[f64]) -> f64 {
        self.0.iter().zip(w).map(|(&a, &b)| a as f64 * b).sum()
    }

    pub fn dot_complex(&self, w: &[Complex64]) -> Complex64 {
        self.0
            .iter()
            .zip(w)
            .map(|(&a, &b)| b * a as f64)
            .fold(Complex64::new(0.0, 0.0), |acc, x| acc + x)
    }
}

impl fmt::Debug for Momentum {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self}")
    }
}

impl fmt::Display for Momentum {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (i, a) in self.0.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{a}")?;
        }
        write!(f, ")")
    }
}

/// Valuation with a distinguished infinite value for the zero series.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Valuation {
    Finite(u32),
    Infinite,
}

impl Valuation {
    pub fn finite(self) -> Option<u32> {
        match self {
            Valuation::Finite(v) => Some(v),
            Valuation::Infinite => None,
        }
    }

    pub fn is_infinite(self) -> bool {
        matches!(self, Valuation::Infinite)
    }

    /// `2^{-v}`, zero for the infinite valuation.
    pub fn norm(self) -> f64 {
        match self {
            Valuation::Finite(v) => 0.5f64.powi(v as i32),
            Valuation::Infinite => 0.0,
        }
    }

    pub fn at_least(self, k: u32) -> bool {
        match self {
            Valuation::Finite(v) => v >= k,
            Valuation::Infinite => true,
        }
    }
}

impl fmt::Display for Valuation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Valuation::Finite(v) => write!(f, "{v}"),
            Valuation::Infinite => write!(f, "inf"),
        }
    }
}

pub fn factorial(k: u32) -> f64 {
    (1..=k).map(|i| i as f64).product()
}

pub fn binomial(n: u32, k: u32) -> f64 {
    if k > n {
        return 0.0;
    }
    let k = k.min(n - k);
    let mut acc = 1.0;
    for i in 1..=k {
        acc = acc * (n - k + i) as f64 / i as f64;
    }
    acc.round()
}

/// All multi-indices in `n` variables with `lo <= |α| <= hi`, in graded order.
pub fn indices_between(n: usize, lo: u32, hi: u32) -> Vec<CoefIndex> {
    let mut out = Vec::new();
    for d in lo..=hi {
        let mut cur = vec![0u32; n];
        push_degree(&mut out, &mut cur, 0, d);
    }
    out
}

fn push_degree(out: &mut Vec<CoefIndex>, cur: &mut Vec<u32>, pos: usize, remaining: u32) {
    let n = cur.len();
    if n == 0 {
        if remaining == 0 {
            out.push(CoefIndex(Vec::new()));
        }
        return;
    }
    if pos == n - 1 {
        cur[pos] = remaining;
        out.push(CoefIndex(cur.clone()));
        cur[pos] = 0;
        return;
    }
    for a in (0..=remaining).rev() {
        cur[pos] = a;
        push_degree(out, cur, pos + 1, remaining - a);
    }
    cur[pos] = 0;
}

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// A scalar series in `n` variables truncated at total degree `D`.
#[derive(Clone, PartialEq)]
pub struct ScalarSeries {
    nvars: usize,
    degree: u32,
    coeffs: BTreeMap<CoefIndex, Complex64>,
}

impl fmt::Debug for ScalarSeries {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "ScalarSeries(n={}, D={}; ", self.nvars, self.degree)?;
        for (i, (a, c)) in self.coeffs.iter().enumerate() {
            if i > 0 {
                write!(f, " + ")?;
            }
            write!(f, "({}{:+}i){a}", c.re, c.im)?;
        }
        write!(f, ")")
    }
}

impl ScalarSeries {
    pub fn zero(nvars: usize, degree: u32) -> Self {
        ScalarSeries { nvars, degree, coeffs: BTreeMap::new() }
    }

    pub fn constant(nvars: usize, degree: u32, c: Complex64) -> Self {
        let mut s = Self::zero(nvars, degree);
        s.set(CoefIndex::zero(nvars), c);
        s
    }

    pub fn one(nvars: usize, degree: u32) -> Self {
        Self::constant(nvars, degree, Complex64::new(1.0, 0.0))
    }

    /// The coordinate function `z_i`.
    pub fn variable(nvars: usize, degree: u32, i: usize) -> Self {
        Self::monomial(nvars, degree, CoefIndex::unit(nvars, i), Complex64::new(1.0, 0.0))
    }

    pub fn monomial(nvars: usize, degree: u32, alpha: CoefIndex, c: Complex64) -> Self {
        let mut s = Self::zero(nvars, degree);
        s.set(alpha, c);
        s
    }

    /// Builds a series from `(α, c)` pairs; terms above `D` are dropped and
    /// repeated indices are summed.
    pub fn from_terms<I>(nvars: usize, degree: u32, terms: I) -> Result<Self, SeriesError>
    where
        I: IntoIterator<Item = (CoefIndex, Complex64)>,
    {
        let mut s = Self::zero(nvars, degree);
        for (a, c) in terms {
            if a.len() != nvars {
                return Err(SeriesError::IndexArity(a.clone(), a.len(), nvars));
            }
            s.add_to(a, c);
        }
        Ok(s)
    }

    pub fn nvars(&self) -> usize {
        self.nvars
    }

    pub fn degree(&self) -> u32 {
        self.degree
    }

    pub fn coeff(&self, alpha: &CoefIndex) -> Complex64 {
        self.coeffs.get(alpha).copied().unwrap_or(ZERO)
    }

    /// Stored (nonzero) terms in graded order.
    pub fn terms(&self) -> impl Iterator<Item = (&CoefIndex, &Complex64)> {
        self.coeffs.iter()
    }

    pub fn num_terms(&self) -> usize {
        self.coeffs.len()
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.is_empty()
    }

    /// Overwrites one coefficient; exact zeros are not stored and indices
    /// above the truncation degree are ignored.
    pub fn set(&mut self, alpha: CoefIndex, c: Complex64) {
        if alpha.degree() > self.degree {
            return;
        }
        if c == ZERO {
            self.coeffs.remove(&alpha);
        } else {
            self.coeffs.insert(alpha, c);
        }
    }

    pub fn add_to(&mut self, alpha: CoefIndex, c: Complex64) {
        if alpha.degree() > self.degree || c == ZERO {
            return;
        }
        use std::collections::btree_map::Entry;
        match self.coeffs.entry(alpha) {
            Entry::Vacant(e) => {
                e.insert(c);
            }
            Entry::Occupied(mut e) => {
                *e.get_mut() += c;
                if *e.get() == ZERO {
                    e.remove();
                }
            }
        }
    }

    pub fn valuation(&self) -> Valuation {
        self.coeffs
            .keys()
            .next()
            .map(|a| Valuation::Finite(a.degree()))
            .unwrap_or(Valuation::Infinite)
    }

    /// Valuation ignoring coefficients with modulus `<= tol`.
    pub fn valuation_above(&self, tol: f64) -> Valuation {
        self.coeffs
            .iter()
            .find(|(_, c)| c.norm() > tol)
            .map(|(a, _)| Valuation::Finite(a.degree()))
            .unwrap_or(Valuation::Infinite)
    }

    /// z-adic norm `2^{-v}`.
    pub fn norm(&self) -> f64 {
        self.valuation().norm()
    }

    pub fn max_abs(&self) -> f64 {
        self.coeffs.values().map(|c| c.norm()).fold(0.0, f64::max)
    }

    /// `sup_α |f_α| r^{|α|}` over the stored coefficients. This is a lower
    /// bound for the norm of any series with this truncation.
    pub fn weighted_norm(&self, r: f64) -> f64 {
        self.coeffs
            .iter()
            .map(|(a, c)| c.norm() * r.powi(a.degree() as i32))
            .fold(0.0, f64::max)
    }

    /// Weighted norm for the trivial absolute value on the coefficients
    /// (`|c| = 1` for `|c| > tol`, else 0): `sup r^{|α|}` over the support.
    /// For `r = 1/2` this is the z-adic norm.
    pub fn ultrametric_weighted_norm(&self, r: f64, tol: f64) -> f64 {
        self.coeffs
            .iter()
            .filter(|(_, c)| c.norm() > tol)
            .map(|(a, _)| r.powi(a.degree() as i32))
            .fold(0.0, f64::max)
    }

    /// Changes the truncation degree; raising it does not invent terms.
    pub fn with_degree(&self, degree: u32) -> ScalarSeries {
        ScalarSeries {
            nvars: self.nvars,
            degree,
            coeffs: self
                .coeffs
                .iter()
                .filter(|(a, _)| a.degree() <= degree)
                .map(|(a, c)| (a.clone(), *c))
                .collect(),
        }
    }

    /// Homogeneous part of total degree `d`.
    pub fn homogeneous(&self, d: u32) -> ScalarSeries {
        ScalarSeries {
            nvars: self.nvars,
            degree: self.degree,
            coeffs: self
                .coeffs
                .iter()
                .filter(|(a, _)| a.degree() == d)
                .map(|(a, c)| (a.clone(), *c))
                .collect(),
        }
    }

    pub fn scale(&self, c: Complex64) -> ScalarSeries {
        if c == ZERO {
            return Self::zero(self.nvars, self.degree);
        }
        let mut out = Self::zero(self.nvars, self.degree);
        for (a, v) in &self.coeffs {
            out.set(a.clone(), v * c);
        }
        out
    }

    pub fn map_coeffs<F>(&self, mut f: F) -> ScalarSeries
    where
        F: FnMut(&CoefIndex, Complex64) -> Complex64,
    {
        let mut out = Self::zero(self.nvars, self.degree);
        for (a, v) in &self.coeffs {
            out.set(a.clone(), f(a, *v));
        }
        out
    }

    fn check_compatible(&self, other: &ScalarSeries) -> Result<(), SeriesError> {
        if self.nvars != other.nvars {
            return Err(SeriesError::VariableMismatch(self.nvars, other.nvars));
        }
        if self.degree != other.degree {
            return Err(SeriesError::TruncationMismatch(self.degree, other.degree));
        }
        Ok(())
    }

    pub fn checked_add(&self, other: &ScalarSeries) -> Result<ScalarSeries, SeriesError> {
        self.check_compatible(other)?;
        let mut out = self.clone();
        for (a, c) in &other.coeffs {
            out.add_to(a.clone(), *c);
        }
        Ok(out)
    }

    pub fn checked_sub(&self, other: &ScalarSeries) -> Result<ScalarSeries, SeriesError> {
        self.check_compatible(other)?;
        let mut out = self.clone();
        for (a, c) in &other.coeffs {
            out.add_to(a.clone(), -*c);
        }
        Ok(out)
    }

    /// Cauchy product truncated at `D`.
    pub fn checked_mul(&self, other: &ScalarSeries) -> Result<ScalarSeries, SeriesError> {
        self.check_compatible(other)?;
        let d = self.degree;
        let mut acc: BTreeMap<CoefIndex, Complex64> = BTreeMap::new();
        for (a, x) in &self.coeffs {
            let da = a.degree();
            for (b, y) in &other.coeffs {
                if da + b.degree() > d {
                    // coefficients are in graded order: the rest is higher
                    break;
                }
                *acc.entry(a.plus(b)).or_insert(ZERO) += x * y;
            }
        }
        acc.retain(|_, v| *v != ZERO);
        Ok(ScalarSeries { nvars: self.nvars, degree: d, coeffs: acc })
    }

    pub fn pow(&self, k: u32) -> ScalarSeries {
        let mut result = Self::one(self.nvars, self.degree);
        let mut base = self.clone();
        let mut e = k;
        while e > 0 {
            if e & 1 == 1 {
                result = &result * &base;
            }
            e >>= 1;
            if e > 0 {
                base = &base * &base;
            }
        }
        result
    }

    /// `Δ^β f = Σ_{α ≥ β} f_α binom(α, β) z^{α−β}`.
    pub fn formal_derivative(&self, beta: &CoefIndex) -> ScalarSeries {
        let mut out = Self::zero(self.nvars, self.degree);
        for (a, c) in &self.coeffs {
            if let Some(rest) = a.checked_sub(beta) {
                out.set(rest, c * a.binomial(beta));
            }
        }
        out
    }

    /// `∂f/∂z_i`.
    pub fn partial(&self, i: usize) -> ScalarSeries {
        self.formal_derivative(&CoefIndex::unit(self.nvars, i))
    }

    /// Evaluation at a numeric point.
    pub fn eval(&self, point: &[Complex64]) -> Complex64 {
        self.coeffs
            .iter()
            .map(|(a, c)| {
                a.entries()
                    .iter()
                    .zip(point)
                    .fold(*c, |acc, (&e, &z)| acc * z.powu(e))
            })
            .fold(ZERO, |acc, x| acc + x)
    }
}

impl Add for &ScalarSeries {
    type Output = ScalarSeries;
    fn add(self, rhs: &ScalarSeries) -> ScalarSeries {
        self.checked_add(rhs).expect("incompatible series in addition")
    }
}

impl Sub for &ScalarSeries {
    type Output = ScalarSeries;
    fn sub(self, rhs: &ScalarSeries) -> ScalarSeries {
        self.checked_sub(rhs).expect("incompatible series in subtraction")
    }
}

impl Mul for &ScalarSeries {
    type Output = ScalarSeries;
    fn mul(self, rhs: &ScalarSeries) -> ScalarSeries {
        self.checked_mul(rhs).expect("incompatible series in multiplication")
    }
}

impl Neg for &ScalarSeries {
    type Output = ScalarSeries;
    fn neg(self) -> ScalarSeries {
        self.scale(Complex64::new(-1.0, 0.0))
    }
}

/// Free-function form of the Cauchy product.
pub fn multiply(f: &ScalarSeries, g: &ScalarSeries) -> Result<ScalarSeries, SeriesError> {
    f.checked_mul(g)
}

/// A tuple of scalar series with common `n` and `D`.
#[derive(Clone, PartialEq)]
pub struct VectorSeries {
    nvars: usize,
    degree: u32,
    components: Vec<ScalarSeries>,
}

impl fmt::Debug for VectorSeries {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_list().entries(self.components.iter()).finish()
    }
}

impl VectorSeries {
    pub fn zero(ncomp: usize, nvars: usize, degree: u32) -> Self {
        VectorSeries { nvars, degree, components: vec![ScalarSeries::zero(nvars, degree); ncomp] }
    }

    /// The identity map `z ↦ z` in `n` variables.
    pub fn identity(n: usize, degree: u32) -> Self {
        VectorSeries {
            nvars: n,
            degree,
            components: (0..n).map(|i| ScalarSeries::variable(n, degree, i)).collect(),
        }
    }

    /// The linear map `z ↦ diag(a) z`.
    pub fn diagonal_linear(diag: &[Complex64], degree: u32) -> Self {
        let n = diag.len();
        VectorSeries {
            nvars: n,
            degree,
            components: (0..n)
                .map(|i| ScalarSeries::monomial(n, degree, CoefIndex::unit(n, i), diag[i]))
                .collect(),
        }
    }

    pub fn from_components(components: Vec<ScalarSeries>) -> Result<Self, SeriesError> {
        let first = components
            .first()
            .ok_or(SeriesError::ComponentMismatch { expected: 1, found: 0 })?;
        let (nvars, degree) = (first.nvars, first.degree);
        for c in &components {
            if c.nvars != nvars {
                return Err(SeriesError::VariableMismatch(nvars, c.nvars));
            }
            if c.degree != degree {
                return Err(SeriesError::TruncationMismatch(degree, c.degree));
            }
        }
        Ok(VectorSeries { nvars, degree, components })
    }

    pub fn nvars(&self) -> usize {
        self.nvars
    }

    pub fn degree(&self) -> u32 {
        self.degree
    }

    pub fn ncomponents(&self) -> usize {
        self.components.len()
    }

    pub fn component(&self, i: usize) -> &ScalarSeries {
        &self.components[i]
    }

    pub fn component_mut(&mut self, i: usize) -> &mut ScalarSeries {
        &mut self.components[i]
    }

    pub fn components(&self) -> &[ScalarSeries] {
        &self.components
    }

    pub fn into_components(self) -> Vec<ScalarSeries> {
        self.components
    }

    /// The coefficient vector `f_α`.
    pub fn coeff(&self, alpha: &CoefIndex) -> Vec<Complex64> {
        self.components.iter().map(|c| c.coeff(alpha)).collect()
    }

    /// Union of the supports of all components, in graded order.
    pub fn support(&self) -> Vec<CoefIndex> {
        let mut keys: Vec<CoefIndex> = self
            .components
            .iter()
            .flat_map(|c| c.coeffs.keys().cloned())
            .collect();
        keys.sort();
        keys.dedup();
        keys
    }

    pub fn is_zero(&self) -> bool {
        self.components.iter().all(ScalarSeries::is_zero)
    }

    /// `v(f) = min_i v(f_i)`.
    pub fn valuation(&self) -> Valuation {
        self.components
            .iter()
            .map(ScalarSeries::valuation)
            .min()
            .unwrap_or(Valuation::Infinite)
    }

    pub fn valuation_above(&self, tol: f64) -> Valuation {
        self.components
            .iter()
            .map(|c| c.valuation_above(tol))
            .min()
            .unwrap_or(Valuation::Infinite)
    }

    /// z-adic norm `‖f‖ = 2^{-v(f)}`.
    pub fn norm(&self) -> f64 {
        self.valuation().norm()
    }

    pub fn max_abs(&self) -> f64 {
        self.components.iter().map(ScalarSeries::max_abs).fold(0.0, f64::max)
    }

    /// `sup_α max_i |f_{α,i}| r^{|α|}` over stored coefficients (lower bound
    /// for the untruncated norm).
    pub fn weighted_norm(&self, r: f64) -> f64 {
        self.components.iter().map(|c| c.weighted_norm(r)).fold(0.0, f64::max)
    }

    pub fn ultrametric_weighted_norm(&self, r: f64, tol: f64) -> f64 {
        self.components
            .iter()
            .map(|c| c.ultrametric_weighted_norm(r, tol))
            .fold(0.0, f64::max)
    }

    pub fn with_degree(&self, degree: u32) -> VectorSeries {
        VectorSeries {
            nvars: self.nvars,
            degree,
            components: self.components.iter().map(|c| c.with_degree(degree)).collect(),
        }
    }

    pub fn homogeneous(&self, d: u32) -> VectorSeries {
        VectorSeries {
            nvars: self.nvars,
            degree: self.degree,
            components: self.components.iter().map(|c| c.homogeneous(d)).collect(),
        }
    }

    pub fn scale(&self, c: Complex64) -> VectorSeries {
        VectorSeries {
            nvars: self.nvars,
            degree: self.degree,
            components: self.components.iter().map(|s| s.scale(c)).collect(),
        }
    }

    /// Multiplies every component by the scalar series `u`.
    pub fn mul_scalar(&self, u: &ScalarSeries) -> VectorSeries {
        VectorSeries {
            nvars: self.nvars,
            degree: self.degree,
            components: self.components.iter().map(|s| s * u).collect(),
        }
    }

    fn check_compatible(&self, other: &VectorSeries) -> Result<(), SeriesError> {
        if self.nvars != other.nvars {
            return Err(SeriesError::VariableMismatch(self.nvars, other.nvars));
        }
        if self.degree != other.degree {
            return Err(SeriesError::TruncationMismatch(self.degree, other.degree));
        }
        if self.components.len() != other.components.len() {
            return Err(SeriesError::ComponentMismatch {
                expected: self.components.len(),
                found: other.components.len(),
            });
        }
        Ok(())
    }

    pub fn checked_add(&self, other: &VectorSeries) -> Result<VectorSeries, SeriesError> {
        self.check_compatible(other)?;
        Ok(VectorSeries {
            nvars: self.nvars,
            degree: self.degree,
            components: self
                .components
                .iter()
                .zip(&other.components)
                .map(|(a, b)| a + b)
                .collect(),
        })
    }

    pub fn checked_sub(&self, other: &VectorSeries) -> Result<VectorSeries, SeriesError> {
        self.check_compatible(other)?;
        Ok(VectorSeries {
            nvars: self.nvars,
            degree: self.degree,
            components: self
                .components
                .iter()
                .zip(&other.components)
                .map(|(a, b)| a - b)
                .collect(),
        })
    }

    /// `F ∘ G = Σ_α F_α G^α`, truncated at `D`. `G` must have one component
    /// per variable of `F`, each of valuation at least one.
    pub fn compose(&self, inner: &VectorSeries) -> Result<VectorSeries, SeriesError> {
        if inner.ncomponents() != self.nvars {
            return Err(SeriesError::ComponentMismatch {
                expected: self.nvars,
                found: inner.ncomponents(),
            });
        }
        if inner.degree != self.degree {
            return Err(SeriesError::TruncationMismatch(self.degree, inner.degree));
        }
        for (i, g) in inner.components.iter().enumerate() {
            if !g.valuation().at_least(1) {
                return Err(SeriesError::InnerNotInMaximalIdeal(i));
            }
        }
        let powers = PowerTable::new(inner);
        let nv = inner.nvars;
        let d = self.degree;
        let mut out: Vec<ScalarSeries> =
            (0..self.ncomponents()).map(|_| ScalarSeries::zero(nv, d)).collect();
        for alpha in self.support() {
            let mono = powers.monomial(&alpha);
            if mono.is_zero() {
                continue;
            }
            for (i, comp) in self.components.iter().enumerate() {
                let c = comp.coeff(&alpha);
                if c != ZERO {
                    out[i] = &out[i] + &mono.scale(c);
                }
            }
        }
        Ok(VectorSeries { nvars: nv, degree: d, components: out })
    }

    /// Applies `Δ^β` component-wise.
    pub fn formal_derivative(&self, beta: &CoefIndex) -> VectorSeries {
        VectorSeries {
            nvars: self.nvars,
            degree: self.degree,
            components: self.components.iter().map(|c| c.formal_derivative(beta)).collect(),
        }
    }

    /// The Taylor coefficients `g_β(f)` of `v ↦ f∘(z+v) = Σ_β g_β v^β`,
    /// for every `|β| <= D`. Requires `v(f) >= 2`.
    pub fn shift_expand(&self) -> Result<BTreeMap<CoefIndex, VectorSeries>, SeriesError> {
        let v = self.valuation();
        if !v.at_least(2) {
            return Err(SeriesError::ValuationTooLow { required: 2, found: v });
        }
        let mut out = BTreeMap::new();
        for beta in indices_between(self.nvars, 0, self.degree) {
            out.insert(beta.clone(), self.formal_derivative(&beta));
        }
        Ok(out)
    }

    /// Multiplies the coefficient of `z^α` in component `j` by `f(α, j)`.
    pub fn map_monomials<F>(&self, mut f: F) -> VectorSeries
    where
        F: FnMut(&CoefIndex, usize, Complex64) -> Complex64,
    {
        VectorSeries {
            nvars: self.nvars,
            degree: self.degree,
            components: self
                .components
                .iter()
                .enumerate()
                .map(|(j, c)| c.map_coeffs(|a, v| f(a, j, v)))
                .collect(),
        }
    }
}

impl Add for &VectorSeries {
    type Output = VectorSeries;
    fn add(self, rhs: &VectorSeries) -> VectorSeries {
        self.checked_add(rhs).expect("incompatible series in addition")
    }
}

impl Sub for &VectorSeries {
    type Output = VectorSeries;
    fn sub(self, rhs: &VectorSeries) -> VectorSeries {
        self.checked_sub(rhs).expect("incompatible series in subtraction")
    }
}

/// Free-function form of [`VectorSeries::compose`].
pub fn compose(outer: &VectorSeries, inner: &VectorSeries) -> Result<VectorSeries, SeriesError> {
    outer.compose(inner)
}

/// Cached powers `G_i^k` used to form monomials `G^α`.
pub(crate) struct PowerTable {
    nvars: usize,
    degree: u32,
    powers: Vec<Vec<ScalarSeries>>,
}

impl PowerTable {
    pub(crate) fn new(inner: &VectorSeries) -> Self {
        let d = inner.degree;
        let powers = inner
            .components
            .iter()
            .map(|g| {
                let mut table = vec![ScalarSeries::one(inner.nvars, d)];
                // beyond this exponent the power vanishes at truncation
                let max_exp = match g.valuation() {
                    Valuation::Finite(0) => d,
                    Valuation::Finite(v) => d / v,
                    Valuation::Infinite => 0,
                };
                for k in 1..=max_exp {
                    let next = &table[k as usize - 1] * g;
                    table.push(next);
                }
                table
            })
            .collect();
        PowerTable { nvars: inner.nvars, degree: d, powers }
    }

    pub(crate) fn monomial(&self, alpha: &CoefIndex) -> ScalarSeries {
        let mut acc: Option<ScalarSeries> = None;
        for (i, &e) in alpha.entries().iter().enumerate() {
            if e == 0 {
                continue;
            }
            let Some(p) = self.powers[i].get(e as usize) else {
                return ScalarSeries::zero(self.nvars, self.degree);
            };
            acc = Some(match acc {
                None => p.clone(),
                Some(a) => &a * p,
            });
            if acc.as_ref().is_some_and(ScalarSeries::is_zero) {
                break;
            }
        }
        acc.unwrap_or_else(|| ScalarSeries::one(self.nvars, self.degree))
    }
}
