//! Linearization solvers.
//!
//! Three independent routes to the same tangent-to-identity `h`:
//! the order-by-order recursion, the explicit sum over labeled trees, and
//! the fixed-point iteration `H = Λ[w + G(H)·u]` together with its tree
//! values. The germ equation is `D_λ h = f∘(z+h)` and the field equation
//! is `D'_ω h = f∘(z+h)`.

use std::collections::{BTreeMap, HashMap};

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::divisors::{apply_inverse_d, DivisorError, FieldSpectrum, GermSpectrum, Spectrum, RESONANCE_TOL};
use crate::series::{
    factorial, indices_between, CoefIndex, ScalarSeries, SeriesError, Valuation, VectorSeries,
};
use crate::trees::{enumerate_forest, labelings_of, LabelFilter, LabeledTree, RootedTree};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LinearizeError {
    #[error(transparent)]
    Series(#[from] SeriesError),
    #[error(transparent)]
    Divisor(#[from] DivisorError),
    #[error("iteration {iteration} did not gain valuation (difference valuation {valuation})")]
    NoContraction { iteration: usize, valuation: Valuation },
    #[error("invalid problem: {0}")]
    InvalidProblem(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Recursive,
    Tree,
    FixedPoint,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Recursive => "recursive",
            Method::Tree => "tree",
            Method::FixedPoint => "fixedpoint",
        }
    }
}

/// `F(z) = Az + f(z)` with `A = diag(λ)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Germ {
    pub spectrum: GermSpectrum,
    pub f: VectorSeries,
}

/// `ż = Az + f(z)` with `A = diag(ω)`.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorField {
    pub spectrum: FieldSpectrum,
    pub f: VectorSeries,
}

fn check_nonlinearity(dim: usize, f: &VectorSeries) -> Result<(), LinearizeError> {
    if f.nvars() != dim || f.ncomponents() != dim {
        return Err(LinearizeError::InvalidProblem(format!(
            "spectrum has dimension {dim}, nonlinearity has {} components in {} variables",
            f.ncomponents(),
            f.nvars()
        )));
    }
    if !f.valuation().at_least(2) {
        return Err(LinearizeError::InvalidProblem(format!(
            "nonlinearity must start at degree 2, found valuation {}",
            f.valuation()
        )));
    }
    Ok(())
}

impl Germ {
    pub fn new(spectrum: GermSpectrum, f: VectorSeries) -> Result<Self, LinearizeError> {
        check_nonlinearity(spectrum.dim(), &f)?;
        Ok(Germ { spectrum, f })
    }

    /// The full map `Az + f`.
    pub fn map(&self) -> VectorSeries {
        &VectorSeries::diagonal_linear(self.spectrum.lambda(), self.f.degree()) + &self.f
    }
}

impl VectorField {
    pub fn new(spectrum: FieldSpectrum, f: VectorSeries) -> Result<Self, LinearizeError> {
        check_nonlinearity(spectrum.dim(), &f)?;
        Ok(VectorField { spectrum, f })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolveOptions {
    pub tol: f64,
    /// Omit coefficients whose divisor is below `tol` instead of failing.
    pub clip: bool,
    pub weights: TreeWeights,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions { tol: RESONANCE_TOL, clip: false, weights: TreeWeights::Ordered }
    }
}

/// Per-node weight in the tree sum.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TreeWeights {
    /// `binom(α_v, β_v)·β_v!/m_v!`: each unordered choice of line labels
    /// at a node is counted once, matching the recursion for every `n`.
    Ordered,
    /// `binom(α_v, β_v)` alone. Agrees with [`TreeWeights::Ordered`] for
    /// `n = 1` and overcounts for `n >= 2`.
    Plain,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Linearization {
    pub h: VectorSeries,
    pub method: Method,
    pub degree: u32,
    pub residual: ResidualReport,
    /// `(α, j)` pairs omitted in clip mode; non-empty means non-conforming.
    pub clipped: Vec<(CoefIndex, usize)>,
}

impl Linearization {
    pub fn residual_norm(&self) -> f64 {
        self.residual.zadic_norm
    }

    pub fn is_conforming(&self) -> bool {
        self.clipped.is_empty()
    }
}

/// Divides by the divisor, or records the pair when clipping.
fn divide(
    spec: &dyn Spectrum,
    alpha: &CoefIndex,
    j: usize,
    value: Complex64,
    opts: &SolveOptions,
    clipped: &mut Vec<(CoefIndex, usize)>,
) -> Result<Option<Complex64>, LinearizeError> {
    let nu = alpha.to_momentum();
    let d = spec.divisor(&nu, j);
    if d.norm() < opts.tol {
        if opts.clip {
            clipped.push((alpha.clone(), j));
            return Ok(None);
        }
        return Err(DivisorError::DivisorBelowTolerance { alpha: nu, axis: j, modulus: d.norm() }.into());
    }
    Ok(Some(value / d))
}

/// `D h = f∘(z+h)` solved degree by degree for any divisor family.
pub fn solve_recursive_with(
    spec: &dyn Spectrum,
    f: &VectorSeries,
    degree: u32,
    opts: &SolveOptions,
) -> Result<(VectorSeries, Vec<(CoefIndex, usize)>), LinearizeError> {
    check_nonlinearity(spec.dim(), f)?;
    let n = spec.dim();
    let f = f.with_degree(degree);
    let id = VectorSeries::identity(n, degree);
    let mut h = VectorSeries::zero(n, n, degree);
    let mut clipped = Vec::new();
    for d in 2..=degree {
        // degree-d coefficients of f∘(z+h) only see h below degree d
        let rhs = f.compose(&(&id + &h))?.homogeneous(d);
        for alpha in rhs.support() {
            for j in 0..n {
                let c = rhs.component(j).coeff(&alpha);
                if c == Complex64::new(0.0, 0.0) {
                    continue;
                }
                if let Some(v) = divide(spec, &alpha, j, c, opts, &mut clipped)? {
                    h.component_mut(j).set(alpha.clone(), v);
                }
            }
        }
    }
    Ok((h, clipped))
}

/// Product of the node weights and non-root line factors of a labeled
/// tree; the root factor `f_{α_{v1},j}/divisor(α, j)` is left out.
fn tree_inner_product(
    t: &LabeledTree,
    f: &VectorSeries,
    spec: &dyn Spectrum,
    weights: TreeWeights,
    tol: f64,
) -> Result<Complex64, DivisorError> {
    let betas = t.betas();
    let momenta = t.momenta();
    let mut acc = Complex64::new(1.0, 0.0);
    for (v, (alpha_v, beta_v)) in t.node_labels().iter().zip(&betas).enumerate() {
        let mut w = alpha_v.binomial(beta_v);
        if weights == TreeWeights::Ordered {
            w *= beta_v.factorial() / factorial(beta_v.degree());
        }
        acc *= w;
        if v == 0 {
            continue;
        }
        let axis = t.line_axes()[v];
        let c = f.component(axis).coeff(alpha_v);
        let d = spec.divisor(&momenta[v], axis);
        if d.norm() < tol {
            return Err(DivisorError::DivisorBelowTolerance { alpha: momenta[v].clone(), axis, modulus: d.norm() });
        }
        acc *= c / d;
    }
    Ok(acc)
}

/// `Val(θ)` of one labeled tree, root factor included.
pub fn labeled_tree_value(
    t: &LabeledTree,
    f: &VectorSeries,
    spec: &dyn Spectrum,
    weights: TreeWeights,
    tol: f64,
) -> Result<Complex64, DivisorError> {
    let j = t.root_axis();
    let alpha = t.total_momentum();
    let d = spec.divisor(&alpha, j);
    if d.norm() < tol {
        return Err(DivisorError::DivisorBelowTolerance { alpha, axis: j, modulus: d.norm() });
    }
    let root = f.component(j).coeff(&t.node_labels()[0]);
    Ok(root / d * tree_inner_product(t, f, spec, weights, tol)?)
}

/// `Σ_α z^α Σ Val(θ)` over every labeling of one plane tree with
/// `|α| <= degree`: the contribution of `θ` to `h`.
pub fn tree_contribution(
    tree: &RootedTree,
    spec: &dyn Spectrum,
    f: &VectorSeries,
    degree: u32,
    opts: &SolveOptions,
) -> Result<VectorSeries, LinearizeError> {
    let n = spec.dim();
    let f = f.with_degree(degree);
    let support = f.support();
    let mut h = VectorSeries::zero(n, n, degree);
    for alpha in indices_between(n, tree.order() as u32 + 1, degree) {
        for j in 0..n {
            let mut sum = Complex64::new(0.0, 0.0);
            for t in labelings_of(tree, &alpha, j, &support, LabelFilter::Contributing) {
                sum += labeled_tree_value(&t, &f, spec, opts.weights, opts.tol)?;
            }
            h.component_mut(j).set(alpha.clone(), sum);
        }
    }
    Ok(h)
}

/// Explicit tree sum for every `(α, j)`, `2 <= |α| <= D`. Coefficients of
/// distinct `α` are independent and computed in parallel; each one is
/// summed over trees ascending in order, then in enumeration order.
pub fn solve_tree_with(
    spec: &dyn Spectrum,
    f: &VectorSeries,
    degree: u32,
    opts: &SolveOptions,
) -> Result<(VectorSeries, Vec<(CoefIndex, usize)>), LinearizeError> {
    check_nonlinearity(spec.dim(), f)?;
    let n = spec.dim();
    let f = f.with_degree(degree);
    let support = f.support();
    let forests: Vec<Vec<RootedTree>> = (0..degree as usize).map(enumerate_forest).collect();
    let alphas = indices_between(n, 2, degree);
    type Row = (CoefIndex, Vec<Option<Complex64>>, Vec<(CoefIndex, usize)>);
    let rows: Result<Vec<Row>, LinearizeError> = alphas
        .par_iter()
        .map(|alpha| {
            // labelings do not depend on the root axis, so one forest serves every j
            let mut terms: Vec<(CoefIndex, Complex64)> = Vec::new();
            let mut clipped = Vec::new();
            let mut inner_failed = false;
            for order in 1..alpha.degree() as usize {
                for tree in &forests[order] {
                    for t in labelings_of(tree, alpha, 0, &support, LabelFilter::Contributing) {
                        match tree_inner_product(&t, &f, spec, opts.weights, opts.tol) {
                            Ok(p) => terms.push((t.node_labels()[0].clone(), p)),
                            Err(_) if opts.clip => inner_failed = true,
                            Err(e) => return Err(e.into()),
                        }
                    }
                }
            }
            let mut values = Vec::with_capacity(n);
            for j in 0..n {
                let mut sum = Complex64::new(0.0, 0.0);
                for (root_label, p) in &terms {
                    sum += f.component(j).coeff(root_label) * p;
                }
                if sum == Complex64::new(0.0, 0.0) {
                    values.push(None);
                    continue;
                }
                if inner_failed {
                    clipped.push((alpha.clone(), j));
                    values.push(None);
                    continue;
                }
                values.push(divide(spec, alpha, j, sum, opts, &mut clipped)?);
            }
            Ok((alpha.clone(), values, clipped))
        })
        .collect();
    let mut h = VectorSeries::zero(n, n, degree);
    let mut clipped = Vec::new();
    for (alpha, values, c) in rows? {
        for (j, v) in values.into_iter().enumerate() {
            if let Some(v) = v {
                h.component_mut(j).set(alpha.clone(), v);
            }
        }
        clipped.extend(c);
    }
    Ok((h, clipped))
}

fn finish(
    problem: ProblemRef<'_>,
    h: VectorSeries,
    method: Method,
    degree: u32,
    clipped: Vec<(CoefIndex, usize)>,
) -> Result<Linearization, LinearizeError> {
    let residual = verify_conjugacy(problem, &h)?;
    Ok(Linearization { h, method, degree, residual, clipped })
}

pub fn solve_recursive_germ(g: &Germ, degree: u32, opts: &SolveOptions) -> Result<Linearization, LinearizeError> {
    let (h, clipped) = solve_recursive_with(&g.spectrum, &g.f, degree, opts)?;
    finish(ProblemRef::Germ(g), h, Method::Recursive, degree, clipped)
}

pub fn solve_tree_germ(g: &Germ, degree: u32, opts: &SolveOptions) -> Result<Linearization, LinearizeError> {
    let (h, clipped) = solve_tree_with(&g.spectrum, &g.f, degree, opts)?;
    finish(ProblemRef::Germ(g), h, Method::Tree, degree, clipped)
}

pub fn solve_recursive_field(v: &VectorField, degree: u32, opts: &SolveOptions) -> Result<Linearization, LinearizeError> {
    let (h, clipped) = solve_recursive_with(&v.spectrum, &v.f, degree, opts)?;
    finish(ProblemRef::Field(v), h, Method::Recursive, degree, clipped)
}

pub fn solve_tree_field(v: &VectorField, degree: u32, opts: &SolveOptions) -> Result<Linearization, LinearizeError> {
    let (h, clipped) = solve_tree_with(&v.spectrum, &v.f, degree, opts)?;
    finish(ProblemRef::Field(v), h, Method::Tree, degree, clipped)
}

pub fn solve_fixed_point_germ(g: &Germ, degree: u32, opts: &SolveOptions) -> Result<Linearization, LinearizeError> {
    let h = siegel_fixed_point(&g.spectrum, &g.f, degree, opts.tol)?;
    finish(ProblemRef::Germ(g), h, Method::FixedPoint, degree, Vec::new())
}

pub fn solve_fixed_point_field(v: &VectorField, degree: u32, opts: &SolveOptions) -> Result<Linearization, LinearizeError> {
    let h = siegel_fixed_point(&v.spectrum, &v.f, degree, opts.tol)?;
    finish(ProblemRef::Field(v), h, Method::FixedPoint, degree, Vec::new())
}

/// `h = D⁻¹ G_f(h)`, the fixed point with `u = 1`, `w = 0`.
fn siegel_fixed_point(spec: &dyn Spectrum, f: &VectorSeries, degree: u32, tol: f64) -> Result<VectorSeries, LinearizeError> {
    check_nonlinearity(spec.dim(), f)?;
    let n = spec.dim();
    let op = InverseDivisor { spectrum: spec, tol };
    let family = GfFamily::new(f.with_degree(degree))?;
    let u = ScalarSeries::one(n, degree);
    let w = VectorSeries::zero(n, n, degree);
    Ok(fixed_point_inversion(&op, &family, &u, &w)?.h)
}

pub fn solve_germ(g: &Germ, degree: u32, method: Method, opts: &SolveOptions) -> Result<Linearization, LinearizeError> {
    match method {
        Method::Recursive => solve_recursive_germ(g, degree, opts),
        Method::Tree => solve_tree_germ(g, degree, opts),
        Method::FixedPoint => solve_fixed_point_germ(g, degree, opts),
    }
}

pub fn solve_field(v: &VectorField, degree: u32, method: Method, opts: &SolveOptions) -> Result<Linearization, LinearizeError> {
    match method {
        Method::Recursive => solve_recursive_field(v, degree, opts),
        Method::Tree => solve_tree_field(v, degree, opts),
        Method::FixedPoint => solve_fixed_point_field(v, degree, opts),
    }
}

/// Solution of `H = w + u·G(H)` in the variables `(u, w_1, …, w_m)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Inversion {
    pub h: VectorSeries,
    pub method: Method,
    pub degree: u32,
    pub residual: ResidualReport,
}

/// `u = x_0` and `w = (x_1, …, x_m)` in `m + 1` variables.
pub fn inversion_variables(m: usize, degree: u32) -> (ScalarSeries, VectorSeries) {
    let u = ScalarSeries::variable(m + 1, degree, 0);
    let w = (1..=m).map(|i| ScalarSeries::variable(m + 1, degree, i)).collect();
    (u, VectorSeries::from_components(w).expect("components share one shape"))
}

/// Solves the inversion problem for `G` (an `m`-component series in `m`
/// variables) with the fixed point or the tree sum. The recursive method
/// has no meaning here and is rejected.
pub fn solve_inversion(g: &VectorSeries, degree: u32, method: Method) -> Result<Inversion, LinearizeError> {
    let family = PowerSeriesMap::new(g.clone())?;
    let (u, w) = inversion_variables(g.ncomponents(), degree);
    let h = match method {
        Method::FixedPoint => fixed_point_inversion(&IdentityOperator, &family, &u, &w)?.h,
        Method::Tree => tree_sum_inversion(&IdentityOperator, &family, &u, &w, degree as usize)?,
        Method::Recursive => {
            return Err(LinearizeError::InvalidProblem("inversion problems use the fixedpoint or tree method".into()))
        }
    };
    let residual = verify_inversion(&family, &u, &w, &h)?;
    Ok(Inversion { h, method, degree, residual })
}

/// An additive map with `v(Λg) >= v(g)`.
pub trait Operator: Sync {
    fn apply(&self, g: &VectorSeries) -> Result<VectorSeries, LinearizeError>;
}

pub struct IdentityOperator;

impl Operator for IdentityOperator {
    fn apply(&self, g: &VectorSeries) -> Result<VectorSeries, LinearizeError> {
        Ok(g.clone())
    }
}

/// Monomial-wise division by the divisors of a spectrum.
pub struct InverseDivisor<'a> {
    pub spectrum: &'a dyn Spectrum,
    pub tol: f64,
}

impl Operator for InverseDivisor<'_> {
    fn apply(&self, g: &VectorSeries) -> Result<VectorSeries, LinearizeError> {
        Ok(apply_inverse_d(self.spectrum, g, self.tol)?)
    }
}

/// A map `G` that can be evaluated on series and expanded around a point:
/// `G(x + v) = Σ_β g_β(x) v^β`.
pub trait TaylorFamily: Sync {
    /// Number of components of the unknown.
    fn ncomponents(&self) -> usize;
    fn evaluate(&self, x: &VectorSeries) -> Result<VectorSeries, LinearizeError>;
    /// `g_β(x)` for every `|β| <= max_order`.
    fn taylor_at(&self, x: &VectorSeries, max_order: u32) -> Result<BTreeMap<CoefIndex, VectorSeries>, LinearizeError>;
}

/// `G_f(x) = f∘(z + x)`, expanded through the shifted coefficients.
pub struct GfFamily {
    f: VectorSeries,
    shifted: BTreeMap<CoefIndex, VectorSeries>,
}

impl GfFamily {
    pub fn new(f: VectorSeries) -> Result<Self, LinearizeError> {
        let shifted = f.shift_expand()?;
        Ok(GfFamily { f, shifted })
    }
}

impl TaylorFamily for GfFamily {
    fn ncomponents(&self) -> usize {
        self.f.nvars()
    }

    fn evaluate(&self, x: &VectorSeries) -> Result<VectorSeries, LinearizeError> {
        let id = VectorSeries::identity(self.f.nvars(), self.f.degree());
        Ok(self.f.compose(&(&id + x))?)
    }

    fn taylor_at(&self, x: &VectorSeries, max_order: u32) -> Result<BTreeMap<CoefIndex, VectorSeries>, LinearizeError> {
        let id = VectorSeries::identity(self.f.nvars(), self.f.degree());
        let shift = &id + x;
        let mut out = BTreeMap::new();
        for (beta, g) in &self.shifted {
            if beta.degree() > max_order {
                break;
            }
            let value = if x.is_zero() { g.clone() } else { g.compose(&shift)? };
            out.insert(beta.clone(), value);
        }
        Ok(out)
    }
}

/// `G(x) = P(x)` for a power series `P` in the unknown's components;
/// `g_β = (Δ^β P)∘x`.
pub struct PowerSeriesMap {
    p: VectorSeries,
}

impl PowerSeriesMap {
    /// `p` has one component per unknown component and as many variables.
    pub fn new(p: VectorSeries) -> Result<Self, LinearizeError> {
        if p.nvars() != p.ncomponents() {
            return Err(LinearizeError::InvalidProblem(format!(
                "map has {} components in {} variables",
                p.ncomponents(),
                p.nvars()
            )));
        }
        Ok(PowerSeriesMap { p })
    }

    fn outer_for(&self, x: &VectorSeries) -> VectorSeries {
        self.p.with_degree(x.degree())
    }
}

impl TaylorFamily for PowerSeriesMap {
    fn ncomponents(&self) -> usize {
        self.p.ncomponents()
    }

    fn evaluate(&self, x: &VectorSeries) -> Result<VectorSeries, LinearizeError> {
        Ok(compose_across(&self.outer_for(x), x)?)
    }

    fn taylor_at(&self, x: &VectorSeries, max_order: u32) -> Result<BTreeMap<CoefIndex, VectorSeries>, LinearizeError> {
        let outer = self.outer_for(x);
        let mut out = BTreeMap::new();
        for beta in indices_between(self.p.nvars(), 0, max_order) {
            let d = outer.formal_derivative(&beta);
            out.insert(beta, compose_across(&d, x)?);
        }
        Ok(out)
    }
}

/// `P∘x` where `P` lives in `m` variables and `x` has `m` components in
/// any number of variables.
fn compose_across(p: &VectorSeries, x: &VectorSeries) -> Result<VectorSeries, SeriesError> {
    p.with_degree(x.degree()).compose(x)
}

#[derive(Debug, Clone, PartialEq)]
pub struct FixedPoint {
    pub h: VectorSeries,
    pub iterations: usize,
}

/// Iterates `H^{(j+1)} = Λ[w + G(H^{(j)})·u]` from `H^{(0)} = Λw` until the
/// truncation stops changing. Each step must raise the valuation of the
/// update, otherwise the contraction hypothesis is violated.
pub fn fixed_point_inversion(
    op: &dyn Operator,
    family: &dyn TaylorFamily,
    u: &ScalarSeries,
    w: &VectorSeries,
) -> Result<FixedPoint, LinearizeError> {
    let degree = w.degree();
    let mut h = op.apply(w)?;
    let mut last_gain = Valuation::Finite(0);
    let max_iter = degree as usize + 3;
    for iteration in 1..=max_iter {
        let g = family.evaluate(&h)?.mul_scalar(u);
        let next = op.apply(&(w + &g))?;
        let diff = &next - &h;
        if diff.is_zero() {
            return Ok(FixedPoint { h: next, iterations: iteration });
        }
        let v = diff.valuation();
        if iteration > 1 && v <= last_gain {
            return Err(LinearizeError::NoContraction { iteration, valuation: v });
        }
        last_gain = v;
        h = next;
    }
    Err(LinearizeError::NoContraction { iteration: max_iter, valuation: last_gain })
}

/// Tree values `Val(θ) = (1/t!) Λ[d^tG(Λw)(Val(θ_1), …, Val(θ_t))·u]`,
/// memoized per tree.
pub struct TreeEvaluator<'a> {
    op: &'a dyn Operator,
    u: ScalarSeries,
    taylor: BTreeMap<CoefIndex, VectorSeries>,
    ncomp: usize,
    max_order: u32,
    memo: HashMap<RootedTree, VectorSeries>,
}

impl<'a> TreeEvaluator<'a> {
    /// Prepares values for trees of order up to `max_tree_order`.
    pub fn new(
        op: &'a dyn Operator,
        family: &dyn TaylorFamily,
        u: &ScalarSeries,
        w: &VectorSeries,
        max_tree_order: usize,
    ) -> Result<Self, LinearizeError> {
        let x0 = op.apply(w)?;
        let max_order = max_tree_order.saturating_sub(1) as u32;
        let taylor = family.taylor_at(&x0, max_order)?;
        Ok(TreeEvaluator { op, u: u.clone(), taylor, ncomp: family.ncomponents(), max_order, memo: HashMap::new() })
    }

    pub fn value(&mut self, theta: &RootedTree) -> Result<VectorSeries, LinearizeError> {
        if let Some(v) = self.memo.get(theta) {
            return Ok(v.clone());
        }
        let (t, subtrees) = theta.standard_decomposition();
        if t > self.max_order {
            return Err(LinearizeError::InvalidProblem(format!("tree {theta} exceeds the prepared order")));
        }
        let children: Vec<VectorSeries> = subtrees.iter().map(|s| self.value(s)).collect::<Result<_, _>>()?;
        let m = self.ncomp;
        let g0 = &self.taylor[&CoefIndex::zero(m)];
        let mut sum = VectorSeries::zero(m, g0.nvars(), g0.degree());
        let combos = m.pow(t);
        let inv_t_fact = 1.0 / factorial(t);
        for code in 0..combos {
            let mut c = code;
            let mut l = vec![0usize; t as usize];
            for slot in l.iter_mut().rev() {
                *slot = c % m;
                c /= m;
            }
            let mut beta = vec![0u32; m];
            for &i in &l {
                beta[i] += 1;
            }
            let beta = CoefIndex::new(beta);
            let g = &self.taylor[&beta];
            if g.is_zero() {
                continue;
            }
            let mut prod = ScalarSeries::one(g.nvars(), g.degree());
            for (child, &i) in children.iter().zip(&l) {
                prod = &prod * child.component(i);
                if prod.is_zero() {
                    break;
                }
            }
            if prod.is_zero() {
                continue;
            }
            let weight = beta.factorial() * inv_t_fact;
            sum = &sum + &g.mul_scalar(&prod).scale(Complex64::new(weight, 0.0));
        }
        let value = self.op.apply(&sum.mul_scalar(&self.u))?;
        self.memo.insert(theta.clone(), value.clone());
        Ok(value)
    }

    /// `Σ_{θ∈T_N} Val(θ)`.
    pub fn order_sum(&mut self, order: usize) -> Result<VectorSeries, LinearizeError> {
        let g0 = &self.taylor[&CoefIndex::zero(self.ncomp)];
        let mut sum = VectorSeries::zero(self.ncomp, g0.nvars(), g0.degree());
        for theta in enumerate_forest(order) {
            sum = &sum + &self.value(&theta)?;
        }
        Ok(sum)
    }
}

pub fn tree_value(
    theta: &RootedTree,
    op: &dyn Operator,
    family: &dyn TaylorFamily,
    u: &ScalarSeries,
    w: &VectorSeries,
) -> Result<VectorSeries, LinearizeError> {
    TreeEvaluator::new(op, family, u, w, theta.order())?.value(theta)
}

/// `Λw + Σ_{N<=max_order} Σ_{θ∈T_N} Val(θ)`.
pub fn tree_sum_inversion(
    op: &dyn Operator,
    family: &dyn TaylorFamily,
    u: &ScalarSeries,
    w: &VectorSeries,
    max_order: usize,
) -> Result<VectorSeries, LinearizeError> {
    let mut eval = TreeEvaluator::new(op, family, u, w, max_order)?;
    let mut h = op.apply(w)?;
    for order in 1..=max_order {
        h = &h + &eval.order_sum(order)?;
    }
    Ok(h)
}

/// `c_N(w) = (1/N!) d^{N−1}/dw^{N−1} G(w)^N` for `N = 1..=max_order`,
/// each truncated at degree `w_degree`.
pub fn classical_lagrange_1d(g: &ScalarSeries, max_order: u32, w_degree: u32) -> Result<Vec<ScalarSeries>, LinearizeError> {
    if g.nvars() != 1 {
        return Err(LinearizeError::InvalidProblem("classical formula needs one variable".into()));
    }
    let mut out = Vec::with_capacity(max_order as usize);
    for n in 1..=max_order {
        let work = g.with_degree(w_degree + n - 1);
        let power = work.pow(n);
        // d^{N−1} = (N−1)! Δ^{N−1}
        let d = power.formal_derivative(&CoefIndex::new(vec![n - 1]));
        let scale = factorial(n - 1) / factorial(n);
        out.push(d.scale(Complex64::new(scale, 0.0)).with_degree(w_degree));
    }
    Ok(out)
}

/// Coefficient of `x_var^k` in `s`, as a series in the same variables of
/// degree `D − k` (the `var` exponent is zero in every stored index).
pub fn coefficient_of_power(s: &ScalarSeries, var: usize, k: u32) -> ScalarSeries {
    let d = s.degree().saturating_sub(k);
    let mut out = ScalarSeries::zero(s.nvars(), d);
    for (alpha, c) in s.terms() {
        if alpha.entries()[var] == k {
            let mut e = alpha.entries().to_vec();
            e[var] = 0;
            out.set(CoefIndex::new(e), *c);
        }
    }
    out
}

/// Drops variable `var` from a series whose indices never use it.
pub fn drop_variable(s: &ScalarSeries, var: usize) -> ScalarSeries {
    let mut out = ScalarSeries::zero(s.nvars() - 1, s.degree());
    for (alpha, c) in s.terms() {
        let mut e = alpha.entries().to_vec();
        e.remove(var);
        out.set(CoefIndex::new(e), *c);
    }
    out
}

#[derive(Debug, Clone, Copy)]
pub enum ProblemRef<'a> {
    Germ(&'a Germ),
    Field(&'a VectorField),
}

/// Size of the conjugacy defect at truncation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResidualReport {
    /// `2^{-v}` of the defect, counting only coefficients whose relative
    /// size exceeds the acceptance tolerance.
    pub zadic_norm: f64,
    /// Exact valuation of the computed defect (rounding noise included).
    pub raw_valuation: Option<u32>,
    pub max_abs: f64,
    /// `max |defect_α| / max(1, max_{|β|=|α|}(|h_β|, |f_β|))`.
    pub max_relative: f64,
    pub tolerance: f64,
}

impl ResidualReport {
    pub fn passes(&self) -> bool {
        self.max_relative <= self.tolerance
    }
}

pub const RESIDUAL_TOL: f64 = 1e-9;

/// `F∘H − H∘(Az)` for germs, `D'_ω h − f∘(z+h)` for fields, with `H = z + h`.
pub fn verify_conjugacy(problem: ProblemRef<'_>, h: &VectorSeries) -> Result<ResidualReport, LinearizeError> {
    let (f, defect) = match problem {
        ProblemRef::Germ(g) => {
            let d = h.degree();
            let f = g.f.with_degree(d);
            let big_f = Germ { spectrum: g.spectrum.clone(), f: f.clone() }.map();
            let big_h = &VectorSeries::identity(h.nvars(), d) + h;
            let a = VectorSeries::diagonal_linear(g.spectrum.lambda(), d);
            let lhs = big_f.compose(&big_h)?;
            let rhs = big_h.compose(&a)?;
            (f, &lhs - &rhs)
        }
        ProblemRef::Field(v) => {
            let d = h.degree();
            let f = v.f.with_degree(d);
            let omega = v.spectrum.omega();
            let n = h.nvars();
            let mut comps = Vec::with_capacity(n);
            for j in 0..h.ncomponents() {
                let hj = h.component(j);
                let mut acc = hj.scale(-omega[j]);
                for (i, w) in omega.iter().enumerate() {
                    let zi = ScalarSeries::variable(n, d, i);
                    acc = &acc + &(&zi * &hj.partial(i)).scale(*w);
                }
                comps.push(acc);
            }
            let lhs = VectorSeries::from_components(comps)?;
            let id = VectorSeries::identity(n, d);
            let rhs = f.compose(&(&id + h))?;
            (f, &lhs - &rhs)
        }
    };
    Ok(residual_report(&defect, &[h, &f]))
}

/// `H − w − u·G(H)` for an inversion problem.
pub fn verify_inversion(
    family: &dyn TaylorFamily,
    u: &ScalarSeries,
    w: &VectorSeries,
    h: &VectorSeries,
) -> Result<ResidualReport, LinearizeError> {
    let g = family.evaluate(h)?.mul_scalar(u);
    let defect = &(h - w) - &g;
    Ok(residual_report(&defect, &[h, w, &g]))
}

/// Relative size of a defect, per degree, against the largest coefficient
/// of `scales` at that degree (and at least 1).
fn residual_report(defect: &VectorSeries, scales: &[&VectorSeries]) -> ResidualReport {
    let d = defect.degree();
    let mut scale = vec![1.0f64; d as usize + 1];
    for s in scales {
        for comp in s.components() {
            for (alpha, c) in comp.terms() {
                let k = alpha.degree() as usize;
                if k <= d as usize {
                    scale[k] = scale[k].max(c.norm());
                }
            }
        }
    }
    let mut max_abs = 0.0f64;
    let mut max_rel = 0.0f64;
    let mut first_bad: Option<u32> = None;
    for comp in defect.components() {
        for (alpha, c) in comp.terms() {
            let k = alpha.degree();
            let rel = c.norm() / scale[k as usize];
            max_abs = max_abs.max(c.norm());
            max_rel = max_rel.max(rel);
            if rel > RESIDUAL_TOL {
                first_bad = Some(first_bad.map_or(k, |b| b.min(k)));
            }
        }
    }
    ResidualReport {
        zadic_norm: first_bad.map_or(0.0, |k| 0.5f64.powi(k as i32)),
        raw_valuation: defect.valuation().finite(),
        max_abs,
        max_relative: max_rel,
        tolerance: RESIDUAL_TOL,
    }
}

/// `max |a_α − b_α| / max(|a_α|, |b_α|, floor)` over both supports.
pub fn max_relative_difference(a: &VectorSeries, b: &VectorSeries, floor: f64) -> f64 {
    let mut support = a.support();
    support.extend(b.support());
    support.sort();
    support.dedup();
    let mut worst = 0.0f64;
    for alpha in support {
        for (x, y) in a.coeff(&alpha).into_iter().zip(b.coeff(&alpha)) {
            worst = worst.max((x - y).norm() / x.norm().max(y.norm()).max(floor));
        }
    }
    worst
}

/// Relative agreement `|a − b| <= rel·max(|a|,|b|)`, or `|a − b| <= abs` near zero.
pub fn series_agree(a: &VectorSeries, b: &VectorSeries, rel: f64, abs: f64) -> bool {
    let mut support = a.support();
    support.extend(b.support());
    support.sort();
    support.dedup();
    support.iter().all(|alpha| {
        a.coeff(alpha)
            .into_iter()
            .zip(b.coeff(alpha))
            .all(|(x, y)| {
                let diff = (x - y).norm();
                diff <= abs || diff <= rel * x.norm().max(y.norm())
            })
    })
}
