//! Spectra, small divisors, the Ω-minimum functions, counting functions,
//! Bruno sums and continued fractions.

use std::f64::consts::PI;
use std::sync::RwLock;

use num_complex::Complex64;
use thiserror::Error;

use crate::series::{indices_between, CoefIndex, Momentum, VectorSeries};

/// Divisors with modulus below this are treated as resonant.
pub const RESONANCE_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DivisorError {
    #[error("divisor at alpha={alpha}, axis {axis} has modulus {modulus:e} below tolerance")]
    DivisorBelowTolerance { alpha: Momentum, axis: usize, modulus: f64 },
    #[error("spectrum is resonant at p={p}: Omega(p)={value:e}")]
    ResonantSpectrum { p: u64, value: f64 },
    #[error("continued fraction terminated after {} partial quotients: input is rational to working precision", .partial.partial_quotients.len())]
    RationalDetected { partial: ContinuedFraction },
    #[error("invalid spectrum: {0}")]
    InvalidSpectrum(String),
    #[error("need {needed} convergents, only {available} available")]
    NotEnoughConvergents { needed: usize, available: usize },
}

/// Distance from `x` to the nearest integer.
pub fn frac_distance(x: f64) -> f64 {
    (x - x.round()).abs()
}

/// Anything that supplies the divisor attached to a monomial `z^ν e_j`.
pub trait Spectrum: Send + Sync {
    fn dim(&self) -> usize;
    /// `λ^ν − λ_j` for germs, `ω·ν − ω_j` for fields.
    fn divisor(&self, nu: &Momentum, axis: usize) -> Complex64;
}

/// Eigenvalues `λ` of the linear part of a germ.
#[derive(Debug, Clone, PartialEq)]
pub struct GermSpectrum {
    lambda: Vec<Complex64>,
    rotation: Option<Vec<f64>>,
}

impl GermSpectrum {
    pub fn new(lambda: Vec<Complex64>) -> Result<Self, DivisorError> {
        if lambda.is_empty() {
            return Err(DivisorError::InvalidSpectrum("empty spectrum".into()));
        }
        for (i, a) in lambda.iter().enumerate() {
            if a.norm() == 0.0 || !a.re.is_finite() || !a.im.is_finite() {
                return Err(DivisorError::InvalidSpectrum(format!("lambda_{} = {a} is not a nonzero finite number", i + 1)));
            }
            for (k, b) in lambda.iter().enumerate().skip(i + 1) {
                if a == b {
                    return Err(DivisorError::InvalidSpectrum(format!("lambda_{} = lambda_{}", i + 1, k + 1)));
                }
            }
        }
        Ok(GermSpectrum { lambda, rotation: None })
    }

    /// `λ_j = e^{2πiω_j}`.
    pub fn from_rotation(omega: Vec<f64>) -> Result<Self, DivisorError> {
        let lambda = omega.iter().map(|&w| Complex64::from_polar(1.0, 2.0 * PI * w)).collect();
        let mut s = Self::new(lambda)?;
        s.rotation = Some(omega);
        Ok(s)
    }

    pub fn lambda(&self) -> &[Complex64] {
        &self.lambda
    }

    pub fn rotation(&self) -> Option<&[f64]> {
        self.rotation.as_deref()
    }

    /// `λ^ν` for a signed exponent.
    pub fn power(&self, nu: &Momentum) -> Complex64 {
        match &self.rotation {
            Some(w) => Complex64::from_polar(1.0, 2.0 * PI * nu.dot(w)),
            None => nu
                .entries()
                .iter()
                .zip(&self.lambda)
                .fold(Complex64::new(1.0, 0.0), |acc, (&e, &l)| acc * l.powi(e as i32)),
        }
    }
}

impl Spectrum for GermSpectrum {
    fn dim(&self) -> usize {
        self.lambda.len()
    }

    fn divisor(&self, nu: &Momentum, axis: usize) -> Complex64 {
        match &self.rotation {
            // e^{2πiω_j}(e^{2πi(ν·ω−ω_j)} − 1), which keeps relative accuracy
            Some(w) => {
                let x = nu.dot(w) - w[axis];
                let x = x - x.round();
                self.lambda[axis] * unit_exp_m1(2.0 * PI * x)
            }
            None => self.power(nu) - self.lambda[axis],
        }
    }
}

/// `e^{iy} − 1 = −2 sin²(y/2) + i sin y`.
fn unit_exp_m1(y: f64) -> Complex64 {
    let s = (0.5 * y).sin();
    Complex64::new(-2.0 * s * s, y.sin())
}

/// Frequencies `ω` of the linear part of a vector field.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldSpectrum {
    omega: Vec<Complex64>,
}

impl FieldSpectrum {
    pub fn new(omega: Vec<Complex64>) -> Result<Self, DivisorError> {
        if omega.is_empty() {
            return Err(DivisorError::InvalidSpectrum("empty spectrum".into()));
        }
        if omega.iter().any(|w| !w.re.is_finite() || !w.im.is_finite()) {
            return Err(DivisorError::InvalidSpectrum("non-finite frequency".into()));
        }
        Ok(FieldSpectrum { omega })
    }

    pub fn real(omega: &[f64]) -> Result<Self, DivisorError> {
        Self::new(omega.iter().map(|&w| Complex64::new(w, 0.0)).collect())
    }

    pub fn omega(&self) -> &[Complex64] {
        &self.omega
    }

    /// Real parts, when every frequency is real.
    pub fn real_omega(&self) -> Option<Vec<f64>> {
        self.omega
            .iter()
            .map(|w| (w.im == 0.0).then_some(w.re))
            .collect()
    }
}

impl Spectrum for FieldSpectrum {
    fn dim(&self) -> usize {
        self.omega.len()
    }

    fn divisor(&self, nu: &Momentum, axis: usize) -> Complex64 {
        nu.dot_complex(&self.omega) - self.omega[axis]
    }
}

/// First `(α, j)` with `2 <= |α| <= max_deg` and `|λ^α − λ_j| <= tol`.
pub fn is_resonant_germ(s: &GermSpectrum, max_deg: u32, tol: f64) -> Option<(CoefIndex, usize)> {
    first_small_divisor(s, max_deg, tol)
}

/// First `(α, j)` with `2 <= |α| <= max_deg` and `|ω·α − ω_j| <= tol`.
pub fn is_resonant_field(s: &FieldSpectrum, max_deg: u32, tol: f64) -> Option<(CoefIndex, usize)> {
    first_small_divisor(s, max_deg, tol)
}

fn first_small_divisor(s: &dyn Spectrum, max_deg: u32, tol: f64) -> Option<(CoefIndex, usize)> {
    let n = s.dim();
    for alpha in indices_between(n, 2, max_deg) {
        let nu = alpha.to_momentum();
        for j in 0..n {
            if s.divisor(&nu, j).norm() <= tol {
                return Some((alpha, j));
            }
        }
    }
    None
}

/// Divides the `(α, j)` coefficient of `g` by the divisor of `s`.
pub fn apply_inverse_d(s: &dyn Spectrum, g: &VectorSeries, tol: f64) -> Result<VectorSeries, DivisorError> {
    check_dims(s, g)?;
    let mut out = g.clone();
    for j in 0..g.ncomponents() {
        let comp = out.component_mut(j);
        let terms: Vec<(CoefIndex, Complex64)> = comp.terms().map(|(a, c)| (a.clone(), *c)).collect();
        for (alpha, c) in terms {
            let nu = alpha.to_momentum();
            let d = s.divisor(&nu, j);
            if d.norm() < tol {
                return Err(DivisorError::DivisorBelowTolerance { alpha: nu, axis: j, modulus: d.norm() });
            }
            comp.set(alpha, c / d);
        }
    }
    Ok(out)
}

/// The forward operator: `g(Az) − Ag(z)` for germs, `Σ ω_i z_i ∂_i g − ω_j g_j` for fields.
pub fn apply_d(s: &dyn Spectrum, g: &VectorSeries) -> Result<VectorSeries, DivisorError> {
    check_dims(s, g)?;
    Ok(g.map_monomials(|alpha, j, c| c * s.divisor(&alpha.to_momentum(), j)))
}

fn check_dims(s: &dyn Spectrum, g: &VectorSeries) -> Result<(), DivisorError> {
    if g.ncomponents() != s.dim() || g.nvars() != s.dim() {
        return Err(DivisorError::InvalidSpectrum(format!(
            "spectrum has dimension {}, series has {} components in {} variables",
            s.dim(),
            g.ncomponents(),
            g.nvars()
        )));
    }
    Ok(())
}

/// Calls `visit` on every `ν ∈ ℤⁿ` with `Σ|νᵢ| = d`.
pub fn for_each_with_abs_degree<F: FnMut(&Momentum)>(n: usize, d: u32, mut visit: F) {
    let mut cur = vec![0i64; n];
    rec_abs(&mut cur, 0, d as i64, &mut visit);
}

fn rec_abs<F: FnMut(&Momentum)>(cur: &mut Vec<i64>, pos: usize, remaining: i64, visit: &mut F) {
    let n = cur.len();
    if pos == n {
        if remaining == 0 {
            visit(&Momentum::new(cur.clone()));
        }
        return;
    }
    if pos == n - 1 {
        if remaining == 0 {
            cur[pos] = 0;
            visit(&Momentum::new(cur.clone()));
        } else {
            for v in [remaining, -remaining] {
                cur[pos] = v;
                visit(&Momentum::new(cur.clone()));
            }
        }
        cur[pos] = 0;
        return;
    }
    for a in 0..=remaining {
        if a == 0 {
            cur[pos] = 0;
            rec_abs(cur, pos + 1, remaining, visit);
        } else {
            for v in [a, -a] {
                cur[pos] = v;
                rec_abs(cur, pos + 1, remaining - a, visit);
            }
        }
    }
    cur[pos] = 0;
}

/// Which momenta enter `Ω̃`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TildeMode {
    /// Momenta a tree can carry: signed degree at least two.
    Realizable,
    /// Every `ν ≠ 0` except the trivial zero `ν = e_j`.
    Full,
}

/// `Ω̃(p) = min_j min |λ^ν − λ_j|` over `0 < Σ|νᵢ| < p`. Returns infinity
/// when the index set is empty.
pub fn omega_tilde(s: &GermSpectrum, p: u64, mode: TildeMode) -> f64 {
    let n = s.dim();
    let mut best = f64::INFINITY;
    for d in 1..p {
        for_each_with_abs_degree(n, d as u32, |nu| {
            if mode == TildeMode::Realizable && nu.signed_degree() < 2 {
                return;
            }
            for j in 0..n {
                if mode == TildeMode::Full && d == 1 && nu.entries()[j] == 1 {
                    continue;
                }
                best = best.min(s.divisor(nu, j).norm());
            }
        });
    }
    best
}

/// Incrementally extended table of per-degree minima behind a lock.
#[derive(Debug, Default)]
struct DegreeMinima {
    // entry d−1 holds the minimum over indices of abs degree exactly d
    per_degree: RwLock<Vec<f64>>,
}

impl DegreeMinima {
    fn prefix_min<F: Fn(u32) -> f64>(&self, p: u64, compute: F) -> f64 {
        let p = p as usize;
        {
            let table = self.per_degree.read().expect("poisoned cache");
            if table.len() >= p {
                return table[..p].iter().copied().fold(f64::INFINITY, f64::min);
            }
        }
        let mut table = self.per_degree.write().expect("poisoned cache");
        while table.len() < p {
            let d = table.len() as u32 + 1;
            table.push(compute(d));
        }
        table[..p].iter().copied().fold(f64::INFINITY, f64::min)
    }
}

/// Thresholds and small quantities used to put lines on scales.
pub trait ScaleDivisor: Send + Sync {
    fn dim(&self) -> usize;
    /// `{ν·ω}` for germs, `|ν·ω|` for fields.
    fn small(&self, nu: &Momentum) -> f64;
    /// The minimum function the scales are cut from, over `0 < Σ|νᵢ| <= p`.
    fn threshold(&self, p: u64) -> f64;
}

/// `Ω(p) = min {ν·ω}` over `0 < Σ|νᵢ| <= p`, memoized.
#[derive(Debug)]
pub struct FracOmega {
    omega: Vec<f64>,
    cache: DegreeMinima,
}

impl FracOmega {
    pub fn new(omega: Vec<f64>) -> Self {
        FracOmega { omega, cache: DegreeMinima::default() }
    }

    pub fn omega(&self) -> &[f64] {
        &self.omega
    }

    pub fn value(&self, p: u64) -> f64 {
        let n = self.omega.len();
        self.cache.prefix_min(p, |d| {
            let mut best = f64::INFINITY;
            for_each_with_abs_degree(n, d, |nu| best = best.min(frac_distance(nu.dot(&self.omega))));
            best
        })
    }

    /// Like [`FracOmega::value`] but resonance (`Ω(p) <= tol`) is an error.
    pub fn checked(&self, p: u64) -> Result<f64, DivisorError> {
        let v = self.value(p);
        if v <= RESONANCE_TOL {
            return Err(DivisorError::ResonantSpectrum { p, value: v });
        }
        Ok(v)
    }
}

impl ScaleDivisor for FracOmega {
    fn dim(&self) -> usize {
        self.omega.len()
    }

    fn small(&self, nu: &Momentum) -> f64 {
        frac_distance(nu.dot(&self.omega))
    }

    fn threshold(&self, p: u64) -> f64 {
        self.value(p)
    }
}

pub fn omega_frac(omega: &[f64], p: u64) -> Result<f64, DivisorError> {
    FracOmega::new(omega.to_vec()).checked(p)
}

/// `Ω̂` restricted to indices with non-negative entries except at most one
/// entry equal to −1, memoized per degree.
#[derive(Debug)]
pub struct HatOmega {
    omega: Vec<Complex64>,
    cache: DegreeMinima,
}

impl HatOmega {
    pub fn new(omega: Vec<Complex64>) -> Self {
        HatOmega { omega, cache: DegreeMinima::default() }
    }

    pub fn from_spectrum(s: &FieldSpectrum) -> Self {
        Self::new(s.omega().to_vec())
    }

    fn degree_min(&self, d: u32) -> f64 {
        let n = self.omega.len();
        let mut best = f64::INFINITY;
        let mut consider = |nu: Momentum| {
            let v = nu.dot_complex(&self.omega).norm();
            if v > RESONANCE_TOL {
                best = best.min(v);
            }
        };
        for a in indices_between(n, d, d) {
            consider(a.to_momentum());
        }
        for i in 0..n {
            for a in indices_between(n, d - 1, d - 1) {
                if a.entries()[i] != 0 {
                    continue;
                }
                let mut v: Vec<i64> = a.entries().iter().map(|&x| x as i64).collect();
                v[i] = -1;
                consider(Momentum::new(v));
            }
        }
        best
    }

    /// `Ω̂(p)` over `0 < Σ|αᵢ| < p`.
    pub fn value(&self, p: u64) -> f64 {
        if p <= 1 {
            return f64::INFINITY;
        }
        self.cache.prefix_min(p - 1, |d| self.degree_min(d))
    }

    /// The same minimum over `0 < Σ|αᵢ| <= p`.
    pub fn value_inclusive(&self, p: u64) -> f64 {
        self.value(p + 1)
    }
}

impl ScaleDivisor for HatOmega {
    fn dim(&self) -> usize {
        self.omega.len()
    }

    fn small(&self, nu: &Momentum) -> f64 {
        nu.dot_complex(&self.omega).norm()
    }

    /// Cut at `Σ|αᵢ| <= p`, so that `Φ̂^{(k)}` vanishes on every index of
    /// degree at most `p_k`.
    fn threshold(&self, p: u64) -> f64 {
        self.value_inclusive(p)
    }
}

pub fn omega_hat(s: &FieldSpectrum, p: u64) -> f64 {
    HatOmega::from_spectrum(s).value(p)
}

/// Increasing integer sequence `p_0 < p_1 < …` used to define scales.
#[derive(Debug, Clone, PartialEq)]
pub enum ScaleSequence {
    /// `p_k = 2^{k+1}`.
    PowersOfTwo,
    Explicit(Vec<u64>),
}

impl Default for ScaleSequence {
    fn default() -> Self {
        ScaleSequence::PowersOfTwo
    }
}

impl ScaleSequence {
    pub fn explicit(p: Vec<u64>) -> Result<Self, DivisorError> {
        if p.first().is_none_or(|&p0| p0 < 2) {
            return Err(DivisorError::InvalidSpectrum("scale sequence must start at p_0 >= 2".into()));
        }
        if p.windows(2).any(|w| w[0] >= w[1]) {
            return Err(DivisorError::InvalidSpectrum("scale sequence must be strictly increasing".into()));
        }
        Ok(ScaleSequence::Explicit(p))
    }

    /// Continued-fraction denominators `q_{k+2}` (so that `p_0 = q_2 >= 2`).
    pub fn from_convergents(cf: &ContinuedFraction) -> Result<Self, DivisorError> {
        Self::explicit(cf.denominators().iter().skip(2).copied().collect())
    }

    pub fn get(&self, k: usize) -> Option<u64> {
        match self {
            ScaleSequence::PowersOfTwo => (k < 62).then(|| 1u64 << (k + 1)),
            ScaleSequence::Explicit(p) => p.get(k).copied(),
        }
    }

    pub fn len_hint(&self) -> Option<usize> {
        match self {
            ScaleSequence::PowersOfTwo => None,
            ScaleSequence::Explicit(p) => Some(p.len()),
        }
    }
}

/// `Φ^{(k)}(ν)`: 1 if the small quantity of `ν` is below `½ threshold(p_k)`.
pub fn phi_counting(nu: &Momentum, k: usize, sd: &dyn ScaleDivisor, seq: &ScaleSequence) -> u8 {
    let Some(pk) = seq.get(k) else { return 0 };
    u8::from(sd.small(nu) < 0.5 * sd.threshold(pk))
}

/// Partial sums `S_K = Σ_{k<=K} log Ω⁻¹(p_{k+1}) / p_k`.
pub fn bruno_sum<F>(omega: F, seq: &ScaleSequence, k_max: usize) -> Result<Vec<f64>, DivisorError>
where
    F: Fn(u64) -> f64,
{
    let mut out = Vec::with_capacity(k_max + 1);
    let mut acc = 0.0;
    for k in 0..=k_max {
        let (Some(pk), Some(pk1)) = (seq.get(k), seq.get(k + 1)) else {
            return Err(DivisorError::NotEnoughConvergents { needed: k + 2, available: k + 1 });
        };
        let v = omega(pk1);
        if v <= RESONANCE_TOL {
            return Err(DivisorError::ResonantSpectrum { p: pk1, value: v });
        }
        acc += -v.ln() / pk as f64;
        out.push(acc);
    }
    Ok(out)
}

/// Regular continued fraction `ω = a_0 + 1/(a_1 + 1/(a_2 + …))`.
#[derive(Debug, Clone, PartialEq)]
pub struct ContinuedFraction {
    pub a0: i64,
    /// `a_1, a_2, …`
    pub partial_quotients: Vec<u64>,
    /// `(p_k, q_k)` for `k = 0, 1, …`, one more than the partial quotients.
    pub convergents: Vec<(i64, u64)>,
    /// The expansion stopped early because the remainder fell below the
    /// accumulated rounding error of an irrational-looking input.
    pub precision_exhausted: bool,
}

impl ContinuedFraction {
    pub fn denominators(&self) -> Vec<u64> {
        self.convergents.iter().map(|&(_, q)| q).collect()
    }
}

/// Expands `ω` into at most `k_max` partial quotients.
pub fn continued_fraction(omega: f64, k_max: usize) -> Result<ContinuedFraction, DivisorError> {
    if !omega.is_finite() {
        return Err(DivisorError::InvalidSpectrum("non-finite rotation number".into()));
    }
    let a0 = omega.floor();
    let mut cf = ContinuedFraction {
        a0: a0 as i64,
        partial_quotients: Vec::new(),
        convergents: vec![(a0 as i64, 1)],
        precision_exhausted: false,
    };
    let (mut p_prev, mut q_prev): (i64, u64) = (1, 0);
    let (mut p_cur, mut q_cur): (i64, u64) = (a0 as i64, 1);
    let mut x = omega - a0;
    let eps = f64::EPSILON * omega.abs().max(1.0);
    for _ in 0..k_max {
        // rounding error in x grows like ε q_k²
        let noise = 8.0 * eps * (q_cur as f64) * (q_cur as f64);
        if x <= noise {
            if noise < 1e-6 {
                return Err(DivisorError::RationalDetected { partial: cf });
            }
            cf.precision_exhausted = true;
            return Ok(cf);
        }
        let y = 1.0 / x;
        let a = y.floor();
        if a > 1e15 {
            cf.precision_exhausted = true;
            return Ok(cf);
        }
        let a_int = a as u64;
        let next = (|| {
            let q = a_int.checked_mul(q_cur)?.checked_add(q_prev)?;
            let p = (a_int as i64).checked_mul(p_cur)?.checked_add(p_prev)?;
            Some((p, q))
        })();
        let Some((p_next, q_next)) = next else {
            cf.precision_exhausted = true;
            return Ok(cf);
        };
        cf.partial_quotients.push(a_int);
        cf.convergents.push((p_next, q_next));
        (p_prev, q_prev, p_cur, q_cur) = (p_cur, q_cur, p_next, q_next);
        x = y - a;
    }
    Ok(cf)
}

/// Partial sums `Σ_{k<=K} log q_{k+1} / q_k`, the truncated Bruno function.
pub fn bruno_series_1d(cf: &ContinuedFraction, k_max: usize) -> Result<Vec<f64>, DivisorError> {
    let q = cf.denominators();
    if q.len() < k_max + 2 {
        return Err(DivisorError::NotEnoughConvergents { needed: k_max + 2, available: q.len() });
    }
    let mut acc = 0.0;
    Ok((0..=k_max)
        .map(|k| {
            acc += (q[k + 1] as f64).ln() / q[k] as f64;
            acc
        })
        .collect())
}

/// Bruno function proxy `B̃(ω)` with the number of terms actually used.
pub fn bruno_function_proxy(omega: f64, k_max: usize) -> Result<(f64, usize), DivisorError> {
    let cf = continued_fraction(omega, k_max + 1)?;
    let avail = cf.convergents.len().saturating_sub(2);
    let k = k_max.min(avail);
    let sums = bruno_series_1d(&cf, k)?;
    Ok((*sums.last().unwrap_or(&0.0), k))
}
