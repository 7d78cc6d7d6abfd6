//! Coefficient growth, ultradifferentiable classes and arithmetical
//! conditions.
//!
//! Every limsup-type statement is reported over the computed range only:
//! a sequence is called unbounded when it crosses a fixed threshold, never
//! by extrapolation.

use std::f64::consts::SQRT_2;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::divisors::{bruno_function_proxy, DivisorError, FieldSpectrum, GermSpectrum, ScaleSequence, RESONANCE_TOL};
use crate::linearize::{solve_recursive_field, solve_recursive_germ, Germ, LinearizeError, SolveOptions, VectorField};
use crate::series::{CoefIndex, ScalarSeries, VectorSeries};

/// `inf M_k^{1/k}` below this counts as a violation of hypothesis 0.
pub const HYPOTHESIS0_THRESHOLD: f64 = 0.1;
/// Condition and Bruno partial sums above this are reported unbounded.
pub const CONDITION_DIVERGENCE: f64 = 100.0;
/// Majorant partial sums above this are reported divergent.
pub const MAJORANT_DIVERGENCE: f64 = 1e6;
/// Partial quotients used for the Bruno function proxy.
pub const BRUNO_PROXY_TERMS: usize = 30;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DiagnosticsError {
    #[error("hypothesis {index} fails at k={k}, l={l}")]
    HypothesisViolated { index: u8, k: usize, l: usize },
    #[error("coefficient at alpha={alpha}, axis {axis} has modulus {modulus} > 1")]
    FamilyViolation { alpha: CoefIndex, axis: usize, modulus: f64 },
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error(transparent)]
    Linearize(#[from] LinearizeError),
    #[error(transparent)]
    Divisor(#[from] DivisorError),
}

/// The weight sequence `(M_k)` of an ultradifferentiable class, handled in
/// log space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ClassSpec {
    /// `M_k = (k!)^s`.
    Gevrey { s: f64 },
    /// `M_k = C^k`.
    Geometric { c: f64 },
    /// `M_1, M_2, …` given explicitly.
    Table { values: Vec<f64> },
}

impl ClassSpec {
    pub fn analytic() -> Self {
        ClassSpec::Geometric { c: 1.0 }
    }

    /// `log M_k`; `M_0 = 1`. `None` past the end of a table.
    pub fn log_m(&self, k: usize) -> Option<f64> {
        match self {
            ClassSpec::Gevrey { s } => Some(s * log_factorial(k)),
            ClassSpec::Geometric { c } => Some(k as f64 * c.ln()),
            ClassSpec::Table { values } => {
                if k == 0 {
                    Some(0.0)
                } else {
                    values.get(k - 1).map(|v| v.ln())
                }
            }
        }
    }

    /// Parses `gevrey:s`, `geometric:C` or `table:v1,v2,…`.
    pub fn parse(text: &str) -> Result<Self, DiagnosticsError> {
        let (kind, arg) = text
            .split_once(':')
            .ok_or_else(|| DiagnosticsError::InvalidInput(format!("class '{text}' is not kind:value")))?;
        let num = |s: &str| {
            s.trim()
                .parse::<f64>()
                .map_err(|_| DiagnosticsError::InvalidInput(format!("'{s}' is not a number")))
        };
        match kind {
            "gevrey" => Ok(ClassSpec::Gevrey { s: num(arg)? }),
            "geometric" => Ok(ClassSpec::Geometric { c: num(arg)? }),
            "table" => Ok(ClassSpec::Table { values: arg.split(',').map(num).collect::<Result<_, _>>()? }),
            _ => Err(DiagnosticsError::InvalidInput(format!("unknown class kind '{kind}'"))),
        }
    }
}

pub fn log_factorial(k: usize) -> f64 {
    (2..=k).map(|i| (i as f64).ln()).sum()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassReport {
    pub k_max: usize,
    /// `inf_{k<=K} M_k^{1/k}`.
    pub inf_root: f64,
    /// Smallest `C₁` with `M_{k+1} <= C₁^{k+1} M_k` for `k < K`.
    pub c1: f64,
    /// Hypotheses 0 to 3.
    pub holds: [bool; 4],
    pub first_violation: Option<(u8, usize, usize)>,
}

const LOG_TOL: f64 = 1e-12;

/// Checks hypotheses 0 to 3 for `k, l <= K`, recording the first violation.
pub fn class_report(c: &ClassSpec, k_max: usize) -> Result<ClassReport, DiagnosticsError> {
    if k_max < 3 {
        return Err(DiagnosticsError::InvalidInput("need K >= 3".into()));
    }
    let need = 2 * k_max;
    let logs: Vec<f64> = (0..=need)
        .map(|k| c.log_m(k))
        .collect::<Option<_>>()
        .ok_or_else(|| DiagnosticsError::InvalidInput(format!("class table needs {need} entries")))?;
    let mut holds = [true; 4];
    let mut first: Option<(u8, usize, usize)> = None;
    let mut note = |i: u8, k: usize, l: usize, holds: &mut [bool; 4]| {
        holds[i as usize] = false;
        if first.is_none() {
            first = Some((i, k, l));
        }
    };
    let mut inf_root = f64::INFINITY;
    let mut inf_at = 1;
    for (k, &lm) in logs.iter().enumerate().take(k_max + 1).skip(1) {
        let r = (lm / k as f64).exp();
        if r < inf_root {
            inf_root = r;
            inf_at = k;
        }
    }
    if inf_root <= HYPOTHESIS0_THRESHOLD {
        note(0, inf_at, 0, &mut holds);
    }
    let mut c1 = 0.0f64;
    for k in 1..k_max {
        let ratio = ((logs[k + 1] - logs[k]) / (k + 1) as f64).exp();
        c1 = c1.max(ratio);
    }
    if !c1.is_finite() {
        note(1, k_max, 0, &mut holds);
    }
    for k in 2..k_max {
        if 2.0 * logs[k] > logs[k - 1] + logs[k + 1] + LOG_TOL * (1.0 + logs[k].abs()) {
            note(2, k, 0, &mut holds);
            break;
        }
    }
    'outer: for k in 1..=k_max {
        for l in 1..=k_max {
            let lhs = logs[k] + logs[l];
            let rhs = logs[k + l - 1];
            if lhs > rhs + LOG_TOL * (1.0 + rhs.abs()) {
                note(3, k, l, &mut holds);
                break 'outer;
            }
        }
    }
    Ok(ClassReport { k_max, inf_root, c1: c1.max(1e-300), holds, first_violation: first })
}

/// Like [`class_report`], but any violated hypothesis is an error.
pub fn validate_class(c: &ClassSpec, k_max: usize) -> Result<ClassReport, DiagnosticsError> {
    let r = class_report(c, k_max)?;
    if let Some((index, k, l)) = r.first_violation {
        return Err(DiagnosticsError::HypothesisViolated { index, k, l });
    }
    Ok(r)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Membership {
    Fit(MembershipFit),
    Rejected(String),
}

/// `|h_α| <= A B^{|α|} M_{|α|}` with `B` from a least-squares slope and `A`
/// the smallest constant making the bound hold on every stored coefficient.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MembershipFit {
    pub a: f64,
    pub b: f64,
    /// Largest excess of `log|h_α|` over the least-squares line.
    pub max_violation: f64,
    pub points: usize,
}

pub fn class_membership(h: &VectorSeries, c: &ClassSpec) -> Membership {
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for comp in h.components() {
        for (alpha, v) in comp.terms() {
            let d = alpha.degree() as usize;
            let Some(lm) = c.log_m(d) else {
                return Membership::Rejected(format!("class has no weight for degree {d}"));
            };
            if v.norm() > 0.0 {
                xs.push(d as f64);
                ys.push(v.norm().ln() - lm);
            }
        }
    }
    if xs.is_empty() {
        return Membership::Rejected("zero series".into());
    }
    let (intercept, slope) = if xs.iter().all(|&x| x == xs[0]) {
        (ys.iter().cloned().fold(f64::NEG_INFINITY, f64::max), 0.0)
    } else {
        least_squares(&xs, &ys)
    };
    let mut max_violation = f64::NEG_INFINITY;
    let mut log_a = f64::NEG_INFINITY;
    for (&x, &y) in xs.iter().zip(&ys) {
        max_violation = max_violation.max(y - (intercept + slope * x));
        log_a = log_a.max(y - slope * x);
    }
    Membership::Fit(MembershipFit { a: log_a.exp(), b: slope.exp(), max_violation, points: xs.len() })
}

/// Returns `(intercept, slope)`.
pub fn least_squares(xs: &[f64], ys: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    (my - slope * mx, slope)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionPoint {
    pub degree: usize,
    pub kappa: Option<usize>,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionReport {
    pub points: Vec<ConditionPoint>,
    pub max: f64,
    pub bounded: bool,
}

/// `κ(d)`: the `k` with `p_k <= d < p_{k+1}`.
pub fn kappa(d: u64, seq: &ScaleSequence) -> Option<usize> {
    let mut k = None;
    let mut i = 0;
    while let Some(p) = seq.get(i) {
        if p > d {
            break;
        }
        k = Some(i);
        i += 1;
    }
    k
}

/// Bruno partial sums `Σ_{m<=K} log Ω⁻¹(p_{m+1})/p_m` for `K = 0..=k_max`,
/// stopping early (without error) when the sequence runs out.
fn bruno_prefix<F: Fn(u64) -> f64>(omega: &F, seq: &ScaleSequence, k_max: usize) -> Result<Vec<f64>, DivisorError> {
    let mut out = Vec::new();
    let mut acc = 0.0;
    for k in 0..=k_max {
        let (Some(pk), Some(pk1)) = (seq.get(k), seq.get(k + 1)) else { break };
        let v = omega(pk1);
        if v <= RESONANCE_TOL {
            return Err(DivisorError::ResonantSpectrum { p: pk1, value: v });
        }
        acc += -v.ln() / pk as f64;
        out.push(acc);
    }
    Ok(out)
}

/// `2Σ_{m<=κ(d)} log Ω⁻¹(p_{m+1})/p_m − (1/d) log(N_d/M_d)` for `d = 2..=d_max`.
pub fn condition_sequence<F: Fn(u64) -> f64>(
    omega: F,
    seq: &ScaleSequence,
    c_m: &ClassSpec,
    c_n: &ClassSpec,
    d_max: usize,
) -> Result<ConditionReport, DiagnosticsError> {
    let k_top = kappa(d_max as u64, seq).unwrap_or(0);
    let sums = bruno_prefix(&omega, seq, k_top)?;
    let mut points = Vec::new();
    let mut max = f64::NEG_INFINITY;
    for d in 2..=d_max {
        let k = kappa(d as u64, seq);
        let s = match k {
            Some(k) => *sums.get(k).ok_or_else(|| {
                DiagnosticsError::InvalidInput(format!("scale sequence too short for degree {d}"))
            })?,
            None => 0.0,
        };
        let (Some(ln), Some(lm)) = (c_n.log_m(d), c_m.log_m(d)) else {
            return Err(DiagnosticsError::InvalidInput(format!("class table too short for degree {d}")));
        };
        let value = 2.0 * s - (ln - lm) / d as f64;
        max = max.max(value);
        points.push(ConditionPoint { degree: d, kappa: k, value });
    }
    Ok(ConditionReport { points, max, bounded: max <= CONDITION_DIVERGENCE })
}

/// Per-degree maxima of the coefficient moduli and the fits derived from them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GrowthReport {
    /// `(d, max_{|α|=d} |h_α|)` for every degree with a nonzero coefficient.
    pub max_coefficients: Vec<(u32, f64)>,
    /// Slope of `log max|h_α|` against `d` over the upper half of the range.
    pub slope: Option<f64>,
    pub intercept: Option<f64>,
    /// `exp(−slope)`; `None` when there is nothing to fit, infinite for `h = 0`.
    pub radius: Option<f64>,
    /// Relative jackknife standard error of the radius.
    pub jackknife_spread: Option<f64>,
    /// Gevrey exponent `s` from fitting `a + b·d + s·log d!`.
    pub gevrey_exponent: Option<f64>,
    pub fit_degrees: Vec<u32>,
}

pub fn growth_report(h: &VectorSeries) -> GrowthReport {
    let mut max_coefficients: Vec<(u32, f64)> = Vec::new();
    for d in 0..=h.degree() {
        let m = h.homogeneous(d).max_abs();
        if m > 0.0 {
            max_coefficients.push((d, m));
        }
    }
    if max_coefficients.is_empty() {
        return GrowthReport {
            max_coefficients,
            slope: None,
            intercept: None,
            radius: Some(f64::INFINITY),
            jackknife_spread: Some(0.0),
            gevrey_exponent: None,
            fit_degrees: Vec::new(),
        };
    }
    let lo = max_coefficients.last().map(|&(d, _)| d).unwrap_or(0) / 2;
    let fit: Vec<(u32, f64)> = max_coefficients.iter().copied().filter(|&(d, _)| d >= lo.max(1)).collect();
    let fit_degrees: Vec<u32> = fit.iter().map(|&(d, _)| d).collect();
    let xs: Vec<f64> = fit.iter().map(|&(d, _)| d as f64).collect();
    let ys: Vec<f64> = fit.iter().map(|&(_, m)| m.ln()).collect();
    let (slope, intercept, radius, spread) = if xs.len() >= 3 {
        let (b, s) = least_squares(&xs, &ys);
        let r = (-s).exp();
        let n = xs.len();
        let loo: Vec<f64> = (0..n)
            .map(|i| {
                let xi: Vec<f64> = xs.iter().enumerate().filter(|&(k, _)| k != i).map(|(_, &x)| x).collect();
                let yi: Vec<f64> = ys.iter().enumerate().filter(|&(k, _)| k != i).map(|(_, &y)| y).collect();
                (-least_squares(&xi, &yi).1).exp()
            })
            .collect();
        let mean = loo.iter().sum::<f64>() / n as f64;
        let var = loo.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() * (n as f64 - 1.0) / n as f64;
        (Some(s), Some(b), Some(r), Some(var.sqrt() / r))
    } else {
        (None, None, None, None)
    };
    let gevrey_exponent = gevrey_fit(&max_coefficients);
    GrowthReport { max_coefficients, slope, intercept, radius, jackknife_spread: spread, gevrey_exponent, fit_degrees }
}

/// Least-squares `log m_d ≈ a + b·d + s·log d!`, returning `s`.
fn gevrey_fit(points: &[(u32, f64)]) -> Option<f64> {
    if points.len() < 4 {
        return None;
    }
    let rows: Vec<[f64; 3]> = points.iter().map(|&(d, _)| [1.0, d as f64, log_factorial(d as usize)]).collect();
    let ys: Vec<f64> = points.iter().map(|&(_, m)| m.ln()).collect();
    let mut ata = [[0.0f64; 3]; 3];
    let mut aty = [0.0f64; 3];
    for (r, y) in rows.iter().zip(&ys) {
        for i in 0..3 {
            aty[i] += r[i] * y;
            for j in 0..3 {
                ata[i][j] += r[i] * r[j];
            }
        }
    }
    solve3(ata, aty).map(|x| x[2])
}

fn solve3(mut a: [[f64; 3]; 3], mut b: [f64; 3]) -> Option<[f64; 3]> {
    for col in 0..3 {
        let piv = (col..3).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[piv][col].abs() < 1e-300 {
            return None;
        }
        a.swap(col, piv);
        b.swap(col, piv);
        for row in col + 1..3 {
            let f = a[row][col] / a[col][col];
            for k in col..3 {
                a[row][k] -= f * a[col][k];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = [0.0; 3];
    for i in (0..3).rev() {
        let s: f64 = (i + 1..3).map(|k| a[i][k] * x[k]).sum();
        x[i] = (b[i] - s) / a[i][i];
    }
    Some(x)
}

/// `Σ_{|α|<=d} max_j |h_{α,j}| r^{|α|}` for every degree `d`.
pub fn majorant_partial_sums(h: &VectorSeries, r: f64) -> Vec<f64> {
    let mut acc = 0.0;
    (0..=h.degree())
        .map(|d| {
            let hd = h.homogeneous(d);
            for alpha in hd.support() {
                let m = hd.coeff(&alpha).iter().map(|c| c.norm()).fold(0.0, f64::max);
                acc += m * r.powi(d as i32);
            }
            acc
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MajorantReport {
    pub r: f64,
    pub partial_sums: Vec<f64>,
    pub monotone: bool,
    pub divergent: bool,
}

pub fn majorant_report(h: &VectorSeries, r: f64) -> MajorantReport {
    let partial_sums = majorant_partial_sums(h, r);
    let monotone = partial_sums.windows(2).all(|w| w[1] >= w[0]);
    let divergent = partial_sums.last().is_some_and(|&s| s > MAJORANT_DIVERGENCE);
    MajorantReport { r, partial_sums, monotone, divergent }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RadiusReport {
    pub k: u32,
    pub omega: f64,
    pub degree: u32,
    pub growth: GrowthReport,
    /// `−B̃(kω)/k`.
    pub bruno_bound: f64,
    pub bruno_terms: usize,
    /// `log R − (−B̃(kω)/k)`.
    pub empirical_gap: Option<f64>,
}

/// The family `F_(k)(z) = λz(1 − z^k/k)`, `λ = e^{2πiω}`.
pub fn germ_family(k: u32, omega: f64, degree: u32) -> Result<Germ, DiagnosticsError> {
    if k == 0 {
        return Err(DiagnosticsError::InvalidInput("k must be at least 1".into()));
    }
    let spectrum = GermSpectrum::from_rotation(vec![omega])?;
    let lambda = spectrum.lambda()[0];
    let f = ScalarSeries::monomial(1, degree, CoefIndex::new(vec![k + 1]), -lambda / k as f64);
    Ok(Germ::new(spectrum, VectorSeries::from_components(vec![f]).map_err(LinearizeError::from)?)?)
}

pub fn germ_family_radius(k: u32, omega: f64, degree: u32) -> Result<RadiusReport, DiagnosticsError> {
    let g = germ_family(k, omega, degree)?;
    let lin = solve_recursive_germ(&g, degree, &SolveOptions::default())?;
    let growth = growth_report(&lin.h);
    let k_omega = k as f64 * omega;
    let (b, terms) = bruno_function_proxy(k_omega - k_omega.floor(), BRUNO_PROXY_TERMS)?;
    let bruno_bound = -b / k as f64;
    let empirical_gap = growth.radius.filter(|r| r.is_finite()).map(|r| r.ln() - bruno_bound);
    Ok(RadiusReport { k, omega, degree, growth, bruno_bound, bruno_terms: terms, empirical_gap })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DomainReport {
    pub omega: f64,
    pub degree: u32,
    pub growth: GrowthReport,
    /// Polydisk radius `ρ`.
    pub rho: Option<f64>,
    /// `d = √2·ρ`.
    pub d: Option<f64>,
    pub bruno_proxy: f64,
    pub bruno_terms: usize,
    /// `log d + B̃(ω)`.
    pub log_d_plus_bruno: Option<f64>,
    pub majorant: MajorantReport,
}

/// Checks the family constraints: `n = 2`, spectrum `(−1, ω)` with `ω > 0`,
/// every `|f_{α,j}| <= 1`.
pub fn check_vf_family(v: &VectorField) -> Result<f64, DiagnosticsError> {
    let w = v.spectrum.omega();
    if w.len() != 2 || w[0] != Complex64::new(-1.0, 0.0) || w[1].im != 0.0 || w[1].re <= 0.0 {
        return Err(DiagnosticsError::InvalidInput("family needs spectrum (-1, omega) with omega > 0".into()));
    }
    for (j, comp) in v.f.components().iter().enumerate() {
        for (alpha, c) in comp.terms() {
            if c.norm() > 1.0 {
                return Err(DiagnosticsError::FamilyViolation { alpha: alpha.clone(), axis: j, modulus: c.norm() });
            }
        }
    }
    Ok(w[1].re)
}

pub fn vf_domain_estimate(v: &VectorField, degree: u32, majorant_r: f64) -> Result<DomainReport, DiagnosticsError> {
    let omega = check_vf_family(v)?;
    let lin = solve_recursive_field(v, degree, &SolveOptions::default())?;
    let growth = growth_report(&lin.h);
    let rho = growth.radius;
    let d = rho.map(|r| SQRT_2 * r);
    let (b, terms) = bruno_function_proxy(omega - omega.floor(), BRUNO_PROXY_TERMS)?;
    let log_d_plus_bruno = d.filter(|x| x.is_finite()).map(|x| x.ln() + b);
    let majorant = majorant_report(&lin.h, majorant_r);
    Ok(DomainReport { omega, degree, growth, rho, d, bruno_proxy: b, bruno_terms: terms, log_d_plus_bruno, majorant })
}

/// The member of the family with every coefficient equal to one through
/// degree `top`.
pub fn worst_case_field(omega: f64, top: u32, degree: u32) -> Result<VectorField, DiagnosticsError> {
    let spectrum = FieldSpectrum::real(&[-1.0, omega])?;
    let terms: Vec<(CoefIndex, Complex64)> = crate::series::indices_between(2, 2, top)
        .into_iter()
        .map(|a| (a, Complex64::new(1.0, 0.0)))
        .collect();
    let comp = ScalarSeries::from_terms(2, degree, terms).map_err(LinearizeError::from)?;
    let f = VectorSeries::from_components(vec![comp.clone(), comp]).map_err(LinearizeError::from)?;
    Ok(VectorField::new(spectrum, f)?)
}

/// Smallest `Ĉ` with
/// `log(|h_α|/N_d) <= d log Ĉ + log(M_d/N_d) + 2d Σ_{m<=κ(d)} log Ω⁻¹(p_{m+1})/p_m`
/// for every stored coefficient.
pub fn final_bound_constant<F: Fn(u64) -> f64>(
    h: &VectorSeries,
    omega: F,
    seq: &ScaleSequence,
    c_m: &ClassSpec,
    c_n: &ClassSpec,
) -> Result<f64, DiagnosticsError> {
    let k_top = kappa(h.degree() as u64, seq).unwrap_or(0);
    let sums = bruno_prefix(&omega, seq, k_top)?;
    let mut log_c = f64::NEG_INFINITY;
    for comp in h.components() {
        for (alpha, v) in comp.terms() {
            let d = alpha.degree() as usize;
            if d == 0 || v.norm() == 0.0 {
                continue;
            }
            let s = kappa(d as u64, seq).and_then(|k| sums.get(k).copied()).unwrap_or(0.0);
            let (Some(ln), Some(lm)) = (c_n.log_m(d), c_m.log_m(d)) else {
                return Err(DiagnosticsError::InvalidInput(format!("class table too short for degree {d}")));
            };
            let lhs = v.norm().ln() - ln;
            let rest = (lm - ln) + 2.0 * d as f64 * s;
            log_c = log_c.max((lhs - rest) / d as f64);
        }
    }
    Ok(log_c.exp())
}
