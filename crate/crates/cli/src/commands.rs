use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use treelin_core::diagnostics::{
    class_membership, class_report, condition_sequence, germ_family_radius, growth_report, vf_domain_estimate,
    worst_case_field, ClassSpec, GrowthReport, Membership,
};
use treelin_core::divisors::{
    bruno_series_1d, continued_fraction, omega_tilde, FieldSpectrum, FracOmega, GermSpectrum, HatOmega,
    ScaleSequence, TildeMode,
};
use treelin_core::io::{to_json, IoError, Problem, ProblemDoc, ProblemKind, SeriesDoc, SpectrumDoc};
use treelin_core::linearize::{
    max_relative_difference, series_agree, solve_field, solve_germ, solve_inversion, verify_conjugacy, Germ,
    Method, ProblemRef, ResidualReport, SolveOptions, VectorField, RESIDUAL_TOL,
};
use treelin_core::series::{indices_between, CoefIndex, VectorSeries};
use treelin_core::trees::{encode_labeled, enumerate_forest, enumerate_labeled, LabelFilter};

use crate::error::CliError;
use crate::fixtures::random_nonlinearity;
use crate::*;

const GOLDEN: f64 = 0.618_033_988_749_894_8;
/// Methods agree when `|a − b| <= AGREE_REL·max(|a|, |b|)` or `<= AGREE_ABS`.
const AGREE_REL: f64 = 1e-9;
const AGREE_ABS: f64 = 1e-12;

pub fn run(cli: Cli) -> Result<(), CliError> {
    let seed = cli.seed;
    match cli.command {
        Command::Linearize(a) => linearize(a),
        Command::Trees { cmd: TreesCmd::Enum(a) } => trees_enum(a),
        Command::Bruno(a) => bruno(a),
        Command::Omega(a) => omega(a),
        Command::Diagnose { cmd } => match cmd {
            DiagnoseCmd::Growth(a) => diagnose_growth(a),
            DiagnoseCmd::Class(a) => diagnose_class(a),
            DiagnoseCmd::Condition(a) => diagnose_condition(a),
            DiagnoseCmd::Family(a) => diagnose_family(a),
        },
        Command::Verify { cmd } => match cmd {
            VerifyCmd::Conjugacy(a) => verify_solution(a),
            VerifyCmd::Oracle(a) => verify_oracle(a, seed),
        },
    }
}

fn read(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|e| CliError::Usage(format!("cannot read {}: {e}", path.display())))
}

fn write_file(path: &Path, text: &str) -> Result<(), CliError> {
    fs::write(path, text).map_err(|e| CliError::Usage(format!("cannot write {}: {e}", path.display())))
}

fn emit(output: Option<&Path>, text: &str) -> Result<(), CliError> {
    match output {
        Some(p) => write_file(p, text),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Solution {
    pub method: Method,
    pub h: SeriesDoc,
    pub residual: ResidualReport,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub clipped: Vec<(Vec<u32>, usize)>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub timing_ms: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Agreement {
    pub max_relative: f64,
    pub within_tolerance: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunReport {
    /// SHA-256 of the canonical input document.
    pub input_digest: String,
    pub kind: ProblemKind,
    pub degree: u32,
    pub solutions: Vec<Solution>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub agreement: Option<Agreement>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub verified: Option<bool>,
}

pub fn digest(doc: &ProblemDoc) -> Result<String, IoError> {
    let canonical = to_json(&doc.to_canonical()?);
    Ok(hex::encode(Sha256::digest(canonical.as_bytes())))
}

fn methods_for(arg: Option<MethodArg>, doc: &ProblemDoc) -> Vec<Method> {
    let all = match doc.kind {
        ProblemKind::Inversion => vec![Method::FixedPoint, Method::Tree],
        _ => vec![Method::Recursive, Method::Tree, Method::FixedPoint],
    };
    match arg {
        Some(MethodArg::All) => all,
        Some(MethodArg::Recursive) => vec![Method::Recursive],
        Some(MethodArg::Tree) => vec![Method::Tree],
        Some(MethodArg::Fixedpoint) => vec![Method::FixedPoint],
        None => vec![doc.options.method.unwrap_or(all[0])],
    }
}

fn linearize(a: LinearizeArgs) -> Result<(), CliError> {
    let doc = ProblemDoc::parse(&read(&a.input)?)?;
    let expected = match a.kind {
        KindArg::Germ => ProblemKind::Germ,
        KindArg::Field => ProblemKind::Field,
        KindArg::Inversion => ProblemKind::Inversion,
    };
    if doc.kind != expected {
        return Err(usage(format!("document describes a {:?} problem", doc.kind).to_lowercase()));
    }
    let degree = a.degree.unwrap_or(doc.degree);
    let mut opts = SolveOptions { clip: a.clip, ..SolveOptions::default() };
    if let Some(t) = doc.options.tol {
        opts.tol = t;
    }
    let problem = doc.to_problem()?;
    let mut solutions = Vec::new();
    let mut series = Vec::new();
    for method in methods_for(a.method, &doc) {
        let start = Instant::now();
        let (h, residual, clipped) = match &problem {
            Problem::Germ(g) => {
                let l = solve_germ(g, degree, method, &opts)?;
                (l.h, l.residual, l.clipped)
            }
            Problem::Field(v) => {
                let l = solve_field(v, degree, method, &opts)?;
                (l.h, l.residual, l.clipped)
            }
            Problem::Inversion { g } => {
                let l = solve_inversion(g, degree, method)?;
                (l.h, l.residual, Vec::new())
            }
        };
        let elapsed = start.elapsed().as_secs_f64() * 1e3;
        solutions.push(Solution {
            method,
            h: SeriesDoc::from_series(&h),
            residual,
            clipped: clipped.into_iter().map(|(alpha, j)| (alpha.entries().to_vec(), j)).collect(),
            timing_ms: a.timing.then_some(elapsed),
        });
        series.push(h);
    }
    let agreement = (series.len() > 1).then(|| {
        let mut rel = 0.0f64;
        let mut ok = true;
        for s in &series[1..] {
            rel = rel.max(max_relative_difference(&series[0], s, AGREE_ABS));
            ok &= series_agree(&series[0], s, AGREE_REL, AGREE_ABS);
        }
        Agreement { max_relative: rel, within_tolerance: ok }
    });
    let verified = a.verify.then(|| {
        solutions.iter().all(|s| s.residual.passes() && s.clipped.is_empty())
            && agreement.as_ref().is_none_or(|g| g.within_tolerance)
    });
    if let Some(path) = &a.emit_csv {
        write_file(path, &growth_csv(&growth_report(&series[0])))?;
    }
    let report = RunReport { input_digest: digest(&doc)?, kind: doc.kind, degree, solutions, agreement, verified };
    emit(a.output.as_deref(), &to_json(&report))?;
    if verified == Some(false) {
        return Err(CliError::Domain("verification failed".into()));
    }
    Ok(())
}

fn growth_csv(g: &GrowthReport) -> String {
    let mut out = String::from("degree,maxcoef,fit\n");
    for &(d, m) in &g.max_coefficients {
        let fit = match (g.intercept, g.slope) {
            (Some(b), Some(s)) if g.fit_degrees.contains(&d) => format!("{}", (b + s * d as f64).exp()),
            _ => String::new(),
        };
        let _ = writeln!(out, "{d},{m},{fit}");
    }
    out
}

/// `h` from a series document or from the first solution of a report.
fn load_h(path: &Path) -> Result<VectorSeries, CliError> {
    let text = read(path)?;
    if let Ok(doc) = SeriesDoc::parse(&text) {
        return Ok(doc.to_series()?);
    }
    let report: RunReport = serde_json::from_str(&text)
        .map_err(|e| usage(format!("{} is neither a series nor a report: {e}", path.display())))?;
    let first = report.solutions.first().ok_or_else(|| usage("report holds no solution"))?;
    Ok(first.h.to_series()?)
}

fn trees_enum(a: TreesEnumArgs) -> Result<(), CliError> {
    if a.order == 0 {
        return Err(usage("--order must be at least 1"));
    }
    let mut out = String::new();
    if !a.labeled {
        for t in enumerate_forest(a.order) {
            let _ = writeln!(out, "{t}");
        }
        print!("{out}");
        return Ok(());
    }
    if a.alpha.is_empty() {
        return Err(usage("--labeled needs --alpha"));
    }
    let n = a.alpha.len();
    if a.axis == 0 || a.axis > n {
        return Err(usage(format!("--axis must lie in 1..={n}")));
    }
    let alpha = CoefIndex::new(a.alpha.clone());
    let support = match (&a.support, a.support_degree) {
        (Some(_), Some(_)) => return Err(usage("give --support or --support-degree, not both")),
        (Some(path), None) => {
            let s = SeriesDoc::parse(&read(path)?)?.to_series()?;
            if s.nvars() != n {
                return Err(usage("support series has the wrong number of variables"));
            }
            s.support()
        }
        (None, k) => indices_between(n, 2, k.unwrap_or(alpha.degree())),
    };
    let filter = if a.all { LabelFilter::All } else { LabelFilter::Contributing };
    for t in enumerate_labeled(a.order, &alpha, a.axis - 1, &support, filter) {
        let _ = writeln!(out, "{}", encode_labeled(&t));
    }
    print!("{out}");
    Ok(())
}

fn bruno(a: BrunoArgs) -> Result<(), CliError> {
    if a.terms == 0 {
        return Err(usage("--terms must be at least 1"));
    }
    let cf = continued_fraction(a.omega, a.terms)?;
    let rows = cf.convergents.len().min(a.terms);
    let q = cf.denominators();
    let sums = if q.len() >= 2 { bruno_series_1d(&cf, q.len() - 2)? } else { Vec::new() };
    let mut out = String::from("k,a,p,q,partial_sum\n");
    for k in 0..rows {
        let a_k = if k == 0 { cf.a0.to_string() } else { cf.partial_quotients[k - 1].to_string() };
        let (p, qk) = cf.convergents[k];
        let s = sums.get(k).map(|s| s.to_string()).unwrap_or_default();
        let _ = writeln!(out, "{k},{a_k},{p},{qk},{s}");
    }
    let used = rows.min(sums.len());
    let proxy = if used == 0 { 0.0 } else { sums[used - 1] };
    let _ = writeln!(out, "# bruno_proxy={proxy} terms={used} precision_exhausted={}", cf.precision_exhausted);
    if let Some(p) = &a.emit_csv {
        write_file(p, &out)?;
    }
    print!("{out}");
    Ok(())
}

fn spectrum_rotation(s: &SpectrumDoc) -> Result<Vec<f64>, CliError> {
    match (&s.rotation, &s.eigenvalues) {
        (Some(r), _) => Ok(r.clone()),
        (None, Some(e)) => Ok(e.iter().map(|p| p[1].atan2(p[0]) / std::f64::consts::TAU).collect()),
        _ => Err(usage("spectrum needs rotation numbers or eigenvalues")),
    }
}

fn omega(a: OmegaArgs) -> Result<(), CliError> {
    let spec: SpectrumDoc =
        serde_json::from_str(&read(&a.spectrum)?).map_err(|e| usage(format!("malformed spectrum: {e}")))?;
    let values: Vec<f64> = match a.variant {
        VariantArg::Tilde => {
            let s = match (&spec.rotation, &spec.eigenvalues) {
                (Some(r), None) => GermSpectrum::from_rotation(r.clone())?,
                (None, Some(e)) => {
                    GermSpectrum::new(e.iter().map(|p| treelin_core::Complex64::new(p[0], p[1])).collect())?
                }
                _ => return Err(usage("tilde needs rotation numbers or eigenvalues")),
            };
            let mode = match a.mode {
                TildeModeArg::Realizable => TildeMode::Realizable,
                TildeModeArg::Full => TildeMode::Full,
            };
            (1..=a.p_max).map(|p| omega_tilde(&s, p, mode)).collect()
        }
        VariantArg::Frac => {
            let w = FracOmega::new(spectrum_rotation(&spec)?);
            (1..=a.p_max).map(|p| w.value(p)).collect()
        }
        VariantArg::Hat => {
            let w = spec.omega.as_ref().ok_or_else(|| usage("hat needs an omega spectrum"))?;
            let s = FieldSpectrum::new(w.iter().map(|p| treelin_core::Complex64::new(p[0], p[1])).collect())?;
            let h = HatOmega::from_spectrum(&s);
            (1..=a.p_max).map(|p| h.value(p)).collect()
        }
    };
    let mut out = String::from("p,value\n");
    for (i, v) in values.iter().enumerate() {
        let _ = writeln!(out, "{},{v}", i + 1);
    }
    if let Some(p) = &a.emit_csv {
        write_file(p, &out)?;
    }
    print!("{out}");
    Ok(())
}

fn parse_class(text: &str) -> Result<ClassSpec, CliError> {
    if let Some(rest) = text.strip_prefix("table:") {
        let path = Path::new(rest);
        if path.is_file() {
            let body = read(path)?;
            let values = body
                .split(|c: char| c == ',' || c.is_whitespace())
                .filter(|s| !s.is_empty())
                .map(|s| s.parse::<f64>().map_err(|_| usage(format!("'{s}' is not a number"))))
                .collect::<Result<Vec<_>, _>>()?;
            return Ok(ClassSpec::Table { values });
        }
    }
    Ok(ClassSpec::parse(text)?)
}

#[derive(Serialize)]
struct GrowthOutput {
    growth: GrowthReport,
    #[serde(skip_serializing_if = "Option::is_none")]
    membership: Option<Membership>,
}

fn diagnose_growth(a: GrowthArgs) -> Result<(), CliError> {
    let h = load_h(&a.input)?;
    let growth = growth_report(&h);
    let membership = a.class.as_deref().map(parse_class).transpose()?.map(|c| class_membership(&h, &c));
    if let Some(p) = &a.emit_csv {
        write_file(p, &growth_csv(&growth))?;
    }
    print!("{}", to_json(&GrowthOutput { growth, membership }));
    Ok(())
}

#[derive(Serialize)]
struct ClassOutput {
    report: treelin_core::diagnostics::ClassReport,
    #[serde(skip_serializing_if = "Option::is_none")]
    membership: Option<Membership>,
}

fn diagnose_class(a: ClassArgs) -> Result<(), CliError> {
    let c = parse_class(&a.class)?;
    let report = class_report(&c, a.k_max)?;
    let membership = a.input.as_deref().map(load_h).transpose()?.map(|h| class_membership(&h, &c));
    let violation = report.first_violation;
    print!("{}", to_json(&ClassOutput { report, membership }));
    if let Some((index, k, l)) = violation {
        return Err(treelin_core::diagnostics::DiagnosticsError::HypothesisViolated { index, k, l }.into());
    }
    Ok(())
}

fn scale_sequence(spec: &str, omega: &[f64]) -> Result<ScaleSequence, CliError> {
    match spec {
        "powers" => Ok(ScaleSequence::PowersOfTwo),
        "convergents" => {
            if omega.len() != 1 {
                return Err(usage("convergent scales need a single rotation number"));
            }
            Ok(ScaleSequence::from_convergents(&continued_fraction(omega[0], 60)?)?)
        }
        list => {
            let p = list
                .split(',')
                .map(|s| s.trim().parse::<u64>().map_err(|_| usage(format!("'{s}' is not a scale"))))
                .collect::<Result<Vec<_>, _>>()?;
            Ok(ScaleSequence::explicit(p)?)
        }
    }
}

fn diagnose_condition(a: ConditionArgs) -> Result<(), CliError> {
    if a.omega.is_empty() {
        return Err(usage("--omega is required"));
    }
    let seq = scale_sequence(&a.p_sequence, &a.omega)?;
    let w = FracOmega::new(a.omega.clone());
    let c_m = parse_class(&a.m_class)?;
    let c_n = parse_class(&a.n_class)?;
    let report = condition_sequence(|p| w.value(p), &seq, &c_m, &c_n, a.d_max)?;
    if let Some(p) = &a.emit_csv {
        let mut out = String::from("degree,kappa,value\n");
        for pt in &report.points {
            let k = pt.kappa.map(|k| k.to_string()).unwrap_or_default();
            let _ = writeln!(out, "{},{k},{}", pt.degree, pt.value);
        }
        write_file(p, &out)?;
    }
    print!("{}", to_json(&report));
    Ok(())
}

fn diagnose_family(a: FamilyArgs) -> Result<(), CliError> {
    if let Some(k) = a.k {
        let omega = a.omega.ok_or_else(|| usage("the germ family needs --omega"))?;
        let r = germ_family_radius(k, omega, a.degree)?;
        if let Some(p) = &a.emit_csv {
            write_file(p, &growth_csv(&r.growth))?;
        }
        print!("{}", to_json(&r));
        return Ok(());
    }
    let v = match (&a.input, a.worst_case) {
        (Some(path), None) => match ProblemDoc::parse(&read(path)?)?.to_problem()? {
            Problem::Field(v) => v,
            _ => return Err(usage("the field family needs a field document")),
        },
        (None, Some(top)) => {
            let omega = a.omega.ok_or_else(|| usage("--worst-case needs --omega"))?;
            worst_case_field(omega, top, a.degree)?
        }
        _ => return Err(usage("give --k, --input or --worst-case")),
    };
    let r = vf_domain_estimate(&v, a.degree, a.r)?;
    if let Some(p) = &a.emit_csv {
        write_file(p, &growth_csv(&r.growth))?;
    }
    print!("{}", to_json(&r));
    Ok(())
}

fn verify_solution(a: ConjugacyArgs) -> Result<(), CliError> {
    let doc = ProblemDoc::parse(&read(&a.input)?)?;
    let h = load_h(&a.solution)?;
    let report = match doc.to_problem()? {
        Problem::Germ(g) => verify_conjugacy(ProblemRef::Germ(&g), &h)?,
        Problem::Field(v) => verify_conjugacy(ProblemRef::Field(&v), &h)?,
        Problem::Inversion { g } => {
            let family = treelin_core::linearize::PowerSeriesMap::new(g)?;
            let (u, w) = treelin_core::linearize::inversion_variables(h.ncomponents(), h.degree());
            treelin_core::linearize::verify_inversion(&family, &u, &w, &h)?
        }
    };
    print!("{}", to_json(&report));
    if !report.passes() {
        return Err(CliError::Domain(format!("residual {} exceeds {RESIDUAL_TOL}", report.max_relative)));
    }
    Ok(())
}

#[derive(Serialize)]
struct OracleReport {
    kind: &'static str,
    n: usize,
    count: usize,
    degree: u32,
    f_degree: u32,
    seed: u64,
    /// Largest `|a − b|/max(|a|, |b|)` over every coefficient of every case.
    max_relative: f64,
    tolerance: f64,
    failures: usize,
}

fn verify_oracle(a: OracleArgs, seed: u64) -> Result<(), CliError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let opts = SolveOptions::default();
    let mut worst = 0.0f64;
    let mut failures = 0;
    for _ in 0..a.count {
        let f = random_nonlinearity(&mut rng, a.n, a.f_degree, a.degree);
        let (x, y) = match a.kind {
            OracleKind::Germ => {
                let rot = match a.n {
                    1 => vec![GOLDEN],
                    2 => vec![GOLDEN, GOLDEN.sqrt()],
                    _ => return Err(usage("germ fixtures exist for n = 1 and n = 2")),
                };
                let g = Germ::new(GermSpectrum::from_rotation(rot)?, f)?;
                (solve_germ(&g, a.degree, Method::Recursive, &opts)?.h, solve_germ(&g, a.degree, Method::Tree, &opts)?.h)
            }
            OracleKind::Field => {
                if a.n != 2 {
                    return Err(usage("field fixtures exist for n = 2"));
                }
                let v = VectorField::new(FieldSpectrum::real(&[-1.0, GOLDEN])?, f)?;
                (solve_field(&v, a.degree, Method::Recursive, &opts)?.h, solve_field(&v, a.degree, Method::Tree, &opts)?.h)
            }
        };
        let rel = max_relative_difference(&x, &y, 0.0);
        worst = worst.max(rel);
        if rel > a.tol {
            failures += 1;
        }
    }
    let kind = match a.kind {
        OracleKind::Germ => "germ",
        OracleKind::Field => "field",
    };
    let report = OracleReport {
        kind,
        n: a.n,
        count: a.count,
        degree: a.degree,
        f_degree: a.f_degree,
        seed,
        max_relative: worst,
        tolerance: a.tol,
        failures,
    };
    print!("{}", to_json(&report));
    if failures > 0 {
        return Err(CliError::Domain(format!("{failures} of {} cases disagree", a.count)));
    }
    Ok(())
}
