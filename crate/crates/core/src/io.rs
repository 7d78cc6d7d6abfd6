//! JSON documents: series literals and problem descriptions.
//!
//! Complex numbers are `[re, im]` pairs. Terms are written in graded order,
//! so serializing a parsed canonical document reproduces it byte for byte.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::divisors::{DivisorError, FieldSpectrum, GermSpectrum, ScaleSequence};
use crate::linearize::{Germ, LinearizeError, Method, VectorField};
use crate::series::{CoefIndex, ScalarSeries, SeriesError, VectorSeries};

#[derive(Debug, Error)]
pub enum IoError {
    #[error("malformed document: {0}")]
    Json(#[from] serde_json::Error),
    #[error("invalid document: {0}")]
    Invalid(String),
    #[error(transparent)]
    Series(#[from] SeriesError),
    #[error(transparent)]
    Divisor(#[from] DivisorError),
    #[error(transparent)]
    Linearize(#[from] LinearizeError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum TermValue {
    Scalar([f64; 2]),
    Vector(Vec<[f64; 2]>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Term {
    pub alpha: Vec<u32>,
    pub value: TermValue,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SeriesDoc {
    pub n: usize,
    #[serde(alias = "D")]
    pub degree: u32,
    /// Number of components; absent means every value decides it.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub components: Option<usize>,
    pub terms: Vec<Term>,
}

fn pair(c: Complex64) -> [f64; 2] {
    // normalizes -0.0 so equal series print identically
    [c.re + 0.0, c.im + 0.0]
}

fn complex(p: [f64; 2]) -> Complex64 {
    Complex64::new(p[0], p[1])
}

/// Canonical terms of `s`: one entry per index in the support, graded order,
/// per-component values.
pub fn terms_of(s: &VectorSeries) -> Vec<Term> {
    s.support()
        .into_iter()
        .map(|alpha| Term {
            value: TermValue::Vector(s.coeff(&alpha).into_iter().map(pair).collect()),
            alpha: alpha.entries().to_vec(),
        })
        .collect()
}

/// Builds an `ncomp`-component series from terms. A scalar value is only
/// accepted when `ncomp == 1`. Repeated indices are summed.
pub fn series_from_terms(n: usize, degree: u32, ncomp: usize, terms: &[Term]) -> Result<VectorSeries, IoError> {
    let mut comps = vec![ScalarSeries::zero(n, degree); ncomp];
    for t in terms {
        if t.alpha.len() != n {
            return Err(IoError::Invalid(format!("index {:?} does not have {n} entries", t.alpha)));
        }
        let alpha = CoefIndex::new(t.alpha.clone());
        if alpha.degree() > degree {
            return Err(IoError::Invalid(format!("index {alpha} exceeds degree {degree}")));
        }
        let values: Vec<Complex64> = match &t.value {
            TermValue::Scalar(p) if ncomp == 1 => vec![complex(*p)],
            TermValue::Scalar(_) => {
                return Err(IoError::Invalid(format!("term {alpha} needs {ncomp} component values")))
            }
            TermValue::Vector(v) if v.len() == ncomp => v.iter().copied().map(complex).collect(),
            TermValue::Vector(v) => {
                return Err(IoError::Invalid(format!("term {alpha} has {} values, expected {ncomp}", v.len())))
            }
        };
        if values.iter().any(|c| !c.re.is_finite() || !c.im.is_finite()) {
            return Err(IoError::Invalid(format!("term {alpha} is not finite")));
        }
        for (comp, v) in comps.iter_mut().zip(values) {
            comp.add_to(alpha.clone(), v);
        }
    }
    Ok(VectorSeries::from_components(comps)?)
}

fn infer_components(terms: &[Term]) -> Option<usize> {
    terms.first().map(|t| match &t.value {
        TermValue::Scalar(_) => 1,
        TermValue::Vector(v) => v.len(),
    })
}

impl SeriesDoc {
    pub fn from_series(s: &VectorSeries) -> Self {
        SeriesDoc { n: s.nvars(), degree: s.degree(), components: Some(s.ncomponents()), terms: terms_of(s) }
    }

    pub fn to_series(&self) -> Result<VectorSeries, IoError> {
        let ncomp = self
            .components
            .or_else(|| infer_components(&self.terms))
            .ok_or_else(|| IoError::Invalid("empty series needs an explicit component count".into()))?;
        series_from_terms(self.n, self.degree, ncomp, &self.terms)
    }

    pub fn parse(text: &str) -> Result<Self, IoError> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn to_canonical(&self) -> Result<Self, IoError> {
        Ok(SeriesDoc::from_series(&self.to_series()?))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProblemKind {
    Germ,
    Field,
    /// `H = w + u·G(H)` with `Λ = id`; variables `(u, w_1, …, w_m)`.
    Inversion,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpectrumDoc {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rotation: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eigenvalues: Option<Vec<[f64; 2]>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub omega: Option<Vec<[f64; 2]>>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptionsDoc {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub method: Option<Method>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p_sequence: Option<Vec<u64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tol: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemDoc {
    pub kind: ProblemKind,
    pub n: usize,
    #[serde(alias = "D")]
    pub degree: u32,
    #[serde(default, skip_serializing_if = "spectrum_is_empty")]
    pub spectrum: SpectrumDoc,
    pub terms: Vec<Term>,
    #[serde(default, skip_serializing_if = "options_is_empty")]
    pub options: OptionsDoc,
}

fn spectrum_is_empty(s: &SpectrumDoc) -> bool {
    *s == SpectrumDoc::default()
}

fn options_is_empty(o: &OptionsDoc) -> bool {
    *o == OptionsDoc::default()
}

#[derive(Debug, Clone)]
pub enum Problem {
    Germ(Germ),
    Field(VectorField),
    /// `G` as an `m`-component series in `m` variables.
    Inversion { g: VectorSeries },
}

impl ProblemDoc {
    pub fn parse(text: &str) -> Result<Self, IoError> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn to_problem(&self) -> Result<Problem, IoError> {
        let n = self.n;
        let s = &self.spectrum;
        let given = [s.rotation.is_some(), s.eigenvalues.is_some(), s.omega.is_some()].iter().filter(|&&b| b).count();
        match self.kind {
            ProblemKind::Germ => {
                let spectrum = match (&s.rotation, &s.eigenvalues) {
                    (Some(r), None) if s.omega.is_none() => GermSpectrum::from_rotation(r.clone())?,
                    (None, Some(e)) if s.omega.is_none() => GermSpectrum::new(e.iter().copied().map(complex).collect())?,
                    _ => return Err(IoError::Invalid("germ needs exactly one of rotation or eigenvalues".into())),
                };
                if spectrum.lambda().len() != n {
                    return Err(IoError::Invalid(format!("spectrum length differs from n = {n}")));
                }
                let f = series_from_terms(n, self.degree, n, &self.terms)?;
                Ok(Problem::Germ(Germ::new(spectrum, f)?))
            }
            ProblemKind::Field => {
                let omega = match &s.omega {
                    Some(w) if given == 1 => w.iter().copied().map(complex).collect::<Vec<_>>(),
                    _ => return Err(IoError::Invalid("field needs exactly the omega spectrum".into())),
                };
                if omega.len() != n {
                    return Err(IoError::Invalid(format!("spectrum length differs from n = {n}")));
                }
                let f = series_from_terms(n, self.degree, n, &self.terms)?;
                Ok(Problem::Field(VectorField::new(FieldSpectrum::new(omega)?, f)?))
            }
            ProblemKind::Inversion => {
                if given != 0 {
                    return Err(IoError::Invalid("inversion takes no spectrum".into()));
                }
                let g = series_from_terms(n, self.degree, n, &self.terms)?;
                Ok(Problem::Inversion { g })
            }
        }
    }

    pub fn scale_sequence(&self) -> Result<ScaleSequence, IoError> {
        match &self.options.p_sequence {
            None => Ok(ScaleSequence::PowersOfTwo),
            Some(p) => Ok(ScaleSequence::explicit(p.clone())?),
        }
    }

    /// Same problem with terms merged, zero terms dropped and graded order.
    pub fn to_canonical(&self) -> Result<Self, IoError> {
        let f = series_from_terms(self.n, self.degree, self.n, &self.terms)?;
        let mut out = self.clone();
        out.terms = terms_of(&f);
        Ok(out)
    }

    pub fn from_germ(g: &Germ, degree: u32) -> Self {
        ProblemDoc {
            kind: ProblemKind::Germ,
            n: g.f.ncomponents(),
            degree,
            spectrum: match g.spectrum.rotation() {
                Some(r) => SpectrumDoc { rotation: Some(r.to_vec()), ..Default::default() },
                None => SpectrumDoc {
                    eigenvalues: Some(g.spectrum.lambda().iter().copied().map(pair).collect()),
                    ..Default::default()
                },
            },
            terms: terms_of(&g.f),
            options: OptionsDoc::default(),
        }
    }

    pub fn from_field(v: &VectorField, degree: u32) -> Self {
        ProblemDoc {
            kind: ProblemKind::Field,
            n: v.f.ncomponents(),
            degree,
            spectrum: SpectrumDoc { omega: Some(v.spectrum.omega().iter().copied().map(pair).collect()), ..Default::default() },
            terms: terms_of(&v.f),
            options: OptionsDoc::default(),
        }
    }
}

/// Pretty JSON with a trailing newline.
pub fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("documents always serialize");
    s.push('\n');
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn series_round_trip_is_identity_on_canonical_text() {
        let text = r#"{"n":2,"D":4,"terms":[{"alpha":[0,2],"value":[1,0]},{"alpha":[2,0],"value":[0.5,-1]},{"alpha":[1,1],"value":[0,0]}]}"#;
        let canon = SeriesDoc::parse(text).unwrap().to_canonical().unwrap();
        let once = to_json(&canon);
        let twice = to_json(&SeriesDoc::parse(&once).unwrap().to_canonical().unwrap());
        assert_eq!(once, twice);
        let order: Vec<_> = canon.terms.iter().map(|t| t.alpha.clone()).collect();
        assert_eq!(order, vec![vec![2, 0], vec![0, 2]]);
    }

    #[test]
    fn rotation_is_converted_at_parse_time() {
        let text = r#"{"kind":"germ","n":1,"degree":5,"spectrum":{"rotation":[0.25]},"terms":[{"alpha":[2],"value":[1,0]}]}"#;
        let Problem::Germ(g) = ProblemDoc::parse(text).unwrap().to_problem().unwrap() else { panic!() };
        assert!((g.spectrum.lambda()[0] - Complex64::new(0.0, 1.0)).norm() < 1e-15);
    }

    #[test]
    fn invalid_documents_are_rejected() {
        let too_high = r#"{"kind":"germ","n":1,"degree":2,"spectrum":{"rotation":[0.3]},"terms":[{"alpha":[3],"value":[1,0]}]}"#;
        assert!(ProblemDoc::parse(too_high).unwrap().to_problem().is_err());
        let wrong_len = r#"{"kind":"field","n":2,"degree":3,"spectrum":{"omega":[[1,0]]},"terms":[]}"#;
        assert!(ProblemDoc::parse(wrong_len).unwrap().to_problem().is_err());
        let linear = r#"{"kind":"germ","n":1,"degree":3,"spectrum":{"rotation":[0.3]},"terms":[{"alpha":[1],"value":[1,0]}]}"#;
        assert!(ProblemDoc::parse(linear).unwrap().to_problem().is_err());
        assert!(ProblemDoc::parse(r#"{"kind":"germ"}"#).is_err());
    }
}
