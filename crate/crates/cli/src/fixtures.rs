//! Seeded random problems.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use treelin_core::series::{indices_between, ScalarSeries, VectorSeries};
use treelin_core::Complex64;

/// `n` components in `n` variables, every index of degree `2..=f_degree`
/// present, moduli uniform in `[0, 1)` and uniform phases.
pub fn random_nonlinearity(rng: &mut ChaCha8Rng, n: usize, f_degree: u32, degree: u32) -> VectorSeries {
    let comps = (0..n)
        .map(|_| {
            let terms: Vec<_> = indices_between(n, 2, f_degree)
                .into_iter()
                .map(|a| {
                    let r: f64 = rng.gen_range(0.0..1.0);
                    let t: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
                    (a, Complex64::from_polar(r, t))
                })
                .collect();
            ScalarSeries::from_terms(n, degree, terms).expect("indices fit the truncation")
        })
        .collect();
    VectorSeries::from_components(comps).expect("components share one shape")
}
