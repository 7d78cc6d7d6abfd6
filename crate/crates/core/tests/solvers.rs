use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use treelin_core::divisors::{FieldSpectrum, GermSpectrum};
use treelin_core::linearize::*;
use treelin_core::series::{indices_between, ScalarSeries, VectorSeries};
use treelin_core::trees::enumerate_forest;
use treelin_core::Complex64;

const GOLDEN: f64 = 0.618_033_988_749_894_8;

fn random_f(rng: &mut ChaCha8Rng, n: usize, f_degree: u32, degree: u32) -> VectorSeries {
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
            ScalarSeries::from_terms(n, degree, terms).unwrap()
        })
        .collect();
    VectorSeries::from_components(comps).unwrap()
}

#[test]
fn tree_and_recursion_agree_on_random_germs() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for (n, degree) in [(1usize, 8u32), (2, 5)] {
        let rot = if n == 1 { vec![GOLDEN] } else { vec![GOLDEN, GOLDEN.sqrt()] };
        for _ in 0..5 {
            let g = Germ::new(GermSpectrum::from_rotation(rot.clone()).unwrap(), random_f(&mut rng, n, 4, degree)).unwrap();
            let a = solve_recursive_germ(&g, degree, &SolveOptions::default()).unwrap();
            let b = solve_tree_germ(&g, degree, &SolveOptions::default()).unwrap();
            let rel = max_relative_difference(&a.h, &b.h, 0.0);
            assert!(rel <= 1e-9);
        }
    }
}

#[test]
fn tree_and_recursion_agree_on_random_fields() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for _ in 0..5 {
        let v = VectorField::new(FieldSpectrum::real(&[-1.0, GOLDEN]).unwrap(), random_f(&mut rng, 2, 4, 5)).unwrap();
        let a = solve_recursive_field(&v, 5, &SolveOptions::default()).unwrap();
        let b = solve_tree_field(&v, 5, &SolveOptions::default()).unwrap();
        let rel = max_relative_difference(&a.h, &b.h, 0.0);
        assert!(rel <= 1e-9);
    }
}

#[test]
fn per_tree_contributions_sum_to_h() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let g = Germ::new(GermSpectrum::from_rotation(vec![GOLDEN]).unwrap(), random_f(&mut rng, 1, 4, 6)).unwrap();
    let opts = SolveOptions::default();
    let h = solve_recursive_germ(&g, 6, &opts).unwrap().h;
    let mut total = VectorSeries::zero(1, 1, 6);
    for order in 1..6 {
        for theta in enumerate_forest(order) {
            total = &total + &tree_contribution(&theta, &g.spectrum, &g.f, 6, &opts).unwrap();
        }
    }
    assert!(max_relative_difference(&h, &total, 1e-300) < 1e-9);
}
