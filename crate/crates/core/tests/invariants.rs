use euclid_core::covariance::CovarianceOperator;
use euclid_core::gaussian::{gaussian_moment, hafnian, hafnian_bruteforce, second_quantize, wick_power};
use euclid_core::interaction::InteractionPolynomial;
use euclid_core::lattice::{Boundary, LatticeGeometry, Region};
use euclid_core::markov::NProjection;
use euclid_core::quadrature::integrate;
use euclid_core::transfer::build_transfer;
use nalgebra::DMatrix;
use proptest::prelude::*;

fn gram(entries: &[f64], n: usize) -> DMatrix<f64> {
    let v = DMatrix::from_row_slice(n, n, entries);
    v.transpose() * v
}

fn square(max: usize) -> impl Strategy<Value = DMatrix<f64>> {
    (1..=max).prop_flat_map(|d| {
        prop::collection::vec(-1.0f64..1.0, d * d).prop_map(move |e| DMatrix::from_row_slice(d, d, &e))
    })
}

fn contraction(a: DMatrix<f64>) -> DMatrix<f64> {
    let norm = a.clone().svd(false, false).singular_values.max();
    if norm > 1.0 {
        a / norm
    } else {
        a
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn hafnian_matches_matchings((n, entries) in (1usize..=4).prop_flat_map(|h| {
        let n = 2 * h;
        (Just(n), prop::collection::vec(-1.0f64..1.0, n * n))
    })) {
        let g = gram(&entries, n);
        let fast = hafnian(&g).unwrap();
        let slow = hafnian_bruteforce(&g).unwrap();
        let scale = g.iter().map(|x| x.abs()).fold(0.0, f64::max).powi(n as i32 / 2).max(1.0);
        prop_assert!((fast - slow).abs() <= 1e-10 * scale, "{fast} vs {slow}");
    }

    #[test]
    fn projection_is_idempotent(
        mass in 0.3f64..2.0,
        mask in prop::collection::vec(any::<bool>(), 16),
        f in prop::collection::vec(-1.0f64..1.0, 16),
    ) {
        prop_assume!(mask.iter().any(|&b| b));
        let g = LatticeGeometry::new(2, &[4, 4], 1.0, Boundary::Dirichlet).unwrap();
        let cov = CovarianceOperator::new(&g, mass).unwrap();
        let sites: Vec<usize> = (0..16).filter(|&x| mask[x]).collect();
        let e = NProjection::new(&cov, &Region::new(&g, sites).unwrap()).unwrap();
        let once = e.apply(&f).unwrap();
        let twice = e.apply(&once).unwrap();
        for (a, b) in once.iter().zip(&twice) {
            prop_assert!((a - b).abs() <= 1e-10);
        }
        for (x, v) in once.iter().enumerate() {
            if !mask[x] {
                prop_assert_eq!(*v, 0.0);
            }
        }
    }

    #[test]
    fn second_quantization_is_a_functor(a in square(2), b in square(2)) {
        prop_assume!(a.nrows() == b.nrows());
        let (a, b) = (contraction(a), contraction(b));
        let ga = second_quantize(&a, 4).unwrap();
        let gb = second_quantize(&b, 4).unwrap();
        let gab = second_quantize(&(&a * &b), 4).unwrap();
        prop_assert!((&ga.matrix * &gb.matrix - &gab.matrix).amax() <= 1e-10);
        let id = second_quantize(&DMatrix::identity(a.nrows(), a.nrows()), 4).unwrap();
        prop_assert!((id.matrix - DMatrix::identity(ga.basis.len(), ga.basis.len())).amax() <= 1e-14);
        let op_norm = ga.matrix.svd(false, false).singular_values.max();
        prop_assert!(op_norm <= 1.0 + 1e-10, "{op_norm}");
    }

    #[test]
    fn wick_powers_are_orthogonal(n in 0usize..7, m in 0usize..7, c in 0.1f64..3.0) {
        let p = wick_power(n, c).unwrap();
        let q = wick_power(m, c).unwrap();
        let mut inner = 0.0;
        for (i, a) in p.coeffs.iter().enumerate() {
            for (j, b) in q.coeffs.iter().enumerate() {
                inner += a * b * gaussian_moment(i + j, c);
            }
        }
        let expected = if n == m { (1..=n).map(|k| k as f64).product::<f64>() * c.powi(n as i32) } else { 0.0 };
        prop_assert!((inner - expected).abs() <= 1e-9 * expected.max(1.0), "{inner} vs {expected}");
        let r = 14.0 * c.sqrt();
        let mean = integrate(|x| p.eval(x) * (-x * x / (2.0 * c)).exp(), -r, r, 1e-13, 1e-12).unwrap()
            / (2.0 * std::f64::consts::PI * c).sqrt();
        if n > 0 {
            prop_assert!(mean.abs() <= 1e-8 * gaussian_moment(2 * n, c).sqrt().max(1.0));
        }
    }

    #[test]
    fn transfer_matrix_is_symmetric_and_positive(
        n_s in 1usize..=2,
        mass in 0.5f64..2.0,
        spacing in 0.5f64..1.0,
        lambda in 0.0f64..0.5,
    ) {
        let p = InteractionPolynomial::quartic(lambda).unwrap();
        let tm = build_transfer(n_s, mass, spacing, &p, 8).unwrap();
        prop_assert!(tm.symmetry_defect() <= 1e-14);
        prop_assert!(tm.min_entry() > 0.0);
    }
}
