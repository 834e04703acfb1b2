//! Randomized property tests for the closed-form algebra and the null law.

use ndarray::{Array1, Array2};
use proptest::prelude::*;

use respike::algebra::{secular_eigenvalues, PerturbationSpec, ResidualPair};
use respike::algebra::{lemma_residual_eigs, lemma_residual_eigs_2theta};
use respike::criterion::mu_from_alpha2;
use respike::nulllaw::{null_law_general, NullLaw};
use respike::spectra::{eig_sym, Group, MomentSet, Spectrum};

fn realizable_bulk() -> impl Strategy<Value = Spectrum> {
    proptest::collection::vec(0.05f64..20.0, 5..80).prop_map(|v| {
        Spectrum::new(v).normalize_trace().expect("positive trace")
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn residual_pair_product_is_one(theta in 1.0001f64..1e5, alpha2 in 0.0f64..1.0) {
        if let ResidualPair::Real { hi, lo } = lemma_residual_eigs(theta, alpha2) {
            prop_assert!(hi >= 1.0 - 1e-12 && lo <= 1.0 + 1e-12);
            prop_assert!((hi * lo - 1.0).abs() < 1e-9 * hi.max(1.0));
        } else {
            prop_assert!(false, "complex pair on the real domain");
        }
    }

    #[test]
    fn residual_pair_2theta_product(
        theta_x in 1.0001f64..1e4,
        theta_y in 1.0001f64..1e4,
        alpha2 in 0.0f64..1.0,
    ) {
        if let ResidualPair::Real { hi, lo } = lemma_residual_eigs_2theta(theta_x, theta_y, alpha2) {
            let target = theta_y / theta_x;
            prop_assert!((hi * lo - target).abs() < 1e-9 * hi.abs().max(target.abs()));
            prop_assert!(hi >= lo);
        } else {
            prop_assert!(false, "complex pair on the real domain");
        }
    }

    #[test]
    fn mu_bounds_and_monotonicity(theta in 1.0001f64..1e4, a in 0.0f64..1.0, b in 0.0f64..1.0) {
        let (lo_a2, hi_a2) = if a <= b { (a, b) } else { (b, a) };
        let mu_lo = mu_from_alpha2(theta, lo_a2).unwrap();
        let mu_hi = mu_from_alpha2(theta, hi_a2).unwrap();
        // mu decreases as the angle cosine grows, and mu(1) = 1
        prop_assert!(mu_lo >= mu_hi - 1e-12);
        prop_assert!(mu_hi >= 1.0 - 1e-12);
        prop_assert_eq!(mu_from_alpha2(theta, 1.0).unwrap(), 1.0);
    }

    #[test]
    fn null_law_invariants(bulk in realizable_bulk(), m in 50usize..2000) {
        let momx = MomentSet::from_spectrum(&bulk, Group::X);
        let momy = MomentSet::from_spectrum(&bulk, Group::Y);
        let law = null_law_general(&momx, &momy, m).unwrap();
        prop_assert!(law.lambda_plus >= 1.0);
        prop_assert!((law.lambda_plus * law.lambda_minus - 1.0).abs() < 1e-10);
        prop_assert!(law.sigma_plus > 0.0 && law.sigma_minus > 0.0);

        let back: NullLaw = serde_json::from_str(&law.to_json()).unwrap();
        prop_assert!((back.lambda_plus - law.lambda_plus).abs() < 1e-9 * law.lambda_plus);
        prop_assert!((back.sigma_plus - law.sigma_plus).abs() < 1e-9 * law.sigma_plus);
    }

    #[test]
    fn secular_roots_interlace(
        values in proptest::collection::vec(0.1f64..10.0, 3..10),
        raw_u in proptest::collection::vec(-1.0f64..1.0, 10),
        theta in 1.1f64..50.0,
    ) {
        let m = values.len();
        let mut w = Array2::<f64>::zeros((m, m));
        for (i, &v) in values.iter().enumerate() {
            w[[i, i]] = v;
        }
        let dec = eig_sym(&w).unwrap();
        let mut u = Array1::from(raw_u[..m].to_vec());
        let norm = u.dot(&u).sqrt();
        prop_assume!(norm > 1e-3);
        u /= norm;
        let pert = PerturbationSpec::new(theta, u).unwrap();
        let roots = secular_eigenvalues(&dec, &pert).unwrap();
        prop_assert_eq!(roots.len(), m);
        // roots interlace the sorted eigenvalues of W from above
        let mut sorted = values.clone();
        sorted.sort_by(|a, b| b.partial_cmp(a).unwrap());
        for (k, &r) in roots.iter().enumerate() {
            prop_assert!(r >= sorted[k] - 1e-9);
            if k > 0 {
                prop_assert!(r <= sorted[k - 1] + 1e-9);
            }
        }
    }
}
