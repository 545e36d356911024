use chsaddle::fem::{build_uniform_mesh, FemOperators};
use chsaddle::spectra::{bdsc_roots, GOLDEN};
use chsaddle::truncation::{certify_m_matrix, truncate_sparse, TruncationMask};
use chsaddle::uzawa::{step_length_bisection, BisectionConfig};
use proptest::prelude::*;

fn stiffness() -> chsaddle::linalg::CsrMatrix {
    FemOperators::new(&build_uniform_mesh(5).unwrap(), 0.02, 1e-5).unwrap().stiffness
}

proptest! {
    #[test]
    fn mask_partitions_nodes(n in 1usize..200, frac in 0.0f64..=1.0, seed in any::<u64>()) {
        let m = TruncationMask::random(n, frac, seed);
        prop_assert_eq!(m.active_count(), ((frac * n as f64).round() as usize).min(n));
        for i in 0..n {
            prop_assert_eq!(m.t_diag()[i] + m.that_diag()[i], 1.0);
        }
        prop_assert_eq!(m.active_indices().len() + m.inactive_indices().len(), n);
    }

    #[test]
    fn truncated_stiffness_is_m_matrix(seed in any::<u64>(), frac in 0.04f64..0.9) {
        let k = stiffness();
        let mask = TruncationMask::random(k.n_rows(), frac, seed);
        prop_assume!(mask.active_count() > 0);
        let kh = truncate_sparse(&k, &mask).unwrap();
        prop_assert!(kh.is_symmetric(0.0));
        let c = certify_m_matrix(&kh);
        prop_assert!(c.passed(), "{:?}", c.violation);
    }

    #[test]
    fn bdsc_roots_lie_in_intervals(mu in 1e-6f64..=1.0) {
        let (lo, hi) = bdsc_roots(mu);
        prop_assert!(lo >= -1.0 - 1e-12 && lo <= 1.0 - 2f64.sqrt() + 1e-12);
        prop_assert!(hi >= 1.0 - 1e-12 && hi <= GOLDEN + 1e-12);
    }

    #[test]
    fn bisection_finds_root_of_decreasing_line(root in 0.01f64..1.99, slope in 0.1f64..10.0) {
        let phi0 = slope * root;
        let s = step_length_bisection(|r| Ok(slope * (root - r)), phi0, &BisectionConfig::default()).unwrap();
        prop_assert!(!s.fallback);
        prop_assert!((s.rho - root).abs() <= 1e-4);
    }
}
