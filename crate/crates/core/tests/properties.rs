//! Property tests over seeded synthetic systems.

mod common;

use common::*;
use faer::Mat;
use lfrb::basis::relative_error;
use lfrb::estimation::{fit_multi, residual_of};
use lfrb::model::ConductivityPoint;
use lfrb::numerics::dense::{axpy, frobenius_dot, product};
use lfrb::numerics::forward::{bound_constant, exact_leadfield};
use lfrb::numerics::upper_bound_direct;
use lfrb::poly::{NodeTransform, PolyModel};
use proptest::prelude::*;

fn sigma_strategy() -> impl Strategy<Value = ConductivityPoint> {
    (0.5f64..2.0, -2.0f64..0.0).prop_map(|(a, b)| ConductivityPoint::new(vec![a, 10f64.powf(b), 1.0]).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn bound_never_increases_with_more_supports(seed in 0u64..500, n in 10usize..24, sigma in sigma_strategy()) {
        let (sys, _) = synthetic(n, seed);
        let basis = greedy(&sys, &small_grid(), 9);
        let mut prev = f64::INFINITY;
        for k in 1..=basis.len() {
            let e = basis.solve_prefix(&sigma, k).unwrap().relative_upper_bound;
            prop_assert!(e <= prev + 1e-12, "n={k}: {e} > {prev}");
            prev = e;
        }
    }

    #[test]
    fn residual_is_orthogonal_to_the_basis(seed in 0u64..500, n in 10usize..24, sigma in sigma_strategy()) {
        let (sys, _) = synthetic(n, seed);
        let basis = greedy(&sys, &small_grid(), 6);
        let sol = basis.solve(&sigma).unwrap();
        let h = sys.assemble_h(&sigma).unwrap();
        let cols: Vec<Mat<f64>> = basis.reduced.iter().map(|r| product(r.matrix.as_ref(), h.as_ref())).collect();
        let mut resid = sys.selection().clone();
        for (c, &a) in cols.iter().zip(&sol.alpha) {
            axpy(&mut resid, -a, c);
        }
        let s_norm = sys.selection().norm_l2();
        for c in &cols {
            let ip = frobenius_dot(&resid, c).to_f64();
            prop_assert!(ip.abs() <= 1e-9 * s_norm * c.norm_l2(), "<r, c> = {ip}");
        }
        let direct = upper_bound_direct(&sys, &basis.reduced, &sol.alpha, &sigma).unwrap();
        prop_assert!((direct - sol.upper_bound).abs() <= 1e-9 * s_norm);
    }

    #[test]
    fn true_error_is_dominated_by_the_bound(seed in 0u64..500, n in 10usize..24, sigma in sigma_strategy(), k in 1usize..7) {
        let (sys, _) = synthetic(n, seed);
        let basis = greedy(&sys, &small_grid(), 6);
        let k = k.min(basis.len());
        let approx = basis.approximate_prefix(&sigma, k).unwrap();
        let exact = exact_leadfield(&sys, &sigma).unwrap();
        let c = bound_constant(&sys, &sigma).unwrap();
        let err = relative_error(&approx.leadfield, &exact);
        prop_assert!(err <= c * approx.alpha.upper_bound + 1e-9, "{err} > {c} * {}", approx.alpha.upper_bound);
    }

    #[test]
    fn supports_are_reproduced(seed in 0u64..500, n in 10usize..24) {
        let (sys, _) = synthetic(n, seed);
        let basis = greedy(&sys, &small_grid(), 6);
        for s in &basis.supports {
            let a = basis.approximate(s).unwrap();
            prop_assert!(relative_error(&a.leadfield, &exact_leadfield(&sys, s).unwrap()) <= 1e-8);
            prop_assert!(a.alpha.upper_bound <= 1e-9 * sys.selection().norm_l2());
        }
    }

    #[test]
    fn fit_is_invariant_under_column_sign_flips(
        data in prop::collection::vec(-1.0f64..1.0, 12),
        lf in prop::collection::vec(-1.0f64..1.0, 24),
        flips in prop::collection::vec(any::<bool>(), 4),
    ) {
        let y = Mat::from_fn(6, 2, |i, t| data[i + 6 * t]);
        let l = Mat::from_fn(6, 4, |i, j| lf[i + 6 * j]);
        let flipped = Mat::from_fn(6, 4, |i, j| if flips[j] { -l[(i, j)] } else { l[(i, j)] });
        let a = fit_multi(&y, &l);
        let b = fit_multi(&y, &flipped);
        prop_assert!((a.r_value - b.r_value).abs() <= 1e-12 * a.r_value.max(1e-300));
        prop_assert!((residual_of(&y, &l, &a) - a.r_value).abs() <= 1e-12 * a.r_value.max(1e-300));
    }

    #[test]
    fn interpolation_is_linear_in_the_node_values(
        va in prop::collection::vec(-1.0f64..1.0, 16),
        vb in prop::collection::vec(-1.0f64..1.0, 16),
        c in -3.0f64..3.0,
        x in 1e-4f64..1e-1,
    ) {
        let nodes = vec![1e-4, 1e-3, 1e-2, 1e-1];
        let mats = |v: &[f64]| -> Vec<Mat<f64>> { (0..4).map(|k| Mat::from_fn(2, 2, |i, j| v[4 * k + 2 * i + j])).collect() };
        let (a, b) = (mats(&va), mats(&vb));
        let combo: Vec<Mat<f64>> = a.iter().zip(&b).map(|(p, q)| p + q * c).collect();
        for t in [NodeTransform::Linear, NodeTransform::Log] {
            let pa = PolyModel::from_values(nodes.clone(), a.clone(), t).unwrap().eval(x).leadfield;
            let pb = PolyModel::from_values(nodes.clone(), b.clone(), t).unwrap().eval(x).leadfield;
            let pc = PolyModel::from_values(nodes.clone(), combo.clone(), t).unwrap().eval(x).leadfield;
            let expect = &pa + &pb * c;
            let scale = pa.norm_l2() + c.abs() * pb.norm_l2() + 1.0;
            prop_assert!((&pc - &expect).norm_l2() <= 1e-10 * scale);
        }
    }

    #[test]
    fn multiplier_evaluation_is_deterministic(seed in 0u64..500, sigma in sigma_strategy()) {
        let (sys, _) = synthetic(10, seed);
        let a = sys.multipliers().gamma_at(&sigma).unwrap();
        let b = sys.multipliers().gamma_at(&sigma).unwrap();
        prop_assert_eq!(a.iter().map(|v| v.to_bits()).collect::<Vec<_>>(), b.iter().map(|v| v.to_bits()).collect::<Vec<_>>());
    }
}
