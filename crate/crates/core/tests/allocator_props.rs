use artic_core::allocator::{
    build_frame_budget, cosine_similarity, patch_bits, qp_from_correlation, CorrelationMap, FeatureVector,
    RateModelParams, QP_MAX,
};
use proptest::prelude::*;

fn rho() -> impl Strategy<Value = f64> {
    -1.0f64..=1.0
}

fn gamma() -> impl Strategy<Value = f64> {
    0.05f64..10.0
}

fn vector(dim: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-100.0f64..100.0, dim).prop_filter("non-zero", |v| v.iter().any(|x| x.abs() > 1e-3))
}

proptest! {
    #[test]
    fn qp_is_monotone_in_rho(a in rho(), b in rho(), g in gamma()) {
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        prop_assert!(qp_from_correlation(lo, g).unwrap() >= qp_from_correlation(hi, g).unwrap());
    }

    #[test]
    fn qp_stays_in_range(r in rho(), g in gamma()) {
        prop_assert!(qp_from_correlation(r, g).unwrap() <= QP_MAX);
    }

    #[test]
    fn larger_gamma_never_lowers_qp(r in -1.0f64..1.0, g1 in gamma(), g2 in gamma()) {
        let (lo, hi) = if g1 <= g2 { (g1, g2) } else { (g2, g1) };
        prop_assert!(qp_from_correlation(r, hi).unwrap() >= qp_from_correlation(r, lo).unwrap());
        prop_assert_eq!(qp_from_correlation(1.0, hi).unwrap(), 0);
    }

    #[test]
    fn budget_shrinks_when_any_rho_drops(
        values in prop::collection::vec(-1.0f32..=1.0, 12),
        idx in 0usize..12,
        drop in 0.0f32..2.0,
        g in gamma(),
    ) {
        let params = RateModelParams::default();
        let before = CorrelationMap::new(3, 4, 64, values.clone()).unwrap();
        let mut lowered = values;
        lowered[idx] = (lowered[idx] - drop).max(-1.0);
        let after = CorrelationMap::new(3, 4, 64, lowered).unwrap();
        let b0 = build_frame_budget(&before, g, &params).unwrap().total_bits();
        let b1 = build_frame_budget(&after, g, &params).unwrap().total_bits();
        prop_assert!(b1 <= b0);
    }

    #[test]
    fn cosine_is_symmetric_and_scale_invariant(
        (a, b) in (1usize..16).prop_flat_map(|d| (vector(d), vector(d))),
        c in 1e-3f64..1e3,
    ) {
        let fa = FeatureVector::new(a.clone()).unwrap();
        let fb = FeatureVector::new(b).unwrap();
        let fca = FeatureVector::new(a.iter().map(|x| x * c).collect()).unwrap();
        let ab = cosine_similarity(&fa, &fb).unwrap();
        let ba = cosine_similarity(&fb, &fa).unwrap();
        let cab = cosine_similarity(&fca, &fb).unwrap();
        prop_assert!((ab - ba).abs() < 1e-12);
        prop_assert!((ab - cab).abs() < 1e-9);
        prop_assert!((-1.0..=1.0).contains(&ab));
    }

    #[test]
    fn patch_bits_halve_every_step(qp in 0u8..=45, ref_bits in 100.0f64..1e5, ref_qp in 0u8..=51, step in 1.0f64..12.0) {
        let params = RateModelParams::new(ref_bits, ref_qp, step).unwrap();
        let here = patch_bits(qp, &params).unwrap();
        prop_assert!(here > 0.0);
        prop_assert!(patch_bits(qp + 1, &params).unwrap() < here);
        if step == 6.0 {
            prop_assert!((patch_bits(qp + 6, &params).unwrap() - here / 2.0).abs() < 1e-9 * here);
        }
    }
}

#[test]
fn patch_bits_identity_and_halving_points() {
    for &(ref_bits, ref_qp, step) in &[(3000.0, 30u8, 6.0), (10_000.0, 20, 4.0), (500.0, 10, 3.0)] {
        let params = RateModelParams::new(ref_bits, ref_qp, step).unwrap();
        assert_eq!(patch_bits(ref_qp, &params).unwrap(), ref_bits);
        let one = patch_bits(ref_qp + step as u8, &params).unwrap();
        assert!((one - ref_bits / 2.0).abs() < 1e-9 * ref_bits);
        let two = patch_bits(ref_qp + 2 * step as u8, &params).unwrap();
        assert!((two - ref_bits / 4.0).abs() < 1e-9 * ref_bits);
    }
}

#[test]
fn uniform_maps_hit_the_budget_extremes() {
    let params = RateModelParams::default();
    let best = build_frame_budget(&CorrelationMap::uniform(2, 2, 64, 1.0).unwrap(), 3.0, &params).unwrap();
    let worst = build_frame_budget(&CorrelationMap::uniform(2, 2, 64, -1.0).unwrap(), 3.0, &params).unwrap();
    assert!(best.qp_map().values().iter().all(|&q| q == 0));
    assert!(worst.qp_map().values().iter().all(|&q| q == 51));
    assert!(best.total_bits() > worst.total_bits());
}
