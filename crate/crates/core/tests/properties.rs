use std::f64::consts::{PI, TAU};

use proptest::prelude::*;
use stratlab::classifier::{classify, Expectation};
use stratlab::cone::{unfold_flat_cone, ConePoint};
use stratlab::link::{LinkPoint, LinkSpace};
use stratlab::measure::ball_volume_mc;
use stratlab::model::{ModelPoint, StratifiedModel};

fn cone_point() -> impl Strategy<Value = ModelPoint> {
    (0.0..1.0f64, 0.0..TAU).prop_map(|(r, t)| ModelPoint::Cone(ConePoint::new(r, LinkPoint::Circle(t))))
}

fn suspension_point() -> impl Strategy<Value = ModelPoint> {
    (0.0..=PI, 0.0..TAU).prop_map(|(t, a)| ModelPoint::Link(LinkPoint::suspension(t, LinkPoint::Circle(a))))
}

fn sphere_point() -> impl Strategy<Value = ModelPoint> {
    prop::array::uniform3(-1.0..1.0f64)
        .prop_filter("away from the origin", |v| v.iter().map(|x| x * x).sum::<f64>() > 1e-3)
        .prop_map(|v| {
            let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            ModelPoint::Link(LinkPoint::Sphere(v.iter().map(|x| x / n).collect()))
        })
}

fn check_metric(model: &StratifiedModel, p: &ModelPoint, q: &ModelPoint, s: &ModelPoint) -> Result<(), TestCaseError> {
    let d = |a, b| model.distance(a, b).unwrap();
    prop_assert!(d(p, p).abs() < 1e-6);
    prop_assert!((d(p, q) - d(q, p)).abs() < 1e-9);
    prop_assert!(d(p, q) >= 0.0);
    prop_assert!(d(p, s) <= d(p, q) + d(q, s) + 1e-9, "{} > {} + {}", d(p, s), d(p, q), d(q, s));
    prop_assert!(d(p, q) <= model.diameter() + 1e-9);
    Ok(())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn cone_distance_is_a_metric(alpha in 0.3..4.0 * PI, p in cone_point(), q in cone_point(), s in cone_point()) {
        let model = StratifiedModel::flat_cone(alpha, 1.0).unwrap();
        check_metric(&model, &p, &q, &s)?;
    }

    #[test]
    fn suspension_distance_is_a_metric(alpha in 0.3..4.0 * PI, p in suspension_point(), q in suspension_point(), s in suspension_point()) {
        let model = StratifiedModel::spherical_suspension(2, alpha).unwrap();
        check_metric(&model, &p, &q, &s)?;
    }

    #[test]
    fn sphere_distance_is_a_metric(p in sphere_point(), q in sphere_point(), s in sphere_point()) {
        let model = StratifiedModel::round_sphere(2).unwrap();
        check_metric(&model, &p, &q, &s)?;
    }

    #[test]
    fn unfolded_segment_has_the_cone_distance(alpha in 0.3..4.0 * PI, p in cone_point(), q in cone_point()) {
        let model = StratifiedModel::flat_cone(alpha, 1.0).unwrap();
        let (ModelPoint::Cone(a), ModelPoint::Cone(b)) = (&p, &q) else { unreachable!() };
        if let Ok(g) = unfold_flat_cone(alpha, a, b) {
            prop_assert!((g.length - model.distance(&p, &q).unwrap()).abs() < 1e-9);
        }
    }

    #[test]
    fn rcd_is_monotone_in_k_and_n(radius in 0.05..2.0f64, k in -2.0..2.0f64, dk in 0.0..1.0f64, n in 2.0..5.0f64, dn in 0.0..3.0f64) {
        let models = [
            StratifiedModel::cone(LinkSpace::circle(radius).unwrap(), 1.0).unwrap(),
            StratifiedModel::suspension(LinkSpace::circle(radius).unwrap()).unwrap(),
        ];
        for m in &models {
            // RCD(K, N) implies RCD(K', N') for K' ≤ K and N' ≥ N
            if Expectation::of(&classify(m, k, n)) == Expectation::Holds {
                prop_assert_eq!(Expectation::of(&classify(m, k - dk, n + dn)), Expectation::Holds);
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn monte_carlo_is_deterministic(seed in any::<u64>(), r in 0.05..0.9f64, c in cone_point()) {
        let model = StratifiedModel::flat_cone(PI, 1.0).unwrap();
        let a = ball_volume_mc(&model, &c, r, 5000, seed).unwrap();
        let b = ball_volume_mc(&model, &c, r, 5000, seed).unwrap();
        prop_assert_eq!(a.value.to_bits(), b.value.to_bits());
        prop_assert_eq!(a.stderr.to_bits(), b.stderr.to_bits());
    }
}
