use abca_core::estimation::{aipw_effect, mediator_distribution, outcome_regression};
use abca_core::policy::{cad, decide, weighted_centroid};
use abca_core::vector::normalize;
use abca_core::{AbcaConfig, AnswerSample, AspectSummary, UnitVector, VerdictKind};
use proptest::prelude::*;

fn unit(dim: usize) -> impl Strategy<Value = UnitVector> {
    prop::collection::vec(-1.0f64..1.0, dim).prop_filter_map("zero vector", |v| normalize(&v).ok())
}

fn summaries(dim: usize) -> impl Strategy<Value = Vec<AspectSummary>> {
    prop::collection::vec((0.05f64..1.0, 0.05f64..1.0, unit(dim)), 1..6).prop_map(|rows| {
        rows.into_iter()
            .enumerate()
            .map(|(i, (w, tau, e))| AspectSummary::new(format!("aspect {i}"), w, tau, format!("answer {i}"), e))
            .collect()
    })
}

proptest! {
    #[test]
    fn gate_trichotomy(s in summaries(4), null in unit(4), theta in 0.1f64..1.5, rho in 0.0f64..1.0) {
        let cfg = AbcaConfig { theta_max: theta, rho_null: rho, ..AbcaConfig::default() };
        let d = decide(&s, &cfg, &null).unwrap();
        match d.kind {
            VerdictKind::AbstainType1 => prop_assert!(d.cad > theta),
            VerdictKind::AbstainType2 => prop_assert!(d.cad <= theta && d.null_distance <= rho),
            VerdictKind::Aggregate => prop_assert!(d.cad <= theta && d.null_distance > rho),
        }
        prop_assert!((0.0..=std::f64::consts::PI).contains(&d.cad));
        if d.kind == VerdictKind::Aggregate {
            for (a, t) in d.per_aspect_theta.iter().enumerate() {
                prop_assert_eq!(d.caveat_aspects.contains(&format!("aspect {a}")), *t > d.cad);
            }
        }
    }

    #[test]
    fn alpha_scale_invariance(s in summaries(3), k in 0.01f64..100.0) {
        let es: Vec<UnitVector> = s.iter().map(|x| x.embedding.clone()).collect();
        let a: Vec<f64> = s.iter().map(|x| x.alpha).collect();
        let ka: Vec<f64> = a.iter().map(|x| x * k).collect();
        let c1 = weighted_centroid(&es, &a).unwrap();
        let c2 = weighted_centroid(&es, &ka).unwrap();
        for (x, y) in c1.components().iter().zip(c2.components()) {
            prop_assert!((x - y).abs() < 1e-9);
        }
        let (d1, _) = cad(&es, &a, &c1).unwrap();
        let (d2, _) = cad(&es, &ka, &c2).unwrap();
        prop_assert!((d1 - d2).abs() < 1e-9);
    }

    #[test]
    fn estimator_permutation_invariance(
        rows in prop::collection::vec((0usize..4, 0.01f64..=1.0), 1..24),
        rot in 0usize..24,
    ) {
        let s: Vec<AnswerSample> = rows.iter().map(|&(j, a)| AnswerSample::new(j, "x", a)).collect();
        let mut t = s.clone();
        let n = t.len();
        t.rotate_left(rot % n);
        t.reverse();
        let tau = |v: &[AnswerSample]| {
            let m = mediator_distribution(v, 4).unwrap();
            let r = outcome_regression(v, 4).unwrap();
            aipw_effect(v, &m, &r).unwrap()
        };
        let (a, b) = (tau(&s), tau(&t));
        prop_assert!((a - b).abs() < 1e-12);
        prop_assert!(a > 0.0 && a <= 1.0 + 1e-12);
    }
}
