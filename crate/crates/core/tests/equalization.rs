use semeq::equalizer::{equalize, TransformCodebook};
use semeq::language::{default_jitter, OrthogonalTransform};
use semeq::mismatch::{info_transfer, report};
use semeq::transport::build_codebook;
use semeq::{AffineMap, FitParams, GridConfig, Language, Policy, PolicyKind, QSource};

fn rotated_pair(seed: u64, deg: f64) -> (Language, Language) {
    let g = GridConfig::default();
    let base = OrthogonalTransform::random(seed);
    let turned = OrthogonalTransform {
        angle: base.angle + deg.to_radians(),
        reflect: base.reflect,
    };
    (
        Language::synthesize_with(g, seed, default_jitter(), base).unwrap(),
        Language::synthesize_with(g, seed, default_jitter(), turned).unwrap(),
    )
}

#[test]
fn rotated_pairs_are_equalized() {
    for (seed, deg) in [(1, 60.0), (2, 90.0), (3, 135.0), (4, -75.0)] {
        let (s, t) = rotated_pair(seed, deg);
        assert!(report(&s, &t, false).unwrap().sm >= 0.5);
        let book = build_codebook(&s, &t, &FitParams::default()).unwrap();
        for i in 0..4 {
            assert!(
                book.cached_row(i, i)[i] >= 0.95,
                "seed {seed}: {:?}",
                book.cached_row(i, i)
            );
        }
        let sm_policy = Policy::build(
            PolicyKind::SemanticRisk,
            Some(&book),
            &s,
            &t,
            QSource::Oracle,
        )
        .unwrap();
        let em_policy = Policy::build(
            PolicyKind::EffectivenessRisk,
            Some(&book),
            &s,
            &t,
            QSource::Oracle,
        )
        .unwrap();
        let sm = report(&equalize(&s, &sm_policy, true).unwrap(), &t, false)
            .unwrap()
            .sm;
        let em = report(&equalize(&s, &em_policy, true).unwrap(), &t, false)
            .unwrap()
            .em;
        assert!(
            sm <= 0.05 && em <= 0.05,
            "seed {seed} deg {deg}: sm {sm} em {em}"
        );
    }
}

#[test]
fn fitted_maps_never_lose_to_identity_on_their_own_objective() {
    for (seed, deg) in [(5, 45.0), (6, 100.0)] {
        let (s, t) = rotated_pair(seed, deg);
        let book = build_codebook(&s, &t, &FitParams::default()).unwrap();
        for i in 0..4 {
            for j in 0..4 {
                let fitted = book.cached_row(i, j)[j];
                let identity = info_transfer(&s, &t, &AffineMap::identity(), i, j).unwrap();
                assert!(fitted >= identity, "({i},{j}): {fitted} < {identity}");
            }
        }
    }
}

#[test]
fn self_codebook_is_diagonal_identity() {
    let l = Language::synthesize(GridConfig::default(), 8, default_jitter()).unwrap();
    let book = build_codebook(&l, &l, &FitParams::default()).unwrap();
    for i in 0..4 {
        let m = book.map(i, i);
        assert!(
            m.linear_distance(&AffineMap::identity().linear) < 0.1,
            "{m:?}"
        );
        assert_eq!(book.cached_row(i, i)[i], 1.0);
    }
    let policy = Policy::build(
        PolicyKind::SemanticRisk,
        Some(&book),
        &l,
        &l,
        QSource::Decoder,
    )
    .unwrap();
    let r = report(&equalize(&l, &policy, true).unwrap(), &l, false).unwrap();
    assert_eq!((r.sm, r.em), (0.0, 0.0));
}

#[test]
fn codebook_builds_are_bit_identical_and_round_trip() {
    let g = GridConfig::default();
    let s = Language::synthesize(g, 21, default_jitter()).unwrap();
    let t = Language::synthesize(g, 22, default_jitter()).unwrap();
    let a = build_codebook(&s, &t, &FitParams::default()).unwrap();
    let b = build_codebook(&s, &t, &FitParams::default()).unwrap();
    assert_eq!(a, b);
    let json = a.to_json().unwrap();
    assert_eq!(json, b.to_json().unwrap());
    let back = TransformCodebook::from_json(&json, &s, &t).unwrap();
    assert_eq!(back, a);
    // a codebook does not load against other languages
    assert!(TransformCodebook::from_json(&json, &t, &s).is_err());
}

#[test]
fn perturbed_source_breaks_grounded_metrics() {
    let g = GridConfig::default();
    let l = Language::synthesize(g, 30, default_jitter()).unwrap();
    let p = l.perturbed(0.1, 30).unwrap();
    let r = report(&p, &l, false).unwrap();
    assert!((r.sm - 0.1).abs() < 1e-12, "{}", r.sm);
    assert!(r.em > 0.0);
}
