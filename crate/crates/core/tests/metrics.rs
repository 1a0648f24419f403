use std::f64::consts::PI;

use semeq::gridworld::{Action, GridConfig};
use semeq::language::{default_jitter, OrthogonalTransform};
use semeq::mismatch::{effectiveness_mismatch, report, semantic_mismatch};
use semeq::{Language, SemanticSymbol};

fn grid() -> GridConfig {
    GridConfig::default()
}

/// Same-jitter pair whose decoders disagree by a half turn. Expected value
/// enumerated independently: every interpreted action is the opposite of
/// the tie-broken optimum.
#[test]
fn half_turn_em_matches_enumeration() {
    let s = Language::synthesize_with(grid(), 4, 0.0, OrthogonalTransform::IDENTITY).unwrap();
    let t = Language::synthesize_with(grid(), 4, 0.0, OrthogonalTransform::rotation(PI)).unwrap();
    let r = report(&s, &t, false).unwrap();
    assert_eq!(r.sm, 1.0);
    assert!((r.em - 0.853_333_333_333_333_4).abs() < 1e-12, "{}", r.em);
}

#[test]
fn quarter_turn_sm_is_total() {
    let s = Language::synthesize_with(
        grid(),
        2,
        default_jitter(),
        OrthogonalTransform::rotation(0.3),
    )
    .unwrap();
    let t = Language::synthesize_with(
        grid(),
        2,
        default_jitter(),
        OrthogonalTransform::rotation(0.3 + PI / 2.0),
    )
    .unwrap();
    assert_eq!(semantic_mismatch(&s, &t).unwrap(), 1.0);
    assert!(effectiveness_mismatch(&s, &t).unwrap() > 0.0);
}

#[test]
fn some_pair_is_asymmetric() {
    let found = (0..40u64).any(|k| {
        let a = Language::synthesize(grid(), 2 * k, default_jitter()).unwrap();
        let b = Language::synthesize(grid(), 2 * k + 1, default_jitter()).unwrap();
        semantic_mismatch(&a, &b).unwrap() != semantic_mismatch(&b, &a).unwrap()
    });
    assert!(found);
}

#[test]
fn positive_em_implies_positive_sm() {
    for k in 0..30u64 {
        let a = Language::synthesize(grid(), 100 + k, default_jitter()).unwrap();
        let b = Language::synthesize(grid(), 200 + k, default_jitter()).unwrap();
        let r = report(&a, &b, false).unwrap();
        assert!(r.em == 0.0 || r.sm > 0.0, "pair {k}: {r:?}");
    }
}

/// Re-encodes every tie observation into its other optimal atom. The
/// result disagrees with the original on atoms but never on value.
pub fn tie_swapped(lang: &Language) -> Language {
    let g = *lang.grid();
    let encoder = g
        .observations()
        .enumerate()
        .map(|(rank, obs)| {
            let x = lang.encoder_table()[rank];
            let best = g.best_action(&obs).unwrap();
            let q = g.q_star_table(&obs).unwrap();
            match Action::ALL
                .into_iter()
                .find(|&a| a != best && q[a.index()] == q[best.index()])
            {
                Some(other) => {
                    let from = lang.anchor(best);
                    let to = lang.anchor(other);
                    SemanticSymbol::new(x.x1 - from.x1 + to.x1, x.x2 - from.x2 + to.x2)
                }
                None => x,
            }
        })
        .collect();
    Language::from_parts(g, lang.seed(), *lang.anchors(), encoder).unwrap()
}

#[test]
fn constructed_pair_has_sm_without_em() {
    let l = Language::synthesize(grid(), 11, default_jitter()).unwrap();
    let swapped = tie_swapped(&l);
    let r = report(&swapped, &l, true).unwrap();
    assert!(r.sm > 0.0);
    assert_eq!(r.em, 0.0);
    // ties need the agent off both the treasure's row and column
    let ties = grid()
        .observations()
        .filter(|o| o.agent.row != o.treasure.row && o.agent.col != o.treasure.col)
        .count();
    assert!((r.sm - ties as f64 / 600.0).abs() < 1e-12);
}
