//! Semantic mismatch, effectiveness mismatch and information transfer.
//!
//! Encoders are deterministic tables over a finite observation space, so
//! every quantity here is an exact enumeration: the integral against the
//! encoder's symbol distribution collapses to an indicator per observation.
//! Sums run in observation-rank order and are bit-stable.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gridworld::{positive_part, Action, Observation};
use crate::language::{Encoder, Language};
use crate::transport::AffineMap;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MismatchReport {
    pub sm: f64,
    pub em: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub per_observation: Option<Vec<ObservationBreakdown>>,
}

/// One observation's contribution to the metrics.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObservationBreakdown {
    pub observation: Observation,
    /// Target atom of the (possibly equalized) source symbol.
    pub source_atom: usize,
    /// Target atom of the target language's own symbol.
    pub target_atom: usize,
    pub interpreted_action: Action,
    /// `q⁺(â, o) / q⁺(a*, o)`.
    pub q_ratio: f64,
}

/// Row-stochastic matrix `I[i][j]` of information transfer under one map.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InfoTransferMatrix {
    pub values: [[f64; 4]; 4],
    /// Support size of each source atom.
    pub sample_count: [usize; 4],
}

pub(crate) fn check_compatible(src: &dyn Encoder, tgt: &Language) -> Result<()> {
    if src.grid() != tgt.grid() {
        return Err(Error::IncompatibleLanguages(format!(
            "grids differ: {:?} vs {:?}",
            src.grid(),
            tgt.grid()
        )));
    }
    if src.mu() != Encoder::mu(tgt) {
        return Err(Error::IncompatibleLanguages(
            "observation distributions differ".into(),
        ));
    }
    Ok(())
}

/// Exact per-observation breakdown shared by both metrics.
pub fn breakdown(src: &dyn Encoder, tgt: &Language) -> Result<Vec<ObservationBreakdown>> {
    check_compatible(src, tgt)?;
    let grid = *tgt.grid();
    grid.observations()
        .enumerate()
        .map(|(rank, obs)| {
            let source_atom = tgt.atom_of(&src.encode_rank(rank));
            let target_atom = tgt.atom_of(&tgt.encode_rank(rank));
            let interpreted = Action::from_index(source_atom);
            let q_plus = positive_part(grid.q_star_table(&obs)?);
            let best = q_plus.iter().copied().fold(0.0, f64::max);
            // all actions equally good: nothing to lose
            let q_ratio = if best > 0.0 {
                q_plus[interpreted.index()] / best
            } else {
                1.0
            };
            Ok(ObservationBreakdown {
                observation: obs,
                source_atom,
                target_atom,
                interpreted_action: interpreted,
                q_ratio,
            })
        })
        .collect()
}

/// `SM = Σ_o μ(o)·[atom_t(src(o)) ≠ atom_t(tgt(o))]`.
pub fn semantic_mismatch(src: &dyn Encoder, tgt: &Language) -> Result<f64> {
    check_compatible(src, tgt)?;
    let weights = src.mu().weights();
    let mut hit = 0.0;
    for (rank, w) in weights.iter().enumerate() {
        if tgt.atom_of(&src.encode_rank(rank)) == tgt.atom_of(&tgt.encode_rank(rank)) {
            hit += w;
        }
    }
    Ok(clamp_unit(1.0 - hit))
}

/// `EM = 1 − Σ_o μ(o)·q⁺(â(o), o)/q⁺(a*(o), o)` with `â` the deterministic
/// target decoding of the source symbol and `q` the grid-world oracle.
pub fn effectiveness_mismatch(src: &dyn Encoder, tgt: &Language) -> Result<f64> {
    let rows = breakdown(src, tgt)?;
    let weights = src.mu().weights();
    let kept: f64 = rows.iter().zip(weights).map(|(r, w)| w * r.q_ratio).sum();
    Ok(clamp_unit(1.0 - kept))
}

pub fn report(src: &dyn Encoder, tgt: &Language, per_observation: bool) -> Result<MismatchReport> {
    let rows = breakdown(src, tgt)?;
    let weights = src.mu().weights();
    let mut hit = 0.0;
    let mut kept = 0.0;
    for (r, w) in rows.iter().zip(weights) {
        if r.source_atom == r.target_atom {
            hit += w;
        }
        kept += w * r.q_ratio;
    }
    Ok(MismatchReport {
        sm: clamp_unit(1.0 - hit),
        em: clamp_unit(1.0 - kept),
        per_observation: per_observation.then_some(rows),
    })
}

/// Rounding can leave `1 − Σ` a few ulps outside the unit interval.
fn clamp_unit(v: f64) -> f64 {
    v.clamp(0.0, 1.0)
}

/// Observation ranks whose source symbol falls in each source atom.
pub fn atom_members(lang: &Language) -> [Vec<usize>; 4] {
    let mut members: [Vec<usize>; 4] = Default::default();
    for rank in 0..lang.grid().observation_count() {
        members[lang.atom_of(&lang.encode_rank(rank))].push(rank);
    }
    members
}

/// Transfer row `{I_{i→j}(map)}_j` for the given member ranks of source
/// atom `i`, computed exactly.
pub(crate) fn transfer_row(
    src: &Language,
    tgt: &Language,
    members: &[usize],
    map: &AffineMap,
) -> [f64; 4] {
    let weights = Encoder::mu(src).weights();
    let mut row = [0.0; 4];
    let mut mass = 0.0;
    for &rank in members {
        let y = map.apply(&src.encode_rank(rank));
        row[tgt.atom_of(&y)] += weights[rank];
        mass += weights[rank];
    }
    row.map(|v| v / mass)
}

/// `I_{i→j}(map)`: share of source atom `i`'s mass that the map sends into
/// target atom `j`.
pub fn info_transfer(
    src: &Language,
    tgt: &Language,
    map: &AffineMap,
    i: usize,
    j: usize,
) -> Result<f64> {
    Ok(info_transfer_matrix(src, tgt, map, &[i])?.values[i][j])
}

/// Transfer matrix of a single map over the requested source rows (all
/// rows when `rows` is empty). Unrequested rows stay zero.
pub fn info_transfer_matrix(
    src: &Language,
    tgt: &Language,
    map: &AffineMap,
    rows: &[usize],
) -> Result<InfoTransferMatrix> {
    check_compatible(src, tgt)?;
    let members = atom_members(src);
    let all = [0, 1, 2, 3];
    let rows = if rows.is_empty() { &all[..] } else { rows };
    let mut values = [[0.0; 4]; 4];
    for &i in rows {
        if i >= 4 {
            return Err(Error::InvalidParameter(format!(
                "atom index {i} out of range"
            )));
        }
        let w: f64 = members[i]
            .iter()
            .map(|&r| Encoder::mu(src).weights()[r])
            .sum();
        if members[i].is_empty() || w <= 0.0 {
            return Err(Error::EmptyAtom {
                side: "source",
                atom: i,
            });
        }
        values[i] = transfer_row(src, tgt, &members[i], map);
    }
    Ok(InfoTransferMatrix {
        values,
        sample_count: members.map(|m| m.len()),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gridworld::{Cell, GridConfig};
    use crate::language::{default_jitter, OrthogonalTransform};
    use std::f64::consts::PI;

    fn grid() -> GridConfig {
        GridConfig::default()
    }

    #[test]
    fn self_mismatch_is_zero() {
        for seed in 0..5 {
            let l = Language::synthesize(grid(), seed, default_jitter()).unwrap();
            assert_eq!(semantic_mismatch(&l, &l).unwrap(), 0.0);
            assert_eq!(effectiveness_mismatch(&l, &l).unwrap(), 0.0);
        }
    }

    /// Straight enumeration of the antipodal case: every interpreted action is
    /// the opposite of the optimal one.
    #[test]
    fn half_turn_pair() {
        let g = grid();
        let s = Language::synthesize_with(g, 3, 0.0, OrthogonalTransform::rotation(0.4)).unwrap();
        let t =
            Language::synthesize_with(g, 3, 0.0, OrthogonalTransform::rotation(0.4 + PI)).unwrap();
        assert_eq!(semantic_mismatch(&s, &t).unwrap(), 1.0);
        let mut expected = 0.0;
        for obs in g.observations() {
            let q = g.q_star_plus_table(&obs).unwrap();
            let best = g.best_action(&obs).unwrap();
            expected += 1.0 - q[best.opposite().index()] / q[best.index()];
        }
        expected /= g.observation_count() as f64;
        let em = effectiveness_mismatch(&s, &t).unwrap();
        assert!((em - expected).abs() < 1e-12, "{em} vs {expected}");
        assert!(em > 0.0 && em <= 1.0);
    }

    #[test]
    fn incompatible_grids_rejected() {
        let a = Language::synthesize(grid(), 1, 0.0).unwrap();
        let b = Language::synthesize(GridConfig::new(4, 4, 150).unwrap(), 1, 0.0).unwrap();
        assert!(matches!(
            semantic_mismatch(&a, &b),
            Err(Error::IncompatibleLanguages(_))
        ));
        assert!(effectiveness_mismatch(&a, &b).is_err());
    }

    #[test]
    fn identity_transfer_is_diagonal() {
        let l = Language::synthesize(grid(), 9, default_jitter()).unwrap();
        let m = info_transfer_matrix(&l, &l, &AffineMap::identity(), &[]).unwrap();
        for i in 0..4 {
            for j in 0..4 {
                assert_eq!(m.values[i][j], if i == j { 1.0 } else { 0.0 });
            }
        }
        assert_eq!(
            m.sample_count.iter().sum::<usize>(),
            grid().observation_count()
        );
    }

    #[test]
    fn transfer_rows_sum_to_one() {
        let s = Language::synthesize(grid(), 1, default_jitter()).unwrap();
        let t = Language::synthesize(grid(), 2, default_jitter()).unwrap();
        let map = AffineMap::new([[0.7, -0.4], [0.3, 0.9]], [0.05, -0.1]);
        let m = info_transfer_matrix(&s, &t, &map, &[]).unwrap();
        for row in m.values {
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
        assert_eq!(info_transfer(&s, &t, &map, 2, 1).unwrap(), m.values[2][1]);
    }

    #[test]
    fn breakdown_matches_metrics() {
        let s = Language::synthesize(grid(), 5, default_jitter()).unwrap();
        let t = Language::synthesize(grid(), 6, default_jitter()).unwrap();
        let r = report(&s, &t, true).unwrap();
        assert_eq!(r.sm, semantic_mismatch(&s, &t).unwrap());
        assert_eq!(r.em, effectiveness_mismatch(&s, &t).unwrap());
        let rows = r.per_observation.unwrap();
        assert_eq!(rows.len(), 600);
        let o = Observation::new(Cell::new(0, 0), Cell::new(1, 0));
        assert_eq!(rows[grid().rank(&o)].observation, o);
    }
}
