//! Codebook storage and the per-observation map selection policies.
//!
//! A codebook holds one affine map per (source atom, target atom) pair and,
//! for every map, the exact information-transfer rows of every source atom.
//! Both risks are affine in a stochastic selection policy, so the optimal
//! policy is deterministic: each observation takes the codebook map with the
//! best score, earliest codebook index on ties.

use std::io::{Read, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gridworld::{positive_part, GridConfig, Observation, ObservationDistribution};
use crate::language::{Encoder, Language, QSource, SemanticSymbol};
use crate::mismatch::{atom_members, check_compatible, transfer_row};
use crate::transport::AffineMap;

pub const FORMAT_VERSION: u32 = 1;

/// `transfer[fi][fj][i]` is the row `{I_{i→j}(T_{fi,fj})}_j`.
type TransferTensor = [[[[f64; 4]; 4]; 4]; 4];

#[derive(Clone, Debug, PartialEq)]
pub struct TransformCodebook {
    source_seed: u64,
    target_seed: u64,
    maps: [[AffineMap; 4]; 4],
    transfer: TransferTensor,
    kappa: [usize; 4],
}

impl TransformCodebook {
    /// Wraps fitted maps and computes every transfer row by enumeration.
    pub fn new(src: &Language, tgt: &Language, maps: [[AffineMap; 4]; 4]) -> Result<Self> {
        check_compatible(src, tgt)?;
        if maps.iter().flatten().any(|m| !m.is_finite()) {
            return Err(Error::InvalidCodebook("non-finite map entry".into()));
        }
        let members = atom_members(src);
        for (i, m) in members.iter().enumerate() {
            if m.is_empty() {
                return Err(Error::EmptyAtom {
                    side: "source",
                    atom: i,
                });
            }
        }
        let mut transfer = [[[[0.0; 4]; 4]; 4]; 4];
        for fi in 0..4 {
            for fj in 0..4 {
                for i in 0..4 {
                    transfer[fi][fj][i] = transfer_row(src, tgt, &members[i], &maps[fi][fj]);
                }
            }
        }
        Ok(Self {
            source_seed: src.seed(),
            target_seed: tgt.seed(),
            maps,
            transfer,
            // atoms correspond when they decode to the same action
            kappa: [0, 1, 2, 3],
        })
    }

    /// Codebook holding the identity everywhere.
    pub fn identity(src: &Language, tgt: &Language) -> Result<Self> {
        Self::new(src, tgt, [[AffineMap::identity(); 4]; 4])
    }

    pub fn map(&self, i: usize, j: usize) -> &AffineMap {
        &self.maps[i][j]
    }

    pub fn maps(&self) -> &[[AffineMap; 4]; 4] {
        &self.maps
    }

    pub fn kappa(&self) -> &[usize; 4] {
        &self.kappa
    }

    pub fn source_seed(&self) -> u64 {
        self.source_seed
    }

    pub fn target_seed(&self) -> u64 {
        self.target_seed
    }

    /// `{I_{atom→j}(T_{fi,fj})}_j`.
    pub fn transfer(&self, fi: usize, fj: usize, atom: usize) -> &[f64; 4] {
        &self.transfer[fi][fj][atom]
    }

    /// The row each entry was fitted for: `{I_{i→j'}(T_{i,j})}_{j'}`.
    pub fn cached_row(&self, i: usize, j: usize) -> &[f64; 4] {
        &self.transfer[i][j][i]
    }

    pub fn to_document(&self) -> CodebookDocument {
        let mut entries = Vec::with_capacity(16);
        for i in 0..4 {
            for j in 0..4 {
                entries.push(CodebookEntry {
                    i,
                    j,
                    linear: self.maps[i][j].linear,
                    offset: self.maps[i][j].offset,
                    info_transfer_row_cached: *self.cached_row(i, j),
                });
            }
        }
        CodebookDocument {
            format_version: FORMAT_VERSION,
            source_seed: self.source_seed,
            target_seed: self.target_seed,
            entries,
        }
    }

    /// Rebuilds a codebook against its languages. Cached rows in the
    /// document must agree with the recomputed ones.
    pub fn from_document(doc: CodebookDocument, src: &Language, tgt: &Language) -> Result<Self> {
        if doc.format_version != FORMAT_VERSION {
            return Err(Error::FormatVersion(doc.format_version));
        }
        if doc.source_seed != src.seed() || doc.target_seed != tgt.seed() {
            return Err(Error::InvalidCodebook(format!(
                "codebook built for seeds ({}, {}), languages have ({}, {})",
                doc.source_seed,
                doc.target_seed,
                src.seed(),
                tgt.seed()
            )));
        }
        let mut maps = [[None; 4]; 4];
        for e in &doc.entries {
            if e.i >= 4 || e.j >= 4 {
                return Err(Error::InvalidCodebook(format!(
                    "entry ({}, {}) out of range",
                    e.i, e.j
                )));
            }
            if maps[e.i][e.j]
                .replace(AffineMap::new(e.linear, e.offset))
                .is_some()
            {
                return Err(Error::InvalidCodebook(format!(
                    "duplicate entry ({}, {})",
                    e.i, e.j
                )));
            }
        }
        let mut full = [[AffineMap::identity(); 4]; 4];
        for i in 0..4 {
            for j in 0..4 {
                full[i][j] = maps[i][j]
                    .ok_or_else(|| Error::InvalidCodebook(format!("missing entry ({i}, {j})")))?;
            }
        }
        let book = Self::new(src, tgt, full)?;
        for e in &doc.entries {
            let row = book.cached_row(e.i, e.j);
            if row
                .iter()
                .zip(&e.info_transfer_row_cached)
                .any(|(a, b)| (a - b).abs() > 1e-12)
            {
                return Err(Error::InvalidCodebook(format!(
                    "cached transfer row for ({}, {}) does not match the languages",
                    e.i, e.j
                )));
            }
        }
        Ok(book)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&self.to_document())?)
    }

    pub fn from_json(s: &str, src: &Language, tgt: &Language) -> Result<Self> {
        Self::from_document(serde_json::from_str(s)?, src, tgt)
    }

    pub fn write<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(self.to_json()?.as_bytes())?;
        w.write_all(b"\n")?;
        Ok(())
    }

    pub fn read<R: Read>(r: R, src: &Language, tgt: &Language) -> Result<Self> {
        Self::from_document(serde_json::from_reader(r)?, src, tgt)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        self.write(std::io::BufWriter::new(std::fs::File::create(path)?))
    }

    pub fn load(path: impl AsRef<Path>, src: &Language, tgt: &Language) -> Result<Self> {
        Self::read(
            std::io::BufReader::new(std::fs::File::open(path)?),
            src,
            tgt,
        )
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CodebookDocument {
    pub format_version: u32,
    pub source_seed: u64,
    pub target_seed: u64,
    pub entries: Vec<CodebookEntry>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CodebookEntry {
    pub i: usize,
    pub j: usize,
    pub linear: [[f64; 2]; 2],
    pub offset: [f64; 2],
    pub info_transfer_row_cached: [f64; 4],
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PolicyKind {
    SemanticRisk,
    EffectivenessRisk,
    Fixed(usize, usize),
    None,
}

impl FromStr for PolicyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sm" => Ok(PolicyKind::SemanticRisk),
            "em" => Ok(PolicyKind::EffectivenessRisk),
            "none" => Ok(PolicyKind::None),
            _ => {
                let bad = || {
                    Error::InvalidParameter(format!(
                        "unknown policy {s:?} (expected sm, em, none or fixed:i,j)"
                    ))
                };
                let rest = s.strip_prefix("fixed:").ok_or_else(bad)?;
                let (i, j) = rest.split_once(',').ok_or_else(bad)?;
                let i: usize = i.trim().parse().map_err(|_| bad())?;
                let j: usize = j.trim().parse().map_err(|_| bad())?;
                if i >= 4 || j >= 4 {
                    return Err(bad());
                }
                Ok(PolicyKind::Fixed(i, j))
            }
        }
    }
}

/// A codebook entry chosen for one observation.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Selection {
    pub entry: (usize, usize),
    pub map: AffineMap,
    pub score: f64,
}

fn source_atom(src: &Language, obs: &Observation) -> Result<usize> {
    Ok(src.atom_of(&src.encode(obs)?))
}

/// Highest score over all 16 entries, first in row-major order on ties.
fn best_entry(book: &TransformCodebook, score: impl Fn(usize, usize) -> f64) -> Selection {
    let mut best = Selection {
        entry: (0, 0),
        map: book.maps[0][0],
        score: score(0, 0),
    };
    for fi in 0..4 {
        for fj in 0..4 {
            let s = score(fi, fj);
            if s > best.score {
                best = Selection {
                    entry: (fi, fj),
                    map: book.maps[fi][fj],
                    score: s,
                };
            }
        }
    }
    best
}

/// Entry maximizing `Σ_{j∈κ(i)} I_{i→j}(T)` for the observation's source atom.
pub fn select_sm(book: &TransformCodebook, src: &Language, obs: &Observation) -> Result<Selection> {
    let i = source_atom(src, obs)?;
    let target = book.kappa[i];
    Ok(best_entry(book, |fi, fj| book.transfer[fi][fj][i][target]))
}

/// Value table used by the effectiveness policy, shifted so its minimum is
/// zero.
pub fn shifted_q(tgt: &Language, obs: &Observation, q_source: QSource) -> Result<[f64; 4]> {
    Ok(positive_part(tgt.decoder_q_table(obs, q_source)?))
}

/// Entry maximizing `Σ_j I_{i→j}(T)·q_t(a_j, o)`, with `a_j` the action of
/// target atom `j`.
pub fn select_em(
    book: &TransformCodebook,
    src: &Language,
    tgt: &Language,
    obs: &Observation,
    q_source: QSource,
) -> Result<Selection> {
    let i = source_atom(src, obs)?;
    let q = shifted_q(tgt, obs, q_source)?;
    Ok(best_entry(book, |fi, fj| {
        book.transfer[fi][fj][i]
            .iter()
            .zip(&q)
            .map(|(t, v)| t * v)
            .sum()
    }))
}

/// `R_S(π, o)` for a stochastic policy given as weights over the 16 entries
/// in row-major order.
pub fn semantic_risk(
    book: &TransformCodebook,
    src: &Language,
    obs: &Observation,
    pi: &[f64; 16],
) -> Result<f64> {
    let i = source_atom(src, obs)?;
    let target = book.kappa[i];
    let expected: f64 = (0..16)
        .map(|k| pi[k] * book.transfer[k / 4][k % 4][i][target])
        .sum();
    Ok(1.0 - expected)
}

/// `R_E(π, o)` with the shifted value table.
pub fn effectiveness_risk(
    book: &TransformCodebook,
    src: &Language,
    tgt: &Language,
    obs: &Observation,
    q_source: QSource,
    pi: &[f64; 16],
) -> Result<f64> {
    let i = source_atom(src, obs)?;
    let q = shifted_q(tgt, obs, q_source)?;
    let expected: f64 = (0..16)
        .map(|k| {
            let row = &book.transfer[k / 4][k % 4][i];
            pi[k] * row.iter().zip(&q).map(|(t, v)| t * v).sum::<f64>()
        })
        .sum();
    Ok(1.0 - expected)
}

/// Deterministic selection for every observation, resolved up front.
#[derive(Clone, Debug, PartialEq)]
pub struct Policy {
    kind: PolicyKind,
    grid: GridConfig,
    /// Chosen map per observation rank; `None` means no equalization.
    selections: Vec<Option<Selection>>,
}

impl Policy {
    pub fn none(grid: GridConfig) -> Self {
        Self {
            kind: PolicyKind::None,
            grid,
            selections: vec![None; grid.observation_count()],
        }
    }

    pub fn build(
        kind: PolicyKind,
        book: Option<&TransformCodebook>,
        src: &Language,
        tgt: &Language,
        q_source: QSource,
    ) -> Result<Self> {
        check_compatible(src, tgt)?;
        let grid = *src.grid();
        if kind == PolicyKind::None {
            return Ok(Self::none(grid));
        }
        let book = book
            .ok_or_else(|| Error::InvalidParameter(format!("policy {kind:?} needs a codebook")))?;
        let selections = grid
            .observations()
            .map(|obs| {
                let s = match kind {
                    PolicyKind::SemanticRisk => select_sm(book, src, &obs)?,
                    PolicyKind::EffectivenessRisk => select_em(book, src, tgt, &obs, q_source)?,
                    PolicyKind::Fixed(i, j) => Selection {
                        entry: (i, j),
                        map: book.maps[i][j],
                        score: f64::NAN,
                    },
                    PolicyKind::None => unreachable!(),
                };
                Ok(Some(s))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            kind,
            grid,
            selections,
        })
    }

    pub fn kind(&self) -> PolicyKind {
        self.kind
    }

    pub fn selection(&self, obs: &Observation) -> Result<Option<&Selection>> {
        self.grid.check(obs)?;
        if obs.is_terminal() {
            return Err(Error::TerminalObservation(*obs));
        }
        Ok(self.selections[self.grid.rank(obs)].as_ref())
    }

    pub(crate) fn selection_rank(&self, rank: usize) -> Option<&Selection> {
        self.selections[rank].as_ref()
    }

    /// The map applied to an observation's symbol (identity when none).
    pub fn map_for(&self, obs: &Observation) -> Result<AffineMap> {
        Ok(self.selection(obs)?.map(|s| s.map).unwrap_or_default())
    }
}

/// Source encoder composed with a selection policy, optionally clipped to
/// the unit box.
#[derive(Clone, Debug, PartialEq)]
pub struct EqualizedLanguage {
    grid: GridConfig,
    mu: ObservationDistribution,
    symbols: Vec<SemanticSymbol>,
}

impl EqualizedLanguage {
    pub fn symbols(&self) -> &[SemanticSymbol] {
        &self.symbols
    }
}

impl Encoder for EqualizedLanguage {
    fn grid(&self) -> &GridConfig {
        &self.grid
    }

    fn mu(&self) -> &ObservationDistribution {
        &self.mu
    }

    fn encode_rank(&self, rank: usize) -> SemanticSymbol {
        self.symbols[rank]
    }
}

pub fn equalize(src: &Language, policy: &Policy, clip: bool) -> Result<EqualizedLanguage> {
    if policy.grid != *src.grid() {
        return Err(Error::IncompatibleLanguages(
            "policy built for a different grid".into(),
        ));
    }
    let symbols = (0..src.grid().observation_count())
        .map(|rank| {
            let x = src.encode_rank(rank);
            let y = match policy.selection_rank(rank) {
                Some(s) => s.map.apply(&x),
                None => x,
            };
            if clip {
                y.clip()
            } else {
                y
            }
        })
        .collect();
    Ok(EqualizedLanguage {
        grid: *src.grid(),
        mu: Encoder::mu(src).clone(),
        symbols,
    })
}
