//! Languages: an encoder table from observations into the 2-D semantic space
//! plus a decoder given by one anchor per action.
//!
//! The decoder's value estimate is `q(a, x) = −‖x − anchor(a)‖²`, so its
//! argmax regions (the atoms of the partition) are the Voronoi cells of the
//! anchors. Stochastic decoding samples from a softmax at inverse temperature
//! `beta`.
//!
//! Task-optimal languages are synthesized in closed form: four anchors on a
//! circle with opposite actions antipodal, a seeded random orthogonal
//! transform, and a small deterministic jitter per observation so atoms have
//! interior spread.

use std::f64::consts::{FRAC_1_SQRT_2, PI};
use std::io::{Read, Write};
use std::path::Path;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gridworld::{argmax, Action, Cell, GridConfig, Observation, ObservationDistribution};
use crate::seeding::{self, tag};

/// Distance of every base anchor from the origin. Keeps all anchors inside
/// the unit box under any rotation.
pub const ANCHOR_RADIUS: f64 = FRAC_1_SQRT_2;

/// Default jitter radius as a fraction of [`ANCHOR_RADIUS`].
pub const DEFAULT_JITTER_FRACTION: f64 = 0.15;

pub const FORMAT_VERSION: u32 = 1;

pub fn default_jitter() -> f64 {
    DEFAULT_JITTER_FRACTION * ANCHOR_RADIUS
}

/// Half the distance between adjacent base anchors.
pub fn anchor_half_spacing() -> f64 {
    ANCHOR_RADIUS * std::f64::consts::SQRT_2 / 2.0
}

/// Largest jitter radius (exclusive) that keeps every jittered symbol
/// strictly inside its own atom and inside the unit box. The box is the
/// tighter of the two: an anchor on an axis has only `1 − m` of headroom.
pub fn max_jitter() -> f64 {
    (FRAC_1_SQRT_2 * anchor_half_spacing()).min(1.0 - ANCHOR_RADIUS)
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f64; 2]", into = "[f64; 2]")]
pub struct SemanticSymbol {
    pub x1: f64,
    pub x2: f64,
}

impl SemanticSymbol {
    pub const fn new(x1: f64, x2: f64) -> Self {
        Self { x1, x2 }
    }

    pub fn dist2(&self, other: &SemanticSymbol) -> f64 {
        let d1 = self.x1 - other.x1;
        let d2 = self.x2 - other.x2;
        d1 * d1 + d2 * d2
    }

    pub fn norm(&self) -> f64 {
        self.x1.hypot(self.x2)
    }

    pub fn is_finite(&self) -> bool {
        self.x1.is_finite() && self.x2.is_finite()
    }

    /// Peak-amplitude constraint `|x_k| ≤ 1`.
    pub fn in_box(&self) -> bool {
        self.x1.abs() <= 1.0 && self.x2.abs() <= 1.0
    }

    pub fn clip(&self) -> Self {
        Self::new(self.x1.clamp(-1.0, 1.0), self.x2.clamp(-1.0, 1.0))
    }

    pub fn to_array(self) -> [f64; 2] {
        [self.x1, self.x2]
    }
}

impl From<[f64; 2]> for SemanticSymbol {
    fn from(v: [f64; 2]) -> Self {
        Self::new(v[0], v[1])
    }
}

impl From<SemanticSymbol> for [f64; 2] {
    fn from(s: SemanticSymbol) -> Self {
        s.to_array()
    }
}

impl std::ops::Add for SemanticSymbol {
    type Output = SemanticSymbol;

    fn add(self, rhs: SemanticSymbol) -> SemanticSymbol {
        SemanticSymbol::new(self.x1 + rhs.x1, self.x2 + rhs.x2)
    }
}

/// Rotation by `angle` radians, preceded by the reflection `x2 ↦ −x2` when
/// `reflect` is set.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OrthogonalTransform {
    pub angle: f64,
    pub reflect: bool,
}

impl OrthogonalTransform {
    pub const IDENTITY: Self = Self {
        angle: 0.0,
        reflect: false,
    };

    pub fn rotation(angle: f64) -> Self {
        Self {
            angle,
            reflect: false,
        }
    }

    /// Angle uniform in `[0, 2π)`, reflection with probability 1/2.
    pub fn random(seed: u64) -> Self {
        let mut rng = seeding::rng(seed, &[tag::ROTATION]);
        let angle = rng.random::<f64>() * 2.0 * PI;
        let reflect = rng.random::<bool>();
        Self { angle, reflect }
    }

    pub fn apply(&self, x: SemanticSymbol) -> SemanticSymbol {
        let x2 = if self.reflect { -x.x2 } else { x.x2 };
        let (s, c) = self.angle.sin_cos();
        SemanticSymbol::new(c * x.x1 - s * x2, s * x.x1 + c * x2)
    }
}

/// Base anchor positions before the orthogonal transform, in action order
/// Right, Down, Left, Up. Opposite actions are antipodal.
pub fn base_anchors() -> [SemanticSymbol; 4] {
    let m = ANCHOR_RADIUS;
    [
        SemanticSymbol::new(m, 0.0),
        SemanticSymbol::new(0.0, -m),
        SemanticSymbol::new(-m, 0.0),
        SemanticSymbol::new(0.0, m),
    ]
}

/// Where the decoder's value estimates come from.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum QSource {
    /// The target language's own estimate at its encoded symbol.
    #[default]
    Decoder,
    /// The exact grid-world oracle.
    Oracle,
}

impl std::str::FromStr for QSource {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "decoder" => Ok(QSource::Decoder),
            "oracle" => Ok(QSource::Oracle),
            other => Err(Error::InvalidParameter(format!(
                "unknown q source {other:?} (expected decoder or oracle)"
            ))),
        }
    }
}

/// Anything that maps observations to semantic symbols over a grid.
pub trait Encoder: Sync {
    fn grid(&self) -> &GridConfig;

    fn mu(&self) -> &ObservationDistribution;

    /// Symbol for the observation of the given rank. Infallible hot path.
    fn encode_rank(&self, rank: usize) -> SemanticSymbol;

    fn encode(&self, obs: &Observation) -> Result<SemanticSymbol> {
        let grid = self.grid();
        grid.check(obs)?;
        if obs.is_terminal() {
            return Err(Error::TerminalObservation(*obs));
        }
        Ok(self.encode_rank(grid.rank(obs)))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Language {
    grid: GridConfig,
    seed: u64,
    anchors: [SemanticSymbol; 4],
    encoder: Vec<SemanticSymbol>,
    mu: ObservationDistribution,
}

impl Language {
    /// Synthesizes a task-optimal language with a seeded random orthogonal
    /// transform.
    pub fn synthesize(grid: GridConfig, seed: u64, jitter_radius: f64) -> Result<Self> {
        Self::synthesize_with(grid, seed, jitter_radius, OrthogonalTransform::random(seed))
    }

    /// Synthesis with an explicit transform. Jitter still derives from
    /// `seed`, so two languages sharing a seed differ exactly by the
    /// relative transform.
    pub fn synthesize_with(
        grid: GridConfig,
        seed: u64,
        jitter_radius: f64,
        transform: OrthogonalTransform,
    ) -> Result<Self> {
        grid.validate()?;
        if !(0.0..max_jitter()).contains(&jitter_radius) {
            return Err(Error::InvalidParameter(format!(
                "jitter radius {jitter_radius} outside [0, {})",
                max_jitter()
            )));
        }
        let base = base_anchors();
        let anchors = base.map(|a| transform.apply(a));
        let encoder = grid
            .observations()
            .enumerate()
            .map(|(rank, obs)| {
                let best = grid
                    .best_action(&obs)
                    .expect("non-terminal by construction");
                let jitter = jitter_vector(seed, rank, jitter_radius);
                transform.apply(base[best.index()] + jitter)
            })
            .collect();
        let lang = Self {
            grid,
            seed,
            anchors,
            encoder,
            mu: grid.uniform_mu(),
        };
        lang.validate_structure()?;
        lang.validate_task_consistency()?;
        Ok(lang)
    }

    /// Builds a language from explicit tables. The encoder is indexed by
    /// observation rank. Structural invariants and task consistency are
    /// enforced.
    pub fn from_parts(
        grid: GridConfig,
        seed: u64,
        anchors: [SemanticSymbol; 4],
        encoder: Vec<SemanticSymbol>,
    ) -> Result<Self> {
        let lang = Self::from_parts_structural(grid, seed, anchors, encoder)?;
        lang.validate_task_consistency()?;
        Ok(lang)
    }

    /// As [`Language::from_parts`] without the task-consistency check.
    /// Used for loaded and deliberately defective languages.
    pub fn from_parts_structural(
        grid: GridConfig,
        seed: u64,
        anchors: [SemanticSymbol; 4],
        encoder: Vec<SemanticSymbol>,
    ) -> Result<Self> {
        grid.validate()?;
        if encoder.len() != grid.observation_count() {
            return Err(Error::InvalidLanguage(format!(
                "encoder has {} entries, grid needs {}",
                encoder.len(),
                grid.observation_count()
            )));
        }
        let lang = Self {
            grid,
            seed,
            anchors,
            encoder,
            mu: grid.uniform_mu(),
        };
        lang.validate_structure()?;
        Ok(lang)
    }

    fn validate_structure(&self) -> Result<()> {
        for (i, a) in self.anchors.iter().enumerate() {
            if !a.is_finite() {
                return Err(Error::InvalidLanguage(format!("anchor {i} is not finite")));
            }
            for b in &self.anchors[..i] {
                if a == b {
                    return Err(Error::InvalidLanguage(format!(
                        "anchor {i} duplicates another"
                    )));
                }
            }
        }
        for (rank, x) in self.encoder.iter().enumerate() {
            if !x.is_finite() || !x.in_box() {
                return Err(Error::InvalidLanguage(format!(
                    "symbol for {} violates the peak-amplitude box: {:?}",
                    self.grid.observation(rank),
                    x
                )));
            }
        }
        Ok(())
    }

    /// Every encoded symbol must lie strictly inside an atom whose action is
    /// optimal for its observation.
    fn validate_task_consistency(&self) -> Result<()> {
        for (rank, x) in self.encoder.iter().enumerate() {
            let obs = self.grid.observation(rank);
            let atom = self.atom_of(x);
            let own = x.dist2(&self.anchors[atom]);
            let strictly_inside = self
                .anchors
                .iter()
                .enumerate()
                .all(|(k, a)| k == atom || x.dist2(a) > own);
            let q = self.grid.q_star_table(&obs)?;
            let optimal = q[atom] == q[argmax(&q)];
            if !strictly_inside || !optimal {
                return Err(Error::InvalidLanguage(format!(
                    "symbol for {obs} decodes to a non-optimal or boundary atom {atom}"
                )));
            }
        }
        Ok(())
    }

    /// Copy of this language in which a fraction of encoder entries are moved
    /// into a different, randomly chosen atom (anchor plus the entry's
    /// within-atom offset). Deterministic in `seed`.
    pub fn perturbed(&self, fraction: f64, seed: u64) -> Result<Self> {
        if !(0.0..=1.0).contains(&fraction) {
            return Err(Error::InvalidParameter(format!(
                "perturbation fraction {fraction} outside [0, 1]"
            )));
        }
        let mut rng = seeding::rng(seed, &[tag::PERTURB, self.seed]);
        let n = self.encoder.len();
        let flips = (fraction * n as f64).round() as usize;
        let mut ranks: Vec<usize> = (0..n).collect();
        // partial Fisher-Yates: the first `flips` entries are the chosen ones
        for k in 0..flips {
            let j = rng.random_range(k..n);
            ranks.swap(k, j);
        }
        let mut encoder = self.encoder.clone();
        for &rank in &ranks[..flips] {
            let x = encoder[rank];
            let atom = self.atom_of(&x);
            let shift = rng.random_range(1..Action::COUNT);
            let new_atom = (atom + shift) % Action::COUNT;
            let from = self.anchors[atom];
            let to = self.anchors[new_atom];
            encoder[rank] = SemanticSymbol::new(x.x1 - from.x1 + to.x1, x.x2 - from.x2 + to.x2);
        }
        Self::from_parts_structural(self.grid, self.seed, self.anchors, encoder)
    }

    pub fn grid(&self) -> &GridConfig {
        &self.grid
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn anchors(&self) -> &[SemanticSymbol; 4] {
        &self.anchors
    }

    pub fn anchor(&self, action: Action) -> SemanticSymbol {
        self.anchors[action.index()]
    }

    pub fn encoder_table(&self) -> &[SemanticSymbol] {
        &self.encoder
    }

    /// Nearest anchor, lowest action index on ties.
    pub fn atom_of(&self, x: &SemanticSymbol) -> usize {
        let mut best = 0;
        let mut best_d = x.dist2(&self.anchors[0]);
        for (k, a) in self.anchors.iter().enumerate().skip(1) {
            let d = x.dist2(a);
            if d < best_d {
                best = k;
                best_d = d;
            }
        }
        best
    }

    /// Decoder value estimate `−‖x − anchor(a)‖²`.
    pub fn q_of(&self, action: Action, x: &SemanticSymbol) -> f64 {
        -x.dist2(&self.anchors[action.index()])
    }

    /// Softmax action distribution at inverse temperature `beta`.
    pub fn decode_distribution(&self, x: &SemanticSymbol, beta: f64) -> [f64; 4] {
        if beta == f64::INFINITY {
            let mut p = [0.0; 4];
            p[self.atom_of(x)] = 1.0;
            return p;
        }
        if beta == 0.0 {
            return [0.25; 4];
        }
        let logits = Action::ALL.map(|a| beta * self.q_of(a, x));
        let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let w = logits.map(|l| (l - max).exp());
        let total: f64 = w.iter().sum();
        w.map(|v| v / total)
    }

    /// Samples an action. `beta = ∞` is the deterministic argmax and draws
    /// nothing from `rng`; any finite `beta` draws exactly one uniform.
    pub fn decode<R: rand::Rng + ?Sized>(
        &self,
        x: &SemanticSymbol,
        beta: f64,
        rng: &mut R,
    ) -> Action {
        if beta == f64::INFINITY {
            return Action::from_index(self.atom_of(x));
        }
        let p = self.decode_distribution(x, beta);
        let u: f64 = rng.random();
        let mut acc = 0.0;
        for (k, pk) in p.iter().enumerate() {
            acc += pk;
            if u < acc {
                return Action::from_index(k);
            }
        }
        // rounding left u above the cumulative sum; fall back to the last
        // action with nonzero mass
        Action::from_index(p.iter().rposition(|&v| v > 0.0).unwrap_or(3))
    }

    /// The language's own action-value estimates for an observation, or the
    /// exact oracle.
    pub fn decoder_q_table(&self, obs: &Observation, source: QSource) -> Result<[f64; 4]> {
        match source {
            QSource::Oracle => self.grid.q_star_table(obs),
            QSource::Decoder => {
                let x = self.encode(obs)?;
                Ok(Action::ALL.map(|a| self.q_of(a, &x)))
            }
        }
    }

    pub fn to_document(&self) -> LanguageDocument {
        LanguageDocument {
            format_version: FORMAT_VERSION,
            grid: self.grid,
            seed: self.seed,
            anchors: self.anchors.map(|a| a.to_array()).to_vec(),
            encoder: self
                .encoder
                .iter()
                .enumerate()
                .map(|(rank, x)| {
                    let o = self.grid.observation(rank);
                    EncoderEntry {
                        agent: [o.agent.col, o.agent.row],
                        treasure: [o.treasure.col, o.treasure.row],
                        symbol: x.to_array(),
                    }
                })
                .collect(),
        }
    }

    pub fn from_document(doc: LanguageDocument) -> Result<Self> {
        if doc.format_version != FORMAT_VERSION {
            return Err(Error::FormatVersion(doc.format_version));
        }
        doc.grid.validate()?;
        let anchors: [SemanticSymbol; 4] = match doc.anchors.as_slice() {
            [a, b, c, d] => [(*a).into(), (*b).into(), (*c).into(), (*d).into()],
            other => {
                return Err(Error::InvalidLanguage(format!(
                    "expected 4 anchors, found {}",
                    other.len()
                )))
            }
        };
        let grid = doc.grid;
        let mut table = vec![None; grid.observation_count()];
        for e in &doc.encoder {
            let obs = Observation::new(
                Cell::new(e.agent[0], e.agent[1]),
                Cell::new(e.treasure[0], e.treasure[1]),
            );
            grid.check(&obs)?;
            if obs.is_terminal() {
                return Err(Error::TerminalObservation(obs));
            }
            let slot = &mut table[grid.rank(&obs)];
            if slot.is_some() {
                return Err(Error::InvalidLanguage(format!(
                    "duplicate encoder entry for {obs}"
                )));
            }
            *slot = Some(SemanticSymbol::from(e.symbol));
        }
        let encoder = table
            .into_iter()
            .enumerate()
            .map(|(rank, s)| {
                s.ok_or_else(|| {
                    Error::InvalidLanguage(format!(
                        "missing encoder entry for {}",
                        grid.observation(rank)
                    ))
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Self::from_parts_structural(grid, doc.seed, anchors, encoder)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&self.to_document())?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Self::from_document(serde_json::from_str(s)?)
    }

    pub fn write<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(self.to_json()?.as_bytes())?;
        w.write_all(b"\n")?;
        Ok(())
    }

    pub fn read<R: Read>(r: R) -> Result<Self> {
        Self::from_document(serde_json::from_reader(r)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        self.write(std::io::BufWriter::new(std::fs::File::create(path)?))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::read(std::io::BufReader::new(std::fs::File::open(path)?))
    }
}

impl Encoder for Language {
    fn grid(&self) -> &GridConfig {
        &self.grid
    }

    fn mu(&self) -> &ObservationDistribution {
        &self.mu
    }

    fn encode_rank(&self, rank: usize) -> SemanticSymbol {
        self.encoder[rank]
    }
}

/// Uniform point in the disk of the given radius, keyed by `(seed, rank)`.
fn jitter_vector(seed: u64, rank: usize, radius: f64) -> SemanticSymbol {
    if radius == 0.0 {
        return SemanticSymbol::default();
    }
    let mut rng = seeding::rng(seed, &[tag::JITTER, rank as u64]);
    let r = radius * rng.random::<f64>().sqrt();
    let (s, c) = (rng.random::<f64>() * 2.0 * PI).sin_cos();
    SemanticSymbol::new(r * c, r * s)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LanguageDocument {
    pub format_version: u32,
    pub grid: GridConfig,
    pub seed: u64,
    pub anchors: Vec<[f64; 2]>,
    pub encoder: Vec<EncoderEntry>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EncoderEntry {
    pub agent: [i32; 2],
    pub treasure: [i32; 2],
    pub symbol: [f64; 2],
}
