use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::channel::ChannelConfig;
use crate::equalizer::{equalize, Policy, PolicyKind, TransformCodebook};
use crate::error::{Error, Result};
use crate::gridworld::{Action, GridConfig, Observation};
use crate::language::{Language, QSource, SemanticSymbol};
use crate::mismatch::check_compatible;
use crate::seeding::{self, tag};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    NoEqualization,
    SourceGrounded,
    TargetGrounded,
    SmEqualized,
    EmEqualized,
}

impl Strategy {
    pub const ALL: [Strategy; 5] = [
        Strategy::NoEqualization,
        Strategy::SourceGrounded,
        Strategy::TargetGrounded,
        Strategy::SmEqualized,
        Strategy::EmEqualized,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Strategy::NoEqualization => "no_equalization",
            Strategy::SourceGrounded => "source_grounded",
            Strategy::TargetGrounded => "target_grounded",
            Strategy::SmEqualized => "sm_equalized",
            Strategy::EmEqualized => "em_equalized",
        }
    }

    pub fn needs_codebook(self) -> bool {
        matches!(self, Strategy::SmEqualized | Strategy::EmEqualized)
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key = s.trim().replace('-', "_");
        Strategy::ALL
            .into_iter()
            .find(|st| st.name() == key)
            .or(match key.as_str() {
                "none" | "noeq" => Some(Strategy::NoEqualization),
                "source" => Some(Strategy::SourceGrounded),
                "target" => Some(Strategy::TargetGrounded),
                "sm" => Some(Strategy::SmEqualized),
                "em" => Some(Strategy::EmEqualized),
                _ => None,
            })
            .ok_or_else(|| Error::InvalidParameter(format!("unknown strategy {s:?}")))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRecord {
    pub strategy: Strategy,
    pub snr_db: f64,
    pub beta: f64,
    pub length: u32,
    pub success: bool,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StepTrace {
    pub observation: Observation,
    pub sent: SemanticSymbol,
    pub received: SemanticSymbol,
    pub action: Action,
}

/// What one strategy transmits for each observation and who decodes it.
#[derive(Clone, Copy, Debug)]
pub struct Wiring<'a> {
    pub symbols: &'a [SemanticSymbol],
    pub decoder: &'a Language,
}

/// Languages, codebook and the precomputed transmit tables of every
/// strategy. Read-only once built.
#[derive(Clone, Debug)]
pub struct Setup {
    source: Language,
    target: Language,
    codebook: Option<TransformCodebook>,
    sm_symbols: Option<Vec<SemanticSymbol>>,
    em_symbols: Option<Vec<SemanticSymbol>>,
}

impl Setup {
    /// `codebook` may be omitted when no equalized strategy will be run.
    pub fn new(
        source: Language,
        target: Language,
        codebook: Option<TransformCodebook>,
        q_source: QSource,
        clip: bool,
    ) -> Result<Self> {
        check_compatible(&source, &target)?;
        let table = |kind| -> Result<Option<Vec<SemanticSymbol>>> {
            match &codebook {
                None => Ok(None),
                Some(book) => {
                    let policy = Policy::build(kind, Some(book), &source, &target, q_source)?;
                    Ok(Some(equalize(&source, &policy, clip)?.symbols().to_vec()))
                }
            }
        };
        let sm_symbols = table(PolicyKind::SemanticRisk)?;
        let em_symbols = table(PolicyKind::EffectivenessRisk)?;
        Ok(Self {
            source,
            target,
            codebook,
            sm_symbols,
            em_symbols,
        })
    }

    pub fn source(&self) -> &Language {
        &self.source
    }

    pub fn target(&self) -> &Language {
        &self.target
    }

    pub fn codebook(&self) -> Option<&TransformCodebook> {
        self.codebook.as_ref()
    }

    pub fn grid(&self) -> &GridConfig {
        self.source.grid()
    }

    pub fn wiring(&self, strategy: Strategy) -> Result<Wiring<'_>> {
        let missing = || Error::InvalidParameter(format!("strategy {strategy} needs a codebook"));
        Ok(match strategy {
            Strategy::NoEqualization => Wiring {
                symbols: self.source.encoder_table(),
                decoder: &self.target,
            },
            Strategy::SourceGrounded => Wiring {
                symbols: self.source.encoder_table(),
                decoder: &self.source,
            },
            Strategy::TargetGrounded => Wiring {
                symbols: self.target.encoder_table(),
                decoder: &self.target,
            },
            Strategy::SmEqualized => Wiring {
                symbols: self.sm_symbols.as_deref().ok_or_else(missing)?,
                decoder: &self.target,
            },
            Strategy::EmEqualized => Wiring {
                symbols: self.em_symbols.as_deref().ok_or_else(missing)?,
                decoder: &self.target,
            },
        })
    }

    /// One episode from `start`, with channel noise and decoder sampling
    /// drawn from the stream keyed by `seed`.
    pub fn run_episode(
        &self,
        strategy: Strategy,
        start: Observation,
        channel: &ChannelConfig,
        beta: f64,
        seed: u64,
    ) -> Result<EpisodeRecord> {
        let wiring = self.wiring(strategy)?;
        let mut rng = seeding::rng(seed, &[tag::EPISODE]);
        let (length, success) =
            run_episode(self.grid(), wiring, start, channel, beta, &mut rng, |_| {})?;
        Ok(EpisodeRecord {
            strategy,
            snr_db: channel.snr_db(),
            beta,
            length,
            success,
            seed,
        })
    }

    /// As [`Setup::run_episode`], also returning every step.
    pub fn trace_episode(
        &self,
        strategy: Strategy,
        start: Observation,
        channel: &ChannelConfig,
        beta: f64,
        seed: u64,
    ) -> Result<(EpisodeRecord, Vec<StepTrace>)> {
        let (length, success, steps) =
            self.trace_wired(self.wiring(strategy)?, start, channel, beta, seed)?;
        let record = EpisodeRecord {
            strategy,
            snr_db: channel.snr_db(),
            beta,
            length,
            success,
            seed,
        };
        Ok((record, steps))
    }

    /// Traced episode over arbitrary wiring, with the same seeding as the
    /// named strategies. Returns `(length, success, steps)`.
    pub fn trace_wired(
        &self,
        wiring: Wiring<'_>,
        start: Observation,
        channel: &ChannelConfig,
        beta: f64,
        seed: u64,
    ) -> Result<(u32, bool, Vec<StepTrace>)> {
        let mut rng = seeding::rng(seed, &[tag::EPISODE]);
        let mut steps = Vec::new();
        let (length, success) =
            run_episode(self.grid(), wiring, start, channel, beta, &mut rng, |s| {
                steps.push(s)
            })?;
        Ok((length, success, steps))
    }
}

/// Samples a uniform non-terminal start state.
pub fn sample_start(grid: &GridConfig, rng: &mut impl rand::Rng) -> Observation {
    grid.observation(rng.random_range(0..grid.observation_count()))
}

/// Observe, transmit, decode, act; until the treasure is reached or the
/// step cap runs out. Returns `(length, success)`.
pub fn run_episode<R: rand::Rng + ?Sized>(
    grid: &GridConfig,
    wiring: Wiring<'_>,
    start: Observation,
    channel: &ChannelConfig,
    beta: f64,
    rng: &mut R,
    mut on_step: impl FnMut(StepTrace),
) -> Result<(u32, bool)> {
    grid.check(&start)?;
    if start.is_terminal() {
        return Err(Error::TerminalObservation(start));
    }
    if beta.is_nan() || beta < 0.0 {
        return Err(Error::InvalidParameter(format!(
            "beta must be >= 0, got {beta}"
        )));
    }
    if wiring.symbols.len() != grid.observation_count() || wiring.decoder.grid() != grid {
        return Err(Error::IncompatibleLanguages(
            "wiring does not match the grid".into(),
        ));
    }
    let mut obs = start;
    for step in 1..=grid.max_steps {
        let sent = wiring.symbols[grid.rank(&obs)];
        let received = channel.transmit(sent, rng);
        let action = wiring.decoder.decode(&received, beta, rng);
        on_step(StepTrace {
            observation: obs,
            sent,
            received,
            action,
        });
        obs = grid.step_unchecked(&obs, action);
        if obs.is_terminal() {
            return Ok((step, true));
        }
    }
    Ok((grid.max_steps, false))
}
