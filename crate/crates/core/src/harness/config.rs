use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::episode::{Setup, Strategy};
use super::extended::ExtReal;
use crate::error::{Error, Result};
use crate::gridworld::GridConfig;
use crate::language::{default_jitter, Language, OrthogonalTransform, QSource};
use crate::transport::{build_codebook, FitParams};

/// Everything a sweep needs. Field names double as the JSON config format;
/// absent fields take their defaults.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    pub grid: GridConfig,
    pub source_seed: u64,
    pub target_seed: u64,
    pub eval_seed: u64,
    pub jitter: f64,
    /// When set, the target is the source language turned by this many
    /// degrees (same jitter), instead of an independent synthesis.
    pub target_rotation_deg: Option<f64>,
    pub snr_grid: Vec<ExtReal>,
    /// Decoder inverse temperature for SNR sweeps.
    pub beta: ExtReal,
    pub beta_grid: Vec<ExtReal>,
    /// Channel SNR for inverse-temperature sweeps.
    pub snr_db: ExtReal,
    pub episodes_per_point: usize,
    pub strategies: Vec<Strategy>,
    pub q_source: QSource,
    pub clip: bool,
    /// Fraction of source encoder entries moved into a wrong atom.
    pub perturb_encoder: f64,
    pub fit: FitParams,
    /// Worker threads; `None` uses the global pool. Results do not depend
    /// on it.
    pub workers: Option<usize>,
    pub output_path: Option<PathBuf>,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            grid: GridConfig::default(),
            source_seed: 1,
            target_seed: 2,
            eval_seed: 0,
            jitter: default_jitter(),
            target_rotation_deg: None,
            snr_grid: [0.0, 2.0, 4.0, 6.0, 8.0, 10.0, f64::INFINITY]
                .into_iter()
                .map(ExtReal)
                .collect(),
            beta: ExtReal::INFINITY,
            beta_grid: [0.0, 1.0, 2.0, 5.0, f64::INFINITY]
                .into_iter()
                .map(ExtReal)
                .collect(),
            snr_db: ExtReal::INFINITY,
            episodes_per_point: 2000,
            strategies: Strategy::ALL.to_vec(),
            q_source: QSource::Decoder,
            clip: true,
            perturb_encoder: 0.0,
            fit: FitParams::default(),
            workers: None,
            output_path: None,
        }
    }
}

impl SweepConfig {
    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        self.grid.validate()?;
        if self.episodes_per_point == 0 {
            return Err(Error::InvalidParameter(
                "episodes_per_point must be at least 1".into(),
            ));
        }
        if self.strategies.is_empty() {
            return Err(Error::InvalidParameter("no strategies selected".into()));
        }
        if self.workers == Some(0) {
            return Err(Error::InvalidParameter("workers must be at least 1".into()));
        }
        for b in self.beta_grid.iter().chain([&self.beta]) {
            if b.0.is_nan() || b.0 < 0.0 {
                return Err(Error::InvalidParameter(format!(
                    "beta must be >= 0, got {b}"
                )));
            }
        }
        Ok(())
    }

    /// Source and target languages, with the optional encoder defect applied
    /// to the source.
    pub fn languages(&self) -> Result<(Language, Language)> {
        let source_transform = OrthogonalTransform::random(self.source_seed);
        let mut source =
            Language::synthesize_with(self.grid, self.source_seed, self.jitter, source_transform)?;
        let target = match self.target_rotation_deg {
            Some(deg) => Language::synthesize_with(
                self.grid,
                self.source_seed,
                self.jitter,
                OrthogonalTransform {
                    angle: source_transform.angle + deg.to_radians(),
                    reflect: source_transform.reflect,
                },
            )?,
            None => Language::synthesize(self.grid, self.target_seed, self.jitter)?,
        };
        if self.perturb_encoder > 0.0 {
            source = source.perturbed(self.perturb_encoder, self.source_seed)?;
        }
        Ok((source, target))
    }

    /// Languages plus a codebook when any selected strategy needs one.
    pub fn setup(&self) -> Result<Setup> {
        self.validate()?;
        let (source, target) = self.languages()?;
        let codebook = if self.strategies.iter().any(|s| s.needs_codebook()) {
            Some(build_codebook(&source, &target, &self.fit)?)
        } else {
            None
        };
        Setup::new(source, target, codebook, self.q_source, self.clip)
    }
}
