use std::io::Write;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::SweepConfig;
use super::episode::{sample_start, EpisodeRecord, Setup, Strategy};
use super::extended::ExtReal;
use crate::channel::ChannelConfig;
use crate::error::{Error, Result};
use crate::gridworld::{GridConfig, Observation};
use crate::seeding::{self, tag};

pub const CSV_HEADER: &str =
    "strategy,snr_db,beta,episodes,mean_length,std_length,stderr_length,success_rate";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Axis {
    Snr,
    Beta,
}

/// Aggregate of one (strategy, sweep point) cell.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellSummary {
    pub strategy: Strategy,
    pub snr_db: ExtReal,
    pub beta: ExtReal,
    pub episodes: usize,
    pub mean_length: f64,
    /// Sample standard deviation (n − 1 denominator).
    pub std_length: f64,
    pub stderr_length: f64,
    pub success_rate: f64,
}

impl CellSummary {
    pub fn from_records(
        strategy: Strategy,
        snr_db: ExtReal,
        beta: ExtReal,
        records: &[EpisodeRecord],
    ) -> Self {
        let n = records.len();
        let nf = n as f64;
        let mean = records.iter().map(|r| r.length as f64).sum::<f64>() / nf;
        let var = if n > 1 {
            records
                .iter()
                .map(|r| (r.length as f64 - mean).powi(2))
                .sum::<f64>()
                / (nf - 1.0)
        } else {
            0.0
        };
        let std = var.sqrt();
        let successes = records.iter().filter(|r| r.success).count();
        Self {
            strategy,
            snr_db,
            beta,
            episodes: n,
            mean_length: mean,
            std_length: std,
            stderr_length: std / nf.sqrt(),
            success_rate: successes as f64 / nf,
        }
    }

    fn csv_fields(&self) -> [String; 8] {
        [
            self.strategy.name().to_string(),
            self.snr_db.to_string(),
            self.beta.to_string(),
            self.episodes.to_string(),
            self.mean_length.to_string(),
            self.std_length.to_string(),
            self.stderr_length.to_string(),
            self.success_rate.to_string(),
        ]
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepTable {
    pub axis: Axis,
    /// Strategy-major, sweep points in config order.
    pub rows: Vec<CellSummary>,
}

impl SweepTable {
    pub fn cell(&self, strategy: Strategy, point: f64) -> Option<&CellSummary> {
        self.rows.iter().find(|c| {
            c.strategy == strategy
                && match self.axis {
                    Axis::Snr => c.snr_db.0 == point,
                    Axis::Beta => c.beta.0 == point,
                }
        })
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::WriterBuilder::new().has_headers(false).from_writer(w);
        out.write_record(CSV_HEADER.split(','))?;
        for row in &self.rows {
            out.write_record(row.csv_fields())?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> Result<String> {
        let mut buf = Vec::new();
        self.write_csv(&mut buf)?;
        String::from_utf8(buf).map_err(|e| Error::InvalidParameter(e.to_string()))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        self.write_csv(std::io::BufWriter::new(std::fs::File::create(path)?))
    }
}

pub fn sweep_snr(cfg: &SweepConfig) -> Result<SweepTable> {
    sweep(cfg, Axis::Snr)
}

pub fn sweep_beta(cfg: &SweepConfig) -> Result<SweepTable> {
    sweep(cfg, Axis::Beta)
}

/// Runs every strategy at every sweep point. Languages and the codebook are
/// built up front, so their failures surface before any episode runs.
///
/// Episodes share random numbers across strategies: the start state of
/// episode `e` and its noise stream depend only on the evaluation seed, the
/// point index and `e`.
pub fn sweep(cfg: &SweepConfig, axis: Axis) -> Result<SweepTable> {
    let setup = cfg.setup()?;
    let points: Vec<(ExtReal, ExtReal)> = match axis {
        Axis::Snr => cfg.snr_grid.iter().map(|&s| (s, cfg.beta)).collect(),
        Axis::Beta => cfg.beta_grid.iter().map(|&b| (cfg.snr_db, b)).collect(),
    };
    if points.is_empty() {
        return Err(Error::InvalidParameter("empty sweep grid".into()));
    }
    let channels = points
        .iter()
        .map(|(snr, _)| ChannelConfig::new(snr.0))
        .collect::<Result<Vec<_>>>()?;
    let run = || -> Result<Vec<CellSummary>> {
        let mut rows = Vec::with_capacity(cfg.strategies.len() * points.len());
        for &strategy in &cfg.strategies {
            for (p, (&(snr, beta), channel)) in points.iter().zip(&channels).enumerate() {
                let records = run_cell(cfg, &setup, strategy, p as u64, channel, beta.0)?;
                rows.push(CellSummary::from_records(strategy, snr, beta, &records));
            }
        }
        Ok(rows)
    };
    let rows = match cfg.workers {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Error::InvalidParameter(e.to_string()))?
            .install(run)?,
        None => run()?,
    };
    Ok(SweepTable { axis, rows })
}

/// Start state of episode `e`; shared by every strategy and sweep point.
pub fn episode_start(grid: &GridConfig, eval_seed: u64, episode: u64) -> Observation {
    sample_start(grid, &mut seeding::rng(eval_seed, &[tag::START, episode]))
}

/// Noise and decoding seed of episode `e` at sweep point `point`; shared by
/// every strategy.
pub fn episode_seed(eval_seed: u64, point: u64, episode: u64) -> u64 {
    seeding::derive(eval_seed, &[point, episode])
}

fn run_cell(
    cfg: &SweepConfig,
    setup: &Setup,
    strategy: Strategy,
    point: u64,
    channel: &ChannelConfig,
    beta: f64,
) -> Result<Vec<EpisodeRecord>> {
    (0..cfg.episodes_per_point as u64)
        .into_par_iter()
        .map(|e| {
            let start = episode_start(setup.grid(), cfg.eval_seed, e);
            setup.run_episode(
                strategy,
                start,
                channel,
                beta,
                episode_seed(cfg.eval_seed, point, e),
            )
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> SweepConfig {
        SweepConfig {
            episodes_per_point: 40,
            snr_grid: vec![ExtReal(0.0), ExtReal::INFINITY],
            beta_grid: vec![ExtReal(1.0), ExtReal::INFINITY],
            strategies: vec![Strategy::NoEqualization, Strategy::TargetGrounded],
            ..SweepConfig::default()
        }
    }

    #[test]
    fn summary_statistics() {
        let rec = |length| EpisodeRecord {
            strategy: Strategy::SourceGrounded,
            snr_db: 0.0,
            beta: 1.0,
            length,
            success: length < 150,
            seed: 0,
        };
        let rs: Vec<_> = [2, 4, 4, 4, 5, 5, 7, 150].into_iter().map(rec).collect();
        let c =
            CellSummary::from_records(Strategy::SourceGrounded, ExtReal(0.0), ExtReal(1.0), &rs);
        assert_eq!(c.mean_length, 22.625);
        // squared deviations sum to 18555.875
        assert!((c.std_length - (18_555.875f64 / 7.0).sqrt()).abs() < 1e-9);
        assert!((c.stderr_length - c.std_length / 8f64.sqrt()).abs() < 1e-15);
        assert_eq!(c.success_rate, 0.875);
    }

    #[test]
    fn csv_layout() {
        let t = sweep_snr(&small()).unwrap();
        let csv = t.to_csv_string().unwrap();
        let lines: Vec<_> = csv.lines().collect();
        assert_eq!(lines[0], CSV_HEADER);
        assert_eq!(lines.len(), 1 + 4);
        assert!(lines[1].starts_with("no_equalization,0,inf,40,"));
        assert!(lines[4].starts_with("target_grounded,inf,inf,40,"));
    }

    #[test]
    fn noiseless_grounded_is_optimal_on_average() {
        let t = sweep_snr(&small()).unwrap();
        let c = t.cell(Strategy::TargetGrounded, f64::INFINITY).unwrap();
        assert_eq!(c.success_rate, 1.0);
    }

    #[test]
    fn worker_count_does_not_change_results() {
        let mut a = small();
        a.workers = Some(1);
        let mut b = small();
        b.workers = Some(3);
        assert_eq!(sweep_beta(&a).unwrap(), sweep_beta(&b).unwrap());
    }
}
