//! Episode simulation and the experiment sweeps.

mod config;
mod episode;
mod extended;
mod sweep;

pub use config::SweepConfig;
pub use episode::{run_episode, sample_start, EpisodeRecord, Setup, StepTrace, Strategy, Wiring};
pub use extended::ExtReal;
pub use sweep::{
    episode_seed, episode_start, sweep, sweep_beta, sweep_snr, Axis, CellSummary, SweepTable,
    CSV_HEADER,
};
