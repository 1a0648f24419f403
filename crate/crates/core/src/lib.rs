//! Semantic channel equalization between mismatched goal-oriented languages.
//!
//! The crate is organised bottom-up:
//!
//! * [`gridworld`] is the task: a treasure hunt on a grid with an exact
//!   action-value oracle.
//! * [`language`] holds encoder tables into the 2-D semantic space, the
//!   nearest-anchor decoder and the synthesis of task-optimal languages.
//! * [`channel`] adds white Gaussian noise referenced to unit peak amplitude.
//! * [`mismatch`] computes semantic / effectiveness mismatch and information
//!   transfer by exact enumeration.
//! * [`transport`] contains the optimal transport solvers, the affine map fit
//!   and codebook construction.
//! * [`equalizer`] selects codebook maps per observation and produces
//!   equalized encoders.
//! * [`harness`] runs episodes and the SNR / inverse-temperature sweeps.

// `!(x > 0.0)` style checks are deliberate: they reject NaN too.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod channel;
pub mod equalizer;
pub mod error;
pub mod gridworld;
pub mod harness;
pub mod language;
pub mod mismatch;
pub mod seeding;
pub mod transport;

pub use channel::ChannelConfig;
pub use equalizer::{EqualizedLanguage, Policy, PolicyKind, TransformCodebook};
pub use error::{Error, Result};
pub use gridworld::{Action, Cell, GridConfig, Observation, ObservationDistribution};
pub use harness::{EpisodeRecord, Strategy, SweepConfig};
pub use language::{Encoder, Language, QSource, SemanticSymbol};
pub use mismatch::{InfoTransferMatrix, MismatchReport};
pub use transport::{AffineMap, Coupling, FitParams, PointCloud};
