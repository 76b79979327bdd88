//! Dead-time modeling, simulation and compensation for asynchronous
//! time-correlated single-photon-counting (TCSPC) lidar.
//!
//! All times are in nanoseconds, rates in photons/ns, and per-period
//! counts are dimensionless.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod correction;
pub mod error;
pub mod estimate;
pub mod experiment;
pub mod io;
pub mod markov;
pub mod scene;
pub mod simulate;

pub use error::{Error, Result};
pub use scene::{arrival_pdf, cumulative_intensity, intensity_at, BinGrid, SceneModel};
pub use simulate::{
    apply_dead_time, bin_detections, interdetection_periods, sample_arrivals, thin,
    BinnedHistogram, EventSequence,
};
