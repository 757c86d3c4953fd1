//! Simulator and numerical security analyzer for a single-photon, time-bin
//! oblivious transfer protocol built on a Mach-Zehnder interferometer.
//!
//! The crate has four layers:
//!
//! * [`timebin`] - single-photon time-bin states, delays, phase shifts, and
//!   the recombining-splitter measurement.
//! * [`discrimination`] - the density matrices a dishonest receiver holds,
//!   their trace distance, and the resulting optimal-cheating bounds.
//! * [`protocol`] - the two-party protocol as sender/receiver state machines
//!   over an in-process channel, with adversary strategies, channel noise,
//!   and full event transcripts.
//! * [`montecarlo`] - batch experiments estimating branch probabilities,
//!   reliabilities and cheating probabilities with confidence bands.
//!
//! Core math is generic over the scalar type ([`scalar::Real`], implemented
//! for `f32` and `f64`); the aliases below pin the double-precision variants
//! used by the CLI and most callers.

pub mod bit;
pub mod cli;
pub mod discrimination;
pub mod error;
pub mod geometry;
pub mod montecarlo;
pub mod protocol;
pub mod scalar;
pub mod timebin;
pub mod transcript;

pub use bit::Bit;
pub use error::{Error, Result};
pub use geometry::{ModeIndex, Path, ProtocolGeometry};
pub use scalar::Real;

/// Double-precision time-bin state.
pub type TimeBinState64 = timebin::TimeBinState<f64>;
/// Double-precision density matrix.
pub type DensityMatrix64 = discrimination::DensityMatrix<f64>;
/// Double-precision security report.
pub type HelstromReport64 = discrimination::HelstromReport<f64>;
/// Double-precision trace-distance curve.
pub type TraceDistanceCurve64 = discrimination::TraceDistanceCurve<f64>;

/// Default RNG seed used by the CLI when neither `--seed` nor `QOT_SEED`
/// is given. Fixed so repeated invocations are byte-identical.
pub const DEFAULT_SEED: u64 = 0x0B5E_55ED;

/// Default announcement delay in abstract ticks: the sender announces her
/// delay setting this long after the transmission window closes. Stands in
/// for the assumed upper bound on quantum-memory storage time.
pub const DEFAULT_ANNOUNCE_DELAY: u64 = 100;
