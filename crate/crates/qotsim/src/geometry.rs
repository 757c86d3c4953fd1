//! Discretization of the transmission window.
//!
//! The interval between the agreed start and end of the transmission is
//! treated as `n` equally divided time slots, indexed `1..=n`. The fixed
//! delay is an integer number of slots `delta`.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// Slot count and delay of one protocol instance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "RawGeometry")]
pub struct ProtocolGeometry {
    n: usize,
    delta: usize,
}

/// Unvalidated mirror for deserialization.
#[derive(Deserialize)]
struct RawGeometry {
    n: usize,
    delta: usize,
}

impl TryFrom<RawGeometry> for ProtocolGeometry {
    type Error = Error;
    fn try_from(raw: RawGeometry) -> Result<Self> {
        ProtocolGeometry::new(raw.n, raw.delta)
    }
}

impl ProtocolGeometry {
    /// Validates `n >= 1` and `1 <= delta <= n`.
    ///
    /// `delta == n` is a degenerate geometry: the source window `[1, n-delta]`
    /// is empty, so no protocol run is possible, but density matrices and
    /// trace distances remain well defined and are used in small-case tests.
    pub fn new(n: usize, delta: usize) -> Result<Self> {
        if n < 1 {
            return Err(Error::InvalidGeometry {
                n,
                delta,
                reason: "n must be >= 1",
            });
        }
        if delta < 1 {
            return Err(Error::InvalidGeometry {
                n,
                delta,
                reason: "delta must be >= 1",
            });
        }
        if delta > n {
            return Err(Error::InvalidGeometry {
                n,
                delta,
                reason: "delta must be <= n",
            });
        }
        Ok(Self { n, delta })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn delta(&self) -> usize {
        self.delta
    }

    /// Dimension of the single-photon mode space: two paths times `n` slots.
    pub fn dim(&self) -> usize {
        2 * self.n
    }

    /// Largest source slot that keeps `t_s + delta` inside the window.
    /// Zero for the degenerate `delta == n` geometry.
    pub fn source_slot_max(&self) -> usize {
        self.n - self.delta
    }

    /// True when the source window `[1, n-delta]` is nonempty, i.e. a
    /// protocol run can actually draw a send time.
    pub fn supports_protocol_run(&self) -> bool {
        self.source_slot_max() >= 1
    }
}

/// Interferometer arm. Alice's optics act on path A, Bob's on path B.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Path {
    A,
    B,
}

/// One basis mode: a path and a time slot in `[1, n]`.
///
/// Basis ordering is fixed so matrices are bit-comparable across modules:
/// path A slot s maps to index s, path B slot s maps to index s + n
/// (1-based; storage is 0-based).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ModeIndex {
    pub path: Path,
    pub slot: usize,
}

impl ModeIndex {
    pub fn new(path: Path, slot: usize) -> Self {
        Self { path, slot }
    }

    /// 0-based position in an amplitude vector whose per-path window holds
    /// `window` slots.
    pub fn offset(&self, window: usize) -> usize {
        debug_assert!(self.slot >= 1 && self.slot <= window);
        match self.path {
            Path::A => self.slot - 1,
            Path::B => window + self.slot - 1,
        }
    }

    /// Inverse of [`ModeIndex::offset`].
    pub fn from_offset(offset: usize, window: usize) -> Self {
        debug_assert!(offset < 2 * window);
        if offset < window {
            Self {
                path: Path::A,
                slot: offset + 1,
            }
        } else {
            Self {
                path: Path::B,
                slot: offset - window + 1,
            }
        }
    }
}
