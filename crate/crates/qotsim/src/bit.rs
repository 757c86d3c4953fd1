//! Classical bit with the arithmetic the protocol needs.

use crate::error::{Error, Result};
use crate::scalar::Real;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::ops::BitXor;

/// A classical bit. The sender's secret, detector indices and phase-shift
/// settings all reduce to this.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub struct Bit(bool);

impl Bit {
    pub const ZERO: Bit = Bit(false);
    pub const ONE: Bit = Bit(true);

    pub fn new(value: u8) -> Result<Self> {
        match value {
            0 => Ok(Bit::ZERO),
            1 => Ok(Bit::ONE),
            other => Err(Error::InvalidBit(other)),
        }
    }

    pub fn as_u8(self) -> u8 {
        u8::from(self.0)
    }

    /// Phase-shift angle encoding this bit: `0` or `pi` radians.
    pub fn phase<T: Real>(self) -> T {
        if self.0 {
            T::PI()
        } else {
            T::zero()
        }
    }

    /// Recovers the bit a phase angle encodes, treating anything closer to
    /// `pi` than to `0` (mod `2 pi`) as one.
    pub fn from_phase<T: Real>(theta: T) -> Self {
        let half_turns = (theta / T::PI()).round().to_f64().unwrap_or(0.0) as i64;
        Bit(half_turns.rem_euclid(2) == 1)
    }
}

impl BitXor for Bit {
    type Output = Bit;
    fn bitxor(self, rhs: Bit) -> Bit {
        Bit(self.0 ^ rhs.0)
    }
}

impl From<bool> for Bit {
    fn from(v: bool) -> Self {
        Bit(v)
    }
}

impl From<Bit> for u8 {
    fn from(b: Bit) -> u8 {
        b.as_u8()
    }
}

impl TryFrom<u8> for Bit {
    type Error = Error;
    fn try_from(value: u8) -> Result<Self> {
        Bit::new(value)
    }
}

impl fmt::Display for Bit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.as_u8())
    }
}
