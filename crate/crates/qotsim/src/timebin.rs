//! Single-photon time-bin states and their evolution.
//!
//! A state is a complex amplitude vector over `(path, slot)` modes. The
//! supported operations are exactly what the interferometer implements:
//! preparation behind a 50/50 splitter, per-path slot delays, per-path phase
//! shifts, and the final recombining splitter feeding two detectors.
//!
//! The recombiner and detectors act as projections onto
//! `(|t>_A + |t>_B)/sqrt(2)` (detector D0 at slot `t`) and
//! `(|t>_A - |t>_B)/sqrt(2)` (detector D1 at slot `t`).

use crate::error::{Error, Result};
use crate::geometry::{ModeIndex, Path, ProtocolGeometry};
use crate::scalar::Real;
use num_complex::Complex;
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;

/// Output detector of the recombining beam splitter.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Detector {
    D0,
    D1,
}

impl Detector {
    /// Detector index `i` as a bit: D0 -> 0, D1 -> 1.
    pub fn index(&self) -> u8 {
        match self {
            Detector::D0 => 0,
            Detector::D1 => 1,
        }
    }

    pub fn from_index(i: u8) -> Self {
        if i == 0 {
            Detector::D0
        } else {
            Detector::D1
        }
    }
}

/// What the receiver observes within one transmission window.
///
/// `NoClick` and `MultiClick` never arise from measuring a lossless
/// single-photon state; they are injected by the channel noise model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DetectionEvent {
    Click { detector: Detector, slot: usize },
    NoClick,
    MultiClick,
}

impl DetectionEvent {
    pub fn is_click(&self) -> bool {
        matches!(self, DetectionEvent::Click { .. })
    }
}

/// Normalized single-photon state over `(path, slot)` modes.
///
/// `window` is the number of slots represented per path. It equals
/// `geometry.n()` for every state the sender can produce; the receiver's
/// delay may extend it (a photon in flight cannot be rejected, so late
/// arrivals are tracked rather than errored).
#[derive(Debug, Clone, PartialEq)]
pub struct TimeBinState<T: Real> {
    geometry: ProtocolGeometry,
    window: usize,
    amplitudes: Vec<Complex<T>>,
}

impl<T: Real> TimeBinState<T> {
    /// State right after the source and first splitter: amplitude
    /// `1/sqrt(2)` on `(A, t_s)` and `(B, t_s)`, everything else zero.
    pub fn source(geometry: ProtocolGeometry, t_s: usize) -> Result<Self> {
        if t_s < 1 || t_s > geometry.n() {
            return Err(Error::SlotOutOfRange {
                slot: t_s,
                max: geometry.n(),
            });
        }
        let window = geometry.n();
        let mut amplitudes = vec![Complex::new(T::zero(), T::zero()); 2 * window];
        let half = Complex::new(T::one() / T::SQRT_2(), T::zero());
        amplitudes[ModeIndex::new(Path::A, t_s).offset(window)] = half;
        amplitudes[ModeIndex::new(Path::B, t_s).offset(window)] = half;
        Ok(Self {
            geometry,
            window,
            amplitudes,
        })
    }

    /// Basis state with all weight on a single mode. Used by tests and by
    /// the decayed-memory model.
    pub fn basis(geometry: ProtocolGeometry, mode: ModeIndex) -> Result<Self> {
        if mode.slot < 1 || mode.slot > geometry.n() {
            return Err(Error::SlotOutOfRange {
                slot: mode.slot,
                max: geometry.n(),
            });
        }
        let window = geometry.n();
        let mut amplitudes = vec![Complex::new(T::zero(), T::zero()); 2 * window];
        amplitudes[mode.offset(window)] = Complex::new(T::one(), T::zero());
        Ok(Self {
            geometry,
            window,
            amplitudes,
        })
    }

    /// Builds a state from explicit amplitudes (length must be twice the
    /// geometry's slot count). No normalization is applied.
    pub fn from_amplitudes(
        geometry: ProtocolGeometry,
        amplitudes: Vec<Complex<T>>,
    ) -> Result<Self> {
        if amplitudes.len() != geometry.dim() {
            return Err(Error::DimensionMismatch {
                left: amplitudes.len(),
                right: geometry.dim(),
            });
        }
        Ok(Self {
            geometry,
            window: geometry.n(),
            amplitudes,
        })
    }

    pub fn geometry(&self) -> ProtocolGeometry {
        self.geometry
    }

    /// Slots represented per path; `>= geometry.n()`.
    pub fn window(&self) -> usize {
        self.window
    }

    pub fn amplitude(&self, mode: ModeIndex) -> Complex<T> {
        if mode.slot < 1 || mode.slot > self.window {
            Complex::new(T::zero(), T::zero())
        } else {
            self.amplitudes[mode.offset(self.window)]
        }
    }

    pub fn amplitudes(&self) -> &[Complex<T>] {
        &self.amplitudes
    }

    pub fn norm_sqr(&self) -> T {
        self.amplitudes.iter().map(Complex::norm_sqr).sum()
    }

    fn check_normalized(&self) -> Result<()> {
        let deviation = (self.norm_sqr() - T::one()).abs();
        if deviation > T::exact_tol() {
            return Err(Error::NotNormalized {
                deviation: deviation.to_f64().unwrap_or(f64::NAN),
            });
        }
        Ok(())
    }

    /// Shifts every occupied slot on `path` forward by `tau` slots.
    ///
    /// Errors when an occupied slot would land past the window end; the
    /// sender must respect `t_s <= n - delta` instead of relying on this.
    pub fn delayed(&self, path: Path, tau: usize) -> Result<Self> {
        self.delay_impl(path, tau, false)
    }

    /// Like [`TimeBinState::delayed`] but grows the window instead of
    /// erroring. Returns the new state and whether extension happened.
    pub fn delayed_extending(&self, path: Path, tau: usize) -> (Self, bool) {
        match self.delay_impl(path, tau, true) {
            Ok(state) => {
                let extended = state.window > self.window;
                (state, extended)
            }
            Err(_) => unreachable!("extending delay cannot overflow"),
        }
    }

    fn delay_impl(&self, path: Path, tau: usize, extend: bool) -> Result<Self> {
        if tau == 0 {
            return Ok(self.clone());
        }
        let zero = Complex::new(T::zero(), T::zero());
        let mut window = self.window;
        let mut occupied_max = 0usize;
        for slot in 1..=self.window {
            if self.amplitude(ModeIndex::new(path, slot)) != zero {
                occupied_max = slot;
            }
        }
        if occupied_max + tau > window {
            if extend {
                window = occupied_max + tau;
            } else {
                return Err(Error::DelayOverflow {
                    slot: occupied_max,
                    tau,
                    window,
                });
            }
        }
        let mut amplitudes = vec![zero; 2 * window];
        for slot in 1..=self.window {
            for p in [Path::A, Path::B] {
                let amp = self.amplitude(ModeIndex::new(p, slot));
                if amp == zero {
                    continue;
                }
                let target = if p == path { slot + tau } else { slot };
                amplitudes[ModeIndex::new(p, target).offset(window)] = amp;
            }
        }
        Ok(Self {
            geometry: self.geometry,
            window,
            amplitudes,
        })
    }

    /// Multiplies every amplitude on `path` by `e^{i theta}`.
    pub fn with_phase(&self, path: Path, theta: T) -> Self {
        let factor = Complex::new(theta.cos(), theta.sin());
        let mut amplitudes = self.amplitudes.clone();
        for slot in 1..=self.window {
            let idx = ModeIndex::new(path, slot).offset(self.window);
            amplitudes[idx] *= factor;
        }
        Self {
            geometry: self.geometry,
            window: self.window,
            amplitudes,
        }
    }

    /// Click probabilities at the output of the recombining splitter.
    ///
    /// For each slot `t`, the projection amplitudes are `(a + b)/sqrt(2)`
    /// onto D0 and `(a - b)/sqrt(2)` onto D1, where `a`, `b` are the path
    /// A/B amplitudes at `t`. Entries whose probability is below rounding
    /// dust (`exact_tol^2`) are omitted.
    pub fn outcome_distribution(&self) -> Result<Vec<(Detector, usize, T)>> {
        self.check_normalized()?;
        let two = T::from_f64_lossy(2.0);
        let floor = T::exact_tol() * T::exact_tol();
        let mut outcomes = Vec::new();
        for slot in 1..=self.window {
            let a = self.amplitude(ModeIndex::new(Path::A, slot));
            let b = self.amplitude(ModeIndex::new(Path::B, slot));
            let p0 = (a + b).norm_sqr() / two;
            let p1 = (a - b).norm_sqr() / two;
            if p0 > floor {
                outcomes.push((Detector::D0, slot, p0));
            }
            if p1 > floor {
                outcomes.push((Detector::D1, slot, p1));
            }
        }
        Ok(outcomes)
    }

    /// Samples one click from [`TimeBinState::outcome_distribution`].
    /// Deterministic for a fixed generator state.
    pub fn measure<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<DetectionEvent> {
        let outcomes = self.outcome_distribution()?;
        let draw = rng.gen::<f64>();
        let mut cumulative = 0.0;
        for &(detector, slot, p) in &outcomes {
            cumulative += p.to_f64().unwrap_or(0.0);
            if draw < cumulative {
                return Ok(DetectionEvent::Click { detector, slot });
            }
        }
        // Rounding can leave the cumulative sum a hair under the draw.
        let &(detector, slot, _) = outcomes.last().expect("normalized state has outcomes");
        Ok(DetectionEvent::Click { detector, slot })
    }

    /// Debug dump as CSV rows `path,slot,re,im`, one row per nonzero mode.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("path,slot,re,im\n");
        let zero = Complex::new(T::zero(), T::zero());
        for path in [Path::A, Path::B] {
            for slot in 1..=self.window {
                let amp = self.amplitude(ModeIndex::new(path, slot));
                if amp == zero {
                    continue;
                }
                let label = if path == Path::A { 'A' } else { 'B' };
                writeln!(out, "{label},{slot},{},{}", amp.re, amp.im).expect("string write");
            }
        }
        out
    }
}
