//! Receiver-side state discrimination bounds.
//!
//! A receiver who holds the photon unmeasured sees one of two density
//! matrices, depending on the sender's bit. Their trace distance bounds how
//! well any measurement can tell them apart, which in turn bounds the
//! receiver's cheating probability and average reliability.
//!
//! Two independent routes compute the trace distance:
//!
//! * the reference route assembles both matrices densely and takes the
//!   eigenvalues of their difference (nalgebra's symmetric eigensolver);
//! * the structured route exploits the block form of the difference. In the
//!   path-A/path-B basis the difference is `[[0, C], [C^T, 0]]` with an
//!   n-by-n block `C` carrying ones on the main diagonal and on the
//!   delta-th subdiagonal, so the trace distance is the sum of the singular
//!   values of `C` divided by `2n - delta`. `C` splits into independent
//!   residue chains mod delta, each a bidiagonal all-ones block, and the
//!   squared singular values come out of a hand-rolled symmetric
//!   tridiagonal QL solver in O(n^2).
//!
//! The two routes share no eigenvalue machinery, so they act as mutual
//! oracles; the test suite checks them against each other exhaustively.

use crate::bit::Bit;
use crate::error::{Error, Result};
use crate::geometry::ProtocolGeometry;
use crate::scalar::Real;
use crate::timebin::TimeBinState;
use nalgebra::{DMatrix, RealField};
use num_traits::Float;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;

/// Which send-time range the undelayed branch of the mixture sums over.
///
/// The security analysis defaults to letting undelayed send times span the
/// whole window `1..=n` (only delayed sends are restricted to
/// `1..=n-delta`), while the live protocol draws every send time from
/// `1..=n-delta`. Both conventions are supported; at large `n` they agree
/// to well below the tolerances used anywhere in this crate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SourceWindow {
    /// Undelayed branch over `1..=n`, delayed branch over `1..=n-delta`.
    Full,
    /// Both branches over the sender's draw window `1..=n-delta`.
    Restricted,
}

impl SourceWindow {
    fn undelayed_max(self, geometry: ProtocolGeometry) -> usize {
        match self {
            SourceWindow::Full => geometry.n(),
            SourceWindow::Restricted => geometry.source_slot_max(),
        }
    }

    /// Number of pure terms in the mixture: `2n - delta` for the full
    /// window, `2(n - delta)` for the restricted one.
    fn term_count(self, geometry: ProtocolGeometry) -> usize {
        self.undelayed_max(geometry) + geometry.source_slot_max()
    }
}

/// Real symmetric, unit-trace, positive-semidefinite matrix over the
/// `2n`-dimensional mode space.
///
/// Entries are stored as real scalars; every matrix this protocol produces
/// is real in the fixed mode basis. Complex inputs are accepted through
/// [`DensityMatrix::from_pure_ensemble`], which checks that imaginary parts
/// cancel.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix<T: Real> {
    geometry: ProtocolGeometry,
    entries: DMatrix<T>,
}

impl<T: Real> DensityMatrix<T> {
    /// Validates symmetry and unit trace. Positive semidefiniteness is
    /// checked separately by [`DensityMatrix::min_eigenvalue`] since it
    /// costs an eigendecomposition.
    pub fn from_matrix(geometry: ProtocolGeometry, entries: DMatrix<T>) -> Result<Self> {
        if entries.nrows() != geometry.dim() || entries.ncols() != geometry.dim() {
            return Err(Error::DimensionMismatch {
                left: entries.nrows().max(entries.ncols()),
                right: geometry.dim(),
            });
        }
        let tol = T::exact_tol();
        for i in 0..entries.nrows() {
            for j in (i + 1)..entries.ncols() {
                if Float::abs(entries[(i, j)] - entries[(j, i)]) > tol {
                    return Err(Error::InvalidConfig(format!(
                        "matrix is not symmetric at ({i}, {j})"
                    )));
                }
            }
        }
        let trace_dev = Float::abs(entries.trace() - T::one());
        if trace_dev > tol {
            return Err(Error::NotNormalized {
                deviation: trace_dev.to_f64().unwrap_or(f64::NAN),
            });
        }
        Ok(Self { geometry, entries })
    }

    /// Mixture of pure time-bin states. Accepts complex amplitudes and
    /// errors if any imaginary part survives in the outer products.
    pub fn from_pure_ensemble(
        geometry: ProtocolGeometry,
        ensemble: &[(T, TimeBinState<T>)],
    ) -> Result<Self> {
        let dim = geometry.dim();
        let mut entries = DMatrix::<T>::zeros(dim, dim);
        let mut max_imag = T::zero();
        for (weight, state) in ensemble {
            if state.window() != geometry.n() {
                return Err(Error::DimensionMismatch {
                    left: 2 * state.window(),
                    right: dim,
                });
            }
            let amps = state.amplitudes();
            for i in 0..dim {
                for j in 0..dim {
                    let term = amps[i] * amps[j].conj();
                    entries[(i, j)] += *weight * term.re;
                    max_imag = Float::max(max_imag, Float::abs(*weight * term.im));
                }
            }
        }
        if max_imag > T::exact_tol() {
            return Err(Error::InvalidConfig(format!(
                "ensemble has non-real density matrix entries (max imaginary {max_imag})"
            )));
        }
        Self::from_matrix(geometry, entries)
    }

    pub fn geometry(&self) -> ProtocolGeometry {
        self.geometry
    }

    pub fn dim(&self) -> usize {
        self.geometry.dim()
    }

    pub fn entries(&self) -> &DMatrix<T> {
        &self.entries
    }

    pub fn trace(&self) -> T {
        self.entries.trace()
    }

    /// Smallest eigenvalue; a valid state has this above `-1e-10` (double
    /// precision; scaled for other scalars).
    pub fn min_eigenvalue(&self) -> T
    where
        T: RealField,
    {
        self.entries
            .symmetric_eigenvalues()
            .iter()
            .copied()
            .fold(T::infinity(), Float::min)
    }
}

/// Density matrix the receiver holds before his own optics, for the given
/// sender bit: the uniform mixture over delay choice and send time.
pub fn build_rho<T: Real>(geometry: ProtocolGeometry, b: Bit) -> DensityMatrix<T> {
    build_rho_with(geometry, b, SourceWindow::Full)
        .expect("full-window mixture exists for every valid geometry")
}

/// [`build_rho`] with an explicit send-time convention. Errors when the
/// restricted window is empty (`delta == n`).
pub fn build_rho_with<T: Real>(
    geometry: ProtocolGeometry,
    b: Bit,
    window: SourceWindow,
) -> Result<DensityMatrix<T>> {
    let n = geometry.n();
    let terms = window.term_count(geometry);
    if terms == 0 {
        return Err(Error::InvalidGeometry {
            n,
            delta: geometry.delta(),
            reason: "restricted source window is empty",
        });
    }
    let sign = if b == Bit::ONE { -T::one() } else { T::one() };
    let norm = T::from_usize(2 * terms)
        .expect("term count fits scalar")
        .recip();
    let mut entries = DMatrix::<T>::zeros(2 * n, 2 * n);
    // Each pure term (+/- |t_s + tau>_A + |t_s>_B)/sqrt(2) contributes four
    // entries to the outer-product sum.
    for (tau, t_max) in [
        (0usize, window.undelayed_max(geometry)),
        (geometry.delta(), geometry.source_slot_max()),
    ] {
        for t_s in 1..=t_max {
            let ia = t_s + tau - 1;
            let ib = n + t_s - 1;
            entries[(ia, ia)] += norm;
            entries[(ib, ib)] += norm;
            entries[(ia, ib)] += sign * norm;
            entries[(ib, ia)] += sign * norm;
        }
    }
    Ok(DensityMatrix { geometry, entries })
}

/// Difference of the two mixtures, assembled directly from its sparse
/// pattern: `1/(2n - delta)` at `(s, s+n)`, `(s+delta, s+n)` and their
/// transposes.
pub fn build_difference<T: Real>(geometry: ProtocolGeometry) -> DMatrix<T> {
    build_difference_with(geometry, SourceWindow::Full)
        .expect("full-window difference exists for every valid geometry")
}

/// [`build_difference`] with an explicit send-time convention.
pub fn build_difference_with<T: Real>(
    geometry: ProtocolGeometry,
    window: SourceWindow,
) -> Result<DMatrix<T>> {
    let n = geometry.n();
    let terms = window.term_count(geometry);
    if terms == 0 {
        return Err(Error::InvalidGeometry {
            n,
            delta: geometry.delta(),
            reason: "restricted source window is empty",
        });
    }
    let w = T::from_usize(terms)
        .expect("term count fits scalar")
        .recip();
    let mut entries = DMatrix::<T>::zeros(2 * n, 2 * n);
    for (tau, t_max) in [
        (0usize, window.undelayed_max(geometry)),
        (geometry.delta(), geometry.source_slot_max()),
    ] {
        for t_s in 1..=t_max {
            let ia = t_s + tau - 1;
            let ib = n + t_s - 1;
            entries[(ia, ib)] += w;
            entries[(ib, ia)] += w;
        }
    }
    Ok(entries)
}

/// Trace distance `(1/2) tr |rho0 - rho1|` via a dense symmetric
/// eigendecomposition of the difference. This is the reference route.
pub fn trace_distance<T: Real + RealField>(
    rho0: &DensityMatrix<T>,
    rho1: &DensityMatrix<T>,
) -> Result<T> {
    if rho0.dim() != rho1.dim() {
        return Err(Error::DimensionMismatch {
            left: rho0.dim(),
            right: rho1.dim(),
        });
    }
    let diff = rho0.entries() - rho1.entries();
    let eigenvalues = diff.symmetric_eigenvalues();
    let half = T::from_f64_lossy(0.5);
    Ok(eigenvalues.iter().map(|&l| Float::abs(l)).sum::<T>() * half)
}

/// Trace distance via the structured route: singular values of the n-by-n
/// block, one residue chain at a time, divided by the number of mixture
/// terms. Agrees with [`trace_distance`] to spectral tolerance and runs in
/// O(n^2).
pub fn trace_distance_structured<T: Real>(geometry: ProtocolGeometry) -> T {
    trace_distance_structured_with(geometry, SourceWindow::Full)
        .expect("full-window distance exists for every valid geometry")
}

/// [`trace_distance_structured`] with an explicit send-time convention.
pub fn trace_distance_structured_with<T: Real>(
    geometry: ProtocolGeometry,
    window: SourceWindow,
) -> Result<T> {
    let terms = window.term_count(geometry);
    if terms == 0 {
        return Err(Error::InvalidGeometry {
            n: geometry.n(),
            delta: geometry.delta(),
            reason: "restricted source window is empty",
        });
    }
    let sum: T = block_singular_values(geometry, window).into_iter().sum();
    Ok(sum / T::from_usize(terms).expect("term count fits scalar"))
}

/// Singular values of the difference block `C` (`C[s][s] = 1` for `s` in
/// the undelayed range, `C[s+delta][s] = 1` for `s <= n-delta`).
///
/// Column `s` only couples to column `s + delta`, so `C` is permutation-
/// similar to a direct sum of bidiagonal blocks, one per residue class of
/// the slot index mod delta. `C^T C` restricted to a chain is symmetric
/// tridiagonal; its eigenvalues are the squared singular values.
pub fn block_singular_values<T: Real>(geometry: ProtocolGeometry, window: SourceWindow) -> Vec<T> {
    let n = geometry.n();
    let delta = geometry.delta();
    let diag_max = window.undelayed_max(geometry);
    let sub_max = geometry.source_slot_max();
    let mut singular_values = Vec::with_capacity(n);
    for residue in 1..=delta {
        // Chain slots: residue, residue + delta, ...
        let len = if residue > n {
            0
        } else {
            (n - residue) / delta + 1
        };
        if len == 0 {
            continue;
        }
        let slot = |k: usize| residue + k * delta;
        let has_diag = |k: usize| slot(k) <= diag_max;
        let has_sub = |k: usize| slot(k) <= sub_max;
        let mut diag = Vec::with_capacity(len);
        let mut off = Vec::with_capacity(len.saturating_sub(1));
        for k in 0..len {
            let d = if has_diag(k) { T::one() } else { T::zero() };
            let s = if has_sub(k) { T::one() } else { T::zero() };
            diag.push(d * d + s * s);
            if k + 1 < len {
                let d_next = if has_diag(k + 1) { T::one() } else { T::zero() };
                off.push(s * d_next);
            }
        }
        for lambda in symmetric_tridiagonal_eigenvalues(&diag, &off) {
            singular_values.push(Float::sqrt(Float::max(lambda, T::zero())));
        }
    }
    singular_values
}

/// Eigenvalues of a symmetric tridiagonal matrix by the implicit-shift QL
/// iteration (no eigenvectors, O(n^2)).
pub fn symmetric_tridiagonal_eigenvalues<T: Real>(diag: &[T], off: &[T]) -> Vec<T> {
    let n = diag.len();
    assert_eq!(
        off.len(),
        n.saturating_sub(1),
        "off-diagonal length must be n - 1"
    );
    let mut d = diag.to_vec();
    if n <= 1 {
        return d;
    }
    let mut e = off.to_vec();
    e.push(T::zero());
    let two = T::from_f64_lossy(2.0);
    for l in 0..n {
        let mut iterations = 0usize;
        loop {
            let mut m = l;
            while m + 1 < n {
                let scale = Float::abs(d[m]) + Float::abs(d[m + 1]);
                if Float::abs(e[m]) <= T::epsilon() * scale {
                    break;
                }
                m += 1;
            }
            if m == l {
                break;
            }
            iterations += 1;
            assert!(iterations <= 64, "tridiagonal QL did not converge");
            // Wilkinson shift from the leading 2x2.
            let mut g = (d[l + 1] - d[l]) / (two * e[l]);
            let mut r = Float::hypot(g, T::one());
            g = d[m] - d[l] + e[l] / (g + Float::copysign(r, g));
            let mut s = T::one();
            let mut c = T::one();
            let mut p = T::zero();
            let mut underflowed = false;
            for i in (l..m).rev() {
                let f = s * e[i];
                let b = c * e[i];
                r = Float::hypot(f, g);
                e[i + 1] = r;
                if r == T::zero() {
                    d[i + 1] -= p;
                    e[m] = T::zero();
                    underflowed = true;
                    break;
                }
                s = f / r;
                c = g / r;
                g = d[i + 1] - p;
                r = (d[i] - g) * s + two * c * b;
                p = s * r;
                d[i + 1] = g + p;
                g = c * r - b;
            }
            if underflowed {
                continue;
            }
            d[l] -= p;
            e[l] = g;
            e[m] = T::zero();
        }
    }
    d
}

/// Security quantities derived from the trace distance `D`: a receiver with
/// an optimal measurement discriminates the two mixtures unambiguously with
/// probability `p = D` (cheating margin `u = p - 1/2`) or ambiguously with
/// average reliability `(D + 1)/2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HelstromReport<T> {
    pub n: usize,
    pub delta: usize,
    #[serde(rename = "D")]
    pub trace_distance: T,
    #[serde(rename = "p")]
    pub p_unambiguous: T,
    pub u: T,
    #[serde(rename = "R_bar")]
    pub r_bar_ambiguous: T,
}

impl<T: Serialize> HelstromReport<T> {
    /// Single JSON object with keys `n`, `delta`, `D`, `p`, `u`, `R_bar`.
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

/// Computes the receiver-cheating bounds for one geometry via the
/// structured route.
pub fn helstrom_report<T: Real>(geometry: ProtocolGeometry) -> HelstromReport<T> {
    let d = trace_distance_structured(geometry);
    let half = T::from_f64_lossy(0.5);
    let two = T::from_f64_lossy(2.0);
    HelstromReport {
        n: geometry.n(),
        delta: geometry.delta(),
        trace_distance: d,
        p_unambiguous: d,
        u: d - half,
        r_bar_ambiguous: (d + T::one()) / two,
    }
}

/// Trace distance as a function of the slot count, at fixed delta.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceDistanceCurve<T> {
    pub delta: usize,
    pub points: Vec<(usize, T)>,
}

impl<T: std::fmt::Display> TraceDistanceCurve<T> {
    /// CSV with header `n,delta,trace_distance`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("n,delta,trace_distance\n");
        for (n, d) in &self.points {
            writeln!(out, "{n},{},{d}", self.delta).expect("string write");
        }
        out
    }
}

/// Evaluates the structured trace distance over a strictly increasing list
/// of slot counts. Points are independent and computed in parallel; the
/// result is deterministic and ordered.
pub fn sweep_trace_distance<T: Real>(
    n_values: &[usize],
    delta: usize,
) -> Result<TraceDistanceCurve<T>> {
    if n_values.is_empty() {
        return Err(Error::EmptySweep);
    }
    for pair in n_values.windows(2) {
        if pair[1] <= pair[0] {
            return Err(Error::InvalidConfig(format!(
                "slot counts must be strictly increasing, got {} after {}",
                pair[1], pair[0]
            )));
        }
    }
    let geometries = n_values
        .iter()
        .map(|&n| ProtocolGeometry::new(n, delta))
        .collect::<Result<Vec<_>>>()?;
    let points = geometries
        .into_par_iter()
        .map(|g| (g.n(), trace_distance_structured::<T>(g)))
        .collect();
    Ok(TraceDistanceCurve { delta, points })
}
