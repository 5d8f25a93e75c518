//! Closed-form error and sizing math: combined false-positive rates,
//! memory-optimal auxiliary fingerprint widths, overhead ratios, cascade
//! deltas, and analytic baselines.
//!
//! Everything here is pure double-precision arithmetic; identities hold to
//! about 1e-12 and the grid oracle to its grid resolution.

use crate::error::{Error, Result};

/// Grid density for [`numeric_optimal_split`]; high enough that the
/// minimizer pins the balance ratio to well under 1% even at alpha = 1e-4.
const SPLIT_GRID_POINTS: usize = 1 << 21;

/// Combined false-positive probability of two structures consulted in
/// sequence: `1 - (1 - e1)(1 - e2)`.
pub fn epsilon_tot(epsilon_main: f64, epsilon_aux: f64) -> Result<f64> {
    for e in [epsilon_main, epsilon_aux] {
        if !(0.0..=1.0).contains(&e) {
            return Err(Error::InvalidConfig("false-positive rates must lie in [0, 1]"));
        }
    }
    // The expanded form avoids the cancellation `1 - (1 - e1)(1 - e2)`
    // suffers for small rates.
    Ok(epsilon_main + epsilon_aux - epsilon_main * epsilon_aux)
}

/// Memory-optimal auxiliary fingerprint width for a main width and an
/// abandoned fraction.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AuxBits {
    /// The real-valued optimum `F + log2(1 / alpha)`.
    pub exact: f64,
    /// The integer width to use in practice: `F + ceil(log2(1 / alpha))`.
    pub practical: u32,
}

/// Balance-condition optimum for the auxiliary width. Returns `None` for
/// `alpha = 0`: with nothing abandoned the auxiliary is unnecessary and the
/// optimum is unbounded.
pub fn optimal_aux_bits(fingerprint_bits: u32, alpha: f64) -> Result<Option<AuxBits>> {
    if fingerprint_bits == 0 {
        return Err(Error::InvalidConfig("fingerprint width must be at least 1"));
    }
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::InvalidConfig("abandoned fraction must lie in [0, 1]"));
    }
    if alpha == 0.0 {
        return Ok(None);
    }
    let extra = (1.0 / alpha).log2();
    Ok(Some(AuxBits {
        exact: fingerprint_bits as f64 + extra,
        practical: fingerprint_bits + extra.ceil() as u32,
    }))
}

/// Brute-force oracle for the split of a target false-positive budget
/// `eps` into main (`a`) and auxiliary (`b = eps - a`) shares: minimizes
/// `-ln(a) - alpha * ln(eps - a)` over a dense grid of `a` in `(0, eps)`
/// and returns the minimizing `(a, b)`.
///
/// Independent of the calculus behind [`optimal_aux_bits`] on purpose: it
/// is the check, not the implementation.
pub fn numeric_optimal_split(eps: f64, alpha: f64) -> (f64, f64) {
    debug_assert!(eps > 0.0 && eps < 1.0);
    debug_assert!(alpha > 0.0 && alpha <= 1.0);
    let steps = SPLIT_GRID_POINTS;
    let mut best_a = f64::NAN;
    let mut best_value = f64::INFINITY;
    for i in 1..=steps {
        let a = eps * i as f64 / (steps + 1) as f64;
        let value = -a.ln() - alpha * (eps - a).ln();
        if value < best_value {
            best_value = value;
            best_a = a;
        }
    }
    (best_a, eps - best_a)
}

/// Multiplicative space overhead relative to the information-theoretic
/// bound: `bits_per_key / -log2(eps_tot)`.
pub fn overhead_rho(bits_per_key: f64, eps_tot: f64) -> f64 {
    debug_assert!(eps_tot > 0.0 && eps_tot < 1.0);
    bits_per_key / -eps_tot.log2()
}

/// Relative space overhead contributed by handling the abandoned fraction
/// `alpha1` with an auxiliary built at `factor` overhead and `F + 8`-bit
/// fingerprints: `alpha1 * factor * (F + 8) / F`.
pub fn cascade_delta(alpha1: f64, fingerprint_bits: u32, factor: f64) -> f64 {
    debug_assert!((0.0..=1.0).contains(&alpha1));
    debug_assert!(fingerprint_bits >= 1);
    debug_assert!(factor >= 1.0);
    let f = fingerprint_bits as f64;
    alpha1 * factor * (f + 8.0) / f
}

/// Analytic baseline for a perfect-hash-plus-fingerprint filter with the
/// hash function at its information-theoretic minimum: `F + log2(e)` bits
/// per key at a false-positive rate of `2^-F`.
pub fn mphf_baseline_bits(fingerprint_bits: u32) -> f64 {
    debug_assert!(fingerprint_bits >= 1);
    fingerprint_bits as f64 + std::f64::consts::LOG2_E
}
