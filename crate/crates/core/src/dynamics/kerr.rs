//! Closed-form single-mode Kerr evolution.

use std::f64::consts::PI;

use num_complex::Complex64 as C64;

use crate::error::{Error, Result};
use crate::fockspace::{coherent_amplitudes, single_mode_space, Ket};

/// `exp(-i t chi a^dag^2 a^2) |alpha0>` on a single mode truncated at
/// `cutoff`. Fock amplitudes pick up the phase `exp(-i t chi n (n - 1))`.
pub fn kerr_oracle(alpha0: C64, chi: f64, t: f64, cutoff: usize) -> Result<Ket> {
    if cutoff < 1 {
        return Err(Error::InvalidTruncation("cutoff must be at least 1".into()));
    }
    let amps: Vec<C64> = coherent_amplitudes(alpha0, cutoff)
        .into_iter()
        .enumerate()
        .map(|(n, c)| {
            let n = n as f64;
            c * C64::from_polar(1.0, -t * chi * n * (n - 1.0))
        })
        .collect();
    Ket::new(single_mode_space(cutoff), amps)
}

/// Cat states reached by Kerr evolution of a coherent state.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CatKind {
    /// Reached at `chi t = pi / 2`.
    Two,
    /// Reached at `chi t = pi / 3`.
    Three,
}

impl CatKind {
    /// Kerr time `chi t` at which the cat appears.
    pub fn kerr_phase(self) -> f64 {
        match self {
            CatKind::Two => PI / 2.0,
            CatKind::Three => PI / 3.0,
        }
    }
}

/// Superposition of coherent states equal to `kerr_oracle` at the matching
/// Kerr time, up to truncation.
pub fn analytic_cat(kind: CatKind, alpha0: C64, cutoff: usize) -> Result<Ket> {
    if cutoff < 1 {
        return Err(Error::InvalidTruncation("cutoff must be at least 1".into()));
    }
    let i = C64::new(0.0, 1.0);
    let terms: Vec<(C64, C64)> = match kind {
        CatKind::Two => vec![
            (C64::from_polar(1.0, PI / 4.0) / 2f64.sqrt(), -i * alpha0),
            (C64::from_polar(1.0, -PI / 4.0) / 2f64.sqrt(), i * alpha0),
        ],
        CatKind::Three => {
            let w = C64::from_polar(1.0, -PI / 3.0);
            let c1 = (1.0 - 2.0 * w) / 3.0;
            let c2 = (1.0 + w) / 3.0;
            vec![
                (c1, alpha0 * C64::from_polar(1.0, -2.0 * PI / 3.0)),
                (c2, alpha0),
                (c2, alpha0 * C64::from_polar(1.0, 2.0 * PI / 3.0)),
            ]
        }
    };
    let mut amps = vec![C64::new(0.0, 0.0); cutoff];
    for (c, beta) in terms {
        for (a, v) in amps.iter_mut().zip(coherent_amplitudes(beta, cutoff)) {
            *a += c * v;
        }
    }
    Ket::new(single_mode_space(cutoff), amps)
}
