//! Phase-space description of single-mode states: Wigner functions,
//! negativity, macroscopicity, best-fit cats and fidelities.
//!
//! Convention: `alpha = x + i p`, `d^2 alpha = dx dp` and
//! `W(alpha) = (2/pi) Tr[D(alpha) P D(alpha)^dag rho]`, so the vacuum peaks at
//! `2/pi` and `pi integral W_rho W_sigma = Tr(rho sigma)`.

mod fit;
mod metrics;
mod wigner;

pub use fit::{
    cat_amplitudes, cat_cutoff, cat_objective_on_grid, fit_cat, metric_set, mode_metrics, CatFamily, CatFit,
    FitOptions, MetricSet, ModeMetrics, ETA_MIN,
};
pub use metrics::{
    coverage, fidelity, fidelity_pure, macroscopicity, macroscopicity_of, negativity, negativity_of,
    nonreciprocal_rates, Macroscopicity, COVERAGE_MIN, STENCIL_WARN,
};
pub use wigner::{wigner, wigner_at, PhaseGrid, WignerGrid};

use num_complex::Complex64 as C64;

use crate::error::Result;
use crate::fockspace::DensityOp;
use crate::linalg;

/// Reference value of `W(alpha)` by explicit displacement: `rho` is padded
/// with `pad` empty levels, `D(alpha)` is built by exponentiating the
/// truncated generator, and the parity expectation of `D^dag rho D` is
/// summed. Slow; meant for checking [`wigner`].
pub fn wigner_displaced_parity(rho: &DensityOp, alpha: C64, pad: usize) -> Result<f64> {
    let d = rho.dim();
    let big = d + pad;
    // G = -i (alpha a^dag - alpha^* a) is Hermitian and D = exp(i G)
    let mut g = vec![C64::new(0.0, 0.0); big * big];
    for n in 1..big {
        let s = (n as f64).sqrt();
        g[n * big + (n - 1)] = C64::new(0.0, -1.0) * alpha * s;
        g[(n - 1) * big + n] = C64::new(0.0, 1.0) * alpha.conj() * s;
    }
    let (vals, vecs) = linalg::hermitian_eigen(big, &g);
    let phase = nalgebra::DMatrix::from_fn(big, big, |r, c| if r == c { C64::from_polar(1.0, vals[r]) } else { C64::new(0.0, 0.0) });
    let disp = &vecs * phase * vecs.adjoint();
    let mut r = nalgebra::DMatrix::zeros(big, big);
    for i in 0..d {
        for j in 0..d {
            r[(i, j)] = rho.get(i, j);
        }
    }
    let moved = disp.adjoint() * r * &disp;
    let parity: f64 = (0..big).map(|k| if k % 2 == 0 { moved[(k, k)].re } else { -moved[(k, k)].re }).sum();
    Ok(2.0 / std::f64::consts::PI * parity)
}

#[cfg(test)]
mod tests {
    use std::f64::consts::PI;

    use super::*;
    use crate::fockspace::{coherent_amplitudes, single_mode_space, Ket};

    fn ket(amps: Vec<C64>) -> Ket {
        let d = amps.len();
        Ket::new(single_mode_space(d), amps).unwrap()
    }

    #[test]
    fn vacuum_peak_and_normalization() {
        let rho = ket(vec![C64::new(1.0, 0.0), C64::new(0.0, 0.0)]).to_density();
        assert!((wigner_at(&rho, C64::new(0.0, 0.0)).unwrap() - 2.0 / PI).abs() < 1e-14);
        let w = wigner(&rho, &PhaseGrid::default()).unwrap();
        assert!((w.integral() - 1.0).abs() < 1e-3);
    }

    #[test]
    fn recursion_matches_displaced_parity() {
        // an asymmetric mixed state catches transposition and sign slips
        let psi = ket(vec![C64::new(0.6, 0.0), C64::new(0.2, 0.5), C64::new(-0.1, 0.3), C64::new(0.0, -0.4)]);
        let phi = ket(coherent_amplitudes(C64::new(0.5, -0.7), 4));
        let mut data: Vec<C64> = psi.to_density().as_slice().iter().map(|v| v * 0.7).collect();
        for (x, y) in data.iter_mut().zip(phi.to_density().as_slice()) {
            *x += y * 0.3;
        }
        let rho = DensityOp::new(single_mode_space(4), data).unwrap();
        for alpha in [C64::new(0.0, 0.0), C64::new(0.7, 0.2), C64::new(-0.4, 1.1), C64::new(1.5, -0.9)] {
            let a = wigner_at(&rho, alpha).unwrap();
            let b = wigner_displaced_parity(&rho, alpha, 60).unwrap();
            assert!((a - b).abs() < 1e-10, "{alpha}: {a} vs {b}");
        }
    }

    #[test]
    fn coherent_state_is_displaced_gaussian() {
        let beta = C64::new(1.2, -0.8);
        let rho = ket(coherent_amplitudes(beta, 40)).to_density();
        for alpha in [beta, C64::new(0.0, 0.0), C64::new(1.0, 1.0)] {
            let w = wigner_at(&rho, alpha).unwrap();
            let exact = 2.0 / PI * (-2.0 * (alpha - beta).norm_sqr()).exp();
            assert!((w - exact).abs() < 1e-10);
        }
        let w = wigner(&rho, &PhaseGrid::default()).unwrap();
        assert!(negativity(&w) < 1e-6);
    }

    #[test]
    fn fock_one_is_negative_at_origin() {
        let rho = ket(vec![C64::new(0.0, 0.0), C64::new(1.0, 0.0)]).to_density();
        assert!((wigner_at(&rho, C64::new(0.0, 0.0)).unwrap() + 2.0 / PI).abs() < 1e-14);
        let w = wigner(&rho, &PhaseGrid::square(5.0, 401)).unwrap();
        // |1>: W = (2/pi)(4r^2 - 1)e^{-2r^2}; negative volume = 2 e^{-1/2} - 1
        let exact = 2.0 * (2.0 * (-0.5f64).exp() - 1.0);
        assert!((negativity(&w) - exact).abs() < 1e-4, "{}", negativity(&w));
    }

    #[test]
    fn macroscopicity_of_pure_states() {
        let grid = PhaseGrid::square(6.0, 241);
        let coh = ket(coherent_amplitudes(C64::new(1.0, 0.5), 40)).to_density();
        assert!(macroscopicity_of(&coh, &grid).unwrap().value.abs() < 0.02);
        let cat = ket(cat_amplitudes(CatFamily::Two, 2.0, 0.0, 0.3, 50)).to_density();
        let n: f64 = (0..50).map(|k| k as f64 * cat.get(k, k).re).sum();
        let m = macroscopicity_of(&cat, &grid).unwrap();
        // <a> = 0 for an even cat, so I = <n>
        assert!((m.value - n).abs() < 0.02 * n, "{} vs {n}", m.value);
        // the Richardson estimate tracks the actual stencil error
        assert!(((m.value - n).abs() - m.error_estimate).abs() < 0.2 * m.error_estimate, "{m:?} {n}");
    }

    #[test]
    fn fidelities() {
        let p0 = ket(vec![C64::new(1.0, 0.0), C64::new(0.0, 0.0)]).to_density();
        let p1 = ket(vec![C64::new(0.0, 0.0), C64::new(1.0, 0.0)]).to_density();
        assert!(fidelity(&p0, &p1).unwrap().abs() < 1e-12);
        assert!((fidelity(&p0, &p0).unwrap() - 1.0).abs() < 1e-12);
        let plus = vec![C64::new(0.5f64.sqrt(), 0.0); 2];
        assert!((fidelity_pure(&p0, &plus).unwrap() - 0.5f64.sqrt()).abs() < 1e-12);
        assert!(nonreciprocal_rates(0.0, 0.0, 1.0, 0.5).is_err());
        assert_eq!(nonreciprocal_rates(1.0, 1.0, 0.9, 0.6).unwrap().0, 0.0);
    }

    #[test]
    fn fit_recovers_synthetic_cat() {
        let rho = ket(cat_amplitudes(CatFamily::Two, 2.0, PI / 2.0, -PI / 2.0, 40)).to_density();
        let fit = fit_cat(&rho, &FitOptions::default()).unwrap();
        assert!(fit.residual < 1e-8, "{fit:?}");
        let direct = (fit.eta - 2.0).abs() + (fit.beta - PI / 2.0).abs() + (fit.theta + PI / 2.0).abs();
        // (eta, theta + pi, -beta) describes the same state
        let mirrored = (fit.eta - 2.0).abs() + (fit.beta + PI / 2.0).abs() + (fit.theta - PI / 2.0).abs();
        assert!(direct.min(mirrored) < 1e-3, "{fit:?}");
        assert!(!fit.poor && fit.fidelity > 1.0 - 1e-9);
    }

    #[test]
    fn grid_objective_matches_overlap_identity() {
        let cat = cat_amplitudes(CatFamily::Two, 1.8, 0.4, 0.2, 30);
        let noisy: Vec<C64> = cat.iter().enumerate().map(|(n, v)| v + C64::new(0.02 * n as f64 / 30.0, 0.0)).collect();
        let rho = ket(noisy).to_density();
        let fit = fit_cat(&rho, &FitOptions::default()).unwrap();
        let grid = cat_objective_on_grid(&rho, &fit, &PhaseGrid::square(6.0, 241)).unwrap();
        assert!((grid - fit.residual).abs() < 1e-6, "{grid} vs {}", fit.residual);
    }

    #[test]
    fn vacuum_fit_is_poor() {
        let rho = ket(vec![C64::new(1.0, 0.0), C64::new(0.0, 0.0), C64::new(0.0, 0.0)]).to_density();
        let fit = fit_cat(&rho, &FitOptions::default()).unwrap();
        assert!(fit.poor);
        assert!(fit.eta >= ETA_MIN);
    }
}
