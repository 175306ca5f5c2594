//! Property tests of physical invariants on small random instances.

use std::f64::consts::PI;

use proptest::prelude::*;
use topocat::dynamics::{
    array_collapses, evolve_master, steady_state, EvolveMethod, EvolveSpec, Probes,
};
use topocat::fockspace::{
    build_space, coherent_ket, single_mode_space, Chirality, DensityOp, ModeId, TruncationScheme,
};
use topocat::model::{array_hamiltonian, driven_hamiltonian, winding_number, ArrayParams};
use topocat::phasespace::{
    cat_amplitudes, fidelity, fidelity_pure, fit_cat, negativity, wigner, CatFamily, FitOptions, PhaseGrid,
};
use topocat::response::{analytic_green, numeric_transmission};
use topocat::C64;

/// Random density matrix `A A^dag / Tr` of dimension `d` from a flat list
/// of real and imaginary parts.
fn mixed_state(d: usize, raw: &[f64]) -> DensityOp {
    let a: Vec<C64> = raw.chunks(2).take(d * d).map(|c| C64::new(c[0], c[1])).collect();
    let mut rho = vec![C64::new(0.0, 0.0); d * d];
    for i in 0..d {
        for j in 0..d {
            rho[i * d + j] = (0..d).map(|k| a[i * d + k] * a[j * d + k].conj()).sum();
        }
    }
    let tr: f64 = (0..d).map(|i| rho[i * d + i].re).sum();
    for v in &mut rho {
        *v /= tr;
    }
    DensityOp::new(single_mode_space(d), rho).unwrap()
}

fn rotate(rho: &DensityOp, phi: f64) -> DensityOp {
    let d = rho.dim();
    let data = (0..d * d)
        .map(|k| {
            let (m, n) = (k / d, k % d);
            rho.get(m, n) * C64::from_polar(1.0, -phi * (m as f64 - n as f64))
        })
        .collect();
    DensityOp::new(rho.space().clone(), data).unwrap()
}

fn mix(a: &DensityOp, b: &DensityOp, lambda: f64) -> DensityOp {
    let data = a.as_slice().iter().zip(b.as_slice()).map(|(x, y)| x * lambda + y * (1.0 - lambda)).collect();
    DensityOp::new(a.space().clone(), data).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn wigner_is_normalized(raw in prop::collection::vec(-1.0f64..1.0, 72)) {
        let rho = mixed_state(6, &raw);
        let w = wigner(&rho, &PhaseGrid::square(6.0, 121)).unwrap();
        prop_assert!((w.integral() - 1.0).abs() < 1e-4, "{}", w.integral());
    }

    #[test]
    fn negativity_is_rotation_invariant(raw in prop::collection::vec(-1.0f64..1.0, 50), phi in 0.0f64..(2.0 * PI)) {
        let rho = mixed_state(5, &raw);
        let grid = PhaseGrid::square(5.5, 201);
        let a = negativity(&wigner(&rho, &grid).unwrap());
        let b = negativity(&wigner(&rotate(&rho, phi), &grid).unwrap());
        prop_assert!((a - b).abs() < 2e-3, "{a} vs {b}");
    }

    #[test]
    fn fidelity_is_symmetric_and_concave(
        ra in prop::collection::vec(-1.0f64..1.0, 32),
        rb in prop::collection::vec(-1.0f64..1.0, 32),
        lambda in 0.0f64..1.0,
    ) {
        let (a, b) = (mixed_state(4, &ra), mixed_state(4, &rb));
        let ab = fidelity(&a, &b).unwrap();
        prop_assert!((ab - fidelity(&b, &a).unwrap()).abs() < 1e-6);
        prop_assert!((0.0..=1.0 + 1e-9).contains(&ab));
        // mixing a state towards rho cannot move it away from rho
        let f = fidelity(&a, &mix(&a, &b, lambda)).unwrap();
        prop_assert!(f >= lambda + (1.0 - lambda) * ab - 1e-6, "{f} < {lambda} + (1 - {lambda}) {ab}");
    }

    #[test]
    fn fit_beats_random_probes(
        eta in 1.6f64..2.4,
        theta in -PI..PI,
        noise in prop::collection::vec(-0.05f64..0.05, 44),
        probes in prop::collection::vec((1.5f64..3.0, -PI..PI, -PI..PI), 100),
    ) {
        let cut = 22;
        let amps: Vec<C64> = cat_amplitudes(CatFamily::Two, eta, PI / 2.0, theta, cut)
            .iter()
            .zip(noise.chunks(2))
            .map(|(v, n)| v + C64::new(n[0], n[1]))
            .collect();
        let norm: f64 = amps.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt();
        let amps: Vec<C64> = amps.iter().map(|v| v / norm).collect();
        let rho = topocat::fockspace::Ket::new(single_mode_space(cut), amps).unwrap().to_density();
        let fit = fit_cat(&rho, &FitOptions::default()).unwrap();
        for (e, b, t) in probes {
            let f = fidelity_pure(&rho, &cat_amplitudes(CatFamily::Two, e, b, t, cut)).unwrap();
            prop_assert!(fit.fidelity >= f - 1e-7, "fit {} < probe {f} at ({e}, {b}, {t})", fit.fidelity);
        }
    }

    #[test]
    fn master_equation_preserves_state_properties(
        t1 in 0.0f64..3.0,
        t2 in 0.1f64..3.0,
        chi in 0.0f64..2.0,
        kappa in 0.05f64..1.0,
        alpha in 0.2f64..1.0,
        ccw in any::<bool>(),
    ) {
        let direction = if ccw { Chirality::Ccw } else { Chirality::Cw };
        let p = ArrayParams { n_cavities: 2, t1, t2, chi, kappa, alpha0: alpha, direction, ..Default::default() };
        let space = build_space(2, &TruncationScheme::edge_bulk(2, 5, 3)).unwrap();
        let h = array_hamiltonian(&space, &p).unwrap();
        let c = array_collapses(&space, &p, false).unwrap();
        let rho0 = coherent_ket(&space, ModeId::new(1, direction), C64::new(alpha, 0.0)).unwrap().to_density();
        let spec = EvolveSpec::new(1.0, EvolveMethod::DenseMaster).with_stride(0.25);
        let traj = evolve_master(&rho0, &h, &c, &spec, &Probes::edge(&space).unwrap()).unwrap();
        let d = &traj.diagnostics;
        prop_assert!(d.max_trace_drift < 1e-8, "{d:?}");
        prop_assert!(d.max_hermiticity_error < 1e-10, "{d:?}");
        prop_assert_eq!(d.positive, Some(true));
        // loss only removes photons
        let n = |k: usize| traj.observables[0].values[k] + traj.observables[1].values[k];
        for k in 1..traj.times.len() {
            prop_assert!(n(k) <= n(0) + 1e-8);
        }
    }

    #[test]
    fn steady_states_are_physical(
        t1 in 0.0f64..2.0,
        t2 in 0.0f64..2.0,
        chi in 0.0f64..3.0,
        eps in 0.0f64..0.8,
        delta in -3.0f64..3.0,
    ) {
        let p = ArrayParams { n_cavities: 1, t1, t2, chi, eps, delta, ..Default::default() };
        let space = build_space(1, &TruncationScheme::uniform(1, 5)).unwrap();
        let h = driven_hamiltonian(&space, &p).unwrap();
        let c = array_collapses(&space, &p, true).unwrap();
        let ss = steady_state(&space, &h, &c).unwrap();
        prop_assert!((ss.rho.trace() - 1.0).abs() < 1e-10);
        prop_assert!(ss.rho.hermiticity_error() < 1e-10);
        prop_assert!(ss.rho.is_positive(1e-8));
        prop_assert!(ss.residual < 1e-8, "{}", ss.residual);
    }

    #[test]
    fn linear_array_is_passive(
        n in 1usize..8,
        t1 in 0.0f64..10.0,
        t2 in 0.0f64..10.0,
        gamma in 0.1f64..3.0,
        dp in -20.0f64..20.0,
    ) {
        let p = ArrayParams { n_cavities: n, t1, t2, gamma_drive: gamma, eps: 0.08, ..Default::default() };
        for dir in [Chirality::Cw, Chirality::Ccw] {
            let t = numeric_transmission(&p, dp, dir).unwrap();
            prop_assert!((-1e-12..=1.0 + 1e-12).contains(&t), "{t}");
        }
        let g = analytic_green(&p, dp).unwrap();
        prop_assert!(g.value.re > 0.0);
    }

    #[test]
    fn winding_follows_coupling_ratio(t2 in 0.1f64..10.0, ratio in 0.0f64..3.0) {
        prop_assume!((ratio - 1.0).abs() > 1e-6);
        let p = ArrayParams { n_cavities: 4, t1: ratio * t2, t2, ..Default::default() };
        prop_assert_eq!(winding_number(&p).unwrap(), u32::from(ratio < 1.0));
    }
}
