//! Monte-Carlo wave-function unraveling and the no-jump conditional branch.

use num_complex::Complex64 as C64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::liouvillian::NonHermitianSchrodinger;
use super::ode::{Dopri5, Tolerances};
use super::{check_operators, finish_recordings, plans, Collapse, Diagnostics, EvolveMethod, EvolveSpec, Liouvillian, Probes, ReducedSeries, Trajectory};
use crate::error::{Error, Result};
use crate::fockspace::{DensityOp, Ket, TracePlan};
use crate::linalg::{self, LinOp};

/// Trajectories per deterministic reduction unit. Chunk sums are formed
/// serially and combined in index order, so results do not depend on the
/// number of worker threads.
const CHUNK: usize = 8;

/// Relative accuracy to which the norm threshold of a jump is located.
const JUMP_NORM_TOL: f64 = 1e-9;

struct Accumulator {
    sum: Vec<f64>,
    sum_sq: Vec<f64>,
    reduced: Vec<Vec<C64>>,
    jumps: usize,
    evals: usize,
}

impl Accumulator {
    fn new(n_values: usize, plans: &[TracePlan], n_times: usize) -> Self {
        Self {
            sum: vec![0.0; n_values],
            sum_sq: vec![0.0; n_values],
            reduced: plans.iter().map(|p| vec![C64::new(0.0, 0.0); n_times * p.subspace().dim().pow(2)]).collect(),
            jumps: 0,
            evals: 0,
        }
    }

    fn merge(&mut self, other: &Accumulator) {
        for (a, b) in self.sum.iter_mut().zip(&other.sum) {
            *a += b;
        }
        for (a, b) in self.sum_sq.iter_mut().zip(&other.sum_sq) {
            *a += b;
        }
        for (a, b) in self.reduced.iter_mut().zip(&other.reduced) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
        self.jumps += other.jumps;
        self.evals += other.evals;
    }
}

struct Problem<'a> {
    minus_i_heff: &'a LinOp,
    jumps: &'a [Collapse],
    psi0: &'a [C64],
    times: &'a [f64],
    tol: Tolerances,
    probes: &'a Probes,
    plans: &'a [TracePlan],
}

impl Problem<'_> {
    fn record(&self, k: usize, psi: &[C64], acc: &mut Accumulator) {
        let norm2 = linalg::norm_sqr(psi);
        let n_obs = self.probes.observables.len();
        for (o, (_, op)) in self.probes.observables.iter().enumerate() {
            let v = op.expectation(psi).re / norm2;
            acc.sum[k * n_obs + o] += v;
            acc.sum_sq[k * n_obs + o] += v * v;
        }
        for (plan, out) in self.plans.iter().zip(acc.reduced.iter_mut()) {
            let ds2 = plan.subspace().dim().pow(2);
            plan.accumulate_ket(psi, 1.0 / norm2, &mut out[k * ds2..(k + 1) * ds2]);
        }
    }

    /// One quantum-jump trajectory. `rng` decides jump times and channels.
    fn run(&self, rng: Option<&mut ChaCha8Rng>, acc: &mut Accumulator) -> Result<()> {
        let f = NonHermitianSchrodinger(self.minus_i_heff);
        let mut y = self.psi0.to_vec();
        let mut solver = Dopri5::new(y.len(), self.tol);
        let mut rng = rng;
        let draw = |rng: &mut Option<&mut ChaCha8Rng>| match rng {
            // threshold in (0, 1]
            Some(r) => 1.0 - r.random::<f64>(),
            None => 0.0,
        };
        let mut threshold = draw(&mut rng);
        let mut t = self.times[0];
        self.record(0, &y, acc);

        for (k, &t_next) in self.times.iter().enumerate().skip(1) {
            while t < t_next {
                let remaining = t_next - t;
                let h_prop = solver.proposed_step(&f, t, &y, remaining);
                let clipped = h_prop >= remaining;
                let h = if clipped { remaining } else { h_prop };
                let err = solver.trial_step(&f, t, &y, h);
                solver.adapt(h, err, clipped, t)?;
                if !(err.is_finite() && err <= 1.0) {
                    continue;
                }
                let n_new = linalg::norm_sqr(solver.candidate());
                if rng.is_none() {
                    // no-jump branch: renormalize instead of jumping
                    solver.accept(&mut y);
                    let s = n_new.sqrt();
                    y.iter_mut().for_each(|v| *v /= s);
                    solver.invalidate();
                    t = if clipped { t_next } else { t + h };
                    continue;
                }
                if n_new > threshold {
                    solver.accept(&mut y);
                    t = if clipped { t_next } else { t + h };
                    continue;
                }
                // the norm crosses the threshold inside (t, t + h]
                let h_jump = self.locate_jump(&mut solver, &f, t, &y, h, threshold)?;
                solver.accept(&mut y);
                t = if h_jump >= remaining { t_next } else { t + h_jump };
                self.jump(&mut y, rng.as_deref_mut().expect("jumping trajectories carry an rng"))?;
                acc.jumps += 1;
                solver.invalidate();
                threshold = draw(&mut rng);
            }
            self.record(k, &y, acc);
        }
        acc.evals += solver.rhs_evals;
        Ok(())
    }

    /// Step size at which the squared norm reaches `threshold`, found by
    /// safeguarded secant iteration on single Dormand–Prince steps. On
    /// return the solver's candidate is the state at that step.
    fn locate_jump(
        &self,
        solver: &mut Dopri5,
        f: &NonHermitianSchrodinger<'_>,
        t: f64,
        y: &[C64],
        h: f64,
        threshold: f64,
    ) -> Result<f64> {
        let (mut lo, mut hi) = (0.0, h);
        let (mut n_lo, mut n_hi) = (linalg::norm_sqr(y), linalg::norm_sqr(solver.candidate()));
        let mut last = h;
        for _ in 0..60 {
            if (n_hi - threshold).abs() <= JUMP_NORM_TOL * threshold && last == hi {
                return Ok(hi);
            }
            let width = hi - lo;
            let secant = lo + width * (n_lo - threshold) / (n_lo - n_hi);
            let guess = secant.clamp(lo + 0.05 * width, hi - 0.05 * width);
            solver.trial_step(f, t, y, guess);
            last = guess;
            let n = linalg::norm_sqr(solver.candidate());
            if (n - threshold).abs() <= JUMP_NORM_TOL * threshold {
                return Ok(guess);
            }
            if n > threshold {
                lo = guess;
                n_lo = n;
            } else {
                hi = guess;
                n_hi = n;
            }
            if hi - lo <= 1e-14 * t.abs().max(1.0) {
                break;
            }
        }
        if last != hi {
            solver.trial_step(f, t, y, hi);
        }
        Ok(hi)
    }

    fn jump(&self, y: &mut Vec<C64>, rng: &mut ChaCha8Rng) -> Result<()> {
        let candidates: Vec<Vec<C64>> = self.jumps.iter().map(|c| c.op.apply_vec(y)).collect();
        let weights: Vec<f64> =
            self.jumps.iter().zip(&candidates).map(|(c, v)| 2.0 * c.rate * linalg::norm_sqr(v)).collect();
        let total: f64 = weights.iter().sum();
        if !(total > 0.0) {
            return Err(Error::NoConvergence("jump requested but no channel has weight".into()));
        }
        let mut pick = rng.random::<f64>() * total;
        let mut chosen = weights.len() - 1;
        for (i, w) in weights.iter().enumerate() {
            if pick < *w {
                chosen = i;
                break;
            }
            pick -= w;
        }
        let mut next = candidates.into_iter().nth(chosen).unwrap();
        let n = linalg::norm_sqr(&next).sqrt();
        next.iter_mut().for_each(|v| *v /= n);
        *y = next;
        Ok(())
    }
}

fn reduced_series(
    probes: &Probes,
    plans: &[TracePlan],
    acc: &Accumulator,
    n_times: usize,
    scale: f64,
) -> Result<Vec<ReducedSeries>> {
    probes
        .reduced
        .iter()
        .zip(plans)
        .zip(&acc.reduced)
        .map(|((&mode, plan), data)| {
            let ds2 = plan.subspace().dim().pow(2);
            let states = (0..n_times)
                .map(|k| {
                    let block = data[k * ds2..(k + 1) * ds2].iter().map(|v| v * scale).collect();
                    DensityOp::new_unchecked(plan.subspace().clone(), block)
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(ReducedSeries { mode, states })
        })
        .collect()
}

fn split(values: &[f64], n_times: usize, n_obs: usize) -> Vec<Vec<f64>> {
    (0..n_obs).map(|o| (0..n_times).map(|k| values[k * n_obs + o]).collect()).collect()
}

/// Ensemble average over `n_traj` quantum-jump trajectories. Trajectory `i`
/// draws from a ChaCha stream keyed by `(seed, i)`.
pub fn evolve_trajectories(
    psi0: &Ket,
    h: &LinOp,
    collapses: &[Collapse],
    spec: &EvolveSpec,
    probes: &Probes,
) -> Result<Trajectory> {
    let EvolveMethod::Trajectories { n_traj, seed } = spec.method else {
        return Err(Error::Usage("evolve_trajectories needs the trajectories method".into()));
    };
    let times = spec.times()?;
    let space = psi0.space().clone();
    check_operators(space.dim(), h, probes)?;
    let plans = plans(&space, probes)?;
    let l = Liouvillian::new(h.clone(), collapses.to_vec())?;
    let problem = Problem {
        minus_i_heff: l.minus_i_heff(),
        jumps: l.jumps(),
        psi0: psi0.amplitudes(),
        times: &times,
        tol: spec.tolerances,
        probes,
        plans: &plans,
    };
    let n_obs = probes.observables.len();
    let n_values = times.len() * n_obs;

    let n_chunks = n_traj.div_ceil(CHUNK);
    let batch = rayon::current_num_threads().max(1) * 2;
    let mut total = Accumulator::new(n_values, &plans, times.len());
    for first in (0..n_chunks).step_by(batch) {
        let last = (first + batch).min(n_chunks);
        let partials: Vec<Result<Accumulator>> = (first..last)
            .into_par_iter()
            .map(|c| {
                let mut acc = Accumulator::new(n_values, &plans, times.len());
                for i in c * CHUNK..((c + 1) * CHUNK).min(n_traj) {
                    let mut rng = ChaCha8Rng::seed_from_u64(seed);
                    rng.set_stream(i as u64);
                    problem.run(Some(&mut rng), &mut acc)?;
                }
                Ok(acc)
            })
            .collect();
        for p in partials {
            total.merge(&p?);
        }
    }

    let n = n_traj as f64;
    let mean: Vec<f64> = total.sum.iter().map(|s| s / n).collect();
    let stderr: Vec<f64> = total
        .sum_sq
        .iter()
        .zip(&mean)
        .map(|(sq, m)| {
            if n_traj < 2 {
                0.0
            } else {
                let var = ((sq / n - m * m) * n / (n - 1.0)).max(0.0);
                (var / n).sqrt()
            }
        })
        .collect();
    let reduced = reduced_series(probes, &plans, &total, times.len(), 1.0 / n)?;
    let diagnostics = Diagnostics { rhs_evaluations: total.evals, jumps: total.jumps, ..Diagnostics::default() };
    Ok(Trajectory {
        method: spec.method.clone(),
        observables: finish_recordings(probes, split(&mean, times.len(), n_obs), Some(split(&stderr, times.len(), n_obs))),
        reduced,
        times,
        diagnostics,
    })
}

/// Evolves `psi0` under `H_eff = H - i sum r c^dag c` and renormalizes: the
/// state conditioned on no photon having been lost. Deterministic.
pub fn evolve_no_jump(
    psi0: &Ket,
    h: &LinOp,
    collapses: &[Collapse],
    spec: &EvolveSpec,
    probes: &Probes,
) -> Result<Trajectory> {
    let times = spec.times()?;
    let space = psi0.space().clone();
    check_operators(space.dim(), h, probes)?;
    let plans = plans(&space, probes)?;
    let l = Liouvillian::new(h.clone(), collapses.to_vec())?;
    let problem = Problem {
        minus_i_heff: l.minus_i_heff(),
        jumps: l.jumps(),
        psi0: psi0.amplitudes(),
        times: &times,
        tol: spec.tolerances,
        probes,
        plans: &plans,
    };
    let n_obs = probes.observables.len();
    let mut acc = Accumulator::new(times.len() * n_obs, &plans, times.len());
    problem.run(None, &mut acc)?;
    let reduced = reduced_series(probes, &plans, &acc, times.len(), 1.0)?;
    Ok(Trajectory {
        method: EvolveMethod::NoJump,
        observables: finish_recordings(probes, split(&acc.sum, times.len(), n_obs), None),
        reduced,
        times,
        diagnostics: Diagnostics { rhs_evaluations: acc.evals, ..Diagnostics::default() },
    })
}
