//! Hamiltonian of the chiral-mode cavity array and its linear band topology.
//!
//! Each cavity `j` carries a CW and a CCW mode coupled by backscattering
//! `t1`; the CCW mode of cavity `j` hops to the CW mode of cavity `j+1`
//! with `t2`. With the Kerr term switched off this is an SSH chain whose A
//! sublattice is the CW modes and whose B sublattice is the CCW modes.

use std::f64::consts::PI;

use nalgebra::{DMatrix, Matrix2, SymmetricEigen};
use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fockspace::{Chirality, CompositeSpace, ModeId};
use crate::linalg::LinOp;

/// Default k-grid resolution for the winding number.
pub const WINDING_GRID: usize = 4096;
const HERMITIAN_TOL: f64 = 1e-12;

/// Every physical constant of the array. Rates and frequencies share one
/// unit, normally the loss rate `kappa`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ArrayParams {
    pub n_cavities: usize,
    pub omega_a: f64,
    pub t1: f64,
    pub t2: f64,
    pub chi: f64,
    pub chi_c: f64,
    pub kappa: f64,
    pub gamma_drive: f64,
    pub eps: f64,
    pub delta: f64,
    pub delta_p: f64,
    pub alpha0: f64,
    pub direction: Chirality,
}

impl Default for ArrayParams {
    fn default() -> Self {
        Self {
            n_cavities: 1,
            omega_a: 0.0,
            t1: 0.0,
            t2: 0.0,
            chi: 0.0,
            chi_c: 0.0,
            kappa: 1.0,
            gamma_drive: 1.0,
            eps: 0.0,
            delta: 0.0,
            delta_p: 0.0,
            alpha0: 2.0,
            direction: Chirality::Cw,
        }
    }
}

impl ArrayParams {
    pub fn new(n_cavities: usize, t1: f64, t2: f64) -> Self {
        Self { n_cavities, t1, t2, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_cavities == 0 {
            return Err(Error::InvalidParameter("n_cavities must be at least 1".into()));
        }
        let named = [
            ("omega_a", self.omega_a),
            ("t1", self.t1),
            ("t2", self.t2),
            ("chi", self.chi),
            ("chi_c", self.chi_c),
            ("kappa", self.kappa),
            ("gamma_drive", self.gamma_drive),
            ("eps", self.eps),
            ("delta", self.delta),
            ("delta_p", self.delta_p),
            ("alpha0", self.alpha0),
        ];
        if let Some((name, _)) = named.iter().find(|(_, v)| !v.is_finite()) {
            return Err(Error::InvalidParameter(format!("{name} is not finite")));
        }
        for (name, v) in [("t1", self.t1), ("t2", self.t2), ("kappa", self.kappa), ("gamma_drive", self.gamma_drive)] {
            if v < 0.0 {
                return Err(Error::InvalidParameter(format!("{name} = {v} must be non-negative")));
            }
        }
        Ok(())
    }

    /// Copy in the frame rotating at the drive frequency: `omega_a -> delta`.
    pub fn rotating_frame(&self) -> Self {
        Self { omega_a: self.delta, ..self.clone() }
    }

    /// The driven edge mode `a_{1,dir}`.
    pub fn driven_mode(&self) -> ModeId {
        ModeId::new(1, self.direction)
    }

    pub fn modes(&self) -> Vec<ModeId> {
        (0..2 * self.n_cavities).map(ModeId::from_canonical_index).collect()
    }
}

fn check_space(space: &CompositeSpace, p: &ArrayParams) -> Result<()> {
    p.validate()?;
    if space.n_modes() != 2 * p.n_cavities || space.n_cavities() != p.n_cavities {
        return Err(Error::DimensionMismatch { expected: 2 * p.n_cavities, found: space.n_modes() });
    }
    Ok(())
}

fn checked(op: LinOp) -> Result<LinOp> {
    let err = op.hermiticity_error();
    if err < HERMITIAN_TOL {
        Ok(op)
    } else {
        Err(Error::InvalidParameter(format!("Hamiltonian is not Hermitian (error {err:e})")))
    }
}

fn real(x: f64) -> C64 {
    C64::new(x, 0.0)
}

/// Triplets of `coef * (a_to^dag a_from + h.c.)`.
fn hopping(space: &CompositeSpace, from: ModeId, to: ModeId, coef: f64) -> Result<Vec<(usize, usize, C64)>> {
    let (pf, pt) = (space.position(from)?, space.position(to)?);
    let mut out = Vec::new();
    if coef == 0.0 {
        return Ok(out);
    }
    for i in 0..space.dim() {
        let nf = space.occupation(i, pf);
        let nt = space.occupation(i, pt);
        if let Some(j) = space.shifted(i, pf, -1).and_then(|k| space.shifted(k, pt, 1)) {
            let v = coef * ((nf * (nt + 1)) as f64).sqrt();
            out.push((j, i, real(v)));
            out.push((i, j, real(v)));
        }
    }
    Ok(out)
}

/// Diagonal operator from a function of the basis index.
fn diagonal(space: &CompositeSpace, f: impl Fn(usize) -> f64) -> LinOp {
    LinOp::from_triplets(space.dim(), (0..space.dim()).map(|i| (i, i, real(f(i)))))
}

/// Bare frequencies, intra-cavity backscattering and the Kerr terms of
/// cavity 1: `sum_j [w_a (n_cw + n_ccw) + t1 (a_cw^dag a_ccw + h.c.)] +
/// chi (a^dag a^dag a a)` on both edge modes.
pub fn onsite_hamiltonian(space: &CompositeSpace, p: &ArrayParams) -> Result<LinOp> {
    check_space(space, p)?;
    let edge = [space.position(ModeId::cw(1))?, space.position(ModeId::ccw(1))?];
    let n_modes = space.n_modes();
    let diag = diagonal(space, |i| {
        let photons: usize = (0..n_modes).map(|m| space.occupation(i, m)).sum();
        let kerr: f64 = edge
            .iter()
            .map(|&m| {
                let n = space.occupation(i, m) as f64;
                n * (n - 1.0)
            })
            .sum();
        p.omega_a * photons as f64 + p.chi * kerr
    });
    let mut trip: Vec<_> = diag.triplets().collect();
    for j in 1..=p.n_cavities {
        trip.extend(hopping(space, ModeId::ccw(j), ModeId::cw(j), p.t1)?);
    }
    checked(LinOp::from_triplets(space.dim(), trip))
}

/// Fiber links `t2 (a_{j,ccw}^dag a_{j+1,cw} + h.c.)`. Zero for one cavity.
pub fn link_hamiltonian(space: &CompositeSpace, p: &ArrayParams) -> Result<LinOp> {
    check_space(space, p)?;
    let mut trip = Vec::new();
    for j in 1..p.n_cavities {
        trip.extend(hopping(space, ModeId::cw(j + 1), ModeId::ccw(j), p.t2)?);
    }
    checked(LinOp::from_triplets(space.dim(), trip))
}

/// Coherent drive on `a_{1,dir}` in the drive's rotating frame:
/// `i sqrt(2 gamma) eps (a^dag - a)`.
pub fn drive_hamiltonian(space: &CompositeSpace, p: &ArrayParams) -> Result<LinOp> {
    check_space(space, p)?;
    let pos = space.position(p.driven_mode())?;
    let amp = (2.0 * p.gamma_drive).sqrt() * p.eps;
    let mut trip = Vec::new();
    if amp != 0.0 {
        for i in 0..space.dim() {
            if let Some(j) = space.shifted(i, pos, 1) {
                let v = amp * ((space.occupation(i, pos) + 1) as f64).sqrt();
                // <j| i amp a^dag |i> and its conjugate partner -i amp a
                trip.push((j, i, C64::new(0.0, v)));
                trip.push((i, j, C64::new(0.0, -v)));
            }
        }
    }
    checked(LinOp::from_triplets(space.dim(), trip))
}

/// `chi_c n_{1,cw} n_{1,ccw}`.
pub fn cross_kerr_hamiltonian(space: &CompositeSpace, p: &ArrayParams) -> Result<LinOp> {
    check_space(space, p)?;
    let (a, b) = (space.position(ModeId::cw(1))?, space.position(ModeId::ccw(1))?);
    if p.chi_c == 0.0 {
        return Ok(LinOp::zeros(space.dim()));
    }
    checked(diagonal(space, |i| p.chi_c * (space.occupation(i, a) * space.occupation(i, b)) as f64))
}

/// Undriven array Hamiltonian: on-site, links and cross-Kerr.
pub fn array_hamiltonian(space: &CompositeSpace, p: &ArrayParams) -> Result<LinOp> {
    let h = &onsite_hamiltonian(space, p)? + &link_hamiltonian(space, p)?;
    Ok(&h + &cross_kerr_hamiltonian(space, p)?)
}

/// Driven Hamiltonian in the drive's rotating frame (`omega_a -> delta`).
pub fn driven_hamiltonian(space: &CompositeSpace, p: &ArrayParams) -> Result<LinOp> {
    let rot = p.rotating_frame();
    Ok(&array_hamiltonian(space, &rot)? + &drive_hamiltonian(space, &rot)?)
}

/// One quasimomentum sample of the periodic linear chain.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BlochPoint {
    pub k: f64,
    pub dx: f64,
    pub dy: f64,
    /// `dx - i dy = t1 + t2 e^{-ik}`.
    pub h: C64,
}

impl BlochPoint {
    pub fn new(k: f64, p: &ArrayParams) -> Self {
        let dx = p.t1 + p.t2 * k.cos();
        let dy = p.t2 * k.sin();
        Self { k, dx, dy, h: C64::new(dx, -dy) }
    }
}

/// `omega_a I + dx sigma_x + dy sigma_y`.
pub fn bloch_hamiltonian(k: f64, p: &ArrayParams) -> Matrix2<C64> {
    let b = BlochPoint::new(k, p);
    Matrix2::new(real(p.omega_a), b.h, b.h.conj(), real(p.omega_a))
}

fn check_gap(p: &ArrayParams) -> Result<()> {
    let scale = p.t1.max(p.t2);
    if (p.t1 - p.t2).abs() <= 1e-12 * scale || scale == 0.0 {
        return Err(Error::GapClosing(p.t1));
    }
    Ok(())
}

/// Net number of turns of `h(k)` about the origin as `k` runs once over the
/// Brillouin zone on a `grid`-point mesh. With `h = t1 + t2 e^{-ik}` the loop
/// runs clockwise, so the topological phase gives `-1`.
pub fn winding_number_signed(p: &ArrayParams, grid: usize) -> Result<i64> {
    check_gap(p)?;
    let grid = grid.max(8);
    let h = |m: usize| BlochPoint::new(-PI + 2.0 * PI * (m % grid) as f64 / grid as f64, p).h;
    let phase: f64 = (0..grid).map(|m| (h(m + 1) / h(m)).arg()).sum();
    Ok((phase / (2.0 * PI)).round() as i64)
}

/// Topological index of the chain: 1 when `t1 < t2`, 0 when `t1 > t2`.
pub fn winding_number(p: &ArrayParams) -> Result<u32> {
    winding_number_signed(p, WINDING_GRID).map(|w| w.unsigned_abs() as u32)
}

/// The `2N x 2N` single-photon hopping matrix of the open chain, including
/// `omega_a` on the diagonal.
pub fn hopping_matrix(p: &ArrayParams) -> DMatrix<f64> {
    let m = 2 * p.n_cavities;
    let mut h = DMatrix::from_diagonal_element(m, m, p.omega_a);
    for j in 0..p.n_cavities {
        h[(2 * j, 2 * j + 1)] = p.t1;
        h[(2 * j + 1, 2 * j)] = p.t1;
        if j + 1 < p.n_cavities {
            h[(2 * j + 1, 2 * j + 2)] = p.t2;
            h[(2 * j + 2, 2 * j + 1)] = p.t2;
        }
    }
    h
}

/// Eigen-decomposition of the open chain in its single-photon sector.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SpectrumResult {
    pub modes: Vec<ModeId>,
    /// Ascending.
    pub eigenvalues: Vec<f64>,
    /// `eigenvectors[k][m]` is the amplitude of eigenvector `k` on `modes[m]`.
    pub eigenvectors: Vec<Vec<f64>>,
}

pub fn single_excitation_spectrum(p: &ArrayParams) -> Result<SpectrumResult> {
    p.validate()?;
    let eig = SymmetricEigen::new(hopping_matrix(p));
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    Ok(SpectrumResult {
        modes: p.modes(),
        eigenvalues: order.iter().map(|&k| eig.eigenvalues[k]).collect(),
        eigenvectors: order.iter().map(|&k| eig.eigenvectors.column(k).iter().copied().collect()).collect(),
    })
}

/// Normalized photon distribution of the edge state over the modes.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EdgeProfile {
    pub modes: Vec<ModeId>,
    pub occupation: Vec<f64>,
    pub energy: f64,
}

impl EdgeProfile {
    pub fn get(&self, mode: ModeId) -> f64 {
        self.modes.iter().position(|&m| m == mode).map_or(0.0, |i| self.occupation[i])
    }
}

/// Edge state of the open chain nearest `omega_a`.
///
/// Deep in the topological phase the two edge states are degenerate to
/// machine precision and the eigensolver returns arbitrary mixtures of them.
/// When the two levels closest to `omega_a` sit well inside the gap, the
/// pair is rotated into eigenstates of the chiral operator (+1 on CW, -1 on
/// CCW), which are the states localized at either end, and the one with more
/// weight on cavity 1 is returned.
pub fn edge_profile(p: &ArrayParams) -> Result<EdgeProfile> {
    let spec = single_excitation_spectrum(p)?;
    let mut by_distance: Vec<usize> = (0..spec.eigenvalues.len()).collect();
    by_distance.sort_by(|&a, &b| {
        (spec.eigenvalues[a] - p.omega_a).abs().total_cmp(&(spec.eigenvalues[b] - p.omega_a).abs())
    });
    let dist = |k: usize| (spec.eigenvalues[by_distance[k]] - p.omega_a).abs();
    let nearest = &spec.eigenvectors[by_distance[0]];

    let vector = if by_distance.len() >= 3 && dist(1) < 0.5 * dist(2) {
        let (u, v) = (nearest, &spec.eigenvectors[by_distance[1]]);
        let chiral = |x: &[f64], y: &[f64]| -> f64 {
            x.iter().zip(y).enumerate().map(|(m, (a, b))| if m % 2 == 0 { a * b } else { -a * b }).sum()
        };
        let g = nalgebra::Matrix2::new(chiral(u, u), chiral(u, v), chiral(v, u), chiral(v, v));
        let eig = SymmetricEigen::new(g);
        let candidates: Vec<Vec<f64>> = (0..2)
            .map(|c| {
                let (cu, cv) = (eig.eigenvectors[(0, c)], eig.eigenvectors[(1, c)]);
                u.iter().zip(v).map(|(a, b)| cu * a + cv * b).collect()
            })
            .collect();
        let edge_weight = |x: &Vec<f64>| x[0] * x[0] + x[1] * x[1];
        candidates.into_iter().max_by(|a, b| edge_weight(a).total_cmp(&edge_weight(b))).unwrap()
    } else {
        nearest.clone()
    };
    let norm: f64 = vector.iter().map(|x| x * x).sum();
    Ok(EdgeProfile {
        modes: spec.modes,
        occupation: vector.iter().map(|x| x * x / norm).collect(),
        energy: spec.eigenvalues[by_distance[0]],
    })
}
