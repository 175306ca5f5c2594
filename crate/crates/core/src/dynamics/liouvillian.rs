use num_complex::Complex64 as C64;

use super::ode::Rhs;
use crate::error::{Error, Result};
use crate::fockspace::{mode_operator, CompositeSpace, DensityOp, OperatorKind};
use crate::linalg::{self, LinOp};
use crate::model::ArrayParams;

/// A collapse operator `c` entering the master equation as
/// `2 rate (c rho c^dag - {c^dag c, rho} / 2)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Collapse {
    pub op: LinOp,
    pub rate: f64,
}

impl Collapse {
    pub fn new(op: LinOp, rate: f64) -> Self {
        Self { op, rate }
    }
}

/// Loss channels of the array: every mode at `kappa`, and when `driven`,
/// both modes of the edge cavity additionally at `gamma_drive` through the
/// drive fiber.
pub fn array_collapses(space: &CompositeSpace, p: &ArrayParams, driven: bool) -> Result<Vec<Collapse>> {
    let mut out = Vec::new();
    for &m in space.modes() {
        if p.kappa > 0.0 {
            out.push(Collapse::new(mode_operator(space, m, OperatorKind::Annihilate)?, p.kappa));
        }
    }
    if driven && p.gamma_drive > 0.0 {
        for m in [crate::fockspace::ModeId::cw(1), crate::fockspace::ModeId::ccw(1)] {
            out.push(Collapse::new(mode_operator(space, m, OperatorKind::Annihilate)?, p.gamma_drive));
        }
    }
    Ok(out)
}

/// Generator of the master equation `rho' = -i[H, rho] + sum 2 r L(c) rho`.
///
/// Internally split as `rho' = -i H_eff rho + i rho H_eff^dag + sum 2 r c rho
/// c^dag` with `H_eff = H - i sum r c^dag c`.
#[derive(Debug, Clone)]
pub struct Liouvillian {
    dim: usize,
    hamiltonian: LinOp,
    /// `-i H_eff`
    minus_i_heff: LinOp,
    /// `i conj(H_eff)`, the transpose of `i H_eff^dag`
    right: LinOp,
    jumps: Vec<Collapse>,
}

impl Liouvillian {
    pub fn new(hamiltonian: LinOp, collapses: Vec<Collapse>) -> Result<Self> {
        let dim = hamiltonian.dim();
        let mut decay = LinOp::zeros(dim);
        for c in &collapses {
            if c.op.dim() != dim {
                return Err(Error::DimensionMismatch { expected: dim, found: c.op.dim() });
            }
            if !(c.rate >= 0.0) {
                return Err(Error::InvalidParameter(format!("collapse rate {} must be non-negative", c.rate)));
            }
            decay = &decay + &(&c.op.adjoint().matmul(&c.op) * c.rate);
        }
        let heff = &hamiltonian - &decay.scaled(C64::new(0.0, 1.0));
        let minus_i_heff = heff.scaled(C64::new(0.0, -1.0));
        let right = heff.conj().scaled(C64::new(0.0, 1.0));
        let jumps = collapses.into_iter().filter(|c| c.rate > 0.0).collect();
        Ok(Self { dim, hamiltonian, minus_i_heff, right, jumps })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn hamiltonian(&self) -> &LinOp {
        &self.hamiltonian
    }

    /// `H_eff = H - i sum r c^dag c`.
    pub fn effective_hamiltonian(&self) -> LinOp {
        self.minus_i_heff.scaled(C64::new(0.0, 1.0))
    }

    /// `-i H_eff`.
    pub fn minus_i_heff(&self) -> &LinOp {
        &self.minus_i_heff
    }

    pub fn jumps(&self) -> &[Collapse] {
        &self.jumps
    }

    /// `out = L(rho)` for a Hermitian row-major `rho`. Only half of the
    /// coherent part is computed; the other half is its adjoint.
    pub fn apply_hermitian(&self, rho: &[C64], out: &mut [C64]) {
        out.iter_mut().for_each(|o| *o = C64::new(0.0, 0.0));
        self.minus_i_heff.par_left_mul_dense_add(C64::new(1.0, 0.0), rho, out);
        linalg::add_adjoint_in_place(self.dim, out);
        for c in &self.jumps {
            c.op.par_sandwich_add(2.0 * c.rate, rho, out);
        }
    }

    /// `out = L(x)` for an arbitrary row-major `x`.
    pub fn apply_general(&self, x: &[C64], out: &mut [C64]) {
        out.iter_mut().for_each(|o| *o = C64::new(0.0, 0.0));
        self.minus_i_heff.par_left_mul_dense_add(C64::new(1.0, 0.0), x, out);
        self.right.par_right_mul_transposed_add(x, out);
        for c in &self.jumps {
            c.op.par_sandwich_add(2.0 * c.rate, x, out);
        }
    }

    /// `L(rho)` as a new row-major buffer.
    pub fn apply(&self, rho: &DensityOp) -> Result<Vec<C64>> {
        if rho.dim() != self.dim {
            return Err(Error::DimensionMismatch { expected: self.dim, found: rho.dim() });
        }
        let mut out = vec![C64::new(0.0, 0.0); self.dim * self.dim];
        self.apply_general(rho.as_slice(), &mut out);
        Ok(out)
    }

    /// Diagonal entry of the vectorized generator at `(i, j)`.
    pub fn diagonal_entry(&self, i: usize, j: usize) -> C64 {
        let mut v = self.minus_i_heff.get(i, i) + self.right.get(j, j);
        for c in &self.jumps {
            v += 2.0 * c.rate * c.op.get(i, i) * c.op.get(j, j).conj();
        }
        v
    }

    /// Dense `d^2 x d^2` matrix of the vectorized generator (row-major
    /// vectorization). Only sensible for small spaces.
    pub fn to_dense_superoperator(&self) -> nalgebra::DMatrix<C64> {
        let n = self.dim * self.dim;
        let mut m = nalgebra::DMatrix::zeros(n, n);
        let mut basis = vec![C64::new(0.0, 0.0); n];
        let mut col = vec![C64::new(0.0, 0.0); n];
        for k in 0..n {
            basis[k] = C64::new(1.0, 0.0);
            self.apply_general(&basis, &mut col);
            for (r, v) in col.iter().enumerate() {
                m[(r, k)] = *v;
            }
            basis[k] = C64::new(0.0, 0.0);
        }
        m
    }
}

impl Rhs for Liouvillian {
    fn eval(&self, _t: f64, y: &[C64], dy: &mut [C64]) {
        self.apply_hermitian(y, dy);
    }
}

/// Pure-state generator `psi' = -i H_eff psi`.
pub(crate) struct NonHermitianSchrodinger<'a>(pub &'a LinOp);

impl Rhs for NonHermitianSchrodinger<'_> {
    fn eval(&self, _t: f64, y: &[C64], dy: &mut [C64]) {
        self.0.apply(y, dy);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fockspace::{single_mode_space, Ket};

    #[test]
    fn zero_generator() {
        let space = single_mode_space(3);
        let l = Liouvillian::new(LinOp::zeros(3), vec![]).unwrap();
        let rho = Ket::basis(space, &[1]).unwrap().to_density();
        assert!(l.apply(&rho).unwrap().iter().all(|v| v.norm() == 0.0));
    }

    #[test]
    fn fock_decay_rate() {
        let space = single_mode_space(4);
        let a = mode_operator(&space, crate::fockspace::ModeId::cw(1), OperatorKind::Annihilate).unwrap();
        let n = a.adjoint().matmul(&a);
        let kappa = 0.7;
        let l = Liouvillian::new(LinOp::zeros(4), vec![Collapse::new(a, kappa)]).unwrap();
        let rho = Ket::basis(space.clone(), &[1]).unwrap().to_density();
        let drho = l.apply(&rho).unwrap();
        let dn = n.trace_with(&drho);
        assert!((dn.re + 2.0 * kappa).abs() < 1e-14);
    }

    #[test]
    fn hermitian_and_general_paths_agree() {
        let space = single_mode_space(4);
        let a = mode_operator(&space, crate::fockspace::ModeId::cw(1), OperatorKind::Annihilate).unwrap();
        let ad = a.adjoint();
        let h = &(&ad.matmul(&ad).matmul(&a).matmul(&a) * 0.8) + &(&(&a + &ad) * 0.3);
        let l = Liouvillian::new(h, vec![Collapse::new(a, 0.4)]).unwrap();
        let psi = crate::fockspace::coherent_ket(&space, crate::fockspace::ModeId::cw(1), C64::new(0.5, 0.2)).unwrap();
        let rho = psi.to_density();
        let mut x = vec![C64::new(0.0, 0.0); 16];
        let mut y = vec![C64::new(0.0, 0.0); 16];
        l.apply_hermitian(rho.as_slice(), &mut x);
        l.apply_general(rho.as_slice(), &mut y);
        for (p, q) in x.iter().zip(&y) {
            assert!((p - q).norm() < 1e-14);
        }
        assert!(linalg::dense_trace(4, &x).norm() < 1e-14);
        let sup = l.to_dense_superoperator();
        for i in 0..4 {
            for j in 0..4 {
                assert!((sup[(i * 4 + j, i * 4 + j)] - l.diagonal_entry(i, j)).norm() < 1e-14);
            }
        }
    }
}
