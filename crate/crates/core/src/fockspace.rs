//! Truncated Fock spaces for the 2N chiral modes of the array.
//!
//! Modes are laid out in the canonical order (1,CW), (1,CCW), (2,CW), ...
//! and a basis state's flat index is the row-major (first mode most
//! significant) mixed-radix number of its occupations. A space may
//! additionally cap the total photon number; it then keeps only the
//! occupation vectors under the cap, still sorted by their uncapped index.

use std::collections::HashMap;
use std::fmt;
use std::sync::Arc;

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, LinOp};

/// Default cap on the number of basis states of a space meant to hold
/// density operators.
pub const DENSITY_DIM_CAP: u128 = 200_000;
/// Default cap for spaces that only ever hold state vectors.
pub const PURE_DIM_CAP: u128 = 10_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Chirality {
    Cw,
    Ccw,
}

impl Chirality {
    pub fn other(self) -> Self {
        match self {
            Chirality::Cw => Chirality::Ccw,
            Chirality::Ccw => Chirality::Cw,
        }
    }
}

impl fmt::Display for Chirality {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Chirality::Cw => "CW",
            Chirality::Ccw => "CCW",
        })
    }
}

/// One whispering-gallery mode: cavity `j` (1-based) and its circulation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ModeId {
    pub cavity: usize,
    pub chirality: Chirality,
}

impl ModeId {
    pub const fn new(cavity: usize, chirality: Chirality) -> Self {
        Self { cavity, chirality }
    }

    pub const fn cw(cavity: usize) -> Self {
        Self::new(cavity, Chirality::Cw)
    }

    pub const fn ccw(cavity: usize) -> Self {
        Self::new(cavity, Chirality::Ccw)
    }

    /// Position of this mode in the canonical ordering of a full array.
    pub fn canonical_index(&self) -> usize {
        2 * (self.cavity - 1) + usize::from(self.chirality == Chirality::Ccw)
    }

    pub fn from_canonical_index(i: usize) -> Self {
        let chirality = if i % 2 == 0 { Chirality::Cw } else { Chirality::Ccw };
        Self::new(i / 2 + 1, chirality)
    }
}

impl fmt::Display for ModeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{})", self.cavity, self.chirality)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OperatorKind {
    Annihilate,
    Create,
    Number,
}

/// Local Fock dimension of every mode of a full 2N-mode array.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruncationScheme {
    /// Cutoffs in canonical mode order; mode `m` keeps |0>..|cutoffs[m]-1>.
    pub cutoffs: Vec<usize>,
    /// Optional cap on the total photon number across all modes.
    #[serde(default)]
    pub max_excitations: Option<usize>,
    /// Largest admissible number of basis states.
    #[serde(default = "default_cap")]
    pub dim_cap: u128,
}

fn default_cap() -> u128 {
    DENSITY_DIM_CAP
}

impl TruncationScheme {
    pub fn new(cutoffs: Vec<usize>) -> Self {
        Self { cutoffs, max_excitations: None, dim_cap: DENSITY_DIM_CAP }
    }

    pub fn uniform(n_cavities: usize, cutoff: usize) -> Self {
        Self::new(vec![cutoff; 2 * n_cavities])
    }

    /// Both modes of cavity 1 get `edge`; every other mode gets `bulk`.
    pub fn edge_bulk(n_cavities: usize, edge: usize, bulk: usize) -> Self {
        let mut cutoffs = vec![bulk; 2 * n_cavities];
        for c in cutoffs.iter_mut().take(2) {
            *c = edge;
        }
        Self::new(cutoffs)
    }

    /// Edge cutoff `ceil(|a0|^2 + 5|a0|)` and bulk cutoff 4. The light is
    /// injected into cavity 1 and the edge state keeps it there.
    pub fn default_for(n_cavities: usize, alpha0: f64) -> Self {
        let a = alpha0.abs();
        let edge = ((a * a + 5.0 * a).ceil() as usize).max(4);
        Self::edge_bulk(n_cavities, edge, 4)
    }

    pub fn with_cap(mut self, cap: u128) -> Self {
        self.dim_cap = cap;
        self
    }

    pub fn with_max_excitations(mut self, k: usize) -> Self {
        self.max_excitations = Some(k);
        self
    }

    pub fn cutoff(&self, mode: ModeId) -> Option<usize> {
        self.cutoffs.get(mode.canonical_index()).copied()
    }

    fn validate(&self) -> Result<()> {
        if self.cutoffs.is_empty() {
            return Err(Error::InvalidTruncation("no modes".into()));
        }
        if let Some(m) = self.cutoffs.iter().position(|&c| c == 0) {
            return Err(Error::InvalidTruncation(format!(
                "mode {} has cutoff 0; every local space needs at least |0>",
                ModeId::from_canonical_index(m)
            )));
        }
        Ok(())
    }

    fn describe(&self, dims: &[usize]) -> String {
        let body = dims.iter().map(|d| d.to_string()).collect::<Vec<_>>().join("x");
        match self.max_excitations {
            Some(k) => format!("{body} restricted to <= {k} photons"),
            None => body,
        }
    }
}

/// Builds the space of an `n_cavities` array under `trunc`.
pub fn build_space(n_cavities: usize, trunc: &TruncationScheme) -> Result<Arc<CompositeSpace>> {
    if n_cavities == 0 {
        return Err(Error::InvalidParameter("an array needs at least one cavity".into()));
    }
    if trunc.cutoffs.len() != 2 * n_cavities {
        return Err(Error::InvalidTruncation(format!(
            "{} cutoffs given for {} modes",
            trunc.cutoffs.len(),
            2 * n_cavities
        )));
    }
    let modes = (0..2 * n_cavities).map(ModeId::from_canonical_index).collect();
    CompositeSpace::new(modes, trunc).map(Arc::new)
}

/// A tensor-product Fock space over an ordered set of modes.
#[derive(Debug, Clone, PartialEq)]
pub struct CompositeSpace {
    modes: Vec<ModeId>,
    dims: Vec<usize>,
    strides: Vec<u64>,
    max_excitations: Option<usize>,
    /// Uncapped flat index of each basis state; `None` means the identity.
    codes: Option<Vec<u64>>,
    dim: usize,
}

impl CompositeSpace {
    /// Space over `modes` (sorted into canonical order) with cutoffs looked up
    /// by canonical index in `trunc`.
    pub fn new(mut modes: Vec<ModeId>, trunc: &TruncationScheme) -> Result<Self> {
        trunc.validate()?;
        modes.sort();
        modes.dedup();
        let dims = modes
            .iter()
            .map(|&m| trunc.cutoff(m).ok_or(Error::UnknownMode(m)))
            .collect::<Result<Vec<_>>>()?;
        Self::from_parts(modes, dims, trunc)
    }

    fn from_parts(modes: Vec<ModeId>, dims: Vec<usize>, trunc: &TruncationScheme) -> Result<Self> {
        if modes.is_empty() {
            return Err(Error::Usage("a space needs at least one mode".into()));
        }
        let product: u128 = dims.iter().map(|&d| d as u128).product();
        let cap_error = |dim: u128| Error::Capacity { product: trunc.describe(&dims), dim, cap: trunc.dim_cap };
        if product > u64::MAX as u128 {
            return Err(cap_error(product));
        }
        let mut strides = vec![1u64; dims.len()];
        for m in (0..dims.len().saturating_sub(1)).rev() {
            strides[m] = strides[m + 1] * dims[m + 1] as u64;
        }
        // a cap at or above the largest possible photon number is no cap
        let max_photons: usize = dims.iter().map(|d| d - 1).sum();
        let max_excitations = trunc.max_excitations.filter(|&k| k < max_photons);
        let codes = match max_excitations {
            None => {
                if product > trunc.dim_cap {
                    return Err(cap_error(product));
                }
                None
            }
            Some(k) => {
                let count = count_capped(&dims, k);
                if count > trunc.dim_cap {
                    return Err(cap_error(count));
                }
                let mut codes = Vec::with_capacity(count as usize);
                enumerate_capped(&dims, &strides, k, 0, 0, &mut codes);
                Some(codes)
            }
        };
        let dim = codes.as_ref().map_or(product as usize, Vec::len);
        Ok(Self { modes, dims, strides, max_excitations, codes, dim })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn modes(&self) -> &[ModeId] {
        &self.modes
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn max_excitations(&self) -> Option<usize> {
        self.max_excitations
    }

    pub fn n_modes(&self) -> usize {
        self.modes.len()
    }

    /// Number of cavities of the full array this space was built for.
    pub fn n_cavities(&self) -> usize {
        self.modes.iter().map(|m| m.cavity).max().unwrap_or(0)
    }

    pub fn position(&self, mode: ModeId) -> Result<usize> {
        self.modes.binary_search(&mode).map_err(|_| Error::UnknownMode(mode))
    }

    pub fn cutoff(&self, mode: ModeId) -> Result<usize> {
        Ok(self.dims[self.position(mode)?])
    }

    fn code(&self, flat: usize) -> u64 {
        match &self.codes {
            Some(c) => c[flat],
            None => flat as u64,
        }
    }

    /// Occupation of the mode at `pos` in basis state `flat`.
    #[inline]
    pub fn occupation(&self, flat: usize, pos: usize) -> usize {
        ((self.code(flat) / self.strides[pos]) % self.dims[pos] as u64) as usize
    }

    pub fn multi_index(&self, flat: usize) -> Vec<usize> {
        let code = self.code(flat);
        self.strides.iter().zip(&self.dims).map(|(&s, &d)| ((code / s) % d as u64) as usize).collect()
    }

    /// Flat index of an occupation vector, or `None` when it lies outside the
    /// truncated space.
    pub fn flat_index(&self, occ: &[usize]) -> Option<usize> {
        if occ.len() != self.dims.len() || occ.iter().zip(&self.dims).any(|(n, d)| n >= d) {
            return None;
        }
        let code: u64 = occ.iter().zip(&self.strides).map(|(&n, &s)| n as u64 * s).sum();
        self.index_of_code(code)
    }

    fn index_of_code(&self, code: u64) -> Option<usize> {
        match &self.codes {
            Some(c) => c.binary_search(&code).ok(),
            None => Some(code as usize),
        }
    }

    /// Basis state reached from `flat` by changing the occupation at `pos` by
    /// `delta`, if it exists in the space.
    #[inline]
    pub fn shifted(&self, flat: usize, pos: usize, delta: isize) -> Option<usize> {
        let n = self.occupation(flat, pos) as isize + delta;
        if n < 0 || n >= self.dims[pos] as isize {
            return None;
        }
        let code = self.code(flat) as i128 + delta as i128 * self.strides[pos] as i128;
        self.index_of_code(code as u64)
    }

    pub fn total_photons(&self, flat: usize) -> usize {
        (0..self.dims.len()).map(|p| self.occupation(flat, p)).sum()
    }

    /// Subspace over `keep` with the same local cutoffs and no photon cap.
    pub fn subspace(&self, keep: &[ModeId]) -> Result<Self> {
        if keep.is_empty() {
            return Err(Error::Usage("partial trace needs at least one kept mode".into()));
        }
        let mut modes = keep.to_vec();
        modes.sort();
        modes.dedup();
        let dims = modes.iter().map(|&m| self.cutoff(m)).collect::<Result<Vec<_>>>()?;
        let trunc = TruncationScheme { cutoffs: Vec::new(), max_excitations: None, dim_cap: u128::MAX };
        Self::from_parts(modes, dims, &trunc)
    }
}

fn count_capped(dims: &[usize], k: usize) -> u128 {
    // ways[s] = number of occupation vectors of the processed modes summing to s
    let mut ways = vec![0u128; k + 1];
    ways[0] = 1;
    for &d in dims {
        let mut next = vec![0u128; k + 1];
        for (s, &w) in ways.iter().enumerate() {
            if w == 0 {
                continue;
            }
            for n in 0..d.min(k + 1 - s) {
                next[s + n] += w;
            }
        }
        ways = next;
    }
    ways.iter().sum()
}

fn enumerate_capped(dims: &[usize], strides: &[u64], budget: usize, pos: usize, code: u64, out: &mut Vec<u64>) {
    if pos == dims.len() {
        out.push(code);
        return;
    }
    for n in 0..dims[pos].min(budget + 1) {
        enumerate_capped(dims, strides, budget - n, pos + 1, code + n as u64 * strides[pos], out);
    }
}

/// Space of the single mode (1,CW) with `cutoff` levels, used for
/// single-mode states such as Kerr evolutions and reference cats.
pub fn single_mode_space(cutoff: usize) -> Arc<CompositeSpace> {
    let trunc = TruncationScheme::new(vec![cutoff.max(1), 1]).with_cap(u128::MAX);
    Arc::new(CompositeSpace::new(vec![ModeId::cw(1)], &trunc).expect("single-mode space is valid"))
}

/// Ladder, creation or number operator of `mode`, identity on the rest.
pub fn mode_operator(space: &CompositeSpace, mode: ModeId, kind: OperatorKind) -> Result<LinOp> {
    let pos = space.position(mode)?;
    let dim = space.dim();
    let op = match kind {
        OperatorKind::Number => LinOp::from_triplets(
            dim,
            (0..dim).map(|i| (i, i, C64::new(space.occupation(i, pos) as f64, 0.0))),
        ),
        OperatorKind::Annihilate => LinOp::from_triplets(
            dim,
            (0..dim).filter_map(|i| {
                let n = space.occupation(i, pos);
                let j = space.shifted(i, pos, -1)?;
                Some((j, i, C64::new((n as f64).sqrt(), 0.0)))
            }),
        ),
        OperatorKind::Create => LinOp::from_triplets(
            dim,
            (0..dim).filter_map(|i| {
                let n = space.occupation(i, pos);
                let j = space.shifted(i, pos, 1)?;
                Some((j, i, C64::new((n as f64 + 1.0).sqrt(), 0.0)))
            }),
        ),
    };
    Ok(op)
}

/// Normalized pure state on a space.
#[derive(Debug, Clone, PartialEq)]
pub struct Ket {
    space: Arc<CompositeSpace>,
    amps: Vec<C64>,
}

impl Ket {
    /// Normalizes `amps` onto `space`.
    pub fn new(space: Arc<CompositeSpace>, amps: Vec<C64>) -> Result<Self> {
        if amps.len() != space.dim() {
            return Err(Error::DimensionMismatch { expected: space.dim(), found: amps.len() });
        }
        let mut ket = Self { space, amps };
        ket.normalize()?;
        Ok(ket)
    }

    pub fn basis(space: Arc<CompositeSpace>, occ: &[usize]) -> Result<Self> {
        let idx = space
            .flat_index(occ)
            .ok_or_else(|| Error::InvalidParameter(format!("occupation {occ:?} outside the space")))?;
        let mut amps = vec![C64::new(0.0, 0.0); space.dim()];
        amps[idx] = C64::new(1.0, 0.0);
        Ok(Self { space, amps })
    }

    pub fn vacuum(space: Arc<CompositeSpace>) -> Self {
        let occ = vec![0; space.n_modes()];
        Self::basis(space, &occ).expect("vacuum is always inside the space")
    }

    pub fn normalize(&mut self) -> Result<()> {
        let n = linalg::norm_sqr(&self.amps).sqrt();
        if !(n > 0.0) || !n.is_finite() {
            return Err(Error::InvalidParameter("state vector has zero or non-finite norm".into()));
        }
        self.amps.iter_mut().for_each(|a| *a /= n);
        Ok(())
    }

    pub fn space(&self) -> &Arc<CompositeSpace> {
        &self.space
    }

    pub fn dim(&self) -> usize {
        self.amps.len()
    }

    pub fn amplitudes(&self) -> &[C64] {
        &self.amps
    }

    pub fn into_amplitudes(self) -> Vec<C64> {
        self.amps
    }

    pub fn norm(&self) -> f64 {
        linalg::norm_sqr(&self.amps).sqrt()
    }

    /// `<self|other>`.
    pub fn inner(&self, other: &Ket) -> C64 {
        linalg::vdot(&self.amps, &other.amps)
    }

    /// `|<self|other>|^2`.
    pub fn overlap(&self, other: &Ket) -> f64 {
        self.inner(other).norm_sqr()
    }

    pub fn expect(&self, op: &LinOp) -> C64 {
        op.expectation(&self.amps)
    }

    pub fn to_density(&self) -> DensityOp {
        let d = self.dim();
        let mut data = vec![C64::new(0.0, 0.0); d * d];
        for (i, a) in self.amps.iter().enumerate() {
            for (j, b) in self.amps.iter().enumerate() {
                data[i * d + j] = a * b.conj();
            }
        }
        DensityOp { space: self.space.clone(), data }
    }
}

/// Density operator stored as a dense row-major matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityOp {
    space: Arc<CompositeSpace>,
    data: Vec<C64>,
}

/// Tolerances a density operator must meet.
pub const HERMITIAN_TOL: f64 = 1e-9;
pub const TRACE_TOL: f64 = 1e-8;
pub const EIGEN_TOL: f64 = 1e-8;

impl DensityOp {
    /// Wraps a row-major matrix after checking Hermiticity, unit trace and
    /// positivity.
    pub fn new(space: Arc<CompositeSpace>, data: Vec<C64>) -> Result<Self> {
        let rho = Self::new_unchecked(space, data)?;
        rho.validate()?;
        Ok(rho)
    }

    /// Wraps a row-major matrix, checking only its size.
    pub fn new_unchecked(space: Arc<CompositeSpace>, data: Vec<C64>) -> Result<Self> {
        let d = space.dim();
        if data.len() != d * d {
            return Err(Error::DimensionMismatch { expected: d * d, found: data.len() });
        }
        Ok(Self { space, data })
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.dim();
        let herm = linalg::dense_hermiticity_error(d, &self.data);
        if herm > HERMITIAN_TOL {
            return Err(Error::NotPositive(format!("not Hermitian, max |rho - rho^dag| = {herm:e}")));
        }
        let tr = self.trace();
        if (tr - 1.0).abs() > TRACE_TOL {
            return Err(Error::NotPositive(format!("trace {tr} differs from 1")));
        }
        if !self.is_positive(EIGEN_TOL) {
            return Err(Error::NotPositive(format!("an eigenvalue lies below -{EIGEN_TOL:e}")));
        }
        Ok(())
    }

    /// All eigenvalues exceed `-tol` (Cholesky certificate).
    pub fn is_positive(&self, tol: f64) -> bool {
        linalg::cholesky_certifies_psd(self.dim(), &self.data, tol)
    }

    pub fn space(&self) -> &Arc<CompositeSpace> {
        &self.space
    }

    pub fn dim(&self) -> usize {
        self.space.dim()
    }

    pub fn as_slice(&self) -> &[C64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<C64> {
        self.data
    }

    pub fn get(&self, i: usize, j: usize) -> C64 {
        self.data[i * self.dim() + j]
    }

    pub fn trace(&self) -> f64 {
        linalg::dense_trace(self.dim(), &self.data).re
    }

    pub fn purity(&self) -> f64 {
        // Tr(rho^2) = sum |rho_ij|^2 for Hermitian rho
        linalg::norm_sqr(&self.data)
    }

    pub fn hermiticity_error(&self) -> f64 {
        linalg::dense_hermiticity_error(self.dim(), &self.data)
    }

    /// `Tr(op rho)`.
    pub fn expect(&self, op: &LinOp) -> C64 {
        op.trace_with(&self.data)
    }

    /// `<psi|rho|psi>`.
    pub fn overlap_with(&self, psi: &[C64]) -> f64 {
        let d = self.dim();
        let mut s = C64::new(0.0, 0.0);
        for (i, p) in psi.iter().enumerate() {
            let row = &self.data[i * d..(i + 1) * d];
            let r: C64 = row.iter().zip(psi).map(|(x, y)| x * y).sum();
            s += p.conj() * r;
        }
        s.re
    }

    /// Eigenvalues in ascending order.
    pub fn eigenvalues(&self) -> Vec<f64> {
        linalg::hermitian_eigen(self.dim(), &self.data).0
    }
}

/// Unnormalized coherent-state amplitudes `e^{-|a|^2/2} a^n / sqrt(n!)` for
/// `n < cutoff`.
pub fn coherent_amplitudes(alpha: C64, cutoff: usize) -> Vec<C64> {
    let mut out = Vec::with_capacity(cutoff);
    let mut c = C64::new((-0.5 * alpha.norm_sqr()).exp(), 0.0);
    for n in 0..cutoff {
        if n > 0 {
            c *= alpha / (n as f64).sqrt();
        }
        out.push(c);
    }
    out
}

/// Coherent state `alpha` in `mode`, vacuum elsewhere, renormalized after
/// truncation.
pub fn coherent_ket(space: &Arc<CompositeSpace>, mode: ModeId, alpha: C64) -> Result<Ket> {
    let pos = space.position(mode)?;
    let cutoff = space.dims()[pos];
    let a = alpha.norm();
    if a * a + 5.0 * a > cutoff as f64 {
        log::warn!("cutoff {cutoff} of mode {mode} is low for a coherent amplitude {a:.3}");
    }
    let local = coherent_amplitudes(alpha, cutoff);
    let mut occ = vec![0usize; space.n_modes()];
    let mut amps = vec![C64::new(0.0, 0.0); space.dim()];
    for (n, c) in local.into_iter().enumerate() {
        occ[pos] = n;
        if let Some(i) = space.flat_index(&occ) {
            amps[i] = c;
        }
    }
    Ket::new(space.clone(), amps)
}

/// Basis states grouped by the occupation of the traced-out modes. Each group
/// lists `(full index, kept index)` pairs.
fn trace_groups(space: &CompositeSpace, sub: &CompositeSpace) -> Vec<Vec<(usize, usize)>> {
    let kept: Vec<usize> = sub.modes().iter().map(|&m| space.position(m).unwrap()).collect();
    let traced: Vec<usize> = (0..space.n_modes()).filter(|p| !kept.contains(p)).collect();
    let mut groups: HashMap<Vec<usize>, Vec<(usize, usize)>> = HashMap::new();
    let mut order = Vec::new();
    for i in 0..space.dim() {
        let occ = space.multi_index(i);
        let env: Vec<usize> = traced.iter().map(|&p| occ[p]).collect();
        let kocc: Vec<usize> = kept.iter().map(|&p| occ[p]).collect();
        let k = sub.flat_index(&kocc).expect("kept occupations fit the subspace");
        groups
            .entry(env)
            .or_insert_with_key(|key| {
                order.push(key.clone());
                Vec::new()
            })
            .push((i, k));
    }
    order.into_iter().map(|key| groups.remove(&key).unwrap()).collect()
}

/// Reduced density operator on `keep`.
pub fn partial_trace(rho: &DensityOp, keep: &[ModeId]) -> Result<DensityOp> {
    let space = rho.space();
    let sub = Arc::new(space.subspace(keep)?);
    let (d, ds) = (space.dim(), sub.dim());
    let mut out = vec![C64::new(0.0, 0.0); ds * ds];
    for group in trace_groups(space, &sub) {
        for &(i, ki) in &group {
            for &(j, kj) in &group {
                out[ki * ds + kj] += rho.data[i * d + j];
            }
        }
    }
    DensityOp::new_unchecked(sub, out)
}

/// Reduced density operator of a pure state on `keep`, without forming the
/// full projector.
pub fn partial_trace_ket(psi: &Ket, keep: &[ModeId]) -> Result<DensityOp> {
    let space = psi.space();
    let sub = Arc::new(space.subspace(keep)?);
    let ds = sub.dim();
    let mut out = vec![C64::new(0.0, 0.0); ds * ds];
    let amps = psi.amplitudes();
    for group in trace_groups(space, &sub) {
        for &(i, ki) in &group {
            for &(j, kj) in &group {
                out[ki * ds + kj] += amps[i] * amps[j].conj();
            }
        }
    }
    DensityOp::new_unchecked(sub, out)
}

/// Precomputed partial-trace plan, for reducing many states of one space.
#[derive(Debug, Clone)]
pub struct TracePlan {
    sub: Arc<CompositeSpace>,
    groups: Vec<Vec<(usize, usize)>>,
}

impl TracePlan {
    pub fn new(space: &CompositeSpace, keep: &[ModeId]) -> Result<Self> {
        let sub = Arc::new(space.subspace(keep)?);
        let groups = trace_groups(space, &sub);
        Ok(Self { sub, groups })
    }

    pub fn subspace(&self) -> &Arc<CompositeSpace> {
        &self.sub
    }

    /// Adds `weight * Tr_env |psi><psi|` into a row-major accumulator.
    pub fn accumulate_ket(&self, psi: &[C64], weight: f64, acc: &mut [C64]) {
        let ds = self.sub.dim();
        for group in &self.groups {
            for &(i, ki) in group {
                let a = psi[i] * weight;
                for &(j, kj) in group {
                    acc[ki * ds + kj] += a * psi[j].conj();
                }
            }
        }
    }

    pub fn reduce_dense(&self, rho: &[C64], dim: usize) -> Vec<C64> {
        let ds = self.sub.dim();
        let mut out = vec![C64::new(0.0, 0.0); ds * ds];
        for group in &self.groups {
            for &(i, ki) in group {
                for &(j, kj) in group {
                    out[ki * ds + kj] += rho[i * dim + j];
                }
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn single(cutoff: usize) -> Arc<CompositeSpace> {
        let trunc = TruncationScheme::new(vec![cutoff, 1]);
        build_space(1, &trunc).unwrap()
    }

    #[test]
    fn dimensions_are_products() {
        assert_eq!(build_space(1, &TruncationScheme::new(vec![3, 2])).unwrap().dim(), 6);
        assert_eq!(build_space(2, &TruncationScheme::new(vec![12, 4, 4, 4])).unwrap().dim(), 768);
        assert!(matches!(
            build_space(1, &TruncationScheme::new(vec![3, 0])),
            Err(Error::InvalidTruncation(_))
        ));
    }

    #[test]
    fn cap_error_names_product() {
        let trunc = TruncationScheme::uniform(3, 10).with_cap(1000);
        match build_space(3, &trunc) {
            Err(Error::Capacity { product, dim, cap }) => {
                assert_eq!(product, "10x10x10x10x10x10");
                assert_eq!(dim, 1_000_000);
                assert_eq!(cap, 1000);
            }
            other => panic!("expected capacity error, got {other:?}"),
        }
    }

    #[test]
    fn mode_order_is_canonical() {
        let space = build_space(2, &TruncationScheme::uniform(2, 2)).unwrap();
        assert_eq!(space.modes(), &[ModeId::cw(1), ModeId::ccw(1), ModeId::cw(2), ModeId::ccw(2)]);
    }

    #[test]
    fn ladder_action() {
        let space = single(3);
        let a = mode_operator(&space, ModeId::cw(1), OperatorKind::Annihilate).unwrap();
        let two = Ket::basis(space.clone(), &[2, 0]).unwrap();
        let out = a.apply_vec(two.amplitudes());
        let one = space.flat_index(&[1, 0]).unwrap();
        assert!((out[one] - C64::new(2f64.sqrt(), 0.0)).norm() < 1e-15);
        let n = mode_operator(&space, ModeId::cw(1), OperatorKind::Number).unwrap();
        let mut diag: Vec<f64> = (0..3).map(|i| n.get(i, i).re).collect();
        diag.sort_by(f64::total_cmp);
        assert_eq!(diag, vec![0.0, 1.0, 2.0]);
    }

    #[test]
    fn unknown_mode_is_rejected() {
        let space = single(3);
        assert_eq!(
            mode_operator(&space, ModeId::cw(2), OperatorKind::Number),
            Err(Error::UnknownMode(ModeId::cw(2)))
        );
    }

    #[test]
    fn commutator_is_identity_below_top_level() {
        let space = build_space(1, &TruncationScheme::new(vec![5, 3])).unwrap();
        for mode in [ModeId::cw(1), ModeId::ccw(1)] {
            let a = mode_operator(&space, mode, OperatorKind::Annihilate).unwrap();
            let ad = mode_operator(&space, mode, OperatorKind::Create).unwrap();
            let comm = a.commutator(&ad);
            let pos = space.position(mode).unwrap();
            let top = space.dims()[pos] - 1;
            for i in 0..space.dim() {
                let expect = if space.occupation(i, pos) == top { -(top as f64) } else { 1.0 };
                assert!((comm.get(i, i).re - expect).abs() < 1e-12);
            }
            assert_eq!(comm.triplets().filter(|&(r, c, _)| r != c).count(), 0);
        }
    }

    #[test]
    fn coherent_state_alpha_two() {
        let space = single(30);
        let raw = coherent_amplitudes(C64::new(2.0, 0.0), 30);
        let deficit = 1.0 - raw.iter().map(|c| c.norm_sqr()).sum::<f64>();
        assert!(deficit < 1e-10);
        let psi = coherent_ket(&space, ModeId::cw(1), C64::new(2.0, 0.0)).unwrap();
        let a = mode_operator(&space, ModeId::cw(1), OperatorKind::Annihilate).unwrap();
        assert!((psi.expect(&a) - C64::new(2.0, 0.0)).norm() < 1e-8);
    }

    #[test]
    fn coherent_zero_is_vacuum() {
        let space = build_space(2, &TruncationScheme::uniform(2, 3)).unwrap();
        let psi = coherent_ket(&space, ModeId::ccw(2), C64::new(0.0, 0.0)).unwrap();
        assert!((psi.overlap(&Ket::vacuum(space)) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn bell_state_reduces_to_mixture() {
        let space = build_space(1, &TruncationScheme::new(vec![2, 2])).unwrap();
        let mut amps = vec![C64::new(0.0, 0.0); 4];
        amps[space.flat_index(&[1, 0]).unwrap()] = C64::new(1.0, 0.0);
        amps[space.flat_index(&[0, 1]).unwrap()] = C64::new(1.0, 0.0);
        let psi = Ket::new(space, amps).unwrap();
        let red = partial_trace(&psi.to_density(), &[ModeId::cw(1)]).unwrap();
        assert_eq!(red.dim(), 2);
        assert!((red.get(0, 0).re - 0.5).abs() < 1e-15);
        assert!((red.get(1, 1).re - 0.5).abs() < 1e-15);
        assert!(red.get(0, 1).norm() < 1e-15);
        let red2 = partial_trace_ket(&psi, &[ModeId::cw(1)]).unwrap();
        assert_eq!(red, red2);
    }

    #[test]
    fn empty_keep_set_is_usage_error() {
        let space = single(2);
        let rho = Ket::vacuum(space).to_density();
        assert!(matches!(partial_trace(&rho, &[]), Err(Error::Usage(_))));
    }

    #[test]
    fn photon_cap_keeps_low_shells() {
        let trunc = TruncationScheme::uniform(2, 4).with_max_excitations(2);
        let space = build_space(2, &trunc).unwrap();
        // occupation vectors of 4 modes with sum <= 2: 1 + 4 + 10
        assert_eq!(space.dim(), 15);
        for i in 0..space.dim() {
            assert!(space.total_photons(i) <= 2);
            assert_eq!(space.flat_index(&space.multi_index(i)), Some(i));
        }
        assert_eq!(space.flat_index(&[1, 1, 1, 0]), None);
        let ad = mode_operator(&space, ModeId::cw(1), OperatorKind::Create).unwrap();
        let n = mode_operator(&space, ModeId::cw(1), OperatorKind::Number).unwrap();
        let a = ad.adjoint();
        assert!(a.matmul(&ad).max_abs_diff(&n) > 0.5);
        assert!(ad.matmul(&a).max_abs_diff(&n) < 1e-14);
    }

    #[test]
    fn cap_above_max_photons_is_ignored() {
        let trunc = TruncationScheme::uniform(1, 3).with_max_excitations(4);
        let space = build_space(1, &trunc).unwrap();
        assert_eq!(space.dim(), 9);
        assert_eq!(space.max_excitations(), None);
    }
}
