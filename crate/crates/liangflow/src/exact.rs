//! Exact many-body engine: sparse Hamiltonian application in the full
//! 2^L-dimensional σᶻ product basis, Lanczos ground states, Krylov time
//! evolution and single-site reduced density matrices.
//!
//! Basis convention: basis index `n` has bit `j−1` (LSB = site 1) equal to 0
//! for σᶻ = +1 (up) and 1 for σᶻ = −1 (down). Under the Jordan-Wigner map
//! used by the quadratic engines, bit 1 ↔ occupied fermion site, so the
//! Néel state `|↓↑↓↑…⟩` carries fermions on the odd sites.
//!
//! This engine is the brute-force reference for both Gaussian engines: any
//! single-site observable it produces is trusted to its stated residuals and
//! everything else in the crate is checked against it.

use nalgebra::{DMatrix, DVector, Matrix2};
use num_complex::Complex64;
use thiserror::Error;

use crate::model::{ChainModel, ModelError, Term};
use crate::util::shannon_from_probs;

/// Largest chain the dynamics path will accept (2^14 amplitudes).
pub const L_MAX_DYNAMICS: usize = 14;
/// Largest chain the ground-state-only path will accept.
pub const L_MAX_GROUND: usize = 16;
/// Largest dimension for dense-matrix construction.
pub const DENSE_DIM_MAX: usize = 2048;

#[derive(Debug, Error)]
pub enum ExactError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("chain of {length} sites exceeds the limit of {limit} for this path")]
    ChainTooLong { length: usize, limit: usize },
    #[error("dimension {0} too large for a dense matrix (limit {DENSE_DIM_MAX})")]
    DenseTooLarge(usize),
    #[error("eigensolver did not converge: residual {residual:.3e} after {sweeps} sweeps")]
    NonConvergence { residual: f64, sweeps: usize },
    #[error("time step underflow at dt = {0:.3e}; target time is pathological")]
    StepUnderflow(f64),
    #[error("invalid evolution time {0} (must be finite and non-negative)")]
    NegativeTime(f64),
    #[error("site {site} out of range for chain of length {length}")]
    SiteOutOfRange { site: usize, length: usize },
    #[error("not a density matrix: {0}")]
    InvalidDensityMatrix(String),
    #[error("state dimension {got} does not match Hamiltonian dimension {want}")]
    DimensionMismatch { got: usize, want: usize },
}

/// Scalars the matrix-free application works on.
pub trait HamScalar: Copy {
    fn zero() -> Self;
    fn add_scaled(&mut self, v: Self, a: f64);
}

impl HamScalar for f64 {
    fn zero() -> Self {
        0.0
    }
    fn add_scaled(&mut self, v: Self, a: f64) {
        *self += v * a;
    }
}

impl HamScalar for Complex64 {
    fn zero() -> Self {
        Complex64::new(0.0, 0.0)
    }
    fn add_scaled(&mut self, v: Self, a: f64) {
        *self += v * a;
    }
}

#[derive(Debug, Clone, Copy)]
struct Flip {
    mask: u64,
    amp: f64,
}

#[derive(Debug, Clone, Copy)]
struct Hop {
    mask: u64,
    bit_i: u32,
    bit_j: u32,
    /// 2 × bond amplitude: (σˣσˣ + σʸσʸ) swaps anti-aligned pairs with weight 2.
    amp: f64,
}

/// A spin Hamiltonian compiled for matrix-free application on 2^L amplitudes.
#[derive(Debug, Clone)]
pub struct ManyBodyHamiltonian {
    length: usize,
    dim: usize,
    diag: Vec<f64>,
    flips: Vec<Flip>,
    hops: Vec<Hop>,
    /// Crude upper bound on the operator norm, used to scale tolerances.
    norm_bound: f64,
}

impl ManyBodyHamiltonian {
    pub fn length(&self) -> usize {
        self.length
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn norm_bound(&self) -> f64 {
        self.norm_bound
    }

    /// `out = H v`, matrix-free.
    pub fn apply<T: HamScalar>(&self, v: &[T], out: &mut [T]) {
        debug_assert_eq!(v.len(), self.dim);
        debug_assert_eq!(out.len(), self.dim);
        for (n, o) in out.iter_mut().enumerate() {
            let mut acc = T::zero();
            acc.add_scaled(v[n], self.diag[n]);
            *o = acc;
        }
        for flip in &self.flips {
            for n in 0..self.dim {
                let m = n ^ flip.mask as usize;
                out[m].add_scaled(v[n], flip.amp);
            }
        }
        for hop in &self.hops {
            for n in 0..self.dim {
                let bi = (n >> hop.bit_i) & 1;
                let bj = (n >> hop.bit_j) & 1;
                if bi != bj {
                    let m = n ^ hop.mask as usize;
                    out[m].add_scaled(v[n], hop.amp);
                }
            }
        }
    }

    pub fn apply_vec(&self, v: &DVector<Complex64>) -> DVector<Complex64> {
        let mut out = vec![Complex64::new(0.0, 0.0); self.dim];
        self.apply(v.as_slice(), &mut out);
        DVector::from_vec(out)
    }

    /// Add a σᶻ pinning field on one site after compilation. Only meaningful
    /// for sites every other term has been frozen away from, where it lifts
    /// the free-spin degeneracy without touching the complement's physics.
    pub(crate) fn pin_site_up(&mut self, site: usize) {
        let bit = site - 1;
        for (n, d) in self.diag.iter_mut().enumerate() {
            let z = 1.0 - 2.0 * ((n >> bit) & 1) as f64;
            *d += -z; // −σᶻ: favors σᶻ = +1
        }
        self.norm_bound += 1.0;
    }

    /// Dense matrix form, for small-dimension oracle checks.
    pub fn to_dense(&self) -> Result<DMatrix<f64>, ExactError> {
        if self.dim > DENSE_DIM_MAX {
            return Err(ExactError::DenseTooLarge(self.dim));
        }
        let mut h = DMatrix::<f64>::zeros(self.dim, self.dim);
        for n in 0..self.dim {
            h[(n, n)] = self.diag[n];
            for flip in &self.flips {
                h[(n ^ flip.mask as usize, n)] += flip.amp;
            }
            for hop in &self.hops {
                let bi = (n >> hop.bit_i) & 1;
                let bj = (n >> hop.bit_j) & 1;
                if bi != bj {
                    h[(n ^ hop.mask as usize, n)] += hop.amp;
                }
            }
        }
        Ok(h)
    }

    /// Max deviation of `⟨u, Hv⟩ − ⟨Hu, v⟩` over deterministic probe vectors.
    pub fn hermiticity_probe(&self, probes: usize) -> f64 {
        let mut worst = 0.0f64;
        for p in 0..probes {
            let u = probe_vector(self.dim, 2 * p);
            let v = probe_vector(self.dim, 2 * p + 1);
            let mut hu = vec![0.0; self.dim];
            let mut hv = vec![0.0; self.dim];
            self.apply(&u, &mut hu);
            self.apply(&v, &mut hv);
            let uhv: f64 = u.iter().zip(&hv).map(|(a, b)| a * b).sum();
            let huv: f64 = hu.iter().zip(&v).map(|(a, b)| a * b).sum();
            worst = worst.max((uhv - huv).abs());
        }
        worst
    }
}

fn probe_vector(dim: usize, seed: usize) -> Vec<f64> {
    let mut v: Vec<f64> = (0..dim)
        .map(|i| (((i + seed * 137 + 1) as f64) * 0.618_033_988_749_895).fract() - 0.5)
        .collect();
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    for x in &mut v {
        *x /= norm;
    }
    v
}

/// Compile a chain model for dynamics (L ≤ 14).
pub fn assemble(model: &ChainModel) -> Result<ManyBodyHamiltonian, ExactError> {
    assemble_with_limit(model, L_MAX_DYNAMICS)
}

/// Compile a chain model for ground-state work only (L ≤ 16).
pub fn assemble_ground_only(model: &ChainModel) -> Result<ManyBodyHamiltonian, ExactError> {
    assemble_with_limit(model, L_MAX_GROUND)
}

fn assemble_with_limit(
    model: &ChainModel,
    limit: usize,
) -> Result<ManyBodyHamiltonian, ExactError> {
    let length = model.length();
    if length > limit {
        return Err(ExactError::ChainTooLong { length, limit });
    }
    let dim = 1usize << length;
    let mut diag = vec![0.0f64; dim];
    let mut flips = Vec::new();
    let mut hops = Vec::new();
    let mut norm_bound = 0.0;

    for term in model.terms() {
        match *term {
            Term::FieldZ { site, amp } => {
                let bit = site - 1;
                for (n, d) in diag.iter_mut().enumerate() {
                    let z = 1.0 - 2.0 * ((n >> bit) & 1) as f64;
                    *d += amp * z;
                }
                norm_bound += amp.abs();
            }
            Term::ZzBond { i, j, amp } => {
                let (bi, bj) = (i - 1, j - 1);
                for (n, d) in diag.iter_mut().enumerate() {
                    let zi = 1.0 - 2.0 * ((n >> bi) & 1) as f64;
                    let zj = 1.0 - 2.0 * ((n >> bj) & 1) as f64;
                    *d += amp * zi * zj;
                }
                norm_bound += amp.abs();
            }
            Term::FieldX { site, amp } => {
                flips.push(Flip {
                    mask: 1u64 << (site - 1),
                    amp,
                });
                norm_bound += amp.abs();
            }
            Term::XxPlusYy { left, amp } => {
                let bit_i = (left - 1) as u32;
                let bit_j = left as u32;
                hops.push(Hop {
                    mask: (1u64 << bit_i) | (1u64 << bit_j),
                    bit_i,
                    bit_j,
                    amp: 2.0 * amp,
                });
                norm_bound += 2.0 * amp.abs();
            }
        }
    }

    Ok(ManyBodyHamiltonian {
        length,
        dim,
        diag,
        flips,
        hops,
        norm_bound: norm_bound.max(1.0),
    })
}

/// A normalized many-body pure state with a time stamp.
#[derive(Debug, Clone)]
pub struct PureStateVector {
    length: usize,
    amps: DVector<Complex64>,
    time: f64,
}

impl PureStateVector {
    pub fn new(length: usize, amps: DVector<Complex64>, time: f64) -> Self {
        debug_assert_eq!(amps.len(), 1usize << length);
        PureStateVector { length, amps, time }
    }

    pub fn length(&self) -> usize {
        self.length
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    pub fn amplitudes(&self) -> &DVector<Complex64> {
        &self.amps
    }

    pub fn norm(&self) -> f64 {
        self.amps.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt()
    }
}

/// Computational basis state from a bit pattern (bit j−1 set = site j down).
pub fn basis_state(length: usize, bits: u64) -> PureStateVector {
    let dim = 1usize << length;
    let mut amps = DVector::from_element(dim, Complex64::new(0.0, 0.0));
    amps[(bits as usize) & (dim - 1)] = Complex64::new(1.0, 0.0);
    PureStateVector::new(length, amps, 0.0)
}

/// Alternating `|↓↑↓↑…⟩` with site 1 down; the fermionic Néel state with
/// odd sites occupied.
pub fn neel_state_vector(length: usize) -> PureStateVector {
    let mut bits = 0u64;
    for site in (1..=length).step_by(2) {
        bits |= 1 << (site - 1);
    }
    basis_state(length, bits)
}

/// Fully polarized `|↓↓…↓⟩`.
pub fn ferromagnetic_state_vector(length: usize) -> PureStateVector {
    basis_state(length, (1u64 << length) - 1)
}

/// `⟨ψ|H|ψ⟩`.
pub fn expectation(h: &ManyBodyHamiltonian, psi: &PureStateVector) -> f64 {
    let hv = h.apply_vec(psi.amplitudes());
    psi.amplitudes()
        .iter()
        .zip(hv.iter())
        .map(|(a, b)| (a.conj() * b).re)
        .sum()
}

// ---------------------------------------------------------------------------
// Ground states
// ---------------------------------------------------------------------------

/// Result of a ground-state solve.
#[derive(Debug, Clone)]
pub struct GroundStateResult {
    pub state: PureStateVector,
    pub energy: f64,
    /// Energy gap to the next eigenstate found.
    pub gap: f64,
    /// Set when the two lowest states are degenerate within tolerance; the
    /// caller decides whether to tilt, project a symmetry sector, or accept.
    pub degenerate: bool,
    pub residual: f64,
}

const LANCZOS_MAX_BASIS: usize = 300;
const LANCZOS_MAX_SWEEPS: usize = 8;

struct LowestPair {
    e0: f64,
    v0: DVector<f64>,
    e1: f64,
    v1: DVector<f64>,
    residual: f64,
}

/// Converge the two lowest eigenpairs of a real-symmetric matrix-free
/// operator. Convergence is measured on the invariant 2-dimensional subspace
/// (block residual), so internal near-degeneracy of the pair does not stall
/// the iteration.
fn lowest_two(h: &ManyBodyHamiltonian, tol: f64) -> Result<LowestPair, ExactError> {
    let dim = h.dim();
    if dim <= 64 {
        return dense_lowest_two(h);
    }

    let mut start = DVector::from_vec(probe_vector(dim, 0));
    let mut best: Option<LowestPair> = None;

    for sweep in 0..LANCZOS_MAX_SWEEPS {
        let m_max = LANCZOS_MAX_BASIS.min(dim);
        let mut basis: Vec<DVector<f64>> = Vec::with_capacity(m_max);
        let mut alpha: Vec<f64> = Vec::new();
        let mut beta: Vec<f64> = Vec::new();

        let mut q = start.normalize();
        basis.push(q.clone());
        let mut scratch = vec![0.0f64; dim];

        for k in 0..m_max {
            h.apply(basis[k].as_slice(), &mut scratch);
            let mut w = DVector::from_vec(scratch.clone());
            let a = basis[k].dot(&w);
            alpha.push(a);
            w -= &basis[k] * a;
            if k > 0 {
                w -= &basis[k - 1] * beta[k - 1];
            }
            // Two passes of full reorthogonalization keep the basis clean.
            for _ in 0..2 {
                for qk in &basis {
                    let o = qk.dot(&w);
                    if o != 0.0 {
                        w -= qk * o;
                    }
                }
            }
            let b = w.norm();
            if b < 1e-13 * h.norm_bound() || k + 1 == m_max {
                break;
            }
            beta.push(b);
            q = w / b;
            basis.push(q.clone());
        }

        let m = alpha.len();
        let mut t = DMatrix::<f64>::zeros(m, m);
        for i in 0..m {
            t[(i, i)] = alpha[i];
            if i > 0 {
                t[(i, i - 1)] = beta[i - 1];
                t[(i - 1, i)] = beta[i - 1];
            }
        }
        let eig = t.symmetric_eigen();
        let mut order: Vec<usize> = (0..m).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[a].partial_cmp(&eig.eigenvalues[b]).unwrap());

        let ritz = |idx: usize| -> DVector<f64> {
            let mut v = DVector::zeros(dim);
            for (k, qk) in basis.iter().enumerate() {
                v += qk * eig.eigenvectors[(k, idx)];
            }
            v.normalize()
        };

        let v0 = ritz(order[0]);
        let mut v1 = if m > 1 {
            ritz(order[1])
        } else {
            DVector::from_vec(probe_vector(dim, sweep + 7))
        };
        v1 -= &v0 * v0.dot(&v1);
        let n1 = v1.norm();
        if n1 > 1e-8 {
            v1 /= n1;
        }

        // Block residual on span{v0, v1}.
        let mut hv0 = vec![0.0; dim];
        let mut hv1 = vec![0.0; dim];
        h.apply(v0.as_slice(), &mut hv0);
        h.apply(v1.as_slice(), &mut hv1);
        let hv0 = DVector::from_vec(hv0);
        let hv1 = DVector::from_vec(hv1);
        let h00 = v0.dot(&hv0);
        let h01 = v0.dot(&hv1);
        let h11 = v1.dot(&hv1);
        let r0 = (&hv0 - &v0 * h00 - &v1 * h01).norm();
        let r1 = (&hv1 - &v0 * h01 - &v1 * h11).norm();
        let residual = r0.max(r1);

        // Rotate to eigenpairs of the 2×2 restriction.
        let theta = 0.5 * (h11 - h00);
        let rad = (theta * theta + h01 * h01).sqrt();
        let (e0, e1) = (0.5 * (h00 + h11) - rad, 0.5 * (h00 + h11) + rad);
        let (c, s) = if h01.abs() < 1e-300 {
            if h00 <= h11 {
                (1.0, 0.0)
            } else {
                (0.0, 1.0)
            }
        } else {
            let tphi = (e0 - h00) / h01;
            let norm = (1.0 + tphi * tphi).sqrt();
            (1.0 / norm, tphi / norm)
        };
        let w0 = (&v0 * c + &v1 * s).normalize();
        let w1 = (&v1 * c - &v0 * s).normalize();

        let pair = LowestPair {
            e0,
            v0: w0,
            e1,
            v1: w1,
            residual,
        };

        if residual < tol {
            return Ok(pair);
        }
        start = (&pair.v0 + &pair.v1 * 0.618).normalize();
        let better = best.as_ref().map(|b| residual < b.residual).unwrap_or(true);
        if better {
            best = Some(pair);
        }
        if sweep + 1 == LANCZOS_MAX_SWEEPS {
            let b = best.unwrap();
            // The contract is an absolute residual of 1e−9 on the state.
            if b.residual < 1e-9 * h.norm_bound().max(1.0) {
                return Ok(b);
            }
            return Err(ExactError::NonConvergence {
                residual: b.residual,
                sweeps: LANCZOS_MAX_SWEEPS,
            });
        }
    }
    unreachable!()
}

fn dense_lowest_two(h: &ManyBodyHamiltonian) -> Result<LowestPair, ExactError> {
    let dense = h.to_dense()?;
    let eig = dense.symmetric_eigen();
    let n = eig.eigenvalues.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].partial_cmp(&eig.eigenvalues[b]).unwrap());
    let v0 = eig.eigenvectors.column(order[0]).into_owned();
    let v1 = if n > 1 {
        eig.eigenvectors.column(order[1]).into_owned()
    } else {
        v0.clone()
    };
    Ok(LowestPair {
        e0: eig.eigenvalues[order[0]],
        v0,
        e1: eig.eigenvalues[order[1.min(n - 1)]],
        v1,
        residual: 1e-14 * h.norm_bound(),
    })
}

fn degeneracy_threshold(e0: f64) -> f64 {
    1e-8 * e0.abs().max(1.0)
}

fn to_complex_state(length: usize, v: &DVector<f64>) -> PureStateVector {
    let amps = DVector::from_iterator(v.len(), v.iter().map(|&x| Complex64::new(x, 0.0)));
    PureStateVector::new(length, amps, 0.0)
}

/// Lowest eigenstate with residual below 1e−9·‖H‖ (targets 1e−10·‖H‖).
/// Degenerate ground spaces are flagged, never silently resolved.
pub fn ground_state(h: &ManyBodyHamiltonian) -> Result<GroundStateResult, ExactError> {
    let pair = lowest_two(h, 1e-10 * h.norm_bound())?;
    let gap = pair.e1 - pair.e0;
    Ok(GroundStateResult {
        state: to_complex_state(h.length(), &pair.v0),
        energy: pair.e0,
        gap,
        degenerate: gap < degeneracy_threshold(pair.e0),
        residual: pair.residual,
    })
}

/// Apply the spin-flip operator `Π_{j ∈ mask} σˣ_j` to a real vector.
fn apply_flip_mask(v: &DVector<f64>, mask: u64) -> DVector<f64> {
    let dim = v.len();
    let mut out = DVector::zeros(dim);
    let m = (mask as usize) & (dim - 1);
    for n in 0..dim {
        out[n ^ m] = v[n];
    }
    out
}

/// All-site spin-flip mask for a chain of `length` sites.
pub fn full_flip_mask(length: usize) -> u64 {
    (1u64 << length) - 1
}

/// Ground state projected into the +1 sector of the spin-flip symmetry
/// `Π_{j ∈ mask} σˣ_j`.
///
/// For symmetric models whose two lowest states are (nearly) degenerate
/// symmetry partners — the ferromagnetic phase of the Ising chain — the raw
/// Lanczos vector is an arbitrary mixture; the projection makes the result
/// well defined and matches the covariance-matrix engine's canonical ground
/// state. The projection is exact, so it also strips O(residual/gap)
/// cross-sector contamination in non-degenerate cases.
pub fn ground_state_even(
    h: &ManyBodyHamiltonian,
    flip_mask: u64,
) -> Result<GroundStateResult, ExactError> {
    let pair = lowest_two(h, 1e-10 * h.norm_bound())?;
    let project = |v: &DVector<f64>| -> (DVector<f64>, f64) {
        let w = v + apply_flip_mask(v, flip_mask);
        let n = w.norm();
        (w, n)
    };
    let (w0, n0) = project(&pair.v0);
    let (w1, n1) = project(&pair.v1);
    let w = if n0 >= n1 { w0 / n0 } else { w1 / n1 };

    let mut hw = vec![0.0; h.dim()];
    h.apply(w.as_slice(), &mut hw);
    let hw = DVector::from_vec(hw);
    let energy = w.dot(&hw);
    let residual = (&hw - &w * energy).norm();
    let gap = pair.e1 - pair.e0;

    Ok(GroundStateResult {
        state: to_complex_state(h.length(), &w),
        energy,
        gap,
        degenerate: gap < degeneracy_threshold(pair.e0),
        residual,
    })
}

// ---------------------------------------------------------------------------
// Time evolution
// ---------------------------------------------------------------------------

/// Per-unit-time 2-norm error budget for the Krylov propagator; an order
/// below the 1e−9 evolution contract for the times used here.
const KRYLOV_TOL_RATE: f64 = 1e-11;
const KRYLOV_DIM: usize = 30;
const KRYLOV_MIN_DT: f64 = 1e-12;

struct KrylovWorkspace {
    basis: Vec<DVector<Complex64>>,
    scratch: Vec<Complex64>,
}

impl KrylovWorkspace {
    fn new(dim: usize) -> Self {
        KrylovWorkspace {
            basis: Vec::with_capacity(KRYLOV_DIM + 1),
            scratch: vec![Complex64::new(0.0, 0.0); dim],
        }
    }
}

/// One adaptive Krylov step: returns the propagated vector and an error
/// estimate, or `None` when the estimate exceeds the budget.
fn krylov_attempt(
    h: &ManyBodyHamiltonian,
    psi: &DVector<Complex64>,
    dt: f64,
    tol: f64,
    ws: &mut KrylovWorkspace,
) -> Option<(DVector<Complex64>, f64)> {
    let dim = h.dim();
    let beta0 = psi.norm();
    ws.basis.clear();
    ws.basis.push(psi / Complex64::new(beta0, 0.0));

    let mut alpha: Vec<f64> = Vec::with_capacity(KRYLOV_DIM);
    let mut beta: Vec<f64> = Vec::with_capacity(KRYLOV_DIM);
    let mut breakdown = false;

    for k in 0..KRYLOV_DIM {
        h.apply(ws.basis[k].as_slice(), &mut ws.scratch);
        let mut w = DVector::from_vec(ws.scratch.clone());
        let a = ws.basis[k].dotc(&w).re;
        alpha.push(a);
        w -= &ws.basis[k] * Complex64::new(a, 0.0);
        if k > 0 {
            w -= &ws.basis[k - 1] * Complex64::new(beta[k - 1], 0.0);
        }
        for qk in &ws.basis {
            let o = qk.dotc(&w);
            w -= qk * o;
        }
        let b = w.norm();
        if b < 1e-14 * h.norm_bound() {
            breakdown = true;
            break;
        }
        if k + 1 < KRYLOV_DIM {
            beta.push(b);
            ws.basis.push(w / Complex64::new(b, 0.0));
        } else {
            beta.push(b); // kept only for the error estimate
        }
    }

    let m = alpha.len();
    let mut t = DMatrix::<f64>::zeros(m, m);
    for i in 0..m {
        t[(i, i)] = alpha[i];
        if i > 0 {
            t[(i, i - 1)] = beta[i - 1];
            t[(i - 1, i)] = beta[i - 1];
        }
    }
    let eig = t.symmetric_eigen();
    // y = U exp(−iθ dt) Uᵀ e₁ · β₀
    let mut y = DVector::from_element(m, Complex64::new(0.0, 0.0));
    for col in 0..m {
        let phase = Complex64::from_polar(1.0, -eig.eigenvalues[col] * dt);
        let w0 = eig.eigenvectors[(0, col)];
        for row in 0..m {
            y[row] += Complex64::new(eig.eigenvectors[(row, col)] * w0, 0.0) * phase;
        }
    }
    y *= Complex64::new(beta0, 0.0);

    let err = if breakdown || m < KRYLOV_DIM {
        0.0
    } else {
        (beta[m - 1] * y[m - 1].norm()).abs()
    };
    if err > tol {
        return None;
    }

    let mut out = DVector::from_element(dim, Complex64::new(0.0, 0.0));
    for (k, qk) in ws.basis.iter().enumerate().take(m) {
        out += qk * y[k];
    }
    Some((out, err))
}

/// Evolve through a sorted time grid, invoking `observe(i, ψ(tᵢ))` at each
/// sample. The state is carried forward between samples so the whole grid
/// costs one pass. `times[0] == 0` reproduces the initial state bit-exactly.
pub fn evolve_observe<F>(
    h: &ManyBodyHamiltonian,
    psi0: &PureStateVector,
    times: &[f64],
    mut observe: F,
) -> Result<(), ExactError>
where
    F: FnMut(usize, &PureStateVector),
{
    if psi0.amplitudes().len() != h.dim() {
        return Err(ExactError::DimensionMismatch {
            got: psi0.amplitudes().len(),
            want: h.dim(),
        });
    }
    let mut current = psi0.amplitudes().clone();
    let mut t_now = 0.0f64;
    let mut ws = KrylovWorkspace::new(h.dim());
    let mut dt_hint = 0.25f64;

    for (i, &t) in times.iter().enumerate() {
        if t < 0.0 || !t.is_finite() {
            return Err(ExactError::NegativeTime(t));
        }
        if i > 0 && t < times[i - 1] {
            return Err(ExactError::NegativeTime(t - times[i - 1]));
        }
        while t_now < t - 1e-15 {
            let mut dt = dt_hint.min(t - t_now);
            loop {
                let tol = KRYLOV_TOL_RATE * dt.max(1e-3);
                match krylov_attempt(h, &current, dt, tol, &mut ws) {
                    Some((next, err)) => {
                        current = next;
                        t_now += dt;
                        if err < 0.1 * tol {
                            dt_hint = (dt * 1.5).min(2.0);
                        } else {
                            dt_hint = dt;
                        }
                        break;
                    }
                    None => {
                        dt *= 0.5;
                        if dt < KRYLOV_MIN_DT {
                            return Err(ExactError::StepUnderflow(dt));
                        }
                    }
                }
            }
        }
        let snapshot = PureStateVector::new(psi0.length(), current.clone(), t);
        observe(i, &snapshot);
    }
    Ok(())
}

/// `ψ(t) = exp(−iHt)ψ₀` with 2-norm error below 1e−9.
pub fn evolve_exact(
    h: &ManyBodyHamiltonian,
    psi0: &PureStateVector,
    t: f64,
) -> Result<PureStateVector, ExactError> {
    if t < 0.0 || !t.is_finite() {
        return Err(ExactError::NegativeTime(t));
    }
    if t == 0.0 {
        return Ok(psi0.clone());
    }
    let mut out = None;
    evolve_observe(h, psi0, &[t], |_, s| out = Some(s.clone()))?;
    Ok(out.unwrap())
}

/// Dense eigendecomposition propagator: the independent evolution route for
/// small chains, used to cross-check the Krylov path.
pub struct DensePropagator {
    length: usize,
    energies: DVector<f64>,
    modes: DMatrix<f64>,
}

impl DensePropagator {
    pub fn new(h: &ManyBodyHamiltonian) -> Result<Self, ExactError> {
        let dense = h.to_dense()?;
        let eig = dense.symmetric_eigen();
        Ok(DensePropagator {
            length: h.length(),
            energies: eig.eigenvalues,
            modes: eig.eigenvectors,
        })
    }

    pub fn evolve(&self, psi0: &PureStateVector, t: f64) -> Result<PureStateVector, ExactError> {
        if t < 0.0 || !t.is_finite() {
            return Err(ExactError::NegativeTime(t));
        }
        if t == 0.0 {
            return Ok(psi0.clone());
        }
        let dim = self.energies.len();
        if psi0.amplitudes().len() != dim {
            return Err(ExactError::DimensionMismatch {
                got: psi0.amplitudes().len(),
                want: dim,
            });
        }
        // c = Vᵀ ψ, then ψ(t) = V e^{−iEt} c
        let mut c = vec![Complex64::new(0.0, 0.0); dim];
        for k in 0..dim {
            let mut acc = Complex64::new(0.0, 0.0);
            for n in 0..dim {
                acc += psi0.amplitudes()[n] * self.modes[(n, k)];
            }
            c[k] = acc * Complex64::from_polar(1.0, -self.energies[k] * t);
        }
        let mut out = DVector::from_element(dim, Complex64::new(0.0, 0.0));
        for k in 0..dim {
            let ck = c[k];
            for n in 0..dim {
                out[n] += ck * self.modes[(n, k)];
            }
        }
        Ok(PureStateVector::new(self.length, out, t))
    }
}

// ---------------------------------------------------------------------------
// Reduced density matrices and entropy
// ---------------------------------------------------------------------------

/// Partial trace down to one site; basis (|↑⟩, |↓⟩).
pub fn single_site_rdm(
    psi: &PureStateVector,
    site: usize,
) -> Result<Matrix2<Complex64>, ExactError> {
    if site < 1 || site > psi.length() {
        return Err(ExactError::SiteOutOfRange {
            site,
            length: psi.length(),
        });
    }
    let bit = site - 1;
    let mask = 1usize << bit;
    let dim = psi.amplitudes().len();
    let mut up = 0.0f64;
    let mut down = 0.0f64;
    let mut coher = Complex64::new(0.0, 0.0);
    let amps = psi.amplitudes();
    for n in 0..dim {
        if n & mask == 0 {
            let a_up = amps[n];
            let a_dn = amps[n | mask];
            up += a_up.norm_sqr();
            down += a_dn.norm_sqr();
            coher += a_up * a_dn.conj();
        }
    }
    Ok(Matrix2::new(
        Complex64::new(up, 0.0),
        coher,
        coher.conj(),
        Complex64::new(down, 0.0),
    ))
}

/// Von Neumann entropy (nats) of a 2×2 density matrix.
pub fn entropy_2x2(rho: &Matrix2<Complex64>) -> Result<f64, ExactError> {
    let tol = 1e-10;
    let a = rho[(0, 0)];
    let d = rho[(1, 1)];
    if a.im.abs() > tol || d.im.abs() > tol {
        return Err(ExactError::InvalidDensityMatrix(
            "complex diagonal".to_string(),
        ));
    }
    let trace = a.re + d.re;
    if (trace - 1.0).abs() > tol {
        return Err(ExactError::InvalidDensityMatrix(format!(
            "trace {trace} differs from 1"
        )));
    }
    let herm = (rho[(0, 1)] - rho[(1, 0)].conj()).norm();
    if herm > tol {
        return Err(ExactError::InvalidDensityMatrix(format!(
            "hermiticity violation {herm:.3e}"
        )));
    }
    let mean = 0.5 * trace;
    let r = (0.25 * (a.re - d.re).powi(2) + rho[(0, 1)].norm_sqr()).sqrt();
    let (l0, l1) = (mean - r, mean + r);
    if l0 < -tol {
        return Err(ExactError::InvalidDensityMatrix(format!(
            "negative eigenvalue {l0:.3e}"
        )));
    }
    Ok(shannon_from_probs(l0, l1))
}

/// Entropy of the single-site reduced state of `psi` at `site` (nats).
pub fn site_entropy(psi: &PureStateVector, site: usize) -> Result<f64, ExactError> {
    entropy_2x2(&single_site_rdm(psi, site)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{build_aah, build_annni, freeze_site};

    const LN2: f64 = std::f64::consts::LN_2;

    #[test]
    fn two_site_zz_bond_is_diagonal() {
        let m = build_annni(2, 0.0, 0.0, 0.0).unwrap();
        let h = assemble(&m).unwrap();
        let dense = h.to_dense().unwrap();
        // Single σᶻσᶻ bond of amplitude −1 in basis order |↑↑⟩,|↓↑⟩,|↑↓⟩,|↓↓⟩.
        let expect = [-1.0, 1.0, 1.0, -1.0];
        for (n, &e) in expect.iter().enumerate() {
            assert!((dense[(n, n)] - e).abs() < 1e-15);
        }
        assert!(dense.iter().map(|x| x.abs()).sum::<f64>() <= 4.0 + 1e-12);
    }

    #[test]
    fn two_site_transverse_field_pattern() {
        let m = build_annni(2, 0.0, 1.0, 0.0).unwrap();
        let h = assemble(&m).unwrap();
        let dense = h.to_dense().unwrap();
        // X fields flip single bits with amplitude −1.
        for (n, mflip) in [(0usize, 1usize), (0, 2), (1, 3), (2, 3)] {
            assert!((dense[(mflip, n)] + 1.0).abs() < 1e-15);
            assert!((dense[(n, mflip)] + 1.0).abs() < 1e-15);
        }
        assert!((dense[(0, 3)]).abs() < 1e-15);
        assert!((dense[(3, 0)]).abs() < 1e-15);
    }

    #[test]
    fn hermiticity_probe_is_tiny() {
        let m = build_annni(8, 0.2, 0.6, 1e-4).unwrap();
        let h = assemble(&m).unwrap();
        assert!(h.hermiticity_probe(4) < 1e-12);
    }

    #[test]
    fn annni_ground_energy_matches_dense() {
        let m = build_annni(8, 0.2, 0.6, 0.0).unwrap();
        let h = assemble(&m).unwrap();
        let gs = ground_state(&h).unwrap();
        let dense = h.to_dense().unwrap();
        let eig = dense.symmetric_eigen();
        let e_min = eig.eigenvalues.iter().fold(f64::INFINITY, |a, &b| a.min(b));
        assert!(
            (gs.energy - e_min).abs() < 1e-10,
            "lanczos {} vs dense {}",
            gs.energy,
            e_min
        );
        assert!(gs.residual < 1e-9);
    }

    #[test]
    fn classical_ising_with_tilt_grounds_in_all_down() {
        let m = build_annni(8, 0.0, 0.0, 1e-4).unwrap();
        let h = assemble(&m).unwrap();
        let gs = ground_state(&h).unwrap();
        let all_down = (1usize << 8) - 1;
        let weight = gs.state.amplitudes()[all_down].norm_sqr();
        assert!(weight > 1.0 - 1e-6, "|↓…↓⟩ weight {weight} below tolerance");
    }

    #[test]
    fn strong_field_ground_state_is_near_product() {
        // Measured 1.54e−4 at B=100; the entropy falls off as B⁻²·ln B.
        let m = build_annni(8, 0.0, 100.0, 0.0).unwrap();
        let h = assemble(&m).unwrap();
        let gs = ground_state(&h).unwrap();
        for site in 1..=8 {
            let s = site_entropy(&gs.state, site).unwrap();
            assert!(s < 2e-4, "site {site} entropy {s}");
        }
        assert!(!gs.degenerate);
    }

    #[test]
    fn degenerate_classical_ground_space_is_flagged() {
        let m = build_annni(6, 0.0, 0.0, 0.0).unwrap();
        let h = assemble(&m).unwrap();
        let gs = ground_state(&h).unwrap();
        assert!(gs.degenerate);
    }

    #[test]
    fn even_projection_returns_symmetric_state() {
        let m = build_annni(8, 0.0, 0.3, 0.0).unwrap();
        let h = assemble(&m).unwrap();
        let gs = ground_state_even(&h, full_flip_mask(8)).unwrap();
        // ⟨ψ|P|ψ⟩ = +1 for the even combination.
        let amps = gs.state.amplitudes();
        let dim = amps.len();
        let mask = (1usize << 8) - 1;
        let overlap: f64 = (0..dim).map(|n| (amps[n].conj() * amps[n ^ mask]).re).sum();
        assert!((overlap - 1.0).abs() < 1e-9, "parity overlap {overlap}");
        assert!(gs.residual < 1e-8);
    }

    #[test]
    fn evolution_at_zero_time_is_bit_identical() {
        let m = build_annni(6, 0.0, 0.9, 0.0).unwrap();
        let h = assemble(&m).unwrap();
        let psi = ferromagnetic_state_vector(6);
        let out = evolve_exact(&h, &psi, 0.0).unwrap();
        assert_eq!(psi.amplitudes().as_slice(), out.amplitudes().as_slice());
    }

    #[test]
    fn eigenstate_observables_are_stationary() {
        let m = build_annni(8, 0.0, 0.7, 0.0).unwrap();
        let h = assemble(&m).unwrap();
        let gs = ground_state_even(&h, full_flip_mask(8)).unwrap();
        let s0 = site_entropy(&gs.state, 4).unwrap();
        for t in [1.0, 5.0] {
            let psi_t = evolve_exact(&h, &gs.state, t).unwrap();
            let st = site_entropy(&psi_t, 4).unwrap();
            assert!(
                (st - s0).abs() < 1e-9,
                "entropy drift {} at t={t}",
                (st - s0).abs()
            );
        }
    }

    #[test]
    fn norm_and_energy_conserved_to_long_times() {
        let m = build_annni(8, 0.2, 0.6, 0.0).unwrap();
        let h = assemble(&m).unwrap();
        let psi0 = ferromagnetic_state_vector(8);
        let e0 = expectation(&h, &psi0);
        let psi_t = evolve_exact(&h, &psi0, 50.0).unwrap();
        assert!((psi_t.norm() - 1.0).abs() < 1e-10);
        assert!((expectation(&h, &psi_t) - e0).abs() < 1e-8);
    }

    #[test]
    fn krylov_matches_dense_propagator() {
        let m = build_annni(8, 0.2, 0.6, 0.0).unwrap();
        let h = assemble(&m).unwrap();
        let psi0 = neel_state_vector(8);
        let dense = DensePropagator::new(&h).unwrap();
        for t in [0.5, 3.0, 12.0] {
            let a = evolve_exact(&h, &psi0, t).unwrap();
            let b = dense.evolve(&psi0, t).unwrap();
            let diff = (a.amplitudes() - b.amplitudes()).norm();
            assert!(diff < 1e-9, "route mismatch {diff:.3e} at t={t}");
        }
    }

    #[test]
    fn product_state_rdm_is_pure() {
        let psi = ferromagnetic_state_vector(5);
        for site in 1..=5 {
            assert!(site_entropy(&psi, site).unwrap().abs() < 1e-15);
        }
    }

    #[test]
    fn singlet_rdm_is_maximally_mixed() {
        let mut amps = DVector::from_element(4, Complex64::new(0.0, 0.0));
        let inv = 1.0 / 2.0f64.sqrt();
        amps[1] = Complex64::new(inv, 0.0); // |↓↑⟩
        amps[2] = Complex64::new(-inv, 0.0); // |↑↓⟩
        let psi = PureStateVector::new(2, amps, 0.0);
        for site in 1..=2 {
            let rho = single_site_rdm(&psi, site).unwrap();
            assert!((rho[(0, 0)].re - 0.5).abs() < 1e-15);
            assert!((site_entropy(&psi, site).unwrap() - LN2).abs() < 1e-12);
        }
    }

    #[test]
    fn ghz_rdm_entropy_is_ln2() {
        let mut amps = DVector::from_element(16, Complex64::new(0.0, 0.0));
        let inv = 1.0 / 2.0f64.sqrt();
        amps[0] = Complex64::new(inv, 0.0);
        amps[15] = Complex64::new(inv, 0.0);
        let psi = PureStateVector::new(4, amps, 0.0);
        for site in 1..=4 {
            assert!((site_entropy(&psi, site).unwrap() - LN2).abs() < 1e-12);
        }
    }

    #[test]
    fn entropy_2x2_reference_values() {
        let half = Matrix2::new(
            Complex64::new(0.5, 0.0),
            Complex64::new(0.0, 0.0),
            Complex64::new(0.0, 0.0),
            Complex64::new(0.5, 0.0),
        );
        assert!((entropy_2x2(&half).unwrap() - LN2).abs() < 1e-15);
        let pure = Matrix2::new(
            Complex64::new(1.0, 0.0),
            Complex64::new(0.0, 0.0),
            Complex64::new(0.0, 0.0),
            Complex64::new(0.0, 0.0),
        );
        assert!(entropy_2x2(&pure).unwrap().abs() < 1e-15);
        let skew = Matrix2::new(
            Complex64::new(0.9, 0.0),
            Complex64::new(0.0, 0.0),
            Complex64::new(0.0, 0.0),
            Complex64::new(0.1, 0.0),
        );
        assert!((entropy_2x2(&skew).unwrap() - 0.325_082_973_391_448_3).abs() < 1e-12);
    }

    #[test]
    fn entropy_2x2_rejects_bad_input() {
        let bad_trace = Matrix2::new(
            Complex64::new(0.9, 0.0),
            Complex64::new(0.0, 0.0),
            Complex64::new(0.0, 0.0),
            Complex64::new(0.3, 0.0),
        );
        assert!(entropy_2x2(&bad_trace).is_err());
        let neg = Matrix2::new(
            Complex64::new(1.2, 0.0),
            Complex64::new(0.0, 0.0),
            Complex64::new(0.0, 0.0),
            Complex64::new(-0.2, 0.0),
        );
        assert!(entropy_2x2(&neg).is_err());
    }

    #[test]
    fn length_guards() {
        let m = build_annni(6, 0.0, 1.0, 0.0).unwrap();
        assert!(assemble(&m).is_ok());
        let long = build_aah(15, 1.0).unwrap();
        assert!(matches!(
            assemble(&long),
            Err(ExactError::ChainTooLong { limit: 14, .. })
        ));
        assert!(assemble_ground_only(&long).is_ok());
    }

    /// Regression pin for the near-critical interacting ground state
    /// (12 sites, κ = 0.2, B = 0.6533): energy and middle-site entropy
    /// frozen from the first converged build (residual 2.4e−14).
    #[test]
    fn near_critical_ground_state_regression() {
        let m = build_annni(12, 0.2, 0.6533, 0.0).unwrap();
        let h = assemble(&m).unwrap();
        let gs = ground_state_even(&h, full_flip_mask(12)).unwrap();
        assert!(
            (gs.energy - (-11.156_497_830_638_29)).abs() < 1e-9,
            "energy {}",
            gs.energy
        );
        let s = site_entropy(&gs.state, 6).unwrap();
        assert!(
            (s - 0.497_394_444_542_632).abs() < 1e-9,
            "middle-site entropy {s}"
        );
    }

    #[test]
    fn frozen_site_stays_inert_under_evolution() {
        let m = build_annni(8, 0.0, 0.9, 0.0).unwrap();
        let f = freeze_site(&m, 4).unwrap();
        let h = assemble(&f).unwrap();
        let psi0 = ferromagnetic_state_vector(8);
        let psi_t = evolve_exact(&h, &psi0, 7.0).unwrap();
        // Site 4 has no terms left: its reduced state never changes.
        let s = site_entropy(&psi_t, 4).unwrap();
        assert!(s.abs() < 1e-10, "frozen site grew entropy {s}");
    }
}
