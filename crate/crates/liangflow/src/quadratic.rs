//! Number-conserving free-fermion engine for the quasiperiodic hopping chain.
//!
//! The XX+YY chain with σᶻ fields maps under Jordan-Wigner to free fermions
//! with an L×L single-particle matrix `h`: a bond of amplitude `a` becomes a
//! hopping element `2a`, a σᶻ field of amplitude `a` becomes an on-site
//! energy `−2a` (occupied ↔ spin down). Gaussian states with definite
//! particle number are then fully described by the two-point function
//! `C_{jk} = ⟨c†_j c_k⟩`, which evolves by conjugation with `e^{−iht}` — one
//! eigendecomposition of `h` serves every time sample afterwards.
//!
//! The sign conventions here are pinned by the exact-diagonalization oracle
//! tests below, not by the comments above.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use thiserror::Error;

use crate::model::{ChainModel, ModelSummary, Term};
use crate::util::binary_entropy;

#[derive(Debug, Error)]
pub enum QuadraticError {
    #[error("model contains a term that breaks particle-number conservation: {0}")]
    NotNumberConserving(&'static str),
    #[error("invalid evolution time {0} (must be finite and non-negative)")]
    NegativeTime(f64),
    #[error("dimension mismatch: state has {got} sites, matrix has {want}")]
    DimensionMismatch { got: usize, want: usize },
    #[error("site {site} out of range for {length} sites")]
    SiteOutOfRange { site: usize, length: usize },
    #[error("engine bug: occupation {0} outside [0,1] beyond tolerance")]
    OccupationOutOfRange(f64),
}

/// Single-particle Hamiltonian of a number-conserving chain.
#[derive(Debug, Clone)]
pub struct SingleParticleMatrix {
    h: DMatrix<f64>,
    source: ModelSummary,
}

impl SingleParticleMatrix {
    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.h
    }

    pub fn length(&self) -> usize {
        self.h.nrows()
    }

    pub fn source(&self) -> &ModelSummary {
        &self.source
    }
}

/// Two-point function `C_{jk} = ⟨c†_j c_k⟩` of a Gaussian state.
#[derive(Debug, Clone)]
pub struct CorrelationState {
    c: DMatrix<Complex64>,
    time: f64,
    diagonal: bool,
}

impl CorrelationState {
    pub fn new(c: DMatrix<Complex64>, time: f64) -> Self {
        let n = c.nrows();
        let diagonal = (0..n).all(|j| (0..n).all(|k| j == k || c[(j, k)] == Complex64::ZERO));
        CorrelationState { c, time, diagonal }
    }

    pub fn matrix(&self) -> &DMatrix<Complex64> {
        &self.c
    }

    pub fn length(&self) -> usize {
        self.c.nrows()
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    pub fn trace(&self) -> f64 {
        (0..self.c.nrows()).map(|j| self.c[(j, j)].re).sum()
    }

    pub fn occupation(&self, site: usize) -> f64 {
        self.c[(site - 1, site - 1)].re
    }

    pub fn hermiticity_error(&self) -> f64 {
        let mut worst = 0.0f64;
        for j in 0..self.c.nrows() {
            for k in j..self.c.ncols() {
                worst = worst.max((self.c[(j, k)] - self.c[(k, j)].conj()).norm());
            }
        }
        worst
    }

    /// Max-norm of `C² − C`; zero for Slater-determinant projectors.
    pub fn purity_error(&self) -> f64 {
        let sq = &self.c * &self.c;
        (sq - &self.c).iter().map(|z| z.norm()).fold(0.0, f64::max)
    }
}

/// Compile a number-conserving model to its single-particle matrix.
pub fn compile_u1(model: &ChainModel) -> Result<SingleParticleMatrix, QuadraticError> {
    let l = model.length();
    let mut h = DMatrix::<f64>::zeros(l, l);
    for term in model.terms() {
        match *term {
            Term::XxPlusYy { left, amp } => {
                h[(left - 1, left)] += 2.0 * amp;
                h[(left, left - 1)] += 2.0 * amp;
            }
            Term::FieldZ { site, amp } => {
                h[(site - 1, site - 1)] += -2.0 * amp;
            }
            Term::ZzBond { .. } => {
                return Err(QuadraticError::NotNumberConserving("σᶻσᶻ bond"));
            }
            Term::FieldX { .. } => {
                return Err(QuadraticError::NotNumberConserving("σˣ field"));
            }
        }
    }
    Ok(SingleParticleMatrix {
        h,
        source: ModelSummary::from(model),
    })
}

/// Néel initial state: odd sites occupied, `C = diag(1,0,1,0,…)`, time 0.
pub fn neel_state(length: usize) -> CorrelationState {
    debug_assert!(length >= 2);
    let mut c = DMatrix::from_element(length, length, Complex64::new(0.0, 0.0));
    for site in (1..=length).step_by(2) {
        c[(site - 1, site - 1)] = Complex64::new(1.0, 0.0);
    }
    CorrelationState::new(c, 0.0)
}

/// Spectral propagator for repeated time queries against one Hamiltonian.
///
/// Rows of `h` that vanish identically (frozen sites) are kept out of the
/// eigenproblem and propagate as exact identities, so a frozen site's
/// occupation is constant to the bit.
pub struct U1Propagator {
    length: usize,
    active: Vec<usize>,
    position: Vec<Option<usize>>,
    energies: DVector<f64>,
    modes: DMatrix<f64>,
}

impl U1Propagator {
    pub fn new(sp: &SingleParticleMatrix) -> Self {
        let l = sp.length();
        let h = sp.matrix();
        let mut active = Vec::with_capacity(l);
        let mut position = vec![None; l];
        for j in 0..l {
            let row_zero = (0..l).all(|k| h[(j, k)] == 0.0);
            if !row_zero {
                position[j] = Some(active.len());
                active.push(j);
            }
        }
        let n = active.len();
        let mut sub = DMatrix::<f64>::zeros(n, n);
        for (p, &j) in active.iter().enumerate() {
            for (q, &k) in active.iter().enumerate() {
                sub[(p, q)] = h[(j, k)];
            }
        }
        let eig = sub.symmetric_eigen();
        U1Propagator {
            length: l,
            active,
            position,
            energies: eig.eigenvalues,
            modes: eig.eigenvectors,
        }
    }

    pub fn length(&self) -> usize {
        self.length
    }

    /// Row `j` of `U = e^{−iht}` restricted to the active subspace, split
    /// into real and imaginary parts so the heavy contraction stays in two
    /// real matrix-vector products.
    fn propagator_row(&self, pos: usize, t: f64) -> (DVector<f64>, DVector<f64>) {
        let n = self.active.len();
        let mut g_re = DVector::<f64>::zeros(n);
        let mut g_im = DVector::<f64>::zeros(n);
        for k in 0..n {
            let (s, c) = (-self.energies[k] * t).sin_cos();
            let v = self.modes[(pos, k)];
            g_re[k] = c * v;
            g_im[k] = s * v;
        }
        (&self.modes * g_re, &self.modes * g_im)
    }

    /// `⟨c†_j c_j⟩` at time `c0.time + t`, in O(L²) after setup.
    pub fn occupation(
        &self,
        c0: &CorrelationState,
        site: usize,
        t: f64,
    ) -> Result<f64, QuadraticError> {
        if t < 0.0 || !t.is_finite() {
            return Err(QuadraticError::NegativeTime(t));
        }
        if c0.length() != self.length {
            return Err(QuadraticError::DimensionMismatch {
                got: c0.length(),
                want: self.length,
            });
        }
        if site < 1 || site > self.length {
            return Err(QuadraticError::SiteOutOfRange {
                site,
                length: self.length,
            });
        }
        let j = site - 1;
        let pos = match self.position[j] {
            None => return Ok(c0.matrix()[(j, j)].re),
            Some(p) => p,
        };
        if t == 0.0 {
            return Ok(c0.matrix()[(j, j)].re);
        }
        let (x_re, x_im) = self.propagator_row(pos, t);
        let n = self.active.len();
        if c0.diagonal {
            // p = Σ_l n_l |U_{jl}|²
            let mut p = 0.0f64;
            for l in 0..n {
                let occ = c0.matrix()[(self.active[l], self.active[l])].re;
                if occ != 0.0 {
                    p += occ * (x_re[l] * x_re[l] + x_im[l] * x_im[l]);
                }
            }
            return Ok(p);
        }
        // p = x† C₀ x over the active block, via one complex gemv.
        let mut x_full = DVector::from_element(self.length, Complex64::ZERO);
        for l in 0..n {
            x_full[self.active[l]] = Complex64::new(x_re[l], x_im[l]);
        }
        let w = c0.matrix() * &x_full;
        Ok(x_full.dotc(&w).re)
    }

    /// Full correlation matrix at time `c0.time + t`.
    pub fn evolve(
        &self,
        c0: &CorrelationState,
        t: f64,
    ) -> Result<CorrelationState, QuadraticError> {
        if t < 0.0 || !t.is_finite() {
            return Err(QuadraticError::NegativeTime(t));
        }
        if c0.length() != self.length {
            return Err(QuadraticError::DimensionMismatch {
                got: c0.length(),
                want: self.length,
            });
        }
        if t == 0.0 {
            return Ok(c0.clone());
        }
        let l = self.length;
        let n = self.active.len();
        // U = identity on inert sites, V e^{−iEt} Vᵀ on the active block.
        let mut u = DMatrix::from_element(l, l, Complex64::new(0.0, 0.0));
        for j in 0..l {
            if self.position[j].is_none() {
                u[(j, j)] = Complex64::new(1.0, 0.0);
            }
        }
        for p in 0..n {
            let (x_re, x_im) = self.propagator_row(p, t);
            let j = self.active[p];
            for q in 0..n {
                u[(j, self.active[q])] = Complex64::new(x_re[q], x_im[q]);
            }
        }
        let u_conj = u.map(|z| z.conj());
        let c = &u_conj * c0.matrix() * u_conj.adjoint();
        Ok(CorrelationState::new(c, c0.time + t))
    }
}

/// One-shot evolution; see [`U1Propagator`] for the reusable form.
pub fn evolve_u1(
    sp: &SingleParticleMatrix,
    c0: &CorrelationState,
    t: f64,
) -> Result<CorrelationState, QuadraticError> {
    U1Propagator::new(sp).evolve(c0, t)
}

pub(crate) fn entropy_from_occupation(p: f64) -> Result<f64, QuadraticError> {
    if !(-1e-8..=1.0 + 1e-8).contains(&p) {
        return Err(QuadraticError::OccupationOutOfRange(p));
    }
    Ok(binary_entropy(p.clamp(0.0, 1.0)))
}

/// Single-site von Neumann entropy (nats). With conserved particle number the
/// one-site reduced state is diagonal in occupation, so the entropy is the
/// binary entropy of `Re C_{jj}`.
pub fn site_entropy_u1(c: &CorrelationState, site: usize) -> Result<f64, QuadraticError> {
    if site < 1 || site > c.length() {
        return Err(QuadraticError::SiteOutOfRange {
            site,
            length: c.length(),
        });
    }
    entropy_from_occupation(c.occupation(site))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exact;
    use crate::model::{build_aah, freeze_site};

    const LN2: f64 = std::f64::consts::LN_2;

    #[test]
    fn two_site_hopping_matrix() {
        let m = build_aah(2, 0.0).unwrap();
        let sp = compile_u1(&m).unwrap();
        let h = sp.matrix();
        assert_eq!(h[(0, 1)], 2.0);
        assert_eq!(h[(1, 0)], 2.0);
        assert_eq!(h[(0, 0)], 0.0);
        assert_eq!(h[(1, 1)], 0.0);
    }

    #[test]
    fn frozen_site_leaves_zero_row_and_column() {
        let m = build_aah(6, 1.3).unwrap();
        let f = freeze_site(&m, 3).unwrap();
        let sp = compile_u1(&f).unwrap();
        let h = sp.matrix();
        for k in 0..6 {
            assert_eq!(h[(2, k)], 0.0);
            assert_eq!(h[(k, 2)], 0.0);
        }
        assert_eq!(sp.source().frozen, vec![3]);
    }

    #[test]
    fn rejects_non_number_conserving_models() {
        let m = crate::model::build_annni(4, 0.0, 1.0, 0.0).unwrap();
        assert!(matches!(
            compile_u1(&m),
            Err(QuadraticError::NotNumberConserving(_))
        ));
    }

    /// Convention pin: the free-fermion many-body spectrum built from `h`
    /// must reproduce the exact spin spectrum up to the global constant
    /// Σ_j a_j carried by the σᶻ fields.
    #[test]
    fn many_body_spectrum_matches_exact_diagonalization() {
        let l = 8;
        let m = build_aah(l, 1.0).unwrap();
        let sp = compile_u1(&m).unwrap();
        let eig = sp.matrix().clone().symmetric_eigen();
        let constant: f64 = m
            .terms()
            .iter()
            .filter_map(|t| match t {
                crate::model::Term::FieldZ { amp, .. } => Some(*amp),
                _ => None,
            })
            .sum();

        let mut free: Vec<f64> = (0..1usize << l)
            .map(|subset| {
                let mut e = constant;
                for k in 0..l {
                    if subset >> k & 1 == 1 {
                        e += eig.eigenvalues[k];
                    }
                }
                e
            })
            .collect();
        free.sort_by(|a, b| a.partial_cmp(b).unwrap());

        let h = exact::assemble(&m).unwrap();
        let dense = h.to_dense().unwrap();
        let mut spin: Vec<f64> = dense
            .symmetric_eigen()
            .eigenvalues
            .iter()
            .copied()
            .collect();
        spin.sort_by(|a, b| a.partial_cmp(b).unwrap());

        for (a, b) in free.iter().zip(&spin) {
            assert!((a - b).abs() < 1e-8, "spectrum mismatch {a} vs {b}");
        }
    }

    #[test]
    fn neel_state_shape() {
        let c = neel_state(4);
        for (j, expect) in [1.0, 0.0, 1.0, 0.0].iter().enumerate() {
            assert_eq!(c.matrix()[(j, j)].re, *expect);
        }
        assert_eq!(neel_state(5).trace(), 3.0);
        assert!(neel_state(6).purity_error() < 1e-15);
    }

    #[test]
    fn zero_time_evolution_is_bit_identical() {
        let m = build_aah(6, 2.0).unwrap();
        let sp = compile_u1(&m).unwrap();
        let c0 = neel_state(6);
        let c = evolve_u1(&sp, &c0, 0.0).unwrap();
        assert_eq!(c.matrix().as_slice(), c0.matrix().as_slice());
    }

    #[test]
    fn two_level_rabi_oscillation() {
        // h = [[0,2],[2,0]], C₀ = diag(1,0): site-1 occupation is cos²(2t).
        let m = build_aah(2, 0.0).unwrap();
        let sp = compile_u1(&m).unwrap();
        let prop = U1Propagator::new(&sp);
        let mut c0 = neel_state(2);
        c0.time = 0.0;
        for t in [0.1, 0.7, 1.9, 4.3] {
            let p = prop.occupation(&c0, 1, t).unwrap();
            let expect = (2.0 * t).cos().powi(2);
            assert!((p - expect).abs() < 1e-12, "p({t}) = {p} vs {expect}");
        }
    }

    #[test]
    fn entropies_match_exact_engine() {
        let l = 8;
        let m = build_aah(l, 1.0).unwrap();
        let sp = compile_u1(&m).unwrap();
        let prop = U1Propagator::new(&sp);
        let c0 = neel_state(l);

        let h = exact::assemble(&m).unwrap();
        let psi0 = exact::neel_state_vector(l);
        let times = [0.5, 1.0, 5.0, 10.0];
        let mut exact_entropies = vec![vec![0.0; l]; times.len()];
        exact::evolve_observe(&h, &psi0, &times, |i, psi| {
            for site in 1..=l {
                exact_entropies[i][site - 1] = exact::site_entropy(psi, site).unwrap();
            }
        })
        .unwrap();

        for (i, &t) in times.iter().enumerate() {
            for site in 1..=l {
                let p = prop.occupation(&c0, site, t).unwrap();
                let s = entropy_from_occupation(p).unwrap();
                let reference = exact_entropies[i][site - 1];
                assert!(
                    (s - reference).abs() < 1e-8,
                    "site {site} t {t}: {s} vs {reference}"
                );
            }
        }
    }

    #[test]
    fn conserved_quantities_under_evolution() {
        let m = build_aah(10, 2.5).unwrap();
        let sp = compile_u1(&m).unwrap();
        let prop = U1Propagator::new(&sp);
        let c0 = neel_state(10);
        for t in [0.3, 2.0, 17.0] {
            let c = prop.evolve(&c0, t).unwrap();
            assert!((c.trace() - c0.trace()).abs() < 1e-10, "trace drift at {t}");
            assert!(c.hermiticity_error() < 1e-12);
            assert!(
                c.purity_error() < 1e-9,
                "purity {} at {t}",
                c.purity_error()
            );
        }
    }

    #[test]
    fn frozen_site_occupation_is_constant_to_the_bit() {
        let m = build_aah(7, 1.7).unwrap();
        let f = freeze_site(&m, 4).unwrap();
        let sp = compile_u1(&f).unwrap();
        let prop = U1Propagator::new(&sp);
        let c0 = neel_state(7);
        let p0 = c0.matrix()[(3, 3)].re;
        for t in [0.5, 3.0, 42.0] {
            let p = prop.occupation(&c0, 4, t).unwrap();
            assert_eq!(p, p0);
        }
    }

    #[test]
    fn entropy_reference_values() {
        assert!((entropy_from_occupation(0.5).unwrap() - LN2).abs() < 1e-15);
        assert_eq!(entropy_from_occupation(0.0).unwrap(), 0.0);
        assert!((entropy_from_occupation(0.1).unwrap() - 0.325_082_973_391_448_3).abs() < 1e-12);
    }

    #[test]
    fn occupation_guard_distinguishes_roundoff_from_bugs() {
        assert!(entropy_from_occupation(1.0 + 5e-9).is_ok());
        assert!(entropy_from_occupation(-5e-9).is_ok());
        assert!(matches!(
            entropy_from_occupation(1.1),
            Err(QuadraticError::OccupationOutOfRange(_))
        ));
    }
}
