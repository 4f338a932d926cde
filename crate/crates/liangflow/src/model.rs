//! Symbolic chain Hamiltonians and the frozen-site intervention.
//!
//! A [`ChainModel`] is a term list over a 1D open chain; every engine in this
//! crate compiles from it. **Sites are 1-based**: the quasiperiodic field of
//! the hopping chain is `(λ/2)·cos(2πβj)` evaluated at `j = 1, …, L`, so an
//! off-by-one in the site index changes the physics, not just the labels.
//!
//! Freezing a site removes every bond that touches it and its local fields,
//! leaving the site in the lattice as an inert spectator. With only
//! nearest-neighbor bonds this breaks the chain in two; a next-nearest-neighbor
//! coupling keeps the remainder connected.

use thiserror::Error;

/// Inverse golden ratio β = (√5 − 1)/2, the standard quasiperiodic frequency.
pub const INV_GOLDEN_RATIO: f64 = 0.618_033_988_749_894_9;

/// Default longitudinal tilt used to lift ground-state degeneracy in
/// exact-diagonalization runs at small transverse field.
pub const DEFAULT_TILT: f64 = 1e-4;

#[derive(Debug, Error, PartialEq)]
pub enum ModelError {
    #[error("chain length {0} too small (need at least {1} sites)")]
    LengthTooSmall(usize, usize),
    #[error("parameter `{0}` is not finite")]
    NonFinite(&'static str),
    #[error("parameter `{0}` must be non-negative, got {1}")]
    Negative(&'static str, f64),
    #[error("next-nearest-neighbor strength must lie in [0, 0.5), got {0}")]
    KappaOutOfRange(f64),
    #[error("site {site} out of range for chain of length {length}")]
    SiteOutOfRange { site: usize, length: usize },
    #[error("multi-site frozen regions are not supported (got {0} sites)")]
    MultiSiteFreeze(usize),
}

/// One additive term of a chain Hamiltonian. Site indices are 1-based.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Term {
    /// `amp · (σˣ_j σˣ_{j+1} + σʸ_j σʸ_{j+1})` on the bond `(left, left+1)`.
    XxPlusYy { left: usize, amp: f64 },
    /// `amp · σᶻ_i σᶻ_j` with `|i − j| ≤ 2`.
    ZzBond { i: usize, j: usize, amp: f64 },
    /// `amp · σˣ_site` (transverse field).
    FieldX { site: usize, amp: f64 },
    /// `amp · σᶻ_site` (longitudinal field).
    FieldZ { site: usize, amp: f64 },
}

impl Term {
    /// Sites the term acts on.
    pub fn support(&self) -> [Option<usize>; 2] {
        match *self {
            Term::XxPlusYy { left, .. } => [Some(left), Some(left + 1)],
            Term::ZzBond { i, j, .. } => [Some(i), Some(j)],
            Term::FieldX { site, .. } => [Some(site), None],
            Term::FieldZ { site, .. } => [Some(site), None],
        }
    }

    pub fn touches(&self, site: usize) -> bool {
        self.support().iter().flatten().any(|&s| s == site)
    }

    pub fn amp(&self) -> f64 {
        match *self {
            Term::XxPlusYy { amp, .. }
            | Term::ZzBond { amp, .. }
            | Term::FieldX { amp, .. }
            | Term::FieldZ { amp, .. } => amp,
        }
    }
}

/// Which family a model belongs to; engines use this for compatibility checks.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelKind {
    /// Quasiperiodic hopping chain (XX+YY bonds + σᶻ fields).
    Aah,
    /// Ising chain with transverse field and optional next-nearest coupling.
    Annni,
}

/// Named parameters a model was built from, kept for provenance and reporting.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ModelParams {
    Aah { lambda: f64, beta: f64 },
    Annni { kappa: f64, field: f64, tilt: f64 },
}

/// A spin-1/2 chain Hamiltonian on `length` sites with open boundaries.
///
/// Immutable after construction; safe to share across parallel workers.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainModel {
    length: usize,
    kind: ModelKind,
    params: ModelParams,
    terms: Vec<Term>,
    frozen: Vec<usize>,
}

impl ChainModel {
    pub fn length(&self) -> usize {
        self.length
    }

    pub fn kind(&self) -> ModelKind {
        self.kind
    }

    pub fn params(&self) -> ModelParams {
        self.params
    }

    pub fn terms(&self) -> &[Term] {
        &self.terms
    }

    /// Sites frozen so far, ascending.
    pub fn frozen_sites(&self) -> &[usize] {
        &self.frozen
    }

    pub fn is_frozen(&self, site: usize) -> bool {
        self.frozen.binary_search(&site).is_ok()
    }

    /// True when no term breaks the global spin-flip symmetry `Π_j σˣ_j`
    /// (no longitudinal fields).
    pub fn is_parity_symmetric(&self) -> bool {
        !self
            .terms
            .iter()
            .any(|t| matches!(t, Term::FieldZ { amp, .. } if *amp != 0.0))
    }

    fn check_site(&self, site: usize) -> Result<(), ModelError> {
        if site < 1 || site > self.length {
            return Err(ModelError::SiteOutOfRange {
                site,
                length: self.length,
            });
        }
        Ok(())
    }
}

/// Lightweight provenance record carried by compiled engine objects.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelSummary {
    pub kind: ModelKind,
    pub length: usize,
    pub params: ModelParams,
    pub frozen: Vec<usize>,
}

impl From<&ChainModel> for ModelSummary {
    fn from(m: &ChainModel) -> Self {
        ModelSummary {
            kind: m.kind,
            length: m.length,
            params: m.params,
            frozen: m.frozen.clone(),
        }
    }
}

/// A set of sites to freeze. Operations currently accept exactly one site;
/// the set representation leaves room for multi-site interventions later.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FrozenMask {
    sites: Vec<usize>,
}

impl FrozenMask {
    pub fn single(site: usize) -> Self {
        FrozenMask { sites: vec![site] }
    }

    pub fn sites(&self) -> &[usize] {
        &self.sites
    }
}

/// Quasiperiodic hopping chain with default frequency β = (√5 − 1)/2.
///
/// XX+YY bonds of amplitude 1 on all nearest-neighbor pairs and a σᶻ field
/// of amplitude `(λ/2)·cos(2πβj)` on site `j` (the 1/2 spin-normalization
/// prefactor lives in the field amplitude).
pub fn build_aah(length: usize, lambda: f64) -> Result<ChainModel, ModelError> {
    build_aah_with_freq(length, lambda, INV_GOLDEN_RATIO)
}

/// Same as [`build_aah`] with an explicit quasiperiodic frequency.
pub fn build_aah_with_freq(
    length: usize,
    lambda: f64,
    beta: f64,
) -> Result<ChainModel, ModelError> {
    if length < 2 {
        return Err(ModelError::LengthTooSmall(length, 2));
    }
    if !lambda.is_finite() {
        return Err(ModelError::NonFinite("lambda"));
    }
    if lambda < 0.0 {
        return Err(ModelError::Negative("lambda", lambda));
    }
    if !beta.is_finite() {
        return Err(ModelError::NonFinite("beta"));
    }

    let mut terms = Vec::with_capacity(2 * length - 1);
    for left in 1..length {
        terms.push(Term::XxPlusYy { left, amp: 1.0 });
    }
    for site in 1..=length {
        let amp = 0.5 * lambda * (std::f64::consts::TAU * beta * site as f64).cos();
        terms.push(Term::FieldZ { site, amp });
    }

    Ok(ChainModel {
        length,
        kind: ModelKind::Aah,
        params: ModelParams::Aah { lambda, beta },
        terms,
        frozen: Vec::new(),
    })
}

/// Ising chain with next-nearest-neighbor coupling `kappa`, transverse field
/// `field` and optional longitudinal tilt `tilt`.
///
/// Terms: nearest-neighbor σᶻσᶻ bonds of amplitude −1, next-nearest σᶻσᶻ
/// bonds of amplitude +`kappa` (only when `kappa ≠ 0`), σˣ fields of
/// amplitude −`field` on every site, and σᶻ fields of amplitude `tilt` on
/// every site when `tilt > 0`.
pub fn build_annni(
    length: usize,
    kappa: f64,
    field: f64,
    tilt: f64,
) -> Result<ChainModel, ModelError> {
    let min_len = if kappa != 0.0 { 3 } else { 2 };
    if length < min_len {
        return Err(ModelError::LengthTooSmall(length, min_len));
    }
    for (name, v) in [("kappa", kappa), ("field", field), ("tilt", tilt)] {
        if !v.is_finite() {
            return Err(ModelError::NonFinite(name));
        }
    }
    if !(0.0..0.5).contains(&kappa) {
        return Err(ModelError::KappaOutOfRange(kappa));
    }
    if field < 0.0 {
        return Err(ModelError::Negative("field", field));
    }
    if tilt < 0.0 {
        return Err(ModelError::Negative("tilt", tilt));
    }

    let mut terms = Vec::new();
    for i in 1..length {
        terms.push(Term::ZzBond {
            i,
            j: i + 1,
            amp: -1.0,
        });
    }
    if kappa != 0.0 {
        for i in 1..(length - 1) {
            terms.push(Term::ZzBond {
                i,
                j: i + 2,
                amp: kappa,
            });
        }
    }
    for site in 1..=length {
        terms.push(Term::FieldX { site, amp: -field });
    }
    if tilt > 0.0 {
        for site in 1..=length {
            terms.push(Term::FieldZ { site, amp: tilt });
        }
    }

    Ok(ChainModel {
        length,
        kind: ModelKind::Annni,
        params: ModelParams::Annni { kappa, field, tilt },
        terms,
        frozen: Vec::new(),
    })
}

/// Remove every term touching the masked site, fields included.
///
/// The site count is unchanged: the frozen site stays in the lattice as an
/// inert spectator so that site indexing and reduced states stay comparable
/// between frozen and unfrozen runs. Idempotent.
pub fn freeze(model: &ChainModel, mask: &FrozenMask) -> Result<ChainModel, ModelError> {
    if mask.sites().len() != 1 {
        return Err(ModelError::MultiSiteFreeze(mask.sites().len()));
    }
    let site = mask.sites()[0];
    model.check_site(site)?;

    let terms = model
        .terms
        .iter()
        .copied()
        .filter(|t| !t.touches(site))
        .collect();
    let mut frozen = model.frozen.clone();
    if let Err(pos) = frozen.binary_search(&site) {
        frozen.insert(pos, site);
    }

    Ok(ChainModel {
        length: model.length,
        kind: model.kind,
        params: model.params,
        terms,
        frozen,
    })
}

/// Convenience wrapper for the common single-site case.
pub fn freeze_site(model: &ChainModel, site: usize) -> Result<ChainModel, ModelError> {
    freeze(model, &FrozenMask::single(site))
}

/// Frozen-site placement rule for quasiperiodic chains: one past the largest
/// Fibonacci number below `length`, clamped into the interior. For Fibonacci
/// `length` this sits at the previous Fibonacci number + 1 (e.g. 1598 for a
/// 2584-site chain), which minimizes finite-size effects.
pub fn fibonacci_frozen_site(length: usize) -> Result<usize, ModelError> {
    if length < 3 {
        return Err(ModelError::LengthTooSmall(length, 3));
    }
    let (mut a, mut b) = (1usize, 1usize);
    while b < length {
        let next = a + b;
        a = b;
        b = next;
    }
    // `a` is now the largest Fibonacci number strictly below `length`
    // (the sequence passes through every Fibonacci number ≥ 1).
    Ok((a + 1).min(length - 1))
}

/// Residual of the ferromagnet–paramagnet critical line
/// `1 − 2κ = B − B²·κ/(2 − 2κ)`; zero on the line.
pub fn critical_line_residual(kappa: f64, field: f64) -> f64 {
    (1.0 - 2.0 * kappa) - (field - field * field * kappa / (2.0 - 2.0 * kappa))
}

/// Critical transverse field `B_c(κ)` on the branch continuously connected to
/// `B_c(0) = 1`: the smaller positive root of the critical-line quadratic.
///
/// Evaluated in the cancellation-free form `2(1 − 2κ) / (1 + √D)` with
/// `D = 1 − 2κ(1 − 2κ)/(1 − κ)`, which is exact at κ = 0.
pub fn critical_field(kappa: f64) -> Result<f64, ModelError> {
    if !kappa.is_finite() {
        return Err(ModelError::NonFinite("kappa"));
    }
    if !(0.0..0.5).contains(&kappa) {
        return Err(ModelError::KappaOutOfRange(kappa));
    }
    let disc = 1.0 - 2.0 * kappa * (1.0 - 2.0 * kappa) / (1.0 - kappa);
    Ok(2.0 * (1.0 - 2.0 * kappa) / (1.0 + disc.sqrt()))
}

/// A point on the critical line, validated against the defining equation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CriticalPoint {
    pub kappa: f64,
    pub field: f64,
}

impl CriticalPoint {
    /// The critical point at a given `kappa`; residual below 1e−12 by
    /// construction.
    pub fn on_line(kappa: f64) -> Result<Self, ModelError> {
        let field = critical_field(kappa)?;
        debug_assert!(critical_line_residual(kappa, field).abs() < 1e-12);
        Ok(CriticalPoint { kappa, field })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn aah_zero_coupling_has_bonds_and_zero_fields() {
        let m = build_aah(3, 0.0).unwrap();
        let bonds = m
            .terms()
            .iter()
            .filter(|t| matches!(t, Term::XxPlusYy { .. }))
            .count();
        assert_eq!(bonds, 2);
        for t in m.terms() {
            if let Term::FieldZ { amp, .. } = t {
                assert_eq!(*amp, 0.0);
            }
        }
    }

    #[test]
    fn aah_field_on_first_site_matches_direct_evaluation() {
        let lambda = 2.0;
        let m = build_aah(2584, lambda).unwrap();
        let amp = m
            .terms()
            .iter()
            .find_map(|t| match t {
                Term::FieldZ { site: 1, amp } => Some(*amp),
                _ => None,
            })
            .unwrap();
        // Independent evaluation of (λ/2)·cos(2πβ·1); cos(2πβ) ≈ −0.7374.
        let expected = 0.5 * lambda * (std::f64::consts::TAU * INV_GOLDEN_RATIO).cos();
        assert!((amp - expected).abs() < 1e-15);
        assert!((amp / lambda + 0.7374 / 2.0).abs() < 1e-4);
    }

    #[test]
    fn aah_sites_are_one_based() {
        let m = build_aah(5, 1.0).unwrap();
        let field = |site: usize| {
            m.terms()
                .iter()
                .find_map(|t| match t {
                    Term::FieldZ { site: s, amp } if *s == site => Some(*amp),
                    _ => None,
                })
                .unwrap()
        };
        let at_5 = 0.5 * (std::f64::consts::TAU * INV_GOLDEN_RATIO * 5.0).cos();
        let at_0 = 0.5; // cos(0)/2, the off-by-one value
        assert!((field(5) - at_5).abs() < 1e-15);
        assert!((field(5) - at_0).abs() > 1e-2);
    }

    #[test]
    fn aah_rejects_bad_input() {
        assert!(matches!(
            build_aah(1, 1.0),
            Err(ModelError::LengthTooSmall(1, 2))
        ));
        assert!(matches!(
            build_aah(4, f64::NAN),
            Err(ModelError::NonFinite("lambda"))
        ));
    }

    #[test]
    fn annni_term_counting() {
        let m = build_annni(4, 0.0, 1.0, 0.0).unwrap();
        let nn = m
            .terms()
            .iter()
            .filter(|t| matches!(t, Term::ZzBond { i, j, .. } if j - i == 1))
            .count();
        let nnn = m
            .terms()
            .iter()
            .filter(|t| matches!(t, Term::ZzBond { i, j, .. } if j - i == 2))
            .count();
        let x = m
            .terms()
            .iter()
            .filter(|t| matches!(t, Term::FieldX { .. }))
            .count();
        assert_eq!((nn, nnn, x), (3, 0, 4));
    }

    #[test]
    fn annni_next_nearest_family() {
        let m = build_annni(50, 0.4, 0.2, 0.0).unwrap();
        let nnn_amps: Vec<f64> = m
            .terms()
            .iter()
            .filter_map(|t| match t {
                Term::ZzBond { i, j, amp } if j - i == 2 => Some(*amp),
                _ => None,
            })
            .collect();
        assert_eq!(nnn_amps.len(), 48);
        assert!(nnn_amps.iter().all(|&a| a == 0.4));
        let x_amps: Vec<f64> = m
            .terms()
            .iter()
            .filter_map(|t| match t {
                Term::FieldX { amp, .. } => Some(*amp),
                _ => None,
            })
            .collect();
        assert!(x_amps.iter().all(|&a| a == -0.2));
    }

    #[test]
    fn annni_tilt_present_when_requested() {
        let m = build_annni(12, 0.2, 0.05, 1e-4).unwrap();
        let z = m
            .terms()
            .iter()
            .filter(|t| matches!(t, Term::FieldZ { amp, .. } if *amp == 1e-4))
            .count();
        assert_eq!(z, 12);
        assert!(!m.is_parity_symmetric());
        assert!(build_annni(12, 0.2, 0.05, 0.0)
            .unwrap()
            .is_parity_symmetric());
    }

    #[test]
    fn annni_rejects_kappa_outside_domain() {
        assert!(matches!(
            build_annni(8, 0.5, 1.0, 0.0),
            Err(ModelError::KappaOutOfRange(_))
        ));
        assert!(matches!(
            build_annni(8, -0.1, 1.0, 0.0),
            Err(ModelError::KappaOutOfRange(_))
        ));
    }

    #[test]
    fn freeze_interior_site_splits_nn_chain() {
        let m = build_annni(6, 0.0, 0.7, 0.0).unwrap();
        let f = freeze_site(&m, 3).unwrap();
        assert!(f.terms().iter().all(|t| !t.touches(3)));
        // No bond crosses site 3: sites {1,2} and {4,5,6} are disconnected.
        let crossing = f.terms().iter().any(|t| {
            let s = t.support();
            matches!(s, [Some(i), Some(j)] if (i < 3) != (j < 3))
        });
        assert!(!crossing);
        assert_eq!(f.length(), m.length());
    }

    #[test]
    fn freeze_keeps_nnn_chain_connected() {
        let m = build_annni(6, 0.3, 0.7, 0.0).unwrap();
        let f = freeze_site(&m, 3).unwrap();
        // A next-nearest bond (2,4) must survive and bridge the cut.
        let bridge = f
            .terms()
            .iter()
            .any(|t| matches!(t, Term::ZzBond { i: 2, j: 4, .. }));
        assert!(bridge);
    }

    #[test]
    fn freeze_is_idempotent() {
        let m = build_aah(8, 1.3).unwrap();
        let once = freeze_site(&m, 4).unwrap();
        let twice = freeze_site(&once, 4).unwrap();
        assert_eq!(once, twice);
    }

    #[test]
    fn freeze_rejects_out_of_range() {
        let m = build_aah(8, 1.3).unwrap();
        assert!(matches!(
            freeze_site(&m, 0),
            Err(ModelError::SiteOutOfRange { .. })
        ));
        assert!(matches!(
            freeze_site(&m, 9),
            Err(ModelError::SiteOutOfRange { .. })
        ));
    }

    #[test]
    fn fibonacci_rule_examples() {
        assert_eq!(fibonacci_frozen_site(2584).unwrap(), 1598);
        assert_eq!(fibonacci_frozen_site(610).unwrap(), 378);
        assert_eq!(fibonacci_frozen_site(5).unwrap(), 4);
    }

    #[test]
    fn fibonacci_rule_stays_interior() {
        for l in 3..3000 {
            let s = fibonacci_frozen_site(l).unwrap();
            assert!(s >= 1 && s < l, "site {s} not interior for L={l}");
        }
        assert!(fibonacci_frozen_site(2).is_err());
    }

    #[test]
    fn critical_field_at_zero_kappa_is_exactly_one() {
        assert_eq!(critical_field(0.0).unwrap(), 1.0);
    }

    #[test]
    fn critical_field_known_roots() {
        // Smaller roots of B² − 8B + 4.8 = 0 and B² − 3B + 0.6 = 0,
        // frozen from 4 − √11.2 and (3 − √6.6)/2.
        let b02 = critical_field(0.2).unwrap();
        assert!(
            (b02 - 0.653_359_893_863_697_7).abs() < 1e-12,
            "B_c(0.2) = {b02}"
        );
        assert!((b02 - (4.0 - 11.2f64.sqrt())).abs() < 1e-12);
        let b04 = critical_field(0.4).unwrap();
        assert!(
            (b04 - 0.215_476_742_133_487_1).abs() < 1e-12,
            "B_c(0.4) = {b04}"
        );
        assert!((b04 - (3.0 - 6.6f64.sqrt()) / 2.0).abs() < 1e-12);
    }

    #[test]
    fn critical_field_rejects_half() {
        assert!(critical_field(0.5).is_err());
    }

    #[test]
    fn critical_point_type_checks_residual() {
        let cp = CriticalPoint::on_line(0.3).unwrap();
        assert!(critical_line_residual(cp.kappa, cp.field).abs() < 1e-12);
        assert!(cp.field > 0.0 && cp.kappa < 0.5);
    }

    proptest! {
        #[test]
        fn frozen_model_has_no_support_on_site(
            l in 4usize..40,
            lambda in 0.0f64..4.0,
            seed in 0usize..1000,
        ) {
            let m = build_aah(l, lambda).unwrap();
            let b = 2 + seed % (l - 2);
            let f = freeze_site(&m, b).unwrap();
            prop_assert!(f.terms().iter().all(|t| !t.touches(b)));
            // Every surviving term appears verbatim in the original.
            for t in f.terms() {
                prop_assert!(m.terms().contains(t));
            }
            let removed = m.terms().iter().filter(|t| t.touches(b)).count();
            prop_assert_eq!(f.terms().len() + removed, m.terms().len());
        }

        #[test]
        fn critical_line_residual_vanishes(kappa in 0.0f64..0.49) {
            let b = critical_field(kappa).unwrap();
            prop_assert!(critical_line_residual(kappa, b).abs() < 1e-12);
            prop_assert!(b > 0.0 && b <= 1.0);
        }

        #[test]
        fn aah_field_amplitudes_bounded(l in 2usize..200, lambda in 0.0f64..6.0) {
            let m = build_aah(l, lambda).unwrap();
            for t in m.terms() {
                if let Term::FieldZ { amp, .. } = t {
                    prop_assert!(amp.abs() <= 0.5 * lambda + 1e-15);
                }
            }
        }
    }
}
