//! Cumulative and instantaneous Liang information flow.
//!
//! Every flow value is the difference of two single-site entropies taken
//! from the *same* initial state: one evolved under the full Hamiltonian,
//! one under the Hamiltonian with the source site frozen. Series are stored
//! signed; absolute values are applied at presentation time.
//!
//! A [`FlowContext`] compiles the frozen/unfrozen Hamiltonian pair once and
//! shares the spectral decomposition (or the Krylov trajectory) across all
//! requested targets and sample times.

use thiserror::Error;

use crate::bdg::{self, BdgError, BdgPropagator, CovarianceState};
use crate::exact::{self, ExactError, ManyBodyHamiltonian, PureStateVector};
use crate::model::{freeze_site, ChainModel, ModelError, ModelParams};
use crate::quadratic::{self, QuadraticError, U1Propagator};

#[derive(Debug, Error)]
pub enum LiangError {
    #[error("target site equals the frozen site ({0})")]
    TargetEqualsFrozen(usize),
    #[error("site {site} out of range for {length} sites")]
    SiteOutOfRange { site: usize, length: usize },
    #[error("initial state `{init}` is not representable on the {engine} engine: {why}")]
    IncompatibleInit {
        init: &'static str,
        engine: &'static str,
        why: &'static str,
    },
    #[error("operation not supported on the {0} engine")]
    UnsupportedEngine(&'static str),
    #[error("sample times must be non-empty, sorted and non-negative")]
    BadTimeGrid,
    #[error("degenerate ground state; lift the degeneracy with a longitudinal tilt")]
    DegenerateGroundState,
    #[error("initial-state model must have {want} sites, got {got}")]
    InitLengthMismatch { got: usize, want: usize },
    #[error("window [{0}, {1}] contains no samples")]
    EmptyWindow(f64, f64),
    #[error("window [{t0}, {t1}] holds only {count} samples; at least {min} required")]
    TooFewSamples {
        t0: f64,
        t1: f64,
        count: usize,
        min: usize,
    },
    #[error("instantaneous flow needs t ≥ δt, got t = {t}, δt = {dt}")]
    TimeBelowStep { t: f64, dt: f64 },
    #[error("step δt must be positive, got {0}")]
    BadStep(f64),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Quadratic(#[from] QuadraticError),
    #[error(transparent)]
    Bdg(#[from] BdgError),
    #[error(transparent)]
    Exact(#[from] ExactError),
}

/// Which simulation backend computes the entropies.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EngineKind {
    Quadratic,
    Bdg,
    Exact,
}

impl EngineKind {
    pub fn name(self) -> &'static str {
        match self {
            EngineKind::Quadratic => "quadratic",
            EngineKind::Bdg => "bdg",
            EngineKind::Exact => "exact",
        }
    }
}

/// Initial state of both runs of a flow computation.
#[derive(Debug, Clone, PartialEq)]
pub enum InitialState {
    /// Alternating `|↓↑↓↑…⟩` (odd sites carry a fermion).
    Neel,
    /// Fully polarized `|↓↓…↓⟩`.
    Ferromagnetic,
    /// Ground state of the unfrozen run's own Hamiltonian.
    GroundState,
    /// Ground state of a different Hamiltonian (a quench).
    GroundStateOf(Box<ChainModel>),
}

impl InitialState {
    fn name(&self) -> &'static str {
        match self {
            InitialState::Neel => "neel",
            InitialState::Ferromagnetic => "ferromagnetic",
            InitialState::GroundState => "ground_state",
            InitialState::GroundStateOf(_) => "ground_state_of",
        }
    }
}

/// Sampled cumulative flow `𝕋_d(t)` for one (frozen, target) pair.
#[derive(Debug, Clone)]
pub struct FlowSeries {
    pub frozen_site: usize,
    pub target: usize,
    pub distance: usize,
    pub times: Vec<f64>,
    /// Signed values `S_unfrozen(a, t) − S_frozen(a, t)` in nats.
    pub values: Vec<f64>,
    pub engine: EngineKind,
    pub params: ModelParams,
    /// Set when the initial ground state sat in a degenerate manifold.
    pub init_degenerate: bool,
}

impl FlowSeries {
    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |a, v| a.max(v.abs()))
    }

    /// Value at the sample closest to `t`.
    pub fn value_at(&self, t: f64) -> f64 {
        let mut best = 0usize;
        let mut dist = f64::INFINITY;
        for (i, &ti) in self.times.iter().enumerate() {
            let d = (ti - t).abs();
            if d < dist {
                dist = d;
                best = i;
            }
        }
        self.values[best]
    }
}

enum Prepared {
    Quadratic {
        prop_unfrozen: U1Propagator,
        prop_frozen: U1Propagator,
        c0: quadratic::CorrelationState,
    },
    Bdg {
        prop_unfrozen: BdgPropagator,
        prop_frozen: BdgPropagator,
        m0: CovarianceState,
    },
    Exact {
        h_unfrozen: ManyBodyHamiltonian,
        h_frozen: ManyBodyHamiltonian,
        psi0: PureStateVector,
    },
}

/// A compiled frozen/unfrozen pair ready for repeated target and time queries.
pub struct FlowContext {
    length: usize,
    frozen_site: usize,
    engine: EngineKind,
    params: ModelParams,
    init_degenerate: bool,
    prepared: Prepared,
}

fn exact_ground_state(model: &ChainModel) -> Result<(PureStateVector, bool), LiangError> {
    let h = exact::assemble(model)?;
    if model.is_parity_symmetric() {
        let gs = exact::ground_state_even(&h, exact::full_flip_mask(model.length()))?;
        Ok((gs.state, gs.degenerate))
    } else {
        let gs = exact::ground_state(&h)?;
        if gs.degenerate {
            return Err(LiangError::DegenerateGroundState);
        }
        Ok((gs.state, false))
    }
}

impl FlowContext {
    /// Compile both Hamiltonians and build the shared initial state.
    pub fn prepare(
        model: &ChainModel,
        init: &InitialState,
        frozen_site: usize,
        engine: EngineKind,
    ) -> Result<Self, LiangError> {
        let length = model.length();
        if frozen_site < 1 || frozen_site > length {
            return Err(LiangError::SiteOutOfRange {
                site: frozen_site,
                length,
            });
        }
        let frozen_model = freeze_site(model, frozen_site)?;
        let mut init_degenerate = false;

        let prepared = match engine {
            EngineKind::Quadratic => {
                if !matches!(init, InitialState::Neel) {
                    return Err(LiangError::IncompatibleInit {
                        init: init.name(),
                        engine: "quadratic",
                        why: "the number-conserving engine evolves the Néel correlation matrix",
                    });
                }
                Prepared::Quadratic {
                    prop_unfrozen: U1Propagator::new(&quadratic::compile_u1(model)?),
                    prop_frozen: U1Propagator::new(&quadratic::compile_u1(&frozen_model)?),
                    c0: quadratic::neel_state(length),
                }
            }
            EngineKind::Bdg => {
                let init_model = match init {
                    InitialState::GroundState => model,
                    InitialState::GroundStateOf(m) => {
                        if m.length() != length {
                            return Err(LiangError::InitLengthMismatch {
                                got: m.length(),
                                want: length,
                            });
                        }
                        m.as_ref()
                    }
                    _ => {
                        return Err(LiangError::IncompatibleInit {
                            init: init.name(),
                            engine: "bdg",
                            why: "only Gaussian (quadratic-Hamiltonian ground) states evolve \
                                  as a single covariance matrix",
                        });
                    }
                };
                let ground = bdg::ground_covariance(&bdg::compile_bdg(init_model)?)?;
                init_degenerate = ground.degenerate;
                Prepared::Bdg {
                    prop_unfrozen: BdgPropagator::new(&bdg::compile_bdg(model)?)?,
                    prop_frozen: BdgPropagator::new(&bdg::compile_bdg(&frozen_model)?)?,
                    m0: ground.covariance,
                }
            }
            EngineKind::Exact => {
                let psi0 = match init {
                    InitialState::Neel => exact::neel_state_vector(length),
                    InitialState::Ferromagnetic => exact::ferromagnetic_state_vector(length),
                    InitialState::GroundState => {
                        let (state, degen) = exact_ground_state(model)?;
                        init_degenerate = degen;
                        state
                    }
                    InitialState::GroundStateOf(m) => {
                        if m.length() != length {
                            return Err(LiangError::InitLengthMismatch {
                                got: m.length(),
                                want: length,
                            });
                        }
                        let (state, degen) = exact_ground_state(m)?;
                        init_degenerate = degen;
                        state
                    }
                };
                Prepared::Exact {
                    h_unfrozen: exact::assemble(model)?,
                    h_frozen: exact::assemble(&frozen_model)?,
                    psi0,
                }
            }
        };

        Ok(FlowContext {
            length,
            frozen_site,
            engine,
            params: model.params(),
            init_degenerate,
            prepared,
        })
    }

    pub fn engine(&self) -> EngineKind {
        self.engine
    }

    pub fn frozen_site(&self) -> usize {
        self.frozen_site
    }

    pub fn init_degenerate(&self) -> bool {
        self.init_degenerate
    }

    fn check_targets(&self, targets: &[usize]) -> Result<(), LiangError> {
        for &a in targets {
            if a < 1 || a > self.length {
                return Err(LiangError::SiteOutOfRange {
                    site: a,
                    length: self.length,
                });
            }
            if a == self.frozen_site {
                return Err(LiangError::TargetEqualsFrozen(a));
            }
        }
        Ok(())
    }

    fn check_times(times: &[f64]) -> Result<(), LiangError> {
        if times.is_empty() {
            return Err(LiangError::BadTimeGrid);
        }
        for (i, &t) in times.iter().enumerate() {
            if !t.is_finite() || t < 0.0 || (i > 0 && t < times[i - 1]) {
                return Err(LiangError::BadTimeGrid);
            }
        }
        Ok(())
    }

    /// Entropy series of both runs for several targets over a sorted grid,
    /// returned as one signed flow series per target.
    pub fn series_for_targets(
        &self,
        targets: &[usize],
        times: &[f64],
    ) -> Result<Vec<FlowSeries>, LiangError> {
        self.check_targets(targets)?;
        Self::check_times(times)?;
        let nt = times.len();
        let mut unfrozen = vec![vec![0.0f64; nt]; targets.len()];
        let mut frozen = vec![vec![0.0f64; nt]; targets.len()];

        match &self.prepared {
            Prepared::Quadratic {
                prop_unfrozen,
                prop_frozen,
                c0,
            } => {
                for (ai, &a) in targets.iter().enumerate() {
                    for (ti, &t) in times.iter().enumerate() {
                        let p_un = prop_unfrozen.occupation(c0, a, t)?;
                        let p_fr = prop_frozen.occupation(c0, a, t)?;
                        unfrozen[ai][ti] = quadratic::entropy_from_occupation(p_un)?;
                        frozen[ai][ti] = quadratic::entropy_from_occupation(p_fr)?;
                    }
                }
            }
            Prepared::Bdg {
                prop_unfrozen,
                prop_frozen,
                m0,
            } => {
                for (ai, &a) in targets.iter().enumerate() {
                    for (ti, &t) in times.iter().enumerate() {
                        let z_un = prop_unfrozen.sigma_z(m0, a, t)?;
                        let z_fr = prop_frozen.sigma_z(m0, a, t)?;
                        unfrozen[ai][ti] = bdg::entropy_from_sigma_z(z_un)?;
                        frozen[ai][ti] = bdg::entropy_from_sigma_z(z_fr)?;
                    }
                }
            }
            Prepared::Exact {
                h_unfrozen,
                h_frozen,
                psi0,
            } => {
                let fill =
                    |h: &ManyBodyHamiltonian, out: &mut Vec<Vec<f64>>| -> Result<(), LiangError> {
                        let mut failure = None;
                        exact::evolve_observe(h, psi0, times, |ti, psi| {
                            for (ai, &a) in targets.iter().enumerate() {
                                match exact::site_entropy(psi, a) {
                                    Ok(s) => out[ai][ti] = s,
                                    Err(e) => failure = Some(e),
                                }
                            }
                        })?;
                        match failure {
                            Some(e) => Err(e.into()),
                            None => Ok(()),
                        }
                    };
                fill(h_unfrozen, &mut unfrozen)?;
                fill(h_frozen, &mut frozen)?;
            }
        }

        Ok(targets
            .iter()
            .enumerate()
            .map(|(ai, &a)| FlowSeries {
                frozen_site: self.frozen_site,
                target: a,
                distance: a.abs_diff(self.frozen_site),
                times: times.to_vec(),
                values: unfrozen[ai]
                    .iter()
                    .zip(&frozen[ai])
                    .map(|(u, f)| u - f)
                    .collect(),
                engine: self.engine,
                params: self.params,
                init_degenerate: self.init_degenerate,
            })
            .collect())
    }
}

/// Cumulative flow `𝕋_d(t) = S(ρ_a, t) − S(ρ_{a,∖b}, t)` over a sample grid.
pub fn cumulative_flow(
    model: &ChainModel,
    init: &InitialState,
    frozen_site: usize,
    target: usize,
    times: &[f64],
    engine: EngineKind,
) -> Result<FlowSeries, LiangError> {
    let ctx = FlowContext::prepare(model, init, frozen_site, engine)?;
    Ok(ctx.series_for_targets(&[target], times)?.remove(0))
}

/// Default finite-difference step for [`instantaneous_flow`].
pub const DEFAULT_INSTANT_DT: f64 = 0.01;

/// Instantaneous flow estimate with its convergence diagnostic.
#[derive(Debug, Clone, Copy)]
pub struct InstantaneousFlow {
    /// Central difference over ±δt (nats per unit time).
    pub rate: f64,
    /// Central difference over ±δt/2.
    pub refined: f64,
    /// True when halving the step moved the estimate by less than 1e−4.
    pub converged: bool,
}

/// Finite-difference rate `d𝕋/dt` at time `t`.
pub fn instantaneous_flow(
    model: &ChainModel,
    init: &InitialState,
    frozen_site: usize,
    target: usize,
    t: f64,
    dt: f64,
    engine: EngineKind,
) -> Result<InstantaneousFlow, LiangError> {
    if dt <= 0.0 || !dt.is_finite() {
        return Err(LiangError::BadStep(dt));
    }
    if t < dt {
        return Err(LiangError::TimeBelowStep { t, dt });
    }
    let times = [t - dt, t - 0.5 * dt, t + 0.5 * dt, t + dt];
    let series = cumulative_flow(model, init, frozen_site, target, &times, engine)?;
    let v = &series.values;
    let rate = (v[3] - v[0]) / (2.0 * dt);
    let refined = (v[2] - v[1]) / dt;
    Ok(InstantaneousFlow {
        rate,
        refined,
        converged: (rate - refined).abs() < 1e-4,
    })
}

const WINDOW_MIN_SAMPLES: usize = 10;

/// Mean of `|𝕋_d(t)|` over samples falling in `[t0, t1]` (inclusive).
pub fn late_time_average(series: &FlowSeries, window: (f64, f64)) -> Result<f64, LiangError> {
    let (t0, t1) = window;
    let eps = 1e-9;
    let selected: Vec<f64> = series
        .times
        .iter()
        .zip(&series.values)
        .filter(|(&t, _)| t >= t0 - eps && t <= t1 + eps)
        .map(|(_, &v)| v.abs())
        .collect();
    if selected.is_empty() {
        return Err(LiangError::EmptyWindow(t0, t1));
    }
    if selected.len() < WINDOW_MIN_SAMPLES {
        return Err(LiangError::TooFewSamples {
            t0,
            t1,
            count: selected.len(),
            min: WINDOW_MIN_SAMPLES,
        });
    }
    Ok(selected.iter().sum::<f64>() / selected.len() as f64)
}

/// Ground-state entropy difference `ΔS_g(d) = S(ρ_a | gs of model) −
/// S(ρ_a | gs of frozen model)`: the late-time shadow of the cumulative flow
/// for ground-state-initial quenches.
pub fn delta_s_ground(
    model: &ChainModel,
    frozen_site: usize,
    target: usize,
    engine: EngineKind,
) -> Result<f64, LiangError> {
    let length = model.length();
    for site in [frozen_site, target] {
        if site < 1 || site > length {
            return Err(LiangError::SiteOutOfRange { site, length });
        }
    }
    if target == frozen_site {
        return Err(LiangError::TargetEqualsFrozen(target));
    }
    let frozen_model = freeze_site(model, frozen_site)?;

    match engine {
        EngineKind::Bdg => {
            let g_un = bdg::ground_covariance(&bdg::compile_bdg(model)?)?;
            let g_fr = bdg::ground_covariance(&bdg::compile_bdg(&frozen_model)?)?;
            let s_un = bdg::site_entropy_bdg(&g_un.covariance, target)?;
            let s_fr = bdg::site_entropy_bdg(&g_fr.covariance, target)?;
            Ok(s_un - s_fr)
        }
        EngineKind::Exact => {
            let (psi_un, _) = exact_ground_state(model)?;
            // The frozen site carries no terms, so the frozen ground space is
            // exactly doubled by its free spin; pinning that spin lifts the
            // ambiguity without touching the complement.
            let mut h_fr = exact::assemble(&frozen_model)?;
            h_fr.pin_site_up(frozen_site);
            let psi_fr = if frozen_model.is_parity_symmetric() {
                let mask = exact::full_flip_mask(length) & !(1u64 << (frozen_site - 1));
                exact::ground_state_even(&h_fr, mask)?.state
            } else {
                let gs = exact::ground_state(&h_fr)?;
                if gs.degenerate {
                    return Err(LiangError::DegenerateGroundState);
                }
                gs.state
            };
            let s_un = exact::site_entropy(&psi_un, target)?;
            let s_fr = exact::site_entropy(&psi_fr, target)?;
            Ok(s_un - s_fr)
        }
        EngineKind::Quadratic => Err(LiangError::UnsupportedEngine("quadratic")),
    }
}
