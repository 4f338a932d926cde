//! Causal information flow in 1D quantum spin chains.
//!
//! The measurable at the center of this crate is the cumulative flow
//! `𝕋_d(t) = S(ρ_a, t) − S(ρ_{a,∖b}, t)`: the difference between the
//! single-site entropy of a target site `a` under the ordinary evolution and
//! under the evolution with a site `b` frozen (every coupling and field on
//! `b` switched off from `t = 0`). The frozen run is an intervention, not a
//! correlation probe, which is what makes `𝕋` a causality measure.
//!
//! Three engines compute the entropies:
//!
//! - [`quadratic`] — number-conserving free fermions (L×L correlation
//!   matrix) for the quasiperiodic hopping chain,
//! - [`bdg`] — Majorana covariance matrices (2L×2L) for the κ = 0
//!   transverse-field Ising chain,
//! - [`exact`] — full 2^L state vectors with Lanczos ground states and
//!   Krylov propagation, which doubles as the oracle for both Gaussian
//!   engines.
//!
//! [`model`] describes chains symbolically, [`liang`] orchestrates paired
//! frozen/unfrozen runs into flow series, and [`harness`] drives parameter
//! sweeps from config files into deterministic CSV tables.
//!
//! Conventions, fixed crate-wide: sites are 1-based, ħ = 1, and every
//! entropy is in nats (single-site maximum ln 2).

pub mod bdg;
pub mod exact;
pub mod harness;
pub mod liang;
pub mod model;
pub mod quadratic;

mod util;
