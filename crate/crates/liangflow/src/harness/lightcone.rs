//! Ballistic front detection and velocity fitting for spatial flow profiles.

use thiserror::Error;

use crate::util::lsq_slope;

#[derive(Debug, Error)]
pub enum LightconeError {
    #[error("front not detected: all profile values below threshold {0}")]
    FrontNotDetected(f64),
    #[error("need at least {want} profiles with detected fronts, got {got}")]
    TooFewProfiles { got: usize, want: usize },
}

/// Default |𝕋| level defining the information front.
pub const DEFAULT_FRONT_THRESHOLD: f64 = 1e-4;

/// A spatial profile |𝕋_d| at one time.
#[derive(Debug, Clone)]
pub struct Profile {
    pub t: f64,
    /// (distance, flow value) pairs; sign is ignored.
    pub points: Vec<(usize, f64)>,
}

/// Farthest distance whose flow magnitude reaches the threshold.
pub fn front_position(profile: &Profile, threshold: f64) -> Option<usize> {
    profile
        .points
        .iter()
        .filter(|(_, v)| v.abs() >= threshold)
        .map(|(d, _)| *d)
        .max()
}

/// Least-squares slope of front position against time: the front velocity.
///
/// Requires at least three profiles at distinct times with detected fronts.
pub fn fit_lightcone_velocity(profiles: &[Profile], threshold: f64) -> Result<f64, LightconeError> {
    let mut ts = Vec::new();
    let mut fronts = Vec::new();
    for p in profiles {
        if let Some(d) = front_position(p, threshold) {
            ts.push(p.t);
            fronts.push(d as f64);
        }
    }
    if fronts.is_empty() {
        return Err(LightconeError::FrontNotDetected(threshold));
    }
    if ts.len() < 3 {
        return Err(LightconeError::TooFewProfiles {
            got: ts.len(),
            want: 3,
        });
    }
    Ok(lsq_slope(&ts, &fronts))
}
