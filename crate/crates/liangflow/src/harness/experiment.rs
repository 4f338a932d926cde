//! Experiment drivers: one grid point per worker, rows assembled in grid
//! order after the parallel section, so output never depends on scheduling.

use rayon::prelude::*;
use thiserror::Error;

use crate::exact::ExactError;
use crate::harness::config::{
    ConfigError, EngineChoice, EpsilonRule, Experiment, FrozenRule, InitConfig, SweepConfig,
    TargetSpec,
};
use crate::harness::lightcone::{
    fit_lightcone_velocity, LightconeError, Profile, DEFAULT_FRONT_THRESHOLD,
};
use crate::harness::table::{ResultTable, Row};
use crate::liang::{
    delta_s_ground, late_time_average, EngineKind, FlowContext, InitialState, LiangError,
};
use crate::model::{
    build_aah_with_freq, build_annni, fibonacci_frozen_site, ModelError, DEFAULT_TILT,
};

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("resource guard: {0}")]
    Guard(String),
    #[error("engine error: {0}")]
    Engine(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl RunError {
    /// CLI exit codes: 2 config, 3 engine, 4 resource guard, 1 i/o.
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Config(_) => 2,
            RunError::Engine(_) => 3,
            RunError::Guard(_) => 4,
            RunError::Io(_) => 1,
        }
    }
}

impl From<LiangError> for RunError {
    fn from(e: LiangError) -> Self {
        match &e {
            LiangError::Exact(ExactError::ChainTooLong { .. })
            | LiangError::Exact(ExactError::DenseTooLarge(_)) => RunError::Guard(e.to_string()),
            _ => RunError::Engine(e.to_string()),
        }
    }
}

impl From<ModelError> for RunError {
    fn from(e: ModelError) -> Self {
        RunError::Engine(e.to_string())
    }
}

impl From<LightconeError> for RunError {
    fn from(e: LightconeError) -> Self {
        RunError::Engine(e.to_string())
    }
}

fn config_err(msg: impl Into<String>) -> RunError {
    RunError::Config(ConfigError {
        line: None,
        message: msg.into(),
    })
}

/// Resolve `engine = auto` to a concrete backend.
pub fn resolve_engine(cfg: &SweepConfig) -> EngineKind {
    match cfg.engine {
        EngineChoice::Quadratic => EngineKind::Quadratic,
        EngineChoice::Bdg => EngineKind::Bdg,
        EngineChoice::Exact => EngineKind::Exact,
        EngineChoice::Auto => match cfg.experiment {
            Experiment::AahHeatmap | Experiment::AahCrosscut => EngineKind::Quadratic,
            Experiment::AnnniEd => EngineKind::Exact,
            _ => {
                if cfg.kappa != 0.0
                    || matches!(cfg.init, InitConfig::Ferromagnetic | InitConfig::Neel)
                {
                    EngineKind::Exact
                } else {
                    EngineKind::Bdg
                }
            }
        },
    }
}

fn resolve_frozen(cfg: &SweepConfig) -> Result<usize, RunError> {
    let b = match cfg.frozen_rule {
        FrozenRule::Explicit(b) => b,
        FrozenRule::Fibonacci => fibonacci_frozen_site(cfg.length)?,
        FrozenRule::Middle => cfg.length.div_ceil(2),
    };
    if b < 1 || b > cfg.length {
        return Err(config_err(format!(
            "frozen site {b} out of range for L = {}",
            cfg.length
        )));
    }
    Ok(b)
}

/// Distances to probe, given the frozen site; targets sit at `b + d`.
fn resolve_distances(cfg: &SweepConfig, frozen: usize) -> Result<Vec<usize>, RunError> {
    match &cfg.targets {
        TargetSpec::Profile => Ok((1..=cfg.length - frozen).collect()),
        TargetSpec::Distances(d) => {
            for &dist in d {
                if frozen + dist > cfg.length {
                    return Err(config_err(format!(
                        "target distance {dist} from site {frozen} leaves the chain (L = {})",
                        cfg.length
                    )));
                }
            }
            Ok(d.clone())
        }
    }
}

/// The tilt rule: 1e−4 for ferromagnetic-initial exact runs at B < 0.1.
fn epsilon_for(cfg: &SweepConfig, field: f64, engine: EngineKind) -> f64 {
    match cfg.epsilon {
        EpsilonRule::Fixed(e) => e,
        EpsilonRule::Auto => {
            if engine == EngineKind::Exact && cfg.init == InitConfig::Ferromagnetic && field < 0.1 {
                DEFAULT_TILT
            } else {
                0.0
            }
        }
    }
}

fn resolve_init(cfg: &SweepConfig) -> Result<InitialState, RunError> {
    Ok(match cfg.init {
        InitConfig::Neel => InitialState::Neel,
        InitConfig::Ferromagnetic => InitialState::Ferromagnetic,
        InitConfig::GroundState => InitialState::GroundState,
        InitConfig::GroundStateOf(b0) => {
            if cfg.experiment.is_ising() {
                InitialState::GroundStateOf(Box::new(build_annni(cfg.length, cfg.kappa, b0, 0.0)?))
            } else {
                return Err(config_err(
                    "ground_state_of initial states apply to Ising-family experiments only",
                ));
            }
        }
    })
}

impl Experiment {
    fn is_ising(self) -> bool {
        !matches!(self, Experiment::AahHeatmap | Experiment::AahCrosscut)
    }
}

/// Run a validated configuration to a fully populated result table.
pub fn run_experiment(cfg: &SweepConfig) -> Result<ResultTable, RunError> {
    let engine = resolve_engine(cfg);
    let drive = || -> Result<ResultTable, RunError> {
        let rows = match cfg.experiment {
            Experiment::AahHeatmap | Experiment::AahCrosscut => run_aah(cfg, engine)?,
            Experiment::TfimMap | Experiment::AnnniEd => run_field_sweep(cfg, engine)?,
            Experiment::TfimProfile => run_profile(cfg, engine)?,
            Experiment::DeltaSg => run_delta_sg(cfg, engine)?,
            Experiment::FrozenSiteSweep => run_frozen_sweep(cfg, engine)?,
        };
        Ok(ResultTable { rows })
    };
    if cfg.workers > 0 {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(cfg.workers)
            .build()
            .map_err(|e| RunError::Engine(e.to_string()))?;
        pool.install(drive)
    } else {
        drive()
    }
}

fn run_aah(cfg: &SweepConfig, engine: EngineKind) -> Result<Vec<Row>, RunError> {
    let frozen = resolve_frozen(cfg)?;
    let distances = resolve_distances(cfg, frozen)?;
    let times = cfg.times();
    let init = resolve_init(cfg)?;
    let tag = cfg.experiment.tag();

    let per_lambda: Result<Vec<Vec<Row>>, RunError> = cfg
        .lambda_grid
        .par_iter()
        .map(|&lambda| {
            let model = build_aah_with_freq(cfg.length, lambda, cfg.beta)?;
            let targets: Vec<usize> = distances.iter().map(|d| frozen + d).collect();
            let ctx = FlowContext::prepare(&model, &init, frozen, engine)?;
            let series = ctx.series_for_targets(&targets, &times)?;
            let mut rows = Vec::with_capacity(series.len() * times.len());
            for s in &series {
                let win_avg = late_time_average(s, cfg.window)?;
                for (i, &t) in s.times.iter().enumerate() {
                    rows.push(Row {
                        experiment: tag,
                        length: cfg.length,
                        param1: lambda,
                        param2: cfg.beta,
                        frozen_site: frozen,
                        target: s.target,
                        distance: s.distance,
                        t,
                        flow_signed: s.values[i],
                        engine: engine.name(),
                        extra: Some(("win_avg_abs", win_avg)),
                    });
                }
            }
            Ok(rows)
        })
        .collect();
    Ok(per_lambda?.into_iter().flatten().collect())
}

fn run_field_sweep(cfg: &SweepConfig, engine: EngineKind) -> Result<Vec<Row>, RunError> {
    let frozen = resolve_frozen(cfg)?;
    let distances = resolve_distances(cfg, frozen)?;
    let times = cfg.times();
    let tag = cfg.experiment.tag();

    let per_field: Result<Vec<Vec<Row>>, RunError> = cfg
        .field_grid
        .par_iter()
        .map(|&field| {
            let tilt = epsilon_for(cfg, field, engine);
            let model = build_annni(cfg.length, cfg.kappa, field, tilt)?;
            let init = resolve_init(cfg)?;
            let targets: Vec<usize> = distances.iter().map(|d| frozen + d).collect();
            let ctx = FlowContext::prepare(&model, &init, frozen, engine)?;
            let series = ctx.series_for_targets(&targets, &times)?;
            let mut rows = Vec::with_capacity(series.len() * times.len());
            for s in &series {
                for (i, &t) in s.times.iter().enumerate() {
                    rows.push(Row {
                        experiment: tag,
                        length: cfg.length,
                        param1: cfg.kappa,
                        param2: field,
                        frozen_site: frozen,
                        target: s.target,
                        distance: s.distance,
                        t,
                        flow_signed: s.values[i],
                        engine: engine.name(),
                        extra: None,
                    });
                }
            }
            Ok(rows)
        })
        .collect();
    Ok(per_field?.into_iter().flatten().collect())
}

fn run_profile(cfg: &SweepConfig, engine: EngineKind) -> Result<Vec<Row>, RunError> {
    let frozen = resolve_frozen(cfg)?;
    let distances = resolve_distances(cfg, frozen)?;
    let times = cfg.times();
    let tag = cfg.experiment.tag();

    let per_field: Result<Vec<Vec<Row>>, RunError> = cfg
        .field_grid
        .par_iter()
        .map(|&field| {
            let model = build_annni(cfg.length, cfg.kappa, field, 0.0)?;
            let init = resolve_init(cfg)?;
            let targets: Vec<usize> = distances.iter().map(|d| frozen + d).collect();
            let ctx = FlowContext::prepare(&model, &init, frozen, engine)?;
            let series = ctx.series_for_targets(&targets, &times)?;

            let profiles: Vec<Profile> = times
                .iter()
                .enumerate()
                .map(|(ti, &t)| Profile {
                    t,
                    points: series.iter().map(|s| (s.distance, s.values[ti])).collect(),
                })
                .collect();
            let v_fit = fit_lightcone_velocity(&profiles, DEFAULT_FRONT_THRESHOLD)?;

            let mut rows = Vec::new();
            for s in &series {
                for (i, &t) in s.times.iter().enumerate() {
                    rows.push(Row {
                        experiment: tag,
                        length: cfg.length,
                        param1: cfg.kappa,
                        param2: field,
                        frozen_site: frozen,
                        target: s.target,
                        distance: s.distance,
                        t,
                        flow_signed: s.values[i],
                        engine: engine.name(),
                        extra: Some(("cone_reach", v_fit * t)),
                    });
                }
            }
            // Fitted front velocity next to the bare quasiparticle value.
            for (key, value) in [("v_fit", v_fit), ("v_min1b", field.min(1.0))] {
                rows.push(Row {
                    experiment: tag,
                    length: cfg.length,
                    param1: cfg.kappa,
                    param2: field,
                    frozen_site: frozen,
                    target: frozen,
                    distance: 0,
                    t: cfg.t_max,
                    flow_signed: 0.0,
                    engine: engine.name(),
                    extra: Some((key, value)),
                });
            }
            Ok(rows)
        })
        .collect();
    Ok(per_field?.into_iter().flatten().collect())
}

fn run_delta_sg(cfg: &SweepConfig, engine: EngineKind) -> Result<Vec<Row>, RunError> {
    let frozen = resolve_frozen(cfg)?;
    let distances = resolve_distances(cfg, frozen)?;
    let tag = cfg.experiment.tag();

    let per_field: Result<Vec<Vec<Row>>, RunError> = cfg
        .field_grid
        .par_iter()
        .map(|&field| {
            let tilt = match cfg.epsilon {
                EpsilonRule::Fixed(e) => e,
                EpsilonRule::Auto => 0.0,
            };
            let model = build_annni(cfg.length, cfg.kappa, field, tilt)?;
            let mut rows = Vec::with_capacity(distances.len());
            for &d in &distances {
                let value = delta_s_ground(&model, frozen, frozen + d, engine)?;
                rows.push(Row {
                    experiment: tag,
                    length: cfg.length,
                    param1: cfg.kappa,
                    param2: field,
                    frozen_site: frozen,
                    target: frozen + d,
                    distance: d,
                    t: 0.0,
                    flow_signed: value,
                    engine: engine.name(),
                    extra: Some(("delta_sg", value)),
                });
            }
            Ok(rows)
        })
        .collect();
    Ok(per_field?.into_iter().flatten().collect())
}

fn run_frozen_sweep(cfg: &SweepConfig, engine: EngineKind) -> Result<Vec<Row>, RunError> {
    let target = cfg.target_site.unwrap_or(cfg.length.div_ceil(2));
    if target < 1 || target > cfg.length {
        return Err(config_err(format!("target site {target} out of range")));
    }
    let times = cfg.times();
    let tag = cfg.experiment.tag();

    let sweep: Vec<usize> = if cfg.sweep_sites.is_empty() {
        let lo = target.saturating_sub(60).max(1);
        let hi = (target + 60).min(cfg.length);
        (lo..=hi).filter(|&b| b != target).collect()
    } else {
        cfg.sweep_sites
            .iter()
            .copied()
            .filter(|&b| b != target && b >= 1 && b <= cfg.length)
            .collect()
    };
    if sweep.is_empty() {
        return Err(config_err("`sweep_sites` left no usable frozen sites"));
    }

    let mut points = Vec::new();
    for &field in &cfg.field_grid {
        for &b in &sweep {
            points.push((field, b));
        }
    }

    let per_point: Result<Vec<Vec<Row>>, RunError> = points
        .par_iter()
        .map(|&(field, b)| {
            let model = build_annni(cfg.length, cfg.kappa, field, 0.0)?;
            let init = resolve_init(cfg)?;
            let ctx = FlowContext::prepare(&model, &init, b, engine)?;
            let series = ctx.series_for_targets(&[target], &times)?.remove(0);
            Ok(series
                .times
                .iter()
                .enumerate()
                .map(|(i, &t)| Row {
                    experiment: tag,
                    length: cfg.length,
                    param1: cfg.kappa,
                    param2: field,
                    frozen_site: b,
                    target,
                    distance: series.distance,
                    t,
                    flow_signed: series.values[i],
                    engine: engine.name(),
                    extra: None,
                })
                .collect())
        })
        .collect();
    Ok(per_point?.into_iter().flatten().collect())
}
