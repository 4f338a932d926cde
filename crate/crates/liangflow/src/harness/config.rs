//! Flat `key = value` run configuration with strict key checking.
//!
//! Unknown or duplicated keys are hard errors with line numbers: a silent
//! typo in a physics parameter is worse than a rejected file. Numeric grids
//! use the inclusive `start:stop:step` syntax, lists are comma-separated,
//! `#` starts a comment.

use std::fmt;
use std::path::PathBuf;

use crate::model::INV_GOLDEN_RATIO;

#[derive(Debug)]
pub struct ConfigError {
    pub line: Option<usize>,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.line {
            Some(n) => write!(f, "config error at line {n}: {}", self.message),
            None => write!(f, "config error: {}", self.message),
        }
    }
}

impl std::error::Error for ConfigError {}

fn err_at(line: usize, message: impl Into<String>) -> ConfigError {
    ConfigError {
        line: Some(line),
        message: message.into(),
    }
}

fn err(message: impl Into<String>) -> ConfigError {
    ConfigError {
        line: None,
        message: message.into(),
    }
}

/// The seven figure-reproduction protocols.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Experiment {
    /// Window-averaged |𝕋_d| over a (λ, d) grid of the quasiperiodic chain.
    AahHeatmap,
    /// |𝕋_d| vs λ at a few distances.
    AahCrosscut,
    /// |𝕋_d|(B, t) for the transverse-field Ising chain.
    TfimMap,
    /// Spatial |𝕋_d| profiles at chosen times with a lightcone fit.
    TfimProfile,
    /// Exact-diagonalization sweep of the interacting chain.
    AnnniEd,
    /// Ground-state entropy difference ΔS_g over a field grid.
    DeltaSg,
    /// Fixed target site, swept frozen site.
    FrozenSiteSweep,
}

impl Experiment {
    pub fn tag(self) -> &'static str {
        match self {
            Experiment::AahHeatmap => "aah_heatmap",
            Experiment::AahCrosscut => "aah_crosscut",
            Experiment::TfimMap => "tfim_map",
            Experiment::TfimProfile => "tfim_profile",
            Experiment::AnnniEd => "annni_ed",
            Experiment::DeltaSg => "delta_sg",
            Experiment::FrozenSiteSweep => "frozen_site_sweep",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "aah_heatmap" => Experiment::AahHeatmap,
            "aah_crosscut" => Experiment::AahCrosscut,
            "tfim_map" => Experiment::TfimMap,
            "tfim_profile" => Experiment::TfimProfile,
            "annni_ed" => Experiment::AnnniEd,
            "delta_sg" => Experiment::DeltaSg,
            "frozen_site_sweep" => Experiment::FrozenSiteSweep,
            _ => return None,
        })
    }

    fn is_aah(self) -> bool {
        matches!(self, Experiment::AahHeatmap | Experiment::AahCrosscut)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FrozenRule {
    Explicit(usize),
    Fibonacci,
    Middle,
}

#[derive(Debug, Clone, PartialEq)]
pub enum TargetSpec {
    /// Distances from the frozen site.
    Distances(Vec<usize>),
    /// Every distance from 1 to the end of the chain.
    Profile,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum InitConfig {
    Neel,
    Ferromagnetic,
    GroundState,
    /// Ground state of the same model family at a different field.
    GroundStateOf(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EngineChoice {
    Auto,
    Quadratic,
    Bdg,
    Exact,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EpsilonRule {
    /// Tilt of 1e−4 for ferromagnetic-initial exact runs at B < 0.1, else 0.
    Auto,
    Fixed(f64),
}

/// A fully resolved, validated run description.
#[derive(Debug, Clone)]
pub struct SweepConfig {
    pub experiment: Experiment,
    pub length: usize,
    pub lambda_grid: Vec<f64>,
    pub beta: f64,
    pub kappa: f64,
    pub field_grid: Vec<f64>,
    pub epsilon: EpsilonRule,
    pub init: InitConfig,
    pub frozen_rule: FrozenRule,
    pub targets: TargetSpec,
    pub target_site: Option<usize>,
    pub sweep_sites: Vec<usize>,
    pub t_min: f64,
    pub t_max: f64,
    pub dt: f64,
    pub window: (f64, f64),
    pub engine: EngineChoice,
    pub out: PathBuf,
    pub workers: usize,
    pub allow_large: bool,
}

impl SweepConfig {
    /// Sorted sample times `t_min, t_min+dt, …, ≤ t_max`.
    pub fn times(&self) -> Vec<f64> {
        let n = ((self.t_max - self.t_min) / self.dt + 1e-9).floor() as usize;
        (0..=n).map(|i| self.t_min + i as f64 * self.dt).collect()
    }
}

const KNOWN_KEYS: &[&str] = &[
    "experiment",
    "L",
    "lambda_grid",
    "kappa",
    "b_grid",
    "epsilon",
    "init",
    "frozen_site",
    "targets",
    "target_site",
    "sweep_sites",
    "t_min",
    "t_max",
    "dt",
    "window",
    "engine",
    "out",
    "workers",
    "allow_large",
];

fn parse_f64(v: &str, line: usize, key: &str) -> Result<f64, ConfigError> {
    v.trim()
        .parse::<f64>()
        .map_err(|_| err_at(line, format!("`{key}` expects a number, got `{v}`")))
        .and_then(|x| {
            if x.is_finite() {
                Ok(x)
            } else {
                Err(err_at(line, format!("`{key}` must be finite")))
            }
        })
}

fn parse_usize(v: &str, line: usize, key: &str) -> Result<usize, ConfigError> {
    v.trim().parse::<usize>().map_err(|_| {
        err_at(
            line,
            format!("`{key}` expects a non-negative integer, got `{v}`"),
        )
    })
}

/// Expand `start:stop:step` (inclusive), a comma list, or a single number.
fn parse_f64_grid(v: &str, line: usize, key: &str) -> Result<Vec<f64>, ConfigError> {
    let v = v.trim();
    if v.contains(':') {
        let parts: Vec<&str> = v.split(':').collect();
        if parts.len() != 3 {
            return Err(err_at(
                line,
                format!("`{key}` grid must be start:stop:step"),
            ));
        }
        let start = parse_f64(parts[0], line, key)?;
        let stop = parse_f64(parts[1], line, key)?;
        let step = parse_f64(parts[2], line, key)?;
        if step <= 0.0 {
            return Err(err_at(line, format!("`{key}` grid step must be positive")));
        }
        if stop < start {
            return Err(err_at(line, format!("`{key}` grid stop is below start")));
        }
        let n = ((stop - start) / step + 1e-9).floor() as usize;
        return Ok((0..=n).map(|i| start + i as f64 * step).collect());
    }
    v.split(',')
        .map(|p| parse_f64(p, line, key))
        .collect::<Result<Vec<_>, _>>()
        .and_then(|g| {
            if g.is_empty() {
                Err(err_at(line, format!("`{key}` grid is empty")))
            } else {
                Ok(g)
            }
        })
}

fn parse_usize_list(v: &str, line: usize, key: &str) -> Result<Vec<usize>, ConfigError> {
    let v = v.trim();
    if v.contains(':') {
        let parts: Vec<&str> = v.split(':').collect();
        if parts.len() != 3 {
            return Err(err_at(
                line,
                format!("`{key}` range must be start:stop:step"),
            ));
        }
        let start = parse_usize(parts[0], line, key)?;
        let stop = parse_usize(parts[1], line, key)?;
        let step = parse_usize(parts[2], line, key)?;
        if step == 0 {
            return Err(err_at(line, format!("`{key}` range step must be positive")));
        }
        if stop < start {
            return Err(err_at(line, format!("`{key}` range stop is below start")));
        }
        return Ok((start..=stop).step_by(step).collect());
    }
    v.split(',').map(|p| parse_usize(p, line, key)).collect()
}

struct RawEntry {
    line: usize,
    value: String,
}

/// Parse and validate a configuration file.
pub fn parse_config(text: &str) -> Result<SweepConfig, ConfigError> {
    let mut entries: Vec<(String, RawEntry)> = Vec::new();
    for (idx, raw_line) in text.lines().enumerate() {
        let line_no = idx + 1;
        let stripped = match raw_line.find('#') {
            Some(pos) => &raw_line[..pos],
            None => raw_line,
        };
        let stripped = stripped.trim();
        if stripped.is_empty() {
            continue;
        }
        let Some(eq) = stripped.find('=') else {
            return Err(err_at(
                line_no,
                format!("expected `key = value`, got `{stripped}`"),
            ));
        };
        let key = stripped[..eq].trim().to_string();
        let value = stripped[eq + 1..].trim().to_string();
        if !KNOWN_KEYS.contains(&key.as_str()) {
            return Err(err_at(line_no, format!("unknown key `{key}`")));
        }
        if entries.iter().any(|(k, _)| *k == key) {
            return Err(err_at(line_no, format!("duplicate key `{key}`")));
        }
        entries.push((
            key,
            RawEntry {
                line: line_no,
                value,
            },
        ));
    }

    let get = |key: &str| entries.iter().find(|(k, _)| k == key).map(|(_, e)| e);

    let Some(exp_entry) = get("experiment") else {
        return Err(err("missing required key `experiment`"));
    };
    let Some(experiment) = Experiment::parse(&exp_entry.value) else {
        return Err(err_at(
            exp_entry.line,
            format!("unknown experiment `{}`", exp_entry.value),
        ));
    };

    // Per-experiment defaults; every key below can be overridden.
    let mut cfg = defaults_for(experiment);

    if let Some(e) = get("L") {
        cfg.length = parse_usize(&e.value, e.line, "L")?;
    }
    if let Some(e) = get("lambda_grid") {
        cfg.lambda_grid = parse_f64_grid(&e.value, e.line, "lambda_grid")?;
    }
    if let Some(e) = get("kappa") {
        cfg.kappa = parse_f64(&e.value, e.line, "kappa")?;
    }
    if let Some(e) = get("b_grid") {
        cfg.field_grid = parse_f64_grid(&e.value, e.line, "b_grid")?;
    }
    if let Some(e) = get("epsilon") {
        cfg.epsilon = if e.value == "auto" {
            EpsilonRule::Auto
        } else {
            EpsilonRule::Fixed(parse_f64(&e.value, e.line, "epsilon")?)
        };
    }
    if let Some(e) = get("init") {
        cfg.init = match e.value.as_str() {
            "neel" => InitConfig::Neel,
            "ferromagnetic" => InitConfig::Ferromagnetic,
            "ground_state" => InitConfig::GroundState,
            other => match other.strip_prefix("ground_state_of:") {
                Some(rest) => InitConfig::GroundStateOf(parse_f64(rest, e.line, "init")?),
                None => {
                    return Err(err_at(
                        e.line,
                        format!(
                            "`init` must be neel, ferromagnetic, ground_state or \
                             ground_state_of:<field>, got `{other}`"
                        ),
                    ));
                }
            },
        };
    }
    if let Some(e) = get("frozen_site") {
        cfg.frozen_rule = match e.value.as_str() {
            "fibonacci" => FrozenRule::Fibonacci,
            "middle" => FrozenRule::Middle,
            v => FrozenRule::Explicit(parse_usize(v, e.line, "frozen_site")?),
        };
    }
    if let Some(e) = get("targets") {
        cfg.targets = if e.value == "profile" {
            TargetSpec::Profile
        } else {
            TargetSpec::Distances(parse_usize_list(&e.value, e.line, "targets")?)
        };
    }
    if let Some(e) = get("target_site") {
        cfg.target_site = Some(parse_usize(&e.value, e.line, "target_site")?);
    }
    if let Some(e) = get("sweep_sites") {
        cfg.sweep_sites = parse_usize_list(&e.value, e.line, "sweep_sites")?;
    }
    if let Some(e) = get("t_min") {
        cfg.t_min = parse_f64(&e.value, e.line, "t_min")?;
    }
    if let Some(e) = get("t_max") {
        cfg.t_max = parse_f64(&e.value, e.line, "t_max")?;
    }
    if let Some(e) = get("dt") {
        cfg.dt = parse_f64(&e.value, e.line, "dt")?;
    }
    if let Some(e) = get("window") {
        let parts = parse_f64_grid(&e.value, e.line, "window")?;
        if parts.len() != 2 {
            return Err(err_at(e.line, "`window` expects two values: start,end"));
        }
        cfg.window = (parts[0], parts[1]);
    }
    if let Some(e) = get("engine") {
        cfg.engine = match e.value.as_str() {
            "auto" => EngineChoice::Auto,
            "quadratic" => EngineChoice::Quadratic,
            "bdg" => EngineChoice::Bdg,
            "exact" => EngineChoice::Exact,
            other => {
                return Err(err_at(e.line, format!("unknown engine `{other}`")));
            }
        };
    }
    if let Some(e) = get("out") {
        cfg.out = PathBuf::from(&e.value);
    }
    if let Some(e) = get("workers") {
        cfg.workers = parse_usize(&e.value, e.line, "workers")?;
    }
    if let Some(e) = get("allow_large") {
        cfg.allow_large = match e.value.as_str() {
            "true" => true,
            "false" => false,
            other => {
                return Err(err_at(
                    e.line,
                    format!("`allow_large` expects true/false, got `{other}`"),
                ));
            }
        };
    }

    validate(&cfg)?;
    Ok(cfg)
}

fn defaults_for(experiment: Experiment) -> SweepConfig {
    let mut cfg = SweepConfig {
        experiment,
        length: 250,
        lambda_grid: vec![1.0],
        beta: INV_GOLDEN_RATIO,
        kappa: 0.0,
        field_grid: grid(0.05, 2.0, 0.05),
        epsilon: EpsilonRule::Auto,
        init: InitConfig::GroundState,
        frozen_rule: FrozenRule::Middle,
        targets: TargetSpec::Distances(vec![3]),
        target_site: None,
        sweep_sites: Vec::new(),
        t_min: 0.0,
        t_max: 30.0,
        dt: 1.0,
        window: (100.0, 200.0),
        engine: EngineChoice::Auto,
        out: PathBuf::from("results.csv"),
        workers: 0,
        allow_large: false,
    };
    match experiment {
        Experiment::AahHeatmap => {
            cfg.length = 610;
            cfg.lambda_grid = grid(0.1, 3.5, 0.05);
            cfg.init = InitConfig::Neel;
            cfg.frozen_rule = FrozenRule::Fibonacci;
            cfg.targets = TargetSpec::Distances((1..=30).collect());
            cfg.t_max = 200.0;
        }
        Experiment::AahCrosscut => {
            cfg.length = 610;
            cfg.lambda_grid = grid(0.1, 3.5, 0.05);
            cfg.init = InitConfig::Neel;
            cfg.frozen_rule = FrozenRule::Fibonacci;
            cfg.targets = TargetSpec::Distances(vec![1, 15]);
            cfg.t_max = 200.0;
        }
        Experiment::TfimMap => {}
        Experiment::TfimProfile => {
            cfg.field_grid = vec![0.5];
            cfg.targets = TargetSpec::Profile;
            cfg.t_min = 10.0;
            cfg.dt = 5.0;
        }
        Experiment::AnnniEd => {
            cfg.length = 12;
            cfg.kappa = 0.2;
        }
        Experiment::DeltaSg => {
            cfg.t_min = 0.0;
            cfg.t_max = 0.0;
        }
        Experiment::FrozenSiteSweep => {
            cfg.field_grid = vec![0.9];
            cfg.t_min = 30.0;
        }
    }
    cfg
}

fn grid(start: f64, stop: f64, step: f64) -> Vec<f64> {
    let n = ((stop - start) / step + 1e-9).floor() as usize;
    (0..=n).map(|i| start + i as f64 * step).collect()
}

/// Dense-matrix guard shared with the engines: nothing above 6000².
pub const DENSE_GUARD: usize = 6000;
/// State-vector guard: nothing above 2^14 amplitudes in an experiment.
pub const STATE_GUARD_SITES: usize = 14;
/// Chains above this size need `allow_large = true`.
pub const LARGE_CHAIN_OPT_IN: usize = 1000;

fn validate(cfg: &SweepConfig) -> Result<(), ConfigError> {
    let exp = cfg.experiment;
    if cfg.length < 2 {
        return Err(err("`L` must be at least 2"));
    }
    if cfg.dt <= 0.0 {
        return Err(err("`dt` must be positive"));
    }
    if cfg.t_min < 0.0 || cfg.t_max < cfg.t_min {
        return Err(err("time grid must satisfy 0 ≤ t_min ≤ t_max"));
    }
    if !(0.0..0.5).contains(&cfg.kappa) {
        return Err(err(format!(
            "`kappa` must lie in [0, 0.5), got {}",
            cfg.kappa
        )));
    }
    if cfg.field_grid.is_empty() {
        return Err(err("`b_grid` is empty"));
    }
    if cfg.lambda_grid.is_empty() {
        return Err(err("`lambda_grid` is empty"));
    }
    if let TargetSpec::Distances(d) = &cfg.targets {
        if d.is_empty() {
            return Err(err("`targets` is empty"));
        }
        if d.iter().any(|&x| x == 0) {
            return Err(err("`targets` distances must be at least 1"));
        }
    }
    if exp.is_aah() {
        if cfg.lambda_grid.iter().any(|&l| l < 0.0) {
            return Err(err("`lambda_grid` values must be non-negative"));
        }
        if cfg.length > DENSE_GUARD {
            return Err(err(format!(
                "L = {} exceeds the dense-matrix guard ({DENSE_GUARD})",
                cfg.length
            )));
        }
        if cfg.length > LARGE_CHAIN_OPT_IN && !cfg.allow_large {
            return Err(err(format!(
                "L = {} needs `allow_large = true` (expect minutes per eigendecomposition)",
                cfg.length
            )));
        }
        if cfg.window.0 < 0.0 || cfg.window.1 < cfg.window.0 || cfg.window.1 > cfg.t_max + 1e-9 {
            return Err(err("`window` must satisfy 0 ≤ start ≤ end ≤ t_max"));
        }
    } else {
        if cfg.field_grid.iter().any(|&b| b < 0.0) {
            return Err(err("`b_grid` values must be non-negative"));
        }
        if 2 * cfg.length > DENSE_GUARD {
            return Err(err(format!(
                "2L = {} exceeds the dense-matrix guard ({DENSE_GUARD})",
                2 * cfg.length
            )));
        }
    }

    let exact_engine = cfg.engine == EngineChoice::Exact
        || (cfg.engine == EngineChoice::Auto && resolved_auto_is_exact(cfg));
    if exact_engine && cfg.length > STATE_GUARD_SITES {
        return Err(err(format!(
            "L = {} exceeds the exact-engine guard of {STATE_GUARD_SITES} sites \
             (2^L amplitudes)",
            cfg.length
        )));
    }

    if exp == Experiment::FrozenSiteSweep {
        let a = cfg.target_site.unwrap_or(cfg.length.div_ceil(2));
        if a < 1 || a > cfg.length {
            return Err(err(format!("`target_site` {a} out of range")));
        }
    }
    if let EpsilonRule::Fixed(e) = cfg.epsilon {
        if e < 0.0 {
            return Err(err("`epsilon` must be non-negative"));
        }
    }
    Ok(())
}

/// Whether `engine = auto` resolves to the exact engine for this config.
pub fn resolved_auto_is_exact(cfg: &SweepConfig) -> bool {
    match cfg.experiment {
        Experiment::AnnniEd => true,
        Experiment::AahHeatmap | Experiment::AahCrosscut => false,
        _ => cfg.kappa != 0.0 || matches!(cfg.init, InitConfig::Ferromagnetic | InitConfig::Neel),
    }
}
