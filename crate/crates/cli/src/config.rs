//! `section.key = value` run configuration.

use std::collections::BTreeMap;
use std::fmt::{self, Write as _};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use subrh_core::flow::{InitOptions, Integrator, StopCriteria};
use subrh_core::ops;
use subrh_core::targets::{Mode, Target};
use subrh_core::Grid;

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("line {line}: {msg}")]
    Syntax { line: usize, msg: String },
    #[error("unknown key `{0}`")]
    UnknownKey(String),
    #[error("key `{0}` given twice")]
    Duplicate(String),
    #[error("`{key}`: {msg}")]
    Invalid { key: String, msg: String },
}

fn invalid(key: &str, msg: impl Into<String>) -> ConfigError {
    ConfigError::Invalid { key: key.to_string(), msg: msg.into() }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scenario {
    Heat,
    Flow,
    Picard,
    Homotopy,
    KernelProbe,
    CcBall,
    DistanceMonotone,
}

impl Scenario {
    pub const ALL: [Scenario; 7] = [
        Scenario::Heat,
        Scenario::Flow,
        Scenario::Picard,
        Scenario::Homotopy,
        Scenario::KernelProbe,
        Scenario::CcBall,
        Scenario::DistanceMonotone,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Scenario::Heat => "heat",
            Scenario::Flow => "flow",
            Scenario::Picard => "picard",
            Scenario::Homotopy => "homotopy",
            Scenario::KernelProbe => "kernel_probe",
            Scenario::CcBall => "cc_ball",
            Scenario::DistanceMonotone => "distance_monotone",
        }
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Scenario {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        Scenario::ALL
            .into_iter()
            .find(|c| c.as_str() == s)
            .ok_or_else(|| format!("unknown scenario `{s}`"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DtSpec {
    Auto,
    Fixed(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerdictConfig {
    pub monotone_tol: f64,
    pub identity_c: f64,
    pub convexity_c: f64,
    pub reeb_t0: f64,
    pub reeb_c: f64,
    pub distance_c: f64,
    pub energy_c: f64,
    pub tau_margin: f64,
    pub agreement_c: f64,
    pub mass_tol: f64,
}

impl Default for VerdictConfig {
    fn default() -> Self {
        let m = subrh_core::diagnostics::MonotonicityTolerances::default();
        VerdictConfig {
            monotone_tol: m.monotone,
            identity_c: m.identity_c,
            convexity_c: m.convexity_c,
            reeb_t0: 0.05,
            reeb_c: 1.0,
            distance_c: 1.0,
            energy_c: 1.0,
            tau_margin: 10.0,
            agreement_c: 1.0,
            mass_tol: 1e-12,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub scenario: Scenario,
    pub seed: u64,
    pub out_dir: PathBuf,
    pub record_every: usize,
    pub grid_n: usize,
    pub dt: DtSpec,
    pub target: String,
    pub target_k: Option<usize>,
    pub mode: Option<Mode>,
    pub integrator: Integrator,
    pub reproject_every: Option<usize>,
    pub max_steps: Option<usize>,
    pub stop: StopCriteria,
    pub init_modes: u32,
    pub init_amplitude: f64,
    pub init_z_dependent: bool,
    pub init_winding: [[i32; 2]; 2],
    pub snapshots: bool,
    pub verdict: VerdictConfig,
    pub heat_steps: usize,
    /// Picard horizons as multiples of `dt`.
    pub picard_horizons: Vec<usize>,
    pub picard_k_max: usize,
    pub homotopy_shift: [f64; 2],
    pub homotopy_subdivisions: usize,
    pub kernel_t_lo: f64,
    pub kernel_t_hi: f64,
    pub kernel_samples: usize,
    pub cc_delta_max: f64,
    pub distance_seed_b: Option<u64>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            scenario: Scenario::Flow,
            seed: 0,
            out_dir: PathBuf::from("out"),
            record_every: 1,
            grid_n: 16,
            dt: DtSpec::Auto,
            target: "clifford".into(),
            target_k: None,
            mode: None,
            integrator: Integrator::Explicit,
            reproject_every: Some(1),
            max_steps: None,
            stop: StopCriteria::default(),
            init_modes: 3,
            init_amplitude: 0.3,
            init_z_dependent: false,
            init_winding: [[0, 0], [0, 0]],
            snapshots: true,
            verdict: VerdictConfig::default(),
            heat_steps: 10_000,
            picard_horizons: vec![8, 16, 32, 64, 128],
            picard_k_max: 5,
            homotopy_shift: [0.3, 0.7],
            homotopy_subdivisions: 16,
            kernel_t_lo: 0.005,
            kernel_t_hi: 0.05,
            kernel_samples: 12,
            cc_delta_max: 0.25,
            distance_seed_b: None,
        }
    }
}

/// Splits the text into `(line, key, value)` triples, skipping blanks and `#` comments.
pub fn parse_pairs(text: &str) -> Result<BTreeMap<String, String>, ConfigError> {
    let mut out = BTreeMap::new();
    for (no, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((k, v)) = line.split_once('=') else {
            return Err(ConfigError::Syntax { line: no + 1, msg: format!("expected `key = value`, got `{line}`") });
        };
        let (k, v) = (k.trim(), v.trim());
        let depth = k.matches('.').count();
        if k.is_empty() || depth > 1 || k.split('.').any(|p| p.is_empty()) {
            return Err(ConfigError::Syntax { line: no + 1, msg: format!("bad key `{k}` (use `key` or `section.key`)") });
        }
        if out.insert(k.to_string(), v.to_string()).is_some() {
            return Err(ConfigError::Duplicate(k.to_string()));
        }
    }
    Ok(out)
}

fn parse<T: FromStr>(key: &str, v: &str) -> Result<T, ConfigError>
where
    T::Err: fmt::Display,
{
    v.parse::<T>().map_err(|e| invalid(key, format!("cannot parse `{v}`: {e}")))
}

fn parse_list<T: FromStr>(key: &str, v: &str) -> Result<Vec<T>, ConfigError>
where
    T::Err: fmt::Display,
{
    v.split(',').map(|p| parse(key, p.trim())).collect()
}

fn parse_opt_usize(key: &str, v: &str) -> Result<Option<usize>, ConfigError> {
    if v == "none" {
        Ok(None)
    } else {
        parse(key, v).map(Some)
    }
}

fn fmt_opt<T: fmt::Display>(v: &Option<T>) -> String {
    v.as_ref().map_or_else(|| "none".to_string(), ToString::to_string)
}

fn fmt_list<T: fmt::Display>(v: &[T]) -> String {
    v.iter().map(ToString::to_string).collect::<Vec<_>>().join(",")
}

impl RunConfig {
    pub fn from_file(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io { path: path.to_path_buf(), source })?;
        Self::from_text(&text)
    }

    /// Parses and validates. Unset keys keep their defaults.
    pub fn from_text(text: &str) -> Result<Self, ConfigError> {
        let mut c = RunConfig::default();
        for (k, v) in parse_pairs(text)? {
            c.set(&k, &v)?;
        }
        c.validate()?;
        Ok(c)
    }

    pub fn set(&mut self, key: &str, v: &str) -> Result<(), ConfigError> {
        match key {
            "scenario" => self.scenario = v.parse().map_err(|e: String| invalid(key, e))?,
            "seed" => self.seed = parse(key, v)?,
            "out_dir" => self.out_dir = PathBuf::from(v),
            "record_every" => self.record_every = parse(key, v)?,
            "grid.n" => self.grid_n = parse(key, v)?,
            "grid.dt" => self.dt = if v == "auto" { DtSpec::Auto } else { DtSpec::Fixed(parse(key, v)?) },
            "target.name" => self.target = v.to_string(),
            "target.k" => self.target_k = parse_opt_usize(key, v)?,
            "target.mode" => {
                self.mode = match v {
                    "extrinsic" => Some(Mode::Extrinsic),
                    "intrinsic" => Some(Mode::Intrinsic),
                    "auto" => None,
                    _ => return Err(invalid(key, "expected extrinsic, intrinsic or auto")),
                }
            }
            "flow.integrator" => {
                self.integrator = match v {
                    "explicit" => Integrator::Explicit,
                    "imex" => Integrator::Imex,
                    _ => return Err(invalid(key, "expected explicit or imex")),
                }
            }
            "flow.reproject_every" => self.reproject_every = parse_opt_usize(key, v)?,
            "flow.max_steps" => self.max_steps = parse_opt_usize(key, v)?,
            "stop.tau_tol_l2" => self.stop.tau_tol_l2 = parse(key, v)?,
            "stop.tau_tol_sup" => self.stop.tau_tol_sup = parse(key, v)?,
            "stop.t_max" => self.stop.t_max = parse(key, v)?,
            "stop.plateau_window" => self.stop.plateau_window = parse(key, v)?,
            "stop.plateau_tol" => self.stop.plateau_tol = parse(key, v)?,
            "stop.tangential" => self.stop.tangential = parse(key, v)?,
            "init.modes" => self.init_modes = parse(key, v)?,
            "init.amplitude" => self.init_amplitude = parse(key, v)?,
            "init.z_dependent" => self.init_z_dependent = parse(key, v)?,
            "init.winding" => {
                let w: Vec<i32> = parse_list(key, v)?;
                if w.len() != 4 {
                    return Err(invalid(key, "expected four integers w11,w12,w21,w22"));
                }
                self.init_winding = [[w[0], w[1]], [w[2], w[3]]];
            }
            "output.snapshots" => self.snapshots = parse(key, v)?,
            "verdict.monotone_tol" => self.verdict.monotone_tol = parse(key, v)?,
            "verdict.identity_c" => self.verdict.identity_c = parse(key, v)?,
            "verdict.convexity_c" => self.verdict.convexity_c = parse(key, v)?,
            "verdict.reeb_t0" => self.verdict.reeb_t0 = parse(key, v)?,
            "verdict.reeb_c" => self.verdict.reeb_c = parse(key, v)?,
            "verdict.distance_c" => self.verdict.distance_c = parse(key, v)?,
            "verdict.energy_c" => self.verdict.energy_c = parse(key, v)?,
            "verdict.tau_margin" => self.verdict.tau_margin = parse(key, v)?,
            "verdict.agreement_c" => self.verdict.agreement_c = parse(key, v)?,
            "verdict.mass_tol" => self.verdict.mass_tol = parse(key, v)?,
            "heat.steps" => self.heat_steps = parse(key, v)?,
            "picard.horizons" => self.picard_horizons = parse_list(key, v)?,
            "picard.k_max" => self.picard_k_max = parse(key, v)?,
            "homotopy.shift" => {
                let s: Vec<f64> = parse_list(key, v)?;
                if s.len() != 2 {
                    return Err(invalid(key, "expected two angles"));
                }
                self.homotopy_shift = [s[0], s[1]];
            }
            "homotopy.subdivisions" => self.homotopy_subdivisions = parse(key, v)?,
            "kernel.t_lo" => self.kernel_t_lo = parse(key, v)?,
            "kernel.t_hi" => self.kernel_t_hi = parse(key, v)?,
            "kernel.samples" => self.kernel_samples = parse(key, v)?,
            "cc.delta_max" => self.cc_delta_max = parse(key, v)?,
            "distance.seed_b" => self.distance_seed_b = parse_opt_usize(key, v)?.map(|s| s as u64),
            _ => return Err(ConfigError::UnknownKey(key.to_string())),
        }
        Ok(())
    }

    pub fn grid(&self) -> Result<Grid, ConfigError> {
        Grid::new(self.grid_n).map_err(|e| invalid("grid.n", e.to_string()))
    }

    /// Resolved time step; `auto` is `h²/10`.
    pub fn dt(&self) -> Result<f64, ConfigError> {
        let dt_max = ops::dt_max::<f64>(self.grid()?);
        Ok(match self.dt {
            DtSpec::Auto => dt_max,
            DtSpec::Fixed(d) => d,
        })
    }

    pub fn build_target(&self) -> Result<Target<f64>, ConfigError> {
        Target::by_name(&self.target, self.target_k).map_err(|e| invalid("target.name", e.to_string()))
    }

    pub fn init_options(&self) -> InitOptions {
        InitOptions {
            modes: self.init_modes,
            amplitude: self.init_amplitude,
            z_dependent: self.init_z_dependent,
            winding: self.init_winding,
        }
    }

    pub fn seed_b(&self) -> u64 {
        self.distance_seed_b.unwrap_or(self.seed.wrapping_add(1))
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let grid = self.grid()?;
        let target = self.build_target()?;
        if let Some(m) = self.mode {
            if m != target.mode() {
                return Err(invalid("target.mode", format!("target `{}` is {:?}", self.target, target.mode())));
            }
        }
        if self.record_every == 0 {
            return Err(invalid("record_every", "must be >= 1"));
        }
        let dt = self.dt()?;
        if !(dt > 0.0) || !dt.is_finite() {
            return Err(invalid("grid.dt", "must be positive"));
        }
        let dt_max = ops::dt_max::<f64>(grid);
        let explicit = self.integrator == Integrator::Explicit
            || matches!(self.scenario, Scenario::Heat | Scenario::Picard | Scenario::KernelProbe);
        if explicit && dt > dt_max * (1.0 + 1e-12) {
            return Err(invalid("grid.dt", format!("{dt} exceeds the explicit limit h²/10 = {dt_max}")));
        }
        self.stop.validate().map_err(|e| invalid("stop", e.to_string()))?;
        if self.max_steps == Some(0) {
            return Err(invalid("flow.max_steps", "must be >= 1"));
        }
        if self.reproject_every == Some(0) {
            return Err(invalid("flow.reproject_every", "must be >= 1 or none"));
        }
        if !(self.init_amplitude >= 0.0) {
            return Err(invalid("init.amplitude", "must be nonnegative"));
        }
        if self.init_winding != [[0, 0], [0, 0]] && self.target != "clifford" {
            return Err(invalid("init.winding", "only the clifford target carries winding"));
        }
        match self.scenario {
            Scenario::Heat => {
                if self.target != "euclidean" {
                    return Err(invalid("target.name", "the heat scenario runs on the euclidean target"));
                }
                if self.heat_steps == 0 {
                    return Err(invalid("heat.steps", "must be >= 1"));
                }
            }
            Scenario::Picard => {
                if self.picard_k_max < 3 {
                    return Err(invalid("picard.k_max", "must be >= 3"));
                }
                if self.picard_horizons.is_empty() || self.picard_horizons.contains(&0) {
                    return Err(invalid("picard.horizons", "need positive multiples of dt"));
                }
                if self.picard_horizons.windows(2).any(|w| w[1] <= w[0]) {
                    return Err(invalid("picard.horizons", "must be strictly increasing"));
                }
            }
            Scenario::Homotopy => {
                if self.target != "clifford" {
                    return Err(invalid("target.name", "the homotopy scenario needs the clifford target"));
                }
                if self.homotopy_subdivisions == 0 {
                    return Err(invalid("homotopy.subdivisions", "must be >= 1"));
                }
            }
            Scenario::KernelProbe => {
                if !(self.kernel_t_hi > self.kernel_t_lo) || self.kernel_samples < 2 {
                    return Err(invalid("kernel", "need t_lo < t_hi and at least two samples"));
                }
            }
            Scenario::CcBall => {
                let h = grid.h::<f64>();
                if self.cc_delta_max < 5.0 * h {
                    return Err(invalid("cc.delta_max", format!("must be at least 5h = {}", 5.0 * h)));
                }
            }
            Scenario::DistanceMonotone => {
                if self.seed_b() == self.seed {
                    return Err(invalid("distance.seed_b", "must differ from seed"));
                }
            }
            Scenario::Flow => {}
        }
        Ok(())
    }

    /// Canonical text form; parsing it gives back an equal config.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let mut kv = |k: &str, v: String| {
            let _ = writeln!(s, "{k} = {v}");
        };
        let w = self.init_winding;
        let v = &self.verdict;
        kv("scenario", self.scenario.to_string());
        kv("seed", self.seed.to_string());
        kv("out_dir", self.out_dir.display().to_string());
        kv("record_every", self.record_every.to_string());
        kv("grid.n", self.grid_n.to_string());
        kv("grid.dt", match self.dt {
            DtSpec::Auto => "auto".into(),
            DtSpec::Fixed(d) => d.to_string(),
        });
        kv("target.name", self.target.clone());
        kv("target.k", fmt_opt(&self.target_k));
        kv("target.mode", match self.mode {
            None => "auto".into(),
            Some(Mode::Extrinsic) => "extrinsic".into(),
            Some(Mode::Intrinsic) => "intrinsic".into(),
        });
        kv("flow.integrator", match self.integrator {
            Integrator::Explicit => "explicit".into(),
            Integrator::Imex => "imex".into(),
        });
        kv("flow.reproject_every", fmt_opt(&self.reproject_every));
        kv("flow.max_steps", fmt_opt(&self.max_steps));
        kv("stop.tau_tol_l2", self.stop.tau_tol_l2.to_string());
        kv("stop.tau_tol_sup", self.stop.tau_tol_sup.to_string());
        kv("stop.t_max", self.stop.t_max.to_string());
        kv("stop.plateau_window", self.stop.plateau_window.to_string());
        kv("stop.plateau_tol", self.stop.plateau_tol.to_string());
        kv("stop.tangential", self.stop.tangential.to_string());
        kv("init.modes", self.init_modes.to_string());
        kv("init.amplitude", self.init_amplitude.to_string());
        kv("init.z_dependent", self.init_z_dependent.to_string());
        kv("init.winding", fmt_list(&[w[0][0], w[0][1], w[1][0], w[1][1]]));
        kv("output.snapshots", self.snapshots.to_string());
        kv("verdict.monotone_tol", v.monotone_tol.to_string());
        kv("verdict.identity_c", v.identity_c.to_string());
        kv("verdict.convexity_c", v.convexity_c.to_string());
        kv("verdict.reeb_t0", v.reeb_t0.to_string());
        kv("verdict.reeb_c", v.reeb_c.to_string());
        kv("verdict.distance_c", v.distance_c.to_string());
        kv("verdict.energy_c", v.energy_c.to_string());
        kv("verdict.tau_margin", v.tau_margin.to_string());
        kv("verdict.agreement_c", v.agreement_c.to_string());
        kv("verdict.mass_tol", v.mass_tol.to_string());
        kv("heat.steps", self.heat_steps.to_string());
        kv("picard.horizons", fmt_list(&self.picard_horizons));
        kv("picard.k_max", self.picard_k_max.to_string());
        kv("homotopy.shift", fmt_list(&self.homotopy_shift));
        kv("homotopy.subdivisions", self.homotopy_subdivisions.to_string());
        kv("kernel.t_lo", self.kernel_t_lo.to_string());
        kv("kernel.t_hi", self.kernel_t_hi.to_string());
        kv("kernel.samples", self.kernel_samples.to_string());
        kv("cc.delta_max", self.cc_delta_max.to_string());
        kv("distance.seed_b", fmt_opt(&self.distance_seed_b));
        s
    }
}
