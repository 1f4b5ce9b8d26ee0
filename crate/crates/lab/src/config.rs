//! The TOML experiment file and its conversion into core types.
//!
//! Every section is optional except `[system]`; a subcommand fails with a
//! config error when its own section is missing. Unknown keys are errors.

use std::path::Path;

use lilsde_core::coefficients::BoxRegion;
use lilsde_core::lil::{default_burn_in, LilConfig, Statistics};
use lilsde_core::{
    integrate_skeleton, CoefficientSystem, Control, DistOptions, Family, FieldSystem, InitialCondition, LimitSystem,
    RateOptions, SamplePath,
};
use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    /// Worker threads for per-seed work; 0 picks the number of cores.
    #[serde(default)]
    pub threads: usize,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    pub system: SystemSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub limit: Option<FieldsSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial: Option<InitialSpec>,
    #[serde(default)]
    pub grid: GridSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub simulate: Option<SimulateSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub skeleton: Option<SkeletonSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rate: Option<RateSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dist: Option<DistSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lil: Option<LilSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub check_h: Option<CheckHSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub check_c: Option<CheckCSpec>,
}

fn default_seeds() -> Vec<u64> {
    vec![0]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FamilySpec {
    pub family: String,
    #[serde(default)]
    pub params: Vec<f64>,
}

impl FamilySpec {
    fn build(&self, dim: usize) -> Result<Family> {
        Ok(Family::from_name(&self.family, dim, &self.params)?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemSpec {
    pub dim: usize,
    pub drift: FamilySpec,
    pub diffusion: Vec<FamilySpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FieldsSpec {
    pub drift: FamilySpec,
    pub diffusion: Vec<FamilySpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitialSpec {
    Point { value: Vec<f64> },
    Endpoint,
    RunningMax { coord: usize },
    Gaussian { seed: u64, scale: f64 },
    Cauchy { seed: u64, scale: f64 },
    Bounded { bound: f64, inner: Box<InitialSpec> },
}

impl InitialSpec {
    pub fn build(&self) -> InitialCondition {
        match self {
            InitialSpec::Point { value } => InitialCondition::Point(value.clone()),
            InitialSpec::Endpoint => InitialCondition::Endpoint,
            InitialSpec::RunningMax { coord } => InitialCondition::RunningMax { coord: *coord },
            InitialSpec::Gaussian { seed, scale } => InitialCondition::Gaussian {
                seed: *seed,
                scale: *scale,
            },
            InitialSpec::Cauchy { seed, scale } => InitialCondition::Cauchy {
                seed: *seed,
                scale: *scale,
            },
            InitialSpec::Bounded { bound, inner } => InitialCondition::Bounded {
                inner: Box::new(inner.build()),
                bound: *bound,
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    #[serde(default = "default_ratio")]
    pub ratio: f64,
    #[serde(default = "default_windows")]
    pub windows: usize,
    #[serde(default = "default_resolution")]
    pub resolution: f64,
}

fn default_ratio() -> f64 {
    2.0
}
fn default_windows() -> usize {
    10
}
fn default_resolution() -> f64 {
    1e-3
}

impl Default for GridSpec {
    fn default() -> Self {
        Self {
            ratio: default_ratio(),
            windows: default_windows(),
            resolution: default_resolution(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SchemeSpec {
    Heun,
    ItoEuler,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RescaleMethod {
    /// Solve the original equation to `u` and rescale.
    Flow,
    /// Integrate the rescaled equation on `[0, 1]` directly.
    Direct,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateSpec {
    /// Scale of `ξ^u`; without it the solution itself is dumped on `[0, horizon]`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub u: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub horizon: Option<f64>,
    #[serde(default = "default_cells")]
    pub cells: usize,
    #[serde(default = "default_scheme")]
    pub scheme: SchemeSpec,
    #[serde(default = "default_rescale_method")]
    pub method: RescaleMethod,
    /// Steps of the direct route; defaults to `u / resolution`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub steps: Option<usize>,
}

fn default_cells() -> usize {
    256
}
fn default_scheme() -> SchemeSpec {
    SchemeSpec::Heun
}
fn default_rescale_method() -> RescaleMethod {
    RescaleMethod::Flow
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ControlSpec {
    /// The same derivative on every cell.
    Constant { cells: usize, rate: Vec<f64> },
    /// Row-major `cells × k` derivative values.
    Values { cells: usize, values: Vec<f64> },
}

impl ControlSpec {
    pub fn build(&self, noise_dim: usize) -> Result<Control> {
        let c = match self {
            ControlSpec::Constant { cells, rate } => Control::new(*cells, rate.len(), rate.repeat(*cells))?,
            ControlSpec::Values { cells, values } => Control::new(*cells, noise_dim, values.clone())?,
        };
        if c.noise_dim() != noise_dim {
            return Err(LabError::Config(format!(
                "control has {} noise coordinates but the system has {noise_dim}",
                c.noise_dim()
            )));
        }
        Ok(c)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PathSpec {
    /// Row-major `(cells + 1) × d` values at `t_j = j / cells`.
    Values { values: Vec<f64> },
    /// `g_l(t) = Σ_n coefficients[l][n] t^n`.
    Polynomial { cells: usize, coefficients: Vec<Vec<f64>> },
    /// `g_l(t) = offset_l + amplitude_l sin(frequency_l t)`.
    Sine {
        cells: usize,
        amplitude: Vec<f64>,
        frequency: Vec<f64>,
        #[serde(default)]
        offset: Vec<f64>,
    },
    /// The skeleton `F̃_0(f)` of a control from the origin.
    Skeleton {
        control: ControlSpec,
        #[serde(default = "default_substeps")]
        substeps: usize,
    },
}

fn default_substeps() -> usize {
    lilsde_core::skeleton::DEFAULT_SUBSTEPS
}

impl PathSpec {
    pub fn build(&self, limit: &LimitSystem) -> Result<SamplePath> {
        let d = limit.dim();
        let per_coord = |what: &str, v: &[f64]| -> Result<()> {
            if v.len() != d {
                return Err(LabError::Config(format!(
                    "path {what} needs {d} entries, found {}",
                    v.len()
                )));
            }
            Ok(())
        };
        match self {
            PathSpec::Values { values } => Ok(SamplePath::new(d, values.clone())?),
            PathSpec::Polynomial { cells, coefficients } => {
                if coefficients.len() != d {
                    return Err(LabError::Config(format!(
                        "path coefficients need {d} rows, found {}",
                        coefficients.len()
                    )));
                }
                Ok(SamplePath::from_fn(d, positive(*cells, "path cells")?, |t, out| {
                    for (o, c) in out.iter_mut().zip(coefficients) {
                        *o = c.iter().rev().fold(0.0, |acc, a| acc * t + a);
                    }
                }))
            }
            PathSpec::Sine {
                cells,
                amplitude,
                frequency,
                offset,
            } => {
                per_coord("amplitude", amplitude)?;
                per_coord("frequency", frequency)?;
                let offset = if offset.is_empty() {
                    vec![0.0; d]
                } else {
                    offset.clone()
                };
                per_coord("offset", &offset)?;
                Ok(SamplePath::from_fn(d, positive(*cells, "path cells")?, |t, out| {
                    for l in 0..d {
                        out[l] = offset[l] + amplitude[l] * (frequency[l] * t).sin();
                    }
                }))
            }
            PathSpec::Skeleton { control, substeps } => {
                let f = control.build(limit.noise_dim())?;
                Ok(integrate_skeleton(limit, &f, &vec![0.0; d], *substeps)?)
            }
        }
    }
}

fn positive(n: usize, what: &str) -> Result<usize> {
    if n == 0 {
        return Err(LabError::Config(format!("{what} must be positive")));
    }
    Ok(n)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SkeletonSpec {
    pub control: ControlSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x0: Option<Vec<f64>>,
    #[serde(default = "default_substeps")]
    pub substeps: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RateMethodSpec {
    Variational,
    Exact,
    Both,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RateSpec {
    pub target: PathSpec,
    #[serde(default = "default_control_cells")]
    pub cells: usize,
    #[serde(default = "default_rate_method")]
    pub method: RateMethodSpec,
    #[serde(default = "default_substeps")]
    pub substeps: usize,
    #[serde(default = "default_penalty")]
    pub penalty: f64,
    #[serde(default = "default_betas")]
    pub betas: Vec<f64>,
    #[serde(default = "default_tolerance")]
    pub tolerance: f64,
    #[serde(default = "default_starts")]
    pub starts: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_rate_max_iter")]
    pub max_iter: usize,
    #[serde(default = "default_rate_stall")]
    pub stall_tol: f64,
}

fn default_control_cells() -> usize {
    64
}
fn default_rate_method() -> RateMethodSpec {
    RateMethodSpec::Variational
}
fn default_penalty() -> f64 {
    RateOptions::default().penalty
}
fn default_betas() -> Vec<f64> {
    RateOptions::default().betas
}
fn default_tolerance() -> f64 {
    RateOptions::default().tolerance
}
fn default_starts() -> usize {
    RateOptions::default().starts
}
fn default_rate_max_iter() -> usize {
    RateOptions::default().max_iter
}
fn default_rate_stall() -> f64 {
    RateOptions::default().stall_tol
}

impl RateSpec {
    pub fn options(&self) -> RateOptions {
        RateOptions {
            substeps: self.substeps,
            penalty: self.penalty,
            betas: self.betas.clone(),
            tolerance: self.tolerance,
            starts: self.starts,
            seed: self.seed,
            max_iter: self.max_iter,
            stall_tol: self.stall_tol,
            start: None,
        }
    }
}

/// Optimizer settings of the distance to `Θ`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DistTuning {
    #[serde(default = "default_substeps")]
    pub substeps: usize,
    #[serde(default = "default_energy_cap")]
    pub energy_cap: f64,
    #[serde(default = "default_betas")]
    pub betas: Vec<f64>,
    #[serde(default = "default_starts")]
    pub starts: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_dist_max_iter")]
    pub max_iter: usize,
    #[serde(default = "default_dist_stall")]
    pub stall_tol: f64,
}

fn default_energy_cap() -> f64 {
    1.0
}
fn default_dist_max_iter() -> usize {
    DistOptions::default().max_iter
}
fn default_dist_stall() -> f64 {
    DistOptions::default().stall_tol
}

impl Default for DistTuning {
    fn default() -> Self {
        Self {
            substeps: default_substeps(),
            energy_cap: default_energy_cap(),
            betas: default_betas(),
            starts: default_starts(),
            seed: 0,
            max_iter: default_dist_max_iter(),
            stall_tol: default_dist_stall(),
        }
    }
}

impl DistTuning {
    pub fn options(&self) -> DistOptions {
        DistOptions {
            substeps: self.substeps,
            betas: self.betas.clone(),
            energy_cap: self.energy_cap,
            starts: self.starts,
            seed: self.seed,
            max_iter: self.max_iter,
            stall_tol: self.stall_tol,
            start: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DistSpec {
    pub target: PathSpec,
    #[serde(default = "default_control_cells")]
    pub cells: usize,
    #[serde(default)]
    pub optimizer: DistTuning,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LilSpec {
    /// Defaults to the smallest `i` with `c^(i-1) > e^e`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub burn_in: Option<usize>,
    #[serde(default = "default_cells")]
    pub cells: usize,
    #[serde(default = "default_rho")]
    pub rho: f64,
    #[serde(default = "default_gamma_points")]
    pub gamma_points: usize,
    #[serde(default = "default_control_cells")]
    pub control_cells: usize,
    #[serde(default = "yes")]
    pub theta: bool,
    #[serde(default = "yes")]
    pub gamma: bool,
    #[serde(default)]
    pub targets: Vec<ControlSpec>,
    /// Extra non-geometric scales for the continuous-scale scan.
    #[serde(default)]
    pub u_scan: Vec<f64>,
    #[serde(default)]
    pub optimizer: DistTuning,
}

fn default_rho() -> f64 {
    0.5
}
fn default_gamma_points() -> usize {
    8
}
fn yes() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckHSpec {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    pub scales: Vec<f64>,
    #[serde(default = "default_grid_n")]
    pub grid_n: usize,
    #[serde(default = "default_h_tol")]
    pub tol: f64,
}

fn default_grid_n() -> usize {
    21
}
fn default_h_tol() -> f64 {
    1e-6
}

impl CheckHSpec {
    pub fn region(&self) -> Result<BoxRegion> {
        Ok(BoxRegion::new(self.lo.clone(), self.hi.clone())?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckCSpec {
    pub scales: Vec<f64>,
    #[serde(default = "default_delta")]
    pub delta: f64,
    #[serde(default = "default_mc_samples")]
    pub mc_samples: usize,
    #[serde(default)]
    pub mc_seed: u64,
    #[serde(default = "default_resolution")]
    pub mc_resolution: f64,
}

fn default_delta() -> f64 {
    1.0
}
fn default_mc_samples() -> usize {
    10_000
}

impl Config {
    /// Parses a config file; `overrides` are `dotted.key=value` pairs applied on top.
    pub fn load(path: &Path, overrides: &[String]) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(LabError::io(path))?;
        Self::parse(&text, overrides).map_err(|e| match e {
            LabError::Config(msg) => LabError::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn parse(text: &str, overrides: &[String]) -> Result<Self> {
        if overrides.is_empty() {
            return toml::from_str(text).map_err(|e| LabError::Config(e.to_string()));
        }
        let mut table: toml::Table = toml::from_str(text).map_err(|e| LabError::Config(e.to_string()))?;
        for o in overrides {
            apply_override(&mut table, o)?;
        }
        Config::deserialize(table).map_err(|e| LabError::Config(format!("after overrides: {e}")))
    }

    /// Canonical TOML of the resolved config, echoed next to the outputs.
    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| LabError::Config(e.to_string()))
    }

    pub fn coefficient_system(&self) -> Result<CoefficientSystem> {
        let d = self.system.dim;
        let sys = CoefficientSystem::from_families(
            self.system.drift.build(d)?,
            self.system
                .diffusion
                .iter()
                .map(|f| f.build(d))
                .collect::<Result<_>>()?,
        )?;
        match &self.limit {
            Some(l) => Ok(sys.with_limit(self.limit_fields(l)?)?),
            None => Ok(sys),
        }
    }

    fn limit_fields(&self, l: &FieldsSpec) -> Result<LimitSystem> {
        let d = self.system.dim;
        Ok(LimitSystem::from_families(
            l.drift.build(d)?,
            l.diffusion.iter().map(|f| f.build(d)).collect::<Result<_>>()?,
        )?)
    }

    /// The declared limit fields, or the system itself when none are declared.
    pub fn limit_system(&self) -> Result<LimitSystem> {
        let sys = self.coefficient_system()?;
        Ok(sys.limit().cloned().unwrap_or_else(|| sys.as_limit()))
    }

    pub fn initial_condition(&self) -> InitialCondition {
        match &self.initial {
            Some(spec) => spec.build(),
            None => InitialCondition::Point(vec![0.0; self.system.dim]),
        }
    }

    pub fn lil_config(&self) -> Result<LilConfig> {
        let spec = self.lil.as_ref().ok_or_else(|| missing("lil"))?;
        let system = self.coefficient_system()?;
        let mut cfg = LilConfig::new(system, self.initial_condition());
        cfg.limit = self.limit_system()?;
        cfg.ratio = self.grid.ratio;
        cfg.windows = self.grid.windows;
        cfg.resolution = self.grid.resolution;
        cfg.cells = spec.cells;
        cfg.burn_in = spec.burn_in.unwrap_or_else(|| default_burn_in(self.grid.ratio));
        cfg.seeds = self.seeds.clone();
        cfg.rho = spec.rho;
        cfg.targets = spec
            .targets
            .iter()
            .map(|t| t.build(cfg.system.noise_dim()))
            .collect::<Result<_>>()?;
        cfg.gamma_points = spec.gamma_points;
        cfg.control_cells = spec.control_cells;
        cfg.dist = spec.optimizer.options();
        cfg.statistics = Statistics {
            theta: spec.theta,
            gamma: spec.gamma,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

pub(crate) fn missing(section: &str) -> LabError {
    LabError::Config(format!("missing [{section}] section"))
}

fn apply_override(table: &mut toml::Table, item: &str) -> Result<()> {
    let (key, raw) = item
        .split_once('=')
        .ok_or_else(|| LabError::Config(format!("override `{item}` is not of the form key=value")))?;
    let key = key.trim();
    let value = parse_value(raw.trim());
    let mut parts: Vec<&str> = key.split('.').collect();
    let last = parts
        .pop()
        .filter(|k| !k.is_empty())
        .ok_or_else(|| LabError::Config(format!("empty override key in `{item}`")))?;
    let mut cursor = table;
    for part in parts {
        let entry = cursor
            .entry(part.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cursor = entry
            .as_table_mut()
            .ok_or_else(|| LabError::Config(format!("override `{key}`: `{part}` is not a section")))?;
    }
    cursor.insert(last.to_string(), value);
    Ok(())
}

/// A TOML value when the text parses as one, a bare string otherwise.
fn parse_value(raw: &str) -> toml::Value {
    toml::from_str::<toml::Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    const BROWNIAN: &str = r#"
seeds = [1, 2]

[system]
dim = 1
drift = { family = "zero" }
diffusion = [{ family = "constant", params = [1.0] }]

[grid]
windows = 8

[dist]
target = { kind = "polynomial", cells = 64, coefficients = [[0.0, 2.0]] }
"#;

    #[test]
    fn parses_and_echoes() {
        let cfg = Config::parse(BROWNIAN, &[]).unwrap();
        assert_eq!(cfg.seeds, vec![1, 2]);
        assert_eq!(cfg.grid.windows, 8);
        assert_eq!(cfg.grid.ratio, 2.0);
        let again = Config::parse(&cfg.to_toml().unwrap(), &[]).unwrap();
        assert_eq!(again, cfg);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let text = BROWNIAN.replace("windows = 8", "windws = 8");
        let err = Config::parse(&text, &[]).unwrap_err().to_string();
        assert!(err.contains("windws"), "{err}");
        assert!(err.contains("line"), "{err}");
        assert!(Config::parse(BROWNIAN, &["grid.windws=3".into()]).is_err());
    }

    #[test]
    fn overrides_take_precedence() {
        let cfg = Config::parse(
            BROWNIAN,
            &[
                "grid.windows=12".into(),
                "seeds=[4]".into(),
                "lil.rho = 0.25".into(),
                "system.drift.family=zero".into(),
            ],
        )
        .unwrap();
        assert_eq!(cfg.grid.windows, 12);
        assert_eq!(cfg.seeds, vec![4]);
        assert_eq!(cfg.lil.unwrap().rho, 0.25);
        assert!(Config::parse(BROWNIAN, &["nonsense".into()]).is_err());
    }

    #[test]
    fn paths_are_built_from_specs() {
        let cfg = Config::parse(BROWNIAN, &[]).unwrap();
        let limit = cfg.limit_system().unwrap();
        let g = cfg.dist.unwrap().target.build(&limit).unwrap();
        assert_eq!(g.cells(), 64);
        assert!((g.end()[0] - 2.0).abs() < 1e-15);
        let sk = PathSpec::Skeleton {
            control: ControlSpec::Constant {
                cells: 8,
                rate: vec![1.0],
            },
            substeps: 4,
        }
        .build(&limit)
        .unwrap();
        assert!((sk.end()[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn unknown_family_is_a_config_error() {
        let text = BROWNIAN.replace("\"zero\"", "\"zeroo\"");
        let cfg = Config::parse(&text, &[]).unwrap();
        let err = cfg.coefficient_system().unwrap_err();
        assert_eq!(err.exit_code(), 2);
        assert!(err.to_string().contains("zeroo"));
    }
}
