//! TOML run configuration.
//!
//! ```toml
//! [grid]
//! n_points = 32              # even, >= 4
//! dealias = "two_thirds"     # or "none"
//!
//! [physics]
//! nu = 0.1
//! nonlinear = true
//! [physics.forcing]          # optional
//! kind = "none"              # "steady_analytic" | "concentrated_pulse"
//! amplitude = 0.0
//! length_scale = 1.0
//! center = [3.14159, 3.14159, 3.14159]
//! ramp_time = 0.0
//!
//! [initial_condition]
//! kind = "taylor_green"      # "concentrated_vortex" | "random_analytic"
//! amplitude = 1.0
//! concentration = 1.0
//! seed = 0
//!
//! [step_control]
//! cfl_number = 0.5
//! dt_min = 1e-12
//! dt_max = 1e-2
//! t_end = 1.0
//! max_steps = 1000000
//! # fixed_dt = 1e-3
//!
//! [monitor]
//! # epsilon = ...            # default 1e-6 E(0)
//! # energy_cap = ...         # default 1e6 E(0)
//! d_digits = 4.0
//! relative_residual = false
//! # fit_window = [2, 8]
//! spectrum_every = 10
//!
//! [output]
//! directory = "run"
//! ledger_every = 1
//! snapshot_every = 0         # 0: final snapshot only
//!
//! [convergence]              # only read by `converge`
//! t_final = 0.05
//! norm = "l2"                # "linf" | { hs = 1.0 }
//! dt = 1e-3                  # spatial: fixed step
//! grids = [16, 24, 32]       # spatial
//! reference_n = 64
//! dts = [2e-3, 1e-3, 5e-4]   # temporal
//! reference_refinement = 8
//! order = 4
//! pairs = [[16, 2e-3], [24, 1e-3]]   # combined
//! reference = [64, 1.25e-4]
//! ```
//!
//! Only `grid.n_points`, `physics.nu` and `initial_condition.kind` are
//! required.

use std::ops::Range;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::convergence::{CombinedStudy, ErrorNorm, SpatialStudy, TemporalStudy};
use crate::dynamics::{ForcingSpec, InitialConditionSpec, PhysicsParams};
use crate::error::{Error, Result};
use crate::grid::{DealiasRule, GridSpec};
use crate::integrate::StepControl;
use crate::regularity::MonitorThresholds;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub n_points: usize,
    #[serde(default = "two_thirds")]
    pub dealias: DealiasRule,
}

fn two_thirds() -> DealiasRule {
    DealiasRule::TwoThirds
}

fn yes() -> bool {
    true
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhysicsConfig {
    pub nu: f64,
    #[serde(default = "yes")]
    pub nonlinear: bool,
    #[serde(default)]
    pub forcing: ForcingSpec,
}

impl PhysicsConfig {
    pub fn params(&self) -> PhysicsParams {
        PhysicsParams { nu: self.nu, forcing: self.forcing.clone(), nonlinear: self.nonlinear }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MonitorConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub energy_cap: Option<f64>,
    pub d_digits: f64,
    pub relative_residual: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fit_window: Option<[usize; 2]>,
    /// Spectrum sampling cadence in steps; 0 disables the resolution clause.
    pub spectrum_every: u64,
}

impl Default for MonitorConfig {
    fn default() -> Self {
        Self { epsilon: None, energy_cap: None, d_digits: 4.0, relative_residual: false, fit_window: None, spectrum_every: 10 }
    }
}

impl MonitorConfig {
    /// Thresholds with omitted values filled from the initial energy.
    pub fn thresholds(&self, initial_energy: f64) -> MonitorThresholds {
        let defaults = MonitorThresholds::defaults_for(initial_energy);
        let default_eps = if self.relative_residual { 1e-6 } else { defaults.epsilon };
        MonitorThresholds {
            epsilon: self.epsilon.unwrap_or(default_eps),
            energy_cap: self.energy_cap.unwrap_or(defaults.energy_cap),
            d_digits: self.d_digits,
            relative_residual: self.relative_residual,
        }
    }

    pub fn window(&self) -> Option<(usize, usize)> {
        self.fit_window.map(|[a, b]| (a, b))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputConfig {
    pub directory: PathBuf,
    /// Write every n-th ledger row; the first and last rows are always kept.
    pub ledger_every: u64,
    /// Snapshot cadence in steps; 0 writes only the final state.
    pub snapshot_every: u64,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self { directory: PathBuf::from("run"), ledger_every: 1, snapshot_every: 0 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ConvergenceConfig {
    pub t_final: f64,
    pub norm: ErrorNorm,
    pub dt: f64,
    pub grids: Vec<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reference_n: Option<usize>,
    pub dts: Vec<f64>,
    pub reference_refinement: u32,
    pub order: i32,
    pub pairs: Vec<(usize, f64)>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reference: Option<(usize, f64)>,
}

impl Default for ConvergenceConfig {
    fn default() -> Self {
        Self {
            t_final: 0.05,
            norm: ErrorNorm::L2,
            dt: 1e-3,
            grids: vec![],
            reference_n: None,
            dts: vec![],
            reference_refinement: TemporalStudy::DEFAULT_REFINEMENT,
            order: 4,
            pairs: vec![],
            reference: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub grid: GridConfig,
    pub physics: PhysicsConfig,
    pub initial_condition: InitialConditionSpec,
    #[serde(default)]
    pub step_control: StepControl,
    #[serde(default)]
    pub monitor: MonitorConfig,
    #[serde(default)]
    pub output: OutputConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub convergence: Option<ConvergenceConfig>,
}

impl RunConfig {
    /// Grid, checked on parse.
    pub fn grid_spec(&self) -> GridSpec {
        GridSpec::new(self.grid.n_points, self.grid.dealias).expect("validated grid")
    }

    /// Effective configuration as TOML; parses back to `self`.
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    fn convergence_or_default(&self) -> ConvergenceConfig {
        self.convergence.clone().unwrap_or_default()
    }

    pub fn spatial_study(&self) -> Result<SpatialStudy> {
        let c = self.convergence_or_default();
        if c.grids.len() < 3 {
            return Err(missing("convergence.grids", "spatial study needs at least 3 grids"));
        }
        let coarsest = *c.grids.iter().min().unwrap();
        let finest = *c.grids.iter().max().unwrap();
        let reference_n = c.reference_n.unwrap_or((4 * coarsest).max(2 * finest));
        Ok(SpatialStudy {
            ic: self.initial_condition.clone(),
            params: self.physics.params(),
            t_final: c.t_final,
            dt: c.dt,
            grids: c.grids,
            reference_n,
            dealias: self.grid.dealias,
            norm: c.norm,
        })
    }

    pub fn temporal_study(&self) -> Result<TemporalStudy> {
        let c = self.convergence_or_default();
        if c.dts.len() < 3 {
            return Err(missing("convergence.dts", "temporal study needs at least 3 time steps"));
        }
        Ok(TemporalStudy {
            ic: self.initial_condition.clone(),
            params: self.physics.params(),
            n_points: self.grid.n_points,
            dealias: self.grid.dealias,
            t_final: c.t_final,
            dts: c.dts,
            reference_refinement: c.reference_refinement,
            norm: c.norm,
            order: c.order,
        })
    }

    pub fn combined_study(&self) -> Result<CombinedStudy> {
        let c = self.convergence_or_default();
        if c.pairs.len() < 3 {
            return Err(missing("convergence.pairs", "combined study needs at least 3 (n_points, dt) pairs"));
        }
        let reference = c.reference.ok_or_else(|| missing("convergence.reference", "combined study needs a reference pair"))?;
        Ok(CombinedStudy {
            ic: self.initial_condition.clone(),
            params: self.physics.params(),
            t_final: c.t_final,
            pairs: c.pairs,
            reference,
            dealias: self.grid.dealias,
            norm: c.norm,
            order: c.order,
        })
    }
}

fn missing(key: &str, message: &str) -> Error {
    Error::Config { key: key.into(), line: 0, message: message.into() }
}

fn line_of(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].matches('\n').count() + 1
}

/// 1-based line of `key` inside `[section]`, or of the section header, or 0.
fn locate(text: &str, section: &str, key: &str) -> usize {
    let mut current = String::new();
    let mut header_line = 0;
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if let Some(h) = line.strip_prefix('[') {
            current = h.trim_end_matches(']').trim().to_string();
            if current == section {
                header_line = i + 1;
            }
            continue;
        }
        if current == section {
            if let Some((k, _)) = line.split_once('=') {
                if k.trim() == key {
                    return i + 1;
                }
            }
        }
    }
    header_line
}

fn key_from_message(message: &str) -> Option<String> {
    let start = message.find('`')? + 1;
    let len = message[start..].find('`')?;
    Some(message[start..start + len].to_string())
}

fn syntax_error(text: &str, e: toml::de::Error) -> Error {
    let span: Option<Range<usize>> = e.span();
    let line = span.as_ref().map(|s| line_of(text, s.start)).unwrap_or(0);
    let message = e.message().trim().to_string();
    let key = key_from_message(&message)
        .or_else(|| {
            span.map(|s| {
                text[s].split(['=', '\n']).next().unwrap_or("").trim().trim_matches(['[', ']']).to_string()
            })
        })
        .unwrap_or_default();
    Error::Config { key, line, message }
}

fn invalid(text: &str, section: &str, key: &str, message: impl Into<String>) -> Error {
    Error::Config { key: format!("{section}.{key}"), line: locate(text, section, key), message: message.into() }
}

fn check(text: &str, cfg: &RunConfig) -> Result<()> {
    let n = cfg.grid.n_points;
    if n % 2 != 0 {
        return Err(invalid(text, "grid", "n_points", "n_points must be even"));
    }
    if n < 4 {
        return Err(invalid(text, "grid", "n_points", "n_points must be >= 4"));
    }
    if !(cfg.physics.nu > 0.0 && cfg.physics.nu.is_finite()) {
        return Err(invalid(text, "physics", "nu", "nu must be positive"));
    }
    let f = &cfg.physics.forcing;
    if let Err(e) = f.validate() {
        let key = ["amplitude", "length_scale", "ramp_time", "center"]
            .into_iter()
            .find(|k| e.to_string().contains(k))
            .unwrap_or("kind");
        return Err(invalid(text, "physics.forcing", key, e.to_string()));
    }
    let ic = &cfg.initial_condition;
    if !ic.amplitude.is_finite() {
        return Err(invalid(text, "initial_condition", "amplitude", "amplitude must be finite"));
    }
    if !(ic.concentration > 0.0 && ic.concentration.is_finite()) {
        return Err(invalid(text, "initial_condition", "concentration", "concentration must be positive"));
    }
    if let Err(e) = cfg.step_control.validate() {
        let msg = e.to_string();
        let key = ["cfl_number", "dt_min", "dt_max", "t_end", "fixed_dt", "max_steps"]
            .into_iter()
            .find(|k| msg.contains(k))
            .unwrap_or("t_end");
        return Err(invalid(text, "step_control", key, msg));
    }
    let m = &cfg.monitor;
    for (key, v) in [("epsilon", m.epsilon), ("energy_cap", m.energy_cap)] {
        if let Some(v) = v {
            if !(v > 0.0) {
                return Err(invalid(text, "monitor", key, format!("{key} must be positive")));
            }
        }
    }
    if !(m.d_digits > 0.0) {
        return Err(invalid(text, "monitor", "d_digits", "d_digits must be positive"));
    }
    if let Some([lo, hi]) = m.fit_window {
        if lo > hi {
            return Err(invalid(text, "monitor", "fit_window", "fit_window must be [lo, hi] with lo <= hi"));
        }
    }
    if cfg.output.ledger_every == 0 {
        return Err(invalid(text, "output", "ledger_every", "ledger_every must be >= 1"));
    }
    if let Some(c) = &cfg.convergence {
        if !(c.t_final >= 0.0 && c.t_final.is_finite()) {
            return Err(invalid(text, "convergence", "t_final", "t_final must be finite and >= 0"));
        }
        if !(c.dt > 0.0) {
            return Err(invalid(text, "convergence", "dt", "dt must be positive"));
        }
        if c.grids.iter().chain(c.reference_n.iter()).chain(c.pairs.iter().map(|p| &p.0)).any(|n| n % 2 != 0 || *n < 4) {
            return Err(invalid(text, "convergence", "grids", "n_points must be even and >= 4"));
        }
        if c.dts.iter().chain(c.pairs.iter().map(|p| &p.1)).any(|d| !(*d > 0.0)) {
            return Err(invalid(text, "convergence", "dts", "time steps must be positive"));
        }
    }
    Ok(())
}

pub fn parse_config(text: &str) -> Result<RunConfig> {
    let cfg: RunConfig = toml::from_str(text).map_err(|e| syntax_error(text, e))?;
    check(text, &cfg)?;
    Ok(cfg)
}

pub fn load_config(path: &Path) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_config(&text)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::InitialKind;

    const MINIMAL: &str = "[grid]\nn_points = 32\n\n[physics]\nnu = 0.1\n\n[initial_condition]\nkind = \"taylor_green\"\n";

    fn config_error(text: &str) -> (String, usize, String) {
        match parse_config(text) {
            Err(Error::Config { key, line, message }) => (key, line, message),
            other => panic!("expected config error, got {other:?}"),
        }
    }

    #[test]
    fn minimal_config_gets_defaults() {
        let c = parse_config(MINIMAL).unwrap();
        assert_eq!(c.grid.dealias, DealiasRule::TwoThirds);
        assert!(c.physics.nonlinear);
        assert_eq!(c.physics.forcing, ForcingSpec::none());
        assert_eq!(c.initial_condition.kind, InitialKind::TaylorGreen);
        assert_eq!(c.initial_condition.amplitude, 1.0);
        assert_eq!(c.step_control, StepControl::default());
        assert_eq!(c.monitor, MonitorConfig::default());
        assert_eq!(c.output, OutputConfig::default());
        assert!(c.convergence.is_none());
    }

    #[test]
    fn echo_round_trips() {
        let mut c = parse_config(MINIMAL).unwrap();
        assert_eq!(parse_config(&c.to_toml()).unwrap(), c);
        c.step_control.fixed_dt = Some(1e-3);
        c.monitor.epsilon = Some(3.1e-5);
        c.monitor.fit_window = Some([2, 7]);
        c.convergence = Some(ConvergenceConfig {
            norm: ErrorNorm::Hs(1.5),
            grids: vec![8, 12, 16],
            pairs: vec![(8, 1e-2), (12, 5e-3)],
            reference: Some((32, 1e-4)),
            ..Default::default()
        });
        assert_eq!(parse_config(&c.to_toml()).unwrap(), c);
    }

    #[test]
    fn invariant_errors_name_key_and_line() {
        let (key, line, msg) = config_error(&MINIMAL.replace("32", "33"));
        assert_eq!((key.as_str(), line, msg.as_str()), ("grid.n_points", 2, "n_points must be even"));
        let (key, line, msg) = config_error(&MINIMAL.replace("0.1", "0.0"));
        assert_eq!((key.as_str(), line, msg.as_str()), ("physics.nu", 5, "nu must be positive"));
        let (key, line, _) = config_error(&format!("{MINIMAL}\n[step_control]\ncfl_number = 2.0\n"));
        assert_eq!((key.as_str(), line), ("step_control.cfl_number", 11));
    }

    #[test]
    fn syntax_errors_name_key_and_line() {
        let (key, line, _) = config_error(&format!("{MINIMAL}\n[output]\nbogus = 1\n"));
        assert_eq!((key.as_str(), line), ("bogus", 11));
        let (_, line, _) = config_error(&MINIMAL.replace("0.1", "\"fast\""));
        assert_eq!(line, 5);
        let (key, _, _) = config_error("[grid]\nn_points = 32\n");
        assert!(key.contains("physics"), "{key}");
    }

    #[test]
    fn monitor_defaults_scale_with_energy() {
        let c = parse_config(MINIMAL).unwrap();
        let th = c.monitor.thresholds(2.0);
        assert_eq!(th.epsilon, 2e-6);
        assert_eq!(th.energy_cap, 2e6);
        assert_eq!(th.d_digits, 4.0);
    }

    #[test]
    fn studies_need_schedules() {
        let c = parse_config(MINIMAL).unwrap();
        assert!(c.spatial_study().is_err());
        assert!(c.temporal_study().is_err());
        let c = parse_config(&format!("{MINIMAL}\n[convergence]\ngrids = [8, 12, 16]\ndts = [4e-3, 2e-3, 1e-3]\n")).unwrap();
        assert_eq!(c.spatial_study().unwrap().reference_n, 32);
        assert_eq!(c.temporal_study().unwrap().dts.len(), 3);
        assert!(c.combined_study().is_err());
    }
}
