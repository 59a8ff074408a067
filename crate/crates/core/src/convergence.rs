//! Empirical convergence studies: exponential decay of the spatial error in
//! `K`, algebraic order of the temporal error in `Δt`, and the combined
//! two-term model. Rates only; constants are never reported as recovered.

use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::diagnostics::{format_float, max_velocity};
use crate::dynamics::{make_initial_condition, InitialConditionSpec, NavierStokes, PhysicsParams};
use crate::error::{Error, Result};
use crate::field::{l2_norm_sq, sobolev_norm, SpectralField};
use crate::grid::{DealiasRule, GridSpec};
use crate::integrate::{integrate_fixed, SimulationState};
use crate::regularity::{fit_strip, shell_spectrum};
use crate::stats::linear_fit;

/// Spatial errors below this are treated as exact agreement when checking
/// monotonicity.
pub const ERROR_FLOOR: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorNorm {
    L2,
    Linf,
    /// Discrete `H^s`.
    Hs(f64),
}

impl ErrorNorm {
    pub fn label(&self) -> String {
        match self {
            ErrorNorm::L2 => "l2".into(),
            ErrorNorm::Linf => "linf".into(),
            ErrorNorm::Hs(s) => format!("h_s({s})"),
        }
    }
}

/// Norm of `a − b`; both fields must share a grid.
pub fn field_error(a: &SpectralField, b: &SpectralField, norm: ErrorNorm) -> Result<f64> {
    let d = a.sub(b)?;
    match norm {
        ErrorNorm::L2 => Ok(l2_norm_sq(&d).sqrt()),
        ErrorNorm::Linf => Ok(max_velocity(&d)),
        ErrorNorm::Hs(s) => sobolev_norm(&d, s),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FitModel {
    /// `ln e` against `ln p`.
    Algebraic,
    /// `ln e` against `p`.
    Exponential,
}

/// Regression slope and `r²` for the chosen model.
pub fn observed_order(errors: &[f64], parameters: &[f64], model: FitModel) -> Result<(f64, f64)> {
    if errors.len() < 3 || errors.len() != parameters.len() {
        return Err(Error::InvalidArgument("observed_order needs >= 3 paired samples".into()));
    }
    if let Some(e) = errors.iter().find(|e| !(**e > 0.0)) {
        return Err(Error::InvalidArgument(format!("non-positive error {e} (exact agreement?)")));
    }
    let ys: Vec<f64> = errors.iter().map(|e| e.ln()).collect();
    let xs: Vec<f64> = match model {
        FitModel::Algebraic => {
            if parameters.iter().any(|p| !(*p > 0.0)) {
                return Err(Error::InvalidArgument("algebraic fit needs positive parameters".into()));
            }
            parameters.iter().map(|p| p.ln()).collect()
        }
        FitModel::Exponential => parameters.to_vec(),
    };
    let line = linear_fit(&xs, &ys).ok_or_else(|| Error::InvalidArgument("parameters have no spread".into()))?;
    Ok((line.slope, line.r2))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StudyKind {
    Spatial,
    Temporal,
    Combined,
}

impl StudyKind {
    pub fn as_str(self) -> &'static str {
        match self {
            StudyKind::Spatial => "spatial",
            StudyKind::Temporal => "temporal",
            StudyKind::Combined => "combined",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Dominance {
    Spatial,
    Temporal,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Sample {
    pub n_points: usize,
    pub k_max: usize,
    pub dt: f64,
    pub error: f64,
    pub dominant: Option<Dominance>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Flag {
    NonSpectralBehavior,
    OrderOutOfRange,
    NonMonotone,
}

impl Flag {
    pub fn as_str(self) -> &'static str {
        match self {
            Flag::NonSpectralBehavior => "non-spectral behavior",
            Flag::OrderOutOfRange => "order out of range",
            Flag::NonMonotone => "non-monotone",
        }
    }
}

/// Fitted `e ≈ a (1+K)² e^{−δK} + b Δt^p`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TwoTermModel {
    pub spatial_coeff: f64,
    pub temporal_coeff: f64,
    pub delta: f64,
    pub order: i32,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConvergenceReport {
    pub kind: StudyKind,
    pub norm: ErrorNorm,
    pub samples: Vec<Sample>,
    /// Spatial: decay rate `−d ln e / dK`. Temporal: slope `d ln e / d ln Δt`.
    pub fitted_rate: Option<f64>,
    pub fit_r2: Option<f64>,
    /// Strip width fitted on the reference field at `t_final`.
    pub field_delta: Option<f64>,
    pub model: Option<TwoTermModel>,
    pub flags: Vec<Flag>,
    pub notes: Vec<String>,
}

impl ConvergenceReport {
    fn new(kind: StudyKind, norm: ErrorNorm, samples: Vec<Sample>) -> Self {
        Self { kind, norm, samples, fitted_rate: None, fit_r2: None, field_delta: None, model: None, flags: vec![], notes: vec![] }
    }

    pub fn is_flagged(&self) -> bool {
        !self.flags.is_empty()
    }

    pub fn to_text(&self) -> String {
        let opt = |v: Option<f64>| v.map(format_float).unwrap_or_else(|| "none".into());
        let mut s = String::new();
        let _ = writeln!(s, "kind: {}", self.kind.as_str());
        let _ = writeln!(s, "error_norm: {}", self.norm.label());
        let _ = writeln!(s, "samples: {}", self.samples.len());
        let _ = writeln!(s, "fitted_rate: {}", opt(self.fitted_rate));
        let _ = writeln!(s, "fit_r2: {}", opt(self.fit_r2));
        let _ = writeln!(s, "field_delta: {}", opt(self.field_delta));
        if let Some(m) = self.model {
            let _ = writeln!(s, "model_spatial_coeff: {}", format_float(m.spatial_coeff));
            let _ = writeln!(s, "model_temporal_coeff: {}", format_float(m.temporal_coeff));
            let _ = writeln!(s, "model_delta: {}", format_float(m.delta));
            let _ = writeln!(s, "model_order: {}", m.order);
        }
        let flags: Vec<&str> = self.flags.iter().map(|f| f.as_str()).collect();
        let _ = writeln!(s, "flags: {}", if flags.is_empty() { "none".into() } else { flags.join("; ") });
        for n in &self.notes {
            let _ = writeln!(s, "note: {n}");
        }
        s
    }

    pub fn samples_csv(&self) -> String {
        let mut s = String::from("n_points,k_max,dt,error,dominant\n");
        for x in &self.samples {
            let dom = match x.dominant {
                Some(Dominance::Spatial) => "spatial",
                Some(Dominance::Temporal) => "temporal",
                None => "",
            };
            let _ = writeln!(s, "{},{},{},{},{}", x.n_points, x.k_max, format_float(x.dt), format_float(x.error), dom);
        }
        s
    }
}

fn run_to(
    ic: &InitialConditionSpec,
    params: &PhysicsParams,
    grid: GridSpec,
    dt: f64,
    t_final: f64,
) -> Result<SpectralField> {
    let model = NavierStokes::new(grid, params.clone())?;
    let u0 = make_initial_condition(ic, grid)?;
    Ok(integrate_fixed(SimulationState::new(u0), dt, t_final, &model)?.field)
}

fn check_common(t_final: f64, count: usize) -> Result<()> {
    if !(t_final >= 0.0 && t_final.is_finite()) {
        return Err(Error::InvalidArgument("t_final must be finite and >= 0".into()));
    }
    if count < 3 {
        return Err(Error::InvalidArgument("a study needs at least 3 configurations".into()));
    }
    Ok(())
}

fn fitted_delta(u: &SpectralField) -> Option<f64> {
    fit_strip(&shell_spectrum(u), None).ok().and_then(|p| p.fit).map(|f| f.delta)
}

#[derive(Clone, Debug, PartialEq)]
pub struct SpatialStudy {
    pub ic: InitialConditionSpec,
    pub params: PhysicsParams,
    pub t_final: f64,
    /// Fixed step, small enough that the temporal error is subdominant.
    pub dt: f64,
    pub grids: Vec<usize>,
    pub reference_n: usize,
    pub dealias: DealiasRule,
    pub norm: ErrorNorm,
}

/// Errors of each grid against the reference run, measured on the reference
/// lattice after zero-padding the coarse spectrum.
pub fn spatial_study(study: &SpatialStudy) -> Result<ConvergenceReport> {
    check_common(study.t_final, study.grids.len())?;
    let mut grids = study.grids.clone();
    grids.sort_unstable();
    let coarsest = grids[0];
    if study.reference_n < 4 * coarsest {
        return Err(Error::InvalidArgument(format!(
            "reference grid {} must be >= 4x the coarsest grid {coarsest}",
            study.reference_n
        )));
    }
    let reference_grid = GridSpec::new(study.reference_n, study.dealias)?;
    let specs: Vec<GridSpec> = grids.iter().map(|&n| GridSpec::new(n, study.dealias)).collect::<Result<_>>()?;

    let mut all = specs.clone();
    all.push(reference_grid);
    let fields: Vec<SpectralField> = all
        .par_iter()
        .map(|&g| run_to(&study.ic, &study.params, g, study.dt, study.t_final))
        .collect::<Result<_>>()?;
    let reference = fields.last().expect("reference run");

    let mut samples = Vec::new();
    for (g, u) in specs.iter().zip(&fields) {
        let error = field_error(&u.resample(reference_grid), reference, study.norm)?;
        samples.push(Sample { n_points: g.n_points(), k_max: g.k_max(), dt: study.dt, error, dominant: None });
    }
    let mut report = ConvergenceReport::new(StudyKind::Spatial, study.norm, samples);
    report.field_delta = fitted_delta(reference);

    let errs: Vec<f64> = report.samples.iter().map(|s| s.error).collect();
    if errs.windows(2).any(|w| w[1] > w[0] && w[1] > ERROR_FLOOR) {
        report.flags.push(Flag::NonSpectralBehavior);
    }
    let positive: Vec<&Sample> = report.samples.iter().filter(|s| s.error > 0.0).collect();
    if positive.len() < report.samples.len() {
        report.notes.push("samples with zero error (exact agreement with reference) excluded from fit".into());
    }
    let fit_errs: Vec<f64> = positive.iter().map(|s| s.error).collect();
    let ks: Vec<f64> = positive.iter().map(|s| s.k_max as f64).collect();
    match observed_order(&fit_errs, &ks, FitModel::Exponential) {
        Ok((slope, r2)) => {
            report.fitted_rate = Some(-slope);
            report.fit_r2 = Some(r2);
        }
        Err(e) => report.notes.push(format!("fit skipped: {e}")),
    }
    Ok(report)
}

#[derive(Clone, Debug, PartialEq)]
pub struct TemporalStudy {
    pub ic: InitialConditionSpec,
    pub params: PhysicsParams,
    pub n_points: usize,
    pub dealias: DealiasRule,
    pub t_final: f64,
    /// Geometric with ratio 2, coarse to fine.
    pub dts: Vec<f64>,
    /// Reference step is `min(dts) / reference_refinement`.
    pub reference_refinement: u32,
    pub norm: ErrorNorm,
    /// Expected order `p`; slopes outside `[p − 0.5, p + 0.5]` are flagged.
    pub order: i32,
}

impl TemporalStudy {
    pub const DEFAULT_REFINEMENT: u32 = 8;
}

pub fn temporal_study(study: &TemporalStudy) -> Result<ConvergenceReport> {
    check_common(study.t_final, study.dts.len())?;
    let mut dts = study.dts.clone();
    dts.sort_by(|a, b| b.total_cmp(a));
    if dts.iter().any(|d| !(*d > 0.0)) {
        return Err(Error::InvalidArgument("time steps must be positive".into()));
    }
    if dts.windows(2).any(|w| ((w[0] / w[1]) - 2.0).abs() > 1e-9) {
        return Err(Error::InvalidArgument("time steps must be geometric with ratio 2".into()));
    }
    if study.reference_refinement == 0 {
        return Err(Error::InvalidArgument("reference_refinement must be >= 1".into()));
    }
    let grid = GridSpec::new(study.n_points, study.dealias)?;
    let dt_ref = dts.last().unwrap() / study.reference_refinement as f64;
    let mut all = dts.clone();
    all.push(dt_ref);
    let fields: Vec<SpectralField> = all
        .par_iter()
        .map(|&dt| run_to(&study.ic, &study.params, grid, dt, study.t_final))
        .collect::<Result<_>>()?;
    let reference = fields.last().expect("reference run");
    let mut samples = Vec::new();
    for (dt, u) in dts.iter().zip(&fields) {
        let error = field_error(u, reference, study.norm)?;
        samples.push(Sample { n_points: grid.n_points(), k_max: grid.k_max(), dt: *dt, error, dominant: None });
    }
    let mut report = ConvergenceReport::new(StudyKind::Temporal, study.norm, samples);
    report.notes.push(format!("reference dt = {}", format_float(dt_ref)));
    let positive: Vec<&Sample> = report.samples.iter().filter(|s| s.error > 0.0).collect();
    if positive.len() < report.samples.len() {
        report.notes.push("samples with zero error (exact agreement with reference) excluded from fit".into());
    }
    let errs: Vec<f64> = positive.iter().map(|s| s.error).collect();
    let steps: Vec<f64> = positive.iter().map(|s| s.dt).collect();
    match observed_order(&errs, &steps, FitModel::Algebraic) {
        Ok((slope, r2)) => {
            report.fitted_rate = Some(slope);
            report.fit_r2 = Some(r2);
            let p = study.order as f64;
            if !(p - 0.5..=p + 0.5).contains(&slope) {
                report.flags.push(Flag::OrderOutOfRange);
            }
        }
        Err(e) => report.notes.push(format!("fit skipped: {e}")),
    }
    Ok(report)
}

#[derive(Clone, Debug, PartialEq)]
pub struct CombinedStudy {
    pub ic: InitialConditionSpec,
    pub params: PhysicsParams,
    pub t_final: f64,
    /// `(n_points, dt)` schedule, coarse to fine.
    pub pairs: Vec<(usize, f64)>,
    pub reference: (usize, f64),
    pub dealias: DealiasRule,
    pub norm: ErrorNorm,
    pub order: i32,
}

/// Fit `e ≈ a s + b τ` with `a, b ≥ 0`, weighting each row by `1/e`.
fn fit_two_terms(spatial: &[f64], temporal: &[f64], errors: &[f64]) -> Option<(f64, f64)> {
    let rows: Vec<(f64, f64)> = spatial
        .iter()
        .zip(temporal)
        .zip(errors)
        .filter(|(_, e)| **e > 0.0)
        .map(|((s, t), e)| (s / e, t / e))
        .collect();
    if rows.len() < 2 {
        return None;
    }
    let (mut saa, mut sab, mut sbb, mut sa, mut sb) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for (a, b) in &rows {
        saa += a * a;
        sab += a * b;
        sbb += b * b;
        sa += a;
        sb += b;
    }
    let single = |sxx: f64, sx: f64| if sxx > 0.0 { sx / sxx } else { 0.0 };
    let cost = |x: f64, y: f64| rows.iter().map(|(a, b)| (x * a + y * b - 1.0).powi(2)).sum::<f64>();
    let det = saa * sbb - sab * sab;
    if det.abs() > 1e-12 * saa * sbb {
        let x = (sa * sbb - sb * sab) / det;
        let y = (saa * sb - sab * sa) / det;
        if x >= 0.0 && y >= 0.0 {
            return Some((x, y));
        }
    }
    let only_spatial = (single(saa, sa), 0.0);
    let only_temporal = (0.0, single(sbb, sb));
    if cost(only_spatial.0, 0.0) <= cost(0.0, only_temporal.1) {
        Some(only_spatial)
    } else {
        Some(only_temporal)
    }
}

pub fn combined_study(study: &CombinedStudy) -> Result<ConvergenceReport> {
    check_common(study.t_final, study.pairs.len())?;
    let reference_grid = GridSpec::new(study.reference.0, study.dealias)?;
    let mut configs: Vec<(GridSpec, f64)> = study
        .pairs
        .iter()
        .map(|&(n, dt)| Ok((GridSpec::new(n, study.dealias)?, dt)))
        .collect::<Result<_>>()?;
    configs.push((reference_grid, study.reference.1));
    let fields: Vec<SpectralField> = configs
        .par_iter()
        .map(|&(g, dt)| run_to(&study.ic, &study.params, g, dt, study.t_final))
        .collect::<Result<_>>()?;
    let reference = fields.last().expect("reference run");
    let mut samples = Vec::new();
    for ((g, dt), u) in configs.iter().zip(&fields) {
        if g.n_points() == reference_grid.n_points() && *dt == study.reference.1 {
            samples.push(Sample { n_points: g.n_points(), k_max: g.k_max(), dt: *dt, error: 0.0, dominant: None });
            continue;
        }
        let error = field_error(&u.resample(reference_grid), reference, study.norm)?;
        samples.push(Sample { n_points: g.n_points(), k_max: g.k_max(), dt: *dt, error, dominant: None });
    }
    samples.pop();
    let mut report = ConvergenceReport::new(StudyKind::Combined, study.norm, samples);
    report.field_delta = fitted_delta(reference);

    let errs: Vec<f64> = report.samples.iter().map(|s| s.error).collect();
    if errs.windows(2).any(|w| !(w[1] < w[0])) {
        report.flags.push(Flag::NonMonotone);
    }
    let distinct = study.pairs.windows(2).any(|w| w[0] != w[1]);
    if !distinct {
        report.notes.push("all pairs identical: zero spread, model fit skipped".into());
        return Ok(report);
    }
    let Some(delta) = report.field_delta.filter(|d| *d > 0.0) else {
        report.notes.push("reference spectrum has no fitted strip width: model fit skipped".into());
        return Ok(report);
    };
    let spatial: Vec<f64> = report
        .samples
        .iter()
        .map(|s| {
            let k = s.k_max as f64;
            (1.0 + k).powi(2) * (-delta * k).exp()
        })
        .collect();
    let temporal: Vec<f64> = report.samples.iter().map(|s| s.dt.powi(study.order)).collect();
    match fit_two_terms(&spatial, &temporal, &errs) {
        Some((a, b)) => {
            report.model = Some(TwoTermModel { spatial_coeff: a, temporal_coeff: b, delta, order: study.order });
            for (i, s) in report.samples.iter_mut().enumerate() {
                s.dominant = Some(if a * spatial[i] >= b * temporal[i] { Dominance::Spatial } else { Dominance::Temporal });
            }
        }
        None => report.notes.push("too few positive errors: model fit skipped".into()),
    }
    Ok(report)
}
