//! A-posteriori regularity analysis: analyticity-strip fits of the shell
//! spectrum, truncation-error bound shapes, the resolution condition, and
//! numerical breakdown detection.
//!
//! Every `c_star`/`delta` produced here is a fitted surrogate, not a
//! certified constant.

use std::fmt::Write as _;

use crate::diagnostics::DiagnosticsRecord;
use crate::error::{Error, Result};
use crate::field::SpectralField;
use crate::stats::linear_fit;

/// Shells below this amplitude are ignored by [`fit_strip`].
pub const AMPLITUDE_FLOOR: f64 = 1e-30;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ShellStatistic {
    Max,
    Rms,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Shell {
    /// Shell `m` holds wavevectors with `m < |k| ≤ m + 1`.
    pub index: usize,
    pub amplitude: f64,
    /// Abscissa used by the fit: `|k|` of the maximizing mode for
    /// [`ShellStatistic::Max`], `m + ½` for RMS or empty shells.
    pub radius: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StripFit {
    pub c_star: f64,
    pub delta: f64,
    pub window: (usize, usize),
    pub r2: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SpectrumProfile {
    pub k_max: usize,
    pub shells: Vec<Shell>,
    pub fit: Option<StripFit>,
}

impl SpectrumProfile {
    pub fn peak(&self) -> f64 {
        self.shells.iter().map(|s| s.amplitude).fold(0.0, f64::max)
    }

    /// Amplitude of the outermost retained shell relative to the peak.
    pub fn tail_ratio(&self) -> f64 {
        let peak = self.peak();
        match self.shells.last() {
            Some(s) if peak > 0.0 => s.amplitude / peak,
            _ => 0.0,
        }
    }

    pub fn default_window(&self) -> (usize, usize) {
        (self.k_max / 4, (3 * self.k_max) / 4)
    }
}

fn shell_of(k2: i64) -> usize {
    let s = (k2 as f64).sqrt().round() as i64;
    let s = if s * s > k2 { s - 1 } else { s };
    // s = floor(sqrt(k2)); |k| in (m, m+1] ⇒ m = ceil(|k|) − 1
    if s * s == k2 {
        (s - 1) as usize
    } else {
        s as usize
    }
}

/// Shell spectrum over shells `0..k_max`, using the per-shell maximum.
pub fn shell_spectrum(u: &SpectralField) -> SpectrumProfile {
    shell_spectrum_with(u, ShellStatistic::Max)
}

pub fn shell_spectrum_with(u: &SpectralField, statistic: ShellStatistic) -> SpectrumProfile {
    let g = u.grid();
    let k_max = g.k_max();
    let mut amp = vec![0.0f64; k_max];
    let mut radius = vec![f64::NAN; k_max];
    let mut count = vec![0usize; k_max];
    for idx in 0..g.len() {
        let k = g.wavevector(idx);
        let k2 = k[0] * k[0] + k[1] * k[1] + k[2] * k[2];
        if k2 == 0 {
            continue;
        }
        let m = shell_of(k2);
        if m >= k_max {
            continue;
        }
        let mag2: f64 = (0..3).map(|c| u.component(c)[idx].norm_sqr()).sum();
        match statistic {
            ShellStatistic::Max => {
                let mag = mag2.sqrt();
                if mag > amp[m] {
                    amp[m] = mag;
                    radius[m] = (k2 as f64).sqrt();
                }
            }
            ShellStatistic::Rms => {
                amp[m] += mag2;
                count[m] += 1;
            }
        }
    }
    let shells = (0..k_max)
        .map(|m| {
            let (amplitude, r) = match statistic {
                ShellStatistic::Max => (amp[m], radius[m]),
                ShellStatistic::Rms => {
                    let a = if count[m] > 0 { (amp[m] / count[m] as f64).sqrt() } else { 0.0 };
                    (a, f64::NAN)
                }
            };
            let radius = if r.is_nan() || amplitude == 0.0 { m as f64 + 0.5 } else { r };
            Shell { index: m, amplitude, radius }
        })
        .collect();
    SpectrumProfile { k_max, shells, fit: None }
}

/// Least-squares line of `ln amplitude` against shell radius over `window`
/// (inclusive; defaults to `[k_max/4, 3k_max/4]`).
pub fn fit_strip(profile: &SpectrumProfile, window: Option<(usize, usize)>) -> Result<SpectrumProfile> {
    let (lo, hi) = window.unwrap_or_else(|| profile.default_window());
    let (xs, ys): (Vec<f64>, Vec<f64>) = profile
        .shells
        .iter()
        .filter(|s| s.index >= lo && s.index <= hi && s.amplitude > AMPLITUDE_FLOOR)
        .map(|s| (s.radius, s.amplitude.ln()))
        .unzip();
    if xs.len() < 4 {
        return Err(Error::UnderResolved { usable: xs.len() });
    }
    let line = linear_fit(&xs, &ys).ok_or(Error::UnderResolved { usable: xs.len() })?;
    let mut out = profile.clone();
    out.fit = Some(StripFit {
        c_star: line.intercept.exp(),
        delta: (-line.slope).max(0.0),
        window: (lo, hi),
        r2: line.r2,
    });
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BoundNorm {
    L2,
    Linf,
}

fn margin(profile: &SpectrumProfile) -> Result<StripFit> {
    let fit = profile.fit.ok_or_else(|| Error::InvalidArgument("spectrum profile is not fitted".into()))?;
    if !(fit.delta > 0.0) {
        return Err(Error::NoAnalyticityMargin);
    }
    Ok(fit)
}

/// `C(1+K)e^{−δK}` (L²) or `C(1+K)²e^{−δK}` (L∞) with fitted `C`, `δ`.
pub fn truncation_bound(profile: &SpectrumProfile, k: usize, norm: BoundNorm) -> Result<f64> {
    let fit = margin(profile)?;
    Ok(bound_shape(fit.c_star, fit.delta, k, norm))
}

fn bound_shape(c: f64, delta: f64, k: usize, norm: BoundNorm) -> f64 {
    let kf = k as f64;
    let power = match norm {
        BoundNorm::L2 => 1,
        BoundNorm::Linf => 2,
    };
    c * (1.0 + kf).powi(power) * (-delta * kf).exp()
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ResolutionReport {
    pub k_required: usize,
    pub dt_ok: bool,
    pub spatial_bound_at_k: f64,
    pub temporal_bound: f64,
}

/// Smallest `K ≥ 1` from which `C(1+K)²e^{−δK} ≤ ε/2` holds for every larger
/// `K` as well, and whether `c2·Δt^p ≤ ε/2`.
pub fn resolution_check(
    profile: &SpectrumProfile,
    epsilon: f64,
    dt: f64,
    order: i32,
    c2: f64,
) -> Result<ResolutionReport> {
    if !(epsilon > 0.0) {
        return Err(Error::InvalidArgument("epsilon must be positive".into()));
    }
    let fit = margin(profile)?;
    let target = 0.5 * epsilon;
    let f = |k: usize| bound_shape(fit.c_star, fit.delta, k, BoundNorm::Linf);
    // (1+K)²e^{−δK} increases up to K = 2/δ − 1 and decreases after
    let peak = ((2.0 / fit.delta - 1.0).ceil().max(1.0)) as usize;
    let mut k = peak;
    if (1..=peak).all(|j| f(j) <= target) {
        k = 1;
    } else {
        while f(k) > target {
            k += 1;
            if k > 1_000_000 {
                return Err(Error::InvalidArgument("resolution scan did not converge".into()));
            }
        }
        while k > 1 && f(k - 1) <= target {
            k -= 1;
        }
    }
    let temporal = c2 * dt.powi(order);
    Ok(ResolutionReport { k_required: k, dt_ok: temporal <= target, spatial_bound_at_k: f(k), temporal_bound: temporal })
}

/// Fitted spectrum summary attached to one ledger step.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SpectrumSample {
    pub step: u64,
    pub t: f64,
    pub k_max: usize,
    pub tail_ratio: f64,
    pub fit: Option<StripFit>,
}

impl SpectrumSample {
    pub fn from_field(step: u64, t: f64, u: &SpectralField, window: Option<(usize, usize)>) -> Self {
        let profile = shell_spectrum(u);
        let fit = fit_strip(&profile, window).ok().and_then(|p| p.fit);
        Self { step, t, k_max: profile.k_max, tail_ratio: profile.tail_ratio(), fit }
    }

    /// Resolved when the outermost shell sits `d_digits` decades below the
    /// peak, either as observed or as predicted by `δ·k_max ≥ d ln 10`.
    pub fn is_resolved(&self, d_digits: f64) -> bool {
        let ln_target = d_digits * std::f64::consts::LN_10;
        if self.tail_ratio.is_finite() && self.tail_ratio <= (-ln_target).exp() {
            return true;
        }
        matches!(self.fit, Some(f) if f.delta * self.k_max as f64 >= ln_target)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MonitorThresholds {
    /// Budget ε on `Σ|R|`.
    pub epsilon: f64,
    /// Energy cap M.
    pub energy_cap: f64,
    pub d_digits: f64,
    /// Compare `Σ|R| / E(0)` against ε instead of the absolute sum.
    pub relative_residual: bool,
}

impl MonitorThresholds {
    /// ε = 10⁻⁶ E(0), M = 10⁶ E(0), four digits of spectral decay.
    pub fn defaults_for(initial_energy: f64) -> Self {
        Self { epsilon: 1e-6 * initial_energy, energy_cap: 1e6 * initial_energy, d_digits: 4.0, relative_residual: false }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StopCondition {
    NonFiniteValue,
    ResidualBudgetExceeded,
    EnergyThresholdExceeded,
    ResolutionLost,
    /// The ledger ends before the horizon with every clause satisfied.
    Incomplete,
    None,
}

impl StopCondition {
    pub fn as_str(self) -> &'static str {
        match self {
            StopCondition::NonFiniteValue => "non_finite_value",
            StopCondition::ResidualBudgetExceeded => "residual_budget_exceeded",
            StopCondition::EnergyThresholdExceeded => "energy_threshold_exceeded",
            StopCondition::ResolutionLost => "resolution_lost",
            StopCondition::Incomplete => "incomplete",
            StopCondition::None => "none",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        use StopCondition::*;
        [NonFiniteValue, ResidualBudgetExceeded, EnergyThresholdExceeded, ResolutionLost, Incomplete, None]
            .into_iter()
            .find(|c| c.as_str() == s)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BreakdownReport {
    pub t_num: f64,
    pub stop_condition: StopCondition,
    /// Ledger step that violated a clause, if any.
    pub violation_step: Option<u64>,
    pub epsilon: f64,
    pub energy_cap: f64,
    pub energy_at_stop: f64,
    pub residual_accum_at_stop: f64,
}

impl BreakdownReport {
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "t_num: {}", crate::diagnostics::format_float(self.t_num));
        let _ = writeln!(s, "stop_condition: {}", self.stop_condition.as_str());
        let step = self.violation_step.map(|v| v.to_string()).unwrap_or_else(|| "none".into());
        let _ = writeln!(s, "violation_step: {step}");
        let _ = writeln!(s, "epsilon: {}", crate::diagnostics::format_float(self.epsilon));
        let _ = writeln!(s, "energy_cap: {}", crate::diagnostics::format_float(self.energy_cap));
        let _ = writeln!(s, "energy_at_stop: {}", crate::diagnostics::format_float(self.energy_at_stop));
        let _ = writeln!(s, "residual_accum_at_stop: {}", crate::diagnostics::format_float(self.residual_accum_at_stop));
        let _ = writeln!(s, "note: thresholds and spectral fits are fitted, not certified");
        s
    }
}

fn record_violation(r: &DiagnosticsRecord, th: &MonitorThresholds, e0: f64) -> Option<StopCondition> {
    if !r.is_finite() {
        return Some(StopCondition::NonFiniteValue);
    }
    let residual = if th.relative_residual { r.residual_accum / e0 } else { r.residual_accum };
    if residual > th.epsilon {
        return Some(StopCondition::ResidualBudgetExceeded);
    }
    if r.energy > th.energy_cap {
        return Some(StopCondition::EnergyThresholdExceeded);
    }
    None
}

/// `T_num`: the last ledger time before the first step that violates the
/// residual budget, the energy cap, finiteness, or spectral resolution.
/// Ties on the same step resolve in that order.
pub fn breakdown_monitor(
    ledger: &[DiagnosticsRecord],
    spectra: &[SpectrumSample],
    thresholds: &MonitorThresholds,
    horizon: f64,
) -> Result<BreakdownReport> {
    let first = ledger.first().ok_or(Error::EmptyLedger)?;
    let e0 = first.energy;
    let ledger_hit = ledger
        .iter()
        .find_map(|r| record_violation(r, thresholds, e0).map(|c| (r.step, c)));
    let spectrum_hit = spectra
        .iter()
        .find(|s| !s.is_resolved(thresholds.d_digits))
        .map(|s| (s.step, StopCondition::ResolutionLost));
    let hit = match (ledger_hit, spectrum_hit) {
        (Some(a), Some(b)) => Some(if b.0 < a.0 { b } else { a }),
        (a, b) => a.or(b),
    };
    let report = |t_num, stop_condition, violation_step, at: &DiagnosticsRecord| BreakdownReport {
        t_num,
        stop_condition,
        violation_step,
        epsilon: thresholds.epsilon,
        energy_cap: thresholds.energy_cap,
        energy_at_stop: at.energy,
        residual_accum_at_stop: at.residual_accum,
    };
    match hit {
        Some((step, condition)) => {
            let before = ledger.iter().take_while(|r| r.step < step).last().unwrap_or(first);
            let at = ledger.iter().find(|r| r.step >= step).unwrap_or(before);
            Ok(report(before.t, condition, Some(step), at))
        }
        None => {
            let last = ledger.last().expect("non-empty");
            if last.t >= horizon - 1e-12 * horizon.abs().max(1.0) {
                Ok(report(horizon, StopCondition::None, None, last))
            } else {
                Ok(report(last.t, StopCondition::Incomplete, None, last))
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrendRow {
    pub n_points: usize,
    pub k_max: usize,
    pub dt: f64,
    pub t_num: f64,
    pub stop_condition: StopCondition,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BreakdownTrend {
    pub rows: Vec<TrendRow>,
    pub nondecreasing_in_k: bool,
    pub spread: f64,
    pub stabilized: bool,
    /// Intercept of `T_num ≈ T* − a/K`, only when stabilized.
    pub limit_estimate: Option<f64>,
}

impl BreakdownTrend {
    pub fn verdict(&self) -> &'static str {
        if self.stabilized {
            "stabilized"
        } else {
            "not stabilized"
        }
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "# breakdown trend (numerical evidence, not proof)");
        let _ = writeln!(s, "n_points,k_max,dt,t_num,stop_condition");
        for r in &self.rows {
            let _ = writeln!(
                s,
                "{},{},{},{},{}",
                r.n_points,
                r.k_max,
                crate::diagnostics::format_float(r.dt),
                crate::diagnostics::format_float(r.t_num),
                r.stop_condition.as_str()
            );
        }
        let _ = writeln!(s, "nondecreasing_in_k: {}", self.nondecreasing_in_k);
        let _ = writeln!(s, "relative_spread: {}", crate::diagnostics::format_float(self.spread));
        let _ = writeln!(s, "verdict: {}", self.verdict());
        match self.limit_estimate {
            Some(v) => {
                let _ = writeln!(s, "limit_estimate: {}", crate::diagnostics::format_float(v));
            }
            None => {
                let _ = writeln!(s, "limit_estimate: none");
            }
        }
        s
    }
}

/// Relative spread below which a `T_num` sequence counts as stabilized.
pub const STABILIZATION_SPREAD: f64 = 0.10;

/// Tabulate `T_num` against resolution (rows sorted by `k_max`, then by
/// decreasing `dt`).
pub fn breakdown_trend(rows: &[TrendRow]) -> Result<BreakdownTrend> {
    if rows.len() < 2 {
        return Err(Error::InvalidArgument("breakdown_trend needs at least 2 reports".into()));
    }
    let mut rows = rows.to_vec();
    rows.sort_by(|a, b| a.k_max.cmp(&b.k_max).then(b.dt.total_cmp(&a.dt)));
    if rows.windows(2).any(|w| w[0].k_max == w[1].k_max && w[0].dt == w[1].dt) {
        return Err(Error::InvalidArgument("breakdown_trend needs distinct resolutions".into()));
    }
    let ts: Vec<f64> = rows.iter().map(|r| r.t_num).collect();
    let nondecreasing_in_k = ts.windows(2).all(|w| w[1] >= w[0]);
    let hi = ts.iter().cloned().fold(f64::MIN, f64::max);
    let lo = ts.iter().cloned().fold(f64::MAX, f64::min);
    let spread = if hi > 0.0 { (hi - lo) / hi } else { 0.0 };
    let stabilized = spread <= STABILIZATION_SPREAD;
    let limit_estimate = if !stabilized {
        None
    } else if spread == 0.0 {
        Some(ts[0])
    } else {
        let inv_k: Vec<f64> = rows.iter().map(|r| 1.0 / r.k_max as f64).collect();
        match linear_fit(&inv_k, &ts) {
            Some(line) => Some(line.intercept),
            None => Some(ts.iter().sum::<f64>() / ts.len() as f64),
        }
    };
    Ok(BreakdownTrend { rows, nondecreasing_in_k, spread, stabilized, limit_estimate })
}
