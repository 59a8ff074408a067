//! Classical RK4 with CFL-adaptive step selection and the run loop.

use serde::{Deserialize, Serialize};

use crate::diagnostics::{
    bkm_update, dissipation, energy_residual, kinetic_energy, max_velocity, max_vorticity,
    DiagnosticsRecord, StepAverages,
};
use crate::dynamics::NavierStokes;
use crate::error::{Error, Result};
use crate::field::{dealias_in_place, grad_norm_sq, leray_project, SpectralField};
use crate::grid::GridSpec;

/// Floor on `‖u‖_∞` in the advective CFL bound.
pub const VELOCITY_FLOOR: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StepControl {
    pub cfl_number: f64,
    pub dt_min: f64,
    pub dt_max: f64,
    pub t_end: f64,
    pub max_steps: u64,
    /// Bypass the CFL rule and use this step (last step trimmed to `t_end`).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fixed_dt: Option<f64>,
}

impl Default for StepControl {
    fn default() -> Self {
        Self { cfl_number: 0.5, dt_min: 1e-12, dt_max: 1e-2, t_end: 1.0, max_steps: 1_000_000, fixed_dt: None }
    }
}

impl StepControl {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidArgument(m.to_string()));
        if !(self.cfl_number > 0.0 && self.cfl_number <= 1.0) {
            return bad("cfl_number must lie in (0, 1]");
        }
        if !(self.dt_min > 0.0) || !(self.dt_max > 0.0) {
            return bad("dt_min and dt_max must be positive");
        }
        if self.dt_min > self.dt_max {
            return bad("dt_min must not exceed dt_max");
        }
        if !(self.t_end >= 0.0 && self.t_end.is_finite()) {
            return bad("t_end must be finite and >= 0");
        }
        if let Some(dt) = self.fixed_dt {
            if !(dt > 0.0 && dt.is_finite()) {
                return bad("fixed_dt must be positive");
            }
        }
        Ok(())
    }
}

/// Discrete trajectory state `u^n` at `t_n`.
#[derive(Clone, Debug, PartialEq)]
pub struct SimulationState {
    pub t: f64,
    /// Size of the step that produced this state (0 before the first step).
    pub dt: f64,
    pub step: u64,
    pub field: SpectralField,
    pub bkm_accum: f64,
    pub residual_accum: f64,
    pub diverged: bool,
}

impl SimulationState {
    pub fn new(field: SpectralField) -> Self {
        Self { t: 0.0, dt: 0.0, step: 0, field, bkm_accum: 0.0, residual_accum: 0.0, diverged: false }
    }
}

/// Result of one RK4 step, with dissipation and power averaged over the four
/// stages using the RK4 weights. That quadrature matches the order of the
/// step, so the energy residual is `O(Δt⁵)` per step on smooth data.
#[derive(Clone, Debug)]
pub struct StepOutcome {
    pub state: SimulationState,
    pub averages: StepAverages,
}

const RK4_WEIGHTS: [f64; 4] = [1.0 / 6.0, 1.0 / 3.0, 1.0 / 3.0, 1.0 / 6.0];

fn diverged_outcome(state: &SimulationState, dt: f64) -> StepOutcome {
    let mut next = state.clone();
    next.t += dt;
    next.dt = dt;
    next.step += 1;
    next.diverged = true;
    next.field.component_mut(0).iter_mut().for_each(|v| *v = v.scale(f64::NAN));
    StepOutcome { state: next, averages: StepAverages { dissipation: f64::NAN, power_in: f64::NAN } }
}

/// One classical RK4 step. Non-finite values mark the result as diverged
/// instead of failing.
pub fn rk4_step(state: &SimulationState, dt: f64, model: &NavierStokes) -> Result<StepOutcome> {
    if state.diverged {
        return Err(Error::Diverged);
    }
    if !(dt > 0.0) {
        return Err(Error::InvalidArgument(format!("dt must be positive, got {dt}")));
    }
    let nu = model.params().nu;
    let t = state.t;
    let u = &state.field;
    let stage_times = [t, t + 0.5 * dt, t + 0.5 * dt, t + dt];
    let stage_offsets = [0.0, 0.5 * dt, 0.5 * dt, dt];

    let mut next = u.clone();
    let mut averages = StepAverages::default();
    let mut stage = u.clone();
    for s in 0..4 {
        let k = match model.rhs(&stage, stage_times[s]) {
            Ok(k) => k,
            Err(Error::NonFinite(_)) => return Ok(diverged_outcome(state, dt)),
            Err(e) => return Err(e),
        };
        averages.dissipation += RK4_WEIGHTS[s] * nu * grad_norm_sq(&stage);
        averages.power_in += RK4_WEIGHTS[s] * model.power_input(&stage, stage_times[s])?;
        next.axpy(RK4_WEIGHTS[s] * dt, &k)?;
        if s < 3 {
            // Y_{s+1} = u + c_{s+1} Δt k_s
            stage = u.clone();
            stage.axpy(stage_offsets[s + 1], &k)?;
        }
    }
    dealias_in_place(&mut next);
    let next = leray_project(&next);
    if !next.is_finite() || !averages.dissipation.is_finite() || !averages.power_in.is_finite() {
        return Ok(diverged_outcome(state, dt));
    }
    Ok(StepOutcome {
        state: SimulationState {
            t: t + dt,
            dt,
            step: state.step + 1,
            field: next,
            bkm_accum: state.bkm_accum,
            residual_accum: state.residual_accum,
            diverged: false,
        },
        averages,
    })
}

/// Unclamped step candidate: the smaller of the advective bound
/// `c Δx / max(‖u‖_∞, 10⁻¹²)` and the viscous bound `2c / (ν k_max²)`.
pub fn cfl_candidate(max_velocity: f64, control: &StepControl, nu: f64, grid: GridSpec) -> f64 {
    let c = control.cfl_number;
    let advective = c * grid.dx() / max_velocity.max(VELOCITY_FLOOR);
    let km = grid.k_max() as f64;
    let viscous = c * 2.0 / (nu * km * km);
    advective.min(viscous)
}

/// CFL step clamped to `[dt_min, dt_max]`.
pub fn cfl_dt(u: &SpectralField, control: &StepControl, nu: f64) -> f64 {
    cfl_candidate(max_velocity(u), control, nu, u.grid()).clamp(control.dt_min, control.dt_max)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    ReachedTEnd,
    MaxSteps,
    DtUnderflow,
    Diverged,
}

impl StopReason {
    pub fn as_str(self) -> &'static str {
        match self {
            StopReason::ReachedTEnd => "reached_t_end",
            StopReason::MaxSteps => "max_steps",
            StopReason::DtUnderflow => "dt_underflow",
            StopReason::Diverged => "diverged",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        [Self::ReachedTEnd, Self::MaxSteps, Self::DtUnderflow, Self::Diverged]
            .into_iter()
            .find(|r| r.as_str() == s)
    }
}

/// Receives every emitted ledger row together with the state it describes.
pub trait Observer {
    fn observe(&mut self, state: &SimulationState, record: &DiagnosticsRecord) -> Result<()>;
}

impl Observer for crate::diagnostics::EnergyLedger {
    fn observe(&mut self, _state: &SimulationState, record: &DiagnosticsRecord) -> Result<()> {
        self.push(*record)
    }
}

#[derive(Clone, Debug)]
pub struct RunOutcome {
    pub state: SimulationState,
    pub stop: StopReason,
}

fn relative_end(t: f64, t_end: f64) -> bool {
    t >= t_end - 1e-12 * t_end.abs().max(1.0)
}

/// Run loop. Emits a row for the initial state when `state.step == 0`, then
/// one per step, and stops at `t_end`, `max_steps`, a CFL candidate below
/// `dt_min`, or divergence. Divergence is reported, never raised.
pub fn advance(
    state: SimulationState,
    control: &StepControl,
    model: &NavierStokes,
    observers: &mut [&mut dyn Observer],
) -> Result<RunOutcome> {
    control.validate()?;
    if state.diverged {
        return Ok(RunOutcome { state, stop: StopReason::Diverged });
    }
    let nu = model.params().nu;
    let grid = model.grid();
    let mut vel = max_velocity(&state.field);
    let mut vort = max_vorticity(&state.field);
    let mut energy = kinetic_energy(&state.field);

    if state.step == 0 {
        let record = DiagnosticsRecord {
            step: 0,
            t: state.t,
            dt: 0.0,
            energy,
            dissipation: dissipation(&state.field, nu),
            power_in: model.power_input(&state.field, state.t)?,
            max_velocity: vel,
            max_vorticity: vort,
            bkm_integral: state.bkm_accum,
            residual: 0.0,
            residual_accum: state.residual_accum,
        };
        for o in observers.iter_mut() {
            o.observe(&state, &record)?;
        }
    }

    let mut state = state;
    loop {
        if relative_end(state.t, control.t_end) {
            return Ok(RunOutcome { state, stop: StopReason::ReachedTEnd });
        }
        if state.step >= control.max_steps {
            return Ok(RunOutcome { state, stop: StopReason::MaxSteps });
        }
        let remaining = control.t_end - state.t;
        let dt = match control.fixed_dt {
            Some(dt) => dt.min(remaining),
            None => {
                let candidate = cfl_candidate(vel, control, nu, grid);
                if !(candidate >= control.dt_min) {
                    return Ok(RunOutcome { state, stop: StopReason::DtUnderflow });
                }
                candidate.min(control.dt_max).min(remaining)
            }
        };
        let bkm = bkm_update(state.bkm_accum, vort, dt).unwrap_or(f64::NAN);
        let StepOutcome { state: mut next, averages } = rk4_step(&state, dt, model)?;
        next.bkm_accum = bkm;

        let next_energy = kinetic_energy(&next.field);
        let residual = energy_residual(energy, next_energy, averages, dt);
        next.residual_accum = state.residual_accum + residual.abs();
        if next.diverged {
            next.residual_accum = f64::NAN;
        }
        vel = max_velocity(&next.field);
        vort = max_vorticity(&next.field);
        energy = next_energy;
        let record = DiagnosticsRecord {
            step: next.step,
            t: next.t,
            dt,
            energy,
            dissipation: averages.dissipation,
            power_in: averages.power_in,
            max_velocity: vel,
            max_vorticity: vort,
            bkm_integral: next.bkm_accum,
            residual,
            residual_accum: next.residual_accum,
        };
        for o in observers.iter_mut() {
            o.observe(&next, &record)?;
        }
        state = next;
        if state.diverged || !record.is_finite() {
            state.diverged = true;
            return Ok(RunOutcome { state, stop: StopReason::Diverged });
        }
    }
}

/// Lean fixed-step integration to `t_final` without diagnostics; the last
/// step is shortened to land on `t_final` exactly.
pub fn integrate_fixed(
    state: SimulationState,
    dt: f64,
    t_final: f64,
    model: &NavierStokes,
) -> Result<SimulationState> {
    if !(dt > 0.0) {
        return Err(Error::InvalidArgument(format!("dt must be positive, got {dt}")));
    }
    let mut state = state;
    while !relative_end(state.t, t_final) {
        let h = dt.min(t_final - state.t);
        state = rk4_step(&state, h, model)?.state;
        if state.diverged {
            return Err(Error::Diverged);
        }
    }
    Ok(state)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diagnostics::EnergyLedger;
    use crate::dynamics::{make_initial_condition, InitialConditionSpec, PhysicsParams};
    use crate::field::{forward_transform, RealField};
    use crate::grid::DealiasRule;

    fn grid(n: usize) -> GridSpec {
        GridSpec::new(n, DealiasRule::TwoThirds).unwrap()
    }

    fn shear(g: GridSpec) -> SpectralField {
        forward_transform(&RealField::from_fn(g, |x| [0.0, 0.0, x[0].sin()])).unwrap()
    }

    #[test]
    fn viscous_amplification_factor_matches_stability_polynomial() {
        let g = grid(8);
        let model = NavierStokes::new(g, PhysicsParams::viscous_only(1.0).unwrap()).unwrap();
        let h: f64 = 0.1;
        let out = rk4_step(&SimulationState::new(shear(g)), h, &model).unwrap();
        let factor = (out.state.field.mode([1, 0, 0]).unwrap()[2] / shear(g).mode([1, 0, 0]).unwrap()[2]).re;
        let poly = 1.0 - h + h * h / 2.0 - h.powi(3) / 6.0 + h.powi(4) / 24.0;
        assert!((factor - poly).abs() < 1e-15);
        assert!((factor - 0.9048375).abs() < 1e-12);
        assert!((factor - (-h).exp() - 8.196e-8).abs() < 1e-10);
    }

    #[test]
    fn tiny_step_is_continuous_and_zero_is_fixed_point() {
        let g = grid(16);
        let model = NavierStokes::new(g, PhysicsParams::new(0.1, Default::default()).unwrap()).unwrap();
        let u = make_initial_condition(&InitialConditionSpec::taylor_green(1.0), g).unwrap();
        let out = rk4_step(&SimulationState::new(u.clone()), 1e-14, &model).unwrap();
        let change = out.state.field.sub(&u).unwrap().max_coefficient();
        assert!(change <= 1e-12 * u.max_coefficient());
        let z = rk4_step(&SimulationState::new(SpectralField::zeros(g)), 0.01, &model).unwrap();
        assert_eq!(z.state.field.max_coefficient(), 0.0);
    }

    #[test]
    fn diverged_input_is_rejected() {
        let g = grid(8);
        let model = NavierStokes::new(g, PhysicsParams::viscous_only(1.0).unwrap()).unwrap();
        let mut s = SimulationState::new(shear(g));
        s.diverged = true;
        assert!(matches!(rk4_step(&s, 0.1, &model), Err(Error::Diverged)));
    }

    #[test]
    fn cfl_examples() {
        let g = grid(64);
        let control = StepControl { dt_max: 1.0, ..Default::default() };
        let dt = cfl_candidate(10.0, &control, 1e-12, g);
        assert!((dt - 0.5 * (2.0 * std::f64::consts::PI / 64.0) / 10.0).abs() < 1e-15);
        assert!((dt - 4.909e-3).abs() < 1e-6);
        let doubled = cfl_candidate(20.0, &control, 1e-12, g);
        assert!((doubled - dt / 2.0).abs() < 1e-16);
        let zero = cfl_dt(&SpectralField::zeros(g), &StepControl::default(), 0.5);
        let viscous: f64 = 0.5 * 2.0 / (0.5 * 21.0 * 21.0);
        assert_eq!(zero, viscous.min(1e-2));
        let zero = cfl_dt(&SpectralField::zeros(g), &StepControl::default(), 1e-6);
        assert_eq!(zero, 1e-2);
    }

    #[test]
    fn advance_with_zero_horizon_is_identity() {
        let g = grid(8);
        let model = NavierStokes::new(g, PhysicsParams::viscous_only(1.0).unwrap()).unwrap();
        let s = SimulationState::new(shear(g));
        let control = StepControl { t_end: 0.0, ..Default::default() };
        let out = advance(s.clone(), &control, &model, &mut []).unwrap();
        assert_eq!(out.state, s);
        assert_eq!(out.stop, StopReason::ReachedTEnd);
    }

    #[test]
    fn overflow_marks_divergence() {
        let g = grid(8);
        let model = NavierStokes::new(g, PhysicsParams::new(0.01, Default::default()).unwrap()).unwrap();
        let u = make_initial_condition(&InitialConditionSpec::taylor_green(1e140), g).unwrap();
        let control = StepControl { fixed_dt: Some(1.0), t_end: 100.0, ..Default::default() };
        let mut ledger = EnergyLedger::new();
        let out = advance(SimulationState::new(u), &control, &model, &mut [&mut ledger]).unwrap();
        assert_eq!(out.stop, StopReason::Diverged);
        assert!(out.state.diverged);
        assert!(out.state.t.is_finite());
        assert!(!ledger.last().unwrap().is_finite());
        assert!(ledger.records()[0].is_finite());
    }

    #[test]
    fn max_steps_and_underflow_stop() {
        let g = grid(8);
        let model = NavierStokes::new(g, PhysicsParams::new(0.1, Default::default()).unwrap()).unwrap();
        let u = make_initial_condition(&InitialConditionSpec::taylor_green(1.0), g).unwrap();
        let control = StepControl { max_steps: 3, ..Default::default() };
        let out = advance(SimulationState::new(u.clone()), &control, &model, &mut []).unwrap();
        assert_eq!((out.stop, out.state.step), (StopReason::MaxSteps, 3));
        let control = StepControl { dt_min: 5e-3, ..Default::default() };
        let fast = make_initial_condition(&InitialConditionSpec::taylor_green(1e3), g).unwrap();
        let out = advance(SimulationState::new(fast), &control, &model, &mut []).unwrap();
        assert_eq!((out.stop, out.state.step), (StopReason::DtUnderflow, 0));
    }
}
