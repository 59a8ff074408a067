//! Fourier-space Navier-Stokes right-hand side, forcing, and initial data.
//!
//! Pressure never appears: every tendency is Leray-projected, which removes
//! the gradient part exactly mode by mode.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{
    dealias, dealias_in_place, forward_transform, leray_project, scalars_to_physical,
    scalars_to_spectral, RealField, SpectralField,
};
use crate::grid::GridSpec;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ForcingKind {
    None,
    SteadyAnalytic,
    ConcentratedPulse,
}

/// Body force `f(x, t)`.
///
/// `steady_analytic` is the ABC-type field
/// `A (sin kz + cos ky, sin kx + cos kz, sin ky + cos kx)` with
/// `k = max(1, round(2π / length_scale))`. `concentrated_pulse` is a Gaussian
/// swirl about the z-axis through `center`, of width `length_scale`, ramped
/// linearly in time over `ramp_time`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ForcingSpec {
    pub kind: ForcingKind,
    pub amplitude: f64,
    pub length_scale: f64,
    pub center: [f64; 3],
    pub ramp_time: f64,
}

impl Default for ForcingSpec {
    fn default() -> Self {
        Self { kind: ForcingKind::None, amplitude: 0.0, length_scale: 1.0, center: [PI; 3], ramp_time: 0.0 }
    }
}

impl ForcingSpec {
    pub fn none() -> Self {
        Self::default()
    }

    pub fn validate(&self) -> Result<()> {
        if !self.amplitude.is_finite() {
            return Err(Error::InvalidArgument("forcing amplitude must be finite".into()));
        }
        if !(self.length_scale > 0.0) {
            return Err(Error::InvalidArgument("forcing length_scale must be positive".into()));
        }
        if !(self.ramp_time >= 0.0) {
            return Err(Error::InvalidArgument("forcing ramp_time must be >= 0".into()));
        }
        if self.center.iter().any(|c| !(0.0..=2.0 * PI).contains(c)) {
            return Err(Error::InvalidArgument("forcing center must lie in [0, 2π]³".into()));
        }
        Ok(())
    }

    /// Time modulation applied to the fixed spatial shape.
    pub fn time_factor(&self, t: f64) -> f64 {
        match self.kind {
            ForcingKind::None => 0.0,
            ForcingKind::SteadyAnalytic => 1.0,
            ForcingKind::ConcentratedPulse => {
                if self.ramp_time > 0.0 {
                    (t / self.ramp_time).clamp(0.0, 1.0)
                } else {
                    1.0
                }
            }
        }
    }

    fn shape(&self, grid: GridSpec) -> Result<Option<SpectralField>> {
        let a = self.amplitude;
        let physical = match self.kind {
            ForcingKind::None => return Ok(None),
            ForcingKind::SteadyAnalytic => {
                let k = (2.0 * PI / self.length_scale).round().max(1.0);
                RealField::from_fn(grid, |x| {
                    [
                        a * ((k * x[2]).sin() + (k * x[1]).cos()),
                        a * ((k * x[0]).sin() + (k * x[2]).cos()),
                        a * ((k * x[1]).sin() + (k * x[0]).cos()),
                    ]
                })
            }
            ForcingKind::ConcentratedPulse => {
                let (c, l) = (self.center, self.length_scale);
                RealField::from_fn(grid, |x| {
                    let d = periodic_offset(x, c);
                    let g = (-(d[0] * d[0] + d[1] * d[1] + d[2] * d[2]) / (2.0 * l * l)).exp();
                    [-a * g * d[1] / l, a * g * d[0] / l, 0.0]
                })
            }
        };
        Ok(Some(leray_project(&dealias(&forward_transform(&physical)?))))
    }
}

/// Offset `x − c` wrapped into `[−π, π)` per axis.
fn periodic_offset(x: [f64; 3], c: [f64; 3]) -> [f64; 3] {
    let wrap = |d: f64| (d + PI).rem_euclid(2.0 * PI) - PI;
    [wrap(x[0] - c[0]), wrap(x[1] - c[1]), wrap(x[2] - c[2])]
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhysicsParams {
    pub nu: f64,
    pub forcing: ForcingSpec,
    /// Disabling the advective term leaves the Stokes problem, whose modes
    /// decay as `exp(−ν|k|²t)`.
    pub nonlinear: bool,
}

impl PhysicsParams {
    pub fn new(nu: f64, forcing: ForcingSpec) -> Result<Self> {
        let p = Self { nu, forcing, nonlinear: true };
        p.validate()?;
        Ok(p)
    }

    pub fn viscous_only(nu: f64) -> Result<Self> {
        let mut p = Self::new(nu, ForcingSpec::none())?;
        p.nonlinear = false;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.nu > 0.0 && self.nu.is_finite()) {
            return Err(Error::InvalidArgument("nu must be positive".into()));
        }
        self.forcing.validate()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitialKind {
    TaylorGreen,
    ConcentratedVortex,
    RandomAnalytic,
}

/// Initial-condition family.
///
/// * `taylor_green`: `A (sin x cos y cos z, −cos x sin y cos z, 0)`.
/// * `concentrated_vortex`: two crossed swirls (about z and about x) through
///   the box center under the envelope `exp(−concentration |x − c|²)`.
/// * `random_analytic`: `|û_k| ∝ A exp(−|k| / concentration)` with phases drawn
///   from a per-wavevector ChaCha stream, so the same seed yields the same
///   modes on every grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialConditionSpec {
    pub kind: InitialKind,
    #[serde(default = "one")]
    pub amplitude: f64,
    #[serde(default = "one")]
    pub concentration: f64,
    #[serde(default)]
    pub seed: u64,
}

fn one() -> f64 {
    1.0
}

impl InitialConditionSpec {
    pub fn taylor_green(amplitude: f64) -> Self {
        Self { kind: InitialKind::TaylorGreen, amplitude, concentration: 1.0, seed: 0 }
    }

    pub fn concentrated_vortex(amplitude: f64, concentration: f64) -> Self {
        Self { kind: InitialKind::ConcentratedVortex, amplitude, concentration, seed: 0 }
    }

    pub fn random_analytic(amplitude: f64, concentration: f64, seed: u64) -> Self {
        Self { kind: InitialKind::RandomAnalytic, amplitude, concentration, seed }
    }

    pub fn validate(&self) -> Result<()> {
        if !self.amplitude.is_finite() {
            return Err(Error::InvalidArgument("initial amplitude must be finite".into()));
        }
        if !(self.concentration > 0.0 && self.concentration.is_finite()) {
            return Err(Error::InvalidArgument("concentration must be positive".into()));
        }
        Ok(())
    }
}

/// Build a divergence-free, dealiased initial field.
pub fn make_initial_condition(spec: &InitialConditionSpec, grid: GridSpec) -> Result<SpectralField> {
    spec.validate()?;
    let a = spec.amplitude;
    let raw = match spec.kind {
        InitialKind::TaylorGreen => forward_transform(&RealField::from_fn(grid, |x| {
            [
                a * x[0].sin() * x[1].cos() * x[2].cos(),
                -a * x[0].cos() * x[1].sin() * x[2].cos(),
                0.0,
            ]
        }))?,
        InitialKind::ConcentratedVortex => {
            let c = spec.concentration;
            forward_transform(&RealField::from_fn(grid, |x| {
                let d = periodic_offset(x, [PI; 3]);
                let g = a * (-c * (d[0] * d[0] + d[1] * d[1] + d[2] * d[2])).exp();
                [-g * d[1], g * (d[0] - d[2]), g * d[1]]
            }))?
        }
        InitialKind::RandomAnalytic => random_analytic(grid, a, spec.concentration, spec.seed),
    };
    Ok(leray_project(&dealias(&raw)))
}

fn stream_id(k: [i64; 3]) -> u64 {
    const OFFSET: i64 = 1 << 20;
    let enc = |v: i64| (v + OFFSET) as u64;
    (enc(k[0]) << 42) | (enc(k[1]) << 21) | enc(k[2])
}

fn random_analytic(grid: GridSpec, amplitude: f64, concentration: f64, seed: u64) -> SpectralField {
    let km = grid.k_max() as i64;
    let mut out = SpectralField::zeros(grid);
    for kx in 0..=km {
        for ky in -km..=km {
            for kz in -km..=km {
                let k = [kx, ky, kz];
                // one representative per ±k pair
                let canonical = kx > 0 || (kx == 0 && (ky > 0 || (ky == 0 && kz > 0)));
                if !canonical {
                    continue;
                }
                let kn = ((kx * kx + ky * ky + kz * kz) as f64).sqrt();
                let mag = amplitude * (-kn / concentration).exp();
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_stream(stream_id(k));
                let mut v = [Complex64::new(0.0, 0.0); 3];
                for c in v.iter_mut() {
                    let phase: f64 = rng.random_range(0.0..2.0 * PI);
                    *c = Complex64::from_polar(mag, phase);
                }
                out.set_mode(k, v).expect("retained modes are representable");
            }
        }
    }
    out
}

/// Spectral forcing at time `t`: projected, dealiased, zero for `kind = none`.
pub fn eval_forcing(spec: &ForcingSpec, t: f64, grid: GridSpec) -> Result<SpectralField> {
    spec.validate()?;
    Ok(match spec.shape(grid)? {
        Some(shape) => shape.scaled(spec.time_factor(t)),
        None => SpectralField::zeros(grid),
    })
}

/// `−P̂ dealias(FFT[(u·∇)u])`, with products formed on the grid.
pub fn nonlinear_term(u: &SpectralField) -> Result<SpectralField> {
    let g = u.grid();
    let comps = [u.component(0), u.component(1), u.component(2)];
    // gradients[3*j + i] = ∂_i u_j
    let gradients: Vec<Vec<Complex64>> = (0..9)
        .into_par_iter()
        .map(|ji| {
            let (j, i) = (ji / 3, ji % 3);
            comps[j]
                .iter()
                .enumerate()
                .map(|(idx, v)| v * Complex64::new(0.0, g.derivative_wavevector(idx)[i]))
                .collect()
        })
        .collect();
    let mut inputs: Vec<&[Complex64]> = comps.to_vec();
    inputs.extend(gradients.iter().map(|v| v.as_slice()));
    let phys = scalars_to_physical(g, &inputs);
    drop(gradients);

    let advection: Vec<Vec<f64>> = (0..3)
        .into_par_iter()
        .map(|j| {
            let (ux, uy, uz) = (&phys[0], &phys[1], &phys[2]);
            let (dx, dy, dz) = (&phys[3 + 3 * j], &phys[4 + 3 * j], &phys[5 + 3 * j]);
            (0..g.len()).map(|p| ux[p] * dx[p] + uy[p] * dy[p] + uz[p] * dz[p]).collect()
        })
        .collect();
    if advection.iter().any(|c| c.iter().any(|v| !v.is_finite())) {
        return Err(Error::NonFinite("nonlinear product"));
    }
    let spec = scalars_to_spectral(g, &[&advection[0], &advection[1], &advection[2]]);
    let [a, b, c]: [Vec<Complex64>; 3] = spec.try_into().expect("three components");
    let mut n = SpectralField::from_components(g, [a, b, c])?;
    dealias_in_place(&mut n);
    Ok(leray_project(&n).scaled(-1.0))
}

/// Right-hand side evaluator with the forcing shape cached for one grid.
#[derive(Clone, Debug)]
pub struct NavierStokes {
    grid: GridSpec,
    params: PhysicsParams,
    forcing_shape: Option<SpectralField>,
}

impl NavierStokes {
    pub fn new(grid: GridSpec, params: PhysicsParams) -> Result<Self> {
        params.validate()?;
        let forcing_shape = params.forcing.shape(grid)?;
        Ok(Self { grid, params, forcing_shape })
    }

    pub fn grid(&self) -> GridSpec {
        self.grid
    }

    pub fn params(&self) -> &PhysicsParams {
        &self.params
    }

    pub fn forcing(&self, t: f64) -> SpectralField {
        match &self.forcing_shape {
            Some(shape) => shape.scaled(self.params.forcing.time_factor(t)),
            None => SpectralField::zeros(self.grid),
        }
    }

    /// `∫ u·f dx` at time `t`.
    pub fn power_input(&self, u: &SpectralField, t: f64) -> Result<f64> {
        match &self.forcing_shape {
            Some(shape) => {
                let s = self.params.forcing.time_factor(t);
                Ok(s * crate::diagnostics::power_input(u, shape)?)
            }
            None => Ok(0.0),
        }
    }

    /// `N̂(u) − ν|k|²û + P̂f̂(t)`.
    pub fn rhs(&self, u: &SpectralField, t: f64) -> Result<SpectralField> {
        if u.grid() != self.grid {
            return Err(Error::GridMismatch { left: u.grid().n_points(), right: self.grid.n_points() });
        }
        let mut out = if self.params.nonlinear {
            nonlinear_term(u)?
        } else {
            SpectralField::zeros(self.grid)
        };
        let g = self.grid;
        let nu = self.params.nu;
        for c in 0..3 {
            let src = u.component(c);
            out.component_mut(c).par_iter_mut().enumerate().for_each(|(idx, v)| {
                let k = g.wavevector(idx);
                let k2 = (k[0] * k[0] + k[1] * k[1] + k[2] * k[2]) as f64;
                *v -= src[idx] * (nu * k2);
            });
        }
        if let Some(shape) = &self.forcing_shape {
            let s = self.params.forcing.time_factor(t);
            if s != 0.0 {
                out.axpy(s, shape)?;
            }
        }
        if !out.is_finite() {
            return Err(Error::NonFinite("rhs"));
        }
        Ok(out)
    }
}

/// One-shot right-hand side evaluation.
pub fn rhs(u: &SpectralField, t: f64, params: &PhysicsParams) -> Result<SpectralField> {
    NavierStokes::new(u.grid(), params.clone())?.rhs(u, t)
}
