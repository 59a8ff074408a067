//! Per-step blowup diagnostics and the energy-balance ledger.

use std::io::{BufRead, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::field::{box_volume, curl, grad_norm_sq, inverse_unchecked, l2_norm_sq, SpectralField};

/// Header of the ledger time-series file.
pub const LEDGER_HEADER: &str =
    "step,t,dt,energy,dissipation,power_in,max_velocity,max_vorticity,bkm_integral,residual,residual_accum";

/// `½‖u‖²`.
pub fn kinetic_energy(u: &SpectralField) -> f64 {
    0.5 * l2_norm_sq(u)
}

/// `ν‖∇u‖²`.
pub fn dissipation(u: &SpectralField, nu: f64) -> f64 {
    nu * grad_norm_sq(u)
}

/// `∫ u·f dx = (2π)³ Re Σ_k û_k·conj(f̂_k)`.
pub fn power_input(u: &SpectralField, f: &SpectralField) -> Result<f64> {
    Ok(box_volume() * u.inner_product(f)?)
}

/// Largest pointwise speed over the grid points.
pub fn max_velocity(u: &SpectralField) -> f64 {
    inverse_unchecked(u).max_magnitude()
}

/// Largest pointwise vorticity magnitude over the grid points.
pub fn max_vorticity(u: &SpectralField) -> f64 {
    max_velocity(&curl(u))
}

/// Left Riemann-sum update of `∫‖ω‖_∞ dt`.
pub fn bkm_update(accum: f64, max_vort: f64, dt: f64) -> Result<f64> {
    if !(accum >= 0.0 && max_vort >= 0.0 && dt >= 0.0) {
        return Err(Error::InvalidArgument(format!(
            "bkm_update needs non-negative inputs (accum={accum}, max_vort={max_vort}, dt={dt})"
        )));
    }
    Ok(accum + dt * max_vort)
}

/// Time-averaged dissipation and power over one step.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct StepAverages {
    pub dissipation: f64,
    pub power_in: f64,
}

/// Instantaneous energy-budget terms of one state.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct EnergySample {
    pub energy: f64,
    pub dissipation: f64,
    pub power_in: f64,
}

/// Endpoint-mean averages. The run loop uses stage-weighted averages from
/// [`crate::integrate::rk4_step`] instead; this rule is kept for post-hoc
/// ledgers that only store endpoint values.
pub fn trapezoidal_average(prev: &EnergySample, next: &EnergySample) -> StepAverages {
    StepAverages {
        dissipation: 0.5 * (prev.dissipation + next.dissipation),
        power_in: 0.5 * (prev.power_in + next.power_in),
    }
}

/// `R = E^{n+1} − E^n + Δt D^{n+½} − Δt P^{n+½}`.
pub fn energy_residual(prev_energy: f64, next_energy: f64, averages: StepAverages, dt: f64) -> f64 {
    next_energy - prev_energy + dt * averages.dissipation - dt * averages.power_in
}

/// One ledger row. Row 0 carries instantaneous values; row `n ≥ 1` carries the
/// averages and residual of the step that ended at `t_n`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DiagnosticsRecord {
    pub step: u64,
    pub t: f64,
    pub dt: f64,
    pub energy: f64,
    pub dissipation: f64,
    pub power_in: f64,
    pub max_velocity: f64,
    pub max_vorticity: f64,
    pub bkm_integral: f64,
    pub residual: f64,
    pub residual_accum: f64,
}

impl DiagnosticsRecord {
    pub fn values(&self) -> [f64; 10] {
        [
            self.t,
            self.dt,
            self.energy,
            self.dissipation,
            self.power_in,
            self.max_velocity,
            self.max_vorticity,
            self.bkm_integral,
            self.residual,
            self.residual_accum,
        ]
    }

    pub fn is_finite(&self) -> bool {
        self.values().iter().all(|v| v.is_finite())
    }

    pub fn to_csv_row(&self) -> String {
        let mut row = self.step.to_string();
        for v in self.values() {
            row.push(',');
            row.push_str(&format_float(v));
        }
        row
    }

    pub fn parse_csv_row(line: &str) -> std::result::Result<Self, String> {
        let fields: Vec<&str> = line.trim().split(',').collect();
        if fields.len() != 11 {
            return Err(format!("expected 11 columns, found {}", fields.len()));
        }
        let step = fields[0].parse::<u64>().map_err(|e| format!("step: {e}"))?;
        let mut v = [0.0; 10];
        for (slot, text) in v.iter_mut().zip(&fields[1..]) {
            *slot = text.parse::<f64>().map_err(|e| format!("`{text}`: {e}"))?;
        }
        Ok(Self {
            step,
            t: v[0],
            dt: v[1],
            energy: v[2],
            dissipation: v[3],
            power_in: v[4],
            max_velocity: v[5],
            max_vorticity: v[6],
            bkm_integral: v[7],
            residual: v[8],
            residual_accum: v[9],
        })
    }
}

/// Seventeen significant digits; parses back to the identical `f64`.
pub fn format_float(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.16e}")
    } else {
        v.to_string()
    }
}

/// Append-only sequence of records with strictly increasing step and time.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct EnergyLedger {
    records: Vec<DiagnosticsRecord>,
}

impl EnergyLedger {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, record: DiagnosticsRecord) -> Result<()> {
        if let Some(last) = self.records.last() {
            // a diverged row may carry a non-finite time, which compares false
            if record.step <= last.step || !(record.t > last.t || !record.t.is_finite()) {
                return Err(Error::InvalidArgument(format!(
                    "ledger rows must increase: step {} t {} after step {} t {}",
                    record.step, record.t, last.step, last.t
                )));
            }
        }
        self.records.push(record);
        Ok(())
    }

    pub fn records(&self) -> &[DiagnosticsRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn last(&self) -> Option<&DiagnosticsRecord> {
        self.records.last()
    }

    pub fn write_csv(&self, mut out: impl Write) -> std::io::Result<()> {
        writeln!(out, "{LEDGER_HEADER}")?;
        for r in &self.records {
            writeln!(out, "{}", r.to_csv_row())?;
        }
        Ok(())
    }

    pub fn read_csv(input: impl BufRead, path: &Path) -> Result<Self> {
        let mut lines = input.lines();
        let header = lines
            .next()
            .transpose()
            .map_err(|e| Error::io(path, e))?
            .ok_or_else(|| Error::format(path, format!("empty file, expected header `{LEDGER_HEADER}`")))?;
        if header.trim() != LEDGER_HEADER {
            return Err(Error::format(path, format!("bad header, expected `{LEDGER_HEADER}`")));
        }
        let mut ledger = Self::new();
        for (i, line) in lines.enumerate() {
            let line = line.map_err(|e| Error::io(path, e))?;
            if line.trim().is_empty() {
                continue;
            }
            let record = DiagnosticsRecord::parse_csv_row(&line)
                .map_err(|m| Error::format(path, format!("line {}: {m}", i + 2)))?;
            ledger.push(record).map_err(|e| Error::format(path, format!("line {}: {e}", i + 2)))?;
        }
        Ok(ledger)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{make_initial_condition, InitialConditionSpec};
    use crate::field::{forward_transform, RealField};
    use crate::grid::{DealiasRule, GridSpec};
    use std::f64::consts::PI;

    fn grid(n: usize) -> GridSpec {
        GridSpec::new(n, DealiasRule::TwoThirds).unwrap()
    }

    fn shear(g: GridSpec) -> SpectralField {
        forward_transform(&RealField::from_fn(g, |x| [0.0, 0.0, x[0].sin()])).unwrap()
    }

    #[test]
    fn energy_and_dissipation() {
        let g = grid(16);
        let tg = make_initial_condition(&InitialConditionSpec::taylor_green(1.0), g).unwrap();
        assert!((kinetic_energy(&tg) - PI.powi(3)).abs() < 1e-12);
        assert!((kinetic_energy(&tg.scaled(2.0)) - 4.0 * kinetic_energy(&tg)).abs() < 1e-11);
        assert_eq!(kinetic_energy(&SpectralField::zeros(g)), 0.0);
        let u = shear(g);
        let half_box = 4.0 * PI.powi(3);
        assert!((dissipation(&u, 1.0) - half_box).abs() < 1e-11);
        assert!((dissipation(&u, 2.0) - 2.0 * dissipation(&u, 1.0)).abs() < 1e-11);
        let c = forward_transform(&RealField::from_fn(g, |_| [1.0, 1.0, 0.0])).unwrap();
        assert_eq!(dissipation(&c, 1.0), 0.0);
    }

    #[test]
    fn power_input_cases() {
        let g = grid(8);
        let u = shear(g);
        assert_eq!(power_input(&u, &SpectralField::zeros(g)).unwrap(), 0.0);
        let e0 = kinetic_energy(&u);
        assert!((power_input(&u, &u).unwrap() - 2.0 * e0).abs() < 1e-12);
        let other = forward_transform(&RealField::from_fn(g, |x| [0.0, 0.0, (2.0 * x[1]).cos()])).unwrap();
        assert!(power_input(&u, &other).unwrap().abs() < 1e-13);
        assert!(power_input(&u, &SpectralField::zeros(grid(4))).is_err());
    }

    #[test]
    fn sup_norms() {
        let g = grid(8);
        let u = shear(g);
        assert!((max_velocity(&u) - 1.0).abs() < 1e-14);
        assert!((max_velocity(&u.scaled(2.0)) - 2.0).abs() < 1e-14);
        assert!((max_vorticity(&u) - 1.0).abs() < 1e-14);
        assert_eq!(max_velocity(&SpectralField::zeros(g)), 0.0);
        let c = forward_transform(&RealField::from_fn(g, |_| [1.0, 1.0, 0.0])).unwrap();
        assert_eq!(max_vorticity(&c), 0.0);
        // gradient of φ = sin x cos 2y
        let grad = forward_transform(&RealField::from_fn(g, |x| {
            [x[0].cos() * (2.0 * x[1]).cos(), -2.0 * x[0].sin() * (2.0 * x[1]).sin(), 0.0]
        }))
        .unwrap();
        assert!(max_vorticity(&grad) <= 1e-12);
    }

    #[test]
    fn bkm_sums() {
        let mut acc = 0.0;
        for _ in 0..10 {
            acc = bkm_update(acc, 3.0, 0.1).unwrap();
        }
        assert!((acc - 3.0).abs() < 1e-14);
        let mut acc = 0.0;
        for j in 0..10 {
            acc = bkm_update(acc, j as f64 * 0.1, 0.1).unwrap();
        }
        assert!((acc - 0.45).abs() < 1e-15);
        assert_eq!(bkm_update(1.25, 7.0, 0.0).unwrap(), 1.25);
        assert!(bkm_update(-1.0, 1.0, 0.1).is_err());
        assert!(bkm_update(0.0, 1.0, -0.1).is_err());
    }

    #[test]
    fn residual_vanishes_on_constructed_balances() {
        let (dt, e0, d) = (0.01, 3.0, 1.5);
        let avg = StepAverages { dissipation: d, power_in: 0.0 };
        assert!(energy_residual(e0, e0 - dt * d, avg, dt).abs() < 1e-14);
        // P = 2E with endpoint mean equal to 2E^{n+½}
        let e1 = e0 + dt * 2.0 * e0;
        let prev = EnergySample { energy: e0, dissipation: 0.0, power_in: 2.0 * e0 };
        let next = EnergySample { energy: e1, dissipation: 0.0, power_in: 2.0 * e0 };
        let r = energy_residual(e0, e1, trapezoidal_average(&prev, &next), dt);
        assert!(r.abs() < 1e-15);
    }

    #[test]
    fn ledger_order_and_csv() {
        let mut ledger = EnergyLedger::new();
        let mut r = DiagnosticsRecord {
            step: 0,
            t: 0.0,
            dt: 0.0,
            energy: 1.0 / 3.0,
            dissipation: 2.0f64.sqrt(),
            power_in: -1e-300,
            max_velocity: PI,
            max_vorticity: 1e10 / 7.0,
            bkm_integral: 0.0,
            residual: 0.0,
            residual_accum: 0.0,
        };
        ledger.push(r).unwrap();
        r.step = 1;
        r.t = 0.1;
        r.residual = 1.2345678901234567e-17;
        ledger.push(r).unwrap();
        assert!(ledger.push(r).is_err());
        let mut buf = Vec::new();
        ledger.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with(LEDGER_HEADER));
        let back = EnergyLedger::read_csv(text.as_bytes(), Path::new("mem")).unwrap();
        assert_eq!(back, ledger);
        assert!(EnergyLedger::read_csv("a,b\n".as_bytes(), Path::new("mem")).is_err());
    }
}
