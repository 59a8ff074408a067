//! Run orchestration and on-disk artifacts.
//!
//! A run directory holds:
//!
//! * `ledger.csv`: diagnostics rows, appended and flushed as the run goes
//! * `spectra.csv`: sampled shell-spectrum fits
//! * `snapshots/snap_<step>.bin`: spectral snapshots
//! * `breakdown.txt`, `summary.txt`: `key: value` reports
//! * `config.toml`: effective configuration with defaults materialized

use std::fmt::Write as _;
use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use crate::config::RunConfig;
use crate::diagnostics::{format_float, kinetic_energy, max_velocity, DiagnosticsRecord, EnergyLedger, LEDGER_HEADER};
use crate::dynamics::{make_initial_condition, NavierStokes};
use crate::error::{Error, Result};
use crate::field::SpectralField;
use crate::grid::DealiasRule;
use crate::integrate::{advance, rk4_step, Observer, SimulationState, StopReason};
use crate::regularity::{
    breakdown_monitor, fit_strip, resolution_check, shell_spectrum, BreakdownReport, MonitorThresholds,
    ResolutionReport, SpectrumProfile, SpectrumSample, StopCondition, StripFit,
};
use crate::snapshot;

pub const LEDGER_FILE: &str = "ledger.csv";
pub const SPECTRA_FILE: &str = "spectra.csv";
pub const SNAPSHOT_DIR: &str = "snapshots";
pub const SPECTRA_HEADER: &str = "step,t,k_max,tail_ratio,c_star,delta,fit_r2,window_lo,window_hi";

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ExitStatus {
    Clean,
    Operational,
    Config,
    Diverged,
    DtUnderflow,
    MaxSteps,
    Breakdown,
}

impl ExitStatus {
    pub fn code(self) -> i32 {
        match self {
            ExitStatus::Clean => 0,
            ExitStatus::Operational => 1,
            ExitStatus::Config => 2,
            ExitStatus::Diverged => 3,
            ExitStatus::DtUnderflow => 4,
            ExitStatus::MaxSteps => 5,
            ExitStatus::Breakdown => 6,
        }
    }

    pub fn for_error(e: &Error) -> Self {
        match e {
            Error::Config { .. } => ExitStatus::Config,
            _ => ExitStatus::Operational,
        }
    }
}

pub fn snapshot_path(dir: &Path, step: u64) -> PathBuf {
    dir.join(SNAPSHOT_DIR).join(format!("snap_{step:08}.bin"))
}

fn ensure_writable(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir.join(SNAPSHOT_DIR)).map_err(|e| Error::io(dir, e))?;
    let probe = dir.join(".write_probe");
    File::create(&probe).and_then(|mut f| f.write_all(b"ok")).map_err(|e| Error::io(dir, e))?;
    fs::remove_file(&probe).map_err(|e| Error::io(&probe, e))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path).map(BufWriter::new).map_err(|e| Error::io(path, e))
}

struct LedgerWriter {
    path: PathBuf,
    out: BufWriter<File>,
    every: u64,
    pending: Option<DiagnosticsRecord>,
    rows: usize,
    all: EnergyLedger,
}

impl LedgerWriter {
    fn new(path: PathBuf, every: u64) -> Result<Self> {
        let mut out = create(&path)?;
        writeln!(out, "{LEDGER_HEADER}").and_then(|_| out.flush()).map_err(|e| Error::io(&path, e))?;
        Ok(Self { path, out, every, pending: None, rows: 0, all: EnergyLedger::new() })
    }

    fn write(&mut self, r: &DiagnosticsRecord) -> Result<()> {
        writeln!(self.out, "{}", r.to_csv_row()).and_then(|_| self.out.flush()).map_err(|e| Error::io(&self.path, e))?;
        self.rows += 1;
        Ok(())
    }

    fn finish(&mut self) -> Result<()> {
        if let Some(r) = self.pending.take() {
            self.write(&r)?;
        }
        Ok(())
    }
}

impl Observer for LedgerWriter {
    fn observe(&mut self, state: &SimulationState, record: &DiagnosticsRecord) -> Result<()> {
        self.all.push(*record)?;
        if record.step % self.every == 0 || state.diverged || !record.is_finite() {
            self.pending = None;
            self.write(record)
        } else {
            self.pending = Some(*record);
            Ok(())
        }
    }
}

struct SnapshotWriter {
    dir: PathBuf,
    every: u64,
    last_written: Option<u64>,
}

impl SnapshotWriter {
    fn save(&mut self, state: &SimulationState) -> Result<()> {
        snapshot::save(&snapshot_path(&self.dir, state.step), &state.field, state.t)?;
        self.last_written = Some(state.step);
        Ok(())
    }
}

impl Observer for SnapshotWriter {
    fn observe(&mut self, state: &SimulationState, _: &DiagnosticsRecord) -> Result<()> {
        if self.every > 0 && state.step % self.every == 0 && !state.diverged {
            self.save(state)?;
        }
        Ok(())
    }
}

struct SpectrumMonitor {
    path: PathBuf,
    out: BufWriter<File>,
    every: u64,
    window: Option<(usize, usize)>,
    samples: Vec<SpectrumSample>,
}

impl SpectrumMonitor {
    fn record(&mut self, state: &SimulationState) -> Result<()> {
        let s = SpectrumSample::from_field(state.step, state.t, &state.field, self.window);
        writeln!(self.out, "{}", spectrum_row(&s)).and_then(|_| self.out.flush()).map_err(|e| Error::io(&self.path, e))?;
        self.samples.push(s);
        Ok(())
    }
}

impl Observer for SpectrumMonitor {
    fn observe(&mut self, state: &SimulationState, _: &DiagnosticsRecord) -> Result<()> {
        if self.every > 0 && state.step % self.every == 0 && state.field.is_finite() {
            self.record(state)?;
        }
        Ok(())
    }
}

pub fn spectrum_row(s: &SpectrumSample) -> String {
    let mut row = format!("{},{},{},{}", s.step, format_float(s.t), s.k_max, format_float(s.tail_ratio));
    match s.fit {
        Some(f) => {
            let _ = write!(
                row,
                ",{},{},{},{},{}",
                format_float(f.c_star),
                format_float(f.delta),
                format_float(f.r2),
                f.window.0,
                f.window.1
            );
        }
        None => row.push_str(",,,,,"),
    }
    row
}

pub fn parse_spectrum_row(line: &str) -> std::result::Result<SpectrumSample, String> {
    let f: Vec<&str> = line.trim().split(',').collect();
    if f.len() != 9 {
        return Err(format!("expected 9 fields, found {}", f.len()));
    }
    let num = |i: usize| f[i].parse::<f64>().map_err(|e| format!("field {i}: {e}"));
    let int = |i: usize| f[i].parse::<u64>().map_err(|e| format!("field {i}: {e}"));
    let fit = if f[4].is_empty() {
        None
    } else {
        Some(StripFit { c_star: num(4)?, delta: num(5)?, r2: num(6)?, window: (int(7)? as usize, int(8)? as usize) })
    };
    Ok(SpectrumSample { step: int(0)?, t: num(1)?, k_max: int(2)? as usize, tail_ratio: num(3)?, fit })
}

pub fn read_spectra(path: &Path) -> Result<Vec<SpectrumSample>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut lines = BufReader::new(file).lines();
    match lines.next() {
        Some(Ok(h)) if h.trim() == SPECTRA_HEADER => {}
        _ => return Err(Error::format(path, format!("expected header `{SPECTRA_HEADER}`"))),
    }
    let mut out = Vec::new();
    for (i, line) in lines.enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(parse_spectrum_row(&line).map_err(|m| Error::format(path, format!("line {}: {m}", i + 2)))?);
    }
    Ok(out)
}

#[derive(Clone, Debug)]
pub struct RunSummary {
    pub directory: PathBuf,
    pub stop: StopReason,
    pub steps: u64,
    pub t_final: f64,
    pub ledger_rows: usize,
    pub final_record: DiagnosticsRecord,
    pub thresholds: MonitorThresholds,
    pub breakdown: BreakdownReport,
    pub exit: ExitStatus,
}

impl RunSummary {
    pub fn to_text(&self) -> String {
        let r = &self.final_record;
        let mut s = String::new();
        let _ = writeln!(s, "stop_reason: {}", self.stop.as_str());
        let _ = writeln!(s, "exit_code: {}", self.exit.code());
        let _ = writeln!(s, "steps: {}", self.steps);
        let _ = writeln!(s, "t_final: {}", format_float(self.t_final));
        let _ = writeln!(s, "ledger_rows: {}", self.ledger_rows);
        let _ = writeln!(s, "t_num: {}", format_float(self.breakdown.t_num));
        let _ = writeln!(s, "stop_condition: {}", self.breakdown.stop_condition.as_str());
        let _ = writeln!(s, "final_energy: {}", format_float(r.energy));
        let _ = writeln!(s, "final_dissipation: {}", format_float(r.dissipation));
        let _ = writeln!(s, "final_max_velocity: {}", format_float(r.max_velocity));
        let _ = writeln!(s, "final_max_vorticity: {}", format_float(r.max_vorticity));
        let _ = writeln!(s, "final_bkm_integral: {}", format_float(r.bkm_integral));
        let _ = writeln!(s, "final_residual_accum: {}", format_float(r.residual_accum));
        s
    }
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Execute one run into `config.output.directory`.
pub fn run_command(config: &RunConfig) -> Result<RunSummary> {
    let dir = config.output.directory.clone();
    ensure_writable(&dir)?;
    let grid = config.grid_spec();
    let model = NavierStokes::new(grid, config.physics.params())?;
    let u0 = make_initial_condition(&config.initial_condition, grid)?;
    let thresholds = config.monitor.thresholds(kinetic_energy(&u0));

    let mut effective = config.clone();
    effective.monitor.epsilon = Some(thresholds.epsilon);
    effective.monitor.energy_cap = Some(thresholds.energy_cap);
    write_text(&dir.join("config.toml"), &effective.to_toml())?;

    let spectra_path = dir.join(SPECTRA_FILE);
    let mut spectra_out = create(&spectra_path)?;
    writeln!(spectra_out, "{SPECTRA_HEADER}").map_err(|e| Error::io(&spectra_path, e))?;
    let mut ledger = LedgerWriter::new(dir.join(LEDGER_FILE), config.output.ledger_every)?;
    let mut snapshots = SnapshotWriter { dir: dir.clone(), every: config.output.snapshot_every, last_written: None };
    let mut spectra = SpectrumMonitor {
        path: spectra_path,
        out: spectra_out,
        every: config.monitor.spectrum_every,
        window: config.monitor.window(),
        samples: vec![],
    };

    let outcome = advance(
        SimulationState::new(u0),
        &config.step_control,
        &model,
        &mut [&mut ledger, &mut snapshots, &mut spectra],
    )?;
    ledger.finish()?;
    let state = &outcome.state;
    if state.field.is_finite() {
        if snapshots.last_written != Some(state.step) {
            snapshots.save(state)?;
        }
        if spectra.every > 0 && spectra.samples.last().map(|s| s.step) != Some(state.step) {
            spectra.record(state)?;
        }
    }

    let records = ledger.all.records();
    let breakdown = breakdown_monitor(records, &spectra.samples, &thresholds, config.step_control.t_end)?;
    let exit = match outcome.stop {
        StopReason::Diverged => ExitStatus::Diverged,
        StopReason::DtUnderflow => ExitStatus::DtUnderflow,
        StopReason::MaxSteps => ExitStatus::MaxSteps,
        StopReason::ReachedTEnd if breakdown.stop_condition != StopCondition::None => ExitStatus::Breakdown,
        StopReason::ReachedTEnd => ExitStatus::Clean,
    };
    let summary = RunSummary {
        directory: dir.clone(),
        stop: outcome.stop,
        steps: state.step,
        t_final: state.t,
        ledger_rows: ledger.rows,
        final_record: *records.last().expect("initial row"),
        thresholds,
        breakdown,
        exit,
    };
    write_text(&dir.join("breakdown.txt"), &summary.breakdown.to_text())?;
    write_text(&dir.join("summary.txt"), &summary.to_text())?;
    Ok(summary)
}

pub fn read_ledger(path: &Path) -> Result<EnergyLedger> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    EnergyLedger::read_csv(BufReader::new(file), path)
}

#[derive(Clone, Debug)]
pub struct Analysis {
    pub ledger_rows: usize,
    pub spectrum_samples: usize,
    pub last: DiagnosticsRecord,
    pub peak_vorticity: f64,
    pub breakdown: BreakdownReport,
}

impl Analysis {
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "ledger_rows: {}", self.ledger_rows);
        let _ = writeln!(s, "spectrum_samples: {}", self.spectrum_samples);
        let _ = writeln!(s, "last_t: {}", format_float(self.last.t));
        let _ = writeln!(s, "last_energy: {}", format_float(self.last.energy));
        let _ = writeln!(s, "peak_max_vorticity: {}", format_float(self.peak_vorticity));
        let _ = writeln!(s, "bkm_integral: {}", format_float(self.last.bkm_integral));
        s.push_str(&self.breakdown.to_text());
        s
    }
}

/// Re-run the breakdown monitor over a stored run directory. Thresholds and
/// horizon come from the stored `config.toml` when present.
pub fn analyze(run_dir: &Path) -> Result<Analysis> {
    let ledger_path = run_dir.join(LEDGER_FILE);
    if !ledger_path.is_file() {
        return Err(Error::NoLedger(run_dir.to_path_buf()));
    }
    let ledger = read_ledger(&ledger_path)?;
    let first = ledger.records().first().ok_or(Error::EmptyLedger)?;
    let last = *ledger.last().expect("non-empty");
    let spectra_path = run_dir.join(SPECTRA_FILE);
    let spectra = if spectra_path.is_file() { read_spectra(&spectra_path)? } else { vec![] };
    let config_path = run_dir.join("config.toml");
    let (thresholds, horizon) = if config_path.is_file() {
        let cfg = crate::config::load_config(&config_path)?;
        (cfg.monitor.thresholds(first.energy), cfg.step_control.t_end)
    } else {
        (MonitorThresholds::defaults_for(first.energy), last.t)
    };
    let breakdown = breakdown_monitor(ledger.records(), &spectra, &thresholds, horizon)?;
    let peak_vorticity = ledger.records().iter().map(|r| r.max_vorticity).fold(f64::NEG_INFINITY, f64::max);
    Ok(Analysis { ledger_rows: ledger.len(), spectrum_samples: spectra.len(), last, peak_vorticity, breakdown })
}

#[derive(Clone, Debug)]
pub struct ResolutionQuery {
    pub snapshot: PathBuf,
    pub epsilon: f64,
    pub dt: Option<f64>,
    pub order: i32,
    pub c2: Option<f64>,
    /// Supplies the dealias rule and, when `c2` is absent, the dynamics for a
    /// step-doubling estimate of it.
    pub config: Option<RunConfig>,
    pub dealias: DealiasRule,
}

#[derive(Clone, Debug)]
pub struct ResolutionAnswer {
    pub profile: SpectrumProfile,
    pub report: ResolutionReport,
    pub snapshot_k_max: usize,
    pub dt: Option<f64>,
    pub c2: Option<f64>,
}

impl ResolutionAnswer {
    pub fn to_text(&self) -> String {
        let fit = self.profile.fit.expect("fitted");
        let mut s = String::new();
        let _ = writeln!(s, "c_star: {}", format_float(fit.c_star));
        let _ = writeln!(s, "delta: {}", format_float(fit.delta));
        let _ = writeln!(s, "fit_r2: {}", format_float(fit.r2));
        let _ = writeln!(s, "k_required: {}", self.report.k_required);
        let _ = writeln!(s, "snapshot_k_max: {}", self.snapshot_k_max);
        let _ = writeln!(s, "spatial_resolved: {}", self.snapshot_k_max >= self.report.k_required);
        let _ = writeln!(s, "spatial_bound_at_k: {}", format_float(self.report.spatial_bound_at_k));
        match (self.dt, self.c2) {
            (Some(dt), Some(c2)) => {
                let _ = writeln!(s, "dt: {}", format_float(dt));
                let _ = writeln!(s, "c2: {}", format_float(c2));
                let _ = writeln!(s, "temporal_bound: {}", format_float(self.report.temporal_bound));
                let _ = writeln!(s, "dt_ok: {}", self.report.dt_ok);
            }
            _ => {
                let _ = writeln!(s, "dt_ok: not checked");
            }
        }
        s
    }
}

/// Step-doubling estimate of the global temporal constant: one step of `dt`
/// against two of `dt/2` gives the local constant, scaled by the horizon.
pub fn estimate_temporal_constant(u: &SpectralField, t: f64, dt: f64, order: i32, config: &RunConfig) -> Result<f64> {
    let model = NavierStokes::new(u.grid(), config.physics.params())?;
    let start = SimulationState { t, ..SimulationState::new(u.clone()) };
    let coarse = rk4_step(&start, dt, &model)?.state;
    let half = rk4_step(&start, 0.5 * dt, &model)?.state;
    let fine = rk4_step(&half, 0.5 * dt, &model)?.state;
    if coarse.diverged || fine.diverged {
        return Err(Error::Diverged);
    }
    let diff = max_velocity(&coarse.field.sub(&fine.field)?);
    let local = diff / (dt.powi(order + 1) * (1.0 - 0.5f64.powi(order)));
    Ok(local * config.step_control.t_end.max(dt))
}

pub fn check_resolution(query: &ResolutionQuery) -> Result<ResolutionAnswer> {
    let dealias = query.config.as_ref().map(|c| c.grid.dealias).unwrap_or(query.dealias);
    let (u, t) = snapshot::load(&query.snapshot, dealias)?;
    let profile = fit_strip(&shell_spectrum(&u), query.config.as_ref().and_then(|c| c.monitor.window()))?;
    let c2 = match (query.dt, query.c2, &query.config) {
        (_, Some(c2), _) => Some(c2),
        (Some(dt), None, Some(cfg)) => Some(estimate_temporal_constant(&u, t, dt, query.order, cfg)?),
        (Some(_), None, None) => {
            return Err(Error::InvalidArgument("--dt needs either --c2 or --config to bound the temporal error".into()))
        }
        (None, None, _) => None,
    };
    let report = resolution_check(&profile, query.epsilon, query.dt.unwrap_or(0.0), query.order, c2.unwrap_or(0.0))?;
    Ok(ResolutionAnswer { profile, report, snapshot_k_max: u.grid().k_max(), dt: query.dt.filter(|_| c2.is_some()), c2 })
}
