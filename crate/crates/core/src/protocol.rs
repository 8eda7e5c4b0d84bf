//! Multi-step protocols and the derived metrics used to compare designs.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cell::{CellDesign, Direction};
use crate::error::{Error, Result};
use crate::sim::{
    build_mesh, initial_state, simulate_cc, CcRun, CellState, DepletionEvent, Mesh, RunOptions,
    Sample, SolverConfig, Termination,
};

/// C-rate of the slow charge that defines a design's specific capacity.
pub const SPECIFIC_CAPACITY_RATE: f64 = 0.05;
/// Anchor rate for normalized C-rate curves.
pub const CRATE_ANCHOR: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StepMode {
    CcCharge,
    CcDischarge,
    Rest,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProtocolStep {
    pub mode: StepMode,
    /// Multiple of `I_1C`; ignored for rests.
    #[serde(default)]
    pub c_rate: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cutoff_voltage: Option<f64>,
    /// Seconds.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub time_limit: Option<f64>,
}

impl ProtocolStep {
    pub fn charge(c_rate: f64, cutoff_voltage: f64) -> Self {
        Self {
            mode: StepMode::CcCharge,
            c_rate,
            cutoff_voltage: Some(cutoff_voltage),
            time_limit: None,
        }
    }

    pub fn discharge(c_rate: f64, cutoff_voltage: f64) -> Self {
        Self {
            mode: StepMode::CcDischarge,
            c_rate,
            cutoff_voltage: Some(cutoff_voltage),
            time_limit: None,
        }
    }

    pub fn rest(seconds: f64) -> Self {
        Self {
            mode: StepMode::Rest,
            c_rate: 0.0,
            cutoff_voltage: None,
            time_limit: Some(seconds),
        }
    }

    fn validate(&self, index: usize) -> Result<()> {
        let named = |what: String| Error::config(format!("protocol step {index}: {what}"));
        if let Some(t) = self.time_limit {
            if !(t > 0.0) {
                return Err(named(format!("time_limit must be positive, got {t}")));
            }
        }
        match self.mode {
            StepMode::Rest => {
                if self.time_limit.is_none() {
                    return Err(named("rest needs a time_limit".into()));
                }
            }
            StepMode::CcCharge | StepMode::CcDischarge => {
                if !(self.c_rate > 0.0 && self.c_rate.is_finite()) {
                    return Err(named(format!(
                        "c_rate must be positive, got {}",
                        self.c_rate
                    )));
                }
                if self.cutoff_voltage.is_none() && self.time_limit.is_none() {
                    return Err(named("constant-current step has no stop condition".into()));
                }
            }
        }
        Ok(())
    }

    fn options(&self, i_1c: f64, snapshot_count: usize) -> RunOptions {
        let current = match self.mode {
            StepMode::CcCharge => self.c_rate * i_1c,
            StepMode::CcDischarge => -self.c_rate * i_1c,
            StepMode::Rest => 0.0,
        };
        RunOptions {
            current,
            cutoff: if self.mode == StepMode::Rest {
                None
            } else {
                self.cutoff_voltage
            },
            time_limit: self.time_limit,
            snapshot_count,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Protocol {
    pub steps: Vec<ProtocolStep>,
    /// 1C current (A); the design's own value when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub i_1c: Option<f64>,
}

impl Protocol {
    pub fn new(steps: Vec<ProtocolStep>) -> Self {
        Self { steps, i_1c: None }
    }

    /// A single constant-current charge to the design's upper cutoff.
    pub fn cc_charge(design: &CellDesign, c_rate: f64) -> Self {
        Self::new(vec![ProtocolStep::charge(c_rate, design.cutoff_upper)])
    }

    /// `cycles` charges at `charge_rate`, each followed (except the last) by a discharge
    /// at `discharge_rate`.
    pub fn cycling(
        design: &CellDesign,
        charge_rate: f64,
        discharge_rate: f64,
        cycles: usize,
    ) -> Self {
        let mut steps = Vec::with_capacity(2 * cycles);
        for k in 0..cycles {
            if k > 0 {
                steps.push(ProtocolStep::discharge(discharge_rate, design.cutoff_lower));
            }
            steps.push(ProtocolStep::charge(charge_rate, design.cutoff_upper));
        }
        Self::new(steps)
    }

    pub const PRESETS: [&'static str; 2] = ["3c-x4", "3c-01c-3c"];

    /// Named cycling presets: `3c-x4` (four 3C charges separated by 3C discharges) and
    /// `3c-01c-3c` (3C charge, 0.1C discharge, 3C charge).
    pub fn preset(name: &str, design: &CellDesign) -> Result<Self> {
        match name {
            "3c-x4" => Ok(Self::cycling(design, 3.0, 3.0, 4)),
            "3c-01c-3c" => Ok(Self::cycling(design, 3.0, 0.1, 2)),
            other => Err(Error::config(format!(
                "unknown protocol preset `{other}` (available: {})",
                Self::PRESETS.join(", ")
            ))),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.steps.is_empty() {
            return Err(Error::config("protocol has no steps"));
        }
        if let Some(i) = self.i_1c {
            if !(i > 0.0) {
                return Err(Error::constraint("I_1C > 0", format!("I_1C = {i}")));
            }
        }
        for (k, s) in self.steps.iter().enumerate() {
            s.validate(k)?;
        }
        Ok(())
    }

    /// Initial loading implied by the first current-carrying step.
    pub fn initial_direction(&self) -> Direction {
        match self
            .steps
            .iter()
            .map(|s| s.mode)
            .find(|m| *m != StepMode::Rest)
        {
            Some(StepMode::CcDischarge) => Direction::Discharge,
            _ => Direction::Charge,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepResult {
    pub index: usize,
    pub mode: StepMode,
    pub c_rate: f64,
    /// Time at the start of the step, measured from the start of the protocol (s).
    pub start_time: f64,
    pub run: CcRun,
}

impl StepResult {
    pub fn capacity(&self) -> f64 {
        self.run.capacity()
    }

    pub fn termination(&self) -> Termination {
        self.run.termination
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepFailure {
    pub step: usize,
    pub message: String,
    pub solver: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationResult {
    pub design: String,
    pub steps: Vec<StepResult>,
    /// Set when a step could not be completed; `steps` then holds the completed prefix.
    pub failure: Option<StepFailure>,
}

impl SimulationResult {
    pub fn is_complete(&self) -> bool {
        self.failure.is_none()
    }

    /// Capacity of every charge step, in order (mAh/cm^2).
    pub fn charge_capacities(&self) -> Vec<f64> {
        self.capacities(StepMode::CcCharge)
    }

    pub fn discharge_capacities(&self) -> Vec<f64> {
        self.capacities(StepMode::CcDischarge)
    }

    fn capacities(&self, mode: StepMode) -> Vec<f64> {
        self.steps
            .iter()
            .filter(|s| s.mode == mode)
            .map(|s| s.capacity())
            .collect()
    }

    pub fn final_state(&self) -> Option<&CellState> {
        self.steps.last().map(|s| &s.run.final_state)
    }

    /// First depletion event across all steps, with time measured from the protocol start.
    pub fn first_depletion(&self) -> Option<DepletionEvent> {
        self.steps.iter().find_map(|s| {
            s.run.diagnostics.depletion.map(|d| DepletionEvent {
                time: d.time + s.start_time,
                ..d
            })
        })
    }
}

/// Runs `protocol` step by step, each from the previous terminal state.
///
/// Input errors are returned as `Err`; a solver failure mid-protocol yields a partial result
/// carrying the failure.
pub fn run_protocol(
    design: &CellDesign,
    protocol: &Protocol,
    config: &SolverConfig,
    snapshot_count: usize,
) -> Result<SimulationResult> {
    design.validate()?;
    config.validate()?;
    protocol.validate()?;
    let mesh = build_mesh(design, config)?;
    let init = initial_state(design, &mesh, protocol.initial_direction())?;
    run_protocol_from(design, &mesh, protocol, config, init, snapshot_count)
}

/// As [`run_protocol`] but from an explicit state on a prebuilt mesh.
pub fn run_protocol_from(
    design: &CellDesign,
    mesh: &Mesh,
    protocol: &Protocol,
    config: &SolverConfig,
    init: CellState,
    snapshot_count: usize,
) -> Result<SimulationResult> {
    protocol.validate()?;
    init.check_shape(mesh)?;
    let i_1c = protocol.i_1c.unwrap_or(design.i_1c);
    let t0 = init.time;
    let mut state = init;
    let mut steps = Vec::with_capacity(protocol.steps.len());
    let mut failure = None;
    for (index, step) in protocol.steps.iter().enumerate() {
        let options = step.options(i_1c, snapshot_count);
        match simulate_cc(design, mesh, config, &state, &options) {
            Ok(run) => {
                state = run.final_state.clone();
                steps.push(StepResult {
                    index,
                    mode: step.mode,
                    c_rate: step.c_rate,
                    start_time: state.time - t0 - run.duration(),
                    run,
                });
            }
            Err(e) if e.is_solver_failure() => {
                failure = Some(StepFailure {
                    step: index,
                    message: e.to_string(),
                    solver: true,
                });
                break;
            }
            Err(e) => return Err(e),
        }
    }
    Ok(SimulationResult {
        design: design.name.clone(),
        steps,
        failure,
    })
}

/// Runs one constant-current charge from the charge-initial state.
pub fn charge_run(
    design: &CellDesign,
    c_rate: f64,
    config: &SolverConfig,
    snapshot_count: usize,
) -> Result<CcRun> {
    design.validate()?;
    let mesh = build_mesh(design, config)?;
    let init = initial_state(design, &mesh, Direction::Charge)?;
    simulate_cc(
        design,
        &mesh,
        config,
        &init,
        &RunOptions::charge(design, c_rate).with_snapshots(snapshot_count),
    )
}

/// Areal capacity (mAh/cm^2) of a 0.05C charge to the upper cutoff.
pub fn specific_capacity(design: &CellDesign, config: &SolverConfig) -> Result<f64> {
    Ok(charge_run(design, SPECIFIC_CAPACITY_RATE, config, 0)?.capacity())
}

pub fn capacity_retention(achieved: f64, specific: f64) -> Result<f64> {
    if !(specific > 0.0) {
        return Err(Error::config(format!(
            "specific capacity must be positive, got {specific}"
        )));
    }
    Ok(achieved / specific)
}

/// Rounds a fraction to the nearest 0.1%.
pub fn round_percent(fraction: f64) -> f64 {
    (fraction * 1000.0).round() / 10.0
}

/// `J·L·a/I`: reaction current normalized so that uniform utilization gives 1.
pub fn normalized_reaction_current(
    j: f64,
    electrode_length: f64,
    surface_area: f64,
    current_density: f64,
) -> Result<f64> {
    if current_density == 0.0 {
        return Err(Error::config(
            "normalized reaction current undefined at zero applied current",
        ));
    }
    Ok(j * electrode_length * surface_area / current_density)
}

/// Normalized reaction current at every electrode node of a snapshot.
pub fn normalized_current_profile(
    design: &CellDesign,
    mesh: &Mesh,
    j: &[f64],
    current_density: f64,
) -> Result<Vec<f64>> {
    let start = mesh.electrode_start();
    let length = design.electrode_thickness();
    j.iter()
        .enumerate()
        .map(|(e, &j)| {
            let layer = &design.layers[mesh.layer_of(start + e)];
            normalized_reaction_current(j, length, layer.surface_area(), current_density)
        })
        .collect()
}

/// `∫ J̄ dx / L` over the electrode; equals 1 when reactions carry the applied current.
pub fn integrated_normalized_current(design: &CellDesign, mesh: &Mesh, profile: &[f64]) -> f64 {
    let start = mesh.electrode_start();
    profile
        .iter()
        .enumerate()
        .map(|(e, v)| v * mesh.dx[start + e])
        .sum::<f64>()
        / design.electrode_thickness()
}

/// Mass energy density (Wh/g) by trapezoidal quadrature of `|I|·V` over the series.
pub fn energy_density(samples: &[Sample], mass: f64) -> Result<f64> {
    if !(mass > 0.0) {
        return Err(Error::config(format!("mass must be positive, got {mass}")));
    }
    if samples.len() < 2 {
        return Err(Error::config("energy density needs at least two samples"));
    }
    let joules: f64 = samples
        .windows(2)
        .map(|w| {
            0.5 * (w[0].current.abs() * w[0].voltage + w[1].current.abs() * w[1].voltage)
                * (w[1].time - w[0].time)
        })
        .sum();
    Ok(joules / 3600.0 / mass)
}

/// Elapsed minutes of a charge segment and the SOC it reached.
pub fn time_and_soc_at_cutoff(run: &CcRun, specific: f64) -> (f64, f64) {
    (run.duration() / 60.0, run.capacity() / specific)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CratePoint {
    pub c_rate: f64,
    #[serde(rename = "capacity_mah_cm2")]
    pub capacity: f64,
    /// Capacity relative to the 0.5C entry, when normalization was requested.
    pub normalized: Option<f64>,
}

/// Charges at each rate from the same initial state, in parallel; results follow `rates`.
pub fn crate_curve(
    design: &CellDesign,
    rates: &[f64],
    config: &SolverConfig,
    normalize: bool,
) -> Result<Vec<CratePoint>> {
    if rates.is_empty() {
        return Err(Error::config("C-rate list is empty"));
    }
    if let Some(r) = rates.iter().find(|r| !(**r > 0.0)) {
        return Err(Error::config(format!("C-rates must be positive, got {r}")));
    }
    let anchor = rates.iter().position(|r| (r - CRATE_ANCHOR).abs() < 1e-12);
    if normalize && anchor.is_none() {
        return Err(Error::config(
            "normalization requested but 0.5C is not in the rate list",
        ));
    }
    let capacities = rates
        .par_iter()
        .map(|&r| charge_run(design, r, config, 0).map(|run| run.capacity()))
        .collect::<Result<Vec<_>>>()?;
    let reference = anchor.filter(|_| normalize).map(|k| capacities[k]);
    Ok(rates
        .iter()
        .zip(&capacities)
        .map(|(&c_rate, &capacity)| CratePoint {
            c_rate,
            capacity,
            normalized: reference.map(|r| capacity / r),
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignMetrics {
    pub specific_capacity: f64,
    pub c_rate: f64,
    pub achieved_capacity: f64,
    pub retention: f64,
    /// Wh/g.
    pub energy_density: f64,
    /// g.
    pub cathode_mass: f64,
    pub time_to_cutoff: f64,
    pub soc_at_cutoff: f64,
    pub termination: Termination,
    pub depletion: Option<DepletionEvent>,
}

impl DesignMetrics {
    pub fn from_runs(design: &CellDesign, specific: f64, c_rate: f64, run: &CcRun) -> Result<Self> {
        let achieved = run.capacity();
        let mass = design.cathode_mass();
        let (minutes, soc) = time_and_soc_at_cutoff(run, specific);
        Ok(Self {
            specific_capacity: specific,
            c_rate,
            achieved_capacity: achieved,
            retention: capacity_retention(achieved, specific)?,
            energy_density: energy_density(&run.samples, mass)?,
            cathode_mass: mass,
            time_to_cutoff: minutes,
            soc_at_cutoff: soc,
            termination: run.termination,
            depletion: run.diagnostics.depletion,
        })
    }
}

/// Specific capacity plus a charge at `c_rate`, both from the charge-initial state.
pub fn evaluate_design(
    design: &CellDesign,
    c_rate: f64,
    config: &SolverConfig,
) -> Result<DesignMetrics> {
    let specific = specific_capacity(design, config)?;
    evaluate_with_specific(design, specific, c_rate, config)
}

/// As [`evaluate_design`] with a known specific capacity.
pub fn evaluate_with_specific(
    design: &CellDesign,
    specific: f64,
    c_rate: f64,
    config: &SolverConfig,
) -> Result<DesignMetrics> {
    let run = charge_run(design, c_rate, config, 0)?;
    DesignMetrics::from_runs(design, specific, c_rate, &run)
}
