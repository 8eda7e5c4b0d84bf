//! Constant-current integration with adaptive steps and cutoff location.

use serde::{Deserialize, Serialize};

use crate::cell::{areal_capacity, CellDesign};
use crate::error::{Error, Result};
use crate::sim::mesh::Mesh;
use crate::sim::state::CellState;
use crate::sim::system::Stepper;
use crate::sim::SolverConfig;

/// Stop conditions and applied current for one constant-current segment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunOptions {
    /// Applied current (A), positive on charge.
    pub current: f64,
    /// Voltage cutoff, approached from below on charge and from above on discharge.
    pub cutoff: Option<f64>,
    /// Segment duration limit (s).
    pub time_limit: Option<f64>,
    /// Evenly spaced field snapshots per segment, plus the terminal state.
    pub snapshot_count: usize,
}

impl RunOptions {
    pub fn charge(design: &CellDesign, c_rate: f64) -> Self {
        Self {
            current: c_rate * design.i_1c,
            cutoff: Some(design.cutoff_upper),
            time_limit: None,
            snapshot_count: 20,
        }
    }

    pub fn discharge(design: &CellDesign, c_rate: f64) -> Self {
        Self {
            current: -c_rate * design.i_1c,
            cutoff: Some(design.cutoff_lower),
            time_limit: None,
            snapshot_count: 20,
        }
    }

    pub fn rest(duration: f64) -> Self {
        Self {
            current: 0.0,
            cutoff: None,
            time_limit: Some(duration),
            snapshot_count: 20,
        }
    }

    pub fn with_snapshots(mut self, count: usize) -> Self {
        self.snapshot_count = count;
        self
    }

    fn validate(&self) -> Result<()> {
        if !self.current.is_finite() {
            return Err(Error::config(format!("applied current {}", self.current)));
        }
        if let Some(t) = self.time_limit {
            if !(t >= 0.0) {
                return Err(Error::config(format!("time limit {t}")));
            }
        }
        let stops_by_voltage = self.cutoff.is_some() && self.current != 0.0;
        if !stops_by_voltage && self.time_limit.is_none() {
            return Err(Error::config("segment has no reachable stop condition"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Termination {
    Cutoff,
    TimeLimit,
    DepletionAssistedCutoff,
}

/// One accepted point of the voltage trace.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    /// Time since the start of the segment (s).
    pub time: f64,
    pub voltage: f64,
    /// Applied current (A).
    pub current: f64,
    /// Charge passed since the start of the segment (mAh/cm^2).
    pub capacity: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub time: f64,
    pub voltage: f64,
    pub capacity: f64,
    pub c_e: Vec<f64>,
    pub phi_e: Vec<f64>,
    /// Per electrode node.
    pub c_surf: Vec<f64>,
    /// Per electrode node (A/m^2).
    pub j: Vec<f64>,
}

impl Snapshot {
    fn of(state: &CellState, time: f64, capacity: f64) -> Self {
        Self {
            time,
            voltage: state.voltage,
            capacity,
            c_e: state.c_e.clone(),
            phi_e: state.phi_e.clone(),
            c_surf: state.c_surf.clone(),
            j: state.j.clone(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DepletionEvent {
    pub x: f64,
    pub time: f64,
    pub c_e: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    /// Largest electrolyte potential magnitude seen (V).
    pub peak_phi_e: f64,
    pub min_c_e: f64,
    pub min_c_e_x: f64,
    pub min_c_e_time: f64,
    /// First time any node fell below the depletion floor.
    pub depletion: Option<DepletionEvent>,
    pub steps: usize,
    pub rejected_steps: usize,
    pub newton_iterations: usize,
}

impl Diagnostics {
    fn new() -> Self {
        Self {
            peak_phi_e: 0.0,
            min_c_e: f64::INFINITY,
            min_c_e_x: f64::NAN,
            min_c_e_time: f64::NAN,
            depletion: None,
            steps: 0,
            rejected_steps: 0,
            newton_iterations: 0,
        }
    }

    fn observe(&mut self, mesh: &Mesh, state: &CellState, time: f64, floor: f64) {
        for &p in &state.phi_e {
            self.peak_phi_e = self.peak_phi_e.max(p.abs());
        }
        let (i, c) = state.min_c_e();
        if c < self.min_c_e {
            self.min_c_e = c;
            self.min_c_e_x = mesh.x[i];
            self.min_c_e_time = time;
        }
        if c < floor && self.depletion.is_none() {
            self.depletion = Some(DepletionEvent {
                x: mesh.x[i],
                time,
                c_e: c,
            });
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CcRun {
    pub samples: Vec<Sample>,
    pub snapshots: Vec<Snapshot>,
    pub final_state: CellState,
    pub termination: Termination,
    pub diagnostics: Diagnostics,
}

impl CcRun {
    /// Charge passed over the segment (mAh/cm^2).
    pub fn capacity(&self) -> f64 {
        self.samples.last().map_or(0.0, |s| s.capacity)
    }

    /// Segment duration (s).
    pub fn duration(&self) -> f64 {
        self.samples.last().map_or(0.0, |s| s.time)
    }
}

/// Integrates one constant-current segment from `init` until a stop condition is met.
///
/// Depletion does not abort the run: it is recorded and integration continues; if the
/// solver then fails to advance, the segment ends as a depletion-assisted cutoff.
pub fn simulate_cc(
    design: &CellDesign,
    mesh: &Mesh,
    config: &SolverConfig,
    init: &CellState,
    options: &RunOptions,
) -> Result<CcRun> {
    options.validate()?;
    let mut stepper = Stepper::new(design, mesh, config)?;
    let current = options.current / design.area;
    let sign = current.signum();
    let crossed = |v: f64| match options.cutoff {
        Some(cut) if current != 0.0 => sign * (v - cut) >= 0.0,
        _ => false,
    };
    let t0 = init.time;
    let nominal = if current != 0.0 {
        3600.0 * design.i_1c / options.current.abs()
    } else {
        options.time_limit.unwrap_or(3600.0)
    };
    let dt_cap = config
        .dt_max
        .min((config.max_step_fraction * nominal).max(config.dt_min));
    let snapshot_every = match options.time_limit {
        Some(t) if current == 0.0 || t < nominal => t,
        _ => nominal,
    } / options.snapshot_count.max(1) as f64;

    let mut diagnostics = Diagnostics::new();
    diagnostics.observe(mesh, init, 0.0, config.depletion_floor);
    let mut state = init.clone();
    let mut samples = vec![Sample {
        time: 0.0,
        voltage: init.voltage,
        current: options.current,
        capacity: 0.0,
    }];
    let mut snapshots = Vec::new();
    if options.snapshot_count > 0 {
        snapshots.push(Snapshot::of(init, 0.0, 0.0));
    }
    let mut next_snapshot = snapshot_every;
    let capacity_at = |t: f64| areal_capacity(current.abs(), t);

    if crossed(init.voltage) || options.time_limit == Some(0.0) {
        let termination = if crossed(init.voltage) {
            Termination::Cutoff
        } else {
            Termination::TimeLimit
        };
        return Ok(CcRun {
            samples,
            snapshots,
            final_state: state,
            termination,
            diagnostics,
        });
    }

    let mut dt = config.dt_initial;
    let max_steps = 2_000_000;
    let termination = loop {
        if diagnostics.steps + diagnostics.rejected_steps > max_steps {
            return Err(Error::StepTooSmall {
                time: state.time,
                dt_min: config.dt_min,
            });
        }
        let elapsed = state.time - t0;
        let mut dt_try = dt.min(dt_cap);
        let mut hits_limit = false;
        if let Some(limit) = options.time_limit {
            let remaining = limit - elapsed;
            if remaining <= dt_try * (1.0 + 1e-9) {
                dt_try = remaining;
                hits_limit = true;
            }
        }
        let first = state.current != current;
        match stepper.step(&state, current, dt_try) {
            Ok((new, stats)) => {
                if !first
                    && (new.voltage - state.voltage).abs() > config.max_voltage_step
                    && dt_try > 2.0 * config.dt_min
                {
                    diagnostics.rejected_steps += 1;
                    dt = 0.5 * dt_try;
                    continue;
                }
                diagnostics.newton_iterations += stats.newton_iterations;
                let mut new = new;
                let mut done = None;
                if crossed(new.voltage) {
                    if (new.voltage - options.cutoff.unwrap()).abs() > config.cutoff_tol {
                        new = locate_cutoff(
                            &mut stepper,
                            &state,
                            current,
                            dt_try,
                            config,
                            &crossed,
                            options.cutoff.unwrap(),
                        )?;
                    }
                    done = Some(Termination::Cutoff);
                } else if hits_limit {
                    done = Some(Termination::TimeLimit);
                }
                diagnostics.steps += 1;
                let t = new.time - t0;
                diagnostics.observe(mesh, &new, t, config.depletion_floor);
                samples.push(Sample {
                    time: t,
                    voltage: new.voltage,
                    current: options.current,
                    capacity: capacity_at(t),
                });
                if options.snapshot_count > 0
                    && t >= next_snapshot * (1.0 - 1e-12)
                    && done.is_none()
                {
                    snapshots.push(Snapshot::of(&new, t, capacity_at(t)));
                    while next_snapshot <= t {
                        next_snapshot += snapshot_every;
                    }
                }
                state = new;
                if let Some(done) = done {
                    break done;
                }
                if stats.newton_iterations <= 3 {
                    dt = (1.5 * dt_try).min(config.dt_max);
                } else if stats.newton_iterations >= 7 {
                    dt = (0.7 * dt_try).max(config.dt_min);
                } else {
                    dt = dt_try;
                }
                dt = dt.max(config.dt_min);
            }
            Err(e) if e.is_solver_failure() || matches!(e, Error::Domain { .. }) => {
                diagnostics.rejected_steps += 1;
                if dt_try <= config.dt_min * (1.0 + 1e-9) {
                    if diagnostics.depletion.is_some()
                        || state.min_c_e().1 < 10.0 * config.depletion_floor
                    {
                        if diagnostics.depletion.is_none() {
                            let (i, c) = state.min_c_e();
                            diagnostics.depletion = Some(DepletionEvent {
                                x: mesh.x[i],
                                time: state.time - t0,
                                c_e: c,
                            });
                        }
                        break Termination::DepletionAssistedCutoff;
                    }
                    return Err(Error::StepTooSmall {
                        time: state.time,
                        dt_min: config.dt_min,
                    });
                }
                dt = (0.25 * dt_try).max(config.dt_min);
            }
            Err(e) => return Err(e),
        }
    };
    if options.snapshot_count > 0 {
        let t = state.time - t0;
        snapshots.push(Snapshot::of(&state, t, capacity_at(t)));
    }
    Ok(CcRun {
        samples,
        snapshots,
        final_state: state,
        termination,
        diagnostics,
    })
}

/// Bisects the step length until the voltage lands within tolerance of the cutoff.
fn locate_cutoff(
    stepper: &mut Stepper,
    from: &CellState,
    current: f64,
    dt_hi: f64,
    config: &SolverConfig,
    crossed: &dyn Fn(f64) -> bool,
    cutoff: f64,
) -> Result<CellState> {
    let (mut lo, mut hi) = (0.0, dt_hi);
    let mut best: Option<CellState> = None;
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if mid <= 0.0 || hi - lo < 1e-9 * dt_hi {
            break;
        }
        match stepper.step(from, current, mid) {
            Ok((s, _)) => {
                let hit = (s.voltage - cutoff).abs() <= config.cutoff_tol;
                if crossed(s.voltage) {
                    hi = mid;
                    best = Some(s);
                    if hit {
                        break;
                    }
                } else {
                    lo = mid;
                    if hit {
                        best = Some(s);
                        break;
                    }
                }
            }
            Err(_) => hi = mid,
        }
    }
    match best {
        Some(s) => Ok(s),
        None => stepper.step(from, current, dt_hi).map(|(s, _)| s),
    }
}
