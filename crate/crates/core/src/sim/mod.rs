//! Multilayer pseudo-2D cell model: finite-volume discretisation through the cell
//! thickness, a radial particle dimension per electrode node, and an implicit
//! Newton-based time integrator under applied current.

mod banded;
pub mod mesh;
pub mod particle;
mod run;
pub mod state;
mod system;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use banded::BandedMatrix;
pub use mesh::{build_mesh, Mesh, RadialMesh, Region};
pub use run::{
    simulate_cc, CcRun, DepletionEvent, Diagnostics, RunOptions, Sample, Snapshot, Termination,
};
pub use state::{initial_state, lithium_inventory, CellState};
pub use system::{step, StepStats, Stepper};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverConfig {
    pub nodes_per_region: usize,
    pub radial_shells: usize,
    /// Scaled residual tolerance for Newton convergence.
    pub newton_tol: f64,
    pub max_newton_iter: usize,
    pub dt_initial: f64,
    pub dt_min: f64,
    pub dt_max: f64,
    /// Voltage tolerance when bisecting onto a cutoff (V).
    pub cutoff_tol: f64,
    /// Largest accepted terminal-voltage change over one step (V).
    pub max_voltage_step: f64,
    /// Largest step as a fraction of the nominal step duration (1/C-rate hours).
    pub max_step_fraction: f64,
    /// Electrolyte concentration below which depletion is reported (mol/m^3).
    pub depletion_floor: f64,
    /// Smallest admissible finite-volume cell (m).
    pub min_cell_width: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            nodes_per_region: 30,
            radial_shells: 20,
            newton_tol: 1e-9,
            max_newton_iter: 25,
            dt_initial: 0.1,
            dt_min: 1e-4,
            dt_max: 30.0,
            cutoff_tol: 1e-4,
            max_voltage_step: 0.01,
            max_step_fraction: 1.0 / 400.0,
            depletion_floor: 1.0,
            min_cell_width: 1e-8,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if self.nodes_per_region < 2 || self.radial_shells < 2 {
            return Err(Error::constraint(
                "node counts >= 2",
                format!(
                    "nodes_per_region = {}, radial_shells = {}",
                    self.nodes_per_region, self.radial_shells
                ),
            ));
        }
        let positive = [
            ("newton_tol > 0", self.newton_tol),
            ("cutoff_tol > 0", self.cutoff_tol),
            ("dt_min > 0", self.dt_min),
            ("max_voltage_step > 0", self.max_voltage_step),
            ("max_step_fraction > 0", self.max_step_fraction),
            ("depletion_floor > 0", self.depletion_floor),
            ("min_cell_width > 0", self.min_cell_width),
        ];
        for (name, v) in positive {
            if !(v > 0.0) {
                return Err(Error::constraint(name, format!("{v}")));
            }
        }
        if !(self.dt_min <= self.dt_initial && self.dt_initial <= self.dt_max) {
            return Err(Error::constraint(
                "dt_min <= dt_initial <= dt_max",
                format!("{} / {} / {}", self.dt_min, self.dt_initial, self.dt_max),
            ));
        }
        if self.max_newton_iter == 0 {
            return Err(Error::constraint("max_newton_iter > 0", "0"));
        }
        Ok(())
    }
}
