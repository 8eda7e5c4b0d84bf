//! Multilayer porous-electrode half-cell simulator and electrode design toolkit.

// `!(x > 0.0)` is used on purpose so NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cell;
pub mod config;
pub mod electrochem;
pub mod error;
pub mod fingerprint;
pub mod output;
pub mod presets;
pub mod protocol;
pub mod sim;
pub mod studio;

pub use cell::{areal_capacity, CellDesign, Direction, LayerSpec};
pub use config::{parse_config, RunConfig};
pub use electrochem::{ChemistrySpec, ElectrolyteSpec, KineticsContext, OcpCurve};
pub use error::{Error, Result};
pub use protocol::{
    capacity_retention, crate_curve, energy_density, normalized_reaction_current, run_protocol,
    specific_capacity, time_and_soc_at_cutoff, DesignMetrics, Protocol, ProtocolStep,
    SimulationResult, StepMode,
};
pub use sim::{build_mesh, initial_state, simulate_cc, CellState, Mesh, RunOptions, SolverConfig};
pub use studio::{Adjust, DesignSpace, Field, OptimizeOptions, Override, Param, Studio};
