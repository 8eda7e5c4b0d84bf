//! Built-in chemistries and cell designs.
//!
//! Layer parameters follow the NMC622:LFP bilayer half-cell and its single-material
//! benchmark counterparts. `active_fraction` and `density` are calibrated so that
//! 0.05C capacities and cathode masses line up with the reported cells.

use crate::cell::{CellDesign, LayerSpec};
use crate::electrochem::{
    ChemistrySpec, ElectrolyteCorrelation, ElectrolyteSpec, InitialLoading, KineticsContext,
    OcpCurve, ValoenReimers,
};
use crate::error::{Error, Result};

pub const AREA: f64 = 1.54e-4;
pub const CONTACT_RESISTANCE: f64 = 1.5e-3;
/// Lithium-metal exchange current density (A/m^2); not reported, calibrated against the
/// default 3C benchmark.
pub const CE_EXCHANGE_CURRENT: f64 = 100.0;
/// Correction applied to the Valøen-Reimers salt diffusivity, calibrated against the
/// LFP-only 3C benchmark.
pub const DIFFUSIVITY_FACTOR: f64 = 1.4;
pub const CUTOFF_UPPER: f64 = 4.2;
pub const CUTOFF_LOWER: f64 = 3.0;
pub const SIGMA_S: f64 = 5.0;

pub const PRESET_NAMES: [&str; 7] = [
    "default-bilayer",
    "optimal-bilayer",
    "nmc-only-72um",
    "lfp-only-113um",
    "nmc-only-89.2um",
    "lfp-only-149.5um",
    "candidate-bilayer",
];

/// Total electrode thicknesses (µm) of the thickness study.
pub const THICKNESS_GRID_UM: [f64; 6] = [60.0, 88.0, 104.0, 112.0, 140.0, 150.0];

/// (NMC, LFP) sub-layer thicknesses (µm) of the ratio study.
pub const RATIO_GRID_UM: [(f64, f64); 7] = [
    (13.5, 127.0),
    (47.0, 71.0),
    (52.25, 62.0),
    (56.0, 56.0),
    (57.25, 54.0),
    (68.5, 35.0),
    (84.0, 9.0),
];

/// Specific capacity (mAh/cm^2) shared by the ratio-study cases.
pub const RATIO_TARGET: f64 = 4.71;

/// NMC fractions of [`RATIO_GRID_UM`].
pub fn ratio_fractions() -> Vec<f64> {
    RATIO_GRID_UM.iter().map(|(a, b)| a / (a + b)).collect()
}

pub fn nmc622() -> ChemistrySpec {
    ChemistrySpec {
        name: "NMC622".into(),
        c_s_max: 48700.0,
        d_s: 4e-14,
        k_rate: 1e-10,
        particle_radius: 4.94e-6,
        active_fraction: 0.891,
        density: 4306.0,
        initial: InitialLoading {
            charge: 44868.0,
            discharge: 13366.0,
        },
        ocp: OcpCurve::nmc622(),
    }
}

pub fn lfp() -> ChemistrySpec {
    ChemistrySpec {
        name: "LFP".into(),
        c_s_max: 22806.0,
        d_s: 3e-16,
        k_rate: 8e-13,
        particle_radius: 0.43e-6,
        active_fraction: 0.738,
        density: 2988.0,
        initial: InitialLoading {
            charge: 22751.0,
            discharge: 29.0,
        },
        ocp: OcpCurve::lfp(),
    }
}

pub fn separator() -> LayerSpec {
    LayerSpec::separator(16e-6, 0.45, 1.5)
}

pub fn nmc_layer(thickness_um: f64, eps_e: f64, eps_cbd: f64, bruggeman: f64) -> LayerSpec {
    LayerSpec::electrode(
        "nmc",
        nmc622(),
        thickness_um / 1e6,
        eps_e,
        eps_cbd,
        bruggeman,
        SIGMA_S,
    )
}

pub fn lfp_layer(thickness_um: f64, eps_e: f64, eps_cbd: f64, bruggeman: f64) -> LayerSpec {
    LayerSpec::electrode(
        "lfp",
        lfp(),
        thickness_um / 1e6,
        eps_e,
        eps_cbd,
        bruggeman,
        SIGMA_S,
    )
}

pub fn electrolyte() -> ElectrolyteSpec {
    ElectrolyteSpec {
        correlation: ElectrolyteCorrelation::ValoenReimers(ValoenReimers::scaled(
            DIFFUSIVITY_FACTOR,
            1.0,
        )),
        ..ElectrolyteSpec::default()
    }
}

fn cell(name: &str, electrode: Vec<LayerSpec>, i_1c_ma: f64) -> CellDesign {
    let mut layers = vec![separator()];
    layers.extend(electrode);
    CellDesign {
        name: name.into(),
        layers,
        electrolyte: electrolyte(),
        area: AREA,
        contact_resistance: CONTACT_RESISTANCE,
        ce_exchange_current: CE_EXCHANGE_CURRENT,
        cutoff_upper: CUTOFF_UPPER,
        cutoff_lower: CUTOFF_LOWER,
        i_1c: i_1c_ma * 1e-3,
        kinetics: KineticsContext::default(),
    }
}

/// NMC 44 µm over LFP 44 µm with the as-fabricated microstructure.
pub fn default_bilayer() -> CellDesign {
    cell(
        "default-bilayer",
        vec![
            nmc_layer(44.0, 0.31, 0.11, 1.6),
            lfp_layer(44.0, 0.263, 0.11, 2.1),
        ],
        5.76,
    )
}

/// Default bilayer with the five candidate-optimal microstructure changes applied,
/// keeping the sub-layer thicknesses.
pub fn candidate_optimal_bilayer(nmc_um: f64, lfp_um: f64) -> CellDesign {
    cell(
        "candidate-bilayer",
        vec![
            nmc_layer(nmc_um, 0.30, 0.04, 1.6),
            lfp_layer(lfp_um, 0.30, 0.07, 1.8),
        ],
        5.76,
    )
}

/// NMC 47 µm over LFP 71 µm with the candidate-optimal microstructure.
pub fn optimal_bilayer() -> CellDesign {
    let mut d = candidate_optimal_bilayer(47.0, 71.0);
    d.name = "optimal-bilayer".into();
    d.i_1c = 7.25e-3;
    d
}

pub fn nmc_only_72um() -> CellDesign {
    cell(
        "nmc-only-72um",
        vec![nmc_layer(72.0, 0.31, 0.11, 1.6)],
        5.759,
    )
}

pub fn lfp_only_113um() -> CellDesign {
    cell(
        "lfp-only-113um",
        vec![lfp_layer(113.0, 0.263, 0.11, 2.1)],
        5.759,
    )
}

pub fn nmc_only_89um() -> CellDesign {
    cell(
        "nmc-only-89.2um",
        vec![nmc_layer(89.2, 0.30, 0.04, 1.6)],
        7.24,
    )
}

pub fn lfp_only_150um() -> CellDesign {
    cell(
        "lfp-only-149.5um",
        vec![lfp_layer(149.5, 0.30, 0.07, 1.8)],
        7.23,
    )
}

pub fn design(name: &str) -> Result<CellDesign> {
    match name {
        "default-bilayer" => Ok(default_bilayer()),
        "optimal-bilayer" => Ok(optimal_bilayer()),
        "nmc-only-72um" => Ok(nmc_only_72um()),
        "lfp-only-113um" => Ok(lfp_only_113um()),
        "nmc-only-89.2um" => Ok(nmc_only_89um()),
        "lfp-only-149.5um" => Ok(lfp_only_150um()),
        "candidate-bilayer" => Ok(candidate_optimal_bilayer(56.0, 56.0)),
        other => Err(Error::config(format!(
            "unknown preset `{other}` (available: {})",
            PRESET_NAMES.join(", ")
        ))),
    }
}
