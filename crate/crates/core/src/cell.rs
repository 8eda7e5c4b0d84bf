//! Cell geometry and material description: the unit of design-space search.

use serde::{Deserialize, Serialize};

use crate::electrochem::{specific_surface_area, ChemistrySpec, ElectrolyteSpec, KineticsContext};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Direction {
    Charge,
    Discharge,
}

impl Direction {
    /// +1 for charge (delithiation of the cathode), −1 for discharge.
    pub fn sign(self) -> f64 {
        match self {
            Direction::Charge => 1.0,
            Direction::Discharge => -1.0,
        }
    }
}

impl std::str::FromStr for Direction {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "charge" => Ok(Direction::Charge),
            "discharge" => Ok(Direction::Discharge),
            other => Err(Error::config(format!("unknown direction `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LayerSpec {
    pub name: String,
    /// Absent for the separator.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub chemistry: Option<ChemistrySpec>,
    /// Thickness (m).
    pub thickness: f64,
    pub eps_e: f64,
    #[serde(default)]
    pub eps_cbd: f64,
    pub bruggeman: f64,
    /// Solid electronic conductivity (S/m); unused for the separator.
    #[serde(default)]
    pub sigma_s: f64,
}

impl LayerSpec {
    pub fn separator(thickness: f64, eps_e: f64, bruggeman: f64) -> Self {
        Self {
            name: "separator".into(),
            chemistry: None,
            thickness,
            eps_e,
            eps_cbd: 0.0,
            bruggeman,
            sigma_s: 0.0,
        }
    }

    pub fn electrode(
        name: impl Into<String>,
        chemistry: ChemistrySpec,
        thickness: f64,
        eps_e: f64,
        eps_cbd: f64,
        bruggeman: f64,
        sigma_s: f64,
    ) -> Self {
        Self {
            name: name.into(),
            chemistry: Some(chemistry),
            thickness,
            eps_e,
            eps_cbd,
            bruggeman,
            sigma_s,
        }
    }

    pub fn is_electrode(&self) -> bool {
        self.chemistry.is_some()
    }

    /// Reactive surface area per volume (1/m); zero for the separator.
    pub fn surface_area(&self) -> f64 {
        match &self.chemistry {
            Some(chem) => {
                specific_surface_area(self.eps_e, self.eps_cbd, chem.particle_radius).unwrap_or(0.0)
            }
            None => 0.0,
        }
    }

    /// Volume fraction of lithium-storing solid.
    pub fn storage_fraction(&self) -> f64 {
        match &self.chemistry {
            Some(chem) => chem.active_fraction * (1.0 - self.eps_e),
            None => 0.0,
        }
    }

    /// Reactive solid fraction over storage fraction: scales the particle surface flux so that
    /// the particle inventory changes by exactly `a·J/F` per unit electrode volume.
    pub fn surface_flux_ratio(&self) -> f64 {
        let storage = self.storage_fraction();
        if storage > 0.0 {
            (1.0 - self.eps_e - self.eps_cbd) / storage
        } else {
            0.0
        }
    }

    /// Effective solid conductivity (S/m).
    pub fn sigma_eff(&self) -> f64 {
        crate::electrochem::effective_transport(self.sigma_s, 1.0 - self.eps_e, self.bruggeman)
    }

    /// Areal mass of the non-electrolyte phase (kg/m^2).
    pub fn areal_mass(&self) -> f64 {
        match &self.chemistry {
            Some(chem) => chem.density * (1.0 - self.eps_e) * self.thickness,
            None => 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.thickness > 0.0 && self.thickness.is_finite()) {
            return Err(Error::constraint(
                "L > 0",
                format!("layer `{}` thickness {}", self.name, self.thickness),
            ));
        }
        if !(self.eps_e > 0.0 && self.eps_e < 1.0) {
            return Err(Error::constraint(
                "0 < eps_e < 1",
                format!("layer `{}` eps_e {}", self.name, self.eps_e),
            ));
        }
        if !(self.bruggeman >= 1.0) {
            return Err(Error::constraint(
                "b >= 1",
                format!("layer `{}` b {}", self.name, self.bruggeman),
            ));
        }
        match &self.chemistry {
            Some(chem) => {
                chem.validate()?;
                if !(self.eps_cbd >= 0.0 && self.eps_e + self.eps_cbd < 1.0) {
                    return Err(Error::constraint(
                        "eps_e + eps_cbd < 1",
                        format!("layer `{}`: {} + {}", self.name, self.eps_e, self.eps_cbd),
                    ));
                }
                if !(self.sigma_s > 0.0) {
                    return Err(Error::constraint(
                        "sigma_s > 0",
                        format!("layer `{}`", self.name),
                    ));
                }
            }
            None => {
                if self.eps_cbd != 0.0 {
                    return Err(Error::constraint(
                        "separator eps_cbd = 0",
                        format!("layer `{}`", self.name),
                    ));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CellDesign {
    pub name: String,
    /// Separator first, then electrode sub-layers toward the current collector.
    pub layers: Vec<LayerSpec>,
    pub electrolyte: ElectrolyteSpec,
    /// Electrode cross-sectional area (m^2).
    pub area: f64,
    /// Contact resistance (Ω·m^2).
    pub contact_resistance: f64,
    /// Exchange current density of the lithium-metal counter electrode (A/m^2).
    pub ce_exchange_current: f64,
    pub cutoff_upper: f64,
    pub cutoff_lower: f64,
    /// Applied current for 1C (A).
    pub i_1c: f64,
    #[serde(default)]
    pub kinetics: KineticsContext,
}

impl CellDesign {
    pub fn validate(&self) -> Result<()> {
        if self.layers.is_empty() {
            return Err(Error::constraint(
                "layers non-empty",
                "design has no layers",
            ));
        }
        let separators = self.layers.iter().filter(|l| !l.is_electrode()).count();
        if separators != 1 || self.layers[0].is_electrode() {
            return Err(Error::constraint(
                "single separator adjacent to counter electrode",
                format!(
                    "found {separators} separator layer(s); the first layer must be the separator"
                ),
            ));
        }
        if self.layers.len() < 2 {
            return Err(Error::constraint(
                "at least one electrode layer",
                "design has only a separator",
            ));
        }
        for layer in &self.layers {
            layer.validate()?;
        }
        self.electrolyte.validate()?;
        self.kinetics.validate()?;
        if !(self.area > 0.0) {
            return Err(Error::constraint(
                "area > 0",
                format!("area = {}", self.area),
            ));
        }
        if !(self.cutoff_lower < self.cutoff_upper) {
            return Err(Error::constraint(
                "cutoff_lower < cutoff_upper",
                format!("{} >= {}", self.cutoff_lower, self.cutoff_upper),
            ));
        }
        if !(self.contact_resistance >= 0.0) {
            return Err(Error::constraint(
                "R_c >= 0",
                format!("R_c = {}", self.contact_resistance),
            ));
        }
        if !(self.ce_exchange_current > 0.0) {
            return Err(Error::constraint(
                "counter-electrode J0 > 0",
                format!("{}", self.ce_exchange_current),
            ));
        }
        if !(self.i_1c > 0.0) {
            return Err(Error::constraint(
                "I_1C > 0",
                format!("I_1C = {}", self.i_1c),
            ));
        }
        Ok(())
    }

    pub fn separator(&self) -> &LayerSpec {
        &self.layers[0]
    }

    pub fn electrode_layers(&self) -> impl Iterator<Item = &LayerSpec> {
        self.layers.iter().filter(|l| l.is_electrode())
    }

    pub fn electrode_layers_mut(&mut self) -> impl Iterator<Item = &mut LayerSpec> {
        self.layers.iter_mut().filter(|l| l.is_electrode())
    }

    pub fn electrode_layer_count(&self) -> usize {
        self.layers.len() - 1
    }

    /// Electrode sub-layer `k` (0 is adjacent to the separator).
    pub fn electrode(&self, k: usize) -> Option<&LayerSpec> {
        self.layers.get(k + 1)
    }

    pub fn electrode_mut(&mut self, k: usize) -> Option<&mut LayerSpec> {
        self.layers.get_mut(k + 1)
    }

    /// Total electrode (cathode) thickness, separator excluded (m).
    pub fn electrode_thickness(&self) -> f64 {
        self.electrode_layers().map(|l| l.thickness).sum()
    }

    /// Cathode mass (g).
    pub fn cathode_mass(&self) -> f64 {
        self.electrode_layers().map(|l| l.areal_mass()).sum::<f64>() * self.area * 1e3
    }

    /// Applied current density (A/m^2) at a C-rate.
    pub fn current_density(&self, c_rate: f64) -> f64 {
        c_rate * self.i_1c / self.area
    }

    /// Sets `I_1C` so that 1C corresponds to `capacity` mAh/cm^2.
    pub fn set_one_c_from_capacity(&mut self, capacity: f64) {
        // mAh/cm^2 · cm^2 → mA → A
        self.i_1c = capacity * self.area * 1e4 * 1e-3;
    }

    /// Theoretical areal capacity between the charge and discharge initial loadings (mAh/cm^2).
    pub fn loading_capacity(&self) -> f64 {
        self.electrode_layers()
            .map(|l| {
                let chem = l.chemistry.as_ref().expect("electrode layer");
                l.storage_fraction()
                    * l.thickness
                    * (chem.initial.charge - chem.initial.discharge).abs()
            })
            .sum::<f64>()
            * self.kinetics.faraday
            / 36_000.0
    }
}

/// Converts a current density (A/m^2) integrated over `seconds` to mAh/cm^2.
#[inline]
pub fn areal_capacity(current_density: f64, seconds: f64) -> f64 {
    current_density * seconds / 36_000.0
}
