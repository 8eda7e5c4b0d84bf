//! Field variables of the discretised cell at one instant.

use serde::{Deserialize, Serialize};

use crate::cell::{CellDesign, Direction};
use crate::error::{Error, Result};
use crate::sim::mesh::Mesh;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellState {
    /// Elapsed time (s).
    pub time: f64,
    /// Applied current density (A/m^2), positive on charge.
    pub current: f64,
    /// Electrolyte concentration per node (mol/m^3).
    pub c_e: Vec<f64>,
    /// Electrolyte potential per node (V vs. the lithium counter electrode).
    pub phi_e: Vec<f64>,
    /// Solid potential per electrode node (V).
    pub phi_s: Vec<f64>,
    /// Reaction current density per electrode node (A/m^2 of particle surface).
    pub j: Vec<f64>,
    /// Particle shell concentrations, electrode-node major (mol/m^3).
    pub c_s: Vec<f64>,
    /// Particle surface concentration per electrode node (mol/m^3).
    pub c_surf: Vec<f64>,
    pub shells: usize,
    /// Terminal voltage (V).
    pub voltage: f64,
}

impl CellState {
    pub fn electrode_nodes(&self) -> usize {
        self.phi_s.len()
    }

    /// Shell profile of electrode node `e` (0 is the first node past the separator).
    pub fn particle(&self, e: usize) -> &[f64] {
        &self.c_s[e * self.shells..(e + 1) * self.shells]
    }

    pub fn min_c_e(&self) -> (usize, f64) {
        self.c_e
            .iter()
            .copied()
            .enumerate()
            .fold(
                (0, f64::INFINITY),
                |best, (i, c)| if c < best.1 { (i, c) } else { best },
            )
    }

    /// Checks array shapes against a mesh.
    pub fn check_shape(&self, mesh: &Mesh) -> Result<()> {
        let n = mesh.len();
        let ne = n - mesh.electrode_start();
        let ok = self.c_e.len() == n
            && self.phi_e.len() == n
            && self.phi_s.len() == ne
            && self.j.len() == ne
            && self.c_surf.len() == ne
            && self.c_s.len() == ne * self.shells
            && mesh
                .radial
                .iter()
                .flatten()
                .all(|r| r.shells() == self.shells);
        if ok {
            Ok(())
        } else {
            Err(Error::State("state arrays do not match the mesh".into()))
        }
    }
}

/// Uniform electrolyte at its initial concentration, particles at the direction's initial
/// loading, zero reaction current. The solid potential is seeded at the open-circuit
/// potential of the layer next to the separator.
pub fn initial_state(design: &CellDesign, mesh: &Mesh, direction: Direction) -> Result<CellState> {
    let n = mesh.len();
    let start = mesh.electrode_start();
    let shells = mesh
        .radial
        .iter()
        .flatten()
        .next()
        .map(|r| r.shells())
        .ok_or_else(|| Error::State("mesh has no electrode region".into()))?;
    let mut c_s = Vec::with_capacity((n - start) * shells);
    let mut c_surf = Vec::with_capacity(n - start);
    for i in start..n {
        let layer = &design.layers[mesh.regions[mesh.region_of[i]].layer];
        let chem = layer
            .chemistry
            .as_ref()
            .ok_or_else(|| Error::State("separator inside electrode".into()))?;
        let c0 = match direction {
            Direction::Charge => chem.initial.charge,
            Direction::Discharge => chem.initial.discharge,
        };
        c_s.extend(std::iter::repeat_n(c0, shells));
        c_surf.push(c0);
    }
    let first = design
        .electrode(0)
        .and_then(|l| l.chemistry.as_ref())
        .expect("validated design");
    let rest = first.ocp_at(c_surf[0])?;
    Ok(CellState {
        time: 0.0,
        current: 0.0,
        c_e: vec![design.electrolyte.c_e0; n],
        phi_e: vec![0.0; n],
        phi_s: vec![rest; n - start],
        j: vec![0.0; n - start],
        c_s,
        c_surf,
        shells,
        voltage: rest,
    })
}

/// Lithium held in the electrolyte and in the cathode particles (mol/m^2 of cell area).
pub fn lithium_inventory(design: &CellDesign, mesh: &Mesh, state: &CellState) -> (f64, f64) {
    let start = mesh.electrode_start();
    let mut electrolyte = 0.0;
    let mut solid = 0.0;
    for i in 0..mesh.len() {
        let region = &mesh.regions[mesh.region_of[i]];
        let layer = &design.layers[region.layer];
        electrolyte += layer.eps_e * state.c_e[i] * mesh.dx[i];
        if let Some(radial) = &mesh.radial[mesh.region_of[i]] {
            solid +=
                layer.storage_fraction() * radial.average(state.particle(i - start)) * mesh.dx[i];
        }
    }
    (electrolyte, solid)
}
