use serde::{Deserialize, Serialize};

use crate::cell::CellDesign;
use crate::error::{Error, Result};
use crate::sim::SolverConfig;

/// One through-thickness region (separator or electrode sub-layer).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Region {
    /// Index into `CellDesign::layers`.
    pub layer: usize,
    /// Node range `[start, end)`.
    pub start: usize,
    pub end: usize,
    pub x_lo: f64,
    pub x_hi: f64,
}

impl Region {
    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.end == self.start
    }

    pub fn nodes(&self) -> std::ops::Range<usize> {
        self.start..self.end
    }
}

/// Radial shells of the representative particle of one layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RadialMesh {
    pub radius: f64,
    pub dr: f64,
    /// Shell volumes divided by 4π.
    pub volumes: Vec<f64>,
    /// Outer face areas divided by 4π (`r_{k+1}^2`).
    pub outer_areas: Vec<f64>,
}

impl RadialMesh {
    pub fn uniform(radius: f64, shells: usize) -> Self {
        let dr = radius / shells as f64;
        let volumes = (0..shells)
            .map(|k| {
                let (r0, r1) = (k as f64 * dr, (k + 1) as f64 * dr);
                (r1.powi(3) - r0.powi(3)) / 3.0
            })
            .collect();
        let outer_areas = (0..shells).map(|k| ((k + 1) as f64 * dr).powi(2)).collect();
        Self {
            radius,
            dr,
            volumes,
            outer_areas,
        }
    }

    pub fn shells(&self) -> usize {
        self.volumes.len()
    }

    /// Particle volume divided by 4π.
    pub fn total_volume(&self) -> f64 {
        self.radius.powi(3) / 3.0
    }

    pub fn average(&self, c: &[f64]) -> f64 {
        let s: f64 = self.volumes.iter().zip(c).map(|(v, c)| v * c).sum();
        s / self.volumes.iter().sum::<f64>()
    }
}

/// Cell-centred finite-volume mesh through the cell thickness (x = 0 at the counter electrode).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mesh {
    /// Node (cell-centre) positions (m).
    pub x: Vec<f64>,
    /// Control-volume widths (m).
    pub dx: Vec<f64>,
    /// Region index per node.
    pub region_of: Vec<usize>,
    pub regions: Vec<Region>,
    /// One radial mesh per region; `None` for the separator.
    pub radial: Vec<Option<RadialMesh>>,
}

impl Mesh {
    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    /// Positions of the region interfaces, counter electrode side excluded.
    pub fn boundaries(&self) -> Vec<f64> {
        self.regions.iter().map(|r| r.x_hi).collect()
    }

    pub fn total_length(&self) -> f64 {
        self.regions.last().map_or(0.0, |r| r.x_hi)
    }

    pub fn is_electrode_node(&self, i: usize) -> bool {
        self.radial[self.region_of[i]].is_some()
    }

    /// Index into `CellDesign::layers` of the layer containing node `i`.
    pub fn layer_of(&self, i: usize) -> usize {
        self.regions[self.region_of[i]].layer
    }

    /// First node index inside the electrode.
    pub fn electrode_start(&self) -> usize {
        self.regions[1].start
    }
}

pub fn build_mesh(design: &CellDesign, config: &SolverConfig) -> Result<Mesh> {
    design.validate()?;
    config.validate()?;
    let n = config.nodes_per_region;
    let mut x = Vec::with_capacity(n * design.layers.len());
    let mut dx = Vec::with_capacity(x.capacity());
    let mut region_of = Vec::with_capacity(x.capacity());
    let mut regions = Vec::with_capacity(design.layers.len());
    let mut radial = Vec::with_capacity(design.layers.len());
    let mut x_lo = 0.0;
    for (k, layer) in design.layers.iter().enumerate() {
        let h = layer.thickness / n as f64;
        if !(h >= config.min_cell_width) {
            return Err(Error::config(format!(
                "layer `{}` ({:.3e} m) is thinner than {} cells of {:.1e} m",
                layer.name, layer.thickness, n, config.min_cell_width
            )));
        }
        let start = x.len();
        for j in 0..n {
            x.push(x_lo + (j as f64 + 0.5) * h);
            dx.push(h);
            region_of.push(k);
        }
        let x_hi = x_lo + layer.thickness;
        regions.push(Region {
            layer: k,
            start,
            end: x.len(),
            x_lo,
            x_hi,
        });
        radial.push(
            layer
                .chemistry
                .as_ref()
                .map(|c| RadialMesh::uniform(c.particle_radius, config.radial_shells)),
        );
        x_lo = x_hi;
    }
    Ok(Mesh {
        x,
        dx,
        region_of,
        regions,
        radial,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::presets;

    #[test]
    fn default_bilayer_mesh() {
        let mesh = build_mesh(&presets::default_bilayer(), &SolverConfig::default()).unwrap();
        assert_eq!(mesh.len(), 90);
        let b = mesh.boundaries();
        for (got, want) in b.iter().zip([16e-6, 60e-6, 104e-6]) {
            assert!((got - want).abs() < 1e-15, "{got} vs {want}");
        }
        assert!(mesh.dx.iter().all(|&h| h > 0.0));
        // faces at region boundaries
        let r1 = &mesh.regions[1];
        assert!((mesh.x[r1.start] - 0.5 * mesh.dx[r1.start] - 16e-6).abs() < 1e-15);
    }

    #[test]
    fn single_layer_has_two_regions() {
        let mesh = build_mesh(&presets::nmc_only_72um(), &SolverConfig::default()).unwrap();
        assert_eq!(mesh.regions.len(), 2);
    }

    #[test]
    fn zero_thickness_rejected() {
        let mut d = presets::default_bilayer();
        d.layers[2].thickness = 0.0;
        assert!(build_mesh(&d, &SolverConfig::default()).is_err());
        d.layers[2].thickness = 1e-12;
        assert!(matches!(
            build_mesh(&d, &SolverConfig::default()),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn radial_volumes_sum_to_sphere() {
        for shells in [1, 7, 20, 64] {
            let m = RadialMesh::uniform(4.94e-6, shells);
            let sum: f64 = m.volumes.iter().sum();
            assert!((sum - m.total_volume()).abs() / m.total_volume() < 1e-12);
        }
    }

    #[test]
    fn deterministic() {
        let d = presets::optimal_bilayer();
        let c = SolverConfig::default();
        assert_eq!(build_mesh(&d, &c).unwrap(), build_mesh(&d, &c).unwrap());
    }
}
