//! Backward-Euler spherical diffusion in the representative particle, reduced to an
//! affine map from the surface reaction current to the shell concentrations.

use crate::sim::mesh::RadialMesh;

/// Tridiagonal solve (Thomas algorithm); `rhs` is overwritten with the solution.
pub(crate) fn thomas(
    lower: &[f64],
    diag: &[f64],
    upper: &[f64],
    rhs: &mut [f64],
    scratch: &mut Vec<f64>,
) {
    let n = diag.len();
    scratch.clear();
    scratch.resize(n, 0.0);
    let mut beta = diag[0];
    rhs[0] /= beta;
    for i in 1..n {
        scratch[i] = upper[i - 1] / beta;
        beta = diag[i] - lower[i] * scratch[i];
        rhs[i] = (rhs[i] - lower[i] * rhs[i - 1]) / beta;
    }
    for i in (0..n - 1).rev() {
        rhs[i] -= scratch[i + 1] * rhs[i + 1];
    }
}

/// One implicit particle step of length `dt` for a given layer.
///
/// Shell concentrations after the step are `c = y − w·J`, where `y` is the response to
/// the previous profile alone and `J` is the reaction current density (A/m^2,
/// positive for delithiation).
#[derive(Debug, Clone)]
pub struct ParticleStep {
    lower: Vec<f64>,
    diag: Vec<f64>,
    upper: Vec<f64>,
    volumes_over_dt: Vec<f64>,
    /// Shell response to unit reaction current.
    w: Vec<f64>,
    /// `d c_surf / d J` (negative).
    surface_slope: f64,
}

impl ParticleStep {
    /// `flux_per_current` converts J (A/m^2) to the molar flux leaving the particle
    /// surface (mol/m^2/s).
    pub fn new(mesh: &RadialMesh, d_s: f64, dt: f64, flux_per_current: f64) -> Self {
        let m = mesh.shells();
        let mut lower = vec![0.0; m];
        let mut diag = vec![0.0; m];
        let mut upper = vec![0.0; m];
        let volumes_over_dt: Vec<f64> = mesh.volumes.iter().map(|v| v / dt).collect();
        let g = d_s / mesh.dr;
        for k in 0..m {
            diag[k] = volumes_over_dt[k];
            if k + 1 < m {
                let a = mesh.outer_areas[k] * g;
                diag[k] += a;
                upper[k] = -a;
            }
            if k > 0 {
                let a = mesh.outer_areas[k - 1] * g;
                diag[k] += a;
                lower[k] = -a;
            }
        }
        let mut w = vec![0.0; m];
        w[m - 1] = mesh.outer_areas[m - 1] * flux_per_current;
        let mut scratch = Vec::new();
        thomas(&lower, &diag, &upper, &mut w, &mut scratch);
        let surface_slope = -(w[m - 1] + flux_per_current * 0.5 * mesh.dr / d_s);
        Self {
            lower,
            diag,
            upper,
            volumes_over_dt,
            w,
            surface_slope,
        }
    }

    /// Writes the zero-current response to `c_old` into `y`.
    pub fn free_response(&self, c_old: &[f64], y: &mut [f64], scratch: &mut Vec<f64>) {
        for ((y, c), v) in y.iter_mut().zip(c_old).zip(&self.volumes_over_dt) {
            *y = v * c;
        }
        thomas(&self.lower, &self.diag, &self.upper, y, scratch);
    }

    /// Surface concentration for a given reaction current, from the last free-response shell.
    #[inline]
    pub fn surface(&self, y_last: f64, current: f64) -> f64 {
        y_last + self.surface_slope * current
    }

    pub fn surface_slope(&self) -> f64 {
        self.surface_slope
    }

    /// Shell concentrations after the step.
    pub fn apply(&self, y: &[f64], current: f64, out: &mut [f64]) {
        for ((o, y), w) in out.iter_mut().zip(y).zip(&self.w) {
            *o = y - w * current;
        }
    }
}
