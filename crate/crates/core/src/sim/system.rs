//! Residual assembly and the implicit Newton step.
//!
//! Unknowns per node: separator nodes carry `[c_e, φ_e]`, electrode nodes
//! `[c_e, φ_e, φ_s, J]`. Particle shells are condensed out: the surface
//! concentration is affine in `J` over a step, so the Jacobian stays banded.

use crate::cell::CellDesign;
use crate::electrochem::{guarded_two_sinh, ChemistrySpec, ElectrolyteModel};
use crate::error::{Error, Result};
use crate::sim::banded::BandedMatrix;
use crate::sim::mesh::Mesh;
use crate::sim::particle::ParticleStep;
use crate::sim::state::CellState;
use crate::sim::SolverConfig;

/// Outcome of one accepted step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepStats {
    pub newton_iterations: usize,
    pub residual: f64,
}

/// Reusable workspace for stepping one design on one mesh.
pub struct Stepper<'a> {
    design: &'a CellDesign,
    mesh: &'a Mesh,
    config: &'a SolverConfig,
    model: &'a dyn ElectrolyteModel,
    start: usize,
    offsets: Vec<usize>,
    n_unknowns: usize,
    kl: usize,
    ku: usize,
    /// Porosity and Bruggeman factor per node.
    eps: Vec<f64>,
    brug: Vec<f64>,
    /// Per electrode node.
    area: Vec<f64>,
    sigma: Vec<f64>,
    chem: Vec<&'a ChemistrySpec>,
    region_of_e: Vec<usize>,
    electrode_length: f64,
    particle_steps: Vec<Option<ParticleStep>>,
    cached_dt: f64,
    y: Vec<f64>,
    y_last: Vec<f64>,
    slope: Vec<f64>,
    scratch: Vec<f64>,
    // residual workspace
    d_node: Vec<f64>,
    k_node: Vec<f64>,
    tdf_node: Vec<f64>,
    ln_c: Vec<f64>,
    n_face: Vec<f64>,
    ie_face: Vec<f64>,
    is_face: Vec<f64>,
    jac: BandedMatrix,
}

struct StepInputs<'s> {
    old: &'s CellState,
    dt: f64,
    current: f64,
    phi_ce: f64,
    i_scale: f64,
}

impl<'a> Stepper<'a> {
    pub fn new(design: &'a CellDesign, mesh: &'a Mesh, config: &'a SolverConfig) -> Result<Self> {
        design.validate()?;
        config.validate()?;
        let n = mesh.len();
        let start = mesh.electrode_start();
        let mut offsets = Vec::with_capacity(n + 1);
        let mut off = 0;
        for i in 0..n {
            offsets.push(off);
            off += if mesh.is_electrode_node(i) { 4 } else { 2 };
        }
        offsets.push(off);
        let width = |i: usize| offsets[i + 1] - offsets[i];
        let (mut kl, mut ku) = (0, 0);
        for i in 0..n {
            let row_hi = offsets[i] + width(i) - 1;
            let col_lo = offsets[i.saturating_sub(1)];
            let col_hi = offsets[(i + 1).min(n - 1)] + width((i + 1).min(n - 1)) - 1;
            kl = kl.max(row_hi - col_lo);
            ku = ku.max(col_hi - offsets[i]);
        }
        let mut eps = Vec::with_capacity(n);
        let mut brug = Vec::with_capacity(n);
        let mut area = Vec::new();
        let mut sigma = Vec::new();
        let mut chem = Vec::new();
        let mut region_of_e = Vec::new();
        for i in 0..n {
            let region = mesh.region_of[i];
            let layer = &design.layers[mesh.regions[region].layer];
            eps.push(layer.eps_e);
            brug.push(layer.eps_e.powf(layer.bruggeman));
            if let Some(c) = &layer.chemistry {
                area.push(layer.surface_area());
                sigma.push(layer.sigma_eff());
                chem.push(c);
                region_of_e.push(region);
            }
        }
        let shells = mesh
            .radial
            .iter()
            .flatten()
            .next()
            .map_or(0, |r| r.shells());
        let ne = n - start;
        Ok(Self {
            design,
            mesh,
            config,
            model: design.electrolyte.model(),
            start,
            offsets,
            n_unknowns: off,
            kl,
            ku,
            eps,
            brug,
            area,
            sigma,
            chem,
            region_of_e,
            electrode_length: design.electrode_thickness(),
            particle_steps: vec![None; mesh.regions.len()],
            cached_dt: f64::NAN,
            y: vec![0.0; ne * shells],
            y_last: vec![0.0; ne],
            slope: vec![0.0; ne],
            scratch: Vec::new(),
            d_node: vec![0.0; n],
            k_node: vec![0.0; n],
            tdf_node: vec![0.0; n],
            ln_c: vec![0.0; n],
            n_face: vec![0.0; n + 1],
            ie_face: vec![0.0; n + 1],
            is_face: vec![0.0; ne + 1],
            jac: BandedMatrix::zeros(off, kl, ku),
        })
    }

    pub fn unknowns(&self) -> usize {
        self.n_unknowns
    }

    pub fn bandwidth(&self) -> (usize, usize) {
        (self.kl, self.ku)
    }

    fn prepare_particles(&mut self, old: &CellState, dt: f64) {
        if self.cached_dt != dt {
            for (r, slot) in self.particle_steps.iter_mut().enumerate() {
                *slot = self.mesh.radial[r].as_ref().map(|radial| {
                    let layer = &self.design.layers[self.mesh.regions[r].layer];
                    let chem = layer.chemistry.as_ref().expect("electrode region");
                    ParticleStep::new(
                        radial,
                        chem.d_s,
                        dt,
                        layer.surface_flux_ratio() / self.design.kinetics.faraday,
                    )
                });
            }
            self.cached_dt = dt;
        }
        let m = old.shells;
        for e in 0..self.area.len() {
            let ps = self.particle_steps[self.region_of_e[e]]
                .as_ref()
                .expect("electrode region");
            let y = &mut self.y[e * m..(e + 1) * m];
            ps.free_response(old.particle(e), y, &mut self.scratch);
            self.y_last[e] = y[m - 1];
            self.slope[e] = ps.surface_slope();
        }
    }

    fn pack(&self, state: &CellState, u: &mut [f64]) {
        for i in 0..self.mesh.len() {
            let o = self.offsets[i];
            u[o] = state.c_e[i];
            u[o + 1] = state.phi_e[i];
            if i >= self.start {
                let e = i - self.start;
                u[o + 2] = state.phi_s[e];
                u[o + 3] = state.j[e];
            }
        }
    }

    /// Typical magnitude of each unknown, used for finite-difference increments.
    fn typical(&self, inputs: &StepInputs, u: &[f64], out: &mut [f64]) {
        let c0 = self.design.electrolyte.c_e0;
        for i in 0..self.mesh.len() {
            let o = self.offsets[i];
            out[o] = u[o].abs().max(c0);
            out[o + 1] = u[o + 1].abs().max(1.0);
            if i >= self.start {
                let e = i - self.start;
                out[o + 2] = u[o + 2].abs().max(1.0);
                out[o + 3] = u[o + 3].abs().max(self.j_scale(e, inputs.i_scale));
            }
        }
    }

    fn j_scale(&self, e: usize, i_scale: f64) -> f64 {
        i_scale / (self.area[e] * self.electrode_length)
    }

    /// Scaled residual; `Err` when the iterate leaves the admissible domain.
    fn residual(&mut self, inputs: &StepInputs, u: &[f64], r: &mut [f64]) -> Result<()> {
        let mesh = self.mesh;
        let n = mesh.len();
        let spec = &self.design.electrolyte;
        let ctx = &self.design.kinetics;
        let temp = ctx.temperature;
        let t_plus = spec.t_plus;
        let f = ctx.faraday;
        let vt = ctx.thermal_voltage();
        let kd = 2.0 * vt * (1.0 - t_plus);
        let c0 = spec.c_e0;
        let current = inputs.current;
        let dt = inputs.dt;
        let i_scale = inputs.i_scale;

        for i in 0..n {
            let c = u[self.offsets[i]];
            if !(c > 0.0) || !c.is_finite() {
                return Err(Error::State(format!(
                    "electrolyte concentration {c} at node {i}"
                )));
            }
            self.d_node[i] = self.model.diffusivity(c, temp) * self.brug[i];
            self.k_node[i] = self.model.conductivity(c, temp) * self.brug[i];
            self.tdf_node[i] = self.model.thermodynamic_factor(c, temp, t_plus);
            self.ln_c[i] = c.ln();
        }
        // Faces: 0 at the counter electrode, n at the current collector.
        for i in 0..n - 1 {
            let (hl, hr) = (0.5 * mesh.dx[i], 0.5 * mesh.dx[i + 1]);
            let g_d = 1.0 / (hl / self.d_node[i] + hr / self.d_node[i + 1]);
            let g_k = 1.0 / (hl / self.k_node[i] + hr / self.k_node[i + 1]);
            let (ol, or) = (self.offsets[i], self.offsets[i + 1]);
            self.n_face[i + 1] = -g_d * (u[or] - u[ol]);
            let tdf = 0.5 * (self.tdf_node[i] + self.tdf_node[i + 1]);
            self.ie_face[i + 1] =
                -g_k * (u[or + 1] - u[ol + 1]) + g_k * kd * tdf * (self.ln_c[i + 1] - self.ln_c[i]);
        }
        self.n_face[0] = -(1.0 - t_plus) * current / f;
        self.ie_face[0] = -self.k_node[0] / (0.5 * mesh.dx[0]) * (u[1] - inputs.phi_ce);
        self.n_face[n] = 0.0;
        self.ie_face[n] = 0.0;

        let ne = n - self.start;
        self.is_face[0] = 0.0;
        for e in 1..ne {
            let (i, il) = (self.start + e, self.start + e - 1);
            let g =
                1.0 / (0.5 * mesh.dx[il] / self.sigma[e - 1] + 0.5 * mesh.dx[i] / self.sigma[e]);
            self.is_face[e] = -g * (u[self.offsets[i] + 2] - u[self.offsets[il] + 2]);
        }
        self.is_face[ne] = -current;

        for i in 0..n {
            let o = self.offsets[i];
            let h = mesh.dx[i];
            let (aj, j) = if i >= self.start {
                let e = i - self.start;
                (self.area[e] * u[o + 3], u[o + 3])
            } else {
                (0.0, 0.0)
            };
            r[o] = (self.eps[i] * (u[o] - inputs.old.c_e[i])
                + dt / h * (self.n_face[i + 1] - self.n_face[i])
                - dt * (1.0 - t_plus) * aj / f)
                / c0;
            r[o + 1] = (self.ie_face[i + 1] - self.ie_face[i] - aj * h) / i_scale;
            if i >= self.start {
                let e = i - self.start;
                r[o + 2] = (self.is_face[e + 1] - self.is_face[e] + aj * h) / i_scale;
                let chem = self.chem[e];
                let c_surf = self.y_last[e] + self.slope[e] * j;
                if !(c_surf > 0.0 && c_surf < chem.c_s_max) {
                    return Err(Error::State(format!(
                        "surface concentration {c_surf} at electrode node {e}"
                    )));
                }
                let ocp = chem.ocp_at(c_surf)?;
                let j0 = f * chem.k_rate * (u[o] * c_surf * (chem.c_s_max - c_surf)).sqrt();
                let eta = u[o + 2] - u[o + 1] - ocp;
                let bv = guarded_two_sinh(j0, eta / (2.0 * vt));
                r[o + 3] = (j - bv) / self.j_scale(e, i_scale);
            }
        }
        if r.iter().any(|v| !v.is_finite()) {
            return Err(Error::State("non-finite residual".into()));
        }
        Ok(())
    }

    fn jacobian(
        &mut self,
        inputs: &StepInputs,
        u: &mut [f64],
        r0: &[f64],
        typical: &[f64],
        rp: &mut [f64],
    ) -> Result<()> {
        let nu = self.n_unknowns;
        let colours = self.kl + self.ku + 1;
        self.jac.clear();
        let rel = 1.5e-8;
        for g in 0..colours.min(nu) {
            let cols: Vec<usize> = (g..nu).step_by(colours).collect();
            let mut sign = 1.0;
            let mut ok = false;
            for _ in 0..2 {
                for &j in &cols {
                    u[j] += sign * rel * typical[j];
                }
                let res = self.residual(inputs, u, rp);
                for &j in &cols {
                    u[j] -= sign * rel * typical[j];
                }
                if res.is_ok() {
                    ok = true;
                    break;
                }
                sign = -1.0;
            }
            if !ok {
                return Err(Error::State(
                    "finite-difference probe left the admissible domain".into(),
                ));
            }
            let mut jac = std::mem::replace(&mut self.jac, BandedMatrix::zeros(0, 0, 0));
            for &j in &cols {
                let h = sign * rel * typical[j];
                let lo = j.saturating_sub(self.ku);
                let hi = (j + self.kl).min(nu - 1);
                for row in lo..=hi {
                    let d = (rp[row] - r0[row]) / h;
                    if d != 0.0 {
                        jac.set(row, j, d);
                    }
                }
            }
            self.jac = jac;
        }
        Ok(())
    }

    /// Advances `old` by `dt` under applied current density `current` (A/m^2, positive on charge).
    pub fn step(
        &mut self,
        old: &CellState,
        current: f64,
        dt: f64,
    ) -> Result<(CellState, StepStats)> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::State(format!("time step {dt}")));
        }
        if !current.is_finite() {
            return Err(Error::State(format!("applied current {current}")));
        }
        old.check_shape(self.mesh)?;
        self.prepare_particles(old, dt);
        let ctx = &self.design.kinetics;
        let phi_ce = 2.0
            * ctx.thermal_voltage()
            * (current / (2.0 * self.design.ce_exchange_current)).asinh();
        let i_scale = current.abs().max(1.0);
        let inputs = StepInputs {
            old,
            dt,
            current,
            phi_ce,
            i_scale,
        };
        let nu = self.n_unknowns;
        let mut u = vec![0.0; nu];
        let mut r = vec![0.0; nu];
        let mut rp = vec![0.0; nu];
        let mut du = vec![0.0; nu];
        let mut typical = vec![0.0; nu];
        let mut trial = vec![0.0; nu];
        self.pack(old, &mut u);
        // Shift the potential guess by the change in counter-electrode overpotential and the
        // ohmic jump implied by the new current.
        let shift = phi_ce - old.phi_e[0];
        for i in 0..self.mesh.len() {
            let o = self.offsets[i];
            u[o + 1] += shift;
            if i >= self.start {
                u[o + 2] += shift;
            }
        }
        if current != old.current {
            self.seed_reaction(&inputs, &mut u);
        }
        if let Err(e) = self.residual(&inputs, &u, &mut r) {
            // Fall back to the unshifted state.
            self.pack(old, &mut u);
            self.residual(&inputs, &u, &mut r).map_err(|_| e)?;
        }
        let norm = |v: &[f64]| v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        let mut res = norm(&r);
        let mut iterations = 0;
        while res > self.config.newton_tol {
            if iterations >= self.config.max_newton_iter {
                return Err(Error::NonConvergence { dt, residual: res });
            }
            iterations += 1;
            self.typical(&inputs, &u, &mut typical);
            self.jacobian(&inputs, &mut u, &r, &typical, &mut rp)
                .map_err(|_| Error::NonConvergence { dt, residual: res })?;
            for (d, v) in du.iter_mut().zip(&r) {
                *d = -v;
            }
            if !self.jac.solve_in_place(&mut du) {
                return Err(Error::NonConvergence { dt, residual: res });
            }
            let mut alpha = 1.0;
            let mut accepted = false;
            for attempt in 0..10 {
                for k in 0..nu {
                    trial[k] = u[k] + alpha * du[k];
                }
                if self.residual(&inputs, &trial, &mut rp).is_ok() {
                    let trial_res = norm(&rp);
                    if trial_res < res
                        || attempt == 0 && trial_res < 10.0 * res.max(1e-6)
                        || attempt == 9
                    {
                        accepted = true;
                        break;
                    }
                }
                alpha *= 0.5;
            }
            if !accepted {
                return Err(Error::NonConvergence { dt, residual: res });
            }
            let step_size = du
                .iter()
                .zip(&typical)
                .fold(0.0f64, |m, (d, t)| m.max((alpha * d / t).abs()));
            u.copy_from_slice(&trial);
            r.copy_from_slice(&rp);
            let previous = res;
            res = norm(&r);
            // Round-off floor: the update no longer moves any unknown measurably, or the
            // residual has stalled just above tolerance at the finite-difference noise level.
            let stalled = res > 0.5 * previous && res < 10.0 * self.config.newton_tol;
            if (step_size < 1e-12 && res < 1e3 * self.config.newton_tol) || stalled {
                break;
            }
        }
        let state = self.unpack(&inputs, &u)?;
        Ok((
            state,
            StepStats {
                newton_iterations: iterations,
                residual: res,
            },
        ))
    }

    /// Reaction-current guess after a change of applied current: a uniform solid potential
    /// chosen so that explicit Butler-Volmer currents carry the applied current.
    fn seed_reaction(&self, inputs: &StepInputs, u: &mut [f64]) {
        let n = self.mesh.len();
        let vt = self.design.kinetics.thermal_voltage();
        let f = self.design.kinetics.faraday;
        let mut nodes = Vec::with_capacity(n - self.start);
        for i in self.start..n {
            let e = i - self.start;
            let o = self.offsets[i];
            let chem = self.chem[e];
            let c_surf = self.y_last[e];
            let (Ok(ocp), true) = (chem.ocp_at(c_surf), c_surf > 0.0 && c_surf < chem.c_s_max)
            else {
                return;
            };
            let j0 = f * chem.k_rate * (u[o] * c_surf * (chem.c_s_max - c_surf)).sqrt();
            // Keep the implied surface concentration inside (0, c_s_max).
            let slope = self.slope[e];
            let j_hi = 0.9 * c_surf / -slope;
            let j_lo = -0.9 * (chem.c_s_max - c_surf) / -slope;
            nodes.push((o, ocp, j0, j_lo, j_hi, self.area[e] * self.mesh.dx[i]));
        }
        let current_at =
            |phi_s: f64, &(o, ocp, j0, j_lo, j_hi, _): &(usize, f64, f64, f64, f64, f64)| {
                guarded_two_sinh(j0, (phi_s - u[o + 1] - ocp) / (2.0 * vt)).clamp(j_lo, j_hi)
            };
        let (mut lo, mut hi) = (-2.0, 8.0);
        for _ in 0..100 {
            let mid = 0.5 * (lo + hi);
            let total: f64 = nodes
                .iter()
                .map(|node| node.5 * current_at(mid, node))
                .sum();
            if total < inputs.current {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let phi_s = 0.5 * (lo + hi);
        let js: Vec<f64> = nodes.iter().map(|node| current_at(phi_s, node)).collect();
        for (node, j) in nodes.iter().zip(js) {
            u[node.0 + 2] = phi_s;
            u[node.0 + 3] = j;
        }
    }

    fn unpack(&self, inputs: &StepInputs, u: &[f64]) -> Result<CellState> {
        let n = self.mesh.len();
        let ne = n - self.start;
        let m = inputs.old.shells;
        let mut c_e = Vec::with_capacity(n);
        let mut phi_e = Vec::with_capacity(n);
        let mut phi_s = Vec::with_capacity(ne);
        let mut j = Vec::with_capacity(ne);
        for i in 0..n {
            let o = self.offsets[i];
            c_e.push(u[o]);
            phi_e.push(u[o + 1]);
            if i >= self.start {
                phi_s.push(u[o + 2]);
                j.push(u[o + 3]);
            }
        }
        let mut c_s = vec![0.0; ne * m];
        let mut c_surf = Vec::with_capacity(ne);
        for e in 0..ne {
            let ps = self.particle_steps[self.region_of_e[e]]
                .as_ref()
                .expect("electrode region");
            ps.apply(
                &self.y[e * m..(e + 1) * m],
                j[e],
                &mut c_s[e * m..(e + 1) * m],
            );
            c_surf.push(ps.surface(self.y_last[e], j[e]));
        }
        let last = n - 1;
        let voltage = phi_s[ne - 1]
            + inputs.current * 0.5 * self.mesh.dx[last] / self.sigma[ne - 1]
            + inputs.current * self.design.contact_resistance;
        Ok(CellState {
            time: inputs.old.time + inputs.dt,
            current: inputs.current,
            c_e,
            phi_e,
            phi_s,
            j,
            c_s,
            c_surf,
            shells: m,
            voltage,
        })
    }
}

/// One implicit step of length `dt` at applied current density `current` (A/m^2).
pub fn step(
    state: &CellState,
    current: f64,
    dt: f64,
    design: &CellDesign,
    mesh: &Mesh,
    config: &SolverConfig,
) -> Result<CellState> {
    Stepper::new(design, mesh, config)?
        .step(state, current, dt)
        .map(|(s, _)| s)
}
