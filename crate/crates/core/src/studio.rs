//! Benchmark equalization, parameter sweeps and the staged design search.
//!
//! Designs are only compared at equal 0.05C specific capacity, so every sweep either
//! equalizes its cases to a shared target or rescales `I_1C` per case.

use std::collections::HashMap;
use std::fmt;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cell::CellDesign;
use crate::error::{Error, Result};
use crate::fingerprint::fingerprint;
use crate::presets;
use crate::protocol::{self, DesignMetrics};
use crate::sim::{SolverConfig, Termination};

/// Relative agreement required between a benchmark case and its target capacity.
pub const EQUALIZATION_INVARIANT: f64 = 0.01;
/// Porosity window for design search.
pub const POROSITY_BOUNDS: (f64, f64) = (0.25, 0.35);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Field {
    /// m
    Thickness,
    EpsE,
    EpsCbd,
    Bruggeman,
}

/// One scalar of one electrode sub-layer (0 is adjacent to the separator).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Param {
    pub layer: usize,
    pub field: Field,
}

impl Param {
    pub fn new(layer: usize, field: Field) -> Self {
        Self { layer, field }
    }

    pub fn get(&self, design: &CellDesign) -> Result<f64> {
        let l = design.electrode(self.layer).ok_or_else(|| {
            Error::config(format!(
                "{self}: design has no electrode layer {}",
                self.layer
            ))
        })?;
        Ok(match self.field {
            Field::Thickness => l.thickness,
            Field::EpsE => l.eps_e,
            Field::EpsCbd => l.eps_cbd,
            Field::Bruggeman => l.bruggeman,
        })
    }

    pub fn set(&self, design: &mut CellDesign, value: f64) -> Result<()> {
        let name = self.to_string();
        let l = design.electrode_mut(self.layer).ok_or_else(|| {
            Error::config(format!(
                "{name}: design has no electrode layer {}",
                self.layer
            ))
        })?;
        let slot = match self.field {
            Field::Thickness => &mut l.thickness,
            Field::EpsE => &mut l.eps_e,
            Field::EpsCbd => &mut l.eps_cbd,
            Field::Bruggeman => &mut l.bruggeman,
        };
        *slot = value;
        Ok(())
    }
}

impl fmt::Display for Param {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let field = match self.field {
            Field::Thickness => "thickness",
            Field::EpsE => "eps_e",
            Field::EpsCbd => "eps_cbd",
            Field::Bruggeman => "bruggeman",
        };
        write!(f, "{field}[{}]", self.layer)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Override {
    pub param: Param,
    pub value: f64,
}

impl Override {
    pub fn new(param: Param, value: f64) -> Self {
        Self { param, value }
    }
}

impl fmt::Display for Override {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}={}", self.param, self.value)
    }
}

/// Applies overrides in order and validates the result.
pub fn apply_overrides(design: &CellDesign, overrides: &[Override]) -> Result<CellDesign> {
    let mut d = design.clone();
    for o in overrides {
        o.param.set(&mut d, o.value)?;
    }
    d.validate()?;
    Ok(d)
}

/// Which thicknesses the equalizer may change.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Adjust {
    /// Scale every electrode sub-layer by the same factor, keeping the ratio.
    #[default]
    Proportional,
    /// Scale one sub-layer only.
    Layer(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EqualizeOptions {
    /// Relative capacity tolerance.
    pub tolerance: f64,
    /// Per-layer thickness bounds (m).
    pub min_thickness: f64,
    pub max_thickness: f64,
    pub max_evaluations: usize,
}

impl Default for EqualizeOptions {
    fn default() -> Self {
        Self {
            tolerance: 0.005,
            min_thickness: 2e-6,
            max_thickness: 1e-3,
            max_evaluations: 25,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Equalized {
    pub design: CellDesign,
    pub specific_capacity: f64,
    /// Thickness scale applied to the adjusted layers.
    pub scale: f64,
    pub evaluations: usize,
}

#[derive(Default)]
struct CapacityCache {
    map: Mutex<HashMap<String, f64>>,
    hits: AtomicUsize,
    misses: AtomicUsize,
}

/// Evaluation context shared by all studies: solver settings plus a specific-capacity
/// cache keyed by design content.
pub struct Studio {
    config: SolverConfig,
    equalize: EqualizeOptions,
    cache: CapacityCache,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepCase {
    pub id: String,
    pub overrides: Vec<Override>,
    pub design: CellDesign,
    /// A
    pub i_1c: f64,
    pub specific_capacity: Option<f64>,
    pub metrics: Option<DesignMetrics>,
    pub error: Option<String>,
}

impl SweepCase {
    pub fn retention(&self) -> Option<f64> {
        self.metrics.as_ref().map(|m| m.retention)
    }

    pub fn achieved(&self) -> Option<f64> {
        self.metrics.as_ref().map(|m| m.achieved_capacity)
    }

    pub fn layer_thicknesses_um(&self) -> Vec<f64> {
        self.design
            .electrode_layers()
            .map(|l| l.thickness * 1e6)
            .collect()
    }
}

/// Case description for [`Studio::sensitivity_sweep`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CaseSpec {
    pub id: String,
    #[serde(default)]
    pub overrides: Vec<Override>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    /// Total electrode thickness (µm).
    pub total_um: f64,
    pub layer_um: Vec<f64>,
    /// Fraction of the total in the sub-layer next to the separator.
    pub fraction: f64,
    /// mA
    pub i_1c_ma: f64,
    #[serde(rename = "specific_capacity_mah_cm2")]
    pub specific_capacity: Option<f64>,
    #[serde(rename = "achieved_mah_cm2")]
    pub achieved: Option<f64>,
    pub retention: Option<f64>,
    pub mass_mg: f64,
    #[serde(rename = "time_to_cutoff_min")]
    pub time_to_cutoff: Option<f64>,
    pub termination: Option<Termination>,
    pub feasible: bool,
    pub error: Option<String>,
    #[serde(skip)]
    design: Option<CellDesign>,
}

impl SweepRow {
    pub fn design(&self) -> Option<&CellDesign> {
        self.design.as_ref()
    }

    fn from_design(design: &CellDesign, fraction: f64) -> Self {
        let layer_um: Vec<f64> = design
            .electrode_layers()
            .map(|l| l.thickness * 1e6)
            .collect();
        Self {
            total_um: layer_um.iter().sum(),
            layer_um,
            fraction,
            i_1c_ma: design.i_1c * 1e3,
            specific_capacity: None,
            achieved: None,
            retention: None,
            mass_mg: design.cathode_mass() * 1e3,
            time_to_cutoff: None,
            termination: None,
            feasible: true,
            error: None,
            design: Some(design.clone()),
        }
    }

    fn with_metrics(mut self, design: &CellDesign, m: &DesignMetrics) -> Self {
        self.i_1c_ma = design.i_1c * 1e3;
        self.specific_capacity = Some(m.specific_capacity);
        self.achieved = Some(m.achieved_capacity);
        self.retention = Some(m.retention);
        self.time_to_cutoff = Some(m.time_to_cutoff);
        self.termination = Some(m.termination);
        self.design = Some(design.clone());
        self
    }

    fn failed(mut self, e: &Error) -> Self {
        self.feasible = !matches!(e, Error::Equalization(_) | Error::Infeasible(_));
        self.error = Some(e.to_string());
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepTable {
    pub rows: Vec<SweepRow>,
    /// Index of the maximizing row.
    pub best: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Stage {
    Baseline,
    Sensitivity,
    Candidate,
    Thickness,
    Ratio,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FreeParameter {
    pub param: Param,
    pub candidates: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignSpace {
    pub base: CellDesign,
    pub free: Vec<FreeParameter>,
    /// Specific capacity held fixed during the sensitivity stages; the base design's own
    /// value when absent.
    pub target: Option<f64>,
    pub adjust: Adjust,
    /// Candidate total thicknesses (µm) for the thickness stage.
    pub totals_um: Vec<f64>,
    /// Candidate first-sub-layer fractions for the ratio stage.
    pub fractions: Vec<f64>,
    pub porosity_bounds: (f64, f64),
}

impl DesignSpace {
    pub fn new(base: CellDesign) -> Self {
        Self {
            base,
            free: Vec::new(),
            target: None,
            adjust: Adjust::Proportional,
            totals_um: Vec::new(),
            fractions: Vec::new(),
            porosity_bounds: POROSITY_BOUNDS,
        }
    }

    /// Porosity, binder fraction and Bruggeman exponent free in every electrode layer, the
    /// standard thickness grid and, for multilayer bases, the standard ratio grid.
    pub fn standard(base: CellDesign) -> Self {
        let (lo, hi) = POROSITY_BOUNDS;
        let mut free = Vec::new();
        for layer in 0..base.electrode_layer_count() {
            free.push(FreeParameter {
                param: Param::new(layer, Field::EpsE),
                candidates: vec![lo, 0.30, hi],
            });
            free.push(FreeParameter {
                param: Param::new(layer, Field::EpsCbd),
                candidates: vec![0.04, 0.05, 0.07, 0.11],
            });
            free.push(FreeParameter {
                param: Param::new(layer, Field::Bruggeman),
                candidates: vec![1.5, 1.6, 1.8, 2.1],
            });
        }
        let fractions = if base.electrode_layer_count() >= 2 {
            presets::ratio_fractions()
        } else {
            Vec::new()
        };
        Self {
            base,
            free,
            target: None,
            adjust: Adjust::Proportional,
            totals_um: presets::THICKNESS_GRID_UM.to_vec(),
            fractions,
            porosity_bounds: POROSITY_BOUNDS,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.base.validate()?;
        let (lo, hi) = self.porosity_bounds;
        for fp in &self.free {
            fp.param.get(&self.base)?;
            for &v in &fp.candidates {
                if !v.is_finite() {
                    return Err(Error::config(format!("{}: non-finite candidate", fp.param)));
                }
                if fp.param.field == Field::EpsE && !(lo..=hi).contains(&v) {
                    return Err(Error::constraint(
                        "porosity within search bounds",
                        format!("{} = {v} outside [{lo}, {hi}]", fp.param),
                    ));
                }
                apply_overrides(&self.base, &[Override::new(fp.param, v)])?;
            }
        }
        if let Some(t) = self.target {
            if !(t > 0.0) {
                return Err(Error::config(format!(
                    "equalization target must be positive, got {t}"
                )));
            }
        }
        if self.totals_um.iter().any(|t| !(*t > 0.0)) {
            return Err(Error::config("thickness candidates must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceEntry {
    pub stage: Stage,
    pub id: String,
    pub overrides: Vec<Override>,
    pub layer_um: Vec<f64>,
    #[serde(rename = "specific_capacity_mah_cm2")]
    pub specific_capacity: Option<f64>,
    #[serde(rename = "achieved_mah_cm2")]
    pub achieved: Option<f64>,
    pub retention: Option<f64>,
    /// Retention, defined only for cases at the final specific capacity (within 1%).
    pub objective: Option<f64>,
    pub accepted: bool,
    pub error: Option<String>,
    #[serde(skip)]
    design: Option<CellDesign>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizeResult {
    pub design: CellDesign,
    pub metrics: DesignMetrics,
    pub objective: f64,
    pub trace: Vec<TraceEntry>,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptimizeOptions {
    pub c_rate: f64,
    /// Upper bound on evaluated cases (each a 0.05C + `c_rate` pair, plus equalization).
    pub max_evaluations: usize,
}

impl Default for OptimizeOptions {
    fn default() -> Self {
        Self {
            c_rate: 3.0,
            max_evaluations: 200,
        }
    }
}

/// Ordering for ranking: higher retention, then higher capacity, then thinner electrode.
fn rank_key(retention: f64, achieved: f64, thickness: f64) -> impl PartialOrd {
    (retention, achieved, -thickness)
}

fn better(a: (f64, f64, f64), b: (f64, f64, f64)) -> bool {
    rank_key(a.0, a.1, a.2) > rank_key(b.0, b.1, b.2)
}

fn argmax_by<T>(items: &[T], key: impl Fn(&T) -> Option<(f64, f64, f64)>) -> Option<usize> {
    let mut best: Option<(usize, (f64, f64, f64))> = None;
    for (i, item) in items.iter().enumerate() {
        if let Some(k) = key(item) {
            if best.is_none_or(|(_, b)| better(k, b)) {
                best = Some((i, k));
            }
        }
    }
    best.map(|(i, _)| i)
}

/// Splits `total` (m) so that layer 0 carries `fraction` and the remaining layers share the
/// rest in their current proportions.
pub fn with_split(design: &CellDesign, total: f64, fraction: f64) -> Result<CellDesign> {
    let n = design.electrode_layer_count();
    let mut d = design.clone();
    if n == 1 {
        d.electrode_mut(0).expect("electrode").thickness = total;
        return Ok(d);
    }
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::Infeasible(format!(
            "sub-layer fraction {fraction} outside (0, 1)"
        )));
    }
    let rest: f64 = design.electrode_layers().skip(1).map(|l| l.thickness).sum();
    for k in 0..n {
        let l = d.electrode_mut(k).expect("electrode");
        l.thickness = if k == 0 {
            fraction * total
        } else {
            (1.0 - fraction) * total * design.electrode(k).expect("electrode").thickness / rest
        };
    }
    Ok(d)
}

fn first_layer_fraction(design: &CellDesign) -> f64 {
    design.electrode(0).map_or(1.0, |l| l.thickness) / design.electrode_thickness()
}

impl Studio {
    pub fn new(config: SolverConfig) -> Self {
        Self {
            config,
            equalize: EqualizeOptions::default(),
            cache: CapacityCache::default(),
        }
    }

    pub fn with_equalize_options(mut self, options: EqualizeOptions) -> Self {
        self.equalize = options;
        self
    }

    pub fn config(&self) -> &SolverConfig {
        &self.config
    }

    /// (hits, misses) of the specific-capacity cache.
    pub fn cache_stats(&self) -> (usize, usize) {
        (
            self.cache.hits.load(Ordering::Relaxed),
            self.cache.misses.load(Ordering::Relaxed),
        )
    }

    /// Cached [`protocol::specific_capacity`]. The design name does not enter the key.
    pub fn specific_capacity(&self, design: &CellDesign) -> Result<f64> {
        let mut keyed = design.clone();
        keyed.name.clear();
        let key = fingerprint(&(&keyed, &self.config));
        if let Some(v) = self.cache.map.lock().expect("cache lock").get(&key) {
            self.cache.hits.fetch_add(1, Ordering::Relaxed);
            return Ok(*v);
        }
        self.cache.misses.fetch_add(1, Ordering::Relaxed);
        let v = protocol::specific_capacity(design, &self.config)?;
        self.cache.map.lock().expect("cache lock").insert(key, v);
        Ok(v)
    }

    /// Scales the selected thickness(es) until the 0.05C capacity matches `target` within
    /// the configured tolerance, and sets `I_1C` to match the target.
    pub fn equalize_specific_capacity(
        &self,
        design: &CellDesign,
        target: f64,
        adjust: Adjust,
    ) -> Result<Equalized> {
        if !(target > 0.0) {
            return Err(Error::config(format!(
                "equalization target must be positive, got {target}"
            )));
        }
        let opts = &self.equalize;
        let mut base = design.clone();
        base.set_one_c_from_capacity(target);
        base.validate()?;
        let n = base.electrode_layer_count();
        let layers: Vec<usize> = match adjust {
            Adjust::Proportional => (0..n).collect(),
            Adjust::Layer(k) if k < n => vec![k],
            Adjust::Layer(k) => {
                return Err(Error::config(format!("no electrode layer {k} to adjust")))
            }
        };
        let thick: Vec<f64> = layers
            .iter()
            .map(|&k| base.electrode(k).expect("electrode").thickness)
            .collect();
        let s_lo = thick
            .iter()
            .map(|t| opts.min_thickness / t)
            .fold(0.0, f64::max);
        let s_hi = thick
            .iter()
            .map(|t| opts.max_thickness / t)
            .fold(f64::INFINITY, f64::min);
        if !(s_lo < s_hi) {
            return Err(Error::Equalization(
                "thickness bounds leave no room to adjust".into(),
            ));
        }
        let scaled = |s: f64| {
            let mut d = base.clone();
            for (&k, &t) in layers.iter().zip(&thick) {
                d.electrode_mut(k).expect("electrode").thickness = t * s;
            }
            d
        };
        let mut evaluations = 0;
        let mut eval = |s: f64| -> Result<(f64, f64)> {
            if evaluations >= opts.max_evaluations {
                return Err(Error::Equalization(format!(
                    "no match to {target} mAh/cm^2 within {} evaluations",
                    opts.max_evaluations
                )));
            }
            evaluations += 1;
            let cap = self.specific_capacity(&scaled(s))?;
            Ok((cap - target, cap))
        };
        let tol = opts.tolerance * target;

        let mut a = 1.0f64.clamp(s_lo, s_hi);
        let (mut fa, cap_a) = eval(a)?;
        let mut best = (a, fa, cap_a);
        if fa.abs() > tol {
            // Linear model: only the adjusted layers' share of the loading scales with s.
            let total_loading = base.loading_capacity();
            let mut adjusted_only = base.clone();
            for k in (0..n).rev() {
                if !layers.contains(&k) {
                    adjusted_only.layers.remove(k + 1);
                }
            }
            let share = (adjusted_only.loading_capacity() / total_loading).clamp(1e-3, 1.0);
            let mut b = (a * (1.0 + (target - cap_a) / (cap_a * share))).clamp(s_lo, s_hi);
            if b == a {
                return Err(Error::Equalization(format!(
                    "target {target} mAh/cm^2 not reachable within thickness bounds (capacity {cap_a:.4} at the bound)"
                )));
            }
            let (mut fb, cap_b) = eval(b)?;
            if fb.abs() < best.1.abs() {
                best = (b, fb, cap_b);
            }
            // Secant steps outward until the root is bracketed.
            while fa * fb > 0.0 && fb.abs() > tol {
                let slope = (fb - fa) / (b - a);
                let next = if slope > 0.0 {
                    b - fb / slope
                } else {
                    b + (b - a)
                };
                let next = next.clamp(s_lo, s_hi);
                if next == b {
                    return Err(Error::Equalization(format!(
                        "target {target} mAh/cm^2 not bracketed within thickness bounds (capacity {:.4} at the bound)",
                        fb + target
                    )));
                }
                (a, fa) = (b, fb);
                b = next;
                let (f, cap) = eval(b)?;
                fb = f;
                if fb.abs() < best.1.abs() {
                    best = (b, fb, cap);
                }
            }
            // Illinois false position inside the bracket.
            while best.1.abs() > tol {
                let c = b - fb * (b - a) / (fb - fa);
                let (fc, cap) = eval(c)?;
                if fc.abs() < best.1.abs() {
                    best = (c, fc, cap);
                }
                if fc * fb < 0.0 {
                    (a, fa) = (b, fb);
                } else {
                    fa *= 0.5;
                }
                (b, fb) = (c, fc);
            }
        }
        let (scale, _, specific) = best;
        Ok(Equalized {
            design: scaled(scale),
            specific_capacity: specific,
            scale,
            evaluations,
        })
    }

    /// Equalizes (when a target is given) and charges at `c_rate`.
    pub fn evaluate(
        &self,
        design: &CellDesign,
        target: Option<f64>,
        adjust: Adjust,
        c_rate: f64,
    ) -> Result<(CellDesign, DesignMetrics)> {
        let (d, specific) = match target {
            Some(t) => {
                let e = self.equalize_specific_capacity(design, t, adjust)?;
                (e.design, e.specific_capacity)
            }
            None => (design.clone(), self.specific_capacity(design)?),
        };
        let m = protocol::evaluate_with_specific(&d, specific, c_rate, self.config())?;
        Ok((d, m))
    }

    /// Evaluates with `I_1C` rescaled from the design's own specific capacity.
    fn evaluate_rescaled(
        &self,
        design: &CellDesign,
        c_rate: f64,
    ) -> Result<(CellDesign, DesignMetrics)> {
        let specific = self.specific_capacity(design)?;
        let mut d = design.clone();
        d.set_one_c_from_capacity(specific);
        let m = protocol::evaluate_with_specific(&d, specific, c_rate, self.config())?;
        Ok((d, m))
    }

    /// Applies each case's overrides, equalizes to `target` if set, and charges at `c_rate`.
    /// Failed cases are kept with their error. Rows are ranked by retention.
    pub fn sensitivity_sweep(
        &self,
        base: &CellDesign,
        cases: &[CaseSpec],
        target: Option<f64>,
        adjust: Adjust,
        c_rate: f64,
    ) -> Vec<SweepCase> {
        let mut out: Vec<SweepCase> = cases
            .par_iter()
            .map(|case| {
                let outcome = apply_overrides(base, &case.overrides)
                    .and_then(|d| self.evaluate(&d, target, adjust, c_rate));
                match outcome {
                    Ok((design, m)) => SweepCase {
                        id: case.id.clone(),
                        overrides: case.overrides.clone(),
                        i_1c: design.i_1c,
                        specific_capacity: Some(m.specific_capacity),
                        metrics: Some(m),
                        design,
                        error: None,
                    },
                    Err(e) => SweepCase {
                        id: case.id.clone(),
                        overrides: case.overrides.clone(),
                        i_1c: base.i_1c,
                        design: base.clone(),
                        specific_capacity: None,
                        metrics: None,
                        error: Some(e.to_string()),
                    },
                }
            })
            .collect();
        let key = |c: &SweepCase| {
            c.metrics.as_ref().map(|m| {
                (
                    m.retention,
                    m.achieved_capacity,
                    c.design.electrode_thickness(),
                )
            })
        };
        // Stable sort: ties keep input order.
        out.sort_by(|a, b| match (key(a), key(b)) {
            (Some(x), Some(y)) if better(x, y) => std::cmp::Ordering::Less,
            (Some(x), Some(y)) if better(y, x) => std::cmp::Ordering::Greater,
            (Some(_), None) => std::cmp::Ordering::Less,
            (None, Some(_)) => std::cmp::Ordering::Greater,
            _ => std::cmp::Ordering::Equal,
        });
        out
    }

    /// Total-thickness sweep at a fixed sub-layer split; each case is charged at `c_rate`
    /// relative to its own specific capacity. The maximizer is the highest achieved capacity.
    pub fn thickness_sweep(
        &self,
        base: &CellDesign,
        totals_um: &[f64],
        fraction: f64,
        c_rate: f64,
    ) -> Result<SweepTable> {
        if let Some(t) = totals_um.iter().find(|t| !(**t > 0.0)) {
            return Err(Error::config(format!(
                "thickness must be positive, got {t}"
            )));
        }
        let base_total = base.electrode_thickness();
        let rows: Vec<SweepRow> = totals_um
            .par_iter()
            .map(|&total_um| {
                let total = total_um / 1e6;
                match with_split(base, total, fraction) {
                    Ok(mut d) => {
                        d.i_1c = base.i_1c * total / base_total;
                        let row = SweepRow::from_design(&d, fraction);
                        match d
                            .validate()
                            .and_then(|_| self.evaluate_rescaled(&d, c_rate))
                        {
                            Ok((d, m)) => row.with_metrics(&d, &m),
                            Err(e) => row.failed(&e),
                        }
                    }
                    Err(e) => SweepRow::from_design(base, fraction).failed(&e),
                }
            })
            .collect();
        let best = argmax_by(&rows, |r| Some((r.achieved?, r.retention?, r.total_um)));
        Ok(SweepTable { rows, best })
    }

    /// For each first-sub-layer fraction, finds the total thickness whose specific capacity
    /// matches `target` and charges at `c_rate`. The maximizer is the highest retention.
    pub fn ratio_sweep(
        &self,
        base: &CellDesign,
        fractions: &[f64],
        target: f64,
        c_rate: f64,
    ) -> Result<SweepTable> {
        if base.electrode_layer_count() < 2 {
            return Err(Error::config(
                "ratio sweep needs at least two electrode sub-layers",
            ));
        }
        let total = base.electrode_thickness();
        let rows: Vec<SweepRow> = fractions
            .par_iter()
            .map(|&fraction| match with_split(base, total, fraction) {
                Ok(d) => {
                    let row = SweepRow::from_design(&d, fraction);
                    match self.evaluate(&d, Some(target), Adjust::Proportional, c_rate) {
                        Ok((d, m)) => {
                            let mut row = row.with_metrics(&d, &m);
                            row.layer_um =
                                d.electrode_layers().map(|l| l.thickness * 1e6).collect();
                            row.total_um = row.layer_um.iter().sum();
                            row.mass_mg = d.cathode_mass() * 1e3;
                            row
                        }
                        Err(e) => row.failed(&e),
                    }
                }
                Err(e) => {
                    let mut row = SweepRow::from_design(base, fraction).failed(&e);
                    row.design = None;
                    row
                }
            })
            .collect();
        let best = argmax_by(&rows, |r| Some((r.retention?, r.achieved?, r.total_um)));
        Ok(SweepTable { rows, best })
    }

    /// Charges each design at `c_rate` relative to its own specific capacity; rows are sorted
    /// by cathode mass and the maximizer is the highest achieved capacity.
    pub fn mass_sweep(&self, designs: &[CellDesign], c_rate: f64) -> Result<SweepTable> {
        if designs.is_empty() {
            return Err(Error::config("mass sweep needs at least one design"));
        }
        let mut rows: Vec<SweepRow> = designs
            .par_iter()
            .map(|d| {
                let row = SweepRow::from_design(d, first_layer_fraction(d));
                match self.evaluate_rescaled(d, c_rate) {
                    Ok((d, m)) => row.with_metrics(&d, &m),
                    Err(e) => row.failed(&e),
                }
            })
            .collect();
        rows.sort_by(|a, b| a.mass_mg.total_cmp(&b.mass_mg));
        let best = argmax_by(&rows, |r| Some((r.achieved?, r.retention?, r.total_um)));
        Ok(SweepTable { rows, best })
    }

    /// Staged coordinate search: per-parameter sensitivity at fixed specific capacity,
    /// combination of the capacity-increasing moves, thickness sweep, then ratio sweep.
    ///
    /// Only cases at the final specific capacity are comparable; their retention is the
    /// objective and the returned design is the best of them.
    pub fn optimize(
        &self,
        space: &DesignSpace,
        options: &OptimizeOptions,
    ) -> Result<OptimizeResult> {
        space.validate()?;
        if !(options.c_rate > 0.0) {
            return Err(Error::config(format!(
                "c_rate must be positive, got {}",
                options.c_rate
            )));
        }
        let c_rate = options.c_rate;
        let mut trace: Vec<TraceEntry> = Vec::new();
        let mut warnings = Vec::new();
        let mut budget = options.max_evaluations;
        let mut take = |wanted: usize, stage: Stage, warnings: &mut Vec<String>| -> usize {
            let granted = wanted.min(budget);
            budget -= granted;
            if granted < wanted {
                warnings.push(format!(
                    "evaluation budget exhausted during {stage:?} stage"
                ));
            }
            granted
        };
        let entry = |stage: Stage,
                     id: String,
                     overrides: Vec<Override>,
                     r: &Result<(CellDesign, DesignMetrics)>| match r {
            Ok((d, m)) => TraceEntry {
                stage,
                id,
                overrides,
                layer_um: d.electrode_layers().map(|l| l.thickness * 1e6).collect(),
                specific_capacity: Some(m.specific_capacity),
                achieved: Some(m.achieved_capacity),
                retention: Some(m.retention),
                objective: None,
                accepted: false,
                error: None,
                design: Some(d.clone()),
            },
            Err(e) => TraceEntry {
                stage,
                id,
                overrides,
                layer_um: Vec::new(),
                specific_capacity: None,
                achieved: None,
                retention: None,
                objective: None,
                accepted: false,
                error: Some(e.to_string()),
                design: None,
            },
        };

        if take(1, Stage::Baseline, &mut warnings) == 0 {
            return Err(Error::Infeasible("evaluation budget is zero".into()));
        }
        let baseline = self.evaluate(&space.base, space.target, space.adjust, c_rate);
        let mut e = entry(Stage::Baseline, "baseline".into(), Vec::new(), &baseline);
        e.accepted = true;
        trace.push(e);
        let (mut current, base_metrics) = baseline?;
        let target = base_metrics.specific_capacity;
        let current_achieved = base_metrics.achieved_capacity;

        // Sensitivity: one parameter at a time, equalized to the baseline capacity.
        let mut singles: Vec<(usize, Override)> = Vec::new();
        for (pi, fp) in space.free.iter().enumerate() {
            let now = fp.param.get(&current)?;
            for &v in &fp.candidates {
                if v != now {
                    singles.push((pi, Override::new(fp.param, v)));
                }
            }
        }
        let granted = take(singles.len(), Stage::Sensitivity, &mut warnings);
        singles.truncate(granted);
        let results: Vec<_> = singles
            .par_iter()
            .map(|(_, o)| {
                apply_overrides(&current, &[*o])
                    .and_then(|d| self.evaluate(&d, Some(target), space.adjust, c_rate))
            })
            .collect();
        let first = trace.len();
        for ((_, o), r) in singles.iter().zip(&results) {
            trace.push(entry(Stage::Sensitivity, o.to_string(), vec![*o], r));
        }
        // Best capacity-increasing value per parameter.
        let mut moves: Vec<Override> = Vec::new();
        for pi in 0..space.free.len() {
            let best = singles
                .iter()
                .zip(&results)
                .enumerate()
                .filter(|(_, ((p, _), _))| *p == pi)
                .filter_map(|(k, (_, r))| r.as_ref().ok().map(|(_, m)| (k, m.achieved_capacity)))
                .filter(|(_, a)| *a > current_achieved * (1.0 + 1e-6))
                .max_by(|a, b| a.1.total_cmp(&b.1));
            if let Some((k, _)) = best {
                trace[first + k].accepted = true;
                moves.push(singles[k].1);
            }
        }
        if !moves.is_empty() && take(1, Stage::Candidate, &mut warnings) == 1 {
            let r = apply_overrides(&current, &moves)
                .and_then(|d| self.evaluate(&d, Some(target), space.adjust, c_rate));
            let id = moves
                .iter()
                .map(|o| o.to_string())
                .collect::<Vec<_>>()
                .join(",");
            let mut e = entry(Stage::Candidate, id, moves.clone(), &r);
            if let Ok((d, m)) = r {
                if m.achieved_capacity > current_achieved {
                    current = d;
                    e.accepted = true;
                }
            }
            trace.push(e);
        }

        // Thickness at a fixed split, each case at its own 1C.
        let mut target = target;
        if !space.totals_um.is_empty() {
            let granted = take(space.totals_um.len(), Stage::Thickness, &mut warnings);
            let fraction = first_layer_fraction(&current);
            let table =
                self.thickness_sweep(&current, &space.totals_um[..granted], fraction, c_rate)?;
            let start = trace.len();
            for row in &table.rows {
                trace.push(row_entry(
                    Stage::Thickness,
                    format!("total={}um", row.total_um),
                    row,
                ));
            }
            if let Some(b) = table.best {
                trace[start + b].accepted = true;
                let row = &table.rows[b];
                current = row.design.clone().expect("evaluated row");
                target = row.specific_capacity.expect("evaluated row");
            }
        }

        // Split at the chosen specific capacity.
        if !space.fractions.is_empty() && current.electrode_layer_count() >= 2 {
            let granted = take(space.fractions.len(), Stage::Ratio, &mut warnings);
            let table = self.ratio_sweep(&current, &space.fractions[..granted], target, c_rate)?;
            let start = trace.len();
            for row in &table.rows {
                trace.push(row_entry(
                    Stage::Ratio,
                    format!("fraction={}", row.fraction),
                    row,
                ));
            }
            if let Some(b) = table.best {
                trace[start + b].accepted = true;
                let row = &table.rows[b];
                current = row.design.clone().expect("evaluated row");
                target = row.specific_capacity.expect("evaluated row");
            }
        }

        // Objective on the comparable cases; the optimum is the best of them.
        for e in &mut trace {
            if let (Some(s), Some(r)) = (e.specific_capacity, e.retention) {
                if (s - target).abs() <= EQUALIZATION_INVARIANT * target {
                    e.objective = Some(r);
                }
            }
        }
        let chosen = argmax_by(&trace, |e| {
            Some((e.objective?, e.achieved?, e.layer_um.iter().sum::<f64>()))
        });
        if let Some(d) = chosen.and_then(|k| trace[k].design.clone()) {
            current = d;
        }
        let specific = self.specific_capacity(&current)?;
        let metrics = protocol::evaluate_with_specific(&current, specific, c_rate, self.config())?;
        Ok(OptimizeResult {
            objective: metrics.retention,
            design: current,
            metrics,
            trace,
            warnings,
        })
    }
}

fn row_entry(stage: Stage, id: String, row: &SweepRow) -> TraceEntry {
    TraceEntry {
        stage,
        id,
        overrides: Vec::new(),
        layer_um: row.layer_um.clone(),
        specific_capacity: row.specific_capacity,
        achieved: row.achieved,
        retention: row.retention,
        objective: None,
        accepted: false,
        error: row.error.clone(),
        design: row.design.clone().filter(|_| row.error.is_none()),
    }
}

/// Checks the benchmark invariant: every evaluated case within `EQUALIZATION_INVARIANT`
/// of `target`.
pub fn satisfies_equalization(cases: &[SweepCase], target: f64) -> bool {
    cases
        .iter()
        .filter_map(|c| c.specific_capacity)
        .all(|s| (s - target).abs() <= EQUALIZATION_INVARIANT * target)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::presets;

    #[test]
    fn param_roundtrip_and_display() {
        let mut d = presets::default_bilayer();
        let p = Param::new(1, Field::EpsCbd);
        assert_eq!(p.get(&d).unwrap(), 0.11);
        p.set(&mut d, 0.07).unwrap();
        assert_eq!(p.get(&d).unwrap(), 0.07);
        assert_eq!(p.to_string(), "eps_cbd[1]");
        assert!(Param::new(5, Field::EpsE).get(&d).is_err());
    }

    #[test]
    fn overrides_are_validated() {
        let d = presets::default_bilayer();
        let bad = [Override::new(Param::new(0, Field::EpsE), 0.95)];
        assert!(apply_overrides(&d, &bad).is_err());
        let ok = [Override::new(Param::new(0, Field::EpsCbd), 0.04)];
        assert_eq!(
            apply_overrides(&d, &ok)
                .unwrap()
                .electrode(0)
                .unwrap()
                .eps_cbd,
            0.04
        );
    }

    #[test]
    fn split_preserves_total_and_fraction() {
        let d = presets::default_bilayer();
        let s = with_split(&d, 118e-6, 47.0 / 118.0).unwrap();
        assert!((s.electrode(0).unwrap().thickness - 47e-6).abs() < 1e-15);
        assert!((s.electrode(1).unwrap().thickness - 71e-6).abs() < 1e-15);
        assert!(with_split(&d, 1e-4, 1.0).is_err());
        assert!(with_split(&d, 1e-4, 0.0).is_err());
        let single = with_split(&presets::nmc_only_72um(), 50e-6, 0.3).unwrap();
        assert_eq!(single.electrode(0).unwrap().thickness, 50e-6);
    }

    #[test]
    fn ranking_prefers_retention_then_capacity_then_thin() {
        assert!(better((0.9, 3.0, 100.0), (0.8, 4.0, 50.0)));
        assert!(better((0.9, 3.1, 100.0), (0.9, 3.0, 50.0)));
        assert!(better((0.9, 3.0, 50.0), (0.9, 3.0, 100.0)));
        let rows = [(0.5, 1.0, 1.0), (0.9, 1.0, 2.0), (0.9, 1.0, 1.0)];
        assert_eq!(argmax_by(&rows, |r| Some(*r)), Some(2));
        assert_eq!(argmax_by(&rows[..0], |r| Some(*r)), None);
    }

    #[test]
    fn space_rejects_porosity_outside_window() {
        let mut s = DesignSpace::new(presets::default_bilayer());
        s.free.push(FreeParameter {
            param: Param::new(0, Field::EpsE),
            candidates: vec![0.40],
        });
        assert!(matches!(s.validate(), Err(Error::Constraint { .. })));
        s.free[0].candidates = vec![0.30];
        s.validate().unwrap();
    }

    #[test]
    fn equalization_invariant_check() {
        let d = presets::default_bilayer();
        let case = |s: f64| SweepCase {
            id: "c".into(),
            overrides: vec![],
            design: d.clone(),
            i_1c: d.i_1c,
            specific_capacity: Some(s),
            metrics: None,
            error: None,
        };
        assert!(satisfies_equalization(&[case(3.74), case(3.76)], 3.74));
        assert!(!satisfies_equalization(&[case(3.74), case(3.9)], 3.74));
    }

    #[test]
    fn rejects_bad_inputs_without_simulating() {
        let studio = Studio::new(SolverConfig::default());
        let d = presets::default_bilayer();
        assert!(studio
            .equalize_specific_capacity(&d, 0.0, Adjust::Proportional)
            .is_err());
        assert!(studio
            .equalize_specific_capacity(&d, 3.7, Adjust::Layer(4))
            .is_err());
        assert!(studio.thickness_sweep(&d, &[-1.0], 0.5, 3.0).is_err());
        assert!(studio
            .ratio_sweep(&presets::nmc_only_72um(), &[0.5], 3.7, 3.0)
            .is_err());
        assert!(studio.mass_sweep(&[], 3.0).is_err());
        assert!(studio
            .sensitivity_sweep(&d, &[], None, Adjust::Proportional, 3.0)
            .is_empty());
    }
}
