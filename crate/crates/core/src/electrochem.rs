//! Closed-form constitutive relations: open-circuit potentials, Butler-Volmer
//! kinetics, Bruggeman transport, reactive surface area and the bulk
//! electrolyte correlations.
//!
//! Everything here is a pure function of its arguments.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Faraday constant (s·A/mol).
pub const FARADAY: f64 = 96485.33;
/// Universal gas constant (J/K/mol).
pub const GAS_CONSTANT: f64 = 8.314;
/// Reference temperature used throughout (K).
pub const REFERENCE_TEMPERATURE: f64 = 293.15;

/// Sinh arguments beyond this magnitude switch to the asymptotic exponential.
const SINH_GUARD: f64 = 30.0;
/// Largest exponent handed to `exp` in the asymptotic branch.
const MAX_EXPONENT: f64 = 700.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KineticsContext {
    pub temperature: f64,
    #[serde(default = "default_faraday")]
    pub faraday: f64,
    #[serde(default = "default_gas_constant")]
    pub gas_constant: f64,
}

fn default_faraday() -> f64 {
    FARADAY
}

fn default_gas_constant() -> f64 {
    GAS_CONSTANT
}

impl Default for KineticsContext {
    fn default() -> Self {
        Self {
            temperature: REFERENCE_TEMPERATURE,
            faraday: FARADAY,
            gas_constant: GAS_CONSTANT,
        }
    }
}

impl KineticsContext {
    pub fn validate(&self) -> Result<()> {
        if !(self.temperature > 0.0) {
            return Err(Error::constraint(
                "T > 0",
                format!("temperature = {}", self.temperature),
            ));
        }
        if !(self.faraday > 0.0 && self.gas_constant > 0.0) {
            return Err(Error::constraint(
                "F > 0, R > 0",
                "physical constants must be positive",
            ));
        }
        Ok(())
    }

    /// RT/F in volts.
    pub fn thermal_voltage(&self) -> f64 {
        self.gas_constant * self.temperature / self.faraday
    }
}

// ---------------------------------------------------------------------------
// Open-circuit potentials
// ---------------------------------------------------------------------------

/// Numerator coefficients p1..p5 of the NMC622 rational fit.
pub const NMC622_NUMERATOR: [f64; 5] = [-204.3, -166.6, -172.4, 167.3, 272.2];
/// Denominator coefficients q1..q5 of the NMC622 rational fit (leading x^5 coefficient is 1).
pub const NMC622_DENOMINATOR: [f64; 5] = [-158.1, 221.4, -331.6, 200.1, 38.07];
/// Stoichiometry window over which the NMC622 fit is trusted.
///
/// The upper bound sits just above the charge-initial stoichiometry 44868/48700; the
/// rational function has a zero at x ≈ 0.9234 and a pole at x ≈ 0.9238.
pub const NMC622_WINDOW: (f64, f64) = (0.27, 0.922);

pub const LFP_PLATEAU: f64 = 3.413;
pub const LFP_AMPLITUDE: f64 = 0.001;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "variant", rename_all = "kebab-case", deny_unknown_fields)]
pub enum OcpCurve {
    /// `(p1 x^4 + ... + p5) / (x^5 + q1 x^4 + ... + q5)`.
    Nmc622Rational {
        numerator: [f64; 5],
        denominator: [f64; 5],
        window: (f64, f64),
    },
    /// `plateau + amplitude·(1/y + 1/(y − 1))` on the open interval (0, 1).
    LfpPlateau { plateau: f64, amplitude: f64 },
    /// Piecewise-linear table, strictly increasing in stoichiometry.
    Tabulated {
        stoichiometry: Vec<f64>,
        voltage: Vec<f64>,
    },
}

impl OcpCurve {
    pub fn nmc622() -> Self {
        OcpCurve::Nmc622Rational {
            numerator: NMC622_NUMERATOR,
            denominator: NMC622_DENOMINATOR,
            window: NMC622_WINDOW,
        }
    }

    pub fn lfp() -> Self {
        OcpCurve::LfpPlateau {
            plateau: LFP_PLATEAU,
            amplitude: LFP_AMPLITUDE,
        }
    }

    pub fn tabulated(stoichiometry: Vec<f64>, voltage: Vec<f64>) -> Result<Self> {
        let curve = OcpCurve::Tabulated {
            stoichiometry,
            voltage,
        };
        curve.validate()?;
        Ok(curve)
    }

    /// Admissible stoichiometry window (closed for the rational and tabulated forms,
    /// open for the plateau form).
    pub fn window(&self) -> (f64, f64) {
        match self {
            OcpCurve::Nmc622Rational { window, .. } => *window,
            OcpCurve::LfpPlateau { .. } => (0.0, 1.0),
            OcpCurve::Tabulated { stoichiometry, .. } => {
                (stoichiometry[0], stoichiometry[stoichiometry.len() - 1])
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            OcpCurve::Nmc622Rational { window, .. } => {
                if !(window.0 < window.1) {
                    return Err(Error::constraint(
                        "x_lo < x_hi",
                        format!("window {:?}", window),
                    ));
                }
            }
            OcpCurve::LfpPlateau { plateau, amplitude } => {
                if !(plateau.is_finite() && *plateau > 0.0 && amplitude.is_finite()) {
                    return Err(Error::constraint(
                        "plateau > 0",
                        "LFP plateau must be positive",
                    ));
                }
            }
            OcpCurve::Tabulated {
                stoichiometry,
                voltage,
            } => {
                if stoichiometry.len() < 2 || stoichiometry.len() != voltage.len() {
                    return Err(Error::constraint(
                        "tabulated OCP shape",
                        "need at least two (x, U) pairs of equal length",
                    ));
                }
                if stoichiometry.windows(2).any(|w| !(w[1] > w[0])) {
                    return Err(Error::constraint(
                        "tabulated OCP ordering",
                        "stoichiometry must be strictly increasing",
                    ));
                }
            }
        }
        Ok(())
    }

    pub fn evaluate(&self, x: f64) -> Result<f64> {
        match self {
            OcpCurve::Nmc622Rational {
                numerator,
                denominator,
                window,
            } => {
                if !(x >= window.0 && x <= window.1) {
                    return Err(Error::Domain {
                        quantity: "NMC stoichiometry",
                        value: x,
                        lo: window.0,
                        hi: window.1,
                    });
                }
                let num = numerator.iter().fold(0.0, |acc, &p| acc * x + p);
                let den = denominator.iter().fold(1.0, |acc, &q| acc * x + q);
                Ok(num / den)
            }
            OcpCurve::LfpPlateau { plateau, amplitude } => {
                if !(x > 0.0 && x < 1.0) {
                    return Err(Error::Domain {
                        quantity: "LFP stoichiometry",
                        value: x,
                        lo: 0.0,
                        hi: 1.0,
                    });
                }
                Ok(plateau + amplitude * (1.0 / x + 1.0 / (x - 1.0)))
            }
            OcpCurve::Tabulated {
                stoichiometry,
                voltage,
            } => {
                let (lo, hi) = (stoichiometry[0], stoichiometry[stoichiometry.len() - 1]);
                if !(x >= lo && x <= hi) {
                    return Err(Error::Domain {
                        quantity: "tabulated stoichiometry",
                        value: x,
                        lo,
                        hi,
                    });
                }
                let k = stoichiometry
                    .partition_point(|&s| s <= x)
                    .clamp(1, stoichiometry.len() - 1);
                let (x0, x1) = (stoichiometry[k - 1], stoichiometry[k]);
                let w = (x - x0) / (x1 - x0);
                Ok(voltage[k - 1] + w * (voltage[k] - voltage[k - 1]))
            }
        }
    }
}

/// NMC622 open-circuit potential (V) for stoichiometry `x = c_s / c_s_max`.
pub fn ocp_nmc622(x: f64) -> Result<f64> {
    OcpCurve::nmc622().evaluate(x)
}

/// LFP open-circuit potential (V) for stoichiometry `y = c_s / c_s_max`.
pub fn ocp_lfp(y: f64) -> Result<f64> {
    OcpCurve::lfp().evaluate(y)
}

// ---------------------------------------------------------------------------
// Active material
// ---------------------------------------------------------------------------

/// Initial particle concentrations for the two starting directions (mol/m^3).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialLoading {
    pub charge: f64,
    pub discharge: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChemistrySpec {
    pub name: String,
    /// Maximum lithium concentration in the solid (mol/m^3).
    pub c_s_max: f64,
    /// Solid diffusivity (m^2/s).
    pub d_s: f64,
    /// Reaction rate constant (m^2.5 s^-1 mol^-0.5).
    pub k_rate: f64,
    /// Particle radius (m).
    pub particle_radius: f64,
    /// Fraction of the non-electrolyte volume that stores lithium.
    pub active_fraction: f64,
    /// Density of the non-electrolyte phase attributed to this material (kg/m^3).
    pub density: f64,
    pub initial: InitialLoading,
    pub ocp: OcpCurve,
}

impl ChemistrySpec {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("c_s_max > 0", self.c_s_max),
            ("D_s > 0", self.d_s),
            ("k_rate > 0", self.k_rate),
            ("R_p > 0", self.particle_radius),
            ("density > 0", self.density),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::constraint(
                    name,
                    format!("{} has {} = {}", self.name, name, v),
                ));
            }
        }
        if !(self.active_fraction > 0.0 && self.active_fraction <= 1.0) {
            return Err(Error::constraint(
                "0 < active_fraction <= 1",
                format!("{}: {}", self.name, self.active_fraction),
            ));
        }
        self.ocp.validate()?;
        for (label, c) in [
            ("charge", self.initial.charge),
            ("discharge", self.initial.discharge),
        ] {
            if !(c >= 0.0 && c <= self.c_s_max) {
                return Err(Error::constraint(
                    "0 <= c_s_init <= c_s_max",
                    format!("{} {} initial loading {}", self.name, label, c),
                ));
            }
            let u = self.ocp.evaluate(c / self.c_s_max)?;
            if !(u.is_finite() && u > 0.0) {
                return Err(Error::constraint(
                    "OCP finite and positive",
                    format!("{} at {} initial loading gives {}", self.name, label, u),
                ));
            }
        }
        Ok(())
    }

    pub fn ocp_at(&self, c_s: f64) -> Result<f64> {
        self.ocp.evaluate(c_s / self.c_s_max)
    }
}

// ---------------------------------------------------------------------------
// Geometry and transport
// ---------------------------------------------------------------------------

/// Reactive surface area per electrode volume, `3·(1 − ε_e − ε_CBD)/R_p` (1/m).
pub fn specific_surface_area(eps_e: f64, eps_cbd: f64, particle_radius: f64) -> Result<f64> {
    let solid = 1.0 - eps_e - eps_cbd;
    if !(eps_e >= 0.0 && eps_cbd >= 0.0 && solid > 0.0) {
        return Err(Error::constraint(
            "eps_e + eps_cbd < 1",
            format!("eps_e = {eps_e}, eps_cbd = {eps_cbd} leave no solid"),
        ));
    }
    if !(particle_radius > 0.0) {
        return Err(Error::constraint(
            "R_p > 0",
            format!("R_p = {particle_radius}"),
        ));
    }
    Ok(3.0 * solid / particle_radius)
}

/// Bruggeman correction `bulk · ε^b`.
#[inline]
pub fn effective_transport(bulk: f64, eps: f64, bruggeman: f64) -> f64 {
    bulk * eps.powf(bruggeman)
}

// ---------------------------------------------------------------------------
// Kinetics
// ---------------------------------------------------------------------------

/// `F·k·c_e^0.5·c_surf^0.5·(c_s_max − c_surf)^0.5` (A/m^2).
pub fn exchange_current_density(
    k_rate: f64,
    c_e: f64,
    c_surf: f64,
    c_s_max: f64,
    ctx: &KineticsContext,
) -> Result<f64> {
    if c_surf > c_s_max {
        return Err(Error::State(format!(
            "surface concentration {c_surf} exceeds c_s_max {c_s_max}"
        )));
    }
    if c_surf < 0.0 || c_e < 0.0 {
        return Err(Error::State(format!(
            "negative concentration (c_e = {c_e}, c_surf = {c_surf})"
        )));
    }
    Ok(ctx.faraday * k_rate * (c_e * c_surf * (c_s_max - c_surf)).sqrt())
}

/// Symmetric Butler-Volmer current density `2·J0·sinh(F·η/(2RT))` (A/m^2).
pub fn butler_volmer(j0: f64, eta: f64, ctx: &KineticsContext) -> f64 {
    let arg = eta / (2.0 * ctx.thermal_voltage());
    guarded_two_sinh(j0, arg)
}

/// `2·j0·sinh(arg)`, evaluated as `sign·exp(ln j0 + |arg|)` once `|arg|` is large.
#[inline]
pub(crate) fn guarded_two_sinh(j0: f64, arg: f64) -> f64 {
    if arg.abs() <= SINH_GUARD {
        2.0 * j0 * arg.sinh()
    } else if j0 <= 0.0 {
        0.0
    } else {
        let exponent = (j0.ln() + arg.abs()).min(MAX_EXPONENT);
        arg.signum() * exponent.exp()
    }
}

// ---------------------------------------------------------------------------
// Electrolyte
// ---------------------------------------------------------------------------

/// Concentration- and temperature-dependent bulk electrolyte transport.
pub trait ElectrolyteModel: Send + Sync + fmt::Debug {
    /// Bulk salt diffusivity (m^2/s); `c_e` in mol/m^3.
    fn diffusivity(&self, c_e: f64, temperature: f64) -> f64;
    /// Bulk ionic conductivity (S/m).
    fn conductivity(&self, c_e: f64, temperature: f64) -> f64;
    /// Thermodynamic factor `1 + dln f/dln c`.
    fn thermodynamic_factor(&self, c_e: f64, temperature: f64, t_plus: f64) -> f64;
}

/// LiPF6 in EC:DMC, Valøen & Reimers (2005), with optional multiplicative corrections
/// on diffusivity and conductivity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ValoenReimers {
    pub diffusivity_factor: f64,
    pub conductivity_factor: f64,
}

impl Default for ValoenReimers {
    fn default() -> Self {
        Self {
            diffusivity_factor: 1.0,
            conductivity_factor: 1.0,
        }
    }
}

impl ValoenReimers {
    pub fn scaled(diffusivity_factor: f64, conductivity_factor: f64) -> Self {
        Self {
            diffusivity_factor,
            conductivity_factor,
        }
    }
}

impl ElectrolyteModel for ValoenReimers {
    fn diffusivity(&self, c_e: f64, temperature: f64) -> f64 {
        let c = c_e * 1e-3;
        let log10_d = -4.43 - 54.0 / (temperature - 229.0 - 5.0 * c) - 0.22 * c;
        self.diffusivity_factor * 10f64.powf(log10_d) * 1e-4
    }

    fn conductivity(&self, c_e: f64, temperature: f64) -> f64 {
        let c = c_e * 1e-3;
        let t = temperature;
        let inner = -10.5 + 0.0740 * t - 6.96e-5 * t * t + 0.668 * c - 0.0178 * c * t
            + 2.80e-5 * c * t * t
            + 0.494 * c * c
            - 8.86e-4 * c * c * t;
        // mS/cm -> S/m
        self.conductivity_factor * 0.1 * c * inner * inner
    }

    fn thermodynamic_factor(&self, c_e: f64, temperature: f64, t_plus: f64) -> f64 {
        let c = c_e.max(0.0) * 1e-3;
        let fit =
            0.601 - 0.24 * c.sqrt() + 0.982 * (1.0 - 0.0052 * (temperature - 294.0)) * c.powf(1.5);
        fit / (1.0 - t_plus)
    }
}

/// Concentration-independent properties, mostly useful for tests.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConstantElectrolyte {
    pub diffusivity: f64,
    pub conductivity: f64,
    pub thermodynamic_factor: f64,
}

impl ElectrolyteModel for ConstantElectrolyte {
    fn diffusivity(&self, _: f64, _: f64) -> f64 {
        self.diffusivity
    }

    fn conductivity(&self, _: f64, _: f64) -> f64 {
        self.conductivity
    }

    fn thermodynamic_factor(&self, _: f64, _: f64, _: f64) -> f64 {
        self.thermodynamic_factor
    }
}

#[derive(Clone, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ElectrolyteCorrelation {
    ValoenReimers(ValoenReimers),
    Constant(ConstantElectrolyte),
    /// A model supplied from code; cannot be serialized.
    #[serde(skip)]
    Custom(Arc<dyn ElectrolyteModel>),
}

impl ElectrolyteCorrelation {
    fn model(&self) -> &dyn ElectrolyteModel {
        match self {
            ElectrolyteCorrelation::ValoenReimers(m) => m,
            ElectrolyteCorrelation::Constant(c) => c,
            ElectrolyteCorrelation::Custom(m) => m.as_ref(),
        }
    }
}

impl fmt::Debug for ElectrolyteCorrelation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ElectrolyteCorrelation::ValoenReimers(m) => write!(f, "{m:?}"),
            ElectrolyteCorrelation::Constant(c) => write!(f, "Constant({c:?})"),
            ElectrolyteCorrelation::Custom(m) => write!(f, "Custom({m:?})"),
        }
    }
}

impl PartialEq for ElectrolyteCorrelation {
    fn eq(&self, other: &Self) -> bool {
        match (self, other) {
            (
                ElectrolyteCorrelation::ValoenReimers(a),
                ElectrolyteCorrelation::ValoenReimers(b),
            ) => a == b,
            (ElectrolyteCorrelation::Constant(a), ElectrolyteCorrelation::Constant(b)) => a == b,
            (ElectrolyteCorrelation::Custom(a), ElectrolyteCorrelation::Custom(b)) => {
                Arc::ptr_eq(a, b)
            }
            _ => false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ElectrolyteSpec {
    /// Initial salt concentration (mol/m^3).
    pub c_e0: f64,
    /// Cation transference number.
    pub t_plus: f64,
    pub correlation: ElectrolyteCorrelation,
}

impl Default for ElectrolyteSpec {
    fn default() -> Self {
        Self {
            c_e0: 1000.0,
            t_plus: 0.37,
            correlation: ElectrolyteCorrelation::ValoenReimers(ValoenReimers::default()),
        }
    }
}

impl ElectrolyteSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.t_plus > 0.0 && self.t_plus < 1.0) {
            return Err(Error::constraint(
                "0 < t_plus < 1",
                format!("t_plus = {}", self.t_plus),
            ));
        }
        if !(self.c_e0 > 0.0) {
            return Err(Error::constraint(
                "c_e0 > 0",
                format!("c_e0 = {}", self.c_e0),
            ));
        }
        if let ElectrolyteCorrelation::ValoenReimers(m) = &self.correlation {
            if !(m.diffusivity_factor > 0.0 && m.conductivity_factor > 0.0) {
                return Err(Error::constraint(
                    "correlation factors > 0",
                    format!("{m:?}"),
                ));
            }
        }
        if let ElectrolyteCorrelation::Constant(m) = &self.correlation {
            if !(m.diffusivity > 0.0 && m.conductivity > 0.0 && m.thermodynamic_factor > 0.0) {
                return Err(Error::constraint(
                    "constant electrolyte properties > 0",
                    format!("{m:?}"),
                ));
            }
        }
        Ok(())
    }

    pub fn model(&self) -> &dyn ElectrolyteModel {
        self.correlation.model()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ElectrolyteProperties {
    pub diffusivity: f64,
    pub conductivity: f64,
    pub activity_factor: f64,
}

pub fn electrolyte_properties(
    c_e: f64,
    temperature: f64,
    spec: &ElectrolyteSpec,
) -> Result<ElectrolyteProperties> {
    if !(c_e > 0.0) {
        return Err(Error::State(format!("electrolyte depleted: c_e = {c_e}")));
    }
    let m = spec.model();
    Ok(ElectrolyteProperties {
        diffusivity: m.diffusivity(c_e, temperature),
        conductivity: m.conductivity(c_e, temperature),
        activity_factor: m.thermodynamic_factor(c_e, temperature, spec.t_plus),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn ctx() -> KineticsContext {
        KineticsContext::default()
    }

    #[test]
    fn nmc_initial_loadings() {
        // Independent evaluation with Horner-free expanded powers.
        let eval = |x: f64| {
            let p = NMC622_NUMERATOR;
            let q = NMC622_DENOMINATOR;
            let num = p[0] * x.powi(4) + p[1] * x.powi(3) + p[2] * x.powi(2) + p[3] * x + p[4];
            let den = x.powi(5)
                + q[0] * x.powi(4)
                + q[1] * x.powi(3)
                + q[2] * x.powi(2)
                + q[3] * x
                + q[4];
            num / den
        };
        let charge = ocp_nmc622(44868.0 / 48700.0).unwrap();
        let discharge = ocp_nmc622(13366.0 / 48700.0).unwrap();
        assert_relative_eq!(charge, eval(44868.0 / 48700.0), max_relative = 1e-12);
        assert_relative_eq!(discharge, eval(13366.0 / 48700.0), max_relative = 1e-12);
        assert!((charge - 3.0).abs() < 0.05, "{charge}");
        assert!((discharge - 4.19).abs() < 0.05, "{discharge}");
    }

    #[test]
    fn nmc_window_edges() {
        let lo = ocp_nmc622(0.27).unwrap();
        let hi = ocp_nmc622(0.92).unwrap();
        assert!(lo.is_finite() && hi.is_finite());
        assert!(lo > hi);
        assert!(matches!(ocp_nmc622(0.2), Err(Error::Domain { .. })));
        assert!(matches!(ocp_nmc622(0.95), Err(Error::Domain { .. })));
    }

    #[test]
    fn nmc_strictly_decreasing() {
        let n = 1000;
        let (lo, hi) = (0.27, 0.92);
        let mut prev = f64::INFINITY;
        for i in 0..n {
            let x = lo + (hi - lo) * i as f64 / (n - 1) as f64;
            let u = ocp_nmc622(x).unwrap();
            assert!(u < prev, "not decreasing at {x}");
            prev = u;
        }
    }

    #[test]
    fn lfp_values() {
        assert_eq!(ocp_lfp(0.5).unwrap(), 3.413);
        let charge = ocp_lfp(22751.0 / 22806.0).unwrap();
        let discharge = ocp_lfp(29.0 / 22806.0).unwrap();
        assert!((charge - 3.0).abs() < 0.01, "{charge}");
        assert!((discharge - 4.19).abs() < 0.02, "{discharge}");
        assert!(ocp_lfp(0.0).is_err());
        assert!(ocp_lfp(1.0).is_err());
        assert!(ocp_lfp(-0.1).is_err());
    }

    #[test]
    fn tabulated_interpolates_and_rejects_unordered() {
        let c = OcpCurve::tabulated(vec![0.0, 0.5, 1.0], vec![4.0, 3.5, 3.0]).unwrap();
        assert_relative_eq!(c.evaluate(0.25).unwrap(), 3.75);
        assert_relative_eq!(c.evaluate(1.0).unwrap(), 3.0);
        assert!(c.evaluate(1.1).is_err());
        assert!(OcpCurve::tabulated(vec![0.0, 0.5, 0.5], vec![4.0, 3.5, 3.0]).is_err());
    }

    #[test]
    fn surface_area() {
        let a = specific_surface_area(0.31, 0.11, 4.94e-6).unwrap();
        assert_relative_eq!(a, 3.0 * 0.58 / 4.94e-6, max_relative = 1e-12);
        assert!((a - 3.522e5).abs() / 3.522e5 < 1e-3);
        let lean = specific_surface_area(0.30, 0.04, 4.94e-6).unwrap();
        assert!(lean > a);
        assert!(specific_surface_area(0.5, 0.5, 1e-6).is_err());
    }

    #[test]
    fn bruggeman() {
        assert_relative_eq!(
            effective_transport(1.0, 0.3, 1.5),
            0.164_316_767_251_549_8,
            max_relative = 1e-12
        );
        assert!(effective_transport(2e-10, 0.3, 1.8) < effective_transport(2e-10, 0.3, 1.5));
        assert_eq!(effective_transport(2e-10, 1.0, 1.7), 2e-10);
    }

    #[test]
    fn exchange_current() {
        let c = ctx();
        assert_eq!(
            exchange_current_density(1e-10, 0.0, 24350.0, 48700.0, &c).unwrap(),
            0.0
        );
        assert_eq!(
            exchange_current_density(1e-10, 1000.0, 48700.0, 48700.0, &c).unwrap(),
            0.0
        );
        let j0 = exchange_current_density(1e-10, 1000.0, 24350.0, 48700.0, &c).unwrap();
        let oracle = 96485.33 * 1e-10 * (1000.0f64 * 24350.0 * 24350.0).sqrt();
        assert_relative_eq!(j0, oracle, max_relative = 1e-12);
        assert!(exchange_current_density(1e-10, 1000.0, 48701.0, 48700.0, &c).is_err());
    }

    #[test]
    fn butler_volmer_linear_regime() {
        let c = ctx();
        assert_eq!(butler_volmer(7.0, 0.0, &c), 0.0);
        let j0 = 3.0;
        for i in 1..=50 {
            let eta = 1e-4 * i as f64;
            let linear = j0 * FARADAY * eta / (GAS_CONSTANT * 293.15);
            let j = butler_volmer(j0, eta, &c);
            assert!((j - linear).abs() / linear < 0.01, "eta = {eta}");
        }
    }

    #[test]
    fn butler_volmer_guarded() {
        let c = ctx();
        let huge = butler_volmer(1.0, 50.0, &c);
        assert!(huge.is_finite() && huge > 0.0);
        assert_eq!(butler_volmer(1.0, -50.0, &c), -huge);
        // continuity across the guard
        let vt2 = 2.0 * c.thermal_voltage();
        let below = butler_volmer(2.0, 29.999_999 * vt2, &c);
        let above = butler_volmer(2.0, 30.000_001 * vt2, &c);
        assert!((above - below).abs() / below < 1e-5);
    }

    #[test]
    fn electrolyte_shape() {
        let spec = ElectrolyteSpec::default();
        let nominal = electrolyte_properties(1000.0, 293.15, &spec).unwrap();
        assert!(
            nominal.diffusivity > 0.0
                && nominal.conductivity > 0.0
                && nominal.activity_factor > 0.0
        );
        let dilute = electrolyte_properties(50.0, 293.15, &spec).unwrap();
        assert!(dilute.conductivity < nominal.conductivity);
        let mut prev = electrolyte_properties(10.0, 293.15, &spec).unwrap();
        for c in 11..=3000 {
            let p = electrolyte_properties(c as f64, 293.15, &spec).unwrap();
            assert!(
                p.diffusivity / prev.diffusivity < 10.0 && prev.diffusivity / p.diffusivity < 10.0
            );
            prev = p;
        }
        for c in 1..=4000 {
            let p = electrolyte_properties(c as f64, 293.15, &spec).unwrap();
            assert!(p.diffusivity > 0.0 && p.conductivity > 0.0, "c = {c}");
        }
        assert!(electrolyte_properties(0.0, 293.15, &spec).is_err());
    }

    #[test]
    fn conductivity_has_interior_maximum() {
        let spec = ElectrolyteSpec::default();
        let k = |c: f64| {
            electrolyte_properties(c, 293.15, &spec)
                .unwrap()
                .conductivity
        };
        let (best_c, _) = (1..400)
            .map(|i| i as f64 * 10.0)
            .map(|c| (c, k(c)))
            .fold((0.0, 0.0), |acc, p| if p.1 > acc.1 { p } else { acc });
        assert!(best_c > 300.0 && best_c < 2500.0, "peak at {best_c}");
    }
}
