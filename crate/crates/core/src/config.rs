//! Run configuration: a TOML document with `design`, `solver`, `protocol`, `study` and
//! `output` sections. Unknown keys are rejected everywhere.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::cell::{CellDesign, Direction};
use crate::error::{Error, Result};
use crate::fingerprint::short_fingerprint;
use crate::presets;
use crate::protocol::{Protocol, ProtocolStep};
use crate::sim::SolverConfig;
use crate::studio::{Adjust, CaseSpec, Field, FreeParameter, Override, Param, POROSITY_BOUNDS};

const SECTIONS: [&str; 5] = ["design", "solver", "protocol", "study", "output"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub design: DesignSection,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub protocol: Option<ProtocolSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub study: Option<StudySection>,
    #[serde(default)]
    pub output: OutputSection,
}

/// Either a named preset or a full design, optionally modified by overrides.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DesignSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub preset: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub custom: Option<CellDesign>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub overrides: Vec<Override>,
    /// Replaces the design's 1C current (mA).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub i_1c_ma: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProtocolSection {
    /// Named cycling protocol; mutually exclusive with `steps`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub preset: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub steps: Vec<ProtocolStep>,
    /// 1C current (mA) for this protocol.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub i_1c_ma: Option<f64>,
    /// Derive 1C from the design's 0.05C capacity before running.
    #[serde(default)]
    pub auto_i_1c: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StudyKind {
    Sensitivity,
    Thickness,
    Ratio,
    Mass,
    Benchmark,
    Optimize,
    CrateCurve,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StudySection {
    pub kind: StudyKind,
    #[serde(default = "default_study_rate")]
    pub c_rate: f64,
    /// Equalization target (mAh/cm^2).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target: Option<f64>,
    #[serde(default)]
    pub adjust: Adjust,
    /// Sensitivity cases.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub cases: Vec<CaseSpec>,
    /// Total thicknesses (µm) for thickness sweeps and the optimizer's thickness stage.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub totals_um: Vec<f64>,
    /// First-sub-layer fraction for thickness sweeps; the design's own when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fraction: Option<f64>,
    /// First-sub-layer fractions for ratio sweeps and the optimizer's ratio stage.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub fractions: Vec<f64>,
    /// Preset names for benchmark and mass studies.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub designs: Vec<String>,
    /// Optimizer free parameters.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub free: Vec<FreeParameter>,
    #[serde(default = "default_budget")]
    pub max_evaluations: usize,
    /// C-rates for `crate-curve`.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub rates: Vec<f64>,
}

fn standard_cases() -> Vec<CaseSpec> {
    let both = |field: Field, value: f64| {
        vec![
            Override::new(Param::new(0, field), value),
            Override::new(Param::new(1, field), value),
        ]
    };
    let case = |id: &str, overrides: Vec<Override>| CaseSpec {
        id: id.into(),
        overrides,
    };
    vec![
        case("cbd-0.05", both(Field::EpsCbd, 0.05)),
        case("cbd-0.20", both(Field::EpsCbd, 0.20)),
        case("eps-0.25", both(Field::EpsE, 0.25)),
        case("eps-0.35", both(Field::EpsE, 0.35)),
        case(
            "b1-1.5",
            vec![Override::new(Param::new(0, Field::Bruggeman), 1.5)],
        ),
        case(
            "b2-1.7",
            vec![Override::new(Param::new(1, Field::Bruggeman), 1.7)],
        ),
        case(
            "b2-1.9",
            vec![Override::new(Param::new(1, Field::Bruggeman), 1.9)],
        ),
    ]
}

fn default_study_rate() -> f64 {
    3.0
}

fn default_budget() -> usize {
    200
}

impl StudySection {
    pub fn new(kind: StudyKind) -> Self {
        Self {
            kind,
            c_rate: default_study_rate(),
            target: None,
            adjust: Adjust::Proportional,
            cases: Vec::new(),
            totals_um: Vec::new(),
            fraction: None,
            fractions: Vec::new(),
            designs: Vec::new(),
            free: Vec::new(),
            max_evaluations: default_budget(),
            rates: Vec::new(),
        }
    }

    /// A runnable study of the given kind with the standard grids, cases and design set.
    pub fn standard(kind: StudyKind) -> Self {
        let mut s = Self::new(kind);
        match kind {
            StudyKind::Sensitivity => s.cases = standard_cases(),
            StudyKind::Thickness => {
                s.totals_um = presets::THICKNESS_GRID_UM.to_vec();
                s.fraction = Some(0.5);
            }
            StudyKind::Ratio => {
                s.fractions = presets::ratio_fractions();
                s.target = Some(presets::RATIO_TARGET);
            }
            StudyKind::Mass => {
                s.designs = vec![
                    "default-bilayer".into(),
                    "candidate-bilayer".into(),
                    "optimal-bilayer".into(),
                ];
            }
            StudyKind::Benchmark => {
                s.designs = vec![
                    "default-bilayer".into(),
                    "nmc-only-72um".into(),
                    "lfp-only-113um".into(),
                ];
            }
            StudyKind::CrateCurve => s.rates = vec![0.5, 1.0, 2.0, 3.0, 4.0, 5.0],
            StudyKind::Optimize => {}
        }
        s
    }

    fn validate(&self) -> Result<()> {
        let need = |ok: bool, what: &str| {
            if ok {
                Ok(())
            } else {
                Err(Error::config(
                    format!("study `{:?}` requires {what}", self.kind).to_lowercase(),
                ))
            }
        };
        if !(self.c_rate > 0.0) {
            return Err(Error::config(format!(
                "study c_rate must be positive, got {}",
                self.c_rate
            )));
        }
        if let Some(t) = self.target {
            if !(t > 0.0) {
                return Err(Error::config(format!(
                    "study target must be positive, got {t}"
                )));
            }
        }
        match self.kind {
            StudyKind::Sensitivity => need(!self.cases.is_empty(), "`cases`"),
            StudyKind::Thickness => need(!self.totals_um.is_empty(), "`totals_um`"),
            StudyKind::Ratio => {
                need(!self.fractions.is_empty(), "`fractions`")?;
                need(self.target.is_some(), "`target`")
            }
            StudyKind::Mass | StudyKind::Benchmark => need(!self.designs.is_empty(), "`designs`"),
            StudyKind::CrateCurve => need(!self.rates.is_empty(), "`rates`"),
            StudyKind::Optimize => {
                let (lo, hi) = POROSITY_BOUNDS;
                for fp in &self.free {
                    if fp.candidates.is_empty() {
                        return Err(Error::config(format!(
                            "free parameter {} has no candidates",
                            fp.param
                        )));
                    }
                    if fp.param.field == Field::EpsE
                        && fp.candidates.iter().any(|v| !(lo..=hi).contains(v))
                    {
                        return Err(Error::constraint(
                            "porosity within search bounds",
                            format!("{} candidates outside [{lo}, {hi}]", fp.param),
                        ));
                    }
                }
                Ok(())
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    /// Output directory; falls back to the CLI flag or environment.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub directory: Option<PathBuf>,
    /// Evenly spaced field snapshots per constant-current step.
    #[serde(default = "default_snapshots")]
    pub snapshot_count: usize,
}

fn default_snapshots() -> usize {
    20
}

impl Default for OutputSection {
    fn default() -> Self {
        Self {
            directory: None,
            snapshot_count: default_snapshots(),
        }
    }
}

impl DesignSection {
    pub fn preset(name: &str) -> Self {
        Self {
            preset: Some(name.into()),
            ..Self::default()
        }
    }

    /// Builds and validates the design.
    pub fn resolve(&self) -> Result<CellDesign> {
        let mut d = match (&self.preset, &self.custom) {
            (Some(name), None) => presets::design(name)?,
            (None, Some(d)) => d.clone(),
            (Some(_), Some(_)) => {
                return Err(Error::config(
                    "design: `preset` and `custom` are mutually exclusive",
                ))
            }
            (None, None) => {
                return Err(Error::config(
                    "design: one of `preset` or `custom` is required",
                ))
            }
        };
        for o in &self.overrides {
            o.param.set(&mut d, o.value)?;
        }
        if let Some(ma) = self.i_1c_ma {
            d.i_1c = ma * 1e-3;
        }
        d.validate()?;
        Ok(d)
    }
}

impl ProtocolSection {
    pub fn resolve(&self, design: &CellDesign) -> Result<Protocol> {
        let mut p = match (&self.preset, self.steps.is_empty()) {
            (Some(name), true) => Protocol::preset(name, design)?,
            (None, false) => Protocol::new(self.steps.clone()),
            (Some(_), false) => {
                return Err(Error::config(
                    "protocol: `preset` and `steps` are mutually exclusive",
                ))
            }
            (None, true) => {
                return Err(Error::config(
                    "protocol: one of `preset` or `steps` is required",
                ))
            }
        };
        if self.auto_i_1c && self.i_1c_ma.is_some() {
            return Err(Error::config(
                "protocol: `auto_i_1c` and `i_1c_ma` are mutually exclusive",
            ));
        }
        p.i_1c = self.i_1c_ma.map(|ma| ma * 1e-3);
        p.validate()?;
        Ok(p)
    }
}

impl RunConfig {
    pub fn from_preset(name: &str) -> Self {
        Self {
            design: DesignSection::preset(name),
            solver: SolverConfig::default(),
            protocol: None,
            study: None,
            output: OutputSection::default(),
        }
    }

    /// Checks every section; nothing is simulated.
    pub fn validate(&self) -> Result<()> {
        let design = self.design.resolve()?;
        self.solver.validate()?;
        if let Some(p) = &self.protocol {
            p.resolve(&design)?;
        }
        if let Some(s) = &self.study {
            s.validate()?;
            for name in &s.designs {
                presets::design(name)?;
            }
        }
        Ok(())
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self)
            .map_err(|e| Error::config(format!("cannot serialize configuration: {e}")))
    }

    /// Short content hash recorded in every output file.
    pub fn hash(&self) -> String {
        short_fingerprint(self)
    }

    /// Protocol to run: the configured one, or a single charge (or discharge) at `c_rate`.
    pub fn protocol_or(
        &self,
        design: &CellDesign,
        c_rate: f64,
        direction: Direction,
    ) -> Result<Protocol> {
        match &self.protocol {
            Some(p) => p.resolve(design),
            None => {
                let step = match direction {
                    Direction::Charge => ProtocolStep::charge(c_rate, design.cutoff_upper),
                    Direction::Discharge => ProtocolStep::discharge(c_rate, design.cutoff_lower),
                };
                let p = Protocol::new(vec![step]);
                p.validate()?;
                Ok(p)
            }
        }
    }

    /// Whether 1C should be derived from the 0.05C capacity before running.
    pub fn auto_i_1c(&self) -> bool {
        self.protocol.as_ref().is_some_and(|p| p.auto_i_1c)
    }
}

/// Parses and validates a configuration document.
pub fn parse_config(text: &str) -> Result<RunConfig> {
    let table: toml::Table = text
        .parse()
        .map_err(|e: toml::de::Error| Error::config(e.to_string()))?;
    if !table.contains_key("design") {
        let present: Vec<&str> = table.keys().map(String::as_str).collect();
        return Err(Error::config(format!(
            "missing required section [design] (sections: {}; found: [{}])",
            SECTIONS.join(", "),
            present.join(", ")
        )));
    }
    let config: RunConfig = toml::from_str(text).map_err(|e| Error::config(e.to_string()))?;
    config.validate()?;
    Ok(config)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::studio::{Field, Param};

    #[test]
    fn empty_document_names_required_section() {
        let e = parse_config("").unwrap_err().to_string();
        assert!(e.contains("[design]"), "{e}");
    }

    #[test]
    fn unknown_keys_rejected_with_location() {
        let e = parse_config("[design]\npreset = \"default-bilayer\"\ncolour = 3\n")
            .unwrap_err()
            .to_string();
        assert!(e.contains("colour"), "{e}");
        assert!(e.contains("line 3"), "{e}");
        assert!(
            parse_config("[design]\npreset = \"default-bilayer\"\n[solver]\nnodes = 3\n").is_err()
        );
    }

    #[test]
    fn optimal_preset_parameters() {
        let c = parse_config("[design]\npreset = \"optimal-bilayer\"\n").unwrap();
        let d = c.design.resolve().unwrap();
        let (a, b) = (d.electrode(0).unwrap(), d.electrode(1).unwrap());
        assert_eq!((a.thickness, b.thickness), (47e-6, 71e-6));
        assert_eq!((a.eps_e, b.eps_e), (0.30, 0.30));
        assert_eq!((a.eps_cbd, b.eps_cbd), (0.04, 0.07));
        assert_eq!((a.bruggeman, b.bruggeman), (1.6, 1.8));
    }

    #[test]
    fn default_preset_matches_base_table() {
        let d = parse_config("[design]\npreset = \"default-bilayer\"\n")
            .unwrap()
            .design
            .resolve()
            .unwrap();
        assert_eq!(d.separator().thickness, 16e-6);
        assert_eq!(d.separator().eps_e, 0.45);
        assert_eq!(d.separator().bruggeman, 1.5);
        let (a, b) = (d.electrode(0).unwrap(), d.electrode(1).unwrap());
        assert_eq!((a.thickness, b.thickness), (44e-6, 44e-6));
        assert_eq!((a.eps_e, b.eps_e), (0.31, 0.263));
        assert_eq!((a.eps_cbd, b.eps_cbd), (0.11, 0.11));
        assert_eq!((a.bruggeman, b.bruggeman), (1.6, 2.1));
        assert_eq!(d.area, 1.54e-4);
        assert_eq!(d.contact_resistance, 1.5e-3);
        assert_eq!(d.electrolyte.c_e0, 1000.0);
        assert_eq!(d.electrolyte.t_plus, 0.37);
    }

    #[test]
    fn physical_violations_name_the_constraint() {
        let text = "[design]\npreset = \"default-bilayer\"\n[[design.overrides]]\nvalue = 0.95\n[design.overrides.param]\nlayer = 0\nfield = \"eps_e\"\n";
        match parse_config(text) {
            Err(Error::Constraint { constraint, .. }) => {
                assert!(constraint.contains("eps_e"), "{constraint}")
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn sections_are_validated() {
        let bad_study = "[design]\npreset = \"default-bilayer\"\n[study]\nkind = \"ratio\"\nfractions = [0.4]\n";
        assert!(parse_config(bad_study)
            .unwrap_err()
            .to_string()
            .contains("target"));
        let both = "[design]\npreset = \"default-bilayer\"\n[protocol]\npreset = \"3c-x4\"\nsteps = [{ mode = \"rest\", time_limit = 5.0 }]\n";
        assert!(parse_config(both).is_err());
        let no_design = "[design]\n";
        assert!(parse_config(no_design).is_err());
        let unknown = "[design]\npreset = \"nope\"\n";
        assert!(parse_config(unknown).is_err());
    }

    #[test]
    fn full_roundtrip() {
        let mut c = RunConfig::from_preset("default-bilayer");
        c.design.custom = Some(presets::optimal_bilayer());
        c.design.preset = None;
        c.design
            .overrides
            .push(Override::new(Param::new(1, Field::Bruggeman), 1.7));
        c.protocol = Some(ProtocolSection {
            preset: None,
            steps: vec![
                ProtocolStep::charge(3.0, 4.2),
                ProtocolStep::rest(60.0),
                ProtocolStep::discharge(0.1, 3.0),
            ],
            i_1c_ma: Some(7.25),
            auto_i_1c: false,
        });
        let mut s = StudySection::new(StudyKind::Optimize);
        s.free.push(FreeParameter {
            param: Param::new(0, Field::EpsCbd),
            candidates: vec![0.04, 0.08],
        });
        s.totals_um = vec![104.0, 112.0];
        s.fractions = vec![0.4, 0.5];
        s.target = Some(4.71);
        c.study = Some(s);
        c.output.directory = Some("out".into());
        c.validate().unwrap();
        let text = c.to_toml().unwrap();
        let back = parse_config(&text).unwrap();
        assert_eq!(back, c);
        assert_eq!(back.hash(), c.hash());
    }

    #[test]
    fn default_protocol_follows_direction() {
        let c = RunConfig::from_preset("default-bilayer");
        let d = c.design.resolve().unwrap();
        let p = c.protocol_or(&d, 2.0, Direction::Discharge).unwrap();
        assert_eq!(p.steps[0], ProtocolStep::discharge(2.0, 3.0));
    }
}
