use std::fs;
use std::path::PathBuf;

use rayon::prelude::*;
use serde::Serialize;

use mdfn_core::config::{DesignSection, ProtocolSection, StudyKind, StudySection};
use mdfn_core::output::{step_summaries, BundleWriter};
use mdfn_core::protocol::{run_protocol_from, DesignMetrics, SimulationResult, StepMode};
use mdfn_core::sim::Termination;
use mdfn_core::studio::{DesignSpace, SweepCase, SweepRow, SweepTable};
use mdfn_core::{
    build_mesh, crate_curve, initial_state, parse_config, presets, CellDesign, Direction, Error,
    OptimizeOptions, Protocol, RunConfig, Studio,
};

use crate::{Cli, Command, Failure, GlobalArgs, Status, SweepKind, DEFAULT_OUT_DIR, OUT_DIR_ENV};

const DEFAULT_C_RATE: f64 = 3.0;

pub(crate) fn dispatch(cli: &Cli) -> Result<Status, Failure> {
    let g = &cli.global;
    match &cli.command {
        Command::Simulate => simulate(g),
        Command::Sweep { kind } => sweep(g, *kind),
        Command::Optimize { max_evaluations } => optimize(g, *max_evaluations),
        Command::Benchmark { designs, target } => benchmark(g, designs, *target),
        Command::Cycle { protocol } => cycle(g, protocol),
        Command::Check => check(g),
        Command::Presets => {
            println!("designs:");
            for name in presets::PRESET_NAMES {
                println!("  {name}");
            }
            println!("protocols:");
            for name in Protocol::PRESETS {
                println!("  {name}");
            }
            Ok(Status::Ok)
        }
    }
}

/// Reads the configuration (or starts from `default_preset`) and applies the global flags.
fn load_config(g: &GlobalArgs, default_preset: &str) -> Result<RunConfig, Failure> {
    let mut cfg = match &g.config {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|e| {
                Failure::new(Status::Io, format!("cannot read {}: {e}", path.display()))
            })?;
            parse_config(&text)
                .map_err(|e| Failure::new(Status::of(&e), format!("{}: {e}", path.display())))?
        }
        None => RunConfig::from_preset(default_preset),
    };
    if let Some(name) = &g.preset {
        cfg.design = DesignSection::preset(name);
    }
    if let Some(n) = g.snapshot_count {
        cfg.output.snapshot_count = n;
    }
    if let Some(r) = g.c_rate {
        if !(r > 0.0 && r.is_finite()) {
            return Err(Failure::new(
                Status::Usage,
                format!("--c-rate must be positive, got {r}"),
            ));
        }
    }
    cfg.validate()?;
    Ok(cfg)
}

fn out_dir(g: &GlobalArgs, cfg: &RunConfig) -> PathBuf {
    g.out
        .clone()
        .or_else(|| cfg.output.directory.clone())
        .or_else(|| std::env::var_os(OUT_DIR_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT_DIR))
}

fn resolve_design(cfg: &RunConfig) -> Result<CellDesign, Failure> {
    let mut design = cfg.design.resolve()?;
    if cfg.auto_i_1c() {
        let specific = mdfn_core::specific_capacity(&design, &cfg.solver)?;
        design.set_one_c_from_capacity(specific);
    }
    Ok(design)
}

fn writer(g: &GlobalArgs, cfg: &RunConfig) -> Result<BundleWriter, Failure> {
    let mut w = BundleWriter::create(out_dir(g, cfg), cfg.hash())?;
    let text = format!("# config_hash = \"{}\"\n{}", cfg.hash(), cfg.to_toml()?);
    w.write_text("config.toml", &text)?;
    Ok(w)
}

fn finish(w: &BundleWriter, status: Status) -> Status {
    println!(
        "wrote {} files to {} (config {})",
        w.written().len(),
        w.dir().display(),
        w.hash()
    );
    status
}

fn diagnostics_log(result: &SimulationResult) -> String {
    let mut log = String::new();
    for s in &result.steps {
        let d = &s.run.diagnostics;
        log += &format!(
            "step {} {:?} {}C: {:?} after {:.1} s, {} steps ({} rejected), {} Newton iterations, min c_e {:.3e} mol/m^3 at x = {:.2} um, peak |phi_e| {:.4} V",
            s.index,
            s.mode,
            s.c_rate,
            s.run.termination,
            s.run.duration(),
            d.steps,
            d.rejected_steps,
            d.newton_iterations,
            d.min_c_e,
            d.min_c_e_x * 1e6,
            d.peak_phi_e
        );
        if let Some(ev) = d.depletion {
            log += &format!(
                "; electrolyte depleted at x = {:.2} um, t = {:.1} s",
                ev.x * 1e6,
                ev.time
            );
        }
        log.push('\n');
    }
    if let Some(f) = &result.failure {
        log += &format!("step {} failed: {}\n", f.step, f.message);
    }
    log
}

// ---------------------------------------------------------------------------
// simulate / cycle
// ---------------------------------------------------------------------------

#[derive(Debug, Serialize)]
struct RunSummary {
    design: String,
    steps: usize,
    c_rate: f64,
    capacity_mah_cm2: f64,
    specific_capacity_mah_cm2: Option<f64>,
    retention_percent: Option<f64>,
    time_to_cutoff_min: Option<f64>,
    soc_at_cutoff: Option<f64>,
    energy_density_wh_g: Option<f64>,
    termination: Option<Termination>,
    depleted: bool,
    depletion_x_um: Option<f64>,
    status: &'static str,
    error: Option<String>,
}

/// Runs the configured protocol and writes series, fields, probes and summaries.
fn run_and_write(
    g: &GlobalArgs,
    cfg: &RunConfig,
    design: &CellDesign,
    protocol: &Protocol,
) -> Result<(SimulationResult, BundleWriter), Failure> {
    let mesh = build_mesh(design, &cfg.solver)?;
    let init = initial_state(design, &mesh, protocol.initial_direction())?;
    let result = run_protocol_from(
        design,
        &mesh,
        protocol,
        &cfg.solver,
        init,
        cfg.output.snapshot_count,
    )?;
    let mut w = writer(g, cfg)?;
    w.write_series("series.csv", &result)?;
    w.write_fields("fields.csv", "probes.csv", design, &mesh, &result)?;
    w.write_table("steps.csv", &step_summaries(&result))?;
    w.write_text("diagnostics.log", &diagnostics_log(&result))?;
    Ok((result, w))
}

fn simulate(g: &GlobalArgs) -> Result<Status, Failure> {
    let mut cfg = load_config(g, "default-bilayer")?;
    let design = resolve_design(&cfg)?;
    let direction: Direction = g.direction.map_or(Direction::Charge, Into::into);
    let flags_set_step = g.c_rate.is_some() || g.direction.is_some();
    let protocol = if flags_set_step || cfg.protocol.is_none() {
        let c_rate = g.c_rate.unwrap_or(DEFAULT_C_RATE);
        let mut p = cfg.clone();
        p.protocol = None;
        p.protocol_or(&design, c_rate, direction)?
    } else {
        cfg.protocol_or(&design, DEFAULT_C_RATE, direction)?
    };
    // The hash covers the protocol actually run.
    cfg.protocol = Some(ProtocolSection {
        preset: None,
        steps: protocol.steps.clone(),
        i_1c_ma: protocol.i_1c.map(|a| a * 1e3),
        auto_i_1c: cfg.auto_i_1c(),
    });
    let (result, mut w) = run_and_write(g, &cfg, &design, &protocol)?;

    let single_charge = protocol.steps.len() == 1 && protocol.steps[0].mode == StepMode::CcCharge;
    let last = result.steps.last();
    let mut summary = RunSummary {
        design: design.name.clone(),
        steps: result.steps.len(),
        c_rate: protocol.steps[0].c_rate,
        capacity_mah_cm2: last.map_or(0.0, |s| s.capacity()),
        specific_capacity_mah_cm2: None,
        retention_percent: None,
        time_to_cutoff_min: None,
        soc_at_cutoff: None,
        energy_density_wh_g: None,
        termination: last.map(|s| s.run.termination),
        depleted: result.first_depletion().is_some(),
        depletion_x_um: result.first_depletion().map(|d| d.x * 1e6),
        status: "ok",
        error: None,
    };
    let mut status = Status::Ok;
    let mut metrics: Option<DesignMetrics> = None;
    if let Some(f) = &result.failure {
        status = Status::Solver;
        summary.status = Status::Solver.category();
        summary.error = Some(f.message.clone());
    } else if single_charge {
        let run = &result.steps[0].run;
        let specific = if (protocol.steps[0].c_rate - mdfn_core::protocol::SPECIFIC_CAPACITY_RATE)
            .abs()
            < 1e-12
        {
            Ok(run.capacity())
        } else {
            mdfn_core::specific_capacity(&design, &cfg.solver)
        };
        match specific
            .and_then(|s| DesignMetrics::from_runs(&design, s, protocol.steps[0].c_rate, run))
        {
            Ok(m) => {
                summary.specific_capacity_mah_cm2 = Some(m.specific_capacity);
                summary.retention_percent = Some(100.0 * m.retention);
                summary.time_to_cutoff_min = Some(m.time_to_cutoff);
                summary.soc_at_cutoff = Some(m.soc_at_cutoff);
                summary.energy_density_wh_g = Some(m.energy_density);
                metrics = Some(m);
            }
            Err(e) => {
                status = Status::of(&e);
                summary.status = status.category();
                summary.error = Some(e.to_string());
            }
        }
    }
    w.write_table("summary.csv", std::slice::from_ref(&summary))?;
    w.write_summary(
        "summary.json",
        &serde_json::json!({
            "command": "simulate",
            "run": summary,
            "metrics": metrics,
            "steps": step_summaries(&result),
            "failure": result.failure,
        }),
    )?;
    if let Some(t) = summary.termination.filter(|_| result.failure.is_none()) {
        println!(
            "{}: {:.4} mAh/cm^2 ({t:?})",
            design.name, summary.capacity_mah_cm2
        );
    }
    if let Some(r) = summary.retention_percent {
        println!(
            "retention {r:.1}% of {:.4} mAh/cm^2",
            summary.specific_capacity_mah_cm2.unwrap_or(f64::NAN)
        );
    }
    finish(&w, status);
    match &result.failure {
        Some(f) => Err(Failure::new(Status::Solver, f.message.clone())),
        None => Ok(status),
    }
}

fn cycle(g: &GlobalArgs, name: &str) -> Result<Status, Failure> {
    let mut cfg = load_config(g, "default-bilayer")?;
    let design = resolve_design(&cfg)?;
    let protocol = match &cfg.protocol {
        Some(p) => p.resolve(&design)?,
        None => {
            let p = Protocol::preset(name, &design)?;
            cfg.protocol = Some(ProtocolSection {
                preset: Some(name.into()),
                steps: Vec::new(),
                i_1c_ma: None,
                auto_i_1c: false,
            });
            p
        }
    };
    let (result, mut w) = run_and_write(g, &cfg, &design, &protocol)?;
    let charges = result.charge_capacities();
    w.write_summary(
        "summary.json",
        &serde_json::json!({
            "command": "cycle",
            "design": design.name,
            "charge_capacities_mah_cm2": charges,
            "discharge_capacities_mah_cm2": result.discharge_capacities(),
            "steps": step_summaries(&result),
            "failure": result.failure,
        }),
    )?;
    let listed: Vec<String> = charges.iter().map(|c| format!("{c:.3}")).collect();
    println!(
        "{}: charge capacities {} mAh/cm^2",
        design.name,
        listed.join(", ")
    );
    finish(&w, Status::Ok);
    match &result.failure {
        Some(f) => Err(Failure::new(Status::Solver, f.message.clone())),
        None => Ok(Status::Ok),
    }
}

// ---------------------------------------------------------------------------
// sweep
// ---------------------------------------------------------------------------

#[derive(Debug, Serialize)]
struct CaseRow {
    id: String,
    overrides: String,
    layer_um: Vec<f64>,
    i_1c_ma: f64,
    specific_capacity_mah_cm2: Option<f64>,
    achieved_mah_cm2: Option<f64>,
    retention_percent: Option<f64>,
    time_to_cutoff_min: Option<f64>,
    termination: Option<Termination>,
    status: &'static str,
    error: Option<String>,
}

impl CaseRow {
    fn of(c: &SweepCase) -> (Self, Status) {
        let status = match &c.error {
            None => Status::Ok,
            Some(_) if c.metrics.is_none() && c.specific_capacity.is_none() => Status::Infeasible,
            Some(_) => Status::Solver,
        };
        let m = c.metrics.as_ref();
        let row = Self {
            id: c.id.clone(),
            overrides: c
                .overrides
                .iter()
                .map(|o| o.to_string())
                .collect::<Vec<_>>()
                .join(" "),
            layer_um: c.layer_thicknesses_um(),
            i_1c_ma: c.i_1c * 1e3,
            specific_capacity_mah_cm2: c.specific_capacity,
            achieved_mah_cm2: m.map(|m| m.achieved_capacity),
            retention_percent: m.map(|m| 100.0 * m.retention),
            time_to_cutoff_min: m.map(|m| m.time_to_cutoff),
            termination: m.map(|m| m.termination),
            status: status.category(),
            error: c.error.clone(),
        };
        (row, status)
    }
}

#[derive(Debug, Serialize)]
struct TableRow<'a> {
    #[serde(flatten)]
    row: &'a SweepRow,
    best: bool,
    status: &'static str,
}

fn row_status(r: &SweepRow) -> Status {
    match (&r.error, r.feasible) {
        (None, _) => Status::Ok,
        (Some(_), false) => Status::Infeasible,
        (Some(_), true) => Status::Solver,
    }
}

fn write_sweep_table(w: &mut BundleWriter, table: &SweepTable) -> Result<Status, Failure> {
    let mut status = Status::Ok;
    let rows: Vec<TableRow> = table
        .rows
        .iter()
        .enumerate()
        .map(|(k, row)| {
            let s = row_status(row);
            status = status.worst(s);
            TableRow {
                row,
                best: table.best == Some(k),
                status: s.category(),
            }
        })
        .collect();
    w.write_table("sweep.csv", &rows)?;
    Ok(status)
}

fn sweep(g: &GlobalArgs, kind: Option<SweepKind>) -> Result<Status, Failure> {
    let default_preset = match kind {
        Some(SweepKind::Thickness | SweepKind::Ratio) => "candidate-bilayer",
        _ => "default-bilayer",
    };
    let mut cfg = load_config(g, default_preset)?;
    let mut study = match (&cfg.study, kind) {
        (Some(s), None) => s.clone(),
        (Some(s), Some(k)) if s.kind == StudyKind::from(k) => s.clone(),
        (_, Some(k)) => StudySection::standard(k.into()),
        (None, None) => {
            return Err(Failure::new(
                Status::Usage,
                "sweep needs --kind or a [study] section in the configuration",
            ));
        }
    };
    if matches!(study.kind, StudyKind::Optimize | StudyKind::Benchmark) {
        return Err(Failure::new(
            Status::Usage,
            format!("study kind {:?} is run by its own subcommand", study.kind).to_lowercase(),
        ));
    }
    if let Some(r) = g.c_rate {
        study.c_rate = r;
    }
    cfg.study = Some(study.clone());
    cfg.validate()?;
    let design = resolve_design(&cfg)?;
    let studio = Studio::new(cfg.solver.clone());
    let mut w = writer(g, &cfg)?;
    let (status, best, detail) = match study.kind {
        StudyKind::Sensitivity => {
            let cases = studio.sensitivity_sweep(
                &design,
                &study.cases,
                study.target,
                study.adjust,
                study.c_rate,
            );
            let mut status = Status::Ok;
            let rows: Vec<CaseRow> = cases
                .iter()
                .map(|c| {
                    let (row, s) = CaseRow::of(c);
                    status = status.worst(s);
                    row
                })
                .collect();
            w.write_table("sweep.csv", &rows)?;
            let best = cases
                .first()
                .filter(|c| c.metrics.is_some())
                .map(|c| c.id.clone());
            (
                status,
                best,
                serde_json::to_value(&rows).map_err(|e| Failure::new(Status::Io, e.to_string()))?,
            )
        }
        StudyKind::Thickness | StudyKind::Ratio | StudyKind::Mass => {
            let table = match study.kind {
                StudyKind::Thickness => {
                    let fraction = study.fraction.unwrap_or_else(|| {
                        design.electrode(0).map_or(1.0, |l| l.thickness)
                            / design.electrode_thickness()
                    });
                    studio.thickness_sweep(&design, &study.totals_um, fraction, study.c_rate)?
                }
                StudyKind::Ratio => {
                    let target = study.target.expect("validated");
                    studio.ratio_sweep(&design, &study.fractions, target, study.c_rate)?
                }
                _ => {
                    let designs = study
                        .designs
                        .iter()
                        .map(|n| presets::design(n))
                        .collect::<Result<Vec<_>, Error>>()?;
                    studio.mass_sweep(&designs, study.c_rate)?
                }
            };
            let status = write_sweep_table(&mut w, &table)?;
            let best = table.best.map(|k| {
                let r = &table.rows[k];
                format!("total {:.2} um, fraction {:.4}", r.total_um, r.fraction)
            });
            (
                status,
                best,
                serde_json::to_value(&table)
                    .map_err(|e| Failure::new(Status::Io, e.to_string()))?,
            )
        }
        StudyKind::CrateCurve => {
            let normalize = study
                .rates
                .iter()
                .any(|r| (r - mdfn_core::protocol::CRATE_ANCHOR).abs() < 1e-12);
            let points = crate_curve(&design, &study.rates, &cfg.solver, normalize)?;
            w.write_table("sweep.csv", &points)?;
            (
                Status::Ok,
                None,
                serde_json::to_value(&points)
                    .map_err(|e| Failure::new(Status::Io, e.to_string()))?,
            )
        }
        StudyKind::Optimize | StudyKind::Benchmark => unreachable!("rejected above"),
    };
    w.write_summary(
        "summary.json",
        &serde_json::json!({
            "command": "sweep",
            "kind": study.kind,
            "design": design.name,
            "c_rate": study.c_rate,
            "best": best,
            "status": status.category(),
            "rows": detail,
        }),
    )?;
    if let Some(b) = &best {
        println!("best: {b}");
    }
    Ok(finish(&w, status))
}

// ---------------------------------------------------------------------------
// optimize
// ---------------------------------------------------------------------------

#[derive(Debug, Serialize)]
struct LayerRow {
    layer: usize,
    name: String,
    thickness_um: f64,
    eps_e: f64,
    eps_cbd: f64,
    bruggeman: f64,
}

fn layer_rows(d: &CellDesign) -> Vec<LayerRow> {
    d.electrode_layers()
        .enumerate()
        .map(|(k, l)| LayerRow {
            layer: k,
            name: l.name.clone(),
            thickness_um: l.thickness * 1e6,
            eps_e: l.eps_e,
            eps_cbd: l.eps_cbd,
            bruggeman: l.bruggeman,
        })
        .collect()
}

fn optimize(g: &GlobalArgs, max_evaluations: Option<usize>) -> Result<Status, Failure> {
    let mut cfg = load_config(g, "default-bilayer")?;
    let mut study = match &cfg.study {
        Some(s) if s.kind == StudyKind::Optimize => s.clone(),
        Some(s) => {
            return Err(Failure::new(
                Status::Config,
                format!(
                    "optimize needs a study of kind optimize, found {:?}",
                    s.kind
                )
                .to_lowercase(),
            ))
        }
        None => StudySection::standard(StudyKind::Optimize),
    };
    if let Some(r) = g.c_rate {
        study.c_rate = r;
    }
    if let Some(n) = max_evaluations {
        study.max_evaluations = n;
    }
    cfg.study = Some(study.clone());
    cfg.validate()?;
    let design = resolve_design(&cfg)?;
    let mut space = DesignSpace::standard(design);
    if !study.free.is_empty() {
        space.free = study.free.clone();
    }
    if !study.totals_um.is_empty() {
        space.totals_um = study.totals_um.clone();
    }
    if !study.fractions.is_empty() {
        space.fractions = study.fractions.clone();
    }
    space.target = study.target;
    space.adjust = study.adjust;
    let options = OptimizeOptions {
        c_rate: study.c_rate,
        max_evaluations: study.max_evaluations,
    };
    let studio = Studio::new(cfg.solver.clone());
    let result = studio.optimize(&space, &options)?;
    let mut w = writer(g, &cfg)?;
    w.write_table("trace.csv", &result.trace)?;
    w.write_table("design.csv", &layer_rows(&result.design))?;
    w.write_summary(
        "summary.json",
        &serde_json::json!({
            "command": "optimize",
            "objective_retention": result.objective,
            "layers": layer_rows(&result.design),
            "i_1c_ma": result.design.i_1c * 1e3,
            "metrics": result.metrics,
            "warnings": result.warnings,
            "design": result.design,
        }),
    )?;
    for l in layer_rows(&result.design) {
        println!(
            "{} {}: {:.2} um, eps_e {:.3}, eps_cbd {:.3}, b {:.2}",
            l.layer, l.name, l.thickness_um, l.eps_e, l.eps_cbd, l.bruggeman
        );
    }
    println!(
        "retention {:.1}% at {}C",
        100.0 * result.objective,
        study.c_rate
    );
    for warning in &result.warnings {
        eprintln!("mdfn: warning: {warning}");
    }
    Ok(finish(&w, Status::Ok))
}

// ---------------------------------------------------------------------------
// benchmark
// ---------------------------------------------------------------------------

#[derive(Debug, Serialize)]
struct BenchmarkRow {
    design: String,
    layer_um: Vec<f64>,
    i_1c_ma: f64,
    mass_mg: f64,
    specific_capacity_mah_cm2: Option<f64>,
    achieved_mah_cm2: Option<f64>,
    retention_percent: Option<f64>,
    time_to_cutoff_min: Option<f64>,
    soc_at_cutoff: Option<f64>,
    energy_density_wh_g: Option<f64>,
    termination: Option<Termination>,
    depleted: Option<bool>,
    status: &'static str,
    error: Option<String>,
}

fn benchmark(g: &GlobalArgs, names: &[String], target: Option<f64>) -> Result<Status, Failure> {
    let mut cfg = load_config(g, "default-bilayer")?;
    let mut study = match &cfg.study {
        Some(s) if s.kind == StudyKind::Benchmark => s.clone(),
        _ => StudySection::standard(StudyKind::Benchmark),
    };
    if !names.is_empty() {
        study.designs = names.to_vec();
    }
    if g.preset.is_some() || g.config.is_some() && cfg.study.is_none() {
        // The selected design leads the set.
        let lead = cfg.design.resolve()?.name;
        study.designs.retain(|n| *n != lead);
        study.designs.insert(0, lead);
    }
    if let Some(t) = target {
        study.target = Some(t);
    }
    if let Some(r) = g.c_rate {
        study.c_rate = r;
    }
    cfg.study = Some(study.clone());
    cfg.validate()?;
    let designs = study
        .designs
        .iter()
        .map(|n| presets::design(n))
        .collect::<Result<Vec<_>, Error>>()?;
    let studio = Studio::new(cfg.solver.clone());
    let target = match study.target {
        Some(t) => t,
        None => studio.specific_capacity(&designs[0])?,
    };
    let outcomes: Vec<_> = designs
        .par_iter()
        .map(|d| studio.evaluate(d, Some(target), study.adjust, study.c_rate))
        .collect();
    let mut status = Status::Ok;
    let rows: Vec<BenchmarkRow> = designs
        .iter()
        .zip(outcomes)
        .map(|(d, r)| match r {
            Ok((e, m)) => BenchmarkRow {
                design: d.name.clone(),
                layer_um: e.electrode_layers().map(|l| l.thickness * 1e6).collect(),
                i_1c_ma: e.i_1c * 1e3,
                mass_mg: e.cathode_mass() * 1e3,
                specific_capacity_mah_cm2: Some(m.specific_capacity),
                achieved_mah_cm2: Some(m.achieved_capacity),
                retention_percent: Some(100.0 * m.retention),
                time_to_cutoff_min: Some(m.time_to_cutoff),
                soc_at_cutoff: Some(m.soc_at_cutoff),
                energy_density_wh_g: Some(m.energy_density),
                termination: Some(m.termination),
                depleted: Some(m.depletion.is_some()),
                status: "ok",
                error: None,
            },
            Err(e) => {
                let s = Status::of(&e);
                status = status.worst(s);
                BenchmarkRow {
                    design: d.name.clone(),
                    layer_um: d.electrode_layers().map(|l| l.thickness * 1e6).collect(),
                    i_1c_ma: d.i_1c * 1e3,
                    mass_mg: d.cathode_mass() * 1e3,
                    specific_capacity_mah_cm2: None,
                    achieved_mah_cm2: None,
                    retention_percent: None,
                    time_to_cutoff_min: None,
                    soc_at_cutoff: None,
                    energy_density_wh_g: None,
                    termination: None,
                    depleted: None,
                    status: s.category(),
                    error: Some(e.to_string()),
                }
            }
        })
        .collect();
    let mut w = writer(g, &cfg)?;
    w.write_table("benchmark.csv", &rows)?;
    w.write_summary(
        "summary.json",
        &serde_json::json!({
            "command": "benchmark",
            "target_mah_cm2": target,
            "c_rate": study.c_rate,
            "status": status.category(),
            "rows": rows,
        }),
    )?;
    for r in &rows {
        match (r.achieved_mah_cm2, r.retention_percent) {
            (Some(a), Some(p)) => println!("{:<20} {a:.3} mAh/cm^2  {p:.1}%", r.design),
            _ => println!(
                "{:<20} failed: {}",
                r.design,
                r.error.as_deref().unwrap_or("")
            ),
        }
    }
    Ok(finish(&w, status))
}

// ---------------------------------------------------------------------------
// check
// ---------------------------------------------------------------------------

fn check(g: &GlobalArgs) -> Result<Status, Failure> {
    let cfg = load_config(g, "default-bilayer")?;
    print!("# config_hash = \"{}\"\n{}", cfg.hash(), cfg.to_toml()?);
    Ok(Status::Ok)
}
