use approx::assert_relative_eq;
use proptest::prelude::*;

use mdfn_core::config::{parse_config, RunConfig};
use mdfn_core::electrochem::{
    butler_volmer, effective_transport, ocp_lfp, ocp_nmc622, specific_surface_area,
    KineticsContext, OcpCurve,
};
use mdfn_core::protocol::{
    capacity_retention, integrated_normalized_current, normalized_current_profile,
};
use mdfn_core::studio::with_split;
use mdfn_core::{
    areal_capacity, build_mesh, initial_state, presets, simulate_cc, Direction, RunOptions,
    SolverConfig,
};

fn lfp_plateau() -> f64 {
    match OcpCurve::lfp() {
        OcpCurve::LfpPlateau { plateau, .. } => plateau,
        _ => unreachable!(),
    }
}

proptest! {
    #[test]
    fn lfp_ocp_is_antisymmetric_about_half(y in 1e-4f64..0.5) {
        let p = lfp_plateau();
        let sum = ocp_lfp(y).unwrap() + ocp_lfp(1.0 - y).unwrap();
        let scale = (ocp_lfp(y).unwrap() - p).abs().max(p);
        prop_assert!((sum - 2.0 * p).abs() <= 8.0 * f64::EPSILON * scale);
    }

    #[test]
    fn nmc_ocp_decreases_with_lithiation(a in 0.0f64..1.0, b in 0.0f64..1.0) {
        let (lo, hi) = OcpCurve::nmc622().window();
        let (x1, x2) = (lo + (hi - lo) * a.min(b), lo + (hi - lo) * a.max(b));
        prop_assume!(x2 - x1 > 1e-9);
        prop_assert!(ocp_nmc622(x1).unwrap() > ocp_nmc622(x2).unwrap());
    }

    #[test]
    fn butler_volmer_is_odd_and_signed(j0 in 1e-3f64..100.0, eta in -3.0f64..3.0) {
        let ctx = KineticsContext::default();
        let j = butler_volmer(j0, eta, &ctx);
        prop_assert_eq!(butler_volmer(j0, -eta, &ctx), -j);
        prop_assert!(j.is_finite());
        prop_assert_eq!(j.signum() == eta.signum() || j == 0.0, true);
    }

    #[test]
    fn butler_volmer_is_linear_near_equilibrium(j0 in 1e-2f64..100.0, eta in -1e-5f64..1e-5) {
        let ctx = KineticsContext::default();
        let linear = j0 * eta / ctx.thermal_voltage();
        prop_assert!((butler_volmer(j0, eta, &ctx) - linear).abs() <= 1e-8 * j0);
    }

    #[test]
    fn effective_transport_never_exceeds_bulk(bulk in 1e-12f64..10.0, eps in 0.01f64..1.0, b in 1.0f64..3.0) {
        let eff = effective_transport(bulk, eps, b);
        prop_assert!(eff > 0.0 && eff <= bulk);
        prop_assert!(eff <= effective_transport(bulk, eps, 1.0) * (1.0 + 1e-12));
    }

    #[test]
    fn surface_area_follows_solid_fraction(eps_e in 0.05f64..0.6, eps_cbd in 0.0f64..0.3, r in 1e-7f64..2e-5) {
        let a = specific_surface_area(eps_e, eps_cbd, r).unwrap();
        assert_relative_eq!(a, 3.0 * (1.0 - eps_e - eps_cbd) / r, max_relative = 1e-14);
    }

    #[test]
    fn split_preserves_total_and_fraction(total_um in 40.0f64..200.0, fraction in 0.05f64..0.95) {
        let d = with_split(&presets::default_bilayer(), total_um / 1e6, fraction).unwrap();
        assert_relative_eq!(d.electrode_thickness(), total_um / 1e6, max_relative = 1e-12);
        assert_relative_eq!(
            d.electrode(0).unwrap().thickness / d.electrode_thickness(),
            fraction,
            max_relative = 1e-12
        );
    }

    #[test]
    fn capacity_is_linear_in_time_and_current(i in 0.1f64..1000.0, t in 1.0f64..1e5, k in 0.1f64..10.0) {
        assert_relative_eq!(areal_capacity(k * i, t), k * areal_capacity(i, t), max_relative = 1e-12);
        assert_relative_eq!(areal_capacity(i, k * t), k * areal_capacity(i, t), max_relative = 1e-12);
    }

    #[test]
    fn retention_scales_with_achieved(achieved in 0.0f64..10.0, specific in 0.1f64..10.0) {
        let r = capacity_retention(achieved, specific).unwrap();
        assert_relative_eq!(r * specific, achieved, max_relative = 1e-12);
    }

    #[test]
    fn config_round_trips_through_toml(
        preset in prop::sample::select(presets::PRESET_NAMES.to_vec()),
        nodes in 5usize..80,
        shells in 4usize..40,
        floor in 0.1f64..10.0,
    ) {
        let mut cfg = RunConfig::from_preset(preset);
        cfg.solver.nodes_per_region = nodes;
        cfg.solver.radial_shells = shells;
        cfg.solver.depletion_floor = floor;
        let back = parse_config(&cfg.to_toml().unwrap()).unwrap();
        prop_assert_eq!(back, cfg);
    }
}

#[test]
fn retention_rejects_nonpositive_specific_capacity() {
    assert!(capacity_retention(1.0, 0.0).is_err());
}

#[test]
fn reaction_current_integrates_to_applied_current() {
    let design = presets::default_bilayer();
    let config = SolverConfig::default();
    let mesh = build_mesh(&design, &config).unwrap();
    let init = initial_state(&design, &mesh, Direction::Charge).unwrap();
    let run = simulate_cc(
        &design,
        &mesh,
        &config,
        &init,
        &RunOptions::charge(&design, 1.0).with_snapshots(5),
    )
    .unwrap();
    let i = design.current_density(1.0);
    for snap in run.snapshots.iter().skip(1) {
        let profile = normalized_current_profile(&design, &mesh, &snap.j, i).unwrap();
        let total = integrated_normalized_current(&design, &mesh, &profile);
        assert!(
            (total.abs() - 1.0).abs() < 1e-6,
            "t = {} s: {total}",
            snap.time
        );
    }
}

#[test]
fn reported_capacity_matches_integrated_current() {
    let design = presets::nmc_only_72um();
    let config = SolverConfig::default();
    let mesh = build_mesh(&design, &config).unwrap();
    let init = initial_state(&design, &mesh, Direction::Charge).unwrap();
    let run = simulate_cc(
        &design,
        &mesh,
        &config,
        &init,
        &RunOptions::charge(&design, 2.0).with_snapshots(0),
    )
    .unwrap();
    let integrated: f64 = run
        .samples
        .windows(2)
        .map(|w| {
            0.5 * (w[0].current + w[1].current).abs() / design.area * (w[1].time - w[0].time)
                / 36_000.0
        })
        .sum();
    assert_relative_eq!(integrated, run.capacity(), max_relative = 1e-9);
}
