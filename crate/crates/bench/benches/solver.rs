use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use mdfn_core::electrochem::{butler_volmer, electrolyte_properties, ocp_lfp, ocp_nmc622};
use mdfn_core::sim::Stepper;
use mdfn_core::{
    build_mesh, initial_state, presets, simulate_cc, Direction, KineticsContext, RunOptions,
    SolverConfig,
};

fn electrochem(c: &mut Criterion) {
    let ctx = KineticsContext::default();
    let spec = presets::electrolyte();
    c.bench_function("ocp_nmc622", |b| b.iter(|| ocp_nmc622(black_box(0.55))));
    c.bench_function("ocp_lfp", |b| b.iter(|| ocp_lfp(black_box(0.42))));
    c.bench_function("butler_volmer", |b| {
        b.iter(|| butler_volmer(black_box(2.1), black_box(0.03), &ctx))
    });
    c.bench_function("electrolyte_properties", |b| {
        b.iter(|| electrolyte_properties(black_box(870.0), black_box(298.15), &spec))
    });
}

fn implicit_step(c: &mut Criterion) {
    let design = presets::default_bilayer();
    let config = SolverConfig::default();
    let mesh = build_mesh(&design, &config).unwrap();
    let init = initial_state(&design, &mesh, Direction::Charge).unwrap();
    let current = design.current_density(3.0);
    let mut stepper = Stepper::new(&design, &mesh, &config).unwrap();
    let (warm, _) = stepper.step(&init, current, 1.0).unwrap();
    c.bench_function("step_3c_default_mesh", |b| {
        b.iter(|| stepper.step(black_box(&warm), current, 2.0).unwrap())
    });
}

fn full_run(c: &mut Criterion) {
    let design = presets::default_bilayer();
    let config = SolverConfig::default();
    let mesh = build_mesh(&design, &config).unwrap();
    let init = initial_state(&design, &mesh, Direction::Charge).unwrap();
    let options = RunOptions::charge(&design, 3.0).with_snapshots(0);
    let mut group = c.benchmark_group("charge");
    group.sample_size(10);
    group.bench_function("default_bilayer_3c", |b| {
        b.iter(|| {
            simulate_cc(&design, &mesh, &config, &init, &options)
                .unwrap()
                .capacity()
        })
    });
    group.finish();
}

criterion_group!(benches, electrochem, implicit_step, full_run);
criterion_main!(benches);
