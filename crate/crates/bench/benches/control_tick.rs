use criterion::{criterion_group, criterion_main, Criterion};
use laparo_bench::busy_home;
use laparo_core::controller::{lateral_task_jacobian, null_space_projector};
use laparo_core::rcm::{rcm_jacobian_from, ScopeGeometry};
use std::hint::black_box;

fn control_tick(c: &mut Criterion) {
    let (sim, inputs) = busy_home();
    let kin = sim.model.kinematics(&sim.state.joints.positions).unwrap();
    let sensors = {
        let (mut s, i) = busy_home();
        s.step(&i).unwrap().sensors
    };

    c.bench_function("controller_tick", |b| {
        let mut rcm = sim.state.rcm;
        b.iter(|| {
            sim.controller
                .tick(
                    &sim.model,
                    &kin,
                    &sim.state.joints,
                    &mut rcm,
                    black_box(&sensors),
                    1e-3,
                )
                .unwrap()
        })
    });

    c.bench_function("simulator_step", |b| {
        let (mut s, _) = busy_home();
        b.iter(|| s.step(black_box(&inputs)).unwrap())
    });

    c.bench_function("dynamics_terms", |b| {
        b.iter(|| {
            sim.model
                .dynamics_terms(black_box(&sim.state.joints))
                .unwrap()
        })
    });

    c.bench_function("null_space_projector", |b| {
        let scope = ScopeGeometry::of_chain(&sim.model, &kin);
        let mass = sim.model.dynamics_terms(&sim.state.joints).unwrap().mass;
        let j = lateral_task_jacobian(&rcm_jacobian_from(&kin, &sim.state.rcm.p_r), &scope.d_z);
        b.iter(|| null_space_projector(black_box(&j), &mass).unwrap())
    });
}

criterion_group!(benches, control_tick);
criterion_main!(benches);
