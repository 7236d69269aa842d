use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use ictrack_bench::{z_design, z_window};
use ictrack_core::controllers::{
    build_move_blocking, eic_step, ic_step, lqr_tracking_step, BlockingPattern, ControllerInput, InputBounds,
    MpcController,
};
use nalgebra::dvector;

fn controllers(c: &mut Criterion) {
    let (d, dc) = z_design();
    let bounds = InputBounds::from_polytope(&dc.u_set).unwrap();
    let window = z_window(0, d.preview);
    let near = dvector![0.05, 0.0];
    let far = dvector![0.9, -0.5];

    c.bench_function("lqr_tracking", |b| {
        b.iter(|| lqr_tracking_step(&d.high, &bounds, &ControllerInput::new(black_box(&near), &window, 0)).unwrap())
    });
    for (name, x) in [("inner", &near), ("outer", &far)] {
        c.bench_function(&format!("ic/{name}"), |b| {
            b.iter(|| ic_step(&d, &bounds, &ControllerInput::new(black_box(x), &window, 0)).unwrap())
        });
        c.bench_function(&format!("eic/{name}"), |b| {
            b.iter(|| eic_step(&d, &bounds, &ControllerInput::new(black_box(x), &window, 0)).unwrap())
        });
    }

    let mut group = c.benchmark_group("mpc");
    group.sample_size(10);
    let patterns =
        [("blocked", build_move_blocking(8.0, 0.01, 0.2).unwrap()), ("full", BlockingPattern::full(800).unwrap())];
    for (name, pattern) in patterns {
        let mut mpc = MpcController::new(&dc.model, &dc.high, &dc.x_set, &dc.u_set, pattern, d.high.clone()).unwrap();
        group
            .bench_function(name, |b| b.iter(|| mpc.step(&ControllerInput::new(black_box(&far), &window, 0)).unwrap()));
    }
    group.finish();
}

criterion_group!(benches, controllers);
criterion_main!(benches);
