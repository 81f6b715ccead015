//! Scratch pilot for fit quality and runtime on the two benchmark regimes.

use berkson::estimator::{fit, initialize, EstimatorConfig, SieveOrders};
use berkson::likelihood::{log_likelihood, QuadratureGrid};
use berkson::sim::{generate, Scenario};
use berkson::simplex::SimplexOptions;
use std::time::Instant;

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let mode = args.get(1).map(String::as_str).unwrap_or("easy");

    match mode {
        "easy" => easy_recovery(),
        "bench" => benchmark_fit(),
        _ => eprintln!("modes: easy | bench"),
    }
}

fn easy_recovery() {
    let cfg = EstimatorConfig::default();
    let orders = SieveOrders::new(1, 1, 1, 2, 2).unwrap();
    let grid = QuadratureGrid::new(-4.5, 4.5, 0.06).unwrap();
    let opts = SimplexOptions::default();

    for seed in 0..3u64 {
        let sc = Scenario::identity_gaussian(2000, 100 + seed, 1.0, 1.0, 1.0);
        let d = generate(&sc).unwrap();
        let t0 = Instant::now();
        let init = initialize(&d, &orders, &cfg).unwrap();
        let ll0 = log_likelihood(&init, &d, &grid);
        let fr = fit(&d, &orders, &grid, &opts, &cfg).unwrap();
        println!(
            "seed {seed}: {:.1?}s iters {} conv {} ll0 {:?} ll {:.5} g = {:?} h = {:?} scales = ({:.3},{:.3},{:.3})",
            t0.elapsed().as_secs_f64(),
            fr.iters,
            fr.converged,
            ll0,
            fr.loglik,
            fr.params.g.coeffs,
            fr.params.h.coeffs,
            fr.params.f_dx.scale,
            fr.params.f_dy.scale,
            fr.params.f_dz.scale,
        );
    }
}

fn benchmark_fit() {
    let cfg = EstimatorConfig::default();
    let orders = SieveOrders::new(3, 3, 3, 6, 6).unwrap();
    let grid = QuadratureGrid::new(-3.0, 3.0, 0.05).unwrap();
    let opts = SimplexOptions::default();

    let sc = Scenario::benchmark(500, 42);
    let d = generate(&sc).unwrap();
    let t0 = Instant::now();
    let fr = fit(&d, &orders, &grid, &opts, &cfg).unwrap();
    let dt = t0.elapsed().as_secs_f64();
    let g_at = |x: f64| fr.params.g.eval(x);
    println!(
        "bench: {dt:.1}s iters {} conv {} ll {:.5}",
        fr.iters, fr.converged, fr.loglik
    );
    println!(
        "g(-1) = {:.4} (true -1), g(0) = {:.4} (true 0), g(1) = {:.4} (true 1)",
        g_at(-1.0),
        g_at(0.0),
        g_at(1.0)
    );
    println!(
        "h(0) = {:.4} (true {:.4}), scales = ({:.3},{:.3},{:.3})",
        fr.params.h.eval(0.0),
        (2.0f64).ln_1p().max(0.0_f64.max((1.0f64 + 1.0).ln())), // ln 2
        fr.params.f_dx.scale,
        fr.params.f_dy.scale,
        fr.params.f_dz.scale,
    );
}
