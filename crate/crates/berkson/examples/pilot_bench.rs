//! Diagnoses benchmark-fit quality: fitted likelihood vs a pseudo-true
//! projection of the generating model onto the sieve family.

use berkson::estimator::{fit, EstimatorConfig, SieveOrders};
use berkson::likelihood::{log_likelihood, QuadratureGrid};
use berkson::sieve::{BaselineKind, Centering, DensitySieve, ModelParams, PolySieve};
use berkson::sim::{generate, Scenario};
use berkson::simplex::SimplexOptions;
use std::time::Instant;

/// Least-squares degree-(k-1) polynomial projection of f on [-lim, lim].
fn project_poly(f: impl Fn(f64) -> f64, k: usize, lim: f64) -> Vec<f64> {
    let m = 201;
    let xs: Vec<f64> = (0..m)
        .map(|i| -lim + 2.0 * lim * i as f64 / (m - 1) as f64)
        .collect();
    let mut a = vec![vec![0.0f64; k + 1]; k];
    for r in 0..k {
        for c in 0..k {
            a[r][c] = xs.iter().map(|x| x.powi((r + c) as i32)).sum();
        }
        a[r][k] = xs.iter().map(|x| x.powi(r as i32) * f(*x)).sum();
    }
    for col in 0..k {
        let piv = (col..k).max_by(|&p, &q| a[p][col].abs().total_cmp(&a[q][col].abs())).unwrap();
        a.swap(col, piv);
        let d = a[col][col];
        for c in col..=k {
            a[col][c] /= d;
        }
        for r in 0..k {
            if r != col {
                let mlt = a[r][col];
                for c in col..=k {
                    a[r][c] -= mlt * a[col][c];
                }
            }
        }
    }
    (0..k).map(|r| a[r][k]).collect()
}

fn pseudo_truth(orders: &SieveOrders) -> ModelParams {
    let g = project_poly(|x| x.abs() * x, orders.k_g, 2.0);
    let h = project_poly(
        |x| {
            let t = 2.0 * x;
            if t > 0.0 {
                t + (-t).exp().ln_1p()
            } else {
                t.exp().ln_1p()
            }
        },
        orders.k_h,
        2.0,
    );
    let density = |scale: f64, k_free: usize| {
        DensitySieve::from_free(
            scale,
            &vec![0.0; k_free],
            k_free + 2,
            BaselineKind::Gaussian,
            Centering::MeanZero,
        )
        .unwrap()
    };
    ModelParams {
        g: PolySieve::new(g).unwrap(),
        h: PolySieve::new(h).unwrap(),
        f_dx: density(0.55, orders.k_dx),
        f_dy: density(0.21, orders.k_dy),
        f_dz: density(0.28, orders.k_dz),
    }
}

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let seeds: u64 = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(3);
    let restarts: usize = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(2);
    let max_iters: usize = args.get(3).and_then(|s| s.parse().ok()).unwrap_or(20_000);

    let cfg = EstimatorConfig::default();
    let orders = SieveOrders::new(3, 3, 3, 6, 6).unwrap();
    let grid = QuadratureGrid::new(-3.0, 3.0, 0.05).unwrap();
    let opts = SimplexOptions {
        restarts,
        max_iters,
        jitter_seed: Some(7),
        ..SimplexOptions::default()
    };

    let pt = pseudo_truth(&orders);

    for seed in 0..seeds {
        let sc = Scenario::benchmark(500, 42 + seed);
        let d = generate(&sc).unwrap();
        let ll_pt = log_likelihood(&pt, &d, &grid);
        let t0 = Instant::now();
        let fr = fit(&d, &orders, &grid, &opts, &cfg).unwrap();
        println!
            ("seed {seed}: {:.0}s iters {} ll_fit {:.4} ll_pseudo {:?} | g(-1)={:.3} g(0)={:.3} g(1)={:.3} | sdx={:.3}",
            t0.elapsed().as_secs_f64(),
            fr.iters,
            fr.loglik,
            ll_pt.map(|v| (v * 1e4).round() / 1e4),
            fr.params.g.eval(-1.0),
            fr.params.g.eval(0.0),
            fr.params.g.eval(1.0),
            fr.params.f_dx.scale,
        );
    }
}
