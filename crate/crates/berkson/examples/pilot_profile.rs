//! Checks whether the steep-g optimum is a trap: refit each seed from a
//! start whose Berkson scale is forced wide, then compare likelihoods.

use berkson::estimator::{fit, initialize, EstimatorConfig, SieveOrders};
use berkson::likelihood::{log_likelihood, QuadratureGrid};
use berkson::sieve::DensitySieve;
use berkson::sim::{generate, Scenario};
use berkson::simplex::{minimize, SimplexOptions};

fn main() {
    let cfg = EstimatorConfig::default();
    let orders = SieveOrders::new(3, 3, 3, 6, 6).unwrap();
    let grid = QuadratureGrid::new(-3.0, 3.0, 0.05).unwrap();
    let opts = SimplexOptions::default();

    for seed in [44u64, 42] {
        let sc = Scenario::benchmark(500, seed);
        let d = generate(&sc).unwrap();

        let fr = fit(&d, &orders, &grid, &opts, &cfg).unwrap();
        println!(
            "seed {seed} default: ll {:.4} g(1) {:.3} sdx {:.3}",
            fr.loglik,
            fr.params.g.eval(1.0),
            fr.params.f_dx.scale
        );

        // Same pipeline but the starting Berkson scale forced to 0.65.
        let mut start = initialize(&d, &orders, &cfg).unwrap();
        start.f_dx = DensitySieve::from_free(
            0.65,
            &vec![0.0; orders.k_dx],
            orders.k_dx + 2,
            cfg.baseline,
            cfg.centering,
        )
        .unwrap();
        let objective = |x: &[f64]| {
            let p = berkson::estimator::test_unpack(x, &orders, &cfg)?;
            log_likelihood(&p, &d, &grid).map(|ll| -ll)
        };
        let packed = berkson::estimator::test_pack(&start);
        let res = minimize(objective, &packed, &opts).unwrap();
        let p = berkson::estimator::test_unpack(&res.x_best, &orders, &cfg).unwrap();
        let ll = log_likelihood(&p, &d, &grid).unwrap();
        println!(
            "seed {seed} wide-dx: ll {:.4} g(1) {:.3} sdx {:.3}",
            ll,
            p.g.eval(1.0),
            p.f_dx.scale
        );
    }
}
