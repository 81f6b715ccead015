//! Synthetic data generation and the robust-vs-naive replication study.

pub mod dist;
pub mod shape;

use crate::error::{Error, Result};
use crate::estimator::{fit, naive_fit, EstimatorConfig, SieveOrders};
use crate::likelihood::{Dataset, Obs, QuadratureGrid};
use crate::rng::CounterRng;
use crate::simplex::SimplexOptions;
use dist::Dist;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use shape::Shape;

/// Uniform support of the observed proxy covariate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Uniform {
    pub lo: f64,
    pub hi: f64,
}

/// One simulated design: covariate law, disturbance laws, true curves,
/// sample size, seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub x_dist: Uniform,
    pub dx_dist: Dist,
    pub dy_dist: Dist,
    pub dz_dist: Dist,
    pub g_true: Shape,
    pub h_true: Shape,
    pub n: usize,
    pub seed: u64,
}

impl Scenario {
    /// The benchmark design: uniform proxy on [-1, 1], heavy-tailed Berkson
    /// noise of nearly the same magnitude as the signal, |x|x outcome curve
    /// and a strictly convex instrument curve.
    pub fn benchmark(n: usize, seed: u64) -> Self {
        Self {
            x_dist: Uniform { lo: -1.0, hi: 1.0 },
            dx_dist: dist::parse("scaled_t(6,0.5)").expect("registry"),
            dy_dist: dist::parse("scaled_logistic(0.125)").expect("registry"),
            dz_dist: dist::parse("scaled_t(6,0.25)").expect("registry"),
            g_true: shape::parse("abs_quadratic").expect("registry"),
            h_true: shape::parse("softplus2x").expect("registry"),
            n,
            seed,
        }
    }

    /// Identity links with modest Gaussian disturbances; the easy regime.
    pub fn identity_gaussian(n: usize, seed: u64, s_dx: f64, s_dy: f64, s_dz: f64) -> Self {
        let d = |s: f64| dist::parse(&format!("gaussian({s})")).expect("registry");
        Self {
            x_dist: Uniform { lo: -1.0, hi: 1.0 },
            dx_dist: d(s_dx),
            dy_dist: d(s_dy),
            dz_dist: d(s_dz),
            g_true: shape::parse("identity").expect("registry"),
            h_true: shape::parse("identity").expect("registry"),
            n,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.x_dist.lo < self.x_dist.hi) {
            return Err(Error::InvalidParameter(format!(
                "uniform support [{}, {}] is empty",
                self.x_dist.lo, self.x_dist.hi
            )));
        }
        if self.n < 1 {
            return Err(Error::InvalidParameter("scenario needs n >= 1".into()));
        }
        Ok(())
    }
}

/// Stream indices: variable v of replication r reads stream 4r + v, so every
/// variable of every replication is an independent substream of one seed.
const STREAM_X: u64 = 0;
const STREAM_DX: u64 = 1;
const STREAM_DY: u64 = 2;
const STREAM_DZ: u64 = 3;

/// Draws the sample `X, dX*, dY, dZ` independently and forms
/// `X* = X + dX*`, `Y = g(X*) + dY`, `Z = h(X*) + dZ`.
pub fn generate(sc: &Scenario) -> Result<Dataset> {
    sc.validate()?;
    let mut rx = CounterRng::substream(sc.seed, STREAM_X);
    let mut rdx = CounterRng::substream(sc.seed, STREAM_DX);
    let mut rdy = CounterRng::substream(sc.seed, STREAM_DY);
    let mut rdz = CounterRng::substream(sc.seed, STREAM_DZ);

    let rows = (0..sc.n)
        .map(|_| {
            let x = rx.uniform_in(sc.x_dist.lo, sc.x_dist.hi);
            let xstar = x + sc.dx_dist.sample(&mut rdx);
            Obs {
                x,
                y: sc.g_true.eval(xstar) + sc.dy_dist.sample(&mut rdy),
                z: sc.h_true.eval(xstar) + sc.dz_dist.sample(&mut rdz),
            }
        })
        .collect();
    Dataset::new(rows)
}

/// Pointwise quantile curves; ordered q05 <= q50 <= q95 by construction.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct QuantileBand {
    pub q05: Vec<f64>,
    pub q50: Vec<f64>,
    pub q95: Vec<f64>,
}

/// One replication's fitted curves on the evaluation grid.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RepCurves {
    pub g: Vec<f64>,
    pub h: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReplicationReport {
    pub eval_grid: Vec<f64>,
    pub true_g: Vec<f64>,
    pub true_h: Vec<f64>,
    pub robust_g: QuantileBand,
    pub robust_h: QuantileBand,
    pub naive_g: QuantileBand,
    pub naive_h: QuantileBand,
    /// Per replication: fitted curves, or None when the fit failed outright.
    pub robust_curves: Vec<Option<RepCurves>>,
    pub naive_curves: Vec<Option<RepCurves>>,
    /// Per replication: fit produced and its optimizer converged.
    pub converged: Vec<bool>,
}

impl ReplicationReport {
    pub fn n_replications(&self) -> usize {
        self.converged.len()
    }

    pub fn n_converged(&self) -> usize {
        self.converged.iter().filter(|&&c| c).count()
    }
}

/// Default evaluation grid: 41 equispaced points on [-1.5, 1.5], covering
/// the bulk of the latent regressor under the benchmark design.
pub fn default_eval_points() -> Vec<f64> {
    (0..41).map(|i| -1.5 + 3.0 * i as f64 / 40.0).collect()
}

/// Type-7 (linear interpolation) sample quantile of unsorted values.
fn quantile(values: &[f64], p: f64) -> f64 {
    let mut v = values.to_vec();
    v.sort_unstable_by(f64::total_cmp);
    let m = v.len();
    if m == 1 {
        return v[0];
    }
    let h = (m - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    v[lo] + (h - lo as f64) * (v[hi] - v[lo])
}

fn band(curves: &[Option<RepCurves>], pick: fn(&RepCurves) -> &Vec<f64>, m: usize) -> QuantileBand {
    let mut q05 = Vec::with_capacity(m);
    let mut q50 = Vec::with_capacity(m);
    let mut q95 = Vec::with_capacity(m);
    for j in 0..m {
        let col: Vec<f64> = curves
            .iter()
            .filter_map(|c| c.as_ref().map(|c| pick(c)[j]))
            .collect();
        q05.push(quantile(&col, 0.05));
        q50.push(quantile(&col, 0.50));
        q95.push(quantile(&col, 0.95));
    }
    QuantileBand { q05, q50, q95 }
}

/// Runs `generate + fit` and `generate + naive_fit` for `r_total`
/// replications with derived seeds `seed + r`, then summarizes pointwise
/// quantiles on `eval_points`.
///
/// Failed replications are kept as flagged rows; the report is produced as
/// long as at least half of the replications yielded a fit.
#[allow(clippy::too_many_arguments)]
pub fn replicate(
    sc: &Scenario,
    r_total: usize,
    orders: &SieveOrders,
    grid: &QuadratureGrid,
    opts: &SimplexOptions,
    cfg: &EstimatorConfig,
    eval_points: &[f64],
) -> Result<ReplicationReport> {
    if r_total < 1 {
        return Err(Error::InvalidParameter(
            "need at least one replication".into(),
        ));
    }
    if eval_points.is_empty() {
        return Err(Error::InvalidParameter("empty evaluation grid".into()));
    }
    sc.validate()?;

    struct RepOutcome {
        robust: Option<RepCurves>,
        naive: Option<RepCurves>,
        converged: bool,
    }

    let outcomes: Vec<RepOutcome> = (0..r_total)
        .into_par_iter()
        .map(|r| {
            let mut sc_r = sc.clone();
            sc_r.seed = sc.seed + r as u64;
            let Ok(data) = generate(&sc_r) else {
                return RepOutcome {
                    robust: None,
                    naive: None,
                    converged: false,
                };
            };
            let robust = fit(&data, orders, grid, opts, cfg).ok().map(|fr| RepCurves {
                g: eval_points.iter().map(|&x| fr.params.g.eval(x)).collect(),
                h: eval_points.iter().map(|&x| fr.params.h.eval(x)).collect(),
            });
            let converged = robust.is_some();
            let naive = naive_fit(&data, orders.k_g, orders.k_h).ok().map(|nf| {
                let gp = crate::sieve::PolySieve::new(nf.beta_g).expect("nonempty");
                let hp = crate::sieve::PolySieve::new(nf.beta_h).expect("nonempty");
                RepCurves {
                    g: eval_points.iter().map(|&x| gp.eval(x)).collect(),
                    h: eval_points.iter().map(|&x| hp.eval(x)).collect(),
                }
            });
            RepOutcome {
                robust,
                naive,
                converged,
            }
        })
        .collect();

    let robust_curves: Vec<Option<RepCurves>> = outcomes.iter().map(|o| o.robust.clone()).collect();
    let naive_curves: Vec<Option<RepCurves>> = outcomes.iter().map(|o| o.naive.clone()).collect();
    let converged: Vec<bool> = outcomes.iter().map(|o| o.converged).collect();

    let ok = robust_curves.iter().filter(|c| c.is_some()).count();
    if 2 * ok < r_total {
        return Err(Error::Invariant(format!(
            "only {ok} of {r_total} replications produced a fit"
        )));
    }

    let m = eval_points.len();
    Ok(ReplicationReport {
        true_g: eval_points.iter().map(|&x| sc.g_true.eval(x)).collect(),
        true_h: eval_points.iter().map(|&x| sc.h_true.eval(x)).collect(),
        robust_g: band(&robust_curves, |c| &c.g, m),
        robust_h: band(&robust_curves, |c| &c.h, m),
        naive_g: band(&naive_curves, |c| &c.g, m),
        naive_h: band(&naive_curves, |c| &c.h, m),
        eval_grid: eval_points.to_vec(),
        robust_curves,
        naive_curves,
        converged,
    })
}
