//! Model-implied conditional density of (Y, Z) given X and the sample
//! log-likelihood objective.
//!
//! The latent regressor is integrated out over a fixed equal-weight grid.
//! Trial parameters that produce a negative density factor at any evaluated
//! point, or an observation density at or below [`DENSITY_FLOOR`], are
//! infeasible rather than merely penalized; the optimizer treats infeasible
//! points as having infinite objective value.

use crate::error::{Error, Result};
use crate::sieve::ModelParams;
use crate::sums::stable_sum;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Observation densities at or below this value make a parameter point
/// infeasible, keeping the simplex arithmetic finite.
pub const DENSITY_FLOOR: f64 = 1e-300;

/// Equally spaced latent-integration nodes with Riemann weight `step`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuadratureGrid {
    pub lower: f64,
    pub upper: f64,
    pub step: f64,
    #[serde(skip)]
    nodes: Vec<f64>,
}

impl QuadratureGrid {
    pub fn new(lower: f64, upper: f64, step: f64) -> Result<Self> {
        if !(lower < upper) || !(step > 0.0) || !lower.is_finite() || !upper.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "bad quadrature grid [{lower}, {upper}] step {step}"
            )));
        }
        let count = ((upper - lower) / step + 1e-9).floor() as usize + 1;
        if count < 3 {
            return Err(Error::InvalidParameter(format!(
                "quadrature grid has {count} nodes, need at least 3"
            )));
        }
        let nodes = (0..count).map(|i| lower + i as f64 * step).collect();
        Ok(Self {
            lower,
            upper,
            step,
            nodes,
        })
    }

    /// Grid recentered and rescaled to the data: `mean(x) ± 3·range_factor·sd(x)`,
    /// with the step scaled so the node count matches the default density.
    pub fn from_data(xs: &[f64], range_factor: f64) -> Result<Self> {
        if xs.is_empty() {
            return Err(Error::InvalidParameter("empty data for grid".into()));
        }
        let (mean, sd) = crate::sums::mean_and_sd(xs);
        let half = (3.0 * range_factor * sd).max(1e-6);
        let step = half / 60.0;
        Self::new(mean - half, mean + half, step)
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }
}

/// One observed triple: proxy covariate, outcome, instrument.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Obs {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

/// Sample of observed triples.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub rows: Vec<Obs>,
}

impl Dataset {
    pub fn new(rows: Vec<Obs>) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::InvalidParameter("dataset is empty".into()));
        }
        for (i, r) in rows.iter().enumerate() {
            if !(r.x.is_finite() && r.y.is_finite() && r.z.is_finite()) {
                return Err(Error::InvalidParameter(format!(
                    "non-finite entry in dataset row {}",
                    i + 1
                )));
            }
        }
        Ok(Self { rows })
    }

    pub fn n(&self) -> usize {
        self.rows.len()
    }

    pub fn xs(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.x).collect()
    }
}

/// Conditional density value with an infeasibility flag: `feasible` is false
/// when any integrand factor was negative at some node.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CondDensity {
    pub value: f64,
    pub feasible: bool,
}

/// Regression values precomputed on the grid nodes; they do not depend on
/// the observation.
struct NodeCache {
    g: Vec<f64>,
    h: Vec<f64>,
}

impl NodeCache {
    fn build(p: &ModelParams, grid: &QuadratureGrid) -> Self {
        let g = grid.nodes().iter().map(|&s| p.g.eval(s)).collect();
        let h = grid.nodes().iter().map(|&s| p.h.eval(s)).collect();
        Self { g, h }
    }
}

fn cond_density_cached(
    p: &ModelParams,
    cache: &NodeCache,
    y: f64,
    z: f64,
    x: f64,
    grid: &QuadratureGrid,
) -> CondDensity {
    let mut acc = 0.0;
    let mut feasible = true;
    for (j, &s) in grid.nodes().iter().enumerate() {
        let fz = p.f_dz.eval(z - cache.h[j]);
        let fy = p.f_dy.eval(y - cache.g[j]);
        let fx = p.f_dx.eval(s - x);
        if fz < 0.0 || fy < 0.0 || fx < 0.0 {
            feasible = false;
        }
        acc += fz * fy * fx;
    }
    CondDensity {
        value: grid.step * acc,
        feasible,
    }
}

/// Riemann-sum evaluation of `f(y, z | x)` under the trial parameters.
pub fn conditional_density(
    p: &ModelParams,
    y: f64,
    z: f64,
    x: f64,
    grid: &QuadratureGrid,
) -> CondDensity {
    let cache = NodeCache::build(p, grid);
    cond_density_cached(p, &cache, y, z, x, grid)
}

/// Mean log conditional density over the sample, or `None` when any
/// observation is infeasible (negative factor or floored density).
///
/// Per-observation terms are computed in parallel and reduced through a
/// canonical sorted summation, so the value is bit-identical for any thread
/// count and any relabeling of the observations.
pub fn log_likelihood(p: &ModelParams, d: &Dataset, grid: &QuadratureGrid) -> Option<f64> {
    let cache = NodeCache::build(p, grid);
    let terms: Option<Vec<f64>> = d
        .rows
        .par_iter()
        .map(|r| {
            let cd = cond_density_cached(p, &cache, r.y, r.z, r.x, grid);
            if !cd.feasible || !(cd.value > DENSITY_FLOOR) || !cd.value.is_finite() {
                None
            } else {
                Some(cd.value.ln())
            }
        })
        .collect();
    let mut terms = terms?;
    Some(stable_sum(&mut terms) / d.n() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sieve::{BaselineKind, Centering, DensitySieve, PolySieve};
    use approx::assert_abs_diff_eq;
    use std::f64::consts::PI;

    pub(crate) fn gaussian_identity_model(sx: f64, sy: f64, sz: f64) -> ModelParams {
        let norm = |s: f64| {
            DensitySieve::from_free(s, &[], 1, BaselineKind::Gaussian, Centering::MeanZero)
                .unwrap()
        };
        ModelParams {
            g: PolySieve::new(vec![0.0, 1.0]).unwrap(),
            h: PolySieve::new(vec![0.0, 1.0]).unwrap(),
            f_dx: norm(sx),
            f_dy: norm(sy),
            f_dz: norm(sz),
        }
    }

    #[test]
    fn grid_node_layout() {
        let g = QuadratureGrid::new(-3.0, 3.0, 0.05).unwrap();
        assert_eq!(g.len(), 121);
        assert_abs_diff_eq!(g.nodes()[0], -3.0);
        assert_abs_diff_eq!(g.nodes()[120], 3.0, epsilon = 1e-12);
    }

    #[test]
    fn grid_rejects_degenerate() {
        assert!(QuadratureGrid::new(1.0, 0.0, 0.1).is_err());
        assert!(QuadratureGrid::new(0.0, 1.0, 0.0).is_err());
        assert!(QuadratureGrid::new(0.0, 1.0, 0.9).is_err());
    }

    #[test]
    fn conditional_density_matches_bivariate_normal_oracle() {
        // Identity links with unit normals: (Y, Z) | X = 0 is centered
        // bivariate normal with variance 2 and covariance 1, so the density
        // at the origin is 1 / (2 pi sqrt(3)).
        let p = gaussian_identity_model(1.0, 1.0, 1.0);
        let oracle = 1.0 / (2.0 * PI * 3.0f64.sqrt());
        let fine = QuadratureGrid::new(-8.0, 8.0, 0.01).unwrap();
        let cd = conditional_density(&p, 0.0, 0.0, 0.0, &fine);
        assert!(cd.feasible);
        assert_abs_diff_eq!(cd.value, oracle, epsilon = 5e-4);

        let coarse = QuadratureGrid::new(-3.0, 3.0, 0.05).unwrap();
        let cd2 = conditional_density(&p, 0.0, 0.0, 0.0, &coarse);
        assert_abs_diff_eq!(cd2.value, oracle, epsilon = 1.5e-3);
    }

    #[test]
    fn concentrated_berkson_noise_factorizes() {
        // Nearly degenerate f_dx pins x* at x, so the density factorizes.
        let p = gaussian_identity_model(0.01, 1.0, 1.0);
        let grid = QuadratureGrid::new(0.0, 2.0, 0.001).unwrap();
        let cd = conditional_density(&p, 1.0, 1.0, 1.0, &grid);
        let phi0 = 1.0 / (2.0 * PI).sqrt();
        assert_abs_diff_eq!(cd.value, phi0 * phi0, epsilon = 1e-3);
    }

    #[test]
    fn negative_factor_sets_infeasible_flag() {
        let mut p = gaussian_identity_model(1.0, 1.0, 1.0);
        // A density that dips negative away from the origin.
        p.f_dy = DensitySieve {
            scale: 1.0,
            coeffs: vec![1.0, -2.0],
            baseline_kind: BaselineKind::Gaussian,
            centering: Centering::MeanZero,
        };
        let grid = QuadratureGrid::new(-4.0, 4.0, 0.1).unwrap();
        let cd = conditional_density(&p, 0.0, 0.0, 0.0, &grid);
        assert!(!cd.feasible);
    }

    #[test]
    fn single_observation_loglik_is_log_density() {
        let p = gaussian_identity_model(1.0, 1.0, 1.0);
        let grid = QuadratureGrid::new(-8.0, 8.0, 0.01).unwrap();
        let d = Dataset::new(vec![Obs {
            x: 0.0,
            y: 0.0,
            z: 0.0,
        }])
        .unwrap();
        let ll = log_likelihood(&p, &d, &grid).unwrap();
        let cd = conditional_density(&p, 0.0, 0.0, 0.0, &grid);
        assert_abs_diff_eq!(ll, cd.value.ln(), epsilon = 1e-14);
        // Log of the analytic oracle value.
        let oracle = (1.0 / (2.0 * PI * 3.0f64.sqrt())).ln();
        assert_abs_diff_eq!(ll, oracle, epsilon = 6e-3);
    }

    #[test]
    fn far_outlier_is_infeasible() {
        let p = gaussian_identity_model(1.0, 1.0, 1.0);
        let grid = QuadratureGrid::new(-3.0, 3.0, 0.05).unwrap();
        let d = Dataset::new(vec![Obs {
            x: 0.0,
            y: 1e10,
            z: 0.0,
        }])
        .unwrap();
        assert_eq!(log_likelihood(&p, &d, &grid), None);
    }

    #[test]
    fn quadrature_step_refinement_converges() {
        let p = gaussian_identity_model(0.8, 0.6, 0.9);
        let d = Dataset::new(
            (0..40)
                .map(|i| {
                    let t = -1.0 + 0.05 * i as f64;
                    Obs {
                        x: t,
                        y: 0.3 * t,
                        z: -0.2 + t,
                    }
                })
                .collect(),
        )
        .unwrap();
        let l0 = log_likelihood(&p, &d, &QuadratureGrid::new(-5.0, 5.0, 0.08).unwrap()).unwrap();
        let l1 = log_likelihood(&p, &d, &QuadratureGrid::new(-5.0, 5.0, 0.04).unwrap()).unwrap();
        let l2 = log_likelihood(&p, &d, &QuadratureGrid::new(-5.0, 5.0, 0.02).unwrap()).unwrap();
        assert!((l1 - l0).abs() < 1e-3, "halving changed by {}", l1 - l0);
        assert!((l2 - l1).abs() < 2.5e-4, "quartering changed by {}", l2 - l1);
    }

    #[test]
    fn conditional_density_integrates_to_one_in_y_z() {
        let p = gaussian_identity_model(0.7, 0.5, 0.6);
        let grid = QuadratureGrid::new(-4.0, 4.0, 0.05).unwrap();
        let x = 0.3;
        let (lo, hi, m) = (-6.0f64, 6.0f64, 80usize);
        let dy = (hi - lo) / m as f64;
        let mut total = 0.0;
        for i in 0..=m {
            for j in 0..=m {
                let y = lo + i as f64 * dy;
                let z = lo + j as f64 * dy;
                total += conditional_density(&p, y, z, x, &grid).value;
            }
        }
        total *= dy * dy;
        assert!((total - 1.0).abs() < 2e-2, "mass {total}");
    }

    #[test]
    fn symmetry_under_joint_reflection() {
        // Odd g, h and symmetric densities: f(y, z | x) = f(-y, -z | -x).
        let mut p = gaussian_identity_model(0.9, 0.7, 0.8);
        p.g = PolySieve::new(vec![0.0, 0.4, 0.0, 0.3]).unwrap();
        p.h = PolySieve::new(vec![0.0, 1.0, 0.0, -0.1]).unwrap();
        let grid = QuadratureGrid::new(-4.0, 4.0, 0.05).unwrap();
        for &(y, z, x) in &[(0.4, -0.2, 0.7), (1.1, 0.5, -0.3), (0.0, 0.9, 0.2)] {
            let a = conditional_density(&p, y, z, x, &grid).value;
            let b = conditional_density(&p, -y, -z, -x, &grid).value;
            assert_abs_diff_eq!(a, b, epsilon = 1e-10);
        }
    }

    #[test]
    fn loglik_invariant_to_row_permutation() {
        let p = gaussian_identity_model(0.8, 0.6, 0.9);
        let rows: Vec<Obs> = (0..25)
            .map(|i| {
                let t = -1.2 + 0.1 * i as f64;
                Obs {
                    x: t,
                    y: t + 0.1,
                    z: t - 0.2,
                }
            })
            .collect();
        let mut rev = rows.clone();
        rev.reverse();
        let grid = QuadratureGrid::new(-4.0, 4.0, 0.1).unwrap();
        let a = log_likelihood(&p, &Dataset::new(rows).unwrap(), &grid).unwrap();
        let b = log_likelihood(&p, &Dataset::new(rev).unwrap(), &grid).unwrap();
        assert_eq!(a.to_bits(), b.to_bits());
    }
}
