//! Full sieve maximum-likelihood fit and the naive least-squares comparator.
//!
//! The free parameters are packed into one real vector in a fixed order:
//! `(beta_g | beta_h | ln theta_0, tail for dX* | dY | dZ)`. Density scales
//! travel in log form so they stay positive without rejection; the magnitude
//! bounds and the equality constraints are handled by rejection and by exact
//! elimination of the first two density coefficients, respectively.

use crate::error::{Error, Result};
use crate::likelihood::{log_likelihood, Dataset, QuadratureGrid};
use crate::sieve::{
    BaselineKind, Centering, DensitySieve, ModelParams, PolySieve, SieveBounds,
};
use crate::simplex::{minimize, SimplexOptions};
use crate::sums::{mean_and_sd, stable_sum};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

/// Sieve order tuple. Density entries count free tail coefficients
/// (`theta_3..`), not the two coefficients pinned by the constraints and not
/// the scale; regression entries count polynomial coefficients.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct SieveOrders {
    pub k_dx: usize,
    pub k_dy: usize,
    pub k_dz: usize,
    pub k_g: usize,
    pub k_h: usize,
}

impl SieveOrders {
    pub fn new(k_dx: usize, k_dy: usize, k_dz: usize, k_g: usize, k_h: usize) -> Result<Self> {
        let s = Self {
            k_dx,
            k_dy,
            k_dz,
            k_g,
            k_h,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if self.k_dx < 1 || self.k_dy < 1 || self.k_dz < 1 || self.k_g < 1 || self.k_h < 1 {
            return Err(Error::InvalidParameter(format!(
                "all sieve orders must be >= 1, got {self:?}"
            )));
        }
        Ok(())
    }

    /// Total coefficient count of a density with `k_free` tail entries.
    pub fn density_k_total(k_free: usize) -> usize {
        k_free + 2
    }

    /// Packed optimizer dimension.
    pub fn n_params(&self) -> usize {
        self.k_g + self.k_h + 3 + self.k_dx + self.k_dy + self.k_dz
    }
}

impl std::fmt::Display for SieveOrders {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "{},{},{},{},{}",
            self.k_dx, self.k_dy, self.k_dz, self.k_g, self.k_h
        )
    }
}

/// Estimator configuration beyond the optimizer options.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EstimatorConfig {
    pub bounds: SieveBounds,
    pub baseline: BaselineKind,
    pub centering: Centering,
    /// Fraction of the naive residual standard deviation assigned to the
    /// outcome/instrument disturbances at initialization.
    pub init_split: f64,
    /// Initial Berkson scale as a fraction of sd(X).
    pub init_dx_fraction: f64,
    /// Multistart ladder: each factor scales the initial Berkson width and
    /// the best final likelihood wins. The landscape couples that width to
    /// the steepness of the fitted regression, and a single start can settle
    /// on the wrong side of the valley.
    pub dx_start_factors: Vec<f64>,
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        Self {
            bounds: SieveBounds::default(),
            baseline: BaselineKind::Gaussian,
            centering: Centering::MeanZero,
            init_split: std::f64::consts::FRAC_1_SQRT_2,
            init_dx_fraction: 0.5,
            dx_start_factors: vec![1.0, 2.0],
        }
    }
}

/// Naive polynomial least squares of Y on X and Z on X.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NaiveFit {
    pub beta_g: Vec<f64>,
    pub beta_h: Vec<f64>,
    pub resid_var_y: f64,
    pub resid_var_z: f64,
}

/// Curve values on an x*-grid.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CurveTrace {
    pub x: Vec<f64>,
    pub g: Vec<f64>,
    pub h: Vec<f64>,
}

/// Fitted density values on a shared disturbance grid.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DensityTrace {
    pub v: Vec<f64>,
    pub f_dx: Vec<f64>,
    pub f_dy: Vec<f64>,
    pub f_dz: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FitResult {
    pub params: ModelParams,
    pub loglik: f64,
    pub orders: SieveOrders,
    pub converged: bool,
    pub iters: usize,
    pub curves: CurveTrace,
    pub densities: DensityTrace,
}

/// Ordinary polynomial least squares via normal equations with a fully
/// pivoted decomposition. `k_g`/`k_h` are coefficient counts (so the fitted
/// polynomial has degree `k - 1`). Residual variances are maximum-likelihood
/// (divide by n).
pub fn naive_fit(d: &Dataset, k_g: usize, k_h: usize) -> Result<NaiveFit> {
    if k_g < 1 || k_h < 1 {
        return Err(Error::InvalidParameter(
            "polynomial orders must be >= 1".into(),
        ));
    }
    if d.n() <= k_g.max(k_h) {
        return Err(Error::InvalidParameter(format!(
            "need more than {} observations for these polynomial orders",
            k_g.max(k_h)
        )));
    }
    let xs = d.xs();
    let ys: Vec<f64> = d.rows.iter().map(|r| r.y).collect();
    let zs: Vec<f64> = d.rows.iter().map(|r| r.z).collect();
    let (beta_g, resid_var_y) = poly_ls(&xs, &ys, k_g)?;
    let (beta_h, resid_var_z) = poly_ls(&xs, &zs, k_h)?;
    Ok(NaiveFit {
        beta_g,
        beta_h,
        resid_var_y,
        resid_var_z,
    })
}

fn poly_ls(xs: &[f64], ys: &[f64], k: usize) -> Result<(Vec<f64>, f64)> {
    let n = xs.len();
    // Normal-equation entries assembled with canonical summation so the fit
    // is exactly invariant to row order.
    let mut xtx = DMatrix::zeros(k, k);
    let mut xty = DVector::zeros(k);
    let powers: Vec<Vec<f64>> = (0..k)
        .map(|p| xs.iter().map(|x| x.powi(p as i32)).collect())
        .collect();
    for a in 0..k {
        for b in a..k {
            let mut terms: Vec<f64> = (0..n).map(|i| powers[a][i] * powers[b][i]).collect();
            let s = stable_sum(&mut terms);
            xtx[(a, b)] = s;
            xtx[(b, a)] = s;
        }
        let mut terms: Vec<f64> = (0..n).map(|i| powers[a][i] * ys[i]).collect();
        xty[a] = stable_sum(&mut terms);
    }

    let lu = xtx.clone().full_piv_lu();
    let diag_max = (0..k)
        .map(|i| lu.u()[(i, i)].abs())
        .fold(0.0f64, f64::max);
    let diag_min = (0..k)
        .map(|i| lu.u()[(i, i)].abs())
        .fold(f64::INFINITY, f64::min);
    if diag_max == 0.0 || diag_min / diag_max < 1e-12 {
        return Err(Error::RankDeficient { order: k });
    }
    let beta = lu
        .solve(&xty)
        .ok_or(Error::RankDeficient { order: k })?;

    let mut resid_sq: Vec<f64> = (0..n)
        .map(|i| {
            let fit: f64 = (0..k).map(|p| beta[p] * powers[p][i]).sum();
            let r = ys[i] - fit;
            r * r
        })
        .collect();
    let var = stable_sum(&mut resid_sq) / n as f64;
    Ok((beta.iter().copied().collect(), var))
}

/// Starting point: naive regression coefficients plus pure-baseline densities
/// whose scales come from the naive residual variances and sd(X).
pub fn initialize(d: &Dataset, orders: &SieveOrders, cfg: &EstimatorConfig) -> Result<ModelParams> {
    orders.validate()?;
    let naive = naive_fit(d, orders.k_g, orders.k_h)?;
    let clamp = |b: f64| b.clamp(-cfg.bounds.coeff_bound, cfg.bounds.coeff_bound);
    let beta_g: Vec<f64> = naive.beta_g.iter().map(|&b| clamp(b)).collect();
    let beta_h: Vec<f64> = naive.beta_h.iter().map(|&b| clamp(b)).collect();

    let (_, sd_x) = mean_and_sd(&d.xs());
    let scale_of = |raw: f64| raw.clamp(cfg.bounds.scale_min, cfg.bounds.scale_max);
    let s_dy = scale_of(naive.resid_var_y.sqrt() * cfg.init_split);
    let s_dz = scale_of(naive.resid_var_z.sqrt() * cfg.init_split);
    let s_dx = scale_of(sd_x * cfg.init_dx_fraction);

    let density = |scale: f64, k_free: usize| {
        DensitySieve::from_free(
            scale,
            &vec![0.0; k_free],
            SieveOrders::density_k_total(k_free),
            cfg.baseline,
            cfg.centering,
        )
    };

    Ok(ModelParams {
        g: PolySieve::new(beta_g)?,
        h: PolySieve::new(beta_h)?,
        f_dx: density(s_dx, orders.k_dx)?,
        f_dy: density(s_dy, orders.k_dy)?,
        f_dz: density(s_dz, orders.k_dz)?,
    })
}

/// Test/diagnostic re-exports of the packing scheme.
pub fn test_pack(p: &ModelParams) -> Vec<f64> {
    pack(p)
}

pub fn test_unpack(packed: &[f64], orders: &SieveOrders, cfg: &EstimatorConfig) -> Option<ModelParams> {
    unpack(packed, orders, cfg)
}

pub(crate) fn pack(p: &ModelParams) -> Vec<f64> {
    let mut v = Vec::new();
    v.extend_from_slice(&p.g.coeffs);
    v.extend_from_slice(&p.h.coeffs);
    for d in [&p.f_dx, &p.f_dy, &p.f_dz] {
        v.push(d.scale.ln());
        v.extend_from_slice(&d.coeffs[2.min(d.coeffs.len())..]);
    }
    v
}

/// Rebuilds model parameters from a packed vector. Returns `None` when the
/// point violates the magnitude or scale bounds (the rejection rule).
pub(crate) fn unpack(
    packed: &[f64],
    orders: &SieveOrders,
    cfg: &EstimatorConfig,
) -> Option<ModelParams> {
    if packed.len() != orders.n_params() {
        return None;
    }
    let b = cfg.bounds.coeff_bound;
    let mut pos = 0;
    let mut take = |n: usize| {
        let s = &packed[pos..pos + n];
        pos += n;
        s
    };

    let beta_g = take(orders.k_g);
    let beta_h = take(orders.k_h);
    if beta_g.iter().chain(beta_h).any(|c| c.abs() > b) {
        return None;
    }
    let g = PolySieve::new(beta_g.to_vec()).ok()?;
    let h = PolySieve::new(beta_h.to_vec()).ok()?;

    let mut densities = Vec::with_capacity(3);
    for &k_free in &[orders.k_dx, orders.k_dy, orders.k_dz] {
        let block = take(1 + k_free);
        let scale = block[0].exp();
        if !(scale >= cfg.bounds.scale_min && scale <= cfg.bounds.scale_max) {
            return None;
        }
        let tail = &block[1..];
        if tail.iter().any(|c| c.abs() > b) {
            return None;
        }
        let d = DensitySieve::from_free(
            scale,
            tail,
            SieveOrders::density_k_total(k_free),
            cfg.baseline,
            cfg.centering,
        )
        .ok()?;
        if d.coeffs.iter().any(|c| !c.is_finite() || c.abs() > b) {
            return None;
        }
        densities.push(d);
    }
    let f_dz = densities.pop()?;
    let f_dy = densities.pop()?;
    let f_dx = densities.pop()?;
    Some(ModelParams {
        g,
        h,
        f_dx,
        f_dy,
        f_dz,
    })
}

fn inflate_scales(p: &ModelParams, factor: f64, cfg: &EstimatorConfig) -> Result<ModelParams> {
    let grow = |d: &DensitySieve| {
        let scale = (d.scale * factor).min(cfg.bounds.scale_max);
        DensitySieve::from_free(
            scale,
            &d.coeffs[2.min(d.coeffs.len())..],
            d.k_total(),
            d.baseline_kind,
            d.centering,
        )
    };
    Ok(ModelParams {
        g: p.g.clone(),
        h: p.h.clone(),
        f_dx: grow(&p.f_dx)?,
        f_dy: grow(&p.f_dy)?,
        f_dz: grow(&p.f_dz)?,
    })
}

/// Positions of the three log-scale entries in the packed layout.
fn scale_positions(orders: &SieveOrders) -> [usize; 3] {
    let base = orders.k_g + orders.k_h;
    [
        base,
        base + 1 + orders.k_dx,
        base + 2 + orders.k_dx + orders.k_dy,
    ]
}

/// Maximizes the sample log-likelihood over the packed free parameters.
///
/// If the initial point is infeasible the density scales are doubled up to
/// five times before giving up; wider disturbances put mass on every
/// observation and restore feasibility in practice.
///
/// Each multistart rung is optimized in two stages: first over the
/// regression coefficients and the three scales with the density tails
/// frozen, then over everything. The staged warm start keeps the
/// high-dimensional simplex out of the narrow-Berkson trap.
pub fn fit(
    d: &Dataset,
    orders: &SieveOrders,
    grid: &QuadratureGrid,
    opts: &SimplexOptions,
    cfg: &EstimatorConfig,
) -> Result<FitResult> {
    let mut start = initialize(d, orders, cfg)?;
    let mut attempts = 0;
    while log_likelihood(&start, d, grid).is_none() {
        attempts += 1;
        if attempts > 5 {
            return Err(Error::NoFeasibleStart { attempts });
        }
        start = inflate_scales(&start, 2.0, cfg)?;
    }

    let objective = |x: &[f64]| {
        let params = unpack(x, orders, cfg)?;
        log_likelihood(&params, d, grid).map(|ll| -ll)
    };

    let positions = scale_positions(orders);
    let sub_idx: Vec<usize> = (0..orders.k_g + orders.k_h)
        .chain(positions.iter().copied())
        .collect();
    let stage_opts = SimplexOptions {
        restarts: opts.restarts.min(1),
        ..opts.clone()
    };

    let base_packed = pack(&start);
    let ln_min = cfg.bounds.scale_min.ln();
    let ln_max = cfg.bounds.scale_max.ln();
    let mut rung_scales: Vec<f64> = Vec::new();
    for &f in &cfg.dx_start_factors {
        if !(f > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "dx start factor must be positive, got {f}"
            )));
        }
        let v = (base_packed[positions[0]] + f.ln()).clamp(ln_min, ln_max);
        if !rung_scales.iter().any(|&u| (u - v).abs() < 1e-12) {
            rung_scales.push(v);
        }
    }
    if rung_scales.is_empty() {
        rung_scales.push(base_packed[positions[0]]);
    }

    let mut best: Option<SimplexResultLike> = None;
    struct SimplexResultLike {
        x: Vec<f64>,
        f: f64,
        iters: usize,
        converged: bool,
    }

    for &ln_scale in &rung_scales {
        let mut rung = base_packed.clone();
        rung[positions[0]] = ln_scale;
        if objective(&rung).is_none() {
            continue;
        }

        // Stage A: frozen tails.
        let sub0: Vec<f64> = sub_idx.iter().map(|&i| rung[i]).collect();
        let sub_objective = |s: &[f64]| {
            let mut full = rung.clone();
            for (j, &i) in sub_idx.iter().enumerate() {
                full[i] = s[j];
            }
            objective(&full)
        };
        let stage_a = minimize(sub_objective, &sub0, &stage_opts)?;
        let mut warm = rung.clone();
        for (j, &i) in sub_idx.iter().enumerate() {
            warm[i] = stage_a.x_best[j];
        }

        // Stage B: all parameters.
        let stage_b = minimize(&objective, &warm, opts)?;
        let total_iters = stage_a.iters + stage_b.iters;
        let replace = match &best {
            None => true,
            Some(b) => stage_b.f_best < b.f,
        };
        if replace {
            best = Some(SimplexResultLike {
                x: stage_b.x_best,
                f: stage_b.f_best,
                iters: total_iters,
                converged: stage_b.converged,
            });
        } else if let Some(b) = &mut best {
            b.iters += total_iters;
        }
    }

    let result = best.ok_or(Error::NoFeasibleStart { attempts: 0 })?;
    let params = unpack(&result.x, orders, cfg)
        .ok_or_else(|| Error::Invariant("optimizer returned an infeasible point".into()))?;
    let loglik = log_likelihood(&params, d, grid)
        .ok_or_else(|| Error::Invariant("optimizer returned an infeasible point".into()))?;

    let curves = CurveTrace {
        x: grid.nodes().to_vec(),
        g: grid.nodes().iter().map(|&s| params.g.eval(s)).collect(),
        h: grid.nodes().iter().map(|&s| params.h.eval(s)).collect(),
    };
    let densities = density_trace(&params);

    Ok(FitResult {
        params,
        loglik,
        orders: *orders,
        converged: result.converged,
        iters: result.iters,
        curves,
        densities,
    })
}

/// Evaluates the three fitted densities on a shared grid spanning six times
/// the widest fitted scale.
pub fn density_trace(params: &ModelParams) -> DensityTrace {
    let smax = params
        .f_dx
        .scale
        .max(params.f_dy.scale)
        .max(params.f_dz.scale);
    let half = 6.0 * smax;
    let m = 121;
    let v: Vec<f64> = (0..m)
        .map(|i| -half + 2.0 * half * i as f64 / (m - 1) as f64)
        .collect();
    DensityTrace {
        f_dx: v.iter().map(|&t| params.f_dx.eval(t)).collect(),
        f_dy: v.iter().map(|&t| params.f_dy.eval(t)).collect(),
        f_dz: v.iter().map(|&t| params.f_dz.eval(t)).collect(),
        v,
    }
}
