//! Desk-scale numerical verification of the operator identification
//! argument.
//!
//! A [`DiscreteModel`] holds conditional-density kernels on small grids. The
//! observed operators `F_{y;Z|X}` and `F_{Z|X}` are assembled as matrix
//! products with quadrature step factors; [`recover_latents`] then
//! eigendecomposes `A_y B^{-1}`, whose eigenvalues are the outcome density
//! values and whose eigenvectors are the instrument kernel columns. The
//! ordering ambiguity of the eigenpairs is resolved by the centering rule:
//! only the correct indexing makes the implied Berkson kernel columns
//! centered on their own grid point.

use crate::error::{Error, Result};
use nalgebra::{DMatrix, DVector};
use serde::Serialize;

/// Column-stochastic kernel tolerance.
const KERNEL_TOL: f64 = 1e-10;

/// Grids plus kernels of a fully known discrete model.
#[derive(Debug, Clone)]
pub struct DiscreteModel {
    pub x_grid: Vec<f64>,
    pub xstar_grid: Vec<f64>,
    pub z_grid: Vec<f64>,
    pub y_grid: Vec<f64>,
    /// `n_z x n_s`, column j is `f(z | x*_j)`.
    pub f_z_given_xstar: DMatrix<f64>,
    /// `n_s x n_x`, column j is `f(x* | x_j)`.
    pub f_xstar_given_x: DMatrix<f64>,
    /// `n_y x n_s` eigenvalue table `f(y_i | x*_j)`.
    pub f_y_given_xstar: DMatrix<f64>,
}

pub fn grid_step(grid: &[f64]) -> Result<f64> {
    if grid.len() < 2 {
        return Err(Error::InvalidParameter("grid needs >= 2 nodes".into()));
    }
    let step = grid[1] - grid[0];
    for w in grid.windows(2) {
        if ((w[1] - w[0]) - step).abs() > 1e-9 * step.abs().max(1.0) {
            return Err(Error::InvalidParameter("grid is not equally spaced".into()));
        }
    }
    if !(step > 0.0) {
        return Err(Error::InvalidParameter("grid must be increasing".into()));
    }
    Ok(step)
}

fn check_stochastic(name: &str, kernel: &DMatrix<f64>, step: f64) -> Result<()> {
    for j in 0..kernel.ncols() {
        let mut sum = 0.0;
        for i in 0..kernel.nrows() {
            let v = kernel[(i, j)];
            if v < 0.0 {
                return Err(Error::Invariant(format!(
                    "kernel {name} column {j} has negative entry {v}"
                )));
            }
            sum += v;
        }
        if (sum * step - 1.0).abs() > KERNEL_TOL {
            return Err(Error::Invariant(format!(
                "kernel {name} column {j} has mass {}",
                sum * step
            )));
        }
    }
    Ok(())
}

impl DiscreteModel {
    pub fn validate(&self) -> Result<()> {
        let step_z = grid_step(&self.z_grid)?;
        let step_s = grid_step(&self.xstar_grid)?;
        grid_step(&self.x_grid)?;
        grid_step(&self.y_grid)?;
        if self.f_z_given_xstar.nrows() != self.z_grid.len()
            || self.f_z_given_xstar.ncols() != self.xstar_grid.len()
            || self.f_xstar_given_x.nrows() != self.xstar_grid.len()
            || self.f_xstar_given_x.ncols() != self.x_grid.len()
            || self.f_y_given_xstar.nrows() != self.y_grid.len()
            || self.f_y_given_xstar.ncols() != self.xstar_grid.len()
        {
            return Err(Error::Invariant("kernel shapes do not match grids".into()));
        }
        check_stochastic("f_z_given_xstar", &self.f_z_given_xstar, step_z)?;
        check_stochastic("f_xstar_given_x", &self.f_xstar_given_x, step_s)
    }

    /// Observed operator matrices for one outcome value `y` (which must be a
    /// grid node): `A_y = F_zx* D_y F_x*x Δs` and `B = F_zx* F_x*x Δs`.
    pub fn build_observed(&self, y: f64) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
        let yi = self
            .y_grid
            .iter()
            .position(|&v| (v - y).abs() < 1e-9)
            .ok_or_else(|| {
                Error::InvalidParameter(format!("y = {y} is not a node of the outcome grid"))
            })?;
        let step_s = grid_step(&self.xstar_grid)?;
        let d_y = DMatrix::from_diagonal(&DVector::from_iterator(
            self.xstar_grid.len(),
            (0..self.xstar_grid.len()).map(|j| self.f_y_given_xstar[(yi, j)]),
        ));
        let a_y = &self.f_z_given_xstar * d_y * &self.f_xstar_given_x * step_s;
        let b = &self.f_z_given_xstar * &self.f_xstar_given_x * step_s;
        Ok((a_y, b))
    }
}

/// Specification of a Gaussian test model: monotone links plus normal
/// disturbances, discretized and column-normalized on equal grids.
#[derive(Debug, Clone)]
pub struct GaussianModelSpec {
    pub nodes: usize,
    pub y_nodes: usize,
    pub x_lo: f64,
    pub x_hi: f64,
    pub sigma_dx: f64,
    pub sigma_dy: f64,
    pub sigma_dz: f64,
    pub g: crate::sim::shape::Shape,
    pub h: crate::sim::shape::Shape,
}

impl Default for GaussianModelSpec {
    fn default() -> Self {
        Self {
            nodes: 15,
            y_nodes: 15,
            x_lo: -2.0,
            x_hi: 2.0,
            sigma_dx: 0.3,
            sigma_dy: 1.2,
            sigma_dz: 0.4,
            g: crate::sim::shape::parse("identity").expect("registry"),
            h: crate::sim::shape::parse("identity").expect("registry"),
        }
    }
}

fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64)
        .collect()
}

fn normal_pdf(x: f64, sigma: f64) -> f64 {
    let u = x / sigma;
    (-0.5 * u * u).exp() / (sigma * (2.0 * std::f64::consts::PI).sqrt())
}

/// Gaussian kernel matrix `K[i][j] = phi_sigma(row_i - center(col_j))`,
/// column-normalized to unit discrete mass.
fn gaussian_kernel(
    rows: &[f64],
    centers: &[f64],
    sigma: f64,
    row_step: f64,
) -> DMatrix<f64> {
    let mut k = DMatrix::zeros(rows.len(), centers.len());
    for (j, &c) in centers.iter().enumerate() {
        let mut mass = 0.0;
        for (i, &r) in rows.iter().enumerate() {
            let v = normal_pdf(r - c, sigma);
            k[(i, j)] = v;
            mass += v;
        }
        let scale = 1.0 / (mass * row_step);
        for i in 0..rows.len() {
            k[(i, j)] *= scale;
        }
    }
    k
}

pub fn build_gaussian_model(spec: &GaussianModelSpec) -> Result<DiscreteModel> {
    if spec.nodes < 3 || spec.y_nodes < 3 {
        return Err(Error::InvalidParameter("need at least 3 nodes".into()));
    }
    let x_grid = linspace(spec.x_lo, spec.x_hi, spec.nodes);
    let xstar_grid = x_grid.clone();

    let h_vals: Vec<f64> = xstar_grid.iter().map(|&s| spec.h.eval(s)).collect();
    let g_vals: Vec<f64> = xstar_grid.iter().map(|&s| spec.g.eval(s)).collect();
    let h_min = h_vals.iter().cloned().fold(f64::INFINITY, f64::min);
    let h_max = h_vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let g_min = g_vals.iter().cloned().fold(f64::INFINITY, f64::min);
    let g_max = g_vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max);

    let z_grid = linspace(
        h_min - 3.0 * spec.sigma_dz,
        h_max + 3.0 * spec.sigma_dz,
        spec.nodes,
    );
    let y_grid = linspace(
        g_min - 2.0 * spec.sigma_dy,
        g_max + 2.0 * spec.sigma_dy,
        spec.y_nodes,
    );

    let step_z = grid_step(&z_grid)?;
    let step_s = grid_step(&xstar_grid)?;
    let step_y = grid_step(&y_grid)?;

    let f_z_given_xstar = gaussian_kernel(&z_grid, &h_vals, spec.sigma_dz, step_z);
    let f_xstar_given_x = gaussian_kernel(&xstar_grid, &x_grid, spec.sigma_dx, step_s);
    let f_y_given_xstar = gaussian_kernel(&y_grid, &g_vals, spec.sigma_dy, step_y);

    let m = DiscreteModel {
        x_grid,
        xstar_grid,
        z_grid,
        y_grid,
        f_z_given_xstar,
        f_xstar_given_x,
        f_y_given_xstar,
    };
    m.validate()?;
    Ok(m)
}

#[derive(Debug, Clone, Serialize)]
pub struct SpectralDiagnostics {
    pub condition_b: f64,
    pub smallest_singular_value: f64,
    pub max_eigen_imag: f64,
    pub degenerate_eigenvalues: bool,
    /// Smallest |cos| overlap when matching the check decomposition to the
    /// reference one.
    pub alignment_min_overlap: f64,
    pub centering_violation: f64,
    pub centering_profile: Vec<f64>,
    pub ordering_exhaustive: bool,
}

#[derive(Debug, Clone)]
pub struct RecoveredLatents {
    /// `n_y x n_s`: recovered `f(y_i | x*_j)`.
    pub eigenvalue_table: DMatrix<f64>,
    /// `n_z x n_s`: recovered instrument kernel columns, unit discrete mass.
    pub eigenfunctions: DMatrix<f64>,
    /// `n_s x n_x`: recovered Berkson kernel.
    pub f_xstar_given_x: DMatrix<f64>,
    pub diagnostics: SpectralDiagnostics,
}

#[derive(Debug, Clone)]
pub struct RecoverOptions {
    pub max_condition: f64,
    /// Average per-column centering violation above which recovery fails.
    /// Defaults to a quarter of the x-grid span.
    pub centering_tol_per_column: Option<f64>,
}

impl Default for RecoverOptions {
    fn default() -> Self {
        Self {
            max_condition: 1e10,
            centering_tol_per_column: None,
        }
    }
}

/// Eigenvector of `m` for the (real, simple) eigenvalue `lambda` by shifted
/// inverse iteration. Unit 2-norm, sign fixed by the largest entry.
fn inverse_iteration(m: &DMatrix<f64>, lambda: f64, scale: f64) -> Result<DVector<f64>> {
    let n = m.nrows();
    let mut perturb = 1e-12 * scale.max(1e-30);
    for _ in 0..8 {
        let shifted = m - DMatrix::identity(n, n) * (lambda + perturb);
        let lu = shifted.lu();
        let mut v = DVector::from_iterator(n, (0..n).map(|i| 1.0 + 0.01 * i as f64));
        v /= v.norm();
        let mut ok = true;
        for _ in 0..4 {
            match lu.solve(&v) {
                Some(w) => {
                    let norm = w.norm();
                    if !norm.is_finite() || norm == 0.0 {
                        ok = false;
                        break;
                    }
                    v = w / norm;
                }
                None => {
                    ok = false;
                    break;
                }
            }
        }
        if ok {
            let residual = (m * &v - &v * lambda).norm();
            if residual <= 1e-7 * scale.max(1.0) {
                let lead = v.iter().cloned().fold(0.0f64, |a, b| {
                    if b.abs() > a.abs() {
                        b
                    } else {
                        a
                    }
                });
                if lead < 0.0 {
                    v = -v;
                }
                return Ok(v);
            }
        }
        perturb *= 64.0;
    }
    Err(Error::Invariant(format!(
        "inverse iteration failed to converge for eigenvalue {lambda}"
    )))
}

struct EigenReal {
    /// Unit 2-norm eigenvector columns.
    vectors: DMatrix<f64>,
    max_imag: f64,
}

fn eigen_real(m: &DMatrix<f64>) -> Result<EigenReal> {
    let n = m.nrows();
    let complex = m.clone().complex_eigenvalues();
    let max_imag = complex.iter().map(|c| c.im.abs()).fold(0.0, f64::max);
    let values: Vec<f64> = complex.iter().map(|c| c.re).collect();
    let scale = m.norm();
    let mut vectors = DMatrix::zeros(n, n);
    for (k, &lam) in values.iter().enumerate() {
        let v = inverse_iteration(m, lam, scale)?;
        vectors.set_column(k, &v);
    }
    Ok(EigenReal { vectors, max_imag })
}

/// Smallest relative eigenvalue gap; the reference outcome value is the one
/// maximizing this, because separated eigenvalues make the eigenvectors
/// numerically well-defined.
fn min_relative_gap(values: &[f64]) -> f64 {
    let scale = values.iter().map(|v| v.abs()).fold(0.0, f64::max).max(1e-300);
    let mut sorted = values.to_vec();
    sorted.sort_unstable_by(f64::total_cmp);
    sorted
        .windows(2)
        .map(|w| (w[1] - w[0]).abs() / scale)
        .fold(f64::INFINITY, f64::min)
}

/// Matches candidate eigenvector columns to reference columns by maximal
/// |cos| overlap. Greedy by default; exhaustive over all permutations when
/// the dimension is at most `exhaustive_limit` and greedy left any pair
/// ambiguous. Returns `assign` with `candidates[assign[k]] ~ reference[k]`
/// and the smallest matched overlap.
pub(crate) fn match_by_overlap(
    reference: &DMatrix<f64>,
    candidates: &DMatrix<f64>,
    exhaustive_limit: usize,
) -> (Vec<usize>, f64) {
    let n = reference.ncols();
    let mut overlap = vec![vec![0.0f64; n]; n];
    for r in 0..n {
        let vr = reference.column(r);
        for c in 0..n {
            let vc = candidates.column(c);
            overlap[r][c] = vr.dot(&vc).abs() / (vr.norm() * vc.norm());
        }
    }

    // Greedy: repeatedly take the globally largest unmatched overlap.
    let mut assign = vec![usize::MAX; n];
    let mut used_r = vec![false; n];
    let mut used_c = vec![false; n];
    for _ in 0..n {
        let mut best = (0usize, 0usize, -1.0f64);
        for r in 0..n {
            if used_r[r] {
                continue;
            }
            for c in 0..n {
                if used_c[c] {
                    continue;
                }
                if overlap[r][c] > best.2 {
                    best = (r, c, overlap[r][c]);
                }
            }
        }
        assign[best.0] = best.1;
        used_r[best.0] = true;
        used_c[best.1] = true;
    }
    let greedy_min = (0..n)
        .map(|r| overlap[r][assign[r]])
        .fold(f64::INFINITY, f64::min);

    if greedy_min < 0.9 && n <= exhaustive_limit {
        // Exhaustive assignment maximizing the total overlap.
        let mut perm: Vec<usize> = (0..n).collect();
        let mut best_perm = assign.clone();
        let mut best_total = (0..n).map(|r| overlap[r][assign[r]]).sum::<f64>();
        heap_permutations(&mut perm, &mut |p| {
            let total: f64 = (0..n).map(|r| overlap[r][p[r]]).sum();
            if total > best_total {
                best_total = total;
                best_perm = p.to_vec();
            }
        });
        let ex_min = (0..n)
            .map(|r| overlap[r][best_perm[r]])
            .fold(f64::INFINITY, f64::min);
        if ex_min > greedy_min {
            return (best_perm, ex_min);
        }
    }
    (assign, greedy_min)
}

fn heap_permutations(items: &mut [usize], visit: &mut impl FnMut(&[usize])) {
    let n = items.len();
    let mut c = vec![0usize; n];
    visit(items);
    let mut i = 0;
    while i < n {
        if c[i] < i {
            if i % 2 == 0 {
                items.swap(0, i);
            } else {
                items.swap(c[i], i);
            }
            visit(items);
            c[i] += 1;
            i = 0;
        } else {
            c[i] = 0;
            i += 1;
        }
    }
}

/// Total centering violation of an eigenvector ordering.
///
/// `weighted` holds `W[k][c] = (V^-1 B)[k][c] * step_s`; slot `r` of the
/// ordering takes eigenvector `perm[r]`, and column `c` of the implied
/// Berkson kernel must have discrete mean `x_grid[c]`.
fn centering_violation(
    weighted: &DMatrix<f64>,
    perm: &[usize],
    xstar_grid: &[f64],
    x_grid: &[f64],
) -> (f64, Vec<f64>) {
    let n_x = x_grid.len();
    let mut profile = Vec::with_capacity(n_x);
    let mut total = 0.0;
    for c in 0..n_x {
        let mut mean = 0.0;
        for (r, &k) in perm.iter().enumerate() {
            mean += xstar_grid[r] * weighted[(k, c)];
        }
        let v = (mean - x_grid[c]).abs();
        profile.push(v);
        total += v;
    }
    (total, profile)
}

/// Searches eigenvector orderings for the one minimizing the total centering
/// violation: exhaustively for up to 8 slots, otherwise seeded by sorting on
/// the eigenvector means and refined by pairwise swaps. Returns the
/// permutation (`perm[r]` = eigenvector index for slot `r`), its violation
/// and profile, and whether the search was exhaustive.
pub fn order_by_centering(
    weighted: &DMatrix<f64>,
    eigen_means: &[f64],
    xstar_grid: &[f64],
    x_grid: &[f64],
) -> (Vec<usize>, f64, Vec<f64>, bool) {
    let n = eigen_means.len();
    if n <= 8 {
        let mut perm: Vec<usize> = (0..n).collect();
        let mut best_perm = perm.clone();
        let (mut best_v, mut best_profile) =
            centering_violation(weighted, &perm, xstar_grid, x_grid);
        heap_permutations(&mut perm, &mut |p| {
            let (v, profile) = centering_violation(weighted, p, xstar_grid, x_grid);
            if v < best_v {
                best_v = v;
                best_profile = profile;
                best_perm = p.to_vec();
            }
        });
        return (best_perm, best_v, best_profile, true);
    }

    // Ascending and descending mean orders; monotone links make one of them
    // correct up to local errors.
    let mut asc: Vec<usize> = (0..n).collect();
    asc.sort_by(|&a, &b| eigen_means[a].total_cmp(&eigen_means[b]));
    let desc: Vec<usize> = asc.iter().rev().cloned().collect();

    let mut best_perm = asc.clone();
    let (mut best_v, _) = centering_violation(weighted, &asc, xstar_grid, x_grid);
    let (v_desc, _) = centering_violation(weighted, &desc, xstar_grid, x_grid);
    if v_desc < best_v {
        best_v = v_desc;
        best_perm = desc;
    }

    // Pairwise-swap hill climbing.
    let mut improved = true;
    while improved {
        improved = false;
        for i in 0..n {
            for j in (i + 1)..n {
                best_perm.swap(i, j);
                let (v, _) = centering_violation(weighted, &best_perm, xstar_grid, x_grid);
                if v < best_v {
                    best_v = v;
                    improved = true;
                } else {
                    best_perm.swap(i, j);
                }
            }
        }
    }
    let (v, profile) = centering_violation(weighted, &best_perm, xstar_grid, x_grid);
    (best_perm, v, profile, false)
}

/// Recovers the latent densities from the observed operator collection.
pub fn recover_latents(
    xstar_grid: &[f64],
    x_grid: &[f64],
    z_grid: &[f64],
    a_ys: &[DMatrix<f64>],
    b: &DMatrix<f64>,
    opts: &RecoverOptions,
) -> Result<RecoveredLatents> {
    if a_ys.is_empty() {
        return Err(Error::InvalidParameter("empty A_y collection".into()));
    }
    let n = b.nrows();
    if b.ncols() != n || xstar_grid.len() != n || x_grid.len() != n || z_grid.len() != n {
        return Err(Error::InvalidParameter(
            "recovery needs square operators on equal-sized grids".into(),
        ));
    }
    let step_s = grid_step(xstar_grid)?;
    let step_z = grid_step(z_grid)?;

    let svd = b.clone().svd(false, false);
    let s_max = svd.singular_values.max();
    let s_min = svd.singular_values.min();
    let condition_b = s_max / s_min;
    if !condition_b.is_finite() || condition_b > opts.max_condition {
        return Err(Error::IllConditioned { cond: condition_b });
    }

    let b_inv = b
        .clone()
        .try_inverse()
        .ok_or(Error::IllConditioned { cond: condition_b })?;
    let t_ys: Vec<DMatrix<f64>> = a_ys.iter().map(|a| a * &b_inv).collect();

    // Reference outcome index: the best-separated spectrum.
    let mut max_imag = 0.0f64;
    let mut gaps = Vec::with_capacity(t_ys.len());
    for t in &t_ys {
        let complex = t.clone().complex_eigenvalues();
        max_imag = max_imag.max(complex.iter().map(|c| c.im.abs()).fold(0.0, f64::max));
        let re: Vec<f64> = complex.iter().map(|c| c.re).collect();
        gaps.push(min_relative_gap(&re));
    }
    let ref_idx = gaps
        .iter()
        .enumerate()
        .max_by(|(_, a), (_, b)| a.total_cmp(b))
        .map(|(i, _)| i)
        .expect("nonempty");
    let degenerate = gaps[ref_idx] < 1e-8;

    let reference = eigen_real(&t_ys[ref_idx])?;
    max_imag = max_imag.max(reference.max_imag);

    // Consistency across the y-grid: the second-best spectrum must produce
    // the same eigenvectors up to ordering.
    let alignment_min_overlap = if t_ys.len() > 1 {
        let check_idx = gaps
            .iter()
            .enumerate()
            .filter(|&(i, _)| i != ref_idx)
            .max_by(|(_, a), (_, b)| a.total_cmp(b))
            .map(|(i, _)| i)
            .expect("len > 1");
        let check = eigen_real(&t_ys[check_idx])?;
        let (_, min_overlap) = match_by_overlap(&reference.vectors, &check.vectors, 8);
        min_overlap
    } else {
        1.0
    };

    // Normalize eigenvectors to unit discrete mass: densities integrate to 1.
    let mut v = reference.vectors.clone();
    let mut means = Vec::with_capacity(n);
    for k in 0..n {
        let mass: f64 = v.column(k).iter().sum::<f64>() * step_z;
        if mass.abs() < 1e-12 {
            return Err(Error::Invariant(format!(
                "eigenvector {k} has vanishing discrete mass"
            )));
        }
        let col = v.column(k) / mass;
        v.set_column(k, &col);
        let mean: f64 = col
            .iter()
            .zip(z_grid)
            .map(|(f, z)| f * z)
            .sum::<f64>()
            * step_z;
        means.push(mean);
    }

    let v_inv = v
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::Invariant("eigenvector matrix is singular".into()))?;
    // Kernel rows indexed by eigenvector: F_x*x = V^-1 B / step_s. Column
    // means are taken against `weighted`, which folds the step back in.
    let w_kernel = &v_inv * b / step_s;
    let weighted = &w_kernel * step_s;

    let (perm, violation, profile, exhaustive) =
        order_by_centering(&weighted, &means, xstar_grid, x_grid);

    let tol = opts
        .centering_tol_per_column
        .unwrap_or_else(|| 0.25 * (x_grid[n - 1] - x_grid[0]).abs());
    if violation / n as f64 > tol {
        return Err(Error::CenteringFailure {
            violation,
            profile,
        });
    }

    // Apply the ordering: slot r takes eigenvector perm[r].
    let mut eigenfunctions = DMatrix::zeros(n, n);
    let mut f_xstar_given_x = DMatrix::zeros(n, n);
    for r in 0..n {
        eigenfunctions.set_column(r, &v.column(perm[r]));
        f_xstar_given_x.set_row(r, &w_kernel.row(perm[r]));
    }

    // Eigenvalue table through the shared eigenbasis; exact when the ordered
    // eigenvectors diagonalize every T_y.
    let vp_inv = eigenfunctions
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::Invariant("ordered eigenvector matrix is singular".into()))?;
    let mut eigenvalue_table = DMatrix::zeros(t_ys.len(), n);
    for (yi, t) in t_ys.iter().enumerate() {
        let d = &vp_inv * t * &eigenfunctions;
        for j in 0..n {
            eigenvalue_table[(yi, j)] = d[(j, j)];
        }
    }

    Ok(RecoveredLatents {
        eigenvalue_table,
        eigenfunctions,
        f_xstar_given_x,
        diagnostics: SpectralDiagnostics {
            condition_b,
            smallest_singular_value: s_min,
            max_eigen_imag: max_imag,
            degenerate_eigenvalues: degenerate,
            alignment_min_overlap,
            centering_violation: violation,
            centering_profile: profile,
            ordering_exhaustive: exhaustive,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Unit-step integer grids keep the quadrature factors at 1.
    fn unit_grids(n: usize) -> (Vec<f64>, Vec<f64>, Vec<f64>, Vec<f64>) {
        let g: Vec<f64> = (0..n).map(|i| i as f64).collect();
        (g.clone(), g.clone(), g.clone(), g)
    }

    fn column_normalize(mut m: DMatrix<f64>) -> DMatrix<f64> {
        for j in 0..m.ncols() {
            let s: f64 = m.column(j).iter().sum();
            for i in 0..m.nrows() {
                m[(i, j)] /= s;
            }
        }
        m
    }

    #[test]
    fn degenerate_berkson_noise_gives_a_eq_fzd() {
        let n = 4;
        let (x, s, z, y) = unit_grids(n);
        let f_z = column_normalize(DMatrix::from_fn(n, n, |i, j| {
            (-0.5 * ((i as f64 - j as f64) / 1.5).powi(2)).exp()
        }));
        let m = DiscreteModel {
            x_grid: x,
            xstar_grid: s,
            z_grid: z,
            y_grid: y,
            f_z_given_xstar: f_z.clone(),
            f_xstar_given_x: DMatrix::identity(n, n),
            f_y_given_xstar: DMatrix::from_fn(n, n, |i, j| 1.0 + (i * n + j) as f64 * 0.1),
        };
        m.validate().unwrap();
        let (a, b) = m.build_observed(1.0).unwrap();
        let d = DMatrix::from_diagonal(&DVector::from_iterator(
            n,
            (0..n).map(|j| m.f_y_given_xstar[(1, j)]),
        ));
        let expect = &f_z * &d;
        assert!((a - expect).norm() < 1e-12);
        assert!((b - f_z).norm() < 1e-12);
    }

    #[test]
    fn flat_outcome_density_makes_a_equal_b() {
        let n = 4;
        let (x, s, z, y) = unit_grids(n);
        let f_z = column_normalize(DMatrix::from_fn(n, n, |i, j| {
            1.0 + ((i + 2 * j) % 5) as f64
        }));
        let f_s = column_normalize(DMatrix::from_fn(n, n, |i, j| {
            1.0 + ((2 * i + j) % 3) as f64
        }));
        let m = DiscreteModel {
            x_grid: x,
            xstar_grid: s,
            z_grid: z,
            y_grid: y,
            f_z_given_xstar: f_z,
            f_xstar_given_x: f_s,
            f_y_given_xstar: DMatrix::from_element(n, n, 1.0),
        };
        m.validate().unwrap();
        let (a, b) = m.build_observed(0.0).unwrap();
        assert!((a - b).norm() < 1e-14);
    }

    #[test]
    fn build_observed_matches_double_sum_oracle() {
        let n = 3;
        let (x, s, z, y) = unit_grids(n);
        let f_z = column_normalize(DMatrix::from_fn(n, n, |i, j| {
            0.3 + ((7 * i + 3 * j) % 11) as f64
        }));
        let f_s = column_normalize(DMatrix::from_fn(n, n, |i, j| {
            0.2 + ((5 * i + j) % 7) as f64
        }));
        let table = DMatrix::from_fn(n, n, |i, j| 0.1 + ((i + j) % 4) as f64 * 0.3);
        let m = DiscreteModel {
            x_grid: x,
            xstar_grid: s,
            z_grid: z,
            y_grid: y,
            f_z_given_xstar: f_z.clone(),
            f_xstar_given_x: f_s.clone(),
            f_y_given_xstar: table.clone(),
        };
        m.validate().unwrap();
        let (a, _) = m.build_observed(2.0).unwrap();
        for i in 0..n {
            for c in 0..n {
                let mut direct = 0.0;
                for j in 0..n {
                    direct += f_z[(i, j)] * table[(2, j)] * f_s[(j, c)];
                }
                assert!(
                    (a[(i, c)] - direct).abs() < 1e-12,
                    "entry ({i},{c}): {} vs {direct}",
                    a[(i, c)]
                );
            }
        }
    }

    #[test]
    fn build_observed_rejects_off_grid_y() {
        let n = 3;
        let (x, s, z, y) = unit_grids(n);
        let m = DiscreteModel {
            x_grid: x,
            xstar_grid: s,
            z_grid: z,
            y_grid: y,
            f_z_given_xstar: DMatrix::identity(n, n),
            f_xstar_given_x: DMatrix::identity(n, n),
            f_y_given_xstar: DMatrix::from_element(n, n, 1.0),
        };
        assert!(m.build_observed(0.5).is_err());
    }

    #[test]
    fn overlap_matching_identifies_shuffled_columns() {
        let n = 5;
        let base = DMatrix::from_fn(n, n, |i, j| {
            (-0.5 * ((i as f64 - 1.3 * j as f64) / 0.9).powi(2)).exp() + 0.01
        });
        let mut shuffled = DMatrix::zeros(n, n);
        let perm = [3usize, 0, 4, 1, 2];
        for (src, &dst) in perm.iter().enumerate() {
            shuffled.set_column(dst, &base.column(src));
        }
        let (assign, min_overlap) = match_by_overlap(&base, &shuffled, 8);
        for (src, &dst) in perm.iter().enumerate() {
            assert_eq!(assign[src], dst);
        }
        assert!(min_overlap > 0.999);
    }
}
