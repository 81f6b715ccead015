//! Sieve representations of regression functions and disturbance densities.
//!
//! Regression functions are truncated polynomial series. Disturbance
//! densities are a baseline shape of estimable width multiplied by a
//! polynomial whose first two coefficients are pinned by two linear
//! constraints: unit total probability and a centering rule.

use crate::error::{Error, Result};
use crate::quad;
use serde::{Deserialize, Serialize};

const SQRT_2PI: f64 = 2.506_628_274_631_000_5;

/// Tolerance on the linear constraint residuals of a valid density.
pub const CONSTRAINT_TOL: f64 = 1e-10;

/// Polynomial basis family. Only monomials are implemented: term `k`
/// (1-based) is `x^(k-1)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BasisKind {
    Monomial,
}

/// Baseline shape multiplying the density polynomial.
///
/// `Gaussian` is the standard normal pdf; `Flat` is the unit-mass boxcar on
/// `[-1/2, 1/2]`, i.e. constant 1 over one scale unit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaselineKind {
    Gaussian,
    Flat,
}

/// Location rule pinning the disturbance at zero.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Centering {
    MeanZero,
    MedianZero,
}

/// Weight function selecting one linear constraint on the coefficients.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConstraintKind {
    /// c(v) = 1: unit total probability.
    Area,
    /// c(v) = v: zero mean.
    MeanZero,
    /// c(v) = 1(v <= 0) - 1/2: zero median.
    MedianZero,
}

impl Centering {
    pub fn constraint(self) -> ConstraintKind {
        match self {
            Centering::MeanZero => ConstraintKind::MeanZero,
            Centering::MedianZero => ConstraintKind::MedianZero,
        }
    }
}

/// Magnitude bounds defining the compact parameter set searched at fit time.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct SieveBounds {
    pub coeff_bound: f64,
    pub scale_min: f64,
    pub scale_max: f64,
}

impl Default for SieveBounds {
    fn default() -> Self {
        Self {
            coeff_bound: 50.0,
            scale_min: 1e-3,
            scale_max: 1e3,
        }
    }
}

/// Truncated polynomial series for a regression function.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolySieve {
    pub coeffs: Vec<f64>,
    pub basis_kind: BasisKind,
}

impl PolySieve {
    pub fn new(coeffs: Vec<f64>) -> Result<Self> {
        if coeffs.is_empty() {
            return Err(Error::InvalidParameter(
                "polynomial sieve needs at least one coefficient".into(),
            ));
        }
        if coeffs.iter().any(|c| !c.is_finite()) {
            return Err(Error::InvalidParameter(
                "polynomial sieve coefficients must be finite".into(),
            ));
        }
        Ok(Self {
            coeffs,
            basis_kind: BasisKind::Monomial,
        })
    }

    pub fn len(&self) -> usize {
        self.coeffs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coeffs.is_empty()
    }

    /// Horner evaluation of `sum_k beta_k x^(k-1)`.
    #[inline]
    pub fn eval(&self, x: f64) -> f64 {
        let mut acc = 0.0;
        for &c in self.coeffs.iter().rev() {
            acc = acc * x + c;
        }
        acc
    }

    pub fn validate(&self, bounds: &SieveBounds) -> Result<()> {
        if self.coeffs.is_empty() {
            return Err(Error::Invariant("empty polynomial sieve".into()));
        }
        for (k, &c) in self.coeffs.iter().enumerate() {
            if !c.is_finite() || c.abs() > bounds.coeff_bound {
                return Err(Error::Invariant(format!(
                    "polynomial coefficient {} = {c} outside bound {}",
                    k + 1,
                    bounds.coeff_bound
                )));
            }
        }
        Ok(())
    }
}

/// Baseline-weighted polynomial density with scale `theta_0` and
/// coefficients `theta_1..theta_K` on monomial terms in the raw disturbance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensitySieve {
    pub scale: f64,
    pub coeffs: Vec<f64>,
    pub baseline_kind: BaselineKind,
    pub centering: Centering,
}

impl DensitySieve {
    /// Builds the density with the first two coefficients completed from the
    /// free tail so that both linear constraints hold.
    pub fn from_free(
        scale: f64,
        free: &[f64],
        k_total: usize,
        baseline_kind: BaselineKind,
        centering: Centering,
    ) -> Result<Self> {
        let coeffs = eliminate_constraints(baseline_kind, scale, k_total, free, centering)?;
        Ok(Self {
            scale,
            coeffs,
            baseline_kind,
            centering,
        })
    }

    /// Baseline factor `(1/theta_0) phi_0(v/theta_0)`.
    #[inline]
    pub fn baseline(&self, v: f64) -> f64 {
        baseline_pdf(self.baseline_kind, self.scale, v)
    }

    /// Density value; may be negative for unconstrained trial coefficients.
    /// Nonnegativity is enforced by rejection at likelihood evaluation.
    #[inline]
    pub fn eval(&self, v: f64) -> f64 {
        let mut poly = 0.0;
        for &c in self.coeffs.iter().rev() {
            poly = poly * v + c;
        }
        self.baseline(v) * poly
    }

    pub fn k_total(&self) -> usize {
        self.coeffs.len()
    }

    pub fn validate(&self, bounds: &SieveBounds) -> Result<()> {
        if !(self.scale > 0.0)
            || self.scale < bounds.scale_min
            || self.scale > bounds.scale_max
        {
            return Err(Error::Invariant(format!(
                "density scale {} outside [{}, {}]",
                self.scale, bounds.scale_min, bounds.scale_max
            )));
        }
        if self.coeffs.is_empty() {
            return Err(Error::Invariant("empty density sieve".into()));
        }
        for (k, &c) in self.coeffs.iter().enumerate() {
            if !c.is_finite() || c.abs() > bounds.coeff_bound {
                return Err(Error::Invariant(format!(
                    "density coefficient {} = {c} outside bound {}",
                    k + 1,
                    bounds.coeff_bound
                )));
            }
        }
        let k = self.coeffs.len();
        let area = constraint_coeffs(self.baseline_kind, self.scale, k, ConstraintKind::Area)?;
        let area_sum: f64 = self.coeffs.iter().zip(&area).map(|(t, c)| t * c).sum();
        if (area_sum - 1.0).abs() > CONSTRAINT_TOL {
            return Err(Error::Invariant(format!(
                "area constraint violated by {:e}",
                area_sum - 1.0
            )));
        }
        if k >= 2 {
            let cent =
                constraint_coeffs(self.baseline_kind, self.scale, k, self.centering.constraint())?;
            let cent_sum: f64 = self.coeffs.iter().zip(&cent).map(|(t, c)| t * c).sum();
            if cent_sum.abs() > CONSTRAINT_TOL {
                return Err(Error::Invariant(format!(
                    "centering constraint violated by {cent_sum:e}"
                )));
            }
        }
        Ok(())
    }
}

/// The full unknown tuple: two regression sieves and three disturbance
/// densities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub g: PolySieve,
    pub h: PolySieve,
    pub f_dx: DensitySieve,
    pub f_dy: DensitySieve,
    pub f_dz: DensitySieve,
}

impl ModelParams {
    pub fn validate(&self, bounds: &SieveBounds) -> Result<()> {
        self.g.validate(bounds)?;
        self.h.validate(bounds)?;
        self.f_dx.validate(bounds)?;
        self.f_dy.validate(bounds)?;
        self.f_dz.validate(bounds)
    }
}

#[inline]
fn baseline_pdf(kind: BaselineKind, scale: f64, v: f64) -> f64 {
    match kind {
        BaselineKind::Gaussian => {
            let u = v / scale;
            (-0.5 * u * u).exp() / (scale * SQRT_2PI)
        }
        BaselineKind::Flat => {
            if v.abs() <= 0.5 * scale {
                1.0 / scale
            } else {
                0.0
            }
        }
    }
}

/// Raw moment `E[V^m]` of the baseline density at the given scale.
fn baseline_moment(kind: BaselineKind, scale: f64, m: usize) -> f64 {
    if m % 2 == 1 {
        return 0.0;
    }
    match kind {
        BaselineKind::Gaussian => {
            // E[V^(2j)] = scale^(2j) (2j-1)!!
            let mut acc = 1.0;
            let mut odd = 1.0;
            for _ in 0..m / 2 {
                acc *= odd * scale * scale;
                odd += 2.0;
            }
            acc
        }
        BaselineKind::Flat => {
            let a = 0.5 * scale;
            a.powi(m as i32) / (m as f64 + 1.0)
        }
    }
}

/// Integration cutoff beyond which the weighted baseline is negligible.
fn baseline_support(kind: BaselineKind, scale: f64) -> f64 {
    match kind {
        BaselineKind::Gaussian => 14.0 * scale,
        BaselineKind::Flat => 0.5 * scale,
    }
}

/// Constraint row `C_k = ∫ c(v) (1/theta_0) phi_0(v/theta_0) v^(k-1) dv`
/// for `k = 1..K`.
///
/// Area and mean rows use closed-form baseline moments. Median rows have no
/// general closed form and are computed by adaptive quadrature.
pub fn constraint_coeffs(
    kind: BaselineKind,
    scale: f64,
    k_total: usize,
    which: ConstraintKind,
) -> Result<Vec<f64>> {
    if k_total < 1 {
        return Err(Error::InvalidParameter(
            "constraint row needs K >= 1".into(),
        ));
    }
    if !(scale > 0.0) || !scale.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "density scale must be positive and finite, got {scale}"
        )));
    }
    let row = match which {
        ConstraintKind::Area => (0..k_total)
            .map(|k| baseline_moment(kind, scale, k))
            .collect(),
        ConstraintKind::MeanZero => (0..k_total)
            .map(|k| baseline_moment(kind, scale, k + 1))
            .collect(),
        ConstraintKind::MedianZero => {
            let cut = baseline_support(kind, scale);
            (0..k_total)
                .map(|k| {
                    if k % 2 == 0 {
                        // Symmetric baseline: even-power median rows vanish.
                        return 0.0;
                    }
                    let tol = 1e-12 * scale.powi(k as i32).max(1.0);
                    let neg = quad::integrate(
                        |v| baseline_pdf(kind, scale, v) * v.powi(k as i32),
                        -cut,
                        0.0,
                        tol,
                    );
                    neg - 0.5 * baseline_moment(kind, scale, k)
                })
                .collect()
        }
    };
    Ok(row)
}

/// Completes a coefficient vector from its free tail `theta_3..theta_K` so
/// that the area and centering constraints hold exactly.
///
/// For `K = 1` only the area constraint applies (centering is automatic for
/// the symmetric baselines); for `K = 2` both leading coefficients are
/// forced and the tail must be empty.
pub fn eliminate_constraints(
    kind: BaselineKind,
    scale: f64,
    k_total: usize,
    free: &[f64],
    centering: Centering,
) -> Result<Vec<f64>> {
    if k_total < 1 {
        return Err(Error::InvalidParameter("K must be at least 1".into()));
    }
    if k_total == 1 {
        if !free.is_empty() {
            return Err(Error::InvalidParameter(
                "K = 1 leaves no free coefficients".into(),
            ));
        }
        let area = constraint_coeffs(kind, scale, 1, ConstraintKind::Area)?;
        return Ok(vec![1.0 / area[0]]);
    }
    if free.len() != k_total - 2 {
        return Err(Error::InvalidParameter(format!(
            "free tail has length {}, expected {}",
            free.len(),
            k_total - 2
        )));
    }
    let area = constraint_coeffs(kind, scale, k_total, ConstraintKind::Area)?;
    let cent = constraint_coeffs(kind, scale, k_total, centering.constraint())?;

    let mut rhs_area = 1.0;
    let mut rhs_cent = 0.0;
    for (i, &t) in free.iter().enumerate() {
        rhs_area -= t * area[i + 2];
        rhs_cent -= t * cent[i + 2];
    }

    let det = area[0] * cent[1] - area[1] * cent[0];
    if det.abs() < 1e-300 {
        return Err(Error::SingularElimination { det });
    }
    let theta1 = (rhs_area * cent[1] - area[1] * rhs_cent) / det;
    let theta2 = (area[0] * rhs_cent - rhs_area * cent[0]) / det;

    let mut coeffs = Vec::with_capacity(k_total);
    coeffs.push(theta1);
    coeffs.push(theta2);
    coeffs.extend_from_slice(free);
    Ok(coeffs)
}
