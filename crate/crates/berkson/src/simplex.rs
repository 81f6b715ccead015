//! Nelder–Mead simplex minimization with rejection-based feasibility.
//!
//! The objective returns `None` for infeasible points; those are treated as
//! having infinite value, which the simplex method tolerates because it never
//! differentiates. After convergence the simplex is rebuilt around the
//! incumbent and re-run, accepting only improvements, to guard against the
//! method's well-known stagnation.

use crate::error::{Error, Result};
use crate::rng::CounterRng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SimplexOptions {
    pub max_iters: usize,
    /// Relative function-value spread below which the simplex has converged.
    pub f_tol: f64,
    /// Simplex diameter below which the simplex has converged.
    pub x_tol: f64,
    pub reflection: f64,
    pub expansion: f64,
    pub contraction: f64,
    pub shrink: f64,
    /// Rebuild-and-rerun count after first convergence.
    pub restarts: usize,
    /// Optional seed for jittering restart displacements.
    pub jitter_seed: Option<u64>,
}

impl Default for SimplexOptions {
    fn default() -> Self {
        Self {
            max_iters: 20_000,
            f_tol: 1e-9,
            x_tol: 1e-10,
            reflection: 1.0,
            expansion: 2.0,
            contraction: 0.5,
            shrink: 0.5,
            restarts: 2,
            jitter_seed: None,
        }
    }
}

impl SimplexOptions {
    pub fn validate(&self) -> Result<()> {
        if !(self.reflection > 0.0) {
            return Err(Error::InvalidParameter("reflection must be > 0".into()));
        }
        if !(self.expansion > self.reflection) {
            return Err(Error::InvalidParameter(
                "expansion must exceed reflection".into(),
            ));
        }
        if !(self.contraction > 0.0 && self.contraction < 1.0) {
            return Err(Error::InvalidParameter(
                "contraction must lie in (0, 1)".into(),
            ));
        }
        if !(self.shrink > 0.0 && self.shrink < 1.0) {
            return Err(Error::InvalidParameter("shrink must lie in (0, 1)".into()));
        }
        if !(self.f_tol > 0.0) || !(self.x_tol > 0.0) {
            return Err(Error::InvalidParameter("tolerances must be > 0".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct SimplexResult {
    pub x_best: Vec<f64>,
    pub f_best: f64,
    pub iters: usize,
    pub converged: bool,
    /// Best objective value after each iteration; non-increasing.
    pub trace: Vec<f64>,
}

/// Per-coordinate displacement used to build the initial simplex.
fn displacement(x: f64) -> f64 {
    (0.1 * x.abs()).max(0.05)
}

struct Evaluator<'a, F> {
    objective: &'a mut F,
    evals: usize,
}

impl<'a, F: FnMut(&[f64]) -> Option<f64>> Evaluator<'a, F> {
    fn eval(&mut self, x: &[f64]) -> Result<f64> {
        self.evals += 1;
        match (self.objective)(x) {
            Some(v) if v.is_nan() => Err(Error::NonFiniteObjective),
            Some(v) => Ok(v),
            None => Ok(f64::INFINITY),
        }
    }
}

fn simplex_diameter(vertices: &[Vec<f64>]) -> f64 {
    let base = &vertices[0];
    vertices[1..]
        .iter()
        .map(|v| {
            v.iter()
                .zip(base)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max)
        })
        .fold(0.0, f64::max)
}

fn run_simplex<F: FnMut(&[f64]) -> Option<f64>>(
    ev: &mut Evaluator<F>,
    x0: &[f64],
    steps: &[f64],
    opts: &SimplexOptions,
    trace: &mut Vec<f64>,
) -> Result<(Vec<f64>, f64, usize, bool)> {
    let dim = x0.len();
    let mut vertices: Vec<Vec<f64>> = Vec::with_capacity(dim + 1);
    vertices.push(x0.to_vec());
    for j in 0..dim {
        let mut v = x0.to_vec();
        v[j] += steps[j];
        vertices.push(v);
    }
    let mut values: Vec<f64> = Vec::with_capacity(dim + 1);
    for v in &vertices {
        values.push(ev.eval(v)?);
    }

    let mut iters = 0;
    let mut converged = false;
    while iters < opts.max_iters {
        iters += 1;

        let mut order: Vec<usize> = (0..=dim).collect();
        order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
        let best = order[0];
        let worst = order[dim];
        let second_worst = order[dim - 1];
        trace.push(values[best]);

        let spread_ok = if values[worst].is_finite() {
            let denom = values[best].abs() + values[worst].abs() + 1e-300;
            (values[worst] - values[best]).abs() / denom < opts.f_tol
        } else {
            false
        };
        if spread_ok || simplex_diameter(&vertices) < opts.x_tol {
            converged = true;
            break;
        }

        // Centroid of all vertices but the worst.
        let mut centroid = vec![0.0; dim];
        for &i in order.iter().take(dim) {
            for (c, v) in centroid.iter_mut().zip(&vertices[i]) {
                *c += v;
            }
        }
        for c in centroid.iter_mut() {
            *c /= dim as f64;
        }

        let reflect: Vec<f64> = centroid
            .iter()
            .zip(&vertices[worst])
            .map(|(c, w)| c + opts.reflection * (c - w))
            .collect();
        let f_reflect = ev.eval(&reflect)?;

        if f_reflect < values[best] {
            let expand: Vec<f64> = centroid
                .iter()
                .zip(&vertices[worst])
                .map(|(c, w)| c + opts.expansion * (c - w))
                .collect();
            let f_expand = ev.eval(&expand)?;
            if f_expand < f_reflect {
                vertices[worst] = expand;
                values[worst] = f_expand;
            } else {
                vertices[worst] = reflect;
                values[worst] = f_reflect;
            }
            continue;
        }
        if f_reflect < values[second_worst] {
            vertices[worst] = reflect;
            values[worst] = f_reflect;
            continue;
        }

        // Contraction, outside or inside of the worst vertex.
        let (toward, f_toward) = if f_reflect < values[worst] {
            (reflect.clone(), f_reflect)
        } else {
            (vertices[worst].clone(), values[worst])
        };
        let contract: Vec<f64> = centroid
            .iter()
            .zip(&toward)
            .map(|(c, t)| c + opts.contraction * (t - c))
            .collect();
        let f_contract = ev.eval(&contract)?;
        if f_contract < f_toward {
            vertices[worst] = contract;
            values[worst] = f_contract;
            continue;
        }

        // Shrink everything toward the best vertex.
        let best_vertex = vertices[best].clone();
        for i in 0..=dim {
            if i == best {
                continue;
            }
            for (v, b) in vertices[i].iter_mut().zip(&best_vertex) {
                *v = b + opts.shrink * (*v - b);
            }
            values[i] = ev.eval(&vertices[i])?;
        }
    }

    let (best, _) = values
        .iter()
        .enumerate()
        .min_by(|(_, a), (_, b)| a.total_cmp(b))
        .expect("nonempty simplex");
    Ok((vertices[best].clone(), values[best], iters, converged))
}

/// Minimizes the objective from `x0`, restarting around the incumbent up to
/// `opts.restarts` times and keeping the best feasible vertex seen.
pub fn minimize<F: FnMut(&[f64]) -> Option<f64>>(
    mut objective: F,
    x0: &[f64],
    opts: &SimplexOptions,
) -> Result<SimplexResult> {
    opts.validate()?;
    if x0.is_empty() {
        return Err(Error::InvalidParameter("empty starting point".into()));
    }
    let mut ev = Evaluator {
        objective: &mut objective,
        evals: 0,
    };
    let f0 = ev.eval(x0)?;
    if !f0.is_finite() {
        return Err(Error::InfeasibleStart);
    }

    let mut jitter = opts.jitter_seed.map(CounterRng::new);
    let mut trace = Vec::new();
    let mut x_best = x0.to_vec();
    let mut f_best = f0;
    let mut total_iters = 0;
    let mut converged = false;

    for round in 0..=opts.restarts {
        let steps: Vec<f64> = x_best
            .iter()
            .map(|&x| {
                let base = displacement(x);
                match (&mut jitter, round) {
                    (Some(r), n) if n > 0 => base * r.uniform_in(0.5, 1.5),
                    _ => base,
                }
            })
            .collect();
        let (x, f, iters, conv) = run_simplex(&mut ev, &x_best, &steps, opts, &mut trace)?;
        total_iters += iters;
        converged = conv;
        if f < f_best {
            x_best = x;
            f_best = f;
        }
    }

    Ok(SimplexResult {
        x_best,
        f_best,
        iters: total_iters,
        converged,
        trace,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic_minimum() {
        let r = minimize(
            |x| Some((x[0] - 3.0) * (x[0] - 3.0)),
            &[0.0],
            &SimplexOptions::default(),
        )
        .unwrap();
        assert!((r.x_best[0] - 3.0).abs() < 1e-4, "got {}", r.x_best[0]);
        assert!(r.converged);
    }

    #[test]
    fn rosenbrock_minimum() {
        let rosen = |x: &[f64]| {
            let (a, b) = (x[0], x[1]);
            Some(100.0 * (b - a * a).powi(2) + (1.0 - a).powi(2))
        };
        let r = minimize(rosen, &[-1.2, 1.0], &SimplexOptions::default()).unwrap();
        assert!((r.x_best[0] - 1.0).abs() < 1e-3, "x {}", r.x_best[0]);
        assert!((r.x_best[1] - 1.0).abs() < 1e-3, "y {}", r.x_best[1]);
    }

    #[test]
    fn rejection_region_boundary() {
        // |x| with points below -0.5 rejected; the minimum at 0 is interior,
        // which a dense scan over the feasible region confirms.
        let obj = |x: &[f64]| {
            if x[0] < -0.5 {
                None
            } else {
                Some(x[0].abs())
            }
        };
        let scan_min = (0..20_001)
            .map(|i| -0.5 + i as f64 * 1e-4)
            .min_by(|a, b| a.abs().total_cmp(&b.abs()))
            .unwrap();
        assert!(scan_min.abs() < 1e-4);

        let r = minimize(obj, &[1.0], &SimplexOptions::default()).unwrap();
        assert!(r.x_best[0].abs() < 1e-4, "got {}", r.x_best[0]);
        assert!(r.x_best[0] >= -0.5, "returned point must be feasible");
    }

    #[test]
    fn trace_is_monotone() {
        let rosen = |x: &[f64]| {
            let (a, b) = (x[0], x[1]);
            Some(100.0 * (b - a * a).powi(2) + (1.0 - a).powi(2))
        };
        let r = minimize(rosen, &[-1.2, 1.0], &SimplexOptions::default()).unwrap();
        for w in r.trace.windows(2) {
            assert!(w[1] <= w[0], "best-vertex trace increased: {w:?}");
        }
    }

    #[test]
    fn deterministic_repeat() {
        let obj = |x: &[f64]| Some(x[0].powi(4) + x[1] * x[1] - 0.3 * x[0]);
        let a = minimize(obj, &[2.0, -1.0], &SimplexOptions::default()).unwrap();
        let b = minimize(obj, &[2.0, -1.0], &SimplexOptions::default()).unwrap();
        assert_eq!(a.x_best, b.x_best);
        assert_eq!(a.f_best.to_bits(), b.f_best.to_bits());
    }

    #[test]
    fn infeasible_start_errors() {
        let r = minimize(|_| None, &[0.0], &SimplexOptions::default());
        assert!(matches!(r, Err(Error::InfeasibleStart)));
    }

    #[test]
    fn nan_objective_errors() {
        let r = minimize(|_| Some(f64::NAN), &[0.0], &SimplexOptions::default());
        assert!(matches!(r, Err(Error::NonFiniteObjective)));
    }

    #[test]
    fn option_validation() {
        let mut o = SimplexOptions::default();
        o.contraction = 1.5;
        assert!(o.validate().is_err());
    }
}
