//! Bootstrap cross-validation over sieve-order tuples.
//!
//! A fraction `p` of the sample is excluded at random, the model is fitted on
//! the remainder, and the mean held-out log density is recorded. Partitions
//! are drawn once per index from seeded substreams and shared across all
//! candidates (common random numbers), so the comparison is paired and the
//! table is reproducible for any thread count.

use crate::error::{Error, Result};
use crate::estimator::{fit, EstimatorConfig, SieveOrders};
use crate::likelihood::{conditional_density, Dataset, QuadratureGrid, DENSITY_FLOOR};
use crate::rng::CounterRng;
use crate::simplex::SimplexOptions;
use crate::sums::stable_sum;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SelectionPlan {
    pub candidates: Vec<SieveOrders>,
    /// Held-out fraction p in (0, 1).
    pub holdout_fraction: f64,
    /// Number of random partitions B.
    pub partitions: usize,
    pub seed: u64,
}

impl SelectionPlan {
    /// Candidate grid used by the benchmark study: density tails span
    /// {1,2,3,4} jointly, regression orders span {4,...,7} jointly.
    pub fn benchmark_candidates() -> Vec<SieveOrders> {
        let mut out = Vec::new();
        for k_dx in 1..=4 {
            for k_dy in 1..=4 {
                for k_dz in 1..=4 {
                    for k_g in 4..=7 {
                        for k_h in 4..=7 {
                            out.push(SieveOrders {
                                k_dx,
                                k_dy,
                                k_dz,
                                k_g,
                                k_h,
                            });
                        }
                    }
                }
            }
        }
        out
    }

    pub fn validate(&self, n: usize) -> Result<()> {
        if self.candidates.is_empty() {
            return Err(Error::InvalidParameter("empty candidate list".into()));
        }
        if self.partitions == 0 {
            return Err(Error::InvalidParameter(
                "need at least one partition".into(),
            ));
        }
        if !(self.holdout_fraction > 0.0 && self.holdout_fraction < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "holdout fraction must lie in (0, 1), got {}",
                self.holdout_fraction
            )));
        }
        let m = self.holdout_size(n);
        if m < 2 {
            return Err(Error::InvalidParameter(format!(
                "holdout of {m} observations is too small (n·p must be >= 2)"
            )));
        }
        let max_params = self
            .candidates
            .iter()
            .map(SieveOrders::n_params)
            .max()
            .unwrap_or(0);
        if n - m <= max_params {
            return Err(Error::InvalidParameter(format!(
                "training fraction ({} obs) cannot support {max_params} parameters",
                n - m
            )));
        }
        for c in &self.candidates {
            c.validate()?;
        }
        Ok(())
    }

    pub fn holdout_size(&self, n: usize) -> usize {
        ((n as f64) * self.holdout_fraction).floor() as usize
    }

    /// Partition `b`: held-out indices drawn without replacement from a
    /// seeded substream, identical for every candidate.
    pub fn partition(&self, n: usize, b: usize) -> Vec<usize> {
        let m = self.holdout_size(n);
        let mut rng = CounterRng::substream(self.seed, b as u64);
        let mut idx: Vec<usize> = (0..n).collect();
        for i in 0..m {
            let j = i + (rng.next_u64() % (n - i) as u64) as usize;
            idx.swap(i, j);
        }
        idx.truncate(m);
        idx
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SelectionRow {
    pub orders: SieveOrders,
    pub mean_criterion: f64,
    pub std_error: f64,
    /// 1 = selected.
    pub rank: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SelectionTable {
    pub rows: Vec<SelectionRow>,
}

fn split(d: &Dataset, holdout: &[usize]) -> (Dataset, Dataset) {
    let mut is_held = vec![false; d.n()];
    for &i in holdout {
        is_held[i] = true;
    }
    let mut train = Vec::with_capacity(d.n() - holdout.len());
    let mut held = Vec::with_capacity(holdout.len());
    for (i, r) in d.rows.iter().enumerate() {
        if is_held[i] {
            held.push(*r);
        } else {
            train.push(*r);
        }
    }
    (
        Dataset::new(train).expect("nonempty train"),
        Dataset::new(held).expect("nonempty holdout"),
    )
}

/// Mean held-out log density; infeasible observations contribute the floor.
fn holdout_score(
    params: &crate::sieve::ModelParams,
    held: &Dataset,
    grid: &QuadratureGrid,
) -> f64 {
    let mut terms: Vec<f64> = held
        .rows
        .iter()
        .map(|r| {
            let cd = conditional_density(params, r.y, r.z, r.x, grid);
            if cd.feasible && cd.value > DENSITY_FLOOR && cd.value.is_finite() {
                cd.value.ln()
            } else {
                DENSITY_FLOOR.ln()
            }
        })
        .collect();
    stable_sum(&mut terms) / held.n() as f64
}

/// Scores every candidate on every shared partition and returns the argmax
/// of the mean held-out criterion, ties broken toward the lexicographically
/// smallest tuple.
pub fn select(
    d: &Dataset,
    plan: &SelectionPlan,
    grid: &QuadratureGrid,
    opts: &SimplexOptions,
    cfg: &EstimatorConfig,
) -> Result<(SieveOrders, SelectionTable)> {
    plan.validate(d.n())?;
    let n_c = plan.candidates.len();
    let n_b = plan.partitions;

    let splits: Vec<(Dataset, Dataset)> = (0..n_b)
        .map(|b| split(d, &plan.partition(d.n(), b)))
        .collect();

    // One task per (candidate, partition); a failed fit scores the floor so
    // the candidate is penalized deterministically rather than dropped.
    let scores: Vec<f64> = (0..n_c * n_b)
        .into_par_iter()
        .map(|t| {
            let (ci, bi) = (t / n_b, t % n_b);
            let (train, held) = &splits[bi];
            match fit(train, &plan.candidates[ci], grid, opts, cfg) {
                Ok(fr) => holdout_score(&fr.params, held, grid),
                Err(_) => DENSITY_FLOOR.ln(),
            }
        })
        .collect();

    let mut rows: Vec<SelectionRow> = plan
        .candidates
        .iter()
        .enumerate()
        .map(|(ci, &orders)| {
            let slice = &scores[ci * n_b..(ci + 1) * n_b];
            let mut vals = slice.to_vec();
            let mean = stable_sum(&mut vals) / n_b as f64;
            let std_error = if n_b > 1 {
                let mut sq: Vec<f64> = slice.iter().map(|s| (s - mean) * (s - mean)).collect();
                (stable_sum(&mut sq) / (n_b - 1) as f64).sqrt() / (n_b as f64).sqrt()
            } else {
                0.0
            };
            SelectionRow {
                orders,
                mean_criterion: mean,
                std_error,
                rank: 0,
            }
        })
        .collect();

    let best = rows
        .iter()
        .map(|r| (r.mean_criterion, r.orders))
        .max_by(|(ma, oa), (mb, ob)| {
            ma.total_cmp(mb)
                .then_with(|| ob.cmp(oa)) // smaller tuple wins ties
        })
        .map(|(_, o)| o)
        .expect("nonempty candidates");

    let mut order: Vec<usize> = (0..rows.len()).collect();
    order.sort_by(|&a, &b| {
        rows[b]
            .mean_criterion
            .total_cmp(&rows[a].mean_criterion)
            .then_with(|| rows[a].orders.cmp(&rows[b].orders))
    });
    for (rank, &i) in order.iter().enumerate() {
        rows[i].rank = rank + 1;
    }

    Ok((best, SelectionTable { rows }))
}
