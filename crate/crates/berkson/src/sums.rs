//! Order-canonical floating-point summation.

/// Sums after sorting into a canonical order, with Neumaier compensation.
///
/// The result depends only on the multiset of values, so reductions built on
/// it are invariant to observation relabeling and to how work was split
/// across threads.
pub fn stable_sum(values: &mut [f64]) -> f64 {
    values.sort_unstable_by(f64::total_cmp);
    let mut sum = 0.0;
    let mut comp = 0.0;
    for &v in values.iter() {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            comp += (sum - t) + v;
        } else {
            comp += (v - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

/// Mean built on [`stable_sum`].
pub fn stable_mean(values: &mut [f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    let n = values.len() as f64;
    stable_sum(values) / n
}

/// Population mean and standard deviation via canonical summation.
pub fn mean_and_sd(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (0.0, 0.0);
    }
    let n = xs.len() as f64;
    let mut v = xs.to_vec();
    let mean = stable_sum(&mut v) / n;
    let mut sq: Vec<f64> = xs.iter().map(|x| (x - mean) * (x - mean)).collect();
    let sd = (stable_sum(&mut sq) / n).sqrt();
    (mean, sd)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn permutation_invariant() {
        let mut a = vec![1e16, 1.0, -1e16, 0.5, 3.25, -7.125];
        let mut b = vec![0.5, -7.125, 1e16, 3.25, 1.0, -1e16];
        assert_eq!(stable_sum(&mut a).to_bits(), stable_sum(&mut b).to_bits());
    }

    #[test]
    fn matches_exact_small_case() {
        let mut v = vec![0.25, 0.5, 0.125];
        assert_eq!(stable_sum(&mut v), 0.875);
    }
}
