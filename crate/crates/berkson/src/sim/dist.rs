//! Disturbance distribution strategies.
//!
//! Each family implements [`NoiseDistribution`] and is registered under a
//! name, so scenarios can select one at runtime from a config string such as
//! `scaled_t(6,0.5)`.

use crate::error::{Error, Result};
use crate::rng::CounterRng;
use serde::{de, Deserialize, Deserializer, Serialize, Serializer};
use std::fmt;
use std::sync::Arc;

pub trait NoiseDistribution: Send + Sync {
    /// Canonical spec string, re-parsable by [`parse`].
    fn name(&self) -> String;
    fn sample(&self, rng: &mut CounterRng) -> f64;
    fn std_dev(&self) -> f64;
}

/// Centered normal scaled by `scale`.
pub struct Gaussian {
    pub scale: f64,
}

impl NoiseDistribution for Gaussian {
    fn name(&self) -> String {
        format!("gaussian({})", self.scale)
    }

    fn sample(&self, rng: &mut CounterRng) -> f64 {
        self.scale * rng.normal()
    }

    fn std_dev(&self) -> f64 {
        self.scale
    }
}

/// Student t with integer degrees of freedom, scaled. Sampled as
/// `scale * N / sqrt(chi2_df / df)` where the chi-square is a sum of `df`
/// squared normals, so each draw consumes a fixed number of stream values.
pub struct ScaledT {
    pub df: u32,
    pub scale: f64,
}

impl NoiseDistribution for ScaledT {
    fn name(&self) -> String {
        format!("scaled_t({},{})", self.df, self.scale)
    }

    fn sample(&self, rng: &mut CounterRng) -> f64 {
        let n = rng.normal();
        let mut chi2 = 0.0;
        for _ in 0..self.df {
            let u = rng.normal();
            chi2 += u * u;
        }
        self.scale * n / (chi2 / self.df as f64).sqrt()
    }

    fn std_dev(&self) -> f64 {
        self.scale * (self.df as f64 / (self.df as f64 - 2.0)).sqrt()
    }
}

/// Logistic via inverse CDF: `scale * ln(u / (1 - u))`.
pub struct ScaledLogistic {
    pub scale: f64,
}

impl NoiseDistribution for ScaledLogistic {
    fn name(&self) -> String {
        format!("scaled_logistic({})", self.scale)
    }

    fn sample(&self, rng: &mut CounterRng) -> f64 {
        let u = rng.uniform();
        self.scale * (u / (1.0 - u)).ln()
    }

    fn std_dev(&self) -> f64 {
        self.scale * std::f64::consts::PI / 3.0f64.sqrt()
    }
}

type Builder = fn(&[f64]) -> Result<Arc<dyn NoiseDistribution>>;

fn build_gaussian(args: &[f64]) -> Result<Arc<dyn NoiseDistribution>> {
    let [scale] = expect_args::<1>("gaussian", args)?;
    positive_scale(scale)?;
    Ok(Arc::new(Gaussian { scale }))
}

fn build_scaled_t(args: &[f64]) -> Result<Arc<dyn NoiseDistribution>> {
    let [df, scale] = expect_args::<2>("scaled_t", args)?;
    positive_scale(scale)?;
    if df.fract() != 0.0 || df < 3.0 {
        return Err(Error::InvalidParameter(format!(
            "scaled_t needs integer df >= 3 (finite variance), got {df}"
        )));
    }
    Ok(Arc::new(ScaledT {
        df: df as u32,
        scale,
    }))
}

fn build_scaled_logistic(args: &[f64]) -> Result<Arc<dyn NoiseDistribution>> {
    let [scale] = expect_args::<1>("scaled_logistic", args)?;
    positive_scale(scale)?;
    Ok(Arc::new(ScaledLogistic { scale }))
}

/// Name-keyed distribution registry.
pub const REGISTRY: &[(&str, Builder)] = &[
    ("gaussian", build_gaussian),
    ("scaled_t", build_scaled_t),
    ("scaled_logistic", build_scaled_logistic),
];

fn expect_args<const N: usize>(name: &str, args: &[f64]) -> Result<[f64; N]> {
    args.try_into().map_err(|_| {
        Error::InvalidParameter(format!(
            "{name} takes {N} argument(s), got {}",
            args.len()
        ))
    })
}

fn positive_scale(scale: f64) -> Result<()> {
    if !(scale > 0.0) || !scale.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "distribution scale must be positive, got {scale}"
        )));
    }
    Ok(())
}

pub(crate) fn split_spec(spec: &str) -> Result<(&str, Vec<f64>)> {
    let spec = spec.trim();
    let Some(open) = spec.find('(') else {
        return Ok((spec, Vec::new()));
    };
    let Some(stripped) = spec.strip_suffix(')') else {
        return Err(Error::InvalidParameter(format!(
            "malformed spec `{spec}`: missing closing parenthesis"
        )));
    };
    let name = &stripped[..open];
    let body = &stripped[open + 1..];
    let args = body
        .split(',')
        .filter(|s| !s.trim().is_empty())
        .map(|s| {
            s.trim()
                .parse::<f64>()
                .map_err(|_| Error::InvalidParameter(format!("bad numeric argument `{s}`")))
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok((name, args))
}

/// Resolves a spec string like `scaled_t(6,0.5)` against the registry.
pub fn parse(spec: &str) -> Result<Dist> {
    let (name, args) = split_spec(spec)?;
    for (key, builder) in REGISTRY {
        if *key == name {
            return builder(&args).map(Dist);
        }
    }
    let known: Vec<&str> = REGISTRY.iter().map(|(k, _)| *k).collect();
    Err(Error::InvalidParameter(format!(
        "unknown distribution `{name}`; known: {}",
        known.join(", ")
    )))
}

/// Shared handle to a registered distribution; serialized by its spec string.
#[derive(Clone)]
pub struct Dist(pub Arc<dyn NoiseDistribution>);

impl Dist {
    pub fn sample(&self, rng: &mut CounterRng) -> f64 {
        self.0.sample(rng)
    }

    pub fn std_dev(&self) -> f64 {
        self.0.std_dev()
    }

    pub fn name(&self) -> String {
        self.0.name()
    }
}

impl fmt::Debug for Dist {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Dist({})", self.name())
    }
}

impl PartialEq for Dist {
    fn eq(&self, other: &Self) -> bool {
        self.name() == other.name()
    }
}

impl Serialize for Dist {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.name())
    }
}

impl<'de> Deserialize<'de> for Dist {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        parse(&s).map_err(de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_round_trip() {
        for spec in ["gaussian(1)", "scaled_t(6,0.5)", "scaled_logistic(0.125)"] {
            let d = parse(spec).unwrap();
            assert_eq!(d.name(), spec);
        }
    }

    #[test]
    fn parse_rejects_unknown_and_malformed() {
        assert!(parse("cauchy(1)").is_err());
        assert!(parse("gaussian(1").is_err());
        assert!(parse("gaussian(a)").is_err());
        assert!(parse("scaled_t(2,0.5)").is_err());
        assert!(parse("gaussian(-1)").is_err());
    }

    #[test]
    fn sample_standard_deviations() {
        let n = 400_000;
        for spec in ["gaussian(0.7)", "scaled_t(6,0.5)", "scaled_logistic(0.125)"] {
            let d = parse(spec).unwrap();
            let mut rng = CounterRng::substream(123, 9);
            let mut s1 = 0.0;
            let mut s2 = 0.0;
            for _ in 0..n {
                let v = d.sample(&mut rng);
                s1 += v;
                s2 += v * v;
            }
            let mean = s1 / n as f64;
            let sd = (s2 / n as f64 - mean * mean).sqrt();
            assert!(mean.abs() < 0.01, "{spec}: mean {mean}");
            let rel = (sd - d.std_dev()).abs() / d.std_dev();
            assert!(rel < 0.02, "{spec}: sd {sd} vs {}", d.std_dev());
        }
    }
}
