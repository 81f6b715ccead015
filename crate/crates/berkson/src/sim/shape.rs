//! True regression function strategies for scenario generation, registered
//! by name like the distribution families.

use crate::error::{Error, Result};
use crate::sim::dist::split_spec;
use serde::{de, Deserialize, Deserializer, Serialize, Serializer};
use std::fmt;
use std::sync::Arc;

pub trait RegressionShape: Send + Sync {
    fn name(&self) -> String;
    fn eval(&self, x: f64) -> f64;
}

/// `x`
pub struct Identity;

impl RegressionShape for Identity {
    fn name(&self) -> String {
        "identity".into()
    }

    fn eval(&self, x: f64) -> f64 {
        x
    }
}

/// `|x| x`: quadratic magnitude with a sign, only finitely differentiable at 0.
pub struct AbsQuadratic;

impl RegressionShape for AbsQuadratic {
    fn name(&self) -> String {
        "abs_quadratic".into()
    }

    fn eval(&self, x: f64) -> f64 {
        x.abs() * x
    }
}

/// `ln(1 + exp(2x))`: strictly convex and monotone.
pub struct SoftplusTwoX;

impl RegressionShape for SoftplusTwoX {
    fn name(&self) -> String {
        "softplus2x".into()
    }

    fn eval(&self, x: f64) -> f64 {
        let t = 2.0 * x;
        if t > 0.0 {
            t + (-t).exp().ln_1p()
        } else {
            t.exp().ln_1p()
        }
    }
}

/// Arbitrary polynomial with ascending coefficients.
pub struct Polynomial {
    pub coeffs: Vec<f64>,
}

impl RegressionShape for Polynomial {
    fn name(&self) -> String {
        let args: Vec<String> = self.coeffs.iter().map(|c| c.to_string()).collect();
        format!("poly({})", args.join(","))
    }

    fn eval(&self, x: f64) -> f64 {
        let mut acc = 0.0;
        for &c in self.coeffs.iter().rev() {
            acc = acc * x + c;
        }
        acc
    }
}

type Builder = fn(&[f64]) -> Result<Arc<dyn RegressionShape>>;

fn no_args(name: &str, args: &[f64]) -> Result<()> {
    if args.is_empty() {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!(
            "{name} takes no arguments"
        )))
    }
}

fn build_identity(args: &[f64]) -> Result<Arc<dyn RegressionShape>> {
    no_args("identity", args)?;
    Ok(Arc::new(Identity))
}

fn build_abs_quadratic(args: &[f64]) -> Result<Arc<dyn RegressionShape>> {
    no_args("abs_quadratic", args)?;
    Ok(Arc::new(AbsQuadratic))
}

fn build_softplus(args: &[f64]) -> Result<Arc<dyn RegressionShape>> {
    no_args("softplus2x", args)?;
    Ok(Arc::new(SoftplusTwoX))
}

fn build_poly(args: &[f64]) -> Result<Arc<dyn RegressionShape>> {
    if args.is_empty() {
        return Err(Error::InvalidParameter(
            "poly needs at least one coefficient".into(),
        ));
    }
    Ok(Arc::new(Polynomial {
        coeffs: args.to_vec(),
    }))
}

pub const REGISTRY: &[(&str, Builder)] = &[
    ("identity", build_identity),
    ("abs_quadratic", build_abs_quadratic),
    ("softplus2x", build_softplus),
    ("poly", build_poly),
];

pub fn parse(spec: &str) -> Result<Shape> {
    let (name, args) = split_spec(spec)?;
    for (key, builder) in REGISTRY {
        if *key == name {
            return builder(&args).map(Shape);
        }
    }
    let known: Vec<&str> = REGISTRY.iter().map(|(k, _)| *k).collect();
    Err(Error::InvalidParameter(format!(
        "unknown regression shape `{name}`; known: {}",
        known.join(", ")
    )))
}

/// Shared handle to a registered shape; serialized by its spec string.
#[derive(Clone)]
pub struct Shape(pub Arc<dyn RegressionShape>);

impl Shape {
    pub fn eval(&self, x: f64) -> f64 {
        self.0.eval(x)
    }

    pub fn name(&self) -> String {
        self.0.name()
    }
}

impl fmt::Debug for Shape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Shape({})", self.name())
    }
}

impl PartialEq for Shape {
    fn eq(&self, other: &Self) -> bool {
        self.name() == other.name()
    }
}

impl Serialize for Shape {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.name())
    }
}

impl<'de> Deserialize<'de> for Shape {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        parse(&s).map_err(de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn named_shapes_evaluate() {
        assert_eq!(parse("abs_quadratic").unwrap().eval(-0.5), -0.25);
        assert_abs_diff_eq!(
            parse("softplus2x").unwrap().eval(0.0),
            std::f64::consts::LN_2,
            epsilon = 1e-15
        );
        assert_eq!(parse("identity").unwrap().eval(3.25), 3.25);
        assert_eq!(parse("poly(1,0,2)").unwrap().eval(2.0), 9.0);
    }

    #[test]
    fn softplus_is_stable_for_large_arguments() {
        let s = parse("softplus2x").unwrap();
        assert_abs_diff_eq!(s.eval(400.0), 800.0, epsilon = 1e-9);
        assert!(s.eval(-400.0).abs() < 1e-300);
    }

    #[test]
    fn poly_round_trips_by_name() {
        let s = parse("poly(0.5,-1,2)").unwrap();
        let t = parse(&s.name()).unwrap();
        assert_eq!(s, t);
    }
}
