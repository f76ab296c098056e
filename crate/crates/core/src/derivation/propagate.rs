//! First-order uncertainty propagation for the formulas used in derivation.
//!
//! Inputs are treated as uncorrelated; each formula documents its partial
//! derivatives.

use std::fmt;
use std::str::FromStr;

use super::Measured;
use crate::constants::PhysicalConstants;
use crate::error::{Error, Result};
use crate::physics;
use crate::scalar::Real;

/// Formula tag accepted by [`propagate_uncertainty`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Formula {
    /// `[a, b] -> a·b`; ∂/∂a = b, ∂/∂b = a.
    Product,
    /// `[a, b] -> a/b`; ∂/∂a = 1/b, ∂/∂b = −a/b².
    Quotient,
    /// `[a] -> aᵖ`; ∂/∂a = p·aᵖ⁻¹.
    Power(f64),
    /// `[Δ, δR, Δ_S] -> 3 Δ δR / Δ_S`; relative uncertainties add in quadrature.
    Closure,
    /// `[γ_PS] -> 𝒟 ∝ √γ_PS` in e·a₀; relative uncertainty halves.
    MatrixElement,
    /// `[γ_PS, b] -> τ = 1/(γ_PS (1 + b/3))`;
    /// ∂τ/∂γ = −τ/γ, ∂τ/∂b = −τ/(3 + b).
    Lifetime,
    /// `[b] -> 1/(1 + b/3)`; ∂/∂b = −1/(3 (1 + b/3)²).
    Branching,
    /// `[B] -> b = 3 (1/B − 1)`; ∂/∂B = −3/B².
    LeakFromBranching,
    /// `[γ_PS, b] -> γ_PD = b γ_PS / 3`; ∂/∂γ = b/3, ∂/∂b = γ/3.
    GammaPd,
    /// `[x₁, …] -> √Σ xᵢ²`; ∂/∂xᵢ = xᵢ / result.
    Quadrature,
}

impl fmt::Display for Formula {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Formula::Product => f.write_str("product"),
            Formula::Quotient => f.write_str("quotient"),
            Formula::Power(p) => write!(f, "power:{p}"),
            Formula::Closure => f.write_str("closure"),
            Formula::MatrixElement => f.write_str("matrix_element"),
            Formula::Lifetime => f.write_str("lifetime"),
            Formula::Branching => f.write_str("branching"),
            Formula::LeakFromBranching => f.write_str("leak_from_branching"),
            Formula::GammaPd => f.write_str("gamma_pd"),
            Formula::Quadrature => f.write_str("quadrature"),
        }
    }
}

impl FromStr for Formula {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s.trim() {
            "product" => Formula::Product,
            "quotient" => Formula::Quotient,
            "closure" => Formula::Closure,
            "matrix_element" => Formula::MatrixElement,
            "lifetime" => Formula::Lifetime,
            "branching" => Formula::Branching,
            "leak_from_branching" => Formula::LeakFromBranching,
            "gamma_pd" => Formula::GammaPd,
            "quadrature" => Formula::Quadrature,
            other => match other.strip_prefix("power:").map(str::parse::<f64>) {
                Some(Ok(p)) if p.is_finite() => Formula::Power(p),
                _ => return Err(Error::Input(format!("unknown formula tag `{other}`"))),
            },
        })
    }
}

fn arity<T>(inputs: &[Measured<T>], n: usize, formula: Formula) -> Result<()> {
    if inputs.len() != n {
        return Err(Error::Input(format!(
            "formula `{formula}` takes {n} inputs, got {}",
            inputs.len()
        )));
    }
    Ok(())
}

fn combine<T: Real>(value: T, terms: &[(T, T)]) -> Measured<T> {
    let var = terms
        .iter()
        .fold(T::zero(), |acc, &(d, s)| acc + d * d * s * s);
    Measured::new(value, var.sqrt())
}

/// Linearized propagation of uncorrelated standard uncertainties.
pub fn propagate_uncertainty<T: Real>(
    inputs: &[Measured<T>],
    formula: Formula,
    constants: &PhysicalConstants<T>,
) -> Result<Measured<T>> {
    for m in inputs {
        if !(m.unc >= T::zero() && m.unc.is_finite() && m.value.is_finite()) {
            return Err(Error::Domain(format!(
                "input {} ± {} needs a finite value and an uncertainty >= 0",
                m.value, m.unc
            )));
        }
    }
    let three = T::lit(3.0);
    let out = match formula {
        Formula::Product => {
            arity(inputs, 2, formula)?;
            let (a, b) = (inputs[0], inputs[1]);
            combine(a.value * b.value, &[(b.value, a.unc), (a.value, b.unc)])
        }
        Formula::Quotient => {
            arity(inputs, 2, formula)?;
            let (a, b) = (inputs[0], inputs[1]);
            if b.value == T::zero() {
                return Err(Error::Domain("division by zero".into()));
            }
            let q = a.value / b.value;
            combine(q, &[(T::one() / b.value, a.unc), (-q / b.value, b.unc)])
        }
        Formula::Power(p) => {
            arity(inputs, 1, formula)?;
            let a = inputs[0];
            let p = T::lit(p);
            if a.value <= T::zero() && p.fract() != T::zero() {
                return Err(Error::Domain("fractional power of a non-positive value".into()));
            }
            combine(a.value.powf(p), &[(p * a.value.powf(p - T::one()), a.unc)])
        }
        Formula::Closure => {
            arity(inputs, 3, formula)?;
            let (d, dr, s) = (inputs[0], inputs[1], inputs[2]);
            let g = physics::closure_gamma_ps(d.value, dr.value, s.value)?;
            combine(
                g,
                &[
                    (three * dr.value / s.value, d.unc),
                    (three * d.value / s.value, dr.unc),
                    (-g / s.value, s.unc),
                ],
            )
        }
        Formula::MatrixElement => {
            arity(inputs, 1, formula)?;
            let g = inputs[0];
            let d = physics::matrix_element(g.value, constants)?;
            combine(d, &[(d / (T::lit(2.0) * g.value), g.unc)])
        }
        Formula::Lifetime => {
            arity(inputs, 2, formula)?;
            let (g, b) = (inputs[0], inputs[1]);
            let tau = physics::DecayConstants::from_leak_factor(g.value, b.value)?.lifetime();
            combine(tau, &[(-tau / g.value, g.unc), (-tau / (three + b.value), b.unc)])
        }
        Formula::Branching => {
            arity(inputs, 1, formula)?;
            let b = inputs[0];
            if b.value < T::zero() {
                return Err(Error::Domain("leak factor must be >= 0".into()));
            }
            let br = physics::branching_from_leak(b.value);
            combine(br, &[(-br * br / three, b.unc)])
        }
        Formula::LeakFromBranching => {
            arity(inputs, 1, formula)?;
            let br = inputs[0];
            if !(br.value > T::zero() && br.value <= T::one()) {
                return Err(Error::Domain("branching fraction must lie in (0, 1]".into()));
            }
            combine(
                physics::leak_from_branching(br.value),
                &[(-three / (br.value * br.value), br.unc)],
            )
        }
        Formula::GammaPd => {
            arity(inputs, 2, formula)?;
            let (g, b) = (inputs[0], inputs[1]);
            let d = physics::DecayConstants::from_leak_factor(g.value, b.value)?;
            combine(d.gamma_pd(), &[(b.value / three, g.unc), (g.value / three, b.unc)])
        }
        Formula::Quadrature => {
            if inputs.is_empty() {
                return Err(Error::Input("quadrature of an empty list".into()));
            }
            let q = inputs
                .iter()
                .fold(T::zero(), |acc, m| acc + m.value * m.value)
                .sqrt();
            if q == T::zero() {
                let unc = inputs.iter().fold(T::zero(), |acc, m| acc.max(m.unc));
                Measured::new(q, unc)
            } else {
                let terms: Vec<_> = inputs.iter().map(|m| (m.value / q, m.unc)).collect();
                combine(q, &terms)
            }
        }
    };
    Ok(out)
}
