use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::conditions::{probe_points, Condition, ConditionReport, SamplingPlan};
use super::{DerivativeRule, Weight};
use crate::error::{Error, Result};

/// Probe set and finite-difference step policy for derivative checks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DerivativeGrid {
    pub plan: SamplingPlan,
    /// Step as a fraction of the local scale `base(xi)^(1/mu)`.
    pub step_fraction: f64,
    /// Constant of the slowly varying radius the step must stay below.
    pub sv_constant: f64,
}

impl DerivativeGrid {
    pub fn standard(dim: usize, seed: u64) -> Self {
        Self { plan: SamplingPlan::standard(dim, seed), step_fraction: 1e-3, sv_constant: 2.0 }
    }
}

/// Tensor central difference of order `alpha` (each entry at most 2) with step `h`.
fn central_difference<F: Fn(&[f64]) -> f64>(f: &F, xi: &[f64], alpha: &[u32], h: f64) -> f64 {
    // per-axis stencils: offsets and coefficients
    let stencil = |a: u32| -> Vec<(f64, f64)> {
        match a {
            0 => vec![(0.0, 1.0)],
            1 => vec![(1.0, 0.5 / h), (-1.0, -0.5 / h)],
            _ => vec![(1.0, 1.0 / (h * h)), (0.0, -2.0 / (h * h)), (-1.0, 1.0 / (h * h))],
        }
    };
    let stencils: Vec<Vec<(f64, f64)>> = alpha.iter().map(|&a| stencil(a)).collect();
    let mut total = 0.0;
    let mut idx = vec![0usize; xi.len()];
    let mut point = xi.to_vec();
    loop {
        let mut coef = 1.0;
        for j in 0..xi.len() {
            let (off, c) = stencils[j][idx[j]];
            point[j] = xi[j] + off * h;
            coef *= c;
        }
        total += coef * f(&point);
        let mut j = 0;
        loop {
            if j == xi.len() {
                return total;
            }
            idx[j] += 1;
            if idx[j] < stencils[j].len() {
                break;
            }
            idx[j] = 0;
            j += 1;
        }
    }
}

/// Checks `|D^alpha w^s| <= C base^(t - decay(alpha))` where `w = base^t` and the decay is
/// `<alpha, 1/M>` for quasi-homogeneous weights and `|alpha|/mu` for multi-quasi-elliptic ones.
pub fn check_derivative_decay(w: &Weight, s: f64, alpha: &[u32], grid: &DerivativeGrid) -> Result<ConditionReport> {
    let plan = &grid.plan;
    plan.validate()?;
    w.check_dim(plan.dim)?;
    if alpha.len() != plan.dim {
        return Err(Error::BadParam(format!("multi-index {alpha:?} does not match dimension {}", plan.dim)));
    }
    if alpha.iter().sum::<u32>() > 2 {
        return Err(Error::BadParam(format!("multi-index {alpha:?} has order above 2")));
    }
    let (rule, base_power) = w
        .derivative_rule()
        .ok_or_else(|| Error::BadParam("weight family has no derivative rule".into()))?;
    let (decay, mu) = match rule {
        DerivativeRule::QuasiHomogeneous { m } => (
            alpha.iter().zip(m).map(|(&a, &mj)| a as f64 / mj as f64).sum::<f64>(),
            *m.iter().max().unwrap() as f64,
        ),
        DerivativeRule::MultiQuasiElliptic { mu } => (alpha.iter().sum::<u32>() as f64 / mu, *mu),
        DerivativeRule::Constant => (0.0, 1.0),
    };
    if grid.step_fraction * grid.sv_constant >= 1.0 || !(grid.step_fraction > 0.0) {
        return Err(Error::StepTooCoarse { step: grid.step_fraction, radius: 1.0 / grid.sv_constant, at: vec![] });
    }
    let power = base_power * s;
    let exponent = power - decay;
    let f = |xi: &[f64]| w.eval(xi).powf(s);

    let mut level_constants = Vec::new();
    let mut witness = Vec::new();
    for level in &plan.levels {
        let probes = probe_points(plan.dim, level);
        let ratios: Vec<Result<f64>> = probes
            .par_iter()
            .map(|xi| {
                let base = w.derivative_base(xi).max(1.0);
                let scale = base.powf(1.0 / mu);
                let h = grid.step_fraction * scale;
                let radius = scale / grid.sv_constant;
                if h > radius {
                    return Err(Error::StepTooCoarse { step: h, radius, at: xi.clone() });
                }
                let d = central_difference(&f, xi, alpha, h);
                Ok(d.abs() / base.powf(exponent))
            })
            .collect();
        let mut best = (f64::NEG_INFINITY, 0);
        for (i, r) in ratios.into_iter().enumerate() {
            let r = r?;
            if r > best.0 || r.is_nan() {
                best = (r, i);
            }
        }
        level_constants.push(best.0);
        witness = vec![probes[best.1].clone()];
    }
    let (a, b) = (level_constants[level_constants.len() - 2], level_constants[level_constants.len() - 1]);
    let refinement_ratio = if a == b {
        1.0
    } else if a > 0.0 {
        b / a
    } else {
        f64::INFINITY
    };
    let passed = b.is_finite() && (refinement_ratio <= 1.1 || b < 1e-9);
    Ok(ConditionReport {
        condition: Condition::D,
        passed,
        empirical_constant: b,
        witness,
        refinement_ratio,
        level_constants,
        fitted_delta: None,
        exponents: vec![exponent],
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quasi() -> Weight {
        Weight::quasi_homogeneous(&[1, 2], 1.0).unwrap()
    }

    #[test]
    fn second_axis_decays_by_half() {
        let r = check_derivative_decay(&quasi(), 1.0, &[0, 1], &DerivativeGrid::standard(2, 0)).unwrap();
        assert!(r.passed, "{r:?}");
        assert_eq!(r.exponents, vec![0.5]);
    }

    #[test]
    fn first_axis_decays_fully() {
        let r = check_derivative_decay(&quasi(), 1.0, &[1, 0], &DerivativeGrid::standard(2, 0)).unwrap();
        assert!(r.passed);
        assert_eq!(r.exponents, vec![0.0]);
        // |d/dxi_1 <xi>_M| = |xi_1| / <xi>_M <= 1
        assert!(r.empirical_constant <= 1.0 + 1e-6);
    }

    #[test]
    fn constant_weight_has_vanishing_differences() {
        let r = check_derivative_decay(&Weight::constant(3.0), 1.0, &[2], &DerivativeGrid::standard(1, 0)).unwrap();
        assert!(r.passed);
        assert!(r.empirical_constant < 1e-9);
    }

    #[test]
    fn coarse_step_is_rejected() {
        let mut g = DerivativeGrid::standard(2, 0);
        g.step_fraction = 0.9;
        let e = check_derivative_decay(&quasi(), 1.0, &[1, 0], &g).unwrap_err();
        assert!(matches!(e, Error::StepTooCoarse { .. }));
    }

    #[test]
    fn central_difference_of_polynomial() {
        let f = |x: &[f64]| x[0] * x[0] * x[1];
        let d = central_difference(&f, &[1.5, 2.0], &[1, 1], 1e-3);
        assert!((d - 3.0).abs() < 1e-6);
    }
}
