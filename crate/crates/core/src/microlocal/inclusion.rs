use serde::{Deserialize, Serialize};

use super::mask::{bracket_neighborhood, euclid_neighborhood, FrequencyMask, SetDescriptor};
use super::schedule;
use crate::error::Result;
use crate::grid::GridSpec;
use crate::weights::Weight;

/// Which neighborhood inclusion to search for.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum InclusionMode {
    /// `(X_[e' w])_[e' w] ⊆ X_[e w]`.
    BracketNested,
    /// `(R^n \ X_[e w])_[e' w] ⊆ R^n \ X_[e' w]`.
    BracketComplement,
    /// `xi in X_[e' w] => w(xi) > c / e'`, with `c` the minimum of `e' w` over all scheduled masks.
    LowerBound,
    /// `(X_{e' l})_{e' l} ⊆ X_{e l}`.
    EuclidNested,
    /// `(R^n \ X_{e l})_{e' l} ⊆ R^n \ X_{e' l}`.
    EuclidComplement,
    /// `(X ∩ {l > c/e'})_{e' l} ⊆ X_[e l] ∩ {l > c/e}`.
    Mixed { c: f64 },
    /// `(X_[e' l])_{e' l} ⊆ X_[e l]`.
    MixedNested,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InclusionStep {
    pub eps_prime: f64,
    pub holds: bool,
    pub lhs_count: usize,
    pub rhs_count: usize,
    pub violations: usize,
    pub witness: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InclusionReport {
    pub mode: InclusionMode,
    pub eps: f64,
    /// Largest scheduled `eps'` for which the inclusion holds on the grid.
    pub eps_prime: Option<f64>,
    pub verified: bool,
    /// Empirical lower-bound constant, for `LowerBound`.
    pub c_hat: Option<f64>,
    pub schedule: Vec<InclusionStep>,
}

/// `(1 - 1e-12) min_k min_{X_k} e_k w` over `(e_k, X_k)` pairs; 0 when all masks are empty.
pub(crate) fn c_hat<'a>(masks: impl Iterator<Item = (f64, &'a FrequencyMask)>, w: &Weight) -> f64 {
    let mut best = f64::INFINITY;
    for (e, m) in masks {
        for i in m.indices() {
            best = best.min(e * w.eval(&m.grid.xi_at(i)));
        }
    }
    if best.is_finite() {
        best * (1.0 - C_HAT_MARGIN)
    } else {
        0.0
    }
}

/// Relative margin below the grid minimum, so `w > c / e` survives the rounding of the quotient.
const C_HAT_MARGIN: f64 = 1e-12;

fn above(grid: &GridSpec, w: &Weight, t: f64) -> FrequencyMask {
    let bits = grid.xi_points().iter().map(|xi| w.eval(xi) > t).collect();
    FrequencyMask {
        grid: *grid,
        bits,
        generator: SetDescriptor::Above { weight: w.descriptor().clone(), threshold: t },
    }
}

fn step(eps_prime: f64, lhs: &FrequencyMask, rhs: &FrequencyMask) -> Result<InclusionStep> {
    let bad = lhs.violations(rhs)?;
    Ok(InclusionStep {
        eps_prime,
        holds: bad.is_empty(),
        lhs_count: lhs.count(),
        rhs_count: rhs.count(),
        violations: bad.len(),
        witness: bad.first().map(|&i| lhs.grid.xi_at(i)),
    })
}

/// Evaluates the inclusion at every `eps' = eps / 2^k`, `k = 1..=10`, and reports the largest that holds.
///
/// `w` is the bracket weight; Euclidean neighborhoods use radius exponent `1/mu` with `mu` its upper growth.
pub fn find_inclusion_eps(
    x: &SetDescriptor,
    w: &Weight,
    eps: f64,
    mode: InclusionMode,
    grid: &GridSpec,
) -> Result<InclusionReport> {
    let base = x.build(grid)?;
    let mu = w.meta().growth_upper;
    let sched = schedule(eps);
    let mut steps = Vec::with_capacity(sched.len());
    let mut c_hat_value = None;
    match mode {
        InclusionMode::BracketNested | InclusionMode::BracketComplement => {
            let big = bracket_neighborhood(&base, w, eps)?;
            for &e in &sched {
                let small = bracket_neighborhood(&base, w, e)?;
                let s = if mode == InclusionMode::BracketNested {
                    step(e, &bracket_neighborhood(&small, w, e)?, &big)?
                } else {
                    step(e, &bracket_neighborhood(&big.complement(), w, e)?, &small.complement())?
                };
                steps.push(s);
            }
        }
        InclusionMode::EuclidNested | InclusionMode::EuclidComplement => {
            let big = euclid_neighborhood(&base, w, eps, mu)?;
            for &e in &sched {
                let small = euclid_neighborhood(&base, w, e, mu)?;
                let s = if mode == InclusionMode::EuclidNested {
                    step(e, &euclid_neighborhood(&small, w, e, mu)?, &big)?
                } else {
                    step(e, &euclid_neighborhood(&big.complement(), w, e, mu)?, &small.complement())?
                };
                steps.push(s);
            }
        }
        InclusionMode::LowerBound => {
            let masks: Vec<FrequencyMask> =
                sched.iter().map(|&e| bracket_neighborhood(&base, w, e)).collect::<Result<_>>()?;
            let c = c_hat(sched.iter().copied().zip(masks.iter()), w);
            for (&e, m) in sched.iter().zip(&masks) {
                steps.push(step(e, m, &above(grid, w, c / e))?);
            }
            c_hat_value = Some(c);
        }
        InclusionMode::Mixed { c } => {
            let rhs = bracket_neighborhood(&base, w, eps)?.intersection(&above(grid, w, c / eps))?;
            for &e in &sched {
                let lhs = euclid_neighborhood(&base.intersection(&above(grid, w, c / e))?, w, e, mu)?;
                steps.push(step(e, &lhs, &rhs)?);
            }
        }
        InclusionMode::MixedNested => {
            let rhs = bracket_neighborhood(&base, w, eps)?;
            for &e in &sched {
                let lhs = euclid_neighborhood(&bracket_neighborhood(&base, w, e)?, w, e, mu)?;
                steps.push(step(e, &lhs, &rhs)?);
            }
        }
    }
    let eps_prime = match mode {
        InclusionMode::LowerBound => {
            (c_hat_value.unwrap_or(0.0) > 0.0 && steps.iter().all(|s| s.holds)).then(|| sched[0])
        }
        _ => steps.iter().find(|s| s.holds).map(|s| s.eps_prime),
    };
    Ok(InclusionReport { mode, eps, eps_prime, verified: eps_prime.is_some(), c_hat: c_hat_value, schedule: steps })
}
