use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::cutoff::cutoff_symbol;
use super::mask::{bracket_neighborhood, euclid_neighborhood, FrequencyMask, SetDescriptor};
use crate::error::{Error, Result};
use crate::grid::{dft, fl_norm, lp_sum, Field, GridSpec};
use crate::pdo::{quantize, symbol_fl_seminorm_masked, verify_continuity, EstimateReport, Symbol};
use crate::weights::{SamplingPlan, Weight};

/// Growth under refinement below which a norm counts as finite.
pub const FINITE_GROWTH: f64 = 0.1;
/// Growth under refinement above which a norm counts as divergent.
pub const DIVERGENT_GROWTH: f64 = 0.5;

/// Samples a field on a requested grid, so a query can be repeated at doubled resolution.
pub type Sampler<'a> = &'a (dyn Fn(&GridSpec) -> Field + Sync);

/// `||w F(f)||_{L^p}` restricted to the mask.
pub fn masked_fl_norm(f: &Field, mask: &FrequencyMask, w: &Weight, p: f64) -> Result<f64> {
    f.grid.check_same(&mask.grid)?;
    let s = dft(f);
    let vals = &s.values;
    Ok(lp_sum(mask.indices().map(|i| w.eval(&f.grid.xi_at(i)) * vals[i].norm()), f.grid.freq_cell(), p))
}

/// `|phi u|_{X_[eps w]}`: the `FL^p_w` norm of `phi u` over the bracket neighborhood of `X`.
pub fn mcl_fl_norm(u: &Field, phi: &Field, x: &SetDescriptor, eps: f64, w: &Weight, p: f64) -> Result<f64> {
    u.grid.check_same(&phi.grid)?;
    let mask = bracket_neighborhood(&x.build(&u.grid)?, w, eps)?;
    masked_fl_norm(&phi.mul(u)?, &mask, w, p)
}

/// Refinement verdict for a grid surrogate of an integral.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Finite,
    Divergent,
    Indeterminate,
}

impl Verdict {
    /// Relative growth `fine / coarse - 1`, with `0 -> 0` read as no growth.
    pub fn classify(coarse: f64, fine: f64) -> (f64, Self) {
        let growth = if coarse > 0.0 {
            fine / coarse - 1.0
        } else if fine == 0.0 {
            0.0
        } else {
            f64::INFINITY
        };
        let v = if !growth.is_finite() || growth > DIVERGENT_GROWTH {
            Verdict::Divergent
        } else if growth < FINITE_GROWTH {
            Verdict::Finite
        } else {
            Verdict::Indeterminate
        };
        (growth, v)
    }

    pub fn member(self) -> Option<bool> {
        match self {
            Verdict::Finite => Some(true),
            Verdict::Divergent => Some(false),
            Verdict::Indeterminate => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FilterReport {
    pub coarse: f64,
    pub fine: f64,
    pub growth: f64,
    pub verdict: Verdict,
    /// `X` belongs to the filter of singularities.
    pub member: bool,
}

impl FilterReport {
    fn new(coarse: f64, fine: f64) -> Self {
        let (growth, verdict) = Verdict::classify(coarse, fine);
        Self { coarse, fine, growth, verdict, member: verdict == Verdict::Finite }
    }
}

/// Whether `X` is in the filter of `FL^p_w` singularities at the support of `phi`: the microlocal
/// norm over the complement of `X` stays finite when the grid is refined.
pub fn filter_membership(
    u: Sampler,
    phi: Sampler,
    x: &SetDescriptor,
    eps: f64,
    w: &Weight,
    p: f64,
    grid: &GridSpec,
) -> Result<FilterReport> {
    let rest = x.clone().complement();
    let norm = |g: &GridSpec| mcl_fl_norm(&u(g), &phi(g), &rest, eps, w, p);
    Ok(FilterReport::new(norm(grid)?, norm(&grid.refined())?))
}

/// Same query through a cutoff: `sigma(D)(phi u)` in `FL^p_w`, with `sigma` the cutoff of the complement of `X`.
pub fn cutoff_membership(
    u: Sampler,
    phi: Sampler,
    x: &SetDescriptor,
    eps: f64,
    lambda: &Weight,
    w: &Weight,
    p: f64,
    grid: &GridSpec,
) -> Result<FilterReport> {
    let rest = x.clone().complement();
    let norm = |g: &GridSpec| -> Result<f64> {
        let sigma = cutoff_symbol(&rest, eps, lambda, g)?;
        let s = dft(&phi(g).mul(&u(g))?);
        let vals = &s.values;
        Ok(lp_sum((0..g.len()).map(|i| sigma.values[i] * w.eval(&g.xi_at(i)) * vals[i].norm()), g.freq_cell(), p))
    };
    Ok(FilterReport::new(norm(grid)?, norm(&grid.refined())?))
}

/// Ellipticity search parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MclEllipticConfig {
    /// Schedule `eps0 / 2^k`, `k = 0..10`.
    pub eps0: f64,
    /// `c0` must exceed this.
    pub threshold: f64,
    /// Also check `x` in a ball of radius `eps` around `x0` and `xi` in `(X_[eps l])_{eps l}`.
    pub two_sided: bool,
    /// Smallest fraction of the samples of `X` that `X_[eps l]` must contain for `eps` to be tried.
    pub min_coverage: f64,
}

impl Default for MclEllipticConfig {
    fn default() -> Self {
        Self { eps0: 0.5, threshold: 0.01, two_sided: false, min_coverage: 0.5 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MclEllipticStep {
    pub eps: f64,
    pub count: usize,
    /// Fraction of the samples of `X` inside the mask.
    pub coverage: f64,
    /// `min |a(x0, xi)| / lambda(xi)^r` over the mask; `None` when empty.
    pub c0: Option<f64>,
    pub witness: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MclEllipticReport {
    pub passed: bool,
    /// Constant at `eps_used`, or the best over the schedule when nothing passes.
    pub c0: f64,
    pub eps_used: Option<f64>,
    /// Two-sided constant at `eps_used`, when requested.
    pub c_star: Option<f64>,
    pub schedule: Vec<MclEllipticStep>,
}

fn min_over(a: &Symbol, xs: &[Vec<f64>], mask: &FrequencyMask, lambda: &Weight, r: f64) -> Option<(f64, Vec<f64>)> {
    let idx: Vec<usize> = mask.indices().collect();
    idx.par_iter()
        .map(|&i| {
            let xi = mask.grid.xi_at(i);
            let l = lambda.eval(&xi).powf(r);
            let v = xs.iter().map(|x| a.eval(x, &xi).norm() / l).fold(f64::INFINITY, f64::min);
            (v, i)
        })
        .reduce_with(|p, q| if q.0 < p.0 || (q.0 == p.0 && q.1 < p.1) { q } else { p })
        .map(|(v, i)| (v, mask.grid.xi_at(i)))
}

fn ball_samples(x0: &[f64], radius: f64) -> Vec<Vec<f64>> {
    let n = x0.len();
    let ticks = [-1.0, -0.5, 0.0, 0.5, 1.0];
    let mut out = Vec::new();
    for k in 0..ticks.len().pow(n as u32) {
        let mut rest = k;
        let off: Vec<f64> = (0..n)
            .map(|_| {
                let t = ticks[rest % ticks.len()];
                rest /= ticks.len();
                t * radius / (n as f64).sqrt()
            })
            .collect();
        out.push(x0.iter().zip(&off).map(|(a, b)| a + b).collect());
    }
    out
}

/// Largest scheduled `eps` with `|a(x0, xi)| >= c0 lambda(xi)^r` on `X_[eps lambda]` and `c0` above the threshold.
///
/// Only `eps` whose mask holds at least `min_coverage` of the samples of `X` are tried: smaller masks
/// keep just the few generators near the edge of the window and say nothing about `X`.
pub fn mcl_elliptic(
    a: &Symbol,
    x0: &[f64],
    x: &SetDescriptor,
    r: f64,
    lambda: &Weight,
    grid: &GridSpec,
    cfg: &MclEllipticConfig,
) -> Result<MclEllipticReport> {
    if x0.len() != grid.n || a.dim() != grid.n {
        return Err(Error::BadParam(format!("point and symbol must have dimension {}", grid.n)));
    }
    let base = x.build(grid)?;
    let at = [x0.to_vec()];
    let mut schedule = Vec::new();
    let mut masks = Vec::new();
    for k in 0..10 {
        let eps = cfg.eps0 / 2f64.powi(k);
        let mask = bracket_neighborhood(&base, lambda, eps)?;
        let best = min_over(a, &at, &mask, lambda, r);
        let covered = mask.intersection(&base)?.count();
        schedule.push(MclEllipticStep {
            eps,
            count: mask.count(),
            coverage: if base.count() > 0 { covered as f64 / base.count() as f64 } else { 0.0 },
            c0: best.as_ref().map(|b| b.0),
            witness: best.map(|b| b.1),
        });
        masks.push(mask);
    }
    if schedule.iter().all(|s| s.count == 0) {
        return Err(Error::EmptyMask);
    }
    let admissible = |s: &MclEllipticStep| s.coverage >= cfg.min_coverage;
    let hit = schedule.iter().position(|s| admissible(s) && s.c0.is_some_and(|c| c > cfg.threshold));
    let (passed, c0, eps_used) = match hit {
        Some(k) => (true, schedule[k].c0.unwrap_or(0.0), Some(schedule[k].eps)),
        None => {
            let best = schedule.iter().filter(|s| admissible(s)).filter_map(|s| s.c0).fold(None, |b: Option<f64>, c| {
                Some(b.map_or(c, |b| b.max(c)))
            });
            (false, best.unwrap_or(0.0), None)
        }
    };
    let c_star = match (cfg.two_sided, hit) {
        (true, Some(k)) => {
            let eps = schedule[k].eps;
            let mu = lambda.meta().growth_upper;
            let wide = euclid_neighborhood(&masks[k], lambda, eps, mu)?;
            min_over(a, &ball_samples(x0, eps), &wide, lambda, r).map(|b| b.0)
        }
        _ => None,
    };
    Ok(MclEllipticReport { passed, c0, eps_used, c_star, schedule })
}

/// Whether `X` is in the characteristic filter at `x0`: `a` is microlocally elliptic on the complement.
pub fn symbol_filter_membership(
    a: &Symbol,
    x0: &[f64],
    x: &SetDescriptor,
    r: f64,
    lambda: &Weight,
    grid: &GridSpec,
    cfg: &MclEllipticConfig,
) -> Result<MclEllipticReport> {
    mcl_elliptic(a, x0, &x.clone().complement(), r, lambda, grid, cfg)
}

/// The weights of the microlocal continuity estimate.
#[derive(Debug, Clone)]
pub struct MclWeights {
    pub lambda: Weight,
    pub big_lambda: Weight,
    pub gamma: Weight,
    pub sigma: Weight,
}

/// Terms of the microlocal continuity bound on one grid.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MclTerms {
    pub points: usize,
    /// `|phi a(x,D) u|_{X_[eps Lambda]}`.
    pub lhs_mcl: f64,
    /// `||phi a(x,D) u||_{FL^p_lambda}`.
    pub lhs_loc: f64,
    /// `||1/sigma||_{L^q}` on the frequency grid.
    pub inv_sigma_q: f64,
    pub symbol_loc: f64,
    pub symbol_mcl: f64,
    pub u_loc: f64,
    pub u_mcl: f64,
    pub bound: f64,
    /// `(lhs_mcl + lhs_loc) / bound`.
    pub ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MclContinuityReport {
    pub coarse: MclTerms,
    pub fine: MclTerms,
    /// `fine.ratio / coarse.ratio`.
    pub ratio_growth: f64,
    /// `fine lhs / coarse lhs`.
    pub lhs_growth: f64,
    pub passed: bool,
    /// The single-weight estimate, when `lambda` and `Lambda` coincide.
    pub degenerate: Option<EstimateReport>,
    /// `|lhs_loc - degenerate.lhs|`, relative.
    pub degenerate_gap: Option<f64>,
}

/// Allowed growth of the bound ratio and the left-hand side when the grid is refined.
pub const MCL_RATIO_GROWTH: f64 = 1.1;

fn conjugate(p: f64) -> f64 {
    if p == 1.0 {
        f64::INFINITY
    } else if p.is_infinite() {
        1.0
    } else {
        p / (p - 1.0)
    }
}

fn check_chain(w: &MclWeights, grid: &GridSpec) -> Result<()> {
    let tol = 1e-12;
    for xi in grid.xi_points() {
        let (s, l, big) = (w.sigma.eval(&xi), w.lambda.eval(&xi), w.big_lambda.eval(&xi));
        let le = |a: f64, b: f64| a <= b * (1.0 + tol);
        if !(le(s, l) && le(l, big) && le(big * s, l * l)) {
            return Err(Error::PreconditionChainBroken(format!(
                "at xi = {xi:?}: sigma {s}, lambda {l}, Lambda {big}, lambda^2/sigma {}",
                l * l / s
            )));
        }
    }
    Ok(())
}

fn mcl_terms(
    a: &Symbol,
    u: &Field,
    phi: &Field,
    x: &SetDescriptor,
    eps: f64,
    w: &MclWeights,
    p: f64,
) -> Result<MclTerms> {
    let grid = u.grid;
    check_chain(w, &grid)?;
    let base = x.build(&grid)?;
    let out_mask = bracket_neighborhood(&base, &w.big_lambda, eps)?;
    let big_gamma = w.big_lambda.product(&w.gamma)?;
    let in_mask = bracket_neighborhood(&base, &big_gamma, eps)?;
    let lambda_gamma = w.lambda.product(&w.gamma)?;
    let image = phi.mul(&quantize(a, u)?)?;
    let lhs_mcl = masked_fl_norm(&image, &out_mask, &w.big_lambda, p)?;
    let lhs_loc = fl_norm(&image, &w.lambda, p);
    let inv_sigma_q =
        lp_sum(grid.xi_points().iter().map(|xi| 1.0 / w.sigma.eval(xi)), grid.freq_cell(), conjugate(p));
    let symbol_loc = symbol_fl_seminorm_masked(a, phi, &w.lambda, &w.gamma, p, None)?;
    let symbol_mcl = symbol_fl_seminorm_masked(a, phi, &w.big_lambda, &w.gamma, p, Some(&out_mask.bits))?;
    let u_loc = fl_norm(u, &lambda_gamma, p);
    let u_mcl = masked_fl_norm(u, &in_mask, &big_gamma, p)?;
    let bound = inv_sigma_q * (symbol_loc + symbol_mcl) * (u_loc + u_mcl);
    let lhs = lhs_mcl + lhs_loc;
    let ratio = if bound > 0.0 {
        lhs / bound
    } else if lhs == 0.0 {
        0.0
    } else {
        f64::INFINITY
    };
    Ok(MclTerms {
        points: grid.points,
        lhs_mcl,
        lhs_loc,
        inv_sigma_q,
        symbol_loc,
        symbol_mcl,
        u_loc,
        u_mcl,
        bound,
        ratio,
    })
}

fn growth(coarse: f64, fine: f64) -> f64 {
    if coarse > 0.0 {
        fine / coarse
    } else if fine == 0.0 {
        1.0
    } else {
        f64::INFINITY
    }
}

/// Two-grid study of the microlocal continuity bound; passes when the left-hand side is finite and
/// neither it nor its ratio to the structured bound grows by more than 10% under refinement.
///
/// When `lambda` and `Lambda` coincide the single-weight estimate is run as well.
#[allow(clippy::too_many_arguments)]
pub fn verify_mcl_continuity(
    a: &Symbol,
    u: Sampler,
    phi: Sampler,
    x: &SetDescriptor,
    eps: f64,
    weights: &MclWeights,
    p: f64,
    grid: &GridSpec,
    plan: &SamplingPlan,
) -> Result<MclContinuityReport> {
    let fine_grid = grid.refined();
    let (u0, phi0) = (u(grid), phi(grid));
    let coarse = mcl_terms(a, &u0, &phi0, x, eps, weights, p)?;
    let fine = mcl_terms(a, &u(&fine_grid), &phi(&fine_grid), x, eps, weights, p)?;
    let ratio_growth = growth(coarse.ratio, fine.ratio);
    let lhs_growth = growth(coarse.lhs_mcl + coarse.lhs_loc, fine.lhs_mcl + fine.lhs_loc);
    let passed = (fine.lhs_mcl + fine.lhs_loc).is_finite()
        && ratio_growth <= MCL_RATIO_GROWTH
        && lhs_growth <= MCL_RATIO_GROWTH;
    let (degenerate, degenerate_gap) = if weights.lambda.descriptor() == weights.big_lambda.descriptor() {
        let lg = weights.lambda.product(&weights.gamma)?;
        let rep = verify_continuity(a, &weights.lambda, &lg, &weights.lambda, &weights.gamma, p, &u0, &phi0, plan)?;
        let gap = (coarse.lhs_loc - rep.lhs).abs() / rep.lhs.abs().max(f64::MIN_POSITIVE);
        (Some(rep), Some(gap))
    } else {
        (None, None)
    };
    Ok(MclContinuityReport { coarse, fine, ratio_growth, lhs_growth, passed, degenerate, degenerate_gap })
}
