use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{quantize, Structure, Symbol};
use crate::error::{Error, Result};
use crate::grid::{lp_sum, Field, GridSpec};
use crate::numerics::{norm, plateau, smooth_step};
use crate::weights::Weight;

/// Axis-aligned cube `|x - center|_inf <= half_width`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpaceBox {
    pub center: Vec<f64>,
    pub half_width: f64,
}

impl SpaceBox {
    pub fn contains(&self, x: &[f64]) -> bool {
        x.iter().zip(&self.center).all(|(a, c)| (a - c).abs() <= self.half_width)
    }

    pub fn enlarged(&self, margin: f64) -> Self {
        Self { center: self.center.clone(), half_width: self.half_width + margin }
    }
}

/// Empirical ellipticity constant on a grid and on its refinement.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EllipticReport {
    /// `min |a(x, xi)| / lambda(xi)^r` over `x in K`, `|xi| >= R`.
    pub c_k: f64,
    pub refined_c_k: f64,
    /// Relative change of the constant under refinement.
    pub drift: f64,
    pub threshold: f64,
    pub passed: bool,
    pub witness: Vec<Vec<f64>>,
}

fn min_ratio(a: &Symbol, lambda: &Weight, r: f64, k: &SpaceBox, big_r: f64, grid: &GridSpec) -> Result<(f64, Vec<Vec<f64>>)> {
    let mut xs: Vec<Vec<f64>> = grid.x_points().into_iter().filter(|x| k.contains(x)).collect();
    if xs.is_empty() {
        xs.push(k.center.clone());
    }
    let xis: Vec<Vec<f64>> = grid.xi_points().into_iter().filter(|xi| norm(xi) >= big_r).collect();
    if xis.is_empty() {
        return Err(Error::EmptyProbeSet(big_r));
    }
    let best = xis
        .par_iter()
        .map(|xi| {
            let l = lambda.eval(xi).powf(r);
            xs.iter()
                .map(|x| (a.eval(x, xi).norm() / l, x))
                .fold((f64::INFINITY, &xs[0]), |b, c| if c.0 < b.0 { c } else { b })
        })
        .map(|(v, x)| (v, x.clone()))
        .zip(xis.par_iter())
        .map(|((v, x), xi)| (v, vec![x, xi.clone()]))
        .reduce(
            || (f64::INFINITY, vec![]),
            |a, b| if b.0 < a.0 || (b.0 == a.0 && b.1 < a.1) { b } else { a },
        );
    Ok(best)
}

/// `c_K = min |a(x, xi)| / lambda(xi)^r` for `x in K` and `|xi| >= R`, on the grid and its refinement.
///
/// Passes when `c_K` exceeds the threshold and moves by at most 10% under refinement.
pub fn check_elliptic(
    a: &Symbol,
    lambda: &Weight,
    r: f64,
    k: &SpaceBox,
    big_r: f64,
    grid: &GridSpec,
    threshold: f64,
) -> Result<EllipticReport> {
    let (c, witness) = min_ratio(a, lambda, r, k, big_r, grid)?;
    let (cr, _) = min_ratio(a, lambda, r, k, big_r, &grid.refined())?;
    let drift = if c > 0.0 { (cr - c).abs() / c } else { f64::INFINITY };
    Ok(EllipticReport { c_k: c, refined_c_k: cr, drift, threshold, passed: c > threshold && drift <= 0.1, witness })
}

/// Region and cutoff radius of the numerical parametrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParametrixConfig {
    /// `x`-region where the parametrix acts as an inverse.
    pub k: SpaceBox,
    /// The `x`-cutoff falls from 1 to 0 across this margin.
    pub margin: f64,
    /// Frequency cutoff: 0 for `|xi| <= R`, 1 for `|xi| >= 2R`.
    pub big_r: f64,
    pub threshold: f64,
}

/// `b(x, xi) = theta(x) chi(xi) / a(x, xi)`, with `theta = 1` on `K` and `0` outside the enlarged box,
/// and `chi` a smooth frequency cutoff. Multipliers skip the `x`-cutoff.
///
/// The symbol must pass `check_elliptic` on the enlarged box beyond `R`.
pub fn approx_parametrix(a: &Symbol, lambda: &Weight, r: f64, cfg: &ParametrixConfig, grid: &GridSpec) -> Result<Symbol> {
    let outer = cfg.k.enlarged(cfg.margin);
    let report = check_elliptic(a, lambda, r, &outer, cfg.big_r, grid, cfg.threshold)?;
    if !report.passed {
        return Err(Error::NotElliptic { c_k: report.c_k });
    }
    let big_r = cfg.big_r;
    let chi = move |xi: &[f64]| smooth_step(norm(xi) / big_r - 1.0);
    if let Structure::Multiplier(m) = a.structure() {
        let m = m.clone();
        return Ok(Symbol::multiplier(a.dim(), move |xi| {
            let c = chi(xi);
            if c == 0.0 {
                Complex64::new(0.0, 0.0)
            } else {
                c / m(xi)
            }
        }));
    }
    let (k, margin) = (cfg.k.clone(), cfg.margin);
    let theta = move |x: &[f64]| -> f64 {
        x.iter().zip(&k.center).map(|(a, c)| plateau(a - c, k.half_width, k.half_width + margin)).product()
    };
    let inner = a.clone();
    Ok(Symbol::from_fn(a.dim(), move |x, xi| {
        let c = theta(x) * chi(xi);
        if c == 0.0 {
            Complex64::new(0.0, 0.0)
        } else {
            c / inner.eval(x, xi)
        }
    }))
}

/// `||phi (b(x,D) a(x,D) u - u)||_2 / ||phi u||_2`.
pub fn composition_error(a: &Symbol, b: &Symbol, u: &Field, phi: &Field) -> Result<f64> {
    let bau = quantize(b, &quantize(a, u)?)?;
    let err = phi.mul(&bau.sub(u)?)?;
    let base = phi.mul(u)?;
    let cell = u.grid.space_cell();
    let num = lp_sum(err.values.iter().map(|v| v.norm()), cell, 2.0);
    let den = lp_sum(base.values.iter().map(|v| v.norm()), cell, 2.0);
    Ok(if den > 0.0 { num / den } else { num })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pdo::Expr;

    fn p_symbol() -> Symbol {
        let e = Expr::add(vec![
            Expr::mul(vec![Expr::i(), Expr::x(0), Expr::xi(0)]),
            Expr::mul(vec![Expr::c(-1.0), Expr::xi(0)]),
            Expr::pow(Expr::xi(1), 2.0),
        ]);
        Symbol::from_expr(2, &e).unwrap()
    }

    fn qh() -> Weight {
        Weight::quasi_homogeneous(&[1, 2], 1.0).unwrap()
    }

    #[test]
    fn weight_symbol_has_unit_constant() {
        let w = qh();
        let w2 = w.clone();
        let a = Symbol::multiplier(2, move |xi| Complex64::new(w2.eval(xi), 0.0));
        let g = GridSpec::new(2, 8.0, 32).unwrap();
        let k = SpaceBox { center: vec![0.0, 0.0], half_width: 1.0 };
        let r = check_elliptic(&a, &w, 1.0, &k, 1.0, &g, 1e-3).unwrap();
        assert_eq!(r.c_k, 1.0);
        assert!(r.passed);
    }

    #[test]
    fn worked_symbol_is_elliptic_away_from_the_axis() {
        let g = GridSpec::new(2, 8.0, 64).unwrap();
        let k = SpaceBox { center: vec![1.0, 0.0], half_width: 0.25 };
        let r = check_elliptic(&p_symbol(), &qh(), 1.0, &k, 1.0, &g, 1e-2).unwrap();
        assert!(r.passed, "{r:?}");
        let k0 = SpaceBox { center: vec![0.0, 0.0], half_width: 0.25 };
        let r0 = check_elliptic(&p_symbol(), &qh(), 1.0, &k0, 1.0, &g, 1e-2).unwrap();
        assert!(!r0.passed, "{r0:?}");
    }

    #[test]
    fn empty_probe_set() {
        let g = GridSpec::new(2, 8.0, 16).unwrap();
        let k = SpaceBox { center: vec![0.0, 0.0], half_width: 1.0 };
        let e = check_elliptic(&p_symbol(), &qh(), 1.0, &k, 1e6, &g, 1e-2).unwrap_err();
        assert!(matches!(e, Error::EmptyProbeSet(_)));
    }

    #[test]
    fn multiplier_parametrix_is_exact_at_high_frequency() {
        let g = GridSpec::new(2, 8.0, 32).unwrap();
        let w = qh();
        let w2 = w.clone();
        let a = Symbol::multiplier(2, move |xi| Complex64::new(w2.eval(xi), 0.0));
        let cfg = ParametrixConfig {
            k: SpaceBox { center: vec![0.0, 0.0], half_width: 8.0 },
            margin: 1.0,
            big_r: 1.0,
            threshold: 1e-3,
        };
        let b = approx_parametrix(&a, &w, 1.0, &cfg, &g).unwrap();
        assert!(b.is_multiplier());
        let u = Field::from_fn(g, |x| {
            Complex64::from_polar((-(x[0] * x[0] + x[1] * x[1]) / 2.0).exp(), 5.0 * x[0] + 5.0 * x[1])
        });
        let phi = Field::from_real(g, |_| 1.0);
        assert!(composition_error(&a, &b, &u, &phi).unwrap() < 1e-6);
    }

    #[test]
    fn non_elliptic_region_is_rejected() {
        let g = GridSpec::new(2, 8.0, 32).unwrap();
        let cfg = ParametrixConfig {
            k: SpaceBox { center: vec![0.0, 0.0], half_width: 0.25 },
            margin: 0.25,
            big_r: 1.0,
            threshold: 1e-2,
        };
        assert!(matches!(approx_parametrix(&p_symbol(), &qh(), 1.0, &cfg, &g), Err(Error::NotElliptic { .. })));
    }
}
