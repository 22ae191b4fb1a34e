use std::sync::Arc;

use num_complex::Complex64;
use serde::Serialize;

use super::mask::{euclid_neighborhood, FrequencyMask, SetDescriptor};
use super::schedule;
use crate::error::{Error, Result};
use crate::grid::GridSpec;
use crate::pdo::Symbol;
use crate::weights::Weight;

/// Growth allowed in the finite-difference seminorms when the frequency spacing is halved.
pub const SEMINORM_DRIFT: f64 = 0.25;

/// A posteriori checks of a cutoff symbol.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CutoffReport {
    /// `{sigma > 0} ⊆ X_{eps lambda}` on the grid.
    pub support_ok: bool,
    /// Largest scheduled `eps'` with `sigma = 1` on `X_{eps' lambda}`.
    pub eps_prime: Option<f64>,
    /// `sup |D^alpha sigma| lambda^(|alpha|/mu)` for `|alpha| = 1, 2`.
    pub seminorms: [f64; 2],
    /// The same on the grid with half the frequency spacing.
    pub refined_seminorms: [f64; 2],
    pub smooth_ok: bool,
    /// Smallest mollifier radius in units of the frequency spacing.
    pub min_radius_cells: f64,
}

/// Frequency cutoff `sigma(xi) in [0, 1]` sampled on a grid.
#[derive(Debug, Clone)]
pub struct Cutoff {
    pub grid: GridSpec,
    pub values: Vec<f64>,
    pub eps_prime: f64,
    pub report: CutoffReport,
}

impl Cutoff {
    /// Fourier multiplier that reads the nearest sample; zero outside the grid.
    pub fn symbol(&self) -> Symbol {
        let (grid, values) = (self.grid, Arc::new(self.values.clone()));
        Symbol::multiplier(grid.n, move |xi| {
            Complex64::new(grid.xi_index(xi).map_or(0.0, |i| values[i]), 0.0)
        })
    }
}

fn bump(r: f64) -> f64 {
    if r >= 1.0 {
        0.0
    } else {
        (-1.0 / (1.0 - r * r)).exp()
    }
}

/// Normalized average of the indicator over the ball of radius `kappa lambda(xi)^(1/mu)`, bump-weighted.
fn mollify(grid: &GridSpec, inside: &[bool], lambda: &Weight, kappa: f64, mu: f64) -> (Vec<f64>, f64) {
    let (n, np, h) = (grid.n, grid.points as isize, grid.dxi());
    let mut idx = vec![0usize; n];
    let mut off = vec![0isize; n];
    let mut min_cells = f64::INFINITY;
    let values = (0..grid.len())
        .map(|i| {
            let xi = grid.xi_at(i);
            let rho = kappa * lambda.eval(&xi).powf(1.0 / mu);
            min_cells = min_cells.min(rho / h);
            let reach = (rho / h).floor() as isize;
            grid.unravel(i, &mut idx);
            let (mut num, mut den) = (0.0, 0.0);
            off.iter_mut().for_each(|o| *o = -reach);
            'walk: loop {
                let mut flat = 0usize;
                let mut r2 = 0.0;
                let mut ok = true;
                for a in 0..n {
                    let t = idx[a] as isize + off[a];
                    if t < 0 || t >= np {
                        ok = false;
                    }
                    flat = flat * np as usize + t.max(0) as usize;
                    r2 += (off[a] as f64 * h).powi(2);
                }
                if ok {
                    let b = bump(r2.sqrt() / rho);
                    if b > 0.0 || r2 == 0.0 {
                        let b = if r2 == 0.0 { bump(0.0) } else { b };
                        den += b;
                        if inside[flat] {
                            num += b;
                        }
                    }
                }
                for a in (0..n).rev() {
                    off[a] += 1;
                    if off[a] <= reach {
                        continue 'walk;
                    }
                    off[a] = -reach;
                }
                break;
            }
            num / den
        })
        .collect();
    (values, min_cells)
}

/// `sup |D^alpha sigma| lambda^(|alpha|/mu)` over interior samples, central differences.
fn fd_seminorms(grid: &GridSpec, s: &[f64], lambda: &Weight, mu: f64) -> [f64; 2] {
    let (n, np, h) = (grid.n, grid.points, grid.dxi());
    let stride: Vec<usize> = (0..n).map(|a| np.pow((n - 1 - a) as u32)).collect();
    let mut idx = vec![0usize; n];
    let mut out = [0.0f64; 2];
    for i in 0..grid.len() {
        grid.unravel(i, &mut idx);
        if idx.iter().any(|&k| k == 0 || k + 1 == np) {
            continue;
        }
        let l = lambda.eval(&grid.xi_at(i)).powf(1.0 / mu);
        for a in 0..n {
            let (p, m) = (s[i + stride[a]], s[i - stride[a]]);
            out[0] = out[0].max(((p - m) / (2.0 * h)).abs() * l);
            out[1] = out[1].max(((p - 2.0 * s[i] + m) / (h * h)).abs() * l * l);
            for b in a + 1..n {
                let d = s[i + stride[a] + stride[b]] - s[i + stride[a] - stride[b]] - s[i - stride[a] + stride[b]]
                    + s[i - stride[a] - stride[b]];
                out[1] = out[1].max((d / (4.0 * h * h)).abs() * l * l);
            }
        }
    }
    out
}

fn build(x: &SetDescriptor, eps: f64, lambda: &Weight, grid: &GridSpec) -> Result<(Vec<f64>, f64, FrequencyMask, f64)> {
    let mu = lambda.meta().growth_upper;
    let base = x.build(grid)?;
    let core = euclid_neighborhood(&base, lambda, eps / 4.0, mu)?;
    let (values, cells) = mollify(grid, &core.bits, lambda, eps / 8.0, mu);
    Ok((values, cells, base, mu))
}

/// Cutoff of `X_{eps'' lambda}`, `eps'' = eps/4`, mollified with radius `(eps/8) lambda^(1/mu)`.
///
/// Checked on the grid: support inside `X_{eps lambda}`, plateau on some scheduled `X_{eps' lambda}`,
/// and finite-difference seminorms that move by at most 25% when the frequency spacing is halved.
pub fn cutoff_symbol(x: &SetDescriptor, eps: f64, lambda: &Weight, grid: &GridSpec) -> Result<Cutoff> {
    if !(eps > 0.0) {
        return Err(Error::BadParam(format!("eps must be positive, got {eps}")));
    }
    let (values, cells, base, mu) = build(x, eps, lambda, grid)?;
    let outer = euclid_neighborhood(&base, lambda, eps, mu)?;
    let support_ok = values.iter().zip(&outer.bits).all(|(&v, &b)| v == 0.0 || b);
    let mut eps_prime = None;
    for e in schedule(eps) {
        let inner = euclid_neighborhood(&base, lambda, e, mu)?;
        if inner.indices().all(|i| values[i] == 1.0) {
            eps_prime = Some(e);
            break;
        }
    }
    let seminorms = fd_seminorms(grid, &values, lambda, mu);
    let fine_grid = grid.frequency_refined();
    let (fine, _, _, _) = build(x, eps, lambda, &fine_grid)?;
    let refined_seminorms = fd_seminorms(&fine_grid, &fine, lambda, mu);
    let smooth_ok = seminorms.iter().zip(&refined_seminorms).all(|(&a, &b)| {
        a.is_finite() && b.is_finite() && (b <= 1e-12 || (b <= a * (1.0 + SEMINORM_DRIFT) && a <= b * (1.0 + SEMINORM_DRIFT)))
    });
    let report = CutoffReport { support_ok, eps_prime, seminorms, refined_seminorms, smooth_ok, min_radius_cells: cells };
    match (support_ok, eps_prime, smooth_ok) {
        (true, Some(e), true) => Ok(Cutoff { grid: *grid, values, eps_prime: e, report }),
        _ => Err(Error::ConstructionFailed(format!(
            "support {support_ok}, plateau {eps_prime:?}, seminorms {seminorms:?} -> {refined_seminorms:?}; \
             mollifier radius {:.3e} lambda^(1/mu) spans at least {cells:.2} cells",
            eps / 8.0
        ))),
    }
}
