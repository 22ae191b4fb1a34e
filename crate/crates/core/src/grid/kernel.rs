use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;

use super::{lp_sum, GridSpec, Spectrum};
use crate::error::{Error, Result};

/// Output of the mixed-norm kernel operator together with both sides of its bound.
#[derive(Debug, Clone, Serialize)]
pub struct KernelReport {
    #[serde(skip)]
    pub output: Spectrum,
    /// `||T g||_p`.
    pub lhs: f64,
    /// `||f||_{L1^{p,inf}} ||F||_{L2^{inf,q}} ||g||_p`.
    pub bound: f64,
    pub f_norm: f64,
    pub big_f_norm: f64,
    pub g_norm: f64,
    pub ratio: f64,
}

/// Offsets `m dxi` with `|m| < N` on every axis: the lattice of grid differences.
fn difference_lattice(grid: &GridSpec) -> Vec<Vec<f64>> {
    let side = 2 * grid.points - 1;
    let total = side.pow(grid.n as u32);
    let off = (grid.points - 1) as f64;
    (0..total)
        .map(|mut i| {
            let mut v = vec![0.0; grid.n];
            for a in (0..grid.n).rev() {
                v[a] = ((i % side) as f64 - off) * grid.dxi();
                i /= side;
            }
            v
        })
        .collect()
}

/// Discrete `T g(xi) = integral F(xi, eta) f(xi - eta, eta) g(eta) d eta` on the frequency grid.
///
/// The `L1^{p,inf}` norm of `f` runs over the full difference lattice so the discrete bound
/// holds by the same Hoelder steps as the continuous one.
pub fn kernel_apply<FF, Ff>(big_f: FF, f: Ff, g: &Spectrum, p: f64) -> Result<KernelReport>
where
    FF: Fn(&[f64], &[f64]) -> Complex64 + Sync,
    Ff: Fn(&[f64], &[f64]) -> Complex64 + Sync,
{
    if !(p >= 1.0) {
        return Err(Error::BadParam(format!("p must lie in [1, inf], got {p}")));
    }
    let q = if p == 1.0 {
        f64::INFINITY
    } else if p.is_infinite() {
        1.0
    } else {
        p / (p - 1.0)
    };
    let grid = g.grid;
    let pts = grid.xi_points();
    let cell = grid.freq_cell();
    let values: Vec<Complex64> = pts
        .par_iter()
        .map(|xi| {
            let mut acc = Complex64::new(0.0, 0.0);
            let mut diff = vec![0.0; grid.n];
            for (eta, gv) in pts.iter().zip(&g.values) {
                for a in 0..grid.n {
                    diff[a] = xi[a] - eta[a];
                }
                acc += big_f(xi, eta) * f(&diff, eta) * gv;
            }
            acc * cell
        })
        .collect();
    let output = Spectrum { grid, values };

    let big_f_norm = pts
        .par_iter()
        .map(|xi| lp_sum(pts.iter().map(|eta| big_f(xi, eta).norm()), cell, q))
        .reduce(|| 0.0, f64::max);
    let lattice = difference_lattice(&grid);
    let f_norm = pts
        .par_iter()
        .map(|eta| lp_sum(lattice.iter().map(|z| f(z, eta).norm()), cell, p))
        .reduce(|| 0.0, f64::max);
    let g_norm = lp_sum(g.values.iter().map(|v| v.norm()), cell, p);
    let lhs = lp_sum(output.values.iter().map(|v| v.norm()), cell, p);
    let bound = f_norm * big_f_norm * g_norm;
    let ratio = if bound > 0.0 { lhs / bound } else { 0.0 };
    Ok(KernelReport { output, lhs, bound, f_norm, big_f_norm, g_norm, ratio })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_input_gives_zero() {
        let g = GridSpec::new(1, 4.0, 16).unwrap();
        let r = kernel_apply(|_, _| Complex64::new(1.0, 0.0), |_, _| Complex64::new(1.0, 0.0), &Spectrum::zeros(g), 2.0)
            .unwrap();
        assert_eq!(r.lhs, 0.0);
        assert_eq!(r.ratio, 0.0);
    }

    #[test]
    fn lattice_has_all_differences() {
        let g = GridSpec::new(2, 4.0, 8).unwrap();
        let l = difference_lattice(&g);
        assert_eq!(l.len(), 15 * 15);
        assert_eq!(l[0], vec![-7.0 * g.dxi(); 2]);
    }

    #[test]
    fn bound_holds_for_p_one() {
        let g = GridSpec::new(1, 4.0, 32).unwrap();
        let s = Spectrum::from_fn(g, |xi| Complex64::new((-xi[0] * xi[0] / 8.0).exp(), 0.0));
        let r = kernel_apply(
            |xi, eta| Complex64::new(1.0 / (1.0 + (xi[0] - eta[0]).abs()), 0.0),
            |z, _| Complex64::new((-z[0].abs()).exp(), 0.0),
            &s,
            1.0,
        )
        .unwrap();
        assert!(r.ratio <= 1.0);
    }
}
