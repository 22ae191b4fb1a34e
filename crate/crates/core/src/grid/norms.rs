use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::{dft, Field, GridSpec, Spectrum};
use crate::error::{Error, Result};
use crate::numerics::CompensatedSum;
use crate::weights::Weight;

/// Samples that know their coordinates and cell volume.
pub trait Sampled {
    fn grid(&self) -> &GridSpec;
    fn values(&self) -> &[Complex64];
    fn coord(&self, i: usize) -> Vec<f64>;
    fn cell(&self) -> f64;
}

impl Sampled for Field {
    fn grid(&self) -> &GridSpec {
        &self.grid
    }
    fn values(&self) -> &[Complex64] {
        &self.values
    }
    fn coord(&self, i: usize) -> Vec<f64> {
        self.grid.x_at(i)
    }
    fn cell(&self) -> f64 {
        self.grid.space_cell()
    }
}

impl Sampled for Spectrum {
    fn grid(&self) -> &GridSpec {
        &self.grid
    }
    fn values(&self) -> &[Complex64] {
        &self.values
    }
    fn coord(&self, i: usize) -> Vec<f64> {
        self.grid.xi_at(i)
    }
    fn cell(&self) -> f64 {
        self.grid.freq_cell()
    }
}

/// `(cell * sum |a_i|^p)^(1/p)`, or the maximum for `p = INFINITY`.
pub fn lp_sum<I: IntoIterator<Item = f64>>(abs_values: I, cell: f64, p: f64) -> f64 {
    if p.is_infinite() {
        return abs_values.into_iter().fold(0.0, f64::max);
    }
    let mut s = CompensatedSum::new();
    for a in abs_values {
        s.add(if p == 1.0 {
            a
        } else if p == 2.0 {
            a * a
        } else {
            a.powf(p)
        });
    }
    let total = s.value() * cell;
    if p == 1.0 {
        total
    } else if p == 2.0 {
        total.sqrt()
    } else {
        total.powf(1.0 / p)
    }
}

/// Riemann sum of `(integral w^p |f|^p)^(1/p)`.
pub fn weighted_lp_norm<S: Sampled>(s: &S, w: &Weight, p: f64) -> f64 {
    let v = s.values();
    lp_sum((0..v.len()).map(|i| w.eval(&s.coord(i)) * v[i].norm()), s.cell(), p)
}

/// `||f||_{FL^p_w} = ||w f_hat||_{L^p}`.
pub fn fl_norm(f: &Field, w: &Weight, p: f64) -> f64 {
    weighted_lp_norm(&dft(f), w, p)
}

/// `||phi u||_{FL^p_w}`.
pub fn local_fl_norm(u: &Field, phi: &Field, w: &Weight, p: f64) -> Result<f64> {
    Ok(fl_norm(&phi.mul(u)?, w, p))
}

/// Order of integration of a mixed norm over `(zeta, eta)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum MixedKind {
    /// Inner `L^p` in `zeta`, outer `L^q` in `eta`.
    L1pq,
    /// Inner `L^q` in `eta`, outer `L^p` in `zeta`.
    L2pq,
}

fn plain_lp(values: impl Iterator<Item = f64>, cell: f64, p: f64) -> f64 {
    if p.is_infinite() {
        return values.fold(0.0, f64::max);
    }
    let mut s = 0.0;
    for v in values {
        s += v.powf(p);
    }
    (s * cell).powf(1.0 / p)
}

/// Iterated Riemann sums of a table `table[i * cols + j] = F(zeta_i, eta_j)`.
pub fn mixed_norm(
    table: &[f64],
    rows: usize,
    cols: usize,
    d_zeta: f64,
    d_eta: f64,
    kind: MixedKind,
    p: f64,
    q: f64,
) -> Result<f64> {
    if table.len() != rows * cols {
        return Err(Error::GridMismatch(format!("table of {} entries for {rows}x{cols}", table.len())));
    }
    Ok(match kind {
        MixedKind::L1pq => {
            let inner: Vec<f64> =
                (0..cols).map(|j| plain_lp((0..rows).map(|i| table[i * cols + j].abs()), d_zeta, p)).collect();
            plain_lp(inner.into_iter(), d_eta, q)
        }
        MixedKind::L2pq => {
            let inner: Vec<f64> =
                (0..rows).map(|i| plain_lp((0..cols).map(|j| table[i * cols + j].abs()), d_eta, q)).collect();
            plain_lp(inner.into_iter(), d_zeta, p)
        }
    })
}

/// Fractions of squared mass near the box boundary and in the outer frequency band.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BandLimit {
    /// Mass with some `|x_j| > 3L/4`.
    pub space_tail: f64,
    /// Mass with some `|xi_j| > band * xi_max`.
    pub freq_tail: f64,
}

/// Measures how well a field fits its box and a frequency band `band * xi_max`.
pub fn band_limit(f: &Field, band: f64) -> BandLimit {
    let g = f.grid;
    let total: f64 = f.values.iter().map(|v| v.norm_sqr()).sum();
    if total == 0.0 {
        return BandLimit { space_tail: 0.0, freq_tail: 0.0 };
    }
    let edge = 0.75 * g.extent;
    let space: f64 = (0..g.len())
        .filter(|&i| g.x_at(i).iter().any(|x| x.abs() > edge))
        .map(|i| f.values[i].norm_sqr())
        .sum();
    let s = dft(f);
    let stotal: f64 = s.values.iter().map(|v| v.norm_sqr()).sum();
    let cut = band * g.xi_max();
    let freq: f64 = (0..g.len())
        .filter(|&i| g.xi_at(i).iter().any(|x| x.abs() > cut))
        .map(|i| s.values[i].norm_sqr())
        .sum();
    BandLimit { space_tail: space / total, freq_tail: freq / stotal }
}

/// Fails with `AliasRisk` unless both tails stay below `tol`.
pub fn require_band_limited(f: &Field, band: f64, tol: f64) -> Result<()> {
    let b = band_limit(f, band);
    if b.space_tail > tol || b.freq_tail > tol {
        return Err(Error::AliasRisk(format!(
            "tail mass in space {:.3e}, beyond {band} of the band {:.3e} (tolerance {tol:e})",
            b.space_tail, b.freq_tail
        )));
    }
    Ok(())
}
