//! Periodic grids, the DFT pair and weighted norms.
//!
//! Space samples sit at `x_j = -L + j dx` with `dx = 2L/N` and frequency samples at
//! `xi_k = (k - N/2) pi / L`. The forward transform carries no `2 pi` and is scaled by the
//! cell volume, so it approximates `integral e^{-i x xi} f(x) dx`; the inverse carries
//! `(2 pi)^{-n}`.

mod io;
mod kernel;
mod norms;

pub use io::{
    read_field, read_spectrum, read_values, write_csv, write_field, write_spectrum, write_values, Header,
};
pub use kernel::{kernel_apply, KernelReport};
pub use norms::{
    band_limit, fl_norm, local_fl_norm, lp_sum, mixed_norm, require_band_limited, weighted_lp_norm, BandLimit,
    MixedKind, Sampled,
};

use std::sync::Arc;

use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Uniform periodic sampling of `[-L, L)^n` and its dual frequency grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub n: usize,
    /// Half-width `L` of the box on every axis.
    pub extent: f64,
    /// Samples per axis, a power of two and at least 8.
    pub points: usize,
}

impl GridSpec {
    pub fn new(n: usize, extent: f64, points: usize) -> Result<Self> {
        if !(1..=3).contains(&n) {
            return Err(Error::RejectDimension(n));
        }
        if points < 8 || !points.is_power_of_two() {
            return Err(Error::BadParam(format!("points must be a power of two >= 8, got {points}")));
        }
        if !(extent > 0.0) || !extent.is_finite() {
            return Err(Error::BadParam(format!("extent must be positive, got {extent}")));
        }
        Ok(Self { n, extent, points })
    }

    /// Total number of samples `points^n`.
    pub fn len(&self) -> usize {
        self.points.pow(self.n as u32)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn dx(&self) -> f64 {
        2.0 * self.extent / self.points as f64
    }

    pub fn dxi(&self) -> f64 {
        std::f64::consts::PI / self.extent
    }

    /// Largest frequency magnitude per axis, `pi N / (2L)`.
    pub fn xi_max(&self) -> f64 {
        self.dxi() * (self.points / 2) as f64
    }

    pub fn space_cell(&self) -> f64 {
        self.dx().powi(self.n as i32)
    }

    pub fn freq_cell(&self) -> f64 {
        self.dxi().powi(self.n as i32)
    }

    pub fn x_axis(&self) -> Vec<f64> {
        (0..self.points).map(|j| -self.extent + j as f64 * self.dx()).collect()
    }

    pub fn xi_axis(&self) -> Vec<f64> {
        let h = (self.points / 2) as f64;
        (0..self.points).map(|k| (k as f64 - h) * self.dxi()).collect()
    }

    /// Multi-index of a flat row-major index (first axis slowest).
    pub fn unravel(&self, mut i: usize, out: &mut [usize]) {
        for a in (0..self.n).rev() {
            out[a] = i % self.points;
            i /= self.points;
        }
    }

    pub fn ravel(&self, idx: &[usize]) -> usize {
        idx.iter().fold(0, |acc, &i| acc * self.points + i)
    }

    pub fn x_at(&self, i: usize) -> Vec<f64> {
        let mut idx = vec![0; self.n];
        self.unravel(i, &mut idx);
        idx.iter().map(|&j| -self.extent + j as f64 * self.dx()).collect()
    }

    pub fn xi_at(&self, i: usize) -> Vec<f64> {
        let mut idx = vec![0; self.n];
        self.unravel(i, &mut idx);
        let h = (self.points / 2) as f64;
        idx.iter().map(|&k| (k as f64 - h) * self.dxi()).collect()
    }

    /// All space points in flat order.
    pub fn x_points(&self) -> Vec<Vec<f64>> {
        (0..self.len()).map(|i| self.x_at(i)).collect()
    }

    /// All frequency points in flat order.
    pub fn xi_points(&self) -> Vec<Vec<f64>> {
        (0..self.len()).map(|i| self.xi_at(i)).collect()
    }

    /// Flat index of the frequency sample nearest to `xi`, if inside the grid.
    pub fn xi_index(&self, xi: &[f64]) -> Option<usize> {
        let h = (self.points / 2) as f64;
        let mut idx = Vec::with_capacity(self.n);
        for &c in xi {
            let k = (c / self.dxi() + h).round();
            if k < 0.0 || k >= self.points as f64 {
                return None;
            }
            idx.push(k as usize);
        }
        Some(self.ravel(&idx))
    }

    /// Same box, twice the samples per axis.
    pub fn refined(&self) -> Self {
        Self { points: self.points * 2, ..*self }
    }

    /// Same frequency window, half the frequency spacing.
    pub fn frequency_refined(&self) -> Self {
        Self { extent: self.extent * 2.0, points: self.points * 2, ..*self }
    }

    pub fn check_same(&self, other: &GridSpec) -> Result<()> {
        if self != other {
            return Err(Error::GridMismatch(format!("{self:?} vs {other:?}")));
        }
        Ok(())
    }
}

/// Complex samples on the space grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Field {
    pub grid: GridSpec,
    pub values: Vec<Complex64>,
}

/// Complex samples on the frequency grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    pub grid: GridSpec,
    pub values: Vec<Complex64>,
}

impl Field {
    pub fn new(grid: GridSpec, values: Vec<Complex64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::GridMismatch(format!("{} values for {} samples", values.len(), grid.len())));
        }
        Ok(Self { grid, values })
    }

    pub fn zeros(grid: GridSpec) -> Self {
        Self { grid, values: vec![Complex64::new(0.0, 0.0); grid.len()] }
    }

    pub fn from_fn<F: Fn(&[f64]) -> Complex64 + Sync>(grid: GridSpec, f: F) -> Self {
        let values = (0..grid.len()).into_par_iter().map(|i| f(&grid.x_at(i))).collect();
        Self { grid, values }
    }

    pub fn from_real<F: Fn(&[f64]) -> f64 + Sync>(grid: GridSpec, f: F) -> Self {
        Self::from_fn(grid, |x| Complex64::new(f(x), 0.0))
    }

    /// Pointwise product.
    pub fn mul(&self, other: &Field) -> Result<Field> {
        self.grid.check_same(&other.grid)?;
        Ok(Field { grid: self.grid, values: self.values.iter().zip(&other.values).map(|(a, b)| a * b).collect() })
    }

    pub fn add(&self, other: &Field) -> Result<Field> {
        self.grid.check_same(&other.grid)?;
        Ok(Field { grid: self.grid, values: self.values.iter().zip(&other.values).map(|(a, b)| a + b).collect() })
    }

    pub fn sub(&self, other: &Field) -> Result<Field> {
        self.grid.check_same(&other.grid)?;
        Ok(Field { grid: self.grid, values: self.values.iter().zip(&other.values).map(|(a, b)| a - b).collect() })
    }

    pub fn scale(&self, c: Complex64) -> Field {
        Field { grid: self.grid, values: self.values.iter().map(|v| v * c).collect() }
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }
}

impl Spectrum {
    pub fn new(grid: GridSpec, values: Vec<Complex64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::GridMismatch(format!("{} values for {} samples", values.len(), grid.len())));
        }
        Ok(Self { grid, values })
    }

    pub fn zeros(grid: GridSpec) -> Self {
        Self { grid, values: vec![Complex64::new(0.0, 0.0); grid.len()] }
    }

    pub fn from_fn<F: Fn(&[f64]) -> Complex64 + Sync>(grid: GridSpec, f: F) -> Self {
        let values = (0..grid.len()).into_par_iter().map(|i| f(&grid.xi_at(i))).collect();
        Self { grid, values }
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }
}

/// Unnormalized n-dimensional FFT in place, axis by axis.
fn fft_nd(grid: &GridSpec, values: &mut [Complex64], inverse: bool) {
    let np = grid.points;
    let mut planner = FftPlanner::<f64>::new();
    let fft: Arc<dyn Fft<f64>> = if inverse { planner.plan_fft_inverse(np) } else { planner.plan_fft_forward(np) };
    for axis in 0..grid.n {
        let stride = np.pow((grid.n - 1 - axis) as u32);
        let lines = values.len() / np;
        // gather every line along the axis, transform, scatter back
        let starts: Vec<usize> = (0..lines)
            .map(|l| {
                let outer = l / stride;
                let inner = l % stride;
                outer * stride * np + inner
            })
            .collect();
        let mut buf: Vec<Complex64> = starts
            .iter()
            .flat_map(|&s| (0..np).map(move |k| s + k * stride))
            .map(|i| values[i])
            .collect();
        buf.par_chunks_mut(np).for_each(|line| fft.process(line));
        for (l, &s) in starts.iter().enumerate() {
            for k in 0..np {
                values[s + k * stride] = buf[l * np + k];
            }
        }
    }
}

/// `(-1)^(sum of indices)`; with `N/2` even it realizes both centering phases.
fn checkerboard(grid: &GridSpec, values: &mut [Complex64]) {
    let mut idx = vec![0; grid.n];
    for (i, v) in values.iter_mut().enumerate() {
        grid.unravel(i, &mut idx);
        if idx.iter().sum::<usize>() % 2 == 1 {
            *v = -*v;
        }
    }
}

/// Forward transform `f_hat(xi_k) = dx^n sum_j e^{-i x_j xi_k} f(x_j)`.
pub fn dft(f: &Field) -> Spectrum {
    let grid = f.grid;
    let mut v = f.values.clone();
    checkerboard(&grid, &mut v);
    fft_nd(&grid, &mut v, false);
    checkerboard(&grid, &mut v);
    let c = grid.space_cell();
    v.iter_mut().for_each(|z| *z *= c);
    Spectrum { grid, values: v }
}

/// Inverse transform `f(x_j) = (2 pi)^{-n} dxi^n sum_k e^{i x_j xi_k} f_hat(xi_k)`.
pub fn idft(s: &Spectrum) -> Field {
    let grid = s.grid;
    let mut v = s.values.clone();
    checkerboard(&grid, &mut v);
    fft_nd(&grid, &mut v, true);
    checkerboard(&grid, &mut v);
    let c = 1.0 / (grid.space_cell() * grid.len() as f64);
    v.iter_mut().for_each(|z| *z *= c);
    Field { grid, values: v }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::rng;
    use rand::Rng;

    fn naive_dft(f: &Field) -> Vec<Complex64> {
        let g = f.grid;
        (0..g.len())
            .map(|k| {
                let xi = g.xi_at(k);
                let mut s = Complex64::new(0.0, 0.0);
                for j in 0..g.len() {
                    let x = g.x_at(j);
                    let ph: f64 = x.iter().zip(&xi).map(|(a, b)| a * b).sum();
                    s += f.values[j] * Complex64::from_polar(1.0, -ph);
                }
                s * g.space_cell()
            })
            .collect()
    }

    #[test]
    fn grid_validation() {
        assert!(GridSpec::new(1, 1.0, 6).is_err());
        assert!(GridSpec::new(1, 1.0, 4).is_err());
        assert!(GridSpec::new(4, 1.0, 8).is_err());
        assert!(GridSpec::new(2, -1.0, 8).is_err());
        let g = GridSpec::new(2, 4.0, 16).unwrap();
        assert_eq!(g.len(), 256);
        assert_eq!(g.xi_axis()[8], 0.0);
        assert_eq!(g.x_axis()[0], -4.0);
    }

    #[test]
    fn fft_matches_direct_sum_in_two_dimensions() {
        let g = GridSpec::new(2, 3.0, 8).unwrap();
        let mut r = rng(5);
        let f = Field::new(g, (0..g.len()).map(|_| Complex64::new(r.gen(), r.gen())).collect()).unwrap();
        let fast = dft(&f);
        let slow = naive_dft(&f);
        for (a, b) in fast.values.iter().zip(&slow) {
            assert!((a - b).norm() < 1e-12);
        }
    }

    #[test]
    fn round_trip() {
        let g = GridSpec::new(3, 2.0, 8).unwrap();
        let mut r = rng(7);
        let f = Field::new(g, (0..g.len()).map(|_| Complex64::new(r.gen(), r.gen())).collect()).unwrap();
        let back = idft(&dft(&f));
        for (a, b) in f.values.iter().zip(&back.values) {
            assert!((a - b).norm() < 1e-12);
        }
    }

    #[test]
    fn index_round_trip() {
        let g = GridSpec::new(2, 5.0, 16).unwrap();
        for i in [0, 17, 255] {
            assert_eq!(g.xi_index(&g.xi_at(i)), Some(i));
        }
        assert_eq!(g.xi_index(&[100.0, 0.0]), None);
    }
}
