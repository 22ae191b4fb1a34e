use serde::{Deserialize, Serialize};

use super::cone::m_cone_distance;
use crate::error::{Error, Result};
use crate::grid::GridSpec;
use crate::numerics::norm;
use crate::weights::{Weight, WeightDescriptor};

/// JSON generator tree of a frequency set, tagged by `set`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "set", rename_all = "snake_case")]
pub enum SetDescriptor {
    All,
    Empty,
    /// Explicit points, snapped to the nearest frequency sample.
    Points { points: Vec<Vec<f64>> },
    /// Samples whose grid cell meets the curve `xi_1 = a xi_2^2`.
    Parabola {
        #[serde(default = "one")]
        a: f64,
    },
    /// `xi_1 <= (1-k) xi_2^2` or `xi_1 >= xi_2^2 / (1-k)`.
    Xk { k: f64 },
    /// `(1-k) xi_2^2 < xi_1 < xi_2^2 / (1-k)`, the complement of `Xk` away from the origin.
    ParabolaCone { k: f64 },
    /// `sign * xi_axis > 0`.
    HalfSpace { axis: usize, sign: f64 },
    /// Open Euclidean ball.
    Ball { center: Vec<f64>, radius: f64 },
    /// `w(xi) > threshold`.
    Above { weight: WeightDescriptor, threshold: f64 },
    /// The M-cone generated by `B_M(eta; r)`.
    MCone {
        eta: Vec<f64>,
        r: f64,
        #[serde(rename = "M")]
        m: Vec<u32>,
    },
    /// `{xi : w(xi - xi0) < eps w(xi0) for some xi0 in of}`.
    BracketNeighborhood { of: Box<SetDescriptor>, weight: WeightDescriptor, eps: f64 },
    /// `{xi : |xi - xi0| < eps lambda(xi0)^(1/mu) for some xi0 in of}`; `mu` defaults to the upper growth exponent.
    EuclidNeighborhood {
        of: Box<SetDescriptor>,
        weight: WeightDescriptor,
        eps: f64,
        #[serde(default)]
        mu: Option<f64>,
    },
    Complement { of: Box<SetDescriptor> },
    Union { of: Vec<SetDescriptor> },
    Intersection { of: Vec<SetDescriptor> },
}

fn one() -> f64 {
    1.0
}

fn check_k(k: f64) -> Result<()> {
    if k > 0.0 && k < 1.0 {
        Ok(())
    } else {
        Err(Error::BadK(k))
    }
}

fn need_2d(n: usize, what: &str) -> Result<()> {
    if n == 2 {
        Ok(())
    } else {
        Err(Error::BadParam(format!("{what} is defined in dimension 2 only")))
    }
}

/// `xi_1 <= (1-k) xi_2^2` or `xi_1 >= xi_2^2 / (1-k)`.
pub fn in_xk(k: f64, xi: &[f64]) -> bool {
    let q = xi[1] * xi[1];
    xi[0] <= (1.0 - k) * q || xi[0] >= q / (1.0 - k)
}

impl SetDescriptor {
    pub fn complement(self) -> Self {
        SetDescriptor::Complement { of: Box::new(self) }
    }

    pub fn bracket(self, weight: &Weight, eps: f64) -> Self {
        SetDescriptor::BracketNeighborhood { of: Box::new(self), weight: weight.descriptor().clone(), eps }
    }

    pub fn euclid(self, weight: &Weight, eps: f64) -> Self {
        SetDescriptor::EuclidNeighborhood { of: Box::new(self), weight: weight.descriptor().clone(), eps, mu: None }
    }

    /// Membership of an arbitrary frequency point, for sets given by analytic predicates.
    pub fn contains(&self, xi: &[f64]) -> Option<bool> {
        Some(match self {
            SetDescriptor::All => true,
            SetDescriptor::Empty => false,
            SetDescriptor::Xk { k } => in_xk(*k, xi),
            SetDescriptor::ParabolaCone { k } => !in_xk(*k, xi),
            SetDescriptor::HalfSpace { axis, sign } => sign * xi[*axis] > 0.0,
            SetDescriptor::Ball { center, radius } => {
                xi.iter().zip(center).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt() < *radius
            }
            SetDescriptor::Above { weight, threshold } => Weight::from_descriptor(weight).ok()?.eval(xi) > *threshold,
            SetDescriptor::MCone { eta, r, m } => norm(xi) > 0.0 && m_cone_distance(xi, eta, m) < *r,
            SetDescriptor::Complement { of } => !of.contains(xi)?,
            SetDescriptor::Union { of } => {
                let mut any = false;
                for s in of {
                    any |= s.contains(xi)?;
                }
                any
            }
            SetDescriptor::Intersection { of } => {
                let mut all = true;
                for s in of {
                    all &= s.contains(xi)?;
                }
                all
            }
            SetDescriptor::Points { .. }
            | SetDescriptor::Parabola { .. }
            | SetDescriptor::BracketNeighborhood { .. }
            | SetDescriptor::EuclidNeighborhood { .. } => return None,
        })
    }

    /// Evaluates the generator tree on the frequency grid.
    pub fn build(&self, grid: &GridSpec) -> Result<FrequencyMask> {
        let n = grid.n;
        let bits = match self {
            SetDescriptor::All => vec![true; grid.len()],
            SetDescriptor::Empty => vec![false; grid.len()],
            SetDescriptor::Points { points } => {
                let mut bits = vec![false; grid.len()];
                for p in points {
                    if p.len() != n {
                        return Err(Error::BadParam(format!("point {p:?} is not in dimension {n}")));
                    }
                    if let Some(i) = grid.xi_index(p) {
                        bits[i] = true;
                    }
                }
                bits
            }
            SetDescriptor::Parabola { a } => {
                need_2d(n, "the parabola")?;
                let h = grid.dxi() / 2.0;
                predicate_bits(grid, |xi| {
                    let (lo, hi) = (xi[1] - h, xi[1] + h);
                    let min = if lo <= 0.0 && hi >= 0.0 { 0.0 } else { a * lo.abs().min(hi.abs()).powi(2) };
                    let max = a * lo.abs().max(hi.abs()).powi(2);
                    let (min, max) = if *a >= 0.0 { (min, max) } else { (max, min) };
                    max >= xi[0] - h && min < xi[0] + h
                })
            }
            SetDescriptor::Xk { k } | SetDescriptor::ParabolaCone { k } => {
                need_2d(n, "the family X_k")?;
                check_k(*k)?;
                let inside = matches!(self, SetDescriptor::Xk { .. });
                predicate_bits(grid, |xi| in_xk(*k, xi) == inside && (inside || norm(xi) > 0.0))
            }
            SetDescriptor::MCone { eta, r, m } => {
                if eta.len() != n || m.len() != n {
                    return Err(Error::BadParam(format!("M-cone data not in dimension {n}")));
                }
                if *r <= 0.0 {
                    return Err(Error::BadParam(format!("cone radius must be positive, got {r}")));
                }
                predicate_bits(grid, |xi| self.contains(xi).unwrap_or(false))
            }
            SetDescriptor::HalfSpace { .. } | SetDescriptor::Ball { .. } | SetDescriptor::Above { .. } => {
                if let SetDescriptor::HalfSpace { axis, .. } = self {
                    if *axis >= n {
                        return Err(Error::BadParam(format!("axis {axis} out of range for dimension {n}")));
                    }
                }
                if let SetDescriptor::Above { weight, threshold } = self {
                    let w = Weight::from_descriptor(weight)?;
                    w.check_dim(n)?;
                    return Ok(FrequencyMask {
                        grid: *grid,
                        bits: predicate_bits(grid, |xi| w.eval(xi) > *threshold),
                        generator: self.clone(),
                    });
                }
                if let SetDescriptor::Ball { center, .. } = self {
                    if center.len() != n {
                        return Err(Error::BadParam(format!("ball center not in dimension {n}")));
                    }
                }
                predicate_bits(grid, |xi| self.contains(xi).unwrap_or(false))
            }
            SetDescriptor::BracketNeighborhood { of, weight, eps } => {
                let w = Weight::from_descriptor(weight)?;
                return bracket_neighborhood(&of.build(grid)?, &w, *eps).map(|m| m.with_generator(self.clone()));
            }
            SetDescriptor::EuclidNeighborhood { of, weight, eps, mu } => {
                let w = Weight::from_descriptor(weight)?;
                let mu = mu.unwrap_or(w.meta().growth_upper);
                return euclid_neighborhood(&of.build(grid)?, &w, *eps, mu).map(|m| m.with_generator(self.clone()));
            }
            SetDescriptor::Complement { of } => of.build(grid)?.bits.iter().map(|b| !b).collect(),
            SetDescriptor::Union { of } | SetDescriptor::Intersection { of } => {
                let union = matches!(self, SetDescriptor::Union { .. });
                let mut bits = vec![!union; grid.len()];
                for s in of {
                    let m = s.build(grid)?;
                    for (b, &v) in bits.iter_mut().zip(&m.bits) {
                        *b = if union { *b || v } else { *b && v };
                    }
                }
                bits
            }
        };
        Ok(FrequencyMask { grid: *grid, bits, generator: self.clone() })
    }
}

fn predicate_bits<F: Fn(&[f64]) -> bool>(grid: &GridSpec, f: F) -> Vec<bool> {
    let mut xi = vec![0.0; grid.n];
    let mut idx = vec![0; grid.n];
    let axis = grid.xi_axis();
    (0..grid.len())
        .map(|i| {
            grid.unravel(i, &mut idx);
            for (c, &k) in xi.iter_mut().zip(&idx) {
                *c = axis[k];
            }
            f(&xi)
        })
        .collect()
}

/// Boolean indicator over the frequency grid, with the generator that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct FrequencyMask {
    pub grid: GridSpec,
    pub bits: Vec<bool>,
    pub generator: SetDescriptor,
}

impl FrequencyMask {
    pub fn count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn is_empty(&self) -> bool {
        !self.bits.iter().any(|&b| b)
    }

    pub fn indices(&self) -> impl Iterator<Item = usize> + '_ {
        self.bits.iter().enumerate().filter(|(_, &b)| b).map(|(i, _)| i)
    }

    fn with_generator(mut self, generator: SetDescriptor) -> Self {
        self.generator = generator;
        self
    }

    fn combine(&self, other: &Self, f: impl Fn(bool, bool) -> bool, generator: SetDescriptor) -> Result<Self> {
        self.grid.check_same(&other.grid)?;
        let bits = self.bits.iter().zip(&other.bits).map(|(&a, &b)| f(a, b)).collect();
        Ok(Self { grid: self.grid, bits, generator })
    }

    pub fn union(&self, other: &Self) -> Result<Self> {
        let g = SetDescriptor::Union { of: vec![self.generator.clone(), other.generator.clone()] };
        self.combine(other, |a, b| a || b, g)
    }

    pub fn intersection(&self, other: &Self) -> Result<Self> {
        let g = SetDescriptor::Intersection { of: vec![self.generator.clone(), other.generator.clone()] };
        self.combine(other, |a, b| a && b, g)
    }

    pub fn complement(&self) -> Self {
        Self { grid: self.grid, bits: self.bits.iter().map(|b| !b).collect(), generator: self.generator.clone().complement() }
    }

    /// Samples of `self` missing from `other`.
    pub fn violations(&self, other: &Self) -> Result<Vec<usize>> {
        self.grid.check_same(&other.grid)?;
        Ok(self.bits.iter().zip(&other.bits).enumerate().filter(|(_, (&a, &b))| a && !b).map(|(i, _)| i).collect())
    }

    pub fn is_subset(&self, other: &Self) -> Result<bool> {
        Ok(self.violations(other)?.is_empty())
    }

    /// Bytes `0`/`1`, one per sample, in flat grid order.
    pub fn to_bytes(&self) -> Vec<u8> {
        self.bits.iter().map(|&b| b as u8).collect()
    }

    pub fn from_bytes(grid: GridSpec, bytes: &[u8], generator: SetDescriptor) -> Result<Self> {
        if bytes.len() != grid.len() || bytes.iter().any(|&b| b > 1) {
            return Err(Error::Format(format!("mask payload of {} bytes for a grid of {}", bytes.len(), grid.len())));
        }
        Ok(Self { grid, bits: bytes.iter().map(|&b| b == 1).collect(), generator })
    }
}

/// Values of a distance-like function at every nonnegative lattice offset, last axis fastest.
///
/// Rows run along the last axis; monotone distances make each row's sublevel set an interval.
struct OffsetTable {
    n: usize,
    np: usize,
    values: Vec<f64>,
    monotone: bool,
}

impl OffsetTable {
    fn new(grid: &GridSpec, dist: impl Fn(&[f64]) -> f64, monotone: bool) -> Self {
        let (n, np, h) = (grid.n, grid.points, grid.dxi());
        let len = np.pow(n as u32);
        let mut idx = vec![0usize; n];
        let mut z = vec![0.0; n];
        let values = (0..len)
            .map(|i| {
                let mut r = i;
                for a in (0..n).rev() {
                    idx[a] = r % np;
                    r /= np;
                }
                for (c, &k) in z.iter_mut().zip(&idx) {
                    *c = k as f64 * h;
                }
                dist(&z)
            })
            .collect();
        Self { n, np, values, monotone }
    }

    fn at(&self, off: &[usize]) -> f64 {
        self.values[off.iter().fold(0, |acc, &i| acc * self.np + i)]
    }
}

/// Marks `{xi : dist(xi - xi0) < radius(xi0)}` for every generator `xi0` of `base`.
fn sweep(base: &FrequencyMask, table: &OffsetTable, radius: impl Fn(&[f64]) -> f64) -> Vec<bool> {
    let grid = &base.grid;
    let (n, np) = (grid.n, grid.points);
    let rows = np.pow(n as u32 - 1);
    let mut diff = vec![0i32; rows * (np + 1)];
    let mut idx = vec![0usize; n];
    let mut off = vec![0usize; n];
    let mut target = vec![0usize; n];
    for g in base.indices() {
        let r = radius(&grid.xi_at(g));
        if !(r > table.values[0]) {
            continue;
        }
        grid.unravel(g, &mut idx);
        if !table.monotone {
            // brute force over every sample
            for t in 0..grid.len() {
                grid.unravel(t, &mut target);
                for a in 0..n {
                    off[a] = idx[a].abs_diff(target[a]);
                }
                if table.at(&off) < r {
                    let row = t / np;
                    let k = t % np;
                    diff[row * (np + 1) + k] += 1;
                    diff[row * (np + 1) + k + 1] -= 1;
                }
            }
            continue;
        }
        visit_rows(table, r, &mut off, 0, &mut |off, half| {
            // enumerate sign choices of the row offsets
            let lead = n - 1;
            let signs = 1usize << lead;
            'sign: for s in 0..signs {
                for a in 0..lead {
                    let neg = s >> a & 1 == 1;
                    if neg && off[a] == 0 {
                        continue 'sign;
                    }
                    let t = if neg { idx[a] as isize - off[a] as isize } else { (idx[a] + off[a]) as isize };
                    if t < 0 || t >= np as isize {
                        continue 'sign;
                    }
                    target[a] = t as usize;
                }
                let row = target[..lead].iter().fold(0, |acc, &i| acc * np + i);
                let c = idx[lead] as isize;
                let lo = (c - half as isize + 1).max(0) as usize;
                let hi = ((c + half as isize - 1).min(np as isize - 1)) as usize;
                diff[row * (np + 1) + lo] += 1;
                diff[row * (np + 1) + hi + 1] -= 1;
            }
        });
    }
    let mut bits = vec![false; grid.len()];
    for row in 0..rows {
        let mut acc = 0;
        for k in 0..np {
            acc += diff[row * (np + 1) + k];
            bits[row * np + k] = acc > 0;
        }
    }
    bits
}

/// Calls `f(offsets, half)` for each row offset whose sublevel interval is nonempty,
/// where `half` counts the last-axis offsets `0..half` inside the set.
fn visit_rows(table: &OffsetTable, r: f64, off: &mut Vec<usize>, axis: usize, f: &mut impl FnMut(&[usize], usize)) {
    let n = table.n;
    if axis == n - 1 {
        let start = off[..n - 1].iter().fold(0, |acc, &i| acc * table.np + i) * table.np;
        let row = &table.values[start..start + table.np];
        let half = row.partition_point(|&v| v < r);
        if half > 0 {
            f(off, half);
        }
        return;
    }
    for d in 0..table.np {
        off[axis] = d;
        for o in off.iter_mut().skip(axis + 1) {
            *o = 0;
        }
        if table.at(off) >= r {
            break;
        }
        visit_rows(table, r, off, axis + 1, f);
    }
    off[axis] = 0;
}

/// `X_[eps w] = {xi : w(xi - xi0) < eps w(xi0), xi0 in X}` on the grid.
///
/// Generators with `eps w(xi0) <= w(0)` contribute nothing and are skipped.
pub fn bracket_neighborhood(base: &FrequencyMask, w: &Weight, eps: f64) -> Result<FrequencyMask> {
    if !(eps > 0.0) {
        return Err(Error::BadParam(format!("eps must be positive, got {eps}")));
    }
    w.check_dim(base.grid.n)?;
    let table = OffsetTable::new(&base.grid, |z| w.eval(z), w.meta().monotone);
    let bits = sweep(base, &table, |xi| eps * w.eval(xi));
    let generator = SetDescriptor::BracketNeighborhood {
        of: Box::new(base.generator.clone()),
        weight: w.descriptor().clone(),
        eps,
    };
    Ok(FrequencyMask { grid: base.grid, bits, generator })
}

/// `X_{eps lambda} = {xi : |xi - xi0| < eps lambda(xi0)^(1/mu), xi0 in X}` on the grid.
pub fn euclid_neighborhood(base: &FrequencyMask, lambda: &Weight, eps: f64, mu: f64) -> Result<FrequencyMask> {
    if !(eps > 0.0) || !(mu > 0.0) {
        return Err(Error::BadParam(format!("eps and mu must be positive, got {eps}, {mu}")));
    }
    lambda.check_dim(base.grid.n)?;
    let table = OffsetTable::new(&base.grid, norm, true);
    let bits = sweep(base, &table, |xi| eps * lambda.eval(xi).powf(1.0 / mu));
    let generator = SetDescriptor::EuclidNeighborhood {
        of: Box::new(base.generator.clone()),
        weight: lambda.descriptor().clone(),
        eps,
        mu: Some(mu),
    };
    Ok(FrequencyMask { grid: base.grid, bits, generator })
}
