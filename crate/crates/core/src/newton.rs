//! Complete Newton polyhedra in dimension one to three.
//!
//! Hulls are computed by brute force over candidate supporting hyperplanes with
//! exact integer arithmetic, which is plenty for the handful of vertices a
//! multi-quasi-elliptic weight carries.

use std::collections::BTreeSet;

use num_rational::Rational64;
use num_traits::{One, Signed, Zero};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Lattice point with nonnegative coordinates.
pub type LatticePoint = Vec<u32>;

/// A facet `nu . xi = 1` and the vertices lying on it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Face {
    pub normal: Vec<Rational64>,
    pub vertices: Vec<LatticePoint>,
}

/// Convex lattice polyhedron containing the origin whose inner facet normals are strictly positive.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CompletePolyhedron {
    dim: usize,
    vertices: Vec<LatticePoint>,
    inner_normals: Vec<Vec<Rational64>>,
    faces: Vec<Face>,
}

/// Minimum, maximum and formal order of a polyhedron.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Orders {
    pub mu0: u32,
    pub mu1: u32,
    pub mu: Rational64,
}

/// Input descriptor `{"vertices": [[..], ..]}`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PolyhedronDescriptor {
    pub vertices: Vec<Vec<i64>>,
}

/// Serialized invariants of a polyhedron.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct PolyhedronReport {
    pub vertices: Vec<LatticePoint>,
    #[serde(rename = "N1")]
    pub n1: Vec<Vec<String>>,
    pub mu0: u32,
    pub mu1: u32,
    pub mu: String,
    pub delta: String,
}

/// Formats a rational as `p/q`, keeping the denominator even when it is one.
pub fn format_rational(r: &Rational64) -> String {
    format!("{}/{}", r.numer(), r.denom())
}

fn gcd(a: i64, b: i64) -> i64 {
    let (mut a, mut b) = (a.abs(), b.abs());
    while b != 0 {
        let t = a % b;
        a = b;
        b = t;
    }
    a
}

fn dot(a: &[i64], b: &[i64]) -> i64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn sub(a: &[i64], b: &[i64]) -> Vec<i64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

/// Integer normal of the hyperplane through `n` points in dimension `n`.
fn hyperplane_normal(points: &[&Vec<i64>]) -> Vec<i64> {
    match points.len() {
        2 => {
            let d = sub(points[1], points[0]);
            vec![-d[1], d[0]]
        }
        3 => {
            let u = sub(points[1], points[0]);
            let v = sub(points[2], points[0]);
            vec![
                u[1] * v[2] - u[2] * v[1],
                u[2] * v[0] - u[0] * v[2],
                u[0] * v[1] - u[1] * v[0],
            ]
        }
        _ => unreachable!("hyperplanes are only formed in dimension 2 and 3"),
    }
}

/// Rank of a small integer matrix by fraction-free elimination.
fn rank(rows: &[Vec<i64>]) -> usize {
    let mut m: Vec<Vec<i128>> = rows.iter().map(|r| r.iter().map(|&x| x as i128).collect()).collect();
    if m.is_empty() {
        return 0;
    }
    let cols = m[0].len();
    let mut r = 0;
    for c in 0..cols {
        let Some(p) = (r..m.len()).find(|&i| m[i][c] != 0) else { continue };
        m.swap(r, p);
        for i in 0..m.len() {
            if i != r && m[i][c] != 0 {
                let (a, b) = (m[r][c], m[i][c]);
                let pivot = m[r].clone();
                for (v, p) in m[i].iter_mut().zip(&pivot) {
                    *v = *v * a - p * b;
                }
            }
        }
        r += 1;
        if r == m.len() {
            break;
        }
    }
    r
}

fn combinations(n: usize, k: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut idx: Vec<usize> = (0..k).collect();
    if k > n {
        return out;
    }
    loop {
        out.push(idx.clone());
        let mut i = k;
        while i > 0 && idx[i - 1] == n - k + i - 1 {
            i -= 1;
        }
        if i == 0 {
            return out;
        }
        idx[i - 1] += 1;
        for j in i..k {
            idx[j] = idx[j - 1] + 1;
        }
    }
}

impl CompletePolyhedron {
    /// Builds the polyhedron spanned by `points`, dropping non-extreme points.
    pub fn build(points: &[Vec<i64>]) -> Result<Self> {
        let dim = points.first().map(|p| p.len()).unwrap_or(0);
        if dim == 0 || dim > 3 {
            return Err(Error::RejectDimension(dim));
        }
        if points.iter().any(|p| p.len() != dim) {
            return Err(Error::RejectNotComplete("points of mixed dimension".into()));
        }
        if points.iter().flatten().any(|&c| c < 0) {
            return Err(Error::RejectNotComplete("coordinates outside the nonnegative orthant".into()));
        }
        let pts: Vec<Vec<i64>> = points.iter().cloned().collect::<BTreeSet<_>>().into_iter().collect();
        let origin = vec![0i64; dim];
        if !pts.contains(&origin) {
            return Err(Error::RejectNotComplete("origin is not a vertex".into()));
        }
        if pts.len() == 1 {
            return Err(Error::RejectNotComplete("only the origin was given".into()));
        }
        let to_lattice = |p: &Vec<i64>| p.iter().map(|&c| c as u32).collect::<LatticePoint>();

        if dim == 1 {
            let m = pts.iter().map(|p| p[0]).max().unwrap();
            let nu = vec![Rational64::new(1, m)];
            let top = vec![m as u32];
            return Ok(Self {
                dim,
                vertices: vec![vec![0], top.clone()],
                inner_normals: vec![nu.clone()],
                faces: vec![Face { normal: nu, vertices: vec![top] }],
            });
        }

        let diffs: Vec<Vec<i64>> = pts.iter().map(|p| sub(p, &origin)).collect();
        if rank(&diffs) < dim {
            return Err(Error::RejectNotComplete("hull is not full dimensional".into()));
        }

        // Outward normals `a` with `a . x <= b` on every point, deduplicated after gcd reduction.
        let mut planes: BTreeSet<(Vec<i64>, i64)> = BTreeSet::new();
        for combo in combinations(pts.len(), dim) {
            let chosen: Vec<&Vec<i64>> = combo.iter().map(|&i| &pts[i]).collect();
            let mut a = hyperplane_normal(&chosen);
            if a.iter().all(|&c| c == 0) {
                continue;
            }
            let mut b = dot(&a, chosen[0]);
            let side: Vec<i64> = pts.iter().map(|p| dot(&a, p) - b).collect();
            if side.iter().all(|&s| s >= 0) {
                a.iter_mut().for_each(|c| *c = -*c);
                b = -b;
            } else if !side.iter().all(|&s| s <= 0) {
                continue;
            }
            let g = a.iter().fold(0, |g, &c| gcd(g, c));
            a.iter_mut().for_each(|c| *c /= g);
            planes.insert((a, b / g));
        }

        let mut vertices = Vec::new();
        for p in &pts {
            let active: Vec<Vec<i64>> =
                planes.iter().filter(|(a, b)| dot(a, p) == *b).map(|(a, _)| a.clone()).collect();
            if rank(&active) == dim {
                vertices.push(p.clone());
            }
        }

        let mut axis_facets = 0;
        let mut inner: Vec<(Vec<Rational64>, Vec<i64>, i64)> = Vec::new();
        for (a, b) in &planes {
            if *b == 0 {
                let is_axis = a.iter().filter(|&&c| c != 0).count() == 1 && a.contains(&-1);
                if !is_axis {
                    return Err(Error::RejectNotComplete(format!(
                        "facet through the origin with normal {a:?} is not a coordinate hyperplane"
                    )));
                }
                axis_facets += 1;
            } else {
                let nu: Vec<Rational64> = a.iter().map(|&c| Rational64::new(c, *b)).collect();
                if nu.iter().any(|c| !c.is_positive()) {
                    return Err(Error::RejectNotComplete(format!(
                        "inner normal {:?} has a non-positive component",
                        nu.iter().map(format_rational).collect::<Vec<_>>()
                    )));
                }
                inner.push((nu, a.clone(), *b));
            }
        }
        if axis_facets != dim {
            return Err(Error::RejectNotComplete("some coordinate hyperplane is not a facet".into()));
        }
        inner.sort_by(|x, y| x.0.cmp(&y.0));
        let faces = inner
            .iter()
            .map(|(nu, a, b)| Face {
                normal: nu.clone(),
                vertices: vertices.iter().filter(|v| dot(a, v) == *b).map(to_lattice).collect(),
            })
            .collect();
        Ok(Self {
            dim,
            vertices: vertices.iter().map(to_lattice).collect(),
            inner_normals: inner.into_iter().map(|(nu, _, _)| nu).collect(),
            faces,
        })
    }

    pub fn from_descriptor(d: &PolyhedronDescriptor) -> Result<Self> {
        Self::build(&d.vertices)
    }

    /// Polyhedron of the quasi-homogeneous weight: the simplex `{0, m_j e_j}`.
    pub fn quasi_homogeneous(m: &[u32]) -> Result<Self> {
        let n = m.len();
        let mut pts = vec![vec![0i64; n]];
        for (j, &mj) in m.iter().enumerate() {
            let mut p = vec![0i64; n];
            p[j] = mj as i64;
            pts.push(p);
        }
        Self::build(&pts)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Extreme points in lexicographic order.
    pub fn vertices(&self) -> &[LatticePoint] {
        &self.vertices
    }

    /// Normals of the facets not lying in coordinate hyperplanes, scaled so that `nu . xi = 1`.
    pub fn inner_normals(&self) -> &[Vec<Rational64>] {
        &self.inner_normals
    }

    pub fn faces(&self) -> &[Face] {
        &self.faces
    }

    pub fn orders(&self) -> Orders {
        let sizes: Vec<u32> = self.vertices.iter().map(|v| v.iter().sum()).collect();
        let mu0 = sizes.iter().copied().filter(|&s| s > 0).min().unwrap_or(0);
        let mu1 = sizes.iter().copied().max().unwrap_or(0);
        let mu = self
            .inner_normals
            .iter()
            .flatten()
            .map(|c| c.recip())
            .max()
            .unwrap_or_else(Rational64::one);
        Orders { mu0, mu1, mu }
    }

    fn pairing(nu: &[Rational64], beta: &[u32]) -> Rational64 {
        nu.iter().zip(beta).map(|(a, &b)| *a * Rational64::from(b as i64)).sum()
    }

    /// Lattice points of the polyhedron, or only those strictly inside every inner facet
    /// with all coordinates at least one.
    pub fn lattice_points(&self, interior_only: bool) -> Vec<LatticePoint> {
        let bounds: Vec<u32> =
            (0..self.dim).map(|j| self.vertices.iter().map(|v| v[j]).max().unwrap_or(0)).collect();
        let mut out = Vec::new();
        let mut beta = vec![0u32; self.dim];
        loop {
            let inside = self.inner_normals.iter().all(|nu| {
                let s = Self::pairing(nu, &beta);
                if interior_only {
                    s < Rational64::one()
                } else {
                    s <= Rational64::one()
                }
            });
            if inside && (!interior_only || beta.iter().all(|&b| b >= 1)) {
                out.push(beta.clone());
            }
            let mut j = self.dim;
            loop {
                if j == 0 {
                    return out;
                }
                j -= 1;
                if beta[j] < bounds[j] {
                    beta[j] += 1;
                    break;
                }
                beta[j] = 0;
            }
        }
    }

    /// Largest `nu . beta` over interior lattice points, zero when there are none.
    pub fn delta(&self) -> Rational64 {
        self.lattice_points(true)
            .iter()
            .flat_map(|beta| self.inner_normals.iter().map(move |nu| Self::pairing(nu, beta)))
            .max()
            .unwrap_or_else(Rational64::zero)
    }

    pub fn report(&self) -> PolyhedronReport {
        let o = self.orders();
        PolyhedronReport {
            vertices: self.vertices.clone(),
            n1: self.inner_normals.iter().map(|nu| nu.iter().map(format_rational).collect()).collect(),
            mu0: o.mu0,
            mu1: o.mu1,
            mu: format_rational(&o.mu),
            delta: format_rational(&self.delta()),
        }
    }
}
