//! Symbols, their quantization, and numerical checks of the operator estimates.

mod elliptic;
mod estimates;
mod expr;
mod series;

pub use elliptic::{approx_parametrix, check_elliptic, composition_error, EllipticReport, ParametrixConfig, SpaceBox};
pub use estimates::{
    grid_cq, necessity_probe, product_estimate, verify_continuity, EstimateReport, NecessityReport,
    NECESSITY_SPREAD, SLACK,
};
pub use expr::Expr;
pub use series::{compose_entire, Coefficient, EntireSeries};

use std::fmt;
use std::sync::Arc;

use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::grid::{dft, idft, lp_sum, Field, GridSpec, Sampled};
use crate::weights::Weight;

type FullFn = Arc<dyn Fn(&[f64], &[f64]) -> Complex64 + Send + Sync>;
type PartFn = Arc<dyn Fn(&[f64]) -> Complex64 + Send + Sync>;
type RealFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;

/// How a symbol can be applied.
#[derive(Clone)]
pub enum Structure {
    /// Direct summation over space and frequency.
    General,
    /// `a(x, xi) = m(xi)`.
    Multiplier(PartFn),
    /// `a(x, xi) = sum v_k(x) m_k(xi)`.
    Separable(Vec<(PartFn, PartFn)>),
}

/// A map `(x, xi) -> a(x, xi)` with class metadata.
#[derive(Clone)]
pub struct Symbol {
    dim: usize,
    eval: FullFn,
    structure: Structure,
    expr: Option<Expr>,
    /// Order `r` of the class `S^r_{rho, lambda}`.
    pub order: f64,
    pub rho: f64,
    pub reference: Option<Weight>,
}

impl fmt::Debug for Symbol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let kind = match &self.structure {
            Structure::General => "general".to_string(),
            Structure::Multiplier(_) => "multiplier".to_string(),
            Structure::Separable(t) => format!("separable({})", t.len()),
        };
        f.debug_struct("Symbol")
            .field("dim", &self.dim)
            .field("structure", &kind)
            .field("expr", &self.expr)
            .field("order", &self.order)
            .field("rho", &self.rho)
            .finish()
    }
}

impl Symbol {
    fn with(dim: usize, eval: FullFn, structure: Structure) -> Self {
        Self { dim, eval, structure, expr: None, order: 0.0, rho: 1.0, reference: None }
    }

    /// General symbol from a closure.
    pub fn from_fn<F>(dim: usize, f: F) -> Self
    where
        F: Fn(&[f64], &[f64]) -> Complex64 + Send + Sync + 'static,
    {
        Self::with(dim, Arc::new(f), Structure::General)
    }

    /// Fourier multiplier `m(xi)`.
    pub fn multiplier<F>(dim: usize, m: F) -> Self
    where
        F: Fn(&[f64]) -> Complex64 + Send + Sync + 'static,
    {
        let m: PartFn = Arc::new(m);
        let m2 = m.clone();
        Self::with(dim, Arc::new(move |_, xi| m2(xi)), Structure::Multiplier(m))
    }

    /// `sum v_k(x) m_k(xi)`.
    pub fn separable(dim: usize, terms: Vec<(PartFn, PartFn)>) -> Self {
        let t2 = terms.clone();
        let eval: FullFn = Arc::new(move |x, xi| t2.iter().map(|(v, m)| v(x) * m(xi)).sum());
        Self::with(dim, eval, Structure::Separable(terms))
    }

    /// `v(x)`, a frequency-independent symbol.
    pub fn function<F>(dim: usize, v: F) -> Self
    where
        F: Fn(&[f64]) -> Complex64 + Send + Sync + 'static,
    {
        let one: PartFn = Arc::new(|_| Complex64::new(1.0, 0.0));
        Self::separable(dim, vec![(Arc::new(v), one)])
    }

    pub fn identity(dim: usize) -> Self {
        Self::multiplier(dim, |_| Complex64::new(1.0, 0.0))
    }

    /// Closed-form symbol; multipliers and finite separable sums are detected automatically.
    pub fn from_expr(dim: usize, expr: &Expr) -> Result<Self> {
        let node = Arc::new(expr.compile(dim)?);
        let n2 = node.clone();
        let eval: FullFn = Arc::new(move |x, xi| n2.eval(x, xi));
        let zeros = vec![0.0; dim];
        let structure = if node.is_x_independent() {
            let (n3, z) = (node.clone(), zeros.clone());
            Structure::Multiplier(Arc::new(move |xi| n3.eval(&z, xi)))
        } else if let Some(parts) = node.separate() {
            Structure::Separable(
                parts
                    .into_iter()
                    .map(|(vx, mx)| {
                        let (z1, z2) = (zeros.clone(), zeros.clone());
                        let v: PartFn = Arc::new(move |x| vx.eval(x, &z1));
                        let m: PartFn = Arc::new(move |xi| mx.eval(&z2, xi));
                        (v, m)
                    })
                    .collect(),
            )
        } else {
            Structure::General
        };
        let mut s = Self::with(dim, eval, structure);
        s.expr = Some(expr.clone());
        Ok(s)
    }

    /// Samples on the product of the space and frequency grids, `values[j * len + k] = a(x_j, xi_k)`;
    /// evaluation snaps to the nearest sample.
    pub fn sampled(grid: GridSpec, values: Vec<Complex64>) -> Result<Self> {
        if values.len() != grid.len() * grid.len() {
            return Err(Error::GridMismatch(format!("{} samples for a product grid of {}", values.len(), grid.len().pow(2))));
        }
        let values = Arc::new(values);
        let eval: FullFn = Arc::new(move |x, xi| {
            let len = grid.len();
            let xj: Vec<f64> = x.iter().map(|c| c + grid.extent).collect();
            let jx = grid.ravel(
                &xj.iter().map(|c| ((c / grid.dx()).round() as usize).min(grid.points - 1)).collect::<Vec<_>>(),
            );
            match grid.xi_index(xi) {
                Some(k) => values[jx * len + k],
                None => Complex64::new(f64::NAN, 0.0),
            }
        });
        Ok(Self::with(grid.n, eval, Structure::General))
    }

    /// Sets the class metadata `S^r_{rho, lambda}`.
    pub fn with_class(mut self, order: f64, rho: f64, reference: Weight) -> Self {
        self.order = order;
        self.rho = rho;
        self.reference = Some(reference);
        self
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn eval(&self, x: &[f64], xi: &[f64]) -> Complex64 {
        (self.eval)(x, xi)
    }

    pub fn structure(&self) -> &Structure {
        &self.structure
    }

    pub fn expr(&self) -> Option<&Expr> {
        self.expr.as_ref()
    }

    pub fn is_multiplier(&self) -> bool {
        matches!(self.structure, Structure::Multiplier(_))
    }

    /// Same symbol forced onto the direct-summation path.
    pub fn as_general(&self) -> Self {
        Self { structure: Structure::General, ..self.clone() }
    }

    /// Pointwise product with a cutoff `phi(x)`.
    pub fn localized<F>(&self, phi: F) -> Self
    where
        F: Fn(&[f64]) -> f64 + Send + Sync + 'static,
    {
        let phi: RealFn = Arc::new(phi);
        let inner = self.eval.clone();
        let p2 = phi.clone();
        let eval: FullFn = Arc::new(move |x, xi| inner(x, xi) * p2(x));
        let structure = match &self.structure {
            Structure::General => Structure::General,
            Structure::Multiplier(m) => {
                let p3 = phi.clone();
                Structure::Separable(vec![(Arc::new(move |x| Complex64::new(p3(x), 0.0)), m.clone())])
            }
            Structure::Separable(t) => Structure::Separable(
                t.iter()
                    .map(|(v, m)| {
                        let (v, p3) = (v.clone(), phi.clone());
                        let nv: PartFn = Arc::new(move |x| v(x) * p3(x));
                        (nv, m.clone())
                    })
                    .collect(),
            ),
        };
        Self { eval, structure, expr: None, ..self.clone() }
    }
}

fn check_dim(a: &Symbol, grid: &GridSpec) -> Result<()> {
    if a.dim != grid.n {
        return Err(Error::GridMismatch(format!("symbol of dimension {} on a grid of dimension {}", a.dim, grid.n)));
    }
    Ok(())
}

fn unbounded(x: &[f64], xi: &[f64]) -> Error {
    Error::UnboundedSymbol { x: x.to_vec(), xi: xi.to_vec() }
}

/// `a(x, D) f = (2 pi)^{-n} integral e^{i x xi} a(x, xi) f_hat(xi) d xi` on the grid.
pub fn quantize(a: &Symbol, f: &Field) -> Result<Field> {
    let grid = f.grid;
    check_dim(a, &grid)?;
    let spec = dft(f);
    let xis = grid.xi_points();
    let apply_multiplier = |m: &PartFn| -> Result<Field> {
        let mut s = spec.clone();
        for (v, xi) in s.values.iter_mut().zip(&xis) {
            let mv = m(xi);
            if !mv.is_finite() {
                return Err(unbounded(&[], xi));
            }
            *v *= mv;
        }
        Ok(idft(&s))
    };
    match &a.structure {
        Structure::Multiplier(m) => apply_multiplier(m),
        Structure::Separable(terms) => {
            let mut out = Field::zeros(grid);
            for (v, m) in terms {
                let part = apply_multiplier(m)?;
                for (i, o) in out.values.iter_mut().enumerate() {
                    let x = grid.x_at(i);
                    let vv = v(&x);
                    if !vv.is_finite() {
                        return Err(unbounded(&x, &[]));
                    }
                    *o += vv * part.values[i];
                }
            }
            Ok(out)
        }
        Structure::General => direct_sum(a, &spec.values, &grid),
    }
}

/// Per-axis phase table `e^{i x_j xi_k}`.
fn phase_table(grid: &GridSpec) -> Vec<Complex64> {
    let (xs, ks) = (grid.x_axis(), grid.xi_axis());
    let np = grid.points;
    let mut t = vec![Complex64::new(0.0, 0.0); np * np];
    for j in 0..np {
        for k in 0..np {
            t[j * np + k] = Complex64::from_polar(1.0, xs[j] * ks[k]);
        }
    }
    t
}

fn direct_sum(a: &Symbol, spec: &[Complex64], grid: &GridSpec) -> Result<Field> {
    let table = phase_table(grid);
    let np = grid.points;
    let n = grid.n;
    let scale = grid.freq_cell() / (2.0 * std::f64::consts::PI).powi(n as i32);
    let xis = grid.xi_points();
    let kidx: Vec<Vec<usize>> = (0..grid.len())
        .map(|k| {
            let mut idx = vec![0; n];
            grid.unravel(k, &mut idx);
            idx
        })
        .collect();
    let values: Result<Vec<Complex64>> = (0..grid.len())
        .into_par_iter()
        .map(|j| {
            let mut jidx = vec![0; n];
            grid.unravel(j, &mut jidx);
            let x = grid.x_at(j);
            let mut acc = Complex64::new(0.0, 0.0);
            for (k, xi) in xis.iter().enumerate() {
                let s = spec[k];
                if s == Complex64::new(0.0, 0.0) {
                    continue;
                }
                let av = a.eval(&x, xi);
                if !av.is_finite() {
                    return Err(unbounded(&x, xi));
                }
                let mut ph = table[jidx[0] * np + kidx[k][0]];
                for ax in 1..n {
                    ph *= table[jidx[ax] * np + kidx[k][ax]];
                }
                acc += ph * av * s;
            }
            Ok(acc * scale)
        })
        .collect();
    Field::new(*grid, values?)
}

/// `sup_xi ||phi a(., xi)||_{FL^p_w} / gamma(xi)` over the frequency grid.
pub fn symbol_fl_seminorm(a: &Symbol, phi: &Field, w: &Weight, gamma: &Weight, p: f64) -> Result<f64> {
    symbol_fl_seminorm_masked(a, phi, w, gamma, p, None)
}

/// As [`symbol_fl_seminorm`], with the transform variable restricted to `mask` when given.
pub fn symbol_fl_seminorm_masked(
    a: &Symbol,
    phi: &Field,
    w: &Weight,
    gamma: &Weight,
    p: f64,
    mask: Option<&[bool]>,
) -> Result<f64> {
    let grid = phi.grid;
    check_dim(a, &grid)?;
    if mask.is_some_and(|m| m.len() != grid.len()) {
        return Err(Error::GridMismatch("mask length differs from the grid".into()));
    }
    let xis = grid.xi_points();
    let wv: Vec<f64> = xis
        .iter()
        .enumerate()
        .map(|(i, xi)| if mask.is_none_or(|m| m[i]) { w.eval(xi) } else { 0.0 })
        .collect();
    let cell = grid.freq_cell();
    let terms: Vec<(Vec<Complex64>, PartFn)> = match &a.structure {
        Structure::Multiplier(m) => vec![(dft(phi).values, m.clone())],
        Structure::Separable(t) => t
            .iter()
            .map(|(v, m)| {
                let f = Field::from_fn(grid, |x| v(x)).mul(phi)?;
                Ok((dft(&f).values, m.clone()))
            })
            .collect::<Result<_>>()?,
        Structure::General => Vec::new(),
    };
    let per_xi: Vec<f64> = xis
        .par_iter()
        .map(|xi| {
            let g = gamma.eval(xi);
            let norm = if terms.is_empty() {
                let f = Field::from_fn(grid, |x| a.eval(x, xi));
                let f = f.mul(phi).expect("same grid");
                let s = dft(&f);
                lp_sum(s.values().iter().zip(&wv).map(|(v, w)| w * v.norm()), cell, p)
            } else {
                let coefs: Vec<Complex64> = terms.iter().map(|(_, m)| m(xi)).collect();
                lp_sum(
                    (0..grid.len()).map(|i| {
                        let v: Complex64 = terms.iter().zip(&coefs).map(|((s, _), c)| s[i] * c).sum();
                        wv[i] * v.norm()
                    }),
                    cell,
                    p,
                )
            };
            norm / g
        })
        .collect();
    Ok(per_xi.into_iter().fold(0.0, f64::max))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::fl_norm;

    fn gaussian(grid: GridSpec) -> Field {
        Field::from_real(grid, |x| (-x.iter().map(|c| c * c).sum::<f64>() / 2.0).exp())
    }

    #[test]
    fn identity_reproduces_the_field() {
        let g = GridSpec::new(1, 16.0, 512).unwrap();
        let f = gaussian(g);
        for a in [Symbol::identity(1), Symbol::identity(1).as_general()] {
            let out = quantize(&a, &f).unwrap();
            for (u, v) in out.values.iter().zip(&f.values) {
                assert!((u - v).norm() < 1e-10);
            }
        }
    }

    #[test]
    fn frequency_independent_symbol_multiplies() {
        let g = GridSpec::new(1, 16.0, 128).unwrap();
        let f = gaussian(g);
        let a = Symbol::function(1, |x| Complex64::new(x[0].cos(), 0.0));
        let out = quantize(&a, &f).unwrap();
        for (i, o) in out.values.iter().enumerate() {
            let expected = f.values[i] * g.x_at(i)[0].cos();
            assert!((o - expected).norm() < 1e-10);
        }
    }

    #[test]
    fn separable_path_matches_direct_sum() {
        let g = GridSpec::new(2, 6.0, 16).unwrap();
        let f = gaussian(g);
        let e = Expr::add(vec![
            Expr::mul(vec![Expr::i(), Expr::x(0), Expr::xi(0)]),
            Expr::mul(vec![Expr::c(-1.0), Expr::xi(0)]),
            Expr::pow(Expr::xi(1), 2.0),
        ]);
        let a = Symbol::from_expr(2, &e).unwrap();
        assert!(matches!(a.structure(), Structure::Separable(t) if t.len() == 3));
        let fast = quantize(&a, &f).unwrap();
        let slow = quantize(&a.as_general(), &f).unwrap();
        for (u, v) in fast.values.iter().zip(&slow.values) {
            assert!((u - v).norm() < 1e-10);
        }
    }

    #[test]
    fn unbounded_symbol_is_reported() {
        let g = GridSpec::new(1, 4.0, 16).unwrap();
        let a = Symbol::from_fn(1, |_, xi| Complex64::new(1.0 / xi[0], 0.0));
        assert!(matches!(quantize(&a, &gaussian(g)), Err(Error::UnboundedSymbol { .. })));
    }

    #[test]
    fn seminorm_of_function_symbol_is_its_norm() {
        let g = GridSpec::new(1, 8.0, 64).unwrap();
        let phi = Field::from_real(g, |x| crate::numerics::plateau(x[0], 3.0, 6.0));
        let w = Weight::homogeneous(1.0);
        let one = Weight::constant(1.0);
        let v = |x: &[f64]| Complex64::new((-x[0] * x[0]).exp(), 0.0);
        let a = Symbol::function(1, v);
        let s = symbol_fl_seminorm(&a, &phi, &w, &one, 2.0).unwrap();
        let direct = fl_norm(&Field::from_fn(g, v).mul(&phi).unwrap(), &w, 2.0);
        assert!((s - direct).abs() < 1e-12 * direct);
        let general = symbol_fl_seminorm(&a.as_general(), &phi, &w, &one, 2.0).unwrap();
        assert!((general - direct).abs() < 1e-12 * direct);
    }

    #[test]
    fn sampled_symbol_matches_closure() {
        let g = GridSpec::new(1, 4.0, 16).unwrap();
        let f = gaussian(g);
        let a = |x: &[f64], xi: &[f64]| Complex64::new(1.0 + 0.1 * x[0] * xi[0], 0.0);
        let mut values = Vec::new();
        for j in 0..g.len() {
            for k in 0..g.len() {
                values.push(a(&g.x_at(j), &g.xi_at(k)));
            }
        }
        let s = Symbol::sampled(g, values).unwrap();
        let out = quantize(&s, &f).unwrap();
        let reference = quantize(&Symbol::from_fn(1, a), &f).unwrap();
        assert!(out.sub(&reference).unwrap().max_abs() < 1e-12);
    }
}
