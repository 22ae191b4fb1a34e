use std::sync::Arc;

use num_complex::Complex64;

use super::estimates::{grid_cq, EstimateReport};
use crate::error::{Error, Result};
use crate::grid::{fl_norm, Field};
use crate::weights::{estimate_cq, CqValue, SamplingPlan, Weight};

/// Coefficient `c_k(x)` of `F(x, z) = sum c_k(x) z^k`.
#[derive(Debug, Clone)]
pub enum Coefficient {
    Zero,
    Constant(Complex64),
    Field(Field),
}

type CoefFn = Arc<dyn Fn(usize) -> Coefficient + Send + Sync>;
type MajorantFn = Arc<dyn Fn(usize) -> f64 + Send + Sync>;

/// Power series in one complex variable with a user-supplied majorant `lambda_k`.
///
/// The majorant must bound `|c_k|` for constant coefficients and `||c_k||_{FL^p_w}` for
/// field coefficients.
#[derive(Clone)]
pub struct EntireSeries {
    coefficient: CoefFn,
    majorant: MajorantFn,
    /// Known polynomial degree, if any.
    pub degree: Option<usize>,
    /// Largest degree summed before the series is declared divergent.
    pub max_degree: usize,
}

impl std::fmt::Debug for EntireSeries {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("EntireSeries").field("degree", &self.degree).field("max_degree", &self.max_degree).finish()
    }
}

impl EntireSeries {
    pub fn new<C, M>(coefficient: C, majorant: M) -> Self
    where
        C: Fn(usize) -> Coefficient + Send + Sync + 'static,
        M: Fn(usize) -> f64 + Send + Sync + 'static,
    {
        Self { coefficient: Arc::new(coefficient), majorant: Arc::new(majorant), degree: None, max_degree: 200 }
    }

    /// Polynomial with constant coefficients; the majorant is `|c_k|`.
    pub fn polynomial(coefs: Vec<Complex64>) -> Self {
        let c2 = coefs.clone();
        let degree = coefs.len().saturating_sub(1);
        let mut s = Self::new(
            move |k| c2.get(k).map_or(Coefficient::Zero, |c| Coefficient::Constant(*c)),
            move |k| coefs.get(k).map_or(0.0, |c| c.norm()),
        );
        s.degree = Some(degree);
        s
    }

    /// `z`.
    pub fn identity() -> Self {
        Self::polynomial(vec![Complex64::new(0.0, 0.0), Complex64::new(1.0, 0.0)])
    }

    /// `e^z - 1`.
    pub fn exp_minus_one() -> Self {
        let inv_fact = |k: usize| (1..=k).fold(1.0, |acc, j| acc / j as f64);
        Self::new(
            move |k| if k == 0 { Coefficient::Zero } else { Coefficient::Constant(Complex64::new(inv_fact(k), 0.0)) },
            move |k| if k == 0 { 0.0 } else { inv_fact(k) },
        )
    }

    pub fn coefficient(&self, k: usize) -> Coefficient {
        (self.coefficient)(k)
    }

    pub fn majorant(&self, k: usize) -> f64 {
        (self.majorant)(k)
    }
}

/// Evaluates `F(x, u(x))` by repeated grid products, truncating once the majorant tail
/// `sum_{k > K} lambda_k C^k ||u||^k` falls below `1e-12` of the partial sum's norm.
///
/// The report compares `||F(u)||_{FL^p_w}` with the full majorant sum.
pub fn compose_entire(
    u: &Field,
    series: &EntireSeries,
    w: &Weight,
    p: f64,
    plan: &SamplingPlan,
) -> Result<(Field, EstimateReport)> {
    if !matches!(series.coefficient(0), Coefficient::Zero)
        && !matches!(series.coefficient(0), Coefficient::Constant(c) if c == Complex64::new(0.0, 0.0))
    {
        return Err(Error::MissingZeroConstantTerm);
    }
    let q = if p == 1.0 {
        f64::INFINITY
    } else if p.is_infinite() {
        1.0
    } else {
        p / (p - 1.0)
    };
    if let CqValue::Infinite = estimate_cq(w, w, w, q, plan)?.value {
        return Err(Error::DivergentConstant);
    }
    let grid = u.grid;
    let c = grid_cq(&grid, w, &|x| 1.0 / w.eval(x), w, q).max(1.0);
    let unorm = fl_norm(u, w, p);
    let top = series.degree.unwrap_or(2 * series.max_degree);
    // log-space terms lambda_k (C U)^k, so large degrees cannot overflow
    let log_cu = (c * unorm).ln();
    let terms: Vec<f64> = (0..=top)
        .map(|k| {
            let l = series.majorant(k);
            if l == 0.0 || unorm == 0.0 {
                0.0
            } else {
                (l.ln() + k as f64 * log_cu).exp()
            }
        })
        .collect();
    if terms.iter().any(|t| !t.is_finite()) {
        return Err(Error::SeriesDiverges(format!("majorant terms overflow with C ||u|| = {:.3e}", c * unorm)));
    }
    let total: f64 = terms.iter().sum();
    if series.degree.is_none() {
        let tail_start = top.saturating_sub(20);
        let tail: f64 = terms[tail_start..].iter().sum();
        if tail > 1e-16 * total.max(f64::MIN_POSITIVE) {
            return Err(Error::SeriesDiverges(format!(
                "majorant with C ||u|| = {:.3e} does not decay by degree {}",
                c * unorm,
                series.max_degree
            )));
        }
    }
    // suffix sums give the tail bound after each degree
    let mut suffix = vec![0.0; terms.len() + 1];
    for k in (0..terms.len()).rev() {
        suffix[k] = suffix[k + 1] + terms[k];
    }

    let mut sum = Field::zeros(grid);
    let mut power = u.clone();
    let limit = series.degree.unwrap_or(series.max_degree);
    let mut k = 1;
    loop {
        match series.coefficient(k) {
            Coefficient::Zero => {}
            Coefficient::Constant(ck) => {
                for (s, pv) in sum.values.iter_mut().zip(&power.values) {
                    *s += ck * pv;
                }
            }
            Coefficient::Field(cf) => {
                let norm = fl_norm(&cf, w, p);
                if norm > series.majorant(k) * (1.0 + 1e-9) {
                    return Err(Error::BadParam(format!(
                        "coefficient {k} has norm {norm:.6e} above its majorant {:.6e}",
                        series.majorant(k)
                    )));
                }
                let prod = cf.mul(&power)?;
                for (s, pv) in sum.values.iter_mut().zip(&prod.values) {
                    *s += pv;
                }
            }
        }
        let tail = suffix[k + 1];
        let snorm = fl_norm(&sum, w, p);
        if tail <= 1e-12 * snorm || tail == 0.0 {
            break;
        }
        if k >= limit {
            return Err(Error::SeriesDiverges(format!("tail {tail:.3e} still above tolerance at degree {k}")));
        }
        k += 1;
        power = power.mul(u)?;
    }
    let lhs = fl_norm(&sum, w, p);
    Ok((sum, EstimateReport::new(lhs, total, c)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::GridSpec;

    fn setup() -> (Field, Weight, SamplingPlan) {
        let g = GridSpec::new(1, 16.0, 256).unwrap();
        let u = Field::from_real(g, |x| 0.1 * (-x[0] * x[0] / 2.0).exp());
        (u, Weight::homogeneous(2.0), SamplingPlan::standard(1, 0))
    }

    #[test]
    fn identity_series() {
        let (u, w, plan) = setup();
        let (f, r) = compose_entire(&u, &EntireSeries::identity(), &w, 2.0, &plan).unwrap();
        assert_eq!(f.values, u.values);
        assert!(r.passed);
    }

    #[test]
    fn square_series() {
        let (u, w, plan) = setup();
        let s = EntireSeries::polynomial(vec![0.0.into(), 0.0.into(), 1.0.into()]);
        let (f, _) = compose_entire(&u, &s, &w, 2.0, &plan).unwrap();
        let sq = u.mul(&u).unwrap();
        assert!(f.sub(&sq).unwrap().max_abs() <= 1e-12 * sq.max_abs());
    }

    #[test]
    fn exponential_series() {
        let (u, w, plan) = setup();
        let (f, r) = compose_entire(&u, &EntireSeries::exp_minus_one(), &w, 2.0, &plan).unwrap();
        for (a, b) in f.values.iter().zip(&u.values) {
            assert!((a - (b.exp() - 1.0)).norm() < 1e-8);
        }
        assert!(r.passed);
    }

    #[test]
    fn nonzero_constant_is_rejected() {
        let (u, w, plan) = setup();
        let s = EntireSeries::polynomial(vec![1.0.into(), 1.0.into()]);
        assert!(matches!(compose_entire(&u, &s, &w, 2.0, &plan), Err(Error::MissingZeroConstantTerm)));
    }

    #[test]
    fn geometric_series_beyond_its_radius_diverges() {
        let (u, w, plan) = setup();
        let big = u.scale(Complex64::new(100.0, 0.0));
        let s = EntireSeries::new(
            |k| if k == 0 { Coefficient::Zero } else { Coefficient::Constant(1.0.into()) },
            |k| if k == 0 { 0.0 } else { 1.0 },
        );
        assert!(matches!(compose_entire(&big, &s, &w, 2.0, &plan), Err(Error::SeriesDiverges(_))));
    }
}
