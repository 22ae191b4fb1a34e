//! Weight functions on frequency space and sampled checks of their conditions.

mod conditions;
mod cq;
mod derivative;

pub use conditions::{check_condition, probe_points, Condition, ConditionReport, ProbeLevel, SamplingPlan};
pub use cq::{estimate_cq, CqEstimate, CqValue};
pub use derivative::{check_derivative_decay, DerivativeGrid};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::newton::CompletePolyhedron;

fn one() -> f64 {
    1.0
}

/// JSON descriptor of a weight, tagged by `family`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum WeightDescriptor {
    Constant {
        #[serde(default = "one")]
        c: f64,
    },
    Homogeneous {
        m: f64,
    },
    QuasiHomogeneous {
        #[serde(rename = "M")]
        m: Vec<u32>,
        #[serde(default = "one")]
        s: f64,
    },
    MultiQuasiElliptic {
        vertices: Vec<Vec<i64>>,
        #[serde(default = "one")]
        s: f64,
    },
    LogType {
        r: f64,
        s: f64,
    },
    Product {
        factors: Vec<WeightDescriptor>,
    },
    Inverse {
        of: Box<WeightDescriptor>,
    },
    Power {
        of: Box<WeightDescriptor>,
        s: f64,
    },
}

#[derive(Debug, Clone)]
enum Kind {
    Constant(f64),
    Homogeneous(f64),
    QuasiHomogeneous { m: Vec<u32>, s: f64 },
    MultiQuasiElliptic { vertices: Vec<Vec<u32>>, s: f64 },
    LogType { r: f64, s: f64 },
    Product(Vec<Weight>),
    Inverse(Box<Weight>),
    Power(Box<Weight>, f64),
}

/// How derivatives of a weight's powers decay.
#[derive(Debug, Clone, PartialEq)]
pub enum DerivativeRule {
    /// `|D^a <xi>_M^s| <= C <xi>_M^(s - <a, 1/M>)`.
    QuasiHomogeneous { m: Vec<u32> },
    /// `|D^a lambda^s| <= C lambda^(s - |a|/mu)`.
    MultiQuasiElliptic { mu: f64 },
    Constant,
}

/// Metadata derived from the family formulas.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WeightMeta {
    /// Lower polynomial growth exponent.
    pub growth_lower: f64,
    /// Upper polynomial growth exponent.
    pub growth_upper: f64,
    /// Exponent N of the temperance condition.
    pub temperance: f64,
    /// Exponent N of the slowly varying condition, when the family claims it.
    pub slowly_varying: Option<f64>,
    /// Exponent of the condition (G), when claimed.
    pub delta: Option<f64>,
    /// Infimum of the weight when it is bounded below by a positive constant.
    pub lower_bound: Option<f64>,
    /// Nondecreasing in every `|xi_j|`.
    pub monotone: bool,
    /// Fixed dimension for anisotropic families.
    pub dim: Option<usize>,
}

/// A positive function on frequency space with family metadata.
#[derive(Debug, Clone)]
pub struct Weight {
    kind: Kind,
    descriptor: WeightDescriptor,
    meta: WeightMeta,
    derivative: Option<DerivativeRule>,
    base_power: f64,
    sub_additive: bool,
    sub_multiplicative: bool,
    shrinking: bool,
}

fn bracket(xi: &[f64]) -> f64 {
    (1.0 + xi.iter().map(|x| x * x).sum::<f64>()).sqrt()
}

impl Weight {
    pub fn from_descriptor(d: &WeightDescriptor) -> Result<Self> {
        let w = match d {
            WeightDescriptor::Constant { c } => {
                if !(*c > 0.0) || !c.is_finite() {
                    return Err(Error::BadParam(format!("constant weight must be positive, got {c}")));
                }
                Self {
                    kind: Kind::Constant(*c),
                    descriptor: d.clone(),
                    meta: WeightMeta {
                        growth_lower: 0.0,
                        growth_upper: 0.0,
                        temperance: 0.0,
                        slowly_varying: Some(0.0),
                        delta: Some(0.0),
                        lower_bound: Some(*c),
                        monotone: true,
                        dim: None,
                    },
                    derivative: Some(DerivativeRule::Constant),
                    base_power: 0.0,
                    sub_additive: true,
                    sub_multiplicative: true,
                    shrinking: true,
                }
            }
            WeightDescriptor::Homogeneous { m } => {
                let m = *m;
                if !m.is_finite() {
                    return Err(Error::BadParam("exponent must be finite".into()));
                }
                Self {
                    kind: Kind::Homogeneous(m),
                    descriptor: d.clone(),
                    meta: WeightMeta {
                        growth_lower: m,
                        growth_upper: m,
                        temperance: m.abs(),
                        slowly_varying: (m > 0.0).then_some(m),
                        delta: (m >= 0.0).then_some(0.0),
                        lower_bound: (m >= 0.0).then_some(1.0),
                        monotone: m >= 0.0,
                        dim: None,
                    },
                    derivative: None,
                    base_power: m,
                    sub_additive: m >= 0.0,
                    sub_multiplicative: m >= 0.0,
                    shrinking: m >= 0.0,
                }
            }
            WeightDescriptor::QuasiHomogeneous { m, s } => {
                if m.is_empty() || m.len() > 3 || m.iter().any(|&x| x < 1) {
                    return Err(Error::BadParam(format!("M must have 1..=3 entries, each >= 1, got {m:?}")));
                }
                let (lo, hi) = (*m.iter().min().unwrap() as f64, *m.iter().max().unwrap() as f64);
                let s = *s;
                let (gl, gu) = if s >= 0.0 { (s * lo, s * hi) } else { (s * hi, s * lo) };
                Self {
                    kind: Kind::QuasiHomogeneous { m: m.clone(), s },
                    descriptor: d.clone(),
                    meta: WeightMeta {
                        growth_lower: gl,
                        growth_upper: gu,
                        temperance: s.abs() * hi,
                        slowly_varying: (s > 0.0).then_some(s * hi),
                        delta: (s >= 0.0).then_some(0.0),
                        lower_bound: (s >= 0.0).then_some(1.0),
                        monotone: s >= 0.0,
                        dim: Some(m.len()),
                    },
                    derivative: Some(DerivativeRule::QuasiHomogeneous { m: m.clone() }),
                    base_power: s,
                    sub_additive: s >= 0.0,
                    sub_multiplicative: s >= 0.0,
                    shrinking: s >= 0.0,
                }
            }
            WeightDescriptor::MultiQuasiElliptic { vertices, s } => {
                let p = CompletePolyhedron::build(vertices)?;
                let o = p.orders();
                let mu = *o.mu.numer() as f64 / *o.mu.denom() as f64;
                let delta = p.delta();
                let delta = *delta.numer() as f64 / *delta.denom() as f64;
                let s = *s;
                let (gl, gu) =
                    if s >= 0.0 { (s * o.mu0 as f64, s * o.mu1 as f64) } else { (s * o.mu1 as f64, s * o.mu0 as f64) };
                // a single inner facet means the polyhedron is that of a quasi-homogeneous weight
                let quasi = p.inner_normals().len() == 1;
                Self {
                    kind: Kind::MultiQuasiElliptic { vertices: p.vertices().to_vec(), s },
                    descriptor: d.clone(),
                    meta: WeightMeta {
                        growth_lower: gl,
                        growth_upper: gu,
                        temperance: s.abs() * o.mu1 as f64,
                        slowly_varying: (s > 0.0).then_some(s * mu),
                        delta: (s >= 0.0).then_some(delta),
                        lower_bound: (s >= 0.0).then_some(1.0),
                        monotone: s >= 0.0,
                        dim: Some(p.dim()),
                    },
                    derivative: Some(DerivativeRule::MultiQuasiElliptic { mu }),
                    base_power: s,
                    sub_additive: s >= 0.0 && quasi,
                    sub_multiplicative: s >= 0.0,
                    shrinking: s >= 0.0,
                }
            }
            WeightDescriptor::LogType { r, s } => {
                if !(*r > 0.0 && *s > 0.0) {
                    return Err(Error::BadParam(format!("log-type exponents must be positive, got r={r}, s={s}")));
                }
                Self {
                    kind: Kind::LogType { r: *r, s: *s },
                    descriptor: d.clone(),
                    meta: WeightMeta {
                        growth_lower: *s,
                        growth_upper: s + r,
                        temperance: s + r,
                        slowly_varying: Some(s + r),
                        delta: Some(0.0),
                        lower_bound: Some(3f64.ln().powf(*r)),
                        monotone: true,
                        dim: None,
                    },
                    derivative: None,
                    base_power: *s,
                    sub_additive: true,
                    sub_multiplicative: true,
                    shrinking: true,
                }
            }
            WeightDescriptor::Product { factors } => {
                if factors.is_empty() {
                    return Err(Error::BadParam("product of no factors".into()));
                }
                let ws = factors.iter().map(Weight::from_descriptor).collect::<Result<Vec<_>>>()?;
                Self::product_of(ws)?
            }
            WeightDescriptor::Inverse { of } => Self::from_descriptor(of)?.inverse(),
            WeightDescriptor::Power { of, s } => Self::from_descriptor(of)?.power(*s),
        };
        Ok(w)
    }

    pub fn constant(c: f64) -> Self {
        Self::from_descriptor(&WeightDescriptor::Constant { c }).expect("positive constant")
    }

    /// `<xi>^m = (1 + |xi|^2)^(m/2)`.
    pub fn homogeneous(m: f64) -> Self {
        Self::from_descriptor(&WeightDescriptor::Homogeneous { m }).expect("finite exponent")
    }

    /// `<xi>_M^s = (1 + sum xi_j^(2 m_j))^(s/2)`.
    pub fn quasi_homogeneous(m: &[u32], s: f64) -> Result<Self> {
        Self::from_descriptor(&WeightDescriptor::QuasiHomogeneous { m: m.to_vec(), s })
    }

    /// `lambda_P^s = (sum over vertices of xi^(2 alpha))^(s/2)`.
    pub fn multi_quasi_elliptic(p: &CompletePolyhedron, s: f64) -> Self {
        let vertices = p.vertices().iter().map(|v| v.iter().map(|&c| c as i64).collect()).collect();
        Self::from_descriptor(&WeightDescriptor::MultiQuasiElliptic { vertices, s }).expect("valid polyhedron")
    }

    pub fn log_type(r: f64, s: f64) -> Result<Self> {
        Self::from_descriptor(&WeightDescriptor::LogType { r, s })
    }

    fn product_of(ws: Vec<Weight>) -> Result<Self> {
        let dims: Vec<usize> = ws.iter().filter_map(|w| w.meta.dim).collect();
        if dims.windows(2).any(|p| p[0] != p[1]) {
            return Err(Error::BadParam(format!("factors of different dimension {dims:?}")));
        }
        let bounds: Option<Vec<f64>> = ws.iter().map(|w| w.meta.lower_bound).collect();
        let meta = WeightMeta {
            growth_lower: ws.iter().map(|w| w.meta.growth_lower).sum(),
            growth_upper: ws.iter().map(|w| w.meta.growth_upper).sum(),
            temperance: ws.iter().map(|w| w.meta.temperance).sum(),
            slowly_varying: None,
            delta: None,
            lower_bound: bounds.map(|b| b.iter().product()),
            monotone: ws.iter().all(|w| w.meta.monotone),
            dim: dims.first().copied(),
        };
        Ok(Self {
            descriptor: WeightDescriptor::Product { factors: ws.iter().map(|w| w.descriptor.clone()).collect() },
            sub_additive: false,
            sub_multiplicative: ws.iter().all(|w| w.sub_multiplicative),
            shrinking: ws.iter().all(|w| w.shrinking),
            derivative: None,
            base_power: 0.0,
            kind: Kind::Product(ws),
            meta,
        })
    }

    /// Pointwise product.
    pub fn product(&self, other: &Weight) -> Result<Self> {
        Self::product_of(vec![self.clone(), other.clone()])
    }

    /// Pointwise reciprocal; the temperance exponent is unchanged.
    pub fn inverse(&self) -> Self {
        let m = &self.meta;
        Self {
            kind: Kind::Inverse(Box::new(self.clone())),
            descriptor: WeightDescriptor::Inverse { of: Box::new(self.descriptor.clone()) },
            meta: WeightMeta {
                growth_lower: -m.growth_upper,
                growth_upper: -m.growth_lower,
                temperance: m.temperance,
                slowly_varying: None,
                delta: None,
                lower_bound: (m.growth_upper <= 0.0).then(|| 1.0 / self.eval(&vec![0.0; m.dim.unwrap_or(1)])),
                monotone: false,
                dim: m.dim,
            },
            derivative: None,
            base_power: -self.base_power,
            sub_additive: false,
            sub_multiplicative: false,
            shrinking: false,
        }
    }

    /// Pointwise power; the temperance exponent scales by `|s|`.
    pub fn power(&self, s: f64) -> Self {
        let m = &self.meta;
        let (gl, gu) = if s >= 0.0 { (s * m.growth_lower, s * m.growth_upper) } else { (s * m.growth_upper, s * m.growth_lower) };
        let positive = s >= 0.0;
        Self {
            kind: Kind::Power(Box::new(self.clone()), s),
            descriptor: WeightDescriptor::Power { of: Box::new(self.descriptor.clone()), s },
            meta: WeightMeta {
                growth_lower: gl,
                growth_upper: gu,
                temperance: s.abs() * m.temperance,
                slowly_varying: if s > 0.0 { m.slowly_varying.map(|n| n * s) } else { None },
                delta: if positive { m.delta } else { None },
                lower_bound: if positive { m.lower_bound.map(|c| c.powf(s)) } else { None },
                monotone: positive && m.monotone,
                dim: m.dim,
            },
            derivative: self.derivative.clone(),
            base_power: self.base_power * s,
            sub_additive: positive && self.sub_additive && s <= 1.0,
            sub_multiplicative: positive && self.sub_multiplicative,
            shrinking: positive && self.shrinking,
        }
    }

    /// Value at a frequency point.
    pub fn eval(&self, xi: &[f64]) -> f64 {
        match &self.kind {
            Kind::Constant(c) => *c,
            Kind::Homogeneous(m) => {
                let b2 = 1.0 + xi.iter().map(|x| x * x).sum::<f64>();
                if *m == 1.0 {
                    b2.sqrt()
                } else if *m == 2.0 {
                    b2
                } else {
                    b2.powf(m / 2.0)
                }
            }
            Kind::QuasiHomogeneous { m, s } => {
                let b2 = 1.0 + xi.iter().zip(m).map(|(x, &mj)| x.powi(2 * mj as i32)).sum::<f64>();
                if *s == 1.0 {
                    b2.sqrt()
                } else {
                    b2.powf(s / 2.0)
                }
            }
            Kind::MultiQuasiElliptic { vertices, s } => {
                let b2: f64 = vertices
                    .iter()
                    .map(|a| xi.iter().zip(a).map(|(x, &aj)| x.powi(2 * aj as i32)).product::<f64>())
                    .sum();
                if *s == 1.0 {
                    b2.sqrt()
                } else {
                    b2.powf(s / 2.0)
                }
            }
            Kind::LogType { r, s } => {
                let b = bracket(xi);
                b.powf(*s) * (2.0 + b).ln().powf(*r)
            }
            Kind::Product(ws) => ws.iter().map(|w| w.eval(xi)).product(),
            Kind::Inverse(w) => 1.0 / w.eval(xi),
            Kind::Power(w, s) => {
                if *s == 0.0 {
                    1.0
                } else {
                    w.eval(xi).powf(*s)
                }
            }
        }
    }

    pub fn descriptor(&self) -> &WeightDescriptor {
        &self.descriptor
    }

    pub fn meta(&self) -> &WeightMeta {
        &self.meta
    }

    /// Fixed dimension for anisotropic families.
    pub fn dim(&self) -> Option<usize> {
        self.meta.dim
    }

    /// Checks that the weight can be evaluated in dimension `n`.
    pub fn check_dim(&self, n: usize) -> Result<()> {
        match self.meta.dim {
            Some(d) if d != n => Err(Error::BadParam(format!("weight of dimension {d} used in dimension {n}"))),
            _ => Ok(()),
        }
    }

    pub(crate) fn derivative_rule(&self) -> Option<(&DerivativeRule, f64)> {
        self.derivative.as_ref().map(|r| (r, self.base_power))
    }

    /// Base weight whose powers the derivative rule refers to (`<xi>_M` or `lambda_P`).
    pub(crate) fn derivative_base(&self, xi: &[f64]) -> f64 {
        match &self.kind {
            Kind::QuasiHomogeneous { m, .. } => {
                (1.0 + xi.iter().zip(m).map(|(x, &mj)| x.powi(2 * mj as i32)).sum::<f64>()).sqrt()
            }
            Kind::MultiQuasiElliptic { vertices, .. } => vertices
                .iter()
                .map(|a| xi.iter().zip(a).map(|(x, &aj)| x.powi(2 * aj as i32)).product::<f64>())
                .sum::<f64>()
                .sqrt(),
            Kind::Power(w, _) => w.derivative_base(xi),
            _ => 1.0,
        }
    }

    /// Conditions the family formulas guarantee in dimension `n`.
    pub fn claimed_conditions(&self, n: usize) -> Vec<Condition> {
        let m = &self.meta;
        let mut out = vec![Condition::T, Condition::PG];
        if m.slowly_varying.is_some() {
            out.push(Condition::SV);
        }
        if self.sub_additive {
            out.push(Condition::SA);
        }
        if self.sub_multiplicative {
            out.push(Condition::SM);
        }
        if let Some(d) = m.delta {
            out.push(Condition::G(Some(d)));
        }
        if self.shrinking {
            out.push(Condition::SH);
        }
        let threshold = match &self.kind {
            Kind::MultiQuasiElliptic { .. } => {
                let d = m.delta.unwrap_or(0.0);
                let mu0 = if self.base_power != 0.0 { m.growth_lower / self.base_power } else { 0.0 };
                if self.base_power > 0.0 {
                    Some(n as f64 / ((1.0 - d) * mu0) / self.base_power)
                } else {
                    None
                }
            }
            _ if self.sub_additive && m.growth_lower > 0.0 => Some(n as f64 / m.growth_lower),
            _ => None,
        };
        if let Some(t) = threshold {
            if t < 1.0 {
                out.push(Condition::B(1.0));
            }
        }
        out
    }
}
