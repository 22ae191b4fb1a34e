use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::weights::{Weight, WeightDescriptor};

/// JSON expression tree of a closed-form symbol `a(x, xi)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum Expr {
    Const {
        re: f64,
        #[serde(default)]
        im: f64,
    },
    X {
        j: usize,
    },
    Xi {
        j: usize,
    },
    Add {
        terms: Vec<Expr>,
    },
    Mul {
        factors: Vec<Expr>,
    },
    Pow {
        base: Box<Expr>,
        exp: f64,
    },
    Exp {
        arg: Box<Expr>,
    },
    /// A weight evaluated at `xi`.
    Weight {
        weight: WeightDescriptor,
    },
}

impl Expr {
    pub fn c(re: f64) -> Self {
        Expr::Const { re, im: 0.0 }
    }

    pub fn i() -> Self {
        Expr::Const { re: 0.0, im: 1.0 }
    }

    pub fn x(j: usize) -> Self {
        Expr::X { j }
    }

    pub fn xi(j: usize) -> Self {
        Expr::Xi { j }
    }

    pub fn add(terms: Vec<Expr>) -> Self {
        Expr::Add { terms }
    }

    pub fn mul(factors: Vec<Expr>) -> Self {
        Expr::Mul { factors }
    }

    pub fn pow(base: Expr, exp: f64) -> Self {
        Expr::Pow { base: Box::new(base), exp }
    }

    pub fn exp(arg: Expr) -> Self {
        Expr::Exp { arg: Box::new(arg) }
    }

    pub fn weight(weight: WeightDescriptor) -> Self {
        Expr::Weight { weight }
    }

    /// Resolves weight references and checks variable indices against the dimension.
    pub(crate) fn compile(&self, dim: usize) -> Result<Node> {
        Ok(match self {
            Expr::Const { re, im } => Node::Const(Complex64::new(*re, *im)),
            Expr::X { j } | Expr::Xi { j } if *j >= dim => {
                return Err(Error::BadParam(format!("variable index {j} out of range for dimension {dim}")))
            }
            Expr::X { j } => Node::X(*j),
            Expr::Xi { j } => Node::Xi(*j),
            Expr::Add { terms } => Node::Add(terms.iter().map(|t| t.compile(dim)).collect::<Result<_>>()?),
            Expr::Mul { factors } => Node::Mul(factors.iter().map(|t| t.compile(dim)).collect::<Result<_>>()?),
            Expr::Pow { base, exp } => Node::Pow(Box::new(base.compile(dim)?), *exp),
            Expr::Exp { arg } => Node::Exp(Box::new(arg.compile(dim)?)),
            Expr::Weight { weight } => {
                let w = Weight::from_descriptor(weight)?;
                w.check_dim(dim)?;
                Node::Weight(w)
            }
        })
    }
}

/// Compiled expression with weights resolved.
#[derive(Debug, Clone)]
pub(crate) enum Node {
    Const(Complex64),
    X(usize),
    Xi(usize),
    Add(Vec<Node>),
    Mul(Vec<Node>),
    Pow(Box<Node>, f64),
    Exp(Box<Node>),
    Weight(Weight),
}

const MAX_TERMS: usize = 64;

impl Node {
    pub fn eval(&self, x: &[f64], xi: &[f64]) -> Complex64 {
        match self {
            Node::Const(c) => *c,
            Node::X(j) => Complex64::new(x[*j], 0.0),
            Node::Xi(j) => Complex64::new(xi[*j], 0.0),
            Node::Add(t) => t.iter().map(|n| n.eval(x, xi)).sum(),
            Node::Mul(f) => f.iter().map(|n| n.eval(x, xi)).product(),
            Node::Pow(b, e) => {
                let v = b.eval(x, xi);
                if e.fract() == 0.0 && e.abs() <= i32::MAX as f64 {
                    v.powi(*e as i32)
                } else if v.im == 0.0 && v.re >= 0.0 {
                    Complex64::new(v.re.powf(*e), 0.0)
                } else {
                    v.powf(*e)
                }
            }
            Node::Exp(a) => a.eval(x, xi).exp(),
            Node::Weight(w) => Complex64::new(w.eval(xi), 0.0),
        }
    }

    fn depends_x(&self) -> bool {
        match self {
            Node::X(_) => true,
            Node::Const(_) | Node::Xi(_) | Node::Weight(_) => false,
            Node::Add(v) | Node::Mul(v) => v.iter().any(Node::depends_x),
            Node::Pow(b, _) | Node::Exp(b) => b.depends_x(),
        }
    }

    fn depends_xi(&self) -> bool {
        match self {
            Node::Xi(_) | Node::Weight(_) => true,
            Node::Const(_) | Node::X(_) => false,
            Node::Add(v) | Node::Mul(v) => v.iter().any(Node::depends_xi),
            Node::Pow(b, _) | Node::Exp(b) => b.depends_xi(),
        }
    }

    /// Splits into `sum v_k(x) m_k(xi)` when the tree allows it.
    pub fn separate(&self) -> Option<Vec<(Node, Node)>> {
        let one = Node::Const(Complex64::new(1.0, 0.0));
        if !self.depends_x() {
            return Some(vec![(one, self.clone())]);
        }
        if !self.depends_xi() {
            return Some(vec![(self.clone(), one)]);
        }
        let out = match self {
            Node::Add(terms) => {
                let mut out = Vec::new();
                for t in terms {
                    out.extend(t.separate()?);
                }
                out
            }
            Node::Mul(factors) => {
                let mut acc = vec![(one.clone(), one)];
                for f in factors {
                    let parts = f.separate()?;
                    let mut next = Vec::with_capacity(acc.len() * parts.len());
                    for (ax, am) in &acc {
                        for (bx, bm) in &parts {
                            next.push((Node::Mul(vec![ax.clone(), bx.clone()]), Node::Mul(vec![am.clone(), bm.clone()])));
                        }
                    }
                    if next.len() > MAX_TERMS {
                        return None;
                    }
                    acc = next;
                }
                acc
            }
            Node::Pow(b, e) if e.fract() == 0.0 && (1.0..=8.0).contains(e) => {
                Node::Mul(vec![(**b).clone(); *e as usize]).separate()?
            }
            Node::Exp(arg) => {
                // exp of a sum of pure terms factors
                let Node::Add(terms) = &**arg else { return None };
                let (xs, xis): (Vec<Node>, Vec<Node>) = terms.iter().cloned().partition(|t| !t.depends_xi());
                if xis.iter().any(Node::depends_x) {
                    return None;
                }
                vec![(Node::Exp(Box::new(Node::Add(xs))), Node::Exp(Box::new(Node::Add(xis))))]
            }
            _ => return None,
        };
        (out.len() <= MAX_TERMS).then_some(out)
    }

    pub fn is_x_independent(&self) -> bool {
        !self.depends_x()
    }
}
