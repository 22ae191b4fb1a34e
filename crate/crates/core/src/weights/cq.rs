use rayon::prelude::*;
use serde::Serialize;

use super::conditions::{pair_sup, probe_points, ProbeLevel, SamplingPlan};
use super::Weight;
use crate::error::Result;
use crate::numerics::{gauss_legendre, norm, sphere_area, sphere_directions, CompensatedSum};

/// A constant that is either finite or diverges.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum CqValue {
    Finite(f64),
    Infinite,
}

impl CqValue {
    pub fn finite(&self) -> Option<f64> {
        match self {
            CqValue::Finite(v) => Some(*v),
            CqValue::Infinite => None,
        }
    }
}

/// Estimate of `sup_xi || w(xi) / (w1(xi - .) w2(.)) ||_{L^q}`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CqEstimate {
    pub value: CqValue,
    pub refinement_ratio: f64,
    pub level_values: Vec<f64>,
    /// Largest relative growth of the integral under truncation doubling.
    pub truncation_growth: f64,
    pub witness: Vec<Vec<f64>>,
}

const GL_POINTS: usize = 8;
const INNER_RADIUS: f64 = 1.0 / 16.0;

struct Quadrature {
    dirs: Vec<Vec<f64>>,
    dir_weight: f64,
    gl_x: Vec<f64>,
    gl_w: Vec<f64>,
    panels_per_octave: usize,
}

impl Quadrature {
    fn new(dim: usize, level: &ProbeLevel) -> Self {
        let dirs = if dim == 2 {
            // half-step offset keeps the nodes off the coordinate axes
            let k = level.angular_nodes;
            (0..k)
                .map(|i| {
                    let a = 2.0 * std::f64::consts::PI * (i as f64 + 0.5) / k as f64;
                    vec![a.cos(), a.sin()]
                })
                .collect()
        } else {
            sphere_directions(dim, level.angular_nodes * if dim == 3 { 2 } else { 1 })
        };
        let dir_weight = sphere_area(dim) / dirs.len() as f64;
        let (gl_x, gl_w) = gauss_legendre(GL_POINTS);
        Self { dirs, dir_weight, gl_x, gl_w, panels_per_octave: level.panels_per_octave.max(1) }
    }

    fn panels(&self, rho_max: f64) -> Vec<(f64, f64)> {
        let mut edges = vec![0.0, INNER_RADIUS];
        let mut k = 1;
        while *edges.last().unwrap() < rho_max {
            edges.push(INNER_RADIUS * 2f64.powf(k as f64 / self.panels_per_octave as f64));
            k += 1;
        }
        let last = edges.len() - 1;
        edges[last] = rho_max;
        edges.windows(2).map(|e| (e[0], e[1])).collect()
    }

    /// Integrals of `g` over `|eta| <= r` and `|eta| <= 2r`, split into the parts
    /// closer to the origin and closer to `xi` so both peaks are resolved.
    fn integrate<G: Fn(&[f64]) -> f64>(&self, xi: &[f64], r: f64, g: &G) -> (f64, f64) {
        let dim = xi.len();
        let mut inner = CompensatedSum::new();
        let mut outer = CompensatedSum::new();
        let xi_norm = norm(xi);
        let centers: Vec<&[f64]> = if xi_norm == 0.0 { vec![xi] } else { vec![&xi[..0], xi] };
        let zero = vec![0.0; dim];
        let mut eta = vec![0.0; dim];
        for (ci, c) in centers.iter().enumerate() {
            let c: &[f64] = if c.is_empty() { &zero } else { c };
            let at_origin = ci == 0;
            for (a, b) in self.panels(2.0 * r + norm(c)) {
                let half = 0.5 * (b - a);
                for (x, wq) in self.gl_x.iter().zip(&self.gl_w) {
                    let rho = a + half * (x + 1.0);
                    let radial = half * wq * rho.powi(dim as i32 - 1) * self.dir_weight;
                    for d in &self.dirs {
                        for j in 0..dim {
                            eta[j] = c[j] + rho * d[j];
                        }
                        let to_origin = norm(&eta);
                        if xi_norm > 0.0 {
                            let to_xi = eta.iter().zip(xi).map(|(e, x)| (e - x) * (e - x)).sum::<f64>().sqrt();
                            let closer_to_origin = to_origin <= to_xi;
                            if closer_to_origin != at_origin {
                                continue;
                            }
                        }
                        if to_origin > 2.0 * r {
                            continue;
                        }
                        let v = g(&eta) * radial;
                        outer.add(v);
                        if to_origin <= r {
                            inner.add(v);
                        }
                    }
                }
            }
        }
        (inner.value(), outer.value())
    }

    /// `r^(n-1) * integral over the unit sphere of g(r theta)`.
    fn shell_density<G: Fn(&[f64]) -> f64>(&self, dim: usize, r: f64, g: &G) -> f64 {
        let s: f64 = self
            .dirs
            .iter()
            .map(|d| g(&d.iter().map(|c| c * r).collect::<Vec<_>>()))
            .sum();
        s * self.dir_weight * r.powi(dim as i32 - 1)
    }
}

fn diff(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

/// Numerical `C_q`; `q = INFINITY` takes the pointwise supremum instead of an integral.
///
/// The integral is truncated at `R` and `2R` with an analytic tail from the lower growth
/// exponents; growth above 10% under the doubling, or a non-integrable tail, is reported
/// as divergence.
pub fn estimate_cq(omega: &Weight, omega1: &Weight, omega2: &Weight, q: f64, plan: &SamplingPlan) -> Result<CqEstimate> {
    plan.validate()?;
    let dim = plan.dim;
    for w in [omega, omega1, omega2] {
        w.check_dim(dim)?;
    }
    if !(q >= 1.0) {
        return Err(crate::Error::BadParam(format!("q must lie in [1, inf], got {q}")));
    }

    if q.is_infinite() {
        let mut values = Vec::new();
        let mut witness = Vec::new();
        for (i, level) in plan.levels.iter().enumerate() {
            let (v, w) = pair_sup(dim, level, plan.seed.wrapping_add(i as u64), |xi, eta| {
                omega.eval(xi) / (omega1.eval(&diff(xi, eta)) * omega2.eval(eta))
            });
            values.push(v);
            witness = w;
        }
        let ratio = values[values.len() - 1] / values[values.len() - 2];
        let last = *values.last().unwrap();
        return Ok(CqEstimate {
            value: if last.is_finite() && ratio <= 1.1 { CqValue::Finite(last) } else { CqValue::Infinite },
            refinement_ratio: ratio,
            level_values: values,
            truncation_growth: 0.0,
            witness,
        });
    }

    let kappa = q * (omega1.meta().growth_lower + omega2.meta().growth_lower);
    let tail_ok = kappa > dim as f64;
    let finest = plan.levels.iter().map(|l| l.max_log2_radius).max().unwrap_or(0);
    let r = plan.truncation_radius.unwrap_or(4.0 * 2f64.powi(finest as i32));

    let mut values = Vec::new();
    let mut witness = Vec::new();
    let mut worst_growth: f64 = 0.0;
    let mut diverged = !tail_ok;
    for level in &plan.levels {
        let quad = Quadrature::new(dim, level);
        let probes = probe_points(dim, level);
        let per_probe: Vec<(f64, f64)> = probes
            .par_iter()
            .map(|xi| {
                let wx = omega.eval(xi);
                let g = |eta: &[f64]| (wx / (omega1.eval(&diff(xi, eta)) * omega2.eval(eta))).powf(q);
                let (i1, i2) = quad.integrate(xi, r, &g);
                let (t1, t2) = if tail_ok {
                    let k = kappa - dim as f64;
                    (quad.shell_density(dim, r, &g) * r / k, quad.shell_density(dim, 2.0 * r, &g) * 2.0 * r / k)
                } else {
                    (f64::INFINITY, f64::INFINITY)
                };
                let (a, b) = (i1 + t1, i2 + t2);
                let growth = if a > 0.0 && a.is_finite() { (b - a).abs() / a } else { 0.0 };
                (b, growth)
            })
            .collect();
        let mut best = (f64::NEG_INFINITY, 0usize);
        for (i, (v, growth)) in per_probe.iter().enumerate() {
            worst_growth = worst_growth.max(*growth);
            if *v > best.0 {
                best = (*v, i);
            }
        }
        if worst_growth > 0.1 {
            diverged = true;
        }
        values.push(best.0.powf(1.0 / q));
        witness = vec![probes[best.1].clone()];
    }
    let (a, b) = (values[values.len() - 2], values[values.len() - 1]);
    let ratio = if a > 0.0 { b / a } else { f64::INFINITY };
    let last = *values.last().unwrap();
    Ok(CqEstimate {
        value: if diverged || !last.is_finite() { CqValue::Infinite } else { CqValue::Finite(last) },
        refinement_ratio: ratio,
        level_values: values,
        truncation_growth: if tail_ok { worst_growth } else { f64::INFINITY },
        witness,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_weights_diverge() {
        let one = Weight::constant(1.0);
        let est = estimate_cq(&one, &one, &one, 1.0, &SamplingPlan::standard(1, 0)).unwrap();
        assert_eq!(est.value, CqValue::Infinite);
    }

    #[test]
    fn bracket_squared_is_integrable_in_one_dimension() {
        let w = Weight::homogeneous(2.0);
        let est = estimate_cq(&w, &w, &w, 1.0, &SamplingPlan::standard(1, 0)).unwrap();
        let v = est.value.finite().expect("finite");
        // the integral tends to 2 * pi at large xi and equals pi at the origin
        assert!(v > 6.0 && v < 7.0, "{v}");
        assert!(est.truncation_growth < 0.05);
        assert!(est.refinement_ratio <= 1.1);
    }

    #[test]
    fn sup_path_for_q_infinity() {
        let w = Weight::homogeneous(1.0);
        let est = estimate_cq(&w, &w, &w, f64::INFINITY, &SamplingPlan::standard(2, 0)).unwrap();
        let v = est.value.finite().unwrap();
        assert!(v <= 2.0 && v > 1.0);
    }
}
