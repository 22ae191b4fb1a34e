use std::f64::consts::PI;

use serde::Serialize;

use super::inclusion::c_hat;
use super::mask::{bracket_neighborhood, FrequencyMask, SetDescriptor};
use super::schedule;
use crate::error::{Error, Result};
use crate::grid::GridSpec;
use crate::numerics::{golden_section, sphere_directions};
use crate::weights::Weight;

const SEEDS: usize = 64;

/// `|xi|_M = (sum xi_j^(2 m_j))^(1/2)`.
pub fn m_norm(xi: &[f64], m: &[u32]) -> f64 {
    xi.iter().zip(m).map(|(x, &mj)| x.powi(2 * mj as i32)).sum::<f64>().sqrt()
}

/// `t^(1/M) xi`.
pub fn m_scale(xi: &[f64], m: &[u32], t: f64) -> Vec<f64> {
    xi.iter().zip(m).map(|(x, &mj)| x * t.powf(1.0 / mj as f64)).collect()
}

/// `inf_{t > 0} |t^(-1/M) xi - eta|_M`.
///
/// Log-spaced seeds over `t0 [1/16, 16]`, `t0 = |xi|_M / |eta|_M`, then golden-section refinement around
/// the best seed; the limit `|eta|_M` as `t -> infinity` is included.
pub fn m_cone_distance(xi: &[f64], eta: &[f64], m: &[u32]) -> f64 {
    let limit = m_norm(eta, m);
    let rho = m_norm(xi, m);
    if rho == 0.0 || limit == 0.0 {
        return limit;
    }
    let f = |u: f64| {
        let t = u.exp();
        xi.iter()
            .zip(eta)
            .zip(m)
            .map(|((x, e), &mj)| (x * t.powf(-1.0 / mj as f64) - e).powi(2 * mj as i32))
            .sum::<f64>()
            .sqrt()
    };
    let center = (rho / limit).ln();
    let span = 16f64.ln();
    let step = 2.0 * span / (SEEDS - 1) as f64;
    let us: Vec<f64> = (0..SEEDS).map(|i| center - span + i as f64 * step).collect();
    let vals: Vec<f64> = us.iter().map(|&u| f(u)).collect();
    let best = (0..SEEDS).fold(0, |b, i| if vals[i] < vals[b] { i } else { b });
    let (lo, hi) = (us[best.saturating_sub(1)], us[(best + 1).min(SEEDS - 1)]);
    let (_, refined) = golden_section(f, lo, hi, 1e-10);
    refined.min(vals[best]).min(limit)
}

/// `xi in Gamma_M(eta; r)`.
pub fn m_cone(xi: &[f64], eta: &[f64], r: f64, m: &[u32]) -> bool {
    xi.iter().any(|&c| c != 0.0) && m_cone_distance(xi, eta, m) < r
}

/// Points of the unit M-sphere: `u_j -> sign(u_j) |u_j|^(1/m_j)` applied to unit directions.
pub fn m_sphere_samples(m: &[u32], count: usize) -> Vec<Vec<f64>> {
    sphere_directions(m.len(), count)
        .into_iter()
        .map(|u| u.iter().zip(m).map(|(c, &mj)| c.signum() * c.abs().powf(1.0 / mj as f64)).collect())
        .collect()
}

/// Angle of the M-ray through a planar point; constant along `t^(1/M) xi`.
fn m_angle(xi: &[f64], m: &[u32]) -> f64 {
    let c = xi[0].signum() * xi[0].abs().powi(m[0] as i32);
    let s = xi[1].signum() * xi[1].abs().powi(m[1] as i32);
    s.atan2(c)
}

fn wrap(a: f64) -> f64 {
    let mut a = (a + PI) % (2.0 * PI);
    if a < 0.0 {
        a += 2.0 * PI;
    }
    a - PI
}

/// Distance to `U_eta Gamma_M(eta; .)` over sampled generators.
///
/// In the plane, a generator is skipped when the ray angle lies outside the angular shadow of the box
/// `|z_j - eta_j| < cap^(1/m_j)` containing `B_M(eta; cap)`; distances at or above `cap` are reported as `cap`.
pub struct ConeUnion {
    m: Vec<u32>,
    etas: Vec<Vec<f64>>,
    cap: f64,
    /// `(center angle, lowest offset, highest offset)`, or `None` when every angle qualifies.
    shadows: Vec<Option<(f64, f64, f64)>>,
}

impl ConeUnion {
    pub fn new(m: &[u32], etas: Vec<Vec<f64>>, cap: f64) -> Self {
        let shadows = etas
            .iter()
            .map(|eta| {
                if m.len() != 2 {
                    return None;
                }
                let half: Vec<f64> = m.iter().map(|&mj| cap.powf(1.0 / mj as f64)).collect();
                if eta.iter().zip(&half).all(|(e, h)| e.abs() < *h) {
                    return None;
                }
                let center = m_angle(eta, m);
                let mut lo = f64::INFINITY;
                let mut hi = f64::NEG_INFINITY;
                for (s0, s1) in [(-1.0, -1.0), (-1.0, 1.0), (1.0, -1.0), (1.0, 1.0)] {
                    let corner = [eta[0] + s0 * half[0], eta[1] + s1 * half[1]];
                    let d = wrap(m_angle(&corner, m) - center);
                    lo = lo.min(d);
                    hi = hi.max(d);
                }
                Some((center, lo - 1e-12, hi + 1e-12))
            })
            .collect();
        Self { m: m.to_vec(), etas, cap, shadows }
    }

    pub fn generators(&self) -> &[Vec<f64>] {
        &self.etas
    }

    pub fn distance(&self, xi: &[f64]) -> f64 {
        if xi.iter().all(|&c| c == 0.0) {
            return self.cap;
        }
        let angle = (self.m.len() == 2).then(|| m_angle(xi, &self.m));
        let mut best = self.cap;
        for (eta, shadow) in self.etas.iter().zip(&self.shadows) {
            if let (Some(a), Some((c, lo, hi))) = (angle, shadow) {
                let d = wrap(a - c);
                if d < *lo || d > *hi {
                    continue;
                }
            }
            best = best.min(m_cone_distance(xi, eta, &self.m));
        }
        best
    }
}

/// One step of the cone-equivalence schedule.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConeScheduleEntry {
    pub eps_prime: f64,
    pub forward_holds: bool,
    pub reverse_holds: bool,
    pub forward_lhs: usize,
    pub reverse_lhs: usize,
    pub forward_violations: usize,
    pub reverse_violations: usize,
    pub witness: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConeEquivalenceReport {
    pub eps: f64,
    /// Largest scheduled `eps'` for which both inclusions hold.
    pub eps_prime: Option<f64>,
    pub c_hat: f64,
    /// Sphere samples lying in `X`.
    pub sphere_samples: usize,
    pub schedule: Vec<ConeScheduleEntry>,
    pub verified: bool,
}

/// Checks `t^(1/M) xi in X <=> xi in X` for every grid sample and `t in {1/4, 4}`.
pub fn check_m_conic(x: &SetDescriptor, m: &[u32], grid: &GridSpec) -> Result<()> {
    for xi in grid.xi_points() {
        if xi.iter().all(|&c| c == 0.0) {
            continue;
        }
        let inside = x
            .contains(&xi)
            .ok_or_else(|| Error::BadParam("M-conic checks need an analytic set descriptor".into()))?;
        for t in [0.25, 4.0] {
            let scaled = m_scale(&xi, m, t);
            if x.contains(&scaled) != Some(inside) {
                return Err(Error::NotMConic(format!("membership changes between {xi:?} and {scaled:?}")));
            }
        }
    }
    Ok(())
}

/// Searches the schedule for `eps'` with
/// `X_[eps' <>_M] ⊆ U Gamma_M(eta; eps) ∩ {<xi>_M > c/eps}` and
/// `U Gamma_M(eta; eps') ∩ {<xi>_M > c/eps'} ⊆ X_[eps <>_M]`, unions over sampled `eta in X ∩ S_M`.
///
/// `c` is the empirical constant of the neighborhood lower bound over the same schedule.
pub fn check_cone_equivalence(
    x: &SetDescriptor,
    m: &[u32],
    eps: f64,
    grid: &GridSpec,
    samples: usize,
) -> Result<ConeEquivalenceReport> {
    if m.len() != grid.n {
        return Err(Error::BadParam(format!("M has {} entries on a grid of dimension {}", m.len(), grid.n)));
    }
    let w = Weight::quasi_homogeneous(m, 1.0)?;
    let base = x.build(grid)?;
    let sched = schedule(eps);
    if base.is_empty() {
        let schedule = sched
            .iter()
            .map(|&e| ConeScheduleEntry {
                eps_prime: e,
                forward_holds: true,
                reverse_holds: true,
                forward_lhs: 0,
                reverse_lhs: 0,
                forward_violations: 0,
                reverse_violations: 0,
                witness: None,
            })
            .collect();
        return Ok(ConeEquivalenceReport {
            eps,
            eps_prime: Some(sched[0]),
            c_hat: 0.0,
            sphere_samples: 0,
            schedule,
            verified: true,
        });
    }
    check_m_conic(x, m, grid)?;
    let etas: Vec<Vec<f64>> = m_sphere_samples(m, samples).into_iter().filter(|e| x.contains(e) == Some(true)).collect();
    let big = bracket_neighborhood(&base, &w, eps)?;
    let small: Vec<FrequencyMask> = sched.iter().map(|&e| bracket_neighborhood(&base, &w, e)).collect::<Result<_>>()?;
    let c = c_hat(std::iter::once((eps, &big)).chain(sched.iter().copied().zip(small.iter())), &w);
    let union = ConeUnion::new(m, etas, eps);
    let points = grid.xi_points();
    let dist: Vec<f64> = points.iter().map(|xi| union.distance(xi)).collect();
    let wv: Vec<f64> = points.iter().map(|xi| w.eval(xi)).collect();

    let mut entries = Vec::with_capacity(sched.len());
    for (&e, inner) in sched.iter().zip(&small) {
        let mut witness = None;
        let (mut f_lhs, mut f_bad) = (0, 0);
        for i in inner.indices() {
            f_lhs += 1;
            if !(dist[i] < eps && wv[i] > c / eps) {
                f_bad += 1;
                witness.get_or_insert_with(|| points[i].clone());
            }
        }
        let (mut r_lhs, mut r_bad) = (0, 0);
        for i in 0..points.len() {
            if dist[i] < e && wv[i] > c / e {
                r_lhs += 1;
                if !big.bits[i] {
                    r_bad += 1;
                    witness.get_or_insert_with(|| points[i].clone());
                }
            }
        }
        entries.push(ConeScheduleEntry {
            eps_prime: e,
            forward_holds: f_bad == 0,
            reverse_holds: r_bad == 0,
            forward_lhs: f_lhs,
            reverse_lhs: r_lhs,
            forward_violations: f_bad,
            reverse_violations: r_bad,
            witness,
        });
    }
    let eps_prime = entries.iter().find(|s| s.forward_holds && s.reverse_holds).map(|s| s.eps_prime);
    Ok(ConeEquivalenceReport {
        eps,
        eps_prime,
        c_hat: c,
        sphere_samples: union.generators().len(),
        schedule: entries,
        verified: eps_prime.is_some(),
    })
}
