//! Regularity bookkeeping formulas and the worked example on the parabola.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{idft, Field, GridSpec, Spectrum};
use crate::microlocal::{
    bracket_neighborhood, masked_fl_norm, mcl_elliptic, FrequencyMask, MclEllipticConfig, SetDescriptor, Verdict,
};
use crate::numerics::plateau;
use crate::pdo::{quantize, Expr, Symbol};
use crate::weights::Weight;

/// Distance to the nearest integer below which a quotient counts as integral.
pub const INTEGRALITY_TOL: f64 = 1e-9;

/// `floor(x)`, snapping values within `INTEGRALITY_TOL` of an integer onto it.
fn snapped_floor(x: f64) -> f64 {
    let r = x.round();
    if (x - r).abs() <= INTEGRALITY_TOL {
        r
    } else {
        x.floor()
    }
}

fn is_integral(x: f64) -> bool {
    (x - x.round()).abs() <= INTEGRALITY_TOL
}

/// Orders `t, t + eps, ..., t + N eps` with `N = ceil((s - t) / eps)` the fewest steps reaching `s`.
///
/// `r` is the order of the operator driving the iteration; it only has to be a positive number.
pub fn bootstrap_schedule(t: f64, s: f64, r: f64, eps: f64) -> Result<Vec<f64>> {
    if !(eps > 0.0) || !eps.is_finite() {
        return Err(Error::BadStep(eps));
    }
    if !(r > 0.0) || !t.is_finite() || !s.is_finite() {
        return Err(Error::BadParam(format!("need finite t, s and r > 0, got t={t}, s={s}, r={r}")));
    }
    if t > s {
        return Err(Error::BadParam(format!("start {t} exceeds target {s}")));
    }
    let steps = ((s - t) / eps).ceil() as usize;
    Ok((0..=steps).map(|k| t + k as f64 * eps).collect())
}

/// Exponents of the semilinear regularity theorem.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegularityLedger {
    /// Order of the linear part.
    pub r: f64,
    /// Order deficit of the nonlinear terms, `0 < eps_gain < r`.
    pub eps_gain: f64,
    /// `lambda^-tau` is `q`-integrable.
    pub tau: f64,
    pub t_tilde: f64,
    pub s: f64,
    pub q: f64,
    #[serde(default)]
    pub schedule: Vec<f64>,
}

impl RegularityLedger {
    pub fn new(r: f64, eps_gain: f64, tau: f64, t_tilde: f64, s: f64, q: f64) -> Self {
        Self { r, eps_gain, tau, t_tilde, s, q, schedule: Vec::new() }
    }

    fn check(&self) -> Result<()> {
        let Self { r, eps_gain: e, tau, t_tilde: t, s, .. } = *self;
        if !(0.0 < e && e < r) {
            return Err(Error::ConstraintViolated(format!("need 0 < eps < r, got eps={e}, r={r}")));
        }
        if !(tau + r - e <= t && t <= s) {
            return Err(Error::ConstraintViolated(format!(
                "need tau + r - eps <= t~ <= s, got {} <= {t} <= {s}",
                tau + r - e
            )));
        }
        Ok(())
    }

    /// Computes the reachable order and records the steps from `t~` to it.
    pub fn record(&mut self) -> Result<f64> {
        let t = semilinear_gain(self)?;
        self.schedule = bootstrap_schedule(self.t_tilde, t, self.r, self.eps_gain)?;
        Ok(t)
    }
}

/// `min{s, t~ + (E((t~ - r - tau) / eps) + 2) eps}` with `E` the integer part.
pub fn semilinear_gain(ledger: &RegularityLedger) -> Result<f64> {
    ledger.check()?;
    let RegularityLedger { r, eps_gain: e, tau, t_tilde: t, s, .. } = *ledger;
    let floor = snapped_floor((t - r - tau) / e);
    Ok(s.min(t + (floor + 2.0) * e))
}

/// `P(x, xi) = i x_1 xi_1 - xi_1 + xi_2^2`, of order 1 for `<xi>_M`, `M = (1, 2)`.
pub fn example_symbol() -> Symbol {
    let e = Expr::add(vec![
        Expr::mul(vec![Expr::i(), Expr::x(0), Expr::xi(0)]),
        Expr::mul(vec![Expr::c(-1.0), Expr::xi(0)]),
        Expr::pow(Expr::xi(1), 2.0),
    ]);
    let w = example_weight(1.0);
    Symbol::from_expr(2, &e).expect("closed form").with_class(1.0, 1.0, w)
}

/// `<xi>_M^s` with `M = (1, 2)`.
pub fn example_weight(s: f64) -> Weight {
    Weight::quasi_homogeneous(&[1, 2], s).expect("valid exponents")
}

/// `X_k = {xi_1 <= (1-k) xi_2^2 or xi_1 >= xi_2^2 / (1-k)}`.
pub fn example_xk(k: f64) -> Result<SetDescriptor> {
    if !(k > 0.0 && k < 1.0) {
        return Err(Error::BadK(k));
    }
    Ok(SetDescriptor::Xk { k })
}

/// Which bound of the final example applies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ThresholdCase {
    /// `2 t~ - 2 - 4/q` is not an integer.
    A,
    /// `2 t~ - 2 - 4/q` is an integer.
    B,
}

/// Case a: `min{s, t~ + 1 + E(2t~ - 2 - 4/q)/2}`; case b: `min{s, t~ + 1/2 + E(2t~ - 2 - 4/q)/2}`.
pub fn example_thresholds(t_tilde: f64, s: f64, q: f64, case: ThresholdCase) -> Result<f64> {
    if !(q >= 1.0) {
        return Err(Error::BadParam(format!("q must be at least 1, got {q}")));
    }
    let low = 2.0 / q + 0.5;
    if !(s > t_tilde && t_tilde > low) {
        return Err(Error::HypothesisViolated(format!("need s > t~ > 2/q + 1/2, got {s} > {t_tilde} > {low}")));
    }
    let x = 2.0 * t_tilde - 2.0 - 4.0 / q;
    let integral = is_integral(x);
    let base = match (case, integral) {
        (ThresholdCase::A, false) => 1.0,
        (ThresholdCase::B, true) => 0.5,
        _ => {
            return Err(Error::CaseMismatch(format!(
                "2t~ - 2 - 4/q = {x} is {}integral but case {case:?} was requested",
                if integral { "" } else { "not " }
            )))
        }
    };
    Ok(s.min(t_tilde + base + 0.5 * snapped_floor(x)))
}

/// The case that the integrality of `2 t~ - 2 - 4/q` selects.
pub fn threshold_case(t_tilde: f64, q: f64) -> ThresholdCase {
    if is_integral(2.0 * t_tilde - 2.0 - 4.0 / q) {
        ThresholdCase::B
    } else {
        ThresholdCase::A
    }
}

/// Spectrum of the manufactured field.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DemoField {
    /// `<xi>_M^-3 + ridge(xi) <xi>_M^-1`.
    Ridge,
    /// `exp(-|xi|^2 / 2)`, a Gaussian in space.
    Gaussian,
}

fn default_k() -> f64 {
    0.5
}
fn default_p() -> f64 {
    2.0
}
fn default_order() -> f64 {
    1.0
}
fn default_eps() -> f64 {
    0.01
}
fn default_width() -> f64 {
    0.1
}
fn default_radius() -> f64 {
    0.9
}
fn default_band() -> u32 {
    1
}
fn default_field() -> DemoField {
    DemoField::Ridge
}
fn default_probes() -> Vec<Vec<f64>> {
    vec![vec![0.0, 0.0], vec![1.0, 0.0]]
}

/// Scenario of the propagation demo.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DemoConfig {
    /// Coarse grid; the fine grid doubles the samples over the same box.
    pub grid: GridSpec,
    #[serde(default = "default_k")]
    pub k: f64,
    #[serde(default = "default_p")]
    pub p: f64,
    pub t_tilde: f64,
    pub s: f64,
    #[serde(default = "default_probes")]
    pub probe_points: Vec<Vec<f64>>,
    /// `u` is measured in `<xi>_M^order`, `f = P u` in `<xi>_M^(order - 1)`.
    #[serde(default = "default_order")]
    pub order: f64,
    /// Neighborhood size of the microlocal norms.
    #[serde(default = "default_eps")]
    pub eps: f64,
    /// Half-width of the ridge relative to `<xi>_M`.
    #[serde(default = "default_width")]
    pub ridge_width: f64,
    /// Support half-width of the localizing bump along `x_1`.
    #[serde(default = "default_radius")]
    pub cutoff_radius: f64,
    /// Power of the cosine profile of the bump along `x_2`.
    #[serde(default = "default_band")]
    pub cutoff_band: u32,
    #[serde(default = "default_field")]
    pub field: DemoField,
}

impl DemoConfig {
    pub fn new(grid: GridSpec, t_tilde: f64, s: f64) -> Self {
        Self {
            grid,
            k: default_k(),
            p: default_p(),
            t_tilde,
            s,
            probe_points: default_probes(),
            order: default_order(),
            eps: default_eps(),
            ridge_width: default_width(),
            cutoff_radius: default_radius(),
            cutoff_band: default_band(),
            field: default_field(),
        }
    }
}

/// Smoothed indicator of `|xi_1 - xi_2^2| < width <xi>_M`: 1 on half the width, 0 beyond it.
pub fn ridge_profile(xi: &[f64], width: f64) -> f64 {
    let l = (1.0 + xi[0] * xi[0] + xi[1].powi(4)).sqrt();
    plateau((xi[0] - xi[1] * xi[1]) / (width * l), 0.5, 1.0)
}

/// Window equal to 1 up to `EDGE_TAPER.0 * xi_max` on every axis and 0 from `EDGE_TAPER.1 * xi_max`.
///
/// Keeps the periodic convolution with the localizing bump from wrapping the spectrum across the grid.
pub const EDGE_TAPER: (f64, f64) = (0.6, 0.9);

fn edge_window(grid: &GridSpec, xi: &[f64]) -> f64 {
    let m = grid.xi_max();
    xi.iter().map(|c| plateau(c.abs() / m, EDGE_TAPER.0, EDGE_TAPER.1)).product()
}

fn tapered(grid: &GridSpec, a: impl Fn(&[f64]) -> f64 + Sync) -> Field {
    idft(&Spectrum::from_fn(*grid, |xi| Complex64::new(a(xi) * edge_window(grid, xi), 0.0)))
}

/// The two additive pieces of the ridge spectrum, smooth decay first.
pub fn ridge_pieces(grid: &GridSpec, width: f64) -> (Field, Field) {
    let lm = |xi: &[f64]| (1.0 + xi[0] * xi[0] + xi[1].powi(4)).sqrt();
    let smooth = tapered(grid, |xi| lm(xi).powi(-3));
    let ridge = tapered(grid, |xi| ridge_profile(xi, width) / lm(xi));
    (smooth, ridge)
}

/// The manufactured field of the scenario on a grid.
pub fn demo_field(cfg: &DemoConfig, grid: &GridSpec) -> Result<Field> {
    match cfg.field {
        DemoField::Ridge => {
            let (a, b) = ridge_pieces(grid, cfg.ridge_width);
            a.add(&b)
        }
        DemoField::Gaussian => Ok(tapered(grid, |xi| (-xi.iter().map(|c| c * c).sum::<f64>() / 2.0).exp())),
    }
}

/// Bump around `x0`: a Gaussian of width `radius/6` in `x_1`, cut off smoothly between `3 radius/4` and
/// `radius`, times `cos^(2 band)(pi (x_2 - x0_2) / (2L))` in `x_2`.
///
/// The `x_2` factor is smooth on the periodic box and shifts frequencies by at most `band pi / L` along
/// `xi_2`, so it cannot move the spectrum across the thin parabolic regions.
pub fn probe_cutoff(grid: &GridSpec, x0: &[f64], radius: f64, band: u32) -> Field {
    let half = std::f64::consts::FRAC_PI_2 / grid.extent;
    Field::from_real(*grid, |x| {
        let t = (x[0] - x0[0]).abs() / radius;
        (-18.0 * t * t).exp() * plateau(t, 0.75, 1.0) * (half * (x[1] - x0[1])).cos().powi(2 * band as i32)
    })
}

/// Norms of `u` and `f` over one region at one probe, on both grids.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RegionNorms {
    pub region: String,
    pub u_coarse: f64,
    pub u_fine: f64,
    pub u_growth: f64,
    pub u_verdict: Verdict,
    pub f_coarse: f64,
    pub f_fine: f64,
    pub f_growth: f64,
    pub f_verdict: Verdict,
    /// `u_fine / f_fine`.
    pub control: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProbeReport {
    pub point: Vec<f64>,
    /// `P` is microlocally elliptic on the parabola cone at this point.
    pub elliptic_on_cone: bool,
    pub cone_c0: f64,
    pub x_k: RegionNorms,
    pub cone: RegionNorms,
    /// `u` in the cone over `u` in `X_k`, fine grid.
    pub u_separation: f64,
    /// Control of `u` by `f` in the cone over the same in `X_k`, fine grid.
    pub control_separation: f64,
}

/// Outcome of the inclusion pattern.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PatternReport {
    /// At characteristic probes both `u_separation` and `control_separation` reach `SEPARATION`.
    pub characteristic_separation: bool,
    /// At elliptic probes `control_separation` stays below `SEPARATION`.
    pub elliptic_control: bool,
    /// Every norm is finite under refinement; only asserted for the Gaussian field.
    pub all_finite: bool,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DemoReport {
    pub config: DemoConfig,
    pub fine_points: usize,
    pub probes: Vec<ProbeReport>,
    /// Bound of the final example for `(t~, s, q)`, when its hypotheses hold.
    pub threshold: Option<f64>,
    pub pattern: PatternReport,
}

/// Region norms below this fraction of the whole-space norm on the fine grid are classified as finite.
pub const NEGLIGIBLE: f64 = 1e-3;

/// Separation factor demanded between the characteristic cone and `X_k`.
pub const SEPARATION: f64 = 10.0;

fn ratio(a: f64, b: f64) -> f64 {
    if b > 0.0 {
        a / b
    } else if a == 0.0 {
        1.0
    } else {
        f64::INFINITY
    }
}

struct Level {
    u: Field,
    f: Field,
    /// `X_k`, the cone, then the whole frequency grid.
    masks: [FrequencyMask; 3],
}

fn level(cfg: &DemoConfig, p: &Symbol, grid: &GridSpec, lambda: &Weight) -> Result<Level> {
    let u = demo_field(cfg, grid)?;
    let f = quantize(p, &u)?;
    let xk = bracket_neighborhood(&example_xk(cfg.k)?.build(grid)?, lambda, cfg.eps)?;
    let cone = bracket_neighborhood(&SetDescriptor::ParabolaCone { k: cfg.k }.build(grid)?, lambda, cfg.eps)?;
    Ok(Level { u, f, masks: [xk, cone, SetDescriptor::All.build(grid)?] })
}

/// Manufactures `u`, computes `f = P u`, and measures both microlocally at every probe on two grids.
pub fn run_propagation_demo(cfg: &DemoConfig) -> Result<DemoReport> {
    if cfg.grid.n != 2 {
        return Err(Error::RejectDimension(cfg.grid.n));
    }
    if !(cfg.cutoff_radius > 0.0) {
        return Err(Error::BadParam(format!("cutoff radius must be positive, got {}", cfg.cutoff_radius)));
    }
    if let Some(bad) = cfg.probe_points.iter().find(|x| x.len() != 2) {
        return Err(Error::BadParam(format!("probe point {bad:?} is not two-dimensional")));
    }
    let p = example_symbol();
    let lambda = example_weight(1.0);
    let (wu, wf) = (example_weight(cfg.order), example_weight(cfg.order - 1.0));
    let fine_grid = cfg.grid.refined();
    let levels = [level(cfg, &p, &cfg.grid, &lambda)?, level(cfg, &p, &fine_grid, &lambda)?];
    let probes = cfg
        .probe_points
        .iter()
        .map(|x0| {
            // norms[level][region] = (u, f)
            let norms: Vec<Vec<(f64, f64)>> = levels
                .par_iter()
                .map(|lv| {
                    let phi = probe_cutoff(&lv.u.grid, x0, cfg.cutoff_radius, cfg.cutoff_band);
                    let (pu, pf) = (phi.mul(&lv.u)?, phi.mul(&lv.f)?);
                    lv.masks
                        .iter()
                        .map(|m| Ok((masked_fl_norm(&pu, m, &wu, cfg.p)?, masked_fl_norm(&pf, m, &wf, cfg.p)?)))
                        .collect::<Result<Vec<_>>>()
                })
                .collect::<Result<_>>()?;
            let region = |r: usize, name: &str| {
                let ((uc, fc), (uf, ff)) = (norms[0][r], norms[1][r]);
                let (u_floor, f_floor) = (NEGLIGIBLE * norms[1][2].0, NEGLIGIBLE * norms[1][2].1);
                let (ug, uv) = Verdict::classify(uc.max(u_floor), uf.max(u_floor));
                let (fg, fv) = Verdict::classify(fc.max(f_floor), ff.max(f_floor));
                RegionNorms {
                    region: name.into(),
                    u_coarse: uc,
                    u_fine: uf,
                    u_growth: ug,
                    u_verdict: uv,
                    f_coarse: fc,
                    f_fine: ff,
                    f_growth: fg,
                    f_verdict: fv,
                    control: ratio(uf, ff),
                }
            };
            let (x_k, cone) = (region(0, "x_k"), region(1, "cone"));
            let ell = mcl_elliptic(
                &p,
                x0,
                &SetDescriptor::ParabolaCone { k: cfg.k },
                1.0,
                &lambda,
                &cfg.grid,
                &MclEllipticConfig::default(),
            )?;
            Ok(ProbeReport {
                point: x0.clone(),
                elliptic_on_cone: ell.passed,
                cone_c0: ell.c0,
                u_separation: ratio(cone.u_fine, x_k.u_fine),
                control_separation: ratio(cone.control, x_k.control),
                x_k,
                cone,
            })
        })
        .collect::<Result<Vec<ProbeReport>>>()?;
    let chars: Vec<&ProbeReport> = probes.iter().filter(|p| !p.elliptic_on_cone).collect();
    let ells: Vec<&ProbeReport> = probes.iter().filter(|p| p.elliptic_on_cone).collect();
    let all_finite = probes.iter().all(|p| {
        [&p.x_k, &p.cone].iter().all(|r| r.u_verdict == Verdict::Finite && r.f_verdict == Verdict::Finite)
    });
    let pattern = match cfg.field {
        DemoField::Ridge => {
            let characteristic_separation = !chars.is_empty()
                && chars.iter().all(|p| p.u_separation >= SEPARATION && p.control_separation >= SEPARATION);
            let elliptic_control = ells.iter().all(|p| p.control_separation < SEPARATION);
            PatternReport {
                characteristic_separation,
                elliptic_control,
                all_finite,
                passed: characteristic_separation && elliptic_control,
            }
        }
        DemoField::Gaussian => {
            let characteristic_separation = probes.iter().any(|p| p.u_separation >= SEPARATION);
            PatternReport {
                characteristic_separation,
                elliptic_control: true,
                all_finite,
                passed: all_finite && !characteristic_separation,
            }
        }
    };
    let q = if cfg.p == 1.0 { f64::INFINITY } else { cfg.p / (cfg.p - 1.0) };
    let threshold = example_thresholds(cfg.t_tilde, cfg.s, q, threshold_case(cfg.t_tilde, q)).ok();
    Ok(DemoReport { config: cfg.clone(), fine_points: fine_grid.points, probes, threshold, pattern })
}
