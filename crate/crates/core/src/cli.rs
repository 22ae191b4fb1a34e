//! Command-line dispatch: JSON descriptors in, JSON reports or CSV tables out.
//!
//! Exit status 0 means every check passed, 1 that a check failed (the report is still written),
//! 2 a configuration error (nothing is written).

use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};

use crate::error::{Error, Result};
use crate::grid::{dft, idft, kernel_apply, write_csv, Field, GridSpec, Spectrum};
use crate::microlocal::{
    check_cone_equivalence, check_m_conic, cutoff_membership, cutoff_symbol, filter_membership, find_inclusion_eps,
    mcl_elliptic, symbol_filter_membership, verify_mcl_continuity, FilterReport, InclusionMode, MclEllipticConfig,
    MclWeights, SetDescriptor,
};
use crate::newton::{CompletePolyhedron, PolyhedronDescriptor};
use crate::pdo::{
    approx_parametrix, check_elliptic, compose_entire, composition_error, necessity_probe, product_estimate,
    verify_continuity, EntireSeries, Expr, ParametrixConfig, SpaceBox, Symbol, SLACK,
};
use crate::propagation::{
    bootstrap_schedule, example_thresholds, run_propagation_demo, semilinear_gain, threshold_case, DemoConfig,
    RegularityLedger, ThresholdCase,
};
use crate::weights::{
    check_condition, check_derivative_decay, estimate_cq, Condition, CqValue, DerivativeGrid, SamplingPlan, Weight,
    WeightDescriptor,
};
use crate::VERSION;

/// Environment variable capping the worker threads.
pub const THREADS_ENV: &str = "FLMICRO_THREADS";

pub const DEFAULT_EXTENT: f64 = 16.0;
pub const DEFAULT_POINTS: usize = 256;

/// Every library check reachable from the command line, as `(command, check)`.
pub const CHECKS: &[(&str, &str)] = &[
    ("polyhedron", "polyhedron"),
    ("weight-check", "conditions"),
    ("estimate", "cq"),
    ("estimate", "product"),
    ("estimate", "continuity"),
    ("estimate", "kernel"),
    ("estimate", "necessity"),
    ("estimate", "elliptic"),
    ("estimate", "parametrix"),
    ("estimate", "series"),
    ("estimate", "derivative_decay"),
    ("quantize", "quantize"),
    ("microlocal", "mask"),
    ("microlocal", "inclusion"),
    ("microlocal", "cone_equivalence"),
    ("microlocal", "m_conic"),
    ("microlocal", "cutoff"),
    ("microlocal", "filter"),
    ("microlocal", "cutoff_filter"),
    ("microlocal", "elliptic"),
    ("microlocal", "symbol_filter"),
    ("microlocal", "continuity"),
    ("demo", "propagation"),
    ("demo", "bootstrap"),
    ("demo", "semilinear"),
    ("demo", "thresholds"),
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    Json,
    Csv,
}

/// Parsed command line.
#[derive(Debug, Clone, Parser, Serialize)]
#[command(name = "flmicro", version, about = "Checks for weighted Fourier-Lebesgue spaces and microlocal geometry")]
pub struct RunConfig {
    #[command(subcommand)]
    pub command: Command,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct Common {
    /// Descriptor files; each one produces one result.
    #[arg(long = "in", global = true)]
    pub inputs: Vec<PathBuf>,
    /// Report path; standard output when absent.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Json, global = true)]
    pub format: Format,
    /// Seed of every randomized probe.
    #[arg(long, default_value_t = 0, global = true)]
    pub seed: u64,
    /// Overrides the samples per axis of descriptor grids.
    #[arg(long, global = true)]
    pub grid_points: Option<usize>,
    /// Overrides the half-width of descriptor grids.
    #[arg(long, global = true)]
    pub grid_extent: Option<f64>,
    /// Refinement levels of sampling plans beyond the coarsest.
    #[arg(long, default_value_t = 1, global = true)]
    pub refine: u32,
}

#[derive(Debug, Clone, Subcommand, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    /// Invariants of a complete Newton polyhedron.
    Polyhedron,
    /// Sampled growth conditions of a weight.
    WeightCheck(WeightArgs),
    /// Weight constants and operator estimates.
    Estimate,
    /// Applies a symbol to a field.
    Quantize,
    /// Frequency masks, inclusions, cutoffs and microlocal estimates.
    Microlocal,
    /// Regularity formulas and the propagation demo.
    Demo,
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Polyhedron => "polyhedron",
            Command::WeightCheck(_) => "weight-check",
            Command::Estimate => "estimate",
            Command::Quantize => "quantize",
            Command::Microlocal => "microlocal",
            Command::Demo => "demo",
        }
    }
}

/// A weight given by flags instead of a descriptor file.
#[derive(Debug, Clone, Default, Args, Serialize)]
pub struct WeightArgs {
    /// Weight family, e.g. `homogeneous` or `quasi_homogeneous`.
    #[arg(long)]
    pub family: Option<String>,
    /// Order, or comma-separated exponents `M` of a quasi-homogeneous weight.
    #[arg(long)]
    pub m: Option<String>,
    /// Exponent of a quasi-homogeneous or log-type weight.
    #[arg(long)]
    pub s: Option<f64>,
    /// Logarithm power of a log-type weight.
    #[arg(long)]
    pub r: Option<f64>,
    /// Value of a constant weight.
    #[arg(long)]
    pub c: Option<f64>,
    /// Conditions to check; the family's claimed conditions when absent.
    #[arg(long, value_delimiter = ',')]
    pub cond: Vec<String>,
    /// Dimension of the sampled frequencies.
    #[arg(long)]
    pub dim: Option<usize>,
}

/// Result of one descriptor.
#[derive(Debug, Clone)]
pub struct Outcome {
    pub passed: bool,
    pub report: Value,
    pub csv: Option<String>,
}

impl Outcome {
    fn new<T: Serialize>(passed: bool, report: &T) -> Result<Self> {
        let report = serde_json::to_value(report)?;
        let csv = Some(summary_csv(&report));
        Ok(Self { passed, report, csv })
    }

    fn with_csv(mut self, csv: String) -> Self {
        self.csv = Some(csv);
        self
    }
}

/// Errors caused by the input rather than by the mathematics being checked.
pub fn is_config_error(e: &Error) -> bool {
    matches!(
        e,
        Error::Io(_)
            | Error::Json(_)
            | Error::Format(_)
            | Error::BadParam(_)
            | Error::RejectDimension(_)
            | Error::GridMismatch(_)
            | Error::PlanTooSmall
            | Error::BadK(_)
            | Error::BadStep(_)
            | Error::ConstraintViolated(_)
            | Error::HypothesisViolated(_)
            | Error::CaseMismatch(_)
            | Error::PreconditionChainBroken(_)
            | Error::MissingZeroConstantTerm
    )
}

/// Turns a library error into a failed outcome unless it is a configuration error.
fn checked(r: Result<Outcome>) -> Result<Outcome> {
    match r {
        Err(e) if !is_config_error(&e) => {
            Ok(Outcome { passed: false, report: json!({ "error": e.to_string() }), csv: None })
        }
        other => other,
    }
}

/// CSV with the scalar top-level entries of a report as one row.
fn summary_csv(report: &Value) -> String {
    let Value::Object(map) = report else { return String::new() };
    let cells: Vec<(&String, String)> = map
        .iter()
        .filter_map(|(k, v)| match v {
            Value::Number(n) => Some((k, n.to_string())),
            Value::Bool(b) => Some((k, b.to_string())),
            Value::String(s) => Some((k, s.clone())),
            Value::Null => Some((k, String::new())),
            _ => None,
        })
        .collect();
    let header: Vec<&str> = cells.iter().map(|(k, _)| k.as_str()).collect();
    let row: Vec<&str> = cells.iter().map(|(_, v)| v.as_str()).collect();
    format!("{}\n{}\n", header.join(","), row.join(","))
}

fn two() -> f64 {
    2.0
}

fn one() -> f64 {
    1.0
}

/// Grid of a descriptor; `--grid-extent` and `--grid-points` take precedence.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GridInput {
    pub n: usize,
    #[serde(default)]
    pub extent: Option<f64>,
    #[serde(default)]
    pub points: Option<usize>,
}

/// A field sampled on whatever grid a check asks for.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FieldSpec {
    /// `expr(x)`.
    Expr { expr: Expr },
    /// Inverse DFT of `expr(xi)`.
    Spectrum { expr: Expr },
    /// Random Fourier coefficients on `|xi| <= band`, fixed per frequency by the seed and `stream`.
    BandLimited {
        band: f64,
        #[serde(default)]
        stream: u64,
    },
}

type FieldFn = Box<dyn Fn(&GridSpec) -> Field + Sync>;

fn frequency_seed(seed: u64, stream: u64, grid: &GridSpec, xi: &[f64]) -> u64 {
    xi.iter().fold(seed ^ stream.rotate_left(32), |h, c| {
        let k = (c / grid.dxi()).round() as i64;
        h.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ k as u64
    })
}

impl FieldSpec {
    /// Validates the descriptor once and returns a sampler for any grid of dimension `n`.
    pub fn sampler(&self, n: usize, seed: u64) -> Result<FieldFn> {
        let zeros = vec![0.0; n];
        Ok(match self {
            FieldSpec::Expr { expr } => {
                let s = Symbol::from_expr(n, expr)?;
                Box::new(move |g| Field::from_fn(*g, |x| s.eval(x, &zeros)))
            }
            FieldSpec::Spectrum { expr } => {
                let s = Symbol::from_expr(n, expr)?;
                Box::new(move |g| idft(&Spectrum::from_fn(*g, |xi| s.eval(&zeros, xi))))
            }
            FieldSpec::BandLimited { band, stream } => {
                let (band, stream) = (*band, *stream);
                if !(band > 0.0) {
                    return Err(Error::BadParam(format!("band must be positive, got {band}")));
                }
                Box::new(move |g| {
                    idft(&Spectrum::from_fn(*g, |xi| {
                        if crate::numerics::norm(xi) > band {
                            return Complex64::new(0.0, 0.0);
                        }
                        let mut r = ChaCha8Rng::seed_from_u64(frequency_seed(seed, stream, g, xi));
                        Complex64::new(r.gen_range(-1.0..1.0), r.gen_range(-1.0..1.0))
                    }))
                })
            }
        })
    }
}

/// Closed-form symbol with optional class metadata.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SymbolSpec {
    pub expr: Expr,
    #[serde(default)]
    pub class: Option<ClassSpec>,
    /// Forces direct summation even for multipliers and separable symbols.
    #[serde(default)]
    pub direct: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ClassSpec {
    pub order: f64,
    #[serde(default = "one")]
    pub rho: f64,
    pub reference: WeightDescriptor,
}

impl SymbolSpec {
    pub fn build(&self, n: usize) -> Result<Symbol> {
        let mut s = Symbol::from_expr(n, &self.expr)?;
        if let Some(c) = &self.class {
            s = s.with_class(c.order, c.rho, Weight::from_descriptor(&c.reference)?);
        }
        Ok(if self.direct { s.as_general() } else { s })
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SeriesSpec {
    /// Constant coefficients `[re, im]`, lowest degree first.
    Polynomial { coefs: Vec<[f64; 2]> },
    ExpMinusOne,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "check", rename_all = "snake_case")]
pub enum EstimateInput {
    Cq { omega: WeightDescriptor, omega1: WeightDescriptor, omega2: WeightDescriptor, q: f64, dim: usize },
    Product {
        grid: GridInput,
        omega: WeightDescriptor,
        omega1: WeightDescriptor,
        omega2: WeightDescriptor,
        #[serde(default = "two")]
        p: f64,
        f1: FieldSpec,
        f2: FieldSpec,
    },
    Continuity {
        grid: GridInput,
        symbol: SymbolSpec,
        omega: WeightDescriptor,
        omega1: WeightDescriptor,
        omega2: WeightDescriptor,
        gamma: WeightDescriptor,
        #[serde(default = "two")]
        p: f64,
        u: FieldSpec,
        phi: FieldSpec,
    },
    /// `F(xi, eta)` and `f(xi, eta)` read `x` as `xi` and `xi` as `eta`.
    Kernel {
        grid: GridInput,
        big_f: Expr,
        f: Expr,
        g: FieldSpec,
        #[serde(default = "two")]
        p: f64,
    },
    Necessity {
        grid: GridInput,
        omega: WeightDescriptor,
        omega1: WeightDescriptor,
        omega2: WeightDescriptor,
        #[serde(default = "two")]
        p: f64,
        sigma: f64,
        pairs: Vec<(Vec<f64>, Vec<f64>)>,
    },
    Elliptic {
        grid: GridInput,
        symbol: SymbolSpec,
        lambda: WeightDescriptor,
        r: f64,
        k: SpaceBox,
        big_r: f64,
        threshold: f64,
    },
    Parametrix {
        grid: GridInput,
        symbol: SymbolSpec,
        lambda: WeightDescriptor,
        r: f64,
        config: ParametrixConfig,
        u: FieldSpec,
        phi: FieldSpec,
        /// Largest accepted relative composition error.
        tol: f64,
    },
    Series {
        grid: GridInput,
        u: FieldSpec,
        series: SeriesSpec,
        w: WeightDescriptor,
        #[serde(default = "two")]
        p: f64,
    },
    DerivativeDecay {
        weight: WeightDescriptor,
        s: f64,
        alpha: Vec<u32>,
        #[serde(default)]
        step_fraction: Option<f64>,
    },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "check", rename_all = "snake_case")]
pub enum MicrolocalInput {
    Mask {
        grid: GridInput,
        set: SetDescriptor,
    },
    Inclusion {
        grid: GridInput,
        set: SetDescriptor,
        weight: WeightDescriptor,
        eps: f64,
        #[serde(flatten)]
        mode: InclusionMode,
    },
    ConeEquivalence {
        grid: GridInput,
        set: SetDescriptor,
        #[serde(rename = "M")]
        m: Vec<u32>,
        eps: f64,
        samples: usize,
    },
    MConic {
        grid: GridInput,
        set: SetDescriptor,
        #[serde(rename = "M")]
        m: Vec<u32>,
    },
    Cutoff {
        grid: GridInput,
        set: SetDescriptor,
        eps: f64,
        lambda: WeightDescriptor,
    },
    Filter {
        grid: GridInput,
        u: FieldSpec,
        phi: FieldSpec,
        set: SetDescriptor,
        eps: f64,
        weight: WeightDescriptor,
        #[serde(default = "two")]
        p: f64,
        /// Expected membership; without it the check passes whenever a verdict is reached.
        #[serde(default)]
        expect: Option<bool>,
    },
    CutoffFilter {
        grid: GridInput,
        u: FieldSpec,
        phi: FieldSpec,
        set: SetDescriptor,
        eps: f64,
        lambda: WeightDescriptor,
        weight: WeightDescriptor,
        #[serde(default = "two")]
        p: f64,
        #[serde(default)]
        expect: Option<bool>,
    },
    Elliptic {
        grid: GridInput,
        symbol: SymbolSpec,
        x0: Vec<f64>,
        set: SetDescriptor,
        r: f64,
        lambda: WeightDescriptor,
        #[serde(default)]
        config: MclEllipticConfig,
    },
    SymbolFilter {
        grid: GridInput,
        symbol: SymbolSpec,
        x0: Vec<f64>,
        set: SetDescriptor,
        r: f64,
        lambda: WeightDescriptor,
        #[serde(default)]
        config: MclEllipticConfig,
    },
    Continuity {
        grid: GridInput,
        symbol: SymbolSpec,
        u: FieldSpec,
        phi: FieldSpec,
        set: SetDescriptor,
        eps: f64,
        lambda: WeightDescriptor,
        big_lambda: WeightDescriptor,
        gamma: WeightDescriptor,
        sigma: WeightDescriptor,
        #[serde(default = "two")]
        p: f64,
    },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "check", rename_all = "snake_case")]
pub enum FormulaInput {
    Bootstrap {
        t: f64,
        s: f64,
        r: f64,
        eps: f64,
    },
    Semilinear {
        r: f64,
        eps_gain: f64,
        tau: f64,
        t_tilde: f64,
        s: f64,
        q: f64,
    },
    Thresholds {
        t_tilde: f64,
        s: f64,
        q: f64,
        #[serde(default)]
        case: Option<ThresholdCase>,
    },
}

/// Weight-check descriptor `{"weight": .., "conditions": [..], "dim": n}`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WeightCheckInput {
    pub weight: WeightDescriptor,
    #[serde(default)]
    pub conditions: Vec<Condition>,
    #[serde(default)]
    pub dim: Option<usize>,
}

fn weight(d: &WeightDescriptor) -> Result<Weight> {
    Weight::from_descriptor(d)
}

fn parse<T: for<'de> Deserialize<'de>>(v: &Value) -> Result<T> {
    Ok(serde_json::from_value(v.clone())?)
}

fn ratio_ok(ratio: f64) -> bool {
    ratio.is_finite() && ratio <= SLACK
}

impl Common {
    pub fn grid(&self, g: &GridInput) -> Result<GridSpec> {
        GridSpec::new(
            g.n,
            self.grid_extent.or(g.extent).unwrap_or(DEFAULT_EXTENT),
            self.grid_points.or(g.points).unwrap_or(DEFAULT_POINTS),
        )
    }

    /// The standard plan (the light one above one dimension) with `refine` levels beyond the first.
    pub fn plan(&self, dim: usize) -> Result<SamplingPlan> {
        let mut plan = if dim == 1 { SamplingPlan::standard(dim, self.seed) } else { SamplingPlan::light(dim, self.seed) };
        if self.refine == 0 {
            return Err(Error::PlanTooSmall);
        }
        plan.levels.truncate(self.refine as usize + 1);
        while plan.levels.len() < self.refine as usize + 1 {
            let mut next = *plan.levels.last().expect("standard plans have levels");
            next.max_log2_radius += 4;
            next.shells_per_octave *= 2;
            next.directions *= 2;
            next.random_pairs *= 2;
            next.angular_nodes *= 2;
            next.panels_per_octave *= 2;
            plan.levels.push(next);
        }
        Ok(plan)
    }

    fn sampler(&self, f: &FieldSpec, n: usize) -> Result<FieldFn> {
        f.sampler(n, self.seed)
    }
}

fn polyhedron(v: &Value) -> Result<Outcome> {
    let d: PolyhedronDescriptor = parse(v)?;
    checked((|| {
        let p = CompletePolyhedron::from_descriptor(&d)?;
        let report = p.report();
        let n = p.dim();
        let mut csv = (1..=n).map(|a| format!("v{a}")).collect::<Vec<_>>().join(",") + "\n";
        for v in p.vertices() {
            csv += &(v.iter().map(|c| c.to_string()).collect::<Vec<_>>().join(",") + "\n");
        }
        Ok(Outcome::new(true, &report)?.with_csv(csv))
    })())
}

fn weight_check(v: Option<&Value>, args: &WeightArgs, common: &Common) -> Result<Outcome> {
    let input = match v {
        Some(v) => parse::<WeightCheckInput>(v)?,
        None => weight_from_flags(args)?,
    };
    let w = weight(&input.weight)?;
    let dim = input.dim.or(args.dim).or(w.dim()).unwrap_or(1);
    w.check_dim(dim)?;
    let conditions = if input.conditions.is_empty() { w.claimed_conditions(dim) } else { input.conditions.clone() };
    let plan = common.plan(dim)?;
    let reports = conditions.iter().map(|&c| check_condition(&w, c, &plan)).collect::<Result<Vec<_>>>()?;
    let passed = reports.iter().all(|r| r.passed);
    let mut csv = String::from("condition,passed,empirical_constant,refinement_ratio\n");
    for r in &reports {
        csv += &format!("{},{},{},{}\n", r.condition, r.passed, r.empirical_constant, r.refinement_ratio);
    }
    let report = json!({ "weight": input.weight, "dim": dim, "meta": w.meta(), "conditions": reports });
    Ok(Outcome::new(passed, &report)?.with_csv(csv))
}

fn weight_from_flags(a: &WeightArgs) -> Result<WeightCheckInput> {
    let family = a.family.as_deref().ok_or_else(|| Error::BadParam("weight-check needs --in or --family".into()))?;
    let m = a.m.as_deref();
    let scalar = |name: &str, v: Option<&str>| -> Result<f64> {
        v.ok_or_else(|| Error::BadParam(format!("--family {family} needs --{name}")))?
            .trim()
            .parse::<f64>()
            .map_err(|_| Error::BadParam(format!("--{name} must be a number")))
    };
    let mut obj = Map::new();
    obj.insert("family".into(), json!(family));
    match family {
        "constant" => {
            obj.insert("c".into(), json!(a.c.unwrap_or(1.0)));
        }
        "homogeneous" => {
            obj.insert("m".into(), json!(scalar("m", m)?));
        }
        "quasi_homogeneous" => {
            let exps = m
                .ok_or_else(|| Error::BadParam("--family quasi_homogeneous needs --m".into()))?
                .split(',')
                .map(|t| t.trim().parse::<u32>().map_err(|_| Error::BadParam(format!("bad exponent {t:?} in --m"))))
                .collect::<Result<Vec<_>>>()?;
            obj.insert("M".into(), json!(exps));
            obj.insert("s".into(), json!(a.s.unwrap_or(1.0)));
        }
        "log_type" => {
            let r = a.r.ok_or_else(|| Error::BadParam("--family log_type needs --r".into()))?;
            obj.insert("r".into(), json!(r));
            obj.insert("s".into(), json!(a.s.unwrap_or(1.0)));
        }
        other => return Err(Error::BadParam(format!("family {other:?} is only available through --in"))),
    }
    let conditions = a.cond.iter().map(|c| c.parse()).collect::<Result<Vec<Condition>>>()?;
    Ok(WeightCheckInput { weight: parse(&Value::Object(obj))?, conditions, dim: a.dim })
}

fn estimate(v: &Value, c: &Common) -> Result<Outcome> {
    let input: EstimateInput = parse(v)?;
    checked((|| match &input {
        EstimateInput::Cq { omega, omega1, omega2, q, dim } => {
            let r = estimate_cq(&weight(omega)?, &weight(omega1)?, &weight(omega2)?, *q, &c.plan(*dim)?)?;
            Outcome::new(matches!(r.value, CqValue::Finite(_)), &r)
        }
        EstimateInput::Product { grid, omega, omega1, omega2, p, f1, f2 } => {
            let g = c.grid(grid)?;
            let (f1, f2) = (c.sampler(f1, g.n)?(&g), c.sampler(f2, g.n)?(&g));
            let r = product_estimate(&f1, &f2, &weight(omega)?, &weight(omega1)?, &weight(omega2)?, *p, &c.plan(g.n)?)?;
            Outcome::new(r.passed, &r)
        }
        EstimateInput::Continuity { grid, symbol, omega, omega1, omega2, gamma, p, u, phi } => {
            let g = c.grid(grid)?;
            let (u, phi) = (c.sampler(u, g.n)?(&g), c.sampler(phi, g.n)?(&g));
            let r = verify_continuity(
                &symbol.build(g.n)?,
                &weight(omega)?,
                &weight(omega1)?,
                &weight(omega2)?,
                &weight(gamma)?,
                *p,
                &u,
                &phi,
                &c.plan(g.n)?,
            )?;
            Outcome::new(r.passed, &r)
        }
        EstimateInput::Kernel { grid, big_f, f, g: gf, p } => {
            let g = c.grid(grid)?;
            let (bf, sf) = (Symbol::from_expr(g.n, big_f)?, Symbol::from_expr(g.n, f)?);
            let spec = dft(&c.sampler(gf, g.n)?(&g));
            let r = kernel_apply(|a, b| bf.eval(a, b), |a, b| sf.eval(a, b), &spec, *p)?;
            Outcome::new(ratio_ok(r.ratio), &json!({ "report": r, "passed": ratio_ok(r.ratio), "slack": SLACK }))
        }
        EstimateInput::Necessity { grid, omega, omega1, omega2, p, sigma, pairs } => {
            let g = c.grid(grid)?;
            let r = necessity_probe(&g, &weight(omega)?, &weight(omega1)?, &weight(omega2)?, *p, *sigma, pairs)?;
            Outcome::new(r.passed, &r)
        }
        EstimateInput::Elliptic { grid, symbol, lambda, r, k, big_r, threshold } => {
            let g = c.grid(grid)?;
            let rep = check_elliptic(&symbol.build(g.n)?, &weight(lambda)?, *r, k, *big_r, &g, *threshold)?;
            Outcome::new(rep.passed, &rep)
        }
        EstimateInput::Parametrix { grid, symbol, lambda, r, config, u, phi, tol } => {
            let g = c.grid(grid)?;
            let a = symbol.build(g.n)?;
            let b = approx_parametrix(&a, &weight(lambda)?, *r, config, &g)?;
            let (u, phi) = (c.sampler(u, g.n)?(&g), c.sampler(phi, g.n)?(&g));
            let err = composition_error(&a, &b, &u, &phi)?;
            let passed = err <= *tol;
            Outcome::new(passed, &json!({ "composition_error": err, "tol": tol, "passed": passed }))
        }
        EstimateInput::Series { grid, u, series, w, p } => {
            let g = c.grid(grid)?;
            let s = match series {
                SeriesSpec::Polynomial { coefs } => {
                    EntireSeries::polynomial(coefs.iter().map(|[re, im]| Complex64::new(*re, *im)).collect())
                }
                SeriesSpec::ExpMinusOne => EntireSeries::exp_minus_one(),
            };
            let u = c.sampler(u, g.n)?(&g);
            let (_, r) = compose_entire(&u, &s, &weight(w)?, *p, &c.plan(g.n)?)?;
            Outcome::new(r.passed, &r)
        }
        EstimateInput::DerivativeDecay { weight: wd, s, alpha, step_fraction } => {
            let w = weight(wd)?;
            let dim = alpha.len();
            let mut dg = DerivativeGrid::standard(dim, c.seed);
            dg.plan = c.plan(dim)?;
            if let Some(f) = step_fraction {
                dg.step_fraction = *f;
            }
            let r = check_derivative_decay(&w, *s, alpha, &dg)?;
            Outcome::new(r.passed, &r)
        }
    })())
}

fn quantize_cmd(v: &Value, c: &Common) -> Result<Outcome> {
    #[derive(Deserialize)]
    struct QuantizeInput {
        grid: GridInput,
        symbol: SymbolSpec,
        field: FieldSpec,
        /// Expected output and tolerance on the largest pointwise difference.
        #[serde(default)]
        expect: Option<FieldSpec>,
        #[serde(default)]
        tol: Option<f64>,
    }
    let input: QuantizeInput = parse(v)?;
    let g = c.grid(&input.grid)?;
    let a = input.symbol.build(g.n)?;
    let f = c.sampler(&input.field, g.n)?(&g);
    checked((|| {
        let out = crate::pdo::quantize(&a, &f)?;
        let error = match &input.expect {
            Some(e) => Some(out.sub(&c.sampler(e, g.n)?(&g))?.max_abs()),
            None => None,
        };
        let passed = match (error, input.tol) {
            (Some(e), Some(t)) => e <= t,
            (Some(_), None) => return Err(Error::BadParam("expect needs tol".into())),
            _ => out.values.iter().all(|z| z.is_finite()),
        };
        let values: Vec<[f64; 2]> = out.values.iter().map(|z| [z.re, z.im]).collect();
        let report = json!({
            "grid": g,
            "multiplier": a.is_multiplier(),
            "max_abs": out.max_abs(),
            "max_error": error,
            "tol": input.tol,
            "passed": passed,
            "values": values,
        });
        let mut csv = Vec::new();
        write_csv(&mut csv, &g, &out.values, false)?;
        Ok(Outcome::new(passed, &report)?.with_csv(String::from_utf8(csv).expect("ascii")))
    })())
}

fn membership(r: &FilterReport, expect: Option<bool>) -> bool {
    match expect {
        Some(m) => r.member == m && r.verdict != crate::microlocal::Verdict::Indeterminate,
        None => r.verdict != crate::microlocal::Verdict::Indeterminate,
    }
}

fn microlocal(v: &Value, c: &Common) -> Result<Outcome> {
    let input: MicrolocalInput = parse(v)?;
    checked((|| match &input {
        MicrolocalInput::Mask { grid, set } => {
            let g = c.grid(grid)?;
            let m = set.build(&g)?;
            if g.n > 2 {
                return Err(Error::BadParam("mask tables are limited to one or two dimensions".into()));
            }
            let mut csv = (1..=g.n).map(|a| format!("xi{a}")).collect::<Vec<_>>().join(",") + ",inside\n";
            for (i, b) in m.bits.iter().enumerate() {
                let xi: Vec<String> = g.xi_at(i).iter().map(|x| x.to_string()).collect();
                csv += &format!("{},{}\n", xi.join(","), u8::from(*b));
            }
            Ok(Outcome::new(true, &json!({ "grid": g, "set": set, "count": m.count() }))?.with_csv(csv))
        }
        MicrolocalInput::Inclusion { grid, set, weight: w, eps, mode } => {
            let r = find_inclusion_eps(set, &weight(w)?, *eps, *mode, &c.grid(grid)?)?;
            Outcome::new(r.verified, &r)
        }
        MicrolocalInput::ConeEquivalence { grid, set, m, eps, samples } => {
            let r = check_cone_equivalence(set, m, *eps, &c.grid(grid)?, *samples)?;
            Outcome::new(r.verified, &r)
        }
        MicrolocalInput::MConic { grid, set, m } => {
            check_m_conic(set, m, &c.grid(grid)?)?;
            Outcome::new(true, &json!({ "set": set, "M": m, "m_conic": true }))
        }
        MicrolocalInput::Cutoff { grid, set, eps, lambda } => {
            let cut = cutoff_symbol(set, *eps, &weight(lambda)?, &c.grid(grid)?)?;
            Outcome::new(true, &json!({ "eps_prime": cut.eps_prime, "report": cut.report }))
        }
        MicrolocalInput::Filter { grid, u, phi, set, eps, weight: w, p, expect } => {
            let g = c.grid(grid)?;
            let (u, phi) = (c.sampler(u, g.n)?, c.sampler(phi, g.n)?);
            let r = filter_membership(&*u, &*phi, set, *eps, &weight(w)?, *p, &g)?;
            Outcome::new(membership(&r, *expect), &r)
        }
        MicrolocalInput::CutoffFilter { grid, u, phi, set, eps, lambda, weight: w, p, expect } => {
            let g = c.grid(grid)?;
            let (u, phi) = (c.sampler(u, g.n)?, c.sampler(phi, g.n)?);
            let r = cutoff_membership(&*u, &*phi, set, *eps, &weight(lambda)?, &weight(w)?, *p, &g)?;
            Outcome::new(membership(&r, *expect), &r)
        }
        MicrolocalInput::Elliptic { grid, symbol, x0, set, r, lambda, config } => {
            let g = c.grid(grid)?;
            let rep = mcl_elliptic(&symbol.build(g.n)?, x0, set, *r, &weight(lambda)?, &g, config)?;
            Outcome::new(rep.passed, &rep)
        }
        MicrolocalInput::SymbolFilter { grid, symbol, x0, set, r, lambda, config } => {
            let g = c.grid(grid)?;
            let rep = symbol_filter_membership(&symbol.build(g.n)?, x0, set, *r, &weight(lambda)?, &g, config)?;
            Outcome::new(rep.passed, &rep)
        }
        MicrolocalInput::Continuity { grid, symbol, u, phi, set, eps, lambda, big_lambda, gamma, sigma, p } => {
            let g = c.grid(grid)?;
            let (u, phi) = (c.sampler(u, g.n)?, c.sampler(phi, g.n)?);
            let weights = MclWeights {
                lambda: weight(lambda)?,
                big_lambda: weight(big_lambda)?,
                gamma: weight(gamma)?,
                sigma: weight(sigma)?,
            };
            let r =
                verify_mcl_continuity(&symbol.build(g.n)?, &*u, &*phi, set, *eps, &weights, *p, &g, &c.plan(g.n)?)?;
            Outcome::new(r.passed, &r)
        }
    })())
}

fn demo(v: &Value, c: &Common) -> Result<Outcome> {
    if v.get("check").is_some() {
        let input: FormulaInput = parse(v)?;
        return match input {
            FormulaInput::Bootstrap { t, s, r, eps } => {
                let schedule = bootstrap_schedule(t, s, r, eps)?;
                Outcome::new(true, &json!({ "schedule": schedule, "steps": schedule.len() - 1 }))
            }
            FormulaInput::Semilinear { r, eps_gain, tau, t_tilde, s, q } => {
                let mut ledger = RegularityLedger::new(r, eps_gain, tau, t_tilde, s, q);
                let t_max = semilinear_gain(&ledger)?;
                ledger.record()?;
                Outcome::new(true, &json!({ "t_max": t_max, "ledger": ledger }))
            }
            FormulaInput::Thresholds { t_tilde, s, q, case } => {
                let case = case.unwrap_or_else(|| threshold_case(t_tilde, q));
                let bound = example_thresholds(t_tilde, s, q, case)?;
                Outcome::new(true, &json!({ "case": case, "bound": bound }))
            }
        };
    }
    let mut cfg: DemoConfig = parse(v)?;
    cfg.grid = GridSpec::new(
        cfg.grid.n,
        c.grid_extent.unwrap_or(cfg.grid.extent),
        c.grid_points.unwrap_or(cfg.grid.points),
    )?;
    checked((|| {
        let r = run_propagation_demo(&cfg)?;
        let mut csv = String::from("x1,x2,region,u_coarse,u_fine,u_growth,f_coarse,f_fine,f_growth,control\n");
        for p in &r.probes {
            for g in [&p.x_k, &p.cone] {
                csv += &format!(
                    "{},{},{},{},{},{},{},{},{},{}\n",
                    p.point[0],
                    p.point[1],
                    g.region,
                    g.u_coarse,
                    g.u_fine,
                    g.u_growth,
                    g.f_coarse,
                    g.f_fine,
                    g.f_growth,
                    g.control
                );
            }
        }
        Ok(Outcome::new(r.pattern.passed, &r)?.with_csv(csv))
    })())
}

fn read_input(path: &PathBuf) -> Result<Value> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Format(format!("cannot read {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| Error::Format(format!("{}: {e}", path.display())))
}

/// Runs the command on every input; `Err` is a configuration error.
pub fn dispatch(cfg: &RunConfig) -> Result<Vec<Outcome>> {
    let c = &cfg.common;
    let inputs = c.inputs.iter().map(read_input).collect::<Result<Vec<_>>>()?;
    if inputs.is_empty() && !matches!(cfg.command, Command::WeightCheck(_)) {
        return Err(Error::BadParam(format!("{} needs at least one --in descriptor", cfg.command.name())));
    }
    if let Command::WeightCheck(args) = &cfg.command {
        if inputs.is_empty() {
            return Ok(vec![weight_check(None, args, c)?]);
        }
    }
    inputs
        .iter()
        .map(|v| match &cfg.command {
            Command::Polyhedron => polyhedron(v),
            Command::WeightCheck(args) => weight_check(Some(v), args, c),
            Command::Estimate => estimate(v, c),
            Command::Quantize => quantize_cmd(v, c),
            Command::Microlocal => microlocal(v, c),
            Command::Demo => demo(v, c),
        })
        .collect()
}

/// Report text for the outcomes, in the configured format.
pub fn render(cfg: &RunConfig, outcomes: &[Outcome]) -> Result<String> {
    match cfg.common.format {
        Format::Json => {
            let results: Vec<Value> = outcomes
                .iter()
                .enumerate()
                .map(|(i, o)| {
                    json!({
                        "input": cfg.common.inputs.get(i).map(|p| p.display().to_string()),
                        "passed": o.passed,
                        "report": o.report,
                    })
                })
                .collect();
            let doc = json!({
                "version": VERSION,
                "command": cfg.command.name(),
                "config": cfg,
                "passed": outcomes.iter().all(|o| o.passed),
                "results": results,
            });
            Ok(serde_json::to_string_pretty(&doc)? + "\n")
        }
        Format::Csv => outcomes
            .iter()
            .map(|o| {
                o.csv.clone().ok_or_else(|| Error::BadParam(format!("no table for this result: {}", o.report)))
            })
            .collect::<Result<Vec<_>>>()
            .map(|t| t.join("\n")),
    }
}

fn configure_threads() -> Result<()> {
    if let Ok(v) = std::env::var(THREADS_ENV) {
        let n: usize = v.trim().parse().map_err(|_| Error::BadParam(format!("{THREADS_ENV} must be a count, got {v:?}")))?;
        if n == 0 {
            return Err(Error::BadParam(format!("{THREADS_ENV} must be positive")));
        }
        // A pool built earlier in the same process keeps its size.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    Ok(())
}

/// Parses arguments, runs, writes the report and returns the exit status.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cfg = match RunConfig::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let result = configure_threads().and_then(|_| dispatch(&cfg)).and_then(|o| Ok((render(&cfg, &o)?, o)));
    let (text, outcomes) = match result {
        Ok(r) => r,
        Err(e) => {
            eprintln!("flmicro: {e}");
            return 2;
        }
    };
    let written = match &cfg.common.out {
        Some(p) => std::fs::write(p, &text),
        None => std::io::stdout().write_all(text.as_bytes()),
    };
    if let Err(e) = written {
        eprintln!("flmicro: cannot write the report: {e}");
        return 2;
    }
    if outcomes.iter().all(|o| o.passed) {
        0
    } else {
        1
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(args: &[&str]) -> RunConfig {
        RunConfig::try_parse_from(std::iter::once("flmicro").chain(args.iter().copied())).unwrap()
    }

    #[test]
    fn weight_flags_build_descriptors() {
        let c = cfg(&["weight-check", "--family", "quasi_homogeneous", "--m", "1,2", "--s", "2", "--cond", "T,SM"]);
        let Command::WeightCheck(a) = &c.command else { panic!() };
        let w = weight_from_flags(a).unwrap();
        assert_eq!(w.weight, WeightDescriptor::QuasiHomogeneous { m: vec![1, 2], s: 2.0 });
        assert_eq!(w.conditions, vec![Condition::T, Condition::SM]);
        let c = cfg(&["weight-check", "--family", "homogeneous"]);
        let Command::WeightCheck(a) = &c.command else { panic!() };
        assert!(matches!(weight_from_flags(a), Err(Error::BadParam(_))));
    }

    #[test]
    fn plans_follow_the_refine_flag() {
        let mut c = cfg(&["estimate"]).common;
        assert_eq!(c.plan(1).unwrap(), SamplingPlan::standard(1, 0));
        c.refine = 3;
        let p = c.plan(1).unwrap();
        assert_eq!(p.levels.len(), 4);
        assert_eq!(p.levels[3].max_log2_radius, 22);
        c.refine = 0;
        assert!(matches!(c.plan(1), Err(Error::PlanTooSmall)));
    }

    #[test]
    fn band_limited_fields_agree_across_refinement() {
        let spec = FieldSpec::BandLimited { band: 3.0, stream: 1 };
        let s = spec.sampler(1, 7).unwrap();
        let g = GridSpec::new(1, 8.0, 64).unwrap();
        let (a, b) = (dft(&s(&g)), dft(&s(&g.refined())));
        for (i, v) in a.values.iter().enumerate() {
            let j = b.grid.xi_index(&g.xi_at(i)).unwrap();
            assert!((v - b.values[j]).norm() < 1e-9 * (1.0 + v.norm()));
        }
    }

    #[test]
    fn config_errors_are_separated_from_failed_checks() {
        assert!(is_config_error(&Error::BadParam("x".into())));
        assert!(!is_config_error(&Error::NotElliptic { c_k: 0.0 }));
        let o = checked(Err(Error::EmptyMask)).unwrap();
        assert!(!o.passed);
        assert!(checked(Err(Error::BadK(2.0))).is_err());
    }

    #[test]
    fn summary_csv_keeps_scalars() {
        let csv = summary_csv(&json!({ "a": 1.5, "b": true, "c": [1, 2], "d": "x" }));
        assert_eq!(csv, "a,b,d\n1.5,true,x\n");
    }
}
