//! Experiment configs and the `plan`, `run`, `spectral` and `baseline` commands.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use convexmc::bounds::{ball_walk_plan, har_plan, indep_mh_plan, BoundsError, SamplerPlan};
use convexmc::densities::{DensityClass, DensitySpec, TargetDensity};
use convexmc::estimator::{
    empirical_error, empirical_error_with_threads, reference_quadrature, replication_rng, ExperimentSpec, Initial,
    Integrand, RunRecord, RNG_ALGORITHM,
};
use convexmc::geometry::{make_body, norm_sq, unit_ball_volume, BodyKind, BodySpec, BodySpecKind, ConvexBody, Shape};
use convexmc::samplers::{ball_walk_delta, rejection_baseline, BallWalk, HitAndRun, Lazy, MetropolisHastings, StepKernel};
use convexmc::spectral_lab::{analyze, conductance, parse_kernel, FiniteChain};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

pub const SCHEMA_VERSION: u32 = 1;
pub const DEFAULT_FEASIBILITY_CAP: u64 = 1_000_000_000;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Invalid(String),
    #[error("infeasible burn-in: the certified plan requires n0 = {n0}, above the feasibility cap {cap}")]
    InfeasibleBurnIn { n0: u128, cap: u64 },
    #[error("{0}")]
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Invalid(_) | CliError::Io(_) => 2,
            CliError::InfeasibleBurnIn { .. } => 3,
        }
    }
}

fn invalid(e: impl std::fmt::Display) -> CliError {
    CliError::Invalid(e.to_string())
}

impl From<BoundsError> for CliError {
    fn from(e: BoundsError) -> Self {
        invalid(e)
    }
}

pub type Result<T> = std::result::Result<T, CliError>;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum IntegrandSpec {
    Coordinate { index: usize },
    CoordinateSquare { index: usize },
    NormSq,
    Constant { value: f64 },
}

impl IntegrandSpec {
    fn build(&self, dim: usize) -> Result<(Arc<Integrand>, String)> {
        let check = |i: usize| {
            if i < dim {
                Ok(i)
            } else {
                Err(invalid(format!("integrand index {i} out of range for d = {dim}")))
            }
        };
        Ok(match *self {
            IntegrandSpec::Coordinate { index } => {
                let i = check(index)?;
                (Arc::new(move |x: &[f64]| x[i]), format!("x{}", i + 1))
            }
            IntegrandSpec::CoordinateSquare { index } => {
                let i = check(index)?;
                (Arc::new(move |x: &[f64]| x[i] * x[i]), format!("x{}^2", i + 1))
            }
            IntegrandSpec::NormSq => (Arc::new(|x: &[f64]| norm_sq(x)), "|x|^2".into()),
            IntegrandSpec::Constant { value } => (Arc::new(move |_: &[f64]| value), format!("constant({value})")),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SamplerKind {
    HitAndRun,
    IndependentMh,
    BallWalk,
    LazyBallWalk,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplerSpec {
    pub sampler: SamplerKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum BurnInSpec {
    Fixed(u64),
    Auto(AutoTag),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AutoTag {
    Auto,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadratureSpec {
    pub level: u32,
    pub tol: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ReferenceSpec {
    Value(f64),
    Quadrature { quadrature: QuadratureSpec },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitialSpec {
    UniformBody,
    UniformUnitBall,
    Fixed(Vec<f64>),
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct OutputSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub json: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub csv: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    pub body: BodySpec,
    pub density: DensitySpec,
    pub integrand: IntegrandSpec,
    pub sampler: SamplerSpec,
    pub n: u64,
    pub n0: BurnInSpec,
    pub replications: u64,
    pub seed: u64,
    pub reference: ReferenceSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial: Option<InitialSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub feasibility_cap: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<OutputSpec>,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| invalid(format!("config: {e}")))?;
        if cfg.schema_version != SCHEMA_VERSION {
            return Err(invalid(format!(
                "unsupported schema_version {} (expected {SCHEMA_VERSION})",
                cfg.schema_version
            )));
        }
        if cfg.n == 0 {
            return Err(invalid("n must be at least 1"));
        }
        if cfg.replications == 0 {
            return Err(invalid("replications must be at least 1"));
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| invalid(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }
}

/// Output of a resolved `run`: the record plus everything needed to audit it.
#[derive(Debug, Clone, Serialize)]
pub struct RunReport {
    pub schema_version: u32,
    pub config: ExperimentConfig,
    pub seed: u64,
    pub rng: String,
    pub record: RunRecord,
}

impl RunReport {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    /// Metadata as leading `#` lines, then `replication,seed,estimate` rows.
    pub fn to_csv(&self) -> String {
        let config = serde_json::to_string(&self.config).expect("config serializes");
        format!(
            "# schema_version={}\n# seed={}\n# rng={}\n# config={config}\n{}",
            self.schema_version,
            self.seed,
            self.rng,
            self.record.to_csv()
        )
    }
}

fn body_of(cfg: &ExperimentConfig) -> Result<ConvexBody> {
    cfg.body.build().map_err(invalid)
}

fn is_unit_ball(body: &ConvexBody) -> bool {
    matches!(body.shape(), Shape::Ball { radius } if *radius == 1.0)
}

/// `sup rho / inf rho` over the body for the built-in densities.
fn bounded_constant(density: &DensitySpec, body: &ConvexBody) -> f64 {
    match *density {
        DensitySpec::Constant => 1.0,
        DensitySpec::Gaussian { alpha } => (alpha * body.outer_radius().powi(2)).exp(),
    }
}

/// The plan certifying the configured scenario, if one exists.
pub fn scenario_plan(cfg: &ExperimentConfig, body: &ConvexBody, rho: &TargetDensity) -> Result<SamplerPlan> {
    let d = body.dim();
    match cfg.sampler.sampler {
        SamplerKind::HitAndRun => {
            if cfg.initial != Some(InitialSpec::UniformUnitBall) {
                return Err(invalid(
                    "auto burn-in for hit_and_run requires \"initial\": \"uniform_unit_ball\"",
                ));
            }
            Ok(har_plan(d, body.outer_radius())?)
        }
        SamplerKind::IndependentMh => {
            let vol = body.volume().ok_or_else(|| invalid("auto burn-in for independent_mh needs the body volume"))?;
            Ok(indep_mh_plan(bounded_constant(&cfg.density, body), vol)?)
        }
        SamplerKind::BallWalk | SamplerKind::LazyBallWalk => match rho.class() {
            DensityClass::LogLipschitz { alpha } => Ok(ball_walk_plan(alpha, d)?),
            DensityClass::Bounded { .. } => {
                Err(invalid("auto burn-in for ball walks needs a log-Lipschitz density (gaussian)"))
            }
        },
    }
}

fn build_kernel(cfg: &ExperimentConfig, body: &ConvexBody, rho: &TargetDensity) -> Result<Arc<dyn StepKernel>> {
    let ball_walk = || -> Result<BallWalk> {
        if !is_unit_ball(body) {
            return Err(invalid("ball walks run on the unit ball: use {\"kind\": \"ball\", \"param\": 1}"));
        }
        let delta = match (cfg.sampler.delta, rho.class()) {
            (Some(delta), _) => delta,
            (None, DensityClass::LogLipschitz { alpha }) => ball_walk_delta(alpha, body.dim()),
            (None, DensityClass::Bounded { .. }) => ball_walk_delta(0.0, body.dim()),
        };
        BallWalk::new(rho.clone(), delta).map_err(invalid)
    };
    Ok(match cfg.sampler.sampler {
        SamplerKind::HitAndRun => {
            if cfg.density != DensitySpec::Constant {
                return Err(invalid("hit_and_run samples the uniform distribution: use {\"kind\": \"constant\"}"));
            }
            Arc::new(HitAndRun::new(body.clone()))
        }
        SamplerKind::IndependentMh => Arc::new(MetropolisHastings::independent(body.clone(), rho.clone())),
        SamplerKind::BallWalk => Arc::new(ball_walk()?),
        SamplerKind::LazyBallWalk => Arc::new(Lazy::new(Arc::new(ball_walk()?))),
    })
}

fn build_initial(cfg: &ExperimentConfig, body: &ConvexBody) -> Result<(Initial, InitialSpec)> {
    let spec = cfg.initial.clone().unwrap_or(match cfg.sampler.sampler {
        SamplerKind::BallWalk | SamplerKind::LazyBallWalk => InitialSpec::UniformUnitBall,
        _ => InitialSpec::UniformBody,
    });
    let init = match &spec {
        InitialSpec::UniformBody => Initial::UniformBody(body.clone()),
        InitialSpec::UniformUnitBall => Initial::UniformUnitBall(body.dim()),
        InitialSpec::Fixed(x) => {
            if x.len() != body.dim() || !body.contains(x) {
                return Err(invalid("fixed initial point must be a member of the body"));
            }
            Initial::Fixed(x.clone())
        }
    };
    Ok((init, spec))
}

/// Resolves `n0`, the reference value and the initial distribution, then runs the experiment.
pub fn run_experiment(cfg: &ExperimentConfig, threads: Option<usize>) -> Result<RunReport> {
    let body = body_of(cfg)?;
    let rho = cfg.density.build(body.dim()).map_err(invalid)?;
    let (integrand, integrand_name) = cfg.integrand.build(body.dim())?;
    let kernel = build_kernel(cfg, &body, &rho)?;
    let (init, initial_spec) = build_initial(cfg, &body)?;

    let mut resolved = cfg.clone();
    resolved.initial = Some(initial_spec);
    let n0 = match cfg.n0 {
        BurnInSpec::Fixed(n0) => n0,
        BurnInSpec::Auto(_) => {
            let plan = scenario_plan(&resolved, &body, &rho)?;
            let cap = cfg.feasibility_cap.unwrap_or(DEFAULT_FEASIBILITY_CAP);
            if plan.n0 > cap as u128 {
                return Err(CliError::InfeasibleBurnIn { n0: plan.n0, cap });
            }
            plan.n0 as u64
        }
    };
    resolved.n0 = BurnInSpec::Fixed(n0);
    let reference = match cfg.reference {
        ReferenceSpec::Value(v) => v,
        ReferenceSpec::Quadrature { quadrature } => {
            let weight = if cfg.density == DensitySpec::Constant { None } else { Some(&rho) };
            reference_quadrature(&body, weight, integrand.as_ref(), quadrature.level, quadrature.tol).map_err(invalid)?
        }
    };
    resolved.reference = ReferenceSpec::Value(reference);

    let spec = ExperimentSpec {
        kernel,
        init,
        integrand,
        integrand_name,
        n: cfg.n,
        n0,
        replications: cfg.replications,
        base_seed: cfg.seed,
    };
    let record = match threads {
        Some(t) => empirical_error_with_threads(&spec, reference, t),
        None => empirical_error(&spec, reference),
    }
    .map_err(invalid)?;
    Ok(RunReport { schema_version: SCHEMA_VERSION, seed: cfg.seed, rng: RNG_ALGORITHM.into(), config: resolved, record })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Json,
    Csv,
}

/// Runs a config file; writes outputs and returns what belongs on stdout.
pub fn cmd_run(
    config: &Path,
    seed: Option<u64>,
    out: Option<&Path>,
    format: Format,
    threads: Option<usize>,
) -> Result<String> {
    let mut cfg = ExperimentConfig::load(config)?;
    if let Some(seed) = seed {
        cfg.seed = seed;
    }
    let report = run_experiment(&cfg, threads)?;
    let render = |f: Format| match f {
        Format::Json => report.to_json(),
        Format::Csv => report.to_csv(),
    };
    let write = |path: &Path, text: String| {
        std::fs::write(path, text).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
    };
    if let Some(output) = &cfg.output {
        if let Some(p) = &output.json {
            write(p, render(Format::Json))?;
        }
        if let Some(p) = &output.csv {
            write(p, render(Format::Csv))?;
        }
    }
    match out {
        Some(p) => {
            write(p, render(format))?;
            Ok(String::new())
        }
        None => Ok(render(format)),
    }
}

pub enum PlanRequest {
    HitAndRun { d: usize, r: f64 },
    IndependentMh { c: f64, vol: f64 },
    BallWalk { alpha: f64, d: usize },
}

pub fn cmd_plan(req: &PlanRequest, ns: &[u64]) -> Result<String> {
    if ns.contains(&0) {
        return Err(invalid("every --n value must be at least 1"));
    }
    let plan = match *req {
        PlanRequest::HitAndRun { d, r } => har_plan(d, r)?,
        PlanRequest::IndependentMh { c, vol } => indep_mh_plan(c, vol)?,
        PlanRequest::BallWalk { alpha, d } => ball_walk_plan(alpha, d)?,
    };
    let mut v = plan.to_json(ns);
    v["schema_version"] = json!(SCHEMA_VERSION);
    Ok(pretty(&v))
}

fn pretty(v: &Value) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("json renders");
    s.push('\n');
    s
}

/// `input` is a path to a kernel file, or the kernel itself inline (`"0.7,0.3;0.3,0.7"`).
pub fn cmd_spectral(input: &str, tol: f64) -> Result<String> {
    let text = if Path::new(input).is_file() {
        std::fs::read_to_string(input).map_err(|e| invalid(format!("{input}: {e}")))?
    } else {
        input.to_string()
    };
    let rows = parse_kernel(&text).map_err(invalid)?;
    let chain = FiniteChain::from_rows(&rows, tol).map_err(invalid)?;
    let report = analyze(&chain).map_err(invalid)?;
    let v = json!({
        "schema_version": SCHEMA_VERSION,
        "m": chain.m(),
        "pi": chain.pi().as_slice(),
        "spectrum": chain.spectrum(),
        "lambda": report.lambda,
        "opnorm2": report.opnorm2,
        "gap": report.gap,
        "phi": conductance(&chain).map_err(invalid)?,
        "cheeger_lo": report.cheeger_lo,
        "cheeger_hi": report.cheeger_hi,
        "cheeger_holds": report.cheeger_holds(1e-10),
    });
    Ok(pretty(&v))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InnerBody {
    Ball,
    Box,
}

/// Rejection sampling of an inner unit body from `r B_d`.
pub fn cmd_baseline(inner: InnerBody, d: usize, r: f64, n: u64, seed: u64) -> Result<String> {
    if d == 0 || n == 0 {
        return Err(invalid("d and n must be at least 1"));
    }
    let kind = match inner {
        InnerBody::Ball => BodyKind::Ball(1.0),
        InnerBody::Box => BodyKind::Box(1.0),
    };
    let shape = make_body(kind, d).map_err(invalid)?;
    if !(r.is_finite() && r >= shape.outer_radius()) {
        return Err(invalid(format!("r = {r} must be at least the inner body's outer radius {}", shape.outer_radius())));
    }
    let vol = shape.volume().expect("built-in bodies know their volume");
    let member = shape.clone();
    let body = ConvexBody::oracle(d, r, move |x| member.contains(x)).map_err(invalid)?.with_volume(vol);
    let mut rng = replication_rng(seed, 0);
    let rep = rejection_baseline(&body, &|_| 1.0, n, &mut rng).map_err(invalid)?;
    let reference = vol / (unit_ball_volume(d) * r.powi(d as i32));
    let v = json!({
        "schema_version": SCHEMA_VERSION,
        "inner": match inner { InnerBody::Ball => "ball", InnerBody::Box => "box" },
        "d": d,
        "r": r,
        "seed": seed,
        "rng": RNG_ALGORITHM,
        "proposals": rep.proposals,
        "accepted": rep.accepted,
        "acceptance_rate": rep.acceptance_rate,
        "reference_rate": reference,
        "r_pow_minus_d": r.powi(-(d as i32)),
        "stderr": (reference * (1.0 - reference) / n as f64).sqrt(),
    });
    Ok(pretty(&v))
}

/// Independent Metropolis for a Gaussian on the square `[-1, 1]^2`, integrating `x1`.
pub fn example_config() -> ExperimentConfig {
    ExperimentConfig {
        schema_version: SCHEMA_VERSION,
        body: BodySpec { kind: BodySpecKind::Box, dim: 2, param: convexmc::geometry::BodyParam::Scalar(1.0) },
        density: DensitySpec::Gaussian { alpha: 0.5 },
        integrand: IntegrandSpec::Coordinate { index: 0 },
        sampler: SamplerSpec { sampler: SamplerKind::IndependentMh, delta: None },
        n: 10_000,
        n0: BurnInSpec::Auto(AutoTag::Auto),
        replications: 200,
        seed: 7,
        reference: ReferenceSpec::Value(0.0),
        initial: None,
        feasibility_cap: None,
        output: None,
    }
}
