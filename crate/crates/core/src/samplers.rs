//! Single-step transition kernels.
//!
//! RNG consumption per step is fixed: proposal draws come first (direction, then
//! position along the chord or inside the proposal ball), the acceptance uniform
//! last. Metropolis-type kernels always draw the acceptance uniform, even when the
//! proposal is rejected outright, so every step of a given kernel consumes the same
//! pattern of values.

use std::sync::Arc;

use rand::{Rng, RngCore};
use serde::Serialize;
use thiserror::Error;

use crate::densities::TargetDensity;
use crate::geometry::{
    norm_sq, sphere_direction, uniform_in_ball, unit_ball_volume, ConvexBody, GeometryError, Point,
};
use crate::spectral_lab::FiniteChain;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SamplerError {
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error("proposal emitted a point where its density vanishes")]
    DomainViolation,
    #[error("point is outside the sampler domain")]
    PointOutside,
    #[error("invalid sampler parameter: {0}")]
    InvalidParameter(String),
    #[error("no accepted points in {proposals} proposals")]
    NoAcceptedPoints { proposals: u64 },
}

pub type Result<T> = std::result::Result<T, SamplerError>;

/// Name and parameters of a kernel, recorded in experiment output.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KernelDescriptor {
    pub name: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub delta: Option<f64>,
    pub laziness: u32,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub proposal: Option<String>,
}

impl KernelDescriptor {
    fn named(name: &str) -> Self {
        Self { name: name.into(), delta: None, laziness: 0, proposal: None }
    }
}

/// One transition `x -> X'` of a Markov chain.
pub trait StepKernel: Send + Sync {
    fn step(&self, x: &[f64], rng: &mut dyn RngCore) -> Result<Point>;
    fn descriptor(&self) -> KernelDescriptor;
}

/// Outcome of one Metropolis-Hastings acceptance test.
#[derive(Debug, Clone, PartialEq)]
pub struct AcceptanceDecision {
    pub proposal: Point,
    pub alpha: f64,
    pub accepted: bool,
}

/// Transition density `q(x, .)` together with a sampler for it.
pub trait Proposal: Send + Sync {
    fn sample(&self, x: &[f64], rng: &mut dyn RngCore) -> Result<Point>;
    /// `log q(x, y)`, `NEG_INFINITY` where the density vanishes.
    fn log_density(&self, x: &[f64], y: &[f64]) -> f64;
    fn name(&self) -> String;
}

/// Uniform proposal on the ball of radius `delta` around the current state.
#[derive(Debug, Clone)]
pub struct BallProposal {
    dim: usize,
    delta: f64,
    log_q: f64,
}

impl BallProposal {
    pub fn new(dim: usize, delta: f64) -> Result<Self> {
        if dim == 0 || !(delta > 0.0 && delta.is_finite()) {
            return Err(SamplerError::InvalidParameter(format!(
                "ball proposal needs dim >= 1 and delta > 0 (got {dim}, {delta})"
            )));
        }
        let log_q = -(unit_ball_volume(dim).ln() + dim as f64 * delta.ln());
        Ok(Self { dim, delta, log_q })
    }
}

impl Proposal for BallProposal {
    fn sample(&self, x: &[f64], rng: &mut dyn RngCore) -> Result<Point> {
        let step = uniform_in_ball(self.dim, self.delta, rng);
        Ok(x.iter().zip(step).map(|(a, b)| a + b).collect())
    }

    fn log_density(&self, x: &[f64], y: &[f64]) -> f64 {
        let d: f64 = x.iter().zip(y).map(|(a, b)| (a - b).powi(2)).sum();
        if d <= self.delta * self.delta {
            self.log_q
        } else {
            f64::NEG_INFINITY
        }
    }

    fn name(&self) -> String {
        format!("ball(delta={})", self.delta)
    }
}

/// Uniform proposal `mu_G` on a body, independent of the current state.
#[derive(Debug, Clone)]
pub struct UniformBodyProposal {
    body: ConvexBody,
}

impl UniformBodyProposal {
    pub fn new(body: ConvexBody) -> Self {
        Self { body }
    }
}

impl Proposal for UniformBodyProposal {
    fn sample(&self, _x: &[f64], rng: &mut dyn RngCore) -> Result<Point> {
        Ok(self.body.uniform_in_body(rng)?.0)
    }

    fn log_density(&self, _x: &[f64], y: &[f64]) -> f64 {
        // The constant 1/vol(G) cancels in every ratio.
        if self.body.contains(y) {
            0.0
        } else {
            f64::NEG_INFINITY
        }
    }

    fn name(&self) -> String {
        "uniform_body".into()
    }
}

/// Metropolis-Hastings acceptance probability in log form.
///
/// Returns 1 when `q(x, y) rho(x) = 0`, otherwise
/// `min(1, q(y, x) rho(y) / (q(x, y) rho(x)))`, with the `rho` ratio supplied
/// directly as `log_rho_ratio = log rho(y) - log rho(x)`.
pub fn acceptance_probability(log_q_xy: f64, log_q_yx: f64, log_rho_x: f64, log_rho_ratio: f64) -> f64 {
    if log_q_xy == f64::NEG_INFINITY || log_rho_x == f64::NEG_INFINITY {
        return 1.0;
    }
    let log_a = log_q_yx - log_q_xy + log_rho_ratio;
    if log_a.is_nan() {
        return 0.0;
    }
    log_a.min(0.0).exp().clamp(0.0, 1.0)
}

/// One Metropolis-Hastings transition: propose `y ~ q(x, .)`, accept with `alpha(x, y)`.
pub fn mh_step(
    proposal: &dyn Proposal,
    rho: &TargetDensity,
    x: &[f64],
    rng: &mut dyn RngCore,
) -> Result<(AcceptanceDecision, Point)> {
    let y = proposal.sample(x, rng)?;
    let log_q_xy = proposal.log_density(x, &y);
    if log_q_xy == f64::NEG_INFINITY {
        return Err(SamplerError::DomainViolation);
    }
    let u: f64 = rng.random();
    let alpha = acceptance_probability(log_q_xy, proposal.log_density(&y, x), rho.log_eval(x), rho.log_ratio(x, &y));
    Ok(decide(y, alpha, u, x))
}

fn decide(y: Point, alpha: f64, u: f64, x: &[f64]) -> (AcceptanceDecision, Point) {
    let accepted = u < alpha;
    let next = if accepted { y.clone() } else { x.to_vec() };
    (AcceptanceDecision { proposal: y, alpha, accepted }, next)
}

/// General Metropolis-Hastings kernel over any proposal.
#[derive(Clone)]
pub struct MetropolisHastings {
    proposal: Arc<dyn Proposal>,
    rho: TargetDensity,
    name: &'static str,
}

impl MetropolisHastings {
    pub fn new(proposal: Arc<dyn Proposal>, rho: TargetDensity) -> Self {
        Self { proposal, rho, name: "metropolis_hastings" }
    }

    /// Metropolis algorithm: `proposal` must be symmetric, `q(x, y) = q(y, x)`.
    pub fn metropolis(proposal: Arc<dyn Proposal>, rho: TargetDensity) -> Self {
        Self { proposal, rho, name: "metropolis" }
    }

    /// Independent Metropolis algorithm with the uniform proposal on `body`,
    /// accepting with `min(1, rho(y) / rho(x))`.
    pub fn independent(body: ConvexBody, rho: TargetDensity) -> Self {
        Self { proposal: Arc::new(UniformBodyProposal::new(body)), rho, name: "independent_mh" }
    }

    pub fn step_with_decision(&self, x: &[f64], rng: &mut dyn RngCore) -> Result<(AcceptanceDecision, Point)> {
        mh_step(self.proposal.as_ref(), &self.rho, x, rng)
    }
}

impl StepKernel for MetropolisHastings {
    fn step(&self, x: &[f64], rng: &mut dyn RngCore) -> Result<Point> {
        Ok(self.step_with_decision(x, rng)?.1)
    }

    fn descriptor(&self) -> KernelDescriptor {
        KernelDescriptor { proposal: Some(self.proposal.name()), ..KernelDescriptor::named(self.name) }
    }
}

/// One independent Metropolis step with uniform proposals on `body`.
pub fn independent_mh_step(body: &ConvexBody, rho: &TargetDensity, x: &[f64], rng: &mut dyn RngCore) -> Result<Point> {
    let proposal = UniformBodyProposal::new(body.clone());
    Ok(mh_step(&proposal, rho, x, rng)?.1)
}

/// Hit-and-run on a convex body.
#[derive(Debug, Clone)]
pub struct HitAndRun {
    body: ConvexBody,
}

impl HitAndRun {
    pub fn new(body: ConvexBody) -> Self {
        Self { body }
    }

    pub fn body(&self) -> &ConvexBody {
        &self.body
    }
}

impl StepKernel for HitAndRun {
    fn step(&self, x: &[f64], rng: &mut dyn RngCore) -> Result<Point> {
        hit_and_run_step(&self.body, x, rng)
    }

    fn descriptor(&self) -> KernelDescriptor {
        KernelDescriptor::named("hit_and_run")
    }
}

/// Uniform direction, then a uniform point on the chord through `x` in that direction.
pub fn hit_and_run_step(body: &ConvexBody, x: &[f64], rng: &mut dyn RngCore) -> Result<Point> {
    if !body.contains(x) {
        return Err(GeometryError::PointOutside.into());
    }
    let theta = sphere_direction(body.dim(), rng);
    let chord = body.chord(x, &theta)?;
    let u: f64 = rng.random();
    let mut t = chord.t_min + u * chord.len();
    let at = |t: f64| -> Point { x.iter().zip(&theta).map(|(v, d)| v + t * d).collect() };
    let mut y = at(t);
    // Boundary ties: pull the point back toward x until the oracle agrees.
    let mut tries = 0;
    while !body.contains(&y) {
        tries += 1;
        if tries > 64 {
            return Ok(x.to_vec());
        }
        t *= 0.5;
        y = at(t);
    }
    Ok(y)
}

/// Step size `min(1 / sqrt(d + 1), 1 / alpha)` for log-Lipschitz targets.
pub fn ball_walk_delta(alpha: f64, d: usize) -> f64 {
    let base = 1.0 / ((d + 1) as f64).sqrt();
    if alpha > 0.0 {
        base.min(1.0 / alpha)
    } else {
        base
    }
}

/// Metropolis chain with the `delta` ball-walk proposal on the unit ball `B_d`.
#[derive(Debug, Clone)]
pub struct BallWalk {
    rho: TargetDensity,
    proposal: BallProposal,
    delta: f64,
}

impl BallWalk {
    pub fn new(rho: TargetDensity, delta: f64) -> Result<Self> {
        let proposal = BallProposal::new(rho.dim(), delta)?;
        Ok(Self { rho, proposal, delta })
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    /// Proposals leaving `B_d` keep the chain in place with `alpha = 0`.
    pub fn step_with_decision(&self, x: &[f64], rng: &mut dyn RngCore) -> Result<(AcceptanceDecision, Point)> {
        if x.len() != self.rho.dim() || norm_sq(x) > 1.0 {
            return Err(SamplerError::PointOutside);
        }
        let y = self.proposal.sample(x, rng)?;
        let u: f64 = rng.random();
        let alpha = if norm_sq(&y) > 1.0 {
            0.0
        } else {
            acceptance_probability(0.0, 0.0, self.rho.log_eval(x), self.rho.log_ratio(x, &y))
        };
        Ok(decide(y, alpha, u, x))
    }
}

impl StepKernel for BallWalk {
    fn step(&self, x: &[f64], rng: &mut dyn RngCore) -> Result<Point> {
        Ok(self.step_with_decision(x, rng)?.1)
    }

    fn descriptor(&self) -> KernelDescriptor {
        KernelDescriptor {
            delta: Some(self.delta),
            proposal: Some(self.proposal.name()),
            ..KernelDescriptor::named("ball_walk")
        }
    }
}

pub fn ball_walk_mh_step(rho: &TargetDensity, delta: f64, x: &[f64], rng: &mut dyn RngCore) -> Result<Point> {
    BallWalk::new(rho.clone(), delta)?.step(x, rng)
}

/// With probability 1/2 stay, otherwise take one step of the inner kernel.
#[derive(Clone)]
pub struct Lazy {
    inner: Arc<dyn StepKernel>,
}

impl Lazy {
    pub fn new(inner: Arc<dyn StepKernel>) -> Self {
        Self { inner }
    }
}

impl StepKernel for Lazy {
    fn step(&self, x: &[f64], rng: &mut dyn RngCore) -> Result<Point> {
        lazy_step(self.inner.as_ref(), x, rng)
    }

    fn descriptor(&self) -> KernelDescriptor {
        let mut d = self.inner.descriptor();
        d.laziness += 1;
        d
    }
}

pub fn lazy_step(inner: &dyn StepKernel, x: &[f64], rng: &mut dyn RngCore) -> Result<Point> {
    let u: f64 = rng.random();
    if u < 0.5 {
        Ok(x.to_vec())
    } else {
        inner.step(x, rng)
    }
}

/// A finite chain embedded as a kernel on points `[state as f64]`.
#[derive(Debug, Clone)]
pub struct FiniteChainKernel {
    cumulative: Vec<Vec<f64>>,
}

impl FiniteChainKernel {
    pub fn new(chain: &FiniteChain) -> Self {
        let cumulative = chain
            .kernel_rows()
            .into_iter()
            .map(|row| {
                row.iter()
                    .scan(0.0, |acc, p| {
                        *acc += p;
                        Some(*acc)
                    })
                    .collect()
            })
            .collect();
        Self { cumulative }
    }

    pub fn states(&self) -> usize {
        self.cumulative.len()
    }
}

impl StepKernel for FiniteChainKernel {
    fn step(&self, x: &[f64], rng: &mut dyn RngCore) -> Result<Point> {
        let state = x.first().copied().unwrap_or(-1.0);
        if !(state >= 0.0 && (state as usize) < self.states() && state.fract() == 0.0) {
            return Err(SamplerError::PointOutside);
        }
        let row = &self.cumulative[state as usize];
        let u: f64 = rng.random();
        let next = row.iter().position(|c| u < *c).unwrap_or(row.len() - 1);
        Ok(vec![next as f64])
    }

    fn descriptor(&self) -> KernelDescriptor {
        KernelDescriptor::named("finite_chain")
    }
}

/// Acceptance statistics of the rejection baseline.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BaselineReport {
    pub estimate: f64,
    pub proposals: u64,
    pub accepted: u64,
    pub acceptance_rate: f64,
    /// `vol(G) / vol(r B_d)` when the body volume is known.
    pub reference_rate: Option<f64>,
}

/// Uniform proposals in `r B_d`, keeping members of the body; averages `f` over members.
pub fn rejection_baseline(
    body: &ConvexBody,
    f: &dyn Fn(&[f64]) -> f64,
    n: u64,
    rng: &mut dyn RngCore,
) -> Result<BaselineReport> {
    let d = body.dim();
    let r = body.outer_radius();
    let mut accepted = 0u64;
    let mut sum = 0.0;
    for _ in 0..n {
        let p = uniform_in_ball(d, r, rng);
        if body.contains(&p) {
            accepted += 1;
            sum += f(&p);
        }
    }
    if accepted == 0 {
        return Err(SamplerError::NoAcceptedPoints { proposals: n });
    }
    let outer = unit_ball_volume(d) * r.powi(d as i32);
    Ok(BaselineReport {
        estimate: sum / accepted as f64,
        proposals: n,
        accepted,
        acceptance_rate: accepted as f64 / n as f64,
        reference_rate: body.volume().map(|v| v / outer),
    })
}
