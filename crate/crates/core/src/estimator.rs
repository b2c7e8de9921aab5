//! The MCMC average `S_{n,n0}(f) = (1/n) sum_{j=1}^{n} f(X_{j+n0})`, replicated
//! error measurement and a deterministic quadrature reference.

use std::sync::Arc;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::densities::TargetDensity;
use crate::geometry::{uniform_in_ball, ConvexBody, GeometryError, Point};
use crate::samplers::{KernelDescriptor, SamplerError, StepKernel};
use crate::spectral_lab::DistributionVector;

/// Identifier of the generator behind every replication stream.
pub const RNG_ALGORITHM: &str = "chacha20";
/// How replication seeds are derived from the base seed.
pub const SEED_SCHEME: &str = "splitmix64(base_seed + i * 0x9E3779B97F4A7C15)";

const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EstimatorError {
    #[error(transparent)]
    Sampler(#[from] SamplerError),
    #[error("invalid experiment: {0}")]
    InvalidSpec(String),
    #[error("quadrature did not converge: levels {level_lo} and {level_hi} differ by {diff}")]
    NotConverged { level_lo: u32, level_hi: u32, diff: f64 },
    #[error("quadrature supports d <= 3, got d = {0}")]
    DimensionTooHigh(usize),
    #[error("thread pool: {0}")]
    ThreadPool(String),
}

impl From<GeometryError> for EstimatorError {
    fn from(e: GeometryError) -> Self {
        EstimatorError::Sampler(e.into())
    }
}

pub type Result<T> = std::result::Result<T, EstimatorError>;

pub type Integrand = dyn Fn(&[f64]) -> f64 + Send + Sync;

/// Initial distribution `nu` of the chain.
#[derive(Debug, Clone)]
pub enum Initial {
    Fixed(Point),
    UniformBody(ConvexBody),
    UniformUnitBall(usize),
    /// Over the states of a finite chain, emitted as `[state as f64]`.
    Discrete(DistributionVector),
}

impl Initial {
    pub fn draw(&self, rng: &mut dyn RngCore) -> Result<Point> {
        match self {
            Initial::Fixed(x) => Ok(x.clone()),
            Initial::UniformBody(body) => Ok(body.uniform_in_body(rng)?.0),
            Initial::UniformUnitBall(d) => Ok(uniform_in_ball(*d, 1.0, rng)),
            Initial::Discrete(nu) => {
                let u: f64 = rng.random();
                let mut acc = 0.0;
                let w = nu.weights();
                let idx = w
                    .iter()
                    .position(|p| {
                        acc += p;
                        u < acc
                    })
                    .unwrap_or(w.len() - 1);
                Ok(vec![idx as f64])
            }
        }
    }

    pub fn describe(&self) -> String {
        match self {
            Initial::Fixed(x) => format!("fixed({x:?})"),
            Initial::UniformBody(_) => "uniform_body".into(),
            Initial::UniformUnitBall(d) => format!("uniform_unit_ball(d={d})"),
            Initial::Discrete(nu) => format!("discrete({:?})", nu.weights()),
        }
    }
}

/// One chain run: `X_1 ~ nu`, `n0 + n - 1` transitions, `f` evaluated exactly `n` times
/// on `X_{n0+1}, ..., X_{n0+n}`.
pub fn run_chain(
    kernel: &dyn StepKernel,
    init: &Initial,
    f: &dyn Fn(&[f64]) -> f64,
    n: u64,
    n0: u64,
    rng: &mut dyn RngCore,
) -> Result<f64> {
    if n == 0 {
        return Err(EstimatorError::InvalidSpec("n must be at least 1".into()));
    }
    let mut x = init.draw(rng)?;
    for _ in 0..n0 {
        x = kernel.step(&x, rng)?;
    }
    // Running mean, so a constant integrand yields that constant exactly.
    let mut mean = f(&x);
    for k in 2..=n {
        x = kernel.step(&x, rng)?;
        mean += (f(&x) - mean) / k as f64;
    }
    Ok(mean)
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(GOLDEN_GAMMA);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of replication `i`.
pub fn replication_seed(base_seed: u64, i: u64) -> u64 {
    splitmix64(base_seed.wrapping_add(i.wrapping_mul(GOLDEN_GAMMA)))
}

pub fn replication_rng(base_seed: u64, i: u64) -> ChaCha20Rng {
    ChaCha20Rng::seed_from_u64(replication_seed(base_seed, i))
}

/// Sum in a fixed binary tree over the index order.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    match xs.len() {
        0 => 0.0,
        1 => xs[0],
        len => {
            let (a, b) = xs.split_at(len / 2);
            pairwise_sum(a) + pairwise_sum(b)
        }
    }
}

#[derive(Clone)]
pub struct ExperimentSpec {
    pub kernel: Arc<dyn StepKernel>,
    pub init: Initial,
    pub integrand: Arc<Integrand>,
    pub integrand_name: String,
    pub n: u64,
    pub n0: u64,
    pub replications: u64,
    pub base_seed: u64,
}

impl ExperimentSpec {
    fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(EstimatorError::InvalidSpec("n must be at least 1".into()));
        }
        if self.replications == 0 {
            return Err(EstimatorError::InvalidSpec("replications must be at least 1".into()));
        }
        Ok(())
    }

    fn replicate(&self, i: u64) -> Result<f64> {
        let mut rng = replication_rng(self.base_seed, i);
        run_chain(self.kernel.as_ref(), &self.init, self.integrand.as_ref(), self.n, self.n0, &mut rng)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunRecord {
    pub sampler: KernelDescriptor,
    pub initial: String,
    pub integrand: String,
    pub n: u64,
    pub n0: u64,
    pub replications: u64,
    pub base_seed: u64,
    pub rng: String,
    pub seed_scheme: String,
    pub reference: f64,
    pub mean: f64,
    pub mse: f64,
    pub mse_stderr: f64,
    pub seeds: Vec<u64>,
    pub estimates: Vec<f64>,
}

impl RunRecord {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("RunRecord serializes")
    }

    /// `replication,seed,estimate` rows with a header, LF line endings.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("replication,seed,estimate\n");
        for (i, (seed, est)) in self.seeds.iter().zip(&self.estimates).enumerate() {
            out.push_str(&format!("{i},{seed},{est:?}\n"));
        }
        out
    }
}

/// Runs `R` independent replications on the global thread pool.
pub fn empirical_error(spec: &ExperimentSpec, reference: f64) -> Result<RunRecord> {
    spec.validate()?;
    let estimates = (0..spec.replications)
        .into_par_iter()
        .map(|i| spec.replicate(i))
        .collect::<Result<Vec<_>>>()?;
    Ok(summarize(spec, reference, estimates))
}

/// Same as [`empirical_error`] on a dedicated pool of `threads` workers.
pub fn empirical_error_with_threads(spec: &ExperimentSpec, reference: f64, threads: usize) -> Result<RunRecord> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads.max(1))
        .build()
        .map_err(|e| EstimatorError::ThreadPool(e.to_string()))?;
    pool.install(|| empirical_error(spec, reference))
}

fn summarize(spec: &ExperimentSpec, reference: f64, estimates: Vec<f64>) -> RunRecord {
    let r = estimates.len() as f64;
    let mean = pairwise_sum(&estimates) / r;
    let sq: Vec<f64> = estimates.iter().map(|e| (e - reference).powi(2)).collect();
    let mse = pairwise_sum(&sq) / r;
    let mse_stderr = if estimates.len() > 1 {
        let dev: Vec<f64> = sq.iter().map(|s| (s - mse).powi(2)).collect();
        (pairwise_sum(&dev) / (r - 1.0)).sqrt() / r.sqrt()
    } else {
        0.0
    };
    RunRecord {
        sampler: spec.kernel.descriptor(),
        initial: spec.init.describe(),
        integrand: spec.integrand_name.clone(),
        n: spec.n,
        n0: spec.n0,
        replications: spec.replications,
        base_seed: spec.base_seed,
        rng: RNG_ALGORITHM.into(),
        seed_scheme: SEED_SCHEME.into(),
        reference,
        mean,
        mse,
        mse_stderr,
        seeds: (0..spec.replications).map(|i| replication_seed(spec.base_seed, i)).collect(),
        estimates,
    }
}

/// Tensor midpoint rule over the bounding box, masked by membership.
///
/// Computes `S(f)` for the uniform target, or `sum f rho / sum rho` when `rho` is
/// given, at `2^level` points per axis and checks agreement with `level - 1`.
pub fn reference_quadrature(
    body: &ConvexBody,
    rho: Option<&TargetDensity>,
    f: &dyn Fn(&[f64]) -> f64,
    level: u32,
    tol: f64,
) -> Result<f64> {
    let d = body.dim();
    if d > 3 {
        return Err(EstimatorError::DimensionTooHigh(d));
    }
    if level == 0 || level > 24 / d as u32 + 2 {
        return Err(EstimatorError::InvalidSpec(format!("quadrature level {level} out of range for d = {d}")));
    }
    let fine = midpoint(body, rho, f, level);
    let coarse = midpoint(body, rho, f, level - 1);
    let diff = (fine - coarse).abs();
    if diff.is_nan() || diff > tol {
        return Err(EstimatorError::NotConverged { level_lo: level - 1, level_hi: level, diff });
    }
    Ok(fine)
}

fn midpoint(body: &ConvexBody, rho: Option<&TargetDensity>, f: &dyn Fn(&[f64]) -> f64, level: u32) -> f64 {
    let d = body.dim();
    let k = 1usize << level;
    let w = body.bounding_half_width();
    let h = 2.0 * w / k as f64;
    let origin = vec![0.0; d];
    let total = k.pow(d as u32);
    let mut num = 0.0;
    let mut den = 0.0;
    let mut p = vec![0.0; d];
    for idx in 0..total {
        let mut rest = idx;
        for c in p.iter_mut() {
            *c = -w + h * ((rest % k) as f64 + 0.5);
            rest /= k;
        }
        if !body.contains(&p) {
            continue;
        }
        let weight = rho.map_or(1.0, |r| r.log_ratio(&origin, &p).exp());
        num += weight * f(&p);
        den += weight;
    }
    num / den
}
