//! Unnormalized target densities with class metadata.
//!
//! Evaluation is log-domain first. A density carries a constant log offset so that
//! rescaling (`c * rho`) never touches the underlying evaluator; ratios
//! `rho(y) / rho(x)` are computed from the unscaled log evaluator and are therefore
//! bit-identical across rescalings.

use std::fmt;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{norm_sq, Point};

pub type LogDensityFn = dyn Fn(&[f64]) -> f64 + Send + Sync;

const CLASS_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DensityError {
    #[error("bounded-class constant C = {0} must be at least 1")]
    InvalidC(f64),
    #[error("sup norm {0} must be positive and finite")]
    InvalidSupNorm(f64),
    #[error("Gaussian parameter alpha = {0} must be positive")]
    InvalidAlpha(f64),
}

/// Declared density class.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "class", rename_all = "snake_case")]
pub enum DensityClass {
    /// `1 <= rho(x) <= c` on the domain.
    Bounded { c: f64 },
    /// Log-concave on the unit ball with `|log rho(x) - log rho(y)| <= alpha |x - y|`.
    LogLipschitz { alpha: f64 },
}

/// Config form: `{"kind": "gaussian", "alpha": a}` or `{"kind": "constant"}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum DensitySpec {
    Gaussian { alpha: f64 },
    Constant,
}

impl DensitySpec {
    pub fn build(&self, dim: usize) -> Result<TargetDensity, DensityError> {
        match *self {
            DensitySpec::Gaussian { alpha } => gaussian_density(alpha, dim),
            DensitySpec::Constant => Ok(constant_density(dim)),
        }
    }
}

#[derive(Clone)]
pub struct TargetDensity {
    dim: usize,
    name: String,
    log_fn: Arc<LogDensityFn>,
    log_scale: f64,
    class: DensityClass,
}

impl fmt::Debug for TargetDensity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("TargetDensity")
            .field("dim", &self.dim)
            .field("name", &self.name)
            .field("log_scale", &self.log_scale)
            .field("class", &self.class)
            .finish_non_exhaustive()
    }
}

impl TargetDensity {
    /// Custom density from its log evaluator. Return `f64::NEG_INFINITY` outside the support.
    pub fn new<F>(dim: usize, name: impl Into<String>, log_fn: F, class: DensityClass) -> Self
    where
        F: Fn(&[f64]) -> f64 + Send + Sync + 'static,
    {
        Self { dim, name: name.into(), log_fn: Arc::new(log_fn), log_scale: 0.0, class }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn class(&self) -> DensityClass {
        self.class
    }

    pub fn log_eval(&self, x: &[f64]) -> f64 {
        (self.log_fn)(x) + self.log_scale
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        self.log_eval(x).exp()
    }

    /// `log(rho(y) / rho(x))`, independent of any constant rescaling.
    pub fn log_ratio(&self, x: &[f64], y: &[f64]) -> f64 {
        (self.log_fn)(y) - (self.log_fn)(x)
    }

    /// `c * rho` with the class metadata left as declared.
    pub fn scaled(&self, c: f64) -> Self {
        assert!(c > 0.0 && c.is_finite(), "scale must be positive");
        Self { log_scale: self.log_scale + c.ln(), ..self.clone() }
    }
}

/// `rho(x) = exp(-alpha |x|^2)`, log-Lipschitz on the unit ball with constant `2 alpha`.
pub fn gaussian_density(alpha: f64, dim: usize) -> Result<TargetDensity, DensityError> {
    if !(alpha > 0.0 && alpha.is_finite()) {
        return Err(DensityError::InvalidAlpha(alpha));
    }
    Ok(TargetDensity::new(
        dim,
        format!("gaussian(alpha={alpha})"),
        move |x| -alpha * norm_sq(x),
        DensityClass::LogLipschitz { alpha: 2.0 * alpha },
    ))
}

/// `rho = 1`.
pub fn constant_density(dim: usize) -> TargetDensity {
    TargetDensity::new(dim, "constant", |_| 0.0, DensityClass::Bounded { c: 1.0 })
}

/// `C * rho / sup_norm`, declared in the bounded class with constant `C`.
pub fn rescale_to_bounded(
    rho: &TargetDensity,
    c: f64,
    sup_norm: f64,
) -> Result<TargetDensity, DensityError> {
    if !(c >= 1.0 && c.is_finite()) {
        return Err(DensityError::InvalidC(c));
    }
    if !(sup_norm > 0.0 && sup_norm.is_finite()) {
        return Err(DensityError::InvalidSupNorm(sup_norm));
    }
    Ok(TargetDensity {
        log_scale: rho.log_scale + c.ln() - sup_norm.ln(),
        class: DensityClass::Bounded { c },
        name: format!("{}*{c}/{sup_norm}", rho.name),
        ..rho.clone()
    })
}

/// Worst sampled deviations from the declared class.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClassReport {
    pub worst_lipschitz_ratio: f64,
    pub lipschitz_witness: Option<(Point, Point)>,
    pub worst_concavity_defect: f64,
    pub worst_bound_violation: f64,
    pub pass: bool,
}

/// Sampled class check over `budget` random pairs and triples drawn from `samples`.
///
/// Bounded classes check `1 <= rho <= C` on every sample point. Log-Lipschitz classes
/// check the Lipschitz ratio on pairs and log-concavity on random convex combinations.
pub fn check_class(rho: &TargetDensity, samples: &[Point], budget: usize, seed: u64) -> ClassReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report = ClassReport {
        worst_lipschitz_ratio: 0.0,
        lipschitz_witness: None,
        worst_concavity_defect: 0.0,
        worst_bound_violation: 0.0,
        pass: true,
    };
    if samples.is_empty() {
        return report;
    }
    let pick = |rng: &mut ChaCha8Rng| &samples[rng.random_range(0..samples.len())];

    match rho.class {
        DensityClass::Bounded { c } => {
            for x in samples {
                let v = rho.eval(x);
                let violation = (1.0 - v).max(v - c).max(0.0);
                report.worst_bound_violation = report.worst_bound_violation.max(violation);
            }
            report.pass = report.worst_bound_violation <= CLASS_TOL;
        }
        DensityClass::LogLipschitz { alpha } => {
            for _ in 0..budget {
                let x = pick(&mut rng);
                let y = pick(&mut rng);
                let dist = norm_sq(&x.iter().zip(y).map(|(a, b)| a - b).collect::<Vec<_>>()).sqrt();
                if dist > 1e-12 {
                    let ratio = rho.log_ratio(x, y).abs() / dist;
                    if ratio > report.worst_lipschitz_ratio {
                        report.worst_lipschitz_ratio = ratio;
                        report.lipschitz_witness = Some((x.clone(), y.clone()));
                    }
                }
                let lambda: f64 = rng.random();
                let z: Vec<f64> = x.iter().zip(y).map(|(a, b)| lambda * a + (1.0 - lambda) * b).collect();
                let defect = lambda * rho.log_eval(x) + (1.0 - lambda) * rho.log_eval(y) - rho.log_eval(&z);
                report.worst_concavity_defect = report.worst_concavity_defect.max(defect);
            }
            report.pass = report.worst_lipschitz_ratio <= alpha + CLASS_TOL
                && report.worst_concavity_defect <= CLASS_TOL;
        }
    }
    report
}
