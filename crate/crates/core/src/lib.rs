//! Markov chain Monte Carlo integration over convex bodies with explicit error
//! bounds, plus exact spectral analysis of finite reversible chains.

pub mod bounds;
pub mod densities;
pub mod estimator;
pub mod geometry;
pub mod samplers;
pub mod spectral_lab;

pub use bounds::{BoundKind, BoundsError, SamplerPlan};
pub use densities::{DensityClass, TargetDensity};
pub use estimator::{ExperimentSpec, Initial, RunRecord};
pub use geometry::{BodyKind, ConvexBody, Point};
pub use samplers::{KernelDescriptor, StepKernel};
pub use spectral_lab::{DistributionVector, FiniteChain, SpectralReport};
