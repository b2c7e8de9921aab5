//! Convex bodies `G` with `B_d ⊂ G ⊂ r B_d`, given by membership oracles.
//!
//! Built-in bodies (ball, box, ellipsoid) carry an analytic chord, volume and
//! exact uniform sampler. Oracle-only bodies find chords by bisection and sample
//! by rejection from the outer ball.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use rand::{Rng, RngCore};
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub type Point = Vec<f64>;

/// Membership oracle `x -> [x in G]`.
pub type MembershipFn = dyn Fn(&[f64]) -> bool + Send + Sync;

/// Default cap on rejection proposals per uniform draw from an oracle body.
pub const DEFAULT_REJECTION_BUDGET: u64 = 10_000_000;

const BISECTION_STEPS: usize = 60;
const UNIT_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GeometryError {
    #[error("invalid shape: {0}")]
    InvalidShape(String),
    #[error("point is outside the body")]
    PointOutside,
    #[error("direction is not a unit vector (norm {norm})")]
    BadDirection { norm: f64 },
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("no member found in {budget} rejection proposals")]
    RejectionBudgetExceeded { budget: u64 },
}

pub type Result<T> = std::result::Result<T, GeometryError>;

#[derive(Clone)]
pub enum Shape {
    Ball { radius: f64 },
    /// `[-half_width, half_width]^d`.
    Box { half_width: f64 },
    Ellipsoid { semi_axes: Vec<f64> },
    Oracle { membership: Arc<MembershipFn>, volume: Option<f64> },
}

impl fmt::Debug for Shape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Shape::Ball { radius } => f.debug_struct("Ball").field("radius", radius).finish(),
            Shape::Box { half_width } => {
                f.debug_struct("Box").field("half_width", half_width).finish()
            }
            Shape::Ellipsoid { semi_axes } => {
                f.debug_struct("Ellipsoid").field("semi_axes", semi_axes).finish()
            }
            Shape::Oracle { volume, .. } => {
                f.debug_struct("Oracle").field("volume", volume).finish_non_exhaustive()
            }
        }
    }
}

/// Shape selector for [`make_body`].
#[derive(Debug, Clone, PartialEq)]
pub enum BodyKind {
    Ball(f64),
    Box(f64),
    Ellipsoid(Vec<f64>),
}

/// Config form `{"kind": "ball" | "box" | "ellipsoid", "dim": d, "param": ...}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BodySpec {
    pub kind: BodySpecKind,
    pub dim: usize,
    pub param: BodyParam,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BodySpecKind {
    Ball,
    Box,
    Ellipsoid,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum BodyParam {
    Scalar(f64),
    Axes(Vec<f64>),
}

impl BodySpec {
    pub fn build(&self) -> Result<ConvexBody> {
        let kind = match (self.kind, &self.param) {
            (BodySpecKind::Ball, BodyParam::Scalar(r)) => BodyKind::Ball(*r),
            (BodySpecKind::Box, BodyParam::Scalar(s)) => BodyKind::Box(*s),
            (BodySpecKind::Ellipsoid, BodyParam::Axes(a)) => BodyKind::Ellipsoid(a.clone()),
            (BodySpecKind::Ellipsoid, BodyParam::Scalar(a)) => {
                BodyKind::Ellipsoid(vec![*a; self.dim])
            }
            (kind, BodyParam::Axes(_)) => {
                return Err(GeometryError::InvalidShape(format!(
                    "{kind:?} takes a scalar parameter"
                )))
            }
        };
        make_body(kind, self.dim)
    }
}

/// Closed chord parameter range `{t : x + t theta in G}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Interval {
    pub t_min: f64,
    pub t_max: f64,
}

impl Interval {
    pub fn len(&self) -> f64 {
        self.t_max - self.t_min
    }

    pub fn is_empty(&self) -> bool {
        self.len() <= 0.0
    }
}

#[derive(Clone, Debug)]
pub struct ConvexBody {
    dim: usize,
    outer_radius: f64,
    shape: Shape,
    rejection_budget: u64,
}

/// Builds a built-in body and checks that it contains the unit ball.
pub fn make_body(kind: BodyKind, dim: usize) -> Result<ConvexBody> {
    if dim == 0 {
        return Err(GeometryError::InvalidShape("dimension must be at least 1".into()));
    }
    let (shape, outer_radius) = match kind {
        BodyKind::Ball(r) => {
            if !(r >= 1.0 && r.is_finite()) {
                return Err(GeometryError::InvalidShape(format!(
                    "ball radius {r} does not contain the unit ball"
                )));
            }
            (Shape::Ball { radius: r }, r)
        }
        BodyKind::Box(s) => {
            if !(s >= 1.0 && s.is_finite()) {
                return Err(GeometryError::InvalidShape(format!(
                    "box half-width {s} does not contain the unit ball"
                )));
            }
            (Shape::Box { half_width: s }, s * (dim as f64).sqrt())
        }
        BodyKind::Ellipsoid(axes) => {
            if axes.len() != dim {
                return Err(GeometryError::DimensionMismatch { expected: dim, found: axes.len() });
            }
            if let Some(a) = axes.iter().find(|a| !(**a >= 1.0 && a.is_finite())) {
                return Err(GeometryError::InvalidShape(format!(
                    "semi-axis {a} does not contain the unit ball"
                )));
            }
            let r = axes.iter().copied().fold(1.0, f64::max);
            (Shape::Ellipsoid { semi_axes: axes }, r)
        }
    };
    Ok(ConvexBody { dim, outer_radius, shape, rejection_budget: DEFAULT_REJECTION_BUDGET })
}

impl ConvexBody {
    /// Oracle-only body inside `outer_radius * B_d`. The caller vouches for convexity
    /// and the sandwich property; [`ConvexBody::check_sandwich`] samples it.
    pub fn oracle<F>(dim: usize, outer_radius: f64, membership: F) -> Result<Self>
    where
        F: Fn(&[f64]) -> bool + Send + Sync + 'static,
    {
        if dim == 0 || !(outer_radius >= 1.0 && outer_radius.is_finite()) {
            return Err(GeometryError::InvalidShape(format!(
                "oracle body needs dim >= 1 and outer radius >= 1 (got {dim}, {outer_radius})"
            )));
        }
        Ok(Self {
            dim,
            outer_radius,
            shape: Shape::Oracle { membership: Arc::new(membership), volume: None },
            rejection_budget: DEFAULT_REJECTION_BUDGET,
        })
    }

    /// Attaches a known volume to an oracle body.
    pub fn with_volume(mut self, v: f64) -> Self {
        if let Shape::Oracle { volume, .. } = &mut self.shape {
            *volume = Some(v);
        }
        self
    }

    pub fn with_rejection_budget(mut self, budget: u64) -> Self {
        self.rejection_budget = budget.max(1);
        self
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn outer_radius(&self) -> f64 {
        self.outer_radius
    }

    pub fn shape(&self) -> &Shape {
        &self.shape
    }

    pub fn is_oracle(&self) -> bool {
        matches!(self.shape, Shape::Oracle { .. })
    }

    /// Half-width of the smallest centred axis-aligned box containing the body.
    pub fn bounding_half_width(&self) -> f64 {
        match &self.shape {
            Shape::Ball { radius } => *radius,
            Shape::Box { half_width } => *half_width,
            Shape::Ellipsoid { semi_axes } => semi_axes.iter().copied().fold(0.0, f64::max),
            Shape::Oracle { .. } => self.outer_radius,
        }
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        if x.len() != self.dim {
            return false;
        }
        match &self.shape {
            Shape::Ball { radius } => norm_sq(x) <= radius * radius,
            Shape::Box { half_width } => x.iter().all(|v| v.abs() <= *half_width),
            Shape::Ellipsoid { semi_axes } => {
                x.iter().zip(semi_axes).map(|(v, a)| (v / a).powi(2)).sum::<f64>() <= 1.0
            }
            Shape::Oracle { membership, .. } => membership(x),
        }
    }

    pub fn volume(&self) -> Option<f64> {
        match &self.shape {
            Shape::Ball { radius } => Some(unit_ball_volume(self.dim) * radius.powi(self.dim as i32)),
            Shape::Box { half_width } => Some((2.0 * half_width).powi(self.dim as i32)),
            Shape::Ellipsoid { semi_axes } => {
                Some(unit_ball_volume(self.dim) * semi_axes.iter().product::<f64>())
            }
            Shape::Oracle { volume, .. } => *volume,
        }
    }

    /// Chord of the body through `x` in direction `theta`.
    ///
    /// Oracle bodies bisect along each half-ray over `[0, 2r]`; the returned
    /// endpoints are the last verified members, within `1e-9 r` of the boundary.
    pub fn chord(&self, x: &[f64], theta: &[f64]) -> Result<Interval> {
        self.check_dim(x.len())?;
        self.check_dim(theta.len())?;
        let norm = norm_sq(theta).sqrt();
        if (norm - 1.0).abs() > UNIT_TOL {
            return Err(GeometryError::BadDirection { norm });
        }
        if !self.contains(x) {
            return Err(GeometryError::PointOutside);
        }
        let interval = match &self.shape {
            Shape::Ball { radius } => quadratic_chord(1.0, dot(x, theta), norm_sq(x) - radius * radius),
            Shape::Ellipsoid { semi_axes } => {
                let a: f64 = theta.iter().zip(semi_axes).map(|(t, s)| (t / s).powi(2)).sum();
                let b: f64 = x.iter().zip(theta).zip(semi_axes).map(|((v, t), s)| v * t / (s * s)).sum();
                let c: f64 = x.iter().zip(semi_axes).map(|(v, s)| (v / s).powi(2)).sum::<f64>() - 1.0;
                quadratic_chord(a, b, c)
            }
            Shape::Box { half_width } => {
                let mut lo = f64::NEG_INFINITY;
                let mut hi = f64::INFINITY;
                for (v, t) in x.iter().zip(theta) {
                    if *t != 0.0 {
                        let a = (-half_width - v) / t;
                        let b = (half_width - v) / t;
                        lo = lo.max(a.min(b));
                        hi = hi.min(a.max(b));
                    }
                }
                Interval { t_min: lo.min(0.0), t_max: hi.max(0.0) }
            }
            Shape::Oracle { membership, .. } => {
                let reach = 2.0 * self.outer_radius;
                let t_max = self.bisect_ray(membership.as_ref(), x, theta, 1.0, reach);
                let t_min = -self.bisect_ray(membership.as_ref(), x, theta, -1.0, reach);
                Interval { t_min, t_max }
            }
        };
        Ok(interval)
    }

    fn bisect_ray(&self, member: &MembershipFn, x: &[f64], theta: &[f64], sign: f64, reach: f64) -> f64 {
        let at = |t: f64| -> Vec<f64> { x.iter().zip(theta).map(|(v, d)| v + sign * t * d).collect() };
        if member(&at(reach)) {
            return reach;
        }
        let (mut inside, mut outside) = (0.0, reach);
        for _ in 0..BISECTION_STEPS {
            let mid = 0.5 * (inside + outside);
            if member(&at(mid)) {
                inside = mid;
            } else {
                outside = mid;
            }
        }
        inside
    }

    /// Exact uniform point in the body and the number of proposals used
    /// (1 for built-in bodies, rejection from `r B_d` for oracle bodies).
    pub fn uniform_in_body(&self, rng: &mut dyn RngCore) -> Result<(Point, u64)> {
        match &self.shape {
            Shape::Ball { radius } => Ok((uniform_in_ball(self.dim, *radius, rng), 1)),
            Shape::Box { half_width } => {
                let p = (0..self.dim).map(|_| rng.random_range(-*half_width..=*half_width)).collect();
                Ok((p, 1))
            }
            Shape::Ellipsoid { semi_axes } => {
                let mut p = uniform_in_ball(self.dim, 1.0, rng);
                p.iter_mut().zip(semi_axes).for_each(|(v, a)| *v *= a);
                Ok((p, 1))
            }
            Shape::Oracle { membership, .. } => {
                for trial in 1..=self.rejection_budget {
                    let p = uniform_in_ball(self.dim, self.outer_radius, rng);
                    if membership(&p) {
                        return Ok((p, trial));
                    }
                }
                Err(GeometryError::RejectionBudgetExceeded { budget: self.rejection_budget })
            }
        }
    }

    /// Samples the sandwich property: `n` unit-ball points must be members and
    /// `n` points with `r < |x| <= 2r` must not be.
    pub fn check_sandwich(&self, n: usize, rng: &mut dyn RngCore) -> bool {
        let inner_ok = (0..n).all(|_| self.contains(&uniform_in_ball(self.dim, 1.0, rng)));
        let outer_ok = (0..n).all(|_| {
            let theta = sphere_direction(self.dim, rng);
            let s = self.outer_radius * (1.0 + 1e-9 + rng.random::<f64>());
            !self.contains(&theta.iter().map(|t| t * s).collect::<Vec<_>>())
        });
        inner_ok && outer_ok
    }

    /// Samples convexity: for `n` member pairs and random `lambda`, the convex
    /// combination must be a member.
    pub fn check_convexity(&self, n: usize, rng: &mut dyn RngCore) -> Result<bool> {
        for _ in 0..n {
            let (x, _) = self.uniform_in_body(rng)?;
            let (y, _) = self.uniform_in_body(rng)?;
            let lambda: f64 = rng.random();
            let z: Vec<f64> = x.iter().zip(&y).map(|(a, b)| lambda * a + (1.0 - lambda) * b).collect();
            if !self.contains(&z) {
                return Ok(false);
            }
        }
        Ok(true)
    }

    fn check_dim(&self, found: usize) -> Result<()> {
        if found != self.dim {
            return Err(GeometryError::DimensionMismatch { expected: self.dim, found });
        }
        Ok(())
    }
}

/// Chord of `{t : a t^2 + 2 b t + c <= 0}` with `a > 0` and `c <= 0`.
fn quadratic_chord(a: f64, b: f64, c: f64) -> Interval {
    let disc = (b * b - a * c).max(0.0).sqrt();
    // Cancellation-free roots.
    let q = -(b + b.signum() * disc);
    let (r1, r2) = if q == 0.0 { (0.0, 0.0) } else { (q / a, c / q) };
    Interval { t_min: r1.min(r2).min(0.0), t_max: r1.max(r2).max(0.0) }
}

/// Uniform direction on the sphere `∂B_d` from a normalised Gaussian vector.
pub fn sphere_direction(d: usize, rng: &mut dyn RngCore) -> Point {
    assert!(d >= 1, "dimension must be at least 1");
    loop {
        let g: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
        let n = norm_sq(&g).sqrt();
        if n > 1e-300 {
            return g.into_iter().map(|v| v / n).collect();
        }
    }
}

/// Uniform point in the ball of the given radius; draws the direction first, then the radius.
pub fn uniform_in_ball(d: usize, radius: f64, rng: &mut dyn RngCore) -> Point {
    let theta = sphere_direction(d, rng);
    let u: f64 = rng.random();
    let s = radius * u.powf(1.0 / d as f64);
    theta.into_iter().map(|v| v * s).collect()
}

/// Volume of the Euclidean unit ball via `V_d = V_{d-2} 2 pi / d`.
pub fn unit_ball_volume(d: usize) -> f64 {
    let (mut v, start) = if d.is_multiple_of(2) { (1.0, 2) } else { (2.0, 3) };
    let mut k = start;
    while k <= d {
        v *= 2.0 * PI / k as f64;
        k += 2;
    }
    v
}

pub fn norm_sq(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum()
}

pub fn dot(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| a * b).sum()
}
