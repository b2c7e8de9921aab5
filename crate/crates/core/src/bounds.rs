//! Closed-form error bounds, burn-in rules and sampler plans.
//!
//! Burn-in lengths go through exact rational arithmetic: every `f64` input is
//! read as the shortest decimal that round-trips to it, so a constant such as
//! `4.51e15 * 4.16` is evaluated without binary rounding before the ceiling.

use std::collections::BTreeMap;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{ToPrimitive, Zero};
use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum BoundsError {
    #[error("lambda must be < 1, got {0}")]
    LambdaOutOfRange(f64),
    #[error("gamma must lie in [0, 1), got {0}")]
    GammaOutOfRange(f64),
    #[error("phi must lie in [0, 1], got {0}")]
    PhiOutOfRange(f64),
    #[error("C_nu must be >= 0, got {0}")]
    CnuOutOfRange(f64),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("burn-in does not fit in 128 bits")]
    Overflow,
}

pub type Result<T> = std::result::Result<T, BoundsError>;

/// Whether a plan bounds the error `e` or the squared error `e^2`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundKind {
    Error,
    SquaredError,
}

/// Exact rational value of the shortest decimal representation of `x`.
pub fn decimal_rational(x: f64) -> BigRational {
    assert!(x.is_finite(), "decimal_rational needs a finite value");
    let s = format!("{x:e}");
    let (mantissa, exp) = s.split_once('e').expect("exponent form");
    let exp: i64 = exp.parse().expect("integer exponent");
    let negative = mantissa.starts_with('-');
    let digits = mantissa.trim_start_matches('-');
    let (int_part, frac_part) = digits.split_once('.').unwrap_or((digits, ""));
    let all: BigInt = format!("{int_part}{frac_part}").parse().expect("decimal digits");
    let scale = exp - frac_part.len() as i64;
    let ten = BigInt::from(10);
    let mut r = if scale >= 0 {
        BigRational::from_integer(all * num_traits::pow(ten, scale as usize))
    } else {
        BigRational::new(all, num_traits::pow(ten, (-scale) as usize))
    };
    if negative {
        r = -r;
    }
    r
}

fn ceil_u128(x: &BigRational) -> Result<u128> {
    if *x <= BigRational::zero() {
        return Ok(0);
    }
    x.ceil().to_integer().to_u128().ok_or(BoundsError::Overflow)
}

fn rat(x: f64) -> BigRational {
    decimal_rational(x)
}

fn check_gamma(gamma: f64) -> Result<()> {
    if (0.0..1.0).contains(&gamma) {
        Ok(())
    } else {
        Err(BoundsError::GammaOutOfRange(gamma))
    }
}

fn check_n(n: u64) -> Result<()> {
    if n == 0 {
        Err(BoundsError::InvalidParameter("n must be at least 1".into()))
    } else {
        Ok(())
    }
}

/// `2 / (n (1 - lambda))`, the mean square error of a chain started at stationarity.
pub fn stationary_mse_bound(n: u64, lambda: f64) -> Result<f64> {
    check_n(n)?;
    if lambda.is_nan() || lambda >= 1.0 {
        return Err(BoundsError::LambdaOutOfRange(lambda));
    }
    Ok(2.0 / (n as f64 * (1.0 - lambda)))
}

/// `2 / (n (1 - lambda)) + 2 c_nu gamma^n0 / (n^2 (1 - gamma)^2)`.
pub fn mse_bound(n: u64, n0: u64, lambda: f64, gamma: f64, c_nu: f64) -> Result<f64> {
    let stationary = stationary_mse_bound(n, lambda)?;
    check_gamma(gamma)?;
    if c_nu.is_nan() || c_nu < 0.0 {
        return Err(BoundsError::CnuOutOfRange(c_nu));
    }
    let nf = n as f64;
    let decay = if c_nu == 0.0 { 0.0 } else { gamma.powf(n0 as f64) };
    Ok(stationary + 2.0 * c_nu * decay / (nf * nf * (1.0 - gamma).powi(2)))
}

/// `C_nu = M * ||d nu / d pi - 1||_inf`, used with the `p = 2` form of the bound.
pub fn c_nu_p2(m: f64, sup_norm: f64) -> Result<f64> {
    if !(m >= 0.0 && sup_norm >= 0.0) {
        return Err(BoundsError::InvalidParameter("M and the sup norm must be nonnegative".into()));
    }
    Ok(m * sup_norm)
}

/// `C_nu = 64 * ||d nu / d pi - 1||_2`, used with the `p = 4` form of the bound.
pub fn c_nu_p4(l2_norm: f64) -> Result<f64> {
    if l2_norm.is_nan() || l2_norm < 0.0 {
        return Err(BoundsError::InvalidParameter("the L2 norm must be nonnegative".into()));
    }
    Ok(64.0 * l2_norm)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct BurnIn {
    pub n0: u128,
    /// Set when `c_nu < 1`: the logarithm is negative and `n0` is reported as 0.
    pub invalid_c_nu: bool,
}

/// `ceil(ln(c_nu) / (1 - gamma))`.
pub fn burn_in(c_nu: f64, gamma: f64) -> Result<BurnIn> {
    check_gamma(gamma)?;
    if c_nu.is_nan() || c_nu <= 0.0 || c_nu.is_infinite() {
        return Err(BoundsError::CnuOutOfRange(c_nu));
    }
    if c_nu < 1.0 {
        return Ok(BurnIn { n0: 0, invalid_c_nu: true });
    }
    burn_in_from_log(c_nu.ln(), gamma)
}

/// [`burn_in`] with `ln(c_nu)` supplied directly.
pub fn burn_in_from_log(log_c_nu: f64, gamma: f64) -> Result<BurnIn> {
    check_gamma(gamma)?;
    if log_c_nu.is_nan() {
        return Err(BoundsError::CnuOutOfRange(log_c_nu));
    }
    if log_c_nu < 0.0 {
        return Ok(BurnIn { n0: 0, invalid_c_nu: true });
    }
    let one = BigRational::from_integer(1.into());
    let x = rat(log_c_nu) / (one - rat(gamma));
    Ok(BurnIn { n0: ceil_u128(&x)?, invalid_c_nu: false })
}

/// `(phi^2 / 2, 2 phi)`, the range of the spectral gap allowed by the conductance.
pub fn cheeger_bracket(phi: f64) -> Result<(f64, f64)> {
    if !(0.0..=1.0).contains(&phi) {
        return Err(BoundsError::PhiOutOfRange(phi));
    }
    Ok((phi * phi / 2.0, 2.0 * phi))
}

/// A certified error guarantee `bound(n) = a / sqrt(n) + b / n + c / n^2` with
/// the burn-in and spectral constants behind it.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SamplerPlan {
    pub provenance: String,
    pub bound_kind: BoundKind,
    pub gamma: f64,
    pub c_nu: Option<f64>,
    #[serde(serialize_with = "serialize_n0")]
    pub n0: u128,
    pub conductance_lb: Option<f64>,
    pub gap_lb: f64,
    pub delta: Option<f64>,
    pub initial: String,
    pub coefficients: [f64; 3],
    pub warnings: Vec<String>,
}

/// JSON integers stop at `u64::MAX`; larger burn-ins are written as exact decimal strings.
fn serialize_n0<S: serde::Serializer>(n0: &u128, s: S) -> std::result::Result<S::Ok, S::Error> {
    match u64::try_from(*n0) {
        Ok(v) => s.serialize_u64(v),
        Err(_) => s.serialize_str(&n0.to_string()),
    }
}

impl SamplerPlan {
    pub fn bound(&self, n: u64) -> f64 {
        let nf = n as f64;
        let [a, b, c] = self.coefficients;
        a / nf.sqrt() + b / nf + c / (nf * nf)
    }

    /// `{provenance, bound_kind, gamma, c_nu, n0, ..., bound_at: {n: bound(n)}}`.
    pub fn to_json(&self, ns: &[u64]) -> serde_json::Value {
        let mut v = serde_json::to_value(self).expect("plan serializes");
        let at: BTreeMap<String, f64> = ns.iter().map(|n| (n.to_string(), self.bound(*n))).collect();
        v["bound_at"] = serde_json::to_value(at).expect("map serializes");
        v
    }
}

fn check_dim(d: usize) -> Result<()> {
    if d == 0 {
        Err(BoundsError::InvalidParameter("d must be at least 1".into()))
    } else {
        Ok(())
    }
}

/// Hit-and-run on a body with `B_d ⊂ G ⊂ r B_d`, started uniformly on `B_d`.
pub fn har_plan(d: usize, r: f64) -> Result<SamplerPlan> {
    check_dim(d)?;
    if !(r >= 1.0 && r.is_finite()) {
        return Err(BoundsError::InvalidParameter(format!("r must be a finite value >= 1, got {r}")));
    }
    let dr = d as f64 * r;
    let conductance_lb = 2f64.powi(-25) / dr;
    let gap_lb = 2f64.powi(-51) / (dr * dr);
    let df = rat(d as f64);
    let rr = rat(r);
    let n0 = rat(4.51e15) * &df * &df * &rr * &rr * (&df * rat(r.ln()) + rat(4.16));
    Ok(SamplerPlan {
        provenance: "hit_and_run".into(),
        bound_kind: BoundKind::Error,
        gamma: 1.0 - gap_lb,
        c_nu: None,
        n0: ceil_u128(&n0)?,
        conductance_lb: Some(conductance_lb),
        gap_lb,
        delta: None,
        initial: "uniform_unit_ball".into(),
        coefficients: [9.5e7 * dr, 6.4e15 * dr * dr, 0.0],
        warnings: Vec::new(),
    })
}

/// Independent Metropolis with uniform proposals for `1 <= rho <= C` on a body of volume `vol`.
pub fn indep_mh_plan(c: f64, vol: f64) -> Result<SamplerPlan> {
    if !(c >= 1.0 && c.is_finite()) {
        return Err(BoundsError::InvalidParameter(format!("C must be a finite value >= 1, got {c}")));
    }
    if !(vol > 0.0 && vol.is_finite()) {
        return Err(BoundsError::InvalidParameter(format!("vol must be positive and finite, got {vol}")));
    }
    let mut warnings = Vec::new();
    let mut gap_lb = 1.0 / (c * vol);
    if gap_lb > 1.0 {
        warnings.push(format!(
            "GammaDegenerate: 1/(C vol) = {gap_lb} exceeds 1, so gamma leaves [0, 1); gap bound clamped to 1"
        ));
        gap_lb = 1.0;
    }
    let cv = rat(c) * rat(vol);
    let n0 = &cv * rat((2.0 * c).ln());
    let cv = c * vol;
    Ok(SamplerPlan {
        provenance: "independent_metropolis".into(),
        bound_kind: BoundKind::SquaredError,
        gamma: 1.0 - gap_lb,
        c_nu: Some(2.0 * c),
        n0: ceil_u128(&n0)?,
        conductance_lb: None,
        gap_lb,
        delta: None,
        initial: "uniform_body".into(),
        coefficients: [0.0, 2.0 * cv, 4.0 * cv * cv],
        warnings,
    })
}

/// Lazy ball-walk Metropolis for an `alpha`-log-Lipschitz log-concave density on `B_d`.
pub fn ball_walk_plan(alpha: f64, d: usize) -> Result<SamplerPlan> {
    check_dim(d)?;
    if !(alpha > 0.0 && alpha.is_finite()) {
        return Err(BoundsError::InvalidParameter(format!("alpha must be positive and finite, got {alpha}")));
    }
    let d1 = (d + 1) as f64;
    let s = d1.sqrt();
    let delta = (1.0 / s).min(1.0 / alpha);
    let conductance_lb = 0.0025 / s * delta;
    let gap_lb = conductance_lb * conductance_lb / 4.0;
    let a = rat(alpha);
    let d1r = rat(d1);
    let a2 = &a * &a;
    let m = if a2 > d1r { a2 } else { d1r.clone() };
    let two = rat(2.0);
    let n0 = rat(5.92e6) * &d1r * m * (two * &a + rat(4.16));
    Ok(SamplerPlan {
        provenance: "lazy_ball_walk".into(),
        bound_kind: BoundKind::Error,
        gamma: 1.0 - gap_lb,
        c_nu: None,
        n0: ceil_u128(&n0)?,
        conductance_lb: Some(conductance_lb),
        gap_lb,
        delta: Some(delta),
        initial: "uniform_unit_ball".into(),
        coefficients: [1089.0 * s * alpha.max(s), 8.38e5 * d1 * (alpha * alpha).max(d1), 0.0],
        warnings: Vec::new(),
    })
}

/// Minimal worst-case error of any randomized algorithm with `n` evaluations on
/// densities with `1 <= rho <= C`.
pub fn lower_bound(c: f64, n: u64) -> Result<f64> {
    check_n(n)?;
    if !(c >= 1.0 && c.is_finite()) {
        return Err(BoundsError::InvalidParameter(format!("C must be a finite value >= 1, got {c}")));
    }
    let k = std::f64::consts::SQRT_2 / 6.0;
    let two_n = 2.0 * n as f64;
    Ok(if two_n >= c - 1.0 { k * (c / two_n).sqrt() } else { k * 3.0 * c / (c + two_n - 1.0) })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::E;

    #[test]
    fn decimal_parsing() {
        assert_eq!(decimal_rational(0.9), BigRational::new(9.into(), 10.into()));
        assert_eq!(decimal_rational(4.51e15), BigRational::from_integer(4_510_000_000_000_000u64.into()));
        assert_eq!(decimal_rational(-1.25e-3), BigRational::new((-125).into(), 100_000.into()));
        assert_eq!(decimal_rational(0.0), BigRational::zero());
    }

    #[test]
    fn stationary_examples() {
        assert!((stationary_mse_bound(100, 0.0).unwrap() - 0.02).abs() < 1e-15);
        assert!((stationary_mse_bound(100, 0.5).unwrap() - 0.04).abs() < 1e-15);
        assert_eq!(stationary_mse_bound(100, 1.0), Err(BoundsError::LambdaOutOfRange(1.0)));
        assert!(stationary_mse_bound(0, 0.0).is_err());
    }

    #[test]
    fn mse_examples() {
        assert_eq!(mse_bound(100, 10, 0.3, 0.5, 0.0).unwrap(), stationary_mse_bound(100, 0.3).unwrap());
        let v = mse_bound(100, 10, 0.5, 0.5, 2.0).unwrap();
        assert!((v - (0.04 + 4.0 * 0.5f64.powi(10) / 2500.0)).abs() < 1e-15);
        let t10 = mse_bound(100, 10, 0.5, 0.5, 2.0).unwrap() - 0.04;
        let t20 = mse_bound(100, 20, 0.5, 0.5, 2.0).unwrap() - 0.04;
        assert!((t20 / t10 - 2f64.powi(-10)).abs() < 1e-9);
        assert!(mse_bound(10, 1, 0.5, 1.0, 1.0).is_err());
        assert!(mse_bound(10, 1, 0.5, 0.5, -1.0).is_err());
    }

    #[test]
    fn c_nu_constructors() {
        assert_eq!(c_nu_p2(3.0, 0.5).unwrap(), 1.5);
        assert_eq!(c_nu_p4(0.25).unwrap(), 16.0);
        assert!(c_nu_p4(-1.0).is_err());
    }

    #[test]
    fn burn_in_examples() {
        assert_eq!(burn_in(1.0, 0.5).unwrap(), BurnIn { n0: 0, invalid_c_nu: false });
        assert_eq!(burn_in(2.0, 0.5).unwrap().n0, 2);
        assert_eq!(burn_in(4.0, 0.5).unwrap().n0, 3);
        assert_eq!(burn_in(10f64.exp(), 0.9).unwrap().n0, 100);
        assert_eq!(burn_in_from_log(10.0, 0.9).unwrap().n0, 100);
        assert_eq!(burn_in(0.5, 0.5).unwrap(), BurnIn { n0: 0, invalid_c_nu: true });
        assert!(burn_in(2.0, 1.0).is_err());
    }

    #[test]
    fn cheeger_examples() {
        assert_eq!(cheeger_bracket(0.0).unwrap(), (0.0, 0.0));
        let (lo, hi) = cheeger_bracket(0.3).unwrap();
        assert!((lo - 0.045).abs() < 1e-15 && (hi - 0.6).abs() < 1e-15);
        assert_eq!(cheeger_bracket(1.0).unwrap(), (0.5, 2.0));
        assert!(cheeger_bracket(1.5).is_err());
    }

    #[test]
    fn hit_and_run_constants() {
        let p = har_plan(1, 1.0).unwrap();
        assert_eq!(p.n0, 18_761_600_000_000_000);
        assert_eq!(p.conductance_lb, Some(2f64.powi(-25)));
        assert_eq!(p.gap_lb, 2f64.powi(-51));
        assert_eq!(p.bound_kind, BoundKind::Error);
        assert!((p.bound(10_000) - (9.5e5 + 6.4e11)).abs() < 1e-3);
        assert!(har_plan(0, 1.0).is_err());
        assert!(har_plan(1, 0.5).is_err());
    }

    #[test]
    fn independent_constants() {
        let p = indep_mh_plan(1.0, 1.0).unwrap();
        assert_eq!(p.gamma, 0.0);
        assert_eq!(p.n0, 1);
        assert_eq!(p.bound(10), 0.2 + 0.04);
        let p = indep_mh_plan(E, 4.0).unwrap();
        assert_eq!(p.n0, 19);
        assert_eq!(p.bound_kind, BoundKind::SquaredError);
        assert!((p.bound(10_000) - 2.179e-3).abs() < 5e-7, "{}", p.bound(10_000));
        let p = indep_mh_plan(2.0, 0.25).unwrap();
        assert_eq!(p.gap_lb, 1.0);
        assert!(p.warnings[0].starts_with("GammaDegenerate"));
    }

    #[test]
    fn ball_walk_constants() {
        let p = ball_walk_plan(1.0, 3).unwrap();
        assert_eq!(p.delta, Some(0.5));
        assert!((p.conductance_lb.unwrap() - 0.000625).abs() < 1e-18);
        assert_eq!(p.n0, 583_475_200);
        assert!(ball_walk_plan(0.0, 3).is_err());
    }

    #[test]
    fn lower_bound_branches() {
        let k = 2f64.sqrt() / 6.0;
        assert!((lower_bound(2.0, 10).unwrap() - k * 0.1f64.sqrt()).abs() < 1e-12);
        assert!((lower_bound(2.0, 10).unwrap() - 0.07454).abs() < 1e-5);
        assert!((lower_bound(101.0, 10).unwrap() - k * 303.0 / 120.0).abs() < 1e-12);
        assert!((lower_bound(101.0, 10).unwrap() - 0.5952).abs() < 1e-4);
        assert!((lower_bound(1.0, 50).unwrap() - k * 0.01f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn plan_json_shape() {
        let v = har_plan(1, 1.0).unwrap().to_json(&[100, 10_000]);
        assert_eq!(v["n0"], serde_json::json!(18_761_600_000_000_000u64));
        assert_eq!(v["provenance"], "hit_and_run");
        assert!(v["bound_at"]["10000"].is_number());
        assert!(v["c_nu"].is_null());
    }

    #[test]
    fn burn_in_beyond_u64_serializes_exactly() {
        let p = har_plan(10, 2.0).unwrap();
        assert!(p.n0 > u64::MAX as u128);
        assert_eq!(p.to_json(&[10_000])["n0"], serde_json::json!(p.n0.to_string()));
    }

    proptest! {
        #[test]
        fn plan_bounds_decrease(d in 1usize..20, r in 1.0f64..50.0, c in 1.0f64..50.0, vol in 0.1f64..100.0,
                                alpha in 0.01f64..20.0, n in 1u64..1_000_000) {
            let plans = [har_plan(d, r).unwrap(), indep_mh_plan(c, vol).unwrap(), ball_walk_plan(alpha, d).unwrap()];
            for p in &plans {
                prop_assert!(p.bound(n + 1) < p.bound(n));
                // gamma = 1 - gap_lb may round to 1 in f64 when gap_lb is below 2^-53.
                prop_assert!(p.gap_lb > 0.0 && p.gap_lb <= 1.0);
                prop_assert!(p.gamma <= 1.0 && p.gamma >= 0.0);
                prop_assert!(!p.to_json(&[n])["n0"].is_null());
            }
        }

        #[test]
        fn burn_in_interval(c in 1.0f64..1e6, gamma in 0.01f64..0.999) {
            let b = burn_in(c, gamma).unwrap();
            prop_assert!(b.n0 as f64 >= c.ln() / (1.0 / gamma).ln() - 1e-9);
            prop_assert!(b.n0 as f64 + 1.0 > c.ln() / (1.0 - gamma));
        }

        #[test]
        fn independent_plan_dominates_general_bound(c in 1.0f64..20.0, vol in 1.0f64..20.0, n in 1u64..100_000) {
            let p = indep_mh_plan(c, vol).unwrap();
            let n0 = burn_in(p.c_nu.unwrap(), p.gamma).unwrap().n0;
            prop_assert!(n0.abs_diff(p.n0) <= 1);
            let general = mse_bound(n, p.n0 as u64, p.gamma, p.gamma, p.c_nu.unwrap()).unwrap();
            prop_assert!(general <= p.bound(n) * (1.0 + 1e-12));
        }

        #[test]
        fn bracket_ordered(phi in 0.0f64..=1.0) {
            let (lo, hi) = cheeger_bracket(phi).unwrap();
            prop_assert!(lo <= hi);
        }

        #[test]
        fn stationary_bound_decreases(n in 1u64..1_000_000, lambda in -1.0f64..0.999) {
            prop_assert!(stationary_mse_bound(n + 1, lambda).unwrap() < stationary_mse_bound(n, lambda).unwrap());
        }
    }
}
