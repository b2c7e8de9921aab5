//! Exact finite-state laboratory for reversible transition kernels.
//!
//! A [`FiniteChain`] holds a row-stochastic kernel `K` together with its
//! stationary vector `pi`. The Markov operator acts on functions as
//! `(Pf)(x) = sum_y K(x, y) f(y)` and the mean operator is `Sf = sum_x pi(x) f(x)`.
//! All spectral quantities are computed on the symmetrized matrix
//! `D^{1/2} K D^{-1/2}` with `D = diag(pi)`, which is similar to `P` and symmetric
//! under detailed balance.
//!
//! The spectral quantity `lambda` is the largest eigenvalue of `P - S` on the
//! orthogonal complement of the constants, i.e. the second eigenvalue of `P`.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Largest state count for which subset enumeration is attempted.
pub const MAX_ENUMERATION_STATES: usize = 20;

const STOCHASTIC_TOL: f64 = 1e-12;
const STATIONARY_TOL: f64 = 1e-12;
const NULL_SPACE_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SpectralError {
    #[error("kernel is empty")]
    Empty,
    #[error("kernel is not square: row {row} has {len} entries, expected {expected}")]
    NotSquare { row: usize, len: usize, expected: usize },
    #[error("row {row} is not a probability vector (sum {sum}, min entry {min})")]
    NotStochastic { row: usize, sum: f64, min: f64 },
    #[error("detailed balance fails at ({x}, {y}) by {defect:e}")]
    NotReversible { x: usize, y: usize, defect: f64 },
    #[error("reducible chain: stationary distribution is not unique or not strictly positive")]
    Reducible,
    #[error("{m} states exceed the enumeration limit of {MAX_ENUMERATION_STATES}")]
    TooManyStates { m: usize },
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("unsupported operator norm p = {0}; only 1 and 2 are available")]
    UnsupportedP(u32),
    #[error("operator power must be at least 1")]
    ZeroPower,
    #[error("spectral gap is zero; the (alpha, M) fit is undefined")]
    ZeroGap,
    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),
    #[error("could not parse transition matrix: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, SpectralError>;

/// Probability vector on `{0, .., m-1}`.
#[derive(Debug, Clone, PartialEq)]
pub struct DistributionVector(Vec<f64>);

impl DistributionVector {
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        if weights.is_empty() {
            return Err(SpectralError::InvalidDistribution("empty".into()));
        }
        if let Some(w) = weights.iter().find(|w| !w.is_finite() || **w < 0.0) {
            return Err(SpectralError::InvalidDistribution(format!(
                "entry {w} is negative or not finite"
            )));
        }
        let sum: f64 = weights.iter().sum();
        if (sum - 1.0).abs() > STOCHASTIC_TOL {
            return Err(SpectralError::InvalidDistribution(format!(
                "mass {sum} differs from 1"
            )));
        }
        Ok(Self(weights))
    }

    pub fn point_mass(m: usize, state: usize) -> Result<Self> {
        if state >= m {
            return Err(SpectralError::DimensionMismatch { expected: m, found: state + 1 });
        }
        let mut w = vec![0.0; m];
        w[state] = 1.0;
        Ok(Self(w))
    }

    pub fn weights(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Reversible, irreducible transition kernel on `m` states with its stationary vector.
#[derive(Debug, Clone, PartialEq)]
pub struct FiniteChain {
    kernel: DMatrix<f64>,
    pi: DVector<f64>,
}

impl FiniteChain {
    pub fn m(&self) -> usize {
        self.pi.len()
    }

    pub fn kernel(&self) -> &DMatrix<f64> {
        &self.kernel
    }

    pub fn pi(&self) -> &DVector<f64> {
        &self.pi
    }

    pub fn stationary(&self) -> DistributionVector {
        DistributionVector(self.pi.iter().copied().collect())
    }

    pub fn kernel_rows(&self) -> Vec<Vec<f64>> {
        (0..self.m()).map(|i| self.kernel.row(i).iter().copied().collect()).collect()
    }

    /// Two-state chain `[[1-a, a], [b, 1-b]]`.
    pub fn two_state(a: f64, b: f64) -> Result<Self> {
        build_chain(DMatrix::from_row_slice(2, 2, &[1.0 - a, a, b, 1.0 - b]), 1e-12)
    }

    pub fn from_rows(rows: &[Vec<f64>], tol: f64) -> Result<Self> {
        let m = rows.len();
        if m == 0 {
            return Err(SpectralError::Empty);
        }
        for (row, r) in rows.iter().enumerate() {
            if r.len() != m {
                return Err(SpectralError::NotSquare { row, len: r.len(), expected: m });
            }
        }
        let flat: Vec<f64> = rows.iter().flatten().copied().collect();
        build_chain(DMatrix::from_row_slice(m, m, &flat), tol)
    }

    /// `D^{1/2} K D^{-1/2}`, symmetrized against rounding.
    pub fn symmetrized(&self) -> DMatrix<f64> {
        let m = self.m();
        let sqrt_pi: Vec<f64> = self.pi.iter().map(|p| p.sqrt()).collect();
        DMatrix::from_fn(m, m, |x, y| {
            let flow = 0.5 * (self.pi[x] * self.kernel[(x, y)] + self.pi[y] * self.kernel[(y, x)]);
            flow / (sqrt_pi[x] * sqrt_pi[y])
        })
    }

    /// Symmetrized `P - S`: `D^{1/2} K D^{-1/2} - sqrt(pi) sqrt(pi)^T`.
    pub fn centered_symmetrized(&self) -> DMatrix<f64> {
        let u = self.pi.map(f64::sqrt);
        self.symmetrized() - &u * u.transpose()
    }

    /// Eigenvalues of `P - S` off the stationary direction, sorted descending.
    pub fn spectrum(&self) -> Vec<f64> {
        off_stationary_eigenvalues(self.centered_symmetrized(), &self.pi)
    }

    /// `K^n` by repeated multiplication.
    pub fn kernel_power(&self, n: usize) -> DMatrix<f64> {
        let mut acc = DMatrix::identity(self.m(), self.m());
        for _ in 0..n {
            acc = &acc * &self.kernel;
        }
        acc
    }
}

impl Serialize for FiniteChain {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        #[derive(Serialize)]
        struct Repr {
            kernel: Vec<Vec<f64>>,
            pi: Vec<f64>,
        }
        Repr { kernel: self.kernel_rows(), pi: self.pi.iter().copied().collect() }.serialize(s)
    }
}

/// Spectral summary of a reversible finite chain.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpectralReport {
    pub lambda: f64,
    pub opnorm2: f64,
    pub gap: f64,
    pub phi: f64,
    pub cheeger_lo: f64,
    pub cheeger_hi: f64,
}

impl SpectralReport {
    pub fn cheeger_holds(&self, tol: f64) -> bool {
        let one_minus = 1.0 - self.lambda;
        self.cheeger_lo <= one_minus + tol && one_minus <= self.cheeger_hi + tol
    }
}

/// Validates the kernel, computes the stationary vector and checks detailed balance.
pub fn build_chain(kernel: DMatrix<f64>, tol: f64) -> Result<FiniteChain> {
    let m = kernel.nrows();
    if m == 0 {
        return Err(SpectralError::Empty);
    }
    if kernel.ncols() != m {
        return Err(SpectralError::NotSquare { row: 0, len: kernel.ncols(), expected: m });
    }
    let tol = tol.max(STOCHASTIC_TOL);
    let mut kernel = kernel;
    for row in 0..m {
        let r = kernel.row(row);
        let sum: f64 = r.iter().sum();
        let min = r.iter().copied().fold(f64::INFINITY, f64::min);
        if !sum.is_finite() || (sum - 1.0).abs() > tol || min < -tol {
            return Err(SpectralError::NotStochastic { row, sum, min });
        }
        for y in 0..m {
            kernel[(row, y)] = kernel[(row, y)].max(0.0) / sum;
        }
    }

    let pi = stationary_vector(&kernel)?;

    for x in 0..m {
        for y in (x + 1)..m {
            let defect = (pi[x] * kernel[(x, y)] - pi[y] * kernel[(y, x)]).abs();
            if defect > tol {
                return Err(SpectralError::NotReversible { x, y, defect });
            }
        }
    }
    Ok(FiniteChain { kernel, pi })
}

/// Unique stationary vector from the null space of `K^T - I`, refined through the
/// balance linear system when the null vector is not accurate enough.
fn stationary_vector(kernel: &DMatrix<f64>) -> Result<DVector<f64>> {
    let m = kernel.nrows();
    if m == 1 {
        return Ok(DVector::from_element(1, 1.0));
    }
    let a = kernel.transpose() - DMatrix::identity(m, m);

    let mut candidate = None;
    if let Some(svd) = a.clone().try_svd(false, true, 1e-15, 10_000) {
        let sv = &svd.singular_values;
        let scale = sv.max().max(1.0);
        let null_dim = sv.iter().filter(|s| **s <= NULL_SPACE_TOL * scale).count();
        if null_dim > 1 {
            return Err(SpectralError::Reducible);
        }
        let (idx, _) = sv
            .iter()
            .enumerate()
            .fold((0, f64::INFINITY), |acc, (i, s)| if *s < acc.1 { (i, *s) } else { acc });
        let v_t = svd.v_t.expect("right singular vectors were requested");
        let v: DVector<f64> = v_t.row(idx).transpose();
        let total: f64 = v.sum();
        if total.abs() > 1e-300 {
            candidate = Some(v / total);
        }
    }

    let residual = |p: &DVector<f64>| (kernel.transpose() * p - p).amax();
    let pi = match candidate {
        Some(p) if residual(&p) <= STATIONARY_TOL && p.min() > 0.0 => p,
        _ => {
            // Balance system: (K^T - I) pi = 0 with the last equation replaced by sum(pi) = 1.
            let mut sys = a;
            sys.row_mut(m - 1).fill(1.0);
            let mut rhs = DVector::zeros(m);
            rhs[m - 1] = 1.0;
            sys.lu().solve(&rhs).ok_or(SpectralError::Reducible)?
        }
    };

    if pi.iter().any(|p| !p.is_finite() || *p <= 1e-14) || residual(&pi) > 1e-9 {
        return Err(SpectralError::Reducible);
    }
    let total = pi.sum();
    Ok(pi / total)
}

/// Eigenvalues of a symmetrized `P - S` with the stationary eigenvector removed.
fn off_stationary_eigenvalues(centered: DMatrix<f64>, pi: &DVector<f64>) -> Vec<f64> {
    let m = pi.len();
    if m == 1 {
        return Vec::new();
    }
    let u = pi.map(f64::sqrt);
    let eig = SymmetricEigen::new(centered);
    let stationary_idx = (0..m)
        .max_by(|&i, &j| {
            let ai = eig.eigenvectors.column(i).dot(&u).abs();
            let aj = eig.eigenvectors.column(j).dot(&u).abs();
            ai.total_cmp(&aj)
        })
        .unwrap_or(0);
    let mut values: Vec<f64> = (0..m)
        .filter(|&i| i != stationary_idx)
        .map(|i| eig.eigenvalues[i])
        .collect();
    values.sort_by(|a, b| b.total_cmp(a));
    values
}

fn max_abs_eigenvalue(sym: DMatrix<f64>) -> f64 {
    if sym.is_empty() {
        return 0.0;
    }
    let sym = 0.5 * (&sym + sym.transpose());
    SymmetricEigen::new(sym).eigenvalues.amax()
}

/// `lambda`, `||P - S||_2`, gap, exact conductance and the Cheeger bracket.
pub fn analyze(chain: &FiniteChain) -> Result<SpectralReport> {
    let m = chain.m();
    if m > MAX_ENUMERATION_STATES {
        return Err(SpectralError::TooManyStates { m });
    }
    let spectrum = chain.spectrum();
    let lambda = spectrum.first().copied().unwrap_or(0.0);
    let opnorm2 = spectrum.iter().fold(0.0_f64, |acc, v| acc.max(v.abs()));
    let phi = conductance(chain)?;
    Ok(SpectralReport {
        lambda,
        opnorm2,
        gap: (1.0 - opnorm2).clamp(0.0, 1.0),
        phi,
        cheeger_lo: 0.5 * phi * phi,
        cheeger_hi: 2.0 * phi,
    })
}

/// Exact conductance `min_{0 < pi(A) <= 1/2} Q(A, A^c) / pi(A)` over all proper subsets.
///
/// Subsets are visited in Gray-code order so each step updates the boundary flow in
/// `O(m)`; the minimizing subset is re-evaluated from scratch at the end.
pub fn conductance(chain: &FiniteChain) -> Result<f64> {
    let m = chain.m();
    if m > MAX_ENUMERATION_STATES {
        return Err(SpectralError::TooManyStates { m });
    }
    if m == 1 {
        return Ok(1.0);
    }
    let pi = chain.pi();
    let k = chain.kernel();
    let flow = DMatrix::from_fn(m, m, |x, y| pi[x] * k[(x, y)]);

    let mut members = vec![false; m];
    let mut mask: u32 = 0;
    let mut boundary = 0.0;
    let mut mass = 0.0;
    let mut best = (f64::INFINITY, 0u32);
    let full: u32 = (1u32 << m) - 1;

    for step in 1u32..(1u32 << m) {
        let z = step.trailing_zeros() as usize;
        if members[z] {
            members[z] = false;
            for y in 0..m {
                if y != z && !members[y] {
                    boundary -= flow[(z, y)];
                } else if y != z {
                    boundary += flow[(y, z)];
                }
            }
            mass -= pi[z];
        } else {
            for y in 0..m {
                if y != z && !members[y] {
                    boundary += flow[(z, y)];
                } else if y != z {
                    boundary -= flow[(y, z)];
                }
            }
            members[z] = true;
            mass += pi[z];
        }
        mask ^= 1 << z;
        if mask == full || mass > 0.5 + 1e-12 {
            continue;
        }
        let ratio = boundary / mass;
        if ratio < best.0 {
            best = (ratio, mask);
        }
    }

    let a = best.1;
    let inside = |x: usize| a & (1 << x) != 0;
    let mut exact_flow = 0.0;
    let mut exact_mass = 0.0;
    for x in (0..m).filter(|&x| inside(x)) {
        exact_mass += pi[x];
        for y in (0..m).filter(|&y| !inside(y)) {
            exact_flow += flow[(x, y)];
        }
    }
    Ok(exact_flow / exact_mass)
}

fn check_same_space(nu: &DistributionVector, mu: &DistributionVector) -> Result<()> {
    if nu.len() != mu.len() {
        return Err(SpectralError::DimensionMismatch { expected: nu.len(), found: mu.len() });
    }
    Ok(())
}

/// Total variation distance as half the L1 distance of the weight vectors.
///
/// The supremum form `sum (nu - mu)_+` is evaluated alongside and must agree.
pub fn tv_distance(nu: &DistributionVector, mu: &DistributionVector) -> Result<f64> {
    check_same_space(nu, mu)?;
    let half_l1 = 0.5 * nu.0.iter().zip(&mu.0).map(|(a, b)| (a - b).abs()).sum::<f64>();
    let sup_form: f64 = nu.0.iter().zip(&mu.0).map(|(a, b)| (a - b).max(0.0)).sum();
    debug_assert!(
        (half_l1 - sup_form).abs() <= 1e-12,
        "tv forms disagree: {half_l1} vs {sup_form}"
    );
    Ok(half_l1)
}

/// `sup_A |nu(A) - mu(A)|` by enumerating every subset.
pub fn tv_sup_over_subsets(nu: &DistributionVector, mu: &DistributionVector) -> Result<f64> {
    check_same_space(nu, mu)?;
    let m = nu.len();
    if m > MAX_ENUMERATION_STATES {
        return Err(SpectralError::TooManyStates { m });
    }
    let diff: Vec<f64> = nu.0.iter().zip(&mu.0).map(|(a, b)| a - b).collect();
    let mut best = 0.0_f64;
    for mask in 0u32..(1u32 << m) {
        let s: f64 = (0..m).filter(|i| mask & (1 << i) != 0).map(|i| diff[i]).sum();
        best = best.max(s.abs());
    }
    Ok(best)
}

/// `||P^n - S||` on `L_p(pi)` for `p` in {1, 2}.
///
/// For `p = 2` the symmetrized `(P - S)^n` is formed by matrix products and its largest
/// absolute eigenvalue returned. For `p = 1` the value is `2 max_x ||K^n(x, .) - pi||_tv`.
pub fn power_norm(chain: &FiniteChain, n: usize, p: u32) -> Result<f64> {
    if n == 0 {
        return Err(SpectralError::ZeroPower);
    }
    match p {
        2 => {
            let b = chain.centered_symmetrized();
            let mut acc = b.clone();
            for _ in 1..n {
                acc = &acc * &b;
            }
            Ok(max_abs_eigenvalue(acc))
        }
        1 => Ok(l1_norm_of_power(&centered_kernel_power(chain, n))),
        other => Err(SpectralError::UnsupportedP(other)),
    }
}

/// `(K - 1 pi^T)^n = K^n - 1 pi^T`, free of the cancellation in `K^n - 1 pi^T` for large `n`.
fn centered_kernel_power(chain: &FiniteChain, n: usize) -> DMatrix<f64> {
    let m = chain.m();
    let c = chain.kernel() - DMatrix::from_fn(m, m, |_, y| chain.pi()[y]);
    let mut acc = DMatrix::identity(m, m);
    for _ in 0..n {
        acc = &acc * &c;
    }
    acc
}

fn row_tv(centered: &DMatrix<f64>, x: usize) -> f64 {
    0.5 * centered.row(x).iter().map(|a| a.abs()).sum::<f64>()
}

fn l1_norm_of_power(centered: &DMatrix<f64>) -> f64 {
    (0..centered.nrows()).map(|x| 2.0 * row_tv(centered, x)).fold(0.0, f64::max)
}

/// Left- and right-hand sides of the TV convergence estimates after `n` steps from `nu`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TvBounds {
    pub lhs: f64,
    pub bound_l1: f64,
    pub bound_l2: f64,
}

impl TvBounds {
    pub fn holds(&self, tol: f64) -> bool {
        self.lhs <= self.bound_l1.min(self.bound_l2) + tol
    }
}

pub fn tv_convergence_bounds(
    chain: &FiniteChain,
    nu: &DistributionVector,
    n: usize,
) -> Result<TvBounds> {
    let m = chain.m();
    if nu.len() != m {
        return Err(SpectralError::DimensionMismatch { expected: m, found: nu.len() });
    }
    if n == 0 {
        return Err(SpectralError::ZeroPower);
    }
    let centered = centered_kernel_power(chain, n);
    // nu^T (K^n - 1 pi^T) = (nu - pi)^T (K - 1 pi^T)^n, which vanishes exactly at nu = pi.
    let dev = DVector::from_iterator(m, nu.weights().iter().zip(chain.pi().iter()).map(|(a, b)| a - b));
    let lhs = 0.5 * (centered.transpose() * dev).iter().map(|a| a.abs()).sum::<f64>();

    let pi = chain.pi();
    let density_dev: Vec<f64> = (0..m).map(|x| nu.weights()[x] / pi[x] - 1.0).collect();
    let l1: f64 = (0..m).map(|x| pi[x] * density_dev[x].abs()).sum();
    let l2: f64 = (0..m).map(|x| pi[x] * density_dev[x].powi(2)).sum::<f64>().sqrt();

    Ok(TvBounds {
        lhs,
        bound_l1: l1_norm_of_power(&centered) * 0.5 * l1,
        bound_l2: power_norm(chain, n, 2)? * 0.5 * l2,
    })
}

/// Fitted uniform-ergodicity constants and the implications checked against them.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DiagramReport {
    pub alpha: f64,
    /// `max_{x, n <= n_max} ||K^n(x, .) - pi||_tv / alpha^n`.
    pub m_fit: f64,
    /// `max_x 0.5 sqrt((1 - pi(x)) / pi(x))`, the constant implied by the L2 estimate.
    pub m_l2: f64,
    pub gap: f64,
    pub n_max: usize,
    /// Largest `||P^n - S||_1 - 2 M alpha^n` seen; nonpositive when the implication holds.
    pub worst_l1_excess: f64,
    pub uniform_implies_l1: bool,
    pub l1_implies_uniform: bool,
    pub gap_at_least_one_minus_alpha: bool,
    pub m_within_l2_constant: bool,
}

impl DiagramReport {
    pub fn holds(&self) -> bool {
        self.uniform_implies_l1
            && self.l1_implies_uniform
            && self.gap_at_least_one_minus_alpha
            && self.m_within_l2_constant
    }
}

/// Fits `(alpha, M)` with `alpha = ||P - S||_2` and checks the ergodicity implications
/// for every `n <= n_max`.
pub fn verify_diagram(chain: &FiniteChain, n_max: usize) -> Result<DiagramReport> {
    const TOL: f64 = 1e-10;
    // TV values below this floor are indistinguishable from rounding noise.
    const TV_FLOOR: f64 = 1e-13;

    if n_max == 0 {
        return Err(SpectralError::ZeroPower);
    }
    let m = chain.m();
    let alpha = chain.spectrum().iter().fold(0.0_f64, |acc, v| acc.max(v.abs()));
    if alpha >= 1.0 - 1e-12 {
        return Err(SpectralError::ZeroGap);
    }
    let gap = 1.0 - alpha;

    let mut tv_by_n = Vec::with_capacity(n_max);
    let c = chain.kernel() - DMatrix::from_fn(m, m, |_, y| chain.pi()[y]);
    let mut cn = DMatrix::identity(m, m);
    let mut l1_by_n = Vec::with_capacity(n_max);
    for _ in 0..n_max {
        cn = &cn * &c;
        l1_by_n.push(l1_norm_of_power(&cn));
        tv_by_n.push((0..m).map(|x| row_tv(&cn, x)).collect::<Vec<_>>());
    }

    let mut m_fit = 0.0_f64;
    for (i, row) in tv_by_n.iter().enumerate() {
        let scale = alpha.powi(i as i32 + 1);
        for &tv in row {
            if tv > TV_FLOOR {
                m_fit = m_fit.max(tv / scale);
            }
        }
    }

    let mut worst_l1_excess = f64::NEG_INFINITY;
    let mut l1_implies_uniform = true;
    for (i, row) in tv_by_n.iter().enumerate() {
        let n = i + 1;
        let scale = alpha.powi(n as i32);
        let l1 = l1_by_n[i];
        worst_l1_excess = worst_l1_excess.max(l1 - 2.0 * m_fit * scale);
        // L1-exponential convergence with (alpha, 2M) gives back uniform ergodicity with (alpha, M).
        let max_tv = row.iter().copied().fold(0.0, f64::max);
        if max_tv > 0.5 * (2.0 * m_fit) * scale + TOL {
            l1_implies_uniform = false;
        }
    }

    let pi = chain.pi();
    let m_l2 = pi.iter().map(|p| 0.5 * ((1.0 - p) / p).sqrt()).fold(0.0, f64::max);

    Ok(DiagramReport {
        alpha,
        m_fit,
        m_l2,
        gap,
        n_max,
        worst_l1_excess,
        uniform_implies_l1: worst_l1_excess <= TOL,
        l1_implies_uniform,
        gap_at_least_one_minus_alpha: gap >= 1.0 - alpha - 1e-12,
        m_within_l2_constant: m_fit <= m_l2 + TOL,
    })
}

/// The lazy chain `(K + I) / 2`; the stationary vector is unchanged.
pub fn lazy_chain(chain: &FiniteChain) -> FiniteChain {
    let m = chain.m();
    let kernel = (chain.kernel() + DMatrix::identity(m, m)) * 0.5;
    FiniteChain { kernel, pi: chain.pi().clone() }
}

/// Random reversible chain from a random symmetric weight matrix.
///
/// Off-diagonal weights vanish with probability 0.3 except along the path
/// `0 - 1 - .. - (m-1)`, which keeps the chain irreducible.
pub fn random_reversible<R: Rng + ?Sized>(m: usize, rng: &mut R) -> FiniteChain {
    assert!(m >= 1, "a chain needs at least one state");
    let mut w = DMatrix::zeros(m, m);
    let self_scale: f64 = rng.random_range(0.0..2.0);
    for x in 0..m {
        w[(x, x)] = self_scale * rng.random::<f64>();
        for y in (x + 1)..m {
            let keep = y == x + 1 || rng.random::<f64>() > 0.3;
            let v = if keep { rng.random::<f64>().powi(2) + 1e-3 } else { 0.0 };
            w[(x, y)] = v;
            w[(y, x)] = v;
        }
    }
    if m == 1 {
        w[(0, 0)] = 1.0;
    }
    let kernel = DMatrix::from_fn(m, m, |x, y| w[(x, y)] / w.row(x).sum());
    build_chain(kernel, 1e-10).expect("connected symmetric weights give a reversible irreducible chain")
}

/// Parses a kernel from CSV (rows separated by newlines or `;`) or from JSON
/// of the form `{"kernel": [[...], ...]}`.
pub fn parse_kernel(text: &str) -> Result<Vec<Vec<f64>>> {
    let trimmed = text.trim();
    if trimmed.starts_with('{') {
        #[derive(Deserialize)]
        struct Doc {
            kernel: Vec<Vec<f64>>,
        }
        let doc: Doc =
            serde_json::from_str(trimmed).map_err(|e| SpectralError::Parse(e.to_string()))?;
        return Ok(doc.kernel);
    }
    trimmed
        .split(['\n', ';'])
        .map(str::trim)
        .filter(|line| !line.is_empty() && !line.starts_with('#'))
        .map(|line| {
            line.split(',')
                .map(|cell| {
                    cell.trim()
                        .parse::<f64>()
                        .map_err(|e| SpectralError::Parse(format!("{cell:?}: {e}")))
                })
                .collect()
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn symmetric_two_state_has_uniform_pi() {
        let c = FiniteChain::two_state(0.3, 0.3).unwrap();
        assert!(close(c.pi()[0], 0.5, 1e-12) && close(c.pi()[1], 0.5, 1e-12));
    }

    #[test]
    fn asymmetric_two_state_pi() {
        let c = FiniteChain::from_rows(&[vec![0.5, 0.5], vec![0.25, 0.75]], 1e-12).unwrap();
        assert!(close(c.pi()[0], 1.0 / 3.0, 1e-12));
        assert!(close(c.pi()[1], 2.0 / 3.0, 1e-12));
    }

    #[test]
    fn identity_is_reducible() {
        let err = build_chain(DMatrix::identity(3, 3), 1e-12).unwrap_err();
        assert_eq!(err, SpectralError::Reducible);
    }

    #[test]
    fn rejects_non_stochastic_rows() {
        let err = FiniteChain::from_rows(&[vec![0.5, 0.6], vec![0.5, 0.5]], 1e-12).unwrap_err();
        assert!(matches!(err, SpectralError::NotStochastic { row: 0, .. }));
        let err = FiniteChain::from_rows(&[vec![1.5, -0.5], vec![0.5, 0.5]], 1e-12).unwrap_err();
        assert!(matches!(err, SpectralError::NotStochastic { .. }));
    }

    #[test]
    fn rejects_non_reversible_cycle() {
        // Biased three-cycle: uniform stationary law, but flow circulates.
        let rows = vec![vec![0.0, 0.8, 0.2], vec![0.2, 0.0, 0.8], vec![0.8, 0.2, 0.0]];
        let err = FiniteChain::from_rows(&rows, 1e-12).unwrap_err();
        assert!(matches!(err, SpectralError::NotReversible { .. }));
    }

    #[test]
    fn transient_state_is_reducible() {
        let rows = vec![vec![0.5, 0.5], vec![0.0, 1.0]];
        assert_eq!(FiniteChain::from_rows(&rows, 1e-12).unwrap_err(), SpectralError::Reducible);
    }

    #[test]
    fn two_state_report_closed_form() {
        let r = analyze(&FiniteChain::two_state(0.3, 0.3).unwrap()).unwrap();
        assert!(close(r.lambda, 0.4, 1e-12));
        assert!(close(r.opnorm2, 0.4, 1e-12));
        assert!(close(r.gap, 0.6, 1e-12));
        assert!(close(r.phi, 0.3, 1e-12));
        assert!(close(r.cheeger_lo, 0.045, 1e-12));
        assert!(close(r.cheeger_hi, 0.6, 1e-12));
    }

    #[test]
    fn antithetic_two_state_separates_lambda_and_norm() {
        let r = analyze(&FiniteChain::two_state(0.9, 0.9).unwrap()).unwrap();
        assert!(close(r.lambda, -0.8, 1e-12));
        assert!(close(r.opnorm2, 0.8, 1e-12));
        assert!(close(r.gap, 0.2, 1e-12));
        assert!(close(r.phi, 0.9, 1e-12));
        assert!(r.cheeger_holds(1e-10));
    }

    #[test]
    fn rows_equal_to_pi_give_zero_operator() {
        let pi = [0.2, 0.3, 0.5];
        let rows = vec![pi.to_vec(); 3];
        let c = FiniteChain::from_rows(&rows, 1e-12).unwrap();
        let r = analyze(&c).unwrap();
        assert!(r.lambda.abs() < 1e-12 && close(r.gap, 1.0, 1e-12));
        for n in [1, 3, 7] {
            assert!(power_norm(&c, n, 1).unwrap() < 1e-12);
            assert!(power_norm(&c, n, 2).unwrap() < 1e-12);
        }
        let d = verify_diagram(&c, 10).unwrap();
        assert!(d.alpha < 1e-12 && d.holds());
    }

    #[test]
    fn too_many_states_for_enumeration() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let c = random_reversible(21, &mut rng);
        assert_eq!(analyze(&c).unwrap_err(), SpectralError::TooManyStates { m: 21 });
    }

    #[test]
    fn tv_examples() {
        let a = DistributionVector::new(vec![0.7, 0.3]).unwrap();
        let b = DistributionVector::new(vec![0.5, 0.5]).unwrap();
        assert!(close(tv_distance(&a, &b).unwrap(), 0.2, 1e-15));
        assert_eq!(tv_distance(&a, &a).unwrap(), 0.0);
        let p = DistributionVector::point_mass(2, 0).unwrap();
        let q = DistributionVector::point_mass(2, 1).unwrap();
        assert_eq!(tv_distance(&p, &q).unwrap(), 1.0);
        let c = DistributionVector::new(vec![0.2, 0.3, 0.5]).unwrap();
        assert!(matches!(tv_distance(&a, &c), Err(SpectralError::DimensionMismatch { .. })));
    }

    #[test]
    fn power_norm_examples() {
        let c = FiniteChain::two_state(0.3, 0.3).unwrap();
        assert!(close(power_norm(&c, 2, 2).unwrap(), 0.16, 1e-12));
        assert!(close(power_norm(&c, 1, 1).unwrap(), 0.4, 1e-12));
        assert_eq!(power_norm(&c, 1, 3).unwrap_err(), SpectralError::UnsupportedP(3));
        assert_eq!(power_norm(&c, 0, 2).unwrap_err(), SpectralError::ZeroPower);
    }

    #[test]
    fn tv_bounds_examples() {
        let c = FiniteChain::two_state(0.3, 0.3).unwrap();
        let pi = c.stationary();
        let at_pi = tv_convergence_bounds(&c, &pi, 5).unwrap();
        assert_eq!((at_pi.lhs, at_pi.bound_l1, at_pi.bound_l2), (0.0, 0.0, 0.0));

        let nu = DistributionVector::point_mass(2, 0).unwrap();
        let one = tv_convergence_bounds(&c, &nu, 1).unwrap();
        assert!(close(one.lhs, 0.2, 1e-12) && close(one.bound_l2, 0.2, 1e-12));
        let three = tv_convergence_bounds(&c, &nu, 3).unwrap();
        assert!(close(three.lhs, 0.5 * 0.4f64.powi(3), 1e-12));
        assert!(three.holds(1e-10));
    }

    #[test]
    fn diagram_two_state() {
        let c = FiniteChain::two_state(0.3, 0.3).unwrap();
        let d = verify_diagram(&c, 20).unwrap();
        assert!(close(d.alpha, 0.4, 1e-12));
        assert!(close(d.m_fit, 0.5, 1e-9), "{}", d.m_fit);
        assert!(d.holds(), "{d:?}");
    }

    #[test]
    fn diagram_rejects_zero_gap() {
        let c = FiniteChain::two_state(1.0, 1.0).unwrap();
        assert_eq!(verify_diagram(&c, 5).unwrap_err(), SpectralError::ZeroGap);
    }

    #[test]
    fn lazy_examples() {
        let c = FiniteChain::two_state(0.3, 0.3).unwrap();
        let l = lazy_chain(&c);
        assert!(close(l.kernel()[(0, 0)], 0.85, 1e-15) && close(l.kernel()[(0, 1)], 0.15, 1e-15));
        assert!(close(analyze(&l).unwrap().lambda, 0.7, 1e-12));

        let anti = FiniteChain::two_state(0.9, 0.9).unwrap();
        let r = analyze(&anti).unwrap();
        let lr = analyze(&lazy_chain(&anti)).unwrap();
        assert!(close(lr.lambda, 0.1, 1e-12));
        assert!(close(lr.gap, (1.0 - r.lambda) / 2.0, 1e-12));
        assert!(close(lr.gap, 0.9, 1e-12));

        let rows = vec![vec![1.0, 0.0], vec![0.0, 1.0]];
        let id = FiniteChain { kernel: DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 1.0]), pi: DVector::from_vec(vec![0.5, 0.5]) };
        assert_eq!(lazy_chain(&id).kernel_rows(), rows);
    }

    #[test]
    fn parses_csv_and_json() {
        assert_eq!(parse_kernel("0.7,0.3;0.3,0.7").unwrap(), vec![vec![0.7, 0.3], vec![0.3, 0.7]]);
        assert_eq!(parse_kernel("0.7, 0.3\n0.3, 0.7\n").unwrap(), vec![vec![0.7, 0.3], vec![0.3, 0.7]]);
        assert_eq!(parse_kernel(r#"{"kernel": [[1.0]]}"#).unwrap(), vec![vec![1.0]]);
        assert!(matches!(parse_kernel("0.7,abc"), Err(SpectralError::Parse(_))));
    }

    #[test]
    fn report_json_keys() {
        let r = analyze(&FiniteChain::two_state(0.3, 0.3).unwrap()).unwrap();
        let v = serde_json::to_value(r).unwrap();
        for key in ["lambda", "opnorm2", "gap", "phi", "cheeger_lo", "cheeger_hi"] {
            assert!(v.get(key).is_some(), "missing {key}");
        }
    }

    #[test]
    fn single_state_chain() {
        let c = FiniteChain::from_rows(&[vec![1.0]], 1e-12).unwrap();
        let r = analyze(&c).unwrap();
        assert_eq!(r.lambda, 0.0);
        assert_eq!(r.gap, 1.0);
    }
}
