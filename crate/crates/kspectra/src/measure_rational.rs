//! Smoothed spectral measures through rational kernels built from
//! resolvent evaluations just outside the unit circle.
//!
//! Instead of tapering a Fourier series, the spectral measure is
//! convolved with a kernel that is rational in `e^{-i theta}`:
//!
//! ```text
//! K_eps(theta) = (e^{-i theta} / 2pi) *
//!     sum_j [ c_j / (e^{-i theta} - (1 + eps conj(z_j))^{-1})
//!           - d_j / (e^{-i theta} - (1 + eps z_j)) ].
//! ```
//!
//! The poles sit at distance `~eps` on either side of the unit circle,
//! so the convolution against the measure of an isometry reduces to
//! resolvents at the `m` shifts `e^{i theta}(1 + eps z_j)`, all outside
//! the closed unit disk where Galerkin truncations are provably
//! well-behaved (`||(K - lambda)^{-1}|| <= 1/(|lambda| - 1)`). Two
//! Vandermonde systems with right-hand side `e_1` pick the weights:
//! `d` against the nodes `z_j` and `c` against the reflected nodes
//! `zeta_j = -conj(z_j)/(1 + eps conj(z_j))`. Those two conditions make
//! the family an `m`-th order kernel: unit mass, circle moments
//! `1..m-1` matched exactly, and decay
//! `|K_eps(theta)| <~ eps^m (eps + |theta|)^{-(m+1)}`.
//!
//! From Galerkin matrices the two resolvent forms needed per shift are
//!
//! ```text
//! conj( a* G (A - lambda G)^{-1} G a ),
//!       a* A (A - lambda G)^{-1} G a,
//! ```
//!
//! computed either densely per shift or through a cached factorization
//! (whiten `G`, one Schur pass of the compressed operator) that turns
//! every further shift into a quadratic-cost triangular solve. The
//! truncation error of both forms is certified by computable
//! quantities `delta_2`, `delta_3`, which drive an adaptive loop that
//! doubles the truncation size until a target bound is met.

use std::f64::consts::PI;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::galerkin::{self, GalerkinMatrices};
use crate::linalg::{self, C64, CMat, CVec};

/// Largest supported kernel order. The node sets in use keep the
/// Vandermonde systems well-conditioned only for small orders; beyond
/// this cap the solve is refused rather than silently degraded.
pub const MAX_KERNEL_ORDER: usize = 8;

/// Relative residual above which a Vandermonde solve is declared
/// untrustworthy. The default node families sit far below this; only
/// nearly-coincident custom nodes can trip it.
const VANDERMONDE_RESIDUAL_TOL: f64 = 1e-9;

/// Tolerance on `|a* G a - 1|` when an observable is required to be
/// normalized in the data inner product.
const NORMALIZATION_TOL: f64 = 1e-8;

/// A rational smoothing kernel of fixed order together with its
/// pole-weight coefficients.
///
/// `d` is independent of `eps`; `c` depends on `eps` through the
/// reflected nodes. Both satisfy `sum = 1` (the first row of their
/// Vandermonde systems).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RationalKernel {
    /// Kernel order `m`.
    pub order: usize,
    /// Smoothing parameter in `(0, 1]`; poles sit `~eps` off the circle.
    pub epsilon: f64,
    /// Nodes `z_j`, distinct with positive real part.
    pub nodes: Vec<C64>,
    /// Reflected nodes `zeta_j = -conj(z_j) / (1 + eps conj(z_j))`,
    /// defined by `1 + eps zeta_j = (1 + eps conj(z_j))^{-1}`.
    pub zetas: Vec<C64>,
    /// Weights of the poles inside the unit circle; solve the
    /// Vandermonde system in `zeta_j` with right-hand side `e_1`.
    pub c: Vec<C64>,
    /// Weights of the poles outside; Vandermonde system in `z_j`.
    pub d: Vec<C64>,
}

/// Evenly rotated default nodes `z_j = 1 + (2j/(m+1) - 1) i`,
/// `j = 1..m`: the natural higher-order extension of the single node
/// `z = 1` whose first-order kernel is the Poisson kernel for the disc.
pub fn default_nodes(m: usize) -> Vec<C64> {
    (1..=m)
        .map(|j| C64::new(1.0, 2.0 * j as f64 / (m as f64 + 1.0) - 1.0))
        .collect()
}

/// Solves the Vandermonde system `V u = e_1`, where
/// `V[(i, j)] = nodes[j]^i` for `i = 0..m-1`, by progressive
/// elimination in `O(m^2)` operations (two triangular sweeps, the
/// classical substitute for forming `V`).
///
/// The exact solution is the Lagrange evaluation
/// `u_j = prod_{k != j} nodes[k] / (nodes[k] - nodes[j])`; the
/// progressive sweep reproduces it with a better-understood rounding
/// profile and no `O(m)`-term products. Callers must pass distinct
/// nodes.
pub fn solve_vandermonde_e1(nodes: &[C64]) -> Result<Vec<C64>> {
    let m = nodes.len();
    if m == 0 {
        return Err(Error::argument("Vandermonde system needs at least one node"));
    }
    let mut b = vec![C64::new(0.0, 0.0); m];
    b[0] = C64::new(1.0, 0.0);
    for k in 0..m.saturating_sub(1) {
        for j in ((k + 1)..m).rev() {
            let prev = b[j - 1];
            b[j] -= nodes[k] * prev;
        }
    }
    for k in (0..m.saturating_sub(1)).rev() {
        for j in (k + 1)..m {
            let denom = nodes[j] - nodes[j - k - 1];
            if denom.norm() == 0.0 {
                return Err(Error::argument(
                    "Vandermonde solve hit coincident nodes",
                ));
            }
            b[j] /= denom;
            let upd = b[j];
            b[j - 1] -= upd;
        }
    }
    Ok(b)
}

/// Max-norm relative residual of `V u - e_1` for the system solved by
/// [`solve_vandermonde_e1`].
fn vandermonde_residual(nodes: &[C64], u: &[C64]) -> f64 {
    let m = nodes.len();
    let mut worst = 0.0_f64;
    let mut scale = 1.0_f64;
    let mut powers: Vec<C64> = vec![C64::new(1.0, 0.0); m];
    for i in 0..m {
        let mut row = C64::new(0.0, 0.0);
        let mut row_scale = 0.0;
        for j in 0..m {
            row += powers[j] * u[j];
            row_scale += powers[j].norm() * u[j].norm();
        }
        let rhs = if i == 0 { 1.0 } else { 0.0 };
        worst = worst.max((row - C64::new(rhs, 0.0)).norm());
        scale = scale.max(row_scale);
        for j in 0..m {
            powers[j] *= nodes[j];
        }
    }
    worst / scale
}

/// Builds the order-`m` rational kernel for smoothing width `eps`.
///
/// `nodes` overrides the default node family; they must be distinct,
/// finite, and have positive real part. Orders above
/// [`MAX_KERNEL_ORDER`] are refused (the Vandermonde systems become too
/// ill-conditioned to certify).
pub fn kernel_coeffs(m: usize, epsilon: f64, nodes: Option<&[C64]>) -> Result<RationalKernel> {
    if m == 0 {
        return Err(Error::argument("kernel order must be at least 1"));
    }
    if m > MAX_KERNEL_ORDER {
        return Err(Error::resource(format!(
            "kernel order {m} exceeds the supported maximum {MAX_KERNEL_ORDER}; \
             the node Vandermonde systems are too ill-conditioned beyond it"
        )));
    }
    if !(epsilon > 0.0 && epsilon <= 1.0) {
        return Err(Error::argument(format!(
            "smoothing width must lie in (0, 1], got {epsilon}"
        )));
    }
    let nodes: Vec<C64> = match nodes {
        Some(given) => {
            if given.len() != m {
                return Err(Error::argument(format!(
                    "expected {m} nodes for an order-{m} kernel, got {}",
                    given.len()
                )));
            }
            given.to_vec()
        }
        None => default_nodes(m),
    };
    let mut max_norm = 1.0_f64;
    for z in &nodes {
        if !z.re.is_finite() || !z.im.is_finite() {
            return Err(Error::argument("kernel nodes must be finite"));
        }
        if !(z.re > 0.0) {
            return Err(Error::argument(format!(
                "kernel nodes must have positive real part, got {z}"
            )));
        }
        max_norm = max_norm.max(z.norm());
    }
    for i in 0..m {
        for j in (i + 1)..m {
            if (nodes[i] - nodes[j]).norm() <= 1e-12 * max_norm {
                return Err(Error::argument(format!(
                    "kernel nodes must be distinct: nodes {i} and {j} coincide"
                )));
            }
        }
    }
    let zetas: Vec<C64> = nodes
        .iter()
        .map(|z| {
            let zc = z.conj();
            -zc / (C64::new(1.0, 0.0) + epsilon * zc)
        })
        .collect();
    let d = solve_vandermonde_e1(&nodes)?;
    let c = solve_vandermonde_e1(&zetas)?;
    let res_d = vandermonde_residual(&nodes, &d);
    let res_c = vandermonde_residual(&zetas, &c);
    if !(res_d <= VANDERMONDE_RESIDUAL_TOL && res_c <= VANDERMONDE_RESIDUAL_TOL) {
        return Err(Error::numeric(format!(
            "Vandermonde solve residual too large (d: {res_d:.2e}, c: {res_c:.2e}); \
             the node configuration is too ill-conditioned"
        )));
    }
    Ok(RationalKernel {
        order: m,
        epsilon,
        nodes,
        zetas,
        c,
        d,
    })
}

/// Evaluates the (complex) kernel at an angle. The measure routines use
/// the real part: the measure is real, and convolving with `Re K_eps`
/// is more accurate at fixed width than using the complex kernel.
pub fn kernel_eval(kernel: &RationalKernel, theta: f64) -> C64 {
    let w = C64::from_polar(1.0, -theta);
    let mut acc = C64::new(0.0, 0.0);
    for j in 0..kernel.order {
        let inner = (C64::new(1.0, 0.0) + kernel.epsilon * kernel.nodes[j].conj()).inv();
        acc += kernel.c[j] / (w - inner);
        acc -= kernel.d[j] / (w - (C64::new(1.0, 0.0) + kernel.epsilon * kernel.nodes[j]));
    }
    w * acc / C64::new(2.0 * PI, 0.0)
}

/// Circle moment `int K_eps(-theta) e^{i n theta} d theta` in closed
/// form: `sum_j c_j (1 + eps conj(z_j))^{-n}` (residue calculus; only
/// the poles inside the unit circle contribute). Equals 1 exactly for
/// `0 <= n <= m-1` by the Vandermonde conditions.
pub fn kernel_moment(kernel: &RationalKernel, n: u32) -> C64 {
    kernel
        .nodes
        .iter()
        .zip(&kernel.c)
        .map(|(z, c)| {
            let base = C64::new(1.0, 0.0) + kernel.epsilon * z.conj();
            c * (C64::new(1.0, 0.0) / base).powu(n)
        })
        .sum()
}

/// The Poisson kernel for the unit disc at radius `(1 + eps)^{-1}`,
///
/// ```text
/// P_eps(theta) = (1/2pi) ((1+eps)^2 - 1) / (1 + (1+eps)^2 - 2(1+eps) cos theta).
/// ```
///
/// The order-1 rational kernel with node `z = 1` reproduces it exactly
/// (real part).
pub fn poisson_kernel(epsilon: f64, theta: f64) -> f64 {
    let r = 1.0 + epsilon;
    (r * r - 1.0) / (1.0 + r * r - 2.0 * r * theta.cos()) / (2.0 * PI)
}

/// Point evaluations of a smoothed spectral measure, with the kernel
/// parameters that produced them.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SmoothedMeasure {
    /// Evaluation points in `[-pi, pi]` (periodic).
    pub thetas: Vec<f64>,
    /// Real part of the kernel convolution at each point.
    pub values: Vec<f64>,
    /// Smoothing width of the kernel used.
    pub epsilon: f64,
    /// Kernel order.
    pub order: usize,
    /// Galerkin truncation size the resolvents were computed at.
    pub n_k: usize,
    /// Evaluation route tag.
    pub method: String,
}

/// Cached factorization for evaluating resolvent quadratic forms of a
/// Galerkin pencil `(A, G)` at many shifts.
///
/// The Gram matrix is whitened first (`B* G B = I` on the retained
/// subspace), then one Schur pass triangularizes the compressed
/// operator `B* A B = Q S Q*`. In the whitened basis the generalized
/// triangular pair is `(S, I)`, so each shift costs one upper-triangular
/// solve. The cached vectors are `v1 = v2 = Q* a~` and `v3 = S* Q* a~`
/// with `a~ = B* G a`; the two quadratic forms at shift `lambda` are
/// recovered as
///
/// ```text
/// conj(a* G (A - lambda G)^{-1} G a) = x* v2,    x = (S - lambda)^{-1} v1,
///      a* A (A - lambda G)^{-1} G a  = v3* x.
/// ```
#[derive(Debug, Clone)]
pub struct ResolventEvaluator {
    /// Upper-triangular Schur factor of the whitened operator.
    s: CMat,
    /// Maps whitened Schur-basis solutions back to dictionary
    /// coefficients (`B Q`).
    to_dict: CMat,
    /// Right-hand side `Q* a~`.
    v1: CVec,
    /// Weight vector of the first quadratic form (equals `v1` here
    /// because the whitened Gram matrix is the identity).
    v2: CVec,
    /// Weight vector of the second quadratic form, `S* Q* a~`.
    v3: CVec,
    /// Retained subspace dimension after whitening.
    kept: usize,
}

impl ResolventEvaluator {
    /// Factors the pencil and caches the vectors for the observable with
    /// dictionary coefficients `a`.
    ///
    /// Requires `a* G a = 1` within `1e-8`: the smoothed measure of an
    /// unnormalized observable is off by the missing `||g||^2`.
    /// Fails with a numeric error if the Schur pass cannot certify
    /// `||compressed - Q S Q*|| <= 1e-10 ||compressed||`.
    pub fn new(mats: &GalerkinMatrices, a: &CVec) -> Result<Self> {
        mats.validate()?;
        let n = mats.n();
        if a.len() != n {
            return Err(Error::dimension(format!(
                "coefficient vector has length {}, expected {}",
                a.len(),
                n
            )));
        }
        let ga = &mats.g * a;
        let norm = a.dotc(&ga).re;
        if !((norm - 1.0).abs() <= NORMALIZATION_TOL) {
            return Err(Error::argument(format!(
                "observable must be normalized: a* G a = 1 within {NORMALIZATION_TOL:.0e}, got {norm:.6e}"
            )));
        }
        let wh = linalg::whiten(&mats.g, linalg::DROP_TOL)?;
        let compressed = wh.into_reduced(&mats.a);
        let (q, s) = linalg::schur(&compressed)?;
        let recon = &q * &s * q.adjoint();
        let drift = linalg::rel_diff(&recon, &compressed);
        if drift > 1e-10 {
            return Err(Error::numeric(format!(
                "Schur factorization failed to reproduce the compressed operator \
                 (relative drift {drift:.2e})"
            )));
        }
        let a_tilde = &wh.into * a;
        let v1 = q.ad_mul(&a_tilde);
        let v2 = v1.clone();
        let v3 = s.ad_mul(&v1);
        Ok(Self {
            s,
            to_dict: &wh.forward * q,
            v1,
            v2,
            v3,
            kept: wh.kept,
        })
    }

    /// Retained subspace dimension (equals the dictionary size unless
    /// the Gram matrix was numerically rank-deficient).
    pub fn kept(&self) -> usize {
        self.kept
    }

    /// The two resolvent quadratic forms at one shift:
    /// `(conj(a* G (A - lambda G)^{-1} G a), a* A (A - lambda G)^{-1} G a)`.
    pub fn resolvent_products(&self, lambda: C64) -> Result<(C64, C64)> {
        let x = self.shift_solution(lambda)?;
        Ok((x.dotc(&self.v2), self.v3.dotc(&x)))
    }

    /// Dictionary coefficients of `(A - lambda G)^{-1} G a`, the
    /// Galerkin resolvent applied to the observable. Used by the error
    /// certificates.
    pub fn resolvent_coeffs(&self, lambda: C64) -> Result<CVec> {
        let x = self.shift_solution(lambda)?;
        Ok(&self.to_dict * x)
    }

    fn shift_solution(&self, lambda: C64) -> Result<CVec> {
        let x = linalg::solve_shifted_upper_triangular(&self.s, lambda, &self.v1)?;
        if !x.iter().all(|v| v.re.is_finite() && v.im.is_finite()) {
            return Err(Error::numeric(format!(
                "resolvent solve overflowed at shift {lambda}; \
                 the shift is too close to the pencil's spectrum"
            )));
        }
        Ok(x)
    }

    /// Complex kernel convolution `[K_eps * nu_g](theta)` evaluated from
    /// the cached factorization; the measure estimate is its real part.
    pub fn convolution(&self, kernel: &RationalKernel, theta: f64) -> Result<C64> {
        let rot = C64::from_polar(1.0, theta);
        let rot_inv = C64::from_polar(1.0, -theta);
        let one = C64::new(1.0, 0.0);
        let mut acc = C64::new(0.0, 0.0);
        for j in 0..kernel.order {
            let lambda = rot * (one + kernel.epsilon * kernel.nodes[j]);
            let (ip1, ip2) = self.resolvent_products(lambda)?;
            let front = kernel.c[j] * rot_inv * (one + kernel.epsilon * kernel.nodes[j].conj());
            acc += front * ip1 + kernel.d[j] * ip2;
        }
        Ok(-acc / C64::new(2.0 * PI, 0.0))
    }
}

/// Evaluates a smoothed spectral measure on a grid of angles through
/// the cached-factorization route: one Schur pass, then a
/// quadratic-cost triangular solve per (shift, angle) pair, angles in
/// parallel.
///
/// `mats` must come from a measure-preserving (isometric) system for
/// the resolvent shifts to be provably outside the spectrum; `a` holds
/// the dictionary coefficients of the normalized observable.
pub fn measure_eval(
    mats: &GalerkinMatrices,
    a: &CVec,
    kernel: &RationalKernel,
    thetas: &[f64],
) -> Result<SmoothedMeasure> {
    let evaluator = ResolventEvaluator::new(mats, a)?;
    let values = thetas
        .par_iter()
        .map(|&theta| evaluator.convolution(kernel, theta).map(|v| v.re))
        .collect::<Result<Vec<f64>>>()?;
    Ok(SmoothedMeasure {
        thetas: thetas.to_vec(),
        values,
        epsilon: kernel.epsilon,
        order: kernel.order,
        n_k: mats.n(),
        method: "rational-schur".to_string(),
    })
}

/// Same estimate as [`measure_eval`] computed the slow way: one dense
/// LU factorization per (shift, angle) pair, no caching. Kept as an
/// independent cross-check of the factorized route and for perturbed
/// matrices where a fresh factorization per instance is wanted anyway.
pub fn measure_eval_direct(
    mats: &GalerkinMatrices,
    a: &CVec,
    kernel: &RationalKernel,
    thetas: &[f64],
) -> Result<SmoothedMeasure> {
    mats.validate()?;
    if a.len() != mats.n() {
        return Err(Error::dimension(format!(
            "coefficient vector has length {}, expected {}",
            a.len(),
            mats.n()
        )));
    }
    let ga = &mats.g * a;
    let norm = a.dotc(&ga).re;
    if !((norm - 1.0).abs() <= NORMALIZATION_TOL) {
        return Err(Error::argument(format!(
            "observable must be normalized: a* G a = 1 within {NORMALIZATION_TOL:.0e}, got {norm:.6e}"
        )));
    }
    let values = thetas
        .par_iter()
        .map(|&theta| convolution_dense(&mats.g, &mats.a, a, &ga, kernel, theta).map(|v| v.re))
        .collect::<Result<Vec<f64>>>()?;
    Ok(SmoothedMeasure {
        thetas: thetas.to_vec(),
        values,
        epsilon: kernel.epsilon,
        order: kernel.order,
        n_k: mats.n(),
        method: "rational-direct".to_string(),
    })
}

/// Dense-route complex convolution for the pencil `(op, g)`; `ga = g a`
/// is precomputed by the caller.
fn convolution_dense(
    g: &CMat,
    op: &CMat,
    a: &CVec,
    ga: &CVec,
    kernel: &RationalKernel,
    theta: f64,
) -> Result<C64> {
    let rot = C64::from_polar(1.0, theta);
    let rot_inv = C64::from_polar(1.0, -theta);
    let one = C64::new(1.0, 0.0);
    let mut acc = C64::new(0.0, 0.0);
    for j in 0..kernel.order {
        let lambda = rot * (one + kernel.epsilon * kernel.nodes[j]);
        let shifted = op - &(g * lambda);
        let h = linalg::solve_lu(&shifted, ga)?;
        let ip1 = a.dotc(&(g * &h)).conj();
        let ip2 = a.dotc(&(op * &h));
        let front = kernel.c[j] * rot_inv * (one + kernel.epsilon * kernel.nodes[j].conj());
        acc += front * ip1 + kernel.d[j] * ip2;
    }
    Ok(-acc / C64::new(2.0 * PI, 0.0))
}

/// A posteriori error certificate for the two resolvent quadratic
/// forms at a shift outside the closed unit disk.
///
/// With `delta_1` a bound on the projection error `||g - Psi a||`,
/// `delta_2` the computable defect of the Galerkin resolvent as an
/// approximate resolvent of the full operator, and `delta_3` the norm
/// of the Galerkin resolvent output, both quadratic forms are within
///
/// ```text
/// (delta_1 + delta_2) / (|lambda| - 1) + delta_1 delta_3
/// ```
///
/// of their infinite-dimensional values.
#[derive(Debug, Clone, Serialize)]
pub struct Certificate {
    /// Shift the certificate was computed at (`|lambda| > 1`).
    pub lambda: C64,
    /// Supplied bound on the observable's projection error.
    pub delta1: f64,
    /// Computed defect `||(K - lambda) h - g_N||` in the data inner
    /// product, where `h` is the Galerkin resolvent output.
    pub delta2: f64,
    /// Computed norm `||h||` of the Galerkin resolvent output.
    pub delta3: f64,
}

impl Certificate {
    /// The certified error bound on either resolvent quadratic form.
    pub fn bound(&self) -> f64 {
        (self.delta1 + self.delta2) / (self.lambda.norm() - 1.0) + self.delta1 * self.delta3
    }
}

/// Computes the error certificate at one shift by a dense solve.
///
/// `delta1` is the caller's bound on the projection error
/// `||g - Psi a||`; pass 0 when the observable lies in the dictionary
/// span exactly. Requires `|lambda| > 1`.
pub fn certificate(
    mats: &GalerkinMatrices,
    a: &CVec,
    lambda: C64,
    delta1: f64,
) -> Result<Certificate> {
    mats.validate()?;
    if a.len() != mats.n() {
        return Err(Error::dimension(format!(
            "coefficient vector has length {}, expected {}",
            a.len(),
            mats.n()
        )));
    }
    if !(lambda.norm() > 1.0) {
        return Err(Error::argument(format!(
            "certificates are only valid outside the closed unit disk, got |lambda| = {}",
            lambda.norm()
        )));
    }
    let ga = &mats.g * a;
    let shifted = &mats.a - &(&mats.g * lambda);
    let h = linalg::solve_lu(&shifted, &ga)?;
    certificate_from_coeffs(mats, a, &h, lambda, delta1)
}

/// Certificate quantities from an already-computed Galerkin resolvent
/// output `h = (A - lambda G)^{-1} G a`.
fn certificate_from_coeffs(
    mats: &GalerkinMatrices,
    a: &CVec,
    h: &CVec,
    lambda: C64,
    delta1: f64,
) -> Result<Certificate> {
    if !(delta1 >= 0.0 && delta1.is_finite()) {
        return Err(Error::argument(format!(
            "projection error bound must be a nonnegative finite number, got {delta1}"
        )));
    }
    let res = galerkin::residual(lambda, h, mats)?;
    let gh = &mats.g * h;
    let hgh = h.dotc(&gh).re;
    let shifted_h = &mats.a * h - &gh * lambda;
    let cross = a.dotc(&shifted_h);
    let aga = a.dotc(&(&mats.g * a)).re;
    // ||(K - lambda) h - g_N||^2 expanded in the data inner product;
    // cancellation of the O(1) terms can leave a tiny negative rounding
    // artifact, clamped here.
    let d2sq = hgh * res * res - 2.0 * cross.re + aga;
    Ok(Certificate {
        lambda,
        delta1,
        delta2: d2sq.max(0.0).sqrt(),
        delta3: hgh.max(0.0).sqrt(),
    })
}

/// Result of the adaptive truncation loop.
#[derive(Debug, Clone)]
pub struct AdaptiveOutcome {
    /// The estimate at the terminal truncation size.
    pub estimate: SmoothedMeasure,
    /// Truncation size the loop stopped at.
    pub terminal_n: usize,
    /// True when the certified bound met the tolerance; false when the
    /// cap was reached first (the estimate is then a partial result).
    pub converged: bool,
    /// Largest certified bound over the evaluation grid at the terminal
    /// size.
    pub max_bound: f64,
}

/// Doubles the Galerkin truncation size until the certified error of
/// the smoothed-measure values is below `tol` at every grid point, or
/// a size cap is reached.
///
/// `assemble(n)` must produce the Galerkin matrices of size `n`, the
/// normalized observable coefficients, and a projection error bound
/// `delta_1` for that truncation. Per grid point the certified bound is
/// the weighted sum over shifts
///
/// ```text
/// (1/2pi) sum_j (|c_j| |1 + eps conj(z_j)| + |d_j|) *
///         [ (delta_1 + delta_2(lambda_j)) / (|lambda_j| - 1) + delta_1 delta_3(lambda_j) ],
/// ```
///
/// matching how the two quadratic forms enter the evaluation formula.
pub fn adaptive_measure_eval<F>(
    assemble: F,
    kernel: &RationalKernel,
    thetas: &[f64],
    tol: f64,
    n0: usize,
    cap: usize,
) -> Result<AdaptiveOutcome>
where
    F: Fn(usize) -> Result<(GalerkinMatrices, CVec, f64)>,
{
    if !(tol > 0.0) {
        return Err(Error::argument(format!(
            "adaptive tolerance must be positive, got {tol}"
        )));
    }
    if n0 == 0 || cap < n0 {
        return Err(Error::argument(format!(
            "truncation schedule must satisfy 1 <= start <= cap, got start {n0}, cap {cap}"
        )));
    }
    if thetas.is_empty() {
        return Err(Error::argument("need at least one evaluation angle"));
    }
    let one = C64::new(1.0, 0.0);
    let mut n = n0;
    loop {
        let (mats, a, delta1) = assemble(n)?;
        let evaluator = ResolventEvaluator::new(&mats, &a)?;
        let mut values = Vec::with_capacity(thetas.len());
        let mut max_bound = 0.0_f64;
        for &theta in thetas {
            let rot = C64::from_polar(1.0, theta);
            let rot_inv = C64::from_polar(1.0, -theta);
            let mut acc = C64::new(0.0, 0.0);
            let mut bound = 0.0_f64;
            for j in 0..kernel.order {
                let lambda = rot * (one + kernel.epsilon * kernel.nodes[j]);
                let (ip1, ip2) = evaluator.resolvent_products(lambda)?;
                let front = kernel.c[j] * rot_inv * (one + kernel.epsilon * kernel.nodes[j].conj());
                acc += front * ip1 + kernel.d[j] * ip2;
                let h = evaluator.resolvent_coeffs(lambda)?;
                let cert = certificate_from_coeffs(&mats, &a, &h, lambda, delta1)?;
                let weight = kernel.c[j].norm()
                    * (one + kernel.epsilon * kernel.nodes[j].conj()).norm()
                    + kernel.d[j].norm();
                bound += weight * cert.bound() / (2.0 * PI);
            }
            values.push(-acc.re / (2.0 * PI));
            max_bound = max_bound.max(bound);
        }
        if max_bound <= tol || n >= cap {
            return Ok(AdaptiveOutcome {
                estimate: SmoothedMeasure {
                    thetas: thetas.to_vec(),
                    values,
                    epsilon: kernel.epsilon,
                    order: kernel.order,
                    n_k: n,
                    method: "rational-adaptive".to_string(),
                },
                terminal_n: n,
                converged: max_bound <= tol,
                max_bound,
            });
        }
        n = (2 * n).min(cap);
    }
}

/// Protocol of one noise-stability experiment: perturb the operator
/// compression entrywise, smooth at a width tied to the noise level,
/// and average the pointwise error over trials.
#[derive(Debug, Clone)]
pub struct NoiseConfig {
    /// Standard deviation of the i.i.d. real Gaussian perturbation
    /// added to every entry of the operator compression.
    pub delta: f64,
    /// Kernel order.
    pub order: usize,
    /// Number of independent perturbation draws.
    pub trials: usize,
    /// Master seed; per-trial generators are split off deterministically.
    pub seed: u64,
    /// Angle the error is measured at.
    pub theta: f64,
    /// Smoothing width; `None` ties it to the noise level as
    /// `delta^{1/(order+1)}`, the width that balances the smoothing
    /// error `~eps^order` against the noise amplification `~delta/eps`.
    pub epsilon: Option<f64>,
}

/// Error statistics of a noise-stability experiment.
#[derive(Debug, Clone, Serialize)]
pub struct NoiseStats {
    /// Perturbation level the experiment ran at.
    pub delta: f64,
    /// Kernel order.
    pub order: usize,
    /// Smoothing width actually used.
    pub epsilon: f64,
    /// Number of trials.
    pub trials: usize,
    /// Mean over trials of the relative pointwise error.
    pub mean_error: f64,
    /// Sample standard deviation of the relative pointwise error.
    pub sd_error: f64,
    /// Per-trial relative errors, in trial order.
    pub errors: Vec<f64>,
}

/// SplitMix-style finalizer: derives statistically independent per-trial
/// seeds from a master seed by fixed splitting.
fn trial_seed(master: u64, trial: u64) -> u64 {
    let mut x = master ^ trial.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    x ^= x >> 30;
    x = x.wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x ^= x >> 27;
    x = x.wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// Runs the noise-stability experiment: for each trial, every entry of
/// the operator compression receives an independent real Gaussian of
/// standard deviation `delta` (the Gram matrix stays exact), the
/// smoothed measure is evaluated densely at `theta`, and the relative
/// error against `reference` is recorded.
///
/// Trials run in parallel with per-trial seeds split off the master
/// seed, so results are independent of thread count.
pub fn noise_experiment(
    mats: &GalerkinMatrices,
    a: &CVec,
    reference: f64,
    cfg: &NoiseConfig,
) -> Result<NoiseStats> {
    mats.validate()?;
    if !(cfg.delta >= 0.0 && cfg.delta.is_finite()) {
        return Err(Error::argument(format!(
            "noise level must be a nonnegative finite number, got {}",
            cfg.delta
        )));
    }
    if cfg.trials == 0 {
        return Err(Error::argument("need at least one trial"));
    }
    if !(reference.abs() > 0.0 && reference.is_finite()) {
        return Err(Error::argument(
            "reference density value must be finite and nonzero",
        ));
    }
    let epsilon = match cfg.epsilon {
        Some(given) => given,
        None => {
            if cfg.delta == 0.0 {
                return Err(Error::argument(
                    "the width rule delta^{1/(order+1)} needs delta > 0; \
                     pass an explicit width for a noise-free run",
                ));
            }
            cfg.delta.powf(1.0 / (cfg.order as f64 + 1.0))
        }
    };
    let kernel = kernel_coeffs(cfg.order, epsilon, None)?;
    let ga = &mats.g * a;
    let norm = a.dotc(&ga).re;
    if !((norm - 1.0).abs() <= NORMALIZATION_TOL) {
        return Err(Error::argument(format!(
            "observable must be normalized: a* G a = 1 within {NORMALIZATION_TOL:.0e}, got {norm:.6e}"
        )));
    }
    let errors = (0..cfg.trials)
        .into_par_iter()
        .map(|trial| {
            let mut rng = ChaCha8Rng::seed_from_u64(trial_seed(cfg.seed, trial as u64));
            let mut perturbed = mats.a.clone();
            for entry in perturbed.iter_mut() {
                let draw: f64 = StandardNormal.sample(&mut rng);
                *entry += C64::new(cfg.delta * draw, 0.0);
            }
            let value =
                convolution_dense(&mats.g, &perturbed, a, &ga, &kernel, cfg.theta)?.re;
            Ok((value - reference).abs() / reference.abs())
        })
        .collect::<Result<Vec<f64>>>()?;
    let mean = errors.iter().sum::<f64>() / errors.len() as f64;
    let sd = if errors.len() > 1 {
        (errors.iter().map(|e| (e - mean) * (e - mean)).sum::<f64>()
            / (errors.len() - 1) as f64)
            .sqrt()
    } else {
        0.0
    };
    Ok(NoiseStats {
        delta: cfg.delta,
        order: cfg.order,
        epsilon,
        trials: cfg.trials,
        mean_error: mean,
        sd_error: sd,
        errors,
    })
}
