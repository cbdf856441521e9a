//! Quadrature rules used to turn integrals against the reference measure ω
//! into weighted sums over snapshot initial conditions.
//!
//! A rule is a set of nodes in the state space plus weights. Deterministic
//! rules (Gauss–Legendre, trapezoid) integrate smooth functions at their
//! classical rates; the Riemann and Monte Carlo rules are deliberately crude
//! and exist to expose how Galerkin-matrix accuracy tracks quadrature
//! accuracy. Multi-dimensional domains are handled by tensor products of
//! one-dimensional rules (axis count capped — use Monte Carlo beyond that).

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default cap on the total node count a tensor-product rule may produce.
pub const DEFAULT_NODE_CAP: usize = 4_000_000;

/// Maximum number of axes for tensor-product rules; beyond this the cost
/// grows too fast and Monte Carlo should be used instead.
pub const MAX_TENSOR_AXES: usize = 4;

/// Kind tag recorded with each rule (serialized into artifact metadata).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QuadKind {
    GaussLegendre,
    TrapezoidPeriodic,
    TrapezoidTruncated,
    Riemann,
    MonteCarlo,
    TensorProduct,
}

/// Sampling domain for Monte Carlo rules.
///
/// A bounded box carries Lebesgue measure (weights `|Ω|/M`); a Gaussian
/// domain carries the product Gaussian probability measure (weights `1/M`).
/// Unbounded Lebesgue sampling is rejected: truncate to a box first.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub enum Domain {
    /// Cartesian product of bounded intervals `[a_i, b_i]`, Lebesgue measure.
    BoundedBox(Vec<[f64; 2]>),
    /// Product of Gaussians with per-axis `(mean, standard deviation)`.
    Gaussian(Vec<(f64, f64)>),
    /// Lebesgue measure on an unbounded set; kept only so that requests for
    /// it can fail with a clear message.
    UnboundedLebesgue { dim: usize },
}

impl Domain {
    /// Dimension of the domain.
    pub fn dim(&self) -> usize {
        match self {
            Domain::BoundedBox(axes) => axes.len(),
            Domain::Gaussian(axes) => axes.len(),
            Domain::UnboundedLebesgue { dim } => *dim,
        }
    }
}

/// Nodes and weights approximating `∫ f dω ≈ Σ_j w_j f(x_j)`.
#[derive(Debug, Clone)]
pub struct QuadratureRule {
    /// `M×d` node matrix; row `j` is the `j`-th node.
    pub nodes: DMatrix<f64>,
    /// `M` weights.
    pub weights: Vec<f64>,
    /// Which construction produced the rule.
    pub kind: QuadKind,
    /// RNG seed for random rules; `None` for deterministic ones.
    pub seed: Option<u64>,
}

impl QuadratureRule {
    /// Number of nodes.
    pub fn len(&self) -> usize {
        self.nodes.nrows()
    }

    /// True if the rule has no nodes (never produced by the constructors).
    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// State-space dimension.
    pub fn dim(&self) -> usize {
        self.nodes.ncols()
    }

    /// Sum of the weights (the rule's estimate of the domain measure).
    pub fn weight_sum(&self) -> f64 {
        self.weights.iter().sum()
    }

    /// Applies the rule to a real integrand.
    pub fn integrate(&self, f: impl Fn(&[f64]) -> f64) -> f64 {
        let mut acc = 0.0;
        for j in 0..self.len() {
            let row: Vec<f64> = self.nodes.row(j).iter().cloned().collect();
            acc += self.weights[j] * f(&row);
        }
        acc
    }
}

/// Gauss–Legendre rule with `m` nodes transplanted to `[a, b]`.
/// Exact for polynomials of degree ≤ 2m−1.
pub fn gauss_legendre(m: usize, a: f64, b: f64) -> Result<QuadratureRule> {
    if m < 1 {
        return Err(Error::argument("gauss_legendre needs at least one node"));
    }
    if !(a < b) {
        return Err(Error::argument(format!(
            "gauss_legendre interval must satisfy a < b, got [{a}, {b}]"
        )));
    }
    // Jacobi matrix of the Legendre recurrence: zero diagonal, off-diagonal
    // b_i = i / sqrt(4i² − 1). Its eigenvalues are the nodes on [−1, 1] and
    // the squared first eigenvector components (times μ0 = 2) the weights.
    let mut d = vec![0.0_f64; m];
    let mut e: Vec<f64> = (1..m)
        .map(|i| {
            let i = i as f64;
            i / (4.0 * i * i - 1.0).sqrt()
        })
        .collect();
    let mut z = vec![0.0_f64; m];
    z[0] = 1.0;
    symmetric_tridiagonal_ql(&mut d, &mut e, &mut z)?;
    let half = 0.5 * (b - a);
    let mid = 0.5 * (a + b);
    let nodes = DMatrix::from_fn(m, 1, |i, _| mid + half * d[i]);
    let weights: Vec<f64> = z.iter().map(|&zi| 2.0 * zi * zi * half).collect();
    Ok(QuadratureRule {
        nodes,
        weights,
        kind: QuadKind::GaussLegendre,
        seed: None,
    })
}

/// Trapezoid rule on `[a, b]`.
///
/// Periodic: `m` equispaced nodes starting at `a`, spacing `(b−a)/m`, equal
/// weights, right endpoint omitted (it aliases `a`). Non-periodic: `m ≥ 2`
/// nodes including both endpoints, interior weights `(b−a)/(m−1)`, endpoint
/// weights halved.
pub fn trapezoid(m: usize, a: f64, b: f64, periodic: bool) -> Result<QuadratureRule> {
    if !(a < b) {
        return Err(Error::argument(format!(
            "trapezoid interval must satisfy a < b, got [{a}, {b}]"
        )));
    }
    if periodic {
        if m < 1 {
            return Err(Error::argument("periodic trapezoid needs at least one node"));
        }
        let h = (b - a) / m as f64;
        let nodes = DMatrix::from_fn(m, 1, |i, _| a + h * i as f64);
        Ok(QuadratureRule {
            nodes,
            weights: vec![h; m],
            kind: QuadKind::TrapezoidPeriodic,
            seed: None,
        })
    } else {
        if m < 2 {
            return Err(Error::argument("non-periodic trapezoid needs at least two nodes"));
        }
        let h = (b - a) / (m - 1) as f64;
        let nodes = DMatrix::from_fn(m, 1, |i, _| a + h * i as f64);
        let mut weights = vec![h; m];
        weights[0] = 0.5 * h;
        weights[m - 1] = 0.5 * h;
        Ok(QuadratureRule {
            nodes,
            weights,
            kind: QuadKind::TrapezoidTruncated,
            seed: None,
        })
    }
}

/// Riemann-sum rule: the same `m ≥ 2` equispaced nodes (endpoints included)
/// as the non-periodic trapezoid rule, but every weight equal to
/// `(b−a)/(m−1)`. First-order accurate by construction; its weights
/// deliberately over-count the domain by a factor `m/(m−1)`.
pub fn riemann(m: usize, a: f64, b: f64) -> Result<QuadratureRule> {
    if m < 2 {
        return Err(Error::argument("riemann rule needs at least two nodes"));
    }
    if !(a < b) {
        return Err(Error::argument(format!(
            "riemann interval must satisfy a < b, got [{a}, {b}]"
        )));
    }
    let h = (b - a) / (m - 1) as f64;
    let nodes = DMatrix::from_fn(m, 1, |i, _| a + h * i as f64);
    Ok(QuadratureRule {
        nodes,
        weights: vec![h; m],
        kind: QuadKind::Riemann,
        seed: None,
    })
}

/// Monte Carlo rule: `m` i.i.d. nodes drawn from the domain's measure.
/// Bounded boxes get Lebesgue weights `|Ω|/m`; Gaussian domains get
/// probability weights `1/m`. Reproducible for a fixed seed.
pub fn monte_carlo(m: usize, domain: &Domain, seed: u64) -> Result<QuadratureRule> {
    if m < 1 {
        return Err(Error::argument("monte_carlo needs at least one node"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    match domain {
        Domain::BoundedBox(axes) => {
            if axes.is_empty() {
                return Err(Error::argument("monte_carlo domain has no axes"));
            }
            let mut vol = 1.0;
            for (i, &[a, b]) in axes.iter().enumerate() {
                if !(a < b) {
                    return Err(Error::argument(format!(
                        "monte_carlo axis {i} must satisfy a < b, got [{a}, {b}]"
                    )));
                }
                vol *= b - a;
            }
            let d = axes.len();
            let nodes = DMatrix::from_fn(m, d, |_, _| rng.gen::<f64>());
            let nodes = DMatrix::from_fn(m, d, |i, j| {
                let [a, b] = axes[j];
                a + (b - a) * nodes[(i, j)]
            });
            Ok(QuadratureRule {
                nodes,
                weights: vec![vol / m as f64; m],
                kind: QuadKind::MonteCarlo,
                seed: Some(seed),
            })
        }
        Domain::Gaussian(axes) => {
            if axes.is_empty() {
                return Err(Error::argument("monte_carlo domain has no axes"));
            }
            let d = axes.len();
            let mut nodes = DMatrix::zeros(m, d);
            for i in 0..m {
                for j in 0..d {
                    let (mean, sd) = axes[j];
                    nodes[(i, j)] = mean + sd * standard_normal(&mut rng);
                }
            }
            Ok(QuadratureRule {
                nodes,
                weights: vec![1.0 / m as f64; m],
                kind: QuadKind::MonteCarlo,
                seed: Some(seed),
            })
        }
        Domain::UnboundedLebesgue { .. } => Err(Error::argument(
            "Monte Carlo on an unbounded Lebesgue domain is not defined; truncate to a box first",
        )),
    }
}

/// Tensor product of one-dimensional rules. Node rows iterate the last axis
/// fastest; weights are products of axis weights.
pub fn tensor_product(axes: &[QuadratureRule], node_cap: usize) -> Result<QuadratureRule> {
    if axes.is_empty() {
        return Err(Error::argument("tensor_product needs at least one axis"));
    }
    if axes.len() > MAX_TENSOR_AXES {
        return Err(Error::argument(format!(
            "tensor_product supports at most {MAX_TENSOR_AXES} axes, got {}; use Monte Carlo instead",
            axes.len()
        )));
    }
    for (i, r) in axes.iter().enumerate() {
        if r.dim() != 1 {
            return Err(Error::argument(format!(
                "tensor_product axis {i} must be one-dimensional, got dim {}",
                r.dim()
            )));
        }
    }
    let total: usize = axes.iter().map(|r| r.len()).try_fold(1_usize, |acc, n| {
        acc.checked_mul(n)
    }).ok_or_else(|| Error::resource("tensor_product node count overflows usize"))?;
    if total > node_cap {
        return Err(Error::resource(format!(
            "tensor_product would produce {total} nodes, above the cap of {node_cap}"
        )));
    }
    let d = axes.len();
    let mut nodes = DMatrix::zeros(total, d);
    let mut weights = vec![1.0_f64; total];
    for row in 0..total {
        let mut rem = row;
        // last axis fastest
        for ax in (0..d).rev() {
            let n_ax = axes[ax].len();
            let idx = rem % n_ax;
            rem /= n_ax;
            nodes[(row, ax)] = axes[ax].nodes[(idx, 0)];
            weights[row] *= axes[ax].weights[idx];
        }
    }
    Ok(QuadratureRule {
        nodes,
        weights,
        kind: QuadKind::TensorProduct,
        seed: None,
    })
}

/// One draw from the standard normal distribution (Box–Muller; two uniform
/// draws per call keeps the stream layout simple and reproducible).
fn standard_normal(rng: &mut impl Rng) -> f64 {
    let u1: f64 = loop {
        let u = rng.gen::<f64>();
        if u > 0.0 {
            break u;
        }
    };
    let u2: f64 = rng.gen();
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

/// Eigenvalues and first eigenvector components of a symmetric tridiagonal
/// matrix by the implicit QL method. `d` holds the diagonal and returns the
/// eigenvalues (ascending); `e` holds the sub-diagonal (`e[i]` couples `i`
/// and `i+1`) and is destroyed; `z` is rotated along and returns, for the
/// input `z = e_1`, the first components of the normalized eigenvectors.
///
/// This is the classical kernel behind Gauss-rule construction; a dense
/// eigensolver would cost O(m³) and dominate at the m = 10⁴ reference sizes.
fn symmetric_tridiagonal_ql(d: &mut [f64], e: &mut [f64], z: &mut [f64]) -> Result<()> {
    let n = d.len();
    if n == 0 {
        return Err(Error::argument("empty tridiagonal system"));
    }
    if n == 1 {
        return Ok(());
    }
    debug_assert_eq!(e.len(), n - 1);
    let mut ee = vec![0.0_f64; n];
    ee[..n - 1].copy_from_slice(e);
    let eps = f64::EPSILON;
    for l in 0..n {
        let mut iter = 0;
        loop {
            // Find the first negligible sub-diagonal at or after l.
            let mut m = l;
            while m + 1 < n {
                let dd = d[m].abs() + d[m + 1].abs();
                if ee[m].abs() <= eps * dd {
                    break;
                }
                m += 1;
            }
            if m == l {
                break;
            }
            iter += 1;
            if iter > 50 {
                return Err(Error::numeric(
                    "tridiagonal QL failed to converge in 50 iterations",
                ));
            }
            // Implicit shift from the 2x2 at the top of the active block.
            let mut g = (d[l + 1] - d[l]) / (2.0 * ee[l]);
            let mut r = g.hypot(1.0);
            g = d[m] - d[l] + ee[l] / (g + r.copysign(g));
            let mut s = 1.0;
            let mut c = 1.0;
            let mut p = 0.0;
            for i in (l..m).rev() {
                let mut f = s * ee[i];
                let b = c * ee[i];
                r = f.hypot(g);
                ee[i + 1] = r;
                if r == 0.0 {
                    // Deflate: recover and retry.
                    d[i + 1] -= p;
                    ee[m] = 0.0;
                    break;
                }
                s = f / r;
                c = g / r;
                g = d[i + 1] - p;
                r = (d[i] - g) * s + 2.0 * c * b;
                p = s * r;
                d[i + 1] = g + p;
                g = c * r - b;
                // Carry the first-row components of the rotations.
                f = z[i + 1];
                z[i + 1] = s * z[i] + c * f;
                z[i] = c * z[i] - s * f;
            }
            if r == 0.0 && m > l + 1 {
                continue;
            }
            d[l] -= p;
            ee[l] = g;
            ee[m] = 0.0;
        }
    }
    // Sort ascending, permuting z to match.
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&a, &b| d[a].total_cmp(&d[b]));
    let d_old = d.to_vec();
    let z_old = z.to_vec();
    for (k, &i) in idx.iter().enumerate() {
        d[k] = d_old[i];
        z[k] = z_old[i];
    }
    Ok(())
}
