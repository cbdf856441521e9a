//! Data-driven dictionaries from kernelized EDMD.
//!
//! Galerkin assembly needs a dictionary, and hand-picking one for a
//! high-dimensional or strongly nonlinear system is guesswork. This module
//! learns the dictionary from data instead: a positive-definite kernel `S`
//! implicitly defines a very large feature space, kernel EDMD compresses the
//! dynamics seen on a first snapshot set into the dominant eigendirections
//! of that space, and those directions become an explicit dictionary that
//! the residual machinery can consume on a second, independent set.
//!
//! With weights `w` on the first set, the feature space is only ever queried
//! through the two weighted Gram matrices
//!
//! ```text
//! [G0]_jk = sqrt(w_j) S(x0_j, x0_k) sqrt(w_k),
//! [G1]_jk = sqrt(w_j) S(x1_j, x0_k) sqrt(w_k).
//! ```
//!
//! From the eigendecomposition `G0 = U Sigma^2 U*` (regularized as
//! `G0 + eta ||G0|| I` because kernel Grams are notoriously ill-conditioned)
//! the compressed transition matrix is
//!
//! ```text
//! K~ = (Sigma^+ U*) G1 (U Sigma^+),
//! ```
//!
//! whose nonzero eigenvalues match explicit EDMD whenever the kernel has an
//! exact finite feature map. The learned dictionary stacks the dominant
//! eigenvectors of `K~` column-by-column, orthonormalizes them with a QR
//! factorization, and maps the result back through `U Sigma^+`:
//!
//! ```text
//! psi_j(x) = [S(x, a_1), ..., S(x, a_M)] (U Sigma^+) Q_j,
//! ```
//!
//! where `a_i` are the first-set states, kept as anchors. A single snapshot
//! set cannot expose its own overfitting — with at least as many features as
//! snapshots and full-rank data, every single-set residual vanishes
//! identically — so the learned dictionary must be judged on fresh data:
//! [`kernel_resdmd`] assembles the Galerkin matrices on the second set and
//! dispatches to the eigenvalue, pseudospectrum, or spectral-measure
//! solvers, whose residuals and bounds then apply verbatim.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::SnapshotSet;
use crate::error::{Error, Result};
use crate::galerkin::{cleanup, edmd_eigs, pseudospectrum, Eigenpair, GalerkinMatrices,
    PseudospectrumResult};
use crate::linalg::{self, C64, CMat, CVec};
use crate::measure_rational::{kernel_coeffs, measure_eval, SmoothedMeasure};

/// Default relative regularization for the kernel Gram matrix.
pub const DEFAULT_ETA: f64 = 1e-12;

/// Positive-definite kernel `S(x, y)` defining the implicit feature space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum KernelFunction {
    /// Gaussian radial basis function `S(x, y) = exp(-gamma ||x - y||^2)`.
    GaussianRbf {
        /// Inverse squared length scale; see [`gamma_heuristic`].
        gamma: f64,
    },
    /// Inner-product kernel `S(x, y) = x . y`, whose feature map is the
    /// identity. Kernel EDMD with it must reduce to explicit EDMD with the
    /// coordinate dictionary, which makes it a sharp oracle in tests; the
    /// Gaussian kernel is the one intended for actual use.
    Linear,
}

impl KernelFunction {
    /// Gaussian kernel with inverse squared length scale `gamma`.
    pub fn gaussian(gamma: f64) -> Result<Self> {
        if !(gamma > 0.0) || !gamma.is_finite() {
            return Err(Error::argument(format!(
                "kernel scale gamma must be positive and finite, got {gamma}"
            )));
        }
        Ok(KernelFunction::GaussianRbf { gamma })
    }

    /// Evaluates the kernel at a pair of states of equal dimension.
    pub fn eval(&self, x: &[f64], y: &[f64]) -> f64 {
        assert_eq!(x.len(), y.len(), "kernel arguments must share a dimension");
        match self {
            KernelFunction::GaussianRbf { gamma } => {
                let d2: f64 = x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum();
                (-gamma * d2).exp()
            }
            KernelFunction::Linear => x.iter().zip(y).map(|(a, b)| a * b).sum(),
        }
    }
}

/// Inverse squared length scale matched to the spread of the snapshot data:
/// the squared reciprocal of the average Euclidean norm of the initial
/// states after shifting them to have mean zero.
pub fn gamma_heuristic(snap: &SnapshotSet) -> Result<f64> {
    if snap.is_empty() {
        return Err(Error::argument("gamma heuristic needs at least one snapshot"));
    }
    let m = snap.x0.nrows();
    let d = snap.x0.ncols();
    let mut mean = vec![0.0; d];
    for i in 0..m {
        for j in 0..d {
            mean[j] += snap.x0[(i, j)] / m as f64;
        }
    }
    let mut avg = 0.0;
    for i in 0..m {
        let mut norm2 = 0.0;
        for j in 0..d {
            let c = snap.x0[(i, j)] - mean[j];
            norm2 += c * c;
        }
        avg += norm2.sqrt() / m as f64;
    }
    if !(avg > 0.0) || !avg.is_finite() {
        return Err(Error::argument(
            "snapshot states are all identical; no length scale to infer",
        ));
    }
    Ok(1.0 / (avg * avg))
}

/// Matrix of kernel values `[S(points_i, anchors_j)]`, rows in parallel.
pub fn kernel_matrix(
    kernel: &KernelFunction,
    points: &DMatrix<f64>,
    anchors: &DMatrix<f64>,
) -> Result<DMatrix<f64>> {
    if points.ncols() != anchors.ncols() {
        return Err(Error::dimension(format!(
            "kernel arguments have dimensions {} and {}",
            points.ncols(),
            anchors.ncols()
        )));
    }
    let anchor_rows: Vec<Vec<f64>> = (0..anchors.nrows())
        .map(|j| anchors.row(j).iter().copied().collect())
        .collect();
    let rows: Vec<Vec<f64>> = (0..points.nrows())
        .into_par_iter()
        .map(|i| {
            let xi: Vec<f64> = points.row(i).iter().copied().collect();
            anchor_rows.iter().map(|aj| kernel.eval(&xi, aj)).collect()
        })
        .collect();
    Ok(DMatrix::from_fn(points.nrows(), anchors.nrows(), |i, j| {
        rows[i][j]
    }))
}

/// Dictionary learned by kernel EDMD: functions
/// `psi_j(x) = [S(x, a_1), ..., S(x, a_M)] combination_j`.
#[derive(Debug, Clone)]
pub struct LearnedDictionary {
    /// Anchor states (the first-set initial states), one per row.
    pub anchors: DMatrix<f64>,
    /// Combination matrix `(U Sigma^+) Q`, anchors x functions.
    pub combination: CMat,
    /// Kernel the anchors are evaluated through.
    pub kernel: KernelFunction,
    /// Relative regularization that was applied to the kernel Gram.
    pub eta: f64,
    /// Number of functions originally requested. When the kernel Gram has
    /// lower numerical rank the dictionary is shrunk to that rank instead
    /// (see [`LearnedDictionary::rank_limited`]).
    pub requested: usize,
    /// Eigenvalues of the compressed transition matrix backing the selected
    /// eigenvectors, in selection order (modulus descending).
    pub kedmd_eigenvalues: Vec<C64>,
}

impl LearnedDictionary {
    /// Number of dictionary functions.
    pub fn len(&self) -> usize {
        self.combination.ncols()
    }

    /// True when the dictionary holds no functions.
    pub fn is_empty(&self) -> bool {
        self.combination.ncols() == 0
    }

    /// State dimension the dictionary evaluates on.
    pub fn state_dim(&self) -> usize {
        self.anchors.ncols()
    }

    /// True when fewer functions were learned than requested because the
    /// kernel Gram matrix was numerically rank-deficient. Treat this as a
    /// warning: the data did not support the requested dictionary size.
    pub fn rank_limited(&self) -> bool {
        self.len() < self.requested
    }
}

/// Learns a dictionary of `n_dict` functions from one snapshot set.
///
/// Assembles the weighted kernel Gram matrices, eigendecomposes the
/// regularized `G0 + eta ||G0|| I = U Sigma^2 U*`, forms the compressed
/// transition matrix `K~ = (Sigma^+ U*) G1 (U Sigma^+)`, and keeps the QR
/// orthonormalization of its `n_dict` dominant eigenvectors (modulus
/// descending, ties broken by real then imaginary part, descending).
///
/// `n_dict` may not exceed the number of snapshots; when it exceeds the
/// numerical rank of `G0` the dictionary is shrunk to that rank and the
/// result reports [`LearnedDictionary::rank_limited`].
pub fn learn_dictionary(
    snap: &SnapshotSet,
    kernel: &KernelFunction,
    n_dict: usize,
    eta: f64,
) -> Result<LearnedDictionary> {
    if snap.is_empty() {
        return Err(Error::argument("cannot learn a dictionary from no snapshots"));
    }
    let m = snap.len();
    if n_dict == 0 {
        return Err(Error::argument("dictionary size must be at least one"));
    }
    if n_dict > m {
        return Err(Error::argument(format!(
            "dictionary size {n_dict} exceeds the number of snapshots {m}"
        )));
    }
    if !(eta >= 0.0) || !eta.is_finite() {
        return Err(Error::argument(format!(
            "regularization eta must be finite and nonnegative, got {eta}"
        )));
    }
    if snap.weights.iter().any(|&w| !(w >= 0.0) || !w.is_finite()) {
        return Err(Error::argument("snapshot weights must be finite and nonnegative"));
    }

    let sw: Vec<f64> = snap.weights.iter().map(|w| w.sqrt()).collect();
    let k0 = kernel_matrix(kernel, &snap.x0, &snap.x0)?;
    let k1 = kernel_matrix(kernel, &snap.x1, &snap.x0)?;
    // Symmetrize G0 to shed rounding asymmetry before the eigendecomposition.
    let g0 = DMatrix::from_fn(m, m, |i, j| {
        0.5 * (sw[i] * k0[(i, j)] * sw[j] + sw[j] * k0[(j, i)] * sw[i])
    });
    let g1 = DMatrix::from_fn(m, m, |i, j| sw[i] * k1[(i, j)] * sw[j]);

    let se = g0.symmetric_eigen();
    let mut idx: Vec<usize> = (0..m).collect();
    idx.sort_by(|&a, &b| se.eigenvalues[a].total_cmp(&se.eigenvalues[b]));
    let lam: Vec<f64> = idx.iter().map(|&i| se.eigenvalues[i]).collect();
    let u = DMatrix::from_fn(m, m, |i, j| se.eigenvectors[(i, idx[j])]);
    let lam_max = lam[m - 1];
    if !(lam_max > 0.0) {
        return Err(Error::numeric(
            "kernel Gram matrix has no positive eigenvalues",
        ));
    }
    let rank = lam.iter().filter(|&&l| l > linalg::DROP_TOL * lam_max).count();
    let kept = n_dict.min(rank);

    let sinv: Vec<f64> = lam
        .iter()
        .map(|&l| {
            let sigma = (l + eta * lam_max).max(0.0).sqrt();
            if sigma > 0.0 {
                1.0 / sigma
            } else {
                0.0
            }
        })
        .collect();
    let t = u.transpose() * &g1 * &u;
    let ktilde = CMat::from_fn(m, m, |i, j| C64::new(sinv[i] * t[(i, j)] * sinv[j], 0.0));
    let (vals, vecs) = linalg::eig(&ktilde)?;

    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| {
        vals[b]
            .norm()
            .total_cmp(&vals[a].norm())
            .then(vals[b].re.total_cmp(&vals[a].re))
            .then(vals[b].im.total_cmp(&vals[a].im))
    });
    let selected = &order[..kept];
    let z = CMat::from_fn(m, kept, |i, j| vecs[(i, selected[j])]);
    let q = z.qr().q();
    let u_sinv = CMat::from_fn(m, m, |i, j| C64::new(u[(i, j)] * sinv[j], 0.0));
    let combination = &u_sinv * &q;

    Ok(LearnedDictionary {
        anchors: snap.x0.clone(),
        combination,
        kernel: kernel.clone(),
        eta,
        requested: n_dict,
        kedmd_eigenvalues: selected.iter().map(|&i| vals[i]).collect(),
    })
}

/// Evaluates every learned function at every row of `points`: the kernel
/// row against the anchors times the combination matrix.
pub fn eval_learned(dict: &LearnedDictionary, points: &DMatrix<f64>) -> Result<CMat> {
    if points.ncols() != dict.state_dim() {
        return Err(Error::dimension(format!(
            "points have dimension {}, dictionary anchors have {}",
            points.ncols(),
            dict.state_dim()
        )));
    }
    let k = kernel_matrix(&dict.kernel, points, &dict.anchors)?;
    let k_c = CMat::from_fn(k.nrows(), k.ncols(), |i, j| C64::new(k[(i, j)], 0.0));
    Ok(&k_c * &dict.combination)
}

/// Knobs for the two-set kernelized pipeline.
#[derive(Debug, Clone)]
pub struct KernelResdmdOptions {
    /// Number of dictionary functions to learn from the first set.
    pub n_dict: usize,
    /// Relative regularization for the kernel Gram ([`DEFAULT_ETA`]).
    pub eta: f64,
    /// Append the constant function to the learned dictionary. The constant
    /// is an exact Koopman eigenfunction (eigenvalue one) of every
    /// deterministic system, so appending it pins that eigenpair exactly.
    pub append_constant: bool,
}

impl KernelResdmdOptions {
    /// Options with default regularization and no appended constant.
    pub fn new(n_dict: usize) -> Self {
        KernelResdmdOptions {
            n_dict,
            eta: DEFAULT_ETA,
            append_constant: false,
        }
    }
}

/// Computation to run on the second snapshot set with the learned dictionary.
#[derive(Debug, Clone)]
pub enum DownstreamRequest {
    /// EDMD eigenpairs with residuals, keeping those at or below the bound.
    Eigenpairs {
        /// Residual acceptance threshold.
        cleanup_eps: f64,
    },
    /// Residual-based pseudospectrum sweep over a grid.
    Pseudospectrum {
        /// Complex grid points to classify.
        grid: Vec<C64>,
        /// Acceptance threshold on `tau`.
        eps: f64,
    },
    /// Smoothed spectral measure of an observable given by its values at the
    /// second-set initial states; the observable is projected onto the
    /// learned dictionary and normalized before evaluation.
    Measure {
        /// Observable values at the second-set initial states.
        observable: CVec,
        /// Rational kernel order.
        order: usize,
        /// Smoothing parameter.
        epsilon: f64,
        /// Angles to evaluate at.
        thetas: Vec<f64>,
    },
}

/// Output of the dispatched downstream computation.
#[derive(Debug, Clone)]
pub enum DownstreamOutput {
    /// Eigenpairs surviving the residual cleanup.
    Eigenpairs(Vec<Eigenpair>),
    /// Pseudospectrum sweep result.
    Pseudospectrum(PseudospectrumResult),
    /// Smoothed spectral measure.
    Measure(SmoothedMeasure),
}

/// Result of the two-set kernelized pipeline.
#[derive(Debug, Clone)]
pub struct KernelResdmd {
    /// Dictionary learned from the first set.
    pub dictionary: LearnedDictionary,
    /// Galerkin matrices assembled on the second set (constant included
    /// as the last dictionary column when it was requested).
    pub matrices: GalerkinMatrices,
    /// Number of second-set initial states that exactly coincide with a
    /// first-set initial state. Treat a nonzero count as a warning: on
    /// shared states the learned dictionary has effectively seen its own
    /// test data, and residuals there inherit the single-set optimism.
    pub overlap_rows: usize,
    /// Dispatched computation result.
    pub output: DownstreamOutput,
}

/// Runs the two-set kernelized pipeline: learn a dictionary on `snap1`,
/// assemble Galerkin matrices on `snap2`, and dispatch the request.
pub fn kernel_resdmd(
    snap1: &SnapshotSet,
    snap2: &SnapshotSet,
    kernel: &KernelFunction,
    options: &KernelResdmdOptions,
    request: &DownstreamRequest,
) -> Result<KernelResdmd> {
    if snap2.x0.ncols() != snap1.x0.ncols() {
        return Err(Error::dimension(format!(
            "snapshot sets have state dimensions {} and {}",
            snap1.x0.ncols(),
            snap2.x0.ncols()
        )));
    }
    let dictionary = learn_dictionary(snap1, kernel, options.n_dict, options.eta)?;
    let overlap_rows = matching_rows(&snap1.x0, &snap2.x0);

    let mut psi0 = eval_learned(&dictionary, &snap2.x0)?;
    let mut psi1 = eval_learned(&dictionary, &snap2.x1)?;
    if options.append_constant {
        psi0 = append_constant_column(&psi0);
        psi1 = append_constant_column(&psi1);
    }
    let matrices = GalerkinMatrices::assemble(&psi0, &psi1, &snap2.weights)?;

    let output = match request {
        DownstreamRequest::Eigenpairs { cleanup_eps } => {
            let pairs = edmd_eigs(&matrices)?;
            DownstreamOutput::Eigenpairs(cleanup(&pairs, &matrices, *cleanup_eps)?)
        }
        DownstreamRequest::Pseudospectrum { grid, eps } => {
            DownstreamOutput::Pseudospectrum(pseudospectrum(&matrices, grid, *eps)?)
        }
        DownstreamRequest::Measure {
            observable,
            order,
            epsilon,
            thetas,
        } => {
            if observable.len() != snap2.len() {
                return Err(Error::dimension(format!(
                    "observable has {} values for {} snapshots",
                    observable.len(),
                    snap2.len()
                )));
            }
            let a = project_observable(&psi0, &snap2.weights, observable)?;
            let kernel = kernel_coeffs(*order, *epsilon, None)?;
            DownstreamOutput::Measure(measure_eval(&matrices, &a, &kernel, thetas)?)
        }
    };

    Ok(KernelResdmd {
        dictionary,
        matrices,
        overlap_rows,
        output,
    })
}

/// Number of rows of `b` that exactly equal some row of `a`.
fn matching_rows(a: &DMatrix<f64>, b: &DMatrix<f64>) -> usize {
    (0..b.nrows())
        .filter(|&i| {
            (0..a.nrows()).any(|j| (0..b.ncols()).all(|c| b[(i, c)] == a[(j, c)]))
        })
        .count()
}

/// Appends a column of ones.
fn append_constant_column(m: &CMat) -> CMat {
    CMat::from_fn(m.nrows(), m.ncols() + 1, |i, j| {
        if j < m.ncols() {
            m[(i, j)]
        } else {
            C64::new(1.0, 0.0)
        }
    })
}

/// Weighted least-squares projection of observable values onto the columns
/// of `psi0`, returned with unit Gram norm (`a* G a = 1`).
fn project_observable(psi0: &CMat, weights: &[f64], values: &CVec) -> Result<CVec> {
    let g = linalg::weighted_gram(psi0, weights, psi0)?;
    let vals_mat = CMat::from_fn(values.len(), 1, |i, _| values[i]);
    let rhs = linalg::weighted_gram(psi0, weights, &vals_mat)?;
    let wh = linalg::whiten(&g, linalg::DROP_TOL)?;
    let a_mat = &wh.forward * wh.forward.ad_mul(&rhs);
    let a = CVec::from_fn(a_mat.nrows(), |i, _| a_mat[(i, 0)]);
    let ga = &g * &a;
    let norm2 = a.dotc(&ga).re;
    let scale = values.iter().map(|v| v.norm_sqr()).sum::<f64>().max(1.0);
    if !(norm2 > 1e-28 * scale) {
        return Err(Error::argument(
            "observable has no component in the learned dictionary span",
        ));
    }
    Ok(a / C64::new(norm2.sqrt(), 0.0))
}
