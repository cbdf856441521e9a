//! Galerkin approximation of the Koopman operator and residual-based
//! spectral computations.
//!
//! From snapshot pairs `(x0, x1)` with quadrature weights `w`, three
//! matrices summarize everything the rest of the crate needs:
//!
//! ```text
//! G = Psi0* W Psi0      (Gram matrix of the dictionary)
//! A = Psi0* W Psi1      (Galerkin compression of the operator)
//! L = Psi1* W Psi1      (Gram matrix of the advanced dictionary)
//! ```
//!
//! where `Psi0`/`Psi1` are the dictionary evaluated on `x0`/`x1` and `W`
//! is the diagonal weight matrix. EDMD eigenpairs solve the pencil
//! `A g = lambda G g`. The squared residual of a candidate pair,
//!
//! ```text
//! res(lambda, g)^2 = g*(L - lambda A* - conj(lambda) A + |lambda|^2 G)g / (g* G g),
//! ```
//!
//! equals the data-driven norm of `(K - lambda)g` and upper-bounds the
//! true one in the infinite-data limit, which is what lets us certify
//! eigenpairs instead of hoping the discretization was kind. Minimizing
//! the same quadratic form over `g` gives a pointwise function `tau`
//! whose sublevel sets approximate the approximate-point pseudospectrum
//! from the inside; a companion bound `upsilon` built from
//! `A G^{-1} A*` covers the residual spectrum of the adjoint, and the
//! union of the two sublevel sets recovers the full pseudospectrum.
//!
//! Rank-deficient Gram matrices are handled throughout by whitening:
//! `G` is eigendecomposed once, directions below a relative tolerance
//! are dropped, and every pencil is solved in the reduced orthonormal
//! coordinates. This is deliberate policy, not a fallback: quadrature
//! rules with fewer nodes than dictionary functions and duplicated
//! dictionary entries both produce singular `G` in ordinary use.

use nalgebra::DMatrix;
use num_complex::Complex;
use rayon::prelude::*;

use crate::dictionary::Dictionary;
use crate::dynamics::{SnapshotSet, System};
use crate::error::{Error, Result};
use crate::linalg::{self, C64, CMat, CVec, Whitening};

/// Galerkin matrices of a Koopman operator over a finite dictionary.
#[derive(Debug, Clone)]
pub struct GalerkinMatrices {
    /// Dictionary Gram matrix `Psi0* W Psi0`.
    pub g: CMat,
    /// Operator compression `Psi0* W Psi1`.
    pub a: CMat,
    /// Advanced Gram matrix `Psi1* W Psi1`.
    pub l: CMat,
    /// True when the matrices are exact operator truncations rather
    /// than quadrature estimates (see [`GalerkinMatrices::exact_sequence`]).
    pub exact: bool,
}

/// A candidate eigenpair: eigenvalue, dictionary coefficients, and the
/// data-driven residual once it has been evaluated.
#[derive(Debug, Clone)]
pub struct Eigenpair {
    /// Eigenvalue of the finite-dimensional pencil.
    pub lambda: C64,
    /// Coefficients of the eigenfunction in the dictionary, normalized
    /// so that `g* G g = 1`.
    pub coeffs: CVec,
    /// Residual `res(lambda, g)`; `None` until [`cleanup`] fills it in.
    pub residual: Option<f64>,
}

/// Output of a pseudospectrum sweep over a grid of spectral parameters.
#[derive(Debug, Clone)]
pub struct PseudospectrumResult {
    /// Grid points, in the order supplied.
    pub grid: Vec<C64>,
    /// `tau` value at each grid point.
    pub tau: Vec<f64>,
    /// Indices of grid points with `tau < eps` (strict).
    pub accepted: Vec<usize>,
    /// Minimizing coefficient vectors, one column per grid point, each
    /// normalized so `g* G g = 1`.
    pub argmins: CMat,
}

/// Output of a two-sided pseudospectrum sweep combining `tau` and the
/// adjoint-side bound `upsilon`.
#[derive(Debug, Clone)]
pub struct FullPseudospectrumResult {
    /// Grid points, in the order supplied.
    pub grid: Vec<C64>,
    /// `tau` value at each grid point.
    pub tau: Vec<f64>,
    /// `upsilon` value at each grid point.
    pub upsilon: Vec<f64>,
    /// Indices accepted by either branch: `tau < eps` or
    /// `upsilon + 1/n2 <= eps`.
    pub accepted: Vec<usize>,
}

/// Koopman modes together with the relative reconstruction residual of
/// the snapshot states they were fit against.
#[derive(Debug, Clone)]
pub struct KoopmanModes {
    /// One row per eigenpair, one column per state coordinate.
    pub modes: CMat,
    /// `||sqrt(W)(X0 - Phi * modes)||_F / ||sqrt(W) X0||_F`.
    pub relative_residual: f64,
}

impl GalerkinMatrices {
    /// Assembles the Galerkin matrices from dictionary evaluations.
    ///
    /// `psi0` and `psi1` are `M x N` matrices whose rows evaluate the
    /// dictionary at the initial and advanced snapshots; `weights` has
    /// length `M`. Weights are expected to be non-negative: pseudospectra
    /// and residuals interpret the weighted sums as squared norms.
    pub fn assemble(psi0: &CMat, psi1: &CMat, weights: &[f64]) -> Result<Self> {
        if psi0.nrows() == 0 || psi0.ncols() == 0 {
            return Err(Error::argument(
                "assemble requires at least one snapshot and one dictionary function",
            ));
        }
        if psi0.shape() != psi1.shape() {
            return Err(Error::dimension(format!(
                "snapshot evaluation shapes differ: {:?} vs {:?}",
                psi0.shape(),
                psi1.shape()
            )));
        }
        let g = linalg::weighted_gram(psi0, weights, psi0)?;
        let a = linalg::weighted_gram(psi0, weights, psi1)?;
        let l = linalg::weighted_gram(psi1, weights, psi1)?;
        Ok(Self { g, a, l, exact: false })
    }

    /// Assembles the Galerkin matrices directly from a snapshot set and a
    /// dictionary: evaluates the dictionary on both snapshot columns and
    /// forms the three weighted products.
    pub fn from_snapshots(snap: &SnapshotSet, dict: &Dictionary) -> Result<Self> {
        let psi0 = dict.eval_matrix(&snap.x0)?;
        let psi1 = dict.eval_matrix(&snap.x1)?;
        Self::assemble(&psi0, &psi1, &snap.weights)
    }

    /// Exact Galerkin matrices for a sequence-space system with a known
    /// banded matrix representation (the lattice shift and the CMV
    /// operator).
    ///
    /// For these systems the canonical basis is orthonormal, so `G` is
    /// the identity; `A` is the `n x n` truncation of the operator
    /// matrix; and because the full operator is an isometry, the `(j,k)`
    /// entries of `K*K` over the *infinite* index set are exactly
    /// `delta_{jk}`, so `L` is the identity as well. Note that `L` is
    /// *not* `A* A`: the truncation of a product is not the product of
    /// truncations.
    ///
    /// `n` may be at most the system's stored truncation size; the
    /// leading `n x n` block of a banded truncation is itself exact.
    pub fn exact_sequence(system: &System, n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::argument("exact truncation size must be positive"));
        }
        let u = system.banded_truncation().ok_or_else(|| {
            Error::argument("system has no exact banded matrix representation")
        })?;
        if n > u.nrows() {
            return Err(Error::argument(format!(
                "requested truncation {n} exceeds the system's stored size {}",
                u.nrows()
            )));
        }
        let a = u.view((0, 0), (n, n)).map(|x| Complex::new(x, 0.0));
        Ok(Self {
            g: CMat::identity(n, n),
            a,
            l: CMat::identity(n, n),
            exact: true,
        })
    }

    /// Dictionary size `N`.
    pub fn n(&self) -> usize {
        self.g.nrows()
    }

    pub(crate) fn validate(&self) -> Result<()> {
        let n = self.g.nrows();
        if self.g.ncols() != n || self.a.shape() != (n, n) || self.l.shape() != (n, n) {
            return Err(Error::dimension(format!(
                "Galerkin matrices must be square and same-size: G {:?}, A {:?}, L {:?}",
                self.g.shape(),
                self.a.shape(),
                self.l.shape()
            )));
        }
        if n == 0 {
            return Err(Error::argument("Galerkin matrices are empty"));
        }
        Ok(())
    }
}

/// Data-driven residual `res(lambda, g)` of a candidate eigenpair.
///
/// Returns the square root of
/// `g*(L - lambda A* - conj(lambda) A + |lambda|^2 G)g / (g* G g)`,
/// clamping small negative values (which arise from rounding when the
/// residual is near zero) to zero.
pub fn residual(lambda: C64, coeffs: &CVec, mats: &GalerkinMatrices) -> Result<f64> {
    mats.validate()?;
    if coeffs.len() != mats.n() {
        return Err(Error::dimension(format!(
            "coefficient vector has length {}, expected {}",
            coeffs.len(),
            mats.n()
        )));
    }
    let denom = quadratic_form(&mats.g, coeffs);
    if !(denom > 0.0) {
        return Err(Error::numeric(
            "residual undefined: candidate eigenfunction has zero norm in the data inner product",
        ));
    }
    let numer = residual_form(lambda, coeffs, mats);
    Ok((numer / denom).max(0.0).sqrt())
}

/// `g* H(lambda) g` with `H = L - lambda A* - conj(lambda) A + |lambda|^2 G`.
fn residual_form(lambda: C64, coeffs: &CVec, mats: &GalerkinMatrices) -> f64 {
    let lg = &mats.l * coeffs;
    let ag = &mats.a * coeffs;
    let atg = mats.a.ad_mul(coeffs);
    let gg = &mats.g * coeffs;
    let term_l = coeffs.dotc(&lg);
    let term_at = coeffs.dotc(&atg);
    let term_a = coeffs.dotc(&ag);
    let term_g = coeffs.dotc(&gg);
    (term_l - lambda * term_at - lambda.conj() * term_a + lambda.norm_sqr() * term_g).re
}

fn quadratic_form(m: &CMat, v: &CVec) -> f64 {
    v.dotc(&(m * v)).re
}

/// EDMD eigenpairs: solutions of `A g = lambda G g`.
///
/// The Gram matrix is whitened first, so a rank-deficient `G` yields
/// eigenpairs of the pencil restricted to the numerically non-null
/// subspace. Eigenfunctions are normalized to `g* G g = 1` and pairs
/// are returned sorted by decreasing `|lambda|` (ties broken by
/// argument). Residuals are left unevaluated; see [`cleanup`].
pub fn edmd_eigs(mats: &GalerkinMatrices) -> Result<Vec<Eigenpair>> {
    mats.validate()?;
    let wh = linalg::whiten(&mats.g, linalg::DROP_TOL)?;
    let a_t = wh.into_reduced(&mats.a);
    let (vals, vecs) = linalg::eig(&a_t)?;
    let mut pairs: Vec<Eigenpair> = (0..vals.len())
        .map(|j| {
            let y = vecs.column(j).into_owned();
            Eigenpair {
                lambda: vals[j],
                coeffs: &wh.forward * y,
                residual: None,
            }
        })
        .collect();
    pairs.sort_by(|p, q| {
        q.lambda
            .norm()
            .partial_cmp(&p.lambda.norm())
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(
                p.lambda
                    .arg()
                    .partial_cmp(&q.lambda.arg())
                    .unwrap_or(std::cmp::Ordering::Equal),
            )
    });
    Ok(pairs)
}

/// Residual-based cleanup of EDMD eigenpairs.
///
/// Evaluates `res(lambda, g)` for every pair, stores it, and keeps only
/// pairs with residual at most `eps`. Everything this returns is
/// certified: in the infinite-data limit each kept eigenvalue lies
/// within the `eps`-pseudospectrum of the true operator, no matter how
/// badly the finite section lies about the spectrum itself.
pub fn cleanup(
    pairs: &[Eigenpair],
    mats: &GalerkinMatrices,
    eps: f64,
) -> Result<Vec<Eigenpair>> {
    if !(eps >= 0.0) {
        return Err(Error::argument("cleanup tolerance must be nonnegative"));
    }
    let mut kept = Vec::new();
    for pair in pairs {
        let r = residual(pair.lambda, &pair.coeffs, mats)?;
        if r <= eps {
            kept.push(Eigenpair {
                lambda: pair.lambda,
                coeffs: pair.coeffs.clone(),
                residual: Some(r),
            });
        }
    }
    Ok(kept)
}

/// Shared whitened state for `tau` sweeps: built once, reused per point.
struct TauPencil {
    a_t: CMat,
    l_t: CMat,
    wh: Whitening,
}

impl TauPencil {
    fn new(mats: &GalerkinMatrices) -> Result<Self> {
        mats.validate()?;
        let wh = linalg::whiten(&mats.g, linalg::DROP_TOL)?;
        Ok(Self {
            a_t: wh.into_reduced(&mats.a),
            l_t: wh.into_reduced(&mats.l),
            wh,
        })
    }

    /// Smallest residual over the dictionary span at `lambda`, plus the
    /// minimizing coefficients in the original basis.
    fn tau_at(&self, lambda: C64) -> Result<(f64, CVec)> {
        let k = self.a_t.nrows();
        let mut h = self.l_t.clone();
        h -= self.a_t.adjoint() * lambda;
        h -= &self.a_t * lambda.conj();
        let abs2 = Complex::new(lambda.norm_sqr(), 0.0);
        for i in 0..k {
            h[(i, i)] += abs2;
        }
        let (vals, vecs) = linalg::hermitian_eig(&h)?;
        let y = vecs.column(0).into_owned();
        Ok((vals[0].max(0.0).sqrt(), &self.wh.forward * y))
    }
}

/// Smallest data-driven residual at `lambda` over the dictionary span:
///
/// ```text
/// tau(lambda)^2 = min_g  g* H(lambda) g / g* G g,
/// H(lambda) = L - lambda A* - conj(lambda) A + |lambda|^2 G.
/// ```
///
/// `tau` upper-bounds the injection modulus of `K - lambda` in the
/// infinite-data limit, is non-increasing as the dictionary grows, and
/// is 1-Lipschitz in `lambda` for exact truncations.
pub fn tau(lambda: C64, mats: &GalerkinMatrices) -> Result<f64> {
    Ok(TauPencil::new(mats)?.tau_at(lambda)?.0)
}

/// Pseudospectrum sweep: evaluates `tau` on a grid and accepts points
/// with `tau < eps` (strict inequality).
///
/// Accepted points lie in the `eps`-approximate-point pseudospectrum of
/// the true operator in the infinite-data limit, and the accepted set
/// converges to it as the dictionary grows. Grid points are processed
/// in parallel; the output is identical regardless of thread count.
pub fn pseudospectrum(
    mats: &GalerkinMatrices,
    grid: &[C64],
    eps: f64,
) -> Result<PseudospectrumResult> {
    if !(eps > 0.0) {
        return Err(Error::argument("pseudospectrum tolerance must be positive"));
    }
    let pencil = TauPencil::new(mats)?;
    let n = mats.n();
    let evaluated: Vec<(f64, CVec)> = grid
        .par_iter()
        .map(|&z| pencil.tau_at(z))
        .collect::<Result<_>>()?;
    let mut tau = Vec::with_capacity(grid.len());
    let mut argmins = CMat::zeros(n, grid.len());
    let mut accepted = Vec::new();
    for (j, (t, gvec)) in evaluated.into_iter().enumerate() {
        if t < eps {
            accepted.push(j);
        }
        tau.push(t);
        argmins.set_column(j, &gvec);
    }
    Ok(PseudospectrumResult {
        grid: grid.to_vec(),
        tau,
        accepted,
        argmins,
    })
}

/// Shared state for `upsilon` sweeps at a fixed sub-dictionary size.
struct UpsilonPencil {
    /// `A G^{-1} A*` (pseudo-inverse when `G` is rank deficient),
    /// restricted to the leading `n2` coordinates.
    m0: CMat,
    a_sub: CMat,
    g_sub: CMat,
    wh_sub: Whitening,
}

impl UpsilonPencil {
    fn new(mats: &GalerkinMatrices, n2: usize) -> Result<Self> {
        mats.validate()?;
        let n = mats.n();
        if n2 == 0 || n2 > n {
            return Err(Error::argument(format!(
                "adjoint sub-dictionary size must lie in 1..={n}, got {n2}"
            )));
        }
        let wh = linalg::whiten(&mats.g, linalg::DROP_TOL)?;
        // A G^{-1} A* = (A B)(A B)* with B the whitening map, which keeps
        // the product Hermitian positive semidefinite by construction.
        let ab = &mats.a * &wh.forward;
        let m0 = (&ab * ab.adjoint()).view((0, 0), (n2, n2)).into_owned();
        let a_sub = mats.a.view((0, 0), (n2, n2)).into_owned();
        let g_sub = mats.g.view((0, 0), (n2, n2)).into_owned();
        let wh_sub = linalg::whiten(&g_sub, linalg::DROP_TOL)?;
        Ok(Self { m0, a_sub, g_sub, wh_sub })
    }

    fn upsilon_at(&self, lambda: C64) -> Result<f64> {
        let mut m = self.m0.clone();
        m -= self.a_sub.adjoint() * lambda;
        m -= &self.a_sub * lambda.conj();
        m += self.g_sub.scale(lambda.norm_sqr());
        let m_t = self.wh_sub.into_reduced(&m);
        let (vals, _) = linalg::hermitian_eig(&m_t)?;
        Ok(vals[0].max(0.0).sqrt())
    }
}

/// Adjoint-side residual bound `upsilon`.
///
/// Over coefficient vectors supported on the leading `n2` dictionary
/// functions, minimizes the Rayleigh quotient of
///
/// ```text
/// M(lambda) = A G^{-1} A* - lambda A* - conj(lambda) A + |lambda|^2 G
/// ```
///
/// against `G`, both restricted to the leading `n2 x n2` block, and
/// returns the square root (negative rounding clamped to zero). The
/// full matrices play the role of a large inner truncation: `upsilon`
/// is non-decreasing in the outer size `n` and converges up to the
/// value of `tau` at `conj(lambda)` for the adjoint operator, so small
/// values of `upsilon + 1/n2` certify points of the pseudospectrum
/// that `tau` alone misses (residual spectrum of the adjoint).
pub fn adjoint_tau(lambda: C64, mats: &GalerkinMatrices, n2: usize) -> Result<f64> {
    UpsilonPencil::new(mats, n2)?.upsilon_at(lambda)
}

/// Two-sided pseudospectrum sweep.
///
/// Accepts grid points where either `tau < eps` (approximate point
/// spectrum side) or `upsilon + 1/n2 <= eps` (adjoint side, with the
/// additive safety margin and non-strict inequality). The union
/// converges to the full `eps`-pseudospectrum as the truncation sizes
/// grow.
pub fn full_pseudospectrum(
    mats: &GalerkinMatrices,
    grid: &[C64],
    eps: f64,
    n2: usize,
) -> Result<FullPseudospectrumResult> {
    if !(eps > 0.0) {
        return Err(Error::argument("pseudospectrum tolerance must be positive"));
    }
    let tau_pencil = TauPencil::new(mats)?;
    let ups_pencil = UpsilonPencil::new(mats, n2)?;
    let margin = 1.0 / n2 as f64;
    let evaluated: Vec<(f64, f64)> = grid
        .par_iter()
        .map(|&z| Ok((tau_pencil.tau_at(z)?.0, ups_pencil.upsilon_at(z)?)))
        .collect::<Result<_>>()?;
    let mut tau = Vec::with_capacity(grid.len());
    let mut upsilon = Vec::with_capacity(grid.len());
    let mut accepted = Vec::new();
    for (j, (t, u)) in evaluated.into_iter().enumerate() {
        if t < eps || u + margin <= eps {
            accepted.push(j);
        }
        tau.push(t);
        upsilon.push(u);
    }
    Ok(FullPseudospectrumResult {
        grid: grid.to_vec(),
        tau,
        upsilon,
        accepted,
    })
}

/// Koopman modes: weighted least-squares coefficients expressing the
/// snapshot states in terms of eigenfunction samples.
///
/// `Phi = Psi0 * [g_1 .. g_m]` collects the eigenfunction values at the
/// initial snapshots; the modes solve `min ||sqrt(W)(X0 - Phi Xi)||_F`.
/// Fails if the eigenfunction samples are numerically rank deficient
/// (duplicated eigenpairs, or eigenfunctions indistinguishable on the
/// data), since the fit is then meaningless.
pub fn koopman_modes(
    pairs: &[Eigenpair],
    psi0: &CMat,
    x0: &DMatrix<f64>,
    weights: &[f64],
) -> Result<KoopmanModes> {
    if pairs.is_empty() {
        return Err(Error::argument("koopman_modes requires at least one eigenpair"));
    }
    let m = psi0.nrows();
    if x0.nrows() != m || weights.len() != m {
        return Err(Error::dimension(format!(
            "snapshot rows mismatch: psi0 has {}, states have {}, weights have {}",
            m,
            x0.nrows(),
            weights.len()
        )));
    }
    let n = psi0.ncols();
    let k = pairs.len();
    let mut basis = CMat::zeros(n, k);
    for (j, pair) in pairs.iter().enumerate() {
        if pair.coeffs.len() != n {
            return Err(Error::dimension(format!(
                "eigenpair {j} has {} coefficients, dictionary has {n}",
                pair.coeffs.len()
            )));
        }
        basis.set_column(j, &pair.coeffs);
    }
    let sqrt_w: Vec<f64> = weights.iter().map(|w| w.abs().sqrt()).collect();
    let mut phi = psi0 * basis;
    let mut rhs = x0.map(|v| Complex::new(v, 0.0));
    for i in 0..m {
        let s = Complex::new(sqrt_w[i], 0.0);
        phi.row_mut(i).scale_mut(sqrt_w[i]);
        for j in 0..rhs.ncols() {
            rhs[(i, j)] *= s;
        }
    }
    let rhs_norm = rhs.norm();
    if !(rhs_norm > 0.0) {
        return Err(Error::argument("snapshot states are identically zero"));
    }
    let svd = phi.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let tol = smax * linalg::DROP_TOL;
    if svd.singular_values.iter().any(|&s| s <= tol) {
        return Err(Error::numeric(
            "eigenfunction samples are rank deficient; modes are not identifiable",
        ));
    }
    let modes = svd
        .solve(&rhs, tol)
        .map_err(|e| Error::numeric(format!("mode least squares failed: {e}")))?;
    let relative_residual = (&phi * &modes - &rhs).norm() / rhs_norm;
    Ok(KoopmanModes { modes, relative_residual })
}

/// Rectangular grid of complex points, inclusive of endpoints, real
/// part varying fastest. A single point along an axis collapses to the
/// lower endpoint.
pub fn grid_rect(
    re: (f64, f64),
    im: (f64, f64),
    n_re: usize,
    n_im: usize,
) -> Result<Vec<C64>> {
    if n_re == 0 || n_im == 0 {
        return Err(Error::argument("grid must have at least one point per axis"));
    }
    if re.1 < re.0 || im.1 < im.0 {
        return Err(Error::argument("grid bounds must satisfy lo <= hi"));
    }
    let step = |lo: f64, hi: f64, n: usize, i: usize| {
        if n == 1 {
            lo
        } else {
            lo + (hi - lo) * i as f64 / (n - 1) as f64
        }
    };
    let mut out = Vec::with_capacity(n_re * n_im);
    for j in 0..n_im {
        let y = step(im.0, im.1, n_im, j);
        for i in 0..n_re {
            out.push(Complex::new(step(re.0, re.1, n_re, i), y));
        }
    }
    Ok(out)
}

/// Square lattice `(1/n)(Z + iZ)` clipped to the disc `|z| <= n`:
/// the default grid pattern when no region of interest is known.
pub fn grid_lattice(n: usize) -> Result<Vec<C64>> {
    if n == 0 {
        return Err(Error::argument("lattice resolution must be positive"));
    }
    let nf = n as f64;
    let extent = (n * n) as i64;
    let mut out = Vec::new();
    for q in -extent..=extent {
        for p in -extent..=extent {
            let z = Complex::new(p as f64 / nf, q as f64 / nf);
            if z.norm() <= nf {
                out.push(z);
            }
        }
    }
    Ok(out)
}
