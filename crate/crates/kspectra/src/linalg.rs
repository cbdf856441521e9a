//! Dense complex linear algebra used across the crate.
//!
//! Thin wrappers over nalgebra plus the few routines it lacks: eigenvectors
//! of a complex (non-Hermitian) matrix via Schur triangularization and
//! back-substitution, Gram-matrix whitening, and weighted Gram products with
//! a deterministic accumulation order.
//!
//! Determinism policy: every reduction in this module runs in a fixed
//! sequential order, independent of thread count. Parallelism elsewhere in
//! the crate is restricted to embarrassingly independent outputs (grid
//! points, trials), so results are byte-identical for any `--threads`.

use nalgebra::{Complex, DMatrix, DVector};

use crate::error::{Error, Result};

/// Complex scalar used throughout.
pub type C64 = Complex<f64>;
/// Dense complex matrix.
pub type CMat = DMatrix<C64>;
/// Dense complex vector.
pub type CVec = DVector<C64>;
/// Dense real vector.
pub type RVec = DVector<f64>;

/// Relative eigenvalue threshold below which a Gram direction is dropped
/// during whitening. Directions with `λ ≤ DROP_TOL · λ_max` carry no
/// trustworthy information at double precision.
pub const DROP_TOL: f64 = 1e-12;

/// Returns the conjugate transpose of `m`.
pub fn adjoint(m: &CMat) -> CMat {
    m.adjoint()
}

/// Hermitian eigendecomposition of `h` (symmetrized as `(h + h*)/2` first to
/// shed rounding asymmetry). Returns `(eigenvalues, eigenvectors)` with
/// eigenvalues ascending and eigenvectors as columns.
pub fn hermitian_eig(h: &CMat) -> Result<(RVec, CMat)> {
    if h.nrows() != h.ncols() {
        return Err(Error::dimension(format!(
            "hermitian_eig needs a square matrix, got {}x{}",
            h.nrows(),
            h.ncols()
        )));
    }
    let sym = (h + h.adjoint()).scale(0.5);
    let eig = sym.symmetric_eigen();
    // nalgebra does not guarantee an eigenvalue order; sort ascending and
    // permute the eigenvector columns to match.
    let n = eig.eigenvalues.len();
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let vals = RVec::from_iterator(n, idx.iter().map(|&i| eig.eigenvalues[i]));
    let mut vecs = CMat::zeros(n, n);
    for (out_col, &in_col) in idx.iter().enumerate() {
        vecs.set_column(out_col, &eig.eigenvectors.column(in_col));
    }
    Ok((vals, vecs))
}

/// Change of basis that orthonormalizes a Hermitian positive semi-definite
/// Gram matrix. With `G = V Λ V*`, the kept columns satisfy
/// `forward* G forward = I` on the retained subspace.
#[derive(Debug, Clone)]
pub struct Whitening {
    /// `B = V Λ^{-1/2}` restricted to kept directions (`n × kept`).
    /// New basis functions are `Ψ̃ = Ψ B`.
    pub forward: CMat,
    /// `V Λ^{1/2}` on kept directions (`n × kept`); maps whitened
    /// coefficient vectors back: `a ≈ back · ã` for `a` in the kept range.
    pub back: CMat,
    /// `Λ^{1/2} V*` (`kept × n`); maps coefficient vectors into the
    /// whitened basis: `ã = into · a`.
    pub into: CMat,
    /// Number of directions retained.
    pub kept: usize,
    /// Eigenvalues of `G` that were dropped (diagnostic).
    pub dropped: Vec<f64>,
}

impl Whitening {
    /// Conjugates a matrix into the whitened basis: `B* M B`.
    pub fn into_reduced(&self, m: &CMat) -> CMat {
        self.forward.ad_mul(m) * &self.forward
    }
}

/// Whitens a Hermitian PSD Gram matrix, dropping eigendirections with
/// `λ ≤ tol · λ_max` (and any negative rounding artifacts).
pub fn whiten(g: &CMat, tol: f64) -> Result<Whitening> {
    let (vals, vecs) = hermitian_eig(g)?;
    let n = vals.len();
    let lam_max = vals.iter().cloned().fold(0.0_f64, f64::max);
    if lam_max <= 0.0 {
        return Err(Error::numeric(
            "Gram matrix has no positive eigenvalue; cannot whiten",
        ));
    }
    let keep: Vec<usize> = (0..n).filter(|&i| vals[i] > tol * lam_max).collect();
    let dropped: Vec<f64> = (0..n).filter(|&i| vals[i] <= tol * lam_max).map(|i| vals[i]).collect();
    let kept = keep.len();
    let mut forward = CMat::zeros(n, kept);
    let mut back = CMat::zeros(n, kept);
    for (c, &i) in keep.iter().enumerate() {
        let s = vals[i].sqrt();
        let col = vecs.column(i);
        forward.set_column(c, &(col * C64::new(1.0 / s, 0.0)));
        back.set_column(c, &(col * C64::new(s, 0.0)));
    }
    let into = back.adjoint();
    Ok(Whitening {
        forward,
        back,
        into,
        kept,
        dropped,
    })
}

/// Complex Schur triangularization `a = Q T Q*` with `T` upper triangular.
/// Returns `(q, t)`.
pub fn schur(a: &CMat) -> Result<(CMat, CMat)> {
    if a.nrows() != a.ncols() {
        return Err(Error::dimension("schur needs a square matrix"));
    }
    let s = a
        .clone()
        .try_schur(f64::EPSILON, 0)
        .ok_or_else(|| Error::numeric("Schur iteration failed to converge"))?;
    let (q, t) = s.unpack();
    Ok((q, t))
}

/// Eigenvectors of an upper-triangular complex matrix by back-substitution.
/// Column `k` of the result is a unit-norm eigenvector for `t[(k,k)]`.
///
/// Near-multiple eigenvalues make the linear systems singular; denominators
/// smaller than `smin` are clamped to `smin` (standard practice), which
/// returns a well-scaled vector that is still an eigenvector to working
/// accuracy whenever the eigenvalue cluster is.
pub fn triangular_eigenvectors(t: &CMat) -> CMat {
    let n = t.nrows();
    let norm_t = t.norm();
    let smin = (n as f64) * f64::EPSILON * norm_t.max(f64::MIN_POSITIVE);
    let mut vecs = CMat::zeros(n, n);
    for k in 0..n {
        let lambda = t[(k, k)];
        let mut y = CVec::zeros(n);
        y[k] = C64::new(1.0, 0.0);
        for i in (0..k).rev() {
            let mut s = C64::new(0.0, 0.0);
            for j in (i + 1)..=k {
                s += t[(i, j)] * y[j];
            }
            let mut d = t[(i, i)] - lambda;
            if d.norm() < smin {
                d = C64::new(smin, 0.0);
            }
            y[i] = -s / d;
            // Rescale on the fly if the solution is blowing up, to avoid
            // overflow for highly non-normal triangles.
            let m = y[i].norm();
            if m > 1e100 {
                let scale = C64::new(1.0 / m, 0.0);
                for v in y.iter_mut() {
                    *v *= scale;
                }
            }
        }
        let norm = y.norm();
        vecs.set_column(k, &(y / C64::new(norm, 0.0)));
    }
    vecs
}

/// Full eigendecomposition of a general complex matrix via Schur
/// triangularization. Returns `(eigenvalues, eigenvectors)` with unit-norm
/// eigenvector columns, in Schur order (no sorting).
pub fn eig(a: &CMat) -> Result<(CVec, CMat)> {
    let (q, t) = schur(a)?;
    let n = t.nrows();
    let vals = CVec::from_iterator(n, (0..n).map(|i| t[(i, i)]));
    let vecs = &q * triangular_eigenvectors(&t);
    Ok((vals, vecs))
}

/// Solves `a x = b` for dense complex `a` by LU with partial pivoting.
pub fn solve_lu(a: &CMat, b: &CVec) -> Result<CVec> {
    let lu = a.clone().lu();
    lu.solve(b)
        .ok_or_else(|| Error::numeric("LU solve failed: matrix is singular to working precision"))
}

/// Solves the upper-triangular system `(t - shift·I) x = b` in O(n²).
pub fn solve_shifted_upper_triangular(t: &CMat, shift: C64, b: &CVec) -> Result<CVec> {
    let n = t.nrows();
    let mut x = b.clone();
    for i in (0..n).rev() {
        let mut s = x[i];
        for j in (i + 1)..n {
            s -= t[(i, j)] * x[j];
        }
        let d = t[(i, i)] - shift;
        if d.norm() == 0.0 {
            return Err(Error::numeric(
                "shifted triangular solve hit an exactly singular diagonal",
            ));
        }
        x[i] = s / d;
    }
    Ok(x)
}

/// Weighted Gram product `a* diag(w) b` accumulated column-by-column in a
/// fixed order. `a` is `m×p`, `b` is `m×q`, `w` has length `m`.
pub fn weighted_gram(a: &CMat, w: &[f64], b: &CMat) -> Result<CMat> {
    let m = a.nrows();
    if b.nrows() != m || w.len() != m {
        return Err(Error::dimension(format!(
            "weighted_gram: rows a={}, rows b={}, weights={}",
            m,
            b.nrows(),
            w.len()
        )));
    }
    let p = a.ncols();
    let q = b.ncols();
    let mut out = CMat::zeros(p, q);
    let mut buf: Vec<C64> = vec![C64::new(0.0, 0.0); m];
    for k in 0..q {
        let bk = b.column(k);
        for (i, v) in buf.iter_mut().enumerate() {
            *v = bk[i] * C64::new(w[i], 0.0);
        }
        for j in 0..p {
            let aj = a.column(j);
            let mut s = C64::new(0.0, 0.0);
            for i in 0..m {
                s += aj[i].conj() * buf[i];
            }
            out[(j, k)] = s;
        }
    }
    Ok(out)
}

/// Frobenius-norm relative difference `‖x − y‖ / max(‖y‖, floor)`; a small
/// helper for tests and internal consistency checks.
pub fn rel_diff(x: &CMat, y: &CMat) -> f64 {
    (x - y).norm() / y.norm().max(1e-300)
}
