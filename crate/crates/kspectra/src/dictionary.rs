//! Observable dictionaries: orthonormal bases `{ψ_1, …, ψ_{N_K}}` and the
//! feature-map evaluation `Ψ(x)` used in Galerkin assembly.
//!
//! A dictionary is a product of one-dimensional bases (Fourier modes on a
//! periodic interval, Hermite functions on an unbounded axis, transplanted
//! Legendre polynomials on a bounded interval) restricted to a multi-index
//! set — either a full range or a hyperbolic cross — plus the canonical
//! basis of sequence spaces, whose "points" are coefficient vectors.
//!
//! Every basis is orthonormal with respect to its axis reference measure,
//! so Gram matrices assembled with adequate quadrature are near the
//! identity; that property is verified in tests rather than assumed.

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::linalg::{C64, CMat, CVec};
use crate::quadrature::QuadratureRule;

/// Default cap on dictionary size.
pub const DEFAULT_DICT_CAP: usize = 100_000;

/// One-dimensional basis attached to one state coordinate.
#[derive(Debug, Clone, PartialEq)]
pub enum AxisBasis {
    /// `e^{i k ω (x − c)} / √(b−a)` with `ω = 2π/(b−a)` and `c = (a+b)/2`,
    /// orthonormal on `[a, b]` with Lebesgue measure; signed indices.
    FourierPeriodic { a: f64, b: f64 },
    /// Hermite functions `h_n` (normalized Gaussian times Hermite
    /// polynomial), orthonormal on `R`; indices `n ≥ 0`.
    HermiteFunction,
    /// `√((2j+1)/(b−a)) · P_j(2(x−a)/(b−a) − 1)`, orthonormal on `[a, b]`;
    /// indices `j ≥ 0`.
    LegendreTransplanted { a: f64, b: f64 },
}

impl AxisBasis {
    /// Whether indices on this axis may be negative.
    fn signed(&self) -> bool {
        matches!(self, AxisBasis::FourierPeriodic { .. })
    }
}

/// A dictionary of observables over `R^d` (product bases with a multi-index
/// set) or over a sequence space (canonical coordinate functionals).
#[derive(Debug, Clone, PartialEq)]
pub enum Dictionary {
    /// Product of one-dimensional bases; `indices[n]` lists one index per
    /// axis for the `n`-th observable.
    Product {
        axes: Vec<AxisBasis>,
        indices: Vec<Vec<i64>>,
    },
    /// Canonical sequence-space dictionary `ψ_j(x) = x_j` for states that
    /// are coefficient vectors of length `state_dim`.
    Canonical { state_dim: usize, size: usize },
}

impl Dictionary {
    /// Product dictionary from explicit axes and multi-indices.
    pub fn product(axes: Vec<AxisBasis>, indices: Vec<Vec<i64>>) -> Result<Self> {
        if axes.is_empty() {
            return Err(Error::argument("dictionary needs at least one axis"));
        }
        for (n, idx) in indices.iter().enumerate() {
            if idx.len() != axes.len() {
                return Err(Error::dimension(format!(
                    "multi-index {n} has {} components, dictionary has {} axes",
                    idx.len(),
                    axes.len()
                )));
            }
            for (ax, (&k, basis)) in idx.iter().zip(&axes).enumerate() {
                if k < 0 && !basis.signed() {
                    return Err(Error::argument(format!(
                        "axis {ax} does not admit the negative index {k}"
                    )));
                }
            }
        }
        Ok(Dictionary::Product { axes, indices })
    }

    /// One-dimensional transplanted Legendre dictionary with degrees
    /// `0..n` on `[a, b]`.
    pub fn legendre(a: f64, b: f64, n: usize) -> Result<Self> {
        if !(a < b) {
            return Err(Error::argument("legendre interval must satisfy a < b"));
        }
        Dictionary::product(
            vec![AxisBasis::LegendreTransplanted { a, b }],
            (0..n as i64).map(|j| vec![j]).collect(),
        )
    }

    /// One-dimensional Fourier dictionary with modes `−k_max..=k_max` on
    /// `[a, b]` (so `N_K = 2 k_max + 1`).
    pub fn fourier(a: f64, b: f64, k_max: usize) -> Result<Self> {
        if !(a < b) {
            return Err(Error::argument("fourier interval must satisfy a < b"));
        }
        Dictionary::product(
            vec![AxisBasis::FourierPeriodic { a, b }],
            (-(k_max as i64)..=k_max as i64).map(|k| vec![k]).collect(),
        )
    }

    /// One-dimensional Hermite-function dictionary with degrees `0..n`.
    pub fn hermite(n: usize) -> Result<Self> {
        Dictionary::product(
            vec![AxisBasis::HermiteFunction],
            (0..n as i64).map(|j| vec![j]).collect(),
        )
    }

    /// Canonical sequence-space dictionary: the first `size` coordinate
    /// functionals of a `state_dim`-dimensional coefficient vector.
    pub fn canonical(state_dim: usize, size: usize) -> Result<Self> {
        if size == 0 || state_dim == 0 {
            return Err(Error::argument("canonical dictionary must be non-empty"));
        }
        if size > state_dim {
            return Err(Error::argument(format!(
                "canonical dictionary size {size} exceeds state dimension {state_dim}"
            )));
        }
        Ok(Dictionary::Canonical { state_dim, size })
    }

    /// Hyperbolic-cross dictionary: all multi-indices with
    /// `∏_i (1 + |k_i|) ≤ order`, in lexicographic order. Signed axes
    /// (Fourier) range over negative indices too.
    pub fn hyperbolic_cross(axes: Vec<AxisBasis>, order: usize, cap: usize) -> Result<Self> {
        if axes.is_empty() {
            return Err(Error::argument("hyperbolic cross needs at least one axis"));
        }
        if order < 1 {
            return Err(Error::argument("hyperbolic cross order must be ≥ 1"));
        }
        let mut indices: Vec<Vec<i64>> = Vec::new();
        let mut current = vec![0_i64; axes.len()];
        let max_abs = order as i64 - 1;
        // depth-first enumeration in lexicographic order
        fn recurse(
            axes: &[AxisBasis],
            order: u128,
            max_abs: i64,
            ax: usize,
            weight: u128,
            current: &mut Vec<i64>,
            out: &mut Vec<Vec<i64>>,
            cap: usize,
        ) -> Result<()> {
            if ax == axes.len() {
                out.push(current.clone());
                if out.len() > cap {
                    return Err(Error::resource(format!(
                        "hyperbolic cross exceeds the dictionary cap of {cap}"
                    )));
                }
                return Ok(());
            }
            let lo = if axes[ax].signed() { -max_abs } else { 0 };
            for k in lo..=max_abs {
                let w = weight * (1 + k.unsigned_abs() as u128);
                if w <= order {
                    current[ax] = k;
                    recurse(axes, order, max_abs, ax + 1, w, current, out, cap)?;
                }
            }
            current[ax] = 0;
            Ok(())
        }
        recurse(
            &axes,
            order as u128,
            max_abs,
            0,
            1,
            &mut current,
            &mut indices,
            cap,
        )?;
        Dictionary::product(axes, indices)
    }

    /// Number of observables `N_K`.
    pub fn len(&self) -> usize {
        match self {
            Dictionary::Product { indices, .. } => indices.len(),
            Dictionary::Canonical { size, .. } => *size,
        }
    }

    /// True when the dictionary is empty (rejected by constructors).
    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Expected state dimension of evaluation points.
    pub fn state_dim(&self) -> usize {
        match self {
            Dictionary::Product { axes, .. } => axes.len(),
            Dictionary::Canonical { state_dim, .. } => *state_dim,
        }
    }

    /// The multi-index list (empty for canonical dictionaries).
    pub fn indices(&self) -> Vec<Vec<i64>> {
        match self {
            Dictionary::Product { indices, .. } => indices.clone(),
            Dictionary::Canonical { size, .. } => {
                (0..*size as i64).map(|j| vec![j]).collect()
            }
        }
    }

    /// Evaluates the feature map on a batch of points: row `j` of the
    /// result is `Ψ(x_j)`. Points are rows of an `M×d` matrix.
    pub fn eval_matrix(&self, points: &DMatrix<f64>) -> Result<CMat> {
        if points.ncols() != self.state_dim() {
            return Err(Error::dimension(format!(
                "points have dim {}, dictionary expects {}",
                points.ncols(),
                self.state_dim()
            )));
        }
        let m = points.nrows();
        let nk = self.len();
        let rows: Vec<Result<Vec<C64>>> = (0..m)
            .into_par_iter()
            .map(|j| {
                let x: Vec<f64> = points.row(j).iter().cloned().collect();
                self.eval_row(&x).map_err(|e| {
                    Error::numeric(format!("feature evaluation failed at point row {j}: {e}"))
                })
            })
            .collect();
        let mut out = CMat::zeros(m, nk);
        for (j, r) in rows.into_iter().enumerate() {
            let r = r?;
            for (k, v) in r.into_iter().enumerate() {
                out[(j, k)] = v;
            }
        }
        Ok(out)
    }

    /// Evaluates the feature map at a single point.
    pub fn eval_row(&self, x: &[f64]) -> Result<Vec<C64>> {
        if x.len() != self.state_dim() {
            return Err(Error::dimension(format!(
                "point has dim {}, dictionary expects {}",
                x.len(),
                self.state_dim()
            )));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::argument("evaluation point has non-finite coordinates"));
        }
        match self {
            Dictionary::Canonical { size, .. } => {
                Ok((0..*size).map(|j| C64::new(x[j], 0.0)).collect())
            }
            Dictionary::Product { axes, indices } => {
                // Evaluate each axis basis up to its maximum used order once.
                let mut axis_vals: Vec<AxisValues> = Vec::with_capacity(axes.len());
                for (ax, basis) in axes.iter().enumerate() {
                    let max_abs = indices
                        .iter()
                        .map(|idx| idx[ax].unsigned_abs())
                        .max()
                        .unwrap_or(0);
                    axis_vals.push(AxisValues::build(basis, x[ax], max_abs as usize)?);
                }
                let mut row = Vec::with_capacity(indices.len());
                for (n, idx) in indices.iter().enumerate() {
                    let mut v = C64::new(1.0, 0.0);
                    for (ax, &k) in idx.iter().enumerate() {
                        v *= axis_vals[ax].get(k);
                    }
                    if !v.re.is_finite() || !v.im.is_finite() {
                        return Err(Error::numeric(format!(
                            "basis value non-finite at observable index {n}"
                        )));
                    }
                    row.push(v);
                }
                Ok(row)
            }
        }
    }

    /// Largest `‖Ψ*WΨ − I‖` entry over the given rule: a diagnostic of
    /// orthonormality under that quadrature.
    pub fn orthonormality_defect(&self, rule: &QuadratureRule) -> Result<f64> {
        let psi = self.eval_matrix(&rule.nodes)?;
        let g = crate::linalg::weighted_gram(&psi, &rule.weights, &psi)?;
        let n = self.len();
        let mut worst = 0.0_f64;
        for i in 0..n {
            for j in 0..n {
                let want = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((g[(i, j)] - C64::new(want, 0.0)).norm());
            }
        }
        Ok(worst)
    }
}

/// Values of one axis basis at one coordinate, for all orders up to a max.
struct AxisValues {
    /// values for index `0..=max` (unsigned part)
    nonneg: Vec<C64>,
    /// for signed axes: values for index `−1..=−max` (stored at `k−1`)
    neg: Vec<C64>,
}

impl AxisValues {
    fn build(basis: &AxisBasis, x: f64, max_abs: usize) -> Result<AxisValues> {
        match basis {
            AxisBasis::FourierPeriodic { a, b } => {
                let len = b - a;
                let omega = 2.0 * std::f64::consts::PI / len;
                let c = 0.5 * (a + b);
                let norm = 1.0 / len.sqrt();
                let phase = C64::new(0.0, omega * (x - c)).exp();
                let mut nonneg = Vec::with_capacity(max_abs + 1);
                let mut v = C64::new(norm, 0.0);
                for _ in 0..=max_abs {
                    nonneg.push(v);
                    v *= phase;
                }
                let neg = (1..=max_abs).map(|k| nonneg[k].conj()).collect();
                Ok(AxisValues { nonneg, neg })
            }
            AxisBasis::HermiteFunction => {
                // h_0 = π^{−1/4} e^{−x²/2}; stable two-term recurrence
                // h_{n+1} = x √(2/(n+1)) h_n − √(n/(n+1)) h_{n−1}.
                let mut nonneg = Vec::with_capacity(max_abs + 1);
                let h0 = std::f64::consts::PI.powf(-0.25) * (-x * x / 2.0).exp();
                nonneg.push(C64::new(h0, 0.0));
                if max_abs >= 1 {
                    let h1 = x * 2.0_f64.sqrt() * h0;
                    nonneg.push(C64::new(h1, 0.0));
                    for n in 1..max_abs {
                        let nf = n as f64;
                        let next = x * (2.0 / (nf + 1.0)).sqrt() * nonneg[n].re
                            - (nf / (nf + 1.0)).sqrt() * nonneg[n - 1].re;
                        if !next.is_finite() {
                            return Err(Error::numeric(format!(
                                "Hermite recurrence produced a non-finite value at degree {}",
                                n + 1
                            )));
                        }
                        nonneg.push(C64::new(next, 0.0));
                    }
                }
                Ok(AxisValues {
                    nonneg,
                    neg: Vec::new(),
                })
            }
            AxisBasis::LegendreTransplanted { a, b } => {
                let t = 2.0 * (x - a) / (b - a) - 1.0;
                let len = b - a;
                let mut nonneg = Vec::with_capacity(max_abs + 1);
                // unnormalized P_j by the three-term recurrence, normalized
                // on the fly by √((2j+1)/(b−a))
                let mut p_prev = 1.0_f64;
                let mut p = t;
                nonneg.push(C64::new((1.0 / len).sqrt(), 0.0));
                if max_abs >= 1 {
                    nonneg.push(C64::new((3.0 / len).sqrt() * p, 0.0));
                    for j in 1..max_abs {
                        let jf = j as f64;
                        let p_next = ((2.0 * jf + 1.0) * t * p - jf * p_prev) / (jf + 1.0);
                        p_prev = p;
                        p = p_next;
                        let norm = ((2.0 * jf + 3.0) / len).sqrt();
                        nonneg.push(C64::new(norm * p, 0.0));
                    }
                }
                Ok(AxisValues {
                    nonneg,
                    neg: Vec::new(),
                })
            }
        }
    }

    fn get(&self, k: i64) -> C64 {
        if k >= 0 {
            self.nonneg[k as usize]
        } else {
            self.neg[(-k - 1) as usize]
        }
    }
}

/// Projects an observable onto the dictionary subspace by the weighted
/// least-squares normal equations: `a = (Ψ*WΨ)^{-1} Ψ*W [g(x_j)]`.
pub fn project(
    dict: &Dictionary,
    g: &dyn Fn(&[f64]) -> C64,
    rule: &QuadratureRule,
) -> Result<CVec> {
    let vals = CVec::from_iterator(
        rule.len(),
        (0..rule.len()).map(|j| {
            let x: Vec<f64> = rule.nodes.row(j).iter().cloned().collect();
            g(&x)
        }),
    );
    project_values(dict, &vals, rule)
}

/// Same as [`project`], with the observable already evaluated at the rule's
/// nodes.
pub fn project_values(dict: &Dictionary, g_vals: &CVec, rule: &QuadratureRule) -> Result<CVec> {
    if g_vals.len() != rule.len() {
        return Err(Error::dimension(format!(
            "observable has {} values, rule has {} nodes",
            g_vals.len(),
            rule.len()
        )));
    }
    let psi = dict.eval_matrix(&rule.nodes)?;
    let gram = crate::linalg::weighted_gram(&psi, &rule.weights, &psi)?;
    let gmat = CMat::from_column_slice(rule.len(), 1, g_vals.as_slice());
    let rhs_m = crate::linalg::weighted_gram(&psi, &rule.weights, &gmat)?;
    let rhs = rhs_m.column(0).clone_owned();
    // Gram matrices are Hermitian PSD; Cholesky is the right solver and its
    // failure is the advertised singularity error.
    let chol = gram
        .clone()
        .cholesky()
        .ok_or_else(|| Error::numeric("Gram matrix is singular to working precision"))?;
    Ok(chol.solve(&rhs))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quadrature;
    use approx::assert_abs_diff_eq;

    #[test]
    fn fourier_at_zero_is_constant_norm() {
        let pi = std::f64::consts::PI;
        let d = Dictionary::fourier(-pi, pi, 4).unwrap();
        let row = d.eval_row(&[0.0]).unwrap();
        for v in row {
            assert_abs_diff_eq!(v.re, 1.0 / (2.0 * pi).sqrt(), epsilon = 1e-15);
            assert_abs_diff_eq!(v.im, 0.0, epsilon = 1e-15);
        }
    }

    #[test]
    fn legendre_degree_one_value() {
        let d = Dictionary::legendre(-1.0, 0.0, 3).unwrap();
        let row = d.eval_row(&[-1.0]).unwrap();
        assert_abs_diff_eq!(row[1].re, -(3.0_f64.sqrt()), epsilon = 1e-14);
    }

    #[test]
    fn hermite_h0_at_zero() {
        let d = Dictionary::hermite(2).unwrap();
        let row = d.eval_row(&[0.0]).unwrap();
        assert_abs_diff_eq!(
            row[0].re,
            std::f64::consts::PI.powf(-0.25),
            epsilon = 1e-15
        );
        assert_abs_diff_eq!(row[1].re, 0.0, epsilon = 1e-15); // h_1 odd
    }

    #[test]
    fn hermite_high_degree_stays_finite() {
        let d = Dictionary::hermite(150).unwrap();
        let row = d.eval_row(&[3.7]).unwrap();
        for (n, v) in row.iter().enumerate() {
            assert!(v.re.is_finite(), "h_{n} not finite");
            // Hermite functions are uniformly bounded
            assert!(v.re.abs() < 1.0, "h_{n}(3.7) = {}", v.re);
        }
    }

    #[test]
    fn fourier_orthonormal_under_periodic_trapezoid() {
        let pi = std::f64::consts::PI;
        let d = Dictionary::fourier(-pi, pi, 5).unwrap();
        let rule = quadrature::trapezoid(64, -pi, pi, true).unwrap();
        let defect = d.orthonormality_defect(&rule).unwrap();
        assert!(defect < 1e-12, "defect {defect}");
    }

    #[test]
    fn legendre_orthonormal_under_gauss() {
        let d = Dictionary::legendre(-1.0, 0.0, 40).unwrap();
        let rule = quadrature::gauss_legendre(40, -1.0, 0.0).unwrap();
        let defect = d.orthonormality_defect(&rule).unwrap();
        assert!(defect < 1e-12, "defect {defect}");
    }

    #[test]
    fn hermite_orthonormal_under_truncated_trapezoid() {
        let d = Dictionary::hermite(12).unwrap();
        let rule = quadrature::trapezoid(400, -8.0, 8.0, false).unwrap();
        let defect = d.orthonormality_defect(&rule).unwrap();
        assert!(defect < 1e-6, "defect {defect}");
    }

    #[test]
    fn batch_eval_matches_single_point() {
        let pi = std::f64::consts::PI;
        let d = Dictionary::fourier(-pi, pi, 3).unwrap();
        let pts = DMatrix::from_row_slice(3, 1, &[0.3, -1.2, 2.9]);
        let batch = d.eval_matrix(&pts).unwrap();
        for j in 0..3 {
            let row = d.eval_row(&[pts[(j, 0)]]).unwrap();
            for k in 0..d.len() {
                assert_eq!(batch[(j, k)], row[k]);
            }
        }
    }

    #[test]
    fn hyperbolic_cross_one_dimensional_fourier() {
        let pi = std::f64::consts::PI;
        let d = Dictionary::hyperbolic_cross(
            vec![AxisBasis::FourierPeriodic { a: -pi, b: pi }],
            5,
            DEFAULT_DICT_CAP,
        )
        .unwrap();
        let idx = d.indices();
        let ks: Vec<i64> = idx.iter().map(|v| v[0]).collect();
        assert_eq!(ks, (-4..=4).collect::<Vec<i64>>());
        assert_eq!(d.len(), 9);
    }

    #[test]
    fn hyperbolic_cross_two_dimensional_count() {
        let pi = std::f64::consts::PI;
        let ax = AxisBasis::FourierPeriodic { a: -pi, b: pi };
        let d = Dictionary::hyperbolic_cross(vec![ax.clone(), ax], 2, DEFAULT_DICT_CAP).unwrap();
        let idx = d.indices();
        assert_eq!(
            idx,
            vec![
                vec![-1, 0],
                vec![0, -1],
                vec![0, 0],
                vec![0, 1],
                vec![1, 0]
            ]
        );
    }

    #[test]
    fn hyperbolic_cross_nesting() {
        let pi = std::f64::consts::PI;
        let ax = AxisBasis::FourierPeriodic { a: -pi, b: pi };
        let small = Dictionary::hyperbolic_cross(vec![ax.clone(), ax.clone()], 16, DEFAULT_DICT_CAP)
            .unwrap()
            .indices();
        let large = Dictionary::hyperbolic_cross(vec![ax.clone(), ax], 32, DEFAULT_DICT_CAP)
            .unwrap()
            .indices();
        for idx in &small {
            assert!(large.contains(idx), "index {idx:?} missing from larger cross");
        }
    }

    #[test]
    fn hyperbolic_cross_respects_cap() {
        let pi = std::f64::consts::PI;
        let ax = AxisBasis::FourierPeriodic { a: -pi, b: pi };
        let err = Dictionary::hyperbolic_cross(vec![ax.clone(), ax], 100, 50).unwrap_err();
        assert!(matches!(err, Error::Resource(_)));
    }

    #[test]
    fn hermite_axes_use_unsigned_indices() {
        let d = Dictionary::hyperbolic_cross(
            vec![AxisBasis::HermiteFunction],
            4,
            DEFAULT_DICT_CAP,
        )
        .unwrap();
        let ks: Vec<i64> = d.indices().iter().map(|v| v[0]).collect();
        assert_eq!(ks, vec![0, 1, 2, 3]);
    }

    #[test]
    fn canonical_dictionary_reads_coefficients() {
        let d = Dictionary::canonical(5, 3).unwrap();
        let row = d.eval_row(&[0.1, 0.2, 0.3, 0.4, 0.5]).unwrap();
        assert_eq!(row.len(), 3);
        assert_eq!(row[0].re, 0.1);
        assert_eq!(row[2].re, 0.3);
    }

    #[test]
    fn project_recovers_dictionary_member() {
        let d = Dictionary::legendre(-1.0, 0.0, 6).unwrap();
        let rule = quadrature::gauss_legendre(20, -1.0, 0.0).unwrap();
        // g = ψ_3
        let a = project(
            &d,
            &|x: &[f64]| {
                let row = d.eval_row(x).unwrap();
                row[3]
            },
            &rule,
        )
        .unwrap();
        for k in 0..6 {
            let want = if k == 3 { 1.0 } else { 0.0 };
            assert!(
                (a[k] - C64::new(want, 0.0)).norm() < 1e-10,
                "coefficient {k}: {}",
                a[k]
            );
        }
    }

    #[test]
    fn project_zero_gives_zero() {
        let d = Dictionary::legendre(-1.0, 0.0, 4).unwrap();
        let rule = quadrature::gauss_legendre(10, -1.0, 0.0).unwrap();
        let a = project(&d, &|_| C64::new(0.0, 0.0), &rule).unwrap();
        assert!(a.norm() < 1e-14);
    }

    #[test]
    fn projection_residual_decreases_with_dictionary_size() {
        // kinked + discontinuous observable on [0,1]: the Fourier projection
        // error must decrease as N_K doubles
        let g = |x: &[f64]| -> C64 {
            let t = x[0];
            C64::new((t - 1.0 / 3.0).abs() + (20.0 * t).sin(), 0.0)
        };
        let rule = quadrature::trapezoid(1 << 10, 0.0, 1.0, true).unwrap();
        let fine = quadrature::trapezoid(1 << 12, 0.0, 1.0, true).unwrap();
        let mut last = f64::INFINITY;
        for kmax in [2, 4, 8, 16] {
            let d = Dictionary::fourier(0.0, 1.0, kmax).unwrap();
            let a = project(&d, &g, &rule).unwrap();
            // residual on a finer grid
            let psi = d.eval_matrix(&fine.nodes).unwrap();
            let mut err2 = 0.0;
            for j in 0..fine.len() {
                let x: Vec<f64> = fine.nodes.row(j).iter().cloned().collect();
                let mut approx_v = C64::new(0.0, 0.0);
                for k in 0..d.len() {
                    approx_v += psi[(j, k)] * a[k];
                }
                err2 += fine.weights[j] * (g(&x) - approx_v).norm_sqr();
            }
            let err = err2.sqrt();
            assert!(err < last, "residual did not decrease: {err} ≥ {last}");
            last = err;
        }
    }

    #[test]
    fn eval_matrix_rejects_wrong_dim() {
        let d = Dictionary::legendre(-1.0, 0.0, 4).unwrap();
        let pts = DMatrix::zeros(3, 2);
        assert!(d.eval_matrix(&pts).is_err());
    }
}
