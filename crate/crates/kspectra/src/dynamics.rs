//! Benchmark dynamical systems and snapshot generation.
//!
//! A [`System`] is a deterministic map `F` on its state space. Discrete maps
//! (tent, Gauss iterated map) apply `F` directly; ODE systems (pendulum,
//! double pendulum, Lorenz) advance one sampling interval `Δt` with a
//! fixed-step classical RK4 integrator; sequence-space systems (shift, CMV)
//! multiply by a stored banded matrix truncation built so that every stored
//! matrix element is exact.
//!
//! Snapshot data is the universal input to the Galerkin machinery: pairs
//! `(x, F(x))` with quadrature weights. Longer trajectories are reshaped
//! into snapshot pairs by stacking consecutive states.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quadrature::{QuadKind, QuadratureRule};

/// Default number of RK4 substeps per sampling interval `Δt`.
pub const DEFAULT_SUBSTEPS: u32 = 100;

/// How a snapshot set was produced (recorded in artifact metadata).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum SourceTag {
    /// Nodes and weights of a deterministic quadrature rule.
    Quadrature { kind: QuadKind },
    /// Monte Carlo initial conditions.
    MonteCarlo { seed: u64 },
    /// Single long (possibly noise-stabilized) trajectory.
    Ergodic { noise_scale: f64, seed: u64 },
    /// Loaded from an external file; provenance unknown.
    External,
}

/// A benchmark dynamical system together with its sampling parameters.
#[derive(Debug, Clone)]
pub enum System {
    /// `F(x) = x`; trivial system used to calibrate tests.
    Identity { dim: usize },
    /// Tent map `F(x) = 2 min(x, 1−x)` on `[0, 1]`, Lebesgue-preserving.
    Tent,
    /// Gauss iterated map `F(x) = exp(−α x²) + β` on `[−1, 0]`.
    GaussMap { alpha: f64, beta: f64 },
    /// Nonlinear pendulum `ẋ1 = x2, ẋ2 = −sin x1` on `[−π,π)_per × R`,
    /// sampled every `dt`; Hamiltonian, hence measure-preserving.
    Pendulum { dt: f64, substeps: u32 },
    /// Double pendulum in canonical coordinates `(θ1, θ2, p1, p2)` on
    /// `[−π,π)²_per × R²`, sampled every `dt`; Hamiltonian.
    DoublePendulum { dt: f64, substeps: u32 },
    /// Lorenz system `Ẋ = σ(Y−X), Ẏ = X(ρ−Z)−Y, Ż = XY−βZ`, sampled
    /// every `dt`.
    Lorenz { sigma: f64, rho: f64, beta: f64, dt: f64, substeps: u32 },
    /// Left shift `g(k) → g(k+1)` on `ℓ²(Z)`, truncated to indices
    /// `−half_band..=half_band`; states are coefficient vectors.
    Shift { half_band: usize },
    /// CMV matrix of the Rogers–Szegő orthogonal polynomials on `ℓ²(N)`
    /// (unitary, pentadiagonal); states are coefficient vectors. The stored
    /// `size × size` truncation is entry-exact.
    Cmv { size: usize, matrix: DMatrix<f64> },
}

impl System {
    /// Identity map on `R^dim`.
    pub fn identity(dim: usize) -> Self {
        System::Identity { dim }
    }

    /// Tent map on `[0, 1]`.
    pub fn tent() -> Self {
        System::Tent
    }

    /// Gauss iterated map with the standard parameters `α = 2`,
    /// `β = −1 − e^{−2}` (so that `x = −1` is a fixed point and
    /// `F([−1,0]) ⊂ [−1,0]`).
    pub fn gauss_map() -> Self {
        System::GaussMap {
            alpha: 2.0,
            beta: -1.0 - (-2.0_f64).exp(),
        }
    }

    /// Pendulum sampled every `dt`, default substeps.
    pub fn pendulum(dt: f64) -> Self {
        System::Pendulum {
            dt,
            substeps: DEFAULT_SUBSTEPS,
        }
    }

    /// Double pendulum (equal masses and lengths, units `Mℓ² = 6`,
    /// `G/ℓ = 1/3`) sampled every `dt`, default substeps.
    pub fn double_pendulum(dt: f64) -> Self {
        System::DoublePendulum {
            dt,
            substeps: DEFAULT_SUBSTEPS,
        }
    }

    /// Lorenz system with the classical `σ = 10`, `β = 8/3` and the given
    /// `ρ`, sampled every `dt = 0.05`.
    pub fn lorenz(rho: f64) -> Self {
        System::Lorenz {
            sigma: 10.0,
            rho,
            beta: 8.0 / 3.0,
            dt: 0.05,
            substeps: DEFAULT_SUBSTEPS,
        }
    }

    /// Shift operator truncation storing indices `−half_band..=half_band`.
    pub fn shift(half_band: usize) -> Self {
        System::Shift { half_band }
    }

    /// CMV truncation of the given size (entry-exact).
    pub fn cmv(size: usize) -> Result<Self> {
        if size < 2 {
            return Err(Error::argument("cmv truncation size must be at least 2"));
        }
        Ok(System::Cmv {
            size,
            matrix: cmv_matrix(size),
        })
    }

    /// State-space dimension (for sequence-space systems: the truncation
    /// size, since states are coefficient vectors).
    pub fn dim(&self) -> usize {
        match self {
            System::Identity { dim } => *dim,
            System::Tent | System::GaussMap { .. } => 1,
            System::Pendulum { .. } => 2,
            System::Lorenz { .. } => 3,
            System::DoublePendulum { .. } => 4,
            System::Shift { half_band } => 2 * half_band + 1,
            System::Cmv { size, .. } => *size,
        }
    }

    /// Whether the system preserves its reference measure (and so admits
    /// spectral measures through the unitary extension of `K`).
    pub fn measure_preserving(&self) -> bool {
        matches!(
            self,
            System::Identity { .. }
                | System::Tent
                | System::Pendulum { .. }
                | System::DoublePendulum { .. }
                | System::Shift { .. }
                | System::Cmv { .. }
        )
    }

    /// The stored banded matrix truncation for sequence-space systems.
    pub fn banded_truncation(&self) -> Option<DMatrix<f64>> {
        match self {
            System::Shift { half_band } => {
                let n = 2 * half_band + 1;
                // Koopman matrix of k → k+1 on the canonical basis:
                // column j has its 1 in row j−1.
                Some(DMatrix::from_fn(n, n, |i, j| if j == i + 1 { 1.0 } else { 0.0 }))
            }
            System::Cmv { matrix, .. } => Some(matrix.clone()),
            _ => None,
        }
    }

    /// Hamiltonian (total energy) for the Hamiltonian systems; `None`
    /// otherwise. Used to monitor integrator quality.
    pub fn hamiltonian(&self, x: &[f64]) -> Option<f64> {
        match self {
            System::Pendulum { .. } => Some(0.5 * x[1] * x[1] - x[0].cos()),
            System::DoublePendulum { .. } => {
                let (t1, t2, p1, p2) = (x[0], x[1], x[2], x[3]);
                let c = (t1 - t2).cos();
                let kinetic =
                    (2.0 * p1 * p1 + 8.0 * p2 * p2 - 6.0 * p1 * p2 * c)
                        / (2.0 * (16.0 - 9.0 * c * c));
                Some(kinetic - 3.0 * t1.cos() - t2.cos())
            }
            _ => None,
        }
    }

    /// Applies the map once: `x → F(x)`.
    pub fn step(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_state(x)?;
        let mut out = match self {
            System::Identity { .. } => x.to_vec(),
            System::Tent => vec![2.0 * x[0].min(1.0 - x[0])],
            System::GaussMap { alpha, beta } => {
                vec![(-alpha * x[0] * x[0]).exp() + beta]
            }
            System::Pendulum { dt, substeps } => {
                rk4(x, *dt, *substeps, |s, ds| {
                    ds[0] = s[1];
                    ds[1] = -s[0].sin();
                })
            }
            System::DoublePendulum { dt, substeps } => {
                rk4(x, *dt, *substeps, |s, ds| {
                    let (t1, t2, p1, p2) = (s[0], s[1], s[2], s[3]);
                    let c = (t1 - t2).cos();
                    let sn = (t1 - t2).sin();
                    let den = 16.0 - 9.0 * c * c;
                    let td1 = (2.0 * p1 - 3.0 * p2 * c) / den;
                    let td2 = (8.0 * p2 - 3.0 * p1 * c) / den;
                    ds[0] = td1;
                    ds[1] = td2;
                    ds[2] = -3.0 * (td1 * td2 * sn + t1.sin());
                    ds[3] = -3.0 * (-td1 * td2 * sn + t2.sin() / 3.0);
                })
            }
            System::Lorenz {
                sigma,
                rho,
                beta,
                dt,
                substeps,
            } => rk4(x, *dt, *substeps, |s, ds| {
                ds[0] = sigma * (s[1] - s[0]);
                ds[1] = s[0] * (rho - s[2]) - s[1];
                ds[2] = s[0] * s[1] - beta * s[2];
            }),
            System::Shift { .. } | System::Cmv { .. } => {
                let u = self.banded_truncation().expect("sequence system");
                let v = nalgebra::DVector::from_column_slice(x);
                (u * v).iter().cloned().collect()
            }
        };
        self.fold(&mut out);
        Ok(out)
    }

    /// `F(x)` plus a uniform perturbation of magnitude at most
    /// `noise_scale` per coordinate, folded back into the domain. With
    /// `noise_scale = 0` this is exactly [`System::step`]. Used to
    /// stabilize ergodic sampling of maps whose exact binary-float dynamics
    /// degenerate (the tent map reaches the fixed point 0).
    pub fn perturbed_step(
        &self,
        x: &[f64],
        noise_scale: f64,
        rng: &mut impl Rng,
    ) -> Result<Vec<f64>> {
        if noise_scale < 0.0 {
            return Err(Error::argument("noise_scale must be nonnegative"));
        }
        let mut out = self.step(x)?;
        if noise_scale > 0.0 {
            for v in out.iter_mut() {
                *v += noise_scale * (2.0 * rng.gen::<f64>() - 1.0);
            }
            self.fold(&mut out);
        }
        Ok(out)
    }

    /// Wraps periodic coordinates and clamps bounded domains (used after
    /// stepping and after noise injection).
    fn fold(&self, x: &mut [f64]) {
        match self {
            System::Tent => x[0] = x[0].clamp(0.0, 1.0),
            System::GaussMap { .. } => x[0] = x[0].clamp(-1.0, 0.0),
            System::Pendulum { .. } => x[0] = wrap_angle(x[0]),
            System::DoublePendulum { .. } => {
                x[0] = wrap_angle(x[0]);
                x[1] = wrap_angle(x[1]);
            }
            _ => {}
        }
    }

    /// Validates that `x` lies in the system's domain.
    fn check_state(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dim() {
            return Err(Error::dimension(format!(
                "state has {} coordinates, system expects {}",
                x.len(),
                self.dim()
            )));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::argument("state has non-finite coordinates"));
        }
        match self {
            System::Tent => {
                if !(0.0..=1.0).contains(&x[0]) {
                    return Err(Error::argument(format!(
                        "tent map state {} outside [0, 1]",
                        x[0]
                    )));
                }
            }
            System::GaussMap { .. } => {
                if !(-1.0..=0.0).contains(&x[0]) {
                    return Err(Error::argument(format!(
                        "Gauss map state {} outside [−1, 0]",
                        x[0]
                    )));
                }
            }
            _ => {}
        }
        Ok(())
    }
}

/// Wraps an angle into `[−π, π)`.
fn wrap_angle(x: f64) -> f64 {
    let two_pi = 2.0 * std::f64::consts::PI;
    let y = x - two_pi * ((x + std::f64::consts::PI) / two_pi).floor();
    // guard the representable edge case y == π
    if y >= std::f64::consts::PI {
        y - two_pi
    } else {
        y
    }
}

/// Classical fixed-step RK4 over one sampling interval.
fn rk4(x: &[f64], dt: f64, substeps: u32, f: impl Fn(&[f64], &mut [f64])) -> Vec<f64> {
    let n = x.len();
    let h = dt / substeps.max(1) as f64;
    let mut y = x.to_vec();
    let mut k1 = vec![0.0; n];
    let mut k2 = vec![0.0; n];
    let mut k3 = vec![0.0; n];
    let mut k4 = vec![0.0; n];
    let mut tmp = vec![0.0; n];
    for _ in 0..substeps.max(1) {
        f(&y, &mut k1);
        for i in 0..n {
            tmp[i] = y[i] + 0.5 * h * k1[i];
        }
        f(&tmp, &mut k2);
        for i in 0..n {
            tmp[i] = y[i] + 0.5 * h * k2[i];
        }
        f(&tmp, &mut k3);
        for i in 0..n {
            tmp[i] = y[i] + h * k3[i];
        }
        f(&tmp, &mut k4);
        for i in 0..n {
            y[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
    }
    y
}

/// Builds the `n × n` truncation of the CMV matrix with Verblunsky
/// coefficients `α_j = (−1)^j 0.95^{(j+1)/2}`. The matrix is assembled as
/// the product `L·M` of the two block-diagonal rotation factors on a padded
/// index range, then truncated, so every stored entry equals the entry of
/// the infinite matrix.
pub fn cmv_matrix(n: usize) -> DMatrix<f64> {
    let padded = n + 4;
    let alpha = |j: usize| -> f64 {
        let a = 0.95_f64.powf((j as f64 + 1.0) / 2.0);
        if j % 2 == 0 {
            a
        } else {
            -a
        }
    };
    let rho = |j: usize| -> f64 { (1.0 - alpha(j) * alpha(j)).sqrt() };
    // L = diag(Θ0, Θ2, Θ4, ...), M = diag([1], Θ1, Θ3, ...), with
    // Θ_j = [[α_j, ρ_j], [ρ_j, −α_j]] (real coefficients).
    let mut l = DMatrix::zeros(padded, padded);
    let mut m = DMatrix::zeros(padded, padded);
    let mut i = 0;
    while i + 1 < padded {
        let j = i; // Θ_j with even j at rows/cols (i, i+1)
        l[(i, i)] = alpha(j);
        l[(i, i + 1)] = rho(j);
        l[(i + 1, i)] = rho(j);
        l[(i + 1, i + 1)] = -alpha(j);
        i += 2;
    }
    if i < padded {
        // odd padded size leaves a trailing 1×1 identity block
        l[(i, i)] = 1.0;
    }
    m[(0, 0)] = 1.0;
    let mut i = 1;
    while i + 1 < padded {
        let j = i; // Θ_j with odd j at rows/cols (i, i+1)
        m[(i, i)] = alpha(j);
        m[(i, i + 1)] = rho(j);
        m[(i + 1, i)] = rho(j);
        m[(i + 1, i + 1)] = -alpha(j);
        i += 2;
    }
    if i < padded {
        m[(i, i)] = 1.0;
    }
    let u = l * m;
    u.view((0, 0), (n, n)).into_owned()
}

/// A batch of equal-length trajectories: `m1` trajectories of `m2` states
/// each, stored trajectory-major (row `i·m2 + t` is state `t` of
/// trajectory `i`).
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectorySet {
    pub m1: usize,
    pub m2: usize,
    pub dim: usize,
    pub data: DMatrix<f64>,
}

impl TrajectorySet {
    /// State `t` of trajectory `i`.
    pub fn state(&self, i: usize, t: usize) -> Vec<f64> {
        self.data.row(i * self.m2 + t).iter().cloned().collect()
    }

    /// Stacks consecutive state pairs into snapshot rows: trajectory
    /// `(a, b, c)` becomes pairs `(a,b), (b,c)`, each inheriting the
    /// trajectory's weight.
    pub fn to_snapshots(&self, weights: &[f64], source: SourceTag) -> Result<SnapshotSet> {
        if weights.len() != self.m1 {
            return Err(Error::dimension(format!(
                "need one weight per trajectory: got {}, have {} trajectories",
                weights.len(),
                self.m1
            )));
        }
        let pairs = self.m1 * (self.m2 - 1);
        let mut x0 = DMatrix::zeros(pairs, self.dim);
        let mut x1 = DMatrix::zeros(pairs, self.dim);
        let mut w = Vec::with_capacity(pairs);
        let mut r = 0;
        for i in 0..self.m1 {
            for t in 0..self.m2 - 1 {
                x0.set_row(r, &self.data.row(i * self.m2 + t));
                x1.set_row(r, &self.data.row(i * self.m2 + t + 1));
                w.push(weights[i]);
                r += 1;
            }
        }
        Ok(SnapshotSet {
            x0,
            x1,
            weights: w,
            source,
        })
    }

    /// Inverse of [`TrajectorySet::to_snapshots`]: rebuilds the trajectories
    /// from stacked pairs, verifying the overlap consistency
    /// (`x1` of each pair equals `x0` of the next pair in the trajectory).
    pub fn from_snapshots(snap: &SnapshotSet, m1: usize, m2: usize) -> Result<TrajectorySet> {
        if m2 < 2 {
            return Err(Error::argument("trajectories need at least two states"));
        }
        let pairs = m1 * (m2 - 1);
        if snap.len() != pairs {
            return Err(Error::dimension(format!(
                "snapshot set has {} rows, expected {} for m1={m1}, m2={m2}",
                snap.len(),
                pairs
            )));
        }
        let dim = snap.x0.ncols();
        let mut data = DMatrix::zeros(m1 * m2, dim);
        for i in 0..m1 {
            for t in 0..m2 - 1 {
                let r = i * (m2 - 1) + t;
                if t > 0 {
                    let prev = i * (m2 - 1) + t - 1;
                    if snap.x0.row(r) != snap.x1.row(prev) {
                        return Err(Error::format(
                            "snapshot rows are not consecutive trajectory pairs",
                        ));
                    }
                }
                data.set_row(i * m2 + t, &snap.x0.row(r));
                data.set_row(i * m2 + t + 1, &snap.x1.row(r));
            }
        }
        Ok(TrajectorySet { m1, m2, dim, data })
    }
}

/// Snapshot pairs `(x0_j, x1_j = F(x0_j))` with quadrature weights.
#[derive(Debug, Clone, PartialEq)]
pub struct SnapshotSet {
    pub x0: DMatrix<f64>,
    pub x1: DMatrix<f64>,
    pub weights: Vec<f64>,
    pub source: SourceTag,
}

impl SnapshotSet {
    /// Number of snapshot pairs.
    pub fn len(&self) -> usize {
        self.x0.nrows()
    }

    /// True when the set has no rows.
    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// State-space dimension.
    pub fn dim(&self) -> usize {
        self.x0.ncols()
    }
}

/// Iterates each initial condition for `m2 − 1` steps, producing `m1`
/// trajectories of `m2` states. Initial conditions are the rows of
/// `initials`.
pub fn generate_trajectories(
    system: &System,
    initials: &DMatrix<f64>,
    m2: usize,
) -> Result<TrajectorySet> {
    if initials.nrows() == 0 {
        return Err(Error::argument("no initial conditions supplied"));
    }
    if m2 < 2 {
        return Err(Error::argument("m2 must be at least 2"));
    }
    if initials.ncols() != system.dim() {
        return Err(Error::dimension(format!(
            "initial conditions have dim {}, system expects {}",
            initials.ncols(),
            system.dim()
        )));
    }
    let m1 = initials.nrows();
    let dim = system.dim();
    let mut data = DMatrix::zeros(m1 * m2, dim);
    for i in 0..m1 {
        let mut x: Vec<f64> = initials.row(i).iter().cloned().collect();
        for (c, &v) in x.iter().enumerate() {
            data[(i * m2, c)] = v;
        }
        for t in 1..m2 {
            x = system.step(&x)?;
            for (c, &v) in x.iter().enumerate() {
                data[(i * m2 + t, c)] = v;
            }
        }
    }
    Ok(TrajectorySet { m1, m2, dim, data })
}

/// A single long trajectory (`m1 = 1`), optionally stabilized with
/// uniform noise of half-width `noise_scale` injected after every step.
///
/// The noise matters for maps whose floating-point iteration is
/// structurally degenerate: binary arithmetic sends every dyadic point
/// of the tent map to the fixed point 0 in at most 53 steps, so the
/// unperturbed orbit is useless for time averages. A perturbation far
/// below the discretization scale (e.g. `1e-14`) restores ergodic
/// sampling without biasing the statistics at achievable accuracy.
pub fn ergodic_trajectory(
    system: &System,
    x0: &[f64],
    m2: usize,
    noise_scale: f64,
    seed: u64,
) -> Result<TrajectorySet> {
    if m2 < 2 {
        return Err(Error::argument("m2 must be at least 2"));
    }
    let dim = system.dim();
    if x0.len() != dim {
        return Err(Error::dimension(format!(
            "initial condition has dim {}, system expects {}",
            x0.len(),
            dim
        )));
    }
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut data = DMatrix::zeros(m2, dim);
    let mut x = x0.to_vec();
    for (c, &v) in x.iter().enumerate() {
        data[(0, c)] = v;
    }
    for t in 1..m2 {
        x = system.perturbed_step(&x, noise_scale, &mut rng)?;
        for (c, &v) in x.iter().enumerate() {
            data[(t, c)] = v;
        }
    }
    Ok(TrajectorySet {
        m1: 1,
        m2,
        dim,
        data,
    })
}

/// One-step snapshot set with the nodes and weights of a quadrature rule:
/// the standard input to Galerkin assembly.
pub fn snapshots_from_rule(system: &System, rule: &QuadratureRule) -> Result<SnapshotSet> {
    let traj = generate_trajectories(system, &rule.nodes, 2)?;
    traj.to_snapshots(
        &rule.weights,
        SourceTag::Quadrature { kind: rule.kind },
    )
}
