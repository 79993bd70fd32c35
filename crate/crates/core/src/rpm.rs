//! Recursive Projection Method.
//!
//! Successive substitution `u <- Phi(u)` converges at the rate of the
//! slowest multiplier and diverges when any multiplier leaves the unit disk.
//! RPM splits the state space into a small slow subspace `P = span(Z)`,
//! where it takes Newton steps with the projected Jacobian `H = Z^T Phi_U Z`,
//! and the complement `Q = I - Z Z^T`, where it keeps plain Picard
//! iteration. `Z` is grown from the history of Q-projected residuals
//! whenever Picard on `Q` is judged too slow.

use std::collections::VecDeque;

use log::{debug, warn};
use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;
use crate::timestepper::{EpsilonPolicy, Parameters, StateVector, Timestepper};

/// Relative size below which a history vector is treated as linearly
/// dependent on the ones before it.
const HISTORY_RANK_TOL: f64 = 1e-6;

/// Orthonormal slow basis `Z` (N x m) with the projected Jacobian `H`.
#[derive(Debug, Clone, PartialEq)]
pub struct SlowBasis {
    z: DMatrix<f64>,
    h: DMatrix<f64>,
    stale: bool,
    age: usize,
}

impl SlowBasis {
    /// Empty basis (pure Picard iteration).
    pub fn empty(n: usize) -> Self {
        Self {
            z: DMatrix::zeros(n, 0),
            h: DMatrix::zeros(0, 0),
            stale: false,
            age: 0,
        }
    }

    /// Orthonormalizes `vectors` in order, skipping dependent ones. `H` is
    /// left stale.
    pub fn from_vectors(n: usize, vectors: &[StateVector]) -> Result<Self> {
        let mut basis = Self::empty(n);
        for v in vectors {
            if v.len() != n {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    got: v.len(),
                });
            }
            basis.push(v);
        }
        Ok(basis)
    }

    /// Basis with a known slow Jacobian. `z` must have orthonormal columns.
    pub fn with_jacobian(z: DMatrix<f64>, h: DMatrix<f64>) -> Result<Self> {
        let m = z.ncols();
        if h.nrows() != m || h.ncols() != m {
            return Err(Error::DimensionMismatch {
                expected: m,
                got: h.nrows(),
            });
        }
        let err = linalg::orthonormality_error(&z);
        if err > 1e-12 {
            return Err(Error::InvalidArgument(format!(
                "basis columns are not orthonormal (error {err:.3e})"
            )));
        }
        Ok(Self {
            z,
            h,
            stale: false,
            age: 0,
        })
    }

    /// Warm basis from a sequence of cycle-to-cycle differences
    /// `d_j = u_{j+1} - u_j` of a direct simulation, at no map-call cost.
    /// Every direction whose ratio eigenvalue exceeds `grow_threshold` in
    /// modulus is added, up to `m_max`.
    pub fn from_history(n: usize, diffs: &[StateVector], opts: &RpmOptions) -> Result<Self> {
        let mut basis = Self::empty(n);
        if diffs.len() < 2 {
            return Ok(basis);
        }
        for d in diffs {
            if d.len() != n {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    got: d.len(),
                });
            }
        }
        let m_max = opts.m_max.min(n);
        for (mu, dir) in ratio_spectrum(diffs)? {
            if mu.norm() <= opts.grow_threshold {
                break;
            }
            if mu.im < 0.0 {
                continue;
            }
            let needed = if mu.im > 0.0 { 2 } else { 1 };
            if basis.dim() + needed > m_max {
                break;
            }
            basis.push(&dir.map(|x| x.re));
            if mu.im > 0.0 {
                basis.push(&dir.map(|x| x.im));
            }
        }
        Ok(basis)
    }

    /// State dimension N.
    pub fn state_dim(&self) -> usize {
        self.z.nrows()
    }

    /// Subspace dimension m.
    pub fn dim(&self) -> usize {
        self.z.ncols()
    }

    pub fn z(&self) -> &DMatrix<f64> {
        &self.z
    }

    pub fn h(&self) -> &DMatrix<f64> {
        &self.h
    }

    /// Whether `H` must be recomputed before the next Newton step.
    pub fn is_stale(&self) -> bool {
        self.stale
    }

    /// Outer iterations since `H` was last computed.
    pub fn age(&self) -> usize {
        self.age
    }

    /// `Z^T x`.
    pub fn coordinates(&self, x: &StateVector) -> DVector<f64> {
        self.z.tr_mul(x)
    }

    /// `P x = Z Z^T x`.
    pub fn project(&self, x: &StateVector) -> StateVector {
        &self.z * self.coordinates(x)
    }

    /// `Q x = x - Z Z^T x`.
    pub fn complement(&self, x: &StateVector) -> StateVector {
        x - self.project(x)
    }

    pub fn orthonormality_error(&self) -> f64 {
        linalg::orthonormality_error(&self.z)
    }

    /// Eigenvalues of `H`, sorted by descending modulus. Empty when the
    /// basis is empty or `H` is stale.
    pub fn multipliers(&self) -> Result<Vec<Complex64>> {
        if self.dim() == 0 || self.stale {
            return Ok(Vec::new());
        }
        linalg::eigenvalues(&self.h)
    }

    /// Appends the normalized part of `v` orthogonal to `Z`. Returns false
    /// when `v` is (numerically) in the span already.
    pub(crate) fn push(&mut self, v: &StateVector) -> bool {
        let cols: Vec<StateVector> = self.z.column_iter().map(|c| c.into_owned()).collect();
        let Some(w) = linalg::orthonormalize_against(&cols, v, 1e-8) else {
            return false;
        };
        let m = self.dim();
        self.z = self.z.clone().insert_column(m, 0.0);
        self.z.set_column(m, &w);
        self.h = DMatrix::zeros(m + 1, m + 1);
        self.stale = true;
        true
    }

    pub(crate) fn set_jacobian(&mut self, h: DMatrix<f64>) {
        self.h = h;
        self.stale = false;
        self.age = 0;
    }

    /// Drops the directions whose Ritz values of `H` have modulus below
    /// `threshold`, keeping an orthonormal basis of the remaining invariant
    /// subspace of `H`. No map calls. Does nothing while `H` is stale.
    pub fn deflate(&mut self, threshold: f64) -> Result<usize> {
        let m = self.dim();
        if m == 0 || self.stale {
            return Ok(0);
        }
        let values = linalg::eigenvalues(&self.h)?;
        if values.iter().all(|mu| mu.norm() >= threshold) {
            return Ok(0);
        }
        let mut keep: Vec<DVector<f64>> = Vec::new();
        for mu in values.iter().filter(|mu| mu.norm() >= threshold && mu.im >= 0.0) {
            let y = linalg::eigenvector(&self.h, *mu);
            let re = y.map(|x| x.re);
            if let Some(v) = linalg::orthonormalize_against(&keep, &re, 1e-8) {
                keep.push(v);
            }
            if mu.im > 0.0 {
                let im = y.map(|x| x.im);
                if let Some(v) = linalg::orthonormalize_against(&keep, &im, 1e-8) {
                    keep.push(v);
                }
            }
        }
        let y = linalg::columns_to_matrix(m, &keep);
        let dropped = m - keep.len();
        let h = y.transpose() * &self.h * &y;
        self.z = &self.z * &y;
        self.h = h;
        debug!("rpm: deflated {dropped} direction(s), m = {}", self.dim());
        Ok(dropped)
    }
}

/// Tuning knobs of [`rpm_solve`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RpmOptions {
    /// Stop when `|Phi(u) - u| <= tolerance`.
    pub tolerance: f64,
    pub max_iterations: usize,
    pub m_max: usize,
    /// Grow the basis when the dominant Q-ratio exceeds this modulus.
    pub grow_threshold: f64,
    /// Drop basis directions whose Ritz value falls below this modulus.
    pub drop_threshold: f64,
    /// Number of Q-projected residuals kept for the growth test.
    pub history: usize,
    /// Picard iterations before the first growth test.
    pub warmup: usize,
    /// Recompute `H` after this many outer iterations (while the slow
    /// residual is above tolerance).
    pub refresh_interval: usize,
    /// Condition number of `I - H` treated as singular.
    pub singular_condition: f64,
    /// Residual growth over its running minimum treated as divergence.
    pub divergence_factor: f64,
    pub eps: EpsilonPolicy,
}

impl Default for RpmOptions {
    fn default() -> Self {
        Self {
            tolerance: 1e-6,
            max_iterations: 500,
            m_max: 10,
            grow_threshold: 0.5,
            drop_threshold: 0.01,
            history: 4,
            warmup: 3,
            refresh_interval: 5,
            singular_condition: 1e12,
            divergence_factor: 1e6,
            eps: EpsilonPolicy::default(),
        }
    }
}

impl RpmOptions {
    pub fn validate(&self) -> Result<()> {
        if !(self.tolerance > 0.0) {
            return Err(Error::InvalidArgument("tolerance must be positive".into()));
        }
        if !(0.0 < self.drop_threshold && self.drop_threshold < self.grow_threshold && self.grow_threshold < 1.0) {
            return Err(Error::InvalidArgument(
                "thresholds must satisfy 0 < drop < grow < 1".into(),
            ));
        }
        if self.history < 2 {
            return Err(Error::InvalidArgument("history must hold at least 2 vectors".into()));
        }
        if self.refresh_interval == 0 {
            return Err(Error::InvalidArgument("refresh_interval must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RpmStatus {
    Converged,
    MaxIterations,
    SingularSlowNewton,
    Diverged,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FixedPointResult {
    pub state: StateVector,
    /// `|Phi(u) - u|` at `state`.
    pub residual: f64,
    pub iterations: usize,
    pub map_calls: u64,
    pub basis: SlowBasis,
    pub status: RpmStatus,
    /// Growth was requested at `m = m_max` at least once.
    pub basis_full: bool,
}

impl FixedPointResult {
    pub fn converged(&self) -> bool {
        self.status == RpmStatus::Converged
    }

    /// Eigenvalues of the final `H` (slow multiplier estimates).
    pub fn slow_multipliers(&self) -> Result<Vec<Complex64>> {
        self.basis.multipliers()
    }
}

/// `H = Z^T Phi_U(u) Z` column by column. Exactly `m` map calls.
pub fn slow_jacobian(
    stepper: &Timestepper,
    u: &StateVector,
    phi_u: &StateVector,
    z: &DMatrix<f64>,
    eps: &EpsilonPolicy,
    p: &Parameters,
) -> Result<DMatrix<f64>> {
    let m = z.ncols();
    let mut h = DMatrix::zeros(m, m);
    for j in 0..m {
        let dir = z.column(j).into_owned();
        let jv = stepper.jacobian_vector_product(u, phi_u, &dir, eps, p)?;
        h.set_column(j, &z.tr_mul(&jv));
    }
    Ok(h)
}

/// Eigenvalues and directions of the ratio matrix mapping consecutive
/// history vectors onto each other, sorted by descending modulus.
fn ratio_spectrum(history: &[StateVector]) -> Result<Vec<(Complex64, DVector<Complex64>)>> {
    let k = history.len() - 1;
    let scale = history.iter().map(|v| v.norm()).fold(0.0, f64::max);
    if scale == 0.0 {
        return Ok(Vec::new());
    }
    let mut w: Vec<StateVector> = Vec::new();
    for v in &history[..k] {
        if let Some(q) = linalg::orthonormalize_against(&w, v, 0.0) {
            let residual_norm = {
                let mut r = v.clone();
                for b in &w {
                    let c = b.dot(&r);
                    r.axpy(-c, b, 1.0);
                }
                r.norm()
            };
            if residual_norm > HISTORY_RANK_TOL * scale {
                w.push(q);
            }
        }
    }
    if w.is_empty() {
        return Ok(Vec::new());
    }
    let n = history[0].len();
    let wm = linalg::columns_to_matrix(n, &w);
    let d1 = linalg::columns_to_matrix(n, &history[..k]);
    let d2 = linalg::columns_to_matrix(n, &history[1..]);
    let c1 = wm.tr_mul(&d1);
    let c2 = wm.tr_mul(&d2);
    let cutoff = 1e-14 * c1.amax().max(f64::MIN_POSITIVE);
    let pinv = c1
        .pseudo_inverse(cutoff)
        .map_err(|e| Error::InvalidArgument(e.to_string()))?;
    let g = c2 * pinv;
    let values = linalg::eigenvalues(&g)?;
    let wc = wm.map(|x| Complex64::new(x, 0.0));
    Ok(values
        .into_iter()
        .map(|mu| {
            let y = linalg::eigenvector(&g, mu);
            (mu, &wc * y)
        })
        .collect())
}

/// Growth test on the history of Q-projected residuals. When the dominant
/// ratio eigenvalue exceeds `grow_threshold` in modulus, the corresponding
/// real direction (or the two real directions spanning a complex pair) is
/// appended to the basis and `H` is marked stale. Returns the updated basis.
///
/// Fails with [`Error::BasisFull`] when growth is needed at `m_max`.
pub fn adapt_basis(history: &[StateVector], basis: &SlowBasis, opts: &RpmOptions) -> Result<SlowBasis> {
    let mut out = basis.clone();
    if history.len() < 2 {
        return Ok(out);
    }
    let spectrum = ratio_spectrum(history)?;
    let Some((mu, dir)) = spectrum.into_iter().next() else {
        return Ok(out);
    };
    if mu.norm() <= opts.grow_threshold {
        return Ok(out);
    }
    let needed = if mu.im != 0.0 { 2 } else { 1 };
    let m_max = opts.m_max.min(basis.state_dim());
    if basis.dim() + needed > m_max {
        return Err(Error::BasisFull { m_max });
    }
    let mut grew = out.push(&dir.map(|x| x.re));
    if mu.im != 0.0 {
        grew |= out.push(&dir.map(|x| x.im));
    }
    if grew {
        debug!(
            "rpm: basis grown to m = {} (ratio {:.4} {:+.4}i)",
            out.dim(),
            mu.re,
            mu.im
        );
    }
    Ok(out)
}

/// Finds a fixed point `u = Phi(u; p)`.
///
/// Each outer iteration costs one map call for `Phi(u)` plus `m` calls
/// whenever `H` is refreshed. Map errors abort with `Err`; numerical
/// failures are reported through [`RpmStatus`].
pub fn rpm_solve(
    stepper: &Timestepper,
    u0: &StateVector,
    p: &Parameters,
    opts: &RpmOptions,
    warm_basis: Option<SlowBasis>,
) -> Result<FixedPointResult> {
    opts.validate()?;
    let n = stepper.dim();
    if u0.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: u0.len(),
        });
    }
    let mut basis = match warm_basis {
        Some(b) if b.state_dim() != n => {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: b.state_dim(),
            })
        }
        Some(b) => b,
        None => SlowBasis::empty(n),
    };
    let start_calls = stepper.calls();
    let mut u = u0.clone();
    let mut history: VecDeque<StateVector> = VecDeque::with_capacity(opts.history);
    let mut min_residual = f64::INFINITY;
    let mut basis_full = false;
    let mut iteration = 0;
    let mut residual;

    let status = loop {
        iteration += 1;
        let f = stepper.evaluate(&u, p)?;
        let r = &f - &u;
        residual = r.norm();
        if !residual.is_finite() {
            break RpmStatus::Diverged;
        }
        if residual <= opts.tolerance {
            break RpmStatus::Converged;
        }
        min_residual = min_residual.min(residual);
        if residual > opts.divergence_factor * min_residual {
            break RpmStatus::Diverged;
        }
        if iteration > opts.max_iterations {
            break RpmStatus::MaxIterations;
        }

        let qr = basis.complement(&r);
        let q_norm = qr.norm();
        if history.len() == opts.history {
            history.pop_front();
        }
        history.push_back(qr);

        // Picard on Q is only judged slow when the Q-residual itself is
        // contracting slowly; right after a large Newton step the ratio
        // eigenproblem sees P-Q coupling rather than Picard dynamics.
        let contraction = history
            .iter()
            .rev()
            .nth(1)
            .map_or(0.0, |prev| q_norm / prev.norm().max(f64::MIN_POSITIVE));
        if iteration > opts.warmup
            && history.len() >= 2
            && q_norm > opts.tolerance
            && contraction > opts.grow_threshold
        {
            let hist: Vec<StateVector> = history.iter().cloned().collect();
            match adapt_basis(&hist, &basis, opts) {
                Ok(grown) => {
                    if grown.dim() != basis.dim() {
                        basis = grown;
                        history.clear();
                    }
                }
                Err(Error::BasisFull { .. }) => {
                    if !basis_full {
                        warn!("rpm: basis full at m = {}", basis.dim());
                    }
                    basis_full = true;
                }
                Err(e) => return Err(e),
            }
        }

        let slow_r = basis.coordinates(&r);
        let due = basis.age >= opts.refresh_interval && slow_r.norm() > opts.tolerance;
        if basis.dim() > 0 && (basis.stale || due) {
            let h = slow_jacobian(stepper, &u, &f, &basis.z, &opts.eps, p)?;
            basis.set_jacobian(h);
            basis.deflate(opts.drop_threshold)?;
        }

        let m = basis.dim();
        let next = if m == 0 {
            f
        } else {
            let a = DMatrix::<f64>::identity(m, m) - &basis.h;
            if linalg::condition_number(&a) > opts.singular_condition {
                break RpmStatus::SingularSlowNewton;
            }
            let rhs = basis.coordinates(&r);
            let delta = a
                .lu()
                .solve(&rhs)
                .ok_or_else(|| Error::InvalidArgument("singular slow Newton matrix".into()))?;
            let slow = basis.coordinates(&u) + delta;
            &basis.z * slow + basis.complement(&f)
        };
        basis.age += 1;
        u = next;
    };

    Ok(FixedPointResult {
        state: u,
        residual,
        iterations: iteration,
        map_calls: stepper.calls() - start_calls,
        basis,
        status,
        basis_full,
    })
}
