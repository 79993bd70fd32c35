//! Pseudo-arclength continuation of fixed-point branches `u = Phi(u; lambda)`.
//!
//! Points are corrected with a bordered Newton iteration in the slow
//! coordinates `Z^T u` and `lambda`, while the complement of the slow
//! subspace receives one Picard relaxation per iteration. Folds show up as
//! sign changes of `det(I - H)` and are refined by bisection in arclength.

use std::collections::VecDeque;

use log::debug;
use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::arnoldi::{arnoldi_factorize, floquet_multipliers, ArnoldiOptions};
use crate::error::{Error, Result};
use crate::rpm::{adapt_basis, rpm_solve, slow_jacobian, RpmOptions, SlowBasis};
use crate::timestepper::{Parameters, StateVector, Timestepper};

/// Tolerance on the arclength constraint at acceptance.
pub const ARCLENGTH_TOL: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ContinuationOptions {
    pub ds: f64,
    pub ds_min: f64,
    pub ds_max: f64,
    /// Step factor after a failed correction.
    pub shrink: f64,
    /// Step factor after an easy correction.
    pub expand: f64,
    /// Corrections needing at most this many iterations count as easy.
    pub easy_iterations: usize,
    pub max_points: usize,
    /// Full-space residual accepted by the corrector.
    pub tolerance: f64,
    pub max_corrector_iterations: usize,
    /// Weight of the state in `theta |u|^2 + (1 - theta) lambda^2`.
    pub theta: f64,
    /// Smallest slow-basis dimension kept for multiplier monitoring.
    pub min_basis: usize,
    pub fold_det_tolerance: f64,
    /// Bisection stops once the arclength bracket is this narrow.
    pub fold_bracket: f64,
    /// Run Arnoldi with this many steps at every accepted point.
    pub arnoldi_k: Option<usize>,
    pub rpm: RpmOptions,
}

impl Default for ContinuationOptions {
    fn default() -> Self {
        Self {
            ds: 0.01,
            ds_min: 1e-6,
            ds_max: 0.1,
            shrink: 0.5,
            expand: 1.3,
            easy_iterations: 3,
            max_points: 500,
            tolerance: 1e-8,
            max_corrector_iterations: 20,
            theta: 0.5,
            min_basis: 1,
            fold_det_tolerance: 1e-8,
            fold_bracket: 1e-6,
            arnoldi_k: None,
            rpm: RpmOptions::default(),
        }
    }
}

impl ContinuationOptions {
    pub fn validate(&self) -> Result<()> {
        if !(0.0 < self.ds_min && self.ds_min <= self.ds && self.ds <= self.ds_max) {
            return Err(Error::InvalidArgument("need 0 < ds_min <= ds <= ds_max".into()));
        }
        if !(0.0 < self.theta && self.theta < 1.0) {
            return Err(Error::InvalidArgument("theta must lie in (0, 1)".into()));
        }
        if !(0.0 < self.shrink && self.shrink < 1.0 && self.expand >= 1.0) {
            return Err(Error::InvalidArgument("need 0 < shrink < 1 <= expand".into()));
        }
        if !(self.tolerance > 0.0) || self.max_corrector_iterations == 0 || self.max_points == 0 {
            return Err(Error::InvalidArgument(
                "tolerance, max_corrector_iterations and max_points must be positive".into(),
            ));
        }
        self.rpm.validate()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BranchPoint {
    pub u: StateVector,
    pub lambda: f64,
    /// Accumulated arclength in the scaled metric.
    pub s: f64,
    /// Eigenvalues of `H` (or Arnoldi Ritz values when requested), by
    /// descending modulus.
    pub multipliers: Vec<Complex64>,
    pub residual: f64,
    pub fold: bool,
    /// `det(I - H)`; 1 for an empty basis.
    pub det: f64,
    pub iterations: usize,
    pub basis: SlowBasis,
}

/// Unit tangent in the scaled metric.
#[derive(Debug, Clone, PartialEq)]
pub struct Tangent {
    pub u: StateVector,
    pub lambda: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub u: StateVector,
    pub lambda: f64,
    pub tangent: Tangent,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FoldRecord {
    pub lambda: f64,
    pub u: StateVector,
    pub det: f64,
    /// Indices of the accepted points on either side of the fold.
    pub bracket: (usize, usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Termination {
    LeftRange,
    PointBudget,
    StepUnderflow,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Branch {
    pub points: Vec<BranchPoint>,
    pub folds: Vec<FoldRecord>,
    pub termination: Termination,
    pub map_calls: u64,
}

/// `sqrt(theta |du|^2 + (1 - theta) dl^2)`.
pub fn scaled_norm(du: &StateVector, dl: f64, theta: f64) -> f64 {
    (theta * du.norm_squared() + (1.0 - theta) * dl * dl).sqrt()
}

/// Secant predictor; the tangent at a branch start points in `+lambda`.
pub fn predict(prev: &BranchPoint, prev2: Option<&BranchPoint>, ds: f64, theta: f64) -> Result<Prediction> {
    let tangent = match prev2 {
        None => Tangent {
            u: StateVector::zeros(prev.u.len()),
            lambda: 1.0 / (1.0 - theta).sqrt(),
        },
        Some(p2) => {
            let du = &prev.u - &p2.u;
            let dl = prev.lambda - p2.lambda;
            let norm = scaled_norm(&du, dl, theta);
            if norm < 1e-14 {
                return Err(Error::DegenerateTangent);
            }
            Tangent {
                u: du / norm,
                lambda: dl / norm,
            }
        }
    };
    Ok(Prediction {
        u: &prev.u + &tangent.u * ds,
        lambda: prev.lambda + ds * tangent.lambda,
        tangent,
    })
}

fn arclength_defect(u: &StateVector, lambda: f64, tangent: &Tangent, base: &BranchPoint, ds: f64, theta: f64) -> f64 {
    theta * tangent.u.dot(&(u - &base.u)) + (1.0 - theta) * tangent.lambda * (lambda - base.lambda) - ds
}

/// Computes `H`, the multipliers and `det(I - H)` at an accepted point.
#[allow(clippy::too_many_arguments)]
fn finalize(
    stepper: &Timestepper,
    params: &Parameters,
    u: StateVector,
    lambda: f64,
    phi_u: &StateVector,
    residual: f64,
    iterations: usize,
    mut basis: SlowBasis,
    opts: &ContinuationOptions,
) -> Result<BranchPoint> {
    let p = params.with_lambda(lambda);
    let m = basis.dim();
    let h = slow_jacobian(stepper, &u, phi_u, basis.z(), &opts.rpm.eps, &p)?;
    let det = if m == 0 {
        1.0
    } else {
        (DMatrix::<f64>::identity(m, m) - &h).determinant()
    };
    basis.set_jacobian(h);
    let multipliers = match opts.arnoldi_k {
        Some(k) => {
            let aopts = ArnoldiOptions {
                k,
                k_max: k.max(ArnoldiOptions::default().k_max),
                eps: opts.rpm.eps,
                ..Default::default()
            };
            floquet_multipliers(stepper, &u, &p, &aopts)?.values()
        }
        None => basis.multipliers()?,
    };
    Ok(BranchPoint {
        u,
        lambda,
        s: 0.0,
        multipliers,
        residual,
        fold: false,
        det,
        iterations,
        basis,
    })
}

/// Bordered Newton corrector from `pred` on the hyperplane at arclength
/// `ds` from `prev` along `pred.tangent`. `basis` is updated in place when
/// the slow subspace grows.
pub fn correct(
    stepper: &Timestepper,
    params: &Parameters,
    pred: &Prediction,
    prev: &BranchPoint,
    ds: f64,
    basis: &mut SlowBasis,
    opts: &ContinuationOptions,
) -> Result<BranchPoint> {
    if !pred.lambda.is_finite() || pred.u.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFiniteInput { index: 0 });
    }
    let theta = opts.theta;
    let t = &pred.tangent;
    let mut u = pred.u.clone();
    let mut lambda = pred.lambda;
    let mut history: VecDeque<StateVector> = VecDeque::with_capacity(opts.rpm.history);
    let mut residual = f64::INFINITY;

    for iteration in 1..=opts.max_corrector_iterations {
        let p = params.with_lambda(lambda);
        let f = stepper.evaluate(&u, &p)?;
        let r = &f - &u;
        residual = r.norm();
        let defect = arclength_defect(&u, lambda, t, prev, ds, theta);
        if residual <= opts.tolerance && defect.abs() <= ARCLENGTH_TOL {
            return finalize(stepper, params, u, lambda, &f, residual, iteration, basis.clone(), opts);
        }
        if !residual.is_finite() {
            break;
        }

        let qr = basis.complement(&r);
        let q_norm = qr.norm();
        let contraction = history.back().map_or(0.0, |prev_q| q_norm / prev_q.norm().max(f64::MIN_POSITIVE));
        if history.len() == opts.rpm.history {
            history.pop_front();
        }
        history.push_back(qr);
        if history.len() >= 2 && q_norm > opts.tolerance && contraction > opts.rpm.grow_threshold {
            let hist: Vec<StateVector> = history.iter().cloned().collect();
            let grown = adapt_basis(&hist, basis, &opts.rpm)?;
            if grown.dim() != basis.dim() {
                *basis = grown;
                for v in history.iter_mut() {
                    *v = basis.complement(v);
                }
            }
        }

        let phi_l = stepper.parameter_derivative(&u, &f, &opts.rpm.eps, &p)?;
        let m = basis.dim();
        let h = slow_jacobian(stepper, &u, &f, basis.z(), &opts.rpm.eps, &p)?;
        basis.set_jacobian(h.clone());

        let z = basis.z();
        let q_phi = basis.complement(&phi_l);
        let q_r = basis.complement(&r);
        let mut a = DMatrix::<f64>::zeros(m + 1, m + 1);
        let mut rhs = DVector::<f64>::zeros(m + 1);
        if m > 0 {
            let zt_phi = z.tr_mul(&phi_l);
            let zt_t = z.tr_mul(&t.u);
            a.view_mut((0, 0), (m, m))
                .copy_from(&(DMatrix::<f64>::identity(m, m) - &h));
            for i in 0..m {
                a[(i, m)] = -zt_phi[i];
                a[(m, i)] = theta * zt_t[i];
            }
            rhs.rows_mut(0, m).copy_from(&z.tr_mul(&r));
        }
        a[(m, m)] = theta * t.u.dot(&q_phi) + (1.0 - theta) * t.lambda;
        rhs[m] = -defect - theta * t.u.dot(&q_r);

        let Some(sol) = a.lu().solve(&rhs) else {
            break;
        };
        let dl = sol[m];
        let dc = sol.rows(0, m).into_owned();
        u = u + z * dc + q_r + q_phi * dl;
        lambda += dl;
        if !lambda.is_finite() || u.iter().any(|x| !x.is_finite()) {
            break;
        }
    }
    Err(Error::CorrectorFailed {
        iterations: opts.max_corrector_iterations,
        residual,
    })
}

/// Adds leading Ritz directions until the basis has `min_basis` columns.
fn ensure_min_basis(
    stepper: &Timestepper,
    u: &StateVector,
    p: &Parameters,
    basis: &mut SlowBasis,
    opts: &ContinuationOptions,
) -> Result<()> {
    let n = stepper.dim();
    let want = opts.min_basis.min(n).min(opts.rpm.m_max);
    if basis.dim() >= want {
        return Ok(());
    }
    let k = (want + 4).min(n).min(ArnoldiOptions::default().k_max.max(want));
    let fact = arnoldi_factorize(stepper, u, p, k, None, &opts.rpm.eps, k.max(1))?;
    for (mu, x) in fact.ritz_vectors()? {
        if basis.dim() >= want {
            break;
        }
        if mu.im < 0.0 {
            continue;
        }
        basis.push(&x.map(|c| c.re));
        if mu.im > 0.0 {
            basis.push(&x.map(|c| c.im));
        }
    }
    Ok(())
}

/// Bisection in arclength between `a` and `b`, whose `det(I - H)` differ
/// in sign.
fn refine_fold(
    stepper: &Timestepper,
    params: &Parameters,
    a: &BranchPoint,
    b: &BranchPoint,
    opts: &ContinuationOptions,
) -> Result<BranchPoint> {
    let du = &b.u - &a.u;
    let dl = b.lambda - a.lambda;
    let dist = scaled_norm(&du, dl, opts.theta);
    let tangent = Tangent {
        u: du / dist,
        lambda: dl / dist,
    };
    let (mut lo, mut hi) = (0.0, dist);
    let side = a.det.signum();
    let mut best: Option<(f64, BranchPoint)> = None;
    while hi - lo > opts.fold_bracket {
        let mid = 0.5 * (lo + hi);
        let pred = Prediction {
            u: &a.u + &tangent.u * mid,
            lambda: a.lambda + mid * tangent.lambda,
            tangent: tangent.clone(),
        };
        let mut basis = a.basis.clone();
        let point = correct(stepper, params, &pred, a, mid, &mut basis, opts)?;
        let det = point.det;
        if best.as_ref().is_none_or(|(_, bp)| det.abs() < bp.det.abs()) {
            best = Some((mid, point));
        }
        if det.abs() <= opts.fold_det_tolerance {
            break;
        }
        if det.signum() == side {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let (mid, mut point) = match best {
        Some(found) => found,
        None => {
            let closer = if a.det.abs() <= b.det.abs() { a } else { b };
            (if closer == a { 0.0 } else { dist }, closer.clone())
        }
    };
    point.s = a.s + (b.s - a.s) * (mid / dist);
    point.fold = true;
    debug!("continuation: fold at lambda = {:.10}, det = {:.3e}", point.lambda, point.det);
    Ok(point)
}

fn sign_change(a: &BranchPoint, b: &BranchPoint) -> bool {
    a.det != 0.0 && b.det != 0.0 && a.det.signum() != b.det.signum()
}

/// Fold records of a traced branch. Points already flagged as folds are
/// reported directly; unrefined sign changes of `det(I - H)` are refined
/// with the corrector.
pub fn detect_fold(
    stepper: &Timestepper,
    params: &Parameters,
    branch: &[BranchPoint],
    opts: &ContinuationOptions,
) -> Result<Vec<FoldRecord>> {
    let mut folds = Vec::new();
    for i in 0..branch.len() {
        if branch[i].fold {
            folds.push(FoldRecord {
                lambda: branch[i].lambda,
                u: branch[i].u.clone(),
                det: branch[i].det,
                bracket: (i.saturating_sub(1), (i + 1).min(branch.len() - 1)),
            });
        }
    }
    for i in 1..branch.len() {
        let (a, b) = (&branch[i - 1], &branch[i]);
        if a.fold || b.fold || !sign_change(a, b) {
            continue;
        }
        let point = refine_fold(stepper, params, a, b, opts)?;
        folds.push(FoldRecord {
            lambda: point.lambda,
            u: point.u,
            det: point.det,
            bracket: (i - 1, i),
        });
    }
    folds.sort_by_key(|f| f.bracket);
    Ok(folds)
}

/// Traces the branch through `(start_u, start_lambda)` while `lambda` stays
/// in `[range.0, range.1]`. Refined fold points are inserted into the
/// branch with `fold = true`.
pub fn trace_branch(
    stepper: &Timestepper,
    params: &Parameters,
    start_u: &StateVector,
    start_lambda: f64,
    range: (f64, f64),
    opts: &ContinuationOptions,
) -> Result<Branch> {
    opts.validate()?;
    let (lo, hi) = (range.0.min(range.1), range.0.max(range.1));
    let before = stepper.calls();
    let p0 = params.with_lambda(start_lambda);
    let seed_opts = RpmOptions {
        tolerance: opts.tolerance,
        ..opts.rpm.clone()
    };
    let seed = rpm_solve(stepper, start_u, &p0, &seed_opts, None)
        .map_err(|e| Error::InitialSolveFailed(e.to_string()))?;
    if !seed.converged() {
        return Err(Error::InitialSolveFailed(format!(
            "{:?} with residual {:.3e}",
            seed.status, seed.residual
        )));
    }
    let mut basis = seed.basis;
    ensure_min_basis(stepper, &seed.state, &p0, &mut basis, opts)?;
    let phi = stepper.evaluate(&seed.state, &p0)?;
    let first = finalize(stepper, params, seed.state, start_lambda, &phi, seed.residual, 0, basis, opts)?;

    let mut points = vec![first];
    let mut folds = Vec::new();
    if lo == hi || !(lo..=hi).contains(&start_lambda) {
        return Ok(Branch {
            points,
            folds,
            termination: Termination::LeftRange,
            map_calls: stepper.calls() - before,
        });
    }

    let mut ds = opts.ds;
    let termination = loop {
        if points.len() >= opts.max_points {
            break Termination::PointBudget;
        }
        let n = points.len();
        let prev = &points[n - 1];
        // Skip inserted fold points when forming the secant.
        let prev2 = points[..n - 1].iter().rev().find(|q| !q.fold);
        let attempt = predict(prev, prev2, ds, opts.theta).and_then(|pred| {
            let mut basis = prev.basis.clone();
            let point = correct(stepper, params, &pred, prev, ds, &mut basis, opts)?;
            Ok((pred, point))
        });
        let (pred, mut point) = match attempt {
            Ok(found) => found,
            Err(e) => {
                debug!("continuation: step {ds:.3e} failed: {e}");
                ds *= opts.shrink;
                if ds < opts.ds_min {
                    if points.len() == 1 {
                        return Err(Error::StepUnderflow { ds });
                    }
                    break Termination::StepUnderflow;
                }
                continue;
            }
        };
        // Reject corrections that reverse the direction of travel.
        let du = &point.u - &prev.u;
        let dl = point.lambda - prev.lambda;
        let chord = scaled_norm(&du, dl, opts.theta);
        let turn = opts.theta * pred.tangent.u.dot(&du) + (1.0 - opts.theta) * pred.tangent.lambda * dl;
        if chord == 0.0 || turn <= 0.0 {
            ds *= opts.shrink;
            if ds < opts.ds_min {
                break Termination::StepUnderflow;
            }
            continue;
        }
        if !(lo..=hi).contains(&point.lambda) {
            break Termination::LeftRange;
        }
        point.s = prev.s + ds;
        if sign_change(prev, &point) {
            let prev_index = points.len() - 1;
            let fold = refine_fold(stepper, params, prev, &point, opts)?;
            folds.push(FoldRecord {
                lambda: fold.lambda,
                u: fold.u.clone(),
                det: fold.det,
                bracket: (prev_index, prev_index + 2),
            });
            points.push(fold);
        }
        if point.iterations <= opts.easy_iterations {
            ds = (ds * opts.expand).min(opts.ds_max);
        }
        points.push(point);
    };

    Ok(Branch {
        points,
        folds,
        termination,
        map_calls: stepper.calls() - before,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{LinearMapModel, QuadraticMap, SpectrumEntry};

    fn point(u: &[f64], lambda: f64) -> BranchPoint {
        BranchPoint {
            u: StateVector::from_column_slice(u),
            lambda,
            s: 0.0,
            multipliers: Vec::new(),
            residual: 0.0,
            fold: false,
            det: 1.0,
            iterations: 0,
            basis: SlowBasis::empty(u.len()),
        }
    }

    fn lam(x: f64) -> Parameters {
        Parameters::new("lambda", x)
    }

    #[test]
    fn secant_prediction_is_collinear() {
        let prev = point(&[1.0], 0.1);
        let prev2 = point(&[0.9], 0.0);
        let theta = 0.5;
        let ds = 0.1 * (theta * 0.01 + (1.0 - theta) * 0.01f64).sqrt();
        let pred = predict(&prev, Some(&prev2), ds, theta).unwrap();
        let a = (pred.u[0] - prev.u[0], pred.lambda - prev.lambda);
        let b = (prev.u[0] - prev2.u[0], prev.lambda - prev2.lambda);
        assert!((a.0 * b.1 - a.1 * b.0).abs() < 1e-15);
        assert!(a.0 * b.0 + a.1 * b.1 > 0.0);
        let step = scaled_norm(&StateVector::from_element(1, a.0), a.1, theta);
        assert!((step - ds).abs() < 1e-15);
    }

    #[test]
    fn branch_start_moves_in_lambda() {
        let prev = point(&[0.3, 0.4], 0.2);
        let pred = predict(&prev, None, 0.01, 0.5).unwrap();
        assert!((pred.lambda - (0.2 + 0.01 / 0.5f64.sqrt())).abs() < 1e-15);
        assert_eq!(pred.u, prev.u);
    }

    #[test]
    fn degenerate_tangent() {
        let prev = point(&[1.0], 0.1);
        assert_eq!(predict(&prev, Some(&prev.clone()), 0.01, 0.5), Err(Error::DegenerateTangent));
    }

    #[test]
    fn quadratic_tangent_turns_at_fold() {
        let on_branch = |u: f64| point(&[u], u - u * u);
        let below = predict(&on_branch(0.45), Some(&on_branch(0.44)), 0.01, 0.5).unwrap();
        let above = predict(&on_branch(0.56), Some(&on_branch(0.55)), 0.01, 0.5).unwrap();
        assert!(below.tangent.lambda > 0.0);
        assert!(above.tangent.lambda < 0.0);
    }

    #[test]
    fn corrected_points_lie_on_quadratic_manifold() {
        let s = Timestepper::new(QuadraticMap::new(1));
        let opts = ContinuationOptions::default();
        let mut prev = point(&[0.2], 0.16);
        prev.basis = SlowBasis::from_vectors(1, &[StateVector::from_element(1, 1.0)]).unwrap();
        let pred = predict(&prev, None, 0.01, opts.theta).unwrap();
        let mut basis = prev.basis.clone();
        let q = correct(&s, &lam(0.0), &pred, &prev, 0.01, &mut basis, &opts).unwrap();
        let u = q.u[0];
        assert!((u - u * u - q.lambda).abs() <= 1e-10);
        let defect = arclength_defect(&q.u, q.lambda, &pred.tangent, &prev, 0.01, opts.theta);
        assert!(defect.abs() <= ARCLENGTH_TOL);
    }

    #[test]
    fn prediction_on_branch_converges_at_once() {
        let s = Timestepper::new(LinearMapModel::new(vec![SpectrumEntry::Continuation], &[0.0], None).unwrap());
        let opts = ContinuationOptions::default();
        let prev = point(&[0.0], 0.2);
        let pred = predict(&prev, None, 0.01, opts.theta).unwrap();
        let mut basis = SlowBasis::empty(1);
        let q = correct(&s, &lam(0.0), &pred, &prev, 0.01, &mut basis, &opts).unwrap();
        assert!(q.iterations <= 2);
    }

    #[test]
    fn linear_family_matches_closed_form() {
        let model = LinearMapModel::new(
            vec![SpectrumEntry::Continuation, SpectrumEntry::Real(0.3)],
            &[1.0, 1.0],
            None,
        )
        .unwrap();
        let s = Timestepper::new(model);
        let opts = ContinuationOptions::default();
        let branch = trace_branch(&s, &lam(0.0), &StateVector::zeros(2), 0.0, (0.0, 0.9), &opts).unwrap();
        assert_eq!(branch.termination, Termination::LeftRange);
        assert!(branch.points.len() > 5);
        assert!(branch.points.last().unwrap().lambda > 0.8);
        for q in &branch.points {
            let exact = 1.0 / (1.0 - q.lambda);
            assert!((q.u[0] - exact).abs() <= 1e-8 * exact, "{} vs {}", q.u[0], exact);
            assert!((q.u[1] - 1.0 / 0.7).abs() <= 1e-8);
            assert!(q.residual <= opts.tolerance);
        }
        assert!(branch.folds.is_empty());
        assert!(detect_fold(&s, &lam(0.0), &branch.points, &opts).unwrap().is_empty());
    }

    #[test]
    fn quadratic_branch_folds() {
        let s = Timestepper::new(QuadraticMap::new(1));
        let opts = ContinuationOptions::default();
        let branch = trace_branch(&s, &lam(0.0), &StateVector::zeros(1), 0.0, (0.0, 0.3), &opts).unwrap();
        let max_lambda = branch.points.iter().map(|q| q.lambda).fold(f64::MIN, f64::max);
        assert!((max_lambda - 0.25).abs() <= 1e-4);
        assert!(branch.points.iter().any(|q| q.u[0] < 0.3));
        assert!(branch.points.iter().any(|q| q.u[0] > 0.8));
        for w in branch.points.windows(2) {
            assert!(w[1].s > w[0].s);
        }
        for q in &branch.points {
            assert!(q.residual <= 1e-8);
            let u = q.u[0];
            assert!((u * u + q.lambda - u).abs() <= 1e-8);
        }
        let folds = detect_fold(&s, &lam(0.0), &branch.points, &opts).unwrap();
        assert_eq!(folds.len(), 1);
        assert!((folds[0].lambda - 0.25).abs() <= 1e-4);
        assert!((folds[0].u[0] - 0.5).abs() <= 1e-4);
        let (i, j) = folds[0].bracket;
        assert!(branch.points[i].det * branch.points[j].det < 0.0);
    }

    #[test]
    fn multiplier_crossing_one_is_detected() {
        let s = Timestepper::new(LinearMapModel::new(vec![SpectrumEntry::Continuation], &[0.0], None).unwrap());
        let opts = ContinuationOptions::default();
        let branch = trace_branch(&s, &lam(0.0), &StateVector::zeros(1), 0.5, (0.5, 1.5), &opts).unwrap();
        assert_eq!(branch.folds.len(), 1);
        assert!((branch.folds[0].lambda - 1.0).abs() <= 1e-6);
    }

    #[test]
    fn zero_length_range_returns_seed() {
        let s = Timestepper::new(QuadraticMap::new(1));
        let branch = trace_branch(
            &s,
            &lam(0.1),
            &StateVector::zeros(1),
            0.1,
            (0.1, 0.1),
            &ContinuationOptions::default(),
        )
        .unwrap();
        assert_eq!(branch.points.len(), 1);
        let u = branch.points[0].u[0];
        assert!((u - QuadraticMap::lower_fixed_point(0.1).unwrap()).abs() < 1e-8);
    }

    #[test]
    fn unsolvable_start_is_reported() {
        let s = Timestepper::new(QuadraticMap::new(1));
        let err = trace_branch(
            &s,
            &lam(0.0),
            &StateVector::zeros(1),
            0.3,
            (0.3, 0.4),
            &ContinuationOptions::default(),
        )
        .unwrap_err();
        assert!(matches!(err, Error::InitialSolveFailed(_)));
    }
}
