//! The black-box cycle-map contract and the matrix-free derivative estimates
//! every superstructure is built from.
//!
//! A [`CycleMap`] is anything that maps a state vector one period forward.
//! [`Timestepper`] wraps a map with an atomic call counter, input/output
//! validation, residual evaluation, and forward-difference Jacobian actions.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Dense state vector at a cycle boundary.
pub type StateVector = DVector<f64>;

/// Upper bound on the dimension accepted by [`Timestepper::dense_jacobian`].
pub const DENSE_JACOBIAN_LIMIT: usize = 200;

/// Named real parameters with one designated continuation slot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Parameters {
    values: BTreeMap<String, f64>,
    continuation: String,
}

impl Parameters {
    /// Creates a parameter set whose continuation parameter is `name`.
    pub fn new(name: impl Into<String>, value: f64) -> Self {
        let name = name.into();
        let mut values = BTreeMap::new();
        values.insert(name.clone(), value);
        Self {
            values,
            continuation: name,
        }
    }

    pub fn with(mut self, name: impl Into<String>, value: f64) -> Self {
        self.values.insert(name.into(), value);
        self
    }

    pub fn set(&mut self, name: impl Into<String>, value: f64) {
        self.values.insert(name.into(), value);
    }

    pub fn get(&self, name: &str) -> Result<f64> {
        self.values
            .get(name)
            .copied()
            .ok_or_else(|| Error::MissingParameter(name.to_string()))
    }

    pub fn get_or(&self, name: &str, default: f64) -> f64 {
        self.values.get(name).copied().unwrap_or(default)
    }

    pub fn continuation_name(&self) -> &str {
        &self.continuation
    }

    /// Moves the continuation designation to another (existing or new) entry.
    pub fn with_continuation(mut self, name: impl Into<String>, value: f64) -> Self {
        let name = name.into();
        self.values.insert(name.clone(), value);
        self.continuation = name;
        self
    }

    /// Value of the continuation parameter.
    pub fn lambda(&self) -> f64 {
        self.values[&self.continuation]
    }

    pub fn set_lambda(&mut self, value: f64) {
        self.values.insert(self.continuation.clone(), value);
    }

    pub fn with_lambda(&self, value: f64) -> Self {
        let mut p = self.clone();
        p.set_lambda(value);
        p
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, f64)> {
        self.values.iter().map(|(k, v)| (k.as_str(), *v))
    }
}

/// A deterministic map advancing a state by one cycle (or period).
///
/// Implementations must be pure: identical `(state, parameters)` inputs give
/// bitwise-identical outputs, and concurrent calls are allowed.
pub trait CycleMap: Send + Sync + fmt::Debug {
    /// Registry name of the model.
    fn name(&self) -> &str;

    fn dim(&self) -> usize;

    /// Cycle or forcing period in model time units (informational).
    fn period(&self) -> f64 {
        1.0
    }

    /// Parameters the map expects, with their default values.
    fn default_parameters(&self) -> Parameters;

    fn apply(&self, u: &StateVector, p: &Parameters) -> Result<StateVector>;

    /// One cycle with up to `samples` intra-cycle snapshots `(time, state)`.
    /// The last entry is always the end-of-cycle state.
    fn apply_sampled(
        &self,
        u: &StateVector,
        p: &Parameters,
        _samples: usize,
    ) -> Result<Vec<(f64, StateVector)>> {
        Ok(vec![(self.period(), self.apply(u, p)?)])
    }
}

/// Forward-difference step policy: `eps = base * (1 + |u|)` when scaling
/// is enabled, `eps = base` otherwise.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpsilonPolicy {
    pub base: f64,
    pub scale_with_state: bool,
}

impl Default for EpsilonPolicy {
    fn default() -> Self {
        Self {
            base: f64::EPSILON.sqrt(),
            scale_with_state: true,
        }
    }
}

impl EpsilonPolicy {
    pub fn step(&self, scale: f64) -> f64 {
        if self.scale_with_state {
            self.base * (1.0 + scale.abs())
        } else {
            self.base
        }
    }
}

/// Map residual `u - Phi(u)` together with its 2-norm.
#[derive(Debug, Clone, PartialEq)]
pub struct Residual {
    pub vector: StateVector,
    pub norm: f64,
}

/// A cycle map with call accounting.
#[derive(Clone)]
pub struct Timestepper {
    map: Arc<dyn CycleMap>,
    calls: Arc<AtomicU64>,
}

impl fmt::Debug for Timestepper {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Timestepper")
            .field("map", &self.map)
            .field("calls", &self.calls())
            .finish()
    }
}

impl Timestepper {
    pub fn new<M: CycleMap + 'static>(map: M) -> Self {
        Self::from_arc(Arc::new(map))
    }

    pub fn from_boxed(map: Box<dyn CycleMap>) -> Self {
        Self::from_arc(Arc::from(map))
    }

    pub fn from_arc(map: Arc<dyn CycleMap>) -> Self {
        Self {
            map,
            calls: Arc::new(AtomicU64::new(0)),
        }
    }

    pub fn map(&self) -> &dyn CycleMap {
        self.map.as_ref()
    }

    pub fn name(&self) -> &str {
        self.map.name()
    }

    pub fn dim(&self) -> usize {
        self.map.dim()
    }

    pub fn period(&self) -> f64 {
        self.map.period()
    }

    pub fn default_parameters(&self) -> Parameters {
        self.map.default_parameters()
    }

    /// Total number of map calls issued through this stepper (and its clones).
    pub fn calls(&self) -> u64 {
        self.calls.load(Ordering::SeqCst)
    }

    fn check_input(&self, u: &StateVector) -> Result<()> {
        if u.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: u.len(),
            });
        }
        if let Some(index) = u.iter().position(|x| !x.is_finite()) {
            return Err(Error::NonFiniteInput { index });
        }
        Ok(())
    }

    fn check_output(&self, out: &StateVector) -> Result<()> {
        if out.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: out.len(),
            });
        }
        if let Some(index) = out.iter().position(|x| !x.is_finite()) {
            return Err(Error::NonFiniteOutput { index });
        }
        Ok(())
    }

    /// `Phi(u; p)`. Costs one map call.
    pub fn evaluate(&self, u: &StateVector, p: &Parameters) -> Result<StateVector> {
        self.check_input(u)?;
        self.calls.fetch_add(1, Ordering::SeqCst);
        let out = self.map.apply(u, p)?;
        self.check_output(&out)?;
        Ok(out)
    }

    /// One cycle with intra-cycle snapshots. Costs one map call.
    pub fn evaluate_sampled(
        &self,
        u: &StateVector,
        p: &Parameters,
        samples: usize,
    ) -> Result<Vec<(f64, StateVector)>> {
        self.check_input(u)?;
        self.calls.fetch_add(1, Ordering::SeqCst);
        let out = self.map.apply_sampled(u, p, samples)?;
        for (_, state) in &out {
            self.check_output(state)?;
        }
        Ok(out)
    }

    /// `u - Phi(u; p)` and its norm. Costs one map call.
    pub fn residual(&self, u: &StateVector, p: &Parameters) -> Result<Residual> {
        let image = self.evaluate(u, p)?;
        let vector = u - image;
        let norm = vector.norm();
        Ok(Residual { vector, norm })
    }

    /// Forward-difference estimate of `Phi_U(u) v` given the precomputed
    /// base image `phi_u = Phi(u)`. Costs one map call.
    ///
    /// The direction is normalized before perturbing and the result is scaled
    /// back by `|v|`, so the estimate is linear in `v` up to roundoff.
    pub fn jacobian_vector_product(
        &self,
        u: &StateVector,
        phi_u: &StateVector,
        v: &StateVector,
        eps: &EpsilonPolicy,
        p: &Parameters,
    ) -> Result<StateVector> {
        let vnorm = v.norm();
        if vnorm == 0.0 {
            return Err(Error::ZeroDirection);
        }
        let h = eps.step(u.norm());
        let shifted = u + v * (h / vnorm);
        let image = self.evaluate(&shifted, p)?;
        Ok((image - phi_u) * (vnorm / h))
    }

    /// Dense forward-difference Jacobian, one column per unit direction.
    /// Costs `N + 1` map calls.
    pub fn dense_jacobian(
        &self,
        u: &StateVector,
        eps: &EpsilonPolicy,
        p: &Parameters,
    ) -> Result<DMatrix<f64>> {
        let n = self.dim();
        if n > DENSE_JACOBIAN_LIMIT {
            return Err(Error::DimensionTooLarge {
                dim: n,
                limit: DENSE_JACOBIAN_LIMIT,
            });
        }
        let phi_u = self.evaluate(u, p)?;
        let mut jac = DMatrix::zeros(n, n);
        for j in 0..n {
            let e = StateVector::from_fn(n, |i, _| if i == j { 1.0 } else { 0.0 });
            let col = self.jacobian_vector_product(u, &phi_u, &e, eps, p)?;
            jac.set_column(j, &col);
        }
        Ok(jac)
    }

    /// Partial derivative of the map with respect to the continuation
    /// parameter by forward difference with step `eps.step(lambda)`.
    /// Costs one map call.
    pub fn parameter_derivative(
        &self,
        u: &StateVector,
        phi_u: &StateVector,
        eps: &EpsilonPolicy,
        p: &Parameters,
    ) -> Result<StateVector> {
        let lambda = p.lambda();
        let h = eps.step(lambda);
        let shifted = p.with_lambda(lambda + h);
        let image = self.evaluate(u, &shifted)?;
        Ok((image - phi_u) / h)
    }
}
