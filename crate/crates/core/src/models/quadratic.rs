use crate::error::Result;
use crate::timestepper::{CycleMap, Parameters, StateVector};

/// Componentwise `u_i -> u_i^2 + lambda`.
///
/// Fixed points `(1 +- sqrt(1 - 4 lambda)) / 2` meet in a fold at
/// `(u, lambda) = (1/2, 1/4)`.
#[derive(Debug, Clone)]
pub struct QuadraticMap {
    dim: usize,
    default_lambda: f64,
}

impl QuadraticMap {
    pub fn new(dim: usize) -> Self {
        Self {
            dim,
            default_lambda: 0.0,
        }
    }

    pub fn with_default_lambda(mut self, lambda: f64) -> Self {
        self.default_lambda = lambda;
        self
    }

    /// Lower (stable) fixed point, `None` past the fold.
    pub fn lower_fixed_point(lambda: f64) -> Option<f64> {
        let disc = 1.0 - 4.0 * lambda;
        (disc >= 0.0).then(|| (1.0 - disc.sqrt()) / 2.0)
    }
}

impl CycleMap for QuadraticMap {
    fn name(&self) -> &str {
        "quadratic"
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn default_parameters(&self) -> Parameters {
        Parameters::new("lambda", self.default_lambda)
    }

    fn apply(&self, u: &StateVector, p: &Parameters) -> Result<StateVector> {
        let lambda = p.lambda();
        Ok(u.map(|x| x * x + lambda))
    }
}
