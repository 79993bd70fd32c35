//! Plain successive substitution `u <- Phi(u)`, the baseline every
//! superstructure is measured against.

use crate::error::Result;
use crate::timestepper::{Parameters, StateVector, Timestepper};

#[derive(Debug, Clone, PartialEq)]
pub struct DirectRun {
    pub state: StateVector,
    /// Cycles integrated (= map calls).
    pub cycles: usize,
    /// Norm of the last cycle-to-cycle change.
    pub last_change: f64,
    pub converged: bool,
}

/// Iterates the map until the cycle-to-cycle change drops to `tolerance`
/// or `max_cycles` is reached.
pub fn simulate_to_steady_state(
    stepper: &Timestepper,
    u0: &StateVector,
    p: &Parameters,
    tolerance: f64,
    max_cycles: usize,
) -> Result<DirectRun> {
    let mut u = u0.clone();
    let mut last_change = f64::INFINITY;
    for cycle in 1..=max_cycles {
        let next = stepper.evaluate(&u, p)?;
        last_change = (&next - &u).norm();
        u = next;
        if last_change <= tolerance {
            return Ok(DirectRun {
                state: u,
                cycles: cycle,
                last_change,
                converged: true,
            });
        }
    }
    Ok(DirectRun {
        state: u,
        cycles: max_cycles,
        last_change,
        converged: false,
    })
}

/// Exactly `n` cycles.
pub fn simulate_cycles(stepper: &Timestepper, u0: &StateVector, p: &Parameters, n: usize) -> Result<StateVector> {
    let mut u = u0.clone();
    for _ in 0..n {
        u = stepper.evaluate(&u, p)?;
    }
    Ok(u)
}
