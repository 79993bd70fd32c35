use std::f64::consts::PI;

use nalgebra::Matrix2;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::timestepper::{CycleMap, Parameters, StateVector};

/// Damped linear oscillator `x'' + 2 zeta omega0 x' + omega0^2 x = f cos(omega t)`
/// sampled once per forcing period `T = 2 pi / omega` (stroboscopic map).
///
/// The forcing amplitude `f` is the continuation parameter `"forcing"`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ForcedOscillatorModel {
    pub zeta: f64,
    pub omega0: f64,
    pub omega: f64,
    pub forcing: f64,
    /// Fixed RK4 steps per forcing period.
    pub n_steps: usize,
}

impl Default for ForcedOscillatorModel {
    fn default() -> Self {
        Self {
            zeta: 0.1,
            omega0: 1.0,
            omega: 1.0,
            forcing: 1.0,
            n_steps: 400,
        }
    }
}

impl ForcedOscillatorModel {
    pub fn validate(&self) -> Result<()> {
        if !(self.omega > 0.0 && self.omega0 > 0.0 && self.zeta >= 0.0) || self.n_steps == 0 {
            return Err(Error::InvalidArgument(
                "oscillator needs omega > 0, omega0 > 0, zeta >= 0 and n_steps >= 1".into(),
            ));
        }
        Ok(())
    }

    /// System matrix of the first-order form `(x, x')`.
    pub fn system_matrix(&self) -> Matrix2<f64> {
        Matrix2::new(
            0.0,
            1.0,
            -self.omega0 * self.omega0,
            -2.0 * self.zeta * self.omega0,
        )
    }

    pub fn forcing_period(&self) -> f64 {
        2.0 * PI / self.omega
    }

    /// Sample of the periodic response at `t = 0` (phase of `cos(omega t)`).
    pub fn periodic_state(&self, forcing: f64) -> StateVector {
        let denom = Complex64::new(
            self.omega0 * self.omega0 - self.omega * self.omega,
            2.0 * self.zeta * self.omega0 * self.omega,
        );
        let amp = Complex64::new(forcing, 0.0) / denom;
        StateVector::from_column_slice(&[amp.re, -self.omega * amp.im])
    }

    fn rhs(&self, t: f64, x: [f64; 2], forcing: f64) -> [f64; 2] {
        let w0 = self.omega0;
        [
            x[1],
            -2.0 * self.zeta * w0 * x[1] - w0 * w0 * x[0] + forcing * (self.omega * t).cos(),
        ]
    }

    fn integrate(&self, u: &StateVector, forcing: f64, samples: usize) -> Vec<(f64, StateVector)> {
        let n = self.n_steps;
        let h = self.forcing_period() / n as f64;
        let every = if samples == 0 { n } else { n.div_ceil(samples).max(1) };
        let mut out = Vec::new();
        let mut x = [u[0], u[1]];
        for step in 0..n {
            let t = step as f64 * h;
            let k1 = self.rhs(t, x, forcing);
            let k2 = self.rhs(t + 0.5 * h, [x[0] + 0.5 * h * k1[0], x[1] + 0.5 * h * k1[1]], forcing);
            let k3 = self.rhs(t + 0.5 * h, [x[0] + 0.5 * h * k2[0], x[1] + 0.5 * h * k2[1]], forcing);
            let k4 = self.rhs(t + h, [x[0] + h * k3[0], x[1] + h * k3[1]], forcing);
            for i in 0..2 {
                x[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
            }
            let done = step + 1;
            if done == n || (samples > 0 && done % every == 0) {
                out.push((done as f64 * h, StateVector::from_column_slice(&x)));
            }
        }
        out
    }
}

impl CycleMap for ForcedOscillatorModel {
    fn name(&self) -> &str {
        "oscillator"
    }

    fn dim(&self) -> usize {
        2
    }

    fn period(&self) -> f64 {
        self.forcing_period()
    }

    fn default_parameters(&self) -> Parameters {
        Parameters::new("forcing", self.forcing)
    }

    fn apply(&self, u: &StateVector, p: &Parameters) -> Result<StateVector> {
        let forcing = p.get("forcing")?;
        let mut traj = self.integrate(u, forcing, 0);
        Ok(traj.pop().expect("at least one step").1)
    }

    fn apply_sampled(&self, u: &StateVector, p: &Parameters, samples: usize) -> Result<Vec<(f64, StateVector)>> {
        let forcing = p.get("forcing")?;
        let mut traj = self.integrate(u, forcing, samples);
        // Guarantee the end-of-period state is the last entry exactly once.
        traj.dedup_by(|a, b| a.0 == b.0);
        Ok(traj)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// `exp(M t)` for the underdamped case in closed form:
    /// `e^{-a t} [cos(wd t) I + sin(wd t)/wd (M + a I)]`, `a = zeta omega0`.
    fn monodromy(model: &ForcedOscillatorModel, t: f64) -> Matrix2<f64> {
        let a = model.zeta * model.omega0;
        let wd = model.omega0 * (1.0 - model.zeta * model.zeta).sqrt();
        let m = model.system_matrix();
        let decay = (-a * t).exp();
        (Matrix2::identity() * (wd * t).cos() + (m + Matrix2::identity() * a) * ((wd * t).sin() / wd)) * decay
    }

    #[test]
    fn unforced_map_is_matrix_exponential() {
        let model = ForcedOscillatorModel::default();
        let p = Parameters::new("forcing", 0.0);
        let e = monodromy(&model, model.forcing_period());
        for u in [[1.0, 0.0], [0.0, 1.0], [0.3, -2.0]] {
            let out = model.apply(&StateVector::from_column_slice(&u), &p).unwrap();
            let expected = e * nalgebra::Vector2::new(u[0], u[1]);
            assert!((out[0] - expected[0]).abs() <= 1e-8);
            assert!((out[1] - expected[1]).abs() <= 1e-8);
        }
    }

    #[test]
    fn periodic_state_is_a_fixed_point() {
        let model = ForcedOscillatorModel::default();
        // Resonant forcing: f = 0.2 gives a unit-amplitude response.
        let p = Parameters::new("forcing", 0.2);
        let u = model.periodic_state(0.2);
        assert!((u.norm() - 1.0).abs() < 1e-12);
        let out = model.apply(&u, &p).unwrap();
        assert!((out - &u).amax() <= 1e-8);
    }

    #[test]
    fn rk4_self_convergence() {
        let coarse = ForcedOscillatorModel::default();
        let fine = ForcedOscillatorModel {
            n_steps: 800,
            ..coarse.clone()
        };
        let p = Parameters::new("forcing", 0.2);
        let u = StateVector::from_column_slice(&[0.7, -0.2]);
        let a = coarse.apply(&u, &p).unwrap();
        let b = fine.apply(&u, &p).unwrap();
        assert!((a - b).amax() <= 1e-9);
    }

    #[test]
    fn sampled_run_ends_at_period() {
        let model = ForcedOscillatorModel::default();
        let p = model.default_parameters();
        let u = StateVector::from_column_slice(&[0.1, 0.2]);
        let traj = model.apply_sampled(&u, &p, 8).unwrap();
        assert_eq!(traj.len(), 8);
        assert!((traj.last().unwrap().0 - model.forcing_period()).abs() < 1e-12);
        assert_eq!(traj.last().unwrap().1, model.apply(&u, &p).unwrap());
    }
}
