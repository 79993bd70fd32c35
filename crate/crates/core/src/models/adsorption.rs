//! Two-step cyclic adsorption column.
//!
//! A single adsorbing species in a carrier gas passes through a packed bed
//! discretized into `n_cells` finite volumes. Each cycle has
//!
//! 1. a feed step: flow in `+z` at speed `v_feed`, inlet concentration
//!    `c_feed`, impurity taken up by the solid;
//! 2. a blowdown/purge step: flow reversed at speed `v_blow` with clean purge
//!    gas entering at the product end, impurity desorbing.
//!
//! Transport is first-order upwind advection plus centered axial dispersion
//! with Danckwerts ends (no dispersive flux through the end faces). Uptake
//! follows a linear driving force toward the Langmuir loading
//! `q* = q_sat K c / (1 + K c)`. Time stepping is
//! the three-stage strong-stability-preserving Runge-Kutta scheme, which keeps
//! `c >= 0` and `q <= q_sat` as long as each forward-Euler stage does.
//!
//! The state is `(c_0 .. c_{n-1}, q_0 .. q_{n-1})` at the start of the feed
//! step. The column holdup is `dz * sum(c_i + phase_ratio * q_i)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::timestepper::{CycleMap, Parameters, StateVector};

/// Largest admissible Courant number for the explicit scheme.
pub const CFL_LIMIT: f64 = 0.9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AdsorptionColumnModel {
    pub n_cells: usize,
    /// Bed length.
    pub length: f64,
    /// Feed (pressurization) step duration.
    pub t_press: f64,
    /// Blowdown/purge step duration.
    pub t_blow: f64,
    pub q_sat: f64,
    /// Langmuir constant `K_L`.
    pub k_langmuir: f64,
    /// Linear driving force coefficient.
    pub k_ldf: f64,
    /// Solid-to-gas capacity ratio multiplying the uptake term in the gas balance.
    pub phase_ratio: f64,
    pub v_feed: f64,
    pub v_blow: f64,
    /// Axial dispersion coefficient.
    pub dispersion: f64,
    /// Default feed concentration (continuation parameter `"c_feed"`).
    pub c_feed: f64,
    /// Concentration of the purge gas entering at the product end.
    pub c_purge: f64,
    /// Inner time step. `None` picks the largest step with Courant number
    /// `courant` that also keeps the uptake stage positivity-preserving.
    pub dt: Option<f64>,
    pub courant: f64,
}

impl Default for AdsorptionColumnModel {
    fn default() -> Self {
        Self {
            n_cells: 90,
            length: 1.0,
            t_press: 1.0,
            t_blow: 1.0,
            q_sat: 10.0,
            k_langmuir: 0.3,
            k_ldf: 2.0,
            phase_ratio: 0.7,
            v_feed: 0.11,
            v_blow: 0.165,
            dispersion: 0.2,
            c_feed: 1.0,
            c_purge: 0.0,
            dt: None,
            courant: 0.5,
        }
    }
}

/// Mass accounting for one cycle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CycleBalance {
    pub holdup_start: f64,
    pub holdup_end: f64,
    pub inflow: f64,
    pub outflow: f64,
}

impl CycleBalance {
    /// `|delta holdup - (inflow - outflow)|`.
    pub fn defect(&self) -> f64 {
        ((self.holdup_end - self.holdup_start) - (self.inflow - self.outflow)).abs()
    }

    pub fn relative_defect(&self) -> f64 {
        let scale = self.holdup_start.abs().max(self.holdup_end.abs());
        if scale == 0.0 {
            self.defect()
        } else {
            self.defect() / scale
        }
    }
}

#[derive(Clone, Copy)]
enum Direction {
    Forward,
    Reverse,
}

struct Step {
    direction: Direction,
    speed: f64,
    inlet: f64,
    duration: f64,
}

impl AdsorptionColumnModel {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            self.length,
            self.q_sat,
            self.k_langmuir,
            self.k_ldf,
            self.phase_ratio,
            self.courant,
        ];
        if self.n_cells == 0 || positive.iter().any(|x| !(*x > 0.0)) {
            return Err(Error::InvalidArgument(
                "adsorption column needs n_cells >= 1 and positive length, q_sat, k_langmuir, k_ldf, phase_ratio, courant"
                    .into(),
            ));
        }
        let non_negative = [
            self.t_press,
            self.t_blow,
            self.v_feed,
            self.v_blow,
            self.dispersion,
            self.c_purge,
        ];
        if non_negative.iter().any(|x| !(*x >= 0.0)) {
            return Err(Error::InvalidArgument(
                "durations, speeds and purge concentration must be non-negative".into(),
            ));
        }
        if self.courant > CFL_LIMIT {
            return Err(Error::InvalidArgument(format!(
                "courant {} exceeds the limit {CFL_LIMIT}",
                self.courant
            )));
        }
        if let Some(dt) = self.dt {
            if !(dt > 0.0) {
                return Err(Error::InvalidArgument("dt must be positive".into()));
            }
            let bound = self.cfl_bound();
            if dt > bound {
                return Err(Error::CflViolation { dt, bound });
            }
        }
        Ok(())
    }

    pub fn dz(&self) -> f64 {
        self.length / self.n_cells as f64
    }

    fn max_speed(&self) -> f64 {
        self.v_feed.max(self.v_blow)
    }

    /// `0.9 / (|v| / dz + 2 D / dz^2)` over both steps, which reduces to the
    /// advective bound `0.9 dz / |v|` without dispersion (infinite when the
    /// column is static).
    pub fn cfl_bound(&self) -> f64 {
        let dz = self.dz();
        let rate = self.max_speed() / dz + 2.0 * self.dispersion / (dz * dz);
        if rate == 0.0 {
            f64::INFINITY
        } else {
            CFL_LIMIT / rate
        }
    }

    /// Nominal inner time step before it is shrunk to divide each step
    /// duration evenly.
    pub fn nominal_dt(&self) -> f64 {
        if let Some(dt) = self.dt {
            return dt;
        }
        let v = self.max_speed();
        let advective = if v == 0.0 {
            f64::INFINITY
        } else {
            self.courant * self.dz() / v
        };
        // A forward-Euler stage keeps c >= 0 when
        // dt * (v / dz + 2 D / dz^2 + phase_ratio * k_ldf * q_sat * K) <= 1
        // and q <= q_sat when dt * k_ldf <= 1.
        let dz = self.dz();
        let rate = v / dz
            + 2.0 * self.dispersion / (dz * dz)
            + self.phase_ratio * self.k_ldf * self.q_sat * self.k_langmuir;
        advective.min(0.9 / rate).min(1.0 / self.k_ldf)
    }

    pub fn equilibrium_loading(&self, c: f64) -> f64 {
        self.q_sat * self.k_langmuir * c / (1.0 + self.k_langmuir * c)
    }

    /// Uniform state in equilibrium with gas concentration `c`.
    pub fn equilibrium_state(&self, c: f64) -> StateVector {
        let n = self.n_cells;
        let q = self.equilibrium_loading(c);
        StateVector::from_fn(2 * n, |i, _| if i < n { c } else { q })
    }

    /// Clean bed (all zeros).
    pub fn clean_state(&self) -> StateVector {
        StateVector::zeros(2 * self.n_cells)
    }

    pub fn holdup(&self, u: &StateVector) -> f64 {
        let n = self.n_cells;
        let gas: f64 = u.rows(0, n).sum();
        let solid: f64 = u.rows(n, n).sum();
        self.dz() * (gas + self.phase_ratio * solid)
    }

    fn steps(&self, c_feed: f64) -> [Step; 2] {
        [
            Step {
                direction: Direction::Forward,
                speed: self.v_feed,
                inlet: c_feed,
                duration: self.t_press,
            },
            Step {
                direction: Direction::Reverse,
                speed: self.v_blow,
                inlet: self.c_purge,
                duration: self.t_blow,
            },
        ]
    }

    /// Time derivative of `(c, q)`; returns the boundary fluxes
    /// `(into the column, out of the column)`.
    fn rhs(&self, step: &Step, u: &[f64], du: &mut [f64]) -> (f64, f64) {
        let n = self.n_cells;
        let (c, q) = u.split_at(n);
        let (dc, dq) = du.split_at_mut(n);
        let dz = self.dz();
        let a = step.speed / dz;
        let d = self.dispersion / (dz * dz);
        for i in 0..n {
            let left = if i == 0 { None } else { Some(c[i - 1]) };
            let right = if i + 1 == n { None } else { Some(c[i + 1]) };
            let upstream = match step.direction {
                Direction::Forward => left.unwrap_or(step.inlet),
                Direction::Reverse => right.unwrap_or(step.inlet),
            };
            // Danckwerts conditions: no dispersive flux through either end face.
            let dispersive = left.map_or(0.0, |l| l - c[i]) + right.map_or(0.0, |r| r - c[i]);
            let uptake = self.k_ldf * (self.equilibrium_loading(c[i]) - q[i]);
            dq[i] = uptake;
            dc[i] = a * (upstream - c[i]) + d * dispersive - self.phase_ratio * uptake;
        }
        let outlet = match step.direction {
            Direction::Forward => c[n - 1],
            Direction::Reverse => c[0],
        };
        (step.speed * step.inlet, step.speed * outlet)
    }

    fn check_state(&self, u: &[f64]) -> Result<()> {
        let n = self.n_cells;
        for (i, &c) in u[..n].iter().enumerate() {
            if c < 0.0 {
                return Err(Error::NegativeConcentration { cell: i, value: c });
            }
        }
        for (i, &q) in u[n..].iter().enumerate() {
            if !(0.0..=self.q_sat).contains(&q) {
                return Err(Error::LoadingOutOfBounds { cell: i, value: q });
            }
        }
        Ok(())
    }

    /// Integrates one cycle, calling `observe(t, state)` at up to `samples`
    /// evenly spaced inner times (the end of the cycle is always observed).
    fn run_cycle(
        &self,
        u: &StateVector,
        c_feed: f64,
        samples: usize,
        mut observe: impl FnMut(f64, &[f64]),
    ) -> Result<CycleBalance> {
        self.validate()?;
        let n = self.n_cells;
        if u.len() != 2 * n {
            return Err(Error::DimensionMismatch {
                expected: 2 * n,
                got: u.len(),
            });
        }
        if !(c_feed >= 0.0) {
            return Err(Error::InvalidArgument(format!("c_feed must be non-negative, got {c_feed}")));
        }
        self.check_state(u.as_slice())?;

        let nominal = self.nominal_dt();
        let steps = self.steps(c_feed);
        let counts: Vec<usize> = steps
            .iter()
            .map(|s| {
                if s.duration == 0.0 {
                    0
                } else {
                    ((s.duration / nominal).ceil() as usize).max(1)
                }
            })
            .collect();
        let total: usize = counts.iter().sum();
        let every = if samples == 0 { usize::MAX } else { total.div_ceil(samples).max(1) };

        let mut state = u.as_slice().to_vec();
        let mut k0 = vec![0.0; 2 * n];
        let mut stage = vec![0.0; 2 * n];
        let mut balance = CycleBalance {
            holdup_start: self.holdup(u),
            holdup_end: 0.0,
            inflow: 0.0,
            outflow: 0.0,
        };
        let mut time = 0.0;
        let mut done = 0usize;
        for (step, &count) in steps.iter().zip(&counts) {
            if count == 0 {
                continue;
            }
            let dt = step.duration / count as f64;
            for _ in 0..count {
                // SSP-RK3 (Shu-Osher form).
                let f0 = self.rhs(step, &state, &mut k0);
                for i in 0..2 * n {
                    stage[i] = state[i] + dt * k0[i];
                }
                let f1 = self.rhs(step, &stage, &mut k0);
                for i in 0..2 * n {
                    stage[i] = 0.75 * state[i] + 0.25 * (stage[i] + dt * k0[i]);
                }
                let f2 = self.rhs(step, &stage, &mut k0);
                for i in 0..2 * n {
                    state[i] = state[i] / 3.0 + 2.0 / 3.0 * (stage[i] + dt * k0[i]);
                }
                balance.inflow += dt * (f0.0 / 6.0 + f1.0 / 6.0 + 2.0 * f2.0 / 3.0);
                balance.outflow += dt * (f0.1 / 6.0 + f1.1 / 6.0 + 2.0 * f2.1 / 3.0);
                time += dt;
                done += 1;
                if done == total || done.is_multiple_of(every) {
                    observe(time, &state);
                }
            }
        }
        if total == 0 {
            observe(0.0, &state);
        }
        self.check_state(&state)?;
        balance.holdup_end = self.holdup(&StateVector::from_column_slice(&state));
        Ok(balance)
    }

    /// One cycle together with its mass balance.
    pub fn cycle_with_balance(&self, u: &StateVector, p: &Parameters) -> Result<(StateVector, CycleBalance)> {
        let c_feed = p.get_or("c_feed", self.c_feed);
        let mut end = None;
        let balance = self.run_cycle(u, c_feed, 0, |_, s| end = Some(StateVector::from_column_slice(s)))?;
        Ok((end.expect("cycle end observed"), balance))
    }
}

impl CycleMap for AdsorptionColumnModel {
    fn name(&self) -> &str {
        "adsorption"
    }

    fn dim(&self) -> usize {
        2 * self.n_cells
    }

    fn period(&self) -> f64 {
        self.t_press + self.t_blow
    }

    fn default_parameters(&self) -> Parameters {
        Parameters::new("c_feed", self.c_feed)
    }

    fn apply(&self, u: &StateVector, p: &Parameters) -> Result<StateVector> {
        Ok(self.cycle_with_balance(u, p)?.0)
    }

    fn apply_sampled(&self, u: &StateVector, p: &Parameters, samples: usize) -> Result<Vec<(f64, StateVector)>> {
        let c_feed = p.get_or("c_feed", self.c_feed);
        let mut out = Vec::new();
        self.run_cycle(u, c_feed, samples, |t, s| out.push((t, StateVector::from_column_slice(s))))?;
        Ok(out)
    }
}
