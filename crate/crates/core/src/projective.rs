//! Coarse projective integration of the cycle-to-cycle envelope.
//!
//! Each round integrates `k_inner` cycles with the black-box map, estimates
//! the per-cycle slow derivative from the last two end-of-cycle states and
//! leaps `M` cycles with an explicit Euler step of the envelope equation.

use log::{debug, warn};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::timestepper::{Parameters, StateVector, Timestepper};

/// Round-over-round chord growth counted towards instability.
pub const GROWTH_LIMIT: f64 = 10.0;
/// Consecutive growing rounds that trigger [`Error::UnstableEnvelope`].
pub const GROWTH_ROUNDS: usize = 3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ProjectiveSchedule {
    pub k_inner: usize,
    pub m_jump: usize,
    pub max_rounds: usize,
    /// Stop once the last inner cycle-to-cycle change is this small.
    pub tolerance: f64,
    /// Cap the jump by `floor(2 / (1 - mu)) - k_inner` using the observed
    /// contraction `mu` of the inner burst.
    pub adaptive: bool,
}

impl Default for ProjectiveSchedule {
    fn default() -> Self {
        Self {
            k_inner: 3,
            m_jump: 9,
            max_rounds: 1000,
            tolerance: 1e-6,
            adaptive: true,
        }
    }
}

impl ProjectiveSchedule {
    pub fn validate(&self) -> Result<()> {
        if self.k_inner < 2 {
            return Err(Error::InvalidArgument("k_inner must be at least 2".into()));
        }
        if self.max_rounds == 0 || !(self.tolerance > 0.0) {
            return Err(Error::InvalidArgument("max_rounds and tolerance must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EntryKind {
    Inner,
    Jump,
}

impl EntryKind {
    pub fn as_str(self) -> &'static str {
        match self {
            EntryKind::Inner => "inner",
            EntryKind::Jump => "jump",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnvelopeEntry {
    pub cycle: u64,
    pub state: StateVector,
    pub kind: EntryKind,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnvelopeTrajectory {
    /// The initial state (cycle 0, tagged inner) followed by every inner
    /// state and every non-trivial jump.
    pub entries: Vec<EnvelopeEntry>,
    pub map_calls: u64,
    /// Cycles covered by inner integration and jumps together.
    pub cycles: u64,
    pub rounds: usize,
    /// Jump lengths actually used, one per round.
    pub jumps: Vec<usize>,
    pub converged: bool,
    /// Norm of the last chord.
    pub last_change: f64,
}

impl EnvelopeTrajectory {
    pub fn final_state(&self) -> &StateVector {
        &self.entries.last().expect("trajectory holds the initial state").state
    }

    /// Cycles covered per map call.
    pub fn speedup(&self) -> f64 {
        if self.map_calls == 0 {
            1.0
        } else {
            self.cycles as f64 / self.map_calls as f64
        }
    }
}

/// Per-cycle slow derivative `u_k - u_{k-1}`.
pub fn chord_estimate(prev: &StateVector, last: &StateVector) -> StateVector {
    last - prev
}

/// Explicit Euler leap `u_k + M d`.
pub fn projective_step(u_k: &StateVector, d: &StateVector, m: usize) -> StateVector {
    if m == 0 {
        return u_k.clone();
    }
    u_k + d * (m as f64)
}

/// Largest jump kept by the adaptive rule for an observed contraction `mu`,
/// or `None` when `mu >= 1` (no cap applies).
pub fn adaptive_cap(mu: f64, k_inner: usize) -> Option<usize> {
    if !(mu < 1.0) || !mu.is_finite() {
        return None;
    }
    let bound = (2.0 / (1.0 - mu)).floor() - k_inner as f64;
    Some(if bound > 0.0 { bound as usize } else { 0 })
}

/// Amplification of a slow mode with multiplier `mu` over one round.
pub fn round_amplification(mu: f64, k_inner: usize, m: usize) -> f64 {
    let k = k_inner as i32;
    mu.powi(k) + m as f64 * mu.powi(k - 1) * (mu - 1.0)
}

pub fn projective_run(
    stepper: &Timestepper,
    u0: &StateVector,
    p: &Parameters,
    sched: &ProjectiveSchedule,
) -> Result<EnvelopeTrajectory> {
    sched.validate()?;
    if u0.len() != stepper.dim() {
        return Err(Error::DimensionMismatch {
            expected: stepper.dim(),
            got: u0.len(),
        });
    }
    let mut entries = vec![EnvelopeEntry {
        cycle: 0,
        state: u0.clone(),
        kind: EntryKind::Inner,
    }];
    let mut cycle = 0u64;
    let mut map_calls = 0u64;
    let mut jumps = Vec::new();
    let mut u = u0.clone();
    let mut prev_chord: Option<f64> = None;
    let mut growing = 0usize;
    let mut last_change = f64::INFINITY;
    let mut converged = false;

    for round in 1..=sched.max_rounds {
        let mut states = Vec::with_capacity(sched.k_inner + 1);
        states.push(u.clone());
        for _ in 0..sched.k_inner {
            let next = stepper.evaluate(states.last().expect("non-empty"), p)?;
            map_calls += 1;
            cycle += 1;
            entries.push(EnvelopeEntry {
                cycle,
                state: next.clone(),
                kind: EntryKind::Inner,
            });
            states.push(next);
        }
        let k = sched.k_inner;
        let d = chord_estimate(&states[k - 1], &states[k]);
        last_change = d.norm();

        if let Some(previous) = prev_chord {
            if last_change > GROWTH_LIMIT * previous {
                growing += 1;
                if growing >= GROWTH_ROUNDS {
                    warn!("projective: chord grew {GROWTH_ROUNDS} rounds in a row at round {round}");
                    return Err(Error::UnstableEnvelope);
                }
            } else {
                growing = 0;
            }
        }
        prev_chord = Some(last_change);

        let mut m = sched.m_jump;
        if sched.adaptive {
            let earlier = (&states[k - 1] - &states[k - 2]).norm();
            let mu = if earlier > 0.0 { last_change / earlier } else { 0.0 };
            if let Some(cap) = adaptive_cap(mu, k) {
                m = m.min(cap);
            }
            debug!("projective: round {round}, mu = {mu:.4}, jump = {m}");
        }
        u = projective_step(&states[k], &d, m);
        if u.iter().any(|x| !x.is_finite()) {
            let index = u.iter().position(|x| !x.is_finite()).unwrap_or(0);
            return Err(Error::NonFiniteOutput { index });
        }
        jumps.push(m);
        if m > 0 {
            cycle += m as u64;
            entries.push(EnvelopeEntry {
                cycle,
                state: u.clone(),
                kind: EntryKind::Jump,
            });
        }
        if last_change <= sched.tolerance {
            converged = true;
            break;
        }
    }

    Ok(EnvelopeTrajectory {
        entries,
        map_calls,
        cycles: cycle,
        rounds: jumps.len(),
        jumps,
        converged,
        last_change,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::direct::simulate_cycles;
    use crate::models::{LinearMapModel, SpectrumEntry};

    fn scalar(mu: f64) -> Timestepper {
        Timestepper::new(LinearMapModel::diagonal(&[mu], &[0.0]).unwrap())
    }

    fn sv(x: &[f64]) -> StateVector {
        StateVector::from_column_slice(x)
    }

    #[test]
    fn chord_examples() {
        assert_eq!(chord_estimate(&sv(&[1.0]), &sv(&[0.9]))[0], 0.9 - 1.0);
        assert_eq!(chord_estimate(&sv(&[0.3, 0.2]), &sv(&[0.3, 0.2])), sv(&[0.0, 0.0]));
        let d = chord_estimate(&sv(&[0.9]), &sv(&[0.81]));
        assert!((d[0] + 0.09).abs() < 1e-15);
    }

    #[test]
    fn euler_leap_of_geometric_decay() {
        let jumped = projective_step(&sv(&[0.81]), &sv(&[-0.09]), 3);
        assert!((jumped[0] - 0.54).abs() < 1e-15);
        let exact = 0.9f64.powi(5);
        assert!((exact - 0.59049).abs() < 1e-15);
        assert!(((exact - jumped[0]) - 0.05049).abs() < 1e-12);
    }

    #[test]
    fn trivial_leaps() {
        let u = sv(&[0.4, -1.0]);
        assert_eq!(projective_step(&u, &sv(&[3.0, 2.0]), 0), u);
        assert_eq!(projective_step(&u, &sv(&[0.0, 0.0]), 17), u);
    }

    #[test]
    fn first_round_matches_hand_computation() {
        let s = scalar(0.9);
        let sched = ProjectiveSchedule {
            k_inner: 2,
            m_jump: 3,
            max_rounds: 1,
            adaptive: false,
            ..Default::default()
        };
        let run = projective_run(&s, &sv(&[1.0]), &s.default_parameters(), &sched).unwrap();
        assert_eq!(run.entries.len(), 4);
        assert_eq!(run.entries[3].cycle, 5);
        assert_eq!(run.entries[3].kind, EntryKind::Jump);
        assert!((run.final_state()[0] - 0.54).abs() < 1e-15);
    }

    #[test]
    fn large_jump_is_unstable() {
        let s = scalar(0.5);
        let sched = ProjectiveSchedule {
            k_inner: 2,
            m_jump: 50,
            adaptive: false,
            ..Default::default()
        };
        let err = projective_run(&s, &sv(&[1.0]), &s.default_parameters(), &sched).unwrap_err();
        assert_eq!(err, Error::UnstableEnvelope);
        let adaptive = ProjectiveSchedule { adaptive: true, ..sched };
        let run = projective_run(&s, &sv(&[1.0]), &s.default_parameters(), &adaptive).unwrap();
        assert!(run.converged);
    }

    /// Brute-force scan of the scalar round map: the divergence threshold
    /// in `M` sits where `|mu^k + M mu^(k-1) (mu - 1)|` first exceeds one,
    /// and every jump up to the adaptive cap stays below it.
    #[test]
    fn adaptive_cap_is_stable() {
        for mu in [0.5, 0.9, 0.99] {
            for k in 2..=6 {
                let cap = adaptive_cap(mu, k).unwrap();
                let threshold = (0..100_000)
                    .find(|&m| round_amplification(mu, k, m).abs() > 1.0)
                    .unwrap();
                assert!(cap < threshold, "mu {mu}, k {k}: cap {cap}, threshold {threshold}");
                for m in 0..=cap {
                    assert!(round_amplification(mu, k, m).abs() <= 1.0);
                }
            }
        }
        assert_eq!(adaptive_cap(1.0, 3), None);
        assert_eq!(adaptive_cap(0.1, 3), Some(0));
    }

    #[test]
    fn unstable_example_diverges_by_recurrence() {
        let amp = round_amplification(0.5, 2, 50);
        assert!((amp + 12.25).abs() < 1e-12);
        assert!(amp.abs() > GROWTH_LIMIT);
    }

    #[test]
    fn zero_jump_reproduces_direct_simulation() {
        let model = LinearMapModel::new(
            vec![SpectrumEntry::Real(0.95), SpectrumEntry::Pair { modulus: 0.6, angle: 0.7 }],
            &[0.3, -0.1, 0.2],
            Some(4),
        )
        .unwrap();
        let s = Timestepper::new(model);
        let p = s.default_parameters();
        let u0 = sv(&[1.0, 2.0, -1.0]);
        let sched = ProjectiveSchedule {
            k_inner: 3,
            m_jump: 0,
            max_rounds: 7,
            tolerance: 1e-300,
            adaptive: false,
        };
        let run = projective_run(&s, &u0, &p, &sched).unwrap();
        for e in &run.entries {
            assert_eq!(e.kind, EntryKind::Inner);
            let direct = simulate_cycles(&s, &u0, &p, e.cycle as usize).unwrap();
            assert_eq!(e.state, direct);
        }
        assert_eq!(run.cycles, 21);
    }

    #[test]
    fn fixed_point_is_left_alone() {
        let s = Timestepper::new(LinearMapModel::diagonal(&[0.9, 0.2], &[1.0, 1.0]).unwrap());
        let u_star = sv(&[10.0, 1.25]);
        let run = projective_run(&s, &u_star, &s.default_parameters(), &ProjectiveSchedule::default()).unwrap();
        assert!(run.converged);
        assert_eq!(run.rounds, 1);
        assert!((run.final_state() - &u_star).amax() < 1e-13);
    }

    #[test]
    fn accounting_is_exact() {
        let s = Timestepper::new(LinearMapModel::diagonal(&[0.99, 0.2, 0.1], &[0.0; 3]).unwrap());
        let sched = ProjectiveSchedule {
            k_inner: 3,
            m_jump: 9,
            adaptive: false,
            ..Default::default()
        };
        let run = projective_run(&s, &sv(&[1.0, 1.0, 1.0]), &s.default_parameters(), &sched).unwrap();
        assert_eq!(run.map_calls, (run.rounds * 3) as u64);
        assert_eq!(run.cycles, (run.rounds * 12) as u64);
        assert_eq!(s.calls(), run.map_calls);
        assert!((run.speedup() - 4.0).abs() < 1e-12);
        for w in run.entries.windows(2) {
            assert!(w[1].cycle > w[0].cycle);
        }
    }

    #[test]
    fn jumps_track_the_geometric_envelope() {
        // u* = (1, 1, 1); start displaced along the slow mode.
        let s = Timestepper::new(LinearMapModel::diagonal(&[0.99, 0.2, 0.1], &[0.01, 0.8, 0.9]).unwrap());
        let sched = ProjectiveSchedule {
            k_inner: 3,
            m_jump: 9,
            adaptive: false,
            tolerance: 1e-9,
            ..Default::default()
        };
        let run = projective_run(&s, &sv(&[2.0, 1.0, 1.0]), &s.default_parameters(), &sched).unwrap();
        assert!(run.converged);
        let mut round_start = run.entries[0].state[0] - 1.0;
        let mut checked = 0;
        for e in &run.entries[1..] {
            if e.kind == EntryKind::Jump {
                let exact = round_start * 0.99f64.powi(12);
                let rel = ((e.state[0] - 1.0) - exact).abs() / exact.abs();
                assert!(rel <= 5e-3, "cycle {}: relative error {rel:.3e}", e.cycle);
                round_start = e.state[0] - 1.0;
                checked += 1;
            }
        }
        assert_eq!(checked, run.rounds);
        assert!((run.final_state() - sv(&[1.0, 1.0, 1.0])).amax() <= 1e-6);
    }
}
