use std::collections::BTreeMap;
use std::fmt;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use tskit_core::Error;

/// Summary of one task run with its map-call accounting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub task: String,
    pub model: String,
    pub status: String,
    pub success: bool,
    pub wall_time_s: f64,
    /// Counter delta of the run's timestepper.
    pub map_calls: u64,
    pub parameters: BTreeMap<String, f64>,
    /// Headline numbers as display strings.
    pub headline: BTreeMap<String, String>,
    pub csv: Vec<PathBuf>,
    /// Final state of tasks that end at a fixed point.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fixed_point: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tolerance: Option<f64>,
}

impl RunReport {
    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("report serializes to TOML")
    }
}

impl fmt::Display for RunReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "task       {} on {}", self.task, self.model)?;
        writeln!(f, "status     {}", self.status)?;
        writeln!(f, "map calls  {}", self.map_calls)?;
        writeln!(f, "wall time  {:.3} s", self.wall_time_s)?;
        for (name, value) in &self.parameters {
            writeln!(f, "param      {name} = {value}")?;
        }
        for (name, value) in &self.headline {
            writeln!(f, "{name:<10} {value}")?;
        }
        for path in &self.csv {
            writeln!(f, "csv        {}", path.display())?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpeedupSummary {
    /// `map_calls(b) / map_calls(a)`.
    pub speedup: f64,
    pub distance: f64,
    pub bound: f64,
}

/// Speedup of run `a` over run `b`, provided both reached the same fixed
/// point within ten times the looser tolerance.
pub fn compare_runs(a: &RunReport, b: &RunReport) -> Result<SpeedupSummary, Error> {
    let (Some(ua), Some(ub)) = (&a.fixed_point, &b.fixed_point) else {
        return Err(Error::IncomparableRuns("both runs must end at a fixed point".into()));
    };
    if a.parameters != b.parameters {
        return Err(Error::IncomparableRuns("runs used different parameters".into()));
    }
    if ua.len() != ub.len() {
        return Err(Error::IncomparableRuns(format!("state sizes {} and {}", ua.len(), ub.len())));
    }
    let tol = a.tolerance.unwrap_or(0.0).max(b.tolerance.unwrap_or(0.0));
    let bound = 10.0 * tol;
    let distance = ua.iter().zip(ub).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
    if distance > bound {
        return Err(Error::IncomparableRuns(format!(
            "fixed points differ by {distance:.3e} (bound {bound:.3e})"
        )));
    }
    if a.map_calls == 0 {
        return Err(Error::IncomparableRuns("run a made no map calls".into()));
    }
    Ok(SpeedupSummary {
        speedup: b.map_calls as f64 / a.map_calls as f64,
        distance,
        bound,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn report(calls: u64, u: &[f64], lambda: f64) -> RunReport {
        RunReport {
            task: "fixed-point".into(),
            model: "linear".into(),
            status: "Converged".into(),
            success: true,
            wall_time_s: 0.0,
            map_calls: calls,
            parameters: BTreeMap::from([("lambda".to_string(), lambda)]),
            headline: BTreeMap::new(),
            csv: Vec::new(),
            fixed_point: Some(u.to_vec()),
            tolerance: Some(1e-8),
        }
    }

    #[test]
    fn identical_runs() {
        let a = report(40, &[1.0, 2.0], 0.0);
        let s = compare_runs(&a, &a).unwrap();
        assert_eq!(s.speedup, 1.0);
        assert_eq!(s.distance, 0.0);
    }

    #[test]
    fn speedup_is_call_ratio() {
        let s = compare_runs(&report(40, &[1.0], 0.0), &report(3200, &[1.0 + 1e-8], 0.0)).unwrap();
        assert_eq!(s.speedup, 80.0);
    }

    #[test]
    fn different_parameters_are_incomparable() {
        let err = compare_runs(&report(40, &[1.0], 0.0), &report(40, &[1.0], 0.1)).unwrap_err();
        assert!(matches!(err, Error::IncomparableRuns(_)));
        let far = compare_runs(&report(40, &[1.0], 0.0), &report(40, &[1.1], 0.0)).unwrap_err();
        assert!(matches!(far, Error::IncomparableRuns(_)));
    }

    #[test]
    fn report_round_trips_through_toml() {
        let r = report(12, &[0.5, 0.25], 0.3);
        let back: RunReport = toml::from_str(&r.to_toml_string()).unwrap();
        assert_eq!(back, r);
    }
}
