//! Name-keyed registry of runnable tasks.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::PathBuf;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tskit_core::arnoldi::{floquet_multipliers, ArnoldiOptions};
use tskit_core::continuation::{trace_branch, ContinuationOptions, Termination};
use tskit_core::csv::{write_csv, Field};
use tskit_core::projective::{projective_run, ProjectiveSchedule};
use tskit_core::rpm::{rpm_solve, RpmOptions, SlowBasis};
use tskit_core::{Error, Parameters, StateVector, Timestepper};

use crate::config::{decode, take, OutputConfig};
use crate::error::ConfigError;
use crate::models::BuiltModel;

/// Writes `<prefix>_<name>.csv` files into the output directory.
#[derive(Debug, Clone)]
pub struct OutputSink {
    pub config: OutputConfig,
}

impl OutputSink {
    pub fn new(config: OutputConfig) -> Self {
        Self { config }
    }

    pub fn path(&self, name: &str, extension: &str) -> PathBuf {
        self.config.dir.join(format!("{}_{name}.{extension}", self.config.prefix))
    }

    pub fn write(&self, name: &str, header: &[String], rows: &[Vec<Field>]) -> Result<PathBuf, Error> {
        fs::create_dir_all(&self.config.dir)?;
        let path = self.path(name, "csv");
        write_csv(&path, header, rows)?;
        Ok(path)
    }

    fn kept(&self, dim: usize) -> impl Iterator<Item = usize> {
        (0..dim).step_by(self.config.stride.max(1))
    }

    /// `u0, u<stride>, ...` column names.
    pub fn state_header(&self, dim: usize) -> Vec<String> {
        self.kept(dim).map(|i| format!("u{i}")).collect()
    }

    pub fn state_fields(&self, u: &StateVector) -> Vec<Field> {
        self.kept(u.len()).map(|i| Field::Num(u[i])).collect()
    }
}

/// What a task hands back to the runner.
#[derive(Debug, Clone, Default)]
pub struct TaskOutcome {
    pub status: String,
    pub success: bool,
    pub headline: BTreeMap<String, String>,
    pub csv: Vec<PathBuf>,
    pub fixed_point: Option<StateVector>,
    pub tolerance: Option<f64>,
}

pub trait PreparedTask: fmt::Debug {
    fn run(&self, stepper: &Timestepper, params: &Parameters, out: &OutputSink) -> Result<TaskOutcome, Error>;
}

pub trait TaskRunner: Send + Sync {
    fn kind(&self) -> &'static str;
    fn prepare(&self, params: &toml::Table, model: &BuiltModel, seed: u64) -> Result<Box<dyn PreparedTask>, ConfigError>;
}

pub struct TaskRegistry {
    runners: BTreeMap<&'static str, Box<dyn TaskRunner>>,
}

impl TaskRegistry {
    pub fn empty() -> Self {
        Self {
            runners: BTreeMap::new(),
        }
    }

    pub fn register(&mut self, runner: Box<dyn TaskRunner>) {
        self.runners.insert(runner.kind(), runner);
    }

    pub fn get(&self, kind: &str) -> Option<&dyn TaskRunner> {
        self.runners.get(kind).map(|r| r.as_ref())
    }

    pub fn kinds(&self) -> impl Iterator<Item = &'static str> + '_ {
        self.runners.keys().copied()
    }

    pub fn prepare(
        &self,
        kind: &str,
        params: &toml::Table,
        model: &BuiltModel,
        seed: u64,
    ) -> Result<Box<dyn PreparedTask>, ConfigError> {
        let runner = self.get(kind).ok_or_else(|| {
            let known: Vec<_> = self.kinds().collect();
            ConfigError::new(format!("unknown task kind `{kind}` (known: {})", known.join(", "))).with_key("kind")
        })?;
        runner.prepare(params, model, seed)
    }
}

impl Default for TaskRegistry {
    fn default() -> Self {
        let mut registry = Self::empty();
        registry.register(Box::new(SimulateRunner));
        registry.register(Box::new(FixedPointRunner));
        registry.register(Box::new(EigsRunner));
        registry.register(Box::new(ContinueRunner));
        registry.register(Box::new(ProjectiveRunner));
        registry
    }
}

fn initial_state(table: &mut toml::Table, model: &BuiltModel) -> Result<StateVector, ConfigError> {
    match take::<Vec<f64>>("task", table, "initial")? {
        None => Ok(model.initial.clone()),
        Some(v) if v.len() == model.map.dim() => Ok(StateVector::from_vec(v)),
        Some(v) => Err(ConfigError::new(format!(
            "[task] initial state has {} entries, model has {}",
            v.len(),
            model.map.dim()
        ))
        .with_key("initial")),
    }
}

fn invalid(err: Error) -> ConfigError {
    ConfigError::new(format!("[task] {err}"))
}

fn fmt_multipliers(values: impl IntoIterator<Item = Complex64>) -> String {
    values
        .into_iter()
        .map(|z| {
            if z.im == 0.0 {
                format!("{:.6}", z.re)
            } else {
                format!("{:.6}{:+.6}i", z.re, z.im)
            }
        })
        .collect::<Vec<_>>()
        .join(", ")
}

// ---------------------------------------------------------------- simulate

#[derive(Debug, Clone, serde::Deserialize)]
#[serde(deny_unknown_fields, default)]
struct SimulateOptions {
    n_cycles: usize,
    /// Intra-cycle snapshots per cycle.
    samples: usize,
    /// Stop early once the cycle-to-cycle change is this small.
    tolerance: Option<f64>,
}

impl Default for SimulateOptions {
    fn default() -> Self {
        Self {
            n_cycles: 10,
            samples: 0,
            tolerance: None,
        }
    }
}

#[derive(Debug)]
struct SimulateTask {
    opts: SimulateOptions,
    initial: StateVector,
}

struct SimulateRunner;

impl TaskRunner for SimulateRunner {
    fn kind(&self) -> &'static str {
        "simulate"
    }

    fn prepare(&self, params: &toml::Table, model: &BuiltModel, _seed: u64) -> Result<Box<dyn PreparedTask>, ConfigError> {
        let mut table = params.clone();
        let initial = initial_state(&mut table, model)?;
        let opts: SimulateOptions = decode("task", &table)?;
        if opts.n_cycles == 0 {
            return Err(ConfigError::new("[task] n_cycles must be at least 1").with_key("n_cycles"));
        }
        Ok(Box::new(SimulateTask { opts, initial }))
    }
}

impl PreparedTask for SimulateTask {
    fn run(&self, stepper: &Timestepper, params: &Parameters, out: &OutputSink) -> Result<TaskOutcome, Error> {
        let period = stepper.period();
        let row = |cycle: usize, t: f64, kind: &str, u: &StateVector| {
            let mut r = vec![Field::from(cycle), Field::Num(t), Field::from(kind)];
            r.extend(out.state_fields(u));
            r
        };
        let mut rows = vec![row(0, 0.0, "initial", &self.initial)];
        let mut u = self.initial.clone();
        let mut last_change = f64::INFINITY;
        let mut cycles = 0;
        let mut converged = false;
        for cycle in 1..=self.opts.n_cycles {
            let start = (cycle - 1) as f64 * period;
            let next = if self.opts.samples > 0 {
                let traj = stepper.evaluate_sampled(&u, params, self.opts.samples)?;
                let (last, inner) = traj.split_last().expect("sampled cycle has an end state");
                for (t, s) in inner {
                    rows.push(row(cycle, start + t, "sample", s));
                }
                last.1.clone()
            } else {
                stepper.evaluate(&u, params)?
            };
            rows.push(row(cycle, cycle as f64 * period, "end", &next));
            last_change = (&next - &u).norm();
            u = next;
            cycles = cycle;
            if self.opts.tolerance.is_some_and(|tol| last_change <= tol) {
                converged = true;
                break;
            }
        }
        let mut header = vec!["cycle".to_string(), "time".into(), "kind".into()];
        header.extend(out.state_header(u.len()));
        let path = out.write("trajectory", &header, &rows)?;
        let (status, success) = match self.opts.tolerance {
            None => ("Completed", true),
            Some(_) if converged => ("Converged", true),
            Some(_) => ("NotConverged", false),
        };
        Ok(TaskOutcome {
            status: status.into(),
            success,
            headline: BTreeMap::from([
                ("cycles".into(), cycles.to_string()),
                ("change".into(), format!("{last_change:.3e}")),
            ]),
            csv: vec![path],
            fixed_point: converged.then_some(u),
            tolerance: self.opts.tolerance,
        })
    }
}

// ------------------------------------------------------------- fixed-point

#[derive(Debug)]
struct FixedPointTask {
    rpm: RpmOptions,
    initial: StateVector,
    /// Direct cycles run before the solver starts.
    warm_cycles: usize,
    /// Seed the slow basis from the last direct-cycle differences.
    warm_basis: bool,
}

struct FixedPointRunner;

impl TaskRunner for FixedPointRunner {
    fn kind(&self) -> &'static str {
        "fixed-point"
    }

    fn prepare(&self, params: &toml::Table, model: &BuiltModel, _seed: u64) -> Result<Box<dyn PreparedTask>, ConfigError> {
        let mut table = params.clone();
        let initial = initial_state(&mut table, model)?;
        let warm_cycles = take("task", &mut table, "warm_cycles")?.unwrap_or(0);
        let warm_basis = take("task", &mut table, "warm_basis")?.unwrap_or(false);
        let rpm: RpmOptions = decode("task", &table)?;
        rpm.validate().map_err(invalid)?;
        if warm_basis && warm_cycles < 2 {
            return Err(ConfigError::new("[task] warm_basis needs warm_cycles >= 2").with_key("warm_basis"));
        }
        Ok(Box::new(FixedPointTask {
            rpm,
            initial,
            warm_cycles,
            warm_basis,
        }))
    }
}

impl PreparedTask for FixedPointTask {
    fn run(&self, stepper: &Timestepper, params: &Parameters, out: &OutputSink) -> Result<TaskOutcome, Error> {
        let mut u = self.initial.clone();
        let mut diffs = Vec::new();
        for _ in 0..self.warm_cycles {
            let next = stepper.evaluate(&u, params)?;
            diffs.push(&next - &u);
            if diffs.len() > self.rpm.history {
                diffs.remove(0);
            }
            u = next;
        }
        let warm = if self.warm_basis {
            Some(SlowBasis::from_history(stepper.dim(), &diffs, &self.rpm)?)
        } else {
            None
        };
        let result = rpm_solve(stepper, &u, params, &self.rpm, warm)?;
        let rows: Vec<Vec<Field>> = (0..result.state.len())
            .step_by(out.config.stride.max(1))
            .map(|i| vec![Field::from(i), Field::Num(result.state[i])])
            .collect();
        let path = out.write("fixed_point", &["index".to_string(), "u".into()], &rows)?;
        let mut headline = BTreeMap::from([
            ("residual".into(), format!("{:.3e}", result.residual)),
            ("iterations".into(), result.iterations.to_string()),
            ("slow_dim".into(), result.basis.dim().to_string()),
        ]);
        if let Some(mus) = result.slow_multipliers().ok().filter(|m| !m.is_empty()) {
            headline.insert("slow_mu".into(), fmt_multipliers(mus));
        }
        if result.basis_full {
            headline.insert("basis".into(), "full".into());
        }
        let success = result.converged();
        Ok(TaskOutcome {
            status: format!("{:?}", result.status),
            success,
            headline,
            csv: vec![path],
            fixed_point: success.then_some(result.state),
            tolerance: Some(self.rpm.tolerance),
        })
    }
}

// -------------------------------------------------------------------- eigs

#[derive(Debug)]
struct EigsTask {
    arnoldi: ArnoldiOptions,
    rpm: RpmOptions,
    initial: StateVector,
    /// Locate the fixed point first; otherwise `initial` must be one.
    solve: bool,
}

struct EigsRunner;

impl TaskRunner for EigsRunner {
    fn kind(&self) -> &'static str {
        "eigs"
    }

    fn prepare(&self, params: &toml::Table, model: &BuiltModel, seed: u64) -> Result<Box<dyn PreparedTask>, ConfigError> {
        let mut table = params.clone();
        let initial = initial_state(&mut table, model)?;
        let solve = take("task", &mut table, "solve")?.unwrap_or(true);
        let rpm = match table.remove("rpm") {
            Some(toml::Value::Table(t)) => decode("task.rpm", &t)?,
            Some(_) => return Err(ConfigError::new("[task] rpm must be a table").with_key("rpm")),
            None => RpmOptions {
                tolerance: 1e-10,
                ..Default::default()
            },
        };
        rpm.validate().map_err(invalid)?;
        let mut arnoldi: ArnoldiOptions = decode("task", &table)?;
        let dim = model.map.dim();
        if arnoldi.k == 0 || arnoldi.k > dim.min(arnoldi.k_max) {
            return Err(ConfigError::new(format!(
                "[task] k = {} must lie in 1..={}",
                arnoldi.k,
                dim.min(arnoldi.k_max)
            ))
            .with_key("k"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        arnoldi.start = Some(StateVector::from_fn(dim, |_, _| rng.gen_range(-1.0..1.0)));
        Ok(Box::new(EigsTask {
            arnoldi,
            rpm,
            initial,
            solve,
        }))
    }
}

impl PreparedTask for EigsTask {
    fn run(&self, stepper: &Timestepper, params: &Parameters, out: &OutputSink) -> Result<TaskOutcome, Error> {
        let u_star = if self.solve {
            let fp = rpm_solve(stepper, &self.initial, params, &self.rpm, None)?;
            if !fp.converged() {
                return Ok(TaskOutcome {
                    status: format!("FixedPoint{:?}", fp.status),
                    success: false,
                    headline: BTreeMap::from([("residual".into(), format!("{:.3e}", fp.residual))]),
                    ..Default::default()
                });
            }
            fp.state
        } else {
            self.initial.clone()
        };
        let spectrum = floquet_multipliers(stepper, &u_star, params, &self.arnoldi)?;
        let rows: Vec<Vec<Field>> = spectrum
            .pairs
            .iter()
            .map(|p| {
                vec![
                    Field::Num(p.value.re),
                    Field::Num(p.value.im),
                    Field::Num(p.value.norm()),
                    Field::Num(p.residual),
                ]
            })
            .collect();
        let header: Vec<String> = ["re", "im", "abs", "residual"].iter().map(|s| s.to_string()).collect();
        let path = out.write("spectrum", &header, &rows)?;
        let leading: Vec<_> = spectrum.values().into_iter().take(4).collect();
        Ok(TaskOutcome {
            status: if spectrum.stable { "Stable" } else { "Unstable" }.into(),
            success: true,
            headline: BTreeMap::from([
                ("leading_mu".into(), fmt_multipliers(leading)),
                ("breakdown".into(), spectrum.breakdown.to_string()),
            ]),
            csv: vec![path],
            fixed_point: Some(u_star),
            tolerance: self.solve.then_some(self.rpm.tolerance),
        })
    }
}

// ---------------------------------------------------------------- continue

#[derive(Debug)]
struct ContinueTask {
    opts: ContinuationOptions,
    range: (f64, f64),
    start: Option<f64>,
    parameter: Option<String>,
    initial: StateVector,
    /// Multiplier columns in the branch CSV.
    multipliers: usize,
}

struct ContinueRunner;

impl TaskRunner for ContinueRunner {
    fn kind(&self) -> &'static str {
        "continue"
    }

    fn prepare(&self, params: &toml::Table, model: &BuiltModel, _seed: u64) -> Result<Box<dyn PreparedTask>, ConfigError> {
        let mut table = params.clone();
        let initial = initial_state(&mut table, model)?;
        let range: [f64; 2] = take("task", &mut table, "range")?
            .ok_or_else(|| ConfigError::new("[task] continuation needs `range = [lo, hi]`").with_key("range"))?;
        let start = take("task", &mut table, "start")?;
        let parameter = take("task", &mut table, "parameter")?;
        let multipliers = take("task", &mut table, "multipliers")?.unwrap_or(2);
        let opts: ContinuationOptions = decode("task", &table)?;
        opts.validate().map_err(invalid)?;
        Ok(Box::new(ContinueTask {
            opts,
            range: (range[0], range[1]),
            start,
            parameter,
            initial,
            multipliers,
        }))
    }
}

impl PreparedTask for ContinueTask {
    fn run(&self, stepper: &Timestepper, params: &Parameters, out: &OutputSink) -> Result<TaskOutcome, Error> {
        let params = match &self.parameter {
            Some(name) => {
                let value = params.get(name)?;
                params.clone().with_continuation(name.clone(), value)
            }
            None => params.clone(),
        };
        let start = self.start.unwrap_or_else(|| params.lambda());
        let branch = trace_branch(stepper, &params, &self.initial, start, self.range, &self.opts)?;
        let mut header = vec!["s".to_string(), "lambda".into(), "residual".into(), "fold_flag".into()];
        for i in 1..=self.multipliers {
            header.push(format!("mu{i}_re"));
            header.push(format!("mu{i}_im"));
        }
        header.extend(out.state_header(stepper.dim()));
        let rows: Vec<Vec<Field>> = branch
            .points
            .iter()
            .map(|p| {
                let mut r = vec![
                    Field::Num(p.s),
                    Field::Num(p.lambda),
                    Field::Num(p.residual),
                    Field::from(p.fold),
                ];
                for i in 0..self.multipliers {
                    let mu = p.multipliers.get(i);
                    r.push(Field::Num(mu.map_or(f64::NAN, |z| z.re)));
                    r.push(Field::Num(mu.map_or(f64::NAN, |z| z.im)));
                }
                r.extend(out.state_fields(&p.u));
                r
            })
            .collect();
        let path = out.write("branch", &header, &rows)?;
        let folds: Vec<String> = branch.folds.iter().map(|f| format!("{:.8}", f.lambda)).collect();
        Ok(TaskOutcome {
            status: format!("{:?}", branch.termination),
            success: branch.termination != Termination::StepUnderflow,
            headline: BTreeMap::from([
                ("points".into(), branch.points.len().to_string()),
                ("folds".into(), if folds.is_empty() { "none".into() } else { folds.join(", ") }),
            ]),
            csv: vec![path],
            fixed_point: None,
            tolerance: Some(self.opts.tolerance),
        })
    }
}

// -------------------------------------------------------------- projective

#[derive(Debug)]
struct ProjectiveTask {
    schedule: ProjectiveSchedule,
    initial: StateVector,
}

struct ProjectiveRunner;

impl TaskRunner for ProjectiveRunner {
    fn kind(&self) -> &'static str {
        "projective"
    }

    fn prepare(&self, params: &toml::Table, model: &BuiltModel, _seed: u64) -> Result<Box<dyn PreparedTask>, ConfigError> {
        let mut table = params.clone();
        let initial = initial_state(&mut table, model)?;
        let schedule: ProjectiveSchedule = decode("task", &table)?;
        schedule.validate().map_err(invalid)?;
        Ok(Box::new(ProjectiveTask { schedule, initial }))
    }
}

impl PreparedTask for ProjectiveTask {
    fn run(&self, stepper: &Timestepper, params: &Parameters, out: &OutputSink) -> Result<TaskOutcome, Error> {
        let run = projective_run(stepper, &self.initial, params, &self.schedule)?;
        let mut header = vec!["cycle".to_string(), "kind".into()];
        header.extend(out.state_header(stepper.dim()));
        let rows: Vec<Vec<Field>> = run
            .entries
            .iter()
            .map(|e| {
                let mut r = vec![Field::from(e.cycle), Field::from(e.kind.as_str())];
                r.extend(out.state_fields(&e.state));
                r
            })
            .collect();
        let path = out.write("envelope", &header, &rows)?;
        Ok(TaskOutcome {
            status: if run.converged { "Converged" } else { "MaxRounds" }.into(),
            success: run.converged,
            headline: BTreeMap::from([
                ("rounds".into(), run.rounds.to_string()),
                ("cycles".into(), run.cycles.to_string()),
                ("speedup".into(), format!("{:.3}", run.speedup())),
                ("change".into(), format!("{:.3e}", run.last_change)),
            ]),
            csv: vec![path],
            fixed_point: run.converged.then(|| run.final_state().clone()),
            tolerance: Some(self.schedule.tolerance),
        })
    }
}
