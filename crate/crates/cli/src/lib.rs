//! Batch runner: one configuration file, one model, one task.

pub mod config;
pub mod error;
pub mod models;
pub mod report;
pub mod tasks;

use std::fs;
use std::time::Instant;

use tskit_core::Timestepper;

pub use config::{OutputConfig, RunConfig, Section};
pub use error::{CliError, ConfigError};
pub use models::{BuiltModel, ModelFactory, ModelRegistry};
pub use report::{compare_runs, RunReport, SpeedupSummary};
pub use tasks::{OutputSink, PreparedTask, TaskOutcome, TaskRegistry, TaskRunner};

/// A validated run: the model and the task built from a configuration.
#[derive(Debug)]
pub struct PreparedRun {
    pub model: BuiltModel,
    pub task: Box<dyn PreparedTask>,
}

pub fn prepare(config: &RunConfig, models: &ModelRegistry, tasks: &TaskRegistry) -> Result<PreparedRun, ConfigError> {
    let model = models
        .build(&config.model.kind, &config.model.params, config.seed)
        .map_err(|e| config.locate("model", e))?;
    let task = tasks
        .prepare(&config.task.kind, &config.task.params, &model, config.seed)
        .map_err(|e| config.locate("task", e))?;
    Ok(PreparedRun { model, task })
}

/// Builds, runs and reports with the built-in registries.
pub fn run_task(config: &RunConfig) -> Result<RunReport, CliError> {
    run_with(config, &ModelRegistry::default(), &TaskRegistry::default())
}

pub fn run_with(config: &RunConfig, models: &ModelRegistry, tasks: &TaskRegistry) -> Result<RunReport, CliError> {
    let run = prepare(config, models, tasks)?;
    let stepper = Timestepper::from_arc(run.model.map.clone());
    let params = stepper.default_parameters();
    let out = OutputSink::new(config.output.clone());
    let clock = Instant::now();
    let before = stepper.calls();
    let outcome = run.task.run(&stepper, &params, &out)?;
    let report = RunReport {
        task: config.task.kind.clone(),
        model: config.model.kind.clone(),
        status: outcome.status,
        success: outcome.success,
        wall_time_s: clock.elapsed().as_secs_f64(),
        map_calls: stepper.calls() - before,
        parameters: params.iter().map(|(k, v)| (k.to_string(), v)).collect(),
        headline: outcome.headline,
        csv: outcome.csv,
        fixed_point: outcome.fixed_point.map(|u| u.iter().copied().collect()),
        tolerance: outcome.tolerance,
    };
    fs::write(out.path("report", "toml"), report.to_toml_string()).map_err(tskit_core::Error::from)?;
    Ok(report)
}
