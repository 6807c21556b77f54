//! The training loop shared by every run kind.
//!
//! A [`Driver`] picks the bin for each step. The loop trains, records the action,
//! and evaluates validation perplexity at every multiple of the reward interval,
//! at the start of the run, and at its end.

use crate::error::{Error, Result};
use crate::report::{ReportBuilder, RunReport};
use crate::trainee::Trainee;
use crate::types::BinId;

pub trait Driver {
    /// Bin for the step about to be taken (`trainee.steps_taken()` is its index).
    fn choose(&mut self, trainee: &mut dyn Trainee) -> Result<BinId>;

    /// Exploration rate to report at `step`, if the driver explores.
    fn epsilon(&self, _step: u64) -> Option<f64> {
        None
    }

    /// Called at evaluations on reward-interval multiples; returns the reward emitted, if any.
    fn on_evaluation(&mut self, _step: u64, _ppl: f64) -> Result<Option<f64>> {
        Ok(None)
    }

    /// Called after every training step, after any evaluation at that step.
    fn after_step(&mut self, _step: u64) -> Result<()> {
        Ok(())
    }
}

fn evaluate(
    trainee: &mut dyn Trainee,
    driver: &mut dyn Driver,
    interval: u64,
    on_grid_only: bool,
    report: &mut ReportBuilder,
) -> Result<()> {
    let step = trainee.steps_taken();
    if report.last_step() == Some(step) {
        return Ok(());
    }
    let on_grid = step % interval == 0;
    if on_grid_only && !on_grid {
        return Ok(());
    }
    let ppl = trainee.validation_perplexity()?;
    let reward = if on_grid {
        driver.on_evaluation(step, ppl)?
    } else {
        None
    };
    report.evaluation(step, ppl, driver.epsilon(step), reward);
    Ok(())
}

/// Train for `steps` steps under `driver`, appending to `report`.
pub fn drive(
    trainee: &mut dyn Trainee,
    driver: &mut dyn Driver,
    steps: u64,
    interval: u64,
    report: &mut ReportBuilder,
) -> Result<()> {
    let interval = interval.max(1);
    evaluate(trainee, driver, interval, false, report)?;
    for _ in 0..steps {
        let bin = driver.choose(trainee)?;
        trainee.train_step(bin)?;
        report.action(bin);
        evaluate(trainee, driver, interval, true, report)?;
        driver.after_step(trainee.steps_taken())?;
    }
    evaluate(trainee, driver, interval, false, report)
}

/// Run `driver` from the trainee's current state for `steps` steps and return the report.
/// On failure the error carries the partial report.
pub fn run(
    trainee: &mut dyn Trainee,
    driver: &mut dyn Driver,
    steps: u64,
    interval: u64,
    policy_used: &str,
    seed: u64,
) -> Result<RunReport> {
    let mut report = ReportBuilder::new(policy_used, seed, trainee.steps_taken(), trainee.n_bins());
    match drive(trainee, driver, steps, interval, &mut report) {
        Ok(()) => Ok(report.finish()),
        Err(e) => Err(report.abort(e)),
    }
}

/// Forward a driver error without the partial-report wrapper.
pub fn strip_abort(e: Error) -> Error {
    match e {
        Error::Aborted { cause, .. } => *cause,
        e => e,
    }
}
