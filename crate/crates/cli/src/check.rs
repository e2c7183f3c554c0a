//! The `check` subcommand: exact proposition checks on LQ environments.

use std::fmt::Write;

use intent_games::checks::{
    check_contraction, check_demonstration_advantage, GAP_THRESHOLD, JACOBIAN_THRESHOLD,
};
use intent_games::estimation::EstimatorKind;
use nalgebra::DVector;

use crate::config::Experiment;
use crate::error::CliError;
use crate::output::Artifacts;

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Proposition {
    /// Belief contraction under demonstration-only teaching.
    Prop1,
    /// Strict advantage of task-driven teaching over complete information.
    Prop2,
}

pub struct CheckOutcome {
    pub passed: bool,
    pub report: String,
}

fn exact_environment(exp: &Experiment) -> Result<(), CliError> {
    if !exp.spec.game.is_linear() {
        return Err(CliError::Config(format!(
            "environment: {} is nonlinear; exact checks need an LQ environment",
            exp.spec.name
        )));
    }
    if matches!(exp.spec.estimator, EstimatorKind::Gaussian { .. }) {
        return Err(CliError::Config(format!(
            "environment: {} uses Gaussian beliefs; exact checks need gradient point estimates",
            exp.spec.name
        )));
    }
    Ok(())
}

fn spec_for(exp: &Experiment) -> intent_games::environments::EnvironmentSpec {
    let mut spec = exp.spec.clone();
    if let Some(&theta) = exp.config.theta.as_ref().and_then(|t| t.first()) {
        spec.weights.theta_star = DVector::from_element(1, theta);
    }
    spec.switch = None;
    spec
}

pub fn run_check(exp: &Experiment, which: Proposition) -> Result<CheckOutcome, CliError> {
    exact_environment(exp)?;
    let spec = spec_for(exp);
    let mut report = String::new();
    let passed = match which {
        Proposition::Prop1 => {
            let rho2 = exp.config.rho2.unwrap_or(exp.spec.weights.rho2);
            if !(rho2 > 0.0) {
                return Err(CliError::Config("rho2: must be positive for prop1".into()));
            }
            let c = check_contraction(&spec, rho2)?;
            let _ = writeln!(report, "proposition: prop1");
            let _ = writeln!(report, "environment: {}", spec.name);
            let _ = writeln!(report, "alpha: {}", c.alpha);
            let _ = writeln!(report, "rho1: 0");
            let _ = writeln!(report, "rho2: {rho2}");
            let _ = writeln!(report, "contraction_factor: {:.16e}", c.factor);
            let _ = writeln!(report, "min_eigenvalue: {:.16e}", c.min_eigenvalue);
            let _ = writeln!(report, "max_ratio: {:.16e}", c.max_ratio());
            let _ = writeln!(
                report,
                "step_bound: {}",
                c.step_bound.map_or("none".into(), |b| b.to_string())
            );
            let _ = writeln!(
                report,
                "steps_to_tolerance: {}",
                c.steps_to_tolerance
                    .map_or("never".into(), |s| s.to_string())
            );
            for (t, r) in c.ratios.iter().enumerate() {
                let _ = writeln!(report, "ratio[{t}]: {r:.16e}");
            }
            c.passed()
        }
        Proposition::Prop2 => {
            let a = check_demonstration_advantage(&spec)?;
            let _ = writeln!(report, "proposition: prop2");
            let _ = writeln!(report, "environment: {}", spec.name);
            let _ = writeln!(report, "jacobian_norm: {:.16e}", a.jacobian_norm);
            let _ = writeln!(report, "active_cost: {:.16e}", a.active_cost);
            let _ = writeln!(report, "nash_cost: {:.16e}", a.nash_cost);
            let _ = writeln!(report, "gap: {:.16e}", a.gap());
            let _ = writeln!(report, "jacobian_threshold: {JACOBIAN_THRESHOLD:e}");
            let _ = writeln!(report, "gap_threshold: {GAP_THRESHOLD:e}");
            a.passed()
        }
    };
    let _ = writeln!(report, "result: {}", if passed { "pass" } else { "fail" });
    Ok(CheckOutcome { passed, report })
}

pub fn execute(exp: &Experiment, which: Proposition) -> Result<bool, CliError> {
    let outcome = run_check(exp, which)?;
    let name = match which {
        Proposition::Prop1 => "prop1_report.txt",
        Proposition::Prop2 => "prop2_report.txt",
    };
    let mut files = Artifacts::default();
    files.add(name, outcome.report.clone());
    files.write(&exp.output)?;
    print!("{}", outcome.report);
    Ok(outcome.passed)
}
