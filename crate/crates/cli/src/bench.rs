//! The `bench` subcommand: wall-clock of solves, plans and teaching actions.

use std::time::{Duration, Instant};

use intent_games::ilq::IlqOptions;
use intent_games::simulation::{
    rollout, time_teaching_actions, InteractionModel, RolloutSetup, TimingSummary,
};
use intent_games::teaching::plan_teaching;
use nalgebra::DVector;

use crate::config::Experiment;
use crate::error::CliError;
use crate::output::{csv_text, float, Artifacts};

#[derive(Debug, Clone, PartialEq)]
pub struct BenchRow {
    pub theta: f64,
    /// `solve`, `plan` or `action`.
    pub phase: &'static str,
    pub timing: TimingSummary,
}

fn single(d: Duration) -> TimingSummary {
    TimingSummary::from_samples(&[d]).expect("one sample")
}

/// Times each sweep point sequentially so measurements do not compete.
pub fn measure(exp: &Experiment) -> Result<Vec<BenchRow>, CliError> {
    let options = IlqOptions::default();
    let mut rows = Vec::new();
    for &theta in &exp.thetas {
        let theta_v = DVector::from_element(1, theta);
        let mut spec = exp.spec.clone();
        spec.weights.theta_star = theta_v.clone();

        let start = Instant::now();
        let policies = spec.solve(&theta_v, &options)?;
        rows.push(BenchRow {
            theta,
            phase: "solve",
            timing: single(start.elapsed()),
        });

        let start = Instant::now();
        let teaching = plan_teaching(
            &spec.game,
            &policies,
            spec.estimator,
            &spec.initial_beliefs,
            &spec.weights,
            &spec.x0,
            &options,
        )?;
        rows.push(BenchRow {
            theta,
            phase: "plan",
            timing: single(start.elapsed()),
        });

        let setup = RolloutSetup {
            x0: spec.x0.clone(),
            beliefs: spec.initial_beliefs.clone(),
            theta_star: theta_v,
            switch: spec.switch.clone(),
            noise_std: exp.config.noise_std,
            seed: exp.config.seed,
        };
        let record = rollout(
            &spec.game,
            &policies,
            spec.estimator,
            &InteractionModel::Active(spec.weights.clone()),
            Some(&teaching),
            &setup,
        )?;
        let samples = time_teaching_actions(&record, &teaching, exp.config.bench_repeats)?;
        rows.push(BenchRow {
            theta,
            phase: "action",
            timing: TimingSummary::from_samples(&samples).expect("positive repeats and horizon"),
        });
    }
    Ok(rows)
}

pub fn bench_csv(rows: &[BenchRow]) -> Result<String, CliError> {
    let header: Vec<String> = ["theta", "phase", "samples", "mean_s", "p95_s", "max_s"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    let body: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            vec![
                float(r.theta),
                r.phase.into(),
                r.timing.samples.to_string(),
                float(r.timing.mean.as_secs_f64()),
                float(r.timing.p95.as_secs_f64()),
                float(r.timing.max.as_secs_f64()),
            ]
        })
        .collect();
    csv_text(&header, &body)
}

pub fn execute(exp: &Experiment) -> Result<(), CliError> {
    let rows = measure(exp)?;
    let mut files = Artifacts::default();
    files.add("bench.csv", bench_csv(&rows)?);
    files.write(&exp.output)?;
    println!("environment: {}", exp.spec.name);
    for r in &rows {
        println!(
            "theta {} {:>6}: samples {} mean {:.3e} s p95 {:.3e} s max {:.3e} s",
            r.theta,
            r.phase,
            r.timing.samples,
            r.timing.mean.as_secs_f64(),
            r.timing.p95.as_secs_f64(),
            r.timing.max.as_secs_f64()
        );
    }
    Ok(())
}
