//! The `run` subcommand: closed-loop rollouts per model and true intent.

use intent_games::environments::EnvironmentSpec;
use intent_games::estimation::Belief;
use intent_games::ilq::IlqOptions;
use intent_games::simulation::{
    first_below, regret, rollout, InteractionModel, RolloutRecord, RolloutSetup,
};
use intent_games::teaching::plan_teaching;
use nalgebra::DVector;
use rayon::prelude::*;

use crate::config::{Experiment, ModelKind};
use crate::error::CliError;
use crate::output::{csv_text, float, Artifacts};
use crate::plot;

/// One executed model at one true intent.
#[derive(Debug, Clone)]
pub struct ModelRun {
    pub label: String,
    /// `ρ2 / ρ1` of active runs.
    pub ratio: Option<f64>,
    pub record: RolloutRecord,
}

#[derive(Debug, Clone)]
pub struct PointResult {
    pub theta: f64,
    pub runs: Vec<ModelRun>,
    /// Complete-information reference for regret.
    pub reference: RolloutRecord,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub label: String,
    pub theta: f64,
    pub ratio: Option<f64>,
    pub player: usize,
    pub regret: f64,
    /// `None` for players without beliefs.
    pub time_to_convergence: Option<Option<usize>>,
    pub final_belief_error: Option<f64>,
}

fn spec_at(exp: &Experiment, theta: f64) -> Result<EnvironmentSpec, CliError> {
    let mut spec = exp.spec.clone();
    spec.weights = exp.weights((spec.weights.rho1, spec.weights.rho2), theta)?;
    Ok(spec)
}

/// Solves and simulates one sweep point.
pub fn simulate_point(exp: &Experiment, theta: f64) -> Result<PointResult, CliError> {
    let spec = spec_at(exp, theta)?;
    let theta_v = DVector::from_element(1, theta);
    let options = IlqOptions::default();
    let policies = spec.solve(&theta_v, &options)?;
    let setup = RolloutSetup {
        x0: spec.x0.clone(),
        beliefs: spec.initial_beliefs.clone(),
        theta_star: theta_v,
        switch: spec.switch.clone(),
        noise_std: exp.config.noise_std,
        seed: exp.config.seed,
    };
    let run = |model: &InteractionModel, teaching: Option<&[_]>| {
        rollout(
            &spec.game,
            &policies,
            spec.estimator,
            model,
            teaching,
            &setup,
        )
    };
    let reference = run(&InteractionModel::CompleteInfo, None)?;

    let sweep = exp.config.ratios.is_some();
    let mut runs = Vec::new();
    for kind in &exp.models {
        match kind {
            ModelKind::Active => {
                for &rho in &exp.active {
                    let weights = exp.weights(rho, theta)?;
                    let teaching = plan_teaching(
                        &spec.game,
                        &policies,
                        spec.estimator,
                        &spec.initial_beliefs,
                        &weights,
                        &spec.x0,
                        &options,
                    )?;
                    let ratio = weights.ratio();
                    let record = run(
                        &InteractionModel::Active(weights),
                        Some(teaching.as_slice()),
                    )?;
                    let label = if sweep {
                        format!("active-ratio{ratio}")
                    } else {
                        "active".into()
                    };
                    runs.push(ModelRun {
                        label,
                        ratio: Some(ratio),
                        record,
                    });
                }
            }
            ModelKind::Passive => runs.push(ModelRun {
                label: "passive".into(),
                ratio: None,
                record: run(&InteractionModel::Passive, None)?,
            }),
            ModelKind::CompleteInfo => runs.push(ModelRun {
                label: "complete_info".into(),
                ratio: None,
                record: reference.clone(),
            }),
        }
    }
    Ok(PointResult {
        theta,
        runs,
        reference,
    })
}

/// Runs every sweep point on the rayon pool, in configuration order.
pub fn simulate(exp: &Experiment) -> Result<Vec<PointResult>, CliError> {
    exp.thetas
        .par_iter()
        .map(|&theta| simulate_point(exp, theta))
        .collect()
}

/// Belief error of an uncertain player, measured from the intent switch when
/// one is scheduled.
pub fn post_switch_errors(record: &RolloutRecord, player: usize) -> Result<Vec<f64>, CliError> {
    let errors = record.belief_errors(player)?;
    let start = record.switch.as_ref().map_or(0, |s| s.stage);
    Ok(errors[start..].to_vec())
}

pub fn summarize(exp: &Experiment, points: &[PointResult]) -> Result<Vec<SummaryRow>, CliError> {
    let mut rows = Vec::new();
    for p in points {
        for run in &p.runs {
            for player in 0..run.record.players() {
                let beliefs = player > 0 && run.record.beliefs.is_some();
                let (ttc, fin) = if beliefs {
                    let errors = post_switch_errors(&run.record, player)?;
                    (
                        Some(first_below(&errors, exp.config.convergence_threshold)),
                        errors.last().copied(),
                    )
                } else {
                    (None, None)
                };
                rows.push(SummaryRow {
                    label: run.label.clone(),
                    theta: p.theta,
                    ratio: run.ratio,
                    player,
                    regret: regret(&run.record, &p.reference, player)?,
                    time_to_convergence: ttc,
                    final_belief_error: fin,
                });
            }
        }
    }
    Ok(rows)
}

pub fn summary_csv(exp: &Experiment, rows: &[SummaryRow]) -> Result<String, CliError> {
    let mut header = vec![
        "model".to_string(),
        "theta".into(),
        "ratio".into(),
        "player".into(),
    ];
    for m in crate::config::METRICS {
        if exp.metric(m) {
            header.push(m.into());
        }
    }
    let body: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            let mut line = vec![
                r.label.clone(),
                float(r.theta),
                r.ratio.map(float).unwrap_or_default(),
                r.player.to_string(),
            ];
            if exp.metric("regret") {
                line.push(float(r.regret));
            }
            if exp.metric("time_to_convergence") {
                line.push(match r.time_to_convergence {
                    Some(Some(t)) => t.to_string(),
                    Some(None) => "never".into(),
                    None => String::new(),
                });
            }
            if exp.metric("final_belief_error") {
                line.push(r.final_belief_error.map(float).unwrap_or_default());
            }
            line
        })
        .collect();
    csv_text(&header, &body)
}

/// Columns: `t`, `x{k}`, `u{i}_{k}`, `b{j}_mean{k}`, `b{j}_var{k}`, `c{i}`.
///
/// The last row holds the terminal state and costs with empty controls.
/// Belief columns are empty for complete information, variances for point
/// estimates.
pub fn rollout_csv(spec: &EnvironmentSpec, record: &RolloutRecord) -> Result<String, CliError> {
    let dims = spec.game.dims();
    let (n, p, players) = (dims.state_dim, dims.intent_dim, dims.players());
    let mut header = vec!["t".to_string()];
    header.extend((0..n).map(|k| format!("x{k}")));
    for (i, &m) in dims.control_dims.iter().enumerate() {
        header.extend((0..m).map(|k| format!("u{i}_{k}")));
    }
    for j in 1..players {
        header.extend((0..p).map(|k| format!("b{j}_mean{k}")));
        header.extend((0..p).map(|k| format!("b{j}_var{k}")));
    }
    header.extend((0..players).map(|i| format!("c{i}")));

    let mut rows = Vec::with_capacity(record.states.len());
    for (t, x) in record.states.iter().enumerate() {
        let mut line = vec![t.to_string()];
        line.extend(x.iter().map(|&v| float(v)));
        for (i, &m) in dims.control_dims.iter().enumerate() {
            match record.controls.get(t) {
                Some(us) => line.extend(us[i].iter().map(|&v| float(v))),
                None => line.extend(std::iter::repeat_n(String::new(), m)),
            }
        }
        for j in 0..players - 1 {
            match record.beliefs.as_ref().map(|b| &b[t][j]) {
                Some(b) => {
                    line.extend(b.mean().iter().map(|&v| float(v)));
                    match b {
                        Belief::Gaussian(g) => {
                            line.extend(g.cov.diagonal().iter().map(|&v| float(v)))
                        }
                        Belief::Point(_) => line.extend(std::iter::repeat_n(String::new(), p)),
                    }
                }
                None => line.extend(std::iter::repeat_n(String::new(), 2 * p)),
            }
        }
        line.extend(record.stage_costs[t].iter().map(|&c| float(c)));
        rows.push(line);
    }
    csv_text(&header, &rows)
}

/// Renders every artifact of a finished run.
pub fn artifacts(exp: &Experiment, points: &[PointResult]) -> Result<Artifacts, CliError> {
    let rows = summarize(exp, points)?;
    let mut out = Artifacts::default();
    for p in points {
        for run in &p.runs {
            let spec = spec_at(exp, p.theta)?;
            out.add(
                format!("rollouts/{}_{}.csv", run.label, p.theta),
                rollout_csv(&spec, &run.record)?,
            );
        }
    }
    out.add("summary.csv", summary_csv(exp, &rows)?);
    out.add("belief_error.svg", plot::belief_error(exp, points)?);
    out.add("regret.svg", plot::regret(&rows)?);
    Ok(out)
}

pub fn execute(exp: &Experiment) -> Result<Vec<std::path::PathBuf>, CliError> {
    let points = simulate(exp)?;
    let files = artifacts(exp, &points)?;
    files.write(&exp.output)
}
