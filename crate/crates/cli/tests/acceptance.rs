//! Acceptance criteria, one line each with its runtime budget.

use std::path::{Path, PathBuf};
use std::process::{Command, ExitCode};
use std::time::{Duration, Instant};

use intent_games::checks::{
    check_contraction, check_demonstration_advantage, GAP_THRESHOLD, JACOBIAN_THRESHOLD,
};
use intent_games::environments::{
    derivative_fidelity, make_lunar_lander, make_scalar_toy, EnvironmentName, EnvironmentSpec,
    LunarLanderParams, ScalarToyParams,
};
use intent_games::estimation::{gaussian_update, Belief, EstimatorKind, GaussianBelief};
use intent_games::ilq::{solve_ilq, IlqOptions};
use intent_games::lq_nash::{solve_feedback_nash, PlayerPolicy};
use intent_games::model::{GameDefinition, LinearGame};
use intent_games::oracles::{
    deviation_improvement, grid_posterior, random_lq_game, random_offsets,
};
use intent_games::simulation::first_below;
use intent_games::teaching::{
    belief_gains, build_augmented_lq_from_gains, solve_affine_lqr, solve_ilqr_augmented,
    AugmentedState,
};
use intent_games_cli::config::{prepare, read_config, Experiment};
use intent_games_cli::run::{post_switch_errors, simulate, PointResult};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;

/// Game, initial state, initial beliefs, step size, demonstration weight, true intent.
type TeachingCase = (
    LinearGame,
    DVector<f64>,
    Vec<Belief>,
    f64,
    f64,
    DVector<f64>,
);

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn experiment(name: &str) -> Result<Experiment, String> {
    let cfg = read_config(&configs().join(name)).map_err(|e| e.to_string())?;
    prepare(cfg, true).map_err(|e| e.to_string())
}

fn sweep(name: &str) -> Result<(Experiment, Vec<PointResult>), String> {
    let exp = experiment(name)?;
    let points = simulate(&exp).map_err(|e| e.to_string())?;
    Ok((exp, points))
}

fn ensure(ok: bool, msg: impl Into<String>) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn err(e: impl std::fmt::Display) -> String {
    e.to_string()
}

fn vector(rng: &mut ChaCha8Rng, len: usize) -> DVector<f64> {
    DVector::from_fn(len, |_, _| rng.random_range(-1.0..1.0))
}

fn random_game(rng: &mut ChaCha8Rng, max_horizon: usize) -> Result<LinearGame, String> {
    let n = rng.random_range(1..=4);
    let players = rng.random_range(2..=3);
    let controls = (0..players).map(|_| rng.random_range(1..=2)).collect();
    let horizon = rng.random_range(1..=max_horizon);
    random_lq_game(rng, n, controls, 1, horizon).map_err(err)
}

fn lander_without_switch() -> Result<EnvironmentSpec, String> {
    make_lunar_lander(&LunarLanderParams {
        switch_enabled: false,
        ..Default::default()
    })
    .map_err(err)
}

fn contraction() -> Outcome {
    let spec = lander_without_switch()?;
    let c = check_contraction(&spec, 4.0).map_err(err)?;
    let detail = format!(
        "alpha {} c {:.4} max ratio {:.2e} steps {:?} bound {:?}",
        c.alpha,
        c.factor,
        c.max_ratio(),
        c.steps_to_tolerance,
        c.step_bound
    );
    ensure(c.passed(), format!("contraction violated: {detail}"))?;
    Ok(detail)
}

fn equilibrium_deviation() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst = f64::NEG_INFINITY;
    for g in 0..20 {
        let game = random_game(&mut rng, 20)?;
        let sol = solve_feedback_nash(&game).map_err(|e| format!("game {g}: {e}"))?;
        let x0 = vector(&mut rng, game.dims.state_dim);
        let theta = vector(&mut rng, 1);
        for (i, &m) in game.dims.control_dims.iter().enumerate() {
            for _ in 0..100 {
                let norm = rng.random_range(0.0..=0.1);
                let offsets = random_offsets(&mut rng, m, game.dims.horizon, norm);
                let gain = deviation_improvement(&game, &sol.policies, &x0, &theta, i, &offsets)
                    .map_err(err)?;
                worst = worst.max(gain);
                ensure(
                    gain <= 1e-6,
                    format!("game {g} player {i} improves by {gain:.3e}"),
                )?;
            }
        }
    }
    Ok(format!("20 games, largest improvement {worst:.2e}"))
}

fn oracle_equivalences() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);

    let mut gain_gap: f64 = 0.0;
    let mut games: Vec<LinearGame> = (0..10)
        .map(|_| random_game(&mut rng, 20))
        .collect::<Result<_, _>>()?;
    if let GameDefinition::Linear(g) = &lander_without_switch()?.game {
        games.push(g.clone());
    }
    for (k, game) in games.iter().enumerate() {
        let exact = solve_feedback_nash(game).map_err(err)?;
        let theta = vector(&mut rng, 1);
        let x0 = vector(&mut rng, game.dims.state_dim);
        let sol = solve_ilq(
            &game.as_nonlinear(),
            &theta,
            &x0,
            None,
            &IlqOptions::default(),
        )
        .map_err(err)?;
        ensure(
            sol.state.iterations <= 1,
            format!("game {k}: {} iterations", sol.state.iterations),
        )?;
        for (a, b) in sol.policies.iter().zip(&exact.policies) {
            for (ga, gb) in a.players.iter().zip(&b.players) {
                gain_gap = gain_gap.max((&ga.state_gain - &gb.state_gain).amax());
                gain_gap = gain_gap.max((&ga.intent_gain - &gb.intent_gain).amax());
                gain_gap = gain_gap.max((&ga.offset - &gb.offset).amax());
            }
        }
    }
    ensure(
        gain_gap <= 1e-6,
        format!("(a) iterative gains off by {gain_gap:.3e}"),
    )?;

    let mut control_gap: f64 = 0.0;
    let mut cases: Vec<TeachingCase> = Vec::new();
    for spec in [
        lander_without_switch()?,
        make_scalar_toy(&ScalarToyParams::default()).map_err(err)?,
    ] {
        let GameDefinition::Linear(g) = spec.game.clone() else {
            return Err(format!("{} is not LQ", spec.name));
        };
        let EstimatorKind::Mle { alpha } = spec.estimator else {
            return Err(format!("{} has no gradient estimator", spec.name));
        };
        cases.push((
            g,
            spec.x0.clone(),
            spec.initial_beliefs.clone(),
            alpha,
            spec.weights.rho2,
            spec.weights.theta_star.clone(),
        ));
    }
    for _ in 0..8 {
        let g = random_game(&mut rng, 20)?;
        let x0 = vector(&mut rng, g.dims.state_dim);
        let beliefs = (1..g.dims.players())
            .map(|_| Belief::Point(vector(&mut rng, 1)))
            .collect();
        let (alpha, rho2) = (rng.random_range(0.1..0.6), rng.random_range(0.0..2.0));
        cases.push((g, x0, beliefs, alpha, rho2, vector(&mut rng, 1)));
    }
    for (k, (game, x0, beliefs, alpha, rho2, theta)) in cases.into_iter().enumerate() {
        let nash = solve_feedback_nash(&game).map_err(err)?;
        let weights =
            intent_games::teaching::TeachingWeights::new(1.0, rho2, theta.clone()).map_err(err)?;
        let kind = EstimatorKind::Mle { alpha };
        let gains = belief_gains(kind, &beliefs, &nash.policies).map_err(err)?;
        let problem =
            build_augmented_lq_from_gains(&game, &nash.policies, &gains, &weights).map_err(err)?;
        let exact = solve_affine_lqr(&problem).map_err(err)?;
        let z0 = AugmentedState::new(
            x0.clone(),
            beliefs.iter().map(|b| b.mean().clone()).collect(),
        )
        .to_vector();
        let (_, us) = problem.rollout_policy(&z0, &exact.policies, &theta);
        let options = IlqOptions {
            tol: 1e-10,
            ..IlqOptions::default()
        };
        let it = solve_ilqr_augmented(
            &GameDefinition::Linear(game),
            &nash.policies,
            kind,
            &beliefs,
            &weights,
            &x0,
            &options,
        )
        .map_err(|e| format!("case {k}: {e}"))?;
        for (a, b) in us.iter().zip(&it.nominal.controls) {
            control_gap = control_gap.max((a - &b[0]).amax());
        }
    }
    ensure(
        control_gap <= 1e-6,
        format!("(b) teaching controls off by {control_gap:.3e}"),
    )?;

    let (mut mean_gap, mut var_gap): (f64, f64) = (0.0, 0.0);
    for _ in 0..50 {
        let mean = rng.random_range(-2.0..2.0);
        let variance = rng.random_range(0.05..2.0);
        let noise = rng.random_range(0.1..2.0);
        let k_theta = rng.random_range(0.1..2.0) * if rng.random_bool(0.5) { 1.0 } else { -1.0 };
        let policy = PlayerPolicy {
            state_gain: DMatrix::from_element(1, 1, rng.random_range(-1.0..1.0)),
            intent_gain: DMatrix::from_element(1, 1, k_theta),
            offset: DVector::from_element(1, rng.random_range(-0.5..0.5)),
        };
        let x = vector(&mut rng, 1);
        let u = DVector::from_element(1, rng.random_range(-2.0..2.0));
        let prior = GaussianBelief::scalar(mean, variance).map_err(err)?;
        let post = gaussian_update(&prior, &x, &u, &policy, noise).map_err(err)?;
        let (gm, gv) =
            grid_posterior(mean, variance, &x, &u, &policy, noise, 10_000, 12.0).map_err(err)?;
        mean_gap = mean_gap.max((post.mean[0] - gm).abs());
        var_gap = var_gap.max((post.cov[(0, 0)] - gv).abs());
    }
    ensure(
        mean_gap <= 1e-3 && var_gap <= 1e-3,
        format!("(c) posterior off by {mean_gap:.3e} / {var_gap:.3e}"),
    )?;
    Ok(format!(
        "(a) {gain_gap:.1e} (b) {control_gap:.1e} (c) mean {mean_gap:.1e} var {var_gap:.1e}"
    ))
}

fn convergence_steps(
    exp: &Experiment,
    point: &PointResult,
    label: &str,
) -> Result<Option<usize>, String> {
    let run = point
        .runs
        .iter()
        .find(|r| r.label == label)
        .ok_or_else(|| format!("no {label} run"))?;
    let errors = post_switch_errors(&run.record, 1).map_err(err)?;
    Ok(first_below(&errors, exp.config.convergence_threshold))
}

fn steps(s: Option<usize>) -> usize {
    s.unwrap_or(usize::MAX)
}

fn ratio_sweep() -> Outcome {
    let (exp, points) = sweep("manipulation_ratio_sweep.toml")?;
    let p = &points[0];
    let ttc: Vec<Option<usize>> = ["active-ratio0", "active-ratio1", "active-ratio10"]
        .iter()
        .map(|l| convergence_steps(&exp, p, l))
        .collect::<Result<_, _>>()?;
    let passive = convergence_steps(&exp, p, "passive")?;
    let detail = format!("ratios 0/1/10 -> {ttc:?}, passive {passive:?}");
    ensure(
        ttc.iter().all(Option::is_some),
        format!("a run never converges: {detail}"),
    )?;
    ensure(
        ttc.windows(2).all(|w| steps(w[1]) < steps(w[0])),
        format!("not decreasing: {detail}"),
    )?;
    ensure(
        steps(ttc[1]) < steps(passive) && steps(ttc[2]) < steps(passive),
        format!("passive not slower: {detail}"),
    )?;
    Ok(detail)
}

fn intent_switch() -> Outcome {
    let (exp, points) = sweep("lander_intent_switch.toml")?;
    let p = &points[0];
    let switch = exp
        .spec
        .switch
        .as_ref()
        .ok_or("no intent switch configured")?;
    let jump = (switch.theta[0] - p.theta).abs();
    ensure(
        (exp.config.convergence_threshold - 0.05 * jump).abs() < 1e-12,
        "threshold is not 5% of the jump",
    )?;
    let active = convergence_steps(&exp, p, "active")?;
    let passive = convergence_steps(&exp, p, "passive")?;
    let detail = format!(
        "steps after switch: active {active:?}, passive {passive:?} (threshold {})",
        exp.config.convergence_threshold
    );
    ensure(
        active.is_some(),
        format!("active never converges: {detail}"),
    )?;
    ensure(
        steps(active) < steps(passive),
        format!("active not faster: {detail}"),
    )?;
    Ok(detail)
}

fn regret_of(p: &PointResult, label: &str) -> Result<f64, String> {
    let run = p
        .runs
        .iter()
        .find(|r| r.label == label)
        .ok_or_else(|| format!("no {label} run"))?;
    intent_games::simulation::regret(&run.record, &p.reference, 0).map_err(err)
}

fn platooning_regret() -> Outcome {
    let (_, points) = sweep("platooning_regret.toml")?;
    ensure(
        points.len() == 5,
        format!("grid has {} points", points.len()),
    )?;
    let mut detail = Vec::new();
    for p in &points {
        let (a, b) = (regret_of(p, "active")?, regret_of(p, "passive")?);
        detail.push(format!("{}: {a:.3}<={b:.3}", p.theta));
        ensure(
            a <= b,
            format!("theta {}: active regret {a} > passive {b}", p.theta),
        )?;
    }
    Ok(detail.join(" "))
}

fn furniture_orientation() -> Outcome {
    let (exp, points) = sweep("furniture_orientation.toml")?;
    let angle = 4;
    ensure(exp.spec.x0[angle] == 0.6, "initial angle is not 0.6")?;
    let mut detail = Vec::new();
    for p in &points {
        let record = |label: &str| {
            p.runs
                .iter()
                .find(|r| r.label == label)
                .map(|r| &r.record)
                .ok_or_else(|| format!("no {label} run"))
        };
        let (a, b) = (record("active")?, record("passive")?);
        let (ca, cb) = (a.total_cost(0), b.total_cost(0));
        let off = |r: &intent_games::simulation::RolloutRecord| {
            (r.states.last().unwrap()[angle] - p.theta).abs()
        };
        detail.push(format!(
            "{}: cost {ca:.3}<{cb:.3} angle err {:.4}<{:.4}",
            p.theta,
            off(a),
            off(b)
        ));
        ensure(
            ca < cb,
            format!("theta {}: active task cost {ca} >= passive {cb}", p.theta),
        )?;
        ensure(
            off(a) < off(b),
            format!("theta {}: terminal angle not closer under active", p.theta),
        )?;
    }
    Ok(detail.join("; "))
}

fn prop2() -> Outcome {
    let spec = make_scalar_toy(&ScalarToyParams::default()).map_err(err)?;
    let a = check_demonstration_advantage(&spec).map_err(err)?;
    ensure(
        a.jacobian_norm > JACOBIAN_THRESHOLD,
        format!("jacobian {:.3e} too small", a.jacobian_norm),
    )?;
    ensure(
        a.gap() > GAP_THRESHOLD,
        format!("gap {:.3e} too small", a.gap()),
    )?;
    let inert = make_scalar_toy(&ScalarToyParams {
        alpha: 0.0,
        ..Default::default()
    })
    .map_err(err)?;
    let b = check_demonstration_advantage(&inert).map_err(err)?;
    ensure(
        b.gap().abs() <= 1e-8,
        format!("alpha = 0 gap {:.3e}", b.gap()),
    )?;
    Ok(format!(
        "jacobian {:.3e} gap {:.3e}; alpha 0 gap {:.1e}",
        a.jacobian_norm,
        a.gap(),
        b.gap()
    ))
}

fn bench() -> Outcome {
    let dir = tempfile::tempdir().map_err(err)?;
    let out = Command::new(env!("CARGO_BIN_EXE_intent-games"))
        .args(["bench", "--config"])
        .arg(configs().join("bench_manipulation.toml"))
        .arg("--out")
        .arg(dir.path())
        .output()
        .map_err(err)?;
    ensure(
        out.status.success(),
        format!("bench failed: {}", String::from_utf8_lossy(&out.stderr)),
    )?;
    let mut reader = csv::Reader::from_path(dir.path().join("bench.csv")).map_err(err)?;
    let headers = reader.headers().map_err(err)?.clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or(format!("no {name} column"))
    };
    let (phase, p95) = (col("phase")?, col("p95_s")?);
    for row in reader.records() {
        let row = row.map_err(err)?;
        if &row[phase] == "action" {
            let v: f64 = row[p95].parse().map_err(err)?;
            ensure(v < 0.1, format!("action p95 {v:.3e} s"))?;
            return Ok(format!("action p95 {v:.3e} s"));
        }
    }
    Err("no action timing in bench.csv".into())
}

fn fidelity() -> Outcome {
    let mut detail = Vec::new();
    for name in EnvironmentName::ALL {
        let cfg = intent_games_cli::config::default_config(name).map_err(err)?;
        let spec = prepare(cfg, false).map_err(err)?.spec;
        let policies = spec
            .solve(&spec.weights.theta_star, &IlqOptions::default())
            .map_err(err)?;
        let worst = derivative_fidelity(&spec, &policies, 50, 11).map_err(err)?;
        detail.push(format!("{name} {worst:.1e}"));
        ensure(
            worst < 1e-4,
            format!("{name}: derivative error {worst:.3e}"),
        )?;
    }
    Ok(detail.join(", "))
}

fn main() -> ExitCode {
    type Criterion = (&'static str, Duration, fn() -> Outcome);
    let criteria: [Criterion; 10] = [
        (
            "prop1 contraction on the lander",
            Duration::from_secs(1),
            contraction,
        ),
        (
            "feedback Nash resists unilateral deviation",
            Duration::from_secs(30),
            equilibrium_deviation,
        ),
        (
            "oracle equivalences",
            Duration::from_secs(60),
            oracle_equivalences,
        ),
        (
            "manipulation convergence vs demonstration ratio",
            Duration::from_secs(60),
            ratio_sweep,
        ),
        (
            "lander catches up after an intent switch",
            Duration::from_secs(10),
            intent_switch,
        ),
        (
            "platooning lead regret",
            Duration::from_secs(300),
            platooning_regret,
        ),
        (
            "furniture task cost and final angle",
            Duration::from_secs(120),
            furniture_orientation,
        ),
        (
            "prop2 strict advantage on the scalar toy",
            Duration::from_secs(5),
            prop2,
        ),
        ("bench teaching action p95", Duration::from_secs(30), bench),
        ("derivative fidelity", Duration::from_secs(60), fidelity),
    ];
    let mut failed = 0;
    for (k, (name, budget, check)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = check();
        let elapsed = start.elapsed();
        let (ok, detail) = match outcome {
            Ok(d) if elapsed <= *budget => (true, d),
            Ok(d) => (false, format!("{d}; over budget")),
            Err(e) => (false, e),
        };
        failed += usize::from(!ok);
        println!(
            "{} {:>2} {name}: {detail} [{:.3} s / {} s]",
            if ok { "PASS" } else { "FAIL" },
            k + 1,
            elapsed.as_secs_f64(),
            budget.as_secs()
        );
    }
    println!(
        "{} of {} criteria passed",
        criteria.len() - failed,
        criteria.len()
    );
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
