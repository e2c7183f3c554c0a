use intent_games::environments::*;
use intent_games::estimation::contraction_factor;
use intent_games::ilq::{solve_ilq, IlqOptions};
use intent_games::lq_nash::solve_feedback_nash;
use intent_games::model::GameDefinition;
use intent_games::simulation::{dynamics_residual, rollout, InteractionModel, RolloutSetup};
use intent_games::teaching::plan_teaching;
use intent_games::Error;
use nalgebra::DVector;

fn all_specs() -> Vec<EnvironmentSpec> {
    vec![
        make_manipulation(&ManipulationParams::default()).unwrap(),
        make_lunar_lander(&LunarLanderParams::default()).unwrap(),
        make_furniture(&FurnitureParams::default()).unwrap(),
        make_platooning(&PlatooningParams::default()).unwrap(),
        make_scalar_toy(&ScalarToyParams::default()).unwrap(),
    ]
}

#[test]
fn default_dimensions() {
    let m = make_manipulation(&ManipulationParams::default()).unwrap();
    assert_eq!(m.game.dims().state_dim, 8);
    assert_eq!(m.game.dims().players(), 2);
    assert_eq!(m.game.dims().intent_dim, 1);
    assert_eq!(m.belief_kind(), BeliefKind::Point);
    assert_eq!(m.initial_beliefs[0].mean()[0], 0.0);

    let l = make_lunar_lander(&LunarLanderParams::default()).unwrap();
    assert_eq!(l.game.dims().state_dim, 4);
    assert_eq!(l.game.dims().control_dims, vec![1, 2]);
    assert_eq!(l.weights.theta_star[0], 25.0);
    assert_eq!((l.weights.rho1, l.weights.rho2), (1.0, 4.0));
    let switch = l.switch.unwrap();
    assert_eq!((switch.stage, switch.theta[0]), (20, 50.0));

    let f = make_furniture(&FurnitureParams::default()).unwrap();
    assert_eq!(f.game.dims().state_dim, 5);
    assert_eq!(f.x0[4], 0.6);
    assert_eq!(f.belief_kind(), BeliefKind::Gaussian);
    assert_eq!(f.initial_beliefs[0].mean()[0], 0.1);
    assert_eq!(f.initial_beliefs[0].covariance().unwrap()[(0, 0)], 0.4);
    assert_eq!(f.theta_grid, vec![0.3, 1.1]);
    assert_eq!(f.weights.rho2, 0.0);

    let p = make_platooning(&PlatooningParams::default()).unwrap();
    assert_eq!(p.game.dims().state_dim, 12);
    assert_eq!(p.game.dims().players(), 3);
    assert_eq!(p.initial_beliefs.len(), 2);
    assert_eq!(p.theta_grid, vec![-1.0, -0.5, 0.0, 0.5, 1.0]);
}

#[test]
fn names_round_trip() {
    for name in EnvironmentName::ALL {
        assert_eq!(name.as_str().parse::<EnvironmentName>().unwrap(), name);
    }
    assert!("warehouse".parse::<EnvironmentName>().is_err());
}

#[test]
fn rejects_non_positive_time_step() {
    let bad = |r: Result<EnvironmentSpec, Error>| matches!(r, Err(Error::InvalidInput(_)));
    assert!(bad(make_manipulation(&ManipulationParams {
        dt: 0.0,
        ..Default::default()
    })));
    assert!(bad(make_lunar_lander(&LunarLanderParams {
        dt: -0.1,
        ..Default::default()
    })));
    assert!(bad(make_furniture(&FurnitureParams {
        dt: 0.0,
        ..Default::default()
    })));
    assert!(bad(make_platooning(&PlatooningParams {
        dt: 0.0,
        ..Default::default()
    })));
}

#[test]
fn lander_is_at_rest_without_thrust_or_gravity() {
    let spec = make_lunar_lander(&LunarLanderParams {
        gravity: 0.0,
        initial_state: vec![3.0, 0.0, 10.0, 0.0],
        ..Default::default()
    })
    .unwrap();
    let GameDefinition::Linear(g) = &spec.game else {
        panic!("lander must be linear")
    };
    let zero = [DVector::zeros(1), DVector::zeros(2)];
    for stage in &g.stages {
        assert_eq!(stage.apply(&spec.x0, &zero), spec.x0);
    }
}

#[test]
fn lander_is_exactly_lq() {
    let spec = make_lunar_lander(&LunarLanderParams::default()).unwrap();
    let GameDefinition::Linear(g) = &spec.game else {
        panic!("lander must be linear")
    };
    let exact = solve_feedback_nash(g).unwrap();
    let it = solve_ilq(
        &g.as_nonlinear(),
        &spec.weights.theta_star,
        &spec.x0,
        None,
        &IlqOptions::default(),
    )
    .unwrap();
    assert!(it.state.converged);
    assert!(it.state.iterations <= 1);
    for (a, b) in exact.policies.iter().zip(&it.policies) {
        for (pa, pb) in a.players.iter().zip(&b.players) {
            assert!((&pa.state_gain - &pb.state_gain).amax() < 1e-6);
            assert!((&pa.intent_gain - &pb.intent_gain).amax() < 1e-6);
        }
    }
}

#[test]
fn lander_default_gains_contract() {
    let spec = make_lunar_lander(&LunarLanderParams::default()).unwrap();
    let policies = spec
        .solve(&spec.weights.theta_star, &IlqOptions::default())
        .unwrap();
    let player1: Vec<_> = policies.iter().map(|s| s.players[0].clone()).collect();
    let report = contraction_factor(&player1, 0.5).unwrap();
    assert!(report.certifies(), "{report:?}");
    assert!(report.factor < 0.6);
}

#[test]
fn every_environment_solves_end_to_end() {
    for spec in all_specs() {
        let theta = spec.weights.theta_star.clone();
        let policies = spec.solve(&theta, &IlqOptions::default()).unwrap();
        let teaching = plan_teaching(
            &spec.game,
            &policies,
            spec.estimator,
            &spec.initial_beliefs,
            &spec.weights,
            &spec.x0,
            &IlqOptions::default(),
        )
        .unwrap();
        let setup = RolloutSetup {
            x0: spec.x0.clone(),
            beliefs: spec.initial_beliefs.clone(),
            theta_star: theta,
            switch: spec.switch.clone(),
            noise_std: 0.0,
            seed: 0,
        };
        for model in [
            InteractionModel::Active(spec.weights.clone()),
            InteractionModel::Passive,
            InteractionModel::CompleteInfo,
        ] {
            let rec = rollout(
                &spec.game,
                &policies,
                spec.estimator,
                &model,
                Some(&teaching),
                &setup,
            )
            .unwrap();
            assert!(
                rec.states.iter().all(|x| x.iter().all(|v| v.is_finite())),
                "{}",
                spec.name
            );
            assert!(dynamics_residual(&spec.game, &rec).unwrap() < 1e-9);
        }
    }
}

#[test]
fn symmetric_followers_hold_identical_beliefs() {
    let spec = make_platooning(&PlatooningParams::default()).unwrap();
    let theta = spec.weights.theta_star.clone();
    let policies = spec.solve(&theta, &IlqOptions::default()).unwrap();
    let setup = RolloutSetup {
        x0: spec.x0.clone(),
        beliefs: spec.initial_beliefs.clone(),
        theta_star: theta,
        switch: None,
        noise_std: 0.0,
        seed: 0,
    };
    let rec = rollout(
        &spec.game,
        &policies,
        spec.estimator,
        &InteractionModel::Passive,
        None,
        &setup,
    )
    .unwrap();
    for beliefs in rec.beliefs.unwrap() {
        assert!((beliefs[0].mean() - beliefs[1].mean()).amax() <= 1e-8);
        assert!(
            (beliefs[0].covariance().unwrap() - beliefs[1].covariance().unwrap()).amax() <= 1e-8
        );
    }
}

#[test]
fn analytic_derivatives_match_finite_differences() {
    for spec in all_specs() {
        let policies = spec
            .solve(&spec.weights.theta_star, &IlqOptions::default())
            .unwrap();
        let err = derivative_fidelity(&spec, &policies, 20, 7).unwrap();
        assert!(err < 1e-4, "{}: {err:e}", spec.name);
    }
}
