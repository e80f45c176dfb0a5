mod common;

use nalgebra::DVector;
use tendon_hand::config::GestureFile;
use tendon_hand::controller::{Controller, ControllerConfig, ControllerState};

fn config(n: usize, kp: f64, ki: f64) -> ControllerConfig {
    ControllerConfig {
        kp: vec![kp; n],
        ki: vec![ki; n],
        ..ControllerConfig::uniform(n, kp)
    }
}

fn flexed(model: &tendon_hand::tendon_model::TendonModel) -> Vec<f64> {
    let file = GestureFile::embedded().unwrap();
    file.get("G5").unwrap().joint_vector(model.finger()).unwrap()
}

#[test]
fn zero_error_leaves_the_command_alone() {
    let model = common::f2();
    let ctl = Controller::new(&model, config(5, 0.3, 0.03)).unwrap();
    let mut state = ControllerState::at_rest(5, 5);
    state.delta_l = DVector::from_vec(vec![1.0, -2.0, 0.5, 0.0, 3.0]);
    let theta = flexed(&model);
    let next = ctl.pi_step(&state, &theta, &theta).unwrap();
    assert_eq!(next.delta_l, state.delta_l);
    assert_eq!(next.integral, state.integral);
}

#[test]
fn proportional_step_is_the_jacobian_law() {
    let model = common::f2();
    let kp = 0.25;
    let ctl = Controller::new(&model, config(5, kp, 0.0)).unwrap();
    let state = ControllerState::at_rest(5, 5);
    let theta_hat = model.finger().rest_pose().to_vec();
    let theta_d = flexed(&model);
    let next = ctl.pi_step(&state, &theta_hat, &theta_d).unwrap();
    let err = DVector::from_iterator(5, theta_d.iter().zip(&theta_hat).map(|(d, e)| kp * (d - e)));
    let expected = -(model.moment_arm_matrix(&theta_hat).unwrap() * err);
    assert!((next.delta_l - expected).amax() < 1e-15);
}

#[test]
fn pitch_error_coils_the_deep_flexor() {
    let model = common::f2();
    let ctl = Controller::new(&model, config(5, 0.2, 0.0)).unwrap();
    let mcp = model.finger().joints().index_of("MCP Pitch").unwrap();
    let theta_hat = model.finger().rest_pose().to_vec();
    let mut theta_d = theta_hat.clone();
    theta_d[mcp] += 0.1;
    let r = model.moment_arm_matrix(&theta_hat).unwrap();
    assert!(r[(0, mcp)] < 0.0, "flexor shortens when the MCP flexes");
    let next = ctl.pi_step(&ControllerState::at_rest(5, 5), &theta_hat, &theta_d).unwrap();
    assert!(next.delta_l[0] > 0.0);
}

#[test]
fn kinematic_feedforward_signs() {
    let model = common::f2();
    let ctl = Controller::new(&model, config(5, 0.0, 0.0)).unwrap();
    let rest = ctl.kinematic_feedforward(model.finger().rest_pose()).unwrap();
    assert!(rest.amax() < 1e-12);
    let ff = ctl.kinematic_feedforward(&flexed(&model)).unwrap();
    let idx = |m: &str| model.graph().muscles.iter().position(|x| x == m).unwrap();
    assert!(ff[idx("FDP")] > 0.0 && ff[idx("FDS")] > 0.0, "{ff}");
    assert!(ff[idx("EDC")] < 0.0, "{ff}");
}

#[test]
fn constant_reference_adds_nothing() {
    let model = common::f2();
    let ctl = Controller::new(&model, config(5, 0.0, 0.0)).unwrap();
    let theta = flexed(&model);
    let ff = ctl.kinematic_feedforward(&theta).unwrap();
    let state = ControllerState {
        delta_l: ff.clone(),
        integral: DVector::zeros(5),
        prev_ff: ff.clone(),
    };
    let next = ctl.ff_pi_step(&state, &theta, &theta, &ff).unwrap();
    assert_eq!(next.delta_l, state.delta_l);
}

#[test]
fn unchanged_feedforward_reduces_to_pi() {
    let model = common::f2();
    let ctl = Controller::new(&model, config(5, 0.2, 0.02)).unwrap();
    let mut state = ControllerState::at_rest(5, 5);
    state.prev_ff = DVector::from_vec(vec![0.3, 0.1, 0.0, -0.2, 0.1]);
    let theta_hat = model.finger().rest_pose().to_vec();
    let theta_d = flexed(&model);
    let a = ctl.pi_step(&state, &theta_hat, &theta_d).unwrap();
    let b = ctl.ff_pi_step(&state, &theta_hat, &theta_d, &state.prev_ff.clone()).unwrap();
    assert_eq!(a.delta_l, b.delta_l);
    assert_eq!(a.integral, b.integral);
}

#[test]
fn zero_gains_replay_the_feedforward_sequence() {
    let model = common::f2();
    let ctl = Controller::new(&model, config(5, 0.0, 0.0)).unwrap();
    let plan = common::default_plan(model.finger(), 2.0, 3.0);
    let h = 0.01;
    let mut state = ControllerState::at_rest(5, 5);
    state.prev_ff = ctl.feedforward(&plan, 0.0).unwrap();
    state.delta_l = state.prev_ff.clone();
    // The estimate is irrelevant with zero gains.
    let junk = vec![0.1; 5];
    for k in 1..=(plan.duration() / h).round() as usize {
        let t = k as f64 * h;
        let ff = ctl.feedforward(&plan, t).unwrap();
        state = ctl.ff_pi_step(&state, &junk, &plan.reference(t), &ff).unwrap();
        let ideal = model.tendon_lengths(model.finger().rest_pose()).unwrap()
            - model.tendon_lengths(&plan.reference(t)).unwrap();
        assert!((&state.delta_l - ideal).amax() < 1e-9, "step {k}");
    }
}

#[test]
fn reference_endpoints_and_midpoint() {
    let model = common::f2();
    let plan = common::default_plan(model.finger(), 2.0, 3.0);
    let rest = model.finger().rest_pose();
    assert_eq!(plan.reference(0.0), rest);
    let g1 = &plan.gestures()[0].theta_d;
    assert_eq!(&plan.reference(2.0), g1);
    let mid = plan.reference(1.0);
    for i in 0..5 {
        assert!((mid[i] - 0.5 * (rest[i] + g1[i])).abs() < 1e-15);
    }
}
