use approx::assert_abs_diff_eq;
use nalgebra::{dvector, DMatrix};
use qnn::network::ActivationParams;
use qnn::sdp::SolverConfig;
use qnn::sysid::{autocorrelation, build_sysid_matrices, identify, IoLog, StateSpaceModel};
use qnn::training::TrainingConfig;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Representable SISO generator over `[u, y, 1]`.
fn generator(act: &ActivationParams) -> StateSpaceModel {
    let corner = act.c / act.a * (0.02 + 0.05);
    let z = DMatrix::from_row_slice(3, 3, &[0.02, 0.05, 0.15, 0.05, 0.05, 0.125, 0.15, 0.125, corner]);
    StateSpaceModel::new(1, 1, 1, vec![z]).unwrap()
}

fn excite(model: &StateSpaceModel, len: usize, seed: u64) -> IoLog {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let u = DMatrix::from_fn(len, 1, |_, _| rng.gen_range(-1.0..1.0));
    let traj = model.simulate(&dvector![0.0], &u).unwrap();
    let y = DMatrix::from_fn(len, 1, |t, _| traj.states[t][0]);
    IoLog::new(u, y, Some(0.1)).unwrap()
}

#[test]
fn recovers_generator_parameters() {
    let act = ActivationParams::default();
    let truth = generator(&act);
    let log = excite(&truth, 60, 5);
    let cfg = TrainingConfig {
        activation: act,
        solver: SolverConfig { eps_abs: 1e-10, ..Default::default() },
        ..Default::default()
    };
    let (model, _) = identify(&log, 1, &cfg).unwrap();
    assert_abs_diff_eq!(model.zbar(0), truth.zbar(0), epsilon = 1e-4);
}

#[test]
fn one_step_prediction_matches_targets() {
    let truth = generator(&ActivationParams::default());
    let log = excite(&truth, 40, 9);
    let (x, y) = build_sysid_matrices(&log, 1).unwrap();
    for r in 0..x.nrows() {
        let state = dvector![x[(r, 1)]];
        let u = dvector![x[(r, 0)]];
        assert_abs_diff_eq!(truth.predict(&state, &u).unwrap()[0], y[(r, 0)], epsilon = 1e-12);
    }
}

#[test]
fn delayed_state_shifts_outputs() {
    // y⁺ = 0.5·y(t) + 0.25·y(t−1) + u over [u, y(t−1), y(t), 1]
    let mut z = DMatrix::zeros(4, 4);
    z[(0, 3)] = 0.5;
    z[(1, 3)] = 0.125;
    z[(2, 3)] = 0.25;
    let z = &z + z.transpose();
    let model = StateSpaceModel::new(2, 1, 1, vec![z]).unwrap();
    let u = DMatrix::from_column_slice(5, 1, &[1.0, 0.0, 0.0, -1.0, 0.0]);
    let traj = model.simulate(&dvector![0.0, 0.0], &u).unwrap();
    for t in 1..traj.states.len() {
        assert_eq!(traj.states[t][0], traj.states[t - 1][1]);
        let x = &traj.states[t - 1];
        assert_abs_diff_eq!(traj.states[t][1], 0.5 * x[1] + 0.25 * x[0] + u[(t - 1, 0)], epsilon = 1e-15);
    }
}

#[test]
fn white_input_is_uncorrelated() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let u: Vec<f64> = (0..5000).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let r = autocorrelation(&u, 5).unwrap();
    assert_abs_diff_eq!(r[0], 1.0, epsilon = 1e-12);
    for v in &r[1..] {
        assert!(v.abs() < 0.05);
    }
}
