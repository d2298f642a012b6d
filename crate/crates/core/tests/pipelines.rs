use approx::assert_abs_diff_eq;
use nalgebra::{dvector, DMatrix, DVector};
use qnn::control::lyapunov::VerifyMethod;
use qnn::control::{ControlError, Controller, LmiConfig, Region};
use qnn::data_io::{parse_delimited, quadrotor_model, Dataset, ModelFile};
use qnn::decomposition::DecompositionConfig;
use qnn::network::{ActivationParams, QuadraticNetwork};
use qnn::pipelines::*;
use qnn::sdp::SolverConfig;
use qnn::sysid::{IoLog, StateSpaceModel};
use qnn::training::{Loss, TrainingConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn example_one_data() -> Dataset {
    let xs = [-1.0, 0.0, 1.0];
    let y: Vec<f64> = xs.iter().map(|x| 0.0324 * x * x + 1.0482 * x + 0.1619).collect();
    Dataset::new(DMatrix::from_column_slice(3, 1, &xs), DMatrix::from_column_slice(3, 1, &y)).unwrap()
}

fn example_one_net() -> QuadraticNetwork {
    let z = DMatrix::from_row_slice(2, 2, &[0.0324, 0.5241, 0.5241, 0.1619]);
    QuadraticNetwork::from_matrices(ActivationParams::default(), &[z]).unwrap()
}

#[test]
fn regression_reports_two_neurons() {
    let cfg = TrainingConfig { beta: 1e-4, ..Default::default() };
    let mut run = run_regression(&example_one_data(), &cfg, &DecompositionConfig::default()).unwrap();
    assert_eq!(run.report.get("neurons"), Some(2.0));
    assert!(run.report.get("max_abs_residual").unwrap() < 1e-3);

    // metrics are recomputable from the saved artifacts
    let dir = tempfile::tempdir().unwrap();
    run.save(dir.path()).unwrap();
    let net = ModelFile::load(dir.path().join("model.json")).unwrap().network().unwrap();
    let table = parse_delimited(&std::fs::read_to_string(dir.path().join("predictions.txt")).unwrap()).unwrap();
    let pred = net.evaluate_rows(&table.columns(0, 1).into_owned()).unwrap();
    let resid = (&pred - table.column(1)).amax();
    assert!((resid - run.report.get("max_abs_residual").unwrap()).abs() <= 1e-12);
    assert_eq!(pred.column(0), table.column(2));
}

#[test]
fn single_sample_fits_exactly() {
    let d = Dataset::new(DMatrix::from_element(1, 1, 0.4), DMatrix::from_element(1, 1, 2.0)).unwrap();
    let run = run_regression(&d, &TrainingConfig::default(), &DecompositionConfig::default()).unwrap();
    assert!(run.report.get("max_abs_residual").unwrap() < 1e-6);
}

#[test]
fn regularizer_is_nonincreasing_in_beta() {
    let mut last = f64::INFINITY;
    for beta in [0.001, 0.1, 10.0] {
        let cfg = TrainingConfig { beta, ..Default::default() };
        let run = run_regression(&example_one_data(), &cfg, &DecompositionConfig::default()).unwrap();
        let reg = run.report.get("regularizer").unwrap();
        assert!(reg <= last + 1e-6, "β = {beta}: {reg} > {last}");
        last = reg;
    }
}

fn two_class_toy() -> Dataset {
    let xs: Vec<f64> = (0..10).map(|k| if k < 5 { -1.0 - k as f64 * 0.1 } else { 1.0 + k as f64 * 0.1 }).collect();
    let labels: Vec<usize> = (0..10).map(|k| usize::from(k >= 5)).collect();
    let y = DMatrix::from_fn(10, 2, |i, j| f64::from(u8::from(labels[i] == j)));
    let mut d = Dataset::new(DMatrix::from_column_slice(10, 1, &xs), y).unwrap();
    d.labels = Some(labels);
    d
}

#[test]
fn separable_classes_are_learned() {
    let d = two_class_toy();
    for loss in [Loss::SquaredL2, Loss::InfinityNorm] {
        let cfg = TrainingConfig { loss, ..Default::default() };
        let run = run_classification(&d, &d, &cfg).unwrap();
        assert_eq!(run.report.get("test_accuracy"), Some(1.0));
        assert!(run.report.get("test_accuracy") >= run.report.get("train_accuracy"));
    }
}

#[test]
fn ties_resolve_to_smallest_class() {
    let net = QuadraticNetwork::zeros(2, 4, ActivationParams::default());
    let x = DMatrix::from_row_slice(2, 2, &[1.0, -2.0, 0.5, 0.0]);
    assert_eq!(classify(&net, &x, false).unwrap(), vec![0, 0]);
}

/// `y⁺ = 0.3y(t) − 0.2y(t−1) + 0.05y(t)² + 0.5u + 0.1u·y(t−1)`, a
/// representable two-delay generator.
fn second_order(act: &ActivationParams) -> StateSpaceModel {
    // regressor [u, y(t−1), y(t), 1]
    let mut z = DMatrix::zeros(4, 4);
    z[(2, 2)] = 0.05;
    z[(0, 1)] = 0.05;
    z[(1, 0)] = 0.05;
    z[(2, 3)] = 0.15;
    z[(3, 2)] = 0.15;
    z[(1, 3)] = -0.1;
    z[(3, 1)] = -0.1;
    z[(0, 3)] = 0.25;
    z[(3, 0)] = 0.25;
    z[(3, 3)] = act.c / act.a * 0.05;
    StateSpaceModel::new(2, 1, 1, vec![z]).unwrap()
}

fn excite(model: &StateSpaceModel, len: usize) -> IoLog {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let u = DMatrix::from_fn(len, 1, |_, _| rng.gen_range(-1.0..1.0));
    let traj = model.simulate(&DVector::zeros(model.n_states()), &u).unwrap();
    let y = DMatrix::from_fn(len, 1, |t, _| traj.states[t][model.n_states() - 1]);
    IoLog::new(u, y, None).unwrap()
}

#[test]
fn sysid_recovers_noiseless_generator() {
    let act = ActivationParams::default();
    let log = excite(&second_order(&act), 300);
    let cfg = TrainingConfig { solver: SolverConfig { eps_abs: 1e-10, ..Default::default() }, ..Default::default() };
    let mut run = run_sysid(&log, 2, 0.12, &cfg).unwrap();
    assert!(run.report.get("relative_error").unwrap() <= 1e-3);

    let one = run_sysid(&log, 1, 0.12, &cfg).unwrap();
    assert!(one.report.get("relative_error").unwrap() > run.report.get("relative_error").unwrap());

    let dir = tempfile::tempdir().unwrap();
    run.save(dir.path()).unwrap();
    let back = ModelFile::load(dir.path().join("model.json")).unwrap().state_space().unwrap();
    assert_eq!(back, run.model);
}

#[test]
fn full_training_fraction_reports_in_sample_fit() {
    let act = ActivationParams::default();
    let log = excite(&second_order(&act), 40);
    let run = run_sysid(&log, 2, 1.0, &TrainingConfig::default()).unwrap();
    assert_eq!(run.report.get("train_samples"), Some(40.0));
    assert!(matches!(run_sysid(&log, 2, 0.0, &TrainingConfig::default()), Err(PipelineError::InvalidArgument(_))));
}

#[test]
fn quadrotor_lmi_run_reaches_origin() {
    let model = quadrotor_model(0.102, 0.0023, 1.0);
    let mut run = run_synthesis(&model, &SynthesisMode::Lmi(LmiConfig::default()), &[dvector![-10.0, 0.0]], 300).unwrap();
    let traj = &run.trajectories[0];
    assert!(traj.last().unwrap().norm() < 1e-3);
    // the certificate decreases at every step and the position never overshoots
    let p = DMatrix::from_row_slice(2, 2, &run.certificate.p);
    let v = qnn::control::LyapunovCandidate::new(p.try_inverse().unwrap(), DVector::zeros(2)).unwrap();
    let values: Vec<f64> = traj.iter().map(|x| v.value(x)).collect();
    assert!(values.windows(2).all(|w| w[1] < w[0] || w[0] < 1e-20));
    assert!(traj.windows(2).all(|w| w[1][0] >= w[0][0] && w[1][0] <= 0.0));

    let dir = tempfile::tempdir().unwrap();
    let file = ModelFile::from_model(&model, ActivationParams::default()).unwrap();
    run.save(dir.path(), &file).unwrap();
    let back = ModelFile::load(dir.path().join("controller.json")).unwrap();
    assert_eq!(back.controller.unwrap().to_controller().unwrap(), run.controller);
}

fn example_five() -> StateSpaceModel {
    StateSpaceModel::new(1, 1, 1, vec![DMatrix::from_row_slice(3, 3, &[0.0, 0.5, 0.0, 0.5, 1.0, 0.0, 0.0, 0.0, 0.0])])
        .unwrap()
}

#[test]
fn dead_beat_verification_run() {
    let mode = SynthesisMode::Verify {
        controller: Controller::constant(&DMatrix::from_element(1, 1, -1.0), dvector![0.0], dvector![0.0]),
        p: DMatrix::identity(1, 1),
        region: Region::Global,
        method: VerifyMethod::Sos(SolverConfig::default()),
    };
    let x0s = [dvector![-2.0], dvector![0.5], dvector![3.0]];
    let run = run_synthesis(&example_five(), &mode, &x0s, 3).unwrap();
    assert!(run.dead_beat);
    assert!(run.report.notes.iter().any(|n| n == "certificate: global, dead-beat"));
    for traj in &run.trajectories {
        assert_eq!(traj[1][0], 0.0);
    }
}

#[test]
fn quadratic_input_is_rejected() {
    let model = StateSpaceModel::new(1, 1, 1, vec![DMatrix::from_row_slice(3, 3, &[0.3, 0.0, 0.0, 0.0, 0.5, 0.0, 0.0, 0.0, 0.0])])
        .unwrap();
    let err = run_synthesis(&model, &SynthesisMode::Lmi(LmiConfig::default()), &[], 0).unwrap_err();
    match err {
        PipelineError::Control(ControlError::AssumptionViolated { norm, .. }) => assert_abs_diff_eq!(norm, 0.3),
        other => panic!("unexpected {other:?}"),
    }
}

#[test]
fn lipschitz_bounds() {
    let (report, bounds) = run_lipschitz(&example_one_net(), 1.0).unwrap();
    assert_abs_diff_eq!(bounds[0], 1.7684, epsilon = 1e-4);
    assert_eq!(report.get("max"), Some(bounds[0]));

    let (_, zero) = run_lipschitz(&QuadraticNetwork::zeros(3, 2, ActivationParams::default()), 5.0).unwrap();
    assert_eq!(zero, vec![0.0, 0.0]);

    let (_, scaled) = run_lipschitz(&example_one_net().scaled(3.0), 1.0).unwrap();
    assert_abs_diff_eq!(scaled[0], 3.0 * bounds[0], epsilon = 1e-12);
}
