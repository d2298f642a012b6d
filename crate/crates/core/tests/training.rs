use approx::assert_abs_diff_eq;
use nalgebra::{DMatrix, DVector};
use qnn::network::{ActivationParams, QuadraticNetwork};
use qnn::training::{
    minimal_neuron_count, primal_descent_oracle, train, Loss, TrainingConfig,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn example_data() -> (DMatrix<f64>, DMatrix<f64>) {
    let xs = [-1.0, 0.0, 1.0];
    let y: Vec<f64> = xs.iter().map(|x| 0.0324 * x * x + 1.0482 * x + 0.1619).collect();
    (DMatrix::from_column_slice(3, 1, &xs), DMatrix::from_column_slice(3, 1, &y))
}

/// Least squares over (Z¹, Z²) with the corner tied to the trace:
/// ŷ = (a x² + c) Z¹ + b x Z².
fn siso_oracle(x: &[f64], y: &[f64], act: &ActivationParams) -> DMatrix<f64> {
    let a = DMatrix::from_fn(x.len(), 2, |i, j| {
        if j == 0 {
            act.a * x[i] * x[i] + act.c
        } else {
            act.b * x[i]
        }
    });
    let sol = a.clone().svd(true, true).solve(&DVector::from_column_slice(y), 1e-14).unwrap();
    let (z1, z2) = (sol[0], sol[1]);
    DMatrix::from_row_slice(2, 2, &[act.a * z1, 0.5 * act.b * z2, 0.5 * act.b * z2, act.c * z1])
}

#[test]
fn recovers_least_squares_oracle_on_three_points() {
    let (x, y) = example_data();
    let act = ActivationParams::default();
    let out = train(&x, &y, &TrainingConfig::default()).unwrap();
    let oracle = siso_oracle(x.as_slice(), y.as_slice(), &act);
    let z = out.network.zbar(0);
    assert_abs_diff_eq!(z, oracle, epsilon = 1e-5);
    // the 4-digit printed matrix is close but not exactly representable
    let printed = DMatrix::from_row_slice(2, 2, &[0.0324, 0.5241, 0.5241, 0.1619]);
    assert_abs_diff_eq!(z, printed, epsilon = 3e-4);
    assert!(out.network.is_representable(1e-6));
}

#[test]
fn light_regularization_yields_two_neurons() {
    // With β = 0 any common PSD term can be added to both blocks; a small
    // penalty selects the minimal split.
    let (x, y) = example_data();
    let cfg = TrainingConfig { beta: 1e-4, ..Default::default() };
    let out = train(&x, &y, &cfg).unwrap();
    assert_eq!(minimal_neuron_count(&out.variables, 1e-5), 2);
}

#[test]
fn large_beta_drives_network_to_zero() {
    let (x, y) = example_data();
    let cfg = TrainingConfig { beta: 1e6, ..Default::default() };
    let out = train(&x, &y, &cfg).unwrap();
    assert_abs_diff_eq!(out.network.zbar(0), DMatrix::zeros(2, 2), epsilon = 1e-6);
}

fn random_data(seed: u64, n: usize, p: usize, samples: usize) -> (DMatrix<f64>, DMatrix<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x = DMatrix::from_fn(samples, n, |_, _| rng.gen_range(-1.0..1.0));
    let y = DMatrix::from_fn(samples, p, |_, _| rng.gen_range(-1.0..1.0));
    (x, y)
}

#[test]
fn squared_loss_matches_unconstrained_symmetric_least_squares() {
    // β = 0: optimum over all symmetric Z̄ with the affine trace identity.
    let act = ActivationParams::default();
    let (x, y) = random_data(5, 2, 1, 12);
    let out = train(&x, &y, &TrainingConfig::default()).unwrap();
    // parameters: Z̄11, Z̄12, Z̄22, Z̄13, Z̄23; corner = (c/a)(Z̄11 + Z̄22)
    let r = act.ratio();
    let feats = DMatrix::from_fn(x.nrows(), 5, |i, j| {
        let (x1, x2) = (x[(i, 0)], x[(i, 1)]);
        match j {
            0 => x1 * x1 + r,
            1 => 2.0 * x1 * x2,
            2 => x2 * x2 + r,
            3 => 2.0 * x1,
            _ => 2.0 * x2,
        }
    });
    let sol = feats.clone().svd(true, true).solve(&y.column(0).into_owned(), 1e-14).unwrap();
    let best = (&feats * &sol - y.column(0)).norm_squared();
    assert_abs_diff_eq!(out.objective, best, epsilon = 1e-6);
}

#[test]
fn squared_loss_separates_over_outputs() {
    let (x, y) = random_data(9, 2, 2, 8);
    let cfg = TrainingConfig { beta: 0.05, ..Default::default() };
    let joint = train(&x, &y, &cfg).unwrap();
    for k in 0..2 {
        let single = train(&x, &y.columns(k, 1).into_owned(), &cfg).unwrap();
        assert_abs_diff_eq!(joint.network.zbar(k), single.network.zbar(0), epsilon = 1e-7);
    }
}

#[test]
fn infinity_loss_optimum_equals_max_residual() {
    let (x, y) = random_data(2, 1, 2, 6);
    let cfg = TrainingConfig { loss: Loss::InfinityNorm, beta: 0.01, ..Default::default() };
    let out = train(&x, &y, &cfg).unwrap();
    let pred = out.network.evaluate_rows(&x).unwrap();
    let max_resid = (&pred - &y).amax();
    let value = max_resid + cfg.beta * out.variables.regularizer();
    assert_abs_diff_eq!(out.objective, value, epsilon = 1e-5);
}

#[test]
fn removing_samples_never_raises_the_optimum() {
    let (x, y) = random_data(11, 2, 1, 10);
    let cfg = TrainingConfig { beta: 0.1, ..Default::default() };
    let full = train(&x, &y, &cfg).unwrap().objective;
    let sub = train(&x.rows(0, 7).into_owned(), &y.rows(0, 7).into_owned(), &cfg).unwrap().objective;
    assert!(sub <= full + 1e-7, "{sub} > {full}");
}

#[test]
fn offset_augmentation_adds_an_input() {
    let (x, y) = random_data(4, 1, 1, 6);
    let cfg = TrainingConfig { offset_augment: true, beta: 0.01, ..Default::default() };
    let out = train(&x, &y, &cfg).unwrap();
    assert_eq!(out.network.n_inputs(), 2);
}

#[test]
fn primal_oracle_never_beats_convex_optimum() {
    let (x, y) = example_data();
    let cfg = TrainingConfig { beta: 0.1, ..Default::default() };
    let convex = train(&x, &y, &cfg).unwrap().objective;
    let (neurons, primal) = primal_descent_oracle(&x, &y, &cfg, 2, 7).unwrap();
    assert_eq!(neurons.total(), 2);
    assert!(primal >= convex - 1e-6, "{primal} < {convex}");
    assert!(primal <= convex * 1.01 + 1e-9, "{primal} vs {convex}");
}

#[test]
fn trained_networks_are_representable() {
    for seed in 0..5 {
        let (x, y) = random_data(seed, 3, 2, 15);
        let cfg = TrainingConfig { beta: 0.01, ..Default::default() };
        let out = train(&x, &y, &cfg).unwrap();
        assert!(out.network.is_representable(1e-6));
        let _: &QuadraticNetwork = &out.network;
    }
}
