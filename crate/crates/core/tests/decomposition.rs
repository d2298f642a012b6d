use approx::assert_abs_diff_eq;
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use qnn::decomposition::{
    decompose_network, decompose_variables, extract_weights, g_matrix, neural_decompose,
    reconstruct, DecompositionConfig,
};
use qnn::network::{evaluate_neurons, ActivationParams, QuadraticNetwork};
use qnn::training::{minimal_neuron_count, train, TrainingConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn null_form(v: &DVector<f64>) -> f64 {
    (v.transpose() * g_matrix(v.len() - 1) * v)[(0, 0)]
}

fn outer_sum(vs: &[DVector<f64>], d: usize) -> DMatrix<f64> {
    vs.iter().fold(DMatrix::zeros(d, d), |acc, v| acc + v * v.transpose())
}

/// Random PSD matrix satisfying the trace condition, built from `rank`
/// Gaussian factors with the corner or the diagonal topped up.
fn trace_conditioned(rng: &mut ChaCha8Rng, n: usize, rank: usize) -> DMatrix<f64> {
    let p = DMatrix::from_fn(rank, n + 1, |_, _| rng.gen_range(-1.0..1.0));
    let mut z = p.transpose() * p;
    let delta = (0..n).map(|i| z[(i, i)]).sum::<f64>() - z[(n, n)];
    if delta >= 0.0 {
        z[(n, n)] += delta;
    } else {
        for i in 0..n {
            z[(i, i)] -= delta / n as f64;
        }
    }
    z
}

#[test]
fn example_network_round_trip() {
    let act = ActivationParams::default();
    let zbar = DMatrix::from_row_slice(2, 2, &[0.0324, 0.5241, 0.5241, 0.1619]);
    let net = QuadraticNetwork::from_matrices(act, &[zbar.clone()]).unwrap();
    let list = decompose_network(&net, &DecompositionConfig::default(), 1e-3).unwrap();
    let neurons = &list.outputs[0];
    assert_eq!(neurons.len(), 2);
    assert_abs_diff_eq!(neurons[0].w[0], 1.0, epsilon = 1e-12);
    assert_abs_diff_eq!(neurons[1].w[0], -1.0, epsilon = 1e-12);
    assert_abs_diff_eq!(neurons[0].alpha, 1.2210, epsilon = 1e-3);
    assert_abs_diff_eq!(neurons[1].alpha, -0.8755, epsilon = 1e-3);

    let back = reconstruct(&list, &act).zbar(0);
    let coeffs = [back[(0, 0)], 2.0 * back[(0, 1)], back[(1, 1)]];
    for (got, want) in coeffs.iter().zip([0.0324, 1.0482, 0.1619]) {
        assert_abs_diff_eq!(*got, want, epsilon = 1e-3);
    }
}

#[test]
fn rank_three_instance_reconstructs() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let z = trace_conditioned(&mut rng, 3, 3);
    let vs = neural_decompose(&z, &DecompositionConfig::default()).unwrap();
    assert!(vs.len() <= 4);
    assert_abs_diff_eq!(outer_sum(&vs, 4), z, epsilon = 1e-8);
    for v in &vs {
        assert!(null_form(v).abs() <= 1e-8);
    }
}

#[test]
fn sign_flip_gives_same_network() {
    let act = ActivationParams::default();
    let cfg = DecompositionConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let z = trace_conditioned(&mut rng, 2, 2);
    let vs = neural_decompose(&z, &cfg).unwrap();
    let flipped: Vec<_> = vs.iter().map(|v| -v).collect();
    let a = extract_weights(&[vs], &[], &cfg).unwrap();
    let b = extract_weights(&[flipped], &[], &cfg).unwrap();
    for _ in 0..20 {
        let x = DVector::from_fn(2, |_, _| rng.gen_range(-2.0..2.0));
        let ya = evaluate_neurons(&a, &act, &x).unwrap();
        let yb = evaluate_neurons(&b, &act, &x).unwrap();
        assert_abs_diff_eq!(ya, yb, epsilon = 1e-12);
    }
}

#[test]
fn trained_networks_round_trip() {
    let act = ActivationParams::default();
    let cfg = DecompositionConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for (n, p) in [(1, 1), (2, 2), (3, 1), (5, 3)] {
        let samples = 2 * (n + 1) * (n + 2);
        let x = DMatrix::from_fn(samples, n, |_, _| rng.gen_range(-1.0..1.0));
        let truth: Vec<DMatrix<f64>> = (0..p)
            .map(|_| {
                let zp = trace_conditioned(&mut rng, n, 2);
                let zm = trace_conditioned(&mut rng, n, 1);
                let mut zbar = &zp - &zm;
                for i in 0..n {
                    for j in 0..n {
                        zbar[(i, j)] *= act.a;
                    }
                    zbar[(i, n)] *= act.b / 2.0;
                    zbar[(n, i)] *= act.b / 2.0;
                }
                zbar[(n, n)] *= act.c;
                zbar
            })
            .collect();
        let gen = QuadraticNetwork::from_matrices(act, &truth).unwrap();
        let y = gen.evaluate_rows(&x).unwrap();
        let out = train(&x, &y, &TrainingConfig { beta: 1e-6, ..Default::default() }).unwrap();
        let list = decompose_variables(&out.variables, &cfg).unwrap();
        let back = reconstruct(&list, &act);
        for k in 0..p {
            let (got, want) = (back.zbar(k), out.network.zbar(k));
            let err = (&got - &want).norm() / want.norm().max(1.0);
            assert!(err <= 1e-6, "n={n} p={p} output {k}: {err:e}");
        }
        assert_eq!(list.total(), minimal_neuron_count(&out.variables, cfg.tol));
    }
}

#[test]
fn evaluate_matches_explicit_neurons() {
    let act = ActivationParams::default();
    let cfg = DecompositionConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..50 {
        let n = rng.gen_range(1..5);
        let plus = vec![neural_decompose(&trace_conditioned(&mut rng, n, 2), &cfg).unwrap()];
        let minus = vec![neural_decompose(&trace_conditioned(&mut rng, n, 3), &cfg).unwrap()];
        let list = extract_weights(&plus, &minus, &cfg).unwrap();
        let net = reconstruct(&list, &act);
        let x = DVector::from_fn(n, |_, _| rng.gen_range(-3.0..3.0));
        let direct = net.evaluate(&x).unwrap();
        let explicit = evaluate_neurons(&list, &act, &x).unwrap();
        assert_abs_diff_eq!(direct, explicit, epsilon = 1e-9);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn reconstruction_and_null_form(seed in any::<u64>(), n in 1usize..6, extra in 0usize..3) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let rank = rng.gen_range(1..=n + 1) + extra;
        let z = trace_conditioned(&mut rng, n, rank.min(n + 1));
        let cfg = DecompositionConfig::new(1e-10).unwrap();
        let vs = neural_decompose(&z, &cfg).unwrap();
        let scale = 1.0 + z.norm();
        prop_assert!((outer_sum(&vs, n + 1) - &z).norm() <= 1e-8 * scale);
        for v in &vs {
            prop_assert!(null_form(v).abs() <= 1e-8 * scale);
        }
    }
}
