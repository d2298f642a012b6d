use approx::assert_abs_diff_eq;
use nalgebra::{dvector, DMatrix, DVector};
use qnn::control::lyapunov::{verify_lyapunov, VerifyMethod};
use qnn::control::*;
use qnn::network::ActivationParams;
use qnn::poly::{Polynomial, PolynomialMatrix};
use qnn::sdp::SolverConfig;
use qnn::sysid::StateSpaceModel;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const T: f64 = 0.102;
const TD: f64 = 0.0023;
const TG: f64 = 1.0;

fn quadrotor() -> PolySystem {
    let v = Polynomial::var(2, 1);
    let a = PolynomialMatrix::from_fn(2, 2, 2, |i, j| match (i, j) {
        (0, 0) => Polynomial::constant(2, 1.0),
        (0, 1) => Polynomial::constant(2, T),
        (1, 1) => &Polynomial::constant(2, 1.0) - &v.scale(TD),
        _ => Polynomial::zero(2),
    });
    let b = DMatrix::from_column_slice(2, 1, &[0.0, TG]);
    PolySystem::new(a, PolynomialMatrix::from_constant(&b, 2)).unwrap()
}

fn quadrotor_model() -> StateSpaceModel {
    // regressor [u, X, V, 1]
    let mut z1 = DMatrix::zeros(4, 4);
    z1[(1, 3)] = 0.5;
    z1[(2, 3)] = T / 2.0;
    let mut z2 = DMatrix::zeros(4, 4);
    z2[(2, 2)] = -TD;
    z2[(2, 3)] = 0.5;
    z2[(0, 3)] = TG / 2.0;
    for z in [&mut z1, &mut z2] {
        for i in 0..3 {
            z[(3, i)] = z[(i, 3)];
        }
    }
    StateSpaceModel::new(1, 2, 1, vec![z1, z2]).unwrap()
}

/// `u = k₀X + k₁V + k₂V²` as a gain row `[k₀, k₁ + k₂V]`.
fn gain_row(k: [f64; 3]) -> PolynomialMatrix {
    let v = Polynomial::var(2, 1);
    PolynomialMatrix::from_fn(1, 2, 2, |_, j| match j {
        0 => Polynomial::constant(2, k[0]),
        _ => &Polynomial::constant(2, k[1]) + &v.scale(k[2]),
    })
}

fn example_five() -> StateSpaceModel {
    StateSpaceModel::new(1, 1, 1, vec![DMatrix::from_row_slice(3, 3, &[0.0, 0.5, 0.0, 0.5, 1.0, 0.0, 0.0, 0.0, 0.0])])
        .unwrap()
}

fn unit_lyapunov() -> DMatrix<f64> {
    LyapunovCandidate::new(DMatrix::identity(1, 1), dvector![0.0]).unwrap().p_bar()
}

#[test]
fn model_substitution_matches_direct_form() {
    let from_model = PolySystem::from_model(&quadrotor_model()).unwrap();
    let direct = quadrotor();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..200 {
        let x = [rng.gen_range(-30.0..30.0), rng.gen_range(-30.0..30.0)];
        assert_abs_diff_eq!(from_model.a.eval(&x), direct.a.eval(&x), epsilon = 1e-12);
        assert_abs_diff_eq!(from_model.b.eval(&x), direct.b.eval(&x), epsilon = 1e-12);
    }
}

#[test]
fn closed_loop_agrees_with_model_under_feedback() {
    let model = quadrotor_model();
    let ctrl = Controller::regulator(gain_row([-1.1556, -1.1771, 0.0023]));
    let cl = build_closed_loop(&model, &ctrl).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..1000 {
        let x = DVector::from_fn(2, |_, _| rng.gen_range(-20.0..20.0));
        let u = ctrl.input(&x);
        let open = model.step(&x, &u).unwrap();
        assert_abs_diff_eq!(cl.step(&x), open, epsilon = 1e-9 * (1.0 + open.amax()));
    }
}

#[test]
fn paper_gains_place_closed_loop_eigenvalues() {
    let sys = quadrotor();
    let acl = sys.closed_loop(&gain_row([-1.1556, -1.1771, 0.0023]));
    assert_eq!(acl.degree(), 0);
    let ev = acl.eval(&[0.0, 5.0]).complex_eigenvalues();
    let mut re: Vec<f64> = ev.iter().map(|c| c.re).collect();
    re.sort_by(|a, b| b.total_cmp(a));
    assert_abs_diff_eq!(re[0], 0.8895, epsilon = 1e-3);
    assert_abs_diff_eq!(re[1], -0.0666, epsilon = 1e-3);
}

#[test]
fn paper_matrix_is_synthesis_feasible_on_velocity_box() {
    let sys = quadrotor();
    let p = DMatrix::from_row_slice(2, 2, &[1.4589, -1.6008, -1.6008, 2.6636]);
    let l = gain_row([-1.1556, -1.1771, 0.0023]).mul_constant(&p);
    let (lam, _) = lmi_min_eigenvalue(&sys, &p, &l, 0.1, &[(-20.0, 20.0), (-20.0, 20.0)], 41);
    assert!(lam > -1e-5 * p.norm().max(1.0), "min eigenvalue {lam}");
}

#[test]
fn synthesis_cancels_drag() {
    let sys = quadrotor();
    let res = synthesize_lmi(&sys, &LmiConfig::default()).unwrap();
    let k = res.gain.get(0, 1);
    assert_abs_diff_eq!(k.coeff(&[0, 1]), TD / TG, epsilon = 1e-4);
    let (lam, _) = lmi_min_eigenvalue(&sys, &res.p, &res.l, 0.1, &[(-20.0, 20.0), (-20.0, 20.0)], 21);
    assert!(lam > -1e-5, "min eigenvalue {lam}");

    // the closed loop is linear, so the Lyapunov decrease holds everywhere
    let v = res.lyapunov().unwrap();
    let acl = sys.closed_loop_augmented(&res.gain).pruned(1e-9);
    let method = VerifyMethod::Grid { points: 21, tol: 1e-7 };
    verify_lyapunov(&acl, &v.p_bar(), &Region::cube(2, 50.0), &method).unwrap();

    let traj = sys.simulate(&res.gain, &dvector![-10.0, 0.0], 400);
    assert!(traj.last().unwrap().norm() < 1e-3);
}

#[test]
fn cost_bound_reproduces_paper_matrix() {
    let sys = quadrotor();
    let q = DMatrix::identity(2, 2);
    let r = DMatrix::from_element(1, 1, 2.2e-16);
    let paper = DMatrix::from_row_slice(2, 2, &[11.3167, 1.0523, 1.0523, 1.1073]);
    let (lam, _) = cost_certificate_min_eigenvalue(&sys, &paper, &q, &r, &[(-20.0, 20.0), (-20.0, 20.0)], 41);
    assert!(lam > -1e-5 * paper.norm(), "min eigenvalue {lam}");

    let bound = cost_lower_bound(&sys, &q, &r, &SolverConfig::default()).unwrap();
    assert!((&bound.p - &paper).norm() < 0.02 * paper.norm());

    let h = heuristic_controller(&sys, &bound.p, &r).unwrap();
    let gain = h.polynomial_gain().unwrap();
    assert_abs_diff_eq!(gain.get(0, 0).coeff(&[0, 0]), -0.9503, epsilon = 2e-2);
    assert_abs_diff_eq!(gain.get(0, 1).coeff(&[0, 0]), -1.097, epsilon = 2e-2);
    assert_abs_diff_eq!(gain.get(0, 1).coeff(&[0, 1]), 0.0023, epsilon = 1e-4);

    let law = h.law().unwrap();
    let act = ActivationParams::new(1.0, 0.0, 0.0).unwrap();
    let u = &controller_as_quadratic_form(&law, &act, 1e-9).unwrap()[0];
    assert!(u.representable);
    assert_abs_diff_eq!(u.matrix[(1, 1)], 0.0023, epsilon = 1e-4);
    assert_abs_diff_eq!(u.matrix[(0, 2)], -0.47515, epsilon = 1e-2);
    assert_abs_diff_eq!(u.matrix[(1, 2)], -0.5485, epsilon = 1e-2);
    assert_eq!(u.matrix[(0, 0)], 0.0);
}

#[test]
fn scalar_riccati_bound_is_sound() {
    let sys = PolySystem::linear(&DMatrix::from_element(1, 1, 0.5), &DMatrix::from_element(1, 1, 1.0)).unwrap();
    let one = DMatrix::from_element(1, 1, 1.0);
    let cfg = SolverConfig { eps_abs: 1e-10, ..Default::default() };
    let bound = cost_lower_bound(&sys, &one, &one, &cfg).unwrap();
    assert_abs_diff_eq!(bound.p[(0, 0)], 1.1328, epsilon = 1e-3);

    let gain = heuristic_controller(&sys, &bound.p, &one).unwrap().polynomial_gain().unwrap();
    let traj = sys.simulate(&gain, &dvector![1.0], 200);
    let cost: f64 = traj.iter().map(|x| {
        let u = gain.eval_vec(x) * x;
        x.norm_squared() + u.norm_squared()
    }).sum();
    assert!(cost >= bound.value(&dvector![1.0]) - 1e-6, "cost {cost}");
}

#[test]
fn dead_beat_certificate() {
    let ctrl = Controller::constant(&DMatrix::from_element(1, 1, -1.0), dvector![0.0], dvector![0.0]);
    let cl = build_closed_loop(&example_five(), &ctrl).unwrap();
    let acl = cl.polynomial();
    let report = verify_lyapunov(&acl, &unit_lyapunov(), &Region::Global, &VerifyMethod::Sos(SolverConfig::default()))
        .unwrap();
    assert!(report.is_global());
    verify_lyapunov(&acl, &unit_lyapunov(), &Region::cube(1, 5.0), &VerifyMethod::default()).unwrap();
    for x0 in [-2.0, 0.5, 3.0] {
        assert_eq!(cl.step(&dvector![x0])[0], 0.0);
    }
}

#[test]
fn open_loop_square_map_is_rejected() {
    let ctrl = Controller::constant(&DMatrix::zeros(1, 1), dvector![0.0], dvector![0.0]);
    let acl = build_closed_loop(&example_five(), &ctrl).unwrap().polynomial();
    match verify_lyapunov(&acl, &unit_lyapunov(), &Region::cube(1, 2.0), &VerifyMethod::default()) {
        Err(ControlError::Violated { point, eigenvalue }) => {
            assert_eq!(point[0].abs(), 2.0);
            assert!(eigenvalue > 1.0);
        }
        other => panic!("expected a violation, got {other:?}"),
    }
    let sos = verify_lyapunov(&acl, &unit_lyapunov(), &Region::Global, &VerifyMethod::Sos(SolverConfig::default()));
    assert!(matches!(sos, Err(ControlError::Violated { .. })));
}

#[test]
fn zero_dynamics() {
    let zero = PolySystem::linear(&DMatrix::zeros(2, 2), &DMatrix::zeros(2, 1)).unwrap();
    let q = DMatrix::identity(2, 2);
    let bound = cost_lower_bound(&zero, &q, &DMatrix::from_element(1, 1, 1.0), &SolverConfig::default()).unwrap();
    assert_abs_diff_eq!(bound.p, q, epsilon = 1e-5);
    let res = synthesize_lmi(&zero, &LmiConfig::default()).unwrap();
    assert!(res.p.symmetric_eigenvalues().min() >= 1.0 - 1e-6);
}

#[test]
fn grid_verification_needs_a_box() {
    let acl = PolySystem::linear(&DMatrix::zeros(1, 1), &DMatrix::zeros(1, 1))
        .unwrap()
        .closed_loop_augmented(&PolynomialMatrix::zeros(1, 1, 1));
    let res = verify_lyapunov(&acl, &unit_lyapunov(), &Region::Global, &VerifyMethod::default());
    assert!(matches!(res, Err(ControlError::RegionUnsupported(_))));
}
