//! Steady states, closed loops, Lyapunov certificates and controller
//! synthesis for quadratic state-space models.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::linalg::{check_symmetric, min_eigenvalue};
use crate::poly::{Polynomial, PolynomialMatrix};
use crate::sdp::{SdpError, SolveStatus};
use crate::sysid::{augment_state, StateSpaceModel, SysidError};

pub mod lyapunov;
pub mod sos;
pub mod synthesis;

pub use lyapunov::{verify_lyapunov, LyapunovReport, VerifyMethod};
pub use synthesis::{
    controller_as_quadratic_form, cost_certificate_min_eigenvalue, cost_lower_bound, lmi_min_eigenvalue, heuristic_controller, synthesize_lmi,
    CostBound, HeuristicController, LmiConfig, LmiObjective, QuadraticFormReport,
    SynthesisResult,
};

/// Residual accepted for a steady-state input.
pub const STEADY_STATE_TOL: f64 = 1e-9;
/// Block norm above which an assumption on the model counts as violated.
pub const ASSUMPTION_TOL: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum ControlError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("no steady-state input satisfies the model")]
    NoSolution,
    #[error("region not supported: {0}")]
    RegionUnsupported(String),
    #[error("Lyapunov decrease violated at {point:?} (eigenvalue {eigenvalue:e})")]
    Violated { point: Vec<f64>, eigenvalue: f64 },
    #[error("no SOS certificate found (solver status {0:?})")]
    NotCertified(SolveStatus),
    #[error("synthesis problem is infeasible")]
    Infeasible,
    #[error("cost bound is unbounded")]
    Unbounded,
    #[error("solver stopped with status {0:?}")]
    SolverFailed(SolveStatus),
    #[error("R + BᵀPB is singular at {point:?}")]
    SingularGain { point: Vec<f64> },
    #[error("controller has degree {0}, at most 2 is supported")]
    DegreeTooHigh(u32),
    #[error("assumption violated: block {block} has norm {norm:e}")]
    AssumptionViolated { block: String, norm: f64 },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error(transparent)]
    Sdp(#[from] SdpError),
    #[error(transparent)]
    Sysid(#[from] SysidError),
}

/// State-space region of a certificate.
#[derive(Debug, Clone, PartialEq)]
pub enum Region {
    Global,
    /// Per-coordinate `(lower, upper)` bounds.
    Box(Vec<(f64, f64)>),
}

impl Region {
    /// Symmetric box `[−r, r]ⁿ`.
    pub fn cube(n: usize, r: f64) -> Self {
        Region::Box(vec![(-r, r); n])
    }

    pub fn validate(&self, n: usize) -> Result<(), ControlError> {
        match self {
            Region::Global => Ok(()),
            Region::Box(b) if b.len() != n => Err(ControlError::DimensionMismatch(format!(
                "region has {} bounds for {n} states",
                b.len()
            ))),
            Region::Box(b) => match b.iter().find(|(lo, hi)| !(lo <= hi) || !lo.is_finite() || !hi.is_finite()) {
                Some(bad) => Err(ControlError::RegionUnsupported(format!("bad interval {bad:?}"))),
                None => Ok(()),
            },
        }
    }
}

/// Desired operating point.
#[derive(Debug, Clone, PartialEq)]
pub struct SetPoint {
    pub x_star: DVector<f64>,
    pub u_star: DVector<f64>,
    pub y_star: Option<DVector<f64>>,
}

impl SetPoint {
    /// `x★ = Γy★` with `Γ` stacking `n` identities.
    pub fn from_output(y_star: DVector<f64>, delays: usize, u_star: DVector<f64>) -> Self {
        Self {
            x_star: replicate(&y_star, delays),
            u_star,
            y_star: Some(y_star),
        }
    }
}

/// `Γy`
pub fn replicate(y: &DVector<f64>, delays: usize) -> DVector<f64> {
    let p = y.len();
    DVector::from_fn(p * delays, |i, _| y[i % p])
}

/// Real steady-state inputs for a target state.
#[derive(Debug, Clone, PartialEq)]
pub struct SteadyState {
    pub solutions: Vec<DVector<f64>>,
    /// Every input is a solution; `solutions` then holds the convention `0`.
    pub arbitrary: bool,
}

/// Per-output equation `uᵀQᵢu + 2uᵀlᵢ + cᵢ = 0`.
struct InputQuadratic {
    q: DMatrix<f64>,
    l: DVector<f64>,
    c: f64,
}

impl InputQuadratic {
    fn eval(&self, u: &DVector<f64>) -> f64 {
        u.dot(&(&self.q * u)) + 2.0 * u.dot(&self.l) + self.c
    }

    fn gradient(&self, u: &DVector<f64>) -> DVector<f64> {
        (&self.q * u + &self.l) * 2.0
    }

    fn scale(&self) -> f64 {
        self.q.amax().max(self.l.amax()).max(self.c.abs())
    }
}

/// Solves `x̄★ = Ā(x★)x̄★ + B̄(x★)u + E(u)u` for `u`.
///
/// With one input the per-output quadratics are solved in closed form;
/// otherwise Gauss-Newton runs from 32 seeded starting points.
pub fn solve_steady_state(
    model: &StateSpaceModel,
    x_star: &DVector<f64>,
) -> Result<SteadyState, ControlError> {
    let nx = model.n_states();
    let (p, m) = (model.n_outputs(), model.n_inputs());
    if x_star.len() != nx {
        return Err(ControlError::DimensionMismatch(format!(
            "setpoint has {} entries, model has {nx} states",
            x_star.len()
        )));
    }
    let shifted = model.shift_matrix() * x_star;
    if (0..nx - p).any(|i| (shifted[i] - x_star[i]).abs() > STEADY_STATE_TOL) {
        return Err(ControlError::NoSolution);
    }
    let eqs: Vec<InputQuadratic> = (0..p)
        .map(|i| {
            let xb = augment_state(x_star);
            InputQuadratic {
                q: model.zuu(i),
                l: model.z_u_xbar(i) * &xb,
                c: xb.dot(&(model.z_xbar_xbar(i) * &xb)) - x_star[nx - p + i],
            }
        })
        .collect();
    let residual = |u: &DVector<f64>| eqs.iter().map(|e| e.eval(u).abs()).fold(0.0, f64::max);

    if eqs.iter().all(|e| e.scale() <= 1e-12) {
        return Ok(SteadyState {
            solutions: vec![DVector::zeros(m)],
            arbitrary: true,
        });
    }
    let candidates = if m == 1 {
        scalar_candidates(&eqs)
    } else {
        newton_candidates(&eqs, m)
    };
    let mut solutions: Vec<DVector<f64>> = Vec::new();
    for u in candidates {
        if residual(&u) <= STEADY_STATE_TOL && !solutions.iter().any(|s| (s - &u).amax() <= 1e-7) {
            solutions.push(u);
        }
    }
    if solutions.is_empty() {
        return Err(ControlError::NoSolution);
    }
    solutions.sort_by(|a, b| a.as_slice().partial_cmp(b.as_slice()).unwrap());
    Ok(SteadyState {
        solutions,
        arbitrary: false,
    })
}

fn scalar_candidates(eqs: &[InputQuadratic]) -> Vec<DVector<f64>> {
    let Some(e) = eqs.iter().find(|e| e.q[(0, 0)] != 0.0 || e.l[0] != 0.0) else {
        return Vec::new();
    };
    let (a, b, c) = (e.q[(0, 0)], 2.0 * e.l[0], e.c);
    let roots = if a.abs() <= 1e-14 * b.abs() {
        vec![-c / b]
    } else {
        let disc = b * b - 4.0 * a * c;
        if disc < -1e-12 * (b * b).max(1.0) {
            Vec::new()
        } else if disc <= 0.0 {
            vec![-b / (2.0 * a)]
        } else {
            // cancellation-free pair
            let q = -0.5 * (b + b.signum() * disc.sqrt());
            if q == 0.0 {
                vec![0.0]
            } else {
                vec![q / a, c / q]
            }
        }
    };
    roots.into_iter().map(|r| DVector::from_element(1, r)).collect()
}

fn newton_candidates(eqs: &[InputQuadratic], m: usize) -> Vec<DVector<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let mut out = Vec::new();
    for start in 0..32 {
        let mut u = if start == 0 {
            DVector::zeros(m)
        } else {
            DVector::from_fn(m, |_, _| rng.gen_range(-10.0..10.0))
        };
        for _ in 0..200 {
            let r = DVector::from_iterator(eqs.len(), eqs.iter().map(|e| e.eval(&u)));
            if r.amax() <= 1e-13 {
                break;
            }
            let j = DMatrix::from_fn(eqs.len(), m, |i, k| eqs[i].gradient(&u)[k]);
            let Ok(step) = j.svd(true, true).solve(&r, 1e-12) else {
                break;
            };
            u -= step;
        }
        if u.iter().all(|v| v.is_finite()) {
            out.push(u);
        }
    }
    out
}

/// State feedback `u = K(x)(x − x★) + u★`.
#[derive(Debug, Clone, PartialEq)]
pub struct Controller {
    /// `m × nx` polynomial gain in the state.
    pub gain: PolynomialMatrix,
    pub x_star: DVector<f64>,
    pub u_star: DVector<f64>,
}

impl Controller {
    pub fn constant(k: &DMatrix<f64>, x_star: DVector<f64>, u_star: DVector<f64>) -> Self {
        Self {
            gain: PolynomialMatrix::from_constant(k, k.ncols()),
            x_star,
            u_star,
        }
    }

    /// Regulator to the origin.
    pub fn regulator(gain: PolynomialMatrix) -> Self {
        let (m, n) = (gain.nrows(), gain.ncols());
        Self {
            gain,
            x_star: DVector::zeros(n),
            u_star: DVector::zeros(m),
        }
    }

    pub fn n_inputs(&self) -> usize {
        self.gain.nrows()
    }

    pub fn n_states(&self) -> usize {
        self.gain.ncols()
    }

    /// `K̄ = [K, u★ − Kx★]` at `x`.
    pub fn k_bar(&self, x: &DVector<f64>) -> DMatrix<f64> {
        let k = self.gain.eval_vec(x);
        let (m, n) = (k.nrows(), k.ncols());
        let mut kb = DMatrix::zeros(m, n + 1);
        kb.view_mut((0, 0), (m, n)).copy_from(&k);
        kb.column_mut(n).copy_from(&(&self.u_star - &k * &self.x_star));
        kb
    }

    pub fn input(&self, x: &DVector<f64>) -> DVector<f64> {
        self.k_bar(x) * augment_state(x)
    }

    /// `K̄(x)` with polynomial entries.
    pub fn k_bar_polynomial(&self) -> PolynomialMatrix {
        let n = self.n_states();
        let offset = self
            .gain
            .mul_constant(&DMatrix::from_column_slice(n, 1, self.x_star.as_slice()))
            .scale(-1.0)
            .add(&PolynomialMatrix::from_constant(
                &DMatrix::from_column_slice(self.n_inputs(), 1, self.u_star.as_slice()),
                n,
            ));
        PolynomialMatrix::from_fn(self.n_inputs(), n + 1, n, |i, j| {
            if j < n {
                self.gain.get(i, j).clone()
            } else {
                offset.get(i, 0).clone()
            }
        })
    }

    /// The control law `u(x)` as an `m × 1` polynomial matrix.
    pub fn law(&self) -> PolynomialMatrix {
        let n = self.n_states();
        self.k_bar_polynomial().mul(&augmented_state_vector(n))
    }
}

/// `[x; 1]` as polynomials.
pub fn augmented_state_vector(n: usize) -> PolynomialMatrix {
    PolynomialMatrix::from_fn(n + 1, 1, n, |i, _| {
        if i < n {
            Polynomial::var(n, i)
        } else {
            Polynomial::constant(n, 1.0)
        }
    })
}

/// Closed loop `x̄⁺ = A_cl(x, K̄)x̄` of a quadratic model under feedback.
#[derive(Debug, Clone)]
pub struct ClosedLoop {
    model: StateSpaceModel,
    controller: Controller,
}

pub fn build_closed_loop(
    model: &StateSpaceModel,
    controller: &Controller,
) -> Result<ClosedLoop, ControlError> {
    let nx = model.n_states();
    if controller.n_states() != nx
        || controller.n_inputs() != model.n_inputs()
        || controller.x_star.len() != nx
        || controller.u_star.len() != model.n_inputs()
    {
        return Err(ControlError::DimensionMismatch(format!(
            "controller is {}x{}, model has {} inputs and {nx} states",
            controller.n_inputs(),
            controller.n_states(),
            model.n_inputs()
        )));
    }
    Ok(ClosedLoop {
        model: model.clone(),
        controller: controller.clone(),
    })
}

impl ClosedLoop {
    pub fn model(&self) -> &StateSpaceModel {
        &self.model
    }

    pub fn controller(&self) -> &Controller {
        &self.controller
    }

    /// `T = [K̄; I]` maps `x̄` to the regressor `[u; x; 1]`.
    fn lift(&self, kb: &DMatrix<f64>) -> DMatrix<f64> {
        let (m, d) = (kb.nrows(), kb.ncols());
        let mut t = DMatrix::zeros(m + d, d);
        t.view_mut((0, 0), (m, d)).copy_from(kb);
        t.view_mut((m, 0), (d, d)).fill_with_identity();
        t
    }

    /// Per-output closed-loop matrices `Z̄ᵢ_cl = TᵀZ̄ⁱT`.
    pub fn z_cl(&self, x: &DVector<f64>) -> Vec<DMatrix<f64>> {
        let t = self.lift(&self.controller.k_bar(x));
        self.model.zbars().iter().map(|z| t.transpose() * z * &t).collect()
    }

    /// `A_cl(x, K̄)`: shift rows, rows `x̄ᵀZ̄ᵢ_cl`, and `[0 … 0 1]`.
    pub fn matrix(&self, x: &DVector<f64>) -> DMatrix<f64> {
        let nx = self.model.n_states();
        let p = self.model.n_outputs();
        let mut a = self.model.script_a();
        let xb = augment_state(x);
        for (i, z) in self.z_cl(x).iter().enumerate() {
            a.row_mut(nx - p + i).copy_from(&(xb.transpose() * z));
        }
        a
    }

    pub fn step(&self, x: &DVector<f64>) -> DVector<f64> {
        let next = self.matrix(x) * augment_state(x);
        next.rows(0, self.model.n_states()).into_owned()
    }

    /// `A_cl` with polynomial entries in the state.
    pub fn polynomial(&self) -> PolynomialMatrix {
        let nx = self.model.n_states();
        let p = self.model.n_outputs();
        let kb = self.controller.k_bar_polynomial();
        let m = kb.nrows();
        let t = PolynomialMatrix::from_fn(m + nx + 1, nx + 1, nx, |i, j| {
            if i < m {
                kb.get(i, j).clone()
            } else if i - m == j {
                Polynomial::constant(nx, 1.0)
            } else {
                Polynomial::zero(nx)
            }
        });
        let xb_t = augmented_state_vector(nx).transpose();
        let mut out = PolynomialMatrix::from_constant(&self.model.script_a(), nx);
        for i in 0..p {
            let zcl = t.transpose().mul_constant(self.model.zbar(i)).mul(&t);
            let row = xb_t.mul(&zcl);
            for j in 0..=nx {
                out.set(nx - p + i, j, row.get(0, j).clone());
            }
        }
        out
    }
}

/// `x⁺ = A(x)x + B(x)u`, the form available under the zero-setpoint and
/// no-quadratic-input assumptions.
#[derive(Debug, Clone, PartialEq)]
pub struct PolySystem {
    pub a: PolynomialMatrix,
    pub b: PolynomialMatrix,
}

impl PolySystem {
    pub fn new(a: PolynomialMatrix, b: PolynomialMatrix) -> Result<Self, ControlError> {
        let n = a.nrows();
        if a.ncols() != n || b.nrows() != n || a.nvars() != n || b.nvars() != n {
            return Err(ControlError::DimensionMismatch(format!(
                "A is {}x{} in {} variables, B is {}x{}",
                a.nrows(),
                a.ncols(),
                a.nvars(),
                b.nrows(),
                b.ncols()
            )));
        }
        Ok(Self { a, b })
    }

    pub fn linear(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<Self, ControlError> {
        let n = a.nrows();
        Self::new(PolynomialMatrix::from_constant(a, n), PolynomialMatrix::from_constant(b, n))
    }

    /// Rewrites a quadratic model. Rows of the last state block become
    /// `xᵀZ̄ₓₓ + 2Z̄ₓᵀ` in `A(x)` and `2(Z̄ᵤₓx + Z̄ᵤ)ᵀ` in `B(x)`.
    pub fn from_model(model: &StateSpaceModel) -> Result<Self, ControlError> {
        let nx = model.n_states();
        let (p, m) = (model.n_outputs(), model.n_inputs());
        for i in 0..p {
            let zuu = model.zuu(i).norm();
            if zuu > ASSUMPTION_TOL {
                return Err(ControlError::AssumptionViolated {
                    block: format!("Z_uu[{i}]"),
                    norm: zuu,
                });
            }
            let znn = model.znn(i).abs();
            if znn > ASSUMPTION_TOL {
                return Err(ControlError::AssumptionViolated {
                    block: format!("Z_nn[{i}]"),
                    norm: znn,
                });
            }
        }
        let x = PolynomialMatrix::state_vector(nx);
        let mut a = PolynomialMatrix::from_constant(&model.shift_matrix(), nx);
        let mut b = PolynomialMatrix::zeros(nx, m, nx);
        for i in 0..p {
            let r = nx - p + i;
            let zx2 = DMatrix::from_row_slice(1, nx, (model.zx(i) * 2.0).as_slice());
            let arow = x
                .transpose()
                .mul_constant(&model.zxx(i))
                .add(&PolynomialMatrix::from_constant(&zx2, nx));
            let zu2 = DMatrix::from_column_slice(m, 1, (model.zu(i) * 2.0).as_slice());
            let bcol = x
                .left_mul_constant(&(model.zux(i) * 2.0))
                .add(&PolynomialMatrix::from_constant(&zu2, nx));
            for j in 0..nx {
                a.set(r, j, arow.get(0, j).clone());
            }
            for j in 0..m {
                b.set(r, j, bcol.get(j, 0).clone());
            }
        }
        Self::new(a, b)
    }

    pub fn n_states(&self) -> usize {
        self.a.nrows()
    }

    pub fn n_inputs(&self) -> usize {
        self.b.ncols()
    }

    pub fn step(&self, x: &DVector<f64>, u: &DVector<f64>) -> DVector<f64> {
        self.a.eval_vec(x) * x + self.b.eval_vec(x) * u
    }

    /// `A(x) + B(x)K(x)`
    pub fn closed_loop(&self, gain: &PolynomialMatrix) -> PolynomialMatrix {
        self.a.add(&self.b.mul(gain))
    }

    /// `diag(A(x) + B(x)K(x), 1)` acting on `x̄`.
    pub fn closed_loop_augmented(&self, gain: &PolynomialMatrix) -> PolynomialMatrix {
        let acl = self.closed_loop(gain);
        let n = self.n_states();
        PolynomialMatrix::from_fn(n + 1, n + 1, n, |i, j| match (i < n, j < n) {
            (true, true) => acl.get(i, j).clone(),
            (false, false) => Polynomial::constant(n, 1.0),
            _ => Polynomial::zero(n),
        })
    }

    /// Rollout under `u = K(x)x`.
    pub fn simulate(&self, gain: &PolynomialMatrix, x0: &DVector<f64>, steps: usize) -> Vec<DVector<f64>> {
        let mut out = Vec::with_capacity(steps + 1);
        out.push(x0.clone());
        for t in 0..steps {
            let x = &out[t];
            let u = gain.eval_vec(x) * x;
            out.push(self.step(x, &u));
        }
        out
    }
}

/// Quadratic Lyapunov function `V(x) = (x − x★)ᵀP(x − x★)`.
#[derive(Debug, Clone, PartialEq)]
pub struct LyapunovCandidate {
    pub p: DMatrix<f64>,
    pub x_star: DVector<f64>,
}

impl LyapunovCandidate {
    pub fn new(p: DMatrix<f64>, x_star: DVector<f64>) -> Result<Self, ControlError> {
        check_symmetric(&p).map_err(|e| ControlError::InvalidParameter(e.to_string()))?;
        if p.nrows() != x_star.len() {
            return Err(ControlError::DimensionMismatch(format!(
                "P is {}x{}, setpoint has {} entries",
                p.nrows(),
                p.ncols(),
                x_star.len()
            )));
        }
        let lmin = min_eigenvalue(&p);
        if !(lmin > 0.0) {
            return Err(ControlError::InvalidParameter(format!(
                "P is not positive definite (minimum eigenvalue {lmin:e})"
            )));
        }
        Ok(Self { p, x_star })
    }

    /// `[[P, −Px★], [−x★ᵀP, x★ᵀPx★]]`
    pub fn p_bar(&self) -> DMatrix<f64> {
        let n = self.p.nrows();
        let px = &self.p * &self.x_star;
        let mut pb = DMatrix::zeros(n + 1, n + 1);
        pb.view_mut((0, 0), (n, n)).copy_from(&self.p);
        for i in 0..n {
            pb[(i, n)] = -px[i];
            pb[(n, i)] = -px[i];
        }
        pb[(n, n)] = self.x_star.dot(&px);
        pb
    }

    pub fn value(&self, x: &DVector<f64>) -> f64 {
        let d = x - &self.x_star;
        d.dot(&(&self.p * &d))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use nalgebra::dvector;

    fn scalar_model(entries: [f64; 9]) -> StateSpaceModel {
        StateSpaceModel::new(1, 1, 1, vec![DMatrix::from_row_slice(3, 3, &entries)]).unwrap()
    }

    fn example_four() -> StateSpaceModel {
        scalar_model([1.0, 0.5, 0.0, 0.5, 1.0, 0.0, 0.0, 0.0, -1.0])
    }

    fn example_five() -> StateSpaceModel {
        scalar_model([0.0, 0.5, 0.0, 0.5, 1.0, 0.0, 0.0, 0.0, 0.0])
    }

    #[test]
    fn steady_state_examples() {
        let ss = solve_steady_state(&example_four(), &dvector![0.0]).unwrap();
        assert!(!ss.arbitrary);
        assert_eq!(ss.solutions, vec![dvector![-1.0], dvector![1.0]]);

        let ss = solve_steady_state(&example_five(), &dvector![0.0]).unwrap();
        assert!(ss.arbitrary);
        assert_eq!(ss.solutions, vec![dvector![0.0]]);

        // x⁺ = 0.5x + u
        let lin = scalar_model([0.0, 0.0, 0.5, 0.0, 0.0, 0.25, 0.5, 0.25, 0.0]);
        let ss = solve_steady_state(&lin, &dvector![0.0]).unwrap();
        assert_eq!(ss.solutions, vec![dvector![0.0]]);
        let ss = solve_steady_state(&lin, &dvector![2.0]).unwrap();
        assert_abs_diff_eq!(ss.solutions[0][0], 1.0, epsilon = 1e-15);
    }

    #[test]
    fn steady_state_without_real_root() {
        // x⁺ = u² + 1 never reaches 0
        let m = scalar_model([1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 1.0]);
        assert!(matches!(solve_steady_state(&m, &dvector![0.0]), Err(ControlError::NoSolution)));
    }

    #[test]
    fn steady_state_two_inputs() {
        // y⁺ = u₁² + u₂ − 1 with y★ = 0 and a second output forcing u₂ = 0.5
        let mut z1 = DMatrix::zeros(4, 4);
        z1[(0, 0)] = 1.0;
        z1[(1, 3)] = 0.5;
        z1[(3, 1)] = 0.5;
        z1[(3, 3)] = -1.0;
        let mut z2 = DMatrix::zeros(4, 4);
        z2[(1, 3)] = 0.5;
        z2[(3, 1)] = 0.5;
        z2[(3, 3)] = -0.5;
        // p = 2, n = 1, m = 2 gives regressor [u₁, u₂, y₁, y₂, 1]
        let grow = |z: &DMatrix<f64>| {
            let mut g = DMatrix::zeros(5, 5);
            for i in 0..4 {
                for j in 0..4 {
                    let (a, b) = (if i == 3 { 4 } else { i }, if j == 3 { 4 } else { j });
                    g[(a, b)] = z[(i, j)];
                }
            }
            g
        };
        let model = StateSpaceModel::new(1, 2, 2, vec![grow(&z1), grow(&z2)]).unwrap();
        let ss = solve_steady_state(&model, &dvector![0.0, 0.0]).unwrap();
        assert_eq!(ss.solutions.len(), 2);
        for s in &ss.solutions {
            assert_abs_diff_eq!(s[1], 0.5, epsilon = 1e-9);
            assert_abs_diff_eq!(s[0].abs(), 0.5_f64.sqrt(), epsilon = 1e-9);
        }
    }

    #[test]
    fn dead_beat_closed_loop() {
        let ctrl = Controller::constant(&DMatrix::from_element(1, 1, -1.0), dvector![0.0], dvector![0.0]);
        let cl = build_closed_loop(&example_five(), &ctrl).unwrap();
        for x in [-2.0, 0.5, 3.0] {
            assert_abs_diff_eq!(cl.matrix(&dvector![x]), DMatrix::from_row_slice(2, 2, &[0.0, 0.0, 0.0, 1.0]));
            assert_eq!(cl.step(&dvector![x])[0], 0.0);
        }
    }

    #[test]
    fn zero_gain_recovers_open_loop() {
        let model = example_four();
        let ctrl = Controller::constant(&DMatrix::zeros(1, 1), dvector![0.0], dvector![0.0]);
        let cl = build_closed_loop(&model, &ctrl).unwrap();
        for x in [-1.5, 0.0, 0.3, 2.0] {
            assert_abs_diff_eq!(cl.step(&dvector![x])[0], x * x - 1.0, epsilon = 1e-15);
        }
        let poly = cl.polynomial();
        assert_abs_diff_eq!(poly.eval(&[0.7]), cl.matrix(&dvector![0.7]), epsilon = 1e-15);
    }

    #[test]
    fn zero_model_keeps_homogeneous_coordinate() {
        let model = scalar_model([0.0; 9]);
        let ctrl = Controller::constant(&DMatrix::from_element(1, 1, 3.0), dvector![0.0], dvector![0.0]);
        let a = build_closed_loop(&model, &ctrl).unwrap().matrix(&dvector![1.3]);
        assert_eq!(a, DMatrix::from_row_slice(2, 2, &[0.0, 0.0, 0.0, 1.0]));
    }

    #[test]
    fn p_bar_null_vector() {
        let c = LyapunovCandidate::new(
            DMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0]),
            dvector![1.0, -2.0],
        )
        .unwrap();
        let pb = c.p_bar();
        assert_abs_diff_eq!(pb * dvector![1.0, -2.0, 1.0], DVector::zeros(3), epsilon = 1e-14);
        assert!(LyapunovCandidate::new(DMatrix::zeros(1, 1), dvector![0.0]).is_err());
    }

    #[test]
    fn quadrotor_polynomial_form() {
        let (t, td, tg) = (0.102, 0.0023, 1.0);
        let mut z1 = DMatrix::zeros(4, 4);
        z1[(1, 3)] = 0.5;
        z1[(2, 3)] = t / 2.0;
        let mut z2 = DMatrix::zeros(4, 4);
        z2[(2, 2)] = -td;
        z2[(2, 3)] = 0.5;
        z2[(0, 3)] = tg / 2.0;
        for z in [&mut z1, &mut z2] {
            for i in 0..4 {
                z[(3, i)] = z[(i, 3)];
            }
        }
        let model = StateSpaceModel::new(1, 2, 1, vec![z1, z2]).unwrap();
        let sys = PolySystem::from_model(&model).unwrap();
        let v = 7.0;
        assert_abs_diff_eq!(
            sys.a.eval(&[3.0, v]),
            DMatrix::from_row_slice(2, 2, &[1.0, t, 0.0, 1.0 - td * v]),
            epsilon = 1e-15
        );
        assert_abs_diff_eq!(sys.b.eval(&[3.0, v]), DMatrix::from_column_slice(2, 1, &[0.0, tg]));
        assert!(matches!(
            PolySystem::from_model(&example_four()),
            Err(ControlError::AssumptionViolated { .. })
        ));
    }
}
