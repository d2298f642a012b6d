//! Convex controller synthesis and guaranteed-cost bounds for
//! `x⁺ = A(x)x + B(x)u`.

use nalgebra::{DMatrix, DVector};

use crate::linalg::{check_symmetric, cholesky_inverse, eigenvalues, min_eigenvalue};
use crate::network::{is_representable, ActivationParams};
use crate::poly::{monomials_up_to, Polynomial, PolynomialMatrix};
use crate::sdp::{solve, ConicProblem, LinExpr, ScalarKind, SolveStatus, SolverConfig};

use super::sos::{constrain_sos, LinPoly, SymLinPolyMatrix};
use super::{ControlError, Controller, LyapunovCandidate, PolySystem, Region};

/// Condition number above which a feasibility solution draws a warning.
pub const ILL_CONDITIONED: f64 = 1e10;
/// Trace beyond which a cost bound is reported unbounded.
pub const UNBOUNDED_TRACE: f64 = 1e10;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LmiObjective {
    Feasibility,
    /// Adds `I ⪯ P ⪯ ηI` and minimizes `η`.
    MinConditionNumber,
}

#[derive(Debug, Clone)]
pub struct LmiConfig {
    pub epsilon: f64,
    pub region: Region,
    pub objective: LmiObjective,
    /// Total degree of the entries of `L(x)`.
    pub l_degree: u32,
    pub solver: SolverConfig,
}

impl Default for LmiConfig {
    fn default() -> Self {
        Self {
            epsilon: 0.1,
            region: Region::Global,
            objective: LmiObjective::MinConditionNumber,
            l_degree: 1,
            solver: SolverConfig::default(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct SynthesisResult {
    pub p: DMatrix<f64>,
    /// `m × nx` polynomial matrix `L(x)`.
    pub l: PolynomialMatrix,
    /// `K(x) = L(x)P⁻¹`.
    pub gain: PolynomialMatrix,
    pub epsilon: f64,
    pub eta: Option<f64>,
    pub condition_number: f64,
    pub region: Region,
    pub iterations: usize,
}

impl SynthesisResult {
    pub fn controller(&self) -> Controller {
        Controller::regulator(self.gain.clone())
    }

    /// `V(x) = xᵀP⁻¹x`.
    pub fn lyapunov(&self) -> Result<LyapunovCandidate, ControlError> {
        let pinv = cholesky_inverse(&self.p)
            .map_err(|e| ControlError::InvalidParameter(e.to_string()))?;
        LyapunovCandidate::new((&pinv + pinv.transpose()) * 0.5, DVector::zeros(self.p.nrows()))
    }
}

/// Finds `P` and polynomial `L(x)` with
/// `[[(1−ε)P − εI, (AP + BL)ᵀ], [AP + BL, P]]` SOS on the region, so that
/// `u = L(x)P⁻¹x` makes `V = xᵀP⁻¹x` decrease. `P ⪰ I` is imposed
/// throughout; feasible pairs stay feasible when scaled up.
pub fn synthesize_lmi(sys: &PolySystem, cfg: &LmiConfig) -> Result<SynthesisResult, ControlError> {
    let eps = cfg.epsilon;
    if !(0.0..1.0).contains(&eps) {
        return Err(ControlError::InvalidParameter(format!("epsilon {eps} outside [0, 1)")));
    }
    let n = sys.n_states();
    let m = sys.n_inputs();
    cfg.region.validate(n)?;
    let mut problem = ConicProblem::new();

    let p_free = problem.add_psd_block(n);
    let p_expr = |i: usize, j: usize| {
        let mut e = LinExpr::new();
        e.add_entry(p_free, i, j, 1.0);
        if i == j {
            e.add_constant(1.0);
        }
        e
    };

    let basis = monomials_up_to(n, &(0..n).collect::<Vec<_>>(), cfg.l_degree);
    let l_vars: Vec<Vec<Vec<_>>> = (0..m)
        .map(|_| {
            (0..n)
                .map(|_| basis.iter().map(|_| problem.add_scalar(ScalarKind::Free)).collect())
                .collect()
        })
        .collect();
    let l_poly = |r: usize, c: usize| {
        let mut lp = LinPoly::zero(n);
        for (mono, &s) in basis.iter().zip(&l_vars[r][c]) {
            lp.add_term(mono.clone(), &LinExpr::from_scalar(s, 1.0), 1.0);
        }
        lp
    };

    let mut big = SymLinPolyMatrix::zeros(2 * n, n);
    for i in 0..n {
        for j in i..n {
            let mut e = p_expr(i, j).scaled(1.0 - eps);
            if i == j {
                e.add_constant(-eps);
            }
            big.entry_mut(i, j).add(&LinPoly::from_expr(n, e), 1.0);
            big.entry_mut(n + i, n + j).add(&LinPoly::from_expr(n, p_expr(i, j)), 1.0);
        }
    }
    for i in 0..n {
        for j in 0..n {
            // (AP + BL)ᵢⱼ sits in the upper triangle at (j, n + i)
            let entry = big.entry_mut(j, n + i);
            for k in 0..n {
                entry.add_poly_times(sys.a.get(i, k), &p_expr(k, j));
            }
            for k in 0..m {
                entry.add_product(sys.b.get(i, k), &l_poly(k, j));
            }
        }
    }
    constrain_sos(&mut problem, &big, &cfg.region);

    let eta = match cfg.objective {
        LmiObjective::Feasibility => None,
        LmiObjective::MinConditionNumber => {
            let eta = problem.add_scalar(ScalarKind::Nonneg);
            let slack = problem.add_psd_block(n);
            for i in 0..n {
                for j in i..n {
                    let mut e = p_expr(i, j);
                    e.add_entry(slack, i, j, 1.0);
                    if i == j {
                        e.add_scalar(eta, -1.0);
                    }
                    problem.add_equality(e, 0.0);
                }
            }
            problem.add_objective_linear(&LinExpr::from_scalar(eta, 1.0));
            Some(eta)
        }
    };

    let sol = solve(&problem, &cfg.solver)?;
    match sol.status {
        SolveStatus::Optimal => {}
        SolveStatus::Infeasible => return Err(ControlError::Infeasible),
        s => return Err(ControlError::SolverFailed(s)),
    }
    let p = DMatrix::from_fn(n, n, |i, j| sol.value(&p_expr(i, j)));
    let l = PolynomialMatrix::from_fn(m, n, n, |r, c| l_poly(r, c).value(&sol));
    let pinv = cholesky_inverse(&p).map_err(|_| ControlError::Infeasible)?;
    let gain = l.mul_constant(&pinv);
    let ev = eigenvalues(&p);
    let condition_number = ev.max() / ev.min();
    if eta.is_none() && condition_number > ILL_CONDITIONED {
        log::warn!("synthesized P has condition number {condition_number:e}");
    }
    Ok(SynthesisResult {
        p,
        l,
        gain,
        epsilon: eps,
        eta: eta.map(|s| sol.scalar(s)),
        condition_number,
        region: cfg.region.clone(),
        iterations: sol.iterations,
    })
}

/// Checks the synthesis inequality for given `P` and `L(x)` on a grid.
/// Returns the smallest eigenvalue found and its point.
pub fn lmi_min_eigenvalue(
    sys: &PolySystem,
    p: &DMatrix<f64>,
    l: &PolynomialMatrix,
    epsilon: f64,
    bounds: &[(f64, f64)],
    points: usize,
) -> (f64, Vec<f64>) {
    let n = sys.n_states();
    let per = points.max(2);
    let mut worst = (f64::INFINITY, Vec::new());
    let mut x = vec![0.0; n];
    for idx in 0..per.pow(n as u32) {
        let mut r = idx;
        for (i, (lo, hi)) in bounds.iter().enumerate() {
            x[i] = lo + (hi - lo) * (r % per) as f64 / (per - 1) as f64;
            r /= per;
        }
        let c = sys.a.eval(&x) * p + sys.b.eval(&x) * l.eval(&x);
        let mut big = DMatrix::zeros(2 * n, 2 * n);
        big.view_mut((0, 0), (n, n))
            .copy_from(&(p * (1.0 - epsilon) - DMatrix::identity(n, n) * epsilon));
        big.view_mut((n, n), (n, n)).copy_from(p);
        big.view_mut((n, 0), (n, n)).copy_from(&c);
        big.view_mut((0, n), (n, n)).copy_from(&c.transpose());
        let lam = min_eigenvalue(&big);
        if lam < worst.0 {
            worst = (lam, x.clone());
        }
    }
    worst
}

/// Smallest eigenvalue of the cost-bound matrix
/// `[[AᵀPA − P + Q, AᵀPB], [BᵀPA, R + BᵀPB]]` over a grid, for a given `P`.
pub fn cost_certificate_min_eigenvalue(
    sys: &PolySystem,
    p: &DMatrix<f64>,
    q: &DMatrix<f64>,
    r: &DMatrix<f64>,
    bounds: &[(f64, f64)],
    points: usize,
) -> (f64, Vec<f64>) {
    let n = sys.n_states();
    let m = sys.n_inputs();
    let per = points.max(2);
    let mut worst = (f64::INFINITY, Vec::new());
    let mut x = vec![0.0; n];
    for idx in 0..per.pow(n as u32) {
        let mut rem = idx;
        for (i, (lo, hi)) in bounds.iter().enumerate() {
            x[i] = lo + (hi - lo) * (rem % per) as f64 / (per - 1) as f64;
            rem /= per;
        }
        let mut ab = DMatrix::zeros(n, n + m);
        ab.view_mut((0, 0), (n, n)).copy_from(&sys.a.eval(&x));
        ab.view_mut((0, n), (n, m)).copy_from(&sys.b.eval(&x));
        let mut w = ab.transpose() * p * &ab;
        let mut base = DMatrix::zeros(n + m, n + m);
        base.view_mut((0, 0), (n, n)).copy_from(&(q - p));
        base.view_mut((n, n), (m, m)).copy_from(r);
        w += base;
        let lam = min_eigenvalue(&w);
        if lam < worst.0 {
            worst = (lam, x.clone());
        }
    }
    worst
}

/// Maximum-trace `P` with
/// `[[AᵀPA − P + Q, AᵀPB], [BᵀPA, R + BᵀPB]]` SOS in the state.
#[derive(Debug, Clone)]
pub struct CostBound {
    pub p: DMatrix<f64>,
    pub trace: f64,
    pub iterations: usize,
}

impl CostBound {
    /// Lower bound `x₀ᵀPx₀` on the cost of any stabilizing controller.
    pub fn value(&self, x0: &DVector<f64>) -> f64 {
        x0.dot(&(&self.p * x0))
    }
}

pub fn cost_lower_bound(
    sys: &PolySystem,
    q: &DMatrix<f64>,
    r: &DMatrix<f64>,
    solver: &SolverConfig,
) -> Result<CostBound, ControlError> {
    let n = sys.n_states();
    let m = sys.n_inputs();
    if q.shape() != (n, n) || r.shape() != (m, m) {
        return Err(ControlError::DimensionMismatch(format!(
            "Q is {:?}, R is {:?} for {n} states and {m} inputs",
            q.shape(),
            r.shape()
        )));
    }
    for (name, w) in [("Q", q), ("R", r)] {
        check_symmetric(w).map_err(|e| ControlError::InvalidParameter(format!("{name}: {e}")))?;
        if min_eigenvalue(w) < -1e-12 {
            return Err(ControlError::InvalidParameter(format!("{name} is not PSD")));
        }
    }
    let mut problem = ConicProblem::new();
    let pv = problem.add_free_symmetric(n);
    let p_expr = |i: usize, j: usize| LinExpr::from_scalar(pv.entry(i, j), 1.0);

    // columns of [A(x), B(x)]
    let col = |c: usize, k: usize| if c < n { sys.a.get(k, c) } else { sys.b.get(k, c - n) };
    let mut w = SymLinPolyMatrix::zeros(n + m, n);
    for i in 0..n + m {
        for j in i..n + m {
            let entry = w.entry_mut(i, j);
            for k in 0..n {
                for l in 0..n {
                    entry.add_poly_times(&(col(i, k) * col(j, l)), &p_expr(k, l));
                }
            }
            let mut base = LinExpr::new();
            if j < n {
                base.add_expr(&p_expr(i, j), -1.0);
                base.add_constant(q[(i, j)]);
            } else if i >= n {
                base.add_constant(r[(i - n, j - n)]);
            }
            entry.add(&LinPoly::from_expr(n, base), 1.0);
        }
    }
    constrain_sos(&mut problem, &w, &Region::Global);
    let mut trace = LinExpr::new();
    for i in 0..n {
        trace.add_scalar(pv.entry(i, i), -1.0);
    }
    problem.add_objective_linear(&trace);

    let sol = solve(&problem, solver)?;
    match sol.status {
        SolveStatus::Optimal => {}
        SolveStatus::Infeasible => return Err(ControlError::Infeasible),
        SolveStatus::Unbounded => return Err(ControlError::Unbounded),
        s => return Err(ControlError::SolverFailed(s)),
    }
    let p = sol.symmetric(&pv);
    let tr = p.trace();
    if tr > UNBOUNDED_TRACE {
        return Err(ControlError::Unbounded);
    }
    Ok(CostBound {
        p,
        trace: tr,
        iterations: sol.iterations,
    })
}

/// `u = −(R + BᵀPB)⁻¹BᵀPA(x)x`.
#[derive(Debug, Clone)]
pub struct HeuristicController {
    sys: PolySystem,
    p: DMatrix<f64>,
    r: DMatrix<f64>,
}

pub fn heuristic_controller(
    sys: &PolySystem,
    p: &DMatrix<f64>,
    r: &DMatrix<f64>,
) -> Result<HeuristicController, ControlError> {
    let n = sys.n_states();
    if p.shape() != (n, n) || r.shape() != (sys.n_inputs(), sys.n_inputs()) {
        return Err(ControlError::DimensionMismatch("P or R shape".into()));
    }
    let h = HeuristicController {
        sys: sys.clone(),
        p: p.clone(),
        r: r.clone(),
    };
    h.gain_at(&DVector::zeros(n))?;
    Ok(h)
}

impl HeuristicController {
    /// `−(R + BᵀPB)⁻¹BᵀPA` at `x`.
    pub fn gain_at(&self, x: &DVector<f64>) -> Result<DMatrix<f64>, ControlError> {
        let a = self.sys.a.eval_vec(x);
        let b = self.sys.b.eval_vec(x);
        let g = &self.r + b.transpose() * &self.p * &b;
        let g = (&g + g.transpose()) * 0.5;
        let singular = || ControlError::SingularGain {
            point: x.as_slice().to_vec(),
        };
        let lu = g.clone().lu();
        let ev = eigenvalues(&g);
        let scale = ev.amax();
        if scale == 0.0 || ev.iter().any(|l| l.abs() <= 1e-14 * scale) {
            return Err(singular());
        }
        let rhs = b.transpose() * &self.p * a;
        lu.solve(&rhs).map(|k| -k).ok_or_else(singular)
    }

    pub fn input(&self, x: &DVector<f64>) -> Result<DVector<f64>, ControlError> {
        Ok(self.gain_at(x)? * x)
    }

    /// Polynomial gain when `B` is constant.
    pub fn polynomial_gain(&self) -> Option<PolynomialMatrix> {
        if self.sys.b.degree() > 0 {
            return None;
        }
        let n = self.sys.n_states();
        let zero = DVector::zeros(n);
        let b = self.sys.b.eval_vec(&zero);
        let g = &self.r + b.transpose() * &self.p * &b;
        let left = g.lu().solve(&(b.transpose() * &self.p))?;
        Some(self.sys.a.left_mul_constant(&(-left)))
    }

    /// `u(x)` as an `m × 1` polynomial matrix when `B` is constant.
    pub fn law(&self) -> Option<PolynomialMatrix> {
        let n = self.sys.n_states();
        Some(self.polynomial_gain()?.mul(&PolynomialMatrix::state_vector(n)))
    }

    pub fn p(&self) -> &DMatrix<f64> {
        &self.p
    }
}

/// `u(x) = x̄ᵀUx̄` for one input.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticFormReport {
    pub matrix: DMatrix<f64>,
    pub representable: bool,
}

/// Packs each entry of a polynomial law of degree ≤ 2 into `x̄ᵀUx̄`.
pub fn controller_as_quadratic_form(
    law: &PolynomialMatrix,
    act: &ActivationParams,
    tol: f64,
) -> Result<Vec<QuadraticFormReport>, ControlError> {
    let n = law.nvars();
    let deg = law.degree();
    if deg > 2 {
        return Err(ControlError::DegreeTooHigh(deg));
    }
    (0..law.nrows())
        .map(|row| {
            let u: &Polynomial = law.get(row, 0);
            let mut mat = DMatrix::zeros(n + 1, n + 1);
            for (mono, c) in u.terms() {
                let vars: Vec<usize> = (0..n).flat_map(|i| std::iter::repeat_n(i, mono[i] as usize)).collect();
                match vars.as_slice() {
                    [] => mat[(n, n)] += c,
                    [a] => {
                        mat[(*a, n)] += 0.5 * c;
                        mat[(n, *a)] += 0.5 * c;
                    }
                    [a, b] if a == b => mat[(*a, *a)] += c,
                    [a, b] => {
                        mat[(*a, *b)] += 0.5 * c;
                        mat[(*b, *a)] += 0.5 * c;
                    }
                    _ => unreachable!("degree checked above"),
                }
            }
            Ok(QuadraticFormReport {
                representable: is_representable(&mat, act, tol),
                matrix: mat,
            })
        })
        .collect()
}
