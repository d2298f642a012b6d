//! Convex training of quadratic networks.
//!
//! For every output `k` the program carries two PSD blocks
//! `Zᵏ± = [[Zᵏ¹±, Zᵏ²±], [Zᵏ²±ᵀ, Zᵏ⁴±]]` of size `n+1` with
//! `Zᵏ⁴± = Tr(Zᵏ¹±)`, and predicts
//! `ŷᵢᵏ = Σ± ±(a·xᵢᵀZᵏ¹±xᵢ + b·xᵢᵀZᵏ²± + c·Zᵏ⁴±)`.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::eigenvalues;
use crate::network::{ActivationParams, Neuron, NeuronList, QuadraticNetwork};
use crate::sdp::{
    solve, BlockId, ConicProblem, LinExpr, ScalarId, ScalarKind, SdpError, SolveStatus,
    SolverConfig,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum Loss {
    /// `Σᵢₖ (ŷᵢᵏ − yᵢᵏ)²`
    #[default]
    SquaredL2,
    /// `maxᵢₖ |ŷᵢᵏ − yᵢᵏ|`
    InfinityNorm,
}

#[derive(Debug, Clone)]
pub struct TrainingConfig {
    pub activation: ActivationParams,
    pub beta: f64,
    pub loss: Loss,
    /// Append a constant-one column to the inputs before training.
    pub offset_augment: bool,
    pub solver: SolverConfig,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        Self {
            activation: ActivationParams::default(),
            beta: 0.0,
            loss: Loss::SquaredL2,
            offset_augment: false,
            solver: SolverConfig::default(),
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TrainingError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("training set is empty")]
    EmptyData,
    #[error("regularization weight must be finite and nonnegative, got {0}")]
    InvalidBeta(f64),
    #[error("training data contains non-finite values")]
    NonFinite,
    #[error("solver stopped with status {0:?}")]
    SolverFailed(SolveStatus),
    #[error(transparent)]
    Sdp(#[from] SdpError),
}

/// Solved PSD blocks, one pair per output.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingVariables {
    pub plus: Vec<DMatrix<f64>>,
    pub minus: Vec<DMatrix<f64>>,
}

impl TrainingVariables {
    pub fn n_outputs(&self) -> usize {
        self.plus.len()
    }

    fn side(&self, k: usize, positive: bool) -> &DMatrix<f64> {
        if positive {
            &self.plus[k]
        } else {
            &self.minus[k]
        }
    }

    /// Top-left `n×n` block `Zᵏ¹`.
    pub fn z1(&self, k: usize, positive: bool) -> DMatrix<f64> {
        let z = self.side(k, positive);
        let n = z.nrows() - 1;
        z.view((0, 0), (n, n)).into_owned()
    }

    /// Offset column `Zᵏ²`.
    pub fn z2(&self, k: usize, positive: bool) -> DVector<f64> {
        let z = self.side(k, positive);
        let n = z.nrows() - 1;
        z.view((0, n), (n, 1)).column(0).into_owned()
    }

    /// Corner `Zᵏ⁴`.
    pub fn z4(&self, k: usize, positive: bool) -> f64 {
        let z = self.side(k, positive);
        let n = z.nrows() - 1;
        z[(n, n)]
    }

    /// `Σₖ (Zᵏ⁴₊ + Zᵏ⁴₋)`, the regularized quantity.
    pub fn regularizer(&self) -> f64 {
        (0..self.n_outputs())
            .map(|k| self.z4(k, true) + self.z4(k, false))
            .sum()
    }

    /// Assembles `Z̄ᵏ`: top-left `a(Z¹₊−Z¹₋)`, offset `(b/2)(Z²₊−Z²₋)`,
    /// corner `c·Tr(Z¹₊−Z¹₋)`.
    pub fn assemble(&self, act: &ActivationParams) -> Vec<DMatrix<f64>> {
        (0..self.n_outputs())
            .map(|k| {
                let z1 = self.z1(k, true) - self.z1(k, false);
                let z2 = self.z2(k, true) - self.z2(k, false);
                let n = z1.nrows();
                let mut out = DMatrix::zeros(n + 1, n + 1);
                out.view_mut((0, 0), (n, n)).copy_from(&(&z1 * act.a));
                for i in 0..n {
                    out[(i, n)] = 0.5 * act.b * z2[i];
                    out[(n, i)] = out[(i, n)];
                }
                out[(n, n)] = act.c * z1.trace();
                out
            })
            .collect()
    }
}

/// Solver status and residuals of one conic solve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveDiagnostics {
    pub status: SolveStatus,
    pub iterations: usize,
    pub primal_residual: f64,
    pub dual_residual: f64,
    pub objective: f64,
}

/// A training problem together with the handles needed to read it back.
#[derive(Debug, Clone)]
pub struct TrainingProblem {
    pub problem: ConicProblem,
    pub plus: Vec<BlockId>,
    pub minus: Vec<BlockId>,
    pub epigraph: Option<ScalarId>,
    /// Input dimension after optional augmentation.
    pub n_features: usize,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub network: QuadraticNetwork,
    pub variables: TrainingVariables,
    /// One entry per solved subproblem.
    pub diagnostics: Vec<SolveDiagnostics>,
    /// Total optimal objective over all subproblems.
    pub objective: f64,
}

/// Appends a column of ones.
pub fn with_offset_column(x: &DMatrix<f64>) -> DMatrix<f64> {
    x.clone().insert_column(x.ncols(), 1.0)
}

fn validate(x: &DMatrix<f64>, y: &DMatrix<f64>, cfg: &TrainingConfig) -> Result<(), TrainingError> {
    if x.nrows() == 0 || x.ncols() == 0 || y.ncols() == 0 {
        return Err(TrainingError::EmptyData);
    }
    if x.nrows() != y.nrows() {
        return Err(TrainingError::DimensionMismatch(format!(
            "{} input rows but {} label rows",
            x.nrows(),
            y.nrows()
        )));
    }
    if !(cfg.beta >= 0.0 && cfg.beta.is_finite()) {
        return Err(TrainingError::InvalidBeta(cfg.beta));
    }
    if x.iter().chain(y.iter()).any(|v| !v.is_finite()) {
        return Err(TrainingError::NonFinite);
    }
    Ok(())
}

/// `Σ± ±⟨Mᵢ, Z±⟩` for one sample.
fn prediction(
    act: &ActivationParams,
    x: &[f64],
    plus: BlockId,
    minus: BlockId,
) -> LinExpr {
    let n = x.len();
    let mut e = LinExpr::with_capacity(2 * (n + 1) * (n + 2) / 2);
    for (blk, sign) in [(plus, 1.0), (minus, -1.0)] {
        for i in 0..n {
            if x[i] == 0.0 {
                continue;
            }
            e.add_entry(blk, i, i, sign * act.a * x[i] * x[i]);
            for j in (i + 1)..n {
                if x[j] != 0.0 {
                    e.add_entry(blk, i, j, sign * 2.0 * act.a * x[i] * x[j]);
                }
            }
            e.add_entry(blk, i, n, sign * act.b * x[i]);
        }
        e.add_entry(blk, n, n, sign * act.c);
    }
    e
}

/// Builds the convex training program for the given outputs (columns of `y`).
pub fn build_problem(
    x: &DMatrix<f64>,
    y: &DMatrix<f64>,
    cfg: &TrainingConfig,
) -> Result<TrainingProblem, TrainingError> {
    validate(x, y, cfg)?;
    let x = if cfg.offset_augment {
        with_offset_column(x)
    } else {
        x.clone()
    };
    let (n_samples, n) = x.shape();
    let p = y.ncols();
    let act = &cfg.activation;
    let mut problem = ConicProblem::new();
    let mut plus = Vec::with_capacity(p);
    let mut minus = Vec::with_capacity(p);
    for _ in 0..p {
        plus.push(problem.add_psd_block(n + 1));
        minus.push(problem.add_psd_block(n + 1));
    }
    let mut reg = LinExpr::new();
    for k in 0..p {
        for blk in [plus[k], minus[k]] {
            let mut e = LinExpr::new();
            e.add_trace(blk, -1.0);
            e.add_entry(blk, n, n, 2.0);
            problem.add_equality(e, 0.0);
            reg.add_entry(blk, n, n, cfg.beta);
        }
    }
    if cfg.beta != 0.0 {
        problem.add_objective_linear(&reg);
    }
    let epigraph = match cfg.loss {
        Loss::SquaredL2 => None,
        Loss::InfinityNorm => Some(problem.add_scalar(ScalarKind::Nonneg)),
    };
    let mut terms = Vec::new();
    let mut row = vec![0.0; n];
    for i in 0..n_samples {
        for (j, r) in row.iter_mut().enumerate() {
            *r = x[(i, j)];
        }
        for k in 0..p {
            let mut e = prediction(act, &row, plus[k], minus[k]);
            e.add_constant(-y[(i, k)]);
            match cfg.loss {
                Loss::SquaredL2 => problem.add_objective_square(e, 1.0),
                Loss::InfinityNorm => {
                    terms.push(e.scaled(-1.0));
                    terms.push(e);
                }
            }
        }
    }
    if let Some(t) = epigraph {
        problem.add_objective_linear(&LinExpr::from_scalar(t, 1.0));
        problem.set_epigraph(t, terms);
    }
    Ok(TrainingProblem {
        problem,
        plus,
        minus,
        epigraph,
        n_features: n,
    })
}

fn solve_one(
    x: &DMatrix<f64>,
    y: &DMatrix<f64>,
    cfg: &TrainingConfig,
) -> Result<(TrainingVariables, SolveDiagnostics), TrainingError> {
    let tp = build_problem(x, y, cfg)?;
    let sol = solve(&tp.problem, &cfg.solver)?;
    let diag = SolveDiagnostics {
        status: sol.status,
        iterations: sol.iterations,
        primal_residual: sol.primal_residual,
        dual_residual: sol.dual_residual,
        objective: sol.objective_value,
    };
    log::info!(
        "training solve: {:?} after {} iterations, objective {:.6e}",
        sol.status,
        sol.iterations,
        sol.objective_value
    );
    if sol.status != SolveStatus::Optimal {
        return Err(TrainingError::SolverFailed(sol.status));
    }
    let vars = TrainingVariables {
        plus: tp.plus.iter().map(|&b| sol.block(b)).collect(),
        minus: tp.minus.iter().map(|&b| sol.block(b)).collect(),
    };
    Ok((vars, diag))
}

/// Trains a network by solving the convex program. Squared loss separates
/// per output and is solved output by output; the infinity norm couples all
/// outputs through one epigraph and is solved jointly.
pub fn train(
    x: &DMatrix<f64>,
    y: &DMatrix<f64>,
    cfg: &TrainingConfig,
) -> Result<TrainOutcome, TrainingError> {
    validate(x, y, cfg)?;
    let (variables, diagnostics) = match cfg.loss {
        Loss::InfinityNorm => {
            let (v, d) = solve_one(x, y, cfg)?;
            (v, vec![d])
        }
        Loss::SquaredL2 => {
            let mut vars = TrainingVariables {
                plus: Vec::new(),
                minus: Vec::new(),
            };
            let mut diags = Vec::new();
            for k in 0..y.ncols() {
                let yk = y.columns(k, 1).into_owned();
                let (v, d) = solve_one(x, &yk, cfg)?;
                vars.plus.extend(v.plus);
                vars.minus.extend(v.minus);
                diags.push(d);
            }
            (vars, diags)
        }
    };
    let mats = variables.assemble(&cfg.activation);
    let network = QuadraticNetwork::from_matrices(cfg.activation, &mats)
        .expect("assembled matrices are symmetric by construction");
    let objective = diagnostics.iter().map(|d| d.objective).sum();
    Ok(TrainOutcome {
        network,
        variables,
        diagnostics,
        objective,
    })
}

/// Value of the training objective `l(ŷ − y) + β·reg` for given predictions.
pub fn objective_value(pred: &DMatrix<f64>, y: &DMatrix<f64>, loss: Loss, beta: f64, reg: f64) -> f64 {
    let r = pred - y;
    let l = match loss {
        Loss::SquaredL2 => r.norm_squared(),
        Loss::InfinityNorm => r.amax(),
    };
    l + beta * reg
}

/// `Σₖ rank(Zᵏ₊) + rank(Zᵏ₋)` with eigenvalues above `tol` counted.
pub fn minimal_neuron_count(vars: &TrainingVariables, tol: f64) -> usize {
    vars.plus
        .iter()
        .chain(&vars.minus)
        .map(|z| eigenvalues(z).iter().filter(|&&l| l > tol).count())
        .sum()
}

/// Settings of the nonconvex reference optimizer.
#[derive(Debug, Clone)]
pub struct OracleConfig {
    pub restarts: usize,
    pub max_steps: usize,
    /// Stop a restart once the relative decrease over 100 steps falls below
    /// this value.
    pub stall_tol: f64,
}

impl Default for OracleConfig {
    fn default() -> Self {
        Self {
            restarts: 20,
            max_steps: 20_000,
            stall_tol: 1e-12,
        }
    }
}

struct PrimalState {
    /// Per output: `M` unit rows.
    w: Vec<DMatrix<f64>>,
    alpha: Vec<DVector<f64>>,
}

fn primal_predictions(x: &DMatrix<f64>, act: &ActivationParams, s: &PrimalState) -> DMatrix<f64> {
    let p = s.w.len();
    let mut out = DMatrix::zeros(x.nrows(), p);
    for k in 0..p {
        let z = x * s.w[k].transpose();
        for i in 0..x.nrows() {
            out[(i, k)] = (0..z.ncols()).map(|j| s.alpha[k][j] * act.eval(z[(i, j)])).sum();
        }
    }
    out
}

fn primal_objective(
    x: &DMatrix<f64>,
    y: &DMatrix<f64>,
    cfg: &TrainingConfig,
    s: &PrimalState,
) -> f64 {
    let reg: f64 = s.alpha.iter().map(|a| a.lp_norm(1)).sum();
    objective_value(&primal_predictions(x, &cfg.activation, s), y, cfg.loss, cfg.beta, reg)
}

/// Gradient of the loss part with respect to `(w, α)`.
fn primal_gradient(
    x: &DMatrix<f64>,
    y: &DMatrix<f64>,
    cfg: &TrainingConfig,
    s: &PrimalState,
) -> (Vec<DMatrix<f64>>, Vec<DVector<f64>>) {
    let act = &cfg.activation;
    let pred = primal_predictions(x, act, s);
    let resid = &pred - y;
    // dl/dŷ
    let dl = match cfg.loss {
        Loss::SquaredL2 => resid * 2.0,
        Loss::InfinityNorm => {
            let (mut bi, mut bk, mut best) = (0, 0, -1.0);
            for k in 0..resid.ncols() {
                for i in 0..resid.nrows() {
                    if resid[(i, k)].abs() > best {
                        best = resid[(i, k)].abs();
                        bi = i;
                        bk = k;
                    }
                }
            }
            let mut g = DMatrix::zeros(resid.nrows(), resid.ncols());
            g[(bi, bk)] = resid[(bi, bk)].signum();
            g
        }
    };
    let mut gw = Vec::with_capacity(s.w.len());
    let mut ga = Vec::with_capacity(s.w.len());
    for k in 0..s.w.len() {
        let z = x * s.w[k].transpose();
        let m = z.ncols();
        let mut gwk = DMatrix::zeros(m, x.ncols());
        let mut gak = DVector::zeros(m);
        for i in 0..x.nrows() {
            let d = dl[(i, k)];
            if d == 0.0 {
                continue;
            }
            for j in 0..m {
                let zij = z[(i, j)];
                gak[j] += d * act.eval(zij);
                let coef = d * s.alpha[k][j] * (2.0 * act.a * zij + act.b);
                for c in 0..x.ncols() {
                    gwk[(j, c)] += coef * x[(i, c)];
                }
            }
        }
        gw.push(gwk);
        ga.push(gak);
    }
    (gw, ga)
}

fn normalize_rows(w: &mut DMatrix<f64>) {
    for mut row in w.row_iter_mut() {
        let nrm = row.norm();
        if nrm > 0.0 {
            row /= nrm;
        } else {
            row[0] = 1.0;
        }
    }
}

/// Projected proximal-gradient descent on the nonconvex primal problem
/// `l(Σⱼ αⱼσ(Xwⱼ) − y) + β Σⱼ|αⱼ|` with `‖wⱼ‖ = 1`, using `m` neurons per
/// output. Returns the best network over all restarts and its objective.
pub fn primal_descent_oracle(
    x: &DMatrix<f64>,
    y: &DMatrix<f64>,
    cfg: &TrainingConfig,
    m: usize,
    seed: u64,
) -> Result<(NeuronList, f64), TrainingError> {
    primal_descent_oracle_with(x, y, cfg, m, seed, &OracleConfig::default())
}

pub fn primal_descent_oracle_with(
    x: &DMatrix<f64>,
    y: &DMatrix<f64>,
    cfg: &TrainingConfig,
    m: usize,
    seed: u64,
    oracle: &OracleConfig,
) -> Result<(NeuronList, f64), TrainingError> {
    validate(x, y, cfg)?;
    let x = if cfg.offset_augment {
        with_offset_column(x)
    } else {
        x.clone()
    };
    let (n, p) = (x.ncols(), y.ncols());
    let to_list = |s: &PrimalState| NeuronList {
        n_inputs: n,
        outputs: (0..p)
            .map(|k| {
                (0..m)
                    .map(|j| Neuron {
                        w: s.w[k].row(j).transpose(),
                        alpha: s.alpha[k][j],
                    })
                    .collect()
            })
            .collect(),
    };
    if m == 0 {
        let zero = DMatrix::zeros(x.nrows(), p);
        return Ok((NeuronList::new(n, p), objective_value(&zero, y, cfg.loss, cfg.beta, 0.0)));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let yscale = y.amax().max(1e-3);
    let mut best: Option<(PrimalState, f64)> = None;
    for _ in 0..oracle.restarts.max(1) {
        let mut s = PrimalState {
            w: (0..p)
                .map(|_| {
                    let mut w = DMatrix::from_fn(m, n, |_, _| rng.sample::<f64, _>(StandardNormal));
                    normalize_rows(&mut w);
                    w
                })
                .collect(),
            alpha: (0..p)
                .map(|_| DVector::from_fn(m, |_, _| yscale * rng.gen_range(-1.0..1.0)))
                .collect(),
        };
        let mut f = primal_objective(&x, y, cfg, &s);
        let mut step = 1e-2;
        let mut checkpoint = f;
        for it in 1..=oracle.max_steps {
            let (gw, ga) = primal_gradient(&x, y, cfg, &s);
            let mut accepted = false;
            for _ in 0..60 {
                let mut cand = PrimalState {
                    w: s.w.iter().zip(&gw).map(|(w, g)| w - g * step).collect(),
                    alpha: s
                        .alpha
                        .iter()
                        .zip(&ga)
                        .map(|(a, g)| {
                            // soft threshold for the ℓ₁ term
                            (a - g * step).map(|v| v.signum() * (v.abs() - step * cfg.beta).max(0.0))
                        })
                        .collect(),
                };
                cand.w.iter_mut().for_each(normalize_rows);
                let fc = primal_objective(&x, y, cfg, &cand);
                if fc <= f {
                    s = cand;
                    f = fc;
                    step *= 1.5;
                    accepted = true;
                    break;
                }
                step *= 0.5;
            }
            if !accepted {
                break;
            }
            if it % 100 == 0 {
                if checkpoint - f <= oracle.stall_tol * (1.0 + f.abs()) {
                    break;
                }
                checkpoint = f;
            }
        }
        if best.as_ref().is_none_or(|(_, bf)| f < *bf) {
            best = Some((s, f));
        }
    }
    let (s, f) = best.expect("at least one restart");
    Ok((to_list(&s), f))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn problem_counts() {
        let x = DMatrix::from_column_slice(3, 1, &[-1.0, 0.0, 1.0]);
        let y = DMatrix::from_column_slice(3, 1, &[-0.8539, 0.1619, 1.2425]);
        let tp = build_problem(&x, &y, &TrainingConfig::default()).unwrap();
        assert_eq!(tp.problem.num_blocks(), 2);
        assert!(tp.problem.blocks().iter().all(|b| b.dim() == 2));
        assert_eq!(tp.problem.num_equalities(), 2);
        assert_eq!(tp.problem.objective().squares.len(), 3);
        assert!(tp.problem.objective().linear.is_constant());

        let cfg = TrainingConfig {
            loss: Loss::InfinityNorm,
            ..Default::default()
        };
        let tp = build_problem(&x, &y, &cfg).unwrap();
        assert_eq!(tp.problem.num_scalars(), 1);
        assert_eq!(tp.problem.epigraph().unwrap().terms.len(), 6);
    }

    #[test]
    fn rejects_bad_inputs() {
        let x = DMatrix::zeros(0, 1);
        let y = DMatrix::zeros(0, 1);
        assert_eq!(
            build_problem(&x, &y, &TrainingConfig::default()).unwrap_err(),
            TrainingError::EmptyData
        );
        let x = DMatrix::zeros(2, 1);
        let y = DMatrix::zeros(3, 1);
        assert!(matches!(
            build_problem(&x, &y, &TrainingConfig::default()),
            Err(TrainingError::DimensionMismatch(_))
        ));
        let cfg = TrainingConfig {
            beta: -1.0,
            ..Default::default()
        };
        assert_eq!(
            build_problem(&DMatrix::zeros(2, 1), &DMatrix::zeros(2, 1), &cfg).unwrap_err(),
            TrainingError::InvalidBeta(-1.0)
        );
    }

    #[test]
    fn zero_labels_give_zero_network() {
        let x = DMatrix::from_column_slice(4, 1, &[-1.0, 0.5, 1.0, 2.0]);
        let y = DMatrix::zeros(4, 1);
        let cfg = TrainingConfig {
            beta: 0.1,
            ..Default::default()
        };
        let out = train(&x, &y, &cfg).unwrap();
        assert_abs_diff_eq!(out.network.zbar(0), DMatrix::zeros(2, 2), epsilon = 1e-6);
        assert_abs_diff_eq!(out.objective, 0.0, epsilon = 1e-6);
    }

    #[test]
    fn neuron_count_of_constructed_variables() {
        let v = DVector::from_vec(vec![1.0, 2.0, 0.5]);
        let u = DVector::from_vec(vec![0.0, 1.0, -1.0]);
        let vars = TrainingVariables {
            plus: vec![&v * v.transpose() + &u * u.transpose()],
            minus: vec![DMatrix::zeros(3, 3)],
        };
        assert_eq!(minimal_neuron_count(&vars, 1e-6), 2);
        let zero = TrainingVariables {
            plus: vec![DMatrix::zeros(3, 3)],
            minus: vec![DMatrix::zeros(3, 3)],
        };
        assert_eq!(minimal_neuron_count(&zero, 1e-6), 0);
    }

    #[test]
    fn oracle_with_no_neurons_reports_zero_predictor() {
        let x = DMatrix::from_column_slice(3, 1, &[-1.0, 0.0, 1.0]);
        let y = DMatrix::from_column_slice(3, 1, &[1.0, 2.0, -2.0]);
        let (list, loss) = primal_descent_oracle(&x, &y, &TrainingConfig::default(), 0, 1).unwrap();
        assert_eq!(list.total(), 0);
        assert_abs_diff_eq!(loss, 9.0);
    }
}
