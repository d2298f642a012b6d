//! Autoregressive identification of quadratic state-space models.
//!
//! With `n` delays, `p` outputs and `m` inputs the state is
//! `x(t) = [y(t−n+1); …; y(t)]` and each next output is the quadratic form
//! `ξᵀZ̄ⁱξ` of the regressor `ξ = [u(t); x(t); 1]`.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::linalg::check_symmetric;
use crate::network::QuadraticNetwork;
use crate::training::{train, TrainOutcome, TrainingConfig, TrainingError};

/// Any state component beyond this magnitude aborts a rollout.
pub const DIVERGENCE_LIMIT: f64 = 1e12;

#[derive(Debug, Error)]
pub enum SysidError {
    #[error("input log has {inputs} rows but output log has {outputs}")]
    LengthMismatch { inputs: usize, outputs: usize },
    #[error("need more than {needed} samples, got {got}")]
    TooFewSamples { needed: usize, got: usize },
    #[error("number of delays must be at least 1")]
    InvalidDelays,
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("trajectory diverged at step {step}")]
    NonFinite { step: usize },
    #[error("signal has zero variance")]
    ConstantSignal,
    #[error(transparent)]
    Training(#[from] TrainingError),
}

/// Sampled input/output record; row `t` holds `u(t)` or `y(t)`.
#[derive(Debug, Clone, PartialEq)]
pub struct IoLog {
    pub inputs: DMatrix<f64>,
    pub outputs: DMatrix<f64>,
    /// Informational only.
    pub sample_period: Option<f64>,
}

impl IoLog {
    pub fn new(
        inputs: DMatrix<f64>,
        outputs: DMatrix<f64>,
        sample_period: Option<f64>,
    ) -> Result<Self, SysidError> {
        if inputs.nrows() != outputs.nrows() {
            return Err(SysidError::LengthMismatch {
                inputs: inputs.nrows(),
                outputs: outputs.nrows(),
            });
        }
        Ok(Self {
            inputs,
            outputs,
            sample_period,
        })
    }

    pub fn len(&self) -> usize {
        self.outputs.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn n_inputs(&self) -> usize {
        self.inputs.ncols()
    }

    pub fn n_outputs(&self) -> usize {
        self.outputs.ncols()
    }

    /// Leading `len` samples.
    pub fn head(&self, len: usize) -> Self {
        let len = len.min(self.len());
        Self {
            inputs: self.inputs.rows(0, len).into_owned(),
            outputs: self.outputs.rows(0, len).into_owned(),
            sample_period: self.sample_period,
        }
    }

    /// Sample count that makes the fit overdetermined:
    /// `n + (pn+m+1)(pn+m+2)/2`.
    pub fn overdetermined_count(&self, n: usize) -> usize {
        let d = self.n_outputs() * n + self.n_inputs() + 1;
        n + d * (d + 1) / 2
    }
}

/// Regressor rows `[uᵀ(t), yᵀ(t−n+1), …, yᵀ(t)]` and targets `yᵀ(t+1)`.
pub fn build_sysid_matrices(
    log: &IoLog,
    n: usize,
) -> Result<(DMatrix<f64>, DMatrix<f64>), SysidError> {
    if n == 0 {
        return Err(SysidError::InvalidDelays);
    }
    let total = log.len();
    if total <= n {
        return Err(SysidError::TooFewSamples {
            needed: n,
            got: total,
        });
    }
    let (m, p) = (log.n_inputs(), log.n_outputs());
    let rows = total - n;
    let mut x = DMatrix::zeros(rows, m + p * n);
    let mut y = DMatrix::zeros(rows, p);
    for r in 0..rows {
        let t = r + n - 1;
        for j in 0..m {
            x[(r, j)] = log.inputs[(t, j)];
        }
        for lag in 0..n {
            for k in 0..p {
                x[(r, m + lag * p + k)] = log.outputs[(t + 1 - n + lag, k)];
            }
        }
        for k in 0..p {
            y[(r, k)] = log.outputs[(t + 1, k)];
        }
    }
    Ok((x, y))
}

/// Quadratic state-space model with per-output matrices over `[u; x; 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct StateSpaceModel {
    delays: usize,
    p: usize,
    m: usize,
    zbar: Vec<DMatrix<f64>>,
}

impl StateSpaceModel {
    pub fn new(
        delays: usize,
        p: usize,
        m: usize,
        zbar: Vec<DMatrix<f64>>,
    ) -> Result<Self, SysidError> {
        if delays == 0 {
            return Err(SysidError::InvalidDelays);
        }
        let d = m + p * delays + 1;
        if zbar.len() != p {
            return Err(SysidError::DimensionMismatch(format!(
                "{} output matrices for {p} outputs",
                zbar.len()
            )));
        }
        for z in &zbar {
            if z.nrows() != d || z.ncols() != d {
                return Err(SysidError::DimensionMismatch(format!(
                    "matrix is {}x{}, expected {d}x{d}",
                    z.nrows(),
                    z.ncols()
                )));
            }
            check_symmetric(z).map_err(|e| SysidError::DimensionMismatch(e.to_string()))?;
        }
        Ok(Self {
            delays,
            p,
            m,
            zbar,
        })
    }

    pub fn delays(&self) -> usize {
        self.delays
    }

    pub fn n_outputs(&self) -> usize {
        self.p
    }

    pub fn n_inputs(&self) -> usize {
        self.m
    }

    /// State dimension `pn`.
    pub fn n_states(&self) -> usize {
        self.p * self.delays
    }

    pub fn zbar(&self, i: usize) -> &DMatrix<f64> {
        &self.zbar[i]
    }

    pub fn zbars(&self) -> &[DMatrix<f64>] {
        &self.zbar
    }

    pub fn zuu(&self, i: usize) -> DMatrix<f64> {
        self.zbar[i].view((0, 0), (self.m, self.m)).into_owned()
    }

    pub fn zux(&self, i: usize) -> DMatrix<f64> {
        self.zbar[i].view((0, self.m), (self.m, self.n_states())).into_owned()
    }

    pub fn zu(&self, i: usize) -> DVector<f64> {
        self.zbar[i].view((0, self.m + self.n_states()), (self.m, 1)).column(0).into_owned()
    }

    pub fn zxx(&self, i: usize) -> DMatrix<f64> {
        let nx = self.n_states();
        self.zbar[i].view((self.m, self.m), (nx, nx)).into_owned()
    }

    pub fn zx(&self, i: usize) -> DVector<f64> {
        let nx = self.n_states();
        self.zbar[i].view((self.m, self.m + nx), (nx, 1)).column(0).into_owned()
    }

    pub fn znn(&self, i: usize) -> f64 {
        let d = self.m + self.n_states();
        self.zbar[i][(d, d)]
    }

    /// `[[Z̄ₓₓ, Z̄ₓ], [Z̄ₓᵀ, Z̄ₙₙ]]`
    pub fn z_xbar_xbar(&self, i: usize) -> DMatrix<f64> {
        let nx = self.n_states();
        self.zbar[i].view((self.m, self.m), (nx + 1, nx + 1)).into_owned()
    }

    /// `[Z̄ᵤₓ, Z̄ᵤ]`
    pub fn z_u_xbar(&self, i: usize) -> DMatrix<f64> {
        self.zbar[i].view((0, self.m), (self.m, self.n_states() + 1)).into_owned()
    }

    /// Shift matrix: identity on the upper block diagonal, zero last block row.
    pub fn shift_matrix(&self) -> DMatrix<f64> {
        let nx = self.n_states();
        DMatrix::from_fn(nx, nx, |i, j| if j == i + self.p { 1.0 } else { 0.0 })
    }

    /// `diag(A, 1)`
    pub fn script_a(&self) -> DMatrix<f64> {
        let nx = self.n_states();
        let mut a = DMatrix::zeros(nx + 1, nx + 1);
        a.view_mut((0, 0), (nx, nx)).copy_from(&self.shift_matrix());
        a[(nx, nx)] = 1.0;
        a
    }

    /// Rows `x̄ᵀZ̄ⁱₓ̄ₓ̄` in the last state block, zero elsewhere.
    pub fn f_matrix(&self, x: &DVector<f64>) -> DMatrix<f64> {
        let nx = self.n_states();
        let xb = augment_state(x);
        let mut f = DMatrix::zeros(nx + 1, nx + 1);
        for i in 0..self.p {
            let row = xb.transpose() * self.z_xbar_xbar(i);
            f.row_mut(nx - self.p + i).copy_from(&row);
        }
        f
    }

    /// `[B(x); 0]` with rows `2x̄ᵀ(Z̄ⁱᵤₓ̄)ᵀ`.
    pub fn b_bar(&self, x: &DVector<f64>) -> DMatrix<f64> {
        let nx = self.n_states();
        let xb = augment_state(x);
        let mut b = DMatrix::zeros(nx + 1, self.m);
        for i in 0..self.p {
            let row = (self.z_u_xbar(i) * &xb).transpose() * 2.0;
            b.row_mut(nx - self.p + i).copy_from(&row);
        }
        b
    }

    /// Rows `uᵀZ̄ⁱᵤᵤ` in the last state block.
    pub fn e_matrix(&self, u: &DVector<f64>) -> DMatrix<f64> {
        let nx = self.n_states();
        let mut e = DMatrix::zeros(nx + 1, self.m);
        for i in 0..self.p {
            let row = u.transpose() * self.zuu(i);
            e.row_mut(nx - self.p + i).copy_from(&row);
        }
        e
    }

    /// Regressor `[u; x; 1]`.
    pub fn regressor(&self, x: &DVector<f64>, u: &DVector<f64>) -> DVector<f64> {
        let nx = self.n_states();
        let mut xi = DVector::zeros(self.m + nx + 1);
        xi.rows_mut(0, self.m).copy_from(u);
        xi.rows_mut(self.m, nx).copy_from(x);
        xi[self.m + nx] = 1.0;
        xi
    }

    /// Next outputs `ξᵀZ̄ⁱξ`.
    pub fn predict(&self, x: &DVector<f64>, u: &DVector<f64>) -> Result<DVector<f64>, SysidError> {
        self.check_dims(x, u)?;
        let xi = self.regressor(x, u);
        Ok(DVector::from_iterator(
            self.p,
            self.zbar.iter().map(|z| xi.dot(&(z * &xi))),
        ))
    }

    /// One step of the shift form: `x⁺ = Ax + [0; predict(x, u)]`.
    pub fn step(&self, x: &DVector<f64>, u: &DVector<f64>) -> Result<DVector<f64>, SysidError> {
        let y = self.predict(x, u)?;
        let mut next = self.shift_matrix() * x;
        let nx = self.n_states();
        next.rows_mut(nx - self.p, self.p).copy_from(&y);
        Ok(next)
    }

    /// One step of the expanded form `x̄⁺ = Ā(x)x̄ + B̄(x)u + E(u)u`.
    pub fn step_expanded(
        &self,
        x: &DVector<f64>,
        u: &DVector<f64>,
    ) -> Result<DVector<f64>, SysidError> {
        self.check_dims(x, u)?;
        let xb = augment_state(x);
        let abar = self.script_a() + self.f_matrix(x);
        let next = abar * &xb + self.b_bar(x) * u + self.e_matrix(u) * u;
        Ok(next.rows(0, self.n_states()).into_owned())
    }

    /// Rollout from `x0` under the input rows of `inputs`.
    pub fn simulate(
        &self,
        x0: &DVector<f64>,
        inputs: &DMatrix<f64>,
    ) -> Result<Trajectory, SysidError> {
        if inputs.ncols() != self.m {
            return Err(SysidError::DimensionMismatch(format!(
                "inputs have {} columns, model has {} inputs",
                inputs.ncols(),
                self.m
            )));
        }
        let mut states = Vec::with_capacity(inputs.nrows() + 1);
        states.push(x0.clone());
        for t in 0..inputs.nrows() {
            let u = inputs.row(t).transpose();
            let next = self.step(&states[t], &u)?;
            if next.iter().any(|v| !v.is_finite() || v.abs() > DIVERGENCE_LIMIT) {
                return Err(SysidError::NonFinite { step: t + 1 });
            }
            states.push(next);
        }
        Ok(Trajectory::from_states(states, self.p))
    }

    fn check_dims(&self, x: &DVector<f64>, u: &DVector<f64>) -> Result<(), SysidError> {
        if x.len() != self.n_states() || u.len() != self.m {
            return Err(SysidError::DimensionMismatch(format!(
                "state {} / input {}, expected {} / {}",
                x.len(),
                u.len(),
                self.n_states(),
                self.m
            )));
        }
        Ok(())
    }
}

pub(crate) fn augment_state(x: &DVector<f64>) -> DVector<f64> {
    let n = x.len();
    DVector::from_fn(n + 1, |i, _| if i < n { x[i] } else { 1.0 })
}

/// States `x(0..=T)` and the outputs read from their last block.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub states: Vec<DVector<f64>>,
    /// Row `t` is `y(t)`.
    pub outputs: DMatrix<f64>,
}

impl Trajectory {
    pub fn from_states(states: Vec<DVector<f64>>, p: usize) -> Self {
        let outputs = DMatrix::from_fn(states.len(), p, |t, k| {
            let x = &states[t];
            x[x.len() - p + k]
        });
        Self { states, outputs }
    }
}

/// Builds the model from a network whose inputs are `[u; x]`.
pub fn assemble_state_space(
    net: &QuadraticNetwork,
    n: usize,
    p: usize,
    m: usize,
) -> Result<StateSpaceModel, SysidError> {
    if net.n_inputs() != m + p * n || net.n_outputs() != p {
        return Err(SysidError::DimensionMismatch(format!(
            "network maps {} inputs to {} outputs, model needs {} to {p}",
            net.n_inputs(),
            net.n_outputs(),
            m + p * n
        )));
    }
    StateSpaceModel::new(n, p, m, net.matrices())
}

/// Trains a network on the regressor matrices and assembles the model.
/// The constant regressor enters through the augmented input, so offset
/// augmentation is always disabled.
pub fn identify(
    log: &IoLog,
    n: usize,
    cfg: &TrainingConfig,
) -> Result<(StateSpaceModel, TrainOutcome), SysidError> {
    let (x, y) = build_sysid_matrices(log, n)?;
    let needed = log.overdetermined_count(n);
    if log.len() < needed {
        log::warn!(
            "{} samples for {} parameters per output; the fit is not overdetermined",
            log.len(),
            needed - n
        );
    }
    let cfg = TrainingConfig {
        offset_augment: false,
        ..cfg.clone()
    };
    let outcome = train(&x, &y, &cfg)?;
    let model = assemble_state_space(&outcome.network, n, log.n_outputs(), log.n_inputs())?;
    Ok((model, outcome))
}

/// Sample autocorrelation `r(k)` for `k = 0..=max_lag`, each lag averaged
/// over its own `N − k` products and normalized by the variance.
pub fn autocorrelation(y: &[f64], max_lag: usize) -> Result<Vec<f64>, SysidError> {
    let n = y.len();
    if n <= max_lag {
        return Err(SysidError::TooFewSamples {
            needed: max_lag,
            got: n,
        });
    }
    let mean = y.iter().sum::<f64>() / n as f64;
    let var = y.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64;
    if var <= f64::EPSILON * mean.abs().max(1.0).powi(2) {
        return Err(SysidError::ConstantSignal);
    }
    Ok((0..=max_lag)
        .map(|k| {
            let s: f64 = (0..n - k).map(|t| (y[t] - mean) * (y[t + k] - mean)).sum();
            s / (n - k) as f64 / var
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use nalgebra::dvector;

    fn scalar_log(u: &[f64], y: &[f64]) -> IoLog {
        IoLog::new(
            DMatrix::from_column_slice(u.len(), 1, u),
            DMatrix::from_column_slice(y.len(), 1, y),
            None,
        )
        .unwrap()
    }

    #[test]
    fn regressors_with_one_delay() {
        let log = scalar_log(&[1.0, 2.0, 3.0, 4.0], &[10.0, 20.0, 30.0, 40.0]);
        let (x, y) = build_sysid_matrices(&log, 1).unwrap();
        assert_eq!(x, DMatrix::from_row_slice(3, 2, &[1.0, 10.0, 2.0, 20.0, 3.0, 30.0]));
        assert_eq!(y, DMatrix::from_column_slice(3, 1, &[20.0, 30.0, 40.0]));
    }

    #[test]
    fn regressors_with_two_delays() {
        let log = scalar_log(&[1.0, 2.0, 3.0, 4.0, 5.0], &[10.0, 20.0, 30.0, 40.0, 50.0]);
        let (x, y) = build_sysid_matrices(&log, 2).unwrap();
        assert_eq!(
            x,
            DMatrix::from_row_slice(3, 3, &[2.0, 10.0, 20.0, 3.0, 20.0, 30.0, 4.0, 30.0, 40.0])
        );
        assert_eq!(y, DMatrix::from_column_slice(3, 1, &[30.0, 40.0, 50.0]));
        assert!(matches!(
            build_sysid_matrices(&log, 5),
            Err(SysidError::TooFewSamples { .. })
        ));
    }

    #[test]
    fn flexible_arm_constant_term() {
        let z = DMatrix::from_row_slice(
            3,
            3,
            &[-0.0989, 0.5030, -0.1682, 0.5030, 0.1599, 1.8265, -0.1682, 1.8265, 0.0610],
        );
        let model = StateSpaceModel::new(1, 1, 1, vec![z]).unwrap();
        let y = model.predict(&dvector![0.0], &dvector![0.0]).unwrap();
        assert_abs_diff_eq!(y[0], 0.0610);
    }

    #[test]
    fn shift_structure() {
        let z = DMatrix::zeros(4, 4);
        let model = StateSpaceModel::new(2, 1, 1, vec![z]).unwrap();
        assert_eq!(model.shift_matrix(), DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 0.0]));
    }

    #[test]
    fn example_four_blocks() {
        let z = DMatrix::from_row_slice(3, 3, &[1.0, 0.5, 0.0, 0.5, 1.0, 0.0, 0.0, 0.0, -1.0]);
        let model = StateSpaceModel::new(1, 1, 1, vec![z]).unwrap();
        let x = dvector![0.7];
        let u = dvector![-0.3];
        let abar = model.script_a() + model.f_matrix(&x);
        assert_abs_diff_eq!(abar, DMatrix::from_row_slice(2, 2, &[0.7, -1.0, 0.0, 1.0]));
        assert_abs_diff_eq!(model.b_bar(&x), DMatrix::from_column_slice(2, 1, &[0.7, 0.0]));
        assert_abs_diff_eq!(model.e_matrix(&u), DMatrix::from_column_slice(2, 1, &[-0.3, 0.0]));
        let direct = model.step(&x, &u).unwrap();
        assert_abs_diff_eq!(direct[0], 0.49 - 0.21 + 0.09 - 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(model.step_expanded(&x, &u).unwrap(), direct, epsilon = 1e-15);
    }

    #[test]
    fn example_five_rollout() {
        let z = DMatrix::from_row_slice(3, 3, &[0.0, 0.5, 0.0, 0.5, 1.0, 0.0, 0.0, 0.0, 0.0]);
        let model = StateSpaceModel::new(1, 1, 1, vec![z]).unwrap();
        let traj = model.simulate(&dvector![0.5], &DMatrix::zeros(3, 1)).unwrap();
        assert_eq!(traj.outputs.column(0).as_slice(), &[0.5, 0.25, 0.0625, 0.00390625]);
        let zero = model.simulate(&dvector![0.0], &DMatrix::zeros(5, 1)).unwrap();
        assert!(zero.outputs.iter().all(|&v| v == 0.0));
        let blowup = model.simulate(&dvector![10.0], &DMatrix::zeros(10, 1));
        assert!(matches!(blowup, Err(SysidError::NonFinite { step: 4 })));
    }

    #[test]
    fn autocorrelation_basics() {
        let alt: Vec<f64> = (0..50).map(|t| 3.0 + if t % 2 == 0 { 1.0 } else { -1.0 }).collect();
        let r = autocorrelation(&alt, 2).unwrap();
        assert_abs_diff_eq!(r[0], 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(r[1], -1.0, epsilon = 1e-12);
        assert!(matches!(autocorrelation(&[2.0; 10], 1), Err(SysidError::ConstantSignal)));
    }
}
