//! End-to-end runs: regression, classification, identification, control
//! synthesis and Lipschitz certification.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::control::lyapunov::{verify_lyapunov, LyapunovReport, VerifyMethod};
use crate::control::{
    build_closed_loop, cost_lower_bound, heuristic_controller, synthesize_lmi, ControlError, Controller,
    LmiConfig, LyapunovCandidate, PolySystem, Region,
};
use crate::data_io::{write_table, CertificateRecord, ControllerRecord, DataError, Dataset, ModelFile};
use crate::decomposition::{decompose_variables, DecompositionConfig, DecompositionError};
use crate::network::{lipschitz_constants, NeuronList, QnnError, QuadraticNetwork};
use crate::sdp::{SolveStatus, SolverConfig};
use crate::sysid::{build_sysid_matrices, identify, IoLog, StateSpaceModel, SysidError};
use crate::training::{train, with_offset_column, SolveDiagnostics, TrainingConfig, TrainingError};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Training(#[from] TrainingError),
    #[error(transparent)]
    Decomposition(#[from] DecompositionError),
    #[error(transparent)]
    Sysid(#[from] SysidError),
    #[error(transparent)]
    Control(#[from] ControlError),
    #[error(transparent)]
    Network(#[from] QnnError),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TaskKind {
    Regression,
    Classification,
    Sysid,
    Synthesis,
    Lipschitz,
}

/// Summary of one run. Timings are wall-clock on the local machine.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub task: TaskKind,
    pub objective: Option<f64>,
    pub metrics: BTreeMap<String, f64>,
    pub seconds: f64,
    pub diagnostics: Vec<SolveDiagnostics>,
    pub artifacts: Vec<PathBuf>,
    pub notes: Vec<String>,
}

impl RunReport {
    fn new(task: TaskKind) -> Self {
        Self {
            task,
            objective: None,
            metrics: BTreeMap::new(),
            seconds: 0.0,
            diagnostics: Vec::new(),
            artifacts: Vec::new(),
            notes: Vec::new(),
        }
    }

    fn metric(&mut self, key: &str, value: f64) {
        self.metrics.insert(key.to_string(), value);
    }

    pub fn get(&self, key: &str) -> Option<f64> {
        self.metrics.get(key).copied()
    }

    /// Writes `report.json` into `dir` and records it.
    pub fn save(&mut self, dir: &Path) -> Result<PathBuf, DataError> {
        let path = dir.join("report.json");
        self.artifacts.push(path.clone());
        let text = serde_json::to_string_pretty(self).map_err(|e| DataError::SchemaError(e.to_string()))?;
        std::fs::write(&path, text)?;
        Ok(path)
    }
}

/// Network outputs, appending the offset column when the network was
/// trained with one.
pub fn predict(net: &QuadraticNetwork, x: &DMatrix<f64>, offset: bool) -> Result<DMatrix<f64>, QnnError> {
    if offset {
        net.evaluate_rows(&with_offset_column(x))
    } else {
        net.evaluate_rows(x)
    }
}

/// Index of the largest entry; ties go to the smallest index.
pub fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (k, &v) in row.iter().enumerate().skip(1) {
        if v > row[best] {
            best = k;
        }
    }
    best
}

pub fn classify(net: &QuadraticNetwork, x: &DMatrix<f64>, offset: bool) -> Result<Vec<usize>, QnnError> {
    let out = predict(net, x, offset)?;
    Ok(out.row_iter().map(|r| argmax(&r.iter().copied().collect::<Vec<_>>())).collect())
}

pub fn accuracy(pred: &[usize], labels: &[usize]) -> f64 {
    if labels.is_empty() {
        return 0.0;
    }
    pred.iter().zip(labels).filter(|(a, b)| a == b).count() as f64 / labels.len() as f64
}

fn concat_columns(parts: &[&DMatrix<f64>]) -> DMatrix<f64> {
    let rows = parts[0].nrows();
    let cols: usize = parts.iter().map(|p| p.ncols()).sum();
    let mut out = DMatrix::zeros(rows, cols);
    let mut at = 0;
    for p in parts {
        out.view_mut((0, at), (rows, p.ncols())).copy_from(p);
        at += p.ncols();
    }
    out
}

#[derive(Debug, Clone)]
pub struct RegressionRun {
    pub report: RunReport,
    pub network: QuadraticNetwork,
    pub neurons: NeuronList,
    pub model: ModelFile,
    /// Columns `x…, y…, ŷ…`.
    pub table: DMatrix<f64>,
}

impl RegressionRun {
    pub fn save(&mut self, dir: &Path) -> Result<(), DataError> {
        std::fs::create_dir_all(dir)?;
        let model = dir.join("model.json");
        self.model.save(&model)?;
        let table = dir.join("predictions.txt");
        let p = self.network.n_outputs();
        let header = table_header(&[("x", self.table.ncols() - 2 * p), ("y", p), ("yhat", p)]);
        write_table(&table, &header.iter().map(String::as_str).collect::<Vec<_>>(), &self.table)?;
        self.report.artifacts.extend([model, table]);
        self.report.save(dir)?;
        Ok(())
    }
}

fn table_header(groups: &[(&str, usize)]) -> Vec<String> {
    groups
        .iter()
        .flat_map(|(name, count)| (0..*count).map(move |k| format!("{name}{k}")))
        .collect()
}

/// Trains, decomposes and reports fit residuals and neuron count.
pub fn run_regression(
    data: &Dataset,
    cfg: &TrainingConfig,
    decomposition: &DecompositionConfig,
) -> Result<RegressionRun, PipelineError> {
    let start = Instant::now();
    let outcome = train(&data.x, &data.y, cfg)?;
    let neurons = decompose_variables(&outcome.variables, decomposition)?;
    let pred = predict(&outcome.network, &data.x, cfg.offset_augment)?;
    let resid = &pred - &data.y;
    let mut report = RunReport::new(TaskKind::Regression);
    report.objective = Some(outcome.objective);
    report.metric("neurons", neurons.total() as f64);
    report.metric("max_abs_residual", resid.amax());
    report.metric("rms_residual", (resid.norm_squared() / resid.len() as f64).sqrt());
    report.metric("regularizer", outcome.variables.regularizer());
    report.metric("beta", cfg.beta);
    report.diagnostics = outcome.diagnostics.clone();
    report.seconds = start.elapsed().as_secs_f64();
    let model = ModelFile::from_network(&outcome.network, cfg.offset_augment).with_neurons(&neurons);
    Ok(RegressionRun {
        report,
        table: concat_columns(&[&data.x, &data.y, &pred]),
        network: outcome.network,
        neurons,
        model,
    })
}

#[derive(Debug, Clone)]
pub struct ClassificationRun {
    pub report: RunReport,
    pub network: QuadraticNetwork,
    pub model: ModelFile,
    pub predictions: Vec<usize>,
}

fn labels_of(d: &Dataset) -> Vec<usize> {
    d.labels
        .clone()
        .unwrap_or_else(|| d.y.row_iter().map(|r| argmax(&r.iter().copied().collect::<Vec<_>>())).collect())
}

/// Trains on one-hot targets and reports held-out accuracy.
pub fn run_classification(
    train_set: &Dataset,
    test_set: &Dataset,
    cfg: &TrainingConfig,
) -> Result<ClassificationRun, PipelineError> {
    if train_set.y.ncols() != test_set.y.ncols() || train_set.x.ncols() != test_set.x.ncols() {
        return Err(PipelineError::InvalidArgument("train and test sets differ in shape".into()));
    }
    let start = Instant::now();
    let outcome = train(&train_set.x, &train_set.y, cfg)?;
    let train_time = start.elapsed().as_secs_f64();
    let offset = cfg.offset_augment;
    let train_pred = classify(&outcome.network, &train_set.x, offset)?;
    let predictions = classify(&outcome.network, &test_set.x, offset)?;
    let mut report = RunReport::new(TaskKind::Classification);
    report.objective = Some(outcome.objective);
    report.metric("train_accuracy", accuracy(&train_pred, &labels_of(train_set)));
    report.metric("test_accuracy", accuracy(&predictions, &labels_of(test_set)));
    report.metric("train_samples", train_set.len() as f64);
    report.metric("test_samples", test_set.len() as f64);
    report.metric("beta", cfg.beta);
    report.metric("train_seconds", train_time);
    report.diagnostics = outcome.diagnostics.clone();
    report.seconds = start.elapsed().as_secs_f64();
    Ok(ClassificationRun {
        model: ModelFile::from_network(&outcome.network, offset),
        network: outcome.network,
        report,
        predictions,
    })
}

#[derive(Debug, Clone)]
pub struct SysidRun {
    pub report: RunReport,
    pub model: StateSpaceModel,
    pub file: ModelFile,
    /// Columns `t, y…, ŷ…`.
    pub table: DMatrix<f64>,
}

impl SysidRun {
    pub fn save(&mut self, dir: &Path) -> Result<(), DataError> {
        std::fs::create_dir_all(dir)?;
        let model = dir.join("model.json");
        self.file.save(&model)?;
        let table = dir.join("one_step.txt");
        let p = self.model.n_outputs();
        let header = table_header(&[("t", 1), ("y", p), ("yhat", p)]);
        write_table(&table, &header.iter().map(String::as_str).collect::<Vec<_>>(), &self.table)?;
        self.report.artifacts.extend([model, table]);
        self.report.save(dir)?;
        Ok(())
    }
}

/// Identifies a model on the leading fraction of the log and reports the
/// one-step prediction error over the whole log.
pub fn run_sysid(
    log: &IoLog,
    delays: usize,
    train_fraction: f64,
    cfg: &TrainingConfig,
) -> Result<SysidRun, PipelineError> {
    if !(train_fraction > 0.0 && train_fraction <= 1.0) {
        return Err(PipelineError::InvalidArgument(format!(
            "train fraction {train_fraction} outside (0, 1]"
        )));
    }
    let start = Instant::now();
    let len = ((log.len() as f64 * train_fraction).round() as usize).clamp(delays + 1, log.len());
    let (model, outcome) = identify(&log.head(len), delays, cfg)?;
    let (x, y) = build_sysid_matrices(log, delays)?;
    let net = QuadraticNetwork::from_matrices(cfg.activation, model.zbars())?;
    let pred = net.evaluate_rows(&x)?;
    let resid = &pred - &y;
    let mut report = RunReport::new(TaskKind::Sysid);
    report.objective = Some(outcome.objective);
    report.metric("train_samples", len as f64);
    report.metric("relative_error", resid.norm() / y.norm().max(f64::MIN_POSITIVE));
    report.metric("max_abs_error", resid.amax());
    report.metric("delays", delays as f64);
    report.diagnostics = outcome.diagnostics;
    report.seconds = start.elapsed().as_secs_f64();
    let t = DMatrix::from_fn(y.nrows(), 1, |i, _| (i + delays) as f64);
    Ok(SysidRun {
        report,
        file: ModelFile::from_model(&model, cfg.activation)?,
        table: concat_columns(&[&t, &y, &pred]),
        model,
    })
}

#[derive(Debug, Clone)]
pub enum SynthesisMode {
    Lmi(LmiConfig),
    CostBound {
        q: DMatrix<f64>,
        r: DMatrix<f64>,
        solver: SolverConfig,
    },
    /// Checks a given constant-gain controller against `V = (x − x★)ᵀP(x − x★)`.
    Verify {
        controller: Controller,
        p: DMatrix<f64>,
        region: Region,
        method: VerifyMethod,
    },
}

#[derive(Debug, Clone)]
pub struct SynthesisRun {
    pub report: RunReport,
    pub controller: Controller,
    pub certificate: CertificateRecord,
    pub lyapunov: Option<LyapunovReport>,
    /// One rollout per initial state.
    pub trajectories: Vec<Vec<DVector<f64>>>,
    pub dead_beat: bool,
}

impl SynthesisRun {
    pub fn save(&mut self, dir: &Path, model: &ModelFile) -> Result<(), DataError> {
        std::fs::create_dir_all(dir)?;
        let mut file = model.clone();
        file.controller = Some(ControllerRecord::from_controller(&self.controller));
        file.certificate = Some(self.certificate.clone());
        let path = dir.join("controller.json");
        file.save(&path)?;
        self.report.artifacts.push(path);
        if !self.trajectories.is_empty() {
            let nx = self.controller.n_states();
            let rows: Vec<Vec<f64>> = self
                .trajectories
                .iter()
                .enumerate()
                .flat_map(|(r, traj)| {
                    traj.iter().enumerate().map(move |(t, x)| {
                        let mut row = vec![r as f64, t as f64];
                        row.extend(x.iter());
                        row
                    })
                })
                .collect();
            let table = DMatrix::from_fn(rows.len(), nx + 2, |i, j| rows[i][j]);
            let header = table_header(&[("run", 1), ("t", 1), ("x", nx)]);
            let path = dir.join("simulation.txt");
            write_table(&path, &header.iter().map(String::as_str).collect::<Vec<_>>(), &table)?;
            self.report.artifacts.push(path);
        }
        self.report.save(dir)?;
        Ok(())
    }
}

fn is_dead_beat(model: &StateSpaceModel, controller: &Controller) -> Result<bool, ControlError> {
    let poly = build_closed_loop(model, controller)?.polynomial();
    let nx = model.n_states();
    if poly.degree() > 0 {
        return Ok(false);
    }
    let a = poly.eval(&vec![0.0; nx]).view((0, 0), (nx, nx)).into_owned();
    let mut power = DMatrix::identity(nx, nx);
    for _ in 0..nx {
        power = &power * &a;
    }
    Ok(power.amax() <= 1e-12)
}

/// Designs or checks a controller for a quadratic model and rolls it out
/// from the given initial states.
pub fn run_synthesis(
    model: &StateSpaceModel,
    mode: &SynthesisMode,
    initial_states: &[DVector<f64>],
    steps: usize,
) -> Result<SynthesisRun, PipelineError> {
    let start = Instant::now();
    let nx = model.n_states();
    let mut report = RunReport::new(TaskKind::Synthesis);
    let (controller, certificate, lyapunov) = match mode {
        SynthesisMode::Lmi(cfg) => {
            let sys = PolySystem::from_model(model)?;
            let res = synthesize_lmi(&sys, cfg)?;
            report.metric("condition_number", res.condition_number);
            if let Some(eta) = res.eta {
                report.metric("eta", eta);
            }
            report.metric("iterations", res.iterations as f64);
            let cert = CertificateRecord {
                kind: "lmi".into(),
                p: res.p.transpose().as_slice().to_vec(),
                epsilon: Some(res.epsilon),
                trace: None,
                region: region_record(&res.region),
            };
            (res.controller(), cert, None)
        }
        SynthesisMode::CostBound { q, r, solver } => {
            let sys = PolySystem::from_model(model)?;
            let bound = cost_lower_bound(&sys, q, r, solver)?;
            report.metric("trace", bound.trace);
            report.objective = Some(bound.trace);
            let h = heuristic_controller(&sys, &bound.p, r)?;
            let gain = h.polynomial_gain().ok_or_else(|| {
                PipelineError::InvalidArgument("input matrix depends on the state; no polynomial gain".into())
            })?;
            let cert = CertificateRecord {
                kind: "cost-bound".into(),
                p: bound.p.transpose().as_slice().to_vec(),
                epsilon: None,
                trace: Some(bound.trace),
                region: None,
            };
            (Controller::regulator(gain), cert, None)
        }
        SynthesisMode::Verify {
            controller,
            p,
            region,
            method,
        } => {
            let cand = LyapunovCandidate::new(p.clone(), controller.x_star.clone())?;
            let acl = build_closed_loop(model, controller)?.polynomial();
            let rep = verify_lyapunov(&acl, &cand.p_bar(), region, method)?;
            let cert = CertificateRecord {
                kind: "lyapunov".into(),
                p: p.transpose().as_slice().to_vec(),
                epsilon: None,
                trace: None,
                region: region_record(region),
            };
            (controller.clone(), cert, Some(rep))
        }
    };
    let dead_beat = is_dead_beat(model, &controller)?;
    report.metric("global", f64::from(u8::from(certificate.region.is_none())));
    report.metric("dead_beat", f64::from(u8::from(dead_beat)));
    report.notes.push(format!(
        "certificate: {}{}",
        if certificate.region.is_none() { "global" } else { "regional" },
        if dead_beat { ", dead-beat" } else { "" }
    ));

    let cl = build_closed_loop(model, &controller)?;
    let mut trajectories = Vec::with_capacity(initial_states.len());
    for x0 in initial_states {
        if x0.len() != nx {
            return Err(PipelineError::InvalidArgument(format!("initial state has {} entries, need {nx}", x0.len())));
        }
        let mut traj = vec![x0.clone()];
        for _ in 0..steps {
            let next = cl.step(traj.last().expect("nonempty"));
            let diverged = !next.iter().all(|v| v.is_finite());
            traj.push(next);
            if diverged {
                break;
            }
        }
        trajectories.push(traj);
    }
    if let Some(worst) = trajectories.iter().filter_map(|t| t.last()).map(|x| x.amax()).reduce(f64::max) {
        report.metric("final_state_max_abs", worst);
    }
    report.seconds = start.elapsed().as_secs_f64();
    Ok(SynthesisRun {
        report,
        controller,
        certificate,
        lyapunov,
        trajectories,
        dead_beat,
    })
}

fn region_record(region: &Region) -> Option<Vec<(f64, f64)>> {
    match region {
        Region::Global => None,
        Region::Box(b) => Some(b.clone()),
    }
}

/// Per-output Lipschitz constants when every input satisfies
/// `‖x‖∞ ≤ x_bound`.
pub fn run_lipschitz(net: &QuadraticNetwork, x_bound: f64) -> Result<(RunReport, Vec<f64>), PipelineError> {
    if !(x_bound >= 0.0 && x_bound.is_finite()) {
        return Err(PipelineError::InvalidArgument(format!("input bound {x_bound}")));
    }
    let start = Instant::now();
    // the augmented input also carries the constant 1
    let bounds = lipschitz_constants(net, 2.0 * x_bound.max(1.0));
    let mut report = RunReport::new(TaskKind::Lipschitz);
    for (k, b) in bounds.iter().enumerate() {
        report.metric(&format!("L{k}"), *b);
    }
    report.metric("max", bounds.iter().copied().fold(0.0, f64::max));
    report.metric("x_bound", x_bound);
    report.seconds = start.elapsed().as_secs_f64();
    Ok((report, bounds))
}

/// Whether a failure came from the solver rather than from the data or an
/// infeasible design.
pub fn is_solver_failure(e: &PipelineError) -> bool {
    match e {
        PipelineError::Training(t) | PipelineError::Sysid(SysidError::Training(t)) => {
            matches!(t, TrainingError::SolverFailed(_) | TrainingError::Sdp(_))
        }
        PipelineError::Control(c) => matches!(
            c,
            ControlError::SolverFailed(_) | ControlError::Sdp(_) | ControlError::NotCertified(SolveStatus::MaxIterations)
        ),
        _ => false,
    }
}

pub fn is_infeasible(e: &PipelineError) -> bool {
    matches!(
        e,
        PipelineError::Control(
            ControlError::Infeasible | ControlError::Unbounded | ControlError::Violated { .. } | ControlError::NotCertified(_)
        )
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn argmax_prefers_smallest_index() {
        assert_eq!(argmax(&[0.2, 0.7, 0.7, 0.1]), 1);
        assert_eq!(argmax(&[1.0, 1.0]), 0);
        assert_eq!(argmax(&[-3.0]), 0);
    }
}
