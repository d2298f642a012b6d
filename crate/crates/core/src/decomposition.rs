//! Neural decomposition: rank-one factorizations `Z = Σ vvᵀ` with
//! `vᵀGv = 0`, `G = diag(Iₙ, −1)`, and the weights they encode.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::linalg::{check_symmetric, sym_eigen, LinalgError};
use crate::network::{ActivationParams, Neuron, NeuronList, QuadraticNetwork, QnnError};
use crate::training::TrainingVariables;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DecompositionError {
    #[error("trace condition Tr(ZG) = 0 violated (value {value:e})")]
    TraceConditionViolated { value: f64 },
    #[error("matrix is not positive semidefinite (minimum eigenvalue {min_eigenvalue:e})")]
    NotPsd { min_eigenvalue: f64 },
    #[error("vector with negligible weight part but nonzero offset {d:e}")]
    DegenerateVector { d: f64 },
    #[error("tolerance must be positive")]
    InvalidTolerance,
    #[error("network is not representable with this activation")]
    NotRepresentable,
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error(transparent)]
    Network(#[from] QnnError),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecompositionConfig {
    /// Eigenvalue cutoff.
    pub tol: f64,
}

impl Default for DecompositionConfig {
    fn default() -> Self {
        Self { tol: 1e-5 }
    }
}

impl DecompositionConfig {
    pub fn new(tol: f64) -> Result<Self, DecompositionError> {
        if tol > 0.0 && tol.is_finite() {
            Ok(Self { tol })
        } else {
            Err(DecompositionError::InvalidTolerance)
        }
    }
}

/// `diag(Iₙ, −1)` of size `n + 1`.
pub fn g_matrix(n: usize) -> DMatrix<f64> {
    DMatrix::from_fn(n + 1, n + 1, |i, j| match (i == j, i == n) {
        (true, false) => 1.0,
        (true, true) => -1.0,
        _ => 0.0,
    })
}

/// `uᵀGv`
fn g_form(u: &DVector<f64>, v: &DVector<f64>) -> f64 {
    let n = u.len() - 1;
    u.rows(0, n).dot(&v.rows(0, n)) - u[n] * v[n]
}

/// Factors a PSD matrix with `Tr(ZG) = 0` into vectors with `vᵀGv = 0` and
/// `Σ vvᵀ = Z`.
///
/// The eigenvectors above the cutoff are consumed from the front of a
/// working list. A vector that is already null under `G` is emitted; any
/// other is paired with the first vector of opposite sign, the null
/// combination is emitted and the orthogonal remainder is appended.
pub fn neural_decompose(
    z: &DMatrix<f64>,
    cfg: &DecompositionConfig,
) -> Result<Vec<DVector<f64>>, DecompositionError> {
    check_symmetric(z)?;
    let d = z.nrows();
    if d == 0 {
        return Ok(Vec::new());
    }
    let (values, vectors) = sym_eigen(z);
    let lmin = values[d - 1];
    let scale = values[0].abs().max(1.0);
    if lmin < -cfg.tol * scale {
        return Err(DecompositionError::NotPsd {
            min_eigenvalue: lmin,
        });
    }
    let trace = z.trace();
    let tg = (0..d - 1).map(|i| z[(i, i)]).sum::<f64>() - z[(d - 1, d - 1)];
    if tg.abs() > cfg.tol * trace.abs().max(1.0) {
        return Err(DecompositionError::TraceConditionViolated { value: tg });
    }
    let mut list: Vec<DVector<f64>> = (0..d)
        .filter(|&k| values[k] > cfg.tol)
        .map(|k| vectors.column(k) * values[k].sqrt())
        .collect();
    let mut out = Vec::with_capacity(list.len());
    let null_tol = cfg.tol * scale;
    while list.len() > 1 {
        let p1 = list.remove(0);
        let g11 = g_form(&p1, &p1);
        if g11.abs() <= null_tol {
            out.push(p1);
            continue;
        }
        let Some(j) = list.iter().position(|pj| g11 * g_form(pj, pj) < 0.0) else {
            return Err(DecompositionError::TraceConditionViolated { value: g11 });
        };
        let pj = list.remove(j);
        let (g1j, gjj) = (g_form(&p1, &pj), g_form(&pj, &pj));
        let delta = (4.0 * (g1j * g1j - g11 * gjj)).max(0.0);
        let gamma = (-2.0 * g1j + delta.sqrt()) / (2.0 * gjj);
        let norm = (1.0 + gamma * gamma).sqrt();
        out.push((&p1 + &pj * gamma) / norm);
        list.push((&pj - &p1 * gamma) / norm);
    }
    out.extend(list);
    Ok(out)
}

/// Weights from the vectors of one output: `v = [c; d]` is flipped so that
/// `d ≥ 0`, then `w = c/‖c‖` and `α = ±d²` (plus side positive).
pub fn extract_weights(
    plus: &[Vec<DVector<f64>>],
    minus: &[Vec<DVector<f64>>],
    cfg: &DecompositionConfig,
) -> Result<NeuronList, DecompositionError> {
    let n_outputs = plus.len().max(minus.len());
    let n_inputs = plus
        .iter()
        .chain(minus)
        .flatten()
        .map(|v| v.len() - 1)
        .next()
        .unwrap_or(0);
    let mut list = NeuronList::new(n_inputs, n_outputs);
    for k in 0..n_outputs {
        let sides = [(plus.get(k), 1.0), (minus.get(k), -1.0)];
        for (vs, sign) in sides {
            for v in vs.into_iter().flatten() {
                if v.norm() <= cfg.tol {
                    continue;
                }
                let n = v.len() - 1;
                let v = if v[n] < 0.0 { -v } else { v.clone() };
                let c = v.rows(0, n).into_owned();
                let d = v[n];
                let cn = c.norm();
                if cn <= cfg.tol {
                    if d.abs() > cfg.tol {
                        return Err(DecompositionError::DegenerateVector { d });
                    }
                    continue;
                }
                list.outputs[k].push(Neuron {
                    w: c / cn,
                    alpha: sign * d * d,
                });
            }
        }
    }
    Ok(list)
}

/// Network induced by explicit weights: top-left `aΣαwwᵀ`, offset
/// `(b/2)Σαw`, corner `cΣα`.
pub fn reconstruct(neurons: &NeuronList, act: &ActivationParams) -> QuadraticNetwork {
    let n = neurons.n_inputs;
    let mats: Vec<DMatrix<f64>> = neurons
        .outputs
        .iter()
        .map(|list| {
            let mut z = DMatrix::zeros(n + 1, n + 1);
            for nrn in list {
                let mut top = z.view_mut((0, 0), (n, n));
                top.ger(act.a * nrn.alpha, &nrn.w, &nrn.w, 1.0);
                for i in 0..n {
                    z[(i, n)] += 0.5 * act.b * nrn.alpha * nrn.w[i];
                }
                z[(n, n)] += act.c * nrn.alpha;
            }
            for i in 0..n {
                z[(n, i)] = z[(i, n)];
            }
            z
        })
        .collect();
    if mats.is_empty() {
        return QuadraticNetwork::zeros(n, 0, *act);
    }
    QuadraticNetwork::from_matrices(*act, &mats).expect("symmetric by construction")
}

/// Training-space matrix `[[Z¹, Z²], [Z²ᵀ, Tr Z¹]]` of a network output:
/// `Z¹ = Z̄₁₁/a`, `Z² = 2Z̄₁₂/b`.
pub fn parameter_matrix(
    zbar: &DMatrix<f64>,
    act: &ActivationParams,
    tol: f64,
) -> Result<DMatrix<f64>, DecompositionError> {
    if !crate::network::is_representable(zbar, act, tol) {
        return Err(DecompositionError::NotRepresentable);
    }
    let d = zbar.nrows();
    let n = d - 1;
    let mut z = DMatrix::zeros(d, d);
    for i in 0..n {
        for j in 0..n {
            z[(i, j)] = zbar[(i, j)] / act.a;
        }
        let off = if act.b != 0.0 {
            2.0 * zbar[(i, n)] / act.b
        } else if zbar[(i, n)].abs() <= tol {
            0.0
        } else {
            return Err(DecompositionError::NotRepresentable);
        };
        z[(i, n)] = off;
        z[(n, i)] = off;
    }
    z[(n, n)] = (0..n).map(|i| z[(i, i)]).sum();
    Ok(z)
}

/// PSD pair `(Z₊, Z₋)` with `Z₊ − Z₋ = Z` and `Tr(Z±G) = 0`, starting from
/// the spectral split. If the spectral parts miss the trace condition by
/// `δ = Tr(Z₊G)`, a common PSD term `H` with `Tr(HG) = −δ` is added to
/// both.
pub fn trace_balanced_split(
    z: &DMatrix<f64>,
) -> Result<(DMatrix<f64>, DMatrix<f64>), DecompositionError> {
    let (mut plus, mut minus) = crate::network::symmetric_split(z)?;
    let d = z.nrows();
    let n = d - 1;
    let delta = (0..n).map(|i| plus[(i, i)]).sum::<f64>() - plus[(n, n)];
    if delta > 0.0 {
        plus[(n, n)] += delta;
        minus[(n, n)] += delta;
    } else if delta < 0.0 && n > 0 {
        let share = -delta / n as f64;
        for i in 0..n {
            plus[(i, i)] += share;
            minus[(i, i)] += share;
        }
    }
    Ok((plus, minus))
}

/// Decomposes solved training variables output by output.
pub fn decompose_variables(
    vars: &TrainingVariables,
    cfg: &DecompositionConfig,
) -> Result<NeuronList, DecompositionError> {
    let mut plus = Vec::with_capacity(vars.n_outputs());
    let mut minus = Vec::with_capacity(vars.n_outputs());
    for k in 0..vars.n_outputs() {
        plus.push(neural_decompose(&vars.plus[k], cfg)?);
        minus.push(neural_decompose(&vars.minus[k], cfg)?);
    }
    extract_weights(&plus, &minus, cfg)
}

/// Explicit weights of a representable network.
pub fn decompose_network(
    net: &QuadraticNetwork,
    cfg: &DecompositionConfig,
    representability_tol: f64,
) -> Result<NeuronList, DecompositionError> {
    let act = net.activation();
    let mut plus = Vec::with_capacity(net.n_outputs());
    let mut minus = Vec::with_capacity(net.n_outputs());
    for k in 0..net.n_outputs() {
        let z = parameter_matrix(&net.zbar(k), &act, representability_tol)?;
        let (zp, zm) = trace_balanced_split(&z)?;
        plus.push(neural_decompose(&zp, cfg)?);
        minus.push(neural_decompose(&zm, cfg)?);
    }
    let mut list = extract_weights(&plus, &minus, cfg)?;
    list.n_inputs = net.n_inputs();
    Ok(list)
}
