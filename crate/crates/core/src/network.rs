//! Quadratic networks: activation parameters, the quadratic-form model and
//! the explicit neuron representation.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::{
    self, check_symmetric, max_abs_eigenvalue, min_eigenvalue, packed_index, packed_len,
    LinalgError,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum QnnError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("activation coefficient a must be nonzero and all coefficients finite")]
    InvalidActivation,
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

fn expect_dim(expected: usize, got: usize) -> Result<(), QnnError> {
    if expected == got {
        Ok(())
    } else {
        Err(QnnError::DimensionMismatch { expected, got })
    }
}

/// Coefficients of the activation `σ(z) = a·z² + b·z + c`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ActivationParams {
    pub a: f64,
    pub b: f64,
    pub c: f64,
}

impl Default for ActivationParams {
    /// Least-squares quadratic fit of the ReLU.
    fn default() -> Self {
        Self {
            a: 0.0937,
            b: 0.5,
            c: 0.4688,
        }
    }
}

impl ActivationParams {
    pub fn new(a: f64, b: f64, c: f64) -> Result<Self, QnnError> {
        if a == 0.0 || !a.is_finite() || !b.is_finite() || !c.is_finite() {
            return Err(QnnError::InvalidActivation);
        }
        Ok(Self { a, b, c })
    }

    pub fn eval(&self, z: f64) -> f64 {
        (self.a * z + self.b) * z + self.c
    }

    /// `c / a`, the factor linking the corner entry to the trace.
    pub fn ratio(&self) -> f64 {
        self.c / self.a
    }
}

/// Appends the homogenizing 1 to an input vector.
pub fn augment(x: &DVector<f64>) -> DVector<f64> {
    let n = x.len();
    DVector::from_fn(n + 1, |i, _| if i < n { x[i] } else { 1.0 })
}

/// `x̄ᵀ Z x̄` for a packed upper-triangular `Z`; off-diagonal entries count
/// twice.
fn packed_form(packed: &[f64], dim: usize, xbar: &[f64]) -> f64 {
    let mut acc = 0.0;
    let mut k = 0;
    for i in 0..dim {
        let xi = xbar[i];
        acc += packed[k] * xi * xi;
        k += 1;
        let mut row = 0.0;
        for j in (i + 1)..dim {
            row += packed[k] * xbar[j];
            k += 1;
        }
        acc += 2.0 * xi * row;
    }
    acc
}

/// Single-hidden-layer quadratic network stored as one symmetric
/// `(n+1)×(n+1)` matrix per output, `ŷᵏ = x̄ᵀZ̄ᵏx̄`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticNetwork {
    n_inputs: usize,
    activation: ActivationParams,
    /// Upper triangles, row-major.
    zbar: Vec<Vec<f64>>,
}

impl QuadraticNetwork {
    /// Builds a network from full symmetric matrices.
    pub fn from_matrices(
        activation: ActivationParams,
        mats: &[DMatrix<f64>],
    ) -> Result<Self, QnnError> {
        let dim = mats.first().map(|m| m.nrows()).unwrap_or(1);
        if dim == 0 {
            return Err(QnnError::DimensionMismatch {
                expected: 1,
                got: 0,
            });
        }
        let mut zbar = Vec::with_capacity(mats.len());
        for m in mats {
            expect_dim(dim, m.nrows())?;
            check_symmetric(m)?;
            let mut packed = Vec::with_capacity(packed_len(dim));
            for i in 0..dim {
                for j in i..dim {
                    packed.push(0.5 * (m[(i, j)] + m[(j, i)]));
                }
            }
            zbar.push(packed);
        }
        Ok(Self {
            n_inputs: dim - 1,
            activation,
            zbar,
        })
    }

    /// Builds a network from packed upper triangles.
    pub fn from_packed(
        n_inputs: usize,
        activation: ActivationParams,
        zbar: Vec<Vec<f64>>,
    ) -> Result<Self, QnnError> {
        for z in &zbar {
            expect_dim(packed_len(n_inputs + 1), z.len())?;
        }
        Ok(Self {
            n_inputs,
            activation,
            zbar,
        })
    }

    pub fn zeros(n_inputs: usize, n_outputs: usize, activation: ActivationParams) -> Self {
        Self {
            n_inputs,
            activation,
            zbar: vec![vec![0.0; packed_len(n_inputs + 1)]; n_outputs],
        }
    }

    pub fn n_inputs(&self) -> usize {
        self.n_inputs
    }

    pub fn n_outputs(&self) -> usize {
        self.zbar.len()
    }

    pub fn activation(&self) -> ActivationParams {
        self.activation
    }

    pub fn packed(&self, k: usize) -> &[f64] {
        &self.zbar[k]
    }

    /// Full symmetric matrix of output `k`.
    pub fn zbar(&self, k: usize) -> DMatrix<f64> {
        let d = self.n_inputs + 1;
        DMatrix::from_fn(d, d, |i, j| self.zbar[k][packed_index(d, i, j)])
    }

    pub fn matrices(&self) -> Vec<DMatrix<f64>> {
        (0..self.n_outputs()).map(|k| self.zbar(k)).collect()
    }

    pub fn scaled(&self, s: f64) -> Self {
        let mut out = self.clone();
        out.zbar
            .iter_mut()
            .flat_map(|z| z.iter_mut())
            .for_each(|v| *v *= s);
        out
    }

    pub fn evaluate(&self, x: &DVector<f64>) -> Result<DVector<f64>, QnnError> {
        expect_dim(self.n_inputs, x.len())?;
        let xbar = augment(x);
        Ok(self.evaluate_augmented(xbar.as_slice()))
    }

    pub(crate) fn evaluate_augmented(&self, xbar: &[f64]) -> DVector<f64> {
        let d = self.n_inputs + 1;
        DVector::from_iterator(
            self.zbar.len(),
            self.zbar.iter().map(|z| packed_form(z, d, xbar)),
        )
    }

    /// Evaluates every row of `x` (one sample per row); returns `N×p`.
    pub fn evaluate_rows(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>, QnnError> {
        expect_dim(self.n_inputs, x.ncols())?;
        let mut out = DMatrix::zeros(x.nrows(), self.n_outputs());
        let mut xbar = vec![1.0; self.n_inputs + 1];
        for i in 0..x.nrows() {
            for j in 0..self.n_inputs {
                xbar[j] = x[(i, j)];
            }
            let y = self.evaluate_augmented(&xbar);
            out.set_row(i, &y.transpose());
        }
        Ok(out)
    }

    /// Whether every output satisfies the trace identity of the activation.
    pub fn is_representable(&self, tol: f64) -> bool {
        (0..self.n_outputs()).all(|k| is_representable(&self.zbar(k), &self.activation, tol))
    }
}

/// One hidden unit: unit-norm first-layer weight and signed output weight.
#[derive(Debug, Clone, PartialEq)]
pub struct Neuron {
    pub w: DVector<f64>,
    pub alpha: f64,
}

/// Explicit weights grouped by output.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct NeuronList {
    pub n_inputs: usize,
    pub outputs: Vec<Vec<Neuron>>,
}

impl NeuronList {
    pub fn new(n_inputs: usize, n_outputs: usize) -> Self {
        Self {
            n_inputs,
            outputs: vec![Vec::new(); n_outputs],
        }
    }

    pub fn n_outputs(&self) -> usize {
        self.outputs.len()
    }

    /// Neurons per output.
    pub fn counts(&self) -> Vec<usize> {
        self.outputs.iter().map(Vec::len).collect()
    }

    pub fn total(&self) -> usize {
        self.outputs.iter().map(Vec::len).sum()
    }
}

/// `ŷᵏ = Σⱼ αⱼᵏ σ(xᵀwᵏʲ)`.
pub fn evaluate_neurons(
    neurons: &NeuronList,
    act: &ActivationParams,
    x: &DVector<f64>,
) -> Result<DVector<f64>, QnnError> {
    expect_dim(neurons.n_inputs, x.len())?;
    let mut out = DVector::zeros(neurons.n_outputs());
    for (k, list) in neurons.outputs.iter().enumerate() {
        for nrn in list {
            expect_dim(neurons.n_inputs, nrn.w.len())?;
            out[k] += nrn.alpha * act.eval(nrn.w.dot(x));
        }
    }
    Ok(out)
}

/// Checks `|Z₍ₙ₊₁,ₙ₊₁₎ − (c/a)·Tr(Z₁:ₙ,₁:ₙ)| ≤ tol·(1 + |Z₍ₙ₊₁,ₙ₊₁₎|)`.
pub fn is_representable(z: &DMatrix<f64>, act: &ActivationParams, tol: f64) -> bool {
    let d = z.nrows();
    if d < 2 || z.ncols() != d {
        return false;
    }
    let corner = z[(d - 1, d - 1)];
    let trace: f64 = (0..d - 1).map(|i| z[(i, i)]).sum();
    (corner - act.ratio() * trace).abs() <= tol * (1.0 + corner.abs())
}

const SISO_TOL: f64 = 1e-9;

/// Membership of two 2×2 training blocks `[[Z¹, Z²], [Z², Z⁴]]` in the
/// single-input constraint set `Z¹ ≥ 0, |Z²| ≤ Z¹, Z⁴ = Z¹`.
pub fn siso_constraints_check(zp: &DMatrix<f64>, zm: &DMatrix<f64>) -> bool {
    let ok = |z: &DMatrix<f64>| {
        if z.nrows() != 2 || z.ncols() != 2 {
            return false;
        }
        let (z1, z2, z4) = (z[(0, 0)], z[(0, 1)], z[(1, 1)]);
        z1 >= -SISO_TOL && z2.abs() <= z1 + SISO_TOL && (z4 - z1).abs() <= SISO_TOL
    };
    ok(zp) && ok(zm)
}

/// Per-output Lipschitz certificate between two inputs.
#[derive(Debug, Clone, PartialEq)]
pub struct LipschitzReport {
    /// `Lₙ` per output.
    pub bounds: Vec<f64>,
    /// `|f̂ᵏ(x₁) − f̂ᵏ(x₂)|` per output.
    pub gaps: Vec<f64>,
    /// `‖x̄₁ − x̄₂‖₂`.
    pub distance: f64,
}

impl LipschitzReport {
    /// Whether every output obeys `gap ≤ L·distance` (with rounding slack).
    pub fn holds(&self) -> bool {
        self.bounds
            .iter()
            .zip(&self.gaps)
            .all(|(l, g)| *g <= l * self.distance * (1.0 + 1e-12) + 1e-12)
    }

    pub fn max_bound(&self) -> f64 {
        self.bounds.iter().copied().fold(0.0, f64::max)
    }
}

/// `Lₙ = √(n+1)·‖Z̄ᵏ‖₂·(‖x̄₁‖∞ + ‖x̄₂‖∞)` for each output, where `‖Z̄ᵏ‖₂`
/// is the largest eigenvalue magnitude.
pub fn lipschitz_bound(
    net: &QuadraticNetwork,
    x1: &DVector<f64>,
    x2: &DVector<f64>,
) -> Result<LipschitzReport, QnnError> {
    let y1 = net.evaluate(x1)?;
    let y2 = net.evaluate(x2)?;
    let (a1, a2) = (augment(x1), augment(x2));
    let span = a1.amax() + a2.amax();
    let bounds = lipschitz_constants(net, span);
    Ok(LipschitzReport {
        bounds,
        gaps: (0..net.n_outputs()).map(|k| (y1[k] - y2[k]).abs()).collect(),
        distance: (a1 - a2).norm(),
    })
}

/// `√(n+1)·‖Z̄ᵏ‖₂·span` for each output.
pub fn lipschitz_constants(net: &QuadraticNetwork, span: f64) -> Vec<f64> {
    let root = ((net.n_inputs() + 1) as f64).sqrt();
    (0..net.n_outputs())
        .map(|k| root * max_abs_eigenvalue(&net.zbar(k)) * span)
        .collect()
}

/// `E[xᵀPx] = μᵀPμ + Tr(PΣ)` for a random vector with mean `μ` and
/// covariance `Σ`.
pub fn expected_output(
    p: &DMatrix<f64>,
    mu: &DVector<f64>,
    sigma: &DMatrix<f64>,
) -> Result<f64, QnnError> {
    let n = p.nrows();
    expect_dim(n, p.ncols())?;
    expect_dim(n, mu.len())?;
    expect_dim(n, sigma.nrows())?;
    expect_dim(n, sigma.ncols())?;
    check_symmetric(sigma)?;
    let scale = sigma.amax().max(1.0);
    let lmin = min_eigenvalue(sigma);
    if lmin < -1e-10 * scale {
        return Err(LinalgError::NotPsd {
            min_eigenvalue: lmin,
        }
        .into());
    }
    Ok((mu.transpose() * p * mu)[(0, 0)] + (p * sigma).trace())
}

/// Splits `Z` into positive and negative spectral parts, `Z = Zp − Zm`.
pub fn symmetric_split(z: &DMatrix<f64>) -> Result<(DMatrix<f64>, DMatrix<f64>), QnnError> {
    let (plus, minus) = linalg::spectral_split(z)?;
    debug_assert!(
        linalg::max_eigenvalue(&plus) <= plus.trace() * (1.0 + 1e-12) + 1e-12,
        "largest eigenvalue of a PSD part exceeds its trace"
    );
    Ok((plus, minus))
}
