//! Dataset ingestion, MNIST preprocessing and the model file format.

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::control::Controller;
use crate::network::{ActivationParams, Neuron, NeuronList, QuadraticNetwork};
use crate::poly::{Polynomial, PolynomialMatrix};
use crate::sysid::{IoLog, StateSpaceModel};

pub const FORMAT_VERSION: u32 = 1;
pub const IMAGE_MAGIC: u32 = 0x0000_0803;
pub const LABEL_MAGIC: u32 = 0x0000_0801;
/// Side length of a downsampled MNIST image.
pub const DOWNSAMPLED_SIDE: usize = 10;
pub const DOWNSAMPLE_METHOD: &str = "crop rows/cols 5-24, 2x2 mean pool";

#[derive(Debug, Error)]
pub enum DataError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("line {line}: cannot parse {token:?} as a number")]
    ParseError { line: usize, token: String },
    #[error("line {line}: expected {expected} columns, found {got}")]
    RaggedRows {
        line: usize,
        expected: usize,
        got: usize,
    },
    #[error("no data rows")]
    EmptyData,
    #[error("column {col} out of range for {ncols} columns")]
    ColumnOutOfRange { col: usize, ncols: usize },
    #[error("bad magic number {found:#010x}, expected {expected:#010x}")]
    BadMagic { expected: u32, found: u32 },
    #[error("file truncated: need {needed} bytes, have {got}")]
    TruncatedFile { needed: usize, got: usize },
    #[error("{images} images but {labels} labels")]
    CountMismatch { images: usize, labels: usize },
    #[error("expected a 28x28 image, got {rows}x{cols}")]
    BadShape { rows: usize, cols: usize },
    #[error("label {label} out of range for {classes} classes")]
    BadLabel { label: usize, classes: usize },
    #[error("model file version {found}, this build reads {supported}")]
    VersionMismatch { found: u64, supported: u32 },
    #[error("schema error: {0}")]
    SchemaError(String),
}

/// Inputs and targets, one sample per row.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub x: DMatrix<f64>,
    pub y: DMatrix<f64>,
    pub labels: Option<Vec<usize>>,
}

impl Dataset {
    pub fn new(x: DMatrix<f64>, y: DMatrix<f64>) -> Result<Self, DataError> {
        if x.nrows() != y.nrows() {
            return Err(DataError::RaggedRows {
                line: 0,
                expected: x.nrows(),
                got: y.nrows(),
            });
        }
        if x.nrows() == 0 {
            return Err(DataError::EmptyData);
        }
        if x.iter().chain(y.iter()).any(|v| !v.is_finite()) {
            return Err(DataError::SchemaError("non-finite value in dataset".into()));
        }
        Ok(Self { x, y, labels: None })
    }

    pub fn len(&self) -> usize {
        self.x.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.x.nrows() == 0
    }

    /// The first `len` samples.
    pub fn head(&self, len: usize) -> Self {
        let len = len.min(self.len());
        Self {
            x: self.x.rows(0, len).into_owned(),
            y: self.y.rows(0, len).into_owned(),
            labels: self.labels.as_ref().map(|l| l[..len].to_vec()),
        }
    }
}

/// Parses whitespace- or comma-separated numbers, skipping blank lines and
/// lines starting with `#`.
pub fn parse_delimited(text: &str) -> Result<DMatrix<f64>, DataError> {
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let row = line
            .split(|c: char| c == ',' || c.is_whitespace())
            .filter(|t| !t.is_empty())
            .map(|t| {
                t.parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| DataError::ParseError {
                        line: idx + 1,
                        token: t.to_string(),
                    })
            })
            .collect::<Result<Vec<_>, _>>()?;
        if let Some(first) = rows.first() {
            if first.len() != row.len() {
                return Err(DataError::RaggedRows {
                    line: idx + 1,
                    expected: first.len(),
                    got: row.len(),
                });
            }
        }
        rows.push(row);
    }
    let ncols = rows.first().map_or(0, Vec::len);
    if rows.is_empty() || ncols == 0 {
        return Err(DataError::EmptyData);
    }
    Ok(DMatrix::from_fn(rows.len(), ncols, |i, j| rows[i][j]))
}

pub fn load_delimited(path: impl AsRef<Path>) -> Result<DMatrix<f64>, DataError> {
    parse_delimited(&std::fs::read_to_string(path)?)
}

/// Column subset of a loaded table.
pub fn select_columns(m: &DMatrix<f64>, cols: &[usize]) -> Result<DMatrix<f64>, DataError> {
    if let Some(&col) = cols.iter().find(|&&c| c >= m.ncols()) {
        return Err(DataError::ColumnOutOfRange {
            col,
            ncols: m.ncols(),
        });
    }
    Ok(m.select_columns(cols))
}

pub fn dataset_from_table(m: &DMatrix<f64>, inputs: &[usize], outputs: &[usize]) -> Result<Dataset, DataError> {
    Dataset::new(select_columns(m, inputs)?, select_columns(m, outputs)?)
}

pub fn io_log_from_table(
    m: &DMatrix<f64>,
    inputs: &[usize],
    outputs: &[usize],
    sample_period: Option<f64>,
) -> Result<IoLog, DataError> {
    IoLog::new(select_columns(m, inputs)?, select_columns(m, outputs)?, sample_period)
        .map_err(|e| DataError::SchemaError(e.to_string()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum PixelScale {
    /// Divide by 255.
    #[default]
    Unit,
    /// Keep the raw 0–255 byte values.
    Raw,
}

impl PixelScale {
    fn apply(self, b: u8) -> f64 {
        match self {
            PixelScale::Unit => f64::from(b) / 255.0,
            PixelScale::Raw => f64::from(b),
        }
    }
}

/// Images stored one per row, row-major pixels.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledImages {
    pub rows: usize,
    pub cols: usize,
    pub pixels: DMatrix<f64>,
    pub labels: Vec<u8>,
}

impl LabeledImages {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn image(&self, k: usize) -> DMatrix<f64> {
        DMatrix::from_row_iterator(self.rows, self.cols, self.pixels.row(k).iter().copied())
    }

    /// Downsampled images as an `N × 100` matrix with one-hot targets.
    pub fn to_dataset(&self, classes: usize) -> Result<Dataset, DataError> {
        let mut x = DMatrix::zeros(self.len(), DOWNSAMPLED_SIDE * DOWNSAMPLED_SIDE);
        for k in 0..self.len() {
            x.row_mut(k).copy_from(&downsample_mnist(&self.image(k))?.transpose());
        }
        let labels: Vec<usize> = self.labels.iter().map(|&l| usize::from(l)).collect();
        let y = one_hot_matrix(&labels, classes)?;
        let mut ds = Dataset::new(x, y)?;
        ds.labels = Some(labels);
        Ok(ds)
    }
}

fn read_u32(bytes: &[u8], at: usize) -> Result<u32, DataError> {
    bytes
        .get(at..at + 4)
        .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
        .ok_or(DataError::TruncatedFile {
            needed: at + 4,
            got: bytes.len(),
        })
}

fn expect_magic(bytes: &[u8], expected: u32) -> Result<(), DataError> {
    let found = read_u32(bytes, 0)?;
    if found != expected {
        return Err(DataError::BadMagic { expected, found });
    }
    Ok(())
}

fn payload(bytes: &[u8], header: usize, len: usize) -> Result<&[u8], DataError> {
    let needed = len
        .checked_add(header)
        .ok_or(DataError::SchemaError("IDX dimensions overflow".into()))?;
    if bytes.len() < needed {
        return Err(DataError::TruncatedFile {
            needed,
            got: bytes.len(),
        });
    }
    Ok(&bytes[header..needed])
}

/// Parses an IDX image file into `(rows, cols, pixels)`.
pub fn parse_idx_images(bytes: &[u8], scale: PixelScale) -> Result<(usize, usize, DMatrix<f64>), DataError> {
    expect_magic(bytes, IMAGE_MAGIC)?;
    let count = read_u32(bytes, 4)? as usize;
    let rows = read_u32(bytes, 8)? as usize;
    let cols = read_u32(bytes, 12)? as usize;
    let per = rows * cols;
    let data = payload(bytes, 16, count.saturating_mul(per))?;
    let pixels = DMatrix::from_fn(count, per, |k, j| scale.apply(data[k * per + j]));
    Ok((rows, cols, pixels))
}

pub fn parse_idx_labels(bytes: &[u8]) -> Result<Vec<u8>, DataError> {
    expect_magic(bytes, LABEL_MAGIC)?;
    let count = read_u32(bytes, 4)? as usize;
    Ok(payload(bytes, 8, count)?.to_vec())
}

pub fn parse_idx(images: &[u8], labels: &[u8], scale: PixelScale) -> Result<LabeledImages, DataError> {
    let (rows, cols, pixels) = parse_idx_images(images, scale)?;
    let labels = parse_idx_labels(labels)?;
    if labels.len() != pixels.nrows() {
        return Err(DataError::CountMismatch {
            images: pixels.nrows(),
            labels: labels.len(),
        });
    }
    Ok(LabeledImages {
        rows,
        cols,
        pixels,
        labels,
    })
}

pub fn load_idx(
    images: impl AsRef<Path>,
    labels: impl AsRef<Path>,
    scale: PixelScale,
) -> Result<LabeledImages, DataError> {
    parse_idx(&std::fs::read(images)?, &std::fs::read(labels)?, scale)
}

pub fn one_hot(label: usize, classes: usize) -> Result<DVector<f64>, DataError> {
    if label >= classes {
        return Err(DataError::BadLabel { label, classes });
    }
    let mut v = DVector::zeros(classes);
    v[label] = 1.0;
    Ok(v)
}

pub fn one_hot_matrix(labels: &[usize], classes: usize) -> Result<DMatrix<f64>, DataError> {
    let mut y = DMatrix::zeros(labels.len(), classes);
    for (k, &l) in labels.iter().enumerate() {
        y.row_mut(k).copy_from(&one_hot(l, classes)?.transpose());
    }
    Ok(y)
}

/// Crops rows and columns 5–24 (1-indexed) of a 28×28 image, mean-pools
/// 2×2 blocks and flattens the 10×10 result row-major.
pub fn downsample_mnist(image: &DMatrix<f64>) -> Result<DVector<f64>, DataError> {
    if image.shape() != (28, 28) {
        return Err(DataError::BadShape {
            rows: image.nrows(),
            cols: image.ncols(),
        });
    }
    let side = DOWNSAMPLED_SIDE;
    Ok(DVector::from_fn(side * side, |k, _| {
        let (r, c) = (4 + 2 * (k / side), 4 + 2 * (k % side));
        0.25 * (image[(r, c)] + image[(r, c + 1)] + image[(r + 1, c)] + image[(r + 1, c + 1)])
    }))
}

/// Forward-difference model of a double integrator with linear drag:
/// `X⁺ = X + T·V`, `V⁺ = V − T_d·V² + T_g·u`, over the regressor
/// `[u, X, V, 1]`.
pub fn quadrotor_model(step: f64, drag: f64, input_gain: f64) -> StateSpaceModel {
    let mut z1 = DMatrix::zeros(4, 4);
    z1[(1, 3)] = 0.5;
    z1[(2, 3)] = 0.5 * step;
    let mut z2 = DMatrix::zeros(4, 4);
    z2[(2, 2)] = -drag;
    z2[(2, 3)] = 0.5;
    z2[(0, 3)] = 0.5 * input_gain;
    for z in [&mut z1, &mut z2] {
        for i in 0..3 {
            z[(3, i)] = z[(i, 3)];
        }
    }
    StateSpaceModel::new(1, 2, 1, vec![z1, z2]).expect("fixed dimensions")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NeuronRecord {
    pub output: usize,
    pub w: Vec<f64>,
    pub alpha: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DynamicsRecord {
    pub delays: usize,
    pub outputs: usize,
    pub inputs: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TermRecord {
    pub exponents: Vec<u32>,
    pub coef: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolyMatrixRecord {
    pub rows: usize,
    pub cols: usize,
    pub nvars: usize,
    /// Row-major entries.
    pub entries: Vec<Vec<TermRecord>>,
}

impl PolyMatrixRecord {
    pub fn from_matrix(m: &PolynomialMatrix) -> Self {
        let entries = (0..m.nrows())
            .flat_map(|i| (0..m.ncols()).map(move |j| (i, j)))
            .map(|(i, j)| {
                m.get(i, j)
                    .terms()
                    .map(|(e, coef)| TermRecord {
                        exponents: e.clone(),
                        coef,
                    })
                    .collect()
            })
            .collect();
        Self {
            rows: m.nrows(),
            cols: m.ncols(),
            nvars: m.nvars(),
            entries,
        }
    }

    pub fn to_matrix(&self) -> Result<PolynomialMatrix, DataError> {
        if self.entries.len() != self.rows * self.cols {
            return Err(DataError::SchemaError("polynomial matrix entry count".into()));
        }
        if self.entries.iter().flatten().any(|t| t.exponents.len() != self.nvars) {
            return Err(DataError::SchemaError("monomial arity".into()));
        }
        Ok(PolynomialMatrix::from_fn(self.rows, self.cols, self.nvars, |i, j| {
            Polynomial::from_terms(
                self.nvars,
                self.entries[i * self.cols + j].iter().map(|t| (t.exponents.clone(), t.coef)),
            )
        }))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControllerRecord {
    pub gain: PolyMatrixRecord,
    pub x_star: Vec<f64>,
    pub u_star: Vec<f64>,
}

impl ControllerRecord {
    pub fn from_controller(c: &Controller) -> Self {
        Self {
            gain: PolyMatrixRecord::from_matrix(&c.gain),
            x_star: c.x_star.as_slice().to_vec(),
            u_star: c.u_star.as_slice().to_vec(),
        }
    }

    pub fn to_controller(&self) -> Result<Controller, DataError> {
        let gain = self.gain.to_matrix()?;
        if gain.ncols() != self.x_star.len() || gain.nrows() != self.u_star.len() {
            return Err(DataError::SchemaError("controller dimensions".into()));
        }
        Ok(Controller {
            gain,
            x_star: DVector::from_vec(self.x_star.clone()),
            u_star: DVector::from_vec(self.u_star.clone()),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CertificateRecord {
    /// `lmi`, `cost-bound` or `lyapunov`.
    pub kind: String,
    /// Row-major square matrix.
    pub p: Vec<f64>,
    pub epsilon: Option<f64>,
    pub trace: Option<f64>,
    /// `None` for a global certificate, else per-state bounds.
    pub region: Option<Vec<(f64, f64)>>,
}

impl CertificateRecord {
    pub fn p_matrix(&self) -> Result<DMatrix<f64>, DataError> {
        let n = (self.p.len() as f64).sqrt().round() as usize;
        if n * n != self.p.len() {
            return Err(DataError::SchemaError("certificate matrix is not square".into()));
        }
        Ok(DMatrix::from_row_slice(n, n, &self.p))
    }
}

/// Everything one run produces: the network, and optionally its neurons,
/// the dynamics layout, a controller and a certificate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub version: u32,
    pub activation: ActivationParams,
    pub n_inputs: usize,
    pub n_outputs: usize,
    pub offset: bool,
    /// Upper triangle of each `Z̄ᵏ`, row-major.
    pub zbar: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub neurons: Option<Vec<NeuronRecord>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dynamics: Option<DynamicsRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub controller: Option<ControllerRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub certificate: Option<CertificateRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub preprocessing: Option<String>,
}

impl ModelFile {
    pub fn from_network(net: &QuadraticNetwork, offset: bool) -> Self {
        Self {
            version: FORMAT_VERSION,
            activation: net.activation(),
            n_inputs: net.n_inputs(),
            n_outputs: net.n_outputs(),
            offset,
            zbar: (0..net.n_outputs()).map(|k| net.packed(k).to_vec()).collect(),
            neurons: None,
            dynamics: None,
            controller: None,
            certificate: None,
            preprocessing: None,
        }
    }

    pub fn from_model(model: &StateSpaceModel, activation: ActivationParams) -> Result<Self, DataError> {
        let net = QuadraticNetwork::from_matrices(activation, model.zbars())
            .map_err(|e| DataError::SchemaError(e.to_string()))?;
        let mut f = Self::from_network(&net, false);
        f.dynamics = Some(DynamicsRecord {
            delays: model.delays(),
            outputs: model.n_outputs(),
            inputs: model.n_inputs(),
        });
        Ok(f)
    }

    pub fn with_neurons(mut self, list: &NeuronList) -> Self {
        self.neurons = Some(
            list.outputs
                .iter()
                .enumerate()
                .flat_map(|(k, ns)| {
                    ns.iter().map(move |n| NeuronRecord {
                        output: k,
                        w: n.w.as_slice().to_vec(),
                        alpha: n.alpha,
                    })
                })
                .collect(),
        );
        self
    }

    pub fn network(&self) -> Result<QuadraticNetwork, DataError> {
        QuadraticNetwork::from_packed(self.n_inputs, self.activation, self.zbar.clone())
            .map_err(|e| DataError::SchemaError(e.to_string()))
    }

    pub fn neuron_list(&self) -> Option<NeuronList> {
        let records = self.neurons.as_ref()?;
        let mut list = NeuronList::new(self.n_inputs, self.n_outputs);
        for r in records {
            list.outputs.get_mut(r.output)?.push(Neuron {
                w: DVector::from_vec(r.w.clone()),
                alpha: r.alpha,
            });
        }
        Some(list)
    }

    pub fn state_space(&self) -> Result<StateSpaceModel, DataError> {
        let d = self
            .dynamics
            .as_ref()
            .ok_or_else(|| DataError::SchemaError("model file has no dynamics block".into()))?;
        let net = self.network()?;
        StateSpaceModel::new(d.delays, d.outputs, d.inputs, net.matrices())
            .map_err(|e| DataError::SchemaError(e.to_string()))
    }

    fn validate(&self) -> Result<(), DataError> {
        if self.zbar.len() != self.n_outputs {
            return Err(DataError::SchemaError(format!(
                "{} Z̄ blocks for {} outputs",
                self.zbar.len(),
                self.n_outputs
            )));
        }
        self.network()?;
        if let Some(ns) = &self.neurons {
            if ns.iter().any(|n| n.output >= self.n_outputs || n.w.len() != self.n_inputs) {
                return Err(DataError::SchemaError("neuron dimensions".into()));
            }
        }
        if let Some(c) = &self.controller {
            c.to_controller()?;
        }
        if let Some(c) = &self.certificate {
            c.p_matrix()?;
        }
        Ok(())
    }

    /// Pretty-printed JSON. Floats use the shortest round-trip form.
    pub fn to_json(&self) -> Result<String, DataError> {
        self.validate()?;
        serde_json::to_string_pretty(self).map_err(|e| DataError::SchemaError(e.to_string()))
    }

    pub fn from_json(text: &str) -> Result<Self, DataError> {
        let value: serde_json::Value =
            serde_json::from_str(text).map_err(|e| DataError::SchemaError(e.to_string()))?;
        let version = value
            .get("version")
            .and_then(serde_json::Value::as_u64)
            .ok_or_else(|| DataError::SchemaError("missing version".into()))?;
        if version != u64::from(FORMAT_VERSION) {
            return Err(DataError::VersionMismatch {
                found: version,
                supported: FORMAT_VERSION,
            });
        }
        let f: Self = serde_json::from_value(value).map_err(|e| DataError::SchemaError(e.to_string()))?;
        f.validate()?;
        Ok(f)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), DataError> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, DataError> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

/// Writes a header line and rows of a delimited table.
pub fn write_table(path: impl AsRef<Path>, header: &[&str], rows: &DMatrix<f64>) -> Result<(), DataError> {
    use std::fmt::Write as _;
    let mut out = format!("# {}\n", header.join(" "));
    for r in rows.row_iter() {
        let line: Vec<String> = r.iter().map(|v| format!("{v:?}")).collect();
        let _ = writeln!(out, "{}", line.join(" "));
    }
    std::fs::write(path, out)?;
    Ok(())
}
