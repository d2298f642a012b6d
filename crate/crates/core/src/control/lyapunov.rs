//! Verification of `A_clᵀ(x)P̄A_cl(x) − P̄ ⪯ 0`.

use nalgebra::DMatrix;

use crate::linalg::max_eigenvalue;
use crate::poly::PolynomialMatrix;
use crate::sdp::{solve, ConicProblem, SolveStatus, SolverConfig};

use super::sos::{constrain_sos, SymLinPolyMatrix};
use super::{ControlError, Region};

/// Default grid density per state dimension.
pub const GRID_POINTS: usize = 41;

#[derive(Debug, Clone)]
pub enum VerifyMethod {
    /// Largest eigenvalue at every point of a uniform grid over a box.
    Grid { points: usize, tol: f64 },
    /// Gram-matrix certificate, global or on a box.
    Sos(SolverConfig),
}

impl Default for VerifyMethod {
    fn default() -> Self {
        VerifyMethod::Grid {
            points: GRID_POINTS,
            tol: 1e-7,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LyapunovReport {
    pub region: Region,
    /// Grid point with the largest eigenvalue; empty for SOS.
    pub worst_point: Vec<f64>,
    pub worst_eigenvalue: f64,
    pub points_checked: usize,
    /// Whether the last row and column were dropped before the SOS test.
    pub reduced: bool,
}

impl LyapunovReport {
    pub fn is_global(&self) -> bool {
        self.region == Region::Global
    }
}

/// Checks the decrease condition for a closed loop acting on `x̄ = [x; 1]`.
/// Returns the report when it holds and `Violated` with the worst grid
/// point otherwise.
pub fn verify_lyapunov(
    a_cl: &PolynomialMatrix,
    p_bar: &DMatrix<f64>,
    region: &Region,
    method: &VerifyMethod,
) -> Result<LyapunovReport, ControlError> {
    let d = p_bar.nrows();
    if a_cl.nrows() != d || a_cl.ncols() != d || a_cl.nvars() + 1 != d {
        return Err(ControlError::DimensionMismatch(format!(
            "closed loop is {}x{} in {} states, P̄ is {d}x{d}",
            a_cl.nrows(),
            a_cl.ncols(),
            a_cl.nvars()
        )));
    }
    region.validate(a_cl.nvars())?;
    match method {
        VerifyMethod::Grid { points, tol } => {
            let Region::Box(bounds) = region else {
                return Err(ControlError::RegionUnsupported(
                    "grid sampling needs a bounded box".into(),
                ));
            };
            let report = grid_check(a_cl, p_bar, bounds, *points);
            if report.worst_eigenvalue > *tol {
                return Err(ControlError::Violated {
                    point: report.worst_point,
                    eigenvalue: report.worst_eigenvalue,
                });
            }
            Ok(report)
        }
        VerifyMethod::Sos(cfg) => sos_check(a_cl, p_bar, region, cfg),
    }
}

/// `λmax(A_clᵀP̄A_cl − P̄)` at one point.
pub fn decrease_eigenvalue(a_cl: &PolynomialMatrix, p_bar: &DMatrix<f64>, x: &[f64]) -> f64 {
    let a = a_cl.eval(x);
    max_eigenvalue(&(a.transpose() * p_bar * &a - p_bar))
}

fn grid_check(
    a_cl: &PolynomialMatrix,
    p_bar: &DMatrix<f64>,
    bounds: &[(f64, f64)],
    points: usize,
) -> LyapunovReport {
    let n = bounds.len();
    let axis = |k: usize, (lo, hi): (f64, f64)| {
        if points <= 1 {
            0.5 * (lo + hi)
        } else {
            lo + (hi - lo) * k as f64 / (points - 1) as f64
        }
    };
    let per = points.max(1);
    let total = per.pow(n as u32);
    let mut worst = (f64::NEG_INFINITY, Vec::new());
    let mut x = vec![0.0; n];
    for idx in 0..total {
        let mut r = idx;
        for (i, b) in bounds.iter().enumerate() {
            x[i] = axis(r % per, *b);
            r /= per;
        }
        let lam = decrease_eigenvalue(a_cl, p_bar, &x);
        if lam > worst.0 {
            worst = (lam, x.clone());
        }
    }
    LyapunovReport {
        region: Region::Box(bounds.to_vec()),
        worst_point: worst.1,
        worst_eigenvalue: worst.0,
        points_checked: total,
        reduced: false,
    }
}

fn sos_check(
    a_cl: &PolynomialMatrix,
    p_bar: &DMatrix<f64>,
    region: &Region,
    cfg: &SolverConfig,
) -> Result<LyapunovReport, ControlError> {
    let d = p_bar.nrows();
    let nvars = a_cl.nvars();
    let decrease = PolynomialMatrix::from_constant(p_bar, nvars)
        .sub(&a_cl.transpose().mul_constant(p_bar).mul(a_cl))
        .pruned(0.0);
    // a zero last row and column (zero setpoint with a fixed homogeneous
    // coordinate) carries no information
    let reduced = (0..d).all(|j| decrease.get(d - 1, j).is_zero());
    let dim = if reduced { d - 1 } else { d };
    let m = SymLinPolyMatrix::from_polys(dim, nvars, |i, j| decrease.get(i, j).clone());
    let mut problem = ConicProblem::new();
    constrain_sos(&mut problem, &m, region);
    let sol = solve(&problem, cfg)?;
    if sol.status == SolveStatus::Optimal {
        return Ok(LyapunovReport {
            region: region.clone(),
            worst_point: Vec::new(),
            worst_eigenvalue: 0.0,
            points_checked: 0,
            reduced,
        });
    }
    // look for a witness before reporting an inconclusive certificate
    let bounds = match region {
        Region::Box(b) => b.clone(),
        Region::Global => vec![(-10.0, 10.0); nvars],
    };
    let probe = grid_check(a_cl, p_bar, &bounds, if nvars <= 2 { GRID_POINTS } else { 7 });
    if probe.worst_eigenvalue > 1e-7 {
        return Err(ControlError::Violated {
            point: probe.worst_point,
            eigenvalue: probe.worst_eigenvalue,
        });
    }
    Err(ControlError::NotCertified(sol.status))
}
