//! Factorization of `diag(d) + Uᵀ·diag(w)·U`, the matrix of every
//! x-update. Small problems are factored densely; wide problems with few
//! coupling rows go through the Woodbury identity on an `r x r` capacitance
//! matrix instead.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use super::sparse::Csr;
use super::SdpError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum LinearSolver {
    /// Pick by problem shape.
    #[default]
    Auto,
    Dense,
    LowRank,
}

pub(crate) enum Factor {
    Dense(Cholesky<f64, Dyn>),
    LowRank {
        capacitance: Cholesky<f64, Dyn>,
    },
}

pub(crate) struct KktSystem {
    diag: Vec<f64>,
    weights: Vec<f64>,
    factor: Factor,
}

const DENSE_MAX: usize = 2500;

impl KktSystem {
    pub fn new(
        diag: Vec<f64>,
        u: &Csr,
        u_t: &Csr,
        weights: Vec<f64>,
        choice: LinearSolver,
    ) -> Result<Self, SdpError> {
        let n = diag.len();
        let r = u.nrows();
        let use_dense = match choice {
            LinearSolver::Dense => true,
            LinearSolver::LowRank => false,
            LinearSolver::Auto => r == 0 || (n <= DENSE_MAX && 2 * r >= n),
        };
        let factor = if use_dense {
            let mut m = DMatrix::<f64>::zeros(n, n);
            for (j, &d) in diag.iter().enumerate() {
                m[(j, j)] = d;
            }
            for i in 0..r {
                let (idx, val) = u.row(i);
                let w = weights[i];
                for (a, (&ja, &va)) in idx.iter().zip(val).enumerate() {
                    for (&jb, &vb) in idx[..=a].iter().zip(&val[..=a]) {
                        m[(ja as usize, jb as usize)] += w * va * vb;
                    }
                }
            }
            fill_upper(&mut m);
            Factor::Dense(Cholesky::new(m).ok_or(SdpError::Factorization)?)
        } else {
            let mut s = DMatrix::<f64>::zeros(r, r);
            for (i, &w) in weights.iter().enumerate() {
                s[(i, i)] = 1.0 / w;
            }
            for (j, &d) in diag.iter().enumerate() {
                let (rows, vals) = u_t.row(j);
                let inv = 1.0 / d;
                for (a, (&ra, &va)) in rows.iter().zip(vals).enumerate() {
                    let scaled = va * inv;
                    for (&rb, &vb) in rows[..=a].iter().zip(&vals[..=a]) {
                        let (hi, lo) = if ra >= rb { (ra, rb) } else { (rb, ra) };
                        s[(hi as usize, lo as usize)] += scaled * vb;
                    }
                }
            }
            fill_upper(&mut s);
            Factor::LowRank {
                capacitance: Cholesky::new(s).ok_or(SdpError::Factorization)?,
            }
        };
        Ok(Self {
            diag,
            weights,
            factor,
        })
    }

    pub fn is_dense(&self) -> bool {
        matches!(self.factor, Factor::Dense(_))
    }

    fn solve_once(&self, u: &Csr, rhs: &[f64]) -> Vec<f64> {
        match &self.factor {
            Factor::Dense(chol) => {
                let b = DVector::from_column_slice(rhs);
                chol.solve(&b).as_slice().to_vec()
            }
            Factor::LowRank { capacitance } => {
                let t: Vec<f64> = rhs.iter().zip(&self.diag).map(|(b, d)| b / d).collect();
                let mut z = vec![0.0; u.nrows()];
                u.mul_vec(&t, &mut z);
                let z = capacitance.solve(&DVector::from_vec(z));
                let mut back = vec![0.0; rhs.len()];
                u.tmul_vec_add(z.as_slice(), &mut back);
                t.iter()
                    .zip(&back)
                    .zip(&self.diag)
                    .map(|((ti, bi), d)| ti - bi / d)
                    .collect()
            }
        }
    }

    /// `(diag(d) + Uᵀ·diag(w)·U) · x`
    fn apply(&self, u: &Csr, x: &[f64]) -> Vec<f64> {
        let mut ux = vec![0.0; u.nrows()];
        u.mul_vec(x, &mut ux);
        for (v, w) in ux.iter_mut().zip(&self.weights) {
            *v *= w;
        }
        let mut out: Vec<f64> = x.iter().zip(&self.diag).map(|(a, d)| a * d).collect();
        u.tmul_vec_add(&ux, &mut out);
        out
    }

    pub fn solve(&self, u: &Csr, rhs: &[f64]) -> Vec<f64> {
        let mut x = self.solve_once(u, rhs);
        if !self.is_dense() {
            // One refinement step; the Woodbury form loses digits when the
            // diagonal is small relative to the coupling rows.
            let ax = self.apply(u, &x);
            let res: Vec<f64> = rhs.iter().zip(&ax).map(|(b, a)| b - a).collect();
            let dx = self.solve_once(u, &res);
            for (xi, di) in x.iter_mut().zip(&dx) {
                *xi += di;
            }
        }
        x
    }
}

fn fill_upper(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            m[(i, j)] = m[(j, i)];
        }
    }
}
