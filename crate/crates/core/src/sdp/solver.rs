//! Operator-splitting solver.
//!
//! The problem is brought to the form
//!
//! ```text
//! minimize  ½xᵀPx + qᵀx   subject to  Ax + s = b,  s ∈ K
//! ```
//!
//! with `K = {0}ᵐᵉ × ℝ₊ᵐⁱ × S₊ⁿ¹ × …` and `P = FᵀF`. Rows that merely select a
//! variable into a cone (PSD block entries, nonnegative scalars) stay
//! implicit; only equality and epigraph rows are stored. Each iteration
//! solves one linear system with a fixed factorization and projects onto the
//! cones.

use nalgebra::DMatrix;

use super::kkt::{KktSystem, LinearSolver};
use super::problem::{ConicProblem, ScalarKind, VarKind};
use super::sparse::Csr;
use super::SdpError;
use crate::linalg::{packed_len, project_psd_unchecked, smat, sym_eigen};

/// Termination tolerances and iteration controls.
#[derive(Debug, Clone)]
pub struct SolverConfig {
    /// Bound on the normalized primal and dual residuals at optimality.
    pub eps_abs: f64,
    /// Allowed negative eigenvalue in returned PSD blocks.
    pub eps_psd: f64,
    /// Relative tolerance of the infeasibility certificates.
    pub eps_infeasible: f64,
    pub max_iterations: usize,
    pub rho: f64,
    pub sigma: f64,
    /// Over-relaxation factor in (0, 2).
    pub alpha: f64,
    pub scaling_iterations: usize,
    pub adaptive_rho: bool,
    pub adapt_interval: usize,
    pub check_interval: usize,
    pub linear_solver: LinearSolver,
    /// Emit a progress line through `log` every this many iterations (0: off).
    pub log_interval: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            eps_abs: 1e-7,
            eps_psd: 1e-8,
            eps_infeasible: 1e-7,
            max_iterations: 200_000,
            rho: 0.1,
            sigma: 1e-6,
            alpha: 1.6,
            scaling_iterations: 15,
            adaptive_rho: true,
            adapt_interval: 50,
            check_interval: 10,
            linear_solver: LinearSolver::Auto,
            log_interval: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum SolveStatus {
    Optimal,
    Infeasible,
    Unbounded,
    MaxIterations,
}

/// Solver output. Values are stored on the flat variable vector and read
/// back through the problem's handles.
#[derive(Debug, Clone)]
pub struct ConicSolution {
    pub status: SolveStatus,
    pub primal_residual: f64,
    pub dual_residual: f64,
    pub iterations: usize,
    pub objective_value: f64,
    pub(crate) x: Vec<f64>,
    pub(crate) y: Vec<f64>,
}

impl ConicSolution {
    pub fn block(&self, b: super::BlockId) -> DMatrix<f64> {
        smat(&self.x[b.offset..b.offset + packed_len(b.dim)], b.dim)
    }

    pub fn scalar(&self, s: super::ScalarId) -> f64 {
        self.x[s.offset]
    }

    pub fn value(&self, e: &super::LinExpr) -> f64 {
        e.eval(&self.x)
    }

    pub fn symmetric(&self, v: &super::SymmetricVar) -> DMatrix<f64> {
        let n = v.dim();
        DMatrix::from_fn(n, n, |i, j| self.scalar(v.entry(i, j)))
    }

    /// Multipliers of the equality constraints, in declaration order.
    pub fn equality_duals(&self, count: usize) -> &[f64] {
        &self.y[..count.min(self.y.len())]
    }

    pub fn is_optimal(&self) -> bool {
        self.status == SolveStatus::Optimal
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Cone {
    Zero(usize),
    Nonneg(usize),
    Psd(usize),
}

impl Cone {
    fn len(&self) -> usize {
        match *self {
            Cone::Zero(m) | Cone::Nonneg(m) => m,
            Cone::Psd(d) => packed_len(d),
        }
    }
}

/// The problem in standard form, scaled in place by the equilibration.
struct Standard {
    n: usize,
    /// Equality rows followed by epigraph rows.
    a_gen: Csr,
    /// Variable selected by each implicit selector row (coefficient −1
    /// before scaling).
    sel_var: Vec<usize>,
    b: Vec<f64>,
    q: Vec<f64>,
    f: Csr,
    cones: Vec<Cone>,
    m_eq: usize,
    // Equilibration: x = D x̂, s = E⁻¹ ŝ, y = E ŷ / c.
    d: Vec<f64>,
    e: Vec<f64>,
    c: f64,
}

impl Standard {
    fn m(&self) -> usize {
        self.a_gen.nrows() + self.sel_var.len()
    }

    fn build(p: &ConicProblem) -> Self {
        let n = p.num_variables();
        let mut a_gen = Csr::new(n);
        let mut b = Vec::new();
        for (expr, rhs) in &p.equalities {
            a_gen.push_row(expr.terms());
            b.push(rhs - expr.constant_term());
        }
        let m_eq = b.len();
        let mut m_epi = 0;
        if let Some(epi) = &p.epigraph {
            // s = t − g(x) ≥ 0  ⇔  (g − e_t)ᵀx + s = −g₀
            for term in &epi.terms {
                let mut row: Vec<(usize, f64)> = term.terms().collect();
                match row.binary_search_by_key(&epi.bound.offset, |&(k, _)| k) {
                    Ok(pos) => row[pos].1 -= 1.0,
                    Err(pos) => row.insert(pos, (epi.bound.offset, -1.0)),
                }
                a_gen.push_row(row.into_iter().filter(|&(_, v)| v != 0.0));
                b.push(-term.constant_term());
                m_epi += 1;
            }
        }
        let mut sel_var = Vec::new();
        for decl in &p.vars {
            if let VarKind::Scalar(ScalarKind::Nonneg) = decl.kind {
                sel_var.push(decl.offset);
            }
        }
        let n_nonneg_sel = sel_var.len();
        let mut cones = vec![Cone::Zero(m_eq), Cone::Nonneg(m_epi + n_nonneg_sel)];
        for decl in &p.vars {
            if let VarKind::Block { dim } = decl.kind {
                for k in 0..packed_len(dim) {
                    sel_var.push(decl.offset + k);
                }
                cones.push(Cone::Psd(dim));
            }
        }
        b.extend(std::iter::repeat(0.0).take(sel_var.len()));

        let mut q = vec![0.0; n];
        for (k, v) in p.objective.linear.terms() {
            q[k] += v;
        }
        let mut f = Csr::new(n);
        for (expr, w) in &p.objective.squares {
            if *w == 0.0 {
                continue;
            }
            // w(fᵀx + g)² = ½xᵀ(2w ffᵀ)x + 2wg fᵀx + wg²
            let g = expr.constant_term();
            let root = (2.0 * w).sqrt();
            f.push_row(expr.terms().map(|(k, v)| (k, root * v)));
            for (k, v) in expr.terms() {
                q[k] += 2.0 * w * g * v;
            }
        }
        let m = a_gen.nrows() + sel_var.len();
        Standard {
            n,
            a_gen,
            sel_var,
            b,
            q,
            f,
            cones,
            m_eq,
            d: vec![1.0; n],
            e: vec![1.0; m],
            c: 1.0,
        }
    }

    /// Ruiz equilibration of `[[P, Aᵀ], [A, 0]]`, with one common row scale
    /// per PSD block so the cone is preserved.
    fn equilibrate(&mut self, iterations: usize) {
        let n = self.n;
        let n_gen = self.a_gen.nrows();
        let m = self.m();
        let clamp = |v: f64| if v < 1e-4 { 1.0 } else { v.min(1e4) };
        for _ in 0..iterations {
            let mut col = vec![0.0_f64; n];
            self.a_gen.col_inf_norms_into(&mut col);
            for (r, &j) in self.sel_var.iter().enumerate() {
                col[j] = col[j].max(self.e[n_gen + r] * self.d[j]);
            }
            // diag(P) stands in for the column norms of P.
            let pdiag = self.p_diag();
            for j in 0..n {
                col[j] = col[j].max(pdiag[j]);
            }
            let dscale: Vec<f64> = col.iter().map(|&c| 1.0 / clamp(c).sqrt()).collect();

            let mut row = self.a_gen.row_inf_norms();
            for (r, &j) in self.sel_var.iter().enumerate() {
                row.push(self.e[n_gen + r] * self.d[j]);
            }
            let mut escale: Vec<f64> = row.iter().map(|&r| 1.0 / clamp(r).sqrt()).collect();
            let mut start = 0;
            for cone in &self.cones {
                let len = cone.len();
                if let Cone::Psd(_) = cone {
                    if len > 0 {
                        let mean = escale[start..start + len].iter().sum::<f64>() / len as f64;
                        escale[start..start + len].iter_mut().for_each(|v| *v = mean);
                    }
                }
                start += len;
            }
            debug_assert_eq!(start, m);

            self.a_gen.scale(&escale[..n_gen], &dscale);
            let ones = vec![1.0; self.f.nrows()];
            self.f.scale(&ones, &dscale);
            for j in 0..n {
                self.q[j] *= dscale[j];
                self.d[j] *= dscale[j];
            }
            for i in 0..m {
                self.b[i] *= escale[i];
                self.e[i] *= escale[i];
            }
        }
        // Cost scaling.
        let pdiag = self.p_diag();
        let mean_p = if n > 0 {
            pdiag.iter().sum::<f64>() / n as f64
        } else {
            0.0
        };
        let qmax = self.q.iter().fold(0.0_f64, |a, v| a.max(v.abs()));
        let c = 1.0 / clamp(mean_p.max(qmax));
        self.c = c;
        let root = c.sqrt();
        let ones = vec![1.0; self.f.nrows()];
        let roots = vec![root; n];
        self.f.scale(&ones, &roots);
        self.q.iter_mut().for_each(|v| *v *= c);
    }

    fn p_diag(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.n];
        for (&j, &v) in self.f.indices.iter().zip(&self.f.data) {
            out[j as usize] += v * v;
        }
        out
    }

    /// Scaled selector coefficient of selector row `r` (row `n_gen + r`).
    #[inline]
    fn sel_coef(&self, r: usize) -> f64 {
        -self.e[self.a_gen.nrows() + r] * self.d[self.sel_var[r]]
    }

    /// out = Â x̂
    fn a_mul(&self, x: &[f64], out: &mut [f64]) {
        let n_gen = self.a_gen.nrows();
        self.a_gen.mul_vec(x, &mut out[..n_gen]);
        for (r, &j) in self.sel_var.iter().enumerate() {
            out[n_gen + r] = self.sel_coef(r) * x[j];
        }
    }

    /// out += Âᵀ y
    fn at_mul_add(&self, y: &[f64], out: &mut [f64]) {
        let n_gen = self.a_gen.nrows();
        self.a_gen.tmul_vec_add(&y[..n_gen], out);
        for (r, &j) in self.sel_var.iter().enumerate() {
            out[j] += self.sel_coef(r) * y[n_gen + r];
        }
    }

    /// out = P̂ x̂
    fn p_mul(&self, x: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|v| *v = 0.0);
        let mut fx = vec![0.0; self.f.nrows()];
        self.f.mul_vec(x, &mut fx);
        self.f.tmul_vec_add(&fx, out);
    }

    fn row_rho(&self, rho: f64) -> Vec<f64> {
        let mut r = vec![rho; self.m()];
        r[..self.m_eq].iter_mut().for_each(|v| *v = rho * 1e3);
        r
    }

    fn factor(&self, rho: &[f64], sigma: f64, choice: LinearSolver) -> Result<(KktSystem, Csr), SdpError> {
        let n_gen = self.a_gen.nrows();
        let mut diag = vec![sigma; self.n];
        for (r, &j) in self.sel_var.iter().enumerate() {
            let a = self.sel_coef(r);
            diag[j] += rho[n_gen + r] * a * a;
        }
        // U = [F̂; Â_gen], W = diag(1, ρ_gen)
        let mut u = Csr::new(self.n);
        for i in 0..self.f.nrows() {
            let (idx, val) = self.f.row(i);
            u.push_row(idx.iter().map(|&j| j as usize).zip(val.iter().copied()));
        }
        for i in 0..n_gen {
            let (idx, val) = self.a_gen.row(i);
            u.push_row(idx.iter().map(|&j| j as usize).zip(val.iter().copied()));
        }
        let mut weights = vec![1.0; self.f.nrows()];
        weights.extend_from_slice(&rho[..n_gen]);
        let u_t = u.transpose();
        let kkt = KktSystem::new(diag, &u, &u_t, weights, choice)?;
        Ok((kkt, u))
    }

    fn project(&self, v: &mut [f64]) {
        let mut start = 0;
        for cone in &self.cones {
            let len = cone.len();
            let part = &mut v[start..start + len];
            match *cone {
                Cone::Zero(_) => part.iter_mut().for_each(|x| *x = 0.0),
                Cone::Nonneg(_) => part.iter_mut().for_each(|x| *x = x.max(0.0)),
                Cone::Psd(dim) => {
                    if dim > 0 {
                        let mat = smat(part, dim);
                        let proj = project_psd_unchecked(&mat);
                        let packed = crate::linalg::svec(&proj);
                        part.copy_from_slice(&packed);
                    }
                }
            }
            start += len;
        }
    }
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0_f64, |a, x| a.max(x.abs()))
}

struct Residuals {
    primal: f64,
    dual: f64,
    /// Relative duality gap.
    gap: f64,
}

/// Solves the problem with the operator-splitting iteration.
///
/// Always returns a solution; `status` records why the iteration stopped.
pub fn solve(problem: &ConicProblem, config: &SolverConfig) -> Result<ConicSolution, SdpError> {
    problem.validate()?;
    if !(config.alpha > 0.0 && config.alpha < 2.0) || config.rho <= 0.0 || config.sigma <= 0.0 {
        return Err(SdpError::InvalidConfig);
    }
    let mut st = Standard::build(problem);
    st.equilibrate(config.scaling_iterations);
    let n = st.n;
    let m = st.m();

    let mut rho = config.rho;
    let mut rho_vec = st.row_rho(rho);
    let (mut kkt, mut u) = st.factor(&rho_vec, config.sigma, config.linear_solver)?;

    let mut x = vec![0.0; n];
    let mut s = vec![0.0; m];
    let mut y = vec![0.0; m];
    let mut x_prev = x.clone();
    let mut y_prev = y.clone();

    let mut rhs = vec![0.0; n];
    let mut ax = vec![0.0; m];
    let mut tmp_m = vec![0.0; m];
    let alpha = config.alpha;
    let mut status = SolveStatus::MaxIterations;
    let mut iterations = config.max_iterations;
    let mut last = Residuals {
        primal: f64::INFINITY,
        dual: f64::INFINITY,
        gap: f64::INFINITY,
    };

    for k in 1..=config.max_iterations {
        let checking = k % config.check_interval.max(1) == 0 || k == config.max_iterations;
        if checking {
            x_prev.copy_from_slice(&x);
            y_prev.copy_from_slice(&y);
        }
        // rhs = σx − q + Âᵀ(R(b − s) + y)
        for i in 0..m {
            tmp_m[i] = rho_vec[i] * (st.b[i] - s[i]) + y[i];
        }
        for j in 0..n {
            rhs[j] = config.sigma * x[j] - st.q[j];
        }
        st.at_mul_add(&tmp_m, &mut rhs);
        let x_tilde = kkt.solve(&u, &rhs);
        st.a_mul(&x_tilde, &mut ax);
        // v = α s̃ + (1 − α) s with s̃ = b − Âx̃ ; w = v + R⁻¹y
        for i in 0..m {
            let v = alpha * (st.b[i] - ax[i]) + (1.0 - alpha) * s[i];
            tmp_m[i] = v;
            s[i] = v + y[i] / rho_vec[i];
        }
        for j in 0..n {
            x[j] = alpha * x_tilde[j] + (1.0 - alpha) * x[j];
        }
        st.project(&mut s);
        for i in 0..m {
            y[i] += rho_vec[i] * (tmp_m[i] - s[i]);
        }

        if !checking {
            continue;
        }
        let res = residuals(&st, &x, &s, &y);
        if config.log_interval > 0 && k % config.log_interval == 0 {
            log::debug!(
                "iter {k}: primal {:.3e} dual {:.3e} gap {:.3e} rho {:.3e}",
                res.primal,
                res.dual,
                res.gap,
                rho
            );
        }
        let converged = res.primal <= config.eps_abs
            && res.dual <= config.eps_abs
            && res.gap <= config.eps_abs;
        last = res;
        if converged {
            status = SolveStatus::Optimal;
            iterations = k;
            break;
        }
        if primal_infeasible(&st, &y, &y_prev, config.eps_infeasible) {
            status = SolveStatus::Infeasible;
            iterations = k;
            break;
        }
        if dual_infeasible(&st, &x, &x_prev, config.eps_infeasible) {
            status = SolveStatus::Unbounded;
            iterations = k;
            break;
        }
        if config.adaptive_rho && k % config.adapt_interval.max(1) == 0 {
            let scaled = scaled_ratio(&st, &x, &s, &y);
            let new_rho = (rho * scaled).clamp(1e-6, 1e6);
            if new_rho > 5.0 * rho || new_rho < 0.2 * rho {
                rho = new_rho;
                rho_vec = st.row_rho(rho);
                let (k2, u2) = st.factor(&rho_vec, config.sigma, config.linear_solver)?;
                kkt = k2;
                u = u2;
            }
        }
    }

    // Unscale.
    let x_out: Vec<f64> = x.iter().zip(&st.d).map(|(v, d)| v * d).collect();
    let y_out: Vec<f64> = y.iter().zip(&st.e).map(|(v, e)| v * e / st.c).collect();
    let mut x_out = x_out;
    for cone_block in problem.blocks() {
        let range = cone_block.offset..cone_block.offset + packed_len(cone_block.dim);
        let mat = smat(&x_out[range.clone()], cone_block.dim);
        let proj = project_psd_unchecked(&mat);
        x_out[range].copy_from_slice(&crate::linalg::svec(&proj));
    }
    let objective_value = objective(problem, &x_out);
    Ok(ConicSolution {
        status,
        primal_residual: last.primal,
        dual_residual: last.dual,
        iterations,
        objective_value,
        x: x_out,
        y: y_out,
    })
}

fn objective(problem: &ConicProblem, x: &[f64]) -> f64 {
    let mut v = problem.objective.linear.eval(x);
    for (e, w) in &problem.objective.squares {
        let r = e.eval(x);
        v += w * r * r;
    }
    v
}

/// Normalized residuals in the original (unscaled) units.
fn residuals(st: &Standard, x: &[f64], s: &[f64], y: &[f64]) -> Residuals {
    let n = st.n;
    let m = st.m();
    let mut ax = vec![0.0; m];
    st.a_mul(x, &mut ax);
    let (mut rp, mut nax, mut ns, mut nb) = (0.0_f64, 0.0_f64, 0.0_f64, 0.0_f64);
    for i in 0..m {
        let inv = 1.0 / st.e[i];
        rp = rp.max(((ax[i] + s[i] - st.b[i]) * inv).abs());
        nax = nax.max((ax[i] * inv).abs());
        ns = ns.max((s[i] * inv).abs());
        nb = nb.max((st.b[i] * inv).abs());
    }
    let mut px = vec![0.0; n];
    st.p_mul(x, &mut px);
    let mut aty = vec![0.0; n];
    st.at_mul_add(y, &mut aty);
    let (mut rd, mut npx, mut nq, mut naty) = (0.0_f64, 0.0_f64, 0.0_f64, 0.0_f64);
    let cinv = 1.0 / st.c;
    for j in 0..n {
        let inv = cinv / st.d[j];
        rd = rd.max(((px[j] + st.q[j] - aty[j]) * inv).abs());
        npx = npx.max((px[j] * inv).abs());
        nq = nq.max((st.q[j] * inv).abs());
        naty = naty.max((aty[j] * inv).abs());
    }
    // Primal ½xᵀPx + qᵀx against dual −½xᵀPx + bᵀy, both in unscaled units.
    let xpx: f64 = x.iter().zip(&px).map(|(a, b)| a * b).sum::<f64>() * cinv;
    let qx: f64 = x.iter().zip(&st.q).map(|(a, b)| a * b).sum::<f64>() * cinv;
    let by: f64 = st.b.iter().zip(y).map(|(a, b)| a * b).sum::<f64>() * cinv;
    let pobj = 0.5 * xpx + qx;
    let dobj = -0.5 * xpx + by;
    Residuals {
        primal: rp / (1.0 + nax.max(ns).max(nb)),
        dual: rd / (1.0 + npx.max(nq).max(naty)),
        gap: (pobj - dobj).abs() / (1.0 + pobj.abs().max(dobj.abs())),
    }
}

/// Step-size balancing factor computed in the scaled space.
fn scaled_ratio(st: &Standard, x: &[f64], s: &[f64], y: &[f64]) -> f64 {
    let n = st.n;
    let m = st.m();
    let mut ax = vec![0.0; m];
    st.a_mul(x, &mut ax);
    let rp: Vec<f64> = (0..m).map(|i| ax[i] + s[i] - st.b[i]).collect();
    let mut px = vec![0.0; n];
    st.p_mul(x, &mut px);
    let mut aty = vec![0.0; n];
    st.at_mul_add(y, &mut aty);
    let rd: Vec<f64> = (0..n).map(|j| px[j] + st.q[j] - aty[j]).collect();
    let pnorm = inf_norm(&rp) / inf_norm(&ax).max(inf_norm(s)).max(inf_norm(&st.b)).max(1e-30);
    let dnorm = inf_norm(&rd) / inf_norm(&px).max(inf_norm(&aty)).max(inf_norm(&st.q)).max(1e-30);
    if pnorm == 0.0 || dnorm == 0.0 {
        return 1.0;
    }
    (pnorm / dnorm).sqrt()
}

/// `δy` certifies `Ax + s = b, s ∈ K` empty when `Aᵀδy ≈ 0`, `bᵀδy > 0`
/// and `δy` lies in the polar cone.
fn primal_infeasible(st: &Standard, y: &[f64], y_prev: &[f64], eps: f64) -> bool {
    let m = st.m();
    let n = st.n;
    let dy_hat: Vec<f64> = (0..m).map(|i| y[i] - y_prev[i]).collect();
    let dy: Vec<f64> = (0..m).map(|i| dy_hat[i] * st.e[i] / st.c).collect();
    let norm = inf_norm(&dy);
    if norm < 1e-12 {
        return false;
    }
    let mut aty = vec![0.0; n];
    st.at_mul_add(&dy_hat, &mut aty);
    let aty_norm = (0..n).fold(0.0_f64, |a, j| a.max((aty[j] / (st.d[j] * st.c)).abs()));
    if aty_norm > eps * norm {
        return false;
    }
    let bdy: f64 = (0..m).map(|i| st.b[i] * dy_hat[i]).sum::<f64>() / st.c;
    if bdy <= eps * norm {
        return false;
    }
    in_polar(st, &dy, eps * norm)
}

fn in_polar(st: &Standard, v: &[f64], tol: f64) -> bool {
    let mut start = 0;
    for cone in &st.cones {
        let len = cone.len();
        let part = &v[start..start + len];
        let ok = match *cone {
            Cone::Zero(_) => true,
            Cone::Nonneg(_) => part.iter().all(|&x| x <= tol),
            Cone::Psd(dim) => dim == 0 || sym_eigen(&smat(part, dim)).0[0] <= tol,
        };
        if !ok {
            return false;
        }
        start += len;
    }
    true
}

/// `δx` is a recession direction with decreasing cost: `Pδx ≈ 0`,
/// `qᵀδx < 0` and `−Aδx ∈ K`.
fn dual_infeasible(st: &Standard, x: &[f64], x_prev: &[f64], eps: f64) -> bool {
    let n = st.n;
    let m = st.m();
    let dx_hat: Vec<f64> = (0..n).map(|j| x[j] - x_prev[j]).collect();
    let dx: Vec<f64> = (0..n).map(|j| dx_hat[j] * st.d[j]).collect();
    let norm = inf_norm(&dx);
    if norm < 1e-12 {
        return false;
    }
    let qdx: f64 = (0..n).map(|j| st.q[j] * dx_hat[j]).sum::<f64>() / st.c;
    if qdx >= -eps * norm {
        return false;
    }
    let mut pdx = vec![0.0; n];
    st.p_mul(&dx_hat, &mut pdx);
    let pnorm = (0..n).fold(0.0_f64, |a, j| a.max((pdx[j] / (st.d[j] * st.c)).abs()));
    if pnorm > eps * norm {
        return false;
    }
    let mut adx = vec![0.0; m];
    st.a_mul(&dx_hat, &mut adx);
    let neg: Vec<f64> = (0..m).map(|i| -adx[i] / st.e[i]).collect();
    let tol = eps * norm;
    let mut start = 0;
    for cone in &st.cones {
        let len = cone.len();
        let part = &neg[start..start + len];
        let ok = match *cone {
            Cone::Zero(_) => part.iter().all(|v| v.abs() <= tol),
            Cone::Nonneg(_) => part.iter().all(|&v| v >= -tol),
            Cone::Psd(dim) => {
                dim == 0 || {
                    let vals = sym_eigen(&smat(part, dim)).0;
                    vals[vals.len() - 1] >= -tol
                }
            }
        };
        if !ok {
            return false;
        }
        start += len;
    }
    true
}
