use nalgebra::DMatrix;

use super::SdpError;
use crate::linalg::{packed_index, packed_len};

/// Handle to a symmetric matrix variable constrained to the PSD cone.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct BlockId {
    pub(crate) index: usize,
    pub(crate) offset: usize,
    pub(crate) dim: usize,
}

impl BlockId {
    pub fn dim(&self) -> usize {
        self.dim
    }
}

/// Handle to a scalar variable.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ScalarId {
    pub(crate) index: usize,
    pub(crate) offset: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScalarKind {
    Free,
    Nonneg,
}

#[derive(Debug, Clone)]
pub(crate) enum VarKind {
    Block { dim: usize },
    Scalar(ScalarKind),
}

#[derive(Debug, Clone)]
pub(crate) struct VarDecl {
    pub offset: usize,
    pub kind: VarKind,
}

/// Affine expression `Σ cᵢ·varᵢ + constant` over the flat variable vector.
///
/// Matrix entries are addressed through their block handle; the scaled
/// half-vectorization used internally is hidden from callers.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LinExpr {
    /// Sorted by index, no duplicates.
    terms: Vec<(usize, f64)>,
    constant: f64,
}

impl LinExpr {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_capacity(n: usize) -> Self {
        Self {
            terms: Vec::with_capacity(n),
            constant: 0.0,
        }
    }

    pub fn constant(c: f64) -> Self {
        Self {
            terms: Vec::new(),
            constant: c,
        }
    }

    pub fn from_scalar(s: ScalarId, coef: f64) -> Self {
        let mut e = Self::new();
        e.add_scalar(s, coef);
        e
    }

    pub fn add_constant(&mut self, c: f64) -> &mut Self {
        self.constant += c;
        self
    }

    pub fn add_scalar(&mut self, s: ScalarId, coef: f64) -> &mut Self {
        self.push(s.offset, coef);
        self
    }

    /// Adds `coef · X[i, j]` for the symmetric block `X`.
    pub fn add_entry(&mut self, b: BlockId, i: usize, j: usize, coef: f64) -> &mut Self {
        assert!(i < b.dim && j < b.dim, "entry ({i},{j}) outside block of size {}", b.dim);
        let scale = if i == j {
            1.0
        } else {
            std::f64::consts::FRAC_1_SQRT_2
        };
        self.push(b.offset + packed_index(b.dim, i, j), coef * scale);
        self
    }

    /// Adds the trace inner product `⟨C, X⟩` with `C` symmetric.
    pub fn add_inner(&mut self, b: BlockId, c: &DMatrix<f64>) -> &mut Self {
        assert_eq!(c.nrows(), b.dim);
        assert_eq!(c.ncols(), b.dim);
        for i in 0..b.dim {
            let d = c[(i, i)];
            if d != 0.0 {
                self.push(b.offset + packed_index(b.dim, i, i), d);
            }
            for j in (i + 1)..b.dim {
                let v = c[(i, j)] + c[(j, i)];
                if v != 0.0 {
                    self.push(
                        b.offset + packed_index(b.dim, i, j),
                        v * std::f64::consts::FRAC_1_SQRT_2,
                    );
                }
            }
        }
        self
    }

    /// Adds `coef · Trace(X)`.
    pub fn add_trace(&mut self, b: BlockId, coef: f64) -> &mut Self {
        for i in 0..b.dim {
            self.add_entry(b, i, i, coef);
        }
        self
    }

    pub fn add_expr(&mut self, other: &LinExpr, coef: f64) -> &mut Self {
        for &(k, v) in &other.terms {
            self.push(k, coef * v);
        }
        self.constant += coef * other.constant;
        self
    }

    pub fn scaled(&self, coef: f64) -> LinExpr {
        let mut e = LinExpr::new();
        e.add_expr(self, coef);
        e
    }

    pub(crate) fn push(&mut self, index: usize, coef: f64) {
        if coef == 0.0 {
            return;
        }
        match self.terms.last_mut() {
            None => self.terms.push((index, coef)),
            Some(last) if last.0 < index => self.terms.push((index, coef)),
            Some(last) if last.0 == index => last.1 += coef,
            Some(_) => match self.terms.binary_search_by_key(&index, |&(k, _)| k) {
                Ok(pos) => self.terms[pos].1 += coef,
                Err(pos) => self.terms.insert(pos, (index, coef)),
            },
        }
    }

    pub fn constant_term(&self) -> f64 {
        self.constant
    }

    pub fn is_constant(&self) -> bool {
        self.terms.iter().all(|&(_, v)| v == 0.0)
    }

    pub(crate) fn terms(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.terms.iter().copied().filter(|&(_, v)| v != 0.0)
    }

    pub(crate) fn max_index(&self) -> Option<usize> {
        self.terms.last().map(|&(k, _)| k)
    }

    /// Evaluates the expression at a flat variable vector.
    pub(crate) fn eval(&self, x: &[f64]) -> f64 {
        self.constant + self.terms().map(|(k, v)| v * x[k]).sum::<f64>()
    }
}

/// `bound ≥ termⱼ(x)` for every term: a max-of-affine epigraph.
#[derive(Debug, Clone)]
pub struct Epigraph {
    pub bound: ScalarId,
    pub terms: Vec<LinExpr>,
}

/// Objective `linear(x) + Σ wₖ·exprₖ(x)²` with `wₖ ≥ 0`.
#[derive(Debug, Clone, Default)]
pub struct Objective {
    pub linear: LinExpr,
    pub squares: Vec<(LinExpr, f64)>,
}

/// Structured semidefinite program: PSD matrix blocks, free or nonnegative
/// scalars, linear equalities, a convex quadratic-plus-linear objective and
/// an optional max-of-affine epigraph.
#[derive(Debug, Clone, Default)]
pub struct ConicProblem {
    pub(crate) vars: Vec<VarDecl>,
    pub(crate) n_flat: usize,
    pub(crate) blocks: Vec<BlockId>,
    pub(crate) scalars: Vec<(ScalarId, ScalarKind)>,
    pub(crate) equalities: Vec<(LinExpr, f64)>,
    pub(crate) objective: Objective,
    pub(crate) epigraph: Option<Epigraph>,
}

impl ConicProblem {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_psd_block(&mut self, dim: usize) -> BlockId {
        let id = BlockId {
            index: self.blocks.len(),
            offset: self.n_flat,
            dim,
        };
        self.vars.push(VarDecl {
            offset: self.n_flat,
            kind: VarKind::Block { dim },
        });
        self.n_flat += packed_len(dim);
        self.blocks.push(id);
        id
    }

    pub fn add_scalar(&mut self, kind: ScalarKind) -> ScalarId {
        let id = ScalarId {
            index: self.scalars.len(),
            offset: self.n_flat,
        };
        self.vars.push(VarDecl {
            offset: self.n_flat,
            kind: VarKind::Scalar(kind),
        });
        self.n_flat += 1;
        self.scalars.push((id, kind));
        id
    }

    /// A symmetric matrix of free scalars, returned as per-entry handles
    /// `(i, j)` for `i <= j` in row-major order.
    pub fn add_free_symmetric(&mut self, dim: usize) -> SymmetricVar {
        let mut entries = Vec::with_capacity(packed_len(dim));
        for _ in 0..packed_len(dim) {
            entries.push(self.add_scalar(ScalarKind::Free));
        }
        SymmetricVar { dim, entries }
    }

    /// Adds the constraint `expr = rhs` (the expression's constant is moved
    /// to the right-hand side).
    pub fn add_equality(&mut self, expr: LinExpr, rhs: f64) {
        self.equalities.push((expr, rhs));
    }

    pub fn add_objective_linear(&mut self, expr: &LinExpr) {
        self.objective.linear.add_expr(expr, 1.0);
    }

    /// Adds `weight · expr(x)²` to the objective.
    pub fn add_objective_square(&mut self, expr: LinExpr, weight: f64) {
        self.objective.squares.push((expr, weight));
    }

    pub fn set_epigraph(&mut self, bound: ScalarId, terms: Vec<LinExpr>) {
        self.epigraph = Some(Epigraph { bound, terms });
    }

    pub fn num_blocks(&self) -> usize {
        self.blocks.len()
    }

    pub fn blocks(&self) -> &[BlockId] {
        &self.blocks
    }

    pub fn num_scalars(&self) -> usize {
        self.scalars.len()
    }

    pub fn num_equalities(&self) -> usize {
        self.equalities.len()
    }

    pub fn equalities(&self) -> &[(LinExpr, f64)] {
        &self.equalities
    }

    pub fn objective(&self) -> &Objective {
        &self.objective
    }

    pub fn epigraph(&self) -> Option<&Epigraph> {
        self.epigraph.as_ref()
    }

    /// Length of the flat variable vector.
    pub fn num_variables(&self) -> usize {
        self.n_flat
    }

    /// Checks that every referenced variable exists and the quadratic part
    /// is convex.
    pub fn validate(&self) -> Result<(), SdpError> {
        let check = |e: &LinExpr, what: &str| -> Result<(), SdpError> {
            if let Some(m) = e.max_index() {
                if m >= self.n_flat {
                    return Err(SdpError::UndeclaredVariable(format!(
                        "{what} references flat index {m}, only {} declared",
                        self.n_flat
                    )));
                }
            }
            if e.terms().any(|(_, v)| !v.is_finite()) || !e.constant_term().is_finite() {
                return Err(SdpError::NonFinite(what.to_string()));
            }
            Ok(())
        };
        for (e, rhs) in &self.equalities {
            check(e, "equality")?;
            if !rhs.is_finite() {
                return Err(SdpError::NonFinite("equality rhs".into()));
            }
        }
        check(&self.objective.linear, "objective")?;
        for (e, w) in &self.objective.squares {
            check(e, "objective square")?;
            if !(*w >= 0.0) || !w.is_finite() {
                return Err(SdpError::NotConvex(*w));
            }
        }
        if let Some(epi) = &self.epigraph {
            if epi.bound.offset >= self.n_flat {
                return Err(SdpError::UndeclaredVariable("epigraph bound".into()));
            }
            for t in &epi.terms {
                check(t, "epigraph term")?;
            }
        }
        Ok(())
    }
}

/// Symmetric matrix built from free scalar variables.
#[derive(Debug, Clone)]
pub struct SymmetricVar {
    dim: usize,
    entries: Vec<ScalarId>,
}

impl SymmetricVar {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn entry(&self, i: usize, j: usize) -> ScalarId {
        self.entries[packed_index(self.dim, i, j)]
    }

    /// Adds `coef · X[i, j]` to `e`.
    pub fn add_to(&self, e: &mut LinExpr, i: usize, j: usize, coef: f64) {
        e.add_scalar(self.entry(i, j), coef);
    }
}
