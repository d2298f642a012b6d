//! Matrix sum-of-squares constraints as Gram-matrix equalities.
//!
//! A symmetric polynomial matrix `M(x)` is certified by `ηᵀM(x)η` being a
//! sum of squares in `(x, η)`, written as `M(x) = (I ⊗ b(x))ᵀ Q (I ⊗ b(x))`
//! with `Q ⪰ 0` and `b` the monomials of degree ≤ ⌈deg M / 2⌉ in the
//! variables that occur. On a box each active coordinate contributes a
//! multiplier `(uᵢ − xᵢ)(xᵢ − lᵢ)·Sᵢ` with `Sᵢ ⪰ 0` constant.

use std::collections::{BTreeMap, BTreeSet};

use crate::linalg::packed_index;
use crate::poly::{monomial_degree, monomials_up_to, Monomial, Polynomial};
use crate::sdp::{BlockId, ConicProblem, ConicSolution, LinExpr};

use super::Region;

/// Polynomial whose coefficients are affine expressions in decision
/// variables.
#[derive(Debug, Clone, Default)]
pub struct LinPoly {
    nvars: usize,
    terms: BTreeMap<Monomial, LinExpr>,
}

impl LinPoly {
    pub fn zero(nvars: usize) -> Self {
        Self {
            nvars,
            terms: BTreeMap::new(),
        }
    }

    pub fn from_expr(nvars: usize, e: LinExpr) -> Self {
        let mut p = Self::zero(nvars);
        p.terms.insert(vec![0; nvars], e);
        p
    }

    pub fn nvars(&self) -> usize {
        self.nvars
    }

    pub fn add_term(&mut self, m: Monomial, e: &LinExpr, coef: f64) {
        self.terms
            .entry(m)
            .or_insert_with(LinExpr::new)
            .add_expr(e, coef);
    }

    /// `+= poly(x) · e`
    pub fn add_poly_times(&mut self, poly: &Polynomial, e: &LinExpr) {
        for (m, c) in poly.terms() {
            self.add_term(m.clone(), e, c);
        }
    }

    /// `+= poly(x)` as constants.
    pub fn add_poly(&mut self, poly: &Polynomial) {
        for (m, c) in poly.terms() {
            self.add_term(m.clone(), &LinExpr::constant(c), 1.0);
        }
    }

    /// `+= poly(x) · other(x)`
    pub fn add_product(&mut self, poly: &Polynomial, other: &LinPoly) {
        for (ma, ca) in poly.terms() {
            for (mb, e) in &other.terms {
                let m = ma.iter().zip(mb).map(|(a, b)| a + b).collect();
                self.add_term(m, e, ca);
            }
        }
    }

    pub fn add(&mut self, other: &LinPoly, coef: f64) {
        for (m, e) in &other.terms {
            self.add_term(m.clone(), e, coef);
        }
    }

    pub fn degree(&self) -> u32 {
        self.terms.keys().map(|m| monomial_degree(m)).max().unwrap_or(0)
    }

    fn variables(&self, out: &mut BTreeSet<usize>) {
        for m in self.terms.keys() {
            out.extend((0..self.nvars).filter(|&i| m[i] > 0));
        }
    }

    pub fn coefficient(&self, m: &[u32]) -> Option<&LinExpr> {
        self.terms.get(m)
    }

    /// Numeric polynomial at a solved point.
    pub fn value(&self, sol: &ConicSolution) -> Polynomial {
        Polynomial::from_terms(
            self.nvars,
            self.terms.iter().map(|(m, e)| (m.clone(), sol.value(e))),
        )
    }
}

/// Symmetric matrix of [`LinPoly`] entries, upper triangle stored.
#[derive(Debug, Clone)]
pub struct SymLinPolyMatrix {
    dim: usize,
    nvars: usize,
    upper: Vec<LinPoly>,
}

impl SymLinPolyMatrix {
    pub fn zeros(dim: usize, nvars: usize) -> Self {
        Self {
            dim,
            nvars,
            upper: vec![LinPoly::zero(nvars); dim * (dim + 1) / 2],
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn entry_mut(&mut self, i: usize, j: usize) -> &mut LinPoly {
        &mut self.upper[packed_index(self.dim, i, j)]
    }

    pub fn entry(&self, i: usize, j: usize) -> &LinPoly {
        &self.upper[packed_index(self.dim, i, j)]
    }

    /// Constant symmetric matrix.
    pub fn from_polys(dim: usize, nvars: usize, f: impl Fn(usize, usize) -> Polynomial) -> Self {
        let mut m = Self::zeros(dim, nvars);
        for i in 0..dim {
            for j in i..dim {
                m.entry_mut(i, j).add_poly(&f(i, j));
            }
        }
        m
    }
}

/// Handles of one SOS certificate.
#[derive(Debug, Clone)]
pub struct SosCertificate {
    pub gram: BlockId,
    pub basis: Vec<Monomial>,
    pub multipliers: Vec<(usize, BlockId)>,
}

/// Adds `M(x)` SOS (on `region`) to the problem.
pub fn constrain_sos(
    problem: &mut ConicProblem,
    m: &SymLinPolyMatrix,
    region: &Region,
) -> SosCertificate {
    let dim = m.dim;
    let nvars = m.nvars;
    let mut active = BTreeSet::new();
    for e in &m.upper {
        e.variables(&mut active);
    }
    let active: Vec<usize> = active.into_iter().collect();
    let bounds: Vec<(usize, f64, f64)> = match region {
        Region::Global => Vec::new(),
        Region::Box(b) => active.iter().map(|&v| (v, b[v].0, b[v].1)).collect(),
    };
    let mut max_deg = m.upper.iter().map(LinPoly::degree).max().unwrap_or(0);
    if !bounds.is_empty() {
        max_deg = max_deg.max(2);
    }
    let basis = monomials_up_to(nvars, &active, max_deg.div_ceil(2));
    let nb = basis.len();
    let gram = problem.add_psd_block(dim * nb);

    // ordered basis pairs grouped by their product monomial
    let mut pairs: BTreeMap<Monomial, Vec<(usize, usize)>> = BTreeMap::new();
    for (a, ma) in basis.iter().enumerate() {
        for (b, mb) in basis.iter().enumerate() {
            let g = ma.iter().zip(mb).map(|(x, y)| x + y).collect();
            pairs.entry(g).or_default().push((a, b));
        }
    }

    let multipliers: Vec<(usize, BlockId, Polynomial)> = bounds
        .iter()
        .map(|&(v, lo, hi)| {
            let x = Polynomial::var(nvars, v);
            let g = &(&Polynomial::constant(nvars, hi) - &x) * &(&x - &Polynomial::constant(nvars, lo));
            (v, problem.add_psd_block(dim), g)
        })
        .collect();

    for k in 0..dim {
        for l in k..dim {
            let entry = m.entry(k, l);
            for (g, list) in &pairs {
                let mut e = LinExpr::with_capacity(list.len() + multipliers.len() + 4);
                for &(a, b) in list {
                    e.add_entry(gram, k * nb + a, l * nb + b, 1.0);
                }
                for (_, s, poly) in &multipliers {
                    let c = poly.coeff(g);
                    if c != 0.0 {
                        e.add_entry(*s, k, l, c);
                    }
                }
                if let Some(target) = entry.coefficient(g) {
                    e.add_expr(target, -1.0);
                }
                problem.add_equality(e, 0.0);
            }
        }
    }
    SosCertificate {
        gram,
        basis,
        multipliers: multipliers.into_iter().map(|(v, s, _)| (v, s)).collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sdp::{solve, SolveStatus, SolverConfig};

    fn univariate(coeffs: &[f64]) -> Polynomial {
        Polynomial::from_terms(1, coeffs.iter().enumerate().map(|(d, &c)| (vec![d as u32], c)))
    }

    fn check(p: Polynomial, region: Region) -> SolveStatus {
        let m = SymLinPolyMatrix::from_polys(1, 1, |_, _| p.clone());
        let mut problem = ConicProblem::new();
        constrain_sos(&mut problem, &m, &region);
        solve(&problem, &SolverConfig::default()).unwrap().status
    }

    #[test]
    fn scalar_certificates() {
        // (x − 1)² + 1
        assert_eq!(check(univariate(&[2.0, -2.0, 1.0]), Region::Global), SolveStatus::Optimal);
        assert_eq!(check(univariate(&[-1.0, 0.0, 1.0]), Region::Global), SolveStatus::Infeasible);
        // 1 − x² is nonnegative on [−1, 1] only
        let cap = univariate(&[1.0, 0.0, -1.0]);
        assert_eq!(check(cap.clone(), Region::Box(vec![(-1.0, 1.0)])), SolveStatus::Optimal);
        assert_eq!(check(cap, Region::Global), SolveStatus::Infeasible);
    }

    #[test]
    fn matrix_certificate() {
        // [[1, x], [x, x² + 1]] = LLᵀ with L = [[1, 0], [x, 1]]
        let x = Polynomial::var(1, 0);
        let m = SymLinPolyMatrix::from_polys(2, 1, |i, j| match (i, j) {
            (0, 0) => Polynomial::constant(1, 1.0),
            (0, 1) => x.clone(),
            _ => &(&x * &x) + &Polynomial::constant(1, 1.0),
        });
        let mut problem = ConicProblem::new();
        let cert = constrain_sos(&mut problem, &m, &Region::Global);
        assert_eq!(cert.basis.len(), 2);
        assert!(solve(&problem, &SolverConfig::default()).unwrap().is_optimal());
    }
}
