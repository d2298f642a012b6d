//! Sparse multivariate polynomials and matrices of them.

use std::collections::BTreeMap;
use std::ops::{Add, Mul, Neg, Sub};

use nalgebra::{DMatrix, DVector};

/// Exponent vector, one entry per variable.
pub type Monomial = Vec<u32>;

pub fn monomial_degree(m: &[u32]) -> u32 {
    m.iter().sum()
}

/// All monomials in `nvars` variables of total degree ≤ `degree` that only
/// involve the variables in `active`, ordered by degree then
/// lexicographically.
pub fn monomials_up_to(nvars: usize, active: &[usize], degree: u32) -> Vec<Monomial> {
    fn fill(active: &[usize], left: u32, cur: &mut Monomial, out: &mut Vec<Monomial>) {
        match active.split_first() {
            None => out.push(cur.clone()),
            Some((&v, rest)) => {
                for e in 0..=left {
                    cur[v] = e;
                    fill(rest, left - e, cur, out);
                }
                cur[v] = 0;
            }
        }
    }
    let mut out = Vec::new();
    fill(active, degree, &mut vec![0; nvars], &mut out);
    out.sort_by(|a, b| monomial_degree(a).cmp(&monomial_degree(b)).then_with(|| b.cmp(a)));
    out
}

/// `Σ cₐ xᵃ` with exactly-zero coefficients removed.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Polynomial {
    nvars: usize,
    terms: BTreeMap<Monomial, f64>,
}

impl Polynomial {
    pub fn zero(nvars: usize) -> Self {
        Self {
            nvars,
            terms: BTreeMap::new(),
        }
    }

    pub fn constant(nvars: usize, c: f64) -> Self {
        Self::monomial(vec![0; nvars], c)
    }

    /// The coordinate `xᵢ`.
    pub fn var(nvars: usize, i: usize) -> Self {
        let mut e = vec![0; nvars];
        e[i] = 1;
        Self::monomial(e, 1.0)
    }

    pub fn monomial(exponents: Monomial, coef: f64) -> Self {
        let mut p = Self::zero(exponents.len());
        p.add_term(exponents, coef);
        p
    }

    pub fn from_terms(nvars: usize, terms: impl IntoIterator<Item = (Monomial, f64)>) -> Self {
        let mut p = Self::zero(nvars);
        for (m, c) in terms {
            p.add_term(m, c);
        }
        p
    }

    pub fn add_term(&mut self, exponents: Monomial, coef: f64) {
        assert_eq!(exponents.len(), self.nvars, "monomial arity");
        if coef == 0.0 {
            return;
        }
        let entry = self.terms.entry(exponents).or_insert(0.0);
        *entry += coef;
        if *entry == 0.0 {
            self.terms.retain(|_, v| *v != 0.0);
        }
    }

    pub fn nvars(&self) -> usize {
        self.nvars
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    /// Total degree; 0 for the zero polynomial.
    pub fn degree(&self) -> u32 {
        self.terms.keys().map(|m| monomial_degree(m)).max().unwrap_or(0)
    }

    pub fn coeff(&self, exponents: &[u32]) -> f64 {
        self.terms.get(exponents).copied().unwrap_or(0.0)
    }

    pub fn terms(&self) -> impl Iterator<Item = (&Monomial, f64)> {
        self.terms.iter().map(|(m, &c)| (m, c))
    }

    /// Variables with a nonzero exponent in some term.
    pub fn variables(&self) -> Vec<usize> {
        (0..self.nvars)
            .filter(|&i| self.terms.keys().any(|m| m[i] > 0))
            .collect()
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        assert_eq!(x.len(), self.nvars, "point dimension");
        self.terms
            .iter()
            .map(|(m, c)| {
                c * m
                    .iter()
                    .zip(x)
                    .map(|(&e, &xi)| xi.powi(e as i32))
                    .product::<f64>()
            })
            .sum()
    }

    pub fn scale(&self, s: f64) -> Self {
        Self::from_terms(self.nvars, self.terms.iter().map(|(m, c)| (m.clone(), c * s)))
    }

    /// Drops terms with |coefficient| ≤ tol.
    pub fn pruned(&self, tol: f64) -> Self {
        Self::from_terms(
            self.nvars,
            self.terms
                .iter()
                .filter(|(_, c)| c.abs() > tol)
                .map(|(m, &c)| (m.clone(), c)),
        )
    }
}

impl Add for &Polynomial {
    type Output = Polynomial;
    fn add(self, rhs: &Polynomial) -> Polynomial {
        assert_eq!(self.nvars, rhs.nvars);
        let mut out = self.clone();
        for (m, &c) in &rhs.terms {
            out.add_term(m.clone(), c);
        }
        out
    }
}

impl Sub for &Polynomial {
    type Output = Polynomial;
    fn sub(self, rhs: &Polynomial) -> Polynomial {
        self + &(-rhs)
    }
}

impl Neg for &Polynomial {
    type Output = Polynomial;
    fn neg(self) -> Polynomial {
        self.scale(-1.0)
    }
}

impl Mul for &Polynomial {
    type Output = Polynomial;
    fn mul(self, rhs: &Polynomial) -> Polynomial {
        assert_eq!(self.nvars, rhs.nvars);
        let mut out = Polynomial::zero(self.nvars);
        for (ma, &ca) in &self.terms {
            for (mb, &cb) in &rhs.terms {
                let m = ma.iter().zip(mb).map(|(a, b)| a + b).collect();
                out.add_term(m, ca * cb);
            }
        }
        out
    }
}

/// Dense matrix with polynomial entries in a shared set of variables.
#[derive(Debug, Clone, PartialEq)]
pub struct PolynomialMatrix {
    rows: usize,
    cols: usize,
    nvars: usize,
    entries: Vec<Polynomial>,
    /// Upper bound on the total degree of every entry.
    degree_bound: u32,
}

impl PolynomialMatrix {
    pub fn zeros(rows: usize, cols: usize, nvars: usize) -> Self {
        Self {
            rows,
            cols,
            nvars,
            entries: vec![Polynomial::zero(nvars); rows * cols],
            degree_bound: 0,
        }
    }

    pub fn from_constant(m: &DMatrix<f64>, nvars: usize) -> Self {
        Self::from_fn(m.nrows(), m.ncols(), nvars, |i, j| {
            Polynomial::constant(nvars, m[(i, j)])
        })
    }

    pub fn from_fn(
        rows: usize,
        cols: usize,
        nvars: usize,
        mut f: impl FnMut(usize, usize) -> Polynomial,
    ) -> Self {
        let mut entries = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                let p = f(i, j);
                assert_eq!(p.nvars(), nvars, "entry ({i},{j}) arity");
                entries.push(p);
            }
        }
        let degree_bound = entries.iter().map(Polynomial::degree).max().unwrap_or(0);
        Self {
            rows,
            cols,
            nvars,
            entries,
            degree_bound,
        }
    }

    /// Column vector `[x₁, …, xₙ]ᵀ` of the coordinates.
    pub fn state_vector(nvars: usize) -> Self {
        Self::from_fn(nvars, 1, nvars, |i, _| Polynomial::var(nvars, i))
    }

    pub fn nrows(&self) -> usize {
        self.rows
    }

    pub fn ncols(&self) -> usize {
        self.cols
    }

    pub fn nvars(&self) -> usize {
        self.nvars
    }

    pub fn degree_bound(&self) -> u32 {
        self.degree_bound
    }

    /// Actual maximum entry degree.
    pub fn degree(&self) -> u32 {
        self.entries.iter().map(Polynomial::degree).max().unwrap_or(0)
    }

    pub fn get(&self, i: usize, j: usize) -> &Polynomial {
        &self.entries[i * self.cols + j]
    }

    pub fn set(&mut self, i: usize, j: usize, p: Polynomial) {
        assert_eq!(p.nvars(), self.nvars);
        self.degree_bound = self.degree_bound.max(p.degree());
        self.entries[i * self.cols + j] = p;
    }

    pub fn variables(&self) -> Vec<usize> {
        (0..self.nvars)
            .filter(|&v| self.entries.iter().any(|p| p.variables().contains(&v)))
            .collect()
    }

    pub fn eval(&self, x: &[f64]) -> DMatrix<f64> {
        DMatrix::from_fn(self.rows, self.cols, |i, j| self.get(i, j).eval(x))
    }

    pub fn eval_vec(&self, x: &DVector<f64>) -> DMatrix<f64> {
        self.eval(x.as_slice())
    }

    pub fn transpose(&self) -> Self {
        let mut t = Self::from_fn(self.cols, self.rows, self.nvars, |i, j| self.get(j, i).clone());
        t.degree_bound = self.degree_bound;
        t
    }

    pub fn scale(&self, s: f64) -> Self {
        let mut out = Self::from_fn(self.rows, self.cols, self.nvars, |i, j| self.get(i, j).scale(s));
        out.degree_bound = self.degree_bound;
        out
    }

    pub fn add(&self, other: &Self) -> Self {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols), "shape");
        let mut out =
            Self::from_fn(self.rows, self.cols, self.nvars, |i, j| self.get(i, j) + other.get(i, j));
        out.degree_bound = self.degree_bound.max(other.degree_bound);
        out
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.add(&other.scale(-1.0))
    }

    pub fn mul(&self, other: &Self) -> Self {
        assert_eq!(self.cols, other.rows, "inner dimension");
        let mut out = Self::from_fn(self.rows, other.cols, self.nvars, |i, j| {
            (0..self.cols).fold(Polynomial::zero(self.nvars), |acc, k| {
                &acc + &(self.get(i, k) * other.get(k, j))
            })
        });
        out.degree_bound = self.degree_bound + other.degree_bound;
        out
    }

    pub fn mul_constant(&self, m: &DMatrix<f64>) -> Self {
        self.mul(&Self::from_constant(m, self.nvars))
    }

    pub fn left_mul_constant(&self, m: &DMatrix<f64>) -> Self {
        Self::from_constant(m, self.nvars).mul(self)
    }

    /// Stacks `[[a, b], [c, d]]`.
    pub fn blocks(a: &Self, b: &Self, c: &Self, d: &Self) -> Self {
        assert_eq!(a.rows, b.rows);
        assert_eq!(c.rows, d.rows);
        assert_eq!(a.cols, c.cols);
        assert_eq!(b.cols, d.cols);
        let (r, k) = (a.rows, a.cols);
        Self::from_fn(a.rows + c.rows, a.cols + b.cols, a.nvars, |i, j| {
            match (i < r, j < k) {
                (true, true) => a.get(i, j).clone(),
                (true, false) => b.get(i, j - k).clone(),
                (false, true) => c.get(i - r, j).clone(),
                (false, false) => d.get(i - r, j - k).clone(),
            }
        })
    }

    pub fn pruned(&self, tol: f64) -> Self {
        Self::from_fn(self.rows, self.cols, self.nvars, |i, j| self.get(i, j).pruned(tol))
    }

    pub fn is_symmetric(&self) -> bool {
        self.rows == self.cols
            && (0..self.rows).all(|i| (i + 1..self.cols).all(|j| self.get(i, j) == self.get(j, i)))
    }
}
