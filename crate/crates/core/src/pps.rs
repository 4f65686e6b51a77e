//! Positive polynomial systems: evaluation, differentiation, cleanup,
//! inductive checking, and exact least solutions of linear systems.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::{Debug, Display};

use num_traits::{One, Signed, Zero};
use thiserror::Error;

use crate::rational::Rational;

/// Variable identifiers indexing a system. The order of the declared index
/// set, not the `Ord` impl, drives iteration in reports.
pub trait VarId: Clone + Ord + Eq + Debug + Display {}
impl<T: Clone + Ord + Eq + Debug + Display> VarId for T {}

/// Total non-negative rational vector over a declared index set.
pub type RatVec<V> = BTreeMap<V, Rational>;

pub fn const_vec<V: VarId>(index: &[V], value: &Rational) -> RatVec<V> {
    index.iter().map(|v| (v.clone(), value.clone())).collect()
}

pub fn zero_vec<V: VarId>(index: &[V]) -> RatVec<V> {
    const_vec(index, &Rational::zero())
}

/// Max-norm distance between two vectors over the same index set.
pub fn max_norm_diff<V: VarId>(a: &RatVec<V>, b: &RatVec<V>) -> Rational {
    let mut best = Rational::zero();
    for (k, av) in a {
        let bv = b.get(k).cloned().unwrap_or_else(Rational::zero);
        let d = (av - &bv).abs();
        if d > best {
            best = d;
        }
    }
    best
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum PpsError {
    #[error("index mismatch: point is not indexed exactly by the system's index set (offending index `{0}`)")]
    IndexMismatch(String),
    #[error("dimension mismatch between matrix and vector")]
    DimensionMismatch,
    #[error("negative value at index `{0}`")]
    NegativeValue(String),
}

/// One monomial `coeff * prod_v x_v^e_v`; an empty exponent map is a constant.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Monomial<V: VarId> {
    pub coeff: Rational,
    pub exponents: BTreeMap<V, u32>,
}

impl<V: VarId> Monomial<V> {
    pub fn constant(coeff: Rational) -> Self {
        Monomial {
            coeff,
            exponents: BTreeMap::new(),
        }
    }

    pub fn degree(&self) -> u32 {
        self.exponents.values().sum()
    }
}

/// Positive polynomial system over an ordered index set.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Pps<V: VarId> {
    index: Vec<V>,
    polys: Vec<Vec<Monomial<V>>>,
    pos: BTreeMap<V, usize>,
}

/// Square sparse non-negative matrix; absent entries are zero.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RatMat<V: VarId> {
    index: Vec<V>,
    entries: BTreeMap<(V, V), Rational>,
}

impl<V: VarId> RatMat<V> {
    pub fn new(index: Vec<V>) -> Self {
        RatMat {
            index,
            entries: BTreeMap::new(),
        }
    }

    pub fn index_set(&self) -> &[V] {
        &self.index
    }

    pub fn get(&self, row: &V, col: &V) -> Rational {
        self.entries
            .get(&(row.clone(), col.clone()))
            .cloned()
            .unwrap_or_else(Rational::zero)
    }

    /// Accumulates into an entry; zero results are dropped to keep the map sparse.
    pub fn add(&mut self, row: V, col: V, value: Rational) {
        if value.is_zero() {
            return;
        }
        let slot = self
            .entries
            .entry((row, col))
            .or_insert_with(Rational::zero);
        *slot += value;
        if slot.is_zero() {
            // cannot happen for non-negative accumulation, but keep the invariant
            let key = self
                .entries
                .iter()
                .find(|(_, v)| v.is_zero())
                .map(|(k, _)| k.clone());
            if let Some(k) = key {
                self.entries.remove(&k);
            }
        }
    }

    pub fn entries(&self) -> impl Iterator<Item = (&(V, V), &Rational)> {
        self.entries.iter()
    }

    /// y = M x over the declared index set.
    pub fn mul_vec(&self, x: &RatVec<V>) -> Result<RatVec<V>, PpsError> {
        check_indexed(&self.index, x)?;
        let mut out = zero_vec(&self.index);
        for ((r, c), a) in &self.entries {
            let term = a * &x[c];
            *out.get_mut(r).unwrap() += term;
        }
        Ok(out)
    }
}

fn check_indexed<V: VarId>(index: &[V], point: &RatVec<V>) -> Result<(), PpsError> {
    if point.len() != index.len() {
        let missing = index
            .iter()
            .find(|v| !point.contains_key(v))
            .map(|v| v.to_string())
            .or_else(|| {
                point
                    .keys()
                    .find(|k| !index.contains(k))
                    .map(|k| k.to_string())
            })
            .unwrap_or_default();
        return Err(PpsError::IndexMismatch(missing));
    }
    for v in index {
        if !point.contains_key(v) {
            return Err(PpsError::IndexMismatch(v.to_string()));
        }
    }
    Ok(())
}

fn check_non_negative<V: VarId>(point: &RatVec<V>) -> Result<(), PpsError> {
    for (k, v) in point {
        if v.is_negative() {
            return Err(PpsError::NegativeValue(k.to_string()));
        }
    }
    Ok(())
}

/// Outcome of an inductive or certificate check. Accepted iff no violations.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Verdict {
    pub violations: Vec<Violation>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub constraint: String,
    pub index: String,
    pub lhs: Rational,
    pub rhs: Rational,
}

impl Verdict {
    pub fn accepted() -> Self {
        Verdict {
            violations: Vec::new(),
        }
    }

    pub fn rejected(constraint: &str, index: String, lhs: Rational, rhs: Rational) -> Self {
        Verdict {
            violations: vec![Violation {
                constraint: constraint.to_string(),
                index,
                lhs,
                rhs,
            }],
        }
    }

    pub fn is_accepted(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Result of [`solve_linear_least`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum LinearOutcome<V: VarId> {
    Finite(RatVec<V>),
    /// The least non-negative solution has an infinite component.
    Infeasible,
}

/// Cleanup plus constant propagation, used by certificate checks and synthesis.
#[derive(Debug, Clone)]
pub struct Reduced<V: VarId> {
    /// System over the variables with non-trivial (not syntactically forced)
    /// least-solution values, with known constants substituted in.
    pub residual: Pps<V>,
    /// Variables whose least-solution value is exactly zero.
    pub zero_set: BTreeSet<V>,
    /// Variables whose least-solution value collapsed to an exact constant.
    pub constants: BTreeMap<V, Rational>,
}

impl<V: VarId> Pps<V> {
    pub fn new(index: Vec<V>) -> Self {
        let pos = index
            .iter()
            .enumerate()
            .map(|(i, v)| (v.clone(), i))
            .collect();
        let polys = vec![Vec::new(); index.len()];
        Pps { index, polys, pos }
    }

    pub fn index_set(&self) -> &[V] {
        &self.index
    }

    pub fn is_empty(&self) -> bool {
        self.index.is_empty()
    }

    pub fn poly(&self, var: &V) -> Option<&[Monomial<V>]> {
        self.pos.get(var).map(|&i| self.polys[i].as_slice())
    }

    /// Appends a monomial to the polynomial of `var`. Coefficients must be
    /// non-negative; zero-coefficient monomials are dropped.
    pub fn add_monomial(&mut self, var: &V, coeff: Rational, exponents: BTreeMap<V, u32>) {
        assert!(!coeff.is_negative(), "PPS coefficients must be non-negative");
        if coeff.is_zero() {
            return;
        }
        for v in exponents.keys() {
            assert!(
                self.pos.contains_key(v),
                "monomial variable {v} not in index set"
            );
        }
        let i = *self.pos.get(var).expect("unknown lhs variable");
        self.polys[i].push(Monomial { coeff, exponents });
    }

    pub fn max_degree(&self) -> u32 {
        self.polys
            .iter()
            .flatten()
            .map(|m| m.degree())
            .max()
            .unwrap_or(0)
    }

    pub fn is_linear(&self) -> bool {
        self.max_degree() <= 1
    }

    /// f(point), exact.
    pub fn eval(&self, point: &RatVec<V>) -> Result<RatVec<V>, PpsError> {
        check_indexed(&self.index, point)?;
        check_non_negative(point)?;
        let mut out = RatVec::new();
        for (var, poly) in self.index.iter().zip(&self.polys) {
            let mut acc = Rational::zero();
            for m in poly {
                let mut term = m.coeff.clone();
                for (v, &e) in &m.exponents {
                    let x = &point[v];
                    for _ in 0..e {
                        term *= x;
                    }
                }
                acc += term;
            }
            out.insert(var.clone(), acc);
        }
        Ok(out)
    }

    /// Jacobi matrix of all first partial derivatives evaluated at `point`.
    pub fn jacobian_at(&self, point: &RatVec<V>) -> Result<RatMat<V>, PpsError> {
        check_indexed(&self.index, point)?;
        check_non_negative(point)?;
        let mut mat = RatMat::new(self.index.clone());
        for (var, poly) in self.index.iter().zip(&self.polys) {
            for m in poly {
                for (dv, &e) in &m.exponents {
                    // d/d_dv of coeff * prod x_v^e_v
                    let mut term = &m.coeff * Rational::from_integer(e.into());
                    for (v, &ev) in &m.exponents {
                        let reps = if v == dv { ev - 1 } else { ev };
                        let x = &point[v];
                        for _ in 0..reps {
                            term *= x;
                        }
                    }
                    mat.add(var.clone(), dv.clone(), term);
                }
            }
        }
        Ok(mat)
    }

    /// Identifies the variables whose least-solution value is zero (the
    /// complement of the marking fixpoint) and returns the system restricted
    /// to the rest, with vanished monomials dropped.
    pub fn cleanup(&self) -> (Pps<V>, BTreeSet<V>) {
        let n = self.index.len();
        let mut marked = vec![false; n];
        loop {
            let mut changed = false;
            for i in 0..n {
                if marked[i] {
                    continue;
                }
                let reachable = self.polys[i].iter().any(|m| {
                    m.exponents
                        .keys()
                        .all(|v| marked[self.pos[v]])
                });
                if reachable {
                    marked[i] = true;
                    changed = true;
                }
            }
            if !changed {
                break;
            }
        }
        let zero_set: BTreeSet<V> = self
            .index
            .iter()
            .enumerate()
            .filter(|(i, _)| !marked[*i])
            .map(|(_, v)| v.clone())
            .collect();
        let kept: Vec<V> = self
            .index
            .iter()
            .filter(|v| !zero_set.contains(v))
            .cloned()
            .collect();
        let mut clean = Pps::new(kept);
        for (i, var) in self.index.iter().enumerate() {
            if zero_set.contains(var) {
                continue;
            }
            for m in &self.polys[i] {
                if m.exponents.keys().any(|v| zero_set.contains(v)) {
                    continue; // substituting 0 kills the monomial
                }
                clean.add_monomial(var, m.coeff.clone(), m.exponents.clone());
            }
        }
        (clean, zero_set)
    }

    /// Cleanup followed by iterated substitution of syntactically constant
    /// rows. The recorded constants are exact least-solution values.
    pub fn reduce(&self) -> Reduced<V> {
        let (mut current, zero_set) = self.cleanup();
        let mut constants: BTreeMap<V, Rational> = BTreeMap::new();
        loop {
            let mut newly_const: BTreeMap<V, Rational> = BTreeMap::new();
            for (var, poly) in current.index.iter().zip(&current.polys) {
                if poly.iter().all(|m| m.exponents.is_empty()) {
                    let c: Rational = poly.iter().map(|m| m.coeff.clone()).sum();
                    newly_const.insert(var.clone(), c);
                }
            }
            if newly_const.is_empty() {
                break;
            }
            let kept: Vec<V> = current
                .index
                .iter()
                .filter(|v| !newly_const.contains_key(v))
                .cloned()
                .collect();
            let mut next = Pps::new(kept);
            for (var, poly) in current.index.iter().zip(&current.polys) {
                if newly_const.contains_key(var) {
                    continue;
                }
                for m in poly {
                    let mut coeff = m.coeff.clone();
                    let mut exps = BTreeMap::new();
                    for (v, &e) in &m.exponents {
                        if let Some(c) = newly_const.get(v) {
                            for _ in 0..e {
                                coeff *= c;
                            }
                        } else {
                            exps.insert(v.clone(), e);
                        }
                    }
                    next.add_monomial(var, coeff, exps);
                }
            }
            constants.extend(newly_const);
            current = next;
        }
        Reduced {
            residual: current,
            zero_set,
            constants,
        }
    }

    /// Inductive check: accepted iff f(u) <= u componentwise
    /// (strict: < in every component). On rejection reports the first
    /// violated component in index order.
    pub fn check_inductive(&self, u: &RatVec<V>, strict: bool) -> Result<Verdict, PpsError> {
        let fu = self.eval(u)?;
        for var in &self.index {
            let lhs = &fu[var];
            let rhs = &u[var];
            let ok = if strict { lhs < rhs } else { lhs <= rhs };
            if !ok {
                let constraint = if strict { "f(u) < u" } else { "f(u) <= u" };
                return Ok(Verdict::rejected(
                    constraint,
                    var.to_string(),
                    lhs.clone(),
                    rhs.clone(),
                ));
            }
        }
        Ok(Verdict::accepted())
    }

    /// f(point) in hardware floats; advisory only.
    pub fn eval_f64(&self, point: &BTreeMap<V, f64>) -> Vec<f64> {
        self.index
            .iter()
            .zip(&self.polys)
            .map(|(_, poly)| {
                poly.iter()
                    .map(|m| {
                        let mut term = crate::rational::to_f64(&m.coeff);
                        for (v, &e) in &m.exponents {
                            term *= point[v].powi(e as i32);
                        }
                        term
                    })
                    .sum()
            })
            .collect()
    }

    /// Dense float Jacobian in index order; advisory only.
    pub fn jacobian_f64(&self, point: &BTreeMap<V, f64>) -> Vec<Vec<f64>> {
        let n = self.index.len();
        let mut mat = vec![vec![0.0; n]; n];
        for (i, poly) in self.polys.iter().enumerate() {
            for m in poly {
                for (dv, &e) in &m.exponents {
                    let mut term = crate::rational::to_f64(&m.coeff) * e as f64;
                    for (v, &ev) in &m.exponents {
                        let reps = if v == dv { ev - 1 } else { ev };
                        term *= point[v].powi(reps as i32);
                    }
                    mat[i][self.pos[dv]] += term;
                }
            }
        }
        mat
    }
}

/// Least non-negative solution of `x = A x + b` when it is finite.
///
/// Exact elimination on `(I - A) x = b`; a singular matrix or a negative
/// component in the unique solution signals an infinite component in the
/// least non-negative solution, reported as `Infeasible`. A `Finite` answer
/// is re-checked against `x = A x + b` before being returned.
pub fn solve_linear_least<V: VarId>(
    a: &RatMat<V>,
    b: &RatVec<V>,
) -> Result<LinearOutcome<V>, PpsError> {
    check_indexed(&a.index, b).map_err(|_| PpsError::DimensionMismatch)?;
    check_non_negative(b)?;
    let n = a.index.len();
    if n == 0 {
        return Ok(LinearOutcome::Finite(RatVec::new()));
    }
    // dense (I - A) | b
    let mut m = vec![vec![Rational::zero(); n + 1]; n];
    for i in 0..n {
        m[i][i] = Rational::one();
        m[i][n] = b[&a.index[i]].clone();
    }
    for ((r, c), v) in &a.entries {
        let (i, j) = (
            a.index.iter().position(|x| x == r).unwrap(),
            a.index.iter().position(|x| x == c).unwrap(),
        );
        m[i][j] -= v;
    }
    // forward elimination, pivot: first row with a nonzero entry in column order
    let mut pivot_row = vec![usize::MAX; n];
    let mut used = vec![false; n];
    for col in 0..n {
        let Some(p) = (0..n).find(|&r| !used[r] && !m[r][col].is_zero()) else {
            return Ok(LinearOutcome::Infeasible); // singular
        };
        used[p] = true;
        pivot_row[col] = p;
        let pivot = m[p][col].clone();
        for r in 0..n {
            if r == p || m[r][col].is_zero() {
                continue;
            }
            let factor = &m[r][col] / &pivot;
            for c in col..=n {
                let sub = &factor * &m[p][c];
                m[r][c] -= sub;
            }
        }
    }
    let mut x = RatVec::new();
    for col in 0..n {
        let p = pivot_row[col];
        let val = &m[p][n] / &m[p][col];
        if val.is_negative() {
            return Ok(LinearOutcome::Infeasible);
        }
        x.insert(a.index[col].clone(), val);
    }
    // exact re-check x = A x + b
    let ax = a.mul_vec(&x)?;
    for v in &a.index {
        if x[v] != &ax[v] + &b[v] {
            return Ok(LinearOutcome::Infeasible);
        }
    }
    Ok(LinearOutcome::Finite(x))
}
