//! Pushdown automaton model, the equation systems derived from it, the
//! single-state fast path, and generators for the built-in example families.

use std::collections::BTreeMap;
use std::fmt;

use num_traits::{One, Zero};
use thiserror::Error;

use crate::pps::{solve_linear_least, LinearOutcome, Pps, RatMat, RatVec};
use crate::rational::{rat, rat_int, Rational};

/// Return-probability variable `<p Z q>`: from state `p` with `Z` on top,
/// reach state `q` with the stack emptied.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct TriIndex {
    pub p: String,
    pub z: String,
    pub q: String,
}

impl TriIndex {
    pub fn new(p: &str, z: &str, q: &str) -> Self {
        TriIndex {
            p: p.to_string(),
            z: z.to_string(),
            q: q.to_string(),
        }
    }
}

impl fmt::Display for TriIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{} {} {}]", self.p, self.z, self.q)
    }
}

/// Configuration `p Z`: state `p` with `Z` on top of the stack.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct PairIndex {
    pub p: String,
    pub z: String,
}

impl PairIndex {
    pub fn new(p: &str, z: &str) -> Self {
        PairIndex {
            p: p.to_string(),
            z: z.to_string(),
        }
    }
}

impl fmt::Display for PairIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{} {}]", self.p, self.z)
    }
}

/// What a transition pushes after popping the matched top symbol.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Push {
    Empty,
    One(String),
    Two(String, String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Transition {
    pub src: String,
    pub symbol: String,
    pub weight: Rational,
    pub dst: String,
    pub push: Push,
}

/// Probabilistic pushdown automaton with rational weights. Index order of
/// states and alphabet is declaration order; every derived system iterates
/// in that order, so all outputs are deterministic.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Ppda {
    pub states: Vec<String>,
    pub alphabet: Vec<String>,
    pub transitions: Vec<Transition>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ValidationMode {
    /// Every (state, symbol) pair must have weights summing to exactly 1.
    Strict,
    /// Pairs without transitions are deadlocks; pairs with transitions must
    /// still sum to exactly 1.
    Lenient,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ModelError {
    #[error("duplicate name `{0}`")]
    DuplicateName(String),
    #[error("unknown state `{0}`")]
    UnknownState(String),
    #[error("unknown stack symbol `{0}`")]
    UnknownSymbol(String),
    #[error("non-positive weight {weight} on transition from ({p}, {z})")]
    NonPositiveWeight { p: String, z: String, weight: String },
    #[error("weights for ({p}, {z}) sum to {sum}, expected 1")]
    WeightSum { p: String, z: String, sum: String },
    #[error("operation requires a single-state automaton, this one has {0} states")]
    NotSingleState(usize),
    #[error("family parameter out of range: {0}")]
    BadParam(String),
}

/// Outcome of the exact single-state termination-time decision.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum PbpaOutcome {
    /// Finite expected runtimes, exact, one per stack symbol.
    Past(RatVec<String>),
    NotPast,
}

fn merged_exponents(a: &TriIndex, b: &TriIndex) -> BTreeMap<TriIndex, u32> {
    let mut m = BTreeMap::new();
    *m.entry(a.clone()).or_insert(0) += 1;
    *m.entry(b.clone()).or_insert(0) += 1;
    m
}

impl Ppda {
    /// Full triple index set in declaration order: p outer, Z middle, q inner.
    pub fn tri_index(&self) -> Vec<TriIndex> {
        let mut out = Vec::with_capacity(self.states.len().pow(2) * self.alphabet.len());
        for p in &self.states {
            for z in &self.alphabet {
                for q in &self.states {
                    out.push(TriIndex::new(p, z, q));
                }
            }
        }
        out
    }

    /// Full configuration index set in declaration order.
    pub fn pair_index(&self) -> Vec<PairIndex> {
        let mut out = Vec::with_capacity(self.states.len() * self.alphabet.len());
        for p in &self.states {
            for z in &self.alphabet {
                out.push(PairIndex::new(p, z));
            }
        }
        out
    }

    /// Structural and probabilistic validation. Returns the deadlocked pairs
    /// (no transitions) so callers can warn about them; in strict mode any
    /// deadlocked pair is a weight-sum violation (sum 0 instead of 1).
    pub fn validate(&self, mode: ValidationMode) -> Result<Vec<PairIndex>, ModelError> {
        for list in [&self.states, &self.alphabet] {
            for (i, name) in list.iter().enumerate() {
                if list[..i].contains(name) {
                    return Err(ModelError::DuplicateName(name.clone()));
                }
            }
        }
        for t in &self.transitions {
            for s in [&t.src, &t.dst] {
                if !self.states.contains(s) {
                    return Err(ModelError::UnknownState(s.clone()));
                }
            }
            let mut symbols = vec![&t.symbol];
            match &t.push {
                Push::Empty => {}
                Push::One(a) => symbols.push(a),
                Push::Two(a, b) => {
                    symbols.push(a);
                    symbols.push(b);
                }
            }
            for z in symbols {
                if !self.alphabet.contains(z) {
                    return Err(ModelError::UnknownSymbol(z.clone()));
                }
            }
            if t.weight <= Rational::zero() {
                return Err(ModelError::NonPositiveWeight {
                    p: t.src.clone(),
                    z: t.symbol.clone(),
                    weight: crate::rational::format_exact(&t.weight),
                });
            }
        }
        let mut deadlocked = Vec::new();
        for pair in self.pair_index() {
            let sum: Rational = self
                .transitions
                .iter()
                .filter(|t| t.src == pair.p && t.symbol == pair.z)
                .map(|t| t.weight.clone())
                .sum();
            if sum.is_zero() {
                deadlocked.push(pair);
            } else if !sum.is_one() {
                return Err(ModelError::WeightSum {
                    p: pair.p,
                    z: pair.z,
                    sum: crate::rational::format_exact(&sum),
                });
            }
        }
        if mode == ValidationMode::Strict {
            if let Some(pair) = deadlocked.first() {
                return Err(ModelError::WeightSum {
                    p: pair.p.clone(),
                    z: pair.z.clone(),
                    sum: "0/1".to_string(),
                });
            }
        }
        Ok(deadlocked)
    }

    /// Quadratic system whose least solution is the return probabilities:
    /// a pop rule contributes its weight as a constant, a one-push rule a
    /// linear term, a two-push rule the sum over intermediate states of a
    /// product of two variables.
    pub fn fundamental_system(&self) -> Pps<TriIndex> {
        let mut pps = Pps::new(self.tri_index());
        for t in &self.transitions {
            for q in &self.states {
                let var = TriIndex::new(&t.src, &t.symbol, q);
                match &t.push {
                    Push::Empty => {
                        if &t.dst == q {
                            pps.add_monomial(&var, t.weight.clone(), BTreeMap::new());
                        }
                    }
                    Push::One(y) => {
                        let inner = TriIndex::new(&t.dst, y, q);
                        pps.add_monomial(&var, t.weight.clone(), BTreeMap::from([(inner, 1)]));
                    }
                    Push::Two(y, x) => {
                        for s in &self.states {
                            let first = TriIndex::new(&t.dst, y, s);
                            let second = TriIndex::new(s, x, q);
                            pps.add_monomial(
                                &var,
                                t.weight.clone(),
                                merged_exponents(&first, &second),
                            );
                        }
                    }
                }
            }
        }
        pps
    }

    /// Linear system `x = A x + b` whose least solution is the first
    /// termination moments, built as the fundamental system's Jacobi matrix
    /// at `probs` with constant vector `probs`.
    pub fn moments_system(
        &self,
        probs: &RatVec<TriIndex>,
    ) -> Result<(RatMat<TriIndex>, RatVec<TriIndex>), crate::pps::PpsError> {
        let f = self.fundamental_system();
        let a = f.jacobian_at(probs)?;
        Ok((a, probs.clone()))
    }

    /// Same moments system read off the transitions directly: a one-push rule
    /// contributes its weight, a two-push rule weight times the probability of
    /// the complementary factor. Equality with [`Ppda::moments_system`] is a
    /// tested property.
    pub fn moments_system_direct(
        &self,
        probs: &RatVec<TriIndex>,
    ) -> Result<(RatMat<TriIndex>, RatVec<TriIndex>), crate::pps::PpsError> {
        let index = self.tri_index();
        if probs.len() != index.len() || index.iter().any(|v| !probs.contains_key(v)) {
            return Err(crate::pps::PpsError::IndexMismatch(String::new()));
        }
        let mut a = RatMat::new(index);
        for t in &self.transitions {
            for q in &self.states {
                let row = TriIndex::new(&t.src, &t.symbol, q);
                match &t.push {
                    Push::Empty => {}
                    Push::One(y) => {
                        a.add(row.clone(), TriIndex::new(&t.dst, y, q), t.weight.clone());
                    }
                    Push::Two(y, x) => {
                        for s in &self.states {
                            let first = TriIndex::new(&t.dst, y, s);
                            let second = TriIndex::new(s, x, q);
                            a.add(row.clone(), first.clone(), &t.weight * &probs[&second]);
                            a.add(row.clone(), second, &t.weight * &probs[&first]);
                        }
                    }
                }
            }
        }
        Ok((a, probs.clone()))
    }

    /// Linear system `r = M r + 1` over configurations whose least solution
    /// bounds (at exact `u`: equals) the expected runtimes. A one-push rule
    /// adds its weight to the column of the pushed configuration; a two-push
    /// rule additionally charges the lower symbol weighted by the return
    /// probability bound through each intermediate state.
    pub fn runtime_system(
        &self,
        u: &RatVec<TriIndex>,
    ) -> Result<(RatMat<PairIndex>, RatVec<PairIndex>), crate::pps::PpsError> {
        let tri = self.tri_index();
        if u.len() != tri.len() || tri.iter().any(|v| !u.contains_key(v)) {
            return Err(crate::pps::PpsError::IndexMismatch(String::new()));
        }
        let mut m = RatMat::new(self.pair_index());
        for t in &self.transitions {
            let row = PairIndex::new(&t.src, &t.symbol);
            match &t.push {
                Push::Empty => {}
                Push::One(y) => {
                    m.add(row.clone(), PairIndex::new(&t.dst, y), t.weight.clone());
                }
                Push::Two(y, x) => {
                    m.add(row.clone(), PairIndex::new(&t.dst, y), t.weight.clone());
                    for s in &self.states {
                        let through = TriIndex::new(&t.dst, y, s);
                        m.add(row.clone(), PairIndex::new(s, x), &t.weight * &u[&through]);
                    }
                }
            }
        }
        let ones = crate::pps::const_vec(&self.pair_index(), &Rational::one());
        Ok((m, ones))
    }

    /// Exact polynomial-time termination-time decision for single-state
    /// automata: solve `(I - f'(1)) r = 1`; finite iff a unique solution
    /// with every component at least 1 exists, and then `r` is exact.
    pub fn pbpa_past_decide(&self) -> Result<PbpaOutcome, ModelError> {
        if self.states.len() != 1 {
            return Err(ModelError::NotSingleState(self.states.len()));
        }
        let f = self.fundamental_system();
        let ones = crate::pps::const_vec(&self.tri_index(), &Rational::one());
        let a = f
            .jacobian_at(&ones)
            .expect("index sets match by construction");
        match solve_linear_least(&a, &ones).expect("dimensions match by construction") {
            LinearOutcome::Finite(r) if r.values().all(|v| *v >= Rational::one()) => {
                let by_symbol = r
                    .into_iter()
                    .map(|(tri, v)| (tri.z, v))
                    .collect::<RatVec<String>>();
                Ok(PbpaOutcome::Past(by_symbol))
            }
            _ => Ok(PbpaOutcome::NotPast),
        }
    }
}

/// Built-in example families.
#[derive(Debug, Clone, PartialEq)]
pub enum Family {
    /// Two states, one stack symbol, an algebraic-irrational least solution.
    Fig1,
    /// Single state, single symbol: pop with probability `a`, duplicate with `1-a`.
    DeltaA(Rational),
    /// Repeated-squaring family: minimal positive return probability 2^(-2^n).
    Fig4(u32),
    /// Biased-coin-squaring family: bounded return probabilities, runtime 2^(2^n).
    Fig5(u32),
}

fn tr(src: &str, symbol: &str, weight: Rational, dst: &str, push: Push) -> Transition {
    Transition {
        src: src.to_string(),
        symbol: symbol.to_string(),
        weight,
        dst: dst.to_string(),
        push,
    }
}

fn two(a: &str, b: &str) -> Push {
    Push::Two(a.to_string(), b.to_string())
}

pub fn gen_family(family: &Family) -> Result<Ppda, ModelError> {
    match family {
        Family::Fig1 => Ok(Ppda {
            states: vec!["p".into(), "q".into()],
            alphabet: vec!["Z".into()],
            transitions: vec![
                tr("p", "Z", rat(1, 2), "p", Push::Empty),
                tr("p", "Z", rat(1, 4), "p", two("Z", "Z")),
                tr("p", "Z", rat(1, 4), "q", Push::Empty),
                tr("q", "Z", rat_int(1), "q", Push::Empty),
            ],
        }),
        Family::DeltaA(a) => {
            if *a <= Rational::zero() || *a >= Rational::one() {
                return Err(ModelError::BadParam(format!(
                    "probability must be strictly between 0 and 1, got {}",
                    crate::rational::format_exact(a)
                )));
            }
            Ok(Ppda {
                states: vec!["p".into()],
                alphabet: vec!["Z".into()],
                transitions: vec![
                    tr("p", "Z", a.clone(), "p", Push::Empty),
                    tr("p", "Z", Rational::one() - a, "p", two("Z", "Z")),
                ],
            })
        }
        Family::Fig4(n) => {
            let n = check_n(*n)?;
            let mut alphabet = vec!["bot".to_string()];
            alphabet.extend((1..=n).map(|i| format!("Z{i}")));
            alphabet.push("X".to_string());
            let zn = format!("Z{n}");
            let mut transitions = vec![tr("p", "bot", rat_int(1), "q", two("Z1", "bot"))];
            transitions.push(tr("p", "X", rat_int(1), "p", Push::Empty));
            for i in 2..=n {
                transitions.push(tr("p", &format!("Z{i}"), rat_int(1), "p", Push::Empty));
            }
            for i in 2..=n {
                let lower = format!("Z{}", i - 1);
                let higher = format!("Z{i}");
                transitions.push(tr("q", &lower, rat_int(1), "q", two(&higher, &higher)));
            }
            transitions.push(tr("q", &zn, rat_int(1), "q", two("X", "X")));
            transitions.push(tr("q", "X", rat(1, 2), "q", Push::Empty));
            transitions.push(tr("q", "X", rat(1, 2), "p", Push::Empty));
            transitions.push(tr("q", "bot", rat_int(1), "r", Push::Empty));
            Ok(Ppda {
                states: vec!["p".into(), "q".into(), "r".into()],
                alphabet,
                transitions,
            })
        }
        Family::Fig5(n) => {
            let n = check_n(*n)?;
            let mut alphabet = vec!["Y".to_string()];
            alphabet.extend((1..=n).map(|i| format!("Z{i}")));
            alphabet.push("X".to_string());
            let zn = format!("Z{n}");
            let mut transitions = vec![tr("p", "Y", rat_int(1), "s", two("Z1", "Y"))];
            for state in ["s", "r"] {
                let other = if state == "s" { "r" } else { "s" };
                for i in 2..=n {
                    let lower = format!("Z{}", i - 1);
                    let higher = format!("Z{i}");
                    transitions.push(tr(state, &lower, rat_int(1), state, two(&higher, &higher)));
                }
                transitions.push(tr(state, &zn, rat_int(1), state, two("X", "X")));
                transitions.push(tr(state, "X", rat(3, 4), state, Push::Empty));
                transitions.push(tr(state, "X", rat(1, 4), other, Push::Empty));
            }
            transitions.push(tr("s", "Y", rat_int(1), "p", Push::Empty));
            transitions.push(tr("r", "Y", rat_int(1), "p", two("Y", "Y")));
            Ok(Ppda {
                states: vec!["p".into(), "s".into(), "r".into()],
                alphabet,
                transitions,
            })
        }
    }
}

fn check_n(n: u32) -> Result<u32, ModelError> {
    if n >= 1 {
        Ok(n)
    } else {
        Err(ModelError::BadParam("n must be at least 1".to_string()))
    }
}
