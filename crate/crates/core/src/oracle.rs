//! Independent ground-truth generators for testing: exact truncated
//! configuration exploration, seeded Monte Carlo simulation, and a float
//! spectral-radius estimate. Nothing here participates in verification.

use std::collections::{BTreeMap, HashMap};

use num_traits::{One, Zero};
use thiserror::Error;

use crate::model::{PairIndex, Ppda, Push};
use crate::pps::{RatMat, RatVec, VarId};
use crate::rational::Rational;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum OracleError {
    #[error("exploration exceeded the node limit of {0} configurations")]
    NodeLimit(usize),
    #[error("power iteration did not converge within the budget")]
    NoConvergence,
    #[error("unknown start configuration {0}")]
    UnknownStart(String),
}

#[derive(Debug, Clone)]
pub struct ExploreConfig {
    pub step_cap: usize,
    pub stack_cap: usize,
    /// Bound on simultaneously tracked configurations.
    pub node_limit: usize,
}

impl Default for ExploreConfig {
    fn default() -> Self {
        ExploreConfig {
            step_cap: 60,
            stack_cap: 30,
            node_limit: 2_000_000,
        }
    }
}

/// Exact lower bounds per target state: total probability of emptying the
/// stack there, and the corresponding length-weighted mass (first moment),
/// both restricted to paths within the caps.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExploreResult {
    pub prob_lb: RatVec<String>,
    pub moment_lb: RatVec<String>,
}

struct CompiledRule {
    dst: usize,
    push: Vec<usize>,
    weight: Rational,
    /// Cumulative-weight threshold scaled to 64 fractional bits; a draw `r`
    /// selects the first rule with `r < threshold`.
    threshold: u128,
}

struct Compiled {
    states: Vec<String>,
    /// Rules grouped by (state, symbol), declaration order preserved.
    rules: HashMap<(usize, usize), Vec<CompiledRule>>,
}

fn compile(ppda: &Ppda) -> Compiled {
    let state_id: HashMap<&str, usize> = ppda
        .states
        .iter()
        .enumerate()
        .map(|(i, s)| (s.as_str(), i))
        .collect();
    let sym_id: HashMap<&str, usize> = ppda
        .alphabet
        .iter()
        .enumerate()
        .map(|(i, s)| (s.as_str(), i))
        .collect();
    let mut rules: HashMap<(usize, usize), Vec<CompiledRule>> = HashMap::new();
    for t in &ppda.transitions {
        let key = (state_id[t.src.as_str()], sym_id[t.symbol.as_str()]);
        let push = match &t.push {
            Push::Empty => vec![],
            Push::One(a) => vec![sym_id[a.as_str()]],
            Push::Two(a, b) => vec![sym_id[a.as_str()], sym_id[b.as_str()]],
        };
        rules.entry(key).or_default().push(CompiledRule {
            dst: state_id[t.dst.as_str()],
            push,
            weight: t.weight.clone(),
            threshold: 0,
        });
    }
    let scale = Rational::from_integer(num_bigint::BigInt::from(1u8) << 64);
    for group in rules.values_mut() {
        let mut cum = Rational::zero();
        for rule in group.iter_mut() {
            cum += &rule.weight;
            let scaled = (&cum * &scale).floor();
            let (_, digits) = scaled.numer().to_u64_digits();
            rule.threshold = match digits.as_slice() {
                [] => 0,
                [lo] => *lo as u128,
                [lo, hi, ..] => ((*hi as u128) << 64) | *lo as u128,
            };
        }
    }
    Compiled {
        states: ppda.states.clone(),
        rules,
    }
}

fn start_ids(ppda: &Ppda, start: &PairIndex) -> Result<(usize, usize), OracleError> {
    let p = ppda
        .states
        .iter()
        .position(|s| *s == start.p)
        .ok_or_else(|| OracleError::UnknownStart(start.to_string()))?;
    let z = ppda
        .alphabet
        .iter()
        .position(|s| *s == start.z)
        .ok_or_else(|| OracleError::UnknownStart(start.to_string()))?;
    Ok((p, z))
}

/// Breadth-first exact exploration: all paths of at most `step_cap` steps
/// whose stack height never exceeds `stack_cap`. Mass beyond either cap is
/// dropped, so the results are lower bounds, nondecreasing in the caps.
pub fn truncated_explore(
    ppda: &Ppda,
    start: &PairIndex,
    cfg: &ExploreConfig,
) -> Result<ExploreResult, OracleError> {
    let compiled = compile(ppda);
    let (p0, z0) = start_ids(ppda, start)?;
    let mut prob_lb: RatVec<String> = crate::pps::zero_vec(&compiled.states);
    let mut moment_lb = prob_lb.clone();
    let mut frontier: HashMap<(usize, Vec<usize>), Rational> =
        HashMap::from([((p0, vec![z0]), Rational::one())]);
    for step in 1..=cfg.step_cap {
        if frontier.is_empty() {
            break;
        }
        let mut next: HashMap<(usize, Vec<usize>), Rational> = HashMap::new();
        for ((state, stack), mass) in frontier {
            let top = stack[0];
            let Some(group) = compiled.rules.get(&(state, top)) else {
                continue; // deadlock: mass never terminates
            };
            for rule in group {
                let new_mass = &mass * &rule.weight;
                let mut new_stack = rule.push.clone();
                new_stack.extend_from_slice(&stack[1..]);
                if new_stack.is_empty() {
                    let q = &compiled.states[rule.dst];
                    *prob_lb.get_mut(q).unwrap() += &new_mass;
                    *moment_lb.get_mut(q).unwrap() +=
                        new_mass * Rational::from_integer(step.into());
                } else if new_stack.len() <= cfg.stack_cap {
                    *next
                        .entry((rule.dst, new_stack))
                        .or_insert_with(Rational::zero) += new_mass;
                }
            }
            if next.len() > cfg.node_limit {
                return Err(OracleError::NodeLimit(cfg.node_limit));
            }
        }
        frontier = next;
    }
    Ok(ExploreResult { prob_lb, moment_lb })
}

/// Documented, seedable 64-bit generator (xorshift* variant): the state is
/// xorshifted by 12/25/27 and the output is the state times 0x2545F4914F6CDD1D.
/// A zero seed is replaced by a fixed nonzero constant.
pub struct XorShift64Star {
    state: u64,
}

impl XorShift64Star {
    pub fn new(seed: u64) -> Self {
        XorShift64Star {
            state: if seed == 0 { 0x9E37_79B9_7F4A_7C15 } else { seed },
        }
    }

    pub fn next_u64(&mut self) -> u64 {
        let mut x = self.state;
        x ^= x >> 12;
        x ^= x << 25;
        x ^= x >> 27;
        self.state = x;
        x.wrapping_mul(0x2545_F491_4F6C_DD1D)
    }
}

/// Aggregated simulation outcomes. Every run contributes its executed step
/// count; capped and deadlocked runs are flagged separately so estimates can
/// be read as lower bounds.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SimStats {
    pub seed: u64,
    pub runs: u64,
    pub step_cap: usize,
    /// Terminating runs per final state.
    pub hits: BTreeMap<String, u64>,
    pub cap_exceeded: u64,
    pub deadlocked: u64,
    pub sum_len: u64,
    pub sum_len_sq: u128,
}

impl SimStats {
    pub fn terminated(&self) -> u64 {
        self.hits.values().sum()
    }

    pub fn prob_estimate(&self, state: &str) -> f64 {
        self.hits.get(state).copied().unwrap_or(0) as f64 / self.runs as f64
    }

    pub fn prob_stderr(&self, state: &str) -> f64 {
        let p = self.prob_estimate(state);
        (p * (1.0 - p) / self.runs as f64).sqrt()
    }

    pub fn mean_len(&self) -> f64 {
        self.sum_len as f64 / self.runs as f64
    }

    pub fn len_stderr(&self) -> f64 {
        let n = self.runs as f64;
        let mean = self.mean_len();
        let var = (self.sum_len_sq as f64 / n - mean * mean).max(0.0);
        (var / n).sqrt()
    }
}

/// Runs independent simulations from `start`; bit-reproducible for a fixed
/// seed. Transition choice inverts the cumulative weights in declaration
/// order against a 64-bit draw.
pub fn simulate(
    ppda: &Ppda,
    start: &PairIndex,
    runs: u64,
    step_cap: usize,
    seed: u64,
) -> Result<SimStats, OracleError> {
    let compiled = compile(ppda);
    let (p0, z0) = start_ids(ppda, start)?;
    let mut rng = XorShift64Star::new(seed);
    let mut stats = SimStats {
        seed,
        runs,
        step_cap,
        hits: compiled.states.iter().map(|s| (s.clone(), 0)).collect(),
        cap_exceeded: 0,
        deadlocked: 0,
        sum_len: 0,
        sum_len_sq: 0,
    };
    let mut stack: Vec<usize> = Vec::with_capacity(64);
    for _ in 0..runs {
        let mut state = p0;
        stack.clear();
        stack.push(z0);
        let mut steps = 0usize;
        let outcome = loop {
            if stack.is_empty() {
                break Some(state);
            }
            if steps == step_cap {
                stats.cap_exceeded += 1;
                break None;
            }
            let top = stack.pop().unwrap();
            let Some(group) = compiled.rules.get(&(state, top)) else {
                stats.deadlocked += 1;
                break None;
            };
            let draw = rng.next_u64() as u128;
            let rule = group
                .iter()
                .find(|r| draw < r.threshold)
                .unwrap_or_else(|| group.last().unwrap());
            // the stack is kept top-last, so push in reverse rule order
            for &sym in rule.push.iter().rev() {
                stack.push(sym);
            }
            state = rule.dst;
            steps += 1;
        };
        if let Some(final_state) = outcome {
            *stats.hits.get_mut(&compiled.states[final_state]).unwrap() += 1;
        }
        stats.sum_len += steps as u64;
        stats.sum_len_sq += (steps as u128) * (steps as u128);
    }
    Ok(stats)
}

/// Power-iteration estimate of the spectral radius of a non-negative matrix,
/// advisory only. Stops once the iterate is an eigenvector up to a relative
/// residual of 1e-8.
pub fn spectral_radius_est<V: VarId>(m: &RatMat<V>) -> Result<f64, OracleError> {
    let index = m.index_set().to_vec();
    let n = index.len();
    if n == 0 {
        return Ok(0.0);
    }
    let dense: Vec<((usize, usize), f64)> = m
        .entries()
        .map(|((r, c), v)| {
            let i = index.iter().position(|x| x == r).unwrap();
            let j = index.iter().position(|x| x == c).unwrap();
            ((i, j), crate::rational::to_f64(v))
        })
        .collect();
    let mut x = vec![1.0 / n as f64; n];
    for _ in 0..100_000 {
        let mut y = vec![0.0; n];
        for ((i, j), v) in &dense {
            y[*i] += v * x[*j];
        }
        let lambda = y.iter().fold(0.0_f64, |a, &b| a.max(b.abs()));
        if lambda == 0.0 {
            return Ok(0.0);
        }
        let residual = x
            .iter()
            .zip(&y)
            .map(|(xi, yi)| (yi - lambda * xi).abs())
            .fold(0.0_f64, f64::max);
        for (xi, yi) in x.iter_mut().zip(&y) {
            *xi = yi / lambda;
        }
        if residual <= 1e-8 * lambda.max(1e-12) {
            return Ok(lambda);
        }
    }
    Err(OracleError::NoConvergence)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{gen_family, Family, Transition};
    use crate::rational::{rat, rat_int, to_f64};

    fn fig1() -> Ppda {
        gen_family(&Family::Fig1).unwrap()
    }

    fn pz() -> PairIndex {
        PairIndex::new("p", "Z")
    }

    fn cfg(step_cap: usize, stack_cap: usize) -> ExploreConfig {
        ExploreConfig {
            step_cap,
            stack_cap,
            ..ExploreConfig::default()
        }
    }

    #[test]
    fn explore_one_step() {
        let res = truncated_explore(&fig1(), &pz(), &cfg(1, 2)).unwrap();
        assert_eq!(res.prob_lb["p"], rat(1, 2));
        assert_eq!(res.prob_lb["q"], rat(1, 4));
        assert_eq!(res.moment_lb["p"], rat(1, 2));
        assert_eq!(res.moment_lb["q"], rat(1, 4));
    }

    #[test]
    fn explore_zero_steps() {
        let res = truncated_explore(&fig1(), &pz(), &cfg(0, 5)).unwrap();
        assert!(res.prob_lb.values().all(|v| v.is_zero()));
        assert!(res.moment_lb.values().all(|v| v.is_zero()));
    }

    #[test]
    fn explore_converges_to_closed_forms() {
        let res = truncated_explore(&fig1(), &pz(), &cfg(60, 30)).unwrap();
        let p = &res.prob_lb["p"];
        let q = &res.prob_lb["q"];
        // exact: p <= 2 - sqrt(2), q <= sqrt(2) - 1
        let gap = rat_int(2) - p;
        assert!(&gap * &gap >= rat_int(2));
        let plus = q + rat_int(1);
        assert!(&plus * &plus <= rat_int(2));
        assert!(to_f64(p) > 0.5857864376 - 1e-6);
        assert!(to_f64(q) > 0.4142135623 - 1e-6);
    }

    #[test]
    fn explore_monotone_in_caps() {
        let small = truncated_explore(&fig1(), &pz(), &cfg(10, 6)).unwrap();
        let large = truncated_explore(&fig1(), &pz(), &cfg(20, 12)).unwrap();
        for s in ["p", "q"] {
            assert!(small.prob_lb[s] <= large.prob_lb[s]);
            assert!(small.moment_lb[s] <= large.moment_lb[s]);
        }
    }

    #[test]
    fn explore_node_limit() {
        let cfg = ExploreConfig {
            step_cap: 40,
            stack_cap: 40,
            node_limit: 3,
        };
        let m = gen_family(&Family::DeltaA(rat(1, 2))).unwrap();
        assert_eq!(
            truncated_explore(&m, &pz(), &cfg),
            Err(OracleError::NodeLimit(3))
        );
    }

    #[test]
    fn simulate_reproducible_and_consistent() {
        let m = fig1();
        let a = simulate(&m, &pz(), 5_000, 1_000, 42).unwrap();
        let b = simulate(&m, &pz(), 5_000, 1_000, 42).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.terminated() + a.cap_exceeded + a.deadlocked, a.runs);
        let est = a.prob_estimate("q");
        let sigma = a.prob_stderr("q");
        assert!((est - 0.41421356).abs() < 4.0 * sigma + 0.01);
        let c = simulate(&m, &pz(), 5_000, 1_000, 43).unwrap();
        assert_ne!(a.hits, c.hits);
    }

    #[test]
    fn simulate_degenerate_single_step() {
        let m = Ppda {
            states: vec!["p".into()],
            alphabet: vec!["Z".into()],
            transitions: vec![Transition {
                src: "p".into(),
                symbol: "Z".into(),
                weight: rat_int(1),
                dst: "p".into(),
                push: crate::model::Push::Empty,
            }],
        };
        let stats = simulate(&m, &pz(), 1_000, 10, 7).unwrap();
        assert_eq!(stats.hits["p"], 1_000);
        assert_eq!(stats.sum_len, 1_000);
        assert_eq!(stats.sum_len_sq, 1_000);
        assert_eq!(stats.len_stderr(), 0.0);
    }

    #[test]
    fn simulate_runtime_estimate() {
        let m = gen_family(&Family::DeltaA(rat(3, 4))).unwrap();
        let stats = simulate(&m, &pz(), 20_000, 10_000, 12345).unwrap();
        let mean = stats.mean_len();
        let sigma = stats.len_stderr();
        assert!((mean - 2.0).abs() < 4.0 * sigma + 0.05);
    }

    #[test]
    fn spectral_radius_cases() {
        // row-stochastic 2x2
        let idx = vec!["a".to_string(), "b".to_string()];
        let mut m = RatMat::new(idx);
        m.add("a".into(), "a".into(), rat(3, 4));
        m.add("a".into(), "b".into(), rat(1, 4));
        m.add("b".into(), "a".into(), rat(1, 4));
        m.add("b".into(), "b".into(), rat(3, 4));
        assert!((spectral_radius_est(&m).unwrap() - 1.0).abs() < 1e-6);

        let mut single = RatMat::new(vec!["x".to_string()]);
        single.add("x".into(), "x".into(), rat(1, 2));
        assert!((spectral_radius_est(&single).unwrap() - 0.5).abs() < 1e-8);

        // lower-triangular: eigenvalues on the diagonal
        let idx = vec!["p".to_string(), "q".to_string()];
        let mut t = RatMat::new(idx);
        t.add("p".into(), "p".into(), rat(3, 10));
        t.add("q".into(), "p".into(), rat(1, 8));
        t.add("q".into(), "q".into(), rat(2, 5));
        assert!((spectral_radius_est(&t).unwrap() - 0.4).abs() < 1e-6);

        let zero = RatMat::<String>::new(vec!["z".to_string()]);
        assert_eq!(spectral_radius_est(&zero).unwrap(), 0.0);
    }
}
