//! Certificates: exact verification of upper, lower, expected-runtime and
//! conditional-runtime certificates, plus synthesis and the iterative
//! termination decision.

use std::collections::BTreeMap;

use num_traits::{One, Signed, Zero};
use thiserror::Error;

use crate::model::{PairIndex, Ppda, TriIndex};
use crate::pps::{
    solve_linear_least, LinearOutcome, Pps, PpsError, RatVec, Reduced, Verdict,
};
use crate::rational::{pow2_neg, Rational, RoundDir};
use crate::solver::{approx_lfp_f64, kleene_lower, rationalize, ApproxConfig, Method};
use crate::textio::{CertFile, CertKind};

/// Inductive upper bound on the return probabilities: `f(u) <= u`. With
/// `strict` the bound is additionally strict on the reduced subsystem, which
/// makes it usable as the upper half of a lower-bound certificate.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UpperCert {
    pub u: RatVec<TriIndex>,
    pub strict: bool,
}

/// Two-sided bound: `l <= f(l)`, `l <= u`, and `u` strictly inductive.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LowerCert {
    pub l: RatVec<TriIndex>,
    pub u: RatVec<TriIndex>,
}

/// Finite expected-runtime witness: `f(u) <= u` and `M(u) r + 1 <= r` with
/// `r >= 1`; acceptance bounds every expected runtime by `r`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PastCert {
    pub u: RatVec<TriIndex>,
    pub r: RatVec<PairIndex>,
}

/// Conditional-runtime witness: `f(u) <= u` and `f'(u) v` strictly below
/// `v > 0` on the cleaned subsystem, forcing the spectral radius below 1.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CpastCert {
    pub u: RatVec<TriIndex>,
    pub v: RatVec<TriIndex>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum AnyCert {
    Upper(UpperCert),
    Lower(LowerCert),
    Past(PastCert),
    Cpast(CpastCert),
}

impl AnyCert {
    pub fn kind(&self) -> CertKind {
        match self {
            AnyCert::Upper(_) => CertKind::Upper,
            AnyCert::Lower(_) => CertKind::Lower,
            AnyCert::Past(_) => CertKind::Past,
            AnyCert::Cpast(_) => CertKind::Cpast,
        }
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum CertError {
    #[error("certificate entry {0} does not match the model")]
    UnknownIndex(String),
    #[error("negative certificate value at {0}")]
    Negative(String),
    #[error(transparent)]
    Pps(#[from] PpsError),
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum SynthError {
    #[error("no exactly verifiable candidate found: {0}")]
    Exhausted(String),
    #[error("could not close the gap below the target within the iteration budget")]
    Gap,
}

/// Outcome of the iterative termination decision.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum DecideOutcome {
    Past(PastCert),
    /// Some configuration has total return probability certified below 1.
    NonAst { witness: UpperCert, pair: PairIndex },
    Unknown,
}

fn restrict<V: crate::pps::VarId>(vec: &RatVec<V>, index: &[V]) -> RatVec<V> {
    index.iter().map(|v| (v.clone(), vec[v].clone())).collect()
}

/// Non-strict inductive check on the full system, then the strict conditions:
/// removed variables pinned to 0 and strict inequality on the reduced system
/// with exact constants substituted.
fn check_upper(
    f: &Pps<TriIndex>,
    red: &Reduced<TriIndex>,
    u: &RatVec<TriIndex>,
    strict: bool,
) -> Result<Verdict, PpsError> {
    let full = f.check_inductive(u, false)?;
    if !full.is_accepted() || !strict {
        return Ok(full);
    }
    for var in f.index_set() {
        if red.zero_set.contains(var) && !u[var].is_zero() {
            return Ok(Verdict::rejected(
                "u = 0 on removed variable",
                var.to_string(),
                u[var].clone(),
                Rational::zero(),
            ));
        }
    }
    let u_res = restrict(u, red.residual.index_set());
    let strict_verdict = red.residual.check_inductive(&u_res, true)?;
    if !strict_verdict.is_accepted() {
        let mut v = strict_verdict;
        v.violations[0].constraint = "f(u) < u (reduced)".to_string();
        return Ok(v);
    }
    Ok(Verdict::accepted())
}

pub fn verify_upper(ppda: &Ppda, cert: &UpperCert) -> Result<Verdict, PpsError> {
    let f = ppda.fundamental_system();
    let red = f.reduce();
    check_upper(&f, &red, &cert.u, cert.strict)
}

pub fn verify_lower(ppda: &Ppda, cert: &LowerCert) -> Result<Verdict, PpsError> {
    let f = ppda.fundamental_system();
    let red = f.reduce();
    // l <= u
    for var in f.index_set() {
        if cert.l[var] > cert.u[var] {
            return Ok(Verdict::rejected(
                "l <= u",
                var.to_string(),
                cert.l[var].clone(),
                cert.u[var].clone(),
            ));
        }
    }
    // l <= f(l), and l = 0 wherever the least solution is 0
    let fl = f.eval(&cert.l)?;
    for var in f.index_set() {
        if cert.l[var] > fl[var] {
            return Ok(Verdict::rejected(
                "l <= f(l)",
                var.to_string(),
                cert.l[var].clone(),
                fl[var].clone(),
            ));
        }
    }
    for var in f.index_set() {
        if red.zero_set.contains(var) && !cert.l[var].is_zero() {
            return Ok(Verdict::rejected(
                "l = 0 on removed variable",
                var.to_string(),
                cert.l[var].clone(),
                Rational::zero(),
            ));
        }
    }
    check_upper(&f, &red, &cert.u, true)
}

pub fn verify_past(ppda: &Ppda, cert: &PastCert) -> Result<Verdict, PpsError> {
    let f = ppda.fundamental_system();
    let fu = f.check_inductive(&cert.u, false)?;
    if !fu.is_accepted() {
        return Ok(fu);
    }
    for pair in ppda.pair_index() {
        if cert.r[&pair] < Rational::one() {
            return Ok(Verdict::rejected(
                "r >= 1",
                pair.to_string(),
                cert.r[&pair].clone(),
                Rational::one(),
            ));
        }
    }
    let (m, ones) = ppda.runtime_system(&cert.u)?;
    let mut lhs = m.mul_vec(&cert.r)?;
    for pair in ppda.pair_index() {
        let total = lhs.remove(&pair).unwrap() + &ones[&pair];
        if total > cert.r[&pair] {
            return Ok(Verdict::rejected(
                "M(u)r + 1 <= r",
                pair.to_string(),
                total,
                cert.r[&pair].clone(),
            ));
        }
    }
    Ok(Verdict::accepted())
}

pub fn verify_cpast(ppda: &Ppda, cert: &CpastCert) -> Result<Verdict, PpsError> {
    let f = ppda.fundamental_system();
    let fu = f.check_inductive(&cert.u, false)?;
    if !fu.is_accepted() {
        return Ok(fu);
    }
    let (clean, _) = f.cleanup();
    for var in clean.index_set() {
        let value = cert.v.get(var).cloned().unwrap_or_else(Rational::zero);
        if value <= Rational::zero() {
            return Ok(Verdict::rejected(
                "v > 0 (clean)",
                var.to_string(),
                value,
                Rational::zero(),
            ));
        }
    }
    let u_clean = restrict(&cert.u, clean.index_set());
    let jac = clean.jacobian_at(&u_clean)?;
    let v_clean = restrict(&cert.v, clean.index_set());
    let jv = jac.mul_vec(&v_clean)?;
    for var in clean.index_set() {
        if jv[var] >= v_clean[var] {
            return Ok(Verdict::rejected(
                "f'(u)v < v (clean)",
                var.to_string(),
                jv[var].clone(),
                v_clean[var].clone(),
            ));
        }
    }
    Ok(Verdict::accepted())
}

pub fn verify_any(ppda: &Ppda, cert: &AnyCert) -> Result<Verdict, PpsError> {
    match cert {
        AnyCert::Upper(c) => verify_upper(ppda, c),
        AnyCert::Lower(c) => verify_lower(ppda, c),
        AnyCert::Past(c) => verify_past(ppda, c),
        AnyCert::Cpast(c) => verify_cpast(ppda, c),
    }
}

fn fill_tri(
    ppda: &Ppda,
    entries: &BTreeMap<TriIndex, Rational>,
) -> Result<RatVec<TriIndex>, CertError> {
    let index = ppda.tri_index();
    for (k, v) in entries {
        if !index.contains(k) {
            return Err(CertError::UnknownIndex(k.to_string()));
        }
        if v.is_negative() {
            return Err(CertError::Negative(k.to_string()));
        }
    }
    Ok(index
        .into_iter()
        .map(|k| {
            let v = entries.get(&k).cloned().unwrap_or_else(Rational::zero);
            (k, v)
        })
        .collect())
}

fn fill_pair(
    ppda: &Ppda,
    entries: &BTreeMap<PairIndex, Rational>,
) -> Result<RatVec<PairIndex>, CertError> {
    let index = ppda.pair_index();
    for (k, v) in entries {
        if !index.contains(k) {
            return Err(CertError::UnknownIndex(k.to_string()));
        }
        if v.is_negative() {
            return Err(CertError::Negative(k.to_string()));
        }
    }
    Ok(index
        .into_iter()
        .map(|k| {
            let v = entries.get(&k).cloned().unwrap_or_else(Rational::zero);
            (k, v)
        })
        .collect())
}

/// Materializes a parsed certificate file against a model, defaulting omitted
/// `u`/`l`/`v` entries to 0 and omitted `r` entries to 0 (which then fail the
/// `r >= 1` check with a precise report rather than erroring).
pub fn cert_from_file(ppda: &Ppda, file: &CertFile) -> Result<AnyCert, CertError> {
    let u = fill_tri(ppda, &file.u)?;
    Ok(match file.kind {
        CertKind::Upper => AnyCert::Upper(UpperCert {
            u,
            strict: file.strict,
        }),
        CertKind::Lower => AnyCert::Lower(LowerCert {
            l: fill_tri(ppda, &file.l)?,
            u,
        }),
        CertKind::Past => AnyCert::Past(PastCert {
            r: fill_pair(ppda, &file.r)?,
            u,
        }),
        CertKind::Cpast => AnyCert::Cpast(CpastCert {
            v: fill_tri(ppda, &file.v)?,
            u,
        }),
    })
}

pub fn cert_to_file(ppda: &Ppda, cert: &AnyCert) -> CertFile {
    let mut file = CertFile::new(cert.kind(), crate::textio::model_hash(ppda));
    let strip = |m: &RatVec<TriIndex>| -> BTreeMap<TriIndex, Rational> {
        m.iter()
            .filter(|(_, v)| !v.is_zero())
            .map(|(k, v)| (k.clone(), v.clone()))
            .collect()
    };
    match cert {
        AnyCert::Upper(c) => {
            file.u = strip(&c.u);
            file.strict = c.strict;
        }
        AnyCert::Lower(c) => {
            file.u = strip(&c.u);
            file.l = strip(&c.l);
        }
        AnyCert::Past(c) => {
            file.u = strip(&c.u);
            file.r = c.r.iter().map(|(k, v)| (k.clone(), v.clone())).collect();
        }
        AnyCert::Cpast(c) => {
            file.u = strip(&c.u);
            file.v = c
                .v
                .iter()
                .filter(|(_, v)| !v.is_zero())
                .map(|(k, v)| (k.clone(), v.clone()))
                .collect();
        }
    }
    file
}

/// Shared scaffolding for upper-bound synthesis: the reduced system, a float
/// approximation of its least solution, and candidate construction.
struct UpperSynth {
    f: Pps<TriIndex>,
    red: Reduced<TriIndex>,
    approx: Vec<f64>,
    /// Inflation direction, componentwise in (0, 1]. A uniform inflation
    /// cannot make copy-like rows (x = y with equal values) strictly
    /// inductive; the direction d with (I - f'(x*)) d = 1 can, because it
    /// grows along the dependency order.
    dir: RatVec<TriIndex>,
}

impl UpperSynth {
    fn new(ppda: &Ppda, method: Method) -> Self {
        let f = ppda.fundamental_system();
        let red = f.reduce();
        let cfg = ApproxConfig {
            method,
            max_iterations: if method == Method::Kleene { 100_000 } else { 500 },
            ..ApproxConfig::default()
        };
        let approx = approx_lfp_f64(&red.residual, &cfg);
        let dir = Self::direction(&red.residual, &approx);
        UpperSynth {
            f,
            red,
            approx,
            dir,
        }
    }

    fn direction(residual: &Pps<TriIndex>, approx: &[f64]) -> RatVec<TriIndex> {
        let n = approx.len();
        let ones: RatVec<TriIndex> =
            crate::pps::const_vec(residual.index_set(), &Rational::one());
        if n == 0 {
            return ones;
        }
        let point: std::collections::BTreeMap<TriIndex, f64> = residual
            .index_set()
            .iter()
            .cloned()
            .zip(approx.iter().copied())
            .collect();
        let jac = residual.jacobian_f64(&point);
        let mut a = vec![vec![0.0; n]; n];
        for (i, row) in jac.iter().enumerate() {
            for (j, entry) in row.iter().enumerate() {
                a[i][j] = if i == j { 1.0 } else { 0.0 } - entry;
            }
        }
        let Some(d) = crate::solver::solve_dense_f64(a, vec![1.0; n]) else {
            return ones;
        };
        let max = d.iter().fold(0.0_f64, |m, &x| m.max(x));
        if !max.is_finite() || d.iter().any(|&x| !(x > 1e-9)) {
            return ones;
        }
        residual
            .index_set()
            .iter()
            .zip(&d)
            .map(|(k, &x)| {
                let scaled = crate::rational::rationalize_f64(x / max, RoundDir::Up, 32)
                    .unwrap_or_else(|_| Rational::one());
                (k.clone(), scaled.min(Rational::one()))
            })
            .collect()
    }

    /// Note: candidates are deliberately not capped at 1. A residual row
    /// with least solution exactly 1 (such as x = 1/4 + 3/4 x) admits strict
    /// inductive points only above 1, which is sound — upper bounds need not
    /// be probabilities themselves.
    fn full_from_residual(&self, u_res: RatVec<TriIndex>) -> RatVec<TriIndex> {
        self.f
            .index_set()
            .iter()
            .map(|k| {
                let value = if self.red.zero_set.contains(k) {
                    Rational::zero()
                } else if let Some(c) = self.red.constants.get(k) {
                    c.clone()
                } else {
                    u_res[k].clone()
                };
                (k.clone(), value)
            })
            .collect()
    }

    /// Rounded-up approximation inflated by `delta` along the direction
    /// vector; the componentwise inflation stays within `delta` because the
    /// direction is normalized to at most 1.
    fn inflated(&self, delta: &Rational) -> Option<RatVec<TriIndex>> {
        let index = self.red.residual.index_set();
        let mut u_res = rationalize(index, &self.approx, RoundDir::Up, 64).ok()?;
        for (k, v) in u_res.iter_mut() {
            *v += delta * &self.dir[k];
        }
        Some(self.full_from_residual(u_res))
    }

    /// Coarse rounding of the approximation at few fractional bits; catches
    /// fixed points with short exact representations such as 1.
    fn coarse(&self, bits: u32) -> Option<RatVec<TriIndex>> {
        let index = self.red.residual.index_set();
        let u_res = rationalize(index, &self.approx, RoundDir::Up, bits).ok()?;
        Some(self.full_from_residual(u_res))
    }

    fn try_candidate(&self, u: RatVec<TriIndex>, strict: bool) -> Option<UpperCert> {
        let verdict = check_upper(&self.f, &self.red, &u, strict).ok()?;
        verdict.is_accepted().then_some(UpperCert { u, strict })
    }
}

/// Smallest admissible inflation exponent: the largest k with 2^-k <= eps/2,
/// at least 3, capped at 60.
fn delta_exponent(epsilon: &Rational) -> u32 {
    let half = epsilon / Rational::from_integer(2.into());
    let mut k = 3u32;
    while k < 60 && pow2_neg(k) > half {
        k += 1;
    }
    k
}

const COARSE_BITS: [u32; 11] = [64, 52, 40, 30, 20, 12, 8, 4, 2, 1, 0];

pub fn synth_upper(ppda: &Ppda, epsilon: &Rational, strict: bool) -> Result<UpperCert, SynthError> {
    synth_upper_with(ppda, epsilon, strict, Method::Newton)
}

/// As [`synth_upper`], with an explicit choice of the float approximation
/// engine seeding the candidates. Verification is exact either way.
pub fn synth_upper_with(
    ppda: &Ppda,
    epsilon: &Rational,
    strict: bool,
    method: Method,
) -> Result<UpperCert, SynthError> {
    let s = UpperSynth::new(ppda, method);
    let k0 = delta_exponent(epsilon);
    for k in k0..=60 {
        if let Some(u) = s.inflated(&pow2_neg(k)) {
            if let Some(cert) = s.try_candidate(u, strict) {
                return Ok(cert);
            }
        }
    }
    for bits in COARSE_BITS {
        if let Some(u) = s.coarse(bits) {
            if let Some(cert) = s.try_candidate(u, strict) {
                return Ok(cert);
            }
        }
    }
    Err(SynthError::Exhausted(format!(
        "no {}inductive point verified over the candidate schedule",
        if strict { "strictly " } else { "" }
    )))
}

pub fn synth_lower(ppda: &Ppda, epsilon: &Rational) -> Result<LowerCert, SynthError> {
    synth_lower_with(ppda, epsilon, Method::Newton)
}

/// As [`synth_lower`], with an explicit choice of the float approximation
/// engine seeding the upper-bound candidates.
pub fn synth_lower_with(
    ppda: &Ppda,
    epsilon: &Rational,
    method: Method,
) -> Result<LowerCert, SynthError> {
    let upper = synth_upper_with(ppda, epsilon, true, method)?;
    let f = ppda.fundamental_system();
    let red = f.reduce();
    let mut cfg = ApproxConfig {
        epsilon: epsilon / Rational::from_integer(8.into()),
        max_iterations: 2_000,
        ..ApproxConfig::default()
    };
    for _ in 0..6 {
        let l_res = kleene_lower(&red.residual, &cfg);
        let l: RatVec<TriIndex> = f
            .index_set()
            .iter()
            .map(|k| {
                let value = if red.zero_set.contains(k) {
                    Rational::zero()
                } else if let Some(c) = red.constants.get(k) {
                    c.clone()
                } else {
                    l_res[k].clone()
                };
                (k.clone(), value)
            })
            .collect();
        let gap_met = f
            .index_set()
            .iter()
            .all(|k| &upper.u[k] - &l[k] <= *epsilon);
        if gap_met {
            return Ok(LowerCert { l, u: upper.u });
        }
        cfg.epsilon /= Rational::from_integer(16.into());
        cfg.max_iterations *= 4;
    }
    Err(SynthError::Gap)
}

/// Builds a conditional-runtime certificate from a tight strict upper bound:
/// solving `(I - f'(u)) v = 1` on the cleaned system yields `v >= 1` with
/// `f'(u) v = v - 1` strictly below `v`.
pub fn synth_cpast(ppda: &Ppda, epsilon: &Rational) -> Result<CpastCert, SynthError> {
    let upper = synth_upper(ppda, epsilon, true)?;
    let f = ppda.fundamental_system();
    let (clean, _) = f.cleanup();
    let u_clean = restrict(&upper.u, clean.index_set());
    let jac = clean
        .jacobian_at(&u_clean)
        .expect("restriction matches the clean index set");
    let ones = crate::pps::const_vec(clean.index_set(), &Rational::one());
    match solve_linear_least(&jac, &ones).expect("square by construction") {
        LinearOutcome::Finite(v) => Ok(CpastCert { u: upper.u, v }),
        LinearOutcome::Infeasible => Err(SynthError::Exhausted(
            "spectral radius at the synthesized upper bound is not below 1".to_string(),
        )),
    }
}

/// Iterative decision: per round, first try to certify finite expected
/// runtimes from the current verified upper bound, then look for a
/// configuration whose certified total return probability is below 1,
/// otherwise tighten the bound. Gives up (Unknown) when the budget is spent
/// or the bound can no longer be tightened.
pub fn decide_past(ppda: &Ppda, max_iter: usize) -> DecideOutcome {
    let s = UpperSynth::new(ppda, Method::Newton);
    let mut prev: Option<RatVec<TriIndex>> = None;
    let mut k = 3u32;
    for _ in 0..max_iter {
        let mut found: Option<UpperCert> = None;
        if let Some(u) = s.inflated(&pow2_neg(k)) {
            found = s.try_candidate(u, false);
        }
        if found.is_none() {
            for bits in COARSE_BITS {
                if let Some(u) = s.coarse(bits) {
                    if let Some(c) = s.try_candidate(u, false) {
                        found = Some(c);
                        break;
                    }
                }
            }
        }
        let Some(upper) = found else {
            return DecideOutcome::Unknown;
        };
        // (a) exact runtime feasibility at the current bound
        let (m, ones) = ppda
            .runtime_system(&upper.u)
            .expect("index sets match by construction");
        if let LinearOutcome::Finite(r) =
            solve_linear_least(&m, &ones).expect("square by construction")
        {
            let cert = PastCert { u: upper.u.clone(), r };
            if verify_past(ppda, &cert).map(|v| v.is_accepted()).unwrap_or(false) {
                return DecideOutcome::Past(cert);
            }
        }
        // (b) a configuration with certified escape mass
        for pair in ppda.pair_index() {
            let total: Rational = ppda
                .states
                .iter()
                .map(|q| upper.u[&TriIndex::new(&pair.p, &pair.z, q)].clone())
                .sum();
            if total < Rational::one() {
                return DecideOutcome::NonAst {
                    witness: upper,
                    pair,
                };
            }
        }
        // (c) tighten; stop early when the bound is stuck at the schedule end
        if k == 60 && prev.as_ref() == Some(&upper.u) {
            return DecideOutcome::Unknown;
        }
        prev = Some(upper.u);
        k = (k + 1).min(60);
    }
    DecideOutcome::Unknown
}
