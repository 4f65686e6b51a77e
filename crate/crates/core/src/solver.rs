//! Approximation of least fixed points: exact Kleene iteration with safe
//! rounding, float Newton iteration, and rationalization of float points.

use std::collections::BTreeMap;

use crate::pps::{max_norm_diff, Pps, RatVec, VarId};
use crate::rational::{pow2_neg, rationalize_f64, Rational, RationalError, RoundDir};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Kleene,
    Newton,
}

#[derive(Debug, Clone)]
pub struct ApproxConfig {
    pub method: Method,
    /// Target residual / gap, exact.
    pub epsilon: Rational,
    pub max_iterations: usize,
    /// Denominator bit budget for safe rounding of Kleene iterates.
    pub round_bits: u32,
}

impl Default for ApproxConfig {
    fn default() -> Self {
        ApproxConfig {
            method: Method::Newton,
            epsilon: Rational::new(1.into(), 1_000_000_000.into()),
            max_iterations: 10_000,
            round_bits: 64,
        }
    }
}

/// Exact under-approximation of the least fixed point of a clean system.
///
/// Starting from 0, each step replaces the iterate by the componentwise
/// maximum of itself and the rounded-down value of one application of the
/// system. Rounding down keeps denominators at `round_bits` bits and
/// preserves both `l <= lfp` and the witness property `l <= f(l)`: from
/// `l_k <= f(l_k)` and `l_k <= l_{k+1} <= f(l_k)`, monotonicity gives
/// `l_{k+1} <= f(l_k) <= f(l_{k+1})`.
///
/// Stops when the exact residual `max |f(l) - l|` drops to `epsilon`, when a
/// step makes no progress, or at the iteration budget, returning the best
/// iterate so far.
pub fn kleene_lower<V: VarId>(pps: &Pps<V>, cfg: &ApproxConfig) -> RatVec<V> {
    let mut l = crate::pps::zero_vec(pps.index_set());
    if pps.is_empty() {
        return l;
    }
    for _ in 0..cfg.max_iterations {
        let fl = pps.eval(&l).expect("iterate stays on the index set");
        if max_norm_diff(&fl, &l) <= cfg.epsilon {
            break;
        }
        let mut next = l.clone();
        let mut progressed = false;
        for (k, value) in fl {
            let rounded = crate::rational::dyadic_floor(&value, cfg.round_bits);
            let slot = next.get_mut(&k).unwrap();
            if rounded > *slot {
                *slot = rounded;
                progressed = true;
            }
        }
        if !progressed {
            break;
        }
        l = next;
    }
    l
}

pub(crate) fn solve_dense_f64(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))
            .unwrap();
        if a[pivot][col].abs() < 1e-12 {
            return None;
        }
        a.swap(col, pivot);
        b.swap(col, pivot);
        for row in 0..n {
            if row == col {
                continue;
            }
            let factor = a[row][col] / a[col][col];
            if factor == 0.0 {
                continue;
            }
            for k in col..n {
                a[row][k] -= factor * a[col][k];
            }
            b[row] -= factor * b[col];
        }
    }
    Some((0..n).map(|i| b[i] / a[i][i]).collect())
}

fn residual_norm<V: VarId>(pps: &Pps<V>, x: &BTreeMap<V, f64>) -> f64 {
    let fx = pps.eval_f64(x);
    pps.index_set()
        .iter()
        .zip(fx)
        .map(|(v, fv)| (fv - x[v]).abs())
        .fold(0.0, f64::max)
}

/// Double-precision approximation of the least fixed point by damped Newton
/// steps from 0, with a plain application of the system as fallback when a
/// Newton step fails or does not improve the residual. Advisory only: the
/// result feeds candidate construction and is never part of a verdict.
pub fn newton_approx<V: VarId>(pps: &Pps<V>, cfg: &ApproxConfig) -> Vec<f64> {
    let index = pps.index_set().to_vec();
    let mut x: BTreeMap<V, f64> = index.iter().map(|v| (v.clone(), 0.0)).collect();
    let mut res = residual_norm(pps, &x);
    for _ in 0..cfg.max_iterations {
        if res < 1e-14 {
            break;
        }
        let fx = pps.eval_f64(&x);
        let jac = pps.jacobian_f64(&x);
        let n = index.len();
        let mut a = vec![vec![0.0; n]; n];
        let mut b = vec![0.0; n];
        for i in 0..n {
            for j in 0..n {
                a[i][j] = if i == j { 1.0 } else { 0.0 } - jac[i][j];
            }
            b[i] = fx[i] - x[&index[i]];
        }
        let mut accepted = false;
        if let Some(step) = solve_dense_f64(a, b) {
            let mut damping = 1.0;
            for _ in 0..40 {
                let candidate: BTreeMap<V, f64> = index
                    .iter()
                    .enumerate()
                    .map(|(i, v)| (v.clone(), (x[v] + damping * step[i]).max(0.0)))
                    .collect();
                let cres = residual_norm(pps, &candidate);
                if cres.is_finite() && cres < res {
                    x = candidate;
                    res = cres;
                    accepted = true;
                    break;
                }
                damping /= 2.0;
            }
        }
        if !accepted {
            // fall back to one plain iteration of the system
            let fx = pps.eval_f64(&x);
            let candidate: BTreeMap<V, f64> = index
                .iter()
                .enumerate()
                .map(|(i, v)| (v.clone(), fx[i].max(0.0)))
                .collect();
            let cres = residual_norm(pps, &candidate);
            if !cres.is_finite() || (cres >= res && candidate == x) {
                break;
            }
            x = candidate;
            res = cres;
        }
    }
    index.iter().map(|v| x[v]).collect()
}

/// Plain fixed-point iteration in floats, the float analogue of Kleene
/// iteration: linear convergence, but robust near singular points. Advisory
/// only, like [`newton_approx`].
pub fn iterate_approx_f64<V: VarId>(pps: &Pps<V>, cfg: &ApproxConfig) -> Vec<f64> {
    let index = pps.index_set().to_vec();
    let mut x: BTreeMap<V, f64> = index.iter().map(|v| (v.clone(), 0.0)).collect();
    for _ in 0..cfg.max_iterations {
        let fx = pps.eval_f64(&x);
        let mut delta = 0.0_f64;
        for (i, v) in index.iter().enumerate() {
            let next = fx[i].max(0.0);
            delta = delta.max((next - x[v]).abs());
            *x.get_mut(v).unwrap() = next;
        }
        if delta < 1e-15 {
            break;
        }
    }
    index.iter().map(|v| x[v]).collect()
}

/// Float approximation of the least fixed point using the method selected in
/// the configuration.
pub fn approx_lfp_f64<V: VarId>(pps: &Pps<V>, cfg: &ApproxConfig) -> Vec<f64> {
    match cfg.method {
        Method::Newton => newton_approx(pps, cfg),
        Method::Kleene => iterate_approx_f64(pps, cfg),
    }
}

/// Componentwise conversion of a float point into an exact rational vector
/// on the requested side, denominators capped at `2^round_bits`.
pub fn rationalize<V: VarId>(
    index: &[V],
    point: &[f64],
    dir: RoundDir,
    round_bits: u32,
) -> Result<RatVec<V>, RationalError> {
    assert_eq!(index.len(), point.len());
    index
        .iter()
        .zip(point)
        .map(|(v, &x)| Ok((v.clone(), rationalize_f64(x, dir, round_bits)?)))
        .collect()
}

/// Convenience: `epsilon = 2^-k` configs used by synthesis schedules.
pub fn config_with_epsilon(epsilon: Rational, max_iterations: usize) -> ApproxConfig {
    ApproxConfig {
        epsilon,
        max_iterations,
        ..ApproxConfig::default()
    }
}

pub fn pow2_eps(k: u32) -> Rational {
    pow2_neg(k)
}
