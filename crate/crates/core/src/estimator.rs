//! Skewness-based mass estimates.
//!
//! In a net of `n` binary variables whose every row puts (n-1)/n on its modal
//! value, the full-joint terms binding exactly `i` variables to non-modal
//! values each weigh ((n-1)/n)^(n-i) (1/n)^i. The `m` largest terms therefore
//! cover at least the Binomial(n, 1/n) mass up to the largest deviation count
//! `Q` whose term population fits in `m`.

use serde::Serialize;
use statrs::distribution::{Binomial, ContinuousCDF, DiscreteCDF, Normal};
use statrs::function::beta::beta_reg;
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};

/// Largest `n` accepted by the integer-valued functions.
pub const MAX_N: u32 = 120;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MassEstimate {
    pub n: f64,
    pub m: f64,
    pub q: u32,
    pub lower_bound_mass: f64,
}

fn binom(n: u32, k: u32) -> u128 {
    let mut c: u128 = 1;
    for i in 0..k {
        c = c * (n - i) as u128 / (i + 1) as u128;
    }
    c
}

/// Largest `Q` with `sum_{i<=Q} C(n, i) <= m`.
pub fn deviation_count(n: u32, m: u128) -> Result<u32> {
    if n == 0 || n > MAX_N {
        return Err(Error::OutOfRange(format!("n = {n}")));
    }
    if m == 0 || m > 1u128 << n {
        return Err(Error::OutOfRange(format!("m = {m} for n = {n}")));
    }
    let mut total: u128 = 0;
    let mut q = 0;
    for i in 0..=n {
        total += binom(n, i);
        if total > m {
            break;
        }
        q = i;
    }
    Ok(q)
}

/// Guaranteed mass of the `m` largest joint terms of an `n`-variable binary
/// net skewed at exactly (n-1)/n.
pub fn mass_lower_bound(n: u32, m: u128) -> Result<f64> {
    Ok(estimate(n, m)?.lower_bound_mass)
}

pub fn estimate(n: u32, m: u128) -> Result<MassEstimate> {
    let q = deviation_count(n, m)?;
    let dist = Binomial::new(1.0 / n as f64, n as u64).map_err(|e| Error::OutOfRange(e.to_string()))?;
    Ok(MassEstimate {
        n: n as f64,
        m: m as f64,
        q,
        lower_bound_mass: dist.cdf(q as u64),
    })
}

/// Solves `Q + 2 log_n(Q - 1) = log_n m` for `Q` in `(1, n]` by bisection.
pub fn q_approx(n: f64, m: f64) -> Result<f64> {
    if !(n >= 2.0 && m >= 2.0) {
        return Err(Error::OutOfRange(format!("n = {n}, m = {m}")));
    }
    let target = m.ln() / n.ln();
    let f = |q: f64| q + 2.0 * (q - 1.0).ln() / n.ln() - target;
    let (mut lo, mut hi) = (1.0 + 1e-12, n);
    if f(hi) < 0.0 {
        return Err(Error::OutOfRange(format!(
            "log_n m = {target} exceeds the range of Q for n = {n}"
        )));
    }
    if f(lo) > 0.0 {
        return Err(Error::OutOfRange(format!("no root above 1 for n = {n}, m = {m}")));
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        let v = f(mid);
        if v.abs() <= 1e-12 {
            return Ok(mid);
        }
        if v < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Normal approximation of the binomial coverage, with the half-unit
/// continuity correction.
pub fn normal_mass_approx(n: f64, q: f64) -> Result<f64> {
    if !(n >= 2.0) || q < 0.0 {
        return Err(Error::OutOfRange(format!("n = {n}, Q = {q}")));
    }
    let sd = ((n - 1.0) / n).sqrt();
    let normal = Normal::new(1.0, sd).map_err(|e| Error::OutOfRange(e.to_string()))?;
    Ok(normal.cdf(q + 0.5))
}

fn ln_choose(n: f64, k: f64) -> f64 {
    ln_gamma(n + 1.0) - ln_gamma(k + 1.0) - ln_gamma(n - k + 1.0)
}

/// Coverage of the `m` largest terms with `n` relaxed to a real number:
/// binomial coefficients through the gamma function and the binomial
/// cumulative through the regularized incomplete beta.
pub fn coverage(n: f64, m: f64) -> f64 {
    if m < 1.0 {
        return 0.0;
    }
    let mut total = 0.0;
    let mut q: Option<u32> = None;
    let mut i = 0u32;
    while (i as f64) <= n.floor() {
        total += ln_choose(n, i as f64).exp();
        if total > m * (1.0 + 1e-12) {
            break;
        }
        q = Some(i);
        i += 1;
    }
    let Some(q) = q else { return 0.0 };
    let qf = q as f64;
    if qf + 1.0 > n {
        return 1.0;
    }
    beta_reg(n - qf, qf + 1.0, 1.0 - 1.0 / n)
}

/// Least-squares effective `n` for observed `(m, cumulative mass)` points.
pub fn fit_effective_n(points: &[(f64, f64)]) -> Result<f64> {
    if points.len() < 2 {
        return Err(Error::Degenerate("need at least two points".into()));
    }
    for w in points.windows(2) {
        if w[1].0 < w[0].0 || w[1].1 < w[0].1 - 1e-12 {
            return Err(Error::Degenerate("points must be nondecreasing".into()));
        }
    }
    if points.iter().any(|p| !(0.0..=1.0 + 1e-9).contains(&p.1) || p.0 < 1.0) {
        return Err(Error::Degenerate("masses must lie in [0, 1] and m >= 1".into()));
    }
    let first = points[0].1;
    if points.iter().all(|p| (p.1 - first).abs() < 1e-15) {
        return Err(Error::Degenerate("all masses are equal".into()));
    }
    let sse = |n: f64| -> f64 { points.iter().map(|&(m, y)| (coverage(n, m) - y).powi(2)).sum() };
    // coverage is a step function of n, so scan before refining
    let (lo, hi, step) = (1.05, 200.0, 0.01);
    let mut best = (f64::INFINITY, lo);
    let mut n = lo;
    while n <= hi {
        let e = sse(n);
        if e < best.0 - 1e-15 {
            best = (e, n);
        }
        n += step;
    }
    let (mut a, mut b) = ((best.1 - step).max(lo), (best.1 + step).min(hi));
    for _ in 0..60 {
        let c = a + (b - a) / 3.0;
        let d = b - (b - a) / 3.0;
        if sse(c) <= sse(d) {
            b = d;
        } else {
            a = c;
        }
    }
    let refined = 0.5 * (a + b);
    Ok(if sse(refined) <= best.0 { refined } else { best.1 })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RemainingMass {
    /// Sound bound: the larger of the trivial and fitted values.
    pub bound: f64,
    /// `1 - accounted`, or zero when the stream is exhausted.
    pub trivial: f64,
    /// Model-based remainder; advisory only.
    pub fitted: Option<f64>,
    pub n_eff: Option<f64>,
}

/// Remaining mass given `(m, accounted mass)` observations.
pub fn remaining_mass_bound(observations: &[(f64, f64)], accounted: f64, exhausted: bool) -> RemainingMass {
    if exhausted || accounted >= 1.0 - 1e-12 {
        return RemainingMass {
            bound: 0.0,
            trivial: 0.0,
            fitted: None,
            n_eff: None,
        };
    }
    let trivial = (1.0 - accounted).max(0.0);
    let usable: Vec<(f64, f64)> = observations.iter().copied().filter(|p| p.0 >= 1.0).collect();
    let (fitted, n_eff) = match fit_effective_n(&usable) {
        Ok(n) => {
            let slack = usable
                .iter()
                .map(|&(m, y)| (coverage(n, m) - y).max(0.0))
                .fold(0.0, f64::max);
            let m = usable.last().map_or(1.0, |p| p.0);
            ((1.0 - coverage(n, m) + slack).clamp(0.0, 1.0), Some(n))
        }
        Err(_) => (f64::NAN, None),
    };
    let fitted = n_eff.map(|_| fitted);
    RemainingMass {
        bound: fitted.map_or(trivial, |f| f.max(trivial)),
        trivial,
        fitted,
        n_eff,
    }
}
