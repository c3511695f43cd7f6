//! Exact law of the linear statistic `X1/n1 - ((1 - pi0) X2/n2 + pi0 X3/n3)`.
//!
//! The cdf is a truncated convolution: `X2` and `X3` are restricted to windows
//! that hold all but a certified sliver of their mass, and for each retained
//! pair the `X1` cdf is read off at the largest count that keeps the
//! statistic at or below the threshold.

use serde::{Deserialize, Serialize};

use crate::binomial::BinomialWindow;
use crate::model::{SampleSizes, SurveyCounts};

/// The statistic evaluated on counts. Every comparison against a threshold goes
/// through this one expression, so it is exactly monotone in each count.
#[inline]
pub(crate) fn linear_offset(x2: u64, x3: u64, n: [f64; 3], pi0: f64) -> f64 {
    (1.0 - pi0) * (x2 as f64 / n[1]) + pi0 * (x3 as f64 / n[2])
}

#[inline]
pub(crate) fn linear_value(x1: u64, n1: f64, offset: f64) -> f64 {
    x1 as f64 / n1 - offset
}

/// Observed value of the exact-method statistic.
pub fn linear_statistic(x: &SurveyCounts, pi0: f64) -> f64 {
    let n = x.sizes().as_f64();
    linear_value(x.get(0), n[0], linear_offset(x.get(1), x.get(2), n, pi0))
}

/// Largest `k` in `-1..=n1` with `value(k) <= t` (or `< t` when `strict`).
fn threshold(t: f64, offset: f64, n1: u64, strict: bool) -> i64 {
    let n1f = n1 as f64;
    let ok = |k: i64| {
        let v = linear_value(k as u64, n1f, offset);
        if strict {
            v < t
        } else {
            v <= t
        }
    };
    let guess = ((t + offset) * n1f).floor();
    let mut k = if guess.is_nan() { -1 } else { guess.clamp(-1.0, n1f) as i64 };
    while k < n1 as i64 && ok(k + 1) {
        k += 1;
    }
    while k >= 0 && !ok(k) {
        k -= 1;
    }
    k
}

/// Window of `X1` with running sums for cdf lookups.
struct CdfTable {
    lo: u64,
    cum: Vec<f64>,
}

impl CdfTable {
    fn new(w: &BinomialWindow) -> Self {
        let mut acc = 0.0;
        let cum = w
            .pmf
            .iter()
            .map(|&m| {
                acc += m;
                acc
            })
            .collect();
        CdfTable { lo: w.lo, cum }
    }

    /// Retained mass at or below `k`; never exceeds the true cdf.
    fn at(&self, k: i64) -> f64 {
        if k < self.lo as i64 {
            return 0.0;
        }
        let idx = ((k - self.lo as i64) as usize).min(self.cum.len() - 1);
        self.cum[idx]
    }
}

/// Certified bounds `(lo, hi)` on `P_p{T <= t}` (`P_p{T < t}` when `strict`), with `hi - lo <= eps`.
pub fn exact_statistic_cdf(p: [f64; 3], sizes: SampleSizes, pi0: f64, t: f64, strict: bool, eps: f64) -> (f64, f64) {
    let s = truncated_cdf(p, sizes, pi0, t, strict, eps);
    (s, (s + eps).min(1.0))
}

/// The lower bound alone: retained mass of the event.
pub(crate) fn truncated_cdf(p: [f64; 3], sizes: SampleSizes, pi0: f64, t: f64, strict: bool, eps: f64) -> f64 {
    let nn = sizes.as_array();
    let n = sizes.as_f64();
    let third = eps / 3.0;
    let w1 = BinomialWindow::new(nn[0], p[0].clamp(0.0, 1.0), third);
    let w2 = BinomialWindow::new(nn[1], p[1].clamp(0.0, 1.0), third);
    let w3 = BinomialWindow::new(nn[2], p[2].clamp(0.0, 1.0), third);
    let table = CdfTable::new(&w1);
    let mut total = 0.0;
    for (i, &m2) in w2.pmf.iter().enumerate() {
        let x2 = w2.lo + i as u64;
        let mut inner = 0.0;
        for (j, &m3) in w3.pmf.iter().enumerate() {
            let x3 = w3.lo + j as u64;
            let k = threshold(t, linear_offset(x2, x3, n, pi0), nn[0], strict);
            inner += m3 * table.at(k);
        }
        total += m2 * inner;
    }
    total.clamp(0.0, 1.0)
}

/// A finite list of `(value, mass)` atoms plus the mass left out by truncation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruncatedDistribution {
    pub atoms: Vec<(f64, f64)>,
    pub truncation_mass: f64,
}

impl TruncatedDistribution {
    /// Law of the linear statistic at `p`, truncated to total excluded mass at most `eps`.
    pub fn linear_statistic(p: [f64; 3], sizes: SampleSizes, pi0: f64, eps: f64) -> Self {
        let nn = sizes.as_array();
        let n = sizes.as_f64();
        let third = eps / 3.0;
        let w: Vec<BinomialWindow> = (0..3).map(|i| BinomialWindow::new(nn[i], p[i].clamp(0.0, 1.0), third)).collect();
        let mut atoms = Vec::with_capacity(w[0].pmf.len() * w[1].pmf.len() * w[2].pmf.len());
        for (i, &m2) in w[1].pmf.iter().enumerate() {
            for (j, &m3) in w[2].pmf.iter().enumerate() {
                let off = linear_offset(w[1].lo + i as u64, w[2].lo + j as u64, n, pi0);
                for (k, &m1) in w[0].pmf.iter().enumerate() {
                    let mass = m1 * m2 * m3;
                    if mass > 0.0 {
                        atoms.push((linear_value(w[0].lo + k as u64, n[0], off), mass));
                    }
                }
            }
        }
        TruncatedDistribution::from_atoms(atoms)
    }

    /// Sorts and merges equal values; the truncation mass is whatever is missing from 1.
    pub fn from_atoms(mut atoms: Vec<(f64, f64)>) -> Self {
        atoms.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut merged: Vec<(f64, f64)> = Vec::with_capacity(atoms.len());
        for (v, m) in atoms {
            match merged.last_mut() {
                Some(last) if last.0 == v => last.1 += m,
                _ => merged.push((v, m)),
            }
        }
        let total: f64 = merged.iter().map(|a| a.1).sum();
        TruncatedDistribution { atoms: merged, truncation_mass: (1.0 - total).max(0.0) }
    }

    /// Bounds on `P{T <= t}` (`P{T < t}` when `strict`).
    pub fn cdf(&self, t: f64, strict: bool) -> (f64, f64) {
        let s: f64 = self.atoms.iter().filter(|a| if strict { a.0 < t } else { a.0 <= t }).map(|a| a.1).sum();
        (s, (s + self.truncation_mass).min(1.0))
    }
}
