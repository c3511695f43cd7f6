//! Exact intervals for monotone functionals of two binomial proportions.
//!
//! With `p1` as the nuisance parameter, the null `f(p1, p2) = theta0` is a
//! monotone curve `p2 = h(p1)`. The nuisance is confined to a `1 - gamma`
//! Clopper–Pearson interval cut into `g` cells, and the plug-in statistic
//! `f(x1/n1, x2/n2)` is evaluated at cell extremes exactly as for prevalence.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::binomial::BinomialWindow;
use crate::classic::{check_alpha, cp_lower, cp_upper, Method};
use crate::error::{Error, Result};
use crate::inversion::{invert_with, Calibration, InversionResult, PValuePair, ScanConfig, ScanStrategy};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Functional {
    /// `p2 - p1`.
    Difference,
    /// `1 - p2 / p1`.
    RelativeRiskReduction,
    /// `[p2 / (1 - p2)] / [p1 / (1 - p1)]`.
    OddsRatio,
}

impl Functional {
    pub fn tag(&self) -> &'static str {
        match self {
            Functional::Difference => "difference",
            Functional::RelativeRiskReduction => "relative_risk",
            Functional::OddsRatio => "odds_ratio",
        }
    }

    /// Direction of monotonicity in `(p1, p2)`: `true` when increasing.
    fn increasing(&self) -> (bool, bool) {
        match self {
            Functional::Difference | Functional::OddsRatio => (false, true),
            Functional::RelativeRiskReduction => (true, false),
        }
    }

    /// The statistic on the working scale.
    ///
    /// The odds ratio uses the log of the half-corrected empirical odds, which is
    /// finite and strictly monotone in both counts; the raw plug-in is infinite
    /// whenever either count sits on the edge of its range.
    fn statistic(&self, x1: u64, n1: u64, x2: u64, n2: u64) -> f64 {
        let (f1, f2) = (x1 as f64 / n1 as f64, x2 as f64 / n2 as f64);
        match self {
            Functional::Difference => f2 - f1,
            Functional::RelativeRiskReduction => {
                if f1 == 0.0 {
                    if f2 == 0.0 {
                        0.0
                    } else {
                        f64::NEG_INFINITY
                    }
                } else {
                    1.0 - f2 / f1
                }
            }
            Functional::OddsRatio => {
                let log_odds = |x: u64, n: u64| ((x as f64 + 0.5) / ((n - x) as f64 + 0.5)).ln();
                log_odds(x2, n2) - log_odds(x1, n1)
            }
        }
    }

    /// `p2` on the null curve through `p1`, if it is a probability.
    fn null_p2(&self, theta: f64, p1: f64) -> Option<f64> {
        let p2 = match self {
            Functional::Difference => p1 + theta,
            Functional::RelativeRiskReduction => (1.0 - theta) * p1,
            Functional::OddsRatio => {
                let den = 1.0 - p1 + theta * p1;
                if den > 0.0 {
                    theta * p1 / den
                } else {
                    1.0
                }
            }
        };
        (-1e-15..=1.0 + 1e-15).contains(&p2).then_some(p2.clamp(0.0, 1.0))
    }

    /// Range of `p1` whose null partner is a probability.
    fn feasible_p1(&self, theta: f64) -> (f64, f64) {
        match self {
            Functional::Difference => ((-theta).max(0.0), (1.0 - theta).min(1.0)),
            Functional::RelativeRiskReduction => (0.0, if theta < 0.0 { 1.0 / (1.0 - theta) } else { 1.0 }),
            Functional::OddsRatio => (0.0, 1.0),
        }
    }

    /// Scan coordinate `s` and its inverse; `theta` is increasing in `s`.
    fn scan_range(&self) -> (f64, f64) {
        match self {
            Functional::Difference => (-1.0, 1.0),
            _ => (-12.0, 12.0),
        }
    }

    fn to_theta(&self, s: f64) -> f64 {
        match self {
            Functional::Difference => s,
            Functional::RelativeRiskReduction => 1.0 - (-s).exp(),
            Functional::OddsRatio => s.exp(),
        }
    }

    fn to_scan(&self, theta: f64) -> f64 {
        match self {
            Functional::Difference => theta,
            Functional::RelativeRiskReduction => -(1.0 - theta).ln(),
            Functional::OddsRatio => theta.ln(),
        }
    }

    /// Natural limits reported when the scan reaches the edge of its range.
    fn limits(&self) -> (f64, f64) {
        match self {
            Functional::Difference => (-1.0, 1.0),
            Functional::RelativeRiskReduction => (f64::NEG_INFINITY, 1.0),
            Functional::OddsRatio => (0.0, f64::INFINITY),
        }
    }
}

impl fmt::Display for Functional {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.pad(self.tag())
    }
}

impl FromStr for Functional {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "difference" | "diff" => Ok(Functional::Difference),
            "relative_risk" | "rrr" | "relative_risk_reduction" => Ok(Functional::RelativeRiskReduction),
            "odds_ratio" | "or" => Ok(Functional::OddsRatio),
            other => Err(Error::invalid(format!("unknown functional '{other}'"))),
        }
    }
}

/// The test statistic on the data: the plug-in functional, except for the odds
/// ratio, where it is the half-corrected empirical log odds ratio.
pub fn functional_value(kind: Functional, x1: u64, n1: u64, x2: u64, n2: u64) -> f64 {
    kind.statistic(x1, n1, x2, n2)
}

/// Retained mass of `{T <= t}` (or `{T < t}`) at `(p1, p2)`.
fn truncated_cdf(kind: Functional, p: [f64; 2], n: [u64; 2], t: f64, strict: bool, eps: f64) -> f64 {
    let w1 = BinomialWindow::new(n[0], p[0], 0.5 * eps);
    let w2 = BinomialWindow::new(n[1], p[1], 0.5 * eps);
    let mut total = 0.0;
    for (i, &m1) in w1.pmf.iter().enumerate() {
        let x1 = w1.lo + i as u64;
        let mut inner = 0.0;
        for (j, &m2) in w2.pmf.iter().enumerate() {
            let v = kind.statistic(x1, n[0], w2.lo + j as u64, n[1]);
            if (strict && v < t) || (!strict && v <= t) {
                inner += m2;
            }
        }
        total += m1 * inner;
    }
    total.clamp(0.0, 1.0)
}

fn validate(x1: u64, n1: u64, x2: u64, n2: u64, gamma: f64, g: usize) -> Result<()> {
    if n1 == 0 || n2 == 0 {
        return Err(Error::invalid("sample sizes must be positive"));
    }
    if x1 > n1 {
        return Err(Error::invalid("x1 exceeds n1"));
    }
    if x2 > n2 {
        return Err(Error::invalid("x2 exceeds n2"));
    }
    if !(gamma > 0.0 && gamma < 1.0) {
        return Err(Error::invalid(format!("gamma = {gamma} must lie in (0, 1)")));
    }
    if g < 1 {
        return Err(Error::invalid("grid needs at least one cell"));
    }
    Ok(())
}

/// Grid-corrected maximal p-values for `f(p1, p2) = theta0`.
#[allow(clippy::too_many_arguments)]
pub fn functional_p_values(kind: Functional, x1: u64, n1: u64, x2: u64, n2: u64, theta0: f64, gamma: f64, g: usize, eps: f64) -> Result<PValuePair> {
    validate(x1, n1, x2, n2, gamma, g)?;
    let tail = 0.5 * gamma;
    let (lo, hi) = (cp_lower(x1, n1, tail), cp_upper(x1, n1, tail));
    let (f_lo, f_hi) = kind.feasible_p1(theta0);
    let t0 = functional_value(kind, x1, n1, x2, n2);
    let (inc1, inc2) = kind.increasing();
    let cells: Vec<(f64, f64)> = (0..g)
        .map(|k| {
            let a = lo + (hi - lo) * k as f64 / g as f64;
            let b = if k + 1 == g { hi } else { lo + (hi - lo) * (k + 1) as f64 / g as f64 };
            (a, b)
        })
        .collect();
    let (ql, qu) = cells
        .par_iter()
        .map(|&(a, b)| {
            let (a, b) = (a.max(f_lo), b.min(f_hi));
            if a > b {
                return (0.0, 0.0);
            }
            let (Some(h_a), Some(h_b)) = (kind.null_p2(theta0, a), kind.null_p2(theta0, b)) else {
                return (0.0, 0.0);
            };
            let (p2_lo, p2_hi) = (h_a.min(h_b), h_a.max(h_b));
            // Smallest cdf: push each rate in the direction that raises the statistic.
            let p_l = [if inc1 { b } else { a }, if inc2 { p2_hi } else { p2_lo }];
            let p_u = [if inc1 { a } else { b }, if inc2 { p2_lo } else { p2_hi }];
            let s_l = truncated_cdf(kind, p_l, [n1, n2], t0, true, eps);
            let s_u = truncated_cdf(kind, p_u, [n1, n2], t0, false, eps);
            (1.0 - s_l, s_u)
        })
        .reduce(|| (0.0, 0.0), |x, y| (x.0.max(y.0), x.1.max(y.1)));
    Ok(PValuePair {
        q_lower: (ql + gamma + eps).min(1.0),
        q_upper: (qu + gamma + eps).min(1.0),
        method: Calibration::Exact,
        pi0: theta0,
        two_sided: false,
        diagnostics: Vec::new(),
    })
}

/// Inverts [`functional_p_values`] over `theta0`. The odds ratio is reported on its
/// natural scale; endpoints that reach the edge of the scan are reported as the
/// functional's limits.
#[allow(clippy::too_many_arguments)]
pub fn functional_exact_interval(kind: Functional, x1: u64, n1: u64, x2: u64, n2: u64, alpha: f64, gamma: f64, g: usize) -> Result<InversionResult> {
    check_alpha(alpha)?;
    validate(x1, n1, x2, n2, gamma, g)?;
    if alpha <= 2.0 * gamma {
        return Err(Error::invalid(format!("alpha = {alpha} must exceed 2 gamma = {}", 2.0 * gamma)));
    }
    let (s_lo, s_hi) = kind.scan_range();
    let width = s_hi - s_lo;
    let scan = ScanConfig { step: width * 1e-3, tol: width * 1e-6, strategy: ScanStrategy::Full };
    let theta_hat = match kind {
        Functional::OddsRatio => (x2 as f64 * (n1 - x1) as f64) / ((n2 - x2) as f64 * x1 as f64),
        _ => functional_value(kind, x1, n1, x2, n2),
    };
    let start = Some(kind.to_scan(theta_hat)).filter(|s| s.is_finite());
    let mut r = invert_with(
        |s| functional_p_values(kind, x1, n1, x2, n2, kind.to_theta(s), gamma, g, super::DEFAULT_EPS),
        alpha,
        (s_lo, s_hi),
        start,
        &scan,
        Method::Functional,
    )?;
    let (lim_lo, lim_hi) = kind.limits();
    let map = |s: f64| {
        if s <= s_lo {
            lim_lo
        } else if s >= s_hi {
            lim_hi
        } else {
            kind.to_theta(s)
        }
    };
    r.interval.lower = map(r.interval.lower);
    r.interval.upper = map(r.interval.upper);
    r.scan_resolution = scan.step;
    Ok(r)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn accepts(kind: Functional, x: [u64; 2], n: [u64; 2], theta0: f64) -> bool {
        functional_p_values(kind, x[0], n[0], x[1], n[1], theta0, 0.001, 10, 1e-10).unwrap().accepts(0.05)
    }

    #[test]
    fn zero_counts_do_not_reject_equality() {
        let p = functional_p_values(Functional::Difference, 0, 5, 0, 5, 0.0, 0.001, 10, 1e-10).unwrap();
        assert!(p.q_upper >= 0.5 && p.q_lower >= 0.5);
    }

    #[test]
    fn boundary_difference_rejected() {
        assert!(!accepts(Functional::Difference, [3, 4], [10, 10], 1.0));
        assert!(!accepts(Functional::Difference, [3, 4], [10, 10], -1.0));
        assert!(accepts(Functional::Difference, [0, 10], [10, 10], 1.0));
    }

    #[test]
    fn odds_ratio_one_matches_zero_difference() {
        for (x, n) in [([3, 7], [20, 20]), ([0, 0], [5, 5]), ([10, 2], [15, 30]), ([40, 55], [100, 100]), ([1, 9], [12, 12])] {
            assert_eq!(accepts(Functional::OddsRatio, x, n, 1.0), accepts(Functional::Difference, x, n, 0.0), "{x:?}/{n:?}");
        }
    }

    #[test]
    fn extended_real_conventions() {
        assert_eq!(functional_value(Functional::RelativeRiskReduction, 0, 5, 0, 5), 0.0);
        assert_eq!(functional_value(Functional::RelativeRiskReduction, 0, 5, 1, 5), f64::NEG_INFINITY);
        assert_eq!(functional_value(Functional::OddsRatio, 0, 5, 0, 5), 0.0);
        assert_eq!(functional_value(Functional::OddsRatio, 5, 5, 5, 5), 0.0);
        assert!((functional_value(Functional::OddsRatio, 0, 5, 2, 5) - (2.5f64 / 3.5 / (0.5 / 5.5)).ln()).abs() < 1e-15);
    }

    #[test]
    fn intervals_contain_estimates() {
        let (x1, n1, x2, n2) = (12, 40, 25, 40);
        let d = functional_exact_interval(Functional::Difference, x1, n1, x2, n2, 0.05, 0.001, 10).unwrap().interval;
        let est = 25.0 / 40.0 - 12.0 / 40.0;
        assert!(d.lower < est && est < d.upper && d.lower > -1.0 && d.upper < 1.0);
        let o = functional_exact_interval(Functional::OddsRatio, x1, n1, x2, n2, 0.05, 0.001, 10).unwrap().interval;
        let or = (25.0 / 15.0) / (12.0 / 28.0);
        assert!(o.lower < or && or < o.upper, "{o:?}");
        let r = functional_exact_interval(Functional::RelativeRiskReduction, 25, 40, 12, 40, 0.05, 0.001, 10).unwrap().interval;
        let rrr = 1.0 - 12.0 / 25.0;
        assert!(r.lower < rrr && rrr < r.upper, "{r:?}");
    }

    #[test]
    fn parse_tags() {
        for k in [Functional::Difference, Functional::RelativeRiskReduction, Functional::OddsRatio] {
            assert_eq!(k.tag().parse::<Functional>().unwrap(), k);
        }
    }
}
