//! Finite-sample valid intervals.
//!
//! The nuisance parameter is confined to a `1 - gamma` Clopper–Pearson
//! rectangle, which is cut into grid cells. Because the linear statistic is
//! stochastically monotone in each success rate, its p-value over a whole
//! cell is bounded by the p-value at one extreme point of the cell. The
//! maximum over cells plus `gamma` is a valid p-value for `pi = pi0`.

mod distribution;
mod functional;
mod region;

pub use distribution::{exact_statistic_cdf, linear_statistic, TruncatedDistribution};
pub use functional::{functional_exact_interval, functional_p_values, functional_value, Functional};
pub use region::{cell_extremes, nuisance_region, GridCell, NuisanceRegion};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::classic::{check_alpha, Method};
use crate::error::{Error, Result};
use crate::estimation::mle_unconstrained;
use crate::inversion::{invert_with, Calibration, InversionResult, PValuePair, ScanConfig};
use crate::model::{NuisanceChoice, SurveyCounts};

use distribution::truncated_cdf;
use region::lattice_point;

/// Truncation allowance for the exact cdf.
pub const DEFAULT_EPS: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExactConfig {
    pub gamma: f64,
    /// Lattice points per nuisance axis.
    pub g: usize,
    pub eps: f64,
    /// Use cell extremes (valid) rather than lattice points only.
    pub corrected: bool,
    pub which: NuisanceChoice,
    pub scan: ScanConfig,
}

impl Default for ExactConfig {
    fn default() -> Self {
        ExactConfig { gamma: 1e-3, g: 10, eps: DEFAULT_EPS, corrected: true, which: NuisanceChoice::P1P3, scan: ScanConfig::default() }
    }
}

fn validate(gamma: f64, g: usize, eps: f64) -> Result<()> {
    if !(gamma > 0.0 && gamma < 1.0) {
        return Err(Error::invalid(format!("gamma = {gamma} must lie in (0, 1)")));
    }
    if g < 2 {
        return Err(Error::invalid("grid needs at least 2 points per axis"));
    }
    if !(eps > 0.0 && eps < 1.0) {
        return Err(Error::invalid("eps must lie in (0, 1)"));
    }
    Ok(())
}

/// Maximal p-values over the nuisance region for the null `pi = pi0`.
pub fn exact_p_values(x: &SurveyCounts, pi0: f64, gamma: f64, g: usize, eps: f64, corrected: bool) -> Result<PValuePair> {
    exact_p_values_with(x, pi0, &ExactConfig { gamma, g, eps, corrected, ..ExactConfig::default() })
}

pub fn exact_p_values_with(x: &SurveyCounts, pi0: f64, cfg: &ExactConfig) -> Result<PValuePair> {
    validate(cfg.gamma, cfg.g, cfg.eps)?;
    if !(0.0..=1.0).contains(&pi0) {
        return Err(Error::invalid(format!("pi0 = {pi0} is outside [0, 1]")));
    }
    let region = nuisance_region(x, cfg.gamma, cfg.which)?;
    let t0 = linear_statistic(x, pi0);
    let sizes = x.sizes();
    let (ql, qu, cal) = if cfg.corrected {
        let cells = region.cells(cfg.g);
        let (ql, qu) = cells
            .par_iter()
            .map(|cell| match cell_extremes(cell, pi0, cfg.which) {
                None => (0.0, 0.0),
                Some((pl, pu)) => {
                    let s_l = truncated_cdf(pl, sizes, pi0, t0, true, cfg.eps);
                    let s_u = truncated_cdf(pu, sizes, pi0, t0, false, cfg.eps);
                    (1.0 - s_l, s_u)
                }
            })
            .reduce(|| (0.0, 0.0), |a, b| (a.0.max(b.0), a.1.max(b.1)));
        (ql + cfg.gamma + cfg.eps, qu + cfg.gamma + cfg.eps, Calibration::Exact)
    } else {
        let (u, v) = region.lattice(cfg.g);
        let points: Vec<[f64; 3]> = u.iter().flat_map(|&a| v.iter().filter_map(move |&b| lattice_point(a, b, pi0, cfg.which))).collect();
        let (ql, qu) = points
            .par_iter()
            .map(|&p| {
                let s_l = truncated_cdf(p, sizes, pi0, t0, true, cfg.eps);
                let s_u = truncated_cdf(p, sizes, pi0, t0, false, cfg.eps);
                (1.0 - s_l, s_u + cfg.eps)
            })
            .reduce(|| (0.0, 0.0), |a, b| (a.0.max(b.0), a.1.max(b.1)));
        (ql + cfg.gamma, qu + cfg.gamma, Calibration::ExactGrid)
    };
    Ok(PValuePair {
        q_lower: ql.min(1.0),
        q_upper: qu.min(1.0),
        method: cal,
        pi0,
        two_sided: false,
        diagnostics: Vec::new(),
    })
}

/// Inverts the exact p-values over `pi0`.
pub fn exact_interval(x: &SurveyCounts, alpha: f64, gamma: f64, g: usize, corrected: bool) -> Result<InversionResult> {
    exact_interval_with(x, alpha, &ExactConfig { gamma, g, corrected, ..ExactConfig::default() })
}

pub fn exact_interval_with(x: &SurveyCounts, alpha: f64, cfg: &ExactConfig) -> Result<InversionResult> {
    check_alpha(alpha)?;
    validate(cfg.gamma, cfg.g, cfg.eps)?;
    if alpha <= 2.0 * cfg.gamma {
        return Err(Error::invalid(format!("alpha = {alpha} must exceed 2 gamma = {}", 2.0 * cfg.gamma)));
    }
    let start = mle_unconstrained(x).prevalence();
    let method = if cfg.corrected { Method::Exact } else { Method::ExactGrid };
    invert_with(|pi0| exact_p_values_with(x, pi0, cfg), alpha, (0.0, 1.0), start, &cfg.scan, method)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::inversion::ScanStrategy;

    fn paper() -> SurveyCounts {
        SurveyCounts::from_arrays([50, 2, 103], [3300, 401, 122]).unwrap()
    }

    #[test]
    fn corrected_dominates_grid() {
        use rand::Rng;
        let mut rng = crate::RngSeed::new(21).rng();
        for _ in 0..60 {
            let n = [rng.random_range(5..60u64), rng.random_range(5..60u64), rng.random_range(5..60u64)];
            let x = [rng.random_range(0..=n[0]), rng.random_range(0..=n[1]), rng.random_range(0..=n[2])];
            let c = SurveyCounts::from_arrays(x, n).unwrap();
            let pi0 = rng.random_range(0.0..1.0);
            let a = exact_p_values(&c, pi0, 0.01, 4, 1e-10, true).unwrap();
            let b = exact_p_values(&c, pi0, 0.01, 4, 1e-10, false).unwrap();
            assert!(a.q_lower >= b.q_lower && a.q_upper >= b.q_upper, "{x:?}/{n:?} pi0={pi0}: {a:?} {b:?}");
        }
    }

    #[test]
    fn empty_region_gives_gamma() {
        // A null far from the data leaves every cell outside the null set.
        let x = SurveyCounts::from_arrays([1, 0, 100], [1000, 100, 100]).unwrap();
        let p = exact_p_values(&x, 0.9, 0.01, 4, 1e-10, true).unwrap();
        assert!((p.q_lower - (0.01 + 1e-10)).abs() < 1e-15 && (p.q_upper - (0.01 + 1e-10)).abs() < 1e-15);
    }

    #[test]
    fn paper_interval_local() {
        let cfg = ExactConfig {
            gamma: 0.01,
            scan: ScanConfig { strategy: ScanStrategy::Local, ..ScanConfig::default() },
            ..ExactConfig::default()
        };
        let r = exact_interval_with(&paper(), 0.05, &cfg).unwrap();
        assert_eq!(r.interval.lower, 0.0);
        assert!((r.interval.upper - 0.026).abs() <= 0.002, "{}", r.interval.upper);
    }

    #[test]
    fn rejects_small_alpha() {
        assert!(exact_interval(&paper(), 0.01, 0.01, 10, true).is_err());
    }
}
