//! Parametric bootstrap: replicate distributions, percentile and BCa intervals.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::classic::{check_alpha, IntervalResult, Method};
use crate::error::{Error, Result};
use crate::estimation::mle_unconstrained;
use crate::model::{draw_counts, SampleSizes, SurveyCounts};
use crate::normal::{norm_cdf, norm_quantile};
use crate::rng::RngSeed;
use crate::statistics::{evaluate_plain, StatisticKind};

/// Statistic values over `b` bootstrap replicates; undefined values are NaN.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BootstrapSample {
    pub values: Vec<f64>,
    pub b: usize,
    pub seed: RngSeed,
    /// Success rates the replicates were drawn at.
    pub p: [f64; 3],
    pub kind: StatisticKind,
    pub pi0: f64,
}

impl BootstrapSample {
    /// Empirical quantile: the order statistic of rank `ceil(q b)`, clamped to `1..=b`.
    /// Undefined values sort above every defined one.
    pub fn quantile(&self, q: f64) -> f64 {
        let mut sorted = self.values.clone();
        sorted.sort_by(f64::total_cmp_nan_last);
        quantile_sorted(&sorted, q)
    }

    pub fn n_undefined(&self) -> usize {
        self.values.iter().filter(|v| v.is_nan()).count()
    }
}

trait NanLast {
    fn total_cmp_nan_last(a: &f64, b: &f64) -> std::cmp::Ordering;
}

impl NanLast for f64 {
    fn total_cmp_nan_last(a: &f64, b: &f64) -> std::cmp::Ordering {
        match (a.is_nan(), b.is_nan()) {
            (false, false) => a.total_cmp(b),
            (true, false) => std::cmp::Ordering::Greater,
            (false, true) => std::cmp::Ordering::Less,
            (true, true) => std::cmp::Ordering::Equal,
        }
    }
}

pub(crate) fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let b = sorted.len();
    // The small offset keeps levels like 0.025 * 1e5 from rounding up a rank.
    let rank = (q * b as f64 - 1e-7).ceil().clamp(1.0, b as f64) as usize;
    sorted[rank - 1]
}

/// Draws `b` replicates at `p` and evaluates `kind` on each.
///
/// Replicates come from a single stream so the sample depends only on
/// `(seed, p, b)`; evaluation may run in parallel. `RTilde` is evaluated
/// as `R`, since recentring is a monotone map fixed by the observed data.
pub fn bootstrap_distribution(
    kind: StatisticKind,
    p: [f64; 3],
    sizes: SampleSizes,
    pi0: Option<f64>,
    b: usize,
    seed: RngSeed,
) -> Result<BootstrapSample> {
    if b == 0 {
        return Err(Error::invalid("B must be at least 1"));
    }
    if p.iter().any(|v| !(0.0..=1.0).contains(v)) {
        return Err(Error::invalid("bootstrap success rates must lie in [0, 1]"));
    }
    let pi0 = match (kind, pi0) {
        (_, Some(v)) if (0.0..=1.0).contains(&v) => v,
        (_, Some(v)) => return Err(Error::invalid(format!("pi0 = {v} is outside [0, 1]"))),
        (StatisticKind::PiHat, None) => 0.0,
        (_, None) => return Err(Error::invalid(format!("statistic {kind} needs pi0"))),
    };
    let draws = draw_replicates(p, sizes, b, seed);
    let eval_kind = if kind == StatisticKind::RTilde { StatisticKind::R } else { kind };
    let values = draws
        .par_iter()
        .map(|c| {
            let v = evaluate_plain(eval_kind, c, pi0);
            if v.defined {
                v.value
            } else {
                f64::NAN
            }
        })
        .collect();
    Ok(BootstrapSample { values, b, seed, p, kind, pi0 })
}

pub(crate) fn draw_replicates(p: [f64; 3], sizes: SampleSizes, b: usize, seed: RngSeed) -> Vec<SurveyCounts> {
    let mut rng = seed.rng();
    (0..b).map(|_| draw_counts(p, sizes, &mut rng)).collect()
}

fn plug_in(x: &SurveyCounts) -> Result<([f64; 3], f64)> {
    let mle = mle_unconstrained(x);
    let pi = mle
        .prevalence()
        .ok_or_else(|| Error::Numeric("estimate has p2 = p3; prevalence undefined".into()))?;
    Ok((mle.p_hat, pi))
}

/// Percentile interval from an existing sample of `pi_hat` replicates.
pub fn percentile_from_sample(sample: &BootstrapSample, alpha: f64) -> Result<IntervalResult> {
    check_alpha(alpha)?;
    let mut sorted = sample.values.clone();
    sorted.sort_by(f64::total_cmp_nan_last);
    let lo = quantile_sorted(&sorted, 0.5 * alpha);
    let hi = quantile_sorted(&sorted, 1.0 - 0.5 * alpha);
    let mut out = IntervalResult::new(lo, hi, 1.0 - alpha, Method::Percentile);
    note_undefined(&mut out, sample);
    Ok(out)
}

fn note_undefined(out: &mut IntervalResult, sample: &BootstrapSample) {
    let k = sample.n_undefined();
    if k > 0 {
        out.diagnostics.push(format!("{k} of {} replicates had undefined prevalence", sample.b));
    }
}

pub fn percentile_interval(x: &SurveyCounts, alpha: f64, b: usize, seed: RngSeed) -> Result<IntervalResult> {
    check_alpha(alpha)?;
    let (p_hat, _) = plug_in(x)?;
    let sample = bootstrap_distribution(StatisticKind::PiHat, p_hat, x.sizes(), None, b, seed)?;
    percentile_from_sample(&sample, alpha)
}

/// Bias-correction and acceleration constants.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BcaConstants {
    pub z0: f64,
    pub a: f64,
}

/// Closed-form acceleration at the empirical frequencies.
pub fn acceleration(x: &SurveyCounts) -> f64 {
    acceleration_form(x, true)
}

/// The acceleration display exactly as printed in the source paper, which has the
/// second-order `lambda_ii` where the third-order cumulant `lambda_iii` belongs.
/// The result is close to zero, so the interval is nearly a bias-corrected
/// percentile interval. Kept to reproduce the published BCa figures.
pub fn acceleration_as_printed(x: &SurveyCounts) -> f64 {
    acceleration_form(x, false)
}

fn acceleration_form(x: &SurveyCounts, third_order: bool) -> f64 {
    let p = x.frequencies();
    let n = x.sizes().as_f64();
    let d = p[2] - p[1];
    if !(d > 0.0) {
        return 0.0;
    }
    let theta = [1.0 / d, (p[0] - p[2]) / (d * d), (p[1] - p[0]) / (d * d)];
    let mut num = 0.0;
    let mut den = 0.0;
    for i in 0..3 {
        let q = p[i];
        if q <= 0.0 || q >= 1.0 {
            continue;
        }
        let v = q * (1.0 - q);
        let l2 = n[i] / v;
        let l3 = if third_order { n[i] * (1.0 - 2.0 * q) / (v * v) } else { l2 };
        let mu = theta[i] / l2;
        num += l3 * mu.powi(3);
        den += l2 * mu * mu;
    }
    if den > 0.0 {
        num / (6.0 * den.powf(1.5))
    } else {
        0.0
    }
}

/// `z0` from the share of replicates at or below the estimate, and the closed-form acceleration.
pub fn bca_constants(x: &SurveyCounts, sample: &BootstrapSample) -> Result<BcaConstants> {
    let (_, pi_hat) = plug_in(x)?;
    let b = sample.b as f64;
    let below = sample.values.iter().filter(|&&v| v <= pi_hat).count() as f64;
    let prop = (below / b).clamp(1.0 / (b + 1.0), b / (b + 1.0));
    Ok(BcaConstants { z0: norm_quantile(prop), a: acceleration(x) })
}

/// BCa interval from a sample and constants; falls back to the plain level when the
/// adjusted quantile map is singular.
pub fn bca_from_sample(sample: &BootstrapSample, constants: BcaConstants, alpha: f64) -> Result<IntervalResult> {
    check_alpha(alpha)?;
    let mut sorted = sample.values.clone();
    sorted.sort_by(f64::total_cmp_nan_last);
    let mut notes = Vec::new();
    let mut level = |q: f64| {
        let zq = norm_quantile(q);
        let s = constants.z0 + zq;
        let den = 1.0 - constants.a * s;
        if den <= 0.0 {
            notes.push(format!("adjusted quantile map singular at level {q}; percentile level used"));
            return q;
        }
        norm_cdf(constants.z0 + s / den)
    };
    let ql = level(0.5 * alpha);
    let qu = level(1.0 - 0.5 * alpha);
    let mut out = IntervalResult::new(quantile_sorted(&sorted, ql), quantile_sorted(&sorted, qu), 1.0 - alpha, Method::Bca);
    out.diagnostics.extend(notes);
    note_undefined(&mut out, sample);
    Ok(out)
}

pub fn bca_interval(x: &SurveyCounts, alpha: f64, b: usize, seed: RngSeed) -> Result<IntervalResult> {
    check_alpha(alpha)?;
    let (p_hat, _) = plug_in(x)?;
    let sample = bootstrap_distribution(StatisticKind::PiHat, p_hat, x.sizes(), None, b, seed)?;
    let c = bca_constants(x, &sample)?;
    bca_from_sample(&sample, c, alpha)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn paper() -> SurveyCounts {
        SurveyCounts::from_arrays([50, 2, 103], [3300, 401, 122]).unwrap()
    }

    #[test]
    fn degenerate_model_gives_constant_sample() {
        let n = SampleSizes::new(20, 20, 20).unwrap();
        let s = bootstrap_distribution(StatisticKind::PiHat, [0.0, 0.0, 1.0], n, None, 50, RngSeed::new(1)).unwrap();
        assert!(s.values.iter().all(|&v| v == 0.0));
        let x = SurveyCounts::from_arrays([0, 0, 20], [20, 20, 20]).unwrap();
        let ci = percentile_interval(&x, 0.05, 100, RngSeed::new(1)).unwrap();
        assert_eq!((ci.lower, ci.upper), (0.0, 0.0));
    }

    #[test]
    fn single_replicate_matches_direct_draw() {
        let x = paper();
        let p = x.frequencies();
        let seed = RngSeed::new(5);
        let s = bootstrap_distribution(StatisticKind::PiHat, p, x.sizes(), None, 1, seed).unwrap();
        let c = crate::model::sample_counts(p, x.sizes(), seed);
        let v = evaluate_plain(StatisticKind::PiHat, &c, 0.0).value;
        assert_eq!(s.values, vec![v]);
    }

    #[test]
    fn quantile_convention() {
        let s = BootstrapSample {
            values: vec![4.0, 1.0, 3.0, 2.0, f64::NAN],
            b: 5,
            seed: RngSeed::new(0),
            p: [0.0; 3],
            kind: StatisticKind::PiHat,
            pi0: 0.0,
        };
        assert_eq!(s.quantile(0.0), 1.0);
        assert_eq!(s.quantile(0.2), 1.0);
        assert_eq!(s.quantile(0.21), 2.0);
        assert_eq!(s.quantile(0.8), 4.0);
        assert!(s.quantile(1.0).is_nan());
    }

    #[test]
    fn percentile_levels_nest() {
        let x = paper();
        let s = bootstrap_distribution(StatisticKind::PiHat, x.frequencies(), x.sizes(), None, 4000, RngSeed::new(3)).unwrap();
        let wide = percentile_from_sample(&s, 0.05).unwrap();
        let narrow = percentile_from_sample(&s, 0.5).unwrap();
        assert!(wide.lower <= narrow.lower && narrow.upper <= wide.upper);
        assert_eq!(narrow.lower, s.quantile(0.25));
        assert_eq!(narrow.upper, s.quantile(0.75));
    }

    #[test]
    fn acceleration_direct_formula() {
        let x = SurveyCounts::from_arrays([5, 2, 7], [10, 8, 10]).unwrap();
        // independent evaluation at (0.5, 0.25, 0.7)
        let (p1, p2, p3) = (0.5f64, 0.25f64, 0.7f64);
        let n = [10.0, 8.0, 10.0];
        let d = p3 - p2;
        let th = [1.0 / d, (p1 - p3) / d.powi(2), (p2 - p1) / d.powi(2)];
        let ps = [p1, p2, p3];
        let mut s3 = 0.0;
        let mut s2 = 0.0;
        for i in 0..3 {
            let lii = n[i] / (ps[i] * (1.0 - ps[i]));
            let liii = n[i] * (1.0 - 2.0 * ps[i]) / (ps[i].powi(2) * (1.0 - ps[i]).powi(2));
            let mu = th[i] / lii;
            s3 += liii * mu * mu * mu;
            s2 += lii * mu * mu;
        }
        let oracle = s3 / 6.0 / s2.powf(1.5);
        assert!((acceleration(&x) - oracle).abs() < 1e-10);
        assert!(acceleration(&x) != 0.0);
    }

    #[test]
    fn printed_acceleration_form() {
        let x = SurveyCounts::from_arrays([5, 2, 7], [10, 8, 10]).unwrap();
        let (p1, p2, p3) = (0.5f64, 0.25f64, 0.7f64);
        let n = [10.0, 8.0, 10.0];
        let d = p3 - p2;
        let th = [1.0 / d, (p1 - p3) / d.powi(2), (p2 - p1) / d.powi(2)];
        let ps = [p1, p2, p3];
        let (mut num, mut den) = (0.0, 0.0);
        for i in 0..3 {
            let l = n[i] / (ps[i] * (1.0 - ps[i]));
            num += l * (th[i] / l).powi(3);
            den += l * (th[i] / l).powi(2);
        }
        assert!((acceleration_as_printed(&x) - num / (6.0 * den.powf(1.5))).abs() < 1e-12);
    }

    #[test]
    fn zero_constants_reduce_to_percentile() {
        let x = paper();
        let s = bootstrap_distribution(StatisticKind::PiHat, x.frequencies(), x.sizes(), None, 5000, RngSeed::new(8)).unwrap();
        let pct = percentile_from_sample(&s, 0.05).unwrap();
        let bca = bca_from_sample(&s, BcaConstants { z0: 0.0, a: 0.0 }, 0.05).unwrap();
        assert_eq!((pct.lower, pct.upper), (bca.lower, bca.upper));
    }

    #[test]
    fn positive_bias_shifts_up() {
        let x = paper();
        let s = bootstrap_distribution(StatisticKind::PiHat, x.frequencies(), x.sizes(), None, 5000, RngSeed::new(8)).unwrap();
        let pct = percentile_from_sample(&s, 0.05).unwrap();
        let bca = bca_from_sample(&s, BcaConstants { z0: 0.2, a: 0.0 }, 0.05).unwrap();
        assert!(bca.lower >= pct.lower && bca.upper >= pct.upper);
    }

    #[test]
    fn median_at_estimate_gives_zero_bias() {
        let x = SurveyCounts::from_arrays([5, 1, 9], [10, 10, 10]).unwrap();
        let pi_hat = crate::model::prevalence_of(x.frequencies()).unwrap();
        let s = BootstrapSample {
            values: vec![pi_hat - 0.1, pi_hat, pi_hat + 0.1, pi_hat + 0.2],
            b: 4,
            seed: RngSeed::new(0),
            p: x.frequencies(),
            kind: StatisticKind::PiHat,
            pi0: 0.0,
        };
        assert_eq!(bca_constants(&x, &s).unwrap().z0, 0.0);
    }
}
