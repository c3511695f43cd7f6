//! Confidence intervals by inverting tests of `pi = pi0`.
//!
//! A p-value pair `(q_lower, q_upper)` is computed at each candidate `pi0`;
//! the point is accepted when both are at least `alpha / 2` (or, for the
//! two-sided likelihood ratio, when the single p-value is at least `alpha`).
//! The acceptance set is located by a grid scan refined by bisection.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::classic::{check_alpha, IntervalResult, Method};
use crate::error::{Error, Result};
use crate::estimation::mle_unconstrained;
use crate::model::SurveyCounts;
use crate::normal::{chi2_1_sf, norm_cdf};
use crate::rng::RngSeed;
use crate::statistics::{evaluate_plain, recentering, BootConfig, StatisticKind, DEFAULT_RECENTER_B};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Calibration {
    Asymptotic,
    Bootstrap,
    Exact,
    ExactGrid,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PValuePair {
    /// Evidence against `pi <= pi0`: `1 - F(t0-)`.
    pub q_lower: f64,
    /// Evidence against `pi >= pi0`: `F(t0)`.
    pub q_upper: f64,
    pub method: Calibration,
    pub pi0: f64,
    /// Both fields hold the same two-sided p-value.
    pub two_sided: bool,
    pub diagnostics: Vec<String>,
}

impl PValuePair {
    fn new(q_lower: f64, q_upper: f64, method: Calibration, pi0: f64) -> Self {
        PValuePair {
            q_lower: q_lower.clamp(0.0, 1.0),
            q_upper: q_upper.clamp(0.0, 1.0),
            method,
            pi0,
            two_sided: false,
            diagnostics: Vec::new(),
        }
    }

    fn two_sided(q: f64, method: Calibration, pi0: f64) -> Self {
        PValuePair { two_sided: true, ..PValuePair::new(q, q, method, pi0) }
    }

    fn undefined(method: Calibration, pi0: f64, two_sided: bool) -> Self {
        let mut p = PValuePair::new(1.0, 1.0, method, pi0);
        p.two_sided = two_sided;
        p.diagnostics.push("statistic undefined at the data; not rejected".into());
        p
    }

    pub fn accepts(&self, alpha: f64) -> bool {
        if self.two_sided {
            self.q_lower >= alpha
        } else {
            self.q_lower >= 0.5 * alpha && self.q_upper >= 0.5 * alpha
        }
    }

    /// Larger means stronger support; used to pick a point when nothing is accepted.
    fn support(&self) -> f64 {
        if self.two_sided {
            self.q_lower
        } else {
            2.0 * self.q_lower.min(self.q_upper)
        }
    }
}

fn check_pi0(pi0: f64) -> Result<()> {
    if (0.0..=1.0).contains(&pi0) {
        Ok(())
    } else {
        Err(Error::invalid(format!("pi0 = {pi0} is outside [0, 1]")))
    }
}

/// P-values from the normal limit (studentized statistics) or the chi-square(1) limit (`W`).
///
/// `recenter` sets the bootstrap used for `RTilde`'s mean and variance.
pub fn p_values_asymptotic(kind: StatisticKind, x: &SurveyCounts, pi0: f64, recenter: Option<BootConfig>) -> Result<PValuePair> {
    check_pi0(pi0)?;
    let cal = Calibration::Asymptotic;
    match kind {
        StatisticKind::PiHat | StatisticKind::PhiHat => {
            return Err(Error::Unsupported(format!("{kind} has no parameter-free limit; use bootstrap calibration")))
        }
        StatisticKind::W => {
            let v = evaluate_plain(kind, x, pi0);
            return Ok(if v.defined { PValuePair::two_sided(chi2_1_sf(v.value), cal, pi0) } else { PValuePair::undefined(cal, pi0, true) });
        }
        _ => {}
    }
    let t = if kind == StatisticKind::RTilde {
        let cfg = recenter.unwrap_or(BootConfig::new(DEFAULT_RECENTER_B, RngSeed::new(0)));
        let r = evaluate_plain(StatisticKind::R, x, pi0);
        let p0 = r.aux.constrained.expect("R uses the restricted estimate");
        match recentering(p0, x.sizes(), pi0, cfg) {
            Some((m, v)) if r.defined && v > 0.0 => Some((r.value - m) / v.sqrt()),
            _ => None,
        }
    } else {
        let v = evaluate_plain(kind, x, pi0);
        v.defined.then_some(v.value)
    };
    Ok(match t {
        Some(t) => PValuePair::new(norm_cdf(-t), norm_cdf(t), cal, pi0),
        None => PValuePair::undefined(cal, pi0, false),
    })
}

/// Monte Carlo p-values from `b` replicates drawn at the restricted estimate.
///
/// Replicates whose statistic is undefined count as at least as extreme in
/// both directions, which can only raise the p-values. `RTilde` uses `R`:
/// the recentring is one fixed increasing map of the observed and simulated values.
pub fn p_values_bootstrap(kind: StatisticKind, x: &SurveyCounts, pi0: f64, b: usize, seed: RngSeed) -> Result<PValuePair> {
    check_pi0(pi0)?;
    if b == 0 {
        return Err(Error::invalid("B must be at least 1"));
    }
    let cal = Calibration::Bootstrap;
    let kind = if kind == StatisticKind::RTilde { StatisticKind::R } else { kind };
    let observed = evaluate_plain(kind, x, pi0);
    if !observed.defined {
        return Ok(PValuePair::undefined(cal, pi0, kind.is_two_sided()));
    }
    let p0 = crate::estimation::solve_constrained(x, pi0).0;
    let t0 = observed.value;
    let draws = crate::bootstrap::draw_replicates(p0, x.sizes(), b, seed);
    let (ge, le) = draws
        .par_iter()
        .map(|c| {
            let v = evaluate_plain(kind, c, pi0);
            if !v.defined {
                (1usize, 1usize)
            } else {
                ((v.value >= t0) as usize, (v.value <= t0) as usize)
            }
        })
        .reduce(|| (0, 0), |a, b| (a.0 + b.0, a.1 + b.1));
    let denom = (b + 1) as f64;
    let ql = (1 + ge) as f64 / denom;
    let qu = (1 + le) as f64 / denom;
    Ok(if kind.is_two_sided() { PValuePair::two_sided(ql, cal, pi0) } else { PValuePair::new(ql, qu, cal, pi0) })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub enum ScanStrategy {
    /// Evaluate every grid point of the parameter range.
    #[default]
    Full,
    /// Walk outward from the estimate and stop at the first rejection on each side.
    Local,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScanConfig {
    pub step: f64,
    pub tol: f64,
    pub strategy: ScanStrategy,
}

impl Default for ScanConfig {
    fn default() -> Self {
        ScanConfig { step: 1e-3, tol: 1e-5, strategy: ScanStrategy::Full }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InversionResult {
    pub interval: IntervalResult,
    pub rejection_set_convex: bool,
    pub scan_resolution: f64,
}

/// Settings for [`invert`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InversionConfig {
    /// Bootstrap replicates per p-value.
    pub b: usize,
    /// Replicates for recentring `RTilde`.
    pub recenter_b: usize,
    pub seed: RngSeed,
    pub scan: ScanConfig,
}

impl Default for InversionConfig {
    fn default() -> Self {
        InversionConfig { b: 10_000, recenter_b: DEFAULT_RECENTER_B, seed: RngSeed::new(0), scan: ScanConfig::default() }
    }
}

const RECENTER_STREAM: u64 = 0x7263;

/// Test-inversion interval for `kind` with asymptotic or bootstrap calibration.
///
/// Every `pi0` reuses the same seed, so nearby nulls see common random numbers.
pub fn invert(kind: StatisticKind, method: Calibration, x: &SurveyCounts, alpha: f64, cfg: &InversionConfig) -> Result<InversionResult> {
    check_alpha(alpha)?;
    let pi_hat = mle_unconstrained(x).prevalence();
    let tag = match method {
        Calibration::Asymptotic => Method::InversionAsymptotic,
        Calibration::Bootstrap => Method::InversionBootstrap,
        _ => return Err(Error::Unsupported("use exact_interval for exact calibration".into())),
    };
    if method == Calibration::Asymptotic && matches!(kind, StatisticKind::PiHat | StatisticKind::PhiHat) {
        return Err(Error::Unsupported(format!("{kind} has no parameter-free limit; use bootstrap calibration")));
    }
    let recenter = BootConfig::new(cfg.recenter_b, cfg.seed.derive(RECENTER_STREAM));
    let pvals = |pi0: f64| match method {
        Calibration::Asymptotic => p_values_asymptotic(kind, x, pi0, Some(recenter)),
        _ => p_values_bootstrap(kind, x, pi0, cfg.b, cfg.seed),
    };
    invert_with(pvals, alpha, (0.0, 1.0), pi_hat, &cfg.scan, tag)
}

/// Generic inversion over `range`, with `start` a point expected to be accepted.
pub(crate) fn invert_with<F>(pvals: F, alpha: f64, range: (f64, f64), start: Option<f64>, scan: &ScanConfig, method: Method) -> Result<InversionResult>
where
    F: Fn(f64) -> Result<PValuePair> + Sync,
{
    let (lo, hi) = range;
    if !(scan.step > 0.0 && scan.tol > 0.0) {
        return Err(Error::invalid("scan step and tolerance must be positive"));
    }
    let accept = |t: f64| -> Result<bool> { Ok(pvals(t)?.accepts(alpha)) };

    if scan.strategy == ScanStrategy::Local {
        if let Some(s) = start.filter(|s| (lo..=hi).contains(s)) {
            if accept(s)? {
                let lower = if accept(lo)? { lo } else { walk(&accept, s, lo, scan)? };
                let upper = if accept(hi)? { hi } else { walk(&accept, s, hi, scan)? };
                return Ok(finish(lower, upper, alpha, true, scan.step, method, Vec::new()));
            }
        }
    }

    let n = ((hi - lo) / scan.step).round().max(1.0) as usize;
    let grid: Vec<f64> = (0..=n).map(|k| if k == n { hi } else { lo + k as f64 * scan.step }).collect();
    let pv: Vec<PValuePair> = grid.par_iter().map(|&t| pvals(t)).collect::<Result<_>>()?;
    let acc: Vec<bool> = pv.iter().map(|p| p.accepts(alpha)).collect();
    let first = acc.iter().position(|&a| a);
    let last = acc.iter().rposition(|&a| a);
    let (Some(i0), Some(i1)) = (first, last) else {
        let best = pv
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.support().total_cmp(&b.1.support()).then(b.0.cmp(&a.0)))
            .map(|(i, _)| grid[i])
            .unwrap_or(lo);
        let note = format!("acceptance set empty on the scan grid; returning the point of largest p-value {best:.6}");
        return Ok(finish(best, best, alpha, false, scan.step, method, vec![note]));
    };
    let convex = acc[i0..=i1].iter().all(|&a| a);
    let lower = if i0 == 0 { grid[0] } else { bisect(&accept, grid[i0 - 1], grid[i0], scan.tol)? };
    let upper = if i1 == n { grid[n] } else { bisect(&accept, grid[i1 + 1], grid[i1], scan.tol)? };
    let mut notes = Vec::new();
    if !convex {
        notes.push("acceptance set not an interval; convex hull reported".into());
    }
    Ok(finish(lower, upper, alpha, convex, scan.step, method, notes))
}

/// Boundary between a rejected and an accepted point; returns the accepted side.
fn bisect(accept: &impl Fn(f64) -> Result<bool>, mut rejected: f64, mut accepted: f64, tol: f64) -> Result<f64> {
    while (accepted - rejected).abs() > tol {
        let mid = 0.5 * (accepted + rejected);
        if accept(mid)? {
            accepted = mid;
        } else {
            rejected = mid;
        }
    }
    Ok(accepted)
}

/// From accepted `from`, step toward rejected `to` with doubling steps, then bisect.
fn walk(accept: &impl Fn(f64) -> Result<bool>, from: f64, to: f64, scan: &ScanConfig) -> Result<f64> {
    let dir = if to > from { 1.0 } else { -1.0 };
    let mut accepted = from;
    let mut h = scan.step;
    loop {
        let t = from + dir * h;
        if (t - to) * dir >= 0.0 {
            return bisect(accept, to, accepted, scan.tol);
        }
        if !accept(t)? {
            return bisect(accept, t, accepted, scan.tol);
        }
        accepted = t;
        h *= 2.0;
    }
}

fn finish(lower: f64, upper: f64, alpha: f64, convex: bool, step: f64, method: Method, notes: Vec<String>) -> InversionResult {
    let mut interval = IntervalResult::raw(lower, upper, 1.0 - alpha, method);
    interval.diagnostics.extend(notes);
    InversionResult { interval, rejection_set_convex: convex, scan_resolution: step }
}
