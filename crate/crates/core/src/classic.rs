//! Closed-form intervals: delta method, Clopper–Pearson and projection.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::binomial::binomial_cdf;
use crate::error::{Error, Result};
use crate::estimation::mle_unconstrained;
use crate::model::{ParamPoint, SampleSizes, SurveyCounts};
use crate::normal::norm_quantile;

/// How an interval was constructed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Method {
    Delta,
    Percentile,
    Bca,
    ClopperPearson,
    Projection,
    InversionAsymptotic,
    InversionBootstrap,
    Exact,
    ExactGrid,
    Functional,
}

impl Method {
    pub fn tag(&self) -> &'static str {
        match self {
            Method::Delta => "delta",
            Method::Percentile => "pb",
            Method::Bca => "bca",
            Method::ClopperPearson => "cp",
            Method::Projection => "proj",
            Method::InversionAsymptotic => "inv-asym",
            Method::InversionBootstrap => "inv-boot",
            Method::Exact => "exact",
            Method::ExactGrid => "exact-grid",
            Method::Functional => "functional",
        }
    }
}

impl Method {
    pub const ALL: [Method; 10] = [
        Method::Delta,
        Method::Percentile,
        Method::Bca,
        Method::ClopperPearson,
        Method::Projection,
        Method::InversionAsymptotic,
        Method::InversionBootstrap,
        Method::Exact,
        Method::ExactGrid,
        Method::Functional,
    ];

    /// Methods whose interval is a test inversion over a statistic.
    pub fn uses_statistic(&self) -> bool {
        matches!(self, Method::InversionAsymptotic | Method::InversionBootstrap)
    }

    /// Methods that draw bootstrap samples (or invert simulated p-values).
    pub fn is_stochastic(&self) -> bool {
        matches!(self, Method::Percentile | Method::Bca | Method::InversionBootstrap)
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let t = s.trim().to_ascii_lowercase();
        Method::ALL
            .into_iter()
            .find(|m| m.tag() == t)
            .ok_or_else(|| Error::invalid(format!("unknown method '{s}'")))
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.pad(self.tag())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntervalResult {
    pub lower: f64,
    pub upper: f64,
    /// Nominal coverage `1 - alpha`.
    pub level: f64,
    pub method: Method,
    pub diagnostics: Vec<String>,
}

impl IntervalResult {
    /// Builds an interval, clamping both endpoints to `[0, 1]` and noting any clamping.
    pub fn new(lower: f64, upper: f64, level: f64, method: Method) -> Self {
        let mut diagnostics = Vec::new();
        let lo = lower.clamp(0.0, 1.0);
        let hi = upper.clamp(0.0, 1.0);
        if lo != lower {
            diagnostics.push(format!("lower endpoint {lower:.6} clamped to {lo}"));
        }
        if hi != upper {
            diagnostics.push(format!("upper endpoint {upper:.6} clamped to {hi}"));
        }
        IntervalResult { lower: lo, upper: hi, level, method, diagnostics }
    }

    /// Builds an interval without clamping, for parameters not confined to `[0, 1]`.
    pub fn raw(lower: f64, upper: f64, level: f64, method: Method) -> Self {
        IntervalResult { lower, upper, level, method, diagnostics: Vec::new() }
    }

    pub fn with_note(mut self, note: impl Into<String>) -> Self {
        self.diagnostics.push(note.into());
        self
    }

    pub fn length(&self) -> f64 {
        self.upper - self.lower
    }

    pub fn contains(&self, v: f64) -> bool {
        self.lower <= v && v <= self.upper
    }
}

pub(crate) fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha < 1.0 {
        Ok(())
    } else {
        Err(Error::invalid(format!("alpha = {alpha} must lie in (0, 1)")))
    }
}

/// Asymptotic variance of the plug-in prevalence estimate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DeltaVariance {
    pub value: f64,
    /// Contributions of the survey, false-positive and sensitivity samples.
    pub components: [f64; 3],
}

pub fn delta_variance(p: ParamPoint, sizes: SampleSizes) -> DeltaVariance {
    delta_variance_raw(p.as_array(), sizes).expect("model points have p2 < p3")
}

pub(crate) fn delta_variance_raw(p: [f64; 3], sizes: SampleSizes) -> Result<DeltaVariance> {
    let [p1, p2, p3] = p;
    let d = p3 - p2;
    if !(d > 0.0) {
        return Err(Error::Numeric("delta variance undefined when p2 = p3".into()));
    }
    let n = sizes.as_f64();
    let s = [p1 * (1.0 - p1) / n[0], p2 * (1.0 - p2) / n[1], p3 * (1.0 - p3) / n[2]];
    let d2 = d * d;
    let d4 = d2 * d2;
    let components = [s[0] / d2, (p1 - p3).powi(2) * s[1] / d4, (p2 - p1).powi(2) * s[2] / d4];
    Ok(DeltaVariance { value: components.iter().sum(), components })
}

/// Wald interval `pi_hat ± z sqrt(V(p_hat))`.
pub fn delta_interval(x: &SurveyCounts, alpha: f64) -> Result<IntervalResult> {
    check_alpha(alpha)?;
    let mle = mle_unconstrained(x);
    let pi = mle
        .prevalence()
        .ok_or_else(|| Error::Numeric("estimate has p2 = p3; prevalence undefined".into()))?;
    let v = delta_variance_raw(mle.p_hat, x.sizes())?;
    let z = norm_quantile(1.0 - 0.5 * alpha);
    let half = z * v.value.sqrt();
    let mut out = IntervalResult::new(pi - half, pi + half, 1.0 - alpha, Method::Delta);
    if mle.case != crate::estimation::MleCase::Interior {
        out.diagnostics.push(format!("estimate on the boundary of the model space ({:?})", mle.case));
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub enum Side {
    #[default]
    TwoSided,
    /// Only a lower bound; the upper endpoint is 1.
    Lower,
    /// Only an upper bound; the lower endpoint is 0.
    Upper,
}

/// Bisection for the root of an increasing function on `[0, 1]`.
fn bisect_increasing(f: impl Fn(f64) -> f64, target: f64) -> f64 {
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    while hi - lo > 1e-13 {
        let mid = 0.5 * (lo + hi);
        if f(mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Lower confidence bound with `P_{p}{X >= x} = tail`.
pub(crate) fn cp_lower(x: u64, n: u64, tail: f64) -> f64 {
    if x == 0 {
        return 0.0;
    }
    bisect_increasing(|p| 1.0 - binomial_cdf(n, p, x as i64, true), tail)
}

/// Upper confidence bound with `P_{p}{X <= x} = tail`.
pub(crate) fn cp_upper(x: u64, n: u64, tail: f64) -> f64 {
    if x == n {
        return 1.0;
    }
    // P{X <= x} decreases in p; bisect its complement.
    bisect_increasing(|p| 1.0 - binomial_cdf(n, p, x as i64, false), 1.0 - tail)
}

/// Exact binomial interval for a single proportion.
pub fn clopper_pearson(x: u64, n: u64, level: f64, side: Side) -> Result<IntervalResult> {
    if n == 0 {
        return Err(Error::invalid("n must be positive"));
    }
    if x > n {
        return Err(Error::invalid(format!("x = {x} exceeds n = {n}")));
    }
    if !(level > 0.0 && level <= 1.0) {
        return Err(Error::invalid(format!("level = {level} must lie in (0, 1]")));
    }
    let a = 1.0 - level;
    let (lo, hi) = match side {
        Side::TwoSided => (cp_lower(x, n, 0.5 * a), cp_upper(x, n, 0.5 * a)),
        Side::Lower => (cp_lower(x, n, a), 1.0),
        Side::Upper => (0.0, cp_upper(x, n, a)),
    };
    let (lo, hi) = if a == 0.0 { (0.0, 1.0) } else { (lo, hi) };
    Ok(IntervalResult::new(lo, hi, level, Method::ClopperPearson))
}

/// Prevalence at a rectangle corner, clamped when the corner leaves the model space.
fn corner_prevalence(p: [f64; 3], notes: &mut Vec<String>, which: &str) -> f64 {
    let [p1, p2, p3] = p;
    let inside = p2 <= p1 && p1 <= p3 && p2 < p3;
    if inside {
        return (p1 - p2) / (p3 - p2);
    }
    // Any point of the closure of the model space nearest such a corner has
    // p1 = p2 (prevalence 0) or p1 = p3 (prevalence 1).
    let v = if p3 <= p2 {
        if which == "lower" { 0.0 } else { 1.0 }
    } else if p1 < p2 {
        0.0
    } else {
        1.0
    };
    notes.push(format!("{which} corner ({p1:.6}, {p2:.6}, {p3:.6}) outside the model space; prevalence set to {v}"));
    v
}

/// Projection of the product of three Clopper–Pearson intervals at level `(1 - alpha)^(1/3)` each.
pub fn projection_interval(x: &SurveyCounts, alpha: f64) -> Result<IntervalResult> {
    check_alpha(alpha)?;
    let gamma = 1.0 - (1.0 - alpha).cbrt();
    let n = x.sizes();
    let tail = 0.5 * gamma;
    let lo = [cp_lower(x.get(0), n.get(0), tail), cp_lower(x.get(1), n.get(1), tail), cp_lower(x.get(2), n.get(2), tail)];
    let hi = [cp_upper(x.get(0), n.get(0), tail), cp_upper(x.get(1), n.get(1), tail), cp_upper(x.get(2), n.get(2), tail)];
    let mut notes = Vec::new();
    let lower = corner_prevalence([lo[0], hi[1], hi[2]], &mut notes, "lower");
    let upper = corner_prevalence([hi[0], lo[1], lo[2]], &mut notes, "upper");
    let mut out = IntervalResult::new(lower, upper, 1.0 - alpha, Method::Projection);
    out.diagnostics.extend(notes);
    Ok(out)
}
