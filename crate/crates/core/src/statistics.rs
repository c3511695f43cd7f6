//! Test statistics for the null hypothesis that prevalence equals `pi0`.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::classic::delta_variance_raw;
use crate::error::{Error, Result};
use crate::estimation::{isotonic_fit, kernel_log_likelihood, solve_constrained};
use crate::model::{b_vector, draw_counts, prevalence_or_none, SampleSizes, SurveyCounts};
use crate::rng::RngSeed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum StatisticKind {
    /// Plug-in prevalence.
    PiHat,
    /// Plug-in prevalence studentized by the delta variance at the estimate.
    PiTilde,
    /// As `PiTilde`, with the variance evaluated under the null.
    PiTildeC,
    /// Linear statistic `b(pi0)' p_hat`.
    PhiHat,
    /// Linear statistic studentized at the estimate.
    PhiTilde,
    /// Linear statistic studentized under the null.
    PhiTildeC,
    /// Likelihood ratio statistic.
    W,
    /// Signed root of `W`.
    R,
    /// `R` recentred and rescaled by its bootstrap mean and variance under the null.
    RTilde,
}

impl StatisticKind {
    pub const ALL: [StatisticKind; 9] = [
        StatisticKind::PiHat,
        StatisticKind::PiTilde,
        StatisticKind::PiTildeC,
        StatisticKind::PhiHat,
        StatisticKind::PhiTilde,
        StatisticKind::PhiTildeC,
        StatisticKind::W,
        StatisticKind::R,
        StatisticKind::RTilde,
    ];

    pub fn tag(&self) -> &'static str {
        match self {
            StatisticKind::PiHat => "pi_hat",
            StatisticKind::PiTilde => "pi_tilde",
            StatisticKind::PiTildeC => "pi_tilde_c",
            StatisticKind::PhiHat => "phi_hat",
            StatisticKind::PhiTilde => "phi_tilde",
            StatisticKind::PhiTildeC => "phi_tilde_c",
            StatisticKind::W => "w",
            StatisticKind::R => "r",
            StatisticKind::RTilde => "r_tilde",
        }
    }

    /// `W` is the only statistic where large values speak against both directions.
    pub fn is_two_sided(&self) -> bool {
        matches!(self, StatisticKind::W)
    }

    /// Larger values point to larger prevalence (undefined for `W`).
    pub fn increasing_in_prevalence(&self) -> Option<bool> {
        if self.is_two_sided() {
            None
        } else {
            Some(true)
        }
    }

    fn needs_constrained(&self) -> bool {
        matches!(self, StatisticKind::PiTildeC | StatisticKind::PhiTildeC | StatisticKind::W | StatisticKind::R | StatisticKind::RTilde)
    }
}

impl fmt::Display for StatisticKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.pad(self.tag())
    }
}

impl FromStr for StatisticKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let t = s.trim().to_ascii_lowercase();
        StatisticKind::ALL
            .into_iter()
            .find(|k| k.tag() == t)
            .ok_or_else(|| Error::invalid(format!("unknown statistic '{s}'")))
    }
}

/// Bootstrap settings for statistics that need simulation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BootConfig {
    pub b: usize,
    pub seed: RngSeed,
}

impl BootConfig {
    pub fn new(b: usize, seed: RngSeed) -> Self {
        BootConfig { b, seed }
    }
}

/// Replicates used to recentre `R` when nothing else is specified.
pub const DEFAULT_RECENTER_B: usize = 2000;

const RECENTER_TAG: u64 = 0x5245_4345_4e54;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct StatAux {
    /// Restricted estimate used by the statistic, if any.
    pub constrained: Option<[f64; 3]>,
    /// Bootstrap mean and variance of `R` under the null (for `RTilde`).
    pub recenter: Option<(f64, f64)>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StatValue {
    pub value: f64,
    pub defined: bool,
    pub aux: StatAux,
}

impl StatValue {
    fn defined(value: f64, aux: StatAux) -> Self {
        StatValue { value, defined: true, aux }
    }

    fn undefined(aux: StatAux) -> Self {
        StatValue { value: f64::NAN, defined: false, aux }
    }
}

/// Exact variance of the linear statistic at `p`.
pub fn phi_variance(p: [f64; 3], sizes: SampleSizes, pi0: f64) -> f64 {
    let n = sizes.as_f64();
    let s = |i: usize| p[i] * (1.0 - p[i]) / n[i];
    s(0) + (1.0 - pi0).powi(2) * s(1) + pi0 * pi0 * s(2)
}

fn dot(b: [f64; 3], p: [f64; 3]) -> f64 {
    b[0] * p[0] + b[1] * p[1] + b[2] * p[2]
}

/// Everything except the recentring of `R`; `RTilde` evaluates to `R` here.
pub(crate) fn evaluate_plain(kind: StatisticKind, x: &SurveyCounts, pi0: f64) -> StatValue {
    let (p_hat, _) = isotonic_fit(x);
    let pi_hat = prevalence_or_none(p_hat);
    let constrained = if kind.needs_constrained() { Some(solve_constrained(x, pi0).0) } else { None };
    let aux = StatAux { constrained, recenter: None };
    let sizes = x.sizes();
    let studentize = |num: f64, var: f64| {
        if var > 0.0 && var.is_finite() {
            StatValue::defined(num / var.sqrt(), aux)
        } else {
            StatValue::undefined(aux)
        }
    };
    match kind {
        StatisticKind::PiHat => match pi_hat {
            Some(v) => StatValue::defined(v, aux),
            None => StatValue::undefined(aux),
        },
        StatisticKind::PiTilde => match (pi_hat, delta_variance_raw(p_hat, sizes)) {
            (Some(v), Ok(var)) => studentize(v - pi0, var.value),
            _ => StatValue::undefined(aux),
        },
        StatisticKind::PiTildeC => match (pi_hat, delta_variance_raw(constrained.unwrap(), sizes)) {
            (Some(v), Ok(var)) => studentize(v - pi0, var.value),
            _ => StatValue::undefined(aux),
        },
        StatisticKind::PhiHat => StatValue::defined(dot(b_vector(pi0), p_hat), aux),
        StatisticKind::PhiTilde => studentize(dot(b_vector(pi0), p_hat), phi_variance(p_hat, sizes, pi0)),
        StatisticKind::PhiTildeC => {
            studentize(dot(b_vector(pi0), p_hat), phi_variance(constrained.unwrap(), sizes, pi0))
        }
        StatisticKind::W | StatisticKind::R | StatisticKind::RTilde => {
            let w = (2.0 * (kernel_log_likelihood(p_hat, x) - kernel_log_likelihood(constrained.unwrap(), x))).max(0.0);
            if kind == StatisticKind::W {
                return StatValue::defined(w, aux);
            }
            if w == 0.0 {
                return StatValue::defined(0.0, aux);
            }
            match pi_hat {
                Some(v) => {
                    let sign = if v > pi0 {
                        1.0
                    } else if v < pi0 {
                        -1.0
                    } else {
                        0.0
                    };
                    StatValue::defined(sign * w.sqrt(), aux)
                }
                None => StatValue::undefined(aux),
            }
        }
    }
}

/// Bootstrap mean and variance of `R` at the null point `p0`; undefined draws are skipped.
pub(crate) fn recentering(p0: [f64; 3], sizes: SampleSizes, pi0: f64, cfg: BootConfig) -> Option<(f64, f64)> {
    let mut rng = cfg.seed.derive(RECENTER_TAG).rng();
    let draws: Vec<SurveyCounts> = (0..cfg.b).map(|_| draw_counts(p0, sizes, &mut rng)).collect();
    let values: Vec<f64> = draws
        .par_iter()
        .map(|c| evaluate_plain(StatisticKind::R, c, pi0))
        .filter(|v| v.defined)
        .map(|v| v.value)
        .collect();
    if values.len() < 2 {
        return None;
    }
    let m = values.iter().sum::<f64>() / values.len() as f64;
    let v = values.iter().map(|r| (r - m).powi(2)).sum::<f64>() / (values.len() - 1) as f64;
    Some((m, v))
}

/// Evaluates a statistic on data `x` for the null `pi = pi0`.
///
/// `boot` is only consulted for `RTilde`; when absent, `DEFAULT_RECENTER_B`
/// replicates on stream 0 of seed 0 are used.
pub fn evaluate_statistic(kind: StatisticKind, x: &SurveyCounts, pi0: f64, boot: Option<BootConfig>) -> Result<StatValue> {
    if !(0.0..=1.0).contains(&pi0) {
        return Err(Error::invalid(format!("pi0 = {pi0} is outside [0, 1]")));
    }
    let base = evaluate_plain(kind, x, pi0);
    if kind != StatisticKind::RTilde {
        return Ok(base);
    }
    let cfg = boot.unwrap_or(BootConfig::new(DEFAULT_RECENTER_B, RngSeed::new(0)));
    if cfg.b < 2 {
        return Err(Error::invalid("recentring needs at least 2 bootstrap replicates"));
    }
    let p0 = base.aux.constrained.expect("R uses the restricted estimate");
    let rec = recentering(p0, x.sizes(), pi0, cfg);
    let mut aux = base.aux;
    aux.recenter = rec;
    match rec {
        Some((m, v)) if base.defined && v > 0.0 => Ok(StatValue::defined((base.value - m) / v.sqrt(), aux)),
        _ => Ok(StatValue::undefined(aux)),
    }
}
