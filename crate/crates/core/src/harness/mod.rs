//! Monte Carlo coverage experiments and parameter sweeps.
//!
//! A run draws `reps` datasets at every grid point, computes each requested
//! interval on each dataset and counts how often the true prevalence falls
//! below, inside or above it. Replicate `r` at grid point `k` always uses the
//! stream `seed.for_replicate(k, r)`, so results do not depend on how the work
//! is spread over threads.

mod config;
mod report;

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bootstrap::{bca_interval, percentile_interval};
use crate::classic::{delta_interval, projection_interval, IntervalResult, Method};
use crate::error::{Error, Result};
use crate::exact::{exact_interval_with, ExactConfig, DEFAULT_EPS};
use crate::inversion::{invert, Calibration, InversionConfig, ScanConfig, ScanStrategy};
use crate::model::{prevalence_of, sample_counts, NuisanceChoice, ParamPoint, SampleSizes, SurveyCounts};
use crate::rng::RngSeed;
use crate::statistics::{StatisticKind, DEFAULT_RECENTER_B};

pub use config::{parse_config, ConfigEntries};
pub use report::{emit_report, format_sig, render_report, ReportFormat};

/// Parameter varied across a sweep; the other five stay at their base values.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SweepAxis {
    P1,
    P2,
    P3,
    N1,
    N2,
    N3,
}

impl SweepAxis {
    pub const ALL: [SweepAxis; 6] = [SweepAxis::P1, SweepAxis::P2, SweepAxis::P3, SweepAxis::N1, SweepAxis::N2, SweepAxis::N3];

    pub fn tag(&self) -> &'static str {
        match self {
            SweepAxis::P1 => "p1",
            SweepAxis::P2 => "p2",
            SweepAxis::P3 => "p3",
            SweepAxis::N1 => "n1",
            SweepAxis::N2 => "n2",
            SweepAxis::N3 => "n3",
        }
    }

    fn index(&self) -> usize {
        match self {
            SweepAxis::P1 | SweepAxis::N1 => 0,
            SweepAxis::P2 | SweepAxis::N2 => 1,
            SweepAxis::P3 | SweepAxis::N3 => 2,
        }
    }

    pub fn is_size(&self) -> bool {
        matches!(self, SweepAxis::N1 | SweepAxis::N2 | SweepAxis::N3)
    }
}

impl fmt::Display for SweepAxis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.pad(self.tag())
    }
}

impl FromStr for SweepAxis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let t = s.trim().to_ascii_lowercase();
        SweepAxis::ALL
            .into_iter()
            .find(|a| a.tag() == t)
            .ok_or_else(|| Error::invalid(format!("unknown sweep axis '{s}' (expected p1, p2, p3, n1, n2 or n3)")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sweep {
    pub axis: SweepAxis,
    pub values: Vec<f64>,
}

impl Sweep {
    /// Default grid: 20 evenly spaced points from 0.001 to twice the base value
    /// for probabilities, cut to the range that keeps `p` in the model space;
    /// `base * k / 10` for `k = 1..=20` (rounded, distinct) for sample sizes.
    pub fn default_for(axis: SweepAxis, p: [f64; 3], sizes: SampleSizes) -> Sweep {
        let i = axis.index();
        let values = if axis.is_size() {
            let base = sizes.get(i) as f64;
            let mut v: Vec<f64> = (1..=20).map(|k| (base * k as f64 / 10.0).round().max(1.0)).collect();
            v.dedup();
            v
        } else {
            let (feas_lo, feas_hi) = match i {
                0 => (p[1], p[2]),
                1 => (0.0, p[0].min(p[2] - 1e-9)),
                _ => (p[0].max(p[1] + 1e-9), 1.0),
            };
            let lo = 0.001f64.max(feas_lo);
            let hi = (2.0 * p[i]).min(feas_hi);
            if hi <= lo {
                vec![p[i]]
            } else {
                (0..20).map(|k| lo + (hi - lo) * k as f64 / 19.0).collect()
            }
        };
        Sweep { axis, values }
    }
}

/// A method, plus the statistic it inverts for the test-inversion methods.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct MethodSpec {
    pub method: Method,
    pub statistic: Option<StatisticKind>,
}

impl MethodSpec {
    pub fn new(method: Method) -> Self {
        MethodSpec { method, statistic: None }
    }

    pub fn inversion(method: Method, statistic: StatisticKind) -> Self {
        MethodSpec { method, statistic: Some(statistic) }
    }
}

impl fmt::Display for MethodSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.statistic {
            Some(s) => write!(f, "{}({})", self.method, s),
            None => write!(f, "{}", self.method),
        }
    }
}

/// Numeric settings shared by every method in a run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MethodSettings {
    pub alpha: f64,
    pub gamma: f64,
    /// Lattice points per nuisance axis for the exact methods.
    pub g: usize,
    /// Bootstrap replicates for percentile, BCa and bootstrap-calibrated inversion.
    pub b: usize,
    pub recenter_b: usize,
    pub eps: f64,
    pub scan: ScanConfig,
}

impl Default for MethodSettings {
    fn default() -> Self {
        MethodSettings {
            alpha: 0.05,
            gamma: 1e-3,
            g: 10,
            b: 100_000,
            recenter_b: DEFAULT_RECENTER_B,
            eps: DEFAULT_EPS,
            scan: ScanConfig::default(),
        }
    }
}

/// Computes one interval on one dataset.
pub fn compute_interval(spec: &MethodSpec, x: &SurveyCounts, settings: &MethodSettings, seed: RngSeed) -> Result<IntervalResult> {
    let alpha = settings.alpha;
    let inversion = |cal: Calibration| -> Result<IntervalResult> {
        let kind = spec
            .statistic
            .ok_or_else(|| Error::invalid(format!("method {} needs a statistic", spec.method)))?;
        let cfg = InversionConfig { b: settings.b, recenter_b: settings.recenter_b, seed, scan: settings.scan };
        Ok(invert(kind, cal, x, alpha, &cfg)?.interval)
    };
    let exact = |corrected: bool| -> Result<IntervalResult> {
        let cfg = ExactConfig {
            gamma: settings.gamma,
            g: settings.g,
            eps: settings.eps,
            corrected,
            which: NuisanceChoice::P1P3,
            scan: settings.scan,
        };
        Ok(exact_interval_with(x, alpha, &cfg)?.interval)
    };
    match spec.method {
        Method::Delta => delta_interval(x, alpha),
        Method::Percentile => percentile_interval(x, alpha, settings.b, seed),
        Method::Bca => bca_interval(x, alpha, settings.b, seed),
        Method::Projection => projection_interval(x, alpha),
        Method::InversionAsymptotic => inversion(Calibration::Asymptotic),
        Method::InversionBootstrap => inversion(Calibration::Bootstrap),
        Method::Exact => exact(true),
        Method::ExactGrid => exact(false),
        Method::ClopperPearson => Err(Error::Unsupported("Clopper-Pearson is an interval for a single proportion, not for prevalence".into())),
        Method::Functional => Err(Error::Unsupported("functional intervals take two samples, not a survey".into())),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub sizes: SampleSizes,
    /// Base parameter; typically the observed frequencies.
    pub p: [f64; 3],
    pub methods: Vec<MethodSpec>,
    pub settings: MethodSettings,
    pub reps: usize,
    /// `None` runs the base point alone.
    pub sweep: Option<Sweep>,
    pub seed: u64,
    /// Worker threads; `None` uses the global pool.
    pub threads: Option<usize>,
    pub out: Option<PathBuf>,
}

/// Replicates when none are given: fewer when any method is simulation-based
/// or scans a p-value function.
pub fn default_reps(methods: &[MethodSpec]) -> usize {
    let heavy = methods.iter().any(|m| !matches!(m.method, Method::Delta | Method::Projection));
    if heavy {
        10_000
    } else {
        100_000
    }
}

impl ExperimentConfig {
    /// A single-point run at the observed frequencies of `x`.
    ///
    /// Bootstrap replicates default to 1000 per interval and inversion scans walk
    /// outward from the estimate; both keep a coverage run affordable.
    pub fn at_observed(x: &SurveyCounts, methods: Vec<MethodSpec>) -> Self {
        let settings = MethodSettings {
            b: 1000,
            scan: ScanConfig { strategy: ScanStrategy::Local, ..ScanConfig::default() },
            ..MethodSettings::default()
        };
        let reps = default_reps(&methods);
        ExperimentConfig {
            sizes: x.sizes(),
            p: x.frequencies(),
            methods,
            settings,
            reps,
            sweep: None,
            seed: 0,
            threads: None,
            out: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.reps == 0 {
            return Err(Error::invalid("reps must be at least 1"));
        }
        if self.methods.is_empty() {
            return Err(Error::invalid("no methods requested"));
        }
        if let Some(0) = self.threads {
            return Err(Error::invalid("threads must be at least 1"));
        }
        crate::classic::check_alpha(self.settings.alpha)?;
        for m in &self.methods {
            if m.method.uses_statistic() && m.statistic.is_none() {
                return Err(Error::invalid(format!("method {} needs a statistic", m.method)));
            }
            if matches!(m.method, Method::ClopperPearson | Method::Functional) {
                return Err(Error::Unsupported(format!("method {} cannot be used in a coverage run", m.method)));
            }
        }
        if let Some(sweep) = &self.sweep {
            if sweep.values.is_empty() {
                return Err(Error::invalid("sweep grid is empty"));
            }
            if sweep.values.iter().any(|v| !v.is_finite()) {
                return Err(Error::invalid("sweep grid has non-finite values"));
            }
            if sweep.values.windows(2).any(|w| w[0] >= w[1]) {
                return Err(Error::invalid("sweep grid must be strictly increasing"));
            }
            if sweep.axis.is_size() && sweep.values.iter().any(|&v| v < 1.0 || v.fract() != 0.0) {
                return Err(Error::invalid("sample-size grid values must be positive integers"));
            }
        }
        for pt in self.grid()? {
            ParamPoint::from_array(pt.p)?;
        }
        Ok(())
    }

    /// The grid points of the run, in order.
    pub fn grid(&self) -> Result<Vec<GridPoint>> {
        match &self.sweep {
            None => Ok(vec![GridPoint { axis: None, value: None, p: self.p, sizes: self.sizes }]),
            Some(sweep) => sweep
                .values
                .iter()
                .map(|&v| {
                    let i = sweep.axis.index();
                    let mut p = self.p;
                    let mut sizes = self.sizes;
                    if sweep.axis.is_size() {
                        sizes = sizes.with(i, v as u64)?;
                    } else {
                        p[i] = v;
                    }
                    Ok(GridPoint { axis: Some(sweep.axis), value: Some(v), p, sizes })
                })
                .collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridPoint {
    pub axis: Option<SweepAxis>,
    pub value: Option<f64>,
    pub p: [f64; 3],
    pub sizes: SampleSizes,
}

/// Results for one method at one grid point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageRow {
    pub sweep_param: Option<SweepAxis>,
    pub sweep_value: Option<f64>,
    pub method: Method,
    pub statistic: Option<StatisticKind>,
    /// True prevalence at this grid point.
    pub truth: f64,
    pub n_below: u64,
    pub n_covered: u64,
    pub n_above: u64,
    /// Replicates on which the method failed; excluded from the rates.
    pub n_fail: u64,
    pub avg_length: f64,
    /// Ratio of `avg_length` to that of the delta interval, when delta is in the run.
    pub avg_length_ratio_vs_delta: Option<f64>,
    pub seed: u64,
}

impl CoverageRow {
    fn n_ok(&self) -> u64 {
        self.n_below + self.n_covered + self.n_above
    }

    fn rate(&self, k: u64) -> f64 {
        match self.n_ok() {
            0 => f64::NAN,
            n => k as f64 / n as f64,
        }
    }

    pub fn below_rate(&self) -> f64 {
        self.rate(self.n_below)
    }

    pub fn covered_rate(&self) -> f64 {
        self.rate(self.n_covered)
    }

    pub fn above_rate(&self) -> f64 {
        self.rate(self.n_above)
    }

    /// Monte Carlo standard error of the covered rate.
    pub fn covered_se(&self) -> f64 {
        let c = self.covered_rate();
        (c * (1.0 - c) / self.n_ok() as f64).sqrt()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageReport {
    pub rows: Vec<CoverageRow>,
    pub reps: usize,
    pub alpha: f64,
    pub seed: u64,
}

impl CoverageReport {
    pub fn find(&self, method: Method, statistic: Option<StatisticKind>) -> impl Iterator<Item = &CoverageRow> {
        self.rows.iter().filter(move |r| r.method == method && r.statistic == statistic)
    }
}

#[derive(Debug, Clone, Copy)]
enum Outcome {
    Below(f64),
    Covered(f64),
    Above(f64),
    Failed,
}

fn classify(res: Result<IntervalResult>, truth: f64) -> Outcome {
    match res {
        Ok(ci) if ci.lower.is_finite() && ci.upper.is_finite() => {
            let len = ci.length();
            if truth < ci.lower {
                Outcome::Below(len)
            } else if truth > ci.upper {
                Outcome::Above(len)
            } else {
                Outcome::Covered(len)
            }
        }
        _ => Outcome::Failed,
    }
}

const DATA_STREAM: u64 = 0x6461_7461;

/// Runs the experiment described by `cfg`.
pub fn run_coverage(cfg: &ExperimentConfig) -> Result<CoverageReport> {
    cfg.validate()?;
    match cfg.threads {
        Some(t) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(t)
                .build()
                .map_err(|e| Error::Numeric(format!("cannot start worker pool: {e}")))?;
            pool.install(|| run_inner(cfg))
        }
        None => run_inner(cfg),
    }
}

fn run_inner(cfg: &ExperimentConfig) -> Result<CoverageReport> {
    let master = RngSeed::new(cfg.seed);
    let mut rows = Vec::new();
    for (k, pt) in cfg.grid()?.into_iter().enumerate() {
        let truth = prevalence_of(pt.p)?;
        let outcomes: Vec<Vec<Outcome>> = (0..cfg.reps as u64)
            .into_par_iter()
            .map(|r| {
                let stream = master.for_replicate(k as u64, r);
                let x = sample_counts(pt.p, pt.sizes, stream.derive(DATA_STREAM));
                cfg.methods
                    .iter()
                    .enumerate()
                    .map(|(m, spec)| classify(compute_interval(spec, &x, &cfg.settings, stream.derive(m as u64 + 1)), truth))
                    .collect()
            })
            .collect();

        let first = rows.len();
        for (m, spec) in cfg.methods.iter().enumerate() {
            let mut row = CoverageRow {
                sweep_param: pt.axis,
                sweep_value: pt.value,
                method: spec.method,
                statistic: spec.statistic,
                truth,
                n_below: 0,
                n_covered: 0,
                n_above: 0,
                n_fail: 0,
                avg_length: 0.0,
                avg_length_ratio_vs_delta: None,
                seed: cfg.seed,
            };
            let mut total = 0.0;
            for o in outcomes.iter().map(|v| v[m]) {
                match o {
                    Outcome::Below(l) => {
                        row.n_below += 1;
                        total += l;
                    }
                    Outcome::Covered(l) => {
                        row.n_covered += 1;
                        total += l;
                    }
                    Outcome::Above(l) => {
                        row.n_above += 1;
                        total += l;
                    }
                    Outcome::Failed => row.n_fail += 1,
                }
            }
            row.avg_length = if row.n_ok() > 0 { total / row.n_ok() as f64 } else { f64::NAN };
            rows.push(row);
        }
        let delta_len = rows[first..].iter().find(|r| r.method == Method::Delta).map(|r| r.avg_length);
        if let Some(d) = delta_len {
            for row in &mut rows[first..] {
                row.avg_length_ratio_vs_delta = Some(row.avg_length / d);
            }
        }
    }
    Ok(CoverageReport { rows, reps: cfg.reps, alpha: cfg.settings.alpha, seed: cfg.seed })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn paper() -> SurveyCounts {
        SurveyCounts::from_arrays([50, 2, 103], [3300, 401, 122]).unwrap()
    }

    #[test]
    fn rates_partition_replicates() {
        let mut cfg = ExperimentConfig::at_observed(&paper(), vec![MethodSpec::new(Method::Delta), MethodSpec::new(Method::Projection)]);
        cfg.reps = 300;
        let rep = run_coverage(&cfg).unwrap();
        assert_eq!(rep.rows.len(), 2);
        for row in &rep.rows {
            assert_eq!(row.n_below + row.n_covered + row.n_above + row.n_fail, 300);
            let s = row.below_rate() + row.covered_rate() + row.above_rate();
            assert!((s - 1.0).abs() < 1e-12);
        }
        assert_eq!(rep.rows[0].avg_length_ratio_vs_delta, Some(1.0));
        assert!(rep.rows[1].avg_length_ratio_vs_delta.unwrap() > 1.0);
    }

    #[test]
    fn default_grids() {
        let x = paper();
        let p = x.frequencies();
        let s = Sweep::default_for(SweepAxis::P1, p, x.sizes());
        assert_eq!(s.values.len(), 20);
        assert!((s.values[19] - 2.0 * p[0]).abs() < 1e-15);
        assert!(s.values[0] >= p[1]);
        let s = Sweep::default_for(SweepAxis::P2, p, x.sizes());
        assert!((s.values[0] - 0.001).abs() < 1e-15);
        let s = Sweep::default_for(SweepAxis::P3, p, x.sizes());
        assert!(*s.values.last().unwrap() <= 1.0);
        let s = Sweep::default_for(SweepAxis::N3, p, x.sizes());
        assert_eq!(s.values.len(), 20);
        assert_eq!(s.values[9], 122.0);
    }

    #[test]
    fn sweep_outside_model_rejected() {
        let mut cfg = ExperimentConfig::at_observed(&paper(), vec![MethodSpec::new(Method::Delta)]);
        cfg.sweep = Some(Sweep { axis: SweepAxis::P2, values: vec![0.001, 0.9] });
        assert!(matches!(run_coverage(&cfg), Err(Error::OutsideModel(_))));
        cfg.sweep = Some(Sweep { axis: SweepAxis::P2, values: vec![0.003, 0.002] });
        assert!(run_coverage(&cfg).is_err());
    }

    #[test]
    fn inversion_needs_statistic() {
        let cfg = ExperimentConfig::at_observed(&paper(), vec![MethodSpec::new(Method::InversionBootstrap)]);
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn failures_are_counted() {
        // asymptotic inversion of phi_hat is unsupported, so every replicate fails
        let mut cfg = ExperimentConfig::at_observed(&paper(), vec![MethodSpec::inversion(Method::InversionAsymptotic, StatisticKind::PhiHat)]);
        cfg.reps = 5;
        let rep = run_coverage(&cfg).unwrap();
        assert_eq!(rep.rows[0].n_fail, 5);
        assert!(rep.rows[0].covered_rate().is_nan());
    }
}
