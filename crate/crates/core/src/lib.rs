//! Confidence intervals for seroprevalence from a three-sample antibody survey.
//!
//! The data are positives `x = (x1, x2, x3)` out of `n = (n1, n2, n3)` tests in
//! a survey sample, a sample of known negatives and a sample of known
//! positives. Prevalence is `(p1 - p2) / (p3 - p2)`.

pub mod binomial;
pub mod bootstrap;
pub mod classic;
pub mod error;
pub mod estimation;
pub mod exact;
pub mod harness;
pub mod inversion;
pub mod model;
pub mod normal;
pub mod rng;
pub mod statistics;

pub use binomial::{binomial_cdf, binomial_pmf};
pub use error::{Error, Result};
pub use estimation::{log_likelihood, mle_constrained, mle_unconstrained, ConstrainedMleResult, MleCase, MleResult};
pub use model::{b_vector, prevalence_of, sample_counts, NuisanceChoice, ParamPoint, PrevalenceSplit, SampleSizes, SurveyCounts};
pub use normal::{chi2_1_sf, norm_cdf, norm_quantile};
pub use rng::RngSeed;
pub use bootstrap::{bca_constants, bca_interval, bootstrap_distribution, percentile_interval, BcaConstants, BootstrapSample};
pub use classic::{clopper_pearson, delta_interval, delta_variance, projection_interval, DeltaVariance, IntervalResult, Method, Side};
pub use statistics::{evaluate_statistic, phi_variance, BootConfig, StatAux, StatValue, StatisticKind};
pub use inversion::{invert, p_values_asymptotic, p_values_bootstrap, Calibration, InversionConfig, InversionResult, PValuePair, ScanConfig, ScanStrategy};
pub use exact::{exact_interval, exact_p_values, ExactConfig};
pub use harness::{compute_interval, run_coverage, CoverageReport, CoverageRow, ExperimentConfig, MethodSettings, MethodSpec, Sweep, SweepAxis};
