//! The three-binomial serosurvey model.
//!
//! Sample 1 is the survey (positives among randomly sampled people), sample 2
//! measures false positives among known negatives, and sample 3 measures true
//! positives among known positives. With `p = (p1, p2, p3)` the three
//! positive rates, prevalence is `(p1 - p2) / (p3 - p2)` on the model space
//! `{p2 <= p1 <= p3, p2 < p3}`.

use rand_distr::{Binomial, Distribution};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::RngSeed;

/// Number of tests run in each of the three samples.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SampleSizes([u64; 3]);

impl SampleSizes {
    pub fn new(n1: u64, n2: u64, n3: u64) -> Result<Self> {
        for (i, n) in [n1, n2, n3].into_iter().enumerate() {
            if n == 0 {
                return Err(Error::invalid(format!("n{} must be positive", i + 1)));
            }
        }
        Ok(SampleSizes([n1, n2, n3]))
    }

    pub fn get(&self, i: usize) -> u64 {
        self.0[i]
    }

    pub fn as_array(&self) -> [u64; 3] {
        self.0
    }

    pub fn as_f64(&self) -> [f64; 3] {
        [self.0[0] as f64, self.0[1] as f64, self.0[2] as f64]
    }

    pub fn with(&self, i: usize, n: u64) -> Result<Self> {
        let mut a = self.0;
        a[i] = n;
        SampleSizes::new(a[0], a[1], a[2])
    }
}

/// Observed positives in each sample.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SurveyCounts {
    x: [u64; 3],
    sizes: SampleSizes,
}

impl SurveyCounts {
    pub fn new(x: [u64; 3], sizes: SampleSizes) -> Result<Self> {
        for i in 0..3 {
            if x[i] > sizes.get(i) {
                return Err(Error::invalid(format!("x{} exceeds n{}", i + 1, i + 1)));
            }
        }
        Ok(SurveyCounts { x, sizes })
    }

    /// Convenience constructor from plain arrays.
    pub fn from_arrays(x: [u64; 3], n: [u64; 3]) -> Result<Self> {
        SurveyCounts::new(x, SampleSizes::new(n[0], n[1], n[2])?)
    }

    pub fn x(&self) -> [u64; 3] {
        self.x
    }

    pub fn get(&self, i: usize) -> u64 {
        self.x[i]
    }

    pub fn sizes(&self) -> SampleSizes {
        self.sizes
    }

    /// Empirical frequencies `x_i / n_i`.
    pub fn frequencies(&self) -> [f64; 3] {
        let n = self.sizes.as_f64();
        [self.x[0] as f64 / n[0], self.x[1] as f64 / n[1], self.x[2] as f64 / n[2]]
    }
}

/// A probability triple in the model space.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParamPoint([f64; 3]);

impl ParamPoint {
    /// Membership is checked with exact comparisons; callers that need slack clamp first.
    pub fn new(p1: f64, p2: f64, p3: f64) -> Result<Self> {
        let p = [p1, p2, p3];
        if p.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::OutsideModel(format!("({p1}, {p2}, {p3}) has a component outside [0, 1]")));
        }
        if !(p2 <= p1 && p1 <= p3 && p2 < p3) {
            return Err(Error::OutsideModel(format!("({p1}, {p2}, {p3}) violates p2 <= p1 <= p3, p2 < p3")));
        }
        Ok(ParamPoint(p))
    }

    pub fn from_array(p: [f64; 3]) -> Result<Self> {
        ParamPoint::new(p[0], p[1], p[2])
    }

    pub fn as_array(&self) -> [f64; 3] {
        self.0
    }

    pub fn get(&self, i: usize) -> f64 {
        self.0[i]
    }

    pub fn prevalence(&self) -> f64 {
        let [p1, p2, p3] = self.0;
        ((p1 - p2) / (p3 - p2)).clamp(0.0, 1.0)
    }
}

/// `(p1 - p2) / (p3 - p2)` for a point of the model space.
pub fn prevalence_of(p: [f64; 3]) -> Result<f64> {
    Ok(ParamPoint::from_array(p)?.prevalence())
}

/// Prevalence of a closure point, `None` on the degenerate edge `p2 = p3`.
pub(crate) fn prevalence_or_none(p: [f64; 3]) -> Option<f64> {
    let d = p[2] - p[1];
    if d > 0.0 {
        Some(((p[0] - p[1]) / d).clamp(0.0, 1.0))
    } else {
        None
    }
}

/// Coefficients `b` with `b . p = 0` exactly when prevalence equals `pi0`.
pub fn b_vector(pi0: f64) -> [f64; 3] {
    [1.0, -(1.0 - pi0), -pi0]
}

/// Which pair of positive rates is treated as the nuisance parameter.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub enum NuisanceChoice {
    /// Survey and sensitivity rates; `p2` is implied by prevalence.
    #[default]
    P1P3,
    /// False-positive and sensitivity rates; `p1` is implied by prevalence.
    P2P3,
}

impl NuisanceChoice {
    /// Indices of the two nuisance components.
    pub fn indices(&self) -> (usize, usize) {
        match self {
            NuisanceChoice::P1P3 => (0, 2),
            NuisanceChoice::P2P3 => (1, 2),
        }
    }
}

/// Prevalence together with a two-component nuisance parameter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrevalenceSplit {
    pub pi: f64,
    pub nuisance: (f64, f64),
    pub which: NuisanceChoice,
}

impl PrevalenceSplit {
    pub fn split(p: ParamPoint, which: NuisanceChoice) -> Self {
        let (i, j) = which.indices();
        PrevalenceSplit { pi: p.prevalence(), nuisance: (p.get(i), p.get(j)), which }
    }

    pub fn assemble(&self) -> Result<ParamPoint> {
        let pi = self.pi;
        let (u, v) = self.nuisance;
        match self.which {
            NuisanceChoice::P2P3 => ParamPoint::new(u * (1.0 - pi) + v * pi, u, v),
            NuisanceChoice::P1P3 => {
                if pi >= 1.0 {
                    if u != v {
                        return Err(Error::OutsideModel("prevalence 1 requires p1 = p3".into()));
                    }
                    return Err(Error::OutsideModel("p2 is not identified at prevalence 1".into()));
                }
                let p2 = (u - pi * v) / (1.0 - pi);
                ParamPoint::new(u, p2, v)
            }
        }
    }
}

/// Three independent binomial draws at success rates `p`.
///
/// `p` need not lie in the model space (bootstrap draws may be taken at any
/// probability triple); components are clamped to `[0, 1]`.
pub fn sample_counts(p: [f64; 3], sizes: SampleSizes, seed: RngSeed) -> SurveyCounts {
    let mut rng = seed.rng();
    draw_counts(p, sizes, &mut rng)
}

pub(crate) fn draw_counts<R: rand::Rng + ?Sized>(p: [f64; 3], sizes: SampleSizes, rng: &mut R) -> SurveyCounts {
    let mut x = [0u64; 3];
    for i in 0..3 {
        let pi = p[i].clamp(0.0, 1.0);
        let n = sizes.get(i);
        x[i] = match Binomial::new(n, pi) {
            Ok(d) => d.sample(rng),
            Err(_) => 0,
        };
    }
    SurveyCounts { x, sizes }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn prevalence_examples() {
        let pi = prevalence_of([0.015152, 0.004988, 0.844262]).unwrap();
        assert_eq!((pi * 1000.0).round() / 1000.0, 0.012);
        assert_eq!(prevalence_of([0.0, 0.0, 1.0]).unwrap(), 0.0);
        assert_eq!(prevalence_of([0.5, 0.1, 0.9]).unwrap(), 0.5);
    }

    #[test]
    fn rejects_points_outside_model() {
        assert!(prevalence_of([0.3, 0.3, 0.3]).is_err());
        assert!(prevalence_of([0.05, 0.1, 0.9]).is_err());
        assert!(prevalence_of([0.95, 0.1, 0.9]).is_err());
        assert!(prevalence_of([0.5, -0.1, 0.9]).is_err());
    }

    #[test]
    fn b_vector_examples() {
        assert_eq!(b_vector(0.0), [1.0, -1.0, 0.0]);
        assert_eq!(b_vector(1.0), [1.0, 0.0, -1.0]);
        let b = b_vector(0.012);
        assert_eq!(b[0], 1.0);
        assert!((b[1] + 0.988).abs() < 1e-15);
        assert_eq!(b[2], -0.012);
    }

    #[test]
    fn count_validation_messages() {
        let err = SurveyCounts::from_arrays([5, 2, 3], [4, 10, 10]).unwrap_err();
        assert_eq!(err.to_string(), "x1 exceeds n1");
        assert!(SampleSizes::new(0, 1, 1).is_err());
    }

    #[test]
    fn degenerate_sampling() {
        let n = SampleSizes::new(30, 40, 50).unwrap();
        let x = sample_counts([0.0, 0.0, 1.0], n, RngSeed::new(9));
        assert_eq!(x.x(), [0, 0, 50]);
        let x = sample_counts([1.0, 1.0, 1.0], n, RngSeed::new(9));
        assert_eq!(x.x(), [30, 40, 50]);
    }

    #[test]
    fn sampling_is_reproducible() {
        let n = SampleSizes::new(3300, 401, 122).unwrap();
        let p = [50.0 / 3300.0, 2.0 / 401.0, 103.0 / 122.0];
        let a = sample_counts(p, n, RngSeed::with_stream(2024, 1));
        let b = sample_counts(p, n, RngSeed::with_stream(2024, 1));
        assert_eq!(a, b);
    }

    #[test]
    fn split_round_trip() {
        let p = ParamPoint::new(0.3, 0.1, 0.9).unwrap();
        for which in [NuisanceChoice::P1P3, NuisanceChoice::P2P3] {
            let s = PrevalenceSplit::split(p, which);
            let q = s.assemble().unwrap();
            for i in 0..3 {
                assert!((p.get(i) - q.get(i)).abs() < 1e-15);
            }
        }
    }

    proptest! {
        #[test]
        fn prevalence_monotone(
            p2 in 0.0f64..0.5, gap in 0.05f64..0.5, t in 0.0f64..1.0, d in 0.0f64..0.05
        ) {
            let p3 = p2 + gap;
            let p1 = p2 + t * gap;
            let base = prevalence_of([p1, p2, p3]).unwrap();
            if p1 + d <= p3 {
                prop_assert!(prevalence_of([p1 + d, p2, p3]).unwrap() >= base);
            }
            if p2 + d <= p1 && p2 + d < p3 {
                prop_assert!(prevalence_of([p1, p2 + d, p3]).unwrap() <= base);
            }
            if p3 + d <= 1.0 {
                prop_assert!(prevalence_of([p1, p2, p3 + d]).unwrap() <= base);
            }
        }

        #[test]
        fn cdf_difference_is_pmf(n in 1u64..200, p in 0.0f64..1.0, x in -2i64..202) {
            let diff = crate::binomial_cdf(n, p, x, false) - crate::binomial_cdf(n, p, x, true);
            prop_assert!((diff - crate::binomial_pmf(n, p, x)).abs() < 1e-12);
        }
    }
}
