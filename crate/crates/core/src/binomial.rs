//! Binomial probability kernels.
//!
//! Point probabilities use Loader's saddle-point expansion, which keeps full
//! relative accuracy for the sample sizes seen in serosurveys (thousands of
//! trials). Cumulative probabilities sum the shorter tail outward from the
//! requested point so that both tails are accurate in absolute terms.

use std::f64::consts::PI;

const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

/// Error of Stirling's approximation to `ln(n!)`.
fn stirlerr(n: f64) -> f64 {
    const S0: f64 = 1.0 / 12.0;
    const S1: f64 = 1.0 / 360.0;
    const S2: f64 = 1.0 / 1260.0;
    const S3: f64 = 1.0 / 1680.0;
    const S4: f64 = 1.0 / 1188.0;
    if n <= 15.0 {
        return statrs::function::gamma::ln_gamma(n + 1.0) - (n + 0.5) * n.ln() + n - LN_SQRT_2PI;
    }
    let nn = n * n;
    if n > 500.0 {
        return (S0 - S1 / nn) / n;
    }
    if n > 80.0 {
        return (S0 - (S1 - S2 / nn) / nn) / n;
    }
    if n > 35.0 {
        return (S0 - (S1 - (S2 - S3 / nn) / nn) / nn) / n;
    }
    (S0 - (S1 - (S2 - (S3 - S4 / nn) / nn) / nn) / nn) / n
}

/// Deviance term `x ln(x / np) + np - x`, evaluated without cancellation.
fn bd0(x: f64, np: f64) -> f64 {
    if (x - np).abs() < 0.1 * (x + np) {
        let v = (x - np) / (x + np);
        let mut s = (x - np) * v;
        let mut ej = 2.0 * x * v;
        let v2 = v * v;
        for j in 1..1000 {
            ej *= v2;
            let s1 = s + ej / (2 * j + 1) as f64;
            if s1 == s {
                return s1;
            }
            s = s1;
        }
        return s;
    }
    x * (x / np).ln() + np - x
}

/// `P{X = x}` for `X ~ Binomial(n, p)`, with `q = 1 - p` supplied separately.
fn dbinom_raw(x: u64, n: u64, p: f64, q: f64) -> f64 {
    if p == 0.0 {
        return if x == 0 { 1.0 } else { 0.0 };
    }
    if q == 0.0 {
        return if x == n { 1.0 } else { 0.0 };
    }
    let nf = n as f64;
    if x == 0 {
        let lc = if p < 0.1 { -bd0(nf, nf * q) - nf * p } else { nf * q.ln() };
        return lc.exp();
    }
    if x == n {
        let lc = if q < 0.1 { -bd0(nf, nf * p) - nf * q } else { nf * p.ln() };
        return lc.exp();
    }
    let xf = x as f64;
    let lc = stirlerr(nf) - stirlerr(xf) - stirlerr(nf - xf) - bd0(xf, nf * p) - bd0(nf - xf, nf * q);
    let lf = (2.0 * PI).ln() + xf.ln() + (-xf / nf).ln_1p();
    (lc - 0.5 * lf).exp()
}

/// Probability mass `P{X = x}` of a Binomial(n, p) variable.
pub fn binomial_pmf(n: u64, p: f64, x: i64) -> f64 {
    if x < 0 || x as u64 > n {
        return 0.0;
    }
    dbinom_raw(x as u64, n, p, 1.0 - p)
}

/// `P{X <= x}`, or `P{X < x}` when `strict`, for `X ~ Binomial(n, p)`.
///
/// Arguments outside `0..=n` saturate to 0 or 1.
pub fn binomial_cdf(n: u64, p: f64, x: i64, strict: bool) -> f64 {
    let x = if strict { x - 1 } else { x };
    if x < 0 {
        return 0.0;
    }
    if x as u64 >= n {
        return 1.0;
    }
    let x = x as u64;
    if p <= 0.0 {
        return 1.0;
    }
    if p >= 1.0 {
        return 0.0;
    }
    let q = 1.0 - p;
    let mean = n as f64 * p;
    if (x as f64) < mean {
        lower_tail(n, p, q, x)
    } else {
        1.0 - upper_tail(n, p, q, x + 1)
    }
}

/// `P{X <= x}` summed downward from `x`.
fn lower_tail(n: u64, p: f64, q: f64, x: u64) -> f64 {
    let mut term = dbinom_raw(x, n, p, q);
    let mut sum = term;
    let odds = q / p;
    let mut k = x;
    while k > 0 {
        term *= k as f64 / (n - k + 1) as f64 * odds;
        sum += term;
        if term <= sum * 1e-18 {
            break;
        }
        k -= 1;
    }
    sum
}

/// `P{X >= x}` summed upward from `x`.
fn upper_tail(n: u64, p: f64, q: f64, x: u64) -> f64 {
    let mut term = dbinom_raw(x, n, p, q);
    let mut sum = term;
    let odds = p / q;
    let mut k = x;
    while k < n {
        term *= (n - k) as f64 / (k + 1) as f64 * odds;
        sum += term;
        if term <= sum * 1e-18 {
            break;
        }
        k += 1;
    }
    sum
}

/// Contiguous block of binomial probabilities `pmf[k - lo]` for `k` in
/// `lo..lo + pmf.len()`, together with a rigorous upper bound on the mass
/// left outside the block.
#[derive(Debug, Clone)]
pub(crate) struct BinomialWindow {
    pub lo: u64,
    pub pmf: Vec<f64>,
    #[cfg_attr(not(test), allow(dead_code))]
    pub tail_bound: f64,
}

impl BinomialWindow {
    /// Smallest window around the mode whose excluded mass is at most `eps`.
    pub fn new(n: u64, p: f64, eps: f64) -> Self {
        if p <= 0.0 {
            return BinomialWindow { lo: 0, pmf: vec![1.0], tail_bound: 0.0 };
        }
        if p >= 1.0 {
            return BinomialWindow { lo: n, pmf: vec![1.0], tail_bound: 0.0 };
        }
        let q = 1.0 - p;
        let mode = (((n + 1) as f64) * p).floor().min(n as f64) as u64;
        let center = dbinom_raw(mode, n, p, q);
        let half = 0.5 * eps;

        // Upward: ratio pmf(k+1)/pmf(k) = (n-k)/(k+1) * p/q decreases in k.
        let mut up = Vec::new();
        let mut upper_tail = 0.0;
        let mut k = mode;
        let mut term = center;
        while k < n {
            let ratio = (n - k) as f64 / (k + 1) as f64 * (p / q);
            let next = term * ratio;
            let next_ratio = if k + 1 < n { (n - k - 1) as f64 / (k + 2) as f64 * (p / q) } else { 0.0 };
            if next_ratio < 1.0 {
                let bound = next / (1.0 - next_ratio);
                if bound <= half {
                    upper_tail = bound;
                    break;
                }
            }
            up.push(next);
            term = next;
            k += 1;
        }

        // Downward: ratio pmf(k-1)/pmf(k) = k/(n-k+1) * q/p decreases as k falls.
        let mut down = Vec::new();
        let mut lower_tail = 0.0;
        let mut k = mode;
        let mut term = center;
        while k > 0 {
            let ratio = k as f64 / (n - k + 1) as f64 * (q / p);
            let next = term * ratio;
            let next_ratio = if k > 1 { (k - 1) as f64 / (n - k + 2) as f64 * (q / p) } else { 0.0 };
            if next_ratio < 1.0 {
                let bound = next / (1.0 - next_ratio);
                if bound <= half {
                    lower_tail = bound;
                    break;
                }
            }
            down.push(next);
            term = next;
            k -= 1;
        }

        let lo = mode - down.len() as u64;
        let mut pmf = Vec::with_capacity(down.len() + 1 + up.len());
        pmf.extend(down.into_iter().rev());
        pmf.push(center);
        pmf.extend(up);
        let kept: f64 = pmf.iter().sum();
        // Either bound is valid; the second is tight up to summation rounding.
        let tail_bound = (lower_tail + upper_tail).min((1.0 - kept).max(0.0) + 1e-13);
        BinomialWindow { lo, pmf, tail_bound }
    }

    #[cfg_attr(not(test), allow(dead_code))]
    pub fn hi(&self) -> u64 {
        self.lo + self.pmf.len() as u64 - 1
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn direct_pmf(n: u64, p: f64, x: u64) -> f64 {
        // log-space product, independent of the saddle-point route
        let mut lc = 0.0;
        for i in 0..x {
            lc += ((n - i) as f64).ln() - ((i + 1) as f64).ln();
        }
        (lc + x as f64 * p.ln() + (n - x) as f64 * (1.0 - p).ln()).exp()
    }

    #[test]
    fn small_enumerations() {
        assert!((binomial_cdf(2, 0.5, 1, false) - 0.75).abs() < 1e-15);
        assert!((binomial_cdf(2, 0.5, 1, true) - 0.25).abs() < 1e-15);
        assert_eq!(binomial_cdf(5, 0.3, -1, false), 0.0);
        assert_eq!(binomial_cdf(5, 0.3, 5, false), 1.0);
        assert_eq!(binomial_cdf(5, 0.3, 0, true), 0.0);
    }

    #[test]
    fn degenerate_probabilities() {
        assert_eq!(binomial_pmf(7, 0.0, 0), 1.0);
        assert_eq!(binomial_pmf(7, 1.0, 7), 1.0);
        assert_eq!(binomial_cdf(7, 0.0, 0, false), 1.0);
        assert_eq!(binomial_cdf(7, 1.0, 6, false), 0.0);
    }

    #[test]
    fn pmf_matches_direct_product() {
        for &(n, p) in &[(10u64, 0.3), (401, 0.004988), (3300, 0.015152), (122, 0.844262)] {
            for x in 0..=n.min(200) {
                let a = binomial_pmf(n, p, x as i64);
                let b = direct_pmf(n, p, x);
                assert!((a - b).abs() <= 1e-12 * b.max(1e-300) + 1e-300, "n={n} p={p} x={x}: {a} vs {b}");
            }
        }
    }

    #[test]
    fn pmf_sums_to_one() {
        for &(n, p) in &[(1u64, 0.5), (30, 0.01), (401, 0.004988), (3300, 0.5)] {
            let s: f64 = (0..=n as i64).map(|x| binomial_pmf(n, p, x)).sum();
            assert!((s - 1.0).abs() < 1e-10, "n={n} p={p} sum={s}");
        }
    }

    #[test]
    fn window_bounds_excluded_mass() {
        for &(n, p) in &[(3300u64, 0.015), (401, 0.005), (122, 0.84), (5, 0.5), (10, 0.999)] {
            let w = BinomialWindow::new(n, p, 1e-10);
            let outside: f64 = (0..=n)
                .filter(|&k| k < w.lo || k > w.hi())
                .map(|k| binomial_pmf(n, p, k as i64))
                .sum();
            assert!(outside <= w.tail_bound + 1e-15, "n={n} p={p}: {outside} > {}", w.tail_bound);
            assert!(w.tail_bound <= 1e-10);
        }
    }
}
