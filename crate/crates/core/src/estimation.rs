//! Maximum likelihood over the model space, with and without a prevalence
//! restriction.
//!
//! The unrestricted estimate is the weighted isotonic regression of the
//! empirical frequencies along the chain `p2 <= p1 <= p3`. The restricted
//! estimate eliminates `p1 = p2 (1 - pi0) + p3 pi0` and maximizes the
//! resulting concave function of `(p2, p3)` over the triangle
//! `0 <= p2 <= p3 <= 1` with a damped Newton iteration, falling back to the
//! three edges of the triangle when the maximum is on the boundary.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{prevalence_or_none, SurveyCounts};

/// Which pooling pattern produced the unrestricted estimate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum MleCase {
    /// Empirical frequencies already ordered.
    Interior,
    /// Survey and false-positive samples pooled (`p1 = p2`).
    Pool12,
    /// Survey and sensitivity samples pooled (`p1 = p3`).
    Pool13,
    /// All three samples pooled.
    PoolAll,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MleResult {
    /// Point in the closure of the model space.
    pub p_hat: [f64; 3],
    pub log_lik: f64,
    pub case: MleCase,
}

impl MleResult {
    /// Prevalence at the estimate; `None` when `p2 = p3`.
    pub fn prevalence(&self) -> Option<f64> {
        prevalence_or_none(self.p_hat)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConstrainedMleResult {
    pub p_hat: [f64; 3],
    pub pi0: f64,
    pub log_lik: f64,
    /// Norm of the projected gradient of the reduced problem at the solution.
    pub kkt_residual: f64,
    /// The maximizer sits on the edge `p2 = p3`, where prevalence is undefined.
    pub degenerate: bool,
}

/// `x ln q + (n - x) ln(1 - q)` with the convention `0 ln 0 = 0`.
#[inline]
fn kernel(x: f64, m: f64, q: f64) -> f64 {
    let mut f = 0.0;
    if x > 0.0 {
        f += x * q.ln();
    }
    if m > 0.0 {
        f += m * (-q).ln_1p();
    }
    f
}

/// First and second derivative of [`kernel`] in `q`.
#[inline]
fn kernel_derivs(x: f64, m: f64, q: f64) -> (f64, f64) {
    let mut d = 0.0;
    let mut h = 0.0;
    if x > 0.0 {
        d += x / q;
        h -= x / (q * q);
    }
    if m > 0.0 {
        let r = 1.0 - q;
        d -= m / r;
        h -= m / (r * r);
    }
    (d, h)
}

/// Log-likelihood without the binomial coefficients.
pub(crate) fn kernel_log_likelihood(p: [f64; 3], x: &SurveyCounts) -> f64 {
    let n = x.sizes().as_f64();
    let mut total = 0.0;
    for i in 0..3 {
        let xi = x.get(i) as f64;
        total += kernel(xi, n[i] - xi, p[i]);
    }
    total
}

fn log_binomial_constant(x: &SurveyCounts) -> f64 {
    (0..3).map(|i| statrs::function::factorial::ln_binomial(x.sizes().get(i), x.get(i))).sum()
}

/// Log-likelihood of the three binomial samples at `p`, including the binomial
/// coefficients. Impossible outcomes give `-inf`.
pub fn log_likelihood(p: [f64; 3], x: &SurveyCounts) -> f64 {
    let k = kernel_log_likelihood(p, x);
    if k == f64::NEG_INFINITY {
        return k;
    }
    k + log_binomial_constant(x)
}

/// Unrestricted maximum likelihood estimate over the closure of the model space.
pub fn mle_unconstrained(x: &SurveyCounts) -> MleResult {
    let (p_hat, case) = isotonic_fit(x);
    MleResult { p_hat, log_lik: log_likelihood(p_hat, x), case }
}

pub(crate) fn isotonic_fit(x: &SurveyCounts) -> ([f64; 3], MleCase) {
    let n = x.sizes().as_f64();
    let xs = [x.get(0) as f64, x.get(1) as f64, x.get(2) as f64];
    let f = [xs[0] / n[0], xs[1] / n[1], xs[2] / n[2]];
    if f[1] <= f[0] && f[0] <= f[2] {
        return (f, MleCase::Interior);
    }
    let pool12 = (xs[0] + xs[1]) / (n[0] + n[1]);
    let pool13 = (xs[0] + xs[2]) / (n[0] + n[2]);
    let all = (xs[0] + xs[1] + xs[2]) / (n[0] + n[1] + n[2]);
    // Pool-adjacent-violators along the chain p2 <= p1 <= p3.
    if f[0] < f[1] {
        if pool12 <= f[2] {
            ([pool12, pool12, f[2]], MleCase::Pool12)
        } else {
            ([all, all, all], MleCase::PoolAll)
        }
    } else if f[1] <= pool13 {
        ([pool13, f[1], pool13], MleCase::Pool13)
    } else {
        ([all, all, all], MleCase::PoolAll)
    }
}

/// Reduced problem in `(u, v) = (p2, p3)` at fixed prevalence.
struct Reduced {
    pi0: f64,
    x: [f64; 3],
    m: [f64; 3],
}

impl Reduced {
    fn new(counts: &SurveyCounts, pi0: f64) -> Self {
        let n = counts.sizes().as_f64();
        let x = [counts.get(0) as f64, counts.get(1) as f64, counts.get(2) as f64];
        Reduced { pi0, x, m: [n[0] - x[0], n[1] - x[1], n[2] - x[2]] }
    }

    #[inline]
    fn p1(&self, u: f64, v: f64) -> f64 {
        (u + self.pi0 * (v - u)).clamp(u, v)
    }

    #[inline]
    fn value(&self, u: f64, v: f64) -> f64 {
        kernel(self.x[0], self.m[0], self.p1(u, v)) + kernel(self.x[1], self.m[1], u) + kernel(self.x[2], self.m[2], v)
    }

    /// Gradient and Hessian `(gu, gv, huu, huv, hvv)`.
    #[inline]
    fn derivs(&self, u: f64, v: f64) -> (f64, f64, f64, f64, f64) {
        let a = 1.0 - self.pi0;
        let b = self.pi0;
        let (d1, h1) = kernel_derivs(self.x[0], self.m[0], self.p1(u, v));
        let (d2, h2) = kernel_derivs(self.x[1], self.m[1], u);
        let (d3, h3) = kernel_derivs(self.x[2], self.m[2], v);
        (a * d1 + d2, b * d1 + d3, a * a * h1 + h2, a * b * h1, b * b * h1 + h3)
    }

    fn triple(&self, u: f64, v: f64) -> [f64; 3] {
        [self.p1(u, v), u, v]
    }
}

#[derive(Debug, Clone, Copy)]
struct Candidate {
    u: f64,
    v: f64,
    value: f64,
    residual: f64,
}

/// Maximize a concave function on `[a, b]` given its derivative pair `(g', g'')`.
fn maximize_1d(a: f64, b: f64, deriv: impl Fn(f64) -> (f64, f64)) -> (f64, f64) {
    let (ga, _) = deriv(a);
    if !(ga > 0.0) {
        return (a, 0.0);
    }
    let (gb, _) = deriv(b);
    if !(gb < 0.0) {
        return (b, 0.0);
    }
    let (mut lo, mut hi) = (a, b);
    let mut t = 0.5 * (a + b);
    let mut g = 0.0;
    for _ in 0..200 {
        let (gt, ht) = deriv(t);
        g = gt;
        if gt == 0.0 {
            break;
        }
        if gt > 0.0 {
            lo = t;
        } else {
            hi = t;
        }
        let newton = t - gt / ht;
        let next = if ht < 0.0 && newton > lo && newton < hi { newton } else { 0.5 * (lo + hi) };
        if (next - t).abs() <= 1e-16 * (1.0 + t.abs()) || hi - lo <= 1e-17 {
            t = next;
            break;
        }
        t = next;
    }
    (t, g.abs())
}

impl Reduced {
    /// Best point on the edge `u = 0` (only finite when `x2 = 0`).
    fn edge_u0(&self) -> Candidate {
        let b = self.pi0;
        let (v, res) = maximize_1d(0.0, 1.0, |v| {
            let (d1, h1) = kernel_derivs(self.x[0], self.m[0], b * v);
            let (d3, h3) = kernel_derivs(self.x[2], self.m[2], v);
            (b * d1 + d3, b * b * h1 + h3)
        });
        Candidate { u: 0.0, v, value: self.value(0.0, v), residual: res }
    }

    /// Best point on the edge `v = 1` (only finite when `x3 = n3`).
    fn edge_v1(&self) -> Candidate {
        let a = 1.0 - self.pi0;
        let (u, res) = maximize_1d(0.0, 1.0, |u| {
            let (d1, h1) = kernel_derivs(self.x[0], self.m[0], self.p1(u, 1.0));
            let (d2, h2) = kernel_derivs(self.x[1], self.m[1], u);
            (a * d1 + d2, a * a * h1 + h2)
        });
        Candidate { u, v: 1.0, value: self.value(u, 1.0), residual: res }
    }

    /// Best point on the diagonal `u = v` (all three rates equal).
    fn edge_diag(&self) -> Candidate {
        let s = (self.x[0] + self.x[1] + self.x[2]) / (self.x[0] + self.x[1] + self.x[2] + self.m[0] + self.m[1] + self.m[2]);
        Candidate { u: s, v: s, value: self.value(s, s), residual: 0.0 }
    }

    fn kkt_u0(&self, c: &Candidate) -> bool {
        let (gu, ..) = self.derivs(c.u, c.v);
        c.value.is_finite() && gu <= 0.0
    }

    fn kkt_v1(&self, c: &Candidate) -> bool {
        let (_, gv, ..) = self.derivs(c.u, c.v);
        c.value.is_finite() && gv >= 0.0
    }

    fn kkt_diag(&self, c: &Candidate) -> bool {
        if !c.value.is_finite() {
            return false;
        }
        if c.u <= 0.0 || c.v >= 1.0 {
            return true;
        }
        let (gu, gv, ..) = self.derivs(c.u, c.v);
        gv - gu <= 0.0
    }

    fn start(&self) -> (f64, f64) {
        let n2 = self.x[1] + self.m[1];
        let n3 = self.x[2] + self.m[2];
        let mut u = (self.x[1] + 0.5) / (n2 + 1.0);
        let mut v = (self.x[2] + 0.5) / (n3 + 1.0);
        if v - u < 1e-3 {
            let mid = (0.5 * (u + v)).clamp(1e-3, 1.0 - 1e-3);
            u = (mid - 5e-4).max(1e-6);
            v = (mid + 5e-4).min(1.0 - 1e-6);
        }
        (u, v)
    }

    /// Damped Newton in the open triangle. Returns the final iterate and
    /// whether it satisfied the stationarity test.
    fn newton(&self) -> (Candidate, bool) {
        let (mut u, mut v) = self.start();
        let mut f = self.value(u, v);
        for _ in 0..100 {
            let (gu, gv, huu, huv, hvv) = self.derivs(u, v);
            let gnorm = gu.abs().max(gv.abs());
            let det = huu * hvv - huv * huv;
            if !(det > 0.0) {
                return (Candidate { u, v, value: f, residual: gnorm }, false);
            }
            // d = -H^{-1} g
            let du = -(hvv * gu - huv * gv) / det;
            let dv = -(huu * gv - huv * gu) / det;
            let decrement = gu * du + gv * dv;
            if gnorm <= 1e-10 || decrement <= 1e-24 {
                return (Candidate { u, v, value: f, residual: gnorm }, true);
            }
            let mut t_max = f64::INFINITY;
            if du < 0.0 {
                t_max = t_max.min(-u / du);
            }
            if dv > 0.0 {
                t_max = t_max.min((1.0 - v) / dv);
            }
            if dv - du < 0.0 {
                t_max = t_max.min((v - u) / (du - dv));
            }
            let mut t = if t_max <= 1.0 { 0.99 * t_max } else { 1.0 };
            let mut accepted = false;
            for _ in 0..60 {
                let (nu, nv) = (u + t * du, v + t * dv);
                if nu > 0.0 && nv < 1.0 && nu < nv {
                    let nf = self.value(nu, nv);
                    if nf >= f + 1e-4 * t * decrement {
                        u = nu;
                        v = nv;
                        f = nf;
                        accepted = true;
                        break;
                    }
                }
                t *= 0.5;
            }
            if !accepted {
                // No ascent possible at working precision.
                let (gu, gv, ..) = self.derivs(u, v);
                let gnorm = gu.abs().max(gv.abs());
                let scale = self.x.iter().chain(self.m.iter()).sum::<f64>();
                return (Candidate { u, v, value: f, residual: gnorm }, gnorm <= 1e-7 * scale);
            }
        }
        let (gu, gv, ..) = self.derivs(u, v);
        (Candidate { u, v, value: f, residual: gu.abs().max(gv.abs()) }, false)
    }
}

/// Maximum likelihood estimate subject to prevalence `pi0`.
pub fn mle_constrained(x: &SurveyCounts, pi0: f64) -> Result<ConstrainedMleResult> {
    if !(0.0..=1.0).contains(&pi0) {
        return Err(Error::invalid(format!("pi0 = {pi0} is outside [0, 1]")));
    }
    let (p, residual) = solve_constrained(x, pi0);
    let degenerate = p[1] >= p[2];
    Ok(ConstrainedMleResult { p_hat: p, pi0, log_lik: log_likelihood(p, x), kkt_residual: residual, degenerate })
}

/// Core solver returning the maximizer and its KKT residual.
pub(crate) fn solve_constrained(x: &SurveyCounts, pi0: f64) -> ([f64; 3], f64) {
    let n = x.sizes().as_f64();
    let xs = [x.get(0) as f64, x.get(1) as f64, x.get(2) as f64];
    let all = (xs[0] + xs[1] + xs[2]) / (n[0] + n[1] + n[2]);
    if pi0 == 0.0 {
        let q = (xs[0] + xs[1]) / (n[0] + n[1]);
        let r = xs[2] / n[2];
        return if q <= r { ([q, q, r], 0.0) } else { ([all, all, all], 0.0) };
    }
    if pi0 == 1.0 {
        let r = (xs[0] + xs[2]) / (n[0] + n[2]);
        let q = xs[1] / n[1];
        return if q <= r { ([r, q, r], 0.0) } else { ([all, all, all], 0.0) };
    }

    let red = Reduced::new(x, pi0);
    let mut candidates: Vec<Candidate> = Vec::with_capacity(4);
    let mut tried = [false; 3];

    if x.get(1) == 0 {
        let c = red.edge_u0();
        tried[0] = true;
        if red.kkt_u0(&c) {
            return (red.triple(c.u, c.v), c.residual);
        }
        candidates.push(c);
    }
    if x.get(2) == x.sizes().get(2) {
        let c = red.edge_v1();
        tried[1] = true;
        if red.kkt_v1(&c) {
            return (red.triple(c.u, c.v), c.residual);
        }
        candidates.push(c);
    }
    if xs[1] / n[1] >= xs[2] / n[2] {
        let c = red.edge_diag();
        tried[2] = true;
        if red.kkt_diag(&c) {
            return (red.triple(c.u, c.v), c.residual);
        }
        candidates.push(c);
    }

    let (interior, converged) = red.newton();
    if converged {
        return (red.triple(interior.u, interior.v), interior.residual);
    }
    candidates.push(interior);
    if !tried[0] {
        candidates.push(red.edge_u0());
    }
    if !tried[1] {
        candidates.push(red.edge_v1());
    }
    if !tried[2] {
        candidates.push(red.edge_diag());
    }
    let best = candidates
        .into_iter()
        .filter(|c| !c.value.is_nan())
        .max_by(|a, b| a.value.total_cmp(&b.value))
        .expect("the diagonal candidate is always present");
    (red.triple(best.u, best.v), best.residual)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::b_vector;

    fn counts(x: [u64; 3], n: [u64; 3]) -> SurveyCounts {
        SurveyCounts::from_arrays(x, n).unwrap()
    }

    #[test]
    fn likelihood_examples() {
        let c = counts([0, 0, 0], [1, 1, 1]);
        assert_eq!(log_likelihood([0.0, 0.0, 0.0], &c), 0.0);
        let c = counts([1, 1, 1], [1, 1, 1]);
        assert_eq!(log_likelihood([0.0, 0.5, 0.5], &c), f64::NEG_INFINITY);
    }

    #[test]
    fn likelihood_matches_direct_sum() {
        use statrs::function::factorial::ln_binomial;
        let c = counts([50, 2, 103], [3300, 401, 122]);
        let p = c.frequencies();
        let mut direct = 0.0;
        for i in 0..3 {
            let (n, k) = (c.sizes().get(i), c.get(i));
            direct += ln_binomial(n, k) + k as f64 * p[i].ln() + (n - k) as f64 * (1.0 - p[i]).ln();
        }
        assert!((log_likelihood(p, &c) - direct).abs() < 1e-9);
    }

    #[test]
    fn unconstrained_cases() {
        let c = counts([50, 2, 103], [3300, 401, 122]);
        let m = mle_unconstrained(&c);
        assert_eq!(m.case, MleCase::Interior);
        assert_eq!(m.p_hat, c.frequencies());

        let m = mle_unconstrained(&counts([1, 2, 5], [10, 10, 10]));
        assert_eq!(m.case, MleCase::Pool12);
        assert!((m.p_hat[0] - 0.15).abs() < 1e-15 && (m.p_hat[1] - 0.15).abs() < 1e-15);
        assert_eq!(m.p_hat[2], 0.5);

        let m = mle_unconstrained(&counts([3, 3, 3], [10, 10, 10]));
        assert_eq!(m.case, MleCase::Interior);
        assert_eq!(m.p_hat, [0.3, 0.3, 0.3]);

        let m = mle_unconstrained(&counts([9, 1, 5], [10, 10, 10]));
        assert_eq!(m.case, MleCase::Pool13);
        assert_eq!(m.p_hat, [0.7, 0.1, 0.7]);

        let m = mle_unconstrained(&counts([4, 6, 2], [10, 10, 10]));
        assert_eq!(m.case, MleCase::PoolAll);
    }

    #[test]
    fn constrained_inactive_at_estimate() {
        let c = counts([50, 2, 103], [3300, 401, 122]);
        let m = mle_unconstrained(&c);
        let pi = m.prevalence().unwrap();
        let r = mle_constrained(&c, pi).unwrap();
        for i in 0..3 {
            assert!((r.p_hat[i] - m.p_hat[i]).abs() < 1e-9, "{:?} vs {:?}", r.p_hat, m.p_hat);
        }
        assert!((r.log_lik - m.log_lik).abs() < 1e-9);
    }

    #[test]
    fn constrained_endpoints_closed_form() {
        let c = counts([50, 2, 103], [3300, 401, 122]);
        let r = mle_constrained(&c, 0.0).unwrap();
        let q = 52.0 / 3701.0;
        assert_eq!(r.p_hat, [q, q, 103.0 / 122.0]);
        let r = mle_constrained(&c, 1.0).unwrap();
        let s = 153.0 / 3422.0;
        assert_eq!(r.p_hat, [s, 2.0 / 401.0, s]);
        // The numeric solver approaches the same points from inside.
        for (pi0, target) in [(1e-9, [q, q, 103.0 / 122.0]), (1.0 - 1e-9, [s, 2.0 / 401.0, s])] {
            let r = mle_constrained(&c, pi0).unwrap();
            for i in 0..3 {
                assert!((r.p_hat[i] - target[i]).abs() < 1e-6, "{pi0}: {:?}", r.p_hat);
            }
        }
    }

    #[test]
    fn constraint_residual_is_tiny() {
        let c = counts([50, 2, 103], [3300, 401, 122]);
        for k in 0..=100 {
            let pi0 = k as f64 / 100.0;
            let r = mle_constrained(&c, pi0).unwrap();
            let b = b_vector(pi0);
            let res: f64 = (0..3).map(|i| b[i] * r.p_hat[i]).sum();
            assert!(res.abs() <= 1e-10, "pi0={pi0} residual={res}");
        }
    }

    #[test]
    fn boundary_solutions() {
        // x2 = 0 pushes p2 to zero for moderate prevalence.
        let c = counts([2, 0, 40], [100, 50, 50]);
        let r = mle_constrained(&c, 0.05).unwrap();
        assert_eq!(r.p_hat[1], 0.0);
        // Reversed specificity/sensitivity data sits on p2 = p3.
        let c = counts([5, 30, 10], [50, 50, 50]);
        let r = mle_constrained(&c, 0.5).unwrap();
        assert!(r.degenerate);
        // x3 = n3 puts p3 at one.
        let c = counts([30, 2, 50], [100, 50, 50]);
        let r = mle_constrained(&c, 0.1).unwrap();
        assert_eq!(r.p_hat[2], 1.0);
    }

    #[test]
    fn rejects_out_of_range_prevalence() {
        let c = counts([1, 1, 1], [2, 2, 2]);
        assert!(mle_constrained(&c, 1.5).is_err());
    }
}
