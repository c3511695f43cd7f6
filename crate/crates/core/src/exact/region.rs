//! Nuisance confidence rectangle, its grid cells, and the extreme points of
//! each cell under the prevalence restriction.

use serde::{Deserialize, Serialize};

use crate::classic::{cp_lower, cp_upper};
use crate::error::{Error, Result};
use crate::model::{NuisanceChoice, SurveyCounts};

/// Product of two Clopper–Pearson intervals, each at level `sqrt(1 - gamma)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NuisanceRegion {
    pub intervals: [(f64, f64); 2],
    pub gamma: f64,
    pub which: NuisanceChoice,
}

pub fn nuisance_region(x: &SurveyCounts, gamma: f64, which: NuisanceChoice) -> Result<NuisanceRegion> {
    if !(gamma > 0.0 && gamma < 1.0) {
        return Err(Error::invalid(format!("gamma = {gamma} must lie in (0, 1)")));
    }
    let tail = 0.5 * (1.0 - (1.0 - gamma).sqrt());
    let (i, j) = which.indices();
    let n = x.sizes();
    let ci = |k: usize| (cp_lower(x.get(k), n.get(k), tail), cp_upper(x.get(k), n.get(k), tail));
    Ok(NuisanceRegion { intervals: [ci(i), ci(j)], gamma, which })
}

/// Closed sub-rectangle `[lo[0], hi[0]] x [lo[1], hi[1]]` of the nuisance coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridCell {
    pub lo: [f64; 2],
    pub hi: [f64; 2],
}

fn linspace(a: f64, b: f64, g: usize) -> Vec<f64> {
    (0..g).map(|k| if k + 1 == g { b } else { a + (b - a) * k as f64 / (g - 1) as f64 }).collect()
}

impl NuisanceRegion {
    /// The `g x g` lattice of points spanning the region, as two coordinate lists.
    pub fn lattice(&self, g: usize) -> (Vec<f64>, Vec<f64>) {
        let [(a, b), (c, d)] = self.intervals;
        (linspace(a, b, g), linspace(c, d, g))
    }

    /// The `(g - 1)^2` rectangles between neighbouring lattice points.
    pub fn cells(&self, g: usize) -> Vec<GridCell> {
        let (u, v) = self.lattice(g);
        let mut out = Vec::with_capacity((g - 1) * (g - 1));
        for i in 0..g - 1 {
            for j in 0..g - 1 {
                out.push(GridCell { lo: [u[i], v[j]], hi: [u[i + 1], v[j + 1]] });
            }
        }
        out
    }
}

/// Keeps the part of a convex polygon where `a*u + b*v + c >= 0`.
fn clip(poly: &[(f64, f64)], a: f64, b: f64, c: f64) -> Vec<(f64, f64)> {
    let mut out = Vec::with_capacity(poly.len() + 1);
    for i in 0..poly.len() {
        let p = poly[i];
        let q = poly[(i + 1) % poly.len()];
        let fp = a * p.0 + b * p.1 + c;
        let fq = a * q.0 + b * q.1 + c;
        if fp >= 0.0 {
            out.push(p);
        }
        if (fp >= 0.0) != (fq >= 0.0) {
            let t = fp / (fp - fq);
            out.push((p.0 + t * (q.0 - p.0), p.1 + t * (q.1 - p.1)));
        }
    }
    out
}

fn range(vals: impl Iterator<Item = f64>) -> (f64, f64) {
    vals.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)))
}

/// Parameter points bounding the statistic's law over the cell's share of the null.
///
/// The linear statistic is increasing in `X1` and decreasing in `X2`, `X3`, so its
/// cdf is smallest at `p_L` (largest `p1`, smallest `p2`, `p3`) and largest at `p_U`.
/// The two nuisance coordinates take the cell's box bounds; the implied third
/// coordinate takes its extremes over the cell intersected with the null set.
/// Returns `None` when that intersection is empty.
pub fn cell_extremes(cell: &GridCell, pi0: f64, which: NuisanceChoice) -> Option<([f64; 3], [f64; 3])> {
    let [a, c] = cell.lo;
    let [b, d] = cell.hi;
    let boxed = [(a, c), (b, c), (b, d), (a, d)];
    match which {
        NuisanceChoice::P1P3 => {
            // (u, v) = (p1, p3); the null set is pi0 v <= u <= v with p2 = (u - pi0 v) / (1 - pi0).
            if pi0 >= 1.0 {
                // p1 = p3 and the statistic ignores X2.
                let lo = a.max(c);
                let hi = b.min(d);
                if lo > hi {
                    return None;
                }
                return Some(([b, 0.0, c], [a, hi, d]));
            }
            let poly = clip(&clip(&boxed, 1.0, -pi0, 0.0), -1.0, 1.0, 0.0);
            if poly.is_empty() {
                return None;
            }
            let (p2_lo, p2_hi) = range(poly.iter().map(|&(u, v)| ((u - pi0 * v) / (1.0 - pi0)).clamp(0.0, 1.0)));
            Some(([b, p2_lo, c], [a, p2_hi, d]))
        }
        NuisanceChoice::P2P3 => {
            // (u, v) = (p2, p3); the null set is u <= v with p1 = (1 - pi0) u + pi0 v.
            let poly = clip(&boxed, -1.0, 1.0, 0.0);
            if poly.is_empty() {
                return None;
            }
            let (p1_lo, p1_hi) = range(poly.iter().map(|&(u, v)| ((1.0 - pi0) * u + pi0 * v).clamp(0.0, 1.0)));
            Some(([p1_hi, a, c], [p1_lo, b, d]))
        }
    }
}

/// Completes a lattice point to a null parameter, if it lies in the null set.
pub(crate) fn lattice_point(u: f64, v: f64, pi0: f64, which: NuisanceChoice) -> Option<[f64; 3]> {
    match which {
        NuisanceChoice::P1P3 => {
            if pi0 >= 1.0 {
                return (u == v).then_some([u, 0.0, v]);
            }
            if pi0 * v <= u && u <= v {
                Some([u, ((u - pi0 * v) / (1.0 - pi0)).clamp(0.0, 1.0), v])
            } else {
                None
            }
        }
        NuisanceChoice::P2P3 => (u <= v).then_some([((1.0 - pi0) * u + pi0 * v).clamp(0.0, 1.0), u, v]),
    }
}
