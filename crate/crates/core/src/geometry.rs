//! Under-approximation boxes: the largest axis-aligned box inside a polytope.
//!
//! A box `[lo, hi]` lies inside the halfspace `c·x ≤ d` iff its worst corner
//! does, i.e. `Σ_j max(c_j,0)·hi_j + min(c_j,0)·lo_j ≤ d`. That makes
//! containment linear in `(lo, hi)`, so the sum-of-widths box is one LP and
//! the log-volume box is a concave maximization over the same polytope,
//! solved here by Frank–Wolfe with away steps.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lp::{solve, Constraint, LinearProgram, LpStatus, Relation};
use crate::pattern::{Polytope, Rel};
use crate::DELTA_STRICT;

/// Widths are floored at this value inside the log.
pub const W_MIN: f64 = 1e-12;
/// Boxes narrower than this on some axis are reported as degenerate.
pub const DEGENERATE_WIDTH: f64 = 1e-9;
const FW_MAX_ITERS: usize = 200;
const FW_REL_GAIN: f64 = 1e-8;
const FW_GAP: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct AxisBox {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl AxisBox {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>) -> Self {
        AxisBox { lo, hi }
    }

    pub fn from_bounds(bounds: &[[f64; 2]]) -> Self {
        AxisBox {
            lo: bounds.iter().map(|b| b[0]).collect(),
            hi: bounds.iter().map(|b| b[1]).collect(),
        }
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn widths(&self) -> Vec<f64> {
        self.lo.iter().zip(&self.hi).map(|(l, h)| h - l).collect()
    }

    pub fn log_volume(&self) -> f64 {
        log_volume(&self.widths())
    }

    pub fn sum_widths(&self) -> f64 {
        self.widths().iter().sum()
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.iter().zip(self.lo.iter().zip(&self.hi)).all(|(v, (l, h))| l <= v && v <= h)
    }

    /// Corner number `mask`: bit `d` picks `hi[d]` over `lo[d]`.
    pub fn corner(&self, mask: u64) -> Vec<f64> {
        (0..self.dim())
            .map(|d| if mask >> d & 1 == 1 { self.hi[d] } else { self.lo[d] })
            .collect()
    }

    /// Worst-corner slack of a row; nonnegative means the whole box satisfies it.
    pub fn row_slack(&self, coeffs: &[f64], rhs: f64) -> f64 {
        let worst: f64 = coeffs
            .iter()
            .enumerate()
            .map(|(j, c)| if *c > 0.0 { c * self.hi[j] } else { c * self.lo[j] })
            .sum();
        rhs - worst
    }

    fn from_vars(v: &[f64]) -> Self {
        let d = v.len() / 2;
        AxisBox::new(v[..d].to_vec(), v[d..].to_vec())
    }

    fn to_vars(&self) -> Vec<f64> {
        self.lo.iter().chain(&self.hi).copied().collect()
    }
}

/// `Σ_d ln(max(w_d, W_MIN))`.
pub fn log_volume(widths: &[f64]) -> f64 {
    widths.iter().map(|w| w.max(W_MIN).ln()).sum()
}

/// Log-volume as serialized: a number, or `"empty"` for empty regions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum LogVolume {
    Value(f64),
    Sentinel(EmptyTag),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum EmptyTag {
    #[serde(rename = "empty")]
    Empty,
}

impl LogVolume {
    pub const EMPTY: LogVolume = LogVolume::Sentinel(EmptyTag::Empty);

    pub fn value(self) -> Option<f64> {
        match self {
            LogVolume::Value(v) => Some(v),
            LogVolume::Sentinel(_) => None,
        }
    }
}

/// Box JSON record: `{"lo": [...], "hi": [...], "log_volume": x | "empty"}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoxRecord {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    pub log_volume: LogVolume,
}

impl BoxRecord {
    pub fn empty() -> Self {
        BoxRecord {
            lo: Vec::new(),
            hi: Vec::new(),
            log_volume: LogVolume::EMPTY,
        }
    }
}

impl From<&AxisBox> for BoxRecord {
    fn from(b: &AxisBox) -> Self {
        BoxRecord {
            lo: b.lo.clone(),
            hi: b.hi.clone(),
            log_volume: LogVolume::Value(b.log_volume()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Objective {
    Sum,
    Logvol,
}

/// Containment constraints over the variables `(lo_1..lo_d, hi_1..hi_d)`.
/// The input box is imposed through variable bounds, see
/// [`containment_program`].
pub fn containment_rows(poly: &Polytope) -> Vec<Constraint> {
    let d = poly.dim;
    let mut rows = Vec::with_capacity(poly.rows.len() + d);
    for row in &poly.rows {
        let mut c = vec![0.0; 2 * d];
        for (j, &a) in row.coeffs.iter().enumerate() {
            if a > 0.0 {
                c[d + j] = a;
            } else if a < 0.0 {
                c[j] = a;
            }
        }
        let rhs = match row.rel {
            Rel::Le => row.rhs,
            Rel::Lt => row.rhs - DELTA_STRICT,
        };
        rows.push(Constraint::new(c, Relation::Le, rhs));
    }
    for j in 0..d {
        let mut c = vec![0.0; 2 * d];
        c[j] = 1.0;
        c[d + j] = -1.0;
        rows.push(Constraint::new(c, Relation::Le, 0.0));
    }
    rows
}

pub fn containment_program(poly: &Polytope, input_box: &[[f64; 2]], objective: Vec<f64>) -> Result<LinearProgram> {
    if input_box.len() != poly.dim {
        return Err(Error::Dimension {
            expected: poly.dim,
            got: input_box.len(),
        });
    }
    let d = poly.dim;
    let mut lp = LinearProgram::new(2 * d);
    lp.objective = objective;
    lp.constraints = containment_rows(poly);
    for (j, &[lo, hi]) in input_box.iter().enumerate() {
        lp.bounds[j] = (lo, hi);
        lp.bounds[d + j] = (lo, hi);
    }
    Ok(lp)
}

fn sum_objective(d: usize) -> Vec<f64> {
    (0..2 * d).map(|k| if k < d { -1.0 } else { 1.0 }).collect()
}

fn optimal_vars(lp: &LinearProgram) -> Result<Vec<f64>> {
    let res = solve(lp)?;
    match res.status {
        LpStatus::Optimal => Ok(res.point.expect("optimal outcome carries a point")),
        LpStatus::Infeasible => Err(Error::EmptyRegion),
        LpStatus::Unbounded => Err(Error::Numerical("box program reported unbounded".into())),
    }
}

/// Box maximizing the sum of widths.
pub fn max_box_sum(poly: &Polytope, input_box: &[[f64; 2]]) -> Result<AxisBox> {
    let lp = containment_program(poly, input_box, sum_objective(poly.dim))?;
    Ok(AxisBox::from_vars(&optimal_vars(&lp)?))
}

/// Largest cube-like box: maximize `t` with every width ≥ `t`.
fn max_min_width(poly: &Polytope, input_box: &[[f64; 2]]) -> Result<(AxisBox, f64)> {
    let d = poly.dim;
    let mut lp = containment_program(poly, input_box, vec![0.0; 2 * d])?;
    for c in &mut lp.constraints {
        c.coeffs.push(0.0);
    }
    lp.objective.push(1.0);
    lp.bounds.push((0.0, f64::INFINITY));
    for j in 0..d {
        let mut c = vec![0.0; 2 * d + 1];
        c[j] = 1.0;
        c[d + j] = -1.0;
        c[2 * d] = 1.0;
        lp.push(c, Relation::Le, 0.0);
    }
    let v = optimal_vars(&lp)?;
    Ok((AxisBox::from_vars(&v[..2 * d]), v[2 * d]))
}

fn shrink(b: &AxisBox, factor: f64) -> AxisBox {
    let (lo, hi) = b
        .lo
        .iter()
        .zip(&b.hi)
        .map(|(l, h)| {
            let c = 0.5 * (l + h);
            (c - factor * (c - l), c + factor * (h - c))
        })
        .unzip();
    AxisBox::new(lo, hi)
}

/// Box maximizing `Σ_d ln(w_d)`.
///
/// The result never has smaller volume than [`max_box_sum`]'s box on the
/// same instance. Regions without interior yield
/// [`Error::DegenerateRegion`], carrying the sum-objective box.
pub fn max_box_volume(poly: &Polytope, input_box: &[[f64; 2]]) -> Result<AxisBox> {
    let d = poly.dim;
    let sum_box = max_box_sum(poly, input_box)?;
    let (cube, t) = max_min_width(poly, input_box)?;
    if t <= DEGENERATE_WIDTH {
        let axis = degenerate_axis(poly, input_box, &sum_box)?;
        let width = sum_box.hi[axis] - sum_box.lo[axis];
        return Err(Error::DegenerateRegion {
            axis,
            width,
            lo: sum_box.lo,
            hi: sum_box.hi,
        });
    }
    let shrunk = shrink(&sum_box, 0.99);
    let start = if shrunk.log_volume() >= cube.log_volume() { shrunk } else { cube };
    let lp = containment_program(poly, input_box, vec![0.0; 2 * d])?;
    let best = frank_wolfe(&lp, start)?;
    Ok(if sum_box.log_volume() > best.log_volume() { sum_box } else { best })
}

/// First axis whose width cannot exceed `DEGENERATE_WIDTH`, falling back to
/// the narrowest axis of `fallback`.
fn degenerate_axis(poly: &Polytope, input_box: &[[f64; 2]], fallback: &AxisBox) -> Result<usize> {
    let d = poly.dim;
    for j in 0..d {
        let mut obj = vec![0.0; 2 * d];
        obj[j] = -1.0;
        obj[d + j] = 1.0;
        let v = optimal_vars(&containment_program(poly, input_box, obj)?)?;
        if v[d + j] - v[j] <= DEGENERATE_WIDTH {
            return Ok(j);
        }
    }
    let w = fallback.widths();
    Ok((0..d).fold(0, |best, j| if w[j] < w[best] { j } else { best }))
}

fn objective_vars(v: &[f64]) -> f64 {
    let d = v.len() / 2;
    (0..d).map(|j| (v[d + j] - v[j]).max(W_MIN).ln()).sum()
}

fn gradient(v: &[f64]) -> Vec<f64> {
    let d = v.len() / 2;
    let mut g = vec![0.0; 2 * d];
    for j in 0..d {
        let inv = 1.0 / (v[d + j] - v[j]).max(W_MIN);
        g[j] = -inv;
        g[d + j] = inv;
    }
    g
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Exact line search for `max_{γ∈[0,γ_max]} f(x + γ·dir)` by bisection on the
/// derivative, which is decreasing since `f` is concave.
fn line_search(x: &[f64], dir: &[f64], gamma_max: f64) -> f64 {
    let d = x.len() / 2;
    let deriv = |g: f64| -> f64 {
        let mut s = 0.0;
        for j in 0..d {
            let dw = dir[d + j] - dir[j];
            let w = x[d + j] - x[j] + g * dw;
            if w <= 0.0 {
                if dw < 0.0 {
                    return f64::NEG_INFINITY;
                }
                continue;
            }
            s += dw / w;
        }
        s
    };
    if deriv(0.0) <= 0.0 {
        return 0.0;
    }
    if deriv(gamma_max) >= 0.0 {
        return gamma_max;
    }
    let (mut lo, mut hi) = (0.0, gamma_max);
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        if deriv(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    lo
}

/// Away-step Frank–Wolfe. The iterate is kept as a convex combination of
/// the start point and LP vertices so that away steps have a bounded length.
fn frank_wolfe(lp: &LinearProgram, start: AxisBox) -> Result<AxisBox> {
    let mut x = start.to_vars();
    let mut atoms: Vec<(Vec<f64>, f64)> = vec![(x.clone(), 1.0)];
    let mut f = objective_vars(&x);
    let mut oracle = lp.clone();
    for _ in 0..FW_MAX_ITERS {
        let g = gradient(&x);
        oracle.objective = g.clone();
        let s = optimal_vars(&oracle)?;
        let gx = dot(&g, &x);
        let fw_gap = dot(&g, &s) - gx;
        if fw_gap <= FW_GAP * (1.0 + f.abs()) {
            break;
        }
        let (away_idx, away_gap) = atoms
            .iter()
            .enumerate()
            .map(|(k, (v, _))| (k, gx - dot(&g, v)))
            .fold((0, f64::NEG_INFINITY), |acc, cur| if cur.1 > acc.1 { cur } else { acc });

        let (dir, gamma_max, toward) = if fw_gap >= away_gap || atoms.len() == 1 {
            (s.iter().zip(&x).map(|(a, b)| a - b).collect::<Vec<_>>(), 1.0, true)
        } else {
            let (v, w) = &atoms[away_idx];
            (x.iter().zip(v).map(|(a, b)| a - b).collect(), w / (1.0 - w), false)
        };
        let gamma = line_search(&x, &dir, gamma_max);
        let next: Vec<f64> = x.iter().zip(&dir).map(|(a, b)| a + gamma * b).collect();
        let f_next = objective_vars(&next);
        if f_next < f - 1e-12 * (1.0 + f.abs()) {
            return Err(Error::Internal(format!(
                "Frank-Wolfe objective decreased from {f} to {f_next}"
            )));
        }
        if f_next <= f {
            break;
        }
        if toward {
            for (_, w) in atoms.iter_mut() {
                *w *= 1.0 - gamma;
            }
            match atoms.iter_mut().find(|(v, _)| *v == s) {
                Some((_, w)) => *w += gamma,
                None => atoms.push((s, gamma)),
            }
            if gamma >= 1.0 {
                atoms.retain(|(_, w)| *w > 0.0);
            }
        } else {
            for (_, w) in atoms.iter_mut() {
                *w *= 1.0 + gamma;
            }
            atoms[away_idx].1 -= gamma;
            if gamma >= gamma_max {
                atoms.remove(away_idx);
            }
        }
        atoms.retain(|(_, w)| *w > 1e-15);
        let dropped = !toward && gamma >= gamma_max;
        let gain = (f_next - f) / (1.0 + f.abs());
        x = next;
        f = f_next;
        if !dropped && gain < FW_REL_GAIN {
            break;
        }
    }
    Ok(AxisBox::from_vars(&x))
}

/// Every corner (d ≤ 12) or the worst corner of every row lies inside
/// `poly`, strict rows with `DELTA_STRICT` margin, closed rows within `tol`.
pub fn box_inside(b: &AxisBox, poly: &Polytope, tol: f64) -> bool {
    let check = |slack: f64, rel: Rel| match rel {
        Rel::Le => slack >= -tol,
        Rel::Lt => slack >= DELTA_STRICT - tol,
    };
    if b.dim() <= 12 {
        (0..1u64 << b.dim()).all(|m| {
            let x = b.corner(m);
            poly.rows.iter().all(|r| check(r.slack(&x), r.rel))
        })
    } else {
        poly.rows.iter().all(|r| check(b.row_slack(&r.coeffs, r.rhs), r.rel))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pattern::Halfspace;

    fn triangle() -> Polytope {
        let mut p = Polytope::from_box(&[[0.0, 10.0], [0.0, 10.0]]);
        p.push(Halfspace::le(vec![1.0, 1.0], 2.0));
        p
    }

    #[test]
    fn containment_rows_pick_corners() {
        let mut p = Polytope::new(2);
        p.push(Halfspace::le(vec![1.0, 1.0], 2.0));
        p.push(Halfspace::le(vec![-1.0, 0.0], 0.0));
        p.push(Halfspace::le(vec![1.0, -1.0], 1.0));
        let rows = containment_rows(&p);
        assert_eq!(rows[0].coeffs, vec![0.0, 0.0, 1.0, 1.0]);
        assert_eq!(rows[1].coeffs, vec![-1.0, 0.0, 0.0, 0.0]);
        assert_eq!(rows[2].coeffs, vec![0.0, -1.0, 1.0, 0.0]);
        assert_eq!(rows[2].rhs, 1.0);
        // lo ≤ hi rows
        assert_eq!(rows.len(), 5);
    }

    #[test]
    fn sum_box_of_triangle() {
        let b = max_box_sum(&triangle(), &[[0.0, 10.0], [0.0, 10.0]]).unwrap();
        assert!((b.sum_widths() - 2.0).abs() < 1e-9);
        assert!(box_inside(&b, &triangle(), 1e-9));
    }

    #[test]
    fn volume_box_of_triangle_is_unit_square() {
        let b = max_box_volume(&triangle(), &[[0.0, 10.0], [0.0, 10.0]]).unwrap();
        assert!(b.log_volume().abs() < 1e-6, "log volume {}", b.log_volume());
        for j in 0..2 {
            assert!(b.lo[j].abs() < 1e-4 && (b.hi[j] - 1.0).abs() < 1e-4, "{b:?}");
        }
    }

    #[test]
    fn input_box_only() {
        let bx = [[0.0, 2.0], [0.0, 3.0]];
        let p = Polytope::from_box(&bx);
        let s = max_box_sum(&p, &bx).unwrap();
        assert_eq!(s, AxisBox::from_bounds(&bx));
        let v = max_box_volume(&p, &bx).unwrap();
        assert!((v.log_volume() - 6f64.ln()).abs() < 1e-9);
    }

    #[test]
    fn contradictory_rows_are_empty() {
        let mut p = Polytope::from_box(&[[0.0, 1.0]]);
        p.push(Halfspace::le(vec![1.0], -0.5));
        assert!(matches!(max_box_sum(&p, &[[0.0, 1.0]]), Err(Error::EmptyRegion)));
        assert!(matches!(max_box_volume(&p, &[[0.0, 1.0]]), Err(Error::EmptyRegion)));
    }

    #[test]
    fn flat_region_is_degenerate() {
        let bx = [[0.0, 1.0], [0.0, 1.0]];
        let mut p = Polytope::from_box(&bx);
        p.push(Halfspace::le(vec![0.0, 1.0], 0.0));
        match max_box_volume(&p, &bx) {
            Err(Error::DegenerateRegion { axis, width, .. }) => {
                assert_eq!(axis, 1);
                assert!(width.abs() < 1e-12);
            }
            other => panic!("expected degenerate region, got {other:?}"),
        }
    }

    #[test]
    fn log_volume_examples() {
        assert_eq!(log_volume(&[1.0, 1.0, 1.0]), 0.0);
        assert!(log_volume(&[2.0, 0.5]).abs() < 1e-15);
        let e = std::f64::consts::E;
        assert!((log_volume(&[e, e]) - 2.0).abs() < 1e-12);
        assert_eq!(log_volume(&[0.0]), W_MIN.ln());
    }

    #[test]
    fn box_record_json() {
        let r = BoxRecord::from(&AxisBox::new(vec![0.0], vec![1.0]));
        assert_eq!(serde_json::to_string(&r).unwrap(), r#"{"lo":[0.0],"hi":[1.0],"log_volume":0.0}"#);
        let e = serde_json::to_string(&BoxRecord::empty()).unwrap();
        assert_eq!(e, r#"{"lo":[],"hi":[],"log_volume":"empty"}"#);
        let back: BoxRecord = serde_json::from_str(&e).unwrap();
        assert_eq!(back.log_volume, LogVolume::EMPTY);
    }

    #[test]
    fn strict_rows_shrink_the_box() {
        let bx = [[0.0, 1.0]];
        let mut p = Polytope::from_box(&bx);
        p.push(Halfspace::lt(vec![1.0], 0.5));
        let b = max_box_sum(&p, &bx).unwrap();
        assert!(b.hi[0] <= 0.5 - DELTA_STRICT + 1e-12);
        assert!(box_inside(&b, &p, 1e-9));
    }
}
