//! Point sampling inside polytopes, used by the soundness checks.
//!
//! Points are drawn by rejection from the polytope's bounding box. When the
//! polytope fills only a sliver of that box, the remaining points come from a
//! hit-and-run chain started at the Chebyshev center, so thin regions still
//! receive the requested number of samples.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::lp::{polytope_program, solve, LinearProgram, LpStatus, Relation};
use crate::pattern::{norm, Polytope, Rel};

/// Proposals spent estimating the acceptance rate before committing to
/// rejection sampling.
const PILOT: usize = 2_000;
/// Below this acceptance rate the sampler switches to hit-and-run.
const MIN_ACCEPT: f64 = 0.02;
const BURN_IN: usize = 200;
const THIN: usize = 3;

/// Per-axis extent of the polytope, strict rows tightened by `DELTA_STRICT`.
pub fn bounding_box(poly: &Polytope) -> Result<Vec<[f64; 2]>> {
    let free = vec![(f64::NEG_INFINITY, f64::INFINITY); poly.dim];
    let mut out = Vec::with_capacity(poly.dim);
    for d in 0..poly.dim {
        let mut ext = [0.0; 2];
        for (k, sign) in [-1.0, 1.0].into_iter().enumerate() {
            let mut c = vec![0.0; poly.dim];
            c[d] = sign;
            let res = solve(&polytope_program(poly, &free, c))?;
            match res.status {
                LpStatus::Infeasible => return Err(Error::EmptyRegion),
                LpStatus::Unbounded => {
                    return Err(Error::Bounds(format!("polytope is unbounded along axis {d}")))
                }
                LpStatus::Optimal => ext[k] = res.point.as_ref().expect("optimal outcome carries a point")[d],
            }
        }
        out.push(ext);
    }
    Ok(out)
}

/// Center and radius of the largest ball inside the polytope.
pub fn chebyshev_center(poly: &Polytope) -> Result<(Vec<f64>, f64)> {
    let d = poly.dim;
    let mut lp = LinearProgram::new(d + 1);
    lp.objective[d] = 1.0;
    lp.bounds[d] = (0.0, 1e6);
    for row in &poly.rows {
        let mut c = row.coeffs.clone();
        c.push(norm(&row.coeffs));
        let rhs = match row.rel {
            Rel::Le => row.rhs,
            Rel::Lt => row.rhs - crate::DELTA_STRICT,
        };
        lp.push(c, Relation::Le, rhs);
    }
    let res = solve(&lp)?;
    match res.status {
        LpStatus::Optimal => {
            let p = res.point.expect("optimal outcome carries a point");
            Ok((p[..d].to_vec(), p[d]))
        }
        LpStatus::Infeasible => Err(Error::EmptyRegion),
        LpStatus::Unbounded => Err(Error::Bounds("polytope contains arbitrarily large balls".into())),
    }
}

/// Up to `n` points satisfying every closed row exactly and every strict row
/// with at least `margin` of slack. Fewer points are returned only when the
/// region has no room to move in (empty interior).
pub fn sample_region<R: Rng>(poly: &Polytope, n: usize, margin: f64, rng: &mut R) -> Result<Vec<Vec<f64>>> {
    if n == 0 {
        return Ok(Vec::new());
    }
    let bbox = bounding_box(poly)?;
    let inside = |x: &[f64]| poly.contains_with_margin(x, margin, 0.0);
    let mut points = Vec::with_capacity(n);
    let mut proposals = 0usize;
    let cap = 50 * n;
    while points.len() < n && proposals < cap {
        let x: Vec<f64> = bbox
            .iter()
            .map(|&[lo, hi]| if hi > lo { rng.gen_range(lo..=hi) } else { lo })
            .collect();
        proposals += 1;
        if inside(&x) {
            points.push(x);
        }
        if proposals == PILOT && (points.len() as f64) < MIN_ACCEPT * PILOT as f64 {
            break;
        }
    }
    if points.len() < n {
        let need = n - points.len();
        points.extend(hit_and_run(poly, need, margin, rng)?);
    }
    Ok(points)
}

fn hit_and_run<R: Rng>(poly: &Polytope, n: usize, margin: f64, rng: &mut R) -> Result<Vec<Vec<f64>>> {
    let (mut x, radius) = chebyshev_center(poly)?;
    let inside = |x: &[f64]| poly.contains_with_margin(x, margin, 0.0);
    if radius <= 0.0 {
        // No interior: the center is the only point we can vouch for.
        return Ok(if inside(&x) { vec![x] } else { Vec::new() });
    }
    let limits: Vec<f64> = poly
        .rows
        .iter()
        .map(|r| match r.rel {
            Rel::Le => r.rhs,
            Rel::Lt => r.rhs - margin,
        })
        .collect();
    let anchors = anchor_vertices(poly, rng)?;
    let mut out = Vec::with_capacity(n);
    let mut step = 0usize;
    let max_steps = BURN_IN + THIN * n * 4;
    while out.len() < n && step < max_steps {
        step += 1;
        let u = direction(poly.dim, &anchors, rng);
        let (mut t_lo, mut t_hi) = (f64::NEG_INFINITY, f64::INFINITY);
        for (row, lim) in poly.rows.iter().zip(&limits) {
            let a_u = crate::model::dot(&row.coeffs, &u);
            let room = lim - crate::model::dot(&row.coeffs, &x);
            if a_u > 1e-15 {
                t_hi = t_hi.min(room / a_u);
            } else if a_u < -1e-15 {
                t_lo = t_lo.max(room / a_u);
            }
        }
        if t_lo < t_hi && t_lo.is_finite() && t_hi.is_finite() {
            let t = rng.gen_range(t_lo..=t_hi);
            let y: Vec<f64> = x.iter().zip(&u).map(|(a, b)| a + t * b).collect();
            if inside(&y) {
                x = y;
            }
        }
        if step > BURN_IN && step.is_multiple_of(THIN) && inside(&x) {
            out.push(x.clone());
        }
    }
    Ok(out)
}

/// Vertices maximizing random objectives. Differences between them span
/// the long directions of thin regions, which isotropic directions rarely hit.
fn anchor_vertices<R: Rng>(poly: &Polytope, rng: &mut R) -> Result<Vec<Vec<f64>>> {
    let free = vec![(f64::NEG_INFINITY, f64::INFINITY); poly.dim];
    let mut out: Vec<Vec<f64>> = Vec::new();
    for _ in 0..4 * poly.dim {
        let c: Vec<f64> = (0..poly.dim).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        let res = solve(&polytope_program(poly, &free, c))?;
        if let (LpStatus::Optimal, Some(p)) = (res.status, res.point) {
            if !out.contains(&p) {
                out.push(p);
            }
        }
    }
    Ok(out)
}

/// Either an isotropic direction or the difference of two anchors, each
/// with probability one half. Neither choice depends on the current point,
/// so the uniform distribution stays stationary.
fn direction<R: Rng>(dim: usize, anchors: &[Vec<f64>], rng: &mut R) -> Vec<f64> {
    if anchors.len() >= 2 && rng.gen_bool(0.5) {
        let a = rng.gen_range(0..anchors.len());
        let mut b = rng.gen_range(0..anchors.len() - 1);
        if b >= a {
            b += 1;
        }
        anchors[a].iter().zip(&anchors[b]).map(|(p, q)| p - q).collect()
    } else {
        (0..dim).map(|_| rng.sample::<f64, _>(StandardNormal)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pattern::Halfspace;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn triangle() -> Polytope {
        let mut p = Polytope::from_box(&[[0.0, 10.0], [0.0, 10.0]]);
        p.push(Halfspace::lt(vec![1.0, 1.0], 2.0));
        p
    }

    #[test]
    fn bounding_box_of_triangle() {
        let b = bounding_box(&triangle()).unwrap();
        for [lo, hi] in b {
            assert!(lo.abs() < 1e-9);
            assert!((hi - 2.0).abs() < 1e-5);
        }
    }

    #[test]
    fn samples_stay_inside() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let pts = sample_region(&triangle(), 500, 1e-6, &mut rng).unwrap();
        assert_eq!(pts.len(), 500);
        assert!(pts.iter().all(|x| x[0] + x[1] < 2.0 - 1e-6 && x[0] >= 0.0 && x[1] >= 0.0));
    }

    #[test]
    fn thin_region_uses_hit_and_run() {
        // A diagonal sliver occupying ~1e-4 of its bounding box.
        let mut p = Polytope::from_box(&[[0.0, 1.0], [0.0, 1.0]]);
        p.push(Halfspace::le(vec![1.0, -1.0], 1e-4));
        p.push(Halfspace::le(vec![-1.0, 1.0], 1e-4));
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let pts = sample_region(&p, 300, 1e-6, &mut rng).unwrap();
        assert_eq!(pts.len(), 300);
        assert!(pts.iter().all(|x| p.contains(x)));
        let spread = pts.iter().map(|x| x[0]).fold(0.0f64, f64::max) - pts.iter().map(|x| x[0]).fold(1.0f64, f64::min);
        assert!(spread > 0.3, "chain should travel along the sliver, spread {spread}");
    }

    #[test]
    fn empty_region_is_reported() {
        let mut p = Polytope::from_box(&[[0.0, 1.0]]);
        p.push(Halfspace::le(vec![1.0], -1.0));
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        assert!(matches!(sample_region(&p, 10, 0.0, &mut rng), Err(Error::EmptyRegion)));
    }

    #[test]
    fn chebyshev_center_of_square() {
        let (c, r) = chebyshev_center(&Polytope::from_box(&[[0.0, 2.0], [0.0, 2.0]])).unwrap();
        assert!((r - 1.0).abs() < 1e-9);
        assert!((c[0] - 1.0).abs() < 1e-9 && (c[1] - 1.0).abs() < 1e-9);
    }
}
