//! Dense two-phase simplex.
//!
//! Problems here are small (tens of variables and rows), so a full tableau is
//! kept. Pricing is Dantzig's largest-coefficient rule; after a run of
//! degenerate pivots the solver switches to Bland's rule, which cannot cycle.
//! If a run hits the pivot cap or returns a point that fails the residual
//! check, it is restarted once under Bland's rule from the start.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pattern::{Polytope, Rel};
use crate::{DELTA_STRICT, TAU_LP};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Relation {
    Le,
    Ge,
    Eq,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Constraint {
    pub coeffs: Vec<f64>,
    pub rel: Relation,
    pub rhs: f64,
}

impl Constraint {
    pub fn new(coeffs: Vec<f64>, rel: Relation, rhs: f64) -> Self {
        Constraint { coeffs, rel, rhs }
    }

    fn residual(&self, x: &[f64]) -> f64 {
        let lhs: f64 = self.coeffs.iter().zip(x).map(|(a, b)| a * b).sum();
        match self.rel {
            Relation::Le => lhs - self.rhs,
            Relation::Ge => self.rhs - lhs,
            Relation::Eq => (lhs - self.rhs).abs(),
        }
    }
}

/// Maximize `objective·v` subject to `constraints` and per-variable bounds.
/// Bounds may be infinite on either side.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearProgram {
    pub objective: Vec<f64>,
    pub constraints: Vec<Constraint>,
    pub bounds: Vec<(f64, f64)>,
}

impl LinearProgram {
    /// Zero objective, no rows, every variable free.
    pub fn new(num_vars: usize) -> Self {
        LinearProgram {
            objective: vec![0.0; num_vars],
            constraints: Vec::new(),
            bounds: vec![(f64::NEG_INFINITY, f64::INFINITY); num_vars],
        }
    }

    pub fn num_vars(&self) -> usize {
        self.objective.len()
    }

    pub fn push(&mut self, coeffs: Vec<f64>, rel: Relation, rhs: f64) {
        debug_assert_eq!(coeffs.len(), self.num_vars());
        self.constraints.push(Constraint::new(coeffs, rel, rhs));
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LpOutcome {
    pub status: LpStatus,
    pub point: Option<Vec<f64>>,
    pub value: Option<f64>,
}

impl LpOutcome {
    fn infeasible() -> Self {
        LpOutcome {
            status: LpStatus::Infeasible,
            point: None,
            value: None,
        }
    }

    pub fn is_feasible(&self) -> bool {
        self.status != LpStatus::Infeasible
    }
}

const EPS_COST: f64 = 1e-9;
const EPS_PIVOT: f64 = 1e-9;
const DEGENERATE_RUN: usize = 25;

pub fn solve(lp: &LinearProgram) -> Result<LpOutcome> {
    let n = lp.num_vars();
    if lp.bounds.len() != n || lp.constraints.iter().any(|c| c.coeffs.len() != n) {
        return Err(Error::Shape("linear program rows and bounds must match the variable count".into()));
    }
    if lp.bounds.iter().any(|(lo, hi)| lo > hi) {
        return Ok(LpOutcome::infeasible());
    }
    match solve_once(lp, false) {
        Ok(out) => Ok(out),
        Err(first) => solve_once(lp, true).map_err(|second| {
            Error::Numerical(format!("simplex failed twice: {first}; {second}"))
        }),
    }
}

/// Phase-1 feasibility for a polytope intersected with variable bounds.
/// Strict rows are tightened by `DELTA_STRICT`, so a returned point meets them
/// with positive margin.
pub fn feasible_point(poly: &Polytope, bounds: &[(f64, f64)]) -> Result<LpOutcome> {
    solve(&polytope_program(poly, bounds, vec![0.0; poly.dim]))
}

/// `maximize objective·x` over a polytope, strict rows tightened by
/// `DELTA_STRICT`.
pub fn polytope_program(poly: &Polytope, bounds: &[(f64, f64)], objective: Vec<f64>) -> LinearProgram {
    let mut lp = LinearProgram::new(poly.dim);
    lp.objective = objective;
    lp.bounds = bounds.to_vec();
    for row in &poly.rows {
        let rhs = match row.rel {
            Rel::Le => row.rhs,
            Rel::Lt => row.rhs - DELTA_STRICT,
        };
        lp.push(row.coeffs.clone(), Relation::Le, rhs);
    }
    lp
}

/// How an original variable is rebuilt from nonnegative columns.
enum VarMap {
    /// `x = offset + y`
    Shifted { col: usize, offset: f64 },
    /// `x = offset − y`
    Mirrored { col: usize, offset: f64 },
    /// `x = y⁺ − y⁻`
    Split { pos: usize, neg: usize },
}

struct Row {
    coeffs: Vec<f64>,
    rel: Relation,
    rhs: f64,
}

#[derive(Debug)]
struct SimplexFailure(String);

impl std::fmt::Display for SimplexFailure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

fn solve_once(lp: &LinearProgram, bland_only: bool) -> std::result::Result<LpOutcome, SimplexFailure> {
    // Substitute variables so every column is nonnegative.
    let mut maps = Vec::with_capacity(lp.num_vars());
    let mut ncols = 0;
    let mut bound_rows = Vec::new();
    for &(lo, hi) in &lp.bounds {
        if lo.is_finite() {
            maps.push(VarMap::Shifted { col: ncols, offset: lo });
            if hi.is_finite() {
                bound_rows.push((ncols, hi - lo));
            }
            ncols += 1;
        } else if hi.is_finite() {
            maps.push(VarMap::Mirrored { col: ncols, offset: hi });
            ncols += 1;
        } else {
            maps.push(VarMap::Split { pos: ncols, neg: ncols + 1 });
            ncols += 2;
        }
    }
    let nstruct = ncols;

    let mut rows: Vec<Row> = Vec::with_capacity(lp.constraints.len() + bound_rows.len());
    for c in &lp.constraints {
        let mut coeffs = vec![0.0; nstruct];
        let mut rhs = c.rhs;
        for (a, m) in c.coeffs.iter().zip(&maps) {
            if *a == 0.0 {
                continue;
            }
            match *m {
                VarMap::Shifted { col, offset } => {
                    coeffs[col] += a;
                    rhs -= a * offset;
                }
                VarMap::Mirrored { col, offset } => {
                    coeffs[col] -= a;
                    rhs -= a * offset;
                }
                VarMap::Split { pos, neg } => {
                    coeffs[pos] += a;
                    coeffs[neg] -= a;
                }
            }
        }
        rows.push(Row { coeffs, rel: c.rel, rhs });
    }
    for (col, width) in bound_rows {
        let mut coeffs = vec![0.0; nstruct];
        coeffs[col] = 1.0;
        rows.push(Row { coeffs, rel: Relation::Le, rhs: width });
    }
    for r in &mut rows {
        if r.rhs < 0.0 {
            r.coeffs.iter_mut().for_each(|v| *v = -*v);
            r.rhs = -r.rhs;
            r.rel = match r.rel {
                Relation::Le => Relation::Ge,
                Relation::Ge => Relation::Le,
                Relation::Eq => Relation::Eq,
            };
        }
    }

    let mut obj_struct = vec![0.0; nstruct];
    for (c, m) in lp.objective.iter().zip(&maps) {
        match *m {
            VarMap::Shifted { col, .. } => obj_struct[col] += c,
            VarMap::Mirrored { col, .. } => obj_struct[col] -= c,
            VarMap::Split { pos, neg } => {
                obj_struct[pos] += c;
                obj_struct[neg] -= c;
            }
        }
    }

    let m = rows.len();
    let n_slack = rows.iter().filter(|r| r.rel != Relation::Eq).count();
    let n_art = rows.iter().filter(|r| r.rel != Relation::Le).count();
    let total = nstruct + n_slack + n_art;
    let art_start = nstruct + n_slack;
    let mut tab = Tableau::new(m, total);
    let mut basis = vec![0usize; m];
    let mut slack = nstruct;
    let mut art = art_start;
    for (i, r) in rows.iter().enumerate() {
        tab.row_mut(i)[..nstruct].copy_from_slice(&r.coeffs);
        tab.set_rhs(i, r.rhs);
        match r.rel {
            Relation::Le => {
                tab.set(i, slack, 1.0);
                basis[i] = slack;
                slack += 1;
            }
            Relation::Ge => {
                tab.set(i, slack, -1.0);
                slack += 1;
                tab.set(i, art, 1.0);
                basis[i] = art;
                art += 1;
            }
            Relation::Eq => {
                tab.set(i, art, 1.0);
                basis[i] = art;
                art += 1;
            }
        }
    }

    let scale = 1.0 + rows.iter().map(|r| r.rhs.abs()).fold(0.0, f64::max);
    let max_pivots = 50 * (m + total) + 1000;
    let mut active = vec![true; m];

    if n_art > 0 {
        let mut phase1 = vec![0.0; total];
        for v in &mut phase1[art_start..] {
            *v = -1.0;
        }
        let allowed = vec![true; total];
        match run_simplex(&mut tab, &mut basis, &active, &phase1, &allowed, bland_only, max_pivots)? {
            Pivoting::Optimal => {}
            Pivoting::Unbounded => return Err(SimplexFailure("phase 1 reported unbounded".into())),
        }
        let infeas: f64 = (0..m)
            .filter(|&i| basis[i] >= art_start)
            .map(|i| tab.rhs(i))
            .sum();
        if infeas > 1e-9 * scale {
            return Ok(LpOutcome::infeasible());
        }
        // Pivot remaining artificials out of the basis; rows where that is
        // impossible are redundant.
        for i in 0..m {
            if basis[i] < art_start {
                continue;
            }
            let col = (0..art_start)
                .filter(|&j| tab.get(i, j).abs() > EPS_PIVOT)
                .max_by(|&a, &b| {
                    tab.get(i, a)
                        .abs()
                        .partial_cmp(&tab.get(i, b).abs())
                        .unwrap()
                        .then(b.cmp(&a))
                });
            match col {
                Some(j) => {
                    tab.pivot(i, j);
                    basis[i] = j;
                }
                None => active[i] = false,
            }
        }
    }

    let mut phase2 = vec![0.0; total];
    phase2[..nstruct].copy_from_slice(&obj_struct);
    let mut allowed = vec![true; total];
    for a in &mut allowed[art_start..] {
        *a = false;
    }
    let status = run_simplex(&mut tab, &mut basis, &active, &phase2, &allowed, bland_only, max_pivots)?;
    if status == Pivoting::Unbounded {
        return Ok(LpOutcome {
            status: LpStatus::Unbounded,
            point: None,
            value: None,
        });
    }

    let mut y = vec![0.0; total];
    for i in 0..m {
        if active[i] {
            y[basis[i]] = tab.rhs(i).max(0.0);
        }
    }
    let mut x: Vec<f64> = maps
        .iter()
        .map(|m| match *m {
            VarMap::Shifted { col, offset } => offset + y[col],
            VarMap::Mirrored { col, offset } => offset - y[col],
            VarMap::Split { pos, neg } => y[pos] - y[neg],
        })
        .collect();
    for (v, &(lo, hi)) in x.iter_mut().zip(&lp.bounds) {
        *v = v.clamp(lo, hi);
    }

    for (k, c) in lp.constraints.iter().enumerate() {
        let r = c.residual(&x);
        let tol = TAU_LP * (1.0 + c.rhs.abs());
        if r > tol || r.is_nan() {
            return Err(SimplexFailure(format!("row {k} residual {r:e} exceeds {tol:e}")));
        }
    }
    let value = lp.objective.iter().zip(&x).map(|(a, b)| a * b).sum();
    Ok(LpOutcome {
        status: LpStatus::Optimal,
        point: Some(x),
        value: Some(value),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Pivoting {
    Optimal,
    Unbounded,
}

/// Maximizes `obj` from the current basic feasible solution.
fn run_simplex(
    tab: &mut Tableau,
    basis: &mut [usize],
    active: &[bool],
    obj: &[f64],
    allowed: &[bool],
    bland_only: bool,
    max_pivots: usize,
) -> std::result::Result<Pivoting, SimplexFailure> {
    let m = basis.len();
    let total = obj.len();
    // Reduced costs r_j = c_B·B⁻¹A_j − c_j; entering candidates have r_j < 0.
    let mut reduced = vec![0.0; total];
    for (j, rj) in reduced.iter_mut().enumerate() {
        let mut v = -obj[j];
        for i in 0..m {
            if active[i] {
                v += obj[basis[i]] * tab.get(i, j);
            }
        }
        *rj = v;
    }
    let mut bland = bland_only;
    let mut degenerate = 0usize;
    for _ in 0..max_pivots {
        let entering = if bland {
            (0..total).find(|&j| allowed[j] && reduced[j] < -EPS_COST)
        } else {
            let mut best: Option<(usize, f64)> = None;
            for j in 0..total {
                if allowed[j] && reduced[j] < -EPS_COST && best.is_none_or(|(_, v)| reduced[j] < v) {
                    best = Some((j, reduced[j]));
                }
            }
            best.map(|(j, _)| j)
        };
        let Some(col) = entering else {
            return Ok(Pivoting::Optimal);
        };

        let mut leave: Option<(usize, f64)> = None;
        for i in 0..m {
            if !active[i] {
                continue;
            }
            let a = tab.get(i, col);
            if a > EPS_PIVOT {
                let ratio = tab.rhs(i) / a;
                leave = match leave {
                    None => Some((i, ratio)),
                    Some((bi, br)) => {
                        if ratio < br - 1e-12 || (ratio <= br + 1e-12 && basis[i] < basis[bi]) {
                            Some((i, ratio))
                        } else {
                            Some((bi, br))
                        }
                    }
                };
            }
        }
        let Some((row, ratio)) = leave else {
            return Ok(Pivoting::Unbounded);
        };

        if ratio.abs() <= 1e-12 {
            degenerate += 1;
            if degenerate > DEGENERATE_RUN {
                bland = true;
            }
        } else {
            degenerate = 0;
        }

        tab.pivot(row, col);
        let factor = reduced[col];
        if factor != 0.0 {
            let prow = tab.row(row);
            for (rj, pj) in reduced.iter_mut().zip(prow) {
                *rj -= factor * pj;
            }
        }
        basis[row] = col;
    }
    Err(SimplexFailure(format!("pivot cap of {max_pivots} reached")))
}

struct Tableau {
    cols: usize,
    stride: usize,
    data: Vec<f64>,
}

impl Tableau {
    fn new(rows: usize, cols: usize) -> Self {
        let stride = cols + 1;
        Tableau {
            cols,
            stride,
            data: vec![0.0; rows * stride],
        }
    }

    fn rows(&self) -> usize {
        self.data.len() / self.stride
    }

    fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.stride + j]
    }

    fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.stride + j] = v;
    }

    fn rhs(&self, i: usize) -> f64 {
        self.data[i * self.stride + self.cols]
    }

    fn set_rhs(&mut self, i: usize, v: f64) {
        self.data[i * self.stride + self.cols] = v;
    }

    /// Includes the rhs entry.
    fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.stride..(i + 1) * self.stride]
    }

    fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.stride..(i + 1) * self.stride]
    }

    fn pivot(&mut self, row: usize, col: usize) {
        let stride = self.stride;
        let p = self.get(row, col);
        {
            let r = self.row_mut(row);
            for v in r.iter_mut() {
                *v /= p;
            }
            r[col] = 1.0;
        }
        let pivot_row: Vec<f64> = self.row(row).to_vec();
        for i in 0..self.rows() {
            if i == row {
                continue;
            }
            let f = self.data[i * stride + col];
            if f == 0.0 {
                continue;
            }
            let r = &mut self.data[i * stride..(i + 1) * stride];
            for (v, pv) in r.iter_mut().zip(&pivot_row) {
                *v -= f * pv;
                if v.abs() < 1e-13 {
                    *v = 0.0;
                }
            }
            r[col] = 0.0;
        }
    }
}
