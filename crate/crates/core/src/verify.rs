//! Decides whether an activation pattern implies a linear property of the
//! input and the logits.
//!
//! The query is refuted by searching for an input in the pattern's support
//! that violates one clause of the property. Search is branch-and-bound over
//! the phases of unconstrained neurons: each node solves an LP in which fixed
//! neurons are exact and straddling ones use the triangle relaxation.
//! Candidate points are always re-checked by a forward pass before being
//! reported, so a `Violated` answer carries a concrete witness.
//!
//! Strict `on` constraints of the pattern are assumed with margin
//! `delta_strict` (pre-activation `≥ δ`); everything else the adversary sees
//! is closed, which only enlarges its search space.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lp::{self, LinearProgram, LpStatus, Relation};
use crate::model::{self, dot, Network};
use crate::pattern::{ActivationPattern, NeuronStatus};
use crate::{DELTA_STRICT, TAU_CX};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ClauseRel {
    Gt,
    Ge,
}

/// `x_coeffs·X + y_coeffs·Y  rel  rhs`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Clause {
    pub x_coeffs: Vec<f64>,
    pub y_coeffs: Vec<f64>,
    pub rhs: f64,
    pub rel: ClauseRel,
}

impl Clause {
    /// `lhs − rhs`; the clause holds when this is positive (or nonnegative
    /// for `ge`).
    pub fn margin(&self, x: &[f64], y: &[f64]) -> f64 {
        dot(&self.x_coeffs, x) + dot(&self.y_coeffs, y) - self.rhs
    }

    pub fn holds(&self, x: &[f64], y: &[f64]) -> bool {
        let m = self.margin(x, y);
        match self.rel {
            ClauseRel::Gt => m > 0.0,
            ClauseRel::Ge => m >= 0.0,
        }
    }
}

/// Conjunction of clauses.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearProperty {
    pub clauses: Vec<Clause>,
}

impl LinearProperty {
    /// `Y_target > Y_j` for every rival `j`.
    pub fn dominance(input_dim: usize, output_dim: usize, target: usize, rivals: &[usize]) -> Self {
        let clauses = rivals
            .iter()
            .map(|&j| {
                let mut y = vec![0.0; output_dim];
                y[target] += 1.0;
                y[j] -= 1.0;
                Clause {
                    x_coeffs: vec![0.0; input_dim],
                    y_coeffs: y,
                    rhs: 0.0,
                    rel: ClauseRel::Gt,
                }
            })
            .collect();
        LinearProperty { clauses }
    }

    pub fn holds(&self, x: &[f64], y: &[f64]) -> bool {
        self.clauses.iter().all(|c| c.holds(x, y))
    }

    fn check_dims(&self, net: &Network) -> Result<()> {
        for c in &self.clauses {
            if c.x_coeffs.len() != net.input_dim {
                return Err(Error::Dimension {
                    expected: net.input_dim,
                    got: c.x_coeffs.len(),
                });
            }
            if c.y_coeffs.len() != net.output_dim() {
                return Err(Error::Dimension {
                    expected: net.output_dim(),
                    got: c.y_coeffs.len(),
                });
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CheckStatus {
    /// `σ ∧ ¬property` has no solution.
    Holds,
    Violated,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CheckStats {
    pub nodes: usize,
    pub lp_calls: usize,
    /// Absent when timing is disabled for reproducible output.
    pub wall_ms: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckResult {
    pub status: CheckStatus,
    pub witness: Option<Vec<f64>>,
    pub stats: CheckStats,
}

impl CheckResult {
    pub fn holds(&self) -> bool {
        self.status == CheckStatus::Holds
    }
}

#[derive(Debug, Clone)]
pub struct VerifyOptions {
    pub node_cap: usize,
    pub delta_strict: f64,
    /// Tighten root bounds of straddling neurons with one LP per side.
    pub lp_tighten: bool,
    pub record_time: bool,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        VerifyOptions {
            node_cap: 1_000_000,
            delta_strict: DELTA_STRICT,
            lp_tighten: true,
            record_time: false,
        }
    }
}

/// Closed interval on each hidden neuron's pre-activation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NeuronBounds {
    pub pre: Vec<Vec<(f64, f64)>>,
}

impl NeuronBounds {
    /// Post-activation interval implied by the pre-activation interval.
    pub fn post(&self, layer: usize, neuron: usize) -> (f64, f64) {
        let (lo, hi) = self.pre[layer][neuron];
        (lo.max(0.0), hi.max(0.0))
    }
}

/// Interval propagation from the input box. Off neurons are clipped to
/// `(−∞, 0]` and on neurons to `[0, ∞)`.
pub fn bound_propagate(net: &Network, sigma: &ActivationPattern) -> Result<NeuronBounds> {
    model::check_shape(net, sigma)?;
    let phases = Phases::from_pattern(sigma, 0.0);
    propagate(net, &phases, None).ok_or_else(|| {
        Error::InfeasiblePattern(format!("interval bounds contradict pattern {sigma}"))
    })
}

/// Decides `sigma ⇒ prop` with default options.
pub fn check_implies(net: &Network, sigma: &ActivationPattern, prop: &LinearProperty) -> Result<CheckResult> {
    check_implies_with(net, sigma, prop, &VerifyOptions::default())
}

pub fn check_implies_with(
    net: &Network,
    sigma: &ActivationPattern,
    prop: &LinearProperty,
    opts: &VerifyOptions,
) -> Result<CheckResult> {
    model::check_shape(net, sigma)?;
    prop.check_dims(net)?;
    let start = Instant::now();
    let mut stats = CheckStats::default();
    let mut witness = None;
    for clause in &prop.clauses {
        let mut search = Search {
            net,
            sigma,
            clause,
            opts,
            stats: &mut stats,
        };
        if let Some(x) = search.run()? {
            if !validate_witness(net, sigma, prop, &x) {
                return Err(Error::Internal(format!("witness {x:?} failed revalidation")));
            }
            witness = Some(x);
            break;
        }
    }
    if opts.record_time {
        stats.wall_ms = Some(start.elapsed().as_secs_f64() * 1e3);
    }
    let status = if witness.is_some() {
        CheckStatus::Violated
    } else {
        CheckStatus::Holds
    };
    Ok(CheckResult { status, witness, stats })
}

/// True iff `x` is in the input box, satisfies `sigma` under closed semantics
/// (within `TAU_CX`), and some clause of `prop` fails at `forward(x)`.
pub fn validate_witness(net: &Network, sigma: &ActivationPattern, prop: &LinearProperty, x: &[f64]) -> bool {
    if model::check_shape(net, sigma).is_err() || !net.in_input_box(x) {
        return false;
    }
    let trace = model::forward_unchecked(net, x);
    for (l, i, s) in sigma.iter() {
        let a = trace.preacts[l][i];
        let ok = match s {
            NeuronStatus::On => a >= -TAU_CX,
            NeuronStatus::Off => a <= TAU_CX,
            NeuronStatus::Dc => true,
        };
        if !ok {
            return false;
        }
    }
    prop.clauses
        .iter()
        .any(|c| c.margin(x, &trace.logits) <= TAU_CX)
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Phase {
    Free,
    /// Pre-activation `≤ 0`.
    Off,
    /// Pre-activation `≥ floor`.
    On { floor: f64 },
}

#[derive(Debug, Clone)]
struct Phases(Vec<Vec<Phase>>);

impl Phases {
    fn from_pattern(sigma: &ActivationPattern, on_floor: f64) -> Self {
        Phases(
            sigma
                .layers()
                .iter()
                .map(|layer| {
                    layer
                        .iter()
                        .map(|s| match s {
                            NeuronStatus::On => Phase::On { floor: on_floor },
                            NeuronStatus::Off => Phase::Off,
                            NeuronStatus::Dc => Phase::Free,
                        })
                        .collect()
                })
                .collect(),
        )
    }
}

/// Interval propagation under `phases`, intersected with `floor` when given.
/// `None` when some interval becomes empty.
fn propagate(net: &Network, phases: &Phases, floor: Option<&NeuronBounds>) -> Option<NeuronBounds> {
    let mut post: Vec<(f64, f64)> = net.input_box.iter().map(|[lo, hi]| (*lo, *hi)).collect();
    let mut pre_all = Vec::with_capacity(net.num_hidden_layers());
    for (l, layer) in net.hidden_layers().iter().enumerate() {
        let mut pre_l = Vec::with_capacity(layer.out_dim());
        let mut next = Vec::with_capacity(layer.out_dim());
        for (i, (row, b)) in layer.weights.iter().zip(&layer.bias).enumerate() {
            let (mut lo, mut hi) = (*b, *b);
            for (w, (plo, phi)) in row.iter().zip(&post) {
                if *w >= 0.0 {
                    lo += w * plo;
                    hi += w * phi;
                } else {
                    lo += w * phi;
                    hi += w * plo;
                }
            }
            if let Some(f) = floor {
                let (flo, fhi) = f.pre[l][i];
                lo = lo.max(flo);
                hi = hi.min(fhi);
            }
            match phases.0[l][i] {
                Phase::Free => {}
                Phase::Off => hi = hi.min(0.0),
                Phase::On { floor } => lo = lo.max(floor),
            }
            if lo > hi {
                return None;
            }
            pre_l.push((lo, hi));
            next.push(match phases.0[l][i] {
                Phase::Off => (0.0, 0.0),
                _ => (lo.max(0.0), hi.max(0.0)),
            });
        }
        pre_all.push(pre_l);
        post = next;
    }
    Some(NeuronBounds { pre: pre_all })
}

/// How a neuron enters a node's LP.
#[derive(Debug, Clone, Copy)]
enum Encoding {
    /// Post-activation is zero; `row` asks for `pre ≤ 0`.
    Zero { row: bool },
    /// Post equals pre; `floor` asks for `pre ≥ floor`.
    Linear { floor: Option<f64> },
    /// Triangle relaxation on LP column `col`.
    Relaxed { col: usize, lo: f64, hi: f64 },
}

struct NodeLp {
    lp: LinearProgram,
    /// Affine expressions (last entry is the constant) of each hidden
    /// pre-activation over the LP columns.
    pre: Vec<Vec<Vec<f64>>>,
    out: Vec<Vec<f64>>,
    relaxed: Vec<(usize, usize)>,
}

fn encode(net: &Network, phases: &Phases, bounds: &NeuronBounds) -> NodeLp {
    let nx = net.input_dim;
    let mut enc: Vec<Vec<Encoding>> = Vec::with_capacity(phases.0.len());
    let mut relaxed = Vec::new();
    let mut ncols = nx;
    for (l, layer) in phases.0.iter().enumerate() {
        let mut row = Vec::with_capacity(layer.len());
        for (i, ph) in layer.iter().enumerate() {
            let (lo, hi) = bounds.pre[l][i];
            let e = match *ph {
                // Phase rows are always emitted: the intervals already
                // assume them, so the LP must too.
                Phase::Off => Encoding::Zero { row: true },
                Phase::On { floor } => Encoding::Linear { floor: Some(floor) },
                Phase::Free if hi <= 0.0 => Encoding::Zero { row: false },
                Phase::Free if lo >= 0.0 => Encoding::Linear { floor: None },
                Phase::Free => {
                    relaxed.push((l, i));
                    ncols += 1;
                    Encoding::Relaxed { col: ncols - 1, lo, hi }
                }
            };
            row.push(e);
        }
        enc.push(row);
    }

    let width = ncols + 1;
    let mut lp = LinearProgram::new(ncols);
    for (d, [lo, hi]) in net.input_box.iter().enumerate() {
        lp.bounds[d] = (*lo, *hi);
    }
    let mut post: Vec<Option<Vec<f64>>> = (0..nx)
        .map(|d| {
            let mut e = vec![0.0; width];
            e[d] = 1.0;
            Some(e)
        })
        .collect();
    let mut pre_all = Vec::with_capacity(enc.len());
    for (l, layer) in net.hidden_layers().iter().enumerate() {
        let pre_l = affine_exprs(layer, &post, width);
        let mut next = Vec::with_capacity(pre_l.len());
        for (i, p) in pre_l.iter().enumerate() {
            let (coeffs, c) = (&p[..ncols], p[ncols]);
            match enc[l][i] {
                Encoding::Zero { row } => {
                    if row {
                        lp.push(coeffs.to_vec(), Relation::Le, -c);
                    }
                    next.push(None);
                }
                Encoding::Linear { floor } => {
                    if let Some(f) = floor {
                        lp.push(coeffs.to_vec(), Relation::Ge, f - c);
                    }
                    next.push(Some(p.clone()));
                }
                Encoding::Relaxed { col, lo, hi } => {
                    lp.bounds[col] = (0.0, hi);
                    // z ≥ pre
                    let mut r: Vec<f64> = coeffs.iter().map(|v| -v).collect();
                    r[col] += 1.0;
                    lp.push(r, Relation::Ge, c);
                    // z ≤ hi·(pre − lo)/(hi − lo)
                    let s = hi / (hi - lo);
                    let mut r: Vec<f64> = coeffs.iter().map(|v| -s * v).collect();
                    r[col] += 1.0;
                    lp.push(r, Relation::Le, s * (c - lo));
                    let mut e = vec![0.0; width];
                    e[col] = 1.0;
                    next.push(Some(e));
                }
            }
        }
        pre_all.push(pre_l);
        post = next;
    }
    let out = affine_exprs(net.output_layer(), &post, width);
    NodeLp {
        lp,
        pre: pre_all,
        out,
        relaxed,
    }
}

fn affine_exprs(layer: &model::Layer, post: &[Option<Vec<f64>>], width: usize) -> Vec<Vec<f64>> {
    layer
        .weights
        .iter()
        .zip(&layer.bias)
        .map(|(row, b)| {
            let mut e = vec![0.0; width];
            e[width - 1] = *b;
            for (w, p) in row.iter().zip(post) {
                if let (Some(p), true) = (p, *w != 0.0) {
                    for (ek, pk) in e.iter_mut().zip(p) {
                        *ek += w * pk;
                    }
                }
            }
            e
        })
        .collect()
}

struct Search<'a> {
    net: &'a Network,
    sigma: &'a ActivationPattern,
    clause: &'a Clause,
    opts: &'a VerifyOptions,
    stats: &'a mut CheckStats,
}

struct Node {
    phases: Phases,
    bounds: NeuronBounds,
}

impl Search<'_> {
    /// A counterexample to the clause, or `None` when none exists.
    fn run(&mut self) -> Result<Option<Vec<f64>>> {
        let root_phases = Phases::from_pattern(self.sigma, self.opts.delta_strict);
        let Some(mut bounds) = propagate(self.net, &root_phases, None) else {
            return Ok(None);
        };
        if self.opts.lp_tighten {
            match self.tighten(&root_phases, bounds)? {
                Some(b) => bounds = b,
                None => return Ok(None),
            }
        }
        let mut stack = vec![Node {
            phases: root_phases,
            bounds,
        }];
        while let Some(node) = stack.pop() {
            self.stats.nodes += 1;
            if self.stats.nodes > self.opts.node_cap {
                return Err(Error::ResourceLimit {
                    nodes: self.stats.nodes - 1,
                });
            }
            let mut enc = encode(self.net, &node.phases, &node.bounds);
            self.add_negated_clause(&mut enc);
            let out = self.solve(&enc.lp)?;
            let point = match out.status {
                LpStatus::Infeasible => continue,
                LpStatus::Unbounded => {
                    return Err(Error::Internal("bounded verification LP reported unbounded".into()))
                }
                LpStatus::Optimal => out.point.expect("optimal outcome has a point"),
            };
            let x = &point[..self.net.input_dim];
            if self.is_counterexample(x) {
                return Ok(Some(x.to_vec()));
            }
            let Some(&(l, i)) = enc.relaxed.iter().max_by(|a, b| {
                let score = |&(l, i): &(usize, usize)| {
                    let (lo, hi) = node.bounds.pre[l][i];
                    lo.abs().min(hi.abs())
                };
                score(a).partial_cmp(&score(b)).unwrap().then(b.cmp(a))
            }) else {
                return Err(Error::Numerical(format!(
                    "exact leaf LP is feasible but its point {x:?} fails forward-pass revalidation"
                )));
            };
            for phase in [Phase::On { floor: 0.0 }, Phase::Off] {
                let mut phases = node.phases.clone();
                phases.0[l][i] = phase;
                if let Some(bounds) = propagate(self.net, &phases, Some(&node.bounds)) {
                    stack.push(Node { phases, bounds });
                }
            }
        }
        Ok(None)
    }

    fn solve(&mut self, lp: &LinearProgram) -> Result<lp::LpOutcome> {
        self.stats.lp_calls += 1;
        lp::solve(lp)
    }

    /// Adds `clause ≤ rhs` and sets the objective to minimize the clause.
    fn add_negated_clause(&self, enc: &mut NodeLp) {
        let ncols = enc.lp.num_vars();
        let mut coeffs = vec![0.0; ncols];
        let mut constant = 0.0;
        for (d, a) in self.clause.x_coeffs.iter().enumerate() {
            coeffs[d] += a;
        }
        for (k, a) in self.clause.y_coeffs.iter().enumerate() {
            if *a == 0.0 {
                continue;
            }
            for (c, e) in coeffs.iter_mut().zip(&enc.out[k]) {
                *c += a * e;
            }
            constant += a * enc.out[k][ncols];
        }
        enc.lp.objective = coeffs.iter().map(|v| -v).collect();
        enc.lp.push(coeffs, Relation::Le, self.clause.rhs - constant);
    }

    /// LP bounds on straddling unconstrained neurons at the root, layer by
    /// layer, with intervals re-propagated after each layer.
    fn tighten(&mut self, phases: &Phases, mut bounds: NeuronBounds) -> Result<Option<NeuronBounds>> {
        for l in 0..self.net.num_hidden_layers() {
            let targets: Vec<usize> = (0..bounds.pre[l].len())
                .filter(|&i| {
                    let (lo, hi) = bounds.pre[l][i];
                    phases.0[l][i] == Phase::Free && lo < 0.0 && hi > 0.0
                })
                .collect();
            if targets.is_empty() {
                continue;
            }
            let mut enc = encode(self.net, phases, &bounds);
            self.add_negated_clause(&mut enc);
            let ncols = enc.lp.num_vars();
            for i in targets {
                let expr = enc.pre[l][i].clone();
                let mut new = bounds.pre[l][i];
                for sign in [-1.0, 1.0] {
                    enc.lp.objective = expr[..ncols].iter().map(|v| sign * v).collect();
                    let out = self.solve(&enc.lp)?;
                    match out.status {
                        LpStatus::Infeasible => return Ok(None),
                        LpStatus::Unbounded => {
                            return Err(Error::Internal("bound-tightening LP reported unbounded".into()))
                        }
                        LpStatus::Optimal => {
                            let v = sign * out.value.expect("optimal outcome has a value") + expr[ncols];
                            let slack = 1e-7 * (1.0 + v.abs());
                            if sign < 0.0 {
                                new.0 = new.0.max(v - slack);
                            } else {
                                new.1 = new.1.min(v + slack);
                            }
                        }
                    }
                }
                if new.0 > new.1 {
                    return Ok(None);
                }
                bounds.pre[l][i] = new;
            }
            match propagate(self.net, phases, Some(&bounds)) {
                Some(b) => bounds = b,
                None => return Ok(None),
            }
        }
        Ok(Some(bounds))
    }

    /// Forward-pass check against the adversary's own semantics: pattern
    /// `on` neurons at or above `delta_strict`, `off` at or below zero, and
    /// the clause failing.
    fn is_counterexample(&self, x: &[f64]) -> bool {
        if !self.net.in_input_box(x) {
            return false;
        }
        let trace = model::forward_unchecked(self.net, x);
        let fine = crate::TAU_LP;
        for (l, i, s) in self.sigma.iter() {
            let a = trace.preacts[l][i];
            let ok = match s {
                NeuronStatus::On => a >= self.opts.delta_strict - fine,
                NeuronStatus::Off => a <= fine,
                NeuronStatus::Dc => true,
            };
            if !ok {
                return false;
            }
        }
        self.clause.margin(x, &trace.logits) <= TAU_CX
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::fix1;
    use NeuronStatus::*;

    fn p(v: Vec<Vec<NeuronStatus>>) -> ActivationPattern {
        ActivationPattern::new(v)
    }

    fn fix1_p() -> LinearProperty {
        LinearProperty::dominance(1, 2, 0, &[1])
    }

    fn fix1_i() -> LinearProperty {
        // Y0 − Y1 > 2x − 1
        LinearProperty {
            clauses: vec![Clause {
                x_coeffs: vec![-2.0],
                y_coeffs: vec![1.0, -1.0],
                rhs: -1.0,
                rel: ClauseRel::Gt,
            }],
        }
    }

    #[test]
    fn bound_propagation_examples() {
        let net = fix1();
        let b = bound_propagate(&net, &p(vec![vec![Dc]])).unwrap();
        assert_eq!(b.pre[0][0], (-2.0, 2.0));
        let b = bound_propagate(&net, &p(vec![vec![On]])).unwrap();
        assert_eq!(b.pre[0][0], (0.0, 2.0));
        assert_eq!(b.post(0, 0), (0.0, 2.0));

        let mut shifted = net.clone();
        shifted.input_box = vec![[-2.0, -1.0]];
        assert!(matches!(
            bound_propagate(&shifted, &p(vec![vec![On]])),
            Err(Error::InfeasiblePattern(_))
        ));
    }

    #[test]
    fn fix1_on_implies_dominance() {
        let r = check_implies(&fix1(), &p(vec![vec![On]]), &fix1_p()).unwrap();
        assert_eq!(r.status, CheckStatus::Holds);
        assert!(r.witness.is_none());
    }

    #[test]
    fn fix1_dc_violates_dominance() {
        let net = fix1();
        let sigma = p(vec![vec![Dc]]);
        let r = check_implies(&net, &sigma, &fix1_p()).unwrap();
        assert_eq!(r.status, CheckStatus::Violated);
        let w = r.witness.unwrap();
        assert!(w[0] <= 1e-9);
        let logits = crate::model::forward(&net, &w).unwrap().logits;
        assert!((logits[0] - logits[1]).abs() < 1e-9);
        assert!(validate_witness(&net, &sigma, &fix1_p(), &w));
    }

    #[test]
    fn fix1_dc_implies_interpolant() {
        let r = check_implies(&fix1(), &p(vec![vec![Dc]]), &fix1_i()).unwrap();
        assert_eq!(r.status, CheckStatus::Holds);
        let no_tighten = VerifyOptions {
            lp_tighten: false,
            ..VerifyOptions::default()
        };
        let r = check_implies_with(&fix1(), &p(vec![vec![Dc]]), &fix1_i(), &no_tighten).unwrap();
        assert_eq!(r.status, CheckStatus::Holds);
    }

    #[test]
    fn witness_validation_examples() {
        let net = fix1();
        assert!(validate_witness(&net, &p(vec![vec![Dc]]), &fix1_p(), &[-1.0]));
        assert!(!validate_witness(&net, &p(vec![vec![On]]), &fix1_p(), &[1.0]));
        assert!(!validate_witness(&net, &p(vec![vec![Dc]]), &fix1_p(), &[-3.0]));
    }

    #[test]
    fn node_cap_is_reported() {
        let opts = VerifyOptions {
            node_cap: 0,
            ..VerifyOptions::default()
        };
        let err = check_implies_with(&fix1(), &p(vec![vec![Dc]]), &fix1_p(), &opts).unwrap_err();
        assert!(matches!(err, Error::ResourceLimit { .. }));
    }

    #[test]
    fn dimension_mismatch_rejected() {
        let bad = LinearProperty::dominance(2, 2, 0, &[1]);
        assert!(matches!(
            check_implies(&fix1(), &p(vec![vec![Dc]]), &bad),
            Err(Error::Dimension { .. })
        ));
    }
}
