//! Activation-pattern algebra and the halfspace form of a pattern's support.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{self, dot, Network};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NeuronStatus {
    On,
    Off,
    Dc,
}

impl NeuronStatus {
    pub fn is_constrained(self) -> bool {
        self != NeuronStatus::Dc
    }

    fn key_char(self) -> char {
        match self {
            NeuronStatus::On => '1',
            NeuronStatus::Off => '0',
            NeuronStatus::Dc => 'x',
        }
    }
}

/// Per-hidden-layer neuron statuses. Layers are indexed from 0 (the first
/// hidden layer); neurons from 0 within their layer.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ActivationPattern {
    statuses: Vec<Vec<NeuronStatus>>,
}

/// Which neurons of a layer [`ActivationPattern::relax`] unconstrains.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RelaxTarget {
    All,
    Neuron(usize),
}

impl ActivationPattern {
    pub fn new(statuses: Vec<Vec<NeuronStatus>>) -> Self {
        ActivationPattern { statuses }
    }

    /// Every neuron of `net` set to dc.
    pub fn unconstrained(net: &Network) -> Self {
        Self::filled(&net.hidden_sizes(), NeuronStatus::Dc)
    }

    pub fn filled(sizes: &[usize], status: NeuronStatus) -> Self {
        ActivationPattern {
            statuses: sizes.iter().map(|&n| vec![status; n]).collect(),
        }
    }

    pub fn layers(&self) -> &[Vec<NeuronStatus>] {
        &self.statuses
    }

    pub fn layer(&self, l: usize) -> &[NeuronStatus] {
        &self.statuses[l]
    }

    pub fn get(&self, layer: usize, neuron: usize) -> NeuronStatus {
        self.statuses[layer][neuron]
    }

    pub fn set(&mut self, layer: usize, neuron: usize, status: NeuronStatus) {
        self.statuses[layer][neuron] = status;
    }

    pub fn layer_sizes(&self) -> Vec<usize> {
        self.statuses.iter().map(Vec::len).collect()
    }

    pub fn num_layers(&self) -> usize {
        self.statuses.len()
    }

    pub fn is_complete(&self) -> bool {
        self.iter().all(|(_, _, s)| s.is_constrained())
    }

    pub fn num_constrained(&self) -> usize {
        self.iter().filter(|(_, _, s)| s.is_constrained()).count()
    }

    /// `(layer, neuron, status)` in layer-major order.
    pub fn iter(&self) -> impl Iterator<Item = (usize, usize, NeuronStatus)> + '_ {
        self.statuses
            .iter()
            .enumerate()
            .flat_map(|(l, layer)| layer.iter().enumerate().map(move |(i, s)| (l, i, *s)))
    }

    /// Compact key: `1`/`0`/`x` per neuron, layers separated by `/`.
    pub fn key(&self) -> String {
        self.statuses
            .iter()
            .map(|layer| layer.iter().map(|s| s.key_char()).collect::<String>())
            .collect::<Vec<_>>()
            .join("/")
    }

    /// The `⪯` relation: every constrained neuron of `self` has the same status
    /// in `other`.
    pub fn is_subpattern(&self, other: &ActivationPattern) -> Result<bool> {
        if self.layer_sizes() != other.layer_sizes() {
            return Err(Error::Shape(format!(
                "patterns have layer sizes {:?} and {:?}",
                self.layer_sizes(),
                other.layer_sizes()
            )));
        }
        Ok(self
            .iter()
            .all(|(l, i, s)| !s.is_constrained() || other.get(l, i) == s))
    }

    /// Index of the frontier layer when the pattern is prefix-structured:
    /// layers before it complete, layers after it all-dc.
    pub fn frontier(&self) -> Option<usize> {
        let first_dc = self
            .statuses
            .iter()
            .position(|layer| layer.iter().any(|s| !s.is_constrained()));
        match first_dc {
            None => Some(self.statuses.len().saturating_sub(1)),
            Some(k) => {
                let rest_dc = self.statuses[k + 1..]
                    .iter()
                    .all(|layer| layer.iter().all(|s| !s.is_constrained()));
                rest_dc.then_some(k)
            }
        }
    }

    pub fn is_prefix_structured(&self) -> bool {
        self.frontier().is_some()
    }

    /// Copy with the target neuron(s) of `layer` set to dc.
    pub fn relax(&self, layer: usize, target: RelaxTarget) -> Result<ActivationPattern> {
        let statuses = self.statuses.get(layer).ok_or_else(|| {
            Error::Index(format!("layer {layer} of {}", self.statuses.len()))
        })?;
        let mut out = self.clone();
        match target {
            RelaxTarget::All => {
                if let Some(i) = statuses.iter().position(|s| !s.is_constrained()) {
                    return Err(Error::AlreadyUnconstrained { layer, neuron: i });
                }
                out.statuses[layer].fill(NeuronStatus::Dc);
            }
            RelaxTarget::Neuron(i) => {
                let s = statuses.get(i).ok_or_else(|| {
                    Error::Index(format!("neuron {i} of layer {layer} ({} neurons)", statuses.len()))
                })?;
                if !s.is_constrained() {
                    return Err(Error::AlreadyUnconstrained { layer, neuron: i });
                }
                out.statuses[layer][i] = NeuronStatus::Dc;
            }
        }
        Ok(out)
    }
}

impl fmt::Display for ActivationPattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.key())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Rel {
    /// `coeffs·x ≤ rhs`
    Le,
    /// `coeffs·x < rhs`
    Lt,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Halfspace {
    pub coeffs: Vec<f64>,
    pub rhs: f64,
    pub rel: Rel,
}

impl Halfspace {
    pub fn le(coeffs: Vec<f64>, rhs: f64) -> Self {
        Halfspace { coeffs, rhs, rel: Rel::Le }
    }

    pub fn lt(coeffs: Vec<f64>, rhs: f64) -> Self {
        Halfspace { coeffs, rhs, rel: Rel::Lt }
    }

    /// `rhs − coeffs·x`; positive inside.
    pub fn slack(&self, x: &[f64]) -> f64 {
        self.rhs - dot(&self.coeffs, x)
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        let s = self.slack(x);
        match self.rel {
            Rel::Le => s >= 0.0,
            Rel::Lt => s > 0.0,
        }
    }
}

/// Conjunction of halfspaces over input space. No rows means the whole space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Polytope {
    pub dim: usize,
    pub rows: Vec<Halfspace>,
}

impl Polytope {
    pub fn new(dim: usize) -> Self {
        Polytope { dim, rows: Vec::new() }
    }

    /// The `2·dim` rows of an axis-aligned box.
    pub fn from_box(bounds: &[[f64; 2]]) -> Self {
        let dim = bounds.len();
        let mut p = Polytope::new(dim);
        p.push_box(bounds);
        p
    }

    pub fn push(&mut self, row: Halfspace) {
        debug_assert_eq!(row.coeffs.len(), self.dim);
        self.rows.push(row);
    }

    pub fn push_box(&mut self, bounds: &[[f64; 2]]) {
        for (d, [lo, hi]) in bounds.iter().enumerate() {
            let mut e = vec![0.0; self.dim];
            e[d] = 1.0;
            self.rows.push(Halfspace::le(e.clone(), *hi));
            e[d] = -1.0;
            self.rows.push(Halfspace::le(e, -lo));
        }
    }

    pub fn extend(&mut self, rows: impl IntoIterator<Item = Halfspace>) {
        for r in rows {
            self.push(r);
        }
    }

    /// Exact membership: strict rows strictly.
    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.dim && self.rows.iter().all(|r| r.contains(x))
    }

    /// Membership with `margin` of slack demanded on strict rows and `tol`
    /// of violation tolerated on closed rows.
    pub fn contains_with_margin(&self, x: &[f64], margin: f64, tol: f64) -> bool {
        x.len() == self.dim
            && self.rows.iter().all(|r| {
                let s = r.slack(x);
                match r.rel {
                    Rel::Le => s >= -tol,
                    Rel::Lt => s >= margin,
                }
            })
    }

    /// Smallest distance from `x` to any row's hyperplane, in units of the
    /// row's Euclidean norm.
    pub fn min_boundary_distance(&self, x: &[f64]) -> f64 {
        self.rows
            .iter()
            .map(|r| {
                let n = norm(&r.coeffs);
                if n == 0.0 {
                    f64::INFINITY
                } else {
                    r.slack(x).abs() / n
                }
            })
            .fold(f64::INFINITY, f64::min)
    }
}

pub(crate) fn norm(v: &[f64]) -> f64 {
    v.iter().map(|a| a * a).sum::<f64>().sqrt()
}

/// Whether `x` lies in the input box and its forward pattern extends `sigma`.
pub fn supports(net: &Network, sigma: &ActivationPattern, x: &[f64]) -> Result<bool> {
    model::check_shape(net, sigma)?;
    let realized = model::pattern_of(net, x)?;
    Ok(net.in_input_box(x) && sigma.is_subpattern(&realized)?)
}

/// Halfspace form of `support(sigma)`: one row per constrained neuron
/// (off: `w·x ≤ −b`; on: `−w·x < b`) followed by the input-box rows.
pub fn halfspaces(net: &Network, sigma: &ActivationPattern) -> Result<Polytope> {
    model::check_shape(net, sigma)?;
    let frontier = sigma.frontier().ok_or_else(|| {
        Error::PatternStructure(format!("pattern {sigma} is not prefix-structured"))
    })?;
    let maps = model::affine_forms(net, sigma)?;
    let mut poly = Polytope::new(net.input_dim);
    for (l, layer) in sigma.layers().iter().enumerate().take(frontier + 1) {
        for (i, s) in layer.iter().enumerate() {
            let (w, b) = (&maps[l].w[i], maps[l].b[i]);
            match s {
                NeuronStatus::Off => poly.push(Halfspace::le(w.clone(), -b)),
                NeuronStatus::On => poly.push(Halfspace::lt(w.iter().map(|v| -v).collect(), b)),
                NeuronStatus::Dc => {}
            }
        }
    }
    poly.push_box(&net.input_box);
    Ok(poly)
}
