//! ReLU feed-forward networks, forward passes, and affine forms of
//! pre-activations within an activation pattern.
//!
//! Layers are stored in order; every layer but the last is a hidden ReLU
//! layer, the last one produces the logits. Inside the support of a pattern
//! whose leading hidden layers are fully constrained, every pre-activation up
//! to the first unconstrained layer is an affine function of the input.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::pattern::{ActivationPattern, NeuronStatus};

/// One dense layer: `weights[i][j]` connects unit `j` of the previous layer to
/// unit `i` of this one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    pub weights: Vec<Vec<f64>>,
    pub bias: Vec<f64>,
}

impl Layer {
    pub fn out_dim(&self) -> usize {
        self.bias.len()
    }

    /// `W·v + b`.
    pub fn apply(&self, v: &[f64]) -> Vec<f64> {
        self.weights
            .iter()
            .zip(&self.bias)
            .map(|(row, b)| dot(row, v) + b)
            .collect()
    }
}

/// A ReLU classifier together with the global input box.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Network {
    pub input_dim: usize,
    pub input_box: Vec<[f64; 2]>,
    pub layers: Vec<Layer>,
}

impl Network {
    /// Validates shapes and the input box.
    pub fn new(input_dim: usize, input_box: Vec<[f64; 2]>, layers: Vec<Layer>) -> Result<Self> {
        let net = Network {
            input_dim,
            input_box,
            layers,
        };
        net.validate()?;
        Ok(net)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        #[derive(Deserialize)]
        struct Raw {
            input_dim: usize,
            input_box: Option<Vec<[f64; 2]>>,
            layers: Vec<Layer>,
        }
        let raw: Raw = serde_json::from_str(text)?;
        let input_box = raw
            .input_box
            .ok_or_else(|| Error::Bounds("input_box is missing".into()))?;
        Network::new(raw.input_dim, input_box, raw.layers)
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 {
            return Err(Error::Shape("input_dim must be positive".into()));
        }
        if self.layers.len() < 2 {
            return Err(Error::Shape(format!(
                "need at least one hidden layer and an output layer, got {} layer(s)",
                self.layers.len()
            )));
        }
        if self.input_box.len() != self.input_dim {
            return Err(Error::Bounds(format!(
                "input_box has {} intervals for input_dim {}",
                self.input_box.len(),
                self.input_dim
            )));
        }
        for (d, [lo, hi]) in self.input_box.iter().enumerate() {
            if !lo.is_finite() || !hi.is_finite() || lo >= hi {
                return Err(Error::Bounds(format!(
                    "input_box[{d}] = [{lo}, {hi}] must be finite with lower < upper"
                )));
            }
        }
        let mut prev = self.input_dim;
        for (l, layer) in self.layers.iter().enumerate() {
            if layer.bias.is_empty() {
                return Err(Error::Shape(format!("layer {l} has no units")));
            }
            if layer.weights.len() != layer.bias.len() {
                return Err(Error::Shape(format!(
                    "layer {l}: {} weight rows but bias of length {}",
                    layer.weights.len(),
                    layer.bias.len()
                )));
            }
            for (i, row) in layer.weights.iter().enumerate() {
                if row.len() != prev {
                    return Err(Error::Shape(format!(
                        "layer {l} row {i} has {} columns, previous layer has {prev} units",
                        row.len()
                    )));
                }
                if row.iter().any(|w| !w.is_finite()) {
                    return Err(Error::Parse(format!("layer {l} row {i} has a non-finite weight")));
                }
            }
            if layer.bias.iter().any(|b| !b.is_finite()) {
                return Err(Error::Parse(format!("layer {l} has a non-finite bias")));
            }
            prev = layer.out_dim();
        }
        Ok(())
    }

    pub fn num_hidden_layers(&self) -> usize {
        self.layers.len() - 1
    }

    pub fn hidden_sizes(&self) -> Vec<usize> {
        self.hidden_layers().iter().map(Layer::out_dim).collect()
    }

    pub fn hidden_layers(&self) -> &[Layer] {
        &self.layers[..self.layers.len() - 1]
    }

    pub fn output_layer(&self) -> &Layer {
        self.layers.last().expect("validated network has an output layer")
    }

    pub fn output_dim(&self) -> usize {
        self.output_layer().out_dim()
    }

    pub fn num_hidden_neurons(&self) -> usize {
        self.hidden_sizes().iter().sum()
    }

    /// Unit widths `[N_0, N_1, ..., N_L]`.
    pub fn widths(&self) -> Vec<usize> {
        std::iter::once(self.input_dim)
            .chain(self.layers.iter().map(Layer::out_dim))
            .collect()
    }

    pub fn in_input_box(&self, x: &[f64]) -> bool {
        x.len() == self.input_dim
            && x
                .iter()
                .zip(&self.input_box)
                .all(|(v, [lo, hi])| *v >= *lo && *v <= *hi)
    }

    /// SHA-256 of the canonical (compact serde) JSON serialization.
    pub fn sha256(&self) -> String {
        let canonical = serde_json::to_string(self).expect("network serializes");
        hex::encode(Sha256::digest(canonical.as_bytes()))
    }

    fn check_input(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.input_dim {
            return Err(Error::Dimension {
                expected: self.input_dim,
                got: x.len(),
            });
        }
        Ok(())
    }
}

/// Reads and validates a network file.
pub fn load_network(path: impl AsRef<Path>) -> Result<Network> {
    let text = std::fs::read_to_string(path)?;
    Network::from_json(&text)
}

/// Pre-activations of every layer (hidden layers first, output layer last)
/// and the logits.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardTrace {
    pub preacts: Vec<Vec<f64>>,
    pub logits: Vec<f64>,
}

impl ForwardTrace {
    pub fn hidden_preacts(&self) -> &[Vec<f64>] {
        &self.preacts[..self.preacts.len() - 1]
    }
}

pub fn forward(net: &Network, x: &[f64]) -> Result<ForwardTrace> {
    net.check_input(x)?;
    Ok(forward_unchecked(net, x))
}

pub(crate) fn forward_unchecked(net: &Network, x: &[f64]) -> ForwardTrace {
    let mut preacts = Vec::with_capacity(net.layers.len());
    let mut act = x.to_vec();
    let last = net.layers.len() - 1;
    for (l, layer) in net.layers.iter().enumerate() {
        let pre = layer.apply(&act);
        if l < last {
            act = pre.iter().map(|v| v.max(0.0)).collect();
        }
        preacts.push(pre);
    }
    let logits = preacts[last].clone();
    ForwardTrace { preacts, logits }
}

/// Complete pattern realized by `x`; a zero pre-activation counts as off.
pub fn pattern_of(net: &Network, x: &[f64]) -> Result<ActivationPattern> {
    let trace = forward(net, x)?;
    Ok(pattern_from_trace(&trace))
}

pub(crate) fn pattern_from_trace(trace: &ForwardTrace) -> ActivationPattern {
    ActivationPattern::new(
        trace
            .hidden_preacts()
            .iter()
            .map(|layer| {
                layer
                    .iter()
                    .map(|&a| if a > 0.0 { NeuronStatus::On } else { NeuronStatus::Off })
                    .collect()
            })
            .collect(),
    )
}

/// `x ↦ w·x + b`, rows indexed by target coordinate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AffineMap {
    pub w: Vec<Vec<f64>>,
    pub b: Vec<f64>,
}

impl AffineMap {
    pub fn identity(dim: usize) -> Self {
        let w = (0..dim)
            .map(|i| (0..dim).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
            .collect();
        AffineMap {
            w,
            b: vec![0.0; dim],
        }
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        self.w
            .iter()
            .zip(&self.b)
            .map(|(row, b)| dot(row, x) + b)
            .collect()
    }

    pub fn out_dim(&self) -> usize {
        self.b.len()
    }

    /// `layer ∘ self`.
    fn then(&self, layer: &Layer) -> AffineMap {
        let in_dim = self.w.first().map_or(0, Vec::len);
        let mut w = vec![vec![0.0; in_dim]; layer.out_dim()];
        let mut b = layer.bias.clone();
        for (i, lrow) in layer.weights.iter().enumerate() {
            for (k, &lw) in lrow.iter().enumerate() {
                if lw == 0.0 {
                    continue;
                }
                for (wij, skj) in w[i].iter_mut().zip(&self.w[k]) {
                    *wij += lw * skj;
                }
                b[i] += lw * self.b[k];
            }
        }
        AffineMap { w, b }
    }
}

/// Affine forms of pre-activations for the longest valid prefix of layers.
///
/// Entry `l` describes layer `l` (hidden layers first, then the output layer)
/// and is present only when every hidden layer before `l` is fully
/// constrained in `sigma`.
pub fn affine_forms(net: &Network, sigma: &ActivationPattern) -> Result<Vec<AffineMap>> {
    check_shape(net, sigma)?;
    let mut maps = Vec::with_capacity(net.layers.len());
    let mut post = AffineMap::identity(net.input_dim);
    let hidden = net.num_hidden_layers();
    for (l, layer) in net.layers.iter().enumerate() {
        let pre = post.then(layer);
        maps.push(pre.clone());
        if l == hidden {
            break;
        }
        let statuses = sigma.layer(l);
        if statuses.contains(&NeuronStatus::Dc) {
            break;
        }
        post = pre;
        for (i, s) in statuses.iter().enumerate() {
            if *s == NeuronStatus::Off {
                post.w[i].iter_mut().for_each(|v| *v = 0.0);
                post.b[i] = 0.0;
            }
        }
    }
    Ok(maps)
}

/// Affine form of the pre-activations of a single layer.
pub fn affine_form(net: &Network, sigma: &ActivationPattern, layer: usize) -> Result<AffineMap> {
    if layer >= net.layers.len() {
        return Err(Error::Index(format!(
            "layer {layer} out of range for {} layers",
            net.layers.len()
        )));
    }
    let mut maps = affine_forms(net, sigma)?;
    if layer >= maps.len() {
        return Err(Error::PatternStructure(format!(
            "layer {layer} requested but hidden layer {} has an unconstrained neuron",
            maps.len() - 1
        )));
    }
    Ok(maps.swap_remove(layer))
}

/// Output map `(W, b)` valid on the whole support of a complete pattern.
pub fn output_affine(net: &Network, sigma: &ActivationPattern) -> Result<AffineMap> {
    check_shape(net, sigma)?;
    if !sigma.is_complete() {
        return Err(Error::IncompletePattern);
    }
    affine_form(net, sigma, net.layers.len() - 1)
}

pub(crate) fn check_shape(net: &Network, sigma: &ActivationPattern) -> Result<()> {
    let sizes = net.hidden_sizes();
    if sigma.layer_sizes() != sizes {
        return Err(Error::Shape(format!(
            "pattern layer sizes {:?} do not match network hidden sizes {:?}",
            sigma.layer_sizes(),
            sizes
        )));
    }
    Ok(())
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::fix1;
    use NeuronStatus::*;

    fn pat(v: Vec<Vec<NeuronStatus>>) -> ActivationPattern {
        ActivationPattern::new(v)
    }

    #[test]
    fn fix1_forward() {
        let net = fix1();
        let t = forward(&net, &[1.0]).unwrap();
        assert_eq!(t.preacts[0], vec![1.0]);
        assert_eq!(t.logits, vec![1.0, -1.0]);
        let t = forward(&net, &[-2.0]).unwrap();
        assert_eq!(t.preacts[0], vec![-2.0]);
        assert_eq!(t.logits, vec![0.0, 0.0]);
    }

    #[test]
    fn zero_input_propagates_biases() {
        let net = Network::new(
            2,
            vec![[-1.0, 1.0]; 2],
            vec![
                Layer {
                    weights: vec![vec![1.0, 2.0], vec![3.0, -1.0]],
                    bias: vec![0.5, -0.25],
                },
                Layer {
                    weights: vec![vec![2.0, 1.0]],
                    bias: vec![0.1],
                },
            ],
        )
        .unwrap();
        let t = forward(&net, &[0.0, 0.0]).unwrap();
        assert_eq!(t.logits, vec![2.0 * 0.5 + 0.1]);
    }

    #[test]
    fn forward_rejects_wrong_dimension() {
        let err = forward(&fix1(), &[1.0, 2.0]).unwrap_err();
        assert!(matches!(err, Error::Dimension { expected: 1, got: 2 }));
    }

    #[test]
    fn fix1_patterns() {
        let net = fix1();
        assert_eq!(pattern_of(&net, &[1.0]).unwrap(), pat(vec![vec![On]]));
        assert_eq!(pattern_of(&net, &[0.0]).unwrap(), pat(vec![vec![Off]]));
        assert_eq!(pattern_of(&net, &[-1.0]).unwrap(), pat(vec![vec![Off]]));
    }

    #[test]
    fn fix1_affine_forms() {
        let net = fix1();
        let maps = affine_forms(&net, &pat(vec![vec![On]])).unwrap();
        assert_eq!(maps[0], AffineMap { w: vec![vec![1.0]], b: vec![0.0] });
        assert_eq!(maps[1], AffineMap { w: vec![vec![1.0], vec![-1.0]], b: vec![0.0, 0.0] });

        let out = output_affine(&net, &pat(vec![vec![Off]])).unwrap();
        assert_eq!(out, AffineMap { w: vec![vec![0.0], vec![0.0]], b: vec![0.0, 0.0] });

        let err = affine_form(&net, &pat(vec![vec![Dc]]), 1).unwrap_err();
        assert!(matches!(err, Error::PatternStructure(_)));
        let err = output_affine(&net, &pat(vec![vec![Dc]])).unwrap_err();
        assert!(matches!(err, Error::IncompletePattern));
    }

    #[test]
    fn shape_mismatch_rejected() {
        let text = r#"{"input_dim": 1, "input_box": [[-1, 1]],
            "layers": [{"weights": [[1.0]], "bias": [0.0]},
                       {"weights": [[1.0], [2.0]], "bias": [0.0, 0.0]},
                       {"weights": [[1.0, 1.0, 1.0], [1.0, 1.0, 1.0]], "bias": [0.0, 0.0]}]}"#;
        assert!(matches!(Network::from_json(text), Err(Error::Shape(_))));
    }

    #[test]
    fn bad_box_rejected() {
        let missing = r#"{"input_dim": 1, "layers": [{"weights": [[1.0]], "bias": [0.0]},
            {"weights": [[1.0]], "bias": [0.0]}]}"#;
        assert!(matches!(Network::from_json(missing), Err(Error::Bounds(_))));
        let inverted = r#"{"input_dim": 1, "input_box": [[1, -1]],
            "layers": [{"weights": [[1.0]], "bias": [0.0]}, {"weights": [[1.0]], "bias": [0.0]}]}"#;
        assert!(matches!(Network::from_json(inverted), Err(Error::Bounds(_))));
        assert!(matches!(Network::from_json("{not json"), Err(Error::Parse(_))));
    }

    #[test]
    fn hash_is_stable() {
        assert_eq!(fix1().sha256(), fix1().sha256());
        assert_eq!(fix1().sha256().len(), 64);
    }
}
