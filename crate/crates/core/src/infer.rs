//! Region inference: greedy pattern minimization, the baseline region
//! construction, and the interpolant-based construction.
//!
//! The baseline minimizes the seed's pattern against the dominance property
//! directly and falls back to the seed cell intersected with the property's
//! affine halfspaces when the cell alone does not imply it. The interpolant
//! construction instead minimizes against
//! `Y_c − Y_j > dW_j·X + db_j − ε_j`, which the seed cell always implies,
//! and then adds the critical halfspaces `dW_j·X + db_j ≥ ε_j`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{self, forward, output_affine, pattern_of, Network};
use crate::pattern::{halfspaces, ActivationPattern, Halfspace, Polytope, RelaxTarget};
use crate::sampling;
use crate::verify::{check_implies_with, Clause, ClauseRel, LinearProperty, VerifyOptions};

/// `Y_target > Y_j` for every rival `j`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DominanceProperty {
    pub target: usize,
    pub rivals: Vec<usize>,
}

impl DominanceProperty {
    pub fn new(target: usize, rivals: Vec<usize>) -> Result<Self> {
        if rivals.is_empty() {
            return Err(Error::Precondition("dominance property needs at least one rival".into()));
        }
        if rivals.contains(&target) {
            return Err(Error::Precondition(format!("target class {target} listed as its own rival")));
        }
        Ok(DominanceProperty { target, rivals })
    }

    /// Target against every other class.
    pub fn against_all(target: usize, num_classes: usize) -> Self {
        DominanceProperty {
            target,
            rivals: (0..num_classes).filter(|&j| j != target).collect(),
        }
    }

    pub fn to_linear(&self, net: &Network) -> LinearProperty {
        LinearProperty::dominance(net.input_dim, net.output_dim(), self.target, &self.rivals)
    }

    /// `Y_target − Y_j` per rival.
    pub fn margins(&self, logits: &[f64]) -> Vec<f64> {
        self.rivals.iter().map(|&j| logits[self.target] - logits[j]).collect()
    }

    pub fn holds(&self, logits: &[f64]) -> bool {
        self.margins(logits).iter().all(|m| *m > 0.0)
    }

    fn check(&self, net: &Network) -> Result<()> {
        let k = net.output_dim();
        if self.target >= k || self.rivals.iter().any(|&j| j >= k) {
            return Err(Error::Index(format!(
                "property classes {}/{:?} out of range for {k} outputs",
                self.target, self.rivals
            )));
        }
        Ok(())
    }
}

/// Per-rival interpolant data derived from the seed's cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InterpolantSpec {
    pub property: DominanceProperty,
    /// `W_c − W_j` per rival.
    pub d_w: Vec<Vec<f64>>,
    /// `b_c − b_j` per rival.
    pub d_b: Vec<f64>,
    pub epsilons: Vec<f64>,
    pub logit_factor: f64,
}

impl InterpolantSpec {
    /// Clauses `Y_c − Y_j − dW_j·X > db_j − ε_j`.
    pub fn to_property(&self, net: &Network) -> LinearProperty {
        let k = net.output_dim();
        let clauses = self
            .property
            .rivals
            .iter()
            .enumerate()
            .map(|(r, &j)| {
                let mut y = vec![0.0; k];
                y[self.property.target] += 1.0;
                y[j] -= 1.0;
                Clause {
                    x_coeffs: self.d_w[r].iter().map(|v| -v).collect(),
                    y_coeffs: y,
                    rhs: self.d_b[r] - self.epsilons[r],
                    rel: ClauseRel::Gt,
                }
            })
            .collect();
        LinearProperty { clauses }
    }

    /// `−dW_j·x ≤ db_j − ε_j`, i.e. `dW_j·x + db_j ≥ ε_j`.
    pub fn critical_rows(&self) -> Vec<Halfspace> {
        self.d_w
            .iter()
            .zip(&self.d_b)
            .zip(&self.epsilons)
            .map(|((w, b), e)| Halfspace::le(w.iter().map(|v| -v).collect(), b - e))
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RegionMode {
    /// Minimized pattern that implies the property by itself.
    #[serde(rename = "baseline-minimal")]
    BaselineMinimal,
    /// Seed cell intersected with the property's affine halfspaces.
    #[serde(rename = "baseline-affine")]
    BaselineAffine,
    #[serde(rename = "interpolant")]
    Interpolant,
}

impl RegionMode {
    pub fn as_str(self) -> &'static str {
        match self {
            RegionMode::BaselineMinimal => "baseline-minimal",
            RegionMode::BaselineAffine => "baseline-affine",
            RegionMode::Interpolant => "interpolant",
        }
    }
}

/// A pattern plus extra halfspaces on which `property` holds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionCertificate {
    pub mode: RegionMode,
    pub pattern: ActivationPattern,
    pub extra_rows: Vec<Halfspace>,
    pub property: DominanceProperty,
    pub seed: Vec<f64>,
    pub epsilons: Vec<f64>,
    pub logit_factor: Option<f64>,
    pub net_sha256: String,
    pub delta_strict: f64,
}

impl RegionCertificate {
    /// Pattern halfspaces (including the input box) followed by the extra rows.
    pub fn region(&self, net: &Network) -> Result<Polytope> {
        let mut poly = halfspaces(net, &self.pattern)?;
        for row in &self.extra_rows {
            if row.coeffs.len() != net.input_dim {
                return Err(Error::Dimension {
                    expected: net.input_dim,
                    got: row.coeffs.len(),
                });
            }
        }
        poly.extend(self.extra_rows.iter().cloned());
        Ok(poly)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("certificate serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

#[derive(Debug, Clone, Default)]
pub struct InferOptions {
    pub verify: VerifyOptions,
    /// Keep relaxing shallower layers after the frontier layer. The result is
    /// generally not prefix-structured and then has no halfspace form.
    pub continue_past_frontier: bool,
}

/// Greedy relaxation of a complete pattern that preserves `sigma ⇒ prop`.
pub fn find_minimal(net: &Network, sigma: &ActivationPattern, prop: &LinearProperty) -> Result<ActivationPattern> {
    find_minimal_with(net, sigma, prop, &InferOptions::default())
}

pub fn find_minimal_with(
    net: &Network,
    sigma: &ActivationPattern,
    prop: &LinearProperty,
    opts: &InferOptions,
) -> Result<ActivationPattern> {
    model::check_shape(net, sigma)?;
    if !sigma.is_complete() {
        return Err(Error::Precondition(format!("pattern {sigma} is not complete")));
    }
    if !check_implies_with(net, sigma, prop, &opts.verify)?.holds() {
        return Err(Error::Precondition(format!("pattern {sigma} does not imply the property")));
    }
    relax_greedily(net, sigma, prop, opts)
}

/// Deepest layer first: drop the whole layer if that keeps the implication,
/// otherwise drop single neurons in ascending order and stop.
fn relax_greedily(
    net: &Network,
    sigma: &ActivationPattern,
    prop: &LinearProperty,
    opts: &InferOptions,
) -> Result<ActivationPattern> {
    let holds = |p: &ActivationPattern| -> Result<bool> {
        Ok(check_implies_with(net, p, prop, &opts.verify)?.holds())
    };
    let mut cur = sigma.clone();
    for l in (0..cur.num_layers()).rev() {
        if cur.layer(l).iter().all(|s| s.is_constrained()) {
            let whole = cur.relax(l, RelaxTarget::All)?;
            if holds(&whole)? {
                cur = whole;
                continue;
            }
        }
        for i in 0..cur.layer(l).len() {
            if !cur.get(l, i).is_constrained() {
                continue;
            }
            let cand = cur.relax(l, RelaxTarget::Neuron(i))?;
            if holds(&cand)? {
                cur = cand;
            }
        }
        if !opts.continue_past_frontier {
            break;
        }
    }
    Ok(cur)
}

fn strict_margins(net: &Network, prop: &DominanceProperty, x0: &[f64]) -> Result<Vec<f64>> {
    prop.check(net)?;
    let logits = forward(net, x0)?.logits;
    let margins = prop.margins(&logits);
    for (m, &j) in margins.iter().zip(&prop.rivals) {
        if *m == 0.0 {
            return Err(Error::DegenerateMargin {
                target: prop.target,
                rival: j,
            });
        }
        if *m < 0.0 {
            return Err(Error::Precondition(format!(
                "seed does not predict class {} over class {j} (margin {m})",
                prop.target
            )));
        }
    }
    Ok(margins)
}

/// Baseline region for a seed predicted as `prop.target`.
pub fn get_convex_region_baseline(net: &Network, prop: &DominanceProperty, x0: &[f64]) -> Result<RegionCertificate> {
    get_convex_region_baseline_with(net, prop, x0, &InferOptions::default())
}

pub fn get_convex_region_baseline_with(
    net: &Network,
    prop: &DominanceProperty,
    x0: &[f64],
    opts: &InferOptions,
) -> Result<RegionCertificate> {
    strict_margins(net, prop, x0).map_err(|e| match e {
        Error::DegenerateMargin { .. } => Error::Precondition(e.to_string()),
        other => other,
    })?;
    let sigma = pattern_of(net, x0)?;
    let p = prop.to_linear(net);
    let base = RegionCertificate {
        mode: RegionMode::BaselineMinimal,
        pattern: sigma.clone(),
        extra_rows: Vec::new(),
        property: prop.clone(),
        seed: x0.to_vec(),
        epsilons: Vec::new(),
        logit_factor: None,
        net_sha256: net.sha256(),
        delta_strict: opts.verify.delta_strict,
    };
    if check_implies_with(net, &sigma, &p, &opts.verify)?.holds() {
        let pattern = relax_greedily(net, &sigma, &p, opts)?;
        return Ok(RegionCertificate { pattern, ..base });
    }
    let out = output_affine(net, &sigma)?;
    let c = prop.target;
    let extra_rows = prop
        .rivals
        .iter()
        .map(|&j| {
            let neg_dw = out.w[j].iter().zip(&out.w[c]).map(|(wj, wc)| wj - wc).collect();
            Halfspace::lt(neg_dw, out.b[c] - out.b[j])
        })
        .collect();
    Ok(RegionCertificate {
        mode: RegionMode::BaselineAffine,
        extra_rows,
        ..base
    })
}

pub fn build_interpolant(
    net: &Network,
    x0: &[f64],
    prop: &DominanceProperty,
    logit_factor: f64,
) -> Result<InterpolantSpec> {
    if !(logit_factor > 0.0 && logit_factor < 1.0) {
        return Err(Error::Range(format!("logit factor {logit_factor} is not in (0, 1)")));
    }
    let margins = strict_margins(net, prop, x0)?;
    let out = output_affine(net, &pattern_of(net, x0)?)?;
    let c = prop.target;
    let d_w = prop
        .rivals
        .iter()
        .map(|&j| out.w[c].iter().zip(&out.w[j]).map(|(wc, wj)| wc - wj).collect())
        .collect();
    let d_b = prop.rivals.iter().map(|&j| out.b[c] - out.b[j]).collect();
    let epsilons = margins.iter().map(|m| logit_factor * m).collect();
    Ok(InterpolantSpec {
        property: prop.clone(),
        d_w,
        d_b,
        epsilons,
        logit_factor,
    })
}

pub fn infer_region_interpolant(
    net: &Network,
    x0: &[f64],
    prop: &DominanceProperty,
    logit_factor: f64,
) -> Result<RegionCertificate> {
    infer_region_interpolant_with(net, x0, prop, logit_factor, &InferOptions::default())
}

pub fn infer_region_interpolant_with(
    net: &Network,
    x0: &[f64],
    prop: &DominanceProperty,
    logit_factor: f64,
    opts: &InferOptions,
) -> Result<RegionCertificate> {
    let spec = build_interpolant(net, x0, prop, logit_factor)?;
    let sigma = pattern_of(net, x0)?;
    let relaxed = spec.to_property(net);
    if !check_implies_with(net, &sigma, &relaxed, &opts.verify)?.holds() {
        return Err(Error::Internal(format!(
            "seed cell {sigma} does not imply its own interpolant"
        )));
    }
    let pattern = relax_greedily(net, &sigma, &relaxed, opts)?;
    Ok(RegionCertificate {
        mode: RegionMode::Interpolant,
        pattern,
        extra_rows: spec.critical_rows(),
        property: prop.clone(),
        seed: x0.to_vec(),
        epsilons: spec.epsilons,
        logit_factor: Some(logit_factor),
        net_sha256: net.sha256(),
        delta_strict: opts.verify.delta_strict,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SoundnessReport {
    pub sampled: usize,
    pub violations: usize,
}

/// Samples `n` points of the certificate's region (strict rows with
/// `delta_strict` margin) and counts those where the property fails.
pub fn check_region_soundness(net: &Network, cert: &RegionCertificate, n: usize, seed: u64) -> Result<SoundnessReport> {
    let region = cert.region(net)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let points = sampling::sample_region(&region, n, cert.delta_strict, &mut rng)?;
    let violations = points
        .iter()
        .filter(|x| !cert.property.holds(&model::forward_unchecked(net, x).logits))
        .count();
    Ok(SoundnessReport {
        sampled: points.len(),
        violations,
    })
}
