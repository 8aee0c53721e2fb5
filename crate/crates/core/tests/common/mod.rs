//! Shared generators and brute-force oracles for the integration tests.
#![allow(dead_code)]

use rand::Rng;
use relu_regions::pattern::RelaxTarget;
use relu_regions::verify::{Clause, ClauseRel};
use relu_regions::{pattern_of, ActivationPattern, Layer, Network, NeuronStatus, DELTA_STRICT};

pub fn random_net<R: Rng>(rng: &mut R, input_dim: usize, hidden: &[usize], outputs: usize, span: f64) -> Network {
    let mut layers = Vec::new();
    let mut prev = input_dim;
    for &n in hidden.iter().chain(std::iter::once(&outputs)) {
        layers.push(Layer {
            weights: (0..n).map(|_| (0..prev).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect(),
            bias: (0..n).map(|_| rng.gen_range(-0.5..0.5)).collect(),
        });
        prev = n;
    }
    Network::new(input_dim, vec![[-span, span]; input_dim], layers).unwrap()
}

/// Hidden layer sizes with at most `max_total` neurons over one or two layers.
pub fn random_sizes<R: Rng>(rng: &mut R, max_total: usize) -> Vec<usize> {
    if rng.gen_bool(0.5) {
        vec![rng.gen_range(1..=max_total)]
    } else {
        let a = rng.gen_range(1..max_total);
        vec![a, rng.gen_range(1..=max_total - a)]
    }
}

pub fn random_point<R: Rng>(rng: &mut R, net: &Network) -> Vec<f64> {
    net.input_box.iter().map(|[lo, hi]| rng.gen_range(*lo..*hi)).collect()
}

/// A prefix-structured pattern: the pattern of a random point, cut at a
/// random frontier layer with a random subset of the frontier relaxed.
pub fn random_prefix_pattern<R: Rng>(rng: &mut R, net: &Network) -> ActivationPattern {
    let mut p = pattern_of(net, &random_point(rng, net)).unwrap();
    let frontier = rng.gen_range(0..p.num_layers());
    for l in frontier + 1..p.num_layers() {
        p = p.relax(l, RelaxTarget::All).unwrap();
    }
    for i in 0..p.layer(frontier).len() {
        if rng.gen_bool(0.5) {
            p = p.relax(frontier, RelaxTarget::Neuron(i)).unwrap();
        }
    }
    p
}

/// Random statuses laid out prefix-style; often infeasible.
pub fn random_raw_prefix_pattern<R: Rng>(rng: &mut R, net: &Network) -> ActivationPattern {
    let sizes = net.hidden_sizes();
    let frontier = rng.gen_range(0..sizes.len());
    let rows = sizes
        .iter()
        .enumerate()
        .map(|(l, &n)| {
            (0..n)
                .map(|_| {
                    if l > frontier || (l == frontier && rng.gen_bool(0.4)) {
                        NeuronStatus::Dc
                    } else if rng.gen_bool(0.5) {
                        NeuronStatus::On
                    } else {
                        NeuronStatus::Off
                    }
                })
                .collect()
        })
        .collect();
    ActivationPattern::new(rows)
}

/// `coeffs·x ≤ rhs` rows, or affine forms `coeffs·x + offset`.
type Rows = Vec<(Vec<f64>, f64)>;

/// Affine maps of every layer's pre-activation under a complete pattern,
/// computed directly from the weights.
fn pre_affine(net: &Network, statuses: &[Vec<NeuronStatus>]) -> (Vec<Rows>, Rows) {
    let d = net.input_dim;
    let mut post: Rows = (0..d)
        .map(|k| {
            let mut e = vec![0.0; d];
            e[k] = 1.0;
            (e, 0.0)
        })
        .collect();
    let mut pres = Vec::new();
    for (l, layer) in net.layers.iter().enumerate() {
        let pre: Rows = layer
            .weights
            .iter()
            .zip(&layer.bias)
            .map(|(row, b)| {
                let mut c = vec![0.0; d];
                let mut k0 = *b;
                for (w, (pc, pk)) in row.iter().zip(&post) {
                    for j in 0..d {
                        c[j] += w * pc[j];
                    }
                    k0 += w * pk;
                }
                (c, k0)
            })
            .collect();
        if l + 1 == net.layers.len() {
            return (pres, pre);
        }
        post = pre
            .iter()
            .zip(&statuses[l])
            .map(|((c, k), s)| match s {
                NeuronStatus::On => (c.clone(), *k),
                _ => (vec![0.0; d], 0.0),
            })
            .collect();
        pres.push(pre);
    }
    unreachable!()
}

/// Nonempty test for a bounded 2-D polygon by vertex enumeration.
pub fn polygon_nonempty(rows: &Rows, tol: f64) -> bool {
    let ok = |x: [f64; 2]| rows.iter().all(|(a, b)| a[0] * x[0] + a[1] * x[1] <= b + tol);
    for i in 0..rows.len() {
        for j in i + 1..rows.len() {
            let (a, b) = (&rows[i], &rows[j]);
            let det = a.0[0] * b.0[1] - a.0[1] * b.0[0];
            if det.abs() < 1e-12 {
                continue;
            }
            let x = [(a.1 * b.0[1] - a.0[1] * b.1) / det, (a.0[0] * b.1 - a.1 * b.0[0]) / det];
            if ok(x) {
                return true;
            }
        }
    }
    false
}

/// Whether some input in the box extends `sigma` (on rows with the `δ`
/// margin) and falsifies `clause`, by enumerating every completion of
/// `sigma` and testing each resulting polygon. Two inputs only.
pub fn oracle_violates(net: &Network, sigma: &ActivationPattern, clause: &Clause) -> bool {
    assert_eq!(net.input_dim, 2);
    assert_eq!(clause.rel, ClauseRel::Gt);
    let slots: Vec<(usize, usize)> = sigma
        .iter()
        .filter(|(_, _, s)| *s == NeuronStatus::Dc)
        .map(|(l, i, _)| (l, i))
        .collect();
    for mask in 0u32..1 << slots.len() {
        let mut st: Vec<Vec<NeuronStatus>> = sigma.layers().to_vec();
        for (k, &(l, i)) in slots.iter().enumerate() {
            st[l][i] = if mask >> k & 1 == 1 { NeuronStatus::On } else { NeuronStatus::Off };
        }
        let (pres, out) = pre_affine(net, &st);
        let mut rows: Rows = Vec::new();
        for (d, [lo, hi]) in net.input_box.iter().enumerate() {
            let mut e = vec![0.0; 2];
            e[d] = 1.0;
            rows.push((e.clone(), *hi));
            e[d] = -1.0;
            rows.push((e, -lo));
        }
        for (l, layer) in pres.iter().enumerate() {
            for (i, (c, k)) in layer.iter().enumerate() {
                let neg: Vec<f64> = c.iter().map(|v| -v).collect();
                match (sigma.get(l, i), st[l][i]) {
                    (NeuronStatus::On, _) => rows.push((neg, k - DELTA_STRICT)),
                    (NeuronStatus::Dc, NeuronStatus::On) => rows.push((neg, *k)),
                    _ => rows.push((c.clone(), -k)),
                }
            }
        }
        // clause margin ≤ 0
        let mut c = clause.x_coeffs.clone();
        let mut k = -clause.rhs;
        for (a, (oc, ok)) in clause.y_coeffs.iter().zip(&out) {
            for j in 0..2 {
                c[j] += a * oc[j];
            }
            k += a * ok;
        }
        rows.push((c, -k));
        if polygon_nonempty(&rows, 1e-9) {
            return true;
        }
    }
    false
}

/// A `gt` clause over inputs and logits whose threshold sits near the value
/// at a random point, so both outcomes occur.
pub fn random_clause<R: Rng>(rng: &mut R, net: &Network) -> Clause {
    let x_coeffs: Vec<f64> = (0..net.input_dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let y_coeffs: Vec<f64> = (0..net.output_dim()).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let x = random_point(rng, net);
    let y = relu_regions::forward(net, &x).unwrap().logits;
    let v: f64 = x_coeffs.iter().zip(&x).map(|(a, b)| a * b).sum::<f64>()
        + y_coeffs.iter().zip(&y).map(|(a, b)| a * b).sum::<f64>();
    Clause {
        x_coeffs,
        y_coeffs,
        rhs: v - rng.gen_range(0.0..1.5),
        rel: ClauseRel::Gt,
    }
}
