//! Searches for 2-4-2 weights on [-2, 2]² whose seed (1, 0) relaxes to one
//! constrained neuron under the interpolant and two under the baseline.
//!
//! Usage: cargo run --release --example search_fixture -- [rng-seed] [tries]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use relu_regions::geometry::max_box_volume;
use relu_regions::infer::{get_convex_region_baseline, infer_region_interpolant, DominanceProperty, RegionMode};
use relu_regions::{forward, Layer, Network};

fn quarter<R: Rng>(rng: &mut R, span: f64) -> f64 {
    (rng.gen_range(-span..=span) * 4.0).round() / 4.0
}

fn candidate<R: Rng>(rng: &mut R) -> Network {
    let hidden = Layer {
        weights: (0..4).map(|_| vec![quarter(rng, 2.0), quarter(rng, 2.0)]).collect(),
        bias: (0..4).map(|_| quarter(rng, 1.5)).collect(),
    };
    let out = Layer {
        weights: (0..2).map(|_| (0..4).map(|_| quarter(rng, 2.0)).collect()).collect(),
        bias: (0..2).map(|_| quarter(rng, 1.0)).collect(),
    };
    Network::new(2, vec![[-2.0, 2.0]; 2], vec![hidden, out]).unwrap()
}

fn else_branch_seed(net: &Network) -> Option<Vec<f64>> {
    for i in 0..=16 {
        for j in 0..=16 {
            let x = vec![-2.0 + 0.25 * i as f64, -2.0 + 0.25 * j as f64];
            let y = forward(net, &x).ok()?.logits;
            if y[0] == y[1] {
                continue;
            }
            let c = if y[0] > y[1] { 0 } else { 1 };
            let prop = DominanceProperty::new(c, vec![1 - c]).unwrap();
            if let Ok(cert) = get_convex_region_baseline(net, &prop, &x) {
                if cert.mode == RegionMode::BaselineAffine {
                    return Some(x);
                }
            }
        }
    }
    None
}

fn main() {
    let args: Vec<u64> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let seed = args.first().copied().unwrap_or(1);
    let tries = args.get(1).copied().unwrap_or(200_000);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let prop = DominanceProperty::new(0, vec![1]).unwrap();
    let x0 = [1.0, 0.0];
    for t in 0..tries {
        let net = candidate(&mut rng);
        let y = forward(&net, &x0).unwrap().logits;
        if y[0] - y[1] < 0.5 {
            continue;
        }
        // every neuron clearly active or inactive at the seed
        if forward(&net, &x0).unwrap().preacts[0].iter().any(|a| a.abs() < 0.25) {
            continue;
        }
        let Ok(base) = get_convex_region_baseline(&net, &prop, &x0) else { continue };
        if base.mode != RegionMode::BaselineMinimal || base.pattern.num_constrained() != 2 {
            continue;
        }
        let Ok(ours) = infer_region_interpolant(&net, &x0, &prop, 0.5) else { continue };
        if ours.pattern.num_constrained() != 1 {
            continue;
        }
        let vol = |c: &relu_regions::infer::RegionCertificate| {
            max_box_volume(&c.region(&net).unwrap(), &net.input_box).map(|b| b.log_volume())
        };
        let (Ok(vb), Ok(vo)) = (vol(&base), vol(&ours)) else { continue };
        if vo < vb {
            continue;
        }
        let Some(other) = else_branch_seed(&net) else { continue };
        eprintln!("try {t}: logvol ours {vo:.4} baseline {vb:.4}; else-branch seed {other:?}");
        eprintln!("baseline pattern {} interpolant pattern {}", base.pattern, ours.pattern);
        println!("{}", serde_json::to_string_pretty(&net).unwrap());
        return;
    }
    eprintln!("no candidate found");
    std::process::exit(1);
}
