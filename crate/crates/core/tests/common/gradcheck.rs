// Central finite-difference check of the analytic gradients.

#![allow(dead_code)]

use ontorel::model::{RelNet, RelNetConfig, Sample};
use ontorel::relation::RelationMask;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const STEP: f64 = 1e-4;
pub const TOLERANCE: f64 = 1e-4;
/// Below this magnitude both partials are treated as zero; relative error is
/// meaningless there and the difference quotient is pure rounding noise.
pub const ZERO_FLOOR: f64 = 1e-7;

pub struct Worst {
    pub rel_error: f64,
    pub param: usize,
    pub analytic: f64,
    pub numeric: f64,
}

pub fn relative_error(a: f64, f: f64) -> f64 {
    let scale = a.abs().max(f.abs());
    if scale < ZERO_FLOOR {
        0.0
    } else {
        (a - f).abs() / scale
    }
}

/// Random net with the given hidden sizes (input 8) and a random batch of
/// 1..=8 examples; returns the worst partial.
pub fn check_net(seed: u64, hidden: &[usize]) -> Worst {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9);
    let mut cfg = RelNetConfig::new(8, hidden.to_vec());
    cfg.seed = seed;
    let mut net = RelNet::init(cfg).unwrap();
    // nonzero biases so every layer's bias partials are exercised
    for l in &mut net.layers {
        for b in &mut l.b {
            *b = rng.random_range(-0.1..0.1);
        }
    }
    let n = rng.random_range(1..=8);
    let inputs: Vec<Vec<f64>> = (0..n)
        .map(|_| (0..8).map(|_| rng.random_range(-1.0..1.0)).collect())
        .collect();
    let batch: Vec<Sample> = inputs
        .iter()
        .map(|x| Sample {
            input: x,
            target: RelationMask::from_bits(rng.random::<u32>() & RelationMask::VALID_BITS).unwrap(),
        })
        .collect();

    let (_, grads) = net.gradient(&batch).unwrap();
    let mut worst = Worst {
        rel_error: 0.0,
        param: 0,
        analytic: 0.0,
        numeric: 0.0,
    };
    for (i, a) in grads.flat().into_iter().enumerate() {
        let mut plus = net.clone();
        *plus.param_mut(i) += STEP;
        let mut minus = net.clone();
        *minus.param_mut(i) -= STEP;
        let f = (plus.loss(&batch).unwrap() - minus.loss(&batch).unwrap()) / (2.0 * STEP);
        let e = relative_error(a, f);
        if e >= worst.rel_error {
            worst = Worst {
                rel_error: e,
                param: i,
                analytic: a,
                numeric: f,
            };
        }
    }
    worst
}

/// The 50-net sweep: seeds 0..25 with hidden [5], seeds 25..50 with [4, 3].
pub fn sweep() -> Vec<(u64, Vec<usize>, Worst)> {
    (0..50u64)
        .map(|seed| {
            let hidden = if seed < 25 { vec![5] } else { vec![4, 3] };
            let w = check_net(seed, &hidden);
            (seed, hidden, w)
        })
        .collect()
}
