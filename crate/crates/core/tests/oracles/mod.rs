//! Independent reference computations shared by the integration tests.
#![allow(dead_code)]

use hmix_core::train::{metrics, Activation, Mlp};
use hmix_core::{sample_lambda, CoefficientDistribution};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{ChiSquared, ContinuousCDF};

fn random_soft_targets(rng: &mut ChaCha8Rng, rows: usize, k: usize) -> Vec<f64> {
    let mut t = Vec::with_capacity(rows * k);
    for _ in 0..rows {
        let w: Vec<f64> = (0..k).map(|_| rng.random::<f64>() + 0.05).collect();
        let s: f64 = w.iter().sum();
        t.extend(w.iter().map(|v| v / s));
    }
    t
}

fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-6)
}

/// Largest relative error between backprop and central differences, for
/// parameters and inputs, on a fixed small tanh network.
pub fn finite_difference_errors(seed: u64) -> (f64, f64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sizes = [6, 5, 4, 3];
    let model = Mlp::new(&sizes, Activation::Tanh, &mut rng).unwrap();
    let rows = 4;
    let x: Vec<f64> = (0..rows * sizes[0]).map(|_| rng.random::<f64>()).collect();
    let t = random_soft_targets(&mut rng, rows, 3);
    let cache = model.forward(&x).unwrap();
    let grads = model.backward(&cache, &t, true).unwrap();
    let h = 1e-5;

    let mut worst_param = 0.0f64;
    for i in 0..model.params().len() {
        let mut plus = model.clone();
        plus.params_mut()[i] += h;
        let mut minus = model.clone();
        minus.params_mut()[i] -= h;
        let fd = (plus.loss(&x, &t).unwrap() - minus.loss(&x, &t).unwrap()) / (2.0 * h);
        worst_param = worst_param.max(rel_err(grads.params[i], fd));
    }

    let gx = grads.inputs.unwrap();
    let mut worst_input = 0.0f64;
    for i in 0..x.len() {
        let mut xp = x.clone();
        xp[i] += h;
        let mut xm = x.clone();
        xm[i] -= h;
        let fd = (model.loss(&xp, &t).unwrap() - model.loss(&xm, &t).unwrap()) / (2.0 * h);
        worst_input = worst_input.max(rel_err(gx[i], fd));
    }
    (worst_param, worst_input)
}

/// Count of coordinates where the FGSM step on a softmax-linear model disagrees
/// with `sign(W^T (softmax(Wx + b) - t))`.
pub fn linear_fgsm_mismatches(seed: u64, cases: usize) -> usize {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (d, k) = (12, 4);
    let eps = 0.05;
    let mut mismatches = 0;
    for _ in 0..cases {
        let model = Mlp::new(&[d, k], Activation::Relu, &mut rng).unwrap();
        let p = model.params();
        let (w, b) = p.split_at(d * k);
        let x: Vec<f64> = (0..d).map(|_| rng.random_range(0.2..0.8)).collect();
        let t = random_soft_targets(&mut rng, 1, k);

        let logits: Vec<f64> = (0..k).map(|o| b[o] + (0..d).map(|i| w[o * d + i] * x[i]).sum::<f64>()).collect();
        let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let z: f64 = logits.iter().map(|l| (l - m).exp()).sum();
        let probs: Vec<f64> = logits.iter().map(|l| (l - m).exp() / z).collect();

        let adv = metrics::fgsm_rows(&model, &x, &t, eps).unwrap();
        for i in 0..d {
            let g: f64 = (0..k).map(|o| w[o * d + i] * (probs[o] - t[o])).sum();
            let expected = x[i] + eps * g.signum();
            if (adv[i] - expected).abs() > 1e-12 {
                mismatches += 1;
            }
        }
    }
    mismatches
}

/// Chi-squared uniformity p-value of `draws` Beta(1, 1) coefficients over
/// `bins` equal-width bins.
pub fn uniform_chi2_pvalue(draws: usize, bins: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dist = CoefficientDistribution::uniform();
    let mut counts = vec![0usize; bins];
    for _ in 0..draws {
        let v = sample_lambda(&dist, &mut rng).unwrap().value();
        counts[((v * bins as f64) as usize).min(bins - 1)] += 1;
    }
    let expected = draws as f64 / bins as f64;
    let stat: f64 = counts.iter().map(|&c| (c as f64 - expected).powi(2) / expected).sum();
    1.0 - ChiSquared::new((bins - 1) as f64).unwrap().cdf(stat)
}
