//! Evaluation metrics: soft-label cross-entropy, FGSM robustness,
//! calibration error and t-intervals over seeds.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{Error, Result};
use crate::mix::{ImageTensor, LabelDistribution};

use super::data::Dataset;
use super::model::Mlp;

/// Predicted probabilities below this are raised to it inside logarithms.
pub const PROB_FLOOR: f64 = 1e-12;

/// Mean over rows of `-sum_k t_k ln p_k`, plus how many supported entries
/// needed flooring.
pub fn soft_ce_rows(probs: &[f64], targets: &[f64], k: usize) -> (f64, usize) {
    let mut clamped = 0;
    let mut total = 0.0;
    for (p, t) in probs.chunks_exact(k).zip(targets.chunks_exact(k)) {
        for (&pk, &tk) in p.iter().zip(t) {
            if tk > 0.0 {
                if pk < PROB_FLOOR {
                    clamped += 1;
                }
                total -= tk * pk.max(PROB_FLOOR).ln();
            }
        }
    }
    let rows = probs.len() / k;
    (total / rows as f64, clamped)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SoftCe {
    pub mean: f64,
    pub clamped: usize,
}

/// Soft cross-entropy of model predictions against the dataset targets.
pub fn soft_ce(model: &Mlp, data: &Dataset) -> Result<SoftCe> {
    check_dims(model, data)?;
    let probs = model.predict(data.inputs())?;
    let (mean, clamped) = soft_ce_rows(&probs, data.target_matrix(), model.num_classes());
    Ok(SoftCe { mean, clamped })
}

fn check_dims(model: &Mlp, data: &Dataset) -> Result<()> {
    if model.input_dim() != data.input_dim() {
        return Err(Error::Shape(format!(
            "model takes {} inputs, data has {}",
            model.input_dim(),
            data.input_dim()
        )));
    }
    if model.num_classes() != data.num_classes() {
        return Err(Error::ClassCount {
            left: model.num_classes(),
            right: data.num_classes(),
        });
    }
    Ok(())
}

/// One FGSM step over a row-major batch: `clip(x + eps * sign(grad), 0, 1)`.
pub fn fgsm_rows(model: &Mlp, inputs: &[f64], targets: &[f64], epsilon: f64) -> Result<Vec<f64>> {
    if !(epsilon >= 0.0 && epsilon.is_finite()) {
        return Err(Error::field("epsilon", format!("{epsilon} must be finite and nonnegative")));
    }
    let cache = model.forward(inputs)?;
    let grads = model.backward(&cache, targets, true)?;
    let gx = grads.inputs.expect("requested input gradients");
    let adv: Vec<f64> = inputs
        .iter()
        .zip(&gx)
        .map(|(&x, &g)| {
            let step = if g > 0.0 {
                epsilon
            } else if g < 0.0 {
                -epsilon
            } else {
                0.0
            };
            (x + step).clamp(0.0, 1.0)
        })
        .collect();
    debug_assert!(adv.iter().all(|v| (0.0..=1.0).contains(v)));
    Ok(adv)
}

pub fn fgsm_attack(
    model: &Mlp,
    x: &ImageTensor,
    target: &LabelDistribution,
    epsilon: f64,
) -> Result<ImageTensor> {
    if x.len() != model.input_dim() {
        return Err(Error::Shape(format!(
            "image has {} values, model takes {}",
            x.len(),
            model.input_dim()
        )));
    }
    if target.num_classes() != model.num_classes() {
        return Err(Error::ClassCount {
            left: target.num_classes(),
            right: model.num_classes(),
        });
    }
    let adv = fgsm_rows(model, x.data(), target.probs(), epsilon)?;
    let (h, w, c) = x.dims();
    ImageTensor::new(h, w, c, adv)
}

fn argmax_rows(probs: &[f64], k: usize) -> impl Iterator<Item = usize> + '_ {
    probs.chunks_exact(k).map(crate::mix::argmax)
}

/// Error rate (%) on FGSM-perturbed inputs. The attack and the scoring both
/// use the hard reference class, the argmax of each soft target.
pub fn fgsm_error(model: &Mlp, data: &Dataset, epsilon: f64) -> Result<f64> {
    check_dims(model, data)?;
    let k = model.num_classes();
    let hard = data.hard_targets();
    let mut one_hot = vec![0.0; hard.len() * k];
    for (row, &c) in one_hot.chunks_exact_mut(k).zip(&hard) {
        row[c] = 1.0;
    }
    let mut wrong = 0usize;
    const CHUNK: usize = 256;
    let d = model.input_dim();
    for (start, x) in data.inputs().chunks(CHUNK * d).enumerate() {
        let rows = x.len() / d;
        let t = &one_hot[start * CHUNK * k..(start * CHUNK + rows) * k];
        let adv = fgsm_rows(model, x, t, epsilon)?;
        let probs = model.predict(&adv)?;
        wrong += argmax_rows(&probs, k)
            .zip(&hard[start * CHUNK..start * CHUNK + rows])
            .filter(|(p, h)| p != *h)
            .count();
    }
    Ok(100.0 * wrong as f64 / hard.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CalibrationFlavor {
    Ece,
    Rms,
}

/// Binned calibration error from per-example confidences and correctness.
/// Bins split `[0, 1]` into equal widths; empty bins are skipped.
pub fn calibration_from_predictions(
    confidences: &[f64],
    correct: &[bool],
    bins: usize,
    flavor: CalibrationFlavor,
) -> Result<f64> {
    if bins == 0 {
        return Err(Error::field("bins", "must be positive"));
    }
    if confidences.len() != correct.len() || confidences.is_empty() {
        return Err(Error::Shape(format!(
            "{} confidences for {} outcomes",
            confidences.len(),
            correct.len()
        )));
    }
    let mut count = vec![0usize; bins];
    let mut conf_sum = vec![0.0; bins];
    let mut hits = vec![0usize; bins];
    for (&c, &ok) in confidences.iter().zip(correct) {
        let b = ((c * bins as f64) as usize).min(bins - 1);
        count[b] += 1;
        conf_sum[b] += c;
        hits[b] += usize::from(ok);
    }
    let n = confidences.len() as f64;
    let mut total = 0.0;
    for b in (0..bins).filter(|&b| count[b] > 0) {
        let nb = count[b] as f64;
        let gap = hits[b] as f64 / nb - conf_sum[b] / nb;
        total += match flavor {
            CalibrationFlavor::Ece => nb / n * gap.abs(),
            CalibrationFlavor::Rms => nb / n * gap * gap,
        };
    }
    Ok(match flavor {
        CalibrationFlavor::Ece => total,
        CalibrationFlavor::Rms => total.sqrt(),
    })
}

/// Calibration error of the model against hard reference classes.
pub fn calibration_error(model: &Mlp, data: &Dataset, bins: usize, flavor: CalibrationFlavor) -> Result<f64> {
    check_dims(model, data)?;
    let k = model.num_classes();
    let probs = model.predict(data.inputs())?;
    let hard = data.hard_targets();
    let mut conf = Vec::with_capacity(hard.len());
    let mut correct = Vec::with_capacity(hard.len());
    for (row, &h) in probs.chunks_exact(k).zip(&hard) {
        let pred = crate::mix::argmax(row);
        conf.push(row[pred]);
        correct.push(pred == h);
    }
    calibration_from_predictions(&conf, &correct, bins, flavor)
}

pub fn accuracy(model: &Mlp, data: &Dataset) -> Result<f64> {
    check_dims(model, data)?;
    let probs = model.predict(data.inputs())?;
    let hard = data.hard_targets();
    let hits = argmax_rows(&probs, model.num_classes())
        .zip(&hard)
        .filter(|(p, h)| p == *h)
        .count();
    Ok(hits as f64 / hard.len() as f64)
}

/// Mean with a two-sided 95% Student-t interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanCi {
    pub mean: f64,
    pub sd: f64,
    /// Half-width; zero for fewer than two values.
    pub half_width: f64,
    pub n: usize,
}

impl MeanCi {
    pub fn of(values: &[f64]) -> Option<MeanCi> {
        let n = values.len();
        if n == 0 {
            return None;
        }
        let mean = values.iter().sum::<f64>() / n as f64;
        if n < 2 {
            return Some(MeanCi {
                mean,
                sd: 0.0,
                half_width: 0.0,
                n,
            });
        }
        let sd = (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt();
        let t = StudentsT::new(0.0, 1.0, (n - 1) as f64)
            .expect("positive degrees of freedom")
            .inverse_cdf(0.975);
        Some(MeanCi {
            mean,
            sd,
            half_width: t * sd / (n as f64).sqrt(),
            n,
        })
    }
}
