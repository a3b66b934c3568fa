//! Simulated human raters and the desk-scale benchmark built on them.
//!
//! Each class pair gets a ground-truth sigmoidal curve from generating
//! coefficient to perceived coefficient. Raters report that curve plus noise,
//! with confidence that drops as the stimulus nears an even blend.

use std::collections::BTreeMap;

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::boundary::{ClassPair, LogisticParams};
use crate::error::{Error, Result};
use crate::hmix::{HmixStore, InterfaceKind, Judgment, PairInfo, Record, StimulusRef};
use crate::mix::{data_mix, MixCoefficient, INFER_COEFFICIENTS};
use crate::policy::StimulusClasses;

use super::data::{generate_shapes, Dataset, LabeledShapes, ShapesConfig};
use super::run::{MixedExample, TrainData};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RaterConfig {
    pub judgments_per_stimulus: usize,
    pub relabel_sd: f64,
    /// `(|0.5 - lambda_f|, mean confidence)` knots, interpolated linearly.
    pub confidence_knots: Vec<(f64, f64)>,
    pub confidence_sd: f64,
    pub steepness: (f64, f64),
    pub midpoint: (f64, f64),
}

impl Default for RaterConfig {
    fn default() -> Self {
        RaterConfig {
            judgments_per_stimulus: 2,
            relabel_sd: 0.08,
            confidence_knots: vec![(0.0, 0.63), (0.25, 0.72), (0.4, 0.79)],
            confidence_sd: 0.1,
            steepness: (6.0, 14.0),
            midpoint: (0.4, 0.6),
        }
    }
}

impl RaterConfig {
    pub fn mean_confidence(&self, lambda_f: f64) -> f64 {
        let d = (0.5 - lambda_f).abs();
        let knots = &self.confidence_knots;
        let first = knots.first().expect("validated nonempty");
        if d <= first.0 {
            return first.1;
        }
        for w in knots.windows(2) {
            let ((d0, c0), (d1, c1)) = (w[0], w[1]);
            if d <= d1 {
                return c0 + (c1 - c0) * (d - d0) / (d1 - d0);
            }
        }
        knots.last().expect("nonempty").1
    }

    fn validate(&self) -> Result<()> {
        if self.judgments_per_stimulus == 0 {
            return Err(Error::field("judgments_per_stimulus", "must be positive"));
        }
        if self.confidence_knots.is_empty() || self.confidence_knots.windows(2).any(|w| w[0].0 >= w[1].0) {
            return Err(Error::field("confidence_knots", "need ascending distances"));
        }
        if self.steepness.0 > self.steepness.1 || self.midpoint.0 > self.midpoint.1 {
            return Err(Error::field("raters", "ranges must be ordered"));
        }
        Ok(())
    }
}

/// Ground-truth curves keyed by `(lower class, higher class)`, giving the
/// perceived weight on the lower class.
pub fn pair_truths<R: Rng + ?Sized>(num_classes: usize, cfg: &RaterConfig, rng: &mut R) -> BTreeMap<ClassPair, LogisticParams> {
    let mut out = BTreeMap::new();
    for a in 0..num_classes {
        for b in a + 1..num_classes {
            let k = rng.random_range(cfg.steepness.0..=cfg.steepness.1);
            let m = rng.random_range(cfg.midpoint.0..=cfg.midpoint.1);
            // Asymptotes chosen so the curve passes near (0, 0) and (1, 1).
            let lo = LogisticParams::new(0.0, 1.0, k, m).eval_raw(0.0);
            let hi = LogisticParams::new(0.0, 1.0, k, m).eval_raw(1.0);
            let span = hi - lo;
            out.insert((a, b), LogisticParams::new(-lo / span, (1.0 - lo) / span, k, m));
        }
    }
    out
}

/// Perceived weight on `class_a`.
pub fn true_relabel(truths: &BTreeMap<ClassPair, LogisticParams>, s: StimulusClasses) -> Result<f64> {
    let (lo, hi) = (s.class_a.min(s.class_b), s.class_a.max(s.class_b));
    let t = truths
        .get(&(lo, hi))
        .ok_or_else(|| Error::NotFound(format!("no ground truth for classes ({lo}, {hi})")))?;
    Ok(if s.class_a < s.class_b {
        t.eval(s.lambda_f.value())
    } else {
        1.0 - t.eval(s.lambda_f.complement().value())
    })
}

/// Judgments from `cfg.judgments_per_stimulus` simulated participants. Rater
/// `r` answers every stimulus in session `sim-s{r}`, trial index = position.
pub fn simulate_judgments<R: Rng + ?Sized>(
    stimuli: &[(String, StimulusClasses)],
    truths: &BTreeMap<ClassPair, LogisticParams>,
    cfg: &RaterConfig,
    rng: &mut R,
) -> Result<Vec<Vec<Judgment>>> {
    cfg.validate()?;
    let relabel_noise = Normal::new(0.0, cfg.relabel_sd).map_err(|e| Error::field("relabel_sd", e.to_string()))?;
    let conf_noise = Normal::new(0.0, cfg.confidence_sd).map_err(|e| Error::field("confidence_sd", e.to_string()))?;
    let mut out = Vec::with_capacity(stimuli.len());
    for (trial, (pair_id, s)) in stimuli.iter().enumerate() {
        let truth = true_relabel(truths, *s)?;
        let mut js = Vec::with_capacity(cfg.judgments_per_stimulus);
        for r in 0..cfg.judgments_per_stimulus {
            let lambda_h = (truth + relabel_noise.sample(rng)).clamp(0.0, 1.0);
            let confidence = (cfg.mean_confidence(s.lambda_f.value()) + conf_noise.sample(rng)).clamp(0.0, 1.0);
            js.push(Judgment {
                participant_id: format!("sim-p{r}"),
                session_id: format!("sim-s{r}"),
                trial_index: trial as u32,
                stimulus: StimulusRef {
                    pair_id: pair_id.clone(),
                    lambda_f: s.lambda_f.value(),
                },
                interface: InterfaceKind::InferCoefficient,
                lambda_h,
                confidence: Some(confidence),
                repeat_of: None,
                response_ms: rng.random_range(3000..15000),
            });
        }
        out.push(js);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchmarkConfig {
    pub train_size: usize,
    pub eval_size: usize,
    /// Number of mixed images in the finite augmenting set.
    pub mixed_size: usize,
    pub shapes: ShapesConfig,
    pub raters: RaterConfig,
    pub seed: u64,
}

impl Default for BenchmarkConfig {
    fn default() -> Self {
        BenchmarkConfig {
            train_size: 2000,
            eval_size: 1000,
            mixed_size: 600,
            shapes: ShapesConfig::default(),
            raters: RaterConfig::default(),
            seed: 7,
        }
    }
}

/// Everything a desk-scale comparison needs.
#[derive(Debug)]
pub struct Benchmark {
    pub train: TrainData,
    /// Soft annotator targets.
    pub eval: Dataset,
    /// Held-out split for hyperparameter search, also with soft targets.
    pub heldout: Dataset,
    /// Pair records and judgments for every mixed image.
    pub store: HmixStore,
    pub truths: BTreeMap<ClassPair, LogisticParams>,
    pub train_shapes: LabeledShapes,
}

pub fn build_benchmark(cfg: &BenchmarkConfig) -> Result<Benchmark> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let train_shapes = generate_shapes(cfg.train_size, &cfg.shapes, &mut rng)?;
    let eval = generate_shapes(cfg.eval_size, &cfg.shapes, &mut rng)?.data;
    let heldout = generate_shapes(cfg.eval_size / 2, &cfg.shapes, &mut rng)?.data;
    let regular = train_shapes.hard();
    let k = regular.num_classes();
    let truths = pair_truths(k, &cfg.raters, &mut rng);

    let indices: Vec<usize> = (0..regular.len()).collect();
    let mut stimuli = Vec::with_capacity(cfg.mixed_size);
    let mut mixed_images = Vec::with_capacity(cfg.mixed_size);
    let mut store = HmixStore::new();
    while stimuli.len() < cfg.mixed_size {
        let pick: Vec<usize> = indices.choose_multiple(&mut rng, 2).copied().collect();
        let (a, b) = (pick[0], pick[1]);
        let (ca, cb) = (train_shapes.classes[a], train_shapes.classes[b]);
        if ca == cb {
            continue;
        }
        let lambda_f = MixCoefficient::new(*INFER_COEFFICIENTS.choose(&mut rng).expect("nonempty"))?;
        let pair_id = format!("mix-{:05}", stimuli.len());
        store.append(Record::Pair(PairInfo {
            pair_id: pair_id.clone(),
            endpoint_a_id: regular.ids()[a].clone(),
            endpoint_b_id: regular.ids()[b].clone(),
            class_a: ca,
            class_b: cb,
        }))?;
        mixed_images.push(data_mix(&regular.image(a), &regular.image(b), lambda_f)?);
        stimuli.push((
            pair_id,
            StimulusClasses {
                class_a: ca,
                class_b: cb,
                lambda_f,
            },
        ));
    }
    let judgments = simulate_judgments(&stimuli, &truths, &cfg.raters, &mut rng)?;
    for js in &judgments {
        for j in js {
            store.append(Record::Judgment(j.clone()))?;
        }
    }
    let mixed = stimuli
        .into_iter()
        .zip(mixed_images)
        .zip(judgments)
        .map(|(((pair_id, stimulus), image), judgments)| MixedExample {
            pair_id,
            image: image.data().to_vec(),
            stimulus,
            judgments,
            soft_labels: Vec::new(),
        })
        .collect();
    Ok(Benchmark {
        train: TrainData {
            regular,
            mixed,
            boundaries: None,
        },
        eval,
        heldout,
        store,
        truths,
        train_shapes,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn confidence_follows_knots() {
        let cfg = RaterConfig::default();
        assert_eq!(cfg.mean_confidence(0.5), 0.63);
        assert!((cfg.mean_confidence(0.25) - 0.72).abs() < 1e-12);
        assert!((cfg.mean_confidence(0.75) - 0.72).abs() < 1e-12);
        assert!((cfg.mean_confidence(0.1) - 0.79).abs() < 1e-12);
        assert_eq!(cfg.mean_confidence(0.0), 0.79);
    }

    #[test]
    fn truths_pass_through_the_corners_and_mirror() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let truths = pair_truths(4, &RaterConfig::default(), &mut rng);
        assert_eq!(truths.len(), 6);
        for t in truths.values() {
            assert!(t.eval_raw(0.0).abs() < 1e-12);
            assert!((t.eval_raw(1.0) - 1.0).abs() < 1e-12);
        }
        let lam = MixCoefficient::new(0.25).unwrap();
        let fwd = true_relabel(&truths, StimulusClasses { class_a: 1, class_b: 3, lambda_f: lam }).unwrap();
        let back = true_relabel(
            &truths,
            StimulusClasses {
                class_a: 3,
                class_b: 1,
                lambda_f: lam.complement(),
            },
        )
        .unwrap();
        assert!((fwd - (1.0 - back)).abs() < 1e-12);
    }

    #[test]
    fn small_benchmark_is_consistent() {
        let cfg = BenchmarkConfig {
            train_size: 60,
            eval_size: 20,
            mixed_size: 15,
            shapes: ShapesConfig {
                size: 8,
                ..Default::default()
            },
            ..Default::default()
        };
        let b = build_benchmark(&cfg).unwrap();
        assert_eq!(b.train.mixed.len(), 15);
        assert_eq!(b.store.pairs().count(), 15);
        assert_eq!(b.store.judgments().count(), 30);
        for m in &b.train.mixed {
            assert_ne!(m.stimulus.class_a, m.stimulus.class_b);
            assert!(INFER_COEFFICIENTS.contains(&m.stimulus.lambda_f.value()));
            assert_eq!(m.judgments.len(), 2);
        }
        let again = build_benchmark(&cfg).unwrap();
        assert_eq!(again.store, b.store);
    }
}
