//! Training runs, multi-seed comparisons and smoothing hyperparameter search.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::boundary::BoundaryMap;
use crate::error::{Error, Result};
use crate::hmix::{CentralTendency, Judgment, SoftLabelJudgment};
use crate::mix::{data_mix, sample_lambda, CoefficientDistribution, ImageTensor, LabelDistribution, MixCoefficient};
use crate::policy::{build_labels, PolicyInputs, PolicyKind, PolicyOptions, SmoothingSpec, StimulusClasses};

use super::data::Dataset;
use super::metrics::{self, CalibrationFlavor, MeanCi};
use super::model::{Activation, Mlp, Sgd};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MixupMode {
    /// Regular images plus a fixed set of pre-mixed images.
    FiniteAugmentingSet,
    /// Every batch is mixed with a freshly sampled coefficient.
    PerBatchSampling,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RandomLabelMode {
    PerEpoch,
    Fixed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub policy: PolicyKind,
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    #[serde(default = "default_momentum")]
    pub momentum: f64,
    #[serde(default)]
    pub weight_decay: f64,
    pub seeds: Vec<u64>,
    pub mode: MixupMode,
    #[serde(default = "CoefficientDistribution::uniform")]
    pub coefficients: CoefficientDistribution,
    pub hidden: Vec<usize>,
    #[serde(default = "default_activation")]
    pub activation: Activation,
    #[serde(default)]
    pub smoothing: SmoothingSpec,
    #[serde(default)]
    pub tendency: CentralTendency,
    #[serde(default = "default_redistribution")]
    pub redistribution: f64,
    #[serde(default = "default_random_mode")]
    pub random_labels: RandomLabelMode,
}

fn default_momentum() -> f64 {
    0.9
}

fn default_activation() -> Activation {
    Activation::Relu
}

fn default_redistribution() -> f64 {
    0.1
}

fn default_random_mode() -> RandomLabelMode {
    RandomLabelMode::PerEpoch
}

impl TrainConfig {
    /// The laptop-scale setup used for policy comparisons on the shapes
    /// benchmark: one hidden layer of 32, 20 epochs, five seeds.
    pub fn desk_scale(policy: PolicyKind) -> Self {
        TrainConfig {
            policy,
            epochs: 20,
            batch_size: 32,
            lr: 0.005,
            momentum: default_momentum(),
            weight_decay: 0.0,
            seeds: vec![1, 2, 3, 4, 5],
            mode: MixupMode::FiniteAugmentingSet,
            coefficients: CoefficientDistribution::uniform(),
            hidden: vec![32],
            activation: default_activation(),
            smoothing: SmoothingSpec::default(),
            tendency: CentralTendency::Mean,
            redistribution: default_redistribution(),
            random_labels: default_random_mode(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() {
            return Err(Error::field("seeds", "list is empty"));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::field("lr", format!("{} must be positive", self.lr)));
        }
        if self.batch_size == 0 || self.epochs == 0 {
            return Err(Error::field("batch_size", "batch size and epochs must be positive"));
        }
        if !(0.0..1.0).contains(&self.momentum) || self.weight_decay < 0.0 {
            return Err(Error::field("momentum", "momentum in [0, 1) and weight decay >= 0 required"));
        }
        self.coefficients.validate()
    }

    fn policy_options(&self, num_classes: usize) -> PolicyOptions {
        PolicyOptions {
            num_classes,
            smoothing: self.smoothing,
            tendency: self.tendency,
            redistribution: self.redistribution,
        }
    }
}

/// A pre-mixed image with the human data its label policies may use.
#[derive(Debug, Clone, PartialEq)]
pub struct MixedExample {
    pub pair_id: String,
    pub image: Vec<f64>,
    pub stimulus: StimulusClasses,
    pub judgments: Vec<Judgment>,
    pub soft_labels: Vec<SoftLabelJudgment>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainData {
    /// Original images with their (one-hot) labels.
    pub regular: Dataset,
    pub mixed: Vec<MixedExample>,
    pub boundaries: Option<BoundaryMap>,
}

#[derive(Debug, Clone)]
pub struct TrainedModel {
    pub seed: u64,
    pub model: Mlp,
    /// Mean batch loss per epoch.
    pub epoch_losses: Vec<f64>,
    /// Coefficient drawn for each batch in per-batch mode.
    pub lambda_trace: Vec<f64>,
}

/// Independent random streams derived from one seed.
fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

fn mixed_rows<R: Rng + ?Sized>(
    cfg: &TrainConfig,
    data: &TrainData,
    opts: &PolicyOptions,
    rng: &mut R,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let mut inputs = Vec::new();
    let mut targets = Vec::new();
    for m in &data.mixed {
        let inputs_for = PolicyInputs {
            judgments: &m.judgments,
            soft_labels: &m.soft_labels,
            boundaries: data.boundaries.as_ref(),
        };
        let labels = build_labels(cfg.policy, m.stimulus, inputs_for, opts, rng)
            .map_err(|e| with_context(e, &m.pair_id))?;
        for l in labels {
            inputs.extend_from_slice(&m.image);
            targets.extend_from_slice(l.probs());
        }
    }
    Ok((inputs, targets))
}

fn with_context(e: Error, pair_id: &str) -> Error {
    match e {
        Error::Policy { policy, reason } => Error::Policy {
            policy,
            reason: format!("{reason} (pair {pair_id})"),
        },
        other => other,
    }
}

/// Trains one model per seed in `cfg.seeds`, in parallel.
pub fn train(cfg: &TrainConfig, data: &TrainData) -> Result<Vec<TrainedModel>> {
    cfg.seeds.par_iter().map(|&s| train_seed(cfg, data, s)).collect()
}

/// One deterministic run.
pub fn train_seed(cfg: &TrainConfig, data: &TrainData, seed: u64) -> Result<TrainedModel> {
    cfg.validate()?;
    let regular = &data.regular;
    let k = regular.num_classes();
    let d = regular.input_dim();
    if regular.is_empty() {
        return Err(Error::Insufficient("no training images".into()));
    }
    let opts = cfg.policy_options(k);
    let mut sizes = vec![d];
    sizes.extend(&cfg.hidden);
    sizes.push(k);

    let mut init_rng = stream(seed, 0);
    let mut order_rng = stream(seed, 1);
    let mut label_rng = stream(seed, 2);
    let mut lambda_rng = stream(seed, 3);

    let mut model = Mlp::new(&sizes, cfg.activation, &mut init_rng)?;
    let mut opt = Sgd::new(cfg.lr, cfg.momentum, cfg.weight_decay, model.params().len());
    let mut epoch_losses = Vec::with_capacity(cfg.epochs);
    let mut lambda_trace = Vec::new();

    let per_batch = cfg.mode == MixupMode::PerBatchSampling && cfg.policy != PolicyKind::NoAug;
    if per_batch && !matches!(cfg.policy, PolicyKind::Mixup | PolicyKind::BoundaryFit | PolicyKind::Uniform | PolicyKind::Random) {
        return Err(Error::policy(cfg.policy, "needs human data per image; use the finite augmenting set"));
    }

    let (mut mixed_in, mut mixed_t) = if per_batch {
        (Vec::new(), Vec::new())
    } else {
        mixed_rows(cfg, data, &opts, &mut label_rng)?
    };
    let hard = regular.hard_targets();

    for epoch in 0..cfg.epochs {
        if epoch > 0 && !per_batch && cfg.policy == PolicyKind::Random && cfg.random_labels == RandomLabelMode::PerEpoch {
            (mixed_in, mixed_t) = mixed_rows(cfg, data, &opts, &mut label_rng)?;
        }
        let n_regular = regular.len();
        let n = n_regular + mixed_t.len() / k;
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut order_rng);
        let mut loss_sum = 0.0;
        let mut batches = 0;
        for (b, chunk) in order.chunks(cfg.batch_size).enumerate() {
            let mut x = Vec::with_capacity(chunk.len() * d);
            let mut t = Vec::with_capacity(chunk.len() * k);
            for &i in chunk {
                if i < n_regular {
                    x.extend_from_slice(regular.input(i));
                    t.extend_from_slice(regular.target(i));
                } else {
                    let j = i - n_regular;
                    x.extend_from_slice(&mixed_in[j * d..(j + 1) * d]);
                    t.extend_from_slice(&mixed_t[j * k..(j + 1) * k]);
                }
            }
            if per_batch {
                let lambda = sample_lambda(&cfg.coefficients, &mut lambda_rng)?;
                lambda_trace.push(lambda.value());
                (x, t) = mix_batch(cfg.policy, &x, chunk, &hard, regular, lambda, &opts, data, &mut lambda_rng)?;
            }
            let cache = model.forward(&x)?;
            let (loss, _) = metrics::soft_ce_rows(cache.probs(), &t, k);
            if !loss.is_finite() {
                return Err(Error::NonFinite {
                    epoch,
                    batch: b,
                    lr: cfg.lr,
                });
            }
            let grads = model.backward(&cache, &t, false)?;
            if grads.params.iter().any(|g| !g.is_finite()) {
                return Err(Error::NonFinite {
                    epoch,
                    batch: b,
                    lr: cfg.lr,
                });
            }
            opt.step(model.params_mut(), &grads.params);
            loss_sum += loss;
            batches += 1;
        }
        epoch_losses.push(loss_sum / batches as f64);
    }
    Ok(TrainedModel {
        seed,
        model,
        epoch_losses,
        lambda_trace,
    })
}

/// Pairs each batch row with a shuffled partner and mixes inputs and labels
/// at one coefficient.
#[allow(clippy::too_many_arguments)]
fn mix_batch<R: Rng + ?Sized>(
    policy: PolicyKind,
    x: &[f64],
    chunk: &[usize],
    hard: &[usize],
    regular: &Dataset,
    lambda: MixCoefficient,
    opts: &PolicyOptions,
    data: &TrainData,
    rng: &mut R,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let (h, w, c) = regular.dims();
    let d = regular.input_dim();
    let k = opts.num_classes;
    let mut partner: Vec<usize> = (0..chunk.len()).collect();
    partner.shuffle(rng);
    let mut out_x = Vec::with_capacity(x.len());
    let mut out_t = Vec::with_capacity(chunk.len() * k);
    for (r, &p) in partner.iter().enumerate() {
        let xi = ImageTensor::from_clipped(h, w, c, x[r * d..(r + 1) * d].to_vec());
        let xj = ImageTensor::from_clipped(h, w, c, x[p * d..(p + 1) * d].to_vec());
        out_x.extend_from_slice(data_mix(&xi, &xj, lambda)?.data());
        let (ca, cb) = (hard[chunk[r]], hard[chunk[p]]);
        let label = if ca == cb {
            LabelDistribution::one_hot(ca, k)?
        } else {
            let inputs = PolicyInputs {
                boundaries: data.boundaries.as_ref(),
                ..Default::default()
            };
            let stim = StimulusClasses {
                class_a: ca,
                class_b: cb,
                lambda_f: lambda,
            };
            build_labels(policy, stim, inputs, opts, rng)?.pop().expect("one label per stimulus")
        };
        out_t.extend_from_slice(label.probs());
    }
    Ok((out_x, out_t))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalOptions {
    /// FGSM step size on `[0, 1]` pixels.
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
    #[serde(default = "default_bins")]
    pub bins: usize,
}

fn default_epsilon() -> f64 {
    8.0 / 255.0
}

fn default_bins() -> usize {
    15
}

impl Default for EvalOptions {
    fn default() -> Self {
        EvalOptions {
            epsilon: default_epsilon(),
            bins: default_bins(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SeedMetrics {
    pub seed: u64,
    pub ce: f64,
    /// Supported target entries whose predicted probability was floored.
    pub ce_clamped: usize,
    /// Robust error (%) under FGSM.
    pub fgsm_err: f64,
    pub calib_rms: f64,
    pub calib_ece: f64,
    pub accuracy: f64,
}

pub fn evaluate(model: &Mlp, eval: &Dataset, opts: &EvalOptions, seed: u64) -> Result<SeedMetrics> {
    let ce = metrics::soft_ce(model, eval)?;
    Ok(SeedMetrics {
        seed,
        ce: ce.mean,
        ce_clamped: ce.clamped,
        fgsm_err: metrics::fgsm_error(model, eval, opts.epsilon)?,
        calib_rms: metrics::calibration_error(model, eval, opts.bins, CalibrationFlavor::Rms)?,
        calib_ece: metrics::calibration_error(model, eval, opts.bins, CalibrationFlavor::Ece)?,
        accuracy: metrics::accuracy(model, eval)?,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RowSpec {
    pub name: String,
    pub config: TrainConfig,
}

impl RowSpec {
    /// Row named after its policy.
    pub fn for_policy(config: TrainConfig) -> Self {
        RowSpec {
            name: config.policy.display_name().to_string(),
            config,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    pub ce: MeanCi,
    pub fgsm_err: MeanCi,
    pub calib_rms: MeanCi,
    pub calib_ece: MeanCi,
    pub accuracy: MeanCi,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedFailure {
    pub seed: u64,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub name: String,
    pub policy: PolicyKind,
    pub per_seed: Vec<SeedMetrics>,
    /// Absent when no seed completed.
    pub summary: Option<MetricSummary>,
    pub failures: Vec<SeedFailure>,
}

impl ComparisonRow {
    pub fn seed(&self, seed: u64) -> Option<&SeedMetrics> {
        self.per_seed.iter().find(|m| m.seed == seed)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub eval: EvalOptions,
    pub rows: Vec<ComparisonRow>,
}

impl ComparisonReport {
    pub fn row(&self, name: &str) -> Option<&ComparisonRow> {
        self.rows.iter().find(|r| r.name == name)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// Plain-text table of means with 95% half-widths.
    pub fn to_table(&self) -> String {
        let mut out = format!(
            "{:<24} {:>16} {:>18} {:>16} {:>16}\n",
            "label type", "CE", "FGSM err %", "calib (RMS)", "calib (ECE)"
        );
        let cell = |m: &MeanCi, digits: usize| format!("{:.*}±{:.*}", digits, m.mean, digits, m.half_width);
        for r in &self.rows {
            match &r.summary {
                Some(s) => out.push_str(&format!(
                    "{:<24} {:>16} {:>18} {:>16} {:>16}\n",
                    r.name,
                    cell(&s.ce, 3),
                    cell(&s.fgsm_err, 2),
                    cell(&s.calib_rms, 3),
                    cell(&s.calib_ece, 3)
                )),
                None => out.push_str(&format!("{:<24} all seeds failed\n", r.name)),
            }
        }
        out
    }
}

fn summarize(per_seed: &[SeedMetrics]) -> Option<MetricSummary> {
    let col = |f: fn(&SeedMetrics) -> f64| MeanCi::of(&per_seed.iter().map(f).collect::<Vec<_>>());
    Some(MetricSummary {
        ce: col(|m| m.ce)?,
        fgsm_err: col(|m| m.fgsm_err)?,
        calib_rms: col(|m| m.calib_rms)?,
        calib_ece: col(|m| m.calib_ece)?,
        accuracy: col(|m| m.accuracy)?,
    })
}

/// Trains and evaluates every row on every seed. Seed runs execute in
/// parallel; a failing run is recorded and the rest of the table still
/// completes.
pub fn run_comparison(rows: &[RowSpec], data: &TrainData, eval: &Dataset, opts: &EvalOptions) -> ComparisonReport {
    let jobs: Vec<(usize, u64)> = rows
        .iter()
        .enumerate()
        .flat_map(|(r, spec)| spec.config.seeds.iter().map(move |&s| (r, s)))
        .collect();
    let results: Vec<Result<SeedMetrics>> = jobs
        .par_iter()
        .map(|&(r, seed)| {
            let trained = train_seed(&rows[r].config, data, seed)?;
            evaluate(&trained.model, eval, opts, seed)
        })
        .collect();
    let mut out: Vec<ComparisonRow> = rows
        .iter()
        .map(|spec| ComparisonRow {
            name: spec.name.clone(),
            policy: spec.config.policy,
            per_seed: Vec::new(),
            summary: None,
            failures: Vec::new(),
        })
        .collect();
    for (&(r, seed), res) in jobs.iter().zip(results) {
        match res {
            Ok(m) => out[r].per_seed.push(m),
            Err(e) => out[r].failures.push(SeedFailure {
                seed,
                error: e.to_string(),
            }),
        }
    }
    for row in &mut out {
        row.summary = summarize(&row.per_seed);
    }
    ComparisonReport { eval: *opts, rows: out }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridPoint {
    pub a: f64,
    pub b: f64,
    pub objective: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSearch {
    pub best: GridPoint,
    /// Every evaluated pair in grid order.
    pub grid: Vec<GridPoint>,
}

/// Minimizes `objective` over the product of the two grids. Ties keep the
/// earliest pair in grid order.
pub fn grid_search_smoothing<F>(a_grid: &[f64], b_grid: &[f64], mut objective: F) -> Result<GridSearch>
where
    F: FnMut(SmoothingSpec) -> Result<f64>,
{
    if a_grid.is_empty() || b_grid.is_empty() {
        return Err(Error::field("grid", "both grids must be nonempty"));
    }
    let mut grid = Vec::with_capacity(a_grid.len() * b_grid.len());
    for &a in a_grid {
        for &b in b_grid {
            let objective = objective(SmoothingSpec::new(a, b)?)?;
            grid.push(GridPoint { a, b, objective });
        }
    }
    let best = grid
        .iter()
        .filter(|p| !p.objective.is_nan())
        .min_by(|x, y| x.objective.total_cmp(&y.objective))
        .cloned()
        .ok_or_else(|| Error::Insufficient("every grid point produced NaN".into()))?;
    Ok(GridSearch { best, grid })
}

/// Held-out soft cross-entropy of a model trained with the given smoothing,
/// averaged over the config's seeds.
pub fn heldout_objective<'a>(
    cfg: &TrainConfig,
    data: &'a TrainData,
    heldout: &'a Dataset,
) -> impl FnMut(SmoothingSpec) -> Result<f64> + 'a {
    let cfg = cfg.clone();
    move |spec| {
        let cfg = TrainConfig {
            smoothing: spec,
            ..cfg.clone()
        };
        let models = train(&cfg, data)?;
        let mut total = 0.0;
        for m in &models {
            total += metrics::soft_ce(&m.model, heldout)?.mean;
        }
        Ok(total / models.len() as f64)
    }
}
