use std::path::Path;

use hmix_core::policy::{PolicyKind, SmoothingSpec};
use hmix_core::train::{evaluate, train, EvalOptions, SeedMetrics, TrainConfig};
use hmix_core::CoefficientDistribution;
use rayon::prelude::*;
use serde::Serialize;

use super::data::prepare;
use crate::cli::{EvalArgs, TrainArgs, TrainKnobs};
use crate::config::{output_path, require, resolve};
use crate::error::{run_failure, CliError, Result};
use crate::io::{self, fmt_f, Table};
use crate::manifest::RunRecorder;

/// Desk-scale defaults for `policy` with any knobs that were set.
pub fn train_config(policy: PolicyKind, knobs: &[&TrainKnobs]) -> Result<TrainConfig> {
    let mut cfg = TrainConfig::desk_scale(policy);
    for k in knobs {
        apply(&mut cfg, k)?;
    }
    cfg.validate().map_err(|e| CliError::invalid("training options", e))?;
    Ok(cfg)
}

fn apply(cfg: &mut TrainConfig, k: &TrainKnobs) -> Result<()> {
    macro_rules! set {
        ($($f:ident),*) => { $( if let Some(v) = &k.$f { cfg.$f = v.clone(); } )* };
    }
    set!(epochs, batch_size, lr, momentum, weight_decay, seeds, hidden, activation, mode, tendency, redistribution, random_labels);
    if let Some(alpha) = k.mix_alpha {
        cfg.coefficients = CoefficientDistribution::Beta { alpha, beta: alpha };
    }
    if k.smoothing_a.is_some() || k.smoothing_b.is_some() {
        cfg.smoothing = SmoothingSpec::new(
            k.smoothing_a.unwrap_or(cfg.smoothing.a()),
            k.smoothing_b.unwrap_or(cfg.smoothing.b()),
        )
        .map_err(|e| CliError::invalid("smoothing", e))?;
    }
    Ok(())
}

pub fn eval_options(e: &EvalArgs) -> Result<EvalOptions> {
    let d = EvalOptions::default();
    let opts = EvalOptions {
        epsilon: e.epsilon.unwrap_or(d.epsilon),
        bins: e.bins.unwrap_or(d.bins),
    };
    if opts.epsilon.is_nan() || opts.epsilon < 0.0 || opts.bins == 0 {
        return Err(CliError::Usage("epsilon must be non-negative and bins positive".into()));
    }
    Ok(opts)
}

#[derive(Serialize)]
struct TrainReport<'a> {
    config: &'a TrainConfig,
    eval: EvalOptions,
    per_seed: Vec<SeedMetrics>,
}

#[derive(Serialize)]
struct SavedModel<'a> {
    seed: u64,
    model: &'a hmix_core::train::Mlp,
}

pub fn run(args: &TrainArgs, config: Option<&Path>) -> Result<()> {
    let (a, resolved) = resolve("train", args, config, &[])?;
    let out = output_path(&require(a.out.clone(), "out")?);
    let cfg = train_config(a.policy.unwrap_or(PolicyKind::Mixup), &[&a.knobs])?;
    let eval_opts = eval_options(&a.eval)?;
    if cfg.policy == PolicyKind::BoundaryFit && a.data.boundaries.is_none() {
        return Err(CliError::Usage("policy boundary-fit needs `--boundaries`".into()));
    }
    let mut rec = RunRecorder::start("train", resolved);
    rec.seeds(cfg.seeds.iter().copied());
    let data = prepare(&a.data, &mut rec)?;

    let models = train(&cfg, &data.train).map_err(run_failure)?;
    let per_seed = models
        .par_iter()
        .map(|m| evaluate(&m.model, &data.eval, &eval_opts, m.seed))
        .collect::<hmix_core::Result<Vec<_>>>()
        .map_err(run_failure)?;

    io::create_dir(&out)?;
    let mut losses = Table::new(&["seed", "epoch", "loss"]);
    for m in &models {
        for (e, l) in m.epoch_losses.iter().enumerate() {
            losses.row(vec![m.seed.to_string(), (e + 1).to_string(), fmt_f(*l)]);
        }
        io::write_json(
            &out.join("models").join(format!("seed-{}.json", m.seed)),
            &SavedModel {
                seed: m.seed,
                model: &m.model,
            },
        )?;
    }
    losses.write(&out.join("losses.tsv"))?;
    let mut t = Table::new(&["seed", "ce", "fgsm_err", "calib_rms", "calib_ece", "accuracy"]);
    for m in &per_seed {
        t.row(vec![
            m.seed.to_string(),
            fmt_f(m.ce),
            fmt_f(m.fgsm_err),
            fmt_f(m.calib_rms),
            fmt_f(m.calib_ece),
            fmt_f(m.accuracy),
        ]);
    }
    t.write(&out.join("metrics.tsv"))?;
    io::write_json(
        &out.join("metrics.json"),
        &TrainReport {
            config: &cfg,
            eval: eval_opts,
            per_seed: per_seed.clone(),
        },
    )?;
    rec.finish(&out)?;
    for m in &per_seed {
        println!(
            "seed {}: CE {:.4}, FGSM error {:.2}%, accuracy {:.3}",
            m.seed, m.ce, m.fgsm_err, m.accuracy
        );
    }
    Ok(())
}
