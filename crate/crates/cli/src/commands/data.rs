//! Training and evaluation data for `train` and `compare`.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use hmix_core::boundary::BoundaryMap;
use hmix_core::hmix::{import_hmix, InterfaceKind, Judgment, LabelFrequencyTable, SoftLabelJudgment};
use hmix_core::policy::StimulusClasses;
use hmix_core::train::{build_benchmark, read_cifar_batch, BenchmarkConfig, Dataset, MixedExample, TrainData};
use hmix_core::{LabelDistribution, MixCoefficient};

use crate::cli::{BenchArgs, DataArgs, DataSource};
use crate::error::{from_core, CliError, Result};
use crate::io;
use crate::manifest::RunRecorder;
use crate::pool::load_pool;

pub struct Prepared {
    pub train: TrainData,
    pub eval: Dataset,
}

pub fn bench_config(b: &BenchArgs) -> BenchmarkConfig {
    let d = BenchmarkConfig::default();
    BenchmarkConfig {
        train_size: b.train_size.unwrap_or(d.train_size),
        eval_size: b.eval_size.unwrap_or(d.eval_size),
        mixed_size: b.mixed_size.unwrap_or(d.mixed_size),
        seed: b.data_seed.unwrap_or(d.seed),
        ..d
    }
}

fn read_boundaries(path: &Path) -> Result<BoundaryMap> {
    BoundaryMap::read(io::open(path)?).map_err(from_core(path))
}

/// Concatenates CIFAR batches, renaming images `{prefix}-{n}` in order.
fn read_batches(paths: &[PathBuf], prefix: &str, rec: &mut RunRecorder) -> Result<Dataset> {
    let mut out: Option<Dataset> = None;
    let mut n = 0;
    for path in paths {
        rec.input(path);
        let batch = read_cifar_batch(io::open(path)?, "").map_err(from_core(path))?;
        let target = out.get_or_insert_with(|| Dataset::new(batch.dims(), batch.num_classes()));
        for i in 0..batch.len() {
            let label = LabelDistribution::new(batch.target(i).to_vec()).map_err(from_core(path))?;
            target
                .push(format!("{prefix}-{n}"), &batch.image(i), &label)
                .map_err(from_core(path))?;
            n += 1;
        }
    }
    out.ok_or_else(|| CliError::Usage(format!("no {prefix} batches given")))
}

fn with_count_targets(eval: &Dataset, path: &Path) -> Result<Dataset> {
    let table = LabelFrequencyTable::read(io::open(path)?).map_err(from_core(path))?;
    let mut out = Dataset::new(eval.dims(), eval.num_classes());
    for i in 0..eval.len() {
        let id = &eval.ids()[i];
        let counts = table
            .get(id)
            .ok_or_else(|| CliError::invalid(path.display(), format!("no counts for `{id}`")))?;
        let weights: Vec<f64> = counts.iter().map(|&c| c as f64).collect();
        let target = LabelDistribution::from_weights(&weights).map_err(from_core(path))?;
        out.push(id.clone(), &eval.image(i), &target).map_err(from_core(path))?;
    }
    Ok(out)
}

type StimulusKey = (String, i64);

fn key(pair_id: &str, lambda_f: f64) -> StimulusKey {
    (pair_id.to_string(), (lambda_f * 1e9).round() as i64)
}

/// One mixed example per judged stimulus, rendered from the pool.
/// Coefficient-inference judgments and soft labels are used; selection
/// judgments carry no per-stimulus relabeling and repeats are skipped.
fn mixed_from_files(judgments: &Path, pool_dir: &Path, regular: &Dataset) -> Result<Vec<MixedExample>> {
    let store = import_hmix(judgments).map_err(from_core(judgments))?;
    let pool = load_pool(pool_dir)?;
    let mut groups: BTreeMap<StimulusKey, (f64, Vec<Judgment>, Vec<SoftLabelJudgment>)> = BTreeMap::new();
    for j in store
        .judgments()
        .filter(|j| j.interface == InterfaceKind::InferCoefficient && j.repeat_of.is_none())
    {
        groups
            .entry(key(&j.stimulus.pair_id, j.stimulus.lambda_f))
            .or_insert_with(|| (j.stimulus.lambda_f, Vec::new(), Vec::new()))
            .1
            .push(j.clone());
    }
    for s in store.soft_labels() {
        groups
            .entry(key(&s.stimulus.pair_id, s.stimulus.lambda_f))
            .or_insert_with(|| (s.stimulus.lambda_f, Vec::new(), Vec::new()))
            .2
            .push(s.clone());
    }
    let mut out = Vec::with_capacity(groups.len());
    for ((pair_id, _), (lambda_f, judgments_for, soft_labels)) in groups {
        let pair = pool
            .pair(&pair_id)
            .map_err(|e| CliError::invalid(judgments.display(), e))?;
        let image = pool
            .render(&pair_id, lambda_f)
            .map_err(|e| CliError::invalid(judgments.display(), e))?;
        if image.dims() != regular.dims() {
            return Err(CliError::invalid(
                pool_dir.display(),
                format!("pair `{pair_id}` images are {:?}, training images {:?}", image.dims(), regular.dims()),
            ));
        }
        out.push(MixedExample {
            pair_id,
            image: image.data().to_vec(),
            stimulus: StimulusClasses {
                class_a: pair.info.class_a,
                class_b: pair.info.class_b,
                lambda_f: MixCoefficient::new(lambda_f).map_err(|e| CliError::invalid(judgments.display(), e))?,
            },
            judgments: judgments_for,
            soft_labels,
        });
    }
    Ok(out)
}

pub fn prepare(d: &DataArgs, rec: &mut RunRecorder) -> Result<Prepared> {
    let mut prepared = match d.data.unwrap_or(DataSource::Benchmark) {
        DataSource::Benchmark => {
            let bench = build_benchmark(&bench_config(&d.bench)).map_err(|e| CliError::invalid("benchmark", e))?;
            Prepared {
                train: bench.train,
                eval: bench.eval,
            }
        }
        DataSource::Files => {
            let regular = read_batches(d.train_batch.as_deref().unwrap_or_default(), "train", rec)?;
            let mut eval = read_batches(d.eval_batch.as_deref().unwrap_or_default(), "eval", rec)?;
            if let Some(path) = &d.eval_counts {
                rec.input(path);
                eval = with_count_targets(&eval, path)?;
            }
            let mixed = match (&d.judgments, &d.pool) {
                (Some(j), Some(p)) => {
                    rec.input(j);
                    rec.input(p);
                    mixed_from_files(j, p, &regular)?
                }
                (None, None) => Vec::new(),
                _ => return Err(CliError::Usage("`--judgments` and `--pool` go together".into())),
            };
            Prepared {
                train: TrainData {
                    regular,
                    mixed,
                    boundaries: None,
                },
                eval,
            }
        }
    };
    if let Some(path) = &d.boundaries {
        rec.input(path);
        prepared.train.boundaries = Some(read_boundaries(path)?);
    }
    Ok(prepared)
}
