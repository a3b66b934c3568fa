use std::collections::BTreeSet;
use std::path::Path;

use hmix_core::policy::PolicyKind;
use hmix_core::train::{run_comparison, MeanCi, RowSpec};

use super::train::{eval_options, train_config};
use crate::cli::CompareArgs;
use crate::config::{output_path, require, resolve};
use crate::error::{CliError, Result};
use crate::io::{self, fmt_f, Table};
use crate::manifest::RunRecorder;

pub const DEFAULT_POLICIES: [PolicyKind; 4] = [
    PolicyKind::NoAug,
    PolicyKind::Mixup,
    PolicyKind::Relabel,
    PolicyKind::RelabelOmegaAggregated,
];

fn rows(a: &CompareArgs) -> Result<Vec<RowSpec>> {
    let rows: Vec<RowSpec> = match &a.rows {
        Some(rows) => rows
            .iter()
            .map(|r| {
                let config = train_config(r.policy, &[&a.knobs, &r.knobs])?;
                Ok(match &r.name {
                    Some(name) => RowSpec {
                        name: name.clone(),
                        config,
                    },
                    None => RowSpec::for_policy(config),
                })
            })
            .collect::<Result<_>>()?,
        None => a
            .policies
            .as_deref()
            .unwrap_or(&DEFAULT_POLICIES)
            .iter()
            .map(|&p| train_config(p, &[&a.knobs]).map(RowSpec::for_policy))
            .collect::<Result<_>>()?,
    };
    if rows.is_empty() {
        return Err(CliError::Usage("no rows to compare".into()));
    }
    let mut seen = BTreeSet::new();
    for r in &rows {
        if !seen.insert(r.name.as_str()) {
            return Err(CliError::Usage(format!("row name `{}` is used twice", r.name)));
        }
        if r.config.policy == PolicyKind::BoundaryFit && a.data.boundaries.is_none() {
            return Err(CliError::Usage("policy boundary-fit needs `--boundaries`".into()));
        }
    }
    Ok(rows)
}

fn ci(m: &MeanCi) -> [String; 2] {
    [fmt_f(m.mean), fmt_f(m.half_width)]
}

pub fn run(args: &CompareArgs, config: Option<&Path>) -> Result<()> {
    let (a, resolved) = resolve("compare", args, config, &["rows"])?;
    let out = output_path(&require(a.out.clone(), "out")?);
    let rows = rows(&a)?;
    let eval_opts = eval_options(&a.eval)?;
    let mut rec = RunRecorder::start("compare", resolved);
    let seeds: BTreeSet<u64> = rows.iter().flat_map(|r| r.config.seeds.iter().copied()).collect();
    rec.seeds(seeds);
    let data = super::data::prepare(&a.data, &mut rec)?;

    let report = run_comparison(&rows, &data.train, &data.eval, &eval_opts);

    io::create_dir(&out)?;
    io::write_bytes(&out.join("report.json"), format!("{}\n", report.to_json()).as_bytes())?;
    let table = report.to_table();
    io::write_bytes(&out.join("table.txt"), table.as_bytes())?;
    let mut per_seed = Table::new(&[
        "name", "policy", "seed", "ce", "ce_clamped", "fgsm_err", "calib_rms", "calib_ece", "accuracy",
    ]);
    let mut summary = Table::new(&[
        "name",
        "policy",
        "seeds",
        "failures",
        "ce_mean",
        "ce_ci95",
        "fgsm_err_mean",
        "fgsm_err_ci95",
        "calib_rms_mean",
        "calib_rms_ci95",
        "calib_ece_mean",
        "calib_ece_ci95",
        "accuracy_mean",
        "accuracy_ci95",
    ]);
    let mut failures = 0;
    for row in &report.rows {
        for m in &row.per_seed {
            per_seed.row(vec![
                row.name.clone(),
                row.policy.as_str().to_string(),
                m.seed.to_string(),
                fmt_f(m.ce),
                m.ce_clamped.to_string(),
                fmt_f(m.fgsm_err),
                fmt_f(m.calib_rms),
                fmt_f(m.calib_ece),
                fmt_f(m.accuracy),
            ]);
        }
        let mut cells = vec![
            row.name.clone(),
            row.policy.as_str().to_string(),
            row.per_seed.len().to_string(),
            row.failures.len().to_string(),
        ];
        match &row.summary {
            Some(s) => {
                for m in [&s.ce, &s.fgsm_err, &s.calib_rms, &s.calib_ece, &s.accuracy] {
                    cells.extend(ci(m));
                }
            }
            None => cells.extend(std::iter::repeat_n("-".to_string(), 10)),
        }
        summary.row(cells);
        for f in &row.failures {
            log::error!("{} seed {}: {}", row.name, f.seed, f.error);
        }
        failures += row.failures.len();
    }
    per_seed.write(&out.join("per_seed.tsv"))?;
    summary.write(&out.join("summary.tsv"))?;
    rec.finish(&out)?;
    print!("{table}");
    if failures > 0 {
        return Err(CliError::Run(format!(
            "{failures} seed run(s) failed; see report.json in {}",
            out.display()
        )));
    }
    Ok(())
}
