use std::path::Path;

use hmix_core::hmix::{
    aggregate_relabelings, confidence_by_coefficient, entropy_bucket_analysis, flag_high_relabel, import_hmix,
    repeat_consistency, selection_histogram, AggregateReport, CentralTendency, FlagOptions, GroupBy, GroupKey,
    InterfaceKind, JudgmentFilter, LabelFrequencyTable,
};
use hmix_core::mix::INFER_COEFFICIENTS;
use serde_json::json;

use crate::cli::AnalyzeArgs;
use crate::config::{output_path, require, resolve};
use crate::error::{from_core, CliError, Result};
use crate::io::{self, fmt_f, fmt_opt, Table};
use crate::manifest::RunRecorder;
use crate::plot::{self, Columns};

fn aggregate_rows(report: &AggregateReport, class_pair: bool) -> Table {
    let mut header = vec![];
    if class_pair {
        header.extend(["class_lo", "class_hi"]);
    }
    header.extend([
        "lambda_f",
        "n",
        "relabel_mean",
        "relabel_sd",
        "relabel_median",
        "relabel_p25",
        "relabel_p75",
        "confidence_mean",
        "confidence_median",
    ]);
    let mut t = Table::new(&header);
    for curve in &report.curves {
        for b in &curve.buckets {
            let mut row = vec![];
            if let GroupKey::ClassPair(lo, hi) = curve.group {
                row.extend([lo.to_string(), hi.to_string()]);
            }
            let r = &b.relabel;
            row.extend([
                fmt_f(b.lambda_f),
                r.n.to_string(),
                fmt_f(r.mean),
                fmt_f(r.sd),
                fmt_f(r.median),
                fmt_f(r.p25),
                fmt_f(r.p75),
                fmt_opt(b.confidence.as_ref().map(|c| c.mean)),
                fmt_opt(b.confidence.as_ref().map(|c| c.median)),
            ]);
            t.row(row);
        }
    }
    t
}

pub fn run(args: &AnalyzeArgs, config: Option<&Path>) -> Result<()> {
    let (a, resolved) = resolve("analyze", args, config, &[])?;
    let input = require(a.input.clone(), "input")?;
    let out = output_path(&require(a.out.clone(), "out")?);
    let mut rec = RunRecorder::start("analyze", resolved);
    rec.input(&input);
    let store = import_hmix(&input).map_err(from_core(&input))?;
    let pool_construct = a.pool_construct.unwrap_or(true);
    io::create_dir(&out)?;

    let infer = JudgmentFilter::interfaces(&[InterfaceKind::InferCoefficient]);
    let confidence = confidence_by_coefficient(&store, &infer);
    let mut t = Table::new(&["coefficient", "distance", "n", "mean", "sd", "median", "p25", "p75"]);
    for r in &confidence {
        let c = &r.confidence;
        t.row(vec![
            fmt_f(r.coefficient),
            fmt_f(r.distance),
            c.n.to_string(),
            fmt_f(c.mean),
            fmt_f(c.sd),
            fmt_f(c.median),
            fmt_f(c.p25),
            fmt_f(c.p75),
        ]);
    }
    t.write(&out.join("confidence.tsv"))?;

    let global = aggregate_relabelings(&store, GroupBy::Global, &infer, &INFER_COEFFICIENTS);
    aggregate_rows(&global, false).write(&out.join("aggregate_global.tsv"))?;
    let by_pair = aggregate_relabelings(&store, GroupBy::ClassPair, &infer, &INFER_COEFFICIENTS);
    aggregate_rows(&by_pair, true).write(&out.join("aggregate_class_pair.tsv"))?;

    let flags = flag_high_relabel(
        &store,
        FlagOptions {
            threshold: a.threshold.unwrap_or(0.15),
            tendency: a.tendency.unwrap_or(CentralTendency::Mean),
            pool_construct,
        },
    );
    let mut t = Table::new(&["interface", "pair_id", "central", "flagged", "across"]);
    for (iface, pairs) in &flags.central {
        for (pair, central) in pairs {
            let flagged = flags.per_interface[iface].contains(pair);
            t.row(vec![
                iface.clone(),
                pair.clone(),
                fmt_f(*central),
                flagged.to_string(),
                flags.across.contains(pair).to_string(),
            ]);
        }
    }
    t.write(&out.join("flags.tsv"))?;

    let histogram = selection_histogram(&store, pool_construct);
    let mut t = Table::new(&["interface", "lambda_h", "count"]);
    for (iface, bins) in &histogram {
        for (lambda, n) in bins {
            t.row(vec![iface.clone(), fmt_f(*lambda), n.to_string()]);
        }
    }
    t.write(&out.join("selection_histogram.tsv"))?;

    let repeats = repeat_consistency(&store);
    let mut t = Table::new(&["interface", "n_repeats", "median_lambda_diff", "median_confidence_diff"]);
    for (kind, r) in &repeats {
        t.row(vec![
            kind.as_str().to_string(),
            r.n_repeats.to_string(),
            fmt_f(r.median_lambda_diff),
            fmt_opt(r.median_confidence_diff),
        ]);
    }
    t.write(&out.join("repeat_consistency.tsv"))?;

    let entropy = match &a.label_counts {
        Some(path) => {
            rec.input(path);
            let table = LabelFrequencyTable::read(io::open(path)?).map_err(from_core(path))?;
            let (high, low) = (a.entropy_high.unwrap_or(0.5), a.entropy_low.unwrap_or(0.1));
            if low > high {
                return Err(CliError::Usage(format!("entropy_low {low} exceeds entropy_high {high}")));
            }
            let report = entropy_bucket_analysis(&store, &table, high, low);
            let mut t = Table::new(&["bucket", "n", "mean_confidence", "mean_abs_relabel"]);
            for (bucket, r) in &report.rows {
                t.row(vec![
                    bucket.as_str().to_string(),
                    r.n.to_string(),
                    fmt_f(r.mean_confidence),
                    fmt_f(r.mean_abs_relabel),
                ]);
            }
            t.write(&out.join("entropy_buckets.tsv"))?;
            Some(report)
        }
        None => None,
    };

    let repeats_json: serde_json::Map<String, serde_json::Value> = repeats
        .iter()
        .map(|(k, v)| (k.as_str().to_string(), json!(v)))
        .collect();
    let report = json!({
        "input": input.display().to_string(),
        "records": store.len(),
        "pairs": store.pairs().count(),
        "judgments": store.judgments().count(),
        "soft_labels": store.soft_labels().count(),
        "confidence": confidence,
        "aggregate_global": global,
        "aggregate_class_pair": by_pair,
        "flags": flags,
        "selection_histogram": histogram,
        "repeat_consistency": repeats_json,
        "entropy_buckets": entropy,
    });
    io::write_json(&out.join("report.json"), &report)?;

    if a.plots.unwrap_or(false) {
        draw_plots(&out)?;
    }
    rec.finish(&out)?;
    println!(
        "{} judgments analyzed; {} confidence rows; {} pairs flagged across interfaces; tables in {}",
        store.judgments().count(),
        confidence.len(),
        flags.across.len(),
        out.display()
    );
    Ok(())
}

fn draw_plots(out: &Path) -> Result<()> {
    let dir = out.join("plots");
    io::create_dir(&dir)?;

    let c = Columns::read(&out.join("confidence.tsv"))?;
    let bars: Vec<(String, f64)> = c.text("coefficient")?.into_iter().zip(c.num("mean")?).collect();
    plot::bar_chart(&dir.join("confidence.svg"), "Mean confidence by coefficient", "confidence", &bars)?;

    let g = Columns::read(&out.join("aggregate_global.tsv"))?;
    let pts: Vec<(f64, f64)> = g.num("lambda_f")?.into_iter().zip(g.num("relabel_mean")?).collect();
    plot::line_chart(
        &dir.join("aggregate_global.svg"),
        "Mean human coefficient",
        ("lambda_f", "lambda_h"),
        &[("all pairs".to_string(), pts)],
        true,
    )?;

    let p = Columns::read(&out.join("aggregate_class_pair.tsv"))?;
    let keys: Vec<String> = p
        .text("class_lo")?
        .into_iter()
        .zip(p.text("class_hi")?)
        .map(|(lo, hi)| format!("{lo}-{hi}"))
        .collect();
    let series = plot::group_points(&keys, &p.num("lambda_f")?, &p.num("relabel_mean")?);
    plot::line_chart(
        &dir.join("aggregate_class_pair.svg"),
        "Mean human coefficient per class pair",
        ("lambda_f", "lambda_h"),
        &series,
        true,
    )?;

    let h = Columns::read(&out.join("selection_histogram.tsv"))?;
    let ifaces = h.text("interface")?;
    let lambdas = h.text("lambda_h")?;
    let counts = h.num("count")?;
    let mut names: Vec<&String> = ifaces.iter().collect();
    names.dedup();
    for name in names {
        let bars: Vec<(String, f64)> = ifaces
            .iter()
            .zip(&lambdas)
            .zip(&counts)
            .filter(|((i, _), _)| *i == name)
            .map(|((_, l), c)| (l.clone(), *c))
            .collect();
        plot::bar_chart(
            &dir.join(format!("selection_{name}.svg")),
            &format!("Selected coefficients ({name})"),
            "count",
            &bars,
        )?;
    }
    Ok(())
}
