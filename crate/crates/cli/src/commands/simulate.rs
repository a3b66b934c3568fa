use std::path::Path;

use hmix_core::hmix::export_hmix;
use hmix_core::train::build_benchmark;

use super::data::bench_config;
use crate::cli::SimulateArgs;
use crate::config::{output_path, require, resolve};
use crate::error::{from_core, CliError, Result};
use crate::io::{self, fmt_f, Table};
use crate::manifest::RunRecorder;

pub fn run(args: &SimulateArgs, config: Option<&Path>) -> Result<()> {
    let (a, resolved) = resolve("simulate", args, config, &[])?;
    let out = output_path(&require(a.out.clone(), "out")?);
    let cfg = bench_config(&a.bench);
    let mut rec = RunRecorder::start("simulate", resolved);
    rec.seeds([cfg.seed]);
    let bench = build_benchmark(&cfg).map_err(|e| CliError::invalid("benchmark", e))?;

    io::create_dir(&out)?;
    let judgments = out.join("judgments.hmix");
    export_hmix(&bench.store, &judgments).map_err(from_core(&judgments))?;
    let counts = out.join("label_counts.csv");
    let mut w = io::create(&counts)?;
    bench.train_shapes.counts.write(&mut w).map_err(from_core(&counts))?;
    drop(w);
    let mut t = Table::new(&["class_lo", "class_hi", "lower", "upper", "steepness", "midpoint"]);
    for ((lo, hi), p) in &bench.truths {
        t.row(vec![
            lo.to_string(),
            hi.to_string(),
            fmt_f(p.lower),
            fmt_f(p.upper),
            fmt_f(p.steepness),
            fmt_f(p.midpoint),
        ]);
    }
    t.write(&out.join("truths.tsv"))?;
    rec.finish(&out)?;
    println!(
        "{} records ({} judgments) written to {}",
        bench.store.len(),
        bench.store.judgments().count(),
        judgments.display()
    );
    Ok(())
}
