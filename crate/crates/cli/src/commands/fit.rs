use std::path::Path;

use hmix_core::boundary::{fit_all_pairs, pair_points, PairFitOptions};
use hmix_core::hmix::import_hmix;

use crate::cli::FitArgs;
use crate::config::{output_path, require, resolve};
use crate::error::{from_core, CliError, Result};
use crate::io::{self, fmt_f, Table};
use crate::manifest::RunRecorder;
use crate::plot::{self, Columns};

pub const BOUNDARY_FILE: &str = "boundaries.fit";
const CURVE_STEPS: usize = 20;

pub fn run(args: &FitArgs, config: Option<&Path>) -> Result<()> {
    let (a, resolved) = resolve("fit", args, config, &[])?;
    let input = require(a.input.clone(), "input")?;
    let out = output_path(&require(a.out.clone(), "out")?);
    let mut rec = RunRecorder::start("fit", resolved);
    rec.input(&input);
    let store = import_hmix(&input).map_err(from_core(&input))?;
    let report = fit_all_pairs(
        &store,
        PairFitOptions {
            use_medians: a.use_medians.unwrap_or(false),
        },
    );
    if report.boundaries.is_empty() {
        return Err(CliError::invalid(
            input.display(),
            "no class pair has enough coefficient-inference judgments to fit",
        ));
    }
    io::create_dir(&out)?;
    let path = out.join(BOUNDARY_FILE);
    let mut w = io::create(&path)?;
    report.boundaries.write(&mut w).map_err(from_core(&path))?;
    drop(w);
    io::write_json(&out.join("fit_report.json"), &report)?;

    let mut curves = Table::new(&["class_lo", "class_hi", "lambda_f", "predicted"]);
    for ((lo, hi), fit) in &report.boundaries.fits {
        for s in 0..=CURVE_STEPS {
            let x = s as f64 / CURVE_STEPS as f64;
            curves.row(vec![lo.to_string(), hi.to_string(), fmt_f(x), fmt_f(fit.predict(x))]);
        }
    }
    curves.write(&out.join("curves.tsv"))?;
    let (points, _) = pair_points(&store);
    let mut t = Table::new(&["class_lo", "class_hi", "lambda_f", "lambda_h"]);
    for ((lo, hi), pts) in &points {
        for (x, y) in pts {
            t.row(vec![lo.to_string(), hi.to_string(), fmt_f(*x), fmt_f(*y)]);
        }
    }
    t.write(&out.join("points.tsv"))?;

    if a.plots.unwrap_or(false) {
        let c = Columns::read(&out.join("curves.tsv"))?;
        let keys: Vec<String> = c
            .text("class_lo")?
            .into_iter()
            .zip(c.text("class_hi")?)
            .map(|(lo, hi)| format!("{lo}-{hi}"))
            .collect();
        let series = plot::group_points(&keys, &c.num("lambda_f")?, &c.num("predicted")?);
        io::create_dir(&out.join("plots"))?;
        plot::line_chart(
            &out.join("plots").join("boundaries.svg"),
            "Fitted category boundaries",
            ("lambda_f", "lambda_h"),
            &series,
            true,
        )?;
    }
    rec.finish(&out)?;
    println!(
        "{} boundaries fitted ({} pairs with too few points, {} non-monotone, {} not converged); written to {}",
        report.boundaries.len(),
        report.insufficient.len(),
        report.non_monotone.len(),
        report.not_converged.len(),
        path.display()
    );
    Ok(())
}
