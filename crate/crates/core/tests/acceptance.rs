//! Acceptance run: one PASS/FAIL line per criterion, nonzero exit if any fail.
//!
//! Pass a substring to run only matching criteria.

mod oracles;

use std::collections::BTreeSet;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use hmix_core::boundary::{fit_boundary, LogisticParams};
use hmix_core::hmix::{
    confidence_by_coefficient, flag_high_relabel, read_records, repeat_consistency, write_records, ClassReport,
    FlagOptions, HmixStore, InterfaceKind, Judgment, JudgmentFilter, PairInfo, Record, SoftLabelJudgment,
    StimulusRef,
};
use hmix_core::mix::sweep_grid;
use hmix_core::policy::{mixup_label, smooth_with_confidence, PolicyKind, SmoothingSpec};
use hmix_core::train::metrics::soft_ce_rows;
use hmix_core::train::{
    build_benchmark, calibration_from_predictions, run_comparison, BenchmarkConfig, CalibrationFlavor, EvalOptions,
    RowSpec, TrainConfig,
};
use hmix_core::{data_mix, label_mix, Error, ImageTensor, LabelDistribution, MixCoefficient};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

type Check = fn() -> Result<String, String>;

fn ensure(ok: bool, msg: impl Into<String>) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn random_image(rng: &mut ChaCha8Rng, len: usize) -> ImageTensor {
    let data = (0..len)
        .map(|_| match rng.random_range(0..8) {
            0 => 0.0,
            1 => 1.0,
            _ => rng.random::<f64>(),
        })
        .collect();
    ImageTensor::new(1, len, 1, data).unwrap()
}

fn random_label(rng: &mut ChaCha8Rng, k: usize) -> LabelDistribution {
    if rng.random_bool(0.3) {
        return LabelDistribution::one_hot(rng.random_range(0..k), k).unwrap();
    }
    let w: Vec<f64> = (0..k).map(|_| rng.random::<f64>() + 1e-3).collect();
    LabelDistribution::from_weights(&w).unwrap()
}

fn random_lambda(rng: &mut ChaCha8Rng) -> MixCoefficient {
    let v = match rng.random_range(0..6) {
        0 => 0.0,
        1 => 1.0,
        2 => 0.5,
        _ => rng.random::<f64>(),
    };
    MixCoefficient::new(v).unwrap()
}

fn mixing_properties() -> Result<String, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let cases = 10_000;
    for case in 0..cases {
        let (a, b) = (random_image(&mut rng, 27), random_image(&mut rng, 27));
        let lam = random_lambda(&mut rng);
        let m = data_mix(&a, &b, lam).unwrap();
        ensure(m == data_mix(&b, &a, lam.complement()).unwrap(), format!("case {case}: data_mix not mirror symmetric"))?;
        for ((v, x), y) in m.data().iter().zip(a.data()).zip(b.data()) {
            ensure(x.min(*y) <= *v && *v <= x.max(*y), format!("case {case}: pixel {v} outside [{x}, {y}]"))?;
        }

        let (ya, yb) = (random_label(&mut rng, 10), random_label(&mut rng, 10));
        let l = label_mix(&ya, &yb, lam).unwrap();
        ensure(l == label_mix(&yb, &ya, lam.complement()).unwrap(), format!("case {case}: label_mix not mirror symmetric"))?;
        for ((v, x), y) in l.probs().iter().zip(ya.probs()).zip(yb.probs()) {
            ensure(x.min(*y) <= *v && *v <= x.max(*y), format!("case {case}: probability outside endpoints"))?;
        }
        let sum: f64 = l.probs().iter().sum();
        ensure((sum - 1.0).abs() <= 1e-9, format!("case {case}: label sums to {sum}"))?;
    }
    ensure(sweep_grid().len() == 11, "default grid is not 11 points")?;
    Ok(format!("{cases} random cases: mirror symmetry bit-exact, convexity, sums within 1e-9"))
}

fn smoothing_suite() -> Result<String, String> {
    let two_hot = mixup_label(2, 7, MixCoefficient::new(0.5).unwrap(), 10).unwrap();
    let near_zero = smooth_with_confidence(&two_hot, 1.0, SmoothingSpec::new(1e-12, 1e-6).unwrap()).unwrap();
    for (s, t) in near_zero.probs().iter().zip(two_hot.probs()) {
        ensure((s - t).abs() <= 1e-9, "alpha -> 0 does not give the two-hot label")?;
    }
    let huge = smooth_with_confidence(&two_hot, 0.0, SmoothingSpec::new(1e12, 0.5).unwrap()).unwrap();
    ensure(huge.probs().iter().all(|p| (p - 0.1).abs() <= 1e-9), "alpha -> inf does not give uniform")?;

    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for case in 0..2_000 {
        let ca = rng.random_range(0..10);
        let cb = (ca + rng.random_range(1..10)) % 10;
        let label = mixup_label(ca, cb, MixCoefficient::new(rng.random::<f64>()).unwrap(), 10).unwrap();
        let spec = SmoothingSpec::new(rng.random_range(1.0..100.0), rng.random_range(1e-5..0.5)).unwrap();
        let (w1, w2) = (rng.random::<f64>(), rng.random::<f64>());
        if (w1 - w2).abs() < 1e-3 {
            continue;
        }
        let (hi, lo) = if w1 > w2 { (w1, w2) } else { (w2, w1) };
        let s_hi = smooth_with_confidence(&label, hi, spec).unwrap();
        let s_lo = smooth_with_confidence(&label, lo, spec).unwrap();
        ensure(s_hi.entropy() < s_lo.entropy(), format!("case {case}: entropy not decreasing in omega"))?;
        let p = label.probs();
        if p[ca] != p[cb] {
            ensure(s_hi.argmax() == label.argmax() && s_lo.argmax() == label.argmax(), format!("case {case}: argmax moved"))?;
        }
    }

    // alpha = 50 * 1e-4 = 0.005, endpoint mass (0.5 + 0.005 / 10) / 1.005
    let expected = 0.5005 / 1.005;
    let smoothed = smooth_with_confidence(&two_hot, 1.0, SmoothingSpec::default()).unwrap();
    let mass = smoothed.probs()[2];
    ensure((mass - expected).abs() <= 1e-12, format!("endpoint mass {mass}, hand value {expected}"))?;
    ensure((mass - 0.49801).abs() <= 5e-6, format!("endpoint mass {mass} is not 0.49801"))?;
    Ok(format!("limits, entropy order and argmax over 2000 cases; default endpoint mass {mass:.6}"))
}

fn boundary_recovery() -> Result<String, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let noise = Normal::new(0.0, 0.02).unwrap();
    let xs: Vec<f64> = (0..30).map(|i| i as f64 / 29.0).collect();
    let trials = 200;
    let mut hits = 0;
    for _ in 0..trials {
        let truth = LogisticParams::new(
            rng.random_range(0.0..0.2),
            rng.random_range(0.8..1.0),
            rng.random_range(4.0..20.0),
            rng.random_range(0.3..0.7),
        );
        let pts: Vec<_> = xs
            .iter()
            .map(|&x| (x, (truth.eval(x) + noise.sample(&mut rng)).clamp(0.0, 1.0)))
            .collect();
        let fit = fit_boundary(&pts, None).map_err(|e| e.to_string())?;
        if ((fit.params.steepness - truth.steepness) / truth.steepness).abs() <= 0.15 {
            hits += 1;
        }
    }
    ensure(hits * 100 >= trials * 95, format!("steepness recovered in {hits}/{trials}"))?;

    let grid = [0.1, 0.25, 0.5, 0.75, 0.9];
    let constant: Vec<_> = grid.iter().map(|&x| (x, 0.5)).collect();
    let fit = fit_boundary(&constant, None).map_err(|e| e.to_string())?;
    let worst_const = (0..=100).map(|i| (fit.predict(i as f64 / 100.0) - 0.5).abs()).fold(0.0, f64::max);
    ensure(worst_const <= 1e-6, format!("constant data: deviation {worst_const}"))?;

    let identity: Vec<_> = grid.iter().map(|&x| (x, x)).collect();
    let fit = fit_boundary(&identity, None).map_err(|e| e.to_string())?;
    let worst_id = (0..=800)
        .map(|i| {
            let x = 0.1 + i as f64 * 0.001;
            (fit.predict(x) - x).abs()
        })
        .fold(0.0, f64::max);
    ensure(worst_id <= 0.02, format!("identity data: deviation {worst_id}"))?;
    Ok(format!(
        "steepness within 15% in {hits}/{trials}; constant dev {worst_const:.1e}; identity dev {worst_id:.4}"
    ))
}

fn gradient_oracle() -> Result<String, String> {
    let mut worst = (0.0f64, 0.0f64);
    for seed in 0..5 {
        let (p, x) = oracles::finite_difference_errors(seed);
        worst = (worst.0.max(p), worst.1.max(x));
    }
    ensure(worst.0 <= 1e-4 && worst.1 <= 1e-4, format!("rel err params {:.2e}, inputs {:.2e}", worst.0, worst.1))?;
    let mismatches = oracles::linear_fgsm_mismatches(11, 200);
    ensure(mismatches == 0, format!("{mismatches} FGSM sign mismatches"))?;
    Ok(format!(
        "max rel err params {:.2e}, inputs {:.2e}; FGSM sign matches closed form on 200 linear models",
        worst.0, worst.1
    ))
}

fn metric_oracles() -> Result<String, String> {
    let mut one_hot = vec![0.0; 10];
    one_hot[4] = 1.0;
    let (ce, _) = soft_ce_rows(&one_hot, &one_hot, 10);
    ensure(ce == 0.0, format!("perfect prediction CE {ce}"))?;
    let (ce, _) = soft_ce_rows(&[0.1; 10], &one_hot, 10);
    // 0.1 is not representable, so the exact value is -ln(fl(0.1)), one ulp from ln 10
    ensure(ce == -(0.1f64.ln()) && (ce - std::f64::consts::LN_10).abs() <= 1e-15, format!("uniform prediction CE {ce}"))?;
    let (ce, _) = soft_ce_rows(&[0.5, 0.5], &[0.5, 0.5], 2);
    ensure(ce == 2f64.ln(), format!("half/half CE {ce}"))?;

    // 50 predictions at 0.9 with 40 correct, 50 at 0.6 with 30 correct
    let mut conf = vec![0.9; 50];
    conf.extend(vec![0.6; 50]);
    let correct: Vec<bool> = (0..100).map(|i| if i < 50 { i < 40 } else { i < 80 }).collect();
    let ece = calibration_from_predictions(&conf, &correct, 15, CalibrationFlavor::Ece).map_err(|e| e.to_string())?;
    ensure((ece - 0.05).abs() <= 1e-12, format!("two-bin ECE {ece}"))?;

    let p = oracles::uniform_chi2_pvalue(100_000, 20, 12);
    ensure(p > 0.01, format!("Beta(1,1) uniformity p = {p}"))?;
    Ok(format!("CE cases exact; two-bin ECE {ece}; Beta(1,1) chi2 p = {p:.3} over 1e5 draws"))
}

fn desk_ordering() -> Result<String, String> {
    let bench = build_benchmark(&BenchmarkConfig::default()).map_err(|e| e.to_string())?;
    let policies = [PolicyKind::NoAug, PolicyKind::Mixup, PolicyKind::Relabel, PolicyKind::RelabelOmegaAggregated];
    let rows: Vec<RowSpec> = policies.iter().map(|&p| RowSpec::for_policy(TrainConfig::desk_scale(p))).collect();
    let report = run_comparison(&rows, &bench.train, &bench.eval, &EvalOptions::default());
    for row in &report.rows {
        ensure(row.failures.is_empty(), format!("{}: {:?}", row.name, row.failures))?;
    }
    let row = |p: PolicyKind| &report.rows[policies.iter().position(|&q| q == p).unwrap()];
    let wins = |better: PolicyKind, worse: PolicyKind, metric: fn(&hmix_core::train::SeedMetrics) -> f64| {
        let (b, w) = (row(better), row(worse));
        b.per_seed.iter().zip(&w.per_seed).filter(|(x, y)| metric(x) < metric(y)).count()
    };
    let checks = [
        ("mixup < No Aug on CE", wins(PolicyKind::Mixup, PolicyKind::NoAug, |m| m.ce)),
        ("Relabel & omega < Relabel on CE", wins(PolicyKind::RelabelOmegaAggregated, PolicyKind::Relabel, |m| m.ce)),
        (
            "Relabel & omega < Relabel on FGSM error",
            wins(PolicyKind::RelabelOmegaAggregated, PolicyKind::Relabel, |m| m.fgsm_err),
        ),
    ];
    for line in report.to_table().lines() {
        println!("        {line}");
    }
    let detail = checks.iter().map(|(name, n)| format!("{name}: {n}/5")).collect::<Vec<_>>().join("; ");
    ensure(checks.iter().all(|(_, n)| *n >= 4), detail.clone())?;
    Ok(detail)
}

fn judgment(participant: &str, session: &str, trial: u32, pair: &str, lf: f64, kind: InterfaceKind, lh: f64) -> Judgment {
    Judgment {
        participant_id: participant.into(),
        session_id: session.into(),
        trial_index: trial,
        stimulus: StimulusRef {
            pair_id: pair.into(),
            lambda_f: lf,
        },
        interface: kind,
        lambda_h: lh,
        confidence: None,
        repeat_of: None,
        response_ms: 1000,
    }
}

fn pair(i: usize) -> PairInfo {
    PairInfo {
        pair_id: format!("pair-{i:02}"),
        endpoint_a_id: format!("img-{i}a"),
        endpoint_b_id: format!("img-{i}b"),
        class_a: i % 10,
        class_b: (i + 1) % 10,
    }
}

fn analysis_fixtures() -> Result<String, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(3);

    // confidences placed symmetrically around each target mean
    let mut records: Vec<Record> = (0..30).map(|i| Record::Pair(pair(i))).collect();
    let targets = [(0.1, 0.79), (0.25, 0.72), (0.5, 0.63)];
    let mut trial = 0;
    for (coef, mean) in targets {
        for _ in 0..20 {
            let spread = rng.random_range(0.0..0.17);
            for (conf, lf) in [(mean + spread, coef), (mean - spread, 1.0 - coef)] {
                let mut j = judgment("p1", "s-infer", trial, "pair-00", lf, InterfaceKind::InferCoefficient, 0.5);
                j.confidence = Some(conf);
                records.push(Record::Judgment(j));
                trial += 1;
            }
        }
    }
    let store = HmixStore::from_records(records.clone()).map_err(|e| e.to_string())?;
    let rows = confidence_by_coefficient(&store, &JudgmentFilter::default());
    ensure(rows.len() == 3, format!("{} confidence rows", rows.len()))?;
    for (row, (coef, mean)) in rows.iter().zip(targets) {
        ensure((row.coefficient - coef).abs() < 1e-12, format!("row order: {}", row.coefficient))?;
        ensure(
            (row.confidence.mean - mean).abs() <= 1e-9,
            format!("coefficient {coef}: mean {} vs {mean}", row.confidence.mean),
        )?;
    }

    // planted across-interface flags: 9 pairs extreme under every interface,
    // others extreme under one interface only or near the midpoint
    let planted: BTreeSet<usize> = [0, 3, 5, 7, 11, 13, 17, 19, 23].into_iter().collect();
    let mut flag_records: Vec<Record> = (0..30).map(|i| Record::Pair(pair(i))).collect();
    let kinds = [InterfaceKind::ConstructStartLow, InterfaceKind::ConstructStartHigh, InterfaceKind::SelectShuffled];
    let mut trials = [0u32; 3];
    for i in 0..30 {
        for (ki, kind) in kinds.into_iter().enumerate() {
            let selections: [f64; 2] = if planted.contains(&i) {
                if i % 2 == 0 { [0.8, 0.9] } else { [0.2, 0.1] }
            } else if i % 3 == 1 && kind == InterfaceKind::SelectShuffled {
                [0.9, 0.8]
            } else if i % 3 == 2 && kind != InterfaceKind::SelectShuffled {
                [0.1, 0.2]
            } else {
                [0.5, 0.6]
            };
            for (p, lh) in selections.into_iter().enumerate() {
                let participant = format!("p{p}");
                let session = format!("s-{}-{p}", kind.as_str());
                let j = judgment(&participant, &session, trials[ki], &format!("pair-{i:02}"), 0.5, kind, lh);
                flag_records.push(Record::Judgment(j));
            }
            trials[ki] += 1;
        }
    }
    // a repeat with an extreme answer must not change any flag
    let mut rep = judgment("p0", "s-select-shuffled-0", trials[2], "pair-01", 0.5, InterfaceKind::SelectShuffled, 1.0);
    rep.repeat_of = Some(0);
    flag_records.push(Record::Judgment(rep));
    let store = HmixStore::from_records(flag_records).map_err(|e| e.to_string())?;
    let report = flag_high_relabel(&store, FlagOptions::default());
    let expected: Vec<String> = planted.iter().map(|i| format!("pair-{i:02}")).collect();
    ensure(report.across == expected, format!("across set {:?}", report.across))?;

    // planted repeat differences; medians worked out by hand below
    let lambda_diffs = [0.0, 0.1, 0.3, 0.2, 0.1, 0.4, 0.0, 0.2, 0.1];
    let conf_diffs = [0.05, 0.2, 0.1, 0.0, 0.15, 0.1, 0.3, 0.05, 0.25];
    let mut rep_records: Vec<Record> = vec![Record::Pair(pair(0))];
    for (s, (dl, dc)) in lambda_diffs.iter().zip(conf_diffs).enumerate() {
        let session = format!("s-rep-{s}");
        let mut orig = judgment("px", &session, 14, "pair-00", 0.3, InterfaceKind::InferCoefficient, 0.2);
        orig.confidence = Some(0.5);
        let mut again = judgment("px", &session, 60, "pair-00", 0.3, InterfaceKind::InferCoefficient, 0.2 + dl);
        again.confidence = Some(0.5 - dc);
        again.repeat_of = Some(14);
        rep_records.push(Record::Judgment(orig));
        rep_records.push(Record::Judgment(again));
        let sel = judgment("px", &format!("{session}-sel"), 3, "pair-00", 0.5, InterfaceKind::SelectShuffled, 0.5);
        let mut sel_again = sel.clone();
        sel_again.trial_index = 31;
        sel_again.repeat_of = Some(3);
        sel_again.lambda_h = if s % 3 == 0 { 0.6 } else { 0.5 };
        rep_records.push(Record::Judgment(sel));
        rep_records.push(Record::Judgment(sel_again));
    }
    let store = HmixStore::from_records(rep_records).map_err(|e| e.to_string())?;
    let rc = repeat_consistency(&store);
    let infer = &rc[&InterfaceKind::InferCoefficient];
    let select = &rc[&InterfaceKind::SelectShuffled];
    // sorted lambda diffs 0,0,.1,.1,[.1],.2,.2,.3,.4 ; conf diffs 0,.05,.05,.1,[.1],.15,.2,.25,.3
    ensure(infer.n_repeats == 9, format!("{} infer repeats", infer.n_repeats))?;
    ensure((infer.median_lambda_diff - 0.1).abs() <= 1e-12, format!("lambda median {}", infer.median_lambda_diff))?;
    let mc = infer.median_confidence_diff.unwrap_or(f64::NAN);
    ensure((mc - 0.1).abs() <= 1e-12, format!("confidence median {mc}"))?;
    ensure(select.median_lambda_diff == 0.0 && select.median_confidence_diff.is_none(), "selection repeats")?;

    Ok(format!(
        "confidence means 0.79/0.72/0.63 within 1e-9; across set = {} planted pairs; repeat medians 0.1/0.1",
        expected.len()
    ))
}

fn random_record(rng: &mut ChaCha8Rng, i: usize) -> Record {
    let participant = format!("p{}", rng.random_range(0..40));
    let session = format!("s{i:05}");
    let pair_id = format!("pair-{}", rng.random_range(0..249));
    let lf = if rng.random_bool(0.5) { (rng.random_range(0..=10) as f64) / 10.0 } else { rng.random::<f64>() };
    match rng.random_range(0..4) {
        0 => Record::Pair(PairInfo {
            pair_id: format!("pair-{i}"),
            endpoint_a_id: format!("a{i}"),
            endpoint_b_id: format!("b{i}"),
            class_a: i % 10,
            class_b: (i + 1 + rng.random_range(0..9)) % 10,
        }),
        1 => {
            let kind = InterfaceKind::ALL[rng.random_range(0..3)];
            let mut j = judgment(&participant, &session, rng.random_range(1..40), &pair_id, lf, kind, rng.random::<f64>());
            if rng.random_bool(0.2) {
                j.repeat_of = Some(0);
            }
            j.response_ms = rng.random_range(0..100_000);
            Record::Judgment(j)
        }
        2 => {
            let mut j = judgment(&participant, &session, rng.random_range(0..62), &pair_id, lf, InterfaceKind::InferCoefficient, rng.random::<f64>());
            j.confidence = Some(rng.random::<f64>());
            Record::Judgment(j)
        }
        _ => {
            let top1 = rng.random_range(0..10);
            let p1 = rng.random::<f64>() * 100.0;
            let top2 = rng.random_bool(0.7).then(|| ClassReport {
                class: (top1 + 1 + rng.random_range(0..9)) % 10,
                prob: (100.0 - p1) * rng.random::<f64>(),
            });
            let ruled_out = (0..10)
                .filter(|&c| c != top1 && top2.is_none_or(|t| t.class != c) && rng.random_bool(0.3))
                .collect();
            Record::SoftLabel(SoftLabelJudgment {
                participant_id: participant,
                session_id: session,
                trial_index: rng.random_range(0..25),
                stimulus: StimulusRef { pair_id, lambda_f: lf },
                top1: ClassReport { class: top1, prob: p1 },
                top2,
                ruled_out,
                response_ms: rng.random_range(0..100_000),
            })
        }
    }
}

fn hmix_format() -> Result<String, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let records: Vec<Record> = (0..1000).map(|i| random_record(&mut rng, i)).collect();
    let mut buf = Vec::new();
    write_records(&mut buf, records.iter()).map_err(|e| e.to_string())?;
    let back: Vec<Record> = read_records(buf.as_slice()).map_err(|e| e.to_string())?.into_iter().map(|(_, r)| r).collect();
    ensure(back == records, "round trip changed records")?;
    let mut again = Vec::new();
    write_records(&mut again, back.iter()).map_err(|e| e.to_string())?;
    ensure(again == buf, "rewritten text differs")?;

    let text = String::from_utf8(buf).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    let valid_judgment = "judgment\tp1\ts1\t3\tpair-1\t0.5\tselect-shuffled\t0.7\t-\t-\t900";
    let corruptions = [
        "judgment\tp1\ts1\t3\tpair-1\t0.5\tselect-shuffled\t0.7\t-\t900",
        "judgment\tp1\ts1\t3\tpair-1\thalf\tselect-shuffled\t0.7\t-\t-\t900",
        "judgment\tp1\ts1\t3\tpair-1\t0.5\tselect-shuffled\t1.5\t-\t-\t900",
        "judgment\tp1\ts1\t3\tpair-1\t0.5\tselect-shuffled\t0.7\t0.9\t-\t900",
        "judgment\tp1\ts1\t3\tpair-1\t0.5\tinfer-coefficient\t0.7\t-\t-\t900",
        "judgment\tp1\ts1\t3\tpair-1\t0.5\tunknown-kind\t0.7\t-\t-\t900",
        "softlabel\tp1\ts1\t3\tpair-1\t0.5\t2\t70\t4\t40\t-\t900",
        "softlabel\tp1\ts1\t3\tpair-1\t0.5\t2\t70\t4\t-\t-\t900",
        "pair\tpair-x\ta\tb\t3\t3",
        "verdict\tp1",
    ];
    ensure(hmix_core::hmix::parse_record(valid_judgment, 1).is_ok(), "control line rejected")?;
    for (n, bad) in corruptions.iter().enumerate() {
        let at = 2 + (n * 97) % (lines.len() - 2);
        let mut corrupted: Vec<&str> = lines.clone();
        corrupted.insert(at, bad);
        let joined = corrupted.join("\n");
        match read_records(joined.as_bytes()) {
            Err(Error::Parse { line, .. }) if line == at + 1 => {}
            other => return Err(format!("corruption {n} at line {}: got {other:?}", at + 1)),
        }
    }
    match read_records("hmix-v2\n".as_bytes()) {
        Err(Error::Version { .. }) => {}
        other => return Err(format!("wrong header accepted: {other:?}")),
    }
    Ok(format!("1000 records round-trip bit-exact; {} malformed lines rejected at their line numbers", corruptions.len()))
}

fn main() -> ExitCode {
    let criteria: [(&str, Duration, Check); 8] = [
        ("mixing and label properties", Duration::from_secs(10), mixing_properties),
        ("smoothing suite", Duration::from_secs(5), smoothing_suite),
        ("boundary-fit recovery", Duration::from_secs(30), boundary_recovery),
        ("gradient oracle", Duration::from_secs(30), gradient_oracle),
        ("metric oracles", Duration::from_secs(30), metric_oracles),
        ("desk-scale policy ordering", Duration::from_secs(600), desk_ordering),
        ("analysis fixtures", Duration::from_secs(30), analysis_fixtures),
        ("H-Mix format", Duration::from_secs(30), hmix_format),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for (name, limit, check) in criteria {
        if !filter.is_empty() && !filter.iter().any(|f| name.contains(f.as_str())) {
            continue;
        }
        let start = Instant::now();
        let result = check();
        let elapsed = start.elapsed();
        let (ok, detail) = match result {
            Ok(d) if elapsed <= limit => (true, d),
            Ok(d) => (false, format!("{d}; took {elapsed:.1?}, limit {limit:?}")),
            Err(e) => (false, e),
        };
        if !ok {
            failed += 1;
        }
        println!("{} {name} [{:.1?}]: {detail}", if ok { "PASS" } else { "FAIL" }, elapsed);
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        ExitCode::FAILURE
    } else {
        ExitCode::SUCCESS
    }
}
