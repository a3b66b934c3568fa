use std::collections::BTreeSet;

use hmix_core::boundary::{BoundaryFit, BoundaryMap, LogisticParams};
use hmix_core::hmix::{ClassReport, InterfaceKind, Judgment, SoftLabelJudgment, StimulusRef};
use hmix_core::mix::sweep_grid;
use hmix_core::policy::{
    build_labels, clamp_soft_label, mixup_label, smooth_with_confidence, PolicyInputs, PolicyKind, PolicyOptions,
    SmoothingSpec, StimulusClasses,
};
use hmix_core::{data_mix, label_mix, sweep_stimuli, Endpoint, ImageTensor, LabelDistribution, MixCoefficient};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const K: usize = 10;

fn unit() -> impl Strategy<Value = f64> {
    prop_oneof![Just(0.0), Just(1.0), Just(0.5), 0.0..=1.0f64]
}

fn image(len: usize) -> impl Strategy<Value = ImageTensor> {
    prop::collection::vec(unit(), len).prop_map(move |d| ImageTensor::new(1, len, 1, d).unwrap())
}

fn label() -> impl Strategy<Value = LabelDistribution> {
    prop::collection::vec(0.0..1.0f64, K).prop_map(|w| {
        let w = if w.iter().sum::<f64>() > 0.0 { w } else { vec![1.0; K] };
        LabelDistribution::from_weights(&w).unwrap()
    })
}

fn on_simplex(l: &LabelDistribution) -> bool {
    l.probs().iter().all(|&p| p >= 0.0) && (l.probs().iter().sum::<f64>() - 1.0).abs() <= 1e-9
}

fn judgment(lambda_h: f64, confidence: f64, trial: u32) -> Judgment {
    Judgment {
        participant_id: "p".into(),
        session_id: "s".into(),
        trial_index: trial,
        stimulus: StimulusRef {
            pair_id: "pair".into(),
            lambda_f: 0.5,
        },
        interface: InterfaceKind::InferCoefficient,
        lambda_h,
        confidence: Some(confidence),
        repeat_of: None,
        response_ms: 0,
    }
}

fn soft_report() -> impl Strategy<Value = SoftLabelJudgment> {
    (0..K, 0.0..=100.0f64, prop::option::of((0..K, 0.0..=1.0f64)), prop::collection::btree_set(0..K, 0..6)).prop_map(
        |(c1, p1, top2, ruled)| {
            let top2 = top2.filter(|(c2, _)| *c2 != c1).map(|(c2, frac)| ClassReport {
                class: c2,
                prob: (100.0 - p1) * frac,
            });
            let mut ruled: BTreeSet<usize> = ruled;
            ruled.remove(&c1);
            if let Some(t) = &top2 {
                ruled.remove(&t.class);
            }
            SoftLabelJudgment {
                participant_id: "p".into(),
                session_id: "s".into(),
                trial_index: 0,
                stimulus: StimulusRef {
                    pair_id: "pair".into(),
                    lambda_f: 0.5,
                },
                top1: ClassReport { class: c1, prob: p1 },
                top2,
                ruled_out: ruled,
                response_ms: 0,
            }
        },
    )
}

fn boundaries() -> BoundaryMap {
    let mut map = BoundaryMap::default();
    for a in 0..K {
        for b in a + 1..K {
            map.fits.insert(
                (a, b),
                BoundaryFit {
                    class_pair: Some((a, b)),
                    params: LogisticParams::new(0.0, 1.0, 4.0 + (a + b) as f64, 0.3 + 0.04 * a as f64),
                    residual_sse: 0.0,
                    n_points: 10,
                    monotone: true,
                    converged: true,
                },
            );
        }
    }
    map
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(10_000))]

    #[test]
    fn data_mix_is_mirror_symmetric_and_convex(a in image(12), b in image(12), lam in unit()) {
        let lam = MixCoefficient::new(lam).unwrap();
        let forward = data_mix(&a, &b, lam).unwrap();
        let mirrored = data_mix(&b, &a, lam.complement()).unwrap();
        prop_assert_eq!(&forward, &mirrored);
        for ((m, x), y) in forward.data().iter().zip(a.data()).zip(b.data()) {
            prop_assert!(x.min(*y) <= *m && *m <= x.max(*y));
        }
    }

    #[test]
    fn label_mix_is_mirror_symmetric_convex_and_normalized(a in label(), b in label(), lam in unit()) {
        let lam = MixCoefficient::new(lam).unwrap();
        let forward = label_mix(&a, &b, lam).unwrap();
        prop_assert_eq!(&forward, &label_mix(&b, &a, lam.complement()).unwrap());
        for ((m, x), y) in forward.probs().iter().zip(a.probs()).zip(b.probs()) {
            prop_assert!(x.min(*y) <= *m && *m <= x.max(*y));
        }
        prop_assert!(on_simplex(&forward));
    }

    #[test]
    fn every_policy_label_is_a_distribution(
        policy_idx in 0..PolicyKind::ALL.len(),
        ca in 0..K,
        offset in 1..K,
        lam in unit(),
        judged in prop::collection::vec((unit(), unit()), 1..5),
        reports in prop::collection::vec(soft_report(), 1..4),
        seed in any::<u64>(),
    ) {
        let policy = PolicyKind::ALL[policy_idx];
        let stim = StimulusClasses { class_a: ca, class_b: (ca + offset) % K, lambda_f: MixCoefficient::new(lam).unwrap() };
        let judgments: Vec<Judgment> = judged.iter().enumerate().map(|(i, (l, c))| judgment(*l, *c, i as u32)).collect();
        let map = boundaries();
        let inputs = PolicyInputs { judgments: &judgments, soft_labels: &reports, boundaries: Some(&map) };
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let labels = build_labels(policy, stim, inputs, &PolicyOptions::new(K), &mut rng).unwrap();
        let expected = match policy {
            PolicyKind::NoAug => 0,
            PolicyKind::RelabelOmegaSeparated => judgments.len(),
            _ => 1,
        };
        prop_assert_eq!(labels.len(), expected);
        for l in &labels {
            prop_assert!(on_simplex(l));
        }
    }

    #[test]
    fn ruled_out_classes_get_nothing(report in soft_report(), redistribution in unit()) {
        let l = clamp_soft_label(&report, K, redistribution).unwrap();
        prop_assert!(on_simplex(&l));
        for &c in &report.ruled_out {
            prop_assert_eq!(l.probs()[c], 0.0);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(2_000))]

    #[test]
    fn smoothing_entropy_falls_as_confidence_rises(
        ca in 0..K,
        offset in 1..K,
        lam in 0.0..=1.0f64,
        w1 in 0.0..=1.0f64,
        w2 in 0.0..=1.0f64,
        a in 0.5..200.0f64,
        b in 1e-6..0.9f64,
    ) {
        prop_assume!((w1 - w2).abs() > 1e-3);
        let spec = SmoothingSpec::new(a, b).unwrap();
        let two_hot = mixup_label(ca, (ca + offset) % K, MixCoefficient::new(lam).unwrap(), K).unwrap();
        let (hi, lo) = if w1 > w2 { (w1, w2) } else { (w2, w1) };
        let h_hi = smooth_with_confidence(&two_hot, hi, spec).unwrap().entropy();
        let h_lo = smooth_with_confidence(&two_hot, lo, spec).unwrap().entropy();
        prop_assert!(h_hi < h_lo, "H({hi}) = {h_hi} vs H({lo}) = {h_lo}");
    }

    #[test]
    fn smoothing_keeps_a_unique_argmax(l in label(), omega in unit(), a in 0.5..200.0f64, b in 1e-6..0.9f64) {
        let p = l.probs();
        let top = l.argmax();
        prop_assume!(p.iter().enumerate().all(|(i, &v)| i == top || v < p[top]));
        let out = smooth_with_confidence(&l, omega, SmoothingSpec::new(a, b).unwrap()).unwrap();
        prop_assert_eq!(out.argmax(), top);
        prop_assert!(on_simplex(&out));
    }

    #[test]
    fn single_matching_judgment_relabel_is_mixup(ca in 0..K, offset in 1..K, lam in unit(), conf in unit()) {
        let stim = StimulusClasses { class_a: ca, class_b: (ca + offset) % K, lambda_f: MixCoefficient::new(lam).unwrap() };
        let judgments = [judgment(lam, conf, 0)];
        let inputs = PolicyInputs { judgments: &judgments, ..Default::default() };
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let opts = PolicyOptions::new(K);
        let relabel = build_labels(PolicyKind::Relabel, stim, inputs, &opts, &mut rng).unwrap();
        let mixup = build_labels(PolicyKind::Mixup, stim, inputs, &opts, &mut rng).unwrap();
        let bits = |l: &LabelDistribution| l.probs().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        prop_assert_eq!(bits(&relabel[0]), bits(&mixup[0]));
    }

    #[test]
    fn sweep_returns_one_stimulus_per_grid_value(values in prop::collection::btree_set(0u32..=1000, 1..20)) {
        let grid: Vec<MixCoefficient> = values.iter().map(|&v| MixCoefficient::new(v as f64 / 1000.0).unwrap()).collect();
        let end = |id: &str, class, v| Endpoint { id: id.into(), class, image: ImageTensor::new(1, 2, 1, vec![v, v]).unwrap() };
        let out = sweep_stimuli("pair", &end("a", 0, 0.2), &end("b", 1, 0.9), &grid).unwrap();
        prop_assert_eq!(out.len(), grid.len());
        for (s, g) in out.iter().zip(&grid) {
            prop_assert_eq!(s.lambda_f, *g);
            let json = serde_json::to_string(&s.lambda_f).unwrap();
            prop_assert_eq!(serde_json::from_str::<MixCoefficient>(&json).unwrap(), *g);
        }
    }
}

#[test]
fn smoothing_formula_limits() {
    let two_hot = mixup_label(1, 4, MixCoefficient::new(0.3).unwrap(), K).unwrap();
    let tiny = smooth_with_confidence(&two_hot, 1.0, SmoothingSpec::new(1e-12, 1e-6).unwrap()).unwrap();
    for (a, b) in tiny.probs().iter().zip(two_hot.probs()) {
        assert!((a - b).abs() < 1e-12);
    }
    let huge = smooth_with_confidence(&two_hot, 0.0, SmoothingSpec::new(1e12, 0.5).unwrap()).unwrap();
    for p in huge.probs() {
        assert!((p - 0.1).abs() < 1e-11);
    }
}

#[test]
fn default_grid_has_eleven_points() {
    let grid = sweep_grid();
    assert_eq!(grid.len(), 11);
    assert_eq!(grid[0].value(), 0.0);
    assert_eq!(grid[10].value(), 1.0);
}
