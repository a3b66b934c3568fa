use hmix_core::elicit::{
    build_pool, create_session, NextTrial, PlanOptions, ResponsePayload, SessionKind, SessionManager, StimulusPool,
    TrialContent,
};
use hmix_core::hmix::{read_store, write_records, ClassReport, InterfaceKind, Record};
use hmix_core::mix::INFER_COEFFICIENTS;
use hmix_core::ImageTensor;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn pool(n_pairs: usize) -> StimulusPool {
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let images: Vec<(String, usize, ImageTensor)> = (0..60)
        .map(|i| {
            let data = (0..4 * 4 * 3).map(|_| rng.random::<f64>()).collect();
            (format!("img-{i}"), i % 10, ImageTensor::new(4, 4, 3, data).unwrap())
        })
        .collect();
    let names = (0..10).map(|c| format!("class{c}")).collect();
    build_pool(&images, names, n_pairs, &mut rng).unwrap()
}

#[test]
fn random_plans_always_satisfy_invariants() {
    let pool = pool(120);
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for kind in SessionKind::ALL {
        for i in 0..1000 {
            let start = (kind == SessionKind::Construct).then_some(if i % 2 == 0 { 0.9 } else { 0.1 });
            let plan = create_session(&format!("s{i}"), "p", kind, &pool, start, PlanOptions::default(), &mut rng).unwrap();
            plan.validate().unwrap();
            match kind {
                SessionKind::Construct | SessionKind::SelectShuffled => {
                    assert_eq!(plan.trials.len(), 32);
                    for t in &plan.trials[30..] {
                        let src = t.repeat_of.unwrap() as usize;
                        assert!(src < 30);
                        assert_eq!(plan.trials[src].stimulus, t.stimulus);
                    }
                }
                SessionKind::InferCoefficient => {
                    let n = plan.trials.len();
                    assert!((59..=62).contains(&n));
                    assert_eq!(plan.trials[n - 2].stimulus, plan.trials[14].stimulus);
                    assert_eq!(plan.trials[n - 1].stimulus, plan.trials[19].stimulus);
                    assert!(plan.trials.iter().all(|t| INFER_COEFFICIENTS.contains(&t.stimulus.lambda_f)));
                }
                SessionKind::SoftLabel => {
                    assert_eq!(plan.trials.len(), 25);
                    assert!(plan.trials.iter().all(|t| t.repeat_of.is_none()));
                }
            }
        }
    }
}

fn answer(kind: SessionKind, rng: &mut ChaCha8Rng) -> ResponsePayload {
    match kind {
        SessionKind::Construct | SessionKind::SelectShuffled => ResponsePayload::Selection {
            index: rng.random_range(0..=10),
        },
        SessionKind::InferCoefficient => ResponsePayload::Sliders {
            mix_left: (rng.random_range(0..=100) as f64) / 100.0,
            confidence: (rng.random_range(0..=100) as f64) / 100.0,
        },
        SessionKind::SoftLabel => ResponsePayload::SoftLabel {
            top1: ClassReport { class: 3, prob: 60.0 },
            top2: Some(ClassReport { class: 5, prob: 25.0 }),
            ruled_out: vec![0],
        },
    }
}

fn image_of(content: &TrialContent) -> Vec<u8> {
    match content {
        TrialContent::Construct { images, .. } => images.iter().flat_map(|i| i.to_u8()).collect(),
        TrialContent::SelectShuffled { options } => options.iter().flat_map(|(_, i)| i.to_u8()).collect(),
        TrialContent::Infer { image, .. } | TrialContent::SoftLabel { image, .. } => {
            image.data().iter().flat_map(|v| v.to_bits().to_le_bytes()).collect()
        }
    }
}

#[test]
fn scripted_sessions_of_every_kind_complete() {
    let mut m = SessionManager::new(pool(80), 5).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for kind in SessionKind::ALL {
        let sid = m.create_session("participant-1", kind).unwrap().session_id.clone();
        let mut shown = Vec::new();
        loop {
            match m.next_trial(&sid).unwrap() {
                NextTrial::Complete { total, .. } => {
                    assert_eq!(total as usize, shown.len());
                    break;
                }
                NextTrial::Trial(t) => {
                    assert_eq!(t.trial_index as usize, shown.len());
                    if let TrialContent::Construct { start_index, images } = &t.content {
                        assert_eq!(images.len(), 11);
                        let start = m.plan(&sid).unwrap().start_lambda.unwrap();
                        assert_eq!(*start_index as f64 / 10.0, start);
                    }
                    if let TrialContent::Infer { left_class, right_class, .. } = &t.content {
                        assert_ne!(left_class, right_class);
                    }
                    shown.push(image_of(&t.content));
                    let ack = m.submit_response(&sid, t.trial_index, &answer(kind, &mut rng), 2500).unwrap();
                    assert!(ack.stored);
                }
            }
        }
        let plan = m.plan(&sid).unwrap().clone();
        for (i, t) in plan.trials.iter().enumerate() {
            if let Some(src) = t.repeat_of {
                assert_eq!(shown[i], shown[src as usize], "repeat {i} differs from trial {src}");
            }
        }
        let export = m.export_session(&sid).unwrap();
        assert!(!export.open);
        let responses: Vec<&Record> = export.records.iter().filter(|r| !matches!(r, Record::Pair(_))).collect();
        assert_eq!(responses.len(), plan.trials.len());
        for r in &export.records {
            r.validate().unwrap();
        }
        if kind == SessionKind::SelectShuffled {
            assert_eq!(responses.len(), 32);
        }
        if kind == SessionKind::InferCoefficient {
            let n = responses.len();
            let Record::Judgment(last) = responses[n - 1] else { panic!() };
            assert_eq!(last.repeat_of, Some(19));
            assert_eq!(last.interface, InterfaceKind::InferCoefficient);
        }

        let mut text = Vec::new();
        write_records(&mut text, export.records.iter()).unwrap();
        let back = read_store(text.as_slice()).unwrap();
        assert_eq!(back.records(), export.records.as_slice());
    }
}

#[test]
fn in_progress_export_and_resume_from_disk() {
    let dir = tempfile::tempdir().unwrap();
    let sid;
    let payload;
    {
        let mut m = SessionManager::open(pool(80), 5, dir.path()).unwrap();
        sid = m.create_session("p9", SessionKind::InferCoefficient).unwrap().session_id.clone();
        for i in 0..3 {
            m.submit_response(&sid, i, &ResponsePayload::Sliders { mix_left: 0.3, confidence: 0.9 }, 100)
                .unwrap();
        }
        let export = m.export_session(&sid).unwrap();
        assert!(export.open);
        assert_eq!(export.records.iter().filter(|r| matches!(r, Record::Judgment(_))).count(), 3);
        payload = m.next_trial(&sid).unwrap();
    }
    let mut m = SessionManager::open(pool(80), 5, dir.path()).unwrap();
    assert_eq!(m.next_trial(&sid).unwrap(), payload);
    let ack = m
        .submit_response(&sid, 3, &ResponsePayload::Sliders { mix_left: 0.3, confidence: 0.9 }, 100)
        .unwrap();
    assert_eq!(ack.next_trial, 4);
    assert_eq!(m.export_session(&sid).unwrap().records.iter().filter(|r| matches!(r, Record::Judgment(_))).count(), 4);
    let other = m.create_session("p10", SessionKind::SoftLabel).unwrap().session_id.clone();
    assert_ne!(other, sid);
}
