//! Elicitation sessions: trial scheduling, trial payloads and conversion of
//! responses into H-Mix records.
//!
//! Midpoint-selection sessions (Construct, Select-Shuffled) run 30 distinct
//! sweeps followed by repeats of two earlier trials. Coefficient-inference
//! sessions run 57 to 60 distinct stimuli followed by repeats of trials 15 and
//! 20 (1-based). Soft-label sessions have no repeats.
//!
//! A Construct judgment records its start coefficient as `lambda_f`; a
//! Select-Shuffled judgment records 0.5, the blend participants are asked to
//! find.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hmix::record::check_id;
use crate::hmix::{Appended, ClassReport, HmixStore, InterfaceKind, Judgment, PairInfo, Record, SoftLabelJudgment, StimulusRef};
use crate::mix::{data_mix, sweep_grid, ImageTensor, MixCoefficient, INFER_COEFFICIENTS, SOFT_LABEL_COEFFICIENTS};

pub const SELECTION_TRIALS: usize = 32;
pub const INFER_TRIALS_MIN: usize = 59;
pub const INFER_TRIALS_MAX: usize = 62;
/// 1-based trials whose stimuli are repeated at the end of inference sessions.
pub const INFER_REPEAT_SOURCES: [u32; 2] = [15, 20];
pub const SOFT_LABEL_TRIALS: usize = 25;
const REPEATS: usize = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SessionKind {
    Construct,
    SelectShuffled,
    InferCoefficient,
    SoftLabel,
}

impl SessionKind {
    pub const ALL: [SessionKind; 4] = [
        SessionKind::Construct,
        SessionKind::SelectShuffled,
        SessionKind::InferCoefficient,
        SessionKind::SoftLabel,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            SessionKind::Construct => "construct",
            SessionKind::SelectShuffled => "select-shuffled",
            SessionKind::InferCoefficient => "infer-coefficient",
            SessionKind::SoftLabel => "soft-label",
        }
    }
}

impl std::str::FromStr for SessionKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        SessionKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| Error::field("kind", format!("unknown session kind `{s}`")))
    }
}

/// An endpoint pair the service can mix on demand.
#[derive(Debug, Clone, PartialEq)]
pub struct PoolPair {
    pub info: PairInfo,
    pub image_a: ImageTensor,
    pub image_b: ImageTensor,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StimulusPool {
    class_names: Vec<String>,
    pairs: Vec<PoolPair>,
    index: HashMap<String, usize>,
}

impl StimulusPool {
    pub fn new(class_names: Vec<String>, pairs: Vec<PoolPair>) -> Result<Self> {
        let mut index = HashMap::new();
        for (i, p) in pairs.iter().enumerate() {
            p.info.validate()?;
            for c in [p.info.class_a, p.info.class_b] {
                crate::mix::check_class(c, class_names.len())?;
            }
            if p.image_a.dims() != p.image_b.dims() {
                return Err(Error::Shape(format!("pair `{}` has mismatched endpoints", p.info.pair_id)));
            }
            if index.insert(p.info.pair_id.clone(), i).is_some() {
                return Err(Error::Conflict(format!("pair `{}` listed twice", p.info.pair_id)));
            }
        }
        Ok(StimulusPool {
            class_names,
            pairs,
            index,
        })
    }

    pub fn class_names(&self) -> &[String] {
        &self.class_names
    }

    pub fn pairs(&self) -> &[PoolPair] {
        &self.pairs
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn pair(&self, pair_id: &str) -> Result<&PoolPair> {
        self.index
            .get(pair_id)
            .map(|&i| &self.pairs[i])
            .ok_or_else(|| Error::NotFound(format!("pair `{pair_id}`")))
    }

    /// The mixed image for a pair at `lambda_f` (weight on endpoint a).
    pub fn render(&self, pair_id: &str, lambda_f: f64) -> Result<ImageTensor> {
        let p = self.pair(pair_id)?;
        data_mix(&p.image_a, &p.image_b, MixCoefficient::new(lambda_f)?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlannedTrial {
    pub stimulus: StimulusRef,
    /// 0-based index of the trial this one repeats.
    pub repeat_of: Option<u32>,
    /// Whether endpoint b's class is displayed on the left.
    pub swap_display: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionPlan {
    pub session_id: String,
    pub participant_id: String,
    pub kind: SessionKind,
    pub trials: Vec<PlannedTrial>,
    /// Construct sessions only: 0.1 or 0.9.
    pub start_lambda: Option<f64>,
    /// Seeds per-trial display shuffles.
    pub seed: u64,
    /// Unix seconds.
    pub created_at: u64,
}

impl SessionPlan {
    pub fn interface(&self) -> Option<InterfaceKind> {
        match self.kind {
            SessionKind::Construct => Some(if self.start_lambda == Some(0.1) {
                InterfaceKind::ConstructStartLow
            } else {
                InterfaceKind::ConstructStartHigh
            }),
            SessionKind::SelectShuffled => Some(InterfaceKind::SelectShuffled),
            SessionKind::InferCoefficient => Some(InterfaceKind::InferCoefficient),
            SessionKind::SoftLabel => None,
        }
    }

    /// Checks the scheduling rules for the plan's kind.
    pub fn validate(&self) -> Result<()> {
        let n = self.trials.len();
        let bad = |reason: String| Err(Error::field("plan", reason));
        let expected_repeats: Vec<Option<u32>> = match self.kind {
            SessionKind::Construct | SessionKind::SelectShuffled => {
                if n != SELECTION_TRIALS {
                    return bad(format!("{n} trials, expected {SELECTION_TRIALS}"));
                }
                self.trials[n - REPEATS..].iter().map(|t| t.repeat_of).collect()
            }
            SessionKind::InferCoefficient => {
                if !(INFER_TRIALS_MIN..=INFER_TRIALS_MAX).contains(&n) {
                    return bad(format!("{n} trials, expected {INFER_TRIALS_MIN}-{INFER_TRIALS_MAX}"));
                }
                INFER_REPEAT_SOURCES.iter().map(|t| Some(t - 1)).collect()
            }
            SessionKind::SoftLabel => {
                if n != SOFT_LABEL_TRIALS {
                    return bad(format!("{n} trials, expected {SOFT_LABEL_TRIALS}"));
                }
                vec![]
            }
        };
        let unique = n - expected_repeats.len();
        for (i, t) in self.trials.iter().enumerate() {
            t.stimulus.validate()?;
            if i < unique && t.repeat_of.is_some() {
                return bad(format!("trial {i} is a repeat before the final block"));
            }
        }
        for (offset, want) in expected_repeats.iter().enumerate() {
            let i = unique + offset;
            let t = &self.trials[i];
            let Some(src) = t.repeat_of.filter(|_| want.is_some()) else {
                return bad(format!("trial {i} should be a repeat"));
            };
            if *want != Some(src) && self.kind == SessionKind::InferCoefficient {
                return bad(format!("trial {i} repeats {src}, expected {want:?}"));
            }
            let original = PlannedTrial {
                repeat_of: None,
                ..t.clone()
            };
            if src as usize >= unique || self.trials[src as usize] != original {
                return bad(format!("trial {i} does not duplicate trial {src}"));
            }
        }
        if expected_repeats.len() == REPEATS && self.trials[unique].repeat_of == self.trials[unique + 1].repeat_of {
            return bad("both repeats point at the same trial".into());
        }
        let pairs: std::collections::HashSet<_> = self.trials[..unique].iter().map(|t| &t.stimulus.pair_id).collect();
        if pairs.len() != unique {
            return bad("a pair appears twice outside the repeat block".into());
        }
        let allowed: &[f64] = match self.kind {
            SessionKind::InferCoefficient => &INFER_COEFFICIENTS,
            SessionKind::SoftLabel => &SOFT_LABEL_COEFFICIENTS,
            SessionKind::SelectShuffled => &[0.5],
            SessionKind::Construct => &[0.1, 0.9],
        };
        if let Some(t) = self.trials.iter().find(|t| !allowed.contains(&t.stimulus.lambda_f)) {
            return bad(format!("coefficient {} not allowed for {}", t.stimulus.lambda_f, self.kind.as_str()));
        }
        match (self.kind, self.start_lambda) {
            (SessionKind::Construct, Some(s)) if s == 0.1 || s == 0.9 => Ok(()),
            (SessionKind::Construct, _) => bad("construct sessions need start_lambda 0.1 or 0.9".into()),
            (_, None) => Ok(()),
            (_, Some(_)) => bad("start_lambda is only for construct sessions".into()),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PlanOptions {
    /// Inference session length; drawn from 59-62 when absent.
    pub infer_trials: Option<usize>,
}

/// Builds a plan. `start_lambda` is required for Construct sessions and
/// ignored otherwise.
pub fn create_session<R: Rng + ?Sized>(
    session_id: &str,
    participant_id: &str,
    kind: SessionKind,
    pool: &StimulusPool,
    start_lambda: Option<f64>,
    opts: PlanOptions,
    rng: &mut R,
) -> Result<SessionPlan> {
    check_id("session_id", session_id)?;
    check_id("participant_id", participant_id)?;
    let total = match kind {
        SessionKind::Construct | SessionKind::SelectShuffled => SELECTION_TRIALS,
        SessionKind::InferCoefficient => match opts.infer_trials {
            Some(n) if (INFER_TRIALS_MIN..=INFER_TRIALS_MAX).contains(&n) => n,
            Some(n) => {
                return Err(Error::field(
                    "infer_trials",
                    format!("{n} is outside {INFER_TRIALS_MIN}-{INFER_TRIALS_MAX}"),
                ))
            }
            None => rng.random_range(INFER_TRIALS_MIN..=INFER_TRIALS_MAX),
        },
        SessionKind::SoftLabel => SOFT_LABEL_TRIALS,
    };
    let repeats = if kind == SessionKind::SoftLabel { 0 } else { REPEATS };
    let unique = total - repeats;
    if pool.len() < unique {
        return Err(Error::Insufficient(format!(
            "{} session needs {unique} pairs, pool has {}",
            kind.as_str(),
            pool.len()
        )));
    }
    let start_lambda = match kind {
        SessionKind::Construct => match start_lambda {
            Some(s) if s == 0.1 || s == 0.9 => Some(s),
            other => return Err(Error::field("start_lambda", format!("{other:?} is not 0.1 or 0.9"))),
        },
        _ => None,
    };

    let mut pair_ids: Vec<&str> = pool.pairs().iter().map(|p| p.info.pair_id.as_str()).collect();
    pair_ids.shuffle(rng);
    let mut trials: Vec<PlannedTrial> = pair_ids[..unique]
        .iter()
        .map(|&pair_id| {
            let lambda_f = match kind {
                SessionKind::Construct => start_lambda.expect("set above"),
                SessionKind::SelectShuffled => 0.5,
                SessionKind::InferCoefficient => *INFER_COEFFICIENTS.choose(rng).expect("nonempty"),
                SessionKind::SoftLabel => *SOFT_LABEL_COEFFICIENTS.choose(rng).expect("nonempty"),
            };
            PlannedTrial {
                stimulus: StimulusRef {
                    pair_id: pair_id.to_string(),
                    lambda_f,
                },
                repeat_of: None,
                swap_display: rng.random_bool(0.5),
            }
        })
        .collect();
    let sources: Vec<u32> = match kind {
        SessionKind::InferCoefficient => INFER_REPEAT_SOURCES.iter().map(|t| t - 1).collect(),
        SessionKind::SoftLabel => vec![],
        _ => rand::seq::index::sample(rng, unique, REPEATS)
            .into_iter()
            .map(|i| i as u32)
            .collect(),
    };
    for src in sources {
        trials.push(PlannedTrial {
            repeat_of: Some(src),
            ..trials[src as usize].clone()
        });
    }
    let plan = SessionPlan {
        session_id: session_id.to_string(),
        participant_id: participant_id.to_string(),
        kind,
        trials,
        start_lambda,
        seed: rng.random(),
        created_at: std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map_or(0, |d| d.as_secs()),
    };
    debug_assert!(plan.validate().is_ok());
    Ok(plan)
}

/// What the browser needs to run one trial.
#[derive(Debug, Clone, PartialEq)]
pub enum TrialContent {
    /// The ordered sweep; the participant moves one step at a time.
    Construct { images: Vec<ImageTensor>, start_index: usize },
    /// The sweep in display order, each tagged with its grid index.
    SelectShuffled { options: Vec<(usize, ImageTensor)> },
    Infer { image: ImageTensor, left_class: String, right_class: String },
    SoftLabel { image: ImageTensor, class_names: Vec<String> },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trial {
    pub session_id: String,
    pub trial_index: u32,
    pub total: u32,
    pub kind: SessionKind,
    pub content: TrialContent,
}

#[derive(Debug, Clone, PartialEq)]
pub enum NextTrial {
    Trial(Trial),
    Complete { session_id: String, total: u32 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case")]
pub enum ResponsePayload {
    /// Grid index, `0..=10`, of the chosen image.
    Selection { index: usize },
    /// `mix_left` is the weight on the class displayed on the left.
    Sliders { mix_left: f64, confidence: f64 },
    SoftLabel {
        top1: ClassReport,
        top2: Option<ClassReport>,
        #[serde(default)]
        ruled_out: Vec<usize>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubmitAck {
    pub trial_index: u32,
    /// False when an identical response was already stored.
    pub stored: bool,
    pub next_trial: u32,
    pub complete: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SessionExport {
    pub session_id: String,
    pub open: bool,
    pub records: Vec<Record>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct SessionState {
    plan: SessionPlan,
    cursor: u32,
}

impl SessionState {
    fn is_open(&self) -> bool {
        (self.cursor as usize) < self.plan.trials.len()
    }
}

fn trial_rng(seed: u64, trial_index: u32) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(u64::from(trial_index) + 1);
    rng
}

const STORE_FILE: &str = "responses.hmix";

/// Sessions over one stimulus pool, optionally persisted under a directory:
/// one JSON file per session plus an append-only H-Mix log of responses.
pub struct SessionManager {
    pool: StimulusPool,
    sessions: BTreeMap<String, SessionState>,
    store: HmixStore,
    seed: u64,
    construct_count: usize,
    state_dir: Option<PathBuf>,
    plan_opts: PlanOptions,
}

impl SessionManager {
    /// In-memory manager; pair records for the pool are stored up front.
    pub fn new(pool: StimulusPool, seed: u64) -> Result<Self> {
        let mut store = HmixStore::new();
        for p in pool.pairs() {
            store.append(Record::Pair(p.info.clone()))?;
        }
        Ok(SessionManager {
            pool,
            sessions: BTreeMap::new(),
            store,
            seed,
            construct_count: 0,
            state_dir: None,
            plan_opts: PlanOptions::default(),
        })
    }

    /// Manager that persists to `dir` and resumes whatever it finds there.
    pub fn open(pool: StimulusPool, seed: u64, dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir.join("sessions"))?;
        let mut store = HmixStore::open(dir.join(STORE_FILE))?;
        for p in pool.pairs() {
            store.append(Record::Pair(p.info.clone()))?;
        }
        let mut sessions = BTreeMap::new();
        let mut entries: Vec<_> = fs::read_dir(dir.join("sessions"))?.collect::<std::io::Result<_>>()?;
        entries.sort_by_key(|e| e.file_name());
        for e in entries {
            let text = fs::read_to_string(e.path())?;
            let state: SessionState = serde_json::from_str(&text).map_err(|err| Error::Parse {
                line: err.line(),
                reason: format!("{}: {err}", e.path().display()),
            })?;
            sessions.insert(state.plan.session_id.clone(), state);
        }
        let construct_count = sessions.values().filter(|s| s.plan.kind == SessionKind::Construct).count();
        Ok(SessionManager {
            pool,
            sessions,
            store,
            seed,
            construct_count,
            state_dir: Some(dir.to_path_buf()),
            plan_opts: PlanOptions::default(),
        })
    }

    pub fn with_plan_options(mut self, opts: PlanOptions) -> Self {
        self.plan_opts = opts;
        self
    }

    pub fn pool(&self) -> &StimulusPool {
        &self.pool
    }

    pub fn store(&self) -> &HmixStore {
        &self.store
    }

    pub fn plan(&self, session_id: &str) -> Result<&SessionPlan> {
        Ok(&self.state(session_id)?.plan)
    }

    pub fn session_ids(&self) -> impl Iterator<Item = &str> {
        self.sessions.keys().map(String::as_str)
    }

    fn state(&self, session_id: &str) -> Result<&SessionState> {
        self.sessions
            .get(session_id)
            .ok_or_else(|| Error::NotFound(format!("session `{session_id}`")))
    }

    fn persist(&self, session_id: &str) -> Result<()> {
        if let Some(dir) = &self.state_dir {
            let state = self.state(session_id)?;
            let path = dir.join("sessions").join(format!("{session_id}.json"));
            let tmp = path.with_extension("json.tmp");
            fs::write(&tmp, serde_json::to_vec_pretty(state).expect("state serializes"))?;
            fs::rename(tmp, path)?;
        }
        Ok(())
    }

    /// Starts a session. Construct sessions alternate start coefficients,
    /// beginning with 0.9.
    pub fn create_session(&mut self, participant_id: &str, kind: SessionKind) -> Result<&SessionPlan> {
        let session_id = format!("s{:06}", self.sessions.len() + 1);
        let start = (kind == SessionKind::Construct).then_some(if self.construct_count % 2 == 0 { 0.9 } else { 0.1 });
        // One stream per session number, so resumed managers continue the
        // same sequence.
        let mut rng = trial_rng(self.seed, self.sessions.len() as u32);
        let plan = create_session(&session_id, participant_id, kind, &self.pool, start, self.plan_opts, &mut rng)?;
        if kind == SessionKind::Construct {
            self.construct_count += 1;
        }
        self.sessions.insert(session_id.clone(), SessionState { plan, cursor: 0 });
        self.persist(&session_id)?;
        Ok(&self.sessions[&session_id].plan)
    }

    /// The current trial. Fetching it again returns identical content.
    pub fn next_trial(&self, session_id: &str) -> Result<NextTrial> {
        let state = self.state(session_id)?;
        let plan = &state.plan;
        let total = plan.trials.len() as u32;
        if !state.is_open() {
            return Ok(NextTrial::Complete {
                session_id: session_id.to_string(),
                total,
            });
        }
        let idx = state.cursor;
        let t = &plan.trials[idx as usize];
        let pair = self.pool.pair(&t.stimulus.pair_id)?;
        let names = self.pool.class_names();
        let content = match plan.kind {
            SessionKind::Construct => {
                let images = self.sweep(&t.stimulus.pair_id)?;
                let start_index = (t.stimulus.lambda_f * 10.0).round() as usize;
                TrialContent::Construct { images, start_index }
            }
            SessionKind::SelectShuffled => {
                let mut options: Vec<(usize, ImageTensor)> = self.sweep(&t.stimulus.pair_id)?.into_iter().enumerate().collect();
                // repeats replay the source trial's ordering
                options.shuffle(&mut trial_rng(plan.seed, t.repeat_of.unwrap_or(idx)));
                TrialContent::SelectShuffled { options }
            }
            SessionKind::InferCoefficient => {
                let (a, b) = (names[pair.info.class_a].clone(), names[pair.info.class_b].clone());
                let (left_class, right_class) = if t.swap_display { (b, a) } else { (a, b) };
                TrialContent::Infer {
                    image: self.pool.render(&t.stimulus.pair_id, t.stimulus.lambda_f)?,
                    left_class,
                    right_class,
                }
            }
            SessionKind::SoftLabel => TrialContent::SoftLabel {
                image: self.pool.render(&t.stimulus.pair_id, t.stimulus.lambda_f)?,
                class_names: names.to_vec(),
            },
        };
        Ok(NextTrial::Trial(Trial {
            session_id: session_id.to_string(),
            trial_index: idx,
            total,
            kind: plan.kind,
            content,
        }))
    }

    fn sweep(&self, pair_id: &str) -> Result<Vec<ImageTensor>> {
        sweep_grid().into_iter().map(|l| self.pool.render(pair_id, l.value())).collect()
    }

    fn to_record(&self, plan: &SessionPlan, trial_index: u32, payload: &ResponsePayload, response_ms: u64) -> Result<Record> {
        let t = &plan.trials[trial_index as usize];
        let mismatch = || {
            Error::field(
                "payload",
                format!("{} sessions do not accept this response type", plan.kind.as_str()),
            )
        };
        let judgment = |lambda_h: f64, confidence: Option<f64>| -> Result<Record> {
            Ok(Record::Judgment(Judgment {
                participant_id: plan.participant_id.clone(),
                session_id: plan.session_id.clone(),
                trial_index,
                stimulus: t.stimulus.clone(),
                interface: plan.interface().expect("judgment sessions have an interface"),
                lambda_h,
                confidence,
                repeat_of: t.repeat_of,
                response_ms,
            }))
        };
        let record = match (plan.kind, payload) {
            (SessionKind::Construct | SessionKind::SelectShuffled, ResponsePayload::Selection { index }) => {
                let grid = sweep_grid();
                let lambda = grid
                    .get(*index)
                    .ok_or_else(|| Error::field("index", format!("{index} is outside 0..={}", grid.len() - 1)))?;
                judgment(lambda.value(), None)?
            }
            (SessionKind::InferCoefficient, ResponsePayload::Sliders { mix_left, confidence }) => {
                for (field, v) in [("mix_left", mix_left), ("confidence", confidence)] {
                    if !(0.0..=1.0).contains(v) {
                        return Err(Error::field(field, format!("{v} is outside [0, 1]")));
                    }
                }
                let lambda_h = if t.swap_display {
                    MixCoefficient::new(*mix_left)?.complement().value()
                } else {
                    *mix_left
                };
                judgment(lambda_h, Some(*confidence))?
            }
            (SessionKind::SoftLabel, ResponsePayload::SoftLabel { top1, top2, ruled_out }) => {
                let j = SoftLabelJudgment {
                    participant_id: plan.participant_id.clone(),
                    session_id: plan.session_id.clone(),
                    trial_index,
                    stimulus: t.stimulus.clone(),
                    top1: *top1,
                    top2: *top2,
                    ruled_out: ruled_out.iter().copied().collect(),
                    response_ms,
                };
                j.validate_classes(self.pool.class_names().len())?;
                Record::SoftLabel(j)
            }
            _ => return Err(mismatch()),
        };
        record.validate()?;
        Ok(record)
    }

    /// Stores the response for the current trial and advances. Resubmitting
    /// an answered trial with the same payload is acknowledged without a
    /// second record; a different payload is a conflict.
    pub fn submit_response(
        &mut self,
        session_id: &str,
        trial_index: u32,
        payload: &ResponsePayload,
        response_ms: u64,
    ) -> Result<SubmitAck> {
        let state = self.state(session_id)?;
        let total = state.plan.trials.len() as u32;
        if trial_index > state.cursor || trial_index >= total {
            return Err(Error::OutOfOrder {
                expected: state.cursor,
                got: trial_index,
            });
        }
        let record = self.to_record(&state.plan, trial_index, payload, response_ms)?;
        if trial_index < state.cursor {
            // Earlier trial: only an identical answer (ignoring timing) is accepted.
            let stored = self.store.get(&record.key()).cloned();
            return match stored {
                Some(prev) if same_answer(&prev, &record) => Ok(SubmitAck {
                    trial_index,
                    stored: false,
                    next_trial: state.cursor,
                    complete: !state.is_open(),
                }),
                _ => Err(Error::Conflict(record.key().to_string())),
            };
        }
        let outcome = self.store.append(record)?;
        let state = self.sessions.get_mut(session_id).expect("checked above");
        state.cursor += 1;
        let ack = SubmitAck {
            trial_index,
            stored: outcome == Appended::Stored,
            next_trial: state.cursor,
            complete: !state.is_open(),
        };
        self.persist(session_id)?;
        Ok(ack)
    }

    pub fn export_session(&self, session_id: &str) -> Result<SessionExport> {
        let state = self.state(session_id)?;
        Ok(SessionExport {
            session_id: session_id.to_string(),
            open: state.is_open(),
            records: self.store.session_records(session_id),
        })
    }
}

fn same_answer(a: &Record, b: &Record) -> bool {
    match (a, b) {
        (Record::Judgment(x), Record::Judgment(y)) => {
            Judgment { response_ms: 0, ..x.clone() } == Judgment { response_ms: 0, ..y.clone() }
        }
        (Record::SoftLabel(x), Record::SoftLabel(y)) => {
            SoftLabelJudgment { response_ms: 0, ..x.clone() } == SoftLabelJudgment { response_ms: 0, ..y.clone() }
        }
        _ => a == b,
    }
}

/// A pool of `n_pairs` pairs drawn from labeled images, cycling through
/// class combinations so every pair of classes is represented as evenly as
/// the pool size allows.
pub fn build_pool<R: Rng + ?Sized>(
    images: &[(String, usize, ImageTensor)],
    class_names: Vec<String>,
    n_pairs: usize,
    rng: &mut R,
) -> Result<StimulusPool> {
    let k = class_names.len();
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); k];
    for (i, (_, c, _)) in images.iter().enumerate() {
        crate::mix::check_class(*c, k)?;
        by_class[*c].push(i);
    }
    let mut combos: Vec<(usize, usize)> = (0..k)
        .flat_map(|a| (a + 1..k).map(move |b| (a, b)))
        .filter(|&(a, b)| !by_class[a].is_empty() && !by_class[b].is_empty())
        .collect();
    if combos.is_empty() && n_pairs > 0 {
        return Err(Error::Insufficient("need images from at least two classes".into()));
    }
    combos.shuffle(rng);
    let mut pairs = Vec::with_capacity(n_pairs);
    for n in 0..n_pairs {
        let (ca, cb) = combos[n % combos.len()];
        let (ca, cb) = if rng.random_bool(0.5) { (cb, ca) } else { (ca, cb) };
        let a = *by_class[ca].choose(rng).expect("nonempty");
        let b = *by_class[cb].choose(rng).expect("nonempty");
        pairs.push(PoolPair {
            info: PairInfo {
                pair_id: format!("pair-{n:05}"),
                endpoint_a_id: images[a].0.clone(),
                endpoint_b_id: images[b].0.clone(),
                class_a: ca,
                class_b: cb,
            },
            image_a: images[a].2.clone(),
            image_b: images[b].2.clone(),
        });
    }
    StimulusPool::new(class_names, pairs)
}
