use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// How a judgment was elicited.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InterfaceKind {
    /// Keyboard sweep starting at the low end of the grid.
    ConstructStartLow,
    /// Keyboard sweep starting at the high end of the grid.
    ConstructStartHigh,
    /// All sweep images shown at once in shuffled order.
    SelectShuffled,
    /// A single mixed image; the participant reports a coefficient and a confidence.
    InferCoefficient,
}

impl InterfaceKind {
    pub const ALL: [InterfaceKind; 4] = [
        InterfaceKind::ConstructStartLow,
        InterfaceKind::ConstructStartHigh,
        InterfaceKind::SelectShuffled,
        InterfaceKind::InferCoefficient,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            InterfaceKind::ConstructStartLow => "construct-start-low",
            InterfaceKind::ConstructStartHigh => "construct-start-high",
            InterfaceKind::SelectShuffled => "select-shuffled",
            InterfaceKind::InferCoefficient => "infer-coefficient",
        }
    }

    /// Midpoint-selection interfaces record no confidence.
    pub fn is_midpoint_selection(self) -> bool {
        !matches!(self, InterfaceKind::InferCoefficient)
    }

    /// Label used when grouping; both construct start conditions share
    /// `"construct"` when `pool_construct` is set.
    pub fn group_label(self, pool_construct: bool) -> &'static str {
        match self {
            InterfaceKind::ConstructStartLow | InterfaceKind::ConstructStartHigh if pool_construct => {
                "construct"
            }
            other => other.as_str(),
        }
    }
}

impl fmt::Display for InterfaceKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for InterfaceKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        InterfaceKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| Error::field("interface_kind", format!("unknown kind `{s}`")))
    }
}

/// Identifies a mixed image: the pair and the generating coefficient.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StimulusRef {
    pub pair_id: String,
    pub lambda_f: f64,
}

/// Catalogue entry describing the two endpoints of a pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairInfo {
    pub pair_id: String,
    pub endpoint_a_id: String,
    pub endpoint_b_id: String,
    pub class_a: usize,
    pub class_b: usize,
}

/// A coefficient judgment. `lambda_h` is the weight on endpoint a.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Judgment {
    pub participant_id: String,
    pub session_id: String,
    pub trial_index: u32,
    pub stimulus: StimulusRef,
    pub interface: InterfaceKind,
    pub lambda_h: f64,
    pub confidence: Option<f64>,
    /// For repeat trials, the earlier trial this one repeats.
    pub repeat_of: Option<u32>,
    pub response_ms: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassReport {
    pub class: usize,
    /// Percentage on a 0-100 scale.
    pub prob: f64,
}

/// A sparse category report: most probable class, an optional runner-up and
/// classes ruled out entirely.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SoftLabelJudgment {
    pub participant_id: String,
    pub session_id: String,
    pub trial_index: u32,
    pub stimulus: StimulusRef,
    pub top1: ClassReport,
    pub top2: Option<ClassReport>,
    pub ruled_out: BTreeSet<usize>,
    pub response_ms: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case")]
pub enum Record {
    Pair(PairInfo),
    Judgment(Judgment),
    SoftLabel(SoftLabelJudgment),
}

/// Idempotence key. Pairs are keyed by id, responses by
/// `(participant, session, trial)`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum RecordKey {
    Pair(String),
    Response {
        participant_id: String,
        session_id: String,
        trial_index: u32,
    },
}

impl fmt::Display for RecordKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RecordKey::Pair(id) => write!(f, "pair `{id}`"),
            RecordKey::Response {
                participant_id,
                session_id,
                trial_index,
            } => write!(
                f,
                "participant `{participant_id}` session `{session_id}` trial {trial_index}"
            ),
        }
    }
}

pub(crate) fn check_id(field: &str, id: &str) -> Result<()> {
    if id.is_empty() {
        return Err(Error::field(field, "must not be empty"));
    }
    if id.chars().any(|c| c.is_control() || c == ',') {
        return Err(Error::field(
            field,
            "must not contain control characters or commas",
        ));
    }
    Ok(())
}

fn check_unit(field: &str, v: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&v) {
        return Err(Error::field(field, format!("{v} is outside [0, 1]")));
    }
    Ok(())
}

impl StimulusRef {
    pub fn validate(&self) -> Result<()> {
        check_id("pair_id", &self.pair_id)?;
        check_unit("lambda_f", self.lambda_f)
    }
}

impl PairInfo {
    pub fn validate(&self) -> Result<()> {
        check_id("pair_id", &self.pair_id)?;
        check_id("endpoint_a_id", &self.endpoint_a_id)?;
        check_id("endpoint_b_id", &self.endpoint_b_id)?;
        if self.class_a == self.class_b {
            return Err(Error::field(
                "class_b",
                format!("equals class_a ({})", self.class_a),
            ));
        }
        Ok(())
    }

    /// Classes in ascending order.
    pub fn class_pair(&self) -> (usize, usize) {
        if self.class_a < self.class_b {
            (self.class_a, self.class_b)
        } else {
            (self.class_b, self.class_a)
        }
    }

    /// Whether endpoint a holds the higher class index, so coefficients must be
    /// flipped to refer to the lower class.
    pub fn is_reversed(&self) -> bool {
        self.class_a > self.class_b
    }
}

impl Judgment {
    pub fn validate(&self) -> Result<()> {
        check_id("participant_id", &self.participant_id)?;
        check_id("session_id", &self.session_id)?;
        self.stimulus.validate()?;
        check_unit("lambda_h", self.lambda_h)?;
        match (self.interface.is_midpoint_selection(), self.confidence) {
            (true, Some(_)) => {
                return Err(Error::field(
                    "confidence",
                    format!("not recorded for {} judgments", self.interface),
                ))
            }
            (false, None) => {
                return Err(Error::field(
                    "confidence",
                    format!("required for {} judgments", self.interface),
                ))
            }
            (_, Some(c)) => check_unit("confidence", c)?,
            _ => {}
        }
        if let Some(r) = self.repeat_of {
            if r >= self.trial_index {
                return Err(Error::field(
                    "repeat_of",
                    format!(
                        "trial {} cannot repeat later trial {r}",
                        self.trial_index
                    ),
                ));
            }
        }
        Ok(())
    }

    pub fn key(&self) -> RecordKey {
        RecordKey::Response {
            participant_id: self.participant_id.clone(),
            session_id: self.session_id.clone(),
            trial_index: self.trial_index,
        }
    }
}

impl SoftLabelJudgment {
    pub fn validate(&self) -> Result<()> {
        check_id("participant_id", &self.participant_id)?;
        check_id("session_id", &self.session_id)?;
        self.stimulus.validate()?;
        let check_prob = |field: &str, p: f64| {
            if !(0.0..=100.0).contains(&p) {
                Err(Error::field(field, format!("{p} is outside [0, 100]")))
            } else {
                Ok(())
            }
        };
        check_prob("top1_prob", self.top1.prob)?;
        if let Some(t2) = self.top2 {
            check_prob("top2_prob", t2.prob)?;
            if t2.class == self.top1.class {
                return Err(Error::field("top2_class", "must differ from top1_class"));
            }
            if self.top1.prob + t2.prob > 100.0 {
                return Err(Error::field(
                    "top2_prob",
                    format!(
                        "top1 + top2 = {} exceeds 100",
                        self.top1.prob + t2.prob
                    ),
                ));
            }
            if self.ruled_out.contains(&t2.class) {
                return Err(Error::field("ruled_out", "contains top2_class"));
            }
        }
        if self.ruled_out.contains(&self.top1.class) {
            return Err(Error::field("ruled_out", "contains top1_class"));
        }
        Ok(())
    }

    /// Checks that every referenced class is below `num_classes`.
    pub fn validate_classes(&self, num_classes: usize) -> Result<()> {
        let classes = std::iter::once(self.top1.class)
            .chain(self.top2.map(|t| t.class))
            .chain(self.ruled_out.iter().copied());
        for c in classes {
            crate::mix::check_class(c, num_classes)?;
        }
        Ok(())
    }

    pub fn key(&self) -> RecordKey {
        RecordKey::Response {
            participant_id: self.participant_id.clone(),
            session_id: self.session_id.clone(),
            trial_index: self.trial_index,
        }
    }
}

impl Record {
    pub fn validate(&self) -> Result<()> {
        match self {
            Record::Pair(p) => p.validate(),
            Record::Judgment(j) => j.validate(),
            Record::SoftLabel(s) => s.validate(),
        }
    }

    pub fn key(&self) -> RecordKey {
        match self {
            Record::Pair(p) => RecordKey::Pair(p.pair_id.clone()),
            Record::Judgment(j) => j.key(),
            Record::SoftLabel(s) => s.key(),
        }
    }

    pub fn session_id(&self) -> Option<&str> {
        match self {
            Record::Pair(_) => None,
            Record::Judgment(j) => Some(&j.session_id),
            Record::SoftLabel(s) => Some(&s.session_id),
        }
    }
}
