//! Label policies for synthetic (mixed) examples.
//!
//! Every policy turns a mixed stimulus plus whatever human data it needs into
//! one or more soft training targets. Classical mixup uses the generating
//! coefficient; the relabel policies use elicited coefficients, optionally
//! softened toward uniform by reported confidence.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::boundary::BoundaryMap;
use crate::error::{Error, Result};
use crate::hmix::{CentralTendency, Judgment, SoftLabelJudgment};
use crate::mix::{check_class, ImageTensor, LabelDistribution, MixCoefficient, MixedStimulus};

/// Parameters of the confidence-to-smoothing map `alpha = a * b^omega`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawSmoothing")]
pub struct SmoothingSpec {
    a: f64,
    b: f64,
}

#[derive(Deserialize)]
struct RawSmoothing {
    a: f64,
    b: f64,
}

impl TryFrom<RawSmoothing> for SmoothingSpec {
    type Error = Error;

    fn try_from(r: RawSmoothing) -> Result<Self> {
        SmoothingSpec::new(r.a, r.b)
    }
}

impl Default for SmoothingSpec {
    fn default() -> Self {
        SmoothingSpec { a: 50.0, b: 0.0001 }
    }
}

impl SmoothingSpec {
    pub fn new(a: f64, b: f64) -> Result<Self> {
        if !(a > 0.0 && a.is_finite()) {
            return Err(Error::field("a", format!("{a} must be positive")));
        }
        if !(b > 0.0 && b < 1.0) {
            return Err(Error::field("b", format!("{b} must lie in (0, 1)")));
        }
        Ok(SmoothingSpec { a, b })
    }

    pub fn a(&self) -> f64 {
        self.a
    }

    pub fn b(&self) -> f64 {
        self.b
    }

    /// Additive smoothing strength for confidence `omega`.
    pub fn alpha(&self, omega: f64) -> f64 {
        self.a * self.b.powf(omega)
    }
}

/// Mass on `class_a` is `lambda`, on `class_b` its complement.
pub fn mixup_label(
    class_a: usize,
    class_b: usize,
    lambda: MixCoefficient,
    num_classes: usize,
) -> Result<LabelDistribution> {
    check_class(class_a, num_classes)?;
    check_class(class_b, num_classes)?;
    if class_a == class_b {
        return Err(Error::field("class_b", "must differ from class_a"));
    }
    let mut probs = vec![0.0; num_classes];
    probs[class_a] = lambda.value();
    probs[class_b] = lambda.complement().value();
    LabelDistribution::new(probs)
}

/// `(y_k + alpha / K) / (1 + alpha)` with `alpha = a * b^omega`.
pub fn smooth_with_confidence(
    label: &LabelDistribution,
    omega: f64,
    spec: SmoothingSpec,
) -> Result<LabelDistribution> {
    if !(0.0..=1.0).contains(&omega) {
        return Err(Error::field("omega", format!("{omega} is outside [0, 1]")));
    }
    Ok(smooth_with_alpha(label, spec.alpha(omega)))
}

pub(crate) fn smooth_with_alpha(label: &LabelDistribution, alpha: f64) -> LabelDistribution {
    let k = label.num_classes() as f64;
    let probs: Vec<f64> = label
        .probs()
        .iter()
        .map(|y| (y + alpha / k) / (1.0 + alpha))
        .collect();
    LabelDistribution::new(probs).expect("smoothing stays on the simplex")
}

/// Builds a label from a top-1/top-2 report.
///
/// The unreported remainder `1 - p1 - p2` is split: a `redistribution`
/// fraction is spread evenly over classes neither reported nor ruled out, the
/// rest goes to the reported classes in proportion to their probabilities.
/// Ruled-out classes get exactly zero.
pub fn clamp_soft_label(
    judgment: &SoftLabelJudgment,
    num_classes: usize,
    redistribution: f64,
) -> Result<LabelDistribution> {
    if !(0.0..=1.0).contains(&redistribution) {
        return Err(Error::field(
            "redistribution",
            format!("{redistribution} is outside [0, 1]"),
        ));
    }
    judgment.validate()?;
    judgment.validate_classes(num_classes)?;

    let p1 = judgment.top1.prob / 100.0;
    let p2 = judgment.top2.map_or(0.0, |t| t.prob / 100.0);
    let leftover = (1.0 - p1 - p2).max(0.0);

    let top2_class = judgment.top2.map(|t| t.class);
    let possible: Vec<usize> = (0..num_classes)
        .filter(|c| {
            *c != judgment.top1.class
                && Some(*c) != top2_class
                && !judgment.ruled_out.contains(c)
        })
        .collect();

    let mut weights = vec![0.0; num_classes];
    let remainder = if possible.is_empty() {
        leftover
    } else {
        let share = leftover * redistribution / possible.len() as f64;
        for &c in &possible {
            weights[c] = share;
        }
        leftover * (1.0 - redistribution)
    };
    let reported = p1 + p2;
    weights[judgment.top1.class] = p1;
    if let Some(t2) = top2_class {
        weights[t2] = p2;
    }
    if reported > 0.0 {
        weights[judgment.top1.class] += remainder * p1 / reported;
        if let Some(t2) = top2_class {
            weights[t2] += remainder * p2 / reported;
        }
    } else {
        weights[judgment.top1.class] += remainder;
    }
    LabelDistribution::from_weights(&weights)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PolicyKind {
    /// No synthetic examples at all.
    NoAug,
    /// One-hot on a uniformly drawn class.
    Random,
    Uniform,
    Mixup,
    /// Two-hot at the central human coefficient.
    Relabel,
    /// Relabel, smoothed by the central confidence.
    RelabelOmegaAggregated,
    /// One example per judgment, each smoothed by its own confidence.
    RelabelOmegaSeparated,
    #[serde(rename = "top2clamp")]
    Top2Clamp,
    /// Two-hot at the coefficient mapped through the pair's fitted boundary.
    BoundaryFit,
}

impl PolicyKind {
    pub const ALL: [PolicyKind; 9] = [
        PolicyKind::NoAug,
        PolicyKind::Random,
        PolicyKind::Uniform,
        PolicyKind::Mixup,
        PolicyKind::Relabel,
        PolicyKind::RelabelOmegaAggregated,
        PolicyKind::RelabelOmegaSeparated,
        PolicyKind::Top2Clamp,
        PolicyKind::BoundaryFit,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            PolicyKind::NoAug => "no-aug",
            PolicyKind::Random => "random",
            PolicyKind::Uniform => "uniform",
            PolicyKind::Mixup => "mixup",
            PolicyKind::Relabel => "relabel",
            PolicyKind::RelabelOmegaAggregated => "relabel-omega-aggregated",
            PolicyKind::RelabelOmegaSeparated => "relabel-omega-separated",
            PolicyKind::Top2Clamp => "top2clamp",
            PolicyKind::BoundaryFit => "boundary-fit",
        }
    }

    /// Row label for report tables.
    pub fn display_name(self) -> &'static str {
        match self {
            PolicyKind::NoAug => "No Aug",
            PolicyKind::Random => "Random",
            PolicyKind::Uniform => "Uniform",
            PolicyKind::Mixup => "mixup",
            PolicyKind::Relabel => "Relabel",
            PolicyKind::RelabelOmegaAggregated => "Relabel & omega",
            PolicyKind::RelabelOmegaSeparated => "Separated with omega",
            PolicyKind::Top2Clamp => "Top-2 Clamp",
            PolicyKind::BoundaryFit => "Human-Fits",
        }
    }

    pub fn needs_judgments(self) -> bool {
        matches!(
            self,
            PolicyKind::Relabel | PolicyKind::RelabelOmegaAggregated | PolicyKind::RelabelOmegaSeparated
        )
    }
}

impl fmt::Display for PolicyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PolicyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        PolicyKind::ALL
            .into_iter()
            .find(|p| p.as_str() == s)
            .ok_or_else(|| Error::field("policy", format!("unknown policy `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PolicyOptions {
    pub num_classes: usize,
    pub smoothing: SmoothingSpec,
    /// Reduction of several judgments to one coefficient and confidence.
    pub tendency: CentralTendency,
    /// Top-2 Clamp redistribution factor.
    pub redistribution: f64,
}

impl PolicyOptions {
    pub fn new(num_classes: usize) -> Self {
        PolicyOptions {
            num_classes,
            smoothing: SmoothingSpec::default(),
            tendency: CentralTendency::Mean,
            redistribution: 0.1,
        }
    }
}

/// Human data available to a policy for one stimulus.
#[derive(Debug, Clone, Copy, Default)]
pub struct PolicyInputs<'a> {
    pub judgments: &'a [Judgment],
    pub soft_labels: &'a [SoftLabelJudgment],
    pub boundaries: Option<&'a BoundaryMap>,
}

/// The stimulus fields a policy reads.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StimulusClasses {
    pub class_a: usize,
    pub class_b: usize,
    pub lambda_f: MixCoefficient,
}

impl From<&MixedStimulus> for StimulusClasses {
    fn from(s: &MixedStimulus) -> Self {
        StimulusClasses {
            class_a: s.class_a,
            class_b: s.class_b,
            lambda_f: s.lambda_f,
        }
    }
}

fn confidences(policy: PolicyKind, judgments: &[Judgment]) -> Result<Vec<f64>> {
    judgments
        .iter()
        .map(|j| {
            j.confidence
                .ok_or_else(|| Error::policy(policy, "every judgment needs a confidence"))
        })
        .collect()
}

/// Training targets for one stimulus. `NoAug` yields none and
/// `RelabelOmegaSeparated` one per judgment; every other policy yields one.
pub fn build_labels<R: Rng + ?Sized>(
    policy: PolicyKind,
    stimulus: StimulusClasses,
    inputs: PolicyInputs<'_>,
    opts: &PolicyOptions,
    rng: &mut R,
) -> Result<Vec<LabelDistribution>> {
    let k = opts.num_classes;
    let StimulusClasses {
        class_a,
        class_b,
        lambda_f,
    } = stimulus;
    if policy.needs_judgments() && inputs.judgments.is_empty() {
        return Err(Error::policy(policy, "no judgments for this stimulus"));
    }
    let central_lambda = || -> Result<MixCoefficient> {
        let values: Vec<f64> = inputs.judgments.iter().map(|j| j.lambda_h).collect();
        MixCoefficient::new(opts.tendency.apply(&values).expect("checked nonempty"))
    };
    let labels = match policy {
        PolicyKind::NoAug => vec![],
        PolicyKind::Random => vec![LabelDistribution::one_hot(rng.random_range(0..k), k)?],
        PolicyKind::Uniform => vec![LabelDistribution::uniform(k)?],
        PolicyKind::Mixup => vec![mixup_label(class_a, class_b, lambda_f, k)?],
        PolicyKind::Relabel => vec![mixup_label(class_a, class_b, central_lambda()?, k)?],
        PolicyKind::RelabelOmegaAggregated => {
            let omega = opts
                .tendency
                .apply(&confidences(policy, inputs.judgments)?)
                .expect("checked nonempty");
            let two_hot = mixup_label(class_a, class_b, central_lambda()?, k)?;
            vec![smooth_with_confidence(&two_hot, omega, opts.smoothing)?]
        }
        PolicyKind::RelabelOmegaSeparated => {
            let omegas = confidences(policy, inputs.judgments)?;
            inputs
                .judgments
                .iter()
                .zip(omegas)
                .map(|(j, omega)| {
                    let two_hot = mixup_label(class_a, class_b, MixCoefficient::new(j.lambda_h)?, k)?;
                    smooth_with_confidence(&two_hot, omega, opts.smoothing)
                })
                .collect::<Result<_>>()?
        }
        PolicyKind::Top2Clamp => {
            if inputs.soft_labels.is_empty() {
                return Err(Error::policy(policy, "no soft-label reports for this stimulus"));
            }
            let mut sum = vec![0.0; k];
            for s in inputs.soft_labels {
                let l = clamp_soft_label(s, k, opts.redistribution)?;
                for (acc, p) in sum.iter_mut().zip(l.probs()) {
                    *acc += p;
                }
            }
            vec![LabelDistribution::from_weights(&sum)?]
        }
        PolicyKind::BoundaryFit => {
            let map = inputs
                .boundaries
                .ok_or_else(|| Error::policy(policy, "no boundary fits supplied"))?;
            let lambda = map.map_coefficient(class_a, class_b, lambda_f).ok_or_else(|| {
                Error::policy(policy, format!("no fit for classes ({class_a}, {class_b})"))
            })?;
            vec![mixup_label(class_a, class_b, lambda, k)?]
        }
    };
    Ok(labels)
}

/// Like [`build_labels`], pairing each target with the stimulus image.
pub fn build_training_label<R: Rng + ?Sized>(
    policy: PolicyKind,
    stimulus: &MixedStimulus,
    inputs: PolicyInputs<'_>,
    opts: &PolicyOptions,
    rng: &mut R,
) -> Result<Vec<(ImageTensor, LabelDistribution)>> {
    Ok(build_labels(policy, stimulus.into(), inputs, opts, rng)?
        .into_iter()
        .map(|l| (stimulus.mixed_image.clone(), l))
        .collect())
}
