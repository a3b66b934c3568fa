//! Decoupled data and label mixing.
//!
//! Inputs are mixed with `data_mix` and labels with `label_mix`; the two take
//! independent coefficients so a human-aligned label coefficient can be paired
//! with the generating data coefficient. Classical mixup is the special case
//! where both coefficients are equal.
//!
//! All arithmetic is `f64` on intensities in `[0, 1]`.

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance on the sum of a [`LabelDistribution`].
pub const SIMPLEX_TOLERANCE: f64 = 1e-9;

/// Coefficients of the 11-image midpoint-selection sweep, `0.0, 0.1, .., 1.0`.
pub fn sweep_grid() -> Vec<MixCoefficient> {
    (0..=10)
        .map(|i| MixCoefficient::new(i as f64 / 10.0).expect("grid value in range"))
        .collect()
}

/// Generating coefficients shown in coefficient-inference sessions.
pub const INFER_COEFFICIENTS: [f64; 5] = [0.1, 0.25, 0.5, 0.75, 0.9];

/// Coefficients shown in soft-label report sessions.
pub const SOFT_LABEL_COEFFICIENTS: [f64; 3] = [0.25, 0.5, 0.75];

/// A mixing weight in `[0, 1]`.
///
/// The complement is stored alongside the value so that `c.complement().complement()`
/// gives back `c` bit for bit; `1 - (1 - x)` is not exact in floating point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct MixCoefficient {
    value: f64,
    complement: f64,
}

impl MixCoefficient {
    pub fn new(value: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&value) {
            return Err(Error::field(
                "lambda",
                format!("{value} is outside [0, 1]"),
            ));
        }
        Ok(Self {
            value,
            complement: 1.0 - value,
        })
    }

    #[inline]
    pub fn value(self) -> f64 {
        self.value
    }

    /// The weight given to the second endpoint.
    #[inline]
    pub fn complement(self) -> Self {
        Self {
            value: self.complement,
            complement: self.value,
        }
    }
}

impl TryFrom<f64> for MixCoefficient {
    type Error = Error;

    fn try_from(value: f64) -> Result<Self> {
        Self::new(value)
    }
}

impl From<MixCoefficient> for f64 {
    fn from(c: MixCoefficient) -> f64 {
        c.value
    }
}

/// Dense `height x width x channels` image, row-major with interleaved channels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageTensor {
    height: usize,
    width: usize,
    channels: usize,
    data: Vec<f64>,
}

impl ImageTensor {
    pub fn new(height: usize, width: usize, channels: usize, data: Vec<f64>) -> Result<Self> {
        let expected = height * width * channels;
        if data.len() != expected {
            return Err(Error::Shape(format!(
                "{height}x{width}x{channels} image needs {expected} values, got {}",
                data.len()
            )));
        }
        if let Some((i, v)) = data
            .iter()
            .enumerate()
            .find(|(_, v)| !(0.0..=1.0).contains(*v))
        {
            return Err(Error::field(
                "pixel",
                format!("intensity {v} at index {i} is outside [0, 1]"),
            ));
        }
        Ok(Self {
            height,
            width,
            channels,
            data,
        })
    }

    pub fn zeros(height: usize, width: usize, channels: usize) -> Self {
        Self {
            height,
            width,
            channels,
            data: vec![0.0; height * width * channels],
        }
    }

    /// Converts 8-bit intensities (interleaved, row-major) to `[0, 1]`.
    pub fn from_u8(height: usize, width: usize, channels: usize, bytes: &[u8]) -> Result<Self> {
        let data = bytes.iter().map(|&b| f64::from(b) / 255.0).collect();
        Self::new(height, width, channels, data)
    }

    /// Rounds to the nearest 8-bit level.
    pub fn to_u8(&self) -> Vec<u8> {
        self.data
            .iter()
            .map(|v| (v * 255.0).round().clamp(0.0, 255.0) as u8)
            .collect()
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        (self.height, self.width, self.channels)
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// Builds an image from values already known to be in range, clipping
    /// anything that is not.
    pub(crate) fn from_clipped(height: usize, width: usize, channels: usize, mut data: Vec<f64>) -> Self {
        debug_assert_eq!(data.len(), height * width * channels);
        for v in &mut data {
            *v = v.clamp(0.0, 1.0);
        }
        Self {
            height,
            width,
            channels,
            data,
        }
    }
}

/// A probability vector over `K` classes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct LabelDistribution {
    probs: Vec<f64>,
}

impl LabelDistribution {
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.is_empty() {
            return Err(Error::field("label", "distribution has no classes"));
        }
        if let Some((k, p)) = probs
            .iter()
            .enumerate()
            .find(|(_, p)| !p.is_finite() || **p < 0.0)
        {
            return Err(Error::field(
                "label",
                format!("entry {k} is {p}; probabilities must be finite and nonnegative"),
            ));
        }
        let sum: f64 = probs.iter().sum();
        if (sum - 1.0).abs() > SIMPLEX_TOLERANCE {
            return Err(Error::field(
                "label",
                format!("entries sum to {sum}, not 1"),
            ));
        }
        Ok(Self { probs })
    }

    /// Normalizes nonnegative weights to sum to one.
    pub fn from_weights(weights: &[f64]) -> Result<Self> {
        let total: f64 = weights.iter().sum();
        if total.is_nan() || total <= 0.0 || weights.iter().any(|w| *w < 0.0 || !w.is_finite()) {
            return Err(Error::field(
                "label",
                "weights must be nonnegative with a positive sum",
            ));
        }
        Self::new(weights.iter().map(|w| w / total).collect())
    }

    pub fn one_hot(class: usize, num_classes: usize) -> Result<Self> {
        check_class(class, num_classes)?;
        let mut probs = vec![0.0; num_classes];
        probs[class] = 1.0;
        Ok(Self { probs })
    }

    pub fn uniform(num_classes: usize) -> Result<Self> {
        if num_classes == 0 {
            return Err(Error::field("num_classes", "must be positive"));
        }
        Ok(Self {
            probs: vec![1.0 / num_classes as f64; num_classes],
        })
    }

    pub fn num_classes(&self) -> usize {
        self.probs.len()
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn into_probs(self) -> Vec<f64> {
        self.probs
    }

    /// Index of the largest entry; ties resolve to the lowest index.
    pub fn argmax(&self) -> usize {
        argmax(&self.probs)
    }

    /// Shannon entropy in nats.
    pub fn entropy(&self) -> f64 {
        -self
            .probs
            .iter()
            .filter(|p| **p > 0.0)
            .map(|p| p * p.ln())
            .sum::<f64>()
    }
}

impl TryFrom<Vec<f64>> for LabelDistribution {
    type Error = Error;

    fn try_from(probs: Vec<f64>) -> Result<Self> {
        Self::new(probs)
    }
}

impl From<LabelDistribution> for Vec<f64> {
    fn from(l: LabelDistribution) -> Vec<f64> {
        l.probs
    }
}

pub(crate) fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate() {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

pub(crate) fn check_class(class: usize, num_classes: usize) -> Result<()> {
    if class >= num_classes {
        return Err(Error::field(
            "class",
            format!("class {class} is out of range for {num_classes} classes"),
        ));
    }
    Ok(())
}

/// Convex combination of two values, clipped to the interval they span so
/// that rounding can never leave it.
#[inline]
fn convex(a: f64, b: f64, wa: f64, wb: f64) -> f64 {
    let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
    (wa * a + wb * b).clamp(lo, hi)
}

/// `lambda * x_i + (1 - lambda) * x_j`, elementwise.
pub fn data_mix(x_i: &ImageTensor, x_j: &ImageTensor, lambda: MixCoefficient) -> Result<ImageTensor> {
    if x_i.dims() != x_j.dims() {
        return Err(Error::Shape(format!(
            "cannot mix {:?} with {:?}",
            x_i.dims(),
            x_j.dims()
        )));
    }
    let (wa, wb) = (lambda.value, lambda.complement);
    let data = x_i
        .data
        .iter()
        .zip(&x_j.data)
        .map(|(&a, &b)| convex(a, b, wa, wb))
        .collect();
    Ok(ImageTensor {
        height: x_i.height,
        width: x_i.width,
        channels: x_i.channels,
        data,
    })
}

/// `lambda * y_i + (1 - lambda) * y_j`.
pub fn label_mix(
    y_i: &LabelDistribution,
    y_j: &LabelDistribution,
    lambda: MixCoefficient,
) -> Result<LabelDistribution> {
    if y_i.num_classes() != y_j.num_classes() {
        return Err(Error::ClassCount {
            left: y_i.num_classes(),
            right: y_j.num_classes(),
        });
    }
    let (wa, wb) = (lambda.value, lambda.complement);
    let probs = y_i
        .probs
        .iter()
        .zip(&y_j.probs)
        .map(|(&a, &b)| convex(a, b, wa, wb))
        .collect();
    Ok(LabelDistribution { probs })
}

/// Where mixing coefficients are drawn from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum CoefficientDistribution {
    Beta { alpha: f64, beta: f64 },
    /// A finite set of values; empty `weights` means uniform.
    Discrete {
        values: Vec<f64>,
        #[serde(default)]
        weights: Vec<f64>,
    },
}

impl CoefficientDistribution {
    pub fn uniform() -> Self {
        CoefficientDistribution::Beta {
            alpha: 1.0,
            beta: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            CoefficientDistribution::Beta { alpha, beta } => {
                if !(*alpha > 0.0 && *beta > 0.0) || !alpha.is_finite() || !beta.is_finite() {
                    return Err(Error::field(
                        "distribution",
                        format!("Beta({alpha}, {beta}) needs positive finite parameters"),
                    ));
                }
            }
            CoefficientDistribution::Discrete { values, weights } => {
                if values.is_empty() {
                    return Err(Error::field("distribution", "discrete set is empty"));
                }
                for v in values {
                    MixCoefficient::new(*v)?;
                }
                if !weights.is_empty() {
                    if weights.len() != values.len() {
                        return Err(Error::field(
                            "distribution",
                            "weights and values differ in length",
                        ));
                    }
                    WeightedIndex::new(weights).map_err(|e| {
                        Error::field("distribution", format!("bad weights: {e}"))
                    })?;
                }
            }
        }
        Ok(())
    }
}

/// Draws one coefficient. `Beta(1, 1)` draws the standard uniform directly.
pub fn sample_lambda<R: Rng + ?Sized>(
    distribution: &CoefficientDistribution,
    rng: &mut R,
) -> Result<MixCoefficient> {
    distribution.validate()?;
    let value = match distribution {
        CoefficientDistribution::Beta { alpha, beta } if *alpha == 1.0 && *beta == 1.0 => {
            rng.random::<f64>()
        }
        CoefficientDistribution::Beta { alpha, beta } => rand_distr::Beta::new(*alpha, *beta)
            .map_err(|e| Error::field("distribution", e.to_string()))?
            .sample(rng),
        CoefficientDistribution::Discrete { values, weights } => {
            let idx = if weights.is_empty() {
                rng.random_range(0..values.len())
            } else {
                WeightedIndex::new(weights)
                    .map_err(|e| Error::field("distribution", e.to_string()))?
                    .sample(rng)
            };
            values[idx]
        }
    };
    MixCoefficient::new(value.clamp(0.0, 1.0))
}

/// An original image with its class, as used at either end of a mix.
#[derive(Debug, Clone, PartialEq)]
pub struct Endpoint {
    pub id: String,
    pub class: usize,
    pub image: ImageTensor,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MixedStimulus {
    pub pair_id: String,
    pub endpoint_a_id: String,
    pub endpoint_b_id: String,
    pub class_a: usize,
    pub class_b: usize,
    pub lambda_f: MixCoefficient,
    pub mixed_image: ImageTensor,
}

impl MixedStimulus {
    pub fn new(pair_id: impl Into<String>, a: &Endpoint, b: &Endpoint, lambda_f: MixCoefficient) -> Result<Self> {
        if a.class == b.class {
            return Err(Error::field(
                "class_b",
                format!("endpoints share class {}", a.class),
            ));
        }
        Ok(Self {
            pair_id: pair_id.into(),
            endpoint_a_id: a.id.clone(),
            endpoint_b_id: b.id.clone(),
            class_a: a.class,
            class_b: b.class,
            lambda_f,
            mixed_image: data_mix(&a.image, &b.image, lambda_f)?,
        })
    }
}

/// One stimulus per coefficient in `grid`, which must be nonempty and ascending.
pub fn sweep_stimuli(
    pair_id: &str,
    a: &Endpoint,
    b: &Endpoint,
    grid: &[MixCoefficient],
) -> Result<Vec<MixedStimulus>> {
    if grid.is_empty() {
        return Err(Error::field("grid", "empty"));
    }
    if grid.windows(2).any(|w| w[0].value() > w[1].value()) {
        return Err(Error::field("grid", "not sorted ascending"));
    }
    grid.iter()
        .map(|&l| MixedStimulus::new(pair_id, a, b, l))
        .collect()
}
