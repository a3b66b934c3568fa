//! In-memory datasets, the procedural shapes benchmark and a reader for the
//! CIFAR-10 binary batch format.

use std::io::Read;

use rand::seq::IndexedRandom;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hmix::LabelFrequencyTable;
use crate::mix::{check_class, ImageTensor, LabelDistribution};

/// Images with soft targets, stored as row-major matrices.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    dims: (usize, usize, usize),
    num_classes: usize,
    ids: Vec<String>,
    inputs: Vec<f64>,
    targets: Vec<f64>,
}

impl Dataset {
    pub fn new(dims: (usize, usize, usize), num_classes: usize) -> Self {
        Dataset {
            dims,
            num_classes,
            ids: Vec::new(),
            inputs: Vec::new(),
            targets: Vec::new(),
        }
    }

    pub fn push(&mut self, id: impl Into<String>, image: &ImageTensor, target: &LabelDistribution) -> Result<()> {
        if image.dims() != self.dims {
            return Err(Error::Shape(format!("image {:?} in a {:?} dataset", image.dims(), self.dims)));
        }
        if target.num_classes() != self.num_classes {
            return Err(Error::ClassCount {
                left: target.num_classes(),
                right: self.num_classes,
            });
        }
        self.ids.push(id.into());
        self.inputs.extend_from_slice(image.data());
        self.targets.extend_from_slice(target.probs());
        Ok(())
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        self.dims
    }

    pub fn input_dim(&self) -> usize {
        self.dims.0 * self.dims.1 * self.dims.2
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn inputs(&self) -> &[f64] {
        &self.inputs
    }

    pub fn target_matrix(&self) -> &[f64] {
        &self.targets
    }

    pub fn input(&self, i: usize) -> &[f64] {
        let d = self.input_dim();
        &self.inputs[i * d..(i + 1) * d]
    }

    pub fn target(&self, i: usize) -> &[f64] {
        &self.targets[i * self.num_classes..(i + 1) * self.num_classes]
    }

    pub fn image(&self, i: usize) -> ImageTensor {
        let (h, w, c) = self.dims;
        ImageTensor::from_clipped(h, w, c, self.input(i).to_vec())
    }

    /// Argmax of each target.
    pub fn hard_targets(&self) -> Vec<usize> {
        self.targets
            .chunks_exact(self.num_classes)
            .map(crate::mix::argmax)
            .collect()
    }

    pub fn subset(&self, indices: &[usize]) -> Dataset {
        let mut out = Dataset::new(self.dims, self.num_classes);
        for &i in indices {
            out.ids.push(self.ids[i].clone());
            out.inputs.extend_from_slice(self.input(i));
            out.targets.extend_from_slice(self.target(i));
        }
        out
    }

    /// Same images, one-hot targets on the given classes.
    pub fn with_hard_labels(&self, classes: &[usize]) -> Result<Dataset> {
        if classes.len() != self.len() {
            return Err(Error::Shape(format!("{} classes for {} images", classes.len(), self.len())));
        }
        let k = self.num_classes;
        let mut targets = vec![0.0; self.len() * k];
        for (row, &c) in targets.chunks_exact_mut(k).zip(classes) {
            check_class(c, k)?;
            row[c] = 1.0;
        }
        Ok(Dataset {
            targets,
            ..self.clone()
        })
    }
}

pub const SHAPE_CLASSES: [&str; 10] = [
    "disk", "square", "triangle", "cross", "ring", "h-bars", "v-bars", "d-bars", "checker", "dots",
];

/// Classes that are most often blended into each class.
const CONFUSER: [usize; 10] = [4, 8, 3, 2, 0, 6, 5, 9, 1, 7];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ShapesConfig {
    pub size: usize,
    pub channels: usize,
    pub noise_sd: f64,
    /// Fraction of images that blend in a second class.
    pub ambiguous_fraction: f64,
    pub max_blend: f64,
    /// Simulated annotators per image for the soft targets.
    pub annotators: usize,
    /// Chance an annotator picks a class at random.
    pub lapse: f64,
}

impl Default for ShapesConfig {
    fn default() -> Self {
        ShapesConfig {
            size: 32,
            channels: 3,
            noise_sd: 0.1,
            ambiguous_fraction: 0.3,
            max_blend: 0.45,
            annotators: 50,
            lapse: 0.03,
        }
    }
}

/// Procedurally generated images with annotator-style soft targets.
#[derive(Debug, Clone)]
pub struct LabeledShapes {
    /// Targets are normalized annotator counts.
    pub data: Dataset,
    /// The class each image was generated from.
    pub classes: Vec<usize>,
    pub counts: LabelFrequencyTable,
}

impl LabeledShapes {
    /// The images with one-hot targets on their generating class.
    pub fn hard(&self) -> Dataset {
        self.data.with_hard_labels(&self.classes).expect("one class per image")
    }
}

fn shape_mask(class: usize, u: f64, v: f64, scale: f64, freq: f64) -> bool {
    let s = scale;
    let frac = |t: f64| t - t.floor();
    match class {
        0 => u * u + v * v < (0.4 * s).powi(2),
        1 => u.abs().max(v.abs()) < 0.32 * s,
        2 => v < 0.35 * s && v > -0.35 * s && u.abs() < 0.4 * (v + 0.35 * s) / 0.7,
        3 => (u.abs() < 0.1 * s && v.abs() < 0.38 * s) || (v.abs() < 0.1 * s && u.abs() < 0.38 * s),
        4 => {
            let r = (u * u + v * v).sqrt();
            r > 0.22 * s && r < 0.38 * s
        }
        5 => frac(v * freq) < 0.5,
        6 => frac(u * freq) < 0.5,
        7 => frac((u + v) * freq * 0.7) < 0.5,
        8 => ((u * freq).floor() as i64 + (v * freq).floor() as i64).rem_euclid(2) == 0,
        9 => {
            let (a, b) = (frac(u * freq) - 0.5, frac(v * freq) - 0.5);
            a * a + b * b < 0.07
        }
        _ => unreachable!("ten shape classes"),
    }
}

fn render<R: Rng + ?Sized>(class: usize, cfg: &ShapesConfig, rng: &mut R) -> Vec<f64> {
    let n = cfg.size;
    let cx = rng.random_range(-0.12..0.12);
    let cy = rng.random_range(-0.12..0.12);
    let scale = rng.random_range(0.65..1.1);
    let freq = rng.random_range(3.0..5.0);
    let bg: Vec<f64> = (0..cfg.channels).map(|_| rng.random_range(0.0..0.45)).collect();
    let fg: Vec<f64> = (0..cfg.channels).map(|_| rng.random_range(0.55..1.0)).collect();
    let mut out = Vec::with_capacity(n * n * cfg.channels);
    for r in 0..n {
        let v = (r as f64 + 0.5) / n as f64 - 0.5 - cy;
        for c in 0..n {
            let u = (c as f64 + 0.5) / n as f64 - 0.5 - cx;
            let on = shape_mask(class, u, v, scale, freq);
            for ch in 0..cfg.channels {
                out.push(if on { fg[ch] } else { bg[ch] });
            }
        }
    }
    out
}

/// Share of annotators that report the blended-in class at blend weight `beta`.
fn perceived_confusion(beta: f64) -> f64 {
    1.0 / (1.0 + (-14.0 * (beta - 0.5)).exp())
}

/// Draws `n` images with classes cycling through all ten.
pub fn generate_shapes<R: Rng + ?Sized>(n: usize, cfg: &ShapesConfig, rng: &mut R) -> Result<LabeledShapes> {
    if cfg.size == 0 || cfg.channels == 0 || cfg.annotators == 0 {
        return Err(Error::field("shapes", "size, channels and annotators must be positive"));
    }
    if !(0.0..=1.0).contains(&cfg.ambiguous_fraction) || !(0.0..0.5).contains(&cfg.max_blend) {
        return Err(Error::field("shapes", "ambiguous_fraction in [0,1] and max_blend in [0,0.5) required"));
    }
    let k = SHAPE_CLASSES.len();
    let noise = Normal::new(0.0, cfg.noise_sd).map_err(|e| Error::field("noise_sd", e.to_string()))?;
    let dims = (cfg.size, cfg.size, cfg.channels);
    let mut data = Dataset::new(dims, k);
    let mut classes = Vec::with_capacity(n);
    let mut counts = LabelFrequencyTable::new(k);
    let others: Vec<Vec<usize>> = (0..k).map(|c| (0..k).filter(|&o| o != c).collect()).collect();
    for i in 0..n {
        let class = i % k;
        let mut pixels = render(class, cfg, rng);
        let mut confuser = CONFUSER[class];
        let mut beta = 0.0;
        if rng.random_bool(cfg.ambiguous_fraction) {
            if rng.random_bool(0.3) {
                confuser = *others[class].choose(rng).expect("nine other classes");
            }
            beta = rng.random_range(0.05..cfg.max_blend);
            let other = render(confuser, cfg, rng);
            for (p, o) in pixels.iter_mut().zip(other) {
                *p = (1.0 - beta) * *p + beta * o;
            }
        }
        for p in &mut pixels {
            *p += noise.sample(rng);
        }
        let image = ImageTensor::from_clipped(cfg.size, cfg.size, cfg.channels, pixels);

        let q = perceived_confusion(beta);
        let mut c = vec![0u64; k];
        for _ in 0..cfg.annotators {
            let pick = if rng.random_bool(cfg.lapse) {
                rng.random_range(0..k)
            } else if rng.random_bool(q) {
                confuser
            } else {
                class
            };
            c[pick] += 1;
        }
        let weights: Vec<f64> = c.iter().map(|&v| v as f64).collect();
        let id = format!("shape-{i:05}");
        data.push(id.clone(), &image, &LabelDistribution::from_weights(&weights)?)?;
        counts.insert(id, c)?;
        classes.push(class);
    }
    Ok(LabeledShapes { data, classes, counts })
}

pub const CIFAR_RECORD_BYTES: usize = 3073;
const CIFAR_SIDE: usize = 32;

/// Reads a CIFAR-10 binary batch: records of one label byte followed by
/// 1024 red, 1024 green and 1024 blue bytes. Targets are one-hot.
pub fn read_cifar_batch<R: Read>(mut input: R, id_prefix: &str) -> Result<Dataset> {
    let mut bytes = Vec::new();
    input.read_to_end(&mut bytes)?;
    if bytes.is_empty() || bytes.len() % CIFAR_RECORD_BYTES != 0 {
        return Err(Error::Shape(format!(
            "{} bytes is not a whole number of {CIFAR_RECORD_BYTES}-byte records",
            bytes.len()
        )));
    }
    let plane = CIFAR_SIDE * CIFAR_SIDE;
    let mut data = Dataset::new((CIFAR_SIDE, CIFAR_SIDE, 3), 10);
    for (i, rec) in bytes.chunks_exact(CIFAR_RECORD_BYTES).enumerate() {
        let label = rec[0] as usize;
        if label >= 10 {
            return Err(Error::Parse {
                line: i + 1,
                reason: format!("label byte {label} is not a CIFAR-10 class"),
            });
        }
        let mut interleaved = Vec::with_capacity(3 * plane);
        for p in 0..plane {
            for ch in 0..3 {
                interleaved.push(rec[1 + ch * plane + p]);
            }
        }
        let image = ImageTensor::from_u8(CIFAR_SIDE, CIFAR_SIDE, 3, &interleaved)?;
        data.push(format!("{id_prefix}{i}"), &image, &LabelDistribution::one_hot(label, 10)?)?;
    }
    Ok(data)
}
