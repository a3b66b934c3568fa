//! Logistic category boundaries.
//!
//! For one class pair, the human-inferred coefficient is modelled as a
//! four-parameter logistic in the generating coefficient,
//!
//! ```text
//! l(x) = lower + (upper - lower) / (1 + exp(-steepness * (x - midpoint)))
//! ```
//!
//! fitted by damped Gauss-Newton (Levenberg-Marquardt) with an analytic
//! Jacobian from several fixed starting points. Predictions are clamped to
//! `[0, 1]`. The asymptotes themselves are left unconstrained while fitting
//! so that near-linear boundaries stay representable; the clamped curve's
//! effective asymptotes are [`BoundaryFit::lower_asymptote`] and
//! [`BoundaryFit::upper_asymptote`].

use std::collections::BTreeMap;
use std::io::{BufRead, Write};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hmix::{CentralTendency, HmixStore, InterfaceKind};
use crate::mix::MixCoefficient;

pub const PARAM_COUNT: usize = 4;

pub const FIT_FILE_HEADER: &str = "hmix-fit-v1";

/// Classes of a pair, lower index first.
pub type ClassPair = (usize, usize);

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogisticParams {
    pub lower: f64,
    pub upper: f64,
    pub steepness: f64,
    pub midpoint: f64,
}

#[inline]
fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

impl LogisticParams {
    pub fn new(lower: f64, upper: f64, steepness: f64, midpoint: f64) -> Self {
        LogisticParams {
            lower,
            upper,
            steepness,
            midpoint,
        }
    }

    fn to_array(self) -> [f64; PARAM_COUNT] {
        [self.lower, self.upper, self.steepness, self.midpoint]
    }

    fn from_array(p: [f64; PARAM_COUNT]) -> Self {
        LogisticParams::new(p[0], p[1], p[2], p[3])
    }

    /// Unclamped curve value.
    pub fn eval_raw(&self, x: f64) -> f64 {
        self.lower + (self.upper - self.lower) * sigmoid(self.steepness * (x - self.midpoint))
    }

    /// Curve value clamped to `[0, 1]`.
    pub fn eval(&self, x: f64) -> f64 {
        self.eval_raw(x).clamp(0.0, 1.0)
    }

    /// Value and gradient with respect to `(lower, upper, steepness, midpoint)`.
    fn eval_with_gradient(&self, x: f64) -> (f64, [f64; PARAM_COUNT]) {
        let s = sigmoid(self.steepness * (x - self.midpoint));
        let span = self.upper - self.lower;
        let ds = s * (1.0 - s);
        (
            self.lower + span * s,
            [
                1.0 - s,
                s,
                span * ds * (x - self.midpoint),
                -span * ds * self.steepness,
            ],
        )
    }

    /// Same curve with `lower <= upper`: swapping the asymptotes and negating
    /// the steepness leaves the function unchanged.
    fn canonical(self) -> Self {
        if self.lower > self.upper {
            LogisticParams::new(self.upper, self.lower, -self.steepness, self.midpoint)
        } else {
            self
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundaryFit {
    pub class_pair: Option<ClassPair>,
    pub params: LogisticParams,
    /// Sum of squared residuals of the clamped curve.
    pub residual_sse: f64,
    pub n_points: usize,
    /// `steepness >= 0`, i.e. the curve never decreases.
    pub monotone: bool,
    /// False when the best start hit the iteration cap.
    pub converged: bool,
}

impl BoundaryFit {
    pub fn predict(&self, x: f64) -> f64 {
        self.params.eval(x)
    }

    pub fn lower_asymptote(&self) -> f64 {
        self.params.lower.clamp(0.0, 1.0)
    }

    pub fn upper_asymptote(&self) -> f64 {
        self.params.upper.clamp(0.0, 1.0)
    }
}

/// Maps a generating coefficient through a fitted boundary.
pub fn apply_boundary(fit: &BoundaryFit, lambda_f: MixCoefficient) -> MixCoefficient {
    MixCoefficient::new(fit.predict(lambda_f.value())).expect("clamped to [0, 1]")
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitSettings {
    pub max_iterations: usize,
    /// Stop when the relative SSE decrease of an accepted step falls below this.
    pub tolerance: f64,
}

impl Default for FitSettings {
    fn default() -> Self {
        FitSettings {
            max_iterations: 400,
            tolerance: 1e-15,
        }
    }
}

/// The fixed starting points: identity-like, steep, shallow, left- and
/// right-shifted.
pub fn default_starts() -> [LogisticParams; 5] {
    [
        LogisticParams::new(0.0, 1.0, 5.0, 0.5),
        LogisticParams::new(0.0, 1.0, 20.0, 0.5),
        LogisticParams::new(0.2, 0.8, 1.0, 0.5),
        LogisticParams::new(0.0, 1.0, 8.0, 0.3),
        LogisticParams::new(0.0, 1.0, 8.0, 0.7),
    ]
}

fn sse(params: &LogisticParams, points: &[(f64, f64)]) -> f64 {
    points
        .iter()
        .map(|&(x, y)| (y - params.eval_raw(x)).powi(2))
        .sum()
}

fn clamped_sse(params: &LogisticParams, points: &[(f64, f64)]) -> f64 {
    points
        .iter()
        .map(|&(x, y)| (y - params.eval(x)).powi(2))
        .sum()
}

/// Solves the 4x4 system `a x = b` by Gaussian elimination with partial
/// pivoting; `None` when singular.
fn solve4(mut a: [[f64; PARAM_COUNT]; PARAM_COUNT], mut b: [f64; PARAM_COUNT]) -> Option<[f64; PARAM_COUNT]> {
    for col in 0..PARAM_COUNT {
        let pivot = (col..PARAM_COUNT).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[pivot][col].abs() < 1e-300 {
            return None;
        }
        a.swap(col, pivot);
        b.swap(col, pivot);
        for row in col + 1..PARAM_COUNT {
            let f = a[row][col] / a[col][col];
            let pivot_row = a[col];
            for (v, p) in a[row].iter_mut().zip(pivot_row).skip(col) {
                *v -= f * p;
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = [0.0; PARAM_COUNT];
    for row in (0..PARAM_COUNT).rev() {
        let tail: f64 = (row + 1..PARAM_COUNT).map(|k| a[row][k] * x[k]).sum();
        x[row] = (b[row] - tail) / a[row][row];
    }
    x.iter().all(|v| v.is_finite()).then_some(x)
}

/// One Levenberg-Marquardt run. Returns the final parameters, their SSE and
/// whether the stopping criterion was met before the iteration cap.
fn levenberg_marquardt(
    start: LogisticParams,
    points: &[(f64, f64)],
    settings: FitSettings,
) -> (LogisticParams, f64, bool) {
    let mut params = start;
    let mut cost = sse(&params, points);
    let mut damping = 1e-3;
    for _ in 0..settings.max_iterations {
        if cost == 0.0 {
            return (params, cost, true);
        }
        let mut jtj = [[0.0; PARAM_COUNT]; PARAM_COUNT];
        let mut jtr = [0.0; PARAM_COUNT];
        for &(x, y) in points {
            let (f, g) = params.eval_with_gradient(x);
            let r = y - f;
            for i in 0..PARAM_COUNT {
                jtr[i] += g[i] * r;
                for j in 0..PARAM_COUNT {
                    jtj[i][j] += g[i] * g[j];
                }
            }
        }
        if jtr.iter().all(|g| g.abs() < 1e-300) {
            return (params, cost, true);
        }

        // Retry with growing damping until a step lowers the cost.
        let mut accepted = false;
        while damping < 1e16 {
            let mut a = jtj;
            for (i, row) in a.iter_mut().enumerate() {
                row[i] += damping * (jtj[i][i].max(1e-12));
            }
            if let Some(step) = solve4(a, jtr) {
                let p = params.to_array();
                let candidate = LogisticParams::from_array(std::array::from_fn(|i| p[i] + step[i]));
                let candidate_cost = sse(&candidate, points);
                if candidate_cost.is_finite() && candidate_cost < cost {
                    let improvement = (cost - candidate_cost) / cost.max(f64::MIN_POSITIVE);
                    params = candidate;
                    cost = candidate_cost;
                    damping = (damping / 3.0).max(1e-12);
                    accepted = true;
                    if improvement < settings.tolerance {
                        return (params, cost, true);
                    }
                    break;
                }
            }
            damping *= 4.0;
        }
        if !accepted {
            // No descent direction left at any damping: a stationary point.
            return (params, cost, true);
        }
    }
    (params, cost, false)
}

/// Fits the logistic boundary to `(lambda_f, lambda_h)` points.
///
/// Besides the fixed starts (or `init`), a flat start at the mean of the
/// responses is always tried, so the result is never worse than the best
/// constant. Points are sorted first, which makes the fit independent of
/// their order.
pub fn fit_boundary(points: &[(f64, f64)], init: Option<LogisticParams>) -> Result<BoundaryFit> {
    fit_boundary_with(points, init, FitSettings::default())
}

pub fn fit_boundary_with(
    points: &[(f64, f64)],
    init: Option<LogisticParams>,
    settings: FitSettings,
) -> Result<BoundaryFit> {
    if points.len() < PARAM_COUNT {
        return Err(Error::Insufficient(format!(
            "{} points for {PARAM_COUNT} parameters",
            points.len()
        )));
    }
    for &(x, y) in points {
        if !(0.0..=1.0).contains(&x) || !(0.0..=1.0).contains(&y) {
            return Err(Error::field(
                "points",
                format!("({x}, {y}) is outside the unit square"),
            ));
        }
    }
    let mut pts = points.to_vec();
    pts.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));

    let mean = pts.iter().map(|p| p.1).sum::<f64>() / pts.len() as f64;
    let flat = LogisticParams::new(mean, mean, 0.0, 0.5);
    let mut starts: Vec<LogisticParams> = match init {
        Some(p) => vec![p],
        None => default_starts().to_vec(),
    };
    starts.push(flat);

    let mut best: Option<(LogisticParams, f64, bool)> = None;
    for start in starts {
        let run = levenberg_marquardt(start, &pts, settings);
        if best.as_ref().is_none_or(|b| run.1 < b.1) {
            best = Some(run);
        }
    }
    let (params, _, converged) = best.expect("at least one start");
    let params = params.canonical();
    Ok(BoundaryFit {
        class_pair: None,
        residual_sse: clamped_sse(&params, &pts),
        n_points: pts.len(),
        monotone: params.steepness >= 0.0,
        converged,
        params,
    })
}

/// Fitted boundaries keyed by class pair (lower class first).
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct BoundaryMap {
    #[serde(with = "pair_keyed")]
    pub fits: BTreeMap<ClassPair, BoundaryFit>,
}

/// Class-pair maps serialize as `[[lo, hi], value]` entries so they survive
/// formats that only allow string keys.
mod pair_keyed {
    use std::collections::BTreeMap;

    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    use super::ClassPair;

    pub fn serialize<S: Serializer, V: Serialize>(map: &BTreeMap<ClassPair, V>, s: S) -> Result<S::Ok, S::Error> {
        s.collect_seq(map.iter())
    }

    pub fn deserialize<'de, D, V>(d: D) -> Result<BTreeMap<ClassPair, V>, D::Error>
    where
        D: Deserializer<'de>,
        V: Deserialize<'de>,
    {
        Ok(Vec::<(ClassPair, V)>::deserialize(d)?.into_iter().collect())
    }
}

impl BoundaryMap {
    pub fn get(&self, class_a: usize, class_b: usize) -> Option<&BoundaryFit> {
        self.fits.get(&(class_a.min(class_b), class_a.max(class_b)))
    }

    /// Human-aligned coefficient on `class_a` for a generating coefficient on
    /// `class_a`. Fits refer to the lower class, so a reversed pair maps the
    /// complement.
    pub fn map_coefficient(&self, class_a: usize, class_b: usize, lambda_f: MixCoefficient) -> Option<MixCoefficient> {
        let fit = self.get(class_a, class_b)?;
        if class_a < class_b {
            Some(apply_boundary(fit, lambda_f))
        } else {
            Some(apply_boundary(fit, lambda_f.complement()).complement())
        }
    }

    pub fn len(&self) -> usize {
        self.fits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.fits.is_empty()
    }

    pub fn write<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "{FIT_FILE_HEADER}")?;
        writeln!(
            out,
            "# class_lo\tclass_hi\tlower\tupper\tsteepness\tmidpoint\tsse\tn_points\tmonotone\tconverged"
        )?;
        for ((a, b), f) in &self.fits {
            let p = f.params;
            writeln!(
                out,
                "{a}\t{b}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}",
                p.lower, p.upper, p.steepness, p.midpoint, f.residual_sse, f.n_points, f.monotone, f.converged
            )?;
        }
        Ok(())
    }

    pub fn read<R: BufRead>(input: R) -> Result<Self> {
        let mut map = BoundaryMap::default();
        let mut header = false;
        for (i, line) in input.lines().enumerate() {
            let line_no = i + 1;
            let line = line?;
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            if !header {
                if line.trim() != FIT_FILE_HEADER {
                    return Err(Error::Version {
                        found: line,
                        expected: FIT_FILE_HEADER.into(),
                    });
                }
                header = true;
                continue;
            }
            let f: Vec<&str> = line.split('\t').collect();
            let bad = |what: &str| Error::Parse {
                line: line_no,
                reason: format!("bad {what}"),
            };
            if f.len() != 10 {
                return Err(bad("field count"));
            }
            let num = |i: usize, name: &str| f[i].parse::<f64>().map_err(|_| bad(name));
            let a: usize = f[0].parse().map_err(|_| bad("class_lo"))?;
            let b: usize = f[1].parse().map_err(|_| bad("class_hi"))?;
            if a >= b {
                return Err(bad("class order"));
            }
            let fit = BoundaryFit {
                class_pair: Some((a, b)),
                params: LogisticParams::new(
                    num(2, "lower")?,
                    num(3, "upper")?,
                    num(4, "steepness")?,
                    num(5, "midpoint")?,
                ),
                residual_sse: num(6, "sse")?,
                n_points: f[7].parse().map_err(|_| bad("n_points"))?,
                monotone: f[8].parse().map_err(|_| bad("monotone"))?,
                converged: f[9].parse().map_err(|_| bad("converged"))?,
            };
            map.fits.insert((a, b), fit);
        }
        if !header {
            return Err(Error::Parse {
                line: 1,
                reason: format!("missing `{FIT_FILE_HEADER}` header"),
            });
        }
        Ok(map)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PairFitOptions {
    /// Fit to per-coefficient medians instead of raw responses.
    pub use_medians: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PairFitReport {
    pub boundaries: BoundaryMap,
    /// Pairs with fewer points than parameters, and their point counts.
    #[serde(with = "pair_keyed")]
    pub insufficient: BTreeMap<ClassPair, usize>,
    pub non_monotone: Vec<ClassPair>,
    pub not_converged: Vec<ClassPair>,
    /// Judgments referring to pairs missing from the catalogue.
    pub unknown_pairs: usize,
}

/// Collects oriented `(lambda_f, lambda_h)` points per class pair from
/// coefficient-inference judgments.
pub fn pair_points(store: &HmixStore) -> (BTreeMap<ClassPair, Vec<(f64, f64)>>, usize) {
    let mut points: BTreeMap<ClassPair, Vec<(f64, f64)>> = BTreeMap::new();
    let mut unknown = 0;
    for j in store
        .judgments()
        .filter(|j| j.interface == InterfaceKind::InferCoefficient && j.repeat_of.is_none())
    {
        let Some(pair) = store.pair(&j.stimulus.pair_id) else {
            unknown += 1;
            continue;
        };
        let p = if pair.is_reversed() {
            (1.0 - j.stimulus.lambda_f, 1.0 - j.lambda_h)
        } else {
            (j.stimulus.lambda_f, j.lambda_h)
        };
        points.entry(pair.class_pair()).or_default().push(p);
    }
    (points, unknown)
}

fn median_points(points: &[(f64, f64)]) -> Vec<(f64, f64)> {
    let mut by_x: BTreeMap<i64, (f64, Vec<f64>)> = BTreeMap::new();
    for &(x, y) in points {
        by_x.entry((x * 1e9).round() as i64)
            .or_insert_with(|| (x, Vec::new()))
            .1
            .push(y);
    }
    by_x.into_values()
        .map(|(x, ys)| (x, CentralTendency::Median.apply(&ys).expect("nonempty")))
        .collect()
}

/// One boundary per class pair with enough coefficient-inference data.
pub fn fit_all_pairs(store: &HmixStore, opts: PairFitOptions) -> PairFitReport {
    let (points, unknown_pairs) = pair_points(store);
    let results: Vec<(ClassPair, usize, Result<BoundaryFit>)> = points
        .into_par_iter()
        .map(|(pair, pts)| {
            let pts = if opts.use_medians { median_points(&pts) } else { pts };
            let fit = fit_boundary(&pts, None).map(|mut f| {
                f.class_pair = Some(pair);
                f
            });
            (pair, pts.len(), fit)
        })
        .collect();

    let mut report = PairFitReport {
        unknown_pairs,
        ..Default::default()
    };
    for (pair, n, res) in results {
        match res {
            Ok(fit) => {
                if !fit.monotone {
                    report.non_monotone.push(pair);
                }
                if !fit.converged {
                    report.not_converged.push(pair);
                }
                report.boundaries.fits.insert(pair, fit);
            }
            Err(_) => {
                report.insufficient.insert(pair, n);
            }
        }
    }
    report
}
