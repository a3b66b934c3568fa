//! Aggregate statistics over stored judgments.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use super::record::{InterfaceKind, Judgment, RecordKey};
use super::store::HmixStore;

/// How a set of responses is reduced to one value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CentralTendency {
    #[default]
    Mean,
    Median,
}

impl CentralTendency {
    /// Reduces `values`; the input is sorted first so the result does not
    /// depend on the order values arrive in.
    pub fn apply(self, values: &[f64]) -> Option<f64> {
        if values.is_empty() {
            return None;
        }
        let mut v = values.to_vec();
        v.sort_by(f64::total_cmp);
        Some(match self {
            CentralTendency::Mean => v.iter().sum::<f64>() / v.len() as f64,
            CentralTendency::Median => percentile_sorted(&v, 0.5),
        })
    }
}

impl std::str::FromStr for CentralTendency {
    type Err = crate::Error;

    fn from_str(s: &str) -> crate::Result<Self> {
        match s {
            "mean" => Ok(CentralTendency::Mean),
            "median" => Ok(CentralTendency::Median),
            other => Err(crate::Error::field(
                "central_tendency",
                format!("expected `mean` or `median`, got `{other}`"),
            )),
        }
    }
}

/// Percentile with linear interpolation between closest ranks; `q` in `[0, 1]`.
pub fn percentile_sorted(sorted: &[f64], q: f64) -> f64 {
    assert!(!sorted.is_empty(), "percentile of empty slice");
    let pos = q.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    sorted[lo] + (sorted[hi] - sorted[lo]) * frac
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub n: usize,
    pub mean: f64,
    /// Sample standard deviation; zero for a single value.
    pub sd: f64,
    pub median: f64,
    pub p25: f64,
    pub p75: f64,
}

impl Summary {
    pub fn of(values: &[f64]) -> Option<Summary> {
        if values.is_empty() {
            return None;
        }
        let mut v = values.to_vec();
        v.sort_by(f64::total_cmp);
        let n = v.len();
        let mean = v.iter().sum::<f64>() / n as f64;
        let sd = if n > 1 {
            (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
        } else {
            0.0
        };
        Some(Summary {
            n,
            mean,
            sd,
            median: percentile_sorted(&v, 0.5),
            p25: percentile_sorted(&v, 0.25),
            p75: percentile_sorted(&v, 0.75),
        })
    }
}

/// Bucket key for a coefficient: nearest multiple of 1e-9.
fn coefficient_key(v: f64) -> i64 {
    (v * 1e9).round() as i64
}

fn key_value(k: i64) -> f64 {
    k as f64 / 1e9
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GroupBy {
    ClassPair,
    Stimulus,
    Global,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GroupKey {
    /// Lower class first; coefficients refer to the lower class.
    ClassPair(usize, usize),
    Stimulus(String),
    Global,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BucketStats {
    pub lambda_f: f64,
    pub relabel: Summary,
    pub confidence: Option<Summary>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateCurve {
    pub group: GroupKey,
    pub buckets: Vec<BucketStats>,
    /// Expected coefficients with no samples in this group.
    pub missing: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct AggregateReport {
    pub curves: Vec<AggregateCurve>,
    /// Judgments whose pair is not in the catalogue (class-pair grouping only).
    pub skipped: usize,
}

/// Selects judgments for an analysis.
#[derive(Debug, Clone, Default)]
pub struct JudgmentFilter {
    /// Restrict to these interfaces; empty means all.
    pub interfaces: Vec<InterfaceKind>,
    /// Include repeat trials. Off by default so repeats do not double-weight stimuli.
    pub include_repeats: bool,
}

impl JudgmentFilter {
    pub fn interfaces(kinds: &[InterfaceKind]) -> Self {
        JudgmentFilter {
            interfaces: kinds.to_vec(),
            include_repeats: false,
        }
    }

    fn accepts(&self, j: &Judgment) -> bool {
        (self.include_repeats || j.repeat_of.is_none())
            && (self.interfaces.is_empty() || self.interfaces.contains(&j.interface))
    }
}

/// Per-coefficient relabeling statistics.
///
/// `expected` lists the coefficients every group should have; the ones a
/// group lacks are reported in [`AggregateCurve::missing`]. An empty selection
/// gives an empty report.
pub fn aggregate_relabelings(
    store: &HmixStore,
    group_by: GroupBy,
    filter: &JudgmentFilter,
    expected: &[f64],
) -> AggregateReport {
    type Buckets = BTreeMap<i64, (Vec<f64>, Vec<f64>)>;
    let mut groups: BTreeMap<GroupKey, Buckets> = BTreeMap::new();
    let mut skipped = 0;
    for j in store.judgments().filter(|j| filter.accepts(j)) {
        let (group, lambda_f, lambda_h) = match group_by {
            GroupBy::Global => (GroupKey::Global, j.stimulus.lambda_f, j.lambda_h),
            GroupBy::Stimulus => (
                GroupKey::Stimulus(j.stimulus.pair_id.clone()),
                j.stimulus.lambda_f,
                j.lambda_h,
            ),
            GroupBy::ClassPair => match store.pair(&j.stimulus.pair_id) {
                Some(p) => {
                    let (lo, hi) = p.class_pair();
                    if p.is_reversed() {
                        (
                            GroupKey::ClassPair(lo, hi),
                            1.0 - j.stimulus.lambda_f,
                            1.0 - j.lambda_h,
                        )
                    } else {
                        (GroupKey::ClassPair(lo, hi), j.stimulus.lambda_f, j.lambda_h)
                    }
                }
                None => {
                    skipped += 1;
                    continue;
                }
            },
        };
        let bucket = groups
            .entry(group)
            .or_default()
            .entry(coefficient_key(lambda_f))
            .or_default();
        bucket.0.push(lambda_h);
        if let Some(c) = j.confidence {
            bucket.1.push(c);
        }
    }

    let curves = groups
        .into_iter()
        .map(|(group, buckets)| {
            let missing = expected
                .iter()
                .copied()
                .filter(|e| !buckets.contains_key(&coefficient_key(*e)))
                .collect();
            let buckets = buckets
                .into_iter()
                .map(|(k, (relabels, confs))| BucketStats {
                    lambda_f: key_value(k),
                    relabel: Summary::of(&relabels).expect("bucket has samples"),
                    confidence: Summary::of(&confs),
                })
                .collect();
            AggregateCurve {
                group,
                buckets,
                missing,
            }
        })
        .collect();
    AggregateReport { curves, skipped }
}

/// Reported confidence grouped by how extreme the generating coefficient is.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfidenceRow {
    /// `min(lambda_f, 1 - lambda_f)`: 0.1 stands for both 0.1 and 0.9.
    pub coefficient: f64,
    /// `|0.5 - lambda_f|`.
    pub distance: f64,
    pub confidence: Summary,
}

/// Confidence by coefficient, folding `lambda_f` and `1 - lambda_f` together.
/// Rows are ordered from the most extreme coefficient to the midpoint.
pub fn confidence_by_coefficient(store: &HmixStore, filter: &JudgmentFilter) -> Vec<ConfidenceRow> {
    let mut by_distance: BTreeMap<i64, Vec<f64>> = BTreeMap::new();
    for j in store.judgments().filter(|j| filter.accepts(j)) {
        if let Some(c) = j.confidence {
            let d = coefficient_key((0.5 - j.stimulus.lambda_f).abs());
            by_distance.entry(d).or_default().push(c);
        }
    }
    by_distance
        .into_iter()
        .rev()
        .map(|(d, confs)| ConfidenceRow {
            coefficient: key_value(coefficient_key(0.5) - d),
            distance: key_value(d),
            confidence: Summary::of(&confs).expect("nonempty"),
        })
        .collect()
}

/// Pairs whose central selection deviates from the midpoint by at least a threshold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HighRelabelReport {
    pub threshold: f64,
    pub tendency: CentralTendency,
    /// Interface label to the central selection of every pair it saw.
    pub central: BTreeMap<String, BTreeMap<String, f64>>,
    /// Interface label to its flagged pairs.
    pub per_interface: BTreeMap<String, Vec<String>>,
    /// Pairs flagged under every interface present.
    pub across: Vec<String>,
    /// Pairs flagged under at least one interface.
    pub any: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FlagOptions {
    pub threshold: f64,
    pub tendency: CentralTendency,
    /// Treat both construct start conditions as one interface.
    pub pool_construct: bool,
}

impl Default for FlagOptions {
    fn default() -> Self {
        FlagOptions {
            threshold: 0.15,
            tendency: CentralTendency::Mean,
            pool_construct: true,
        }
    }
}

/// Whether a central selection counts as highly relabeled.
pub fn is_high_relabel(central: f64, threshold: f64) -> bool {
    let deviation = (central - 0.5).abs();
    deviation > 0.0 && deviation >= threshold
}

/// Flags midpoint-selection pairs with `|lambda_h - 0.5| >= threshold`.
pub fn flag_high_relabel(store: &HmixStore, opts: FlagOptions) -> HighRelabelReport {
    let mut selections: BTreeMap<String, BTreeMap<String, Vec<f64>>> = BTreeMap::new();
    for j in store
        .judgments()
        .filter(|j| j.interface.is_midpoint_selection() && j.repeat_of.is_none())
    {
        selections
            .entry(j.interface.group_label(opts.pool_construct).to_string())
            .or_default()
            .entry(j.stimulus.pair_id.clone())
            .or_default()
            .push(j.lambda_h);
    }

    let central: BTreeMap<String, BTreeMap<String, f64>> = selections
        .into_iter()
        .map(|(iface, pairs)| {
            let c = pairs
                .into_iter()
                .map(|(pair, v)| (pair, opts.tendency.apply(&v).expect("nonempty")))
                .collect();
            (iface, c)
        })
        .collect();

    let per_interface: BTreeMap<String, Vec<String>> = central
        .iter()
        .map(|(iface, pairs)| {
            let flagged = pairs
                .iter()
                .filter(|(_, c)| is_high_relabel(**c, opts.threshold))
                .map(|(p, _)| p.clone())
                .collect();
            (iface.clone(), flagged)
        })
        .collect();

    let any: BTreeSet<String> = per_interface.values().flatten().cloned().collect();
    let across = any
        .iter()
        .filter(|p| per_interface.values().all(|flagged| flagged.contains(p)))
        .cloned()
        .collect();

    HighRelabelReport {
        threshold: opts.threshold,
        tendency: opts.tendency,
        central,
        per_interface,
        across,
        any: any.into_iter().collect(),
    }
}

/// Counts of selected coefficients per interface (non-repeat trials).
pub fn selection_histogram(store: &HmixStore, pool_construct: bool) -> BTreeMap<String, Vec<(f64, usize)>> {
    let mut counts: BTreeMap<String, BTreeMap<i64, usize>> = BTreeMap::new();
    for j in store
        .judgments()
        .filter(|j| j.interface.is_midpoint_selection() && j.repeat_of.is_none())
    {
        *counts
            .entry(j.interface.group_label(pool_construct).to_string())
            .or_default()
            .entry(coefficient_key(j.lambda_h))
            .or_default() += 1;
    }
    counts
        .into_iter()
        .map(|(iface, c)| (iface, c.into_iter().map(|(k, n)| (key_value(k), n)).collect()))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepeatConsistency {
    pub n_repeats: usize,
    pub median_lambda_diff: f64,
    pub median_confidence_diff: Option<f64>,
}

/// Median absolute change between each repeat trial and its original, per
/// interface kind. Sessions without repeats contribute nothing.
pub fn repeat_consistency(store: &HmixStore) -> BTreeMap<InterfaceKind, RepeatConsistency> {
    let mut diffs: HashMap<InterfaceKind, (Vec<f64>, Vec<f64>)> = HashMap::new();
    for j in store.judgments() {
        let Some(orig_trial) = j.repeat_of else {
            continue;
        };
        let key = RecordKey::Response {
            participant_id: j.participant_id.clone(),
            session_id: j.session_id.clone(),
            trial_index: orig_trial,
        };
        let Some(super::record::Record::Judgment(orig)) = store.get(&key) else {
            continue;
        };
        let entry = diffs.entry(j.interface).or_default();
        entry.0.push((j.lambda_h - orig.lambda_h).abs());
        if let (Some(a), Some(b)) = (j.confidence, orig.confidence) {
            entry.1.push((a - b).abs());
        }
    }
    diffs
        .into_iter()
        .map(|(kind, (lam, conf))| {
            (
                kind,
                RepeatConsistency {
                    n_repeats: lam.len(),
                    median_lambda_diff: CentralTendency::Median.apply(&lam).expect("nonempty"),
                    median_confidence_diff: CentralTendency::Median.apply(&conf),
                },
            )
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hmix::record::{PairInfo, Record, StimulusRef};

    fn infer(participant: &str, trial: u32, pair: &str, lf: f64, lh: f64, conf: f64) -> Record {
        Record::Judgment(Judgment {
            participant_id: participant.into(),
            session_id: format!("s-{participant}"),
            trial_index: trial,
            stimulus: StimulusRef {
                pair_id: pair.into(),
                lambda_f: lf,
            },
            interface: InterfaceKind::InferCoefficient,
            lambda_h: lh,
            confidence: Some(conf),
            repeat_of: None,
            response_ms: 100,
        })
    }

    #[test]
    fn percentiles_interpolate_linearly() {
        let s = Summary::of(&[0.7, 0.3, 0.5]).unwrap();
        assert!((s.median - 0.5).abs() < 1e-12);
        assert!((s.p25 - 0.4).abs() < 1e-12);
        assert!((s.p75 - 0.6).abs() < 1e-12);
        let s = Summary::of(&[0.42]).unwrap();
        assert_eq!((s.median, s.p25, s.p75, s.sd), (0.42, 0.42, 0.42, 0.0));
    }

    #[test]
    fn aggregation_by_class_pair_orients_to_lower_class() {
        let store = HmixStore::from_records([
            Record::Pair(PairInfo {
                pair_id: "a".into(),
                endpoint_a_id: "i1".into(),
                endpoint_b_id: "i2".into(),
                class_a: 5,
                class_b: 2,
            }),
            infer("u", 0, "a", 0.25, 0.2, 0.9),
            infer("u", 1, "missing", 0.25, 0.2, 0.9),
        ])
        .unwrap();
        let report = aggregate_relabelings(
            &store,
            GroupBy::ClassPair,
            &JudgmentFilter::default(),
            &[0.25, 0.75],
        );
        assert_eq!(report.skipped, 1);
        let curve = &report.curves[0];
        assert_eq!(curve.group, GroupKey::ClassPair(2, 5));
        assert_eq!(curve.buckets[0].lambda_f, 0.75);
        assert!((curve.buckets[0].relabel.median - 0.8).abs() < 1e-12);
        assert_eq!(curve.missing, vec![0.25]);
    }

    #[test]
    fn empty_selection_gives_empty_report() {
        let report = aggregate_relabelings(
            &HmixStore::new(),
            GroupBy::Global,
            &JudgmentFilter::default(),
            &[],
        );
        assert!(report.curves.is_empty());
    }

    #[test]
    fn high_relabel_threshold_edges() {
        assert!(is_high_relabel(0.7, 0.15));
        assert!(!is_high_relabel(0.6, 0.15));
        assert!(is_high_relabel(0.65, 0.15));
        assert!(is_high_relabel(0.35, 0.15));
        assert!(!is_high_relabel(0.5, 0.0));
        assert!(is_high_relabel(0.51, 0.0));
        assert!(!is_high_relabel(1.0, 0.5000001));
    }

    #[test]
    fn confidence_rows_fold_symmetric_coefficients() {
        let store = HmixStore::from_records([
            infer("u", 0, "a", 0.1, 0.1, 0.8),
            infer("u", 1, "b", 0.9, 0.9, 0.6),
            infer("u", 2, "c", 0.5, 0.5, 0.5),
        ])
        .unwrap();
        let rows = confidence_by_coefficient(&store, &JudgmentFilter::default());
        assert_eq!(rows.len(), 2);
        assert_eq!(rows[0].coefficient, 0.1);
        assert_eq!(rows[0].confidence.n, 2);
        assert!((rows[0].confidence.mean - 0.7).abs() < 1e-12);
        assert_eq!(rows[1].coefficient, 0.5);
        assert_eq!(rows[1].distance, 0.0);
    }

    #[test]
    fn repeat_consistency_single_pair() {
        let mut repeat = infer("u", 5, "a", 0.5, 0.6, 0.5);
        if let Record::Judgment(j) = &mut repeat {
            j.repeat_of = Some(0);
        }
        let store =
            HmixStore::from_records([infer("u", 0, "a", 0.5, 0.5, 0.5), repeat]).unwrap();
        let rc = repeat_consistency(&store);
        let r = &rc[&InterfaceKind::InferCoefficient];
        assert_eq!(r.n_repeats, 1);
        assert!((r.median_lambda_diff - 0.1).abs() < 1e-12);
        assert_eq!(r.median_confidence_diff, Some(0.0));
        assert!(repeat_consistency(&HmixStore::new()).is_empty());
    }
}
