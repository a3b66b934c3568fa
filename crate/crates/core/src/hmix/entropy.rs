//! Endpoint ambiguity from per-image annotation frequencies.

use std::collections::BTreeMap;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::record::StimulusRef;
use super::store::HmixStore;

/// Shannon entropy (nats) of normalized annotation counts.
pub fn label_entropy(counts: &[u64]) -> Result<f64> {
    let total: u64 = counts.iter().sum();
    if total == 0 {
        return Err(Error::field("counts", "all counts are zero"));
    }
    let total = total as f64;
    Ok(-counts
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / total;
            p * p.ln()
        })
        .sum::<f64>())
}

/// Per-image class annotation counts.
///
/// Text form: a header `image_id,count_0,...,count_{K-1}` followed by one
/// comma-separated row per image.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct LabelFrequencyTable {
    num_classes: usize,
    counts: BTreeMap<String, Vec<u64>>,
}

impl LabelFrequencyTable {
    pub fn new(num_classes: usize) -> Self {
        LabelFrequencyTable {
            num_classes,
            counts: BTreeMap::new(),
        }
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn insert(&mut self, image_id: impl Into<String>, counts: Vec<u64>) -> Result<()> {
        if counts.len() != self.num_classes {
            return Err(Error::ClassCount {
                left: counts.len(),
                right: self.num_classes,
            });
        }
        if counts.iter().all(|&c| c == 0) {
            return Err(Error::field("counts", "image has no positive count"));
        }
        self.counts.insert(image_id.into(), counts);
        Ok(())
    }

    pub fn get(&self, image_id: &str) -> Option<&[u64]> {
        self.counts.get(image_id).map(Vec::as_slice)
    }

    pub fn entropy(&self, image_id: &str) -> Option<f64> {
        self.get(image_id).map(|c| label_entropy(c).expect("validated on insert"))
    }

    pub fn len(&self) -> usize {
        self.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &[u64])> {
        self.counts.iter().map(|(k, v)| (k.as_str(), v.as_slice()))
    }

    pub fn read<R: BufRead>(input: R) -> Result<Self> {
        let mut lines = input.lines().enumerate();
        let header = loop {
            match lines.next() {
                Some((_, l)) => {
                    let l = l?;
                    if !l.trim().is_empty() {
                        break l;
                    }
                }
                None => {
                    return Err(Error::Parse {
                        line: 1,
                        reason: "missing header".into(),
                    })
                }
            }
        };
        let cols: Vec<&str> = header.trim().split(',').collect();
        if cols.first() != Some(&"image_id") || cols.len() < 2 {
            return Err(Error::Parse {
                line: 1,
                reason: "header must be `image_id,count_0,...`".into(),
            });
        }
        let mut table = LabelFrequencyTable::new(cols.len() - 1);
        for (i, line) in lines {
            let line_no = i + 1;
            let line = line?;
            let text = line.trim();
            if text.is_empty() {
                continue;
            }
            let mut fields = text.split(',');
            let id = fields.next().unwrap_or_default().to_string();
            let counts = fields
                .map(|f| {
                    f.trim().parse::<u64>().map_err(|_| Error::Parse {
                        line: line_no,
                        reason: format!("bad count `{f}`"),
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            table.insert(id, counts).map_err(|e| Error::Parse {
                line: line_no,
                reason: e.to_string(),
            })?;
        }
        Ok(table)
    }

    pub fn write<W: Write>(&self, mut out: W) -> Result<()> {
        let header: Vec<String> = (0..self.num_classes).map(|k| format!("count_{k}")).collect();
        writeln!(out, "image_id,{}", header.join(","))?;
        for (id, counts) in &self.counts {
            let row: Vec<String> = counts.iter().map(u64::to_string).collect();
            writeln!(out, "{id},{}", row.join(","))?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EntropyBucket {
    BothHigh,
    BothLow,
    Mixed,
}

impl EntropyBucket {
    pub fn classify(entropy_a: f64, entropy_b: f64, high: f64, low: f64) -> Self {
        if entropy_a >= high && entropy_b >= high {
            EntropyBucket::BothHigh
        } else if entropy_a <= low && entropy_b <= low {
            EntropyBucket::BothLow
        } else {
            EntropyBucket::Mixed
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            EntropyBucket::BothHigh => "both-high",
            EntropyBucket::BothLow => "both-low",
            EntropyBucket::Mixed => "mixed",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntropyBucketRow {
    pub n: usize,
    pub mean_confidence: f64,
    /// Mean of `|lambda_h - lambda_f|`.
    pub mean_abs_relabel: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct EntropyBucketReport {
    pub rows: BTreeMap<EntropyBucket, EntropyBucketRow>,
    /// Judgments whose pair or endpoint frequencies were unavailable.
    pub skipped: Vec<StimulusRef>,
}

/// Confidence and relabeling split by endpoint entropy. Only judgments that
/// carry a confidence are used.
pub fn entropy_bucket_analysis(
    store: &HmixStore,
    table: &LabelFrequencyTable,
    high: f64,
    low: f64,
) -> EntropyBucketReport {
    let mut acc: BTreeMap<EntropyBucket, (Vec<f64>, Vec<f64>)> = BTreeMap::new();
    let mut skipped = Vec::new();
    for j in store.judgments().filter(|j| j.repeat_of.is_none()) {
        let Some(conf) = j.confidence else { continue };
        let entropies = store.pair(&j.stimulus.pair_id).and_then(|p| {
            Some((table.entropy(&p.endpoint_a_id)?, table.entropy(&p.endpoint_b_id)?))
        });
        let Some((ea, eb)) = entropies else {
            skipped.push(j.stimulus.clone());
            continue;
        };
        let e = acc
            .entry(EntropyBucket::classify(ea, eb, high, low))
            .or_default();
        e.0.push(conf);
        e.1.push((j.lambda_h - j.stimulus.lambda_f).abs());
    }
    let mean = |v: &mut Vec<f64>| {
        v.sort_by(f64::total_cmp);
        v.iter().sum::<f64>() / v.len() as f64
    };
    let rows = acc
        .into_iter()
        .map(|(bucket, (mut conf, mut relabel))| {
            (
                bucket,
                EntropyBucketRow {
                    n: conf.len(),
                    mean_confidence: mean(&mut conf),
                    mean_abs_relabel: mean(&mut relabel),
                },
            )
        })
        .collect();
    EntropyBucketReport { rows, skipped }
}
