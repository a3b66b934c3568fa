//! The `hmix-v1` line format.
//!
//! The first non-comment line is the header `hmix-v1`. Every following line
//! is one tab-separated record whose first field names its type. Reals are
//! written as shortest round-trip decimal strings, so a write/read cycle is
//! bit-exact. `-` marks an absent optional field. Lines starting with `#` and
//! blank lines are ignored.
//!
//! | type        | fields after the tag |
//! |-------------|----------------------|
//! | `pair`      | pair_id, endpoint_a_id, endpoint_b_id, class_a, class_b |
//! | `judgment`  | participant_id, session_id, trial_index, pair_id, lambda_f, interface_kind, lambda_h, confidence, repeat_of, response_ms |
//! | `softlabel` | participant_id, session_id, trial_index, pair_id, lambda_f, top1_class, top1_prob, top2_class, top2_prob, ruled_out, response_ms |
//!
//! `ruled_out` is a comma-separated class list.

use std::io::{BufRead, Write};
use std::str::FromStr;

use crate::error::{Error, Result};

use super::record::{ClassReport, InterfaceKind, Judgment, PairInfo, Record, SoftLabelJudgment, StimulusRef};

pub const HEADER: &str = "hmix-v1";

const ABSENT: &str = "-";

fn opt<T: ToString>(v: Option<T>) -> String {
    v.map_or_else(|| ABSENT.to_string(), |v| v.to_string())
}

/// Renders one record as a single line, without the trailing newline.
pub fn format_record(record: &Record) -> String {
    match record {
        Record::Pair(p) => format!(
            "pair\t{}\t{}\t{}\t{}\t{}",
            p.pair_id, p.endpoint_a_id, p.endpoint_b_id, p.class_a, p.class_b
        ),
        Record::Judgment(j) => format!(
            "judgment\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}",
            j.participant_id,
            j.session_id,
            j.trial_index,
            j.stimulus.pair_id,
            j.stimulus.lambda_f,
            j.interface,
            j.lambda_h,
            opt(j.confidence),
            opt(j.repeat_of),
            j.response_ms
        ),
        Record::SoftLabel(s) => {
            let ruled = if s.ruled_out.is_empty() {
                ABSENT.to_string()
            } else {
                s.ruled_out
                    .iter()
                    .map(|c| c.to_string())
                    .collect::<Vec<_>>()
                    .join(",")
            };
            format!(
                "softlabel\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}",
                s.participant_id,
                s.session_id,
                s.trial_index,
                s.stimulus.pair_id,
                s.stimulus.lambda_f,
                s.top1.class,
                s.top1.prob,
                opt(s.top2.map(|t| t.class)),
                opt(s.top2.map(|t| t.prob)),
                ruled,
                s.response_ms
            )
        }
    }
}

pub fn write_records<'a, W: Write>(
    mut out: W,
    records: impl IntoIterator<Item = &'a Record>,
) -> Result<()> {
    writeln!(out, "{HEADER}")?;
    for r in records {
        writeln!(out, "{}", format_record(r))?;
    }
    out.flush()?;
    Ok(())
}

struct Fields<'a> {
    parts: std::str::Split<'a, char>,
    line: usize,
}

impl<'a> Fields<'a> {
    fn next_str(&mut self, name: &str) -> Result<&'a str> {
        self.parts.next().ok_or_else(|| Error::Parse {
            line: self.line,
            reason: format!("missing field `{name}`"),
        })
    }

    fn next<T: FromStr>(&mut self, name: &str) -> Result<T> {
        let raw = self.next_str(name)?;
        raw.parse().map_err(|_| Error::Parse {
            line: self.line,
            reason: format!("field `{name}`: cannot parse `{raw}`"),
        })
    }

    fn next_opt<T: FromStr>(&mut self, name: &str) -> Result<Option<T>> {
        let raw = self.next_str(name)?;
        if raw == ABSENT {
            return Ok(None);
        }
        raw.parse().map(Some).map_err(|_| Error::Parse {
            line: self.line,
            reason: format!("field `{name}`: cannot parse `{raw}`"),
        })
    }

    fn finish(mut self) -> Result<()> {
        match self.parts.next() {
            None => Ok(()),
            Some(extra) => Err(Error::Parse {
                line: self.line,
                reason: format!("unexpected trailing field `{extra}`"),
            }),
        }
    }
}

/// Parses one record line; `line` is used only for error messages.
pub fn parse_record(text: &str, line: usize) -> Result<Record> {
    let mut f = Fields {
        parts: text.split('\t'),
        line,
    };
    let tag = f.next_str("type")?;
    let record = match tag {
        "pair" => Record::Pair(PairInfo {
            pair_id: f.next("pair_id")?,
            endpoint_a_id: f.next("endpoint_a_id")?,
            endpoint_b_id: f.next("endpoint_b_id")?,
            class_a: f.next("class_a")?,
            class_b: f.next("class_b")?,
        }),
        "judgment" => Record::Judgment(Judgment {
            participant_id: f.next("participant_id")?,
            session_id: f.next("session_id")?,
            trial_index: f.next("trial_index")?,
            stimulus: StimulusRef {
                pair_id: f.next("pair_id")?,
                lambda_f: f.next("lambda_f")?,
            },
            interface: f.next::<InterfaceKind>("interface_kind")?,
            lambda_h: f.next("lambda_h")?,
            confidence: f.next_opt("confidence")?,
            repeat_of: f.next_opt("repeat_of")?,
            response_ms: f.next("response_ms")?,
        }),
        "softlabel" => {
            let participant_id = f.next("participant_id")?;
            let session_id = f.next("session_id")?;
            let trial_index = f.next("trial_index")?;
            let stimulus = StimulusRef {
                pair_id: f.next("pair_id")?,
                lambda_f: f.next("lambda_f")?,
            };
            let top1 = ClassReport {
                class: f.next("top1_class")?,
                prob: f.next("top1_prob")?,
            };
            let top2 = match (f.next_opt("top2_class")?, f.next_opt("top2_prob")?) {
                (Some(class), Some(prob)) => Some(ClassReport { class, prob }),
                (None, None) => None,
                _ => {
                    return Err(Error::Parse {
                        line,
                        reason: "top2_class and top2_prob must both be present or absent".into(),
                    })
                }
            };
            let raw = f.next_str("ruled_out")?;
            let ruled_out = if raw == ABSENT {
                Default::default()
            } else {
                raw.split(',')
                    .map(|c| {
                        c.parse().map_err(|_| Error::Parse {
                            line,
                            reason: format!("field `ruled_out`: cannot parse `{c}`"),
                        })
                    })
                    .collect::<Result<_>>()?
            };
            Record::SoftLabel(SoftLabelJudgment {
                participant_id,
                session_id,
                trial_index,
                stimulus,
                top1,
                top2,
                ruled_out,
                response_ms: f.next("response_ms")?,
            })
        }
        other => {
            return Err(Error::Parse {
                line,
                reason: format!("unknown record type `{other}`"),
            })
        }
    };
    f.finish()?;
    record.validate().map_err(|e| Error::Parse {
        line,
        reason: e.to_string(),
    })?;
    Ok(record)
}

/// Reads a whole file, returning records with their 1-based line numbers.
pub fn read_records<R: BufRead>(input: R) -> Result<Vec<(usize, Record)>> {
    let mut header_seen = false;
    let mut out = Vec::new();
    for (i, line) in input.lines().enumerate() {
        let line_no = i + 1;
        let line = line?;
        let text = line.strip_suffix('\r').unwrap_or(&line);
        if text.trim().is_empty() || text.starts_with('#') {
            continue;
        }
        if !header_seen {
            if text != HEADER {
                return Err(Error::Version {
                    found: text.to_string(),
                    expected: HEADER.to_string(),
                });
            }
            header_seen = true;
            continue;
        }
        out.push((line_no, parse_record(text, line_no)?));
    }
    if !header_seen {
        return Err(Error::Parse {
            line: 1,
            reason: format!("missing `{HEADER}` header"),
        });
    }
    Ok(out)
}
