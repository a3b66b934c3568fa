//! The H-Mix judgment corpus: records, the `hmix-v1` file format, an
//! append-only store and the analyses run over it.

pub mod analysis;
pub mod entropy;
pub mod format;
pub mod record;
pub mod store;

pub use analysis::{
    aggregate_relabelings, confidence_by_coefficient, flag_high_relabel, repeat_consistency,
    selection_histogram, AggregateCurve, AggregateReport, BucketStats, CentralTendency,
    ConfidenceRow, FlagOptions, GroupBy, GroupKey, HighRelabelReport, JudgmentFilter,
    RepeatConsistency, Summary,
};
pub use entropy::{
    entropy_bucket_analysis, label_entropy, EntropyBucket, EntropyBucketReport, EntropyBucketRow,
    LabelFrequencyTable,
};
pub use record::{
    ClassReport, InterfaceKind, Judgment, PairInfo, Record, RecordKey, SoftLabelJudgment,
    StimulusRef,
};
pub use format::{format_record, parse_record, read_records, write_records, HEADER};
pub use store::{export_hmix, import_hmix, read_store, Appended, HmixStore};
