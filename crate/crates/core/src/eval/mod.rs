//! Metrics and the reconstruction studies.

mod export;
mod metrics;
mod study;

pub use export::{
    export, export_timings, read_report, Format, FIELD_HEADER, PROFILE_HEADER, SUMMARY_HEADER, TRACKING_HEADER,
};
pub use metrics::r2;
pub use study::{
    balanced_k, run_study, CaseResult, CaseSpec, FieldPoint, StepResult, StudyContext, StudyKind, StudyReport,
    StudySpec, StudyTimings, TrackingSample, TrackingSeries, REPORT_SCHEMA_VERSION, TRACK_A, TRACK_B,
};
