//! Event parsing, row assembly, and numeric encoding.

mod event_file;
mod keyfile;
mod rows;
mod schema;

pub use event_file::{parse_event_file, serialize_event_file};
pub use keyfile::{
    parse_ground_truth, parse_key_file, parse_output_file, render_ground_truth, render_key_file,
    render_output_file, KeyEntry, OutputEntry,
};
pub use rows::{assemble_rows, FeatureRow, ANGLES};
pub use schema::{
    fit_schema, EncodingSchema, FeatureMask, FeatureVector, NumericStat, NUMERIC_FEATURES,
    UNKNOWN,
};
