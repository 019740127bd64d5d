//! Dataset ingestion, C function extraction, and bimodal input preparation.

mod extract;
pub mod lexer;
mod prepare;
mod record;

pub use extract::{extract_functions, strip_internal_comments};
pub use prepare::{full_comment_text, prepare_input, prepare_record, InputMode, PreparedInput, PreparedRecord};
pub use record::{
    ingest_dataset, parse_jsonl, thousands, to_jsonl, write_atomic, write_dataset, DatasetFormat, Demographics,
    FunctionRecord,
};
