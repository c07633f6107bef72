//! Function-calling data toolkit: a canonical representation for function
//! calls and specs, a parser/renderer for tagged model output, derivation of
//! the seven training tasks from gold call sequences, weighted mixture
//! assembly with byte-exact prompt templates, and the evaluation metric
//! suite (F1, LCS alignment, exact match, hallucination, relevance, ROUGE-L,
//! BLEU) with per-dataset reporting.

pub mod endpoint;
pub mod evaluate;
pub mod ingest;
pub mod jsonl;
pub mod manifest;
pub mod metrics;
pub mod mixture;
pub mod model;
pub mod parser;
pub mod render;
pub mod report;
pub mod taskgen;
pub mod validate;

pub use model::{FunctionCall, FunctionSpec, Sample, TaskKind};
pub use parser::{parse_call_sequence, ParseMode, ParseResult};
pub use render::render_call_sequence;
pub use report::EvalReport;
