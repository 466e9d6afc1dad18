//! Evaluation and ensembling harness for visual-dialog emotion explanation.
//!
//! The crate is model-agnostic: models live outside and talk to the harness
//! through line-delimited JSON files. The pieces are
//!
//! - [`dataset`]: record loading, validation and seeded fold splitting,
//! - [`prompting`]: the LM / LVLM instruction templates and their inverse parsers,
//! - [`metrics`]: weighted F1, corpus BLEU and the leaderboard total score,
//! - [`ensemble`]: hard voting and explanation-source selection,
//! - [`report`]: score tables, CSV/Markdown export and run metadata.

pub mod dataset;
pub mod ensemble;
pub mod jsonl;
pub mod metrics;
pub mod prompting;
pub mod report;

pub use dataset::{DialogRecord, DialogTurn, FoldAssignment, Speaker};
pub use ensemble::{EnsembleConfig, ExplanationSource, TieBreak};
pub use metrics::{MetricReport, Smoothing};
pub use prompting::{ParseMode, Prediction, PromptPair, Template};
