//! promptdiv measures how much prompt-template structure suppresses the
//! output diversity of instruction-tuned language models.
//!
//! The pipeline: render one instruction under structurally different
//! prompt modes, sample k completions per prompt from an
//! OpenAI-compatible endpoint, then score the response sets with a
//! battery of diversity metrics (semantic, topic, structural, lexical,
//! decoding entropy) and compare modes with collapse verdicts.

pub mod cache;
pub mod cli;
pub mod config;
pub mod corpus;
pub mod embedclient;
pub mod error;
pub mod genclient;
pub mod labeling;
pub mod metrics;
pub mod net;
pub mod protocol;
pub mod report;
pub mod templates;

pub use error::{Error, Result};
