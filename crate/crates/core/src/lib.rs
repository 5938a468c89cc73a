//! Toolkit for building and evaluating conversational programming assistants.
//!
//! The crate covers everything around the model itself:
//!
//! * [`edit_codec`]: minimal line diffs and the WF / UD / LC / SR change formats.
//! * [`conversation`]: system/history/current/user/assistant messages and their template.
//! * [`llm_client`]: chat-completions transport with retries and record/replay cassettes.
//! * [`pipeline`]: turns coding-process records into typed training samples.
//! * [`packing`]: first-fit-decreasing packing of samples into fixed-size batches.
//! * [`apeval`]: benchmark loading, prompting and Pass@1 reporting.
//! * [`runner`]: the JSON job protocol for the sandboxed test executor.

pub mod apeval;
pub mod conversation;
pub mod edit_codec;
pub mod llm_client;
pub mod packing;
pub mod pipeline;
pub mod prompts;
pub mod runner;

pub use edit_codec::{
    apply_edit, diff, number_lines, parse_edit, render_edit, ChangeHunk, EditError, EditFormat,
    EditScript, RenderedEdit, TextDocument,
};
