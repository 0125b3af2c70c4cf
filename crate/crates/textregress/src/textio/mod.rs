//! Text serialization of studies and custom float tokenization of metrics.
//!
//! The prompt side is plain text (`x` rendered as key-value pairs joined to
//! the metadata string with `&`); the response side is a short sequence of
//! custom float tokens with a fixed per-position grammar, so constrained
//! decoding always yields a parseable number.

mod anonymize;
mod float;
mod serialize;
mod vocab;

pub use anonymize::{anonymize_study, AnonymizeMode};
pub use float::{FloatToken, FloatTokenization, TokenScheme};
pub use serialize::{render_prompt, serialize_m, serialize_x, PROMPT_SEPARATOR};
pub use vocab::{build_vocabulary, Vocabulary, DEFAULT_VOCAB_SIZE, EOS_ID, PAD_ID, UNK_ID};
