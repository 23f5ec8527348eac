//! Disfluency detection for speech transcripts: a noisy-channel model
//! proposes n-best analyses, n-gram and LSTM language models score their
//! fluent strings, and a log-linear reranker picks one.

pub mod channel;
pub mod corpus;
pub mod lm;
pub mod ngram;
pub mod lstm;
pub mod features;
pub mod eval;
pub mod reranker;
pub mod pipeline;
