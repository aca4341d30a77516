//! Corpora, identity-disjoint splits, the synthetic generator and metrics.

pub mod corpus;
pub mod metrics;
pub mod split;
pub mod synth;

pub use corpus::{label_name, load_corpus, parse_label, Sample};
pub use metrics::{evaluate, EvalReport};
pub use split::{split_by_identity, SplitSamples, SplitSpec};
pub use synth::{synth_corpus, synth_fingerprint, synth_impression, SynthClass, SynthCorpusSpec, SynthParams, SynthSample};
