//! Caption distinctiveness toolkit: CIDEr-D scoring, similar-image sets,
//! the between-set CIDEr (CIDErBtw) metric and caption reweighting artifacts.

pub mod corpus;
pub mod distinct;
pub mod error;
pub mod fixed;
pub mod ngram;
pub mod simset;
pub mod synth;
pub mod weights;

pub use corpus::{
    build_vocab_stats, load_corpus, load_split, tokenize, Caption, Corpus, ImageId, Split,
    VocabStats,
};
pub use distinct::{cider_btw, evaluate, EvalOptions, EvalReport, GeneratedCaptions};
pub use error::{Error, Result};
pub use ngram::{
    build_df, cider_d, pair_score, tfidf_vector, CiderVariant, DfTable, NGram, TfIdfVector,
};
pub use simset::{
    build_sets_cider, build_sets_random, CiderIndex, EmbeddingTable, SimilarSet, SimilarSets,
    Strategy,
};
pub use weights::{caption_weights, ltw_weight, CaptionWeights, Hyperparams, LtwParams};
