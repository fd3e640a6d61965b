//! Shared fixtures for the criterion benches.

use ciderbtw_core::ngram::{build_df, DfTable};
use ciderbtw_core::synth::{zipf_corpus, SynthConfig};
use ciderbtw_core::{Corpus, Split};

/// Topic-structured Zipf corpus of `images` training images, 5 references each.
pub fn corpus(images: usize) -> (Corpus, DfTable) {
    let corpus = zipf_corpus(&SynthConfig::with_images(images)).expect("synthetic corpus");
    let df = build_df(&corpus, Split::Train).expect("document frequencies");
    (corpus, df)
}
