use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::Serialize;

use super::{cider_btw_vector, recall_at_k, GeneratedCaptions};
use crate::corpus::{Corpus, ImageId, Split};
use crate::error::{list_offenders, Error, Result};
use crate::fixed::{fmt6, Fixed6};
use crate::ngram::{cider_d, tfidf_vector, CiderVariant, DfTable};
use crate::simset::{EmbeddingTable, ReferenceVectors, SimilarSet, SimilarSets};

/// Multiplier from raw `[0, 10]` CIDEr to the percentage-style numbers
/// captioning results are usually quoted in (raw 1.2513 -> 125.13).
pub const DISPLAY_SCALE: f64 = 100.0;

/// Recall levels reported when embeddings are available.
pub const RECALL_LEVELS: [usize; 3] = [1, 5, 10];

#[derive(Debug, Clone, Copy)]
pub struct EvalOptions {
    pub split: Split,
    /// Use only the first `k` neighbors of each set; all of them when `None`.
    pub k: Option<usize>,
    pub variant: CiderVariant,
}

impl Default for EvalOptions {
    fn default() -> Self {
        EvalOptions {
            split: Split::Test,
            k: Some(5),
            variant: CiderVariant::default(),
        }
    }
}

/// Image embeddings of the evaluation split plus one embedding per generated caption.
#[derive(Debug, Clone, Copy)]
pub struct RetrievalInputs<'a> {
    pub images: &'a EmbeddingTable,
    pub generated: &'a EmbeddingTable,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ImageEval {
    pub image_id: ImageId,
    pub cider: f64,
    pub cider_btw: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub split: Split,
    pub variant: CiderVariant,
    pub k: usize,
    pub images: Vec<ImageEval>,
    pub mean_cider: f64,
    pub mean_cider_btw: f64,
    pub vocab_size: usize,
    /// R@k by k; empty without embeddings.
    pub recall: BTreeMap<usize, f64>,
}

fn mean(values: impl Iterator<Item = f64>) -> f64 {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}

/// Scores every generated caption against its own references (CIDEr) and
/// against the references of its similar set (CIDErBtw).
pub fn evaluate(
    generated: &GeneratedCaptions,
    corpus: &Corpus,
    sets: &SimilarSets,
    df: &DfTable,
    retrieval: Option<RetrievalInputs<'_>>,
    opts: EvalOptions,
) -> Result<EvalReport> {
    if generated.is_empty() {
        return Err(Error::validation("no generated captions"));
    }
    generated.check_ids_in(corpus, opts.split)?;
    let ids: Vec<ImageId> = generated.iter().map(|(id, _)| id).collect();
    let missing: Vec<ImageId> = ids
        .iter()
        .copied()
        .filter(|id| !sets.contains_key(id))
        .collect();
    if !missing.is_empty() {
        return Err(Error::validation(format!(
            "no similar set for images: {}",
            list_offenders(&missing, 20)
        )));
    }

    let mut chosen: Vec<SimilarSet> = Vec::with_capacity(ids.len());
    for id in &ids {
        let set = &sets[id];
        let k = opts.k.unwrap_or(set.k());
        if k == 0 || set.k() < k {
            return Err(Error::validation(format!(
                "similar set of image {id} has {} neighbors, need {k}",
                set.k()
            )));
        }
        chosen.push(set.truncated(k));
    }
    let k = chosen[0].k();
    if chosen.iter().any(|s| s.k() != k) {
        return Err(Error::validation(
            "similar sets differ in size; pass an explicit K",
        ));
    }

    let mut needed: Vec<ImageId> = ids.clone();
    needed.extend(chosen.iter().flat_map(|s| s.ids()));
    needed.sort_unstable();
    needed.dedup();
    let refs = ReferenceVectors::for_images(corpus, &needed, df);

    let images: Result<Vec<ImageEval>> = ids
        .par_iter()
        .zip(chosen.par_iter())
        .map(|(&id, set)| {
            let caption = generated.get(id).expect("id from generated");
            let vector = tfidf_vector(caption, df);
            Ok(ImageEval {
                image_id: id,
                cider: cider_d(&vector, refs.get(id)?, opts.variant)?,
                cider_btw: cider_btw_vector(&vector, set, &refs, opts.variant)?,
            })
        })
        .collect();
    let images = images?;

    let recall = match retrieval {
        Some(r) => recall_levels(generated, corpus, opts.split, r)?,
        None => BTreeMap::new(),
    };

    Ok(EvalReport {
        split: opts.split,
        variant: opts.variant,
        k,
        mean_cider: mean(images.iter().map(|e| e.cider)),
        mean_cider_btw: mean(images.iter().map(|e| e.cider_btw)),
        vocab_size: generated.vocabulary_size(),
        images,
        recall,
    })
}

fn recall_levels(
    generated: &GeneratedCaptions,
    corpus: &Corpus,
    split: Split,
    inputs: RetrievalInputs<'_>,
) -> Result<BTreeMap<usize, f64>> {
    let mut gallery = BTreeMap::new();
    for id in corpus.image_ids(split) {
        gallery.insert(id, inputs.images.image(id)?.to_vec());
    }
    let mut queries = BTreeMap::new();
    for (id, _) in generated.iter() {
        let (_, v) = inputs.generated.captions_of(id).next().ok_or_else(|| {
            Error::validation(format!(
                "no embedding for the generated caption of image {id}"
            ))
        })?;
        queries.insert(id, v.to_vec());
    }
    RECALL_LEVELS
        .iter()
        .filter(|&&k| k <= gallery.len())
        .map(|&k| Ok((k, recall_at_k(&queries, &gallery, k)?)))
        .collect()
}

#[derive(Serialize)]
struct ScaledJson {
    raw: Fixed6,
    scaled: Fixed6,
}

impl ScaledJson {
    fn new(raw: f64) -> Self {
        ScaledJson {
            raw: Fixed6(raw),
            scaled: Fixed6(raw * DISPLAY_SCALE),
        }
    }
}

#[derive(Serialize)]
struct SummaryJson {
    images: usize,
    cider: ScaledJson,
    cider_btw: ScaledJson,
    vocab_size: usize,
    recall: BTreeMap<String, ScaledJson>,
}

#[derive(Serialize)]
struct ImageJson {
    image_id: ImageId,
    cider: Fixed6,
    cider_btw: Fixed6,
}

#[derive(Serialize)]
struct ReportJson<'a> {
    split: Split,
    metric: &'a str,
    k: usize,
    summary: SummaryJson,
    images: Vec<ImageJson>,
}

impl EvalReport {
    pub fn to_json(&self) -> String {
        let report = ReportJson {
            split: self.split,
            metric: self.variant.name(),
            k: self.k,
            summary: SummaryJson {
                images: self.images.len(),
                cider: ScaledJson::new(self.mean_cider),
                cider_btw: ScaledJson::new(self.mean_cider_btw),
                vocab_size: self.vocab_size,
                recall: self
                    .recall
                    .iter()
                    .map(|(k, &r)| (format!("r@{k}"), ScaledJson::new(r)))
                    .collect(),
            },
            images: self
                .images
                .iter()
                .map(|e| ImageJson {
                    image_id: e.image_id,
                    cider: Fixed6(e.cider),
                    cider_btw: Fixed6(e.cider_btw),
                })
                .collect(),
        };
        let mut s = serde_json::to_string_pretty(&report).expect("report values are finite");
        s.push('\n');
        s
    }

    /// `metric\traw\tscaled` rows for spreadsheets.
    pub fn to_tsv(&self) -> String {
        let mut out = String::from("metric\traw\tscaled\n");
        let mut row = |name: &str, v: f64| {
            out.push_str(&format!(
                "{name}\t{}\t{}\n",
                fmt6(v),
                fmt6(v * DISPLAY_SCALE)
            ));
        };
        row("cider", self.mean_cider);
        row(&format!("cider_btw@{}", self.k), self.mean_cider_btw);
        for (k, &r) in &self.recall {
            row(&format!("r@{k}"), r);
        }
        out.push_str(&format!(
            "vocab_size\t{}\t{}\n",
            self.vocab_size, self.vocab_size
        ));
        out.push_str(&format!(
            "images\t{}\t{}\n",
            self.images.len(),
            self.images.len()
        ));
        out
    }
}
