//! Similar-image sets: for every target image, the K most similar images of
//! the same split under a chosen similarity.

mod embed;
mod index;

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::fs;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, ImageId, Split};
use crate::error::{Error, Result};
use crate::fixed::Fixed6;
use crate::ngram::{mean_cross_score, tfidf_vector, CiderVariant, DfTable, TfIdfVector};

pub use embed::{
    build_set_image_feature, build_set_retrieval, build_sets_image_feature, build_sets_retrieval,
    image_similarity, vse_similarity, EmbeddingTable,
};
pub use index::{timed_similar_sets, CiderIndex, PruneStats, Timings};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Strategy {
    /// Mean CIDEr between the two images' reference captions.
    Cider,
    /// Image-to-caption retrieval in a joint embedding space.
    EmbedRetrieval,
    /// Cosine between image embeddings.
    EmbedImage,
    Random,
}

impl Strategy {
    pub fn as_str(self) -> &'static str {
        match self {
            Strategy::Cider => "cider",
            Strategy::EmbedRetrieval => "embed-retrieval",
            Strategy::EmbedImage => "embed-image",
            Strategy::Random => "random",
        }
    }

    pub fn needs_embeddings(self) -> bool {
        matches!(self, Strategy::EmbedRetrieval | Strategy::EmbedImage)
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cider" => Ok(Strategy::Cider),
            "embed-retrieval" => Ok(Strategy::EmbedRetrieval),
            "embed-image" => Ok(Strategy::EmbedImage),
            "random" => Ok(Strategy::Random),
            other => Err(Error::invalid(format!(
                "unknown strategy `{other}` (expected cider, embed-retrieval, embed-image or random)"
            ))),
        }
    }
}

/// The K images most similar to `target`, best first.
#[derive(Debug, Clone, PartialEq)]
pub struct SimilarSet {
    pub target: ImageId,
    pub neighbors: Vec<(ImageId, f64)>,
    pub strategy: Strategy,
}

impl SimilarSet {
    pub fn k(&self) -> usize {
        self.neighbors.len()
    }

    pub fn ids(&self) -> impl Iterator<Item = ImageId> + '_ {
        self.neighbors.iter().map(|&(id, _)| id)
    }

    /// The first `k` neighbors as a new set.
    pub fn truncated(&self, k: usize) -> SimilarSet {
        SimilarSet {
            target: self.target,
            neighbors: self.neighbors.iter().take(k).copied().collect(),
            strategy: self.strategy,
        }
    }

    /// Checks self-exclusion, distinctness, ordering and the ascending-id tie rule.
    pub fn validate(&self) -> Result<()> {
        self.check(true)
    }

    fn check(&self, tie_rule: bool) -> Result<()> {
        let bad = |why: &str| {
            Err(Error::validation(format!(
                "similar set of image {}: {why}",
                self.target
            )))
        };
        if self.neighbors.iter().any(|&(id, _)| id == self.target) {
            return bad("contains its own target");
        }
        let mut ids: Vec<_> = self.ids().collect();
        ids.sort_unstable();
        if ids.windows(2).any(|w| w[0] == w[1]) {
            return bad("repeats a neighbor");
        }
        for w in self.neighbors.windows(2) {
            let ((a, sa), (b, sb)) = (w[0], w[1]);
            if sa < sb || (tie_rule && sa == sb && a > b) {
                return bad("neighbors out of order");
            }
        }
        Ok(())
    }
}

pub type SimilarSets = BTreeMap<ImageId, SimilarSet>;

/// Sort key: higher score first, then ascending image id.
pub(crate) fn rank_order(a: &(ImageId, f64), b: &(ImageId, f64)) -> std::cmp::Ordering {
    b.1.total_cmp(&a.1).then(a.0.cmp(&b.0))
}

#[derive(Serialize, Deserialize)]
struct SetRecord<F> {
    target: ImageId,
    strategy: Strategy,
    neighbors: Vec<(ImageId, F)>,
}

/// One JSON object per line, ordered by target id.
pub fn write_sets_jsonl<W: Write>(sets: &SimilarSets, mut out: W) -> Result<()> {
    for set in sets.values() {
        let record = SetRecord {
            target: set.target,
            strategy: set.strategy,
            neighbors: set
                .neighbors
                .iter()
                .map(|&(id, s)| (id, Fixed6(s)))
                .collect(),
        };
        let line = serde_json::to_string(&record).map_err(|e| Error::Internal(e.to_string()))?;
        writeln!(out, "{line}").map_err(|e| Error::io("<similar sets>", e))?;
    }
    Ok(())
}

pub fn sets_to_jsonl(sets: &SimilarSets) -> String {
    let mut buf = Vec::new();
    write_sets_jsonl(sets, &mut buf).expect("writing to memory");
    String::from_utf8(buf).expect("json is utf-8")
}

pub fn read_sets_jsonl(text: &str, path: &Path) -> Result<SimilarSets> {
    let mut sets = SimilarSets::new();
    let mut offset = 0;
    for line in text.split_inclusive('\n') {
        let start = offset;
        offset += line.len();
        if line.trim().is_empty() {
            continue;
        }
        let record: SetRecord<f64> = serde_json::from_str(line).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            offset: start + e.column().saturating_sub(1),
            message: e.to_string(),
        })?;
        let set = SimilarSet {
            target: record.target,
            neighbors: record.neighbors,
            strategy: record.strategy,
        };
        // scores on disk are rounded, so equal printed scores may hide a
        // strict order and the tie rule cannot be checked here
        set.check(false)?;
        if sets.insert(set.target, set).is_some() {
            return Err(Error::validation(format!(
                "{}: target {} appears twice",
                path.display(),
                record.target
            )));
        }
    }
    Ok(sets)
}

pub fn load_sets(path: &Path) -> Result<SimilarSets> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    read_sets_jsonl(&text, path)
}

/// TF-IDF vectors of every reference caption of a group of images.
#[derive(Debug, Clone)]
pub struct ReferenceVectors {
    vectors: HashMap<ImageId, Vec<TfIdfVector>>,
}

impl ReferenceVectors {
    pub fn for_split(corpus: &Corpus, split: Split, df: &DfTable) -> Self {
        Self::for_images(corpus, &corpus.image_ids(split), df)
    }

    pub fn for_images(corpus: &Corpus, ids: &[ImageId], df: &DfTable) -> Self {
        let vectors = ids
            .par_iter()
            .filter_map(|&id| {
                let caps = corpus.captions(id)?;
                Some((id, caps.iter().map(|c| tfidf_vector(c, df)).collect()))
            })
            .collect();
        ReferenceVectors { vectors }
    }

    pub fn get(&self, id: ImageId) -> Result<&[TfIdfVector]> {
        self.vectors
            .get(&id)
            .map(Vec::as_slice)
            .ok_or_else(|| Error::validation(format!("no reference captions for image {id}")))
    }

    /// Mean CIDEr over all cross pairs of the two images' references.
    pub fn similarity(&self, i: ImageId, j: ImageId, variant: CiderVariant) -> Result<f64> {
        Ok(mean_cross_score(self.get(i)?, self.get(j)?, variant))
    }
}

/// CIDEr similarity of two images: the mean pair score over all
/// `N_i * N_j` reference-caption pairs.
pub fn cider_similarity(
    i: ImageId,
    j: ImageId,
    df: &DfTable,
    corpus: &Corpus,
    variant: CiderVariant,
) -> Result<f64> {
    let vecs = |id| -> Result<Vec<TfIdfVector>> {
        Ok(corpus
            .require_captions(id)?
            .iter()
            .map(|c| tfidf_vector(c, df))
            .collect())
    };
    Ok(mean_cross_score(&vecs(i)?, &vecs(j)?, variant))
}

pub(crate) fn check_k(k: usize, split_size: usize, split: Split) -> Result<()> {
    if k == 0 {
        return Err(Error::invalid("K must be at least 1"));
    }
    if k >= split_size {
        return Err(Error::invalid(format!(
            "K={k} needs at least {} images but split {split} has {split_size}",
            k + 1
        )));
    }
    Ok(())
}

/// CIDEr similar sets via the pruned inverted index.
pub fn build_sets_cider(
    corpus: &Corpus,
    split: Split,
    k: usize,
    df: &DfTable,
    variant: CiderVariant,
) -> Result<SimilarSets> {
    let index = CiderIndex::build(corpus, split, df, variant)?;
    Ok(index.similar_sets(k)?.0)
}

/// CIDEr similar sets by scoring every ordered pair of images.
pub fn build_sets_cider_exhaustive(
    corpus: &Corpus,
    split: Split,
    k: usize,
    df: &DfTable,
    variant: CiderVariant,
) -> Result<SimilarSets> {
    let ids = corpus.image_ids(split);
    check_k(k, ids.len(), split)?;
    let refs = ReferenceVectors::for_split(corpus, split, df);
    let sets: Result<Vec<SimilarSet>> = ids
        .par_iter()
        .map(|&target| {
            let mut scored = Vec::with_capacity(ids.len() - 1);
            for &other in ids.iter().filter(|&&o| o != target) {
                scored.push((other, refs.similarity(target, other, variant)?));
            }
            scored.sort_by(rank_order);
            scored.truncate(k);
            Ok(SimilarSet {
                target,
                neighbors: scored,
                strategy: Strategy::Cider,
            })
        })
        .collect();
    Ok(sets?.into_iter().map(|s| (s.target, s)).collect())
}

fn target_rng(seed: u64, target: ImageId) -> ChaCha8Rng {
    // splitmix64 of the target id keeps per-target streams independent of
    // iteration order and thread count.
    let mut z = target.0.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^= z >> 31;
    ChaCha8Rng::seed_from_u64(seed ^ z)
}

/// K images drawn uniformly without replacement from the rest of the split.
///
/// Random neighbors carry score 0 and are listed by ascending id.
pub fn build_sets_random(
    corpus: &Corpus,
    split: Split,
    k: usize,
    seed: u64,
) -> Result<SimilarSets> {
    let ids = corpus.image_ids(split);
    check_k(k, ids.len(), split)?;
    Ok(ids
        .par_iter()
        .map(|&target| {
            let others: Vec<ImageId> = ids.iter().copied().filter(|&o| o != target).collect();
            let mut rng = target_rng(seed, target);
            let mut picked: Vec<ImageId> = sample(&mut rng, others.len(), k)
                .into_iter()
                .map(|i| others[i])
                .collect();
            picked.sort_unstable();
            SimilarSet {
                target,
                neighbors: picked.into_iter().map(|id| (id, 0.0)).collect(),
                strategy: Strategy::Random,
            }
        })
        .map(|s| (s.target, s))
        .collect())
}
