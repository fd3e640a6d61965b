//! Precomputed joint-space embeddings and the similar sets built from them.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use rayon::prelude::*;

use super::{check_k, rank_order, SimilarSet, SimilarSets, Strategy};
use crate::corpus::{Corpus, ImageId, Split};
use crate::error::{list_offenders, Error, Result};

/// Unit-normalized image and caption embeddings.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable {
    dim: usize,
    image_vecs: BTreeMap<ImageId, Vec<f64>>,
    caption_vecs: BTreeMap<(ImageId, usize), Vec<f64>>,
}

fn normalize(mut v: Vec<f64>) -> Option<Vec<f64>> {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if !(norm.is_finite() && norm > 0.0) {
        return None;
    }
    v.iter_mut().for_each(|x| *x /= norm);
    Some(v)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

impl EmbeddingTable {
    pub fn new(dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::invalid("embedding dimension must be positive"));
        }
        Ok(EmbeddingTable {
            dim,
            image_vecs: BTreeMap::new(),
            caption_vecs: BTreeMap::new(),
        })
    }

    fn check(&self, v: Vec<f64>, what: &str) -> Result<Vec<f64>> {
        if v.len() != self.dim {
            return Err(Error::validation(format!(
                "{what}: expected {} values, got {}",
                self.dim,
                v.len()
            )));
        }
        normalize(v).ok_or_else(|| Error::validation(format!("{what}: zero or non-finite vector")))
    }

    pub fn insert_image(&mut self, id: ImageId, v: Vec<f64>) -> Result<()> {
        let v = self.check(v, &format!("image {id}"))?;
        if self.image_vecs.insert(id, v).is_some() {
            return Err(Error::validation(format!("image {id} embedded twice")));
        }
        Ok(())
    }

    pub fn insert_caption(&mut self, id: ImageId, index: usize, v: Vec<f64>) -> Result<()> {
        let v = self.check(v, &format!("caption {index} of image {id}"))?;
        if self.caption_vecs.insert((id, index), v).is_some() {
            return Err(Error::validation(format!(
                "caption {index} of image {id} embedded twice"
            )));
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn image(&self, id: ImageId) -> Result<&[f64]> {
        self.image_vecs
            .get(&id)
            .map(Vec::as_slice)
            .ok_or_else(|| Error::validation(format!("no image embedding for image {id}")))
    }

    pub fn images(&self) -> impl Iterator<Item = (ImageId, &[f64])> {
        self.image_vecs.iter().map(|(&id, v)| (id, v.as_slice()))
    }

    /// Caption embeddings of one image, by caption index.
    pub fn captions_of(&self, id: ImageId) -> impl Iterator<Item = (usize, &[f64])> {
        self.caption_vecs
            .range((id, 0)..=(id, usize::MAX))
            .map(|(&(_, idx), v)| (idx, v.as_slice()))
    }

    pub fn captions(&self) -> impl Iterator<Item = ((ImageId, usize), &[f64])> {
        self.caption_vecs.iter().map(|(&k, v)| (k, v.as_slice()))
    }

    /// Parses `dim=<d>` followed by `img\t<id>\t<floats>` and
    /// `cap\t<id>\t<index>\t<floats>` rows.
    pub fn parse(text: &str, path: &Path) -> Result<Self> {
        let err = |offset: usize, message: String| Error::Parse {
            path: path.to_path_buf(),
            offset,
            message,
        };
        let mut offset = 0;
        let mut table: Option<EmbeddingTable> = None;
        for line in text.split_inclusive('\n') {
            let start = offset;
            offset += line.len();
            let line = line.trim_end_matches(['\n', '\r']);
            if line.trim().is_empty() {
                continue;
            }
            let Some(t) = table.as_mut() else {
                let dim = line
                    .strip_prefix("dim=")
                    .and_then(|d| d.trim().parse::<usize>().ok())
                    .ok_or_else(|| {
                        err(start, format!("expected `dim=<d>` header, got {line:?}"))
                    })?;
                table = Some(EmbeddingTable::new(dim).map_err(|e| err(start, e.to_string()))?);
                continue;
            };
            let fields: Vec<&str> = line.split('\t').collect();
            let floats = |s: &str| -> Result<Vec<f64>> {
                s.split_whitespace()
                    .map(|x| {
                        x.parse::<f64>()
                            .map_err(|_| err(start, format!("bad float {x:?}")))
                    })
                    .collect()
            };
            let id = |s: &str| -> Result<ImageId> {
                s.parse()
                    .map(ImageId)
                    .map_err(|_| err(start, format!("bad image id {s:?}")))
            };
            let located = |e: Error| err(start, e.to_string());
            match fields.as_slice() {
                ["img", image, values] => {
                    let v = floats(values)?;
                    t.insert_image(id(image)?, v).map_err(located)?;
                }
                ["cap", image, index, values] => {
                    let index: usize = index
                        .parse()
                        .map_err(|_| err(start, format!("bad caption index {index:?}")))?;
                    let v = floats(values)?;
                    t.insert_caption(id(image)?, index, v).map_err(located)?;
                }
                _ => return Err(err(start, format!("unrecognized row {line:?}"))),
            }
        }
        table.ok_or_else(|| err(0, "empty embedding file".into()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, path)
    }

    pub fn to_text(&self) -> String {
        let row = |v: &[f64]| {
            v.iter()
                .map(|x| format!("{x:e}"))
                .collect::<Vec<_>>()
                .join(" ")
        };
        let mut out = format!("dim={}\n", self.dim);
        for (id, v) in &self.image_vecs {
            out.push_str(&format!("img\t{id}\t{}\n", row(v)));
        }
        for ((id, idx), v) in &self.caption_vecs {
            out.push_str(&format!("cap\t{id}\t{idx}\t{}\n", row(v)));
        }
        out
    }
}

/// Retrieval similarity of image `i` to image `j`: the best cosine between
/// `i`'s image embedding and any caption embedding of `j`.
pub fn vse_similarity(i: ImageId, j: ImageId, emb: &EmbeddingTable) -> Result<f64> {
    let phi = emb.image(i)?;
    emb.captions_of(j)
        .map(|(_, theta)| dot(phi, theta))
        .max_by(f64::total_cmp)
        .ok_or_else(|| Error::validation(format!("no caption embeddings for image {j}")))
}

/// Cosine between the two image embeddings.
pub fn image_similarity(i: ImageId, j: ImageId, emb: &EmbeddingTable) -> Result<f64> {
    Ok(dot(emb.image(i)?, emb.image(j)?))
}

struct Gallery<'a> {
    ids: Vec<ImageId>,
    captions: Vec<(ImageId, &'a [f64])>,
}

impl<'a> Gallery<'a> {
    fn new(
        corpus: &Corpus,
        split: Split,
        emb: &'a EmbeddingTable,
        need_images: bool,
    ) -> Result<Self> {
        let ids = corpus.image_ids(split);
        let mut captions = Vec::new();
        let mut missing = Vec::new();
        for &id in &ids {
            let before = captions.len();
            captions.extend(emb.captions_of(id).map(|(_, v)| (id, v)));
            if captions.len() == before || (need_images && emb.image(id).is_err()) {
                missing.push(id);
            }
        }
        if !missing.is_empty() {
            return Err(Error::validation(format!(
                "embeddings missing for images of split {split}: {}",
                list_offenders(&missing, 20)
            )));
        }
        Ok(Gallery { ids, captions })
    }

    fn retrieve(
        &self,
        target: ImageId,
        k: usize,
        refs: usize,
        emb: &EmbeddingTable,
    ) -> Result<SimilarSet> {
        let phi = emb.image(target)?;
        let mut scored: Vec<(ImageId, f64)> = self
            .captions
            .iter()
            .map(|&(id, theta)| (id, dot(phi, theta)))
            .collect();
        let mut wanted = (refs * (k + 1)).max(1);
        loop {
            let take = wanted.min(scored.len());
            if take < scored.len() {
                scored.select_nth_unstable_by(take - 1, rank_order);
            }
            let mut head: Vec<(ImageId, f64)> = scored[..take].to_vec();
            head.sort_by(rank_order);
            let mut neighbors: Vec<(ImageId, f64)> = Vec::with_capacity(k);
            for (id, s) in head {
                if id != target && !neighbors.iter().any(|&(n, _)| n == id) {
                    neighbors.push((id, s));
                    if neighbors.len() == k {
                        break;
                    }
                }
            }
            if neighbors.len() == k || take == scored.len() {
                if neighbors.len() < k {
                    return Err(Error::validation(format!(
                        "only {} retrievable images for target {target}, need {k}",
                        neighbors.len()
                    )));
                }
                return Ok(SimilarSet {
                    target,
                    neighbors,
                    strategy: Strategy::EmbedRetrieval,
                });
            }
            wanted *= 2;
        }
    }
}

/// Similar set by image-to-caption retrieval.
///
/// Retrieves the `N * (K + 1)` captions nearest the target's image embedding
/// (`N` = the target's reference count), keeps their images in retrieval
/// order minus the target, and doubles the retrieval depth until K distinct
/// images are found. Each neighbor's score is its best caption cosine.
pub fn build_set_retrieval(
    target: ImageId,
    k: usize,
    emb: &EmbeddingTable,
    corpus: &Corpus,
) -> Result<SimilarSet> {
    let split = corpus
        .split_of(target)
        .ok_or_else(|| Error::validation(format!("image {target} is not in the corpus")))?;
    let gallery = Gallery::new(corpus, split, emb, false)?;
    check_k(k, gallery.ids.len(), split)?;
    let refs = corpus.require_captions(target)?.len();
    gallery.retrieve(target, k, refs, emb)
}

pub fn build_sets_retrieval(
    corpus: &Corpus,
    split: Split,
    k: usize,
    emb: &EmbeddingTable,
) -> Result<SimilarSets> {
    let gallery = Gallery::new(corpus, split, emb, true)?;
    check_k(k, gallery.ids.len(), split)?;
    let sets: Result<Vec<SimilarSet>> = gallery
        .ids
        .par_iter()
        .map(|&t| {
            let refs = corpus.require_captions(t)?.len();
            gallery.retrieve(t, k, refs, emb)
        })
        .collect();
    Ok(sets?.into_iter().map(|s| (s.target, s)).collect())
}

/// Top-K images by image-embedding cosine.
pub fn build_set_image_feature(
    target: ImageId,
    k: usize,
    emb: &EmbeddingTable,
    corpus: &Corpus,
) -> Result<SimilarSet> {
    let split = corpus
        .split_of(target)
        .ok_or_else(|| Error::validation(format!("image {target} is not in the corpus")))?;
    let ids = corpus.image_ids(split);
    check_k(k, ids.len(), split)?;
    image_feature_set(target, k, &ids, emb)
}

fn image_feature_set(
    target: ImageId,
    k: usize,
    ids: &[ImageId],
    emb: &EmbeddingTable,
) -> Result<SimilarSet> {
    let phi = emb.image(target)?;
    let mut scored = Vec::with_capacity(ids.len());
    for &id in ids.iter().filter(|&&id| id != target) {
        scored.push((id, dot(phi, emb.image(id)?)));
    }
    scored.sort_by(rank_order);
    scored.truncate(k);
    Ok(SimilarSet {
        target,
        neighbors: scored,
        strategy: Strategy::EmbedImage,
    })
}

pub fn build_sets_image_feature(
    corpus: &Corpus,
    split: Split,
    k: usize,
    emb: &EmbeddingTable,
) -> Result<SimilarSets> {
    let ids = corpus.image_ids(split);
    check_k(k, ids.len(), split)?;
    let missing: Vec<_> = ids
        .iter()
        .copied()
        .filter(|&id| emb.image(id).is_err())
        .collect();
    if !missing.is_empty() {
        return Err(Error::validation(format!(
            "image embeddings missing for: {}",
            list_offenders(&missing, 20)
        )));
    }
    let sets: Result<Vec<SimilarSet>> = ids
        .par_iter()
        .map(|&t| image_feature_set(t, k, &ids, emb))
        .collect();
    Ok(sets?.into_iter().map(|s| (s.target, s)).collect())
}
