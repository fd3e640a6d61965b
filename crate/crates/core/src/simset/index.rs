//! Exact all-pairs CIDEr similar sets with an inverted n-gram index.
//!
//! For images `i`, `j` with references `c_k`, `c_l`, each pair score is at most
//! `10/4 * sum_n cos_n(c_k, c_l)` (clipping only lowers the dot product and the
//! length penalty is at most 1). Averaging unit vectors per image turns that
//! into one sparse dot product, `2.5 * <u_i, u_j>`, which is accumulated for
//! every candidate through the posting lists. Candidates are then scored
//! exactly in descending bound order until the bound drops below the current
//! K-th best score.

use std::time::{Duration, Instant};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{check_k, rank_order, SimilarSet, SimilarSets, Strategy};
use crate::corpus::{Corpus, ImageId, Split};
use crate::error::{Error, Result};
use crate::ngram::{
    mean_cross_score, tfidf_vector, CiderVariant, DfTable, NGram, TfIdfVector, MAX_N,
};

/// Relative slack on the bound so rounding never prunes a true neighbor.
const BOUND_SLACK: f64 = 1e-9;

pub struct CiderIndex {
    split: Split,
    variant: CiderVariant,
    ids: Vec<ImageId>,
    vectors: Vec<Vec<TfIdfVector<u32>>>,
    /// Per image: mean of per-order unit vectors, keyed by gram id.
    bounds: Vec<Vec<(u32, f64)>>,
    /// Per gram id: (image position, bound weight).
    postings: Vec<Vec<(u32, f64)>>,
}

/// Work done while building similar sets, compared to exhaustive scoring.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PruneStats {
    pub images: usize,
    /// Ordered pairs an exhaustive search scores: `n * (n - 1)`.
    pub brute_force_pairs: u64,
    /// Pairs sharing at least one weighted n-gram.
    pub candidate_pairs: u64,
    /// Pairs whose exact similarity was computed.
    pub scored_pairs: u64,
}

impl PruneStats {
    /// Fraction of brute-force pairs never scored exactly.
    pub fn skipped_fraction(&self) -> f64 {
        if self.brute_force_pairs == 0 {
            return 0.0;
        }
        1.0 - self.scored_pairs as f64 / self.brute_force_pairs as f64
    }
}

#[derive(Debug, Clone, Copy)]
pub struct Timings {
    pub build: Duration,
    pub query: Duration,
}

impl CiderIndex {
    pub fn build(
        corpus: &Corpus,
        split: Split,
        df: &DfTable,
        variant: CiderVariant,
    ) -> Result<Self> {
        let ids = corpus.image_ids(split);
        if ids.is_empty() {
            return Err(Error::validation(format!("split {split} has no images")));
        }
        let raw: Vec<Vec<TfIdfVector>> = ids
            .par_iter()
            .map(|&id| {
                corpus
                    .captions(id)
                    .unwrap_or_default()
                    .iter()
                    .map(|c| tfidf_vector(c, df))
                    .collect()
            })
            .collect();

        // Gram ids follow n-gram order, so re-keyed vectors merge in the same
        // sequence and score bit-for-bit like the originals.
        let mut grams: Vec<&NGram> = raw
            .iter()
            .flatten()
            .flat_map(|v| (1..=MAX_N).flat_map(move |n| v.grams(n).iter().map(|(g, _)| g)))
            .collect();
        grams.par_sort_unstable();
        grams.dedup();
        let gram_id = |g: &NGram| grams.binary_search(&g).expect("gram collected above") as u32;

        let vectors: Vec<Vec<TfIdfVector<u32>>> = raw
            .par_iter()
            .map(|caps| caps.iter().map(|v| v.remap(gram_id)).collect())
            .collect();

        let bounds: Vec<Vec<(u32, f64)>> =
            vectors.par_iter().map(|caps| bound_vector(caps)).collect();

        let mut postings: Vec<Vec<(u32, f64)>> = vec![Vec::new(); grams.len()];
        for (pos, b) in bounds.iter().enumerate() {
            for &(g, w) in b {
                postings[g as usize].push((pos as u32, w));
            }
        }

        Ok(CiderIndex {
            split,
            variant,
            ids,
            vectors,
            bounds,
            postings,
        })
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn split(&self) -> Split {
        self.split
    }

    /// Top-K sets for every image of the split, with pruning statistics.
    pub fn similar_sets(&self, k: usize) -> Result<(SimilarSets, PruneStats)> {
        check_k(k, self.ids.len(), self.split)?;
        let n = self.ids.len();
        let results: Vec<(SimilarSet, u64, u64)> = (0..n)
            .into_par_iter()
            .map_init(
                || (vec![0.0f64; n], Vec::<u32>::new()),
                |(acc, touched), pos| self.query(pos, k, acc, touched),
            )
            .collect();
        let mut stats = PruneStats {
            images: n,
            brute_force_pairs: (n as u64) * (n as u64 - 1),
            candidate_pairs: 0,
            scored_pairs: 0,
        };
        let mut sets = SimilarSets::new();
        for (set, candidates, scored) in results {
            stats.candidate_pairs += candidates;
            stats.scored_pairs += scored;
            sets.insert(set.target, set);
        }
        Ok((sets, stats))
    }

    fn exact(&self, a: usize, b: usize) -> f64 {
        mean_cross_score(&self.vectors[a], &self.vectors[b], self.variant)
    }

    fn query(
        &self,
        pos: usize,
        k: usize,
        acc: &mut [f64],
        touched: &mut Vec<u32>,
    ) -> (SimilarSet, u64, u64) {
        for &(g, w) in &self.bounds[pos] {
            for &(other, v) in &self.postings[g as usize] {
                let slot = &mut acc[other as usize];
                if *slot == 0.0 {
                    touched.push(other);
                }
                *slot += w * v;
            }
        }
        let mut candidates: Vec<(u32, f64)> = touched
            .drain(..)
            .filter(|&o| o as usize != pos)
            .map(|o| (o, 2.5 * acc[o as usize]))
            .collect();
        for &(o, _) in &candidates {
            acc[o as usize] = 0.0;
        }
        acc[pos] = 0.0;
        // ids are ascending by position, so position order is id order
        candidates.sort_unstable_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));

        let mut top: Vec<(ImageId, f64)> = Vec::with_capacity(k + 1);
        let mut scored = 0u64;
        for &(other, bound) in &candidates {
            if top.len() == k && bound * (1.0 + BOUND_SLACK) + 1e-12 < top[k - 1].1 {
                break;
            }
            let s = self.exact(pos, other as usize);
            scored += 1;
            insert_ranked(&mut top, (self.ids[other as usize], s), k);
        }
        // images sharing no weighted n-gram score exactly zero
        if top.len() < k {
            let mut in_top: Vec<ImageId> = top.iter().map(|&(id, _)| id).collect();
            in_top.sort_unstable();
            for (other, &id) in self.ids.iter().enumerate() {
                if top.len() == k {
                    break;
                }
                if other == pos || in_top.binary_search(&id).is_ok() {
                    continue;
                }
                let s = self.exact(pos, other);
                scored += 1;
                insert_ranked(&mut top, (id, s), k);
            }
        }
        let set = SimilarSet {
            target: self.ids[pos],
            neighbors: top,
            strategy: Strategy::Cider,
        };
        (set, candidates.len() as u64, scored)
    }
}

fn insert_ranked(top: &mut Vec<(ImageId, f64)>, item: (ImageId, f64), k: usize) {
    let at = top.partition_point(|probe| rank_order(probe, &item).is_lt());
    if at < k {
        top.insert(at, item);
        top.truncate(k);
    }
}

fn bound_vector(caps: &[TfIdfVector<u32>]) -> Vec<(u32, f64)> {
    let mut out: Vec<(u32, f64)> = Vec::new();
    let scale = 1.0 / caps.len() as f64;
    for v in caps {
        for n in 1..=MAX_N {
            let norm = v.norm(n);
            if norm == 0.0 {
                continue;
            }
            out.extend(v.grams(n).iter().map(|&(g, w)| (g, w / norm * scale)));
        }
    }
    out.sort_unstable_by_key(|&(g, _)| g);
    let mut merged: Vec<(u32, f64)> = Vec::with_capacity(out.len());
    for (g, w) in out {
        match merged.last_mut() {
            Some(last) if last.0 == g => last.1 += w,
            _ => merged.push((g, w)),
        }
    }
    merged
}

/// Builds the index and all sets, timing both phases.
pub fn timed_similar_sets(
    corpus: &Corpus,
    split: Split,
    k: usize,
    df: &DfTable,
    variant: CiderVariant,
) -> Result<(SimilarSets, PruneStats, Timings)> {
    let start = Instant::now();
    let index = CiderIndex::build(corpus, split, df, variant)?;
    let build = start.elapsed();
    let start = Instant::now();
    let (sets, stats) = index.similar_sets(k)?;
    Ok((
        sets,
        stats,
        Timings {
            build,
            query: start.elapsed(),
        },
    ))
}
