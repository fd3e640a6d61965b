//! Brute-force oracles shared by the integration tests.
//!
//! Nothing here calls the library's scoring code: n-grams are enumerated as
//! joined strings, vectors are dense over the full n-gram universe, and the
//! CIDEr-D formula is written out term by term.

#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet, HashMap};

use ciderbtw_core::corpus::{Caption, Corpus, Image, ImageId, Split};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub type Tokens = Vec<String>;

pub fn toks(s: &str) -> Tokens {
    s.split_whitespace().map(String::from).collect()
}

fn grams_of(tokens: &[String], n: usize) -> Vec<String> {
    if tokens.len() < n {
        return Vec::new();
    }
    (0..=tokens.len() - n)
        .map(|i| tokens[i..i + n].join(" "))
        .collect()
}

/// Dense CIDEr / CIDEr-D over a fixed reference corpus.
pub struct DenseCider {
    images: f64,
    universe: Vec<(usize, String)>,
    index: HashMap<(usize, String), usize>,
    df: Vec<f64>,
}

impl DenseCider {
    /// `refs` are the reference sets that define document frequency;
    /// `extra` lists captions that may be scored later, so their n-grams get
    /// a slot in the dense space.
    pub fn new(refs: &[Vec<Tokens>], extra: &[Tokens]) -> Self {
        let mut universe = BTreeSet::new();
        for caps in refs {
            for c in caps {
                for n in 1..=4 {
                    for g in grams_of(c, n) {
                        universe.insert((n, g));
                    }
                }
            }
        }
        for c in extra {
            for n in 1..=4 {
                for g in grams_of(c, n) {
                    universe.insert((n, g));
                }
            }
        }
        let universe: Vec<(usize, String)> = universe.into_iter().collect();
        let index: HashMap<_, _> = universe
            .iter()
            .cloned()
            .enumerate()
            .map(|(i, k)| (k, i))
            .collect();
        let mut df = vec![0.0; universe.len()];
        for caps in refs {
            let mut seen = vec![false; universe.len()];
            for c in caps {
                for n in 1..=4 {
                    for g in grams_of(c, n) {
                        seen[index[&(n, g)]] = true;
                    }
                }
            }
            for (d, s) in df.iter_mut().zip(seen) {
                if s {
                    *d += 1.0;
                }
            }
        }
        DenseCider {
            images: refs.len() as f64,
            universe,
            index,
            df,
        }
    }

    fn idf(&self, slot: usize) -> f64 {
        (self.images / self.df[slot].max(1.0)).ln()
    }

    /// Count-times-idf vector of order `n`, dense over the universe.
    fn vector(&self, c: &[String], n: usize) -> Vec<f64> {
        let mut v = vec![0.0; self.universe.len()];
        for g in grams_of(c, n) {
            let slot = *self
                .index
                .get(&(n, g.clone()))
                .unwrap_or_else(|| panic!("n-gram {g:?} not in the oracle universe"));
            v[slot] += 1.0;
        }
        for (slot, x) in v.iter_mut().enumerate() {
            *x *= self.idf(slot);
        }
        v
    }

    /// CIDEr-D (with `sigma`) or plain CIDEr (`None`) of one candidate against one reference.
    pub fn pair(&self, cand: &[String], reference: &[String], sigma: Option<f64>) -> f64 {
        let mut total = 0.0;
        for n in 1..=4 {
            let a = self.vector(cand, n);
            let b = self.vector(reference, n);
            let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
            let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
            if na == 0.0 || nb == 0.0 {
                continue;
            }
            let mut dot = 0.0;
            for (x, y) in a.iter().zip(&b) {
                dot += if sigma.is_some() {
                    x.min(*y) * y
                } else {
                    x * y
                };
            }
            total += dot / (na * nb);
        }
        let mut score = 10.0 * total / 4.0;
        if let Some(s) = sigma {
            let d = cand.len() as f64 - reference.len() as f64;
            score *= (-(d * d) / (2.0 * s * s)).exp();
        }
        score
    }

    pub fn cider(&self, cand: &[String], refs: &[Tokens], sigma: Option<f64>) -> f64 {
        refs.iter().map(|r| self.pair(cand, r, sigma)).sum::<f64>() / refs.len() as f64
    }

    /// Mean over neighbors of the mean CIDEr against each neighbor's references.
    pub fn cider_btw(
        &self,
        cand: &[String],
        neighbors: &[&Vec<Tokens>],
        sigma: Option<f64>,
    ) -> f64 {
        neighbors
            .iter()
            .map(|refs| self.cider(cand, refs, sigma))
            .sum::<f64>()
            / neighbors.len() as f64
    }

    /// Mean over all cross pairs of two reference sets.
    pub fn image_similarity(&self, a: &[Tokens], b: &[Tokens], sigma: Option<f64>) -> f64 {
        let mut total = 0.0;
        for x in a {
            for y in b {
                total += self.pair(x, y, sigma);
            }
        }
        total / (a.len() * b.len()) as f64
    }
}

/// Reference sets of a corpus split, ascending image id.
pub fn split_refs(corpus: &Corpus, split: Split) -> BTreeMap<ImageId, Vec<Tokens>> {
    corpus
        .images()
        .filter(|i| i.split == split)
        .map(|i| (i.id, i.captions.iter().map(|c| c.tokens.clone()).collect()))
        .collect()
}

pub fn corpus_from(images: &[(u64, Split, Vec<Tokens>)]) -> Corpus {
    Corpus::from_images(images.iter().map(|(id, split, caps)| {
        Image {
            id: ImageId(*id),
            file_name: format!("{id}.jpg"),
            split: *split,
            captions: caps
                .iter()
                .enumerate()
                .map(|(k, t)| Caption {
                    image_id: ImageId(*id),
                    caption_index: k,
                    tokens: t.clone(),
                })
                .collect(),
        }
    }))
    .expect("valid corpus")
}

const MICRO_VOCAB: &[&str] = &["a", "dog", "cat", "runs", "on", "grass", "red"];

pub fn random_caption(rng: &mut ChaCha8Rng, max_len: usize) -> Tokens {
    let len = rng.random_range(1..=max_len);
    (0..len)
        .map(|_| MICRO_VOCAB[rng.random_range(0..MICRO_VOCAB.len())].to_string())
        .collect()
}

/// Up to 5 train images with up to 3 references of up to 8 tokens from a
/// 7-word vocabulary, so n-grams overlap and repeat often.
pub fn micro_corpus(seed: u64) -> Corpus {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let images = rng.random_range(2..=5);
    let data: Vec<(u64, Split, Vec<Tokens>)> = (0..images)
        .map(|i| {
            let refs = rng.random_range(1..=3);
            (
                i as u64,
                Split::Train,
                (0..refs).map(|_| random_caption(&mut rng, 8)).collect(),
            )
        })
        .collect();
    corpus_from(&data)
}

pub fn unit_vectors(n: usize, dim: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let v: Vec<f64> = (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect();
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            v.into_iter().map(|x| x / norm).collect()
        })
        .collect()
}

/// Recall@k by sorting the full gallery for every query.
pub fn recall_full_sort(
    queries: &BTreeMap<ImageId, Vec<f64>>,
    gallery: &BTreeMap<ImageId, Vec<f64>>,
    k: usize,
) -> f64 {
    let mut hits = 0;
    for (id, q) in queries {
        let mut ranked: Vec<(f64, ImageId)> = gallery
            .iter()
            .map(|(g, v)| (q.iter().zip(v).map(|(a, b)| a * b).sum(), *g))
            .collect();
        ranked.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
        if ranked.iter().take(k).any(|(_, g)| g == id) {
            hits += 1;
        }
    }
    hits as f64 / queries.len() as f64
}

/// Top-K neighbors by an arbitrary similarity: score descending, id ascending.
pub fn top_k_by(
    ids: &[ImageId],
    target: ImageId,
    k: usize,
    mut sim: impl FnMut(ImageId) -> f64,
) -> Vec<(ImageId, f64)> {
    let mut all: Vec<(ImageId, f64)> = ids
        .iter()
        .filter(|&&j| j != target)
        .map(|&j| (j, sim(j)))
        .collect();
    all.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    all.truncate(k);
    all
}
