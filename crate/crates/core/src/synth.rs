//! Deterministic synthetic corpora for tests and benchmarks.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Zipf};

use crate::corpus::{Caption, Corpus, Image, ImageId, Split};
use crate::error::{Error, Result};
use crate::simset::EmbeddingTable;

const CONSONANTS: &[u8] = b"bdfgklmnprstvz";
const VOWELS: &[u8] = b"aeiou";

/// A pronounceable lowercase word, distinct for every `i`.
pub fn word(mut i: usize) -> String {
    let base = CONSONANTS.len() * VOWELS.len();
    let mut out = String::new();
    loop {
        let syl = i % base;
        out.push(CONSONANTS[syl / VOWELS.len()] as char);
        out.push(VOWELS[syl % VOWELS.len()] as char);
        i /= base;
        if i == 0 {
            break;
        }
        i -= 1;
    }
    out
}

/// Topic-clustered corpus with a Zipf-distributed shared vocabulary.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SynthConfig {
    pub images: usize,
    pub refs_per_image: usize,
    pub topics: usize,
    pub vocab_size: usize,
    pub topic_vocab: usize,
    pub zipf_exponent: f64,
    /// Chance that a token comes from the image's topic vocabulary.
    pub topic_share: f64,
    pub min_len: usize,
    pub max_len: usize,
    /// The first `test_images` ids go to the test split, the next
    /// `val_images` to val, the rest to train.
    pub test_images: usize,
    pub val_images: usize,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            images: 1000,
            refs_per_image: 5,
            topics: 100,
            vocab_size: 5000,
            topic_vocab: 40,
            zipf_exponent: 1.1,
            topic_share: 0.5,
            min_len: 8,
            max_len: 14,
            test_images: 0,
            val_images: 0,
            seed: 7,
        }
    }
}

impl SynthConfig {
    pub fn with_images(images: usize) -> Self {
        SynthConfig {
            images,
            topics: (images / 20).max(1),
            ..Self::default()
        }
    }
}

fn split_for(i: usize, test: usize, val: usize) -> Split {
    if i < test {
        Split::Test
    } else if i < test + val {
        Split::Val
    } else {
        Split::Train
    }
}

pub fn zipf_corpus(cfg: &SynthConfig) -> Result<Corpus> {
    if cfg.images == 0 || cfg.refs_per_image == 0 || cfg.topics == 0 {
        return Err(Error::invalid(
            "synthetic corpus needs images, references and topics",
        ));
    }
    if cfg.min_len == 0 || cfg.min_len > cfg.max_len {
        return Err(Error::invalid(
            "synthetic caption lengths need 1 <= min_len <= max_len",
        ));
    }
    let zipf = |n: usize| {
        Zipf::new(n as f64, cfg.zipf_exponent).map_err(|e| Error::invalid(format!("zipf: {e}")))
    };
    let global = zipf(cfg.vocab_size)?;
    let local = zipf(cfg.topic_vocab)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut images = Vec::with_capacity(cfg.images);
    for i in 0..cfg.images {
        let id = ImageId(i as u64);
        let topic = rng.random_range(0..cfg.topics);
        let captions = (0..cfg.refs_per_image)
            .map(|k| {
                let len = rng.random_range(cfg.min_len..=cfg.max_len);
                let tokens = (0..len)
                    .map(|_| {
                        if rng.random_bool(cfg.topic_share) {
                            let j = local.sample(&mut rng) as usize - 1;
                            word(cfg.vocab_size + topic * cfg.topic_vocab + j)
                        } else {
                            word(global.sample(&mut rng) as usize - 1)
                        }
                    })
                    .collect();
                Caption {
                    image_id: id,
                    caption_index: k,
                    tokens,
                }
            })
            .collect();
        images.push(Image {
            id,
            file_name: format!("synth_{i:06}.jpg"),
            split: split_for(i, cfg.test_images, cfg.val_images),
            captions,
        });
    }
    Corpus::from_images(images)
}

/// One generated caption per image.
pub type GeneratedTokens = Vec<(ImageId, Vec<String>)>;

/// Images on a ring: image `i` is described by the `window` consecutive
/// ring words starting at `i`, so shared n-grams fall off strictly with ring
/// distance. Reference `r` drops one word of the window; the full window is
/// returned as a generated caption per image.
pub fn ring_corpus(
    images: usize,
    refs_per_image: usize,
    window: usize,
    split: Split,
) -> Result<(Corpus, GeneratedTokens)> {
    if images < 3
        || refs_per_image == 0
        || window < 2
        || refs_per_image > window
        || 2 * window >= images
    {
        return Err(Error::invalid(
            "ring corpus needs images >= 3, 1 <= refs <= window and window < images / 2",
        ));
    }
    let full = |i: usize| -> Vec<String> { (0..window).map(|m| word((i + m) % images)).collect() };
    let mut generated = Vec::with_capacity(images);
    let corpus = Corpus::from_images((0..images).map(|i| {
        let id = ImageId(i as u64);
        let words = full(i);
        generated.push((id, words.clone()));
        let captions = (0..refs_per_image)
            .map(|r| {
                let drop = (r * window) / refs_per_image;
                let tokens = words
                    .iter()
                    .enumerate()
                    .filter(|&(m, _)| refs_per_image == 1 || m != drop)
                    .map(|(_, w)| w.clone())
                    .collect();
                Caption {
                    image_id: id,
                    caption_index: r,
                    tokens,
                }
            })
            .collect();
        Image {
            id,
            file_name: format!("ring_{i:05}.jpg"),
            split,
            captions,
        }
    }))?;
    Ok((corpus, generated))
}

/// Ring-position embeddings whose cosine falls off with ring distance
/// (Fourier features with energy `0.1^f` at harmonic `f`, enough decay to keep
/// the kernel strictly decreasing on `[0, pi]`). Caption `r` sits slightly off its
/// image's angle.
pub fn ring_embeddings(corpus: &Corpus, harmonics: usize) -> Result<EmbeddingTable> {
    let n = corpus.len();
    let mut table = EmbeddingTable::new(2 * harmonics)?;
    let feature = |theta: f64| -> Vec<f64> {
        let mut v = Vec::with_capacity(2 * harmonics);
        for f in 1..=harmonics {
            let a = 0.1f64.powi(f as i32).sqrt();
            v.push(a * (f as f64 * theta).cos());
            v.push(a * (f as f64 * theta).sin());
        }
        v
    };
    let step = 2.0 * PI / n as f64;
    for (pos, image) in corpus.images().enumerate() {
        let theta = pos as f64 * step;
        table.insert_image(image.id, feature(theta))?;
        for cap in &image.captions {
            let jitter =
                0.1 * step * (cap.caption_index as f64 - 0.5 * image.captions.len() as f64)
                    / image.captions.len() as f64;
            table.insert_caption(image.id, cap.caption_index, feature(theta + jitter))?;
        }
    }
    Ok(table)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn words_are_distinct_tokens() {
        let words: std::collections::BTreeSet<String> = (0..20000).map(word).collect();
        assert_eq!(words.len(), 20000);
        assert!(words
            .iter()
            .all(|w| w.bytes().all(|b| b.is_ascii_lowercase())));
    }

    #[test]
    fn zipf_corpus_is_deterministic() {
        let cfg = SynthConfig {
            images: 50,
            test_images: 10,
            ..SynthConfig::with_images(50)
        };
        let a = zipf_corpus(&cfg).unwrap();
        assert_eq!(a, zipf_corpus(&cfg).unwrap());
        assert_eq!(a.image_ids(Split::Test).len(), 10);
        assert_eq!(a.image_ids(Split::Train).len(), 40);
        let b = zipf_corpus(&SynthConfig { seed: 8, ..cfg }).unwrap();
        assert_ne!(a, b);
    }

    #[test]
    fn ring_shapes() {
        let (c, gen) = ring_corpus(30, 5, 10, Split::Test).unwrap();
        assert_eq!(c.len(), 30);
        assert_eq!(gen.len(), 30);
        assert_eq!(c.captions(ImageId(0)).unwrap()[0].len(), 9);
        let emb = ring_embeddings(&c, 6).unwrap();
        let dot = |a: &[f64], b: &[f64]| -> f64 { a.iter().zip(b).map(|(x, y)| x * y).sum() };
        let e0 = emb.image(ImageId(0)).unwrap();
        let mut prev = f64::INFINITY;
        for d in 0..=15 {
            let s = dot(e0, emb.image(ImageId(d)).unwrap());
            assert!(s < prev, "distance {d}");
            prev = s;
        }
    }
}
