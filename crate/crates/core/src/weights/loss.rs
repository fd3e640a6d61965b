use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::Deserialize;

use super::{token_ltw, CaptionWeights, LtwParams, NegativeManifest};
use crate::corpus::{Caption, Corpus, ImageId, VocabStats};
use crate::distinct::cider_btw_vector;
use crate::error::{Error, Result};
use crate::ngram::{pair_score, tfidf_vector, CiderVariant, DfTable};
use crate::simset::{ReferenceVectors, SimilarSet};

/// Per-token log-probabilities of reference captions, supplied by an external model.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TokenLogProbTable {
    rows: BTreeMap<(ImageId, usize), Vec<f64>>,
}

#[derive(Deserialize)]
struct LogProbRecord {
    image_id: u64,
    caption_index: usize,
    logprobs: Vec<f64>,
}

impl TokenLogProbTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(
        &mut self,
        image_id: ImageId,
        caption_index: usize,
        logprobs: Vec<f64>,
    ) -> Result<()> {
        if self
            .rows
            .insert((image_id, caption_index), logprobs)
            .is_some()
        {
            return Err(Error::validation(format!(
                "duplicate log-probs for caption {caption_index} of image {image_id}"
            )));
        }
        Ok(())
    }

    pub fn get(&self, image_id: ImageId, caption_index: usize) -> Option<&[f64]> {
        self.rows.get(&(image_id, caption_index)).map(Vec::as_slice)
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Reads `{"image_id":..,"caption_index":..,"logprobs":[..]}` lines.
    pub fn parse(text: &str, path: &Path) -> Result<Self> {
        let mut table = Self::new();
        let mut offset = 0;
        for line in text.split_inclusive('\n') {
            let start = offset;
            offset += line.len();
            if line.trim().is_empty() {
                continue;
            }
            let rec: LogProbRecord = serde_json::from_str(line).map_err(|e| Error::Parse {
                path: path.to_path_buf(),
                offset: start + e.column().saturating_sub(1),
                message: e.to_string(),
            })?;
            table.insert(ImageId(rec.image_id), rec.caption_index, rec.logprobs)?;
        }
        Ok(table)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, path)
    }
}

/// Token-level cross entropy `-sum_t w_t log p_t` of one caption, with
/// `w_t = 1` when `ltw` is absent.
pub fn caption_xe(
    caption: &Caption,
    logprobs: &TokenLogProbTable,
    ltw: Option<(&VocabStats, &LtwParams)>,
) -> Result<f64> {
    let (id, idx) = (caption.image_id, caption.caption_index);
    let lp = logprobs.get(id, idx).ok_or_else(|| {
        Error::validation(format!("no log-probs for caption {idx} of image {id}"))
    })?;
    if lp.len() != caption.tokens.len() {
        return Err(Error::validation(format!(
            "caption {idx} of image {id} has {} tokens but {} log-probs",
            caption.tokens.len(),
            lp.len()
        )));
    }
    let mut loss = 0.0;
    for (token, &p) in caption.tokens.iter().zip(lp) {
        if !(p.is_finite() && p <= 0.0) {
            return Err(Error::validation(format!(
                "caption {idx} of image {id}: log-prob {p} is not a finite value <= 0"
            )));
        }
        let w = match ltw {
            Some((vocab, params)) => token_ltw(token, vocab, params),
            None => 1.0,
        };
        loss -= w * p;
    }
    Ok(loss)
}

/// `sum_i w_i * XE(c_i)` over one image's captions.
pub fn weighted_xe(
    captions: &[Caption],
    logprobs: &TokenLogProbTable,
    cw: &CaptionWeights,
    ltw: Option<(&VocabStats, &LtwParams)>,
) -> Result<f64> {
    let mut total = 0.0;
    for cap in captions {
        let w = cw.weight(cap.caption_index).ok_or_else(|| {
            Error::validation(format!(
                "no weight for caption {} of image {}",
                cap.caption_index, cap.image_id
            ))
        })?;
        total += w * caption_xe(cap, logprobs, ltw)?;
    }
    Ok(total)
}

/// Weighted XE on the target's captions minus `alpha_ns` times the weighted
/// XE on the captions of each negative image.
pub fn ns_loss(
    corpus: &Corpus,
    manifest: &NegativeManifest,
    logprobs: &TokenLogProbTable,
    ltw: Option<(&VocabStats, &LtwParams)>,
) -> Result<f64> {
    if !(manifest.alpha_ns.is_finite() && manifest.alpha_ns >= 0.0) {
        return Err(Error::invalid(format!(
            "alpha_ns must be >= 0, got {}",
            manifest.alpha_ns
        )));
    }
    let positive = weighted_xe(
        corpus.require_captions(manifest.target)?,
        logprobs,
        &manifest.positives,
        ltw,
    )?;
    let mut negative = 0.0;
    for neg in &manifest.negatives {
        negative += weighted_xe(corpus.require_captions(neg.image_id)?, logprobs, neg, ltw)?;
    }
    Ok(positive - manifest.alpha_ns * negative)
}

/// Returns `(R~, R)`: the caption-weighted mean CIDEr-D of `c_star` against
/// the target's references, and that value less `alpha_r` times the
/// CIDErBtw of `c_star`.
pub fn rl_reward(
    c_star: &Caption,
    target: ImageId,
    cw: &CaptionWeights,
    set: &SimilarSet,
    corpus: &Corpus,
    df: &DfTable,
    alpha_r: f64,
) -> Result<(f64, f64)> {
    if !(alpha_r.is_finite() && alpha_r >= 0.0) {
        return Err(Error::invalid(format!(
            "alpha_r must be >= 0, got {alpha_r}"
        )));
    }
    if cw.image_id != target {
        return Err(Error::validation(format!(
            "caption weights belong to image {}, not {target}",
            cw.image_id
        )));
    }
    let variant = CiderVariant::default();
    let candidate = tfidf_vector(c_star, df);
    let refs = corpus.require_captions(target)?;
    let mut weighted = 0.0;
    for cap in refs {
        let w = cw.weight(cap.caption_index).ok_or_else(|| {
            Error::validation(format!(
                "no weight for caption {} of image {target}",
                cap.caption_index
            ))
        })?;
        weighted += w * pair_score(&candidate, &tfidf_vector(cap, df), variant);
    }
    let r_tilde = weighted / refs.len() as f64;
    let ids: Vec<ImageId> = set.ids().collect();
    let set_refs = ReferenceVectors::for_images(corpus, &ids, df);
    let btw = cider_btw_vector(&candidate, set, &set_refs, variant)?;
    Ok((r_tilde, r_tilde - alpha_r * btw))
}

/// `alpha_l * l_xe + (1 - alpha_l) * l_rl`.
pub fn combine_losses(l_xe: f64, l_rl: f64, alpha_l: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&alpha_l) {
        return Err(Error::invalid(format!(
            "alpha_l must lie in [0, 1], got {alpha_l}"
        )));
    }
    Ok(alpha_l * l_xe + (1.0 - alpha_l) * l_rl)
}
