//! Caption reweighting: CIDErBtw-based caption weights, long-tailed word
//! weights, negative samples and reference loss/reward functions.

mod loss;
mod manifest;

use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, ImageId, VocabStats};
use crate::distinct::cider_btw_vector;
use crate::error::{Error, Result};
use crate::ngram::{CiderVariant, DfTable, DEFAULT_SIGMA};
use crate::simset::{ReferenceVectors, SimilarSet};

pub use loss::{caption_xe, combine_losses, ns_loss, rl_reward, weighted_xe, TokenLogProbTable};
pub use manifest::{
    build_manifest, export_manifest, load_manifest, manifest_to_string, parse_manifest, LtwEntry,
    NegativeManifest, NegativeWeighting, WeightManifest,
};

/// Training hyperparameters. Defaults follow the published COCO setup.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Hyperparams {
    pub lambda_w: f64,
    pub alpha_w: f64,
    pub alpha_r: f64,
    pub alpha_ns: f64,
    /// LTW amplitude `A`.
    pub amplitude: f64,
    pub f_b: usize,
    pub f_e: usize,
    pub k: usize,
    pub sigma: f64,
}

impl Default for Hyperparams {
    fn default() -> Self {
        Hyperparams {
            lambda_w: 1.5,
            alpha_w: 0.75,
            alpha_r: 0.3,
            alpha_ns: 0.05,
            amplitude: 1.0,
            f_b: 5000,
            f_e: 9487,
            k: 5,
            sigma: DEFAULT_SIGMA,
        }
    }
}

impl Hyperparams {
    pub fn validate(&self) -> Result<()> {
        check_lambda_alpha(self.lambda_w, self.alpha_w)?;
        for (name, v) in [("alpha_r", self.alpha_r), ("alpha_ns", self.alpha_ns)] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::invalid(format!(
                    "{name} must be finite and >= 0, got {v}"
                )));
            }
        }
        if !(self.sigma.is_finite() && self.sigma > 0.0) {
            return Err(Error::invalid(format!(
                "sigma must be positive, got {}",
                self.sigma
            )));
        }
        if self.k == 0 {
            return Err(Error::invalid("K must be at least 1"));
        }
        self.ltw()?;
        Ok(())
    }

    pub fn ltw(&self) -> Result<LtwParams> {
        LtwParams::new(self.f_b, self.f_e, self.amplitude)
    }

    pub fn variant(&self) -> CiderVariant {
        CiderVariant::CiderD { sigma: self.sigma }
    }
}

fn check_lambda_alpha(lambda_w: f64, alpha_w: f64) -> Result<()> {
    if !(lambda_w.is_finite() && alpha_w.is_finite() && alpha_w >= 0.0 && lambda_w > alpha_w) {
        return Err(Error::invalid(format!(
            "caption weights need lambda_w > alpha_w >= 0, got lambda_w={lambda_w} alpha_w={alpha_w}"
        )));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CaptionWeight {
    pub index: usize,
    /// CIDErBtw of the caption.
    pub v: f64,
    pub w: f64,
}

/// Weights of one image's reference captions, in caption order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaptionWeights {
    pub image_id: ImageId,
    pub captions: Vec<CaptionWeight>,
}

impl CaptionWeights {
    /// `w_i = lambda_w - alpha_w * v_i / max(v)`; every weight is `lambda_w`
    /// when all `v_i` are zero.
    pub fn from_scores(image_id: ImageId, v: &[f64], lambda_w: f64, alpha_w: f64) -> Result<Self> {
        check_lambda_alpha(lambda_w, alpha_w)?;
        if let Some(bad) = v.iter().find(|x| !(x.is_finite() && **x >= 0.0)) {
            return Err(Error::validation(format!(
                "image {image_id}: CIDErBtw values must be finite and >= 0, got {bad}"
            )));
        }
        let max = v.iter().copied().fold(0.0, f64::max);
        let captions = v
            .iter()
            .enumerate()
            .map(|(index, &v)| CaptionWeight {
                index,
                v,
                w: if max > 0.0 {
                    lambda_w - alpha_w * (v / max)
                } else {
                    lambda_w
                },
            })
            .collect();
        Ok(CaptionWeights { image_id, captions })
    }

    pub fn len(&self) -> usize {
        self.captions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.captions.is_empty()
    }

    pub fn weight(&self, index: usize) -> Option<f64> {
        self.captions.iter().find(|c| c.index == index).map(|c| c.w)
    }

    pub fn uniform(image_id: ImageId, n: usize, w: f64) -> Self {
        CaptionWeights {
            image_id,
            captions: (0..n)
                .map(|index| CaptionWeight { index, v: 0.0, w })
                .collect(),
        }
    }
}

/// Caption weights of `target` from the CIDErBtw of each of its references
/// against `set`, scored with the default CIDEr-D.
pub fn caption_weights(
    target: ImageId,
    set: &SimilarSet,
    corpus: &Corpus,
    df: &DfTable,
    lambda_w: f64,
    alpha_w: f64,
) -> Result<CaptionWeights> {
    let mut ids: Vec<ImageId> = set.ids().collect();
    ids.push(target);
    let refs = ReferenceVectors::for_images(corpus, &ids, df);
    caption_weights_with(
        target,
        set,
        &refs,
        CiderVariant::default(),
        lambda_w,
        alpha_w,
    )
}

/// As [`caption_weights`], with precomputed reference vectors covering the
/// target and every member of `set`.
pub fn caption_weights_with(
    target: ImageId,
    set: &SimilarSet,
    refs: &ReferenceVectors,
    variant: CiderVariant,
    lambda_w: f64,
    alpha_w: f64,
) -> Result<CaptionWeights> {
    check_lambda_alpha(lambda_w, alpha_w)?;
    if set.ids().any(|id| id == target) {
        return Err(Error::validation(format!(
            "similar set used for image {target} contains the image itself"
        )));
    }
    let v = refs
        .get(target)?
        .iter()
        .map(|c| cider_btw_vector(c, set, refs, variant))
        .collect::<Result<Vec<f64>>>()?;
    CaptionWeights::from_scores(target, &v, lambda_w, alpha_w)
}

/// Long-tailed word weight parameters: ranks up to `f_b` weigh 1, rising
/// linearly to `1 + amplitude` at `f_e`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LtwParams {
    pub f_b: usize,
    pub f_e: usize,
    pub amplitude: f64,
}

impl LtwParams {
    pub fn new(f_b: usize, f_e: usize, amplitude: f64) -> Result<Self> {
        if f_b < 1 || f_b >= f_e {
            return Err(Error::invalid(format!(
                "LTW needs 1 <= F_b < F_e, got F_b={f_b} F_e={f_e}"
            )));
        }
        if !(amplitude.is_finite() && amplitude > 0.0) {
            return Err(Error::invalid(format!(
                "LTW amplitude must be positive, got {amplitude}"
            )));
        }
        Ok(LtwParams {
            f_b,
            f_e,
            amplitude,
        })
    }
}

impl Default for LtwParams {
    fn default() -> Self {
        LtwParams {
            f_b: 5000,
            f_e: 9487,
            amplitude: 1.0,
        }
    }
}

/// Weight of a word with frequency rank `rank` (1 = most frequent). Ranks
/// past `f_e` stay at `1 + amplitude`. Non-integer ranks interpolate.
pub fn ltw_weight(rank: f64, p: &LtwParams) -> f64 {
    let (f_b, f_e) = (p.f_b as f64, p.f_e as f64);
    if rank <= f_b {
        1.0
    } else if rank <= f_e {
        1.0 + p.amplitude * (rank - f_b) / (f_e - f_b)
    } else {
        1.0 + p.amplitude
    }
}

/// LTW weight of a token; out-of-vocabulary tokens take rank `vocab_size + 1`.
pub fn token_ltw(token: &str, vocab: &VocabStats, p: &LtwParams) -> f64 {
    let rank = vocab.rank(token).unwrap_or(vocab.vocab_size() + 1);
    ltw_weight(rank as f64, p)
}
