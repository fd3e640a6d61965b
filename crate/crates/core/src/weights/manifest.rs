use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{caption_weights_with, ltw_weight, CaptionWeight, CaptionWeights, Hyperparams};
use crate::corpus::{Corpus, ImageId, Split, VocabStats};
use crate::error::{list_offenders, Error, Result};
use crate::fixed::Fixed6;
use crate::ngram::DfTable;
use crate::simset::{ReferenceVectors, SimilarSet, SimilarSets};

/// Which similar set scores the captions of a negative image `I_k`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NegativeWeighting {
    /// `I_k`'s own similar set.
    #[default]
    OwnSet,
    /// The target's set, with `I_k` replaced by the target.
    TargetSet,
}

impl NegativeWeighting {
    pub fn as_str(self) -> &'static str {
        match self {
            NegativeWeighting::OwnSet => "own-set",
            NegativeWeighting::TargetSet => "target-set",
        }
    }
}

impl fmt::Display for NegativeWeighting {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for NegativeWeighting {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "own-set" => Ok(NegativeWeighting::OwnSet),
            "target-set" => Ok(NegativeWeighting::TargetSet),
            other => Err(Error::invalid(format!(
                "unknown negative weighting `{other}` (expected own-set or target-set)"
            ))),
        }
    }
}

/// Positive and negative caption weights for one training image.
#[derive(Debug, Clone, PartialEq)]
pub struct NegativeManifest {
    pub target: ImageId,
    pub positives: CaptionWeights,
    /// One entry per similar image, in set order.
    pub negatives: Vec<CaptionWeights>,
    pub alpha_ns: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LtwEntry {
    pub rank: usize,
    pub token: String,
    pub w: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WeightManifest {
    pub split: Split,
    pub weighting: NegativeWeighting,
    pub hyperparams: Hyperparams,
    pub ltw: Vec<LtwEntry>,
    pub records: Vec<NegativeManifest>,
}

impl WeightManifest {
    pub fn record(&self, id: ImageId) -> Option<&NegativeManifest> {
        self.records
            .binary_search_by_key(&id, |r| r.target)
            .ok()
            .map(|i| &self.records[i])
    }
}

fn set_for(sets: &SimilarSets, id: ImageId, k: usize) -> Result<SimilarSet> {
    let set = sets
        .get(&id)
        .ok_or_else(|| Error::validation(format!("no similar set for image {id}")))?;
    if set.k() < k {
        return Err(Error::validation(format!(
            "similar set of image {id} has {} neighbors, K={k} requested",
            set.k()
        )));
    }
    Ok(set.truncated(k))
}

/// Computes caption weights, negatives and the LTW table for every image of `split`.
pub fn build_manifest(
    corpus: &Corpus,
    split: Split,
    sets: &SimilarSets,
    df: &DfTable,
    vocab: &VocabStats,
    hp: &Hyperparams,
    weighting: NegativeWeighting,
) -> Result<WeightManifest> {
    hp.validate()?;
    let ltw = hp.ltw()?;
    if df.split() != split || vocab.split != split {
        return Err(Error::validation(format!(
            "inconsistent splits: manifest {split}, document frequencies {}, vocabulary {}",
            df.split(),
            vocab.split
        )));
    }
    let ids = corpus.image_ids(split);
    if ids.is_empty() {
        return Err(Error::validation(format!("split {split} has no images")));
    }
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
    let chosen: BTreeMap<ImageId, SimilarSet> = ids
        .iter()
        .map(|&id| Ok((id, set_for(sets, id, hp.k)?)))
        .collect::<Result<_>>()?;
    let outside: Vec<ImageId> = chosen
        .values()
        .flat_map(|s| s.ids())
        .filter(|&id| corpus.split_of(id) != Some(split))
        .collect();
    if !outside.is_empty() {
        return Err(Error::validation(format!(
            "similar sets reference images outside split {split}: {}",
            list_offenders(&outside, 20)
        )));
    }

    let variant = hp.variant();
    let refs = ReferenceVectors::for_split(corpus, split, df);
    let positives: BTreeMap<ImageId, CaptionWeights> = ids
        .par_iter()
        .map(|&id| {
            let cw =
                caption_weights_with(id, &chosen[&id], &refs, variant, hp.lambda_w, hp.alpha_w)?;
            Ok((id, cw))
        })
        .collect::<Result<_>>()?;

    let records = ids
        .par_iter()
        .map(|&id| {
            let set = &chosen[&id];
            let negatives = set
                .ids()
                .map(|neg| match weighting {
                    NegativeWeighting::OwnSet => Ok(positives[&neg].clone()),
                    NegativeWeighting::TargetSet => {
                        let mut swapped = set.clone();
                        swapped.target = neg;
                        for entry in &mut swapped.neighbors {
                            if entry.0 == neg {
                                entry.0 = id;
                            }
                        }
                        caption_weights_with(neg, &swapped, &refs, variant, hp.lambda_w, hp.alpha_w)
                    }
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(NegativeManifest {
                target: id,
                positives: positives[&id].clone(),
                negatives,
                alpha_ns: hp.alpha_ns,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let ltw = vocab
        .ranked()
        .map(|(token, e)| LtwEntry {
            rank: e.rank,
            token: token.to_string(),
            w: ltw_weight(e.rank as f64, &ltw),
        })
        .collect();

    Ok(WeightManifest {
        split,
        weighting,
        hyperparams: *hp,
        ltw,
        records,
    })
}

#[derive(Serialize)]
struct HyperOut {
    lambda_w: Fixed6,
    alpha_w: Fixed6,
    alpha_r: Fixed6,
    alpha_ns: Fixed6,
    amplitude: Fixed6,
    f_b: usize,
    f_e: usize,
    k: usize,
    sigma: Fixed6,
}

#[derive(Serialize)]
struct LtwOut<'a> {
    rank: usize,
    token: &'a str,
    w: Fixed6,
}

#[derive(Serialize)]
struct HeaderOut<'a> {
    split: Split,
    negative_weighting: NegativeWeighting,
    hyperparameters: HyperOut,
    ltw: Vec<LtwOut<'a>>,
}

#[derive(Serialize)]
struct CaptionOut {
    index: usize,
    v: Fixed6,
    w: Fixed6,
}

#[derive(Serialize)]
struct NegativeOut {
    image_id: ImageId,
    captions: Vec<CaptionOut>,
}

#[derive(Serialize)]
struct RecordOut {
    image_id: ImageId,
    captions: Vec<CaptionOut>,
    negatives: Vec<NegativeOut>,
}

fn captions_out(cw: &CaptionWeights) -> Vec<CaptionOut> {
    cw.captions
        .iter()
        .map(|c| CaptionOut {
            index: c.index,
            v: Fixed6(c.v),
            w: Fixed6(c.w),
        })
        .collect()
}

/// Header line followed by one line per training image, ascending id.
pub fn manifest_to_string(m: &WeightManifest) -> Result<String> {
    let hp = &m.hyperparams;
    let header = HeaderOut {
        split: m.split,
        negative_weighting: m.weighting,
        hyperparameters: HyperOut {
            lambda_w: Fixed6(hp.lambda_w),
            alpha_w: Fixed6(hp.alpha_w),
            alpha_r: Fixed6(hp.alpha_r),
            alpha_ns: Fixed6(hp.alpha_ns),
            amplitude: Fixed6(hp.amplitude),
            f_b: hp.f_b,
            f_e: hp.f_e,
            k: hp.k,
            sigma: Fixed6(hp.sigma),
        },
        ltw: m
            .ltw
            .iter()
            .map(|e| LtwOut {
                rank: e.rank,
                token: &e.token,
                w: Fixed6(e.w),
            })
            .collect(),
    };
    let mut out = to_line(&header)?;
    out.push('\n');
    for r in &m.records {
        let rec = RecordOut {
            image_id: r.target,
            captions: captions_out(&r.positives),
            negatives: r
                .negatives
                .iter()
                .map(|n| NegativeOut {
                    image_id: n.image_id,
                    captions: captions_out(n),
                })
                .collect(),
        };
        out.push_str(&to_line(&rec)?);
        out.push('\n');
    }
    Ok(out)
}

fn to_line<T: Serialize>(value: &T) -> Result<String> {
    serde_json::to_string(value).map_err(|e| Error::Internal(e.to_string()))
}

pub fn export_manifest(m: &WeightManifest, path: &Path) -> Result<()> {
    fs::write(path, manifest_to_string(m)?).map_err(|e| Error::io(path, e))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct HeaderIn {
    split: Split,
    negative_weighting: NegativeWeighting,
    hyperparameters: Hyperparams,
    ltw: Vec<LtwEntry>,
}

#[derive(Deserialize)]
struct NegativeIn {
    image_id: ImageId,
    captions: Vec<CaptionWeight>,
}

#[derive(Deserialize)]
struct RecordIn {
    image_id: ImageId,
    captions: Vec<CaptionWeight>,
    negatives: Vec<NegativeIn>,
}

pub fn parse_manifest(text: &str, path: &Path) -> Result<WeightManifest> {
    let mut offset = 0;
    let mut header: Option<HeaderIn> = None;
    let mut records = Vec::new();
    for line in text.split_inclusive('\n') {
        let start = offset;
        offset += line.len();
        if line.trim().is_empty() {
            continue;
        }
        let parse_err = |e: serde_json::Error| Error::Parse {
            path: path.to_path_buf(),
            offset: start + e.column().saturating_sub(1),
            message: e.to_string(),
        };
        match &header {
            None => header = Some(serde_json::from_str(line).map_err(parse_err)?),
            Some(h) => {
                let r: RecordIn = serde_json::from_str(line).map_err(parse_err)?;
                records.push(NegativeManifest {
                    target: r.image_id,
                    positives: CaptionWeights {
                        image_id: r.image_id,
                        captions: r.captions,
                    },
                    negatives: r
                        .negatives
                        .into_iter()
                        .map(|n| CaptionWeights {
                            image_id: n.image_id,
                            captions: n.captions,
                        })
                        .collect(),
                    alpha_ns: h.hyperparameters.alpha_ns,
                });
            }
        }
    }
    let header = header.ok_or_else(|| Error::Parse {
        path: path.to_path_buf(),
        offset: 0,
        message: "empty manifest".into(),
    })?;
    header.hyperparameters.validate()?;
    if records.windows(2).any(|w| w[0].target >= w[1].target) {
        return Err(Error::validation(format!(
            "{}: manifest records are not in ascending image order",
            path.display()
        )));
    }
    Ok(WeightManifest {
        split: header.split,
        weighting: header.negative_weighting,
        hyperparams: header.hyperparameters,
        ltw: header.ltw,
        records,
    })
}

pub fn load_manifest(path: &Path) -> Result<WeightManifest> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_manifest(&text, path)
}
