//! Between-set CIDEr (CIDErBtw), caption-file evaluation, retrieval recall
//! and metric correlation.

mod correlation;
mod recall;
mod report;

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::Path;

use serde::Deserialize;

use crate::corpus::{Caption, Corpus, ImageId};
use crate::error::{list_offenders, Error, Result};
use crate::ngram::{cider_d, tfidf_vector, CiderVariant, DfTable, TfIdfVector};
use crate::simset::{ReferenceVectors, SimilarSet};

pub use correlation::{correlate, kendall_tau_b, pearson, spearman, Correlation};
pub use recall::recall_at_k;
pub use report::{evaluate, EvalOptions, EvalReport, ImageEval, RetrievalInputs};

/// Mean CIDEr of `candidate` against the references of each similar image,
/// averaged over the set: `(1/K) sum_k (1/N_k) sum_n g(c, c_n^k)`.
pub fn cider_btw_vector(
    candidate: &TfIdfVector,
    set: &SimilarSet,
    refs: &ReferenceVectors,
    variant: CiderVariant,
) -> Result<f64> {
    if set.neighbors.is_empty() {
        return Err(Error::validation(format!(
            "similar set of image {} is empty",
            set.target
        )));
    }
    let mut total = 0.0;
    for id in set.ids() {
        total += cider_d(candidate, refs.get(id)?, variant)?;
    }
    Ok(total / set.k() as f64)
}

/// CIDErBtw of one caption under CIDEr-D.
pub fn cider_btw(
    caption: &Caption,
    set: &SimilarSet,
    corpus: &Corpus,
    df: &DfTable,
) -> Result<f64> {
    let ids: Vec<ImageId> = set.ids().collect();
    let refs = ReferenceVectors::for_images(corpus, &ids, df);
    cider_btw_vector(
        &tfidf_vector(caption, df),
        set,
        &refs,
        CiderVariant::default(),
    )
}

/// One generated caption per image, tokenized.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GeneratedCaptions {
    captions: BTreeMap<ImageId, Caption>,
}

#[derive(Deserialize)]
struct GeneratedRecord {
    image_id: u64,
    caption: String,
}

impl GeneratedCaptions {
    pub fn new(captions: impl IntoIterator<Item = (ImageId, Vec<String>)>) -> Result<Self> {
        let mut map = BTreeMap::new();
        for (id, tokens) in captions {
            if tokens.is_empty() {
                return Err(Error::validation(format!("empty caption for image {id}")));
            }
            let cap = Caption {
                image_id: id,
                caption_index: 0,
                tokens,
            };
            if map.insert(id, cap).is_some() {
                return Err(Error::validation(format!(
                    "image {id} has two generated captions"
                )));
            }
        }
        Ok(GeneratedCaptions { captions: map })
    }

    /// Reads `{"image_id":id,"caption":"..."}` lines.
    pub fn parse(text: &str, path: &Path) -> Result<Self> {
        let mut offset = 0;
        let mut parsed = Vec::new();
        for line in text.split_inclusive('\n') {
            let start = offset;
            offset += line.len();
            if line.trim().is_empty() {
                continue;
            }
            let rec: GeneratedRecord = serde_json::from_str(line).map_err(|e| Error::Parse {
                path: path.to_path_buf(),
                offset: start + e.column().saturating_sub(1),
                message: e.to_string(),
            })?;
            let id = ImageId(rec.image_id);
            let cap = Caption::parse(id, 0, &rec.caption)?;
            parsed.push((id, cap.tokens));
        }
        Self::new(parsed)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, path)
    }

    pub fn len(&self) -> usize {
        self.captions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.captions.is_empty()
    }

    pub fn get(&self, id: ImageId) -> Option<&Caption> {
        self.captions.get(&id)
    }

    pub fn iter(&self) -> impl Iterator<Item = (ImageId, &Caption)> {
        self.captions.iter().map(|(&id, c)| (id, c))
    }

    /// Distinct tokens used across all generated captions.
    pub fn vocabulary_size(&self) -> usize {
        self.captions
            .values()
            .flat_map(|c| c.tokens.iter())
            .collect::<BTreeSet<_>>()
            .len()
    }

    pub(crate) fn check_ids_in(&self, corpus: &Corpus, split: crate::corpus::Split) -> Result<()> {
        let outside: Vec<ImageId> = self
            .captions
            .keys()
            .copied()
            .filter(|&id| corpus.split_of(id) != Some(split))
            .collect();
        if outside.is_empty() {
            Ok(())
        } else {
            Err(Error::validation(format!(
                "generated captions for images outside split {split}: {}",
                list_offenders(&outside, 20)
            )))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{Image, Split};
    use crate::ngram::build_df;
    use crate::simset::Strategy;

    fn toks(s: &str) -> Vec<String> {
        s.split_whitespace().map(String::from).collect()
    }

    fn corpus(images: &[&[&str]]) -> Corpus {
        Corpus::from_images(images.iter().enumerate().map(|(i, caps)| {
            Image {
                id: ImageId(i as u64),
                file_name: String::new(),
                split: Split::Train,
                captions: caps
                    .iter()
                    .enumerate()
                    .map(|(k, c)| Caption {
                        image_id: ImageId(i as u64),
                        caption_index: k,
                        tokens: toks(c),
                    })
                    .collect(),
            }
        }))
        .unwrap()
    }

    fn set(target: u64, ids: &[u64]) -> SimilarSet {
        SimilarSet {
            target: ImageId(target),
            neighbors: ids.iter().map(|&i| (ImageId(i), 0.0)).collect(),
            strategy: Strategy::Random,
        }
    }

    #[test]
    fn boundary_values() {
        let c = corpus(&[
            &["a small red boat on a calm lake"],
            &[
                "a small red boat on a calm lake",
                "a small red boat on a calm lake",
            ],
            &["a small red boat on a calm lake"],
            &["two dogs run across the snowy field"],
        ]);
        let df = build_df(&c, Split::Train).unwrap();
        let cap = &c.captions(ImageId(0)).unwrap()[0];
        assert_eq!(cider_btw(cap, &set(0, &[1, 2]), &c, &df).unwrap(), 10.0);
        assert_eq!(cider_btw(cap, &set(0, &[3]), &c, &df).unwrap(), 0.0);
        assert!(cider_btw(cap, &set(0, &[]), &c, &df).is_err());
    }

    #[test]
    fn generated_file_parsing() {
        let text = "{\"image_id\":3,\"caption\":\"A Dog.\"}\n\n{\"image_id\":1,\"caption\":\"two cats\"}\n";
        let g = GeneratedCaptions::parse(text, Path::new("g")).unwrap();
        assert_eq!(g.len(), 2);
        assert_eq!(g.get(ImageId(3)).unwrap().tokens, toks("a dog"));
        assert_eq!(g.vocabulary_size(), 4);
        let dup = "{\"image_id\":3,\"caption\":\"a\"}\n{\"image_id\":3,\"caption\":\"b\"}\n";
        assert!(GeneratedCaptions::parse(dup, Path::new("g")).is_err());
        assert!(
            GeneratedCaptions::parse("{\"image_id\":3,\"caption\":\"...\"}", Path::new("g"))
                .is_err()
        );
        assert!(matches!(
            GeneratedCaptions::parse("{\"image_id\":3}", Path::new("g")),
            Err(Error::Parse { .. })
        ));
    }
}
