//! Caption corpus ingestion, tokenization and word-frequency statistics.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{list_offenders, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ImageId(pub u64);

impl fmt::Display for ImageId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Val, Split::Test];

    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" | "restval" => Ok(Split::Train),
            "val" => Ok(Split::Val),
            "test" => Ok(Split::Test),
            other => Err(Error::invalid(format!(
                "unknown split `{other}` (expected train, val or test)"
            ))),
        }
    }
}

/// Splits raw caption text into lowercase alphanumeric tokens.
///
/// Every character outside `[a-z0-9]` (after lowercasing) acts as a separator,
/// so `"don't"` becomes `["don", "t"]`.
pub fn tokenize(raw: &str) -> Vec<String> {
    let mut tokens = Vec::new();
    let mut current = String::new();
    for ch in raw.chars().flat_map(char::to_lowercase) {
        if ch.is_ascii_lowercase() || ch.is_ascii_digit() {
            current.push(ch);
        } else if !current.is_empty() {
            tokens.push(std::mem::take(&mut current));
        }
    }
    if !current.is_empty() {
        tokens.push(current);
    }
    tokens
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Caption {
    pub image_id: ImageId,
    pub caption_index: usize,
    pub tokens: Vec<String>,
}

impl Caption {
    /// Tokenizes `raw`, rejecting text with no alphanumeric content.
    pub fn parse(image_id: ImageId, caption_index: usize, raw: &str) -> Result<Self> {
        let tokens = tokenize(raw);
        if tokens.is_empty() {
            return Err(Error::validation(format!(
                "caption {caption_index} of image {image_id} has no tokens: {raw:?}"
            )));
        }
        Ok(Caption {
            image_id,
            caption_index,
            tokens,
        })
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn text(&self) -> String {
        self.tokens.join(" ")
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawImage {
    pub id: u64,
    #[serde(default)]
    pub file_name: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawAnnotation {
    pub image_id: u64,
    pub caption: String,
}

/// COCO-caption annotation file contents. Unknown fields are ignored.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawAnnotations {
    pub images: Vec<RawImage>,
    pub annotations: Vec<RawAnnotation>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Image {
    pub id: ImageId,
    pub file_name: String,
    pub split: Split,
    pub captions: Vec<Caption>,
}

/// Images with their tokenized reference captions and split membership.
///
/// Immutable once built; every image has at least one caption and exactly one split.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Corpus {
    images: BTreeMap<ImageId, Image>,
}

impl Corpus {
    /// Builds a corpus from already-tokenized images, checking the type invariants.
    pub fn from_images(images: impl IntoIterator<Item = Image>) -> Result<Self> {
        let mut map = BTreeMap::new();
        for image in images {
            if image.captions.is_empty() {
                return Err(Error::validation(format!(
                    "image {} has no captions",
                    image.id
                )));
            }
            for (idx, cap) in image.captions.iter().enumerate() {
                if cap.image_id != image.id || cap.caption_index != idx {
                    return Err(Error::validation(format!(
                        "caption {idx} of image {} is mislabelled as ({}, {})",
                        image.id, cap.image_id, cap.caption_index
                    )));
                }
                if cap.tokens.is_empty()
                    || cap
                        .tokens
                        .iter()
                        .any(|t| t.is_empty() || t.chars().any(char::is_whitespace))
                {
                    return Err(Error::validation(format!(
                        "caption {idx} of image {} has empty or whitespace tokens",
                        image.id
                    )));
                }
            }
            let id = image.id;
            if map.insert(id, image).is_some() {
                return Err(Error::validation(format!("duplicate image id {id}")));
            }
        }
        Ok(Corpus { images: map })
    }

    /// Joins raw annotations with a split assignment.
    pub fn from_raw(raw: RawAnnotations, splits: &BTreeMap<ImageId, Split>) -> Result<Self> {
        let mut images: BTreeMap<ImageId, Image> = BTreeMap::new();
        for img in raw.images {
            let id = ImageId(img.id);
            if images.contains_key(&id) {
                return Err(Error::validation(format!("duplicate image id {id}")));
            }
            images.insert(
                id,
                Image {
                    id,
                    file_name: img.file_name,
                    split: Split::Train,
                    captions: Vec::new(),
                },
            );
        }

        let mut orphans = BTreeSet::new();
        for ann in raw.annotations {
            let id = ImageId(ann.image_id);
            match images.get_mut(&id) {
                Some(image) => {
                    let caption = Caption::parse(id, image.captions.len(), &ann.caption)?;
                    image.captions.push(caption);
                }
                None => {
                    orphans.insert(id);
                }
            }
        }
        if !orphans.is_empty() {
            let orphans: Vec<_> = orphans.into_iter().collect();
            return Err(Error::validation(format!(
                "annotations reference unknown image ids: {}",
                list_offenders(&orphans, 20)
            )));
        }

        let empty: Vec<_> = images
            .values()
            .filter(|i| i.captions.is_empty())
            .map(|i| i.id)
            .collect();
        if !empty.is_empty() {
            return Err(Error::validation(format!(
                "images without captions: {}",
                list_offenders(&empty, 20)
            )));
        }

        let unknown: Vec<_> = splits
            .keys()
            .filter(|id| !images.contains_key(id))
            .copied()
            .collect();
        if !unknown.is_empty() {
            return Err(Error::validation(format!(
                "split file references unknown image ids: {}",
                list_offenders(&unknown, 20)
            )));
        }
        let uncovered: Vec<_> = images
            .keys()
            .filter(|id| !splits.contains_key(id))
            .copied()
            .collect();
        if !uncovered.is_empty() {
            return Err(Error::validation(format!(
                "images missing from split file: {}",
                list_offenders(&uncovered, 20)
            )));
        }
        for (id, image) in images.iter_mut() {
            image.split = splits[id];
        }
        Ok(Corpus { images })
    }

    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }

    pub fn image(&self, id: ImageId) -> Option<&Image> {
        self.images.get(&id)
    }

    pub fn images(&self) -> impl Iterator<Item = &Image> {
        self.images.values()
    }

    pub fn captions(&self, id: ImageId) -> Option<&[Caption]> {
        self.images.get(&id).map(|i| i.captions.as_slice())
    }

    pub(crate) fn require_captions(&self, id: ImageId) -> Result<&[Caption]> {
        self.captions(id)
            .ok_or_else(|| Error::validation(format!("image {id} is not in the corpus")))
    }

    pub fn split_of(&self, id: ImageId) -> Option<Split> {
        self.images.get(&id).map(|i| i.split)
    }

    /// Image ids of `split` in ascending order.
    pub fn image_ids(&self, split: Split) -> Vec<ImageId> {
        self.images
            .values()
            .filter(|i| i.split == split)
            .map(|i| i.id)
            .collect()
    }

    pub fn split_counts(&self) -> BTreeMap<Split, usize> {
        let mut counts = BTreeMap::new();
        for image in self.images.values() {
            *counts.entry(image.split).or_insert(0) += 1;
        }
        counts
    }

    pub fn to_raw(&self) -> RawAnnotations {
        let images = self
            .images
            .values()
            .map(|i| RawImage {
                id: i.id.0,
                file_name: i.file_name.clone(),
            })
            .collect();
        let annotations = self
            .images
            .values()
            .flat_map(|i| i.captions.iter())
            .map(|c| RawAnnotation {
                image_id: c.image_id.0,
                caption: c.text(),
            })
            .collect();
        RawAnnotations {
            images,
            annotations,
        }
    }

    pub fn write_annotations(&self, path: &Path) -> Result<()> {
        let json =
            serde_json::to_string(&self.to_raw()).map_err(|e| Error::Internal(e.to_string()))?;
        fs::write(path, json).map_err(|e| Error::io(path, e))
    }

    pub fn write_split(&self, path: &Path) -> Result<()> {
        let mut out = String::new();
        for image in self.images.values() {
            out.push_str(&format!("{}\t{}\n", image.id, image.split));
        }
        fs::write(path, out).map_err(|e| Error::io(path, e))
    }
}

/// Reads a COCO-caption annotation file and a `<image_id>\t<split>` file.
pub fn load_corpus(annotations_path: &Path, split_path: &Path) -> Result<Corpus> {
    let text = fs::read_to_string(annotations_path).map_err(|e| Error::io(annotations_path, e))?;
    let raw: RawAnnotations = serde_json::from_str(&text).map_err(|e| Error::Parse {
        path: annotations_path.to_path_buf(),
        offset: byte_offset(&text, e.line(), e.column()),
        message: e.to_string(),
    })?;
    let splits = load_split(split_path)?;
    Corpus::from_raw(raw, &splits)
}

pub fn load_split(path: &Path) -> Result<BTreeMap<ImageId, Split>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_split(&text, path)
}

fn parse_split(text: &str, path: &Path) -> Result<BTreeMap<ImageId, Split>> {
    let mut splits = BTreeMap::new();
    let mut offset = 0;
    for line in text.split_inclusive('\n') {
        let start = offset;
        offset += line.len();
        let line = line.trim_end_matches(['\n', '\r']);
        if line.trim().is_empty() {
            continue;
        }
        let parse_err = |message: String| Error::Parse {
            path: path.to_path_buf(),
            offset: start,
            message,
        };
        let (id, split) = line
            .split_once('\t')
            .ok_or_else(|| parse_err(format!("expected `<image_id>\\t<split>`, got {line:?}")))?;
        let id: u64 = id
            .trim()
            .parse()
            .map_err(|_| parse_err(format!("bad image id {id:?}")))?;
        let split: Split = split
            .trim()
            .parse()
            .map_err(|e: Error| parse_err(e.to_string()))?;
        if splits.insert(ImageId(id), split).is_some() {
            return Err(parse_err(format!("image {id} listed twice")));
        }
    }
    Ok(splits)
}

fn byte_offset(text: &str, line: usize, column: usize) -> usize {
    if line == 0 {
        return 0;
    }
    let line_start: usize = text
        .split_inclusive('\n')
        .take(line - 1)
        .map(str::len)
        .sum();
    (line_start + column.saturating_sub(1)).min(text.len())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct VocabEntry {
    pub count: u64,
    /// 1-based frequency rank.
    pub rank: usize,
}

/// Word counts and frequency ranks over one split.
///
/// Rank 1 is the most frequent word; equal counts are ordered by ascending token.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VocabStats {
    pub split: Split,
    entries: BTreeMap<String, VocabEntry>,
    by_rank: Vec<String>,
}

impl VocabStats {
    /// Counts tokens over every reference caption of `split`, dropping words
    /// seen fewer than `min_count` times.
    pub fn build(corpus: &Corpus, split: Split, min_count: u64) -> Result<Self> {
        let mut counts: HashMap<&str, u64> = HashMap::new();
        let mut images = 0;
        for image in corpus.images().filter(|i| i.split == split) {
            images += 1;
            for cap in &image.captions {
                for tok in &cap.tokens {
                    *counts.entry(tok.as_str()).or_insert(0) += 1;
                }
            }
        }
        if images == 0 {
            return Err(Error::validation(format!("split {split} has no images")));
        }
        Ok(Self::from_counts(
            split,
            counts
                .into_iter()
                .filter(|&(_, c)| c >= min_count.max(1))
                .map(|(t, c)| (t.to_string(), c)),
        ))
    }

    pub fn from_counts(split: Split, counts: impl IntoIterator<Item = (String, u64)>) -> Self {
        let mut ordered: Vec<(String, u64)> = counts.into_iter().collect();
        ordered.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        let mut entries = BTreeMap::new();
        let mut by_rank = Vec::with_capacity(ordered.len());
        for (i, (token, count)) in ordered.into_iter().enumerate() {
            entries.insert(token.clone(), VocabEntry { count, rank: i + 1 });
            by_rank.push(token);
        }
        VocabStats {
            split,
            entries,
            by_rank,
        }
    }

    pub fn vocab_size(&self) -> usize {
        self.by_rank.len()
    }

    pub fn is_empty(&self) -> bool {
        self.by_rank.is_empty()
    }

    pub fn get(&self, token: &str) -> Option<VocabEntry> {
        self.entries.get(token).copied()
    }

    pub fn rank(&self, token: &str) -> Option<usize> {
        self.entries.get(token).map(|e| e.rank)
    }

    /// Tokens in rank order, most frequent first.
    pub fn ranked(&self) -> impl Iterator<Item = (&str, VocabEntry)> {
        self.by_rank
            .iter()
            .map(|t| (t.as_str(), self.entries[t.as_str()]))
    }

    pub fn total_count(&self) -> u64 {
        self.entries.values().map(|e| e.count).sum()
    }

    pub fn to_tsv(&self) -> String {
        let mut out = String::from("token\tcount\trank\n");
        for (token, e) in self.ranked() {
            out.push_str(&format!("{token}\t{}\t{}\n", e.count, e.rank));
        }
        out
    }
}

pub fn build_vocab_stats(corpus: &Corpus, split: Split) -> Result<VocabStats> {
    VocabStats::build(corpus, split, 1)
}

/// One step of the cumulative word-frequency curve.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CurvePoint {
    /// The bucket covers words with count below `2^log2_bound`.
    pub log2_bound: u32,
    pub cumulative_words: usize,
}

impl CurvePoint {
    pub fn bound(&self) -> u64 {
        1u64 << self.log2_bound
    }
}

/// Number of words whose count is below `2^b`, for `b = 1..=B` where
/// `2^B` is the first power of two above the largest count.
pub fn frequency_curve(stats: &VocabStats) -> Result<Vec<CurvePoint>> {
    let max = stats
        .ranked()
        .map(|(_, e)| e.count)
        .max()
        .ok_or_else(|| Error::validation("empty vocabulary"))?;
    let top = 64 - max.leading_zeros();
    // counts are sorted descending by rank; walk from the rare end.
    let mut counts: Vec<u64> = stats.ranked().map(|(_, e)| e.count).collect();
    counts.reverse();
    let mut curve = Vec::with_capacity(top as usize);
    let mut seen = 0;
    for b in 1..=top {
        let bound = 1u64 << b;
        while seen < counts.len() && counts[seen] < bound {
            seen += 1;
        }
        curve.push(CurvePoint {
            log2_bound: b,
            cumulative_words: seen,
        });
    }
    Ok(curve)
}

pub fn curve_to_tsv(curve: &[CurvePoint]) -> String {
    let mut out = String::from("log2_bound\tcount_below\tcumulative_words\n");
    for p in curve {
        out.push_str(&format!(
            "{}\t{}\t{}\n",
            p.log2_bound,
            p.bound(),
            p.cumulative_words
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toks(s: &str) -> Vec<String> {
        s.split_whitespace().map(String::from).collect()
    }

    pub(crate) fn image(id: u64, split: Split, caps: &[&str]) -> Image {
        Image {
            id: ImageId(id),
            file_name: format!("{id}.jpg"),
            split,
            captions: caps
                .iter()
                .enumerate()
                .map(|(i, c)| Caption {
                    image_id: ImageId(id),
                    caption_index: i,
                    tokens: toks(c),
                })
                .collect(),
        }
    }

    #[test]
    fn tokenize_examples() {
        assert_eq!(
            tokenize("A man riding a horse."),
            toks("a man riding a horse")
        );
        assert_eq!(tokenize("Cat!!!"), toks("cat"));
        assert_eq!(tokenize("don't stop"), toks("don t stop"));
        assert!(tokenize("?!...").is_empty());
        assert!(tokenize("").is_empty());
        assert_eq!(tokenize("Two  DOGS\tplay 2x"), toks("two dogs play 2x"));
    }

    #[test]
    fn tokenize_idempotent_on_output() {
        let t = tokenize("The Café's 3 TABLES, (outside)!");
        assert_eq!(tokenize(&t.join(" ")), t);
    }

    #[test]
    fn from_raw_counts_images_and_captions() {
        let raw = RawAnnotations {
            images: vec![
                RawImage {
                    id: 1,
                    file_name: "a.jpg".into(),
                },
                RawImage {
                    id: 2,
                    file_name: "b.jpg".into(),
                },
            ],
            annotations: vec![
                RawAnnotation {
                    image_id: 1,
                    caption: "A dog.".into(),
                },
                RawAnnotation {
                    image_id: 2,
                    caption: "A cat.".into(),
                },
                RawAnnotation {
                    image_id: 1,
                    caption: "A brown dog".into(),
                },
                RawAnnotation {
                    image_id: 2,
                    caption: "Cat on mat".into(),
                },
            ],
        };
        let splits = BTreeMap::from([(ImageId(1), Split::Train), (ImageId(2), Split::Val)]);
        let corpus = Corpus::from_raw(raw, &splits).unwrap();
        assert_eq!(corpus.len(), 2);
        let total: usize = corpus.images().map(|i| i.captions.len()).sum();
        assert_eq!(total, 4);
        assert_eq!(
            corpus.captions(ImageId(1)).unwrap()[1].tokens,
            toks("a brown dog")
        );
        assert_eq!(corpus.split_of(ImageId(2)), Some(Split::Val));
    }

    #[test]
    fn from_raw_rejects_orphan_annotation() {
        let raw = RawAnnotations {
            images: vec![RawImage {
                id: 1,
                file_name: String::new(),
            }],
            annotations: vec![
                RawAnnotation {
                    image_id: 1,
                    caption: "a dog".into(),
                },
                RawAnnotation {
                    image_id: 9,
                    caption: "a cat".into(),
                },
            ],
        };
        let splits = BTreeMap::from([(ImageId(1), Split::Train)]);
        let err = Corpus::from_raw(raw, &splits).unwrap_err();
        assert!(
            matches!(err, Error::Validation(ref m) if m.contains('9')),
            "{err}"
        );
    }

    #[test]
    fn from_raw_rejects_unknown_split_ids_and_empty_images() {
        let raw = RawAnnotations {
            images: vec![RawImage {
                id: 1,
                file_name: String::new(),
            }],
            annotations: vec![RawAnnotation {
                image_id: 1,
                caption: "a dog".into(),
            }],
        };
        let splits = BTreeMap::from([(ImageId(1), Split::Train), (ImageId(7), Split::Test)]);
        let err = Corpus::from_raw(raw.clone(), &splits).unwrap_err();
        assert!(err.to_string().contains('7'));

        let mut no_caps = raw.clone();
        no_caps.images.push(RawImage {
            id: 2,
            file_name: String::new(),
        });
        let splits = BTreeMap::from([(ImageId(1), Split::Train), (ImageId(2), Split::Train)]);
        assert!(Corpus::from_raw(no_caps, &splits).is_err());

        let mut punct = raw;
        punct.annotations.push(RawAnnotation {
            image_id: 1,
            caption: "!!".into(),
        });
        let splits = BTreeMap::from([(ImageId(1), Split::Train)]);
        assert!(Corpus::from_raw(punct, &splits).is_err());
    }

    #[test]
    fn malformed_json_reports_byte_offset() {
        let dir = tempfile::tempdir().unwrap();
        let ann = dir.path().join("ann.json");
        let split = dir.path().join("split.tsv");
        fs::write(&ann, "{\"images\": [\n  {\"id\": 1,, }]}").unwrap();
        fs::write(&split, "1\ttrain\n").unwrap();
        match load_corpus(&ann, &split).unwrap_err() {
            Error::Parse { offset, .. } => assert_eq!(offset, 24),
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn split_file_parsing() {
        let p = Path::new("s.tsv");
        let s = parse_split("1\ttrain\n2\tval\n\n3\trestval\n4\ttest\n", p).unwrap();
        assert_eq!(s[&ImageId(3)], Split::Train);
        assert_eq!(s.len(), 4);
        match parse_split("1\ttrain\n2 val\n", p).unwrap_err() {
            Error::Parse { offset, .. } => assert_eq!(offset, 8),
            other => panic!("unexpected {other}"),
        }
        assert!(parse_split("1\tdev\n", p).is_err());
    }

    #[test]
    fn vocab_ranks_by_count_then_token() {
        let corpus = Corpus::from_images([
            image(
                1,
                Split::Train,
                &["a a a a a dog dog zebra", "a a a a a dog"],
            ),
            image(2, Split::Test, &["zebra zebra zebra"]),
        ])
        .unwrap();
        let stats = build_vocab_stats(&corpus, Split::Train).unwrap();
        assert_eq!(stats.rank("a"), Some(1));
        assert_eq!(stats.get("a").unwrap().count, 10);
        assert_eq!(stats.rank("dog"), Some(2));
        assert_eq!(stats.rank("zebra"), Some(3));
        assert_eq!(stats.total_count(), 14);

        let tied = VocabStats::from_counts(
            Split::Train,
            [("pear".to_string(), 2), ("apple".to_string(), 2)],
        );
        assert_eq!(tied.rank("apple"), Some(1));
        assert_eq!(tied.rank("pear"), Some(2));

        assert!(build_vocab_stats(&corpus, Split::Val).is_err());
        let cut = VocabStats::build(&corpus, Split::Train, 3).unwrap();
        assert_eq!(cut.vocab_size(), 2);
    }

    #[test]
    fn curve_examples() {
        let stats = VocabStats::from_counts(
            Split::Train,
            [("a".to_string(), 10), ("dog".to_string(), 3)],
        );
        let curve = frequency_curve(&stats).unwrap();
        assert_eq!(curve.last().unwrap().cumulative_words, 2);
        assert_eq!(
            curve.iter().map(|p| p.cumulative_words).collect::<Vec<_>>(),
            vec![0, 1, 1, 2]
        );

        let single = VocabStats::from_counts(Split::Train, [("x".to_string(), 1)]);
        let curve = frequency_curve(&single).unwrap();
        assert_eq!(
            curve,
            vec![CurvePoint {
                log2_bound: 1,
                cumulative_words: 1
            }]
        );

        let empty = VocabStats::from_counts(Split::Train, []);
        assert!(frequency_curve(&empty).is_err());
    }

    #[test]
    fn corpus_round_trips_through_files() {
        let corpus = Corpus::from_images([
            image(3, Split::Train, &["a man riding a horse", "man on horse"]),
            image(5, Split::Val, &["two cats"]),
        ])
        .unwrap();
        let dir = tempfile::tempdir().unwrap();
        let ann = dir.path().join("ann.json");
        let split = dir.path().join("split.tsv");
        corpus.write_annotations(&ann).unwrap();
        corpus.write_split(&split).unwrap();
        assert_eq!(load_corpus(&ann, &split).unwrap(), corpus);
    }
}
