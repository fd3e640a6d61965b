//! N-gram statistics, TF-IDF vectors and the CIDEr-D scorer.
//!
//! Vectors store the normalized term frequency times IDF for each order
//! `n = 1..=4`. Clipping compares raw n-gram counts (times IDF), which is
//! recovered from the stored weight and the number of n-grams of that order.

use std::cmp::Ordering;
use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::{Caption, Corpus, Split};
use crate::error::{Error, Result};

pub const MAX_N: usize = 4;

/// Sigma of the Gaussian length penalty in CIDEr-D.
pub const DEFAULT_SIGMA: f64 = 6.0;

/// A sequence of 1 to 4 tokens, stored space-joined.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NGram(Box<str>);

impl NGram {
    pub fn new<S: AsRef<str>>(tokens: &[S]) -> Result<Self> {
        if tokens.is_empty() || tokens.len() > MAX_N {
            return Err(Error::invalid(format!(
                "n-gram order must be 1..={MAX_N}, got {}",
                tokens.len()
            )));
        }
        if tokens
            .iter()
            .any(|t| t.as_ref().is_empty() || t.as_ref().contains(char::is_whitespace))
        {
            return Err(Error::invalid("n-gram tokens must be non-empty words"));
        }
        Ok(Self::join(tokens))
    }

    fn join<S: AsRef<str>>(tokens: &[S]) -> Self {
        let mut s = String::with_capacity(tokens.iter().map(|t| t.as_ref().len() + 1).sum());
        for (i, t) in tokens.iter().enumerate() {
            if i > 0 {
                s.push(' ');
            }
            s.push_str(t.as_ref());
        }
        NGram(s.into_boxed_str())
    }

    pub fn order(&self) -> usize {
        self.0.bytes().filter(|&b| b == b' ').count() + 1
    }

    pub fn tokens(&self) -> impl Iterator<Item = &str> {
        self.0.split(' ')
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for NGram {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

fn check_order(n: usize) -> Result<()> {
    if (1..=MAX_N).contains(&n) {
        Ok(())
    } else {
        Err(Error::invalid(format!(
            "n-gram order must be 1..={MAX_N}, got {n}"
        )))
    }
}

fn count_ngrams<S: AsRef<str>>(tokens: &[S], n: usize) -> HashMap<NGram, u32> {
    let mut counts = HashMap::new();
    if tokens.len() >= n {
        for window in tokens.windows(n) {
            *counts.entry(NGram::join(window)).or_insert(0) += 1;
        }
    }
    counts
}

/// All n-grams of order `n` with multiplicity; `max(0, T - n + 1)` in total.
pub fn extract_ngrams<S: AsRef<str>>(tokens: &[S], n: usize) -> Result<BTreeMap<NGram, u32>> {
    check_order(n)?;
    Ok(count_ngrams(tokens, n).into_iter().collect())
}

/// Document frequencies per n-gram order, where a document is one image's
/// full reference set.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DfTable {
    split: Split,
    image_count: usize,
    df: [HashMap<NGram, u32>; MAX_N],
}

impl DfTable {
    pub fn split(&self) -> Split {
        self.split
    }

    pub fn image_count(&self) -> usize {
        self.image_count
    }

    /// Zero for n-grams never seen in the reference split.
    pub fn df(&self, gram: &NGram) -> u32 {
        let n = gram.order();
        if n > MAX_N {
            return 0;
        }
        self.df[n - 1].get(gram).copied().unwrap_or(0)
    }

    /// `ln(|I| / max(df, 1))`.
    pub fn idf(&self, gram: &NGram) -> f64 {
        self.idf_for(self.df(gram))
    }

    fn idf_for(&self, df: u32) -> f64 {
        (self.image_count as f64 / f64::from(df.max(1))).ln()
    }

    pub fn len(&self, n: usize) -> usize {
        self.df.get(n.wrapping_sub(1)).map_or(0, HashMap::len)
    }

    /// Entries of order `n` sorted by n-gram.
    pub fn entries(&self, n: usize) -> Vec<(&NGram, u32)> {
        let mut out: Vec<_> = self
            .df
            .get(n.wrapping_sub(1))
            .into_iter()
            .flat_map(|m| m.iter().map(|(g, &d)| (g, d)))
            .collect();
        out.sort_unstable_by(|a, b| a.0.cmp(b.0));
        out
    }

    /// `#images=<count>` header, then `n\tgram\tdf` rows sorted by order and n-gram.
    pub fn to_tsv(&self) -> String {
        let mut out = format!("#images={}\t#split={}\n", self.image_count, self.split);
        for n in 1..=MAX_N {
            for (gram, df) in self.entries(n) {
                out.push_str(&format!("{n}\t{gram}\t{df}\n"));
            }
        }
        out
    }

    pub fn from_tsv(text: &str, path: &Path) -> Result<Self> {
        let err = |offset: usize, message: String| Error::Parse {
            path: path.to_path_buf(),
            offset,
            message,
        };
        let mut lines = text.split_inclusive('\n');
        let header = lines.next().unwrap_or("").trim_end();
        let mut image_count = None;
        let mut split = Split::Train;
        for field in header.split('\t') {
            if let Some(v) = field.strip_prefix("#images=") {
                image_count = Some(
                    v.parse::<usize>()
                        .map_err(|_| err(0, format!("bad image count {v:?}")))?,
                );
            } else if let Some(v) = field.strip_prefix("#split=") {
                split = v.parse().map_err(|e: Error| err(0, e.to_string()))?;
            }
        }
        let image_count = image_count.ok_or_else(|| err(0, "missing `#images=` header".into()))?;
        let mut df: [HashMap<NGram, u32>; MAX_N] = Default::default();
        let mut offset = header.len() + 1;
        for line in lines {
            let start = offset;
            offset += line.len();
            let line = line.trim_end_matches(['\n', '\r']);
            if line.is_empty() {
                continue;
            }
            let mut parts = line.split('\t');
            let (Some(n), Some(gram), Some(count), None) =
                (parts.next(), parts.next(), parts.next(), parts.next())
            else {
                return Err(err(
                    start,
                    format!("expected 3 tab-separated fields: {line:?}"),
                ));
            };
            let n: usize = n
                .parse()
                .map_err(|_| err(start, format!("bad order {n:?}")))?;
            let toks: Vec<&str> = gram.split(' ').collect();
            if toks.len() != n {
                return Err(err(start, format!("n-gram {gram:?} is not of order {n}")));
            }
            let gram = NGram::new(&toks).map_err(|e| err(start, e.to_string()))?;
            let count: u32 = count
                .parse()
                .map_err(|_| err(start, format!("bad df {count:?}")))?;
            if count == 0 || count as usize > image_count {
                return Err(err(start, format!("df {count} outside 1..={image_count}")));
            }
            df[n - 1].insert(gram, count);
        }
        Ok(DfTable {
            split,
            image_count,
            df,
        })
    }
}

#[derive(Serialize, Deserialize)]
struct DfRepr {
    split: Split,
    image_count: usize,
    /// `(n, gram, df)` sorted by order then n-gram.
    grams: Vec<(usize, String, u32)>,
}

impl Serialize for DfTable {
    fn serialize<S: serde::Serializer>(
        &self,
        serializer: S,
    ) -> std::result::Result<S::Ok, S::Error> {
        let grams = (1..=MAX_N)
            .flat_map(|n| {
                self.entries(n)
                    .into_iter()
                    .map(move |(g, d)| (n, g.as_str().to_string(), d))
            })
            .collect();
        DfRepr {
            split: self.split,
            image_count: self.image_count,
            grams,
        }
        .serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for DfTable {
    fn deserialize<D: serde::Deserializer<'de>>(
        deserializer: D,
    ) -> std::result::Result<Self, D::Error> {
        use serde::de::Error as _;
        let repr = DfRepr::deserialize(deserializer)?;
        let mut df: [HashMap<NGram, u32>; MAX_N] = Default::default();
        for (n, gram, count) in repr.grams {
            let toks: Vec<&str> = gram.split(' ').collect();
            if toks.len() != n {
                return Err(D::Error::custom(format!(
                    "n-gram {gram:?} is not of order {n}"
                )));
            }
            if count == 0 || count as usize > repr.image_count {
                return Err(D::Error::custom(format!(
                    "df {count} of {gram:?} outside 1..={}",
                    repr.image_count
                )));
            }
            let gram = NGram::new(&toks).map_err(D::Error::custom)?;
            df[n - 1].insert(gram, count);
        }
        Ok(DfTable {
            split: repr.split,
            image_count: repr.image_count,
            df,
        })
    }
}

/// Counts, for every n-gram, how many images of `split` contain it in any reference.
pub fn build_df(corpus: &Corpus, split: Split) -> Result<DfTable> {
    let mut df: [HashMap<NGram, u32>; MAX_N] = Default::default();
    let mut image_count = 0;
    for image in corpus.images().filter(|i| i.split == split) {
        image_count += 1;
        for (n, table) in df.iter_mut().enumerate() {
            let mut seen: HashSet<NGram> = HashSet::new();
            for cap in &image.captions {
                seen.extend(count_ngrams(&cap.tokens, n + 1).into_keys());
            }
            for gram in seen {
                *table.entry(gram).or_insert(0) += 1;
            }
        }
    }
    if image_count == 0 {
        return Err(Error::validation(format!("split {split} has no images")));
    }
    Ok(DfTable {
        split,
        image_count,
        df,
    })
}

/// Sparse TF-IDF vectors for one caption, one per n-gram order.
///
/// Entries are sorted by key and zero weights are omitted.
#[derive(Debug, Clone, PartialEq)]
pub struct TfIdfVector<K = NGram> {
    grams: [Vec<(K, f64)>; MAX_N],
    /// Squared norms in count-times-IDF space.
    sq_norms: [f64; MAX_N],
    length: usize,
}

impl TfIdfVector<NGram> {
    pub fn from_tokens<S: AsRef<str>>(tokens: &[S], df: &DfTable) -> Self {
        let mut grams: [Vec<(NGram, f64)>; MAX_N] = Default::default();
        for (n, out) in grams.iter_mut().enumerate() {
            let counts = count_ngrams(tokens, n + 1);
            let total: u32 = counts.values().sum();
            let mut entries: Vec<(NGram, f64)> = counts
                .into_iter()
                .map(|(g, c)| {
                    let w = f64::from(c) / f64::from(total) * df.idf(&g);
                    (g, w)
                })
                .filter(|&(_, w)| w > 0.0)
                .collect();
            entries.sort_unstable_by(|a, b| a.0.cmp(&b.0));
            *out = entries;
        }
        Self::with_grams(grams, tokens.len())
    }
}

impl<K: Ord> TfIdfVector<K> {
    fn with_grams(grams: [Vec<(K, f64)>; MAX_N], length: usize) -> Self {
        let mut sq_norms = [0.0; MAX_N];
        for (n, entries) in grams.iter().enumerate() {
            let total = gram_total(length, n + 1);
            sq_norms[n] = entries
                .iter()
                .map(|&(_, w)| {
                    let x = w * total;
                    x * x
                })
                .sum();
        }
        TfIdfVector {
            grams,
            sq_norms,
            length,
        }
    }

    /// Caption length in tokens.
    pub fn len(&self) -> usize {
        self.length
    }

    pub fn is_empty(&self) -> bool {
        self.length == 0
    }

    /// Entries of order `n` (1-based).
    pub fn grams(&self, n: usize) -> &[(K, f64)] {
        &self.grams[n - 1]
    }

    /// Euclidean norm of the order-`n` weights.
    pub fn norm(&self, n: usize) -> f64 {
        self.sq_norms[n - 1].sqrt() / gram_total(self.length, n).max(1.0)
    }

    /// Re-keys the vector. `f` must preserve key order.
    pub fn remap<K2: Ord>(&self, mut f: impl FnMut(&K) -> K2) -> TfIdfVector<K2> {
        let grams = std::array::from_fn(|n| {
            let v: Vec<(K2, f64)> = self.grams[n].iter().map(|(k, w)| (f(k), *w)).collect();
            debug_assert!(
                v.windows(2).all(|p| p[0].0 < p[1].0),
                "remap broke key order"
            );
            v
        });
        TfIdfVector {
            grams,
            sq_norms: self.sq_norms,
            length: self.length,
        }
    }
}

fn gram_total(length: usize, n: usize) -> f64 {
    (length + 1).saturating_sub(n) as f64
}

pub fn tfidf_vector(caption: &Caption, df: &DfTable) -> TfIdfVector {
    TfIdfVector::from_tokens(&caption.tokens, df)
}

/// Which CIDEr flavour scores a caption pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "variant", rename_all = "kebab-case")]
pub enum CiderVariant {
    /// Count clipping plus a Gaussian length penalty.
    CiderD { sigma: f64 },
    /// Plain TF-IDF cosine, no clipping and no length penalty.
    Plain,
}

impl Default for CiderVariant {
    fn default() -> Self {
        CiderVariant::CiderD {
            sigma: DEFAULT_SIGMA,
        }
    }
}

impl CiderVariant {
    pub fn name(&self) -> &'static str {
        match self {
            CiderVariant::CiderD { .. } => "cider-d",
            CiderVariant::Plain => "cider",
        }
    }
}

/// CIDEr between one candidate and one reference, in `[0, 10]`.
pub fn pair_score<K: Ord>(
    candidate: &TfIdfVector<K>,
    reference: &TfIdfVector<K>,
    variant: CiderVariant,
) -> f64 {
    let clip = matches!(variant, CiderVariant::CiderD { .. });
    let mut sum = 0.0;
    for n in 0..MAX_N {
        let (sa, sb) = (candidate.sq_norms[n], reference.sq_norms[n]);
        if sa == 0.0 || sb == 0.0 {
            continue;
        }
        let la = gram_total(candidate.length, n + 1);
        let lb = gram_total(reference.length, n + 1);
        let (a, b) = (&candidate.grams[n], &reference.grams[n]);
        let (mut i, mut j) = (0, 0);
        let mut dot = 0.0;
        while i < a.len() && j < b.len() {
            match a[i].0.cmp(&b[j].0) {
                Ordering::Less => i += 1,
                Ordering::Greater => j += 1,
                Ordering::Equal => {
                    let x = a[i].1 * la;
                    let y = b[j].1 * lb;
                    dot += if clip { x.min(y) * y } else { x * y };
                    i += 1;
                    j += 1;
                }
            }
        }
        sum += dot / (sa * sb).sqrt();
    }
    let mut score = sum / MAX_N as f64 * 10.0;
    if let CiderVariant::CiderD { sigma } = variant {
        let delta = candidate.length as f64 - reference.length as f64;
        score *= (-(delta * delta) / (2.0 * sigma * sigma)).exp();
    }
    score
}

/// CIDEr-D (or plain CIDEr) of `candidate` averaged over `references`.
pub fn cider_d<K: Ord>(
    candidate: &TfIdfVector<K>,
    references: &[TfIdfVector<K>],
    variant: CiderVariant,
) -> Result<f64> {
    if references.is_empty() {
        return Err(Error::invalid("CIDEr needs at least one reference"));
    }
    let total: f64 = references
        .iter()
        .map(|r| pair_score(candidate, r, variant))
        .sum();
    Ok(total / references.len() as f64)
}

/// Mean pair score over all cross pairs of two caption sets.
pub(crate) fn mean_cross_score<K: Ord>(
    left: &[TfIdfVector<K>],
    right: &[TfIdfVector<K>],
    variant: CiderVariant,
) -> f64 {
    let mut total = 0.0;
    for a in left {
        for b in right {
            total += pair_score(a, b, variant);
        }
    }
    total / (left.len() * right.len()) as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{Image, ImageId};

    fn toks(s: &str) -> Vec<String> {
        s.split_whitespace().map(String::from).collect()
    }

    fn g(s: &str) -> NGram {
        NGram::new(&toks(s)).unwrap()
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

    #[test]
    fn ngram_extraction_examples() {
        let bi = extract_ngrams(&toks("a b a"), 2).unwrap();
        assert_eq!(bi, BTreeMap::from([(g("a b"), 1), (g("b a"), 1)]));
        assert!(extract_ngrams(&toks("a"), 2).unwrap().is_empty());
        assert_eq!(
            extract_ngrams(&toks("a a a"), 1).unwrap(),
            BTreeMap::from([(g("a"), 3)])
        );
        assert!(extract_ngrams(&toks("a b c d e"), 5).is_err());
        assert!(extract_ngrams(&toks("a"), 0).is_err());
        assert_eq!(g("x y z").order(), 3);
        assert!(NGram::new(&toks("a b c d e")).is_err());
    }

    #[test]
    fn df_is_per_image() {
        let c = corpus(&[&["a dog", "a dog a dog"], &["a cat"]]);
        let df = build_df(&c, Split::Train).unwrap();
        assert_eq!(df.image_count(), 2);
        assert_eq!(df.df(&g("a")), 2);
        assert_eq!(df.df(&g("dog")), 1);
        assert_eq!(df.df(&g("a dog")), 1);
        assert_eq!(df.df(&g("dog a")), 1);
        assert_eq!(df.df(&g("zebra")), 0);
        assert!(build_df(&c, Split::Test).is_err());
    }

    #[test]
    fn df_tsv_round_trip() {
        let c = corpus(&[&["a dog runs fast today"], &["a cat sleeps"]]);
        let df = build_df(&c, Split::Train).unwrap();
        let tsv = df.to_tsv();
        assert!(tsv.starts_with("#images=2"));
        let back = DfTable::from_tsv(&tsv, Path::new("df.tsv")).unwrap();
        assert_eq!(back, df);
        assert!(DfTable::from_tsv("1\ta\t1\n", Path::new("x")).is_err());
        assert!(DfTable::from_tsv("#images=1\n1\ta\t2\n", Path::new("x")).is_err());
    }

    #[test]
    fn df_json_round_trip() {
        let c = corpus(&[&["a dog runs fast today"], &["a cat sleeps"]]);
        let df = build_df(&c, Split::Train).unwrap();
        let json = serde_json::to_string(&df).unwrap();
        assert_eq!(json, serde_json::to_string(&df.clone()).unwrap());
        let back: DfTable = serde_json::from_str(&json).unwrap();
        assert_eq!(back, df);
        let bad = r#"{"split":"train","image_count":1,"grams":[[2,"a",1]]}"#;
        assert!(serde_json::from_str::<DfTable>(bad).is_err());
    }

    #[test]
    fn tfidf_weights() {
        // "a" occurs everywhere, so its idf is zero and the entry is dropped.
        let c = corpus(&[&["a dog"], &["a cat"], &["a cow"], &["a hen"]]);
        let df = build_df(&c, Split::Train).unwrap();
        let v = TfIdfVector::from_tokens(&toks("a"), &df);
        assert!(v.grams(1).is_empty());
        assert_eq!(v.norm(1), 0.0);

        let v = TfIdfVector::from_tokens(&toks("dog"), &df);
        assert_eq!(v.grams(1), &[(g("dog"), 4f64.ln())]);

        // unseen n-grams get idf ln(|I|)
        let v = TfIdfVector::from_tokens(&toks("zebra zebra dog"), &df);
        let w: BTreeMap<_, _> = v.grams(1).iter().cloned().collect();
        assert!((w[&g("zebra")] - 2.0 / 3.0 * 4f64.ln()).abs() < 1e-15);
        assert!((w[&g("dog")] - 1.0 / 3.0 * 4f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn identical_and_disjoint_scores() {
        let c = corpus(&[
            &["a man rides a brown horse"],
            &["two cats sleep on the sofa"],
            &["a dog on the grass"],
        ]);
        let df = build_df(&c, Split::Train).unwrap();
        let v = |s: &str| TfIdfVector::from_tokens(&toks(s), &df);
        let horse = v("a man rides a brown horse");
        assert_eq!(
            cider_d(
                &horse,
                std::slice::from_ref(&horse),
                CiderVariant::default()
            )
            .unwrap(),
            10.0
        );
        assert_eq!(
            cider_d(&horse, std::slice::from_ref(&horse), CiderVariant::Plain).unwrap(),
            10.0
        );
        let cats = v("two cats sleep on the sofa");
        assert_eq!(
            cider_d(&horse, &[cats], CiderVariant::default()).unwrap(),
            0.0
        );
        assert!(cider_d(&horse, &[], CiderVariant::default()).is_err());
    }

    #[test]
    fn short_captions_only_score_populated_orders() {
        let c = corpus(&[&["red kite"], &["blue sky"]]);
        let df = build_df(&c, Split::Train).unwrap();
        let v = TfIdfVector::from_tokens(&toks("red kite"), &df);
        // orders 3 and 4 are empty and contribute nothing
        assert_eq!(pair_score(&v, &v, CiderVariant::default()), 5.0);
    }

    #[test]
    fn degenerate_corpus_scores_zero() {
        let c = corpus(&[&["a b c d"], &["a b c d"]]);
        let df = build_df(&c, Split::Train).unwrap();
        let v = TfIdfVector::from_tokens(&toks("a b c d"), &df);
        assert_eq!(pair_score(&v, &v, CiderVariant::default()), 0.0);
    }

    #[test]
    fn length_penalty_and_clipping() {
        let c = corpus(&[&["x y"], &["p q"], &["r s"]]);
        let df = build_df(&c, Split::Train).unwrap();
        let cand = TfIdfVector::from_tokens(&toks("x x"), &df);
        let refr = TfIdfVector::from_tokens(&toks("x y"), &df);
        // unigram: cand counts x:2, ref x:1,y:1 -> clipped dot 1*1, norms 2 and sqrt2
        let idf = 3f64.ln();
        let cos1 = (idf * idf) / ((2.0 * idf) * (2f64.sqrt() * idf));
        let expect = 10.0 * cos1 / 4.0;
        assert!((pair_score(&cand, &refr, CiderVariant::default()) - expect).abs() < 1e-12);
        let plain = 10.0 * (2.0 * idf * idf) / ((2.0 * idf) * (2f64.sqrt() * idf)) / 4.0;
        assert!((pair_score(&cand, &refr, CiderVariant::Plain) - plain).abs() < 1e-12);

        let long = TfIdfVector::from_tokens(&toks("x y p q"), &df);
        let s = pair_score(&refr, &long, CiderVariant::default());
        let unpenalized = pair_score(&refr, &long, CiderVariant::CiderD { sigma: 1e12 });
        assert!((s - unpenalized * (-4.0f64 / 72.0).exp()).abs() < 1e-12);
    }

    #[test]
    fn remap_preserves_scores_bitwise() {
        let c = corpus(&[
            &["a man rides a horse on a beach"],
            &["a horse on the beach"],
        ]);
        let df = build_df(&c, Split::Train).unwrap();
        let a = TfIdfVector::from_tokens(&toks("a man rides a horse"), &df);
        let b = TfIdfVector::from_tokens(&toks("a horse on the beach"), &df);
        let mut all: Vec<&NGram> = (1..=4)
            .flat_map(|n| a.grams(n).iter().chain(b.grams(n)).map(|(k, _)| k))
            .collect();
        all.sort();
        all.dedup();
        let id = |k: &NGram| all.binary_search(&k).unwrap() as u32;
        let (ra, rb) = (a.remap(id), b.remap(id));
        assert_eq!(
            pair_score(&a, &b, CiderVariant::default()).to_bits(),
            pair_score(&ra, &rb, CiderVariant::default()).to_bits()
        );
    }
}
