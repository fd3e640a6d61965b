use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::time::Duration;

use anyhow::{bail, Context};
use serde::{Deserialize, Serialize};

use ciderbtw_core::corpus::{curve_to_tsv, frequency_curve};
use ciderbtw_core::distinct::RetrievalInputs;
use ciderbtw_core::fixed::{fmt6, Fixed6};
use ciderbtw_core::simset::{
    build_sets_image_feature, build_sets_retrieval, load_sets, sets_to_jsonl, timed_similar_sets,
    PruneStats,
};
use ciderbtw_core::synth::{zipf_corpus, SynthConfig};
use ciderbtw_core::weights::{build_manifest, manifest_to_string};
use ciderbtw_core::{
    build_df, build_sets_random, evaluate, load_corpus, Corpus, DfTable, EmbeddingTable,
    EvalOptions, GeneratedCaptions, SimilarSets, Split, Strategy, VocabStats,
};

use crate::config::RunConfig;
use crate::InputError;

const CACHE_FORMAT: &str = "ciderbtw-cache/1";

/// Everything `ingest` derives from the raw annotation files.
#[derive(Debug, PartialEq, Serialize, Deserialize)]
pub struct Cache {
    pub format: String,
    pub corpus: Corpus,
    pub vocab: BTreeMap<Split, VocabStats>,
    /// Always the training split.
    pub df: DfTable,
}

impl Cache {
    pub fn build(corpus: Corpus, min_count: u64) -> ciderbtw_core::Result<Cache> {
        let vocab = corpus
            .split_counts()
            .into_iter()
            .filter(|&(_, n)| n > 0)
            .map(|(split, _)| Ok((split, VocabStats::build(&corpus, split, min_count)?)))
            .collect::<ciderbtw_core::Result<_>>()?;
        let df = build_df(&corpus, Split::Train)?;
        Ok(Cache {
            format: CACHE_FORMAT.to_string(),
            corpus,
            vocab,
            df,
        })
    }

    pub fn load(path: &Path) -> anyhow::Result<Cache> {
        let text = read_input(path, "run `ciderbtw ingest` first")?;
        let cache: Cache = serde_json::from_str(&text)
            .map_err(|e| InputError(format!("{}: corrupt cache: {e}", path.display())))?;
        if cache.format != CACHE_FORMAT {
            bail!(InputError(format!(
                "{}: cache format `{}` is not `{CACHE_FORMAT}`; re-run ingest",
                path.display(),
                cache.format
            )));
        }
        // deserialization skips the corpus invariants
        let corpus = Corpus::from_images(cache.corpus.images().cloned())?;
        Ok(Cache { corpus, ..cache })
    }

    fn vocab(&self, split: Split) -> anyhow::Result<&VocabStats> {
        self.vocab
            .get(&split)
            .ok_or_else(|| InputError(format!("split {split} has no images")).into())
    }
}

fn read_input(path: &Path, hint: &str) -> anyhow::Result<String> {
    fs::read_to_string(path).map_err(|e| {
        let msg = format!("{}: {e}", path.display());
        if e.kind() == std::io::ErrorKind::NotFound && !hint.is_empty() {
            InputError(format!("{msg} ({hint})")).into()
        } else {
            InputError(msg).into()
        }
    })
}

fn write_output(cfg: &RunConfig, name: &str, contents: &str) -> anyhow::Result<()> {
    fs::create_dir_all(&cfg.out_dir)
        .with_context(|| format!("creating {}", cfg.out_dir.display()))?;
    let path = cfg.output(name);
    fs::write(&path, contents).with_context(|| format!("writing {}", path.display()))?;
    eprintln!("wrote {}", path.display());
    Ok(())
}

fn to_json<T: Serialize>(value: &T) -> anyhow::Result<String> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    Ok(s)
}

pub fn ingest(cfg: &RunConfig) -> anyhow::Result<()> {
    let annotations = cfg.require(&cfg.annotations, "annotations")?;
    let split_file = cfg.require(&cfg.split_file, "split-file")?;
    let corpus = load_corpus(annotations, split_file)?;
    let counts = corpus.split_counts();
    let cache = Cache::build(corpus, cfg.min_count)?;
    fs::create_dir_all(&cfg.out_dir)?;
    let mut text = serde_json::to_string(&cache)?;
    text.push('\n');
    if let Some(parent) = cfg.cache.parent() {
        fs::create_dir_all(parent)?;
    }
    fs::write(&cfg.cache, text).with_context(|| format!("writing {}", cfg.cache.display()))?;
    let summary: Vec<String> = counts.iter().map(|(s, n)| format!("{s}={n}")).collect();
    eprintln!("wrote {} ({})", cfg.cache.display(), summary.join(" "));
    Ok(())
}

#[derive(Serialize)]
struct PruneJson {
    split: Split,
    k: usize,
    images: usize,
    brute_force_pairs: u64,
    candidate_pairs: u64,
    scored_pairs: u64,
    skipped_fraction: Fixed6,
}

impl PruneJson {
    fn new(split: Split, k: usize, s: &PruneStats) -> Self {
        PruneJson {
            split,
            k,
            images: s.images,
            brute_force_pairs: s.brute_force_pairs,
            candidate_pairs: s.candidate_pairs,
            scored_pairs: s.scored_pairs,
            skipped_fraction: Fixed6(s.skipped_fraction()),
        }
    }
}

fn load_embeddings(cfg: &RunConfig, strategy: Strategy) -> anyhow::Result<EmbeddingTable> {
    let path = cfg.embeddings.as_deref().ok_or_else(|| {
        InputError(format!(
            "strategy {strategy} needs an embedding file (--embeddings)"
        ))
    })?;
    Ok(EmbeddingTable::load(path)?)
}

pub fn simsets(cfg: &RunConfig) -> anyhow::Result<()> {
    let cache = Cache::load(&cfg.cache)?;
    let splits = match cfg.splits()? {
        Some(s) => s,
        None => cache.vocab.keys().copied().collect(),
    };
    let emb = if cfg.strategy.needs_embeddings() {
        Some(load_embeddings(cfg, cfg.strategy)?)
    } else {
        None
    };
    for split in splits {
        let sets = match cfg.strategy {
            Strategy::Cider => {
                let (sets, stats, t) =
                    timed_similar_sets(&cache.corpus, split, cfg.k, &cache.df, cfg.variant)?;
                write_output(
                    cfg,
                    &format!("simsets_{split}.stats.json"),
                    &to_json(&PruneJson::new(split, cfg.k, &stats))?,
                )?;
                eprintln!(
                    "{split}: {} images, scored {} of {} pairs in {:.3}s",
                    stats.images,
                    stats.scored_pairs,
                    stats.brute_force_pairs,
                    (t.build + t.query).as_secs_f64()
                );
                sets
            }
            Strategy::EmbedRetrieval => {
                build_sets_retrieval(&cache.corpus, split, cfg.k, emb.as_ref().expect("loaded"))?
            }
            Strategy::EmbedImage => build_sets_image_feature(
                &cache.corpus,
                split,
                cfg.k,
                emb.as_ref().expect("loaded"),
            )?,
            Strategy::Random => build_sets_random(&cache.corpus, split, cfg.k, cfg.seed)?,
        };
        write_output(
            cfg,
            &format!("simsets_{split}.jsonl"),
            &sets_to_jsonl(&sets),
        )?;
    }
    Ok(())
}

fn load_split_sets(cfg: &RunConfig, split: Split) -> anyhow::Result<SimilarSets> {
    let path = cfg
        .sets
        .clone()
        .unwrap_or_else(|| cfg.output(&format!("simsets_{split}.jsonl")));
    if !path.exists() {
        bail!(InputError(format!(
            "{}: similar-set file not found (run `ciderbtw simsets --split {split}` first)",
            path.display()
        )));
    }
    Ok(load_sets(&path)?)
}

pub fn eval(cfg: &RunConfig) -> anyhow::Result<()> {
    let split = cfg.one_split(Split::Test)?;
    let cache = Cache::load(&cfg.cache)?;
    let generated = GeneratedCaptions::load(cfg.require(&cfg.generated, "generated")?)?;
    let sets = load_split_sets(cfg, split)?;
    let tables = match (&cfg.embeddings, &cfg.generated_embeddings) {
        (Some(img), Some(gen)) => Some((EmbeddingTable::load(img)?, EmbeddingTable::load(gen)?)),
        (None, None) => None,
        _ => bail!(InputError(
            "R@k needs both --embeddings and --generated-embeddings".into()
        )),
    };
    let retrieval = tables
        .as_ref()
        .map(|(images, generated)| RetrievalInputs { images, generated });
    let opts = EvalOptions {
        split,
        k: Some(cfg.k),
        variant: cfg.variant,
    };
    let report = evaluate(&generated, &cache.corpus, &sets, &cache.df, retrieval, opts)?;
    write_output(cfg, &format!("eval_{split}.json"), &report.to_json())?;
    write_output(cfg, &format!("eval_{split}.tsv"), &report.to_tsv())?;
    eprintln!(
        "{split}: CIDEr {} CIDErBtw@{} {} over {} images",
        fmt6(report.mean_cider),
        report.k,
        fmt6(report.mean_cider_btw),
        report.images.len()
    );
    Ok(())
}

pub fn weights(cfg: &RunConfig) -> anyhow::Result<()> {
    let cache = Cache::load(&cfg.cache)?;
    let split = Split::Train;
    let sets = load_split_sets(cfg, split)?;
    let manifest = build_manifest(
        &cache.corpus,
        split,
        &sets,
        &cache.df,
        cache.vocab(split)?,
        &cfg.hyperparams,
        cfg.negative_weighting,
    )?;
    write_output(cfg, "manifest.jsonl", &manifest_to_string(&manifest)?)?;
    Ok(())
}

#[derive(Serialize)]
struct BenchJson {
    corpus: String,
    #[serde(flatten)]
    stats: PruneJson,
}

pub fn bench(cfg: &RunConfig) -> anyhow::Result<()> {
    let mut runs: Vec<(String, Corpus)> = Vec::new();
    if cfg.cache.exists() {
        runs.push(("cache".to_string(), Cache::load(&cfg.cache)?.corpus));
    }
    for &n in &cfg.sizes {
        let synth = SynthConfig {
            seed: cfg.seed,
            ..SynthConfig::with_images(n)
        };
        runs.push((format!("synthetic-{n}"), zipf_corpus(&synth)?));
    }
    if runs.is_empty() {
        bail!(InputError(format!(
            "nothing to benchmark: {} does not exist and no --sizes given",
            cfg.cache.display()
        )));
    }
    let mut report = Vec::new();
    let mut timing = String::from("corpus\timages\tbuild_seconds\tquery_seconds\ttotal_seconds\n");
    for (name, corpus) in runs {
        let df = build_df(&corpus, Split::Train)?;
        let (_, stats, t) = timed_similar_sets(&corpus, Split::Train, cfg.k, &df, cfg.variant)?;
        let secs = |d: Duration| fmt6(d.as_secs_f64());
        timing.push_str(&format!(
            "{name}\t{}\t{}\t{}\t{}\n",
            stats.images,
            secs(t.build),
            secs(t.query),
            secs(t.build + t.query)
        ));
        eprintln!(
            "{name}: {} images, {:.3}s, skipped {:.2}% of pairs",
            stats.images,
            (t.build + t.query).as_secs_f64(),
            100.0 * stats.skipped_fraction()
        );
        report.push(BenchJson {
            corpus: name,
            stats: PruneJson::new(Split::Train, cfg.k, &stats),
        });
    }
    write_output(cfg, "bench.json", &to_json(&report)?)?;
    // wall-clock numbers vary run to run, so they live apart from bench.json
    write_output(cfg, "bench_timing.tsv", &timing)?;
    Ok(())
}

pub fn stats(cfg: &RunConfig) -> anyhow::Result<()> {
    let split = cfg.one_split(Split::Train)?;
    let cache = Cache::load(&cfg.cache)?;
    let vocab = cache.vocab(split)?;
    write_output(cfg, &format!("vocab_{split}.tsv"), &vocab.to_tsv())?;
    let curve = frequency_curve(vocab)?;
    write_output(
        cfg,
        &format!("freq_curve_{split}.tsv"),
        &curve_to_tsv(&curve),
    )?;
    Ok(())
}
