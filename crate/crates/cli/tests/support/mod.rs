//! Fixture files and a runner for the `ciderbtw` binary.

#![allow(dead_code)]

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use ciderbtw_core::corpus::Split;
use ciderbtw_core::synth::{ring_embeddings, zipf_corpus, SynthConfig};

pub const BIN: &str = env!("CARGO_BIN_EXE_ciderbtw");

pub struct Fixture {
    pub dir: tempfile::TempDir,
    pub annotations: PathBuf,
    pub split_file: PathBuf,
    pub embeddings: PathBuf,
    pub generated: PathBuf,
    pub generated_embeddings: PathBuf,
}

impl Fixture {
    /// A synthetic corpus with 15 test, 10 val and 35 train images, ring
    /// embeddings, and the first reference of each test image as its
    /// "generated" caption.
    pub fn new() -> Fixture {
        let dir = tempfile::tempdir().unwrap();
        let cfg = SynthConfig {
            test_images: 15,
            val_images: 10,
            ..SynthConfig::with_images(60)
        };
        let corpus = zipf_corpus(&cfg).unwrap();
        let p = |name: &str| dir.path().join(name);
        corpus.write_annotations(&p("captions.json")).unwrap();
        corpus.write_split(&p("split.tsv")).unwrap();
        let emb = ring_embeddings(&corpus, 4).unwrap();
        fs::write(p("emb.txt"), emb.to_text()).unwrap();

        let mut generated = String::new();
        let mut gen_emb = format!("dim={}\n", emb.dim());
        for id in corpus.image_ids(Split::Test) {
            let cap = &corpus.captions(id).unwrap()[0];
            generated.push_str(&format!(
                "{{\"image_id\":{},\"caption\":\"{}\"}}\n",
                id.0,
                cap.text()
            ));
            let (_, v) = emb.captions_of(id).next().unwrap();
            let row: Vec<String> = v.iter().map(|x| format!("{x:e}")).collect();
            gen_emb.push_str(&format!("cap\t{}\t0\t{}\n", id.0, row.join(" ")));
        }
        fs::write(p("generated.jsonl"), generated).unwrap();
        fs::write(p("generated_emb.txt"), gen_emb).unwrap();
        Fixture {
            annotations: p("captions.json"),
            split_file: p("split.tsv"),
            embeddings: p("emb.txt"),
            generated: p("generated.jsonl"),
            generated_embeddings: p("generated_emb.txt"),
            dir,
        }
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }
}

pub fn run(args: &[&str]) -> Output {
    Command::new(BIN)
        .args(args)
        .output()
        .expect("spawn ciderbtw")
}

pub fn run_ok(args: &[&str]) -> Output {
    let out = run(args);
    assert!(
        out.status.success(),
        "ciderbtw {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

pub fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

/// Every file under `dir`, keyed by relative path.
pub fn snapshot(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut files = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in fs::read_dir(&d).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                let rel = path
                    .strip_prefix(dir)
                    .unwrap()
                    .to_string_lossy()
                    .into_owned();
                files.insert(rel, fs::read(&path).unwrap());
            }
        }
    }
    files
}

/// Runs every command with `threads` workers into `root`, one output
/// directory per similar-set strategy.
pub fn full_pipeline(fx: &Fixture, root: &Path, threads: usize) {
    let s = |p: &Path| p.to_str().unwrap().to_string();
    let t = threads.to_string();
    let main = root.join("main");
    let cache = main.join("cache.json");
    let common = |out: &Path| -> Vec<String> {
        vec![
            "--threads".into(),
            t.clone(),
            "--out-dir".into(),
            s(out),
            "--cache".into(),
            s(&cache),
            "--seed".into(),
            "11".into(),
        ]
    };
    let go = |cmd: &str, out: &Path, extra: &[String]| {
        let mut args = vec![cmd.to_string()];
        args.extend(common(out));
        args.extend(extra.iter().cloned());
        let refs: Vec<&str> = args.iter().map(String::as_str).collect();
        run_ok(&refs);
    };
    go(
        "ingest",
        &main,
        &[
            "--annotations".into(),
            s(&fx.annotations),
            "--split-file".into(),
            s(&fx.split_file),
        ],
    );
    go("simsets", &main, &[]);
    go(
        "eval",
        &main,
        &[
            "--generated".into(),
            s(&fx.generated),
            "--embeddings".into(),
            s(&fx.embeddings),
            "--generated-embeddings".into(),
            s(&fx.generated_embeddings),
        ],
    );
    go("weights", &main, &[]);
    go(
        "weights",
        &root.join("target-set"),
        &[
            "--sets".into(),
            s(&main.join("simsets_train.jsonl")),
            "--negative-weighting".into(),
            "target-set".into(),
        ],
    );
    go("stats", &main, &[]);
    go("stats", &main, &["--split".into(), "test".into()]);
    go("bench", &main, &["--sizes".into(), "300".into()]);
    for strategy in ["embed-retrieval", "embed-image", "random"] {
        let out = root.join(strategy);
        go(
            "simsets",
            &out,
            &[
                "--strategy".into(),
                strategy.into(),
                "--embeddings".into(),
                s(&fx.embeddings),
            ],
        );
        go("eval", &out, &["--generated".into(), s(&fx.generated)]);
    }
}

/// Pipeline outputs minus the wall-clock timing table.
pub fn deterministic_outputs(root: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut files = snapshot(root);
    files.retain(|name, _| !name.ends_with("bench_timing.tsv"));
    files
}
