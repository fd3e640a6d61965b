//! Run settings: command-line flags layered over an optional key=value file.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context};
use clap::{Args, Parser};

use ciderbtw_core::weights::NegativeWeighting;
use ciderbtw_core::{CiderVariant, Hyperparams, Split, Strategy};

use crate::InputError;

/// Every setting is optional here; defaults are applied in [`RunConfig::resolve`].
#[derive(Debug, Clone, Default, Args)]
pub struct Settings {
    /// key=value file; command-line flags take precedence over it
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads (default: all cores)
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// cider, embed-retrieval, embed-image or random
    #[arg(long, global = true)]
    pub strategy: Option<Strategy>,
    /// Similar-set size
    #[arg(long, global = true)]
    pub k: Option<usize>,
    #[arg(long, global = true)]
    pub out_dir: Option<PathBuf>,
    /// Corpus cache written by `ingest` (default: <out-dir>/cache.json)
    #[arg(long, global = true)]
    pub cache: Option<PathBuf>,
    /// COCO-style caption annotations (JSON)
    #[arg(long, global = true)]
    pub annotations: Option<PathBuf>,
    /// Split assignments, one `<image_id>\t<split>` line per image
    #[arg(long, global = true)]
    pub split_file: Option<PathBuf>,
    /// Image and reference-caption embeddings
    #[arg(long, global = true)]
    pub embeddings: Option<PathBuf>,
    /// Generated captions, one JSON object per line
    #[arg(long, global = true)]
    pub generated: Option<PathBuf>,
    /// Embeddings of the generated captions (caption index 0), for R@k
    #[arg(long, global = true)]
    pub generated_embeddings: Option<PathBuf>,
    /// Similar-set file (default: <out-dir>/simsets_<split>.jsonl)
    #[arg(long, global = true)]
    pub sets: Option<PathBuf>,
    /// Split to evaluate or summarize; comma-separated list for `simsets`
    #[arg(long, global = true)]
    pub split: Option<String>,
    /// cider-d or cider
    #[arg(long, global = true)]
    pub metric: Option<String>,
    #[arg(long, global = true)]
    pub sigma: Option<f64>,
    #[arg(long, global = true)]
    pub lambda_w: Option<f64>,
    #[arg(long, global = true)]
    pub alpha_w: Option<f64>,
    #[arg(long, global = true)]
    pub alpha_r: Option<f64>,
    #[arg(long, global = true)]
    pub alpha_ns: Option<f64>,
    /// LTW amplitude A
    #[arg(long, global = true)]
    pub amplitude: Option<f64>,
    #[arg(long, global = true)]
    pub f_b: Option<usize>,
    #[arg(long, global = true)]
    pub f_e: Option<usize>,
    /// own-set or target-set
    #[arg(long, global = true)]
    pub negative_weighting: Option<NegativeWeighting>,
    /// Synthetic corpus sizes for `bench`, comma-separated
    #[arg(long, global = true)]
    pub sizes: Option<String>,
    /// Minimum word count kept in vocabulary statistics
    #[arg(long, global = true)]
    pub min_count: Option<u64>,
}

macro_rules! prefer {
    ($a:expr, $b:expr; $($f:ident),* $(,)?) => {
        Settings { $($f: $a.$f.or($b.$f),)* }
    };
}

impl Settings {
    /// Fields set in `self` win over those in `other`.
    pub fn over(self, other: Settings) -> Settings {
        prefer!(self, other;
            config, seed, threads, strategy, k, out_dir, cache, annotations, split_file,
            embeddings, generated, generated_embeddings, sets, split, metric, sigma, lambda_w,
            alpha_w, alpha_r, alpha_ns, amplitude, f_b, f_e, negative_weighting, sizes, min_count,
        )
    }
}

#[derive(Parser)]
#[command(no_binary_name = true)]
struct ConfigLine {
    #[command(flatten)]
    settings: Settings,
}

/// Parses `key = value` lines; `#` starts a comment. Keys are flag names
/// with `_` or `-`. Relative paths resolve against the file's directory.
pub fn parse_config(text: &str, path: &Path) -> anyhow::Result<Settings> {
    let base = path.parent().unwrap_or(Path::new(""));
    let mut merged = Settings::default();
    for (no, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let ctx = || format!("{}:{}", path.display(), no + 1);
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| InputError(format!("{}: expected key=value, got {line:?}", ctx())))?;
        let key = key.trim().replace('_', "-");
        if key == "config" {
            return Err(
                InputError(format!("{}: config files cannot include others", ctx())).into(),
            );
        }
        let arg = format!("--{key}={}", value.trim());
        let parsed = ConfigLine::try_parse_from([arg.as_str()])
            .map_err(|e| InputError(format!("{}: {}", ctx(), e.kind_message(&key))))?;
        let mut s = parsed.settings;
        for p in [
            &mut s.out_dir,
            &mut s.cache,
            &mut s.annotations,
            &mut s.split_file,
            &mut s.embeddings,
            &mut s.generated,
            &mut s.generated_embeddings,
            &mut s.sets,
        ]
        .into_iter()
        .flatten()
        {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        merged = s.over(merged);
    }
    Ok(merged)
}

trait KindMessage {
    fn kind_message(&self, key: &str) -> String;
}

impl KindMessage for clap::Error {
    fn kind_message(&self, key: &str) -> String {
        match self.kind() {
            clap::error::ErrorKind::UnknownArgument => format!("unknown key `{key}`"),
            _ => self
                .to_string()
                .lines()
                .next()
                .unwrap_or("invalid value")
                .trim_start_matches("error: ")
                .to_string(),
        }
    }
}

/// Fully resolved settings.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub seed: u64,
    pub threads: Option<usize>,
    pub strategy: Strategy,
    pub k: usize,
    pub out_dir: PathBuf,
    pub cache: PathBuf,
    pub annotations: Option<PathBuf>,
    pub split_file: Option<PathBuf>,
    pub embeddings: Option<PathBuf>,
    pub generated: Option<PathBuf>,
    pub generated_embeddings: Option<PathBuf>,
    pub sets: Option<PathBuf>,
    pub split: Option<String>,
    pub variant: CiderVariant,
    pub hyperparams: Hyperparams,
    pub negative_weighting: NegativeWeighting,
    pub sizes: Vec<usize>,
    pub min_count: u64,
}

pub const DEFAULT_OUT_DIR: &str = "ciderbtw-out";

impl RunConfig {
    pub fn resolve(flags: Settings) -> anyhow::Result<RunConfig> {
        let file = match &flags.config {
            Some(path) => {
                let text = fs::read_to_string(path)
                    .map_err(|e| InputError(format!("{}: {e}", path.display())))?;
                parse_config(&text, path)?
            }
            None => Settings::default(),
        };
        let s = flags.over(file);
        let d = Hyperparams::default();
        let sigma = s.sigma.unwrap_or(d.sigma);
        let variant = match s.metric.as_deref().unwrap_or("cider-d") {
            "cider-d" => CiderVariant::CiderD { sigma },
            "cider" => CiderVariant::Plain,
            other => {
                return Err(InputError(format!(
                    "unknown metric `{other}` (expected cider-d or cider)"
                ))
                .into())
            }
        };
        let k = s.k.unwrap_or(d.k);
        let hyperparams = Hyperparams {
            lambda_w: s.lambda_w.unwrap_or(d.lambda_w),
            alpha_w: s.alpha_w.unwrap_or(d.alpha_w),
            alpha_r: s.alpha_r.unwrap_or(d.alpha_r),
            alpha_ns: s.alpha_ns.unwrap_or(d.alpha_ns),
            amplitude: s.amplitude.unwrap_or(d.amplitude),
            f_b: s.f_b.unwrap_or(d.f_b),
            f_e: s.f_e.unwrap_or(d.f_e),
            k,
            sigma,
        };
        hyperparams
            .validate()
            .map_err(|e| InputError(e.to_string()))?;
        if s.threads == Some(0) {
            return Err(InputError("--threads must be at least 1".into()).into());
        }
        let sizes = match &s.sizes {
            Some(list) => parse_list(list, "sizes", |v| {
                v.parse::<usize>().ok().filter(|&n| n >= 2)
            })?,
            None => Vec::new(),
        };
        let out_dir = s.out_dir.unwrap_or_else(|| PathBuf::from(DEFAULT_OUT_DIR));
        Ok(RunConfig {
            seed: s.seed.unwrap_or(0),
            threads: s.threads,
            strategy: s.strategy.unwrap_or(Strategy::Cider),
            k,
            cache: s.cache.unwrap_or_else(|| out_dir.join("cache.json")),
            out_dir,
            annotations: s.annotations,
            split_file: s.split_file,
            embeddings: s.embeddings,
            generated: s.generated,
            generated_embeddings: s.generated_embeddings,
            sets: s.sets,
            split: s.split,
            variant,
            hyperparams,
            negative_weighting: s.negative_weighting.unwrap_or_default(),
            sizes,
            min_count: s.min_count.unwrap_or(1),
        })
    }

    /// The single split named by `--split`, or `default`.
    pub fn one_split(&self, default: Split) -> anyhow::Result<Split> {
        match &self.split {
            None => Ok(default),
            Some(s) => s
                .parse()
                .map_err(|e: ciderbtw_core::Error| InputError(e.to_string()).into()),
        }
    }

    /// The splits named by `--split`, or `None` when unset.
    pub fn splits(&self) -> anyhow::Result<Option<Vec<Split>>> {
        match &self.split {
            None => Ok(None),
            Some(list) => {
                let mut v = parse_list(list, "split", |s| s.parse::<Split>().ok())?;
                v.sort();
                v.dedup();
                Ok(Some(v))
            }
        }
    }

    pub fn require<'a>(&self, value: &'a Option<PathBuf>, flag: &str) -> anyhow::Result<&'a Path> {
        value.as_deref().ok_or_else(|| {
            InputError(format!(
                "missing --{flag} (or `{}` in the config file)",
                flag.replace('-', "_")
            ))
            .into()
        })
    }

    pub fn output(&self, name: &str) -> PathBuf {
        self.out_dir.join(name)
    }
}

fn parse_list<T>(list: &str, key: &str, f: impl Fn(&str) -> Option<T>) -> anyhow::Result<Vec<T>> {
    let items: Vec<&str> = list
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .collect();
    if items.is_empty() {
        return Err(anyhow!(InputError(format!("--{key} is empty"))));
    }
    items
        .into_iter()
        .map(|item| {
            f(item).ok_or_else(|| anyhow!(InputError(format!("bad --{key} entry `{item}`"))))
        })
        .collect::<anyhow::Result<Vec<T>>>()
        .with_context(|| format!("parsing --{key}"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flags_override_file_and_file_overrides_defaults() {
        let file = parse_config(
            "k = 7\nseed=3 # comment\nout_dir = runs\nlambda-w=2.0\n",
            Path::new("/cfg/run.cfg"),
        )
        .unwrap();
        assert_eq!(file.k, Some(7));
        assert_eq!(file.out_dir, Some(PathBuf::from("/cfg/runs")));
        let flags = Settings {
            k: Some(3),
            ..Settings::default()
        };
        let s = flags.over(file);
        assert_eq!(s.k, Some(3));
        assert_eq!(s.seed, Some(3));
        assert_eq!(s.lambda_w, Some(2.0));
    }

    #[test]
    fn bad_config_lines() {
        assert!(parse_config("nonsense\n", Path::new("c")).is_err());
        let err = parse_config("colour = red\n", Path::new("c")).unwrap_err();
        assert!(err.to_string().contains("unknown key `colour`"), "{err}");
        assert!(parse_config("k = many\n", Path::new("c")).is_err());
        assert!(parse_config("strategy = best\n", Path::new("c")).is_err());
    }

    #[test]
    fn defaults() {
        let cfg = RunConfig::resolve(Settings::default()).unwrap();
        assert_eq!(cfg.k, 5);
        assert_eq!(cfg.hyperparams, Hyperparams::default());
        assert_eq!(cfg.cache, PathBuf::from(DEFAULT_OUT_DIR).join("cache.json"));
        let bad = Settings {
            lambda_w: Some(0.5),
            ..Settings::default()
        };
        assert!(RunConfig::resolve(bad).is_err());
    }
}
