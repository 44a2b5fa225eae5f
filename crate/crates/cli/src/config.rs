//! Flat `key = value` run configuration. `#` starts a comment; blank lines
//! are ignored; every key may appear at most once and unknown keys are
//! rejected. Relative paths resolve against the config file's directory.

use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use patchdesc::data::SynthConfig;
use patchdesc::loss::LossConfig;
use patchdesc::protocol::PairCounts;
use patchdesc::train::TrainConfig;
use patchdesc::{Error, Precision, Result};

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub train: TrainConfig,
    pub synth: SynthConfig,
    pub counts: PairCounts,
    /// Dataset directory or packed store used by `train`.
    pub dataset_root: Option<PathBuf>,
    /// Scenes used by `protocol` without `--synthetic`.
    pub dataset_roots: Vec<PathBuf>,
    /// Training pairs as a match file; sampled from the store when absent.
    pub train_pairs: Option<PathBuf>,
    pub heldout_pairs: Option<PathBuf>,
    pub checkpoint_out: PathBuf,
    pub history_out: PathBuf,
    /// Where `train --synthetic` writes the generated scene and its
    /// held-out pairs, so `eval` and `extract` can be run on them.
    pub scene_out: Option<PathBuf>,
    pub heldout_pairs_out: Option<PathBuf>,
    pub protocol_scenes: usize,
    pub protocol_runs: usize,
    pub protocol_combined: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            train: TrainConfig::default(),
            synth: SynthConfig::default(),
            counts: PairCounts {
                train_similar: 300,
                train_dissimilar: 300,
                test_similar: 100,
                test_dissimilar: 100,
            },
            dataset_root: None,
            dataset_roots: Vec::new(),
            train_pairs: None,
            heldout_pairs: None,
            checkpoint_out: PathBuf::from("checkpoint.pdn"),
            history_out: PathBuf::from("history.csv"),
            scene_out: None,
            heldout_pairs_out: None,
            protocol_scenes: 3,
            protocol_runs: 1,
            protocol_combined: false,
        }
    }
}

fn bad(key: &str, msg: impl Into<String>) -> Error {
    Error::Config {
        key: key.to_string(),
        msg: msg.into(),
    }
}

fn num<V: FromStr>(key: &str, value: &str) -> Result<V> {
    value
        .parse()
        .map_err(|_| bad(key, format!("cannot parse `{value}`")))
}

fn flag(key: &str, value: &str) -> Result<bool> {
    match value {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        _ => Err(bad(key, format!("expected true or false, got `{value}`"))),
    }
}

fn path(key: &str, value: &str, base: &Path) -> Result<PathBuf> {
    if value.is_empty() || value.contains('\0') {
        return Err(bad(key, "not a valid path"));
    }
    let p = PathBuf::from(value);
    Ok(if p.is_absolute() { p } else { base.join(p) })
}

impl RunConfig {
    pub fn load(file: &Path) -> Result<Self> {
        let text = fs::read_to_string(file).map_err(|source| Error::Io {
            path: file.to_path_buf(),
            source,
        })?;
        let base = file.parent().unwrap_or(Path::new("."));
        Self::parse(&text, file, base)
    }

    pub fn parse(text: &str, file: &Path, base: &Path) -> Result<Self> {
        let mut cfg = RunConfig::default();
        cfg.checkpoint_out = base.join(&cfg.checkpoint_out);
        cfg.history_out = base.join(&cfg.history_out);
        let mut seen = std::collections::HashSet::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(Error::Parse {
                    path: file.to_path_buf(),
                    line: n + 1,
                    msg: format!("expected `key = value`, got `{line}`"),
                });
            };
            let (key, value) = (key.trim(), value.trim());
            if !seen.insert(key.to_string()) {
                return Err(bad(key, "given more than once"));
            }
            cfg.set(key, value, base)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    fn set(&mut self, key: &str, value: &str, base: &Path) -> Result<()> {
        let t = &mut self.train;
        let l: &mut LossConfig = &mut t.loss;
        match key {
            "learning_rate" => t.learning_rate = num(key, value)?,
            "batch_size" => t.batch_size = num(key, value)?,
            "max_epochs" => t.max_epochs = num(key, value)?,
            "plateau_patience" => t.plateau_patience = num(key, value)?,
            "plateau_rel_tol" => t.plateau_rel_tol = num(key, value)?,
            "balanced_batches" => t.balanced_batches = flag(key, value)?,
            "mean_reduction" => t.mean_reduction = flag(key, value)?,
            "seed" => t.seed = num(key, value)?,
            "precision" => t.precision = value.parse::<Precision>()?,
            "c_pll" => l.c_pll = num(key, value)?,
            "m_pll" => l.m_pll = num(key, value)?,
            "c_psh" => l.c_psh = num(key, value)?,
            "m_psh" => l.m_psh = num(key, value)?,
            "synth_points" => self.synth.n_points = num(key, value)?,
            "synth_patches_per_point" => self.synth.patches_per_point = num(key, value)?,
            "synth_noise_std" => self.synth.noise_std = num(key, value)?,
            "synth_jitter_px" => self.synth.jitter_px = num(key, value)?,
            "synth_seed" => self.synth.seed = num(key, value)?,
            "n_similar" => self.counts.train_similar = num(key, value)?,
            "n_dissimilar" => self.counts.train_dissimilar = num(key, value)?,
            "heldout_similar" => self.counts.test_similar = num(key, value)?,
            "heldout_dissimilar" => self.counts.test_dissimilar = num(key, value)?,
            "dataset_root" => self.dataset_root = Some(path(key, value, base)?),
            "dataset_roots" => {
                self.dataset_roots = value
                    .split(',')
                    .map(|v| path(key, v.trim(), base))
                    .collect::<Result<_>>()?
            }
            "train_pairs" => self.train_pairs = Some(path(key, value, base)?),
            "heldout_pairs" => self.heldout_pairs = Some(path(key, value, base)?),
            "checkpoint_out" => self.checkpoint_out = path(key, value, base)?,
            "history_out" => self.history_out = path(key, value, base)?,
            "scene_out" => self.scene_out = Some(path(key, value, base)?),
            "heldout_pairs_out" => self.heldout_pairs_out = Some(path(key, value, base)?),
            "protocol_scenes" => self.protocol_scenes = num(key, value)?,
            "protocol_runs" => self.protocol_runs = num(key, value)?,
            "protocol_combined" => self.protocol_combined = flag(key, value)?,
            _ => return Err(bad(key, "unknown key")),
        }
        Ok(())
    }

    fn validate(&self) -> Result<()> {
        self.train.validate()?;
        self.synth.validate()?;
        if self.counts.train_similar + self.counts.train_dissimilar == 0 {
            return Err(bad("n_similar", "no training pairs requested"));
        }
        if self.protocol_runs == 0 {
            return Err(bad("protocol_runs", "must be >= 1"));
        }
        Ok(())
    }

    /// Applies the `PATCHDESC_PRECISION` override, if set.
    pub fn apply_env(&mut self) -> Result<()> {
        if let Some(p) = Precision::from_env()? {
            self.train.precision = p;
        }
        Ok(())
    }
}
