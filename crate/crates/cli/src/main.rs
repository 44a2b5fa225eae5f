//! `patchdesc` command-line tool.
//!
//! Exit codes: 0 success, 2 usage/config/data-format error, 3 numeric
//! failure (divergence, degenerate evaluation labels).

mod config;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use patchdesc::data::{
    export_scene, ingest_scene, load_match_file, open_store, sample_pairs_single, save_packed,
    synth_scene, write_match_file, PatchPair, PatchStore,
};
use patchdesc::eval::{evaluate, extract_descriptors, write_descriptors, write_roc_csv};
use patchdesc::model::{shape_plan, Architecture, NetworkParams, DESCRIPTOR_DIM};
use patchdesc::protocol::{run_protocol, split_pairs, synthetic_scenes, ProtocolConfig, Scene};
use patchdesc::train::{load_checkpoint, save_checkpoint, train_from};
use patchdesc::{Error, Precision, Real, Result};

use config::RunConfig;

#[derive(Parser)]
#[command(name = "patchdesc", version, about = "Learned 32-d patch descriptors")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Validate a dataset directory and report its size.
    Ingest {
        #[arg(long)]
        root: PathBuf,
        /// Also write a packed store that loads faster than the mosaics.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train a network and write the checkpoint and objective history.
    Train {
        #[arg(long)]
        config: PathBuf,
        /// Train on a generated scene instead of a dataset.
        #[arg(long)]
        synthetic: bool,
    },
    /// Error rate at 95% recall on a match file.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        pairs: PathBuf,
        /// Dataset directory or packed store.
        #[arg(long)]
        root: PathBuf,
        #[arg(long)]
        roc_out: Option<PathBuf>,
    },
    /// Descriptors of every patch of a store.
    Extract {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        root: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Print the layer shapes and parameter count.
    Describe,
    /// Train on each scene and evaluate on the others.
    Protocol {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        synthetic: bool,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_runtime() { 3 } else { 2 })
        }
    }
}

fn run(cmd: Command) -> Result<()> {
    match cmd {
        Command::Ingest { root, out } => ingest(&root, out.as_deref()),
        Command::Train { config, synthetic } => {
            let cfg = load_config(&config)?;
            match cfg.train.precision {
                Precision::F32 => train_cmd::<f32>(&cfg, synthetic),
                Precision::F64 => train_cmd::<f64>(&cfg, synthetic),
            }
        }
        Command::Eval {
            checkpoint,
            pairs,
            root,
            roc_out,
        } => match precision()? {
            Precision::F32 => eval_cmd::<f32>(&checkpoint, &pairs, &root, roc_out.as_deref()),
            Precision::F64 => eval_cmd::<f64>(&checkpoint, &pairs, &root, roc_out.as_deref()),
        },
        Command::Extract {
            checkpoint,
            root,
            out,
        } => match precision()? {
            Precision::F32 => extract_cmd::<f32>(&checkpoint, &root, &out),
            Precision::F64 => extract_cmd::<f64>(&checkpoint, &root, &out),
        },
        Command::Describe => {
            for stage in shape_plan() {
                println!("{stage}");
            }
            println!("parameters={}", Architecture::full().param_count()?);
            Ok(())
        }
        Command::Protocol { config, synthetic } => protocol_cmd(&load_config(&config)?, synthetic),
    }
}

fn precision() -> Result<Precision> {
    Ok(Precision::from_env()?.unwrap_or_default())
}

fn load_config(path: &Path) -> Result<RunConfig> {
    let mut cfg = RunConfig::load(path)?;
    cfg.apply_env()?;
    Ok(cfg)
}

fn ingest(root: &Path, out: Option<&Path>) -> Result<()> {
    let store = ingest_scene(root)?;
    if let Some(out) = out {
        save_packed(&store, out)?;
    }
    println!("patches={} points={}", store.len(), store.num_points());
    Ok(())
}

fn missing(key: &str) -> Error {
    Error::Config {
        key: key.to_string(),
        msg: "required unless --synthetic is given".into(),
    }
}

fn train_cmd<T: Real>(cfg: &RunConfig, synthetic: bool) -> Result<()> {
    let (store, train_pairs, heldout) = if synthetic {
        let store = synth_scene(&cfg.synth)?;
        let (train, heldout) = split_pairs(&store, cfg.counts, cfg.synth.seed)?;
        if let Some(dir) = &cfg.scene_out {
            export_scene(&store, dir)?;
        }
        if let Some(p) = &cfg.heldout_pairs_out {
            write_match_file(p, &store, &heldout)?;
        }
        let heldout = (!heldout.is_empty()).then_some(heldout);
        (store, train, heldout)
    } else {
        let root = cfg
            .dataset_root
            .as_ref()
            .ok_or_else(|| missing("dataset_root"))?;
        let store = open_store(root)?;
        let train = match &cfg.train_pairs {
            Some(p) => load_match_file(p, &store)?,
            None => sample_pairs_single(
                &store,
                cfg.counts.train_similar,
                cfg.counts.train_dissimilar,
                cfg.train.seed,
            )?,
        };
        let heldout = cfg
            .heldout_pairs
            .as_ref()
            .map(|p| load_match_file(p, &store))
            .transpose()?;
        (store, train, heldout)
    };

    let stores = std::slice::from_ref(&store);
    let init = NetworkParams::<T>::init(Architecture::full(), cfg.train.seed)?;
    let (params, history) = train_from(
        init,
        stores,
        &train_pairs,
        heldout.as_deref(),
        &cfg.train,
        |r| match r.heldout_objective {
            Some(h) => println!(
                "epoch {} objective {:.6} heldout {:.6}",
                r.epoch, r.objective, h
            ),
            None => println!("epoch {} objective {:.6}", r.epoch, r.objective),
        },
    )?;
    save_checkpoint(&params, &cfg.checkpoint_out)?;
    fs::write(&cfg.history_out, history.to_csv()).map_err(|source| Error::Io {
        path: cfg.history_out.clone(),
        source,
    })?;
    println!("best epoch {}", history.best_epoch);
    if let Some(h) = &heldout {
        let (_, summary) = evaluate(&params, stores, h)?;
        println!("heldout {summary}");
    }
    Ok(())
}

fn eval_cmd<T: Real>(
    checkpoint: &Path,
    pairs: &Path,
    root: &Path,
    roc_out: Option<&Path>,
) -> Result<()> {
    let store = open_store(root)?;
    let pairs: Vec<PatchPair> = load_match_file(pairs, &store)?;
    let params = load_checkpoint::<T>(checkpoint, Architecture::full())?;
    let (report, summary) = evaluate(&params, std::slice::from_ref(&store), &pairs)?;
    println!("fpr95={}", report.fpr_at_95);
    println!("{summary}");
    if let Some(out) = roc_out {
        write_roc_csv(&report, out)?;
    }
    Ok(())
}

fn extract_cmd<T: Real>(checkpoint: &Path, root: &Path, out: &Path) -> Result<()> {
    let store = open_store(root)?;
    let params = load_checkpoint::<T>(checkpoint, Architecture::full())?;
    let descriptors = extract_descriptors(&params, &store)?;
    write_descriptors(out, DESCRIPTOR_DIM, &descriptors)?;
    println!("descriptors={} dim={DESCRIPTOR_DIM}", descriptors.len());
    Ok(())
}

fn dataset_scene(name: String, store: PatchStore, cfg: &RunConfig) -> Result<Scene> {
    let (train_pairs, test_pairs) = split_pairs(&store, cfg.counts, cfg.train.seed)?;
    Ok(Scene {
        name,
        store,
        train_pairs,
        test_pairs,
    })
}

fn protocol_cmd(cfg: &RunConfig, synthetic: bool) -> Result<()> {
    let scenes = if synthetic {
        synthetic_scenes(&cfg.synth, cfg.protocol_scenes, cfg.counts)?
    } else {
        if cfg.dataset_roots.is_empty() {
            return Err(missing("dataset_roots"));
        }
        cfg.dataset_roots
            .iter()
            .map(|root| {
                let name = root
                    .file_name()
                    .map(|n| n.to_string_lossy().into_owned())
                    .unwrap_or_else(|| root.display().to_string());
                dataset_scene(name, open_store(root)?, cfg)
            })
            .collect::<Result<_>>()?
    };
    let pcfg = ProtocolConfig {
        train: cfg.train.clone(),
        runs: cfg.protocol_runs,
        combined: cfg.protocol_combined,
    };
    let report = run_protocol(&scenes, &pcfg, |msg| eprintln!("{msg}"))?;
    println!("{report}");
    Ok(())
}
