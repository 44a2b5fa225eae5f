//! Cross-scene evaluation: train on one scene, measure the error rate at 95%
//! recall on every other scene, all with one shared configuration.
//! Optionally also train on all-but-one scenes combined and test on the one
//! left out.

use std::fmt;

use crate::data::{sample_pairs_single, synth_scene, PatchPair, PatchStore, SynthConfig};
use crate::error::{Error, Result};
use crate::eval::evaluate;
use crate::model::{Architecture, NetworkParams};
use crate::real::{Precision, Real};
use crate::train::{train_from, TrainConfig};

/// One scene with its training and test pairs (pair `scene` fields are 0,
/// i.e. relative to `store`).
#[derive(Debug, Clone)]
pub struct Scene {
    pub name: String,
    pub store: PatchStore,
    pub train_pairs: Vec<PatchPair>,
    pub test_pairs: Vec<PatchPair>,
}

#[derive(Debug, Clone)]
pub struct ProtocolConfig {
    pub train: TrainConfig,
    /// Independent trainings per cell; run `r` uses seed `train.seed + r`.
    pub runs: usize,
    /// Add rows that train on all scenes but one.
    pub combined: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CellStats {
    pub values: Vec<f64>,
}

impl CellStats {
    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }

    /// Sample standard deviation; 0 for a single run.
    pub fn std(&self) -> f64 {
        let n = self.values.len();
        if n < 2 {
            return 0.0;
        }
        let m = self.mean();
        (self.values.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (n - 1) as f64).sqrt()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    /// Names of the training scenes, joined with `+`.
    pub train_set: String,
    /// One entry per scene; `None` where the scene was used for training.
    pub cells: Vec<Option<CellStats>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProtocolReport {
    pub scenes: Vec<String>,
    pub rows: Vec<ReportRow>,
    pub runs: usize,
}

impl fmt::Display for ProtocolReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let width = 14;
        write!(f, "{:<12}", "Tr. set")?;
        for s in &self.scenes {
            write!(f, "{s:>width$}")?;
        }
        writeln!(f)?;
        for row in &self.rows {
            write!(f, "{:<12}", row.train_set)?;
            for cell in &row.cells {
                let text = match cell {
                    None => "--".to_string(),
                    Some(c) if self.runs > 1 => format!("{:.1}±{:.1}", c.mean(), c.std()),
                    Some(c) => format!("{:.1}", c.mean()),
                };
                write!(f, "{text:>width$}")?;
            }
            writeln!(f)?;
        }
        write!(
            f,
            "error rate (%) at 95% recall, {} run(s) per cell, training seed varied",
            self.runs
        )
    }
}

fn train_and_test<T: Real>(
    train_scenes: &[&Scene],
    test_scenes: &[&Scene],
    cfg: &TrainConfig,
) -> Result<Vec<f64>> {
    let stores: Vec<PatchStore> = train_scenes.iter().map(|s| s.store.clone()).collect();
    let pairs: Vec<PatchPair> = train_scenes
        .iter()
        .enumerate()
        .flat_map(|(k, s)| s.train_pairs.iter().map(move |p| p.in_scene(k)))
        .collect();
    let init = NetworkParams::<T>::init(Architecture::full(), cfg.seed)?;
    let (params, _) = train_from(init, &stores, &pairs, None, cfg, |_| {})?;
    test_scenes
        .iter()
        .map(|s| {
            let (report, _) = evaluate(&params, std::slice::from_ref(&s.store), &s.test_pairs)?;
            Ok(report.fpr_at_95)
        })
        .collect()
}

fn run_typed<T: Real>(
    scenes: &[Scene],
    cfg: &ProtocolConfig,
    progress: &mut dyn FnMut(&str),
) -> Result<ProtocolReport> {
    let n = scenes.len();
    let mut rows = Vec::new();
    let mut plan: Vec<Vec<usize>> = (0..n).map(|i| vec![i]).collect();
    if cfg.combined && n > 2 {
        plan.extend((0..n).map(|left_out| (0..n).filter(|&i| i != left_out).collect()));
    }
    for train_idx in plan {
        let train_set: Vec<&Scene> = train_idx.iter().map(|&i| &scenes[i]).collect();
        let test_idx: Vec<usize> = (0..n).filter(|i| !train_idx.contains(i)).collect();
        let test_set: Vec<&Scene> = test_idx.iter().map(|&i| &scenes[i]).collect();
        let label = train_set
            .iter()
            .map(|s| s.name.as_str())
            .collect::<Vec<_>>()
            .join("+");
        let mut cells: Vec<Option<CellStats>> = vec![None; n];
        for run in 0..cfg.runs {
            let run_cfg = TrainConfig {
                seed: cfg.train.seed + run as u64,
                ..cfg.train.clone()
            };
            progress(&format!(
                "training on {label}, run {}/{}",
                run + 1,
                cfg.runs
            ));
            let rates = train_and_test::<T>(&train_set, &test_set, &run_cfg)?;
            for (&j, rate) in test_idx.iter().zip(rates) {
                cells[j]
                    .get_or_insert_with(|| CellStats { values: Vec::new() })
                    .values
                    .push(rate);
            }
        }
        rows.push(ReportRow {
            train_set: label,
            cells,
        });
    }
    Ok(ProtocolReport {
        scenes: scenes.iter().map(|s| s.name.clone()).collect(),
        rows,
        runs: cfg.runs,
    })
}

/// Runs every train/test combination with the same configuration.
pub fn run_protocol(
    scenes: &[Scene],
    cfg: &ProtocolConfig,
    mut progress: impl FnMut(&str),
) -> Result<ProtocolReport> {
    if scenes.len() < 2 {
        return Err(Error::config("scenes", "need at least two scenes"));
    }
    if cfg.runs == 0 {
        return Err(Error::config("runs", "must be >= 1"));
    }
    cfg.train.validate()?;
    match cfg.train.precision {
        Precision::F32 => run_typed::<f32>(scenes, cfg, &mut progress),
        Precision::F64 => run_typed::<f64>(scenes, cfg, &mut progress),
    }
}

#[derive(Debug, Clone, Copy)]
pub struct PairCounts {
    pub train_similar: usize,
    pub train_dissimilar: usize,
    pub test_similar: usize,
    pub test_dissimilar: usize,
}

/// Splits one sampled pair set into disjoint train and test pairs.
pub fn split_pairs(
    store: &PatchStore,
    counts: PairCounts,
    seed: u64,
) -> Result<(Vec<PatchPair>, Vec<PatchPair>)> {
    let n_sim = counts.train_similar + counts.test_similar;
    let all = sample_pairs_single(
        store,
        n_sim,
        counts.train_dissimilar + counts.test_dissimilar,
        seed,
    )?;
    let (sim, dis) = all.split_at(n_sim);
    let train = sim[..counts.train_similar]
        .iter()
        .chain(&dis[..counts.train_dissimilar])
        .copied()
        .collect();
    let test = sim[counts.train_similar..]
        .iter()
        .chain(&dis[counts.train_dissimilar..])
        .copied()
        .collect();
    Ok((train, test))
}

/// `n` synthetic scenes with seeds `base.seed`, `base.seed + 1`, ...
pub fn synthetic_scenes(base: &SynthConfig, n: usize, counts: PairCounts) -> Result<Vec<Scene>> {
    (0..n)
        .map(|k| {
            let cfg = SynthConfig {
                seed: base.seed + k as u64,
                ..*base
            };
            let store = synth_scene(&cfg)?;
            let (train_pairs, test_pairs) = split_pairs(&store, counts, cfg.seed)?;
            Ok(Scene {
                name: format!("S{}", k + 1),
                store,
                train_pairs,
                test_pairs,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stats() {
        let c = CellStats {
            values: vec![1.0, 2.0, 3.0],
        };
        assert_eq!(c.mean(), 2.0);
        assert_eq!(c.std(), 1.0);
        assert_eq!(CellStats { values: vec![4.0] }.std(), 0.0);
    }

    #[test]
    fn split_is_disjoint() {
        let store = synth_scene(&SynthConfig {
            n_points: 10,
            patches_per_point: 4,
            ..SynthConfig::default()
        })
        .unwrap();
        let counts = PairCounts {
            train_similar: 20,
            train_dissimilar: 20,
            test_similar: 10,
            test_dissimilar: 10,
        };
        let (train, test) = split_pairs(&store, counts, 3).unwrap();
        assert_eq!(train.len(), 40);
        assert_eq!(test.len(), 20);
        for p in &test {
            assert!(!train.contains(p));
        }
    }

    #[test]
    fn report_layout() {
        let r = ProtocolReport {
            scenes: vec!["A".into(), "B".into()],
            rows: vec![
                ReportRow {
                    train_set: "A".into(),
                    cells: vec![
                        None,
                        Some(CellStats {
                            values: vec![10.0, 12.0],
                        }),
                    ],
                },
                ReportRow {
                    train_set: "B".into(),
                    cells: vec![
                        Some(CellStats {
                            values: vec![5.0, 5.0],
                        }),
                        None,
                    ],
                },
            ],
            runs: 2,
        };
        let text = r.to_string();
        let lines: Vec<&str> = text.lines().collect();
        assert!(lines[0].starts_with("Tr. set"));
        assert!(lines[1].contains("--") && lines[1].contains("11.0±1.4"));
        assert!(lines[2].contains("5.0±0.0"));
    }
}
