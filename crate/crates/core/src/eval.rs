//! Descriptor distances over pair sets, ROC sweeps and the error rate at a
//! fixed true-match recall.
//!
//! A pair is predicted to match iff its descriptor distance is `<= t`. For
//! a target recall `r`, `t` is the `k`-th smallest positive distance where
//! `k` is the smallest count with `k / n_pos >= r` (that is `⌈r·n_pos⌉`).
//! Negatives tied with `t` count as false positives.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::fs;
use std::io::Write;
use std::path::Path;

use rayon::prelude::*;

use crate::data::{PatchPair, PatchStore};
use crate::error::{Error, Result};
use crate::loss::distance;
use crate::model::{describe, NetworkParams};
use crate::real::Real;

/// Recall level of the headline metric.
pub const TARGET_RECALL: f64 = 0.95;

pub const DESCRIPTOR_MAGIC: &[u8; 4] = b"PDSC";
pub const DESCRIPTOR_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RocPoint {
    pub threshold: f64,
    pub tpr: f64,
    pub fpr: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RocReport {
    pub points: Vec<RocPoint>,
    pub n_pos: usize,
    pub n_neg: usize,
    /// Percentage of negatives accepted at 95% recall.
    pub fpr_at_95: f64,
}

fn count_labels(labels: &[bool]) -> Result<(usize, usize)> {
    let n_pos = labels.iter().filter(|&&y| y).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::DegenerateLabels { n_pos, n_neg });
    }
    Ok((n_pos, n_neg))
}

/// Descriptors for every distinct patch referenced by `pairs`, computed in
/// parallel against the read-only parameters.
pub fn pair_descriptors<T: Real>(
    params: &NetworkParams<T>,
    stores: &[PatchStore],
    pairs: &[PatchPair],
) -> Result<HashMap<(usize, usize), Vec<T>>> {
    crate::data::validate_pairs(stores, pairs)?;
    let mut keys: Vec<(usize, usize)> = pairs
        .iter()
        .flat_map(|p| [(p.scene, p.idx1), (p.scene, p.idx2)])
        .collect();
    keys.sort_unstable();
    keys.dedup();
    let descs: Vec<Vec<T>> = keys
        .par_iter()
        .map(|&(s, i)| {
            describe(params, &stores[s].input::<T>(i)).map(|d| d.into_tensor().into_data())
        })
        .collect::<Result<_>>()?;
    Ok(keys.into_iter().zip(descs).collect())
}

/// Euclidean descriptor distance and label of every pair, in input order.
pub fn pair_distances<T: Real>(
    params: &NetworkParams<T>,
    stores: &[PatchStore],
    pairs: &[PatchPair],
) -> Result<(Vec<f64>, Vec<bool>)> {
    let descs = pair_descriptors(params, stores, pairs)?;
    let mut distances = Vec::with_capacity(pairs.len());
    for p in pairs {
        let a = &descs[&(p.scene, p.idx1)];
        let b = &descs[&(p.scene, p.idx2)];
        distances.push(distance(a, b)?.as_f64());
    }
    Ok((distances, pairs.iter().map(|p| p.similar).collect()))
}

/// 32-bit descriptors of every patch in `store`, in store order.
pub fn extract_descriptors<T: Real>(
    params: &NetworkParams<T>,
    store: &PatchStore,
) -> Result<Vec<Vec<f32>>> {
    (0..store.len())
        .into_par_iter()
        .map(|i| {
            let d = describe(params, &store.input::<T>(i))?;
            Ok(d.values().iter().map(|v| v.as_f32()).collect())
        })
        .collect()
}

/// Percentage of negatives with distance `<= t`, where `t` is the smallest
/// positive distance reaching `target_tpr` recall.
pub fn fpr_at_tpr(distances: &[f64], labels: &[bool], target_tpr: f64) -> Result<f64> {
    if distances.len() != labels.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} distances for {} labels",
            distances.len(),
            labels.len()
        )));
    }
    if !(target_tpr > 0.0 && target_tpr <= 1.0) {
        return Err(Error::config(
            "target_tpr",
            format!("must lie in (0, 1], got {target_tpr}"),
        ));
    }
    let (n_pos, n_neg) = count_labels(labels)?;
    let mut pos: Vec<f64> = distances
        .iter()
        .zip(labels)
        .filter(|(_, &y)| y)
        .map(|(&d, _)| d)
        .collect();
    pos.sort_by(f64::total_cmp);

    let reaches = |k: usize| k as f64 / n_pos as f64 >= target_tpr;
    let mut k = ((target_tpr * n_pos as f64).ceil() as usize).clamp(1, n_pos);
    while k > 1 && reaches(k - 1) {
        k -= 1;
    }
    while k < n_pos && !reaches(k) {
        k += 1;
    }
    let t = pos[k - 1];
    let fp = distances
        .iter()
        .zip(labels)
        .filter(|(&d, &y)| !y && d <= t)
        .count();
    Ok(100.0 * fp as f64 / n_neg as f64)
}

/// Sweep over every distinct distance, ascending.
pub fn roc(distances: &[f64], labels: &[bool]) -> Result<RocReport> {
    let fpr_at_95 = fpr_at_tpr(distances, labels, TARGET_RECALL)?;
    let (n_pos, n_neg) = count_labels(labels)?;
    let mut order: Vec<(f64, bool)> = distances
        .iter()
        .copied()
        .zip(labels.iter().copied())
        .collect();
    order.sort_by(|a, b| a.0.total_cmp(&b.0));

    let mut points = Vec::new();
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut i = 0;
    while i < order.len() {
        let t = order[i].0;
        while i < order.len() && order[i].0 == t {
            if order[i].1 {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        points.push(RocPoint {
            threshold: t,
            tpr: tp as f64 / n_pos as f64,
            fpr: fp as f64 / n_neg as f64,
        });
    }
    Ok(RocReport {
        points,
        n_pos,
        n_neg,
        fpr_at_95,
    })
}

/// One-line summary with the percentage at one decimal.
pub fn summary_line(report: &RocReport) -> String {
    format!(
        "n_pos={} n_neg={} fpr95={:.1}%",
        report.n_pos, report.n_neg, report.fpr_at_95
    )
}

/// Distances, ROC and a summary line. Parameters are only read.
pub fn evaluate<T: Real>(
    params: &NetworkParams<T>,
    stores: &[PatchStore],
    test_pairs: &[PatchPair],
) -> Result<(RocReport, String)> {
    let (d, y) = pair_distances(params, stores, test_pairs)?;
    let report = roc(&d, &y)?;
    let summary = summary_line(&report);
    Ok((report, summary))
}

/// `%g`-style formatting with six significant digits.
pub fn format_sig6(v: f64) -> String {
    if v == 0.0 || !v.is_finite() {
        return if v == 0.0 { "0".into() } else { v.to_string() };
    }
    let sci = format!("{v:.5e}");
    let (mantissa, exp) = sci.split_once('e').expect("exponent present");
    let exp: i32 = exp.parse().expect("integer exponent");
    if !(-4..6).contains(&exp) {
        let mantissa = trim_zeros(mantissa);
        let sign = if exp < 0 { '-' } else { '+' };
        return format!("{mantissa}e{sign}{:02}", exp.abs());
    }
    let decimals = (5 - exp).max(0) as usize;
    trim_zeros(&format!("{v:.decimals$}")).to_string()
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

pub fn roc_csv(report: &RocReport) -> String {
    let mut out = String::from("threshold,tpr,fpr\n");
    for p in &report.points {
        let _ = writeln!(
            out,
            "{},{},{}",
            format_sig6(p.threshold),
            format_sig6(p.tpr),
            format_sig6(p.fpr)
        );
    }
    out
}

pub fn write_roc_csv(report: &RocReport, path: &Path) -> Result<()> {
    fs::write(path, roc_csv(report)).map_err(|e| Error::io(path, e))
}

/// Descriptor file: `PDSC`, version, count, dimension (u32 LE each), then
/// row-major f32 LE values.
pub fn write_descriptors(path: &Path, dim: usize, descriptors: &[Vec<f32>]) -> Result<()> {
    let mut buf = Vec::with_capacity(16 + 4 * dim * descriptors.len());
    buf.extend_from_slice(DESCRIPTOR_MAGIC);
    buf.extend_from_slice(&DESCRIPTOR_VERSION.to_le_bytes());
    buf.extend_from_slice(&(descriptors.len() as u32).to_le_bytes());
    buf.extend_from_slice(&(dim as u32).to_le_bytes());
    for d in descriptors {
        if d.len() != dim {
            return Err(Error::ShapeMismatch(format!(
                "descriptor of length {} in a {dim}-dimensional file",
                d.len()
            )));
        }
        for v in d {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&buf).map_err(|e| Error::io(path, e))
}

/// Inverse of [`write_descriptors`]: `(dim, descriptors)`.
pub fn read_descriptors(path: &Path) -> Result<(usize, Vec<Vec<f32>>)> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let err = |msg: String| Error::Format {
        path: path.to_path_buf(),
        msg,
    };
    if bytes.len() < 16 || &bytes[..4] != DESCRIPTOR_MAGIC {
        return Err(err("not a descriptor file".into()));
    }
    let word = |i: usize| u32::from_le_bytes(bytes[i..i + 4].try_into().unwrap()) as usize;
    if word(4) != DESCRIPTOR_VERSION as usize {
        return Err(err(format!("unsupported version {}", word(4))));
    }
    let (count, dim) = (word(8), word(12));
    if bytes.len() != 16 + 4 * count * dim {
        return Err(err(format!(
            "expected {} bytes for {count}×{dim}, found {}",
            16 + 4 * count * dim,
            bytes.len()
        )));
    }
    let values: Vec<f32> = bytes[16..]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    let descs = if dim == 0 {
        vec![Vec::new(); count]
    } else {
        values.chunks_exact(dim).map(|c| c.to_vec()).collect()
    };
    Ok((dim, descs))
}
