//! Patch stores, labeled pairs and patch preprocessing.
//!
//! On disk a scene is a directory of 1024×1024 grayscale mosaics
//! (`patches0000.bmp`, `patches0001.bmp`, ...), each a 16×16 grid of 64×64
//! patches in row-major order, plus an `info.txt` whose line `i` starts with
//! the 3D point id of patch `i`. Match files (`m50_*.txt`) list pairs as
//! `patch1 point1 _ patch2 point2 _ ...`.

mod dataset;
mod sampling;
mod synth;

pub use dataset::{
    export_scene, ingest_scene, load_match_file, load_packed, open_store, save_packed,
    write_match_file, MOSAIC_GRID, MOSAIC_SIDE, PATCHES_PER_MOSAIC,
};
pub use sampling::{sample_pairs, sample_pairs_single};
pub use synth::{synth_scene, SynthConfig};

use crate::error::{Error, Result};
use crate::model::PATCH_SIZE;
use crate::real::Real;
use crate::tensor::Tensor;

pub const PATCH_PIXELS: usize = PATCH_SIZE * PATCH_SIZE;

/// Added to the standard deviation before dividing.
pub const STD_EPS: f64 = 1e-8;

/// 64×64 8-bit patches with the 3D point each one observes. Immutable once
/// built.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PatchStore {
    pixels: Vec<u8>,
    point_ids: Vec<u32>,
    scene_tag: String,
}

impl PatchStore {
    /// `pixels` holds `point_ids.len()` row-major 64×64 patches back to back.
    pub fn new(pixels: Vec<u8>, point_ids: Vec<u32>, scene_tag: impl Into<String>) -> Result<Self> {
        if pixels.len() != point_ids.len() * PATCH_PIXELS {
            return Err(Error::Consistency(format!(
                "{} pixels cannot hold {} patches of 64×64",
                pixels.len(),
                point_ids.len()
            )));
        }
        Ok(PatchStore {
            pixels,
            point_ids,
            scene_tag: scene_tag.into(),
        })
    }

    pub fn len(&self) -> usize {
        self.point_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.point_ids.is_empty()
    }

    pub fn patch(&self, i: usize) -> &[u8] {
        &self.pixels[i * PATCH_PIXELS..(i + 1) * PATCH_PIXELS]
    }

    pub fn point_id(&self, i: usize) -> u32 {
        self.point_ids[i]
    }

    pub fn point_ids(&self) -> &[u32] {
        &self.point_ids
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    pub fn scene_tag(&self) -> &str {
        &self.scene_tag
    }

    pub fn with_scene_tag(mut self, tag: impl Into<String>) -> Self {
        self.scene_tag = tag.into();
        self
    }

    pub fn num_points(&self) -> usize {
        let mut ids = self.point_ids.clone();
        ids.sort_unstable();
        ids.dedup();
        ids.len()
    }

    /// Network input for patch `i`.
    pub fn input<T: Real>(&self, i: usize) -> Tensor<T> {
        preprocess(self.patch(i))
    }
}

/// Two patches, both from store `scene`, and whether they show the same
/// 3D point.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct PatchPair {
    pub scene: usize,
    pub idx1: usize,
    pub idx2: usize,
    pub similar: bool,
}

impl PatchPair {
    pub fn new(idx1: usize, idx2: usize, similar: bool) -> Self {
        PatchPair {
            scene: 0,
            idx1,
            idx2,
            similar,
        }
    }

    pub fn in_scene(self, scene: usize) -> Self {
        PatchPair { scene, ..self }
    }
}

/// Checks every pair against `stores`: indices in range and the label
/// agrees with the point ids.
pub fn validate_pairs(stores: &[PatchStore], pairs: &[PatchPair]) -> Result<()> {
    for (k, p) in pairs.iter().enumerate() {
        let store = stores.get(p.scene).ok_or_else(|| {
            Error::Consistency(format!("pair {k} refers to missing scene {}", p.scene))
        })?;
        if p.idx1 >= store.len() || p.idx2 >= store.len() {
            return Err(Error::Consistency(format!(
                "pair {k} ({}, {}) out of range for a store of {} patches",
                p.idx1,
                p.idx2,
                store.len()
            )));
        }
        if (store.point_id(p.idx1) == store.point_id(p.idx2)) != p.similar {
            return Err(Error::Consistency(format!(
                "pair {k} label disagrees with point ids"
            )));
        }
    }
    Ok(())
}

/// Subtract the mean, divide by `std + 1e-8` (population std).
pub fn standardize<T: Real>(values: &Tensor<T>) -> Tensor<T> {
    let v: Vec<f64> = values.data().iter().map(|x| x.as_f64()).collect();
    Tensor::from_parts(
        values.shape().to_vec(),
        standardize_f64(&v).into_iter().map(T::from_f64).collect(),
    )
}

fn standardize_f64(v: &[f64]) -> Vec<f64> {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    let denom = var.sqrt() + STD_EPS;
    v.iter().map(|x| (x - mean) / denom).collect()
}

/// 64×64 8-bit patch to a standardized `1×64×64` network input.
pub fn preprocess<T: Real>(patch: &[u8]) -> Tensor<T> {
    assert_eq!(patch.len(), PATCH_PIXELS, "patch must be 64×64");
    let v: Vec<f64> = patch.iter().map(|&p| p as f64).collect();
    Tensor::from_parts(
        vec![1, PATCH_SIZE, PATCH_SIZE],
        standardize_f64(&v).into_iter().map(T::from_f64).collect(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_patch(seed: u64) -> Vec<u8> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..PATCH_PIXELS)
            .map(|_| rng.random_range(0..200))
            .collect()
    }

    fn mean_std(t: &Tensor<f64>) -> (f64, f64) {
        let n = t.len() as f64;
        let m = t.data().iter().sum::<f64>() / n;
        let s = (t.data().iter().map(|x| (x - m) * (x - m)).sum::<f64>() / n).sqrt();
        (m, s)
    }

    #[test]
    fn constant_patch_maps_to_zero() {
        let t: Tensor<f64> = preprocess(&[77u8; PATCH_PIXELS]);
        assert_eq!(t.shape(), &[1, 64, 64]);
        assert!(t.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn output_is_standardized() {
        let t: Tensor<f64> = preprocess(&random_patch(1));
        let (m, s) = mean_std(&t);
        assert!(m.abs() < 1e-6);
        assert!((s - 1.0).abs() < 1e-6);
    }

    #[test]
    fn brightness_offset_is_removed() {
        let p = random_patch(2);
        let brighter: Vec<u8> = p.iter().map(|&v| v + 40).collect();
        let a: Tensor<f64> = preprocess(&p);
        let b: Tensor<f64> = preprocess(&brighter);
        for (x, y) in a.data().iter().zip(b.data()) {
            assert!((x - y).abs() < 1e-6);
        }
    }

    #[test]
    fn standardize_is_idempotent() {
        let a: Tensor<f64> = preprocess(&random_patch(3));
        let b = standardize(&a);
        for (x, y) in a.data().iter().zip(b.data()) {
            assert!((x - y).abs() < 1e-6);
        }
    }

    #[test]
    fn store_checks_lengths() {
        assert!(PatchStore::new(vec![0; PATCH_PIXELS * 2], vec![1, 2], "t").is_ok());
        assert!(matches!(
            PatchStore::new(vec![0; PATCH_PIXELS], vec![1, 2], "t"),
            Err(Error::Consistency(_))
        ));
    }

    #[test]
    fn pair_validation() {
        let s = PatchStore::new(vec![0; PATCH_PIXELS * 3], vec![4, 4, 5], "t").unwrap();
        let stores = [s];
        assert!(validate_pairs(&stores, &[PatchPair::new(0, 1, true)]).is_ok());
        assert!(validate_pairs(&stores, &[PatchPair::new(0, 2, true)]).is_err());
        assert!(validate_pairs(&stores, &[PatchPair::new(0, 3, false)]).is_err());
        assert!(validate_pairs(&stores, &[PatchPair::new(0, 1, true).in_scene(1)]).is_err());
    }
}
