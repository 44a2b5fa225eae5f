//! Synthetic scenes: each "3D point" is a random smooth texture, and each of
//! its patches is a jittered crop of that texture with pixel noise.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::{PatchStore, PATCH_PIXELS};
use crate::error::{Error, Result};
use crate::model::PATCH_SIZE;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SynthConfig {
    pub n_points: usize,
    pub patches_per_point: usize,
    /// Standard deviation of additive Gaussian pixel noise, in gray levels.
    pub noise_std: f64,
    /// Maximum crop offset in pixels along each axis.
    pub jitter_px: usize,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            n_points: 40,
            patches_per_point: 8,
            noise_std: 4.0,
            jitter_px: 2,
            seed: 1,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_points == 0 {
            return Err(Error::config("synth_points", "must be >= 1"));
        }
        if self.patches_per_point == 0 {
            return Err(Error::config("synth_patches_per_point", "must be >= 1"));
        }
        if !(self.noise_std.is_finite() && self.noise_std >= 0.0) {
            return Err(Error::config("synth_noise_std", "must be finite and >= 0"));
        }
        Ok(())
    }
}

const BLOBS: usize = 8;
const GRATINGS: usize = 2;

/// Sum of Gaussian blobs and low-frequency gratings, rescaled to [40, 215].
fn render_texture(side: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let s = side as f64;
    let blobs: Vec<(f64, f64, f64, f64)> = (0..BLOBS)
        .map(|_| {
            (
                rng.random_range(0.0..s),
                rng.random_range(0.0..s),
                rng.random_range(4.0..14.0),
                rng.random_range(-1.0..1.0),
            )
        })
        .collect();
    let gratings: Vec<(f64, f64, f64, f64)> = (0..GRATINGS)
        .map(|_| {
            let angle = rng.random_range(0.0..std::f64::consts::TAU);
            let freq = rng.random_range(0.03..0.12) * std::f64::consts::TAU;
            (
                angle.cos() * freq,
                angle.sin() * freq,
                rng.random_range(0.0..std::f64::consts::TAU),
                rng.random_range(0.2..0.5),
            )
        })
        .collect();

    let mut tex = vec![0.0; side * side];
    for r in 0..side {
        for c in 0..side {
            let (y, x) = (r as f64, c as f64);
            let mut v = 0.0;
            for &(cy, cx, sigma, amp) in &blobs {
                let d2 = (y - cy).powi(2) + (x - cx).powi(2);
                v += amp * (-d2 / (2.0 * sigma * sigma)).exp();
            }
            for &(fx, fy, phase, amp) in &gratings {
                v += amp * (fx * x + fy * y + phase).sin();
            }
            tex[r * side + c] = v;
        }
    }
    let lo = tex.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = tex.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let span = (hi - lo).max(1e-12);
    for v in &mut tex {
        *v = 40.0 + 175.0 * (*v - lo) / span;
    }
    tex
}

pub fn synth_scene(cfg: &SynthConfig) -> Result<PatchStore> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let noise = Normal::new(0.0, cfg.noise_std)
        .map_err(|e| Error::config("synth_noise_std", e.to_string()))?;
    let side = PATCH_SIZE + 2 * cfg.jitter_px;
    let n = cfg.n_points * cfg.patches_per_point;
    let mut pixels = Vec::with_capacity(n * PATCH_PIXELS);
    let mut ids = Vec::with_capacity(n);

    for point in 0..cfg.n_points {
        let tex = render_texture(side, &mut rng);
        for _ in 0..cfg.patches_per_point {
            let dy = rng.random_range(0..=2 * cfg.jitter_px);
            let dx = rng.random_range(0..=2 * cfg.jitter_px);
            for r in 0..PATCH_SIZE {
                for c in 0..PATCH_SIZE {
                    let mut v = tex[(r + dy) * side + c + dx];
                    if cfg.noise_std > 0.0 {
                        v += noise.sample(&mut rng);
                    }
                    pixels.push(v.round().clamp(0.0, 255.0) as u8);
                }
            }
            ids.push(point as u32);
        }
    }
    PatchStore::new(pixels, ids, format!("synth{}", cfg.seed))
}
