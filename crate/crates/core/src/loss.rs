//! Contrastive pair objective.
//!
//! For a pair at descriptor distance `d` with label `y`:
//!
//! ```text
//! pull(d) = c_pll · max(0, d − m_pll)          (y = 1)
//! push(d) = c_psh · max(0, m_psh − d)²         (y = 0)
//! loss    = y · pull(d) + (1 − y) · push(d)
//! ```
//!
//! The objective over a set of pairs is the plain sum.

use crate::error::{Error, Result};
use crate::model::Descriptor;
use crate::real::Real;
use crate::tensor::Tensor;

/// Below this distance the direction `(f1 − f2)/d` is undefined and the
/// gradient is taken to be zero.
pub const DISTANCE_EPS: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossConfig {
    pub c_pll: f64,
    pub m_pll: f64,
    pub c_psh: f64,
    pub m_psh: f64,
}

impl Default for LossConfig {
    fn default() -> Self {
        LossConfig {
            c_pll: 1.0,
            m_pll: 0.5,
            c_psh: 1.0,
            m_psh: 2.0,
        }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<()> {
        for (key, v) in [
            ("c_pll", self.c_pll),
            ("m_pll", self.m_pll),
            ("c_psh", self.c_psh),
            ("m_psh", self.m_psh),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::config(
                    key,
                    format!("must be finite and >= 0, got {v}"),
                ));
            }
        }
        if self.m_psh <= 0.0 {
            return Err(Error::config("m_psh", "push margin must be > 0"));
        }
        Ok(())
    }

    /// Both scale factors multiplied by `k`.
    pub fn scaled(&self, k: f64) -> Self {
        LossConfig {
            c_pll: self.c_pll * k,
            c_psh: self.c_psh * k,
            ..*self
        }
    }
}

/// A distance with its correspondence label.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LabeledPair<T> {
    pub d: T,
    pub similar: bool,
}

pub fn euclidean_distance<T: Real>(f1: &Descriptor<T>, f2: &Descriptor<T>) -> Result<T> {
    distance(f1.values(), f2.values())
}

pub(crate) fn distance<T: Real>(a: &[T], b: &[T]) -> Result<T> {
    if a.len() != b.len() {
        return Err(Error::ShapeMismatch(format!(
            "descriptor lengths differ: {} vs {}",
            a.len(),
            b.len()
        )));
    }
    Ok(a.iter()
        .zip(b)
        .map(|(&x, &y)| (x - y) * (x - y))
        .sum::<T>()
        .sqrt())
}

pub fn pull_loss<T: Real>(d: T, cfg: &LossConfig) -> T {
    let excess = d - T::from_f64(cfg.m_pll);
    T::from_f64(cfg.c_pll) * excess.max(T::zero())
}

pub fn push_loss<T: Real>(d: T, cfg: &LossConfig) -> T {
    let gap = (T::from_f64(cfg.m_psh) - d).max(T::zero());
    T::from_f64(cfg.c_psh) * gap * gap
}

pub fn pair_loss<T: Real>(pair: LabeledPair<T>, cfg: &LossConfig) -> T {
    if pair.similar {
        pull_loss(pair.d, cfg)
    } else {
        push_loss(pair.d, cfg)
    }
}

/// Derivative of [`pair_loss`] w.r.t. `d`; zero in inactive regions and at
/// the hinge points.
pub fn pair_loss_slope<T: Real>(pair: LabeledPair<T>, cfg: &LossConfig) -> T {
    let d = pair.d;
    if pair.similar {
        if d > T::from_f64(cfg.m_pll) {
            T::from_f64(cfg.c_pll)
        } else {
            T::zero()
        }
    } else {
        let m = T::from_f64(cfg.m_psh);
        if d < m {
            -T::from_f64(2.0 * cfg.c_psh) * (m - d)
        } else {
            T::zero()
        }
    }
}

/// Loss value and gradients w.r.t. both descriptors. `g2 == -g1` always.
pub fn pair_loss_grad<T: Real>(
    f1: &Descriptor<T>,
    f2: &Descriptor<T>,
    similar: bool,
    cfg: &LossConfig,
) -> Result<(T, Tensor<T>, Tensor<T>)> {
    let (a, b) = (f1.values(), f2.values());
    let d = distance(a, b)?;
    let pair = LabeledPair { d, similar };
    let loss = pair_loss(pair, cfg);
    let n = a.len();
    if d < T::from_f64(DISTANCE_EPS) {
        let z = Tensor::zeros(&[n])?;
        return Ok((loss, z.clone(), z));
    }
    let coef = pair_loss_slope(pair, cfg) / d;
    let g1: Vec<T> = a.iter().zip(b).map(|(&x, &y)| coef * (x - y)).collect();
    let g2: Vec<T> = g1.iter().map(|&v| -v).collect();
    Ok((
        loss,
        Tensor::from_parts(vec![n], g1),
        Tensor::from_parts(vec![n], g2),
    ))
}

/// Sum of pair losses plus the per-pair values.
pub fn batch_loss<T: Real>(pairs: &[LabeledPair<T>], cfg: &LossConfig) -> Result<(T, Vec<T>)> {
    if pairs.is_empty() {
        return Err(Error::EmptyBatch);
    }
    let per: Vec<T> = pairs.iter().map(|&p| pair_loss(p, cfg)).collect();
    let total = per.iter().fold(T::zero(), |s, &v| s + v);
    Ok((total, per))
}
