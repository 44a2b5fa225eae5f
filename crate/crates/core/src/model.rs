//! The descriptor network: C1 → tanh → S1 → C2 → tanh → S2 → C3 → tanh →
//! flatten → FC.
//!
//! The full network takes a 1×64×64 patch and has 6, 21 and 55 feature maps
//! with 5×5, 6×6 and 5×5 kernels followed by a 32-unit linear layer. A
//! reduced variant with the same stage sequence on 16×16 inputs exists so
//! whole-network finite-difference checks stay cheap.

use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::layers::{
    avgpool2_backward, avgpool2_forward, conv2d_backward, conv2d_forward, fc_backward, fc_forward,
    tanh_backward, tanh_forward, ConvCache, ConvParams, FcCache, FcParams, PoolCache, TanhCache,
};
use crate::real::Real;
use crate::tensor::Tensor;

pub const DESCRIPTOR_DIM: usize = 32;
pub const PATCH_SIZE: usize = 64;

/// Names of the parameter tensors, in checkpoint order.
pub const TENSOR_NAMES: [&str; 8] = [
    "c1.kernels",
    "c1.bias",
    "c2.kernels",
    "c2.bias",
    "c3.kernels",
    "c3.bias",
    "fc.weights",
    "fc.bias",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvLayer {
    pub maps: usize,
    pub kernel: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Architecture {
    pub input_size: usize,
    pub c1: ConvLayer,
    pub c2: ConvLayer,
    pub c3: ConvLayer,
    pub descriptor_dim: usize,
}

impl Architecture {
    pub const fn full() -> Self {
        Architecture {
            input_size: PATCH_SIZE,
            c1: ConvLayer { maps: 6, kernel: 5 },
            c2: ConvLayer {
                maps: 21,
                kernel: 6,
            },
            c3: ConvLayer {
                maps: 55,
                kernel: 5,
            },
            descriptor_dim: DESCRIPTOR_DIM,
        }
    }

    /// 16×16 input with 2/3/4 maps. Kernels shrink to 5, 2 and 1 so every
    /// stage stays feasible; S2 still drops an odd trailing row/column.
    pub const fn reduced() -> Self {
        Architecture {
            input_size: 16,
            c1: ConvLayer { maps: 2, kernel: 5 },
            c2: ConvLayer { maps: 3, kernel: 2 },
            c3: ConvLayer { maps: 4, kernel: 1 },
            descriptor_dim: DESCRIPTOR_DIM,
        }
    }

    pub fn input_shape(&self) -> [usize; 3] {
        [1, self.input_size, self.input_size]
    }

    /// Output shape of every stage for a single input patch.
    pub fn shape_plan(&self) -> Result<Vec<Stage>> {
        let conv = |side: usize, layer: ConvLayer, name: &'static str| {
            if layer.kernel == 0 || layer.maps == 0 || side < layer.kernel {
                Err(Error::ShapeMismatch(format!(
                    "{name}: kernel {} does not fit a {side}×{side} input",
                    layer.kernel
                )))
            } else {
                Ok(side - layer.kernel + 1)
            }
        };
        let pool = |side: usize, name: &'static str| {
            if side < 2 {
                Err(Error::ShapeMismatch(format!(
                    "{name}: input side {side} < 2"
                )))
            } else {
                Ok(side / 2)
            }
        };
        let c1 = conv(self.input_size, self.c1, "C1")?;
        let s1 = pool(c1, "S1")?;
        let c2 = conv(s1, self.c2, "C2")?;
        let s2 = pool(c2, "S2")?;
        let c3 = conv(s2, self.c3, "C3")?;
        let flat = self.c3.maps * c3 * c3;
        Ok(vec![
            Stage::new("C1", &[self.c1.maps, c1, c1]),
            Stage::new("S1", &[self.c1.maps, s1, s1]),
            Stage::new("C2", &[self.c2.maps, c2, c2]),
            Stage::new("S2", &[self.c2.maps, s2, s2]),
            Stage::new("C3", &[self.c3.maps, c3, c3]),
            Stage::new("flatten", &[flat]),
            Stage::new("FC", &[self.descriptor_dim]),
        ])
    }

    pub fn flat_len(&self) -> Result<usize> {
        Ok(self.shape_plan()?[5].shape[0])
    }

    /// Expected shape of every parameter tensor, in checkpoint order.
    pub fn param_shapes(&self) -> Result<[Vec<usize>; 8]> {
        let flat = self.flat_len()?;
        let (c1, c2, c3) = (self.c1, self.c2, self.c3);
        Ok([
            vec![c1.maps, 1, c1.kernel, c1.kernel],
            vec![c1.maps],
            vec![c2.maps, c1.maps, c2.kernel, c2.kernel],
            vec![c2.maps],
            vec![c3.maps, c2.maps, c3.kernel, c3.kernel],
            vec![c3.maps],
            vec![self.descriptor_dim, flat],
            vec![self.descriptor_dim],
        ])
    }

    pub fn param_count(&self) -> Result<usize> {
        Ok(self
            .param_shapes()?
            .iter()
            .map(|s| s.iter().product::<usize>())
            .sum())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Stage {
    pub name: &'static str,
    pub shape: Vec<usize>,
}

impl Stage {
    fn new(name: &'static str, shape: &[usize]) -> Self {
        Stage {
            name,
            shape: shape.to_vec(),
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let dims: Vec<String> = self.shape.iter().map(|d| d.to_string()).collect();
        write!(f, "{:<8}{}", self.name, dims.join("×"))
    }
}

/// Shape chain of the full network.
pub fn shape_plan() -> Vec<Stage> {
    Architecture::full()
        .shape_plan()
        .expect("full architecture is feasible")
}

#[derive(Debug, Clone, PartialEq)]
pub struct NetworkParams<T> {
    pub arch: Architecture,
    pub c1: ConvParams<T>,
    pub c2: ConvParams<T>,
    pub c3: ConvParams<T>,
    pub fc: FcParams<T>,
}

/// Gradient of a scalar w.r.t. every parameter tensor, shape-matched to
/// [`NetworkParams`].
pub type ParamGrads<T> = NetworkParams<T>;

impl<T: Real> NetworkParams<T> {
    pub fn zeros(arch: Architecture) -> Result<Self> {
        let flat = arch.flat_len()?;
        Ok(NetworkParams {
            arch,
            c1: ConvParams::zeros(arch.c1.maps, 1, arch.c1.kernel, arch.c1.kernel)?,
            c2: ConvParams::zeros(arch.c2.maps, arch.c1.maps, arch.c2.kernel, arch.c2.kernel)?,
            c3: ConvParams::zeros(arch.c3.maps, arch.c2.maps, arch.c3.kernel, arch.c3.kernel)?,
            fc: FcParams::zeros(arch.descriptor_dim, flat)?,
        })
    }

    /// Glorot-uniform kernels and weights, zero biases. Values are drawn in
    /// 64-bit and rounded, so both precisions start from the same point.
    pub fn init(arch: Architecture, seed: u64) -> Result<Self> {
        let mut params = Self::zeros(arch)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut fill = |t: &mut Tensor<T>, fan_in: usize, fan_out: usize| {
            let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
            for v in t.data_mut() {
                *v = T::from_f64(rng.random_range(-bound..=bound));
            }
        };
        for conv in [&mut params.c1, &mut params.c2, &mut params.c3] {
            let (kh, kw) = conv.kernel_size();
            let (fan_in, fan_out) = (conv.in_maps() * kh * kw, conv.out_maps() * kh * kw);
            fill(&mut conv.kernels, fan_in, fan_out);
        }
        let (fan_in, fan_out) = (params.fc.in_units(), params.fc.out_units());
        fill(&mut params.fc.weights, fan_in, fan_out);
        Ok(params)
    }

    /// Assembles parameters from tensors in checkpoint order, checking each
    /// shape against `arch`.
    pub fn from_tensors(arch: Architecture, tensors: Vec<Tensor<T>>) -> Result<Self> {
        let expected = arch.param_shapes()?;
        if tensors.len() != expected.len() {
            return Err(Error::ShapeMismatch(format!(
                "expected {} parameter tensors, got {}",
                expected.len(),
                tensors.len()
            )));
        }
        for ((name, want), t) in TENSOR_NAMES.iter().zip(&expected).zip(&tensors) {
            if t.shape() != want.as_slice() {
                return Err(Error::ShapeMismatch(format!(
                    "{name}: expected {want:?}, got {:?}",
                    t.shape()
                )));
            }
        }
        let mut it = tensors.into_iter();
        let mut next = || it.next().expect("length checked");
        Ok(NetworkParams {
            arch,
            c1: ConvParams::new(next(), next())?,
            c2: ConvParams::new(next(), next())?,
            c3: ConvParams::new(next(), next())?,
            fc: FcParams::new(next(), next())?,
        })
    }

    pub fn tensors(&self) -> [&Tensor<T>; 8] {
        [
            &self.c1.kernels,
            &self.c1.bias,
            &self.c2.kernels,
            &self.c2.bias,
            &self.c3.kernels,
            &self.c3.bias,
            &self.fc.weights,
            &self.fc.bias,
        ]
    }

    pub fn tensors_mut(&mut self) -> [&mut Tensor<T>; 8] {
        [
            &mut self.c1.kernels,
            &mut self.c1.bias,
            &mut self.c2.kernels,
            &mut self.c2.bias,
            &mut self.c3.kernels,
            &mut self.c3.bias,
            &mut self.fc.weights,
            &mut self.fc.bias,
        ]
    }

    pub fn param_count(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    pub fn all_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.all_finite())
    }

    /// `self += alpha * other`, tensor by tensor.
    pub fn axpy(&mut self, alpha: T, other: &NetworkParams<T>) -> Result<()> {
        if self.arch != other.arch {
            return Err(Error::ShapeMismatch("architectures differ".into()));
        }
        for (a, b) in self.tensors_mut().into_iter().zip(other.tensors()) {
            a.axpy(alpha, b)?;
        }
        Ok(())
    }

    pub fn cast<U: Real>(&self) -> NetworkParams<U> {
        let conv = |c: &ConvParams<T>| ConvParams {
            kernels: c.kernels.cast(),
            bias: c.bias.cast(),
        };
        NetworkParams {
            arch: self.arch,
            c1: conv(&self.c1),
            c2: conv(&self.c2),
            c3: conv(&self.c3),
            fc: FcParams {
                weights: self.fc.weights.cast(),
                bias: self.fc.bias.cast(),
            },
        }
    }
}

/// Full-network parameters for `seed`.
pub fn init_params<T: Real>(seed: u64) -> NetworkParams<T> {
    NetworkParams::init(Architecture::full(), seed).expect("full architecture is feasible")
}

/// The 32-dimensional network output for one patch.
#[derive(Debug, Clone, PartialEq)]
pub struct Descriptor<T>(Tensor<T>);

impl<T: Real> Descriptor<T> {
    pub fn new(values: Tensor<T>) -> Result<Self> {
        if values.rank() != 1 {
            return Err(Error::ShapeMismatch(format!(
                "descriptor must be a vector, got {:?}",
                values.shape()
            )));
        }
        Ok(Descriptor(values))
    }

    pub fn values(&self) -> &[T] {
        self.0.data()
    }

    pub fn as_tensor(&self) -> &Tensor<T> {
        &self.0
    }

    pub fn into_tensor(self) -> Tensor<T> {
        self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

pub struct NetworkCache<'a, T> {
    arch: Architecture,
    c1: ConvCache<'a, T>,
    t1: TanhCache<T>,
    s1: PoolCache,
    c2: ConvCache<'a, T>,
    t2: TanhCache<T>,
    s2: PoolCache,
    c3: ConvCache<'a, T>,
    t3: TanhCache<T>,
    c3_shape: Vec<usize>,
    fc: FcCache<'a, T>,
}

pub fn forward<'a, T: Real>(
    params: &'a NetworkParams<T>,
    patch: &Tensor<T>,
) -> Result<(Descriptor<T>, NetworkCache<'a, T>)> {
    let want = params.arch.input_shape();
    if patch.shape() != want {
        return Err(Error::ShapeMismatch(format!(
            "network input must be {want:?}, got {:?}",
            patch.shape()
        )));
    }
    let (x, c1) = conv2d_forward(patch, &params.c1)?;
    let (x, t1) = tanh_forward(&x);
    let (x, s1) = avgpool2_forward(&x)?;
    let (x, c2) = conv2d_forward(&x, &params.c2)?;
    let (x, t2) = tanh_forward(&x);
    let (x, s2) = avgpool2_forward(&x)?;
    let (x, c3) = conv2d_forward(&x, &params.c3)?;
    let (x, t3) = tanh_forward(&x);
    let c3_shape = x.shape().to_vec();
    // map-major, row-major flattening
    let flat = x.reshape(&[x.len()])?;
    let (out, fc) = fc_forward(&flat, &params.fc)?;
    let cache = NetworkCache {
        arch: params.arch,
        c1,
        t1,
        s1,
        c2,
        t2,
        s2,
        c3,
        t3,
        c3_shape,
        fc,
    };
    Ok((Descriptor::new(out)?, cache))
}

/// Descriptor only, no cache retained.
pub fn describe<T: Real>(params: &NetworkParams<T>, patch: &Tensor<T>) -> Result<Descriptor<T>> {
    forward(params, patch).map(|(d, _)| d)
}

/// Gradients of `⟨grad_descriptor, f(x)⟩` w.r.t. every parameter and the
/// input patch.
pub fn backward<T: Real>(
    cache: &NetworkCache<'_, T>,
    grad_descriptor: &Tensor<T>,
) -> Result<(ParamGrads<T>, Tensor<T>)> {
    if grad_descriptor.shape() != [cache.arch.descriptor_dim] {
        return Err(Error::CacheMismatch(format!(
            "descriptor gradient {:?} does not match a {}-dimensional output",
            grad_descriptor.shape(),
            cache.arch.descriptor_dim
        )));
    }
    let (g, fc) = fc_backward(&cache.fc, grad_descriptor)?;
    let g = g.reshape(&cache.c3_shape)?;
    let g = tanh_backward(&cache.t3, &g)?;
    let (g, c3) = conv2d_backward(&cache.c3, &g)?;
    let g = avgpool2_backward(&cache.s2, &g)?;
    let g = tanh_backward(&cache.t2, &g)?;
    let (g, c2) = conv2d_backward(&cache.c2, &g)?;
    let g = avgpool2_backward(&cache.s1, &g)?;
    let g = tanh_backward(&cache.t1, &g)?;
    let (g, c1) = conv2d_backward(&cache.c1, &g)?;
    Ok((
        NetworkParams {
            arch: cache.arch,
            c1,
            c2,
            c3,
            fc,
        },
        g,
    ))
}
