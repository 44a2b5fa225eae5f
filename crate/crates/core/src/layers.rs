//! Forward and backward passes for the four layer kinds of the network:
//! valid stride-1 convolution with full map connectivity, non-overlapping
//! 2×2 average subsampling, elementwise tanh and a linear dense layer.
//!
//! Each forward returns its output and a cache holding what the matching
//! backward needs. Caches borrow the parameters they were computed with, so
//! a parameter update cannot silently invalidate a live cache.

use crate::error::{Error, Result};
use crate::real::Real;
use crate::tensor::Tensor;

#[derive(Debug, Clone, PartialEq)]
pub struct ConvParams<T> {
    /// `out_maps × in_maps × kh × kw`
    pub kernels: Tensor<T>,
    /// `out_maps`
    pub bias: Tensor<T>,
}

impl<T: Real> ConvParams<T> {
    pub fn new(kernels: Tensor<T>, bias: Tensor<T>) -> Result<Self> {
        if kernels.rank() != 4 || bias.rank() != 1 || bias.shape()[0] != kernels.shape()[0] {
            return Err(Error::ShapeMismatch(format!(
                "conv kernels {:?} with bias {:?}",
                kernels.shape(),
                bias.shape()
            )));
        }
        Ok(ConvParams { kernels, bias })
    }

    pub fn zeros(out_maps: usize, in_maps: usize, kh: usize, kw: usize) -> Result<Self> {
        Ok(ConvParams {
            kernels: Tensor::zeros(&[out_maps, in_maps, kh, kw])?,
            bias: Tensor::zeros(&[out_maps])?,
        })
    }

    pub fn out_maps(&self) -> usize {
        self.kernels.shape()[0]
    }

    pub fn in_maps(&self) -> usize {
        self.kernels.shape()[1]
    }

    pub fn kernel_size(&self) -> (usize, usize) {
        (self.kernels.shape()[2], self.kernels.shape()[3])
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FcParams<T> {
    /// `out_units × in_units`
    pub weights: Tensor<T>,
    /// `out_units`
    pub bias: Tensor<T>,
}

impl<T: Real> FcParams<T> {
    pub fn new(weights: Tensor<T>, bias: Tensor<T>) -> Result<Self> {
        if weights.rank() != 2 || bias.rank() != 1 || bias.shape()[0] != weights.shape()[0] {
            return Err(Error::ShapeMismatch(format!(
                "fc weights {:?} with bias {:?}",
                weights.shape(),
                bias.shape()
            )));
        }
        Ok(FcParams { weights, bias })
    }

    pub fn zeros(out_units: usize, in_units: usize) -> Result<Self> {
        Ok(FcParams {
            weights: Tensor::zeros(&[out_units, in_units])?,
            bias: Tensor::zeros(&[out_units])?,
        })
    }

    pub fn out_units(&self) -> usize {
        self.weights.shape()[0]
    }

    pub fn in_units(&self) -> usize {
        self.weights.shape()[1]
    }
}

#[derive(Debug, Clone)]
pub struct ConvCache<'a, T> {
    input: Tensor<T>,
    params: &'a ConvParams<T>,
    out_shape: [usize; 3],
}

#[derive(Debug, Clone)]
pub struct PoolCache {
    in_shape: [usize; 3],
    out_shape: [usize; 3],
}

#[derive(Debug, Clone)]
pub struct TanhCache<T> {
    output: Tensor<T>,
}

#[derive(Debug, Clone)]
pub struct FcCache<'a, T> {
    input: Tensor<T>,
    params: &'a FcParams<T>,
}

fn dims3<T: Real>(t: &Tensor<T>, what: &str) -> Result<[usize; 3]> {
    match *t.shape() {
        [c, h, w] => Ok([c, h, w]),
        ref s => Err(Error::ShapeMismatch(format!(
            "{what} expects a maps×rows×cols tensor, got {s:?}"
        ))),
    }
}

fn expect_shape<T: Real>(t: &Tensor<T>, shape: &[usize], what: &str) -> Result<()> {
    if t.shape() != shape {
        return Err(Error::ShapeMismatch(format!(
            "{what}: expected {shape:?}, got {:?}",
            t.shape()
        )));
    }
    Ok(())
}

pub fn conv2d_forward<'a, T: Real>(
    input: &Tensor<T>,
    p: &'a ConvParams<T>,
) -> Result<(Tensor<T>, ConvCache<'a, T>)> {
    let [c_in, h, w] = dims3(input, "conv2d_forward")?;
    let (kh, kw) = p.kernel_size();
    if c_in != p.in_maps() {
        return Err(Error::ShapeMismatch(format!(
            "conv expects {} input maps, got {c_in}",
            p.in_maps()
        )));
    }
    if h < kh || w < kw {
        return Err(Error::ShapeMismatch(format!(
            "kernel {kh}×{kw} larger than input {h}×{w}"
        )));
    }
    let c_out = p.out_maps();
    let (oh, ow) = (h - kh + 1, w - kw + 1);
    let x = input.data();
    let k = p.kernels.data();
    let mut out = vec![T::zero(); c_out * oh * ow];

    for o in 0..c_out {
        let out_map = &mut out[o * oh * ow..(o + 1) * oh * ow];
        out_map.fill(p.bias.data()[o]);
        for c in 0..c_in {
            let in_map = &x[c * h * w..(c + 1) * h * w];
            let kern = &k[(o * c_in + c) * kh * kw..(o * c_in + c + 1) * kh * kw];
            for u in 0..kh {
                for v in 0..kw {
                    let kv = kern[u * kw + v];
                    for i in 0..oh {
                        let src = &in_map[(i + u) * w + v..(i + u) * w + v + ow];
                        let dst = &mut out_map[i * ow..(i + 1) * ow];
                        for (d, &s) in dst.iter_mut().zip(src) {
                            *d += kv * s;
                        }
                    }
                }
            }
        }
    }

    let output = Tensor::from_parts(vec![c_out, oh, ow], out);
    let cache = ConvCache {
        input: input.clone(),
        params: p,
        out_shape: [c_out, oh, ow],
    };
    Ok((output, cache))
}

/// Returns `(grad_input, grad_params)`.
pub fn conv2d_backward<T: Real>(
    cache: &ConvCache<'_, T>,
    grad_out: &Tensor<T>,
) -> Result<(Tensor<T>, ConvParams<T>)> {
    expect_shape(grad_out, &cache.out_shape, "conv2d_backward grad_out")?;
    let p = cache.params;
    let [c_in, h, w] = dims3(&cache.input, "conv2d_backward")?;
    let [c_out, oh, ow] = cache.out_shape;
    let (kh, kw) = p.kernel_size();
    let x = cache.input.data();
    let k = p.kernels.data();
    let g = grad_out.data();

    let mut gx = vec![T::zero(); c_in * h * w];
    let mut gk = vec![T::zero(); k.len()];
    let mut gb = vec![T::zero(); c_out];

    for o in 0..c_out {
        let g_map = &g[o * oh * ow..(o + 1) * oh * ow];
        gb[o] = g_map.iter().copied().sum();
        for c in 0..c_in {
            let in_map = &x[c * h * w..(c + 1) * h * w];
            let gx_map = &mut gx[c * h * w..(c + 1) * h * w];
            let base = (o * c_in + c) * kh * kw;
            for u in 0..kh {
                for v in 0..kw {
                    let kv = k[base + u * kw + v];
                    let mut acc = T::zero();
                    for i in 0..oh {
                        let g_row = &g_map[i * ow..(i + 1) * ow];
                        let off = (i + u) * w + v;
                        let x_row = &in_map[off..off + ow];
                        acc += g_row
                            .iter()
                            .zip(x_row)
                            .fold(T::zero(), |s, (&a, &b)| s + a * b);
                        let gx_row = &mut gx_map[off..off + ow];
                        for (d, &gv) in gx_row.iter_mut().zip(g_row) {
                            *d += kv * gv;
                        }
                    }
                    gk[base + u * kw + v] = acc;
                }
            }
        }
    }

    Ok((
        Tensor::from_parts(vec![c_in, h, w], gx),
        ConvParams {
            kernels: Tensor::from_parts(p.kernels.shape().to_vec(), gk),
            bias: Tensor::from_parts(vec![c_out], gb),
        },
    ))
}

/// Non-overlapping 2×2 averaging. An odd trailing row or column is dropped.
pub fn avgpool2_forward<T: Real>(input: &Tensor<T>) -> Result<(Tensor<T>, PoolCache)> {
    let [c, h, w] = dims3(input, "avgpool2_forward")?;
    if h < 2 || w < 2 {
        return Err(Error::ShapeMismatch(format!(
            "2×2 subsampling needs at least 2×2 input, got {h}×{w}"
        )));
    }
    let (oh, ow) = (h / 2, w / 2);
    let x = input.data();
    let quarter = T::from_f64(0.25);
    let mut out = vec![T::zero(); c * oh * ow];
    for m in 0..c {
        let src = &x[m * h * w..(m + 1) * h * w];
        let dst = &mut out[m * oh * ow..(m + 1) * oh * ow];
        for i in 0..oh {
            let r0 = &src[2 * i * w..2 * i * w + w];
            let r1 = &src[(2 * i + 1) * w..(2 * i + 1) * w + w];
            for j in 0..ow {
                dst[i * ow + j] = (r0[2 * j] + r0[2 * j + 1] + r1[2 * j] + r1[2 * j + 1]) * quarter;
            }
        }
    }
    Ok((
        Tensor::from_parts(vec![c, oh, ow], out),
        PoolCache {
            in_shape: [c, h, w],
            out_shape: [c, oh, ow],
        },
    ))
}

pub fn avgpool2_backward<T: Real>(cache: &PoolCache, grad_out: &Tensor<T>) -> Result<Tensor<T>> {
    expect_shape(grad_out, &cache.out_shape, "avgpool2_backward grad_out")?;
    let [c, h, w] = cache.in_shape;
    let [_, oh, ow] = cache.out_shape;
    let g = grad_out.data();
    let quarter = T::from_f64(0.25);
    let mut gx = vec![T::zero(); c * h * w];
    for m in 0..c {
        let dst = &mut gx[m * h * w..(m + 1) * h * w];
        for i in 0..oh {
            for j in 0..ow {
                let v = g[(m * oh + i) * ow + j] * quarter;
                dst[2 * i * w + 2 * j] = v;
                dst[2 * i * w + 2 * j + 1] = v;
                dst[(2 * i + 1) * w + 2 * j] = v;
                dst[(2 * i + 1) * w + 2 * j + 1] = v;
            }
        }
    }
    Ok(Tensor::from_parts(vec![c, h, w], gx))
}

pub fn tanh_forward<T: Real>(input: &Tensor<T>) -> (Tensor<T>, TanhCache<T>) {
    let out = Tensor::from_parts(
        input.shape().to_vec(),
        input.data().iter().map(|v| v.tanh()).collect(),
    );
    (out.clone(), TanhCache { output: out })
}

pub fn tanh_backward<T: Real>(cache: &TanhCache<T>, grad_out: &Tensor<T>) -> Result<Tensor<T>> {
    expect_shape(grad_out, cache.output.shape(), "tanh_backward grad_out")?;
    let gx = cache
        .output
        .data()
        .iter()
        .zip(grad_out.data())
        .map(|(&y, &g)| g * (T::one() - y * y))
        .collect();
    Ok(Tensor::from_parts(cache.output.shape().to_vec(), gx))
}

pub fn fc_forward<'a, T: Real>(
    input: &Tensor<T>,
    p: &'a FcParams<T>,
) -> Result<(Tensor<T>, FcCache<'a, T>)> {
    if input.rank() != 1 || input.len() != p.in_units() {
        return Err(Error::ShapeMismatch(format!(
            "fc expects a vector of {} inputs, got {:?}",
            p.in_units(),
            input.shape()
        )));
    }
    let n = p.in_units();
    let x = input.data();
    let out: Vec<T> = p
        .weights
        .data()
        .chunks_exact(n)
        .zip(p.bias.data())
        .map(|(row, &b)| b + row.iter().zip(x).fold(T::zero(), |s, (&a, &b)| s + a * b))
        .collect();
    Ok((
        Tensor::from_parts(vec![p.out_units()], out),
        FcCache {
            input: input.clone(),
            params: p,
        },
    ))
}

/// Returns `(grad_input, grad_params)`.
pub fn fc_backward<T: Real>(
    cache: &FcCache<'_, T>,
    grad_out: &Tensor<T>,
) -> Result<(Tensor<T>, FcParams<T>)> {
    let p = cache.params;
    expect_shape(grad_out, &[p.out_units()], "fc_backward grad_out")?;
    let n = p.in_units();
    let x = cache.input.data();
    let g = grad_out.data();
    let mut gw = vec![T::zero(); p.weights.len()];
    let mut gx = vec![T::zero(); n];
    for ((gw_row, w_row), &gm) in gw
        .chunks_exact_mut(n)
        .zip(p.weights.data().chunks_exact(n))
        .zip(g)
    {
        for ((d, &xv), (gi, &wv)) in gw_row.iter_mut().zip(x).zip(gx.iter_mut().zip(w_row)) {
            *d = gm * xv;
            *gi += wv * gm;
        }
    }
    Ok((
        Tensor::from_parts(vec![n], gx),
        FcParams {
            weights: Tensor::from_parts(p.weights.shape().to_vec(), gw),
            bias: grad_out.clone(),
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    const H: f64 = 1e-5;

    fn random(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor<f64> {
        let n = shape.iter().product();
        Tensor::from_vec(shape, (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
    }

    fn rel_err(a: f64, b: f64) -> f64 {
        (a - b).abs() / a.abs().max(b.abs()).max(1e-8)
    }

    /// Central difference of `objective` w.r.t. every entry of `x`.
    fn numeric_grad(x: &Tensor<f64>, mut objective: impl FnMut(&Tensor<f64>) -> f64) -> Vec<f64> {
        let mut probe = x.clone();
        (0..x.len())
            .map(|i| {
                let orig = probe.data()[i];
                probe.data_mut()[i] = orig + H;
                let up = objective(&probe);
                probe.data_mut()[i] = orig - H;
                let down = objective(&probe);
                probe.data_mut()[i] = orig;
                (up - down) / (2.0 * H)
            })
            .collect()
    }

    fn assert_close(analytic: &[f64], numeric: &[f64], tol: f64) {
        assert_eq!(analytic.len(), numeric.len());
        for (i, (a, n)) in analytic.iter().zip(numeric).enumerate() {
            assert!(
                rel_err(*a, *n) <= tol,
                "entry {i}: analytic {a} numeric {n}"
            );
        }
    }

    #[test]
    fn conv_output_shape_of_first_stage() {
        let x = Tensor::<f64>::zeros(&[1, 64, 64]).unwrap();
        let p = ConvParams::zeros(6, 1, 5, 5).unwrap();
        let (y, _) = conv2d_forward(&x, &p).unwrap();
        assert_eq!(y.shape(), &[6, 60, 60]);
    }

    #[test]
    fn conv_identity_kernel() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = random(&mut rng, &[1, 4, 5]);
        let p = ConvParams::new(
            Tensor::create(&[1, 1, 1, 1], 1.0).unwrap(),
            Tensor::zeros(&[1]).unwrap(),
        )
        .unwrap();
        let (y, _) = conv2d_forward(&x, &p).unwrap();
        assert_eq!(y, x);
    }

    #[test]
    fn conv_direct_substitution_and_backward() {
        let x = Tensor::from_vec(&[1, 2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let p = ConvParams::new(
            Tensor::create(&[1, 1, 2, 2], 1.0).unwrap(),
            Tensor::zeros(&[1]).unwrap(),
        )
        .unwrap();
        let (y, cache) = conv2d_forward(&x, &p).unwrap();
        assert_eq!(y.shape(), &[1, 1, 1]);
        assert_eq!(y.data(), &[10.0]);

        let g = Tensor::create(&[1, 1, 1], 1.0).unwrap();
        let (gx, gp) = conv2d_backward(&cache, &g).unwrap();
        assert_eq!(gx.data(), &[1.0; 4]);
        assert_eq!(gp.kernels.data(), &[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(gp.bias.data(), &[1.0]);

        let (gx, gp) = conv2d_backward(&cache, &g.zeros_like()).unwrap();
        assert!(gx.data().iter().all(|&v| v == 0.0));
        assert!(gp.kernels.data().iter().all(|&v| v == 0.0));
        assert!(gp.bias.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn conv_rejects_oversized_kernel_and_wrong_maps() {
        let x = Tensor::<f64>::zeros(&[1, 3, 3]).unwrap();
        let p = ConvParams::zeros(1, 1, 4, 4).unwrap();
        assert!(matches!(
            conv2d_forward(&x, &p),
            Err(Error::ShapeMismatch(_))
        ));
        let p = ConvParams::zeros(1, 2, 2, 2).unwrap();
        assert!(matches!(
            conv2d_forward(&x, &p),
            Err(Error::ShapeMismatch(_))
        ));
        let p = ConvParams::zeros(1, 1, 2, 2).unwrap();
        let (_, cache) = conv2d_forward(&x, &p).unwrap();
        let bad = Tensor::<f64>::zeros(&[1, 3, 3]).unwrap();
        assert!(conv2d_backward(&cache, &bad).is_err());
    }

    #[test]
    fn conv_is_linear_without_bias() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..3 {
            let p = ConvParams::new(
                random(&mut rng, &[3, 2, 3, 3]),
                Tensor::zeros(&[3]).unwrap(),
            )
            .unwrap();
            let x = random(&mut rng, &[2, 6, 7]);
            let z = random(&mut rng, &[2, 6, 7]);
            let (alpha, beta) = (rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0));
            let mix = x.scale(alpha).add(&z.scale(beta)).unwrap();
            let lhs = conv2d_forward(&mix, &p).unwrap().0;
            let rhs = conv2d_forward(&x, &p)
                .unwrap()
                .0
                .scale(alpha)
                .add(&conv2d_forward(&z, &p).unwrap().0.scale(beta))
                .unwrap();
            for (a, b) in lhs.data().iter().zip(rhs.data()) {
                assert!((a - b).abs() <= 1e-9 * a.abs().max(b.abs()).max(1.0));
            }
        }
    }

    #[test]
    fn conv_backward_matches_finite_differences() {
        for seed in 0..3 {
            let mut rng = ChaCha8Rng::seed_from_u64(100 + seed);
            let x = random(&mut rng, &[2, 6, 6]);
            let p =
                ConvParams::new(random(&mut rng, &[3, 2, 3, 3]), random(&mut rng, &[3])).unwrap();
            let probe = random(&mut rng, &[3, 4, 4]);
            let (_, cache) = conv2d_forward(&x, &p).unwrap();
            let (gx, gp) = conv2d_backward(&cache, &probe).unwrap();

            let f = |x: &Tensor<f64>, p: &ConvParams<f64>| {
                conv2d_forward(x, p).unwrap().0.dot(&probe).unwrap()
            };
            assert_close(gx.data(), &numeric_grad(&x, |x| f(x, &p)), 1e-6);
            let nk = numeric_grad(&p.kernels, |k| {
                f(&x, &ConvParams::new(k.clone(), p.bias.clone()).unwrap())
            });
            assert_close(gp.kernels.data(), &nk, 1e-6);
            let nb = numeric_grad(&p.bias, |b| {
                f(&x, &ConvParams::new(p.kernels.clone(), b.clone()).unwrap())
            });
            assert_close(gp.bias.data(), &nb, 1e-6);
        }
    }

    #[test]
    fn pool_forward_cases() {
        let x = Tensor::<f64>::create(&[2, 6, 4], 3.25).unwrap();
        let (y, _) = avgpool2_forward(&x).unwrap();
        assert_eq!(y.shape(), &[2, 3, 2]);
        assert!(y.data().iter().all(|&v| v == 3.25));

        let x = Tensor::<f64>::zeros(&[21, 25, 25]).unwrap();
        assert_eq!(avgpool2_forward(&x).unwrap().0.shape(), &[21, 12, 12]);

        let x = Tensor::from_vec(&[1, 2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!(avgpool2_forward(&x).unwrap().0.data(), &[2.5]);

        let x = Tensor::<f64>::zeros(&[1, 1, 4]).unwrap();
        assert!(matches!(avgpool2_forward(&x), Err(Error::ShapeMismatch(_))));
    }

    #[test]
    fn pool_backward_cases() {
        let x = Tensor::<f64>::zeros(&[1, 2, 2]).unwrap();
        let (_, cache) = avgpool2_forward(&x).unwrap();
        let g = Tensor::create(&[1, 1, 1], 1.0).unwrap();
        assert_eq!(avgpool2_backward(&cache, &g).unwrap().data(), &[0.25; 4]);

        let x = Tensor::<f64>::zeros(&[1, 4, 5]).unwrap();
        let (y, cache) = avgpool2_forward(&x).unwrap();
        let g = Tensor::create(y.shape(), 1.0).unwrap();
        let gx = avgpool2_backward(&cache, &g).unwrap();
        for r in 0..4 {
            assert_eq!(gx.data()[r * 5 + 4], 0.0);
        }
        assert!(avgpool2_backward(&cache, &x).is_err());
    }

    #[test]
    fn pool_preserves_mean_for_even_dims() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x = Tensor::from_vec(
            &[2, 4, 6],
            (0..48).map(|_| rng.random_range(0..64) as f64).collect(),
        )
        .unwrap();
        let y = avgpool2_forward(&x).unwrap().0;
        let mx: f64 = x.data().iter().sum::<f64>() / 48.0;
        let my: f64 = y.data().iter().sum::<f64>() / 12.0;
        assert_eq!(mx, my);
    }

    #[test]
    fn pool_backward_matches_finite_differences() {
        for seed in 0..3 {
            let mut rng = ChaCha8Rng::seed_from_u64(200 + seed);
            let x = random(&mut rng, &[3, 5, 5]);
            let probe = random(&mut rng, &[3, 2, 2]);
            let (_, cache) = avgpool2_forward(&x).unwrap();
            let gx = avgpool2_backward(&cache, &probe).unwrap();
            let num = numeric_grad(&x, |x| avgpool2_forward(x).unwrap().0.dot(&probe).unwrap());
            for (a, n) in gx.data().iter().zip(&num) {
                // dropped cells: both exactly zero up to rounding noise
                if *a == 0.0 {
                    assert!(n.abs() < 1e-9);
                } else {
                    assert!(rel_err(*a, *n) <= 1e-8, "{a} vs {n}");
                }
            }
        }
    }

    #[test]
    fn tanh_cases() {
        let x = Tensor::<f64>::zeros(&[1]).unwrap();
        let (y, cache) = tanh_forward(&x);
        assert_eq!(y.data(), &[0.0]);
        let g = Tensor::create(&[1], 0.7).unwrap();
        assert_eq!(tanh_backward(&cache, &g).unwrap().data(), &[0.7]);

        let x = Tensor::<f64>::from_vec(&[2], vec![30.0, -30.0]).unwrap();
        let (y, cache) = tanh_forward(&x);
        assert!(y.data().iter().all(|v| v.abs() <= 1.0));
        let g = Tensor::create(&[2], 1.0).unwrap();
        assert!(tanh_backward(&cache, &g)
            .unwrap()
            .data()
            .iter()
            .all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn tanh_backward_matches_finite_differences() {
        for seed in 0..3 {
            let mut rng = ChaCha8Rng::seed_from_u64(300 + seed);
            let x = random(&mut rng, &[2, 3]);
            let probe = random(&mut rng, &[2, 3]);
            let (_, cache) = tanh_forward(&x);
            let gx = tanh_backward(&cache, &probe).unwrap();
            let num = numeric_grad(&x, |x| tanh_forward(x).0.dot(&probe).unwrap());
            assert_close(gx.data(), &num, 1e-8);
        }
    }

    #[test]
    fn fc_identity_and_shapes() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut eye = Tensor::<f64>::zeros(&[3, 3]).unwrap();
        for i in 0..3 {
            eye.data_mut()[i * 3 + i] = 1.0;
        }
        let p = FcParams::new(eye, Tensor::zeros(&[3]).unwrap()).unwrap();
        let x = random(&mut rng, &[3]);
        assert_eq!(fc_forward(&x, &p).unwrap().0, x);

        let p = FcParams::<f64>::zeros(32, 3520).unwrap();
        let x = Tensor::zeros(&[3520]).unwrap();
        assert_eq!(fc_forward(&x, &p).unwrap().0.shape(), &[32]);
        assert!(fc_forward(&Tensor::zeros(&[3519]).unwrap(), &p).is_err());
    }

    #[test]
    fn fc_backward_matches_finite_differences() {
        for seed in 0..3 {
            let mut rng = ChaCha8Rng::seed_from_u64(400 + seed);
            let p = FcParams::new(random(&mut rng, &[4, 10]), random(&mut rng, &[4])).unwrap();
            let x = random(&mut rng, &[10]);
            let probe = random(&mut rng, &[4]);
            let (_, cache) = fc_forward(&x, &p).unwrap();
            let (gx, gp) = fc_backward(&cache, &probe).unwrap();
            let f = |x: &Tensor<f64>, p: &FcParams<f64>| {
                fc_forward(x, p).unwrap().0.dot(&probe).unwrap()
            };
            assert_close(gx.data(), &numeric_grad(&x, |x| f(x, &p)), 1e-6);
            let nw = numeric_grad(&p.weights, |w| {
                f(&x, &FcParams::new(w.clone(), p.bias.clone()).unwrap())
            });
            assert_close(gp.weights.data(), &nw, 1e-6);
            let nb = numeric_grad(&p.bias, |b| {
                f(&x, &FcParams::new(p.weights.clone(), b.clone()).unwrap())
            });
            assert_close(gp.bias.data(), &nb, 1e-6);
        }
    }

    #[test]
    fn forward_does_not_mutate() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let x = random(&mut rng, &[2, 6, 6]);
        let p = ConvParams::new(random(&mut rng, &[3, 2, 3, 3]), random(&mut rng, &[3])).unwrap();
        let (x0, p0) = (x.clone(), p.clone());
        let _ = conv2d_forward(&x, &p).unwrap();
        let _ = avgpool2_forward(&x).unwrap();
        let _ = tanh_forward(&x);
        assert_eq!(x, x0);
        assert_eq!(p, p0);
    }
}
