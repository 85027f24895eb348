use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{axpy, dot, gemm, Op, Scalar};
use crate::error::{Error, Result};

/// Architecture description of one layer.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LayerSpec {
    /// Stride 1, zero "same" padding, odd kernel.
    Conv { kernel: usize, filters: usize },
    /// 2x2 window, stride 2.
    MaxPool,
    Dense { out: usize },
    Relu,
    Flatten,
}

impl LayerSpec {
    pub fn output_shape(&self, input: &[usize]) -> Result<Vec<usize>> {
        match *self {
            LayerSpec::Conv { kernel, filters } => match input {
                [_, h, w] if kernel % 2 == 1 => Ok(vec![filters, *h, *w]),
                [_, _, _] => Err(Error::Config(format!("conv kernel {kernel} must be odd"))),
                _ => Err(Error::Config(format!("conv expects CHW input, got {input:?}"))),
            },
            LayerSpec::MaxPool => match input {
                [c, h, w] if h % 2 == 0 && w % 2 == 0 => Ok(vec![*c, h / 2, w / 2]),
                _ => Err(Error::Config(format!(
                    "max-pool needs even CHW input, got {input:?}"
                ))),
            },
            LayerSpec::Dense { out } => match input {
                [_] => Ok(vec![out]),
                _ => Err(Error::Config(format!("dense expects a vector, got {input:?}"))),
            },
            LayerSpec::Relu => Ok(input.to_vec()),
            LayerSpec::Flatten => Ok(vec![input.iter().product()]),
        }
    }

    pub fn param_count(&self, input: &[usize]) -> usize {
        match *self {
            LayerSpec::Conv { kernel, filters } => filters * input[0] * kernel * kernel + filters,
            LayerSpec::Dense { out } => out * input[0] + out,
            _ => 0,
        }
    }
}

#[derive(Clone, Debug)]
pub struct Conv<T> {
    pub(crate) in_c: usize,
    pub(crate) out_c: usize,
    pub(crate) k: usize,
    pub(crate) h: usize,
    pub(crate) w: usize,
    /// `out_c x (in_c * k * k)`
    pub(crate) weight: Vec<T>,
    pub(crate) bias: Vec<T>,
}

#[derive(Clone, Debug)]
pub struct Dense<T> {
    pub(crate) n_in: usize,
    pub(crate) n_out: usize,
    /// `n_out x n_in`
    pub(crate) weight: Vec<T>,
    pub(crate) bias: Vec<T>,
}

#[derive(Clone, Debug)]
pub enum Layer<T> {
    Conv(Conv<T>),
    MaxPool { c: usize, h: usize, w: usize },
    Dense(Dense<T>),
    Relu,
    Flatten,
}

/// What a layer keeps from the forward pass for its backward pass.
#[derive(Clone, Debug)]
pub(crate) enum Saved<T> {
    Cols(Vec<T>),
    Input(Vec<T>),
    Argmax(Vec<u32>),
    Nothing,
}

fn uniform<T: Scalar, R: Rng>(n: usize, bound: f64, rng: &mut R) -> Vec<T> {
    (0..n)
        .map(|_| T::of(rng.random_range(-bound..bound)))
        .collect()
}

impl<T: Scalar> Layer<T> {
    /// Weights uniform in `±sqrt(gain / fan_in)`, biases zero.
    pub(crate) fn build<R: Rng>(spec: LayerSpec, input: &[usize], gain: f64, rng: &mut R) -> Self {
        match spec {
            LayerSpec::Conv { kernel, filters } => {
                let fan_in = input[0] * kernel * kernel;
                Layer::Conv(Conv {
                    in_c: input[0],
                    out_c: filters,
                    k: kernel,
                    h: input[1],
                    w: input[2],
                    weight: uniform(filters * fan_in, (gain / fan_in as f64).sqrt(), rng),
                    bias: vec![T::zero(); filters],
                })
            }
            LayerSpec::MaxPool => Layer::MaxPool {
                c: input[0],
                h: input[1],
                w: input[2],
            },
            LayerSpec::Dense { out } => Layer::Dense(Dense {
                n_in: input[0],
                n_out: out,
                weight: uniform(out * input[0], (gain / input[0] as f64).sqrt(), rng),
                bias: vec![T::zero(); out],
            }),
            LayerSpec::Relu => Layer::Relu,
            LayerSpec::Flatten => Layer::Flatten,
        }
    }

    pub fn spec(&self) -> LayerSpec {
        match self {
            Layer::Conv(c) => LayerSpec::Conv {
                kernel: c.k,
                filters: c.out_c,
            },
            Layer::MaxPool { .. } => LayerSpec::MaxPool,
            Layer::Dense(d) => LayerSpec::Dense { out: d.n_out },
            Layer::Relu => LayerSpec::Relu,
            Layer::Flatten => LayerSpec::Flatten,
        }
    }

    pub(crate) fn params(&self) -> Vec<&Vec<T>> {
        match self {
            Layer::Conv(c) => vec![&c.weight, &c.bias],
            Layer::Dense(d) => vec![&d.weight, &d.bias],
            _ => vec![],
        }
    }

    pub(crate) fn params_mut(&mut self) -> Vec<&mut Vec<T>> {
        match self {
            Layer::Conv(c) => vec![&mut c.weight, &mut c.bias],
            Layer::Dense(d) => vec![&mut d.weight, &mut d.bias],
            _ => vec![],
        }
    }

    pub(crate) fn forward(&self, x: &[T], keep: bool) -> (Vec<T>, Saved<T>) {
        match self {
            Layer::Conv(c) => {
                let cols = c.im2col(x);
                let hw = c.h * c.w;
                let mut y = vec![T::zero(); c.out_c * hw];
                gemm(
                    c.out_c,
                    c.in_c * c.k * c.k,
                    hw,
                    &c.weight,
                    Op::N,
                    &cols,
                    Op::N,
                    &mut y,
                    false,
                );
                for (row, &b) in y.chunks_exact_mut(hw).zip(&c.bias) {
                    row.iter_mut().for_each(|v| *v += b);
                }
                (y, if keep { Saved::Cols(cols) } else { Saved::Nothing })
            }
            &Layer::MaxPool { c, h, w } => {
                let (oh, ow) = (h / 2, w / 2);
                let mut y = Vec::with_capacity(c * oh * ow);
                let mut arg = Vec::with_capacity(if keep { c * oh * ow } else { 0 });
                for ch in 0..c {
                    let base = ch * h * w;
                    for oy in 0..oh {
                        for ox in 0..ow {
                            let i0 = base + 2 * oy * w + 2 * ox;
                            let mut best = i0;
                            for i in [i0 + 1, i0 + w, i0 + w + 1] {
                                if x[i] > x[best] {
                                    best = i;
                                }
                            }
                            y.push(x[best]);
                            if keep {
                                arg.push(best as u32);
                            }
                        }
                    }
                }
                (y, if keep { Saved::Argmax(arg) } else { Saved::Nothing })
            }
            Layer::Dense(d) => {
                let y = d
                    .weight
                    .chunks_exact(d.n_in)
                    .zip(&d.bias)
                    .map(|(row, &b)| dot(row, x) + b)
                    .collect();
                (y, if keep { Saved::Input(x.to_vec()) } else { Saved::Nothing })
            }
            Layer::Relu => {
                let y = x.iter().map(|&v| v.max(T::zero())).collect();
                (y, if keep { Saved::Input(x.to_vec()) } else { Saved::Nothing })
            }
            Layer::Flatten => (x.to_vec(), Saved::Nothing),
        }
    }

    /// Accumulate parameter gradients into `grads` and return the input gradient if asked.
    pub(crate) fn backward(
        &self,
        saved: &Saved<T>,
        dy: &[T],
        grads: &mut [Vec<T>],
        need_dx: bool,
    ) -> Option<Vec<T>> {
        match (self, saved) {
            (Layer::Conv(c), Saved::Cols(cols)) => {
                let hw = c.h * c.w;
                let ckk = c.in_c * c.k * c.k;
                let (gw, gb) = grads.split_at_mut(1);
                gemm(c.out_c, hw, ckk, dy, Op::N, cols, Op::T, &mut gw[0], true);
                for (g, row) in gb[0].iter_mut().zip(dy.chunks_exact(hw)) {
                    *g += row.iter().copied().sum::<T>();
                }
                need_dx.then(|| {
                    let mut dcols = vec![T::zero(); ckk * hw];
                    gemm(ckk, c.out_c, hw, &c.weight, Op::T, dy, Op::N, &mut dcols, false);
                    c.col2im(&dcols)
                })
            }
            (&Layer::MaxPool { c, h, w }, Saved::Argmax(arg)) => need_dx.then(|| {
                let mut dx = vec![T::zero(); c * h * w];
                for (&i, &g) in arg.iter().zip(dy) {
                    dx[i as usize] += g;
                }
                dx
            }),
            (Layer::Dense(d), Saved::Input(x)) => {
                let (gw, gb) = grads.split_at_mut(1);
                for (o, &g) in dy.iter().enumerate() {
                    if g != T::zero() {
                        axpy(g, x, &mut gw[0][o * d.n_in..(o + 1) * d.n_in]);
                    }
                    gb[0][o] += g;
                }
                need_dx.then(|| {
                    let mut dx = vec![T::zero(); d.n_in];
                    for (row, &g) in d.weight.chunks_exact(d.n_in).zip(dy) {
                        if g != T::zero() {
                            axpy(g, row, &mut dx);
                        }
                    }
                    dx
                })
            }
            (Layer::Relu, Saved::Input(x)) => need_dx.then(|| {
                x.iter()
                    .zip(dy)
                    .map(|(&v, &g)| if v > T::zero() { g } else { T::zero() })
                    .collect()
            }),
            (Layer::Flatten, _) => need_dx.then(|| dy.to_vec()),
            _ => panic!("backward called without a matching forward trace"),
        }
    }
}

impl<T: Scalar> Conv<T> {
    fn pad(&self) -> usize {
        self.k / 2
    }

    /// `(in_c * k * k) x (h * w)` patch matrix with zero padding.
    fn im2col(&self, x: &[T]) -> Vec<T> {
        let (h, w, k, p) = (self.h, self.w, self.k, self.pad());
        let hw = h * w;
        let mut cols = vec![T::zero(); self.in_c * k * k * hw];
        for c in 0..self.in_c {
            let plane = &x[c * hw..(c + 1) * hw];
            for ky in 0..k {
                for kx in 0..k {
                    let row = &mut cols[((c * k + ky) * k + kx) * hw..][..hw];
                    // valid output columns: 0 <= ox + kx - p < w
                    let ox_lo = p.saturating_sub(kx);
                    let ox_hi = (w + p).saturating_sub(kx).min(w);
                    if ox_lo >= ox_hi {
                        continue;
                    }
                    for oy in 0..h {
                        let iy = oy + ky;
                        if iy < p || iy - p >= h {
                            continue;
                        }
                        let src = &plane[(iy - p) * w..][..w];
                        let ix_lo = ox_lo + kx - p;
                        let n = ox_hi - ox_lo;
                        row[oy * w + ox_lo..oy * w + ox_hi].copy_from_slice(&src[ix_lo..ix_lo + n]);
                    }
                }
            }
        }
        cols
    }

    fn col2im(&self, cols: &[T]) -> Vec<T> {
        let (h, w, k, p) = (self.h, self.w, self.k, self.pad());
        let hw = h * w;
        let mut dx = vec![T::zero(); self.in_c * hw];
        for c in 0..self.in_c {
            let plane = &mut dx[c * hw..(c + 1) * hw];
            for ky in 0..k {
                for kx in 0..k {
                    let row = &cols[((c * k + ky) * k + kx) * hw..][..hw];
                    let ox_lo = p.saturating_sub(kx);
                    let ox_hi = (w + p).saturating_sub(kx).min(w);
                    if ox_lo >= ox_hi {
                        continue;
                    }
                    for oy in 0..h {
                        let iy = oy + ky;
                        if iy < p || iy - p >= h {
                            continue;
                        }
                        let dst = &mut plane[(iy - p) * w..][..w];
                        let ix_lo = ox_lo + kx - p;
                        for (d, &s) in dst[ix_lo..ix_lo + (ox_hi - ox_lo)]
                            .iter_mut()
                            .zip(&row[oy * w + ox_lo..oy * w + ox_hi])
                        {
                            *d += s;
                        }
                    }
                }
            }
        }
        dx
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Direct convolution, for checking im2col + gemm.
    fn naive_conv(c: &Conv<f64>, x: &[f64]) -> Vec<f64> {
        let (h, w, k) = (c.h as isize, c.w as isize, c.k as isize);
        let p = k / 2;
        let mut y = vec![0.0; c.out_c * (h * w) as usize];
        for o in 0..c.out_c {
            for oy in 0..h {
                for ox in 0..w {
                    let mut s = c.bias[o];
                    for ic in 0..c.in_c {
                        for ky in 0..k {
                            for kx in 0..k {
                                let (iy, ix) = (oy + ky - p, ox + kx - p);
                                if iy < 0 || ix < 0 || iy >= h || ix >= w {
                                    continue;
                                }
                                let wi = ((o * c.in_c + ic) * c.k + ky as usize) * c.k + kx as usize;
                                s += c.weight[wi] * x[(ic as isize * h * w + iy * w + ix) as usize];
                            }
                        }
                    }
                    y[(o as isize * h * w + oy * w + ox) as usize] = s;
                }
            }
        }
        y
    }

    #[test]
    fn conv_matches_direct() {
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        for (k, h, w) in [(5, 6, 4), (3, 2, 2), (1, 3, 5), (5, 1, 1)] {
            let layer = Layer::<f64>::build(LayerSpec::Conv { kernel: k, filters: 3 }, &[2, h, w], 6.0, &mut rng);
            let Layer::Conv(mut c) = layer else { unreachable!() };
            c.bias = vec![0.1, -0.2, 0.3];
            let x: Vec<f64> = (0..2 * h * w).map(|_| rng.random_range(-1.0..1.0)).collect();
            let (y, _) = Layer::Conv(c.clone()).forward(&x, false);
            let expected = naive_conv(&c, &x);
            for (a, b) in y.iter().zip(&expected) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn shapes() {
        let conv = LayerSpec::Conv { kernel: 5, filters: 32 };
        assert_eq!(conv.output_shape(&[3, 64, 64]).unwrap(), vec![32, 64, 64]);
        assert_eq!(LayerSpec::MaxPool.output_shape(&[32, 64, 64]).unwrap(), vec![32, 32, 32]);
        assert!(LayerSpec::MaxPool.output_shape(&[32, 63, 64]).is_err());
        assert!(LayerSpec::Conv { kernel: 4, filters: 1 }.output_shape(&[1, 4, 4]).is_err());
        assert_eq!(LayerSpec::Flatten.output_shape(&[2, 3, 4]).unwrap(), vec![24]);
        assert_eq!(conv.param_count(&[3, 64, 64]), 32 * 75 + 32);
    }
}
