//! Layer primitives over `(N, C, H, W)` batches, each with an explicit
//! backward pass.

use rand::Rng;

use super::Tensor;

pub const BN_EPS: f64 = 1e-5;
pub const BN_MOMENTUM: f64 = 0.9;

/// `c = a * b + beta * c` for row-major operands with explicit strides.
#[allow(clippy::too_many_arguments)]
fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    (rsa, csa): (usize, usize),
    b: &[f64],
    (rsb, csb): (usize, usize),
    beta: f64,
    c: &mut [f64],
) {
    debug_assert!(m == 0 || k == 0 || (m - 1) * rsa + (k - 1) * csa < a.len());
    debug_assert!(k == 0 || n == 0 || (k - 1) * rsb + (n - 1) * csb < b.len());
    assert!(c.len() >= m * n);
    // SAFETY: bounds on every operand are asserted above and the output is
    // a distinct mutable slice of m*n elements laid out row-major.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa as isize,
            csa as isize,
            b.as_ptr(),
            rsb as isize,
            csb as isize,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

/// Square-kernel convolution, stride 1, dilation 1, "same" padding.
#[derive(Debug, Clone, PartialEq)]
pub struct Conv2d {
    /// `(out, in, k, k)`
    pub weight: Tensor,
    /// `(out,)`
    pub bias: Tensor,
}

pub struct ConvCache {
    cols: Vec<f64>,
    n: usize,
    h: usize,
    w: usize,
}

impl Conv2d {
    pub fn new(c_in: usize, c_out: usize, kernel: usize, rng: &mut impl Rng) -> Self {
        let mut conv = Self::zeros(c_in, c_out, kernel);
        conv.reinit(rng);
        conv
    }

    pub fn zeros(c_in: usize, c_out: usize, kernel: usize) -> Self {
        assert!(kernel % 2 == 1, "odd kernels only");
        Conv2d { weight: Tensor::zeros(&[c_out, c_in, kernel, kernel]), bias: Tensor::zeros(&[c_out]) }
    }

    /// Fan-in scaled uniform initialisation, `U(-1/sqrt(fan_in), 1/sqrt(fan_in))`.
    pub fn reinit(&mut self, rng: &mut impl Rng) {
        let bound = 1.0 / (self.fan_in() as f64).sqrt();
        for v in self.weight.data_mut().iter_mut().chain(self.bias.data_mut()) {
            *v = rng.gen_range(-bound..bound);
        }
    }

    pub fn fan_in(&self) -> usize {
        self.c_in() * self.kernel() * self.kernel()
    }

    pub fn c_in(&self) -> usize {
        self.weight.shape()[1]
    }

    pub fn c_out(&self) -> usize {
        self.weight.shape()[0]
    }

    pub fn kernel(&self) -> usize {
        self.weight.shape()[2]
    }

    fn im2col(&self, x: &[f64], h: usize, w: usize, cols: &mut [f64]) {
        let k = self.kernel();
        let pad = (k / 2) as isize;
        let hw = h * w;
        for ci in 0..self.c_in() {
            let plane = &x[ci * hw..(ci + 1) * hw];
            for ky in 0..k {
                for kx in 0..k {
                    let row = &mut cols[((ci * k + ky) * k + kx) * hw..][..hw];
                    let dy = ky as isize - pad;
                    let dx = kx as isize - pad;
                    for y in 0..h {
                        let sy = y as isize + dy;
                        let out = &mut row[y * w..(y + 1) * w];
                        if sy < 0 || sy >= h as isize {
                            out.fill(0.0);
                            continue;
                        }
                        let src = &plane[sy as usize * w..(sy as usize + 1) * w];
                        for (x_, o) in out.iter_mut().enumerate() {
                            let sx = x_ as isize + dx;
                            *o = if sx < 0 || sx >= w as isize { 0.0 } else { src[sx as usize] };
                        }
                    }
                }
            }
        }
    }

    fn col2im(&self, cols: &[f64], h: usize, w: usize, dx_out: &mut [f64]) {
        let k = self.kernel();
        let pad = (k / 2) as isize;
        let hw = h * w;
        for ci in 0..self.c_in() {
            let plane = &mut dx_out[ci * hw..(ci + 1) * hw];
            for ky in 0..k {
                for kx in 0..k {
                    let row = &cols[((ci * k + ky) * k + kx) * hw..][..hw];
                    let dy = ky as isize - pad;
                    let dx = kx as isize - pad;
                    for y in 0..h {
                        let sy = y as isize + dy;
                        if sy < 0 || sy >= h as isize {
                            continue;
                        }
                        let dst = &mut plane[sy as usize * w..(sy as usize + 1) * w];
                        for (x_, &g) in row[y * w..(y + 1) * w].iter().enumerate() {
                            let sx = x_ as isize + dx;
                            if sx >= 0 && sx < w as isize {
                                dst[sx as usize] += g;
                            }
                        }
                    }
                }
            }
        }
    }

    pub fn forward(&self, x: &Tensor) -> (Tensor, ConvCache) {
        let [n, c, h, w] = dims4(x);
        assert_eq!(c, self.c_in(), "conv input channels");
        let hw = h * w;
        let kk = self.fan_in();
        let co = self.c_out();
        let mut cols = vec![0.0; n * kk * hw];
        let mut out = Tensor::zeros(&[n, co, h, w]);
        for b in 0..n {
            let col = &mut cols[b * kk * hw..(b + 1) * kk * hw];
            self.im2col(&x.data()[b * c * hw..(b + 1) * c * hw], h, w, col);
            let o = &mut out.data_mut()[b * co * hw..(b + 1) * co * hw];
            for (oc, chunk) in o.chunks_mut(hw).enumerate() {
                chunk.fill(self.bias.data()[oc]);
            }
            gemm(co, kk, hw, self.weight.data(), (kk, 1), col, (hw, 1), 1.0, o);
        }
        (out, ConvCache { cols, n, h, w })
    }

    /// Returns `(d_input, d_weight, d_bias)`.
    pub fn backward(&self, cache: &ConvCache, dout: &Tensor) -> (Tensor, Tensor, Tensor) {
        let ConvCache { cols, n, h, w } = cache;
        let (n, h, w) = (*n, *h, *w);
        let hw = h * w;
        let kk = self.fan_in();
        let co = self.c_out();
        let ci = self.c_in();
        let mut dw = Tensor::zeros(self.weight.shape());
        let mut db = Tensor::zeros(self.bias.shape());
        let mut dx = Tensor::zeros(&[n, ci, h, w]);
        let mut dcol = vec![0.0; kk * hw];
        for b in 0..n {
            let g = &dout.data()[b * co * hw..(b + 1) * co * hw];
            let col = &cols[b * kk * hw..(b + 1) * kk * hw];
            // dW += dOut (co x hw) * col^T (hw x kk)
            gemm(co, hw, kk, g, (hw, 1), col, (1, hw), 1.0, dw.data_mut());
            for (oc, chunk) in g.chunks(hw).enumerate() {
                db.data_mut()[oc] += chunk.iter().sum::<f64>();
            }
            // dCol = W^T (kk x co) * dOut (co x hw)
            gemm(kk, co, hw, self.weight.data(), (1, kk), g, (hw, 1), 0.0, &mut dcol);
            self.col2im(&dcol, h, w, &mut dx.data_mut()[b * ci * hw..(b + 1) * ci * hw]);
        }
        (dx, dw, db)
    }
}

/// Per-channel batch normalisation over `(N, H, W)`.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchNorm2d {
    pub gamma: Tensor,
    pub beta: Tensor,
    pub running_mean: Tensor,
    pub running_var: Tensor,
}

pub struct BnCache {
    xhat: Tensor,
    inv_std: Vec<f64>,
}

/// Batch statistics observed in a training forward pass, folded into the
/// running averages by the optimizer.
#[derive(Debug, Clone, PartialEq)]
pub struct BnStats {
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
}

impl BatchNorm2d {
    pub fn new(c: usize) -> Self {
        BatchNorm2d {
            gamma: Tensor::filled(&[c], 1.0),
            beta: Tensor::zeros(&[c]),
            running_mean: Tensor::zeros(&[c]),
            running_var: Tensor::filled(&[c], 1.0),
        }
    }

    pub fn channels(&self) -> usize {
        self.gamma.len()
    }

    pub fn forward_eval(&self, x: &Tensor) -> Tensor {
        let [n, c, h, w] = dims4(x);
        let hw = h * w;
        let mut y = x.clone();
        for b in 0..n {
            for ch in 0..c {
                let scale = self.gamma.data()[ch] / (self.running_var.data()[ch] + BN_EPS).sqrt();
                let shift = self.beta.data()[ch] - self.running_mean.data()[ch] * scale;
                for v in &mut y.data_mut()[(b * c + ch) * hw..][..hw] {
                    *v = *v * scale + shift;
                }
            }
        }
        y
    }

    pub fn forward_train(&self, x: &Tensor) -> (Tensor, BnCache, BnStats) {
        let [n, c, h, w] = dims4(x);
        let hw = h * w;
        let count = (n * hw) as f64;
        let mut mean = vec![0.0; c];
        let mut var = vec![0.0; c];
        for ch in 0..c {
            let mut s = 0.0;
            for b in 0..n {
                s += x.data()[(b * c + ch) * hw..][..hw].iter().sum::<f64>();
            }
            let m = s / count;
            let mut v = 0.0;
            for b in 0..n {
                v += x.data()[(b * c + ch) * hw..][..hw].iter().map(|&t| (t - m) * (t - m)).sum::<f64>();
            }
            mean[ch] = m;
            var[ch] = v / count;
        }
        let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / (v + BN_EPS).sqrt()).collect();
        let mut xhat = x.clone();
        let mut y = x.clone();
        for b in 0..n {
            for ch in 0..c {
                let range = (b * c + ch) * hw..(b * c + ch + 1) * hw;
                let (g, be) = (self.gamma.data()[ch], self.beta.data()[ch]);
                for (xh, yy) in xhat.data_mut()[range.clone()].iter_mut().zip(&mut y.data_mut()[range]) {
                    *xh = (*xh - mean[ch]) * inv_std[ch];
                    *yy = g * *xh + be;
                }
            }
        }
        (y, BnCache { xhat, inv_std }, BnStats { mean, var })
    }

    /// Returns `(d_input, d_gamma, d_beta)` for the training-mode transform.
    pub fn backward(&self, cache: &BnCache, dy: &Tensor) -> (Tensor, Tensor, Tensor) {
        let [n, c, h, w] = dims4(dy);
        let hw = h * w;
        let count = (n * hw) as f64;
        let mut dgamma = Tensor::zeros(&[c]);
        let mut dbeta = Tensor::zeros(&[c]);
        let mut dx = Tensor::zeros(dy.shape());
        for ch in 0..c {
            let (mut sum_dy, mut sum_dy_xhat) = (0.0, 0.0);
            for b in 0..n {
                let r = (b * c + ch) * hw;
                for i in r..r + hw {
                    sum_dy += dy.data()[i];
                    sum_dy_xhat += dy.data()[i] * cache.xhat.data()[i];
                }
            }
            dgamma.data_mut()[ch] = sum_dy_xhat;
            dbeta.data_mut()[ch] = sum_dy;
            let k = self.gamma.data()[ch] * cache.inv_std[ch];
            let (mean_dy, mean_dy_xhat) = (sum_dy / count, sum_dy_xhat / count);
            for b in 0..n {
                let r = (b * c + ch) * hw;
                for i in r..r + hw {
                    dx.data_mut()[i] = k * (dy.data()[i] - mean_dy - cache.xhat.data()[i] * mean_dy_xhat);
                }
            }
        }
        (dx, dgamma, dbeta)
    }

    /// `running = m * running + (1 - m) * batch`, using the unbiased variance.
    pub fn update_running(&mut self, stats: &BnStats, count: usize) {
        let unbias = if count > 1 { count as f64 / (count - 1) as f64 } else { 1.0 };
        for ch in 0..self.channels() {
            let rm = &mut self.running_mean.data_mut()[ch];
            *rm = BN_MOMENTUM * *rm + (1.0 - BN_MOMENTUM) * stats.mean[ch];
            let rv = &mut self.running_var.data_mut()[ch];
            *rv = BN_MOMENTUM * *rv + (1.0 - BN_MOMENTUM) * stats.var[ch] * unbias;
        }
    }

    pub fn reset(&mut self) {
        *self = BatchNorm2d::new(self.channels());
    }
}

pub fn relu(x: &Tensor) -> Tensor {
    let mut y = x.clone();
    y.data_mut().iter_mut().for_each(|v| *v = v.max(0.0));
    y
}

/// Gradient through ReLU given the layer's output.
pub fn relu_backward(out: &Tensor, dy: &Tensor) -> Tensor {
    let mut dx = dy.clone();
    for (d, &o) in dx.data_mut().iter_mut().zip(out.data()) {
        if o <= 0.0 {
            *d = 0.0;
        }
    }
    dx
}

/// `(N, C, H, W) -> (N, 2C)`: per-channel spatial means followed by maxima.
pub fn global_pool(x: &Tensor) -> (Tensor, Vec<usize>) {
    let [n, c, h, w] = dims4(x);
    let hw = h * w;
    let mut out = Tensor::zeros(&[n, 2 * c]);
    let mut argmax = vec![0; n * c];
    for b in 0..n {
        for ch in 0..c {
            let plane = &x.data()[(b * c + ch) * hw..][..hw];
            let mean = plane.iter().sum::<f64>() / hw as f64;
            let (mut best, mut at) = (plane[0], 0);
            for (i, &v) in plane.iter().enumerate().skip(1) {
                if v > best {
                    best = v;
                    at = i;
                }
            }
            out.data_mut()[b * 2 * c + ch] = mean;
            out.data_mut()[b * 2 * c + c + ch] = best;
            argmax[b * c + ch] = at;
        }
    }
    (out, argmax)
}

pub fn global_pool_backward(argmax: &[usize], dy: &Tensor, shape: [usize; 4]) -> Tensor {
    let [n, c, h, w] = shape;
    let hw = h * w;
    let mut dx = Tensor::zeros(&shape);
    for b in 0..n {
        for ch in 0..c {
            let g_mean = dy.data()[b * 2 * c + ch] / hw as f64;
            let g_max = dy.data()[b * 2 * c + c + ch];
            let plane = &mut dx.data_mut()[(b * c + ch) * hw..][..hw];
            plane.iter_mut().for_each(|v| *v = g_mean);
            plane[argmax[b * c + ch]] += g_max;
        }
    }
    dx
}

/// Fully connected layer `(N, in) -> (N, out)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Linear {
    /// `(out, in)`
    pub weight: Tensor,
    pub bias: Tensor,
}

impl Linear {
    pub fn new(inputs: usize, outputs: usize, rng: &mut impl Rng) -> Self {
        let mut l = Self::zeros(inputs, outputs);
        l.reinit(rng);
        l
    }

    pub fn zeros(inputs: usize, outputs: usize) -> Self {
        Linear { weight: Tensor::zeros(&[outputs, inputs]), bias: Tensor::zeros(&[outputs]) }
    }

    pub fn reinit(&mut self, rng: &mut impl Rng) {
        let bound = 1.0 / (self.weight.shape()[1] as f64).sqrt();
        for v in self.weight.data_mut().iter_mut().chain(self.bias.data_mut()) {
            *v = rng.gen_range(-bound..bound);
        }
    }

    pub fn forward(&self, x: &Tensor) -> Tensor {
        let (n, fin) = (x.shape()[0], x.shape()[1]);
        let fout = self.weight.shape()[0];
        let mut y = Tensor::zeros(&[n, fout]);
        for b in 0..n {
            for o in 0..fout {
                let row = &self.weight.data()[o * fin..(o + 1) * fin];
                let xi = &x.data()[b * fin..(b + 1) * fin];
                y.data_mut()[b * fout + o] =
                    self.bias.data()[o] + row.iter().zip(xi).map(|(a, b)| a * b).sum::<f64>();
            }
        }
        y
    }

    /// Returns `(d_input, d_weight, d_bias)`.
    pub fn backward(&self, x: &Tensor, dy: &Tensor) -> (Tensor, Tensor, Tensor) {
        let (n, fin) = (x.shape()[0], x.shape()[1]);
        let fout = self.weight.shape()[0];
        let mut dx = Tensor::zeros(x.shape());
        let mut dw = Tensor::zeros(self.weight.shape());
        let mut db = Tensor::zeros(self.bias.shape());
        for b in 0..n {
            for o in 0..fout {
                let g = dy.data()[b * fout + o];
                db.data_mut()[o] += g;
                for i in 0..fin {
                    dw.data_mut()[o * fin + i] += g * x.data()[b * fin + i];
                    dx.data_mut()[b * fin + i] += g * self.weight.data()[o * fin + i];
                }
            }
        }
        (dx, dw, db)
    }
}

pub(crate) fn dims4(x: &Tensor) -> [usize; 4] {
    let s = x.shape();
    assert_eq!(s.len(), 4, "expected a (N, C, H, W) tensor, got {s:?}");
    [s[0], s[1], s[2], s[3]]
}
