//! Layer implementations: convolution, depthwise convolution, batch
//! normalization, dense, and pooling, each with explicit backward passes.

use ndarray::{s, Array1, Array2, Array3, Array4, Axis};
use ndarray::parallel::prelude::*;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::{LayerCtx, Param};

fn he_uniform(rng: &mut ChaCha8Rng, fan_in: usize, shape: &[usize]) -> ndarray::ArrayD<f64> {
    let bound = (6.0 / fan_in as f64).sqrt();
    let n: usize = shape.iter().product();
    let data: Vec<f64> = (0..n).map(|_| rng.gen_range(-bound..bound)).collect();
    ndarray::ArrayD::from_shape_vec(shape.to_vec(), data).expect("shape matches data")
}

fn conv_out_size(input: usize, kernel: usize, stride: usize, padding: usize) -> usize {
    (input + 2 * padding - kernel) / stride + 1
}

/// Standard 2-D convolution without bias (batch norm follows every conv).
#[derive(Debug, Clone)]
pub struct Conv2d {
    pub weight: Param, // (out, in, k, k)
    pub stride: usize,
    pub padding: usize,
    cached_input: Option<Array4<f64>>,
}

impl Conv2d {
    pub fn new(
        name: &str,
        rng: &mut ChaCha8Rng,
        in_ch: usize,
        out_ch: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
    ) -> Self {
        let fan_in = in_ch * kernel * kernel;
        Conv2d {
            weight: Param::new(
                format!("{name}.weight"),
                he_uniform(rng, fan_in, &[out_ch, in_ch, kernel, kernel]),
            ),
            stride,
            padding,
            cached_input: None,
        }
    }

    fn dims(&self) -> (usize, usize, usize) {
        let shape = self.weight.value.shape();
        (shape[0], shape[1], shape[2]) // (out, in, k)
    }

    /// (in·k·k, out_h·out_w) patch matrix for one image.
    fn im2col(&self, x: &ndarray::ArrayView3<f64>, out_h: usize, out_w: usize) -> Array2<f64> {
        let (_, in_ch, k) = self.dims();
        let (h, w) = (x.shape()[1], x.shape()[2]);
        let mut cols = Array2::zeros((in_ch * k * k, out_h * out_w));
        for c in 0..in_ch {
            for ki in 0..k {
                for kj in 0..k {
                    let row = (c * k + ki) * k + kj;
                    for oh in 0..out_h {
                        let ih = (oh * self.stride + ki) as isize - self.padding as isize;
                        if ih < 0 || ih >= h as isize {
                            continue;
                        }
                        for ow in 0..out_w {
                            let iw = (ow * self.stride + kj) as isize - self.padding as isize;
                            if iw < 0 || iw >= w as isize {
                                continue;
                            }
                            cols[[row, oh * out_w + ow]] = x[[c, ih as usize, iw as usize]];
                        }
                    }
                }
            }
        }
        cols
    }

    pub fn forward(&mut self, x: &Array4<f64>, ctx: LayerCtx) -> Array4<f64> {
        let (out_ch, in_ch, k) = self.dims();
        let (n, _, h, w) = (x.shape()[0], x.shape()[1], x.shape()[2], x.shape()[3]);
        let out_h = conv_out_size(h, k, self.stride, self.padding);
        let out_w = conv_out_size(w, k, self.stride, self.padding);
        let w_mat = self
            .weight
            .value
            .view()
            .into_shape_with_order((out_ch, in_ch * k * k))
            .expect("contiguous weight");

        let mut y = Array4::zeros((n, out_ch, out_h, out_w));
        let pointwise = k == 1 && self.stride == 1 && self.padding == 0;
        y.axis_iter_mut(Axis(0))
            .into_par_iter()
            .zip(x.axis_iter(Axis(0)).into_par_iter())
            .for_each(|(mut y_n, x_n)| {
                let y_flat = if pointwise {
                    let x_mat = x_n
                        .into_shape_with_order((in_ch, h * w))
                        .expect("contiguous input");
                    w_mat.dot(&x_mat)
                } else {
                    let cols = self.im2col(&x_n, out_h, out_w);
                    w_mat.dot(&cols)
                };
                y_n.assign(
                    &y_flat
                        .into_shape_with_order((out_ch, out_h, out_w))
                        .expect("conv output shape"),
                );
            });

        if ctx.cache {
            self.cached_input = Some(x.clone());
        }
        y
    }

    /// Accumulates the weight gradient and (optionally) returns dx.
    pub fn backward(&mut self, dy: &Array4<f64>, need_dx: bool) -> Option<Array4<f64>> {
        let x = self
            .cached_input
            .as_ref()
            .expect("backward without cached forward");
        let (out_ch, in_ch, k) = self.dims();
        let (n, _, h, w) = (x.shape()[0], x.shape()[1], x.shape()[2], x.shape()[3]);
        let (out_h, out_w) = (dy.shape()[2], dy.shape()[3]);
        let pointwise = k == 1 && self.stride == 1 && self.padding == 0;
        let w_mat = self
            .weight
            .value
            .view()
            .into_shape_with_order((out_ch, in_ch * k * k))
            .expect("contiguous weight");

        // Per-image partials, reduced in index order for determinism.
        let partials: Vec<(Array2<f64>, Option<Array3<f64>>)> = (0..n)
            .into_par_iter()
            .map(|i| {
                let x_n = x.index_axis(Axis(0), i);
                let dy_n = dy
                    .index_axis(Axis(0), i)
                    .into_shape_with_order((out_ch, out_h * out_w))
                    .expect("contiguous dy");
                let (dw_n, dx_n) = if pointwise {
                    let x_mat = x_n
                        .into_shape_with_order((in_ch, h * w))
                        .expect("contiguous input");
                    let dw = dy_n.dot(&x_mat.t());
                    let dx = need_dx.then(|| {
                        w_mat
                            .t()
                            .dot(&dy_n)
                            .into_shape_with_order((in_ch, h, w))
                            .expect("dx shape")
                    });
                    (dw, dx)
                } else {
                    let cols = self.im2col(&x_n, out_h, out_w);
                    let dw = dy_n.dot(&cols.t());
                    let dx = need_dx.then(|| {
                        // Scatter patch gradients back onto the input grid.
                        let dcols = w_mat.t().dot(&dy_n);
                        let mut dx = Array3::zeros((in_ch, h, w));
                        for c in 0..in_ch {
                            for ki in 0..k {
                                for kj in 0..k {
                                    let row = (c * k + ki) * k + kj;
                                    for oh in 0..out_h {
                                        let ih = (oh * self.stride + ki) as isize
                                            - self.padding as isize;
                                        if ih < 0 || ih >= h as isize {
                                            continue;
                                        }
                                        for ow in 0..out_w {
                                            let iw = (ow * self.stride + kj) as isize
                                                - self.padding as isize;
                                            if iw < 0 || iw >= w as isize {
                                                continue;
                                            }
                                            dx[[c, ih as usize, iw as usize]] +=
                                                dcols[[row, oh * out_w + ow]];
                                        }
                                    }
                                }
                            }
                        }
                        dx
                    });
                    (dw, dx)
                };
                (dw_n, dx_n)
            })
            .collect();

        let mut dw_total = Array2::<f64>::zeros((out_ch, in_ch * k * k));
        for (dw_n, _) in &partials {
            dw_total += dw_n;
        }
        let mut grad = self
            .weight
            .grad
            .view_mut()
            .into_shape_with_order((out_ch, in_ch * k * k))
            .expect("contiguous grad");
        grad += &dw_total;

        need_dx.then(|| {
            let mut dx = Array4::zeros((n, in_ch, h, w));
            for (i, (_, dx_n)) in partials.into_iter().enumerate() {
                dx.index_axis_mut(Axis(0), i)
                    .assign(&dx_n.expect("dx requested"));
            }
            dx
        })
    }

    pub fn clear_cache(&mut self) {
        self.cached_input = None;
    }
}

/// 3×3 depthwise convolution (one filter per channel), padding 1.
#[derive(Debug, Clone)]
pub struct DepthwiseConv2d {
    pub weight: Param, // (ch, 3, 3)
    pub stride: usize,
    cached_input: Option<Array4<f64>>,
}

impl DepthwiseConv2d {
    pub fn new(name: &str, rng: &mut ChaCha8Rng, channels: usize, stride: usize) -> Self {
        DepthwiseConv2d {
            weight: Param::new(
                format!("{name}.weight"),
                he_uniform(rng, 9, &[channels, 3, 3]),
            ),
            stride,
            cached_input: None,
        }
    }

    pub fn forward(&mut self, x: &Array4<f64>, ctx: LayerCtx) -> Array4<f64> {
        let (n, ch, h, w) = (x.shape()[0], x.shape()[1], x.shape()[2], x.shape()[3]);
        let out_h = conv_out_size(h, 3, self.stride, 1);
        let out_w = conv_out_size(w, 3, self.stride, 1);
        let weight = self
            .weight
            .value
            .view()
            .into_dimensionality::<ndarray::Ix3>()
            .expect("depthwise weight is (ch, 3, 3)");

        let mut y = Array4::zeros((n, ch, out_h, out_w));
        y.axis_iter_mut(Axis(0))
            .into_par_iter()
            .zip(x.axis_iter(Axis(0)).into_par_iter())
            .for_each(|(mut y_n, x_n)| {
                for c in 0..ch {
                    let plane = x_n.index_axis(Axis(0), c);
                    let kernel = weight.index_axis(Axis(0), c);
                    for oh in 0..out_h {
                        for ow in 0..out_w {
                            let mut acc = 0.0;
                            for ki in 0..3 {
                                let ih = (oh * self.stride + ki) as isize - 1;
                                if ih < 0 || ih >= h as isize {
                                    continue;
                                }
                                for kj in 0..3 {
                                    let iw = (ow * self.stride + kj) as isize - 1;
                                    if iw < 0 || iw >= w as isize {
                                        continue;
                                    }
                                    acc += kernel[[ki, kj]] * plane[[ih as usize, iw as usize]];
                                }
                            }
                            y_n[[c, oh, ow]] = acc;
                        }
                    }
                }
            });

        if ctx.cache {
            self.cached_input = Some(x.clone());
        }
        y
    }

    pub fn backward(&mut self, dy: &Array4<f64>, need_dx: bool) -> Option<Array4<f64>> {
        let x = self
            .cached_input
            .as_ref()
            .expect("backward without cached forward");
        let (n, ch, h, w) = (x.shape()[0], x.shape()[1], x.shape()[2], x.shape()[3]);
        let (out_h, out_w) = (dy.shape()[2], dy.shape()[3]);
        let weight = self
            .weight
            .value
            .view()
            .into_dimensionality::<ndarray::Ix3>()
            .expect("depthwise weight is (ch, 3, 3)");

        let partials: Vec<(Array3<f64>, Option<Array3<f64>>)> = (0..n)
            .into_par_iter()
            .map(|i| {
                let x_n = x.index_axis(Axis(0), i);
                let dy_n = dy.index_axis(Axis(0), i);
                let mut dw = Array3::zeros((ch, 3, 3));
                let mut dx = need_dx.then(|| Array3::zeros((ch, h, w)));
                for c in 0..ch {
                    let plane = x_n.index_axis(Axis(0), c);
                    let kernel = weight.index_axis(Axis(0), c);
                    for oh in 0..out_h {
                        for ow in 0..out_w {
                            let g = dy_n[[c, oh, ow]];
                            if g == 0.0 {
                                continue;
                            }
                            for ki in 0..3 {
                                let ih = (oh * self.stride + ki) as isize - 1;
                                if ih < 0 || ih >= h as isize {
                                    continue;
                                }
                                for kj in 0..3 {
                                    let iw = (ow * self.stride + kj) as isize - 1;
                                    if iw < 0 || iw >= w as isize {
                                        continue;
                                    }
                                    dw[[c, ki, kj]] += g * plane[[ih as usize, iw as usize]];
                                    if let Some(dx) = dx.as_mut() {
                                        dx[[c, ih as usize, iw as usize]] +=
                                            g * kernel[[ki, kj]];
                                    }
                                }
                            }
                        }
                    }
                }
                (dw, dx)
            })
            .collect();

        let mut dw_total = Array3::<f64>::zeros((ch, 3, 3));
        for (dw_n, _) in &partials {
            dw_total += dw_n;
        }
        let mut grad = self
            .weight
            .grad
            .view_mut()
            .into_dimensionality::<ndarray::Ix3>()
            .expect("depthwise grad is (ch, 3, 3)");
        grad += &dw_total;

        need_dx.then(|| {
            let mut dx = Array4::zeros((n, ch, h, w));
            for (i, (_, dx_n)) in partials.into_iter().enumerate() {
                dx.index_axis_mut(Axis(0), i)
                    .assign(&dx_n.expect("dx requested"));
            }
            dx
        })
    }

    pub fn clear_cache(&mut self) {
        self.cached_input = None;
    }
}

/// Per-channel batch normalization over (N, H, W).
///
/// A frozen layer runs in inference form: running statistics are used and
/// never updated, matching the usual transfer-learning freeze semantics.
#[derive(Debug, Clone)]
pub struct BatchNorm2d {
    pub gamma: Param,
    pub beta: Param,
    pub running_mean: Array1<f64>,
    pub running_var: Array1<f64>,
    pub eps: f64,
    /// Running-statistics keep rate.
    pub momentum: f64,
    cached_norm: Option<Array4<f64>>,
    cached_inv_std: Option<Array1<f64>>,
}

impl BatchNorm2d {
    pub fn new(name: &str, channels: usize) -> Self {
        BatchNorm2d {
            gamma: Param::new(format!("{name}.gamma"), ndarray::ArrayD::ones(vec![channels])),
            beta: Param::new(format!("{name}.beta"), ndarray::ArrayD::zeros(vec![channels])),
            running_mean: Array1::zeros(channels),
            running_var: Array1::ones(channels),
            eps: 1e-5,
            momentum: 0.9,
            cached_norm: None,
            cached_inv_std: None,
        }
    }

    pub fn forward(&mut self, x: &Array4<f64>, ctx: LayerCtx) -> Array4<f64> {
        let ch = x.shape()[1];
        let gamma = self
            .gamma
            .value
            .view()
            .into_dimensionality::<ndarray::Ix1>()
            .expect("gamma is 1-D");
        let beta = self
            .beta
            .value
            .view()
            .into_dimensionality::<ndarray::Ix1>()
            .expect("beta is 1-D");

        let (mean, var) = if ctx.train {
            let m = (x.len() / ch) as f64;
            let mut mean = Array1::zeros(ch);
            let mut var = Array1::zeros(ch);
            for c in 0..ch {
                let plane = x.slice(s![.., c, .., ..]);
                let mu = plane.sum() / m;
                mean[c] = mu;
                var[c] = plane.fold(0.0, |acc, &v| acc + (v - mu) * (v - mu)) / m;
            }
            if ctx.update_running {
                for c in 0..ch {
                    self.running_mean[c] =
                        self.momentum * self.running_mean[c] + (1.0 - self.momentum) * mean[c];
                    self.running_var[c] =
                        self.momentum * self.running_var[c] + (1.0 - self.momentum) * var[c];
                }
            }
            (mean, var)
        } else {
            (self.running_mean.clone(), self.running_var.clone())
        };

        let inv_std = var.mapv(|v| 1.0 / (v + self.eps).sqrt());
        if ctx.cache {
            // x̂ = (x − μ)·inv_std kept for backward, then y = γ·x̂ + β.
            let mut norm = x.clone();
            for c in 0..ch {
                let (mu, is) = (mean[c], inv_std[c]);
                norm.slice_mut(s![.., c, .., ..]).mapv_inplace(|v| (v - mu) * is);
            }
            let mut y = norm.clone();
            for c in 0..ch {
                let (g, b) = (gamma[c], beta[c]);
                y.slice_mut(s![.., c, .., ..]).mapv_inplace(|v| v * g + b);
            }
            self.cached_norm = Some(norm);
            self.cached_inv_std = Some(inv_std);
            y
        } else {
            let mut y = x.clone();
            for c in 0..ch {
                let (mu, is, g, b) = (mean[c], inv_std[c], gamma[c], beta[c]);
                y.slice_mut(s![.., c, .., ..])
                    .mapv_inplace(|v| (v - mu) * is * g + b);
            }
            y
        }
    }

    /// Train-mode backward (batch statistics). Frozen layers never reach
    /// here because backpropagation stops above them.
    pub fn backward(&mut self, dy: &Array4<f64>, need_dx: bool) -> Option<Array4<f64>> {
        let norm = self
            .cached_norm
            .as_ref()
            .expect("backward without cached forward");
        let inv_std = self
            .cached_inv_std
            .as_ref()
            .expect("backward without cached forward");
        let ch = dy.shape()[1];
        let m = (dy.len() / ch) as f64;
        let gamma = self
            .gamma
            .value
            .view()
            .into_dimensionality::<ndarray::Ix1>()
            .expect("gamma is 1-D");

        let mut dgamma = Array1::zeros(ch);
        let mut dbeta = Array1::zeros(ch);
        for c in 0..ch {
            let dy_c = dy.slice(s![.., c, .., ..]);
            let n_c = norm.slice(s![.., c, .., ..]);
            dbeta[c] = dy_c.sum();
            dgamma[c] = (&dy_c * &n_c).sum();
        }
        {
            let mut g = self
                .gamma
                .grad
                .view_mut()
                .into_dimensionality::<ndarray::Ix1>()
                .expect("gamma grad is 1-D");
            g += &dgamma;
            let mut b = self
                .beta
                .grad
                .view_mut()
                .into_dimensionality::<ndarray::Ix1>()
                .expect("beta grad is 1-D");
            b += &dbeta;
        }

        need_dx.then(|| {
            let mut dx = dy.clone();
            for c in 0..ch {
                let scale = gamma[c] * inv_std[c] / m;
                let sum_dy = dbeta[c];
                let sum_dy_norm = dgamma[c];
                let n_c = norm.slice(s![.., c, .., ..]).to_owned();
                let mut dx_c = dx.slice_mut(s![.., c, .., ..]);
                ndarray::Zip::from(&mut dx_c).and(&n_c).for_each(|d, &nv| {
                    *d = scale * (m * *d - sum_dy - nv * sum_dy_norm);
                });
            }
            dx
        })
    }

    pub fn clear_cache(&mut self) {
        self.cached_norm = None;
        self.cached_inv_std = None;
    }
}

/// In-place ReLU; returns the activation for cache-free use.
pub fn relu(x: &mut Array4<f64>) {
    x.mapv_inplace(|v| v.max(0.0));
}

/// ReLU backward from the cached output: gradient passes where output > 0.
pub fn relu_backward(dy: &mut Array4<f64>, y: &Array4<f64>) {
    ndarray::Zip::from(dy).and(y).for_each(|d, &yv| {
        if yv <= 0.0 {
            *d = 0.0;
        }
    });
}

/// Spatial mean: (N, C, H, W) → (N, C).
#[derive(Debug, Clone, Default)]
pub struct GlobalAvgPool {
    cached_hw: Option<(usize, usize)>,
}

impl GlobalAvgPool {
    pub fn forward(&mut self, x: &Array4<f64>, ctx: LayerCtx) -> Array2<f64> {
        if ctx.cache {
            self.cached_hw = Some((x.shape()[2], x.shape()[3]));
        }
        let m = (x.shape()[2] * x.shape()[3]) as f64;
        x.sum_axis(Axis(3)).sum_axis(Axis(2)) / m
    }

    pub fn backward(&self, dy: &Array2<f64>) -> Array4<f64> {
        let (h, w) = self.cached_hw.expect("backward without cached forward");
        let (n, c) = (dy.shape()[0], dy.shape()[1]);
        let mut dx = Array4::zeros((n, c, h, w));
        let scale = 1.0 / (h * w) as f64;
        for i in 0..n {
            for j in 0..c {
                dx.slice_mut(s![i, j, .., ..]).fill(dy[[i, j]] * scale);
            }
        }
        dx
    }
}

/// Dense layer with bias: y = xW + b.
#[derive(Debug, Clone)]
pub struct Linear {
    pub weight: Param, // (in, out)
    pub bias: Param,   // (out)
    cached_input: Option<Array2<f64>>,
}

impl Linear {
    pub fn new(name: &str, rng: &mut ChaCha8Rng, in_dim: usize, out_dim: usize) -> Self {
        Linear {
            weight: Param::new(
                format!("{name}.weight"),
                he_uniform(rng, in_dim, &[in_dim, out_dim]),
            ),
            bias: Param::new(format!("{name}.bias"), ndarray::ArrayD::zeros(vec![out_dim])),
            cached_input: None,
        }
    }

    pub fn forward(&mut self, x: &Array2<f64>, ctx: LayerCtx) -> Array2<f64> {
        let w = self
            .weight
            .value
            .view()
            .into_dimensionality::<ndarray::Ix2>()
            .expect("weight is 2-D");
        let b = self
            .bias
            .value
            .view()
            .into_dimensionality::<ndarray::Ix1>()
            .expect("bias is 1-D");
        if ctx.cache {
            self.cached_input = Some(x.clone());
        }
        x.dot(&w) + b
    }

    pub fn backward(&mut self, dy: &Array2<f64>, need_dx: bool) -> Option<Array2<f64>> {
        let x = self
            .cached_input
            .as_ref()
            .expect("backward without cached forward");
        let w = self
            .weight
            .value
            .view()
            .into_dimensionality::<ndarray::Ix2>()
            .expect("weight is 2-D");
        {
            let mut wg = self
                .weight
                .grad
                .view_mut()
                .into_dimensionality::<ndarray::Ix2>()
                .expect("weight grad is 2-D");
            wg += &x.t().dot(dy);
            let mut bg = self
                .bias
                .grad
                .view_mut()
                .into_dimensionality::<ndarray::Ix1>()
                .expect("bias grad is 1-D");
            bg += &dy.sum_axis(Axis(0));
        }
        need_dx.then(|| dy.dot(&w.t()))
    }

    pub fn clear_cache(&mut self) {
        self.cached_input = None;
    }
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    // Finite-difference oracles: each layer's analytic gradients are checked
    // against central differences on a scalar probe loss L = Σ y ⊙ R.

    fn probe(rng: &mut ChaCha8Rng, shape: (usize, usize, usize, usize)) -> Array4<f64> {
        Array4::from_shape_fn(shape, |_| rng.gen_range(-1.0..1.0))
    }

    fn fd_check<F>(values: &mut [f64], analytic: &[f64], mut loss_at: F, tol: f64)
    where
        F: FnMut(&[f64]) -> f64,
    {
        let h = 1e-6;
        for i in 0..values.len() {
            let orig = values[i];
            values[i] = orig + h;
            let lp = loss_at(values);
            values[i] = orig - h;
            let lm = loss_at(values);
            values[i] = orig;
            let fd = (lp - lm) / (2.0 * h);
            let denom = analytic[i].abs().max(fd.abs()).max(1e-8);
            assert!(
                (analytic[i] - fd).abs() / denom < tol,
                "index {i}: analytic {} vs fd {fd}",
                analytic[i]
            );
        }
    }

    #[test]
    fn conv2d_gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for &(stride, k, pad) in &[(1usize, 3usize, 1usize), (2, 3, 1), (1, 1, 0)] {
            let mut conv = Conv2d::new("c", &mut rng, 3, 4, k, stride, pad);
            let x = probe(&mut rng, (2, 3, 6, 6));
            let r = probe(
                &mut rng,
                {
                    let o = conv_out_size(6, k, stride, pad);
                    (2, 4, o, o)
                },
            );
            let y = conv.forward(&x, LayerCtx::training());
            assert_eq!(y.shape()[2], conv_out_size(6, k, stride, pad));

            conv.weight.zero_grad();
            let dx = conv.backward(&r, true).unwrap();

            // Weight gradient.
            let analytic: Vec<f64> = conv.weight.grad.iter().copied().collect();
            let mut values: Vec<f64> = conv.weight.value.iter().copied().collect();
            let x_c = x.clone();
            let r_c = r.clone();
            let mut conv_probe = conv.clone();
            fd_check(
                &mut values,
                &analytic,
                |vals| {
                    conv_probe
                        .weight
                        .value
                        .iter_mut()
                        .zip(vals.iter())
                        .for_each(|(v, &nv)| *v = nv);
                    let y = conv_probe.forward(&x_c, LayerCtx::INFERENCE);
                    (&y * &r_c).sum()
                },
                1e-5,
            );

            // Input gradient.
            let analytic_dx: Vec<f64> = dx.iter().copied().collect();
            let mut x_values: Vec<f64> = x.iter().copied().collect();
            let mut conv_probe = conv.clone();
            let shape = (2, 3, 6, 6);
            fd_check(
                &mut x_values,
                &analytic_dx,
                |vals| {
                    let x_p = Array4::from_shape_vec(shape, vals.to_vec()).unwrap();
                    let y = conv_probe.forward(&x_p, LayerCtx::INFERENCE);
                    (&y * &r_c).sum()
                },
                1e-5,
            );
        }
    }

    #[test]
    fn depthwise_gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for &stride in &[1usize, 2usize] {
            let mut conv = DepthwiseConv2d::new("d", &mut rng, 3, stride);
            let x = probe(&mut rng, (2, 3, 5, 5));
            let o = conv_out_size(5, 3, stride, 1);
            let r = probe(&mut rng, (2, 3, o, o));
            conv.forward(&x, LayerCtx::training());
            conv.weight.zero_grad();
            let dx = conv.backward(&r, true).unwrap();

            let analytic: Vec<f64> = conv.weight.grad.iter().copied().collect();
            let mut values: Vec<f64> = conv.weight.value.iter().copied().collect();
            let mut conv_probe = conv.clone();
            let (x_c, r_c) = (x.clone(), r.clone());
            fd_check(
                &mut values,
                &analytic,
                |vals| {
                    conv_probe
                        .weight
                        .value
                        .iter_mut()
                        .zip(vals.iter())
                        .for_each(|(v, &nv)| *v = nv);
                    let y = conv_probe.forward(&x_c, LayerCtx::INFERENCE);
                    (&y * &r_c).sum()
                },
                1e-5,
            );

            let analytic_dx: Vec<f64> = dx.iter().copied().collect();
            let mut x_values: Vec<f64> = x.iter().copied().collect();
            let mut conv_probe = conv.clone();
            fd_check(
                &mut x_values,
                &analytic_dx,
                |vals| {
                    let x_p = Array4::from_shape_vec((2, 3, 5, 5), vals.to_vec()).unwrap();
                    let y = conv_probe.forward(&x_p, LayerCtx::INFERENCE);
                    (&y * &r_c).sum()
                },
                1e-5,
            );
        }
    }

    #[test]
    fn batchnorm_gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut bn = BatchNorm2d::new("bn", 3);
        // Non-trivial affine parameters.
        bn.gamma.value.iter_mut().for_each(|v| *v = rng.gen_range(0.5..1.5));
        bn.beta.value.iter_mut().for_each(|v| *v = rng.gen_range(-0.5..0.5));
        let x = probe(&mut rng, (4, 3, 3, 3));
        let r = probe(&mut rng, (4, 3, 3, 3));

        bn.forward(&x, LayerCtx::training());
        bn.gamma.zero_grad();
        bn.beta.zero_grad();
        let dx = bn.backward(&r, true).unwrap();

        // dx against finite differences (train mode, no stat updates).
        let analytic_dx: Vec<f64> = dx.iter().copied().collect();
        let mut x_values: Vec<f64> = x.iter().copied().collect();
        let mut bn_probe = bn.clone();
        let r_c = r.clone();
        fd_check(
            &mut x_values,
            &analytic_dx,
            |vals| {
                let x_p = Array4::from_shape_vec((4, 3, 3, 3), vals.to_vec()).unwrap();
                let y = bn_probe.forward(&x_p, LayerCtx::loss_probe());
                (&y * &r_c).sum()
            },
            1e-4,
        );

        // gamma/beta against finite differences.
        let analytic_g: Vec<f64> = bn.gamma.grad.iter().copied().collect();
        let mut g_values: Vec<f64> = bn.gamma.value.iter().copied().collect();
        let mut bn_probe = bn.clone();
        let x_c = x.clone();
        fd_check(
            &mut g_values,
            &analytic_g,
            |vals| {
                bn_probe
                    .gamma
                    .value
                    .iter_mut()
                    .zip(vals.iter())
                    .for_each(|(v, &nv)| *v = nv);
                let y = bn_probe.forward(&x_c, LayerCtx::loss_probe());
                (&y * &r_c).sum()
            },
            1e-5,
        );
    }

    #[test]
    fn batchnorm_inference_uses_running_stats() {
        let mut bn = BatchNorm2d::new("bn", 2);
        bn.running_mean = ndarray::arr1(&[1.0, -1.0]);
        bn.running_var = ndarray::arr1(&[4.0, 0.25]);
        let x = Array4::from_elem((1, 2, 1, 1), 1.0);
        let y = bn.forward(&x, LayerCtx::INFERENCE);
        assert!((y[[0, 0, 0, 0]] - 0.0).abs() < 1e-9);
        assert!((y[[0, 1, 0, 0]] - 2.0 / 0.5).abs() < 1e-3); // eps skews slightly
        // Running stats untouched by inference.
        assert_eq!(bn.running_mean[0], 1.0);
    }

    #[test]
    fn linear_gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut lin = Linear::new("fc", &mut rng, 5, 3);
        let x = Array2::from_shape_fn((4, 5), |_| rng.gen_range(-1.0..1.0));
        let r = Array2::from_shape_fn((4, 3), |_| rng.gen_range(-1.0..1.0));
        lin.forward(&x, LayerCtx::training());
        lin.weight.zero_grad();
        lin.bias.zero_grad();
        let dx = lin.backward(&r, true).unwrap();

        let analytic: Vec<f64> = lin
            .weight
            .grad
            .iter()
            .chain(lin.bias.grad.iter())
            .copied()
            .collect();
        let mut values: Vec<f64> = lin
            .weight
            .value
            .iter()
            .chain(lin.bias.value.iter())
            .copied()
            .collect();
        let mut lin_probe = lin.clone();
        let (x_c, r_c) = (x.clone(), r.clone());
        let n_w = lin.weight.value.len();
        fd_check(
            &mut values,
            &analytic,
            |vals| {
                lin_probe
                    .weight
                    .value
                    .iter_mut()
                    .zip(vals[..n_w].iter())
                    .for_each(|(v, &nv)| *v = nv);
                lin_probe
                    .bias
                    .value
                    .iter_mut()
                    .zip(vals[n_w..].iter())
                    .for_each(|(v, &nv)| *v = nv);
                let y = lin_probe.forward(&x_c, LayerCtx::INFERENCE);
                (&y * &r_c).sum()
            },
            1e-6,
        );

        // dx = dy Wᵀ exactly.
        let w = lin
            .weight
            .value
            .view()
            .into_dimensionality::<ndarray::Ix2>()
            .unwrap();
        let expected = r.dot(&w.t());
        assert!(dx.iter().zip(expected.iter()).all(|(a, b)| (a - b).abs() < 1e-12));
    }

    #[test]
    fn pool_averages_and_backpropagates() {
        let mut pool = GlobalAvgPool::default();
        let x = Array4::from_shape_fn((1, 2, 2, 2), |(_, c, h, w)| (c * 4 + h * 2 + w) as f64);
        let y = pool.forward(&x, LayerCtx::training());
        assert!((y[[0, 0]] - 1.5).abs() < 1e-12);
        assert!((y[[0, 1]] - 5.5).abs() < 1e-12);
        let dy = Array2::from_elem((1, 2), 1.0);
        let dx = pool.backward(&dy);
        assert!(dx.iter().all(|&v| (v - 0.25).abs() < 1e-12));
    }

    #[test]
    fn relu_masks_gradient() {
        let mut x = Array4::from_shape_vec((1, 1, 1, 4), vec![-1.0, 0.0, 0.5, 2.0]).unwrap();
        relu(&mut x);
        assert_eq!(x.as_slice().unwrap(), &[0.0, 0.0, 0.5, 2.0]);
        let mut dy = Array4::from_elem((1, 1, 1, 4), 1.0);
        relu_backward(&mut dy, &x);
        assert_eq!(dy.as_slice().unwrap(), &[0.0, 0.0, 1.0, 1.0]);
    }

    #[test]
    fn sigmoid_is_stable_at_extremes() {
        assert!((sigmoid(0.0) - 0.5).abs() < 1e-15);
        assert!(sigmoid(-800.0) >= 0.0);
        assert!(sigmoid(800.0) <= 1.0);
        assert!((sigmoid(800.0) - 1.0).abs() < 1e-12);
    }
}
