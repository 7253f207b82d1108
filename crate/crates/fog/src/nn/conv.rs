//! Small strided convolution stack for pixel observations.
//!
//! Kernels are stored as `[in_c * k * k, out_c]` matrices so the forward
//! pass is one im2col plus one matrix product per layer, and the optimizer
//! sees the same `DenseParams` shape as fully connected layers.

use ndarray::{Array2, Array4};
use rand_chacha::ChaCha8Rng;

use super::{matmul, softsign, softsign_deriv_from_output, DenseParams, Real};

#[derive(Clone, Debug, serde::Serialize, serde::Deserialize)]
pub struct ConvLayer<F> {
    pub params: DenseParams<F>,
    pub in_c: usize,
    pub out_c: usize,
    pub k: usize,
    pub stride: usize,
    pub in_h: usize,
    pub in_w: usize,
}

impl<F: Real> ConvLayer<F> {
    pub fn new(
        in_c: usize,
        in_h: usize,
        in_w: usize,
        out_c: usize,
        k: usize,
        stride: usize,
        rng: &mut ChaCha8Rng,
    ) -> Self {
        assert!(in_h >= k && in_w >= k);
        let params = DenseParams::init(in_c * k * k, out_c, rng);
        ConvLayer {
            params,
            in_c,
            out_c,
            k,
            stride,
            in_h,
            in_w,
        }
    }

    pub fn out_h(&self) -> usize {
        (self.in_h - self.k) / self.stride + 1
    }

    pub fn out_w(&self) -> usize {
        (self.in_w - self.k) / self.stride + 1
    }

    fn im2col(&self, x: &Array4<F>) -> Array2<F> {
        let (b, oh, ow) = (x.shape()[0], self.out_h(), self.out_w());
        let mut col = Array2::<F>::zeros((b * oh * ow, self.in_c * self.k * self.k));
        for bi in 0..b {
            for oy in 0..oh {
                for ox in 0..ow {
                    let row = (bi * oh + oy) * ow + ox;
                    let (y0, x0) = (oy * self.stride, ox * self.stride);
                    let mut ci = 0;
                    for c in 0..self.in_c {
                        for ky in 0..self.k {
                            for kx in 0..self.k {
                                col[[row, ci]] = x[[bi, c, y0 + ky, x0 + kx]];
                                ci += 1;
                            }
                        }
                    }
                }
            }
        }
        col
    }

    fn col2im(&self, dcol: &Array2<F>, batch: usize) -> Array4<F> {
        let (oh, ow) = (self.out_h(), self.out_w());
        let mut dx = Array4::<F>::zeros((batch, self.in_c, self.in_h, self.in_w));
        for bi in 0..batch {
            for oy in 0..oh {
                for ox in 0..ow {
                    let row = (bi * oh + oy) * ow + ox;
                    let (y0, x0) = (oy * self.stride, ox * self.stride);
                    let mut ci = 0;
                    for c in 0..self.in_c {
                        for ky in 0..self.k {
                            for kx in 0..self.k {
                                dx[[bi, c, y0 + ky, x0 + kx]] =
                                    dx[[bi, c, y0 + ky, x0 + kx]] + dcol[[row, ci]];
                                ci += 1;
                            }
                        }
                    }
                }
            }
        }
        dx
    }

    /// Returns `(col, h)` where `h` is the tanh-activated output.
    fn forward_parts(&self, x: &Array4<F>) -> (Array2<F>, Array4<F>) {
        let b = x.shape()[0];
        let (oh, ow) = (self.out_h(), self.out_w());
        let col = self.im2col(x);
        let mut z = matmul(&col.view(), &self.params.w.view());
        z += &self.params.b;
        z.mapv_inplace(softsign);
        let h = z
            .into_shape_with_order((b, oh, ow, self.out_c))
            .expect("conv output shape")
            .permuted_axes([0, 3, 1, 2])
            .as_standard_layout()
            .to_owned();
        (col, h)
    }

    fn backward(
        &self,
        col: &Array2<F>,
        h: &Array4<F>,
        d_h: &Array4<F>,
        batch: usize,
    ) -> (DenseParams<F>, Array4<F>) {
        let (oh, ow) = (self.out_h(), self.out_w());
        // dz scales d_h by the activation derivative, rows matching `col`.
        let mut dz = Array2::<F>::zeros((batch * oh * ow, self.out_c));
        for bi in 0..batch {
            for c in 0..self.out_c {
                for oy in 0..oh {
                    for ox in 0..ow {
                        let row = (bi * oh + oy) * ow + ox;
                        let hv = h[[bi, c, oy, ox]];
                        dz[[row, c]] = d_h[[bi, c, oy, ox]] * softsign_deriv_from_output(hv);
                    }
                }
            }
        }
        let grad = DenseParams {
            w: matmul(&col.t(), &dz.view()),
            b: dz.sum_axis(ndarray::Axis(0)),
        };
        let dcol = matmul(&dz.view(), &self.params.w.t());
        let dx = self.col2im(&dcol, batch);
        (grad, dx)
    }
}

/// Fixed stack of softsign-activated strided convolutions, flattened at the end.
#[derive(Clone, Debug, serde::Serialize, serde::Deserialize)]
pub struct ConvStack<F> {
    layers: Vec<ConvLayer<F>>,
}

pub struct ConvTape<F> {
    /// Input plus each layer's activated output.
    feats: Vec<Array4<F>>,
    cols: Vec<Array2<F>>,
}

impl<F: Real> ConvStack<F> {
    /// Three-layer encoder for 64x64x3 frames: kernel 4, stride 2 per layer.
    pub fn encoder_64(rng: &mut ChaCha8Rng) -> Self {
        let l0 = ConvLayer::new(3, 64, 64, 16, 4, 2, rng);
        let l1 = ConvLayer::new(16, l0.out_h(), l0.out_w(), 32, 4, 2, rng);
        let l2 = ConvLayer::new(32, l1.out_h(), l1.out_w(), 32, 4, 2, rng);
        ConvStack {
            layers: vec![l0, l1, l2],
        }
    }

    /// Tiny stack for numeric tests.
    pub fn small(in_c: usize, in_hw: usize, rng: &mut ChaCha8Rng) -> Self {
        let l0 = ConvLayer::new(in_c, in_hw, in_hw, 2, 3, 2, rng);
        ConvStack { layers: vec![l0] }
    }

    pub fn layers(&self) -> &[ConvLayer<F>] {
        &self.layers
    }

    pub fn in_shape(&self) -> (usize, usize, usize) {
        let l = &self.layers[0];
        (l.in_c, l.in_h, l.in_w)
    }

    pub fn out_dim(&self) -> usize {
        let l = self.layers.last().expect("nonempty");
        l.out_c * l.out_h() * l.out_w()
    }

    pub fn params(&self) -> Vec<&DenseParams<F>> {
        self.layers.iter().map(|l| &l.params).collect()
    }

    pub fn params_mut(&mut self) -> Vec<&mut DenseParams<F>> {
        self.layers.iter_mut().map(|l| &mut l.params).collect()
    }

    pub fn is_finite(&self) -> bool {
        self.layers.iter().all(|l| l.params.is_finite())
    }

    /// Forward to the flattened feature matrix `[batch, out_dim]`.
    pub fn forward(&self, x: &Array4<F>) -> Array2<F> {
        let (out, _) = self.forward_tape(x);
        out
    }

    pub fn forward_tape(&self, x: &Array4<F>) -> (Array2<F>, ConvTape<F>) {
        let batch = x.shape()[0];
        let mut feats = vec![x.clone()];
        let mut cols = Vec::with_capacity(self.layers.len());
        for layer in &self.layers {
            let (col, h) = layer.forward_parts(feats.last().expect("nonempty"));
            cols.push(col);
            feats.push(h);
        }
        let last = feats.last().expect("nonempty");
        let flat = last
            .to_shape((batch, self.out_dim()))
            .expect("flatten conv output")
            .to_owned();
        (flat, ConvTape { feats, cols })
    }

    /// Backprop from the flattened feature gradient; returns per-layer
    /// parameter gradients (same order as `params`).
    pub fn backward(&self, tape: &ConvTape<F>, d_flat: &Array2<F>) -> Vec<DenseParams<F>> {
        let batch = tape.feats[0].shape()[0];
        let last = self.layers.last().expect("nonempty");
        let mut d_h = d_flat
            .to_shape((batch, last.out_c, last.out_h(), last.out_w()))
            .expect("unflatten gradient")
            .to_owned();
        let mut grads = vec![];
        for (l, layer) in self.layers.iter().enumerate().rev() {
            let (g, dx) = layer.backward(&tape.cols[l], &tape.feats[l + 1], &d_h, batch);
            grads.push(g);
            d_h = dx;
        }
        grads.reverse();
        grads
    }
}
