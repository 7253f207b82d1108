//! Dense network substrate with hand-written backward passes.
//!
//! Runs must be bit-reproducible for a fixed seed and the gradient path
//! must stay auditable against finite differences, so the math lives in the
//! crate instead of behind an autograd framework. Matrix products go through
//! `ndarray`, everything else is explicit.
//!
//! Networks are generic over the element type: production training uses
//! `f32` for speed, numerical tests instantiate the same code at `f64`.

mod conv;

pub use conv::{ConvLayer, ConvStack, ConvTape};

use ndarray::linalg::general_mat_mul;
use ndarray::{Array1, Array2, ArrayView2};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// Element type of network math; implemented for `f32` and `f64`.
pub trait Real: ndarray::NdFloat {}
impl Real for f32 {}
impl Real for f64 {}

/// Lossy numeric cast used for configuration constants.
#[inline]
pub fn cast<F: Real>(x: f64) -> F {
    F::from(x).expect("finite cast")
}

/// Widen an element back to `f64` for logging and diagnostics.
#[inline]
pub fn to_f64<F: Real>(x: F) -> f64 {
    num_traits::ToPrimitive::to_f64(&x).expect("float widens")
}

/// Hidden-layer activation: `x / (1 + |x|)`. Smooth, saturating, and far
/// cheaper than `tanh` on this workload's hot path.
#[inline]
pub fn softsign<F: Real>(x: F) -> F {
    x / (F::one() + x.abs())
}

/// Derivative of [`softsign`] expressed through its output `h`:
/// `(1 - |h|)^2`.
#[inline]
pub fn softsign_deriv_from_output<F: Real>(h: F) -> F {
    let g = F::one() - h.abs();
    g * g
}

/// `lhs @ rhs` into a freshly allocated row-major array. `dot` may pick the
/// output layout from its inputs; training code needs contiguous row-major
/// tensors everywhere.
pub fn matmul<F: Real>(lhs: &ArrayView2<F>, rhs: &ArrayView2<F>) -> Array2<F> {
    let mut out = Array2::zeros((lhs.nrows(), rhs.ncols()));
    general_mat_mul(F::one(), lhs, rhs, F::zero(), &mut out);
    out
}

/// One weight matrix (`[in, out]`) with its bias; also the shape in which
/// gradients and optimizer moments are carried.
#[derive(Clone, Debug, serde::Serialize, serde::Deserialize)]
pub struct DenseParams<F> {
    pub w: Array2<F>,
    pub b: Array1<F>,
}

impl<F: Real> DenseParams<F> {
    pub fn zeros_like(other: &DenseParams<F>) -> Self {
        DenseParams {
            w: Array2::zeros(other.w.raw_dim()),
            b: Array1::zeros(other.b.raw_dim()),
        }
    }

    /// Xavier-uniform weights, zero bias.
    pub fn init(fan_in: usize, fan_out: usize, rng: &mut ChaCha8Rng) -> Self {
        let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
        let w = Array2::from_shape_fn((fan_in, fan_out), |_| {
            cast::<F>(rng.random_range(-limit..limit))
        });
        DenseParams {
            w,
            b: Array1::zeros(fan_out),
        }
    }

    pub fn param_count(&self) -> usize {
        self.w.len() + self.b.len()
    }

    pub fn is_finite(&self) -> bool {
        self.w.iter().all(|x| x.is_finite()) && self.b.iter().all(|x| x.is_finite())
    }
}

/// Multi-layer perceptron with softsign hidden activations and a linear
/// head.
#[derive(Clone, Debug, serde::Serialize, serde::Deserialize)]
pub struct Mlp<F> {
    layers: Vec<DenseParams<F>>,
}

/// Per-layer inputs captured during a forward pass; `acts[l]` is the input
/// to layer `l`, `acts[len]` is the network output.
pub struct MlpTape<F> {
    acts: Vec<Array2<F>>,
}

impl<F> MlpTape<F> {
    pub fn output(&self) -> &Array2<F> {
        self.acts.last().expect("tape holds at least the input")
    }
}

impl<F: Real> Mlp<F> {
    /// `dims` lists layer widths input-first, e.g. `[4, 256, 256, 2]`.
    pub fn new(dims: &[usize], rng: &mut ChaCha8Rng) -> Self {
        assert!(dims.len() >= 2, "mlp needs at least input and output dims");
        let layers = dims
            .windows(2)
            .map(|io| DenseParams::init(io[0], io[1], rng))
            .collect();
        Mlp { layers }
    }

    pub fn layers(&self) -> &[DenseParams<F>] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [DenseParams<F>] {
        &mut self.layers
    }

    pub fn in_dim(&self) -> usize {
        self.layers[0].w.nrows()
    }

    pub fn out_dim(&self) -> usize {
        self.layers.last().expect("nonempty").w.ncols()
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.param_count()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.layers.iter().all(|l| l.is_finite())
    }

    /// Batched forward pass; rows of `x` are samples.
    pub fn forward(&self, x: &Array2<F>) -> Array2<F> {
        let last = self.layers.len() - 1;
        let mut h = matmul(&x.view(), &self.layers[0].w.view());
        h += &self.layers[0].b;
        if last > 0 {
            h.mapv_inplace(softsign);
        }
        for (l, layer) in self.layers.iter().enumerate().skip(1) {
            let mut z = matmul(&h.view(), &layer.w.view());
            z += &layer.b;
            if l < last {
                z.mapv_inplace(softsign);
            }
            h = z;
        }
        h
    }

    /// Forward pass that records the per-layer inputs needed by `backward`.
    pub fn forward_tape(&self, x: &Array2<F>) -> MlpTape<F> {
        let mut acts = Vec::with_capacity(self.layers.len() + 1);
        acts.push(x.clone());
        let last = self.layers.len() - 1;
        for (l, layer) in self.layers.iter().enumerate() {
            let mut z = matmul(&acts[l].view(), &layer.w.view());
            z += &layer.b;
            if l < last {
                z.mapv_inplace(softsign);
            }
            acts.push(z);
        }
        MlpTape { acts }
    }

    /// Backpropagate `d_out` (gradient of the loss wrt the output) through
    /// the tape. Returns per-layer parameter gradients and the gradient wrt
    /// the network input.
    pub fn backward(&self, tape: &MlpTape<F>, d_out: &Array2<F>) -> (Vec<DenseParams<F>>, Array2<F>) {
        let n_layers = self.layers.len();
        let mut grads: Vec<DenseParams<F>> = (0..n_layers)
            .map(|l| DenseParams::zeros_like(&self.layers[l]))
            .collect();
        let mut delta = d_out.clone();
        for l in (0..n_layers).rev() {
            let input = &tape.acts[l];
            grads[l].w = matmul(&input.t(), &delta.view());
            grads[l].b = delta.sum_axis(ndarray::Axis(0));
            let mut d_input = matmul(&delta.view(), &self.layers[l].w.t());
            if l > 0 {
                // Input of layer l is the softsign output of layer l-1.
                ndarray::Zip::from(&mut d_input)
                    .and(input)
                    .for_each(|d, &h| *d = *d * softsign_deriv_from_output(h));
            }
            delta = d_input;
        }
        (grads, delta)
    }
}

#[derive(Clone, Copy, Debug, serde::Serialize, serde::Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamConfig {
    pub fn with_lr(lr: f64) -> Self {
        AdamConfig {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Adam over a list of dense parameter tensors.
#[derive(Clone, Debug, serde::Serialize, serde::Deserialize)]
pub struct Adam<F> {
    pub cfg: AdamConfig,
    pub t: u64,
    pub m: Vec<DenseParams<F>>,
    pub v: Vec<DenseParams<F>>,
}

impl<F: Real> Adam<F> {
    pub fn new(cfg: AdamConfig, params: &[DenseParams<F>]) -> Self {
        Adam {
            cfg,
            t: 0,
            m: params.iter().map(DenseParams::zeros_like).collect(),
            v: params.iter().map(DenseParams::zeros_like).collect(),
        }
    }

    pub fn new_refs(cfg: AdamConfig, params: &[&DenseParams<F>]) -> Self {
        Adam {
            cfg,
            t: 0,
            m: params.iter().map(|p| DenseParams::zeros_like(p)).collect(),
            v: params.iter().map(|p| DenseParams::zeros_like(p)).collect(),
        }
    }

    pub fn step(&mut self, params: &mut [DenseParams<F>], grads: &[DenseParams<F>]) {
        let mut param_refs: Vec<&mut DenseParams<F>> = params.iter_mut().collect();
        let grad_refs: Vec<&DenseParams<F>> = grads.iter().collect();
        self.step_refs(&mut param_refs, &grad_refs);
    }

    /// Like `step`, for parameter tensors that live in separate containers.
    pub fn step_refs(&mut self, params: &mut [&mut DenseParams<F>], grads: &[&DenseParams<F>]) {
        assert_eq!(params.len(), grads.len());
        self.t += 1;
        let b1 = cast::<F>(self.cfg.beta1);
        let b2 = cast::<F>(self.cfg.beta2);
        let eps = cast::<F>(self.cfg.eps);
        let bc1 = 1.0 - self.cfg.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.cfg.beta2.powi(self.t as i32);
        let alpha = cast::<F>(self.cfg.lr * bc2.sqrt() / bc1);
        for i in 0..params.len() {
            Self::update_tensor(
                params[i].w.as_slice_mut().expect("contiguous"),
                grads[i].w.as_slice().expect("contiguous"),
                self.m[i].w.as_slice_mut().expect("contiguous"),
                self.v[i].w.as_slice_mut().expect("contiguous"),
                b1,
                b2,
                eps,
                alpha,
            );
            Self::update_tensor(
                params[i].b.as_slice_mut().expect("contiguous"),
                grads[i].b.as_slice().expect("contiguous"),
                self.m[i].b.as_slice_mut().expect("contiguous"),
                self.v[i].b.as_slice_mut().expect("contiguous"),
                b1,
                b2,
                eps,
                alpha,
            );
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn update_tensor(p: &mut [F], g: &[F], m: &mut [F], v: &mut [F], b1: F, b2: F, eps: F, alpha: F) {
        let one = F::one();
        for i in 0..p.len() {
            m[i] = b1 * m[i] + (one - b1) * g[i];
            v[i] = b2 * v[i] + (one - b2) * g[i] * g[i];
            p[i] = p[i] - alpha * m[i] / (v[i].sqrt() + eps);
        }
    }
}

/// Adam for a single scalar parameter (dual variables, temperature).
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ScalarAdam {
    pub lr: f64,
    pub t: u64,
    pub m: f64,
    pub v: f64,
}

impl ScalarAdam {
    pub fn new(lr: f64) -> Self {
        ScalarAdam {
            lr,
            t: 0,
            m: 0.0,
            v: 0.0,
        }
    }

    pub fn step(&mut self, param: &mut f64, grad: f64) {
        const B1: f64 = 0.9;
        const B2: f64 = 0.999;
        const EPS: f64 = 1e-8;
        self.t += 1;
        self.m = B1 * self.m + (1.0 - B1) * grad;
        self.v = B2 * self.v + (1.0 - B2) * grad * grad;
        let m_hat = self.m / (1.0 - B1.powi(self.t as i32));
        let v_hat = self.v / (1.0 - B2.powi(self.t as i32));
        *param -= self.lr * m_hat / (v_hat.sqrt() + EPS);
    }
}
