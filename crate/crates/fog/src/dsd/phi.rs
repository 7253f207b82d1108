//! The state representation network φ: S → R^D.
//!
//! Vector states go straight into a fully connected trunk; image states
//! pass through a small convolutional encoder first and share the same
//! trunk shape. The output dimension always equals the skill dimension.

use ndarray::{Array2, Array4};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::nn::{cast, to_f64, ConvStack, ConvTape, DenseParams, Mlp, MlpTape, Real};
use crate::types::State;

/// Hidden width of the fully connected trunk.
pub const HIDDEN_WIDTH: usize = 256;

#[derive(Clone, Debug, serde::Serialize, serde::Deserialize)]
pub struct PhiNet<F> {
    encoder: Option<ConvStack<F>>,
    head: Mlp<F>,
}

/// Activations recorded by [`PhiNet::forward_tape`] for backprop.
pub struct PhiTape<F> {
    conv: Option<ConvTape<F>>,
    head: MlpTape<F>,
}

impl<F: Real> PhiNet<F> {
    /// Net for vector states. `hidden` lists trunk widths; production runs
    /// use two hidden layers of [`HIDDEN_WIDTH`], tests often use none.
    pub fn vector(state_dim: usize, hidden: &[usize], skill_dim: usize, rng: &mut ChaCha8Rng) -> Self {
        let mut dims = Vec::with_capacity(hidden.len() + 2);
        dims.push(state_dim);
        dims.extend_from_slice(hidden);
        dims.push(skill_dim);
        PhiNet {
            encoder: None,
            head: Mlp::new(&dims, rng),
        }
    }

    /// Net for 64x64 RGB image states: conv encoder plus the standard trunk.
    pub fn image(skill_dim: usize, rng: &mut ChaCha8Rng) -> Self {
        let encoder = ConvStack::encoder_64(rng);
        let dims = [encoder.out_dim(), HIDDEN_WIDTH, HIDDEN_WIDTH, skill_dim];
        PhiNet {
            encoder: Some(encoder),
            head: Mlp::new(&dims, rng),
        }
    }

    pub fn out_dim(&self) -> usize {
        self.head.out_dim()
    }

    /// "vector" or "image", matching [`State::kind`].
    pub fn input_kind(&self) -> &'static str {
        if self.encoder.is_some() {
            "image"
        } else {
            "vector"
        }
    }

    pub fn head_mut(&mut self) -> &mut Mlp<F> {
        &mut self.head
    }

    /// All parameter tensors, encoder layers first, then the trunk. The
    /// gradient vectors returned by [`PhiNet::backward`] use the same order.
    pub fn params(&self) -> Vec<&DenseParams<F>> {
        let mut ps: Vec<&DenseParams<F>> = match &self.encoder {
            Some(enc) => enc.params(),
            None => Vec::new(),
        };
        ps.extend(self.head.layers().iter());
        ps
    }

    pub fn params_mut(&mut self) -> Vec<&mut DenseParams<F>> {
        let mut ps: Vec<&mut DenseParams<F>> = match &mut self.encoder {
            Some(enc) => enc.params_mut(),
            None => Vec::new(),
        };
        ps.extend(self.head.layers_mut().iter_mut());
        ps
    }

    pub fn param_count(&self) -> usize {
        self.params().iter().map(|p| p.param_count()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.params().iter().all(|p| p.is_finite())
    }

    /// Batched forward pass, one state per row of the output.
    pub fn forward(&self, states: &[&State]) -> Result<Array2<F>> {
        match &self.encoder {
            None => Ok(self.head.forward(&self.vector_batch(states)?)),
            Some(enc) => {
                let feats = enc.forward(&self.image_batch(states, enc)?);
                Ok(self.head.forward(&feats))
            }
        }
    }

    /// Forward pass that keeps the activations needed by [`PhiNet::backward`].
    pub fn forward_tape(&self, states: &[&State]) -> Result<(Array2<F>, PhiTape<F>)> {
        match &self.encoder {
            None => {
                let x = self.vector_batch(states)?;
                let head = self.head.forward_tape(&x);
                let out = head.output().clone();
                Ok((out, PhiTape { conv: None, head }))
            }
            Some(enc) => {
                let x = self.image_batch(states, enc)?;
                let (feats, conv) = enc.forward_tape(&x);
                let head = self.head.forward_tape(&feats);
                let out = head.output().clone();
                Ok((
                    out,
                    PhiTape {
                        conv: Some(conv),
                        head,
                    },
                ))
            }
        }
    }

    /// Backprop `d_out` through the tape; gradients come back in
    /// [`PhiNet::params`] order.
    pub fn backward(&self, tape: &PhiTape<F>, d_out: &Array2<F>) -> Vec<DenseParams<F>> {
        let (head_grads, d_feats) = self.head.backward(&tape.head, d_out);
        let mut grads = match (&self.encoder, &tape.conv) {
            (Some(enc), Some(conv)) => enc.backward(conv, &d_feats),
            _ => Vec::new(),
        };
        grads.extend(head_grads);
        grads
    }

    /// Single-state forward returning an f64 vector.
    pub fn forward_one(&self, s: &State) -> Result<Vec<f64>> {
        let out = self.forward(&[s])?;
        Ok(out.row(0).iter().map(|&v| to_f64(v)).collect())
    }

    fn vector_batch(&self, states: &[&State]) -> Result<Array2<F>> {
        let dim = self.head.in_dim();
        let mut x = Array2::zeros((states.len(), dim));
        for (r, s) in states.iter().enumerate() {
            let v = s.as_vector()?;
            if v.len() != dim {
                return Err(Error::invalid(format!(
                    "state dim {} does not match network input dim {dim}",
                    v.len()
                )));
            }
            for (c, &val) in v.iter().enumerate() {
                x[[r, c]] = cast(val);
            }
        }
        Ok(x)
    }

    fn image_batch(&self, states: &[&State], enc: &ConvStack<F>) -> Result<Array4<F>> {
        let (channels, height, width) = enc.in_shape();
        let mut x = Array4::zeros((states.len(), channels, height, width));
        for (b, s) in states.iter().enumerate() {
            let img = s.as_image()?;
            for y in 0..height {
                for col in 0..width {
                    let px = img.pixel(y, col);
                    for (c, &byte) in px.iter().enumerate().take(channels) {
                        x[[b, c, y, col]] = cast(byte as f64 / 255.0);
                    }
                }
            }
        }
        Ok(x)
    }
}
