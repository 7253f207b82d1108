//! Twin action-value networks with slowly tracking target copies and the
//! auto-tuned entropy temperature.

use ndarray::Array2;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::nn::{cast, to_f64, ConvStack, ConvTape, DenseParams, Mlp, MlpTape, Real, ScalarAdam};
use crate::types::{Skill, State};

/// Exponential moving average factor for the target networks.
pub const TARGET_EMA: f64 = 0.995;

/// Hidden width of each critic trunk.
pub const CRITIC_HIDDEN: usize = 256;

/// One Q network over (state, skill, action).
#[derive(Clone, Debug, serde::Serialize, serde::Deserialize)]
pub struct Critic<F> {
    encoder: Option<ConvStack<F>>,
    trunk: Mlp<F>,
    state_dim: usize,
    skill_dim: usize,
    action_dim: usize,
    obs_scale: Vec<f64>,
}

pub struct CriticTape<F> {
    conv: Option<ConvTape<F>>,
    trunk: MlpTape<F>,
}

impl<F: Real> Critic<F> {
    pub fn vector(
        state_dim: usize,
        skill_dim: usize,
        action_dim: usize,
        obs_scale: Vec<f64>,
        rng: &mut ChaCha8Rng,
    ) -> Result<Self> {
        if obs_scale.len() != state_dim || obs_scale.iter().any(|&s| !(s.is_finite() && s > 0.0)) {
            return Err(Error::invalid(
                "obs_scale must list one positive factor per state dim",
            ));
        }
        let dims = [
            state_dim + skill_dim + action_dim,
            CRITIC_HIDDEN,
            CRITIC_HIDDEN,
            1,
        ];
        Ok(Critic {
            encoder: None,
            trunk: Mlp::new(&dims, rng),
            state_dim,
            skill_dim,
            action_dim,
            obs_scale,
        })
    }

    pub fn image(skill_dim: usize, action_dim: usize, rng: &mut ChaCha8Rng) -> Result<Self> {
        let encoder = ConvStack::encoder_64(rng);
        let feat = encoder.out_dim();
        let dims = [feat + skill_dim + action_dim, CRITIC_HIDDEN, CRITIC_HIDDEN, 1];
        Ok(Critic {
            encoder: Some(encoder),
            trunk: Mlp::new(&dims, rng),
            state_dim: feat,
            skill_dim,
            action_dim,
            obs_scale: Vec::new(),
        })
    }

    pub fn params(&self) -> Vec<&DenseParams<F>> {
        let mut ps: Vec<&DenseParams<F>> = match &self.encoder {
            Some(enc) => enc.params(),
            None => Vec::new(),
        };
        ps.extend(self.trunk.layers().iter());
        ps
    }

    pub fn params_mut(&mut self) -> Vec<&mut DenseParams<F>> {
        let mut ps: Vec<&mut DenseParams<F>> = match &mut self.encoder {
            Some(enc) => enc.params_mut(),
            None => Vec::new(),
        };
        ps.extend(self.trunk.layers_mut().iter_mut());
        ps
    }

    /// Trunk input rows plus, for image critics, the encoder tape.
    fn trunk_input(
        &self,
        states: &[&State],
        skills: &[&Skill],
        actions: &[&[f64]],
        with_tape: bool,
    ) -> Result<(Array2<F>, Option<ConvTape<F>>)> {
        let n = states.len();
        let mut x = Array2::zeros((n, self.trunk.in_dim()));
        let mut conv_tape = None;
        match &self.encoder {
            None => {
                for (r, s) in states.iter().enumerate() {
                    let v = s.as_vector()?;
                    if v.len() != self.state_dim {
                        return Err(Error::invalid(format!(
                            "state dim {} does not match critic input dim {}",
                            v.len(),
                            self.state_dim
                        )));
                    }
                    for (c, &val) in v.iter().enumerate() {
                        x[[r, c]] = cast(val / self.obs_scale[c]);
                    }
                }
            }
            Some(enc) => {
                let pixels = super::image_batch(states, enc)?;
                let feats = if with_tape {
                    let (f, t) = enc.forward_tape(&pixels);
                    conv_tape = Some(t);
                    f
                } else {
                    enc.forward(&pixels)
                };
                for (r, row) in feats.outer_iter().enumerate() {
                    for (c, &val) in row.iter().enumerate() {
                        x[[r, c]] = val;
                    }
                }
            }
        }
        for r in 0..n {
            let z = skills[r];
            if z.dim() != self.skill_dim {
                return Err(Error::invalid(format!(
                    "skill dim {} does not match critic skill dim {}",
                    z.dim(),
                    self.skill_dim
                )));
            }
            for (c, &val) in z.as_slice().iter().enumerate() {
                x[[r, self.state_dim + c]] = cast(val);
            }
            let a = actions[r];
            if a.len() != self.action_dim {
                return Err(Error::invalid(format!(
                    "action dim {} does not match critic action dim {}",
                    a.len(),
                    self.action_dim
                )));
            }
            for (c, &val) in a.iter().enumerate() {
                x[[r, self.state_dim + self.skill_dim + c]] = cast(val);
            }
        }
        Ok((x, conv_tape))
    }

    /// Q values for a batch, in f64.
    pub fn q(&self, states: &[&State], skills: &[&Skill], actions: &[&[f64]]) -> Result<Vec<f64>> {
        let (x, _) = self.trunk_input(states, skills, actions, false)?;
        let out = self.trunk.forward(&x);
        Ok(out.column(0).iter().map(|&v| to_f64(v)).collect())
    }

    /// Q values plus the tape for `backward`.
    pub fn q_tape(
        &self,
        states: &[&State],
        skills: &[&Skill],
        actions: &[&[f64]],
    ) -> Result<(Vec<f64>, CriticTape<F>)> {
        let (x, conv) = self.trunk_input(states, skills, actions, true)?;
        let trunk = self.trunk.forward_tape(&x);
        let q = trunk.output().column(0).iter().map(|&v| to_f64(v)).collect();
        Ok((q, CriticTape { conv, trunk }))
    }

    /// Backprop per-row output gradients. Returns parameter gradients in
    /// `params` order and the gradient with respect to the action columns
    /// of the input.
    pub fn backward(&self, tape: &CriticTape<F>, d_q: &[f64]) -> (Vec<DenseParams<F>>, Array2<f64>) {
        let n = d_q.len();
        let mut d_out = Array2::zeros((n, 1));
        for (r, &g) in d_q.iter().enumerate() {
            d_out[[r, 0]] = cast::<F>(g);
        }
        let (trunk_grads, d_input) = self.trunk.backward(&tape.trunk, &d_out);
        let a0 = self.state_dim + self.skill_dim;
        let mut d_action = Array2::zeros((n, self.action_dim));
        for r in 0..n {
            for j in 0..self.action_dim {
                d_action[[r, j]] = to_f64(d_input[[r, a0 + j]]);
            }
        }
        let mut grads = match (&self.encoder, &tape.conv) {
            (Some(enc), Some(conv)) => {
                let d_feats = d_input.slice(ndarray::s![.., 0..self.state_dim]).to_owned();
                enc.backward(conv, &d_feats)
            }
            _ => Vec::new(),
        };
        grads.extend(trunk_grads);
        (grads, d_action)
    }
}

/// Twin critics plus their target copies.
#[derive(Clone, Debug, serde::Serialize, serde::Deserialize)]
pub struct CriticPair<F> {
    pub q1: Critic<F>,
    pub q2: Critic<F>,
    pub t1: Critic<F>,
    pub t2: Critic<F>,
}

impl<F: Real> CriticPair<F> {
    pub fn new(q1: Critic<F>, q2: Critic<F>) -> Self {
        let t1 = q1.clone();
        let t2 = q2.clone();
        CriticPair { q1, q2, t1, t2 }
    }

    /// Elementwise min of the two target Q heads.
    pub fn target_min(
        &self,
        states: &[&State],
        skills: &[&Skill],
        actions: &[&[f64]],
    ) -> Result<Vec<f64>> {
        let a = self.t1.q(states, skills, actions)?;
        let b = self.t2.q(states, skills, actions)?;
        Ok(a.into_iter().zip(b).map(|(x, y)| x.min(y)).collect())
    }

    /// Pull each target toward its live critic: t ← ema·t + (1−ema)·q.
    pub fn update_targets(&mut self) {
        let ema = cast::<F>(TARGET_EMA);
        let one_minus = cast::<F>(1.0 - TARGET_EMA);
        for (t, q) in [(&mut self.t1, &self.q1), (&mut self.t2, &self.q2)] {
            let q_params = q.params();
            for (tp, qp) in t.params_mut().into_iter().zip(q_params) {
                tp.w.zip_mut_with(&qp.w, |a, &b| *a = ema * *a + one_minus * b);
                tp.b.zip_mut_with(&qp.b, |a, &b| *a = ema * *a + one_minus * b);
            }
        }
    }

    pub fn is_finite(&self) -> bool {
        [&self.q1, &self.q2, &self.t1, &self.t2]
            .iter()
            .all(|c| c.params().iter().all(|p| p.is_finite()))
    }
}

/// Auto-tuned entropy temperature with target entropy −action_dim.
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Temperature {
    pub log_alpha: f64,
    pub target_entropy: f64,
    pub opt: ScalarAdam,
}

impl Temperature {
    pub fn new(action_dim: usize, lr: f64) -> Self {
        Temperature {
            log_alpha: 0.0,
            target_entropy: -(action_dim as f64),
            opt: ScalarAdam::new(lr),
        }
    }

    pub fn alpha(&self) -> f64 {
        self.log_alpha.exp()
    }

    /// One step on log α toward matching the entropy target. `mean_log_prob`
    /// is E[log π] over the actor batch; entropy above target pushes α down,
    /// below target pushes it up.
    pub fn update(&mut self, mean_log_prob: f64) {
        let grad = self.alpha() * (-mean_log_prob - self.target_entropy);
        self.opt.step(&mut self.log_alpha, grad);
    }
}
