//! Skill-conditioned squashed-Gaussian policy π(a | s, z).
//!
//! The trunk maps the concatenated (scaled state, skill) vector to a mean
//! and log standard deviation per action dimension; actions are the tanh
//! of Gaussian samples, so they always land in (-1, 1). Image states pass
//! through a convolutional encoder whose flat features replace the scaled
//! state in the concatenation.

use ndarray::Array2;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::image_batch;
use crate::error::{Error, Result};
use crate::nn::{cast, to_f64, ConvStack, ConvTape, DenseParams, Mlp, MlpTape, Real};
use crate::types::{Skill, State};

/// Hidden width of the policy trunk.
pub const POLICY_HIDDEN: usize = 256;

/// Clamp range for the log standard deviation head.
pub const LOG_STD_MIN: f64 = -5.0;
pub const LOG_STD_MAX: f64 = 2.0;

/// Floor inside the tanh log-density correction.
pub const SQUASH_EPS: f64 = 1e-6;

#[derive(Clone, Debug, serde::Serialize, serde::Deserialize)]
pub struct PolicyNet<F> {
    encoder: Option<ConvStack<F>>,
    trunk: Mlp<F>,
    action_dim: usize,
    /// Per-component divisor applied to vector states before the trunk.
    obs_scale: Vec<f64>,
}

/// Activations kept for the actor backward pass.
pub struct PolicyTape<F> {
    conv: Option<ConvTape<F>>,
    trunk: MlpTape<F>,
}

/// Gaussian head values for a batch, all in f64.
pub struct PolicyDist {
    pub mean: Array2<f64>,
    pub log_std: Array2<f64>,
    /// 1 where the raw log-std fell inside the clamp range, 0 where the
    /// clamp pinned it; multiplies the log-std gradient.
    pub clamp_mask: Array2<f64>,
}

impl<F: Real> PolicyNet<F> {
    /// Policy over vector states. `obs_scale` divides each state component
    /// so the trunk sees O(1) inputs regardless of world units.
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
            state_dim + skill_dim,
            POLICY_HIDDEN,
            POLICY_HIDDEN,
            2 * action_dim,
        ];
        Ok(PolicyNet {
            encoder: None,
            trunk: Mlp::new(&dims, rng),
            action_dim,
            obs_scale,
        })
    }

    /// Policy over 64x64 RGB image states.
    pub fn image(skill_dim: usize, action_dim: usize, rng: &mut ChaCha8Rng) -> Result<Self> {
        let encoder = ConvStack::encoder_64(rng);
        let dims = [
            encoder.out_dim() + skill_dim,
            POLICY_HIDDEN,
            POLICY_HIDDEN,
            2 * action_dim,
        ];
        Ok(PolicyNet {
            encoder: Some(encoder),
            trunk: Mlp::new(&dims, rng),
            action_dim,
            obs_scale: Vec::new(),
        })
    }

    pub fn action_dim(&self) -> usize {
        self.action_dim
    }

    pub fn skill_dim(&self) -> usize {
        let feat = match &self.encoder {
            Some(enc) => enc.out_dim(),
            None => self.obs_scale.len(),
        };
        self.trunk.in_dim() - feat
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

    pub fn is_finite(&self) -> bool {
        self.params().iter().all(|p| p.is_finite())
    }

    /// Concatenated (features, skill) input rows for the trunk.
    fn trunk_input(&self, states: &[&State], skills: &[&Skill]) -> Result<Array2<F>> {
        debug_assert_eq!(states.len(), skills.len());
        let in_dim = self.trunk.in_dim();
        let zdim = self.skill_dim();
        let feat_dim = in_dim - zdim;
        let mut x = Array2::zeros((states.len(), in_dim));
        match &self.encoder {
            None => {
                for (r, s) in states.iter().enumerate() {
                    let v = s.as_vector()?;
                    if v.len() != feat_dim {
                        return Err(Error::invalid(format!(
                            "state dim {} does not match policy input dim {feat_dim}",
                            v.len()
                        )));
                    }
                    for (c, &val) in v.iter().enumerate() {
                        x[[r, c]] = cast(val / self.obs_scale[c]);
                    }
                }
            }
            Some(enc) => {
                let feats = enc.forward(&image_batch(states, enc)?);
                for (r, row) in feats.outer_iter().enumerate() {
                    for (c, &val) in row.iter().enumerate() {
                        x[[r, c]] = val;
                    }
                }
            }
        }
        for (r, z) in skills.iter().enumerate() {
            if z.dim() != zdim {
                return Err(Error::invalid(format!(
                    "skill dim {} does not match policy skill dim {zdim}",
                    z.dim()
                )));
            }
            for (c, &val) in z.as_slice().iter().enumerate() {
                x[[r, feat_dim + c]] = cast(val);
            }
        }
        Ok(x)
    }

    /// Distribution head for a batch, without gradient bookkeeping.
    pub fn dist(&self, states: &[&State], skills: &[&Skill]) -> Result<PolicyDist> {
        let out = self.trunk.forward(&self.trunk_input(states, skills)?);
        Ok(split_dist(&out, self.action_dim))
    }

    /// Distribution head plus the tape needed by `backward`.
    pub fn dist_tape(&self, states: &[&State], skills: &[&Skill]) -> Result<(PolicyDist, PolicyTape<F>)> {
        match &self.encoder {
            None => {
                let x = self.trunk_input(states, skills)?;
                let trunk = self.trunk.forward_tape(&x);
                let dist = split_dist(trunk.output(), self.action_dim);
                Ok((dist, PolicyTape { conv: None, trunk }))
            }
            Some(enc) => {
                let (feats, conv) = enc.forward_tape(&image_batch(states, enc)?);
                let zdim = self.skill_dim();
                let feat_dim = feats.ncols();
                let mut x = Array2::zeros((states.len(), feat_dim + zdim));
                for (r, row) in feats.outer_iter().enumerate() {
                    for (c, &val) in row.iter().enumerate() {
                        x[[r, c]] = val;
                    }
                    for (c, &val) in skills[r].as_slice().iter().enumerate() {
                        x[[r, feat_dim + c]] = cast(val);
                    }
                }
                let trunk = self.trunk.forward_tape(&x);
                let dist = split_dist(trunk.output(), self.action_dim);
                Ok((
                    dist,
                    PolicyTape {
                        conv: Some(conv),
                        trunk,
                    },
                ))
            }
        }
    }

    /// Backprop the head gradient `d_out` (columns: means then log-stds);
    /// gradients come back in `params` order.
    pub fn backward(&self, tape: &PolicyTape<F>, d_out: &Array2<F>) -> Vec<DenseParams<F>> {
        let (trunk_grads, d_input) = self.trunk.backward(&tape.trunk, d_out);
        let mut grads = match (&self.encoder, &tape.conv) {
            (Some(enc), Some(conv)) => {
                let feat_dim = enc.out_dim();
                let d_feats = d_input.slice(ndarray::s![.., 0..feat_dim]).to_owned();
                enc.backward(conv, &d_feats)
            }
            _ => Vec::new(),
        };
        grads.extend(trunk_grads);
        grads
    }

    /// One action. Deterministic mode returns the squashed mean; stochastic
    /// mode squashes a reparameterized Gaussian sample drawn from `rng`.
    pub fn act(
        &self,
        s: &State,
        z: &Skill,
        deterministic: bool,
        rng: &mut ChaCha8Rng,
    ) -> Result<Vec<f64>> {
        let dist = self.dist(&[s], &[z])?;
        let mut a = Vec::with_capacity(self.action_dim);
        for j in 0..self.action_dim {
            let u = if deterministic {
                dist.mean[[0, j]]
            } else {
                let xi: f64 = rng.sample(StandardNormal);
                dist.mean[[0, j]] + dist.log_std[[0, j]].exp() * xi
            };
            a.push(u.tanh());
        }
        Ok(a)
    }
}

fn split_dist<F: Real>(out: &Array2<F>, action_dim: usize) -> PolicyDist {
    let n = out.nrows();
    let mut mean = Array2::zeros((n, action_dim));
    let mut log_std = Array2::zeros((n, action_dim));
    let mut clamp_mask = Array2::zeros((n, action_dim));
    for r in 0..n {
        for j in 0..action_dim {
            mean[[r, j]] = to_f64(out[[r, j]]);
            let raw = to_f64(out[[r, action_dim + j]]);
            log_std[[r, j]] = raw.clamp(LOG_STD_MIN, LOG_STD_MAX);
            clamp_mask[[r, j]] = if (LOG_STD_MIN..=LOG_STD_MAX).contains(&raw) {
                1.0
            } else {
                0.0
            };
        }
    }
    PolicyDist {
        mean,
        log_std,
        clamp_mask,
    }
}

/// Log-density of the squashed sample a = tanh(u) under the Gaussian head,
/// summed over action dimensions. `xi` is the standard-normal draw with
/// u = mean + exp(log_std) · xi.
pub fn squashed_log_prob(log_std: &[f64], xi: &[f64], u: &[f64]) -> f64 {
    const HALF_LN_2PI: f64 = 0.9189385332046727;
    let mut lp = 0.0;
    for j in 0..u.len() {
        let t = u[j].tanh();
        lp += -log_std[j] - HALF_LN_2PI - 0.5 * xi[j] * xi[j] - (1.0 - t * t + SQUASH_EPS).ln();
    }
    lp
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{sample_skill, stream, StreamId};

    fn test_policy() -> PolicyNet<f32> {
        PolicyNet::vector(4, 2, 2, vec![15.0, 15.0, 1.0, 1.0], &mut stream(0, StreamId::Init))
            .unwrap()
    }

    #[test]
    fn deterministic_actions_repeat() {
        let policy = test_policy();
        let s = State::Vector(vec![1.0, -3.0, 0.5, 0.2]);
        let z = sample_skill(2, &mut stream(1, StreamId::Skill)).unwrap();
        let mut rng = stream(1, StreamId::Action);
        let a = policy.act(&s, &z, true, &mut rng).unwrap();
        let b = policy.act(&s, &z, true, &mut rng).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn stochastic_actions_stay_in_bounds() {
        let policy = test_policy();
        let s = State::Vector(vec![10.0, 2.0, -0.9, 1.0]);
        let z = sample_skill(2, &mut stream(2, StreamId::Skill)).unwrap();
        let mut rng = stream(2, StreamId::Action);
        for _ in 0..10_000 {
            let a = policy.act(&s, &z, false, &mut rng).unwrap();
            assert_eq!(a.len(), 2);
            assert!(a.iter().all(|x| x.is_finite() && x.abs() <= 1.0));
        }
    }

    #[test]
    fn log_std_head_is_clamped() {
        let mut policy = test_policy();
        // Blow up the last layer so raw log-stds leave the clamp range.
        for p in policy.params_mut() {
            p.w.mapv_inplace(|w| w * 100.0);
            p.b.fill(10.0);
        }
        let s = State::Vector(vec![15.0, 15.0, 1.0, 1.0]);
        let z = sample_skill(2, &mut stream(3, StreamId::Skill)).unwrap();
        let dist = policy.dist(&[&s], &[&z]).unwrap();
        for j in 0..2 {
            let ls = dist.log_std[[0, j]];
            assert!((LOG_STD_MIN..=LOG_STD_MAX).contains(&ls));
        }
        // Somewhere in this net the clamp must have engaged.
        assert!(dist.clamp_mask.iter().any(|&m| m == 0.0));
    }

    #[test]
    fn obs_scale_must_match_state_dim() {
        let err = PolicyNet::<f32>::vector(4, 2, 2, vec![15.0], &mut stream(4, StreamId::Init));
        assert!(err.is_err());
        let err =
            PolicyNet::<f32>::vector(2, 2, 2, vec![15.0, 0.0], &mut stream(4, StreamId::Init));
        assert!(err.is_err());
    }

    #[test]
    fn skill_dim_mismatch_is_rejected() {
        let policy = test_policy();
        let s = State::Vector(vec![0.0; 4]);
        let z = sample_skill(3, &mut stream(5, StreamId::Skill)).unwrap();
        let mut rng = stream(5, StreamId::Action);
        assert!(policy.act(&s, &z, true, &mut rng).is_err());
    }

    #[test]
    fn squashed_log_prob_matches_hand_computation() {
        // One dimension, log_std = 0, xi = 0: density is the standard
        // normal at its mode corrected by the tanh Jacobian at u = mean.
        let u = [0.3];
        let lp = squashed_log_prob(&[0.0], &[0.0], &u);
        let t: f64 = 0.3f64.tanh();
        let expected = -0.5 * (2.0 * std::f64::consts::PI).ln() - (1.0 - t * t + SQUASH_EPS).ln();
        assert!((lp - expected).abs() < 1e-12);
    }

    #[test]
    fn image_policy_acts_on_frames() {
        let policy = PolicyNet::<f32>::image(2, 2, &mut stream(6, StreamId::Init)).unwrap();
        let s = State::Image(crate::envs::render_tip_cart(0.5, 0.1));
        let z = sample_skill(2, &mut stream(6, StreamId::Skill)).unwrap();
        let mut rng = stream(6, StreamId::Action);
        let a = policy.act(&s, &z, false, &mut rng).unwrap();
        assert!(a.iter().all(|x| x.is_finite() && x.abs() <= 1.0));
    }
}
