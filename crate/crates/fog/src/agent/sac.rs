//! Soft actor-critic updates: critic regression to an entropy-regularized
//! bootstrap target, reparameterized actor ascent on the minimum critic,
//! and the temperature step.
//!
//! Episodes end on a timer, never on failure, so targets always bootstrap
//! through the final transition.

use ndarray::Array2;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::critic::{CriticPair, Temperature};
use super::policy::{PolicyNet, SQUASH_EPS};
use crate::error::{Error, Result};
use crate::nn::{cast, Adam, AdamConfig, DenseParams, Real};
use crate::types::{Skill, State, Transition};

/// Diagnostic losses from one SAC round, all finite by contract.
#[derive(Clone, Copy, Debug)]
pub struct SacLosses {
    pub critic: f64,
    pub actor: f64,
    /// Mean log π of the freshly sampled actions, the entropy estimate's
    /// negation.
    pub mean_log_prob: f64,
    pub alpha: f64,
    pub mean_q: f64,
}

/// Policy, twin critics, their optimizers, and the temperature.
#[derive(Clone, Debug, serde::Serialize, serde::Deserialize)]
pub struct SacLearner<F: Real> {
    pub policy: PolicyNet<F>,
    pub critics: CriticPair<F>,
    pub temp: Temperature,
    policy_opt: Adam<F>,
    critic_opt: Adam<F>,
    discount: f64,
}

impl<F: Real> SacLearner<F> {
    pub fn new(
        policy: PolicyNet<F>,
        critics: CriticPair<F>,
        policy_lr: f64,
        critic_lr: f64,
        discount: f64,
    ) -> Self {
        let policy_opt = Adam::new_refs(AdamConfig::with_lr(policy_lr), &policy.params());
        let mut critic_params = critics.q1.params();
        critic_params.extend(critics.q2.params());
        let critic_opt = Adam::new_refs(AdamConfig::with_lr(critic_lr), &critic_params);
        let temp = Temperature::new(policy.action_dim(), critic_lr);
        SacLearner {
            policy,
            critics,
            temp,
            policy_opt,
            critic_opt,
            discount,
        }
    }

    pub fn discount(&self) -> f64 {
        self.discount
    }

    /// One full SAC round on a batch with the given per-transition rewards:
    /// critic step, actor step, temperature step, target EMA.
    pub fn policy_update(
        &mut self,
        batch: &[&Transition],
        rewards: &[f64],
        rng: &mut ChaCha8Rng,
    ) -> Result<SacLosses> {
        if batch.is_empty() {
            return Err(Error::invalid("batch must be nonempty"));
        }
        if batch.len() != rewards.len() {
            return Err(Error::invalid(format!(
                "reward count {} does not match batch size {}",
                rewards.len(),
                batch.len()
            )));
        }
        if !rewards.iter().all(|r| r.is_finite()) {
            return Err(Error::TrainingDivergence(
                "non-finite reward fed to the policy update".into(),
            ));
        }
        let n = batch.len();
        let a_dim = self.policy.action_dim();
        let alpha = self.temp.alpha();
        let states: Vec<&State> = batch.iter().map(|t| &t.s).collect();
        let next_states: Vec<&State> = batch.iter().map(|t| &t.s_next).collect();
        let skills: Vec<&Skill> = batch.iter().map(|t| &t.z).collect();

        // Bootstrap target: y = r + γ (min target Q(s', a') − α log π(a'|s')),
        // with a' freshly sampled from the current policy. Episodes are
        // fixed-length, so the final transition bootstraps like any other.
        let next_dist = self.policy.dist(&next_states, &skills)?;
        let mut next_actions: Vec<Vec<f64>> = Vec::with_capacity(n);
        let mut next_log_probs = Vec::with_capacity(n);
        for r in 0..n {
            let mut a = Vec::with_capacity(a_dim);
            let mut lp = 0.0;
            for j in 0..a_dim {
                let xi: f64 = rng.sample(StandardNormal);
                let sigma = next_dist.log_std[[r, j]].exp();
                let u = next_dist.mean[[r, j]] + sigma * xi;
                let t = u.tanh();
                lp += -next_dist.log_std[[r, j]]
                    - 0.5 * (2.0 * std::f64::consts::PI).ln()
                    - 0.5 * xi * xi
                    - (1.0 - t * t + SQUASH_EPS).ln();
                a.push(t);
            }
            next_actions.push(a);
            next_log_probs.push(lp);
        }
        let next_action_refs: Vec<&[f64]> = next_actions.iter().map(|a| a.as_slice()).collect();
        let target_q = self
            .critics
            .target_min(&next_states, &skills, &next_action_refs)?;
        let targets: Vec<f64> = (0..n)
            .map(|r| rewards[r] + self.discount * (target_q[r] - alpha * next_log_probs[r]))
            .collect();

        let critic_loss = self.critic_step(&states, &skills, batch, &targets)?;
        let mut xi = Array2::<f64>::zeros((n, a_dim));
        for e in xi.iter_mut() {
            *e = rng.sample(StandardNormal);
        }
        let (actor_loss, mean_log_prob, mean_q) = self.actor_step(&states, &skills, &xi, alpha)?;
        self.temp.update(mean_log_prob);
        self.critics.update_targets();

        let losses = SacLosses {
            critic: critic_loss,
            actor: actor_loss,
            mean_log_prob,
            alpha,
            mean_q,
        };
        if !(losses.critic.is_finite() && losses.actor.is_finite() && mean_log_prob.is_finite()) {
            return Err(Error::TrainingDivergence(format!(
                "non-finite actor-critic losses: critic {}, actor {}, log-prob {}",
                losses.critic, losses.actor, mean_log_prob
            )));
        }
        Ok(losses)
    }

    /// MSE regression of both critics onto the targets; returns the loss.
    fn critic_step(
        &mut self,
        states: &[&State],
        skills: &[&Skill],
        batch: &[&Transition],
        targets: &[f64],
    ) -> Result<f64> {
        let n = batch.len();
        let actions: Vec<&[f64]> = batch.iter().map(|t| t.a.as_slice()).collect();
        let (q1, tape1) = self.critics.q1.q_tape(states, skills, &actions)?;
        let (q2, tape2) = self.critics.q2.q_tape(states, skills, &actions)?;
        let mut loss = 0.0;
        let mut d_q1 = Vec::with_capacity(n);
        let mut d_q2 = Vec::with_capacity(n);
        for r in 0..n {
            let e1 = q1[r] - targets[r];
            let e2 = q2[r] - targets[r];
            loss += (e1 * e1 + e2 * e2) / n as f64;
            d_q1.push(2.0 * e1 / n as f64);
            d_q2.push(2.0 * e2 / n as f64);
        }
        let (g1, _) = self.critics.q1.backward(&tape1, &d_q1);
        let (g2, _) = self.critics.q2.backward(&tape2, &d_q2);
        let mut grads: Vec<&DenseParams<F>> = g1.iter().collect();
        grads.extend(g2.iter());
        if !grads.iter().all(|g| g.is_finite()) {
            return Err(Error::TrainingDivergence(
                "non-finite critic gradient".into(),
            ));
        }
        let mut params = self.critics.q1.params_mut();
        params.extend(self.critics.q2.params_mut());
        self.critic_opt.step_refs(&mut params, &grads);
        Ok(loss)
    }

    /// Reparameterized actor step on E[α log π − min Q] with the given
    /// standard-normal noise; returns the loss, the mean log probability,
    /// and the mean Q under the fresh actions.
    fn actor_step(
        &mut self,
        states: &[&State],
        skills: &[&Skill],
        xi: &Array2<f64>,
        alpha: f64,
    ) -> Result<(f64, f64, f64)> {
        let out = actor_gradients(&self.policy, &self.critics, states, skills, xi, alpha)?;
        if !out.grads.iter().all(|g| g.is_finite()) {
            return Err(Error::TrainingDivergence("non-finite actor gradient".into()));
        }
        let grefs: Vec<&DenseParams<F>> = out.grads.iter().collect();
        let mut params = self.policy.params_mut();
        self.policy_opt.step_refs(&mut params, &grefs);
        Ok((out.loss, out.mean_log_prob, out.mean_q))
    }
}

/// Actor loss and its policy gradient at a fixed noise draw.
pub(crate) struct ActorGradients<F: Real> {
    pub grads: Vec<DenseParams<F>>,
    pub loss: f64,
    pub mean_log_prob: f64,
    pub mean_q: f64,
}

/// Differentiates mean(α log π(ã) − min_k Q_k(s, ã, z)) over the policy
/// parameters, where ã = tanh(mean + σ·ξ) is reparameterized through the
/// fixed noise matrix `xi` and the critics are held constant.
pub(crate) fn actor_gradients<F: Real>(
    policy: &PolicyNet<F>,
    critics: &CriticPair<F>,
    states: &[&State],
    skills: &[&Skill],
    xi: &Array2<f64>,
    alpha: f64,
) -> Result<ActorGradients<F>> {
    let n = states.len();
    let a_dim = policy.action_dim();
    if xi.dim() != (n, a_dim) {
        return Err(Error::invalid(format!(
            "noise shape {:?} does not match batch {n} x action dim {a_dim}",
            xi.dim()
        )));
    }
    let (dist, tape) = policy.dist_tape(states, skills)?;

    let mut u = Array2::<f64>::zeros((n, a_dim));
    let mut actions: Vec<Vec<f64>> = Vec::with_capacity(n);
    let mut log_probs = Vec::with_capacity(n);
    for r in 0..n {
        let mut a = Vec::with_capacity(a_dim);
        let mut lp = 0.0;
        for j in 0..a_dim {
            let sigma = dist.log_std[[r, j]].exp();
            let uu = dist.mean[[r, j]] + sigma * xi[[r, j]];
            let t = uu.tanh();
            u[[r, j]] = uu;
            lp += -dist.log_std[[r, j]]
                - 0.5 * (2.0 * std::f64::consts::PI).ln()
                - 0.5 * xi[[r, j]] * xi[[r, j]]
                - (1.0 - t * t + SQUASH_EPS).ln();
            a.push(t);
        }
        actions.push(a);
        log_probs.push(lp);
    }
    let action_refs: Vec<&[f64]> = actions.iter().map(|a| a.as_slice()).collect();

    let (q1, tape1) = critics.q1.q_tape(states, skills, &action_refs)?;
    let (q2, tape2) = critics.q2.q_tape(states, skills, &action_refs)?;
    // d(actor loss)/dQ_k flows only through the smaller critic per row.
    let mut d_q1 = vec![0.0; n];
    let mut d_q2 = vec![0.0; n];
    let mut mean_q = 0.0;
    for r in 0..n {
        let (qmin, pick1) = if q1[r] <= q2[r] { (q1[r], true) } else { (q2[r], false) };
        mean_q += qmin / n as f64;
        if pick1 {
            d_q1[r] = -1.0 / n as f64;
        } else {
            d_q2[r] = -1.0 / n as f64;
        }
    }
    let (_, d_a1) = critics.q1.backward(&tape1, &d_q1);
    let (_, d_a2) = critics.q2.backward(&tape2, &d_q2);

    // Head gradients for the mean m and log-std t of each dimension,
    // with u = m + σξ, a = tanh(u), c = d/du[−ln(1−tanh²u+eps)], and
    // dQ̂/da the already −1/n-scaled critic input gradient from above:
    //   dL/dm = α·c/n + dQ̂/da·(1−tanh²u)
    //   dL/dt = α·(−1 + c·σξ)/n + dQ̂/da·(1−tanh²u)·σξ
    let mut d_head = Array2::<F>::zeros((n, 2 * a_dim));
    let mut loss = 0.0;
    for r in 0..n {
        for j in 0..a_dim {
            let t = u[[r, j]].tanh();
            let one_m_t2 = 1.0 - t * t;
            let c = 2.0 * t * one_m_t2 / (one_m_t2 + SQUASH_EPS);
            let dq_da = d_a1[[r, j]] + d_a2[[r, j]];
            let sigma_xi = dist.log_std[[r, j]].exp() * xi[[r, j]];
            let g_m = alpha * c / n as f64 + dq_da * one_m_t2;
            let g_t = alpha * (-1.0 + c * sigma_xi) / n as f64 + dq_da * one_m_t2 * sigma_xi;
            d_head[[r, j]] = cast(g_m);
            d_head[[r, a_dim + j]] = cast(g_t * dist.clamp_mask[[r, j]]);
        }
        loss += (alpha * log_probs[r] - q1[r].min(q2[r])) / n as f64;
    }
    let grads = policy.backward(&tape, &d_head);
    let mean_log_prob = log_probs.iter().sum::<f64>() / n as f64;
    Ok(ActorGradients {
        grads,
        loss,
        mean_log_prob,
        mean_q,
    })
}
