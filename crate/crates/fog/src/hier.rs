//! Downstream goal-reaching: a high-level controller picks one frozen
//! skill every K steps, the low-level policy executes it, and a sparse
//! reward of 10 arrives the first time the agent comes within one unit of
//! the goal.
//!
//! The controller is a small episodic actor-critic: a Gaussian head emits
//! a raw vector that is normalized onto the skill sphere, and a value net
//! baselines the per-decision discounted returns. The low-level policy is
//! never updated; training verifies that with a parameter hash.

use ndarray::Array2;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use crate::agent::{PolicyNet, LOG_STD_MAX, LOG_STD_MIN};
use crate::envs::{make_env, Env, EnvKind};
use crate::error::{Error, Result};
use crate::nn::{Adam, AdamConfig, DenseParams, Mlp};
use crate::rng::{sample_skill, stream, StreamId};
use crate::types::{Skill, State};

/// Steps between skill decisions.
pub const DECISION_INTERVAL: u32 = 50;
/// Goal coordinates are drawn uniformly from [-GOAL_RANGE, GOAL_RANGE]².
pub const GOAL_RANGE: f64 = 10.0;
/// The goal counts as reached within this distance.
pub const REACH_DISTANCE: f64 = 1.0;
/// One-time reward on reaching the goal.
pub const GOAL_REWARD: f64 = 10.0;
/// Per-decision discount for the controller's returns.
pub const DECISION_DISCOUNT: f64 = 0.99;

const CONTROLLER_HIDDEN: usize = 64;
const CONTROLLER_LR: f64 = 3e-3;

/// Planar goal, both coordinates inside [-10, 10].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Goal {
    x: f64,
    y: f64,
}

impl Goal {
    pub fn new(x: f64, y: f64) -> Result<Self> {
        for (name, v) in [("x", x), ("y", y)] {
            if !(v.is_finite() && v.abs() <= GOAL_RANGE) {
                return Err(Error::invalid(format!(
                    "goal {name} must lie in [-{GOAL_RANGE}, {GOAL_RANGE}], got {v}"
                )));
            }
        }
        Ok(Goal { x, y })
    }

    pub fn sample(rng: &mut ChaCha8Rng) -> Self {
        Goal {
            x: rng.random_range(-GOAL_RANGE..=GOAL_RANGE),
            y: rng.random_range(-GOAL_RANGE..=GOAL_RANGE),
        }
    }

    pub fn xy(&self) -> (f64, f64) {
        (self.x, self.y)
    }

    pub fn distance_to(&self, pos: &[f64]) -> f64 {
        ((pos[0] - self.x).powi(2) + (pos[1] - self.y).powi(2)).sqrt()
    }
}

/// One skill decision as the controller saw it: the scaled input row and
/// the noise that produced the raw sample.
#[derive(Clone, Debug)]
struct Decision {
    obs: Vec<f64>,
    xi: Vec<f64>,
}

/// High-level actor-critic over (state, goal); emits unit-norm skills.
pub struct ControllerPolicy {
    actor: Mlp<f64>,
    value: Mlp<f64>,
    actor_opt: Adam<f64>,
    value_opt: Adam<f64>,
    state_dim: usize,
    skill_dim: usize,
}

impl ControllerPolicy {
    pub fn new(state_dim: usize, skill_dim: usize, rng: &mut ChaCha8Rng) -> Result<Self> {
        if state_dim < 2 || skill_dim == 0 {
            return Err(Error::invalid(
                "controller needs a planar state and skill_dim >= 1",
            ));
        }
        let in_dim = state_dim + 2;
        let actor = Mlp::new(
            &[in_dim, CONTROLLER_HIDDEN, CONTROLLER_HIDDEN, 2 * skill_dim],
            rng,
        );
        let value = Mlp::new(&[in_dim, CONTROLLER_HIDDEN, CONTROLLER_HIDDEN, 1], rng);
        let actor_opt = Adam::new(AdamConfig::with_lr(CONTROLLER_LR), actor.layers());
        let value_opt = Adam::new(AdamConfig::with_lr(CONTROLLER_LR), value.layers());
        Ok(ControllerPolicy {
            actor,
            value,
            actor_opt,
            value_opt,
            state_dim,
            skill_dim,
        })
    }

    pub fn skill_dim(&self) -> usize {
        self.skill_dim
    }

    pub fn params(&self) -> Vec<&DenseParams<f64>> {
        let mut ps: Vec<&DenseParams<f64>> = self.actor.layers().iter().collect();
        ps.extend(self.value.layers().iter());
        ps
    }

    /// Scale state by the room bound and goal by its range so every input
    /// sits near [-1, 1].
    fn obs_row(&self, state: &[f64], goal: &Goal) -> Result<Vec<f64>> {
        if state.len() != self.state_dim {
            return Err(Error::invalid(format!(
                "state has {} entries, controller expects {}",
                state.len(),
                self.state_dim
            )));
        }
        let mut row = Vec::with_capacity(self.state_dim + 2);
        row.extend(state.iter().map(|s| s / 15.0));
        row.push(goal.x / GOAL_RANGE);
        row.push(goal.y / GOAL_RANGE);
        Ok(row)
    }

    fn head(&self, obs: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let mut x = Array2::zeros((1, obs.len()));
        for (j, &v) in obs.iter().enumerate() {
            x[[0, j]] = v;
        }
        let out = self.actor.forward(&x);
        let mean: Vec<f64> = (0..self.skill_dim).map(|j| out[[0, j]]).collect();
        let log_std: Vec<f64> = (0..self.skill_dim)
            .map(|j| out[[0, self.skill_dim + j]].clamp(LOG_STD_MIN, LOG_STD_MAX))
            .collect();
        (mean, log_std)
    }

    /// Pick a skill for the given state and goal. Deterministic selection
    /// normalizes the mean; stochastic selection draws Gaussian noise and
    /// records the decision for the episode's update.
    fn select(
        &self,
        state: &[f64],
        goal: &Goal,
        deterministic: bool,
        rng: &mut ChaCha8Rng,
    ) -> Result<(Skill, Decision)> {
        let obs = self.obs_row(state, goal)?;
        let (mean, log_std) = self.head(&obs);
        let mut xi = vec![0.0; self.skill_dim];
        if !deterministic {
            for x in xi.iter_mut() {
                *x = rng.sample(rand_distr::StandardNormal);
            }
        }
        let raw: Vec<f64> = (0..self.skill_dim)
            .map(|j| mean[j] + log_std[j].exp() * xi[j])
            .collect();
        let norm = raw.iter().map(|v| v * v).sum::<f64>().sqrt();
        let z = if norm > 1e-9 {
            Skill::new(raw.iter().map(|v| v / norm).collect())?
        } else {
            sample_skill(self.skill_dim, rng)?
        };
        Ok((z, Decision { obs, xi }))
    }

    /// One episodic update from the recorded decisions and their
    /// per-window rewards, using discounted returns against the value
    /// baseline.
    fn update(&mut self, decisions: &[Decision], window_rewards: &[f64]) -> Result<()> {
        let n = decisions.len();
        if n == 0 || n != window_rewards.len() {
            return Err(Error::invalid(
                "episode update needs matched decisions and rewards",
            ));
        }
        let mut returns = vec![0.0; n];
        let mut acc = 0.0;
        for i in (0..n).rev() {
            acc = window_rewards[i] + DECISION_DISCOUNT * acc;
            returns[i] = acc;
        }

        let in_dim = self.state_dim + 2;
        let mut x = Array2::zeros((n, in_dim));
        for (i, d) in decisions.iter().enumerate() {
            for (j, &v) in d.obs.iter().enumerate() {
                x[[i, j]] = v;
            }
        }
        let value_tape = self.value.forward_tape(&x);
        let values: Vec<f64> = (0..n).map(|i| value_tape.output()[[i, 0]]).collect();

        let actor_tape = self.actor.forward_tape(&x);
        let out = actor_tape.output();
        let d = self.skill_dim;
        let mut d_actor = Array2::<f64>::zeros((n, 2 * d));
        for i in 0..n {
            let adv = returns[i] - values[i];
            for j in 0..d {
                let t = out[[i, d + j]];
                let clamped = t.clamp(LOG_STD_MIN, LOG_STD_MAX);
                let mask = if t == clamped { 1.0 } else { 0.0 };
                let sigma = clamped.exp();
                let xi = decisions[i].xi[j];
                // Score-function gradient of log N(u; m, σ) at the sampled
                // point: d/dm = ξ/σ, d/d(log σ) = ξ² − 1.
                d_actor[[i, j]] = -adv * xi / sigma / n as f64;
                d_actor[[i, d + j]] = -adv * (xi * xi - 1.0) * mask / n as f64;
            }
        }
        let (actor_grads, _) = self.actor.backward(&actor_tape, &d_actor);
        if !actor_grads.iter().all(|g| g.is_finite()) {
            return Err(Error::TrainingDivergence(
                "non-finite controller gradient".into(),
            ));
        }
        self.actor_opt.step(self.actor.layers_mut(), &actor_grads);

        let mut d_value = Array2::<f64>::zeros((n, 1));
        for i in 0..n {
            d_value[[i, 0]] = 2.0 * (values[i] - returns[i]) / n as f64;
        }
        let (value_grads, _) = self.value.backward(&value_tape, &d_value);
        self.value_opt.step(self.value.layers_mut(), &value_grads);
        Ok(())
    }
}

/// One evaluated or collected goal-reaching episode.
#[derive(Clone, Debug)]
pub struct HierEpisode {
    /// Undiscounted return: 10 if the goal was reached, else 0.
    pub ret: f64,
    pub states: Vec<Vec<f64>>,
    /// Steps at which a skill decision was made.
    pub decision_steps: Vec<u32>,
    /// First step whose post-step position was within reach, if any.
    pub reached_at: Option<u32>,
}

/// Drive one 200-step episode with skills from `pick`, crediting the
/// reward to the decision window containing the reaching step.
fn rollout<F>(
    frozen: &PolicyNet<f32>,
    env: &mut dyn Env,
    goal: &Goal,
    rng: &mut ChaCha8Rng,
    mut pick: F,
) -> Result<(HierEpisode, Vec<f64>)>
where
    F: FnMut(u32, &[f64], &mut ChaCha8Rng) -> Result<Skill>,
{
    let episode_len = env.spec().episode_len;
    let mut cur = env.reset(0);
    let mut states = Vec::with_capacity(episode_len as usize + 1);
    states.push(cur.clone());
    let mut decision_steps = Vec::new();
    let mut window_rewards = Vec::new();
    let mut z: Option<Skill> = None;
    let mut reached_at = None;

    for t in 0..episode_len {
        if t % DECISION_INTERVAL == 0 {
            decision_steps.push(t);
            window_rewards.push(0.0);
            z = Some(pick(t, &cur, rng)?);
        }
        let skill = z.as_ref().expect("skill set at window start");
        let a = frozen.act(&State::Vector(cur), skill, true, rng)?;
        let (next, _) = env.step(&a)?;
        if reached_at.is_none() && goal.distance_to(&next) < REACH_DISTANCE {
            reached_at = Some(t + 1);
            *window_rewards.last_mut().expect("at least one window") = GOAL_REWARD;
        }
        states.push(next.clone());
        cur = next;
    }

    let ret = if reached_at.is_some() { GOAL_REWARD } else { 0.0 };
    Ok((
        HierEpisode {
            ret,
            states,
            decision_steps,
            reached_at,
        },
        window_rewards,
    ))
}

fn check_pairing(frozen: &PolicyNet<f32>, env: &dyn Env, skill_dim: usize) -> Result<()> {
    if env.spec().name != EnvKind::PointRoom.name() {
        return Err(Error::invalid(
            "goal reaching is defined on the planar room",
        ));
    }
    if frozen.skill_dim() != skill_dim {
        return Err(Error::invalid(format!(
            "frozen policy expects {}-dim skills, controller emits {skill_dim}",
            frozen.skill_dim()
        )));
    }
    Ok(())
}

/// Evaluate (or collect) one episode under the controller.
pub fn run_hier_episode(
    controller: &ControllerPolicy,
    frozen: &PolicyNet<f32>,
    env: &mut dyn Env,
    goal: &Goal,
    deterministic: bool,
    rng: &mut ChaCha8Rng,
) -> Result<HierEpisode> {
    check_pairing(frozen, env, controller.skill_dim())?;
    let (episode, _) = rollout(frozen, env, goal, rng, |_, s, r| {
        controller.select(s, goal, deterministic, r).map(|(z, _)| z)
    })?;
    Ok(episode)
}

/// Learning-curve point: one training episode and its return.
#[derive(Clone, Copy, Debug, serde::Serialize, serde::Deserialize)]
pub struct EpisodeReturn {
    pub episode: u32,
    pub ret: f64,
}

/// Bitwise digest of the low-level parameters, used to prove the frozen
/// policy stays frozen.
pub fn policy_param_hash(policy: &PolicyNet<f32>) -> [u8; 32] {
    let mut h = Sha256::new();
    for p in policy.params() {
        for &w in p.w.iter() {
            h.update(w.to_le_bytes());
        }
        for &b in p.b.iter() {
            h.update(b.to_le_bytes());
        }
    }
    h.finalize().into()
}

/// Train a fresh controller over the frozen skills for the given number of
/// episodes; returns it with the learning curve.
pub fn train_controller(
    frozen: &PolicyNet<f32>,
    episodes: u32,
    seed: u64,
) -> Result<(ControllerPolicy, Vec<EpisodeReturn>)> {
    let mut env = make_env(EnvKind::PointRoom);
    let state_dim = env.spec().state_dim;
    let mut init = stream(seed, StreamId::Init);
    let mut controller = ControllerPolicy::new(state_dim, frozen.skill_dim(), &mut init)?;
    check_pairing(frozen, env.as_ref(), controller.skill_dim())?;

    let hash_before = policy_param_hash(frozen);
    let mut goal_rng = stream(seed, StreamId::Goal);
    let mut skill_rng = stream(seed, StreamId::Skill);
    let mut curve = Vec::with_capacity(episodes as usize);

    for episode in 0..episodes {
        let goal = Goal::sample(&mut goal_rng);
        let mut decisions = Vec::new();
        let (ep, window_rewards) = rollout(frozen, env.as_mut(), &goal, &mut skill_rng, |_, s, r| {
            let (z, d) = controller.select(s, &goal, false, r)?;
            decisions.push(d);
            Ok(z)
        })?;
        controller.update(&decisions, &window_rewards)?;
        curve.push(EpisodeReturn {
            episode,
            ret: ep.ret,
        });
    }

    if policy_param_hash(frozen) != hash_before {
        return Err(Error::TrainingDivergence(
            "frozen policy parameters changed during controller training".into(),
        ));
    }
    Ok((controller, curve))
}

/// Mean return of the random-skill comparison: a fresh unit skill at every
/// decision point, same goals and episode mechanics.
pub fn random_skill_baseline(
    frozen: &PolicyNet<f32>,
    episodes: u32,
    seed: u64,
) -> Result<Vec<EpisodeReturn>> {
    let mut env = make_env(EnvKind::PointRoom);
    check_pairing(frozen, env.as_ref(), frozen.skill_dim())?;
    let mut goal_rng = stream(seed, StreamId::Goal);
    let mut skill_rng = stream(seed, StreamId::Skill);
    let dim = frozen.skill_dim();
    let mut curve = Vec::with_capacity(episodes as usize);
    for episode in 0..episodes {
        let goal = Goal::sample(&mut goal_rng);
        let (ep, _) = rollout(frozen, env.as_mut(), &goal, &mut skill_rng, |_, _, r| {
            sample_skill(dim, r)
        })?;
        curve.push(EpisodeReturn {
            episode,
            ret: ep.ret,
        });
    }
    Ok(curve)
}
