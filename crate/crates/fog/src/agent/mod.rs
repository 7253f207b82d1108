//! Skill-conditioned actor-critic training and the run orchestrator.
//!
//! A [`Trainer`] wires one environment, a score function, the constrained
//! representation learner, and the actor-critic into the epoch loop:
//! collect episodes under freshly sampled skills, then interleave
//! representation, dual, and policy updates on replay minibatches. The
//! method enum selects how rewards are produced; every mode shares the
//! same loop so that equal seeds give comparable (and for the documented
//! pairs, bitwise-equal) runs.

mod checkpoint;
mod collect;
mod critic;
mod policy;
mod sac;

pub use checkpoint::load_trainer;
pub use collect::{collect_episode, CountingEmbedder};
pub use critic::{Critic, CriticPair, Temperature, CRITIC_HIDDEN, TARGET_EMA};
pub use policy::{
    squashed_log_prob, PolicyDist, PolicyNet, LOG_STD_MAX, LOG_STD_MIN, POLICY_HIDDEN, SQUASH_EPS,
};
pub use sac::{SacLearner, SacLosses};

use std::path::PathBuf;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;
use std::time::Instant;

use ndarray::Array4;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dsd::{
    reward_batch, satisfied_fraction, DsdLearner, MetricKind, PhiNet, HIDDEN_WIDTH,
};
use crate::embed::{Embedder, EmbedderConfig};
use crate::envs::{make_env, Env, EnvKind};
use crate::error::{Error, Result};
use crate::nn::{cast, ConvStack, Real};
use crate::replay::ReplayBuffer;
use crate::rng::{sample_skill, stream, StreamId};
use crate::score::{build_score_fn, ScoreConfig, ScoreFn, ScoreMode};
use crate::types::State;

/// Slack tolerance used when reporting the constraint satisfaction rate.
pub const SATISFACTION_TOL: f64 = 0.05;

/// Pixel batch for the convolutional encoders: [batch, channel, y, x],
/// bytes mapped to [0, 1].
pub(crate) fn image_batch<F: Real>(states: &[&State], enc: &ConvStack<F>) -> Result<Array4<F>> {
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

/// Training methods: the score-guided learner and its baselines.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    /// Score-weighted rewards with the score distance metric.
    Fog,
    /// Temporal metric, unweighted rewards.
    Metra,
    /// Euclidean metric, unweighted rewards.
    Lsd,
    /// Hand-written predicate score in place of an embedding-derived one.
    MetraPlus,
    /// Plain actor-critic on the raw scores; no representation learning.
    FrSac,
}

impl Method {
    pub fn name(&self) -> &'static str {
        match self {
            Method::Fog => "fog",
            Method::Metra => "metra",
            Method::Lsd => "lsd",
            Method::MetraPlus => "metra_plus",
            Method::FrSac => "fr_sac",
        }
    }
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fog" => Ok(Method::Fog),
            "metra" => Ok(Method::Metra),
            "lsd" => Ok(Method::Lsd),
            "metra_plus" => Ok(Method::MetraPlus),
            "fr_sac" => Ok(Method::FrSac),
            other => Err(Error::invalid(format!(
                "unknown method `{other}` (expected fog, metra, lsd, metra_plus, or fr_sac)"
            ))),
        }
    }
}

/// Per-component scale dividing raw observations before the policy and
/// critics; the representation always sees raw states.
pub fn state_scale(kind: EnvKind) -> Vec<f64> {
    match kind {
        EnvKind::PointRoom => vec![15.0, 15.0],
        EnvKind::TipCart => vec![15.0, std::f64::consts::PI, 1.0, 1.0],
    }
}

/// Full run description. Serializes as JSON with every field optional;
/// omitted fields take the defaults below.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub method: Method,
    pub env: EnvKind,
    pub skill_dim: usize,
    pub epochs: u32,
    pub episodes_per_epoch: u32,
    pub gradient_steps_per_epoch: u32,
    pub batch_size: usize,
    pub buffer_capacity: usize,
    pub seed: u64,
    pub score: ScoreConfig,
    pub metric: MetricKind,
    pub discount: f64,
    pub policy_lr: f64,
    pub critic_lr: f64,
    pub phi_lr: f64,
    pub checkpoint_every: u32,
    pub embedder: EmbedderConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            method: Method::Fog,
            env: EnvKind::PointRoom,
            skill_dim: 2,
            epochs: 100,
            episodes_per_epoch: 8,
            gradient_steps_per_epoch: 50,
            batch_size: 256,
            buffer_capacity: 100_000,
            seed: 0,
            score: ScoreConfig {
                mode: ScoreMode::Constant,
                ..ScoreConfig::default()
            },
            metric: MetricKind::Score,
            discount: 0.99,
            policy_lr: 3e-4,
            critic_lr: 3e-4,
            phi_lr: 1e-4,
            checkpoint_every: 50,
            embedder: EmbedderConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.skill_dim == 0 {
            return Err(Error::invalid("skill_dim must be >= 1"));
        }
        if self.epochs == 0 || self.episodes_per_epoch == 0 || self.gradient_steps_per_epoch == 0
        {
            return Err(Error::invalid(
                "epochs, episodes_per_epoch, and gradient_steps_per_epoch must be >= 1",
            ));
        }
        if self.batch_size == 0 {
            return Err(Error::invalid("batch_size must be >= 1"));
        }
        if self.buffer_capacity < self.batch_size {
            return Err(Error::invalid(format!(
                "buffer_capacity {} is smaller than batch_size {}",
                self.buffer_capacity, self.batch_size
            )));
        }
        if !(self.discount > 0.0 && self.discount <= 1.0) {
            return Err(Error::invalid(format!(
                "discount must be in (0, 1], got {}",
                self.discount
            )));
        }
        for (name, lr) in [
            ("policy_lr", self.policy_lr),
            ("critic_lr", self.critic_lr),
            ("phi_lr", self.phi_lr),
        ] {
            if !(lr.is_finite() && lr > 0.0) {
                return Err(Error::invalid(format!("{name} must be positive, got {lr}")));
            }
        }
        if self.checkpoint_every == 0 {
            return Err(Error::invalid("checkpoint_every must be >= 1"));
        }
        self.score.validate()?;
        self.embedder.validate()?;
        match self.method {
            Method::Fog => {
                if self.metric != MetricKind::Score {
                    return Err(Error::invalid("fog requires the score metric"));
                }
            }
            Method::Metra => {
                if self.metric != MetricKind::Temporal {
                    return Err(Error::invalid("metra requires the temporal metric"));
                }
                if self.score.mode != ScoreMode::Constant {
                    return Err(Error::invalid(
                        "metra ignores scores; set score mode to constant",
                    ));
                }
            }
            Method::Lsd => {
                if self.metric != MetricKind::Euclidean {
                    return Err(Error::invalid("lsd requires the euclidean metric"));
                }
                if self.score.mode != ScoreMode::Constant {
                    return Err(Error::invalid(
                        "lsd ignores scores; set score mode to constant",
                    ));
                }
            }
            Method::MetraPlus => {
                if self.metric != MetricKind::Score {
                    return Err(Error::invalid("metra_plus requires the score metric"));
                }
                if self.score.mode != ScoreMode::Predicate {
                    return Err(Error::invalid(
                        "metra_plus takes its score from a hand-written predicate",
                    ));
                }
            }
            Method::FrSac => {}
        }
        Ok(())
    }
}

/// One epoch's diagnostics; every field is finite.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct EpochReport {
    /// 1-based count of completed epochs.
    pub epoch: u32,
    /// Mean (Δφ)ᵀz over the epoch's update minibatches; 0 when no
    /// representation is trained.
    pub mean_skill_reward: f64,
    /// Mean reward actually fed to the policy.
    pub mean_weighted_reward: f64,
    /// Dual variable after the epoch; 0 when no representation is trained.
    pub lambda: f64,
    /// Fraction of a fresh minibatch with ‖Δφ‖ ≤ d + 0.05; 1 when no
    /// representation is trained.
    pub constraint_satisfaction: f64,
    /// Cumulative images submitted for embedding since the run started.
    pub embedder_calls: u64,
    pub wall_time_secs: f64,
}

impl EpochReport {
    /// Machine-parseable per-epoch line. Wall time is deliberately left
    /// out so equal-seed runs produce byte-identical logs.
    pub fn log_line(&self) -> String {
        format!(
            "epoch={} skill_reward={:.6} weighted_reward={:.6} lambda={:.4} satisfied={:.4} embed_calls={}",
            self.epoch,
            self.mean_skill_reward,
            self.mean_weighted_reward,
            self.lambda,
            self.constraint_satisfaction,
            self.embedder_calls
        )
    }

    pub fn is_finite(&self) -> bool {
        self.mean_skill_reward.is_finite()
            && self.mean_weighted_reward.is_finite()
            && self.lambda.is_finite()
            && self.constraint_satisfaction.is_finite()
            && self.wall_time_secs.is_finite()
    }
}

/// Owns every piece of one training run and advances it epoch by epoch.
pub struct Trainer {
    pub(crate) cfg: TrainConfig,
    pub(crate) env: Box<dyn Env>,
    pub(crate) sac: SacLearner<f32>,
    pub(crate) dsd: Option<DsdLearner<f32>>,
    pub(crate) buffer: ReplayBuffer,
    pub(crate) score_fn: Box<dyn ScoreFn>,
    pub(crate) embed_calls: Arc<AtomicU64>,
    pub(crate) rng_skill: ChaCha8Rng,
    pub(crate) rng_action: ChaCha8Rng,
    pub(crate) rng_buffer: ChaCha8Rng,
    pub(crate) epoch: u32,
    checkpoint_dir: Option<PathBuf>,
}

impl Trainer {
    /// Build a fresh run. The embedder is only consulted for score modes
    /// that need one; pass None otherwise.
    pub fn new(cfg: TrainConfig, embedder: Option<Arc<dyn Embedder>>) -> Result<Trainer> {
        cfg.validate()?;
        let env = make_env(cfg.env);
        let spec = env.spec().clone();
        let scale = state_scale(cfg.env);

        let mut init = stream(cfg.seed, StreamId::Init);
        let dsd = if cfg.method == Method::FrSac {
            None
        } else {
            let phi = PhiNet::vector(
                spec.state_dim,
                &[HIDDEN_WIDTH, HIDDEN_WIDTH],
                cfg.skill_dim,
                &mut init,
            );
            Some(DsdLearner::new(phi, cfg.metric, cfg.phi_lr))
        };
        let policy = PolicyNet::vector(
            spec.state_dim,
            cfg.skill_dim,
            spec.action_dim,
            scale.clone(),
            &mut init,
        )?;
        let q1 = Critic::vector(
            spec.state_dim,
            cfg.skill_dim,
            spec.action_dim,
            scale.clone(),
            &mut init,
        )?;
        let q2 = Critic::vector(spec.state_dim, cfg.skill_dim, spec.action_dim, scale, &mut init)?;
        let sac = SacLearner::new(
            policy,
            CriticPair::new(q1, q2),
            cfg.policy_lr,
            cfg.critic_lr,
            cfg.discount,
        );

        let embed_calls = Arc::new(AtomicU64::new(0));
        let counted: Option<Arc<dyn Embedder>> = embedder.map(|inner| {
            Arc::new(CountingEmbedder::new(inner, Arc::clone(&embed_calls))) as Arc<dyn Embedder>
        });
        let score_fn = build_score_fn(&cfg.score, counted, stream(cfg.seed, StreamId::Noise))?;

        let buffer = ReplayBuffer::new(cfg.buffer_capacity)?;
        Ok(Trainer {
            rng_skill: stream(cfg.seed, StreamId::Skill),
            rng_action: stream(cfg.seed, StreamId::Action),
            rng_buffer: stream(cfg.seed, StreamId::Buffer),
            cfg,
            env,
            sac,
            dsd,
            buffer,
            score_fn,
            embed_calls,
            epoch: 0,
            checkpoint_dir: None,
        })
    }

    pub fn config(&self) -> &TrainConfig {
        &self.cfg
    }

    pub fn epochs_completed(&self) -> u32 {
        self.epoch
    }

    pub fn policy(&self) -> &PolicyNet<f32> {
        &self.sac.policy
    }

    pub fn representation(&self) -> Option<&PhiNet<f32>> {
        self.dsd.as_ref().map(|d| &d.phi)
    }

    pub fn embedder_calls(&self) -> u64 {
        self.embed_calls.load(Ordering::SeqCst)
    }

    /// Directory that receives `checkpoint.bin` every
    /// [`TrainConfig::checkpoint_every`] epochs. None disables periodic
    /// checkpointing.
    pub fn set_checkpoint_dir(&mut self, dir: Option<PathBuf>) {
        self.checkpoint_dir = dir;
    }

    /// Run one epoch: collect episodes, then the configured number of
    /// update rounds. Returns the epoch's report.
    pub fn train_epoch(&mut self) -> Result<EpochReport> {
        if self.epoch >= self.cfg.epochs {
            return Err(Error::invalid(format!(
                "run already finished its {} epochs",
                self.cfg.epochs
            )));
        }
        let start = Instant::now();

        for _ in 0..self.cfg.episodes_per_epoch {
            let z = sample_skill(self.cfg.skill_dim, &mut self.rng_skill)?;
            let (_, transitions) = collect_episode(
                self.env.as_mut(),
                &self.sac.policy,
                &z,
                self.score_fn.as_mut(),
                false,
                &mut self.rng_action,
            )?;
            for tr in transitions {
                self.buffer.push(tr)?;
            }
        }

        let rounds = self.cfg.gradient_steps_per_epoch;
        let mut skill_sum = 0.0;
        let mut weighted_sum = 0.0;
        let mut lambda = 0.0;
        for _ in 0..rounds {
            let batch = self.buffer.sample(self.cfg.batch_size, &mut self.rng_buffer)?;
            let (rewards, mean_skill) = match self.dsd.as_mut() {
                Some(dsd) => {
                    let report = dsd.dual_step(&batch)?;
                    lambda = report.lambda;
                    reward_batch(&dsd.phi, &batch)?
                }
                None => (batch.iter().map(|t| t.score).collect(), 0.0),
            };
            skill_sum += mean_skill;
            weighted_sum += rewards.iter().sum::<f64>() / rewards.len() as f64;
            self.sac
                .policy_update(&batch, &rewards, &mut self.rng_action)?;
        }

        let constraint_satisfaction = match self.dsd.as_ref() {
            Some(dsd) => {
                let sample = self.buffer.sample(self.cfg.batch_size, &mut self.rng_buffer)?;
                satisfied_fraction(&dsd.phi, dsd.kind(), &sample, SATISFACTION_TOL)?
            }
            None => 1.0,
        };

        self.epoch += 1;
        let report = EpochReport {
            epoch: self.epoch,
            mean_skill_reward: skill_sum / rounds as f64,
            mean_weighted_reward: weighted_sum / rounds as f64,
            lambda,
            constraint_satisfaction,
            embedder_calls: self.embedder_calls(),
            wall_time_secs: start.elapsed().as_secs_f64(),
        };
        if !report.is_finite() {
            return Err(Error::TrainingDivergence(format!(
                "non-finite epoch diagnostics: {}",
                report.log_line()
            )));
        }

        if let Some(dir) = self.checkpoint_dir.clone() {
            if self.epoch % self.cfg.checkpoint_every == 0 {
                self.save_checkpoint(&dir.join("checkpoint.bin"))?;
            }
        }
        Ok(report)
    }

    /// Run all remaining epochs; on success writes `final.bin` when a
    /// checkpoint directory is set. On divergence the error propagates and
    /// the last periodic checkpoint stays on disk.
    pub fn train(&mut self) -> Result<Vec<EpochReport>> {
        let mut reports = Vec::with_capacity((self.cfg.epochs - self.epoch) as usize);
        while self.epoch < self.cfg.epochs {
            reports.push(self.train_epoch()?);
        }
        if let Some(dir) = self.checkpoint_dir.clone() {
            self.save_checkpoint(&dir.join("final.bin"))?;
        }
        Ok(reports)
    }
}
