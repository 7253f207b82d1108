//! Episode collection: roll the skill-conditioned policy through an
//! environment, scoring each reached state as it arrives.

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use rand_chacha::ChaCha8Rng;

use super::policy::PolicyNet;
use crate::embed::{Embedder, Embedding};
use crate::envs::Env;
use crate::error::Result;
use crate::score::ScoreFn;
use crate::types::{Image, Skill, State, Trajectory, Transition};

/// Decorator that counts images submitted for embedding. Text requests
/// pass through uncounted; intention texts are embedded once per run and
/// say nothing about scoring volume.
pub struct CountingEmbedder {
    inner: Arc<dyn Embedder>,
    images: Arc<AtomicU64>,
}

impl CountingEmbedder {
    pub fn new(inner: Arc<dyn Embedder>, images: Arc<AtomicU64>) -> Self {
        CountingEmbedder { inner, images }
    }

    pub fn count(&self) -> u64 {
        self.images.load(Ordering::SeqCst)
    }
}

impl Embedder for CountingEmbedder {
    fn embed_images(&self, images: &[&Image]) -> Result<Vec<Embedding>> {
        self.images.fetch_add(images.len() as u64, Ordering::SeqCst);
        self.inner.embed_images(images)
    }

    fn embed_texts(&self, texts: &[&str]) -> Result<Vec<Embedding>> {
        self.inner.embed_texts(texts)
    }
}

/// Roll one full episode under a fixed skill. Each transition stores the
/// score of the state it reaches; scorers that want pixels get the rendered
/// frame, everything else gets the raw state vector. The score function is
/// reset first, so its per-trajectory state starts fresh.
pub fn collect_episode(
    env: &mut dyn Env,
    policy: &PolicyNet<f32>,
    z: &Skill,
    score_fn: &mut dyn ScoreFn,
    deterministic: bool,
    rng: &mut ChaCha8Rng,
) -> Result<(Trajectory, Vec<Transition>)> {
    score_fn.reset();
    let mut cur = env.reset(0);
    let episode_len = env.spec().episode_len as usize;
    let mut transitions = Vec::with_capacity(episode_len);
    let mut traj = Trajectory {
        states: Vec::with_capacity(episode_len + 1),
        actions: Vec::with_capacity(episode_len),
        skill: z.clone(),
        scores: Vec::with_capacity(episode_len),
    };
    traj.states.push(cur.clone());

    loop {
        let s = State::Vector(cur);
        let a = policy.act(&s, z, deterministic, rng)?;
        let (next, done) = env.step(&a)?;
        let scored = if score_fn.needs_images() {
            State::Image(env.render())
        } else {
            State::Vector(next.clone())
        };
        let score = score_fn.score(&scored)?;
        transitions.push(Transition {
            s,
            a: a.clone(),
            s_next: State::Vector(next.clone()),
            z: z.clone(),
            score,
            done,
        });
        traj.states.push(next.clone());
        traj.actions.push(a);
        traj.scores.push(score);
        cur = next;
        if done {
            break;
        }
    }
    traj.validate()?;
    Ok((traj, transitions))
}
