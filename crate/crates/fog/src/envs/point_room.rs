//! Bounded 2-D room: the agent moves its position directly.

use crate::error::{Error, Result};
use crate::types::Image;

use super::{check_action, clip, render_point_room, Env, EnvSpec, EPISODE_LEN};

pub const POS_BOUND: f64 = 15.0;
const STEP_SIZE: f64 = 0.1;

pub struct PointRoom {
    x: f64,
    y: f64,
    t: u32,
    spec: EnvSpec,
}

impl PointRoom {
    pub fn new() -> Self {
        PointRoom {
            x: 0.0,
            y: 0.0,
            t: 0,
            spec: EnvSpec {
                name: "point_room",
                state_dim: 2,
                action_dim: 2,
                episode_len: EPISODE_LEN,
                render_available: true,
            },
        }
    }

    pub fn pos(&self) -> (f64, f64) {
        (self.x, self.y)
    }
}

impl Default for PointRoom {
    fn default() -> Self {
        Self::new()
    }
}

impl Env for PointRoom {
    fn spec(&self) -> &EnvSpec {
        &self.spec
    }

    fn reset(&mut self, _seed: u64) -> Vec<f64> {
        self.x = 0.0;
        self.y = 0.0;
        self.t = 0;
        self.state_vec()
    }

    fn step(&mut self, action: &[f64]) -> Result<(Vec<f64>, bool)> {
        if self.t >= self.spec.episode_len {
            return Err(Error::EpisodeFinished { step: self.t });
        }
        check_action(action, self.spec.action_dim)?;
        self.x = clip(self.x + STEP_SIZE * action[0], -POS_BOUND, POS_BOUND);
        self.y = clip(self.y + STEP_SIZE * action[1], -POS_BOUND, POS_BOUND);
        self.t += 1;
        Ok((self.state_vec(), self.t == self.spec.episode_len))
    }

    fn state_vec(&self) -> Vec<f64> {
        vec![self.x, self.y]
    }

    fn render(&self) -> Image {
        render_point_room(self.x, self.y)
    }

    fn steps_taken(&self) -> u32 {
        self.t
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reset_starts_at_origin() {
        let mut env = PointRoom::new();
        assert_eq!(env.reset(3), vec![0.0, 0.0]);
        assert_eq!(env.reset(99), vec![0.0, 0.0]);
    }

    #[test]
    fn step_moves_by_tenth_of_action() {
        let mut env = PointRoom::new();
        env.reset(0);
        let (s, done) = env.step(&[1.0, 0.0]).unwrap();
        assert_eq!(s, vec![0.1, 0.0]);
        assert!(!done);
    }

    #[test]
    fn position_clips_at_boundary() {
        let mut env = PointRoom::new();
        env.reset(0);
        env.x = POS_BOUND;
        let (s, _) = env.step(&[1.0, 0.0]).unwrap();
        assert_eq!(s, vec![POS_BOUND, 0.0]);
    }

    #[test]
    fn done_exactly_at_episode_len_then_error() {
        let mut env = PointRoom::new();
        env.reset(0);
        for t in 1..=EPISODE_LEN {
            let (_, done) = env.step(&[0.1, -0.1]).unwrap();
            assert_eq!(done, t == EPISODE_LEN);
        }
        assert!(matches!(
            env.step(&[0.0, 0.0]),
            Err(Error::EpisodeFinished { step: EPISODE_LEN })
        ));
    }

    #[test]
    fn positions_never_leave_bounds_under_random_actions() {
        use rand::Rng;

        use crate::rng::{stream, StreamId};
        let mut rng = stream(11, StreamId::Eval);
        let mut env = PointRoom::new();
        env.reset(0);
        for _ in 0..5_000 {
            if env.steps_taken() == EPISODE_LEN {
                env.reset(0);
            }
            let a = [rng.random_range(-1.0..=1.0), rng.random_range(-1.0..=1.0)];
            let (s, _) = env.step(&a).unwrap();
            assert!(s[0].abs() <= POS_BOUND && s[1].abs() <= POS_BOUND);
        }
    }

    #[test]
    fn replaying_an_action_log_reproduces_the_trajectory_bitwise() {
        use rand::Rng;

        use crate::rng::{stream, StreamId};
        let mut rng = stream(5, StreamId::Eval);
        let log: Vec<[f64; 2]> = (0..EPISODE_LEN)
            .map(|_| [rng.random_range(-1.0..=1.0), rng.random_range(-1.0..=1.0)])
            .collect();

        let run = |log: &[[f64; 2]]| -> Vec<Vec<f64>> {
            let mut env = PointRoom::new();
            let mut states = vec![env.reset(0)];
            for a in log {
                states.push(env.step(a).unwrap().0);
            }
            states
        };
        assert_eq!(run(&log), run(&log));
    }
}
