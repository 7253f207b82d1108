//! Cart with a tipping pole: accelerations drive cart and angle, and the
//! pole flips once |θ| crosses 1.57 radians.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::types::Image;

use super::{check_action, clip, render_tip_cart, Env, EnvSpec, EPISODE_LEN};

pub const FLIP_THRESHOLD: f64 = 1.57;

const X_BOUND: f64 = 15.0;
const V_BOUND: f64 = 1.0;
const OMEGA_BOUND: f64 = 1.0;
const V_GAIN: f64 = 0.05;
const X_GAIN: f64 = 0.1;
const OMEGA_GAIN: f64 = 0.2;
const THETA_GAIN: f64 = 0.1;

/// True iff the pole angle has passed the flip threshold. Takes the state
/// vector `[x, θ, ω, v]` so it works on stored trajectories too.
pub fn is_flipped(state: &[f64]) -> bool {
    state[1].abs() > FLIP_THRESHOLD
}

/// Wrap to [-π, π].
fn wrap_angle(theta: f64) -> f64 {
    (theta + PI).rem_euclid(2.0 * PI) - PI
}

pub struct TipCart {
    x: f64,
    theta: f64,
    omega: f64,
    v: f64,
    t: u32,
    spec: EnvSpec,
}

impl TipCart {
    pub fn new() -> Self {
        TipCart {
            x: 0.0,
            theta: 0.0,
            omega: 0.0,
            v: 0.0,
            t: 0,
            spec: EnvSpec {
                name: "tip_cart",
                state_dim: 4,
                action_dim: 2,
                episode_len: EPISODE_LEN,
                render_available: true,
            },
        }
    }
}

impl Default for TipCart {
    fn default() -> Self {
        Self::new()
    }
}

impl Env for TipCart {
    fn spec(&self) -> &EnvSpec {
        &self.spec
    }

    fn reset(&mut self, _seed: u64) -> Vec<f64> {
        self.x = 0.0;
        self.theta = 0.0;
        self.omega = 0.0;
        self.v = 0.0;
        self.t = 0;
        self.state_vec()
    }

    fn step(&mut self, action: &[f64]) -> Result<(Vec<f64>, bool)> {
        if self.t >= self.spec.episode_len {
            return Err(Error::EpisodeFinished { step: self.t });
        }
        check_action(action, self.spec.action_dim)?;
        self.v = clip(self.v + V_GAIN * action[0], -V_BOUND, V_BOUND);
        self.x = clip(self.x + X_GAIN * self.v, -X_BOUND, X_BOUND);
        self.omega = clip(self.omega + OMEGA_GAIN * action[1], -OMEGA_BOUND, OMEGA_BOUND);
        self.theta = wrap_angle(self.theta + THETA_GAIN * self.omega);
        self.t += 1;
        Ok((self.state_vec(), self.t == self.spec.episode_len))
    }

    fn state_vec(&self) -> Vec<f64> {
        vec![self.x, self.theta, self.omega, self.v]
    }

    fn render(&self) -> Image {
        render_tip_cart(self.x, self.theta)
    }

    fn steps_taken(&self) -> u32 {
        self.t
    }
}
