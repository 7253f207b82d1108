//! Two self-contained toy environments with deterministic dynamics and a
//! gradient-colored renderer for the pixel scoring path.

mod dump;
mod point_room;
mod region;
mod render;
mod tip_cart;

pub use dump::{
    frame_file_name, read_dump, read_frame, write_dump, write_frame, DumpRecord, EpisodeDump,
};
pub use point_room::PointRoom;
pub use region::{is_hazardous, RegionSpec};
pub use render::{render_point_room, render_tip_cart, GROUND_ROW};
pub use tip_cart::{is_flipped, TipCart, FLIP_THRESHOLD};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::Image;

pub const EPISODE_LEN: u32 = 200;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnvSpec {
    pub name: &'static str,
    pub state_dim: usize,
    pub action_dim: usize,
    pub episode_len: u32,
    pub render_available: bool,
}

/// Environment names as they appear in configs and run directories.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnvKind {
    PointRoom,
    TipCart,
}

impl EnvKind {
    pub fn name(&self) -> &'static str {
        match self {
            EnvKind::PointRoom => "point_room",
            EnvKind::TipCart => "tip_cart",
        }
    }
}

impl std::str::FromStr for EnvKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "point_room" => Ok(EnvKind::PointRoom),
            "tip_cart" => Ok(EnvKind::TipCart),
            other => Err(Error::invalid(format!(
                "unknown env `{other}` (expected point_room or tip_cart)"
            ))),
        }
    }
}

/// Deterministic toy environment. Dynamics are pure in (state, action);
/// instances are single-owner mutable objects.
pub trait Env: Send {
    fn spec(&self) -> &EnvSpec;

    /// Reset to the fixed start state. The seed is accepted for interface
    /// uniformity; neither toy env has stochastic resets.
    fn reset(&mut self, seed: u64) -> Vec<f64>;

    /// Advance one step. `done` is true exactly at step `episode_len`;
    /// stepping past that is an error.
    fn step(&mut self, action: &[f64]) -> Result<(Vec<f64>, bool)>;

    fn state_vec(&self) -> Vec<f64>;

    fn render(&self) -> Image;

    fn steps_taken(&self) -> u32;
}

pub fn make_env(kind: EnvKind) -> Box<dyn Env> {
    match kind {
        EnvKind::PointRoom => Box::new(PointRoom::new()),
        EnvKind::TipCart => Box::new(TipCart::new()),
    }
}

/// Shared action validation: right arity, finite, inside [-1, 1].
pub(crate) fn check_action(action: &[f64], dim: usize) -> Result<()> {
    if action.len() != dim {
        return Err(Error::invalid(format!(
            "action has {} entries, env expects {dim}",
            action.len()
        )));
    }
    if !action.iter().all(|a| a.is_finite() && a.abs() <= 1.0) {
        return Err(Error::invalid(format!(
            "action entries must lie in [-1, 1], got {action:?}"
        )));
    }
    Ok(())
}

pub(crate) fn clip(x: f64, lo: f64, hi: f64) -> f64 {
    x.clamp(lo, hi)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn env_specs_are_consistent() {
        for kind in [EnvKind::PointRoom, EnvKind::TipCart] {
            let mut env = make_env(kind);
            let spec = env.spec().clone();
            assert_eq!(spec.name, kind.name());
            assert_eq!(spec.episode_len, EPISODE_LEN);
            assert!(spec.render_available);
            let s = env.reset(0);
            assert_eq!(s.len(), spec.state_dim);
            let action = vec![0.0; spec.action_dim];
            let (s, done) = env.step(&action).unwrap();
            assert_eq!(s.len(), spec.state_dim);
            assert!(!done);
        }
    }

    #[test]
    fn wrong_arity_action_is_rejected() {
        let mut env = make_env(EnvKind::PointRoom);
        env.reset(0);
        assert!(env.step(&[1.0]).is_err());
        assert!(env.step(&[1.0, 2.0]).is_err());
        assert!(env.step(&[f64::NAN, 0.0]).is_err());
    }
}
