//! Core data types shared across collection, training, and evaluation.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const IMAGE_WIDTH: usize = 64;
pub const IMAGE_HEIGHT: usize = 64;
pub const IMAGE_CHANNELS: usize = 3;
pub const IMAGE_BYTES: usize = IMAGE_WIDTH * IMAGE_HEIGHT * IMAGE_CHANNELS;

/// 64x64 RGB frame stored row-major as `(y, x, channel)`.
#[derive(Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Image {
    data: Vec<u8>,
}

impl Image {
    pub fn new(data: Vec<u8>) -> Result<Self> {
        if data.len() != IMAGE_BYTES {
            return Err(Error::invalid(format!(
                "image must be {IMAGE_WIDTH}x{IMAGE_HEIGHT}x{IMAGE_CHANNELS} ({IMAGE_BYTES} bytes), got {}",
                data.len()
            )));
        }
        Ok(Image { data })
    }

    pub fn black() -> Self {
        Image {
            data: vec![0; IMAGE_BYTES],
        }
    }

    /// Fill with one color.
    pub fn solid(r: u8, g: u8, b: u8) -> Self {
        let mut img = Image::black();
        for y in 0..IMAGE_HEIGHT {
            for x in 0..IMAGE_WIDTH {
                img.set(y, x, [r, g, b]);
            }
        }
        img
    }

    #[inline]
    pub fn get(&self, y: usize, x: usize, c: usize) -> u8 {
        self.data[(y * IMAGE_WIDTH + x) * IMAGE_CHANNELS + c]
    }

    #[inline]
    pub fn pixel(&self, y: usize, x: usize) -> [u8; 3] {
        let base = (y * IMAGE_WIDTH + x) * IMAGE_CHANNELS;
        [self.data[base], self.data[base + 1], self.data[base + 2]]
    }

    #[inline]
    pub fn set(&mut self, y: usize, x: usize, rgb: [u8; 3]) {
        let base = (y * IMAGE_WIDTH + x) * IMAGE_CHANNELS;
        self.data[base..base + 3].copy_from_slice(&rgb);
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    /// Per-channel means over all pixels, scaled to `[0, 1]`.
    pub fn channel_means(&self) -> [f64; 3] {
        let mut sums = [0u64; 3];
        for px in self.data.chunks_exact(IMAGE_CHANNELS) {
            sums[0] += px[0] as u64;
            sums[1] += px[1] as u64;
            sums[2] += px[2] as u64;
        }
        let n = (IMAGE_WIDTH * IMAGE_HEIGHT) as f64 * 255.0;
        [
            sums[0] as f64 / n,
            sums[1] as f64 / n,
            sums[2] as f64 / n,
        ]
    }
}

impl std::fmt::Debug for Image {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Image({IMAGE_WIDTH}x{IMAGE_HEIGHT}x{IMAGE_CHANNELS})")
    }
}

/// Observation handed to networks: either the raw state vector or a rendered
/// frame, depending on the run's observation mode.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum State {
    Vector(Vec<f64>),
    Image(Image),
}

impl State {
    pub fn as_vector(&self) -> Result<&[f64]> {
        match self {
            State::Vector(v) => Ok(v),
            State::Image(_) => Err(Error::invalid("expected vector state, got image")),
        }
    }

    pub fn as_image(&self) -> Result<&Image> {
        match self {
            State::Image(img) => Ok(img),
            State::Vector(_) => Err(Error::invalid("expected image state, got vector")),
        }
    }

    pub fn is_finite(&self) -> bool {
        match self {
            State::Vector(v) => v.iter().all(|x| x.is_finite()),
            State::Image(_) => true,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            State::Vector(_) => "vector",
            State::Image(_) => "image",
        }
    }
}

/// Unit-norm skill vector conditioning the policy and the reward.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Skill(Vec<f64>);

impl Skill {
    /// Norm must already be 1 within 1e-6; `crate::rng::sample_skill` is the
    /// usual constructor.
    pub fn new(z: Vec<f64>) -> Result<Self> {
        if z.is_empty() {
            return Err(Error::invalid("skill dimension must be >= 1"));
        }
        if !z.iter().all(|x| x.is_finite()) {
            return Err(Error::invalid("skill entries must be finite"));
        }
        let norm = z.iter().map(|x| x * x).sum::<f64>().sqrt();
        if (norm - 1.0).abs() > 1e-6 {
            return Err(Error::invalid(format!(
                "skill must be unit norm, got norm {norm}"
            )));
        }
        Ok(Skill(z))
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

/// One environment step as stored in the replay buffer. `score` is the
/// value of the score function at `s_next`, frozen at collection time.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Transition {
    pub s: State,
    pub a: Vec<f64>,
    pub s_next: State,
    pub z: Skill,
    pub score: f64,
    pub done: bool,
}

impl Transition {
    pub fn validate(&self) -> Result<()> {
        if !self.s.is_finite() || !self.s_next.is_finite() {
            return Err(Error::invalid("transition states must be finite"));
        }
        if self.a.is_empty() || !self.a.iter().all(|x| x.is_finite() && x.abs() <= 1.0) {
            return Err(Error::invalid("action entries must lie in [-1, 1]"));
        }
        if !(self.score.is_finite() && (0.0..=1.0).contains(&self.score)) {
            return Err(Error::invalid(format!(
                "score must lie in [0, 1], got {}",
                self.score
            )));
        }
        Ok(())
    }
}

/// Full episode record. `states` always holds the raw state vectors, even
/// for pixel-observation runs, so evaluation can read positions directly.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Trajectory {
    pub states: Vec<Vec<f64>>,
    pub actions: Vec<Vec<f64>>,
    pub skill: Skill,
    pub scores: Vec<f64>,
}

impl Trajectory {
    /// Number of steps (`states` has one more entry than `actions`).
    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        if self.states.len() != self.actions.len() + 1 {
            return Err(Error::invalid(format!(
                "trajectory must have one more state than actions ({} states, {} actions)",
                self.states.len(),
                self.actions.len()
            )));
        }
        if self.scores.len() != self.actions.len() {
            return Err(Error::invalid("trajectory needs one score per step"));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn image_rejects_wrong_size() {
        assert!(Image::new(vec![0; 7]).is_err());
        assert!(Image::new(vec![0; IMAGE_BYTES]).is_ok());
    }

    #[test]
    fn image_channel_means_solid_color() {
        let img = Image::solid(255, 0, 0);
        let means = img.channel_means();
        assert_eq!(means, [1.0, 0.0, 0.0]);
    }

    #[test]
    fn skill_requires_unit_norm() {
        assert!(Skill::new(vec![1.0, 0.0]).is_ok());
        assert!(Skill::new(vec![1.0, 1.0]).is_err());
        assert!(Skill::new(vec![]).is_err());
        assert!(Skill::new(vec![f64::NAN]).is_err());
    }

    #[test]
    fn transition_validation_catches_bad_fields() {
        let ok = Transition {
            s: State::Vector(vec![0.0, 0.0]),
            a: vec![0.5, -0.5],
            s_next: State::Vector(vec![0.1, 0.0]),
            z: Skill::new(vec![1.0, 0.0]).unwrap(),
            score: 1.0,
            done: false,
        };
        assert!(ok.validate().is_ok());

        let mut bad = ok.clone();
        bad.score = 1.5;
        assert!(bad.validate().is_err());

        let mut bad = ok.clone();
        bad.a = vec![2.0, 0.0];
        assert!(bad.validate().is_err());

        let mut bad = ok;
        bad.s = State::Vector(vec![f64::INFINITY, 0.0]);
        assert!(bad.validate().is_err());
    }

    #[test]
    fn trajectory_shape_invariant() {
        let traj = Trajectory {
            states: vec![vec![0.0], vec![0.1], vec![0.2]],
            actions: vec![vec![1.0], vec![1.0]],
            skill: Skill::new(vec![1.0]).unwrap(),
            scores: vec![1.0, 1.0],
        };
        assert!(traj.validate().is_ok());
        assert_eq!(traj.len(), 2);

        let mut bad = traj.clone();
        bad.states.pop();
        assert!(bad.validate().is_err());
    }
}
