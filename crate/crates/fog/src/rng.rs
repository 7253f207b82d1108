//! Seed-derived random streams.
//!
//! Every source of randomness in a run draws from a named stream derived
//! from the run seed, so a `(config, seed)` pair fixes the entire process
//! bit for bit. Streams advance independently; saving and restoring their
//! positions is enough to resume a run deterministically.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::Skill;

/// Stream indices; the numeric values are part of the checkpoint format.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StreamId {
    Skill = 0,
    Action = 1,
    Buffer = 2,
    Noise = 3,
    Init = 4,
    Eval = 5,
    Goal = 6,
}

pub fn stream(seed: u64, id: StreamId) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id as u64);
    rng
}

/// Serializable snapshot of one generator's position.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RngState {
    pub seed: [u8; 32],
    pub stream: u64,
    pub word_pos: u128,
}

impl RngState {
    pub fn capture(rng: &ChaCha8Rng) -> Self {
        RngState {
            seed: rng.get_seed(),
            stream: rng.get_stream(),
            word_pos: rng.get_word_pos(),
        }
    }

    pub fn restore(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::from_seed(self.seed);
        rng.set_stream(self.stream);
        rng.set_word_pos(self.word_pos);
        rng
    }
}

/// Draw a skill uniformly on the unit sphere in `R^dim` (a standard normal
/// vector, normalized).
pub fn sample_skill(dim: usize, rng: &mut ChaCha8Rng) -> Result<Skill> {
    if dim == 0 {
        return Err(Error::invalid("skill dimension must be >= 1"));
    }
    loop {
        let z: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
        let norm = z.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-12 {
            let z = z.iter().map(|x| x / norm).collect();
            return Skill::new(z);
        }
    }
}
