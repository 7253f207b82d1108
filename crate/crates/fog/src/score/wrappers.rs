//! Wrappers that model imperfect scoring: random flips of a binary score
//! and the every-Nth evaluation schedule that holds scores between queries.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::rng::RngState;
use crate::types::State;

use super::ScoreFn;

/// Flips the base's binary output with probability `b` per fresh call.
pub struct NoisyScore {
    base: Box<dyn ScoreFn>,
    b: f64,
    rng: ChaCha8Rng,
    levels: [f64; 2],
}

impl NoisyScore {
    pub fn new(base: Box<dyn ScoreFn>, b: f64, rng: ChaCha8Rng) -> Result<Self> {
        if !(0.0..=1.0).contains(&b) {
            return Err(Error::invalid(format!(
                "flip probability must be in [0,1], got {b}"
            )));
        }
        let levels = base.binary_levels().ok_or_else(|| {
            Error::ScoreSpec("noise injection needs a binary-valued base score".into())
        })?;
        Ok(NoisyScore {
            base,
            b,
            rng,
            levels,
        })
    }
}

impl ScoreFn for NoisyScore {
    fn score(&mut self, state: &State) -> Result<f64> {
        let v = self.base.score(state)?;
        if self.rng.random::<f64>() < self.b {
            let [lo, hi] = self.levels;
            Ok(if v == hi { lo } else { hi })
        } else {
            Ok(v)
        }
    }

    fn reset(&mut self) {
        self.base.reset();
    }

    fn binary_levels(&self) -> Option<[f64; 2]> {
        Some(self.levels)
    }

    fn needs_images(&self) -> bool {
        self.base.needs_images()
    }

    fn rng_state(&self) -> Option<RngState> {
        Some(RngState::capture(&self.rng))
    }

    fn set_rng_state(&mut self, state: &RngState) {
        self.rng = state.restore();
    }
}

/// Evaluates the base at steps 0, N, 2N, ... of each trajectory and holds
/// the value in between, so a length-T rollout costs ceil(T/N) base calls.
pub struct SkippedScore {
    base: Box<dyn ScoreFn>,
    n: usize,
    step: usize,
    held: f64,
}

impl SkippedScore {
    pub fn new(base: Box<dyn ScoreFn>, n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::invalid("skip interval must be >= 1"));
        }
        Ok(SkippedScore {
            base,
            n,
            step: 0,
            held: 0.0,
        })
    }
}

impl ScoreFn for SkippedScore {
    fn score(&mut self, state: &State) -> Result<f64> {
        if self.step % self.n == 0 {
            self.held = self.base.score(state)?;
        }
        self.step += 1;
        Ok(self.held)
    }

    fn reset(&mut self) {
        self.step = 0;
        self.base.reset();
    }

    fn binary_levels(&self) -> Option<[f64; 2]> {
        self.base.binary_levels()
    }

    fn needs_images(&self) -> bool {
        self.base.needs_images()
    }

    fn rng_state(&self) -> Option<RngState> {
        self.base.rng_state()
    }

    fn set_rng_state(&mut self, state: &RngState) {
        self.base.set_rng_state(state);
    }
}
