//! Versioned binary checkpoints: everything a run needs to resume bit for
//! bit, written atomically so a crash never leaves a torn file.
//!
//! Layout: 8-byte magic, little-endian u32 version, then one serialized
//! body. The body carries the full config (plus its hash, checked on
//! load), both learners with optimizer state, the replay buffer, and the
//! position of every random stream including the score noise stream.
//! Environment state is deliberately absent: episodes always start from
//! `reset`, so there is nothing mid-flight at an epoch boundary.

use std::fs;
use std::path::Path;
use std::sync::atomic::AtomicU64;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{CountingEmbedder, Method, SacLearner, TrainConfig, Trainer};
use crate::dsd::DsdLearner;
use crate::embed::Embedder;
use crate::envs::make_env;
use crate::error::{Error, Result};
use crate::replay::ReplayBuffer;
use crate::rng::{stream, RngState, StreamId};
use crate::score::build_score_fn;
use crate::types::Transition;

const MAGIC: [u8; 8] = *b"FOGCKPT\0";
const VERSION: u32 = 1;
const HEADER_LEN: usize = MAGIC.len() + 4;

#[derive(Serialize, Deserialize)]
struct CheckpointBody {
    config: TrainConfig,
    config_hash: [u8; 32],
    epoch: u32,
    sac: SacLearner<f32>,
    dsd: Option<DsdLearner<f32>>,
    buffer: Vec<Transition>,
    buffer_capacity: usize,
    rng_skill: RngState,
    rng_action: RngState,
    rng_buffer: RngState,
    score_rng: Option<RngState>,
    embed_calls: u64,
}

/// SHA-256 over the config's canonical JSON form.
pub fn config_hash(cfg: &TrainConfig) -> Result<[u8; 32]> {
    let json = serde_json::to_vec(cfg)
        .map_err(|e| Error::Checkpoint(format!("config does not serialize: {e}")))?;
    let mut h = Sha256::new();
    h.update(&json);
    Ok(h.finalize().into())
}

impl Trainer {
    /// Write the full run state. The file appears atomically: the bytes go
    /// to a sibling temp file first and replace the target by rename.
    pub fn save_checkpoint(&self, path: &Path) -> Result<()> {
        let body = CheckpointBody {
            config: self.cfg.clone(),
            config_hash: config_hash(&self.cfg)?,
            epoch: self.epoch,
            sac: self.sac.clone(),
            dsd: self.dsd.clone(),
            buffer: self.buffer.iter().cloned().collect(),
            buffer_capacity: self.buffer.capacity(),
            rng_skill: RngState::capture(&self.rng_skill),
            rng_action: RngState::capture(&self.rng_action),
            rng_buffer: RngState::capture(&self.rng_buffer),
            score_rng: self.score_fn.rng_state(),
            embed_calls: self.embedder_calls(),
        };
        let mut bytes = Vec::from(MAGIC);
        bytes.extend_from_slice(&VERSION.to_le_bytes());
        bincode::serialize_into(&mut bytes, &body)
            .map_err(|e| Error::Checkpoint(format!("serialization failed: {e}")))?;

        let tmp = path.with_extension("tmp");
        fs::write(&tmp, &bytes).map_err(|e| Error::io(&tmp, e))?;
        fs::rename(&tmp, path).map_err(|e| Error::io(path, e))?;
        Ok(())
    }
}

/// Rebuild a trainer from a checkpoint. The embedder is the one external
/// resource a checkpoint cannot carry; pass the same kind the run was
/// started with (None when the score mode needs none).
pub fn load_trainer(path: &Path, embedder: Option<Arc<dyn Embedder>>) -> Result<Trainer> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.len() < HEADER_LEN || bytes[..MAGIC.len()] != MAGIC {
        return Err(Error::Checkpoint(format!(
            "{} is not a checkpoint file",
            path.display()
        )));
    }
    let version = u32::from_le_bytes(bytes[MAGIC.len()..HEADER_LEN].try_into().expect("4 bytes"));
    if version != VERSION {
        return Err(Error::Checkpoint(format!(
            "unsupported checkpoint version {version} (this build reads {VERSION})"
        )));
    }
    let body: CheckpointBody = bincode::deserialize(&bytes[HEADER_LEN..])
        .map_err(|e| Error::Checkpoint(format!("body does not parse: {e}")))?;
    if body.config_hash != config_hash(&body.config)? {
        return Err(Error::Checkpoint(
            "embedded config does not match its hash".into(),
        ));
    }
    body.config.validate()?;
    if (body.config.method == Method::FrSac) != body.dsd.is_none() {
        return Err(Error::Checkpoint(
            "method and representation presence disagree".into(),
        ));
    }

    let embed_calls = Arc::new(AtomicU64::new(body.embed_calls));
    let counted: Option<Arc<dyn Embedder>> = embedder.map(|inner| {
        Arc::new(CountingEmbedder::new(inner, Arc::clone(&embed_calls))) as Arc<dyn Embedder>
    });
    let mut score_fn = build_score_fn(
        &body.config.score,
        counted,
        stream(body.config.seed, StreamId::Noise),
    )?;
    if let Some(rs) = &body.score_rng {
        score_fn.set_rng_state(rs);
    }

    let mut buffer = ReplayBuffer::new(body.buffer_capacity)?;
    for tr in body.buffer {
        buffer.push(tr)?;
    }

    let mut trainer = Trainer {
        env: make_env(body.config.env),
        sac: body.sac,
        dsd: body.dsd,
        buffer,
        score_fn,
        embed_calls,
        rng_skill: body.rng_skill.restore(),
        rng_action: body.rng_action.restore(),
        rng_buffer: body.rng_buffer.restore(),
        epoch: body.epoch,
        cfg: body.config,
        checkpoint_dir: None,
    };
    trainer.set_checkpoint_dir(None);
    Ok(trainer)
}
