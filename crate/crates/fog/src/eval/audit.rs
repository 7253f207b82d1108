//! Offline re-scoring of dumped episodes: run a configured score function
//! over every recorded step and compare the score levels on well-behaved
//! versus misbehaving episodes.

use std::path::Path;

use serde::Serialize;

use crate::envs::{is_flipped, read_frame, EpisodeDump};
use crate::error::{Error, Result};
use crate::score::ScoreFn;
use crate::types::State;

/// Scores of one dumped episode, step-indexed, with its ground-truth
/// label. Cart episodes are misaligned when any recorded state is flipped;
/// room dumps have no intrinsic misbehavior and land in the aligned
/// bucket.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EpisodeAudit {
    pub scores: Vec<(u32, f64)>,
    pub misaligned: bool,
}

impl EpisodeAudit {
    pub fn mean_score(&self) -> f64 {
        if self.scores.is_empty() {
            return 0.0;
        }
        self.scores.iter().map(|(_, s)| s).sum::<f64>() / self.scores.len() as f64
    }
}

/// Per-episode score series plus the aligned/misaligned summary means.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AuditReport {
    pub episodes: Vec<EpisodeAudit>,
    pub aligned_mean: Option<f64>,
    pub misaligned_mean: Option<f64>,
}

fn label_misaligned(dump: &EpisodeDump) -> bool {
    dump.states().any(|s| s.len() == 4 && is_flipped(s))
}

/// Re-score dumped episodes step by step. Image-based scorers read PNG
/// frames from `frames_dir` using the shared frame naming; a missing frame
/// or a missing directory is an invalid argument, never a silent skip.
pub fn audit_scores(
    episodes: &[EpisodeDump],
    frames_dir: Option<&Path>,
    score_fn: &mut dyn ScoreFn,
) -> Result<AuditReport> {
    if episodes.is_empty() {
        return Err(Error::invalid("audit needs at least one episode"));
    }
    let mut audits = Vec::with_capacity(episodes.len());
    for (ep_idx, dump) in episodes.iter().enumerate() {
        score_fn.reset();
        let mut scores = Vec::with_capacity(dump.len());
        for rec in &dump.records {
            let state = if score_fn.needs_images() {
                let dir = frames_dir.ok_or_else(|| {
                    Error::invalid(
                        "score function needs images but the dump has no frame directory",
                    )
                })?;
                State::Image(read_frame(dir, ep_idx, rec.t)?)
            } else {
                State::Vector(rec.state_vec.clone())
            };
            scores.push((rec.t, score_fn.score(&state)?));
        }
        audits.push(EpisodeAudit {
            scores,
            misaligned: label_misaligned(dump),
        });
    }

    let bucket_mean = |want: bool| -> Option<f64> {
        let picked: Vec<&EpisodeAudit> =
            audits.iter().filter(|a| a.misaligned == want).collect();
        if picked.is_empty() {
            return None;
        }
        Some(picked.iter().map(|a| a.mean_score()).sum::<f64>() / picked.len() as f64)
    };
    Ok(AuditReport {
        aligned_mean: bucket_mean(false),
        misaligned_mean: bucket_mean(true),
        episodes: audits,
    })
}
