//! Constrained skill representation: the φ network, the distance-metric
//! registry, the score-weighted intrinsic reward, and dual gradient descent
//! on (φ, λ).
//!
//! The learner maximizes E[(φ(s′) − φ(s))ᵀz] subject to
//! ‖φ(s) − φ(s′)‖₂ ≤ d(s, s′), enforced through the penalty
//! λ · min(ε, d − ‖Δφ‖) with λ = exp(log_lambda) kept positive by
//! construction. The metric d is what separates the methods: Euclidean
//! state distance, the constant 1 for adjacent steps, or a score in
//! [0, 1] attached to the reached state.

mod phi;
mod update;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::ScalarAdam;
use crate::score::ScoreFn;
use crate::types::{Skill, State, Transition};

pub use phi::{PhiNet, PhiTape, HIDDEN_WIDTH};
pub use update::{
    phi_gradient, phi_objective, reward_batch, rewards, satisfied_fraction, DsdLearner,
    DualStepReport, PhiUpdate,
};

/// Slack width of the penalty window.
pub const EPSILON: f64 = 1e-3;

/// Initial value of the dual variable λ.
pub const LAMBDA_INIT: f64 = 30.0;

/// Learning rate shared by φ and log λ.
pub const DUAL_LR: f64 = 1e-4;

/// Distance metric applied to adjacent state pairs.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricKind {
    /// L2 distance between raw state vectors.
    Euclidean,
    /// Constant 1 for any adjacent pair.
    Temporal,
    /// Score of the reached state, in [0, 1].
    Score,
}

impl MetricKind {
    pub fn name(self) -> &'static str {
        match self {
            MetricKind::Euclidean => "euclidean",
            MetricKind::Temporal => "temporal",
            MetricKind::Score => "score",
        }
    }
}

impl std::str::FromStr for MetricKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "euclidean" => Ok(MetricKind::Euclidean),
            "temporal" => Ok(MetricKind::Temporal),
            "score" => Ok(MetricKind::Score),
            other => Err(Error::invalid(format!(
                "unknown metric `{other}`, expected euclidean, temporal, or score"
            ))),
        }
    }
}

/// A metric kind plus, for the score kind, the score function that
/// produces d(s, s′) = f(s′).
pub struct MetricSpec {
    pub kind: MetricKind,
    pub score_fn: Option<Box<dyn ScoreFn>>,
}

impl MetricSpec {
    pub fn euclidean() -> Self {
        MetricSpec {
            kind: MetricKind::Euclidean,
            score_fn: None,
        }
    }

    pub fn temporal() -> Self {
        MetricSpec {
            kind: MetricKind::Temporal,
            score_fn: None,
        }
    }

    pub fn score(f: Box<dyn ScoreFn>) -> Self {
        MetricSpec {
            kind: MetricKind::Score,
            score_fn: Some(f),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.kind == MetricKind::Score && self.score_fn.is_none() {
            return Err(Error::invalid(
                "score metric requires a bound score function",
            ));
        }
        Ok(())
    }
}

/// Distance between two adjacent states under the given metric. The score
/// kind evaluates its score function on `s_next`, so the spec is mutable.
pub fn metric_distance(spec: &mut MetricSpec, s: &State, s_next: &State) -> Result<f64> {
    match spec.kind {
        MetricKind::Euclidean => euclidean_distance(s, s_next),
        MetricKind::Temporal => Ok(1.0),
        MetricKind::Score => {
            let f = spec
                .score_fn
                .as_mut()
                .ok_or_else(|| Error::invalid("score metric requires a bound score function"))?;
            f.score(s_next)
        }
    }
}

/// Distance for a stored transition. The score kind reads the score cached
/// at collection time instead of re-running the score function.
pub fn transition_distance(kind: MetricKind, tr: &Transition) -> Result<f64> {
    match kind {
        MetricKind::Euclidean => euclidean_distance(&tr.s, &tr.s_next),
        MetricKind::Temporal => Ok(1.0),
        MetricKind::Score => Ok(tr.score),
    }
}

fn euclidean_distance(s: &State, s_next: &State) -> Result<f64> {
    for st in [s, s_next] {
        if matches!(st, State::Image(_)) {
            return Err(Error::UnsupportedMetric {
                metric: "euclidean",
                state_kind: st.kind(),
            });
        }
    }
    let (a, b) = (s.as_vector()?, s_next.as_vector()?);
    if a.len() != b.len() {
        return Err(Error::invalid(format!(
            "state dims differ: {} vs {}",
            a.len(),
            b.len()
        )));
    }
    Ok(a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt())
}

/// Directional alignment reward (φ(s′) − φ(s))ᵀz.
pub fn skill_reward<F: crate::nn::Real>(
    phi: &PhiNet<F>,
    s: &State,
    s_next: &State,
    z: &Skill,
) -> Result<f64> {
    if z.dim() != phi.out_dim() {
        return Err(Error::invalid(format!(
            "skill dim {} does not match representation dim {}",
            z.dim(),
            phi.out_dim()
        )));
    }
    let out = phi.forward(&[s, s_next])?;
    let mut r = 0.0;
    for (j, zj) in z.as_slice().iter().enumerate() {
        r += zj * (crate::nn::to_f64(out[[1, j]]) - crate::nn::to_f64(out[[0, j]]));
    }
    Ok(r)
}

/// Score-weighted intrinsic reward r = f(s′) · r_skill.
pub fn weighted_reward(score: f64, r_skill: f64) -> f64 {
    score * r_skill
}

/// d(s, s′) − ‖φ(s) − φ(s′)‖₂; positive means the constraint is satisfied.
pub fn constraint_slack<F: crate::nn::Real>(
    phi: &PhiNet<F>,
    spec: &mut MetricSpec,
    s: &State,
    s_next: &State,
) -> Result<f64> {
    let d = metric_distance(spec, s, s_next)?;
    let out = phi.forward(&[s, s_next])?;
    let mut sq = 0.0;
    for j in 0..phi.out_dim() {
        let delta = crate::nn::to_f64(out[[1, j]]) - crate::nn::to_f64(out[[0, j]]);
        sq += delta * delta;
    }
    Ok(d - sq.sqrt())
}

/// Dual variable λ and the slack width ε, with λ = exp(log_lambda) so the
/// multiplier stays positive under any gradient sequence.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DualState {
    pub log_lambda: f64,
    pub epsilon: f64,
    pub opt: ScalarAdam,
}

impl DualState {
    pub fn new() -> Self {
        DualState {
            log_lambda: LAMBDA_INIT.ln(),
            epsilon: EPSILON,
            opt: ScalarAdam::new(DUAL_LR),
        }
    }

    pub fn lambda(&self) -> f64 {
        self.log_lambda.exp()
    }
}

impl Default for DualState {
    fn default() -> Self {
        Self::new()
    }
}

/// Outcome of [`scaled_phi_check`] over a set of state pairs.
#[derive(Clone, Copy, Debug)]
pub struct ScaledPhiReport {
    pub pairs: usize,
    /// Pairs where ‖Δφ̃‖ ≤ f_const and ‖Δφ‖ ≤ 1 disagree.
    pub biconditional_failures: usize,
    /// Largest |(Δφ̃)ᵀz − f_const · (Δφ)ᵀz| observed.
    pub max_reward_deviation: f64,
}

impl ScaledPhiReport {
    pub fn holds(&self, tol: f64) -> bool {
        self.biconditional_failures == 0 && self.max_reward_deviation < tol
    }
}

/// Checks that scaling the representation by a constant score is the same
/// thing as re-weighting the reward by it: with φ̃ = f_const · φ, the
/// constraint ‖φ̃(s) − φ̃(s′)‖ ≤ f_const must hold exactly when
/// ‖φ(s) − φ(s′)‖ ≤ 1 does, and (φ̃(s′) − φ̃(s))ᵀz must equal
/// f_const · (φ(s′) − φ(s))ᵀz. Both sides are evaluated numerically.
pub fn scaled_phi_check<F: crate::nn::Real>(
    phi: &PhiNet<F>,
    f_const: f64,
    pairs: &[(State, State)],
    z: &Skill,
) -> Result<ScaledPhiReport> {
    if !(f_const.is_finite() && f_const > 0.0) {
        return Err(Error::invalid(format!(
            "constant score must be finite and positive, got {f_const}"
        )));
    }
    if z.dim() != phi.out_dim() {
        return Err(Error::invalid(format!(
            "skill dim {} does not match representation dim {}",
            z.dim(),
            phi.out_dim()
        )));
    }
    let mut states: Vec<&State> = Vec::with_capacity(2 * pairs.len());
    for (s, s_next) in pairs {
        states.push(s);
        states.push(s_next);
    }
    let out = phi.forward(&states)?;
    let d = phi.out_dim();
    let mut failures = 0usize;
    let mut max_dev = 0.0f64;
    for i in 0..pairs.len() {
        let mut base = vec![0.0f64; d];
        let mut scaled = vec![0.0f64; d];
        for j in 0..d {
            let a = crate::nn::to_f64(out[[2 * i, j]]);
            let b = crate::nn::to_f64(out[[2 * i + 1, j]]);
            base[j] = b - a;
            scaled[j] = f_const * b - f_const * a;
        }
        let base_norm = base.iter().map(|x| x * x).sum::<f64>().sqrt();
        let scaled_norm = scaled.iter().map(|x| x * x).sum::<f64>().sqrt();
        if (base_norm <= 1.0) != (scaled_norm <= f_const) {
            failures += 1;
        }
        let base_dot: f64 = base.iter().zip(z.as_slice()).map(|(x, zj)| x * zj).sum();
        let scaled_dot: f64 = scaled.iter().zip(z.as_slice()).map(|(x, zj)| x * zj).sum();
        max_dev = max_dev.max((scaled_dot - f_const * base_dot).abs());
    }
    Ok(ScaledPhiReport {
        pairs: pairs.len(),
        biconditional_failures: failures,
        max_reward_deviation: max_dev,
    })
}
