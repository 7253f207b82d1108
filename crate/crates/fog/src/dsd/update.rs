//! Dual gradient descent on the representation φ and the multiplier λ.
//!
//! One round maximizes J(φ) = E[(φ(s′) − φ(s))ᵀz] + λ·E[min(ε, d − ‖Δφ‖)]
//! over φ with λ fixed, then minimizes λ·E[min(ε, d − ‖Δφ‖)] over λ with φ
//! fixed. Both halves of a round read the same pre-update parameters, so
//! the two gradients are computed from a single forward pass.

use ndarray::Array2;

use super::{transition_distance, DualState, MetricKind, PhiNet};
use crate::error::{Error, Result};
use crate::nn::{cast, to_f64, Adam, AdamConfig, DenseParams, Real};
use crate::types::{State, Transition};

/// Diagnostic terms from one φ update, both averaged over the batch.
#[derive(Clone, Copy, Debug)]
pub struct PhiUpdate {
    /// E[(φ(s′) − φ(s))ᵀz], the directional alignment being maximized.
    pub alignment: f64,
    /// λ·E[min(ε, slack)], the penalty term at pre-update parameters.
    pub penalty: f64,
}

/// Diagnostics from one fused (φ, λ) round.
#[derive(Clone, Copy, Debug)]
pub struct DualStepReport {
    pub phi: PhiUpdate,
    /// E[min(ε, slack)] at pre-update parameters.
    pub mean_min_slack: f64,
    /// λ after the round.
    pub lambda: f64,
}

/// Per-batch quantities shared by the φ and λ gradients.
struct BatchStats {
    /// φ(s′) − φ(s) per transition, in f64.
    deltas: Vec<Vec<f64>>,
    norms: Vec<f64>,
    slacks: Vec<f64>,
    alignment: f64,
    mean_min: f64,
}

fn stack_states<'a>(batch: &[&'a Transition]) -> Vec<&'a State> {
    batch
        .iter()
        .map(|t| &t.s)
        .chain(batch.iter().map(|t| &t.s_next))
        .collect()
}

fn batch_stats<F: Real>(
    out: &Array2<F>,
    batch: &[&Transition],
    kind: MetricKind,
    epsilon: f64,
) -> Result<BatchStats> {
    let n = batch.len();
    let d = out.ncols();
    let mut deltas = Vec::with_capacity(n);
    let mut norms = Vec::with_capacity(n);
    let mut slacks = Vec::with_capacity(n);
    let mut alignment = 0.0;
    let mut mean_min = 0.0;
    for (i, tr) in batch.iter().enumerate() {
        if tr.z.dim() != d {
            return Err(Error::invalid(format!(
                "skill dim {} does not match representation dim {d}",
                tr.z.dim()
            )));
        }
        let mut delta = vec![0.0f64; d];
        let mut norm_sq = 0.0;
        let mut align = 0.0;
        for j in 0..d {
            let v = to_f64(out[[n + i, j]]) - to_f64(out[[i, j]]);
            delta[j] = v;
            norm_sq += v * v;
            align += v * tr.z.as_slice()[j];
        }
        let norm = norm_sq.sqrt();
        let slack = transition_distance(kind, tr)? - norm;
        alignment += align;
        mean_min += slack.min(epsilon);
        deltas.push(delta);
        norms.push(norm);
        slacks.push(slack);
    }
    let scale = 1.0 / n as f64;
    Ok(BatchStats {
        deltas,
        norms,
        slacks,
        alignment: alignment * scale,
        mean_min: mean_min * scale,
    })
}

/// The φ objective J at the current parameters. Positive contributions are
/// good: training ascends this value.
pub fn phi_objective<F: Real>(
    phi: &PhiNet<F>,
    dual: &DualState,
    kind: MetricKind,
    batch: &[&Transition],
) -> Result<f64> {
    if batch.is_empty() {
        return Err(Error::invalid("batch must be nonempty"));
    }
    let out = phi.forward(&stack_states(batch))?;
    let stats = batch_stats(&out, batch, kind, dual.epsilon)?;
    Ok(stats.alignment + dual.lambda() * stats.mean_min)
}

/// Gradient of the descent loss −J with respect to every φ parameter,
/// plus the diagnostic terms of J itself. Where the penalty is saturated
/// (slack ≥ ε) it contributes no gradient; where ‖Δφ‖ = 0 the norm term
/// takes subgradient zero.
pub fn phi_gradient<F: Real>(
    phi: &PhiNet<F>,
    dual: &DualState,
    kind: MetricKind,
    batch: &[&Transition],
) -> Result<(Vec<DenseParams<F>>, PhiUpdate)> {
    if batch.is_empty() {
        return Err(Error::invalid("batch must be nonempty"));
    }
    let (out, tape) = phi.forward_tape(&stack_states(batch))?;
    let stats = batch_stats(&out, batch, kind, dual.epsilon)?;
    let lambda = dual.lambda();
    let n = batch.len();
    let d = out.ncols();
    let scale = 1.0 / n as f64;
    let mut d_out = Array2::<F>::zeros((2 * n, d));
    for (i, tr) in batch.iter().enumerate() {
        let active = stats.slacks[i] < dual.epsilon && stats.norms[i] > 0.0;
        for j in 0..d {
            let mut g = tr.z.as_slice()[j];
            if active {
                g -= lambda * stats.deltas[i][j] / stats.norms[i];
            }
            g *= scale;
            d_out[[i, j]] = cast(g);
            d_out[[n + i, j]] = cast(-g);
        }
    }
    let grads = phi.backward(&tape, &d_out);
    if !grads.iter().all(|g| g.is_finite()) {
        return Err(Error::TrainingDivergence(
            "non-finite gradient in representation update".into(),
        ));
    }
    let diag = PhiUpdate {
        alignment: stats.alignment,
        penalty: lambda * stats.mean_min,
    };
    if !(diag.alignment.is_finite() && diag.penalty.is_finite()) {
        return Err(Error::TrainingDivergence(format!(
            "non-finite representation objective: alignment {}, penalty {}",
            diag.alignment, diag.penalty
        )));
    }
    Ok((grads, diag))
}

/// Score-weighted intrinsic rewards r_i = f(s′_i) · (Δφ_i)ᵀz_i for a batch,
/// using the scores cached on the transitions.
pub fn rewards<F: Real>(phi: &PhiNet<F>, batch: &[&Transition]) -> Result<Vec<f64>> {
    reward_batch(phi, batch).map(|(rs, _)| rs)
}

/// Weighted rewards plus the mean unweighted alignment (Δφ)ᵀz, sharing a
/// single φ forward.
pub fn reward_batch<F: Real>(
    phi: &PhiNet<F>,
    batch: &[&Transition],
) -> Result<(Vec<f64>, f64)> {
    if batch.is_empty() {
        return Err(Error::invalid("batch must be nonempty"));
    }
    let out = phi.forward(&stack_states(batch))?;
    let n = batch.len();
    let d = out.ncols();
    let mut rs = Vec::with_capacity(n);
    let mut align_sum = 0.0;
    for (i, tr) in batch.iter().enumerate() {
        if tr.z.dim() != d {
            return Err(Error::invalid(format!(
                "skill dim {} does not match representation dim {d}",
                tr.z.dim()
            )));
        }
        let mut align = 0.0;
        for j in 0..d {
            align += (to_f64(out[[n + i, j]]) - to_f64(out[[i, j]])) * tr.z.as_slice()[j];
        }
        align_sum += align;
        rs.push(super::weighted_reward(tr.score, align));
    }
    Ok((rs, align_sum / n as f64))
}

/// Fraction of transitions whose latent step fits the metric within `tol`:
/// ‖φ(s) − φ(s′)‖ ≤ d(s, s′) + tol.
pub fn satisfied_fraction<F: Real>(
    phi: &PhiNet<F>,
    kind: MetricKind,
    batch: &[&Transition],
    tol: f64,
) -> Result<f64> {
    if batch.is_empty() {
        return Err(Error::invalid("batch must be nonempty"));
    }
    let out = phi.forward(&stack_states(batch))?;
    let stats = batch_stats(&out, batch, kind, f64::INFINITY)?;
    let ok = stats.slacks.iter().filter(|&&s| s >= -tol).count();
    Ok(ok as f64 / batch.len() as f64)
}

/// Owns φ, its optimizer, and the dual state for one training run.
#[derive(Clone, Debug, serde::Serialize, serde::Deserialize)]
pub struct DsdLearner<F: Real> {
    pub phi: PhiNet<F>,
    pub dual: DualState,
    opt: Adam<F>,
    kind: MetricKind,
}

impl<F: Real> DsdLearner<F> {
    pub fn new(phi: PhiNet<F>, kind: MetricKind, lr: f64) -> Self {
        let opt = Adam::new_refs(AdamConfig::with_lr(lr), &phi.params());
        DsdLearner {
            phi,
            dual: DualState::new(),
            opt,
            kind,
        }
    }

    pub fn kind(&self) -> MetricKind {
        self.kind
    }

    pub fn optimizer(&self) -> &Adam<F> {
        &self.opt
    }

    pub fn optimizer_mut(&mut self) -> &mut Adam<F> {
        &mut self.opt
    }

    /// One gradient-ascent step on φ with λ fixed.
    pub fn update_phi(&mut self, batch: &[&Transition]) -> Result<PhiUpdate> {
        let (grads, diag) = phi_gradient(&self.phi, &self.dual, self.kind, batch)?;
        self.apply_phi(&grads);
        Ok(diag)
    }

    /// One descent step on log λ with φ fixed. If the batch violates the
    /// constraint on average (E[min(ε, slack)] < 0) λ grows; once every
    /// slack saturates at ε it shrinks. Returns the new λ.
    pub fn update_lambda(&mut self, batch: &[&Transition]) -> Result<f64> {
        if batch.is_empty() {
            return Err(Error::invalid("batch must be nonempty"));
        }
        let out = self.phi.forward(&stack_states(batch))?;
        let stats = batch_stats(&out, batch, self.kind, self.dual.epsilon)?;
        self.apply_lambda(stats.mean_min)?;
        Ok(self.dual.lambda())
    }

    /// One full dual round from a single forward pass: both gradients are
    /// taken at the pre-update (φ, λ), then applied together.
    pub fn dual_step(&mut self, batch: &[&Transition]) -> Result<DualStepReport> {
        let (grads, diag) = phi_gradient(&self.phi, &self.dual, self.kind, batch)?;
        let mean_min = if self.dual.lambda() > 0.0 {
            diag.penalty / self.dual.lambda()
        } else {
            0.0
        };
        self.apply_phi(&grads);
        self.apply_lambda(mean_min)?;
        Ok(DualStepReport {
            phi: diag,
            mean_min_slack: mean_min,
            lambda: self.dual.lambda(),
        })
    }

    fn apply_phi(&mut self, grads: &[DenseParams<F>]) {
        let grefs: Vec<&DenseParams<F>> = grads.iter().collect();
        let mut params = self.phi.params_mut();
        self.opt.step_refs(&mut params, &grefs);
    }

    fn apply_lambda(&mut self, mean_min: f64) -> Result<()> {
        let grad = self.dual.lambda() * mean_min;
        if !grad.is_finite() {
            return Err(Error::TrainingDivergence(format!(
                "non-finite dual gradient {grad}"
            )));
        }
        self.dual.opt.step(&mut self.dual.log_lambda, grad);
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{sample_skill, stream, StreamId};
    use crate::types::Skill;
    use rand::Rng;
    use rand_chacha::ChaCha8Rng;

    /// Relative error with an absolute floor of 1e-6. The floor absorbs
    /// central-difference noise (about ulp(J)/h ≈ 1e-10 here) on parameters
    /// whose true gradient is a structural zero, such as the last-layer
    /// bias, which cancels in φ(s′) − φ(s).
    fn relative_error(a: f64, b: f64) -> f64 {
        (a - b).abs() / (a.abs() + b.abs()).max(1e-6)
    }

    fn transition(s: &[f64], s_next: &[f64], z: Skill, score: f64) -> Transition {
        Transition {
            s: State::Vector(s.to_vec()),
            a: vec![0.0],
            s_next: State::Vector(s_next.to_vec()),
            z,
            score,
            done: false,
        }
    }

    fn random_batch(
        n: usize,
        dim: usize,
        skill_dim: usize,
        rng: &mut ChaCha8Rng,
    ) -> Vec<Transition> {
        (0..n)
            .map(|_| {
                let s: Vec<f64> = (0..dim).map(|_| rng.random_range(-2.0..2.0)).collect();
                let s_next: Vec<f64> = (0..dim).map(|_| rng.random_range(-2.0..2.0)).collect();
                let z = sample_skill(skill_dim, rng).unwrap();
                let score = rng.random_range(0.0..1.0);
                transition(&s, &s_next, z, score)
            })
            .collect()
    }

    fn refs(batch: &[Transition]) -> Vec<&Transition> {
        batch.iter().collect()
    }

    /// Reads and writes the k-th scalar parameter of a net whose layers
    /// are all dense, counting weights before biases within each layer.
    fn param_mut<'a>(phi: &'a mut PhiNet<f64>, k: usize) -> &'a mut f64 {
        let mut idx = k;
        for p in phi.params_mut() {
            let nw = p.w.len();
            if idx < nw {
                return p.w.as_slice_mut().unwrap().get_mut(idx).unwrap();
            }
            idx -= nw;
            if idx < p.b.len() {
                return p.b.as_slice_mut().unwrap().get_mut(idx).unwrap();
            }
            idx -= p.b.len();
        }
        panic!("parameter index {k} out of range");
    }

    fn grad_entry(grads: &[DenseParams<f64>], k: usize) -> f64 {
        let mut idx = k;
        for g in grads {
            let nw = g.w.len();
            if idx < nw {
                return g.w.as_slice().unwrap()[idx];
            }
            idx -= nw;
            if idx < g.b.len() {
                return g.b.as_slice().unwrap()[idx];
            }
            idx -= g.b.len();
        }
        panic!("gradient index {k} out of range");
    }

    /// Central finite differences against the analytic gradient on the
    /// 4-parameter toy net (one linear layer, 3 inputs, 1 output), over
    /// random batches that mix all three metrics. The objective's min-kink
    /// makes finite differences invalid when a slack lands within h of ε,
    /// so such batches are resampled.
    #[test]
    fn analytic_gradient_matches_finite_differences() {
        const H: f64 = 1e-5;
        let mut rng = stream(11, StreamId::Init);
        let mut phi = PhiNet::<f64>::vector(3, &[], 1, &mut rng);
        assert_eq!(phi.param_count(), 4);
        let dual = DualState::new();
        let kinds = [MetricKind::Temporal, MetricKind::Euclidean, MetricKind::Score];

        let mut checked = 0usize;
        let mut attempts = 0usize;
        while checked < 100 {
            attempts += 1;
            assert!(attempts < 2000, "could not find enough kink-free batches");
            let batch = random_batch(32, 3, 1, &mut rng);
            let kind = kinds[checked % kinds.len()];
            let brefs = refs(&batch);

            let out = phi.forward(&stack_states(&brefs)).unwrap();
            let stats = batch_stats(&out, &brefs, kind, dual.epsilon).unwrap();
            let near_kink = stats
                .slacks
                .iter()
                .zip(&stats.norms)
                .any(|(&s, &n)| (s - dual.epsilon).abs() < 5e-4 || n < 1e-6);
            if near_kink {
                continue;
            }

            let (grads, _) = phi_gradient(&phi, &dual, kind, &brefs).unwrap();
            for k in 0..4 {
                let base = *param_mut(&mut phi, k);
                *param_mut(&mut phi, k) = base + H;
                let plus = phi_objective(&phi, &dual, kind, &brefs).unwrap();
                *param_mut(&mut phi, k) = base - H;
                let minus = phi_objective(&phi, &dual, kind, &brefs).unwrap();
                *param_mut(&mut phi, k) = base;
                let fd = (plus - minus) / (2.0 * H);
                let analytic = -grad_entry(&grads, k);
                assert!(
                    relative_error(fd, analytic) < 1e-3,
                    "param {k}: fd {fd} vs analytic {analytic} under {kind:?}"
                );
            }
            checked += 1;
        }
    }

    #[test]
    fn saturated_penalty_contributes_no_gradient() {
        // A zero net keeps Δφ = 0, so temporal slack is 1 ≥ ε everywhere:
        // the penalty sits at its cap λ·ε and only the alignment term can
        // produce gradient. Two very different λ values must then yield
        // bitwise-identical gradients.
        let mut rng = stream(12, StreamId::Init);
        let mut phi = PhiNet::<f64>::vector(3, &[], 2, &mut rng);
        for p in phi.params_mut() {
            p.w.fill(0.0);
            p.b.fill(0.0);
        }
        let batch = random_batch(16, 3, 2, &mut rng);
        let brefs = refs(&batch);

        let mut small = DualState::new();
        small.log_lambda = 0.1f64.ln();
        let mut large = DualState::new();
        large.log_lambda = 1000.0f64.ln();

        let (g_small, d_small) =
            phi_gradient(&phi, &small, MetricKind::Temporal, &brefs).unwrap();
        let (g_large, d_large) =
            phi_gradient(&phi, &large, MetricKind::Temporal, &brefs).unwrap();

        let rel = |a: f64, b: f64| (a - b).abs() / b.abs();
        assert!(rel(d_small.penalty, small.lambda() * small.epsilon) < 1e-12);
        assert!(rel(d_large.penalty, large.lambda() * large.epsilon) < 1e-12);
        for (a, b) in g_small.iter().zip(&g_large) {
            assert_eq!(a.w, b.w);
            assert_eq!(a.b, b.b);
        }
    }

    #[test]
    fn updates_shrink_violation_on_a_fixed_batch() {
        let mut rng = stream(13, StreamId::Init);
        let mut phi = PhiNet::<f64>::vector(2, &[], 2, &mut rng);
        // Inflate the weights so every latent step far exceeds the
        // temporal budget of 1.
        for p in phi.params_mut() {
            p.w.mapv_inplace(|w| w * 40.0);
        }
        let batch = random_batch(32, 2, 2, &mut rng);
        let brefs = refs(&batch);
        let mut learner = DsdLearner::new(phi, MetricKind::Temporal, 1e-2);

        let violation = |phi: &PhiNet<f64>| -> f64 {
            let out = phi.forward(&stack_states(&brefs)).unwrap();
            let stats = batch_stats(&out, &brefs, MetricKind::Temporal, 1e-3).unwrap();
            stats.slacks.iter().map(|s| (-s).max(0.0)).sum::<f64>() / brefs.len() as f64
        };

        let before = violation(&learner.phi);
        assert!(before > 1.0, "batch should start in violation, got {before}");
        for _ in 0..100 {
            learner.update_phi(&brefs).unwrap();
        }
        let after = violation(&learner.phi);
        assert!(
            after < before,
            "violation should fall within 100 steps: {before} -> {after}"
        );
    }

    #[test]
    fn lambda_falls_when_every_slack_saturates() {
        // Zero net under the temporal metric: slack 1 ≥ ε for every pair,
        // so E[min(ε, slack)] = ε exactly and λ must decrease.
        let mut rng = stream(14, StreamId::Init);
        let mut phi = PhiNet::<f64>::vector(2, &[], 1, &mut rng);
        for p in phi.params_mut() {
            p.w.fill(0.0);
            p.b.fill(0.0);
        }
        let batch = random_batch(8, 2, 1, &mut rng);
        let mut learner = DsdLearner::new(phi, MetricKind::Temporal, 1e-3);
        let before = learner.dual.lambda();
        let after = learner.update_lambda(&refs(&batch)).unwrap();
        assert!(after < before, "lambda should fall: {before} -> {after}");
    }

    #[test]
    fn lambda_rises_under_violation() {
        // Score metric with cached score 0 and a moving representation:
        // every slack is negative, so λ must rise, and keep rising.
        let mut rng = stream(15, StreamId::Init);
        let phi = PhiNet::<f64>::vector(2, &[], 1, &mut rng);
        let mut batch = random_batch(8, 2, 1, &mut rng);
        for tr in &mut batch {
            tr.score = 0.0;
        }
        let mut learner = DsdLearner::new(phi, MetricKind::Score, 1e-3);
        let mut prev = learner.dual.lambda();
        for _ in 0..10 {
            let next = learner.update_lambda(&refs(&batch)).unwrap();
            assert!(next > prev, "lambda should rise: {prev} -> {next}");
            prev = next;
        }
    }

    #[test]
    fn lambda_rises_on_half_unit_mean_violation() {
        // φ(x) = 0.5·x on the unit step gives ‖Δφ‖ = 0.5; with cached
        // score 0 the slack is exactly −0.5, the example sign-contract case.
        let mut rng = stream(16, StreamId::Init);
        let mut phi = PhiNet::<f64>::vector(1, &[], 1, &mut rng);
        {
            let p = &mut phi.head_mut().layers_mut()[0];
            p.w[[0, 0]] = 0.5;
            p.b[0] = 0.0;
        }
        let batch = vec![transition(&[0.0], &[1.0], Skill::new(vec![1.0]).unwrap(), 0.0)];
        let brefs = refs(&batch);

        let out = phi.forward(&stack_states(&brefs)).unwrap();
        let stats = batch_stats(&out, &brefs, MetricKind::Score, 1e-3).unwrap();
        assert_eq!(stats.mean_min, -0.5);

        let mut learner = DsdLearner::new(phi, MetricKind::Score, 1e-3);
        let before = learner.dual.lambda();
        let after = learner.update_lambda(&brefs).unwrap();
        assert!(after > before);
    }

    #[test]
    fn lambda_survives_adversarial_updates() {
        // Alternate batches pulling λ hard in both directions. The log
        // parameterization caps each step near the learning rate, so after
        // 1e5 updates λ is still positive and finite.
        let mut rng = stream(17, StreamId::Init);
        let mut phi = PhiNet::<f64>::vector(1, &[], 1, &mut rng);
        {
            let p = &mut phi.head_mut().layers_mut()[0];
            p.w[[0, 0]] = 1000.0;
            p.b[0] = 0.0;
        }
        let z = Skill::new(vec![1.0]).unwrap();
        let violating = vec![transition(&[0.0], &[1.0], z.clone(), 0.0)];
        let satisfied = vec![transition(&[0.0], &[0.0], z, 1.0)];
        let mut learner = DsdLearner::new(phi, MetricKind::Score, 1e-3);
        for i in 0..100_000usize {
            let batch = if (i / 1000) % 2 == 0 { &violating } else { &satisfied };
            let lambda = learner.update_lambda(&refs(batch)).unwrap();
            assert!(
                lambda > 0.0 && lambda.is_finite(),
                "lambda left (0, inf) at step {i}: {lambda}"
            );
        }
    }

    #[test]
    fn dual_step_matches_separate_updates() {
        // The fused round must equal update_phi followed by update_lambda
        // computed from the same pre-update parameters, so replaying the
        // pair on a clone gives bitwise-identical results when the λ
        // gradient is read before φ moves.
        let mut rng = stream(18, StreamId::Init);
        let phi = PhiNet::<f64>::vector(3, &[8], 2, &mut rng);
        let batch = random_batch(16, 3, 2, &mut rng);
        let brefs = refs(&batch);

        let mut fused = DsdLearner::new(phi.clone(), MetricKind::Temporal, 1e-3);
        let mut split = DsdLearner::new(phi, MetricKind::Temporal, 1e-3);

        let report = fused.dual_step(&brefs).unwrap();

        let lambda_batch_out = split.phi.forward(&stack_states(&brefs)).unwrap();
        let pre_stats =
            batch_stats(&lambda_batch_out, &brefs, MetricKind::Temporal, 1e-3).unwrap();
        split.update_phi(&brefs).unwrap();
        split.apply_lambda(pre_stats.mean_min).unwrap();

        assert_eq!(report.mean_min_slack, pre_stats.mean_min);
        assert_eq!(
            fused.dual.log_lambda.to_bits(),
            split.dual.log_lambda.to_bits()
        );
        for (a, b) in fused.phi.params().iter().zip(split.phi.params()) {
            assert_eq!(a.w, b.w);
            assert_eq!(a.b, b.b);
        }
    }

    #[test]
    fn unit_scores_reproduce_unweighted_rewards_bitwise() {
        // A transition log whose cached scores are all 1 (what a binary
        // scorer with alpha = 1 emits for every state) must produce the
        // same reward bits as the plain directional reward.
        let mut rng = stream(19, StreamId::Init);
        let phi = PhiNet::<f64>::vector(3, &[16], 2, &mut rng);
        let mut batch = random_batch(500, 3, 2, &mut rng);
        for tr in &mut batch {
            tr.score = 1.0;
        }
        let brefs = refs(&batch);
        let weighted = rewards(&phi, &brefs).unwrap();
        for (tr, &r) in batch.iter().zip(&weighted) {
            let plain = super::super::skill_reward(&phi, &tr.s, &tr.s_next, &tr.z).unwrap();
            assert_eq!(r.to_bits(), plain.to_bits());
        }
    }

    #[test]
    fn rewards_scale_with_cached_scores() {
        let mut rng = stream(20, StreamId::Init);
        let phi = PhiNet::<f64>::vector(2, &[8], 2, &mut rng);
        let mut batch = random_batch(64, 2, 2, &mut rng);
        for (i, tr) in batch.iter_mut().enumerate() {
            tr.score = if i % 2 == 0 { 0.0 } else { 0.5 };
        }
        let brefs = refs(&batch);
        let rs = rewards(&phi, &brefs).unwrap();
        for (i, (tr, &r)) in batch.iter().zip(&rs).enumerate() {
            let plain = super::super::skill_reward(&phi, &tr.s, &tr.s_next, &tr.z).unwrap();
            if i % 2 == 0 {
                assert_eq!(r, 0.0);
            } else {
                assert_eq!(r, 0.5 * plain);
            }
        }
    }

    #[test]
    fn empty_batch_is_rejected_everywhere() {
        let mut rng = stream(21, StreamId::Init);
        let phi = PhiNet::<f64>::vector(2, &[], 1, &mut rng);
        let dual = DualState::new();
        let empty: Vec<&Transition> = Vec::new();
        assert!(phi_objective(&phi, &dual, MetricKind::Temporal, &empty).is_err());
        assert!(phi_gradient(&phi, &dual, MetricKind::Temporal, &empty).is_err());
        assert!(rewards(&phi, &empty).is_err());
        let mut learner = DsdLearner::new(phi, MetricKind::Temporal, 1e-3);
        assert!(learner.update_phi(&empty).is_err());
        assert!(learner.update_lambda(&empty).is_err());
    }

    #[test]
    fn satisfied_fraction_counts_within_tolerance() {
        let mut rng = stream(22, StreamId::Init);
        let mut phi = PhiNet::<f64>::vector(1, &[], 1, &mut rng);
        {
            let p = &mut phi.head_mut().layers_mut()[0];
            p.w[[0, 0]] = 1.0;
            p.b[0] = 0.0;
        }
        let z = Skill::new(vec![1.0]).unwrap();
        // Unit steps: ‖Δφ‖ = 1 = d, satisfied; double steps: ‖Δφ‖ = 2 > 1.
        let batch = vec![
            transition(&[0.0], &[1.0], z.clone(), 1.0),
            transition(&[0.0], &[2.0], z.clone(), 1.0),
            transition(&[1.0], &[2.0], z, 1.0),
        ];
        let frac = satisfied_fraction(&phi, MetricKind::Temporal, &refs(&batch), 0.05).unwrap();
        assert!((frac - 2.0 / 3.0).abs() < 1e-12);
    }
}
