//! Coverage, safety, and flip metrics over rolled-out trajectories, the
//! fixed-skill evaluation protocol that produces those trajectories, and
//! multi-seed aggregation.
//!
//! All metrics read ground-truth states only; the scores stored on a
//! trajectory never enter an [`EvalReport`], so score noise cannot move
//! evaluation numbers.

mod audit;
mod plot;

pub use audit::{audit_scores, AuditReport, EpisodeAudit};
pub use plot::{emit_plots, plot_bars, plot_score_series, plot_skill_fan, replot_csv, BarRow};

use std::collections::BTreeSet;

use serde::Serialize;

use crate::agent::{collect_episode, PolicyNet};
use crate::envs::{is_flipped, make_env, EnvKind, RegionSpec};
use crate::error::{Error, Result};
use crate::rng::{sample_skill, stream, StreamId};
use crate::score::{build_score_fn, ScoreConfig, ScoreMode};
use crate::types::Trajectory;

/// World units per coverage bin.
pub const DEFAULT_BIN_SIZE: f64 = 1.0;
/// Skills in one evaluation fan.
pub const EVAL_SKILLS: usize = 48;

/// Occupied-bin set over planar positions. The room bins both coordinates;
/// the cart bins its track position, so its bin tuples all carry a zero
/// second index.
#[derive(Clone, Debug, Default)]
pub struct CoverageGrid {
    bin_size: f64,
    occupied: BTreeSet<(i64, i64)>,
}

/// The planar point a state occupies for binning and region checks.
fn planar_point(kind: EnvKind, state: &[f64]) -> Result<(f64, f64)> {
    let dim = match kind {
        EnvKind::PointRoom => 2,
        EnvKind::TipCart => 4,
    };
    if state.len() != dim {
        return Err(Error::invalid(format!(
            "{} states have {dim} entries, got {}",
            kind.name(),
            state.len()
        )));
    }
    Ok(match kind {
        EnvKind::PointRoom => (state[0], state[1]),
        EnvKind::TipCart => (state[0], 0.0),
    })
}

impl CoverageGrid {
    pub fn new(bin_size: f64) -> Result<Self> {
        if !(bin_size.is_finite() && bin_size > 0.0) {
            return Err(Error::invalid(format!(
                "bin size must be positive, got {bin_size}"
            )));
        }
        Ok(CoverageGrid {
            bin_size,
            occupied: BTreeSet::new(),
        })
    }

    pub fn insert(&mut self, x: f64, y: f64) {
        let i = (x / self.bin_size).floor() as i64;
        let j = (y / self.bin_size).floor() as i64;
        self.occupied.insert((i, j));
    }

    pub fn add_states<'a>(
        &mut self,
        kind: EnvKind,
        states: impl IntoIterator<Item = &'a [f64]>,
    ) -> Result<()> {
        for s in states {
            let (x, y) = planar_point(kind, s)?;
            self.insert(x, y);
        }
        Ok(())
    }

    pub fn count(&self) -> usize {
        self.occupied.len()
    }

    /// Bin centers, for region classification.
    pub fn centers(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.occupied.iter().map(move |&(i, j)| {
            (
                (i as f64 + 0.5) * self.bin_size,
                (j as f64 + 0.5) * self.bin_size,
            )
        })
    }
}

fn grid_over(kind: EnvKind, trajectories: &[Trajectory], bin_size: f64) -> Result<CoverageGrid> {
    let mut grid = CoverageGrid::new(bin_size)?;
    for traj in trajectories {
        grid.add_states(kind, traj.states.iter().map(|s| s.as_slice()))?;
    }
    Ok(grid)
}

/// Distinct occupied bins across all states of all trajectories.
pub fn state_coverage(kind: EnvKind, trajectories: &[Trajectory], bin_size: f64) -> Result<usize> {
    Ok(grid_over(kind, trajectories, bin_size)?.count())
}

/// Occupied bins split into safe and hazardous by their centers. The cart
/// classifies at track height zero, matching its binning.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct CoverageSplit {
    pub safe: usize,
    pub hazard: usize,
}

impl CoverageSplit {
    pub fn safe_minus_hazard(&self) -> i64 {
        self.safe as i64 - self.hazard as i64
    }

    /// Fraction of visited bins lying in the hazard region; 0 when nothing
    /// was visited.
    pub fn hazard_fraction(&self) -> f64 {
        let total = self.safe + self.hazard;
        if total == 0 {
            0.0
        } else {
            self.hazard as f64 / total as f64
        }
    }
}

pub fn coverage_split(
    kind: EnvKind,
    trajectories: &[Trajectory],
    hazard: Option<&RegionSpec>,
    bin_size: f64,
) -> Result<CoverageSplit> {
    let grid = grid_over(kind, trajectories, bin_size)?;
    let mut split = CoverageSplit { safe: 0, hazard: 0 };
    for (cx, cy) in grid.centers() {
        let point_y = match kind {
            EnvKind::PointRoom => cy,
            EnvKind::TipCart => 0.0,
        };
        if hazard.is_some_and(|r| r.contains(cx, point_y)) {
            split.hazard += 1;
        } else {
            split.safe += 1;
        }
    }
    Ok(split)
}

/// Occupied safe bins minus occupied hazard bins; `None` hazard means the
/// empty region, reducing to plain coverage.
pub fn safe_state_coverage(
    kind: EnvKind,
    trajectories: &[Trajectory],
    hazard: Option<&RegionSpec>,
    bin_size: f64,
) -> Result<i64> {
    Ok(coverage_split(kind, trajectories, hazard, bin_size)?.safe_minus_hazard())
}

/// Percentage of cart episodes containing at least one flipped state,
/// judged by the ground-truth tip-angle predicate only.
pub fn flip_percentage(episodes: &[Trajectory]) -> Result<f64> {
    if episodes.is_empty() {
        return Err(Error::invalid(
            "flip percentage needs at least one episode",
        ));
    }
    let mut flipped = 0usize;
    for ep in episodes {
        for s in &ep.states {
            if s.len() != 4 {
                return Err(Error::invalid(
                    "flip percentage is defined on cart states",
                ));
            }
        }
        if ep.states.iter().any(|s| is_flipped(s)) {
            flipped += 1;
        }
    }
    Ok(100.0 * flipped as f64 / episodes.len() as f64)
}

/// Mean with its standard error (sample std over sqrt n).
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Aggregate {
    pub mean: f64,
    pub stderr: f64,
}

pub fn aggregate(values: &[f64]) -> Result<Aggregate> {
    if values.is_empty() {
        return Err(Error::invalid("aggregation needs at least one value"));
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let stderr = if values.len() < 2 {
        0.0
    } else {
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
        (var / n).sqrt()
    };
    Ok(Aggregate { mean, stderr })
}

/// Where one skill's deterministic episode ended.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SkillEndpoint {
    pub skill: Vec<f64>,
    pub endpoint: Vec<f64>,
}

/// Metrics of one evaluation fan. `flip_pct` is 0 on the room, where no
/// state can flip; `hazard_fraction` is 0 when no hazard region was given.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EvalReport {
    pub coverage: usize,
    pub safe_coverage: i64,
    pub hazard_fraction: f64,
    pub flip_pct: f64,
    pub endpoints: Vec<SkillEndpoint>,
}

/// One seed's evaluation: the report plus the trajectories behind it.
#[derive(Clone, Debug)]
pub struct RunEval {
    pub seed: u64,
    pub report: EvalReport,
    pub trajectories: Vec<Trajectory>,
}

/// Compute an [`EvalReport`] from already-collected episodes.
pub fn report_from_trajectories(
    kind: EnvKind,
    trajectories: &[Trajectory],
    hazard: Option<&RegionSpec>,
) -> Result<EvalReport> {
    let split = coverage_split(kind, trajectories, hazard, DEFAULT_BIN_SIZE)?;
    let flip_pct = match kind {
        EnvKind::TipCart => flip_percentage(trajectories)?,
        EnvKind::PointRoom => 0.0,
    };
    let endpoints = trajectories
        .iter()
        .map(|t| {
            Ok(SkillEndpoint {
                skill: t.skill.as_slice().to_vec(),
                endpoint: t
                    .states
                    .last()
                    .ok_or_else(|| Error::invalid("trajectory has no states"))?
                    .clone(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(EvalReport {
        coverage: split.safe + split.hazard,
        safe_coverage: split.safe_minus_hazard(),
        hazard_fraction: split.hazard_fraction(),
        flip_pct,
        endpoints,
    })
}

/// Roll out one deterministic episode per skill, skills drawn uniformly on
/// the sphere from the evaluation stream, and report the metrics.
pub fn evaluate_policy(
    policy: &PolicyNet<f32>,
    kind: EnvKind,
    n_skills: usize,
    seed: u64,
    hazard: Option<&RegionSpec>,
) -> Result<RunEval> {
    if n_skills == 0 {
        return Err(Error::invalid("evaluation needs at least one skill"));
    }
    let mut env = make_env(kind);
    let mut rng = stream(seed, StreamId::Eval);
    let constant = ScoreConfig {
        mode: ScoreMode::Constant,
        skip_n: 1,
        ..ScoreConfig::default()
    };
    let mut scorer = build_score_fn(&constant, None, stream(seed, StreamId::Noise))?;
    let mut trajectories = Vec::with_capacity(n_skills);
    for _ in 0..n_skills {
        let z = sample_skill(policy.skill_dim(), &mut rng)?;
        let (traj, _) = collect_episode(env.as_mut(), policy, &z, scorer.as_mut(), true, &mut rng)?;
        trajectories.push(traj);
    }
    let report = report_from_trajectories(kind, &trajectories, hazard)?;
    Ok(RunEval {
        seed,
        report,
        trajectories,
    })
}

/// Seed-wise mean and standard error for each scalar metric.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SeedSummary {
    pub coverage: Aggregate,
    pub safe_coverage: Aggregate,
    pub hazard_fraction: Aggregate,
    pub flip_pct: Aggregate,
}

pub fn summarize(reports: &[&EvalReport]) -> Result<SeedSummary> {
    let col = |f: &dyn Fn(&EvalReport) -> f64| -> Vec<f64> { reports.iter().map(|r| f(r)).collect() };
    Ok(SeedSummary {
        coverage: aggregate(&col(&|r| r.coverage as f64))?,
        safe_coverage: aggregate(&col(&|r| r.safe_coverage as f64))?,
        hazard_fraction: aggregate(&col(&|r| r.hazard_fraction))?,
        flip_pct: aggregate(&col(&|r| r.flip_pct))?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream, StreamId};
    use crate::types::Skill;
    use proptest::prelude::*;

    fn traj_from_states(states: Vec<Vec<f64>>) -> Trajectory {
        let steps = states.len() - 1;
        let dim = states[0].len();
        Trajectory {
            states,
            actions: vec![vec![0.0; if dim == 2 { 2 } else { 1 }]; steps],
            skill: Skill::new(vec![1.0, 0.0]).unwrap(),
            scores: vec![1.0; steps],
        }
    }

    fn room_line(from: (f64, f64), to: (f64, f64), steps: usize) -> Trajectory {
        let states = (0..=steps)
            .map(|i| {
                let t = i as f64 / steps as f64;
                vec![
                    from.0 + t * (to.0 - from.0),
                    from.1 + t * (to.1 - from.1),
                ]
            })
            .collect();
        traj_from_states(states)
    }

    fn cart_episode(thetas: &[f64]) -> Trajectory {
        let states = thetas.iter().map(|&th| vec![0.0, th, 0.0, 0.0]).collect();
        traj_from_states(states)
    }

    #[test]
    fn stationary_trajectory_occupies_one_bin() {
        let t = traj_from_states(vec![vec![0.2, 0.7]; 5]);
        assert_eq!(state_coverage(EnvKind::PointRoom, &[t], 1.0).unwrap(), 1);
    }

    #[test]
    fn ten_unit_line_crosses_eleven_bins() {
        // 0.1-unit steps from the origin to (10, 0) touch the integer bins
        // 0 through 10 and nothing else.
        let t = room_line((0.0, 0.0), (10.0, 0.0), 100);
        assert_eq!(state_coverage(EnvKind::PointRoom, &[t], 1.0).unwrap(), 11);
    }

    #[test]
    fn empty_input_covers_nothing() {
        assert_eq!(state_coverage(EnvKind::PointRoom, &[], 1.0).unwrap(), 0);
        assert_eq!(
            safe_state_coverage(EnvKind::PointRoom, &[], None, 1.0).unwrap(),
            0
        );
    }

    #[test]
    fn cart_trajectories_bin_on_the_track_only() {
        let states = (0..=30).map(|i| vec![i as f64 * 0.1, 3.0, 0.5, 0.5]).collect();
        let t = traj_from_states(states);
        assert_eq!(state_coverage(EnvKind::TipCart, &[t], 1.0).unwrap(), 4);
    }

    proptest! {
        #[test]
        fn coverage_is_monotone_under_union(
            walk_a in proptest::collection::vec((-14.0f64..14.0, -14.0f64..14.0), 2..40),
            walk_b in proptest::collection::vec((-14.0f64..14.0, -14.0f64..14.0), 2..40),
        ) {
            let a = traj_from_states(walk_a.iter().map(|&(x, y)| vec![x, y]).collect());
            let b = traj_from_states(walk_b.iter().map(|&(x, y)| vec![x, y]).collect());
            let sub = state_coverage(EnvKind::PointRoom, &[a.clone()], 1.0).unwrap();
            let sup = state_coverage(EnvKind::PointRoom, &[a, b], 1.0).unwrap();
            prop_assert!(sup >= sub);
        }
    }

    #[test]
    fn all_safe_states_reduce_to_plain_coverage() {
        let t = room_line((-5.0, 2.0), (-1.0, 2.0), 40);
        let hazard: RegionSpec = "x>0".parse().unwrap();
        let plain = state_coverage(EnvKind::PointRoom, &[t.clone()], 1.0).unwrap();
        let safe =
            safe_state_coverage(EnvKind::PointRoom, &[t], Some(&hazard), 1.0).unwrap();
        assert_eq!(safe, plain as i64);
    }

    #[test]
    fn symmetric_exploration_cancels() {
        let right = room_line((0.5, 0.5), (3.5, 0.5), 30);
        let left = room_line((-0.5, 0.5), (-3.5, 0.5), 30);
        let hazard: RegionSpec = "x>0".parse().unwrap();
        let safe =
            safe_state_coverage(EnvKind::PointRoom, &[right, left], Some(&hazard), 1.0).unwrap();
        assert_eq!(safe, 0);
    }

    #[test]
    fn five_safe_minus_two_hazard_is_three() {
        // Bins -5..-1 on the safe side, bins 0..2 on the hazard side.
        let safe_side = room_line((-4.5, 0.5), (-0.5, 0.5), 40);
        let hazard_side = room_line((0.5, 0.5), (1.5, 0.5), 10);
        let hazard: RegionSpec = "x>0".parse().unwrap();
        let split = coverage_split(
            EnvKind::PointRoom,
            &[safe_side, hazard_side],
            Some(&hazard),
            1.0,
        )
        .unwrap();
        assert_eq!(split, CoverageSplit { safe: 5, hazard: 2 });
        assert_eq!(split.safe_minus_hazard(), 3);
    }

    #[test]
    fn no_hazard_region_equals_plain_coverage() {
        let t = room_line((-3.0, -3.0), (4.0, 2.0), 70);
        let plain = state_coverage(EnvKind::PointRoom, &[t.clone()], 1.0).unwrap();
        let safe = safe_state_coverage(EnvKind::PointRoom, &[t], None, 1.0).unwrap();
        assert_eq!(safe, plain as i64);
    }

    #[test]
    fn flip_percentage_counts_episodes_not_states() {
        let upright = cart_episode(&[0.0; 10]);
        let tipped = cart_episode(&[0.0, 0.0, 3.0, 3.0, 3.0]);
        assert_eq!(flip_percentage(&[upright.clone()]).unwrap(), 0.0);
        let eps = vec![upright.clone(), upright.clone(), upright, tipped];
        assert_eq!(flip_percentage(&eps).unwrap(), 25.0);
    }

    #[test]
    fn flip_at_the_final_step_counts_the_episode() {
        let mut thetas = vec![0.0; 10];
        *thetas.last_mut().unwrap() = 2.0;
        let ep = cart_episode(&thetas);
        assert_eq!(flip_percentage(&[ep]).unwrap(), 100.0);
    }

    #[test]
    fn flip_percentage_rejects_bad_input() {
        assert!(flip_percentage(&[]).is_err());
        let room = room_line((0.0, 0.0), (1.0, 0.0), 5);
        assert!(flip_percentage(&[room]).is_err());
    }

    #[test]
    fn aggregate_matches_hand_computation() {
        let a = aggregate(&[1.0, 2.0, 3.0]).unwrap();
        assert!((a.mean - 2.0).abs() < 1e-12);
        assert!((a.stderr - (1.0f64 / 3.0).sqrt()).abs() < 1e-12);
        let single = aggregate(&[7.0]).unwrap();
        assert_eq!(single, Aggregate { mean: 7.0, stderr: 0.0 });
        assert!(aggregate(&[]).is_err());
    }

    fn test_policy(seed: u64) -> PolicyNet<f32> {
        let mut rng = stream(seed, StreamId::Init);
        PolicyNet::vector(
            2,
            2,
            2,
            crate::agent::state_scale(EnvKind::PointRoom),
            &mut rng,
        )
        .unwrap()
    }

    #[test]
    fn evaluation_fan_is_deterministic_and_sized() {
        let policy = test_policy(5);
        let a = evaluate_policy(&policy, EnvKind::PointRoom, EVAL_SKILLS, 3, None).unwrap();
        let b = evaluate_policy(&policy, EnvKind::PointRoom, EVAL_SKILLS, 3, None).unwrap();
        assert_eq!(a.report, b.report);
        assert_eq!(a.report.endpoints.len(), EVAL_SKILLS);
        assert_eq!(a.trajectories.len(), EVAL_SKILLS);
        assert!(a.report.coverage >= 1);
        assert_eq!(a.report.flip_pct, 0.0);
    }

    #[test]
    fn score_noise_cannot_move_evaluation_numbers() {
        let policy = test_policy(6);
        let run = evaluate_policy(&policy, EnvKind::PointRoom, 8, 4, None).unwrap();
        let mut noisy = run.trajectories.clone();
        for t in &mut noisy {
            for s in &mut t.scores {
                *s = 1.0 - *s;
            }
        }
        let a = report_from_trajectories(EnvKind::PointRoom, &run.trajectories, None).unwrap();
        let b = report_from_trajectories(EnvKind::PointRoom, &noisy, None).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn summary_aggregates_per_seed_reports() {
        let policy = test_policy(7);
        let runs: Vec<RunEval> = (0..3)
            .map(|s| evaluate_policy(&policy, EnvKind::PointRoom, 8, s, None).unwrap())
            .collect();
        let reports: Vec<&EvalReport> = runs.iter().map(|r| &r.report).collect();
        let summary = summarize(&reports).unwrap();
        let mean_cov =
            reports.iter().map(|r| r.coverage as f64).sum::<f64>() / reports.len() as f64;
        assert!((summary.coverage.mean - mean_cov).abs() < 1e-12);
        assert_eq!(summary.flip_pct.mean, 0.0);
    }
}
