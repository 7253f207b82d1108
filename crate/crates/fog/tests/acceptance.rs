//! End-to-end acceptance suite. Each test prints one PASS/FAIL line with
//! its measured numbers and wall time; thresholds and budgets are pinned
//! as constants next to each criterion.
//!
//! Trained runs are cached on disk under the cargo tmp dir, keyed by a
//! hash of the full training config, so criteria that share a
//! configuration reuse the same run across tests and invocations.

use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, OnceLock};
use std::time::{Duration, Instant};

use sha2::{Digest, Sha256};

use fog::agent::{load_trainer, Method, TrainConfig, Trainer};
use fog::dsd::{
    phi_gradient, phi_objective, scaled_phi_check, DsdLearner, DualState, MetricKind, PhiNet,
    LAMBDA_INIT,
};
use fog::embed::{make_embedder, EmbedderConfig};
use fog::envs::{EnvKind, RegionSpec};
use fog::error::Result;
use fog::eval::{evaluate_policy, RunEval, EVAL_SKILLS};
use fog::hier::{random_skill_baseline, train_controller};
use fog::rng::{sample_skill, stream, StreamId};
use fog::score::{
    build_score_fn, needs_embedder, softmax_pair, IntentionPair, Polarity, ScoreConfig, ScoreFn,
    ScoreMode,
};
use fog::types::{Image, Skill, State, Transition};

const MINUTE: Duration = Duration::from_secs(60);

fn verdict(id: &str, pass: bool, elapsed: Duration, budget: Duration, detail: &str) {
    let status = if pass && elapsed <= budget {
        "PASS"
    } else {
        "FAIL"
    };
    println!(
        "ACCEPTANCE {id} {status} ({:.1}s of {:.0}s budget): {detail}",
        elapsed.as_secs_f64(),
        budget.as_secs_f64()
    );
    assert!(pass, "{id}: {detail}");
    assert!(
        elapsed <= budget,
        "{id}: took {:.1}s, budget {:.0}s",
        elapsed.as_secs_f64(),
        budget.as_secs_f64()
    );
}

fn mock() -> Arc<dyn fog::embed::Embedder> {
    make_embedder(&EmbedderConfig::default()).unwrap()
}

// ---------------------------------------------------------------------
// Trained-run cache
// ---------------------------------------------------------------------

struct TrainedRun {
    dir: PathBuf,
    log: Vec<String>,
}

fn cache_root() -> PathBuf {
    Path::new(env!("CARGO_TARGET_TMPDIR")).join("acceptance_cache")
}

fn cache_key(cfg: &TrainConfig) -> String {
    let json = serde_json::to_string(cfg).unwrap();
    let digest = Sha256::digest(json.as_bytes());
    digest[..8].iter().map(|b| format!("{b:02x}")).collect()
}

fn key_lock(key: &str) -> Arc<Mutex<()>> {
    static LOCKS: OnceLock<Mutex<HashMap<String, Arc<Mutex<()>>>>> = OnceLock::new();
    let map = LOCKS.get_or_init(|| Mutex::new(HashMap::new()));
    map.lock()
        .unwrap()
        .entry(key.to_string())
        .or_default()
        .clone()
}

fn train_to_dir(cfg: &TrainConfig, dir: &Path) -> Result<Vec<String>> {
    fs::create_dir_all(dir).unwrap();
    let embedder = if needs_embedder(cfg.score.mode) {
        Some(make_embedder(&cfg.embedder)?)
    } else {
        None
    };
    let mut trainer = Trainer::new(cfg.clone(), embedder)?;
    let mut log = Vec::with_capacity(cfg.epochs as usize);
    for _ in 0..cfg.epochs {
        log.push(trainer.train_epoch()?.log_line());
    }
    trainer.save_checkpoint(&dir.join("final.bin"))?;
    Ok(log)
}

/// The run for `cfg`, training it on first use and reusing the cached
/// checkpoint afterwards. The DONE marker is written last so a partial
/// directory from an interrupted run is retrained.
fn trained(cfg: &TrainConfig) -> TrainedRun {
    let key = cache_key(cfg);
    let dir = cache_root().join(&key);
    let lock = key_lock(&key);
    let _guard = lock.lock().unwrap();
    if !dir.join("DONE").exists() {
        let log = train_to_dir(cfg, &dir).unwrap();
        fs::write(dir.join("log.txt"), log.join("\n") + "\n").unwrap();
        fs::write(
            dir.join("config.json"),
            serde_json::to_string_pretty(cfg).unwrap(),
        )
        .unwrap();
        fs::write(dir.join("DONE"), "ok").unwrap();
    }
    let log = fs::read_to_string(dir.join("log.txt"))
        .unwrap()
        .lines()
        .map(String::from)
        .collect();
    TrainedRun { dir, log }
}

fn load(run: &TrainedRun) -> Trainer {
    load_trainer(&run.dir.join("final.bin"), Some(mock())).unwrap()
}

fn eval_run(trainer: &Trainer, seed: u64, hazard: Option<&RegionSpec>) -> RunEval {
    evaluate_policy(
        trainer.policy(),
        trainer.config().env,
        EVAL_SKILLS,
        seed,
        hazard,
    )
    .unwrap()
}

// ---------------------------------------------------------------------
// Shared configurations
// ---------------------------------------------------------------------

const RUN_EPOCHS: u32 = 300;
const SEEDS: [u64; 3] = [0, 1, 2];
const FLIP_PREDICATE: &str = "abs(s[1]) > 1.57";
const GROUND_PAIR: (&str, &str) = ("ground is blue", "ground is orange");

fn tip_fog(alpha: f64, noise_b: f64, seed: u64) -> TrainConfig {
    TrainConfig {
        method: Method::Fog,
        env: EnvKind::TipCart,
        metric: MetricKind::Score,
        epochs: RUN_EPOCHS,
        seed,
        score: ScoreConfig {
            mode: ScoreMode::Predicate,
            alpha,
            predicate: Some(FLIP_PREDICATE.to_string()),
            polarity: Polarity::CheckerFlagsUndesirable,
            noise_b,
            ..ScoreConfig::default()
        },
        ..TrainConfig::default()
    }
}

fn metra(env: EnvKind, seed: u64) -> TrainConfig {
    TrainConfig {
        method: Method::Metra,
        env,
        metric: MetricKind::Temporal,
        epochs: RUN_EPOCHS,
        seed,
        score: ScoreConfig {
            mode: ScoreMode::Constant,
            ..ScoreConfig::default()
        },
        ..TrainConfig::default()
    }
}

fn room_embed(method: Method, mode: ScoreMode, seed: u64) -> TrainConfig {
    TrainConfig {
        method,
        env: EnvKind::PointRoom,
        metric: MetricKind::Score,
        epochs: RUN_EPOCHS,
        seed,
        score: ScoreConfig {
            mode,
            alpha: 0.0,
            intentions: vec![IntentionPair::new(GROUND_PAIR.0, GROUND_PAIR.1).unwrap()],
            ..ScoreConfig::default()
        },
        ..TrainConfig::default()
    }
}

fn reduction_config(method: Method, seed: u64) -> TrainConfig {
    TrainConfig {
        method,
        env: EnvKind::PointRoom,
        metric: match method {
            Method::Metra => MetricKind::Temporal,
            _ => MetricKind::Score,
        },
        epochs: 20,
        seed,
        score: ScoreConfig {
            mode: ScoreMode::Constant,
            ..ScoreConfig::default()
        },
        ..TrainConfig::default()
    }
}

// ---------------------------------------------------------------------
// Criterion 1: score-function example tables
// ---------------------------------------------------------------------

/// Scorer built from a config over the mock embedder.
fn scorer(mode: ScoreMode, alpha: f64, pairs: &[(&str, &str)]) -> Box<dyn ScoreFn> {
    let cfg = ScoreConfig {
        mode,
        alpha,
        intentions: pairs
            .iter()
            .map(|(d, u)| IntentionPair::new(*d, *u).unwrap())
            .collect(),
        skip_n: 1,
        ..ScoreConfig::default()
    };
    build_score_fn(&cfg, Some(mock()), stream(0, StreamId::Noise)).unwrap()
}

fn solid(r: u8, g: u8, b: u8) -> State {
    State::Image(Image::solid(r, g, b))
}

/// Cosine between a solid color and a raw anchor direction, computed from
/// first principles: the embedding of a solid image is proportional to its
/// channel values, and cosine is scale-invariant.
fn solid_cosine(color: [f64; 3], anchor: [f64; 3]) -> f64 {
    let dot: f64 = color.iter().zip(&anchor).map(|(a, b)| a * b).sum();
    let nc = color.iter().map(|v| v * v).sum::<f64>().sqrt();
    let na = anchor.iter().map(|v| v * v).sum::<f64>().sqrt();
    dot / (nc * na)
}

const BLUE_ANCHOR: [f64; 3] = [0.0, 0.0, 1.0];
const ORANGE_ANCHOR: [f64; 3] = [1.0, 0.5, 0.0];
const FLIP_ANCHOR: [f64; 3] = [1.0, 0.0, 0.0];
const UPRIGHT_ANCHOR: [f64; 3] = [0.0, 1.0, 0.0];

struct CallCounter {
    calls: usize,
}

impl ScoreFn for CallCounter {
    fn score(&mut self, state: &State) -> Result<f64> {
        self.calls += 1;
        Ok(if state.as_vector()?[0] > 0.0 { 1.0 } else { 0.0 })
    }
    fn reset(&mut self) {}
    fn binary_levels(&self) -> Option<[f64; 2]> {
        Some([0.0, 1.0])
    }
    fn needs_images(&self) -> bool {
        false
    }
}

#[test]
fn c01_score_function_tables() {
    let start = Instant::now();
    let ground = [GROUND_PAIR];
    let posture = [("agent stands normally", "agent flips over")];

    // Binary: strict cosine comparison, ties score alpha, bit-exact levels.
    let mut f = scorer(ScoreMode::Binary, 0.0, &ground);
    assert_eq!(f.score(&solid(0, 0, 255)).unwrap(), 1.0);
    assert_eq!(f.score(&solid(255, 128, 0)).unwrap(), 0.0);
    let mut f = scorer(ScoreMode::Binary, 0.25, &ground);
    assert_eq!(f.score(&solid(255, 128, 0)).unwrap(), 0.25);
    let mut f = scorer(ScoreMode::Binary, 0.5, &posture);
    assert_eq!(f.score(&solid(128, 128, 128)).unwrap(), 0.5, "tie -> alpha");
    let mut f = scorer(ScoreMode::Binary, 1.0, &ground);
    assert_eq!(f.score(&solid(10, 200, 30)).unwrap(), 1.0, "alpha=1 is constant 1");

    // Softmax: within 1e-9 of the hand chain cosines -> e^c1/(e^c1+e^c2).
    let mut f = scorer(ScoreMode::Softmax, 0.0, &ground);
    for color in [[0u8, 0, 255], [255, 128, 0], [40, 90, 200], [128, 128, 128]] {
        let cf = [color[0] as f64, color[1] as f64, color[2] as f64];
        let want = softmax_pair(
            solid_cosine(cf, BLUE_ANCHOR),
            solid_cosine(cf, ORANGE_ANCHOR),
        );
        let got = f.score(&solid(color[0], color[1], color[2])).unwrap();
        assert!(
            (got - want).abs() < 1e-9,
            "softmax({color:?}): got {got}, hand {want}"
        );
    }
    let mut f = scorer(ScoreMode::Softmax, 0.0, &posture);
    assert_eq!(f.score(&solid(128, 128, 128)).unwrap(), 0.5, "tie -> 1/2");

    // Multi: conjunction over pairs, strict per pair, bit-exact levels.
    let both = [GROUND_PAIR, ("agent stands normally", "agent flips over")];
    let mut f = scorer(ScoreMode::Multi, 0.0, &both);
    let blue_green = [0.0, 200.0, 255.0];
    assert!(solid_cosine(blue_green, BLUE_ANCHOR) > solid_cosine(blue_green, ORANGE_ANCHOR));
    assert!(solid_cosine(blue_green, UPRIGHT_ANCHOR) > solid_cosine(blue_green, FLIP_ANCHOR));
    assert_eq!(f.score(&solid(0, 200, 255)).unwrap(), 1.0);
    // Pure blue wins the ground pair but ties the posture pair.
    assert_eq!(f.score(&solid(0, 0, 255)).unwrap(), 0.0);

    // Predicate DSL on vector states.
    let cfg = ScoreConfig {
        mode: ScoreMode::Predicate,
        alpha: 0.25,
        predicate: Some(FLIP_PREDICATE.to_string()),
        skip_n: 1,
        ..ScoreConfig::default()
    };
    let mut f = build_score_fn(&cfg, None, stream(0, StreamId::Noise)).unwrap();
    assert_eq!(f.score(&State::Vector(vec![0.0, 0.0, 0.0, 0.0])).unwrap(), 1.0);
    assert_eq!(f.score(&State::Vector(vec![0.0, 3.0, 0.0, 0.0])).unwrap(), 0.25);
    assert_eq!(f.score(&State::Vector(vec![0.0, -1.6, 0.0, 0.0])).unwrap(), 0.25);
    let inverted = ScoreConfig {
        polarity: Polarity::CheckerFlagsDesirable,
        ..cfg
    };
    let mut f = build_score_fn(&inverted, None, stream(0, StreamId::Noise)).unwrap();
    assert_eq!(f.score(&State::Vector(vec![0.0, 3.0, 0.0, 0.0])).unwrap(), 1.0);
    assert_eq!(f.score(&State::Vector(vec![0.0, 0.0, 0.0, 0.0])).unwrap(), 0.25);

    // Skip wrapper: one base call per N steps, value held in between.
    let mut skipped =
        fog::score::SkippedScore::new(Box::new(CallCounter { calls: 0 }), 3).unwrap();
    let plus = State::Vector(vec![1.0]);
    let minus = State::Vector(vec![-1.0]);
    let seq = [&plus, &minus, &minus, &minus, &plus, &plus];
    let got: Vec<f64> = seq.iter().map(|s| skipped.score(s).unwrap()).collect();
    assert_eq!(got, vec![1.0, 1.0, 1.0, 0.0, 0.0, 0.0], "held between queries");
    skipped.reset();
    assert_eq!(skipped.score(&minus).unwrap(), 0.0, "reset requeries");

    // Noise wrapper: b=0 is the identity, b=1 always flips between levels.
    let base = |alpha: f64| {
        let cfg = ScoreConfig {
            mode: ScoreMode::Predicate,
            alpha,
            predicate: Some("s[0] > 0".to_string()),
            skip_n: 1,
            ..ScoreConfig::default()
        };
        build_score_fn(&cfg, None, stream(0, StreamId::Noise)).unwrap()
    };
    let mut clean =
        fog::score::NoisyScore::new(base(0.25), 0.0, stream(1, StreamId::Noise)).unwrap();
    assert_eq!(clean.score(&plus).unwrap(), 1.0);
    assert_eq!(clean.score(&minus).unwrap(), 0.25);
    let mut flipped =
        fog::score::NoisyScore::new(base(0.25), 1.0, stream(1, StreamId::Noise)).unwrap();
    assert_eq!(flipped.score(&plus).unwrap(), 0.25);
    assert_eq!(flipped.score(&minus).unwrap(), 1.0);

    verdict(
        "c1",
        true,
        start.elapsed(),
        Duration::from_secs(10),
        "binary/softmax/multi/predicate/skip/noise tables all hold",
    );
}

// ---------------------------------------------------------------------
// Criterion 2: constant-score reduction; Criterion 12: determinism
// ---------------------------------------------------------------------

#[test]
fn c02_constant_score_reduction_matches_the_unweighted_learner() {
    let start = Instant::now();
    let fog_run = trained(&reduction_config(Method::Fog, 11));
    let metra_run = trained(&reduction_config(Method::Metra, 11));
    assert_eq!(fog_run.log.len(), 20);
    let equal = fog_run.log == metra_run.log;
    let first_diff = fog_run
        .log
        .iter()
        .zip(&metra_run.log)
        .position(|(a, b)| a != b);
    verdict(
        "c2",
        equal,
        start.elapsed(),
        MINUTE * 5,
        &format!(
            "20 epoch logs bitwise equal across the two learners (first diff: {first_diff:?})"
        ),
    );
}

#[test]
fn c12_equal_seed_runs_are_bitwise_identical() {
    let start = Instant::now();
    let cfg = reduction_config(Method::Fog, 11);
    let cached = trained(&cfg);
    let fresh_dir = tempfile::tempdir().unwrap();
    let fresh_log = train_to_dir(&cfg, fresh_dir.path()).unwrap();
    let logs_equal = fresh_log == cached.log;
    let cached_bytes = fs::read(cached.dir.join("final.bin")).unwrap();
    let fresh_bytes = fs::read(fresh_dir.path().join("final.bin")).unwrap();
    let bytes_equal = cached_bytes == fresh_bytes;
    verdict(
        "c12",
        logs_equal && bytes_equal,
        start.elapsed(),
        MINUTE * 5,
        &format!(
            "repeat run: logs equal = {logs_equal}, checkpoint bytes equal = {bytes_equal} ({} bytes)",
            cached_bytes.len()
        ),
    );
}

// ---------------------------------------------------------------------
// Criterion 3: representation gradients vs central finite differences
// ---------------------------------------------------------------------

fn toy_transition(s: f64, s_next: f64, z: Skill, score: f64) -> Transition {
    Transition {
        s: State::Vector(vec![s]),
        a: vec![0.5],
        s_next: State::Vector(vec![s_next]),
        z,
        score,
        done: false,
    }
}

#[test]
fn c03_phi_gradients_match_finite_differences() {
    let start = Instant::now();
    let mut rng = stream(3, StreamId::Init);
    let dual = DualState::new();
    let kinds = [MetricKind::Score, MetricKind::Temporal, MetricKind::Euclidean];
    let h = 1e-5;
    let mut checked = 0usize;
    let mut max_rel = 0.0f64;
    let mut attempts = 0usize;
    while checked < 100 {
        attempts += 1;
        assert!(attempts < 1_000, "too many batches near gradient kinks");
        let phi = PhiNet::<f64>::vector(1, &[], 2, &mut rng);
        assert_eq!(phi.param_count(), 4, "toy net must have 4 parameters");
        let kind = kinds[checked % kinds.len()];
        let batch: Vec<Transition> = (0..8)
            .map(|_| {
                use rand::Rng;
                let s = rng.random_range(-2.0..2.0);
                let s_next = rng.random_range(-2.0..2.0);
                let z = sample_skill(2, &mut rng).unwrap();
                let score = rng.random_range(0.0..1.0);
                toy_transition(s, s_next, z, score)
            })
            .collect();
        let refs: Vec<&Transition> = batch.iter().collect();

        // Skip batches straddling the penalty kinks, where the analytic
        // subgradient and a symmetric difference legitimately disagree.
        let out = phi.forward(&refs.iter().flat_map(|t| [&t.s, &t.s_next]).collect::<Vec<_>>())
            .unwrap();
        let near_kink = (0..refs.len()).any(|i| {
            let dx = out[[2 * i + 1, 0]] - out[[2 * i, 0]];
            let dy = out[[2 * i + 1, 1]] - out[[2 * i, 1]];
            let norm = (dx * dx + dy * dy).sqrt();
            let d = match kind {
                MetricKind::Temporal => 1.0,
                MetricKind::Score => refs[i].score,
                MetricKind::Euclidean => {
                    let a = refs[i].s.as_vector().unwrap()[0];
                    let b = refs[i].s_next.as_vector().unwrap()[0];
                    (a - b).abs()
                }
            };
            let slack = d - norm;
            norm < 1e-3 || (slack - EPSILON).abs() < 1e-3
        });
        if near_kink {
            continue;
        }

        let (grads, _) = phi_gradient(&phi, &dual, kind, &refs).unwrap();
        let analytic = [
            grads[0].w[[0, 0]],
            grads[0].w[[0, 1]],
            grads[0].b[0],
            grads[0].b[1],
        ];
        for p in 0..4 {
            let read = |phi: &PhiNet<f64>, delta: f64| -> f64 {
                let mut probe = phi.clone();
                {
                    let mut params = probe.params_mut();
                    match p {
                        0 => params[0].w[[0, 0]] += delta,
                        1 => params[0].w[[0, 1]] += delta,
                        2 => params[0].b[0] += delta,
                        _ => params[0].b[1] += delta,
                    }
                }
                phi_objective(&probe, &dual, kind, &refs).unwrap()
            };
            let numeric = -(read(&phi, h) - read(&phi, -h)) / (2.0 * h);
            let rel = (analytic[p] - numeric).abs()
                / analytic[p].abs().max(numeric.abs()).max(1e-6);
            max_rel = max_rel.max(rel);
            assert!(
                rel < 1e-3,
                "batch {checked} param {p} ({kind:?}): analytic {} vs numeric {numeric}",
                analytic[p]
            );
        }
        checked += 1;
    }
    verdict(
        "c3",
        checked == 100,
        start.elapsed(),
        MINUTE,
        &format!("100 batches checked, max relative error {max_rel:.2e} (< 1e-3)"),
    );
}

// ---------------------------------------------------------------------
// Criterion 4: dual variable sign contract
// ---------------------------------------------------------------------

#[test]
fn c04_lambda_moves_against_the_constraint() {
    let start = Instant::now();
    let mut rng = stream(4, StreamId::Init);
    // phi(x) = (10x, 0): distance 1 apart in state space maps 10 apart in
    // latent space, so (0 -> 1) violates the temporal constraint and
    // (0 -> 1e-4) satisfies it with full slack.
    let build = |rng: &mut rand_chacha::ChaCha8Rng| {
        let mut phi = PhiNet::<f64>::vector(1, &[], 2, rng);
        {
            let mut params = phi.params_mut();
            params[0].w[[0, 0]] = 10.0;
            params[0].w[[0, 1]] = 0.0;
            params[0].b[0] = 0.0;
            params[0].b[1] = 0.0;
        }
        DsdLearner::new(phi, MetricKind::Temporal, 1e-4)
    };
    let z = sample_skill(2, &mut rng).unwrap();

    let violating: Vec<Transition> = (0..8)
        .map(|_| toy_transition(0.0, 1.0, z.clone(), 1.0))
        .collect();
    let refs: Vec<&Transition> = violating.iter().collect();
    let mut learner = build(&mut rng);
    let mut lambda = learner.dual.lambda();
    assert!((lambda - LAMBDA_INIT).abs() < 1e-9);
    let mut grew = true;
    for _ in 0..10 {
        let next = learner.update_lambda(&refs).unwrap();
        grew &= next > lambda;
        lambda = next;
    }

    let satisfied: Vec<Transition> = (0..8)
        .map(|_| toy_transition(0.0, 1e-4, z.clone(), 1.0))
        .collect();
    let refs: Vec<&Transition> = satisfied.iter().collect();
    let mut learner = build(&mut rng);
    let mut lam2 = learner.dual.lambda();
    let mut shrank = true;
    let mut positive = true;
    for _ in 0..10 {
        let next = learner.update_lambda(&refs).unwrap();
        shrank &= next < lam2;
        positive &= next > 0.0;
        lam2 = next;
    }

    verdict(
        "c4",
        grew && shrank && positive,
        start.elapsed(),
        Duration::from_secs(10),
        &format!(
            "violating batch grew lambda to {lambda:.4}, satisfied batch shrank it to {lam2:.4} (> 0)"
        ),
    );
}

// ---------------------------------------------------------------------
// Criterion 5: constant-score scaling equivalence
// ---------------------------------------------------------------------

#[test]
fn c05_scaled_representation_equals_reweighted_reward() {
    let start = Instant::now();
    let mut rng = stream(5, StreamId::Init);
    let phi = PhiNet::<f64>::vector(2, &[32, 32], 2, &mut rng);
    let z = sample_skill(2, &mut rng).unwrap();
    let pairs: Vec<(State, State)> = (0..1_000)
        .map(|_| {
            use rand::Rng;
            let a = State::Vector(vec![
                rng.random_range(-15.0..15.0),
                rng.random_range(-15.0..15.0),
            ]);
            let b = State::Vector(vec![
                rng.random_range(-15.0..15.0),
                rng.random_range(-15.0..15.0),
            ]);
            (a, b)
        })
        .collect();
    let mut worst = 0.0f64;
    let mut all_hold = true;
    for f_const in [0.25, 0.5, 1.0, 2.0] {
        let report = scaled_phi_check(&phi, f_const, &pairs, &z).unwrap();
        assert_eq!(report.pairs, 1_000);
        all_hold &= report.holds(1e-9);
        worst = worst.max(report.max_reward_deviation);
    }
    verdict(
        "c5",
        all_hold,
        start.elapsed(),
        Duration::from_secs(10),
        &format!("4000 scaled pairs, max reward deviation {worst:.2e} (< 1e-9), no boundary disagreements"),
    );
}

// ---------------------------------------------------------------------
// Criterion 6: flip elimination on the cart
// ---------------------------------------------------------------------

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

#[test]
fn c06_score_weighting_eliminates_flips() {
    let start = Instant::now();
    let mut fog_flips = Vec::new();
    let mut fog_cov = Vec::new();
    let mut metra_flips = Vec::new();
    let mut metra_cov = Vec::new();
    for seed in SEEDS {
        let run = trained(&tip_fog(0.0, 0.0, seed));
        let ev = eval_run(&load(&run), seed, None);
        fog_flips.push(ev.report.flip_pct);
        fog_cov.push(ev.report.coverage as f64);
        let run = trained(&metra(EnvKind::TipCart, seed));
        let ev = eval_run(&load(&run), seed, None);
        metra_flips.push(ev.report.flip_pct);
        metra_cov.push(ev.report.coverage as f64);
    }
    let fog_flip = mean(&fog_flips);
    let metra_flip = mean(&metra_flips);
    let fog_c = mean(&fog_cov);
    let metra_c = mean(&metra_cov);
    let pass = fog_flip < 10.0 && metra_flip > 40.0 && fog_c >= 0.6 * metra_c;
    verdict(
        "c6",
        pass,
        start.elapsed(),
        MINUTE * 45,
        &format!(
            "flip% fog {fog_flip:.1} (< 10) vs unweighted {metra_flip:.1} (> 40); coverage {fog_c:.1} vs {metra_c:.1} (ratio {:.2} >= 0.6)",
            fog_c / metra_c
        ),
    );
}

// ---------------------------------------------------------------------
// Criterion 7: hazard avoidance in the room
// ---------------------------------------------------------------------

#[test]
fn c07_binary_score_avoids_the_hazard_half() {
    let start = Instant::now();
    let hazard: RegionSpec = "x>0".parse().unwrap();
    let mut fog_frac = Vec::new();
    let mut metra_frac = Vec::new();
    let mut safe_pairs = Vec::new();
    for seed in SEEDS {
        let run = trained(&room_embed(Method::Fog, ScoreMode::Binary, seed));
        let ev = eval_run(&load(&run), seed, Some(&hazard));
        fog_frac.push(ev.report.hazard_fraction);
        let fog_safe = ev.report.safe_coverage;
        let run = trained(&metra(EnvKind::PointRoom, seed));
        let ev = eval_run(&load(&run), seed, Some(&hazard));
        metra_frac.push(ev.report.hazard_fraction);
        safe_pairs.push((fog_safe, ev.report.safe_coverage));
    }
    let fog_f = mean(&fog_frac);
    let metra_f = mean(&metra_frac);
    let safe_every_seed = safe_pairs.iter().all(|(f, m)| f > m);
    let pass = fog_f < 0.10 && metra_f > 0.30 && safe_every_seed;
    verdict(
        "c7",
        pass,
        start.elapsed(),
        MINUTE * 45,
        &format!(
            "hazard-bin fraction fog {fog_f:.3} (< 0.10) vs unweighted {metra_f:.3} (> 0.30); safe coverage per seed {safe_pairs:?}"
        ),
    );
}

// ---------------------------------------------------------------------
// Criterion 8: alpha sweep
// ---------------------------------------------------------------------

#[test]
fn c08_flips_grow_with_alpha() {
    let start = Instant::now();
    let mut flips = Vec::new();
    for alpha in [0.0, 0.5, 0.8] {
        let per_seed: Vec<f64> = SEEDS
            .iter()
            .map(|&seed| {
                let run = trained(&tip_fog(alpha, 0.0, seed));
                eval_run(&load(&run), seed, None).report.flip_pct
            })
            .collect();
        flips.push(mean(&per_seed));
    }
    let pass = flips[0] <= flips[1] && flips[1] <= flips[2];
    verdict(
        "c8",
        pass,
        start.elapsed(),
        MINUTE * 90,
        &format!(
            "seed-mean flip% over alpha 0/0.5/0.8 = {:.1}/{:.1}/{:.1} (non-decreasing)",
            flips[0], flips[1], flips[2]
        ),
    );
}

// ---------------------------------------------------------------------
// Criterion 9: score-noise sweep
// ---------------------------------------------------------------------

#[test]
fn c09_flips_grow_with_score_noise_while_coverage_stays() {
    let start = Instant::now();
    let mut flips = Vec::new();
    let mut covs = Vec::new();
    for noise_b in [0.0, 0.25, 0.5] {
        let mut per_flip = Vec::new();
        let mut per_cov = Vec::new();
        for &seed in &SEEDS {
            let run = trained(&tip_fog(0.0, noise_b, seed));
            let report = eval_run(&load(&run), seed, None).report;
            per_flip.push(report.flip_pct);
            per_cov.push(report.coverage as f64);
        }
        flips.push(mean(&per_flip));
        covs.push(mean(&per_cov));
    }
    let monotone = flips[0] <= flips[1] && flips[1] <= flips[2];
    let cov_max = covs.iter().cloned().fold(f64::MIN, f64::max);
    let cov_min = covs.iter().cloned().fold(f64::MAX, f64::min);
    let spread = (cov_max - cov_min) / cov_max;
    let pass = monotone && spread < 0.25;
    verdict(
        "c9",
        pass,
        start.elapsed(),
        MINUTE * 90,
        &format!(
            "seed-mean flip% over b 0/0.25/0.5 = {:.1}/{:.1}/{:.1} (non-decreasing); coverage {:.1}/{:.1}/{:.1}, spread {:.0}% (< 25%)",
            flips[0], flips[1], flips[2], covs[0], covs[1], covs[2], spread * 100.0
        ),
    );
}

// ---------------------------------------------------------------------
// Criterion 10: raw score maximization is insufficient
// ---------------------------------------------------------------------

#[test]
fn c10_direct_score_rewards_collapse_coverage() {
    let start = Instant::now();
    let fog_run = trained(&room_embed(Method::Fog, ScoreMode::Softmax, 0));
    let fog_cov = eval_run(&load(&fog_run), 0, None).report.coverage as f64;
    let frsac_run = trained(&room_embed(Method::FrSac, ScoreMode::Softmax, 0));
    let frsac_cov = eval_run(&load(&frsac_run), 0, None).report.coverage as f64;
    let pass = frsac_cov < 0.5 * fog_cov;
    verdict(
        "c10",
        pass,
        start.elapsed(),
        MINUTE * 30,
        &format!(
            "coverage: raw-score learner {frsac_cov:.0} vs skill learner {fog_cov:.0} (ratio {:.2} < 0.5)",
            frsac_cov / fog_cov
        ),
    );
}

// ---------------------------------------------------------------------
// Criterion 11: downstream goal-reaching controller
// ---------------------------------------------------------------------

#[test]
fn c11_controller_beats_random_skills() {
    let start = Instant::now();
    let run = trained(&room_embed(Method::Fog, ScoreMode::Binary, 0));
    let trainer = load(&run);
    let frozen = trainer.policy();
    let (_, controller) = train_controller(frozen, 200, 0).unwrap();
    let random = random_skill_baseline(frozen, 200, 0).unwrap();
    let tail = |rs: &[fog::hier::EpisodeReturn]| {
        let k = rs.len().min(50);
        rs[rs.len() - k..].iter().map(|r| r.ret).sum::<f64>() / k as f64
    };
    let ctrl = tail(&controller);
    let rand = tail(&random);
    let pass = ctrl > 0.0 && ctrl >= 2.0 * rand;
    verdict(
        "c11",
        pass,
        start.elapsed(),
        MINUTE * 20,
        &format!("final-50 mean return: controller {ctrl:.3} vs random skills {rand:.3} (>= 2x)"),
    );
}
