//! Runtime self-checks of the incremental structures and metrics against
//! brute-force recomputation, for the `verify` subcommand.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dynamics::{run, Simulation, WorldConfig, TRACE_HEADER};
use crate::metrics::{auc_est, auc_for_item, ProbeMode};
use crate::recommender::{recommend, score, RecommenderConfig, ScoreScratch, SimilarityKind};
use crate::world::{new_synthetic, BipartiteState, Provenance};

#[derive(Debug, Clone, PartialEq)]
pub struct CheckResult {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

fn check(name: &'static str, outcome: std::result::Result<String, String>) -> CheckResult {
    match outcome {
        Ok(detail) => CheckResult {
            name,
            passed: true,
            detail,
        },
        Err(detail) => CheckResult {
            name,
            passed: false,
            detail,
        },
    }
}

/// Runs every check with RNG seed `seed`.
pub fn run_all(seed: u64) -> Vec<CheckResult> {
    vec![
        check("incremental-counts", incremental_counts(seed, 10_000)),
        check("recommend-argmax", recommend_argmax(seed)),
        check("auc-pairwise", auc_pairwise(seed, 100_000)),
        check("auc-shift-invariance", auc_shift(seed)),
        check("probe-leaves-state", probe_leaves_state(seed)),
        check("run-determinism", run_determinism(seed)),
        check("trace-recount", trace_recount(seed)),
    ]
}

fn incremental_counts(seed: u64, events: usize) -> Result<String, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (n, m) = (12, 15);
    let mut dense = BipartiteState::empty(n, m, usize::MAX, Some(2.0));
    let mut sparse = BipartiteState::empty(n, m, 0, None);
    let provs = [Provenance::Initial, Provenance::ViaSelection, Provenance::ViaRecommendation];
    for e in 0..events {
        let user = rng.random_range(0..n);
        let item = rng.random_range(0..m);
        if dense.holds(user, item) {
            dense.remove_item(user, item).map_err(|x| x.to_string())?;
            sparse.remove_item(user, item).map_err(|x| x.to_string())?;
        } else {
            let p = provs[rng.random_range(0..3)];
            dense.add_item(user, item, p).map_err(|x| x.to_string())?;
            sparse.add_item(user, item, p).map_err(|x| x.to_string())?;
        }
        if e % 1000 == 999 && !(dense.verify_against_oracle() && sparse.verify_against_oracle()) {
            return Err(format!("counts diverged after {} events", e + 1));
        }
    }
    Ok(format!("{events} add/remove events"))
}

fn recommend_argmax(seed: u64) -> Result<String, String> {
    let cfg = WorldConfig {
        n_users: 6,
        n_items: 9,
        n_genres: 3,
        k: 2,
        ..WorldConfig::desk()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (state, _) = new_synthetic(&cfg, &mut rng).map_err(|e| e.to_string())?;
    let mut scratch = ScoreScratch::default();
    let mut checked = 0;
    for similarity in [SimilarityKind::CommonNeighbor, SimilarityKind::Cosine] {
        let rc = RecommenderConfig {
            similarity,
            ..RecommenderConfig::default()
        };
        for user in 0..cfg.n_users {
            let scores: Vec<(usize, f64)> = (0..cfg.n_items)
                .filter(|&a| !state.holds(user, a))
                .map(|a| score(&state, user, a, &rc).map(|s| (a, s)))
                .collect::<crate::Result<_>>()
                .map_err(|e| e.to_string())?;
            let best = scores.iter().map(|s| s.1).fold(f64::NEG_INFINITY, f64::max);
            let tied: Vec<usize> = scores.iter().filter(|s| s.1 == best).map(|s| s.0).collect();
            let mut seen = vec![false; cfg.n_items];
            for _ in 0..50 * tied.len() {
                let pick = recommend(&state, user, &rc, &mut rng, &mut scratch)
                    .map_err(|e| e.to_string())?;
                if !tied.contains(&pick) {
                    return Err(format!("user {user}: picked {pick}, maximal items {tied:?}"));
                }
                seen[pick] = true;
            }
            if tied.iter().any(|&t| !seen[t]) {
                return Err(format!("user {user}: some of the tied items {tied:?} never chosen"));
            }
            checked += 1;
        }
    }
    Ok(format!("{checked} user/similarity combinations"))
}

fn random_scores(rng: &mut ChaCha8Rng) -> Vec<f64> {
    let len = rng.random_range(2..60);
    let levels = rng.random_range(1..8);
    (0..len)
        .map(|_| f64::from(rng.random_range(0..levels)))
        .collect()
}

fn auc_pairwise(seed: u64, samples: usize) -> Result<String, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xa0c);
    let mut worst: f64 = 0.0;
    for _ in 0..20 {
        let scores = random_scores(&mut rng);
        let correct = rng.random_range(0..scores.len());
        let exact = auc_for_item(&scores, correct).map_err(|e| e.to_string())?;
        // a random candidate may be the correct item itself, which never
        // counts, matching the per-candidate denominator
        let mut credit = 0.0;
        for _ in 0..samples {
            let other = rng.random_range(0..scores.len());
            if other == correct {
                continue;
            }
            if scores[other] < scores[correct] {
                credit += 1.0;
            } else if scores[other] == scores[correct] {
                credit += 0.5;
            }
        }
        let estimate = credit / samples as f64;
        worst = worst.max((estimate - exact).abs());
    }
    if worst <= 0.01 {
        Ok(format!("max deviation {worst:.4}"))
    } else {
        Err(format!("max deviation {worst:.4} exceeds 0.01"))
    }
}

fn auc_shift(seed: u64) -> Result<String, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5f);
    for _ in 0..100 {
        let scores = random_scores(&mut rng);
        let correct = rng.random_range(0..scores.len());
        let shifted: Vec<f64> = scores.iter().map(|s| s + 7.0).collect();
        let a = auc_for_item(&scores, correct).map_err(|e| e.to_string())?;
        let b = auc_for_item(&shifted, correct).map_err(|e| e.to_string())?;
        if a != b {
            return Err(format!("{a} != {b} after shifting {scores:?}"));
        }
    }
    Ok("100 vectors".into())
}

fn small_config(seed: u64) -> WorldConfig {
    WorldConfig {
        n_users: 40,
        n_items: 20,
        n_genres: 4,
        k: 4,
        phi: 0.5,
        updates_per_user: 50,
        master_seed: seed,
        auc_repetitions: 3,
        ..WorldConfig::desk()
    }
}

fn probe_leaves_state(seed: u64) -> Result<String, String> {
    let mut sim = Simulation::synthetic(small_config(seed)).map_err(|e| e.to_string())?;
    sim.advance_to(u64::MAX, None).map_err(|e| e.to_string())?;
    let before = sim.state().clone();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for mode in [ProbeMode::Rebuild, ProbeMode::ReuseLive] {
        auc_est(sim.state(), sim.truth(), &RecommenderConfig::default(), &mut rng, 3, mode);
    }
    if *sim.state() == before {
        Ok("state unchanged".into())
    } else {
        Err("probe evaluation modified the live state".into())
    }
}

fn run_determinism(seed: u64) -> Result<String, String> {
    let cfg = small_config(seed);
    let a = run(&cfg).map_err(|e| e.to_string())?;
    let b = run(&cfg).map_err(|e| e.to_string())?;
    if a.csv_row() == b.csv_row() {
        Ok(a.csv_row())
    } else {
        Err(format!("{} != {}", a.csv_row(), b.csv_row()))
    }
}

fn trace_recount(seed: u64) -> Result<String, String> {
    let mut sim = Simulation::synthetic(small_config(seed)).map_err(|e| e.to_string())?;
    let mut trace = format!("{TRACE_HEADER}\n").into_bytes();
    sim.advance_to(u64::MAX, Some(&mut trace)).map_err(|e| e.to_string())?;
    let text = String::from_utf8(trace).map_err(|e| e.to_string())?;
    let (mut recs, mut hits) = (0u64, 0u64);
    for line in text.lines().skip(1) {
        let f: Vec<&str> = line.split(',').collect();
        let step: u64 = f[0].parse().map_err(|_| format!("bad trace line `{line}`"))?;
        if step >= sim.window_start() && f[2] == "recommendation" {
            recs += 1;
            hits += u64::from(f[5] == "1");
        }
    }
    let tally = sim.tally();
    if recs == tally.recommendations && hits == tally.matched {
        Ok(format!("{hits}/{recs} matching recommendations"))
    } else {
        Err(format!(
            "trace gives {hits}/{recs}, tally {}/{}",
            tally.matched, tally.recommendations
        ))
    }
}
