//! Acceptance suite at desk scale. Prints one PASS, FAIL or SKIP line per
//! criterion and exits nonzero when any criterion fails.

use std::collections::HashMap;
use std::process::ExitCode;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use recsim::metrics::auc_for_item;
use recsim::recommender::BiasScope;
use recsim::sweep::{linear_grid, run_replay_sweep, run_sweep, PointResult, SweepSpec};
use recsim::{BipartiteState, Mode, Provenance, SimilarityKind, WorldConfig};

const INSTANCES: u64 = 10;
const CN: SimilarityKind = SimilarityKind::CommonNeighbor;
const COS: SimilarityKind = SimilarityKind::Cosine;

enum Verdict {
    Pass(String),
    Fail(String),
    Skip(String),
}

fn check(ok: bool, detail: String) -> Verdict {
    if ok {
        Verdict::Pass(detail)
    } else {
        Verdict::Fail(detail)
    }
}

/// phi grid without the endpoint 1, where omega is undefined.
fn phi_grid() -> Vec<f64> {
    linear_grid(0.95, 0.05)
}

fn fmt(v: Option<f64>) -> String {
    v.map_or_else(|| "undefined".to_string(), |x| format!("{x:.4}"))
}

fn fmt_phi(i: Option<usize>) -> String {
    i.map_or_else(|| "none up to 0.95".to_string(), |i| format!("{}", phi_grid()[i]))
}

/// Memoized grid points, keyed by the resolved config.
struct Runner {
    cache: HashMap<String, PointResult>,
}

impl Runner {
    fn point(&mut self, cfg: &WorldConfig) -> &PointResult {
        let key = serde_json::to_string(cfg).unwrap();
        self.cache.entry(key.clone()).or_insert_with(|| {
            let spec = SweepSpec {
                instances: INSTANCES,
                ..SweepSpec::from_base(cfg.clone())
            };
            let mut result = run_sweep(&spec).expect("grid point runs");
            let point = result.points.remove(0);
            assert_eq!(point.failures(), 0, "failed runs at {key}");
            point
        })
    }

    fn omega(&mut self, cfg: &WorldConfig, phi: f64) -> Option<f64> {
        let cfg = WorldConfig { phi, ..cfg.clone() };
        self.point(&cfg).omega().mean
    }

    /// Index of the smallest grid phi whose mean omega exceeds 0.9.
    fn threshold(&mut self, cfg: &WorldConfig) -> Option<usize> {
        phi_grid()
            .into_iter()
            .position(|phi| self.omega(cfg, phi).is_some_and(|w| w > 0.9))
    }
}

fn base(similarity: SimilarityKind, g: usize, k: usize) -> WorldConfig {
    let mut cfg = WorldConfig {
        n_genres: g,
        k,
        ..WorldConfig::desk()
    };
    cfg.recommender.similarity = similarity;
    cfg
}

fn random_regime(r: &mut Runner) -> Verdict {
    let w = r.omega(&base(CN, 10, 7), 0.2);
    check(
        w.is_some_and(|w| (0.07..=0.14).contains(&w)),
        format!("mean omega at phi=0.2 is {}, want [0.07, 0.14]", fmt(w)),
    )
}

fn perfect_regime(r: &mut Runner) -> Verdict {
    let w = r.omega(&base(CN, 10, 7), 0.9);
    check(
        w.is_some_and(|w| w >= 0.98),
        format!("mean omega at phi=0.9 is {}, want >= 0.98", fmt(w)),
    )
}

fn omega_curve(r: &mut Runner, cfg: &WorldConfig) -> Vec<f64> {
    phi_grid()
        .into_iter()
        .map(|phi| r.omega(cfg, phi).expect("recommendation events below phi=1"))
        .collect()
}

fn abrupt_transition(r: &mut Runner) -> Verdict {
    let curve = omega_curve(r, &base(CN, 10, 7));
    let (at, jump) = curve
        .windows(2)
        .enumerate()
        .map(|(i, w)| (i, w[1] - w[0]))
        .fold((0, f64::MIN), |best, x| if x.1 > best.1 { x } else { best });
    let grid = phi_grid();
    check(
        jump >= 0.4,
        format!("largest step {jump:.4} between phi={} and phi={}, want >= 0.4", grid[at], grid[at + 1]),
    )
}

fn transition_width(curve: &[f64]) -> f64 {
    curve.iter().filter(|&&w| w > 0.2 && w < 0.9).count() as f64 * 0.05
}

fn gentler_cosine(r: &mut Runner) -> Verdict {
    let cn = transition_width(&omega_curve(r, &base(CN, 10, 7)));
    let cos = transition_width(&omega_curve(r, &base(COS, 10, 7)));
    check(cos >= cn, format!("width with 0.2 < omega < 0.9: cosine {cos:.2}, cn {cn:.2}"))
}

/// Orders thresholds with "never reached" above every grid value.
fn rank(i: Option<usize>) -> usize {
    i.unwrap_or(usize::MAX)
}

fn threshold_vs_genres(r: &mut Runner) -> Verdict {
    let t5 = r.threshold(&base(CN, 5, 7));
    let t20 = r.threshold(&base(CN, 20, 7));
    check(
        rank(t5) > rank(t20),
        format!("phi* G=5: {}, G=20: {}", fmt_phi(t5), fmt_phi(t20)),
    )
}

fn threshold_vs_k(r: &mut Runner) -> Verdict {
    let t11 = r.threshold(&base(CN, 10, 11));
    let t3 = r.threshold(&base(CN, 10, 3));
    check(
        rank(t11) >= rank(t3),
        format!("phi* k=11: {}, k=3: {}", fmt_phi(t11), fmt_phi(t3)),
    )
}

fn auc_divergence(r: &mut Runner) -> Verdict {
    let cfg = base(CN, 10, 3);
    let low = r.point(&WorldConfig { phi: 0.1, ..cfg.clone() });
    let (real, est) = (low.auc_real().mean, low.auc_est().mean);
    let mut ok = matches!((real, est), (Some(a), Some(e)) if (0.45..=0.60).contains(&a) && e - a >= 0.15);
    let mut detail = format!("phi=0.1: auc_real {}, auc_est {}", fmt(real), fmt(est));
    let top = phi_grid()
        .into_iter()
        .rev()
        .find(|&phi| r.omega(&cfg, phi).is_some_and(|w| w >= 0.98));
    match top {
        Some(phi) => {
            let p = r.point(&WorldConfig { phi, ..cfg.clone() });
            let (real, est) = (p.auc_real().mean, p.auc_est().mean);
            ok &= matches!((real, est), (Some(a), Some(e)) if (e - a).abs() <= 0.05);
            detail += &format!("; phi={phi}: auc_real {}, auc_est {}", fmt(real), fmt(est));
        }
        None => {
            ok = false;
            detail += "; no grid phi reaches omega >= 0.98";
        }
    }
    check(ok, detail)
}

fn two_taste(r: &mut Runner) -> Verdict {
    let mut w1 = |f1: f64| {
        let cfg = WorldConfig {
            mode: Mode::TwoTaste,
            f1,
            phi: 0.95,
            ..base(CN, 10, 7)
        };
        r.point(&cfg).omega1().mean
    };
    let (a, b, c) = (w1(0.2), w1(0.8), w1(0.5));
    let ok = a.is_some_and(|v| v < 0.2)
        && b.is_some_and(|v| v > 0.8)
        && c.is_some_and(|v| (v - 0.5).abs() <= 0.05);
    check(
        ok,
        format!("omega1 at f1=0.2: {}, f1=0.8: {}, f1=0.5: {}", fmt(a), fmt(b), fmt(c)),
    )
}

fn bias_improvement(r: &mut Runner) -> Verdict {
    let mut ok = true;
    let mut parts = Vec::new();
    for sim in [CN, COS] {
        let plain = base(sim, 10, 7);
        let mut biased = plain.clone();
        biased.recommender.bias_b = 2.0;
        biased.recommender.bias_scope = BiasScope::Everywhere;
        let t1 = r.threshold(&plain);
        let t2 = r.threshold(&biased);
        ok &= match (t1, t2) {
            (_, None) => false,
            (None, Some(_)) => true,
            (Some(a), Some(b)) => b < a,
        };
        parts.push(format!("{}: b=1 {}, b=2 {}", sim.as_str(), fmt_phi(t1), fmt_phi(t2)));
    }
    check(ok, format!("phi* with bias in similarities and scores; {}", parts.join("; ")))
}

/// Degrees and co-occurrence recounted from explicit collections.
fn recount(n_items: usize, collections: &[Vec<usize>]) -> (Vec<u32>, Vec<u32>) {
    let mut degree = vec![0u32; n_items];
    let mut cooc = vec![0u32; n_items * n_items];
    for c in collections {
        for &a in c {
            degree[a] += 1;
            for &b in c {
                if a != b {
                    cooc[a * n_items + b] += 1;
                }
            }
        }
    }
    (degree, cooc)
}

fn incremental_oracle(_: &mut Runner) -> Verdict {
    let start = Instant::now();
    let (n, m) = (30, 25);
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let mut states = [
        BipartiteState::empty(n, m, usize::MAX, None),
        BipartiteState::empty(n, m, 0, None),
        BipartiteState::empty(n, m, usize::MAX, Some(2.0)),
    ];
    let mut mirror: Vec<Vec<usize>> = vec![Vec::new(); n];
    for _ in 0..10_000 {
        let user = rng.random_range(0..n);
        let item = rng.random_range(0..m);
        if let Some(pos) = mirror[user].iter().position(|&x| x == item) {
            mirror[user].swap_remove(pos);
            for s in &mut states {
                s.remove_item(user, item).unwrap();
            }
        } else {
            let prov = if rng.random::<bool>() {
                Provenance::ViaSelection
            } else {
                Provenance::ViaRecommendation
            };
            mirror[user].push(item);
            for s in &mut states {
                s.add_item(user, item, prov).unwrap();
            }
        }
    }
    let (degree, cooc) = recount(m, &mirror);
    let mut mismatches = 0;
    for s in &states {
        mismatches += (0..m).filter(|&a| s.item_degree(a) != degree[a]).count();
        for a in 0..m {
            mismatches += (0..m).filter(|&b| s.cooccurrence(a, b) != cooc[a * m + b]).count();
        }
    }
    let secs = start.elapsed().as_secs_f64();
    check(
        mismatches == 0 && secs < 5.0,
        format!("{mismatches} mismatched counts over dense, sparse and weighted states; {secs:.3} s"),
    )
}

fn auc_oracle(_: &mut Runner) -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut worst: f64 = 0.0;
    for _ in 0..20 {
        let n = rng.random_range(2..200);
        let levels = rng.random_range(1..12);
        let scores: Vec<f64> = (0..n).map(|_| f64::from(rng.random_range(0..levels))).collect();
        let correct = rng.random_range(0..n);
        let samples = 100_000;
        let mut credit = 0.0;
        for _ in 0..samples {
            let other = rng.random_range(0..n);
            if other == correct {
                continue;
            }
            if scores[other] < scores[correct] {
                credit += 1.0;
            } else if scores[other] == scores[correct] {
                credit += 0.5;
            }
        }
        let exact = auc_for_item(&scores, correct).unwrap();
        worst = worst.max((credit / samples as f64 - exact).abs());
    }
    check(worst <= 0.01, format!("largest deviation {worst:.5} over 20 score vectors"))
}

fn digest(spec: &SweepSpec, parallelism: usize) -> Vec<u8> {
    let spec = SweepSpec {
        parallelism,
        ..spec.clone()
    };
    let csv = run_sweep(&spec).unwrap().to_csv().unwrap();
    Sha256::digest(csv.as_bytes()).to_vec()
}

fn determinism(_: &mut Runner) -> Verdict {
    let small = WorldConfig {
        n_users: 60,
        n_items: 30,
        n_genres: 3,
        k: 4,
        updates_per_user: 200,
        auc_repetitions: 3,
        ..WorldConfig::desk()
    };
    let single = SweepSpec {
        phi: vec![0.0, 0.3, 0.7, 1.0],
        similarity: vec![CN, COS],
        bias_b: vec![1.0, 2.0],
        instances: 3,
        ..SweepSpec::from_base(small.clone())
    };
    let two = SweepSpec {
        f1: vec![0.2, 0.5],
        phi: vec![0.5, 0.95],
        instances: 3,
        ..SweepSpec::from_base(WorldConfig {
            mode: Mode::TwoTaste,
            ..small
        })
    };
    let mut ok = true;
    for spec in [&single, &two] {
        let a = digest(spec, 1);
        ok &= a == digest(spec, 1) && a == digest(spec, 4);
    }
    check(ok, "sha256 of two serial runs and one 4-thread run per spec".to_string())
}

fn movielens(_: &mut Runner) -> Verdict {
    let Ok(path) = std::env::var("RECSIM_MOVIELENS") else {
        return Verdict::Skip("set RECSIM_MOVIELENS to the MovieLens-100K u.data file".into());
    };
    let table = match recsim::movielens::parse_ratings(&path) {
        Ok(t) => t,
        Err(e) => return Verdict::Fail(format!("{path}: {e}")),
    };
    let spec = SweepSpec {
        phi: vec![0.2, 0.5, 0.8, 0.95, 1.0],
        instances: 3,
        ..SweepSpec::from_base(WorldConfig {
            updates_per_user: 5000,
            ..WorldConfig::desk()
        })
    };
    let result = run_replay_sweep(&spec, &table).unwrap();
    let at = |phi: f64| result.points.iter().find(|p| p.config.phi == phi).unwrap();
    let w = |phi: f64| at(phi).omega().mean.unwrap_or(f64::NAN);
    let gap = |phi: f64| {
        let p = at(phi);
        p.auc_est().mean.unwrap_or(f64::NAN) - p.auc_real().mean.unwrap_or(f64::NAN)
    };
    let gaps: Vec<f64> = [0.2, 0.5, 0.8, 1.0].into_iter().map(gap).collect();
    let ok = w(0.2) <= w(0.5)
        && w(0.5) <= w(0.8)
        && w(0.95) < w(0.8)
        && gaps[0] > 0.0
        && gaps.windows(2).all(|g| g[1].abs() <= g[0].abs())
        && gaps[3].abs() <= 0.05;
    check(
        ok,
        format!(
            "omega at 0.2/0.5/0.8/0.95: {:.4}/{:.4}/{:.4}/{:.4}; auc gap at 0.2/0.5/0.8/1: {:.4}/{:.4}/{:.4}/{:.4}",
            w(0.2),
            w(0.5),
            w(0.8),
            w(0.95),
            gaps[0],
            gaps[1],
            gaps[2],
            gaps[3]
        ),
    )
}

type Criterion = fn(&mut Runner) -> Verdict;

fn main() -> ExitCode {
    let criteria: [(&str, Criterion); 13] = [
        ("random regime", random_regime),
        ("perfect regime", perfect_regime),
        ("abrupt cn transition", abrupt_transition),
        ("gentler cosine transition", gentler_cosine),
        ("threshold vs genres", threshold_vs_genres),
        ("threshold vs k", threshold_vs_k),
        ("auc divergence", auc_divergence),
        ("two-taste under-representation", two_taste),
        ("bias improvement", bias_improvement),
        ("incremental structure oracle", incremental_oracle),
        ("auc formula oracle", auc_oracle),
        ("determinism", determinism),
        ("movielens replay", movielens),
    ];
    let mut runner = Runner { cache: HashMap::new() };
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let verdict = f(&mut runner);
        let secs = start.elapsed().as_secs_f64();
        let (tag, detail) = match verdict {
            Verdict::Pass(d) => ("PASS", d),
            Verdict::Fail(d) => {
                failed += 1;
                ("FAIL", d)
            }
            Verdict::Skip(d) => ("SKIP", d),
        };
        println!("{tag} {:>2} {name}: {detail} ({secs:.1} s)", i + 1);
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        ExitCode::FAILURE
    } else {
        ExitCode::SUCCESS
    }
}
