use recsim::dynamics::{Channel, Truth, TRACE_HEADER};
use recsim::{run, BipartiteState, Mode, Provenance, Simulation, TasteMap, WorldConfig};

fn small(phi: f64) -> WorldConfig {
    WorldConfig {
        n_users: 60,
        n_items: 30,
        n_genres: 3,
        k: 4,
        phi,
        updates_per_user: 100,
        auc_repetitions: 2,
        ..WorldConfig::desk()
    }
}

#[test]
fn same_config_same_report() {
    let a = run(&small(0.4)).unwrap();
    let b = run(&small(0.4)).unwrap();
    assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
    let other = run(&WorldConfig {
        instance_index: 1,
        ..small(0.4)
    })
    .unwrap();
    assert_ne!(a.csv_row(), other.csv_row());
}

#[test]
fn omega_matches_trace_recount() {
    let mut sim = Simulation::synthetic(small(0.3)).unwrap();
    let mut trace = Vec::new();
    sim.advance_to(u64::MAX, Some(&mut trace)).unwrap();
    let text = String::from_utf8(trace).unwrap();
    let tastes = match sim.truth() {
        Truth::Tastes(t) => t.clone(),
        Truth::Replay(_) => unreachable!(),
    };
    let (mut recs, mut hits) = (0u64, 0u64);
    for line in text.lines() {
        let f: Vec<&str> = line.split(',').collect();
        assert_eq!(f.len(), TRACE_HEADER.split(',').count());
        let step: u64 = f[0].parse().unwrap();
        let user: usize = f[1].parse().unwrap();
        let item: usize = f[3].parse().unwrap();
        let genre: u32 = f[4].parse().unwrap();
        assert_eq!(tastes.genre(item), genre);
        assert_eq!(f[5] == "1", tastes.tastes(user).contains(&genre));
        if step >= sim.window_start() && f[2] == "recommendation" {
            recs += 1;
            hits += u64::from(f[5] == "1");
        }
    }
    let report = sim.finish();
    assert_eq!(report.recommendation_events, recs);
    assert_eq!(report.omega, Some(hits as f64 / recs as f64));
}

#[test]
fn channel_frequency_within_four_sigma() {
    let phi = 0.3;
    let mut sim = Simulation::synthetic(small(phi)).unwrap();
    let mut selections = 0u64;
    let n = 6000u64;
    for _ in 0..n {
        if sim.advance_one().unwrap().channel == Channel::Selection {
            selections += 1;
        }
    }
    let expected = phi * n as f64;
    let sigma = (n as f64 * phi * (1.0 - phi)).sqrt();
    assert!((selections as f64 - expected).abs() < 4.0 * sigma, "{selections} selections");
}

#[test]
fn degrees_constant_and_counts_consistent() {
    let mut sim = Simulation::synthetic(small(0.5)).unwrap();
    for _ in 0..20 {
        sim.advance_to(sim.steps_done() + 150, None).unwrap();
        for u in 0..60 {
            assert_eq!(sim.state().degree_of_user(u), 4);
        }
        assert!(sim.state().verify_against_oracle());
    }
}

#[test]
fn full_selection_always_matches() {
    let mut sim = Simulation::synthetic(small(1.0)).unwrap();
    while sim.steps_done() < sim.total_steps() {
        let o = sim.advance_one().unwrap();
        assert_eq!(o.channel, Channel::Selection);
        assert!(o.matched);
    }
    assert_eq!(sim.finish().omega, None);
}

/// Every user holds all but one item of their own genre, and each such
/// pattern is repeated, so every own-genre candidate keeps a positive score
/// and off-genre items score zero.
#[test]
fn segregated_state_is_absorbing() {
    let (g, per_genre, copies) = (3, 4, 3);
    let m = g * per_genre;
    let item_genre: Vec<u32> = (0..m).map(|i| (i / per_genre) as u32).collect();
    let mut collections = Vec::new();
    let mut tastes = Vec::new();
    for genre in 0..g {
        for missing in 0..per_genre {
            for _ in 0..copies {
                let held = (0..per_genre)
                    .filter(|&j| j != missing)
                    .map(|j| (genre * per_genre + j, Provenance::Initial))
                    .collect();
                collections.push(held);
                tastes.push(vec![genre as u32]);
            }
        }
    }
    let n = collections.len();
    let state = BipartiteState::from_collections(m, &collections, usize::MAX, None).unwrap();
    let taste_map = TasteMap::new(g, item_genre, tastes).unwrap();
    let cfg = WorldConfig {
        n_users: n,
        n_items: m,
        n_genres: g,
        k: per_genre - 1,
        phi: 0.0,
        updates_per_user: 200,
        burn_in_fraction: 0.0,
        ..WorldConfig::desk()
    };
    let mut sim = Simulation::from_parts(cfg, state, Truth::Tastes(taste_map)).unwrap();
    sim.advance_to(u64::MAX, None).unwrap();
    let report = sim.finish();
    assert_eq!(report.omega, Some(1.0));
    assert_eq!(report.recommendation_events, n as u64 * 200);
}

#[test]
fn two_taste_symmetric_split() {
    let cfg = WorldConfig {
        mode: Mode::TwoTaste,
        f1: 0.5,
        phi: 0.95,
        updates_per_user: 200,
        ..small(0.95)
    };
    let r = run(&cfg).unwrap();
    let w1 = r.omega1.unwrap();
    assert!((w1 - 0.5).abs() < 0.15, "omega1 {w1}");
    assert!(r.omega.unwrap() >= w1);
}
