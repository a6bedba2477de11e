//! The stochastic event loop.
//!
//! Each event activates one uniformly random user. With probability `phi`
//! the user deliberately selects an un-collected item of their own taste;
//! otherwise they take the recommender's top item. Afterwards one item from
//! the collection held before the acquisition is dropped uniformly at
//! random, so every user keeps a constant degree.
//!
//! # Random stream
//!
//! Every instance owns a single ChaCha8 stream seeded with `master_seed`
//! and positioned on stream number `instance_index`
//! (see [`instance_rng`]). All draws come from it in this fixed order:
//!
//! 1. world construction ([`new_synthetic`] or replay initialisation);
//! 2. per event: activated user; channel (`u < phi` selects); taste
//!    (two-taste selections only, `u < f1` picks taste 1); selected item
//!    index, or the recommender tie-break when more than one item ties;
//!    removal slot;
//! 3. probe draws of the estimated AUC.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{config_err, Error, Result};
use crate::metrics::{auc_est, auc_real, MetricsReport, OmegaTally, ProbeMode, Relevance};
use crate::movielens::{init_replay, RatingsTable, ReplayTruth};
use crate::recommender::{recommend, RecommenderConfig, ScoreScratch};
use crate::world::{new_synthetic, BipartiteState, Provenance, TasteMap, DEFAULT_SPARSE_THRESHOLD};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    #[default]
    SingleTaste,
    TwoTaste,
    Replay,
}

/// How synthetic users' initial collections are drawn.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitMode {
    /// `k` distinct items uniformly from the whole catalogue.
    #[default]
    Uniform,
    /// `k` items from the user's (first) taste, topped up uniformly if the
    /// genre is too small.
    TasteMatched,
}

/// All model parameters of one simulation instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WorldConfig {
    pub n_users: usize,
    pub n_items: usize,
    pub n_genres: usize,
    pub k: usize,
    pub phi: f64,
    pub f1: f64,
    pub updates_per_user: u64,
    pub burn_in_fraction: f64,
    pub mode: Mode,
    pub init: InitMode,
    pub recommender: RecommenderConfig,
    pub master_seed: u64,
    pub instance_index: u64,
    pub auc_repetitions: usize,
    pub probe_mode: ProbeMode,
    pub sparse_threshold: usize,
    /// Replay mode: drop the static collections of ineligible users.
    pub exclude_ineligible_edges: bool,
}

impl Default for WorldConfig {
    fn default() -> Self {
        Self::desk()
    }
}

impl WorldConfig {
    /// Desk-scale preset: N=500, M=100, G=10, k=7, T=2e4.
    pub fn desk() -> Self {
        WorldConfig {
            n_users: 500,
            n_items: 100,
            n_genres: 10,
            k: 7,
            phi: 0.5,
            f1: 0.5,
            updates_per_user: 20_000,
            burn_in_fraction: 0.5,
            mode: Mode::SingleTaste,
            init: InitMode::Uniform,
            recommender: RecommenderConfig::default(),
            master_seed: 1,
            instance_index: 0,
            auc_repetitions: 10,
            probe_mode: ProbeMode::Rebuild,
            sparse_threshold: DEFAULT_SPARSE_THRESHOLD,
            exclude_ineligible_edges: false,
        }
    }

    /// Full-scale preset: N=2000, M=100, G=10, k=7, T=1e5.
    pub fn paper() -> Self {
        WorldConfig {
            n_users: 2000,
            updates_per_user: 100_000,
            ..Self::desk()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.phi) {
            return config_err(format!("phi must lie in [0, 1], got {}", self.phi));
        }
        if !(0.0..=1.0).contains(&self.f1) {
            return config_err(format!("f1 must lie in [0, 1], got {}", self.f1));
        }
        if !(0.0..1.0).contains(&self.burn_in_fraction) {
            return config_err(format!(
                "burn_in_fraction must lie in [0, 1), got {}",
                self.burn_in_fraction
            ));
        }
        self.recommender.validate()?;
        if self.mode == Mode::Replay {
            return Ok(());
        }
        if self.n_users == 0 {
            return config_err("n_users must be at least 1");
        }
        if self.n_genres == 0 || self.n_genres > self.n_items {
            return config_err(format!(
                "need 1 <= G <= M, got G={} M={}",
                self.n_genres, self.n_items
            ));
        }
        if self.k == 0 || self.k >= self.n_items {
            return config_err(format!("need 1 <= k < M, got k={} M={}", self.k, self.n_items));
        }
        if self.mode == Mode::TwoTaste && self.n_genres < 2 {
            return config_err("two-taste mode needs G >= 2");
        }
        Ok(())
    }

    /// `phi,G,k,f1,b,similarity` fields of a report row.
    pub fn key_fields(&self) -> String {
        let synthetic = self.mode != Mode::Replay;
        let opt = |show: bool, v: String| if show { v } else { String::new() };
        format!(
            "{},{},{},{},{},{}",
            self.phi,
            opt(synthetic, self.n_genres.to_string()),
            opt(synthetic, self.k.to_string()),
            opt(self.mode == Mode::TwoTaste, self.f1.to_string()),
            self.recommender.bias_b,
            self.recommender.similarity.as_str()
        )
    }
}

/// The instance stream: ChaCha8 seeded from `master_seed`, stream number
/// `instance_index`. Distinct indices give independent, non-overlapping
/// sequences under one master seed.
pub fn instance_rng(master_seed: u64, instance_index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(instance_index);
    rng
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Channel {
    Selection,
    Recommendation,
    /// Replay selection with no un-collected correct item left.
    Skipped,
}

impl Channel {
    pub fn as_str(self) -> &'static str {
        match self {
            Channel::Selection => "selection",
            Channel::Recommendation => "recommendation",
            Channel::Skipped => "skipped",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StepOutcome {
    pub step: u64,
    pub user: usize,
    pub channel: Channel,
    pub item: Option<usize>,
    /// Item genre (synthetic modes).
    pub genre: Option<u32>,
    /// Genre matches one of the user's tastes, or the item is correct in replay.
    pub matched: bool,
    /// Genre equals the user's first taste.
    pub in_taste1: bool,
    pub fallback: bool,
}

pub const TRACE_HEADER: &str = "step,user,channel,item,genre,match";

impl StepOutcome {
    pub fn trace_row(&self) -> String {
        format!(
            "{},{},{},{},{},{}",
            self.step,
            self.user,
            self.channel.as_str(),
            self.item.map(|i| i.to_string()).unwrap_or_default(),
            self.genre.map(|g| g.to_string()).unwrap_or_default(),
            u8::from(self.matched)
        )
    }
}

/// What decides correctness for a run.
#[derive(Debug, Clone)]
pub enum Truth {
    Tastes(TasteMap),
    Replay(ReplayTruth),
}

impl Relevance for Truth {
    fn is_evaluated(&self, user: usize) -> bool {
        match self {
            Truth::Tastes(t) => t.is_evaluated(user),
            Truth::Replay(r) => r.is_evaluated(user),
        }
    }

    fn is_relevant(&self, user: usize, item: usize) -> bool {
        match self {
            Truth::Tastes(t) => t.is_relevant(user, item),
            Truth::Replay(r) => r.is_relevant(user, item),
        }
    }
}

/// One running instance.
pub struct Simulation {
    config: WorldConfig,
    state: BipartiteState,
    truth: Truth,
    rng: ChaCha8Rng,
    scratch: ScoreScratch,
    picks: Vec<u32>,
    active_users: Vec<u32>,
    steps_done: u64,
    total_steps: u64,
    window_start: u64,
    tally: OmegaTally,
    selection_events: u64,
    fallback_events: u64,
    skipped_events: u64,
}

impl Simulation {
    /// Synthetic world (single- or two-taste mode).
    pub fn synthetic(config: WorldConfig) -> Result<Self> {
        config.validate()?;
        if config.mode == Mode::Replay {
            return config_err("replay mode needs a ratings table");
        }
        let mut rng = instance_rng(config.master_seed, config.instance_index);
        let (state, tastes) = new_synthetic(&config, &mut rng)?;
        let users = (0..config.n_users as u32).collect();
        Ok(Self::assemble(config, state, Truth::Tastes(tastes), rng, users))
    }

    /// Replay of an empirical ratings table.
    pub fn replay(mut config: WorldConfig, table: &RatingsTable) -> Result<Self> {
        config.mode = Mode::Replay;
        config.n_users = table.n_users();
        config.n_items = table.n_items();
        config.validate()?;
        let mut rng = instance_rng(config.master_seed, config.instance_index);
        let (state, truth) = init_replay(
            table,
            &mut rng,
            config.exclude_ineligible_edges,
            config.sparse_threshold,
            config.recommender.weighted_bias(),
        );
        let users = truth.eligible_users().to_vec();
        Ok(Self::assemble(config, state, Truth::Replay(truth), rng, users))
    }

    /// Starts from an explicitly constructed state.
    pub fn from_parts(config: WorldConfig, state: BipartiteState, truth: Truth) -> Result<Self> {
        config.validate()?;
        let rng = instance_rng(config.master_seed, config.instance_index);
        let users = (0..state.n_users() as u32)
            .filter(|&u| truth.is_evaluated(u as usize))
            .collect();
        Ok(Self::assemble(config, state, truth, rng, users))
    }

    fn assemble(
        config: WorldConfig,
        state: BipartiteState,
        truth: Truth,
        rng: ChaCha8Rng,
        active_users: Vec<u32>,
    ) -> Self {
        let total_steps = active_users.len() as u64 * config.updates_per_user;
        let window_start = (config.burn_in_fraction * total_steps as f64).floor() as u64;
        Simulation {
            config,
            state,
            truth,
            rng,
            scratch: ScoreScratch::default(),
            picks: Vec::new(),
            active_users,
            steps_done: 0,
            total_steps,
            window_start,
            tally: OmegaTally::default(),
            selection_events: 0,
            fallback_events: 0,
            skipped_events: 0,
        }
    }

    pub fn state(&self) -> &BipartiteState {
        &self.state
    }

    pub fn truth(&self) -> &Truth {
        &self.truth
    }

    pub fn config(&self) -> &WorldConfig {
        &self.config
    }

    pub fn steps_done(&self) -> u64 {
        self.steps_done
    }

    pub fn total_steps(&self) -> u64 {
        self.total_steps
    }

    pub fn window_start(&self) -> u64 {
        self.window_start
    }

    pub fn tally(&self) -> &OmegaTally {
        &self.tally
    }

    pub fn selection_events(&self) -> u64 {
        self.selection_events
    }

    pub fn fallback_events(&self) -> u64 {
        self.fallback_events
    }

    /// Executes one event for `user` without drawing the activation.
    pub fn step(&mut self, user: usize) -> Result<StepOutcome> {
        if user >= self.state.n_users() {
            return Err(Error::OutOfRange {
                index: user,
                len: self.state.n_users(),
            });
        }
        let step = self.steps_done;
        self.steps_done += 1;
        let held = self.state.degree_of_user(user);
        let select = self.rng.random::<f64>() < self.config.phi;

        let (item, channel, fallback) = if select {
            let (pool_found, fallback) = self.selection_pool(user);
            if !pool_found {
                self.skipped_events += 1;
                return Ok(StepOutcome {
                    step,
                    user,
                    channel: Channel::Skipped,
                    item: None,
                    genre: None,
                    matched: false,
                    in_taste1: false,
                    fallback: true,
                });
            }
            self.selection_events += 1;
            if fallback {
                self.fallback_events += 1;
            }
            let item = self.picks[self.rng.random_range(0..self.picks.len())] as usize;
            (item, Channel::Selection, fallback)
        } else {
            let item = recommend(
                &self.state,
                user,
                &self.config.recommender,
                &mut self.rng,
                &mut self.scratch,
            )?;
            (item, Channel::Recommendation, false)
        };

        let prov = match channel {
            Channel::Selection => Provenance::ViaSelection,
            _ => Provenance::ViaRecommendation,
        };
        self.state.add_item(user, item, prov)?;
        if held > 0 {
            let slot = self.rng.random_range(0..held);
            self.state.remove_at(user, slot);
        }

        let (genre, matched, in_taste1) = match &self.truth {
            Truth::Tastes(t) => {
                let g = t.genre(item);
                (Some(g), t.tastes(user).contains(&g), t.tastes(user)[0] == g)
            }
            Truth::Replay(r) => {
                let ok = r.is_relevant(user, item);
                (None, ok, ok)
            }
        };
        let outcome = StepOutcome {
            step,
            user,
            channel,
            item: Some(item),
            genre,
            matched,
            in_taste1,
            fallback,
        };
        if step >= self.window_start {
            self.tally.record(&outcome);
        }
        Ok(outcome)
    }

    /// Fills `picks` with the items deliberate selection may choose.
    /// Returns `(non_empty, fallback_used)`.
    fn selection_pool(&mut self, user: usize) -> (bool, bool) {
        self.picks.clear();
        let state = &self.state;
        match &self.truth {
            Truth::Tastes(t) => {
                let tastes = t.tastes(user);
                let taste = if self.config.mode == Mode::TwoTaste && tastes.len() == 2 {
                    if self.rng.random::<f64>() < self.config.f1 {
                        tastes[0]
                    } else {
                        tastes[1]
                    }
                } else {
                    tastes[0]
                };
                self.picks.extend(
                    t.items_of_genre(taste)
                        .iter()
                        .copied()
                        .filter(|&i| !state.holds(user, i as usize)),
                );
                if self.picks.is_empty() {
                    self.picks.extend(
                        (0..state.n_items() as u32).filter(|&i| !state.holds(user, i as usize)),
                    );
                    (!self.picks.is_empty(), true)
                } else {
                    (true, false)
                }
            }
            Truth::Replay(r) => {
                self.picks.extend(
                    r.correct(user)
                        .iter()
                        .copied()
                        .filter(|&i| !state.holds(user, i as usize)),
                );
                (!self.picks.is_empty(), false)
            }
        }
    }

    /// Draws a user and executes one event.
    pub fn advance_one(&mut self) -> Result<StepOutcome> {
        if self.active_users.is_empty() {
            return config_err("no active users");
        }
        let user = self.active_users[self.rng.random_range(0..self.active_users.len())] as usize;
        self.step(user)
    }

    /// Runs until `until` events have been executed overall, optionally
    /// writing one trace row per event.
    pub fn advance_to(&mut self, until: u64, mut trace: Option<&mut dyn Write>) -> Result<()> {
        while self.steps_done < until.min(self.total_steps) {
            let outcome = self.advance_one()?;
            if let Some(out) = trace.as_deref_mut() {
                writeln!(out, "{}", outcome.trace_row())?;
            }
        }
        Ok(())
    }

    /// Computes the end-of-run metrics. Consumes the probe draws.
    pub fn finish(&mut self) -> MetricsReport {
        let rc = &self.config.recommender;
        let real = auc_real(&self.state, &self.truth, rc);
        let est = auc_est(
            &self.state,
            &self.truth,
            rc,
            &mut self.rng,
            self.config.auc_repetitions,
            self.config.probe_mode,
        );
        MetricsReport {
            omega: self.tally.omega(),
            omega1: (self.config.mode == Mode::TwoTaste)
                .then(|| self.tally.omega1())
                .flatten(),
            off_taste_fraction: self.tally.off_taste_fraction(),
            auc_real: real.value,
            auc_est: est.value,
            recommendation_events: self.tally.recommendations,
            selection_events: self.selection_events,
            fallback_events: self.fallback_events,
            skipped_events: self.skipped_events,
            auc_real_skipped_users: real.skipped_users,
            auc_est_skipped_users: est.skipped_users,
            config: self.config.clone(),
            instance_index: self.config.instance_index,
        }
    }
}

/// Runs a synthetic instance to completion.
pub fn run(config: &WorldConfig) -> Result<MetricsReport> {
    let mut sim = Simulation::synthetic(config.clone())?;
    sim.advance_to(u64::MAX, None)?;
    Ok(sim.finish())
}

/// Runs a replay instance to completion.
pub fn run_replay(config: &WorldConfig, table: &RatingsTable) -> Result<MetricsReport> {
    let mut sim = Simulation::replay(config.clone(), table)?;
    sim.advance_to(u64::MAX, None)?;
    Ok(sim.finish())
}
