//! Accuracy measures: the real accuracy ω (and the taste-1 share ω⁽¹⁾ for
//! two-taste users), the real AUC against latent tastes, and the
//! probe-based estimated AUC.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dynamics::{Channel, StepOutcome, WorldConfig};
use crate::error::{Error, Result};
use crate::recommender::{accumulate_scores, score_without_edge, RecommenderConfig};
use crate::world::{BipartiteState, TasteMap};

/// Ground truth for evaluation: which users are evaluated and which
/// un-collected items count as correct for them.
pub trait Relevance {
    fn is_evaluated(&self, user: usize) -> bool;
    fn is_relevant(&self, user: usize, item: usize) -> bool;
}

impl Relevance for TasteMap {
    fn is_evaluated(&self, _user: usize) -> bool {
        true
    }

    fn is_relevant(&self, user: usize, item: usize) -> bool {
        self.matches(user, item)
    }
}

/// AUC of one correct candidate against a candidate score vector.
///
/// `scores` holds every candidate, the correct one included at index
/// `correct`. Returns `(n_lower + 0.5 * n_tie) / scores.len()`, where the
/// correct item is excluded from both counts.
pub fn auc_for_item(scores: &[f64], correct: usize) -> Result<f64> {
    if scores.is_empty() {
        return Err(Error::EmptyCandidates);
    }
    let target = *scores.get(correct).ok_or(Error::OutOfRange {
        index: correct,
        len: scores.len(),
    })?;
    let (mut lower, mut tie) = (0usize, 0usize);
    for (i, &s) in scores.iter().enumerate() {
        if i == correct {
            continue;
        }
        if s < target {
            lower += 1;
        } else if s == target {
            tie += 1;
        }
    }
    Ok((lower as f64 + 0.5 * tie as f64) / scores.len() as f64)
}

/// Same value as [`auc_for_item`] for a score present in `sorted`, which
/// must be the candidate scores sorted ascending.
fn auc_in_sorted(sorted: &[f64], target: f64) -> f64 {
    let lower = sorted.partition_point(|&s| s < target);
    let at_most = sorted.partition_point(|&s| s <= target);
    let tie = at_most - lower - 1;
    (lower as f64 + 0.5 * tie as f64) / sorted.len() as f64
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct AucSummary {
    /// Mean AUC over evaluated pairs; `None` when nothing was evaluated.
    pub value: Option<f64>,
    pub pairs: u64,
    pub skipped_users: u64,
}

/// Mean AUC over every (user, un-collected relevant item) pair, ranking each
/// relevant item against all of the user's un-collected items.
pub fn auc_real<T: Relevance + ?Sized>(
    state: &BipartiteState,
    truth: &T,
    config: &RecommenderConfig,
) -> AucSummary {
    let mut acc = Vec::new();
    let mut candidates = Vec::new();
    let mut targets = Vec::new();
    let (mut sum, mut pairs, mut skipped) = (0.0, 0u64, 0u64);
    for user in (0..state.n_users()).filter(|&u| truth.is_evaluated(u)) {
        accumulate_scores(state, state.collection(user), state.provenances(user), config, &mut acc);
        candidates.clear();
        targets.clear();
        for (item, &s) in acc.iter().enumerate() {
            if state.holds(user, item) {
                continue;
            }
            candidates.push(s);
            if truth.is_relevant(user, item) {
                targets.push(s);
            }
        }
        if targets.is_empty() {
            skipped += 1;
            continue;
        }
        candidates.sort_by(f64::total_cmp);
        for &t in &targets {
            sum += auc_in_sorted(&candidates, t);
            pairs += 1;
        }
    }
    AucSummary {
        value: (pairs > 0).then(|| sum / pairs as f64),
        pairs,
        skipped_users: skipped,
    }
}

/// How similarities are obtained once a probe edge is withheld.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProbeMode {
    /// Similarities of the training adjacency, recomputed from scratch.
    #[default]
    Rebuild,
    /// Keep the live similarities; only the user profile loses the probe.
    ReuseLive,
}

/// Leave-one-out AUC. Each repetition withholds, for every evaluated user
/// with at least two items in turn, one uniformly chosen edge of that user,
/// scores against the adjacency without that edge, and ranks the probe item
/// among the items outside the user's training collection. The live state is
/// not modified.
///
/// RNG use: per repetition, one draw per eligible user in user order.
pub fn auc_est<T: Relevance + ?Sized, R: Rng + ?Sized>(
    state: &BipartiteState,
    truth: &T,
    config: &RecommenderConfig,
    rng: &mut R,
    repetitions: usize,
    mode: ProbeMode,
) -> AucSummary {
    let n = state.n_users();
    let eligible: Vec<bool> = (0..n)
        .map(|u| truth.is_evaluated(u) && state.degree_of_user(u) >= 2)
        .collect();
    let skipped = (0..n)
        .filter(|&u| truth.is_evaluated(u) && !eligible[u])
        .count() as u64;
    let (mut sum, mut pairs) = (0.0, 0u64);
    let mut acc = Vec::new();
    let mut candidates = Vec::new();
    let mut items = Vec::new();
    let mut provs = Vec::new();
    let rebuilt = (mode == ProbeMode::Rebuild).then(|| state.rebuilt_without(&[]));
    let scoring = rebuilt.as_ref().unwrap_or(state);
    for _ in 0..repetitions {
        let probes: Vec<Option<usize>> = (0..n)
            .map(|u| eligible[u].then(|| rng.random_range(0..state.degree_of_user(u))))
            .collect();
        for (user, &slot) in probes.iter().enumerate() {
            let Some(slot) = slot else { continue };
            let probe = state.collection(user)[slot] as usize;
            items.clear();
            provs.clear();
            for (pos, (&i, &p)) in state
                .collection(user)
                .iter()
                .zip(state.provenances(user))
                .enumerate()
            {
                if pos != slot {
                    items.push(i);
                    provs.push(p);
                }
            }
            accumulate_scores(scoring, &items, &provs, config, &mut acc);
            if mode == ProbeMode::Rebuild {
                let prov = state.provenances(user)[slot];
                acc[probe] = score_without_edge(scoring, &items, &provs, probe, prov, config);
            }
            candidates.clear();
            let mut correct = 0;
            for (item, &s) in acc.iter().enumerate() {
                if item == probe {
                    correct = candidates.len();
                } else if state.holds(user, item) {
                    continue;
                }
                candidates.push(s);
            }
            sum += auc_for_item(&candidates, correct).expect("probe is a candidate");
            pairs += 1;
        }
    }
    AucSummary {
        value: (pairs > 0).then(|| sum / pairs as f64),
        pairs,
        skipped_users: skipped,
    }
}

/// Running counts of recommendation outcomes inside the measurement window.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct OmegaTally {
    pub recommendations: u64,
    pub matched: u64,
    pub taste1: u64,
}

impl OmegaTally {
    #[inline]
    pub fn record(&mut self, outcome: &StepOutcome) {
        if outcome.channel == Channel::Recommendation {
            self.recommendations += 1;
            self.matched += u64::from(outcome.matched);
            self.taste1 += u64::from(outcome.in_taste1);
        }
    }

    /// Fraction of recommendations matching the user's taste(s).
    pub fn omega(&self) -> Option<f64> {
        (self.recommendations > 0).then(|| self.matched as f64 / self.recommendations as f64)
    }

    /// Fraction of recommendations in the user's first taste.
    pub fn omega1(&self) -> Option<f64> {
        (self.recommendations > 0).then(|| self.taste1 as f64 / self.recommendations as f64)
    }

    pub fn off_taste_fraction(&self) -> Option<f64> {
        self.omega().map(|w| 1.0 - w)
    }
}

/// Tallies the outcomes whose step index is at least `window_start`.
pub fn accumulate_omega<'a, I>(outcomes: I, window_start: u64) -> OmegaTally
where
    I: IntoIterator<Item = &'a StepOutcome>,
{
    let mut tally = OmegaTally::default();
    for o in outcomes.into_iter().filter(|o| o.step >= window_start) {
        tally.record(o);
    }
    tally
}

/// Result of one simulation instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub omega: Option<f64>,
    /// Two-taste mode only.
    pub omega1: Option<f64>,
    pub off_taste_fraction: Option<f64>,
    pub auc_real: Option<f64>,
    pub auc_est: Option<f64>,
    pub recommendation_events: u64,
    pub selection_events: u64,
    pub fallback_events: u64,
    pub skipped_events: u64,
    pub auc_real_skipped_users: u64,
    pub auc_est_skipped_users: u64,
    pub config: WorldConfig,
    pub instance_index: u64,
}

pub const CSV_HEADER: &str = "phi,G,k,f1,b,similarity,instance,omega,omega1,auc_real,auc_est,fallbacks";

pub(crate) fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

impl MetricsReport {
    /// Fallback selections plus skipped selection events.
    pub fn fallbacks(&self) -> u64 {
        self.fallback_events + self.skipped_events
    }

    /// One row in [`CSV_HEADER`] layout. Absent values are empty fields.
    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{}",
            self.config.key_fields(),
            self.instance_index,
            fmt_opt(self.omega),
            fmt_opt(self.omega1),
            fmt_opt(self.auc_real),
            fmt_opt(self.auc_est),
            self.fallbacks()
        )
    }
}
