//! Item-based collaborative filtering over a [`BipartiteState`].
//!
//! The score of an un-collected item `a` for user `i` is
//! `sum_{b in C_i} w_ib * s_ab`, where `s_ab` is either the common-neighbor
//! count or its cosine normalisation and `w_ib` is the bias weight of the
//! edge (`bias_b` for deliberately selected items, 1 otherwise).

use std::io::Write;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{config_err, Error, Result};
use crate::kernels;
use crate::world::{BipartiteState, Provenance};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SimilarityKind {
    CommonNeighbor,
    Cosine,
}

impl SimilarityKind {
    pub fn as_str(self) -> &'static str {
        match self {
            SimilarityKind::CommonNeighbor => "cn",
            SimilarityKind::Cosine => "cosine",
        }
    }
}

impl std::str::FromStr for SimilarityKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "cn" | "common_neighbor" | "common-neighbor" => Ok(SimilarityKind::CommonNeighbor),
            "cosine" | "cos" => Ok(SimilarityKind::Cosine),
            other => config_err(format!("unknown similarity `{other}`")),
        }
    }
}

/// Where the selection bias applies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BiasScope {
    /// Only the user-profile weight in the score sum.
    #[default]
    ScoreOnly,
    /// Also inside co-occurrence counts and item degrees.
    Everywhere,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TieBreak {
    #[default]
    UniformRandom,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RecommenderConfig {
    pub similarity: SimilarityKind,
    pub bias_b: f64,
    pub bias_scope: BiasScope,
    pub tie_break: TieBreak,
}

impl Default for RecommenderConfig {
    fn default() -> Self {
        RecommenderConfig {
            similarity: SimilarityKind::CommonNeighbor,
            bias_b: 1.0,
            bias_scope: BiasScope::ScoreOnly,
            tie_break: TieBreak::UniformRandom,
        }
    }
}

impl RecommenderConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.bias_b >= 1.0 && self.bias_b.is_finite()) {
            return config_err(format!("bias_b must be a finite weight >= 1, got {}", self.bias_b));
        }
        Ok(())
    }

    /// Bias for the weighted co-occurrence structure, when one is needed.
    pub fn weighted_bias(&self) -> Option<f64> {
        (self.bias_scope == BiasScope::Everywhere && self.bias_b != 1.0).then_some(self.bias_b)
    }

    #[inline]
    pub fn profile_weight(&self, prov: Provenance) -> f64 {
        match prov {
            Provenance::ViaSelection => self.bias_b,
            _ => 1.0,
        }
    }
}

fn use_weighted(state: &BipartiteState, config: &RecommenderConfig) -> bool {
    config.bias_scope == BiasScope::Everywhere && state.is_weighted()
}

fn degree(state: &BipartiteState, item: usize, weighted: bool) -> f64 {
    if weighted {
        state.weighted_degree(item).unwrap_or(0.0)
    } else {
        f64::from(state.item_degree(item))
    }
}

#[inline]
fn sqrt_degree(state: &BipartiteState, item: usize, weighted: bool) -> f64 {
    if weighted {
        state.weighted_degree(item).unwrap_or(0.0).sqrt()
    } else {
        state.sqrt_item_degree(item)
    }
}

/// Pairwise similarity `s_ab`. Cosine similarity is 0 when either degree is 0.
pub fn similarity(
    state: &BipartiteState,
    a: usize,
    b: usize,
    config: &RecommenderConfig,
) -> Result<f64> {
    if a == b {
        return Err(Error::SelfSimilarity(a));
    }
    let weighted = use_weighted(state, config);
    let shared = if weighted {
        state.weighted_cooccurrence(a, b).unwrap_or(0.0)
    } else {
        f64::from(state.cooccurrence(a, b))
    };
    Ok(match config.similarity {
        SimilarityKind::CommonNeighbor => shared,
        SimilarityKind::Cosine => {
            let (ka, kb) = (degree(state, a, weighted), degree(state, b, weighted));
            if ka == 0.0 || kb == 0.0 {
                0.0
            } else {
                shared / (ka * kb).sqrt()
            }
        }
    })
}

#[inline]
fn profile_coef(
    state: &BipartiteState,
    item: usize,
    prov: Provenance,
    config: &RecommenderConfig,
    weighted: bool,
) -> f64 {
    let w = config.profile_weight(prov);
    match config.similarity {
        SimilarityKind::CommonNeighbor => w,
        SimilarityKind::Cosine => w / sqrt_degree(state, item, weighted),
    }
}

/// Fills `acc` with the score of every item for the given profile.
/// Entries of items inside the profile are meaningless.
///
/// [`score`] performs the same floating-point operations per item, so the
/// two agree bit for bit.
pub fn accumulate_scores(
    state: &BipartiteState,
    items: &[u32],
    provs: &[Provenance],
    config: &RecommenderConfig,
    acc: &mut Vec<f64>,
) {
    let weighted = use_weighted(state, config);
    acc.clear();
    acc.resize(state.n_items(), 0.0);
    for (&b, &p) in items.iter().zip(provs) {
        let coef = profile_coef(state, b as usize, p, config, weighted);
        if weighted {
            state.add_weighted_row_scaled(b as usize, coef, acc);
        } else {
            state.add_row_scaled(b as usize, coef, acc);
        }
    }
    if config.similarity == SimilarityKind::Cosine {
        if weighted {
            for (a, v) in acc.iter_mut().enumerate() {
                let root = sqrt_degree(state, a, true);
                *v = if root == 0.0 { 0.0 } else { *v / root };
            }
        } else {
            for (v, &root) in acc.iter_mut().zip(state.sqrt_item_degrees()) {
                *v = if root == 0.0 { 0.0 } else { *v / root };
            }
        }
    }
}

/// Score of `probe` for the profile `items`, as it would be in a state
/// rebuilt without the edge from the profile's owner to `probe`. Dropping
/// that edge lowers `probe`'s degree and its co-occurrence with every
/// profile item, and leaves every other candidate's score unchanged.
pub fn score_without_edge(
    state: &BipartiteState,
    items: &[u32],
    provs: &[Provenance],
    probe: usize,
    probe_prov: Provenance,
    config: &RecommenderConfig,
) -> f64 {
    let weighted = use_weighted(state, config);
    let w_probe = if weighted { config.profile_weight(probe_prov) } else { 1.0 };
    let mut total = 0.0;
    for (&b, &p) in items.iter().zip(provs) {
        let coef = profile_coef(state, b as usize, p, config, weighted);
        let shared = if weighted {
            let w_b = config.profile_weight(p);
            state.weighted_cooccurrence(b as usize, probe).unwrap_or(0.0) - w_b * w_probe
        } else {
            f64::from(state.cooccurrence(b as usize, probe) - 1)
        };
        total += coef * shared;
    }
    if config.similarity == SimilarityKind::Cosine {
        let root = if weighted {
            (state.weighted_degree(probe).unwrap_or(0.0) - w_probe).sqrt()
        } else {
            f64::from(state.item_degree(probe) - 1).sqrt()
        };
        total = if root == 0.0 { 0.0 } else { total / root };
    }
    total
}

/// Recommendation score of item `a` for `user`.
pub fn score(
    state: &BipartiteState,
    user: usize,
    a: usize,
    config: &RecommenderConfig,
) -> Result<f64> {
    if a >= state.n_items() {
        return Err(Error::OutOfRange {
            index: a,
            len: state.n_items(),
        });
    }
    if state.holds(user, a) {
        return Err(Error::AlreadyCollected { user, item: a });
    }
    let weighted = use_weighted(state, config);
    let mut total = 0.0;
    for (&b, &p) in state.collection(user).iter().zip(state.provenances(user)) {
        let coef = profile_coef(state, b as usize, p, config, weighted);
        let shared = if weighted {
            state.weighted_cooccurrence(b as usize, a).unwrap_or(0.0)
        } else {
            f64::from(state.cooccurrence(b as usize, a))
        };
        total += coef * shared;
    }
    if config.similarity == SimilarityKind::Cosine {
        let root = sqrt_degree(state, a, weighted);
        total = if root == 0.0 { 0.0 } else { total / root };
    }
    Ok(total)
}

/// Reusable buffers for the per-recommendation scan.
#[derive(Debug, Default, Clone)]
pub struct ScoreScratch {
    pub acc: Vec<f64>,
    counts: Vec<i32>,
}

/// Unit-weight common-neighbor scores are integer sums; they are
/// accumulated in `i32`, which yields exactly the values of the `f64` path.
fn integer_scores(state: &BipartiteState, config: &RecommenderConfig) -> bool {
    config.similarity == SimilarityKind::CommonNeighbor
        && config.bias_b == 1.0
        && !use_weighted(state, config)
}

/// Highest-scoring item the user does not hold; ties are broken uniformly
/// at random. The RNG is consulted only when more than one item ties.
pub fn recommend<R: Rng + ?Sized>(
    state: &BipartiteState,
    user: usize,
    config: &RecommenderConfig,
    rng: &mut R,
    scratch: &mut ScoreScratch,
) -> Result<usize> {
    if state.degree_of_user(user) >= state.n_items() {
        return Err(Error::NoCandidates(user));
    }
    let held = state.collection(user);
    // Uniform choice among the maximal items, in item-id order: count them,
    // draw a rank only if there is more than one, then locate that rank.
    let pick = if integer_scores(state, config) {
        let counts = &mut scratch.counts;
        counts.clear();
        counts.resize(state.n_items(), 0);
        state.sum_rows(held, counts);
        // scores are non-negative, so -1 removes held items from the scan
        for &b in held {
            counts[b as usize] = -1;
        }
        let (best, n_best) = kernels::max_and_count_i32(counts);
        let rank = if n_best > 1 { rng.random_range(0..n_best) } else { 0 };
        kernels::nth_equal(counts, best, rank)
    } else {
        let acc = &mut scratch.acc;
        accumulate_scores(state, held, state.provenances(user), config, acc);
        for &b in held {
            acc[b as usize] = f64::NEG_INFINITY;
        }
        let (best, n_best) = kernels::max_and_count_f64(acc);
        let rank = if n_best > 1 { rng.random_range(0..n_best) } else { 0 };
        kernels::nth_equal(acc, best, rank)
    };
    Ok(pick)
}

/// Writes `item,score` for every candidate of `user`.
pub fn dump_scores<W: Write>(
    state: &BipartiteState,
    user: usize,
    config: &RecommenderConfig,
    mut out: W,
) -> std::io::Result<()> {
    let mut acc = Vec::new();
    accumulate_scores(state, state.collection(user), state.provenances(user), config, &mut acc);
    writeln!(out, "item,score")?;
    for (a, s) in acc.iter().enumerate() {
        if !state.holds(user, a) {
            writeln!(out, "{a},{s}")?;
        }
    }
    Ok(())
}
