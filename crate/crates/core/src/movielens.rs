//! Empirical ratings (MovieLens-100K `u.data` layout) and the replay setup.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use log::warn;
use rand::seq::index;
use rand::Rng;

use crate::error::{Error, Result};
use crate::metrics::Relevance;
use crate::world::{BipartiteState, Provenance};

/// Lowest rating that makes a movie correct for its rater.
pub const CORRECT_RATING: u8 = 3;

#[derive(Debug, Clone, PartialEq)]
pub struct RatingsTable {
    /// `(user, item, rating)` with dense ids, sorted by user then item.
    triples: Vec<(u32, u32, u8)>,
    user_ids: Vec<u64>,
    item_ids: Vec<u64>,
    user_index: HashMap<u64, u32>,
    item_index: HashMap<u64, u32>,
    rated: Vec<Vec<u32>>,
    correct: Vec<Vec<u32>>,
    /// Lines skipped as malformed, with their 1-based line numbers.
    pub rejected: Vec<(usize, String)>,
    /// Repeated (user, item) pairs; the last rating wins.
    pub duplicates: usize,
}

pub fn parse_ratings(path: impl AsRef<Path>) -> Result<RatingsTable> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|source| Error::Io {
        path: path.to_owned(),
        source,
    })?;
    parse_ratings_from(BufReader::new(file), path)
}

fn parse_line(line: &str) -> std::result::Result<(u64, u64, u8), String> {
    let fields: Vec<&str> = line.split('\t').collect();
    if fields.len() != 4 {
        return Err(format!("expected 4 tab-separated fields, found {}", fields.len()));
    }
    let user = fields[0].trim().parse().map_err(|e| format!("user id: {e}"))?;
    let item = fields[1].trim().parse().map_err(|e| format!("item id: {e}"))?;
    let rating: u8 = fields[2].trim().parse().map_err(|e| format!("rating: {e}"))?;
    if !(1..=5).contains(&rating) {
        return Err(format!("rating {rating} outside 1..=5"));
    }
    fields[3]
        .trim()
        .parse::<u64>()
        .map_err(|e| format!("timestamp: {e}"))?;
    Ok((user, item, rating))
}

/// Parses `user<TAB>item<TAB>rating<TAB>timestamp` lines. Blank lines are
/// ignored and malformed lines are skipped and listed in `rejected`.
pub fn parse_ratings_from<R: BufRead>(reader: R, path: &Path) -> Result<RatingsTable> {
    let mut latest: HashMap<(u64, u64), u8> = HashMap::new();
    let mut rejected = Vec::new();
    let mut duplicates = 0;
    for (n, line) in reader.lines().enumerate() {
        let line = line.map_err(|source| Error::Io {
            path: path.to_owned(),
            source,
        })?;
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() {
            continue;
        }
        match parse_line(line) {
            Ok((u, i, r)) => {
                if latest.insert((u, i), r).is_some() {
                    duplicates += 1;
                }
            }
            Err(reason) => {
                warn!("{}:{}: {}", path.display(), n + 1, reason);
                rejected.push((n + 1, reason));
            }
        }
    }
    if latest.is_empty() {
        return Err(Error::NoValidRows {
            path: path.to_owned(),
        });
    }
    if duplicates > 0 {
        warn!("{}: {duplicates} duplicate ratings, kept the last", path.display());
    }

    let mut user_ids: Vec<u64> = latest.keys().map(|&(u, _)| u).collect();
    let mut item_ids: Vec<u64> = latest.keys().map(|&(_, i)| i).collect();
    for ids in [&mut user_ids, &mut item_ids] {
        ids.sort_unstable();
        ids.dedup();
    }
    let user_index: HashMap<u64, u32> =
        user_ids.iter().enumerate().map(|(d, &e)| (e, d as u32)).collect();
    let item_index: HashMap<u64, u32> =
        item_ids.iter().enumerate().map(|(d, &e)| (e, d as u32)).collect();

    let mut triples: Vec<(u32, u32, u8)> = latest
        .iter()
        .map(|(&(u, i), &r)| (user_index[&u], item_index[&i], r))
        .collect();
    triples.sort_unstable();

    let mut rated = vec![Vec::new(); user_ids.len()];
    let mut correct = vec![Vec::new(); user_ids.len()];
    for &(u, i, r) in &triples {
        rated[u as usize].push(i);
        if r >= CORRECT_RATING {
            correct[u as usize].push(i);
        }
    }
    Ok(RatingsTable {
        triples,
        user_ids,
        item_ids,
        user_index,
        item_index,
        rated,
        correct,
        rejected,
        duplicates,
    })
}

impl RatingsTable {
    pub fn n_users(&self) -> usize {
        self.user_ids.len()
    }

    pub fn n_items(&self) -> usize {
        self.item_ids.len()
    }

    pub fn triples(&self) -> &[(u32, u32, u8)] {
        &self.triples
    }

    /// Items rated by `user` (dense ids, ascending).
    pub fn rated(&self, user: usize) -> &[u32] {
        &self.rated[user]
    }

    /// Items rated at least [`CORRECT_RATING`] by `user`.
    pub fn correct(&self, user: usize) -> &[u32] {
        &self.correct[user]
    }

    pub fn external_user(&self, dense: usize) -> u64 {
        self.user_ids[dense]
    }

    pub fn external_item(&self, dense: usize) -> u64 {
        self.item_ids[dense]
    }

    pub fn dense_user(&self, external: u64) -> Option<usize> {
        self.user_index.get(&external).map(|&d| d as usize)
    }

    pub fn dense_item(&self, external: u64) -> Option<usize> {
        self.item_index.get(&external).map(|&d| d as usize)
    }

    /// Users with at least two correct items take part in the replay.
    pub fn is_eligible(&self, user: usize) -> bool {
        self.correct[user].len() >= 2
    }
}

/// Correct sets and eligibility for a replay run.
#[derive(Debug, Clone, PartialEq)]
pub struct ReplayTruth {
    correct: Vec<Vec<u32>>,
    words: usize,
    mask: Vec<u64>,
    eligible: Vec<bool>,
    eligible_users: Vec<u32>,
}

impl ReplayTruth {
    pub fn from_table(table: &RatingsTable) -> Self {
        let words = table.n_items().div_ceil(64);
        let mut mask = vec![0u64; words * table.n_users()];
        for (u, items) in table.correct.iter().enumerate() {
            for &i in items {
                mask[u * words + i as usize / 64] |= 1 << (i % 64);
            }
        }
        let eligible: Vec<bool> = (0..table.n_users()).map(|u| table.is_eligible(u)).collect();
        let eligible_users = (0..table.n_users() as u32)
            .filter(|&u| eligible[u as usize])
            .collect();
        ReplayTruth {
            correct: table.correct.clone(),
            words,
            mask,
            eligible,
            eligible_users,
        }
    }

    pub fn correct(&self, user: usize) -> &[u32] {
        &self.correct[user]
    }

    pub fn eligible_users(&self) -> &[u32] {
        &self.eligible_users
    }

    pub fn eligibility(&self) -> &[bool] {
        &self.eligible
    }
}

impl Relevance for ReplayTruth {
    fn is_evaluated(&self, user: usize) -> bool {
        self.eligible[user]
    }

    #[inline]
    fn is_relevant(&self, user: usize, item: usize) -> bool {
        self.mask[user * self.words + item / 64] >> (item % 64) & 1 == 1
    }
}

/// Initial replay state. Every eligible user holds `k_i - 1` of their
/// `k_i` rated items, re-drawn until at least one correct item is left out;
/// ineligible users keep their whole rated set, or nothing when
/// `exclude_ineligible_edges` is set.
pub fn init_replay<R: Rng + ?Sized>(
    table: &RatingsTable,
    rng: &mut R,
    exclude_ineligible_edges: bool,
    sparse_threshold: usize,
    weighted_bias: Option<f64>,
) -> (BipartiteState, ReplayTruth) {
    let truth = ReplayTruth::from_table(table);
    let mut state =
        BipartiteState::empty(table.n_users(), table.n_items(), sparse_threshold, weighted_bias);
    for user in 0..table.n_users() {
        let rated = table.rated(user);
        if truth.eligible[user] {
            let picks = loop {
                let picks = index::sample(rng, rated.len(), rated.len() - 1);
                let mut held = vec![false; rated.len()];
                for p in picks.iter() {
                    held[p] = true;
                }
                let left_out_correct = rated
                    .iter()
                    .zip(&held)
                    .any(|(&i, &h)| !h && truth.is_relevant(user, i as usize));
                if left_out_correct {
                    break picks;
                }
            };
            for p in picks {
                state
                    .add_item(user, rated[p] as usize, Provenance::Initial)
                    .expect("rated items are distinct");
            }
        } else if !exclude_ineligible_edges {
            for &i in rated {
                state
                    .add_item(user, i as usize, Provenance::Initial)
                    .expect("rated items are distinct");
            }
        }
    }
    (state, truth)
}
