//! User-item bipartite state.
//!
//! [`BipartiteState`] holds every user's collection together with the
//! provenance of each edge, and keeps item degrees and the item-item
//! co-occurrence counts `C[a][b] = sum_i a_ia * a_ib` up to date on every
//! edge event. Adding or removing one item touches `O(k)` matrix cells.
//!
//! When the recommender weights deliberately selected items everywhere
//! (not only in the score sum), a second, weighted co-occurrence matrix is
//! maintained alongside the integer one.

use std::collections::HashMap;
use std::io::Write;

use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dynamics::{InitMode, Mode, WorldConfig};
use crate::error::{config_err, Error, Result};
use crate::kernels;

/// How an item entered a user's collection.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    Initial,
    ViaSelection,
    ViaRecommendation,
}

impl Provenance {
    pub fn as_str(self) -> &'static str {
        match self {
            Provenance::Initial => "initial",
            Provenance::ViaSelection => "selection",
            Provenance::ViaRecommendation => "recommendation",
        }
    }
}

/// Above this many items the co-occurrence counts are kept in per-item hash
/// rows instead of a dense matrix.
pub const DEFAULT_SPARSE_THRESHOLD: usize = 4096;

#[derive(Debug, Clone, PartialEq)]
enum Cooc {
    Dense { n: usize, counts: Vec<u32> },
    Sparse { rows: Vec<HashMap<u32, u32>> },
}

impl Cooc {
    fn new(n: usize, sparse: bool) -> Self {
        if sparse {
            Cooc::Sparse {
                rows: vec![HashMap::new(); n],
            }
        } else {
            Cooc::Dense {
                n,
                counts: vec![0; n * n],
            }
        }
    }

    #[inline]
    fn get(&self, a: usize, b: usize) -> u32 {
        match self {
            Cooc::Dense { n, counts } => counts[a * n + b],
            Cooc::Sparse { rows } => rows[a].get(&(b as u32)).copied().unwrap_or(0),
        }
    }

    /// Adds one co-occurrence between `a` and each of `others`.
    #[inline]
    fn inc_all(&mut self, a: usize, others: &[u32]) {
        match self {
            Cooc::Dense { n, counts } => {
                let n = *n;
                for &b in others {
                    let b = b as usize;
                    counts[a * n + b] += 1;
                    counts[b * n + a] += 1;
                }
            }
            Cooc::Sparse { rows } => {
                for &b in others {
                    *rows[a].entry(b).or_insert(0) += 1;
                    *rows[b as usize].entry(a as u32).or_insert(0) += 1;
                }
            }
        }
    }

    #[inline]
    fn dec_all(&mut self, a: usize, others: &[u32]) {
        match self {
            Cooc::Dense { n, counts } => {
                let n = *n;
                for &b in others {
                    let b = b as usize;
                    counts[a * n + b] -= 1;
                    counts[b * n + a] -= 1;
                }
            }
            Cooc::Sparse { rows } => {
                for &b in others {
                    for (x, y) in [(a, b), (b as usize, a as u32)] {
                        let row = &mut rows[x];
                        let c = row.get_mut(&y).expect("co-occurrence underflow");
                        *c -= 1;
                        if *c == 0 {
                            row.remove(&y);
                        }
                    }
                }
            }
        }
    }

    /// `acc[a] += coef * C[row][a]` for every item `a`.
    #[inline]
    fn add_row_scaled(&self, row: usize, coef: f64, acc: &mut [f64]) {
        match self {
            Cooc::Dense { n, counts } => {
                kernels::add_scaled_row(&counts[row * n..(row + 1) * n], coef, acc);
            }
            Cooc::Sparse { rows } => {
                for (&b, &c) in &rows[row] {
                    acc[b as usize] += coef * f64::from(c as i32);
                }
            }
        }
    }

    /// `acc[a] += C[r][a]` for every listed row `r` and item `a`.
    #[inline]
    fn sum_rows(&self, rows_to_sum: &[u32], acc: &mut [i32]) {
        match self {
            Cooc::Dense { n, counts } => kernels::sum_rows_i32(counts, *n, rows_to_sum, acc),
            Cooc::Sparse { rows } => {
                for &r in rows_to_sum {
                    for (&b, &c) in &rows[r as usize] {
                        acc[b as usize] += c as i32;
                    }
                }
            }
        }
    }
}

/// Co-occurrence and degrees computed from edge weights `w_ia` where
/// deliberately selected edges weigh `bias` and every other edge weighs 1.
#[derive(Debug, Clone, PartialEq)]
struct WeightedCooc {
    bias: f64,
    n: usize,
    values: Vec<f64>,
    degree: Vec<f64>,
}

impl WeightedCooc {
    fn weight(&self, prov: Provenance) -> f64 {
        match prov {
            Provenance::ViaSelection => self.bias,
            _ => 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BipartiteState {
    n_users: usize,
    n_items: usize,
    collections: Vec<Vec<u32>>,
    provenance: Vec<Vec<Provenance>>,
    words_per_user: usize,
    member: Vec<u64>,
    item_degree: Vec<u32>,
    /// `sqrt(item_degree)`, refreshed whenever a degree changes.
    sqrt_degree: Vec<f64>,
    cooc: Cooc,
    weighted: Option<WeightedCooc>,
}

impl BipartiteState {
    /// An edgeless state. `weighted_bias` enables the weighted co-occurrence
    /// structure used when bias applies to similarities as well as scores.
    pub fn empty(
        n_users: usize,
        n_items: usize,
        sparse_threshold: usize,
        weighted_bias: Option<f64>,
    ) -> Self {
        let words_per_user = n_items.div_ceil(64);
        BipartiteState {
            n_users,
            n_items,
            collections: vec![Vec::new(); n_users],
            provenance: vec![Vec::new(); n_users],
            words_per_user,
            member: vec![0; words_per_user * n_users],
            item_degree: vec![0; n_items],
            sqrt_degree: vec![0.0; n_items],
            cooc: Cooc::new(n_items, n_items > sparse_threshold),
            weighted: weighted_bias.map(|bias| WeightedCooc {
                bias,
                n: n_items,
                values: vec![0.0; n_items * n_items],
                degree: vec![0.0; n_items],
            }),
        }
    }

    /// Builds a state from explicit per-user collections.
    pub fn from_collections(
        n_items: usize,
        collections: &[Vec<(usize, Provenance)>],
        sparse_threshold: usize,
        weighted_bias: Option<f64>,
    ) -> Result<Self> {
        let mut state = Self::empty(collections.len(), n_items, sparse_threshold, weighted_bias);
        for (user, items) in collections.iter().enumerate() {
            for &(item, prov) in items {
                state.add_item(user, item, prov)?;
            }
        }
        Ok(state)
    }

    /// A fresh state holding the same edges as `self`, built from scratch.
    /// `skip` optionally names one collection slot per user to leave out.
    pub fn rebuilt_without(&self, skip: &[Option<usize>]) -> Self {
        let mut fresh = Self::empty(
            self.n_users,
            self.n_items,
            if matches!(self.cooc, Cooc::Sparse { .. }) { 0 } else { usize::MAX },
            self.weighted.as_ref().map(|w| w.bias),
        );
        for user in 0..self.n_users {
            let drop = skip.get(user).copied().flatten();
            for (pos, (&item, &prov)) in self.collections[user]
                .iter()
                .zip(&self.provenance[user])
                .enumerate()
            {
                if Some(pos) != drop {
                    fresh
                        .add_item(user, item as usize, prov)
                        .expect("source state has no duplicate edges");
                }
            }
        }
        fresh
    }

    pub fn n_users(&self) -> usize {
        self.n_users
    }

    pub fn n_items(&self) -> usize {
        self.n_items
    }

    pub fn collection(&self, user: usize) -> &[u32] {
        &self.collections[user]
    }

    pub fn provenances(&self, user: usize) -> &[Provenance] {
        &self.provenance[user]
    }

    pub fn degree_of_user(&self, user: usize) -> usize {
        self.collections[user].len()
    }

    pub fn item_degree(&self, item: usize) -> u32 {
        self.item_degree[item]
    }

    #[inline]
    pub fn sqrt_item_degree(&self, item: usize) -> f64 {
        self.sqrt_degree[item]
    }

    pub(crate) fn sqrt_item_degrees(&self) -> &[f64] {
        &self.sqrt_degree
    }

    pub fn item_degrees(&self) -> &[u32] {
        &self.item_degree
    }

    pub fn cooccurrence(&self, a: usize, b: usize) -> u32 {
        self.cooc.get(a, b)
    }

    pub fn is_weighted(&self) -> bool {
        self.weighted.is_some()
    }

    /// Weighted co-occurrence, if the weighted structure is enabled.
    pub fn weighted_cooccurrence(&self, a: usize, b: usize) -> Option<f64> {
        self.weighted.as_ref().map(|w| w.values[a * w.n + b])
    }

    pub fn weighted_degree(&self, item: usize) -> Option<f64> {
        self.weighted.as_ref().map(|w| w.degree[item])
    }

    pub(crate) fn add_weighted_row_scaled(&self, row: usize, coef: f64, acc: &mut [f64]) {
        match &self.weighted {
            Some(w) => {
                kernels::add_scaled_row_f64(&w.values[row * w.n..(row + 1) * w.n], coef, acc);
            }
            None => self.cooc.add_row_scaled(row, coef, acc),
        }
    }

    pub(crate) fn add_row_scaled(&self, row: usize, coef: f64, acc: &mut [f64]) {
        self.cooc.add_row_scaled(row, coef, acc);
    }

    pub(crate) fn sum_rows(&self, rows: &[u32], acc: &mut [i32]) {
        self.cooc.sum_rows(rows, acc);
    }

    #[inline]
    pub fn holds(&self, user: usize, item: usize) -> bool {
        let word = self.member[user * self.words_per_user + item / 64];
        word >> (item % 64) & 1 == 1
    }

    #[inline]
    fn set_member(&mut self, user: usize, item: usize, on: bool) {
        let word = &mut self.member[user * self.words_per_user + item / 64];
        if on {
            *word |= 1 << (item % 64);
        } else {
            *word &= !(1 << (item % 64));
        }
    }

    fn check_ids(&self, user: usize, item: usize) -> Result<()> {
        if user >= self.n_users {
            return Err(Error::OutOfRange {
                index: user,
                len: self.n_users,
            });
        }
        if item >= self.n_items {
            return Err(Error::OutOfRange {
                index: item,
                len: self.n_items,
            });
        }
        Ok(())
    }

    /// Appends `item` to the user's collection and updates degrees and
    /// co-occurrence against every item already held.
    pub fn add_item(&mut self, user: usize, item: usize, prov: Provenance) -> Result<()> {
        self.check_ids(user, item)?;
        if self.holds(user, item) {
            return Err(Error::DuplicateItem { user, item });
        }
        self.cooc.inc_all(item, &self.collections[user]);
        if let Some(w) = &mut self.weighted {
            let wi = w.weight(prov);
            for (&other, &p) in self.collections[user].iter().zip(&self.provenance[user]) {
                let v = wi * w.weight(p);
                let other = other as usize;
                w.values[item * w.n + other] += v;
                w.values[other * w.n + item] += v;
            }
            w.degree[item] += wi;
        }
        self.item_degree[item] += 1;
        self.sqrt_degree[item] = f64::from(self.item_degree[item]).sqrt();
        self.collections[user].push(item as u32);
        self.provenance[user].push(prov);
        self.set_member(user, item, true);
        Ok(())
    }

    /// Removes `item` from the user's collection; exact inverse of [`add_item`](Self::add_item).
    pub fn remove_item(&mut self, user: usize, item: usize) -> Result<()> {
        self.check_ids(user, item)?;
        let pos = self.collections[user]
            .iter()
            .position(|&x| x as usize == item)
            .ok_or(Error::AbsentItem { user, item })?;
        self.remove_at(user, pos);
        Ok(())
    }

    /// Removes the item in collection slot `pos`. The last slot moves into
    /// the vacated position. Returns the removed item and its provenance.
    pub fn remove_at(&mut self, user: usize, pos: usize) -> (usize, Provenance) {
        let item = self.collections[user].swap_remove(pos) as usize;
        let prov = self.provenance[user].swap_remove(pos);
        self.cooc.dec_all(item, &self.collections[user]);
        if let Some(w) = &mut self.weighted {
            let wi = w.weight(prov);
            for (&other, &p) in self.collections[user].iter().zip(&self.provenance[user]) {
                let v = wi * w.weight(p);
                let other = other as usize;
                w.values[item * w.n + other] -= v;
                w.values[other * w.n + item] -= v;
            }
            w.degree[item] -= wi;
        }
        self.item_degree[item] -= 1;
        self.sqrt_degree[item] = f64::from(self.item_degree[item]).sqrt();
        self.set_member(user, item, false);
        (item, prov)
    }

    /// Recomputes degrees and co-occurrence from the collections alone, via
    /// per-item holder lists, and compares them with the maintained counts.
    pub fn verify_against_oracle(&self) -> bool {
        let (degree, cooc) = brute_force_counts(self.n_items, &self.collections);
        if degree != self.item_degree {
            return false;
        }
        for a in 0..self.n_items {
            for b in 0..self.n_items {
                if a != b && cooc[a * self.n_items + b] != self.cooc.get(a, b) {
                    return false;
                }
            }
        }
        if let Some(w) = &self.weighted {
            let mut deg = vec![0.0; self.n_items];
            let mut vals = vec![0.0; self.n_items * self.n_items];
            for (items, provs) in self.collections.iter().zip(&self.provenance) {
                for (x, (&a, &pa)) in items.iter().zip(provs).enumerate() {
                    deg[a as usize] += w.weight(pa);
                    for (&b, &pb) in items.iter().zip(provs).skip(x + 1) {
                        let v = w.weight(pa) * w.weight(pb);
                        vals[a as usize * w.n + b as usize] += v;
                        vals[b as usize * w.n + a as usize] += v;
                    }
                }
            }
            let close = |x: f64, y: f64| (x - y).abs() <= 1e-9 * (1.0 + x.abs());
            if deg.iter().zip(&w.degree).any(|(&x, &y)| !close(x, y)) {
                return false;
            }
            for a in 0..self.n_items {
                for b in 0..self.n_items {
                    if a != b && !close(vals[a * w.n + b], w.values[a * w.n + b]) {
                        return false;
                    }
                }
            }
        }
        true
    }

    /// Writes the edge list as `user_id,item_id,provenance` CSV.
    pub fn export_edges<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "user_id,item_id,provenance")?;
        for (user, (items, provs)) in self.collections.iter().zip(&self.provenance).enumerate() {
            for (&item, prov) in items.iter().zip(provs) {
                writeln!(out, "{user},{item},{}", prov.as_str())?;
            }
        }
        Ok(())
    }

    #[doc(hidden)]
    pub fn corrupt_cooccurrence_for_test(&mut self, a: usize, b: usize) {
        match &mut self.cooc {
            Cooc::Dense { n, counts } => counts[a * *n + b] += 1,
            Cooc::Sparse { rows } => *rows[a].entry(b as u32).or_insert(0) += 1,
        }
    }
}

/// Degrees and the dense product `A^T A` of the binary adjacency, computed
/// from item holder lists without touching the incremental code path.
pub fn brute_force_counts(n_items: usize, collections: &[Vec<u32>]) -> (Vec<u32>, Vec<u32>) {
    let mut holders: Vec<Vec<usize>> = vec![Vec::new(); n_items];
    for (user, items) in collections.iter().enumerate() {
        for &item in items {
            holders[item as usize].push(user);
        }
    }
    let degree = holders.iter().map(|h| h.len() as u32).collect();
    let mut cooc = vec![0u32; n_items * n_items];
    for a in 0..n_items {
        for b in 0..n_items {
            if a == b {
                continue;
            }
            // both holder lists are sorted by user id
            let (mut i, mut j, mut shared) = (0, 0, 0);
            let (ha, hb) = (&holders[a], &holders[b]);
            while i < ha.len() && j < hb.len() {
                match ha[i].cmp(&hb[j]) {
                    std::cmp::Ordering::Less => i += 1,
                    std::cmp::Ordering::Greater => j += 1,
                    std::cmp::Ordering::Equal => {
                        shared += 1;
                        i += 1;
                        j += 1;
                    }
                }
            }
            cooc[a * n_items + b] = shared;
        }
    }
    (degree, cooc)
}

/// Latent tastes of users and genres of items.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TasteMap {
    pub n_genres: usize,
    pub item_genre: Vec<u32>,
    pub user_tastes: Vec<Vec<u32>>,
    #[serde(skip)]
    genre_items: Vec<Vec<u32>>,
}

impl TasteMap {
    pub fn new(n_genres: usize, item_genre: Vec<u32>, user_tastes: Vec<Vec<u32>>) -> Result<Self> {
        if item_genre.iter().any(|&g| g as usize >= n_genres)
            || user_tastes.iter().flatten().any(|&g| g as usize >= n_genres)
        {
            return config_err("genre id out of range");
        }
        if user_tastes.iter().any(|t| t.is_empty() || t.len() > 2 || (t.len() == 2 && t[0] == t[1])) {
            return config_err("every user needs one taste or two distinct tastes");
        }
        let mut genre_items = vec![Vec::new(); n_genres];
        for (item, &g) in item_genre.iter().enumerate() {
            genre_items[g as usize].push(item as u32);
        }
        Ok(TasteMap {
            n_genres,
            item_genre,
            user_tastes,
            genre_items,
        })
    }

    pub fn genre(&self, item: usize) -> u32 {
        self.item_genre[item]
    }

    pub fn tastes(&self, user: usize) -> &[u32] {
        &self.user_tastes[user]
    }

    pub fn items_of_genre(&self, genre: u32) -> &[u32] {
        &self.genre_items[genre as usize]
    }

    #[inline]
    pub fn matches(&self, user: usize, item: usize) -> bool {
        self.user_tastes[user].contains(&self.item_genre[item])
    }
}

/// Splits `0..n` into `g` contiguous blocks whose sizes differ by at most
/// one; returns the block index of every element.
pub fn near_equal_partition(n: usize, g: usize) -> Vec<u32> {
    (0..n).map(|i| (i * g / n) as u32).collect()
}

/// Builds the initial synthetic world: genre blocks, user tastes and `k`
/// initial items per user, all drawn from `rng`.
///
/// Draw order: two-taste pairs for every user (in user order), then each
/// user's initial collection (in user order).
pub fn new_synthetic<R: Rng + ?Sized>(
    config: &WorldConfig,
    rng: &mut R,
) -> Result<(BipartiteState, TasteMap)> {
    config.validate()?;
    let (n, m, g, k) = (config.n_users, config.n_items, config.n_genres, config.k);

    let item_genre = near_equal_partition(m, g);
    let user_tastes: Vec<Vec<u32>> = match config.mode {
        Mode::TwoTaste => (0..n)
            .map(|_| {
                let pair = index::sample(rng, g, 2);
                vec![pair.index(0) as u32, pair.index(1) as u32]
            })
            .collect(),
        _ => near_equal_partition(n, g).into_iter().map(|t| vec![t]).collect(),
    };
    let tastes = TasteMap::new(g, item_genre, user_tastes)?;

    let mut state = BipartiteState::empty(
        n,
        m,
        config.sparse_threshold,
        config.recommender.weighted_bias(),
    );
    for user in 0..n {
        let picks: Vec<usize> = match config.init {
            InitMode::Uniform => index::sample(rng, m, k).into_vec(),
            InitMode::TasteMatched => {
                let own = tastes.items_of_genre(tastes.tastes(user)[0]);
                if own.len() >= k {
                    index::sample(rng, own.len(), k)
                        .into_iter()
                        .map(|i| own[i] as usize)
                        .collect()
                } else {
                    let mut picks: Vec<usize> = own.iter().map(|&i| i as usize).collect();
                    let rest: Vec<usize> = (0..m).filter(|i| !picks.contains(i)).collect();
                    picks.extend(
                        index::sample(rng, rest.len(), k - own.len())
                            .into_iter()
                            .map(|i| rest[i]),
                    );
                    picks
                }
            }
        };
        for item in picks {
            state.add_item(user, item, Provenance::Initial)?;
        }
    }
    Ok((state, tastes))
}
