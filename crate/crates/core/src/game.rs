//! The top-k responsive hedonic game over a neuron pool.
//!
//! Players are neurons, pairwise valuations live in an [`AffinityMatrix`], and
//! a player's utility for a coalition is the mean affinity to its `k` best
//! partners inside it. Everything here is pure and safe to call concurrently.

use std::collections::BTreeMap;
use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::rng::stream_rng;

/// Index of an MLP channel within one layer's pool.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NeuronId(pub u32);

impl NeuronId {
    #[inline]
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl From<usize> for NeuronId {
    fn from(i: usize) -> Self {
        NeuronId(u32::try_from(i).expect("neuron index exceeds u32"))
    }
}

impl fmt::Display for NeuronId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// A non-empty set of neurons kept sorted ascending.
///
/// The derived ordering is lexicographic over the member list, which is the
/// coalition-level tie-break used throughout the crate.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Coalition(Vec<NeuronId>);

impl Coalition {
    pub fn new(members: impl IntoIterator<Item = NeuronId>) -> Result<Self> {
        let mut v: Vec<NeuronId> = members.into_iter().collect();
        if v.is_empty() {
            return Err(domain("coalition must be non-empty"));
        }
        v.sort_unstable();
        if let Some(w) = v.windows(2).find(|w| w[0] == w[1]) {
            return Err(domain(format!("duplicate member {} in coalition", w[0])));
        }
        Ok(Coalition(v))
    }

    pub fn from_indices(indices: &[usize]) -> Result<Self> {
        Self::new(indices.iter().map(|&i| NeuronId::from(i)))
    }

    pub fn singleton(i: NeuronId) -> Self {
        Coalition(vec![i])
    }

    /// Caller guarantees `members` is sorted, deduplicated and non-empty.
    pub(crate) fn from_sorted_unchecked(members: Vec<NeuronId>) -> Self {
        debug_assert!(!members.is_empty());
        debug_assert!(members.windows(2).all(|w| w[0] < w[1]));
        Coalition(members)
    }

    #[inline]
    pub fn members(&self) -> &[NeuronId] {
        &self.0
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.0.len()
    }

    /// Always false; coalitions are non-empty by construction.
    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    #[inline]
    pub fn contains(&self, i: NeuronId) -> bool {
        self.0.binary_search(&i).is_ok()
    }

    pub fn iter(&self) -> impl Iterator<Item = NeuronId> + '_ {
        self.0.iter().copied()
    }

    pub fn indices(&self) -> Vec<usize> {
        self.0.iter().map(|n| n.index()).collect()
    }

    pub fn is_subset_of(&self, other: &Coalition) -> bool {
        self.0.iter().all(|&i| other.contains(i))
    }
}

impl fmt::Display for Coalition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("{")?;
        for (k, m) in self.0.iter().enumerate() {
            if k > 0 {
                f.write_str(",")?;
            }
            write!(f, "{m}")?;
        }
        f.write_str("}")
    }
}

/// Dense `n × n` pairwise valuation matrix with an exactly zero diagonal.
#[derive(Clone, Debug, PartialEq)]
pub struct AffinityMatrix {
    n: usize,
    values: Vec<f64>,
}

impl AffinityMatrix {
    /// Wraps row-major values, rejecting non-finite entries or a nonzero diagonal.
    pub fn new(n: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != n * n {
            return Err(domain(format!(
                "affinity matrix of size {n} needs {} values, got {}",
                n * n,
                values.len()
            )));
        }
        if let Some(p) = values.iter().position(|v| !v.is_finite()) {
            return Err(domain(format!(
                "affinity entry ({}, {}) is not finite",
                p / n,
                p % n
            )));
        }
        if let Some(i) = (0..n).find(|&i| values[i * n + i] != 0.0) {
            return Err(domain(format!("affinity diagonal entry {i} is nonzero")));
        }
        Ok(AffinityMatrix { n, values })
    }

    /// Builds from a closure; the diagonal is forced to zero.
    pub fn from_fn(n: usize, mut f: impl FnMut(usize, usize) -> f64) -> Result<Self> {
        let mut values = Vec::with_capacity(n * n);
        for i in 0..n {
            for j in 0..n {
                values.push(if i == j { 0.0 } else { f(i, j) });
            }
        }
        Self::new(n, values)
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.n + j]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.n..(i + 1) * self.n]
    }

    pub fn is_symmetric(&self) -> bool {
        (0..self.n).all(|i| (0..i).all(|j| self.get(i, j) == self.get(j, i)))
    }

    fn check(&self, i: NeuronId) -> Result<()> {
        if i.index() >= self.n {
            return Err(domain(format!(
                "neuron {i} outside affinity matrix of size {}",
                self.n
            )));
        }
        Ok(())
    }
}

/// Top-k choice size.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct UtilityParams {
    pub k: usize,
}

impl UtilityParams {
    pub fn new(k: usize) -> Result<Self> {
        if k == 0 {
            return Err(domain("top-k choice size must be at least 1"));
        }
        Ok(UtilityParams { k })
    }
}

/// `a` ranks strictly ahead of `b`: larger affinity, then smaller index.
#[inline]
fn ranks_ahead(a: (f64, NeuronId), b: (f64, NeuronId)) -> bool {
    a.0 > b.0 || (a.0 == b.0 && a.1 < b.1)
}

/// Fills `out` with the `k` best partners of `i` among `members`, best first.
///
/// `members` may contain `i`; it is skipped. Allocation-free once `out` has
/// capacity `k`.
pub(crate) fn top_partners(
    i: NeuronId,
    members: &[NeuronId],
    phi: &AffinityMatrix,
    k: usize,
    out: &mut Vec<(f64, NeuronId)>,
) {
    out.clear();
    let row = phi.row(i.index());
    for &j in members {
        if j == i {
            continue;
        }
        let cand = (row[j.index()], j);
        if out.len() == k {
            if !ranks_ahead(cand, out[k - 1]) {
                continue;
            }
            out.pop();
        }
        let pos = out
            .iter()
            .position(|&e| ranks_ahead(cand, e))
            .unwrap_or(out.len());
        out.insert(pos, cand);
    }
}

/// Mean of the affinities in `top`; zero for an empty set (singleton coalition).
#[inline]
pub(crate) fn mean_affinity(top: &[(f64, NeuronId)]) -> f64 {
    if top.is_empty() {
        0.0
    } else {
        top.iter().map(|e| e.0).sum::<f64>() / top.len() as f64
    }
}

/// Utility of `i` for the member list `members` (which must contain `i`).
pub(crate) fn utility_in(
    i: NeuronId,
    members: &[NeuronId],
    phi: &AffinityMatrix,
    k: usize,
    buf: &mut Vec<(f64, NeuronId)>,
) -> f64 {
    top_partners(i, members, phi, k, buf);
    mean_affinity(buf)
}

fn require_member(i: NeuronId, t: &Coalition) -> Result<()> {
    if !t.contains(i) {
        return Err(domain(format!("neuron {i} is not a member of coalition {t}")));
    }
    Ok(())
}

fn require_k(k: usize) -> Result<()> {
    UtilityParams::new(k).map(|_| ())
}

/// The `k` partners of `i` in `t` with the largest affinity, ties toward the
/// smaller index. A singleton coalition yields the self-loop `{i}`.
pub fn choice_set(i: NeuronId, t: &Coalition, phi: &AffinityMatrix, k: usize) -> Result<Coalition> {
    require_k(k)?;
    require_member(i, t)?;
    phi.check(i)?;
    let mut buf = Vec::with_capacity(k);
    top_partners(i, t.members(), phi, k, &mut buf);
    if buf.is_empty() {
        return Ok(Coalition::singleton(i));
    }
    let mut ids: Vec<NeuronId> = buf.into_iter().map(|e| e.1).collect();
    ids.sort_unstable();
    Ok(Coalition::from_sorted_unchecked(ids))
}

/// Mean affinity of `i` to its top-k partners in `t`; zero when `t = {i}`.
pub fn topk_utility(i: NeuronId, t: &Coalition, phi: &AffinityMatrix, k: usize) -> Result<f64> {
    require_k(k)?;
    require_member(i, t)?;
    phi.check(i)?;
    let mut buf = Vec::with_capacity(k);
    Ok(utility_in(i, t.members(), phi, k, &mut buf))
}

/// Coalition value Φ(S): the members' mean top-k utility.
pub fn coalition_value(s: &Coalition, phi: &AffinityMatrix, k: usize) -> Result<f64> {
    require_k(k)?;
    for i in s.iter() {
        phi.check(i)?;
    }
    let mut buf = Vec::with_capacity(k);
    Ok(value_of_members(s.members(), phi, k, &mut buf))
}

pub(crate) fn value_of_members(
    members: &[NeuronId],
    phi: &AffinityMatrix,
    k: usize,
    buf: &mut Vec<(f64, NeuronId)>,
) -> f64 {
    let total: f64 = members.iter().map(|&i| utility_in(i, members, phi, k, buf)).sum();
    total / members.len() as f64
}

/// Which builder produced a partition.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PartitionMethod {
    HedonicOca,
    HedonicPas,
    Random,
    KMeans,
    Ward,
    /// Ground truth emitted by the synthetic generators.
    Planted,
}

impl PartitionMethod {
    pub fn as_str(self) -> &'static str {
        match self {
            PartitionMethod::HedonicOca => "hedonic-oca",
            PartitionMethod::HedonicPas => "hedonic-pas",
            PartitionMethod::Random => "random",
            PartitionMethod::KMeans => "k-means",
            PartitionMethod::Ward => "ward",
            PartitionMethod::Planted => "planted",
        }
    }
}

impl std::str::FromStr for PartitionMethod {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "hedonic-oca" => PartitionMethod::HedonicOca,
            "hedonic-pas" => PartitionMethod::HedonicPas,
            "random" => PartitionMethod::Random,
            "k-means" | "kmeans" => PartitionMethod::KMeans,
            "ward" => PartitionMethod::Ward,
            "planted" => PartitionMethod::Planted,
            other => return Err(domain(format!("unknown partition method {other:?}"))),
        })
    }
}

/// Disjoint coalitions covering a neuron pool, with provenance.
#[derive(Clone, Debug, PartialEq)]
pub struct Partition {
    coalitions: Vec<Coalition>,
    pool: Vec<NeuronId>,
    owner: Vec<u32>,
    pub method: PartitionMethod,
    pub seed: u64,
    pub params: BTreeMap<String, serde_json::Value>,
}

const NO_OWNER: u32 = u32::MAX;

impl Partition {
    /// Validates that `coalitions` are pairwise disjoint; the pool is their union.
    pub fn new(coalitions: Vec<Coalition>, method: PartitionMethod, seed: u64) -> Result<Self> {
        let max_id = coalitions
            .iter()
            .flat_map(|c| c.iter())
            .map(NeuronId::index)
            .max();
        let mut owner = vec![NO_OWNER; max_id.map_or(0, |m| m + 1)];
        let mut pool = Vec::new();
        for (ci, c) in coalitions.iter().enumerate() {
            for i in c.iter() {
                if owner[i.index()] != NO_OWNER {
                    return Err(domain(format!(
                        "neuron {i} appears in coalitions {} and {ci}",
                        owner[i.index()]
                    )));
                }
                owner[i.index()] = ci as u32;
                pool.push(i);
            }
        }
        pool.sort_unstable();
        Ok(Partition {
            coalitions,
            pool,
            owner,
            method,
            seed,
            params: BTreeMap::new(),
        })
    }

    /// Like [`Partition::new`] but also checks the union equals `pool`.
    pub fn with_pool(
        coalitions: Vec<Coalition>,
        pool: &[NeuronId],
        method: PartitionMethod,
        seed: u64,
    ) -> Result<Self> {
        let p = Self::new(coalitions, method, seed)?;
        let mut expected = pool.to_vec();
        expected.sort_unstable();
        expected.dedup();
        if expected != p.pool {
            return Err(domain(format!(
                "coalitions cover {} neurons but the pool has {}",
                p.pool.len(),
                expected.len()
            )));
        }
        Ok(p)
    }

    pub fn with_param(mut self, key: &str, value: impl Into<serde_json::Value>) -> Self {
        self.params.insert(key.to_string(), value.into());
        self
    }

    pub fn coalitions(&self) -> &[Coalition] {
        &self.coalitions
    }

    pub fn pool(&self) -> &[NeuronId] {
        &self.pool
    }

    pub fn len(&self) -> usize {
        self.coalitions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coalitions.is_empty()
    }

    pub fn contains(&self, i: NeuronId) -> bool {
        self.owner_index(i).is_some()
    }

    /// Index of the coalition holding `i`.
    pub fn owner_index(&self, i: NeuronId) -> Option<usize> {
        match self.owner.get(i.index()) {
            Some(&o) if o != NO_OWNER => Some(o as usize),
            _ => None,
        }
    }

    /// π(i).
    pub fn coalition_of(&self, i: NeuronId) -> Option<&Coalition> {
        self.owner_index(i).map(|c| &self.coalitions[c])
    }

    /// Coalition sizes, as a size → count histogram.
    pub fn size_histogram(&self) -> BTreeMap<usize, usize> {
        let mut h = BTreeMap::new();
        for c in &self.coalitions {
            *h.entry(c.len()).or_insert(0) += 1;
        }
        h
    }

    /// Cluster label per pool member, in pool order.
    pub fn labels(&self) -> Vec<usize> {
        self.pool
            .iter()
            .map(|&i| self.owner_index(i).expect("pool member has an owner"))
            .collect()
    }
}

/// True iff every member of `s` strictly prefers `s` to its coalition in `partition`.
pub fn blocks(s: &Coalition, partition: &Partition, phi: &AffinityMatrix, k: usize) -> Result<bool> {
    require_k(k)?;
    for i in s.iter() {
        if !partition.contains(i) {
            return Err(domain(format!("neuron {i} is not in the partition's pool")));
        }
        phi.check(i)?;
    }
    let mut buf = Vec::with_capacity(k);
    Ok(s.iter().all(|i| {
        let current = partition.coalition_of(i).expect("checked above");
        utility_in(i, s.members(), phi, k, &mut buf) > utility_in(i, current.members(), phi, k, &mut buf)
    }))
}

/// Per-neuron utility under the partition, indexed by neuron index.
fn assigned_utilities(partition: &Partition, phi: &AffinityMatrix, k: usize) -> Result<Vec<f64>> {
    let mut out = vec![f64::NAN; phi.n()];
    let mut buf = Vec::with_capacity(k);
    for c in partition.coalitions() {
        for i in c.iter() {
            phi.check(i)?;
            out[i.index()] = utility_in(i, c.members(), phi, k, &mut buf);
        }
    }
    Ok(out)
}

#[inline]
fn blocks_with(
    members: &[NeuronId],
    assigned: &[f64],
    phi: &AffinityMatrix,
    k: usize,
    buf: &mut Vec<(f64, NeuronId)>,
) -> bool {
    members
        .iter()
        .all(|&i| utility_in(i, members, phi, k, buf) > assigned[i.index()])
}

/// Binomial coefficient, saturating.
pub fn binomial(n: usize, r: usize) -> u128 {
    if r > n {
        return 0;
    }
    let r = r.min(n - r);
    let mut acc: u128 = 1;
    for t in 0..r {
        acc = match acc.checked_mul((n - t) as u128) {
            Some(v) => v / (t as u128 + 1),
            None => return u128::MAX,
        };
    }
    acc
}

/// Number of subsets of an `n`-set with size in `[min_size, max_size]`.
pub fn count_subsets(n: usize, min_size: usize, max_size: usize) -> u128 {
    (min_size.max(1)..=max_size.min(n)).fold(0u128, |acc, s| acc.saturating_add(binomial(n, s)))
}

/// Default budget for exhaustive coalition enumeration.
pub const DEFAULT_ENUMERATION_BUDGET: u64 = 50_000_000;

/// Visits subsets of `pool` with sizes in `[min_size, max_size]` in
/// lexicographic order of member lists. Stops early when `visit` returns true.
fn for_each_subset(
    pool: &[NeuronId],
    min_size: usize,
    max_size: usize,
    mut visit: impl FnMut(&[NeuronId]) -> bool,
) -> bool {
    fn rec(
        pool: &[NeuronId],
        start: usize,
        cur: &mut Vec<NeuronId>,
        min_size: usize,
        max_size: usize,
        visit: &mut dyn FnMut(&[NeuronId]) -> bool,
    ) -> bool {
        for p in start..pool.len() {
            cur.push(pool[p]);
            if cur.len() >= min_size && visit(cur) {
                return true;
            }
            if cur.len() < max_size && rec(pool, p + 1, cur, min_size, max_size, visit) {
                return true;
            }
            cur.pop();
        }
        false
    }
    let mut cur = Vec::with_capacity(max_size);
    rec(pool, 0, &mut cur, min_size.max(1), max_size, &mut visit)
}

fn check_budget(n: usize, min_size: usize, max_size: usize, budget: u64) -> Result<()> {
    let required = count_subsets(n, min_size, max_size);
    if required > budget as u128 {
        return Err(Error::Budget { required, budget });
    }
    Ok(())
}

/// Exhaustively searches coalitions of size `≤ max_size` for one that blocks
/// `partition`; returns the lexicographically first, or `None` when the
/// partition is core-stable up to that size.
pub fn brute_force_core_check(
    partition: &Partition,
    phi: &AffinityMatrix,
    k: usize,
    max_size: usize,
    budget: u64,
) -> Result<Option<Coalition>> {
    require_k(k)?;
    let pool = partition.pool();
    check_budget(pool.len(), 1, max_size, budget)?;
    let assigned = assigned_utilities(partition, phi, k)?;
    let mut buf = Vec::with_capacity(k);
    let mut found = None;
    for_each_subset(pool, 1, max_size, |members| {
        if blocks_with(members, &assigned, phi, k, &mut buf) {
            found = Some(Coalition::from_sorted_unchecked(members.to_vec()));
            true
        } else {
            false
        }
    });
    Ok(found)
}

/// Exact probability that a coalition drawn from the size-uniform
/// distribution over `[kmin, kmax]` blocks `partition`.
///
/// This is the distribution [`crate::sampler::sample_coalitions`] draws from:
/// a size uniform over `[kmin, min(kmax, n)]`, then members uniformly.
pub fn exact_blocking_probability(
    partition: &Partition,
    phi: &AffinityMatrix,
    k: usize,
    kmin: usize,
    kmax: usize,
    budget: u64,
) -> Result<f64> {
    require_k(k)?;
    let pool = partition.pool();
    let n = pool.len();
    let kmin = kmin.max(1);
    let top = kmax.min(n);
    if kmin > top {
        return Err(domain(format!(
            "no coalition sizes in [{kmin}, {kmax}] for pool of {n}"
        )));
    }
    check_budget(n, kmin, top, budget)?;
    let assigned = assigned_utilities(partition, phi, k)?;
    let mut blocking = vec![0u64; top + 1];
    let mut buf = Vec::with_capacity(k);
    for_each_subset(pool, kmin, top, |members| {
        if blocks_with(members, &assigned, phi, k, &mut buf) {
            blocking[members.len()] += 1;
        }
        false
    });
    let sizes = (kmin..=top).count() as f64;
    Ok((kmin..=top)
        .map(|s| blocking[s] as f64 / binomial(n, s) as f64)
        .sum::<f64>()
        / sizes)
}

/// A source of coalitions for Monte-Carlo stability estimation.
///
/// `draw` must be a pure function of `(trial, seed)` so that estimates do not
/// depend on how trials are scheduled across workers.
pub trait CoalitionSource: Sync {
    fn draw(&self, trial: u64, seed: u64) -> Coalition;
}

/// Cycles through a fixed list of coalitions; trial `t` yields entry `t mod len`.
#[derive(Clone, Debug)]
pub struct ListSource {
    coalitions: Vec<Coalition>,
}

impl ListSource {
    pub fn new(coalitions: Vec<Coalition>) -> Result<Self> {
        if coalitions.is_empty() {
            return Err(domain("coalition list must be non-empty"));
        }
        Ok(ListSource { coalitions })
    }

    /// Every subset of `pool` with size in `[min_size, max_size]`, lexicographic.
    pub fn exhaustive(pool: &[NeuronId], min_size: usize, max_size: usize, budget: u64) -> Result<Self> {
        let mut pool = pool.to_vec();
        pool.sort_unstable();
        check_budget(pool.len(), min_size, max_size, budget)?;
        let mut out = Vec::new();
        for_each_subset(&pool, min_size, max_size, |m| {
            out.push(Coalition::from_sorted_unchecked(m.to_vec()));
            false
        });
        Self::new(out)
    }

    pub fn len(&self) -> usize {
        self.coalitions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coalitions.is_empty()
    }
}

impl CoalitionSource for ListSource {
    fn draw(&self, trial: u64, _seed: u64) -> Coalition {
        self.coalitions[(trial % self.coalitions.len() as u64) as usize].clone()
    }
}

/// Size-uniform random coalitions over a pool, one independent stream per trial.
#[derive(Clone, Debug)]
pub struct UniformSource {
    pool: Vec<NeuronId>,
    kmin: usize,
    kmax: usize,
}

impl UniformSource {
    pub fn new(pool: &[NeuronId], kmin: usize, kmax: usize) -> Result<Self> {
        if pool.is_empty() || kmin == 0 || kmax < kmin {
            return Err(domain(
                "uniform source needs a non-empty pool and 1 ≤ kmin ≤ kmax",
            ));
        }
        let mut pool = pool.to_vec();
        pool.sort_unstable();
        Ok(UniformSource { pool, kmin, kmax })
    }
}

impl CoalitionSource for UniformSource {
    fn draw(&self, trial: u64, seed: u64) -> Coalition {
        let mut rng = stream_rng(seed, trial);
        crate::sampler::draw_one(&self.pool, self.kmin, self.kmax, &mut rng)
    }
}

/// Monte-Carlo estimate of a partition's blocking probability.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PacEstimate {
    pub p_hat: f64,
    /// Half-width of the normal-approximation 95% interval.
    pub ci95: f64,
    pub blocking: u64,
    pub trials: u64,
}

/// Fraction of `trials` sampled coalitions that block `partition`.
pub fn epsilon_pac_estimate(
    partition: &Partition,
    phi: &AffinityMatrix,
    k: usize,
    source: &dyn CoalitionSource,
    trials: u64,
    seed: u64,
) -> Result<PacEstimate> {
    require_k(k)?;
    if trials == 0 {
        return Err(domain("trials must be at least 1"));
    }
    let assigned = assigned_utilities(partition, phi, k)?;
    let blocking: u64 = (0..trials)
        .into_par_iter()
        .map_init(
            || Vec::with_capacity(k),
            |buf, t| {
                let s = source.draw(t, seed);
                let inside = s.iter().all(|i| partition.contains(i));
                u64::from(inside && blocks_with(s.members(), &assigned, phi, k, buf))
            },
        )
        .sum();
    let p_hat = blocking as f64 / trials as f64;
    Ok(PacEstimate {
        p_hat,
        ci95: 1.96 * (p_hat * (1.0 - p_hat) / trials as f64).sqrt(),
        blocking,
        trials,
    })
}

/// `ceil(c0 · n² · ε⁻¹ · ln(n/δ))`, the per-round sample count for an
/// (ε, δ)-PAC stable partition up to the constant `c0`.
pub fn required_sample_size(n: usize, epsilon: f64, delta: f64, c0: f64) -> Result<u64> {
    if n == 0 {
        return Err(domain("pool size must be at least 1"));
    }
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(domain(format!("epsilon must lie in (0, 1), got {epsilon}")));
    }
    if !(delta > 0.0 && delta < 1.0) {
        return Err(domain(format!("delta must lie in (0, 1), got {delta}")));
    }
    if !(c0 > 0.0 && c0.is_finite()) {
        return Err(domain(format!("c0 must be positive, got {c0}")));
    }
    let n = n as f64;
    let m = (c0 * n * n / epsilon * (n / delta).ln()).ceil();
    Ok(m as u64)
}

/// Adjusted Rand index between two partitions of the same pool.
pub fn adjusted_rand_index(a: &Partition, b: &Partition) -> Result<f64> {
    if a.pool() != b.pool() {
        return Err(domain("partitions cover different pools"));
    }
    let n = a.pool().len();
    if n < 2 {
        return Ok(1.0);
    }
    let la = a.labels();
    let lb = b.labels();
    let mut table = vec![vec![0u64; b.len()]; a.len()];
    for (x, y) in la.iter().zip(&lb) {
        table[*x][*y] += 1;
    }
    let c2 = |v: u64| (v * v.saturating_sub(1) / 2) as f64;
    let index: f64 = table.iter().flatten().map(|&v| c2(v)).sum();
    let rows: f64 = a.coalitions().iter().map(|c| c2(c.len() as u64)).sum();
    let cols: f64 = b.coalitions().iter().map(|c| c2(c.len() as u64)).sum();
    let total = c2(n as u64);
    let expected = rows * cols / total;
    let max = 0.5 * (rows + cols);
    if max == expected {
        return Ok(1.0);
    }
    Ok((index - expected) / (max - expected))
}
