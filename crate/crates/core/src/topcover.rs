//! PAC top-cover for top-k responsive games.
//!
//! Each round estimates every active neuron's choice set from sampled
//! coalitions, builds the preference digraph `i → j for j ∈ B_i`, removes the
//! smallest closed sink strongly connected component, and repeats until the
//! pool is empty.

use petgraph::algo::tarjan_scc;
use petgraph::graph::{DiGraph, NodeIndex};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};
use crate::game::{
    required_sample_size, top_partners, utility_in, AffinityMatrix, Coalition, NeuronId, Partition,
    PartitionMethod,
};
use crate::sampler::{retain_top, sample_coalitions, CoalitionSample, Retention};

/// Parameters of one top-cover run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TopCoverConfig {
    pub k: usize,
    /// Coalitions drawn per reservoir refresh.
    pub m: usize,
    /// Coalitions retained per refresh and consumed per round.
    pub omega: usize,
    pub kmin: usize,
    pub kmax: usize,
    pub epsilon: f64,
    pub delta: f64,
    pub seed: u64,
    pub retention: Retention,
}

impl Default for TopCoverConfig {
    fn default() -> Self {
        Self::preset_experiments()
    }
}

impl TopCoverConfig {
    /// Large-pool experimental configuration: m = 8·10⁵, ω = 8·10⁴, top-3.
    pub fn preset_experiments() -> Self {
        TopCoverConfig {
            k: 3,
            m: 800_000,
            omega: 80_000,
            kmin: 2,
            kmax: 10,
            epsilon: 0.1,
            delta: 0.1,
            seed: 0,
            retention: Retention::TopOmega,
        }
    }

    /// Convergence-budget configuration: m = 1.2·10⁵, ω = 3.2·10⁴.
    pub fn preset_converged() -> Self {
        TopCoverConfig {
            m: 120_000,
            omega: 32_000,
            ..Self::preset_experiments()
        }
    }

    /// Sets `m = ω = required_sample_size(n, ε, δ, c0)`.
    pub fn with_pac_budget(mut self, n: usize, c0: f64) -> Result<Self> {
        let m = required_sample_size(n, self.epsilon, self.delta, c0)? as usize;
        self.m = m;
        self.omega = m;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(domain("k must be at least 1"));
        }
        if self.m == 0 || self.omega == 0 {
            return Err(domain("m and omega must be positive"));
        }
        if self.omega > self.m {
            return Err(domain(format!("omega={} exceeds m={}", self.omega, self.m)));
        }
        if self.kmin == 0 || self.kmax < self.kmin {
            return Err(domain(format!(
                "need 1 ≤ kmin ≤ kmax, got [{}, {}]",
                self.kmin, self.kmax
            )));
        }
        Ok(())
    }

    /// `(m, ω)` after shrinking for small pools: `m ≤ 4·2^n`, `ω ≤ m`.
    pub fn effective_budget(&self, n: usize) -> (usize, usize) {
        let cap = if n < 60 { 4usize << n } else { usize::MAX };
        let m = self.m.min(cap).max(1);
        (m, self.omega.min(m))
    }
}

/// Choice set per active neuron, aligned with the active pool.
#[derive(Clone, Debug, PartialEq)]
pub struct ChoiceSets {
    pub pool: Vec<NeuronId>,
    pub sets: Vec<Coalition>,
}

impl ChoiceSets {
    pub fn get(&self, i: NeuronId) -> Option<&Coalition> {
        self.pool.binary_search(&i).ok().map(|p| &self.sets[p])
    }
}

/// For each `i` in `pool`: the sample maximizing `u_i` (ties to the
/// lexicographically smaller member list) and `B_i`, its top-k partners there.
/// A neuron absent from every sample gets the self-loop `{i}`.
pub fn estimate_choice_sets(
    pool: &[NeuronId],
    samples: &[CoalitionSample],
    phi: &AffinityMatrix,
    k: usize,
) -> Result<ChoiceSets> {
    let mut pool = pool.to_vec();
    pool.sort_unstable();
    pool.dedup();
    if let Some(s) = samples
        .iter()
        .find(|s| s.members.iter().any(|i| pool.binary_search(&i).is_err()))
    {
        return Err(domain(format!(
            "sample {} is not inside the active pool",
            s.members
        )));
    }
    let width = pool.len();
    let slot = |i: NeuronId| pool.binary_search(&i).expect("sample inside pool");

    // best[p] = (utility, sample index) of the incumbent for pool[p]
    type Best = Vec<Option<(f64, usize)>>;
    let better = |cand: (f64, usize), cur: Option<(f64, usize)>| match cur {
        None => true,
        Some(cur) => cand.0 > cur.0 || (cand.0 == cur.0 && samples[cand.1].members < samples[cur.1].members),
    };
    let merge = |mut a: Best, b: Best| {
        for (x, y) in a.iter_mut().zip(b) {
            if let Some(y) = y {
                if better(y, *x) {
                    *x = Some(y);
                }
            }
        }
        a
    };
    let best: Best = samples
        .par_iter()
        .enumerate()
        .fold(
            || (vec![None; width], Vec::with_capacity(k)),
            |(mut best, mut buf), (si, s)| {
                for i in s.members.iter() {
                    let u = utility_in(i, s.members.members(), phi, k, &mut buf);
                    let p = slot(i);
                    if better((u, si), best[p]) {
                        best[p] = Some((u, si));
                    }
                }
                (best, buf)
            },
        )
        .map(|(best, _)| best)
        .reduce(|| vec![None; width], merge);

    let mut buf = Vec::with_capacity(k);
    let sets = pool
        .iter()
        .zip(&best)
        .map(|(&i, b)| match b {
            None => Coalition::singleton(i),
            Some((_, si)) => {
                top_partners(i, samples[*si].members.members(), phi, k, &mut buf);
                if buf.is_empty() {
                    Coalition::singleton(i)
                } else {
                    let mut ids: Vec<NeuronId> = buf.iter().map(|e| e.1).collect();
                    ids.sort_unstable();
                    Coalition::from_sorted_unchecked(ids)
                }
            }
        })
        .collect();
    Ok(ChoiceSets { pool, sets })
}

/// Preference digraph over the active pool; node `p` is `pool[p]`.
#[derive(Clone, Debug)]
pub struct PreferenceGraph {
    pool: Vec<NeuronId>,
    graph: DiGraph<NeuronId, ()>,
}

impl PreferenceGraph {
    pub fn new(choices: &ChoiceSets) -> Result<Self> {
        let mut graph = DiGraph::with_capacity(choices.pool.len(), choices.pool.len());
        for &i in &choices.pool {
            graph.add_node(i);
        }
        for (p, set) in choices.sets.iter().enumerate() {
            for j in set.iter() {
                let q = choices.pool.binary_search(&j).map_err(|_| {
                    domain(format!(
                        "choice set of {} names {j}, which is not in the pool",
                        choices.pool[p]
                    ))
                })?;
                graph.add_edge(NodeIndex::new(p), NodeIndex::new(q), ());
            }
        }
        Ok(PreferenceGraph {
            pool: choices.pool.clone(),
            graph,
        })
    }

    pub fn node_count(&self) -> usize {
        self.pool.len()
    }

    pub fn out_degree(&self, i: NeuronId) -> usize {
        self.pool
            .binary_search(&i)
            .map(|p| self.graph.neighbors(NodeIndex::new(p)).count())
            .unwrap_or(0)
    }

    /// Edges as `(from, to)` pairs in insertion order.
    pub fn edges(&self) -> Vec<(NeuronId, NeuronId)> {
        self.graph
            .raw_edges()
            .iter()
            .map(|e| (self.pool[e.source().index()], self.pool[e.target().index()]))
            .collect()
    }
}

/// Picks the smallest closed sink SCC (ties by member list).
///
/// A sink SCC has no edges leaving it; closure additionally requires
/// `B_i ⊆ X` for every member. If no sink SCC is closed, the smallest sink SCC
/// is grown by its members' choice sets to a fixed point.
pub fn sink_closed_scc(graph: &PreferenceGraph, choices: &ChoiceSets) -> Result<Coalition> {
    if graph.node_count() == 0 {
        return Err(domain("preference graph is empty"));
    }
    let sccs = tarjan_scc(&graph.graph);
    let mut comp = vec![usize::MAX; graph.node_count()];
    for (c, nodes) in sccs.iter().enumerate() {
        for n in nodes {
            comp[n.index()] = c;
        }
    }
    let mut is_sink = vec![true; sccs.len()];
    for e in graph.graph.raw_edges() {
        let (a, b) = (comp[e.source().index()], comp[e.target().index()]);
        if a != b {
            is_sink[a] = false;
        }
    }
    let as_coalition = |nodes: &[NodeIndex]| {
        let mut ids: Vec<NeuronId> = nodes.iter().map(|n| graph.pool[n.index()]).collect();
        ids.sort_unstable();
        Coalition::from_sorted_unchecked(ids)
    };
    let sinks: Vec<Coalition> = sccs
        .iter()
        .enumerate()
        .filter(|(c, _)| is_sink[*c])
        .map(|(_, nodes)| as_coalition(nodes))
        .collect();
    let smallest = |cs: Vec<Coalition>| {
        cs.into_iter()
            .min_by(|a, b| a.len().cmp(&b.len()).then_with(|| a.cmp(b)))
    };

    let closed: Vec<Coalition> = sinks
        .iter()
        .filter(|x| {
            x.iter()
                .all(|i| choices.get(i).is_some_and(|b| b.is_subset_of(x)))
        })
        .cloned()
        .collect();
    if let Some(x) = smallest(closed) {
        return Ok(x);
    }

    let seed = smallest(sinks).expect("a finite digraph has a sink component");
    log::warn!("no closed sink component; growing {seed} to its choice-set closure");
    let mut members: Vec<NeuronId> = seed.members().to_vec();
    loop {
        let mut next = members.clone();
        for &i in &members {
            if let Some(b) = choices.get(i) {
                next.extend(b.iter().filter(|j| graph.pool.binary_search(j).is_ok()));
            }
        }
        next.sort_unstable();
        next.dedup();
        if next.len() == members.len() {
            break;
        }
        members = next;
    }
    Ok(Coalition::from_sorted_unchecked(members))
}

/// Diagnostics for one top-cover round.
#[derive(Clone, Debug, PartialEq)]
pub struct RoundStats {
    pub active: usize,
    pub samples: usize,
    pub refreshed: bool,
    pub extracted: usize,
}

/// Output of [`run_top_cover`].
#[derive(Clone, Debug)]
pub struct TopCoverRun {
    pub partition: Partition,
    pub rounds: Vec<RoundStats>,
}

/// Runs PAC top-cover over the pool `{0, …, n−1}`.
pub fn pac_top_cover(phi: &AffinityMatrix, cfg: &TopCoverConfig) -> Result<Partition> {
    run_top_cover(phi, cfg).map(|r| r.partition)
}

/// Moves up to `want` reservoir samples lying inside the active pool into
/// `round`, in reservoir order. Samples touching removed neurons are dropped
/// since the pool only shrinks.
fn take_active(
    reservoir: &mut Vec<CoalitionSample>,
    active: &[bool],
    want: usize,
    round: &mut Vec<CoalitionSample>,
) {
    let mut kept = Vec::with_capacity(reservoir.len());
    let mut taken = 0;
    for s in reservoir.drain(..) {
        if !s.members.iter().all(|i| active[i.index()]) {
            continue;
        }
        if taken < want {
            round.push(s);
            taken += 1;
        } else {
            kept.push(s);
        }
    }
    *reservoir = kept;
}

/// Runs PAC top-cover and returns per-round diagnostics alongside the partition.
pub fn run_top_cover(phi: &AffinityMatrix, cfg: &TopCoverConfig) -> Result<TopCoverRun> {
    cfg.validate()?;
    let n = phi.n();
    if n == 0 {
        return Err(domain("affinity matrix is empty"));
    }
    let (m, omega) = cfg.effective_budget(n);
    let mut remaining: Vec<NeuronId> = (0..n).map(NeuronId::from).collect();
    let mut active = vec![true; n];
    let mut refreshes = 0u64;
    let draw = |pool: &[NeuronId], stream: u64| -> Result<Vec<CoalitionSample>> {
        let seed = cfg.seed.wrapping_add(stream.wrapping_mul(0x9E37_79B9_7F4A_7C15));
        let r = sample_coalitions(pool, m, cfg.kmin, cfg.kmax, seed, phi, cfg.k)?;
        Ok(retain_top(r, omega, cfg.retention, seed)?.samples)
    };
    let mut reservoir = draw(&remaining, 0)?;
    let mut coalitions = Vec::new();
    let mut rounds = Vec::new();

    while !remaining.is_empty() {
        let mut round = Vec::with_capacity(omega);
        take_active(&mut reservoir, &active, omega, &mut round);
        let refreshed = round.len() < omega;
        if refreshed {
            refreshes += 1;
            reservoir.extend(draw(&remaining, refreshes)?);
            let want = omega - round.len();
            take_active(&mut reservoir, &active, want, &mut round);
        }
        let choices = estimate_choice_sets(&remaining, &round, phi, cfg.k)?;
        let graph = PreferenceGraph::new(&choices)?;
        let x = sink_closed_scc(&graph, &choices)?;
        for i in x.iter() {
            active[i.index()] = false;
        }
        remaining.retain(|i| active[i.index()]);
        log::debug!(
            "round {}: {} active, {} samples, extracted {}",
            rounds.len(),
            choices.pool.len(),
            round.len(),
            x.len()
        );
        rounds.push(RoundStats {
            active: choices.pool.len(),
            samples: round.len(),
            refreshed,
            extracted: x.len(),
        });
        coalitions.push(x);
    }

    let partition = Partition::new(coalitions, PartitionMethod::HedonicOca, cfg.seed)?
        .with_param("k", cfg.k)
        .with_param("m", m)
        .with_param("omega", omega)
        .with_param("kmin", cfg.kmin)
        .with_param("kmax", cfg.kmax)
        .with_param("epsilon", cfg.epsilon)
        .with_param("delta", cfg.delta)
        .with_param(
            "retention",
            match cfg.retention {
                Retention::TopOmega => "top-omega",
                Retention::PhiProportional => "phi-proportional",
            },
        );
    Ok(TopCoverRun { partition, rounds })
}
