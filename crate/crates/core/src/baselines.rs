//! Comparison partitioners: random with a matched size histogram, spherical
//! k-means and Ward linkage on cosine distances.
//!
//! The clustering baselines represent neuron `p` by column `p` of an `N × n`
//! activation matrix. Neurons whose profile is all zeros have no direction;
//! they are collected into one extra "dead" coalition and the remaining
//! neurons are clustered into `k` groups.

use std::collections::BTreeMap;

use kodama::{linkage, Method};
use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;

use crate::error::{domain, Result};
use crate::game::{Coalition, NeuronId, Partition, PartitionMethod};
use crate::rng::stream_rng;

/// Coalition size → number of coalitions of that size.
pub type SizeHistogram = BTreeMap<usize, usize>;

/// Shuffles `pool` and slices it into blocks matching `hist`, largest sizes first.
pub fn random_partition(pool: &[NeuronId], hist: &SizeHistogram, seed: u64) -> Result<Partition> {
    let total: usize = hist.iter().map(|(s, c)| s * c).sum();
    if total != pool.len() || hist.contains_key(&0) {
        return Err(domain(format!(
            "histogram covers {total} neurons but the pool has {}",
            pool.len()
        )));
    }
    let mut shuffled = pool.to_vec();
    shuffled.sort_unstable();
    shuffled.shuffle(&mut stream_rng(seed, 0));
    let mut coalitions = Vec::new();
    let mut rest = &shuffled[..];
    for (&size, &count) in hist.iter().rev() {
        for _ in 0..count {
            let (block, tail) = rest.split_at(size);
            coalitions.push(Coalition::new(block.iter().copied())?);
            rest = tail;
        }
    }
    Ok(
        Partition::with_pool(coalitions, pool, PartitionMethod::Random, seed)?
            .with_param("histogram", serde_json::to_value(hist).expect("map serializes")),
    )
}

/// Unit-norm profiles of live neurons plus the indices of dead ones.
struct Profiles {
    live: Vec<usize>,
    dead: Vec<usize>,
    /// One unit column per live neuron.
    unit: DMatrix<f64>,
}

fn profiles(activations: &DMatrix<f64>) -> Result<Profiles> {
    if activations.iter().any(|v| !v.is_finite()) {
        return Err(domain("activation profiles must be finite"));
    }
    let (live, dead): (Vec<usize>, Vec<usize>) =
        (0..activations.ncols()).partition(|&p| activations.column(p).norm() > 0.0);
    let mut unit = DMatrix::zeros(activations.nrows(), live.len());
    for (c, &p) in live.iter().enumerate() {
        let col = activations.column(p);
        unit.set_column(c, &(col / col.norm()));
    }
    if !dead.is_empty() {
        log::warn!(
            "{} neurons have all-zero profiles and form the dead cluster",
            dead.len()
        );
    }
    Ok(Profiles { live, dead, unit })
}

fn check_k(k: usize, n: usize) -> Result<()> {
    if k == 0 || k > n {
        return Err(domain(format!("need 1 ≤ k ≤ {n} clusters, got {k}")));
    }
    Ok(())
}

/// Coalitions from per-live-neuron labels, sorted by member list, dead cluster last.
fn assemble(
    prof: &Profiles,
    labels: &[usize],
    method: PartitionMethod,
    seed: u64,
    k: usize,
) -> Result<Partition> {
    let mut groups: BTreeMap<usize, Vec<NeuronId>> = BTreeMap::new();
    for (c, &l) in labels.iter().enumerate() {
        groups.entry(l).or_default().push(NeuronId::from(prof.live[c]));
    }
    let mut coalitions: Vec<Coalition> = groups.into_values().map(Coalition::new).collect::<Result<_>>()?;
    coalitions.sort();
    if !prof.dead.is_empty() {
        coalitions.push(Coalition::new(prof.dead.iter().map(|&p| NeuronId::from(p)))?);
    }
    Ok(Partition::new(coalitions, method, seed)?
        .with_param("k", k)
        .with_param("dead", prof.dead.len()))
}

/// Trace of a spherical k-means run.
#[derive(Clone, Debug)]
pub struct KMeansRun {
    pub partition: Partition,
    /// Σ dot(x, centroid) after each assignment step.
    pub objective: Vec<f64>,
    pub iterations: usize,
}

pub const KMEANS_MAX_ITER: usize = 300;

/// Spherical k-means with farthest-point seeding; stops when assignments
/// stop changing or after `max_iter` iterations.
pub fn spherical_kmeans(
    activations: &DMatrix<f64>,
    k: usize,
    seed: u64,
    max_iter: usize,
) -> Result<Partition> {
    spherical_kmeans_run(activations, k, seed, max_iter).map(|r| r.partition)
}

pub fn spherical_kmeans_run(
    activations: &DMatrix<f64>,
    k: usize,
    seed: u64,
    max_iter: usize,
) -> Result<KMeansRun> {
    check_k(k, activations.ncols())?;
    let prof = profiles(activations)?;
    let n = prof.live.len();
    if n == 0 {
        return Ok(KMeansRun {
            partition: assemble(&prof, &[], PartitionMethod::KMeans, seed, k)?,
            objective: Vec::new(),
            iterations: 0,
        });
    }
    let k = k.min(n);
    let x = &prof.unit;

    // Farthest-point seeding in cosine distance, ties to the smaller index.
    let first = stream_rng(seed, 0).random_range(0..n);
    let mut centers = vec![first];
    let mut best_sim: Vec<f64> = (0..n).map(|p| x.column(p).dot(&x.column(first))).collect();
    while centers.len() < k {
        let next = (0..n)
            .filter(|p| !centers.contains(p))
            .min_by(|&a, &b| best_sim[a].total_cmp(&best_sim[b]).then(a.cmp(&b)))
            .expect("k ≤ n leaves a candidate");
        centers.push(next);
        for p in 0..n {
            best_sim[p] = best_sim[p].max(x.column(p).dot(&x.column(next)));
        }
    }
    let mut centroids: Vec<DVector<f64>> = centers.iter().map(|&c| x.column(c).into_owned()).collect();

    let assign = |centroids: &[DVector<f64>]| -> (Vec<usize>, f64) {
        let best: Vec<(usize, f64)> = (0..n)
            .into_par_iter()
            .map(|p| {
                let col = x.column(p);
                let mut arg = (0, f64::NEG_INFINITY);
                for (c, m) in centroids.iter().enumerate() {
                    let s = col.dot(m);
                    if s > arg.1 {
                        arg = (c, s);
                    }
                }
                arg
            })
            .collect();
        let objective = best.iter().map(|b| b.1).sum();
        (best.into_iter().map(|b| b.0).collect(), objective)
    };

    let (mut labels, obj) = assign(&centroids);
    let mut objective = vec![obj];
    let mut iterations = 0;
    while iterations < max_iter {
        iterations += 1;
        for (c, centroid) in centroids.iter_mut().enumerate() {
            let mut sum = DVector::zeros(x.nrows());
            for p in (0..n).filter(|&p| labels[p] == c) {
                sum += x.column(p);
            }
            let norm = sum.norm();
            if norm > 0.0 {
                *centroid = sum / norm;
            }
        }
        let (next, obj) = assign(&centroids);
        objective.push(obj);
        if next == labels {
            break;
        }
        labels = next;
    }
    Ok(KMeansRun {
        partition: assemble(&prof, &labels, PartitionMethod::KMeans, seed, k)?
            .with_param("iterations", iterations),
        objective,
        iterations,
    })
}

/// Condensed upper-triangle cosine distances `1 − cos` between unit columns.
fn cosine_distances(unit: &DMatrix<f64>) -> Vec<f64> {
    let n = unit.ncols();
    let gram = unit.tr_mul(unit);
    let mut d = Vec::with_capacity(n * n.saturating_sub(1) / 2);
    for i in 0..n {
        for j in i + 1..n {
            d.push((1.0 - gram[(i, j)]).max(0.0));
        }
    }
    d
}

/// Applies the first `n − k` merges of a dendrogram; returns labels per observation.
fn cut(steps: &[(usize, usize)], n: usize, k: usize) -> Vec<usize> {
    let mut parent: Vec<usize> = (0..2 * n).collect();
    fn find(parent: &mut [usize], mut x: usize) -> usize {
        while parent[x] != x {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        x
    }
    for (s, &(a, b)) in steps.iter().take(n - k).enumerate() {
        let new = n + s;
        let ra = find(&mut parent, a);
        let rb = find(&mut parent, b);
        parent[ra] = new;
        parent[rb] = new;
    }
    (0..n).map(|p| find(&mut parent, p)).collect()
}

/// Ward linkage driven by the Lance–Williams update on `d = 1 − cos`, cut at `k` clusters.
pub fn ward_cosine(activations: &DMatrix<f64>, k: usize) -> Result<Partition> {
    check_k(k, activations.ncols())?;
    let prof = profiles(activations)?;
    let n = prof.live.len();
    if n == 0 {
        return assemble(&prof, &[], PartitionMethod::Ward, 0, k);
    }
    let k = k.min(n);
    // kodama squares Ward inputs before the update, so feeding √d makes the
    // update act on d itself.
    let mut condensed: Vec<f64> = cosine_distances(&prof.unit).into_iter().map(f64::sqrt).collect();
    let dendrogram = linkage(&mut condensed, n, Method::Ward);
    let steps: Vec<(usize, usize)> = dendrogram
        .steps()
        .iter()
        .map(|s| (s.cluster1, s.cluster2))
        .collect();
    let labels = cut(&steps, n, k);
    assemble(&prof, &labels, PartitionMethod::Ward, 0, k)
}
