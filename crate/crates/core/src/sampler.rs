//! Coalition reservoir generation and retention.

use std::cmp::Ordering;

use rand::seq::index;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};
use crate::game::{value_of_members, AffinityMatrix, Coalition, NeuronId};
use crate::rng::stream_rng;

/// Samples generated per RNG stream.
const CHUNK: usize = 4096;

/// Weight floor for Φ-proportional retention.
pub const PHI_FLOOR: f64 = 1e-12;

/// A sampled coalition with its cached coalition value Φ(S).
#[derive(Clone, Debug, PartialEq)]
pub struct CoalitionSample {
    pub members: Coalition,
    pub value: f64,
}

/// Ordered list of sampled coalitions.
#[derive(Clone, Debug, PartialEq)]
pub struct Reservoir {
    pub samples: Vec<CoalitionSample>,
    pub kmin: usize,
    pub kmax: usize,
    pub seed: u64,
}

impl Reservoir {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }
}

/// How a reservoir is thinned to ω samples.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Retention {
    /// Keep the ω largest Φ(S), ties by member list.
    #[default]
    TopOmega,
    /// Draw ω without replacement with probability ∝ max(Φ, 0) + η.
    PhiProportional,
}

impl std::str::FromStr for Retention {
    type Err = crate::Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "top" | "top-omega" => Ok(Retention::TopOmega),
            "phi" | "phi-proportional" => Ok(Retention::PhiProportional),
            other => Err(domain(format!("unknown retention mode {other:?}"))),
        }
    }
}

/// One coalition: size uniform in `[kmin, min(kmax, |pool|)]`, then members
/// uniformly without replacement. A pool smaller than `kmin` yields a
/// uniformly chosen singleton.
pub(crate) fn draw_one<R: Rng + ?Sized>(
    pool: &[NeuronId],
    kmin: usize,
    kmax: usize,
    rng: &mut R,
) -> Coalition {
    if pool.len() < kmin {
        return Coalition::singleton(pool[rng.random_range(0..pool.len())]);
    }
    let top = kmax.min(pool.len());
    let size = rng.random_range(kmin..=top);
    let mut members: Vec<NeuronId> = index::sample(rng, pool.len(), size)
        .into_iter()
        .map(|p| pool[p])
        .collect();
    members.sort_unstable();
    Coalition::from_sorted_unchecked(members)
}

/// Draws `m` coalitions from `pool` and caches Φ(S) under `(phi, k)`.
///
/// Generation is chunked with one RNG stream per chunk, so the reservoir is a
/// pure function of the arguments.
pub fn sample_coalitions(
    pool: &[NeuronId],
    m: usize,
    kmin: usize,
    kmax: usize,
    seed: u64,
    phi: &AffinityMatrix,
    k: usize,
) -> Result<Reservoir> {
    if kmin == 0 || kmax < kmin {
        return Err(domain(format!("need 1 ≤ kmin ≤ kmax, got [{kmin}, {kmax}]")));
    }
    if pool.is_empty() {
        return Err(domain("cannot sample from an empty pool"));
    }
    if k == 0 {
        return Err(domain("top-k choice size must be at least 1"));
    }
    if pool.len() < kmin {
        log::warn!(
            "pool of {} is smaller than kmin={kmin}; emitting singleton coalitions",
            pool.len()
        );
    }
    let mut sorted = pool.to_vec();
    sorted.sort_unstable();
    let chunks = m.div_ceil(CHUNK);
    let samples: Vec<CoalitionSample> = (0..chunks)
        .into_par_iter()
        .flat_map_iter(|c| {
            let mut rng = stream_rng(seed, c as u64);
            let mut buf = Vec::with_capacity(k);
            let len = CHUNK.min(m - c * CHUNK);
            let sorted = &sorted;
            (0..len)
                .map(move |_| {
                    let members = draw_one(sorted, kmin, kmax, &mut rng);
                    let value = value_of_members(members.members(), phi, k, &mut buf);
                    CoalitionSample { members, value }
                })
                .collect::<Vec<_>>()
        })
        .collect();
    Ok(Reservoir {
        samples,
        kmin,
        kmax,
        seed,
    })
}

fn by_value_then_members(a: &CoalitionSample, b: &CoalitionSample) -> Ordering {
    b.value
        .total_cmp(&a.value)
        .then_with(|| a.members.cmp(&b.members))
}

/// Thins `reservoir` to `omega` samples.
///
/// `TopOmega` returns samples sorted by descending Φ. `PhiProportional`
/// returns them in draw order; if no Φ is positive it falls back to uniform
/// draws with a warning.
pub fn retain_top(reservoir: Reservoir, omega: usize, mode: Retention, seed: u64) -> Result<Reservoir> {
    if omega > reservoir.len() {
        return Err(domain(format!(
            "cannot retain {omega} samples from a reservoir of {}",
            reservoir.len()
        )));
    }
    let Reservoir {
        mut samples,
        kmin,
        kmax,
        seed: rseed,
    } = reservoir;
    let samples = match mode {
        Retention::TopOmega => {
            if omega < samples.len() {
                samples.select_nth_unstable_by(omega, by_value_then_members);
                samples.truncate(omega);
            }
            samples.par_sort_unstable_by(by_value_then_members);
            samples
        }
        Retention::PhiProportional => {
            let uniform = !samples.iter().any(|s| s.value > 0.0);
            if uniform {
                log::warn!("no sampled coalition has positive value; retaining uniformly");
            }
            // Exponential-clock keys: drawing without replacement with
            // probability ∝ w is equivalent to keeping the ω smallest E/w.
            let mut rng = stream_rng(seed, u64::MAX);
            let mut keyed: Vec<(f64, usize)> = samples
                .iter()
                .enumerate()
                .map(|(p, s)| {
                    let w = if uniform {
                        1.0
                    } else {
                        s.value.max(0.0) + PHI_FLOOR
                    };
                    let u: f64 = rng.random::<f64>();
                    (-(1.0 - u).ln() / w, p)
                })
                .collect();
            keyed.sort_unstable_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            let mut slots: Vec<Option<CoalitionSample>> = samples.into_iter().map(Some).collect();
            keyed
                .iter()
                .take(omega)
                .map(|&(_, p)| slots[p].take().expect("each index drawn once"))
                .collect()
        }
    };
    Ok(Reservoir {
        samples,
        kmin,
        kmax,
        seed: rseed,
    })
}
