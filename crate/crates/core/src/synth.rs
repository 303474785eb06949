//! Synthetic games and oracles with known answers.

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Normal, Uniform};

use crate::ablation::{CurvatureOracle, LogitOracle};
use crate::error::{domain, Result};
use crate::game::{AffinityMatrix, Coalition, NeuronId, Partition, PartitionMethod};
use crate::layer::{LayerTensors, PreLoraWeights};
use crate::rng::stream_rng;

/// Splits `n` into `count` sizes differing by at most one, larger first.
pub fn even_sizes(n: usize, count: usize) -> Result<Vec<usize>> {
    if count == 0 || count > n {
        return Err(domain(format!(
            "cannot split {n} neurons into {count} non-empty coalitions"
        )));
    }
    Ok((0..count)
        .map(|c| n / count + usize::from(c < n % count))
        .collect())
}

/// Assigns a shuffled permutation of `0..n` to blocks of the given sizes.
pub fn planted_partition(n: usize, sizes: &[usize], seed: u64) -> Result<Partition> {
    if sizes.iter().sum::<usize>() != n || sizes.contains(&0) {
        return Err(domain(format!("sizes {sizes:?} do not partition {n} neurons")));
    }
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(&mut stream_rng(seed, 0));
    let mut coalitions = Vec::with_capacity(sizes.len());
    let mut start = 0;
    for &s in sizes {
        coalitions.push(Coalition::from_indices(&perm[start..start + s])?);
        start += s;
    }
    Ok(Partition::new(coalitions, PartitionMethod::Planted, seed)?)
}

/// Planted-coalition game: φ_ij ~ N(μ_in, σ²) inside a block, N(μ_out, σ²)
/// across, drawn once per unordered pair.
pub fn generate_planted(
    n: usize,
    sizes: &[usize],
    mu_in: f64,
    mu_out: f64,
    sigma: f64,
    seed: u64,
) -> Result<(AffinityMatrix, Partition)> {
    if !(sigma >= 0.0 && sigma.is_finite() && mu_in.is_finite() && mu_out.is_finite()) {
        return Err(domain("planted game parameters must be finite with σ ≥ 0"));
    }
    let planted = planted_partition(n, sizes, seed)?
        .with_param("mu_in", mu_in)
        .with_param("mu_out", mu_out)
        .with_param("sigma", sigma);
    let noise = Normal::new(0.0, sigma).expect("σ validated");
    let mut rng = stream_rng(seed, 1);
    let mut values = vec![0.0; n * n];
    for i in 0..n {
        for j in i + 1..n {
            let same = planted.owner_index(NeuronId::from(i)) == planted.owner_index(NeuronId::from(j));
            let mu = if same { mu_in } else { mu_out };
            let v = mu + noise.sample(&mut rng);
            values[i * n + j] = v;
            values[j * n + i] = v;
        }
    }
    Ok((AffinityMatrix::new(n, values)?, planted))
}

/// `ℓ(x) = c·a(x) + a(x)ᵀ Q a(x)` with ablation zeroing entries of `a(x)`.
#[derive(Clone, Debug)]
pub struct QuadraticOracle {
    /// `N × n` base activations.
    pub a: DMatrix<f64>,
    pub c: DVector<f64>,
    /// Symmetric `n × n`.
    pub q: DMatrix<f64>,
    qa: DMatrix<f64>,
    full: Vec<f64>,
}

impl QuadraticOracle {
    pub fn new(a: DMatrix<f64>, c: DVector<f64>, q: DMatrix<f64>) -> Result<Self> {
        let n = a.ncols();
        if c.len() != n || q.nrows() != n || q.ncols() != n {
            return Err(domain(format!(
                "quadratic oracle shapes disagree: a has {n} columns, c has {}, Q is {}×{}",
                c.len(),
                q.nrows(),
                q.ncols()
            )));
        }
        if q != q.transpose() {
            return Err(domain("Q must be symmetric"));
        }
        if a.iter().chain(c.iter()).chain(q.iter()).any(|v| !v.is_finite()) {
            return Err(domain("quadratic oracle entries must be finite"));
        }
        // Row x of qa is (Q a(x))ᵀ.
        let qa = &a * &q;
        let full = (0..a.nrows())
            .map(|x| {
                let ax = a.row(x);
                c.dot(&ax.transpose()) + ax.dot(&qa.row(x))
            })
            .collect();
        Ok(QuadraticOracle { a, c, q, qa, full })
    }

    /// Evaluates the polynomial on an explicitly ablated activation vector.
    pub fn logit_direct(&self, x: usize, ablated: &[NeuronId]) -> f64 {
        let mut a: DVector<f64> = self.a.row(x).transpose();
        for i in ablated {
            a[i.index()] = 0.0;
        }
        self.c.dot(&a) + a.dot(&(&self.q * &a))
    }
}

impl LogitOracle for QuadraticOracle {
    fn num_inputs(&self) -> usize {
        self.a.nrows()
    }

    fn num_neurons(&self) -> usize {
        self.a.ncols()
    }

    /// `ℓ − Σ_{i∈S} (c_i a_i + 2 a_i (Qa)_i) + Σ_{i,j∈S} a_i Q_ij a_j`.
    fn logit(&self, x: usize, ablated: &[NeuronId]) -> Result<f64> {
        if x >= self.a.nrows() {
            return Err(domain(format!(
                "input {x} out of range for {} inputs",
                self.a.nrows()
            )));
        }
        let n = self.a.ncols();
        if let Some(i) = ablated.iter().find(|i| i.index() >= n) {
            return Err(domain(format!("neuron {i} out of range for {n} neurons")));
        }
        let mut v = self.full[x];
        for i in ablated {
            let ai = self.a[(x, i.index())];
            v -= self.c[i.index()] * ai + 2.0 * ai * self.qa[(x, i.index())];
        }
        for i in ablated {
            for j in ablated {
                v += self.a[(x, i.index())] * self.q[(i.index(), j.index())] * self.a[(x, j.index())];
            }
        }
        Ok(v)
    }
}

impl CurvatureOracle for QuadraticOracle {
    fn activation(&self, x: usize, i: NeuronId) -> Result<f64> {
        self.logit(x, &[i])?;
        Ok(self.a[(x, i.index())])
    }

    fn mixed_partial(&self, _x: usize, i: NeuronId, j: NeuronId) -> Result<f64> {
        let n = self.a.ncols();
        if i.index() >= n || j.index() >= n {
            return Err(domain(format!("pair ({i}, {j}) out of range for {n} neurons")));
        }
        Ok(2.0 * self.q[(i.index(), j.index())])
    }
}

/// Closed-form ψ(i,j) = mean over `xs` of `2·Q_ij·a_i(x)·a_j(x)`.
pub fn analytic_psi(oracle: &QuadraticOracle, i: NeuronId, j: NeuronId, xs: &[usize]) -> Result<f64> {
    if i == j {
        return Err(domain(format!(
            "pairwise effect needs distinct neurons, got {i} twice"
        )));
    }
    if xs.is_empty() {
        return Err(domain("sample set must be non-empty"));
    }
    let qij = oracle.q[(i.index(), j.index())];
    let s: f64 = xs
        .iter()
        .map(|&x| 2.0 * qij * oracle.a[(x, i.index())] * oracle.a[(x, j.index())])
        .sum();
    Ok(s / xs.len() as f64)
}

/// Closed-form ψ(i) = mean of `c_i a_i + 2 a_i (Qa)_i − Q_ii a_i²`.
pub fn analytic_psi_single(oracle: &QuadraticOracle, i: NeuronId, xs: &[usize]) -> Result<f64> {
    if xs.is_empty() {
        return Err(domain("sample set must be non-empty"));
    }
    let p = i.index();
    let s: f64 = xs
        .iter()
        .map(|&x| {
            let ai = oracle.a[(x, p)];
            oracle.c[p] * ai + 2.0 * ai * oracle.qa[(x, p)] - oracle.q[(p, p)] * ai * ai
        })
        .sum();
    Ok(s / xs.len() as f64)
}

/// Random oracle with activations in [0.5, 1.5] and |Q_ij| ∈ [0.1, 1], so
/// every ψ(i,j) is bounded away from zero.
pub fn random_quadratic(n: usize, inputs: usize, seed: u64) -> Result<QuadraticOracle> {
    let mut rng = stream_rng(seed, 0);
    let act = Uniform::new(0.5, 1.5).expect("valid range");
    let mag = Uniform::new(0.1, 1.0).expect("valid range");
    let a = DMatrix::from_fn(inputs, n, |_, _| act.sample(&mut rng));
    let c = DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0));
    let mut q = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in i..n {
            let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
            let v = sign * mag.sample(&mut rng);
            q[(i, j)] = v;
            q[(j, i)] = v;
        }
    }
    QuadraticOracle::new(a, c, q)
}

/// Oracle whose Q has value `q_in` inside planted blocks and `q_out` across,
/// plus N(0, noise²) jitter; activations in [0.5, 1.5].
pub fn planted_quadratic(
    planted: &Partition,
    inputs: usize,
    q_in: f64,
    q_out: f64,
    noise: f64,
    seed: u64,
) -> Result<QuadraticOracle> {
    let n = planted.pool().len();
    if planted.pool().iter().enumerate().any(|(p, i)| i.index() != p) {
        return Err(domain("planted partition must cover 0..n"));
    }
    let mut rng = stream_rng(seed, 0);
    let act = Uniform::new(0.5, 1.5).expect("valid range");
    let jitter = Normal::new(0.0, noise).map_err(|e| domain(e.to_string()))?;
    let a = DMatrix::from_fn(inputs, n, |_, _| act.sample(&mut rng));
    let c = DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0));
    let mut q = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in i + 1..n {
            let same = planted.owner_index(NeuronId::from(i)) == planted.owner_index(NeuronId::from(j));
            let v = if same { q_in } else { q_out } + jitter.sample(&mut rng);
            q[(i, j)] = v;
            q[(j, i)] = v;
        }
    }
    QuadraticOracle::new(a, c, q)
}

/// Shape and structure of a synthetic gated-MLP layer.
#[derive(Clone, Debug)]
pub struct LayerSpec {
    pub d_ff: usize,
    pub d_model: usize,
    pub samples: usize,
    pub layer_index: i64,
    /// Channels in one planted block share a common input direction.
    pub planted: Option<Partition>,
    /// Weight of the shared direction versus per-channel noise.
    pub coupling: f64,
    /// Rank of the pre-adaptation offset; 0 omits pre-adaptation tensors.
    pub lora_rank: usize,
    pub seed: u64,
}

/// Random layer whose activations are the exact forward pass of its hidden states.
pub fn synthetic_layer(spec: &LayerSpec) -> Result<LayerTensors> {
    let (d_ff, d_model) = (spec.d_ff, spec.d_model);
    if d_ff == 0 || d_model == 0 || spec.samples == 0 {
        return Err(domain("synthetic layer dimensions must be positive"));
    }
    if let Some(p) = &spec.planted {
        if p.pool().len() != d_ff {
            return Err(domain(format!(
                "planted partition covers {} channels, layer has {d_ff}",
                p.pool().len()
            )));
        }
    }
    let mut rng = stream_rng(spec.seed, 0);
    let std = Normal::new(0.0, 1.0).expect("unit normal");
    let scale = 1.0 / (d_model as f64).sqrt();
    let mut g = || std.sample(&mut rng);
    let shared: Vec<DVector<f64>> = match &spec.planted {
        Some(p) => (0..p.len())
            .map(|_| DVector::from_fn(d_model, |_, _| g()))
            .collect(),
        None => Vec::new(),
    };
    let direction = |row: usize, g: &mut dyn FnMut() -> f64| -> DVector<f64> {
        let own = DVector::from_fn(d_model, |_, _| g());
        match &spec.planted {
            Some(p) => {
                let block = p.owner_index(NeuronId::from(row)).expect("planted covers layer");
                (&shared[block] * spec.coupling + own) * scale
            }
            None => own * scale,
        }
    };
    let mut w_up = DMatrix::zeros(d_ff, d_model);
    let mut w_gate = DMatrix::zeros(d_ff, d_model);
    for r in 0..d_ff {
        w_up.set_row(r, &direction(r, &mut g).transpose());
        w_gate.set_row(r, &direction(r, &mut g).transpose());
    }
    let w_down = DMatrix::from_fn(d_model, d_ff, |_, _| g() / (d_ff as f64).sqrt());
    let head_w = DVector::from_fn(d_model, |_, _| g() * scale);
    let head_b = g() * 0.1;
    let hidden = DMatrix::from_fn(spec.samples, d_model, |_, _| g());
    let pre_lora = (spec.lora_rank > 0).then(|| {
        let r = spec.lora_rank;
        let mut low_rank = |rows: usize, cols: usize| {
            let a = DMatrix::from_fn(rows, r, |_, _| g() * 0.1);
            let b = DMatrix::from_fn(cols, r, |_, _| g() * 0.1);
            a * b.transpose()
        };
        PreLoraWeights {
            w_up: &w_up - low_rank(d_ff, d_model),
            w_gate: &w_gate - low_rank(d_ff, d_model),
            w_down: &w_down - low_rank(d_model, d_ff),
        }
    });
    let mut activations = DMatrix::zeros(spec.samples, d_ff);
    for x in 0..spec.samples {
        let h: DVector<f64> = hidden.row(x).transpose();
        let up = &w_up * &h;
        let gate = &w_gate * &h;
        let gx = gate.zip_map(&up, |z, u| z / (1.0 + (-z).exp()) * u);
        activations.set_row(x, &gx.transpose());
    }
    let mut t = LayerTensors {
        layer_index: spec.layer_index,
        w_up,
        w_gate,
        w_down,
        pre_lora,
        head_w,
        head_b,
        hidden,
        activations,
        mean_abs_act: DVector::zeros(d_ff),
    };
    t.recompute_mean_abs_act();
    t.validate()?;
    Ok(t)
}
