//! Layer-local replay and ablation effects.
//!
//! The layer-local logit reads the residual stream right after one gated MLP:
//!
//! ```text
//! g   = SiLU(W_gate h) ⊙ (W_up h)
//! h'  = W_down g + h
//! ℓ   = w · h' + b
//! ```
//!
//! Ablating a channel set `S` either zeroes `g_c` for `c ∈ S` or swaps the
//! channel's rows/columns for their pre-adaptation values.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::game::{Coalition, NeuronId};
use crate::layer::LayerTensors;

/// Read access to `ℓ_{−S}(x)` for a fixed model.
///
/// Implementations must be deterministic per `(x, S)` and treat `S = ∅` as
/// the unablated logit.
pub trait LogitOracle: Sync {
    fn num_inputs(&self) -> usize;
    fn num_neurons(&self) -> usize;
    fn logit(&self, x: usize, ablated: &[NeuronId]) -> Result<f64>;
}

/// Oracles that also expose activations and their mixed second derivatives.
pub trait CurvatureOracle: LogitOracle {
    /// `a_i(x)`.
    fn activation(&self, x: usize, i: NeuronId) -> Result<f64>;
    /// `∂²ℓ(x) / ∂a_i ∂a_j`.
    fn mixed_partial(&self, x: usize, i: NeuronId, j: NeuronId) -> Result<f64>;
}

/// How a channel is removed.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AblationMode {
    /// Zero the post-gating activation.
    #[default]
    ActivationZero,
    /// Restore the channel's pre-adaptation weights in all three projections.
    WeightReset,
}

impl std::str::FromStr for AblationMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "zero" | "activation-zero" => Ok(AblationMode::ActivationZero),
            "reset" | "weight-reset" => Ok(AblationMode::WeightReset),
            other => Err(domain(format!("unknown ablation mode {other:?}"))),
        }
    }
}

/// An ablation: which channels, and how.
#[derive(Clone, Debug, PartialEq)]
pub struct AblationSpec {
    pub mode: AblationMode,
    pub set: Vec<NeuronId>,
}

impl AblationSpec {
    pub fn none() -> Self {
        AblationSpec {
            mode: AblationMode::ActivationZero,
            set: Vec::new(),
        }
    }

    pub fn new(mode: AblationMode, set: &Coalition) -> Self {
        AblationSpec {
            mode,
            set: set.members().to_vec(),
        }
    }
}

#[inline]
fn silu(z: f64) -> f64 {
    z / (1.0 + (-z).exp())
}

fn gated(w_up: &DMatrix<f64>, w_gate: &DMatrix<f64>, h: &DVector<f64>) -> DVector<f64> {
    let up = w_up * h;
    let gate = w_gate * h;
    gate.zip_map(&up, |g, u| silu(g) * u)
}

/// Evaluates the layer-local logit directly from the tensors.
pub fn layer_local_logit(tensors: &LayerTensors, x: usize, spec: &AblationSpec) -> Result<f64> {
    if x >= tensors.num_samples() {
        return Err(domain(format!(
            "input {x} out of range for {} samples",
            tensors.num_samples()
        )));
    }
    let d_ff = tensors.d_ff();
    if let Some(i) = spec.set.iter().find(|i| i.index() >= d_ff) {
        return Err(domain(format!("channel {i} out of range for d_ff = {d_ff}")));
    }
    let h: DVector<f64> = tensors.hidden.row(x).transpose();
    let mut g = gated(&tensors.w_up, &tensors.w_gate, &h);
    let mut w_down = std::borrow::Cow::Borrowed(&tensors.w_down);
    match spec.mode {
        AblationMode::ActivationZero => {
            for i in &spec.set {
                g[i.index()] = 0.0;
            }
        }
        AblationMode::WeightReset => {
            let pre = tensors
                .pre_lora
                .as_ref()
                .ok_or_else(|| Error::Capability("weight reset needs pre-adaptation tensors".into()))?;
            let w_down = w_down.to_mut();
            for i in &spec.set {
                let c = i.index();
                let up = pre.w_up.row(c).dot(&h.transpose());
                let gate = pre.w_gate.row(c).dot(&h.transpose());
                g[c] = silu(gate) * up;
                w_down.set_column(c, &pre.w_down.column(c));
            }
        }
    }
    let out = w_down.as_ref() * g + &h;
    Ok(tensors.head_w.dot(&out) + tensors.head_b)
}

/// Replay oracle over dumped tensors.
///
/// Precomputes per-channel logit contributions so that `ℓ_{−S}(x)` costs
/// `O(|S|)`: the logit is `w·h + b + Σ_c (w·W_down[:,c]) g_c(x)`.
#[derive(Clone, Debug)]
pub struct ReplayOracle {
    mode: AblationMode,
    base: Vec<f64>,
    full: Vec<f64>,
    /// `N × d_ff` post-gating activations g(x).
    g: DMatrix<f64>,
    /// `w · W_down[:, c]`.
    readout: DVector<f64>,
    /// Contribution of each channel once ablated (zero for activation zeroing).
    ablated: DMatrix<f64>,
}

impl ReplayOracle {
    pub fn new(tensors: &LayerTensors, mode: AblationMode) -> Result<Self> {
        tensors.validate()?;
        let n = tensors.num_samples();
        let d_ff = tensors.d_ff();
        let readout: DVector<f64> = tensors.w_down.tr_mul(&tensors.head_w);
        let mut g = DMatrix::zeros(n, d_ff);
        let mut base = Vec::with_capacity(n);
        let mut full = Vec::with_capacity(n);
        let mut ablated = DMatrix::zeros(n, d_ff);
        let pre = match mode {
            AblationMode::ActivationZero => None,
            AblationMode::WeightReset => Some(
                tensors
                    .pre_lora
                    .as_ref()
                    .ok_or_else(|| Error::Capability("weight reset needs pre-adaptation tensors".into()))?,
            ),
        };
        let pre_readout = pre.map(|p| p.w_down.tr_mul(&tensors.head_w));
        for x in 0..n {
            let h: DVector<f64> = tensors.hidden.row(x).transpose();
            let gx = gated(&tensors.w_up, &tensors.w_gate, &h);
            let b = tensors.head_w.dot(&h) + tensors.head_b;
            base.push(b);
            full.push(b + readout.dot(&gx));
            g.set_row(x, &gx.transpose());
            if let (Some(p), Some(r)) = (pre, &pre_readout) {
                let gp = gated(&p.w_up, &p.w_gate, &h);
                ablated.set_row(x, &gp.component_mul(r).transpose());
            }
        }
        Ok(ReplayOracle {
            mode,
            base,
            full,
            g,
            readout,
            ablated,
        })
    }

    pub fn mode(&self) -> AblationMode {
        self.mode
    }

    /// Logit with the activations perturbed by `deltas`, no ablation.
    pub fn perturbed_logit(&self, x: usize, deltas: &[(NeuronId, f64)]) -> f64 {
        self.full[x]
            + deltas
                .iter()
                .map(|(i, d)| self.readout[i.index()] * d)
                .sum::<f64>()
    }

    /// `w · h + b`: the logit with every channel removed by zeroing.
    pub fn residual_logit(&self, x: usize) -> f64 {
        self.base[x]
    }

    fn check(&self, x: usize, set: &[NeuronId]) -> Result<()> {
        if x >= self.full.len() {
            return Err(domain(format!(
                "input {x} out of range for {} samples",
                self.full.len()
            )));
        }
        if let Some(i) = set.iter().find(|i| i.index() >= self.readout.len()) {
            return Err(domain(format!(
                "channel {i} out of range for d_ff = {}",
                self.readout.len()
            )));
        }
        Ok(())
    }
}

impl LogitOracle for ReplayOracle {
    fn num_inputs(&self) -> usize {
        self.full.len()
    }

    fn num_neurons(&self) -> usize {
        self.readout.len()
    }

    fn logit(&self, x: usize, ablated: &[NeuronId]) -> Result<f64> {
        self.check(x, ablated)?;
        let mut v = self.full[x];
        for i in ablated {
            let c = i.index();
            v += self.ablated[(x, c)] - self.readout[c] * self.g[(x, c)];
        }
        Ok(v)
    }
}

/// Finite-difference step for second derivatives at activation `a`.
pub fn fd_step(a: f64) -> f64 {
    1e-3 * (1.0 + a.abs())
}

impl CurvatureOracle for ReplayOracle {
    fn activation(&self, x: usize, i: NeuronId) -> Result<f64> {
        self.check(x, &[i])?;
        Ok(self.g[(x, i.index())])
    }

    /// Central differences with steps `1e-3·(1 + |a|)`.
    fn mixed_partial(&self, x: usize, i: NeuronId, j: NeuronId) -> Result<f64> {
        self.check(x, &[i, j])?;
        let hi = fd_step(self.g[(x, i.index())]);
        let hj = fd_step(self.g[(x, j.index())]);
        let f = |si: f64, sj: f64| self.perturbed_logit(x, &[(i, si * hi), (j, sj * hj)]);
        Ok((f(1.0, 1.0) - f(1.0, -1.0) - f(-1.0, 1.0) + f(-1.0, -1.0)) / (4.0 * hi * hj))
    }
}

fn require_inputs(xs: &[usize]) -> Result<()> {
    if xs.is_empty() {
        return Err(domain("sample set must be non-empty"));
    }
    Ok(())
}

/// ψ(i) = mean over x of `ℓ(x) − ℓ_{−{i}}(x)`.
pub fn psi_single(oracle: &dyn LogitOracle, i: NeuronId, xs: &[usize]) -> Result<f64> {
    require_inputs(xs)?;
    let mut acc = 0.0;
    for &x in xs {
        acc += oracle.logit(x, &[])? - oracle.logit(x, &[i])?;
    }
    Ok(acc / xs.len() as f64)
}

/// ψ(i,j) = mean over x of `ℓ − ℓ_{−i} − ℓ_{−j} + ℓ_{−ij}`.
pub fn psi_pair(oracle: &dyn LogitOracle, i: NeuronId, j: NeuronId, xs: &[usize]) -> Result<f64> {
    require_inputs(xs)?;
    if i == j {
        return Err(domain(format!(
            "pairwise effect needs distinct neurons, got {i} twice"
        )));
    }
    // Canonical pair order makes ψ(i,j) and ψ(j,i) bit-identical.
    let (a, b) = if i < j { (i, j) } else { (j, i) };
    let mut acc = 0.0;
    for &x in xs {
        let l = oracle.logit(x, &[])?;
        let la = oracle.logit(x, &[a])?;
        let lb = oracle.logit(x, &[b])?;
        let lab = oracle.logit(x, &[a, b])?;
        acc += l - la - lb + lab;
    }
    Ok(acc / xs.len() as f64)
}

/// Cached `ℓ(x)` and `ℓ_{−{i}}(x)` over a pool, reused by every pair query.
#[derive(Clone, Debug)]
pub struct AblationTable {
    pub pool: Vec<NeuronId>,
    pub inputs: Vec<usize>,
    /// `ℓ(x)` per input.
    pub full: Vec<f64>,
    /// `ℓ_{−{pool[p]}}(x)`, indexed `[p][x]`.
    pub single: Vec<Vec<f64>>,
}

impl AblationTable {
    pub fn build(oracle: &dyn LogitOracle, pool: &[NeuronId], xs: &[usize]) -> Result<Self> {
        require_inputs(xs)?;
        let full = xs
            .iter()
            .map(|&x| oracle.logit(x, &[]))
            .collect::<Result<Vec<_>>>()?;
        let single = pool
            .par_iter()
            .map(|&i| {
                xs.iter()
                    .map(|&x| oracle.logit(x, &[i]))
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(AblationTable {
            pool: pool.to_vec(),
            inputs: xs.to_vec(),
            full,
            single,
        })
    }

    /// ψ(pool[p]).
    pub fn psi_single(&self, p: usize) -> f64 {
        let acc: f64 = self.full.iter().zip(&self.single[p]).map(|(l, li)| l - li).sum();
        acc / self.inputs.len() as f64
    }

    /// ψ(pool[p], pool[q]) using the cached single-ablation terms.
    pub fn psi_pair(&self, oracle: &dyn LogitOracle, p: usize, q: usize) -> Result<f64> {
        let (p, q) = if self.pool[p] < self.pool[q] {
            (p, q)
        } else {
            (q, p)
        };
        let pair = [self.pool[p], self.pool[q]];
        let mut acc = 0.0;
        for (t, &x) in self.inputs.iter().enumerate() {
            let lab = oracle.logit(x, &pair)?;
            acc += self.full[t] - self.single[p][t] - self.single[q][t] + lab;
        }
        Ok(acc / self.inputs.len() as f64)
    }

    /// `−mean[ℓ_{−ij} − ℓ_{−i} − ℓ_{−j} + ℓ]`, term order as written.
    pub fn pas_pair(&self, oracle: &dyn LogitOracle, p: usize, q: usize) -> Result<f64> {
        let (p, q) = if self.pool[p] < self.pool[q] {
            (p, q)
        } else {
            (q, p)
        };
        let pair = [self.pool[p], self.pool[q]];
        let mut acc = 0.0;
        for (t, &x) in self.inputs.iter().enumerate() {
            let lab = oracle.logit(x, &pair)?;
            acc += lab - self.single[p][t] - self.single[q][t] + self.full[t];
        }
        Ok(-(acc / self.inputs.len() as f64))
    }
}

/// ψ(i) for every pool member and ψ(i,j) for every unordered pair.
#[derive(Clone, Debug)]
pub struct PsiTable {
    pub pool: Vec<NeuronId>,
    pub single: Vec<f64>,
    /// Symmetric `|pool| × |pool|`, zero diagonal.
    pub pair: DMatrix<f64>,
}

impl PsiTable {
    pub fn compute(oracle: &dyn LogitOracle, pool: &[NeuronId], xs: &[usize]) -> Result<Self> {
        let table = AblationTable::build(oracle, pool, xs)?;
        let n = pool.len();
        let single = (0..n).map(|p| table.psi_single(p)).collect();
        let pairs: Vec<(usize, usize)> = (0..n).flat_map(|p| (p + 1..n).map(move |q| (p, q))).collect();
        let values = pairs
            .par_iter()
            .map(|&(p, q)| table.psi_pair(oracle, p, q))
            .collect::<Result<Vec<_>>>()?;
        let mut pair = DMatrix::zeros(n, n);
        for (&(p, q), v) in pairs.iter().zip(values) {
            pair[(p, q)] = v;
            pair[(q, p)] = v;
        }
        Ok(PsiTable {
            pool: pool.to_vec(),
            single,
            pair,
        })
    }
}
