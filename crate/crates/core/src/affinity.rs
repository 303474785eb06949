//! Pairwise valuations: orthogonal co-activation (OCA) and pairwise ablation
//! synergy (PAS), the latter exact or from second derivatives.
//!
//! PAS matrices are indexed by position in the supplied pool: entry `(p, q)`
//! is the pair `(pool[p], pool[q])`.

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::ablation::{AblationTable, CurvatureOracle, LogitOracle};
use crate::error::{domain, Error, Result};
use crate::game::{AffinityMatrix, NeuronId};
use crate::layer::LayerTensors;

/// Per-neuron moments of an `N × n` activation matrix.
#[derive(Clone, Debug)]
pub struct ActivationStats {
    pub mean: Vec<f64>,
    /// Population standard deviation.
    pub std: Vec<f64>,
    centered: DMatrix<f64>,
}

impl ActivationStats {
    pub fn new(activations: &DMatrix<f64>) -> Result<Self> {
        let n_samples = activations.nrows();
        if n_samples < 2 {
            return Err(domain(format!("need at least 2 samples, got {n_samples}")));
        }
        let mean: Vec<f64> = activations
            .column_iter()
            .map(|c| c.sum() / n_samples as f64)
            .collect();
        let mut centered = activations.clone();
        for (p, mut col) in centered.column_iter_mut().enumerate() {
            col.add_scalar_mut(-mean[p]);
        }
        let std = centered
            .column_iter()
            .map(|c| (c.norm_squared() / n_samples as f64).sqrt())
            .collect();
        Ok(ActivationStats { mean, std, centered })
    }

    pub fn covariance(&self, i: usize, j: usize) -> f64 {
        self.centered.column(i).dot(&self.centered.column(j)) / self.centered.nrows() as f64
    }

    /// Pearson ρ(a_i, a_j); `None` when either neuron has zero variance.
    pub fn correlation(&self, i: usize, j: usize) -> Option<f64> {
        let d = self.std[i] * self.std[j];
        (d > 0.0).then(|| (self.covariance(i, j) / d).clamp(-1.0, 1.0))
    }
}

/// φ_ij = (1 − |cos(W_i, W_j)|)·ρ(a_i, a_j) with `W_i` the i-th column of `W_down`.
///
/// Neurons with a zero weight column or constant activation get zero
/// affinity to everyone; they are reported once at warn level.
pub fn oca_affinity(tensors: &LayerTensors) -> Result<AffinityMatrix> {
    oca_from_parts(&tensors.w_down, &tensors.activations)
}

/// [`oca_affinity`] over explicit `W_down` (`d_model × n`) and activations (`N × n`).
pub fn oca_from_parts(w_down: &DMatrix<f64>, activations: &DMatrix<f64>) -> Result<AffinityMatrix> {
    let n = w_down.ncols();
    if activations.ncols() != n {
        return Err(domain(format!(
            "W_down has {n} columns but activations have {}",
            activations.ncols()
        )));
    }
    let stats = ActivationStats::new(activations)?;
    let norms: Vec<f64> = w_down.column_iter().map(|c| c.norm()).collect();
    let degenerate: Vec<usize> = (0..n)
        .filter(|&p| !(norms[p] > 0.0) || !(stats.std[p] > 0.0))
        .collect();
    if !degenerate.is_empty() {
        log::warn!(
            "{} neurons have a zero weight column or constant activation; their OCA scores are 0: {:?}",
            degenerate.len(),
            degenerate
        );
    }

    // Unit columns, so cos and ρ both come out of one Gram product each.
    let mut w = w_down.clone();
    let mut z = stats.centered.clone();
    let scale = (activations.nrows() as f64).sqrt();
    for p in 0..n {
        let wn = if norms[p] > 0.0 { 1.0 / norms[p] } else { 0.0 };
        w.column_mut(p).scale_mut(wn);
        let zs = if stats.std[p] > 0.0 {
            1.0 / (stats.std[p] * scale)
        } else {
            0.0
        };
        z.column_mut(p).scale_mut(zs);
    }
    let cos = w.tr_mul(&w);
    let rho = z.tr_mul(&z);
    let mut live = vec![true; n];
    for &p in &degenerate {
        live[p] = false;
    }
    let mut values = vec![0.0; n * n];
    values.par_chunks_mut(n.max(1)).enumerate().for_each(|(i, row)| {
        for (j, v) in row.iter_mut().enumerate() {
            if i != j && live[i] && live[j] {
                let c = cos[(i, j)].abs().min(1.0);
                let r = rho[(i, j)].clamp(-1.0, 1.0);
                *v = (1.0 - c) * r;
            }
        }
    });
    // The Gram products are symmetric up to summation order; mirror the upper triangle.
    for i in 0..n {
        for j in 0..i {
            values[i * n + j] = values[j * n + i];
        }
    }
    AffinityMatrix::new(n, values)
}

/// Which pairs a PAS computation evaluates.
#[derive(Clone, Copy, Debug, Default)]
pub enum PairSelection<'a> {
    /// Every unordered pair.
    #[default]
    All,
    /// Pairs where either endpoint ranks the other among its `q` largest
    /// `|reference|` entries; all other pairs score 0.
    TopQ { reference: &'a AffinityMatrix, q: usize },
}

/// Options shared by both PAS estimators.
#[derive(Clone, Copy, Debug, Default)]
pub struct PasOptions<'a> {
    pub pairs: PairSelection<'a>,
    /// Refuse to evaluate more than this many pairs.
    pub pairs_budget: Option<u64>,
}

fn selected_pairs(pool: &[NeuronId], opts: &PasOptions) -> Result<Vec<(usize, usize)>> {
    let n = pool.len();
    if n < 2 {
        return Err(domain(format!("pool must hold at least 2 neurons, got {n}")));
    }
    let pairs: Vec<(usize, usize)> = match opts.pairs {
        PairSelection::All => (0..n).flat_map(|p| (p + 1..n).map(move |q| (p, q))).collect(),
        PairSelection::TopQ { reference, q } => {
            if let Some(i) = pool.iter().find(|i| i.index() >= reference.n()) {
                return Err(domain(format!(
                    "neuron {i} outside the reference affinity matrix"
                )));
            }
            let mut keep = vec![false; n * n];
            for p in 0..n {
                let mut order: Vec<usize> = (0..n).filter(|&o| o != p).collect();
                order.sort_by(|&a, &b| {
                    let fa = reference.get(pool[p].index(), pool[a].index()).abs();
                    let fb = reference.get(pool[p].index(), pool[b].index()).abs();
                    fb.total_cmp(&fa).then(a.cmp(&b))
                });
                for &o in order.iter().take(q) {
                    keep[p.min(o) * n + p.max(o)] = true;
                }
            }
            (0..n)
                .flat_map(|p| (p + 1..n).map(move |q| (p, q)))
                .filter(|&(p, q)| keep[p * n + q])
                .collect()
        }
    };
    if let Some(budget) = opts.pairs_budget {
        if pairs.len() as u64 > budget {
            return Err(Error::Budget {
                required: pairs.len() as u128,
                budget,
            });
        }
    }
    Ok(pairs)
}

fn assemble(n: usize, pairs: &[(usize, usize)], values: Vec<f64>) -> Result<AffinityMatrix> {
    let mut m = vec![0.0; n * n];
    for (&(p, q), v) in pairs.iter().zip(values) {
        m[p * n + q] = v;
        m[q * n + p] = v;
    }
    AffinityMatrix::new(n, m)
}

/// φ_ij = −mean over `xs` of `ℓ_{−{i,j}} − ℓ_{−i} − ℓ_{−j} + ℓ`.
pub fn pas_affinity_exact(
    oracle: &dyn LogitOracle,
    pool: &[NeuronId],
    xs: &[usize],
    opts: &PasOptions,
) -> Result<AffinityMatrix> {
    let pairs = selected_pairs(pool, opts)?;
    let table = AblationTable::build(oracle, pool, xs)?;
    let values = pairs
        .par_iter()
        .map(|&(p, q)| table.pas_pair(oracle, p, q))
        .collect::<Result<Vec<_>>>()?;
    assemble(pool.len(), &pairs, values)
}

/// φ_ij = −(∂²ℓ/∂a_i∂a_j)·mean(a_i a_j), the curvature averaged over `xs`.
pub fn pas_affinity_grad(
    oracle: &dyn CurvatureOracle,
    pool: &[NeuronId],
    xs: &[usize],
    opts: &PasOptions,
) -> Result<AffinityMatrix> {
    if xs.is_empty() {
        return Err(domain("sample set must be non-empty"));
    }
    let pairs = selected_pairs(pool, opts)?;
    let acts: Vec<Vec<f64>> = pool
        .iter()
        .map(|&i| {
            xs.iter()
                .map(|&x| oracle.activation(x, i))
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<_>>()?;
    let len = xs.len() as f64;
    let values = pairs
        .par_iter()
        .map(|&(p, q)| {
            let (i, j) = (pool[p], pool[q]);
            let mut curv = 0.0;
            for &x in xs {
                curv += oracle.mixed_partial(x, i, j)?;
            }
            curv /= len;
            let co: f64 = acts[p].iter().zip(&acts[q]).map(|(a, b)| a * b).sum::<f64>() / len;
            let v = -curv * co;
            if !v.is_finite() {
                return Err(Error::Numeric(format!(
                    "non-finite curvature for pair ({i}, {j})"
                )));
            }
            Ok(v)
        })
        .collect::<Result<Vec<_>>>()?;
    assemble(pool.len(), &pairs, values)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ablation::psi_pair;
    use crate::synth::{analytic_psi, random_quadratic, QuadraticOracle};
    use nalgebra::DVector;

    fn pool(n: usize) -> Vec<NeuronId> {
        (0..n).map(NeuronId::from).collect()
    }

    #[test]
    fn oca_parallel_columns_score_zero() {
        let w = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 1.0, 2.0]);
        let a = DMatrix::from_row_slice(3, 2, &[1.0, 1.0, 2.0, 2.0, 3.0, 3.0]);
        let phi = oca_from_parts(&w, &a).unwrap();
        assert!(phi.get(0, 1).abs() < 1e-12);
    }

    #[test]
    fn oca_orthogonal_linear_pair_scores_one() {
        let w = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 1.0]);
        let a = DMatrix::from_row_slice(4, 2, &[1.0, 2.0, -0.5, -1.0, 3.0, 6.0, 0.25, 0.5]);
        let phi = oca_from_parts(&w, &a).unwrap();
        assert!((phi.get(0, 1) - 1.0).abs() < 1e-12);
        assert_eq!(phi.get(0, 1), phi.get(1, 0));
    }

    #[test]
    fn oca_hand_example() {
        // W_i = (1,0), W_j = (1,1)/√2, anti-correlated activations.
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let w = DMatrix::from_row_slice(2, 2, &[1.0, s, 0.0, s]);
        let a = DMatrix::from_row_slice(4, 2, &[1.0, 0.0, 0.0, 1.0, 1.0, 0.0, 0.0, 1.0]);
        let phi = oca_from_parts(&w, &a).unwrap();
        assert!((phi.get(0, 1) - -0.292_893_218_813_452_5).abs() < 1e-12);
    }

    #[test]
    fn oca_degenerate_neurons_score_zero() {
        let w = DMatrix::from_row_slice(2, 3, &[1.0, 0.0, 1.0, 0.0, 0.0, 1.0]);
        let a = DMatrix::from_row_slice(3, 3, &[1.0, 5.0, 2.0, 2.0, 5.0, 1.0, 3.0, 4.0, 0.0]);
        let phi = oca_from_parts(&w, &a).unwrap();
        // Neuron 1 has a zero weight column.
        assert_eq!(phi.get(0, 1), 0.0);
        assert_eq!(phi.get(2, 1), 0.0);
        let a = DMatrix::from_row_slice(3, 3, &[1.0, 5.0, 2.0, 2.0, 5.0, 1.0, 3.0, 5.0, 0.0]);
        let w = DMatrix::from_row_slice(2, 3, &[1.0, 0.5, 1.0, 0.0, 1.0, 1.0]);
        let phi = oca_from_parts(&w, &a).unwrap();
        // Neuron 1 now has a constant activation.
        assert_eq!(phi.get(0, 1), 0.0);
        assert!(oca_from_parts(&w, &DMatrix::zeros(1, 3)).is_err());
    }

    fn oracle(a: &[f64], rows: usize, c: &[f64], q: &[(usize, usize, f64)]) -> QuadraticOracle {
        let n = c.len();
        let mut qm = DMatrix::zeros(n, n);
        for &(i, j, v) in q {
            qm[(i, j)] = v;
            qm[(j, i)] = v;
        }
        QuadraticOracle::new(
            DMatrix::from_row_slice(rows, n, a),
            DVector::from_row_slice(c),
            qm,
        )
        .unwrap()
    }

    #[test]
    fn pas_hand_examples() {
        let opts = PasOptions::default();
        // ℓ = a₁ + a₂ (linear).
        let lin = oracle(&[1.0, 1.0], 1, &[1.0, 1.0], &[]);
        assert_eq!(
            pas_affinity_exact(&lin, &pool(2), &[0], &opts).unwrap().get(0, 1),
            0.0
        );
        assert_eq!(
            pas_affinity_grad(&lin, &pool(2), &[0], &opts).unwrap().get(0, 1),
            0.0
        );
        // ℓ = a₁a₂.
        let prod = oracle(&[1.0, 1.0], 1, &[0.0, 0.0], &[(0, 1, 0.5)]);
        assert_eq!(
            pas_affinity_exact(&prod, &pool(2), &[0], &opts)
                .unwrap()
                .get(0, 1),
            -1.0
        );
        assert_eq!(
            pas_affinity_grad(&prod, &pool(2), &[0], &opts).unwrap().get(0, 1),
            -1.0
        );
        // ℓ = a₁ + a₂ − a₁a₂.
        let mixed = oracle(&[1.0, 1.0], 1, &[1.0, 1.0], &[(0, 1, -0.5)]);
        assert_eq!(
            pas_affinity_exact(&mixed, &pool(2), &[0], &opts)
                .unwrap()
                .get(0, 1),
            1.0
        );
        // ℓ = 3a₁a₂ with a₁ = a₂ = (1, −1).
        let three = oracle(&[1.0, 1.0, -1.0, -1.0], 2, &[0.0, 0.0], &[(0, 1, 1.5)]);
        assert_eq!(
            pas_affinity_grad(&three, &pool(2), &[0, 1], &opts)
                .unwrap()
                .get(0, 1),
            -3.0
        );
    }

    #[test]
    fn pas_is_negated_psi_and_grad_matches_exact() {
        let o = random_quadratic(8, 5, 21).unwrap();
        let xs: Vec<usize> = (0..5).collect();
        let opts = PasOptions::default();
        let exact = pas_affinity_exact(&o, &pool(8), &xs, &opts).unwrap();
        let grad = pas_affinity_grad(&o, &pool(8), &xs, &opts).unwrap();
        assert!(exact.is_symmetric() && grad.is_symmetric());
        for i in 0..8 {
            assert_eq!(exact.get(i, i), 0.0);
            for j in 0..8 {
                if i == j {
                    continue;
                }
                let (ni, nj) = (NeuronId::from(i), NeuronId::from(j));
                let psi = psi_pair(&o, ni, nj, &xs).unwrap();
                let analytic = analytic_psi(&o, ni, nj, &xs).unwrap();
                assert!((exact.get(i, j) + psi).abs() <= 1e-9 * psi.abs());
                assert!((exact.get(i, j) + analytic).abs() <= 1e-9 * analytic.abs());
                assert!((grad.get(i, j) - exact.get(i, j)).abs() <= 1e-6 * exact.get(i, j).abs());
            }
        }
    }

    #[test]
    fn pas_over_sub_pool_uses_positions() {
        let o = random_quadratic(6, 3, 2).unwrap();
        let sub = [NeuronId(4), NeuronId(1)];
        let phi = pas_affinity_exact(&o, &sub, &[0, 1, 2], &PasOptions::default()).unwrap();
        let psi = analytic_psi(&o, NeuronId(4), NeuronId(1), &[0, 1, 2]).unwrap();
        assert!((phi.get(0, 1) + psi).abs() <= 1e-9 * psi.abs());
    }

    #[test]
    fn pair_filter_and_budget() {
        let o = random_quadratic(5, 2, 8).unwrap();
        let reference =
            AffinityMatrix::from_fn(5, |i, j| if i + j == 1 { 1.0 } else { 0.01 * (i + j) as f64 }).unwrap();
        let opts = PasOptions {
            pairs: PairSelection::TopQ {
                reference: &reference,
                q: 1,
            },
            pairs_budget: None,
        };
        let phi = pas_affinity_exact(&o, &pool(5), &[0, 1], &opts).unwrap();
        assert_ne!(phi.get(0, 1), 0.0);
        assert_eq!(phi.get(0, 2), 0.0);
        let capped = PasOptions {
            pairs: PairSelection::All,
            pairs_budget: Some(9),
        };
        assert!(matches!(
            pas_affinity_exact(&o, &pool(5), &[0, 1], &capped),
            Err(Error::Budget {
                required: 10,
                budget: 9
            })
        ));
    }

    #[test]
    fn replay_layer_pas_vanishes() {
        let t = crate::layer::tests::tiny_layer();
        let o =
            crate::ablation::ReplayOracle::new(&t, crate::ablation::AblationMode::ActivationZero).unwrap();
        let opts = PasOptions::default();
        let exact = pas_affinity_exact(&o, &pool(3), &[0, 1], &opts).unwrap();
        let grad = pas_affinity_grad(&o, &pool(3), &[0, 1], &opts).unwrap();
        for v in exact.values().iter().chain(grad.values()) {
            assert!(v.abs() < 1e-9, "{v}");
        }
    }
}
