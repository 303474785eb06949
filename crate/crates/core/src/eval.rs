//! Coalition synergy metrics and extrinsic evaluation.

use std::collections::BTreeMap;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::ablation::{AblationTable, LogitOracle};
use crate::error::{domain, Error, Result};
use crate::game::{Coalition, Partition};

/// ψ sums over one coalition.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Synergy {
    pub size: usize,
    /// Σ_{i≠j} ψ(i,j) over ordered pairs.
    pub pair_sum: f64,
    /// Σ_i ψ(i).
    pub single_sum: f64,
    /// Σ_i |ψ(i)|, the scale against which `single_sum` is judged zero.
    pub single_abs: f64,
}

impl Synergy {
    /// Pair(C) = Σ_{i≠j} ψ(i,j) / (|C|(|C|−1)).
    pub fn pair(&self) -> f64 {
        self.pair_sum / (self.size * (self.size - 1)) as f64
    }

    /// Ratio(C) = Σ_{i≠j} ψ(i,j) / Σ_i ψ(i).
    pub fn ratio(&self) -> Result<f64> {
        if !(self.single_sum.abs() > 1e-12 * self.single_abs) {
            return Err(Error::Undefined(format!(
                "ratio synergy: marginal effects sum to {} (zero denominator)",
                self.single_sum
            )));
        }
        Ok(self.pair_sum / self.single_sum)
    }
}

/// ψ(i) and ψ(i,j) sums for `c` under one oracle and sample set.
pub fn coalition_synergy(c: &Coalition, oracle: &dyn LogitOracle, xs: &[usize]) -> Result<Synergy> {
    if c.len() < 2 {
        return Err(domain(format!(
            "synergy needs at least 2 members, got {}",
            c.len()
        )));
    }
    let table = AblationTable::build(oracle, c.members(), xs)?;
    let n = c.len();
    let mut unordered = vec![0.0; n * n];
    for p in 0..n {
        for q in p + 1..n {
            let v = table.psi_pair(oracle, p, q)?;
            unordered[p * n + q] = v;
            unordered[q * n + p] = v;
        }
    }
    // Ordered pairs, row-major.
    let mut pair_sum = 0.0;
    for p in 0..n {
        for q in 0..n {
            if p != q {
                pair_sum += unordered[p * n + q];
            }
        }
    }
    let singles: Vec<f64> = (0..n).map(|p| table.psi_single(p)).collect();
    Ok(Synergy {
        size: n,
        pair_sum,
        single_sum: singles.iter().sum(),
        single_abs: singles.iter().map(|v| v.abs()).sum(),
    })
}

pub fn pair_synergy(c: &Coalition, oracle: &dyn LogitOracle, xs: &[usize]) -> Result<f64> {
    Ok(coalition_synergy(c, oracle, xs)?.pair())
}

pub fn ratio_synergy(c: &Coalition, oracle: &dyn LogitOracle, xs: &[usize]) -> Result<f64> {
    coalition_synergy(c, oracle, xs)?.ratio()
}

/// Mean Pair(C) over the coalitions of `p` with at least two members.
pub fn mean_pair_synergy(p: &Partition, oracle: &dyn LogitOracle, xs: &[usize]) -> Result<f64> {
    let eligible: Vec<&Coalition> = p.coalitions().iter().filter(|c| c.len() >= 2).collect();
    if eligible.is_empty() {
        return Err(Error::Undefined("no coalition has two or more members".into()));
    }
    let mut total = 0.0;
    for c in &eligible {
        total += pair_synergy(c, oracle, xs)?;
    }
    Ok(total / eligible.len() as f64)
}

/// Graded relevance labels of one query's documents, in ranked order.
#[derive(Clone, Debug, PartialEq)]
pub struct RankedList {
    pub query: String,
    pub rels: Vec<u32>,
}

fn dcg(rels: &[u32], k: usize) -> f64 {
    rels.iter()
        .take(k)
        .enumerate()
        .map(|(i, &r)| (2f64.powi(r as i32) - 1.0) / ((i + 2) as f64).log2())
        .sum()
}

/// Mean NDCG@k over queries with at least one positive label.
pub fn ndcg_at_k(lists: &[RankedList], k: usize) -> Result<f64> {
    let mut total = 0.0;
    let mut counted = 0usize;
    for list in lists {
        let mut ideal = list.rels.clone();
        ideal.sort_unstable_by(|a, b| b.cmp(a));
        let idcg = dcg(&ideal, k);
        if idcg == 0.0 {
            log::warn!("query {:?} has no relevant documents; skipped", list.query);
            continue;
        }
        total += dcg(&list.rels, k) / idcg;
        counted += 1;
    }
    if counted == 0 {
        return Err(Error::Undefined("no query has a relevant document".into()));
    }
    Ok(total / counted as f64)
}

/// Ranks each query's documents by descending score, ties by input order.
pub fn rank_by_scores(queries: &[String], scores: &[f64], rels: &[u32]) -> Vec<RankedList> {
    let mut groups: BTreeMap<&str, Vec<(f64, usize)>> = BTreeMap::new();
    for (i, q) in queries.iter().enumerate() {
        groups.entry(q).or_default().push((scores[i], i));
    }
    groups
        .into_iter()
        .map(|(q, mut docs)| {
            docs.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
            RankedList {
                query: q.to_string(),
                rels: docs.iter().map(|&(_, i)| rels[i]).collect(),
            }
        })
        .collect()
}

/// Task metric over logits.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Metric {
    /// −mean (ℓ(x) − y)².
    NegMse,
    /// Mean NDCG@10 over queries.
    Ndcg10,
}

impl std::str::FromStr for Metric {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "neg-mse" | "mse" => Ok(Metric::NegMse),
            "ndcg10" | "ndcg@10" => Ok(Metric::Ndcg10),
            other => Err(domain(format!("unknown metric {other:?}"))),
        }
    }
}

/// One labelled evaluation row per oracle input.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalRow {
    /// Row of the oracle's sample set.
    pub input: usize,
    /// Query id; required for ranking metrics.
    #[serde(default)]
    pub query: Option<String>,
    pub label: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct EvalSet {
    pub rows: Vec<EvalRow>,
}

impl EvalSet {
    /// CSV with header `input,query,label`; `query` may be empty.
    pub fn from_csv(path: impl AsRef<Path>) -> Result<Self> {
        let rows = read_csv_rows(path.as_ref())?;
        Ok(EvalSet { rows })
    }

    pub fn inputs(&self) -> Vec<usize> {
        self.rows.iter().map(|r| r.input).collect()
    }

    /// Evaluates `metric` on the given scores (aligned with `rows`).
    pub fn score(&self, metric: Metric, scores: &[f64]) -> Result<f64> {
        if self.rows.is_empty() {
            return Err(domain("evaluation set is empty"));
        }
        match metric {
            Metric::NegMse => {
                let sse: f64 = self
                    .rows
                    .iter()
                    .zip(scores)
                    .map(|(r, s)| (s - r.label).powi(2))
                    .sum();
                Ok(-sse / self.rows.len() as f64)
            }
            Metric::Ndcg10 => {
                let mut queries = Vec::with_capacity(self.rows.len());
                let mut rels = Vec::with_capacity(self.rows.len());
                for r in &self.rows {
                    let q = r
                        .query
                        .clone()
                        .ok_or_else(|| domain(format!("NDCG needs a query id for input {}", r.input)))?;
                    if !(r.label >= 0.0 && r.label.fract() == 0.0 && r.label <= 30.0) {
                        return Err(domain(format!(
                            "NDCG needs non-negative integer grades, got {} for input {}",
                            r.label, r.input
                        )));
                    }
                    queries.push(q);
                    rels.push(r.label as u32);
                }
                ndcg_at_k(&rank_by_scores(&queries, scores, &rels), 10)
            }
        }
    }
}

fn read_csv_rows<T: serde::de::DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| csv_error(path, e))?;
    reader
        .deserialize()
        .collect::<std::result::Result<Vec<T>, _>>()
        .map_err(|e| csv_error(path, e))
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    domain(format!("{}: {e}", path.display()))
}

/// ΔM(C) = M(ℓ) − M(ℓ_{−C}) on the evaluation set.
pub fn ood_drop(
    c: &[crate::game::NeuronId],
    oracle: &dyn LogitOracle,
    metric: Metric,
    set: &EvalSet,
) -> Result<f64> {
    let base = set
        .rows
        .iter()
        .map(|r| oracle.logit(r.input, &[]))
        .collect::<Result<Vec<_>>>()?;
    let ablated = set
        .rows
        .iter()
        .map(|r| oracle.logit(r.input, c))
        .collect::<Result<Vec<_>>>()?;
    Ok(set.score(metric, &base)? - set.score(metric, &ablated)?)
}

/// Named reference features per input.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureTable {
    pub names: Vec<String>,
    /// `N × F`.
    pub values: DMatrix<f64>,
}

impl FeatureTable {
    pub fn new(names: Vec<String>, values: DMatrix<f64>) -> Result<Self> {
        if names.len() != values.ncols() {
            return Err(domain(format!(
                "{} feature names for {} columns",
                names.len(),
                values.ncols()
            )));
        }
        let mut seen = std::collections::BTreeSet::new();
        if let Some(dup) = names.iter().find(|n| !seen.insert(n.as_str())) {
            return Err(domain(format!("duplicate feature name {dup:?}")));
        }
        Ok(FeatureTable { names, values })
    }

    /// Numeric CSV with a header row of feature names.
    pub fn from_csv(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let mut reader = csv::Reader::from_path(path).map_err(|e| csv_error(path, e))?;
        let names: Vec<String> = reader
            .headers()
            .map_err(|e| csv_error(path, e))?
            .iter()
            .map(str::to_string)
            .collect();
        let mut data = Vec::new();
        let mut rows = 0;
        for rec in reader.records() {
            let rec = rec.map_err(|e| csv_error(path, e))?;
            for field in rec.iter() {
                let v: f64 = field.trim().parse().map_err(|_| {
                    domain(format!("{}: non-numeric feature value {field:?}", path.display()))
                })?;
                data.push(v);
            }
            rows += 1;
        }
        Self::new(names.clone(), DMatrix::from_row_slice(rows, names.len(), &data))
    }
}

/// Coalition mean activations per input.
#[derive(Clone, Debug, PartialEq)]
pub struct MacroFeatureMatrix {
    /// `N × |π|`.
    pub values: DMatrix<f64>,
}

impl MacroFeatureMatrix {
    pub fn new(partition: &Partition, activations: &DMatrix<f64>) -> Result<Self> {
        let n = activations.ncols();
        if let Some(i) = partition.pool().last().filter(|i| i.index() >= n) {
            return Err(domain(format!(
                "neuron {i} outside an activation matrix of width {n}"
            )));
        }
        let values = DMatrix::from_fn(activations.nrows(), partition.len(), |x, c| {
            coalition_activation(&partition.coalitions()[c], activations, x)
        });
        Ok(MacroFeatureMatrix { values })
    }
}

fn coalition_activation(c: &Coalition, activations: &DMatrix<f64>, x: usize) -> f64 {
    c.iter().map(|i| activations[(x, i.index())]).sum::<f64>() / c.len() as f64
}

fn pearson(a: &[f64], b: &[f64]) -> Option<f64> {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma) * (x - ma);
        sbb += (y - mb) * (y - mb);
    }
    (saa > 0.0 && sbb > 0.0).then(|| sab / (saa * sbb).sqrt())
}

/// max_j Corr²(a_C, f_j) and the maximising feature, ties to the first column.
/// Constant features score 0.
pub fn feature_alignment(
    c: &Coalition,
    activations: &DMatrix<f64>,
    features: &FeatureTable,
) -> Result<(f64, String)> {
    let n = activations.nrows();
    if n < 3 {
        return Err(domain(format!(
            "feature alignment needs at least 3 inputs, got {n}"
        )));
    }
    if features.values.nrows() != n {
        return Err(domain(format!(
            "{} feature rows for {n} activation rows",
            features.values.nrows()
        )));
    }
    if features.names.is_empty() {
        return Err(domain("feature table has no columns"));
    }
    if let Some(i) = c.members().last().filter(|i| i.index() >= activations.ncols()) {
        return Err(domain(format!("neuron {i} outside the activation matrix")));
    }
    let a: Vec<f64> = (0..n).map(|x| coalition_activation(c, activations, x)).collect();
    let mean = a.iter().sum::<f64>() / n as f64;
    if a.iter().all(|v| *v == mean) {
        return Err(Error::Undefined("coalition activation has zero variance".into()));
    }
    let mut best = (f64::NEG_INFINITY, 0);
    for j in 0..features.names.len() {
        let f: Vec<f64> = features.values.column(j).iter().copied().collect();
        let r2 = pearson(&a, &f).map_or(0.0, |r| (r * r).min(1.0));
        if r2 > best.0 {
            best = (r2, j);
        }
    }
    Ok((best.0, features.names[best.1].clone()))
}

/// Ridge fit with an unpenalised intercept.
#[derive(Clone, Debug, PartialEq)]
pub struct RidgeModel {
    pub weights: DVector<f64>,
    pub intercept: f64,
    pub lambda: f64,
}

impl RidgeModel {
    pub fn predict(&self, a: &DMatrix<f64>) -> DVector<f64> {
        a * &self.weights + DVector::from_element(a.nrows(), self.intercept)
    }
}

/// Solves `(AcᵀAc + λI) w = Acᵀ yc` on centred data; `None` if numerically singular.
pub fn ridge_fit(a: &DMatrix<f64>, y: &DVector<f64>, lambda: f64) -> Option<RidgeModel> {
    let n = a.nrows();
    if n == 0 || y.len() != n {
        return None;
    }
    let means: DVector<f64> = DVector::from_fn(a.ncols(), |j, _| a.column(j).mean());
    let y_mean = y.mean();
    let mut ac = a.clone();
    for (j, mut col) in ac.column_iter_mut().enumerate() {
        col.add_scalar_mut(-means[j]);
    }
    let yc = y.add_scalar(-y_mean);
    let mut gram = ac.tr_mul(&ac);
    for j in 0..gram.nrows() {
        gram[(j, j)] += lambda;
    }
    let scale = gram.diagonal().max();
    let chol = gram.cholesky()?;
    // A pivot this small relative to the largest diagonal means a numerically singular system.
    let l = chol.l_dirty();
    if (0..l.nrows()).any(|j| l[(j, j)] * l[(j, j)] <= 1e-12 * scale) {
        return None;
    }
    let weights = chol.solve(&ac.tr_mul(&yc));
    if weights.iter().any(|w| !w.is_finite()) {
        return None;
    }
    let intercept = y_mean - means.dot(&weights);
    Some(RidgeModel {
        weights,
        intercept,
        lambda,
    })
}

/// {10⁻³, 10⁻², …, 10³}.
pub fn default_lambda_grid() -> Vec<f64> {
    (-3..=3).map(|e| 10f64.powi(e)).collect()
}

pub const CV_FOLDS: usize = 5;

/// Cross-validated ridge and its held-out R².
#[derive(Clone, Debug, PartialEq)]
pub struct Predictivity {
    pub r2: f64,
    pub model: RidgeModel,
    /// Mean validation SSE per grid λ.
    pub cv_error: Vec<(f64, f64)>,
}

fn fit_or_bump(a: &DMatrix<f64>, y: &DVector<f64>, lambda: f64, grid: &[f64]) -> Result<RidgeModel> {
    if let Some(m) = ridge_fit(a, y, lambda) {
        return Ok(m);
    }
    let bump = grid
        .iter()
        .copied()
        .filter(|&l| l > lambda)
        .fold(f64::INFINITY, f64::min);
    if bump.is_finite() {
        log::warn!("ridge system singular at λ={lambda}; using λ={bump}");
        if let Some(m) = ridge_fit(a, y, bump) {
            return Ok(m);
        }
    }
    Err(Error::Numeric(format!("ridge system singular at λ={lambda}")))
}

/// R² = 1 − SSE/SST on held-out data.
pub fn r_squared(pred: &DVector<f64>, y: &DVector<f64>) -> Result<f64> {
    let mean = y.mean();
    let sst: f64 = y.iter().map(|v| (v - mean).powi(2)).sum();
    if sst == 0.0 {
        return Err(Error::Undefined("test targets have zero variance".into()));
    }
    let sse: f64 = pred.iter().zip(y.iter()).map(|(p, v)| (p - v).powi(2)).sum();
    Ok(1.0 - sse / sst)
}

/// Picks λ by 5-fold contiguous cross-validation on the training split,
/// refits on all of it and reports test R².
pub fn coalition_predictivity(
    train_a: &DMatrix<f64>,
    train_y: &DVector<f64>,
    test_a: &DMatrix<f64>,
    test_y: &DVector<f64>,
    grid: &[f64],
) -> Result<Predictivity> {
    let n = train_a.nrows();
    if train_y.len() != n || test_y.len() != test_a.nrows() || train_a.ncols() != test_a.ncols() {
        return Err(domain("train/test shapes disagree"));
    }
    if grid.is_empty() || grid.iter().any(|l| !(*l >= 0.0 && l.is_finite())) {
        return Err(domain("λ grid must be non-empty and non-negative"));
    }
    if n < CV_FOLDS {
        return Err(domain(format!("need at least {CV_FOLDS} training rows, got {n}")));
    }
    if n < train_a.ncols() {
        log::warn!("{n} training rows for {} macro-features", train_a.ncols());
    }
    let mut grid = grid.to_vec();
    grid.sort_by(f64::total_cmp);
    let folds: Vec<(usize, usize)> = (0..CV_FOLDS)
        .map(|f| (f * n / CV_FOLDS, (f + 1) * n / CV_FOLDS))
        .collect();
    let mut cv_error = Vec::with_capacity(grid.len());
    for &lambda in &grid {
        let mut sse = 0.0;
        for &(lo, hi) in &folds {
            let keep: Vec<usize> = (0..lo).chain(hi..n).collect();
            let a = train_a.select_rows(&keep);
            let y = DVector::from_iterator(keep.len(), keep.iter().map(|&i| train_y[i]));
            let model = fit_or_bump(&a, &y, lambda, &grid)?;
            let held: Vec<usize> = (lo..hi).collect();
            let pred = model.predict(&train_a.select_rows(&held));
            sse += held
                .iter()
                .zip(pred.iter())
                .map(|(&i, p)| (p - train_y[i]).powi(2))
                .sum::<f64>();
        }
        cv_error.push((lambda, sse / CV_FOLDS as f64));
    }
    let best = cv_error
        .iter()
        .min_by(|a, b| a.1.total_cmp(&b.1).then(a.0.total_cmp(&b.0)))
        .expect("grid non-empty")
        .0;
    let model = fit_or_bump(train_a, train_y, best, &grid)?;
    let r2 = r_squared(&model.predict(test_a), test_y)?;
    Ok(Predictivity { r2, model, cv_error })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::game::NeuronId;
    use crate::synth::QuadraticOracle;
    use rand_distr::{Distribution, StandardNormal};

    fn pair_oracle(q12: f64, c: [f64; 2]) -> QuadraticOracle {
        let mut q = DMatrix::zeros(2, 2);
        q[(0, 1)] = q12 / 2.0;
        q[(1, 0)] = q12 / 2.0;
        QuadraticOracle::new(DMatrix::from_element(1, 2, 1.0), DVector::from_row_slice(&c), q).unwrap()
    }

    #[test]
    fn pair_and_ratio_hand_cases() {
        let c = Coalition::from_indices(&[0, 1]).unwrap();
        // ℓ = a₁ + a₂ + 0.5 a₁a₂ at a = (1,1): ψ(1,2) = 0.5, ψ(i) = 1.5.
        let o = pair_oracle(0.5, [1.0, 1.0]);
        assert_eq!(pair_synergy(&c, &o, &[0]).unwrap(), 0.5);
        assert_eq!(ratio_synergy(&c, &o, &[0]).unwrap(), 1.0 / 3.0);
        // Additive oracle.
        let add = pair_oracle(0.0, [1.0, 2.0]);
        assert_eq!(pair_synergy(&c, &add, &[0]).unwrap(), 0.0);
        assert_eq!(ratio_synergy(&c, &add, &[0]).unwrap(), 0.0);
        // Marginals cancel: ψ(1) = 1 + 0.5, ψ(2) = −2 + 0.5.
        let cancel = pair_oracle(0.5, [1.0, -2.0]);
        assert!(matches!(
            ratio_synergy(&c, &cancel, &[0]),
            Err(Error::Undefined(_))
        ));
        assert!(pair_synergy(&Coalition::from_indices(&[0]).unwrap(), &o, &[0]).is_err());
    }

    #[test]
    fn ndcg_hand_cases() {
        let two = [RankedList {
            query: "q".into(),
            rels: vec![0, 1],
        }];
        assert!((ndcg_at_k(&two, 2).unwrap() - 0.630_929_753_571_457_4).abs() < 1e-12);
        let perfect = [RankedList {
            query: "q".into(),
            rels: vec![3, 2, 0],
        }];
        assert_eq!(ndcg_at_k(&perfect, 10).unwrap(), 1.0);
        let none = [RankedList {
            query: "z".into(),
            rels: vec![0, 0],
        }];
        assert!(ndcg_at_k(&none, 10).is_err());
        let mixed = [perfect[0].clone(), none[0].clone()];
        assert_eq!(ndcg_at_k(&mixed, 10).unwrap(), 1.0);
    }

    #[test]
    fn ood_drop_cases() {
        // ℓ = a₀ + a₁ with a = (1, 0.2) on a single input labelled 1.2.
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 0.2, 1.0, 0.2]);
        let o = QuadraticOracle::new(a, DVector::from_vec(vec![1.0, 1.0]), DMatrix::zeros(2, 2)).unwrap();
        let set = EvalSet {
            rows: vec![EvalRow {
                input: 0,
                query: None,
                label: 1.0,
            }],
        };
        assert_eq!(ood_drop(&[], &o, Metric::NegMse, &set).unwrap(), 0.0);
        // Base error (1.2−1)² = 0.04; removing channel 1 gives error 0.
        let d = ood_drop(&[NeuronId(1)], &o, Metric::NegMse, &set).unwrap();
        assert!((d - -0.04).abs() < 1e-15);
        assert!(ood_drop(&[], &o, Metric::Ndcg10, &set).is_err());
    }

    #[test]
    fn ndcg_drop_from_reordering() {
        // Two documents of one query; channel 0 carries the relevant one's lead.
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.5]);
        let o = QuadraticOracle::new(a, DVector::from_vec(vec![1.0, 1.0]), DMatrix::zeros(2, 2)).unwrap();
        let set = EvalSet {
            rows: vec![
                EvalRow {
                    input: 0,
                    query: Some("q".into()),
                    label: 1.0,
                },
                EvalRow {
                    input: 1,
                    query: Some("q".into()),
                    label: 0.0,
                },
            ],
        };
        let d = ood_drop(&[NeuronId(0)], &o, Metric::Ndcg10, &set).unwrap();
        assert!((d - (1.0 - 1.0 / 3f64.log2())).abs() < 1e-12);
    }

    #[test]
    fn feature_alignment_cases() {
        let act = DMatrix::from_row_slice(4, 2, &[1.0, 3.0, 2.0, 2.0, 0.0, 5.0, 4.0, 1.0]);
        let c = Coalition::from_indices(&[0, 1]).unwrap();
        // a_C = (2, 2, 2.5, 2.5)
        let features = FeatureTable::new(
            vec!["bm25".into(), "idf".into(), "len".into()],
            DMatrix::from_row_slice(
                4,
                3,
                &[1.0, 7.0, 4.0, 0.0, 7.0, 4.0, 3.0, 7.0, 5.0, 2.0, 7.0, 5.0],
            ),
        )
        .unwrap();
        let (r2, name) = feature_alignment(&c, &act, &features).unwrap();
        assert_eq!(name, "len");
        assert!((r2 - 1.0).abs() < 1e-12);
        let flat = DMatrix::from_element(4, 2, 1.0);
        assert!(matches!(
            feature_alignment(&c, &flat, &features),
            Err(Error::Undefined(_))
        ));
        assert!(FeatureTable::new(vec!["a".into(), "a".into()], DMatrix::zeros(1, 2)).is_err());
    }

    fn gaussian(rows: usize, cols: usize, seed: u64) -> DMatrix<f64> {
        let mut rng = crate::rng::stream_rng(seed, 0);
        DMatrix::from_fn(rows, cols, |_, _| StandardNormal.sample(&mut rng))
    }

    #[test]
    fn ridge_recovers_exact_linear_targets() {
        let a = gaussian(300, 6, 1);
        let w = DVector::from_vec(vec![1.0, -2.0, 0.5, 0.0, 3.0, -1.0]);
        let y = &a * &w + DVector::from_element(300, 0.7);
        let (tr, te) = (a.rows(0, 200).into_owned(), a.rows(200, 100).into_owned());
        let (ytr, yte) = (y.rows(0, 200).into_owned(), y.rows(200, 100).into_owned());
        let p = coalition_predictivity(&tr, &ytr, &te, &yte, &[1e-6]).unwrap();
        assert!(p.r2 >= 0.999, "{}", p.r2);
    }

    #[test]
    fn ridge_at_zero_is_least_squares() {
        let a = gaussian(50, 4, 2);
        let y = DVector::from_iterator(50, gaussian(50, 1, 3).iter().copied());
        let m = ridge_fit(&a, &y, 0.0).unwrap();
        let resid = &y - m.predict(&a);
        assert!(resid.sum().abs() < 1e-8);
        for j in 0..4 {
            assert!(a.column(j).dot(&resid).abs() < 1e-8);
        }
    }

    #[test]
    fn singular_system_bumps_lambda() {
        let mut a = gaussian(20, 2, 4);
        let col = a.column(0).into_owned();
        a.set_column(1, &col);
        let y = a.column(0) * 2.0;
        let grid = [0.0, 1e-3];
        let p = coalition_predictivity(&a, &y, &a, &y, &grid).unwrap();
        assert!(p.model.lambda > 0.0);
    }

    #[test]
    fn rank_by_scores_orders_within_queries() {
        let q: Vec<String> = ["b", "a", "b", "a"].iter().map(|s| s.to_string()).collect();
        let lists = rank_by_scores(&q, &[0.1, 0.5, 0.9, 0.5], &[1, 2, 3, 4]);
        assert_eq!(lists[0].query, "a");
        assert_eq!(lists[0].rels, vec![2, 4]);
        assert_eq!(lists[1].rels, vec![3, 1]);
    }
}
