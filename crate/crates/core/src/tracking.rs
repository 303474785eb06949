//! Coalition dynamics between consecutive layers.
//!
//! Source channel `p` (layer ℓ) reaches target channel `q` (layer ℓ+1) through
//! the composed maps `U = W_up^{ℓ+1} W_down^{ℓ}` and `G = W_gate^{ℓ+1} W_down^{ℓ}`.
//! The interaction mass between coalitions is
//!
//! ```text
//! M(C, C') = 1/(|C||C'|) Σ_{p∈C} Σ_{q∈C'} (|U[q,p]| + |G[q,p]|) · A_p
//! ```
//!
//! with `A_p` the source layer's mean absolute activation. Coalitions are
//! paired by a maximum-weight assignment and each source is labelled from
//! its output fraction α and the target's input fraction β.

use std::collections::HashMap;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};
use crate::files::{Event, FlowFile, FlowLink, FlowNode};
use crate::game::{Coalition, Partition};
use crate::layer::LayerTensors;

/// `|U| + |G|` weighted by source activity: entry `(q, p)` is
/// `(|U[q,p]| + |G[q,p]|)·A_p`.
#[derive(Clone, Debug)]
pub struct Coupling {
    weighted: DMatrix<f64>,
}

impl Coupling {
    pub fn new(src: &LayerTensors, tgt: &LayerTensors) -> Result<Self> {
        if src.d_model() != tgt.d_model() || src.w_down.nrows() != tgt.w_up.ncols() {
            return Err(domain(format!(
                "layers disagree on d_model: source W_down has {} rows, target W_up has {} columns",
                src.w_down.nrows(),
                tgt.w_up.ncols()
            )));
        }
        let u = &tgt.w_up * &src.w_down;
        let g = &tgt.w_gate * &src.w_down;
        let mut weighted = u.abs() + g.abs();
        for (p, mut col) in weighted.column_iter_mut().enumerate() {
            col.scale_mut(src.mean_abs_act[p]);
        }
        Ok(Coupling { weighted })
    }

    pub fn source_channels(&self) -> usize {
        self.weighted.ncols()
    }

    pub fn target_channels(&self) -> usize {
        self.weighted.nrows()
    }

    fn check(&self, c: &Coalition, limit: usize, side: &str) -> Result<()> {
        match c.members().last() {
            Some(i) if i.index() >= limit => Err(domain(format!(
                "{side} coalition member {i} exceeds the layer width {limit}"
            ))),
            _ => Ok(()),
        }
    }

    /// M(C, C').
    pub fn mass(&self, c: &Coalition, c2: &Coalition) -> Result<f64> {
        self.check(c, self.source_channels(), "source")?;
        self.check(c2, self.target_channels(), "target")?;
        let mut total = 0.0;
        for p in c.iter() {
            for q in c2.iter() {
                total += self.weighted[(q.index(), p.index())];
            }
        }
        Ok(total / (c.len() * c2.len()) as f64)
    }
}

/// M(C, C') for a single pair of coalitions.
pub fn interaction_mass(
    c: &Coalition,
    c2: &Coalition,
    src: &LayerTensors,
    tgt: &LayerTensors,
) -> Result<f64> {
    Coupling::new(src, tgt)?.mass(c, c2)
}

/// Non-negative mass between every source (row) and target (column) coalition.
#[derive(Clone, Debug, PartialEq)]
pub struct MassMatrix {
    pub values: DMatrix<f64>,
}

impl MassMatrix {
    pub fn new(values: DMatrix<f64>) -> Result<Self> {
        if values.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(domain("mass entries must be finite and non-negative"));
        }
        Ok(MassMatrix { values })
    }

    pub fn from_rows(rows: &[&[f64]]) -> Result<Self> {
        let r = rows.len();
        let c = rows.first().map_or(0, |x| x.len());
        if rows.iter().any(|x| x.len() != c) {
            return Err(domain("ragged mass matrix"));
        }
        Self::new(DMatrix::from_fn(r, c, |i, j| rows[i][j]))
    }

    pub fn sources(&self) -> usize {
        self.values.nrows()
    }

    pub fn targets(&self) -> usize {
        self.values.ncols()
    }

    pub fn get(&self, s: usize, t: usize) -> f64 {
        self.values[(s, t)]
    }
}

/// Mass between all coalition pairs of two partitions.
pub fn mass_matrix(
    src_partition: &Partition,
    tgt_partition: &Partition,
    src: &LayerTensors,
    tgt: &LayerTensors,
) -> Result<MassMatrix> {
    let coupling = Coupling::new(src, tgt)?;
    let d_tgt = coupling.target_channels();
    for c in src_partition.coalitions() {
        coupling.check(c, coupling.source_channels(), "source")?;
    }
    for c in tgt_partition.coalitions() {
        coupling.check(c, d_tgt, "target")?;
    }
    // Row sums over each source coalition, then one pass per target coalition.
    let rows: Vec<Vec<f64>> = src_partition
        .coalitions()
        .par_iter()
        .map(|c| {
            let mut r = vec![0.0; d_tgt];
            for p in c.iter() {
                for (q, v) in r.iter_mut().enumerate() {
                    *v += coupling.weighted[(q, p.index())];
                }
            }
            tgt_partition
                .coalitions()
                .iter()
                .map(|c2| c2.iter().map(|q| r[q.index()]).sum::<f64>() / (c.len() * c2.len()) as f64)
                .collect()
        })
        .collect();
    let (ns, nt) = (src_partition.len(), tgt_partition.len());
    MassMatrix::new(DMatrix::from_fn(ns, nt, |s, t| rows[s][t]))
}

/// Maximum-total-weight one-to-one assignment between rows and columns.
///
/// Returns `(row, col)` pairs sorted by row. Every row is paired when there
/// are at least as many columns, and vice versa.
pub fn max_weight_assignment(w: &DMatrix<f64>) -> Vec<(usize, usize)> {
    let (r, c) = w.shape();
    if r == 0 || c == 0 {
        return Vec::new();
    }
    let transpose = r > c;
    let (rows, cols) = if transpose { (c, r) } else { (r, c) };
    let cost = |i: usize, j: usize| if transpose { -w[(j, i)] } else { -w[(i, j)] };

    // Shortest augmenting paths with potentials; rows ≤ cols, 1-based.
    let inf = f64::INFINITY;
    let mut u = vec![0.0; rows + 1];
    let mut v = vec![0.0; cols + 1];
    let mut p = vec![0usize; cols + 1];
    let mut way = vec![0usize; cols + 1];
    for i in 1..=rows {
        p[0] = i;
        let mut j0 = 0;
        let mut minv = vec![inf; cols + 1];
        let mut used = vec![false; cols + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = inf;
            let mut j1 = 0;
            for j in 1..=cols {
                if !used[j] {
                    let cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=cols {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut pairs: Vec<(usize, usize)> = (1..=cols)
        .filter(|&j| p[j] != 0)
        .map(|j| {
            if transpose {
                (j - 1, p[j] - 1)
            } else {
                (p[j] - 1, j - 1)
            }
        })
        .collect();
    pairs.sort_unstable();
    pairs
}

/// Maximum-total-mass matching of source to target coalitions.
pub fn match_coalitions(mass: &MassMatrix) -> Vec<(usize, usize)> {
    max_weight_assignment(&mass.values)
}

/// α = M[s,t] / Σ_t' M[s,t'] and β = M[s,t] / Σ_s' M[s',t]; a zero sum gives 0.
pub fn alpha_beta(mass: &MassMatrix, s: usize, t: usize) -> (f64, f64) {
    let m = mass.get(s, t);
    let row: f64 = mass.values.row(s).sum();
    let col: f64 = mass.values.column(t).sum();
    let ratio = |den: f64| if den > 0.0 { (m / den).clamp(0.0, 1.0) } else { 0.0 };
    (ratio(row), ratio(col))
}

/// Classification thresholds, `0 ≤ α_lo < α_hi ≤ 1`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Thresholds {
    pub alpha_hi: f64,
    pub alpha_lo: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Thresholds {
            alpha_hi: 0.7,
            alpha_lo: 0.1,
        }
    }
}

impl Thresholds {
    pub fn new(alpha_hi: f64, alpha_lo: f64) -> Result<Self> {
        if !(0.0 <= alpha_lo && alpha_lo < alpha_hi && alpha_hi <= 1.0) {
            return Err(domain(format!(
                "thresholds need 0 ≤ α_lo < α_hi ≤ 1, got α_hi={alpha_hi}, α_lo={alpha_lo}"
            )));
        }
        Ok(Thresholds { alpha_hi, alpha_lo })
    }
}

/// Persist when both fractions are high, Split when only β is, Merge when
/// only α is, Vanish otherwise.
pub fn classify_transition(alpha: f64, beta: f64, th: &Thresholds) -> Event {
    match (alpha >= th.alpha_hi, beta >= th.alpha_hi) {
        (true, true) => Event::Persist,
        (false, true) => Event::Split,
        (true, false) => Event::Merge,
        (false, false) => Event::Vanish,
    }
}

/// Outcome for one source coalition.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TransitionRecord {
    pub source: usize,
    pub target: Option<usize>,
    pub mass: f64,
    pub alpha: f64,
    pub beta: f64,
    pub event: Event,
}

/// All transitions from one layer to the next.
#[derive(Clone, Debug)]
pub struct LayerTransition {
    pub source_layer: i64,
    pub target_layer: i64,
    pub sources: usize,
    pub targets: usize,
    pub mass: MassMatrix,
    /// One record per source coalition, in source order.
    pub records: Vec<TransitionRecord>,
}

/// Matches and labels every source coalition.
///
/// Links where both α and β fall below `α_lo` are removed before matching;
/// a source left without a positive-mass partner is recorded as Vanish with
/// no target.
pub fn classify_layer(
    mass: &MassMatrix,
    th: &Thresholds,
    source_layer: i64,
    target_layer: i64,
) -> LayerTransition {
    let (ns, nt) = (mass.sources(), mass.targets());
    let mut pruned = mass.values.clone();
    for s in 0..ns {
        for t in 0..nt {
            let (a, b) = alpha_beta(mass, s, t);
            if a < th.alpha_lo && b < th.alpha_lo {
                pruned[(s, t)] = 0.0;
            }
        }
    }
    let mut partner = vec![None; ns];
    for (s, t) in max_weight_assignment(&pruned) {
        if pruned[(s, t)] > 0.0 {
            partner[s] = Some(t);
        }
    }
    let records = (0..ns)
        .map(|s| match partner[s] {
            Some(t) => {
                let (alpha, beta) = alpha_beta(mass, s, t);
                TransitionRecord {
                    source: s,
                    target: Some(t),
                    mass: mass.get(s, t),
                    alpha,
                    beta,
                    event: classify_transition(alpha, beta, th),
                }
            }
            None => TransitionRecord {
                source: s,
                target: None,
                mass: 0.0,
                alpha: 0.0,
                beta: 0.0,
                event: Event::Vanish,
            },
        })
        .collect();
    LayerTransition {
        source_layer,
        target_layer,
        sources: ns,
        targets: nt,
        mass: mass.clone(),
        records,
    }
}

/// Mass matrix, matching and classification for one layer pair.
pub fn track_layers(
    src_partition: &Partition,
    tgt_partition: &Partition,
    src: &LayerTensors,
    tgt: &LayerTensors,
    th: &Thresholds,
) -> Result<LayerTransition> {
    let mass = mass_matrix(src_partition, tgt_partition, src, tgt)?;
    Ok(classify_layer(&mass, th, src.layer_index, tgt.layer_index))
}

/// Event percentages for one layer pair; `None` when the denominator is 0.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DynamicsRow {
    pub source_layer: i64,
    pub target_layer: i64,
    pub sources: usize,
    pub targets: usize,
    pub persist: Option<f64>,
    pub split: Option<f64>,
    /// Relative to the target-layer coalition count.
    pub merge: Option<f64>,
    pub vanish: Option<f64>,
}

pub fn dynamics_table(transitions: &[LayerTransition]) -> Vec<DynamicsRow> {
    transitions
        .iter()
        .map(|tr| {
            let count = |e: Event| tr.records.iter().filter(|r| r.event == e).count();
            let pct = |k: usize, den: usize| (den > 0).then(|| 100.0 * k as f64 / den as f64);
            DynamicsRow {
                source_layer: tr.source_layer,
                target_layer: tr.target_layer,
                sources: tr.sources,
                targets: tr.targets,
                persist: pct(count(Event::Persist), tr.sources),
                split: pct(count(Event::Split), tr.sources),
                merge: pct(count(Event::Merge), tr.targets),
                vanish: pct(count(Event::Vanish), tr.sources),
            }
        })
        .collect()
}

/// CSV with header; undefined percentages are empty cells.
pub fn dynamics_csv(rows: &[DynamicsRow]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let io = |e: csv::Error| domain(format!("writing dynamics table: {e}"));
    w.write_record([
        "source_layer",
        "target_layer",
        "sources",
        "targets",
        "persist_pct",
        "split_pct",
        "merge_pct",
        "vanish_pct",
    ])
    .map_err(io)?;
    let cell = |v: Option<f64>| v.map(|x| format!("{x:.4}")).unwrap_or_default();
    for r in rows {
        w.write_record([
            r.source_layer.to_string(),
            r.target_layer.to_string(),
            r.sources.to_string(),
            r.targets.to_string(),
            cell(r.persist),
            cell(r.split),
            cell(r.merge),
            cell(r.vanish),
        ])
        .map_err(io)?;
    }
    let bytes = w
        .into_inner()
        .map_err(|e| domain(format!("writing dynamics table: {e}")))?;
    Ok(String::from_utf8(bytes).expect("csv output is UTF-8"))
}

/// Nodes for every coalition of every layer, links for matched records.
pub fn export_flow(transitions: &[LayerTransition], partitions: &[(i64, &Partition)]) -> Result<FlowFile> {
    let mut flow = FlowFile::default();
    let mut index = HashMap::new();
    for &(layer, p) in partitions {
        for (id, c) in p.coalitions().iter().enumerate() {
            index.insert((layer, id), flow.nodes.len());
            flow.nodes.push(FlowNode {
                layer,
                coalition_id: id,
                size: c.len(),
            });
        }
    }
    let node = |layer: i64, id: usize| {
        index
            .get(&(layer, id))
            .copied()
            .ok_or_else(|| domain(format!("no coalition {id} in layer {layer}")))
    };
    for tr in transitions {
        for r in &tr.records {
            if let Some(t) = r.target {
                flow.links.push(FlowLink {
                    source: node(tr.source_layer, r.source)?,
                    target: node(tr.target_layer, t)?,
                    mass: r.mass,
                    alpha: r.alpha,
                    beta: r.beta,
                    event: r.event,
                });
            }
        }
    }
    flow.validate()?;
    Ok(flow)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::game::PartitionMethod;
    use crate::layer::tests::tiny_layer;
    use nalgebra::DVector;
    use rand::Rng;

    fn c(ids: &[usize]) -> Coalition {
        Coalition::from_indices(ids).unwrap()
    }

    fn one_by_one(up: f64, gate: f64, a: f64) -> (LayerTensors, LayerTensors) {
        let mut src = tiny_layer();
        src.w_down = DMatrix::from_element(1, 1, 1.0);
        src.w_up = DMatrix::from_element(1, 1, 1.0);
        src.w_gate = DMatrix::from_element(1, 1, 1.0);
        src.pre_lora = None;
        src.head_w = DVector::from_element(1, 1.0);
        src.hidden = DMatrix::from_element(1, 1, 1.0);
        src.activations = DMatrix::from_element(1, 1, a);
        src.mean_abs_act = DVector::from_element(1, a);
        let mut tgt = src.clone();
        tgt.w_up = DMatrix::from_element(1, 1, up);
        tgt.w_gate = DMatrix::from_element(1, 1, gate);
        (src, tgt)
    }

    #[test]
    fn mass_hand_example() {
        let (src, tgt) = one_by_one(0.5, 0.3, 2.0);
        let m = interaction_mass(&c(&[0]), &c(&[0]), &src, &tgt).unwrap();
        assert!((m - 1.6).abs() < 1e-15);
        let (src, tgt) = one_by_one(0.5, 0.3, 0.0);
        assert_eq!(interaction_mass(&c(&[0]), &c(&[0]), &src, &tgt).unwrap(), 0.0);
    }

    #[test]
    fn mass_is_size_normalised() {
        let src = tiny_layer();
        let mut tgt = tiny_layer();
        // Duplicate target channel 0 as channel 3.
        tgt.w_up = tgt.w_up.clone().insert_row(3, 0.0);
        tgt.w_gate = tgt.w_gate.clone().insert_row(3, 0.0);
        let r0 = tgt.w_up.row(0).into_owned();
        tgt.w_up.set_row(3, &r0);
        let g0 = tgt.w_gate.row(0).into_owned();
        tgt.w_gate.set_row(3, &g0);
        let a = interaction_mass(&c(&[0, 2]), &c(&[0]), &src, &tgt).unwrap();
        let b = interaction_mass(&c(&[0, 2]), &c(&[0, 3]), &src, &tgt).unwrap();
        assert!((a - b).abs() < 1e-12);
    }

    #[test]
    fn mass_matrix_agrees_with_pairwise_mass() {
        let src = tiny_layer();
        let tgt = tiny_layer();
        let ps = Partition::new(vec![c(&[0, 2]), c(&[1])], PartitionMethod::Random, 0).unwrap();
        let pt = Partition::new(vec![c(&[1, 2]), c(&[0])], PartitionMethod::Random, 0).unwrap();
        let m = mass_matrix(&ps, &pt, &src, &tgt).unwrap();
        for (s, cs) in ps.coalitions().iter().enumerate() {
            for (t, ct) in pt.coalitions().iter().enumerate() {
                let direct = interaction_mass(cs, ct, &src, &tgt).unwrap();
                assert!((m.get(s, t) - direct).abs() < 1e-12);
            }
        }
        let mut narrow = tiny_layer();
        narrow.w_up = DMatrix::zeros(3, 3);
        assert!(Coupling::new(&src, &narrow).is_err());
    }

    fn total(w: &DMatrix<f64>, pairs: &[(usize, usize)]) -> f64 {
        pairs.iter().map(|&(i, j)| w[(i, j)]).sum()
    }

    #[test]
    fn assignment_examples() {
        let m = MassMatrix::from_rows(&[&[1.0, 0.0], &[0.0, 1.0]]).unwrap();
        assert_eq!(match_coalitions(&m), vec![(0, 0), (1, 1)]);
        let m = MassMatrix::from_rows(&[&[2.0, 1.0], &[1.0, 2.0]]).unwrap();
        assert_eq!(match_coalitions(&m), vec![(0, 0), (1, 1)]);
        assert_eq!(total(&m.values, &match_coalitions(&m)), 4.0);
        let m = MassMatrix::from_rows(&[&[0.0, 5.0], &[4.0, 0.0]]).unwrap();
        assert_eq!(match_coalitions(&m), vec![(0, 1), (1, 0)]);
        assert_eq!(total(&m.values, &match_coalitions(&m)), 9.0);
    }

    /// Best total over all injective row→column maps (or column→row when wide).
    pub(crate) fn brute_force_best(w: &DMatrix<f64>) -> f64 {
        fn go(w: &DMatrix<f64>, i: usize, used: &mut Vec<bool>, acc: f64, best: &mut f64) {
            if i == w.nrows() {
                *best = best.max(acc);
                return;
            }
            for j in 0..w.ncols() {
                if !used[j] {
                    used[j] = true;
                    go(w, i + 1, used, acc + w[(i, j)], best);
                    used[j] = false;
                }
            }
        }
        let w = if w.nrows() > w.ncols() {
            w.transpose()
        } else {
            w.clone()
        };
        let mut best = f64::NEG_INFINITY;
        go(&w, 0, &mut vec![false; w.ncols()], 0.0, &mut best);
        best
    }

    #[test]
    fn assignment_matches_brute_force_on_rectangles() {
        let mut rng = crate::rng::stream_rng(5, 0);
        for _ in 0..60 {
            let r = rng.random_range(1..=6);
            let cdim = rng.random_range(1..=6);
            let w = DMatrix::from_fn(r, cdim, |_, _| rng.random_range(0..10) as f64);
            let pairs = max_weight_assignment(&w);
            assert_eq!(pairs.len(), r.min(cdim));
            assert_eq!(total(&w, &pairs), brute_force_best(&w), "{w}");
        }
    }

    #[test]
    fn alpha_beta_examples() {
        let m = MassMatrix::from_rows(&[&[3.0, 1.0], &[1.0, 0.0], &[0.0, 0.0]]).unwrap();
        assert_eq!(alpha_beta(&m, 0, 0), (0.75, 0.75));
        assert_eq!(alpha_beta(&m, 2, 0).0, 0.0);
    }

    #[test]
    fn classification_examples() {
        let th = Thresholds::default();
        assert_eq!(classify_transition(0.8, 0.9, &th), Event::Persist);
        assert_eq!(classify_transition(0.05, 0.8, &th), Event::Split);
        assert_eq!(classify_transition(0.05, 0.04, &th), Event::Vanish);
        assert_eq!(classify_transition(0.9, 0.2, &th), Event::Merge);
        assert!(Thresholds::new(0.5, 0.5).is_err());
    }

    #[test]
    fn unmatched_and_pruned_sources_vanish() {
        // Three sources, one target: two sources cannot be matched.
        let m = MassMatrix::from_rows(&[&[5.0], &[1.0], &[0.01]]).unwrap();
        let tr = classify_layer(&m, &Thresholds::default(), 0, 1);
        assert_eq!(tr.records[0].target, Some(0));
        assert_eq!(tr.records[0].event, Event::Persist);
        assert_eq!(tr.records[1].target, None);
        assert_eq!(tr.records[1].event, Event::Vanish);
        assert_eq!(tr.records[2].event, Event::Vanish);
    }

    #[test]
    fn dynamics_percentages() {
        let th = Thresholds::default();
        let mut records = Vec::new();
        for (s, e) in [Event::Persist, Event::Split, Event::Split, Event::Split]
            .into_iter()
            .chain(std::iter::repeat_n(Event::Vanish, 6))
            .enumerate()
        {
            records.push(TransitionRecord {
                source: s,
                target: None,
                mass: 0.0,
                alpha: 0.0,
                beta: 0.0,
                event: e,
            });
        }
        let tr = LayerTransition {
            source_layer: 7,
            target_layer: 8,
            sources: 10,
            targets: 4,
            mass: MassMatrix::new(DMatrix::zeros(10, 4)).unwrap(),
            records,
        };
        let empty = classify_layer(&MassMatrix::new(DMatrix::zeros(0, 3)).unwrap(), &th, 8, 9);
        let rows = dynamics_table(&[tr, empty]);
        assert_eq!(rows[0].persist, Some(10.0));
        assert_eq!(rows[0].split, Some(30.0));
        assert_eq!(rows[0].vanish, Some(60.0));
        assert_eq!(rows[0].merge, Some(0.0));
        assert_eq!(rows[1].persist, None);
        let csv = dynamics_csv(&rows).unwrap();
        assert_eq!(csv.lines().count(), 3);
        assert!(csv.lines().nth(2).unwrap().starts_with("8,9,0,3,,,0.0000,"));
    }

    #[test]
    fn flow_export() {
        let p0 = Partition::new(vec![c(&[0, 1])], PartitionMethod::HedonicOca, 0).unwrap();
        let p1 = Partition::new(vec![c(&[0, 1, 2])], PartitionMethod::HedonicOca, 0).unwrap();
        let m = MassMatrix::from_rows(&[&[2.0]]).unwrap();
        let tr = classify_layer(&m, &Thresholds::default(), 3, 4);
        let flow = export_flow(&[tr], &[(3, &p0), (4, &p1)]).unwrap();
        assert_eq!(flow.nodes.len(), 2);
        assert_eq!(flow.links.len(), 1);
        assert_eq!(flow.links[0].event, Event::Persist);
        let text = crate::files::to_json_string(&flow);
        assert_eq!(serde_json::from_str::<FlowFile>(&text).unwrap(), flow);
        let empty = export_flow(&[], &[]).unwrap();
        assert!(empty.nodes.is_empty() && empty.links.is_empty());
    }
}
