use std::path::{Path, PathBuf};

use hedonic_core::ablation::{AblationMode, ReplayOracle};
use hedonic_core::affinity::{
    oca_affinity, pas_affinity_exact, pas_affinity_grad, PairSelection, PasOptions,
};
use hedonic_core::baselines::{random_partition, spherical_kmeans, ward_cosine};
use hedonic_core::container::{read_container, write_container};
use hedonic_core::eval::{
    coalition_predictivity, coalition_synergy, default_lambda_grid, feature_alignment, ood_drop, EvalSet,
    FeatureTable, MacroFeatureMatrix, Metric,
};
use hedonic_core::files::{read_partition, write_json, write_partition};
use hedonic_core::game::brute_force_core_check;
use hedonic_core::layer::{affinity_from_container, affinity_to_container};
use hedonic_core::synth::{even_sizes, generate_planted, synthetic_layer, LayerSpec};
use hedonic_core::tracking::{dynamics_csv, dynamics_table, export_flow, track_layers, Thresholds};
use hedonic_core::{AffinityMatrix, Error, LayerTensors, NeuronId, Partition, Result, TopCoverConfig};
use nalgebra::DVector;
use serde::Serialize;

use crate::{
    AffinityArgs, AffinityMethod, BaselineArgs, BaselineMethod, Command, EvalArgs, EvalTask, PartitionArgs,
    Preset, SynergyArgs, SynthArgs, TrackArgs, VerifyArgs,
};

fn domain(msg: impl Into<String>) -> Error {
    Error::Domain(msg.into())
}

pub(crate) fn run(command: Command) -> Result<()> {
    match command {
        Command::Affinity(a) => affinity(a),
        Command::Partition(a) => partition(a),
        Command::Baseline(a) => baseline(a),
        Command::Synergy(a) => synergy(a),
        Command::Track(a) => track(a),
        Command::Eval(a) => eval(a),
        Command::Synth(a) => synth(a),
        Command::Verify(a) => verify(a),
    }
}

fn load_layer(path: &Path) -> Result<LayerTensors> {
    LayerTensors::from_container(&read_container(path)?)
}

fn load_affinity(path: &Path) -> Result<AffinityMatrix> {
    affinity_from_container(&read_container(path)?)
}

fn sample_rows(tensors: &LayerTensors, limit: Option<usize>) -> Result<Vec<usize>> {
    let n = tensors.num_samples();
    match limit {
        Some(0) => Err(domain("--samples must be positive")),
        Some(s) if s > n => Err(domain(format!(
            "--samples {s} exceeds the {n} samples in the layer"
        ))),
        Some(s) => Ok((0..s).collect()),
        None => Ok((0..n).collect()),
    }
}

fn affinity(a: AffinityArgs) -> Result<()> {
    let tensors = load_layer(&a.layer)?;
    let phi = match a.method {
        AffinityMethod::Oca => oca_affinity(&tensors)?,
        AffinityMethod::PasExact | AffinityMethod::PasGrad => {
            let xs = sample_rows(&tensors, a.samples)?;
            let pool: Vec<NeuronId> = (0..tensors.d_ff()).map(NeuronId::from).collect();
            let reference = match a.top_q {
                Some(_) => Some(oca_affinity(&tensors)?),
                None => None,
            };
            let pairs = match (&reference, a.top_q) {
                (Some(r), Some(q)) => PairSelection::TopQ { reference: r, q },
                _ => PairSelection::All,
            };
            let opts = PasOptions {
                pairs,
                pairs_budget: a.pairs_budget,
            };
            let oracle = ReplayOracle::new(&tensors, a.mode)?;
            if matches!(a.method, AffinityMethod::PasExact) {
                pas_affinity_exact(&oracle, &pool, &xs, &opts)?
            } else {
                pas_affinity_grad(&oracle, &pool, &xs, &opts)?
            }
        }
    };
    write_container(&affinity_to_container(&phi)?, &a.out)
}

fn partition(a: PartitionArgs) -> Result<()> {
    let phi = load_affinity(&a.affinity)?;
    let mut cfg = match a.preset {
        Preset::Experiments => TopCoverConfig::preset_experiments(),
        Preset::Converged => TopCoverConfig::preset_converged(),
    };
    cfg.seed = a.seed;
    if let Some(v) = a.k {
        cfg.k = v;
    }
    if let Some(v) = a.kmin {
        cfg.kmin = v;
    }
    if let Some(v) = a.kmax {
        cfg.kmax = v;
    }
    if let Some(v) = a.epsilon {
        cfg.epsilon = v;
    }
    if let Some(v) = a.delta {
        cfg.delta = v;
    }
    if let Some(v) = a.retention {
        cfg.retention = v;
    }
    if let Some(c0) = a.pac_c0 {
        cfg = cfg.with_pac_budget(phi.n(), c0)?;
    }
    if let Some(v) = a.m {
        cfg.m = v;
    }
    if let Some(v) = a.omega {
        cfg.omega = v;
    }
    let p = hedonic_core::pac_top_cover(&phi, &cfg)?;
    write_partition(&p, a.layer_index, &a.out)
}

fn baseline(a: BaselineArgs) -> Result<()> {
    let (reference, layer) = read_partition(&a.reference)?;
    let k = a.k.unwrap_or(reference.len());
    let activations = || -> Result<_> {
        let path = a
            .layer
            .as_ref()
            .ok_or_else(|| domain("--layer is required for clustering baselines"))?;
        Ok(load_layer(path)?.activations)
    };
    let p = match a.method {
        BaselineMethod::Random => random_partition(reference.pool(), &reference.size_histogram(), a.seed)?,
        BaselineMethod::Kmeans => spherical_kmeans(&activations()?, k, a.seed, a.max_iter)?,
        BaselineMethod::Ward => ward_cosine(&activations()?, k)?,
    };
    write_partition(&p, layer, &a.out)
}

#[derive(Serialize)]
struct CoalitionSynergy {
    id: usize,
    size: usize,
    pair: Option<f64>,
    ratio: Option<f64>,
}

#[derive(Serialize)]
struct SynergyReport {
    layer: i64,
    mode: AblationMode,
    samples: usize,
    mean_pair: Option<f64>,
    coalitions: Vec<CoalitionSynergy>,
}

fn synergy(a: SynergyArgs) -> Result<()> {
    let (p, layer) = read_partition(&a.partition)?;
    let tensors = load_layer(&a.layer)?;
    let xs = sample_rows(&tensors, a.samples)?;
    let oracle = ReplayOracle::new(&tensors, a.mode)?;
    let mut rows = Vec::with_capacity(p.len());
    for (id, c) in p.coalitions().iter().enumerate() {
        let (pair, ratio) = if c.len() >= 2 {
            let s = coalition_synergy(c, &oracle, &xs)?;
            let ratio = match s.ratio() {
                Ok(r) => Some(r),
                Err(Error::Undefined(msg)) => {
                    log::warn!("coalition {id}: {msg}");
                    None
                }
                Err(e) => return Err(e),
            };
            (Some(s.pair()), ratio)
        } else {
            (None, None)
        };
        rows.push(CoalitionSynergy {
            id,
            size: c.len(),
            pair,
            ratio,
        });
    }
    let pairs: Vec<f64> = rows.iter().filter_map(|r| r.pair).collect();
    let report = SynergyReport {
        layer,
        mode: a.mode,
        samples: xs.len(),
        mean_pair: (!pairs.is_empty()).then(|| pairs.iter().sum::<f64>() / pairs.len() as f64),
        coalitions: rows,
    };
    write_json(&report, &a.out)
}

fn track(a: TrackArgs) -> Result<()> {
    if a.partitions.len() != a.layers.len() {
        return Err(domain(format!(
            "{} partitions but {} layers",
            a.partitions.len(),
            a.layers.len()
        )));
    }
    if a.partitions.len() < 2 {
        return Err(domain("tracking needs at least two layers"));
    }
    let th = Thresholds::new(a.alpha_hi, a.alpha_lo)?;
    let partitions = a
        .partitions
        .iter()
        .map(read_partition)
        .collect::<Result<Vec<(Partition, i64)>>>()?;
    let layers = a
        .layers
        .iter()
        .map(|p| load_layer(p))
        .collect::<Result<Vec<_>>>()?;
    let mut transitions = Vec::with_capacity(layers.len() - 1);
    for w in 0..layers.len() - 1 {
        let mut t = track_layers(
            &partitions[w].0,
            &partitions[w + 1].0,
            &layers[w],
            &layers[w + 1],
            &th,
        )?;
        t.source_layer = partitions[w].1;
        t.target_layer = partitions[w + 1].1;
        transitions.push(t);
    }
    let indexed: Vec<(i64, &Partition)> = partitions.iter().map(|(p, l)| (*l, p)).collect();
    let flow = export_flow(&transitions, &indexed)?;
    write_json(&flow, &a.flow_out)?;
    write_text(&a.dynamics_out, &dynamics_csv(&dynamics_table(&transitions))?)
}

fn write_text(path: &PathBuf, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|source| Error::Io {
        path: path.clone(),
        source,
    })
}

#[derive(Serialize)]
struct OodRow {
    id: usize,
    size: usize,
    drop: f64,
}

#[derive(Serialize)]
struct AlignmentRow {
    id: usize,
    size: usize,
    r2: f64,
    feature: String,
}

#[derive(Serialize)]
#[serde(tag = "task", rename_all = "lowercase")]
enum EvalReport {
    Ood {
        metric: Metric,
        mode: AblationMode,
        coalitions: Vec<OodRow>,
    },
    Alignment {
        coalitions: Vec<AlignmentRow>,
    },
    Predictivity {
        r2: f64,
        lambda: f64,
        train: usize,
        test: usize,
        cv_error: Vec<(f64, f64)>,
    },
}

fn eval(a: EvalArgs) -> Result<()> {
    let (p, _) = read_partition(&a.partition)?;
    let tensors = load_layer(&a.layer)?;
    let eval_set = || -> Result<EvalSet> {
        let path = a
            .eval_set
            .as_ref()
            .ok_or_else(|| domain("--eval-set is required for this task"))?;
        let set = EvalSet::from_csv(path)?;
        if let Some(r) = set.rows.iter().find(|r| r.input >= tensors.num_samples()) {
            return Err(domain(format!(
                "eval row references input {} but the layer has {} samples",
                r.input,
                tensors.num_samples()
            )));
        }
        Ok(set)
    };
    let report = match a.task {
        EvalTask::Ood => {
            let set = eval_set()?;
            let oracle = ReplayOracle::new(&tensors, a.mode)?;
            let coalitions = p
                .coalitions()
                .iter()
                .enumerate()
                .map(|(id, c)| {
                    Ok(OodRow {
                        id,
                        size: c.len(),
                        drop: ood_drop(c.members(), &oracle, a.metric, &set)?,
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            EvalReport::Ood {
                metric: a.metric,
                mode: a.mode,
                coalitions,
            }
        }
        EvalTask::Alignment => {
            let path = a
                .features
                .as_ref()
                .ok_or_else(|| domain("--features is required for alignment"))?;
            let features = FeatureTable::from_csv(path)?;
            let coalitions = p
                .coalitions()
                .iter()
                .enumerate()
                .map(|(id, c)| {
                    let (r2, feature) = feature_alignment(c, &tensors.activations, &features)?;
                    Ok(AlignmentRow {
                        id,
                        size: c.len(),
                        r2,
                        feature,
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            EvalReport::Alignment { coalitions }
        }
        EvalTask::Predictivity => {
            if !(a.test_fraction > 0.0 && a.test_fraction < 1.0) {
                return Err(domain(format!(
                    "--test-fraction must lie in (0, 1), got {}",
                    a.test_fraction
                )));
            }
            let set = eval_set()?;
            let macros = MacroFeatureMatrix::new(&p, &tensors.activations)?.values;
            let inputs = set.inputs();
            let n = inputs.len();
            let test = ((n as f64) * a.test_fraction).round() as usize;
            if test == 0 || test == n {
                return Err(domain(format!(
                    "cannot split {n} rows with test fraction {}",
                    a.test_fraction
                )));
            }
            let split = n - test;
            let labels: Vec<f64> = set.rows.iter().map(|r| r.label).collect();
            let train_a = macros.select_rows(&inputs[..split]);
            let test_a = macros.select_rows(&inputs[split..]);
            let train_y = DVector::from_column_slice(&labels[..split]);
            let test_y = DVector::from_column_slice(&labels[split..]);
            let fit = coalition_predictivity(&train_a, &train_y, &test_a, &test_y, &default_lambda_grid())?;
            EvalReport::Predictivity {
                r2: fit.r2,
                lambda: fit.model.lambda,
                train: split,
                test,
                cv_error: fit.cv_error,
            }
        }
    };
    write_json(&report, &a.out)
}

fn synth(a: SynthArgs) -> Result<()> {
    let sizes = even_sizes(a.n, a.coalitions)?;
    let (phi, planted) = generate_planted(a.n, &sizes, a.mu_in, a.mu_out, a.sigma, a.seed)?;
    write_container(&affinity_to_container(&phi)?, &a.out)?;
    let truth = a.truth.clone().unwrap_or_else(|| {
        let mut s = a.out.clone().into_os_string();
        s.push(".truth.json");
        PathBuf::from(s)
    });
    write_partition(&planted, a.layer_index, &truth)?;
    if let Some(path) = &a.layer_out {
        let layer = synthetic_layer(&LayerSpec {
            d_ff: a.n,
            d_model: a.d_model,
            samples: a.samples,
            layer_index: a.layer_index,
            planted: Some(planted),
            coupling: a.coupling,
            lora_rank: a.lora_rank,
            seed: a.seed,
        })?;
        write_container(&layer.to_container()?, path)?;
    }
    Ok(())
}

fn verify(a: VerifyArgs) -> Result<()> {
    let (p, _) = read_partition(&a.partition)?;
    let phi = load_affinity(&a.affinity)?;
    let k = match a.k {
        Some(k) => k,
        None => p
            .params
            .get("k")
            .and_then(|v| v.as_u64())
            .map_or(3, |k| k as usize),
    };
    if let Some(i) = p.pool().iter().find(|i| i.index() >= phi.n()) {
        return Err(domain(format!(
            "neuron {i} outside an affinity matrix of size {}",
            phi.n()
        )));
    }
    match brute_force_core_check(&p, &phi, k, a.max_size, a.budget)? {
        Some(c) => println!("blocking coalition: {c}"),
        None => println!("core-stable up to size {}", a.max_size),
    }
    Ok(())
}
