//! One layer's dumped tensors and their HEDT entry names.

use nalgebra::{DMatrix, DVector};

use crate::container::{Entry, TensorContainer, TensorData};
use crate::error::{domain, ContainerError, Result};
use crate::game::AffinityMatrix;

pub const W_UP: &str = "w_up";
pub const W_GATE: &str = "w_gate";
pub const W_DOWN: &str = "w_down";
pub const W_UP_PRE: &str = "w_up_pre";
pub const W_GATE_PRE: &str = "w_gate_pre";
pub const W_DOWN_PRE: &str = "w_down_pre";
pub const HEAD_W: &str = "head_w";
pub const HEAD_B: &str = "head_b";
pub const HIDDEN: &str = "hidden_pre_mlp";
pub const ACTIVATIONS: &str = "activations";
pub const MEAN_ABS_ACT: &str = "mean_abs_act";
pub const LAYER_INDEX: &str = "layer_index";
pub const PHI: &str = "phi";

/// Pre-adaptation copies of the three MLP projections.
#[derive(Clone, Debug, PartialEq)]
pub struct PreLoraWeights {
    pub w_up: DMatrix<f64>,
    pub w_gate: DMatrix<f64>,
    pub w_down: DMatrix<f64>,
}

/// Everything the analysis needs from one gated-MLP layer.
///
/// Shapes: `w_up`, `w_gate` are `d_ff × d_model`; `w_down` is
/// `d_model × d_ff`; `hidden` is `N × d_model`; `activations` is `N × d_ff`.
#[derive(Clone, Debug, PartialEq)]
pub struct LayerTensors {
    pub layer_index: i64,
    pub w_up: DMatrix<f64>,
    pub w_gate: DMatrix<f64>,
    pub w_down: DMatrix<f64>,
    pub pre_lora: Option<PreLoraWeights>,
    pub head_w: DVector<f64>,
    pub head_b: f64,
    pub hidden: DMatrix<f64>,
    pub activations: DMatrix<f64>,
    pub mean_abs_act: DVector<f64>,
}

impl LayerTensors {
    pub fn d_ff(&self) -> usize {
        self.w_up.nrows()
    }

    pub fn d_model(&self) -> usize {
        self.w_up.ncols()
    }

    pub fn num_samples(&self) -> usize {
        self.hidden.nrows()
    }

    /// Checks every dimension against `d_ff`/`d_model` and `A_p ≥ 0`.
    pub fn validate(&self) -> Result<()> {
        let (d_ff, d_model) = (self.d_ff(), self.d_model());
        let check = |name: &str, m: &DMatrix<f64>, r: usize, c: usize| {
            if m.shape() != (r, c) {
                Err(domain(format!(
                    "{name} has shape {:?}, expected ({r}, {c})",
                    m.shape()
                )))
            } else {
                Ok(())
            }
        };
        check(W_GATE, &self.w_gate, d_ff, d_model)?;
        check(W_DOWN, &self.w_down, d_model, d_ff)?;
        if let Some(pre) = &self.pre_lora {
            check(W_UP_PRE, &pre.w_up, d_ff, d_model)?;
            check(W_GATE_PRE, &pre.w_gate, d_ff, d_model)?;
            check(W_DOWN_PRE, &pre.w_down, d_model, d_ff)?;
        }
        if self.head_w.len() != d_model {
            return Err(domain(format!(
                "{HEAD_W} has length {}, expected {d_model}",
                self.head_w.len()
            )));
        }
        let n = self.num_samples();
        check(HIDDEN, &self.hidden, n, d_model)?;
        check(ACTIVATIONS, &self.activations, n, d_ff)?;
        if self.mean_abs_act.len() != d_ff {
            return Err(domain(format!(
                "{MEAN_ABS_ACT} has length {}, expected {d_ff}",
                self.mean_abs_act.len()
            )));
        }
        if let Some(p) = self.mean_abs_act.iter().position(|&a| !(a >= 0.0)) {
            return Err(domain(format!("{MEAN_ABS_ACT}[{p}] is negative or NaN")));
        }
        Ok(())
    }

    /// `A_p = mean_x |a_p(x)|` recomputed from `activations`.
    pub fn recompute_mean_abs_act(&mut self) {
        let n = self.activations.nrows().max(1) as f64;
        self.mean_abs_act = DVector::from_iterator(
            self.activations.ncols(),
            self.activations
                .column_iter()
                .map(|c| c.iter().map(|v| v.abs()).sum::<f64>() / n),
        );
    }

    pub fn from_container(c: &TensorContainer) -> Result<Self> {
        let w_up = matrix(c, W_UP)?;
        let w_gate = matrix(c, W_GATE)?;
        let w_down = matrix(c, W_DOWN)?;
        let pre_lora = match (c.get(W_UP_PRE), c.get(W_GATE_PRE), c.get(W_DOWN_PRE)) {
            (None, None, None) => None,
            (Some(_), Some(_), Some(_)) => Some(PreLoraWeights {
                w_up: matrix(c, W_UP_PRE)?,
                w_gate: matrix(c, W_GATE_PRE)?,
                w_down: matrix(c, W_DOWN_PRE)?,
            }),
            _ => {
                return Err(domain(
                    "pre-adaptation weights must include all of w_up_pre, w_gate_pre, w_down_pre",
                ))
            }
        };
        let layer_index = match c.get(LAYER_INDEX) {
            Some(_) => scalar(c, LAYER_INDEX)? as i64,
            None => 0,
        };
        let t = LayerTensors {
            layer_index,
            w_up,
            w_gate,
            w_down,
            pre_lora,
            head_w: vector(c, HEAD_W)?,
            head_b: scalar(c, HEAD_B)?,
            hidden: matrix(c, HIDDEN)?,
            activations: matrix(c, ACTIVATIONS)?,
            mean_abs_act: vector(c, MEAN_ABS_ACT)?,
        };
        t.validate()?;
        Ok(t)
    }

    /// Serializes with every tensor stored as f32.
    pub fn to_container(&self) -> Result<TensorContainer> {
        let mut c = TensorContainer::new();
        c.push(Entry::f32(LAYER_INDEX, vec![1], vec![self.layer_index as f32])?)?;
        c.push(matrix_entry(W_UP, &self.w_up)?)?;
        c.push(matrix_entry(W_GATE, &self.w_gate)?)?;
        c.push(matrix_entry(W_DOWN, &self.w_down)?)?;
        if let Some(pre) = &self.pre_lora {
            c.push(matrix_entry(W_UP_PRE, &pre.w_up)?)?;
            c.push(matrix_entry(W_GATE_PRE, &pre.w_gate)?)?;
            c.push(matrix_entry(W_DOWN_PRE, &pre.w_down)?)?;
        }
        c.push(Entry::f32(
            HEAD_W,
            vec![self.head_w.len() as u32],
            self.head_w.iter().map(|&v| v as f32).collect(),
        )?)?;
        c.push(Entry::f32(HEAD_B, vec![1], vec![self.head_b as f32])?)?;
        c.push(matrix_entry(HIDDEN, &self.hidden)?)?;
        c.push(matrix_entry(ACTIVATIONS, &self.activations)?)?;
        c.push(Entry::f32(
            MEAN_ABS_ACT,
            vec![self.mean_abs_act.len() as u32],
            self.mean_abs_act.iter().map(|&v| v as f32).collect(),
        )?)?;
        Ok(c)
    }

    /// Rounds every tensor through f32, matching what a container round trip yields.
    pub fn quantized(&self) -> Result<Self> {
        Self::from_container(&self.to_container()?)
    }
}

fn matrix_entry(name: &str, m: &DMatrix<f64>) -> Result<Entry> {
    // nalgebra is column-major; HEDT is row-major.
    let mut v = Vec::with_capacity(m.len());
    for r in 0..m.nrows() {
        v.extend(m.row(r).iter().map(|&x| x as f32));
    }
    Entry::f32(name, vec![m.nrows() as u32, m.ncols() as u32], v)
}

fn matrix(c: &TensorContainer, name: &str) -> Result<DMatrix<f64>> {
    let e = c.require(name)?;
    if e.shape.len() != 2 {
        return Err(ContainerError::BadEntry {
            entry: name.into(),
            message: format!("expected a matrix, found shape {:?}", e.shape),
        }
        .into());
    }
    let (r, k) = (e.shape[0] as usize, e.shape[1] as usize);
    Ok(DMatrix::from_row_slice(r, k, &e.data.to_f64()))
}

fn vector(c: &TensorContainer, name: &str) -> Result<DVector<f64>> {
    let e = c.require(name)?;
    if e.shape.len() != 1 {
        return Err(ContainerError::BadEntry {
            entry: name.into(),
            message: format!("expected a vector, found shape {:?}", e.shape),
        }
        .into());
    }
    Ok(DVector::from_vec(e.data.to_f64()))
}

fn scalar(c: &TensorContainer, name: &str) -> Result<f64> {
    let e = c.require(name)?;
    if e.data.len() != 1 {
        return Err(ContainerError::BadEntry {
            entry: name.into(),
            message: format!("expected a scalar, found shape {:?}", e.shape),
        }
        .into());
    }
    Ok(e.data.to_f64()[0])
}

/// Stores φ as the f64 entry `phi` so affinities round-trip exactly.
pub fn affinity_to_container(phi: &AffinityMatrix) -> Result<TensorContainer> {
    let mut c = TensorContainer::new();
    let n = phi.n() as u32;
    c.push(Entry::f64(PHI, vec![n, n], phi.values().to_vec())?)?;
    Ok(c)
}

pub fn affinity_from_container(c: &TensorContainer) -> Result<AffinityMatrix> {
    let e = c.require(PHI)?;
    if e.shape.len() != 2 || e.shape[0] != e.shape[1] {
        return Err(ContainerError::BadEntry {
            entry: PHI.into(),
            message: format!("expected a square matrix, found shape {:?}", e.shape),
        }
        .into());
    }
    let values = match &e.data {
        TensorData::F64(v) => v.clone(),
        TensorData::F32(v) => v.iter().map(|&x| f64::from(x)).collect(),
    };
    AffinityMatrix::new(e.shape[0] as usize, values)
}
