//! Minimal reverse-mode automatic differentiation over dense `f64` tensors.
//!
//! A [`Graph`] is an append-only arena of nodes; [`Tensor`] is a copyable
//! handle into it. Parents always precede children in the arena, so the
//! backward pass is a single sweep in reverse insertion order.
//!
//! Layout conventions: sequences are time-major, `[L, C]` or `[B, L, C]`;
//! convolution weights are `[C_out, C_in, K]`, transposed-convolution
//! weights `[C_in, C_out, K]`. Broadcasting exists only for one-element
//! operands and the explicit per-channel / per-row ops.

mod backward;
mod gradcheck;
mod ops;
mod params;
mod stft;
mod tsr;

pub use gradcheck::{grad_check, GRAD_CHECK_FLOOR};
pub use params::{BoundParams, Param, ParamStore};
pub use stft::{stft_magnitude_values, StftResolution, STFT_EPS};
pub use tsr::{read_tsr, write_tsr, NamedTensor, WeightFile};

use std::cell::RefCell;

use rustfft::num_complex::Complex64;

use crate::error::{shape_err, Result};

#[derive(Debug, Clone)]
pub(crate) enum Op {
    Leaf,
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    Div(usize, usize),
    Scale(usize, f64),
    AddScalar(usize),
    Neg(usize),
    MatMul { a: usize, b: usize, m: usize, k: usize, n: usize },
    Conv1d { x: usize, w: usize, b: Option<usize>, geom: ConvGeom },
    ConvTranspose1d { x: usize, w: usize, b: Option<usize>, geom: ConvGeom },
    Relu(usize),
    LeakyRelu(usize, f64),
    Tanh(usize),
    Softmax(usize),
    LayerNorm { x: usize, inv_std: Vec<f64> },
    MulChannels(usize, usize),
    AddChannels(usize, usize),
    ScaleRows(usize, usize),
    Sum(usize),
    Mean(usize),
    SumLast(usize),
    Abs(usize),
    Square(usize),
    Sqrt(usize),
    Log(usize),
    Exp(usize),
    Reshape(usize),
    Transpose { x: usize, batch: usize, rows: usize, cols: usize },
    ConcatLast(Vec<usize>),
    SliceLast { x: usize, start: usize },
    PadRows { x: usize, before: usize },
    SliceRows { x: usize, start: usize },
    AvgPoolRows { x: usize, k: usize },
    Stft { x: usize, res: StftResolution, spectra: Vec<Complex64> },
}

/// Geometry of a (transposed) 1-D convolution over the time axis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct ConvGeom {
    pub batch: usize,
    pub len_in: usize,
    pub len_out: usize,
    pub c_in: usize,
    pub c_out: usize,
    pub k: usize,
    pub stride: usize,
    /// Left zero-padding for convolution, left crop for transposed convolution.
    pub offset: usize,
}

#[derive(Debug)]
pub(crate) struct Node {
    pub value: Vec<f64>,
    pub shape: Vec<usize>,
    pub op: Op,
    pub requires_grad: bool,
    pub grad: Option<Vec<f64>>,
}

/// Arena holding one computation.
#[derive(Debug, Default)]
pub struct Graph {
    nodes: RefCell<Vec<Node>>,
}

/// Handle to a node of a [`Graph`].
#[derive(Clone, Copy)]
pub struct Tensor<'g> {
    graph: &'g Graph,
    id: usize,
}

impl std::fmt::Debug for Tensor<'_> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Tensor#{}{:?}", self.id, self.shape())
    }
}

pub(crate) fn numel(shape: &[usize]) -> usize {
    shape.iter().product()
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn push_leaf(&self, data: Vec<f64>, shape: &[usize], requires_grad: bool) -> Result<Tensor<'_>> {
        if numel(shape) != data.len() {
            return shape_err(format!("shape {shape:?} does not hold {} values", data.len()));
        }
        Ok(self.push(data, shape.to_vec(), Op::Leaf, requires_grad))
    }

    /// Constant input; no gradient is accumulated for it.
    pub fn constant(&self, data: Vec<f64>, shape: &[usize]) -> Result<Tensor<'_>> {
        self.push_leaf(data, shape, false)
    }

    /// Differentiable leaf.
    pub fn variable(&self, data: Vec<f64>, shape: &[usize]) -> Result<Tensor<'_>> {
        self.push_leaf(data, shape, true)
    }

    pub fn scalar(&self, v: f64) -> Tensor<'_> {
        self.push(vec![v], vec![1], Op::Leaf, false)
    }

    pub(crate) fn push(&self, value: Vec<f64>, shape: Vec<usize>, op: Op, requires_grad: bool) -> Tensor<'_> {
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(Node {
            value,
            shape,
            op,
            requires_grad,
            grad: None,
        });
        Tensor {
            graph: self,
            id: nodes.len() - 1,
        }
    }

    pub(crate) fn requires(&self, ids: &[usize]) -> bool {
        let nodes = self.nodes.borrow();
        ids.iter().any(|&i| nodes[i].requires_grad)
    }
}

impl<'g> Tensor<'g> {
    pub fn graph(&self) -> &'g Graph {
        self.graph
    }

    pub fn shape(&self) -> Vec<usize> {
        self.graph.nodes.borrow()[self.id].shape.clone()
    }

    pub fn numel(&self) -> usize {
        self.graph.nodes.borrow()[self.id].value.len()
    }

    pub fn value(&self) -> Vec<f64> {
        self.graph.nodes.borrow()[self.id].value.clone()
    }

    pub(crate) fn with_value<R>(&self, f: impl FnOnce(&[f64]) -> R) -> R {
        f(&self.graph.nodes.borrow()[self.id].value)
    }

    /// Value of a one-element tensor.
    pub fn item(&self) -> f64 {
        self.with_value(|v| v[0])
    }

    /// Gradient from the most recent [`Tensor::backward`] call, if this node
    /// was reached.
    pub fn grad(&self) -> Option<Vec<f64>> {
        self.graph.nodes.borrow()[self.id].grad.clone()
    }

    pub fn requires_grad(&self) -> bool {
        self.graph.nodes.borrow()[self.id].requires_grad
    }

    /// A constant copy of this value, cut from the graph.
    pub fn detach(&self) -> Tensor<'g> {
        let (v, s) = {
            let nodes = self.graph.nodes.borrow();
            (nodes[self.id].value.clone(), nodes[self.id].shape.clone())
        };
        self.graph.push(v, s, Op::Leaf, false)
    }
}
