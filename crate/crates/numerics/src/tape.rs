use std::sync::Arc;

use crate::error::{NumericsError, Result};
use crate::ops::Op;
use crate::tensor::Tensor;

/// Handle to a node recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(pub(crate) usize);

impl Var {
    pub fn node_id(self) -> usize {
        self.0
    }
}

/// A value recorded on the tape together with its accumulated gradient.
#[derive(Debug)]
pub struct DiffTensor {
    pub value: Tensor,
    /// Zero-initialized; allocated once the node first receives gradient.
    pub grad: Vec<f64>,
    pub requires_grad: bool,
    pub node_id: usize,
}

impl DiffTensor {
    pub fn shape(&self) -> &[usize] {
        self.value.shape()
    }
}

pub(crate) struct Node {
    pub(crate) tensor: DiffTensor,
    pub(crate) op: Op,
}

/// Row-wise visibility pattern for masked softmax. Masked entries get exactly
/// zero probability.
#[derive(Clone, Debug, PartialEq)]
pub struct AttentionMask {
    rows: usize,
    cols: usize,
    visible: Vec<bool>,
}

impl AttentionMask {
    pub fn new(rows: usize, cols: usize, visible: Vec<bool>) -> Result<Self> {
        if visible.len() != rows * cols {
            return Err(NumericsError::Shape {
                op: "attention_mask",
                left: vec![rows, cols],
                right: vec![visible.len()],
            });
        }
        Ok(Self {
            rows,
            cols,
            visible,
        })
    }

    pub fn from_fn(rows: usize, cols: usize, f: impl Fn(usize, usize) -> bool) -> Self {
        let visible = (0..rows * cols).map(|i| f(i / cols, i % cols)).collect();
        Self {
            rows,
            cols,
            visible,
        }
    }

    pub fn causal(n: usize) -> Self {
        Self::from_fn(n, n, |i, j| j <= i)
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn is_visible(&self, row: usize, col: usize) -> bool {
        self.visible[row * self.cols + col]
    }

    pub(crate) fn row(&self, row: usize) -> &[bool] {
        &self.visible[row * self.cols..(row + 1) * self.cols]
    }
}

/// Append-only record of a forward computation. Nodes are pushed in creation
/// order, so the tape is topologically sorted by construction.
///
/// A tape is single-threaded; use one tape per sample for parallel work.
#[derive(Default)]
pub struct Tape {
    pub(crate) nodes: Vec<Node>,
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn leaf(&mut self, value: Tensor, requires_grad: bool) -> Var {
        self.push(value, requires_grad, Op::Leaf)
    }

    pub fn param(&mut self, value: Tensor) -> Var {
        self.leaf(value, true)
    }

    pub fn constant(&mut self, value: Tensor) -> Var {
        self.leaf(value, false)
    }

    pub(crate) fn push(&mut self, value: Tensor, requires_grad: bool, op: Op) -> Var {
        let id = self.nodes.len();
        self.nodes.push(Node {
            tensor: DiffTensor {
                value,
                grad: Vec::new(),
                requires_grad,
                node_id: id,
            },
            op,
        });
        Var(id)
    }

    pub fn get(&self, v: Var) -> &DiffTensor {
        &self.nodes[v.0].tensor
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].tensor.value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].tensor.value.shape()
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].tensor.requires_grad
    }

    /// Accumulated gradient of `v`, as a tensor of the same shape.
    pub fn grad(&self, v: Var) -> Tensor {
        let t = &self.nodes[v.0].tensor;
        if t.grad.is_empty() {
            Tensor::zeros(t.value.shape())
        } else {
            Tensor::new(t.value.shape().to_vec(), t.grad.clone()).expect("grad matches shape")
        }
    }

    pub fn zero_grad(&mut self) {
        for n in &mut self.nodes {
            n.tensor.grad.clear();
        }
    }

    /// Reverse-mode sweep from a scalar output. Gradients are computed into a
    /// fresh buffer and then added to every node's accumulated gradient, so two
    /// calls without [`Tape::zero_grad`] accumulate exactly twice the gradient.
    pub fn backward(&mut self, output: Var) -> Result<()> {
        let out = &self.nodes[output.0].tensor;
        if out.value.numel() != 1 {
            return Err(NumericsError::Shape {
                op: "backward",
                left: out.value.shape().to_vec(),
                right: vec![1],
            });
        }
        let mut scratch: Vec<Option<Vec<f64>>> = Vec::new();
        scratch.resize_with(output.0 + 1, || None);
        scratch[output.0] = Some(vec![1.0]);

        for id in (0..=output.0).rev() {
            let Some(gout) = scratch[id].take() else {
                continue;
            };
            if !self.nodes[id].tensor.requires_grad {
                continue;
            }
            self.backward_node(id, &gout, &mut scratch);
            let t = &mut self.nodes[id].tensor;
            if t.grad.is_empty() {
                t.grad = gout;
            } else {
                crate::kernels::add_into(&gout, &mut t.grad);
            }
        }
        Ok(())
    }

    /// Scratch gradient buffer for `v`, or `None` when `v` needs no gradient.
    pub(crate) fn slot<'s>(
        &self,
        scratch: &'s mut [Option<Vec<f64>>],
        v: Var,
    ) -> Option<&'s mut Vec<f64>> {
        let t = &self.nodes[v.0].tensor;
        if !t.requires_grad {
            return None;
        }
        Some(scratch[v.0].get_or_insert_with(|| vec![0.0; t.value.numel()]))
    }
}

pub type SharedMask = Arc<AttentionMask>;
