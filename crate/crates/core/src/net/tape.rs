//! Reverse-mode differentiation over whole-tensor operations.

use std::sync::Arc;

use super::conv::{lrelu, lrelu_grad, ConvGeometry, KernelIds, KernelMlp};
use super::params::ModelParams;
use super::tensor::Tensor;
use crate::error::{Error, Result};

pub type NodeId = usize;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LinearIds {
    pub w: usize,
    pub b: usize,
}

enum Op {
    Input,
    Linear { x: NodeId, ids: LinearIds },
    LeakyRelu { x: NodeId },
    Concat { a: NodeId, b: NodeId },
    Scale { x: NodeId, s: f64 },
    McConv {
        x: NodeId,
        geom: Arc<ConvGeometry>,
        ids: KernelIds,
        preact: Vec<f64>,
    },
}

struct Node {
    op: Op,
    value: Tensor,
}

/// Record of a forward pass. Nodes are appended in evaluation order, so the
/// node list is already a topological order.
pub struct GradTape<'p> {
    params: &'p ModelParams,
    nodes: Vec<Node>,
}

pub struct Gradients {
    /// One tensor per model parameter, zero for parameters the output does
    /// not depend on.
    pub params: Vec<Tensor>,
    /// Gradient with respect to every node value (`None` if unreached).
    pub nodes: Vec<Option<Tensor>>,
}

impl<'p> GradTape<'p> {
    pub fn new(params: &'p ModelParams) -> Self {
        GradTape {
            params,
            nodes: Vec::new(),
        }
    }

    fn push(&mut self, op: Op, value: Tensor) -> NodeId {
        self.nodes.push(Node { op, value });
        self.nodes.len() - 1
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, id: NodeId) -> &Tensor {
        &self.nodes[id].value
    }

    pub fn input(&mut self, t: Tensor) -> NodeId {
        self.push(Op::Input, t)
    }

    pub fn linear(&mut self, x: NodeId, ids: LinearIds) -> NodeId {
        let v = self.nodes[x].value.affine(self.params.get(ids.w), self.params.get(ids.b));
        self.push(Op::Linear { x, ids }, v)
    }

    pub fn leaky_relu(&mut self, x: NodeId) -> NodeId {
        let v = self.nodes[x].value.map(lrelu);
        self.push(Op::LeakyRelu { x }, v)
    }

    pub fn concat(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let v = self.nodes[a].value.hconcat(&self.nodes[b].value);
        self.push(Op::Concat { a, b }, v)
    }

    pub fn scale(&mut self, x: NodeId, s: f64) -> NodeId {
        let v = self.nodes[x].value.map(|t| t * s);
        self.push(Op::Scale { x, s }, v)
    }

    pub fn mc_conv(&mut self, x: NodeId, geom: Arc<ConvGeometry>, ids: KernelIds) -> NodeId {
        let k = KernelMlp::from_params(self.params, ids);
        let (v, preact) = geom.forward(&self.nodes[x].value, &k);
        self.push(Op::McConv { x, geom, ids, preact }, v)
    }

    /// Backpropagates `seed` (the gradient of a scalar loss with respect to
    /// node `out`) through every node that `out` depends on.
    pub fn backward(&self, out: NodeId, seed: Tensor) -> Result<Gradients> {
        if seed.shape() != self.nodes[out].value.shape() {
            return Err(Error::Shape(format!(
                "seed {:?} for node of shape {:?}",
                seed.shape(),
                self.nodes[out].value.shape()
            )));
        }
        let mut pg = self.params.zeros_like();
        let mut ng: Vec<Option<Tensor>> = (0..self.nodes.len()).map(|_| None).collect();
        ng[out] = Some(seed);
        for i in (0..=out).rev() {
            let Some(g) = ng[i].take() else { continue };
            let node = &self.nodes[i];
            match &node.op {
                Op::Input => {}
                Op::Linear { x, ids } => {
                    let xv = &self.nodes[*x].value;
                    xv.t_matmul_into(&g, &mut pg[ids.w]);
                    for r in 0..g.rows {
                        for (b, v) in pg[ids.b].data.iter_mut().zip(g.row(r)) {
                            *b += v;
                        }
                    }
                    accumulate(&mut ng, *x, g.matmul_t(self.params.get(ids.w)));
                }
                Op::LeakyRelu { x } => {
                    let xv = &self.nodes[*x].value;
                    let mut gx = g.clone();
                    for (d, &z) in gx.data.iter_mut().zip(&xv.data) {
                        *d *= lrelu_grad(z);
                    }
                    accumulate(&mut ng, *x, gx);
                }
                Op::Concat { a, b } => {
                    let ca = self.nodes[*a].value.cols;
                    let cb = self.nodes[*b].value.cols;
                    let mut ga = Tensor::zeros(g.rows, ca);
                    let mut gb = Tensor::zeros(g.rows, cb);
                    for r in 0..g.rows {
                        ga.row_mut(r).copy_from_slice(&g.row(r)[..ca]);
                        gb.row_mut(r).copy_from_slice(&g.row(r)[ca..]);
                    }
                    accumulate(&mut ng, *a, ga);
                    accumulate(&mut ng, *b, gb);
                }
                Op::Scale { x, s } => accumulate(&mut ng, *x, g.map(|v| v * s)),
                Op::McConv { x, geom, ids, preact } => {
                    let xv = &self.nodes[*x].value;
                    let k = KernelMlp::from_params(self.params, *ids);
                    let mut gx = Tensor::zeros(xv.rows, xv.cols);
                    let [mut w1, mut b1, mut w2, mut b2] =
                        [ids.w1, ids.b1, ids.w2, ids.b2].map(|p| std::mem::replace(&mut pg[p], Tensor::zeros(0, 0)));
                    geom.backward(xv, &k, preact, &g, [&mut w1, &mut b1, &mut w2, &mut b2], &mut gx);
                    for (p, t) in [ids.w1, ids.b1, ids.w2, ids.b2].into_iter().zip([w1, b1, w2, b2]) {
                        pg[p] = t;
                    }
                    accumulate(&mut ng, *x, gx);
                }
            }
            ng[i] = Some(g);
        }
        Ok(Gradients { params: pg, nodes: ng })
    }
}

fn accumulate(ng: &mut [Option<Tensor>], id: NodeId, g: Tensor) {
    match &mut ng[id] {
        Some(t) => t.add_assign(&g),
        slot => *slot = Some(g),
    }
}
