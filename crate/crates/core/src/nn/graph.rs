//! Recorded computation graph with reverse-mode differentiation.
//!
//! Nodes are appended in evaluation order, so the node list is already a
//! topological order and the backward sweep simply walks it in reverse.

use std::borrow::Cow;

use crate::error::{Error, Result};
use crate::nn::ops::{self, BatchNormCache, Mode};
use crate::nn::Tensor;

/// Handle to a node of a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

#[derive(Debug)]
enum Op {
    Input,
    Param(usize),
    Conv { x: Var, w: Var, stride: usize, padding: usize },
    BatchNorm { x: Var, gamma: Var, beta: Var, cache: BatchNormCache },
    Relu(Var),
    Add(Var, Var),
    Pool(Var),
    Dense { x: Var, w: Var, b: Var },
    CrossEntropy { logits: Var, labels: Vec<usize>, probs: Tensor },
}

#[derive(Debug)]
struct Node<'a> {
    value: Cow<'a, Tensor>,
    op: Op,
}

/// Gradients produced by [`Graph::backward`], indexed by parameter slot.
#[derive(Debug, Default)]
pub struct Gradients {
    params: Vec<Option<Tensor>>,
}

impl Gradients {
    pub fn param(&self, slot: usize) -> Option<&Tensor> {
        self.params.get(slot).and_then(Option::as_ref)
    }

    pub fn into_params(self) -> Vec<Option<Tensor>> {
        self.params
    }
}

/// Single-use tape. Parameters are borrowed, activations are owned.
#[derive(Debug, Default)]
pub struct Graph<'a> {
    nodes: Vec<Node<'a>>,
}

impl<'a> Graph<'a> {
    pub fn new() -> Self {
        Graph { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    fn push(&mut self, value: Tensor, op: Op) -> Var {
        self.nodes.push(Node { value: Cow::Owned(value), op });
        Var(self.nodes.len() - 1)
    }

    pub fn input(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Input)
    }

    /// Register a borrowed parameter; its gradient is reported under `slot`.
    pub fn param(&mut self, slot: usize, value: &'a Tensor) -> Var {
        self.nodes.push(Node { value: Cow::Borrowed(value), op: Op::Param(slot) });
        Var(self.nodes.len() - 1)
    }

    pub fn conv1d(&mut self, x: Var, w: Var, stride: usize, padding: usize) -> Result<Var> {
        let y = ops::conv1d(self.value(x), self.value(w), stride, padding)?;
        Ok(self.push(y, Op::Conv { x, w, stride, padding }))
    }

    /// Returns the output and, in train mode, the batch mean/variance so the
    /// caller can update its running statistics.
    pub fn batchnorm(
        &mut self,
        x: Var,
        gamma: Var,
        beta: Var,
        running: (&Tensor, &Tensor),
        mode: Mode,
        eps: f64,
    ) -> Result<(Var, Option<(Vec<f64>, Vec<f64>)>)> {
        let (y, cache) =
            ops::batchnorm_forward(self.value(x), self.value(gamma), self.value(beta), running, mode, eps)?;
        let stats = (mode == Mode::Train).then(|| (cache.mean.clone(), cache.var.clone()));
        Ok((self.push(y, Op::BatchNorm { x, gamma, beta, cache }), stats))
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let y = ops::relu(self.value(x));
        self.push(y, Op::Relu(x))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let y = ops::add(self.value(a), self.value(b))?;
        Ok(self.push(y, Op::Add(a, b)))
    }

    pub fn global_avg_pool(&mut self, x: Var) -> Result<Var> {
        let y = ops::global_avg_pool(self.value(x))?;
        Ok(self.push(y, Op::Pool(x)))
    }

    pub fn dense(&mut self, x: Var, w: Var, b: Var) -> Result<Var> {
        let y = ops::dense(self.value(x), self.value(w), self.value(b))?;
        Ok(self.push(y, Op::Dense { x, w, b }))
    }

    /// Scalar loss node; the probabilities are kept for the backward pass.
    pub fn softmax_cross_entropy(&mut self, logits: Var, labels: &[usize]) -> Result<Var> {
        let (loss, probs) = ops::softmax_cross_entropy(self.value(logits), labels)?;
        Ok(self.push(Tensor::scalar(loss), Op::CrossEntropy { logits, labels: labels.to_vec(), probs }))
    }

    /// Probabilities recorded by a cross-entropy node.
    pub fn probabilities(&self, loss: Var) -> Option<&Tensor> {
        match &self.nodes.get(loss.0)?.op {
            Op::CrossEntropy { probs, .. } => Some(probs),
            _ => None,
        }
    }

    /// Reverse sweep from a scalar root. Parameters used more than once
    /// (fan-out through skip connections) accumulate their gradients.
    pub fn backward(&self, root: Var) -> Result<Gradients> {
        let node = self
            .nodes
            .get(root.0)
            .ok_or_else(|| Error::State("backward called on a node that was never recorded".into()))?;
        if node.value.len() != 1 {
            return Err(Error::State(format!("backward root must be scalar, got dims {:?}", node.value.dims())));
        }
        let mut grads: Vec<Option<Tensor>> = (0..=root.0).map(|_| None).collect();
        grads[root.0] = Some(Tensor::from_vec(node.value.dims(), vec![1.0])?);
        let mut out = Gradients::default();

        for i in (0..=root.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            match &node.op {
                Op::Input => {}
                Op::Param(slot) => {
                    if out.params.len() <= *slot {
                        out.params.resize_with(slot + 1, || None);
                    }
                    accumulate(&mut out.params[*slot], g)?;
                }
                Op::Conv { x, w, stride, padding } => {
                    let (gx, gw) = ops::conv1d_backward(self.value(*x), self.value(*w), &g, *stride, *padding)?;
                    accumulate(&mut grads[x.0], gx)?;
                    accumulate(&mut grads[w.0], gw)?;
                }
                Op::BatchNorm { x, gamma, beta, cache } => {
                    let (gx, gg, gb) = ops::batchnorm_backward(&g, self.value(*gamma), cache)?;
                    accumulate(&mut grads[x.0], gx)?;
                    accumulate(&mut grads[gamma.0], gg)?;
                    accumulate(&mut grads[beta.0], gb)?;
                }
                Op::Relu(x) => {
                    let gx = ops::relu_backward(self.value(*x), &g);
                    accumulate(&mut grads[x.0], gx)?;
                }
                Op::Add(a, b) => {
                    accumulate(&mut grads[b.0], g.clone())?;
                    accumulate(&mut grads[a.0], g)?;
                }
                Op::Pool(x) => {
                    let gx = ops::global_avg_pool_backward(self.value(*x).dims(), &g)?;
                    accumulate(&mut grads[x.0], gx)?;
                }
                Op::Dense { x, w, b } => {
                    let (gx, gw, gb) = ops::dense_backward(self.value(*x), self.value(*w), &g)?;
                    accumulate(&mut grads[x.0], gx)?;
                    accumulate(&mut grads[w.0], gw)?;
                    accumulate(&mut grads[b.0], gb)?;
                }
                Op::CrossEntropy { logits, labels, probs } => {
                    let mut gl = ops::softmax_cross_entropy_backward(probs, labels);
                    let scale = g.item();
                    if scale != 1.0 {
                        gl.data_mut().iter_mut().for_each(|v| *v *= scale);
                    }
                    accumulate(&mut grads[logits.0], gl)?;
                }
            }
        }
        Ok(out)
    }
}

fn accumulate(slot: &mut Option<Tensor>, g: Tensor) -> Result<()> {
    match slot {
        None => *slot = Some(g),
        Some(acc) => {
            if acc.dims() != g.dims() {
                return Err(Error::Shape(format!("gradient shape {:?} vs {:?}", acc.dims(), g.dims())));
            }
            for (a, b) in acc.data_mut().iter_mut().zip(g.data()) {
                *a += b;
            }
        }
    }
    Ok(())
}
