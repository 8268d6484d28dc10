//! Reverse-mode autodiff over a fixed operator set.
//!
//! A [`Tape`] records forward values for a small vocabulary of tensor ops;
//! [`Tape::backward`] replays it once in reverse to accumulate gradients of a
//! scalar root. Tapes are built fresh for every training step — nothing is
//! retained between iterations, which keeps lifetimes and memory use trivial.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{CoreError, Result};
use crate::tensor::Tensor;

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct VarId(usize);

const SQRT_2_OVER_PI: f64 = 0.797_884_560_802_865_4;
const GELU_CUBIC: f64 = 0.044_715;

/// GELU, tanh approximation.
pub fn gelu(x: f64) -> f64 {
    let u = SQRT_2_OVER_PI * (x + GELU_CUBIC * x * x * x);
    0.5 * x * (1.0 + libm::tanh(u))
}

/// Analytic derivative of [`gelu`].
pub fn gelu_prime(x: f64) -> f64 {
    let u = SQRT_2_OVER_PI * (x + GELU_CUBIC * x * x * x);
    let t = libm::tanh(u);
    let du = SQRT_2_OVER_PI * (1.0 + 3.0 * GELU_CUBIC * x * x);
    0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * du
}

/// Elementwise GELU on a tensor (shared between tape and pure forward paths).
pub fn gelu_tensor(x: &Tensor) -> Tensor {
    let mut out = x.clone();
    for v in out.data_mut() {
        *v = gelu(*v);
    }
    out
}

enum Op {
    Leaf,
    Add(VarId, VarId),
    Sub(VarId, VarId),
    Mul(VarId, VarId),
    Scale(VarId, f64),
    AddScalar(VarId),
    /// Row i multiplied by `factors[i]`; factors are constants, not inputs.
    ScaleRows(VarId, Vec<f64>),
    MatMul(VarId, VarId),
    AddRowBias(VarId, VarId),
    Gelu(VarId),
    Sqrt(VarId),
    /// `[n, d] -> [n]` sum across columns.
    RowSum(VarId),
    Sum(VarId),
    Mean(VarId),
}

struct Node {
    op: Op,
    value: Tensor,
}

/// Gradients of the root with respect to every tape node.
pub struct Grads {
    slots: Vec<Option<Tensor>>,
}

impl Grads {
    /// Gradient for `id`; zero tensor of the node's shape if it never
    /// received a contribution.
    pub fn get(&self, id: VarId, tape: &Tape) -> Tensor {
        match &self.slots[id.0] {
            Some(g) => g.clone(),
            None => Tensor::zeros(tape.value(id).shape().to_vec()),
        }
    }
}

#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

impl Tape {
    pub fn new() -> Self {
        Tape { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, id: VarId) -> &Tensor {
        &self.nodes[id.0].value
    }

    fn push(&mut self, op: Op, value: Tensor) -> VarId {
        self.nodes.push(Node { op, value });
        VarId(self.nodes.len() - 1)
    }

    pub fn leaf(&mut self, value: Tensor) -> VarId {
        self.push(Op::Leaf, value)
    }

    pub fn add(&mut self, a: VarId, b: VarId) -> Result<VarId> {
        let v = self.value(a).add(self.value(b))?;
        Ok(self.push(Op::Add(a, b), v))
    }

    pub fn sub(&mut self, a: VarId, b: VarId) -> Result<VarId> {
        let v = self.value(a).sub(self.value(b))?;
        Ok(self.push(Op::Sub(a, b), v))
    }

    pub fn mul(&mut self, a: VarId, b: VarId) -> Result<VarId> {
        let v = self.value(a).mul(self.value(b))?;
        Ok(self.push(Op::Mul(a, b), v))
    }

    pub fn scale(&mut self, a: VarId, c: f64) -> Result<VarId> {
        let v = self.value(a).scale(c)?;
        Ok(self.push(Op::Scale(a, c), v))
    }

    pub fn add_scalar(&mut self, a: VarId, c: f64) -> Result<VarId> {
        let mut v = self.value(a).clone();
        for x in v.data_mut() {
            *x += c;
        }
        v.ensure_finite("add_scalar")?;
        Ok(self.push(Op::AddScalar(a), v))
    }

    pub fn scale_rows(&mut self, a: VarId, factors: Vec<f64>) -> Result<VarId> {
        let v = self.value(a).scale_rows(&factors)?;
        Ok(self.push(Op::ScaleRows(a, factors), v))
    }

    pub fn matmul(&mut self, a: VarId, b: VarId) -> Result<VarId> {
        let v = self.value(a).matmul(self.value(b))?;
        Ok(self.push(Op::MatMul(a, b), v))
    }

    pub fn add_row_bias(&mut self, a: VarId, bias: VarId) -> Result<VarId> {
        let v = self.value(a).add_row_bias(self.value(bias))?;
        Ok(self.push(Op::AddRowBias(a, bias), v))
    }

    pub fn gelu(&mut self, a: VarId) -> Result<VarId> {
        let v = gelu_tensor(self.value(a));
        v.ensure_finite("gelu")?;
        Ok(self.push(Op::Gelu(a), v))
    }

    /// Elementwise square root; every input element must be > 0 so the
    /// backward pass stays finite.
    pub fn sqrt(&mut self, a: VarId) -> Result<VarId> {
        let mut v = self.value(a).clone();
        for x in v.data_mut() {
            if *x <= 0.0 {
                return Err(CoreError::domain(alloc::format!(
                    "sqrt: non-positive input {x}"
                )));
            }
            *x = libm::sqrt(*x);
        }
        Ok(self.push(Op::Sqrt(a), v))
    }

    pub fn row_sum(&mut self, a: VarId) -> Result<VarId> {
        let t = self.value(a);
        let n = match t.shape() {
            [n, _] => *n,
            s => {
                return Err(CoreError::shape(alloc::format!(
                    "row_sum: input must be rank 2, got {s:?}"
                )))
            }
        };
        let mut data = vec![0.0; n];
        for (i, slot) in data.iter_mut().enumerate() {
            *slot = t.row(i).iter().sum();
        }
        let v = Tensor::new(vec![n], data)?;
        Ok(self.push(Op::RowSum(a), v))
    }

    pub fn sum(&mut self, a: VarId) -> Result<VarId> {
        let v = Tensor::scalar(self.value(a).sum())?;
        Ok(self.push(Op::Sum(a), v))
    }

    pub fn mean(&mut self, a: VarId) -> Result<VarId> {
        let v = Tensor::scalar(self.value(a).mean())?;
        Ok(self.push(Op::Mean(a), v))
    }

    /// Accumulates gradients of scalar `root` with respect to every node.
    pub fn backward(&self, root: VarId) -> Result<Grads> {
        if !self.value(root).is_scalar() {
            return Err(CoreError::shape(alloc::format!(
                "backward: root must be scalar, got shape {:?}",
                self.value(root).shape()
            )));
        }
        let mut slots: Vec<Option<Tensor>> = (0..self.nodes.len()).map(|_| None).collect();
        slots[root.0] = Some(Tensor::scalar(1.0)?);

        for idx in (0..self.nodes.len()).rev() {
            let g = match slots[idx].take() {
                Some(g) => g,
                None => continue,
            };
            match &self.nodes[idx].op {
                Op::Leaf => {}
                Op::Add(a, b) => {
                    accum(&mut slots, *a, g.clone())?;
                    accum(&mut slots, *b, g.clone())?;
                }
                Op::Sub(a, b) => {
                    accum(&mut slots, *a, g.clone())?;
                    accum(&mut slots, *b, g.scale(-1.0)?)?;
                }
                Op::Mul(a, b) => {
                    let ga = g.mul(self.value(*b))?;
                    let gb = g.mul(self.value(*a))?;
                    accum(&mut slots, *a, ga)?;
                    accum(&mut slots, *b, gb)?;
                }
                Op::Scale(a, c) => accum(&mut slots, *a, g.scale(*c)?)?,
                Op::AddScalar(a) => accum(&mut slots, *a, g.clone())?,
                Op::ScaleRows(a, factors) => {
                    accum(&mut slots, *a, g.scale_rows(factors)?)?;
                }
                Op::MatMul(a, b) => {
                    let ga = g.matmul_nt(self.value(*b))?;
                    let gb = self.value(*a).matmul_tn(&g)?;
                    accum(&mut slots, *a, ga)?;
                    accum(&mut slots, *b, gb)?;
                }
                Op::AddRowBias(a, bias) => {
                    accum(&mut slots, *a, g.clone())?;
                    accum(&mut slots, *bias, g.col_sum()?)?;
                }
                Op::Gelu(a) => {
                    let mut ga = g.clone();
                    for (gv, xv) in ga.data_mut().iter_mut().zip(self.value(*a).data()) {
                        *gv *= gelu_prime(*xv);
                    }
                    accum(&mut slots, *a, ga)?;
                }
                Op::Sqrt(a) => {
                    // d sqrt(x) = 1 / (2 sqrt(x)); reuse the stored output.
                    let mut ga = g.clone();
                    for (gv, yv) in ga.data_mut().iter_mut().zip(self.nodes[idx].value.data()) {
                        *gv *= 0.5 / yv;
                    }
                    accum(&mut slots, *a, ga)?;
                }
                Op::RowSum(a) => {
                    let shape = self.value(*a).shape().to_vec();
                    let d = shape[1];
                    let mut ga = Tensor::zeros(shape);
                    for i in 0..g.len() {
                        let gi = g.data()[i];
                        for j in 0..d {
                            ga.data_mut()[i * d + j] = gi;
                        }
                    }
                    accum(&mut slots, *a, ga)?;
                }
                Op::Sum(a) => {
                    let ga = Tensor::filled(self.value(*a).shape().to_vec(), g.data()[0])?;
                    accum(&mut slots, *a, ga)?;
                }
                Op::Mean(a) => {
                    let n = self.value(*a).len() as f64;
                    let ga = Tensor::filled(self.value(*a).shape().to_vec(), g.data()[0] / n)?;
                    accum(&mut slots, *a, ga)?;
                }
            }
            slots[idx] = Some(g);
        }

        for (i, slot) in slots.iter().enumerate() {
            if let Some(g) = slot {
                g.ensure_finite("backward gradient")
                    .map_err(|_| CoreError::non_finite(alloc::format!("gradient of node {i}")))?;
            }
        }
        Ok(Grads { slots })
    }
}

fn accum(slots: &mut [Option<Tensor>], id: VarId, delta: Tensor) -> Result<()> {
    slots[id.0] = Some(match slots[id.0].take() {
        Some(g) => g.add(&delta)?,
        None => delta,
    });
    Ok(())
}
