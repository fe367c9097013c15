//! Dynamic reverse-mode tape.
//!
//! A [`Tape`] is the computation record of one forward pass. Every op appends
//! a node whose inputs are earlier nodes, so node order is a topological
//! order and `backward` is a single reverse sweep.
//!
//! Leaves that require gradients keep an accumulated gradient on the tape;
//! calling `backward` twice on the same loss doubles them.

use super::params::{ParamId, ParamStore};
use super::tensor::{matmul, matmul_a_transposed, matmul_b_transposed, Tensor};
use crate::error::{Error, Result};

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    MatMul(Var, Var),
    AddBias(Var, Var),
    Sigmoid(Var),
    Silu(Var),
    Square(Var),
    Sqrt(Var),
    Mean(Var),
    Sum(Var),
    Prod(Var),
    Scale(Var, f64),
    AddScalar(Var),
    ClampMin(Var, f64),
    ClampBetween(Var, Vec<f64>, Vec<f64>),
    ConcatCols(Vec<Var>),
    ConcatRows(Vec<Var>),
    SliceCols(Var, usize, usize),
    GatherRows(Var, Vec<usize>),
}

#[derive(Debug, Clone)]
struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
    param: Option<ParamId>,
}

#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

fn dims2(t: &Tensor, op: &'static str) -> Result<(usize, usize)> {
    t.dims2().ok_or_else(|| Error::Dimension {
        op,
        left: t.shape().to_vec(),
        right: vec![],
    })
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
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

    /// Records a leaf; gradients are tracked if `t.requires_grad()`.
    pub fn leaf(&mut self, t: Tensor) -> Result<Var> {
        if !t.is_finite() {
            return Err(Error::numeric("non-finite leaf value"));
        }
        let requires_grad = t.requires_grad();
        Ok(self.push_node(t, Op::Leaf, requires_grad, None))
    }

    pub fn constant(&mut self, t: Tensor) -> Result<Var> {
        self.leaf(t.with_requires_grad(false))
    }

    /// Copies parameter `id` onto the tape as a gradient-tracking leaf.
    pub fn param(&mut self, store: &ParamStore, id: ParamId) -> Var {
        let value = store.get(id).clone().with_requires_grad(true);
        self.push_node(value, Op::Leaf, true, Some(id))
    }

    /// A detached copy of `v`: same value, no gradient path.
    pub fn detach(&mut self, v: Var) -> Var {
        let value = self.value(v).clone().with_requires_grad(false);
        self.push_node(value, Op::Leaf, false, None)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn scalar(&self, v: Var) -> f64 {
        self.nodes[v.0].value.data()[0]
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Accumulated gradient of a leaf, if any backward pass reached it.
    pub fn grad(&self, v: Var) -> Option<&[f64]> {
        self.nodes[v.0].value.grad()
    }

    /// Gradients of every parameter leaf, in recording order.
    pub fn param_grads(&self) -> impl Iterator<Item = (ParamId, &[f64])> {
        self.nodes
            .iter()
            .filter_map(|n| Some((n.param?, n.value.grad()?)))
    }

    fn push_node(
        &mut self,
        value: Tensor,
        op: Op,
        requires_grad: bool,
        param: Option<ParamId>,
    ) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
            param,
        });
        Var(self.nodes.len() - 1)
    }

    fn push(&mut self, shape: Vec<usize>, data: Vec<f64>, op: Op, inputs: &[Var]) -> Result<Var> {
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::numeric(format!(
                "non-finite result in {}",
                op_name(&op)
            )));
        }
        let requires_grad = inputs.iter().any(|v| self.nodes[v.0].requires_grad);
        let value = Tensor::new(shape, data)?;
        Ok(self.push_node(value, op, requires_grad, None))
    }

    fn same_shape(&self, op: &'static str, a: Var, b: Var) -> Result<()> {
        let (sa, sb) = (self.value(a).shape(), self.value(b).shape());
        if sa != sb {
            return Err(Error::Dimension {
                op,
                left: sa.to_vec(),
                right: sb.to_vec(),
            });
        }
        Ok(())
    }

    fn zip_map(&mut self, a: Var, b: Var, op: Op, f: impl Fn(f64, f64) -> f64) -> Result<Var> {
        self.same_shape(op_name(&op), a, b)?;
        let (ta, tb) = (self.value(a), self.value(b));
        let data = ta
            .data()
            .iter()
            .zip(tb.data())
            .map(|(x, y)| f(*x, *y))
            .collect();
        let shape = ta.shape().to_vec();
        self.push(shape, data, op, &[a, b])
    }

    fn map(&mut self, a: Var, op: Op, f: impl Fn(f64) -> f64) -> Result<Var> {
        let ta = self.value(a);
        let data = ta.data().iter().map(|x| f(*x)).collect();
        let shape = ta.shape().to_vec();
        self.push(shape, data, op, &[a])
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip_map(a, b, Op::Add(a, b), |x, y| x + y)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip_map(a, b, Op::Sub(a, b), |x, y| x - y)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip_map(a, b, Op::Mul(a, b), |x, y| x * y)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (m, k) = dims2(self.value(a), "matmul")?;
        let (k2, n) = dims2(self.value(b), "matmul")?;
        if k != k2 {
            return Err(Error::Dimension {
                op: "matmul",
                left: vec![m, k],
                right: vec![k2, n],
            });
        }
        let data = matmul(self.value(a).data(), self.value(b).data(), m, k, n);
        self.push(vec![m, n], data, Op::MatMul(a, b), &[a, b])
    }

    /// `x[m,n] + bias[1,n]` broadcast over rows.
    pub fn add_bias(&mut self, x: Var, bias: Var) -> Result<Var> {
        let (m, n) = dims2(self.value(x), "add_bias")?;
        let bshape = self.value(bias).shape().to_vec();
        if bshape != [1, n] {
            return Err(Error::Dimension {
                op: "add_bias",
                left: vec![m, n],
                right: bshape,
            });
        }
        let (tx, tb) = (self.value(x).data(), self.value(bias).data());
        let data = tx
            .chunks(n)
            .flat_map(|row| row.iter().zip(tb).map(|(a, b)| a + b))
            .collect();
        self.push(vec![m, n], data, Op::AddBias(x, bias), &[x, bias])
    }

    pub fn sigmoid(&mut self, a: Var) -> Result<Var> {
        self.map(a, Op::Sigmoid(a), sigmoid)
    }

    /// `x·σ(x)`.
    pub fn silu(&mut self, a: Var) -> Result<Var> {
        self.map(a, Op::Silu(a), |x| x * sigmoid(x))
    }

    pub fn square(&mut self, a: Var) -> Result<Var> {
        self.map(a, Op::Square(a), |x| x * x)
    }

    pub fn sqrt(&mut self, a: Var) -> Result<Var> {
        if self.value(a).data().iter().any(|x| *x < 0.0) {
            return Err(Error::numeric("sqrt of negative value"));
        }
        self.map(a, Op::Sqrt(a), f64::sqrt)
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Result<Var> {
        self.map(a, Op::Scale(a, c), |x| c * x)
    }

    pub fn add_scalar(&mut self, a: Var, c: f64) -> Result<Var> {
        self.map(a, Op::AddScalar(a), |x| x + c)
    }

    /// `c - a`, computed as `(-a) + c`.
    pub fn rsub_scalar(&mut self, c: f64, a: Var) -> Result<Var> {
        let neg = self.scale(a, -1.0)?;
        self.add_scalar(neg, c)
    }

    /// `max(a, floor)`; the gradient is zero where the floor is active.
    pub fn clamp_min(&mut self, a: Var, floor: f64) -> Result<Var> {
        self.map(a, Op::ClampMin(a, floor), |x| x.max(floor))
    }

    /// Clamps element `i` into `[lo[i], hi[i]]`; clamped elements pass no gradient.
    pub fn clamp_between(&mut self, a: Var, lo: Vec<f64>, hi: Vec<f64>) -> Result<Var> {
        let value = self.value(a);
        if lo.len() != value.numel() || hi.len() != value.numel() {
            return Err(Error::Dimension {
                op: "clamp_between",
                left: value.shape().to_vec(),
                right: vec![lo.len(), hi.len()],
            });
        }
        let shape = value.shape().to_vec();
        let data = value
            .data()
            .iter()
            .zip(lo.iter().zip(&hi))
            .map(|(x, (l, h))| x.max(*l).min(*h))
            .collect();
        self.push(shape, data, Op::ClampBetween(a, lo, hi), &[a])
    }

    /// Mean of all elements as a `[1,1]` tensor.
    pub fn mean(&mut self, a: Var) -> Result<Var> {
        let t = self.value(a);
        let n = t.numel();
        if n == 0 {
            return Err(Error::contract("mean of empty tensor"));
        }
        let s = t.data().iter().fold(0.0, |acc, x| acc + x);
        self.push(vec![1, 1], vec![s / n as f64], Op::Mean(a), &[a])
    }

    pub fn sum(&mut self, a: Var) -> Result<Var> {
        let s = self.value(a).data().iter().fold(0.0, |acc, x| acc + x);
        self.push(vec![1, 1], vec![s], Op::Sum(a), &[a])
    }

    /// Product of all elements, multiplied left to right starting from 1.
    pub fn prod(&mut self, a: Var) -> Result<Var> {
        let p = self.value(a).data().iter().fold(1.0, |acc, x| acc * x);
        self.push(vec![1, 1], vec![p], Op::Prod(a), &[a])
    }

    /// Concatenates rank-2 tensors with equal row counts along columns.
    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        let first = *parts
            .first()
            .ok_or_else(|| Error::contract("concat of nothing"))?;
        let (m, _) = dims2(self.value(first), "concat_cols")?;
        let mut widths = Vec::with_capacity(parts.len());
        for &p in parts {
            let (r, c) = dims2(self.value(p), "concat_cols")?;
            if r != m {
                return Err(Error::Dimension {
                    op: "concat_cols",
                    left: self.value(first).shape().to_vec(),
                    right: self.value(p).shape().to_vec(),
                });
            }
            widths.push(c);
        }
        let total: usize = widths.iter().sum();
        let mut data = Vec::with_capacity(m * total);
        for i in 0..m {
            for (&p, &w) in parts.iter().zip(&widths) {
                data.extend_from_slice(&self.value(p).data()[i * w..(i + 1) * w]);
            }
        }
        self.push(vec![m, total], data, Op::ConcatCols(parts.to_vec()), parts)
    }

    /// Stacks rank-2 tensors with equal column counts.
    pub fn concat_rows(&mut self, parts: &[Var]) -> Result<Var> {
        let first = *parts
            .first()
            .ok_or_else(|| Error::contract("concat of nothing"))?;
        let (_, n) = dims2(self.value(first), "concat_rows")?;
        let mut rows = 0;
        let mut data = Vec::new();
        for &p in parts {
            let (r, c) = dims2(self.value(p), "concat_rows")?;
            if c != n {
                return Err(Error::Dimension {
                    op: "concat_rows",
                    left: self.value(first).shape().to_vec(),
                    right: self.value(p).shape().to_vec(),
                });
            }
            rows += r;
            data.extend_from_slice(self.value(p).data());
        }
        self.push(vec![rows, n], data, Op::ConcatRows(parts.to_vec()), parts)
    }

    /// Columns `start..end` of a rank-2 tensor.
    pub fn slice_cols(&mut self, a: Var, start: usize, end: usize) -> Result<Var> {
        let (m, n) = dims2(self.value(a), "slice_cols")?;
        if start >= end || end > n {
            return Err(Error::contract(format!(
                "column slice {start}..{end} of width {n}"
            )));
        }
        let w = end - start;
        let src = self.value(a).data();
        let data = (0..m)
            .flat_map(|i| src[i * n + start..i * n + end].iter().copied())
            .collect();
        self.push(vec![m, w], data, Op::SliceCols(a, start, end), &[a])
    }

    /// Rows `indices` of a rank-2 tensor, in the given order.
    pub fn gather_rows(&mut self, a: Var, indices: &[usize]) -> Result<Var> {
        let (m, n) = dims2(self.value(a), "gather_rows")?;
        if let Some(bad) = indices.iter().find(|&&i| i >= m) {
            return Err(Error::contract(format!(
                "row {bad} out of range for {m} rows"
            )));
        }
        let src = self.value(a).data();
        let data = indices
            .iter()
            .flat_map(|&i| src[i * n..(i + 1) * n].iter().copied())
            .collect();
        self.push(
            vec![indices.len(), n],
            data,
            Op::GatherRows(a, indices.to_vec()),
            &[a],
        )
    }

    /// Reverse sweep from a scalar `loss`, accumulating into leaf gradients.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        if self.value(loss).numel() != 1 {
            return Err(Error::contract(format!(
                "backward needs a scalar loss, got shape {:?}",
                self.value(loss).shape()
            )));
        }
        if !self.nodes[loss.0].requires_grad {
            return Err(Error::contract(
                "loss is detached: empty computation record",
            ));
        }
        let mut adj: Vec<Option<Vec<f64>>> = vec![None; loss.0 + 1];
        adj[loss.0] = Some(vec![1.0]);
        for idx in (0..=loss.0).rev() {
            let Some(g) = adj[idx].take() else { continue };
            if !self.nodes[idx].requires_grad {
                continue;
            }
            let op = self.nodes[idx].op.clone();
            if let Op::Leaf = op {
                self.nodes[idx].value.accumulate_grad(&g);
                continue;
            }
            self.propagate(idx, &op, &g, &mut adj);
        }
        Ok(())
    }

    fn propagate(&self, idx: usize, op: &Op, g: &[f64], adj: &mut [Option<Vec<f64>>]) {
        let out = &self.nodes[idx].value;
        let mut send = |v: Var, contrib: Vec<f64>| {
            if !self.nodes[v.0].requires_grad {
                return;
            }
            match &mut adj[v.0] {
                Some(acc) => acc.iter_mut().zip(&contrib).for_each(|(a, b)| *a += b),
                slot @ None => *slot = Some(contrib),
            }
        };
        let val = |v: Var| self.nodes[v.0].value.data();
        match op {
            Op::Leaf => {}
            Op::Add(a, b) => {
                send(*a, g.to_vec());
                send(*b, g.to_vec());
            }
            Op::Sub(a, b) => {
                send(*a, g.to_vec());
                send(*b, g.iter().map(|x| -x).collect());
            }
            Op::Mul(a, b) => {
                let (va, vb) = (val(*a), val(*b));
                send(*a, g.iter().zip(vb).map(|(g, y)| g * y).collect());
                send(*b, g.iter().zip(va).map(|(g, x)| g * x).collect());
            }
            Op::MatMul(a, b) => {
                let (m, k) = self.nodes[a.0].value.dims2().unwrap();
                let (_, n) = self.nodes[b.0].value.dims2().unwrap();
                if self.nodes[a.0].requires_grad {
                    send(*a, matmul_b_transposed(g, val(*b), m, k, n));
                }
                if self.nodes[b.0].requires_grad {
                    send(*b, matmul_a_transposed(val(*a), g, m, k, n));
                }
            }
            Op::AddBias(x, bias) => {
                let (_, n) = out.dims2().unwrap();
                send(*x, g.to_vec());
                let mut gb = vec![0.0; n];
                for row in g.chunks(n) {
                    gb.iter_mut().zip(row).for_each(|(a, b)| *a += b);
                }
                send(*bias, gb);
            }
            Op::Sigmoid(a) => {
                let y = out.data();
                send(
                    *a,
                    g.iter().zip(y).map(|(g, y)| g * y * (1.0 - y)).collect(),
                );
            }
            Op::Silu(a) => {
                let x = val(*a);
                send(
                    *a,
                    g.iter()
                        .zip(x)
                        .map(|(g, x)| {
                            let s = sigmoid(*x);
                            g * s * (1.0 + x * (1.0 - s))
                        })
                        .collect(),
                );
            }
            Op::Square(a) => {
                send(
                    *a,
                    g.iter().zip(val(*a)).map(|(g, x)| 2.0 * x * g).collect(),
                );
            }
            Op::Sqrt(a) => {
                send(
                    *a,
                    g.iter()
                        .zip(out.data())
                        .map(|(g, y)| g / (2.0 * y))
                        .collect(),
                );
            }
            Op::Mean(a) => {
                let n = self.nodes[a.0].value.numel();
                send(*a, vec![g[0] / n as f64; n]);
            }
            Op::Sum(a) => {
                let n = self.nodes[a.0].value.numel();
                send(*a, vec![g[0]; n]);
            }
            Op::Prod(a) => {
                // d/dx_i Π x = (Π_{j<i} x_j)(Π_{j>i} x_j), exact even with zeros.
                let x = val(*a);
                let n = x.len();
                let mut suffix = vec![1.0; n + 1];
                for i in (0..n).rev() {
                    suffix[i] = suffix[i + 1] * x[i];
                }
                let mut prefix = 1.0;
                let mut contrib = Vec::with_capacity(n);
                for i in 0..n {
                    contrib.push(g[0] * prefix * suffix[i + 1]);
                    prefix *= x[i];
                }
                send(*a, contrib);
            }
            Op::Scale(a, c) => send(*a, g.iter().map(|g| g * c).collect()),
            Op::AddScalar(a) => send(*a, g.to_vec()),
            Op::ClampMin(a, floor) => {
                send(
                    *a,
                    g.iter()
                        .zip(val(*a))
                        .map(|(g, x)| if x < floor { 0.0 } else { *g })
                        .collect(),
                );
            }
            Op::ClampBetween(a, lo, hi) => {
                send(
                    *a,
                    g.iter()
                        .zip(val(*a))
                        .zip(lo.iter().zip(hi))
                        .map(|((g, x), (l, h))| if x < l || x > h { 0.0 } else { *g })
                        .collect(),
                );
            }
            Op::ConcatCols(parts) => {
                let (m, total) = out.dims2().unwrap();
                let mut offset = 0;
                for &p in parts {
                    let (_, w) = self.nodes[p.0].value.dims2().unwrap();
                    let contrib = (0..m)
                        .flat_map(|i| {
                            g[i * total + offset..i * total + offset + w]
                                .iter()
                                .copied()
                        })
                        .collect();
                    send(p, contrib);
                    offset += w;
                }
            }
            Op::ConcatRows(parts) => {
                let mut offset = 0;
                for &p in parts {
                    let n = self.nodes[p.0].value.numel();
                    send(p, g[offset..offset + n].to_vec());
                    offset += n;
                }
            }
            Op::SliceCols(a, start, end) => {
                let (m, n) = self.nodes[a.0].value.dims2().unwrap();
                let w = end - start;
                let mut contrib = vec![0.0; m * n];
                for i in 0..m {
                    contrib[i * n + start..i * n + end].copy_from_slice(&g[i * w..(i + 1) * w]);
                }
                send(*a, contrib);
            }
            Op::GatherRows(a, indices) => {
                let (m, n) = self.nodes[a.0].value.dims2().unwrap();
                let mut contrib = vec![0.0; m * n];
                for (r, &i) in indices.iter().enumerate() {
                    contrib[i * n..(i + 1) * n]
                        .iter_mut()
                        .zip(&g[r * n..(r + 1) * n])
                        .for_each(|(a, b)| *a += b);
                }
                send(*a, contrib);
            }
        }
    }
}

fn op_name(op: &Op) -> &'static str {
    match op {
        Op::Leaf => "leaf",
        Op::Add(..) => "add",
        Op::Sub(..) => "sub",
        Op::Mul(..) => "mul",
        Op::MatMul(..) => "matmul",
        Op::AddBias(..) => "add_bias",
        Op::Sigmoid(_) => "sigmoid",
        Op::Silu(_) => "silu",
        Op::Square(_) => "square",
        Op::Sqrt(_) => "sqrt",
        Op::Mean(_) => "mean",
        Op::Sum(_) => "sum",
        Op::Prod(_) => "prod",
        Op::Scale(..) => "scale",
        Op::AddScalar(_) => "add_scalar",
        Op::ClampMin(..) => "clamp_min",
        Op::ClampBetween(..) => "clamp_between",
        Op::ConcatCols(_) => "concat_cols",
        Op::ConcatRows(_) => "concat_rows",
        Op::SliceCols(..) => "slice_cols",
        Op::GatherRows(..) => "gather_rows",
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn param(tape: &mut Tape, data: Vec<f64>) -> Var {
        tape.leaf(Tensor::row(data).with_requires_grad(true))
            .unwrap()
    }

    #[test]
    fn matmul_forward() {
        let mut tape = Tape::new();
        let a = tape
            .constant(Tensor::matrix(2, 2, vec![1.0, 2.0, 3.0, 4.0]).unwrap())
            .unwrap();
        let b = tape
            .constant(Tensor::matrix(2, 1, vec![1.0, 1.0]).unwrap())
            .unwrap();
        let c = tape.matmul(a, b).unwrap();
        assert_eq!(tape.value(c).shape(), &[2, 1]);
        assert_eq!(tape.value(c).data(), &[3.0, 7.0]);
    }

    #[test]
    fn identity_matmul_is_exact() {
        let mut tape = Tape::new();
        let data = vec![0.1, -2.5, 3.25, 1e-9, 7.0, -0.3];
        let a = tape
            .constant(Tensor::matrix(2, 3, data.clone()).unwrap())
            .unwrap();
        let mut eye = vec![0.0; 9];
        for i in 0..3 {
            eye[i * 3 + i] = 1.0;
        }
        let i = tape.constant(Tensor::matrix(3, 3, eye).unwrap()).unwrap();
        let c = tape.matmul(a, i).unwrap();
        assert_eq!(tape.value(c).data(), &data[..]);
    }

    #[test]
    fn sigmoid_at_zero() {
        let mut tape = Tape::new();
        let x = param(&mut tape, vec![0.0]);
        let y = tape.sigmoid(x).unwrap();
        assert_eq!(tape.scalar(y), 0.5);
        tape.backward(y).unwrap();
        assert_eq!(tape.grad(x).unwrap(), &[0.25]);
    }

    #[test]
    fn perfect_prediction_loss_is_zero() {
        let mut tape = Tape::new();
        let a = tape.constant(Tensor::row(vec![1.0, 2.0, 3.0])).unwrap();
        let b = tape.constant(Tensor::row(vec![1.0, 2.0, 3.0])).unwrap();
        let d = tape.sub(a, b).unwrap();
        let sq = tape.square(d).unwrap();
        let m = tape.mean(sq).unwrap();
        assert_eq!(tape.scalar(m), 0.0);
    }

    #[test]
    fn mean_square_gradient_and_accumulation() {
        let mut tape = Tape::new();
        let w = param(&mut tape, vec![3.0]);
        let sq = tape.square(w).unwrap();
        let loss = tape.mean(sq).unwrap();
        tape.backward(loss).unwrap();
        assert_eq!(tape.grad(w).unwrap(), &[6.0]);
        tape.backward(loss).unwrap();
        assert_eq!(tape.grad(w).unwrap(), &[12.0]);
    }

    #[test]
    fn shape_mismatch_names_both_shapes() {
        let mut tape = Tape::new();
        let a = tape.constant(Tensor::row(vec![1.0, 2.0])).unwrap();
        let b = tape.constant(Tensor::row(vec![1.0, 2.0, 3.0])).unwrap();
        let err = tape.add(a, b).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("[1, 2]") && msg.contains("[1, 3]"), "{msg}");
    }

    #[test]
    fn non_finite_input_rejected() {
        let mut tape = Tape::new();
        let err = tape.constant(Tensor::row(vec![f64::NAN])).unwrap_err();
        assert!(matches!(err, Error::Numeric(_)));
    }

    #[test]
    fn backward_contract_errors() {
        let mut tape = Tape::new();
        let w = param(&mut tape, vec![1.0, 2.0]);
        assert!(matches!(tape.backward(w), Err(Error::Contract(_))));
        let c = tape.constant(Tensor::scalar(1.0)).unwrap();
        assert!(matches!(tape.backward(c), Err(Error::Contract(_))));
    }

    #[test]
    fn prod_gradient_with_zero_factor() {
        let mut tape = Tape::new();
        let x = param(&mut tape, vec![2.0, 0.0, 5.0]);
        let p = tape.prod(x).unwrap();
        tape.backward(p).unwrap();
        assert_eq!(tape.grad(x).unwrap(), &[0.0, 10.0, 0.0]);
    }

    #[test]
    fn gather_rows_scatters_gradient() {
        let mut tape = Tape::new();
        let table = tape
            .leaf(
                Tensor::matrix(3, 2, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0])
                    .unwrap()
                    .with_requires_grad(true),
            )
            .unwrap();
        let rows = tape.gather_rows(table, &[2, 0, 2]).unwrap();
        assert_eq!(tape.value(rows).data(), &[5.0, 6.0, 1.0, 2.0, 5.0, 6.0]);
        let s = tape.sum(rows).unwrap();
        tape.backward(s).unwrap();
        assert_eq!(tape.grad(table).unwrap(), &[1.0, 1.0, 0.0, 0.0, 2.0, 2.0]);
    }

    #[test]
    fn forward_is_bitwise_deterministic() {
        let run = || {
            let mut tape = Tape::new();
            let a = tape
                .constant(Tensor::matrix(2, 3, vec![0.3, -1.1, 2.2, 0.7, 0.01, -5.0]).unwrap())
                .unwrap();
            let b = tape
                .constant(Tensor::matrix(3, 2, vec![1.5, 0.2, -0.4, 0.9, 3.3, -2.1]).unwrap())
                .unwrap();
            let c = tape.matmul(a, b).unwrap();
            let s = tape.silu(c).unwrap();
            tape.value(s)
                .data()
                .iter()
                .map(|v| v.to_bits())
                .collect::<Vec<_>>()
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn clamp_between_blocks_gradient_outside_bounds() {
        let mut tape = Tape::new();
        let x = tape
            .leaf(Tensor::row(vec![-1.0, 0.5, 3.0]).with_requires_grad(true))
            .unwrap();
        let c = tape
            .clamp_between(x, vec![0.0, 0.0, 0.0], vec![1.0, 1.0, 2.0])
            .unwrap();
        assert_eq!(tape.value(c).data(), &[0.0, 0.5, 2.0]);
        let s = tape.sum(c).unwrap();
        tape.backward(s).unwrap();
        assert_eq!(tape.grad(x).unwrap(), &[0.0, 1.0, 0.0]);
        assert!(tape.clamp_between(x, vec![0.0], vec![1.0]).is_err());
    }
}
