//! Tape-based reverse-mode differentiation over [`Tensor2`] values.
//!
//! Every operation appends a node holding its forward value and the rule needed
//! to push gradients back to its parents. Parents always precede children, so a
//! single reverse sweep over the node list is a valid topological order.

use super::tensor::{sigmoid, Tensor2};
use crate::error::{Error, Result};

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct NodeId(usize);

impl NodeId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Unary {
    Tanh,
    Sigmoid,
    Relu,
}

#[derive(Debug)]
enum Rule {
    Leaf,
    MatMul(NodeId, NodeId),
    AddRowBias(NodeId, NodeId),
    Add(NodeId, NodeId),
    Transpose(NodeId),
    Softmax(NodeId),
    ColMax(NodeId, Vec<usize>),
    ColMean(NodeId),
    ColSum(NodeId),
    Unary(NodeId, Unary),
    Hadamard(NodeId, NodeId),
    ScaleRows(NodeId, NodeId),
    SliceCols(NodeId, usize),
    ConcatCols(Vec<NodeId>),
    Ln(NodeId),
    SoftmaxCrossEntropy { logits: NodeId, label: usize, probs: Vec<f64> },
    NormalizedNll { probs: NodeId, label: usize },
}

#[derive(Debug)]
struct Node {
    value: Tensor2,
    rule: Rule,
}

#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Gradients of a scalar loss with respect to every node on the tape.
#[derive(Debug, Clone)]
pub struct Gradients {
    grads: Vec<Tensor2>,
}

impl Gradients {
    pub fn get(&self, id: NodeId) -> &Tensor2 {
        &self.grads[id.0]
    }
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

    pub fn value(&self, id: NodeId) -> &Tensor2 {
        &self.nodes[id.0].value
    }

    fn push(&mut self, value: Tensor2, rule: Rule) -> NodeId {
        self.nodes.push(Node { value, rule });
        NodeId(self.nodes.len() - 1)
    }

    /// Registers an input or parameter.
    pub fn leaf(&mut self, value: Tensor2) -> NodeId {
        self.push(value, Rule::Leaf)
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let v = self.value(a).matmul(self.value(b))?;
        Ok(self.push(v, Rule::MatMul(a, b)))
    }

    /// `x + 1·bias` where `bias` is a single row broadcast over the rows of `x`.
    pub fn add_row_bias(&mut self, x: NodeId, bias: NodeId) -> Result<NodeId> {
        let (xv, bv) = (self.value(x), self.value(bias));
        if bv.rows() != 1 || bv.cols() != xv.cols() {
            return Err(Error::Shape {
                op: "add_row_bias",
                left: xv.shape(),
                right: bv.shape(),
            });
        }
        let mut out = xv.clone();
        for r in 0..out.rows() {
            for (o, b) in out.row_mut(r).iter_mut().zip(bv.data()) {
                *o += b;
            }
        }
        Ok(self.push(out, Rule::AddRowBias(x, bias)))
    }

    /// `x·W + b`.
    pub fn linear(&mut self, x: NodeId, weight: NodeId, bias: NodeId) -> Result<NodeId> {
        let xw = self.matmul(x, weight)?;
        self.add_row_bias(xw, bias)
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let v = self.value(a).zip_map(self.value(b), "add", |x, y| x + y)?;
        Ok(self.push(v, Rule::Add(a, b)))
    }

    pub fn transpose(&mut self, x: NodeId) -> NodeId {
        let v = self.value(x).transpose();
        self.push(v, Rule::Transpose(x))
    }

    pub fn rowwise_softmax(&mut self, x: NodeId) -> NodeId {
        let v = self.value(x).rowwise_softmax();
        self.push(v, Rule::Softmax(x))
    }

    /// Column-wise maximum; also returns the selected row per column.
    pub fn colwise_max(&mut self, x: NodeId) -> Result<(NodeId, Vec<usize>)> {
        let (v, arg) = self.value(x).colwise_max()?;
        let id = self.push(v, Rule::ColMax(x, arg.clone()));
        Ok((id, arg))
    }

    pub fn colwise_mean(&mut self, x: NodeId) -> Result<NodeId> {
        let v = self.value(x).colwise_mean()?;
        Ok(self.push(v, Rule::ColMean(x)))
    }

    pub fn colwise_sum(&mut self, x: NodeId) -> Result<NodeId> {
        if self.value(x).rows() == 0 {
            return Err(Error::EmptyBag("colwise_sum"));
        }
        let v = self.value(x).colwise_sum();
        Ok(self.push(v, Rule::ColSum(x)))
    }

    pub fn unary(&mut self, x: NodeId, op: Unary) -> NodeId {
        let v = match op {
            Unary::Tanh => self.value(x).map(f64::tanh),
            Unary::Sigmoid => self.value(x).map(sigmoid),
            Unary::Relu => self.value(x).map(|v| v.max(0.0)),
        };
        self.push(v, Rule::Unary(x, op))
    }

    pub fn tanh(&mut self, x: NodeId) -> NodeId {
        self.unary(x, Unary::Tanh)
    }

    pub fn sigmoid(&mut self, x: NodeId) -> NodeId {
        self.unary(x, Unary::Sigmoid)
    }

    pub fn relu(&mut self, x: NodeId) -> NodeId {
        self.unary(x, Unary::Relu)
    }

    pub fn hadamard(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let v = self.value(a).zip_map(self.value(b), "hadamard", |x, y| x * y)?;
        Ok(self.push(v, Rule::Hadamard(a, b)))
    }

    /// Multiplies row `i` of `x` by `scale[i]`, where `scale` is a column vector.
    pub fn scale_rows(&mut self, x: NodeId, scale: NodeId) -> Result<NodeId> {
        let (xv, sv) = (self.value(x), self.value(scale));
        if sv.cols() != 1 || sv.rows() != xv.rows() {
            return Err(Error::Shape {
                op: "scale_rows",
                left: xv.shape(),
                right: sv.shape(),
            });
        }
        let mut out = xv.clone();
        for r in 0..out.rows() {
            let s = sv.data()[r];
            for v in out.row_mut(r) {
                *v *= s;
            }
        }
        Ok(self.push(out, Rule::ScaleRows(x, scale)))
    }

    pub fn slice_cols(&mut self, x: NodeId, start: usize, width: usize) -> Result<NodeId> {
        let v = self.value(x).slice_cols(start, width)?;
        Ok(self.push(v, Rule::SliceCols(x, start)))
    }

    pub fn concat_cols(&mut self, parts: &[NodeId]) -> Result<NodeId> {
        let values: Vec<&Tensor2> = parts.iter().map(|&p| self.value(p)).collect();
        let v = Tensor2::concat_cols(&values)?;
        Ok(self.push(v, Rule::ConcatCols(parts.to_vec())))
    }

    /// Elementwise natural log, floored at the smallest positive normal.
    pub fn ln(&mut self, x: NodeId) -> NodeId {
        let v = self.value(x).map(|v| v.max(f64::MIN_POSITIVE).ln());
        self.push(v, Rule::Ln(x))
    }

    /// `−log softmax(logits)[label]` for a 1×C logit row.
    pub fn softmax_cross_entropy(&mut self, logits: NodeId, label: usize) -> Result<NodeId> {
        let lv = self.value(logits);
        if lv.rows() != 1 {
            return Err(Error::Shape {
                op: "softmax_cross_entropy",
                left: lv.shape(),
                right: (1, lv.cols()),
            });
        }
        if label >= lv.cols() {
            return Err(Error::LabelOutOfRange {
                label,
                classes: lv.cols(),
            });
        }
        let row = lv.data();
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let log_z = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
        let loss = log_z - row[label];
        let probs = row.iter().map(|v| (v - log_z).exp()).collect();
        Ok(self.push(
            Tensor2::scalar(loss),
            Rule::SoftmaxCrossEntropy {
                logits,
                label,
                probs,
            },
        ))
    }

    /// `−ln(p[label] / Σp)` for a 1×C row of non-negative scores.
    pub fn normalized_nll(&mut self, probs: NodeId, label: usize) -> Result<NodeId> {
        let pv = self.value(probs);
        if pv.rows() != 1 {
            return Err(Error::Shape {
                op: "normalized_nll",
                left: pv.shape(),
                right: (1, pv.cols()),
            });
        }
        if label >= pv.cols() {
            return Err(Error::LabelOutOfRange {
                label,
                classes: pv.cols(),
            });
        }
        let total = pv.sum();
        let p = pv.data()[label].max(f64::MIN_POSITIVE);
        let loss = total.ln() - p.ln();
        Ok(self.push(Tensor2::scalar(loss), Rule::NormalizedNll { probs, label }))
    }

    /// Reverse sweep from a scalar `loss`. Nodes that do not reach the loss get
    /// zero gradients of their own shape.
    pub fn backward(&self, loss: NodeId) -> Result<Gradients> {
        let lv = self.value(loss);
        if lv.shape() != (1, 1) {
            return Err(Error::NonScalarLoss {
                rows: lv.rows(),
                cols: lv.cols(),
            });
        }
        let mut grads: Vec<Option<Tensor2>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(Tensor2::scalar(1.0));

        for idx in (0..=loss.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            let node = &self.nodes[idx];
            self.propagate(node, &g, &mut grads)?;
            grads[idx] = Some(g);
        }

        let grads = grads
            .into_iter()
            .zip(&self.nodes)
            .map(|(g, n)| g.unwrap_or_else(|| Tensor2::zeros(n.value.rows(), n.value.cols())))
            .collect();
        Ok(Gradients { grads })
    }

    fn propagate(&self, node: &Node, g: &Tensor2, grads: &mut [Option<Tensor2>]) -> Result<()> {
        let mut acc = |id: NodeId, delta: Tensor2| match &mut grads[id.0] {
            Some(existing) => existing.add_assign(&delta),
            slot @ None => *slot = Some(delta),
        };
        match &node.rule {
            Rule::Leaf => {}
            Rule::MatMul(a, b) => {
                let (av, bv) = (self.value(*a), self.value(*b));
                acc(*a, g.matmul_t(bv)?);
                acc(*b, av.t_matmul(g)?);
            }
            Rule::AddRowBias(x, bias) => {
                acc(*x, g.clone());
                acc(*bias, g.colwise_sum());
            }
            Rule::Add(a, b) => {
                acc(*a, g.clone());
                acc(*b, g.clone());
            }
            Rule::Transpose(x) => acc(*x, g.transpose()),
            Rule::Softmax(x) => {
                let y = &node.value;
                let mut dx = Tensor2::zeros(y.rows(), y.cols());
                for r in 0..y.rows() {
                    let (yr, gr) = (y.row(r), g.row(r));
                    let dot: f64 = yr.iter().zip(gr).map(|(a, b)| a * b).sum();
                    for (c, d) in dx.row_mut(r).iter_mut().enumerate() {
                        *d = yr[c] * (gr[c] - dot);
                    }
                }
                acc(*x, dx);
            }
            Rule::ColMax(x, arg) => {
                let xv = self.value(*x);
                let mut dx = Tensor2::zeros(xv.rows(), xv.cols());
                for (c, &r) in arg.iter().enumerate() {
                    dx.set(r, c, g.data()[c]);
                }
                acc(*x, dx);
            }
            Rule::ColMean(x) | Rule::ColSum(x) => {
                let xv = self.value(*x);
                let scale = match node.rule {
                    Rule::ColMean(_) => 1.0 / xv.rows() as f64,
                    _ => 1.0,
                };
                let mut dx = Tensor2::zeros(xv.rows(), xv.cols());
                for r in 0..xv.rows() {
                    for (d, gv) in dx.row_mut(r).iter_mut().zip(g.data()) {
                        *d = gv * scale;
                    }
                }
                acc(*x, dx);
            }
            Rule::Unary(x, op) => {
                let y = &node.value;
                let local = match op {
                    Unary::Tanh => y.map(|t| 1.0 - t * t),
                    Unary::Sigmoid => y.map(|s| s * (1.0 - s)),
                    Unary::Relu => self.value(*x).map(|v| if v > 0.0 { 1.0 } else { 0.0 }),
                };
                acc(*x, local.zip_map(g, "unary", |l, gv| l * gv)?);
            }
            Rule::Hadamard(a, b) => {
                let (av, bv) = (self.value(*a), self.value(*b));
                acc(*a, g.zip_map(bv, "hadamard", |gv, v| gv * v)?);
                acc(*b, g.zip_map(av, "hadamard", |gv, v| gv * v)?);
            }
            Rule::ScaleRows(x, s) => {
                let (xv, sv) = (self.value(*x), self.value(*s));
                let mut dx = g.clone();
                let mut ds = Tensor2::zeros(sv.rows(), 1);
                for r in 0..xv.rows() {
                    let scale = sv.data()[r];
                    let dot: f64 = g.row(r).iter().zip(xv.row(r)).map(|(a, b)| a * b).sum();
                    ds.data_mut()[r] = dot;
                    for v in dx.row_mut(r) {
                        *v *= scale;
                    }
                }
                acc(*x, dx);
                acc(*s, ds);
            }
            Rule::SliceCols(x, start) => {
                let xv = self.value(*x);
                let mut dx = Tensor2::zeros(xv.rows(), xv.cols());
                for r in 0..xv.rows() {
                    dx.row_mut(r)[*start..*start + g.cols()].copy_from_slice(g.row(r));
                }
                acc(*x, dx);
            }
            Rule::ConcatCols(parts) => {
                let mut offset = 0;
                for &p in parts {
                    let width = self.value(p).cols();
                    acc(p, g.slice_cols(offset, width)?);
                    offset += width;
                }
            }
            Rule::Ln(x) => {
                let xv = self.value(*x);
                acc(*x, xv.zip_map(g, "ln", |v, gv| gv / v.max(f64::MIN_POSITIVE))?);
            }
            Rule::SoftmaxCrossEntropy {
                logits,
                label,
                probs,
            } => {
                let scale = g.data()[0];
                let mut d = probs.clone();
                d[*label] -= 1.0;
                acc(*logits, Tensor2::row_vector(&d).map(|v| v * scale));
            }
            Rule::NormalizedNll { probs, label } => {
                let scale = g.data()[0];
                let pv = self.value(*probs);
                let inv_total = 1.0 / pv.sum();
                let mut d = vec![inv_total; pv.cols()];
                d[*label] -= 1.0 / pv.data()[*label].max(f64::MIN_POSITIVE);
                acc(*probs, Tensor2::row_vector(&d).map(|v| v * scale));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn square_gradient() {
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor2::scalar(3.0));
        let y = tape.hadamard(x, x).unwrap();
        let grads = tape.backward(y).unwrap();
        assert_eq!(grads.get(x).data(), &[6.0]);
    }

    #[test]
    fn unused_parameter_has_zero_gradient() {
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor2::scalar(2.0));
        let unused = tape.leaf(Tensor2::from_rows(&[&[1.0, 2.0], &[3.0, 4.0]]));
        let y = tape.hadamard(x, x).unwrap();
        let grads = tape.backward(y).unwrap();
        assert_eq!(grads.get(unused), &Tensor2::zeros(2, 2));
    }

    #[test]
    fn non_scalar_loss_rejected() {
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor2::zeros(1, 2));
        assert!(matches!(tape.backward(x), Err(Error::NonScalarLoss { .. })));
    }

    #[test]
    fn elementwise_values() {
        let mut tape = Tape::new();
        let z = tape.leaf(Tensor2::scalar(0.0));
        let neg = tape.leaf(Tensor2::scalar(-1.0));
        let t = tape.tanh(z);
        let s = tape.sigmoid(z);
        let r = tape.relu(neg);
        assert_eq!(tape.value(t).data(), &[0.0]);
        assert_eq!(tape.value(s).data(), &[0.5]);
        assert_eq!(tape.value(r).data(), &[0.0]);

        let a = tape.leaf(Tensor2::row_vector(&[1.0, 2.0]));
        let b = tape.leaf(Tensor2::row_vector(&[3.0, 4.0]));
        let h = tape.hadamard(a, b).unwrap();
        assert_eq!(tape.value(h).data(), &[3.0, 8.0]);
        let c = tape.leaf(Tensor2::row_vector(&[1.0, 2.0, 3.0]));
        assert!(tape.hadamard(a, c).is_err());
    }

    #[test]
    fn cross_entropy_values() {
        let mut tape = Tape::new();
        let l = tape.leaf(Tensor2::row_vector(&[0.0, 0.0]));
        let loss = tape.softmax_cross_entropy(l, 0).unwrap();
        assert!((tape.value(loss).data()[0] - std::f64::consts::LN_2).abs() < 1e-15);

        let l = tape.leaf(Tensor2::row_vector(&[10.0, -10.0]));
        let loss = tape.softmax_cross_entropy(l, 0).unwrap();
        assert!(tape.value(loss).data()[0] < 1e-8);

        assert!(matches!(
            tape.softmax_cross_entropy(l, 2),
            Err(Error::LabelOutOfRange { label: 2, classes: 2 })
        ));
    }

    #[test]
    fn colmax_routes_only_to_argmax() {
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor2::from_rows(&[&[1.0, 5.0], &[3.0, 2.0], &[0.0, 1.0]]));
        let (m, _) = tape.colwise_max(x).unwrap();
        let w = tape.leaf(Tensor2::column_vector(&[2.0, -1.0]));
        let y = tape.matmul(m, w).unwrap();
        let g = tape.backward(y).unwrap();
        assert_eq!(
            g.get(x),
            &Tensor2::from_rows(&[&[0.0, -1.0], &[2.0, 0.0], &[0.0, 0.0]])
        );
    }
}
