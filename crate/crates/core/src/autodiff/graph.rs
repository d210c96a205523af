//! Per-sample computation graph with reverse-mode differentiation.
//!
//! Nodes are appended in evaluation order, so the insertion order is already a
//! topological order and `backward` walks the node list in reverse. Every node
//! caches its forward value; values are vectors, and scalars are length-1
//! vectors.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use crate::embedding::EmbeddingTable;
use crate::error::{Error, Result};
use crate::geometry::{self, dot, norm, raw, ATANH_CLAMP};

/// Clamp applied to the gold-class probability inside cross-entropy.
pub const PROB_CLAMP: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeId(usize);

impl NodeId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Euclidean (feed-forward) parameter tensors.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum DenseParam {
    HiddenWeight,
    HiddenBias,
    OutputWeight,
    OutputBias,
}

/// A borrowed affine layer `y = W x + b` with `W` stored row-major (`rows x cols`).
#[derive(Clone, Copy, Debug)]
pub struct DenseLayer<'p> {
    pub weight: &'p [f64],
    pub bias: &'p [f64],
    pub rows: usize,
    pub cols: usize,
    pub weight_key: DenseParam,
    pub bias_key: DenseParam,
}

#[derive(Clone, Debug)]
enum Op<'p> {
    Word(usize),
    Constant,
    Affine { x: NodeId, scale: f64 },
    Add(NodeId, NodeId),
    Sub(NodeId, NodeId),
    Mul(NodeId, NodeId),
    Abs(NodeId),
    Relu(NodeId),
    Concat(Vec<NodeId>),
    Dot(NodeId, NodeId),
    Norm(NodeId),
    SqNorm(NodeId),
    Cosine(NodeId, NodeId),
    MobiusAdd { a: NodeId, b: NodeId, c: f64 },
    MobiusScale { x: NodeId, r: f64, c: f64 },
    Distance { a: NodeId, b: NodeId, c: f64 },
    LogSumExp(Vec<NodeId>),
    Dense { x: NodeId, layer: DenseLayer<'p> },
    SoftmaxXent { logits: NodeId, gold: usize },
}

#[derive(Clone, Debug)]
struct Node<'p> {
    op: Op<'p>,
    value: Vec<f64>,
}

/// Gradients of a scalar loss, split by the geometry their parameters live in.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct GradientRecord {
    /// Word id to Euclidean gradient of its embedding.
    pub hyperbolic: BTreeMap<usize, Vec<f64>>,
    pub euclidean: BTreeMap<DenseParam, Vec<f64>>,
}

impl GradientRecord {
    pub fn is_finite(&self) -> bool {
        self.hyperbolic
            .values()
            .chain(self.euclidean.values())
            .all(|g| g.iter().all(|v| v.is_finite()))
    }
}

#[derive(Clone, Debug)]
pub struct Graph<'p> {
    nodes: Vec<Node<'p>>,
    words: HashMap<usize, NodeId>,
    kink_margin: f64,
}

impl Default for Graph<'_> {
    fn default() -> Self {
        Self::new()
    }
}

impl<'p> Graph<'p> {
    pub fn new() -> Self {
        Self {
            nodes: Vec::new(),
            words: HashMap::new(),
            kink_margin: f64::INFINITY,
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, id: NodeId) -> &[f64] {
        &self.nodes[id.0].value
    }

    /// Value of a length-1 node.
    pub fn scalar_value(&self, id: NodeId) -> f64 {
        self.nodes[id.0].value[0]
    }

    /// Smallest distance of any recorded argument from a non-differentiable
    /// point (ReLU/abs kinks, zero norms, clamp boundaries).
    pub fn kink_margin(&self) -> f64 {
        self.kink_margin
    }

    fn push(&mut self, op: Op<'p>, value: Vec<f64>) -> NodeId {
        self.nodes.push(Node { op, value });
        NodeId(self.nodes.len() - 1)
    }

    fn note_kink(&mut self, margin: f64) {
        if margin < self.kink_margin {
            self.kink_margin = margin;
        }
    }

    fn same_len(&self, a: NodeId, b: NodeId) -> Result<usize> {
        let (la, lb) = (self.value(a).len(), self.value(b).len());
        if la != lb {
            return Err(Error::DimensionMismatch {
                expected: la,
                found: lb,
            });
        }
        Ok(la)
    }

    /// Leaf for a word embedding. Repeated ids share one leaf.
    pub fn word(&mut self, id: usize, table: &EmbeddingTable) -> Result<NodeId> {
        if let Some(&n) = self.words.get(&id) {
            return Ok(n);
        }
        let value = table.get(id)?.to_vec();
        let n = self.push(Op::Word(id), value);
        self.words.insert(id, n);
        Ok(n)
    }

    pub fn constant(&mut self, value: Vec<f64>) -> NodeId {
        self.push(Op::Constant, value)
    }

    pub fn scalar(&mut self, value: f64) -> NodeId {
        self.constant(vec![value])
    }

    /// Element-wise `scale * x + shift`.
    pub fn affine(&mut self, x: NodeId, scale: f64, shift: f64) -> NodeId {
        let value = self.value(x).iter().map(|v| scale * v + shift).collect();
        self.push(Op::Affine { x, scale }, value)
    }

    pub fn neg(&mut self, x: NodeId) -> NodeId {
        self.affine(x, -1.0, 0.0)
    }

    pub fn scale(&mut self, x: NodeId, k: f64) -> NodeId {
        self.affine(x, k, 0.0)
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.same_len(a, b)?;
        let value = zip_map(self.value(a), self.value(b), |x, y| x + y);
        Ok(self.push(Op::Add(a, b), value))
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.same_len(a, b)?;
        let value = zip_map(self.value(a), self.value(b), |x, y| x - y);
        Ok(self.push(Op::Sub(a, b), value))
    }

    /// Hadamard product.
    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.same_len(a, b)?;
        let value = zip_map(self.value(a), self.value(b), |x, y| x * y);
        Ok(self.push(Op::Mul(a, b), value))
    }

    /// Sum of equal-length nodes, folded left to right.
    pub fn sum(&mut self, items: &[NodeId]) -> Result<NodeId> {
        let (&first, rest) = items.split_first().ok_or(Error::EmptySequence)?;
        let mut acc = first;
        for &n in rest {
            acc = self.add(acc, n)?;
        }
        Ok(acc)
    }

    pub fn abs(&mut self, x: NodeId) -> NodeId {
        let margin = self.value(x).iter().fold(f64::INFINITY, |m, v| m.min(v.abs()));
        self.note_kink(margin);
        let value = self.value(x).iter().map(|v| v.abs()).collect();
        self.push(Op::Abs(x), value)
    }

    /// Element-wise `max(0, x)`; also serves as the scalar hinge.
    pub fn relu(&mut self, x: NodeId) -> NodeId {
        let margin = self.value(x).iter().fold(f64::INFINITY, |m, v| m.min(v.abs()));
        self.note_kink(margin);
        let value = self.value(x).iter().map(|v| v.max(0.0)).collect();
        self.push(Op::Relu(x), value)
    }

    pub fn concat(&mut self, parts: &[NodeId]) -> NodeId {
        let value = parts.iter().flat_map(|&p| self.value(p).iter().copied()).collect();
        self.push(Op::Concat(parts.to_vec()), value)
    }

    pub fn dot(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.same_len(a, b)?;
        let value = vec![dot(self.value(a), self.value(b))];
        Ok(self.push(Op::Dot(a, b), value))
    }

    pub fn norm(&mut self, x: NodeId) -> NodeId {
        let n = norm(self.value(x));
        self.note_kink(n);
        self.push(Op::Norm(x), vec![n])
    }

    pub fn sq_norm(&mut self, x: NodeId) -> NodeId {
        let value = vec![geometry::sq_norm(self.value(x))];
        self.push(Op::SqNorm(x), value)
    }

    pub fn cosine(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.same_len(a, b)?;
        let (va, vb) = (self.value(a), self.value(b));
        let margin = norm(va).min(norm(vb));
        let value = vec![raw::cosine(va, vb)];
        self.note_kink(margin);
        Ok(self.push(Op::Cosine(a, b), value))
    }

    pub fn mobius_add(&mut self, a: NodeId, b: NodeId, c: f64) -> Result<NodeId> {
        self.same_len(a, b)?;
        let value = raw::mobius_add(c, self.value(a), self.value(b));
        Ok(self.push(Op::MobiusAdd { a, b, c }, value))
    }

    /// `r ⊗ x` for a constant factor `r`.
    pub fn mobius_scale(&mut self, x: NodeId, r: f64, c: f64) -> NodeId {
        if c > 0.0 {
            let margin = ATANH_CLAMP - c.sqrt() * norm(self.value(x));
            self.note_kink(margin);
        }
        let value = raw::mobius_scalar_mul(c, r, self.value(x));
        self.push(Op::MobiusScale { x, r, c }, value)
    }

    pub fn distance(&mut self, a: NodeId, b: NodeId, c: f64) -> Result<NodeId> {
        self.same_len(a, b)?;
        let (va, vb) = (self.value(a), self.value(b));
        let margin = if c == 0.0 {
            norm(&zip_map(va, vb, |x, y| x - y))
        } else {
            let n = norm(&raw::mobius_add(c, &geometry::neg(va), vb));
            n.min(ATANH_CLAMP - c.sqrt() * n)
        };
        let value = vec![raw::distance(c, va, vb)];
        self.note_kink(margin);
        Ok(self.push(Op::Distance { a, b, c }, value))
    }

    /// `log(sum(exp(x_i)))` over scalar nodes.
    pub fn log_sum_exp(&mut self, items: &[NodeId]) -> Result<NodeId> {
        if items.is_empty() {
            return Err(Error::EmptySequence);
        }
        let xs: Vec<f64> = items.iter().map(|&n| self.scalar_value(n)).collect();
        let value = vec![log_sum_exp(&xs)];
        Ok(self.push(Op::LogSumExp(items.to_vec()), value))
    }

    pub fn dense(&mut self, x: NodeId, layer: DenseLayer<'p>) -> Result<NodeId> {
        let input = self.value(x);
        if input.len() != layer.cols || layer.weight.len() != layer.rows * layer.cols || layer.bias.len() != layer.rows
        {
            return Err(Error::Shape(format!(
                "dense layer {}x{} applied to input of length {}",
                layer.rows,
                layer.cols,
                input.len()
            )));
        }
        let value = dense_forward(&layer, input);
        Ok(self.push(Op::Dense { x, layer }, value))
    }

    /// Softmax followed by `-log p[gold]` with `p[gold]` clamped to `PROB_CLAMP`.
    pub fn softmax_cross_entropy(&mut self, logits: NodeId, gold: usize) -> Result<NodeId> {
        let l = self.value(logits);
        if gold >= l.len() {
            return Err(Error::InvalidArgument(format!(
                "gold class {gold} out of range for {} classes",
                l.len()
            )));
        }
        let p = softmax(l);
        // -ln p[gold] = ln(1 + sum over other classes of exp(l_j - l_gold)),
        // which stays accurate when p[gold] is close to 1
        let value = if p[gold] >= PROB_CLAMP {
            let others: f64 = l
                .iter()
                .enumerate()
                .filter(|&(j, _)| j != gold)
                .map(|(_, z)| (z - l[gold]).exp())
                .sum();
            others.ln_1p()
        } else {
            -PROB_CLAMP.ln()
        };
        self.note_kink(p[gold] - PROB_CLAMP);
        let value = vec![value];
        Ok(self.push(Op::SoftmaxXent { logits, gold }, value))
    }

    /// Gradients of the scalar `loss` node with respect to every parameter leaf.
    pub fn backward(&self, loss: NodeId) -> Result<GradientRecord> {
        let lv = self.value(loss);
        if lv.len() != 1 {
            return Err(Error::NonScalarLoss(lv.len()));
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; loss.0 + 1];
        grads[loss.0] = Some(vec![1.0]);
        let mut record = GradientRecord::default();

        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            match &node.op {
                Op::Word(id) => {
                    record.hyperbolic.insert(*id, g);
                }
                Op::Constant => {}
                Op::Affine { x, scale } => {
                    accumulate(&mut grads, *x, g.iter().map(|v| v * scale));
                }
                Op::Add(a, b) => {
                    accumulate(&mut grads, *a, g.iter().copied());
                    accumulate(&mut grads, *b, g.iter().copied());
                }
                Op::Sub(a, b) => {
                    accumulate(&mut grads, *a, g.iter().copied());
                    accumulate(&mut grads, *b, g.iter().map(|v| -v));
                }
                Op::Mul(a, b) => {
                    let (va, vb) = (self.value(*a), self.value(*b));
                    accumulate(&mut grads, *a, g.iter().zip(vb).map(|(g, y)| g * y));
                    accumulate(&mut grads, *b, g.iter().zip(va).map(|(g, x)| g * x));
                }
                Op::Abs(x) => {
                    let vx = self.value(*x);
                    accumulate(&mut grads, *x, g.iter().zip(vx).map(|(g, v)| g * sign(*v)));
                }
                Op::Relu(x) => {
                    let vx = self.value(*x);
                    accumulate(
                        &mut grads,
                        *x,
                        g.iter().zip(vx).map(|(g, v)| if *v > 0.0 { *g } else { 0.0 }),
                    );
                }
                Op::Concat(parts) => {
                    let mut offset = 0;
                    for &p in parts {
                        let n = self.value(p).len();
                        accumulate(&mut grads, p, g[offset..offset + n].iter().copied());
                        offset += n;
                    }
                }
                Op::Dot(a, b) => {
                    let (va, vb) = (self.value(*a), self.value(*b));
                    accumulate(&mut grads, *a, vb.iter().map(|y| g[0] * y));
                    accumulate(&mut grads, *b, va.iter().map(|x| g[0] * x));
                }
                Op::Norm(x) => {
                    let n = node.value[0];
                    if n > 0.0 {
                        let vx = self.value(*x);
                        accumulate(&mut grads, *x, vx.iter().map(|v| g[0] * v / n));
                    }
                }
                Op::SqNorm(x) => {
                    let vx = self.value(*x);
                    accumulate(&mut grads, *x, vx.iter().map(|v| 2.0 * g[0] * v));
                }
                Op::Cosine(a, b) => {
                    let (va, vb) = (self.value(*a), self.value(*b));
                    let (na, nb) = (norm(va), norm(vb));
                    if na > 0.0 && nb > 0.0 {
                        let cos = node.value[0];
                        let ga = zip_map(vb, va, |y, x| g[0] * (y / (na * nb) - cos * x / (na * na)));
                        let gb = zip_map(va, vb, |x, y| g[0] * (x / (na * nb) - cos * y / (nb * nb)));
                        accumulate(&mut grads, *a, ga.into_iter());
                        accumulate(&mut grads, *b, gb.into_iter());
                    }
                }
                Op::MobiusAdd { a, b, c } => {
                    let (ga, gb) = mobius_add_vjp(*c, self.value(*a), self.value(*b), &g);
                    accumulate(&mut grads, *a, ga.into_iter());
                    accumulate(&mut grads, *b, gb.into_iter());
                }
                Op::MobiusScale { x, r, c } => {
                    let gx = mobius_scale_vjp(*c, *r, self.value(*x), &g);
                    accumulate(&mut grads, *x, gx.into_iter());
                }
                Op::Distance { a, b, c } => {
                    let (ga, gb) = distance_vjp(*c, self.value(*a), self.value(*b), g[0]);
                    accumulate(&mut grads, *a, ga.into_iter());
                    accumulate(&mut grads, *b, gb.into_iter());
                }
                Op::LogSumExp(items) => {
                    let lse = node.value[0];
                    for &n in items {
                        let w = (self.scalar_value(n) - lse).exp();
                        accumulate(&mut grads, n, std::iter::once(g[0] * w));
                    }
                }
                Op::Dense { x, layer } => {
                    let vx = self.value(*x);
                    let gw = record
                        .euclidean
                        .entry(layer.weight_key)
                        .or_insert_with(|| vec![0.0; layer.rows * layer.cols]);
                    for (r, gr) in g.iter().enumerate() {
                        if *gr != 0.0 {
                            let row = &mut gw[r * layer.cols..(r + 1) * layer.cols];
                            for (w, xv) in row.iter_mut().zip(vx) {
                                *w += gr * xv;
                            }
                        }
                    }
                    let gb = record
                        .euclidean
                        .entry(layer.bias_key)
                        .or_insert_with(|| vec![0.0; layer.rows]);
                    for (b, gr) in gb.iter_mut().zip(&g) {
                        *b += gr;
                    }
                    let mut gx = vec![0.0; layer.cols];
                    for (r, gr) in g.iter().enumerate() {
                        if *gr != 0.0 {
                            let row = &layer.weight[r * layer.cols..(r + 1) * layer.cols];
                            for (acc, w) in gx.iter_mut().zip(row) {
                                *acc += gr * w;
                            }
                        }
                    }
                    accumulate(&mut grads, *x, gx.into_iter());
                }
                Op::SoftmaxXent { logits, gold } => {
                    let p = softmax(self.value(*logits));
                    if p[*gold] >= PROB_CLAMP {
                        let gl = p
                            .iter()
                            .enumerate()
                            .map(|(k, pk)| g[0] * (pk - if k == *gold { 1.0 } else { 0.0 }));
                        accumulate(&mut grads, *logits, gl);
                    }
                }
            }
        }
        Ok(record)
    }
}

fn accumulate(grads: &mut [Option<Vec<f64>>], id: NodeId, g: impl Iterator<Item = f64>) {
    match &mut grads[id.0] {
        Some(existing) => {
            for (e, v) in existing.iter_mut().zip(g) {
                *e += v;
            }
        }
        slot @ None => *slot = Some(g.collect()),
    }
}

fn zip_map(a: &[f64], b: &[f64], f: impl Fn(f64, f64) -> f64) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| f(*x, *y)).collect()
}

fn sign(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

pub(crate) fn dense_forward(layer: &DenseLayer<'_>, x: &[f64]) -> Vec<f64> {
    layer
        .weight
        .chunks(layer.cols)
        .zip(layer.bias)
        .map(|(row, b)| dot(row, x) + b)
        .collect()
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|l| (l - m).exp()).collect();
    let z: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / z).collect()
}

pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let m = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    // the maximum contributes exactly 1; ln_1p keeps the rest when it is tiny
    let top = xs.iter().position(|&x| x == m).expect("maximum is an element");
    let rest: f64 = xs
        .iter()
        .enumerate()
        .filter(|&(i, _)| i != top)
        .map(|(_, x)| (x - m).exp())
        .sum();
    m + rest.ln_1p()
}

/// Vector-Jacobian product of `u ⊕_c v`.
pub fn mobius_add_vjp(c: f64, u: &[f64], v: &[f64], g: &[f64]) -> (Vec<f64>, Vec<f64>) {
    if c == 0.0 {
        return (g.to_vec(), g.to_vec());
    }
    let uv = dot(u, v);
    let uu = dot(u, u);
    let vv = dot(v, v);
    let a = 1.0 + 2.0 * c * uv + c * vv;
    let b = 1.0 - c * uu;
    let d = 1.0 + 2.0 * c * uv + c * c * uu * vv + geometry::DENOM_GUARD;

    let gn: Vec<f64> = g.iter().map(|x| x / d).collect();
    // dL/dD = -<g, N>/D^2 = -<gN, out>, with out = N/D
    let out_dot: f64 = u
        .iter()
        .zip(v)
        .zip(&gn)
        .map(|((x, y), gi)| gi * (a * x + b * y) / d)
        .sum();
    let gd = -out_dot;
    let gn_u = dot(&gn, u);
    let gn_v = dot(&gn, v);

    let gu = (0..u.len())
        .map(|i| {
            a * gn[i] + 2.0 * c * v[i] * gn_u - 2.0 * c * u[i] * gn_v + gd * (2.0 * c * v[i] + 2.0 * c * c * vv * u[i])
        })
        .collect();
    let gv = (0..v.len())
        .map(|i| b * gn[i] + (2.0 * c * u[i] + 2.0 * c * v[i]) * gn_u + gd * (2.0 * c * u[i] + 2.0 * c * c * uu * v[i]))
        .collect();
    (gu, gv)
}

/// Vector-Jacobian product of `r ⊗_c x` with respect to `x`.
pub fn mobius_scale_vjp(c: f64, r: f64, x: &[f64], g: &[f64]) -> Vec<f64> {
    if c == 0.0 {
        return g.iter().map(|v| r * v).collect();
    }
    let n = norm(x);
    if n == 0.0 {
        return g.iter().map(|v| r * v).collect();
    }
    let sc = c.sqrt();
    let s = sc * n;
    let t = (r * geometry::clamped_atanh(s)).tanh();
    let dt = if s < ATANH_CLAMP {
        r * (1.0 - t * t) * sc / (1.0 - s * s)
    } else {
        0.0
    };
    let f = t / s;
    let fprime = (dt * n - t) / (sc * n * n);
    let gx = dot(g, x);
    g.iter().zip(x).map(|(gi, xi)| f * gi + fprime * gx * xi / n).collect()
}

/// Gradients of `d_c(a, b)` scaled by the upstream scalar `g`.
pub fn distance_vjp(c: f64, a: &[f64], b: &[f64], g: f64) -> (Vec<f64>, Vec<f64>) {
    if c == 0.0 {
        let diff = zip_map(a, b, |x, y| x - y);
        let n = norm(&diff);
        if n == 0.0 {
            return (vec![0.0; a.len()], vec![0.0; b.len()]);
        }
        let ga: Vec<f64> = diff.iter().map(|d| 2.0 * g * d / n).collect();
        let gb = ga.iter().map(|v| -v).collect();
        return (ga, gb);
    }
    let na = geometry::neg(a);
    let w = raw::mobius_add(c, &na, b);
    let n = norm(&w);
    let sc = c.sqrt();
    if n == 0.0 || sc * n >= ATANH_CLAMP {
        return (vec![0.0; a.len()], vec![0.0; b.len()]);
    }
    let dd_dn = 2.0 / (1.0 - c * n * n);
    let gw: Vec<f64> = w.iter().map(|wi| g * dd_dn * wi / n).collect();
    let (gneg, gb) = mobius_add_vjp(c, &na, b, &gw);
    (gneg.into_iter().map(|v| -v).collect(), gb)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn table(rows: Vec<Vec<f64>>) -> EmbeddingTable {
        EmbeddingTable::from_rows(rows).unwrap()
    }

    #[test]
    fn quadratic_gradient_is_twice_theta() {
        let t = table(vec![vec![0.3, -0.2, 0.1]]);
        let mut g = Graph::new();
        let w = g.word(0, &t).unwrap();
        let loss = g.sq_norm(w);
        let rec = g.backward(loss).unwrap();
        assert_eq!(rec.hyperbolic[&0], vec![0.6, -0.4, 0.2]);
        assert!(rec.euclidean.is_empty());
    }

    #[test]
    fn coincident_distance_has_finite_gradient() {
        let t = table(vec![vec![0.2, 0.1], vec![0.2, 0.1]]);
        for c in [0.0, 1.0] {
            let mut g = Graph::new();
            let a = g.word(0, &t).unwrap();
            let b = g.word(1, &t).unwrap();
            let d = g.distance(a, b, c).unwrap();
            assert_abs_diff_eq!(g.scalar_value(d), 0.0, epsilon = 1e-12);
            let rec = g.backward(d).unwrap();
            assert!(rec.is_finite());
        }
    }

    #[test]
    fn non_scalar_loss_rejected() {
        let t = table(vec![vec![0.2, 0.1]]);
        let mut g = Graph::new();
        let a = g.word(0, &t).unwrap();
        assert!(matches!(g.backward(a), Err(Error::NonScalarLoss(2))));
    }

    #[test]
    fn repeated_word_accumulates_into_one_entry() {
        let t = table(vec![vec![0.5, 0.0]]);
        let mut g = Graph::new();
        let a = g.word(0, &t).unwrap();
        let b = g.word(0, &t).unwrap();
        assert_eq!(a, b);
        let s = g.add(a, b).unwrap();
        let l = g.sq_norm(s);
        let rec = g.backward(l).unwrap();
        assert_eq!(rec.hyperbolic.len(), 1);
        // d/dx |2x|^2 = 8x
        assert_abs_diff_eq!(rec.hyperbolic[&0][0], 4.0, epsilon = 1e-15);
    }

    #[test]
    fn untouched_words_are_absent() {
        let t = table(vec![vec![0.5, 0.0], vec![0.1, 0.1]]);
        let mut g = Graph::new();
        let a = g.word(1, &t).unwrap();
        let l = g.norm(a);
        let rec = g.backward(l).unwrap();
        assert!(rec.hyperbolic.contains_key(&1));
        assert!(!rec.hyperbolic.contains_key(&0));
    }

    #[test]
    fn relu_kink_uses_zero_subgradient() {
        let mut g = Graph::new();
        let t = table(vec![vec![0.0]]);
        let w = g.word(0, &t).unwrap();
        let r = g.relu(w);
        let l = g.sum(&[r]).unwrap();
        let rec = g.backward(l).unwrap();
        assert_eq!(rec.hyperbolic[&0], vec![0.0]);
        assert_eq!(g.kink_margin(), 0.0);
    }

    #[test]
    fn softmax_cross_entropy_values() {
        let mut g = Graph::new();
        let l = g.constant(vec![0.0, 0.0, 0.0]);
        let x = g.softmax_cross_entropy(l, 1).unwrap();
        assert_abs_diff_eq!(g.scalar_value(x), 3f64.ln(), epsilon = 1e-15);
        assert!(g.softmax_cross_entropy(l, 3).is_err());
    }

    #[test]
    fn log_sum_exp_is_stable() {
        assert_abs_diff_eq!(log_sum_exp(&[1000.0, 1000.0]), 1000.0 + 2f64.ln(), epsilon = 1e-9);
    }
}
