use crate::scalar::Scalar;

use super::array::Array;
use super::GradError;

/// Index of a node on a [`Tape`]. Only meaningful for the tape that issued it.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeId(usize);

impl NodeId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Op<T> {
    Param,
    Constant,
    MatMul { a: NodeId, b: NodeId, batched: bool },
    Transpose(NodeId),
    Add(NodeId, NodeId),
    Sub(NodeId, NodeId),
    Mul(NodeId, NodeId),
    Scale(NodeId, T),
    Relu(NodeId),
    Abs(NodeId),
    Softmax(NodeId),
    LayerNorm {
        x: NodeId,
        gamma: NodeId,
        beta: NodeId,
        xhat: Vec<T>,
        inv_std: Vec<T>,
    },
    Concat { inputs: Vec<NodeId>, axis: usize },
    Slice { a: NodeId, axis: usize, start: usize },
    Reshape(NodeId),
    Mean(NodeId),
    Sum(NodeId),
}

#[derive(Debug)]
struct Node<T> {
    value: Array<T>,
    op: Op<T>,
}

/// Append-only record of a computation. Node `k` only ever refers to nodes
/// with smaller ids, so creation order is a topological order.
#[derive(Debug, Default)]
pub struct Tape<T> {
    nodes: Vec<Node<T>>,
}

/// Gradients of a scalar loss with respect to every parameter leaf.
#[derive(Debug)]
pub struct Gradients<T> {
    by_node: Vec<Option<Array<T>>>,
}

impl<T: Scalar> Gradients<T> {
    /// Gradient for a parameter leaf; `None` for any other node.
    pub fn get(&self, id: NodeId) -> Option<&Array<T>> {
        self.by_node.get(id.0).and_then(Option::as_ref)
    }

    pub fn take(&mut self, id: NodeId) -> Option<Array<T>> {
        self.by_node.get_mut(id.0).and_then(Option::take)
    }
}

fn mismatch(msg: impl Into<String>) -> GradError {
    GradError::ShapeMismatch(msg.into())
}

/// `true` when `b` broadcasts against `a` by repeating over leading axes.
fn is_suffix(a: &[usize], b: &[usize]) -> bool {
    b.len() <= a.len() && a[a.len() - b.len()..] == *b
}

fn outer_inner(shape: &[usize], axis: usize) -> (usize, usize) {
    let outer = shape[..axis].iter().product();
    let inner = shape[axis + 1..].iter().product();
    (outer, inner)
}

// out(n×p) += a(n×k) · b(k×p)
fn gemm_nn<T: Scalar>(a: &[T], b: &[T], out: &mut [T], n: usize, k: usize, p: usize) {
    for i in 0..n {
        let row = &mut out[i * p..(i + 1) * p];
        for l in 0..k {
            let av = a[i * k + l];
            if av == T::zero() {
                continue;
            }
            let brow = &b[l * p..(l + 1) * p];
            for (o, &bv) in row.iter_mut().zip(brow) {
                *o += av * bv;
            }
        }
    }
}

// out(n×k) += g(n×p) · b(k×p)ᵀ
fn gemm_nt<T: Scalar>(g: &[T], b: &[T], out: &mut [T], n: usize, k: usize, p: usize) {
    for i in 0..n {
        let grow = &g[i * p..(i + 1) * p];
        for l in 0..k {
            let brow = &b[l * p..(l + 1) * p];
            let mut acc = T::zero();
            for (&gv, &bv) in grow.iter().zip(brow) {
                acc += gv * bv;
            }
            out[i * k + l] += acc;
        }
    }
}

// out(k×p) += a(n×k)ᵀ · g(n×p)
fn gemm_tn<T: Scalar>(a: &[T], g: &[T], out: &mut [T], n: usize, k: usize, p: usize) {
    for i in 0..n {
        let grow = &g[i * p..(i + 1) * p];
        for l in 0..k {
            let av = a[i * k + l];
            if av == T::zero() {
                continue;
            }
            let orow = &mut out[l * p..(l + 1) * p];
            for (o, &gv) in orow.iter_mut().zip(grow) {
                *o += av * gv;
            }
        }
    }
}

impl<T: Scalar> Tape<T> {
    pub fn new() -> Self {
        Self { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, id: NodeId) -> &Array<T> {
        &self.nodes[id.0].value
    }

    fn push(&mut self, value: Array<T>, op: Op<T>) -> NodeId {
        self.nodes.push(Node { value, op });
        NodeId(self.nodes.len() - 1)
    }

    fn leaf(&mut self, value: Array<T>, op: Op<T>) -> Result<NodeId, GradError> {
        if !value.is_finite() {
            return Err(GradError::NonFiniteInput);
        }
        Ok(self.push(value, op))
    }

    /// Registers a trainable leaf; it will receive a gradient in [`Tape::backward`].
    pub fn param(&mut self, value: Array<T>) -> Result<NodeId, GradError> {
        self.leaf(value, Op::Param)
    }

    /// Registers a leaf that receives no gradient.
    pub fn constant(&mut self, value: Array<T>) -> Result<NodeId, GradError> {
        self.leaf(value, Op::Constant)
    }

    /// `a · b` where `b` is a `k × p` matrix and `a` has trailing axis `k`,
    /// or a batched product of `[B, n, k]` by `[B, k, p]`.
    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, GradError> {
        let (sa, sb) = (self.value(a).shape(), self.value(b).shape());
        let (out_shape, batched) = match (sa.len(), sb.len()) {
            (1.., 2) if sa[sa.len() - 1] == sb[0] => {
                let mut s = sa[..sa.len() - 1].to_vec();
                s.push(sb[1]);
                (s, false)
            }
            (3, 3) if sa[0] == sb[0] && sa[2] == sb[1] => (vec![sa[0], sa[1], sb[2]], true),
            _ => return Err(mismatch(format!("matmul {sa:?} x {sb:?}"))),
        };
        let mut out = Array::zeros(&out_shape);
        let (av, bv) = (self.value(a), self.value(b));
        if batched {
            let (bs, n, k, p) = (av.shape()[0], av.shape()[1], av.shape()[2], bv.shape()[2]);
            for i in 0..bs {
                gemm_nn(
                    &av.data()[i * n * k..(i + 1) * n * k],
                    &bv.data()[i * k * p..(i + 1) * k * p],
                    &mut out.data_mut()[i * n * p..(i + 1) * n * p],
                    n,
                    k,
                    p,
                );
            }
        } else {
            let (k, p) = (bv.shape()[0], bv.shape()[1]);
            let n = av.len() / k;
            gemm_nn(av.data(), bv.data(), out.data_mut(), n, k, p);
        }
        Ok(self.push(out, Op::MatMul { a, b, batched }))
    }

    /// Swaps the last two axes.
    pub fn transpose(&mut self, a: NodeId) -> Result<NodeId, GradError> {
        let av = self.value(a);
        let s = av.shape();
        if s.len() < 2 {
            return Err(mismatch(format!("transpose needs rank >= 2, got {s:?}")));
        }
        let (r, c) = (s[s.len() - 2], s[s.len() - 1]);
        let mut shape = s.to_vec();
        let rank = shape.len();
        shape.swap(rank - 2, rank - 1);
        let mut out = Array::zeros(&shape);
        transpose_blocks(av.data(), out.data_mut(), r, c);
        Ok(self.push(out, Op::Transpose(a)))
    }

    fn broadcast_binary(
        &mut self,
        a: NodeId,
        b: NodeId,
        name: &str,
        f: impl Fn(T, T) -> T,
    ) -> Result<Array<T>, GradError> {
        let (av, bv) = (self.value(a), self.value(b));
        if !is_suffix(av.shape(), bv.shape()) {
            return Err(mismatch(format!(
                "{name} {:?} with {:?}",
                av.shape(),
                bv.shape()
            )));
        }
        let m = bv.len();
        let data = av
            .data()
            .iter()
            .enumerate()
            .map(|(i, &x)| f(x, bv.data()[i % m]))
            .collect();
        Array::new(av.shape().to_vec(), data)
    }

    /// `a + b`; `b` may broadcast over the leading axes of `a`.
    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, GradError> {
        let out = self.broadcast_binary(a, b, "add", |x, y| x + y)?;
        Ok(self.push(out, Op::Add(a, b)))
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, GradError> {
        let out = self.broadcast_binary(a, b, "sub", |x, y| x - y)?;
        Ok(self.push(out, Op::Sub(a, b)))
    }

    /// Elementwise product; `b` may broadcast like in [`Tape::add`].
    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, GradError> {
        let out = self.broadcast_binary(a, b, "mul", |x, y| x * y)?;
        Ok(self.push(out, Op::Mul(a, b)))
    }

    pub fn scale(&mut self, a: NodeId, c: T) -> Result<NodeId, GradError> {
        let out = self.value(a).map(|x| x * c);
        Ok(self.push(out, Op::Scale(a, c)))
    }

    pub fn relu(&mut self, a: NodeId) -> Result<NodeId, GradError> {
        let out = self.value(a).map(|x| if x > T::zero() { x } else { T::zero() });
        Ok(self.push(out, Op::Relu(a)))
    }

    pub fn abs(&mut self, a: NodeId) -> Result<NodeId, GradError> {
        let out = self.value(a).map(|x| x.abs());
        Ok(self.push(out, Op::Abs(a)))
    }

    /// Softmax over the trailing axis, max-shifted.
    pub fn softmax_lastdim(&mut self, a: NodeId) -> Result<NodeId, GradError> {
        let av = self.value(a);
        let d = av.last_dim();
        let mut out = av.clone();
        for row in out.data_mut().chunks_mut(d) {
            let max = row.iter().fold(T::neg_infinity(), |m, &x| m.max(x));
            let mut total = T::zero();
            for x in row.iter_mut() {
                *x = (*x - max).exp();
                total += *x;
            }
            for x in row.iter_mut() {
                *x /= total;
            }
        }
        Ok(self.push(out, Op::Softmax(a)))
    }

    /// Normalizes each row over the trailing axis with population variance,
    /// then applies the per-column affine `gamma`, `beta`.
    pub fn layer_norm(
        &mut self,
        x: NodeId,
        gamma: NodeId,
        beta: NodeId,
        eps: T,
    ) -> Result<NodeId, GradError> {
        let xv = self.value(x);
        let d = xv.last_dim();
        let (gv, bv) = (self.value(gamma), self.value(beta));
        if gv.shape() != [d] || bv.shape() != [d] {
            return Err(mismatch(format!(
                "layer_norm over {d} with gamma {:?}, beta {:?}",
                gv.shape(),
                bv.shape()
            )));
        }
        let n = T::of_usize(d);
        let rows = xv.len() / d;
        let mut xhat = Vec::with_capacity(xv.len());
        let mut inv_std = Vec::with_capacity(rows);
        let mut out = Array::zeros(xv.shape());
        for (r, row) in xv.data().chunks(d).enumerate() {
            let mean = row.iter().copied().sum::<T>() / n;
            let var = row.iter().map(|&v| (v - mean) * (v - mean)).sum::<T>() / n;
            let is = T::one() / (var + eps).sqrt();
            inv_std.push(is);
            for (j, &v) in row.iter().enumerate() {
                let h = (v - mean) * is;
                xhat.push(h);
                out.data_mut()[r * d + j] = h * gv.data()[j] + bv.data()[j];
            }
        }
        Ok(self.push(
            out,
            Op::LayerNorm {
                x,
                gamma,
                beta,
                xhat,
                inv_std,
            },
        ))
    }

    /// Concatenates along `axis`; all other axes must agree.
    pub fn concat(&mut self, inputs: &[NodeId], axis: usize) -> Result<NodeId, GradError> {
        let first = inputs
            .first()
            .ok_or_else(|| mismatch("concat of nothing"))?;
        let base = self.value(*first).shape().to_vec();
        if axis >= base.len() {
            return Err(mismatch(format!("concat axis {axis} on {base:?}")));
        }
        let mut total = 0;
        for &id in inputs {
            let s = self.value(id).shape();
            let same_rank = s.len() == base.len();
            if !same_rank || s.iter().zip(&base).enumerate().any(|(i, (x, y))| i != axis && x != y) {
                return Err(mismatch(format!("concat {s:?} with {base:?}")));
            }
            total += s[axis];
        }
        let mut shape = base.clone();
        shape[axis] = total;
        let (outer, inner) = outer_inner(&shape, axis);
        let mut data = Vec::with_capacity(outer * total * inner);
        for o in 0..outer {
            for &id in inputs {
                let v = self.value(id);
                let chunk = v.shape()[axis] * inner;
                data.extend_from_slice(&v.data()[o * chunk..(o + 1) * chunk]);
            }
        }
        let out = Array::new(shape, data)?;
        Ok(self.push(
            out,
            Op::Concat {
                inputs: inputs.to_vec(),
                axis,
            },
        ))
    }

    /// Takes `len` entries starting at `start` along `axis`.
    pub fn slice(
        &mut self,
        a: NodeId,
        axis: usize,
        start: usize,
        len: usize,
    ) -> Result<NodeId, GradError> {
        let av = self.value(a);
        let s = av.shape();
        if axis >= s.len() || start + len > s[axis] {
            return Err(mismatch(format!("slice {start}+{len} on axis {axis} of {s:?}")));
        }
        let (outer, inner) = outer_inner(s, axis);
        let mut shape = s.to_vec();
        shape[axis] = len;
        let mut data = Vec::with_capacity(outer * len * inner);
        for o in 0..outer {
            let base = (o * s[axis] + start) * inner;
            data.extend_from_slice(&av.data()[base..base + len * inner]);
        }
        let out = Array::new(shape, data)?;
        Ok(self.push(out, Op::Slice { a, axis, start }))
    }

    pub fn reshape(&mut self, a: NodeId, shape: &[usize]) -> Result<NodeId, GradError> {
        let out = self.value(a).reshaped(shape.to_vec())?;
        Ok(self.push(out, Op::Reshape(a)))
    }

    /// Mean of all entries, as a scalar.
    pub fn mean(&mut self, a: NodeId) -> Result<NodeId, GradError> {
        let av = self.value(a);
        if av.is_empty() {
            return Err(mismatch("mean of empty array"));
        }
        let m = av.data().iter().copied().sum::<T>() / T::of_usize(av.len());
        Ok(self.push(Array::scalar(m), Op::Mean(a)))
    }

    pub fn sum(&mut self, a: NodeId) -> Result<NodeId, GradError> {
        let s = self.value(a).data().iter().copied().sum::<T>();
        Ok(self.push(Array::scalar(s), Op::Sum(a)))
    }

    /// Reverse sweep from a scalar `loss`. Every parameter leaf gets a
    /// gradient (zeros when it does not influence the loss).
    pub fn backward(&self, loss: NodeId) -> Result<Gradients<T>, GradError> {
        let lv = self.value(loss);
        if lv.len() != 1 {
            return Err(GradError::NonScalarLoss(lv.shape().to_vec()));
        }
        let mut grads: Vec<Option<Array<T>>> = Vec::with_capacity(self.nodes.len());
        grads.resize_with(self.nodes.len(), || None);
        grads[loss.0] = Some(Array::filled(lv.shape(), T::one()));

        for k in (0..=loss.0).rev() {
            let Some(g) = grads[k].take() else { continue };
            let node = &self.nodes[k];
            match &node.op {
                Op::Param => {
                    grads[k] = Some(g);
                    continue;
                }
                Op::Constant => {}
                Op::MatMul { a, b, batched } => {
                    let (av, bv) = (self.value(*a), self.value(*b));
                    let mut ga = Array::zeros(av.shape());
                    let mut gb = Array::zeros(bv.shape());
                    if *batched {
                        let (bs, n, kk, p) =
                            (av.shape()[0], av.shape()[1], av.shape()[2], bv.shape()[2]);
                        for i in 0..bs {
                            let gs = &g.data()[i * n * p..(i + 1) * n * p];
                            let asl = &av.data()[i * n * kk..(i + 1) * n * kk];
                            let bsl = &bv.data()[i * kk * p..(i + 1) * kk * p];
                            gemm_nt(gs, bsl, &mut ga.data_mut()[i * n * kk..(i + 1) * n * kk], n, kk, p);
                            gemm_tn(asl, gs, &mut gb.data_mut()[i * kk * p..(i + 1) * kk * p], n, kk, p);
                        }
                    } else {
                        let (kk, p) = (bv.shape()[0], bv.shape()[1]);
                        let n = av.len() / kk;
                        gemm_nt(g.data(), bv.data(), ga.data_mut(), n, kk, p);
                        gemm_tn(av.data(), g.data(), gb.data_mut(), n, kk, p);
                    }
                    accumulate(&mut grads, *a, ga);
                    accumulate(&mut grads, *b, gb);
                }
                Op::Transpose(a) => {
                    let s = node.value.shape();
                    let (r, c) = (s[s.len() - 2], s[s.len() - 1]);
                    let mut ga = Array::zeros(self.value(*a).shape());
                    transpose_blocks(g.data(), ga.data_mut(), r, c);
                    accumulate(&mut grads, *a, ga);
                }
                Op::Add(a, b) | Op::Sub(a, b) => {
                    let negate = matches!(node.op, Op::Sub(..));
                    let bshape = self.value(*b).shape().to_vec();
                    let mut gb: Array<T> = Array::zeros(&bshape);
                    let m = gb.len();
                    for (i, &x) in g.data().iter().enumerate() {
                        gb.data_mut()[i % m] += x;
                    }
                    if negate {
                        gb = gb.map(|x| -x);
                    }
                    accumulate(&mut grads, *a, g);
                    accumulate(&mut grads, *b, gb);
                }
                Op::Mul(a, b) => {
                    let (av, bv) = (self.value(*a), self.value(*b));
                    let m = bv.len();
                    let mut ga = Array::zeros(av.shape());
                    let mut gb = Array::zeros(bv.shape());
                    for (i, &x) in g.data().iter().enumerate() {
                        ga.data_mut()[i] = x * bv.data()[i % m];
                        gb.data_mut()[i % m] += x * av.data()[i];
                    }
                    accumulate(&mut grads, *a, ga);
                    accumulate(&mut grads, *b, gb);
                }
                Op::Scale(a, c) => {
                    let c = *c;
                    accumulate(&mut grads, *a, g.map(|x| x * c));
                }
                Op::Relu(a) => {
                    let av = self.value(*a);
                    let mut ga = g;
                    for (x, &v) in ga.data_mut().iter_mut().zip(av.data()) {
                        if v <= T::zero() {
                            *x = T::zero();
                        }
                    }
                    accumulate(&mut grads, *a, ga);
                }
                Op::Abs(a) => {
                    let av = self.value(*a);
                    let mut ga = g;
                    for (x, &v) in ga.data_mut().iter_mut().zip(av.data()) {
                        *x = if v > T::zero() {
                            *x
                        } else if v < T::zero() {
                            -*x
                        } else {
                            T::zero()
                        };
                    }
                    accumulate(&mut grads, *a, ga);
                }
                Op::Softmax(a) => {
                    let y = &node.value;
                    let d = y.last_dim();
                    let mut ga = Array::zeros(y.shape());
                    for ((grow, yrow), out) in g
                        .data()
                        .chunks(d)
                        .zip(y.data().chunks(d))
                        .zip(ga.data_mut().chunks_mut(d))
                    {
                        let dot: T = grow.iter().zip(yrow).map(|(&gv, &yv)| gv * yv).sum();
                        for j in 0..d {
                            out[j] = yrow[j] * (grow[j] - dot);
                        }
                    }
                    accumulate(&mut grads, *a, ga);
                }
                Op::LayerNorm {
                    x,
                    gamma,
                    beta,
                    xhat,
                    inv_std,
                } => {
                    let gv = self.value(*gamma);
                    let d = gv.len();
                    let n = T::of_usize(d);
                    let mut gx = Array::zeros(self.value(*x).shape());
                    let mut ggamma = Array::zeros(&[d]);
                    let mut gbeta = Array::zeros(&[d]);
                    for (r, grow) in g.data().chunks(d).enumerate() {
                        let hrow = &xhat[r * d..(r + 1) * d];
                        let mut mean_dh = T::zero();
                        let mut mean_dh_h = T::zero();
                        for j in 0..d {
                            let dh = grow[j] * gv.data()[j];
                            mean_dh += dh;
                            mean_dh_h += dh * hrow[j];
                            ggamma.data_mut()[j] += grow[j] * hrow[j];
                            gbeta.data_mut()[j] += grow[j];
                        }
                        mean_dh /= n;
                        mean_dh_h /= n;
                        for j in 0..d {
                            let dh = grow[j] * gv.data()[j];
                            gx.data_mut()[r * d + j] =
                                inv_std[r] * (dh - mean_dh - hrow[j] * mean_dh_h);
                        }
                    }
                    accumulate(&mut grads, *x, gx);
                    accumulate(&mut grads, *gamma, ggamma);
                    accumulate(&mut grads, *beta, gbeta);
                }
                Op::Concat { inputs, axis } => {
                    let (outer, inner) = outer_inner(node.value.shape(), *axis);
                    let mut parts: Vec<Array<T>> = inputs
                        .iter()
                        .map(|&id| Array::zeros(self.value(id).shape()))
                        .collect();
                    let mut offset = 0;
                    for o in 0..outer {
                        for part in parts.iter_mut() {
                            let chunk = part.shape()[*axis] * inner;
                            part.data_mut()[o * chunk..(o + 1) * chunk]
                                .copy_from_slice(&g.data()[offset..offset + chunk]);
                            offset += chunk;
                        }
                    }
                    for (&id, part) in inputs.iter().zip(parts) {
                        accumulate(&mut grads, id, part);
                    }
                }
                Op::Slice { a, axis, start } => {
                    let src = self.value(*a).shape();
                    let len = node.value.shape()[*axis];
                    let (outer, inner) = outer_inner(src, *axis);
                    let mut ga = Array::zeros(src);
                    for o in 0..outer {
                        let dst = (o * src[*axis] + start) * inner;
                        let from = o * len * inner;
                        ga.data_mut()[dst..dst + len * inner]
                            .copy_from_slice(&g.data()[from..from + len * inner]);
                    }
                    accumulate(&mut grads, *a, ga);
                }
                Op::Reshape(a) => {
                    let ga = g.reshaped(self.value(*a).shape().to_vec())?;
                    accumulate(&mut grads, *a, ga);
                }
                Op::Mean(a) => {
                    let av = self.value(*a);
                    let scale = g.data()[0] / T::of_usize(av.len());
                    accumulate(&mut grads, *a, Array::filled(av.shape(), scale));
                }
                Op::Sum(a) => {
                    let av = self.value(*a);
                    accumulate(&mut grads, *a, Array::filled(av.shape(), g.data()[0]));
                }
            }
        }

        for (k, node) in self.nodes.iter().enumerate() {
            match node.op {
                Op::Param => {
                    if grads[k].is_none() {
                        grads[k] = Some(Array::zeros(node.value.shape()));
                    }
                }
                _ => grads[k] = None,
            }
        }
        Ok(Gradients { by_node: grads })
    }
}

fn accumulate<T: Scalar>(grads: &mut [Option<Array<T>>], id: NodeId, g: Array<T>) {
    match &mut grads[id.0] {
        Some(existing) => existing.add_assign(&g),
        slot @ None => *slot = Some(g),
    }
}

// Transposes each trailing r×c block of `src` into c×r blocks of `dst`.
fn transpose_blocks<T: Scalar>(src: &[T], dst: &mut [T], r: usize, c: usize) {
    let block = r * c;
    for (s, d) in src.chunks(block).zip(dst.chunks_mut(block)) {
        for i in 0..r {
            for j in 0..c {
                d[j * r + i] = s[i * c + j];
            }
        }
    }
}
