//! Reverse-mode automatic differentiation on a Wengert tape.
//!
//! Operations are recorded in insertion order (which is a topological order,
//! since an op can only reference vars that already exist) and replayed in
//! reverse by [`Tape::backward`]. A tape and its vars are confined to one
//! thread; distinct tapes run in parallel freely.
//!
//! Supported primitives: add, sub, mul, scalar add/scale, matmul, conv2d
//! (stride 1, square kernel <= 5), relu, log, exp, sum, mean, l2_norm,
//! softmax (max-stabilized), max, clamp, plus concat / reshape /
//! channel_norm used by the perceptual embedding. All arithmetic is f64 and
//! every op output is checked finite.

use std::cell::{Cell, RefCell};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var {
    id: usize,
}

#[derive(Debug)]
enum Op {
    Leaf,
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    AddScalar(usize),
    Scale(usize, f64),
    Matmul(usize, usize),
    MatmulTB(usize, usize),
    Conv2d { x: usize, w: usize, b: Option<usize>, padding: usize },
    Relu(usize),
    Log(usize),
    Exp(usize),
    Sum(usize),
    Mean(usize),
    L2Norm(usize),
    Softmax(usize),
    MaxReduce { a: usize, argmax: usize },
    Clamp { a: usize, lo: f64, hi: f64 },
    Concat(Vec<usize>),
    Reshape(usize),
    ChannelNorm { a: usize, channels: usize, positions: usize, scale: f64 },
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    requires_grad: bool,
    op: Op,
}

/// Ordered record of primitive operations.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: RefCell<Vec<Node>>,
    consumed: Cell<bool>,
}

impl Tape {
    pub fn new() -> Self {
        Tape::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Registers a gradient leaf (input or parameter).
    pub fn leaf(&self, value: Tensor, requires_grad: bool) -> Result<Var> {
        self.push("leaf", value, Op::Leaf, requires_grad)
    }

    /// Registers a constant; no gradient flows into it.
    pub fn constant(&self, value: Tensor) -> Result<Var> {
        self.push("constant", value, Op::Leaf, false)
    }

    pub fn value(&self, v: Var) -> Tensor {
        self.nodes.borrow()[v.id].value.clone()
    }

    pub fn shape(&self, v: Var) -> Vec<usize> {
        self.nodes.borrow()[v.id].value.shape().to_vec()
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes.borrow()[v.id].requires_grad
    }

    fn push(&self, op_name: &'static str, value: Tensor, op: Op, requires_grad: bool) -> Result<Var> {
        if self.consumed.get() {
            return Err(Error::TapeConsumed);
        }
        if !value.data().iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite { op: op_name });
        }
        let mut nodes = self.nodes.borrow_mut();
        let id = nodes.len();
        nodes.push(Node { value, requires_grad, op });
        Ok(Var { id })
    }

    fn node_value<R>(&self, id: usize, f: impl FnOnce(&Tensor) -> R) -> R {
        f(&self.nodes.borrow()[id].value)
    }

    fn check(&self, v: Var) -> Result<()> {
        if v.id >= self.nodes.borrow().len() {
            return Err(Error::ForeignVar);
        }
        Ok(())
    }

    fn binary_elementwise(
        &self,
        op_name: &'static str,
        a: Var,
        b: Var,
        f: impl Fn(f64, f64) -> f64,
        op: Op,
    ) -> Result<Var> {
        self.check(a)?;
        self.check(b)?;
        let (value, requires) = {
            let nodes = self.nodes.borrow();
            let (na, nb) = (&nodes[a.id], &nodes[b.id]);
            if na.value.shape() != nb.value.shape() {
                return Err(Error::ShapeMismatch {
                    op: op_name,
                    detail: format!("{:?} vs {:?}", na.value.shape(), nb.value.shape()),
                });
            }
            let data: Vec<f64> = na
                .value
                .data()
                .iter()
                .zip(nb.value.data())
                .map(|(&x, &y)| f(x, y))
                .collect();
            (
                Tensor::new(na.value.shape().to_vec(), data),
                na.requires_grad || nb.requires_grad,
            )
        };
        let value = value.map_err(|_| Error::NonFinite { op: op_name })?;
        self.push(op_name, value, op, requires)
    }

    pub fn add(&self, a: Var, b: Var) -> Result<Var> {
        self.binary_elementwise("add", a, b, |x, y| x + y, Op::Add(a.id, b.id))
    }

    pub fn sub(&self, a: Var, b: Var) -> Result<Var> {
        self.binary_elementwise("sub", a, b, |x, y| x - y, Op::Sub(a.id, b.id))
    }

    pub fn mul(&self, a: Var, b: Var) -> Result<Var> {
        self.binary_elementwise("mul", a, b, |x, y| x * y, Op::Mul(a.id, b.id))
    }

    fn unary(
        &self,
        op_name: &'static str,
        a: Var,
        f: impl Fn(f64) -> f64,
        op: Op,
    ) -> Result<Var> {
        self.check(a)?;
        let (value, requires) = {
            let nodes = self.nodes.borrow();
            let na = &nodes[a.id];
            let data: Vec<f64> = na.value.data().iter().map(|&x| f(x)).collect();
            (
                Tensor::new(na.value.shape().to_vec(), data),
                na.requires_grad,
            )
        };
        let value = value.map_err(|_| Error::NonFinite { op: op_name })?;
        self.push(op_name, value, op, requires)
    }

    pub fn add_scalar(&self, a: Var, c: f64) -> Result<Var> {
        self.unary("add_scalar", a, |x| x + c, Op::AddScalar(a.id))
    }

    pub fn scale(&self, a: Var, c: f64) -> Result<Var> {
        self.unary("scale", a, |x| x * c, Op::Scale(a.id, c))
    }

    pub fn neg(&self, a: Var) -> Result<Var> {
        self.scale(a, -1.0)
    }

    pub fn relu(&self, a: Var) -> Result<Var> {
        self.unary("relu", a, |x| if x > 0.0 { x } else { 0.0 }, Op::Relu(a.id))
    }

    pub fn log(&self, a: Var) -> Result<Var> {
        self.unary("log", a, f64::ln, Op::Log(a.id))
    }

    pub fn exp(&self, a: Var) -> Result<Var> {
        self.unary("exp", a, f64::exp, Op::Exp(a.id))
    }

    pub fn clamp(&self, a: Var, lo: f64, hi: f64) -> Result<Var> {
        if !(lo <= hi) {
            return Err(Error::InvalidParam(format!("clamp bounds {lo} > {hi}")));
        }
        self.unary("clamp", a, |x| x.clamp(lo, hi), Op::Clamp { a: a.id, lo, hi })
    }

    pub fn sum(&self, a: Var) -> Result<Var> {
        self.check(a)?;
        let (v, requires) = {
            let nodes = self.nodes.borrow();
            let na = &nodes[a.id];
            (na.value.data().iter().sum::<f64>(), na.requires_grad)
        };
        self.push("sum", Tensor::scalar(v), Op::Sum(a.id), requires)
    }

    pub fn mean(&self, a: Var) -> Result<Var> {
        self.check(a)?;
        let (v, requires) = {
            let nodes = self.nodes.borrow();
            let na = &nodes[a.id];
            let n = na.value.numel() as f64;
            (na.value.data().iter().sum::<f64>() / n, na.requires_grad)
        };
        self.push("mean", Tensor::scalar(v), Op::Mean(a.id), requires)
    }

    pub fn l2_norm(&self, a: Var) -> Result<Var> {
        self.check(a)?;
        let (v, requires) = {
            let nodes = self.nodes.borrow();
            let na = &nodes[a.id];
            (na.value.l2_norm(), na.requires_grad)
        };
        self.push("l2_norm", Tensor::scalar(v), Op::L2Norm(a.id), requires)
    }

    /// Max over all entries; ties resolve to the first index.
    pub fn max(&self, a: Var) -> Result<Var> {
        self.check(a)?;
        let (v, argmax, requires) = {
            let nodes = self.nodes.borrow();
            let na = &nodes[a.id];
            let argmax = na.value.index_of_max();
            (na.value.data()[argmax], argmax, na.requires_grad)
        };
        self.push("max", Tensor::scalar(v), Op::MaxReduce { a: a.id, argmax }, requires)
    }

    /// Softmax of a flat vector, stabilized by max subtraction.
    pub fn softmax(&self, a: Var) -> Result<Var> {
        self.check(a)?;
        let (value, requires) = {
            let nodes = self.nodes.borrow();
            let na = &nodes[a.id];
            if na.value.shape().len() != 1 {
                return Err(Error::ShapeMismatch {
                    op: "softmax",
                    detail: format!("expected vector, got {:?}", na.value.shape()),
                });
            }
            (na.value.softmax(), na.requires_grad)
        };
        self.push("softmax", value, Op::Softmax(a.id), requires)
    }

    pub fn reshape(&self, a: Var, shape: Vec<usize>) -> Result<Var> {
        self.check(a)?;
        let (value, requires) = {
            let nodes = self.nodes.borrow();
            let na = &nodes[a.id];
            (na.value.reshape(shape)?, na.requires_grad)
        };
        self.push("reshape", value, Op::Reshape(a.id), requires)
    }

    /// Concatenates flattened inputs into one vector.
    pub fn concat(&self, parts: &[Var]) -> Result<Var> {
        if parts.is_empty() {
            return Err(Error::EmptyInput("concat"));
        }
        for &p in parts {
            self.check(p)?;
        }
        let (data, requires) = {
            let nodes = self.nodes.borrow();
            let mut data = Vec::new();
            let mut requires = false;
            for &p in parts {
                data.extend_from_slice(nodes[p.id].value.data());
                requires |= nodes[p.id].requires_grad;
            }
            (data, requires)
        };
        let n = data.len();
        let value = Tensor::new(vec![n], data).map_err(|_| Error::NonFinite { op: "concat" })?;
        self.push("concat", value, Op::Concat(parts.iter().map(|p| p.id).collect()), requires)
    }

    /// `a (m,k) x b (k,n) -> (m,n)`.
    pub fn matmul(&self, a: Var, b: Var) -> Result<Var> {
        self.check(a)?;
        self.check(b)?;
        let (value, requires) = {
            let nodes = self.nodes.borrow();
            let (na, nb) = (&nodes[a.id], &nodes[b.id]);
            let (sa, sb) = (na.value.shape(), nb.value.shape());
            if sa.len() != 2 || sb.len() != 2 || sa[1] != sb[0] {
                return Err(Error::ShapeMismatch {
                    op: "matmul",
                    detail: format!("{sa:?} x {sb:?}"),
                });
            }
            let (m, k, n) = (sa[0], sa[1], sb[1]);
            let mut out = vec![0.0; m * n];
            let da = na.value.data();
            let db = nb.value.data();
            for i in 0..m {
                for l in 0..k {
                    let ail = da[i * k + l];
                    if ail == 0.0 {
                        continue;
                    }
                    let row = &db[l * n..(l + 1) * n];
                    let dst = &mut out[i * n..(i + 1) * n];
                    for (d, &bv) in dst.iter_mut().zip(row) {
                        *d += ail * bv;
                    }
                }
            }
            (
                Tensor::new(vec![m, n], out),
                na.requires_grad || nb.requires_grad,
            )
        };
        let value = value.map_err(|_| Error::NonFinite { op: "matmul" })?;
        self.push("matmul", value, Op::Matmul(a.id, b.id), requires)
    }

    /// `a (m,k) x b^T` for `b (n,k)`, yielding `(m,n)`.
    ///
    /// The row-major layout of both operands makes this the cheap way to
    /// apply a dense layer stored as (out, in).
    pub fn matmul_tb(&self, a: Var, b: Var) -> Result<Var> {
        self.check(a)?;
        self.check(b)?;
        let (value, requires) = {
            let nodes = self.nodes.borrow();
            let (na, nb) = (&nodes[a.id], &nodes[b.id]);
            let (sa, sb) = (na.value.shape(), nb.value.shape());
            if sa.len() != 2 || sb.len() != 2 || sa[1] != sb[1] {
                return Err(Error::ShapeMismatch {
                    op: "matmul_tb",
                    detail: format!("{sa:?} x {sb:?}^T"),
                });
            }
            let (m, k, n) = (sa[0], sa[1], sb[0]);
            let da = na.value.data();
            let db = nb.value.data();
            let mut out = vec![0.0; m * n];
            for i in 0..m {
                let arow = &da[i * k..(i + 1) * k];
                for j in 0..n {
                    let brow = &db[j * k..(j + 1) * k];
                    let mut acc = 0.0;
                    for l in 0..k {
                        acc += arow[l] * brow[l];
                    }
                    out[i * n + j] = acc;
                }
            }
            (
                Tensor::new(vec![m, n], out),
                na.requires_grad || nb.requires_grad,
            )
        };
        let value = value.map_err(|_| Error::NonFinite { op: "matmul_tb" })?;
        self.push("matmul_tb", value, Op::MatmulTB(a.id, b.id), requires)
    }

    /// 2-d convolution, stride 1, square kernel <= 5, zero padding.
    ///
    /// `x (c_in,h,w)`, `weight (c_out,c_in,k,k)`, optional `bias (c_out)`.
    pub fn conv2d(&self, x: Var, weight: Var, bias: Option<Var>, padding: usize) -> Result<Var> {
        self.check(x)?;
        self.check(weight)?;
        if let Some(b) = bias {
            self.check(b)?;
        }
        let (value, requires) = {
            let nodes = self.nodes.borrow();
            let (nx, nw) = (&nodes[x.id], &nodes[weight.id]);
            let (sx, sw) = (nx.value.shape(), nw.value.shape());
            if sx.len() != 3 || sw.len() != 4 || sw[2] != sw[3] || sw[1] != sx[0] {
                return Err(Error::ShapeMismatch {
                    op: "conv2d",
                    detail: format!("x {sx:?}, weight {sw:?}"),
                });
            }
            let k = sw[2];
            if k > 5 {
                return Err(Error::InvalidParam(format!("conv2d kernel {k} > 5")));
            }
            let (c_in, h, w) = (sx[0], sx[1], sx[2]);
            let c_out = sw[0];
            let oh = (h + 2 * padding).checked_sub(k - 1).unwrap_or(0);
            let ow = (w + 2 * padding).checked_sub(k - 1).unwrap_or(0);
            if oh == 0 || ow == 0 {
                return Err(Error::ShapeMismatch {
                    op: "conv2d",
                    detail: format!("kernel {k} too large for input {h}x{w} with padding {padding}"),
                });
            }
            let mut requires = nx.requires_grad || nw.requires_grad;
            let bias_data: Option<Vec<f64>> = match bias {
                Some(b) => {
                    let nb = &nodes[b.id];
                    if nb.value.shape() != [c_out] {
                        return Err(Error::ShapeMismatch {
                            op: "conv2d",
                            detail: format!("bias {:?}, want [{c_out}]", nb.value.shape()),
                        });
                    }
                    requires |= nb.requires_grad;
                    Some(nb.value.data().to_vec())
                }
                None => None,
            };
            let dx = nx.value.data();
            let dw = nw.value.data();
            let mut out = vec![0.0; c_out * oh * ow];
            let p = padding as isize;
            for co in 0..c_out {
                for oi in 0..oh {
                    for oj in 0..ow {
                        let mut acc = bias_data.as_ref().map_or(0.0, |b| b[co]);
                        for ci in 0..c_in {
                            for u in 0..k {
                                let ii = oi as isize + u as isize - p;
                                if ii < 0 || ii >= h as isize {
                                    continue;
                                }
                                for v in 0..k {
                                    let jj = oj as isize + v as isize - p;
                                    if jj < 0 || jj >= w as isize {
                                        continue;
                                    }
                                    acc += dx[(ci * h + ii as usize) * w + jj as usize]
                                        * dw[((co * c_in + ci) * k + u) * k + v];
                                }
                            }
                        }
                        out[(co * oh + oi) * ow + oj] = acc;
                    }
                }
            }
            (Tensor::new(vec![c_out, oh, ow], out), requires)
        };
        let value = value.map_err(|_| Error::NonFinite { op: "conv2d" })?;
        self.push(
            "conv2d",
            value,
            Op::Conv2d { x: x.id, w: weight.id, b: bias.map(|b| b.id), padding },
            requires,
        )
    }

    /// Per-position channel normalization to unit L2, then scaled.
    ///
    /// Layout: entry `(c, p)` at index `c * positions + p`. All-zero channel
    /// vectors map to zero (and receive zero gradient).
    pub fn channel_norm(&self, a: Var, channels: usize, positions: usize, scale: f64) -> Result<Var> {
        self.check(a)?;
        let (value, requires) = {
            let nodes = self.nodes.borrow();
            let na = &nodes[a.id];
            if na.value.numel() != channels * positions {
                return Err(Error::ShapeMismatch {
                    op: "channel_norm",
                    detail: format!(
                        "{} entries vs {channels} channels x {positions} positions",
                        na.value.numel()
                    ),
                });
            }
            let d = na.value.data();
            let mut out = vec![0.0; d.len()];
            for p in 0..positions {
                let mut sq = 0.0;
                for c in 0..channels {
                    let v = d[c * positions + p];
                    sq += v * v;
                }
                let r = sq.sqrt();
                if r > 0.0 {
                    for c in 0..channels {
                        out[c * positions + p] = scale * d[c * positions + p] / r;
                    }
                }
            }
            let n = out.len();
            (Tensor::new(vec![n], out), na.requires_grad)
        };
        let value = value.map_err(|_| Error::NonFinite { op: "channel_norm" })?;
        self.push(
            "channel_norm",
            value,
            Op::ChannelNorm { a: a.id, channels, positions, scale },
            requires,
        )
    }

    /// Picks one entry of a flat vector (a one-hot dot product).
    pub fn select(&self, a: Var, index: usize) -> Result<Var> {
        let n = self.node_value(a.id, |t| t.numel());
        if index >= n {
            return Err(Error::InvalidClass { index, num_classes: n });
        }
        let mut onehot = vec![0.0; n];
        onehot[index] = 1.0;
        let shape = self.shape(a);
        let mask = self.constant(Tensor::new(shape, onehot)?)?;
        let masked = self.mul(a, mask)?;
        self.sum(masked)
    }

    /// Reverse pass from a scalar. Consumes the tape: no further ops or
    /// backward calls are accepted afterwards.
    pub fn backward(&self, out: Var) -> Result<Gradients> {
        self.check(out)?;
        if self.consumed.get() {
            return Err(Error::TapeConsumed);
        }
        let nodes = self.nodes.borrow();
        if nodes[out.id].value.numel() != 1 {
            return Err(Error::NonScalarBackward(nodes[out.id].value.shape().to_vec()));
        }
        self.consumed.set(true);

        let mut grads: Vec<Option<Vec<f64>>> = vec![None; nodes.len()];
        grads[out.id] = Some(vec![1.0]);

        for id in (0..=out.id).rev() {
            let g = match grads[id].take() {
                Some(g) => g,
                None => continue,
            };
            let node = &nodes[id];
            if !node.requires_grad {
                continue;
            }
            let mut send = |pid: usize, contribution: Vec<f64>| {
                if !nodes[pid].requires_grad {
                    return;
                }
                match &mut grads[pid] {
                    Some(acc) => {
                        for (a, c) in acc.iter_mut().zip(&contribution) {
                            *a += c;
                        }
                    }
                    None => grads[pid] = Some(contribution),
                }
            };
            match &node.op {
                Op::Leaf => {
                    grads[id] = Some(g);
                    continue;
                }
                Op::Add(a, b) => {
                    send(*a, g.clone());
                    send(*b, g);
                }
                Op::Sub(a, b) => {
                    send(*a, g.clone());
                    send(*b, g.iter().map(|v| -v).collect());
                }
                Op::Mul(a, b) => {
                    let da: Vec<f64> = g
                        .iter()
                        .zip(nodes[*b].value.data())
                        .map(|(&gv, &bv)| gv * bv)
                        .collect();
                    let db: Vec<f64> = g
                        .iter()
                        .zip(nodes[*a].value.data())
                        .map(|(&gv, &av)| gv * av)
                        .collect();
                    send(*a, da);
                    send(*b, db);
                }
                Op::AddScalar(a) => send(*a, g),
                Op::Scale(a, c) => send(*a, g.iter().map(|v| v * c).collect()),
                Op::Matmul(a, b) => {
                    let sa = nodes[*a].value.shape();
                    let sb = nodes[*b].value.shape();
                    let (m, k, n) = (sa[0], sa[1], sb[1]);
                    let da_v = nodes[*a].value.data();
                    let db_v = nodes[*b].value.data();
                    // dA = g . B^T
                    let mut da = vec![0.0; m * k];
                    for i in 0..m {
                        for l in 0..k {
                            let mut acc = 0.0;
                            for j in 0..n {
                                acc += g[i * n + j] * db_v[l * n + j];
                            }
                            da[i * k + l] = acc;
                        }
                    }
                    // dB = A^T . g
                    let mut db = vec![0.0; k * n];
                    for l in 0..k {
                        for i in 0..m {
                            let ail = da_v[i * k + l];
                            if ail == 0.0 {
                                continue;
                            }
                            for j in 0..n {
                                db[l * n + j] += ail * g[i * n + j];
                            }
                        }
                    }
                    send(*a, da);
                    send(*b, db);
                }
                Op::MatmulTB(a, b) => {
                    // y = A . B^T with A (m,k), B (n,k), g (m,n)
                    let sa = nodes[*a].value.shape();
                    let sb = nodes[*b].value.shape();
                    let (m, k, n) = (sa[0], sa[1], sb[0]);
                    let da_v = nodes[*a].value.data();
                    let db_v = nodes[*b].value.data();
                    // dA = g . B
                    let mut da = vec![0.0; m * k];
                    for i in 0..m {
                        for j in 0..n {
                            let gv = g[i * n + j];
                            if gv == 0.0 {
                                continue;
                            }
                            let brow = &db_v[j * k..(j + 1) * k];
                            let dst = &mut da[i * k..(i + 1) * k];
                            for (d, &bv) in dst.iter_mut().zip(brow) {
                                *d += gv * bv;
                            }
                        }
                    }
                    // dB = g^T . A
                    let mut db = vec![0.0; n * k];
                    for i in 0..m {
                        let arow = &da_v[i * k..(i + 1) * k];
                        for j in 0..n {
                            let gv = g[i * n + j];
                            if gv == 0.0 {
                                continue;
                            }
                            let dst = &mut db[j * k..(j + 1) * k];
                            for (d, &av) in dst.iter_mut().zip(arow) {
                                *d += gv * av;
                            }
                        }
                    }
                    send(*a, da);
                    send(*b, db);
                }
                Op::Conv2d { x, w, b, padding } => {
                    let sx = nodes[*x].value.shape().to_vec();
                    let sw = nodes[*w].value.shape().to_vec();
                    let (c_in, h, wd) = (sx[0], sx[1], sx[2]);
                    let (c_out, k) = (sw[0], sw[2]);
                    let oh = h + 2 * padding - (k - 1);
                    let ow = wd + 2 * padding - (k - 1);
                    let p = *padding as isize;
                    let dxv = nodes[*x].value.data();
                    let dwv = nodes[*w].value.data();
                    let mut dx = vec![0.0; dxv.len()];
                    let mut dw = vec![0.0; dwv.len()];
                    for co in 0..c_out {
                        for oi in 0..oh {
                            for oj in 0..ow {
                                let gv = g[(co * oh + oi) * ow + oj];
                                if gv == 0.0 {
                                    continue;
                                }
                                for ci in 0..c_in {
                                    for u in 0..k {
                                        let ii = oi as isize + u as isize - p;
                                        if ii < 0 || ii >= h as isize {
                                            continue;
                                        }
                                        for v in 0..k {
                                            let jj = oj as isize + v as isize - p;
                                            if jj < 0 || jj >= wd as isize {
                                                continue;
                                            }
                                            let xi = (ci * h + ii as usize) * wd + jj as usize;
                                            let wi = ((co * c_in + ci) * k + u) * k + v;
                                            dx[xi] += gv * dwv[wi];
                                            dw[wi] += gv * dxv[xi];
                                        }
                                    }
                                }
                            }
                        }
                    }
                    if let Some(bid) = b {
                        let mut db = vec![0.0; c_out];
                        for co in 0..c_out {
                            let mut acc = 0.0;
                            for idx in 0..oh * ow {
                                acc += g[co * oh * ow + idx];
                            }
                            db[co] = acc;
                        }
                        send(*bid, db);
                    }
                    send(*x, dx);
                    send(*w, dw);
                }
                Op::Relu(a) => {
                    let da: Vec<f64> = g
                        .iter()
                        .zip(nodes[*a].value.data())
                        .map(|(&gv, &av)| if av > 0.0 { gv } else { 0.0 })
                        .collect();
                    send(*a, da);
                }
                Op::Log(a) => {
                    let da: Vec<f64> = g
                        .iter()
                        .zip(nodes[*a].value.data())
                        .map(|(&gv, &av)| gv / av)
                        .collect();
                    send(*a, da);
                }
                Op::Exp(a) => {
                    let da: Vec<f64> = g
                        .iter()
                        .zip(node.value.data())
                        .map(|(&gv, &ov)| gv * ov)
                        .collect();
                    send(*a, da);
                }
                Op::Sum(a) => {
                    send(*a, vec![g[0]; nodes[*a].value.numel()]);
                }
                Op::Mean(a) => {
                    let n = nodes[*a].value.numel();
                    send(*a, vec![g[0] / n as f64; n]);
                }
                Op::L2Norm(a) => {
                    let r = node.value.item();
                    if r > 0.0 {
                        let da: Vec<f64> = nodes[*a]
                            .value
                            .data()
                            .iter()
                            .map(|&av| g[0] * av / r)
                            .collect();
                        send(*a, da);
                    }
                    // at the origin the subgradient is defined as zero
                }
                Op::Softmax(a) => {
                    let s = node.value.data();
                    let dot: f64 = g.iter().zip(s).map(|(&gv, &sv)| gv * sv).sum();
                    let da: Vec<f64> = g
                        .iter()
                        .zip(s)
                        .map(|(&gv, &sv)| sv * (gv - dot))
                        .collect();
                    send(*a, da);
                }
                Op::MaxReduce { a, argmax } => {
                    let mut da = vec![0.0; nodes[*a].value.numel()];
                    da[*argmax] = g[0];
                    send(*a, da);
                }
                Op::Clamp { a, lo, hi } => {
                    let da: Vec<f64> = g
                        .iter()
                        .zip(nodes[*a].value.data())
                        .map(|(&gv, &av)| if av >= *lo && av <= *hi { gv } else { 0.0 })
                        .collect();
                    send(*a, da);
                }
                Op::Concat(parts) => {
                    let mut offset = 0;
                    for &pid in parts {
                        let n = nodes[pid].value.numel();
                        send(pid, g[offset..offset + n].to_vec());
                        offset += n;
                    }
                }
                Op::Reshape(a) => send(*a, g),
                Op::ChannelNorm { a, channels, positions, scale } => {
                    let d = nodes[*a].value.data();
                    let mut da = vec![0.0; d.len()];
                    for p in 0..*positions {
                        let mut sq = 0.0;
                        for c in 0..*channels {
                            let v = d[c * positions + p];
                            sq += v * v;
                        }
                        let r = sq.sqrt();
                        if r == 0.0 {
                            continue;
                        }
                        let mut vdotg = 0.0;
                        for c in 0..*channels {
                            vdotg += d[c * positions + p] * g[c * positions + p];
                        }
                        for c in 0..*channels {
                            let idx = c * positions + p;
                            da[idx] = scale * (g[idx] / r - d[idx] * vdotg / (r * r * r));
                        }
                    }
                    send(*a, da);
                }
            }
        }

        let shapes: Vec<Vec<usize>> = nodes.iter().map(|n| n.value.shape().to_vec()).collect();
        let leaves: Vec<bool> = nodes
            .iter()
            .map(|n| matches!(n.op, Op::Leaf) && n.requires_grad)
            .collect();
        Ok(Gradients { grads, shapes, leaves })
    }
}

/// Gradients produced by one backward pass.
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Vec<f64>>>,
    shapes: Vec<Vec<usize>>,
    leaves: Vec<bool>,
}

impl Gradients {
    /// Gradient w.r.t. a requires-grad leaf. Leaves the scalar output never
    /// touched get an exact zero gradient.
    pub fn wrt(&self, v: Var) -> Result<Tensor> {
        if v.id >= self.grads.len() || !self.leaves[v.id] {
            return Err(Error::ForeignVar);
        }
        match &self.grads[v.id] {
            Some(g) => Tensor::new(self.shapes[v.id].clone(), g.clone()),
            None => Ok(Tensor::zeros(self.shapes[v.id].clone())),
        }
    }
}
