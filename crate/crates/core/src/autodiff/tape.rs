//! Tensor-level reverse-mode tape.
//!
//! Every node holds a row-major `rows x cols` value. Backward rules are written
//! over [`Real`], so the same code differentiates `f64` and [`Dual`] programs.
//!
//! [`Dual`]: super::Dual

use super::real::Real;

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Var(usize);

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)
const GELU_A: f64 = 0.044_715;
const RMS_EPS: f64 = 1e-6;

enum Op<T> {
    Input,
    Constant,
    Slice { src: usize, offset: usize },
    Gather { table: usize, ids: Vec<u32> },
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    Scale(usize, T),
    AddRow { x: usize, bias: usize },
    MatMul { a: usize, b: usize, a_t: bool, b_t: bool, k: usize },
    Tanh(usize),
    Gelu { x: usize, t: Vec<T> },
    RmsNorm { x: usize, gain: usize, inv_rms: Vec<T> },
    Attention { qkv: usize, batch: usize, seq: usize, heads: usize, probs: Vec<T> },
    CrossEntropy { logits: usize, rows: Vec<u32>, targets: Vec<u32>, probs: Vec<T> },
    Sum(usize),
    Dot(usize, usize),
}

struct Node<T> {
    value: Vec<T>,
    rows: usize,
    cols: usize,
    needs_grad: bool,
    op: Op<T>,
}

/// A single-use recording of a computation. Tapes are per call and never shared.
pub struct Tape<T: Real> {
    nodes: Vec<Node<T>>,
}

impl<T: Real> Default for Tape<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Real> Tape<T> {
    pub fn new() -> Self {
        Self { nodes: Vec::new() }
    }

    fn push(&mut self, value: Vec<T>, rows: usize, cols: usize, needs_grad: bool, op: Op<T>) -> Var {
        debug_assert_eq!(value.len(), rows * cols);
        self.nodes.push(Node { value, rows, cols, needs_grad, op });
        Var(self.nodes.len() - 1)
    }

    fn ng(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    pub fn value(&self, v: Var) -> &[T] {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> (usize, usize) {
        let n = &self.nodes[v.0];
        (n.rows, n.cols)
    }

    pub fn scalar(&self, v: Var) -> T {
        let n = &self.nodes[v.0];
        assert_eq!(n.value.len(), 1, "scalar() on a non-scalar node");
        n.value[0]
    }

    /// Differentiable leaf.
    pub fn input(&mut self, value: Vec<T>, rows: usize, cols: usize) -> Var {
        assert_eq!(value.len(), rows * cols, "input: shape mismatch");
        self.push(value, rows, cols, true, Op::Input)
    }

    pub fn constant(&mut self, value: Vec<T>, rows: usize, cols: usize) -> Var {
        assert_eq!(value.len(), rows * cols, "constant: shape mismatch");
        self.push(value, rows, cols, false, Op::Constant)
    }

    pub fn constant_f64(&mut self, value: &[f64], rows: usize, cols: usize) -> Var {
        let v = value.iter().map(|&x| T::from_f64(x)).collect();
        self.constant(v, rows, cols)
    }

    /// Contiguous window of `src` reshaped to `rows x cols`.
    pub fn slice(&mut self, src: Var, offset: usize, rows: usize, cols: usize) -> Var {
        let len = rows * cols;
        let s = &self.nodes[src.0];
        assert!(offset + len <= s.value.len(), "slice out of bounds");
        let value = s.value[offset..offset + len].to_vec();
        let ng = s.needs_grad;
        self.push(value, rows, cols, ng, Op::Slice { src: src.0, offset })
    }

    /// Rows of `table` selected by `ids`.
    pub fn gather(&mut self, table: Var, ids: &[u32]) -> Var {
        let t = &self.nodes[table.0];
        let cols = t.cols;
        let mut value = Vec::with_capacity(ids.len() * cols);
        for &id in ids {
            let r = id as usize;
            assert!(r < t.rows, "gather: row {r} out of range");
            value.extend_from_slice(&t.value[r * cols..(r + 1) * cols]);
        }
        let ng = t.needs_grad;
        self.push(value, ids.len(), cols, ng, Op::Gather { table: table.0, ids: ids.to_vec() })
    }

    fn zip_same(&mut self, a: Var, b: Var, f: impl Fn(T, T) -> T, op: Op<T>) -> Var {
        let (ra, ca) = self.shape(a);
        assert_eq!((ra, ca), self.shape(b), "elementwise shape mismatch");
        let value = self.nodes[a.0]
            .value
            .iter()
            .zip(&self.nodes[b.0].value)
            .map(|(&x, &y)| f(x, y))
            .collect();
        let ng = self.ng(a) || self.ng(b);
        self.push(value, ra, ca, ng, op)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        self.zip_same(a, b, |x, y| x + y, Op::Add(a.0, b.0))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        self.zip_same(a, b, |x, y| x - y, Op::Sub(a.0, b.0))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        self.zip_same(a, b, |x, y| x * y, Op::Mul(a.0, b.0))
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        let c = T::from_f64(c);
        let (r, cl) = self.shape(a);
        let value = self.nodes[a.0].value.iter().map(|&x| x * c).collect();
        let ng = self.ng(a);
        self.push(value, r, cl, ng, Op::Scale(a.0, c))
    }

    /// `x + bias` with `bias` (1 x cols) broadcast over rows.
    pub fn add_row(&mut self, x: Var, bias: Var) -> Var {
        let (r, c) = self.shape(x);
        assert_eq!(self.nodes[bias.0].value.len(), c, "add_row: bias width");
        let b = &self.nodes[bias.0].value;
        let mut value = self.nodes[x.0].value.clone();
        for row in value.chunks_mut(c) {
            for (v, &bb) in row.iter_mut().zip(b) {
                *v += bb;
            }
        }
        let ng = self.ng(x) || self.ng(bias);
        self.push(value, r, c, ng, Op::AddRow { x: x.0, bias: bias.0 })
    }

    /// `op(a) * op(b)`.
    pub fn matmul_t(&mut self, a: Var, a_t: bool, b: Var, b_t: bool) -> Var {
        let (ar, ac) = self.shape(a);
        let (br, bc) = self.shape(b);
        let (m, k) = if a_t { (ac, ar) } else { (ar, ac) };
        let (k2, n) = if b_t { (bc, br) } else { (br, bc) };
        assert_eq!(k, k2, "matmul inner dimension mismatch");
        let mut value = vec![T::zero(); m * n];
        T::gemm(m, k, n, &self.nodes[a.0].value, a_t, &self.nodes[b.0].value, b_t, &mut value, false);
        let ng = self.ng(a) || self.ng(b);
        self.push(value, m, n, ng, Op::MatMul { a: a.0, b: b.0, a_t, b_t, k })
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        self.matmul_t(a, false, b, false)
    }

    pub fn tanh(&mut self, x: Var) -> Var {
        let (r, c) = self.shape(x);
        let value = self.nodes[x.0].value.iter().map(|&v| v.tanh()).collect();
        let ng = self.ng(x);
        self.push(value, r, c, ng, Op::Tanh(x.0))
    }

    /// Tanh-approximated GELU.
    pub fn gelu(&mut self, x: Var) -> Var {
        let (r, c) = self.shape(x);
        let half = T::from_f64(0.5);
        let one = T::one();
        let gc = T::from_f64(GELU_C);
        let ga = T::from_f64(GELU_A);
        let xv = &self.nodes[x.0].value;
        let t: Vec<T> = xv.iter().map(|&v| (gc * (v + ga * v * v * v)).tanh()).collect();
        let value = xv.iter().zip(&t).map(|(&v, &tt)| half * v * (one + tt)).collect();
        let ng = self.ng(x);
        self.push(value, r, c, ng, Op::Gelu { x: x.0, t })
    }

    /// Row-wise RMS normalisation with a learned gain (1 x cols).
    pub fn rms_norm(&mut self, x: Var, gain: Var) -> Var {
        let (r, c) = self.shape(x);
        assert_eq!(self.nodes[gain.0].value.len(), c, "rms_norm: gain width");
        let eps = T::from_f64(RMS_EPS);
        let inv_d = T::from_f64(1.0 / c as f64);
        let g = &self.nodes[gain.0].value;
        let mut value = Vec::with_capacity(r * c);
        let mut inv_rms = Vec::with_capacity(r);
        for row in self.nodes[x.0].value.chunks(c) {
            let mut ss = T::zero();
            for &v in row {
                ss += v * v;
            }
            let inv = T::one() / (ss * inv_d + eps).sqrt();
            inv_rms.push(inv);
            value.extend(row.iter().zip(g).map(|(&v, &gg)| v * inv * gg));
        }
        let ng = self.ng(x) || self.ng(gain);
        self.push(value, r, c, ng, Op::RmsNorm { x: x.0, gain: gain.0, inv_rms })
    }

    /// Causal multi-head self-attention over a packed `[q | k | v]` projection.
    ///
    /// `qkv` is `(batch * seq) x (3 * d)`; output is `(batch * seq) x d`.
    pub fn causal_attention(&mut self, qkv: Var, batch: usize, seq: usize, heads: usize) -> Var {
        let (rows, c3) = self.shape(qkv);
        assert_eq!(rows, batch * seq, "attention: row count");
        assert_eq!(c3 % 3, 0, "attention: packed width");
        let d = c3 / 3;
        assert_eq!(d % heads, 0, "attention: heads must divide width");
        let dh = d / heads;
        let scale = T::from_f64(1.0 / (dh as f64).sqrt());
        let x = &self.nodes[qkv.0].value;
        let mut out = vec![T::zero(); rows * d];
        let mut probs = vec![T::zero(); batch * heads * seq * seq];
        let mut scores = vec![T::zero(); seq];
        for b in 0..batch {
            for h in 0..heads {
                let pbase = (b * heads + h) * seq * seq;
                for i in 0..seq {
                    let qi = (b * seq + i) * c3 + h * dh;
                    let q = &x[qi..qi + dh];
                    let mut mx = f64::NEG_INFINITY;
                    let mut mx_t = T::zero();
                    for (j, s) in scores.iter_mut().enumerate().take(i + 1) {
                        let kj = (b * seq + j) * c3 + d + h * dh;
                        let mut acc = T::zero();
                        for (&a, &k) in q.iter().zip(&x[kj..kj + dh]) {
                            acc += a * k;
                        }
                        *s = acc * scale;
                        if s.re() > mx {
                            mx = s.re();
                            mx_t = *s;
                        }
                    }
                    let mut z = T::zero();
                    for s in scores.iter_mut().take(i + 1) {
                        *s = (*s - mx_t).exp();
                        z += *s;
                    }
                    let inv_z = T::one() / z;
                    let oi = (b * seq + i) * d + h * dh;
                    let o = &mut out[oi..oi + dh];
                    let prow = &mut probs[pbase + i * seq..pbase + i * seq + i + 1];
                    for (j, (pr, &s)) in prow.iter_mut().zip(&scores).enumerate() {
                        let p = s * inv_z;
                        *pr = p;
                        let vj = (b * seq + j) * c3 + 2 * d + h * dh;
                        for (ov, &v) in o.iter_mut().zip(&x[vj..vj + dh]) {
                            *ov += p * v;
                        }
                    }
                }
            }
        }
        let ng = self.ng(qkv);
        self.push(out, rows, d, ng, Op::Attention { qkv: qkv.0, batch, seq, heads, probs })
    }

    /// Mean softmax cross-entropy over the selected `rows` of `logits`.
    pub fn cross_entropy(&mut self, logits: Var, rows: &[u32], targets: &[u32]) -> Var {
        assert_eq!(rows.len(), targets.len(), "cross_entropy: rows/targets length");
        assert!(!rows.is_empty(), "cross_entropy: no predicted positions");
        let (_, v) = self.shape(logits);
        let l = &self.nodes[logits.0].value;
        let mut probs = Vec::with_capacity(rows.len() * v);
        let mut total = T::zero();
        for (&r, &t) in rows.iter().zip(targets) {
            let row = &l[r as usize * v..(r as usize + 1) * v];
            let mut mx_t = row[0];
            for &x in row {
                if x.re() > mx_t.re() {
                    mx_t = x;
                }
            }
            let mut z = T::zero();
            let start = probs.len();
            for &x in row {
                let e = (x - mx_t).exp();
                z += e;
                probs.push(e);
            }
            let inv_z = T::one() / z;
            for p in &mut probs[start..] {
                *p *= inv_z;
            }
            total += z.ln() + mx_t - row[t as usize];
        }
        let mean = total / T::from_f64(rows.len() as f64);
        let ng = self.ng(logits);
        self.push(
            vec![mean],
            1,
            1,
            ng,
            Op::CrossEntropy { logits: logits.0, rows: rows.to_vec(), targets: targets.to_vec(), probs },
        )
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let mut s = T::zero();
        for &v in &self.nodes[x.0].value {
            s += v;
        }
        let ng = self.ng(x);
        self.push(vec![s], 1, 1, ng, Op::Sum(x.0))
    }

    /// Inner product over all elements.
    pub fn dot(&mut self, a: Var, b: Var) -> Var {
        assert_eq!(self.nodes[a.0].value.len(), self.nodes[b.0].value.len(), "dot: length mismatch");
        let mut s = T::zero();
        for (&x, &y) in self.nodes[a.0].value.iter().zip(&self.nodes[b.0].value) {
            s += x * y;
        }
        let ng = self.ng(a) || self.ng(b);
        self.push(vec![s], 1, 1, ng, Op::Dot(a.0, b.0))
    }

    /// Reverse sweep from a scalar node. Returns the adjoint of every node that
    /// requires a gradient.
    pub fn backward(&self, out: Var) -> Gradients<T> {
        assert_eq!(self.nodes[out.0].value.len(), 1, "backward from a non-scalar node");
        let mut grads: Vec<Option<Vec<T>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[out.0] = Some(vec![T::one()]);
        for idx in (0..=out.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            self.propagate(idx, &g, &mut grads);
            grads[idx] = Some(g);
        }
        Gradients { grads }
    }

    fn propagate(&self, idx: usize, g: &[T], grads: &mut [Option<Vec<T>>]) {
        let node = &self.nodes[idx];
        match &node.op {
            Op::Input | Op::Constant => {}
            Op::Slice { src, offset } => {
                if let Some(acc) = self.acc(*src, grads) {
                    for (a, &gg) in acc[*offset..*offset + g.len()].iter_mut().zip(g) {
                        *a += gg;
                    }
                }
            }
            Op::Gather { table, ids } => {
                let cols = node.cols;
                if let Some(acc) = self.acc(*table, grads) {
                    for (i, &id) in ids.iter().enumerate() {
                        let dst = &mut acc[id as usize * cols..(id as usize + 1) * cols];
                        for (a, &gg) in dst.iter_mut().zip(&g[i * cols..(i + 1) * cols]) {
                            *a += gg;
                        }
                    }
                }
            }
            Op::Add(a, b) => {
                for &s in &[*a, *b] {
                    if let Some(acc) = self.acc(s, grads) {
                        add_into(acc, g);
                    }
                }
            }
            Op::Sub(a, b) => {
                if let Some(acc) = self.acc(*a, grads) {
                    add_into(acc, g);
                }
                if let Some(acc) = self.acc(*b, grads) {
                    for (x, &gg) in acc.iter_mut().zip(g) {
                        *x -= gg;
                    }
                }
            }
            Op::Mul(a, b) => {
                let (va, vb) = (&self.nodes[*a].value, &self.nodes[*b].value);
                if let Some(acc) = self.acc(*a, grads) {
                    for ((x, &gg), &y) in acc.iter_mut().zip(g).zip(vb) {
                        *x += gg * y;
                    }
                }
                if let Some(acc) = self.acc(*b, grads) {
                    for ((x, &gg), &y) in acc.iter_mut().zip(g).zip(va) {
                        *x += gg * y;
                    }
                }
            }
            Op::Scale(a, c) => {
                if let Some(acc) = self.acc(*a, grads) {
                    for (x, &gg) in acc.iter_mut().zip(g) {
                        *x += gg * *c;
                    }
                }
            }
            Op::AddRow { x, bias } => {
                if let Some(acc) = self.acc(*x, grads) {
                    add_into(acc, g);
                }
                let c = node.cols;
                if let Some(acc) = self.acc(*bias, grads) {
                    for row in g.chunks(c) {
                        add_into(acc, row);
                    }
                }
            }
            Op::MatMul { a, b, a_t, b_t, k } => {
                let (m, n, k) = (node.rows, node.cols, *k);
                let (va, vb) = (&self.nodes[*a].value, &self.nodes[*b].value);
                // C = op(A) op(B):  d op(A) = G op(B)^T,  d op(B) = op(A)^T G
                if self.nodes[*a].needs_grad {
                    let acc = grads[*a].get_or_insert_with(|| vec![T::zero(); va.len()]);
                    if *a_t {
                        // A stored k x m: dA = op(B) G^T  (k x m)
                        T::gemm(k, n, m, vb, *b_t, g, true, acc, true);
                    } else {
                        // dA = G op(B)^T  (m x k)
                        T::gemm(m, n, k, g, false, vb, !*b_t, acc, true);
                    }
                }
                if self.nodes[*b].needs_grad {
                    let acc = grads[*b].get_or_insert_with(|| vec![T::zero(); vb.len()]);
                    if *b_t {
                        // B stored n x k: dB = G^T op(A)  (n x k)
                        T::gemm(n, m, k, g, true, va, *a_t, acc, true);
                    } else {
                        // dB = op(A)^T G  (k x n)
                        T::gemm(k, m, n, va, !*a_t, g, false, acc, true);
                    }
                }
            }
            Op::Tanh(x) => {
                let y = &node.value;
                if let Some(acc) = self.acc(*x, grads) {
                    for ((a, &gg), &yy) in acc.iter_mut().zip(g).zip(y) {
                        *a += gg * (T::one() - yy * yy);
                    }
                }
            }
            Op::Gelu { x, t } => {
                let xv = &self.nodes[*x].value;
                if let Some(acc) = self.acc(*x, grads) {
                    let half = T::from_f64(0.5);
                    let one = T::one();
                    let gc = T::from_f64(GELU_C);
                    let ga3 = T::from_f64(3.0 * GELU_A);
                    for (((a, &gg), &v), &t) in acc.iter_mut().zip(g).zip(xv).zip(t) {
                        let d = half * (one + t) + half * v * (one - t * t) * gc * (one + ga3 * v * v);
                        *a += gg * d;
                    }
                }
            }
            Op::RmsNorm { x, gain, inv_rms } => {
                let c = node.cols;
                let xv = &self.nodes[*x].value;
                let gv = &self.nodes[*gain].value;
                if self.nodes[*gain].needs_grad {
                    let acc = grads[*gain].get_or_insert_with(|| vec![T::zero(); c]);
                    for ((grow, xrow), &inv) in g.chunks(c).zip(xv.chunks(c)).zip(inv_rms) {
                        for ((a, &gg), &xx) in acc.iter_mut().zip(grow).zip(xrow) {
                            *a += gg * xx * inv;
                        }
                    }
                }
                if self.nodes[*x].needs_grad {
                    let inv_d = T::from_f64(1.0 / c as f64);
                    let acc = grads[*x].get_or_insert_with(|| vec![T::zero(); xv.len()]);
                    for (((arow, grow), xrow), &inv) in
                        acc.chunks_mut(c).zip(g.chunks(c)).zip(xv.chunks(c)).zip(inv_rms)
                    {
                        let mut s = T::zero();
                        for ((&gg, &gn), &xx) in grow.iter().zip(gv).zip(xrow) {
                            s += gg * gn * xx;
                        }
                        let coef = inv * inv * inv * inv_d * s;
                        for (((a, &gg), &gn), &xx) in arow.iter_mut().zip(grow).zip(gv).zip(xrow) {
                            *a += inv * gg * gn - xx * coef;
                        }
                    }
                }
            }
            Op::Attention { qkv, batch, seq, heads, probs } => {
                if !self.nodes[*qkv].needs_grad {
                    return;
                }
                let (batch, seq, heads) = (*batch, *seq, *heads);
                let x = &self.nodes[*qkv].value;
                let c3 = self.nodes[*qkv].cols;
                let d = c3 / 3;
                let dh = d / heads;
                let scale = T::from_f64(1.0 / (dh as f64).sqrt());
                let acc = grads[*qkv].get_or_insert_with(|| vec![T::zero(); x.len()]);
                let mut dp = vec![T::zero(); seq];
                let mut dq = vec![T::zero(); dh];
                for b in 0..batch {
                    for h in 0..heads {
                        let pbase = (b * heads + h) * seq * seq;
                        for i in 0..seq {
                            let oi = (b * seq + i) * d + h * dh;
                            let go = &g[oi..oi + dh];
                            let prow = &probs[pbase + i * seq..pbase + i * seq + i + 1];
                            let mut dot = T::zero();
                            for (j, (&p, dpj)) in prow.iter().zip(dp.iter_mut()).enumerate() {
                                let vj = (b * seq + j) * c3 + 2 * d + h * dh;
                                let mut s = T::zero();
                                for (&gg, &v) in go.iter().zip(&x[vj..vj + dh]) {
                                    s += gg * v;
                                }
                                for (a, &gg) in acc[vj..vj + dh].iter_mut().zip(go) {
                                    *a += p * gg;
                                }
                                *dpj = s;
                                dot += p * s;
                            }
                            let qi = (b * seq + i) * c3 + h * dh;
                            let q = &x[qi..qi + dh];
                            dq.iter_mut().for_each(|v| *v = T::zero());
                            for (j, (&p, &dpj)) in prow.iter().zip(dp.iter()).enumerate() {
                                let ds = p * (dpj - dot) * scale;
                                let kj = (b * seq + j) * c3 + d + h * dh;
                                for (dqe, &k) in dq.iter_mut().zip(&x[kj..kj + dh]) {
                                    *dqe += ds * k;
                                }
                                for (a, &qv) in acc[kj..kj + dh].iter_mut().zip(q) {
                                    *a += ds * qv;
                                }
                            }
                            for (a, &v) in acc[qi..qi + dh].iter_mut().zip(&dq) {
                                *a += v;
                            }
                        }
                    }
                }
            }
            Op::CrossEntropy { logits, rows, targets, probs } => {
                let v = self.nodes[*logits].cols;
                let n = self.nodes[*logits].value.len();
                if let Some(acc) = self.acc_len(*logits, n, grads) {
                    let coef = g[0] / T::from_f64(rows.len() as f64);
                    for (i, (&r, &t)) in rows.iter().zip(targets).enumerate() {
                        let dst = &mut acc[r as usize * v..(r as usize + 1) * v];
                        for (a, &p) in dst.iter_mut().zip(&probs[i * v..(i + 1) * v]) {
                            *a += coef * p;
                        }
                        dst[t as usize] -= coef;
                    }
                }
            }
            Op::Sum(x) => {
                if let Some(acc) = self.acc(*x, grads) {
                    for a in acc.iter_mut() {
                        *a += g[0];
                    }
                }
            }
            Op::Dot(a, b) => {
                let (va, vb) = (&self.nodes[*a].value, &self.nodes[*b].value);
                if let Some(acc) = self.acc(*a, grads) {
                    for (x, &y) in acc.iter_mut().zip(vb) {
                        *x += g[0] * y;
                    }
                }
                if let Some(acc) = self.acc(*b, grads) {
                    for (x, &y) in acc.iter_mut().zip(va) {
                        *x += g[0] * y;
                    }
                }
            }
        }
    }

    fn acc<'g>(&self, i: usize, grads: &'g mut [Option<Vec<T>>]) -> Option<&'g mut Vec<T>> {
        let n = self.nodes[i].value.len();
        self.acc_len(i, n, grads)
    }

    fn acc_len<'g>(&self, i: usize, n: usize, grads: &'g mut [Option<Vec<T>>]) -> Option<&'g mut Vec<T>> {
        if !self.nodes[i].needs_grad {
            return None;
        }
        Some(grads[i].get_or_insert_with(|| vec![T::zero(); n]))
    }
}

fn add_into<T: Real>(acc: &mut [T], g: &[T]) {
    for (a, &gg) in acc.iter_mut().zip(g) {
        *a += gg;
    }
}

/// Adjoints produced by [`Tape::backward`].
pub struct Gradients<T> {
    grads: Vec<Option<Vec<T>>>,
}

impl<T: Real> Gradients<T> {
    /// Adjoint of `v`, or `None` if it does not influence the output.
    pub fn get(&self, v: Var) -> Option<&[T]> {
        self.grads[v.0].as_deref()
    }

    pub fn take(&mut self, v: Var) -> Option<Vec<T>> {
        self.grads[v.0].take()
    }
}
