use std::rc::Rc;

use crate::gemm::{gemm, MatRef};
use crate::params::{Gradients, ParamId, ParamStore};
use crate::Tensor;

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Var(usize);

/// Sentinel in gather indices meaning "read zero" (used for padding).
pub const GATHER_ZERO: u32 = u32::MAX;

const SQRT_2_OVER_PI: f64 = 0.797_884_560_802_865_4;
const GELU_C: f64 = 0.044_715;

enum Op {
    Constant,
    Param(ParamId),
    MatMul(Var, Var),
    Linear {
        x: Var,
        w: Var,
        b: Option<Var>,
    },
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    AddRow(Var, Var),
    Gelu(Var),
    Sigmoid(Var),
    LayerNorm {
        x: Var,
        gamma: Var,
        beta: Var,
        xhat: Vec<f64>,
        rstd: Vec<f64>,
    },
    Attention {
        q: Var,
        k: Var,
        v: Var,
        heads: usize,
        batch: usize,
        probs: Vec<f64>,
    },
    ConcatCols(Vec<Var>),
    ConcatRows(Vec<Var>),
    SegmentMean {
        x: Var,
        segments: usize,
    },
    Gather {
        x: Var,
        index: Rc<[u32]>,
    },
    DepthwiseConv2d {
        x: Var,
        w: Var,
        b: Var,
        geom: ConvGeom,
    },
    RowNormMean {
        x: Var,
        norms: Vec<f64>,
    },
    CrossEntropy {
        logits: Var,
        labels: Vec<usize>,
        probs: Vec<f64>,
    },
    Mean(Var),
    Reshape(Var),
}

#[derive(Clone, Copy)]
struct ConvGeom {
    batch: usize,
    height: usize,
    width: usize,
    kernel: usize,
}

struct Node {
    value: Option<Tensor>,
    op: Op,
    requires_grad: bool,
}

/// Records a forward computation and replays it backwards.
///
/// A tape borrows the parameter store immutably for its lifetime; drop the
/// tape (after [`Tape::backward`]) before applying an optimizer step.
pub struct Tape<'p> {
    params: &'p ParamStore,
    nodes: Vec<Node>,
    param_vars: Vec<Option<Var>>,
}

impl<'p> Tape<'p> {
    pub fn new(params: &'p ParamStore) -> Self {
        Self {
            params,
            nodes: Vec::new(),
            param_vars: vec![None; params.len()],
        }
    }

    pub fn params(&self) -> &'p ParamStore {
        self.params
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor {
        let node = &self.nodes[v.0];
        match (&node.value, &node.op) {
            (Some(t), _) => t,
            (None, Op::Param(id)) => self.params.get(*id),
            _ => unreachable!("node without value"),
        }
    }

    pub fn shape(&self, v: Var) -> (usize, usize) {
        self.value(v).shape()
    }

    fn push(&mut self, value: Tensor, op: Op, parents: &[Var]) -> Var {
        let requires_grad = parents.iter().any(|p| self.nodes[p.0].requires_grad);
        self.nodes.push(Node {
            value: Some(value),
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    /// Input with no gradient.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.nodes.push(Node {
            value: Some(value),
            op: Op::Constant,
            requires_grad: false,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn param(&mut self, id: ParamId) -> Var {
        if let Some(v) = self.param_vars[id.0] {
            return v;
        }
        self.nodes.push(Node {
            value: None,
            op: Op::Param(id),
            requires_grad: true,
        });
        let v = Var(self.nodes.len() - 1);
        self.param_vars[id.0] = Some(v);
        v
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let (m, k) = self.shape(a);
        let (k2, n) = self.shape(b);
        assert_eq!(k, k2, "matmul inner dimensions {k} vs {k2}");
        let mut out = vec![0.0; m * n];
        gemm(
            m,
            k,
            n,
            1.0,
            MatRef::dense(self.value(a).data(), k),
            MatRef::dense(self.value(b).data(), n),
            0.0,
            &mut out,
            0,
            n,
        );
        self.push(Tensor::from_vec(m, n, out), Op::MatMul(a, b), &[a, b])
    }

    /// `x·w + b` with `x: m×k`, `w: k×n`, `b: 1×n`.
    pub fn linear(&mut self, x: Var, w: Var, b: Option<Var>) -> Var {
        let (m, k) = self.shape(x);
        let (k2, n) = self.shape(w);
        assert_eq!(k, k2, "linear input width {k} vs weight rows {k2}");
        let mut out = vec![0.0; m * n];
        let mut beta = 0.0;
        if let Some(b) = b {
            let bias = self.value(b);
            assert_eq!(bias.shape(), (1, n), "bias shape");
            for row in out.chunks_exact_mut(n) {
                row.copy_from_slice(bias.data());
            }
            beta = 1.0;
        }
        gemm(
            m,
            k,
            n,
            1.0,
            MatRef::dense(self.value(x).data(), k),
            MatRef::dense(self.value(w).data(), n),
            beta,
            &mut out,
            0,
            n,
        );
        let mut parents = vec![x, w];
        parents.extend(b);
        self.push(Tensor::from_vec(m, n, out), Op::Linear { x, w, b }, &parents)
    }

    fn zip_map(&self, a: Var, b: Var, f: impl Fn(f64, f64) -> f64) -> Tensor {
        let ta = self.value(a);
        let tb = self.value(b);
        assert_eq!(ta.shape(), tb.shape(), "elementwise shapes differ");
        let data = ta.data().iter().zip(tb.data()).map(|(x, y)| f(*x, *y)).collect();
        Tensor::from_vec(ta.rows(), ta.cols(), data)
    }

    fn map(&self, a: Var, f: impl Fn(f64) -> f64) -> Tensor {
        let ta = self.value(a);
        Tensor::from_vec(ta.rows(), ta.cols(), ta.data().iter().map(|x| f(*x)).collect())
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let out = self.zip_map(a, b, |x, y| x + y);
        self.push(out, Op::Add(a, b), &[a, b])
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        let out = self.zip_map(a, b, |x, y| x - y);
        self.push(out, Op::Sub(a, b), &[a, b])
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        let out = self.zip_map(a, b, |x, y| x * y);
        self.push(out, Op::Mul(a, b), &[a, b])
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        let out = self.map(a, |x| x * c);
        self.push(out, Op::Scale(a, c), &[a])
    }

    /// Adds a `1×n` row to every row of an `m×n` matrix.
    pub fn add_row(&mut self, a: Var, row: Var) -> Var {
        let ta = self.value(a);
        let tr = self.value(row);
        assert_eq!(tr.shape(), (1, ta.cols()), "add_row shape");
        let mut out = ta.clone();
        for r in out.data_mut().chunks_exact_mut(tr.cols()) {
            r.iter_mut().zip(tr.data()).for_each(|(x, y)| *x += y);
        }
        self.push(out, Op::AddRow(a, row), &[a, row])
    }

    /// Tanh-approximated GELU.
    pub fn gelu(&mut self, a: Var) -> Var {
        let out = self.map(a, gelu);
        self.push(out, Op::Gelu(a), &[a])
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let out = self.map(a, |x| 1.0 / (1.0 + (-x).exp()));
        self.push(out, Op::Sigmoid(a), &[a])
    }

    /// Normalizes each row to zero mean and unit variance, then applies the
    /// per-column affine `gamma`, `beta` (both `1×n`).
    pub fn layer_norm(&mut self, x: Var, gamma: Var, beta: Var, eps: f64) -> Var {
        let tx = self.value(x);
        let (m, n) = tx.shape();
        let g = self.value(gamma).data();
        let b = self.value(beta).data();
        assert_eq!(g.len(), n, "layer norm gamma width");
        assert_eq!(b.len(), n, "layer norm beta width");
        let mut xhat = vec![0.0; m * n];
        let mut rstd = vec![0.0; m];
        let mut out = vec![0.0; m * n];
        for r in 0..m {
            let row = tx.row(r);
            let mean = row.iter().sum::<f64>() / n as f64;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
            let rs = 1.0 / (var + eps).sqrt();
            rstd[r] = rs;
            for c in 0..n {
                let h = (row[c] - mean) * rs;
                xhat[r * n + c] = h;
                out[r * n + c] = h * g[c] + b[c];
            }
        }
        self.push(
            Tensor::from_vec(m, n, out),
            Op::LayerNorm {
                x,
                gamma,
                beta,
                xhat,
                rstd,
            },
            &[x, gamma, beta],
        )
    }

    /// Scaled dot-product multi-head attention over `batch` independent
    /// segments.
    ///
    /// `q` is `(batch·lq)×C`, `k` and `v` are `(batch·lk)×C`; rows of sample
    /// `b` only attend to keys of sample `b`. Heads split the channel axis
    /// into contiguous blocks of `C / heads`.
    pub fn attention(&mut self, q: Var, k: Var, v: Var, heads: usize, batch: usize) -> Var {
        let (nq, c) = self.shape(q);
        let (nk, ck) = self.shape(k);
        assert_eq!(self.shape(v), (nk, ck), "value shape must match key shape");
        assert_eq!(c, ck, "query/key widths differ");
        assert!(heads > 0 && c % heads == 0, "width {c} not divisible by {heads} heads");
        assert!(batch > 0 && nq % batch == 0 && nk % batch == 0, "rows not divisible by batch");
        let (lq, lk, dh) = (nq / batch, nk / batch, c / heads);
        let scale = 1.0 / (dh as f64).sqrt();
        let qd = self.value(q).data();
        let kd = self.value(k).data();
        let vd = self.value(v).data();
        let mut probs = vec![0.0; batch * heads * lq * lk];
        let mut out = vec![0.0; nq * c];
        for b in 0..batch {
            for h in 0..heads {
                let p_off = (b * heads + h) * lq * lk;
                let p = &mut probs[p_off..p_off + lq * lk];
                let qv = MatRef::new(qd, b * lq * c + h * dh, c, 1);
                let kv = MatRef::new(kd, b * lk * c + h * dh, c, 1);
                gemm(lq, dh, lk, scale, qv, kv.t(), 0.0, p, 0, lk);
                for row in p.chunks_exact_mut(lk) {
                    softmax_in_place(row);
                }
                let vv = MatRef::new(vd, b * lk * c + h * dh, c, 1);
                gemm(
                    lq,
                    lk,
                    dh,
                    1.0,
                    MatRef::dense(p, lk),
                    vv,
                    0.0,
                    &mut out,
                    b * lq * c + h * dh,
                    c,
                );
            }
        }
        self.push(
            Tensor::from_vec(nq, c, out),
            Op::Attention {
                q,
                k,
                v,
                heads,
                batch,
                probs,
            },
            &[q, k, v],
        )
    }

    /// Attention probabilities of an attention node, laid out as
    /// `[batch][head][query][key]`.
    pub fn attention_probs(&self, v: Var) -> Option<AttentionProbs<'_>> {
        match &self.nodes[v.0].op {
            Op::Attention {
                q,
                k,
                heads,
                batch,
                probs,
                ..
            } => Some(AttentionProbs {
                probs,
                batch: *batch,
                heads: *heads,
                queries: self.shape(*q).0 / batch,
                keys: self.shape(*k).0 / batch,
            }),
            _ => None,
        }
    }

    /// Every attention node recorded so far, in creation order.
    pub fn attention_nodes(&self) -> Vec<Var> {
        self.nodes
            .iter()
            .enumerate()
            .filter(|(_, n)| matches!(n.op, Op::Attention { .. }))
            .map(|(i, _)| Var(i))
            .collect()
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Var {
        assert!(!parts.is_empty());
        let m = self.shape(parts[0]).0;
        let widths: Vec<usize> = parts
            .iter()
            .map(|p| {
                assert_eq!(self.shape(*p).0, m, "concat_cols row counts differ");
                self.shape(*p).1
            })
            .collect();
        let n: usize = widths.iter().sum();
        let mut out = vec![0.0; m * n];
        let mut off = 0;
        for (p, w) in parts.iter().zip(&widths) {
            let t = self.value(*p);
            for r in 0..m {
                out[r * n + off..r * n + off + w].copy_from_slice(t.row(r));
            }
            off += w;
        }
        self.push(Tensor::from_vec(m, n, out), Op::ConcatCols(parts.to_vec()), parts)
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Var {
        assert!(!parts.is_empty());
        let n = self.shape(parts[0]).1;
        let mut out = Vec::new();
        for p in parts {
            let t = self.value(*p);
            assert_eq!(t.cols(), n, "concat_rows widths differ");
            out.extend_from_slice(t.data());
        }
        let m = out.len() / n.max(1);
        self.push(Tensor::from_vec(m, n, out), Op::ConcatRows(parts.to_vec()), parts)
    }

    /// Mean over each of `segments` equal, contiguous row blocks.
    pub fn segment_mean(&mut self, x: Var, segments: usize) -> Var {
        let t = self.value(x);
        let (m, n) = t.shape();
        assert!(segments > 0 && m % segments == 0, "rows {m} not divisible into {segments} segments");
        let len = m / segments;
        let mut out = vec![0.0; segments * n];
        for s in 0..segments {
            let dst = &mut out[s * n..(s + 1) * n];
            for r in s * len..(s + 1) * len {
                dst.iter_mut().zip(t.row(r)).for_each(|(a, b)| *a += b);
            }
            dst.iter_mut().for_each(|a| *a /= len as f64);
        }
        self.push(Tensor::from_vec(segments, n, out), Op::SegmentMean { x, segments }, &[x])
    }

    /// `out.flat[j] = x.flat[index[j]]`, or zero where `index[j] == GATHER_ZERO`.
    pub fn gather(&mut self, x: Var, index: Rc<[u32]>, rows: usize, cols: usize) -> Var {
        assert_eq!(index.len(), rows * cols, "gather index length");
        let src = self.value(x).data();
        let out = index
            .iter()
            .map(|&i| if i == GATHER_ZERO { 0.0 } else { src[i as usize] })
            .collect();
        self.push(Tensor::from_vec(rows, cols, out), Op::Gather { x, index }, &[x])
    }

    /// Stride-1, zero-padded ("same") depthwise 2-D convolution.
    ///
    /// `x` is `(batch·height·width)×C` in row-major spatial order, `w` is
    /// `(kernel²)×C`, `b` is `1×C`; `kernel` must be odd.
    pub fn depthwise_conv2d(
        &mut self,
        x: Var,
        w: Var,
        b: Var,
        batch: usize,
        height: usize,
        width: usize,
        kernel: usize,
    ) -> Var {
        assert!(kernel % 2 == 1, "kernel must be odd");
        let (m, c) = self.shape(x);
        assert_eq!(m, batch * height * width, "depthwise input rows");
        assert_eq!(self.shape(w), (kernel * kernel, c), "depthwise weight shape");
        assert_eq!(self.shape(b), (1, c), "depthwise bias shape");
        let xd = self.value(x).data();
        let wd = self.value(w).data();
        let bd = self.value(b).data();
        let pad = kernel / 2;
        let mut out = vec![0.0; m * c];
        for bi in 0..batch {
            for y in 0..height {
                for xx in 0..width {
                    let o = ((bi * height + y) * width + xx) * c;
                    let dst = &mut out[o..o + c];
                    dst.copy_from_slice(bd);
                    for i in 0..kernel {
                        let sy = y + i;
                        if sy < pad || sy - pad >= height {
                            continue;
                        }
                        let sy = sy - pad;
                        for j in 0..kernel {
                            let sx = xx + j;
                            if sx < pad || sx - pad >= width {
                                continue;
                            }
                            let sx = sx - pad;
                            let s = ((bi * height + sy) * width + sx) * c;
                            let wr = &wd[(i * kernel + j) * c..(i * kernel + j + 1) * c];
                            for ((d, xv), wv) in dst.iter_mut().zip(&xd[s..s + c]).zip(wr) {
                                *d += xv * wv;
                            }
                        }
                    }
                }
            }
        }
        let geom = ConvGeom {
            batch,
            height,
            width,
            kernel,
        };
        self.push(
            Tensor::from_vec(m, c, out),
            Op::DepthwiseConv2d { x, w, b, geom },
            &[x, w, b],
        )
    }

    /// Mean Euclidean norm of the rows of `x`, as a 1×1 tensor.
    ///
    /// The gradient of a zero-length row is taken to be zero.
    pub fn row_norm_mean(&mut self, x: Var) -> Var {
        let t = self.value(x);
        let norms: Vec<f64> = (0..t.rows())
            .map(|r| t.row(r).iter().map(|v| v * v).sum::<f64>().sqrt())
            .collect();
        let mean = norms.iter().sum::<f64>() / norms.len().max(1) as f64;
        self.push(Tensor::scalar(mean), Op::RowNormMean { x, norms }, &[x])
    }

    /// Mean negative log-softmax probability of each row's label.
    pub fn cross_entropy(&mut self, logits: Var, labels: &[usize]) -> Var {
        let t = self.value(logits);
        let (m, n) = t.shape();
        assert_eq!(labels.len(), m, "one label per logit row");
        let mut probs = t.data().to_vec();
        let mut loss = 0.0;
        for (r, row) in probs.chunks_exact_mut(n).enumerate() {
            assert!(labels[r] < n, "label {} out of range", labels[r]);
            let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let lse = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
            loss += lse - row[labels[r]];
            softmax_in_place(row);
        }
        self.push(
            Tensor::scalar(loss / m as f64),
            Op::CrossEntropy {
                logits,
                labels: labels.to_vec(),
                probs,
            },
            &[logits],
        )
    }

    /// Mean of all elements as a 1×1 tensor.
    pub fn mean(&mut self, x: Var) -> Var {
        let t = self.value(x);
        let m = t.data().iter().sum::<f64>() / t.len() as f64;
        self.push(Tensor::scalar(m), Op::Mean(x), &[x])
    }

    pub fn reshape(&mut self, x: Var, rows: usize, cols: usize) -> Var {
        let t = self.value(x).clone().reshaped(rows, cols);
        self.push(t, Op::Reshape(x), &[x])
    }

    /// Gradients of the 1×1 node `loss` with respect to every parameter.
    pub fn backward(&self, loss: Var) -> Gradients {
        assert_eq!(self.shape(loss), (1, 1), "backward needs a scalar loss");
        let mut grads: Vec<Option<Vec<f64>>> = Vec::with_capacity(self.nodes.len());
        grads.resize_with(self.nodes.len(), || None);
        grads[loss.0] = Some(vec![1.0]);
        let mut param_grads: Vec<Option<Tensor>> = vec![None; self.params.len()];

        for i in (0..=loss.0).rev() {
            let node = &self.nodes[i];
            if !node.requires_grad {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            self.backward_node(node, g, &mut grads, &mut param_grads);
        }
        Gradients::from_vec(param_grads)
    }

    fn backward_node(
        &self,
        node: &Node,
        g: Vec<f64>,
        grads: &mut [Option<Vec<f64>>],
        param_grads: &mut [Option<Tensor>],
    ) {
        let mut acc = |var: Var, contrib: Vec<f64>, this: &Self| {
            if !this.nodes[var.0].requires_grad {
                return;
            }
            match &mut grads[var.0] {
                Some(existing) => existing.iter_mut().zip(&contrib).for_each(|(a, b)| *a += b),
                slot @ None => *slot = Some(contrib),
            }
        };
        let needs = |var: Var| self.nodes[var.0].requires_grad;

        match &node.op {
            Op::Constant => {}
            Op::Param(id) => {
                let (r, c) = self.params.get(*id).shape();
                param_grads[id.0] = Some(Tensor::from_vec(r, c, g));
            }
            Op::MatMul(a, b) | Op::Linear { x: a, w: b, .. } => {
                let (m, k) = self.shape(*a);
                let n = self.shape(*b).1;
                if needs(*a) {
                    let mut da = vec![0.0; m * k];
                    gemm(
                        m,
                        n,
                        k,
                        1.0,
                        MatRef::dense(&g, n),
                        MatRef::dense(self.value(*b).data(), n).t(),
                        0.0,
                        &mut da,
                        0,
                        k,
                    );
                    acc(*a, da, self);
                }
                if needs(*b) {
                    let mut db = vec![0.0; k * n];
                    gemm(
                        k,
                        m,
                        n,
                        1.0,
                        MatRef::dense(self.value(*a).data(), k).t(),
                        MatRef::dense(&g, n),
                        0.0,
                        &mut db,
                        0,
                        n,
                    );
                    acc(*b, db, self);
                }
                if let Op::Linear { b: Some(bias), .. } = &node.op {
                    if needs(*bias) {
                        acc(*bias, col_sums(&g, n), self);
                    }
                }
            }
            Op::Add(a, b) => {
                acc(*a, g.clone(), self);
                acc(*b, g, self);
            }
            Op::Sub(a, b) => {
                acc(*a, g.clone(), self);
                acc(*b, g.into_iter().map(|v| -v).collect(), self);
            }
            Op::Mul(a, b) => {
                let va = self.value(*a).data();
                let vb = self.value(*b).data();
                if needs(*a) {
                    acc(*a, g.iter().zip(vb).map(|(g, y)| g * y).collect(), self);
                }
                if needs(*b) {
                    acc(*b, g.iter().zip(va).map(|(g, x)| g * x).collect(), self);
                }
            }
            Op::Scale(a, c) => acc(*a, g.into_iter().map(|v| v * c).collect(), self),
            Op::AddRow(a, row) => {
                let n = self.shape(*row).1;
                if needs(*row) {
                    acc(*row, col_sums(&g, n), self);
                }
                acc(*a, g, self);
            }
            Op::Gelu(a) => {
                let va = self.value(*a).data();
                acc(*a, g.iter().zip(va).map(|(g, x)| g * gelu_grad(*x)).collect(), self);
            }
            Op::Sigmoid(a) => {
                let y = node.value.as_ref().expect("sigmoid output").data();
                acc(*a, g.iter().zip(y).map(|(g, y)| g * y * (1.0 - y)).collect(), self);
            }
            Op::LayerNorm {
                x,
                gamma,
                beta,
                xhat,
                rstd,
            } => {
                let n = self.shape(*x).1;
                let gm = self.value(*gamma).data();
                if needs(*gamma) {
                    let mut dg = vec![0.0; n];
                    for (gr, hr) in g.chunks_exact(n).zip(xhat.chunks_exact(n)) {
                        dg.iter_mut().zip(gr.iter().zip(hr)).for_each(|(d, (a, b))| *d += a * b);
                    }
                    acc(*gamma, dg, self);
                }
                if needs(*beta) {
                    acc(*beta, col_sums(&g, n), self);
                }
                if needs(*x) {
                    let mut dx = vec![0.0; g.len()];
                    let nf = n as f64;
                    for (r, ((gr, hr), dr)) in g
                        .chunks_exact(n)
                        .zip(xhat.chunks_exact(n))
                        .zip(dx.chunks_exact_mut(n))
                        .enumerate()
                    {
                        let mut sum_d = 0.0;
                        let mut sum_dh = 0.0;
                        for c in 0..n {
                            let d = gr[c] * gm[c];
                            sum_d += d;
                            sum_dh += d * hr[c];
                        }
                        let rs = rstd[r];
                        for c in 0..n {
                            let d = gr[c] * gm[c];
                            dr[c] = rs / nf * (nf * d - sum_d - hr[c] * sum_dh);
                        }
                    }
                    acc(*x, dx, self);
                }
            }
            Op::Attention {
                q,
                k,
                v,
                heads,
                batch,
                probs,
            } => {
                let (nq, c) = self.shape(*q);
                let nk = self.shape(*k).0;
                let (lq, lk, dh) = (nq / batch, nk / batch, c / heads);
                let scale = 1.0 / (dh as f64).sqrt();
                let qd = self.value(*q).data();
                let kd = self.value(*k).data();
                let vd = self.value(*v).data();
                let mut dq = vec![0.0; nq * c];
                let mut dk = vec![0.0; nk * c];
                let mut dv = vec![0.0; nk * c];
                let mut dp = vec![0.0; lq * lk];
                for b in 0..*batch {
                    for h in 0..*heads {
                        let p_off = (b * heads + h) * lq * lk;
                        let p = &probs[p_off..p_off + lq * lk];
                        let q_off = b * lq * c + h * dh;
                        let k_off = b * lk * c + h * dh;
                        let gv = MatRef::new(&g, q_off, c, 1);
                        let vv = MatRef::new(vd, k_off, c, 1);
                        gemm(lq, dh, lk, 1.0, gv, vv.t(), 0.0, &mut dp, 0, lk);
                        gemm(lk, lq, dh, 1.0, MatRef::dense(p, lk).t(), gv, 1.0, &mut dv, k_off, c);
                        for (dr, pr) in dp.chunks_exact_mut(lk).zip(p.chunks_exact(lk)) {
                            let dot: f64 = dr.iter().zip(pr).map(|(a, b)| a * b).sum();
                            dr.iter_mut().zip(pr).for_each(|(d, p)| *d = p * (*d - dot));
                        }
                        let kv = MatRef::new(kd, k_off, c, 1);
                        let qv = MatRef::new(qd, q_off, c, 1);
                        gemm(lq, lk, dh, scale, MatRef::dense(&dp, lk), kv, 1.0, &mut dq, q_off, c);
                        gemm(lk, lq, dh, scale, MatRef::dense(&dp, lk).t(), qv, 1.0, &mut dk, k_off, c);
                    }
                }
                acc(*q, dq, self);
                acc(*k, dk, self);
                acc(*v, dv, self);
            }
            Op::ConcatCols(parts) => {
                let (m, n) = node.value.as_ref().expect("concat output").shape();
                let mut off = 0;
                for p in parts {
                    let w = self.shape(*p).1;
                    if needs(*p) {
                        let mut d = vec![0.0; m * w];
                        for r in 0..m {
                            d[r * w..(r + 1) * w].copy_from_slice(&g[r * n + off..r * n + off + w]);
                        }
                        acc(*p, d, self);
                    }
                    off += w;
                }
            }
            Op::ConcatRows(parts) => {
                let mut off = 0;
                for p in parts {
                    let len = self.value(*p).len();
                    if needs(*p) {
                        acc(*p, g[off..off + len].to_vec(), self);
                    }
                    off += len;
                }
            }
            Op::SegmentMean { x, segments } => {
                let (m, n) = self.shape(*x);
                let len = m / segments;
                let mut dx = vec![0.0; m * n];
                for s in 0..*segments {
                    let gs = &g[s * n..(s + 1) * n];
                    for r in s * len..(s + 1) * len {
                        dx[r * n..(r + 1) * n]
                            .iter_mut()
                            .zip(gs)
                            .for_each(|(d, g)| *d = g / len as f64);
                    }
                }
                acc(*x, dx, self);
            }
            Op::Gather { x, index } => {
                let mut dx = vec![0.0; self.value(*x).len()];
                for (gv, &i) in g.iter().zip(index.iter()) {
                    if i != GATHER_ZERO {
                        dx[i as usize] += gv;
                    }
                }
                acc(*x, dx, self);
            }
            Op::DepthwiseConv2d { x, w, b, geom } => {
                let c = self.shape(*x).1;
                if needs(*b) {
                    acc(*b, col_sums(&g, c), self);
                }
                let xd = self.value(*x).data();
                let wd = self.value(*w).data();
                let kernel = geom.kernel;
                let pad = kernel / 2;
                let mut dx = vec![0.0; xd.len()];
                let mut dw = vec![0.0; wd.len()];
                for bi in 0..geom.batch {
                    for y in 0..geom.height {
                        for xx in 0..geom.width {
                            let o = ((bi * geom.height + y) * geom.width + xx) * c;
                            let go = &g[o..o + c];
                            for i in 0..kernel {
                                let sy = y + i;
                                if sy < pad || sy - pad >= geom.height {
                                    continue;
                                }
                                let sy = sy - pad;
                                for j in 0..kernel {
                                    let sx = xx + j;
                                    if sx < pad || sx - pad >= geom.width {
                                        continue;
                                    }
                                    let sx = sx - pad;
                                    let s = ((bi * geom.height + sy) * geom.width + sx) * c;
                                    let kw = (i * kernel + j) * c;
                                    for ch in 0..c {
                                        dx[s + ch] += go[ch] * wd[kw + ch];
                                        dw[kw + ch] += go[ch] * xd[s + ch];
                                    }
                                }
                            }
                        }
                    }
                }
                acc(*x, dx, self);
                acc(*w, dw, self);
            }
            Op::RowNormMean { x, norms } => {
                let t = self.value(*x);
                let n = t.cols();
                let scale = g[0] / norms.len() as f64;
                let mut dx = vec![0.0; t.len()];
                for (r, norm) in norms.iter().enumerate() {
                    if *norm > 0.0 {
                        for c in 0..n {
                            dx[r * n + c] = scale * t.data()[r * n + c] / norm;
                        }
                    }
                }
                acc(*x, dx, self);
            }
            Op::CrossEntropy {
                logits,
                labels,
                probs,
            } => {
                let n = self.shape(*logits).1;
                let scale = g[0] / labels.len() as f64;
                let mut d: Vec<f64> = probs.iter().map(|p| p * scale).collect();
                for (r, &l) in labels.iter().enumerate() {
                    d[r * n + l] -= scale;
                }
                acc(*logits, d, self);
            }
            Op::Mean(x) => {
                let len = self.value(*x).len();
                acc(*x, vec![g[0] / len as f64; len], self);
            }
            Op::Reshape(x) => acc(*x, g, self),
        }
    }
}

/// View of the stored probabilities of an attention node.
pub struct AttentionProbs<'a> {
    pub probs: &'a [f64],
    pub batch: usize,
    pub heads: usize,
    pub queries: usize,
    pub keys: usize,
}

impl AttentionProbs<'_> {
    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.probs.chunks_exact(self.keys)
    }
}

fn col_sums(g: &[f64], n: usize) -> Vec<f64> {
    let mut out = vec![0.0; n];
    for row in g.chunks_exact(n) {
        out.iter_mut().zip(row).for_each(|(a, b)| *a += b);
    }
    out
}

fn softmax_in_place(row: &mut [f64]) {
    let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for v in row.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    row.iter_mut().for_each(|v| *v /= sum);
}

pub(crate) fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + (SQRT_2_OVER_PI * (x + GELU_C * x * x * x)).tanh())
}

fn gelu_grad(x: f64) -> f64 {
    let u = SQRT_2_OVER_PI * (x + GELU_C * x * x * x);
    let t = u.tanh();
    let du = SQRT_2_OVER_PI * (1.0 + 3.0 * GELU_C * x * x);
    0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * du
}
