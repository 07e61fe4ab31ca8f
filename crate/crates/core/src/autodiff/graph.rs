use super::kernels::{conv_backward_input, conv_backward_weight, conv_forward, ConvGeom};
use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Bounds applied to log-variances before they are exponentiated.
pub const LOGVAR_MIN: f64 = -10.0;
pub const LOGVAR_MAX: f64 = 10.0;
const PROB_EPS: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeId(usize);

impl NodeId {
    pub fn index(&self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    Conv2d { x: NodeId, w: NodeId, b: NodeId, geom: ConvGeom },
    /// Stored geometry is that of the forward convolution this op is the adjoint of.
    ConvTranspose2d { x: NodeId, w: NodeId, b: NodeId, geom: ConvGeom },
    Linear { x: NodeId, w: NodeId, b: NodeId },
    Relu(NodeId),
    Sigmoid(NodeId),
    GaussianSample { mu: NodeId, logvar: NodeId, noise: Vec<f64> },
    Concat { parts: Vec<(NodeId, usize)> },
    Reshape(NodeId),
    GatherRows { x: NodeId, index: Vec<usize> },
    ColumnAffine { x: NodeId, scale: Vec<f64> },
    Mse { pred: NodeId, target: Vec<f64> },
    Bce { prob: NodeId, target: Vec<f64> },
    BceLogitsRows { logits: NodeId, target: Vec<f64> },
    KlRows { mu: NodeId, logvar: NodeId },
    WeightedSum { x: NodeId, weights: Vec<f64> },
    Add(NodeId, NodeId),
    Scale(NodeId, f64),
}

#[derive(Debug, Clone)]
struct Node {
    value: Tensor,
    op: Op,
}

/// A recorded forward computation. Every op evaluates eagerly when added,
/// so node order is a topological order.
#[derive(Debug, Clone, Default)]
pub struct Graph {
    nodes: Vec<Node>,
}

fn shape_err(op: &'static str, a: &Tensor, b: &Tensor) -> Error {
    Error::Shape { op, left: a.shape.clone(), right: b.shape.clone() }
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

#[inline]
fn bce_logit(x: f64, t: f64) -> f64 {
    x.max(0.0) - x * t + (-x.abs()).exp().ln_1p()
}

#[inline]
fn clamp_logvar(v: f64) -> (f64, bool) {
    if v < LOGVAR_MIN {
        (LOGVAR_MIN, false)
    } else if v > LOGVAR_MAX {
        (LOGVAR_MAX, false)
    } else {
        (v, true)
    }
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, id: NodeId) -> &Tensor {
        &self.nodes[id.0].value
    }

    fn push(&mut self, value: Tensor, op: Op) -> NodeId {
        self.nodes.push(Node { value, op });
        NodeId(self.nodes.len() - 1)
    }

    fn check(&self, id: NodeId) -> Result<&Tensor> {
        self.nodes
            .get(id.0)
            .map(|n| &n.value)
            .ok_or_else(|| Error::GraphState(format!("node {} has not been computed in this graph", id.0)))
    }

    /// Parameter or input tensor.
    pub fn leaf(&mut self, t: Tensor) -> NodeId {
        self.push(t, Op::Leaf)
    }

    fn conv_geom(x: &Tensor, w: &Tensor, stride: usize, pad: usize, op: &'static str) -> Result<ConvGeom> {
        if x.shape.len() != 4 || w.shape.len() != 4 || w.shape[2] != w.shape[3] || x.shape[1] != w.shape[1] {
            return Err(shape_err(op, x, w));
        }
        let k = w.shape[2];
        if x.shape[2] + 2 * pad < k || x.shape[3] + 2 * pad < k || stride == 0 {
            return Err(shape_err(op, x, w));
        }
        Ok(ConvGeom {
            batch: x.shape[0],
            in_ch: x.shape[1],
            out_ch: w.shape[0],
            in_h: x.shape[2],
            in_w: x.shape[3],
            out_h: ConvGeom::out_size(x.shape[2], k, stride, pad),
            out_w: ConvGeom::out_size(x.shape[3], k, stride, pad),
            k,
            stride,
            pad,
        })
    }

    /// `x: [N,C,H,W]`, `w: [O,C,k,k]`, `b: [O]`.
    pub fn conv2d(&mut self, x: NodeId, w: NodeId, b: NodeId, stride: usize, pad: usize) -> Result<NodeId> {
        let (xv, wv, bv) = (self.check(x)?, self.check(w)?, self.check(b)?);
        let geom = Self::conv_geom(xv, wv, stride, pad, "conv2d")?;
        if bv.numel() != geom.out_ch {
            return Err(shape_err("conv2d bias", wv, bv));
        }
        let mut out = conv_forward(&xv.data, &wv.data, &geom);
        add_channel_bias(&mut out, &bv.data, geom.batch, geom.out_ch, geom.out_h * geom.out_w);
        let t = Tensor { shape: vec![geom.batch, geom.out_ch, geom.out_h, geom.out_w], data: out };
        Ok(self.push(t, Op::Conv2d { x, w, b, geom }))
    }

    /// Transposed convolution producing an `out_hw` spatial map.
    ///
    /// `x: [N,Ci,h,w]`, `w: [Ci,Co,k,k]`, `b: [Co]`. The output size must be
    /// one that a `(k, stride, pad)` convolution maps back onto `(h, w)`.
    pub fn conv_transpose2d(
        &mut self,
        x: NodeId,
        w: NodeId,
        b: NodeId,
        stride: usize,
        pad: usize,
        out_hw: (usize, usize),
    ) -> Result<NodeId> {
        let (xv, wv, bv) = (self.check(x)?, self.check(w)?, self.check(b)?);
        if xv.shape.len() != 4 || wv.shape.len() != 4 || xv.shape[1] != wv.shape[0] || wv.shape[2] != wv.shape[3] {
            return Err(shape_err("conv_transpose2d", xv, wv));
        }
        let k = wv.shape[2];
        let geom = ConvGeom {
            batch: xv.shape[0],
            in_ch: wv.shape[1],
            out_ch: wv.shape[0],
            in_h: out_hw.0,
            in_w: out_hw.1,
            out_h: xv.shape[2],
            out_w: xv.shape[3],
            k,
            stride,
            pad,
        };
        if stride == 0
            || out_hw.0 + 2 * pad < k
            || out_hw.1 + 2 * pad < k
            || ConvGeom::out_size(out_hw.0, k, stride, pad) != geom.out_h
            || ConvGeom::out_size(out_hw.1, k, stride, pad) != geom.out_w
        {
            return Err(Error::Shape {
                op: "conv_transpose2d output size",
                left: xv.shape.clone(),
                right: vec![out_hw.0, out_hw.1],
            });
        }
        if bv.numel() != geom.in_ch {
            return Err(shape_err("conv_transpose2d bias", wv, bv));
        }
        let mut out = conv_backward_input(&xv.data, &wv.data, &geom);
        add_channel_bias(&mut out, &bv.data, geom.batch, geom.in_ch, geom.in_h * geom.in_w);
        let t = Tensor { shape: vec![geom.batch, geom.in_ch, geom.in_h, geom.in_w], data: out };
        Ok(self.push(t, Op::ConvTranspose2d { x, w, b, geom }))
    }

    /// Fully connected layer `y = x Wᵀ + b` with `x: [N,in]`, `w: [out,in]`, `b: [out]`.
    pub fn linear(&mut self, x: NodeId, w: NodeId, b: NodeId) -> Result<NodeId> {
        let (xv, wv, bv) = (self.check(x)?, self.check(w)?, self.check(b)?);
        if xv.shape.len() != 2 || wv.shape.len() != 2 || xv.shape[1] != wv.shape[1] {
            return Err(shape_err("linear", xv, wv));
        }
        let (n, din, dout) = (xv.shape[0], wv.shape[1], wv.shape[0]);
        if bv.numel() != dout {
            return Err(shape_err("linear bias", wv, bv));
        }
        let mut out = vec![0.0; n * dout];
        for r in 0..n {
            let xr = &xv.data[r * din..][..din];
            for o in 0..dout {
                let wr = &wv.data[o * din..][..din];
                out[r * dout + o] = bv.data[o] + dot(xr, wr);
            }
        }
        Ok(self.push(Tensor { shape: vec![n, dout], data: out }, Op::Linear { x, w, b }))
    }

    pub fn relu(&mut self, x: NodeId) -> Result<NodeId> {
        let t = self.check(x)?.map(|v| v.max(0.0));
        Ok(self.push(t, Op::Relu(x)))
    }

    pub fn sigmoid(&mut self, x: NodeId) -> Result<NodeId> {
        let t = self.check(x)?.map(sigmoid);
        Ok(self.push(t, Op::Sigmoid(x)))
    }

    /// Reparameterized draw `μ + exp(½·logσ²)·ε` with explicit noise `ε`.
    pub fn gaussian_sample(&mut self, mu: NodeId, logvar: NodeId, noise: &[f64]) -> Result<NodeId> {
        let (m, lv) = (self.check(mu)?, self.check(logvar)?);
        if m.shape != lv.shape {
            return Err(shape_err("gaussian_sample", m, lv));
        }
        if noise.len() != m.numel() {
            return Err(Error::Shape { op: "gaussian_sample noise", left: m.shape.clone(), right: vec![noise.len()] });
        }
        let data = m
            .data
            .iter()
            .zip(&lv.data)
            .zip(noise)
            .map(|((&mu, &lv), &e)| mu + (0.5 * clamp_logvar(lv).0).exp() * e)
            .collect();
        let t = Tensor { shape: m.shape.clone(), data };
        Ok(self.push(t, Op::GaussianSample { mu, logvar, noise: noise.to_vec() }))
    }

    /// Concatenate 2-D tensors along the column axis.
    pub fn concat(&mut self, parts: &[NodeId]) -> Result<NodeId> {
        let first = self.check(*parts.first().ok_or(Error::Empty("concat inputs"))?)?;
        let n = first.rows();
        let mut widths = Vec::with_capacity(parts.len());
        for &p in parts {
            let t = self.check(p)?;
            if t.shape.len() != 2 || t.shape[0] != n {
                return Err(shape_err("concat", first, t));
            }
            widths.push((p, t.shape[1]));
        }
        let total: usize = widths.iter().map(|w| w.1).sum();
        let mut data = Vec::with_capacity(n * total);
        for r in 0..n {
            for &(p, w) in &widths {
                data.extend_from_slice(&self.nodes[p.0].value.data[r * w..][..w]);
            }
        }
        Ok(self.push(Tensor { shape: vec![n, total], data }, Op::Concat { parts: widths }))
    }

    pub fn reshape(&mut self, x: NodeId, shape: &[usize]) -> Result<NodeId> {
        let t = self.check(x)?.clone().reshaped(shape)?;
        Ok(self.push(t, Op::Reshape(x)))
    }

    /// Select rows of `x` (leading axis) by index; rows may repeat.
    pub fn gather_rows(&mut self, x: NodeId, index: &[usize]) -> Result<NodeId> {
        let t = self.check(x)?;
        let w = t.row_len();
        if let Some(&bad) = index.iter().find(|&&i| i >= t.rows()) {
            return Err(Error::Shape { op: "gather_rows", left: t.shape.clone(), right: vec![bad] });
        }
        let mut data = Vec::with_capacity(index.len() * w);
        for &i in index {
            data.extend_from_slice(t.row(i));
        }
        let mut shape = t.shape.clone();
        shape[0] = index.len();
        Ok(self.push(Tensor { shape, data }, Op::GatherRows { x, index: index.to_vec() }))
    }

    /// Per-column constant affine map `x[:, j] * scale[j] + shift[j]` on a 2-D tensor.
    pub fn column_affine(&mut self, x: NodeId, scale: &[f64], shift: &[f64]) -> Result<NodeId> {
        let t = self.check(x)?;
        if t.shape.len() != 2 || t.shape[1] != scale.len() || scale.len() != shift.len() {
            return Err(Error::Shape { op: "column_affine", left: t.shape.clone(), right: vec![scale.len()] });
        }
        let w = scale.len();
        let data = t.data.iter().enumerate().map(|(i, &v)| v * scale[i % w] + shift[i % w]).collect();
        let out = Tensor { shape: t.shape.clone(), data };
        Ok(self.push(out, Op::ColumnAffine { x, scale: scale.to_vec() }))
    }

    fn check_target(&self, x: NodeId, target: &Tensor, op: &'static str) -> Result<()> {
        let t = self.check(x)?;
        if t.numel() != target.numel() {
            return Err(shape_err(op, t, target));
        }
        Ok(())
    }

    /// Mean squared error against a constant target.
    pub fn mse(&mut self, pred: NodeId, target: &Tensor) -> Result<NodeId> {
        self.check_target(pred, target, "mse")?;
        let p = &self.nodes[pred.0].value;
        let v = p.data.iter().zip(&target.data).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / p.numel() as f64;
        Ok(self.push(Tensor::scalar(v), Op::Mse { pred, target: target.data.clone() }))
    }

    /// Mean binary cross-entropy of probabilities against a constant target.
    pub fn bce(&mut self, prob: NodeId, target: &Tensor) -> Result<NodeId> {
        self.check_target(prob, target, "bce")?;
        let p = &self.nodes[prob.0].value;
        let v = p
            .data
            .iter()
            .zip(&target.data)
            .map(|(&p, &t)| {
                let p = p.clamp(PROB_EPS, 1.0 - PROB_EPS);
                -(t * p.ln() + (1.0 - t) * (1.0 - p).ln())
            })
            .sum::<f64>()
            / p.numel() as f64;
        Ok(self.push(Tensor::scalar(v), Op::Bce { prob, target: target.data.clone() }))
    }

    /// Binary cross-entropy of `sigmoid(logits)` summed within each leading-axis row: `[N, ...] -> [N]`.
    pub fn bce_with_logits_rows(&mut self, logits: NodeId, target: &Tensor) -> Result<NodeId> {
        self.check_target(logits, target, "bce_with_logits_rows")?;
        let l = &self.nodes[logits.0].value;
        let (n, w) = (l.rows(), l.row_len());
        let data = (0..n)
            .map(|r| {
                l.data[r * w..][..w].iter().zip(&target.data[r * w..][..w]).map(|(&x, &t)| bce_logit(x, t)).sum()
            })
            .collect();
        Ok(self.push(Tensor { shape: vec![n], data }, Op::BceLogitsRows { logits, target: target.data.clone() }))
    }

    /// Per-row `½ Σ (μ² + σ² − 1 − log σ²)` against the standard normal: `[N,D] -> [N]`.
    pub fn kl_divergence_to_standard_normal(&mut self, mu: NodeId, logvar: NodeId) -> Result<NodeId> {
        let (m, lv) = (self.check(mu)?, self.check(logvar)?);
        if m.shape != lv.shape {
            return Err(shape_err("kl_divergence", m, lv));
        }
        let (n, w) = (m.rows(), m.row_len());
        let data = (0..n)
            .map(|r| {
                0.5 * m.data[r * w..][..w]
                    .iter()
                    .zip(&lv.data[r * w..][..w])
                    .map(|(&mu, &lv)| {
                        let lv = clamp_logvar(lv).0;
                        mu * mu + lv.exp() - 1.0 - lv
                    })
                    .sum::<f64>()
            })
            .collect();
        Ok(self.push(Tensor { shape: vec![n], data }, Op::KlRows { mu, logvar }))
    }

    /// Scalar `Σ_i weights[i]·x[i]` over all elements.
    pub fn weighted_sum(&mut self, x: NodeId, weights: &[f64]) -> Result<NodeId> {
        let t = self.check(x)?;
        if t.numel() != weights.len() {
            return Err(Error::Shape { op: "weighted_sum", left: t.shape.clone(), right: vec![weights.len()] });
        }
        let v = dot(&t.data, weights);
        Ok(self.push(Tensor::scalar(v), Op::WeightedSum { x, weights: weights.to_vec() }))
    }

    pub fn sum(&mut self, x: NodeId) -> Result<NodeId> {
        let n = self.check(x)?.numel();
        self.weighted_sum(x, &vec![1.0; n])
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (av, bv) = (self.check(a)?, self.check(b)?);
        if av.shape != bv.shape {
            return Err(shape_err("add", av, bv));
        }
        let data = av.data.iter().zip(&bv.data).map(|(x, y)| x + y).collect();
        let t = Tensor { shape: av.shape.clone(), data };
        Ok(self.push(t, Op::Add(a, b)))
    }

    pub fn scale(&mut self, x: NodeId, c: f64) -> Result<NodeId> {
        let t = self.check(x)?.map(|v| v * c);
        Ok(self.push(t, Op::Scale(x, c)))
    }

    /// Reverse-mode gradients of the scalar `loss` with respect to every node.
    pub fn backward(&self, loss: NodeId) -> Result<Gradients> {
        let lv = self.check(loss)?;
        if lv.numel() != 1 {
            return Err(Error::GraphState(format!("backward needs a scalar loss, got shape {:?}", lv.shape)));
        }
        let mut grads: Vec<Option<Tensor>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(Tensor { shape: lv.shape.clone(), data: vec![1.0] });
        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            self.propagate(i, &g, &mut grads);
            grads[i] = Some(g);
        }
        Ok(Gradients { grads, shapes: self.nodes.iter().map(|n| n.value.shape.clone()).collect() })
    }

    fn propagate(&self, i: usize, g: &Tensor, grads: &mut [Option<Tensor>]) {
        let node = &self.nodes[i];
        let val = |id: NodeId| &self.nodes[id.0].value;
        let mut acc = |id: NodeId, data: Vec<f64>| {
            let slot = &mut grads[id.0];
            match slot {
                Some(t) => {
                    for (a, b) in t.data.iter_mut().zip(&data) {
                        *a += b;
                    }
                }
                None => *slot = Some(Tensor { shape: self.nodes[id.0].value.shape.clone(), data }),
            }
        };
        match &node.op {
            Op::Leaf => {}
            Op::Conv2d { x, w, b, geom } => {
                acc(*x, conv_backward_input(&g.data, &val(*w).data, geom));
                acc(*w, conv_backward_weight(&val(*x).data, &g.data, geom));
                acc(*b, channel_sums(&g.data, geom.batch, geom.out_ch, geom.out_h * geom.out_w));
            }
            Op::ConvTranspose2d { x, w, b, geom } => {
                acc(*x, conv_forward(&g.data, &val(*w).data, geom));
                acc(*w, conv_backward_weight(&g.data, &val(*x).data, geom));
                acc(*b, channel_sums(&g.data, geom.batch, geom.in_ch, geom.in_h * geom.in_w));
            }
            Op::Linear { x, w, b } => {
                let (xv, wv) = (val(*x), val(*w));
                let (n, din, dout) = (xv.shape[0], wv.shape[1], wv.shape[0]);
                let mut gx = vec![0.0; n * din];
                let mut gw = vec![0.0; dout * din];
                let mut gb = vec![0.0; dout];
                for r in 0..n {
                    let xr = &xv.data[r * din..][..din];
                    let gxr = &mut gx[r * din..][..din];
                    for o in 0..dout {
                        let go = g.data[r * dout + o];
                        if go == 0.0 {
                            continue;
                        }
                        gb[o] += go;
                        let wr = &wv.data[o * din..][..din];
                        let gwr = &mut gw[o * din..][..din];
                        for k in 0..din {
                            gxr[k] += go * wr[k];
                            gwr[k] += go * xr[k];
                        }
                    }
                }
                acc(*x, gx);
                acc(*w, gw);
                acc(*b, gb);
            }
            Op::Relu(x) => {
                let d = val(*x).data.iter().zip(&g.data).map(|(&v, &g)| if v > 0.0 { g } else { 0.0 }).collect();
                acc(*x, d);
            }
            Op::Sigmoid(x) => {
                let d = node.value.data.iter().zip(&g.data).map(|(&s, &g)| g * s * (1.0 - s)).collect();
                acc(*x, d);
            }
            Op::GaussianSample { mu, logvar, noise } => {
                acc(*mu, g.data.clone());
                let d = val(*logvar)
                    .data
                    .iter()
                    .zip(noise)
                    .zip(&g.data)
                    .map(|((&lv, &e), &g)| {
                        let (c, inside) = clamp_logvar(lv);
                        if inside {
                            g * 0.5 * (0.5 * c).exp() * e
                        } else {
                            0.0
                        }
                    })
                    .collect();
                acc(*logvar, d);
            }
            Op::Concat { parts } => {
                let total: usize = parts.iter().map(|p| p.1).sum();
                let n = node.value.rows();
                let mut offset = 0;
                for &(p, w) in parts {
                    let mut d = Vec::with_capacity(n * w);
                    for r in 0..n {
                        d.extend_from_slice(&g.data[r * total + offset..][..w]);
                    }
                    acc(p, d);
                    offset += w;
                }
            }
            Op::Reshape(x) => acc(*x, g.data.clone()),
            Op::GatherRows { x, index } => {
                let xv = val(*x);
                let w = xv.row_len();
                let mut d = vec![0.0; xv.numel()];
                for (r, &src) in index.iter().enumerate() {
                    for k in 0..w {
                        d[src * w + k] += g.data[r * w + k];
                    }
                }
                acc(*x, d);
            }
            Op::ColumnAffine { x, scale } => {
                let w = scale.len();
                acc(*x, g.data.iter().enumerate().map(|(i, &g)| g * scale[i % w]).collect());
            }
            Op::Mse { pred, target } => {
                let p = val(*pred);
                let c = 2.0 * g.item() / p.numel() as f64;
                acc(*pred, p.data.iter().zip(target).map(|(a, b)| c * (a - b)).collect());
            }
            Op::Bce { prob, target } => {
                let p = val(*prob);
                let c = g.item() / p.numel() as f64;
                let d = p
                    .data
                    .iter()
                    .zip(target)
                    .map(|(&p, &t)| {
                        let p = p.clamp(PROB_EPS, 1.0 - PROB_EPS);
                        c * (p - t) / (p * (1.0 - p))
                    })
                    .collect();
                acc(*prob, d);
            }
            Op::BceLogitsRows { logits, target } => {
                let l = val(*logits);
                let w = l.row_len();
                let d = l.data.iter().zip(target).enumerate().map(|(i, (&x, &t))| g.data[i / w] * (sigmoid(x) - t)).collect();
                acc(*logits, d);
            }
            Op::KlRows { mu, logvar } => {
                let (m, lv) = (val(*mu), val(*logvar));
                let w = m.row_len();
                acc(*mu, m.data.iter().enumerate().map(|(i, &mu)| g.data[i / w] * mu).collect());
                let d = lv
                    .data
                    .iter()
                    .enumerate()
                    .map(|(i, &lv)| {
                        let (c, inside) = clamp_logvar(lv);
                        if inside {
                            g.data[i / w] * 0.5 * (c.exp() - 1.0)
                        } else {
                            0.0
                        }
                    })
                    .collect();
                acc(*logvar, d);
            }
            Op::WeightedSum { x, weights } => {
                let s = g.item();
                acc(*x, weights.iter().map(|w| w * s).collect());
            }
            Op::Add(a, b) => {
                acc(*a, g.data.clone());
                acc(*b, g.data.clone());
            }
            Op::Scale(x, c) => acc(*x, g.data.iter().map(|v| v * c).collect()),
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn add_channel_bias(out: &mut [f64], bias: &[f64], batch: usize, ch: usize, plane: usize) {
    for n in 0..batch {
        for (c, &b) in bias.iter().enumerate().take(ch) {
            for v in &mut out[(n * ch + c) * plane..][..plane] {
                *v += b;
            }
        }
    }
}

fn channel_sums(g: &[f64], batch: usize, ch: usize, plane: usize) -> Vec<f64> {
    let mut out = vec![0.0; ch];
    for n in 0..batch {
        for (c, o) in out.iter_mut().enumerate() {
            *o += g[(n * ch + c) * plane..][..plane].iter().sum::<f64>();
        }
    }
    out
}

/// Gradients from one backward pass, indexed by node.
#[derive(Debug, Clone)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
    shapes: Vec<Vec<usize>>,
}

impl Gradients {
    /// Gradient for `id`; zeros when the node does not influence the loss.
    pub fn get(&self, id: NodeId) -> Tensor {
        match self.grads.get(id.0) {
            Some(Some(t)) => t.clone(),
            _ => Tensor::zeros(self.shapes.get(id.0).map_or(&[1][..], |s| s.as_slice())),
        }
    }

    pub fn take(&mut self, id: NodeId) -> Tensor {
        match self.grads.get_mut(id.0).and_then(Option::take) {
            Some(t) => t,
            None => Tensor::zeros(self.shapes.get(id.0).map_or(&[1][..], |s| s.as_slice())),
        }
    }
}
