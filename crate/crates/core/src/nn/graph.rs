//! Tape-based reverse-mode differentiation over [`Tensor`] values.
//!
//! Every op appends a node holding its forward value. [`Graph::backward`]
//! walks the tape in reverse, accumulating gradients for graph inputs (read
//! back through [`Graph::grad`]) and for parameters (added into the
//! [`ParameterStore`]). Ops with learned weights also record their
//! multiply-accumulate count, keyed by the layer path of their weights.

use super::attention::{
    window_attention_backward, window_attention_forward, window_attention_macs, WindowGeom,
};
use super::conv::{
    conv2d_backward, conv2d_forward, conv2d_geometry, conv2d_macs, conv_transpose2d_backward,
    conv_transpose2d_forward, conv_transpose2d_geometry, conv_transpose2d_macs,
};
use super::params::{ParamId, ParameterStore};
use super::tensor::Tensor;
use crate::error::{HaruError, Result};
use crate::scalar::Scalar;

pub const LAYER_NORM_EPS: f64 = 1e-5;

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2 / pi)
const GELU_A: f64 = 0.044_715;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

#[derive(Clone, Debug)]
enum Op<T> {
    Input,
    Param(ParamId),
    Conv {
        x: Var,
        w: Var,
        b: Option<Var>,
        stride: usize,
        pad: usize,
    },
    ConvT {
        x: Var,
        w: Var,
        b: Option<Var>,
        stride: usize,
        pad: usize,
    },
    LeakyRelu {
        x: Var,
        slope: T,
    },
    Gelu {
        x: Var,
    },
    Sigmoid {
        x: Var,
    },
    Add {
        a: Var,
        b: Var,
    },
    Mul {
        a: Var,
        b: Var,
    },
    Scale {
        x: Var,
        s: T,
    },
    Concat {
        a: Var,
        b: Var,
    },
    LayerNorm {
        x: Var,
        gain: Var,
        bias: Var,
        xhat: Vec<T>,
        rstd: Vec<T>,
    },
    Softmax {
        x: Var,
    },
    Attention {
        qkv: Var,
        table: Var,
        heads: usize,
        window: usize,
        shift: usize,
    },
    AvgPool {
        x: Var,
    },
    ChannelMul {
        x: Var,
        g: Var,
    },
    Mse {
        pred: Var,
        target: Var,
    },
    Sum {
        x: Var,
    },
}

#[derive(Clone, Debug)]
struct Node<T> {
    value: Tensor<T>,
    op: Op<T>,
    needs_grad: bool,
    name: Option<String>,
}

#[derive(Clone, Debug, Default)]
pub struct Graph<T> {
    nodes: Vec<Node<T>>,
    grads: Vec<Option<Tensor<T>>>,
    macs: Vec<(String, u64)>,
}

fn same_shape<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>, what: &str) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(HaruError::Shape(format!(
            "{what}: {:?} vs {:?}",
            a.shape(),
            b.shape()
        )));
    }
    Ok(())
}

/// Strips the final `.component` of a parameter path.
fn layer_of(name: &str) -> &str {
    name.rsplit_once('.').map_or(name, |(head, _)| head)
}

impl<T: Scalar> Graph<T> {
    pub fn new() -> Self {
        Graph {
            nodes: Vec::new(),
            grads: Vec::new(),
            macs: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    pub fn into_value(mut self, v: Var) -> Tensor<T> {
        std::mem::replace(&mut self.nodes[v.0].value, Tensor::zeros(&[1]))
    }

    /// Gradient of the last backward pass with respect to `v`, if it was on
    /// a differentiable path.
    pub fn grad(&self, v: Var) -> Option<&Tensor<T>> {
        self.grads.get(v.0).and_then(|g| g.as_ref())
    }

    /// Multiply-accumulate counts recorded so far, in execution order.
    pub fn macs(&self) -> &[(String, u64)] {
        &self.macs
    }

    /// Sign bits of every LeakyReLU input, in tape order. Finite-difference
    /// probes whose two sides disagree here straddle a kink.
    pub fn kink_pattern(&self) -> Vec<bool> {
        let mut out = Vec::new();
        for node in &self.nodes {
            if let Op::LeakyRelu { x, .. } = node.op {
                out.extend(self.value(x).data().iter().map(|&v| v >= T::zero()));
            }
        }
        out
    }

    pub fn total_macs(&self) -> u64 {
        self.macs.iter().map(|(_, m)| m).sum()
    }

    fn push(&mut self, value: Tensor<T>, op: Op<T>, needs_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            needs_grad,
            name: None,
        });
        Var(self.nodes.len() - 1)
    }

    fn needs(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    fn label(&self, weight: Var, suffix: &str) -> String {
        let base = self.nodes[weight.0]
            .name
            .as_deref()
            .map_or("unnamed", layer_of);
        format!("{base}{suffix}")
    }

    pub fn input(&mut self, value: Tensor<T>, requires_grad: bool) -> Var {
        self.push(value, Op::Input, requires_grad)
    }

    pub fn param(&mut self, store: &ParameterStore<T>, id: ParamId) -> Var {
        let v = self.push(store.value(id).clone(), Op::Param(id), true);
        self.nodes[v.0].name = Some(store.name(id).to_string());
        v
    }

    pub fn conv2d(
        &mut self,
        x: Var,
        w: Var,
        b: Option<Var>,
        stride: usize,
        pad: usize,
    ) -> Result<Var> {
        let xv = self.value(x);
        let (g, cout) = conv2d_geometry(xv, self.value(w), stride, pad)?;
        let batch = xv.shape()[0];
        let out = conv2d_forward(xv, self.value(w), b.map(|b| self.value(b)), stride, pad)?;
        let macs = batch as u64 * conv2d_macs(g.channels, cout, g.k, g.hout, g.wout);
        self.macs.push((self.label(w, ""), macs));
        let ng = self.needs(x) || self.needs(w) || b.is_some_and(|b| self.needs(b));
        Ok(self.push(
            out,
            Op::Conv {
                x,
                w,
                b,
                stride,
                pad,
            },
            ng,
        ))
    }

    pub fn conv_transpose2d(
        &mut self,
        x: Var,
        w: Var,
        b: Option<Var>,
        stride: usize,
        pad: usize,
    ) -> Result<Var> {
        let xv = self.value(x);
        let (g, cin, cout) = conv_transpose2d_geometry(xv, self.value(w), stride, pad)?;
        let batch = xv.shape()[0];
        let out =
            conv_transpose2d_forward(xv, self.value(w), b.map(|b| self.value(b)), stride, pad)?;
        let macs = batch as u64 * conv_transpose2d_macs(cin, cout, g.k, g.hout, g.wout);
        self.macs.push((self.label(w, ""), macs));
        let ng = self.needs(x) || self.needs(w) || b.is_some_and(|b| self.needs(b));
        Ok(self.push(
            out,
            Op::ConvT {
                x,
                w,
                b,
                stride,
                pad,
            },
            ng,
        ))
    }

    pub fn leaky_relu(&mut self, x: Var, slope: T) -> Var {
        let out = self
            .value(x)
            .map(|v| if v >= T::zero() { v } else { slope * v });
        let ng = self.needs(x);
        self.push(out, Op::LeakyRelu { x, slope }, ng)
    }

    /// Tanh approximation of GELU.
    pub fn gelu(&mut self, x: Var) -> Var {
        let (c, a, half) = (T::of(GELU_C), T::of(GELU_A), T::of(0.5));
        let out = self
            .value(x)
            .map(|v| half * v * (T::one() + (c * (v + a * v * v * v)).tanh()));
        let ng = self.needs(x);
        self.push(out, Op::Gelu { x }, ng)
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        let out = self.value(x).map(|v| T::one() / (T::one() + (-v).exp()));
        let ng = self.needs(x);
        self.push(out, Op::Sigmoid { x }, ng)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        same_shape(self.value(a), self.value(b), "add")?;
        let mut out = self.value(a).clone();
        out.add_assign(self.value(b));
        let ng = self.needs(a) || self.needs(b);
        Ok(self.push(out, Op::Add { a, b }, ng))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        same_shape(self.value(a), self.value(b), "mul")?;
        let data = self
            .value(a)
            .data()
            .iter()
            .zip(self.value(b).data())
            .map(|(&x, &y)| x * y)
            .collect();
        let out = Tensor::from_vec(self.value(a).shape(), data)?;
        let ng = self.needs(a) || self.needs(b);
        Ok(self.push(out, Op::Mul { a, b }, ng))
    }

    pub fn scale(&mut self, x: Var, s: T) -> Var {
        let out = self.value(x).map(|v| v * s);
        let ng = self.needs(x);
        self.push(out, Op::Scale { x, s }, ng)
    }

    /// Concatenates two rank-4 tensors along the channel axis, `a` first.
    pub fn concat_channels(&mut self, a: Var, b: Var) -> Result<Var> {
        let (n, ca, h, w) = self.value(a).dims4()?;
        let (nb, cb, hb, wb) = self.value(b).dims4()?;
        if (n, h, w) != (nb, hb, wb) {
            return Err(HaruError::Shape(format!(
                "concat of {:?} and {:?}",
                self.value(a).shape(),
                self.value(b).shape()
            )));
        }
        let plane = h * w;
        let mut data = Vec::with_capacity(n * (ca + cb) * plane);
        for i in 0..n {
            data.extend_from_slice(&self.value(a).data()[i * ca * plane..(i + 1) * ca * plane]);
            data.extend_from_slice(&self.value(b).data()[i * cb * plane..(i + 1) * cb * plane]);
        }
        let out = Tensor::from_vec(&[n, ca + cb, h, w], data)?;
        let ng = self.needs(a) || self.needs(b);
        Ok(self.push(out, Op::Concat { a, b }, ng))
    }

    /// Normalizes every pixel's channel vector, then applies per-channel
    /// `gain` and `bias`.
    pub fn layer_norm(&mut self, x: Var, gain: Var, bias: Var) -> Result<Var> {
        let (n, c, h, w) = self.value(x).dims4()?;
        if self.value(gain).shape() != [c] || self.value(bias).shape() != [c] {
            return Err(HaruError::Shape(format!(
                "layer norm affine parameters for {c} channels"
            )));
        }
        let plane = h * w;
        let eps = T::of(LAYER_NORM_EPS);
        let cf = T::of(c as f64);
        let xs = self.value(x).data();
        let (gs, bs) = (self.value(gain).data(), self.value(bias).data());
        let mut xhat = vec![T::zero(); xs.len()];
        let mut rstd = vec![T::zero(); n * plane];
        let mut out = vec![T::zero(); xs.len()];
        for s in 0..n {
            let base = s * c * plane;
            for p in 0..plane {
                let mean = (0..c).fold(T::zero(), |a, ch| a + xs[base + ch * plane + p]) / cf;
                let var = (0..c).fold(T::zero(), |a, ch| {
                    let d = xs[base + ch * plane + p] - mean;
                    a + d * d
                }) / cf;
                let r = T::one() / (var + eps).sqrt();
                rstd[s * plane + p] = r;
                for ch in 0..c {
                    let i = base + ch * plane + p;
                    xhat[i] = (xs[i] - mean) * r;
                    out[i] = gs[ch] * xhat[i] + bs[ch];
                }
            }
        }
        let out = Tensor::from_vec(&[n, c, h, w], out)?;
        let ng = self.needs(x) || self.needs(gain) || self.needs(bias);
        Ok(self.push(
            out,
            Op::LayerNorm {
                x,
                gain,
                bias,
                xhat,
                rstd,
            },
            ng,
        ))
    }

    pub fn softmax_lastdim(&mut self, x: Var) -> Result<Var> {
        let xv = self.value(x);
        let last = *xv
            .shape()
            .last()
            .ok_or_else(|| HaruError::Shape("softmax of a rank-0 tensor".into()))?;
        let mut out = xv.clone();
        for row in out.data_mut().chunks_mut(last) {
            let max = row.iter().fold(T::neg_infinity(), |a, &b| a.max(b));
            let mut total = T::zero();
            for v in row.iter_mut() {
                *v = (*v - max).exp();
                total = total + *v;
            }
            for v in row.iter_mut() {
                *v = *v / total;
            }
        }
        let ng = self.needs(x);
        Ok(self.push(out, Op::Softmax { x }, ng))
    }

    /// Window self-attention over a packed `[N, 3C, H, W]` qkv map with a
    /// `[heads, (2w-1)^2]` relative position bias table.
    pub fn window_attention(
        &mut self,
        qkv: Var,
        table: Var,
        heads: usize,
        window: usize,
        shift: usize,
    ) -> Result<Var> {
        let g = WindowGeom::new(self.value(qkv).shape(), heads, window, shift)?;
        let out =
            window_attention_forward(self.value(qkv), self.value(table), heads, window, shift)?;
        let macs = window_attention_macs(g.batch, g.channels, g.h, g.w, g.window);
        self.macs.push((self.label(table, ".attn"), macs));
        let ng = self.needs(qkv) || self.needs(table);
        Ok(self.push(
            out,
            Op::Attention {
                qkv,
                table,
                heads,
                window,
                shift,
            },
            ng,
        ))
    }

    /// `[N, C, H, W] -> [N, C, 1, 1]` spatial mean.
    pub fn global_avg_pool(&mut self, x: Var) -> Result<Var> {
        let (n, c, h, w) = self.value(x).dims4()?;
        let plane = h * w;
        let inv = T::of(1.0 / plane as f64);
        let data = self
            .value(x)
            .data()
            .chunks(plane)
            .map(|ch| ch.iter().fold(T::zero(), |a, &b| a + b) * inv)
            .collect();
        let out = Tensor::from_vec(&[n, c, 1, 1], data)?;
        let ng = self.needs(x);
        Ok(self.push(out, Op::AvgPool { x }, ng))
    }

    /// Scales every channel of `x` by the matching entry of `g` (`[N, C, 1, 1]`).
    pub fn channel_mul(&mut self, x: Var, g: Var) -> Result<Var> {
        let (n, c, h, w) = self.value(x).dims4()?;
        if self.value(g).shape() != [n, c, 1, 1] {
            return Err(HaruError::Shape(format!(
                "channel gate {:?} for {n}x{c}",
                self.value(g).shape()
            )));
        }
        let plane = h * w;
        let mut out = self.value(x).clone();
        for (chunk, &gate) in out.data_mut().chunks_mut(plane).zip(self.value(g).data()) {
            for v in chunk {
                *v = *v * gate;
            }
        }
        let ng = self.needs(x) || self.needs(g);
        Ok(self.push(out, Op::ChannelMul { x, g }, ng))
    }

    /// Mean squared difference over all elements.
    pub fn mse_loss(&mut self, pred: Var, target: Var) -> Result<Var> {
        same_shape(self.value(pred), self.value(target), "mse loss")?;
        let (p, t) = (self.value(pred), self.value(target));
        let total = p
            .data()
            .iter()
            .zip(t.data())
            .fold(T::zero(), |a, (&x, &y)| a + (x - y) * (x - y));
        let out = Tensor::scalar(total / T::of(p.numel() as f64));
        let ng = self.needs(pred) || self.needs(target);
        Ok(self.push(out, Op::Mse { pred, target }, ng))
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let out = Tensor::scalar(self.value(x).sum());
        let ng = self.needs(x);
        self.push(out, Op::Sum { x }, ng)
    }

    /// Reverse pass from a scalar `loss`. Parameter gradients are added to
    /// `store`; previous input gradients on this graph are replaced.
    pub fn backward(&mut self, loss: Var, store: &mut ParameterStore<T>) -> Result<()> {
        if loss.0 >= self.nodes.len() {
            return Err(HaruError::Invalid(
                "backward called before the forward pass".into(),
            ));
        }
        if self.value(loss).numel() != 1 {
            return Err(HaruError::Shape(format!(
                "loss must be a scalar, got {:?}",
                self.value(loss).shape()
            )));
        }
        let mut grads: Vec<Option<Tensor<T>>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(Tensor::full(self.value(loss).shape(), T::one()));

        for idx in (0..=loss.0).rev() {
            let Some(gout) = grads[idx].take() else {
                continue;
            };
            if !self.nodes[idx].needs_grad {
                continue;
            }
            let contributions = self.node_backward(idx, &gout)?;
            for (var, g) in contributions {
                if !self.needs(var) {
                    continue;
                }
                match &mut grads[var.0] {
                    Some(acc) => acc.add_assign(&g),
                    slot => *slot = Some(g),
                }
            }
            if let Op::Param(id) = self.nodes[idx].op {
                store.accumulate_grad(id, &gout)?;
            }
            grads[idx] = Some(gout);
        }
        self.grads = grads;
        Ok(())
    }

    fn node_backward(&self, idx: usize, gout: &Tensor<T>) -> Result<Vec<(Var, Tensor<T>)>> {
        let node = &self.nodes[idx];
        let elementwise = |x: Var, f: &dyn Fn(T, T) -> T| -> Result<Tensor<T>> {
            let data = self
                .value(x)
                .data()
                .iter()
                .zip(gout.data())
                .map(|(&v, &g)| f(v, g))
                .collect();
            Tensor::from_vec(self.value(x).shape(), data)
        };
        let mut out = Vec::new();
        match &node.op {
            Op::Input | Op::Param(_) => {}
            &Op::Conv {
                x,
                w,
                b,
                stride,
                pad,
            } => {
                let g = conv2d_backward(
                    self.value(x),
                    self.value(w),
                    gout,
                    stride,
                    pad,
                    self.needs(x),
                )?;
                if let Some(dx) = g.dx {
                    out.push((x, dx));
                }
                out.push((w, g.dw));
                if let Some(b) = b {
                    out.push((b, g.db));
                }
            }
            &Op::ConvT {
                x,
                w,
                b,
                stride,
                pad,
            } => {
                let g = conv_transpose2d_backward(
                    self.value(x),
                    self.value(w),
                    gout,
                    stride,
                    pad,
                    self.needs(x),
                )?;
                if let Some(dx) = g.dx {
                    out.push((x, dx));
                }
                out.push((w, g.dw));
                if let Some(b) = b {
                    out.push((b, g.db));
                }
            }
            &Op::LeakyRelu { x, slope } => {
                out.push((
                    x,
                    elementwise(x, &|v, g| if v >= T::zero() { g } else { slope * g })?,
                ));
            }
            &Op::Gelu { x } => {
                let (c, a, half) = (T::of(GELU_C), T::of(GELU_A), T::of(0.5));
                let three = T::of(3.0);
                out.push((
                    x,
                    elementwise(x, &|v, g| {
                        let t = (c * (v + a * v * v * v)).tanh();
                        let d = half * (T::one() + t)
                            + half * v * (T::one() - t * t) * c * (T::one() + three * a * v * v);
                        g * d
                    })?,
                ));
            }
            &Op::Sigmoid { x } => {
                let data = node
                    .value
                    .data()
                    .iter()
                    .zip(gout.data())
                    .map(|(&y, &g)| g * y * (T::one() - y))
                    .collect();
                out.push((x, Tensor::from_vec(node.value.shape(), data)?));
            }
            &Op::Add { a, b } => {
                out.push((a, gout.clone()));
                out.push((b, gout.clone()));
            }
            &Op::Mul { a, b } => {
                let (av, bv) = (self.value(a).data(), self.value(b).data());
                let da = gout.data().iter().zip(bv).map(|(&g, &y)| g * y).collect();
                let db = gout.data().iter().zip(av).map(|(&g, &y)| g * y).collect();
                out.push((a, Tensor::from_vec(gout.shape(), da)?));
                out.push((b, Tensor::from_vec(gout.shape(), db)?));
            }
            &Op::Scale { x, s } => out.push((x, gout.map(|g| g * s))),
            &Op::Concat { a, b } => {
                let (n, ca, h, w) = self.value(a).dims4()?;
                let cb = self.value(b).shape()[1];
                let plane = h * w;
                let (mut da, mut db) = (
                    Vec::with_capacity(n * ca * plane),
                    Vec::with_capacity(n * cb * plane),
                );
                for s in gout.data().chunks((ca + cb) * plane) {
                    da.extend_from_slice(&s[..ca * plane]);
                    db.extend_from_slice(&s[ca * plane..]);
                }
                out.push((a, Tensor::from_vec(self.value(a).shape(), da)?));
                out.push((b, Tensor::from_vec(self.value(b).shape(), db)?));
            }
            Op::LayerNorm {
                x,
                gain,
                bias,
                xhat,
                rstd,
            } => {
                let (n, c, h, w) = self.value(*x).dims4()?;
                let plane = h * w;
                let gs = self.value(*gain).data();
                let cf = T::of(c as f64);
                let mut dx = vec![T::zero(); n * c * plane];
                let mut dgain = vec![T::zero(); c];
                let mut dbias = vec![T::zero(); c];
                let go = gout.data();
                for s in 0..n {
                    let base = s * c * plane;
                    for p in 0..plane {
                        let mut m1 = T::zero();
                        let mut m2 = T::zero();
                        for ch in 0..c {
                            let i = base + ch * plane + p;
                            let dxh = go[i] * gs[ch];
                            m1 = m1 + dxh;
                            m2 = m2 + dxh * xhat[i];
                            dgain[ch] = dgain[ch] + go[i] * xhat[i];
                            dbias[ch] = dbias[ch] + go[i];
                        }
                        m1 = m1 / cf;
                        m2 = m2 / cf;
                        let r = rstd[s * plane + p];
                        for ch in 0..c {
                            let i = base + ch * plane + p;
                            dx[i] = r * (go[i] * gs[ch] - m1 - xhat[i] * m2);
                        }
                    }
                }
                out.push((*x, Tensor::from_vec(&[n, c, h, w], dx)?));
                out.push((*gain, Tensor::from_vec(&[c], dgain)?));
                out.push((*bias, Tensor::from_vec(&[c], dbias)?));
            }
            &Op::Softmax { x } => {
                let last = *node
                    .value
                    .shape()
                    .last()
                    .expect("softmax output has a last axis");
                let mut dx = Vec::with_capacity(gout.numel());
                for (y, g) in node.value.data().chunks(last).zip(gout.data().chunks(last)) {
                    let dot = y.iter().zip(g).fold(T::zero(), |a, (&p, &q)| a + p * q);
                    dx.extend(y.iter().zip(g).map(|(&p, &q)| p * (q - dot)));
                }
                out.push((x, Tensor::from_vec(node.value.shape(), dx)?));
            }
            &Op::Attention {
                qkv,
                table,
                heads,
                window,
                shift,
            } => {
                let (dqkv, dtable) = window_attention_backward(
                    self.value(qkv),
                    self.value(table),
                    gout,
                    heads,
                    window,
                    shift,
                )?;
                out.push((qkv, dqkv));
                out.push((table, dtable));
            }
            &Op::AvgPool { x } => {
                let (_, _, h, w) = self.value(x).dims4()?;
                let plane = h * w;
                let inv = T::of(1.0 / plane as f64);
                let mut dx = Vec::with_capacity(self.value(x).numel());
                for &g in gout.data() {
                    dx.extend(std::iter::repeat_n(g * inv, plane));
                }
                out.push((x, Tensor::from_vec(self.value(x).shape(), dx)?));
            }
            &Op::ChannelMul { x, g } => {
                let (_, _, h, w) = self.value(x).dims4()?;
                let plane = h * w;
                let gates = self.value(g).data();
                let mut dx = gout.clone();
                let mut dg = vec![T::zero(); gates.len()];
                for (i, (dchunk, xchunk)) in dx
                    .data_mut()
                    .chunks_mut(plane)
                    .zip(self.value(x).data().chunks(plane))
                    .enumerate()
                {
                    let mut acc = T::zero();
                    for (d, &xv) in dchunk.iter_mut().zip(xchunk) {
                        acc = acc + *d * xv;
                        *d = *d * gates[i];
                    }
                    dg[i] = acc;
                }
                out.push((x, dx));
                out.push((g, Tensor::from_vec(self.value(g).shape(), dg)?));
            }
            &Op::Mse { pred, target } => {
                let g0 = gout.data()[0] * T::of(2.0 / self.value(pred).numel() as f64);
                let (p, t) = (self.value(pred).data(), self.value(target).data());
                let dp: Vec<T> = p.iter().zip(t).map(|(&a, &b)| g0 * (a - b)).collect();
                let dt = dp.iter().map(|&v| -v).collect();
                out.push((pred, Tensor::from_vec(self.value(pred).shape(), dp)?));
                out.push((target, Tensor::from_vec(self.value(target).shape(), dt)?));
            }
            &Op::Sum { x } => out.push((x, Tensor::full(self.value(x).shape(), gout.data()[0]))),
        }
        Ok(out)
    }
}
