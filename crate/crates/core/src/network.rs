//! Hybrid attention residual U-Net and its building blocks.
//!
//! Blocks are free functions over a [`Graph`] and a [`ParameterStore`] so
//! they can be built and checked in isolation; [`HaruNet`] wires them
//! together. Parameter paths follow `<block>.<layer>.<weight|bias|...>`.

use std::fmt;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{HaruError, Result};
use crate::nn::{Graph, ParamId, ParameterStore, Tensor, Var};
use crate::scalar::Scalar;

/// Relative position bias tables start uniform in `[-RPB_INIT, RPB_INIT]`.
pub const RPB_INIT: f64 = 0.02;

#[derive(Clone, Debug, PartialEq)]
pub struct NetworkConfig {
    pub base_channels: usize,
    pub stages: usize,
    pub window_size: usize,
    /// Heads at each skip stage followed by the bottleneck; empty selects
    /// `channels / 32` (at least 1) everywhere.
    pub num_heads: Vec<usize>,
    pub rhag_depth: usize,
    pub mlp_ratio: usize,
    pub se_reduction: usize,
    pub cab_weight: f64,
    pub leaky_slope: f64,
    pub ablate_attention: bool,
    /// Adds the network input to the head output.
    pub global_residual: bool,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        NetworkConfig {
            base_channels: 64,
            stages: 4,
            window_size: 8,
            num_heads: Vec::new(),
            rhag_depth: 6,
            mlp_ratio: 2,
            se_reduction: 16,
            cab_weight: 0.01,
            leaky_slope: 0.01,
            ablate_attention: false,
            global_residual: false,
        }
    }
}

const HEAD_DIM: usize = 32;

impl NetworkConfig {
    /// Desk-scale variant: 8 base channels, window 4, reduction 4.
    pub fn tiny() -> Self {
        NetworkConfig {
            base_channels: 8,
            window_size: 4,
            se_reduction: 4,
            ..NetworkConfig::default()
        }
    }

    /// ResU-Net variant of this configuration.
    pub fn ablated(&self) -> Self {
        NetworkConfig {
            ablate_attention: true,
            ..self.clone()
        }
    }

    pub fn stage_width(&self, stage: usize) -> usize {
        self.base_channels << stage
    }

    pub fn bottleneck_width(&self) -> usize {
        self.base_channels << self.stages
    }

    /// Heads at skip stage `site` (`site == stages` is the bottleneck).
    pub fn heads_at(&self, site: usize) -> usize {
        if let Some(&h) = self.num_heads.get(site) {
            return h;
        }
        let c = if site == self.stages {
            self.bottleneck_width()
        } else {
            self.stage_width(site)
        };
        (c / HEAD_DIM).max(1)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(HaruError::Config(m));
        if self.base_channels == 0 || self.stages == 0 || self.window_size == 0 {
            return bad("base_channels, stages and window_size must be at least 1".into());
        }
        if self.rhag_depth == 0 {
            return bad("rhag_depth must be at least 1".into());
        }
        if self.mlp_ratio == 0 || self.se_reduction == 0 {
            return bad("mlp_ratio and se_reduction must be at least 1".into());
        }
        if self.se_reduction > self.base_channels {
            return bad(format!(
                "se_reduction {} exceeds the smallest attention width {}",
                self.se_reduction, self.base_channels
            ));
        }
        if !self.cab_weight.is_finite() || !self.leaky_slope.is_finite() {
            return bad("cab_weight and leaky_slope must be finite".into());
        }
        if !self.num_heads.is_empty() && self.num_heads.len() != self.stages + 1 {
            return bad(format!(
                "num_heads needs {} entries (skips + bottleneck)",
                self.stages + 1
            ));
        }
        for site in 0..=self.stages {
            let c = if site == self.stages {
                self.bottleneck_width()
            } else {
                self.stage_width(site)
            };
            let h = self.heads_at(site);
            if h == 0 || c % h != 0 {
                return bad(format!("{c} channels not divisible by {h} heads"));
            }
        }
        Ok(())
    }

    /// Input sides must be multiples of this.
    pub fn side_multiple(&self) -> usize {
        let down = 1usize << self.stages;
        if self.ablate_attention {
            down
        } else {
            down * self.window_size
        }
    }

    pub fn check_input(&self, h: usize, w: usize) -> Result<()> {
        let m = self.side_multiple();
        if h == 0 || w == 0 || h % m != 0 || w % m != 0 {
            return Err(HaruError::Shape(format!(
                "input {h}x{w} is not a multiple of {m}"
            )));
        }
        Ok(())
    }

    pub fn to_text(&self) -> String {
        let heads = if self.num_heads.is_empty() {
            "auto".to_string()
        } else {
            self.num_heads
                .iter()
                .map(|h| h.to_string())
                .collect::<Vec<_>>()
                .join(",")
        };
        format!(
            "base_channels = {}\nstages = {}\nwindow_size = {}\nnum_heads = {}\nrhag_depth = {}\nmlp_ratio = {}\n\
             se_reduction = {}\ncab_weight = {}\nleaky_slope = {}\nablate_attention = {}\nglobal_residual = {}\n",
            self.base_channels,
            self.stages,
            self.window_size,
            heads,
            self.rhag_depth,
            self.mlp_ratio,
            self.se_reduction,
            self.cab_weight,
            self.leaky_slope,
            self.ablate_attention,
            self.global_residual
        )
    }

    /// Applies `key = value` lines on top of `self`; `#` starts a comment.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                HaruError::Config(format!("line {}: expected key = value", lineno + 1))
            })?;
            self.set(key.trim(), value.trim())
                .map_err(|e| HaruError::Config(format!("line {}: {e}", lineno + 1)))?;
        }
        self.validate()
    }

    pub fn set(&mut self, key: &str, value: &str) -> std::result::Result<(), String> {
        fn num<V: FromStr>(key: &str, v: &str) -> std::result::Result<V, String> {
            v.parse().map_err(|_| format!("bad value '{v}' for {key}"))
        }
        match key {
            "base_channels" => self.base_channels = num(key, value)?,
            "stages" => self.stages = num(key, value)?,
            "window_size" => self.window_size = num(key, value)?,
            "num_heads" => {
                self.num_heads = if value == "auto" {
                    Vec::new()
                } else {
                    value
                        .split(',')
                        .map(|v| num(key, v.trim()))
                        .collect::<std::result::Result<_, _>>()?
                }
            }
            "rhag_depth" => self.rhag_depth = num(key, value)?,
            "mlp_ratio" => self.mlp_ratio = num(key, value)?,
            "se_reduction" => self.se_reduction = num(key, value)?,
            "cab_weight" => self.cab_weight = num(key, value)?,
            "leaky_slope" => self.leaky_slope = num(key, value)?,
            "ablate_attention" => self.ablate_attention = num(key, value)?,
            "global_residual" => self.global_residual = num(key, value)?,
            _ => return Err(format!("unknown key '{key}'")),
        }
        Ok(())
    }
}

impl fmt::Display for NetworkConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_text())
    }
}

impl FromStr for NetworkConfig {
    type Err = HaruError;

    fn from_str(s: &str) -> Result<Self> {
        let mut cfg = NetworkConfig::default();
        cfg.apply_text(s)?;
        Ok(cfg)
    }
}

// ---------------------------------------------------------------------------
// Initialization

fn uniform_bound(fan_in: usize) -> f64 {
    1.0 / (fan_in as f64).sqrt()
}

pub fn init_conv<T: Scalar>(
    store: &mut ParameterStore<T>,
    name: &str,
    cin: usize,
    cout: usize,
    k: usize,
    rng: &mut ChaCha8Rng,
) -> Result<()> {
    let bound = uniform_bound(cin * k * k);
    store.add_uniform(format!("{name}.weight"), &[cout, cin, k, k], bound, rng)?;
    store.add_uniform(format!("{name}.bias"), &[cout], bound, rng)?;
    Ok(())
}

pub fn init_conv_transpose<T: Scalar>(
    store: &mut ParameterStore<T>,
    name: &str,
    cin: usize,
    cout: usize,
    k: usize,
    rng: &mut ChaCha8Rng,
) -> Result<()> {
    let bound = uniform_bound(cout * k * k);
    store.add_uniform(format!("{name}.weight"), &[cin, cout, k, k], bound, rng)?;
    store.add_uniform(format!("{name}.bias"), &[cout], bound, rng)?;
    Ok(())
}

pub fn init_layer_norm<T: Scalar>(
    store: &mut ParameterStore<T>,
    name: &str,
    c: usize,
) -> Result<()> {
    store.add(format!("{name}.gain"), Tensor::full(&[c], T::one()))?;
    store.add(format!("{name}.bias"), Tensor::zeros(&[c]))?;
    Ok(())
}

pub fn init_residual_block<T: Scalar>(
    store: &mut ParameterStore<T>,
    prefix: &str,
    cin: usize,
    cout: usize,
    rng: &mut ChaCha8Rng,
) -> Result<()> {
    init_conv(store, &format!("{prefix}.conv1"), cin, cout, 3, rng)?;
    init_conv(store, &format!("{prefix}.conv2"), cout, cout, 3, rng)?;
    init_conv(store, &format!("{prefix}.proj"), cin, cout, 1, rng)
}

pub fn init_window_attention<T: Scalar>(
    store: &mut ParameterStore<T>,
    prefix: &str,
    c: usize,
    heads: usize,
    window: usize,
    rng: &mut ChaCha8Rng,
) -> Result<()> {
    init_conv(store, &format!("{prefix}.qkv"), c, 3 * c, 1, rng)?;
    let side = 2 * window - 1;
    store.add_uniform(
        format!("{prefix}.rpb"),
        &[heads, side * side],
        RPB_INIT,
        rng,
    )?;
    init_conv(store, &format!("{prefix}.proj"), c, c, 1, rng)
}

pub fn init_channel_attention<T: Scalar>(
    store: &mut ParameterStore<T>,
    prefix: &str,
    c: usize,
    reduction: usize,
    rng: &mut ChaCha8Rng,
) -> Result<()> {
    if reduction == 0 || reduction > c {
        return Err(HaruError::Config(format!(
            "reduction {reduction} for {c} channels"
        )));
    }
    init_conv(store, &format!("{prefix}.fc1"), c, c / reduction, 1, rng)?;
    init_conv(store, &format!("{prefix}.fc2"), c / reduction, c, 1, rng)
}

pub fn init_hab<T: Scalar>(
    store: &mut ParameterStore<T>,
    prefix: &str,
    c: usize,
    heads: usize,
    cfg: &NetworkConfig,
    rng: &mut ChaCha8Rng,
) -> Result<()> {
    init_layer_norm(store, &format!("{prefix}.norm1"), c)?;
    init_window_attention(
        store,
        &format!("{prefix}.wsa"),
        c,
        heads,
        cfg.window_size,
        rng,
    )?;
    init_channel_attention(store, &format!("{prefix}.ca"), c, cfg.se_reduction, rng)?;
    init_conv(store, &format!("{prefix}.ca.proj"), c, c, 1, rng)?;
    init_layer_norm(store, &format!("{prefix}.norm2"), c)?;
    init_conv(
        store,
        &format!("{prefix}.mlp.fc1"),
        c,
        cfg.mlp_ratio * c,
        1,
        rng,
    )?;
    init_conv(
        store,
        &format!("{prefix}.mlp.fc2"),
        cfg.mlp_ratio * c,
        c,
        1,
        rng,
    )
}

pub fn init_rhag<T: Scalar>(
    store: &mut ParameterStore<T>,
    prefix: &str,
    c: usize,
    heads: usize,
    cfg: &NetworkConfig,
    rng: &mut ChaCha8Rng,
) -> Result<()> {
    for i in 0..cfg.rhag_depth {
        init_hab(store, &format!("{prefix}.hab{i}"), c, heads, cfg, rng)?;
    }
    Ok(())
}

/// Output projections whose zeroing turns every attention block into the
/// identity.
pub fn output_projection_suffixes() -> [&'static str; 3] {
    [".wsa.proj.", ".ca.proj.", ".mlp.fc2."]
}

// ---------------------------------------------------------------------------
// Forward building blocks

fn lookup<T: Scalar>(store: &ParameterStore<T>, name: &str) -> Result<ParamId> {
    store
        .id(name)
        .ok_or_else(|| HaruError::Config(format!("missing parameter '{name}'")))
}

pub fn param<T: Scalar>(g: &mut Graph<T>, store: &ParameterStore<T>, name: &str) -> Result<Var> {
    Ok(g.param(store, lookup(store, name)?))
}

pub fn conv<T: Scalar>(
    g: &mut Graph<T>,
    store: &ParameterStore<T>,
    name: &str,
    x: Var,
    stride: usize,
    pad: usize,
) -> Result<Var> {
    let w = param(g, store, &format!("{name}.weight"))?;
    let b = param(g, store, &format!("{name}.bias"))?;
    g.conv2d(x, w, Some(b), stride, pad)
}

pub fn conv_transpose<T: Scalar>(
    g: &mut Graph<T>,
    store: &ParameterStore<T>,
    name: &str,
    x: Var,
    stride: usize,
    pad: usize,
) -> Result<Var> {
    let w = param(g, store, &format!("{name}.weight"))?;
    let b = param(g, store, &format!("{name}.bias"))?;
    g.conv_transpose2d(x, w, Some(b), stride, pad)
}

pub fn layer_norm<T: Scalar>(
    g: &mut Graph<T>,
    store: &ParameterStore<T>,
    name: &str,
    x: Var,
) -> Result<Var> {
    let gain = param(g, store, &format!("{name}.gain"))?;
    let bias = param(g, store, &format!("{name}.bias"))?;
    g.layer_norm(x, gain, bias)
}

/// `F(x) + P(x)` with `F` two (3x3 conv, LeakyReLU) units and `P` a 1x1
/// projection.
pub fn residual_block<T: Scalar>(
    g: &mut Graph<T>,
    store: &ParameterStore<T>,
    prefix: &str,
    x: Var,
    slope: T,
) -> Result<Var> {
    let h = conv(g, store, &format!("{prefix}.conv1"), x, 1, 1)?;
    let h = g.leaky_relu(h, slope);
    let h = conv(g, store, &format!("{prefix}.conv2"), h, 1, 1)?;
    let h = g.leaky_relu(h, slope);
    let p = conv(g, store, &format!("{prefix}.proj"), x, 1, 0)?;
    g.add(h, p)
}

pub fn window_self_attention<T: Scalar>(
    g: &mut Graph<T>,
    store: &ParameterStore<T>,
    prefix: &str,
    x: Var,
    heads: usize,
    window: usize,
    shift: usize,
) -> Result<Var> {
    let qkv = conv(g, store, &format!("{prefix}.qkv"), x, 1, 0)?;
    let table = param(g, store, &format!("{prefix}.rpb"))?;
    let a = g.window_attention(qkv, table, heads, window, shift)?;
    conv(g, store, &format!("{prefix}.proj"), a, 1, 0)
}

/// Squeeze-and-excitation gating: `sigmoid(fc2(gelu(fc1(gap(x))))) * x`.
pub fn channel_attention<T: Scalar>(
    g: &mut Graph<T>,
    store: &ParameterStore<T>,
    prefix: &str,
    x: Var,
) -> Result<Var> {
    let s = g.global_avg_pool(x)?;
    let s = conv(g, store, &format!("{prefix}.fc1"), s, 1, 0)?;
    let s = g.gelu(s);
    let s = conv(g, store, &format!("{prefix}.fc2"), s, 1, 0)?;
    let gate = g.sigmoid(s);
    g.channel_mul(x, gate)
}

/// `y = x + WSA(LN(x)) + alpha * CA(LN(x))`, then `y + MLP(LN(y))`.
pub fn hab<T: Scalar>(
    g: &mut Graph<T>,
    store: &ParameterStore<T>,
    prefix: &str,
    x: Var,
    heads: usize,
    shift: usize,
    cfg: &NetworkConfig,
) -> Result<Var> {
    let u = layer_norm(g, store, &format!("{prefix}.norm1"), x)?;
    let attn = window_self_attention(
        g,
        store,
        &format!("{prefix}.wsa"),
        u,
        heads,
        cfg.window_size,
        shift,
    )?;
    let ca = channel_attention(g, store, &format!("{prefix}.ca"), u)?;
    let ca = conv(g, store, &format!("{prefix}.ca.proj"), ca, 1, 0)?;
    let ca = g.scale(ca, T::of(cfg.cab_weight));
    let y = g.add(x, attn)?;
    let y = g.add(y, ca)?;
    let v = layer_norm(g, store, &format!("{prefix}.norm2"), y)?;
    let v = conv(g, store, &format!("{prefix}.mlp.fc1"), v, 1, 0)?;
    let v = g.gelu(v);
    let v = conv(g, store, &format!("{prefix}.mlp.fc2"), v, 1, 0)?;
    g.add(y, v)
}

/// `x + HAB_n(...HAB_1(x))` with shifts alternating `0` and `window / 2`.
pub fn rhag<T: Scalar>(
    g: &mut Graph<T>,
    store: &ParameterStore<T>,
    prefix: &str,
    x: Var,
    heads: usize,
    cfg: &NetworkConfig,
) -> Result<Var> {
    let mut h = x;
    for i in 0..cfg.rhag_depth {
        let shift = if i % 2 == 1 { cfg.window_size / 2 } else { 0 };
        h = hab(g, store, &format!("{prefix}.hab{i}"), h, heads, shift, cfg)?;
    }
    g.add(x, h)
}

// ---------------------------------------------------------------------------
// Full network

/// Forward pass of the network described by `cfg` with weights from `store`.
pub fn haru_forward<T: Scalar>(
    cfg: &NetworkConfig,
    store: &ParameterStore<T>,
    g: &mut Graph<T>,
    x: Var,
) -> Result<Var> {
    let (_, c, h, w) = g.value(x).dims4()?;
    if c != 1 {
        return Err(HaruError::Shape(format!(
            "network input has {c} channels, expected 1"
        )));
    }
    cfg.check_input(h, w)?;
    let slope = T::of(cfg.leaky_slope);

    let mut skips = Vec::with_capacity(cfg.stages);
    let mut cur = x;
    for i in 0..cfg.stages {
        let s = residual_block(g, store, &format!("enc{i}.block"), cur, slope)?;
        skips.push(s);
        cur = conv(g, store, &format!("enc{i}.down"), s, 2, 1)?;
    }

    let body = conv(g, store, "bottleneck.conv", cur, 1, 1)?;
    let body = if cfg.ablate_attention {
        body
    } else {
        rhag(
            g,
            store,
            "bottleneck.rhag",
            body,
            cfg.heads_at(cfg.stages),
            cfg,
        )?
    };
    let proj = conv(g, store, "bottleneck.proj", cur, 1, 0)?;
    cur = g.add(body, proj)?;

    for i in (0..cfg.stages).rev() {
        let skip = if cfg.ablate_attention {
            skips[i]
        } else {
            hab(
                g,
                store,
                &format!("skip{i}.hab"),
                skips[i],
                cfg.heads_at(i),
                0,
                cfg,
            )?
        };
        let up = conv_transpose(g, store, &format!("dec{i}.up"), cur, 2, 1)?;
        let cat = g.concat_channels(up, skip)?;
        cur = residual_block(g, store, &format!("dec{i}.block"), cat, slope)?;
    }
    let out = conv(g, store, "head", cur, 1, 0)?;
    if cfg.global_residual {
        g.add(out, x)
    } else {
        Ok(out)
    }
}

#[derive(Clone, Debug)]
pub struct HaruNet<T> {
    pub config: NetworkConfig,
    pub params: ParameterStore<T>,
}

impl<T: Scalar> HaruNet<T> {
    /// Builds and initializes every parameter from `seed`.
    pub fn new(config: NetworkConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParameterStore::new();
        let cfg = &config;
        let mut cin = 1;
        for i in 0..cfg.stages {
            let w = cfg.stage_width(i);
            init_residual_block(&mut store, &format!("enc{i}.block"), cin, w, &mut rng)?;
            init_conv(&mut store, &format!("enc{i}.down"), w, w, 4, &mut rng)?;
            cin = w;
        }
        let bw = cfg.bottleneck_width();
        init_conv(&mut store, "bottleneck.conv", cin, bw, 3, &mut rng)?;
        if !cfg.ablate_attention {
            init_rhag(
                &mut store,
                "bottleneck.rhag",
                bw,
                cfg.heads_at(cfg.stages),
                cfg,
                &mut rng,
            )?;
        }
        init_conv(&mut store, "bottleneck.proj", cin, bw, 1, &mut rng)?;
        let mut cur = bw;
        for i in (0..cfg.stages).rev() {
            let w = cfg.stage_width(i);
            if !cfg.ablate_attention {
                init_hab(
                    &mut store,
                    &format!("skip{i}.hab"),
                    w,
                    cfg.heads_at(i),
                    cfg,
                    &mut rng,
                )?;
            }
            init_conv_transpose(&mut store, &format!("dec{i}.up"), cur, w, 4, &mut rng)?;
            init_residual_block(&mut store, &format!("dec{i}.block"), 2 * w, w, &mut rng)?;
            cur = w;
        }
        init_conv(&mut store, "head", cur, 1, 1, &mut rng)?;
        Ok(HaruNet {
            config,
            params: store,
        })
    }

    pub fn num_parameters(&self) -> usize {
        self.params.num_scalars()
    }

    /// Records the forward pass of `x` (`[N, 1, H, W]`) on `g`.
    pub fn forward(&self, g: &mut Graph<T>, x: Var) -> Result<Var> {
        haru_forward(&self.config, &self.params, g, x)
    }

    /// Forward pass without keeping the graph.
    pub fn predict(&self, x: Tensor<T>) -> Result<Tensor<T>> {
        let mut g = Graph::new();
        let v = g.input(x, false);
        let y = self.forward(&mut g, v)?;
        Ok(g.into_value(y))
    }

    /// Zeroes the output projections of every attention block.
    pub fn zero_output_projections(&mut self) {
        self.zero_where(|name| {
            output_projection_suffixes()
                .iter()
                .any(|s| name.contains(s))
        });
    }

    /// Zeroes every parameter whose path satisfies `pred`.
    pub fn zero_where(&mut self, pred: impl Fn(&str) -> bool) {
        let ids: Vec<ParamId> = self
            .params
            .ids()
            .filter(|&id| pred(self.params.name(id)))
            .collect();
        for id in ids {
            self.params
                .value_mut(id)
                .data_mut()
                .iter_mut()
                .for_each(|v| *v = T::zero());
        }
    }

    /// Identity map: global residual on, head zeroed.
    pub fn into_identity(mut self) -> Self {
        self.config.global_residual = true;
        self.zero_where(|name| name.starts_with("head."));
        self
    }

    pub fn cast<U: Scalar>(&self) -> HaruNet<U> {
        HaruNet {
            config: self.config.clone(),
            params: self.params.cast(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_text_round_trip() {
        let mut cfg = NetworkConfig::tiny();
        cfg.num_heads = vec![1, 1, 2, 2, 4];
        cfg.cab_weight = 0.25;
        let back: NetworkConfig = cfg.to_text().parse().unwrap();
        assert_eq!(back, cfg);
        assert!("bogus = 1".parse::<NetworkConfig>().is_err());
        assert!("rhag_depth = 0".parse::<NetworkConfig>().is_err());
        assert!("num_heads = 3,3,3,3,3".parse::<NetworkConfig>().is_err());
        assert!(
            "base_channels = 8".parse::<NetworkConfig>().is_err(),
            "se_reduction 16 > 8"
        );
    }

    #[test]
    fn default_widths_and_heads() {
        let cfg = NetworkConfig::default();
        let widths: Vec<_> = (0..4).map(|i| cfg.stage_width(i)).collect();
        assert_eq!(widths, [64, 128, 256, 512]);
        assert_eq!(cfg.bottleneck_width(), 1024);
        assert_eq!(
            (0..=4).map(|s| cfg.heads_at(s)).collect::<Vec<_>>(),
            [2, 4, 8, 16, 32]
        );
        assert_eq!(cfg.side_multiple(), 128);
    }

    #[test]
    fn tiny_network_preserves_shape() {
        let net = HaruNet::<f32>::new(NetworkConfig::tiny(), 3).unwrap();
        let y = net.predict(Tensor::full(&[2, 1, 64, 64], 0.5)).unwrap();
        assert_eq!(y.shape(), &[2, 1, 64, 64]);
        assert!(y.all_finite());
        assert!(net.predict(Tensor::zeros(&[1, 1, 48, 48])).is_err());
    }

    #[test]
    fn identity_configuration_returns_the_input() {
        let net = HaruNet::<f64>::new(NetworkConfig::tiny(), 9)
            .unwrap()
            .into_identity();
        let x = Tensor::from_vec(
            &[1, 1, 64, 64],
            (0..4096).map(|i| (i % 97) as f64 / 97.0).collect(),
        )
        .unwrap();
        assert_eq!(net.predict(x.clone()).unwrap(), x);
    }
}
