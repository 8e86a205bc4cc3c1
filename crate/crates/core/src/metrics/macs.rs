//! Analytic multiply-accumulate accounting for the denoising network.
//!
//! Convolutions cost one MAC per tap per output pixel; transposed
//! convolutions are counted over their input taps, which is the same number
//! of products. Window attention costs `t*d` for the scores plus `t*d` for
//! the weighted sum per token (`t` tokens per window, `d` channels); the
//! q/k/v and output projections are the 1x1 convolutions around it.
//! Normalization, activations, softmax, pooling, gating and bias additions
//! count as zero.

use crate::error::{HaruError, Result};
use crate::network::NetworkConfig;

pub fn conv2d_macs(cin: usize, cout: usize, k: usize, hout: usize, wout: usize) -> u64 {
    (k * k) as u64 * cin as u64 * cout as u64 * hout as u64 * wout as u64
}

pub fn conv_transpose2d_macs(cin: usize, cout: usize, k: usize, hin: usize, win: usize) -> u64 {
    (k * k) as u64 * cin as u64 * cout as u64 * hin as u64 * win as u64
}

pub fn linear_macs(tokens: usize, fan_in: usize, fan_out: usize) -> u64 {
    tokens as u64 * fan_in as u64 * fan_out as u64
}

/// Score and weighted-sum products of one window of `t` tokens, `d` channels.
pub fn attention_window_macs(t: usize, d: usize) -> u64 {
    2 * (t * t) as u64 * d as u64
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct MacBreakdown {
    /// Layer path and count, in execution order.
    pub entries: Vec<(String, u64)>,
    pub total: u64,
}

impl MacBreakdown {
    pub fn push(&mut self, layer: impl Into<String>, macs: u64) {
        self.entries.push((layer.into(), macs));
        self.total += macs;
    }

    pub fn total_gmacs(&self) -> f64 {
        self.total as f64 / 1e9
    }

    pub fn get(&self, layer: &str) -> Option<u64> {
        self.entries
            .iter()
            .find(|(l, _)| l == layer)
            .map(|&(_, m)| m)
    }
}

struct Walk<'a> {
    cfg: &'a NetworkConfig,
    n: usize,
    out: MacBreakdown,
}

impl Walk<'_> {
    fn conv(&mut self, name: &str, cin: usize, cout: usize, k: usize, hw: (usize, usize)) {
        self.out
            .push(name, self.n as u64 * conv2d_macs(cin, cout, k, hw.0, hw.1));
    }

    fn residual_block(&mut self, prefix: &str, cin: usize, cout: usize, hw: (usize, usize)) {
        self.conv(&format!("{prefix}.conv1"), cin, cout, 3, hw);
        self.conv(&format!("{prefix}.conv2"), cout, cout, 3, hw);
        self.conv(&format!("{prefix}.proj"), cin, cout, 1, hw);
    }

    fn hab(&mut self, prefix: &str, c: usize, hw: (usize, usize)) {
        let tokens = hw.0 * hw.1;
        let cfg = self.cfg;
        self.conv(&format!("{prefix}.wsa.qkv"), c, 3 * c, 1, hw);
        let t = cfg.window_size * cfg.window_size;
        let windows = tokens / t;
        self.out.push(
            format!("{prefix}.wsa.attn"),
            self.n as u64 * windows as u64 * attention_window_macs(t, c),
        );
        self.conv(&format!("{prefix}.wsa.proj"), c, c, 1, hw);
        let hidden = c / cfg.se_reduction;
        self.out.push(
            format!("{prefix}.ca.fc1"),
            self.n as u64 * linear_macs(1, c, hidden),
        );
        self.out.push(
            format!("{prefix}.ca.fc2"),
            self.n as u64 * linear_macs(1, hidden, c),
        );
        self.conv(&format!("{prefix}.ca.proj"), c, c, 1, hw);
        self.conv(&format!("{prefix}.mlp.fc1"), c, cfg.mlp_ratio * c, 1, hw);
        self.conv(&format!("{prefix}.mlp.fc2"), cfg.mlp_ratio * c, c, 1, hw);
    }
}

/// Exact per-layer MACs of one forward pass over an `N x 1 x H x W` input.
pub fn count_macs(
    cfg: &NetworkConfig,
    input: (usize, usize, usize, usize),
) -> Result<MacBreakdown> {
    cfg.validate()?;
    let (n, c, h, w) = input;
    if c != 1 || n == 0 {
        return Err(HaruError::Shape(format!(
            "input {input:?} must be N x 1 x H x W"
        )));
    }
    cfg.check_input(h, w)?;
    let mut walk = Walk {
        cfg,
        n,
        out: MacBreakdown::default(),
    };
    let mut hw = (h, w);
    let mut cin = 1;
    let mut skips = Vec::new();
    for i in 0..cfg.stages {
        let width = cfg.stage_width(i);
        walk.residual_block(&format!("enc{i}.block"), cin, width, hw);
        skips.push(hw);
        hw = (hw.0 / 2, hw.1 / 2);
        walk.conv(&format!("enc{i}.down"), width, width, 4, hw);
        cin = width;
    }
    let bw = cfg.bottleneck_width();
    walk.conv("bottleneck.conv", cin, bw, 3, hw);
    if !cfg.ablate_attention {
        for j in 0..cfg.rhag_depth {
            walk.hab(&format!("bottleneck.rhag.hab{j}"), bw, hw);
        }
    }
    walk.conv("bottleneck.proj", cin, bw, 1, hw);
    let mut cur = bw;
    for i in (0..cfg.stages).rev() {
        let width = cfg.stage_width(i);
        if !cfg.ablate_attention {
            walk.hab(&format!("skip{i}.hab"), width, skips[i]);
        }
        walk.out.push(
            format!("dec{i}.up"),
            n as u64 * conv_transpose2d_macs(cur, width, 4, hw.0, hw.1),
        );
        hw = skips[i];
        walk.residual_block(&format!("dec{i}.block"), 2 * width, width, hw);
        cur = width;
    }
    walk.conv("head", cur, 1, 1, hw);
    Ok(walk.out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pointwise_conv_costs_one_mac_per_pixel() {
        assert_eq!(conv2d_macs(1, 1, 1, 37, 53), 37 * 53);
        assert_eq!(conv2d_macs(1, 64, 3, 256, 256), 37_748_736);
    }

    #[test]
    fn total_is_the_sum_of_entries() {
        let m = count_macs(&NetworkConfig::tiny(), (1, 1, 64, 64)).unwrap();
        assert_eq!(m.total, m.entries.iter().map(|e| e.1).sum::<u64>());
        assert!(count_macs(&NetworkConfig::tiny(), (1, 1, 60, 64)).is_err());
    }

    #[test]
    fn ablation_is_cheaper() {
        let full = count_macs(&NetworkConfig::tiny(), (1, 1, 64, 64)).unwrap();
        let ablated = count_macs(&NetworkConfig::tiny().ablated(), (1, 1, 64, 64)).unwrap();
        assert!(ablated.total < full.total);
    }
}
