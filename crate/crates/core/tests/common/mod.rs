//! Shared oracles for the integration tests.
#![allow(dead_code)]

pub mod oracles;

use haru_core::nn::{Graph, ParameterStore, Tensor, Var};
use haru_core::Result;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn random_tensor(shape: &[usize], lo: f64, hi: f64, rng: &mut ChaCha8Rng) -> Tensor<f64> {
    let n = shape.iter().product();
    Tensor::from_vec(shape, (0..n).map(|_| rng.random_range(lo..hi)).collect()).unwrap()
}

#[derive(Debug, Default, Clone, Copy)]
pub struct GradCheck {
    pub max_rel: f64,
    pub checked: usize,
    /// Probes redrawn because a LeakyReLU input changed sign inside the stencil.
    pub resampled: usize,
}

pub const FD_STEP: f64 = 1e-5;

pub type Build<'a> = dyn Fn(&mut Graph<f64>, &ParameterStore<f64>, &[Var]) -> Result<Var> + 'a;

/// Loss `sum(out * r)` for a fixed random `r` scaled by `1 / numel`, and the
/// kink pattern.
fn evaluate(
    build: &Build,
    store: &ParameterStore<f64>,
    inputs: &[Tensor<f64>],
    weights: &Tensor<f64>,
) -> (f64, Vec<bool>) {
    let mut g = Graph::new();
    let vars: Vec<Var> = inputs.iter().map(|t| g.input(t.clone(), false)).collect();
    let out = build(&mut g, store, &vars).unwrap();
    let loss = g.value(out).dot(weights);
    (loss, g.kink_pattern())
}

/// Compares reverse-mode gradients against central differences on up to
/// `samples` coordinates drawn from all inputs and parameters.
pub fn grad_check(
    mut store: ParameterStore<f64>,
    mut inputs: Vec<Tensor<f64>>,
    build: &Build,
    samples: usize,
    seed: u64,
) -> GradCheck {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9);

    // Analytic pass.
    let mut g = Graph::new();
    let vars: Vec<Var> = inputs.iter().map(|t| g.input(t.clone(), true)).collect();
    let out = build(&mut g, &store, &vars).unwrap();
    let n = g.value(out).numel() as f64;
    let weights = random_tensor(g.value(out).shape(), -1.0, 1.0, &mut rng).map(|v| v / n);
    let r = g.input(weights.clone(), false);
    let prod = g.mul(out, r).unwrap();
    let loss = g.sum(prod);
    store.zero_grads();
    g.backward(loss, &mut store).unwrap();
    let input_grads: Vec<Tensor<f64>> = vars
        .iter()
        .zip(&inputs)
        .map(|(&v, t)| {
            g.grad(v)
                .cloned()
                .unwrap_or_else(|| Tensor::zeros(t.shape()))
        })
        .collect();
    let param_grads: Vec<Tensor<f64>> = store.ids().map(|id| store.grad(id).clone()).collect();

    // Coordinates: (is_param, tensor index, element).
    let mut coords = Vec::new();
    for (i, t) in inputs.iter().enumerate() {
        coords.extend((0..t.numel()).map(|e| (false, i, e)));
    }
    for (k, id) in store.ids().enumerate() {
        coords.extend((0..store.value(id).numel()).map(|e| (true, k, e)));
    }
    let exhaustive = coords.len() <= samples;
    let ids: Vec<_> = store.ids().collect();
    let mut result = GradCheck::default();
    let mut cursor = 0;
    let mut attempts = 0;
    while result.checked < samples.min(coords.len()) && attempts < 20 * samples + coords.len() {
        attempts += 1;
        let (is_param, k, e) = if exhaustive {
            if cursor >= coords.len() {
                break;
            }
            cursor += 1;
            coords[cursor - 1]
        } else {
            coords[rng.random_range(0..coords.len())]
        };
        let slot = |store: &mut ParameterStore<f64>,
                    inputs: &mut Vec<Tensor<f64>>,
                    value: Option<f64>|
         -> f64 {
            let t = if is_param {
                store.value_mut(ids[k])
            } else {
                &mut inputs[k]
            };
            let old = t.data()[e];
            if let Some(v) = value {
                t.data_mut()[e] = v;
            }
            old
        };
        let orig = slot(&mut store, &mut inputs, None);
        slot(&mut store, &mut inputs, Some(orig + FD_STEP));
        let (lp, kp) = evaluate(build, &store, &inputs, &weights);
        slot(&mut store, &mut inputs, Some(orig - FD_STEP));
        let (lm, km) = evaluate(build, &store, &inputs, &weights);
        slot(&mut store, &mut inputs, Some(orig));
        if kp != km {
            result.resampled += 1;
            continue;
        }
        let fd = (lp - lm) / (2.0 * FD_STEP);
        let an = if is_param {
            param_grads[k].data()[e]
        } else {
            input_grads[k].data()[e]
        };
        let rel = (an - fd).abs() / (fd.abs() + 1e-8);
        if std::env::var_os("GRADCHECK_VERBOSE").is_some() && rel > 1e-4 {
            let name = if is_param {
                store.name(ids[k]).to_string()
            } else {
                format!("input{k}")
            };
            eprintln!("probe {name}[{e}]: analytic {an:.6e} fd {fd:.6e} rel {rel:.3e}");
        }
        result.max_rel = result.max_rel.max(rel);
        result.checked += 1;
    }
    result
}
