mod common;

use common::oracles::schedule_oracle;
use haru_core::nn::{Graph, ParameterStore, Tensor};
use haru_core::training::{
    blend_weight_sum, denoise_slice, evaluate_loss, generate_phantom_volume, tile_starts, train,
    Adam, PairSet, PlateauScheduler, ScheduleEvent, StopReason, TrainConfig, TrainingData,
};
use haru_core::volume_io::{slice_volume, Plane};
use haru_core::{HaruNet, Image, NetworkConfig};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn adam_minimizes_a_quadratic() {
    let mut store = ParameterStore::<f64>::new();
    let id = store
        .add("w", Tensor::from_vec(&[1], vec![0.0]).unwrap())
        .unwrap();
    let mut adam = Adam::default();
    for _ in 0..500 {
        let mut g = Graph::new();
        let w = g.param(&store, id);
        let target = g.input(Tensor::from_vec(&[1], vec![3.0]).unwrap(), false);
        let loss = g.mse_loss(w, target).unwrap();
        g.backward(loss, &mut store).unwrap();
        adam.step(&mut store, 0.1).unwrap();
    }
    assert!((store.value(id).data()[0] - 3.0).abs() < 1e-3);
}

#[test]
fn first_adam_step_has_learning_rate_length() {
    let mut store = ParameterStore::<f64>::new();
    let id = store
        .add("w", Tensor::from_vec(&[3], vec![1.0, -2.0, 0.5]).unwrap())
        .unwrap();
    let mut g = Graph::new();
    let w = g.param(&store, id);
    let target = g.input(Tensor::zeros(&[3]), false);
    let loss = g.mse_loss(w, target).unwrap();
    g.backward(loss, &mut store).unwrap();
    let mut adam = Adam::default();
    adam.step(&mut store, 0.01).unwrap();
    let got = store.value(id).data();
    for (v, start) in got.iter().zip([1.0, -2.0, 0.5f64]) {
        let grad = 2.0 * start / 3.0;
        let want = start - 0.01 * grad / (grad.abs() + 1e-8);
        assert!((v - want).abs() < 1e-12);
    }
    assert!(!store.has_grads());
}

fn run_schedule(losses: &[f64]) -> (Vec<f64>, Option<usize>) {
    let mut s = PlateauScheduler::new(1e-3, 0.5, 5, 1e-6, 20);
    let mut lrs = Vec::new();
    for (e, &l) in losses.iter().enumerate() {
        if s.observe(l) == ScheduleEvent::Stop {
            return (lrs, Some(e + 1));
        }
        lrs.push(s.lr());
    }
    (lrs, None)
}

#[test]
fn scripted_plateau_halves_and_stops() {
    let mut losses = vec![1.0];
    losses.extend(std::iter::repeat_n(2.0, 30));
    let (lrs, stop) = run_schedule(&losses);
    assert_eq!(stop, Some(21));
    assert_eq!(lrs[5], 5e-4);
    assert_eq!(lrs[4], 1e-3);
    assert_eq!(lrs[10], 2.5e-4);
    assert_eq!(lrs[15], 1.25e-4);
    assert_eq!(
        (lrs.clone(), stop),
        schedule_oracle(&losses, 1e-3, 0.5, 5, 1e-6, 20)
    );

    // an improvement in the middle restarts both counters
    let mut losses = vec![1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 0.5];
    losses.extend(std::iter::repeat_n(0.7, 25));
    let (lrs, stop) = run_schedule(&losses);
    assert_eq!(lrs[5], 5e-4);
    assert_eq!(lrs[6], 5e-4);
    assert_eq!(stop, Some(27));
    assert_eq!(
        (lrs, stop),
        schedule_oracle(&losses, 1e-3, 0.5, 5, 1e-6, 20)
    );
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn scheduler_matches_oracle(levels in prop::collection::vec(0usize..6, 1..80)) {
        let losses: Vec<f64> = levels.iter().map(|&l| 1.0 + l as f64 * 0.1).collect();
        prop_assert_eq!(run_schedule(&losses), schedule_oracle(&losses, 1e-3, 0.5, 5, 1e-6, 20));
    }

    #[test]
    fn tile_starts_cover_the_axis(len in 1usize..600, tile in 8usize..128, overlap in 0usize..64) {
        let overlap = overlap.min(tile - 1);
        let starts = tile_starts(len, tile, overlap);
        prop_assert_eq!(starts[0], 0);
        let end = starts.last().unwrap() + tile;
        prop_assert!(end == len.max(tile));
        for w in starts.windows(2) {
            prop_assert!(w[1] > w[0] && w[1] <= w[0] + tile - overlap);
        }
    }
}

#[test]
fn blend_weights_cover_every_pixel() {
    for (h, w, tile, overlap) in [(512, 512, 256, 32), (300, 200, 64, 16), (64, 64, 64, 8)] {
        let sum = blend_weight_sum(h, w, tile, overlap);
        assert!(sum.as_slice().iter().all(|&v| v > 0.0));
    }
    // regular spacing: the ramps of neighbours add up to exactly one
    let sum = blend_weight_sum(64 + 48 * 3, 64, 64, 16);
    assert!(sum.as_slice().iter().all(|&v| (v - 1.0).abs() < 1e-12));
}

#[test]
fn identity_network_denoises_to_its_input() {
    let net = HaruNet::<f64>::new(NetworkConfig::tiny(), 0)
        .unwrap()
        .into_identity();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for (h, w) in [(64, 64), (150, 97), (40, 70)] {
        let img = Image::from_fn(h, w, |_, _| rng.random_range(0.0..1.0f32));
        let out = denoise_slice(&net, &img, 64, 16).unwrap();
        for (a, b) in img.as_slice().iter().zip(out.as_slice()) {
            assert!((a - b).abs() < 1e-6);
        }
    }
}

fn small_corpus(n: usize, seed: u64) -> PairSet {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut set = PairSet::default();
    for _ in 0..n {
        let clean = Image::from_fn(
            64,
            64,
            |y, x| {
                if (y / 16 + x / 16) % 2 == 0 {
                    0.7
                } else {
                    0.3
                }
            },
        );
        let (h, w) = clean.dims();
        let noisy = Image::from_fn(h, w, |y, x| {
            clean.get(y, x) + rng.random_range(-0.05..0.05f32)
        });
        set.push(noisy, clean).unwrap();
    }
    set
}

fn tiny_data() -> TrainingData {
    TrainingData {
        train: small_corpus(4, 1),
        val: small_corpus(2, 2),
        test: PairSet::default(),
    }
}

#[test]
fn training_overfits_a_small_set_and_keeps_the_best_epoch() {
    let data = tiny_data();
    let mut net = HaruNet::<f32>::new(NetworkConfig::tiny().ablated(), 3).unwrap();
    let start = evaluate_loss(&net, &data.val, 4).unwrap();
    let cfg = TrainConfig {
        lr0: 1e-3,
        batch_size: 4,
        max_epochs: 60,
        ..TrainConfig::default()
    };
    let mut log = Vec::new();
    let hist = train(&mut net, &data, &cfg, &mut log).unwrap();
    assert_eq!(
        String::from_utf8(log).unwrap().lines().count(),
        hist.epochs.len()
    );
    let best = hist.best_val_loss;
    assert!(best < 0.1 * start, "{best} vs {start}");
    let after = evaluate_loss(&net, &data.val, 4).unwrap();
    assert!((after - best).abs() <= 1e-9 * best.max(1e-12));
    let min = hist
        .epochs
        .iter()
        .map(|e| e.val_loss)
        .fold(f64::INFINITY, f64::min);
    assert_eq!(min, best);
    assert!(hist.to_csv().lines().count() == hist.epochs.len() + 1);
}

#[test]
fn training_is_reproducible() {
    let data = tiny_data();
    let cfg = TrainConfig {
        lr0: 1e-3,
        batch_size: 2,
        max_epochs: 2,
        ..TrainConfig::default()
    };
    let run = || {
        let mut net = HaruNet::<f32>::new(NetworkConfig::tiny(), 5).unwrap();
        let hist = train(&mut net, &data, &cfg, &mut std::io::sink()).unwrap();
        (net.params.snapshot(), hist.best_val_loss)
    };
    assert_eq!(run(), run());
}

#[test]
fn zero_epoch_budget_leaves_the_network_untouched() {
    let data = tiny_data();
    let mut net = HaruNet::<f32>::new(NetworkConfig::tiny(), 6).unwrap();
    let before = net.params.snapshot();
    let cfg = TrainConfig {
        max_epochs: 0,
        ..TrainConfig::default()
    };
    let hist = train(&mut net, &data, &cfg, &mut std::io::sink()).unwrap();
    assert!(hist.epochs.is_empty());
    assert_eq!(hist.stop_reason, StopReason::EpochBudget);
    assert_eq!(net.params.snapshot(), before);
}

#[test]
fn empty_validation_split_is_rejected() {
    let mut data = tiny_data();
    data.val = PairSet::default();
    let mut net = HaruNet::<f32>::new(NetworkConfig::tiny(), 6).unwrap();
    assert!(train(
        &mut net,
        &data,
        &TrainConfig::default(),
        &mut std::io::sink()
    )
    .is_err());
}

#[test]
fn phantoms_are_mostly_but_not_entirely_background() {
    for seed in 0..20u64 {
        let v = generate_phantom_volume(seed, (4, 96, 96)).unwrap();
        let nonzero = v.voxels().iter().filter(|&&x| x > 0.0).count();
        let frac = nonzero as f64 / v.voxels().len() as f64;
        assert!(frac > 0.05 && frac < 0.6, "seed {seed}: {frac}");
        assert!(v.voxels().iter().all(|&x| (0.0..=1.0).contains(&x)));
        let s = &slice_volume(&v, Plane::Axial, None).unwrap()[0];
        assert_eq!(s.pixels.get(0, 0), 0.0);
    }
}
