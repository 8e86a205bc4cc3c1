mod common;

use common::oracles::{attention_mac_loop, conv_mac_loop, gmsd_oracle};
use haru_core::metrics::macs::{
    attention_window_macs, conv2d_macs, conv_transpose2d_macs, linear_macs,
};
use haru_core::metrics::{gmsd, psnr, render_report, ssim, ReportRow};
use haru_core::Image;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_image(h: usize, w: usize, rng: &mut ChaCha8Rng) -> Image<f64> {
    Image::from_fn(h, w, |_, _| rng.random_range(0.0..1.0))
}

/// Direct 11x11 Gaussian-window SSIM at every valid position.
fn ssim_oracle(a: &Image<f64>, b: &Image<f64>) -> f64 {
    let (c1, c2) = (0.0001, 0.0009);
    let mut taps = [0.0; 11];
    for (i, t) in taps.iter_mut().enumerate() {
        let d = i as f64 - 5.0;
        *t = (-d * d / (2.0 * 1.5 * 1.5)).exp();
    }
    let norm: f64 = taps.iter().sum();
    let (h, w) = a.dims();
    let (mut total, mut n) = (0.0, 0.0);
    for y in 0..=h - 11 {
        for x in 0..=w - 11 {
            let (mut ma, mut mb, mut aa, mut bb, mut ab) = (0.0, 0.0, 0.0, 0.0, 0.0);
            for i in 0..11 {
                for j in 0..11 {
                    let wt = taps[i] * taps[j] / (norm * norm);
                    let (u, v) = (a.get(y + i, x + j), b.get(y + i, x + j));
                    ma += wt * u;
                    mb += wt * v;
                    aa += wt * u * u;
                    bb += wt * v * v;
                    ab += wt * u * v;
                }
            }
            let (va, vb, cov) = (aa - ma * ma, bb - mb * mb, ab - ma * mb);
            total += (2.0 * ma * mb + c1) * (2.0 * cov + c2)
                / ((ma * ma + mb * mb + c1) * (va + vb + c2));
            n += 1.0;
        }
    }
    total / n
}

#[test]
fn gmsd_matches_scalar_oracle_on_random_pairs() {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    for _ in 0..10 {
        let a = random_image(16, 16, &mut rng);
        let b = random_image(16, 16, &mut rng);
        let got = gmsd(&a, &b).unwrap();
        assert!((got - gmsd_oracle(&a, &b)).abs() < 1e-10);
    }
}

#[test]
fn gmsd_of_step_edge_against_flat_image() {
    let a = Image::from_fn(16, 16, |_, x| if x < 8 { 0.2 } else { 0.8 });
    let b = Image::filled(16, 16, 0.5);
    let got = gmsd(&a, &b).unwrap();
    assert!(got > 0.0);
    assert!((got - gmsd_oracle(&a, &b)).abs() < 1e-10);
}

#[test]
fn ssim_matches_direct_window_sums() {
    let mut rng = ChaCha8Rng::seed_from_u64(32);
    for _ in 0..3 {
        let a = random_image(20, 17, &mut rng);
        let b = Image::from_fn(20, 17, |y, x| {
            0.7 * a.get(y, x) + 0.3 * rng.random_range(0.0..1.0)
        });
        assert!((ssim(&a, &b, 1.0).unwrap() - ssim_oracle(&a, &b)).abs() < 1e-10);
    }
}

#[test]
fn closed_form_cases() {
    let a = Image::from_fn(32, 32, |y, x| 0.3 + 0.001 * (y * 32 + x) as f64 / 10.0);
    let p = psnr(&a, &a, 1.0).unwrap();
    assert!(p.infinite && p.mse == 0.0);
    let p = psnr(&a, &a.map(|v| v - 0.1), 1.0).unwrap();
    assert!((p.db - 20.0).abs() < 1e-6);
    let s = ssim(
        &Image::filled(32, 32, 0.5),
        &Image::filled(32, 32, 0.6),
        1.0,
    )
    .unwrap();
    assert!((s - 0.9836).abs() < 1e-3);
}

#[test]
fn mismatched_sizes_are_rejected() {
    let a = Image::filled(16, 16, 0.5);
    let b = Image::filled(16, 15, 0.5);
    assert!(psnr(&a, &b, 1.0).is_err());
    assert!(ssim(&a, &b, 1.0).is_err());
    assert!(gmsd(&a, &b).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn metrics_are_symmetric_and_bounded(seed in any::<u64>(), h in 12usize..24, w in 12usize..24) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = random_image(h, w, &mut rng);
        let b = random_image(h, w, &mut rng);
        let (s_ab, s_ba) = (ssim(&a, &b, 1.0).unwrap(), ssim(&b, &a, 1.0).unwrap());
        prop_assert!((s_ab - s_ba).abs() < 1e-12);
        prop_assert!((-1.0..=1.0).contains(&s_ab));
        let (g_ab, g_ba) = (gmsd(&a, &b).unwrap(), gmsd(&b, &a).unwrap());
        prop_assert!((g_ab - g_ba).abs() < 1e-12);
        prop_assert!(g_ab >= 0.0);
        let p = psnr(&a, &b, 1.0).unwrap();
        prop_assert!(p.db.is_finite() && !p.infinite);
    }

    #[test]
    fn psnr_of_uniform_offset(d in 0.001f64..0.5) {
        let a = Image::filled(8, 8, 0.25);
        let b = a.map(|v| v + d);
        let p = psnr(&a, &b, 1.0).unwrap();
        prop_assert!((p.db + 10.0 * (d * d).log10()).abs() < 1e-6);
    }
}

#[test]
fn mac_primitives_match_counting_loops() {
    assert_eq!(conv_mac_loop(1, 64, 3, (256, 256), 1, 1), 37_748_736);
    assert_eq!(conv2d_macs(1, 64, 3, 256, 256), 37_748_736);
    assert_eq!(
        conv2d_macs(16, 8, 1, 32, 32),
        conv_mac_loop(16, 8, 1, (32, 32), 1, 0)
    );
    assert_eq!(
        conv2d_macs(8, 8, 4, 16, 16),
        conv_mac_loop(8, 8, 4, (32, 32), 2, 1)
    );

    // transposed: every input pixel scatters k*k*cout products per channel
    let (cin, cout, k, hin, win) = (6, 3, 4, 5, 7);
    let mut n = 0u64;
    for _ in 0..cin * hin * win {
        for _ in 0..cout * k * k {
            n += 1;
        }
    }
    assert_eq!(conv_transpose2d_macs(cin, cout, k, hin, win), n);

    let mut n = 0u64;
    for _ in 0..10 {
        for _ in 0..32 * 12 {
            n += 1;
        }
    }
    assert_eq!(linear_macs(10, 32, 12), n);

    assert_eq!(attention_window_macs(16, 8), attention_mac_loop(16, 8));
}

#[test]
fn report_layout() {
    let rows = vec![
        ReportRow {
            model: "a".into(),
            psnr: Some(30.0),
            ssim: Some(0.9),
            gmsd: Some(0.05),
            gmacs: Some(1.5),
            minutes_per_scan: None,
        },
        ReportRow {
            model: "b".into(),
            psnr: Some(31.256),
            ssim: Some(0.91234),
            gmsd: Some(0.04321),
            gmacs: None,
            minutes_per_scan: Some(2.5),
        },
    ];
    let text = render_report(&rows);
    let lines: Vec<&str> = text.lines().collect();
    assert!(lines[0].contains("PSNR"));
    let b = lines.iter().position(|l| l.contains("31.26")).unwrap();
    let a = lines.iter().position(|l| l.contains("30.00")).unwrap();
    assert!(b < a);
    assert!(text.contains("0.9123") && text.contains("0.0432") && text.contains("1.500"));
}
