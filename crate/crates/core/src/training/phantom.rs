//! Synthetic tissue phantoms: soft-edged ellipsoids with internal cavities
//! and low-amplitude texture on an exactly zero background.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{HaruError, Result};
use crate::volume_io::Volume;

#[derive(Clone, Debug, PartialEq)]
pub struct PhantomConfig {
    pub ellipsoids: (usize, usize),
    pub intensity: (f64, f64),
    pub cavities: (usize, usize),
    pub cavity_intensity: (f64, f64),
    pub texture_amplitude: f64,
    /// Width of the soft rim, as a fraction of the normalized radius.
    pub edge: f64,
    /// In-plane semi-axes as fractions of the shorter in-plane side.
    pub radius: (f64, f64),
}

impl Default for PhantomConfig {
    fn default() -> Self {
        PhantomConfig {
            ellipsoids: (3, 8),
            intensity: (0.55, 0.9),
            cavities: (1, 3),
            cavity_intensity: (0.1, 0.25),
            texture_amplitude: 0.05,
            edge: 0.08,
            radius: (0.1, 0.24),
        }
    }
}

/// Smallest in-plane side accepted by the generator.
pub const MIN_SIDE: usize = 16;

struct Ellipsoid {
    center: [f64; 3],
    radii: [f64; 3],
    intensity: f64,
    cavities: Vec<Ellipsoid>,
}

impl Ellipsoid {
    /// Squared normalized radius of point `p`.
    fn r2(&self, p: [f64; 3]) -> f64 {
        (0..3)
            .map(|i| ((p[i] - self.center[i]) / self.radii[i]).powi(2))
            .sum()
    }
}

/// Weight that is 1 inside, 0 at and beyond the surface, with a smoothstep
/// rim of width `edge`.
fn rim(r2: f64, edge: f64) -> f64 {
    if r2 >= 1.0 {
        return 0.0;
    }
    let r = r2.sqrt();
    let t = ((1.0 - r) / edge).min(1.0);
    t * t * (3.0 - 2.0 * t)
}

struct Wave {
    freq: [f64; 3],
    phase: f64,
    amp: f64,
}

fn uniform(rng: &mut ChaCha8Rng, (lo, hi): (f64, f64)) -> f64 {
    if hi > lo {
        rng.random_range(lo..hi)
    } else {
        lo
    }
}

pub fn generate_phantom_volume(seed: u64, dims: (usize, usize, usize)) -> Result<Volume> {
    generate_phantom_with(seed, dims, &PhantomConfig::default())
}

pub fn generate_phantom_with(
    seed: u64,
    dims: (usize, usize, usize),
    cfg: &PhantomConfig,
) -> Result<Volume> {
    let (d, h, w) = dims;
    if d == 0 || h < MIN_SIDE || w < MIN_SIDE {
        return Err(HaruError::Invalid(format!(
            "phantom dims {d}x{h}x{w} too small (in-plane sides must be at least {MIN_SIDE})"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let side = h.min(w) as f64;
    let count = rng.random_range(cfg.ellipsoids.0..=cfg.ellipsoids.1);
    let mut bodies = Vec::with_capacity(count);
    for _ in 0..count {
        let ry = uniform(&mut rng, cfg.radius) * side;
        let rx = uniform(&mut rng, cfg.radius) * side;
        // Elongated along depth so thin volumes still show tissue in most slices.
        let rz = uniform(&mut rng, (0.6, 1.2)) * d as f64 + 1.0;
        let center = [
            uniform(&mut rng, (0.3, 0.7)) * d as f64,
            uniform(&mut rng, (ry + 1.0, h as f64 - ry - 1.0)),
            uniform(&mut rng, (rx + 1.0, w as f64 - rx - 1.0)),
        ];
        let radii = [rz, ry, rx];
        let intensity = uniform(&mut rng, cfg.intensity);
        let n_cav = rng.random_range(cfg.cavities.0..=cfg.cavities.1);
        let mut cavities = Vec::with_capacity(n_cav);
        for _ in 0..n_cav {
            let scale = [
                0.9,
                uniform(&mut rng, (0.15, 0.3)),
                uniform(&mut rng, (0.15, 0.3)),
            ];
            let crad = [
                radii[0] * scale[0],
                radii[1] * scale[1],
                radii[2] * scale[2],
            ];
            let offset = [
                0.0,
                uniform(&mut rng, (-0.4, 0.4)),
                uniform(&mut rng, (-0.4, 0.4)),
            ];
            cavities.push(Ellipsoid {
                center: [
                    center[0],
                    center[1] + offset[1] * radii[1],
                    center[2] + offset[2] * radii[2],
                ],
                radii: crad,
                intensity: uniform(&mut rng, cfg.cavity_intensity),
                cavities: Vec::new(),
            });
        }
        bodies.push(Ellipsoid {
            center,
            radii,
            intensity,
            cavities,
        });
    }
    let waves: Vec<Wave> = (0..3)
        .map(|_| Wave {
            freq: [
                uniform(&mut rng, (0.02, 0.12)),
                uniform(&mut rng, (0.02, 0.12)),
                uniform(&mut rng, (0.02, 0.12)),
            ],
            phase: uniform(&mut rng, (0.0, std::f64::consts::TAU)),
            amp: cfg.texture_amplitude / 3.0,
        })
        .collect();

    let plane = h * w;
    let mut voxels = vec![0.0f32; d * plane];
    voxels
        .par_chunks_mut(plane)
        .enumerate()
        .for_each(|(z, out)| {
            for y in 0..h {
                for x in 0..w {
                    let p = [z as f64 + 0.5, y as f64 + 0.5, x as f64 + 0.5];
                    let mut value = 0.0f64;
                    for b in &bodies {
                        let weight = rim(b.r2(p), cfg.edge);
                        if weight == 0.0 {
                            continue;
                        }
                        let mut inner = b.intensity;
                        for c in &b.cavities {
                            let cw = rim(c.r2(p), 0.3);
                            inner = inner * (1.0 - cw) + c.intensity * cw;
                        }
                        let texture: f64 = waves
                            .iter()
                            .map(|wv| {
                                wv.amp
                                    * (wv.freq[0] * p[0]
                                        + wv.freq[1] * p[1]
                                        + wv.freq[2] * p[2]
                                        + wv.phase)
                                        .sin()
                            })
                            .sum();
                        // Texture is kept strictly smaller than the tissue value so
                        // tissue never rounds to background.
                        let v = weight * (inner + texture).max(0.02);
                        value = value.max(v);
                    }
                    out[y * w + x] = value.clamp(0.0, 1.0) as f32;
                }
            }
        });
    Volume::new(format!("phantom{seed}"), dims, voxels)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_and_bounded() {
        let a = generate_phantom_volume(7, (4, 64, 64)).unwrap();
        let b = generate_phantom_volume(7, (4, 64, 64)).unwrap();
        assert_eq!(a.voxels(), b.voxels());
        assert!(a.voxels().iter().all(|&v| (0.0..=1.0).contains(&v)));
        assert!(generate_phantom_volume(1, (4, 8, 64)).is_err());
    }

    #[test]
    fn corners_are_background() {
        let v = generate_phantom_volume(3, (4, 64, 64)).unwrap();
        for z in 0..4 {
            assert_eq!(v.get(z, 0, 0), 0.0);
            assert_eq!(v.get(z, 63, 63), 0.0);
        }
    }
}
