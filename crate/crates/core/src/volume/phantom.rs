//! Seeded abdominal phantoms with a small, irregular, low-contrast target.
//!
//! A bright body ellipsoid holds a large "liver", a "spine", a few confuser
//! blobs and the target. Confusers share the target's intensity band, so only
//! texture, context and position tell them apart. A table bar sits below the
//! body so table removal has something to remove.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{voxel_count, Dims, SegmentationMask, Spacing, Volume3D, MAX_INTENSITY};
use crate::components::{label_3d, Connectivity3};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PhantomSpec {
    pub dims: Dims,
    pub spacing_mm: [f64; 3],
    pub seed: u64,
    /// Blobs sharing the target's intensity band.
    pub confusers: usize,
    pub air_intensity: f64,
    pub body_intensity: f64,
    pub liver_intensity: f64,
    pub spine_intensity: f64,
    pub table_intensity: f64,
    pub target_intensity: f64,
    /// Half-width of the band the target and confuser means are drawn from.
    pub band_halfwidth: f64,
    pub noise_sd: f64,
}

impl Default for PhantomSpec {
    fn default() -> Self {
        PhantomSpec {
            dims: [64, 64, 16],
            spacing_mm: [0.8, 0.8, 2.0],
            seed: 0,
            confusers: 3,
            air_intensity: 40.0,
            body_intensity: 900.0,
            liver_intensity: 1060.0,
            spine_intensity: 1700.0,
            table_intensity: 1100.0,
            target_intensity: 1200.0,
            band_halfwidth: 30.0,
            noise_sd: 20.0,
        }
    }
}

#[derive(Clone, Copy, Debug)]
struct Ellipsoid {
    c: [f64; 3],
    r: [f64; 3],
}

impl Ellipsoid {
    fn contains(&self, x: f64, y: f64, z: f64) -> bool {
        let dx = (x - self.c[0]) / self.r[0];
        let dy = (y - self.c[1]) / self.r[1];
        let dz = (z - self.c[2]) / self.r[2];
        dx * dx + dy * dy + dz * dz <= 1.0
    }
}

fn paint(fg: &mut [bool], dims: Dims, e: &Ellipsoid) {
    let [nx, ny, nz] = dims;
    for z in 0..nz {
        for y in 0..ny {
            for x in 0..nx {
                if e.contains(x as f64, y as f64, z as f64) {
                    fg[x + nx * (y + ny * z)] = true;
                }
            }
        }
    }
}

/// 3×3×3 majority vote (at least 14 of 27, out-of-grid counts as off).
fn majority_smooth(fg: &[bool], dims: Dims) -> Vec<bool> {
    let [nx, ny, nz] = dims;
    let mut out = vec![false; fg.len()];
    for z in 0..nz {
        for y in 0..ny {
            for x in 0..nx {
                let mut n = 0;
                for dz in -1i64..=1 {
                    for dy in -1i64..=1 {
                        for dx in -1i64..=1 {
                            let (qx, qy, qz) = (x as i64 + dx, y as i64 + dy, z as i64 + dz);
                            if qx >= 0
                                && qy >= 0
                                && qz >= 0
                                && (qx as usize) < nx
                                && (qy as usize) < ny
                                && (qz as usize) < nz
                                && fg[qx as usize + nx * (qy as usize + ny * qz as usize)]
                            {
                                n += 1;
                            }
                        }
                    }
                }
                out[x + nx * (y + ny * z)] = n >= 14;
            }
        }
    }
    out
}

fn largest_component(fg: &[bool], dims: Dims) -> Vec<bool> {
    let cc = label_3d(fg, dims, Connectivity3::TwentySix);
    match cc.largest() {
        Some(l) => cc.labels.iter().map(|&x| x == l).collect(),
        None => vec![false; fg.len()],
    }
}

/// Builds a phantom volume and its target mask. Pure function of `spec`.
pub fn generate_phantom(spec: &PhantomSpec) -> Result<(Volume3D, SegmentationMask)> {
    let dims = spec.dims;
    let [nx, ny, nz] = dims;
    if nx < 24 || ny < 24 || nz < 4 {
        return Err(Error::invalid(format!(
            "phantom dims {dims:?} too small for the body ellipsoid (need at least 24×24×4)"
        )));
    }
    let spacing = Spacing(spec.spacing_mm);
    spacing.validate()?;
    if !(spec.noise_sd >= 0.0 && spec.band_halfwidth >= 0.0) {
        return Err(Error::invalid(
            "noise_sd and band_halfwidth must be non-negative",
        ));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let (fx, fy, fz) = (nx as f64, ny as f64, nz as f64);
    let (cx, cy, cz) = (fx / 2.0 - 0.5, fy / 2.0 - 0.5, fz / 2.0 - 0.5);
    let jitter = |rng: &mut ChaCha8Rng, a: f64| rng.random_range(-a..=a);

    let ax = fx * (0.42 + jitter(&mut rng, 0.02));
    let ay = fy * (0.33 + jitter(&mut rng, 0.02));
    let body = Ellipsoid {
        c: [cx, cy - fy * 0.04, cz],
        r: [ax, ay, fz * 1.2],
    };
    let liver = Ellipsoid {
        c: [cx - 0.5 * ax + jitter(&mut rng, 1.5), cy - 0.15 * ay, cz],
        r: [0.38 * ax, 0.5 * ay, fz],
    };
    let spine = Ellipsoid {
        c: [cx, body.c[1] + 0.62 * ay, cz],
        r: [0.13 * ax, 0.2 * ay, fz * 2.0],
    };

    // Target: union of 3–6 ellipsoids around a mid-abdominal anchor.
    let anchor = [
        cx + 0.25 * ax + jitter(&mut rng, 1.5),
        body.c[1] + 0.05 * ay + jitter(&mut rng, 1.5),
        cz + jitter(&mut rng, 1.0),
    ];
    let mut scale = 1.0;
    let parts = rng.random_range(3..=6);
    let shapes: Vec<([f64; 3], [f64; 3])> = (0..parts)
        .map(|_| {
            let off = [
                jitter(&mut rng, 3.5),
                jitter(&mut rng, 2.5),
                jitter(&mut rng, 1.5),
            ];
            let r = [
                rng.random_range(4.5..6.5),
                rng.random_range(3.5..5.0),
                rng.random_range(3.0..4.5),
            ];
            (off, r)
        })
        .collect();
    let n = voxel_count(dims);
    let body_fg = {
        let mut fg = vec![false; n];
        paint(&mut fg, dims, &body);
        fg
    };
    let body_count = body_fg.iter().filter(|&&b| b).count();
    let target = loop {
        let mut fg = vec![false; n];
        for (off, r) in &shapes {
            paint(
                &mut fg,
                dims,
                &Ellipsoid {
                    c: [
                        anchor[0] + off[0] * scale,
                        anchor[1] + off[1] * scale,
                        anchor[2] + off[2],
                    ],
                    r: [r[0] * scale, r[1] * scale, r[2]],
                },
            );
        }
        let fg: Vec<bool> = majority_smooth(&fg, dims)
            .into_iter()
            .zip(&body_fg)
            .map(|(t, &b)| t && b)
            .collect();
        let fg = largest_component(&fg, dims);
        let count = fg.iter().filter(|&&b| b).count();
        if count > 0 && (count as f64) < 0.05 * body_count as f64 {
            break fg;
        }
        if count == 0 || scale < 0.3 {
            return Err(Error::invalid("phantom dims too small to place the target"));
        }
        scale *= 0.9;
    };

    // Confusers sit on a ring around the body center, on the far side from
    // the target and at least a few voxels clear of it.
    let target_pts: Vec<[f64; 3]> = target
        .iter()
        .enumerate()
        .filter(|(_, &t)| t)
        .map(|(i, _)| {
            [
                (i % nx) as f64,
                ((i / nx) % ny) as f64,
                (i / (nx * ny)) as f64,
            ]
        })
        .collect();
    let clear_of_target = |e: &Ellipsoid| {
        let grown = Ellipsoid {
            c: e.c,
            r: [e.r[0] + 3.0, e.r[1] + 3.0, e.r[2] + 1.0],
        };
        !target_pts.iter().any(|p| grown.contains(p[0], p[1], p[2]))
    };
    let mut confusers = Vec::with_capacity(spec.confusers);
    for i in 0..spec.confusers {
        let mut placed = None;
        for _ in 0..50 {
            let span = std::f64::consts::PI * 1.2;
            let t = (i as f64 + 0.5) / spec.confusers as f64;
            let angle = std::f64::consts::PI - span / 2.0 + span * t + jitter(&mut rng, 0.25);
            let dist = rng.random_range(0.5..0.7);
            let e = Ellipsoid {
                c: [
                    cx + dist * ax * angle.cos() * 0.8,
                    body.c[1] + dist * ay * angle.sin() * 0.75,
                    cz + jitter(&mut rng, 2.0),
                ],
                r: [
                    rng.random_range(3.0..5.0),
                    rng.random_range(3.0..4.5),
                    rng.random_range(2.5..4.5),
                ],
            };
            if clear_of_target(&e) {
                placed = Some(e);
                break;
            }
        }
        if let Some(e) = placed {
            confusers.push(e);
        }
    }

    let target_mean = spec.target_intensity + jitter(&mut rng, spec.band_halfwidth);
    let confuser_means: Vec<f64> = (0..confusers.len())
        .map(|_| spec.target_intensity + jitter(&mut rng, spec.band_halfwidth))
        .collect();
    let table_y0 = (body.c[1] + ay).ceil() as usize + 3;

    let noise = Normal::new(0.0, spec.noise_sd.max(1e-12))
        .map_err(|e| Error::invalid(format!("noise: {e}")))?;
    let mut values = Vec::with_capacity(n);
    for z in 0..nz {
        for y in 0..ny {
            for x in 0..nx {
                let i = x + nx * (y + ny * z);
                let (px, py, pz) = (x as f64, y as f64, z as f64);
                let mut base = spec.air_intensity;
                if body_fg[i] {
                    base = spec.body_intensity;
                    if liver.contains(px, py, pz) {
                        base = spec.liver_intensity;
                    }
                    if spine.contains(px, py, pz) {
                        base = spec.spine_intensity;
                    }
                    for (e, &m) in confusers.iter().zip(&confuser_means) {
                        if e.contains(px, py, pz) {
                            base = m;
                        }
                    }
                    if target[i] {
                        base = target_mean;
                    }
                } else if y >= table_y0 && y < table_y0 + 2 && px > 0.15 * fx && px < 0.85 * fx {
                    base = spec.table_intensity;
                }
                let noisy = if spec.noise_sd > 0.0 {
                    base + noise.sample(&mut rng)
                } else {
                    base
                };
                values.push(noisy.round().clamp(0.0, MAX_INTENSITY as f64) as i16);
            }
        }
    }
    let volume = Volume3D::new(dims, spacing, values)?;
    let mask = SegmentationMask::from_bools(dims, spacing, &target)?;
    Ok((volume, mask))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::volume::{body_mask, DEFAULT_AIR_THRESHOLD};

    #[test]
    fn deterministic_for_seed() {
        let spec = PhantomSpec {
            seed: 7,
            ..Default::default()
        };
        let a = generate_phantom(&spec).unwrap();
        let b = generate_phantom(&spec).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn target_is_single_component_and_small() {
        for seed in 0..6 {
            let spec = PhantomSpec {
                seed,
                ..Default::default()
            };
            let (v, gt) = generate_phantom(&spec).unwrap();
            let cc = label_3d(&gt.to_bools(), gt.dims(), Connectivity3::TwentySix);
            assert_eq!(cc.count(), 1, "seed {seed}");
            let body = body_mask(&v, DEFAULT_AIR_THRESHOLD);
            let frac = gt.count() as f64 / body.count() as f64;
            assert!(frac < 0.05, "seed {seed}: fraction {frac}");
        }
    }

    #[test]
    fn tiny_dims_rejected() {
        let spec = PhantomSpec {
            dims: [10, 10, 2],
            ..Default::default()
        };
        assert!(generate_phantom(&spec).is_err());
    }
}
