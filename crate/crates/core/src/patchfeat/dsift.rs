//! Dense SIFT at a single keypoint: a 2×2 grid of spatial bins, 8
//! orientation bins each, trilinear vote, L2 / clip / L2 normalization.

pub const SPATIAL_BINS: usize = 2;
pub const ORIENTATIONS: usize = 8;
pub const DSIFT_LEN: usize = SPATIAL_BINS * SPATIAL_BINS * ORIENTATIONS;
pub const DEFAULT_BIN_SIZE: usize = 6;

const CLIP: f64 = 0.2;
const NORM_EPS: f64 = 1e-10;

/// Descriptor index of spatial bin (bx, by) and orientation bin o.
pub fn bin_index(bx: usize, by: usize, o: usize) -> usize {
    (by * SPATIAL_BINS + bx) * ORIENTATIONS + o
}

fn l2_normalize(v: &mut [f64]) -> bool {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm < NORM_EPS {
        return false;
    }
    v.iter_mut().for_each(|x| *x /= norm);
    true
}

/// Descriptor centered on pixel (cx, cy). Gradients are central differences
/// with clamped sampling at the slice border. Orientation 0 points along +x,
/// increasing towards +y.
pub fn dsift(
    slice: &[i16],
    width: usize,
    height: usize,
    cx: usize,
    cy: usize,
    bin_size: usize,
) -> [f32; DSIFT_LEN] {
    debug_assert!(cx < width && cy < height);
    let at = |x: i64, y: i64| -> f64 {
        let x = x.clamp(0, width as i64 - 1) as usize;
        let y = y.clamp(0, height as i64 - 1) as usize;
        slice[x + y * width] as f64
    };
    let bs = bin_size as f64;
    // Bin centers sit at ±bs/2 from the keypoint.
    let centers = [-bs / 2.0, bs / 2.0];
    let reach = (bs * 1.5).ceil() as i64;
    let mut hist = [0.0f64; DSIFT_LEN];
    for dy in -reach..=reach {
        for dx in -reach..=reach {
            let wx: [f64; 2] = centers.map(|c| (1.0 - (dx as f64 - c).abs() / bs).max(0.0));
            let wy: [f64; 2] = centers.map(|c| (1.0 - (dy as f64 - c).abs() / bs).max(0.0));
            if wx.iter().all(|&w| w == 0.0) || wy.iter().all(|&w| w == 0.0) {
                continue;
            }
            let (x, y) = (cx as i64 + dx, cy as i64 + dy);
            let gx = (at(x + 1, y) - at(x - 1, y)) / 2.0;
            let gy = (at(x, y + 1) - at(x, y - 1)) / 2.0;
            let mag = (gx * gx + gy * gy).sqrt();
            if mag == 0.0 {
                continue;
            }
            let mut angle = gy.atan2(gx);
            if angle < 0.0 {
                angle += std::f64::consts::TAU;
            }
            let o = angle / std::f64::consts::TAU * ORIENTATIONS as f64;
            let o0 = o.floor();
            let frac = o - o0;
            let o0 = (o0 as usize) % ORIENTATIONS;
            let o1 = (o0 + 1) % ORIENTATIONS;
            for (by, &wyv) in wy.iter().enumerate() {
                for (bx, &wxv) in wx.iter().enumerate() {
                    let w = wxv * wyv * mag;
                    if w == 0.0 {
                        continue;
                    }
                    hist[bin_index(bx, by, o0)] += w * (1.0 - frac);
                    if frac > 0.0 {
                        hist[bin_index(bx, by, o1)] += w * frac;
                    }
                }
            }
        }
    }
    if l2_normalize(&mut hist) {
        hist.iter_mut().for_each(|x| *x = x.min(CLIP));
        l2_normalize(&mut hist);
    }
    hist.map(|x| x as f32)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_patch_is_zero() {
        let img = vec![777i16; 30 * 30];
        assert!(dsift(&img, 30, 30, 15, 15, 6).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn vertical_step_only_fills_horizontal_gradient_bins() {
        // Intensity steps up along +x, so gradients point along +x (bin 0).
        let (w, h) = (30, 30);
        let img: Vec<i16> = (0..w * h)
            .map(|p| if p % w < 15 { 100 } else { 900 })
            .collect();
        let d = dsift(&img, w, h, 15, 15, 6);
        let mut horizontal = 0.0;
        for by in 0..2 {
            for bx in 0..2 {
                for o in 0..ORIENTATIONS {
                    let v = d[bin_index(bx, by, o)];
                    if o == 0 {
                        horizontal += v;
                    } else {
                        assert_eq!(v, 0.0, "bin ({bx},{by},{o})");
                    }
                }
            }
        }
        assert!(horizontal > 0.9);
    }
}
