//! SLIC over a single grayscale slice plus the connectivity post-step.

use crate::error::{Error, Result};

/// Raw intensity units that count as one unit of color distance.
pub const INTENSITY_SCALE: f64 = 40.0;

/// Seed positions for `k` superpixels on a `width × height` slice: a
/// regular lattice with alternate rows shifted a quarter step either way.
pub fn lattice_seeds(width: usize, height: usize, k: usize) -> Vec<(f64, f64)> {
    let step = grid_interval(width, height, k);
    let cols = ((width as f64 / step).round() as usize).max(1);
    let rows = ((height as f64 / step).round() as usize).max(1);
    let sx = width as f64 / cols as f64;
    let sy = height as f64 / rows as f64;
    let mut seeds = Vec::with_capacity(rows * cols);
    for r in 0..rows {
        let shift = if cols > 1 {
            if r % 2 == 0 {
                -sx / 4.0
            } else {
                sx / 4.0
            }
        } else {
            0.0
        };
        for c in 0..cols {
            let x = (c as f64 + 0.5) * sx - 0.5 + shift;
            let y = (r as f64 + 0.5) * sy - 0.5;
            seeds.push((x.clamp(0.0, (width - 1) as f64), y));
        }
    }
    seeds
}

/// Grid interval S = sqrt(N / k).
pub fn grid_interval(width: usize, height: usize, k: usize) -> f64 {
    ((width * height) as f64 / k as f64).sqrt()
}

fn gradient_energy(img: &[f64], width: usize, height: usize, x: usize, y: usize) -> f64 {
    let at = |x: usize, y: usize| img[x + y * width];
    let xl = x.saturating_sub(1);
    let xr = (x + 1).min(width - 1);
    let yu = y.saturating_sub(1);
    let yd = (y + 1).min(height - 1);
    let gx = at(xr, y) - at(xl, y);
    let gy = at(x, yd) - at(x, yu);
    gx * gx + gy * gy
}

#[derive(Clone, Copy, Debug)]
struct Center {
    x: f64,
    y: f64,
    intensity: f64,
}

/// SLIC on one slice. Returns one label per pixel, numbered consecutively in
/// raster order of first appearance, every region 4-connected.
///
/// Distance is `sqrt(d_int² + (d_xy / S)² · m²)` with `d_int` the intensity
/// difference divided by [`INTENSITY_SCALE`]. Equal distances go to the
/// lowest seed index.
pub fn slic_slice(
    slice: &[i16],
    width: usize,
    height: usize,
    k: usize,
    compactness: f64,
    iters: usize,
) -> Result<Vec<u32>> {
    let n = width * height;
    if n == 0 || slice.len() != n {
        return Err(Error::invalid(format!(
            "slice has {} values for {width}×{height}",
            slice.len()
        )));
    }
    if k == 0 || k > n {
        return Err(Error::invalid(format!("k = {k} must be in [1, {n}]")));
    }
    let img: Vec<f64> = slice.iter().map(|&v| v as f64).collect();
    let s = grid_interval(width, height, k);

    let mut centers: Vec<Center> = lattice_seeds(width, height, k)
        .into_iter()
        .map(|(sx, sy)| {
            let (px, py) = (sx.round() as usize, sy.round() as usize);
            let mut best = (gradient_energy(&img, width, height, px, py), px, py);
            for dy in -1i64..=1 {
                for dx in -1i64..=1 {
                    let (qx, qy) = (px as i64 + dx, py as i64 + dy);
                    if qx < 0 || qy < 0 || qx >= width as i64 || qy >= height as i64 {
                        continue;
                    }
                    let g = gradient_energy(&img, width, height, qx as usize, qy as usize);
                    if g < best.0 {
                        best = (g, qx as usize, qy as usize);
                    }
                }
            }
            let (x, y) = if (best.1, best.2) == (px, py) {
                (sx, sy)
            } else {
                (best.1 as f64, best.2 as f64)
            };
            Center {
                x,
                y,
                intensity: img[best.1 + best.2 * width],
            }
        })
        .collect();

    let spatial_w = (compactness / s).powi(2);
    let radius = (2.0 * s).ceil();
    let mut labels = vec![u32::MAX; n];
    let mut dist = vec![f64::INFINITY; n];
    for _ in 0..iters.max(1) {
        labels.fill(u32::MAX);
        dist.fill(f64::INFINITY);
        for (ci, c) in centers.iter().enumerate() {
            let x0 = (c.x - radius).floor().max(0.0) as usize;
            let x1 = ((c.x + radius).ceil() as usize).min(width - 1);
            let y0 = (c.y - radius).floor().max(0.0) as usize;
            let y1 = ((c.y + radius).ceil() as usize).min(height - 1);
            for y in y0..=y1 {
                let dy = y as f64 - c.y;
                for x in x0..=x1 {
                    let p = x + y * width;
                    let dx = x as f64 - c.x;
                    let di = (img[p] - c.intensity) / INTENSITY_SCALE;
                    let d = di * di + (dx * dx + dy * dy) * spatial_w;
                    if d < dist[p] {
                        dist[p] = d;
                        labels[p] = ci as u32;
                    }
                }
            }
        }
        // Pixels outside every search window fall back to a full scan.
        for p in 0..n {
            if labels[p] != u32::MAX {
                continue;
            }
            let (x, y) = ((p % width) as f64, (p / width) as f64);
            let mut best = (f64::INFINITY, 0u32);
            for (ci, c) in centers.iter().enumerate() {
                let di = (img[p] - c.intensity) / INTENSITY_SCALE;
                let d = di * di + ((x - c.x).powi(2) + (y - c.y).powi(2)) * spatial_w;
                if d < best.0 {
                    best = (d, ci as u32);
                }
            }
            labels[p] = best.1;
        }
        let mut acc = vec![(0.0f64, 0.0f64, 0.0f64, 0usize); centers.len()];
        for (p, &l) in labels.iter().enumerate() {
            let a = &mut acc[l as usize];
            a.0 += (p % width) as f64;
            a.1 += (p / width) as f64;
            a.2 += img[p];
            a.3 += 1;
        }
        for (c, a) in centers.iter_mut().zip(&acc) {
            if a.3 > 0 {
                let m = a.3 as f64;
                *c = Center {
                    x: a.0 / m,
                    y: a.1 / m,
                    intensity: a.2 / m,
                };
            }
        }
    }

    let min_size = ((s * s) / 4.0).floor().max(1.0) as usize;
    let connected = enforce_connectivity(&labels, width, height, min_size);
    Ok(relabel_consecutive(&connected))
}

/// Renumbers labels 0.. in raster order of first appearance.
pub fn relabel_consecutive(labels: &[u32]) -> Vec<u32> {
    let mut map = std::collections::HashMap::new();
    labels
        .iter()
        .map(|&l| {
            let next = map.len() as u32;
            *map.entry(l).or_insert(next)
        })
        .collect()
}

/// 4-connected regions of equal label: per-pixel region id (raster order)
/// and each region's label and pixel list.
pub(crate) fn label_regions(
    labels: &[u32],
    width: usize,
    height: usize,
) -> (Vec<u32>, Vec<(u32, Vec<usize>)>) {
    let mut region = vec![u32::MAX; labels.len()];
    let mut regions = Vec::new();
    let mut stack = Vec::new();
    for start in 0..labels.len() {
        if region[start] != u32::MAX {
            continue;
        }
        let id = regions.len() as u32;
        let lab = labels[start];
        let mut pixels = Vec::new();
        region[start] = id;
        stack.push(start);
        while let Some(p) = stack.pop() {
            pixels.push(p);
            let (x, y) = (p % width, p / width);
            let mut visit = |q: usize| {
                if region[q] == u32::MAX && labels[q] == lab {
                    region[q] = id;
                    stack.push(q);
                }
            };
            if x > 0 {
                visit(p - 1);
            }
            if x + 1 < width {
                visit(p + 1);
            }
            if y > 0 {
                visit(p - width);
            }
            if y + 1 < height {
                visit(p + width);
            }
        }
        pixels.sort_unstable();
        regions.push((lab, pixels));
    }
    (region, regions)
}

/// Makes every label 4-connected. Each label keeps its largest piece (if
/// at least `min_size` pixels); every other piece joins the adjacent label
/// it shares the longest boundary with (ties to the lowest label). Label
/// values of kept pieces are left untouched.
pub fn enforce_connectivity(
    labels: &[u32],
    width: usize,
    height: usize,
    min_size: usize,
) -> Vec<u32> {
    assert_eq!(labels.len(), width * height);
    if labels.is_empty() {
        return Vec::new();
    }
    let (region, regions) = label_regions(labels, width, height);

    let mut main: std::collections::HashMap<u32, usize> = std::collections::HashMap::new();
    for (id, (lab, px)) in regions.iter().enumerate() {
        match main.get(lab) {
            Some(&m) if regions[m].1.len() >= px.len() => {}
            _ => {
                main.insert(*lab, id);
            }
        }
    }
    let mut kept: Vec<bool> = regions
        .iter()
        .enumerate()
        .map(|(id, (lab, px))| main[lab] == id && px.len() >= min_size)
        .collect();
    if !kept.iter().any(|&k| k) {
        let biggest = (0..regions.len())
            .max_by(|&a, &b| regions[a].1.len().cmp(&regions[b].1.len()).then(b.cmp(&a)))
            .expect("non-empty");
        kept[biggest] = true;
    }
    let mut final_label: Vec<u32> = regions.iter().map(|(l, _)| *l).collect();

    loop {
        let mut pending = false;
        let mut progress = false;
        for id in 0..regions.len() {
            if kept[id] {
                continue;
            }
            let mut votes: std::collections::BTreeMap<u32, usize> = Default::default();
            for &p in &regions[id].1 {
                let (x, y) = (p % width, p / width);
                let mut nb = [None; 4];
                if x > 0 {
                    nb[0] = Some(p - 1);
                }
                if x + 1 < width {
                    nb[1] = Some(p + 1);
                }
                if y > 0 {
                    nb[2] = Some(p - width);
                }
                if y + 1 < height {
                    nb[3] = Some(p + width);
                }
                for q in nb.into_iter().flatten() {
                    let r = region[q] as usize;
                    if r != id && kept[r] {
                        *votes.entry(final_label[r]).or_default() += 1;
                    }
                }
            }
            let mut best: Option<(u32, usize)> = None;
            for (&lab, &n) in &votes {
                if best.is_none_or(|(_, bn)| n > bn) {
                    best = Some((lab, n));
                }
            }
            match best {
                Some((lab, _)) => {
                    final_label[id] = lab;
                    kept[id] = true;
                    progress = true;
                }
                None => pending = true,
            }
        }
        if !pending || !progress {
            break;
        }
    }

    let mut out = vec![0u32; labels.len()];
    for (p, &r) in region.iter().enumerate() {
        out[p] = final_label[r as usize];
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn is_4connected(labels: &[u32], w: usize, h: usize) -> bool {
        let (_, regions) = label_regions(labels, w, h);
        let mut seen = std::collections::HashSet::new();
        regions.iter().all(|(l, _)| seen.insert(*l))
    }

    #[test]
    fn connected_input_unchanged() {
        #[rustfmt::skip]
        let labels = vec![
            5, 5, 2, 2,
            5, 5, 2, 2,
            7, 7, 7, 7,
        ];
        assert_eq!(enforce_connectivity(&labels, 4, 3, 1), labels);
    }

    #[test]
    fn island_joins_dominant_neighbor() {
        // Label 1 has a big piece on the left and a 2-pixel island inside
        // label 2's territory; the island borders 2 on five edges and 3 on one.
        #[rustfmt::skip]
        let labels = vec![
            1, 1, 2, 2, 2, 2,
            1, 1, 2, 1, 1, 2,
            1, 1, 2, 2, 3, 3,
        ];
        let out = enforce_connectivity(&labels, 6, 3, 1);
        #[rustfmt::skip]
        let want = vec![
            1, 1, 2, 2, 2, 2,
            1, 1, 2, 2, 2, 2,
            1, 1, 2, 2, 3, 3,
        ];
        assert_eq!(out, want);
        assert!(is_4connected(&out, 6, 3));
    }

    #[test]
    fn single_pixel_orphan_absorbed() {
        #[rustfmt::skip]
        let labels = vec![
            0, 0, 0,
            0, 9, 0,
            0, 0, 0,
        ];
        let out = enforce_connectivity(&labels, 3, 3, 2);
        assert!(out.iter().all(|&l| l == 0));
    }

    #[test]
    fn rejects_bad_k() {
        assert!(slic_slice(&[0; 4], 2, 2, 5, 10.0, 1).is_err());
        assert!(slic_slice(&[0; 4], 2, 2, 0, 10.0, 1).is_err());
    }

    #[test]
    fn partition_and_connectivity_on_noise() {
        let (w, h) = (40, 30);
        let img: Vec<i16> = (0..w * h)
            .map(|i| (1000 + (i * 7919) % 80) as i16)
            .collect();
        let labels = slic_slice(&img, w, h, 20, 10.0, 5).unwrap();
        assert_eq!(labels.len(), w * h);
        assert!(is_4connected(&labels, w, h));
        let n = *labels.iter().max().unwrap() as usize + 1;
        assert!((10..=40).contains(&n), "count {n}");
    }
}
