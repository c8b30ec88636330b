//! Per-slice superpixels: SLIC over-segmentation, ground-truth overlap
//! labeling, the oracle segmentation and boundary recall.

mod slic;

pub use slic::{
    enforce_connectivity, grid_interval, lattice_seeds, relabel_consecutive, slic_slice,
    INTENSITY_SCALE,
};

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::volume::io::{read_file, read_raw, write_atomic, write_raw, DType, RawHeader};
use crate::volume::{Dims, SegmentationMask, Spacing, Volume3D};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SuperpixelParams {
    /// Allowed per-slice superpixel count.
    pub k_min: usize,
    pub k_max: usize,
    /// Pixel area of one superpixel used to pick k before clamping.
    pub cell_area: f64,
    pub compactness: f64,
    pub iters: usize,
}

impl Default for SuperpixelParams {
    fn default() -> Self {
        SuperpixelParams {
            k_min: 100,
            k_max: 200,
            cell_area: 400.0,
            compactness: 10.0,
            iters: 10,
        }
    }
}

impl SuperpixelParams {
    pub fn validate(&self) -> Result<()> {
        if self.k_min == 0 || self.k_min > self.k_max {
            return Err(Error::Config {
                field: "superpixel.k_min".into(),
                msg: format!(
                    "need 1 <= k_min <= k_max, got [{}, {}]",
                    self.k_min, self.k_max
                ),
            });
        }
        if !(self.compactness > 0.0) {
            return Err(Error::Config {
                field: "superpixel.compactness".into(),
                msg: "must be positive".into(),
            });
        }
        if !(self.cell_area > 0.0) {
            return Err(Error::Config {
                field: "superpixel.cell_area".into(),
                msg: "must be positive".into(),
            });
        }
        Ok(())
    }

    /// Target k for a slice of `pixels` pixels.
    pub fn target_k(&self, pixels: usize) -> usize {
        let k = (pixels as f64 / self.cell_area).round() as usize;
        k.clamp(self.k_min, self.k_max).min(pixels)
    }
}

/// SLIC with the target k nudged until the final (post-connectivity) count
/// lands inside `[k_min, k_max]`. Gives up after a few attempts and returns
/// the closest result.
pub fn oversegment_slice(
    slice: &[i16],
    width: usize,
    height: usize,
    params: &SuperpixelParams,
) -> Result<Vec<u32>> {
    let pixels = width * height;
    let lo = params.k_min.min(pixels);
    let hi = params.k_max.min(pixels);
    let mut k = params.target_k(pixels);
    let mut best: Option<(usize, Vec<u32>)> = None;
    for _ in 0..8 {
        let labels = slic_slice(slice, width, height, k, params.compactness, params.iters)?;
        let count = labels.iter().max().map_or(0, |&m| m as usize + 1);
        let miss = if count < lo {
            lo - count
        } else {
            count.saturating_sub(hi)
        };
        if miss == 0 {
            return Ok(labels);
        }
        if best.as_ref().is_none_or(|(m, _)| miss < *m) {
            best = Some((miss, labels));
        }
        k = if count < lo {
            (k + miss).max(k + 1).min(pixels)
        } else {
            k.saturating_sub(miss).max(1)
        };
    }
    let (miss, labels) = best.expect("at least one attempt");
    log::warn!("superpixel count missed [{lo}, {hi}] by {miss}");
    Ok(labels)
}

/// Superpixel labels for a whole volume. Ids are global: slice `z` owns the
/// contiguous id range `offsets[z] .. offsets[z] + counts[z]`.
#[derive(Clone, Debug, PartialEq)]
pub struct SuperpixelMap {
    dims: Dims,
    spacing: Spacing,
    labels: Vec<u32>,
    counts: Vec<usize>,
    offsets: Vec<usize>,
}

impl SuperpixelMap {
    /// Assembles per-slice local labels (each numbered from 0 with no gaps).
    pub fn from_slices(dims: Dims, spacing: Spacing, slices: Vec<Vec<u32>>) -> Result<Self> {
        let [nx, ny, nz] = dims;
        if slices.len() != nz {
            return Err(Error::DimMismatch(format!(
                "{} slices for nz = {nz}",
                slices.len()
            )));
        }
        let mut labels = Vec::with_capacity(nx * ny * nz);
        let mut counts = Vec::with_capacity(nz);
        let mut offsets = Vec::with_capacity(nz);
        let mut offset = 0usize;
        for s in slices {
            if s.len() != nx * ny {
                return Err(Error::DimMismatch(format!("slice of {} labels", s.len())));
            }
            let k = s.iter().max().map_or(0, |&m| m as usize + 1);
            let mut used = vec![false; k];
            for &l in &s {
                used[l as usize] = true;
            }
            if used.iter().any(|u| !u) {
                return Err(Error::invalid("slice labels must be consecutive from 0"));
            }
            labels.extend(s.iter().map(|&l| (l as usize + offset) as u32));
            offsets.push(offset);
            counts.push(k);
            offset += k;
        }
        Ok(SuperpixelMap {
            dims,
            spacing,
            labels,
            counts,
            offsets,
        })
    }

    /// Validates a grid of global ids as produced by [`SuperpixelMap::labels`].
    pub fn from_global(dims: Dims, spacing: Spacing, labels: Vec<u32>) -> Result<Self> {
        let [nx, ny, nz] = dims;
        if labels.len() != nx * ny * nz {
            return Err(Error::DimMismatch("superpixel grid size".into()));
        }
        let mut slices = Vec::with_capacity(nz);
        let mut offset = 0u32;
        for z in 0..nz {
            let s = &labels[z * nx * ny..(z + 1) * nx * ny];
            let mut local = Vec::with_capacity(s.len());
            for &l in s {
                if l < offset {
                    return Err(Error::invalid(
                        "superpixel ids must increase slice by slice",
                    ));
                }
                local.push(l - offset);
            }
            let k = local.iter().max().map_or(0, |&m| m + 1);
            slices.push(local);
            offset += k;
        }
        Self::from_slices(dims, spacing, slices)
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn spacing(&self) -> Spacing {
        self.spacing
    }

    /// Global superpixel id per voxel.
    pub fn labels(&self) -> &[u32] {
        &self.labels
    }

    pub fn slice_labels(&self, z: usize) -> &[u32] {
        let n = self.dims[0] * self.dims[1];
        &self.labels[z * n..(z + 1) * n]
    }

    pub fn len(&self) -> usize {
        self.counts.iter().sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn slice_count(&self, z: usize) -> usize {
        self.counts[z]
    }

    pub fn slice_offset(&self, z: usize) -> usize {
        self.offsets[z]
    }

    pub fn slice_of(&self, id: usize) -> usize {
        match self.offsets.binary_search(&id) {
            Ok(mut z) => {
                // Skip empty slices sharing this offset.
                while self.counts[z] == 0 {
                    z += 1;
                }
                z
            }
            Err(z) => z - 1,
        }
    }

    /// Voxel indices of each superpixel, ascending.
    pub fn members(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.len()];
        for (i, &l) in self.labels.iter().enumerate() {
            out[l as usize].push(i);
        }
        out
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut out = vec![0; self.len()];
        for &l in &self.labels {
            out[l as usize] += 1;
        }
        out
    }

    /// Mask of the union of the superpixels whose flag is set.
    pub fn select(&self, keep: &[bool]) -> SegmentationMask {
        let values = self
            .labels
            .iter()
            .map(|&l| keep[l as usize] as u8)
            .collect();
        SegmentationMask::new(self.dims, self.spacing, values).expect("dims preserved")
    }
}

/// SLIC on every axial slice.
pub fn oversegment(v: &Volume3D, params: &SuperpixelParams) -> Result<SuperpixelMap> {
    params.validate()?;
    let [nx, ny, nz] = v.dims();
    let slices = (0..nz)
        .into_par_iter()
        .map(|z| oversegment_slice(v.slice(z), nx, ny, params))
        .collect::<Result<Vec<_>>>()?;
    SuperpixelMap::from_slices(v.dims(), v.spacing(), slices)
}

pub fn save_superpixels(sp: &SuperpixelMap, path: &Path) -> Result<()> {
    let mut header = RawHeader::new(sp.dims, sp.spacing, DType::I32);
    header.superpixel = Some(true);
    let payload: Vec<u8> = sp
        .labels
        .iter()
        .flat_map(|&l| (l as i32).to_le_bytes())
        .collect();
    write_raw(path, &header, &payload)
}

pub fn load_superpixels(path: &Path) -> Result<SuperpixelMap> {
    let (header, payload) = read_raw(path, DType::I32)?;
    if header.superpixel != Some(true) {
        return Err(Error::Header {
            path: path.to_path_buf(),
            msg: "missing \"superpixel\": true".into(),
        });
    }
    let mut labels = Vec::with_capacity(payload.len() / 4);
    for c in payload.chunks_exact(4) {
        let v = i32::from_le_bytes([c[0], c[1], c[2], c[3]]);
        if v < 0 {
            return Err(Error::invalid("negative superpixel id"));
        }
        labels.push(v as u32);
    }
    SuperpixelMap::from_global(header.dims, Spacing(header.spacing_mm), labels)
}

/// Fraction of each superpixel's voxels inside `gt`.
pub fn overlap_ratio(sp: &SuperpixelMap, gt: &SegmentationMask) -> Result<Vec<f64>> {
    gt.check_same_dims(sp.dims)?;
    let mut inside = vec![0usize; sp.len()];
    let mut size = vec![0usize; sp.len()];
    for (i, &l) in sp.labels.iter().enumerate() {
        size[l as usize] += 1;
        if gt.get_index(i) {
            inside[l as usize] += 1;
        }
    }
    Ok(inside
        .iter()
        .zip(&size)
        .map(|(&a, &n)| if n == 0 { 0.0 } else { a as f64 / n as f64 })
        .collect())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SpClass {
    Positive,
    Negative,
    Ambiguous,
}

/// Positive when `r >= tau_pos`, negative when `r <= tau_neg`, otherwise
/// ambiguous.
pub fn assign_labels(ratios: &[f64], tau_pos: f64, tau_neg: f64) -> Result<Vec<SpClass>> {
    if !(0.0 <= tau_neg && tau_neg < tau_pos && tau_pos <= 1.0) {
        return Err(Error::invalid(format!(
            "need 0 <= tau_neg < tau_pos <= 1, got tau_neg = {tau_neg}, tau_pos = {tau_pos}"
        )));
    }
    Ok(ratios
        .iter()
        .map(|&r| {
            if r >= tau_pos {
                SpClass::Positive
            } else if r <= tau_neg {
                SpClass::Negative
            } else {
                SpClass::Ambiguous
            }
        })
        .collect())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SuperpixelLabel {
    pub id: usize,
    pub slice: usize,
    pub r: f64,
    pub class: SpClass,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SuperpixelLabeling {
    pub entries: Vec<SuperpixelLabel>,
}

impl SuperpixelLabeling {
    pub fn build(
        sp: &SuperpixelMap,
        gt: &SegmentationMask,
        tau_pos: f64,
        tau_neg: f64,
    ) -> Result<Self> {
        let ratios = overlap_ratio(sp, gt)?;
        let classes = assign_labels(&ratios, tau_pos, tau_neg)?;
        let entries = ratios
            .into_iter()
            .zip(classes)
            .enumerate()
            .map(|(id, (r, class))| SuperpixelLabel {
                id,
                slice: sp.slice_of(id),
                r,
                class,
            })
            .collect();
        Ok(SuperpixelLabeling { entries })
    }

    pub fn classes(&self) -> Vec<SpClass> {
        self.entries.iter().map(|e| e.class).collect()
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(&self.entries)
            .map_err(|e| Error::Format(format!("labeling encode: {e}")))?;
        write_atomic(path, text.as_bytes())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = read_file(path)?;
        let entries = serde_json::from_slice(&bytes).map_err(|e| Error::Header {
            path: path.to_path_buf(),
            msg: e.to_string(),
        })?;
        Ok(SuperpixelLabeling { entries })
    }
}

/// Union of the superpixels with overlap ratio strictly above `tau`.
pub fn oracle_segmentation(
    sp: &SuperpixelMap,
    gt: &SegmentationMask,
    tau: f64,
) -> Result<SegmentationMask> {
    let ratios = overlap_ratio(sp, gt)?;
    let keep: Vec<bool> = ratios.iter().map(|&r| r > tau).collect();
    Ok(sp.select(&keep))
}

fn neighbors4(p: usize, w: usize, h: usize) -> impl Iterator<Item = usize> {
    let (x, y) = (p % w, p / w);
    [
        (x > 0).then(|| p - 1),
        (x + 1 < w).then(|| p + 1),
        (y > 0).then(|| p - w),
        (y + 1 < h).then(|| p + w),
    ]
    .into_iter()
    .flatten()
}

/// Pixels with a 4-neighbor carrying a different label.
pub fn superpixel_boundary(labels: &[u32], w: usize, h: usize) -> Vec<bool> {
    (0..labels.len())
        .map(|p| neighbors4(p, w, h).any(|q| labels[q] != labels[p]))
        .collect()
}

/// Foreground pixels with a 4-neighbor in the background (the slice border
/// counts as background).
pub fn mask_boundary_2d(fg: &[u8], w: usize, h: usize) -> Vec<bool> {
    (0..fg.len())
        .map(|p| {
            if fg[p] == 0 {
                return false;
            }
            let (x, y) = (p % w, p / w);
            x == 0 || y == 0 || x + 1 == w || y + 1 == h || neighbors4(p, w, h).any(|q| fg[q] == 0)
        })
        .collect()
}

/// Fraction of ground-truth boundary pixels within `distance_mm` (in-plane,
/// spacing-aware) of a superpixel boundary pixel, averaged over slices that
/// contain ground truth. Returns 1 when there is no ground-truth boundary.
pub fn boundary_recall(sp: &SuperpixelMap, gt: &SegmentationMask, distance_mm: f64) -> Result<f64> {
    gt.check_same_dims(sp.dims)?;
    if !(distance_mm >= 0.0) {
        return Err(Error::invalid("distance_mm must be non-negative"));
    }
    let [nx, ny, nz] = sp.dims;
    let [sx, sy, _] = sp.spacing.0;
    let rx = (distance_mm / sx).floor() as i64;
    let ry = (distance_mm / sy).floor() as i64;
    let d2 = distance_mm * distance_mm + 1e-9;
    let mut total = 0.0;
    let mut slices = 0usize;
    for z in 0..nz {
        let g = mask_boundary_2d(gt.slice(z), nx, ny);
        let n_gt = g.iter().filter(|&&b| b).count();
        if n_gt == 0 {
            continue;
        }
        let b = superpixel_boundary(sp.slice_labels(z), nx, ny);
        let mut hit = 0usize;
        for p in (0..g.len()).filter(|&p| g[p]) {
            let (x, y) = ((p % nx) as i64, (p / nx) as i64);
            let found = (-ry..=ry).any(|dy| {
                (-rx..=rx).any(|dx| {
                    let (qx, qy) = (x + dx, y + dy);
                    qx >= 0
                        && qy >= 0
                        && qx < nx as i64
                        && qy < ny as i64
                        && b[qx as usize + qy as usize * nx]
                        && (dx as f64 * sx).powi(2) + (dy as f64 * sy).powi(2) <= d2
                })
            });
            if found {
                hit += 1;
            }
        }
        total += hit as f64 / n_gt as f64;
        slices += 1;
    }
    Ok(if slices == 0 {
        1.0
    } else {
        total / slices as f64
    })
}
