//! The 46-value patch descriptor used by the random-forest patch labeler.
//!
//! Layout: 32 dSIFT bins, then (mean, median, std) of intensity over the
//! patch P, intensity over P′, KDE response over P, KDE response over P′,
//! then the relative (x, y) position inside the body's bounding box. P is
//! the square window around the center clamped to the slice; P′ is the part
//! of P inside the superpixel that owns the center pixel.

mod dsift;
mod kde;

pub use dsift::{bin_index, dsift, DEFAULT_BIN_SIZE, DSIFT_LEN, ORIENTATIONS};
pub use kde::{
    collect_kde_samples, fit_kde, kde_response_map, KdeLookup, DEFAULT_BANDWIDTH, TABLE_LEN,
};

use rayon::prelude::*;

use crate::densemap::ProbabilityVolume;
use crate::error::Result;
use crate::stats::mean_median_std;
use crate::superpixel::SuperpixelMap;
use crate::volume::{body_bbox, BBox2, SegmentationMask, Volume3D};

pub const DESCRIPTOR_LEN: usize = 46;
pub const DEFAULT_PATCH_SIZE: usize = 25;
pub const DEFAULT_PATCH_STRIDE: usize = 3;

/// Offsets of the feature groups inside a descriptor.
pub mod layout {
    pub const DSIFT: usize = 0;
    pub const INTENSITY_P: usize = 32;
    pub const INTENSITY_P_PRIME: usize = 35;
    pub const KDE_P: usize = 38;
    pub const KDE_P_PRIME: usize = 41;
    pub const POSITION: usize = 44;
}

#[derive(Clone, Debug, PartialEq)]
pub struct PatchDescriptor(pub [f32; DESCRIPTOR_LEN]);

impl PatchDescriptor {
    pub fn as_slice(&self) -> &[f32] {
        &self.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RelativePosition {
    pub x: f64,
    pub y: f64,
    /// The slice has no body; the position was set to (0.5, 0.5).
    pub body_missing: bool,
}

/// Center position normalized against the body's bounding box, clamped to
/// `[0, 1]`. A degenerate box side maps to 0.5.
pub fn relative_position(cx: usize, cy: usize, bbox: Option<&BBox2>) -> RelativePosition {
    let Some(b) = bbox else {
        return RelativePosition {
            x: 0.5,
            y: 0.5,
            body_missing: true,
        };
    };
    let norm = |c: usize, lo: usize, span: usize| {
        if span == 0 {
            0.5
        } else {
            ((c as f64 - lo as f64) / span as f64).clamp(0.0, 1.0)
        }
    };
    RelativePosition {
        x: norm(cx, b.min_x, b.width()),
        y: norm(cy, b.min_y, b.height()),
        body_missing: false,
    }
}

/// One axial slice with everything a descriptor reads.
#[derive(Clone, Copy, Debug)]
pub struct SliceView<'a> {
    pub intensity: &'a [i16],
    pub kde: &'a [f32],
    pub superpixels: &'a [u32],
    pub width: usize,
    pub height: usize,
    pub body_bbox: Option<BBox2>,
}

impl<'a> SliceView<'a> {
    pub fn of(
        v: &'a Volume3D,
        kde: &'a ProbabilityVolume,
        sp: &'a SuperpixelMap,
        body: &SegmentationMask,
        z: usize,
    ) -> Self {
        let [nx, ny, _] = v.dims();
        SliceView {
            intensity: v.slice(z),
            kde: kde.slice(z),
            superpixels: sp.slice_labels(z),
            width: nx,
            height: ny,
            body_bbox: body_bbox(body, z),
        }
    }
}

/// Descriptor of the `patch_size` window centered on (cx, cy).
pub fn patch_descriptor(
    view: &SliceView<'_>,
    cx: usize,
    cy: usize,
    patch_size: usize,
) -> PatchDescriptor {
    let (w, h) = (view.width, view.height);
    let mut out = [0.0f32; DESCRIPTOR_LEN];
    out[..DSIFT_LEN].copy_from_slice(&dsift(view.intensity, w, h, cx, cy, DEFAULT_BIN_SIZE));

    let half = patch_size / 2;
    let x0 = cx.saturating_sub(half);
    let x1 = (cx + half).min(w - 1);
    let y0 = cy.saturating_sub(half);
    let y1 = (cy + half).min(h - 1);
    let own = view.superpixels[cx + cy * w];
    let cap = (x1 - x0 + 1) * (y1 - y0 + 1);
    let (mut ip, mut ipp, mut kp, mut kpp) = (
        Vec::with_capacity(cap),
        Vec::with_capacity(cap),
        Vec::with_capacity(cap),
        Vec::with_capacity(cap),
    );
    for y in y0..=y1 {
        for x in x0..=x1 {
            let p = x + y * w;
            let i = view.intensity[p] as f64;
            let k = view.kde[p] as f64;
            ip.push(i);
            kp.push(k);
            if view.superpixels[p] == own {
                ipp.push(i);
                kpp.push(k);
            }
        }
    }
    let groups = [
        (layout::INTENSITY_P, &ip),
        (layout::INTENSITY_P_PRIME, &ipp),
        (layout::KDE_P, &kp),
        (layout::KDE_P_PRIME, &kpp),
    ];
    for (at, values) in groups {
        for (j, s) in mean_median_std(values).into_iter().enumerate() {
            out[at + j] = s as f32;
        }
    }
    let pos = relative_position(cx, cy, view.body_bbox.as_ref());
    out[layout::POSITION] = pos.x as f32;
    out[layout::POSITION + 1] = pos.y as f32;
    PatchDescriptor(out)
}

/// In-body pixels of slice `z` whose x and y are multiples of `stride`.
pub fn grid_centers(body: &SegmentationMask, z: usize, stride: usize) -> Vec<(usize, usize)> {
    let [nx, ny, _] = body.dims();
    let s = body.slice(z);
    let stride = stride.max(1);
    let mut out = Vec::new();
    for y in (0..ny).step_by(stride) {
        for x in (0..nx).step_by(stride) {
            if s[x + y * nx] != 0 {
                out.push((x, y));
            }
        }
    }
    out
}

/// Descriptors on the dense grid of every slice. Each center is reported as
/// a linear voxel index alongside its descriptor.
pub fn extract_grid_descriptors(
    v: &Volume3D,
    body: &SegmentationMask,
    kde: &ProbabilityVolume,
    sp: &SuperpixelMap,
    stride: usize,
    patch_size: usize,
) -> Result<Vec<(usize, PatchDescriptor)>> {
    body.check_same_dims(v.dims())?;
    kde.check_dims(v.dims())?;
    body.check_same_dims(sp.dims())?;
    let [nx, ny, nz] = v.dims();
    let per_slice: Vec<Vec<(usize, PatchDescriptor)>> = (0..nz)
        .into_par_iter()
        .map(|z| {
            let view = SliceView::of(v, kde, sp, body, z);
            grid_centers(body, z, stride)
                .into_iter()
                .map(|(x, y)| {
                    (
                        x + nx * (y + ny * z),
                        patch_descriptor(&view, x, y, patch_size),
                    )
                })
                .collect()
        })
        .collect();
    Ok(per_slice.into_iter().flatten().collect())
}
