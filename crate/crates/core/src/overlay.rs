//! Static result images: a grayscale slice with ground-truth and predicted
//! mask contours drawn on top.

use std::path::{Path, PathBuf};

use image::{Rgb, RgbImage};

use crate::error::{Error, Result};
use crate::postmetrics::compute_metrics;
use crate::superpixel::mask_boundary_2d;
use crate::volume::io::write_atomic;
use crate::volume::{SegmentationMask, Volume3D};

pub const UPSCALE: u32 = 4;
pub const GT_COLOR: Rgb<u8> = Rgb([255, 255, 0]);
pub const PRED_COLOR: Rgb<u8> = Rgb([255, 0, 0]);

/// Which slices to render.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SliceSel {
    One(usize),
    All,
}

impl std::str::FromStr for SliceSel {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        if s == "all" {
            return Ok(SliceSel::All);
        }
        s.parse()
            .map(SliceSel::One)
            .map_err(|_| format!("expected a slice index or \"all\", got {s:?}"))
    }
}

/// Contour pixels of a mask slice: foreground pixels with a background
/// 4-neighbor or on the slice border.
pub fn contour(mask: &SegmentationMask, z: usize) -> Vec<bool> {
    let [nx, ny, _] = mask.dims();
    mask_boundary_2d(mask.slice(z), nx, ny)
}

/// Renders slice `z` at native resolution. Intensities map linearly from the
/// volume's range to 0..255; the prediction contour is drawn over the
/// ground-truth contour.
pub fn render_slice(
    v: &Volume3D,
    gt: Option<&SegmentationMask>,
    pred: Option<&SegmentationMask>,
    z: usize,
) -> Result<RgbImage> {
    let [nx, ny, nz] = v.dims();
    if z >= nz {
        return Err(Error::InvalidArgument(format!(
            "slice {z} out of range 0..{nz}"
        )));
    }
    for m in gt.iter().chain(pred.iter()) {
        m.check_same_dims(v.dims())?;
    }
    let lo = v.values().iter().copied().min().unwrap_or(0) as f64;
    let hi = v.values().iter().copied().max().unwrap_or(0) as f64;
    let scale = if hi > lo { 255.0 / (hi - lo) } else { 0.0 };
    let slice = v.slice(z);
    let mut img = RgbImage::new(nx as u32, ny as u32);
    for (p, &h) in slice.iter().enumerate() {
        let g = ((h as f64 - lo) * scale).round() as u8;
        img.put_pixel((p % nx) as u32, (p / nx) as u32, Rgb([g, g, g]));
    }
    for (mask, color) in [(gt, GT_COLOR), (pred, PRED_COLOR)] {
        if let Some(m) = mask {
            for (p, _) in contour(m, z).iter().enumerate().filter(|c| *c.1) {
                img.put_pixel((p % nx) as u32, (p / nx) as u32, color);
            }
        }
    }
    Ok(img)
}

/// Nearest-neighbor enlargement by an integer factor.
pub fn upscale(img: &RgbImage, factor: u32) -> RgbImage {
    RgbImage::from_fn(img.width() * factor, img.height() * factor, |x, y| {
        *img.get_pixel(x / factor, y / factor)
    })
}

/// Writes one PNG per selected slice into `out_dir`, named
/// `<stem>_z<slice>[_dice<value>].png` where the Dice of the slice is
/// included when both masks are given. Returns the written paths.
pub fn write_overlays(
    v: &Volume3D,
    gt: Option<&SegmentationMask>,
    pred: Option<&SegmentationMask>,
    sel: SliceSel,
    stem: &str,
    out_dir: &Path,
) -> Result<Vec<PathBuf>> {
    let nz = v.dims()[2];
    let slices: Vec<usize> = match sel {
        SliceSel::All => (0..nz).collect(),
        SliceSel::One(z) if z < nz => vec![z],
        SliceSel::One(z) => {
            return Err(Error::InvalidArgument(format!(
                "slice {z} out of range 0..{nz}"
            )))
        }
    };
    let mut written = Vec::with_capacity(slices.len());
    for z in slices {
        let img = upscale(&render_slice(v, gt, pred, z)?, UPSCALE);
        let mut name = format!("{stem}_z{z:03}");
        if let (Some(g), Some(p)) = (gt, pred) {
            let dice = compute_metrics(&slice_mask(p, z)?, &slice_mask(g, z)?)?.dice;
            name.push_str(&format!("_dice{dice:.4}"));
        }
        name.push_str(".png");
        let path = out_dir.join(name);
        let mut bytes = Vec::new();
        img.write_to(
            &mut std::io::Cursor::new(&mut bytes),
            image::ImageFormat::Png,
        )
        .map_err(|e| Error::Format(format!("png encoding: {e}")))?;
        write_atomic(&path, &bytes)?;
        written.push(path);
    }
    Ok(written)
}

fn slice_mask(m: &SegmentationMask, z: usize) -> Result<SegmentationMask> {
    let [nx, ny, _] = m.dims();
    SegmentationMask::new([nx, ny, 1], m.spacing(), m.slice(z).to_vec())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::volume::Spacing;

    fn setup() -> (Volume3D, SegmentationMask) {
        let dims = [12, 10, 2];
        let sp = Spacing([1.0, 1.0, 1.0]);
        let v = Volume3D::new(dims, sp, (0..240).map(|i| (i * 10) as i16).collect()).unwrap();
        let mut m = SegmentationMask::empty(dims, sp);
        for y in 2..7 {
            for x in 3..9 {
                m.set_index(x + 12 * y, true);
            }
        }
        (v, m)
    }

    #[test]
    fn contour_pixels_are_mask_boundary() {
        let (v, m) = setup();
        let img = render_slice(&v, Some(&m), None, 0).unwrap();
        let c = contour(&m, 0);
        assert_eq!(c.iter().filter(|&&b| b).count(), 2 * 6 + 2 * 3);
        for (p, &on) in c.iter().enumerate() {
            let yellow = *img.get_pixel((p % 12) as u32, (p / 12) as u32) == GT_COLOR;
            assert_eq!(yellow, on, "pixel {p}");
        }
    }

    #[test]
    fn identical_masks_share_contour() {
        let (v, m) = setup();
        let img = render_slice(&v, Some(&m), Some(&m), 0).unwrap();
        let c = contour(&m, 0);
        for (p, &on) in c.iter().enumerate() {
            let px = *img.get_pixel((p % 12) as u32, (p / 12) as u32);
            assert_eq!(px == PRED_COLOR, on);
            assert_ne!(px, GT_COLOR);
        }
    }

    #[test]
    fn empty_prediction_shows_only_ground_truth() {
        let (v, m) = setup();
        let empty = SegmentationMask::empty(v.dims(), v.spacing());
        let img = render_slice(&v, Some(&m), Some(&empty), 0).unwrap();
        assert!(img.pixels().all(|p| *p != PRED_COLOR));
        assert!(img.pixels().any(|p| *p == GT_COLOR));
    }

    #[test]
    fn upscale_is_nearest_neighbor() {
        let (v, m) = setup();
        let img = render_slice(&v, Some(&m), None, 1).unwrap();
        let big = upscale(&img, UPSCALE);
        assert_eq!((big.width(), big.height()), (48, 40));
        for y in 0..40 {
            for x in 0..48 {
                assert_eq!(big.get_pixel(x, y), img.get_pixel(x / 4, y / 4));
            }
        }
    }

    #[test]
    fn files_carry_dice_and_reject_bad_slice() {
        let (v, m) = setup();
        let dir = tempfile::tempdir().unwrap();
        let paths =
            write_overlays(&v, Some(&m), Some(&m), SliceSel::All, "case", dir.path()).unwrap();
        assert_eq!(paths.len(), 2);
        assert!(paths[0].ends_with("case_z000_dice1.0000.png"));
        let decoded = image::open(&paths[0]).unwrap();
        assert_eq!((decoded.width(), decoded.height()), (48, 40));
        assert!(write_overlays(&v, Some(&m), None, SliceSel::One(2), "case", dir.path()).is_err());
        assert_eq!("all".parse::<SliceSel>().unwrap(), SliceSel::All);
        assert_eq!("3".parse::<SliceSel>().unwrap(), SliceSel::One(3));
    }
}
