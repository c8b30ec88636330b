use std::collections::VecDeque;

use super::{SegmentationMask, Volume3D};
use crate::components::label_2d;

/// Intensity separating air from tissue (about -524 HU after the +1024 shift).
pub const DEFAULT_AIR_THRESHOLD: i16 = 500;

/// Table removal: per axial slice keep the largest 4-connected component
/// above `air_threshold` and fill its holes.
pub fn body_mask(v: &Volume3D, air_threshold: i16) -> SegmentationMask {
    let [nx, ny, nz] = v.dims();
    let mut values = Vec::with_capacity(v.values().len());
    for z in 0..nz {
        values.extend(
            slice_body_mask(v.slice(z), nx, ny, air_threshold)
                .into_iter()
                .map(|b| b as u8),
        );
    }
    SegmentationMask::new(v.dims(), v.spacing(), values).expect("dims preserved")
}

pub fn slice_body_mask(
    slice: &[i16],
    width: usize,
    height: usize,
    air_threshold: i16,
) -> Vec<bool> {
    let fg: Vec<bool> = slice.iter().map(|&x| x > air_threshold).collect();
    let cc = label_2d(&fg, width, height);
    let Some(keep) = cc.largest() else {
        return vec![false; slice.len()];
    };
    let body: Vec<bool> = cc.labels.iter().map(|&l| l == keep).collect();
    fill_holes(&body, width, height)
}

/// Marks every pixel not reachable from the border through non-body pixels.
fn fill_holes(body: &[bool], width: usize, height: usize) -> Vec<bool> {
    let mut outside = vec![false; body.len()];
    let mut queue = VecDeque::new();
    let seed = |i: usize, outside: &mut Vec<bool>, queue: &mut VecDeque<usize>| {
        if !body[i] && !outside[i] {
            outside[i] = true;
            queue.push_back(i);
        }
    };
    for x in 0..width {
        seed(x, &mut outside, &mut queue);
        seed(x + (height - 1) * width, &mut outside, &mut queue);
    }
    for y in 0..height {
        seed(y * width, &mut outside, &mut queue);
        seed(width - 1 + y * width, &mut outside, &mut queue);
    }
    while let Some(i) = queue.pop_front() {
        let (x, y) = (i % width, i / width);
        let mut nb = [None; 4];
        if x > 0 {
            nb[0] = Some(i - 1);
        }
        if x + 1 < width {
            nb[1] = Some(i + 1);
        }
        if y > 0 {
            nb[2] = Some(i - width);
        }
        if y + 1 < height {
            nb[3] = Some(i + width);
        }
        for j in nb.into_iter().flatten() {
            if !body[j] && !outside[j] {
                outside[j] = true;
                queue.push_back(j);
            }
        }
    }
    outside.into_iter().map(|o| !o).collect()
}

/// Inclusive pixel bounding box on one slice.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct BBox2 {
    pub min_x: usize,
    pub min_y: usize,
    pub max_x: usize,
    pub max_y: usize,
}

impl BBox2 {
    pub fn width(&self) -> usize {
        self.max_x - self.min_x
    }

    pub fn height(&self) -> usize {
        self.max_y - self.min_y
    }
}

/// Bounding box of the body on slice `z`, `None` when the slice is empty.
pub fn body_bbox(body: &SegmentationMask, z: usize) -> Option<BBox2> {
    let [nx, _, _] = body.dims();
    let mut bb: Option<BBox2> = None;
    for (i, &v) in body.slice(z).iter().enumerate() {
        if v == 0 {
            continue;
        }
        let (x, y) = (i % nx, i / nx);
        bb = Some(match bb {
            None => BBox2 {
                min_x: x,
                min_y: y,
                max_x: x,
                max_y: y,
            },
            Some(b) => BBox2 {
                min_x: b.min_x.min(x),
                min_y: b.min_y.min(y),
                max_x: b.max_x.max(x),
                max_y: b.max_y.max(y),
            },
        });
    }
    bb
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::volume::Spacing;

    #[test]
    fn all_air_gives_empty_mask() {
        let v = Volume3D::zeros([8, 8, 2], Spacing::default()).unwrap();
        assert!(body_mask(&v, DEFAULT_AIR_THRESHOLD).is_empty());
    }

    #[test]
    fn bbox_of_empty_slice_is_none() {
        let m = SegmentationMask::empty([4, 4, 1], Spacing::default());
        assert_eq!(body_bbox(&m, 0), None);
    }

    fn slice_from(rows: &[&str]) -> (Vec<i16>, usize, usize) {
        let w = rows[0].len();
        let v = rows
            .iter()
            .flat_map(|r| r.bytes().map(|b| if b == b'#' { 1000 } else { 0 }))
            .collect();
        (v, w, rows.len())
    }

    fn render(m: &[bool], w: usize) -> Vec<String> {
        m.chunks(w)
            .map(|r| r.iter().map(|&b| if b { '#' } else { '.' }).collect())
            .collect()
    }

    #[test]
    fn table_blob_is_dropped() {
        let (s, w, h) = slice_from(&[
            "..........",
            ".#####....",
            ".#####....",
            ".#####....",
            ".#####....",
            ".#####....",
            "......###.",
            "......###.",
            "......###.",
            "..........",
        ]);
        let m = slice_body_mask(&s, w, h, DEFAULT_AIR_THRESHOLD);
        assert_eq!(
            render(&m, w),
            [
                "..........",
                ".#####....",
                ".#####....",
                ".#####....",
                ".#####....",
                ".#####....",
                "..........",
                "..........",
                "..........",
                "..........",
            ]
        );
    }

    #[test]
    fn interior_air_is_filled_but_open_notch_is_not() {
        let (s, w, h) = slice_from(&[
            "........", ".######.", ".#..#.#.", ".#..#.#.", ".####...", "........",
        ]);
        let m = slice_body_mask(&s, w, h, DEFAULT_AIR_THRESHOLD);
        assert_eq!(
            render(&m, w),
            ["........", ".######.", ".####.#.", ".####.#.", ".####...", "........"]
        );
    }

    #[test]
    fn diagonal_touch_does_not_connect() {
        let (s, w, h) = slice_from(&["###..", "###..", "###..", "...##", "...##"]);
        let m = slice_body_mask(&s, w, h, DEFAULT_AIR_THRESHOLD);
        assert_eq!(m.iter().filter(|&&b| b).count(), 9);
    }
}
