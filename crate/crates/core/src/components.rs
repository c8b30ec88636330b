//! Connected-component labeling on 2D slices and 3D voxel grids.

use std::collections::VecDeque;

/// Neighborhood used when growing 3D components.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Connectivity3 {
    Six,
    TwentySix,
}

impl Connectivity3 {
    pub fn from_count(n: u32) -> Option<Self> {
        match n {
            6 => Some(Connectivity3::Six),
            26 => Some(Connectivity3::TwentySix),
            _ => None,
        }
    }
}

/// Component labels (0 = background, components numbered from 1 in raster
/// order of their first pixel) plus the size of each component; `sizes[0]`
/// is unused and kept at 0.
#[derive(Clone, Debug)]
pub struct Components {
    pub labels: Vec<u32>,
    pub sizes: Vec<usize>,
}

impl Components {
    pub fn count(&self) -> usize {
        self.sizes.len() - 1
    }

    /// Label of the largest component; ties go to the lowest label, which is
    /// the component holding the lowest linear index.
    pub fn largest(&self) -> Option<u32> {
        let mut best: Option<(u32, usize)> = None;
        for (label, &size) in self.sizes.iter().enumerate().skip(1) {
            if best.is_none_or(|(_, s)| size > s) {
                best = Some((label as u32, size));
            }
        }
        best.map(|(l, _)| l)
    }
}

/// 4-connected labeling of a `width × height` raster.
pub fn label_2d(fg: &[bool], width: usize, height: usize) -> Components {
    assert_eq!(fg.len(), width * height);
    let mut labels = vec![0u32; fg.len()];
    let mut sizes = vec![0usize];
    let mut queue = VecDeque::new();
    for start in 0..fg.len() {
        if !fg[start] || labels[start] != 0 {
            continue;
        }
        let label = sizes.len() as u32;
        let mut size = 0;
        labels[start] = label;
        queue.push_back(start);
        while let Some(i) = queue.pop_front() {
            size += 1;
            let (x, y) = (i % width, i / width);
            let mut visit = |j: usize| {
                if fg[j] && labels[j] == 0 {
                    labels[j] = label;
                    queue.push_back(j);
                }
            };
            if x > 0 {
                visit(i - 1);
            }
            if x + 1 < width {
                visit(i + 1);
            }
            if y > 0 {
                visit(i - width);
            }
            if y + 1 < height {
                visit(i + width);
            }
        }
        sizes.push(size);
    }
    Components { labels, sizes }
}

/// 3D labeling of an x-fastest `dims` grid.
pub fn label_3d(fg: &[bool], dims: [usize; 3], conn: Connectivity3) -> Components {
    let [nx, ny, nz] = dims;
    assert_eq!(fg.len(), nx * ny * nz);
    let offsets: Vec<[i64; 3]> = match conn {
        Connectivity3::Six => vec![
            [-1, 0, 0],
            [1, 0, 0],
            [0, -1, 0],
            [0, 1, 0],
            [0, 0, -1],
            [0, 0, 1],
        ],
        Connectivity3::TwentySix => {
            let mut v = Vec::with_capacity(26);
            for dz in -1..=1 {
                for dy in -1..=1 {
                    for dx in -1..=1 {
                        if (dx, dy, dz) != (0, 0, 0) {
                            v.push([dx, dy, dz]);
                        }
                    }
                }
            }
            v
        }
    };
    let mut labels = vec![0u32; fg.len()];
    let mut sizes = vec![0usize];
    let mut queue = VecDeque::new();
    for start in 0..fg.len() {
        if !fg[start] || labels[start] != 0 {
            continue;
        }
        let label = sizes.len() as u32;
        let mut size = 0;
        labels[start] = label;
        queue.push_back(start);
        while let Some(i) = queue.pop_front() {
            size += 1;
            let x = (i % nx) as i64;
            let y = ((i / nx) % ny) as i64;
            let z = (i / (nx * ny)) as i64;
            for o in &offsets {
                let (qx, qy, qz) = (x + o[0], y + o[1], z + o[2]);
                if qx < 0
                    || qy < 0
                    || qz < 0
                    || qx >= nx as i64
                    || qy >= ny as i64
                    || qz >= nz as i64
                {
                    continue;
                }
                let j = qx as usize + nx * (qy as usize + ny * qz as usize);
                if fg[j] && labels[j] == 0 {
                    labels[j] = label;
                    queue.push_back(j);
                }
            }
        }
        sizes.push(size);
    }
    Components { labels, sizes }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_blobs_2d() {
        #[rustfmt::skip]
        let grid = [
            1, 1, 0, 0,
            1, 0, 0, 1,
            0, 0, 1, 1,
        ];
        let fg: Vec<bool> = grid.iter().map(|&v| v == 1).collect();
        let cc = label_2d(&fg, 4, 3);
        assert_eq!(cc.count(), 2);
        assert_eq!(cc.sizes[1], 3);
        assert_eq!(cc.sizes[2], 3);
        assert_eq!(cc.largest(), Some(1));
    }

    #[test]
    fn diagonal_touch_depends_on_connectivity() {
        let dims = [2, 2, 2];
        let mut fg = vec![false; 8];
        fg[0] = true;
        fg[7] = true;
        assert_eq!(label_3d(&fg, dims, Connectivity3::Six).count(), 2);
        assert_eq!(label_3d(&fg, dims, Connectivity3::TwentySix).count(), 1);
    }

    #[test]
    fn empty_has_no_largest() {
        let cc = label_2d(&[false; 4], 2, 2);
        assert_eq!(cc.largest(), None);
    }
}
