//! Dense probability maps: a classifier is evaluated on a strided grid and
//! every other permitted voxel copies the value of its nearest evaluated
//! point.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::cnn::{extract_25d_patch, ConvNet};
use crate::error::{Error, Result};
use crate::forest::ForestModel;
use crate::patchfeat::{extract_grid_descriptors, kde_response_map, KdeLookup, DESCRIPTOR_LEN};
use crate::superpixel::SuperpixelMap;
use crate::volume::io::{f32_from_payload, f32_payload, read_raw, write_raw, DType, RawHeader};
use crate::volume::{Dims, SegmentationMask, Spacing, Volume3D};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Provenance {
    #[serde(rename = "rf")]
    Rf,
    #[serde(rename = "cnn")]
    Cnn,
    #[serde(rename = "kde")]
    Kde,
}

impl Provenance {
    pub fn as_str(self) -> &'static str {
        match self {
            Provenance::Rf => "rf",
            Provenance::Cnn => "cnn",
            Provenance::Kde => "kde",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        match s {
            "rf" => Some(Provenance::Rf),
            "cnn" => Some(Provenance::Cnn),
            "kde" => Some(Provenance::Kde),
            _ => None,
        }
    }
}

/// Per-voxel probability in `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct ProbabilityVolume {
    dims: Dims,
    spacing: Spacing,
    values: Vec<f32>,
    provenance: Provenance,
}

impl ProbabilityVolume {
    pub fn new(
        dims: Dims,
        spacing: Spacing,
        values: Vec<f32>,
        provenance: Provenance,
    ) -> Result<Self> {
        spacing.validate()?;
        let n = dims[0] * dims[1] * dims[2];
        if values.len() != n {
            return Err(Error::DimMismatch(format!(
                "{} probabilities for dims {:?}",
                values.len(),
                dims
            )));
        }
        if let Some(bad) = values.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::Numeric(format!("probability {bad} outside [0, 1]")));
        }
        Ok(ProbabilityVolume {
            dims,
            spacing,
            values,
            provenance,
        })
    }

    pub fn zeros(dims: Dims, spacing: Spacing, provenance: Provenance) -> Self {
        ProbabilityVolume {
            dims,
            spacing,
            values: vec![0.0; dims[0] * dims[1] * dims[2]],
            provenance,
        }
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn spacing(&self) -> Spacing {
        self.spacing
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn provenance(&self) -> Provenance {
        self.provenance
    }

    pub fn slice(&self, z: usize) -> &[f32] {
        let n = self.dims[0] * self.dims[1];
        &self.values[z * n..(z + 1) * n]
    }

    pub fn check_dims(&self, other: Dims) -> Result<()> {
        if self.dims != other {
            return Err(Error::DimMismatch(format!(
                "probability map dims {:?} vs {:?}",
                self.dims, other
            )));
        }
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut header = RawHeader::new(self.dims, self.spacing, DType::F32);
        header.provenance = Some(self.provenance.as_str().to_string());
        write_raw(path, &header, &f32_payload(&self.values))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let (header, payload) = read_raw(path, DType::F32)?;
        let provenance = header
            .provenance
            .as_deref()
            .and_then(Provenance::parse)
            .ok_or_else(|| Error::Header {
                path: path.to_path_buf(),
                msg: "missing or unknown \"provenance\"".into(),
            })?;
        ProbabilityVolume::new(
            header.dims,
            Spacing(header.spacing_mm),
            f32_from_payload(&payload),
            provenance,
        )
    }
}

/// Fills every `region` voxel with the value of the nearest evaluated point
/// (squared Euclidean distance in voxel units; ties go to the lowest linear
/// index). Voxels outside `region` are 0. `planar` restricts the search to
/// the voxel's own slice.
///
/// The search visits Chebyshev shells of growing radius around each voxel and
/// stops once no unvisited shell can hold a point at least as close.
pub fn nearest_fill(
    dims: Dims,
    region: &[bool],
    evaluated: &[(usize, f32)],
    planar: bool,
) -> Vec<f32> {
    let [nx, ny, nz] = dims;
    let n = nx * ny * nz;
    let mut value_at: Vec<Option<f32>> = vec![None; n];
    for &(i, v) in evaluated {
        value_at[i] = Some(v);
    }
    let max_r = nx.max(ny).max(if planar { 1 } else { nz }) as i64;
    let mut out = vec![0.0f32; n];
    for (i, o) in out.iter_mut().enumerate() {
        if !region[i] {
            continue;
        }
        if let Some(v) = value_at[i] {
            *o = v;
            continue;
        }
        let (x, y, z) = (
            (i % nx) as i64,
            ((i / nx) % ny) as i64,
            (i / (nx * ny)) as i64,
        );
        let mut best: Option<(i64, usize, f32)> = None;
        for r in 1..=max_r {
            let rz = if planar { 0 } else { r };
            for dz in -rz..=rz {
                let zz = z + dz;
                if zz < 0 || zz >= nz as i64 {
                    continue;
                }
                for dy in -r..=r {
                    let yy = y + dy;
                    if yy < 0 || yy >= ny as i64 {
                        continue;
                    }
                    let on_shell = dz.abs() == r || dy.abs() == r;
                    let step = if on_shell { 1 } else { 2 * r as usize };
                    for dx in (-r..=r).step_by(step) {
                        let xx = x + dx;
                        if xx < 0 || xx >= nx as i64 {
                            continue;
                        }
                        let j = xx as usize + nx * (yy as usize + ny * zz as usize);
                        if let Some(v) = value_at[j] {
                            let d2 = dx * dx + dy * dy + dz * dz;
                            let better = match best {
                                None => true,
                                Some((bd, bj, _)) => d2 < bd || (d2 == bd && j < bj),
                            };
                            if better {
                                best = Some((d2, j, v));
                            }
                        }
                    }
                }
            }
            if let Some((bd, _, _)) = best {
                if bd < (r + 1) * (r + 1) {
                    break;
                }
            }
        }
        if let Some((_, _, v)) = best {
            *o = v;
        }
    }
    out
}

/// Random-forest patch labeling: descriptors on the in-body stride grid of
/// each slice, nearest fill within the slice's body region, 0 outside.
pub fn label_dense_rf(
    v: &Volume3D,
    body: &SegmentationMask,
    lut: &KdeLookup,
    sp: &SuperpixelMap,
    model: &ForestModel,
    stride: usize,
    patch_size: usize,
) -> Result<ProbabilityVolume> {
    if model.n_features() != DESCRIPTOR_LEN {
        return Err(Error::DimMismatch(format!(
            "patch model expects {} features, descriptors have {}",
            model.n_features(),
            DESCRIPTOR_LEN
        )));
    }
    let kde = kde_response_map(v, lut);
    let grid = extract_grid_descriptors(v, body, &kde, sp, stride, patch_size)?;
    let evaluated: Vec<(usize, f32)> = grid
        .iter()
        .map(|(i, d)| (*i, model.predict_unchecked(d.as_slice()) as f32))
        .collect();
    let values = nearest_fill(v.dims(), &body.to_bools(), &evaluated, true);
    ProbabilityVolume::new(v.dims(), v.spacing(), values, Provenance::Rf)
}

/// Voxels of `candidates` whose x, y and z are all multiples of `stride`. A
/// non-empty candidate set without any such voxel contributes its first
/// voxel so that the map is defined.
pub fn candidate_grid(candidates: &SegmentationMask, stride: usize) -> Vec<usize> {
    let [nx, ny, _] = candidates.dims();
    let s = stride.max(1);
    let mut out: Vec<usize> = (0..candidates.values().len())
        .filter(|&i| {
            candidates.get_index(i)
                && (i % nx) % s == 0
                && ((i / nx) % ny) % s == 0
                && (i / (nx * ny)) % s == 0
        })
        .collect();
    if out.is_empty() {
        if let Some(first) = (0..candidates.values().len()).find(|&i| candidates.get_index(i)) {
            out.push(first);
        }
    }
    out
}

/// Convolutional patch labeling restricted to `candidates`: 2.5D patches on
/// the 3D stride grid, nearest fill in 3D within the candidates, 0 elsewhere.
pub fn label_dense_cnn(
    v: &Volume3D,
    candidates: &SegmentationMask,
    model: &ConvNet,
    stride: usize,
) -> Result<ProbabilityVolume> {
    use rayon::prelude::*;
    candidates.check_same_dims(v.dims())?;
    let centers = candidate_grid(candidates, stride);
    let s = model.input_size();
    let evaluated: Vec<(usize, f32)> = centers
        .par_iter()
        .map(|&i| {
            let p = extract_25d_patch(v, i, s)?;
            Ok((i, model.predict(&p) as f32))
        })
        .collect::<Result<_>>()?;
    let values = nearest_fill(v.dims(), &candidates.to_bools(), &evaluated, false);
    ProbabilityVolume::new(v.dims(), v.spacing(), values, Provenance::Cnn)
}
