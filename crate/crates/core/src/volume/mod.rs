//! Volume and mask data model, raw file I/O, body extraction and synthetic
//! phantoms.
//!
//! Voxels are stored x-fastest: index = x + nx·(y + ny·z). Axial slices are
//! contiguous runs of `nx·ny` voxels.

mod body;
pub mod io;
mod phantom;

pub use body::{body_bbox, body_mask, slice_body_mask, BBox2, DEFAULT_AIR_THRESHOLD};
pub use io::{
    load_mask, load_volume, load_volume_with_report, save_mask, save_volume, DType, LoadReport,
    RawHeader,
};
pub use phantom::{generate_phantom, PhantomSpec};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Upper bound of the intensity domain; values live in `[0, MAX_INTENSITY]`.
pub const MAX_INTENSITY: i16 = 4095;

/// Shift applied to Hounsfield units on ingest so air (-1024 HU) maps to 0.
pub const HU_OFFSET: i32 = 1024;

pub type Dims = [usize; 3];

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Spacing(pub [f64; 3]);

impl Default for Spacing {
    fn default() -> Self {
        Spacing([1.0, 1.0, 1.0])
    }
}

impl Spacing {
    pub fn validate(&self) -> Result<()> {
        if self.0.iter().all(|s| s.is_finite() && *s > 0.0) {
            Ok(())
        } else {
            Err(Error::invalid(format!(
                "spacing must be positive, got {:?}",
                self.0
            )))
        }
    }
}

pub(crate) fn voxel_count(dims: Dims) -> usize {
    dims[0] * dims[1] * dims[2]
}

fn check_dims(dims: Dims) -> Result<()> {
    if dims.contains(&0) {
        return Err(Error::invalid(format!(
            "dims must be positive, got {dims:?}"
        )));
    }
    Ok(())
}

/// Grayscale scan on the rescaled `[0, 4095]` intensity domain.
#[derive(Clone, Debug, PartialEq)]
pub struct Volume3D {
    dims: Dims,
    spacing: Spacing,
    values: Vec<i16>,
}

impl Volume3D {
    pub fn new(dims: Dims, spacing: Spacing, values: Vec<i16>) -> Result<Self> {
        check_dims(dims)?;
        spacing.validate()?;
        if values.len() != voxel_count(dims) {
            return Err(Error::DimMismatch(format!(
                "{} values for dims {dims:?}",
                values.len()
            )));
        }
        if let Some(v) = values.iter().find(|v| !(0..=MAX_INTENSITY).contains(*v)) {
            return Err(Error::invalid(format!("intensity {v} outside [0, 4095]")));
        }
        Ok(Volume3D {
            dims,
            spacing,
            values,
        })
    }

    /// Builds a volume from raw values, clamping into the intensity domain.
    /// Returns the volume and the number of clamped voxels.
    pub fn from_clamped(dims: Dims, spacing: Spacing, raw: &[i32]) -> Result<(Self, usize)> {
        let mut clamped = 0;
        let values = raw
            .iter()
            .map(|&v| {
                let c = v.clamp(0, MAX_INTENSITY as i32);
                if c != v {
                    clamped += 1;
                }
                c as i16
            })
            .collect();
        Ok((Volume3D::new(dims, spacing, values)?, clamped))
    }

    /// Ingests Hounsfield units, shifting by +1024 and clamping.
    pub fn from_hounsfield(dims: Dims, spacing: Spacing, hu: &[i32]) -> Result<(Self, usize)> {
        let shifted: Vec<i32> = hu.iter().map(|v| v + HU_OFFSET).collect();
        Self::from_clamped(dims, spacing, &shifted)
    }

    pub fn zeros(dims: Dims, spacing: Spacing) -> Result<Self> {
        Volume3D::new(dims, spacing, vec![0; voxel_count(dims)])
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn spacing(&self) -> Spacing {
        self.spacing
    }

    pub fn values(&self) -> &[i16] {
        &self.values
    }

    pub fn slice_len(&self) -> usize {
        self.dims[0] * self.dims[1]
    }

    pub fn slice(&self, z: usize) -> &[i16] {
        let n = self.slice_len();
        &self.values[z * n..(z + 1) * n]
    }

    #[inline]
    pub fn index(&self, x: usize, y: usize, z: usize) -> usize {
        x + self.dims[0] * (y + self.dims[1] * z)
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, z: usize) -> i16 {
        self.values[self.index(x, y, z)]
    }
}

/// Binary voxel mask. Used for ground truth, body regions and pipeline output.
#[derive(Clone, Debug, PartialEq)]
pub struct SegmentationMask {
    dims: Dims,
    spacing: Spacing,
    values: Vec<u8>,
}

impl SegmentationMask {
    pub fn new(dims: Dims, spacing: Spacing, values: Vec<u8>) -> Result<Self> {
        check_dims(dims)?;
        spacing.validate()?;
        if values.len() != voxel_count(dims) {
            return Err(Error::DimMismatch(format!(
                "{} mask values for dims {dims:?}",
                values.len()
            )));
        }
        if values.iter().any(|&v| v > 1) {
            return Err(Error::invalid("mask values must be 0 or 1"));
        }
        Ok(SegmentationMask {
            dims,
            spacing,
            values,
        })
    }

    pub fn empty(dims: Dims, spacing: Spacing) -> Self {
        SegmentationMask {
            dims,
            spacing,
            values: vec![0; voxel_count(dims)],
        }
    }

    pub fn full(dims: Dims, spacing: Spacing) -> Self {
        SegmentationMask {
            dims,
            spacing,
            values: vec![1; voxel_count(dims)],
        }
    }

    pub fn from_bools(dims: Dims, spacing: Spacing, fg: &[bool]) -> Result<Self> {
        Self::new(dims, spacing, fg.iter().map(|&b| b as u8).collect())
    }

    pub fn like(v: &Volume3D) -> Self {
        Self::empty(v.dims(), v.spacing())
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn spacing(&self) -> Spacing {
        self.spacing
    }

    pub fn values(&self) -> &[u8] {
        &self.values
    }

    pub fn slice(&self, z: usize) -> &[u8] {
        let n = self.dims[0] * self.dims[1];
        &self.values[z * n..(z + 1) * n]
    }

    #[inline]
    pub fn get_index(&self, i: usize) -> bool {
        self.values[i] != 0
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, z: usize) -> bool {
        self.values[x + self.dims[0] * (y + self.dims[1] * z)] != 0
    }

    #[inline]
    pub fn set_index(&mut self, i: usize, on: bool) {
        self.values[i] = on as u8;
    }

    pub fn count(&self) -> usize {
        self.values.iter().filter(|&&v| v != 0).count()
    }

    pub fn is_empty(&self) -> bool {
        self.values.iter().all(|&v| v == 0)
    }

    pub fn to_bools(&self) -> Vec<bool> {
        self.values.iter().map(|&v| v != 0).collect()
    }

    pub fn check_same_dims(&self, other: Dims) -> Result<()> {
        if self.dims != other {
            return Err(Error::DimMismatch(format!(
                "mask dims {:?} vs {:?}",
                self.dims, other
            )));
        }
        Ok(())
    }
}
