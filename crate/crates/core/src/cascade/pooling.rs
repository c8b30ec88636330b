//! Per-superpixel distribution features: four moments and eight
//! nearest-rank percentiles of every channel.

use rayon::prelude::*;

use crate::densemap::ProbabilityVolume;
use crate::error::Result;
use crate::stats::{moments, percentile_nearest_rank};
use crate::superpixel::SuperpixelMap;
use crate::volume::Volume3D;

pub const PERCENTILES: [u32; 8] = [20, 30, 40, 50, 60, 70, 80, 90];
pub const STATS_PER_CHANNEL: usize = 4 + PERCENTILES.len();

/// Mean, std, skewness, kurtosis, then the 20th..90th percentiles.
pub fn channel_stats(values: &[f64]) -> [f64; STATS_PER_CHANNEL] {
    let mut out = [0.0; STATS_PER_CHANNEL];
    out[..4].copy_from_slice(&moments(values));
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    for (k, &p) in PERCENTILES.iter().enumerate() {
        out[4 + k] = percentile_nearest_rank(&sorted, p);
    }
    out
}

/// A per-voxel channel to pool.
#[derive(Clone, Copy, Debug)]
pub enum ChannelRef<'a> {
    Intensity(&'a Volume3D),
    Probability(&'a ProbabilityVolume),
}

impl ChannelRef<'_> {
    fn dims(&self) -> [usize; 3] {
        match self {
            ChannelRef::Intensity(v) => v.dims(),
            ChannelRef::Probability(p) => p.dims(),
        }
    }

    fn at(&self, i: usize) -> f64 {
        match self {
            ChannelRef::Intensity(v) => v.values()[i] as f64,
            ChannelRef::Probability(p) => p.values()[i] as f64,
        }
    }
}

/// One row of `12 · channels.len()` features per superpixel, channels in
/// the given order.
pub fn pool_features(sp: &SuperpixelMap, channels: &[ChannelRef<'_>]) -> Result<Vec<Vec<f32>>> {
    for c in channels {
        if c.dims() != sp.dims() {
            return Err(crate::Error::DimMismatch(format!(
                "channel dims {:?} vs superpixel dims {:?}",
                c.dims(),
                sp.dims()
            )));
        }
    }
    let members = sp.members();
    Ok(members
        .par_iter()
        .map(|voxels| {
            let mut row = Vec::with_capacity(STATS_PER_CHANNEL * channels.len());
            let mut buf = Vec::with_capacity(voxels.len());
            for c in channels {
                buf.clear();
                buf.extend(voxels.iter().map(|&i| c.at(i)));
                row.extend(channel_stats(&buf).iter().map(|&v| v as f32));
            }
            row
        })
        .collect())
}
