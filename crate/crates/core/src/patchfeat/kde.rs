//! Class-conditional intensity densities turned into a per-intensity
//! foreground probability table.

use std::path::Path;

use rand::seq::index::sample;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::densemap::{ProbabilityVolume, Provenance};
use crate::error::{Error, Result};
use crate::volume::io::{read_file, write_atomic};
use crate::volume::{SegmentationMask, Volume3D, MAX_INTENSITY};

pub const DEFAULT_BANDWIDTH: f64 = 3.039;
pub const TABLE_LEN: usize = MAX_INTENSITY as usize + 1;

/// y⁺(h) = f⁺(h) / (f⁺(h) + f⁻(h)) for every integer intensity h, where f⁺
/// and f⁻ are Gaussian kernel density estimates of the positive and negative
/// samples.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KdeLookup {
    pub bandwidth: f64,
    pub n_pos: usize,
    pub n_neg: usize,
    table: Vec<f64>,
}

fn histogram(samples: &[i16]) -> Result<Vec<(f64, f64)>> {
    let mut counts = vec![0usize; TABLE_LEN];
    for &s in samples {
        if !(0..=MAX_INTENSITY).contains(&s) {
            return Err(Error::invalid(format!(
                "sample intensity {s} outside [0, 4095]"
            )));
        }
        counts[s as usize] += 1;
    }
    Ok(counts
        .into_iter()
        .enumerate()
        .filter(|(_, c)| *c > 0)
        .map(|(v, c)| (v as f64, (c as f64).ln()))
        .collect())
}

/// ln f(h) for a histogram of (value, ln count) pairs.
fn log_density(hist: &[(f64, f64)], n: usize, h: f64, bandwidth: f64) -> f64 {
    let inv = 1.0 / (2.0 * bandwidth * bandwidth);
    let max = hist
        .iter()
        .map(|&(v, lc)| lc - (h - v) * (h - v) * inv)
        .fold(f64::NEG_INFINITY, f64::max);
    let sum: f64 = hist
        .iter()
        .map(|&(v, lc)| (lc - (h - v) * (h - v) * inv - max).exp())
        .sum();
    let norm = (bandwidth * (2.0 * std::f64::consts::PI).sqrt()).ln();
    max + sum.ln() - (n as f64).ln() - norm
}

/// Builds the lookup table. Densities are combined in log space so the ratio
/// stays defined far from every sample.
pub fn fit_kde(pos: &[i16], neg: &[i16], bandwidth: f64) -> Result<KdeLookup> {
    if pos.is_empty() || neg.is_empty() {
        return Err(Error::SingleClass {
            positives: pos.len(),
            negatives: neg.len(),
        });
    }
    if !(bandwidth > 0.0 && bandwidth.is_finite()) {
        return Err(Error::invalid(format!(
            "bandwidth must be positive, got {bandwidth}"
        )));
    }
    let hp = histogram(pos)?;
    let hn = histogram(neg)?;
    let table = (0..TABLE_LEN)
        .map(|h| {
            let lp = log_density(&hp, pos.len(), h as f64, bandwidth);
            let ln = log_density(&hn, neg.len(), h as f64, bandwidth);
            1.0 / (1.0 + (ln - lp).exp())
        })
        .collect();
    Ok(KdeLookup {
        bandwidth,
        n_pos: pos.len(),
        n_neg: neg.len(),
        table,
    })
}

impl KdeLookup {
    #[inline]
    pub fn lookup(&self, h: i16) -> f64 {
        self.table[h.clamp(0, MAX_INTENSITY) as usize]
    }

    pub fn table(&self) -> &[f64] {
        &self.table
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_vec(self).map_err(|e| Error::Format(e.to_string()))?;
        write_atomic(path, &text)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let lut: KdeLookup =
            serde_json::from_slice(&read_file(path)?).map_err(|e| Error::Header {
                path: path.to_path_buf(),
                msg: e.to_string(),
            })?;
        if lut.table.len() != TABLE_LEN || lut.table.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::Format(
                "kde table must hold 4096 entries in [0, 1]".into(),
            ));
        }
        Ok(lut)
    }
}

/// Per-voxel table lookup.
pub fn kde_response_map(v: &Volume3D, lut: &KdeLookup) -> ProbabilityVolume {
    let values = v.values().iter().map(|&h| lut.lookup(h) as f32).collect();
    ProbabilityVolume::new(v.dims(), v.spacing(), values, Provenance::Kde)
        .expect("table entries in [0, 1]")
}

/// All target voxels as positives and a `neg_fraction` random subsample of
/// the remaining voxels as negatives, appended to the given buffers.
pub fn collect_kde_samples<R: Rng>(
    v: &Volume3D,
    gt: &SegmentationMask,
    neg_fraction: f64,
    rng: &mut R,
    pos: &mut Vec<i16>,
    neg: &mut Vec<i16>,
) -> Result<()> {
    gt.check_same_dims(v.dims())?;
    let mut negatives = Vec::new();
    for (i, &h) in v.values().iter().enumerate() {
        if gt.get_index(i) {
            pos.push(h);
        } else {
            negatives.push(h);
        }
    }
    let take = ((negatives.len() as f64) * neg_fraction).round() as usize;
    let mut idx = sample(rng, negatives.len(), take.min(negatives.len())).into_vec();
    idx.sort_unstable();
    neg.extend(idx.into_iter().map(|i| negatives[i]));
    Ok(())
}
