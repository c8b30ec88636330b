//! Two-stage superpixel cascade. Stage 1 scores every superpixel on
//! intensity and random-forest probability statistics and prunes those
//! below θ₁; stage 2 re-scores the survivors (on the RF channel for F-1, or
//! the CNN channel for F-2) and accepts those at or above θ₂.

mod pooling;

pub use pooling::{channel_stats, pool_features, ChannelRef, PERCENTILES, STATS_PER_CHANNEL};

use std::path::Path;

use log::warn;
use serde::{Deserialize, Serialize};

use crate::components::Connectivity3;
use crate::error::{Error, Result};
use crate::forest::{train_forest, FeatureMatrix, ForestConfig, ForestModel, Reader};
use crate::postmetrics::{compute_metrics, largest_cc};
use crate::superpixel::{SpClass, SuperpixelMap};
use crate::volume::io::{read_file, write_atomic};
use crate::volume::SegmentationMask;

const MAGIC: &[u8; 4] = b"CSCD";
const VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Framework {
    F1,
    F2,
}

impl Framework {
    pub fn tag(self) -> u8 {
        match self {
            Framework::F1 => 1,
            Framework::F2 => 2,
        }
    }

    fn from_tag(t: u8) -> Option<Self> {
        match t {
            1 => Some(Framework::F1),
            2 => Some(Framework::F2),
            _ => None,
        }
    }
}

impl std::str::FromStr for Framework {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "f1" => Ok(Framework::F1),
            "f2" => Ok(Framework::F2),
            other => Err(format!("unknown framework `{other}` (expected f1 or f2)")),
        }
    }
}

/// Per-voxel channel pooled into superpixel features.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Channel {
    Intensity,
    Rf,
    Cnn,
}

pub const STAGE1_CHANNELS: [Channel; 2] = [Channel::Intensity, Channel::Rf];

/// Stage-2 channels for a framework; `all_channels` selects the
/// three-channel variant for F-2.
pub fn stage2_channels(framework: Framework, all_channels: bool) -> Vec<Channel> {
    match (framework, all_channels) {
        (Framework::F1, _) => vec![Channel::Intensity, Channel::Rf],
        (Framework::F2, false) => vec![Channel::Intensity, Channel::Cnn],
        (Framework::F2, true) => vec![Channel::Intensity, Channel::Rf, Channel::Cnn],
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CascadeModel {
    pub framework: Framework,
    pub stage1: ForestModel,
    pub theta1: f64,
    pub stage2: ForestModel,
    pub stage2_channels: Vec<Channel>,
    pub theta2: f64,
}

#[derive(Serialize, Deserialize)]
struct CascadeHeader {
    theta1: f64,
    theta2: f64,
    stage1_channels: Vec<Channel>,
    stage2_channels: Vec<Channel>,
}

impl CascadeModel {
    pub fn validate(&self) -> Result<()> {
        for (name, t) in [("theta1", self.theta1), ("theta2", self.theta2)] {
            if !(0.0..=1.0).contains(&t) {
                return Err(Error::Format(format!("{name} = {t} outside [0, 1]")));
            }
        }
        let expect_all = self.stage2_channels.len() == 3;
        if self.stage2_channels != stage2_channels(self.framework, expect_all) {
            return Err(Error::Format(format!(
                "stage-2 channels {:?} do not match framework {:?}",
                self.stage2_channels, self.framework
            )));
        }
        if self.stage1.n_features() != STATS_PER_CHANNEL * STAGE1_CHANNELS.len()
            || self.stage2.n_features() != STATS_PER_CHANNEL * self.stage2_channels.len()
        {
            return Err(Error::Format(
                "stage forest width does not match its channels".into(),
            ));
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let header = serde_json::to_vec(&CascadeHeader {
            theta1: self.theta1,
            theta2: self.theta2,
            stage1_channels: STAGE1_CHANNELS.to_vec(),
            stage2_channels: self.stage2_channels.clone(),
        })
        .expect("cascade header serializes");
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.push(self.framework.tag());
        out.extend_from_slice(&(header.len() as u32).to_le_bytes());
        out.extend_from_slice(&header);
        for f in [&self.stage1, &self.stage2] {
            let b = f.to_bytes();
            out.extend_from_slice(&(b.len() as u32).to_le_bytes());
            out.extend_from_slice(&b);
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(4)? != MAGIC {
            return Err(Error::Format("not a cascade model (bad magic)".into()));
        }
        let version = r.u32()?;
        if version != VERSION {
            return Err(Error::Format(format!(
                "unsupported cascade version {version}"
            )));
        }
        let framework = Framework::from_tag(r.take(1)?[0])
            .ok_or_else(|| Error::Format("unknown framework tag".into()))?;
        let hlen = r.u32()? as usize;
        let header: CascadeHeader = serde_json::from_slice(r.take(hlen)?)
            .map_err(|e| Error::Format(format!("cascade header: {e}")))?;
        if header.stage1_channels != STAGE1_CHANNELS {
            return Err(Error::Format("unexpected stage-1 channels".into()));
        }
        let mut forests = Vec::with_capacity(2);
        for _ in 0..2 {
            let n = r.u32()? as usize;
            forests.push(ForestModel::from_bytes(r.take(n)?)?);
        }
        if r.pos != bytes.len() {
            return Err(Error::Format("trailing bytes after cascade".into()));
        }
        let stage2 = forests.pop().expect("two forests");
        let stage1 = forests.pop().expect("two forests");
        let m = CascadeModel {
            framework,
            stage1,
            theta1: header.theta1,
            stage2,
            stage2_channels: header.stage2_channels,
            theta2: header.theta2,
        };
        m.validate()?;
        Ok(m)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_atomic(path, &self.to_bytes())
    }

    pub fn load(path: &Path) -> Result<Self> {
        CascadeModel::from_bytes(&read_file(path)?)
    }
}

/// Rows of the labeled (non-ambiguous) superpixels.
pub fn labeled_matrix(features: &[Vec<f32>], classes: &[SpClass]) -> Result<FeatureMatrix> {
    let cols = features.first().map_or(1, |r| r.len());
    let mut m = FeatureMatrix::empty(cols);
    for (row, class) in features.iter().zip(classes) {
        match class {
            SpClass::Positive => m.push(row, true),
            SpClass::Negative => m.push(row, false),
            SpClass::Ambiguous => {}
        }
    }
    Ok(m)
}

/// Largest θ whose recall over `positive_scores` is at least
/// `recall_target`: the ⌈target·P⌉-th largest positive score. An
/// unattainable target yields 0.
pub fn select_theta1(positive_scores: &[f64], recall_target: f64) -> f64 {
    if positive_scores.is_empty() {
        return 0.0;
    }
    if recall_target > 1.0 {
        warn!("recall target {recall_target} is unattainable; stage 1 keeps everything");
        return 0.0;
    }
    let mut s = positive_scores.to_vec();
    s.sort_by(|a, b| b.total_cmp(a));
    let need = ((recall_target * s.len() as f64) - 1e-9).ceil().max(1.0) as usize;
    s[need.min(s.len()) - 1]
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Stage1Report {
    pub theta1: f64,
    pub positives: usize,
    pub negatives: usize,
    pub recall: f64,
    pub pruned_negative_fraction: f64,
}

/// Recall and negative pruning of threshold `theta` on labeled scores.
pub fn stage1_operating_point(scores: &[f64], labels: &[bool], theta: f64) -> Stage1Report {
    let (mut pos, mut neg, mut kept_pos, mut pruned_neg) = (0, 0, 0, 0);
    for (&s, &l) in scores.iter().zip(labels) {
        if l {
            pos += 1;
            kept_pos += (s >= theta) as usize;
        } else {
            neg += 1;
            pruned_neg += (s < theta) as usize;
        }
    }
    Stage1Report {
        theta1: theta,
        positives: pos,
        negatives: neg,
        recall: if pos == 0 {
            1.0
        } else {
            kept_pos as f64 / pos as f64
        },
        pruned_negative_fraction: if neg == 0 {
            1.0
        } else {
            pruned_neg as f64 / neg as f64
        },
    }
}

/// Trains C¹ on the labeled superpixels and picks θ₁ from its scores on
/// them (or on `calibration_scores` when supplied, e.g. out-of-fold scores
/// aligned with the matrix rows).
pub fn train_stage1(
    x: &FeatureMatrix,
    config: &ForestConfig,
    recall_target: f64,
    calibration_scores: Option<&[f64]>,
) -> Result<(ForestModel, Stage1Report)> {
    let model = train_forest(x, config)?;
    let own;
    let scores = match calibration_scores {
        Some(s) => s,
        None => {
            own = model.predict_matrix(x)?;
            &own
        }
    };
    let labels: Vec<bool> = (0..x.rows()).map(|i| x.label(i)).collect();
    let pos: Vec<f64> = scores
        .iter()
        .zip(&labels)
        .filter(|p| *p.1)
        .map(|p| *p.0)
        .collect();
    let theta = select_theta1(&pos, recall_target);
    Ok((model, stage1_operating_point(scores, &labels, theta)))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MiningReport {
    pub positives: usize,
    pub hard_negatives: usize,
    pub raw_negatives: usize,
    /// No negative reached θ₁; the top-scoring negatives were used instead.
    pub floor_used: bool,
}

/// Indices (into `scores`) of negatives scoring at least θ₁. When none do,
/// the highest-scoring negatives (as many as there are positives, ties by
/// lower index) form the set and the report is flagged.
pub fn mine_hard_negatives(
    scores: &[f64],
    classes: &[SpClass],
    theta1: f64,
) -> (Vec<usize>, MiningReport) {
    let negatives: Vec<usize> = (0..classes.len())
        .filter(|&i| classes[i] == SpClass::Negative)
        .collect();
    let positives = classes.iter().filter(|&&c| c == SpClass::Positive).count();
    let mut hard: Vec<usize> = negatives
        .iter()
        .copied()
        .filter(|&i| scores[i] >= theta1)
        .collect();
    let mut floor_used = false;
    if hard.is_empty() && !negatives.is_empty() {
        floor_used = true;
        let mut ranked = negatives.clone();
        ranked.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
        ranked.truncate(positives.max(1));
        ranked.sort_unstable();
        hard = ranked;
        warn!(
            "no negative superpixel passed stage 1; using the {} top-scoring negatives",
            hard.len()
        );
    }
    let report = MiningReport {
        positives,
        hard_negatives: hard.len(),
        raw_negatives: negatives.len(),
        floor_used,
    };
    (hard, report)
}

/// Stage-2 training rows: all positives plus the hard negatives.
pub fn stage2_matrix(
    features: &[Vec<f32>],
    classes: &[SpClass],
    hard: &[usize],
) -> Result<FeatureMatrix> {
    let cols = features.first().map_or(1, |r| r.len());
    let mut m = FeatureMatrix::empty(cols);
    let mut is_hard = vec![false; classes.len()];
    for &h in hard {
        is_hard[h] = true;
    }
    for (i, class) in classes.iter().enumerate() {
        if *class == SpClass::Positive {
            m.push(&features[i], true);
        } else if is_hard[i] {
            m.push(&features[i], false);
        }
    }
    Ok(m)
}

pub fn train_stage2(x: &FeatureMatrix, config: &ForestConfig) -> Result<ForestModel> {
    train_forest(x, config)
}

/// `start, start + step, …` up to `stop` inclusive.
pub fn threshold_grid(start: f64, stop: f64, step: f64) -> Result<Vec<f64>> {
    if !(step > 0.0) || !(0.0..=1.0).contains(&start) || !(start..=1.0).contains(&stop) {
        return Err(Error::Config {
            field: "cascade.theta_grid".into(),
            msg: format!("need 0 <= start <= stop <= 1 and step > 0, got {start}, {stop}, {step}"),
        });
    }
    let n = ((stop - start) / step + 1e-9).floor() as usize;
    Ok((0..=n).map(|i| start + i as f64 * step).collect())
}

/// Superpixels accepted by stage 2 at `theta2`, stacked and reduced to the
/// largest 26-connected component.
pub fn assemble_mask(
    sp: &SuperpixelMap,
    survivors: &[bool],
    stage2_scores: &[f64],
    theta2: f64,
) -> SegmentationMask {
    let keep: Vec<bool> = survivors
        .iter()
        .zip(stage2_scores)
        .map(|(&s, &p)| s && p >= theta2)
        .collect();
    largest_cc(&sp.select(&keep), Connectivity3::TwentySix)
}

/// One training volume as seen by the θ₂ search.
pub struct CalibrationCase<'a> {
    pub sp: &'a SuperpixelMap,
    pub gt: &'a SegmentationMask,
    pub survivors: &'a [bool],
    pub stage2_scores: &'a [f64],
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Calibration {
    pub theta2: f64,
    /// (θ, mean Dice) for every grid value.
    pub curve: Vec<(f64, f64)>,
}

/// θ₂ maximizing mean Dice over `cases`; ties go to the lowest θ.
pub fn calibrate_threshold(cases: &[CalibrationCase<'_>], grid: &[f64]) -> Result<Calibration> {
    if grid.is_empty() {
        return Err(Error::invalid("empty threshold grid"));
    }
    let mut curve = Vec::with_capacity(grid.len());
    let mut best = (grid[0], f64::NEG_INFINITY);
    for &theta in grid {
        let mut sum = 0.0;
        for c in cases {
            let mask = assemble_mask(c.sp, c.survivors, c.stage2_scores, theta);
            sum += compute_metrics(&mask, c.gt)?.dice;
        }
        let mean = if cases.is_empty() {
            0.0
        } else {
            sum / cases.len() as f64
        };
        curve.push((theta, mean));
        if mean > best.1 {
            best = (theta, mean);
        }
    }
    Ok(Calibration {
        theta2: best.0,
        curve,
    })
}
