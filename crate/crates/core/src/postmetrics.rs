//! Largest-component post-processing and overlap metrics.

use serde::{Deserialize, Serialize};

use crate::components::{label_3d, Connectivity3};
use crate::error::{Error, Result};
use crate::volume::{SegmentationMask, Spacing};

/// Keeps the largest connected component; ties go to the component holding
/// the lowest linear index.
pub fn largest_cc(mask: &SegmentationMask, conn: Connectivity3) -> SegmentationMask {
    let cc = label_3d(&mask.to_bools(), mask.dims(), conn);
    match cc.largest() {
        None => SegmentationMask::empty(mask.dims(), mask.spacing()),
        Some(keep) => {
            let fg: Vec<bool> = cc.labels.iter().map(|&l| l == keep).collect();
            SegmentationMask::from_bools(mask.dims(), mask.spacing(), &fg).expect("dims preserved")
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct VolumeMetrics {
    pub dice: f64,
    pub jaccard: f64,
    pub precision: f64,
    pub recall: f64,
    /// Set when the prediction is empty but the ground truth is not.
    pub empty_prediction: bool,
}

/// Dice, Jaccard, precision and recall of `pred` (A) against `gt` (B).
///
/// Both empty scores 1 everywhere. An empty prediction against non-empty
/// ground truth scores 0 except precision, which is 1, and is flagged.
pub fn compute_metrics(pred: &SegmentationMask, gt: &SegmentationMask) -> Result<VolumeMetrics> {
    gt.check_same_dims(pred.dims())?;
    let (mut a, mut b, mut both) = (0usize, 0usize, 0usize);
    for (&p, &g) in pred.values().iter().zip(gt.values()) {
        let (p, g) = (p != 0, g != 0);
        a += p as usize;
        b += g as usize;
        both += (p && g) as usize;
    }
    let union = a + b - both;
    let ratio = |num: usize, den: usize| {
        if den == 0 {
            1.0
        } else {
            num as f64 / den as f64
        }
    };
    Ok(VolumeMetrics {
        dice: ratio(2 * both, a + b),
        jaccard: ratio(both, union),
        precision: ratio(both, a),
        recall: ratio(both, b),
        empty_prediction: a == 0 && b > 0,
    })
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub mean: f64,
    pub std: f64,
    pub min: f64,
    pub max: f64,
}

impl Aggregate {
    /// Population statistics; all zero for an empty input.
    pub fn of(values: &[f64]) -> Self {
        if values.is_empty() {
            return Aggregate::default();
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        Aggregate {
            mean,
            std: var.sqrt(),
            min: values.iter().cloned().fold(f64::INFINITY, f64::min),
            max: values.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fold: Option<usize>,
    #[serde(flatten)]
    pub metrics: VolumeMetrics,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Aggregates {
    pub dice: Aggregate,
    pub jaccard: Aggregate,
    pub precision: Aggregate,
    pub recall: Aggregate,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub volumes: Vec<MetricsRow>,
    pub aggregate: Aggregates,
}

impl MetricsReport {
    pub fn new(volumes: Vec<MetricsRow>) -> Self {
        let col = |f: fn(&VolumeMetrics) -> f64| -> Vec<f64> {
            volumes.iter().map(|r| f(&r.metrics)).collect()
        };
        let aggregate = Aggregates {
            dice: Aggregate::of(&col(|m| m.dice)),
            jaccard: Aggregate::of(&col(|m| m.jaccard)),
            precision: Aggregate::of(&col(|m| m.precision)),
            recall: Aggregate::of(&col(|m| m.recall)),
        };
        MetricsReport { volumes, aggregate }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("id,fold,dice,jaccard,precision,recall,empty_prediction\n");
        for r in &self.volumes {
            let m = &r.metrics;
            out.push_str(&format!(
                "{},{},{},{},{},{},{}\n",
                r.id,
                r.fold.map(|f| f.to_string()).unwrap_or_default(),
                m.dice,
                m.jaccard,
                m.precision,
                m.recall,
                m.empty_prediction
            ));
        }
        out
    }
}

/// Mask voxels with at least one 6-neighbor outside the mask (the grid edge
/// counts as outside).
pub fn boundary_voxels(mask: &SegmentationMask) -> Vec<usize> {
    let [nx, ny, nz] = mask.dims();
    let mut out = Vec::new();
    for z in 0..nz {
        for y in 0..ny {
            for x in 0..nx {
                if !mask.get(x, y, z) {
                    continue;
                }
                let edge = x == 0 || y == 0 || z == 0 || x + 1 == nx || y + 1 == ny || z + 1 == nz;
                if edge
                    || !mask.get(x - 1, y, z)
                    || !mask.get(x + 1, y, z)
                    || !mask.get(x, y - 1, z)
                    || !mask.get(x, y + 1, z)
                    || !mask.get(x, y, z - 1)
                    || !mask.get(x, y, z + 1)
                {
                    out.push(x + nx * (y + ny * z));
                }
            }
        }
    }
    out
}

/// For every ground-truth boundary voxel, the exact Euclidean distance in mm
/// to the nearest prediction boundary voxel.
pub fn surface_distance_map(
    pred: &SegmentationMask,
    gt: &SegmentationMask,
    spacing: Spacing,
) -> Result<Vec<(usize, f64)>> {
    gt.check_same_dims(pred.dims())?;
    spacing.validate()?;
    if pred.is_empty() || gt.is_empty() {
        return Err(Error::invalid("surface distance needs two non-empty masks"));
    }
    let [nx, ny, _] = gt.dims();
    let coords = |i: usize| -> [f64; 3] {
        [
            (i % nx) as f64 * spacing.0[0],
            ((i / nx) % ny) as f64 * spacing.0[1],
            (i / (nx * ny)) as f64 * spacing.0[2],
        ]
    };
    let pred_pts: Vec<[f64; 3]> = boundary_voxels(pred).into_iter().map(coords).collect();
    Ok(boundary_voxels(gt)
        .into_iter()
        .map(|i| {
            let p = coords(i);
            let d2 = pred_pts
                .iter()
                .map(|q| (p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2) + (p[2] - q[2]).powi(2))
                .fold(f64::INFINITY, f64::min);
            (i, d2.sqrt())
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mask(dims: [usize; 3], on: &[usize]) -> SegmentationMask {
        let mut m = SegmentationMask::empty(dims, Spacing::default());
        for &i in on {
            m.set_index(i, true);
        }
        m
    }

    #[test]
    fn identical_masks_score_one() {
        let m = mask([4, 4, 1], &[1, 2, 5]);
        let r = compute_metrics(&m, &m).unwrap();
        assert_eq!(
            (r.dice, r.jaccard, r.precision, r.recall),
            (1.0, 1.0, 1.0, 1.0)
        );
    }

    #[test]
    fn disjoint_masks_score_zero() {
        let r = compute_metrics(&mask([4, 1, 1], &[0]), &mask([4, 1, 1], &[3])).unwrap();
        assert_eq!((r.dice, r.jaccard), (0.0, 0.0));
    }

    #[test]
    fn half_overlap_counts() {
        let a: Vec<usize> = (0..100).collect();
        let b: Vec<usize> = (50..150).collect();
        let r = compute_metrics(&mask([200, 1, 1], &a), &mask([200, 1, 1], &b)).unwrap();
        assert_eq!(r.dice, 0.5);
        assert_eq!(r.jaccard, 1.0 / 3.0);
        assert_eq!(r.precision, 0.5);
        assert_eq!(r.recall, 0.5);
    }

    #[test]
    fn empty_conventions() {
        let e = mask([3, 1, 1], &[]);
        let r = compute_metrics(&e, &e).unwrap();
        assert_eq!(
            (r.dice, r.jaccard, r.precision, r.recall),
            (1.0, 1.0, 1.0, 1.0)
        );
        let r = compute_metrics(&e, &mask([3, 1, 1], &[1])).unwrap();
        assert_eq!(
            (r.dice, r.jaccard, r.precision, r.recall),
            (0.0, 0.0, 1.0, 0.0)
        );
        assert!(r.empty_prediction);
    }

    #[test]
    fn largest_cc_keeps_bigger_and_breaks_ties_low() {
        let dims = [20, 1, 1];
        let big: Vec<usize> = (0..5).chain(8..18).collect();
        let out = largest_cc(&mask(dims, &big), Connectivity3::Six);
        assert_eq!(out, mask(dims, &(8..18).collect::<Vec<_>>()));
        let tie: Vec<usize> = (0..7).chain(10..17).collect();
        let out = largest_cc(&mask(dims, &tie), Connectivity3::Six);
        assert_eq!(out, mask(dims, &(0..7).collect::<Vec<_>>()));
        let e = mask(dims, &[]);
        assert_eq!(largest_cc(&e, Connectivity3::TwentySix), e);
    }

    #[test]
    fn surface_distance_zero_for_identical_and_errors_on_empty() {
        let m = mask([3, 3, 3], &[13, 12, 14]);
        let d = surface_distance_map(&m, &m, Spacing::default()).unwrap();
        assert!(d.iter().all(|&(_, v)| v == 0.0));
        assert!(surface_distance_map(&mask([3, 3, 3], &[]), &m, Spacing::default()).is_err());
    }

    #[test]
    fn report_aggregates_and_csv() {
        let row = |id: &str, d: f64| MetricsRow {
            id: id.into(),
            fold: Some(0),
            metrics: VolumeMetrics {
                dice: d,
                jaccard: d / (2.0 - d),
                precision: d,
                recall: d,
                empty_prediction: false,
            },
        };
        let rep = MetricsReport::new(vec![row("a", 0.5), row("b", 1.0)]);
        assert_eq!(rep.aggregate.dice.mean, 0.75);
        assert_eq!(rep.aggregate.dice.std, 0.25);
        assert_eq!(rep.aggregate.dice.min, 0.5);
        assert_eq!(rep.to_csv().lines().count(), 3);
        let back: MetricsReport = serde_json::from_str(&rep.to_json()).unwrap();
        assert_eq!(back, rep);
    }
}
