//! End-to-end training and segmentation built from the individual modules.
//!
//! Every stage draws its randomness from a seed derived from the master
//! seed, the stage name and the fold, so running the stages one by one
//! reproduces a cross-validation run exactly.

use log::info;
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::cascade::{
    calibrate_threshold, labeled_matrix, mine_hard_negatives, pool_features, stage2_channels,
    stage2_matrix, threshold_grid, train_stage1, train_stage2, Calibration, CalibrationCase,
    CascadeModel, Channel, ChannelRef, Framework, MiningReport, Stage1Report,
};
use crate::cnn::{extract_25d_patch, train_cnn, ConvNet, TrainLog};
use crate::config::{FoldPlan, PipelineConfig};
use crate::densemap::{label_dense_cnn, label_dense_rf, ProbabilityVolume};
use crate::error::{Error, Result, StageExt};
use crate::forest::{train_forest, FeatureMatrix, ForestModel};
use crate::patchfeat::{
    collect_kde_samples, extract_grid_descriptors, fit_kde, kde_response_map, KdeLookup,
    DESCRIPTOR_LEN,
};
use crate::postmetrics::{compute_metrics, MetricsReport, MetricsRow};
use crate::superpixel::{
    oracle_segmentation, oversegment, SpClass, SuperpixelLabeling, SuperpixelMap,
};
use crate::volume::{body_mask, SegmentationMask, Volume3D};

/// A volume and its model-independent derived data.
pub struct Prepared {
    pub id: String,
    pub volume: Volume3D,
    pub gt: Option<SegmentationMask>,
    pub body: SegmentationMask,
    pub sp: SuperpixelMap,
    /// Superpixel classes when ground truth is available.
    pub classes: Option<Vec<SpClass>>,
}

impl Prepared {
    pub fn new(
        id: impl Into<String>,
        volume: Volume3D,
        gt: Option<SegmentationMask>,
        cfg: &PipelineConfig,
    ) -> Result<Self> {
        let sp = oversegment(&volume, &cfg.superpixel).stage("oversegment")?;
        Self::with_superpixels(id, volume, gt, sp, cfg)
    }

    /// As `new`, with a previously computed over-segmentation.
    pub fn with_superpixels(
        id: impl Into<String>,
        volume: Volume3D,
        gt: Option<SegmentationMask>,
        sp: SuperpixelMap,
        cfg: &PipelineConfig,
    ) -> Result<Self> {
        if let Some(g) = &gt {
            g.check_same_dims(volume.dims())?;
        }
        if sp.dims() != volume.dims() {
            return Err(Error::DimMismatch(format!(
                "superpixel dims {:?} vs volume dims {:?}",
                sp.dims(),
                volume.dims()
            )));
        }
        let body = body_mask(&volume, cfg.patch.air_threshold);
        let classes = match &gt {
            Some(g) => Some(
                SuperpixelLabeling::build(&sp, g, cfg.labeling.tau_pos, cfg.labeling.tau_neg)?
                    .classes(),
            ),
            None => None,
        };
        Ok(Prepared {
            id: id.into(),
            volume,
            gt,
            body,
            sp,
            classes,
        })
    }

    pub fn gt(&self) -> Result<&SegmentationMask> {
        self.gt
            .as_ref()
            .ok_or_else(|| Error::invalid(format!("volume {} has no ground truth", self.id)))
    }

    pub fn classes(&self) -> Result<&[SpClass]> {
        self.classes
            .as_deref()
            .ok_or_else(|| Error::invalid(format!("volume {} has no ground truth", self.id)))
    }
}

/// KDE table and random-forest patch labeler.
#[derive(Clone, Debug, PartialEq)]
pub struct PatchModels {
    pub kde: KdeLookup,
    pub forest: ForestModel,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PatchTrainingReport {
    pub kde_positive_samples: usize,
    pub kde_negative_samples: usize,
    pub patch_positives: usize,
    pub patch_negatives: usize,
}

/// Fits the KDE table on all target voxels plus a random fraction of the
/// other voxels, then the patch forest on every in-body grid patch labeled
/// by its center voxel.
pub fn train_patch_models(
    train: &[&Prepared],
    cfg: &PipelineConfig,
    fold: Option<usize>,
) -> Result<(PatchModels, PatchTrainingReport)> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.stage_seed("kde", fold));
    let (mut pos, mut neg) = (Vec::new(), Vec::new());
    for p in train {
        collect_kde_samples(
            &p.volume,
            p.gt()?,
            cfg.kde.neg_fraction,
            &mut rng,
            &mut pos,
            &mut neg,
        )?;
    }
    let kde = fit_kde(&pos, &neg, cfg.kde.bandwidth).stage("kde")?;
    let parts: Vec<FeatureMatrix> = train
        .par_iter()
        .map(|p| patch_training_rows(p, &kde, cfg))
        .collect::<Result<_>>()?;
    let mut x = FeatureMatrix::empty(DESCRIPTOR_LEN);
    for part in &parts {
        x.append(part)?;
    }
    let (pp, pn) = x.class_counts();
    info!("patch forest: {} rows ({pp} positive)", x.rows());
    let forest = train_forest(
        &x,
        &cfg.patch_forest.with_seed(cfg.stage_seed("patch_rf", fold)),
    )
    .stage("patch_rf")?;
    let report = PatchTrainingReport {
        kde_positive_samples: pos.len(),
        kde_negative_samples: neg.len(),
        patch_positives: pp,
        patch_negatives: pn,
    };
    Ok((PatchModels { kde, forest }, report))
}

fn patch_training_rows(
    p: &Prepared,
    kde: &KdeLookup,
    cfg: &PipelineConfig,
) -> Result<FeatureMatrix> {
    let gt = p.gt()?;
    let map = kde_response_map(&p.volume, kde);
    let grid = extract_grid_descriptors(
        &p.volume,
        &p.body,
        &map,
        &p.sp,
        cfg.patch.stride,
        cfg.patch.size,
    )?;
    let mut m = FeatureMatrix::empty(DESCRIPTOR_LEN);
    for (i, d) in grid {
        m.push(d.as_slice(), gt.get_index(i));
    }
    Ok(m)
}

pub fn rf_map(
    p: &Prepared,
    models: &PatchModels,
    cfg: &PipelineConfig,
) -> Result<ProbabilityVolume> {
    label_dense_rf(
        &p.volume,
        &p.body,
        &models.kde,
        &p.sp,
        &models.forest,
        cfg.patch.stride,
        cfg.patch.size,
    )
    .stage("label_rf")
}

/// P^RF for the training volumes. With `cascade.cross_fit >= 2` the volumes
/// are dealt into that many groups and each group is labeled by patch
/// models trained on the other groups; otherwise `models` labels them
/// in-sample.
pub fn training_rf_maps(
    train: &[&Prepared],
    models: &PatchModels,
    cfg: &PipelineConfig,
    fold: Option<usize>,
) -> Result<Vec<ProbabilityVolume>> {
    let k = cfg.cascade.cross_fit;
    if k < 2 || train.len() < k {
        return train.iter().map(|p| rf_map(p, models, cfg)).collect();
    }
    let mut maps: Vec<Option<ProbabilityVolume>> = vec![None; train.len()];
    for g in 0..k {
        let inner: Vec<&Prepared> = (0..train.len())
            .filter(|i| i % k != g)
            .map(|i| train[i])
            .collect();
        let inner_fold = fold.map_or(1000 + g, |f| 1000 * (f + 1) + g);
        let (m, _) = train_patch_models(&inner, cfg, Some(inner_fold))?;
        for i in (0..train.len()).filter(|i| i % k == g) {
            maps[i] = Some(rf_map(train[i], &m, cfg)?);
        }
    }
    Ok(maps
        .into_iter()
        .map(|m| m.expect("every volume in one group"))
        .collect())
}

fn channel_refs<'a>(
    channels: &[Channel],
    v: &'a Volume3D,
    rf: Option<&'a ProbabilityVolume>,
    cnn: Option<&'a ProbabilityVolume>,
) -> Result<Vec<ChannelRef<'a>>> {
    channels
        .iter()
        .map(|c| match c {
            Channel::Intensity => Ok(ChannelRef::Intensity(v)),
            Channel::Rf => rf
                .map(ChannelRef::Probability)
                .ok_or_else(|| Error::invalid("missing RF map")),
            Channel::Cnn => cnn
                .map(ChannelRef::Probability)
                .ok_or_else(|| Error::invalid("missing CNN map")),
        })
        .collect()
}

/// Stage-1 features: intensity and P^RF statistics per superpixel.
pub fn stage1_features(p: &Prepared, rf: &ProbabilityVolume) -> Result<Vec<Vec<f32>>> {
    pool_features(
        &p.sp,
        &channel_refs(&crate::cascade::STAGE1_CHANNELS, &p.volume, Some(rf), None)?,
    )
}

fn scores(model: &ForestModel, rows: &[Vec<f32>]) -> Result<Vec<f64>> {
    rows.par_iter().map(|r| model.predict_proba(r)).collect()
}

/// Stage 1 and the hard-negative set, shared by both frameworks.
pub struct Stage1Outcome {
    pub forest: ForestModel,
    pub report: Stage1Report,
    pub mining: MiningReport,
    /// Per training volume: stage-1 features, scores and survivors.
    pub features: Vec<Vec<Vec<f32>>>,
    pub scores: Vec<Vec<f64>>,
    pub survivors: Vec<Vec<bool>>,
    /// Per training volume: hard-negative superpixel ids.
    pub hard: Vec<Vec<usize>>,
}

pub fn run_stage1(
    train: &[&Prepared],
    rf_maps: &[ProbabilityVolume],
    cfg: &PipelineConfig,
    fold: Option<usize>,
) -> Result<Stage1Outcome> {
    let features: Vec<Vec<Vec<f32>>> = train
        .iter()
        .zip(rf_maps)
        .map(|(p, rf)| stage1_features(p, rf))
        .collect::<Result<_>>()?;
    let mut x = FeatureMatrix::empty(features[0].first().map_or(24, |r| r.len()));
    for (p, f) in train.iter().zip(&features) {
        x.append(&labeled_matrix(f, p.classes()?)?)?;
    }
    let config = cfg.cascade.forest.with_seed(cfg.stage_seed("stage1", fold));
    let (forest, report) =
        train_stage1(&x, &config, cfg.cascade.recall_target, None).stage("stage1")?;
    info!(
        "stage 1: theta1 {:.4}, recall {:.4}, pruned {:.4} of negatives",
        report.theta1, report.recall, report.pruned_negative_fraction
    );
    let scores: Vec<Vec<f64>> = features
        .iter()
        .map(|f| scores(&forest, f))
        .collect::<Result<_>>()?;
    let survivors: Vec<Vec<bool>> = scores
        .iter()
        .map(|s| s.iter().map(|&v| v >= report.theta1).collect())
        .collect();
    // mining runs on all training superpixels at once so the empty-set floor
    // is global
    let all_scores: Vec<f64> = scores.iter().flatten().copied().collect();
    let mut all_classes = Vec::with_capacity(all_scores.len());
    for p in train {
        all_classes.extend_from_slice(p.classes()?);
    }
    let (hard_all, mining) = mine_hard_negatives(&all_scores, &all_classes, report.theta1);
    let mut hard = vec![Vec::new(); train.len()];
    let mut offset = 0;
    let mut it = hard_all.into_iter().peekable();
    for (v, s) in scores.iter().enumerate() {
        while let Some(&h) = it.peek() {
            if h >= offset + s.len() {
                break;
            }
            hard[v].push(h - offset);
            it.next();
        }
        offset += s.len();
    }
    Ok(Stage1Outcome {
        forest,
        report,
        mining,
        features,
        scores,
        survivors,
        hard,
    })
}

/// CNN training patches: `patches_per_superpixel` random voxels of every
/// positive and hard-negative superpixel, labeled by the center voxel.
pub fn cnn_training_set(
    train: &[&Prepared],
    stage1: &Stage1Outcome,
    cfg: &PipelineConfig,
    fold: Option<usize>,
) -> Result<(Vec<crate::cnn::Patch25D>, Vec<bool>)> {
    let s = cfg.cnn.architecture().input_size;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.stage_seed("cnn_patches", fold));
    let mut centers: Vec<(usize, usize, bool)> = Vec::new();
    for (v, p) in train.iter().enumerate() {
        let gt = p.gt()?;
        let members = p.sp.members();
        let mut chosen: Vec<usize> = stage1.hard[v].clone();
        chosen.extend(
            p.classes()?
                .iter()
                .enumerate()
                .filter(|c| *c.1 == SpClass::Positive)
                .map(|c| c.0),
        );
        chosen.sort_unstable();
        for id in chosen {
            let m = &members[id];
            let n = cfg.cnn.patches_per_superpixel.min(m.len());
            let mut pick = sample(&mut rng, m.len(), n).into_vec();
            pick.sort_unstable();
            centers.extend(pick.into_iter().map(|j| (v, m[j], gt.get_index(m[j]))));
        }
    }
    let patches = centers
        .par_iter()
        .map(|&(v, i, _)| extract_25d_patch(&train[v].volume, i, s))
        .collect::<Result<Vec<_>>>()?;
    Ok((patches, centers.into_iter().map(|c| c.2).collect()))
}

pub fn train_cnn_stage(
    train: &[&Prepared],
    stage1: &Stage1Outcome,
    cfg: &PipelineConfig,
    fold: Option<usize>,
) -> Result<(ConvNet, TrainLog)> {
    let (patches, labels) = cnn_training_set(train, stage1, cfg, fold)?;
    info!("cnn: {} training patches", patches.len());
    train_cnn(
        &cfg.cnn.architecture(),
        &patches,
        &labels,
        &cfg.cnn.hyper(cfg.stage_seed("cnn", fold)),
    )
    .stage("train_cnn")
}

pub fn cnn_map(
    p: &Prepared,
    survivors: &[bool],
    cnn: &ConvNet,
    cfg: &PipelineConfig,
) -> Result<ProbabilityVolume> {
    label_dense_cnn(&p.volume, &p.sp.select(survivors), cnn, cfg.cnn.stride).stage("label_cnn")
}

fn stage2_rows(
    p: &Prepared,
    channels: &[Channel],
    stage1_rows: &[Vec<f32>],
    rf: &ProbabilityVolume,
    cnn: Option<&ProbabilityVolume>,
) -> Result<Vec<Vec<f32>>> {
    if channels == crate::cascade::STAGE1_CHANNELS {
        return Ok(stage1_rows.to_vec());
    }
    pool_features(&p.sp, &channel_refs(channels, &p.volume, Some(rf), cnn)?)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CascadeTrainingReport {
    pub stage1: Stage1Report,
    pub mining: MiningReport,
    pub stage2_rows: usize,
    pub calibration: Calibration,
}

/// Trains stage 2 on positives plus hard negatives and calibrates θ₂ on the
/// training volumes. `cnn` is required for F-2.
pub fn train_cascade(
    train: &[&Prepared],
    rf_maps: &[ProbabilityVolume],
    stage1: Stage1Outcome,
    cnn: Option<&ConvNet>,
    cfg: &PipelineConfig,
    fold: Option<usize>,
) -> Result<(CascadeModel, CascadeTrainingReport)> {
    let channels = stage2_channels(cfg.framework, cfg.cascade.all_channels);
    let cnn_maps: Vec<Option<ProbabilityVolume>> = match cfg.framework {
        Framework::F1 => vec![None; train.len()],
        Framework::F2 => {
            let net = cnn.ok_or_else(|| Error::invalid("framework f2 needs a trained CNN"))?;
            train
                .iter()
                .zip(&stage1.survivors)
                .map(|(p, s)| cnn_map(p, s, net, cfg).map(Some))
                .collect::<Result<_>>()?
        }
    };
    let rows: Vec<Vec<Vec<f32>>> = train
        .iter()
        .enumerate()
        .map(|(v, p)| {
            stage2_rows(
                p,
                &channels,
                &stage1.features[v],
                &rf_maps[v],
                cnn_maps[v].as_ref(),
            )
        })
        .collect::<Result<_>>()?;
    let mut x = FeatureMatrix::empty(rows[0].first().map_or(24, |r| r.len()));
    for (v, p) in train.iter().enumerate() {
        x.append(&stage2_matrix(&rows[v], p.classes()?, &stage1.hard[v])?)?;
    }
    let stage2 = train_stage2(
        &x,
        &cfg.cascade.forest.with_seed(cfg.stage_seed("stage2", fold)),
    )
    .stage("stage2")?;
    let s2: Vec<Vec<f64>> = rows
        .iter()
        .zip(&stage1.survivors)
        .map(|(r, surv)| stage2_scores(&stage2, r, surv))
        .collect::<Result<_>>()?;
    let cases: Vec<CalibrationCase> = train
        .iter()
        .enumerate()
        .map(|(v, p)| {
            Ok(CalibrationCase {
                sp: &p.sp,
                gt: p.gt()?,
                survivors: &stage1.survivors[v],
                stage2_scores: &s2[v],
            })
        })
        .collect::<Result<_>>()?;
    let g = &cfg.cascade.theta_grid;
    let calibration = calibrate_threshold(&cases, &threshold_grid(g.start, g.stop, g.step)?)
        .stage("calibrate")?;
    info!("stage 2: theta2 {:.2}", calibration.theta2);
    let model = CascadeModel {
        framework: cfg.framework,
        stage1: stage1.forest,
        theta1: stage1.report.theta1,
        stage2,
        stage2_channels: channels,
        theta2: calibration.theta2,
    };
    model.validate()?;
    let report = CascadeTrainingReport {
        stage1: stage1.report,
        mining: stage1.mining,
        stage2_rows: x.rows(),
        calibration,
    };
    Ok((model, report))
}

fn stage2_scores(model: &ForestModel, rows: &[Vec<f32>], survivors: &[bool]) -> Result<Vec<f64>> {
    rows.par_iter()
        .zip(survivors)
        .map(|(r, &s)| if s { model.predict_proba(r) } else { Ok(0.0) })
        .collect()
}

/// Everything trained for one fold.
#[derive(Clone, Debug, PartialEq)]
pub struct FoldModels {
    pub patch: PatchModels,
    pub cnn: Option<ConvNet>,
    pub cascade: CascadeModel,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FoldReport {
    pub fold: usize,
    pub train_ids: Vec<String>,
    pub test_ids: Vec<String>,
    pub patch: PatchTrainingReport,
    pub cascade: CascadeTrainingReport,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cnn: Option<TrainLog>,
}

pub fn train_fold(
    train: &[&Prepared],
    cfg: &PipelineConfig,
    fold: Option<usize>,
) -> Result<(FoldModels, FoldReport)> {
    let (patch, patch_report) = train_patch_models(train, cfg, fold)?;
    let rf_maps = training_rf_maps(train, &patch, cfg, fold)?;
    let stage1 = run_stage1(train, &rf_maps, cfg, fold)?;
    let (cnn, log) = match cfg.framework {
        Framework::F1 => (None, None),
        Framework::F2 => {
            let (net, log) = train_cnn_stage(train, &stage1, cfg, fold)?;
            (Some(net), Some(log))
        }
    };
    let (cascade, cascade_report) =
        train_cascade(train, &rf_maps, stage1, cnn.as_ref(), cfg, fold)?;
    let report = FoldReport {
        fold: fold.unwrap_or(0),
        train_ids: train.iter().map(|p| p.id.clone()).collect(),
        test_ids: Vec::new(),
        patch: patch_report,
        cascade: cascade_report,
        cnn: log,
    };
    Ok((
        FoldModels {
            patch,
            cnn,
            cascade,
        },
        report,
    ))
}

/// Intermediate results of segmenting one volume.
pub struct Segmentation {
    pub mask: SegmentationMask,
    pub rf: ProbabilityVolume,
    pub cnn: Option<ProbabilityVolume>,
    pub stage1_scores: Vec<f64>,
    pub survivors: Vec<bool>,
    pub stage2_scores: Vec<f64>,
}

pub fn segment(p: &Prepared, models: &FoldModels, cfg: &PipelineConfig) -> Result<Segmentation> {
    let rf = rf_map(p, &models.patch, cfg)?;
    segment_with_rf(p, rf, &models.cascade, models.cnn.as_ref(), cfg)
}

/// Cascade inference given a precomputed P^RF map.
pub fn segment_with_rf(
    p: &Prepared,
    rf: ProbabilityVolume,
    c: &CascadeModel,
    cnn_model: Option<&ConvNet>,
    cfg: &PipelineConfig,
) -> Result<Segmentation> {
    rf.check_dims(p.volume.dims())?;
    let f1 = stage1_features(p, &rf)?;
    let s1 = scores(&c.stage1, &f1).stage("stage1")?;
    let survivors: Vec<bool> = s1.iter().map(|&s| s >= c.theta1).collect();
    let cnn = match c.framework {
        Framework::F1 => None,
        Framework::F2 => {
            let net =
                cnn_model.ok_or_else(|| Error::invalid("framework f2 needs a trained CNN"))?;
            Some(cnn_map(p, &survivors, net, cfg)?)
        }
    };
    let rows = stage2_rows(p, &c.stage2_channels, &f1, &rf, cnn.as_ref())?;
    let s2 = stage2_scores(&c.stage2, &rows, &survivors).stage("stage2")?;
    let mask = crate::cascade::assemble_mask(&p.sp, &survivors, &s2, c.theta2);
    Ok(Segmentation {
        mask,
        rf,
        cnn,
        stage1_scores: s1,
        survivors,
        stage2_scores: s2,
    })
}

pub struct CrossvalOutcome {
    pub plan: FoldPlan,
    pub report: MetricsReport,
    pub oracle: MetricsReport,
    pub folds: Vec<(FoldModels, FoldReport)>,
    /// Predicted masks in corpus order.
    pub predictions: Vec<(String, SegmentationMask)>,
}

pub fn fold_plan(ids: &[String], cfg: &PipelineConfig) -> Result<FoldPlan> {
    FoldPlan::new(ids, cfg.cv.folds, cfg.stage_seed("folds", None))
}

/// Metrics rows for `(id, prediction, ground truth)` triples, sorted by id,
/// with each row's test fold taken from `plan`.
pub fn evaluate_rows(
    items: &[(String, &SegmentationMask, &SegmentationMask)],
    plan: Option<&FoldPlan>,
) -> Result<MetricsReport> {
    let mut rows: Vec<MetricsRow> = items
        .iter()
        .map(|(id, pred, gt)| {
            Ok(MetricsRow {
                id: id.clone(),
                fold: plan.and_then(|p| p.fold_of(id)),
                metrics: compute_metrics(pred, gt)?,
            })
        })
        .collect::<Result<_>>()?;
    rows.sort_by(|a, b| a.id.cmp(&b.id));
    Ok(MetricsReport::new(rows))
}

/// k-fold cross-validation over prepared volumes (all with ground truth).
pub fn crossval(cases: &[Prepared], cfg: &PipelineConfig) -> Result<CrossvalOutcome> {
    let ids: Vec<String> = cases.iter().map(|c| c.id.clone()).collect();
    let plan = fold_plan(&ids, cfg)?;
    let by_id = |id: &str| cases.iter().find(|c| c.id == id).expect("id from corpus");
    let mut folds = Vec::with_capacity(plan.len());
    let mut predictions = Vec::with_capacity(cases.len());
    for f in 0..plan.len() {
        info!("fold {}/{}", f + 1, plan.len());
        let train: Vec<&Prepared> = plan.train_ids(f).iter().map(|id| by_id(id)).collect();
        let (models, mut report) = train_fold(&train, cfg, Some(f))?;
        report.test_ids = plan.test_ids(f).to_vec();
        for id in plan.test_ids(f) {
            let seg = segment(by_id(id), &models, cfg)?;
            predictions.push((id.clone(), seg.mask));
        }
        folds.push((models, report));
    }
    predictions.sort_by(|a, b| a.0.cmp(&b.0));
    let items: Vec<(String, &SegmentationMask, &SegmentationMask)> = predictions
        .iter()
        .map(|(id, m)| Ok((id.clone(), m, by_id(id).gt()?)))
        .collect::<Result<_>>()?;
    let report = evaluate_rows(&items, Some(&plan))?;
    let oracles: Vec<(String, SegmentationMask)> = cases
        .iter()
        .map(|c| {
            Ok((
                c.id.clone(),
                oracle_segmentation(&c.sp, c.gt()?, cfg.labeling.oracle_tau)?,
            ))
        })
        .collect::<Result<_>>()?;
    let oracle_items: Vec<(String, &SegmentationMask, &SegmentationMask)> = oracles
        .iter()
        .map(|(id, m)| Ok((id.clone(), m, by_id(id).gt()?)))
        .collect::<Result<_>>()?;
    let oracle = evaluate_rows(&oracle_items, Some(&plan))?;
    Ok(CrossvalOutcome {
        plan,
        report,
        oracle,
        folds,
        predictions,
    })
}
