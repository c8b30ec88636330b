//! File-based pipeline stages behind the command line tool.
//!
//! A corpus directory holds `corpus.json` and the volume/mask files it
//! lists. Stages share a work directory:
//!
//! ```text
//! superpixels/<id>.{json,raw}
//! folds.json                      fold plan
//! <fold>/kde.json                 <fold> is fold_<k>, or full without --fold
//! <fold>/patch_rf.csrf
//! <fold>/maps/<id>_rf.{json,raw}
//! <fold>/cnn.csnn                 framework f2 only
//! <fold>/cascade.cscd
//! <fold>/pred/<id>.{json,raw}
//! report.json, report.csv         per-volume metrics
//! ```
//!
//! Running `oversegment`, then per fold `train-patch-rf`, `label`,
//! `train-cnn` (f2), `train-cascade` and `segment`, then `evaluate`
//! reproduces the files `crossval` writes.

use std::path::{Path, PathBuf};

use log::info;
use serde::{Deserialize, Serialize};

use crate::cascade::{CascadeModel, Framework};
use crate::cnn::ConvNet;
use crate::config::{FoldPlan, PipelineConfig};
use crate::densemap::ProbabilityVolume;
use crate::error::{Error, Result};
use crate::forest::ForestModel;
use crate::overlay::{write_overlays, SliceSel};
use crate::patchfeat::KdeLookup;
use crate::pipeline::{self, FoldModels, PatchModels, Prepared};
use crate::postmetrics::{compute_metrics, MetricsReport, MetricsRow};
use crate::superpixel::{load_superpixels, oversegment, save_superpixels};
use crate::volume::io::write_atomic;
use crate::volume::{
    generate_phantom, load_mask, load_volume, save_mask, save_volume, PhantomSpec, SegmentationMask,
};

pub const CORPUS_FILE: &str = "corpus.json";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorpusEntry {
    pub id: String,
    /// Volume path relative to the corpus directory.
    pub volume: String,
    /// Ground-truth mask path, when annotated.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mask: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorpusManifest {
    pub volumes: Vec<CorpusEntry>,
}

/// A corpus manifest together with its directory.
#[derive(Clone, Debug)]
pub struct Corpus {
    pub dir: PathBuf,
    pub manifest: CorpusManifest,
}

impl Corpus {
    pub fn open(dir: &Path) -> Result<Self> {
        let path = dir.join(CORPUS_FILE);
        let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let manifest: CorpusManifest = serde_json::from_str(&text).map_err(|e| Error::Header {
            path: path.clone(),
            msg: e.to_string(),
        })?;
        Ok(Corpus {
            dir: dir.to_path_buf(),
            manifest,
        })
    }

    pub fn ids(&self) -> Vec<String> {
        self.manifest.volumes.iter().map(|e| e.id.clone()).collect()
    }

    pub fn entry(&self, id: &str) -> Result<&CorpusEntry> {
        self.manifest
            .volumes
            .iter()
            .find(|e| e.id == id)
            .ok_or_else(|| Error::invalid(format!("no volume {id:?} in corpus")))
    }

    pub fn load_gt(&self, id: &str) -> Result<Option<SegmentationMask>> {
        match &self.entry(id)?.mask {
            Some(m) => Ok(Some(load_mask(&self.dir.join(m))?)),
            None => Ok(None),
        }
    }

    /// Loads a volume with its stored over-segmentation from `work`.
    pub fn prepare(&self, id: &str, work: &Work, cfg: &PipelineConfig) -> Result<Prepared> {
        let v = load_volume(&self.dir.join(&self.entry(id)?.volume))?;
        let sp = load_superpixels(&work.superpixels(id))?;
        Prepared::with_superpixels(id, v, self.load_gt(id)?, sp, cfg)
    }

    pub fn prepare_all(
        &self,
        ids: &[String],
        work: &Work,
        cfg: &PipelineConfig,
    ) -> Result<Vec<Prepared>> {
        ids.iter().map(|id| self.prepare(id, work, cfg)).collect()
    }
}

/// Paths inside a work directory.
#[derive(Clone, Debug)]
pub struct Work {
    pub dir: PathBuf,
}

impl Work {
    pub fn new(dir: &Path) -> Self {
        Work {
            dir: dir.to_path_buf(),
        }
    }

    pub fn superpixels(&self, id: &str) -> PathBuf {
        self.dir.join("superpixels").join(id)
    }

    pub fn fold_dir(&self, fold: Option<usize>) -> PathBuf {
        match fold {
            Some(k) => self.dir.join(format!("fold_{k}")),
            None => self.dir.join("full"),
        }
    }

    pub fn kde(&self, fold: Option<usize>) -> PathBuf {
        self.fold_dir(fold).join("kde.json")
    }

    pub fn patch_rf(&self, fold: Option<usize>) -> PathBuf {
        self.fold_dir(fold).join("patch_rf.csrf")
    }

    pub fn rf_map(&self, fold: Option<usize>, id: &str) -> PathBuf {
        self.fold_dir(fold).join("maps").join(format!("{id}_rf"))
    }

    pub fn cnn(&self, fold: Option<usize>) -> PathBuf {
        self.fold_dir(fold).join("cnn.csnn")
    }

    pub fn cascade(&self, fold: Option<usize>) -> PathBuf {
        self.fold_dir(fold).join("cascade.cscd")
    }

    pub fn prediction(&self, fold: Option<usize>, id: &str) -> PathBuf {
        self.fold_dir(fold).join("pred").join(id)
    }

    pub fn report(&self) -> PathBuf {
        self.dir.join("report.json")
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).expect("report serializes");
    text.push('\n');
    write_atomic(path, text.as_bytes())
}

/// Fold plan of a corpus under the configured fold count and seed.
pub fn plan_for(corpus: &Corpus, cfg: &PipelineConfig) -> Result<FoldPlan> {
    pipeline::fold_plan(&corpus.ids(), cfg)
}

/// Training and test ids of a fold; without a fold every volume is in both.
fn split(
    corpus: &Corpus,
    cfg: &PipelineConfig,
    fold: Option<usize>,
) -> Result<(Vec<String>, Vec<String>)> {
    match fold {
        None => {
            let mut ids = corpus.ids();
            ids.sort();
            Ok((ids.clone(), ids))
        }
        Some(k) => {
            let plan = plan_for(corpus, cfg)?;
            if k >= plan.len() {
                return Err(Error::invalid(format!(
                    "fold {k} out of range 0..{}",
                    plan.len()
                )));
            }
            Ok((plan.train_ids(k), plan.test_ids(k).to_vec()))
        }
    }
}

/// Writes `count` phantoms and their manifest. Phantom `i` uses seed
/// `phantom.seed + i`.
pub fn cmd_phantoms(count: usize, spec: &PhantomSpec, out: &Path) -> Result<Corpus> {
    let mut volumes = Vec::with_capacity(count);
    for i in 0..count {
        let id = format!("phantom_{i:03}");
        let (v, gt) = generate_phantom(&PhantomSpec {
            seed: spec.seed.wrapping_add(i as u64),
            ..spec.clone()
        })?;
        let mask = format!("{id}_gt");
        save_volume(&v, &out.join(&id))?;
        save_mask(&gt, &out.join(&mask))?;
        volumes.push(CorpusEntry {
            id: id.clone(),
            volume: id,
            mask: Some(mask),
        });
    }
    let manifest = CorpusManifest { volumes };
    write_json(&out.join(CORPUS_FILE), &manifest)?;
    info!("wrote {count} phantoms to {}", out.display());
    Ok(Corpus {
        dir: out.to_path_buf(),
        manifest,
    })
}

/// Over-segments every corpus volume.
pub fn cmd_oversegment(corpus: &Corpus, work: &Work, cfg: &PipelineConfig) -> Result<()> {
    for e in &corpus.manifest.volumes {
        let v = load_volume(&corpus.dir.join(&e.volume))?;
        let sp = oversegment(&v, &cfg.superpixel)?;
        save_superpixels(&sp, &work.superpixels(&e.id))?;
        info!("{}: {} superpixels", e.id, sp.len());
    }
    Ok(())
}

/// Fits the KDE table and the patch forest on the fold's training volumes.
pub fn cmd_train_patch_rf(
    corpus: &Corpus,
    work: &Work,
    cfg: &PipelineConfig,
    fold: Option<usize>,
) -> Result<()> {
    let (train_ids, _) = split(corpus, cfg, fold)?;
    let train = corpus.prepare_all(&train_ids, work, cfg)?;
    let refs: Vec<&Prepared> = train.iter().collect();
    let (models, report) = pipeline::train_patch_models(&refs, cfg, fold)?;
    save_patch_models(work, fold, &models)?;
    write_json(&work.fold_dir(fold).join("patch_report.json"), &report)
}

fn save_patch_models(work: &Work, fold: Option<usize>, m: &PatchModels) -> Result<()> {
    m.kde.save(&work.kde(fold))?;
    m.forest.save(&work.patch_rf(fold))
}

fn load_patch_models(work: &Work, fold: Option<usize>) -> Result<PatchModels> {
    Ok(PatchModels {
        kde: KdeLookup::load(&work.kde(fold))?,
        forest: ForestModel::load(&work.patch_rf(fold))?,
    })
}

/// Dense P^RF maps of every corpus volume under the fold's patch models.
pub fn cmd_label(
    corpus: &Corpus,
    work: &Work,
    cfg: &PipelineConfig,
    fold: Option<usize>,
) -> Result<()> {
    let models = load_patch_models(work, fold)?;
    let mut ids = corpus.ids();
    ids.sort();
    for id in ids {
        let p = corpus.prepare(&id, work, cfg)?;
        pipeline::rf_map(&p, &models, cfg)?.save(&work.rf_map(fold, &id))?;
    }
    Ok(())
}

/// Training volumes and their P^RF maps as the cascade sees them.
fn training_inputs(
    corpus: &Corpus,
    work: &Work,
    cfg: &PipelineConfig,
    fold: Option<usize>,
) -> Result<(Vec<Prepared>, Vec<ProbabilityVolume>)> {
    let (train_ids, _) = split(corpus, cfg, fold)?;
    let train = corpus.prepare_all(&train_ids, work, cfg)?;
    let maps = if cfg.cascade.cross_fit >= 2 {
        let refs: Vec<&Prepared> = train.iter().collect();
        pipeline::training_rf_maps(&refs, &load_patch_models(work, fold)?, cfg, fold)?
    } else {
        train_ids
            .iter()
            .map(|id| ProbabilityVolume::load(&work.rf_map(fold, id)))
            .collect::<Result<_>>()?
    };
    Ok((train, maps))
}

/// Trains the patch CNN on positive and hard-negative superpixels. Stage 1
/// is retrained deterministically to find the hard negatives.
pub fn cmd_train_cnn(
    corpus: &Corpus,
    work: &Work,
    cfg: &PipelineConfig,
    fold: Option<usize>,
) -> Result<()> {
    let (train, maps) = training_inputs(corpus, work, cfg, fold)?;
    let refs: Vec<&Prepared> = train.iter().collect();
    let stage1 = pipeline::run_stage1(&refs, &maps, cfg, fold)?;
    let (net, log) = pipeline::train_cnn_stage(&refs, &stage1, cfg, fold)?;
    net.save(&work.cnn(fold))?;
    write_json(&work.fold_dir(fold).join("cnn_log.json"), &log)
}

/// Trains both cascade stages and calibrates the final threshold.
pub fn cmd_train_cascade(
    corpus: &Corpus,
    work: &Work,
    cfg: &PipelineConfig,
    fold: Option<usize>,
) -> Result<()> {
    let (train, maps) = training_inputs(corpus, work, cfg, fold)?;
    let refs: Vec<&Prepared> = train.iter().collect();
    let stage1 = pipeline::run_stage1(&refs, &maps, cfg, fold)?;
    let cnn = match cfg.framework {
        Framework::F1 => None,
        Framework::F2 => Some(ConvNet::load(&work.cnn(fold))?),
    };
    let (model, report) = pipeline::train_cascade(&refs, &maps, stage1, cnn.as_ref(), cfg, fold)?;
    model.save(&work.cascade(fold))?;
    write_json(&work.fold_dir(fold).join("cascade_report.json"), &report)
}

/// Segments the fold's test volumes (all volumes without a fold).
pub fn cmd_segment(
    corpus: &Corpus,
    work: &Work,
    cfg: &PipelineConfig,
    fold: Option<usize>,
) -> Result<()> {
    let (_, test_ids) = split(corpus, cfg, fold)?;
    let cascade = CascadeModel::load(&work.cascade(fold))?;
    let cnn = match cascade.framework {
        Framework::F1 => None,
        Framework::F2 => Some(ConvNet::load(&work.cnn(fold))?),
    };
    for id in test_ids {
        let p = corpus.prepare(&id, work, cfg)?;
        let rf = ProbabilityVolume::load(&work.rf_map(fold, &id))?;
        let seg = pipeline::segment_with_rf(&p, rf, &cascade, cnn.as_ref(), cfg)?;
        save_mask(&seg.mask, &work.prediction(fold, &id))?;
        info!("{id}: {} voxels segmented", seg.mask.count());
    }
    Ok(())
}

/// Metrics of one prediction against one ground truth.
pub fn cmd_evaluate_pair(pred: &Path, gt: &Path, out: Option<&Path>) -> Result<MetricsReport> {
    let p = load_mask(pred)?;
    let g = load_mask(gt)?;
    let id = gt
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    let report = MetricsReport::new(vec![MetricsRow {
        id,
        fold: None,
        metrics: compute_metrics(&p, &g)?,
    }]);
    if let Some(o) = out {
        write_atomic(o, report.to_json().as_bytes())?;
    }
    Ok(report)
}

/// Collects every fold's predictions and writes the corpus report.
pub fn cmd_evaluate(corpus: &Corpus, work: &Work, cfg: &PipelineConfig) -> Result<MetricsReport> {
    let plan = plan_for(corpus, cfg)?;
    let mut preds = Vec::new();
    let mut gts = Vec::new();
    let mut ids = corpus.ids();
    ids.sort();
    for id in &ids {
        let fold = plan.fold_of(id).expect("plan covers corpus");
        preds.push(load_mask(&work.prediction(Some(fold), id))?);
        gts.push(
            corpus
                .load_gt(id)?
                .ok_or_else(|| Error::invalid(format!("volume {id} has no ground truth")))?,
        );
    }
    let items: Vec<(String, &SegmentationMask, &SegmentationMask)> = ids
        .iter()
        .cloned()
        .zip(preds.iter().zip(&gts))
        .map(|(id, (p, g))| (id, p, g))
        .collect();
    let report = pipeline::evaluate_rows(&items, Some(&plan))?;
    write_reports(work, &report)?;
    Ok(report)
}

fn write_reports(work: &Work, report: &MetricsReport) -> Result<()> {
    write_atomic(&work.report(), report.to_json().as_bytes())?;
    write_atomic(&work.dir.join("report.csv"), report.to_csv().as_bytes())
}

#[derive(Serialize)]
struct CrossvalSummary<'a> {
    framework: Framework,
    plan: &'a FoldPlan,
    oracle: &'a MetricsReport,
    folds: Vec<&'a pipeline::FoldReport>,
}

/// Full cross-validation: over-segmentation, per-fold training and
/// segmentation, and the corpus report.
pub fn cmd_crossval(corpus: &Corpus, work: &Work, cfg: &PipelineConfig) -> Result<MetricsReport> {
    cmd_oversegment(corpus, work, cfg)?;
    let mut ids = corpus.ids();
    ids.sort();
    let cases = corpus.prepare_all(&ids, work, cfg)?;
    let out = pipeline::crossval(&cases, cfg)?;
    write_json(&work.dir.join("folds.json"), &out.plan)?;
    for (f, (models, report)) in out.folds.iter().enumerate() {
        save_fold(work, Some(f), models)?;
        write_json(
            &work.fold_dir(Some(f)).join("patch_report.json"),
            &report.patch,
        )?;
        write_json(
            &work.fold_dir(Some(f)).join("cascade_report.json"),
            &report.cascade,
        )?;
        if let Some(log) = &report.cnn {
            write_json(&work.fold_dir(Some(f)).join("cnn_log.json"), log)?;
        }
        for id in out.plan.test_ids(f) {
            let (_, mask) = out
                .predictions
                .iter()
                .find(|(p, _)| p == id)
                .expect("every test id predicted");
            save_mask(mask, &work.prediction(Some(f), id))?;
        }
    }
    write_reports(work, &out.report)?;
    let summary = CrossvalSummary {
        framework: cfg.framework,
        plan: &out.plan,
        oracle: &out.oracle,
        folds: out.folds.iter().map(|(_, r)| r).collect(),
    };
    write_json(&work.dir.join("summary.json"), &summary)?;
    info!(
        "mean dice {:.4} (oracle {:.4})",
        out.report.aggregate.dice.mean, out.oracle.aggregate.dice.mean
    );
    Ok(out.report)
}

/// Patch models, CNN (f2 only) and cascade saved for a fold.
pub fn load_fold_models(work: &Work, fold: Option<usize>) -> Result<FoldModels> {
    let cascade = CascadeModel::load(&work.cascade(fold))?;
    let cnn = match cascade.framework {
        Framework::F1 => None,
        Framework::F2 => Some(ConvNet::load(&work.cnn(fold))?),
    };
    Ok(FoldModels {
        patch: load_patch_models(work, fold)?,
        cnn,
        cascade,
    })
}

fn save_fold(work: &Work, fold: Option<usize>, m: &FoldModels) -> Result<()> {
    save_patch_models(work, fold, &m.patch)?;
    if let Some(net) = &m.cnn {
        net.save(&work.cnn(fold))?;
    }
    m.cascade.save(&work.cascade(fold))
}

/// Contour overlays of a volume with optional ground truth and prediction.
pub fn cmd_overlay(
    volume: &Path,
    gt: Option<&Path>,
    pred: Option<&Path>,
    sel: SliceSel,
    out: &Path,
) -> Result<Vec<PathBuf>> {
    let v = load_volume(volume)?;
    let gt = gt.map(load_mask).transpose()?;
    let pred = pred.map(load_mask).transpose()?;
    let stem = volume
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "volume".into());
    write_overlays(&v, gt.as_ref(), pred.as_ref(), sel, &stem, out)
}
