//! Pipeline configuration: one JSON document with defaults for every
//! tunable, dotted-path overrides, and a fold planner.

use std::path::Path;

use log::info;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::cascade::Framework;
use crate::cnn::{Architecture, CnnHyper, Preset};
use crate::error::{Error, Result};
use crate::forest::{ForestConfig, MinLeaf};
use crate::seed::derive_seed;
use crate::superpixel::SuperpixelParams;
use crate::volume::{PhantomSpec, DEFAULT_AIR_THRESHOLD};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LabelingConfig {
    pub tau_pos: f64,
    pub tau_neg: f64,
    /// Oracle keeps superpixels with r strictly above this.
    pub oracle_tau: f64,
}

impl Default for LabelingConfig {
    fn default() -> Self {
        LabelingConfig {
            tau_pos: 0.5,
            tau_neg: 0.2,
            oracle_tau: 0.5,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PatchConfig {
    pub size: usize,
    pub stride: usize,
    pub air_threshold: i16,
}

impl Default for PatchConfig {
    fn default() -> Self {
        PatchConfig {
            size: 25,
            stride: 3,
            air_threshold: DEFAULT_AIR_THRESHOLD,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KdeConfig {
    pub bandwidth: f64,
    pub neg_fraction: f64,
}

impl Default for KdeConfig {
    fn default() -> Self {
        KdeConfig {
            bandwidth: crate::patchfeat::DEFAULT_BANDWIDTH,
            neg_fraction: 0.05,
        }
    }
}

/// Forest settings without the seed, which is derived per stage.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ForestSettings {
    pub trees: usize,
    pub min_leaf: MinLeaf,
    pub max_features: Option<usize>,
    pub max_depth: Option<usize>,
    pub bootstrap: bool,
}

impl Default for ForestSettings {
    fn default() -> Self {
        let d = ForestConfig::default();
        ForestSettings {
            trees: d.trees,
            min_leaf: d.min_leaf,
            max_features: d.max_features,
            max_depth: d.max_depth,
            bootstrap: d.bootstrap,
        }
    }
}

impl ForestSettings {
    pub fn with_seed(&self, seed: u64) -> ForestConfig {
        ForestConfig {
            trees: self.trees,
            min_leaf: self.min_leaf,
            max_features: self.max_features,
            max_depth: self.max_depth,
            bootstrap: self.bootstrap,
            seed,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CnnConfig {
    pub preset: Preset,
    /// Overrides the preset when given.
    pub architecture: Option<Architecture>,
    /// Evaluation stride ℓ of the dense CNN map.
    pub stride: usize,
    /// Training patch centers drawn per positive or hard-negative
    /// superpixel.
    pub patches_per_superpixel: usize,
    pub lr: f64,
    pub momentum: f64,
    pub batch: usize,
    pub epochs: usize,
}

impl Default for CnnConfig {
    fn default() -> Self {
        let h = CnnHyper::default();
        CnnConfig {
            preset: Preset::Desk,
            architecture: None,
            stride: 4,
            patches_per_superpixel: 2,
            lr: h.lr,
            momentum: h.momentum,
            batch: h.batch,
            epochs: 10,
        }
    }
}

impl CnnConfig {
    pub fn architecture(&self) -> Architecture {
        self.architecture
            .clone()
            .unwrap_or_else(|| Architecture::preset(self.preset))
    }

    pub fn hyper(&self, seed: u64) -> CnnHyper {
        CnnHyper {
            lr: self.lr,
            momentum: self.momentum,
            batch: self.batch,
            epochs: self.epochs,
            seed,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ThetaGrid {
    pub start: f64,
    pub stop: f64,
    pub step: f64,
}

impl Default for ThetaGrid {
    fn default() -> Self {
        ThetaGrid {
            start: 0.05,
            stop: 0.95,
            step: 0.05,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CascadeConfig {
    pub recall_target: f64,
    pub theta_grid: ThetaGrid,
    pub forest: ForestSettings,
    /// Stage 2 of F-2 pools intensity, RF and CNN channels (36 features).
    pub all_channels: bool,
    /// Number of volume groups used to produce out-of-fold probability maps
    /// and scores for the training volumes; 0 or 1 scores them in-sample.
    pub cross_fit: usize,
}

impl Default for CascadeConfig {
    fn default() -> Self {
        CascadeConfig {
            recall_target: 0.99,
            theta_grid: ThetaGrid::default(),
            forest: ForestSettings::default(),
            all_channels: false,
            cross_fit: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CvConfig {
    pub folds: usize,
}

impl Default for CvConfig {
    fn default() -> Self {
        CvConfig { folds: 6 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub seed: u64,
    pub framework: Framework,
    pub superpixel: SuperpixelParams,
    pub labeling: LabelingConfig,
    pub patch: PatchConfig,
    pub kde: KdeConfig,
    pub patch_forest: ForestSettings,
    pub cnn: CnnConfig,
    pub cascade: CascadeConfig,
    pub cv: CvConfig,
    pub phantom: PhantomSpec,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            seed: 0,
            framework: Framework::F1,
            superpixel: SuperpixelParams::default(),
            labeling: LabelingConfig::default(),
            patch: PatchConfig::default(),
            kde: KdeConfig::default(),
            patch_forest: ForestSettings::default(),
            cnn: CnnConfig::default(),
            cascade: CascadeConfig::default(),
            cv: CvConfig::default(),
            phantom: PhantomSpec::default(),
        }
    }
}

fn config_err(field: &str, msg: impl Into<String>) -> Error {
    Error::Config {
        field: field.into(),
        msg: msg.into(),
    }
}

impl PipelineConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let v: Value =
            serde_json::from_str(text).map_err(|e| config_err("<document>", e.to_string()))?;
        Self::from_value(v)
    }

    fn from_value(v: Value) -> Result<Self> {
        let cfg: PipelineConfig =
            serde_json::from_value(v).map_err(|e| config_err("<document>", e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// Applies `a.b.c=value` overrides. Values parse as JSON when possible
    /// and as strings otherwise.
    pub fn with_overrides(&self, overrides: &[String]) -> Result<Self> {
        let mut doc = serde_json::to_value(self).expect("config serializes");
        for o in overrides {
            let (path, raw) = o
                .split_once('=')
                .ok_or_else(|| config_err(o, "override must look like path=value"))?;
            let value =
                serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
            let mut slot = &mut doc;
            for key in path.split('.') {
                slot = slot
                    .as_object_mut()
                    .and_then(|m| m.get_mut(key))
                    .ok_or_else(|| config_err(path, "no such field"))?;
            }
            *slot = value;
        }
        let cfg: PipelineConfig =
            serde_json::from_value(doc).map_err(|e| config_err("<override>", e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.superpixel.validate()?;
        let l = &self.labeling;
        if !(0.0 <= l.tau_neg && l.tau_neg < l.tau_pos && l.tau_pos <= 1.0) {
            return Err(config_err("labeling", "need 0 <= tau_neg < tau_pos <= 1"));
        }
        if !(0.0..=1.0).contains(&l.oracle_tau) {
            return Err(config_err("labeling.oracle_tau", "must lie in [0, 1]"));
        }
        if self.patch.size == 0 || self.patch.stride == 0 {
            return Err(config_err("patch", "size and stride must be positive"));
        }
        if !(self.kde.bandwidth > 0.0) {
            return Err(config_err("kde.bandwidth", "must be positive"));
        }
        if !(self.kde.neg_fraction > 0.0 && self.kde.neg_fraction <= 1.0) {
            return Err(config_err("kde.neg_fraction", "must lie in (0, 1]"));
        }
        for (name, f) in [
            ("patch_forest", &self.patch_forest),
            ("cascade.forest", &self.cascade.forest),
        ] {
            f.with_seed(0).validate().map_err(|e| match e {
                Error::Config { field, msg } => config_err(&format!("{name}.{field}"), msg),
                e => e,
            })?;
        }
        self.cnn.architecture().shapes()?;
        if self.cnn.stride == 0 || self.cnn.batch == 0 || self.cnn.patches_per_superpixel == 0 {
            return Err(config_err(
                "cnn",
                "stride, batch and patches_per_superpixel must be positive",
            ));
        }
        if !(self.cnn.lr >= 0.0) || !(0.0..1.0).contains(&self.cnn.momentum) {
            return Err(config_err("cnn", "lr must be >= 0 and momentum in [0, 1)"));
        }
        if !(self.cascade.recall_target > 0.0 && self.cascade.recall_target <= 1.0) {
            return Err(config_err("cascade.recall_target", "must lie in (0, 1]"));
        }
        let g = &self.cascade.theta_grid;
        crate::cascade::threshold_grid(g.start, g.stop, g.step)?;
        if self.cv.folds < 2 {
            return Err(config_err("cv.folds", "need at least 2 folds"));
        }
        Ok(())
    }

    /// Dotted paths whose values differ from the defaults.
    pub fn deviations(&self) -> Vec<String> {
        let a = serde_json::to_value(self).expect("config serializes");
        let b = serde_json::to_value(PipelineConfig::default()).expect("config serializes");
        let mut out = Vec::new();
        diff("", &a, &b, &mut out);
        out
    }

    pub fn log_deviations(&self) {
        for d in self.deviations() {
            info!("config deviates from default: {d}");
        }
    }

    pub fn stage_seed(&self, stage: &str, fold: Option<usize>) -> u64 {
        derive_seed(self.seed, stage, fold.map_or(u64::MAX, |f| f as u64))
    }
}

fn diff(prefix: &str, a: &Value, b: &Value, out: &mut Vec<String>) {
    match (a, b) {
        (Value::Object(ma), Value::Object(mb)) => {
            for (k, va) in ma {
                let p = if prefix.is_empty() {
                    k.clone()
                } else {
                    format!("{prefix}.{k}")
                };
                match mb.get(k) {
                    Some(vb) => diff(&p, va, vb, out),
                    None => out.push(format!("{p} = {va}")),
                }
            }
        }
        _ if a != b => out.push(format!("{prefix} = {a} (default {b})")),
        _ => {}
    }
}

/// Volume-level split into `k` folds: ids are shuffled with `seed`, then
/// dealt round-robin.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FoldPlan {
    pub folds: Vec<Vec<String>>,
}

impl FoldPlan {
    pub fn new(ids: &[String], k: usize, seed: u64) -> Result<Self> {
        if k < 2 || ids.len() < k {
            return Err(config_err(
                "cv.folds",
                format!("cannot split {} volumes into {k} folds", ids.len()),
            ));
        }
        let mut sorted = ids.to_vec();
        sorted.sort();
        if sorted.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::invalid("duplicate volume ids in corpus"));
        }
        sorted.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let mut folds = vec![Vec::new(); k];
        for (i, id) in sorted.into_iter().enumerate() {
            folds[i % k].push(id);
        }
        for f in &mut folds {
            f.sort();
        }
        Ok(FoldPlan { folds })
    }

    pub fn len(&self) -> usize {
        self.folds.len()
    }

    pub fn is_empty(&self) -> bool {
        self.folds.is_empty()
    }

    pub fn test_ids(&self, fold: usize) -> &[String] {
        &self.folds[fold]
    }

    pub fn train_ids(&self, fold: usize) -> Vec<String> {
        let mut ids: Vec<String> = self
            .folds
            .iter()
            .enumerate()
            .filter(|(i, _)| *i != fold)
            .flat_map(|(_, f)| f.iter().cloned())
            .collect();
        ids.sort();
        ids
    }

    pub fn fold_of(&self, id: &str) -> Option<usize> {
        self.folds.iter().position(|f| f.iter().any(|x| x == id))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate_and_roundtrip() {
        let c = PipelineConfig::default();
        c.validate().unwrap();
        assert_eq!(PipelineConfig::from_json(&c.to_json()).unwrap(), c);
        assert!(c.deviations().is_empty());
        assert_eq!(c.patch.size, 25);
        assert_eq!(c.patch_forest.trees, 50);
        assert_eq!(c.kde.bandwidth, 3.039);
    }

    #[test]
    fn dotted_overrides() {
        let c = PipelineConfig::default()
            .with_overrides(&[
                "cv.folds=3".into(),
                "framework=f2".into(),
                "cascade.forest.trees=20".into(),
            ])
            .unwrap();
        assert_eq!(c.cv.folds, 3);
        assert_eq!(c.framework, Framework::F2);
        assert_eq!(c.cascade.forest.trees, 20);
        assert_eq!(c.deviations().len(), 3);
        let e = PipelineConfig::default()
            .with_overrides(&["cv.nope=1".into()])
            .unwrap_err();
        assert_eq!(e.exit_code(), 2);
        let e = PipelineConfig::default()
            .with_overrides(&["labeling.tau_neg=0.7".into()])
            .unwrap_err();
        assert!(matches!(e, Error::Config { .. }));
    }

    #[test]
    fn unknown_fields_are_rejected() {
        assert!(PipelineConfig::from_json(r#"{"patch": {"sise": 3}}"#).is_err());
        assert_eq!(
            PipelineConfig::from_json("{}").unwrap(),
            PipelineConfig::default()
        );
    }

    #[test]
    fn fold_plan_partitions() {
        let ids: Vec<String> = (0..12).map(|i| format!("v{i:02}")).collect();
        let plan = FoldPlan::new(&ids, 3, 5).unwrap();
        let mut all: Vec<String> = plan.folds.iter().flatten().cloned().collect();
        all.sort();
        assert_eq!(all, ids);
        for f in 0..3 {
            assert_eq!(plan.test_ids(f).len(), 4);
            assert!(plan
                .train_ids(f)
                .iter()
                .all(|id| !plan.test_ids(f).contains(id)));
        }
        assert_eq!(plan, FoldPlan::new(&ids, 3, 5).unwrap());
        assert!(FoldPlan::new(&ids[..2], 3, 0).is_err());
    }
}
