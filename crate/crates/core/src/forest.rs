//! Binary random forest with class-balanced sample weights.
//!
//! Each class carries total weight 0.5 (`w_c = 1 / (2 · count_c)`), splits
//! minimize the weighted Gini impurity of the children, and leaves store the
//! weighted positive fraction of their bootstrap samples.

use std::path::Path;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::volume::io::{f32_from_payload, f32_payload, read_file, write_atomic};

const MAGIC: &[u8; 4] = b"CSRF";
const VERSION: u32 = 1;
const LEAF: u16 = u16::MAX;

/// Row-major `f32` samples with 0/1 labels.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureMatrix {
    cols: usize,
    data: Vec<f32>,
    labels: Vec<u8>,
}

#[derive(Serialize, Deserialize)]
struct MatrixHeader {
    rows: usize,
    cols: usize,
    dtype: String,
    label_col: String,
}

impl FeatureMatrix {
    pub fn new(cols: usize, data: Vec<f32>, labels: Vec<u8>) -> Result<Self> {
        if cols == 0 || data.len() != cols * labels.len() {
            return Err(Error::DimMismatch(format!(
                "{} values for {} rows of {} columns",
                data.len(),
                labels.len(),
                cols
            )));
        }
        if labels.iter().any(|&l| l > 1) {
            return Err(Error::invalid("labels must be 0 or 1"));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric("non-finite feature value".into()));
        }
        Ok(FeatureMatrix { cols, data, labels })
    }

    pub fn empty(cols: usize) -> Self {
        FeatureMatrix {
            cols,
            data: Vec::new(),
            labels: Vec::new(),
        }
    }

    pub fn push(&mut self, row: &[f32], label: bool) {
        assert_eq!(row.len(), self.cols, "row width");
        self.data.extend_from_slice(row);
        self.labels.push(label as u8);
    }

    pub fn append(&mut self, other: &FeatureMatrix) -> Result<()> {
        if other.cols != self.cols {
            return Err(Error::DimMismatch(format!(
                "{} vs {} columns",
                self.cols, other.cols
            )));
        }
        self.data.extend_from_slice(&other.data);
        self.labels.extend_from_slice(&other.labels);
        Ok(())
    }

    pub fn rows(&self) -> usize {
        self.labels.len()
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn label(&self, i: usize) -> bool {
        self.labels[i] == 1
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    pub fn class_counts(&self) -> (usize, usize) {
        let pos = self.labels.iter().filter(|&&l| l == 1).count();
        (pos, self.labels.len() - pos)
    }

    /// Writes `<base>.json`, `<base>.raw` (f32le) and `<base>.labels.u8`.
    pub fn save(&self, base: &Path) -> Result<()> {
        let (json, raw) = crate::volume::io::pair_paths(base);
        let label_path = labels_path(base);
        let header = MatrixHeader {
            rows: self.rows(),
            cols: self.cols,
            dtype: "f32le".into(),
            label_col: label_path
                .file_name()
                .map(|n| n.to_string_lossy().into_owned())
                .unwrap_or_default(),
        };
        write_atomic(&raw, &f32_payload(&self.data))?;
        write_atomic(&label_path, &self.labels)?;
        let text = serde_json::to_vec_pretty(&header).map_err(|e| Error::Format(e.to_string()))?;
        write_atomic(&json, &text)
    }

    pub fn load(base: &Path) -> Result<Self> {
        let (json, raw) = crate::volume::io::pair_paths(base);
        let header: MatrixHeader =
            serde_json::from_slice(&read_file(&json)?).map_err(|e| Error::Header {
                path: json.clone(),
                msg: e.to_string(),
            })?;
        if header.dtype != "f32le" {
            return Err(Error::Header {
                path: json,
                msg: format!("feature dtype {} is not f32le", header.dtype),
            });
        }
        let payload = read_file(&raw)?;
        if payload.len() != header.rows * header.cols * 4 {
            return Err(Error::PayloadSize {
                expected: header.rows * header.cols * 4,
                found: payload.len(),
            });
        }
        let labels = read_file(&json.with_file_name(&header.label_col))?;
        if labels.len() != header.rows {
            return Err(Error::PayloadSize {
                expected: header.rows,
                found: labels.len(),
            });
        }
        FeatureMatrix::new(header.cols, f32_from_payload(&payload), labels)
    }
}

fn labels_path(base: &Path) -> std::path::PathBuf {
    let (json, _) = crate::volume::io::pair_paths(base);
    let stem = json
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    json.with_file_name(format!("{stem}.labels.u8"))
}

/// Minimum number of (bootstrap) samples on each side of a split.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MinLeaf {
    /// max(1, ceil(0.2% of the training rows)).
    Auto,
    Fixed(usize),
}

impl MinLeaf {
    pub fn resolve(self, rows: usize) -> usize {
        match self {
            MinLeaf::Auto => (rows * 2).div_ceil(1000).max(1),
            MinLeaf::Fixed(n) => n.max(1),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ForestConfig {
    pub trees: usize,
    pub min_leaf: MinLeaf,
    /// Features tried per split; `None` means ceil(sqrt(d)).
    pub max_features: Option<usize>,
    pub max_depth: Option<usize>,
    pub bootstrap: bool,
    pub seed: u64,
}

impl Default for ForestConfig {
    fn default() -> Self {
        ForestConfig {
            trees: 50,
            min_leaf: MinLeaf::Auto,
            max_features: None,
            max_depth: None,
            bootstrap: true,
            seed: 0,
        }
    }
}

impl ForestConfig {
    pub fn validate(&self) -> Result<()> {
        if self.trees == 0 {
            return Err(Error::Config {
                field: "trees".into(),
                msg: "must be at least 1".into(),
            });
        }
        if self.max_features == Some(0) {
            return Err(Error::Config {
                field: "max_features".into(),
                msg: "must be at least 1".into(),
            });
        }
        Ok(())
    }
}

/// Flat node: internal nodes route `x[feature] <= threshold` to `left`;
/// leaves use `feature == 0xFFFF` and keep their probability in `threshold`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Node {
    pub feature: u16,
    pub threshold: f32,
    pub left: u32,
    pub right: u32,
}

impl Node {
    pub fn leaf(p: f32) -> Self {
        Node {
            feature: LEAF,
            threshold: p,
            left: 0,
            right: 0,
        }
    }

    pub fn is_leaf(&self) -> bool {
        self.feature == LEAF
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Tree {
    nodes: Vec<Node>,
}

impl Tree {
    pub fn leaf(p: f32) -> Self {
        Tree {
            nodes: vec![Node::leaf(p)],
        }
    }

    pub fn stump(feature: u16, threshold: f32, left: f32, right: f32) -> Self {
        Tree {
            nodes: vec![
                Node {
                    feature,
                    threshold,
                    left: 1,
                    right: 2,
                },
                Node::leaf(left),
                Node::leaf(right),
            ],
        }
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn predict(&self, x: &[f32]) -> f32 {
        let mut n = &self.nodes[0];
        while !n.is_leaf() {
            let next = if x[n.feature as usize] <= n.threshold {
                n.left
            } else {
                n.right
            };
            n = &self.nodes[next as usize];
        }
        n.threshold
    }

    fn validate(&self, n_features: usize) -> Result<()> {
        if self.nodes.is_empty() {
            return Err(Error::Format("tree without nodes".into()));
        }
        for (i, n) in self.nodes.iter().enumerate() {
            if n.is_leaf() {
                if !(0.0..=1.0).contains(&n.threshold) {
                    return Err(Error::Format(format!("leaf probability {}", n.threshold)));
                }
                continue;
            }
            // children always follow their parent, so every path terminates
            let ok = (n.feature as usize) < n_features
                && (n.left as usize) > i
                && (n.right as usize) > i
                && (n.left as usize) < self.nodes.len()
                && (n.right as usize) < self.nodes.len()
                && n.threshold.is_finite();
            if !ok {
                return Err(Error::Format(format!("malformed node {i}")));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ForestModel {
    n_features: usize,
    config: ForestConfig,
    trees: Vec<Tree>,
}

#[derive(Serialize, Deserialize)]
struct ModelHeader {
    n_features: usize,
    config: ForestConfig,
}

impl ForestModel {
    pub fn from_trees(n_features: usize, config: ForestConfig, trees: Vec<Tree>) -> Result<Self> {
        if trees.is_empty() {
            return Err(Error::Format("forest without trees".into()));
        }
        if n_features >= LEAF as usize {
            return Err(Error::invalid("too many features"));
        }
        for t in &trees {
            t.validate(n_features)?;
        }
        Ok(ForestModel {
            n_features,
            config,
            trees,
        })
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    pub fn config(&self) -> &ForestConfig {
        &self.config
    }

    pub fn trees(&self) -> &[Tree] {
        &self.trees
    }

    /// Mean positive-class probability over the trees.
    pub fn predict_proba(&self, x: &[f32]) -> Result<f64> {
        if x.len() != self.n_features {
            return Err(Error::DimMismatch(format!(
                "model expects {} features, got {}",
                self.n_features,
                x.len()
            )));
        }
        Ok(self.predict_unchecked(x))
    }

    pub(crate) fn predict_unchecked(&self, x: &[f32]) -> f64 {
        let sum: f64 = self.trees.iter().map(|t| t.predict(x) as f64).sum();
        (sum / self.trees.len() as f64).clamp(0.0, 1.0)
    }

    pub fn predict_matrix(&self, m: &FeatureMatrix) -> Result<Vec<f64>> {
        if m.cols() != self.n_features {
            return Err(Error::DimMismatch(format!(
                "model expects {} features, matrix has {}",
                self.n_features,
                m.cols()
            )));
        }
        Ok((0..m.rows())
            .into_par_iter()
            .map(|i| self.predict_unchecked(m.row(i)))
            .collect())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let header = serde_json::to_vec(&ModelHeader {
            n_features: self.n_features,
            config: self.config.clone(),
        })
        .expect("forest header serializes");
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(header.len() as u32).to_le_bytes());
        out.extend_from_slice(&header);
        out.extend_from_slice(&(self.trees.len() as u32).to_le_bytes());
        for t in &self.trees {
            out.extend_from_slice(&(t.nodes.len() as u32).to_le_bytes());
            for n in &t.nodes {
                out.extend_from_slice(&n.feature.to_le_bytes());
                out.extend_from_slice(&n.threshold.to_le_bytes());
                out.extend_from_slice(&n.left.to_le_bytes());
                out.extend_from_slice(&n.right.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(4)? != MAGIC {
            return Err(Error::Format("not a forest model (bad magic)".into()));
        }
        let version = r.u32()?;
        if version != VERSION {
            return Err(Error::Format(format!(
                "unsupported forest version {version}"
            )));
        }
        let hlen = r.u32()? as usize;
        let header: ModelHeader = serde_json::from_slice(r.take(hlen)?)
            .map_err(|e| Error::Format(format!("forest header: {e}")))?;
        let n_trees = r.u32()? as usize;
        let mut trees = Vec::with_capacity(n_trees.min(1 << 16));
        for _ in 0..n_trees {
            let n_nodes = r.u32()? as usize;
            let mut nodes = Vec::with_capacity(n_nodes.min(1 << 20));
            for _ in 0..n_nodes {
                let feature = r.u16()?;
                let threshold = f32::from_le_bytes(r.take(4)?.try_into().expect("4 bytes"));
                let left = r.u32()?;
                let right = r.u32()?;
                nodes.push(Node {
                    feature,
                    threshold,
                    left,
                    right,
                });
            }
            trees.push(Tree { nodes });
        }
        if r.pos != bytes.len() {
            return Err(Error::Format("trailing bytes after forest".into()));
        }
        ForestModel::from_trees(header.n_features, header.config, trees)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_atomic(path, &self.to_bytes())
    }

    pub fn load(path: &Path) -> Result<Self> {
        ForestModel::from_bytes(&read_file(path)?)
    }
}

pub(crate) struct Reader<'a> {
    pub bytes: &'a [u8],
    pub pos: usize,
}

impl<'a> Reader<'a> {
    pub fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| Error::Format("truncated model".into()))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    pub fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(
            self.take(2)?.try_into().expect("2 bytes"),
        ))
    }

    pub fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(
            self.take(4)?.try_into().expect("4 bytes"),
        ))
    }
}

/// Per-class weights `1 / (2 · count_c)` as `[negative, positive]`.
pub fn class_weights(labels: &[u8]) -> Result<[f64; 2]> {
    let pos = labels.iter().filter(|&&l| l == 1).count();
    let neg = labels.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(Error::SingleClass {
            positives: pos,
            negatives: neg,
        });
    }
    Ok([0.5 / neg as f64, 0.5 / pos as f64])
}

/// Weighted Gini impurity of a node holding `w0` negative and `w1` positive
/// weight.
pub fn gini(w0: f64, w1: f64) -> f64 {
    let t = w0 + w1;
    if t <= 0.0 {
        return 0.0;
    }
    let (p0, p1) = (w0 / t, w1 / t);
    1.0 - p0 * p0 - p1 * p1
}

/// Threshold between two consecutive distinct values, kept strictly below
/// `hi` so that `x <= thr` separates them after rounding to f32.
pub fn midpoint(lo: f32, hi: f32) -> f32 {
    let m = ((lo as f64 + hi as f64) / 2.0) as f32;
    if m >= hi {
        lo
    } else {
        m
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Split {
    pub feature: usize,
    pub threshold: f32,
    /// Weighted child impurity `(W_L·G_L + W_R·G_R) / W`.
    pub score: f64,
}

/// Sample occurrences reaching a node: row index and its weight.
type Occ = (u32, f64);

/// Best split of `occ` over `features` (ascending). Candidates are midpoints
/// between consecutive distinct values leaving at least `min_leaf`
/// occurrences per side; ties go to the lowest feature, then the lowest
/// threshold.
pub(crate) fn best_split(
    x: &FeatureMatrix,
    occ: &[Occ],
    features: &[usize],
    min_leaf: usize,
) -> Option<Split> {
    let (tot0, tot1) = class_mass(x, occ);
    let total = tot0 + tot1;
    let mut best: Option<Split> = None;
    let mut vals: Vec<(f32, u8, f64)> = Vec::with_capacity(occ.len());
    for &f in features {
        vals.clear();
        vals.extend(
            occ.iter()
                .map(|&(r, w)| (x.row(r as usize)[f], x.labels[r as usize], w)),
        );
        vals.sort_by(|a, b| a.0.total_cmp(&b.0));
        let (mut l0, mut l1) = (0.0, 0.0);
        for i in 0..vals.len() - 1 {
            if vals[i].1 == 1 {
                l1 += vals[i].2;
            } else {
                l0 += vals[i].2;
            }
            let (lo, hi) = (vals[i].0, vals[i + 1].0);
            if lo == hi || i + 1 < min_leaf || vals.len() - i - 1 < min_leaf {
                continue;
            }
            let (r0, r1) = (tot0 - l0, tot1 - l1);
            let score = ((l0 + l1) * gini(l0, l1) + (r0 + r1) * gini(r0, r1)) / total;
            if best.is_none_or(|b| score < b.score) {
                best = Some(Split {
                    feature: f,
                    threshold: midpoint(lo, hi),
                    score,
                });
            }
        }
    }
    best
}

fn class_mass(x: &FeatureMatrix, occ: &[Occ]) -> (f64, f64) {
    let (mut w0, mut w1) = (0.0, 0.0);
    for &(r, w) in occ {
        if x.labels[r as usize] == 1 {
            w1 += w;
        } else {
            w0 += w;
        }
    }
    (w0, w1)
}

fn leaf_probability(x: &FeatureMatrix, occ: &[Occ]) -> f32 {
    let (w0, w1) = class_mass(x, occ);
    if w0 + w1 <= 0.0 {
        0.5
    } else {
        (w1 / (w0 + w1)) as f32
    }
}

struct TreeBuilder<'a> {
    x: &'a FeatureMatrix,
    min_leaf: usize,
    m_try: usize,
    max_depth: usize,
    nodes: Vec<Node>,
}

impl TreeBuilder<'_> {
    fn build<R: Rng>(&mut self, occ: Vec<Occ>, depth: usize, rng: &mut R) -> u32 {
        let id = self.nodes.len() as u32;
        self.nodes.push(Node::leaf(leaf_probability(self.x, &occ)));
        let first = self.x.labels[occ[0].0 as usize];
        let pure = occ.iter().all(|&(r, _)| self.x.labels[r as usize] == first);
        if pure || depth >= self.max_depth || occ.len() < 2 * self.min_leaf {
            return id;
        }
        let d = self.x.cols();
        let mut features = sample(rng, d, self.m_try.min(d)).into_vec();
        features.sort_unstable();
        let Some(split) = best_split(self.x, &occ, &features, self.min_leaf) else {
            return id;
        };
        let (w0, w1) = class_mass(self.x, &occ);
        if split.score >= gini(w0, w1) {
            return id;
        }
        let (left, right): (Vec<Occ>, Vec<Occ>) = occ
            .into_iter()
            .partition(|&(r, _)| self.x.row(r as usize)[split.feature] <= split.threshold);
        let l = self.build(left, depth + 1, rng);
        let r = self.build(right, depth + 1, rng);
        self.nodes[id as usize] = Node {
            feature: split.feature as u16,
            threshold: split.threshold,
            left: l,
            right: r,
        };
        id
    }
}

/// Row order used for training: lexicographic on feature bits, then label,
/// so the fitted forest does not depend on how the rows were supplied.
fn canonical_order(x: &FeatureMatrix) -> Vec<u32> {
    let mut idx: Vec<u32> = (0..x.rows() as u32).collect();
    idx.sort_by(|&a, &b| {
        let (ra, rb) = (x.row(a as usize), x.row(b as usize));
        ra.iter()
            .zip(rb)
            .map(|(u, v)| u.total_cmp(v))
            .find(|o| o.is_ne())
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(x.labels[a as usize].cmp(&x.labels[b as usize]))
    });
    idx
}

pub fn train_forest(x: &FeatureMatrix, config: &ForestConfig) -> Result<ForestModel> {
    config.validate()?;
    if x.rows() == 0 {
        return Err(Error::invalid("empty training matrix"));
    }
    if x.cols() >= LEAF as usize {
        return Err(Error::invalid("too many features"));
    }
    let weights = class_weights(&x.labels)?;
    let order = canonical_order(x);
    let n = order.len();
    let min_leaf = config.min_leaf.resolve(n);
    let m_try = config
        .max_features
        .unwrap_or_else(|| (x.cols() as f64).sqrt().ceil() as usize)
        .clamp(1, x.cols());
    let trees: Vec<Tree> = (0..config.trees)
        .into_par_iter()
        .map(|t| {
            let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
            rng.set_stream(t as u64);
            let mut occ: Vec<Occ> = if config.bootstrap {
                (0..n)
                    .map(|_| order[rng.random_range(0..n)])
                    .collect::<Vec<_>>()
            } else {
                order.clone()
            }
            .into_iter()
            .map(|r| (r, weights[x.labels[r as usize] as usize]))
            .collect();
            // bootstrap rows in canonical order keep split sweeps reproducible
            occ.sort_by_key(|o| o.0);
            let mut b = TreeBuilder {
                x,
                min_leaf,
                m_try,
                max_depth: config.max_depth.unwrap_or(usize::MAX),
                nodes: Vec::new(),
            };
            b.build(occ, 0, &mut rng);
            Tree { nodes: b.nodes }
        })
        .collect();
    ForestModel::from_trees(x.cols(), config.clone(), trees)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_distr::{Distribution, Normal};

    fn stump_config() -> ForestConfig {
        ForestConfig {
            trees: 1,
            min_leaf: MinLeaf::Fixed(1),
            max_features: Some(usize::MAX),
            max_depth: Some(1),
            bootstrap: false,
            seed: 0,
        }
    }

    fn toy() -> FeatureMatrix {
        // 2 positives, 8 negatives over two features
        let rows: [([f32; 2], u8); 10] = [
            ([0.1, 5.0], 0),
            ([0.2, 3.0], 0),
            ([0.3, 4.0], 0),
            ([0.4, 1.0], 1),
            ([0.5, 6.0], 0),
            ([0.6, 2.0], 0),
            ([0.7, 7.0], 0),
            ([0.8, 1.5], 1),
            ([0.9, 8.0], 0),
            ([1.0, 9.0], 0),
        ];
        let mut m = FeatureMatrix::empty(2);
        for (r, l) in rows {
            m.push(&r, l == 1);
        }
        m
    }

    #[test]
    fn weighted_stump_separates_imbalanced_toy() {
        let model = train_forest(&toy(), &stump_config()).unwrap();
        let t = &model.trees()[0];
        assert_eq!(t.nodes()[0].feature, 1);
        assert_eq!(t.nodes()[0].threshold, 1.75);
        assert_eq!(model.predict_proba(&[0.0, 1.0]).unwrap(), 1.0);
        assert_eq!(model.predict_proba(&[0.0, 9.0]).unwrap(), 0.0);
    }

    #[test]
    fn duplicated_negatives_leave_leaves_unchanged() {
        let base = toy();
        let mut dup = FeatureMatrix::empty(2);
        for i in 0..base.rows() {
            let copies = if base.label(i) { 1 } else { 9 };
            for _ in 0..copies {
                dup.push(base.row(i), base.label(i));
            }
        }
        // feature 0 alone: no perfect split, so leaves are mixed
        let cfg = ForestConfig {
            max_features: Some(1),
            ..stump_config()
        };
        let only0 = |m: &FeatureMatrix| {
            let mut out = FeatureMatrix::empty(1);
            for i in 0..m.rows() {
                out.push(&m.row(i)[..1], m.label(i));
            }
            out
        };
        let a = train_forest(&only0(&base), &cfg).unwrap();
        let b = train_forest(&only0(&dup), &cfg).unwrap();
        let (ta, tb) = (&a.trees()[0], &b.trees()[0]);
        assert_eq!(ta.nodes()[0].threshold, tb.nodes()[0].threshold);
        for (na, nb) in ta.nodes().iter().zip(tb.nodes()) {
            assert!((na.threshold - nb.threshold).abs() <= 1e-6);
        }
    }

    #[test]
    fn identical_features_make_a_balanced_leaf() {
        let mut m = FeatureMatrix::empty(3);
        for i in 0..10 {
            m.push(&[1.0, 2.0, 3.0], i < 3);
        }
        let model = train_forest(&m, &stump_config()).unwrap();
        assert_eq!(model.trees()[0].nodes().len(), 1);
        assert!((model.predict_proba(&[0.0; 3]).unwrap() - 0.5).abs() < 1e-7);
    }

    #[test]
    fn gaussian_blobs_are_learned() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let noise = Normal::new(0.0, 1.0).unwrap();
        let mut m = FeatureMatrix::empty(2);
        for i in 0..200 {
            let c = if i % 2 == 0 { 3.0 } else { -3.0 };
            m.push(
                &[c + noise.sample(&mut rng), c + noise.sample(&mut rng)],
                i % 2 == 0,
            );
        }
        let model = train_forest(&m, &ForestConfig::default()).unwrap();
        let p = model.predict_matrix(&m).unwrap();
        let correct = (0..200).filter(|&i| (p[i] >= 0.5) == m.label(i)).count();
        assert!(correct as f64 / 200.0 >= 0.99, "{correct}");
    }

    #[test]
    fn hand_built_models() {
        let cfg = ForestConfig::default();
        let stump =
            ForestModel::from_trees(1, cfg.clone(), vec![Tree::stump(0, 0.5, 0.3, 0.9)]).unwrap();
        assert!((stump.predict_proba(&[0.1]).unwrap() - 0.3).abs() < 1e-7);
        let pair =
            ForestModel::from_trees(1, cfg, vec![Tree::leaf(0.25), Tree::leaf(0.75)]).unwrap();
        assert_eq!(pair.predict_proba(&[7.0]).unwrap(), 0.5);
        assert!(pair.predict_proba(&[1.0, 2.0]).is_err());
    }

    #[test]
    fn rejects_bad_training_input() {
        let mut m = FeatureMatrix::empty(1);
        assert!(train_forest(&m, &ForestConfig::default()).is_err());
        m.push(&[1.0], true);
        m.push(&[2.0], true);
        assert!(matches!(
            train_forest(&m, &ForestConfig::default()),
            Err(Error::SingleClass { .. })
        ));
    }

    #[test]
    fn bytes_roundtrip_and_corruption() {
        let model = train_forest(&toy(), &ForestConfig::default()).unwrap();
        let bytes = model.to_bytes();
        assert_eq!(ForestModel::from_bytes(&bytes).unwrap(), model);
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(ForestModel::from_bytes(&bad).is_err());
        assert!(ForestModel::from_bytes(&[]).is_err());
        assert!(ForestModel::from_bytes(&bytes[..bytes.len() - 3]).is_err());
    }

    #[test]
    fn matrix_file_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let m = toy();
        let base = dir.path().join("feats");
        m.save(&base).unwrap();
        assert!(dir.path().join("feats.labels.u8").exists());
        assert_eq!(FeatureMatrix::load(&base).unwrap(), m);
    }

    #[test]
    fn min_leaf_policy() {
        assert_eq!(MinLeaf::Auto.resolve(10), 1);
        assert_eq!(MinLeaf::Auto.resolve(1000), 2);
        assert_eq!(MinLeaf::Auto.resolve(1001), 3);
        assert_eq!(MinLeaf::Fixed(0).resolve(5), 1);
    }
}
