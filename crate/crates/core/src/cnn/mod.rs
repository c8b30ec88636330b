//! Convolutional patch classifier over 2.5D patches (axial, coronal and
//! sagittal planes through one voxel) with a 2-way softmax output.

mod gradcheck;
mod layers;

pub use gradcheck::{gradient_check, gradient_check_with, relative_error, GradCheckReport};
pub use layers::{softmax2, LayerSpec, Mode, Real, Shape};

use std::path::Path;

use log::info;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::forest::Reader;
use crate::seed::mix;
use crate::volume::io::{read_file, write_atomic};
use crate::volume::{Volume3D, MAX_INTENSITY};
use layers::*;

const MAGIC: &[u8; 4] = b"CSNN";
const VERSION: u32 = 1;
pub const PATCH_CHANNELS: usize = 3;

/// Three s×s planes through one voxel, channel-major, scaled by 1/4095.
#[derive(Clone, Debug, PartialEq)]
pub struct Patch25D {
    pub size: usize,
    pub data: Vec<f32>,
    /// Some samples fell outside the volume and were edge-clamped.
    pub clamped: bool,
}

impl Patch25D {
    /// Plane `c` (0 axial, 1 coronal, 2 sagittal), row-major.
    pub fn plane(&self, c: usize) -> &[f32] {
        let n = self.size * self.size;
        &self.data[c * n..(c + 1) * n]
    }
}

/// Planes centered on voxel `index`: axial rows run along y and columns
/// along x; coronal rows along z, columns along x; sagittal rows along z,
/// columns along y. Plane coordinate `u` maps to `center + u − s/2`.
pub fn extract_25d_patch(v: &Volume3D, index: usize, s: usize) -> Result<Patch25D> {
    let [nx, ny, nz] = v.dims();
    if index >= nx * ny * nz {
        return Err(Error::invalid(format!("voxel {index} outside volume")));
    }
    if s == 0 {
        return Err(Error::invalid("patch size must be positive"));
    }
    let (cx, cy, cz) = (
        (index % nx) as isize,
        ((index / nx) % ny) as isize,
        (index / (nx * ny)) as isize,
    );
    let half = (s / 2) as isize;
    let scale = MAX_INTENSITY as f32;
    let mut clamped = false;
    let mut at = |x: isize, y: isize, z: isize| {
        let xc = x.clamp(0, nx as isize - 1);
        let yc = y.clamp(0, ny as isize - 1);
        let zc = z.clamp(0, nz as isize - 1);
        clamped |= xc != x || yc != y || zc != z;
        v.get(xc as usize, yc as usize, zc as usize) as f32 / scale
    };
    let mut data = Vec::with_capacity(PATCH_CHANNELS * s * s);
    for r in 0..s as isize {
        for u in 0..s as isize {
            data.push(at(cx + u - half, cy + r - half, cz));
        }
    }
    for r in 0..s as isize {
        for u in 0..s as isize {
            data.push(at(cx + u - half, cy, cz + r - half));
        }
    }
    for r in 0..s as isize {
        for u in 0..s as isize {
            data.push(at(cx, cy + u - half, cz + r - half));
        }
    }
    Ok(Patch25D {
        size: s,
        data,
        clamped,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Preset {
    Desk,
    Full,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Architecture {
    pub input_size: usize,
    pub layers: Vec<LayerSpec>,
}

impl Architecture {
    pub fn preset(p: Preset) -> Self {
        match p {
            Preset::Desk => Self::desk(),
            Preset::Full => Self::full(),
        }
    }

    /// conv5×5(8) → pool → conv3×3(16) → pool → dropout → FC(2) on 32×32.
    pub fn desk() -> Self {
        use LayerSpec::*;
        Architecture {
            input_size: 32,
            layers: vec![
                Conv {
                    filters: 8,
                    kernel: 5,
                },
                Relu,
                MaxPool,
                Conv {
                    filters: 16,
                    kernel: 3,
                },
                Relu,
                MaxPool,
                Dropout { rate: 0.5 },
                Dense { units: 2 },
            ],
        }
    }

    /// Five convolutions, three poolings and two fully connected layers on
    /// 64×64.
    pub fn full() -> Self {
        use LayerSpec::*;
        Architecture {
            input_size: 64,
            layers: vec![
                Conv {
                    filters: 32,
                    kernel: 5,
                },
                Relu,
                MaxPool,
                Conv {
                    filters: 32,
                    kernel: 5,
                },
                Relu,
                MaxPool,
                Conv {
                    filters: 64,
                    kernel: 3,
                },
                Relu,
                Conv {
                    filters: 64,
                    kernel: 3,
                },
                Relu,
                Conv {
                    filters: 64,
                    kernel: 3,
                },
                Relu,
                MaxPool,
                Dense { units: 256 },
                Relu,
                Dropout { rate: 0.5 },
                Dense { units: 2 },
            ],
        }
    }

    /// Input shape followed by each layer's output shape, plus parameter
    /// counts.
    pub fn shapes(&self) -> Result<(Vec<Shape>, Vec<usize>)> {
        let bad = |msg: String| Error::Config {
            field: "cnn.architecture".into(),
            msg,
        };
        if self.input_size == 0 {
            return Err(bad("input size must be positive".into()));
        }
        if self.layers.last() != Some(&LayerSpec::Dense { units: 2 }) {
            return Err(bad("the last layer must be a 2-unit dense layer".into()));
        }
        let mut shapes = vec![Shape {
            c: PATCH_CHANNELS,
            h: self.input_size,
            w: self.input_size,
        }];
        let mut counts = Vec::new();
        for (i, l) in self.layers.iter().enumerate() {
            let (s, n) = l
                .output(*shapes.last().expect("input shape"))
                .map_err(|m| bad(format!("layer {i}: {m}")))?;
            shapes.push(s);
            counts.push(n);
        }
        Ok((shapes, counts))
    }
}

/// Per-layer parameter vectors (weights then biases; empty for
/// parameter-free layers).
pub type Params<T> = Vec<Vec<T>>;

#[derive(Clone, Debug, PartialEq)]
pub struct Network<T: Real> {
    arch: Architecture,
    shapes: Vec<Shape>,
    params: Params<T>,
}

/// The f32 network used for training and inference.
pub type ConvNet = Network<f32>;

enum Aux<T> {
    None,
    Pool(Vec<u32>),
    Mask(Vec<T>),
}

/// -log softmax(z)[label], via log-sum-exp.
fn cross_entropy<T: Real>(z: [T; 2], label: bool) -> T {
    let m = if z[0] > z[1] { z[0] } else { z[1] };
    let lse = m + ((z[0] - m).exp() + (z[1] - m).exp()).ln();
    lse - z[label as usize]
}

struct Trace<T> {
    acts: Vec<Vec<T>>,
    aux: Vec<Aux<T>>,
}

impl<T: Real> Network<T> {
    /// He-normal weights, zero biases; the output layer starts with small
    /// weights (σ = 0.01) so initial predictions sit near (0.5, 0.5).
    pub fn new(arch: Architecture, seed: u64) -> Result<Self> {
        let (shapes, counts) = arch.shapes()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let last = arch.layers.len() - 1;
        let mut params = Vec::with_capacity(arch.layers.len());
        for (i, l) in arch.layers.iter().enumerate() {
            let mut p = vec![T::default(); counts[i]];
            let (n_weights, fan_in) = match *l {
                LayerSpec::Conv { filters, kernel } => {
                    let fan = shapes[i].c * kernel * kernel;
                    (filters * fan, fan)
                }
                LayerSpec::Dense { units } => (units * shapes[i].len(), shapes[i].len()),
                _ => (0, 1),
            };
            let sd = if i == last {
                0.01
            } else {
                (2.0 / fan_in as f64).sqrt()
            };
            let normal = Normal::new(0.0, sd).expect("positive sd");
            for w in p.iter_mut().take(n_weights) {
                *w = T::from_f64(normal.sample(&mut rng));
            }
            params.push(p);
        }
        Ok(Network {
            arch,
            shapes,
            params,
        })
    }

    pub fn from_params(arch: Architecture, params: Params<T>) -> Result<Self> {
        let (shapes, counts) = arch.shapes()?;
        let ok =
            params.len() == counts.len() && params.iter().zip(&counts).all(|(p, &n)| p.len() == n);
        if !ok {
            return Err(Error::Format(
                "parameter blobs do not match the architecture".into(),
            ));
        }
        Ok(Network {
            arch,
            shapes,
            params,
        })
    }

    pub fn architecture(&self) -> &Architecture {
        &self.arch
    }

    pub fn params(&self) -> &Params<T> {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut Params<T> {
        &mut self.params
    }

    pub fn input_size(&self) -> usize {
        self.arch.input_size
    }

    pub fn input_len(&self) -> usize {
        self.shapes[0].len()
    }

    pub fn cast<U: Real>(&self) -> Network<U> {
        Network {
            arch: self.arch.clone(),
            shapes: self.shapes.clone(),
            params: self
                .params
                .iter()
                .map(|p| p.iter().map(|v| U::from_f64(v.to_f64())).collect())
                .collect(),
        }
    }

    fn trace(&self, input: &[T], mode: Mode) -> Trace<T> {
        assert_eq!(input.len(), self.input_len(), "input length");
        let mut acts = vec![input.to_vec()];
        let mut aux = Vec::with_capacity(self.arch.layers.len());
        for (i, l) in self.arch.layers.iter().enumerate() {
            let x = acts.last().expect("activation");
            let s = self.shapes[i];
            let (y, a) = match *l {
                LayerSpec::Conv { filters, kernel } => (
                    conv_forward(x, s, &self.params[i], filters, kernel),
                    Aux::None,
                ),
                LayerSpec::Relu => (relu_forward(x), Aux::None),
                LayerSpec::MaxPool => {
                    let (y, arg) = pool_forward(x, s);
                    (y, Aux::Pool(arg))
                }
                LayerSpec::Dense { units } => (dense_forward(x, &self.params[i], units), Aux::None),
                LayerSpec::Dropout { rate } => match mode {
                    Mode::Eval => (x.clone(), Aux::None),
                    Mode::Train(seed) => {
                        let m: Vec<T> = dropout_mask(x.len(), rate, mix(&[seed, i as u64]));
                        (
                            x.iter().zip(&m).map(|(&a, &b)| a * b).collect(),
                            Aux::Mask(m),
                        )
                    }
                },
            };
            acts.push(y);
            aux.push(a);
        }
        Trace { acts, aux }
    }

    pub fn logits(&self, input: &[T], mode: Mode) -> [T; 2] {
        let t = self.trace(input, mode);
        let z = t.acts.last().expect("logits");
        [z[0], z[1]]
    }

    /// Class probabilities (negative, positive).
    pub fn forward(&self, input: &[T], mode: Mode) -> [T; 2] {
        softmax2(self.logits(input, mode))
    }

    /// Loss plus the branch every ReLU unit (active or not) and max-pool
    /// window (winning index) takes. Two inputs with equal branches lie on
    /// the same smooth piece of the network.
    pub fn loss_and_branches(&self, input: &[T], label: bool, mode: Mode) -> (T, Vec<u32>) {
        let t = self.trace(input, mode);
        let z = t.acts.last().expect("logits");
        let mut branches = Vec::new();
        for (i, l) in self.arch.layers.iter().enumerate() {
            match (l, &t.aux[i]) {
                (LayerSpec::Relu, _) => {
                    branches.extend(t.acts[i].iter().map(|&v| (v > T::default()) as u32))
                }
                (LayerSpec::MaxPool, Aux::Pool(arg)) => branches.extend_from_slice(arg),
                _ => {}
            }
        }
        (cross_entropy([z[0], z[1]], label), branches)
    }

    /// Cross-entropy loss, parameter gradients and the input gradient.
    pub fn loss_and_grad(&self, input: &[T], label: bool, mode: Mode) -> (T, Params<T>, Vec<T>) {
        let t = self.trace(input, mode);
        let z = t.acts.last().expect("logits");
        let p = softmax2([z[0], z[1]]);
        let y = label as usize;
        let loss = cross_entropy([z[0], z[1]], label);
        let one = T::from_f64(1.0);
        let mut d = vec![p[0], p[1]];
        d[y] = d[y] - one;
        let mut grads: Params<T> = self
            .params
            .iter()
            .map(|p| vec![T::default(); p.len()])
            .collect();
        for (i, l) in self.arch.layers.iter().enumerate().rev() {
            let x = &t.acts[i];
            let s = self.shapes[i];
            d = match (l, &t.aux[i]) {
                (LayerSpec::Conv { filters, kernel }, _) => {
                    conv_backward(x, s, &self.params[i], *filters, *kernel, &d, &mut grads[i])
                }
                (LayerSpec::Relu, _) => relu_backward(x, &d),
                (LayerSpec::MaxPool, Aux::Pool(arg)) => pool_backward(x.len(), arg, &d),
                (LayerSpec::Dense { units }, _) => {
                    dense_backward(x, &self.params[i], *units, &d, &mut grads[i])
                }
                (LayerSpec::Dropout { .. }, Aux::Mask(m)) => {
                    d.iter().zip(m).map(|(&a, &b)| a * b).collect()
                }
                (LayerSpec::Dropout { .. }, _) => d,
                (LayerSpec::MaxPool, _) => unreachable!("pool trace carries argmax"),
            };
        }
        (loss, grads, d)
    }
}

impl ConvNet {
    /// Positive-class probability in eval mode.
    pub fn predict(&self, p: &Patch25D) -> f64 {
        self.forward(&p.data, Mode::Eval)[1] as f64
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let header = serde_json::to_vec(&self.arch).expect("architecture serializes");
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(header.len() as u32).to_le_bytes());
        out.extend_from_slice(&header);
        for p in &self.params {
            out.extend_from_slice(&(p.len() as u32).to_le_bytes());
            for v in p {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(4)? != MAGIC {
            return Err(Error::Format("not a network model (bad magic)".into()));
        }
        let version = r.u32()?;
        if version != VERSION {
            return Err(Error::Format(format!(
                "unsupported network version {version}"
            )));
        }
        let hlen = r.u32()? as usize;
        let arch: Architecture = serde_json::from_slice(r.take(hlen)?)
            .map_err(|e| Error::Format(format!("network header: {e}")))?;
        let mut params = Vec::with_capacity(arch.layers.len());
        for _ in 0..arch.layers.len() {
            let n = r.u32()? as usize;
            let raw = r.take(
                n.checked_mul(4)
                    .ok_or_else(|| Error::Format("blob too large".into()))?,
            )?;
            params.push(
                raw.chunks_exact(4)
                    .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
                    .collect::<Vec<_>>(),
            );
        }
        if r.pos != bytes.len() {
            return Err(Error::Format("trailing bytes after network".into()));
        }
        Network::from_params(arch, params)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_atomic(path, &self.to_bytes())
    }

    pub fn load(path: &Path) -> Result<Self> {
        ConvNet::from_bytes(&read_file(path)?)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CnnHyper {
    pub lr: f64,
    pub momentum: f64,
    pub batch: usize,
    pub epochs: usize,
    pub seed: u64,
}

impl Default for CnnHyper {
    fn default() -> Self {
        CnnHyper {
            lr: 0.01,
            momentum: 0.9,
            batch: 32,
            epochs: 20,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct TrainLog {
    /// Mean training-mode loss seen during each epoch.
    pub loss: Vec<f64>,
    /// Eval-mode accuracy on the training set after each epoch.
    pub accuracy: Vec<f64>,
}

/// Per-sample gradients are summed in fixed chunks and the chunk sums are
/// added in order, so results do not depend on the thread count.
const GRAD_CHUNK: usize = 8;

/// Mini-batch SGD with momentum on softmax cross-entropy.
pub fn train_cnn(
    arch: &Architecture,
    patches: &[Patch25D],
    labels: &[bool],
    hyper: &CnnHyper,
) -> Result<(ConvNet, TrainLog)> {
    if patches.len() != labels.len() {
        return Err(Error::DimMismatch(format!(
            "{} patches, {} labels",
            patches.len(),
            labels.len()
        )));
    }
    let pos = labels.iter().filter(|&&l| l).count();
    if pos == 0 || pos == labels.len() {
        return Err(Error::SingleClass {
            positives: pos,
            negatives: labels.len() - pos,
        });
    }
    if hyper.batch == 0 || !(hyper.lr >= 0.0) || !(0.0..1.0).contains(&hyper.momentum) {
        return Err(Error::Config {
            field: "cnn.optimizer".into(),
            msg: "batch must be positive, lr non-negative and momentum in [0, 1)".into(),
        });
    }
    if let Some(p) = patches.iter().find(|p| p.size != arch.input_size) {
        return Err(Error::DimMismatch(format!(
            "patch size {} vs network input {}",
            p.size, arch.input_size
        )));
    }
    let mut net = ConvNet::new(arch.clone(), mix(&[hyper.seed, 0]))?;
    let mut velocity: Params<f32> = net.params.iter().map(|p| vec![0.0; p.len()]).collect();
    let mut order: Vec<usize> = (0..patches.len()).collect();
    let mut log = TrainLog::default();
    let (lr, mu) = (hyper.lr as f32, hyper.momentum as f32);
    for epoch in 0..hyper.epochs {
        order.sort_unstable();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(mix(&[
            hyper.seed,
            1,
            epoch as u64,
        ])));
        let mut loss_sum = 0.0f64;
        for (b, batch) in order.chunks(hyper.batch).enumerate() {
            let base = b * hyper.batch;
            let chunks: Vec<(f64, Params<f32>)> = batch
                .par_chunks(GRAD_CHUNK)
                .enumerate()
                .map(|(ci, chunk)| {
                    let mut acc: Params<f32> =
                        net.params.iter().map(|p| vec![0.0; p.len()]).collect();
                    let mut loss = 0.0f64;
                    for (k, &i) in chunk.iter().enumerate() {
                        let seed = mix(&[
                            hyper.seed,
                            2,
                            epoch as u64,
                            (base + ci * GRAD_CHUNK + k) as u64,
                        ]);
                        let (l, g, _) =
                            net.loss_and_grad(&patches[i].data, labels[i], Mode::Train(seed));
                        loss += l as f64;
                        for (a, gl) in acc.iter_mut().zip(&g) {
                            a.iter_mut().zip(gl).for_each(|(x, y)| *x += *y);
                        }
                    }
                    (loss, acc)
                })
                .collect();
            let scale = 1.0 / batch.len() as f32;
            let mut total: Params<f32> = net.params.iter().map(|p| vec![0.0; p.len()]).collect();
            for (l, g) in chunks {
                loss_sum += l;
                for (t, gl) in total.iter_mut().zip(&g) {
                    t.iter_mut().zip(gl).for_each(|(x, y)| *x += *y);
                }
            }
            for ((p, v), g) in net.params.iter_mut().zip(velocity.iter_mut()).zip(&total) {
                for ((pw, vw), gw) in p.iter_mut().zip(v.iter_mut()).zip(g) {
                    *vw = mu * *vw - lr * (*gw * scale);
                    *pw += *vw;
                }
            }
        }
        let mean_loss = loss_sum / patches.len() as f64;
        if !mean_loss.is_finite() {
            return Err(Error::Numeric(format!(
                "training loss diverged at epoch {}",
                epoch + 1
            )));
        }
        let correct = patches
            .par_iter()
            .zip(labels)
            .filter(|(p, &l)| (net.predict(p) >= 0.5) == l)
            .count();
        let acc = correct as f64 / patches.len() as f64;
        info!(
            "cnn epoch {}: loss {:.4} accuracy {:.3}",
            epoch + 1,
            mean_loss,
            acc
        );
        log.loss.push(mean_loss);
        log.accuracy.push(acc);
    }
    Ok((net, log))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::volume::Spacing;

    fn separable_set(n: usize, s: usize) -> (Vec<Patch25D>, Vec<bool>) {
        (0..n)
            .map(|i| {
                let bright = i % 2 == 0;
                let v = if bright { 0.8 } else { 0.1 } + (i as f32 * 0.37).fract() * 0.05;
                (
                    Patch25D {
                        size: s,
                        data: vec![v; 3 * s * s],
                        clamped: false,
                    },
                    bright,
                )
            })
            .unzip()
    }

    #[test]
    fn planes_share_center() {
        let dims = [7, 6, 5];
        let values: Vec<i16> = (0..7 * 6 * 5).map(|i| (i * 13 % 4096) as i16).collect();
        let v = Volume3D::new(dims, Spacing::default(), values).unwrap();
        let idx = v.index(3, 2, 1);
        let p = extract_25d_patch(&v, idx, 4).unwrap();
        let center = v.get(3, 2, 1) as f32 / 4095.0;
        for c in 0..3 {
            assert_eq!(p.plane(c)[2 * 4 + 2], center);
        }
        assert!(p.clamped);
        assert!(extract_25d_patch(&v, 7 * 6 * 5, 4).is_err());
    }

    #[test]
    fn corner_patch_matches_padded_oracle() {
        let dims = [4, 4, 3];
        let values: Vec<i16> = (0..48).map(|i| (i * 71 % 4096) as i16).collect();
        let v = Volume3D::new(dims, Spacing::default(), values).unwrap();
        let s = 6;
        let p = extract_25d_patch(&v, 0, s).unwrap();
        // explicit edge padding by 3 on every side, then crop around (3,3,3)
        let pad = 3isize;
        let padded = |x: isize, y: isize, z: isize| {
            let c = |a: isize, n: usize| (a - pad).clamp(0, n as isize - 1) as usize;
            v.get(c(x, 4), c(y, 4), c(z, 3)) as f32 / 4095.0
        };
        for r in 0..s as isize {
            for u in 0..s as isize {
                assert_eq!(p.plane(0)[(r * 6 + u) as usize], padded(u, r, pad));
                assert_eq!(p.plane(1)[(r * 6 + u) as usize], padded(u, pad, r));
                assert_eq!(p.plane(2)[(r * 6 + u) as usize], padded(pad, u, r));
            }
        }
    }

    #[test]
    fn zero_output_layer_gives_one_half() {
        let mut net = ConvNet::new(Architecture::desk(), 1).unwrap();
        let last = net.params.len() - 1;
        net.params[last].iter_mut().for_each(|w| *w = 0.0);
        let x = vec![0.3f32; net.input_len()];
        assert_eq!(net.forward(&x, Mode::Eval), [0.5, 0.5]);
        let q = net.forward(&x, Mode::Train(4));
        assert!((q[0] + q[1] - 1.0).abs() < 1e-6);
    }

    #[test]
    fn zero_learning_rate_keeps_weights() {
        let (p, l) = separable_set(16, 32);
        let hyper = CnnHyper {
            lr: 0.0,
            epochs: 2,
            ..CnnHyper::default()
        };
        let (net, _) = train_cnn(&Architecture::desk(), &p, &l, &hyper).unwrap();
        let init = ConvNet::new(Architecture::desk(), mix(&[hyper.seed, 0])).unwrap();
        assert_eq!(net, init);
    }

    #[test]
    fn model_bytes_roundtrip() {
        let net = ConvNet::new(Architecture::desk(), 9).unwrap();
        let bytes = net.to_bytes();
        assert_eq!(ConvNet::from_bytes(&bytes).unwrap(), net);
        assert!(ConvNet::from_bytes(&bytes[..bytes.len() - 1]).is_err());
        assert!(ConvNet::from_bytes(b"CSRF").is_err());
    }

    #[test]
    fn desk_network_gradient_check() {
        let net: Network<f64> = ConvNet::new(Architecture::desk(), 11).unwrap().cast();
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let x: Vec<f64> = (0..net.input_len())
            .map(|_| rand::Rng::random::<f64>(&mut rng))
            .collect();
        for (label, mode) in [(true, Mode::Eval), (false, Mode::Train(3))] {
            let r = gradient_check(&net, &x, label, 1e-4, 200, 1, mode);
            assert!(r.max_rel_error < 1e-4, "{r:?}");
            assert!(r.per_layer.iter().filter(|l| l.1 == "conv").count() == 2);
        }
    }

    #[test]
    fn separable_patches_reach_full_accuracy() {
        let (p, l) = separable_set(64, 32);
        let (_, log) = train_cnn(&Architecture::desk(), &p, &l, &CnnHyper::default()).unwrap();
        assert!(
            (log.loss[0] - std::f64::consts::LN_2).abs() < 0.1,
            "{:?}",
            log.loss
        );
        assert_eq!(*log.accuracy.last().unwrap(), 1.0, "{:?}", log.accuracy);
    }

    #[test]
    fn inverted_dropout_matches_eval_in_expectation() {
        let arch = Architecture {
            input_size: 2,
            layers: vec![
                LayerSpec::Dropout { rate: 0.5 },
                LayerSpec::Dense { units: 2 },
            ],
        };
        let mut net = ConvNet::new(arch, 0).unwrap();
        net.params[1] = (0..26)
            .map(|i| ((i * 7) % 5) as f32 * 0.02 - 0.04)
            .collect();
        let x: Vec<f32> = (0..12).map(|i| 0.1 + 0.05 * i as f32).collect();
        let eval = net.forward(&x, Mode::Eval)[1] as f64;
        let draws = 10_000;
        let mean = (0..draws)
            .map(|k| net.forward(&x, Mode::Train(k)).into_iter().nth(1).unwrap() as f64)
            .sum::<f64>()
            / draws as f64;
        assert!((mean - eval).abs() / eval < 0.02, "{mean} vs {eval}");
    }

    #[test]
    fn full_preset_is_consistent() {
        let (shapes, counts) = Architecture::full().shapes().unwrap();
        assert_eq!(shapes.last().unwrap().len(), 2);
        assert_eq!(counts.iter().filter(|&&n| n > 0).count(), 7);
        let convs = Architecture::full()
            .layers
            .iter()
            .filter(|l| matches!(l, LayerSpec::Conv { .. }))
            .count();
        assert_eq!(convs, 5);
    }
}
