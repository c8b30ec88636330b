//! Central finite-difference verification of backpropagation.

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{Mode, Network, Params};

/// Gradients smaller than this in magnitude are compared absolutely.
const REL_FLOOR: f64 = 1e-7;

/// |a − n| / max(|a|, |n|, 1e-7).
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_FLOOR)
}

#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckReport {
    /// (layer index, layer name, max relative error); the input gradient is
    /// reported with index `usize::MAX` and name "input".
    pub per_layer: Vec<(usize, &'static str, f64)>,
    pub max_rel_error: f64,
    pub checked: usize,
    /// Probes whose ±eps step crossed a ReLU kink or changed a max-pool
    /// winner; the central difference is no derivative there, so another
    /// coordinate was drawn instead.
    pub skipped: usize,
}

pub fn gradient_check(
    net: &Network<f64>,
    input: &[f64],
    label: bool,
    eps: f64,
    samples_per_layer: usize,
    seed: u64,
    mode: Mode,
) -> GradCheckReport {
    gradient_check_with(
        net,
        input,
        label,
        eps,
        samples_per_layer,
        seed,
        mode,
        |_, _| {},
    )
}

/// As [`gradient_check`], letting `tamper` modify the analytic parameter and
/// input gradients before comparison.
#[allow(clippy::too_many_arguments)]
pub fn gradient_check_with(
    net: &Network<f64>,
    input: &[f64],
    label: bool,
    eps: f64,
    samples_per_layer: usize,
    seed: u64,
    mode: Mode,
    tamper: impl FnOnce(&mut Params<f64>, &mut Vec<f64>),
) -> GradCheckReport {
    let (_, mut grads, mut dinput) = net.loss_and_grad(input, label, mode);
    tamper(&mut grads, &mut dinput);
    let (_, base) = net.loss_and_branches(input, label, mode);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report = GradCheckReport {
        per_layer: Vec::new(),
        max_rel_error: 0.0,
        checked: 0,
        skipped: 0,
    };
    // central difference of coordinate j, or None when the step leaves the
    // smooth piece containing the unperturbed point
    let central = |up_down: &mut dyn FnMut(f64) -> (f64, Vec<u32>)| {
        let (up, bu) = up_down(eps);
        let (down, bd) = up_down(-eps);
        if bu != base || bd != base {
            None
        } else {
            Some((up - down) / (2.0 * eps))
        }
    };
    let mut probe = net.clone();
    for (li, spec) in net.arch.layers.iter().enumerate() {
        let n = net.params[li].len();
        if n == 0 {
            continue;
        }
        let mut worst = 0.0f64;
        let mut accepted = 0;
        for j in sample(&mut rng, n, (4 * samples_per_layer).min(n)).into_iter() {
            if accepted == samples_per_layer {
                break;
            }
            let orig = probe.params[li][j];
            let mut step = |d: f64| {
                probe.params[li][j] = orig + d;
                let r = probe.loss_and_branches(input, label, mode);
                probe.params[li][j] = orig;
                r
            };
            match central(&mut step) {
                Some(num) => {
                    worst = worst.max(relative_error(grads[li][j], num));
                    accepted += 1;
                    report.checked += 1;
                }
                None => report.skipped += 1,
            }
        }
        report.per_layer.push((li, spec.name(), worst));
    }
    let mut x = input.to_vec();
    let mut worst = 0.0f64;
    let mut accepted = 0;
    for j in sample(&mut rng, x.len(), (4 * samples_per_layer).min(x.len())).into_iter() {
        if accepted == samples_per_layer {
            break;
        }
        let orig = x[j];
        let mut step = |d: f64| {
            x[j] = orig + d;
            let r = net.loss_and_branches(&x, label, mode);
            x[j] = orig;
            r
        };
        match central(&mut step) {
            Some(num) => {
                worst = worst.max(relative_error(dinput[j], num));
                accepted += 1;
                report.checked += 1;
            }
            None => report.skipped += 1,
        }
    }
    report.per_layer.push((usize::MAX, "input", worst));
    report.max_rel_error = report.per_layer.iter().map(|r| r.2).fold(0.0, f64::max);
    report
}

#[cfg(test)]
mod tests {
    use super::super::{Architecture, LayerSpec};
    use super::*;
    use rand::Rng;

    fn random_input(len: usize, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..len).map(|_| rng.random::<f64>()).collect()
    }

    fn tiny(layers: Vec<LayerSpec>, size: usize) -> Network<f64> {
        Network::new(
            Architecture {
                input_size: size,
                layers,
            },
            5,
        )
        .unwrap()
    }

    #[test]
    fn dense_only_passes() {
        let net = tiny(vec![LayerSpec::Dense { units: 2 }], 4);
        let x = random_input(net.input_len(), 1);
        let r = gradient_check(&net, &x, true, 1e-4, 200, 0, Mode::Eval);
        assert!(r.max_rel_error < 1e-4, "{r:?}");
    }

    #[test]
    fn scaled_gradient_is_caught() {
        let net = tiny(
            vec![
                LayerSpec::Conv {
                    filters: 2,
                    kernel: 3,
                },
                LayerSpec::Relu,
                LayerSpec::Dense { units: 2 },
            ],
            6,
        );
        let x = random_input(net.input_len(), 2);
        let r = gradient_check_with(&net, &x, false, 1e-4, 200, 0, Mode::Eval, |g, _| {
            g[0].iter_mut().for_each(|v| *v *= 1.1)
        });
        assert!(r.max_rel_error > 1e-2, "{r:?}");
    }

    #[test]
    fn probes_across_a_relu_kink_are_skipped() {
        let net = tiny(vec![LayerSpec::Relu, LayerSpec::Dense { units: 2 }], 1);
        // the first input sits 5e-5 from the kink, inside the ±1e-4 step
        let x = vec![5e-5, 0.3, -0.2];
        let r = gradient_check(&net, &x, true, 1e-4, 200, 0, Mode::Eval);
        assert_eq!(r.skipped, 1, "{r:?}");
        assert!(r.max_rel_error < 1e-6, "{r:?}");
        let far = vec![0.5, 0.3, -0.2];
        assert_eq!(
            gradient_check(&net, &far, true, 1e-4, 200, 0, Mode::Eval).skipped,
            0
        );
    }
}
