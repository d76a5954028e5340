//! Reference implementations written independently of the library kernels.
#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use ssdcnn::features::{Featurizer, SampleFeatures};
use ssdcnn::model::{Architecture, Model, ModelInput, VariantKind};
use ssdcnn::netspec::parse;
use ssdcnn::nn::{softmax_nll_grad, Network};
use ssdcnn::preprocess::PreprocessConfig;
use ssdcnn::synth::synth_dataset;

/// Direct nested-loop convolution on `(c, h, w)` input with `(c, k, k, f)`
/// weights. Terms are summed in `(c, ki, kj)` order from zero, zero inputs
/// skipped, bias added last; outputs whose window is all zero stay zero.
pub fn naive_conv(
    x: &[f32],
    (c, h, w): (usize, usize, usize),
    weight: &[f32],
    k: usize,
    f: usize,
    bias: &[f32],
) -> Vec<f32> {
    let (oh, ow) = (h - k + 1, w - k + 1);
    let at = |ch: usize, i: usize, j: usize| x[(ch * h + i) * w + j];
    let mut out = vec![0.0f32; f * oh * ow];
    for fi in 0..f {
        for i in 0..oh {
            for j in 0..ow {
                let mut any = false;
                let mut acc = 0.0f32;
                for ch in 0..c {
                    for ki in 0..k {
                        for kj in 0..k {
                            let v = at(ch, i + ki, j + kj);
                            if v != 0.0 {
                                any = true;
                                acc += v * weight[((ch * k + ki) * k + kj) * f + fi];
                            }
                        }
                    }
                }
                out[(fi * oh + i) * ow + j] = if any { (acc + bias[fi]).max(0.0) } else { 0.0 };
            }
        }
    }
    out
}

/// Max over each `p x p` window, scanning for the first strict maximum.
pub fn brute_pool(x: &[f32], (c, h, w): (usize, usize, usize), p: usize) -> (Vec<f32>, Vec<usize>) {
    let (oh, ow) = (h / p, w / p);
    let mut out = Vec::new();
    let mut arg = Vec::new();
    for ch in 0..c {
        for i in 0..oh {
            for j in 0..ow {
                let mut best = (f32::NEG_INFINITY, usize::MAX);
                for di in 0..p {
                    for dj in 0..p {
                        let idx = (ch * h + i * p + di) * w + j * p + dj;
                        if x[idx] > best.0 {
                            best = (x[idx], idx);
                        }
                    }
                }
                out.push(best.0);
                arg.push(best.1);
            }
        }
    }
    (out, arg)
}

/// Counts, for each k, the samples whose label probability is beaten by fewer
/// than k classes (equal probabilities at a lower index count as beating).
pub fn recount_p_at_k(probs: &[Vec<f64>], labels: &[usize], ks: &[usize]) -> Vec<f64> {
    ks.iter()
        .map(|&k| {
            let hits = probs
                .iter()
                .zip(labels)
                .filter(|(p, &l)| {
                    let ahead = p
                        .iter()
                        .enumerate()
                        .filter(|&(i, &q)| q > p[l] || (q == p[l] && i < l))
                        .count();
                    ahead < k
                })
                .count();
            hits as f64 / probs.len() as f64
        })
        .collect()
}

/// Toy-sized architecture strings per variant: 4 maps of 8x8, 5 classes and
/// a 32-value direction vector.
pub fn toy_architecture(kind: VariantKind) -> Architecture {
    let conv = "-3C3ReLU -MP2 -4C2ReLU -MP2";
    match kind {
        VariantKind::Imdcnn => {
            Architecture::from_strings(kind, Some(&format!("8*8 {conv}")), None, None, "4 -N6Sig -N5")
        }
        VariantKind::Ssdcnn8 => {
            Architecture::from_strings(kind, Some(&format!("4*8*8 {conv}")), None, None, "4 -N6Sig -N5")
        }
        VariantKind::Nn8 => Architecture::from_strings(kind, None, None, None, "32 -N6Sig -N5Sig -N5"),
        VariantKind::Ssdcnn => Architecture::from_strings(
            kind,
            Some(&format!("4*8*8 {conv} -N4Sig")),
            Some("32 -N6Sig"),
            Some("4 -N4Sig"),
            "10 -N6Sig -N5Sig -N5",
        ),
    }
    .expect("toy architecture")
}

/// Featurized synthetic samples sized for `arch`.
pub fn toy_samples(arch: &Architecture, n: usize, seed: u64) -> (Featurizer, Vec<SampleFeatures>, Vec<usize>) {
    let fz = Featurizer::for_architecture(arch, PreprocessConfig::default()).unwrap();
    let (train, _) = synth_dataset(5, n.div_ceil(5), 0, seed);
    let samples: Vec<_> = train.samples.into_iter().take(n).collect();
    let feats = samples.iter().map(|s| fz.featurize(s).unwrap()).collect();
    let labels = samples.iter().map(|s| s.label.unwrap()).collect();
    (fz, feats, labels)
}

pub fn summed_loss(model: &Model<f64>, feats: &[SampleFeatures], labels: &[usize]) -> f64 {
    feats
        .iter()
        .zip(labels)
        .map(|(f, &l)| {
            let (img, dir) = (f.image_hwc::<f64>(), f.dir_values::<f64>());
            let scores = model
                .forward(ModelInput {
                    image: img.as_deref(),
                    dir: dir.as_deref(),
                })
                .unwrap();
            softmax_nll_grad(&scores, l).unwrap().0
        })
        .sum()
}

pub fn analytic_grads(model: &Model<f64>, feats: &[SampleFeatures], labels: &[usize]) -> Vec<Vec<f64>> {
    let mut grads = model.zero_grads();
    for (f, &l) in feats.iter().zip(labels) {
        let (img, dir) = (f.image_hwc::<f64>(), f.dir_values::<f64>());
        let trace = model
            .forward_trace(
                ModelInput {
                    image: img.as_deref(),
                    dir: dir.as_deref(),
                },
                None,
            )
            .unwrap();
        let (_, g) = softmax_nll_grad(trace.scores(), l).unwrap();
        model.backward(&trace, &g, &mut grads, true);
    }
    grads
}

pub const FD_STEP: f64 = 1e-3;
/// Smaller steps tried in turn when a probe straddles a ReLU or pooling kink.
pub const FD_FALLBACK_STEPS: [f64; 3] = [1e-4, 1e-5, 1e-6];
pub const FD_REL_TOL: f64 = 1e-3;
/// Below this magnitude both gradients count as zero.
pub const FD_ABS_FLOOR: f64 = 1e-7;

pub fn rel_err(a: f64, n: f64) -> f64 {
    let scale = a.abs().max(n.abs());
    if scale < FD_ABS_FLOOR {
        0.0
    } else {
        (a - n).abs() / scale
    }
}

/// Error of `analytic` against central differences of `f` around the
/// current point, shrinking the step while the probe disagrees.
pub fn fd_err(analytic: f64, mut f: impl FnMut(f64) -> f64) -> (f64, f64) {
    let mut best = (f64::INFINITY, 0.0);
    for h in std::iter::once(FD_STEP).chain(FD_FALLBACK_STEPS) {
        let numeric = (f(h) - f(-h)) / (2.0 * h);
        let e = rel_err(analytic, numeric);
        if e < best.0 {
            best = (e, numeric);
        }
        if e < FD_REL_TOL {
            break;
        }
    }
    best
}

/// Worst relative error over every parameter of `model`, with the name of
/// the offending tensor.
pub fn model_grad_check(
    model: &mut Model<f64>,
    feats: &[SampleFeatures],
    labels: &[usize],
) -> (f64, String, usize) {
    let analytic = analytic_grads(model, feats, labels);
    let names = model.param_names();
    let mut worst = (0.0f64, String::new(), 0usize);
    let mut checked = 0;
    for (t, g) in analytic.iter().enumerate() {
        for i in 0..g.len() {
            let orig = model.params()[t].data()[i];
            let (e, numeric) = fd_err(g[i], |h| {
                model.params_mut()[t].data_mut()[i] = orig + h;
                let l = summed_loss(model, feats, labels);
                model.params_mut()[t].data_mut()[i] = orig;
                l
            });
            if e > worst.0 {
                worst = (e, format!("{}[{i}] analytic {} numeric {}", names[t], g[i], numeric), 0);
            }
            checked += 1;
        }
    }
    worst.2 = checked;
    worst
}

pub fn random_vec(rng: &mut ChaCha8Rng, n: usize, zero_frac: f64) -> Vec<f32> {
    (0..n)
        .map(|_| {
            if rng.random::<f64>() < zero_frac {
                0.0
            } else {
                rng.random_range(-1.0..1.0)
            }
        })
        .collect()
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Checks d(r . net(x))/dθ and d/dx against central differences.
pub fn layer_check(spec: &str, zero_frac: f64, seed: u64) -> f64 {
    let spec = parse(spec).unwrap();
    let mut r = rng(seed);
    let mut net: Network<f64> = Network::init(&spec, &mut r).unwrap();
    for p in net.params_mut() {
        for v in p.data_mut() {
            *v += r.random_range(-0.1..0.1);
        }
    }
    let x: Vec<f64> = random_vec(&mut r, net.input_len(), zero_frac)
        .into_iter()
        .map(f64::from)
        .collect();
    let proj: Vec<f64> = (0..net.output_len()).map(|_| r.random_range(-1.0..1.0)).collect();
    let objective = |net: &Network<f64>, x: &[f64]| -> f64 {
        net.forward(x).iter().zip(&proj).map(|(a, b)| a * b).sum()
    };
    let trace = net.forward_trace(x.clone());
    let mut grads = net.zero_grads();
    let dx = net.backward(&trace, &proj, &mut grads, true).unwrap();
    let mut worst = 0.0f64;
    for t in 0..grads.len() {
        for i in 0..grads[t].len() {
            let orig = net.params()[t].data()[i];
            let (e, _) = fd_err(grads[t][i], |h| {
                net.params_mut()[t].data_mut()[i] = orig + h;
                let v = objective(&net, &x);
                net.params_mut()[t].data_mut()[i] = orig;
                v
            });
            worst = worst.max(e);
        }
    }
    for i in 0..x.len() {
        // the gate treats exact zeros as absent, so only nonzero inputs are probed
        if x[i] == 0.0 {
            continue;
        }
        let (e, _) = fd_err(dx[i], |h| {
            let mut xh = x.clone();
            xh[i] += h;
            objective(&net, &xh)
        });
        worst = worst.max(e);
    }
    worst
}
