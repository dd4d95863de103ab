//! Per-point patch classifier.
//!
//! Two point-wise layers with parameters shared across points. Each point
//! sees its own coordinates concatenated with the cloud mean:
//!
//! ```text
//! x_i = [p_i, mean(p)]            (6 inputs)
//! h_i = relu(W1 x_i + b1)         (H hidden units)
//! z_i = W2 h_i + b2               (2 logits: background, patch)
//! P_i = softmax(z_i)[1]
//! ```
//!
//! Training is full-batch gradient descent on the mean binary
//! cross-entropy, with gradients derived by hand.

use std::path::Path;

use rand::distr::{Distribution, Uniform};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{PointCloud, Vec3};
use crate::rng::seeded;

pub const INPUT_DIM: usize = 6;
pub const OUTPUT_DIM: usize = 2;
pub const PARAMS_VERSION: u32 = 1;

/// Probabilities are clamped to `[EPS, 1 - EPS]` before the logarithm.
pub const PROB_EPS: f64 = 1e-12;

/// Largest learning rate for which the loss trace on the bundled toy
/// corpora has been observed to be non-increasing.
pub const STABLE_LEARNING_RATE: f64 = 0.5;

/// Weights of the two layers, stored row-major (`w1[h * 6 + k]`,
/// `w2[c * H + h]`). Also used as the gradient container.
#[derive(Clone, Debug, PartialEq)]
pub struct MlpParams {
    hidden: usize,
    pub w1: Vec<f64>,
    pub b1: Vec<f64>,
    pub w2: Vec<f64>,
    pub b2: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct ParamsFile {
    version: u32,
    input_dim: usize,
    hidden_dim: usize,
    output_dim: usize,
    w1: Vec<f64>,
    b1: Vec<f64>,
    w2: Vec<f64>,
    b2: Vec<f64>,
}

impl MlpParams {
    pub fn zeros(hidden: usize) -> Self {
        MlpParams {
            hidden,
            w1: vec![0.0; hidden * INPUT_DIM],
            b1: vec![0.0; hidden],
            w2: vec![0.0; OUTPUT_DIM * hidden],
            b2: vec![0.0; OUTPUT_DIM],
        }
    }

    pub fn hidden_dim(&self) -> usize {
        self.hidden
    }

    pub fn len(&self) -> usize {
        self.w1.len() + self.b1.len() + self.w2.len() + self.b2.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// All values in the order w1, b1, w2, b2.
    pub fn flat(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.len());
        v.extend(&self.w1);
        v.extend(&self.b1);
        v.extend(&self.w2);
        v.extend(&self.b2);
        v
    }

    /// Mutable access to the `k`-th value in [`MlpParams::flat`] order.
    pub fn flat_mut(&mut self, k: usize) -> &mut f64 {
        let mut k = k;
        for part in [&mut self.w1, &mut self.b1, &mut self.w2, &mut self.b2] {
            if k < part.len() {
                return &mut part[k];
            }
            k -= part.len();
        }
        panic!("parameter index out of range");
    }

    pub fn norm(&self) -> f64 {
        self.flat().iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.flat().iter().all(|v| v.is_finite())
    }

    /// `self += alpha * other`.
    pub fn axpy(&mut self, alpha: f64, other: &MlpParams) {
        for (a, b) in [
            (&mut self.w1, &other.w1),
            (&mut self.b1, &other.b1),
            (&mut self.w2, &other.w2),
            (&mut self.b2, &other.b2),
        ] {
            for (x, y) in a.iter_mut().zip(b) {
                *x += alpha * y;
            }
        }
    }

    pub fn to_json(&self) -> Result<String> {
        let file = ParamsFile {
            version: PARAMS_VERSION,
            input_dim: INPUT_DIM,
            hidden_dim: self.hidden,
            output_dim: OUTPUT_DIM,
            w1: self.w1.clone(),
            b1: self.b1.clone(),
            w2: self.w2.clone(),
            b2: self.b2.clone(),
        };
        Ok(serde_json::to_string_pretty(&file)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let value: serde_json::Value = serde_json::from_str(text)?;
        match value.get("version").and_then(|v| v.as_u64()) {
            Some(v) if v == PARAMS_VERSION as u64 => {}
            _ => return Err(Error::Schema("version".into())),
        }
        let f: ParamsFile = serde_json::from_value(value)?;
        let h = f.hidden_dim;
        if h == 0 {
            return Err(Error::Schema("hidden_dim".into()));
        }
        if f.input_dim != INPUT_DIM {
            return Err(Error::Schema("input_dim".into()));
        }
        if f.output_dim != OUTPUT_DIM {
            return Err(Error::Schema("output_dim".into()));
        }
        for (name, v, n) in [
            ("w1", &f.w1, h * INPUT_DIM),
            ("b1", &f.b1, h),
            ("w2", &f.w2, OUTPUT_DIM * h),
            ("b2", &f.b2, OUTPUT_DIM),
        ] {
            if v.len() != n || v.iter().any(|x| !x.is_finite()) {
                return Err(Error::Schema(name.into()));
            }
        }
        Ok(MlpParams {
            hidden: h,
            w1: f.w1,
            b1: f.b1,
            w2: f.w2,
            b2: f.b2,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        crate::io::write_atomic(path, self.to_json()?.as_bytes())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&crate::io::read_text(path)?)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 500,
            learning_rate: 0.5,
            seed: 7,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "learning rate must be positive, got {}",
                self.learning_rate
            )));
        }
        Ok(())
    }
}

fn glorot(values: &mut [f64], fan_in: usize, fan_out: usize, rng: &mut crate::rng::SeededRng) {
    let a = (6.0 / (fan_in + fan_out) as f64).sqrt();
    let dist = Uniform::new_inclusive(-a, a).expect("finite bounds");
    for v in values {
        *v = dist.sample(rng);
    }
}

/// Glorot-uniform weights, zero biases.
pub fn init_params(hidden_dim: usize, seed: u64) -> MlpParams {
    assert!(hidden_dim >= 1, "hidden_dim must be positive");
    let mut rng = seeded(seed);
    let mut p = MlpParams::zeros(hidden_dim);
    glorot(&mut p.w1, INPUT_DIM, hidden_dim, &mut rng);
    glorot(&mut p.w2, hidden_dim, OUTPUT_DIM, &mut rng);
    p
}

fn input_of(p: Vec3, mean: Vec3) -> [f64; INPUT_DIM] {
    [p.x, p.y, p.z, mean.x, mean.y, mean.z]
}

/// Hidden pre-activations, hidden activations and logits of one point.
fn point_pass(params: &MlpParams, x: &[f64; INPUT_DIM], z1: &mut [f64], h: &mut [f64]) -> [f64; 2] {
    let hd = params.hidden;
    for j in 0..hd {
        let row = &params.w1[j * INPUT_DIM..(j + 1) * INPUT_DIM];
        let mut s = params.b1[j];
        for k in 0..INPUT_DIM {
            s += row[k] * x[k];
        }
        z1[j] = s;
        h[j] = s.max(0.0);
    }
    let mut z2 = [params.b2[0], params.b2[1]];
    for (c, out) in z2.iter_mut().enumerate() {
        let row = &params.w2[c * hd..(c + 1) * hd];
        for j in 0..hd {
            *out += row[j] * h[j];
        }
    }
    z2
}

fn patch_prob(z2: [f64; 2]) -> f64 {
    // softmax(z)[1] == sigmoid(z1 - z0)
    let d = z2[1] - z2[0];
    if d >= 0.0 {
        1.0 / (1.0 + (-d).exp())
    } else {
        let e = d.exp();
        e / (1.0 + e)
    }
}

/// Patch probability of every point.
pub fn forward(params: &MlpParams, cloud: &PointCloud) -> Vec<f64> {
    let mean = Vec3::mean_order_free(cloud.points());
    let mut z1 = vec![0.0; params.hidden];
    let mut h = vec![0.0; params.hidden];
    cloud
        .points()
        .iter()
        .map(|&p| patch_prob(point_pass(params, &input_of(p, mean), &mut z1, &mut h)))
        .collect()
}

fn clamp_prob(p: f64) -> f64 {
    p.clamp(PROB_EPS, 1.0 - PROB_EPS)
}

fn point_loss(p: f64, y: u8) -> f64 {
    let p = clamp_prob(p);
    if y != 0 {
        -p.ln()
    } else {
        -(1.0 - p).ln()
    }
}

/// Mean binary cross-entropy.
pub fn cross_entropy_loss(probs: &[f64], labels: &[u8]) -> Result<f64> {
    if probs.len() != labels.len() {
        return Err(Error::LengthMismatch {
            left: probs.len(),
            right: labels.len(),
        });
    }
    if probs.is_empty() {
        return Ok(0.0);
    }
    let s: f64 = probs.iter().zip(labels).map(|(&p, &y)| point_loss(p, y)).sum();
    Ok(s / probs.len() as f64)
}

/// Loss of one cloud and, if `grad` is given, its gradient accumulated
/// into `grad` with weight `scale`.
fn loss_and_grad(
    params: &MlpParams,
    cloud: &PointCloud,
    labels: &[u8],
    scale: f64,
    mut grad: Option<&mut MlpParams>,
) -> Result<f64> {
    if cloud.len() != labels.len() {
        return Err(Error::LengthMismatch {
            left: cloud.len(),
            right: labels.len(),
        });
    }
    let n = cloud.len() as f64;
    let hd = params.hidden;
    let mean = Vec3::mean_order_free(cloud.points());
    let mut z1 = vec![0.0; hd];
    let mut h = vec![0.0; hd];
    let mut total = 0.0;
    for (&p, &y) in cloud.points().iter().zip(labels) {
        let x = input_of(p, mean);
        let z2 = point_pass(params, &x, &mut z1, &mut h);
        let prob = patch_prob(z2);
        total += point_loss(prob, y);
        let Some(g) = grad.as_deref_mut() else {
            continue;
        };
        // Inside the clamp, dL/dz1 = P - y and dL/dz0 = y - P; the clamp
        // itself has zero derivative.
        if !(PROB_EPS..=1.0 - PROB_EPS).contains(&prob) {
            continue;
        }
        let t = if y != 0 { 1.0 } else { 0.0 };
        let d1 = scale * (prob - t) / n;
        let dz2 = [-d1, d1];
        for c in 0..OUTPUT_DIM {
            g.b2[c] += dz2[c];
            let row = &mut g.w2[c * hd..(c + 1) * hd];
            for j in 0..hd {
                row[j] += dz2[c] * h[j];
            }
        }
        for j in 0..hd {
            if z1[j] <= 0.0 {
                continue;
            }
            let dz1 = dz2[0] * params.w2[j] + dz2[1] * params.w2[hd + j];
            g.b1[j] += dz1;
            let row = &mut g.w1[j * INPUT_DIM..(j + 1) * INPUT_DIM];
            for k in 0..INPUT_DIM {
                row[k] += dz1 * x[k];
            }
        }
    }
    Ok(total / n)
}

/// Loss of one labelled cloud.
pub fn loss(params: &MlpParams, cloud: &PointCloud, labels: &[u8]) -> Result<f64> {
    loss_and_grad(params, cloud, labels, 1.0, None)
}

/// Exact gradient of [`loss`] with respect to every weight and bias.
/// ReLU is taken to have derivative 0 at 0.
pub fn gradient(params: &MlpParams, cloud: &PointCloud, labels: &[u8]) -> Result<MlpParams> {
    let mut g = MlpParams::zeros(params.hidden);
    loss_and_grad(params, cloud, labels, 1.0, Some(&mut g))?;
    Ok(g)
}

/// Mean loss over a dataset and its gradient.
pub fn dataset_loss_and_gradient(
    params: &MlpParams,
    dataset: &[(PointCloud, Vec<u8>)],
) -> Result<(f64, MlpParams)> {
    if dataset.is_empty() {
        return Err(Error::InvalidParameter("empty training set".into()));
    }
    let w = 1.0 / dataset.len() as f64;
    let mut g = MlpParams::zeros(params.hidden);
    let mut total = 0.0;
    for (cloud, labels) in dataset {
        total += w * loss_and_grad(params, cloud, labels, w, Some(&mut g))?;
    }
    Ok((total, g))
}

/// Full-batch gradient descent. Returns the final parameters and the
/// loss before each step followed by the final loss (`epochs + 1` values).
pub fn train_with_trace(
    params: &MlpParams,
    dataset: &[(PointCloud, Vec<u8>)],
    cfg: &TrainConfig,
) -> Result<(MlpParams, Vec<f64>)> {
    cfg.validate()?;
    let mut p = params.clone();
    let mut trace = Vec::with_capacity(cfg.epochs + 1);
    for _ in 0..cfg.epochs {
        let (l, g) = dataset_loss_and_gradient(&p, dataset)?;
        trace.push(l);
        p.axpy(-cfg.learning_rate, &g);
    }
    let (l, _) = dataset_loss_and_gradient(&p, dataset)?;
    trace.push(l);
    Ok((p, trace))
}

pub fn train(params: &MlpParams, dataset: &[(PointCloud, Vec<u8>)], cfg: &TrainConfig) -> Result<MlpParams> {
    Ok(train_with_trace(params, dataset, cfg)?.0)
}

/// Sorted indices of the `count` most probable patch points; ties go to
/// the lower index.
pub fn predict_patch(params: &MlpParams, cloud: &PointCloud, count: usize) -> Result<Vec<usize>> {
    if count == 0 || count > cloud.len() {
        return Err(Error::InvalidParameter(format!(
            "patch count {count} outside 1..={}",
            cloud.len()
        )));
    }
    Ok(top_count(&forward(params, cloud), count))
}

pub(crate) fn top_count(probs: &[f64], count: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..probs.len()).collect();
    order.sort_by(|&a, &b| probs[b].total_cmp(&probs[a]).then(a.cmp(&b)));
    order.truncate(count);
    order.sort_unstable();
    order
}

/// Default patch size for a cloud of `n` points.
pub fn default_patch_count(n: usize) -> usize {
    ((0.08 * n as f64).round() as usize).clamp(1, n.max(1))
}

/// Fraction of points whose thresholded prediction matches the label.
pub fn accuracy(probs: &[f64], labels: &[u8], threshold: f64) -> f64 {
    let hits = probs
        .iter()
        .zip(labels)
        .filter(|(&p, &y)| (p >= threshold) == (y != 0))
        .count();
    hits as f64 / probs.len().max(1) as f64
}

pub fn intersection_over_union(a: &[usize], b: &[usize]) -> f64 {
    let sa: std::collections::BTreeSet<_> = a.iter().collect();
    let sb: std::collections::BTreeSet<_> = b.iter().collect();
    let union = sa.union(&sb).count();
    if union == 0 {
        return 1.0;
    }
    sa.intersection(&sb).count() as f64 / union as f64
}

/// Largest relative error between [`gradient`] and central differences
/// with step `h`. Components whose magnitudes are both below `floor` are
/// compared absolutely.
pub fn gradient_check(params: &MlpParams, cloud: &PointCloud, labels: &[u8], h: f64) -> Result<f64> {
    let g = gradient(params, cloud, labels)?.flat();
    let mut worst: f64 = 0.0;
    let mut p = params.clone();
    for (k, &gk) in g.iter().enumerate() {
        let orig = *p.flat_mut(k);
        *p.flat_mut(k) = orig + h;
        let lp = loss(&p, cloud, labels)?;
        *p.flat_mut(k) = orig - h;
        let lm = loss(&p, cloud, labels)?;
        *p.flat_mut(k) = orig;
        let fd = (lp - lm) / (2.0 * h);
        worst = worst.max(relative_error(gk, fd));
    }
    Ok(worst)
}

/// [`gradient_check`] on `configs` random problems (hidden width 5,
/// 12 points in the cube `[-0.5, 0.5]^3`, random labels) derived from
/// `seed`. Returns the worst relative error.
pub fn random_gradient_checks(configs: usize, seed: u64, h: f64) -> Result<f64> {
    let mut worst: f64 = 0.0;
    for k in 0..configs as u64 {
        let s = crate::rng::derive_seed(seed, k);
        let mut rng = seeded(crate::rng::stream_seed(s, 1));
        let cloud = PointCloud::new(
            (0..12)
                .map(|_| {
                    Vec3::new(
                        rng.random_range(-0.5..0.5),
                        rng.random_range(-0.5..0.5),
                        rng.random_range(-0.5..0.5),
                    )
                })
                .collect(),
        )?;
        let labels: Vec<u8> = (0..12).map(|_| rng.random_range(0..2)).collect();
        let params = init_params(5, crate::rng::stream_seed(s, 2));
        worst = worst.max(gradient_check(&params, &cloud, &labels, h)?);
    }
    Ok(worst)
}

pub(crate) fn relative_error(a: f64, b: f64) -> f64 {
    let scale = a.abs().max(b.abs()).max(1e-6);
    (a - b).abs() / scale
}
