//! Learned mode/residual head.
//!
//! One shared point-wise layer on `x_i = (p_i - mean(p), flag_i)`, where
//! `flag_i` marks patch membership, pooled by max and mean:
//!
//! ```text
//! f_i    = relu(W x_i + b)            (H units)
//! g      = [max_i f_i, mean_i f_i]    (2H)
//! logits = Wm g + bm                  (60 modes)
//! raw    = Wr g + br                  (scale, axis)
//! ```
//!
//! Per training sample with true rotation `R` and `y` the mode nearest to
//! `R`, the objective is
//!
//! ```text
//! CE(softmax(logits), y) + CD(dq ⊗ G[y] T, O) + lambda1 (|dq| - 1)^2
//! ```
//!
//! The residual is trained at the true mode `y`, not at the predicted one.
//! Chamfer gradients hold the nearest-neighbour assignments fixed.
//! `dq` is unit by construction, so the norm term has zero gradient.

use std::path::Path;

use rand::distr::{Distribution, Uniform};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{hamilton, NeighborTable, PointCloud, UnitQuaternion, Vec3};
use crate::icosa::{residual_w_floor, sigmoid, IcosaGroup, GROUP_ORDER};
use crate::patchnet::{relative_error, TrainConfig};
use crate::pose::{argmax, LossWeights, RawDelta};
use crate::rng::seeded;

pub const HEAD_INPUT_DIM: usize = 4;
pub const RAW_DIM: usize = 4;
pub const HEAD_PARAMS_VERSION: u32 = 1;

/// Weights of the head, row-major. Also used as the gradient container.
#[derive(Clone, Debug, PartialEq)]
pub struct HeadParams {
    hidden: usize,
    /// `H x 4`
    pub w: Vec<f64>,
    pub b: Vec<f64>,
    /// `60 x 2H`
    pub wm: Vec<f64>,
    pub bm: Vec<f64>,
    /// `4 x 2H`
    pub wr: Vec<f64>,
    pub br: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct HeadFile {
    version: u32,
    hidden_dim: usize,
    modes: usize,
    w: Vec<f64>,
    b: Vec<f64>,
    wm: Vec<f64>,
    bm: Vec<f64>,
    wr: Vec<f64>,
    br: Vec<f64>,
}

impl HeadParams {
    pub fn zeros(hidden: usize) -> Self {
        HeadParams {
            hidden,
            w: vec![0.0; hidden * HEAD_INPUT_DIM],
            b: vec![0.0; hidden],
            wm: vec![0.0; GROUP_ORDER * 2 * hidden],
            bm: vec![0.0; GROUP_ORDER],
            wr: vec![0.0; RAW_DIM * 2 * hidden],
            br: vec![0.0; RAW_DIM],
        }
    }

    pub fn hidden_dim(&self) -> usize {
        self.hidden
    }

    fn fields(&self) -> [&Vec<f64>; 6] {
        [&self.w, &self.b, &self.wm, &self.bm, &self.wr, &self.br]
    }

    fn fields_mut(&mut self) -> [&mut Vec<f64>; 6] {
        [&mut self.w, &mut self.b, &mut self.wm, &mut self.bm, &mut self.wr, &mut self.br]
    }

    pub fn len(&self) -> usize {
        self.fields().iter().map(|f| f.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn flat(&self) -> Vec<f64> {
        self.fields().iter().flat_map(|f| f.iter().copied()).collect()
    }

    pub fn flat_mut(&mut self, mut k: usize) -> &mut f64 {
        for f in self.fields_mut() {
            if k < f.len() {
                return &mut f[k];
            }
            k -= f.len();
        }
        panic!("parameter index out of range");
    }

    pub fn norm(&self) -> f64 {
        self.flat().iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.fields().iter().all(|f| f.iter().all(|v| v.is_finite()))
    }

    /// `self += alpha * other`.
    pub fn axpy(&mut self, alpha: f64, other: &HeadParams) {
        for (a, b) in self.fields_mut().into_iter().zip(other.fields()) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += alpha * y;
            }
        }
    }

    pub fn to_json(&self) -> Result<String> {
        let file = HeadFile {
            version: HEAD_PARAMS_VERSION,
            hidden_dim: self.hidden,
            modes: GROUP_ORDER,
            w: self.w.clone(),
            b: self.b.clone(),
            wm: self.wm.clone(),
            bm: self.bm.clone(),
            wr: self.wr.clone(),
            br: self.br.clone(),
        };
        Ok(serde_json::to_string_pretty(&file)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let value: serde_json::Value = serde_json::from_str(text)?;
        match value.get("version").and_then(|v| v.as_u64()) {
            Some(v) if v == HEAD_PARAMS_VERSION as u64 => {}
            _ => return Err(Error::Schema("version".into())),
        }
        let f: HeadFile = serde_json::from_value(value)?;
        let h = f.hidden_dim;
        if h == 0 {
            return Err(Error::Schema("hidden_dim".into()));
        }
        if f.modes != GROUP_ORDER {
            return Err(Error::Schema("modes".into()));
        }
        for (name, v, n) in [
            ("w", &f.w, h * HEAD_INPUT_DIM),
            ("b", &f.b, h),
            ("wm", &f.wm, GROUP_ORDER * 2 * h),
            ("bm", &f.bm, GROUP_ORDER),
            ("wr", &f.wr, RAW_DIM * 2 * h),
            ("br", &f.br, RAW_DIM),
        ] {
            if v.len() != n || v.iter().any(|x| !x.is_finite()) {
                return Err(Error::Schema(name.into()));
            }
        }
        Ok(HeadParams {
            hidden: h,
            w: f.w,
            b: f.b,
            wm: f.wm,
            bm: f.bm,
            wr: f.wr,
            br: f.br,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        crate::io::write_atomic(path, self.to_json()?.as_bytes())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&crate::io::read_text(path)?)
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
pub fn init_head(hidden_dim: usize, seed: u64) -> HeadParams {
    assert!(hidden_dim >= 1, "hidden_dim must be positive");
    let mut rng = seeded(seed);
    let mut p = HeadParams::zeros(hidden_dim);
    glorot(&mut p.w, HEAD_INPUT_DIM, hidden_dim, &mut rng);
    glorot(&mut p.wm, 2 * hidden_dim, GROUP_ORDER, &mut rng);
    glorot(&mut p.wr, 2 * hidden_dim, RAW_DIM, &mut rng);
    p
}

/// One training example: `observed` is `rotation` applied to `template`
/// (about the origin), `patch_indices` index into `observed`.
#[derive(Clone, Debug)]
pub struct HeadSample {
    pub template: PointCloud,
    pub observed: PointCloud,
    pub rotation: UnitQuaternion,
    pub patch_indices: Vec<usize>,
}

fn head_inputs(cloud: &PointCloud, patch_indices: &[usize]) -> Result<Vec<[f64; HEAD_INPUT_DIM]>> {
    let mean = Vec3::mean_order_free(cloud.points());
    let mut x: Vec<[f64; HEAD_INPUT_DIM]> = cloud
        .points()
        .iter()
        .map(|&p| {
            let d = p - mean;
            [d.x, d.y, d.z, 0.0]
        })
        .collect();
    for &i in patch_indices {
        let len = x.len();
        x.get_mut(i).ok_or(Error::IndexOutOfRange { index: i, len })?[3] = 1.0;
    }
    Ok(x)
}

struct Pass {
    /// pre-activations, `N x H`
    z: Vec<f64>,
    /// index of the point attaining each max
    arg: Vec<usize>,
    g: Vec<f64>,
    logits: Vec<f64>,
    raw: [f64; RAW_DIM],
}

fn run(params: &HeadParams, x: &[[f64; HEAD_INPUT_DIM]]) -> Pass {
    let h = params.hidden;
    let n = x.len();
    let mut z = vec![0.0; n * h];
    let mut mx = vec![0.0; h];
    let mut arg = vec![0; h];
    let mut sum = vec![0.0; h];
    for (i, xi) in x.iter().enumerate() {
        for j in 0..h {
            let row = &params.w[j * HEAD_INPUT_DIM..(j + 1) * HEAD_INPUT_DIM];
            let mut s = params.b[j];
            for k in 0..HEAD_INPUT_DIM {
                s += row[k] * xi[k];
            }
            z[i * h + j] = s;
            let f = s.max(0.0);
            if i == 0 || f > mx[j] {
                mx[j] = f;
                arg[j] = i;
            }
            sum[j] += f;
        }
    }
    let mut g = mx;
    g.extend(sum.iter().map(|s| s / n as f64));
    let dense = |wt: &[f64], bias: &[f64]| -> Vec<f64> {
        bias.iter()
            .enumerate()
            .map(|(r, &b0)| b0 + wt[r * 2 * h..(r + 1) * 2 * h].iter().zip(&g).map(|(a, b)| a * b).sum::<f64>())
            .collect()
    };
    let logits = dense(&params.wm, &params.bm);
    let r = dense(&params.wr, &params.br);
    Pass {
        z,
        arg,
        logits,
        raw: [r[0], r[1], r[2], r[3]],
        g,
    }
}

fn raw_delta(raw: [f64; RAW_DIM]) -> RawDelta {
    RawDelta {
        scale: raw[0],
        axis: Vec3::new(raw[1], raw[2], raw[3]),
    }
}

/// Mode logits and unconstrained residual of `cloud`, whose points listed
/// in `patch_indices` carry the patch flag. Invariant to point order.
pub fn learned_head_forward(
    params: &HeadParams,
    cloud: &PointCloud,
    patch_indices: &[usize],
) -> Result<(Vec<f64>, RawDelta)> {
    let pass = run(params, &head_inputs(cloud, patch_indices)?);
    Ok((pass.logits, raw_delta(pass.raw)))
}

/// Predicted mode (ties to the lowest index) and rotation `dq ⊗ G[mode]`.
pub fn predict_rotation(
    params: &HeadParams,
    cloud: &PointCloud,
    patch_indices: &[usize],
    group: &IcosaGroup,
) -> Result<(usize, UnitQuaternion)> {
    let (logits, raw) = learned_head_forward(params, cloud, patch_indices)?;
    let mode = argmax(&logits);
    Ok((mode, group.compose(mode, &raw.constrained())?))
}

/// Residual quaternion from raw outputs and its Jacobian (rows: w, x, y,
/// z; columns: raw components). Matches `constrain_delta`.
fn delta_and_jacobian(raw: [f64; RAW_DIM]) -> ([f64; 4], [[f64; RAW_DIM]; 4]) {
    let c = residual_w_floor();
    let s = sigmoid(raw[0]);
    let w = c + (1.0 - c) * s;
    let sn = (1.0 - w * w).max(0.0).sqrt();
    let a = Vec3::new(raw[1], raw[2], raw[3]);
    let mut jac = [[0.0; RAW_DIM]; 4];
    let dw = if raw[0].abs() < 500.0 { (1.0 - c) * s * (1.0 - s) } else { 0.0 };
    jac[0][0] = dw;
    let (u, len) = match a.normalized() {
        Some(u) => (u, a.norm()),
        None => (Vec3::Z, 0.0),
    };
    let u = [u.x, u.y, u.z];
    let dsn = if sn > 0.0 { -w / sn * dw } else { 0.0 };
    for r in 0..3 {
        jac[r + 1][0] = dsn * u[r];
        if len > 0.0 {
            for k in 0..3 {
                let eye = if r == k { 1.0 } else { 0.0 };
                jac[r + 1][k + 1] = sn * (eye - u[r] * u[k]) / len;
            }
        }
    }
    ([w, sn * u[0], sn * u[1], sn * u[2]], jac)
}

fn matrix(q: [f64; 4]) -> [[f64; 3]; 3] {
    let [w, x, y, z] = q;
    [
        [1.0 - 2.0 * (y * y + z * z), 2.0 * (x * y - w * z), 2.0 * (x * z + w * y)],
        [2.0 * (x * y + w * z), 1.0 - 2.0 * (x * x + z * z), 2.0 * (y * z - w * x)],
        [2.0 * (x * z - w * y), 2.0 * (y * z + w * x), 1.0 - 2.0 * (x * x + y * y)],
    ]
}

/// Pulls a gradient with respect to the matrix back to the quaternion.
fn matrix_grad(q: [f64; 4], dm: &[[f64; 3]; 3]) -> [f64; 4] {
    let [w, x, y, z] = q;
    let partials = [
        [[0.0, -2.0 * z, 2.0 * y], [2.0 * z, 0.0, -2.0 * x], [-2.0 * y, 2.0 * x, 0.0]],
        [[0.0, 2.0 * y, 2.0 * z], [2.0 * y, -4.0 * x, -2.0 * w], [2.0 * z, 2.0 * w, -4.0 * x]],
        [[-4.0 * y, 2.0 * x, 2.0 * w], [2.0 * x, 0.0, 2.0 * z], [-2.0 * w, 2.0 * z, -4.0 * y]],
        [[-4.0 * z, -2.0 * w, 2.0 * x], [2.0 * w, -4.0 * z, 2.0 * y], [2.0 * x, 2.0 * y, 0.0]],
    ];
    let mut out = [0.0; 4];
    for (k, pk) in partials.iter().enumerate() {
        for r in 0..3 {
            for c in 0..3 {
                out[k] += pk[r][c] * dm[r][c];
            }
        }
    }
    out
}

fn apply(m: &[[f64; 3]; 3], p: Vec3) -> Vec3 {
    Vec3::new(
        m[0][0] * p.x + m[0][1] * p.y + m[0][2] * p.z,
        m[1][0] * p.x + m[1][1] * p.y + m[1][2] * p.z,
        m[2][0] * p.x + m[2][1] * p.y + m[2][2] * p.z,
    )
}

/// Nearest-neighbour assignments of a chamfer evaluation: template point
/// `i` to observed `fwd[i]`, observed point `j` to template `bwd[j]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Assignment {
    pub fwd: Vec<usize>,
    pub bwd: Vec<usize>,
}

/// Training sample with its constant parts precomputed.
struct Prepared<'a> {
    x: Vec<[f64; HEAD_INPUT_DIM]>,
    template: &'a [Vec3],
    observed: &'a [Vec3],
    observed_table: NeighborTable,
    mode: usize,
    g: [f64; 4],
}

fn prepare<'a>(sample: &'a HeadSample, group: &IcosaGroup) -> Result<Prepared<'a>> {
    if sample.template.is_empty() || sample.observed.is_empty() {
        return Err(Error::EmptyCloud);
    }
    let mode = group.nearest(&sample.rotation).mode_index;
    Ok(Prepared {
        x: head_inputs(&sample.observed, &sample.patch_indices)?,
        template: sample.template.points(),
        observed: sample.observed.points(),
        observed_table: NeighborTable::new(sample.observed.points()),
        mode,
        g: group.elements()[mode].to_array(),
    })
}

fn assign(s: &Prepared, rotated: &[Vec3]) -> Assignment {
    let fwd = rotated.iter().map(|&r| s.observed_table.nearest(r).0).collect();
    let table = NeighborTable::new(rotated);
    let bwd = s.observed.iter().map(|&o| table.nearest(o).0).collect();
    Assignment { fwd, bwd }
}

/// Loss terms of one sample under the current parameters.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HeadLoss {
    pub mode_ce: f64,
    pub pose_rec: f64,
    pub q_norm: f64,
    pub total: f64,
}

/// Loss of one sample, adding `scale * gradient` into `grad` when given.
/// With `fixed` set, chamfer uses those assignments instead of the
/// nearest neighbours at the current rotation.
fn loss_and_grad(
    params: &HeadParams,
    s: &Prepared,
    weights: LossWeights,
    fixed: Option<&Assignment>,
    scale: f64,
    grad: Option<&mut HeadParams>,
) -> (HeadLoss, Assignment) {
    let h = params.hidden;
    let pass = run(params, &s.x);

    // mode cross-entropy
    let top = pass.logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = pass.logits.iter().map(|l| (l - top).exp()).collect();
    let zsum: f64 = exps.iter().sum();
    let mode_ce = zsum.ln() - (pass.logits[s.mode] - top);

    // teacher-forced reconstruction
    let (dq, jac) = delta_and_jacobian(pass.raw);
    let q = hamilton(dq, s.g);
    let m = matrix(q);
    let rotated: Vec<Vec3> = s.template.iter().map(|&t| apply(&m, t)).collect();
    let assignment = match fixed {
        Some(a) => a.clone(),
        None => assign(s, &rotated),
    };
    let nt = rotated.len() as f64;
    let no = s.observed.len() as f64;
    let mut dr = vec![Vec3::ZERO; rotated.len()];
    let mut fwd_sum = 0.0;
    for (i, &j) in assignment.fwd.iter().enumerate() {
        let d = rotated[i] - s.observed[j];
        fwd_sum += d.dot(d);
        dr[i] += d * (2.0 / nt);
    }
    let mut bwd_sum = 0.0;
    for (j, &i) in assignment.bwd.iter().enumerate() {
        let d = rotated[i] - s.observed[j];
        bwd_sum += d.dot(d);
        dr[i] += d * (2.0 / no);
    }
    let pose_rec = fwd_sum / nt + bwd_sum / no;
    let norm = dq.iter().map(|v| v * v).sum::<f64>().sqrt();
    let q_norm = (norm - 1.0).powi(2);
    let total = mode_ce + pose_rec + weights.lambda1 * q_norm;
    let loss = HeadLoss {
        mode_ce,
        pose_rec,
        q_norm,
        total,
    };
    let Some(grad) = grad else {
        return (loss, assignment);
    };

    let mut dm = [[0.0; 3]; 3];
    for (d, &t) in dr.iter().zip(s.template) {
        let d = [d.x, d.y, d.z];
        let t = [t.x, t.y, t.z];
        for r in 0..3 {
            for c in 0..3 {
                dm[r][c] += d[r] * t[c];
            }
        }
    }
    let dqf = matrix_grad(q, &dm);
    // q = dq ⊗ g is linear in dq
    let mut ddq = [0.0; 4];
    for (k, v) in ddq.iter_mut().enumerate() {
        let mut e = [0.0; 4];
        e[k] = 1.0;
        let col = hamilton(e, s.g);
        *v = (0..4).map(|r| col[r] * dqf[r]).sum();
    }
    let mut draw = [0.0; RAW_DIM];
    for (c, v) in draw.iter_mut().enumerate() {
        *v = (0..4).map(|r| jac[r][c] * ddq[r]).sum::<f64>() * scale;
    }
    let dlogits: Vec<f64> = exps
        .iter()
        .enumerate()
        .map(|(k, e)| (e / zsum - if k == s.mode { 1.0 } else { 0.0 }) * scale)
        .collect();

    let h2 = 2 * h;
    let mut dg = vec![0.0; h2];
    for (r, &dl) in dlogits.iter().enumerate() {
        grad.bm[r] += dl;
        let row = &params.wm[r * h2..(r + 1) * h2];
        let grow = &mut grad.wm[r * h2..(r + 1) * h2];
        for k in 0..h2 {
            grow[k] += dl * pass.g[k];
            dg[k] += dl * row[k];
        }
    }
    for (r, &dl) in draw.iter().enumerate() {
        grad.br[r] += dl;
        let row = &params.wr[r * h2..(r + 1) * h2];
        let grow = &mut grad.wr[r * h2..(r + 1) * h2];
        for k in 0..h2 {
            grow[k] += dl * pass.g[k];
            dg[k] += dl * row[k];
        }
    }
    let n = s.x.len();
    let inv_n = 1.0 / n as f64;
    for (i, xi) in s.x.iter().enumerate() {
        for j in 0..h {
            if pass.z[i * h + j] <= 0.0 {
                continue;
            }
            let mut dz = dg[h + j] * inv_n;
            if pass.arg[j] == i {
                dz += dg[j];
            }
            grad.b[j] += dz;
            let row = &mut grad.w[j * HEAD_INPUT_DIM..(j + 1) * HEAD_INPUT_DIM];
            for k in 0..HEAD_INPUT_DIM {
                row[k] += dz * xi[k];
            }
        }
    }
    (loss, assignment)
}

/// Loss terms of one sample.
pub fn head_loss(params: &HeadParams, sample: &HeadSample, group: &IcosaGroup, weights: LossWeights) -> Result<HeadLoss> {
    let s = prepare(sample, group)?;
    Ok(loss_and_grad(params, &s, weights, None, 1.0, None).0)
}

/// Gradient of the total loss of one sample.
pub fn head_gradient(
    params: &HeadParams,
    sample: &HeadSample,
    group: &IcosaGroup,
    weights: LossWeights,
) -> Result<HeadParams> {
    let s = prepare(sample, group)?;
    let mut g = HeadParams::zeros(params.hidden);
    loss_and_grad(params, &s, weights, None, 1.0, Some(&mut g));
    Ok(g)
}

fn dataset_pass(
    params: &HeadParams,
    prepared: &[Prepared],
    weights: LossWeights,
    grad: Option<&mut HeadParams>,
) -> f64 {
    let w = 1.0 / prepared.len() as f64;
    let mut total = 0.0;
    match grad {
        Some(g) => {
            for s in prepared {
                total += w * loss_and_grad(params, s, weights, None, w, Some(g)).0.total;
            }
        }
        None => {
            for s in prepared {
                total += w * loss_and_grad(params, s, weights, None, w, None).0.total;
            }
        }
    }
    total
}

/// Adam moment decay rates and denominator offset.
pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;

/// Full-batch Adam on the mean training objective, step size
/// `cfg.learning_rate`. Returns the final parameters and the loss before
/// each step followed by the final loss (`epochs + 1` values).
pub fn train_pose_head_with_trace(
    params: &HeadParams,
    dataset: &[HeadSample],
    group: &IcosaGroup,
    weights: LossWeights,
    cfg: &TrainConfig,
) -> Result<(HeadParams, Vec<f64>)> {
    cfg.validate()?;
    if dataset.is_empty() {
        return Err(Error::InvalidParameter("empty training set".into()));
    }
    let prepared = dataset.iter().map(|s| prepare(s, group)).collect::<Result<Vec<_>>>()?;
    let mut p = params.clone();
    let len = p.len();
    let mut m = vec![0.0; len];
    let mut v = vec![0.0; len];
    let mut trace = Vec::with_capacity(cfg.epochs + 1);
    for t in 1..=cfg.epochs {
        let mut g = HeadParams::zeros(p.hidden);
        trace.push(dataset_pass(&p, &prepared, weights, Some(&mut g)));
        let c1 = 1.0 - ADAM_BETA1.powi(t as i32);
        let c2 = 1.0 - ADAM_BETA2.powi(t as i32);
        for (k, gk) in g.flat().into_iter().enumerate() {
            m[k] = ADAM_BETA1 * m[k] + (1.0 - ADAM_BETA1) * gk;
            v[k] = ADAM_BETA2 * v[k] + (1.0 - ADAM_BETA2) * gk * gk;
            *p.flat_mut(k) -= cfg.learning_rate * (m[k] / c1) / ((v[k] / c2).sqrt() + ADAM_EPS);
        }
    }
    trace.push(dataset_pass(&p, &prepared, weights, None));
    Ok((p, trace))
}

pub fn train_pose_head(
    params: &HeadParams,
    dataset: &[HeadSample],
    group: &IcosaGroup,
    weights: LossWeights,
    cfg: &TrainConfig,
) -> Result<HeadParams> {
    Ok(train_pose_head_with_trace(params, dataset, group, weights, cfg)?.0)
}

/// Fraction of samples whose predicted mode is the mode nearest to the
/// true rotation.
pub fn mode_accuracy(params: &HeadParams, dataset: &[HeadSample], group: &IcosaGroup) -> Result<f64> {
    let mut hits = 0;
    for s in dataset {
        let (mode, _) = predict_rotation(params, &s.observed, &s.patch_indices, group)?;
        if mode == group.nearest(&s.rotation).mode_index {
            hits += 1;
        }
    }
    Ok(hits as f64 / dataset.len().max(1) as f64)
}

/// Largest relative error between the analytic gradient of one sample and
/// central differences with step `h`, chamfer assignments held at those
/// of the unperturbed parameters.
pub fn head_gradient_check(
    params: &HeadParams,
    sample: &HeadSample,
    group: &IcosaGroup,
    weights: LossWeights,
    h: f64,
) -> Result<f64> {
    let s = prepare(sample, group)?;
    let mut g = HeadParams::zeros(params.hidden);
    let (_, assignment) = loss_and_grad(params, &s, weights, None, 1.0, Some(&mut g));
    let g = g.flat();
    let mut p = params.clone();
    let mut worst: f64 = 0.0;
    for (k, &gk) in g.iter().enumerate() {
        let orig = *p.flat_mut(k);
        *p.flat_mut(k) = orig + h;
        let lp = loss_and_grad(&p, &s, weights, Some(&assignment), 1.0, None).0.total;
        *p.flat_mut(k) = orig - h;
        let lm = loss_and_grad(&p, &s, weights, Some(&assignment), 1.0, None).0.total;
        *p.flat_mut(k) = orig;
        worst = worst.max(relative_error(gk, (lp - lm) / (2.0 * h)));
    }
    Ok(worst)
}

/// [`head_gradient_check`] on `configs` random problems derived from
/// `seed`: a 20-point cloud in `[-0.5, 0.5]^3` as template, a randomly
/// rotated and jittered copy as observation, a random patch, hidden
/// width 4 with random biases. Returns the worst relative error.
pub fn random_gradient_checks(configs: usize, seed: u64, h: f64) -> Result<f64> {
    use rand::Rng;
    let group = IcosaGroup::new();
    let mut worst: f64 = 0.0;
    for k in 0..configs as u64 {
        let s = crate::rng::derive_seed(seed, k);
        let mut rng = seeded(crate::rng::stream_seed(s, 1));
        let mut point = |scale: f64| {
            Vec3::new(
                rng.random_range(-scale..scale),
                rng.random_range(-scale..scale),
                rng.random_range(-scale..scale),
            )
        };
        let template = PointCloud::new((0..20).map(|_| point(0.5)).collect())?;
        let rotation = crate::geometry::random_rotation(crate::rng::stream_seed(s, 2));
        let observed = PointCloud::new(
            template
                .points()
                .iter()
                .map(|&p| rotation.rotate(p) + point(0.05))
                .collect(),
        )?;
        let mut params = init_head(4, crate::rng::stream_seed(s, 3));
        for v in params.b.iter_mut().chain(params.bm.iter_mut()).chain(params.br.iter_mut()) {
            *v = rng.random_range(-0.5..0.5);
        }
        let patch_indices: Vec<usize> = (0..20).filter(|_| rng.random_bool(0.3)).collect();
        let sample = HeadSample {
            template,
            observed,
            rotation,
            patch_indices,
        };
        worst = worst.max(head_gradient_check(&params, &sample, &group, LossWeights::default(), h)?);
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{apply_rotation, chamfer_points, random_rotation, shuffle};
    use crate::icosa::constrain_delta;
    use crate::io::prepare_template;
    use crate::pose::rotate_points;
    use crate::shapes::{generate, ShapeFamily};

    fn template(n: usize) -> PointCloud {
        let (mesh, _) = generate(ShapeFamily::Composite, 3);
        prepare_template(&mesh, n, 3).unwrap().0
    }

    fn sample(t: &PointCloud, seed: u64) -> HeadSample {
        let q = random_rotation(seed);
        HeadSample {
            template: t.clone(),
            observed: apply_rotation(t, &q, Vec3::ZERO),
            rotation: q,
            patch_indices: vec![0, 3, 5],
        }
    }

    #[test]
    fn zero_params_pick_mode_zero() {
        let g = IcosaGroup::new();
        let t = template(40);
        let p = HeadParams::zeros(8);
        let (logits, raw) = learned_head_forward(&p, &t, &[1]).unwrap();
        assert!(logits.iter().all(|&l| l == 0.0));
        assert_eq!(raw, RawDelta { scale: 0.0, axis: Vec3::ZERO });
        let (mode, q) = predict_rotation(&p, &t, &[1], &g).unwrap();
        assert_eq!(mode, 0);
        assert_eq!(q, constrain_delta(0.0, Vec3::ZERO));
    }

    #[test]
    fn pooling_is_order_free() {
        let t = template(50);
        let p = init_head(16, 2);
        let patch = [2usize, 9, 30];
        let (shuffled, perm) = shuffle(&t, 5);
        // perm[k] is the source index of shuffled point k
        let moved: Vec<usize> = (0..perm.len()).filter(|&k| patch.contains(&perm[k])).collect();
        let a = learned_head_forward(&p, &t, &patch).unwrap();
        let b = learned_head_forward(&p, &shuffled, &moved).unwrap();
        for (x, y) in a.0.iter().zip(&b.0) {
            assert!((x - y).abs() <= 1e-12);
        }
        assert!((a.1.scale - b.1.scale).abs() <= 1e-12);
    }

    #[test]
    fn bad_patch_index() {
        let t = template(10);
        let p = HeadParams::zeros(2);
        assert!(matches!(
            learned_head_forward(&p, &t, &[10]),
            Err(Error::IndexOutOfRange { index: 10, len: 10 })
        ));
    }

    #[test]
    fn delta_matches_constrain_delta() {
        for (k, raw) in [[0.3, 1.0, -2.0, 0.5], [-4.0, 0.0, 0.0, 0.0], [2.0, 0.0, 1e-3, 0.0]].iter().enumerate() {
            let (dq, _) = delta_and_jacobian(*raw);
            let want = constrain_delta(raw[0], Vec3::new(raw[1], raw[2], raw[3])).to_array();
            for c in 0..4 {
                assert!((dq[c] - want[c]).abs() <= 1e-15, "case {k}");
            }
        }
    }

    #[test]
    fn matrix_matches_rotate() {
        let q = random_rotation(9);
        let m = matrix(q.to_array());
        let p = Vec3::new(0.3, -0.7, 0.2);
        let a = apply(&m, p);
        let b = q.rotate(p);
        assert!((a - b).norm() <= 1e-14);
    }

    #[test]
    fn reconstruction_term_is_chamfer() {
        let g = IcosaGroup::new();
        let t = template(60);
        let s = sample(&t, 4);
        let p = init_head(8, 1);
        let l = head_loss(&p, &s, &g, LossWeights::default()).unwrap();
        let (_, raw) = learned_head_forward(&p, &s.observed, &s.patch_indices).unwrap();
        let mode = g.nearest(&s.rotation).mode_index;
        let r = g.compose(mode, &raw.constrained()).unwrap();
        let cd = chamfer_points(&rotate_points(t.points(), &r), s.observed.points());
        assert!((l.pose_rec - cd).abs() <= 1e-12);
        assert!(l.q_norm <= 1e-24);
        assert!((l.total - (l.mode_ce + l.pose_rec + l.q_norm)).abs() <= 1e-12);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let g = IcosaGroup::new();
        let t = template(24);
        let w = LossWeights::default();
        for k in 0..5u64 {
            let mut p = init_head(3 + k as usize, 100 + k);
            p.b.fill(0.05);
            p.br[0] = 1.5 * k as f64 - 3.0;
            let err = head_gradient_check(&p, &sample(&t, 200 + k), &g, w, 1e-5).unwrap();
            assert!(err <= 1e-3, "config {k}: {err:e}");
        }
        for seed in [100, 7] {
            let err = random_gradient_checks(20, seed, 1e-5).unwrap();
            assert!(err <= 1e-3, "seed {seed}: {err:e}");
        }
    }

    #[test]
    fn zero_epochs_is_identity_and_loss_decreases() {
        let g = IcosaGroup::new();
        let t = template(32);
        let data: Vec<HeadSample> = (0..12).map(|k| sample(&t, 50 + k)).collect();
        let p = init_head(16, 4);
        let w = LossWeights::default();
        let cfg = TrainConfig {
            epochs: 0,
            learning_rate: 0.01,
            seed: 1,
        };
        let (q, trace) = train_pose_head_with_trace(&p, &data, &g, w, &cfg).unwrap();
        assert_eq!(q, p);
        assert_eq!(trace.len(), 1);
        let cfg = TrainConfig { epochs: 60, ..cfg };
        let (_, trace) = train_pose_head_with_trace(&p, &data, &g, w, &cfg).unwrap();
        assert_eq!(trace.len(), 61);
        assert!(trace[60] < trace[0], "{} -> {}", trace[0], trace[60]);
        assert!(train_pose_head(&p, &[], &g, w, &cfg).is_err());
    }

    #[test]
    fn json_round_trip() {
        let p = init_head(5, 8);
        let q = HeadParams::from_json(&p.to_json().unwrap()).unwrap();
        assert_eq!(p, q);
        let bad = p.to_json().unwrap().replace("\"version\": 1", "\"version\": 2");
        assert!(matches!(HeadParams::from_json(&bad), Err(Error::Schema(f)) if f == "version"));
        let bad = p.to_json().unwrap().replace("\"modes\": 60", "\"modes\": 59");
        assert!(matches!(HeadParams::from_json(&bad), Err(Error::Schema(f)) if f == "modes"));
    }
}
