//! Reference numerics for the timestep-aware segmentation head and the
//! stage-two training losses.
//!
//! Everything here is plain double precision with analytic gradients for the
//! losses; [`crate::gradcheck`] verifies them numerically.
//!
//! Conventions:
//! * LayerNorm runs over the channel axis with no learned affine and
//!   epsilon 1e-5. A row whose entries are all equal normalizes to exactly 0.
//! * Modulation: `m + e` broadcast to `B x 2 x C`, split along the size-2
//!   axis into shift (`beta`, index 0) and scale (`gamma`, index 1); the
//!   output is `LN(f) * (1 + gamma) + beta`.
//! * Head MLP: dense `C -> C`, tanh-approximated GELU, dense `C -> 1`,
//!   sigmoid. One token per latent cell, tokens ordered frame, row, column.
//! * Losses are means over elements.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mask::MaskSequence;
use crate::muse;
use crate::rng::SeededStream;

pub const LAYER_NORM_EPS: f64 = 1e-5;
pub const BCE_CLAMP: f64 = 1e-7;
/// Weight of side-effect pixels in the diffusion loss.
pub const LAMBDA_W: f64 = 2.0;
/// Weight of the segmentation loss in the total objective.
pub const LAMBDA_S: f64 = 0.2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    pub fn new(shape: &[usize], data: Vec<f64>) -> Result<Self> {
        if shape.is_empty() || shape.len() > 4 {
            return Err(Error::InvalidArgument(format!(
                "tensor rank must be 1..=4, got {}",
                shape.len()
            )));
        }
        let n: usize = shape.iter().product();
        if n != data.len() {
            return Err(Error::dims(
                format!("{n} elements for shape {shape:?}"),
                format!("{} elements", data.len()),
            ));
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "tensor element {i} is not finite"
            )));
        }
        Ok(Self {
            shape: shape.to_vec(),
            data,
        })
    }

    pub fn zeros(shape: &[usize]) -> Result<Self> {
        Self::new(shape, vec![0.0; shape.iter().product()])
    }

    pub fn filled(shape: &[usize], value: f64) -> Result<Self> {
        Self::new(shape, vec![value; shape.iter().product()])
    }

    /// Uniform entries in `[lo, hi)` drawn from `seed`.
    pub fn uniform(shape: &[usize], lo: f64, hi: f64, seed: u64, stream: u64) -> Result<Self> {
        let mut rng = SeededStream::new(seed, stream);
        let n = shape.iter().product();
        Self::new(shape, (0..n).map(|_| rng.uniform(lo, hi)).collect())
    }

    /// Approximately standard-normal entries (Box-Muller) drawn from `seed`.
    pub fn normal(shape: &[usize], seed: u64, stream: u64) -> Result<Self> {
        let mut rng = SeededStream::new(seed, stream);
        let n: usize = shape.iter().product();
        let mut data = Vec::with_capacity(n);
        while data.len() < n {
            let u1 = 1.0 - rng.unit();
            let u2 = rng.unit();
            let r = (-2.0 * u1.ln()).sqrt();
            let th = 2.0 * std::f64::consts::PI * u2;
            data.push(r * th.cos());
            if data.len() < n {
                data.push(r * th.sin());
            }
        }
        Self::new(shape, data)
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn reshape(self, shape: &[usize]) -> Result<Self> {
        Self::new(shape, self.data)
    }

    /// Copy with element `i` replaced.
    pub fn with(&self, i: usize, value: f64) -> Self {
        let mut t = self.clone();
        t.data[i] = value;
        t
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    fn require_shape(&self, other: &Self, what: &str) -> Result<()> {
        if self.shape != other.shape {
            return Err(Error::dims(
                format!("{what} shape {:?}", self.shape),
                format!("{:?}", other.shape),
            ));
        }
        Ok(())
    }

    fn rank(&self, r: usize, what: &str) -> Result<()> {
        if self.shape.len() != r {
            return Err(Error::dims(
                format!("{what} of rank {r}"),
                format!("shape {:?}", self.shape),
            ));
        }
        Ok(())
    }
}

/// LayerNorm over the last axis, no affine.
pub fn layer_norm(f: &Tensor, eps: f64) -> Tensor {
    let c = *f.shape.last().unwrap();
    let mut out = f.clone();
    for row in out.data.chunks_exact_mut(c) {
        if row.iter().all(|&v| v == row[0]) {
            row.fill(0.0);
            continue;
        }
        let mean = row.iter().sum::<f64>() / c as f64;
        let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / c as f64;
        let inv = 1.0 / (var + eps).sqrt();
        row.iter_mut().for_each(|v| *v = (*v - mean) * inv);
    }
    out
}

/// Shift and scale, each `B x C`, from timestep embedding `e` (`B x C`) and
/// modulation parameters `m` (`1 x 2 x C`).
pub fn modulation(e: &Tensor, m: &Tensor) -> Result<(Tensor, Tensor)> {
    e.rank(2, "timestep embedding")?;
    m.rank(3, "modulation")?;
    let (b, c) = (e.shape[0], e.shape[1]);
    if m.shape != [1, 2, c] {
        return Err(Error::dims(format!("modulation [1, 2, {c}]"), format!("{:?}", m.shape)));
    }
    let mut beta = Vec::with_capacity(b * c);
    let mut gamma = Vec::with_capacity(b * c);
    for row in e.data.chunks_exact(c) {
        beta.extend(row.iter().zip(&m.data[..c]).map(|(x, y)| x + y));
        gamma.extend(row.iter().zip(&m.data[c..]).map(|(x, y)| x + y));
    }
    Ok((Tensor::new(&[b, c], beta)?, Tensor::new(&[b, c], gamma)?))
}

/// Timestep-conditioned adaptive LayerNorm of features `f` (`B x L x C`).
pub fn da_adaln(f: &Tensor, e: &Tensor, m: &Tensor) -> Result<Tensor> {
    da_adaln_eps(f, e, m, LAYER_NORM_EPS)
}

pub fn da_adaln_eps(f: &Tensor, e: &Tensor, m: &Tensor, eps: f64) -> Result<Tensor> {
    f.rank(3, "features")?;
    let (b, l, c) = (f.shape[0], f.shape[1], f.shape[2]);
    if e.shape != [b, c] {
        return Err(Error::dims(format!("timestep embedding [{b}, {c}]"), format!("{:?}", e.shape)));
    }
    let (beta, gamma) = modulation(e, m)?;
    let mut out = layer_norm(f, eps);
    for bi in 0..b {
        let sh = &beta.data[bi * c..(bi + 1) * c];
        let sc = &gamma.data[bi * c..(bi + 1) * c];
        for row in out.data[bi * l * c..(bi + 1) * l * c].chunks_exact_mut(c) {
            for ((v, s), g) in row.iter_mut().zip(sh).zip(sc) {
                *v = *v * (1.0 + g) + s;
            }
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeadParams {
    /// `1 x 2 x C`.
    pub modulation: Tensor,
    /// `C x C`, input-major: `hidden[j] = sum_i x[i] * w1[i, j] + b1[j]`.
    pub w1: Tensor,
    pub b1: Tensor,
    /// `C`.
    pub w2: Tensor,
    pub b2: f64,
    pub eps: f64,
}

impl HeadParams {
    pub fn zeros(channels: usize) -> Result<Self> {
        Ok(Self {
            modulation: Tensor::zeros(&[1, 2, channels])?,
            w1: Tensor::zeros(&[channels, channels])?,
            b1: Tensor::zeros(&[channels])?,
            w2: Tensor::zeros(&[channels])?,
            b2: 0.0,
            eps: LAYER_NORM_EPS,
        })
    }

    /// Small uniform initialization, scale `1/sqrt(C)`.
    pub fn random(channels: usize, seed: u64) -> Result<Self> {
        let s = 1.0 / (channels as f64).sqrt();
        Ok(Self {
            modulation: Tensor::uniform(&[1, 2, channels], -0.1, 0.1, seed, 10)?,
            w1: Tensor::uniform(&[channels, channels], -s, s, seed, 11)?,
            b1: Tensor::uniform(&[channels], -s, s, seed, 12)?,
            w2: Tensor::uniform(&[channels], -s, s, seed, 13)?,
            b2: 0.0,
            eps: LAYER_NORM_EPS,
        })
    }

    pub fn channels(&self) -> usize {
        self.b1.len()
    }

    fn validate(&self) -> Result<()> {
        let c = self.channels();
        let ok = self.modulation.shape == [1, 2, c]
            && self.w1.shape == [c, c]
            && self.w2.shape == [c]
            && self.b2.is_finite()
            && self.eps > 0.0;
        if !ok {
            return Err(Error::Config(format!("head parameters inconsistent with C = {c}")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LatentGrid {
    pub frames: usize,
    pub height: usize,
    pub width: usize,
}

impl LatentGrid {
    pub fn cells(&self) -> usize {
        self.frames * self.height * self.width
    }
}

pub fn gelu(x: f64) -> f64 {
    const K: f64 = 0.797_884_560_802_865_4; // sqrt(2 / pi)
    0.5 * x * (1.0 + (K * (x + 0.044715 * x * x * x)).tanh())
}

pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Soft mask `B x F_p x H_p x W_p` predicted from features `B x L x C`.
pub fn forward_head(f: &Tensor, e: &Tensor, params: &HeadParams, grid: LatentGrid) -> Result<Tensor> {
    params.validate()?;
    f.rank(3, "features")?;
    let (b, l, c) = (f.shape[0], f.shape[1], f.shape[2]);
    if c != params.channels() {
        return Err(Error::dims(format!("{} channels", params.channels()), format!("{c} channels")));
    }
    if l != grid.cells() {
        return Err(Error::InvalidArgument(format!(
            "{l} tokens cannot be unpatchified onto a {}x{}x{} grid",
            grid.frames, grid.height, grid.width
        )));
    }
    let normed = da_adaln_eps(f, e, &params.modulation, params.eps)?;
    let mut out = Vec::with_capacity(b * l);
    let mut hidden = vec![0.0; c];
    for token in normed.data.chunks_exact(c) {
        hidden.copy_from_slice(&params.b1.data);
        for (i, &x) in token.iter().enumerate() {
            let w_row = &params.w1.data[i * c..(i + 1) * c];
            for (h, w) in hidden.iter_mut().zip(w_row) {
                *h += x * w;
            }
        }
        let logit = params.b2
            + hidden
                .iter()
                .zip(&params.w2.data)
                .map(|(&h, w)| gelu(h) * w)
                .sum::<f64>();
        out.push(sigmoid(logit));
    }
    Tensor::new(&[b, grid.frames, grid.height, grid.width], out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct LossGrad {
    pub value: f64,
    /// Gradient with respect to the prediction argument.
    pub grad: Tensor,
    /// Elements clamped away from 0 or 1 before the logarithm.
    pub clamped: usize,
}

fn require_binary(t: &Tensor, what: &str) -> Result<()> {
    if let Some(i) = t.data.iter().position(|&v| v != 0.0 && v != 1.0) {
        return Err(Error::InvalidArgument(format!(
            "{what} element {i} is {}, expected 0 or 1",
            t.data[i]
        )));
    }
    Ok(())
}

/// Mean binary cross-entropy of soft mask `pred` against binary `gt`.
pub fn seg_loss(pred: &Tensor, gt: &Tensor) -> Result<LossGrad> {
    pred.require_shape(gt, "ground truth")?;
    require_binary(gt, "ground truth")?;
    let n = pred.len() as f64;
    let mut value = 0.0;
    let mut clamped = 0;
    let mut grad = Vec::with_capacity(pred.len());
    for (&p, &g) in pred.data.iter().zip(&gt.data) {
        let q = p.clamp(BCE_CLAMP, 1.0 - BCE_CLAMP);
        if q != p {
            clamped += 1;
        }
        value -= g * q.ln() + (1.0 - g) * (1.0 - q).ln();
        grad.push((q - g) / (q * (1.0 - q)) / n);
    }
    Ok(LossGrad {
        value: value / n,
        grad: Tensor::new(&pred.shape, grad)?,
        clamped,
    })
}

/// Mean squared noise error with side-effect elements (`D = 1`) weighted by
/// `lambda_w`.
pub fn weighted_diff_loss(eps_true: &Tensor, eps_pred: &Tensor, side_effect: &Tensor, lambda_w: f64) -> Result<LossGrad> {
    eps_true.require_shape(eps_pred, "noise")?;
    eps_true.require_shape(side_effect, "side-effect mask")?;
    require_binary(side_effect, "side-effect mask")?;
    let n = eps_true.len() as f64;
    let mut value = 0.0;
    let mut grad = Vec::with_capacity(eps_true.len());
    for ((&t, &p), &d) in eps_true.data.iter().zip(&eps_pred.data).zip(&side_effect.data) {
        let w = if d == 1.0 { lambda_w } else { 1.0 };
        let r = t - p;
        value += w * r * r;
        grad.push(-2.0 * w * r / n);
    }
    Ok(LossGrad {
        value: value / n,
        grad: Tensor::new(&eps_true.shape, grad)?,
        clamped: 0,
    })
}

pub fn total_loss(diff: f64, seg: f64, lambda_s: f64) -> f64 {
    diff + lambda_s * seg
}

/// Total objective with gradients for both predictions.
#[derive(Debug, Clone, PartialEq)]
pub struct Objective {
    pub value: f64,
    pub diff: f64,
    pub seg: f64,
    pub grad_eps_pred: Tensor,
    pub grad_mask_pred: Tensor,
}

#[derive(Clone, Copy)]
pub struct ObjectiveInputs<'a> {
    pub eps_true: &'a Tensor,
    pub eps_pred: &'a Tensor,
    pub side_effect: &'a Tensor,
    pub mask_pred: &'a Tensor,
    pub mask_gt: &'a Tensor,
}

pub fn objective(x: &ObjectiveInputs<'_>, lambda_w: f64, lambda_s: f64) -> Result<Objective> {
    let d = weighted_diff_loss(x.eps_true, x.eps_pred, x.side_effect, lambda_w)?;
    let s = seg_loss(x.mask_pred, x.mask_gt)?;
    let mut grad_mask_pred = s.grad;
    grad_mask_pred.data.iter_mut().for_each(|g| *g *= lambda_s);
    Ok(Objective {
        value: total_loss(d.value, s.value, lambda_s),
        diff: d.value,
        seg: s.value,
        grad_eps_pred: d.grad,
        grad_mask_pred,
    })
}

/// Variance-preserving noise schedule, `alpha_t^2 + sigma_t^2 = 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseSchedule {
    alpha: Vec<f64>,
    sigma: Vec<f64>,
}

impl NoiseSchedule {
    /// `alpha_t = cos(pi/2 * t/T)`, `sigma_t = sin(pi/2 * t/T)`, `t = 0..=T`.
    pub fn cosine(steps: usize) -> Result<Self> {
        if steps == 0 {
            return Err(Error::InvalidArgument("schedule needs T >= 1".into()));
        }
        let (alpha, sigma) = (0..=steps)
            .map(|t| {
                let a = std::f64::consts::FRAC_PI_2 * t as f64 / steps as f64;
                (a.cos(), a.sin())
            })
            .unzip();
        Ok(Self { alpha, sigma })
    }

    pub fn steps(&self) -> usize {
        self.alpha.len() - 1
    }

    pub fn alpha(&self, t: usize) -> f64 {
        self.alpha[t]
    }

    pub fn sigma(&self, t: usize) -> f64 {
        self.sigma[t]
    }
}

/// `z_t = alpha_t * z0 + sigma_t * eps`.
pub fn forward_diffuse(z0: &Tensor, t: usize, eps: &Tensor, sched: &NoiseSchedule) -> Result<Tensor> {
    z0.require_shape(eps, "noise")?;
    if t > sched.steps() {
        return Err(Error::InvalidArgument(format!(
            "timestep {t} outside 0..={}",
            sched.steps()
        )));
    }
    let (a, s) = (sched.alpha(t), sched.sigma(t));
    let data = z0.data.iter().zip(&eps.data).map(|(z, e)| a * z + s * e).collect();
    Tensor::new(&z0.shape, data)
}

/// Segmentation target on the latent grid: windowed temporal union, then
/// spatial max-pooling by `ratio_s`. Returns `F_p x H_p x W_p`.
pub fn prepare_gt(mask: &MaskSequence, ratio_t: usize, ratio_s: usize) -> Result<Tensor> {
    if ratio_s == 0 {
        return Err(Error::InvalidArgument("spatial ratio must be >= 1".into()));
    }
    let (_, h, w) = mask.dims();
    if h % ratio_s != 0 || w % ratio_s != 0 {
        return Err(Error::InvalidArgument(format!(
            "{h}x{w} frame is not divisible by spatial ratio {ratio_s}"
        )));
    }
    let latent = muse::compress_union(mask, ratio_t)?;
    let (fp, hp, wp) = (latent.frames(), h / ratio_s, w / ratio_s);
    let mut data = vec![0.0; fp * hp * wp];
    for t in 0..fp {
        for y in 0..h {
            for x in 0..w {
                if latent.get(t, y, x) {
                    data[(t * hp + y / ratio_s) * wp + x / ratio_s] = 1.0;
                }
            }
        }
    }
    Tensor::new(&[fp, hp, wp], data)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn feats(b: usize, l: usize, c: usize, seed: u64) -> Tensor {
        Tensor::normal(&[b, l, c], seed, 0).unwrap()
    }

    #[test]
    fn tensor_validation() {
        assert!(Tensor::new(&[2, 2], vec![0.0; 3]).is_err());
        assert!(Tensor::new(&[1, 1, 1, 1, 1], vec![0.0]).is_err());
        assert!(Tensor::new(&[1], vec![f64::NAN]).is_err());
    }

    #[test]
    fn zero_modulation_is_plain_layer_norm() {
        let f = feats(2, 5, 6, 1);
        let e = Tensor::zeros(&[2, 6]).unwrap();
        let m = Tensor::zeros(&[1, 2, 6]).unwrap();
        let out = da_adaln(&f, &e, &m).unwrap();
        assert!(out.max_abs_diff(&layer_norm(&f, LAYER_NORM_EPS)) <= 1e-12);
    }

    #[test]
    fn constant_rows_give_shift_only() {
        let f = Tensor::filled(&[2, 3, 4], 0.1).unwrap();
        let e = Tensor::uniform(&[2, 4], -1.0, 1.0, 3, 0).unwrap();
        let m = Tensor::uniform(&[1, 2, 4], -1.0, 1.0, 3, 1).unwrap();
        let out = da_adaln(&f, &e, &m).unwrap();
        let (beta, _) = modulation(&e, &m).unwrap();
        for b in 0..2 {
            for l in 0..3 {
                for c in 0..4 {
                    assert_eq!(out.data()[(b * 3 + l) * 4 + c], beta.data()[b * 4 + c]);
                }
            }
        }
    }

    #[test]
    fn modulation_is_linear_in_e() {
        let e = Tensor::uniform(&[3, 5], -1.0, 1.0, 4, 0).unwrap();
        let e2 = Tensor::new(&[3, 5], e.data().iter().map(|v| 2.0 * v).collect()).unwrap();
        let m = Tensor::uniform(&[1, 2, 5], -1.0, 1.0, 4, 1).unwrap();
        let (b1, g1) = modulation(&e, &m).unwrap();
        let (b2, g2) = modulation(&e2, &m).unwrap();
        for i in 0..15 {
            assert!((b2.data()[i] - b1.data()[i] - e.data()[i]).abs() < 1e-15);
            assert!((g2.data()[i] - g1.data()[i] - e.data()[i]).abs() < 1e-15);
        }
    }

    #[test]
    fn adaln_rejects_mismatch() {
        let f = feats(2, 3, 4, 0);
        assert!(da_adaln(&f, &Tensor::zeros(&[2, 5]).unwrap(), &Tensor::zeros(&[1, 2, 4]).unwrap()).is_err());
        assert!(da_adaln(&f, &Tensor::zeros(&[2, 4]).unwrap(), &Tensor::zeros(&[1, 3, 4]).unwrap()).is_err());
    }

    #[test]
    fn head_examples() {
        let grid = LatentGrid { frames: 2, height: 2, width: 3 };
        let f = feats(3, 12, 8, 5);
        let e = Tensor::normal(&[3, 8], 5, 1).unwrap();
        let zero = forward_head(&f, &e, &HeadParams::zeros(8).unwrap(), grid).unwrap();
        assert_eq!(zero.shape(), &[3, 2, 2, 3]);
        assert!(zero.data().iter().all(|&v| v == 0.5));

        let p = HeadParams::random(8, 9).unwrap();
        let out = forward_head(&f, &e, &p, grid).unwrap();
        assert!(out.data().iter().all(|&v| v > 0.0 && v < 1.0));

        // batch equivariance: swap entries 0 and 2
        let swap = |t: &Tensor, per: usize| {
            let mut d = t.data().to_vec();
            let (a, rest) = d.split_at_mut(2 * per);
            a[..per].swap_with_slice(&mut rest[..per]);
            Tensor::new(t.shape(), d).unwrap()
        };
        let out_sw = forward_head(&swap(&f, 12 * 8), &swap(&e, 8), &p, grid).unwrap();
        assert_eq!(out_sw, swap(&out, 12));

        let bad = LatentGrid { frames: 5, height: 1, width: 1 };
        assert!(matches!(forward_head(&f, &e, &p, bad), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn bce_at_half_is_ln2() {
        let p = Tensor::filled(&[2, 3], 0.5).unwrap();
        let g = Tensor::new(&[2, 3], vec![0.0, 1.0, 1.0, 0.0, 1.0, 0.0]).unwrap();
        let l = seg_loss(&p, &g).unwrap();
        assert!((l.value - std::f64::consts::LN_2).abs() < 1e-12);
        assert_eq!(l.clamped, 0);
    }

    #[test]
    fn bce_clamps_exact_targets() {
        let g = Tensor::new(&[4], vec![0.0, 1.0, 1.0, 0.0]).unwrap();
        let l = seg_loss(&g, &g).unwrap();
        assert_eq!(l.clamped, 4);
        let floor = -(1.0 - BCE_CLAMP).ln();
        assert!((l.value - floor).abs() < 1e-15);
        assert!(l.grad.data().iter().all(|v| v.is_finite()));
        assert!(seg_loss(&g, &Tensor::filled(&[4], 0.5).unwrap()).is_err());
    }

    #[test]
    fn weighted_loss_examples() {
        let t = Tensor::normal(&[2, 3, 4], 1, 0).unwrap();
        let p = Tensor::normal(&[2, 3, 4], 1, 1).unwrap();
        let mse = t.data().iter().zip(p.data()).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / 24.0;
        let zero = Tensor::zeros(&[2, 3, 4]).unwrap();
        let one = Tensor::filled(&[2, 3, 4], 1.0).unwrap();
        assert_eq!(weighted_diff_loss(&t, &p, &zero, LAMBDA_W).unwrap().value, mse);
        let w = weighted_diff_loss(&t, &p, &one, LAMBDA_W).unwrap().value;
        assert_eq!(w, 2.0 * mse);
        assert!(weighted_diff_loss(&t, &p, &Tensor::zeros(&[24]).unwrap(), 2.0).is_err());
    }

    #[test]
    fn weighted_loss_scales_with_in_region_share() {
        let t = Tensor::normal(&[40], 2, 0).unwrap();
        let p = Tensor::normal(&[40], 2, 1).unwrap();
        let d = Tensor::new(&[40], (0..40).map(|i| (i % 3 == 0) as u8 as f64).collect()).unwrap();
        let base = weighted_diff_loss(&t, &p, &d, 1.0).unwrap().value;
        let share: f64 = (0..40)
            .filter(|i| i % 3 == 0)
            .map(|i| (t.data()[i] - p.data()[i]).powi(2))
            .sum::<f64>()
            / 40.0;
        for lw in [0.5, 2.0, 3.5, 10.0] {
            let v = weighted_diff_loss(&t, &p, &d, lw).unwrap().value;
            assert!((v - base - (lw - 1.0) * share).abs() < 1e-12);
        }
    }

    #[test]
    fn total_loss_examples() {
        assert_eq!(total_loss(0.7, 0.0, LAMBDA_S), 0.7);
        assert_eq!(total_loss(1.0, 1.0, LAMBDA_S), 1.2);
        let (a, b, c, d) = (0.3, 1.1, 0.25, 2.0);
        assert!((total_loss(a + b, c + d, 0.2) - total_loss(a, c, 0.2) - total_loss(b, d, 0.2)).abs() < 1e-15);
    }

    #[test]
    fn diffusion_endpoints() {
        let s = NoiseSchedule::cosine(1000).unwrap();
        assert_eq!((s.alpha(0), s.sigma(0)), (1.0, 0.0));
        for t in [0, 1, 250, 999, 1000] {
            assert!((s.alpha(t).powi(2) + s.sigma(t).powi(2) - 1.0).abs() < 1e-15);
        }
        assert!((1..=1000).all(|t| s.alpha(t) < s.alpha(t - 1) && s.sigma(t) > s.sigma(t - 1)));
        let z = Tensor::normal(&[3, 4], 7, 0).unwrap();
        let e = Tensor::normal(&[3, 4], 7, 1).unwrap();
        assert_eq!(forward_diffuse(&z, 0, &e, &s).unwrap(), z);
        let end = forward_diffuse(&z, 1000, &e, &s).unwrap();
        assert!(end.max_abs_diff(&e) < 1e-15);
        assert!(forward_diffuse(&z, 1001, &e, &s).is_err());
    }

    #[test]
    fn diffusion_preserves_second_moment() {
        let s = NoiseSchedule::cosine(100).unwrap();
        let z = Tensor::normal(&[10_000], 11, 0).unwrap();
        let e = Tensor::normal(&[10_000], 11, 1).unwrap();
        for t in [10, 50, 90] {
            let zt = forward_diffuse(&z, t, &e, &s).unwrap();
            let m2 = zt.data().iter().map(|v| v * v).sum::<f64>() / 10_000.0;
            assert!((m2 - 1.0).abs() < 0.03, "t={t} m2={m2}");
        }
    }

    #[test]
    fn prepare_gt_examples() {
        let ones = MaskSequence::ones(9, 8, 8).unwrap();
        let g = prepare_gt(&ones, 4, 2).unwrap();
        assert_eq!(g.shape(), &[3, 4, 4]);
        assert!(g.data().iter().all(|&v| v == 1.0));

        let mut m = MaskSequence::zeros(9, 8, 8).unwrap();
        m.set(6, 5, 2, true);
        let g = prepare_gt(&m, 4, 4).unwrap();
        assert_eq!(g.data().iter().filter(|&&v| v == 1.0).count(), 1);
        assert_eq!(g.data()[(2 * 2 + 1) * 2], 1.0);

        let g1 = prepare_gt(&m, 4, 1).unwrap();
        let u = muse::compress_union(&m, 4).unwrap();
        assert_eq!(g1.data(), u.as_slice().iter().map(|&v| v as f64).collect::<Vec<_>>());

        assert!(prepare_gt(&m, 4, 3).is_err());
    }
}
