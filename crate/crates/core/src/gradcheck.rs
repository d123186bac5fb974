//! Central finite-difference checks for the analytic loss gradients, and the
//! invariant suite behind `vomask daseg-check`.

use serde::Serialize;

use crate::daseg::{self, HeadParams, LatentGrid, NoiseSchedule, ObjectiveInputs, Tensor};
use crate::error::Result;
use crate::rng::SeededStream;

pub const STEP: f64 = 1e-4;
pub const REL_TOL: f64 = 1e-5;
pub const DEFAULT_POINTS: usize = 20;

/// `|a - n| / max(|a|, |n|)`, 0 when both vanish.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    let scale = analytic.abs().max(numeric.abs());
    if scale == 0.0 {
        0.0
    } else {
        (analytic - numeric).abs() / scale
    }
}

/// `(f(x + h e_i) - f(x - h e_i)) / 2h`.
pub fn central_difference<F>(f: F, x: &Tensor, i: usize, h: f64) -> Result<f64>
where
    F: Fn(&Tensor) -> Result<f64>,
{
    let v = x.data()[i];
    let up = f(&x.with(i, v + h))?;
    let down = f(&x.with(i, v - h))?;
    Ok((up - down) / (2.0 * h))
}

/// Worst relative error over `indices`.
pub fn max_relative_error<F>(f: F, x: &Tensor, analytic: &Tensor, indices: &[usize], h: f64) -> Result<f64>
where
    F: Fn(&Tensor) -> Result<f64>,
{
    let mut worst = 0.0f64;
    for &i in indices {
        let n = central_difference(&f, x, i, h)?;
        worst = worst.max(relative_error(analytic.data()[i], n));
    }
    Ok(worst)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckRow {
    pub name: String,
    /// Worst relative error, or absolute deviation for exact checks.
    pub error: f64,
    pub tolerance: f64,
    pub points: usize,
    pub passed: bool,
}

impl CheckRow {
    fn new(name: &str, error: f64, tolerance: f64, points: usize) -> Self {
        Self {
            name: name.into(),
            error,
            tolerance,
            points,
            passed: error <= tolerance,
        }
    }
}

fn sample_indices(n: usize, points: usize, rng: &mut SeededStream) -> Vec<usize> {
    if points >= n {
        return (0..n).collect();
    }
    let mut p = rng.permutation(n);
    p.truncate(points);
    p
}

fn binary(shape: &[usize], seed: u64, stream: u64) -> Result<Tensor> {
    let mut rng = SeededStream::new(seed, stream);
    let n = shape.iter().product();
    Tensor::new(shape, (0..n).map(|_| rng.bernoulli(0.5) as u8 as f64).collect())
}

/// Runs every gradient and invariant check, one row each.
pub fn run_suite(seed: u64, points: usize) -> Result<Vec<CheckRow>> {
    let shape = [2, 3, 4, 4];
    let n: usize = shape.iter().product();
    let mut pick = SeededStream::new(seed, 100);
    let mut rows = Vec::new();

    let pred = Tensor::uniform(&shape, 0.1, 0.9, seed, 1)?;
    let gt = binary(&shape, seed, 2)?;
    let seg = daseg::seg_loss(&pred, &gt)?;
    let idx = sample_indices(n, points, &mut pick);
    let err = max_relative_error(|p| Ok(daseg::seg_loss(p, &gt)?.value), &pred, &seg.grad, &idx, STEP)?;
    rows.push(CheckRow::new("seg_loss gradient", err, REL_TOL, idx.len()));

    let eps_true = Tensor::normal(&shape, seed, 3)?;
    let eps_pred = Tensor::normal(&shape, seed, 4)?;
    let side = binary(&shape, seed, 5)?;
    let diff = daseg::weighted_diff_loss(&eps_true, &eps_pred, &side, daseg::LAMBDA_W)?;
    let idx = sample_indices(n, points, &mut pick);
    let err = max_relative_error(
        |p| Ok(daseg::weighted_diff_loss(&eps_true, p, &side, daseg::LAMBDA_W)?.value),
        &eps_pred,
        &diff.grad,
        &idx,
        STEP,
    )?;
    rows.push(CheckRow::new("weighted_diff_loss gradient", err, REL_TOL, idx.len()));

    let inputs = ObjectiveInputs {
        eps_true: &eps_true,
        eps_pred: &eps_pred,
        side_effect: &side,
        mask_pred: &pred,
        mask_gt: &gt,
    };
    let obj = daseg::objective(&inputs, daseg::LAMBDA_W, daseg::LAMBDA_S)?;
    let total_wrt_eps = |p: &Tensor| {
        let x = ObjectiveInputs { eps_pred: p, ..inputs };
        Ok(daseg::objective(&x, daseg::LAMBDA_W, daseg::LAMBDA_S)?.value)
    };
    let total_wrt_mask = |p: &Tensor| {
        let x = ObjectiveInputs { mask_pred: p, ..inputs };
        Ok(daseg::objective(&x, daseg::LAMBDA_W, daseg::LAMBDA_S)?.value)
    };
    let idx = sample_indices(n, points, &mut pick);
    let err = max_relative_error(total_wrt_eps, &eps_pred, &obj.grad_eps_pred, &idx, STEP)?;
    rows.push(CheckRow::new("total_loss gradient (noise)", err, REL_TOL, idx.len()));
    let idx = sample_indices(n, points, &mut pick);
    let err = max_relative_error(total_wrt_mask, &pred, &obj.grad_mask_pred, &idx, STEP)?;
    rows.push(CheckRow::new("total_loss gradient (mask)", err, REL_TOL, idx.len()));

    let half = Tensor::filled(&shape, 0.5)?;
    let bce = daseg::seg_loss(&half, &gt)?.value;
    rows.push(CheckRow::new("bce(0.5) = ln 2", (bce - std::f64::consts::LN_2).abs(), 1e-9, 1));

    let ones = Tensor::filled(&shape, 1.0)?;
    let zeros = Tensor::zeros(&shape)?;
    let w = daseg::weighted_diff_loss(&eps_true, &eps_pred, &ones, 2.0)?.value;
    let u = daseg::weighted_diff_loss(&eps_true, &eps_pred, &zeros, 2.0)?.value;
    rows.push(CheckRow::new("weighted loss D=1 is 2x mse", (w - 2.0 * u).abs(), 0.0, 1));

    rows.push(CheckRow::new(
        "total_loss(1, 1, 0.2) = 1.2",
        (daseg::total_loss(1.0, 1.0, daseg::LAMBDA_S) - 1.2).abs(),
        0.0,
        1,
    ));

    let (b, l, c) = (2, 12, 8);
    let f = Tensor::normal(&[b, l, c], seed, 6)?;
    let e0 = Tensor::zeros(&[b, c])?;
    let m0 = Tensor::zeros(&[1, 2, c])?;
    let dev = daseg::da_adaln(&f, &e0, &m0)?.max_abs_diff(&daseg::layer_norm(&f, daseg::LAYER_NORM_EPS));
    rows.push(CheckRow::new("da_adaln zero modulation = layer norm", dev, 1e-12, 1));

    let e = Tensor::normal(&[b, c], seed, 7)?;
    let grid = LatentGrid { frames: 3, height: 2, width: 2 };
    let out = daseg::forward_head(&f, &e, &HeadParams::random(c, seed)?, grid)?;
    let outside = out.data().iter().filter(|&&v| v <= 0.0 || v >= 1.0).count();
    rows.push(CheckRow::new("forward_head output in (0, 1)", outside as f64, 0.0, out.len()));

    let sched = NoiseSchedule::cosine(1000)?;
    let z = daseg::forward_diffuse(&eps_true, 0, &eps_pred, &sched)?;
    rows.push(CheckRow::new("forward_diffuse t=0 identity", z.max_abs_diff(&eps_true), 0.0, 1));

    Ok(rows)
}

/// Fixed-width text table.
pub fn format_table(rows: &[CheckRow]) -> String {
    let mut s = format!("{:<40} {:>12} {:>10} {:>6}  result\n", "check", "error", "tol", "n");
    for r in rows {
        s.push_str(&format!(
            "{:<40} {:>12.3e} {:>10.1e} {:>6}  {}\n",
            r.name,
            r.error,
            r.tolerance,
            r.points,
            if r.passed { "PASS" } else { "FAIL" }
        ));
    }
    s
}
