use crate::error::{Error, Result};

pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
pub const SSIM_K1: f64 = 0.01;
pub const SSIM_K2: f64 = 0.03;
/// Weight of the structural term.
pub const LAMBDA_SSIM: f64 = 0.2;

fn window() -> [f64; SSIM_WINDOW] {
    let half = (SSIM_WINDOW / 2) as f64;
    let mut w = [0.0; SSIM_WINDOW];
    for (i, v) in w.iter_mut().enumerate() {
        let x = i as f64 - half;
        *v = (-x * x / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp();
    }
    let s: f64 = w.iter().sum();
    w.map(|v| v / s)
}

/// Zero-padded same-size separable blur. The kernel is symmetric, so this
/// is also its own adjoint.
fn blur(src: &[f64], width: usize, height: usize) -> Vec<f64> {
    let w = window();
    let half = (SSIM_WINDOW / 2) as isize;
    let mut tmp = vec![0.0; src.len()];
    for r in 0..height {
        let row = &src[r * width..(r + 1) * width];
        for c in 0..width {
            let mut s = 0.0;
            for (k, wk) in w.iter().enumerate() {
                let cc = c as isize + k as isize - half;
                if cc >= 0 && (cc as usize) < width {
                    s += wk * row[cc as usize];
                }
            }
            tmp[r * width + c] = s;
        }
    }
    let mut out = vec![0.0; src.len()];
    for r in 0..height {
        for (k, wk) in w.iter().enumerate() {
            let rr = r as isize + k as isize - half;
            if rr < 0 || rr as usize >= height {
                continue;
            }
            let from = &tmp[rr as usize * width..(rr as usize + 1) * width];
            let to = &mut out[r * width..(r + 1) * width];
            for (t, f) in to.iter_mut().zip(from) {
                *t += wk * f;
            }
        }
    }
    out
}

struct Moments {
    mx: Vec<f64>,
    my: Vec<f64>,
    exx: Vec<f64>,
    eyy: Vec<f64>,
    exy: Vec<f64>,
}

fn moments(x: &[f64], y: &[f64], width: usize, height: usize) -> Moments {
    let xx: Vec<f64> = x.iter().map(|v| v * v).collect();
    let yy: Vec<f64> = y.iter().map(|v| v * v).collect();
    let xy: Vec<f64> = x.iter().zip(y).map(|(a, b)| a * b).collect();
    Moments {
        mx: blur(x, width, height),
        my: blur(y, width, height),
        exx: blur(&xx, width, height),
        eyy: blur(&yy, width, height),
        exy: blur(&xy, width, height),
    }
}

fn check(x: &[f64], y: &[f64], width: usize, height: usize) -> Result<()> {
    if x.len() != width * height || y.len() != width * height {
        return Err(Error::Contract(format!(
            "images of {} and {} values for a {width}x{height} grid",
            x.len(),
            y.len()
        )));
    }
    Ok(())
}

/// Mean structural similarity with an 11x11 Gaussian window on images
/// with dynamic range 1.
pub fn ssim(x: &[f64], y: &[f64], width: usize, height: usize) -> Result<f64> {
    Ok(ssim_with_grad(x, y, width, height, false)?.0)
}

/// SSIM and, if asked, its gradient with respect to `x`.
pub fn ssim_with_grad(x: &[f64], y: &[f64], width: usize, height: usize, grad: bool) -> Result<(f64, Vec<f64>)> {
    check(x, y, width, height)?;
    let c1 = SSIM_K1 * SSIM_K1;
    let c2 = SSIM_K2 * SSIM_K2;
    let m = moments(x, y, width, height);
    let n = x.len();
    let mut total = 0.0;
    let mut d_mx = vec![0.0; if grad { n } else { 0 }];
    let mut d_exx = d_mx.clone();
    let mut d_exy = d_mx.clone();
    for i in 0..n {
        let (mx, my) = (m.mx[i], m.my[i]);
        let sxx = m.exx[i] - mx * mx;
        let syy = m.eyy[i] - my * my;
        let sxy = m.exy[i] - mx * my;
        let a1 = 2.0 * mx * my + c1;
        let a2 = 2.0 * sxy + c2;
        let b1 = mx * mx + my * my + c1;
        let b2 = sxx + syy + c2;
        let num = a1 * a2;
        let den = b1 * b2;
        total += num / den;
        if grad {
            let dn = 2.0 * my * (a2 - a1);
            let dd = 2.0 * mx * (b2 - b1);
            d_mx[i] = (dn * den - num * dd) / (den * den) / n as f64;
            d_exy[i] = 2.0 * a1 / den / n as f64;
            d_exx[i] = -num * b1 / (den * den) / n as f64;
        }
    }
    if !grad {
        return Ok((total / n as f64, Vec::new()));
    }
    let g_mx = blur(&d_mx, width, height);
    let g_exx = blur(&d_exx, width, height);
    let g_exy = blur(&d_exy, width, height);
    let dx = (0..n)
        .map(|i| g_mx[i] + 2.0 * x[i] * g_exx[i] + y[i] * g_exy[i])
        .collect();
    Ok((total / n as f64, dx))
}

#[derive(Clone, Debug, PartialEq)]
pub struct LossValue {
    pub loss: f64,
    pub l1: f64,
    pub ssim: f64,
    /// dL/dpred.
    pub grad: Vec<f64>,
}

/// `(1 - lambda) * L1 + lambda * (1 - SSIM)` and its gradient.
pub fn loss(pred: &[f64], gt: &[f64], width: usize, height: usize) -> Result<LossValue> {
    loss_with(pred, gt, width, height, LAMBDA_SSIM)
}

pub fn loss_with(pred: &[f64], gt: &[f64], width: usize, height: usize, lambda: f64) -> Result<LossValue> {
    check(pred, gt, width, height)?;
    let n = pred.len() as f64;
    let l1 = pred.iter().zip(gt).map(|(a, b)| (a - b).abs()).sum::<f64>() / n;
    let (s, ds) = ssim_with_grad(pred, gt, width, height, true)?;
    let grad = pred
        .iter()
        .zip(gt)
        .zip(&ds)
        .map(|((a, b), d)| {
            let sign = if a > b {
                1.0
            } else if a < b {
                -1.0
            } else {
                0.0
            };
            (1.0 - lambda) * sign / n - lambda * d
        })
        .collect();
    Ok(LossValue {
        loss: (1.0 - lambda) * l1 + lambda * (1.0 - s),
        l1,
        ssim: s,
        grad,
    })
}
