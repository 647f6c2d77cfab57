//! Photometric loss, SSIM and PSNR, with the loss gradient w.r.t. the
//! rendered image.

use thiserror::Error;

use crate::image::ImageBuffer;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricError {
    #[error("image sizes differ: {0:?} vs {1:?}")]
    Dimensions((u32, u32), (u32, u32)),
}

pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
const C1: f64 = 0.01 * 0.01;
const C2: f64 = 0.03 * 0.03;

fn check(a: &ImageBuffer, b: &ImageBuffer) -> Result<(), MetricError> {
    if a.same_size(b) {
        Ok(())
    } else {
        Err(MetricError::Dimensions(
            (a.width(), a.height()),
            (b.width(), b.height()),
        ))
    }
}

/// Peak signal-to-noise ratio with peak 1; `f64::INFINITY` for identical images.
pub fn psnr(a: &ImageBuffer, b: &ImageBuffer) -> Result<f64, MetricError> {
    check(a, b)?;
    let n = (a.pixels().len() * 3) as f64;
    let sse: f64 = a
        .pixels()
        .iter()
        .zip(b.pixels())
        .flat_map(|(p, q)| (0..3).map(move |c| (p[c] - q[c]).powi(2)))
        .sum();
    let mse = sse / n;
    Ok(if mse == 0.0 {
        f64::INFINITY
    } else {
        10.0 * (1.0 / mse).log10()
    })
}

pub fn l1(a: &ImageBuffer, b: &ImageBuffer) -> Result<f64, MetricError> {
    check(a, b)?;
    let n = (a.pixels().len() * 3) as f64;
    let sum: f64 = a
        .pixels()
        .iter()
        .zip(b.pixels())
        .flat_map(|(p, q)| (0..3).map(move |c| (p[c] - q[c]).abs()))
        .sum();
    Ok(sum / n)
}

/// Mean SSIM over pixels and channels.
pub fn ssim(a: &ImageBuffer, b: &ImageBuffer) -> Result<f64, MetricError> {
    check(a, b)?;
    let w = a.width() as usize;
    let h = a.height() as usize;
    let filter = Window::new(w, h);
    let mut total = 0.0;
    for c in 0..3 {
        let x = channel(a, c);
        let y = channel(b, c);
        let maps = SsimMaps::compute(&filter, &x, &y);
        total += maps.s.iter().sum::<f64>();
    }
    Ok(total / (3 * w * h) as f64)
}

/// `(1 − λ)·L1 + λ·(1 − SSIM)`.
pub fn loss(rendered: &ImageBuffer, target: &ImageBuffer, lambda: f64) -> Result<f64, MetricError> {
    Ok(loss_and_gradient(rendered, target, lambda, false)?.0)
}

/// Loss value and, if requested, its gradient w.r.t. every rendered pixel.
pub fn loss_and_gradient(
    rendered: &ImageBuffer,
    target: &ImageBuffer,
    lambda: f64,
    want_grad: bool,
) -> Result<(f64, Option<ImageBuffer>), MetricError> {
    check(rendered, target)?;
    let w = rendered.width() as usize;
    let h = rendered.height() as usize;
    let n = (w * h * 3) as f64;
    let mut grad = want_grad.then(|| ImageBuffer::new(rendered.width(), rendered.height(), [0.0; 3]));

    let mut l1_sum = 0.0;
    for (i, (p, q)) in rendered.pixels().iter().zip(target.pixels()).enumerate() {
        for c in 0..3 {
            let d = p[c] - q[c];
            l1_sum += d.abs();
            if let Some(g) = grad.as_mut() {
                let sign = if d > 0.0 {
                    1.0
                } else if d < 0.0 {
                    -1.0
                } else {
                    0.0
                };
                g.pixels_mut()[i][c] = (1.0 - lambda) * sign / n;
            }
        }
    }
    let mut value = (1.0 - lambda) * l1_sum / n;

    if lambda != 0.0 {
        let filter = Window::new(w, h);
        let mut ssim_sum = 0.0;
        for c in 0..3 {
            let x = channel(rendered, c);
            let y = channel(target, c);
            let maps = SsimMaps::compute(&filter, &x, &y);
            ssim_sum += maps.s.iter().sum::<f64>();
            if let Some(g) = grad.as_mut() {
                let dx = maps.backward(&filter, &x, &y, -lambda / n);
                for (px, d) in g.pixels_mut().iter_mut().zip(dx) {
                    px[c] += d;
                }
            }
        }
        value += lambda * (1.0 - ssim_sum / n);
    }
    Ok((value, grad))
}

fn channel(img: &ImageBuffer, c: usize) -> Vec<f64> {
    img.pixels().iter().map(|p| p[c]).collect()
}

/// Separable Gaussian window, renormalized by its in-bounds mass so that
/// border pixels average only real samples.
struct Window {
    taps: [f64; SSIM_WINDOW],
    width: usize,
    height: usize,
    norm_x: Vec<f64>,
    norm_y: Vec<f64>,
}

impl Window {
    fn new(width: usize, height: usize) -> Self {
        let r = (SSIM_WINDOW / 2) as f64;
        let mut taps = [0.0; SSIM_WINDOW];
        for (i, t) in taps.iter_mut().enumerate() {
            let d = i as f64 - r;
            *t = (-d * d / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp();
        }
        let sum: f64 = taps.iter().sum();
        taps.iter_mut().for_each(|t| *t /= sum);
        let mass = |len: usize| -> Vec<f64> {
            (0..len)
                .map(|p| {
                    (0..SSIM_WINDOW)
                        .filter_map(|k| offset(p, k, len))
                        .map(|(_, k)| taps[k])
                        .sum()
                })
                .collect()
        };
        Self {
            taps,
            width,
            height,
            norm_x: mass(width),
            norm_y: mass(height),
        }
    }

    /// Normalized filter: out[p] = Σ_q G(p − q)·v[q] / Z(p).
    fn apply(&self, v: &[f64]) -> Vec<f64> {
        let mut out = self.blur(v);
        for y in 0..self.height {
            for x in 0..self.width {
                out[y * self.width + x] /= self.norm_x[x] * self.norm_y[y];
            }
        }
        out
    }

    /// Adjoint of [`Window::apply`]: out[q] = Σ_p G(p − q)·v[p] / Z(p).
    fn apply_adjoint(&self, v: &[f64]) -> Vec<f64> {
        let mut scaled = v.to_vec();
        for y in 0..self.height {
            for x in 0..self.width {
                scaled[y * self.width + x] /= self.norm_x[x] * self.norm_y[y];
            }
        }
        self.blur(&scaled)
    }

    /// Truncated, unnormalized separable convolution (the kernel is symmetric).
    fn blur(&self, v: &[f64]) -> Vec<f64> {
        let (w, h) = (self.width, self.height);
        let mut tmp = vec![0.0; w * h];
        for y in 0..h {
            let row = &v[y * w..(y + 1) * w];
            for x in 0..w {
                tmp[y * w + x] = (0..SSIM_WINDOW)
                    .filter_map(|k| offset(x, k, w))
                    .map(|(q, k)| self.taps[k] * row[q])
                    .sum();
            }
        }
        let mut out = vec![0.0; w * h];
        for y in 0..h {
            for x in 0..w {
                out[y * w + x] = (0..SSIM_WINDOW)
                    .filter_map(|k| offset(y, k, h))
                    .map(|(q, k)| self.taps[k] * tmp[q * w + x])
                    .sum();
            }
        }
        out
    }
}

/// Sample index for tap `k` around `p`, if inside `0..len`.
#[inline]
fn offset(p: usize, k: usize, len: usize) -> Option<(usize, usize)> {
    let q = (p + k).checked_sub(SSIM_WINDOW / 2)?;
    (q < len).then_some((q, k))
}

struct SsimMaps {
    s: Vec<f64>,
    mu_x: Vec<f64>,
    mu_y: Vec<f64>,
    a1: Vec<f64>,
    a2: Vec<f64>,
    b1: Vec<f64>,
    b2: Vec<f64>,
}

impl SsimMaps {
    fn compute(f: &Window, x: &[f64], y: &[f64]) -> Self {
        let mu_x = f.apply(x);
        let mu_y = f.apply(y);
        let xx: Vec<f64> = x.iter().map(|v| v * v).collect();
        let yy: Vec<f64> = y.iter().map(|v| v * v).collect();
        let xy: Vec<f64> = x.iter().zip(y).map(|(a, b)| a * b).collect();
        let exx = f.apply(&xx);
        let eyy = f.apply(&yy);
        let exy = f.apply(&xy);
        let n = x.len();
        let mut maps = Self {
            s: vec![0.0; n],
            mu_x,
            mu_y,
            a1: vec![0.0; n],
            a2: vec![0.0; n],
            b1: vec![0.0; n],
            b2: vec![0.0; n],
        };
        for i in 0..n {
            let (mx, my) = (maps.mu_x[i], maps.mu_y[i]);
            let sxx = exx[i] - mx * mx;
            let syy = eyy[i] - my * my;
            let sxy = exy[i] - mx * my;
            maps.a1[i] = 2.0 * mx * my + C1;
            maps.a2[i] = 2.0 * sxy + C2;
            maps.b1[i] = mx * mx + my * my + C1;
            maps.b2[i] = sxx + syy + C2;
            maps.s[i] = maps.a1[i] * maps.a2[i] / (maps.b1[i] * maps.b2[i]);
        }
        maps
    }

    /// Gradient of `upstream · Σ s` w.r.t. `x`.
    fn backward(&self, f: &Window, x: &[f64], y: &[f64], upstream: f64) -> Vec<f64> {
        let n = x.len();
        let mut d_mu = vec![0.0; n];
        let mut d_exx = vec![0.0; n];
        let mut d_exy = vec![0.0; n];
        for i in 0..n {
            let s = self.s[i];
            let (mx, my) = (self.mu_x[i], self.mu_y[i]);
            d_mu[i] = upstream
                * s
                * (2.0 * my / self.a1[i] - 2.0 * my / self.a2[i] - 2.0 * mx / self.b1[i]
                    + 2.0 * mx / self.b2[i]);
            d_exx[i] = -upstream * s / self.b2[i];
            d_exy[i] = upstream * 2.0 * s / self.a2[i];
        }
        let g_mu = f.apply_adjoint(&d_mu);
        let g_xx = f.apply_adjoint(&d_exx);
        let g_xy = f.apply_adjoint(&d_exy);
        (0..n)
            .map(|q| g_mu[q] + 2.0 * x[q] * g_xx[q] + y[q] * g_xy[q])
            .collect()
    }
}
