//! Analytic gradients of a per-pixel image loss through the tiled rasterizer.
//!
//! Per-pixel forward quantities are recomputed in the backward pass instead
//! of being stored, so memory stays linear in the number of splats.

use rayon::prelude::*;

use super::SplatGrad;
use crate::camera::Camera;
use crate::gaussian::{normalize_quat, SplatCloud};
use crate::image::ImageBuffer;
use crate::math::{self, Vec3};
use crate::raster::{
    prepare_frame, projection_jacobian, Frame, RenderError, RenderOptions, RenderStats, MAX_ALPHA,
    MIN_TRANSMITTANCE,
};
use crate::sh;

/// Gradient w.r.t. one projected splat's screen-space quantities.
#[derive(Debug, Clone, Copy, Default)]
struct ScreenGrad {
    mean2d: [f64; 2],
    conic: [f64; 3],
    alpha: f64,
    rgb: Vec3,
}

impl ScreenGrad {
    fn add(&mut self, o: &ScreenGrad) {
        for k in 0..2 {
            self.mean2d[k] += o.mean2d[k];
        }
        for k in 0..3 {
            self.conic[k] += o.conic[k];
            self.rgb[k] += o.rgb[k];
        }
        self.alpha += o.alpha;
    }
}

/// Output of [`backward`].
#[derive(Debug, Clone)]
pub struct Backward {
    pub image: ImageBuffer,
    pub grads: Vec<SplatGrad>,
    /// Visibility, radii and this frame's screen-space gradient norms.
    pub stats: RenderStats,
}

/// Renders `cloud` and back-propagates `d_image` (∂L/∂pixel, same size as
/// the camera) to every splat parameter.
pub fn backward(
    cloud: &SplatCloud,
    camera: &Camera,
    background: Vec3,
    d_image: &ImageBuffer,
) -> Result<Backward, RenderError> {
    let frame = prepare_frame(cloud, camera, background, RenderOptions::default())?;
    let image = frame.rasterize();
    let (grads, stats) = backward_frame(&frame, cloud, camera, d_image)?;
    Ok(Backward {
        image,
        grads,
        stats,
    })
}

/// Render, loss and gradients for one training view.
pub(crate) fn backward_with<F>(
    cloud: &SplatCloud,
    camera: &Camera,
    background: Vec3,
    loss_grad: F,
) -> Result<(f64, Backward), RenderError>
where
    F: FnOnce(&ImageBuffer) -> (f64, ImageBuffer),
{
    let frame = prepare_frame(cloud, camera, background, RenderOptions::default())?;
    let image = frame.rasterize();
    let (loss, d_image) = loss_grad(&image);
    let (grads, stats) = backward_frame(&frame, cloud, camera, &d_image)?;
    Ok((
        loss,
        Backward {
            image,
            grads,
            stats,
        },
    ))
}

fn backward_frame(
    frame: &Frame,
    cloud: &SplatCloud,
    camera: &Camera,
    d_image: &ImageBuffer,
) -> Result<(Vec<SplatGrad>, RenderStats), RenderError> {
    if d_image.width() != frame.width || d_image.height() != frame.height {
        return Err(RenderError::InvalidParameter(format!(
            "gradient image is {}x{}, expected {}x{}",
            d_image.width(),
            d_image.height(),
            frame.width,
            frame.height
        )));
    }
    let screen = pixel_backward(frame, d_image);
    let degree = cloud.active_sh_degree.min(sh::MAX_SH_DEGREE);
    let mut stats = frame.stats();
    let grads: Vec<SplatGrad> = cloud
        .splats
        .par_iter()
        .zip(&frame.projected)
        .zip(&screen)
        .map(|((splat, projected), g)| match projected {
            Some(p) => splat_backward(splat, p, camera, degree, g),
            None => SplatGrad::default(),
        })
        .collect();
    let (half_w, half_h) = (0.5 * f64::from(frame.width), 0.5 * f64::from(frame.height));
    for (i, g) in screen.iter().enumerate() {
        if stats.visible[i] {
            let nx = g.mean2d[0] * half_w;
            let ny = g.mean2d[1] * half_h;
            stats.grad_accum[i] = (nx * nx + ny * ny).sqrt();
            stats.grad_count[i] = 1;
            stats.position_grad[i] = grads[i].position;
        }
    }
    Ok((grads, stats))
}

struct Contributor {
    bin_slot: usize,
    g: f64,
    falloff: f64,
    transmittance: f64,
    clamped: bool,
}

/// Reverse compositing per tile; partial sums are reduced in tile order.
fn pixel_backward(frame: &Frame, d_image: &ImageBuffer) -> Vec<ScreenGrad> {
    let per_tile: Vec<Vec<ScreenGrad>> = (0..frame.tiles.bins.len())
        .into_par_iter()
        .map(|t| {
            let bin = &frame.tiles.bins[t];
            let mut local = vec![ScreenGrad::default(); bin.len()];
            if bin.is_empty() {
                return local;
            }
            let (x0, y0, x1, y1) = frame.tiles.rect(t, frame.width, frame.height);
            let mut list: Vec<Contributor> = Vec::new();
            for py in y0..y1 {
                for px in x0..x1 {
                    let dpix = d_image.get(px, py);
                    if dpix == [0.0; 3] {
                        continue;
                    }
                    let x = f64::from(px) + 0.5;
                    let y = f64::from(py) + 0.5;
                    list.clear();
                    let mut trans = 1.0;
                    for (slot, &idx) in bin.iter().enumerate() {
                        let Some(p) = frame.projected[idx as usize].as_ref() else {
                            continue;
                        };
                        let Some((g, falloff)) = p.contribution(x, y) else {
                            continue;
                        };
                        list.push(Contributor {
                            bin_slot: slot,
                            g,
                            falloff,
                            transmittance: trans,
                            clamped: p.alpha * falloff > MAX_ALPHA,
                        });
                        trans *= 1.0 - g;
                        if trans < MIN_TRANSMITTANCE {
                            break;
                        }
                    }
                    // Light arriving from behind splat k, seen through it.
                    let mut behind = frame.background.map(|b| trans * b);
                    for c in list.iter().rev() {
                        let p = frame.projected[bin[c.bin_slot] as usize]
                            .as_ref()
                            .expect("contributor is projected");
                        let out = &mut local[c.bin_slot];
                        let w = c.transmittance * c.g;
                        let mut dg = 0.0;
                        for ch in 0..3 {
                            out.rgb[ch] += dpix[ch] * w;
                            dg += dpix[ch] * (c.transmittance * p.rgb[ch] - behind[ch] / (1.0 - c.g));
                            behind[ch] += w * p.rgb[ch];
                        }
                        if c.clamped {
                            continue;
                        }
                        out.alpha += dg * c.falloff;
                        let dpower = dg * c.g;
                        let dx = x - p.mean2d[0];
                        let dy = y - p.mean2d[1];
                        let [a, b, cc] = p.conic;
                        out.mean2d[0] += dpower * (a * dx + b * dy);
                        out.mean2d[1] += dpower * (b * dx + cc * dy);
                        out.conic[0] += -0.5 * dpower * dx * dx;
                        out.conic[1] += -dpower * dx * dy;
                        out.conic[2] += -0.5 * dpower * dy * dy;
                    }
                }
            }
            local
        })
        .collect();

    let mut total = vec![ScreenGrad::default(); frame.projected.len()];
    for (t, local) in per_tile.iter().enumerate() {
        for (slot, g) in local.iter().enumerate() {
            total[frame.tiles.bins[t][slot] as usize].add(g);
        }
    }
    total
}

/// Chain rule from screen-space gradients back to the splat's parameters.
fn splat_backward(
    splat: &crate::gaussian::Splat,
    p: &crate::raster::ProjectedSplat,
    camera: &Camera,
    degree: u8,
    g: &ScreenGrad,
) -> SplatGrad {
    let mut out = SplatGrad::default();
    let k = &camera.intrinsics;
    let w = &camera.rotation;
    let t = camera.world_to_camera(splat.position);

    // Color: rgb = max(0, Σ sh·Y(dir) + 0.5), dir = normalize(position − center).
    let view = math::sub(splat.position, camera.center());
    let vn = math::norm(view);
    let dir = if vn > 0.0 {
        math::scale(view, 1.0 / vn)
    } else {
        [0.0, 0.0, 1.0]
    };
    let used = sh::coeff_count(degree);
    let basis = sh::basis(dir, degree);
    let dbasis = sh::basis_gradient(dir, degree);
    let mut d_dir = [0.0; 3];
    for ch in 0..3 {
        let raw: f64 = (0..used).map(|i| splat.sh[ch][i] * basis[i]).sum();
        if raw + 0.5 < 0.0 {
            continue;
        }
        let drgb = g.rgb[ch];
        for i in 0..used {
            out.sh[ch][i] = drgb * basis[i];
            for a in 0..3 {
                d_dir[a] += drgb * splat.sh[ch][i] * dbasis[i][a];
            }
        }
    }
    let mut d_pos = [0.0; 3];
    if vn > 0.0 {
        let along = math::dot(dir, d_dir);
        for a in 0..3 {
            d_pos[a] += (d_dir[a] - dir[a] * along) / vn;
        }
    }

    // Opacity.
    let alpha = p.alpha;
    out.opacity_logit = g.alpha * alpha * (1.0 - alpha);

    // Conic (a, b, c) = inverse of the 2D covariance M.
    let [qa, qb, qc] = p.conic;
    let q = [[qa, qb], [qb, qc]];
    let gq = [[g.conic[0], 0.5 * g.conic[1]], [0.5 * g.conic[1], g.conic[2]]];
    let mut qg = [[0.0; 2]; 2];
    for r in 0..2 {
        for c in 0..2 {
            qg[r][c] = q[r][0] * gq[0][c] + q[r][1] * gq[1][c];
        }
    }
    let mut gm = [[0.0; 2]; 2];
    for r in 0..2 {
        for c in 0..2 {
            gm[r][c] = -(qg[r][0] * q[0][c] + qg[r][1] * q[1][c]);
        }
    }

    // M = J·V·Jᵀ + blur, V = W·Σ·Wᵀ.
    let jac = projection_jacobian(camera, t);
    let sigma = match crate::gaussian::covariance3d(splat.log_scale, splat.rotation) {
        Ok(s) => s,
        Err(_) => return out,
    };
    let v = math::mat_mul(&math::mat_mul(w, &sigma), &math::transpose(w));
    let mut gv = [[0.0; 3]; 3];
    for r in 0..3 {
        for c in 0..3 {
            let mut s = 0.0;
            for i in 0..2 {
                for j in 0..2 {
                    s += jac[i][r] * gm[i][j] * jac[j][c];
                }
            }
            gv[r][c] = s;
        }
    }
    // G_J = 2·G_M·J·V.
    let mut jv = [[0.0; 3]; 2];
    for r in 0..2 {
        for c in 0..3 {
            jv[r][c] = (0..3).map(|i| jac[r][i] * v[i][c]).sum();
        }
    }
    let mut gj = [[0.0; 3]; 2];
    for r in 0..2 {
        for c in 0..3 {
            gj[r][c] = 2.0 * (gm[r][0] * jv[0][c] + gm[r][1] * jv[1][c]);
        }
    }
    // G_Σ = Wᵀ·G_V·W.
    let g_sigma = math::mat_mul(&math::mat_mul(&math::transpose(w), &gv), w);

    // Σ = Mm·Mmᵀ with Mm = R·S.
    let (qn, qnorm) = match normalize_quat(splat.rotation) {
        Ok(v) => v,
        Err(_) => return out,
    };
    let rot = math::quat_to_mat(qn);
    let s = splat.scale();
    let mut mm = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            mm[i][j] = rot[i][j] * s[j];
        }
    }
    let g_mm = math::mat_mul(&g_sigma, &mm).map(|row| row.map(|v| 2.0 * v));
    let mut g_rot = [[0.0; 3]; 3];
    for j in 0..3 {
        let mut gs = 0.0;
        for i in 0..3 {
            gs += g_mm[i][j] * rot[i][j];
            g_rot[i][j] = g_mm[i][j] * s[j];
        }
        out.log_scale[j] = gs * s[j];
    }
    let partials = math::quat_to_mat_partials(qn);
    let mut dqn = [0.0; 4];
    for (d, part) in dqn.iter_mut().zip(&partials) {
        *d = (0..3)
            .flat_map(|i| (0..3).map(move |j| (i, j)))
            .map(|(i, j)| g_rot[i][j] * part[i][j])
            .sum();
    }
    let radial: f64 = (0..4).map(|i| qn[i] * dqn[i]).sum();
    for i in 0..4 {
        out.rotation[i] = (dqn[i] - qn[i] * radial) / qnorm;
    }

    // Mean and Jacobian depend on the camera-space center t.
    let (fx, fy) = (k.fx, k.fy);
    let iz = 1.0 / t[2];
    let iz2 = iz * iz;
    let iz3 = iz2 * iz;
    let [gmx, gmy] = g.mean2d;
    let dt = [
        gmx * fx * iz - gj[0][2] * fx * iz2,
        gmy * fy * iz - gj[1][2] * fy * iz2,
        -gmx * fx * t[0] * iz2 - gmy * fy * t[1] * iz2 - gj[0][0] * fx * iz2
            + gj[0][2] * 2.0 * fx * t[0] * iz3
            - gj[1][1] * fy * iz2
            + gj[1][2] * 2.0 * fy * t[1] * iz3,
    ];
    let from_t = math::mat_t_vec(w, dt);
    out.position = math::add(d_pos, from_t);
    out
}
