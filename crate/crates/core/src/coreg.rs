//! Dense coregistration of a moving scene onto a reference scene.
//!
//! Flow is estimated with a windowed Lucas-Kanade solve at every pixel (the
//! Folki formulation): the reference gradient's structure tensor is summed
//! over a box window and the displacement update is solved per pixel, inside
//! a coarse-to-fine Gaussian pyramid. Both images are rank filtered first so
//! that the estimate is insensitive to monotone radiometric differences.

use serde::{Deserialize, Serialize};

use crate::raster::{Plane, Raster};
use crate::{Error, Result};

/// Per-pixel displacement, in pixels, mapping reference positions to moving
/// positions: `reference(x, y) ~ moving(x + u, y + v)`.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowField {
    pub width: usize,
    pub height: usize,
    pub u: Vec<f32>,
    pub v: Vec<f32>,
}

impl FlowField {
    pub fn zeros(width: usize, height: usize) -> Self {
        FlowField {
            width,
            height,
            u: vec![0.0; width * height],
            v: vec![0.0; width * height],
        }
    }

    pub fn constant(width: usize, height: usize, u: f32, v: f32) -> Self {
        FlowField {
            width,
            height,
            u: vec![u; width * height],
            v: vec![v; width * height],
        }
    }

    /// Largest displacement component magnitude.
    pub fn max_abs(&self) -> f32 {
        self.u
            .iter()
            .chain(&self.v)
            .fold(0.0f32, |m, &d| m.max(d.abs()))
    }

    /// Mean endpoint error against a constant ground-truth displacement over
    /// the pixels selected by `mask`.
    pub fn mean_epe(&self, true_u: f32, true_v: f32, mask: impl Fn(usize, usize) -> bool) -> f64 {
        let mut sum = 0.0;
        let mut n = 0usize;
        for y in 0..self.height {
            for x in 0..self.width {
                if !mask(x, y) {
                    continue;
                }
                let i = y * self.width + x;
                let du = (self.u[i] - true_u) as f64;
                let dv = (self.v[i] - true_v) as f64;
                sum += (du * du + dv * dv).sqrt();
                n += 1;
            }
        }
        sum / n.max(1) as f64
    }

    fn check_dims(&self, width: usize, height: usize) -> Result<()> {
        if self.width != width || self.height != height {
            return Err(Error::Shape(format!(
                "flow is {}x{}, image is {width}x{height}",
                self.width, self.height
            )));
        }
        Ok(())
    }
}

/// Photometric prefilter applied before flow estimation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Prefilter {
    Rank,
    None,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CoregConfig {
    pub pyramid_levels: usize,
    pub window_radius: usize,
    pub iterations_per_level: usize,
    pub rank_radius: usize,
    pub prefilter: Prefilter,
}

impl Default for CoregConfig {
    fn default() -> Self {
        CoregConfig {
            pyramid_levels: 4,
            window_radius: 8,
            iterations_per_level: 5,
            rank_radius: 2,
            prefilter: Prefilter::Rank,
        }
    }
}

impl CoregConfig {
    pub fn validate(&self) -> Result<()> {
        if self.pyramid_levels == 0
            || self.window_radius == 0
            || self.iterations_per_level == 0
            || self.rank_radius == 0
        {
            return Err(Error::Config(format!(
                "coregistration parameters must all be >= 1: {self:?}"
            )));
        }
        Ok(())
    }

    fn window_pixels(&self) -> f64 {
        let side = (2 * self.window_radius + 1) as f64;
        side * side
    }

    /// Smallest-eigenvalue floor for the windowed structure tensor.
    fn conditioning_floor(&self) -> f64 {
        1e-4 * self.window_pixels()
    }
}

/// Fraction of pixels in the `(2r+1)^2` window strictly darker than the centre,
/// normalised to `[0, 1]`. Borders use edge replication.
pub fn rank_filter(img: &Plane, radius: usize) -> Plane {
    let r = radius as isize;
    let denom = ((2 * radius + 1) * (2 * radius + 1) - 1) as f32;
    let mut out = Plane::zeros(img.width, img.height);
    for y in 0..img.height {
        for x in 0..img.width {
            let c = img.get(x, y);
            let mut below = 0u32;
            for dy in -r..=r {
                for dx in -r..=r {
                    if img.get_clamped(x as isize + dx, y as isize + dy) < c {
                        below += 1;
                    }
                }
            }
            out.data[y * img.width + x] = below as f32 / denom;
        }
    }
    out
}

/// Central-difference gradients with edge replication.
fn gradients(img: &Plane) -> (Vec<f64>, Vec<f64>) {
    let (w, h) = (img.width, img.height);
    let mut gx = vec![0.0; w * h];
    let mut gy = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            let (xi, yi) = (x as isize, y as isize);
            gx[y * w + x] =
                0.5 * (img.get_clamped(xi + 1, yi) as f64 - img.get_clamped(xi - 1, yi) as f64);
            gy[y * w + x] =
                0.5 * (img.get_clamped(xi, yi + 1) as f64 - img.get_clamped(xi, yi - 1) as f64);
        }
    }
    (gx, gy)
}

/// Sum over the `(2r+1)^2` box clipped to the image, via an integral image.
fn box_sum(values: &[f64], w: usize, h: usize, r: usize) -> Vec<f64> {
    let stride = w + 1;
    let mut integral = vec![0.0; stride * (h + 1)];
    for y in 0..h {
        let mut row = 0.0;
        for x in 0..w {
            row += values[y * w + x];
            integral[(y + 1) * stride + x + 1] = integral[y * stride + x + 1] + row;
        }
    }
    let mut out = vec![0.0; w * h];
    for y in 0..h {
        let y0 = y.saturating_sub(r);
        let y1 = (y + r + 1).min(h);
        for x in 0..w {
            let x0 = x.saturating_sub(r);
            let x1 = (x + r + 1).min(w);
            out[y * w + x] = integral[y1 * stride + x1] - integral[y0 * stride + x1]
                - integral[y1 * stride + x0]
                + integral[y0 * stride + x0];
        }
    }
    out
}

/// Bilinear sample with edge clamping; returns the value and whether the
/// position was inside the image.
#[inline]
fn bilinear(img: &[f32], w: usize, h: usize, x: f64, y: f64) -> (f32, bool) {
    let inside = x >= 0.0 && y >= 0.0 && x <= (w - 1) as f64 && y <= (h - 1) as f64;
    let xc = x.clamp(0.0, (w - 1) as f64);
    let yc = y.clamp(0.0, (h - 1) as f64);
    let x0 = xc.floor() as usize;
    let y0 = yc.floor() as usize;
    let x1 = (x0 + 1).min(w - 1);
    let y1 = (y0 + 1).min(h - 1);
    let fx = xc - x0 as f64;
    let fy = yc - y0 as f64;
    let top = img[y0 * w + x0] as f64 * (1.0 - fx) + img[y0 * w + x1] as f64 * fx;
    let bottom = img[y1 * w + x0] as f64 * (1.0 - fx) + img[y1 * w + x1] as f64 * fx;
    ((top * (1.0 - fy) + bottom * fy) as f32, inside)
}

fn warp_plane(img: &[f32], w: usize, h: usize, flow: &FlowField, valid: &mut [bool]) -> Vec<f32> {
    let mut out = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            let (u, v) = (flow.u[i], flow.v[i]);
            if u == 0.0 && v == 0.0 {
                out[i] = img[i];
                continue;
            }
            let (s, inside) = bilinear(img, w, h, x as f64 + u as f64, y as f64 + v as f64);
            out[i] = s;
            valid[i] &= inside;
        }
    }
    out
}

/// Output of [`warp_bilinear`]: the resampled raster and a mask that is
/// `false` where a sample fell outside the source image.
#[derive(Debug, Clone)]
pub struct Warped {
    pub raster: Raster,
    pub valid: Vec<bool>,
}

/// `out(x, y) = img(x + u, y + v)` per band, bilinear with edge replication.
pub fn warp_bilinear(img: &Raster, flow: &FlowField) -> Result<Warped> {
    let (w, h) = (img.width(), img.height());
    flow.check_dims(w, h)?;
    let mut valid = vec![true; w * h];
    let mut samples = Vec::with_capacity(img.samples().len());
    for b in 0..img.bands() {
        samples.extend(warp_plane(img.band(b), w, h, flow, &mut valid));
    }
    Ok(Warped {
        raster: Raster::new(w, h, img.band_ids().to_vec(), samples, *img.geo())?,
        valid,
    })
}

/// One pyramid level of iterated dense Lucas-Kanade refinement.
///
/// Pixels whose windowed structure tensor has a smallest eigenvalue below the
/// conditioning floor keep their incoming flow.
pub fn flow_level(
    reference: &Plane,
    moving: &Plane,
    init: &FlowField,
    cfg: &CoregConfig,
) -> Result<FlowField> {
    cfg.validate()?;
    let (w, h) = (reference.width, reference.height);
    if moving.width != w || moving.height != h {
        return Err(Error::Shape(format!(
            "reference is {w}x{h}, moving is {}x{}",
            moving.width, moving.height
        )));
    }
    init.check_dims(w, h)?;
    let r = cfg.window_radius;
    let (gx, gy) = gradients(reference);
    let gxx = box_sum(&gx.iter().map(|g| g * g).collect::<Vec<_>>(), w, h, r);
    let gxy = box_sum(&gx.iter().zip(&gy).map(|(a, b)| a * b).collect::<Vec<_>>(), w, h, r);
    let gyy = box_sum(&gy.iter().map(|g| g * g).collect::<Vec<_>>(), w, h, r);
    let floor = cfg.conditioning_floor();
    let solvable: Vec<bool> = (0..w * h)
        .map(|i| {
            let half_trace = 0.5 * (gxx[i] + gyy[i]);
            let spread = (0.25 * (gxx[i] - gyy[i]).powi(2) + gxy[i] * gxy[i]).sqrt();
            half_trace - spread >= floor
        })
        .collect();

    let mut flow = init.clone();
    let mut scratch = vec![true; w * h];
    let mut ex = vec![0.0; w * h];
    let mut ey = vec![0.0; w * h];
    for _ in 0..cfg.iterations_per_level {
        let warped = warp_plane(&moving.data, w, h, &flow, &mut scratch);
        for i in 0..w * h {
            let e = reference.data[i] as f64 - warped[i] as f64
                + gx[i] * flow.u[i] as f64
                + gy[i] * flow.v[i] as f64;
            ex[i] = gx[i] * e;
            ey[i] = gy[i] * e;
        }
        let bx = box_sum(&ex, w, h, r);
        let by = box_sum(&ey, w, h, r);
        for i in 0..w * h {
            if !solvable[i] {
                continue;
            }
            let det = gxx[i] * gyy[i] - gxy[i] * gxy[i];
            flow.u[i] = ((gyy[i] * bx[i] - gxy[i] * by[i]) / det) as f32;
            flow.v[i] = ((gxx[i] * by[i] - gxy[i] * bx[i]) / det) as f32;
        }
    }
    Ok(flow)
}

const BINOMIAL5: [f64; 5] = [1.0 / 16.0, 4.0 / 16.0, 6.0 / 16.0, 4.0 / 16.0, 1.0 / 16.0];

fn blur(img: &Plane) -> Plane {
    let (w, h) = (img.width, img.height);
    let mut tmp = Plane::zeros(w, h);
    for y in 0..h {
        for x in 0..w {
            let s: f64 = BINOMIAL5
                .iter()
                .enumerate()
                .map(|(k, c)| c * img.get_clamped(x as isize + k as isize - 2, y as isize) as f64)
                .sum();
            tmp.data[y * w + x] = s as f32;
        }
    }
    let mut out = Plane::zeros(w, h);
    for y in 0..h {
        for x in 0..w {
            let s: f64 = BINOMIAL5
                .iter()
                .enumerate()
                .map(|(k, c)| c * tmp.get_clamped(x as isize, y as isize + k as isize - 2) as f64)
                .sum();
            out.data[y * w + x] = s as f32;
        }
    }
    out
}

/// Blur and keep even rows and columns, so coarse pixel `i` sits at fine `2i`.
fn downsample(img: &Plane) -> Plane {
    let b = blur(img);
    let (w, h) = (img.width.div_ceil(2), img.height.div_ceil(2));
    Plane::from_fn(w, h, |x, y| b.get(2 * x, 2 * y))
}

fn upsample_flow(coarse: &FlowField, width: usize, height: usize) -> FlowField {
    let mut fine = FlowField::zeros(width, height);
    for y in 0..height {
        for x in 0..width {
            let (cx, cy) = (x as f64 / 2.0, y as f64 / 2.0);
            let i = y * width + x;
            fine.u[i] = 2.0 * bilinear(&coarse.u, coarse.width, coarse.height, cx, cy).0;
            fine.v[i] = 2.0 * bilinear(&coarse.v, coarse.width, coarse.height, cx, cy).0;
        }
    }
    fine
}

/// Coarse-to-fine flow between two single-band images.
pub fn pyramid_flow(reference: &Plane, moving: &Plane, cfg: &CoregConfig) -> Result<FlowField> {
    cfg.validate()?;
    let (w, h) = (reference.width, reference.height);
    let min_side = (1usize << (cfg.pyramid_levels - 1)) * (2 * cfg.window_radius + 1);
    if w.min(h) < min_side {
        return Err(Error::Config(format!(
            "image {w}x{h} is too small for {} pyramid levels with window radius {} (needs >= {min_side} px)",
            cfg.pyramid_levels, cfg.window_radius
        )));
    }
    let mut refs = vec![reference.clone()];
    let mut movs = vec![moving.clone()];
    for _ in 1..cfg.pyramid_levels {
        refs.push(downsample(refs.last().expect("non-empty")));
        movs.push(downsample(movs.last().expect("non-empty")));
    }
    let coarsest = refs.last().expect("non-empty");
    let mut flow = FlowField::zeros(coarsest.width, coarsest.height);
    for level in (0..cfg.pyramid_levels).rev() {
        let (r, m) = (&refs[level], &movs[level]);
        if flow.width != r.width || flow.height != r.height {
            flow = upsample_flow(&flow, r.width, r.height);
        }
        flow = flow_level(r, m, &flow, cfg)?;
    }
    Ok(flow)
}

fn proxy(r: &Raster, cfg: &CoregConfig) -> Plane {
    match cfg.prefilter {
        Prefilter::None => r.band_mean(),
        Prefilter::Rank => {
            let n = r.pixel_count();
            let mut acc = vec![0f64; n];
            for b in 0..r.bands() {
                let ranked = rank_filter(&r.band_plane(b), cfg.rank_radius);
                for (a, v) in acc.iter_mut().zip(ranked.data) {
                    *a += v as f64;
                }
            }
            let inv = 1.0 / r.bands() as f64;
            Plane {
                width: r.width(),
                height: r.height(),
                data: acc.into_iter().map(|a| (a * inv) as f32).collect(),
            }
        }
    }
}

#[derive(Debug, Clone)]
pub struct Coregistration {
    pub flow: FlowField,
    pub warped: Raster,
    pub valid: Vec<bool>,
}

/// Register `moving` onto `reference`'s grid.
pub fn coregister(reference: &Raster, moving: &Raster, cfg: &CoregConfig) -> Result<Coregistration> {
    if reference.width() != moving.width()
        || reference.height() != moving.height()
        || reference.bands() != moving.bands()
    {
        return Err(Error::Shape(format!(
            "reference {}x{}x{} and moving {}x{}x{} differ",
            reference.width(),
            reference.height(),
            reference.bands(),
            moving.width(),
            moving.height(),
            moving.bands()
        )));
    }
    let flow = pyramid_flow(&proxy(reference, cfg), &proxy(moving, cfg), cfg)?;
    let Warped { raster, valid } = warp_bilinear(moving, &flow)?;
    Ok(Coregistration {
        flow,
        warped: raster,
        valid,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::raster::GeoTransform;

    /// Smooth texture: a fixed sum of oriented sinusoids, sampled at an
    /// arbitrary (possibly subpixel) offset.
    fn texture(w: usize, h: usize, dx: f64, dy: f64) -> Plane {
        let waves = [
            (0.21, 0.07, 0.3),
            (-0.05, 0.17, 1.1),
            (0.11, -0.13, 2.0),
            (0.33, 0.29, 0.4),
            (0.02, 0.41, 2.7),
            (0.39, -0.03, 1.9),
        ];
        Plane::from_fn(w, h, |x, y| {
            let (x, y) = (x as f64 - dx, y as f64 - dy);
            waves
                .iter()
                .map(|(fx, fy, p)| (fx * x + fy * y + p).sin())
                .sum::<f64>() as f32
        })
    }

    #[test]
    fn rank_filter_constant_image_is_zero() {
        let img = Plane::from_fn(9, 9, |_, _| 3.5);
        assert!(rank_filter(&img, 2).data.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn rank_filter_strict_maximum_is_one() {
        let img = Plane::from_fn(5, 5, |x, y| if (x, y) == (2, 2) { 9.0 } else { (x + y) as f32 });
        assert_eq!(rank_filter(&img, 1).get(2, 2), 1.0);
    }

    #[test]
    fn rank_filter_ignores_monotone_remap() {
        // Integer-valued input so the remap is exactly representable.
        let mut img = texture(40, 30, 0.0, 0.0);
        img.data.iter_mut().for_each(|v| *v = (*v * 500.0).round());
        let remapped = Plane {
            data: img.data.iter().map(|k| k * k.abs() + 3.0 * k + 7.0).collect(),
            ..img.clone()
        };
        let a = rank_filter(&img, 2);
        let b = rank_filter(&remapped, 2);
        assert!(a.data.iter().zip(&b.data).all(|(p, q)| p.to_bits() == q.to_bits()));
    }

    #[test]
    fn box_sum_matches_brute_force() {
        let (w, h, r) = (7usize, 5usize, 2usize);
        let vals: Vec<f64> = (0..w * h).map(|i| (i * 7 % 11) as f64).collect();
        let fast = box_sum(&vals, w, h, r);
        for y in 0..h {
            for x in 0..w {
                let mut s = 0.0;
                for yy in y.saturating_sub(r)..(y + r + 1).min(h) {
                    for xx in x.saturating_sub(r)..(x + r + 1).min(w) {
                        s += vals[yy * w + xx];
                    }
                }
                assert_eq!(fast[y * w + x], s);
            }
        }
    }

    #[test]
    fn identical_images_keep_zero_flow() {
        let img = texture(64, 64, 0.0, 0.0);
        let cfg = CoregConfig::default();
        let f = flow_level(&img, &img, &FlowField::zeros(64, 64), &cfg).unwrap();
        assert_eq!(f.max_abs(), 0.0);
    }

    #[test]
    fn single_level_recovers_integer_shift() {
        let (w, h) = (96, 96);
        let reference = texture(w, h, 0.0, 0.0);
        let moving = texture(w, h, 3.0, -2.0);
        let cfg = CoregConfig {
            pyramid_levels: 1,
            window_radius: 8,
            iterations_per_level: 20,
            prefilter: Prefilter::None,
            ..Default::default()
        };
        let f = flow_level(&reference, &moving, &FlowField::zeros(w, h), &cfg).unwrap();
        let m = 12;
        let epe = f.mean_epe(3.0, -2.0, |x, y| x >= m && y >= m && x < w - m && y < h - m);
        assert!(epe < 0.3, "mean EPE {epe}");
    }

    #[test]
    fn single_level_recovers_half_pixel_shift() {
        let (w, h) = (96, 96);
        let reference = texture(w, h, 0.0, 0.0);
        let moving = texture(w, h, 0.5, 0.0);
        let cfg = CoregConfig {
            pyramid_levels: 1,
            prefilter: Prefilter::None,
            ..Default::default()
        };
        let f = flow_level(&reference, &moving, &FlowField::zeros(w, h), &cfg).unwrap();
        let m = 10;
        let epe = f.mean_epe(0.5, 0.0, |x, y| x >= m && y >= m && x < w - m && y < h - m);
        assert!(epe < 0.2, "mean EPE {epe}");
    }

    #[test]
    fn zero_flow_warp_is_identity() {
        let p = texture(20, 10, 0.0, 0.0);
        let r = Raster::from_plane(p, "b", GeoTransform::identity()).unwrap();
        let out = warp_bilinear(&r, &FlowField::zeros(20, 10)).unwrap();
        assert_eq!(out.raster, r);
        assert!(out.valid.iter().all(|&v| v));
    }

    #[test]
    fn ramp_warp_is_exact() {
        let (w, h) = (12, 6);
        let ramp = Raster::from_plane(Plane::from_fn(w, h, |x, _| x as f32), "x", GeoTransform::identity())
            .unwrap();
        for shift in [1.0f32, 0.5] {
            let out = warp_bilinear(&ramp, &FlowField::constant(w, h, shift, 0.0)).unwrap();
            for y in 0..h {
                for x in 0..w - 1 {
                    assert_eq!(out.raster.get(0, y, x), x as f32 + shift);
                    assert!(out.valid[y * w + x]);
                }
                assert!(!out.valid[y * w + w - 1]);
            }
        }
    }

    #[test]
    fn too_small_for_pyramid_is_config_error() {
        let r = Raster::from_plane(texture(100, 100, 0.0, 0.0), "b", GeoTransform::identity()).unwrap();
        let err = coregister(&r, &r, &CoregConfig::default()).unwrap_err();
        assert!(matches!(err, Error::Config(_)));
    }
}
