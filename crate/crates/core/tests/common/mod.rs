#![allow(dead_code)]

use std::collections::{BTreeSet, VecDeque};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use urbdiff_core::dataset::PatchPair;
use urbdiff_core::siamese::{DiffMode, SiameseConfig};
use urbdiff_core::{GeoTransform, Plane, Raster, SegmentMap};

pub const BLOCK: usize = 4;
pub const OFFSET: f32 = 3.0;

pub fn small_config() -> SiameseConfig {
    SiameseConfig {
        in_bands: 4,
        encoder_channels: vec![8, 16],
        patch_size: 16,
        diff_mode: DiffMode::Absolute,
    }
}

/// Patch pairs where `b` is a noisy copy of `a`, except in 4x4 blocks whose
/// band 0 is shifted by `OFFSET`; those blocks are labeled as change.
pub fn synthetic_patches(count: usize, bands: usize, patch: usize, seed: u64) -> Vec<PatchPair> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0f32, 0.1).unwrap();
    let cells = patch / BLOCK;
    (0..count)
        .map(|i| {
            let a: Vec<f32> = (0..bands * patch * patch).map(|_| rng.random_range(-1.0..1.0)).collect();
            let mut b: Vec<f32> = a.iter().map(|&v| v + noise.sample(&mut rng)).collect();
            let changed: Vec<bool> = (0..cells * cells).map(|_| rng.random_bool(0.3)).collect();
            let mut label = vec![0u8; patch * patch];
            for y in 0..patch {
                for x in 0..patch {
                    if changed[(y / BLOCK) * cells + x / BLOCK] {
                        label[y * patch + x] = 1;
                        b[y * patch + x] += OFFSET;
                    }
                }
            }
            PatchPair {
                a,
                b,
                label,
                bands,
                patch,
                region: "synthetic".into(),
                offset: (i, 0),
            }
        })
        .collect()
}

/// Band-limited random texture defined in continuous coordinates so it can be
/// sampled at any subpixel translation.
pub struct Texture {
    waves: Vec<(f64, f64, f64, f64)>,
}

impl Texture {
    pub fn new(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let waves = (0..40)
            .map(|_| {
                let freq = rng.random_range(0.04..0.45);
                let angle = rng.random_range(0.0..std::f64::consts::TAU);
                let amp = 1.0 / (1.0 + 4.0 * freq);
                (freq * angle.cos(), freq * angle.sin(), rng.random_range(0.0..6.3), amp)
            })
            .collect();
        Texture { waves }
    }

    pub fn render(&self, w: usize, h: usize, dx: f64, dy: f64) -> Plane {
        Plane::from_fn(w, h, |x, y| {
            let (x, y) = (x as f64 - dx, y as f64 - dy);
            self.waves
                .iter()
                .map(|(fx, fy, p, a)| a * (fx * x + fy * y + p).sin())
                .sum::<f64>() as f32
        })
    }
}

pub fn interior(w: usize, h: usize, m: usize) -> impl Fn(usize, usize) -> bool {
    move |x, y| x >= m && y >= m && x < w - m && y < h - m
}

pub fn uniform(w: usize, h: usize, value: f32) -> Raster {
    let ids = vec!["B2".into(), "B3".into(), "B4".into(), "B8".into()];
    Raster::new(w, h, ids, vec![value; 4 * w * h], GeoTransform::identity()).unwrap()
}

pub fn random_raster(w: usize, h: usize, seed: u64) -> Raster {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let ids = vec!["B2".into(), "B3".into(), "B4".into(), "B8".into()];
    // Smooth-ish random field so segments have structure.
    let waves: Vec<(f64, f64, f64)> = (0..12)
        .map(|_| (rng.random_range(0.02..0.3), rng.random_range(0.02..0.3), rng.random_range(0.0..6.0)))
        .collect();
    let mut s = Vec::with_capacity(4 * w * h);
    for b in 0..4 {
        for y in 0..h {
            for x in 0..w {
                let v: f64 = waves
                    .iter()
                    .enumerate()
                    .map(|(i, (fx, fy, p))| (fx * x as f64 + fy * y as f64 + p + (b * i) as f64).sin())
                    .sum();
                s.push((v + rng.random_range(-0.3..0.3)) as f32 * 100.0 + 1000.0);
            }
        }
    }
    Raster::new(w, h, ids, s, GeoTransform::identity()).unwrap()
}

/// Labels depend only on (column band, row band) for an `n x n` grid whose
/// band widths differ from `size / n` by at most one pixel.
pub fn is_grid(map: &SegmentMap, n: usize) -> bool {
    let (w, h) = (map.width, map.height);
    let col_bands = |row: usize| -> Vec<usize> {
        let mut cuts = vec![0];
        for x in 1..w {
            if map.label_at(x, row) != map.label_at(x - 1, row) {
                cuts.push(x);
            }
        }
        cuts
    };
    let row_bands = |col: usize| -> Vec<usize> {
        let mut cuts = vec![0];
        for y in 1..h {
            if map.label_at(col, y) != map.label_at(col, y - 1) {
                cuts.push(y);
            }
        }
        cuts
    };
    let cols = col_bands(0);
    let rows = row_bands(0);
    if cols.len() != n || rows.len() != n || map.count != n * n {
        return false;
    }
    if (0..h).any(|y| col_bands(y) != cols) || (0..w).any(|x| row_bands(x) != rows) {
        return false;
    }
    let widths_ok = |cuts: &[usize], total: usize| {
        let mut edges = cuts.to_vec();
        edges.push(total);
        let ideal = total as f64 / n as f64;
        edges.windows(2).all(|e| ((e[1] - e[0]) as f64 - ideal).abs() <= 1.0)
    };
    let labels: BTreeSet<u32> = map.labels.iter().copied().collect();
    widths_ok(&cols, w) && widths_ok(&rows, h) && labels.len() == n * n
}

pub fn four_connected(map: &SegmentMap) -> bool {
    let (w, h) = (map.width, map.height);
    let mut seen = vec![false; w * h];
    let mut visited_labels = vec![false; map.count];
    for start in 0..w * h {
        if seen[start] {
            continue;
        }
        let l = map.labels[start];
        if visited_labels[l as usize] {
            return false;
        }
        visited_labels[l as usize] = true;
        let mut q = VecDeque::from([start]);
        seen[start] = true;
        while let Some(i) = q.pop_front() {
            let (x, y) = (i % w, i / w);
            let mut nb = Vec::new();
            if x > 0 {
                nb.push(i - 1);
            }
            if x + 1 < w {
                nb.push(i + 1);
            }
            if y > 0 {
                nb.push(i - w);
            }
            if y + 1 < h {
                nb.push(i + w);
            }
            for j in nb {
                if !seen[j] && map.labels[j] == l {
                    seen[j] = true;
                    q.push_back(j);
                }
            }
        }
    }
    true
}
