use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use urbdiff_core::coreg::{flow_level, CoregConfig, FlowField};
use urbdiff_core::landcover::{Forest, ForestConfig};
use urbdiff_core::segment::slic;
use urbdiff_core::tensor::{Tape, Tensor};
use urbdiff_core::{GeoTransform, Plane, Raster, SlicConfig};

fn wave(i: usize, f: f64) -> f32 {
    ((i as f64 * f).sin() * 0.5 + 0.5) as f32
}

fn conv(c: &mut Criterion) {
    let x = Tensor::new(vec![4, 16, 32, 32], (0..4 * 16 * 32 * 32).map(|i| wave(i, 0.37)).collect()).unwrap();
    let w = Tensor::new(vec![32, 16, 3, 3], (0..32 * 16 * 9).map(|i| wave(i, 0.91) - 0.5).collect()).unwrap();
    let b = Tensor::new(vec![32], vec![0.01; 32]).unwrap();
    c.bench_function("conv2d 4x16x32x32 -> 32, forward+backward", |bench| {
        bench.iter(|| {
            let mut tape = Tape::<f32>::new();
            let (xv, wv, bv) = (tape.leaf(x.clone()), tape.leaf(w.clone()), tape.leaf(b.clone()));
            let y = tape.conv2d(xv, wv, bv).unwrap();
            let seed = Tensor::new(tape.value(y).shape().to_vec(), vec![1.0; 4 * 32 * 32 * 32]).unwrap();
            black_box(tape.backward(y, &seed).unwrap());
        })
    });
}

fn scene(w: usize, h: usize) -> Raster {
    let mut samples = Vec::with_capacity(4 * w * h);
    for band in 0..4 {
        for y in 0..h {
            for x in 0..w {
                let block = ((x / 16 + y / 16) % 3) as f32 * 0.2;
                samples.push(block + 0.05 * wave(y * w + x + band * 7, 0.13));
            }
        }
    }
    let geo = GeoTransform::new(0.0, 0.0, 10.0, -10.0).unwrap();
    Raster::new(w, h, ["B2", "B3", "B4", "B8"].map(String::from).to_vec(), samples, geo).unwrap()
}

fn superpixels(c: &mut Criterion) {
    let r = scene(128, 128);
    let cfg = SlicConfig {
        n_segments: 200,
        ..SlicConfig::default()
    };
    c.bench_function("slic 128x128x4, k=200", |bench| bench.iter(|| black_box(slic(&r, &cfg).unwrap())));
}

fn flow(c: &mut Criterion) {
    let (w, h) = (128, 128);
    let img = |dx: f64| -> Plane {
        let data = (0..w * h)
            .map(|i| {
                let (x, y) = ((i % w) as f64 + dx, (i / w) as f64);
                ((x * 0.21).sin() * (y * 0.17).cos()) as f32
            })
            .collect();
        Plane::new(w, h, data).unwrap()
    };
    let (reference, moving) = (img(0.0), img(0.6));
    let init = FlowField::zeros(w, h);
    let cfg = CoregConfig::default();
    c.bench_function("flow_level 128x128", |bench| {
        bench.iter(|| black_box(flow_level(&reference, &moving, &init, &cfg).unwrap()))
    });
}

fn forest(c: &mut Criterion) {
    let n = 400;
    let rows: Vec<Vec<f64>> = (0..n)
        .map(|i| (0..8).map(|f| wave(i * 8 + f, 0.77) as f64 + if i % 2 == 0 { 0.3 } else { 0.0 }).collect())
        .collect();
    let labels: Vec<u8> = (0..n).map(|i| (i % 2) as u8).collect();
    let cfg = ForestConfig {
        n_trees: 50,
        ..ForestConfig::default()
    };
    c.bench_function("forest fit 400x8, 50 trees", |bench| {
        bench.iter(|| black_box(Forest::fit(&rows, &labels, &cfg).unwrap()))
    });
}

criterion_group!(benches, conv, superpixels, flow, forest);
criterion_main!(benches);
