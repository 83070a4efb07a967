use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use urbdiff_core::landcover::{
    classify_segments, ingest_samples, read_samples, train_forest, ForestConfig, SamplePoint, NONURBAN, URBAN,
};
use urbdiff_core::segment::{slic, superpixel_features, BandRoles, FeatureTable};
use urbdiff_core::{Error, GeoTransform, Raster};

const W: usize = 48;
const H: usize = 40;

fn geo() -> GeoTransform {
    GeoTransform::new(550_000.0, 1_498_000.0, 10.0, -10.0).unwrap()
}

/// Left of column 24 is built-up (bright red, dull NIR), the rest is vegetated.
fn scene(seed: u64) -> Raster {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let ids = ["B2", "B3", "B4", "B8"].map(String::from).to_vec();
    let mut samples = vec![0f32; 4 * W * H];
    for b in 0..4 {
        for row in 0..H {
            for col in 0..W {
                let urban = col < W / 2;
                let base = match (b, urban) {
                    (2, true) => 0.30,
                    (2, false) => 0.05,
                    (3, true) => 0.25,
                    (3, false) => 0.60,
                    (_, true) => 0.20,
                    (_, false) => 0.10,
                };
                samples[(b * H + row) * W + col] = base + rng.random_range(-0.02..0.02);
            }
        }
    }
    Raster::new(W, H, ids, samples, geo()).unwrap()
}

fn truth(col: usize) -> u8 {
    if col < W / 2 {
        URBAN
    } else {
        NONURBAN
    }
}

fn points(n: usize, seed: u64) -> Vec<SamplePoint> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let (col, row) = (rng.random_range(0..W), rng.random_range(0..H));
            let (x, y) = geo().pixel_to_map(col as f64 + 0.5, row as f64 + 0.5);
            SamplePoint { x, y, label: truth(col) }
        })
        .collect()
}

#[test]
fn sampled_points_generalize_to_every_segment() {
    let r = scene(1);
    let map = slic(&r, &urbdiff_core::SlicConfig { n_segments: 48, ..Default::default() }).unwrap();
    let feats = superpixel_features(&r, &map, &BandRoles::default()).unwrap();
    let rows = ingest_samples(&points(120, 2), r.geo(), &map, &feats).unwrap();
    assert!(rows.len() <= 120);
    let rep = train_forest(&rows, 0.7, &ForestConfig { n_trees: 25, seed: 3, ..Default::default() }).unwrap();
    let (seg_labels, pixels) = classify_segments(&rep.forest, &feats, &map).unwrap();
    assert_eq!(seg_labels.len(), map.count);
    assert_eq!(pixels.len(), W * H);
    let hits = (0..W * H).filter(|&i| pixels[i] == truth(i % W)).count();
    assert!(hits as f64 / (W * H) as f64 > 0.9, "pixel accuracy {}", hits as f64 / (W * H) as f64);
    for &i in &rep.train_indices {
        assert_eq!(seg_labels[rows[i].segment as usize], rep.forest.predict(&rows[i].features).unwrap());
    }
}

#[test]
fn origin_point_lands_in_first_pixel_segment() {
    let r = scene(4);
    let map = slic(&r, &urbdiff_core::SlicConfig { n_segments: 20, ..Default::default() }).unwrap();
    let feats = superpixel_features(&r, &map, &BandRoles::default()).unwrap();
    let (x, y) = (r.geo().origin_x, r.geo().origin_y);
    let rows = ingest_samples(&[SamplePoint { x, y, label: URBAN }], r.geo(), &map, &feats).unwrap();
    assert_eq!(rows.len(), 1);
    assert_eq!(rows[0].segment, map.label_at(0, 0));
    assert_eq!(rows[0].features, feats.rows[map.label_at(0, 0) as usize]);
}

#[test]
fn duplicate_points_collapse_by_majority() {
    let r = scene(5);
    let map = slic(&r, &urbdiff_core::SlicConfig { n_segments: 20, ..Default::default() }).unwrap();
    let feats = superpixel_features(&r, &map, &BandRoles::default()).unwrap();
    let (x, y) = geo().pixel_to_map(0.5, 0.5);
    let pt = |label| SamplePoint { x, y, label };
    let rows = ingest_samples(&[pt(1), pt(0), pt(1)], r.geo(), &map, &feats).unwrap();
    assert_eq!(rows.len(), 1);
    assert_eq!(rows[0].label, NONURBAN);
    let tie = ingest_samples(&[pt(1), pt(0)], r.geo(), &map, &feats).unwrap();
    assert_eq!(tie[0].label, URBAN);
}

#[test]
fn out_of_extent_points_are_listed() {
    let r = scene(6);
    let map = slic(&r, &urbdiff_core::SlicConfig { n_segments: 20, ..Default::default() }).unwrap();
    let feats = superpixel_features(&r, &map, &BandRoles::default()).unwrap();
    let far = SamplePoint { x: 1.0, y: 2.0, label: URBAN };
    let (ex, ey) = geo().pixel_to_map(W as f64, 0.0);
    let edge = SamplePoint { x: ex, y: ey, label: URBAN };
    match ingest_samples(&[far, edge], r.geo(), &map, &feats) {
        Err(Error::Sample(msg)) => {
            assert!(msg.contains("(1, 2)"), "{msg}");
            assert!(msg.starts_with("2 point"), "{msg}");
        }
        other => panic!("expected a sample error, got {other:?}"),
    }
}

#[test]
fn identical_features_give_one_class() {
    let r = scene(7);
    let map = slic(&r, &urbdiff_core::SlicConfig { n_segments: 30, ..Default::default() }).unwrap();
    let feats = superpixel_features(&r, &map, &BandRoles::default()).unwrap();
    let rows = ingest_samples(&points(80, 8), r.geo(), &map, &feats).unwrap();
    let rep = train_forest(&rows, 0.7, &ForestConfig { n_trees: 10, ..Default::default() }).unwrap();
    let flat = FeatureTable {
        names: feats.names.clone(),
        rows: vec![feats.rows[0].clone(); map.count],
    };
    let (labels, _) = classify_segments(&rep.forest, &flat, &map).unwrap();
    assert!(labels.iter().all(|&l| l == labels[0]));
    let short = FeatureTable {
        names: feats.names.clone(),
        rows: vec![vec![0.0; feats.rows[0].len() - 1]; map.count],
    };
    assert!(matches!(classify_segments(&rep.forest, &short, &map), Err(Error::Shape(_))));
}

#[test]
fn samples_read_from_csv_and_geojson() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("pts.csv");
    std::fs::write(&csv, "x,y,label\n550005,1497995,urban\n550405,1497995,nonurban\n").unwrap();
    let gj = dir.path().join("pts.geojson");
    std::fs::write(
        &gj,
        r#"{"type":"FeatureCollection","features":[
            {"type":"Feature","properties":{"label":0},"geometry":{"type":"Point","coordinates":[550005,1497995]}},
            {"type":"Feature","properties":{"label":"nonurban"},"geometry":{"type":"Point","coordinates":[550405,1497995]}}]}"#,
    )
    .unwrap();
    let a = read_samples(&csv).unwrap();
    let b = read_samples(&gj).unwrap();
    assert_eq!(a, b);
    assert_eq!(a[1].label, NONURBAN);
    assert!(matches!(read_samples(&dir.path().join("pts.txt")), Err(Error::UnsupportedFormat(_))));
}
