use std::collections::HashSet;

use villani::data::{
    corrupt_labels, gen_sine, gen_teacher, read_csv, sha256_hex, to_csv_bytes, write_generated, Corruption, DataKind,
    DataRecipe, DatasetMeta,
};

fn sample_variance(v: &[f64]) -> f64 {
    let m = v.iter().sum::<f64>() / v.len() as f64;
    v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (v.len() as f64 - 1.0)
}

fn sine_recipe(seed: u64) -> DataRecipe {
    DataRecipe { kind: DataKind::SineNorm { d: 20, noise_sd: 0.5 }, n_train: 500, n_test: 200, seed, corruption: Corruption::default() }
}

#[test]
fn sine_inputs_have_uniform_second_moment() {
    let d = gen_sine(20, 100_000, 0.0, 77).unwrap();
    let mean: f64 = (0..d.n()).map(|i| d.sq_norm(i) / 20.0).sum::<f64>() / d.n() as f64;
    assert!((mean - 1.0 / 3.0).abs() < 0.01, "{mean}");
    assert!(d.xs().iter().all(|&x| (0.0..1.0).contains(&x)));
}

#[test]
fn teacher_variance_regression() {
    let d = gen_teacher(20, 5, 100_000, 0.1, 2024).unwrap();
    let v = sample_variance(d.ys().as_slice().unwrap());
    assert_eq!(v.to_bits(), 0x3f9e5d16b5600275, "variance {v:?}");
}

#[test]
fn half_corruption_changes_exactly_half() {
    let clean = gen_sine(20, 1000, 0.0, 4).unwrap();
    let noisy = corrupt_labels(&clean, 0.5, 0.05, 4).unwrap();
    let differ = (0..1000).filter(|&i| clean.y(i) != noisy.y(i)).count();
    assert_eq!(differ, 500);
    assert_eq!(noisy.xs(), clean.xs());
}

#[test]
fn corruption_noise_is_standard_cauchy() {
    let n = 100_000;
    let clean = gen_sine(1, n, 0.0, 6).unwrap();
    let noisy = corrupt_labels(&clean, 1.0, 1.0, 6).unwrap();
    let mut xi: Vec<f64> = (0..n).map(|i| noisy.y(i) - clean.y(i)).collect();
    xi.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let q = |p: f64| xi[(p * n as f64) as usize];
    assert!(q(0.5).abs() < 0.02);
    assert!((q(0.25) + 1.0).abs() < 0.03 && (q(0.75) - 1.0).abs() < 0.03);
}

#[test]
fn recipes_are_byte_reproducible() {
    for r in [sine_recipe(3), DataRecipe { kind: DataKind::Teacher { d: 20, p_teacher: 5, noise_sd: 0.1 }, ..sine_recipe(3) }] {
        let noisy = r.with_corruption(0.5);
        let a = noisy.generate().unwrap();
        let b = noisy.generate().unwrap();
        assert_eq!(sha256_hex(&to_csv_bytes(&a.train).unwrap()), sha256_hex(&to_csv_bytes(&b.train).unwrap()));
        assert_eq!(to_csv_bytes(&a.test).unwrap(), to_csv_bytes(&b.test).unwrap());
        let c = noisy.with_seed(4).generate().unwrap();
        assert_ne!(to_csv_bytes(&a.train).unwrap(), to_csv_bytes(&c.train).unwrap());
    }
}

#[test]
fn certified_bounds_are_exact_maxima() {
    let g = sine_recipe(8).with_corruption(0.9).generate().unwrap();
    for ds in [&g.train, &g.test, &g.clean_train] {
        let bx = (0..ds.n()).map(|i| ds.x(i).iter().map(|v| v * v).sum::<f64>().sqrt()).fold(0.0, f64::max);
        let by = ds.ys().iter().map(|v| v.abs()).fold(0.0, f64::max);
        assert_eq!(ds.b_x(), bx);
        assert_eq!(ds.b_y(), by);
        assert!(ds.b_x() <= 20f64.sqrt());
    }
}

#[test]
fn train_and_test_streams_do_not_overlap() {
    let g = DataRecipe { n_train: 5000, n_test: 5000, ..sine_recipe(1) }.generate().unwrap();
    let key = |ds: &villani::Dataset, i: usize| ds.x(i).iter().map(|v| v.to_bits()).collect::<Vec<_>>();
    let train: HashSet<Vec<u64>> = (0..g.train.n()).map(|i| key(&g.train, i)).collect();
    assert!((0..g.test.n()).all(|i| !train.contains(&key(&g.test, i))));
    let first: HashSet<u64> = g.train.xs().iter().map(|v| v.to_bits()).collect();
    let shared = g.test.xs().iter().filter(|v| first.contains(&v.to_bits())).count();
    assert!(shared < 5, "{shared} coordinates shared across streams");
}

#[test]
fn written_files_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let r = DataRecipe { kind: DataKind::Teacher { d: 3, p_teacher: 2, noise_sd: 0.1 }, n_train: 40, n_test: 10, seed: 9, corruption: Corruption { fraction: 0.5, scale: 0.05 } };
    let g = r.generate().unwrap();
    let out = dir.path().join("data.csv");
    let files = write_generated(&r, &g, &out).unwrap();
    assert_eq!(read_csv(&files.train).unwrap(), g.train);
    assert_eq!(read_csv(&files.test).unwrap(), g.test);
    let meta: DatasetMeta = serde_json::from_slice(&std::fs::read(&files.meta).unwrap()).unwrap();
    assert_eq!(meta.recipe, r);
    assert_eq!(meta.b_x, g.train.b_x());
    assert_eq!(meta.b_y, g.train.b_y());
    assert_eq!(meta.hash, sha256_hex(&std::fs::read(&files.train).unwrap()));
    assert!(meta.teacher_weights.is_some());

    let from_file = DataRecipe { kind: DataKind::FromFile { path: files.train.clone() }, n_train: 30, n_test: 10, seed: 0, corruption: Corruption::default() };
    let back = from_file.generate().unwrap();
    assert_eq!(back.train.n(), 30);
    assert_eq!(back.test.y(0), g.train.y(30));
    assert!(DataRecipe { n_train: 35, ..from_file }.generate().is_err());
}
