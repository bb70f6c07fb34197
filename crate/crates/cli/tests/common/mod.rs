//! Synthetic instances shared by the integration tests.

#![allow(dead_code)]

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use hybridwalk::dataset::{FeatureRecord, InteractionRecord};
use hybridwalk::learner::FeatureWeights;
use hybridwalk::walk::weighted_item_features;
use hybridwalk::Matrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Random tripartite graph with at most `max_per_part` nodes in each partition.
pub fn random_graph(rng: &mut ChaCha8Rng, max_per_part: usize) -> (Matrix, Matrix) {
    let n_u = rng.gen_range(1..=max_per_part);
    let n_i = rng.gen_range(1..=max_per_part);
    let n_f = rng.gen_range(1..=max_per_part);
    let d_ui = rng.gen_range(0.05..0.5);
    let d_if = rng.gen_range(0.05..0.5);
    let mut ui = Vec::new();
    for u in 0..n_u {
        for i in 0..n_i {
            if rng.gen::<f64>() < d_ui {
                ui.push((u, i, rng.gen_range(1..=5) as f64));
            }
        }
    }
    let mut if_ = Vec::new();
    for i in 0..n_i {
        for f in 0..n_f {
            if rng.gen::<f64>() < d_if {
                if_.push((i, f, 1.0));
            }
        }
    }
    let urm = Matrix::from_triplets(n_u, n_i, ui).unwrap();
    let icm = Matrix::from_triplets(n_i, n_f, if_).unwrap();
    (urm, icm)
}

/// Binary item-feature matrix where every item has `min..=max` features and every
/// feature is used by at least two items.
pub fn random_icm(rng: &mut ChaCha8Rng, n_items: usize, n_features: usize, min: usize, max: usize) -> Matrix {
    loop {
        let mut triplets = Vec::new();
        for i in 0..n_items {
            let k = rng.gen_range(min..=max);
            let feats: BTreeSet<usize> = rand::seq::index::sample(rng, n_features, k).into_iter().collect();
            triplets.extend(feats.into_iter().map(|f| (i, f, 1.0)));
        }
        let icm = Matrix::from_triplets(n_items, n_features, triplets).unwrap();
        if icm.col_nnz().iter().all(|&df| df >= 2) {
            return icm;
        }
    }
}

pub struct Planted {
    pub icm: Matrix,
    pub p_fi: Matrix,
    pub target: Matrix,
    pub true_weights: Vec<f64>,
}

/// Target generated by the weighted content path with known weights.
pub fn planted_instance(seed: u64, n_items: usize, n_features: usize) -> Planted {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let icm = random_icm(&mut rng, n_items, n_features, 3, 6);
    let true_weights: Vec<f64> = (0..n_features).map(|_| rng.gen_range(-1.5f64..1.5).exp()).collect();
    let p_fi = icm.transpose().row_normalize().unwrap();
    let target = weighted_item_features(&icm, &FeatureWeights::new(true_weights.clone()).unwrap())
        .unwrap()
        .spmm(&p_fi)
        .unwrap();
    Planted {
        icm,
        p_fi,
        target,
        true_weights,
    }
}

fn ranks(v: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&a, &b| v[a].partial_cmp(&v[b]).unwrap());
    let mut r = vec![0.0; v.len()];
    let mut pos = 0;
    while pos < idx.len() {
        let mut end = pos;
        while end + 1 < idx.len() && v[idx[end + 1]] == v[idx[pos]] {
            end += 1;
        }
        let avg = (pos + end) as f64 / 2.0;
        for &i in &idx[pos..=end] {
            r[i] = avg;
        }
        pos = end + 1;
    }
    r
}

/// Spearman rank correlation (average ranks for ties).
pub fn spearman(a: &[f64], b: &[f64]) -> f64 {
    let (ra, rb) = (ranks(a), ranks(b));
    let n = a.len() as f64;
    let (ma, mb) = (ra.iter().sum::<f64>() / n, rb.iter().sum::<f64>() / n);
    let cov: f64 = ra.iter().zip(&rb).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let va: f64 = ra.iter().map(|x| (x - ma).powi(2)).sum();
    let vb: f64 = rb.iter().map(|y| (y - mb).powi(2)).sum();
    cov / (va * vb).sqrt()
}

/// Cold-start corpus where half of the features drive co-interaction and half are noise.
///
/// Each user likes a few signal features; an item's appeal to a user grows with the
/// overlap between its signal features and the user's tastes. Noise features are
/// attached to items independently of anything users do.
pub fn signal_noise_corpus(
    seed: u64,
    n_users: usize,
    n_items: usize,
    n_features: usize,
) -> (Vec<InteractionRecord>, Vec<FeatureRecord>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_signal = n_features / 2;
    let mut item_signal: Vec<Vec<usize>> = Vec::with_capacity(n_items);
    let mut features = Vec::new();
    for i in 0..n_items {
        let sig: Vec<usize> = rand::seq::index::sample(&mut rng, n_signal, 2).into_vec();
        let noise: Vec<usize> = rand::seq::index::sample(&mut rng, n_features - n_signal, 3)
            .into_iter()
            .map(|f| f + n_signal)
            .collect();
        for &f in sig.iter().chain(&noise) {
            features.push(FeatureRecord::new(format!("i{i:04}"), format!("f{f:03}")));
        }
        item_signal.push(sig);
    }
    let mut interactions = Vec::new();
    for u in 0..n_users {
        let tastes: BTreeSet<usize> = rand::seq::index::sample(&mut rng, n_signal, 3).into_iter().collect();
        for (i, sig) in item_signal.iter().enumerate() {
            let overlap = sig.iter().filter(|f| tastes.contains(f)).count();
            let p = match overlap {
                0 => 0.01,
                1 => 0.15,
                _ => 0.5,
            };
            if rng.gen::<f64>() < p {
                interactions.push(InteractionRecord::new(format!("u{u:04}"), format!("i{i:04}"), 1.0));
            }
        }
    }
    (interactions, features)
}

/// Writes [`signal_noise_corpus`] as MovieLens-style files with headers into `dir`:
/// positives rated 4 or 5, plus a sprinkle of 1-2 ratings that binarization drops.
pub fn write_corpus(dir: &Path, seed: u64, n_users: usize, n_items: usize, n_features: usize) -> (PathBuf, PathBuf) {
    let (interactions, features) = signal_noise_corpus(seed, n_users, n_items, n_features);
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let mut ratings = String::from("userId,movieId,rating,timestamp\n");
    for (t, r) in interactions.iter().enumerate() {
        let rating = if rng.gen_bool(0.5) { 5.0 } else { 4.0 };
        let _ = writeln!(ratings, "{},{},{rating},{}", r.user, r.item, 1_000_000 + t);
        if rng.gen_bool(0.1) {
            let other = format!("i{:04}", rng.gen_range(0..n_items));
            let _ = writeln!(ratings, "{},{other},{},{}", r.user, rng.gen_range(1..=2), 2_000_000 + t);
        }
    }
    let mut feats = String::from("movieId,tag\n");
    for f in &features {
        let _ = writeln!(feats, "{},{}", f.item, f.feature);
    }
    let (rp, fp) = (dir.join("ratings.csv"), dir.join("features.csv"));
    fs::write(&rp, ratings).unwrap();
    fs::write(&fp, feats).unwrap();
    (rp, fp)
}

/// Writes `config.toml` into `dir` reading `ratings.csv` and `features.csv` next to it.
/// `tables` is appended after the `[data]` section.
pub fn write_config(dir: &Path, algorithms: &[&str], tables: &str) -> PathBuf {
    let algos: Vec<String> = algorithms.iter().map(|a| format!("\"{a}\"")).collect();
    let text = format!(
        "seed = 11\nalgorithms = [{}]\n\n[data]\ninteractions = \"ratings.csv\"\nfeatures = \"features.csv\"\n\n\
         [data.interaction_format]\nhas_header = true\n\n[data.feature_format]\nhas_header = true\n\n{tables}",
        algos.join(", ")
    );
    let path = dir.join("config.toml");
    fs::write(&path, text).unwrap();
    path
}

/// Every file in `dir` with its bytes, sorted by name.
pub fn snapshot(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out: Vec<(String, Vec<u8>)> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.is_file())
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&p).unwrap()))
        .collect();
    out.sort();
    out
}
