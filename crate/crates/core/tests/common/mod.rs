//! Shared fixtures and independent oracles for the integration suites.
//!
//! The oracles deliberately avoid the engine's code paths: quantization is a
//! fresh exhaustive scan, idf and tf-idf vectors are rebuilt from raw
//! descriptor counts, and prefix replays rescan the whole histogram for the
//! peak at every step.

// Each test binary compiles this module separately and uses its own subset.
#![allow(dead_code)]

use anybow::dataset::{Dataset, Descriptor, ImageRecord};
use anybow::index::InvertedIndex;
use anybow::synth::{synthesize_with_info, SynthConfig, SynthInfo};
use anybow::vocab::{KMeansConfig, Vocabulary};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

/// Synthesize a dataset and run the offline half of the pipeline on it.
pub fn pipeline(
    cfg: &SynthConfig,
    k: usize,
    seed: u64,
) -> (Dataset, SynthInfo, Vocabulary, InvertedIndex) {
    let (ds, info) = synthesize_with_info(cfg, seed).expect("synthesize");
    let descriptors: Vec<Descriptor> = ds
        .database()
        .iter()
        .flat_map(|im| im.descriptors.iter().cloned())
        .collect();
    let trained =
        Vocabulary::train(&descriptors, &KMeansConfig::new(k, seed ^ 0xabcd)).expect("train");
    let vocab = trained
        .vocabulary
        .compute_idf(ds.database())
        .expect("compute idf");
    let index = InvertedIndex::build(&vocab, ds.database()).expect("build index");
    (ds, info, vocab, index)
}

/// Exhaustive nearest-centroid scan, written from scratch: f64 accumulation
/// in dimension order, strict `<`, so ties land on the lowest word id.
pub fn oracle_quantize(centroids: &[f32], dim: usize, values: &[f32]) -> usize {
    let k = centroids.len() / dim;
    let mut best = 0usize;
    let mut best_d2 = f64::INFINITY;
    for w in 0..k {
        let mut d2 = 0f64;
        for j in 0..dim {
            let diff = values[j] as f64 - centroids[w * dim + j] as f64;
            d2 += diff * diff;
        }
        if d2 < best_d2 {
            best_d2 = d2;
            best = w;
        }
    }
    best
}

/// Brute-force tf-idf cosine ranking over the database, with its own
/// quantization, idf, vectors, and norms. Returns database positions in
/// score-descending order, ties by ascending position.
pub fn oracle_cosine_rank(
    vocabulary: &Vocabulary,
    database: &[ImageRecord],
    query: &ImageRecord,
) -> Vec<u32> {
    let dim = vocabulary.dimension();
    let k = vocabulary.k();
    let centroids = vocabulary.centroids();

    let word_counts = |im: &ImageRecord| -> Vec<u32> {
        let mut counts = vec![0u32; k];
        for d in &im.descriptors {
            counts[oracle_quantize(centroids, dim, &d.values)] += 1;
        }
        counts
    };

    let db_counts: Vec<Vec<u32>> = database.iter().map(word_counts).collect();
    let n_im = database.len() as f64;
    let mut idf = vec![0f64; k];
    for (w, slot) in idf.iter_mut().enumerate() {
        let n_w = db_counts.iter().filter(|c| c[w] > 0).count();
        *slot = (n_im / (n_w.max(1) as f64)).ln();
    }

    let tfidf = |counts: &[u32], total: usize| -> Vec<f64> {
        counts
            .iter()
            .zip(&idf)
            .map(|(&c, &w_idf)| c as f64 / total as f64 * w_idf)
            .collect()
    };
    let q_vec = tfidf(&word_counts(query), query.descriptors.len());
    let q_norm = q_vec.iter().map(|x| x * x).sum::<f64>().sqrt();

    let mut scored: Vec<(u32, f64)> = database
        .iter()
        .enumerate()
        .map(|(pos, im)| {
            let d_vec = tfidf(&db_counts[pos], im.descriptors.len());
            let d_norm = d_vec.iter().map(|x| x * x).sum::<f64>().sqrt();
            let dot: f64 = q_vec.iter().zip(&d_vec).map(|(a, b)| a * b).sum();
            let score = if q_norm > 0.0 && d_norm > 0.0 {
                dot / (q_norm * d_norm)
            } else {
                0.0
            };
            (pos as u32, score)
        })
        .collect();
    scored.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
    scored.into_iter().map(|(pos, _)| pos).collect()
}

/// Prefix-replay oracle: replays the seeded permutation one feature at a
/// time, rescanning all bins for the peak after each step, and returns the
/// smallest prefix after which the peak is final.
pub fn oracle_min_prefix(
    index: &InvertedIndex,
    vocabulary: &Vocabulary,
    query: &ImageRecord,
    seed: u64,
) -> usize {
    let mut order: Vec<usize> = (0..query.descriptors.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));

    let idf = vocabulary.idf();
    let centroids = vocabulary.centroids();
    let dim = vocabulary.dimension();
    let mut bins = vec![0f64; index.num_images()];
    let mut argmax_history = Vec::with_capacity(order.len());
    for &feature in &order {
        let word = oracle_quantize(centroids, dim, &query.descriptors[feature].values);
        for p in index.lookup(word).expect("word in range") {
            bins[p.image_id as usize] +=
                idf[word] * p.weight as f64 / index.image_norm(p.image_id as usize);
        }
        // Full rescan, lowest index wins ties.
        let mut peak = 0usize;
        for (i, &v) in bins.iter().enumerate() {
            if v > bins[peak] {
                peak = i;
            }
        }
        argmax_history.push(peak);
    }
    let final_peak = *argmax_history.last().expect("non-empty query");
    argmax_history
        .iter()
        .rposition(|&p| p != final_peak)
        .map_or(1, |i| i + 2)
}

pub fn median(values: &mut [f64]) -> f64 {
    values.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        (values[n / 2 - 1] + values[n / 2]) / 2.0
    }
}

/// Quantile by nearest-rank on a sorted copy.
pub fn quantile(values: &[f64], q: f64) -> f64 {
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let idx = (q * (sorted.len() - 1) as f64).round() as usize;
    sorted[idx]
}
