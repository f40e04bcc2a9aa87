//! Visual vocabulary: k-means training, vector quantization, and idf weights.
//!
//! Training is Lloyd's algorithm with k-means++ seeding. All randomness flows
//! from the config seed, and the seeding/update order is derived from a
//! content hash of the descriptors rather than their list position, so the
//! trained centroids are invariant under permutation of the input.
//!
//! Quantization is an exact linear scan over all centroids (no approximate
//! search); ties break to the lowest word id.
//!
//! Vocabulary file (`BOWV`, little-endian): magic, version u16 = 1,
//! dimension u32, K u32, N_im u32, then K×D f32 centroids, then K f64 idf.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use crate::dataset::{CountingReader, Descriptor, ImageRecord};
use crate::{Error, Result};

pub const VOCAB_MAGIC: [u8; 4] = *b"BOWV";
pub const VOCAB_VERSION: u16 = 1;

#[derive(Debug, Clone)]
pub struct KMeansConfig {
    pub k: usize,
    pub max_iterations: usize,
    /// Relative centroid movement below which training stops.
    pub tolerance: f64,
    pub seed: u64,
}

impl KMeansConfig {
    pub fn new(k: usize, seed: u64) -> Self {
        KMeansConfig {
            k,
            max_iterations: 100,
            tolerance: 1e-4,
            seed,
        }
    }
}

/// A trained vocabulary: K centroids and, once computed, per-word idf.
#[derive(Debug, Clone, PartialEq)]
pub struct Vocabulary {
    dimension: usize,
    /// K × dimension, row-major.
    centroids: Vec<f32>,
    /// Natural-log inverse document frequency; empty until computed.
    idf: Vec<f64>,
    /// Number of database images the idf was computed on (0 until computed).
    trained_on: u32,
}

/// Result of [`Vocabulary::train`]: the vocabulary plus training diagnostics.
#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub vocabulary: Vocabulary,
    pub iterations: usize,
    /// Total squared distance to assigned centroids, recorded once per Lloyd
    /// iteration (after the update step). Non-increasing.
    pub distortion_per_iteration: Vec<f64>,
    /// Number of centroids that coincide with another centroid bit-for-bit.
    /// Non-zero only for degenerate inputs (fewer distinct points than k).
    pub duplicate_centroids: usize,
}

impl Vocabulary {
    /// Assembles a vocabulary from raw parts, validating shapes. `idf` may be
    /// empty (not yet computed).
    pub fn from_parts(
        dimension: usize,
        centroids: Vec<f32>,
        idf: Vec<f64>,
        trained_on: u32,
    ) -> Result<Self> {
        if dimension == 0 {
            return Err(Error::InvalidConfig("dimension must be at least 1".into()));
        }
        if centroids.is_empty() || !centroids.len().is_multiple_of(dimension) {
            return Err(Error::InvalidConfig(
                "centroid data must hold k whole rows".into(),
            ));
        }
        let k = centroids.len() / dimension;
        if !idf.is_empty() {
            if idf.len() != k {
                return Err(Error::InvalidConfig("idf length must equal k".into()));
            }
            if idf.iter().any(|v| !v.is_finite() || *v < 0.0) {
                return Err(Error::InvalidConfig(
                    "idf entries must be finite and non-negative".into(),
                ));
            }
        }
        if centroids.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidConfig("centroids must be finite".into()));
        }
        Ok(Vocabulary {
            dimension,
            centroids,
            idf,
            trained_on,
        })
    }

    pub fn k(&self) -> usize {
        self.centroids.len() / self.dimension
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn centroid(&self, word: usize) -> &[f32] {
        &self.centroids[word * self.dimension..(word + 1) * self.dimension]
    }

    pub fn centroids(&self) -> &[f32] {
        &self.centroids
    }

    /// Per-word idf; empty until [`Vocabulary::compute_idf`] has run.
    pub fn idf(&self) -> &[f64] {
        &self.idf
    }

    pub fn has_idf(&self) -> bool {
        !self.idf.is_empty()
    }

    pub fn trained_on(&self) -> u32 {
        self.trained_on
    }

    /// Trains K centroids on the given descriptors.
    pub fn train(descriptors: &[Descriptor], cfg: &KMeansConfig) -> Result<TrainOutcome> {
        if descriptors.is_empty() {
            return Err(Error::InvalidConfig("no descriptors to train on".into()));
        }
        if cfg.k == 0 {
            return Err(Error::InvalidConfig("k must be at least 1".into()));
        }
        if cfg.k > descriptors.len() {
            return Err(Error::InvalidConfig(format!(
                "k = {} exceeds descriptor count {}",
                cfg.k,
                descriptors.len()
            )));
        }
        if cfg.max_iterations == 0 {
            return Err(Error::InvalidConfig("max_iterations must be at least 1".into()));
        }
        if cfg.tolerance.is_nan() || cfg.tolerance < 0.0 {
            return Err(Error::InvalidConfig("tolerance must be non-negative".into()));
        }
        let dim = descriptors[0].dimension();
        for d in descriptors {
            if d.dimension() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    found: d.dimension(),
                });
            }
        }

        // Canonical point order: content hash, then raw bytes, then position.
        // Every seeded choice below indexes into this order, making training
        // invariant to permutations of the input list.
        let mut canon: Vec<usize> = (0..descriptors.len()).collect();
        canon.sort_by(|&a, &b| {
            let (da, db) = (&descriptors[a], &descriptors[b]);
            descriptor_hash(da)
                .cmp(&descriptor_hash(db))
                .then_with(|| descriptor_bytes(da).cmp(&descriptor_bytes(db)))
                .then(a.cmp(&b))
        });
        let points: Vec<Vec<f64>> = canon
            .iter()
            .map(|&i| descriptors[i].values.iter().map(|&v| v as f64).collect())
            .collect();

        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let mut centroids = seed_plus_plus(&points, cfg.k, &mut rng);

        let n = points.len();
        let mut assignment = vec![0usize; n];
        let mut point_dist2 = vec![0f64; n];
        let mut distortion_per_iteration = Vec::new();
        let mut iterations = 0;

        for _ in 0..cfg.max_iterations {
            iterations += 1;

            // Assignment, exact scan with lowest-id tie-break.
            let mut counts = vec![0usize; cfg.k];
            for (p, point) in points.iter().enumerate() {
                let (best, d2) = nearest(&centroids, point);
                assignment[p] = best;
                point_dist2[p] = d2;
                counts[best] += 1;
            }

            // Reseed empty clusters from the farthest currently-assigned
            // point, never emptying a singleton cluster in the process.
            for e in 0..cfg.k {
                if counts[e] > 0 {
                    continue;
                }
                let mut victim: Option<usize> = None;
                for p in 0..n {
                    if counts[assignment[p]] < 2 {
                        continue;
                    }
                    if victim.is_none_or(|v| point_dist2[p] > point_dist2[v]) {
                        victim = Some(p);
                    }
                }
                if let Some(p) = victim {
                    counts[assignment[p]] -= 1;
                    assignment[p] = e;
                    counts[e] = 1;
                    point_dist2[p] = 0.0;
                    centroids[e] = points[p].clone();
                }
            }

            // Update step; clusters left empty keep their previous centroid.
            let mut sums = vec![vec![0f64; dim]; cfg.k];
            for (p, point) in points.iter().enumerate() {
                let s = &mut sums[assignment[p]];
                for (acc, v) in s.iter_mut().zip(point) {
                    *acc += v;
                }
            }
            let mut movement: f64 = 0.0;
            for c in 0..cfg.k {
                if counts[c] == 0 {
                    continue;
                }
                let inv = 1.0 / counts[c] as f64;
                let old = std::mem::replace(
                    &mut centroids[c],
                    sums[c].iter().map(|s| s * inv).collect(),
                );
                let delta2: f64 = centroids[c]
                    .iter()
                    .zip(&old)
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum();
                let old_norm = old.iter().map(|v| v * v).sum::<f64>().sqrt();
                movement = movement.max(delta2.sqrt() / old_norm.max(1e-12));
            }

            let distortion: f64 = points
                .iter()
                .enumerate()
                .map(|(p, point)| squared_distance(point, &centroids[assignment[p]]))
                .sum();
            distortion_per_iteration.push(distortion);

            if movement < cfg.tolerance {
                break;
            }
        }

        let centroids_f32: Vec<f32> = centroids.iter().flatten().map(|&v| v as f32).collect();
        let mut distinct = BTreeSet::new();
        for c in 0..cfg.k {
            distinct.insert(descriptor_bytes(&Descriptor::new(
                centroids_f32[c * dim..(c + 1) * dim].to_vec(),
            )));
        }
        Ok(TrainOutcome {
            vocabulary: Vocabulary {
                dimension: dim,
                centroids: centroids_f32,
                idf: Vec::new(),
                trained_on: 0,
            },
            iterations,
            distortion_per_iteration,
            duplicate_centroids: cfg.k - distinct.len(),
        })
    }

    /// Maps a descriptor to its nearest word by exact scan.
    /// Returns `(word_id, euclidean distance)`; ties break to the lowest id.
    pub fn quantize(&self, values: &[f32]) -> Result<(usize, f64)> {
        if values.len() != self.dimension {
            return Err(Error::DimensionMismatch {
                expected: self.dimension,
                found: values.len(),
            });
        }
        let mut best = 0usize;
        let mut best_d2 = f64::INFINITY;
        for w in 0..self.k() {
            let c = self.centroid(w);
            let mut d2 = 0f64;
            for (x, y) in values.iter().zip(c) {
                let diff = *x as f64 - *y as f64;
                d2 += diff * diff;
            }
            if d2 < best_d2 {
                best_d2 = d2;
                best = w;
            }
        }
        Ok((best, best_d2.sqrt()))
    }

    /// Word histogram of one image: word id to occurrence count.
    pub fn quantize_image(&self, image: &ImageRecord) -> Result<BTreeMap<usize, u32>> {
        let mut counts = BTreeMap::new();
        for d in &image.descriptors {
            let (w, _) = self.quantize(&d.values)?;
            *counts.entry(w).or_insert(0) += 1;
        }
        Ok(counts)
    }

    /// Computes idf over a database: `idf[w] = ln(N_im / n_w)` where `n_w`
    /// is the number of database images containing word `w`, clamped to at
    /// least 1 so words absent everywhere get `ln(N_im)`.
    pub fn compute_idf(&self, database: &[ImageRecord]) -> Result<Vocabulary> {
        if database.is_empty() {
            return Err(Error::InvalidConfig("database must not be empty".into()));
        }
        let mut occurrences = vec![0u32; self.k()];
        for image in database {
            for &w in self.quantize_image(image)?.keys() {
                occurrences[w] += 1;
            }
        }
        let n_im = database.len() as f64;
        let idf = occurrences
            .iter()
            .map(|&n_w| (n_im / (n_w.max(1) as f64)).ln())
            .collect();
        Ok(Vocabulary {
            dimension: self.dimension,
            centroids: self.centroids.clone(),
            idf,
            trained_on: database.len() as u32,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        if !self.has_idf() {
            return Err(Error::InvalidConfig(
                "vocabulary idf not computed; nothing to save".into(),
            ));
        }
        let mut w = BufWriter::new(File::create(path)?);
        w.write_all(&VOCAB_MAGIC)?;
        w.write_all(&VOCAB_VERSION.to_le_bytes())?;
        w.write_all(&(self.dimension as u32).to_le_bytes())?;
        w.write_all(&(self.k() as u32).to_le_bytes())?;
        w.write_all(&self.trained_on.to_le_bytes())?;
        for v in &self.centroids {
            w.write_all(&v.to_le_bytes())?;
        }
        for v in &self.idf {
            w.write_all(&v.to_le_bytes())?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Vocabulary> {
        let file = File::open(path)?;
        let mut r = CountingReader::new(BufReader::new(file));
        let mut magic = [0u8; 4];
        r.read_bytes(&mut magic, "magic")?;
        if magic != VOCAB_MAGIC {
            return Err(Error::format(0, "bad magic, expected BOWV"));
        }
        let version = r.read_u16()?;
        if version != VOCAB_VERSION {
            return Err(Error::format(4, format!("unsupported version {version}")));
        }
        let dimension = r.read_u32()? as usize;
        let k = r.read_u32()? as usize;
        let trained_on = r.read_u32()?;
        if dimension == 0 || k == 0 {
            return Err(Error::format(6, "dimension and k must be at least 1"));
        }
        let mut centroids = Vec::with_capacity(k * dimension);
        for _ in 0..k * dimension {
            centroids.push(r.read_f32()?);
        }
        let mut idf = Vec::with_capacity(k);
        for _ in 0..k {
            idf.push(r.read_f64()?);
        }
        Vocabulary::from_parts(dimension, centroids, idf, trained_on)
    }
}

fn descriptor_bytes(d: &Descriptor) -> Vec<u8> {
    d.values.iter().flat_map(|v| v.to_le_bytes()).collect()
}

/// FNV-1a over the descriptor's little-endian bytes. Pinned here so the
/// canonical training order never shifts underneath a stored vocabulary.
fn descriptor_hash(d: &Descriptor) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for v in &d.values {
        for b in v.to_le_bytes() {
            h ^= b as u64;
            h = h.wrapping_mul(0x0000_0100_0000_01b3);
        }
    }
    h
}

fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn nearest(centroids: &[Vec<f64>], point: &[f64]) -> (usize, f64) {
    let mut best = 0usize;
    let mut best_d2 = f64::INFINITY;
    for (c, centroid) in centroids.iter().enumerate() {
        let d2 = squared_distance(point, centroid);
        if d2 < best_d2 {
            best_d2 = d2;
            best = c;
        }
    }
    (best, best_d2)
}

/// k-means++ seeding: first center uniform, the rest weighted by squared
/// distance to the nearest center already chosen.
fn seed_plus_plus(points: &[Vec<f64>], k: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let n = points.len();
    let mut centroids: Vec<Vec<f64>> = Vec::with_capacity(k);
    let first = rng.random_range(0..n);
    centroids.push(points[first].clone());
    let mut dist2: Vec<f64> = points
        .iter()
        .map(|p| squared_distance(p, &centroids[0]))
        .collect();
    while centroids.len() < k {
        let total: f64 = dist2.iter().sum();
        let chosen = if total > 0.0 {
            let u = rng.random::<f64>() * total;
            let mut acc = 0.0;
            let mut chosen = None;
            for (i, &d) in dist2.iter().enumerate() {
                if d <= 0.0 {
                    continue;
                }
                acc += d;
                if acc >= u {
                    chosen = Some(i);
                    break;
                }
            }
            // Float accumulation can land just short of the final weight.
            chosen.unwrap_or_else(|| {
                dist2
                    .iter()
                    .rposition(|&d| d > 0.0)
                    .expect("positive total implies a positive weight")
            })
        } else {
            // All points coincide with existing centers; duplicates are the
            // only option left.
            rng.random_range(0..n)
        };
        centroids.push(points[chosen].clone());
        for (d, p) in dist2.iter_mut().zip(points) {
            let nd = squared_distance(p, centroids.last().unwrap());
            if nd < *d {
                *d = nd;
            }
        }
    }
    centroids
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use tempfile::tempdir;

    fn desc(values: &[f32]) -> Descriptor {
        Descriptor::new(values.to_vec())
    }

    fn image(id: u32, descriptors: Vec<Descriptor>) -> ImageRecord {
        ImageRecord {
            image_id: id,
            descriptors,
        }
    }

    #[test]
    fn unit_square_corners_become_their_own_centroids() {
        let corners = [
            desc(&[0.0, 0.0]),
            desc(&[0.0, 1.0]),
            desc(&[1.0, 0.0]),
            desc(&[1.0, 1.0]),
        ];
        let cfg = KMeansConfig {
            tolerance: 1e-9,
            ..KMeansConfig::new(4, 3)
        };
        let out = Vocabulary::train(&corners, &cfg).unwrap();
        let v = out.vocabulary;
        let mut found: Vec<Vec<f32>> = (0..4).map(|w| v.centroid(w).to_vec()).collect();
        found.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let mut expected: Vec<Vec<f32>> = corners.iter().map(|d| d.values.clone()).collect();
        expected.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert_eq!(found, expected);
        assert_eq!(out.duplicate_centroids, 0);
        assert_eq!(*out.distortion_per_iteration.last().unwrap(), 0.0);
    }

    #[test]
    fn two_gaussians_recover_the_true_means() {
        // Oracle: with this separation the optimal 2-means partition is the
        // generating split, so each trained centroid must land within
        // 3*sigma/sqrt(50) of a per-cluster sample mean (equal to it up to
        // f32 rounding), and the sample means sit near the true means.
        let sigma = 0.5f64;
        let means = [[0.0f64, 0.0], [10.0, 10.0]];
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let normal = rand_distr::Normal::new(0.0, sigma).unwrap();
        let mut data = Vec::new();
        let mut sample_means = [[0f64; 2]; 2];
        for (g, mean) in means.iter().enumerate() {
            for _ in 0..50 {
                let p = [
                    mean[0] + normal.sample(&mut rng),
                    mean[1] + normal.sample(&mut rng),
                ];
                sample_means[g][0] += p[0] / 50.0;
                sample_means[g][1] += p[1] / 50.0;
                data.push(desc(&[p[0] as f32, p[1] as f32]));
            }
        }
        let out = Vocabulary::train(&data, &KMeansConfig::new(2, 5)).unwrap();
        let bound = 3.0 * sigma / (50f64).sqrt();
        for w in 0..2 {
            let c = out.vocabulary.centroid(w);
            let closest = sample_means
                .iter()
                .map(|m| ((c[0] as f64 - m[0]).powi(2) + (c[1] as f64 - m[1]).powi(2)).sqrt())
                .fold(f64::INFINITY, f64::min);
            assert!(closest < bound, "centroid {w} off by {closest}, bound {bound}");
        }
    }

    #[test]
    fn invalid_k_is_rejected() {
        let data = [desc(&[0.0]), desc(&[1.0])];
        assert!(matches!(
            Vocabulary::train(&data, &KMeansConfig::new(0, 1)),
            Err(Error::InvalidConfig(_))
        ));
        assert!(matches!(
            Vocabulary::train(&data, &KMeansConfig::new(3, 1)),
            Err(Error::InvalidConfig(_))
        ));
    }

    #[test]
    fn identical_descriptors_flag_duplicate_centroids() {
        let data = vec![desc(&[2.0, 2.0]); 6];
        let out = Vocabulary::train(&data, &KMeansConfig::new(3, 1)).unwrap();
        assert_eq!(out.duplicate_centroids, 2);
        for w in 0..3 {
            assert_eq!(out.vocabulary.centroid(w), &[2.0, 2.0]);
        }
    }

    #[test]
    fn training_is_invariant_under_input_permutation() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let data: Vec<Descriptor> = (0..120)
            .map(|_| desc(&[rng.random::<f32>(), rng.random::<f32>(), rng.random::<f32>()]))
            .collect();
        let cfg = KMeansConfig::new(8, 42);
        let a = Vocabulary::train(&data, &cfg).unwrap().vocabulary;
        let mut shuffled = data.clone();
        shuffled.shuffle(&mut rng);
        let b = Vocabulary::train(&shuffled, &cfg).unwrap().vocabulary;
        assert_eq!(a.centroids(), b.centroids());
    }

    #[test]
    fn distortion_is_non_increasing() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let data: Vec<Descriptor> = (0..200)
            .map(|_| desc(&[rng.random::<f32>() * 4.0, rng.random::<f32>() * 4.0]))
            .collect();
        let out = Vocabulary::train(&data, &KMeansConfig::new(10, 7)).unwrap();
        let d = &out.distortion_per_iteration;
        assert!(!d.is_empty());
        for w in d.windows(2) {
            assert!(
                w[1] <= w[0] * (1.0 + 1e-12),
                "distortion increased: {} -> {}",
                w[0],
                w[1]
            );
        }
    }

    #[test]
    fn quantize_hits_exact_centroid() {
        let mut centroids = Vec::new();
        for w in 0..32 {
            centroids.extend_from_slice(&[w as f32 * 5.0, 1.0]);
        }
        let v = Vocabulary::from_parts(2, centroids, Vec::new(), 0).unwrap();
        let (w, d) = v.quantize(&[85.0, 1.0]).unwrap();
        assert_eq!(w, 17);
        assert_eq!(d, 0.0);
    }

    #[test]
    fn quantize_breaks_ties_to_lowest_word() {
        // Words 2 and 5 are both at distance 1 from the probe.
        let centroids = vec![
            10.0, 0.0, // 0
            20.0, 0.0, // 1
            1.0, 0.0, // 2
            30.0, 0.0, // 3
            40.0, 0.0, // 4
            3.0, 0.0, // 5
        ];
        let v = Vocabulary::from_parts(2, centroids, Vec::new(), 0).unwrap();
        let (w, d) = v.quantize(&[2.0, 0.0]).unwrap();
        assert_eq!(w, 2);
        assert!((d - 1.0).abs() < 1e-12);
    }

    #[test]
    fn quantize_matches_exhaustive_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let dim = 6;
        let k = 100;
        let centroids: Vec<f32> = (0..k * dim).map(|_| rng.random::<f32>()).collect();
        let v = Vocabulary::from_parts(dim, centroids.clone(), Vec::new(), 0).unwrap();
        for _ in 0..1000 {
            let probe: Vec<f32> = (0..dim).map(|_| rng.random::<f32>()).collect();
            let (w, _) = v.quantize(&probe).unwrap();
            // Independent scan.
            let mut best = 0;
            let mut best_d2 = f64::INFINITY;
            for c in 0..k {
                let mut d2 = 0f64;
                for j in 0..dim {
                    let diff = probe[j] as f64 - centroids[c * dim + j] as f64;
                    d2 += diff * diff;
                }
                if d2 < best_d2 {
                    best_d2 = d2;
                    best = c;
                }
            }
            assert_eq!(w, best);
        }
    }

    #[test]
    fn quantize_rejects_dimension_mismatch() {
        let v = Vocabulary::from_parts(2, vec![0.0, 0.0], Vec::new(), 0).unwrap();
        assert!(matches!(
            v.quantize(&[1.0, 2.0, 3.0]),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    /// Ten 1-D images pinned to specific words via well-separated centroids.
    fn idf_fixture() -> (Vocabulary, Vec<ImageRecord>) {
        let centroids = vec![0.0f32, 10.0, 20.0, 30.0];
        let v = Vocabulary::from_parts(1, centroids, Vec::new(), 0).unwrap();
        // Word 0 in every image; word 1 in image 0 only; word 3 nowhere.
        let database: Vec<ImageRecord> = (0..10u32)
            .map(|id| {
                let mut descriptors = vec![desc(&[0.0])];
                if id == 0 {
                    descriptors.push(desc(&[10.0]));
                }
                descriptors.push(desc(&[20.0]));
                image(id, descriptors)
            })
            .collect();
        (v, database)
    }

    #[test]
    fn idf_formula_and_clamping() {
        let (v, database) = idf_fixture();
        let v = v.compute_idf(&database).unwrap();
        let idf = v.idf();
        assert_eq!(idf[0], 0.0); // everywhere
        assert!((idf[1] - 10f64.ln()).abs() < 1e-12); // one of ten
        assert_eq!(idf[2], 0.0); // everywhere
        assert!((idf[3] - 10f64.ln()).abs() < 1e-12); // nowhere, clamped
        assert_eq!(v.trained_on(), 10);
    }

    #[test]
    fn idf_is_invariant_under_database_reordering() {
        let (v, mut database) = idf_fixture();
        let a = v.compute_idf(&database).unwrap();
        database.reverse();
        let b = v.compute_idf(&database).unwrap();
        assert_eq!(a.idf(), b.idf());
    }

    #[test]
    fn save_requires_idf() {
        let v = Vocabulary::from_parts(1, vec![0.0], Vec::new(), 0).unwrap();
        let dir = tempdir().unwrap();
        assert!(matches!(
            v.save(&dir.path().join("v.bowv")),
            Err(Error::InvalidConfig(_))
        ));
    }

    #[test]
    fn save_load_round_trip() {
        let (v, database) = idf_fixture();
        let v = v.compute_idf(&database).unwrap();
        let dir = tempdir().unwrap();
        let path = dir.path().join("v.bowv");
        v.save(&path).unwrap();
        let loaded = Vocabulary::load(&path).unwrap();
        assert_eq!(v, loaded);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn quantize_is_idempotent_and_in_range(
            seed in 0u64..1000,
            dim in 1usize..5,
            k in 1usize..20,
        ) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let centroids: Vec<f32> = (0..k * dim).map(|_| rng.random::<f32>()).collect();
            let v = Vocabulary::from_parts(dim, centroids, Vec::new(), 0).unwrap();
            let probe: Vec<f32> = (0..dim).map(|_| rng.random::<f32>()).collect();
            let (w1, d1) = v.quantize(&probe).unwrap();
            let (w2, d2) = v.quantize(&probe).unwrap();
            prop_assert_eq!(w1, w2);
            prop_assert_eq!(d1, d2);
            prop_assert!(w1 < k);
            prop_assert!(d1 >= 0.0);
        }
    }
}
