//! Synthetic desk-scale datasets with planted matches of controlled difficulty.
//!
//! The generator draws descriptors from isotropic Gaussians around random
//! cluster centers in the unit cube. Database images own disjoint blocks of
//! clusters; a pool of background clusters is owned by nobody. Each query
//! image (second half of the dataset) gets a planted true match in the
//! database half:
//!
//! - an *easy* query draws a dominant fraction of its features from the
//!   planted match's clusters and the remainder from a couple of background
//!   clusters, so it shares clusters with exactly one database image;
//! - a *hard* query spreads its features over the planted match plus
//!   `confuser_count` other database images, with the planted match only
//!   slightly favored, so many database images share words with it.

use std::collections::{BTreeMap, BTreeSet};

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::dataset::{Dataset, Descriptor, GroundTruth, ImageRecord};
use crate::{Error, Result};

/// Share of an easy query's features drawn from its planted match's clusters.
const EASY_PLANTED_SHARE: f64 = 0.9;
/// Number of background clusters an easy query mixes in.
const EASY_BACKGROUND_POOL: usize = 2;
/// Relative weight of the planted match among a hard query's vote targets
/// (each confuser gets weight 1).
const HARD_PLANTED_WEIGHT: f64 = 1.5;

#[derive(Debug, Clone)]
pub struct SynthConfig {
    pub num_images: usize,
    pub features_per_image: usize,
    pub dimension: usize,
    pub num_clusters: usize,
    /// Fraction of queries generated as hard, in [0, 1].
    pub hard_fraction: f64,
    /// Database images (besides the planted match) a hard query overlaps.
    pub confuser_count: usize,
    /// Descriptor noise, as a fraction of the mean inter-center distance.
    pub sigma: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            num_images: 120,
            features_per_image: 60,
            dimension: 16,
            num_clusters: 192,
            hard_fraction: 0.25,
            confuser_count: 4,
            sigma: 0.05,
        }
    }
}

/// Difficulty class assigned to a generated query.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Difficulty {
    Easy,
    Hard,
}

/// Generator bookkeeping for one query image.
#[derive(Debug, Clone)]
pub struct PlantedQuery {
    pub image_id: u32,
    /// Position of the planted match within the database half.
    pub planted_db_pos: usize,
    pub difficulty: Difficulty,
    /// Clusters the query's features were actually drawn from.
    pub clusters_used: BTreeSet<usize>,
}

/// Generator bookkeeping: which clusters each database image owns and how
/// each query was planted. Useful for calibration tests and difficulty
/// analysis; not part of the dataset itself.
#[derive(Debug, Clone)]
pub struct SynthInfo {
    pub db_clusters: Vec<BTreeSet<usize>>,
    pub background_clusters: BTreeSet<usize>,
    pub queries: Vec<PlantedQuery>,
}

impl SynthInfo {
    /// Number of database images whose cluster set overlaps the query's.
    pub fn overlap_count(&self, query: &PlantedQuery) -> usize {
        self.db_clusters
            .iter()
            .filter(|owned| !owned.is_disjoint(&query.clusters_used))
            .count()
    }
}

pub fn synthesize(cfg: &SynthConfig, seed: u64) -> Result<Dataset> {
    synthesize_with_info(cfg, seed).map(|(ds, _)| ds)
}

pub fn synthesize_with_info(cfg: &SynthConfig, seed: u64) -> Result<(Dataset, SynthInfo)> {
    validate(cfg)?;
    let n_db = cfg.num_images / 2;
    let n_query = cfg.num_images - n_db;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    // Cluster centers, uniform in the unit cube.
    let centers: Vec<Vec<f64>> = (0..cfg.num_clusters)
        .map(|_| (0..cfg.dimension).map(|_| rng.random::<f64>()).collect())
        .collect();
    let sigma_abs = cfg.sigma * mean_pairwise_distance(&centers);
    let noise = Normal::new(0.0, sigma_abs.max(f64::MIN_POSITIVE))
        .map_err(|e| Error::InvalidConfig(format!("bad sigma: {e}")))?;

    // Cluster ownership: database images take disjoint blocks from the front,
    // the remainder is background.
    let background_count = (cfg.num_clusters / 10).max(1);
    let owned_total = cfg.num_clusters - background_count;
    let base = owned_total / n_db;
    let extra = owned_total % n_db;
    let mut db_clusters: Vec<BTreeSet<usize>> = Vec::with_capacity(n_db);
    let mut next = 0usize;
    for i in 0..n_db {
        let take = base + usize::from(i < extra);
        db_clusters.push((next..next + take).collect());
        next += take;
    }
    let background_clusters: BTreeSet<usize> = (next..cfg.num_clusters).collect();

    let draw = |cluster: usize, rng: &mut ChaCha8Rng| -> Descriptor {
        let center = &centers[cluster];
        Descriptor::new(
            center
                .iter()
                .map(|&c| (c + noise.sample(rng)) as f32)
                .collect(),
        )
    };
    let pick = |set: &BTreeSet<usize>, rng: &mut ChaCha8Rng| -> usize {
        let i = rng.random_range(0..set.len());
        *set.iter().nth(i).expect("non-empty cluster set")
    };

    // Database half.
    let mut images = Vec::with_capacity(cfg.num_images);
    for (i, owned) in db_clusters.iter().enumerate() {
        let descriptors = (0..cfg.features_per_image)
            .map(|_| {
                let c = pick(owned, &mut rng);
                draw(c, &mut rng)
            })
            .collect();
        images.push(ImageRecord {
            image_id: i as u32,
            descriptors,
        });
    }

    // Difficulty assignment: shuffle query positions, the first block is hard.
    let hard_count = (cfg.hard_fraction * n_query as f64).round() as usize;
    let mut order: Vec<usize> = (0..n_query).collect();
    order.shuffle(&mut rng);
    let mut is_hard = vec![false; n_query];
    for &q in order.iter().take(hard_count) {
        is_hard[q] = true;
    }

    // Query half.
    let mut queries = Vec::with_capacity(n_query);
    let mut ground_truth = GroundTruth::new();
    for (q, &hard) in is_hard.iter().enumerate() {
        let image_id = (n_db + q) as u32;
        let planted = rng.random_range(0..n_db);
        let mut clusters_used = BTreeSet::new();
        let mut descriptors = Vec::with_capacity(cfg.features_per_image);
        let emit = |cluster: usize,
                        used: &mut BTreeSet<usize>,
                        out: &mut Vec<Descriptor>,
                        rng: &mut ChaCha8Rng| {
            used.insert(cluster);
            out.push(draw(cluster, rng));
        };

        if hard {
            let mut pool: Vec<usize> = (0..n_db).filter(|&i| i != planted).collect();
            pool.shuffle(&mut rng);
            let confusers = &pool[..cfg.confuser_count];
            // One guaranteed feature from the planted match and from each
            // confuser, so the overlap structure is deterministic.
            let c = pick(&db_clusters[planted], &mut rng);
            emit(c, &mut clusters_used, &mut descriptors, &mut rng);
            for &conf in confusers {
                let c = pick(&db_clusters[conf], &mut rng);
                emit(c, &mut clusters_used, &mut descriptors, &mut rng);
            }
            let planted_share =
                HARD_PLANTED_WEIGHT / (HARD_PLANTED_WEIGHT + cfg.confuser_count as f64);
            while descriptors.len() < cfg.features_per_image {
                let source = if rng.random::<f64>() < planted_share {
                    planted
                } else {
                    confusers[rng.random_range(0..confusers.len())]
                };
                let c = pick(&db_clusters[source], &mut rng);
                emit(c, &mut clusters_used, &mut descriptors, &mut rng);
            }
        } else {
            let pool_size = EASY_BACKGROUND_POOL.min(background_clusters.len());
            let mut bg: Vec<usize> = background_clusters.iter().copied().collect();
            bg.shuffle(&mut rng);
            let bg_pool = &bg[..pool_size];
            let c = pick(&db_clusters[planted], &mut rng);
            emit(c, &mut clusters_used, &mut descriptors, &mut rng);
            while descriptors.len() < cfg.features_per_image {
                let c = if rng.random::<f64>() < EASY_PLANTED_SHARE {
                    pick(&db_clusters[planted], &mut rng)
                } else {
                    bg_pool[rng.random_range(0..bg_pool.len())]
                };
                emit(c, &mut clusters_used, &mut descriptors, &mut rng);
            }
        }

        images.push(ImageRecord {
            image_id,
            descriptors,
        });
        ground_truth.insert(image_id, BTreeSet::from([planted as u32]));
        queries.push(PlantedQuery {
            image_id,
            planted_db_pos: planted,
            difficulty: if hard {
                Difficulty::Hard
            } else {
                Difficulty::Easy
            },
            clusters_used,
        });
    }

    let dataset = Dataset::new(cfg.dimension, images, ground_truth)?;
    let info = SynthInfo {
        db_clusters,
        background_clusters,
        queries,
    };
    Ok((dataset, info))
}

fn validate(cfg: &SynthConfig) -> Result<()> {
    let fail = |msg: String| Err(Error::InvalidConfig(msg));
    if cfg.num_images < 2 {
        return fail("num_images must be at least 2".into());
    }
    if cfg.features_per_image < 1 {
        return fail("features_per_image must be at least 1".into());
    }
    if cfg.dimension < 1 {
        return fail("dimension must be at least 1".into());
    }
    if !(0.0..=1.0).contains(&cfg.hard_fraction) {
        return fail("hard_fraction must lie in [0, 1]".into());
    }
    if !cfg.sigma.is_finite() || cfg.sigma <= 0.0 {
        return fail("sigma must be positive and finite".into());
    }
    let n_db = cfg.num_images / 2;
    let background = (cfg.num_clusters / 10).max(1);
    if cfg.num_clusters < n_db + background {
        return fail(format!(
            "num_clusters must be at least {} so every database image owns a cluster",
            n_db + background
        ));
    }
    if cfg.hard_fraction > 0.0 {
        if cfg.confuser_count == 0 {
            return fail("confuser_count must be at least 1 when hard queries are generated".into());
        }
        if cfg.confuser_count + 1 > cfg.features_per_image {
            return fail("features_per_image must exceed confuser_count".into());
        }
        if cfg.confuser_count + 1 > n_db {
            return fail("database half too small for the requested confuser_count".into());
        }
    }
    Ok(())
}

fn mean_pairwise_distance(centers: &[Vec<f64>]) -> f64 {
    let n = centers.len();
    if n < 2 {
        return 1.0;
    }
    let mut total = 0.0;
    let mut pairs = 0u64;
    for i in 0..n {
        for j in (i + 1)..n {
            let d2: f64 = centers[i]
                .iter()
                .zip(&centers[j])
                .map(|(a, b)| (a - b) * (a - b))
                .sum();
            total += d2.sqrt();
            pairs += 1;
        }
    }
    total / pairs as f64
}

/// Mapping from each query's image id to its planted difficulty class.
pub fn difficulty_map(info: &SynthInfo) -> BTreeMap<u32, Difficulty> {
    info.queries
        .iter()
        .map(|q| (q.image_id, q.difficulty))
        .collect()
}
