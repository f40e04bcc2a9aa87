//! The anytime query engine.
//!
//! Query features are visited in a seeded uniform random permutation and
//! quantized one at a time. Each feature's word looks up its postings and
//! adds `idf(w) * weight(w, j) / norm(j)` to bin `j`, so the exhausted
//! histogram ranks images exactly like tf-idf cosine similarity. After every
//! feature the stopping rule is consulted; on stop (or exhaustion) the top-n
//! bins are returned.
//!
//! The histogram maintains its running sum, peak, and runner-up
//! incrementally, so the per-feature overhead beyond quantization is
//! proportional to the number of postings touched.

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use crate::dataset::ImageRecord;
use crate::index::InvertedIndex;
use crate::stopping::{should_stop, StopState, StoppingRule};
use crate::vocab::Vocabulary;
use crate::{Error, Result};

/// Vote accumulator with one bin per database image.
///
/// `add` keeps the running sum, the peak, and the runner-up current without
/// rescanning; ties resolve to the lowest bin id. Votes must be
/// non-negative, so bins never decrease.
#[derive(Debug, Clone)]
pub struct ScoreHistogram {
    bins: Vec<f64>,
    running_sum: f64,
    max: f64,
    argmax: usize,
    second: f64,
    second_bin: usize,
    /// Upper bound on a single vote; used by the Hoeffding rule to rescale
    /// per-round increments into [0, 1].
    vote_scale: f64,
}

impl ScoreHistogram {
    pub fn new(num_bins: usize, vote_scale: f64) -> Self {
        assert!(num_bins >= 1, "histogram needs at least one bin");
        ScoreHistogram {
            bins: vec![0.0; num_bins],
            running_sum: 0.0,
            max: 0.0,
            argmax: 0,
            second: 0.0,
            second_bin: if num_bins > 1 { 1 } else { 0 },
            vote_scale,
        }
    }

    pub fn add(&mut self, bin: usize, vote: f64) {
        debug_assert!(vote >= 0.0, "votes must be non-negative");
        let value = self.bins[bin] + vote;
        self.bins[bin] = value;
        self.running_sum += vote;
        if bin == self.argmax {
            self.max = value;
        } else if value > self.max || (value == self.max && bin < self.argmax) {
            // The old peak becomes the runner-up.
            self.second = self.max;
            self.second_bin = self.argmax;
            self.max = value;
            self.argmax = bin;
        } else if bin == self.second_bin {
            self.second = value;
        } else if value > self.second || (value == self.second && bin < self.second_bin) {
            self.second = value;
            self.second_bin = bin;
        }
    }

    pub fn len(&self) -> usize {
        self.bins.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bins.is_empty()
    }

    pub fn bins(&self) -> &[f64] {
        &self.bins
    }

    pub fn running_sum(&self) -> f64 {
        self.running_sum
    }

    pub fn mean(&self) -> f64 {
        self.running_sum / self.bins.len() as f64
    }

    pub fn max(&self) -> f64 {
        self.max
    }

    pub fn argmax(&self) -> usize {
        self.argmax
    }

    /// Value of the best bin other than the peak.
    pub fn second_max(&self) -> f64 {
        self.second
    }

    pub fn vote_scale(&self) -> f64 {
        self.vote_scale
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    RuleFired,
    Exhausted,
}

#[derive(Debug, Clone)]
pub struct QueryResult {
    /// Top matches as (database image id, accumulated score), score
    /// descending, ties by ascending id. At most `n` entries; fewer if a
    /// minimum-score filter is active.
    pub ranked: Vec<(u32, f64)>,
    pub features_processed: usize,
    /// `features_processed / F_q`, in (0, 1].
    pub fraction_processed: f64,
    pub stop_reason: StopReason,
    /// Full final histogram, when requested via [`QueryOptions`].
    pub histogram_snapshot: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Default)]
pub struct QueryOptions {
    /// Copy the final histogram into the result.
    pub keep_histogram: bool,
    /// Drop ranked entries scoring below this value.
    pub min_score: Option<f64>,
    /// Multiply each vote by `exp(-dist^2 / sigma^2)` where `dist` is the
    /// feature's quantization distance. Off by default; when off, the
    /// exhausted ranking matches tf-idf cosine exactly.
    pub distance_weighting: Option<f64>,
}

/// One recorded step of a traced query.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceStep {
    /// 1-based feature count after this step.
    pub step: usize,
    pub word_id: usize,
    pub argmax: usize,
    /// `max - mean` after this step.
    pub gap: f64,
    pub max: f64,
    pub mean: f64,
}

#[derive(Debug, Clone)]
pub struct HistogramSnapshot {
    pub step: usize,
    pub bins: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct QueryTrace {
    pub steps: Vec<TraceStep>,
    pub snapshots: Vec<HistogramSnapshot>,
    pub result: QueryResult,
}

#[derive(Debug, Clone, Default)]
pub struct TraceOptions {
    /// Record a full histogram snapshot every this many features. The final
    /// histogram is always included.
    pub snapshot_every: Option<usize>,
}

pub fn run_query(
    index: &InvertedIndex,
    vocabulary: &Vocabulary,
    query: &ImageRecord,
    rule: &StoppingRule,
    n: usize,
    seed: u64,
) -> Result<QueryResult> {
    run_query_with(index, vocabulary, query, rule, n, seed, &QueryOptions::default())
}

pub fn run_query_with(
    index: &InvertedIndex,
    vocabulary: &Vocabulary,
    query: &ImageRecord,
    rule: &StoppingRule,
    n: usize,
    seed: u64,
    opts: &QueryOptions,
) -> Result<QueryResult> {
    let (hist, state, reason) = execute(
        index,
        vocabulary,
        query,
        rule,
        seed,
        opts,
        |_, _, _| {},
    )?;
    finish(hist, state, reason, query.descriptors.len(), n, opts)
}

/// Like [`run_query_with`], additionally recording per-step diagnostics and
/// periodic histogram snapshots.
#[allow(clippy::too_many_arguments)]
pub fn run_query_trace(
    index: &InvertedIndex,
    vocabulary: &Vocabulary,
    query: &ImageRecord,
    rule: &StoppingRule,
    n: usize,
    seed: u64,
    opts: &QueryOptions,
    trace_opts: &TraceOptions,
) -> Result<QueryTrace> {
    let mut steps = Vec::new();
    let mut snapshots = Vec::new();
    let every = trace_opts.snapshot_every.filter(|&e| e > 0);
    let (hist, state, reason) = execute(
        index,
        vocabulary,
        query,
        rule,
        seed,
        opts,
        |step, word_id, h: &ScoreHistogram| {
            steps.push(TraceStep {
                step,
                word_id,
                argmax: h.argmax(),
                gap: h.max() - h.mean(),
                max: h.max(),
                mean: h.mean(),
            });
            if every.is_some_and(|e| step.is_multiple_of(e)) {
                snapshots.push(HistogramSnapshot {
                    step,
                    bins: h.bins().to_vec(),
                });
            }
        },
    )?;
    if snapshots.last().is_none_or(|s| s.step != state.features_processed) {
        snapshots.push(HistogramSnapshot {
            step: state.features_processed,
            bins: hist.bins().to_vec(),
        });
    }
    let result = finish(hist, state, reason, query.descriptors.len(), n, opts)?;
    Ok(QueryTrace {
        steps,
        snapshots,
        result,
    })
}

fn execute(
    index: &InvertedIndex,
    vocabulary: &Vocabulary,
    query: &ImageRecord,
    rule: &StoppingRule,
    seed: u64,
    opts: &QueryOptions,
    mut observe: impl FnMut(usize, usize, &ScoreHistogram),
) -> Result<(ScoreHistogram, StopState, StopReason)> {
    if query.descriptors.is_empty() {
        return Err(Error::EmptyQuery);
    }
    for d in &query.descriptors {
        if d.dimension() != vocabulary.dimension() {
            return Err(Error::DimensionMismatch {
                expected: vocabulary.dimension(),
                found: d.dimension(),
            });
        }
    }
    rule.validate()?;
    if let Some(sigma) = opts.distance_weighting {
        if !sigma.is_finite() || sigma <= 0.0 {
            return Err(Error::InvalidConfig(
                "distance weighting sigma must be positive".into(),
            ));
        }
    }
    let idf = vocabulary.idf();
    if idf.len() != index.k() {
        return Err(Error::InvalidConfig(
            "vocabulary idf missing or sized differently from the index".into(),
        ));
    }

    let check_rule = !matches!(rule, StoppingRule::Never);
    let vote_scale = if check_rule {
        index.max_vote(idf)
    } else {
        1.0
    };

    let mut order: Vec<usize> = (0..query.descriptors.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));

    let mut hist = ScoreHistogram::new(index.num_images(), vote_scale);
    let mut state = StopState::default();
    let mut reason = StopReason::Exhausted;

    for (step0, &feature) in order.iter().enumerate() {
        let (word, dist) = vocabulary.quantize(&query.descriptors[feature].values)?;
        let damping = opts
            .distance_weighting
            .map_or(1.0, |sigma| (-(dist * dist) / (sigma * sigma)).exp());
        for posting in index.lookup(word)? {
            let pos = posting.image_id as usize;
            let vote = idf[word] * posting.weight as f64 / index.image_norm(pos) * damping;
            hist.add(pos, vote);
        }
        state.observe(hist.argmax());
        observe(step0 + 1, word, &hist);
        if check_rule && should_stop(rule, &hist, &state)? {
            reason = StopReason::RuleFired;
            break;
        }
    }
    Ok((hist, state, reason))
}

fn finish(
    hist: ScoreHistogram,
    state: StopState,
    reason: StopReason,
    total_features: usize,
    n: usize,
    opts: &QueryOptions,
) -> Result<QueryResult> {
    if n == 0 {
        return Err(Error::InvalidConfig("n must be at least 1".into()));
    }
    let mut ranked: Vec<(u32, f64)> = hist
        .bins()
        .iter()
        .enumerate()
        .map(|(pos, &score)| (pos as u32, score))
        .collect();
    ranked.sort_by(|a, b| {
        b.1.partial_cmp(&a.1)
            .expect("scores are finite")
            .then(a.0.cmp(&b.0))
    });
    ranked.truncate(n.min(hist.len()));
    if let Some(min) = opts.min_score {
        ranked.retain(|&(_, score)| score >= min);
    }
    Ok(QueryResult {
        ranked,
        features_processed: state.features_processed,
        fraction_processed: state.features_processed as f64 / total_features as f64,
        stop_reason: reason,
        histogram_snapshot: opts.keep_histogram.then(|| hist.bins().to_vec()),
    })
}
