//! Evaluation harness: precision/recall over ground truth at a precision
//! floor, fraction-of-features accounting, threshold sweeps, Monte Carlo
//! averaging, and per-query minimal-prefix profiles.
//!
//! A query is counted correct at level `n` if any of its top-`n` results is
//! in its ground-truth set. A min-score acceptance threshold induces the
//! precision/recall trade-off: among queries whose best score clears the
//! threshold, precision is the fraction answered correctly; recall is
//! reported against all queries (`recall`) and against accepted queries
//! (`recall_accepted`). Each report row carries the highest recall achievable
//! with precision at or above the configured floor, with the threshold swept
//! over the observed scores. Metrics are averaged over Monte Carlo runs that
//! differ only in the feature-permutation seed (`base_seed + run`).

use std::io::Write;

use rayon::prelude::*;

use crate::dataset::Dataset;
use crate::index::InvertedIndex;
use crate::query::{run_query_trace, run_query_with, QueryOptions, TraceOptions};
use crate::stopping::StoppingRule;
use crate::vocab::Vocabulary;
use crate::{Error, Result};

#[derive(Debug, Clone)]
pub struct EvalConfig {
    pub top_n: Vec<usize>,
    pub rules: Vec<StoppingRule>,
    pub monte_carlo_runs: usize,
    pub base_seed: u64,
    /// Report recall at the best operating point with precision >= this.
    pub precision_floor: f64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            top_n: vec![3, 5, 10],
            rules: vec![StoppingRule::Never],
            monte_carlo_runs: 10,
            base_seed: 0,
            precision_floor: 0.90,
        }
    }
}

/// Metrics for one (rule, n) combination, averaged over runs.
#[derive(Debug, Clone)]
pub struct EvalRow {
    pub rule: String,
    pub param: String,
    pub n: usize,
    /// Correct answered queries over all queries.
    pub recall: f64,
    /// Correct answered queries over accepted queries.
    pub recall_accepted: f64,
    pub precision: f64,
    pub mean_fraction: f64,
}

#[derive(Debug, Clone)]
pub struct EvalReport {
    pub rows: Vec<EvalRow>,
    /// Per rule: each query's fraction of features processed, averaged over
    /// runs, in query order. `mean_fraction` above is the mean of this list.
    pub per_query_fractions: Vec<Vec<f64>>,
    pub run_count: usize,
}

/// Runs every configured rule over every query for every Monte Carlo seed
/// and aggregates precision/recall at the precision floor.
pub fn evaluate(
    index: &InvertedIndex,
    vocabulary: &Vocabulary,
    ds: &Dataset,
    cfg: &EvalConfig,
) -> Result<EvalReport> {
    validate(cfg)?;
    let queries = ds.queries();
    if queries.is_empty() {
        return Err(Error::InvalidConfig("dataset has no query half".into()));
    }
    for q in queries {
        if !ds.ground_truth.contains_key(&q.image_id) {
            return Err(Error::MissingGroundTruth(q.image_id));
        }
    }
    let db_ids: Vec<u32> = ds.database().iter().map(|im| im.image_id).collect();
    let max_n = *cfg.top_n.iter().max().expect("top_n validated non-empty");

    let mut rows = Vec::new();
    let mut per_rule_fractions = Vec::new();
    for rule in &cfg.rules {
        let mut fractions = vec![0f64; queries.len()];
        // outcomes[run][query][n-index] = (best score, best ground-truth hit)
        let mut run_outcomes: Vec<Vec<Vec<QueryOutcome>>> =
            Vec::with_capacity(cfg.monte_carlo_runs);
        for run in 0..cfg.monte_carlo_runs {
            let seed = cfg.base_seed.wrapping_add(run as u64);
            let results: Vec<_> = queries
                .par_iter()
                .map(|q| {
                    run_query_with(
                        index,
                        vocabulary,
                        q,
                        rule,
                        max_n,
                        seed,
                        &QueryOptions::default(),
                    )
                })
                .collect::<Result<_>>()?;
            let mut outcomes = Vec::with_capacity(queries.len());
            for (qi, (q, result)) in queries.iter().zip(&results).enumerate() {
                fractions[qi] += result.fraction_processed;
                let gt = &ds.ground_truth[&q.image_id];
                let per_n: Vec<QueryOutcome> = cfg
                    .top_n
                    .iter()
                    .map(|&n| {
                        let best = result.ranked.first().map_or(0.0, |r| r.1);
                        let hit = result
                            .ranked
                            .iter()
                            .take(n)
                            .filter(|(pos, _)| gt.contains(&db_ids[*pos as usize]))
                            .map(|&(_, score)| score)
                            .fold(None, |acc: Option<f64>, s| {
                                Some(acc.map_or(s, |a| a.max(s)))
                            });
                        QueryOutcome { best, hit }
                    })
                    .collect();
                outcomes.push(per_n);
            }
            run_outcomes.push(outcomes);
        }
        for f in &mut fractions {
            *f /= cfg.monte_carlo_runs as f64;
        }
        let mean_fraction = fractions.iter().sum::<f64>() / fractions.len() as f64;

        for (ni, &n) in cfg.top_n.iter().enumerate() {
            let mut recall = 0f64;
            let mut recall_accepted = 0f64;
            let mut precision = 0f64;
            for outcomes in &run_outcomes {
                let slice: Vec<QueryOutcome> = outcomes.iter().map(|q| q[ni]).collect();
                let point = operating_point(&slice, cfg.precision_floor);
                recall += point.recall;
                recall_accepted += point.recall_accepted;
                precision += point.precision;
            }
            let runs = cfg.monte_carlo_runs as f64;
            rows.push(EvalRow {
                rule: rule.family_name().to_string(),
                param: rule.param_string(),
                n,
                recall: recall / runs,
                recall_accepted: recall_accepted / runs,
                precision: precision / runs,
                mean_fraction,
            });
        }
        per_rule_fractions.push(fractions);
    }
    Ok(EvalReport {
        rows,
        per_query_fractions: per_rule_fractions,
        run_count: cfg.monte_carlo_runs,
    })
}

#[derive(Debug, Clone, Copy)]
struct QueryOutcome {
    /// Best score in the ranked list (0 when empty).
    best: f64,
    /// Best score among ground-truth hits within the top-n, if any.
    hit: Option<f64>,
}

struct OperatingPoint {
    recall: f64,
    recall_accepted: f64,
    precision: f64,
}

/// Sweeps the acceptance threshold over observed scores and returns the
/// highest-recall point whose precision meets the floor. An empty answer set
/// counts as precision 1.0, so a feasible point always exists.
fn operating_point(outcomes: &[QueryOutcome], floor: f64) -> OperatingPoint {
    let total = outcomes.len() as f64;
    let mut thresholds: Vec<f64> = vec![0.0, f64::INFINITY];
    thresholds.extend(outcomes.iter().map(|o| o.best));
    thresholds.extend(outcomes.iter().filter_map(|o| o.hit));
    thresholds.sort_by(|a, b| a.partial_cmp(b).unwrap());
    thresholds.dedup();

    let mut best: Option<OperatingPoint> = None;
    for &theta in &thresholds {
        let answered = outcomes.iter().filter(|o| o.best >= theta).count() as f64;
        let correct = outcomes
            .iter()
            .filter(|o| o.hit.is_some_and(|h| h >= theta))
            .count() as f64;
        let precision = if answered > 0.0 { correct / answered } else { 1.0 };
        if precision < floor {
            continue;
        }
        let point = OperatingPoint {
            recall: correct / total,
            recall_accepted: if answered > 0.0 { correct / answered } else { 0.0 },
            precision,
        };
        let better = best.as_ref().is_none_or(|b| {
            point.recall > b.recall || (point.recall == b.recall && point.precision > b.precision)
        });
        if better {
            best = Some(point);
        }
    }
    best.expect("threshold above all scores is always feasible")
}

/// Rule families that take a single swept parameter.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RuleFamily {
    Rule1,
    Rule2,
    Rule3,
}

impl RuleFamily {
    pub fn parse(name: &str) -> Result<RuleFamily> {
        match name {
            "rule1" => Ok(RuleFamily::Rule1),
            "rule2" => Ok(RuleFamily::Rule2),
            "rule3" => Ok(RuleFamily::Rule3),
            other => Err(Error::InvalidConfig(format!(
                "unknown rule family {other:?} (expected rule1, rule2, or rule3)"
            ))),
        }
    }

    pub fn instantiate(&self, param: f64) -> Result<StoppingRule> {
        let rule = match self {
            RuleFamily::Rule1 => StoppingRule::Rule1 { threshold: param },
            RuleFamily::Rule2 => StoppingRule::Rule2 { threshold: param },
            RuleFamily::Rule3 => {
                if param < 1.0 || param.fract() != 0.0 || param.is_nan() {
                    return Err(Error::InvalidConfig(
                        "rule3 patience must be a positive integer".into(),
                    ));
                }
                StoppingRule::Rule3 {
                    patience: param as usize,
                }
            }
        };
        rule.validate()?;
        Ok(rule)
    }
}

/// One evaluation per parameter value, for accuracy-vs-fraction curves.
pub fn sweep(
    index: &InvertedIndex,
    vocabulary: &Vocabulary,
    ds: &Dataset,
    family: RuleFamily,
    params: &[f64],
    cfg: &EvalConfig,
) -> Result<Vec<EvalReport>> {
    if params.is_empty() {
        return Err(Error::InvalidConfig("no sweep parameters given".into()));
    }
    params
        .iter()
        .map(|&p| {
            let mut point_cfg = cfg.clone();
            point_cfg.rules = vec![family.instantiate(p)?];
            evaluate(index, vocabulary, ds, &point_cfg)
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct ProfileRow {
    pub query_image_id: u32,
    pub features: usize,
    /// Smallest prefix length after which the peak equals the exhaustive
    /// peak and never changes again.
    pub min_prefix: usize,
    pub min_fraction: f64,
}

#[derive(Debug, Clone)]
pub struct ProfileReport {
    pub rows: Vec<ProfileRow>,
    /// Queries bucketed by min_fraction decile: (0, 0.1], (0.1, 0.2], ...
    pub decile_counts: [usize; 10],
}

/// For each query under one fixed permutation seed, the minimal fraction of
/// features after which the histogram peak is final.
pub fn features_needed_profile(
    index: &InvertedIndex,
    vocabulary: &Vocabulary,
    ds: &Dataset,
    seed: u64,
) -> Result<ProfileReport> {
    let queries = ds.queries();
    if queries.is_empty() {
        return Err(Error::InvalidConfig("dataset has no query half".into()));
    }
    let rows: Vec<ProfileRow> = queries
        .par_iter()
        .map(|q| {
            let trace = run_query_trace(
                index,
                vocabulary,
                q,
                &StoppingRule::Never,
                1,
                seed,
                &QueryOptions::default(),
                &TraceOptions::default(),
            )?;
            let final_argmax = trace.steps.last().expect("non-empty query").argmax;
            let min_prefix = trace
                .steps
                .iter()
                .rposition(|s| s.argmax != final_argmax)
                .map_or(1, |i| i + 2);
            Ok(ProfileRow {
                query_image_id: q.image_id,
                features: trace.steps.len(),
                min_prefix,
                min_fraction: min_prefix as f64 / trace.steps.len() as f64,
            })
        })
        .collect::<Result<_>>()?;
    let mut decile_counts = [0usize; 10];
    for row in &rows {
        let bucket = ((row.min_fraction * 10.0).ceil() as usize).clamp(1, 10) - 1;
        decile_counts[bucket] += 1;
    }
    Ok(ProfileReport {
        rows,
        decile_counts,
    })
}

fn validate(cfg: &EvalConfig) -> Result<()> {
    if cfg.top_n.is_empty() || cfg.top_n.contains(&0) {
        return Err(Error::InvalidConfig(
            "top_n must be non-empty with entries >= 1".into(),
        ));
    }
    if cfg.rules.is_empty() {
        return Err(Error::InvalidConfig("no stopping rules configured".into()));
    }
    for rule in &cfg.rules {
        rule.validate()?;
    }
    if cfg.monte_carlo_runs == 0 {
        return Err(Error::InvalidConfig("monte_carlo_runs must be >= 1".into()));
    }
    if !(0.0..=1.0).contains(&cfg.precision_floor) {
        return Err(Error::InvalidConfig(
            "precision_floor must lie in [0, 1]".into(),
        ));
    }
    Ok(())
}

/// Report CSV: `rule,param,n,recall,precision,mean_fraction,run_count`.
pub fn write_report_csv<W: Write>(mut w: W, reports: &[&EvalReport]) -> std::io::Result<()> {
    writeln!(w, "rule,param,n,recall,precision,mean_fraction,run_count")?;
    for report in reports {
        for row in &report.rows {
            writeln!(
                w,
                "{},{},{},{},{},{},{}",
                row.rule,
                row.param,
                row.n,
                row.recall,
                row.precision,
                row.mean_fraction,
                report.run_count
            )?;
        }
    }
    Ok(())
}

/// Profile CSV: `query_id,features,min_prefix,min_fraction`.
pub fn write_profile_csv<W: Write>(mut w: W, report: &ProfileReport) -> std::io::Result<()> {
    writeln!(w, "query_id,features,min_prefix,min_fraction")?;
    for row in &report.rows {
        writeln!(
            w,
            "{},{},{},{}",
            row.query_image_id, row.features, row.min_prefix, row.min_fraction
        )?;
    }
    Ok(())
}

/// Decile histogram CSV: `decile_low,decile_high,queries`.
pub fn write_decile_csv<W: Write>(mut w: W, report: &ProfileReport) -> std::io::Result<()> {
    writeln!(w, "decile_low,decile_high,queries")?;
    for (i, count) in report.decile_counts.iter().enumerate() {
        writeln!(w, "{},{},{}", i as f64 / 10.0, (i + 1) as f64 / 10.0, count)?;
    }
    Ok(())
}
