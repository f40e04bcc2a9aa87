//! Stopping rules for the anytime query loop, plus a standalone
//! two-distribution race simulator for the concentration-bound rule.
//!
//! The rules inspect the score histogram after every quantized feature:
//!
//! - `Rule1` stops once `max(h) - mean(h) > T` (mean over all bins,
//!   zeros included);
//! - `Rule2` stops once `(max(h) - mean(h)) / mean(h) > T`, and never
//!   stops while the mean is zero;
//! - `Rule3` stops once the peak bin's identity has survived `patience`
//!   consecutive features;
//! - `Hoeffding` stops once the gap between the top two per-round bin
//!   means, rescaled so single-feature votes lie in [0, 1], exceeds
//!   `sqrt(2 ln(2/delta) / t)`;
//! - `Never` runs the query to exhaustion (plain bag-of-words).

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use crate::query::ScoreHistogram;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StoppingRule {
    Rule1 { threshold: f64 },
    Rule2 { threshold: f64 },
    Rule3 { patience: usize },
    Hoeffding { delta: f64 },
    Never,
}

impl StoppingRule {
    /// Checks parameter ranges: positive thresholds, patience >= 1,
    /// delta in (0, 1).
    pub fn validate(&self) -> Result<()> {
        let fail = |msg: &str| Err(Error::InvalidConfig(msg.into()));
        match *self {
            StoppingRule::Rule1 { threshold } | StoppingRule::Rule2 { threshold } => {
                if !threshold.is_finite() || threshold <= 0.0 {
                    return fail("threshold must be positive and finite");
                }
            }
            StoppingRule::Rule3 { patience } => {
                if patience == 0 {
                    return fail("patience must be at least 1");
                }
            }
            StoppingRule::Hoeffding { delta } => {
                if !(delta > 0.0 && delta < 1.0) {
                    return fail("delta must lie in (0, 1)");
                }
            }
            StoppingRule::Never => {}
        }
        Ok(())
    }

    /// Short family name, as used on the command line and in report CSVs.
    pub fn family_name(&self) -> &'static str {
        match self {
            StoppingRule::Rule1 { .. } => "rule1",
            StoppingRule::Rule2 { .. } => "rule2",
            StoppingRule::Rule3 { .. } => "rule3",
            StoppingRule::Hoeffding { .. } => "hoeffding",
            StoppingRule::Never => "never",
        }
    }

    /// Parameter rendered for reports; empty for `Never`.
    pub fn param_string(&self) -> String {
        match self {
            StoppingRule::Rule1 { threshold } | StoppingRule::Rule2 { threshold } => {
                format!("{threshold}")
            }
            StoppingRule::Rule3 { patience } => format!("{patience}"),
            StoppingRule::Hoeffding { delta } => format!("{delta}"),
            StoppingRule::Never => String::new(),
        }
    }
}

/// Per-query state the rules need beyond the histogram itself.
#[derive(Debug, Clone, Default)]
pub struct StopState {
    /// Features quantized so far (loop iterations).
    pub features_processed: usize,
    /// Peak bin after the latest feature; `None` before the first.
    pub current_peak_bin: Option<usize>,
    /// Consecutive features after which the peak identity was unchanged.
    pub peak_unchanged_for: usize,
}

impl StopState {
    /// Advances the state after one feature has been processed.
    pub fn observe(&mut self, peak_bin: usize) {
        self.features_processed += 1;
        if self.current_peak_bin == Some(peak_bin) {
            self.peak_unchanged_for += 1;
        } else {
            self.current_peak_bin = Some(peak_bin);
            self.peak_unchanged_for = 0;
        }
    }
}

/// The stopping decision threshold of the concentration bound:
/// `sqrt(2 ln(2/delta) / t)`.
pub fn hoeffding_threshold(delta: f64, t: usize) -> f64 {
    ((2.0 * (2.0 / delta).ln().max(0.0)) / t as f64).sqrt()
}

/// Evaluates a stopping rule against the current histogram and state.
pub fn should_stop(rule: &StoppingRule, h: &ScoreHistogram, state: &StopState) -> Result<bool> {
    if let StoppingRule::Never = rule {
        return Ok(false);
    }
    if h.len() < 2 {
        return Err(Error::InconsistentState(
            "histogram needs at least two bins".into(),
        ));
    }
    if state.peak_unchanged_for > state.features_processed {
        return Err(Error::InconsistentState(
            "peak_unchanged_for exceeds features_processed".into(),
        ));
    }
    if let Some(peak) = state.current_peak_bin {
        if peak != h.argmax() {
            return Err(Error::InconsistentState(format!(
                "state peak {peak} disagrees with histogram argmax {}",
                h.argmax()
            )));
        }
    }
    Ok(match *rule {
        StoppingRule::Rule1 { threshold } => h.max() - h.mean() > threshold,
        StoppingRule::Rule2 { threshold } => {
            let mean = h.mean();
            mean > 0.0 && (h.max() - mean) / mean > threshold
        }
        StoppingRule::Rule3 { patience } => state.peak_unchanged_for >= patience,
        StoppingRule::Hoeffding { delta } => {
            let t = state.features_processed;
            if t == 0 {
                false
            } else {
                let scale = h.vote_scale();
                let gap = if scale > 0.0 {
                    (h.max() - h.second_max()) / scale / t as f64
                } else {
                    0.0
                };
                gap >= hoeffding_threshold(delta, t)
            }
        }
        StoppingRule::Never => false,
    })
}

/// Outcome of the two-distribution stopping simulation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RaceReport {
    /// Fraction of trials whose declared winner had the lower true mean.
    pub error_rate: f64,
    /// Mean number of paired samples drawn before stopping.
    pub mean_stop_time: f64,
}

/// Cap on rounds per trial; generous next to the bound's own stop time.
const MAX_RACE_ROUNDS: usize = 10_000_000;

/// Simulates the sequential identification of the higher-mean Bernoulli
/// distribution. Each round draws one sample from both distributions and
/// stops once `|empirical gap| >= sqrt(2 ln(2/delta) / t)`; the winner is
/// the distribution with the larger empirical mean at that point.
pub fn race_simulate(
    mu1: f64,
    mu2: f64,
    delta: f64,
    trials: usize,
    seed: u64,
) -> Result<RaceReport> {
    if !(0.0..=1.0).contains(&mu1) || !(0.0..=1.0).contains(&mu2) {
        return Err(Error::InvalidConfig("means must lie in [0, 1]".into()));
    }
    if mu1 == mu2 {
        return Err(Error::InvalidConfig("means must differ".into()));
    }
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::InvalidConfig("delta must lie in (0, 1)".into()));
    }
    if trials == 0 {
        return Err(Error::InvalidConfig("trials must be at least 1".into()));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut errors = 0usize;
    let mut total_time = 0f64;
    for _ in 0..trials {
        let mut sum1 = 0f64;
        let mut sum2 = 0f64;
        let mut t = 0usize;
        let winner_is_first = loop {
            t += 1;
            sum1 += f64::from(rng.random::<f64>() < mu1);
            sum2 += f64::from(rng.random::<f64>() < mu2);
            let gap = (sum1 - sum2) / t as f64;
            if gap.abs() >= hoeffding_threshold(delta, t) {
                break gap > 0.0;
            }
            if t >= MAX_RACE_ROUNDS {
                break sum1 >= sum2;
            }
        };
        let correct = winner_is_first == (mu1 > mu2);
        if !correct {
            errors += 1;
        }
        total_time += t as f64;
    }
    Ok(RaceReport {
        error_rate: errors as f64 / trials as f64,
        mean_stop_time: total_time / trials as f64,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn histogram(bins: &[f64]) -> ScoreHistogram {
        let mut h = ScoreHistogram::new(bins.len(), 1.0);
        for (i, &v) in bins.iter().enumerate() {
            if v != 0.0 {
                h.add(i, v);
            }
        }
        h
    }

    fn state_for(h: &ScoreHistogram, t: usize) -> StopState {
        StopState {
            features_processed: t,
            current_peak_bin: Some(h.argmax()),
            peak_unchanged_for: 0,
        }
    }

    #[test]
    fn rule1_direct_arithmetic() {
        let h = histogram(&[0.5, 0.1, 0.1, 0.1]);
        let state = state_for(&h, 4);
        // max 0.5, mean 0.2, gap 0.3
        assert!(should_stop(&StoppingRule::Rule1 { threshold: 0.25 }, &h, &state).unwrap());
        assert!(!should_stop(&StoppingRule::Rule1 { threshold: 0.35 }, &h, &state).unwrap());
    }

    #[test]
    fn rule2_zero_mean_never_stops() {
        let h = histogram(&[0.0, 0.0, 0.0]);
        let state = state_for(&h, 0);
        assert!(!should_stop(&StoppingRule::Rule2 { threshold: 0.01 }, &h, &state).unwrap());
    }

    #[test]
    fn rule2_relative_gap() {
        let h = histogram(&[0.6, 0.1, 0.1, 0.2]);
        let state = state_for(&h, 4);
        // mean 0.25, (0.6 - 0.25) / 0.25 = 1.4
        assert!(should_stop(&StoppingRule::Rule2 { threshold: 1.3 }, &h, &state).unwrap());
        assert!(!should_stop(&StoppingRule::Rule2 { threshold: 1.5 }, &h, &state).unwrap());
    }

    #[test]
    fn rule1_scales_with_bins_rule2_does_not() {
        let base = [0.5, 0.1, 0.1, 0.1];
        let scaled: Vec<f64> = base.iter().map(|v| v * 10.0).collect();
        let (h1, h2) = (histogram(&base), histogram(&scaled));
        let (s1, s2) = (state_for(&h1, 4), state_for(&h2, 4));
        let rule1 = StoppingRule::Rule1 { threshold: 1.0 };
        assert!(!should_stop(&rule1, &h1, &s1).unwrap());
        assert!(should_stop(&rule1, &h2, &s2).unwrap());
        let rule2 = StoppingRule::Rule2 { threshold: 1.4 };
        assert_eq!(
            should_stop(&rule2, &h1, &s1).unwrap(),
            should_stop(&rule2, &h2, &s2).unwrap()
        );
    }

    #[test]
    fn rule3_depends_only_on_peak_identity() {
        let h = histogram(&[9.0, 1.0]);
        let mut state = state_for(&h, 10);
        state.peak_unchanged_for = 4;
        assert!(!should_stop(&StoppingRule::Rule3 { patience: 5 }, &h, &state).unwrap());
        state.peak_unchanged_for = 5;
        assert!(should_stop(&StoppingRule::Rule3 { patience: 5 }, &h, &state).unwrap());
        // Magnitudes are irrelevant.
        let tiny = histogram(&[9e-9, 1e-9]);
        let mut tiny_state = state_for(&tiny, 10);
        tiny_state.peak_unchanged_for = 5;
        assert!(should_stop(&StoppingRule::Rule3 { patience: 5 }, &tiny, &tiny_state).unwrap());
    }

    #[test]
    fn hoeffding_threshold_matches_the_bound() {
        // sqrt(2 ln(2/0.05) / 1000), evaluated independently.
        let expected = (2.0 * (2.0f64 / 0.05).ln() / 1000.0).sqrt();
        assert!((hoeffding_threshold(0.05, 1000) - expected).abs() < 1e-15);
    }

    #[test]
    fn hoeffding_delta_near_two_stops_on_any_positive_gap() {
        // ln(2/delta) -> 0 as delta -> 2, so the threshold collapses to 0
        // and any positive gap fires the rule.
        assert_eq!(hoeffding_threshold(2.0, 5), 0.0);
        let h = histogram(&[1e-6, 0.0, 0.0]);
        let state = state_for(&h, 1);
        let rule = StoppingRule::Hoeffding {
            delta: 2.0 - 1e-13,
        };
        assert!(should_stop(&rule, &h, &state).unwrap());
    }

    #[test]
    fn hoeffding_uses_the_vote_scale() {
        let mut h = ScoreHistogram::new(3, 10.0);
        h.add(0, 10.0); // one full-scale vote
        let state = state_for(&h, 1);
        // Scaled gap is 1.0 per round; threshold at t=1 with delta=0.5 is
        // sqrt(2 ln 4) ~ 1.665, so no stop yet.
        assert!(!should_stop(&StoppingRule::Hoeffding { delta: 0.5 }, &h, &state).unwrap());
    }

    #[test]
    fn inconsistent_state_is_reported() {
        let h = histogram(&[1.0, 0.0]);
        let state = StopState {
            features_processed: 1,
            current_peak_bin: Some(1),
            peak_unchanged_for: 0,
        };
        assert!(matches!(
            should_stop(&StoppingRule::Rule1 { threshold: 0.1 }, &h, &state),
            Err(Error::InconsistentState(_))
        ));
        let bad = StopState {
            features_processed: 1,
            current_peak_bin: Some(0),
            peak_unchanged_for: 5,
        };
        assert!(matches!(
            should_stop(&StoppingRule::Rule3 { patience: 1 }, &h, &bad),
            Err(Error::InconsistentState(_))
        ));
    }

    #[test]
    fn single_bin_histogram_is_rejected_except_for_never() {
        let h = histogram(&[1.0]);
        let state = state_for(&h, 1);
        assert!(should_stop(&StoppingRule::Rule1 { threshold: 0.1 }, &h, &state).is_err());
        assert!(!should_stop(&StoppingRule::Never, &h, &state).unwrap());
    }

    #[test]
    fn race_with_deterministic_distributions_never_errs() {
        let report = race_simulate(1.0, 0.0, 0.05, 50, 1).unwrap();
        assert_eq!(report.error_rate, 0.0);
        // Stops as soon as sqrt(2 ln 40 / t) <= 1, i.e. t = ceil(2 ln 40).
        assert_eq!(report.mean_stop_time, (2.0 * 40f64.ln()).ceil());
    }

    #[test]
    fn race_error_rate_is_within_the_bound() {
        let report = race_simulate(0.6, 0.4, 0.05, 1000, 7).unwrap();
        assert!(
            report.error_rate <= 0.05,
            "error rate {} above delta",
            report.error_rate
        );
    }

    #[test]
    fn race_error_bound_holds_across_seeds_at_three_sigma() {
        let delta = 0.1;
        let trials = 400;
        let slack = 3.0 * (delta * (1.0 - delta) / trials as f64).sqrt();
        for seed in 0..5 {
            let report = race_simulate(0.55, 0.45, delta, trials, seed).unwrap();
            assert!(
                report.error_rate <= delta + slack,
                "seed {seed}: error rate {}",
                report.error_rate
            );
        }
    }

    #[test]
    fn smaller_gaps_take_longer() {
        let small = race_simulate(0.51, 0.49, 0.05, 60, 3).unwrap();
        let large = race_simulate(0.9, 0.1, 0.05, 60, 3).unwrap();
        assert!(
            small.mean_stop_time > large.mean_stop_time,
            "small gap {} vs large gap {}",
            small.mean_stop_time,
            large.mean_stop_time
        );
    }

    #[test]
    fn race_validates_inputs() {
        assert!(race_simulate(0.5, 0.5, 0.05, 10, 0).is_err());
        assert!(race_simulate(1.5, 0.5, 0.05, 10, 0).is_err());
        assert!(race_simulate(0.6, 0.4, 0.0, 10, 0).is_err());
        assert!(race_simulate(0.6, 0.4, 1.0, 10, 0).is_err());
        assert!(race_simulate(0.6, 0.4, 0.05, 0, 0).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        /// Rule1 monotonicity: stopping at T implies stopping at any T' < T.
        #[test]
        fn rule1_monotone_in_threshold(
            bins in proptest::collection::vec(0.0f64..10.0, 2..12),
            t in 0.01f64..5.0,
            shrink in 0.1f64..0.99,
        ) {
            let h = histogram(&bins);
            let state = state_for(&h, bins.len());
            let at_t = should_stop(&StoppingRule::Rule1 { threshold: t }, &h, &state).unwrap();
            let smaller = t * shrink;
            let at_smaller =
                should_stop(&StoppingRule::Rule1 { threshold: smaller }, &h, &state).unwrap();
            prop_assert!(!at_t || at_smaller);
        }

        /// Rule2's decision is invariant under positive scaling of the bins.
        #[test]
        fn rule2_scale_invariant(
            bins in proptest::collection::vec(0.0f64..10.0, 2..12),
            t in 0.01f64..5.0,
            scale in 0.001f64..1000.0,
        ) {
            let h1 = histogram(&bins);
            // Keep the threshold away from the exact ratio, where the last
            // ulp of the rescaled arithmetic could legitimately flip the
            // comparison.
            let mean = h1.mean();
            if mean > 0.0 {
                let ratio = (h1.max() - mean) / mean;
                prop_assume!((ratio - t).abs() > 1e-9 * ratio.max(1.0));
            }
            let scaled: Vec<f64> = bins.iter().map(|v| v * scale).collect();
            let h2 = histogram(&scaled);
            let (s1, s2) = (state_for(&h1, bins.len()), state_for(&h2, bins.len()));
            let rule = StoppingRule::Rule2 { threshold: t };
            prop_assert_eq!(
                should_stop(&rule, &h1, &s1).unwrap(),
                should_stop(&rule, &h2, &s2).unwrap()
            );
        }
    }
}
