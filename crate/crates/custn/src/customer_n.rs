//! Per-customer depth cutoffs.
//!
//! A customer's cutoff is the median of their per-session max impression
//! ranks over the history window. Customers with too few sessions get a
//! configured global fallback instead, and are flagged so downstream
//! consumers can exclude them.
//!
//! Even-length medians support three conventions: `lower` and `upper`
//! take the respective middle element, `interpolate_ceil` takes the
//! ceiling of the midpoint so the result stays a usable integer rank.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::event::{CustomerProfile, Session};

/// Segment label for customers absent from the segment map.
pub const UNSEGMENTED: &str = "__unsegmented__";

pub const DEFAULT_MIN_SESSIONS: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MedianMode {
    Lower,
    Upper,
    #[default]
    InterpolateCeil,
}

impl MedianMode {
    pub const ALL: [MedianMode; 3] = [
        MedianMode::Lower,
        MedianMode::Upper,
        MedianMode::InterpolateCeil,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            MedianMode::Lower => "lower",
            MedianMode::Upper => "upper",
            MedianMode::InterpolateCeil => "interpolate_ceil",
        }
    }
}

impl fmt::Display for MedianMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for MedianMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "lower" => Ok(MedianMode::Lower),
            "upper" => Ok(MedianMode::Upper),
            "interpolate_ceil" | "interpolate-ceil" => Ok(MedianMode::InterpolateCeil),
            other => Err(format!("unknown median mode `{other}`")),
        }
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum CustomerNError {
    #[error("median of an empty list is undefined")]
    EmptyInput,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CustomerNConfig {
    /// Minimum session count for a personalized cutoff.
    pub min_sessions: usize,
    /// Cutoff assigned when a customer is below `min_sessions`.
    pub fallback_n: u32,
    pub median_mode: MedianMode,
}

impl Default for CustomerNConfig {
    fn default() -> Self {
        CustomerNConfig {
            min_sessions: DEFAULT_MIN_SESSIONS,
            fallback_n: 10,
            median_mode: MedianMode::default(),
        }
    }
}

/// Median of a non-empty list of ranks. The input need not be sorted.
pub fn median_rank(values: &[u32], mode: MedianMode) -> Result<u32, CustomerNError> {
    if values.is_empty() {
        return Err(CustomerNError::EmptyInput);
    }
    let mut sorted = values.to_vec();
    sorted.sort_unstable();
    let p = sorted.len();
    if p % 2 == 1 {
        return Ok(sorted[p / 2]);
    }
    let a = sorted[p / 2 - 1];
    let b = sorted[p / 2];
    Ok(match mode {
        MedianMode::Lower => a,
        MedianMode::Upper => b,
        // ceil((a + b) / 2), kept in integer arithmetic.
        MedianMode::InterpolateCeil => ((u64::from(a) + u64::from(b) + 1) / 2) as u32,
    })
}

fn population_stats(values: &[u32]) -> (f64, f64, f64) {
    let p = values.len() as f64;
    let mean = values.iter().map(|&v| f64::from(v)).sum::<f64>() / p;
    let var = values
        .iter()
        .map(|&v| {
            let d = f64::from(v) - mean;
            d * d
        })
        .sum::<f64>()
        / p;
    let stddev = var.sqrt();
    let cv = if mean > 0.0 { stddev / mean } else { 0.0 };
    (mean, stddev, cv)
}

/// Builds one profile per customer present in `history`.
///
/// Sessions are taken in chronological order per customer. Output and the
/// stats inside it are invariant to the order of `history`.
pub fn compute_profiles(
    history: &[Session],
    config: &CustomerNConfig,
) -> BTreeMap<String, CustomerProfile> {
    let mut per_customer: HashMap<&str, Vec<&Session>> = HashMap::new();
    for s in history {
        per_customer.entry(&s.customer_id).or_default().push(s);
    }

    let mut profiles = BTreeMap::new();
    for (customer_id, mut sessions) in per_customer {
        sessions.sort_unstable_by(|a, b| {
            (a.start_ts, a.session_key.as_str()).cmp(&(b.start_ts, b.session_key.as_str()))
        });
        let max_ranks: Vec<u32> = sessions.iter().map(|s| s.max_rank).collect();
        let session_count = max_ranks.len();
        let (mean, stddev, cv) = population_stats(&max_ranks);
        let fallback_used = session_count < config.min_sessions;
        let customer_n = if fallback_used {
            config.fallback_n
        } else {
            median_rank(&max_ranks, config.median_mode).expect("session_count >= 1")
        };
        profiles.insert(
            customer_id.to_string(),
            CustomerProfile {
                customer_id: customer_id.to_string(),
                customer_n,
                session_count,
                session_max_ranks: max_ranks,
                rank_mean: mean,
                rank_stddev: stddev,
                rank_cv: cv,
                fallback_used,
            },
        );
    }
    profiles
}

/// Pools session max ranks by segment and takes one median per segment.
/// Customers missing from the segment map pool under [`UNSEGMENTED`].
pub fn compute_segment_n(
    history: &[Session],
    segments: &BTreeMap<String, String>,
    mode: MedianMode,
) -> BTreeMap<String, u32> {
    let mut pools: BTreeMap<&str, Vec<u32>> = BTreeMap::new();
    for s in history {
        let label = segments
            .get(&s.customer_id)
            .map(|l| l.as_str())
            .unwrap_or(UNSEGMENTED);
        pools.entry(label).or_default().push(s.max_rank);
    }
    pools
        .into_iter()
        .map(|(label, ranks)| {
            let n = median_rank(&ranks, mode).expect("pool is non-empty");
            (label.to_string(), n)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn session(customer: &str, key: &str, start: i64, max_rank: u32) -> Session {
        Session {
            customer_id: customer.to_string(),
            session_key: key.to_string(),
            start_ts: start,
            end_ts: start + 1000,
            max_rank,
        }
    }

    #[test]
    fn odd_length_median_ignores_mode() {
        for mode in MedianMode::ALL {
            assert_eq!(median_rank(&[3, 5, 9], mode).unwrap(), 5);
            assert_eq!(median_rank(&[9, 3, 5], mode).unwrap(), 5);
            assert_eq!(median_rank(&[7], mode).unwrap(), 7);
        }
    }

    #[test]
    fn even_length_median_respects_mode() {
        assert_eq!(median_rank(&[3, 6], MedianMode::InterpolateCeil).unwrap(), 5);
        assert_eq!(median_rank(&[3, 6], MedianMode::Lower).unwrap(), 3);
        assert_eq!(median_rank(&[3, 6], MedianMode::Upper).unwrap(), 6);
        // Even midpoint: no rounding needed.
        assert_eq!(median_rank(&[4, 10], MedianMode::InterpolateCeil).unwrap(), 7);
    }

    #[test]
    fn empty_input_is_an_error() {
        assert_eq!(
            median_rank(&[], MedianMode::Lower).unwrap_err(),
            CustomerNError::EmptyInput
        );
    }

    #[test]
    fn interpolate_ceil_never_overflows() {
        assert_eq!(
            median_rank(&[u32::MAX, u32::MAX], MedianMode::InterpolateCeil).unwrap(),
            u32::MAX
        );
    }

    #[test]
    fn four_session_profile_matches_hand_computation() {
        let history = vec![
            session("c1", "s1", 100, 2),
            session("c1", "s2", 200, 8),
            session("c1", "s3", 300, 14),
            session("c1", "s4", 400, 20),
        ];
        let profiles = compute_profiles(&history, &CustomerNConfig::default());
        let p = &profiles["c1"];
        assert_eq!(p.customer_n, 11);
        assert_eq!(p.session_count, 4);
        assert_eq!(p.session_max_ranks, vec![2, 8, 14, 20]);
        assert_eq!(p.rank_mean, 11.0);
        // Population stddev of [2, 8, 14, 20] is sqrt(45).
        assert!((p.rank_stddev - 45f64.sqrt()).abs() < 1e-12);
        assert!(!p.fallback_used);
    }

    #[test]
    fn sparse_customer_gets_fallback() {
        let history = vec![session("c1", "s1", 100, 7)];
        let config = CustomerNConfig {
            fallback_n: 10,
            ..Default::default()
        };
        let profiles = compute_profiles(&history, &config);
        let p = &profiles["c1"];
        assert_eq!(p.customer_n, 10);
        assert!(p.fallback_used);
        assert_eq!(p.session_count, 1);
        assert_eq!(p.rank_stddev, 0.0);
        assert_eq!(p.rank_cv, 0.0);
    }

    #[test]
    fn constant_depth_customer_has_zero_spread() {
        let history = vec![
            session("c1", "s1", 100, 5),
            session("c1", "s2", 200, 5),
            session("c1", "s3", 300, 5),
        ];
        let p = &compute_profiles(&history, &CustomerNConfig::default())["c1"];
        assert_eq!(p.customer_n, 5);
        assert_eq!(p.rank_mean, 5.0);
        assert_eq!(p.rank_stddev, 0.0);
        assert_eq!(p.rank_cv, 0.0);
        assert!(!p.fallback_used);
    }

    #[test]
    fn min_sessions_one_keeps_single_session_median() {
        let history = vec![session("c1", "s1", 100, 42)];
        let config = CustomerNConfig {
            min_sessions: 1,
            ..Default::default()
        };
        let p = &compute_profiles(&history, &config)["c1"];
        assert_eq!(p.customer_n, 42);
        assert!(!p.fallback_used);
    }

    #[test]
    fn profiles_are_independent_across_customers() {
        let mut history = vec![
            session("a", "s1", 100, 3),
            session("a", "s2", 200, 9),
            session("a", "s3", 300, 6),
        ];
        let base = compute_profiles(&history, &CustomerNConfig::default());
        history.push(session("b", "s1", 100, 999));
        history.push(session("b", "s2", 200, 1));
        let with_b = compute_profiles(&history, &CustomerNConfig::default());
        assert_eq!(base["a"], with_b["a"]);
        assert_eq!(with_b.len(), 2);
    }

    #[test]
    fn session_max_ranks_follow_chronological_order() {
        let history = vec![
            session("c1", "s3", 300, 14),
            session("c1", "s1", 100, 2),
            session("c1", "s2", 200, 8),
        ];
        let p = &compute_profiles(&history, &CustomerNConfig::default())["c1"];
        assert_eq!(p.session_max_ranks, vec![2, 8, 14]);
    }

    #[test]
    fn segment_medians_pool_across_customers() {
        // Segment A has two single-session customers at depths 2 and 4,
        // segment B has three at 10, 20, 30.
        let history = vec![
            session("a1", "s1", 100, 2),
            session("a2", "s1", 100, 4),
            session("b1", "s1", 100, 10),
            session("b2", "s1", 100, 20),
            session("b3", "s1", 100, 30),
        ];
        let segments: BTreeMap<String, String> = [
            ("a1".to_string(), "A".to_string()),
            ("a2".to_string(), "A".to_string()),
            ("b1".to_string(), "B".to_string()),
            ("b2".to_string(), "B".to_string()),
            ("b3".to_string(), "B".to_string()),
        ]
        .into();
        let n = compute_segment_n(&history, &segments, MedianMode::InterpolateCeil);
        assert_eq!(n["A"], 3);
        assert_eq!(n["B"], 20);
        assert_eq!(n.len(), 2);
    }

    #[test]
    fn unmapped_customers_pool_under_the_unsegmented_label() {
        let history = vec![
            session("known", "s1", 100, 6),
            session("stray", "s1", 100, 11),
            session("stray", "s2", 200, 13),
        ];
        let segments: BTreeMap<String, String> =
            [("known".to_string(), "A".to_string())].into();
        let n = compute_segment_n(&history, &segments, MedianMode::InterpolateCeil);
        assert_eq!(n["A"], 6);
        assert_eq!(n[UNSEGMENTED], 12);
    }

    #[test]
    fn single_segment_reduces_to_pooled_median() {
        let history = vec![
            session("a", "s1", 100, 1),
            session("b", "s1", 100, 3),
            session("c", "s1", 100, 5),
        ];
        let n = compute_segment_n(&history, &BTreeMap::new(), MedianMode::InterpolateCeil);
        assert_eq!(n.len(), 1);
        assert_eq!(n[UNSEGMENTED], 3);
    }

    #[test]
    fn median_mode_parses_cli_spellings() {
        assert_eq!(
            "interpolate-ceil".parse::<MedianMode>().unwrap(),
            MedianMode::InterpolateCeil
        );
        assert_eq!("lower".parse::<MedianMode>().unwrap(), MedianMode::Lower);
        assert!("median".parse::<MedianMode>().is_err());
    }
}

#[cfg(test)]
mod props {
    use super::*;
    use proptest::prelude::*;

    // Independent oracle: order statistics through f64 arithmetic.
    fn oracle_median(values: &[u32], mode: MedianMode) -> u32 {
        let mut v = values.to_vec();
        v.sort();
        let p = v.len();
        if p % 2 == 1 {
            v[(p + 1) / 2 - 1]
        } else {
            let a = v[p / 2 - 1];
            let b = v[p / 2];
            match mode {
                MedianMode::Lower => a,
                MedianMode::Upper => b,
                MedianMode::InterpolateCeil => {
                    ((f64::from(a) + f64::from(b)) / 2.0).ceil() as u32
                }
            }
        }
    }

    proptest! {
        #[test]
        fn median_matches_oracle(values in prop::collection::vec(1u32..1_000_000, 1..99)) {
            for mode in MedianMode::ALL {
                prop_assert_eq!(median_rank(&values, mode).unwrap(), oracle_median(&values, mode));
            }
        }

        #[test]
        fn median_is_permutation_invariant(
            values in prop::collection::vec(1u32..10_000, 1..40),
            seed in any::<u64>(),
        ) {
            use rand::seq::SliceRandom;
            use rand::SeedableRng;
            let mut shuffled = values.clone();
            let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(seed);
            shuffled.shuffle(&mut rng);
            for mode in MedianMode::ALL {
                prop_assert_eq!(
                    median_rank(&values, mode).unwrap(),
                    median_rank(&shuffled, mode).unwrap()
                );
            }
        }

        #[test]
        fn median_stays_within_bounds(values in prop::collection::vec(1u32..1_000_000, 1..80)) {
            let lo = *values.iter().min().unwrap();
            let hi = *values.iter().max().unwrap();
            for mode in MedianMode::ALL {
                let m = median_rank(&values, mode).unwrap();
                prop_assert!(m >= lo && m <= hi);
            }
        }

        #[test]
        fn appending_the_median_never_moves_it(
            values in prop::collection::vec(1u32..100_000, 1..60),
        ) {
            for mode in MedianMode::ALL {
                let m = median_rank(&values, mode).unwrap();
                let mut extended = values.clone();
                extended.push(m);
                prop_assert_eq!(median_rank(&extended, mode).unwrap(), m);
            }
        }

        #[test]
        fn cv_is_scale_invariant(
            values in prop::collection::vec(1u32..100_000, 1..40),
        ) {
            let base: Vec<Session> = values.iter().enumerate().map(|(i, &r)| Session {
                customer_id: "c".to_string(),
                session_key: format!("s{i}"),
                start_ts: i as i64,
                end_ts: i as i64,
                max_rank: r,
            }).collect();
            let scaled: Vec<Session> = base.iter().map(|s| Session {
                max_rank: s.max_rank * 10,
                ..s.clone()
            }).collect();
            let config = CustomerNConfig { min_sessions: 1, ..Default::default() };
            let a = &compute_profiles(&base, &config)["c"];
            let b = &compute_profiles(&scaled, &config)["c"];
            prop_assert!((a.rank_cv - b.rank_cv).abs() < 1e-12);
        }

        #[test]
        fn fallback_flag_tracks_session_count(
            counts in prop::collection::vec(1usize..6, 1..8),
            min_sessions in 1usize..5,
        ) {
            let mut history = Vec::new();
            for (ci, &n) in counts.iter().enumerate() {
                for s in 0..n {
                    history.push(Session {
                        customer_id: format!("c{ci}"),
                        session_key: format!("s{s}"),
                        start_ts: s as i64 * 10_000_000,
                        end_ts: s as i64 * 10_000_000,
                        max_rank: (s as u32 % 7) + 1,
                    });
                }
            }
            let config = CustomerNConfig { min_sessions, ..Default::default() };
            let profiles = compute_profiles(&history, &config);
            for (ci, &n) in counts.iter().enumerate() {
                let p = &profiles[&format!("c{ci}")];
                prop_assert_eq!(p.session_count, n);
                prop_assert_eq!(p.fallback_used, n < min_sessions);
            }
        }
    }
}
