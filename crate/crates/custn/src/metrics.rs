//! Ranking metrics at fixed or per-customer cutoffs.
//!
//! All metrics live in [0, 1] and use the effective cutoff
//! `k = min(n, list length)`. Precision deliberately divides by the
//! requested `n`, not `k`: a short list is penalized, not forgiven.
//!
//! NDCG uses binary gains with a `1/log2(pos+1)` discount and normalizes
//! by the ideal DCG over the whole relevant set. That normalization keeps
//! NDCG non-decreasing in `n` for a fixed list and relevance set, which
//! the rest of the artifact relies on; the common alternative of
//! truncating the ideal at the cutoff does not have that property.

use std::collections::BTreeMap;
use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::event::{CustomerProfile, RankedList, RelevanceSet};
use crate::customer_n::UNSEGMENTED;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricKind {
    Recall,
    Precision,
    HitRate,
    Ndcg,
    Mrr,
}

impl MetricKind {
    pub const ALL: [MetricKind; 5] = [
        MetricKind::Recall,
        MetricKind::Precision,
        MetricKind::HitRate,
        MetricKind::Ndcg,
        MetricKind::Mrr,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            MetricKind::Recall => "recall",
            MetricKind::Precision => "precision",
            MetricKind::HitRate => "hit_rate",
            MetricKind::Ndcg => "ndcg",
            MetricKind::Mrr => "mrr",
        }
    }
}

impl fmt::Display for MetricKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for MetricKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "recall" => Ok(MetricKind::Recall),
            "precision" => Ok(MetricKind::Precision),
            "hit_rate" | "hit-rate" => Ok(MetricKind::HitRate),
            "ndcg" => Ok(MetricKind::Ndcg),
            "mrr" => Ok(MetricKind::Mrr),
            other => Err(format!("unknown metric `{other}`")),
        }
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum MetricError {
    #[error("cutoff must be >= 1")]
    NonPositiveCutoff,
    #[error("relevance set for customer `{customer_id}` is empty")]
    EmptyRelevanceSet { customer_id: String },
    #[error("no evaluable customers (lists, relevance, and profiles do not overlap)")]
    EmptyPopulation,
    #[error("customer `{customer_id}` has no profile and fallback inclusion is disabled")]
    MissingProfile { customer_id: String },
}

/// One evaluated customer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerCustomerResult {
    pub customer_id: String,
    pub metric: MetricKind,
    /// The requested cutoff (the customer's N in personalized mode), even
    /// when the list was shorter.
    pub cutoff_used: u32,
    pub value: f64,
    pub relevant_count: usize,
}

/// How the per-customer cutoff is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReportMode {
    StaticN,
    CustomerN,
    SegmentN,
}

impl fmt::Display for ReportMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ReportMode::StaticN => "static_n",
            ReportMode::CustomerN => "customer_n",
            ReportMode::SegmentN => "segment_n",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateReport {
    pub metric: MetricKind,
    pub mode: ReportMode,
    /// Unweighted arithmetic mean over `per_customer`.
    pub mean_value: f64,
    pub customer_count: usize,
    /// Sorted by customer id.
    pub per_customer: Vec<PerCustomerResult>,
}

/// Cutoff source for [`evaluate`].
#[derive(Debug, Clone, Copy)]
pub enum EvalCutoff<'a> {
    StaticN(u32),
    CustomerN(&'a BTreeMap<String, CustomerProfile>),
    SegmentN {
        segments: &'a BTreeMap<String, String>,
        segment_n: &'a BTreeMap<String, u32>,
    },
}

impl EvalCutoff<'_> {
    pub fn mode(&self) -> ReportMode {
        match self {
            EvalCutoff::StaticN(_) => ReportMode::StaticN,
            EvalCutoff::CustomerN(_) => ReportMode::CustomerN,
            EvalCutoff::SegmentN { .. } => ReportMode::SegmentN,
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct EvaluateOptions {
    /// Include customers whose profile fell back to the global N. When
    /// disabled, fallback profiles are skipped and a customer with no
    /// profile at all is an error instead of a silent drop.
    pub include_fallback: bool,
    /// Score customers with empty relevance sets as 0 instead of
    /// excluding them.
    pub count_empty_relevance_as_zero: bool,
}

impl Default for EvaluateOptions {
    fn default() -> Self {
        EvaluateOptions {
            include_fallback: true,
            count_empty_relevance_as_zero: false,
        }
    }
}

/// One metric for one customer at cutoff `n`.
pub fn metric_at(
    kind: MetricKind,
    ranked: &RankedList,
    relevant: &RelevanceSet,
    n: u32,
) -> Result<f64, MetricError> {
    if n == 0 {
        return Err(MetricError::NonPositiveCutoff);
    }
    if relevant.relevant_items.is_empty() {
        return Err(MetricError::EmptyRelevanceSet {
            customer_id: relevant.customer_id.clone(),
        });
    }
    let rel: HashSet<&str> = relevant.relevant_items.iter().map(|s| s.as_str()).collect();
    let k = (n as usize).min(ranked.items.len());
    let top = &ranked.items[..k];
    let hits = top.iter().filter(|item| rel.contains(item.as_str())).count();

    let value = match kind {
        MetricKind::Recall => hits as f64 / rel.len() as f64,
        MetricKind::Precision => hits as f64 / f64::from(n),
        MetricKind::HitRate => {
            if hits > 0 {
                1.0
            } else {
                0.0
            }
        }
        MetricKind::Mrr => top
            .iter()
            .position(|item| rel.contains(item.as_str()))
            .map(|pos| 1.0 / (pos as f64 + 1.0))
            .unwrap_or(0.0),
        MetricKind::Ndcg => {
            let mut dcg = 0.0;
            for (pos, item) in top.iter().enumerate() {
                if rel.contains(item.as_str()) {
                    dcg += 1.0 / ((pos as f64 + 2.0).log2());
                }
            }
            let mut idcg = 0.0;
            for pos in 0..rel.len() {
                idcg += 1.0 / ((pos as f64 + 2.0).log2());
            }
            dcg / idcg
        }
    };
    debug_assert!((0.0..=1.0 + 1e-12).contains(&value));
    Ok(value)
}

/// Evaluates one metric over the population shared by `lists` and
/// `relevance` (and the cutoff source, in personalized modes).
///
/// Per-customer results are ordered by customer id and the mean is the
/// plain average over them, so the report is independent of input
/// iteration order.
pub fn evaluate(
    kind: MetricKind,
    lists: &BTreeMap<String, RankedList>,
    relevance: &BTreeMap<String, RelevanceSet>,
    cutoff: EvalCutoff<'_>,
    opts: EvaluateOptions,
) -> Result<AggregateReport, MetricError> {
    let mut per_customer = Vec::new();
    for (customer_id, list) in lists {
        let Some(rel) = relevance.get(customer_id) else {
            continue;
        };
        let n = match cutoff {
            EvalCutoff::StaticN(n) => {
                if n == 0 {
                    return Err(MetricError::NonPositiveCutoff);
                }
                n
            }
            EvalCutoff::CustomerN(profiles) => match profiles.get(customer_id) {
                Some(p) => {
                    if !opts.include_fallback && p.fallback_used {
                        continue;
                    }
                    p.customer_n
                }
                None => {
                    if opts.include_fallback {
                        continue;
                    }
                    return Err(MetricError::MissingProfile {
                        customer_id: customer_id.clone(),
                    });
                }
            },
            EvalCutoff::SegmentN { segments, segment_n } => {
                let label = segments
                    .get(customer_id)
                    .map(|l| l.as_str())
                    .unwrap_or(UNSEGMENTED);
                match segment_n.get(label) {
                    Some(&n) => n,
                    None => continue,
                }
            }
        };
        if rel.relevant_items.is_empty() {
            if opts.count_empty_relevance_as_zero {
                per_customer.push(PerCustomerResult {
                    customer_id: customer_id.clone(),
                    metric: kind,
                    cutoff_used: n,
                    value: 0.0,
                    relevant_count: 0,
                });
            }
            continue;
        }
        let value = metric_at(kind, list, rel, n)?;
        per_customer.push(PerCustomerResult {
            customer_id: customer_id.clone(),
            metric: kind,
            cutoff_used: n,
            value,
            relevant_count: rel.relevant_items.len(),
        });
    }
    if per_customer.is_empty() {
        return Err(MetricError::EmptyPopulation);
    }
    let sum: f64 = per_customer.iter().map(|r| r.value).sum();
    let customer_count = per_customer.len();
    Ok(AggregateReport {
        metric: kind,
        mode: cutoff.mode(),
        mean_value: sum / customer_count as f64,
        customer_count,
        per_customer,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeSet;

    fn list(customer: &str, items: &[&str]) -> RankedList {
        RankedList::new(
            customer.to_string(),
            items.iter().map(|s| s.to_string()).collect(),
        )
        .unwrap()
    }

    fn rel(customer: &str, items: &[&str]) -> RelevanceSet {
        RelevanceSet {
            customer_id: customer.to_string(),
            relevant_items: items.iter().map(|s| s.to_string()).collect::<BTreeSet<_>>(),
        }
    }

    #[test]
    fn recall_counts_hits_against_relevant_size() {
        let l = list("c", &["a", "b", "c", "d", "e"]);
        let r = rel("c", &["a", "c", "f", "g"]);
        assert_eq!(metric_at(MetricKind::Recall, &l, &r, 5).unwrap(), 0.5);
    }

    #[test]
    fn perfect_single_item_scores_one_everywhere() {
        let l = list("c", &["a", "b"]);
        let r = rel("c", &["a"]);
        for kind in MetricKind::ALL {
            assert_eq!(metric_at(kind, &l, &r, 1).unwrap(), 1.0, "{kind}");
        }
    }

    #[test]
    fn no_overlap_scores_zero_everywhere() {
        let l = list("c", &["x", "y", "z"]);
        let r = rel("c", &["a"]);
        for kind in MetricKind::ALL {
            assert_eq!(metric_at(kind, &l, &r, 3).unwrap(), 0.0, "{kind}");
        }
    }

    #[test]
    fn ndcg_discounts_late_hits() {
        let l = list("c", &["b", "a"]);
        let r = rel("c", &["a"]);
        let got = metric_at(MetricKind::Ndcg, &l, &r, 2).unwrap();
        let want = (1.0 / 3f64.log2()) / (1.0 / 2f64.log2());
        assert!((got - want).abs() < 1e-9);
        assert!((got - 0.6309297535714574).abs() < 1e-9);
    }

    #[test]
    fn precision_divides_by_requested_cutoff() {
        // List shorter than n: the single hit is diluted by n, not by k.
        let l = list("c", &["a"]);
        let r = rel("c", &["a"]);
        assert_eq!(metric_at(MetricKind::Precision, &l, &r, 4).unwrap(), 0.25);
        assert_eq!(metric_at(MetricKind::Recall, &l, &r, 4).unwrap(), 1.0);
    }

    #[test]
    fn mrr_takes_first_hit_position() {
        let l = list("c", &["x", "a", "b"]);
        let r = rel("c", &["a", "b"]);
        assert_eq!(metric_at(MetricKind::Mrr, &l, &r, 3).unwrap(), 0.5);
        // Hit outside the cutoff does not count.
        assert_eq!(metric_at(MetricKind::Mrr, &l, &r, 1).unwrap(), 0.0);
    }

    #[test]
    fn zero_cutoff_is_rejected() {
        let l = list("c", &["a"]);
        let r = rel("c", &["a"]);
        assert_eq!(
            metric_at(MetricKind::Recall, &l, &r, 0).unwrap_err(),
            MetricError::NonPositiveCutoff
        );
    }

    #[test]
    fn empty_relevance_is_rejected() {
        let l = list("c", &["a"]);
        let r = rel("c", &[]);
        assert!(matches!(
            metric_at(MetricKind::Recall, &l, &r, 1).unwrap_err(),
            MetricError::EmptyRelevanceSet { .. }
        ));
    }

    fn profile(customer: &str, n: u32, fallback: bool) -> (String, CustomerProfile) {
        (
            customer.to_string(),
            CustomerProfile {
                customer_id: customer.to_string(),
                customer_n: n,
                session_count: if fallback { 1 } else { 5 },
                session_max_ranks: vec![n],
                rank_mean: f64::from(n),
                rank_stddev: 0.0,
                rank_cv: 0.0,
                fallback_used: fallback,
            },
        )
    }

    #[test]
    fn aggregate_means_per_customer_values() {
        let lists: BTreeMap<_, _> = [
            ("c1".to_string(), list("c1", &["a", "b"])),
            ("c2".to_string(), list("c2", &["x", "y"])),
        ]
        .into();
        let relevance: BTreeMap<_, _> = [
            ("c1".to_string(), rel("c1", &["a"])),
            ("c2".to_string(), rel("c2", &["q"])),
        ]
        .into();
        let report = evaluate(
            MetricKind::HitRate,
            &lists,
            &relevance,
            EvalCutoff::StaticN(2),
            EvaluateOptions::default(),
        )
        .unwrap();
        assert_eq!(report.mean_value, 0.5);
        assert_eq!(report.customer_count, 2);
        assert_eq!(report.mode, ReportMode::StaticN);
        assert_eq!(report.per_customer[0].customer_id, "c1");
        assert_eq!(report.per_customer[0].value, 1.0);
        assert_eq!(report.per_customer[1].value, 0.0);
    }

    #[test]
    fn constant_profiles_match_static_cutoff_exactly() {
        let lists: BTreeMap<_, _> = (0..20)
            .map(|i| {
                let c = format!("c{i:02}");
                let items: Vec<String> = (0..10).map(|j| format!("i{}", (i * 7 + j) % 30)).collect();
                (c.clone(), RankedList::new(c, items).unwrap())
            })
            .collect();
        let relevance: BTreeMap<_, _> = (0..20)
            .map(|i| {
                let c = format!("c{i:02}");
                (
                    c.clone(),
                    RelevanceSet {
                        customer_id: c,
                        relevant_items: (0..4).map(|j| format!("i{}", (i * 5 + j) % 30)).collect(),
                    },
                )
            })
            .collect();
        let profiles: BTreeMap<_, _> = (0..20).map(|i| profile(&format!("c{i:02}"), 6, false)).collect();
        for kind in MetricKind::ALL {
            let personalized = evaluate(
                kind,
                &lists,
                &relevance,
                EvalCutoff::CustomerN(&profiles),
                EvaluateOptions::default(),
            )
            .unwrap();
            let fixed = evaluate(
                kind,
                &lists,
                &relevance,
                EvalCutoff::StaticN(6),
                EvaluateOptions::default(),
            )
            .unwrap();
            assert_eq!(personalized.mean_value, fixed.mean_value, "{kind}");
            assert_eq!(personalized.customer_count, fixed.customer_count);
            for (a, b) in personalized.per_customer.iter().zip(&fixed.per_customer) {
                assert_eq!(a.value, b.value);
                assert_eq!(a.cutoff_used, 6);
            }
        }
    }

    #[test]
    fn mixed_cutoffs_match_per_customer_brute_force() {
        let lists: BTreeMap<_, _> = [
            ("c1".to_string(), list("c1", &["a", "b", "c", "d"])),
            ("c2".to_string(), list("c2", &["d", "c", "b", "a"])),
            ("c3".to_string(), list("c3", &["a", "x", "y"])),
            ("c4".to_string(), list("c4", &["z"])),
            ("c5".to_string(), list("c5", &["b", "a"])),
        ]
        .into();
        let relevance: BTreeMap<_, _> = [
            ("c1".to_string(), rel("c1", &["a", "d"])),
            ("c2".to_string(), rel("c2", &["a", "d"])),
            ("c3".to_string(), rel("c3", &["y"])),
            ("c4".to_string(), rel("c4", &["z", "q"])),
            ("c5".to_string(), rel("c5", &["a"])),
        ]
        .into();
        let ns = [1u32, 2, 3, 9, 2];
        let profiles: BTreeMap<_, _> = ns
            .iter()
            .enumerate()
            .map(|(i, &n)| profile(&format!("c{}", i + 1), n, false))
            .collect();
        let report = evaluate(
            MetricKind::Recall,
            &lists,
            &relevance,
            EvalCutoff::CustomerN(&profiles),
            EvaluateOptions::default(),
        )
        .unwrap();
        let mut expected = 0.0;
        for (i, &n) in ns.iter().enumerate() {
            let c = format!("c{}", i + 1);
            expected += metric_at(MetricKind::Recall, &lists[&c], &relevance[&c], n).unwrap();
        }
        expected /= 5.0;
        assert!((report.mean_value - expected).abs() < 1e-15);
        assert_eq!(report.per_customer[3].cutoff_used, 9);
    }

    #[test]
    fn population_is_the_intersection() {
        let lists: BTreeMap<_, _> = [
            ("only_list".to_string(), list("only_list", &["a"])),
            ("both".to_string(), list("both", &["a"])),
        ]
        .into();
        let relevance: BTreeMap<_, _> = [
            ("both".to_string(), rel("both", &["a"])),
            ("only_rel".to_string(), rel("only_rel", &["a"])),
        ]
        .into();
        let report = evaluate(
            MetricKind::Recall,
            &lists,
            &relevance,
            EvalCutoff::StaticN(1),
            EvaluateOptions::default(),
        )
        .unwrap();
        assert_eq!(report.customer_count, 1);
        assert_eq!(report.per_customer[0].customer_id, "both");
    }

    #[test]
    fn empty_population_is_an_error() {
        let lists: BTreeMap<String, RankedList> =
            [("c1".to_string(), list("c1", &["a"]))].into();
        let relevance: BTreeMap<String, RelevanceSet> =
            [("c2".to_string(), rel("c2", &["a"]))].into();
        assert_eq!(
            evaluate(
                MetricKind::Recall,
                &lists,
                &relevance,
                EvalCutoff::StaticN(1),
                EvaluateOptions::default(),
            )
            .unwrap_err(),
            MetricError::EmptyPopulation
        );
    }

    #[test]
    fn empty_relevance_excluded_by_default_counted_when_asked() {
        let lists: BTreeMap<_, _> = [
            ("c1".to_string(), list("c1", &["a"])),
            ("c2".to_string(), list("c2", &["b"])),
        ]
        .into();
        let relevance: BTreeMap<_, _> = [
            ("c1".to_string(), rel("c1", &["a"])),
            ("c2".to_string(), rel("c2", &[])),
        ]
        .into();
        let excluded = evaluate(
            MetricKind::Recall,
            &lists,
            &relevance,
            EvalCutoff::StaticN(1),
            EvaluateOptions::default(),
        )
        .unwrap();
        assert_eq!(excluded.customer_count, 1);
        assert_eq!(excluded.mean_value, 1.0);

        let zeroed = evaluate(
            MetricKind::Recall,
            &lists,
            &relevance,
            EvalCutoff::StaticN(1),
            EvaluateOptions {
                count_empty_relevance_as_zero: true,
                ..Default::default()
            },
        )
        .unwrap();
        assert_eq!(zeroed.customer_count, 2);
        assert_eq!(zeroed.mean_value, 0.5);
        assert_eq!(zeroed.per_customer[1].relevant_count, 0);
    }

    #[test]
    fn fallback_exclusion_and_missing_profiles() {
        let lists: BTreeMap<_, _> = [
            ("solid".to_string(), list("solid", &["a"])),
            ("sparse".to_string(), list("sparse", &["a"])),
        ]
        .into();
        let relevance: BTreeMap<_, _> = [
            ("solid".to_string(), rel("solid", &["a"])),
            ("sparse".to_string(), rel("sparse", &["a"])),
        ]
        .into();
        let profiles: BTreeMap<_, _> =
            [profile("solid", 3, false), profile("sparse", 10, true)].into();

        let both = evaluate(
            MetricKind::Recall,
            &lists,
            &relevance,
            EvalCutoff::CustomerN(&profiles),
            EvaluateOptions::default(),
        )
        .unwrap();
        assert_eq!(both.customer_count, 2);

        let strict = evaluate(
            MetricKind::Recall,
            &lists,
            &relevance,
            EvalCutoff::CustomerN(&profiles),
            EvaluateOptions {
                include_fallback: false,
                ..Default::default()
            },
        )
        .unwrap();
        assert_eq!(strict.customer_count, 1);
        assert_eq!(strict.per_customer[0].customer_id, "solid");

        // Customer absent from profiles: silently dropped by default,
        // an error when fallback inclusion is off.
        let partial: BTreeMap<_, _> = [profile("solid", 3, false)].into();
        let dropped = evaluate(
            MetricKind::Recall,
            &lists,
            &relevance,
            EvalCutoff::CustomerN(&partial),
            EvaluateOptions::default(),
        )
        .unwrap();
        assert_eq!(dropped.customer_count, 1);
        let err = evaluate(
            MetricKind::Recall,
            &lists,
            &relevance,
            EvalCutoff::CustomerN(&partial),
            EvaluateOptions {
                include_fallback: false,
                ..Default::default()
            },
        )
        .unwrap_err();
        assert!(matches!(err, MetricError::MissingProfile { ref customer_id } if customer_id == "sparse"));
    }

    #[test]
    fn segment_mode_uses_segment_cutoffs() {
        let lists: BTreeMap<_, _> = [
            ("a1".to_string(), list("a1", &["x", "y", "z"])),
            ("b1".to_string(), list("b1", &["x", "y", "z"])),
            ("stray".to_string(), list("stray", &["x", "y", "z"])),
        ]
        .into();
        let relevance: BTreeMap<_, _> = [
            ("a1".to_string(), rel("a1", &["z"])),
            ("b1".to_string(), rel("b1", &["z"])),
            ("stray".to_string(), rel("stray", &["z"])),
        ]
        .into();
        let segments: BTreeMap<_, _> = [
            ("a1".to_string(), "A".to_string()),
            ("b1".to_string(), "B".to_string()),
        ]
        .into();
        let segment_n: BTreeMap<_, _> = [
            ("A".to_string(), 1u32),
            ("B".to_string(), 3u32),
            (UNSEGMENTED.to_string(), 3u32),
        ]
        .into();
        let report = evaluate(
            MetricKind::Recall,
            &lists,
            &relevance,
            EvalCutoff::SegmentN {
                segments: &segments,
                segment_n: &segment_n,
            },
            EvaluateOptions::default(),
        )
        .unwrap();
        assert_eq!(report.mode, ReportMode::SegmentN);
        assert_eq!(report.customer_count, 3);
        // Segment A cuts at 1 and misses; B and the unsegmented stray cut
        // at 3 and hit.
        let values: Vec<f64> = report.per_customer.iter().map(|r| r.value).collect();
        assert_eq!(values, vec![0.0, 1.0, 1.0]);
    }
}
