//! Seeded synthetic populations and reference recommenders.
//!
//! Generation is single-threaded over one ChaCha12 stream seeded from the
//! spec's 64-bit seed, so identical specs give identical event streams on
//! every platform. Recommenders derive an independent per-customer stream
//! from SHA-256(seed, customer id), which makes a customer's list
//! insensitive to the order customers are processed in.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, LogNormal, Normal};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::event::{ImpressionEvent, InteractionEvent, InteractionKind, RankedList, RelevanceSet};
use crate::ingest::MS_PER_DAY;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum SynthError {
    #[error("invalid population spec: {reason}")]
    InvalidSpec { reason: String },
    #[error("requested list length {length} exceeds catalog size {catalog_size}")]
    InvalidLength { length: usize, catalog_size: usize },
}

/// Closed integer range, both ends inclusive.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct IntRange {
    pub min: u32,
    pub max: u32,
}

impl IntRange {
    fn check(&self, what: &str) -> Result<(), SynthError> {
        if self.min < 1 || self.min > self.max {
            return Err(SynthError::InvalidSpec {
                reason: format!("{what} range [{}, {}] is empty or below 1", self.min, self.max),
            });
        }
        Ok(())
    }
}

/// Per-customer base scroll depth distribution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DepthModel {
    Uniform { min: u32, max: u32 },
    LogNormal { mu: f64, sigma: f64 },
}

fn default_sessions() -> IntRange {
    IntRange { min: 3, max: 12 }
}
fn default_depth_model() -> DepthModel {
    DepthModel::Uniform { min: 2, max: 20 }
}
fn default_noise() -> f64 {
    0.25
}
fn default_max_depth() -> u32 {
    100
}
fn default_catalog_size() -> u64 {
    1000
}
fn default_relevant() -> IntRange {
    IntRange { min: 1, max: 5 }
}
fn default_click_fraction() -> f64 {
    0.1
}
fn default_cutoff_ts() -> i64 {
    1_700_000_000_000
}
fn default_history_span_days() -> u32 {
    90
}
fn default_eval_span_days() -> u32 {
    7
}
fn default_segment_count() -> u32 {
    3
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PopulationSpec {
    pub customer_count: u32,
    #[serde(default = "default_sessions")]
    pub sessions_per_customer: IntRange,
    #[serde(default = "default_depth_model")]
    pub depth_model: DepthModel,
    /// Stddev of per-session depth noise, as a fraction of the
    /// customer's base depth.
    #[serde(default = "default_noise")]
    pub within_customer_noise: f64,
    #[serde(default = "default_max_depth")]
    pub max_depth: u32,
    #[serde(default = "default_catalog_size")]
    pub catalog_size: u64,
    #[serde(default = "default_relevant")]
    pub relevant_per_customer: IntRange,
    /// Probability that an impressed item also gets a pre-cutoff
    /// interaction; exercises the time filter without touching relevance.
    #[serde(default = "default_click_fraction")]
    pub click_fraction: f64,
    #[serde(default = "default_cutoff_ts")]
    pub cutoff_ts: i64,
    #[serde(default = "default_history_span_days")]
    pub history_span_days: u32,
    #[serde(default = "default_eval_span_days")]
    pub eval_span_days: u32,
    #[serde(default = "default_segment_count")]
    pub segment_count: u32,
    #[serde(default)]
    pub seed: u64,
}

impl PopulationSpec {
    pub fn validate(&self) -> Result<(), SynthError> {
        let fail = |reason: String| Err(SynthError::InvalidSpec { reason });
        if self.customer_count < 1 {
            return fail("customer_count must be >= 1".into());
        }
        self.sessions_per_customer.check("sessions_per_customer")?;
        self.relevant_per_customer.check("relevant_per_customer")?;
        if self.max_depth < 1 {
            return fail("max_depth must be >= 1".into());
        }
        if self.catalog_size < 1 {
            return fail("catalog_size must be >= 1".into());
        }
        if u64::from(self.relevant_per_customer.max) > self.catalog_size {
            return fail("relevant_per_customer.max exceeds catalog_size".into());
        }
        match self.depth_model {
            DepthModel::Uniform { min, max } => {
                if min < 1 || min > max {
                    return fail(format!("uniform depth range [{min}, {max}] is empty or below 1"));
                }
            }
            DepthModel::LogNormal { mu, sigma } => {
                if !mu.is_finite() || !sigma.is_finite() || sigma < 0.0 {
                    return fail(format!("log-normal parameters mu={mu} sigma={sigma} are invalid"));
                }
            }
        }
        if !self.within_customer_noise.is_finite() || self.within_customer_noise < 0.0 {
            return fail("within_customer_noise must be finite and >= 0".into());
        }
        if !(0.0..=1.0).contains(&self.click_fraction) {
            return fail("click_fraction must be in [0, 1]".into());
        }
        if self.history_span_days < 1 || self.eval_span_days < 1 {
            return fail("history_span_days and eval_span_days must be >= 1".into());
        }
        if self.segment_count < 1 {
            return fail("segment_count must be >= 1".into());
        }
        // Sessions are stamped one impression per second; the window must
        // have room for the deepest possible session.
        let span_ms = i64::from(self.history_span_days) * MS_PER_DAY;
        if span_ms <= i64::from(self.max_depth) * 1000 + 1 {
            return fail("history window too short for max_depth sessions".into());
        }
        Ok(())
    }
}

/// Everything one seeded run produces, before serialization.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneratedPopulation {
    pub impressions: Vec<ImpressionEvent>,
    pub interactions: Vec<InteractionEvent>,
    /// Ground truth: the post-cutoff interaction targets per customer.
    pub relevance: BTreeMap<String, RelevanceSet>,
    pub segments: BTreeMap<String, String>,
    /// The latent base depth each customer was drawn around.
    pub base_depths: BTreeMap<String, u32>,
    /// Interaction totals per item, for the popularity recommender.
    pub interaction_counts: BTreeMap<String, u64>,
}

fn digits(mut v: u64) -> usize {
    let mut d = 1;
    while v >= 10 {
        v /= 10;
        d += 1;
    }
    d
}

/// Item ids zero-padded so lexicographic and numeric order agree.
pub fn catalog_items(catalog_size: u64) -> Vec<String> {
    let width = digits(catalog_size.saturating_sub(1));
    (0..catalog_size).map(|k| format!("i{k:0width$}")).collect()
}

fn item_name(k: u64, width: usize) -> String {
    format!("i{k:0width$}")
}

/// Partial Fisher-Yates over 0..pool via a sparse swap map: `count`
/// distinct draws in O(count) regardless of pool size.
fn sample_distinct(rng: &mut ChaCha12Rng, count: usize, pool: u64) -> Vec<u64> {
    debug_assert!(count as u64 <= pool);
    let mut swaps: HashMap<u64, u64> = HashMap::new();
    let mut out = Vec::with_capacity(count);
    for i in 0..count as u64 {
        let j = rng.random_range(i..pool);
        let vi = *swaps.get(&i).unwrap_or(&i);
        let vj = *swaps.get(&j).unwrap_or(&j);
        out.push(vj);
        swaps.insert(j, vi);
    }
    out
}

pub fn generate(spec: &PopulationSpec) -> Result<GeneratedPopulation, SynthError> {
    spec.validate()?;
    let mut rng = ChaCha12Rng::seed_from_u64(spec.seed);
    let cwidth = digits(u64::from(spec.customer_count.saturating_sub(1)));
    let iwidth = digits(spec.catalog_size.saturating_sub(1));

    let window_start = spec.cutoff_ts - i64::from(spec.history_span_days) * MS_PER_DAY;
    let latest_start = spec.cutoff_ts - i64::from(spec.max_depth) * 1000 - 1;
    let eval_span_ms = i64::from(spec.eval_span_days) * MS_PER_DAY;

    let mut out = GeneratedPopulation {
        impressions: Vec::new(),
        interactions: Vec::new(),
        relevance: BTreeMap::new(),
        segments: BTreeMap::new(),
        base_depths: BTreeMap::new(),
        interaction_counts: BTreeMap::new(),
    };

    for c in 0..spec.customer_count {
        let customer_id = format!("c{c:0cwidth$}");
        let base = match spec.depth_model {
            DepthModel::Uniform { min, max } => rng.random_range(min..=max),
            DepthModel::LogNormal { mu, sigma } => {
                let draw = LogNormal::new(mu, sigma)
                    .expect("validated parameters")
                    .sample(&mut rng);
                (draw.round() as i64).clamp(1, i64::from(spec.max_depth)) as u32
            }
        }
        .min(spec.max_depth);
        let noise = Normal::new(0.0, spec.within_customer_noise * f64::from(base))
            .expect("validated parameters");
        let session_count =
            rng.random_range(spec.sessions_per_customer.min..=spec.sessions_per_customer.max);
        let segment = format!("seg{}", rng.random_range(0..spec.segment_count));

        for s in 0..session_count {
            let depth_draw = f64::from(base) + noise.sample(&mut rng);
            let depth = depth_draw.round().clamp(1.0, f64::from(spec.max_depth)) as u32;
            let start = rng.random_range(window_start..=latest_start);
            let session_id = format!("s{s}");
            for rank in 1..=depth {
                let item = item_name(rng.random_range(0..spec.catalog_size), iwidth);
                let ts = start + i64::from(rank - 1) * 1000;
                if rng.random_bool(spec.click_fraction) {
                    out.interactions.push(InteractionEvent {
                        customer_id: customer_id.clone(),
                        item_id: item.clone(),
                        timestamp: ts + 500,
                        kind: InteractionKind::Click,
                    });
                }
                out.impressions.push(ImpressionEvent {
                    customer_id: customer_id.clone(),
                    session_id: Some(session_id.clone()),
                    timestamp: ts,
                    item_id: item,
                    rank,
                });
            }
        }

        let relevant_count = rng
            .random_range(spec.relevant_per_customer.min..=spec.relevant_per_customer.max)
            as usize;
        let mut relevant_items = BTreeSet::new();
        for k in sample_distinct(&mut rng, relevant_count, spec.catalog_size) {
            let item = item_name(k, iwidth);
            let kind = if rng.random_bool(0.3) {
                InteractionKind::Conversion
            } else {
                InteractionKind::Click
            };
            out.interactions.push(InteractionEvent {
                customer_id: customer_id.clone(),
                item_id: item.clone(),
                timestamp: spec.cutoff_ts + rng.random_range(0..eval_span_ms),
                kind,
            });
            relevant_items.insert(item);
        }
        out.relevance.insert(
            customer_id.clone(),
            RelevanceSet {
                customer_id: customer_id.clone(),
                relevant_items,
            },
        );
        out.segments.insert(customer_id.clone(), segment);
        out.base_depths.insert(customer_id, base);
    }

    for event in &out.interactions {
        *out.interaction_counts.entry(event.item_id.clone()).or_insert(0) += 1;
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RecommendStrategy {
    Oracle,
    Random,
    Popularity,
}

impl RecommendStrategy {
    pub const ALL: [RecommendStrategy; 3] = [
        RecommendStrategy::Oracle,
        RecommendStrategy::Random,
        RecommendStrategy::Popularity,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            RecommendStrategy::Oracle => "oracle",
            RecommendStrategy::Random => "random",
            RecommendStrategy::Popularity => "popularity",
        }
    }
}

impl std::fmt::Display for RecommendStrategy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for RecommendStrategy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "oracle" => Ok(RecommendStrategy::Oracle),
            "random" => Ok(RecommendStrategy::Random),
            "popularity" => Ok(RecommendStrategy::Popularity),
            other => Err(format!("unknown recommender `{other}`")),
        }
    }
}

fn customer_rng(seed: u64, customer_id: &str) -> ChaCha12Rng {
    let mut hasher = Sha256::new();
    hasher.update(seed.to_le_bytes());
    hasher.update(customer_id.as_bytes());
    ChaCha12Rng::from_seed(hasher.finalize().into())
}

/// Builds one customer's ranked list.
///
/// oracle: relevant items first (id order), then a seeded random fill.
/// random: seeded uniform sample without replacement.
/// popularity: interaction counts descending, ties broken by item id;
/// ignores the seed.
pub fn recommend(
    strategy: RecommendStrategy,
    customer_id: &str,
    catalog: &[String],
    relevant: &BTreeSet<String>,
    interaction_counts: &BTreeMap<String, u64>,
    length: usize,
    seed: u64,
) -> Result<RankedList, SynthError> {
    if length > catalog.len() {
        return Err(SynthError::InvalidLength {
            length,
            catalog_size: catalog.len(),
        });
    }
    let items: Vec<String> = match strategy {
        RecommendStrategy::Oracle => {
            let mut items: Vec<String> = relevant.iter().take(length).cloned().collect();
            if items.len() < length {
                let mut rng = customer_rng(seed, customer_id);
                // Enough draws that the non-relevant ones alone can fill
                // the remainder.
                let want = (length + relevant.len()).min(catalog.len());
                for k in sample_distinct(&mut rng, want, catalog.len() as u64) {
                    let candidate = &catalog[k as usize];
                    if !relevant.contains(candidate) {
                        items.push(candidate.clone());
                        if items.len() == length {
                            break;
                        }
                    }
                }
            }
            items
        }
        RecommendStrategy::Random => {
            let mut rng = customer_rng(seed, customer_id);
            sample_distinct(&mut rng, length, catalog.len() as u64)
                .into_iter()
                .map(|k| catalog[k as usize].clone())
                .collect()
        }
        RecommendStrategy::Popularity => {
            let mut ranked: Vec<&String> = catalog.iter().collect();
            ranked.sort_by(|a, b| {
                let ca = interaction_counts.get(*a).copied().unwrap_or(0);
                let cb = interaction_counts.get(*b).copied().unwrap_or(0);
                cb.cmp(&ca).then_with(|| a.cmp(b))
            });
            ranked.into_iter().take(length).cloned().collect()
        }
    };
    RankedList::new(customer_id.to_string(), items).map_err(|e| SynthError::InvalidSpec {
        reason: e.to_string(),
    })
}
