//! Core domain types shared by every pipeline stage.
//!
//! Everything downstream (sessionization, profiling, metrics, cohort
//! analysis) consumes these types, so validation happens once, here, when
//! raw rows enter the system. Timestamps are UTC epoch milliseconds and
//! ranks are 1-indexed display positions.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// One displayed item at a ranked position for a customer.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImpressionEvent {
    pub customer_id: String,
    /// Absent when the feed does not carry explicit session ids; sessions
    /// are then derived from timestamp gaps.
    pub session_id: Option<String>,
    /// UTC epoch milliseconds, never negative.
    pub timestamp: i64,
    pub item_id: String,
    /// 1-indexed display position. Rank 0 never passes validation.
    pub rank: u32,
}

/// Post-impression engagement signal.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InteractionKind {
    Click,
    Conversion,
}

impl InteractionKind {
    pub const ALL: [InteractionKind; 2] = [InteractionKind::Click, InteractionKind::Conversion];

    pub fn as_str(&self) -> &'static str {
        match self {
            InteractionKind::Click => "click",
            InteractionKind::Conversion => "conversion",
        }
    }
}

impl fmt::Display for InteractionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for InteractionKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "click" => Ok(InteractionKind::Click),
            "conversion" => Ok(InteractionKind::Conversion),
            other => Err(format!("unknown interaction kind `{other}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InteractionEvent {
    pub customer_id: String,
    /// UTC epoch milliseconds, never negative.
    pub timestamp: i64,
    pub item_id: String,
    pub kind: InteractionKind,
}

/// A contiguous run of impressions for one customer, either carried
/// explicitly by the feed or derived from timestamp gaps.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Session {
    pub customer_id: String,
    pub session_key: String,
    pub start_ts: i64,
    pub end_ts: i64,
    /// Maximum impression rank observed inside the session: how deep the
    /// customer scrolled.
    pub max_rank: u32,
}

/// Per-customer depth profile over a history window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CustomerProfile {
    pub customer_id: String,
    /// Personalized cutoff: median of per-session max ranks, or the
    /// configured fallback when the customer has too few sessions.
    pub customer_n: u32,
    pub session_count: usize,
    /// Per-session max ranks in chronological session order.
    pub session_max_ranks: Vec<u32>,
    pub rank_mean: f64,
    /// Population standard deviation of the per-session max ranks.
    pub rank_stddev: f64,
    /// stddev / mean, 0 when the mean is 0.
    pub rank_cv: f64,
    pub fallback_used: bool,
}

/// Recommendation output for one customer, best first, items unique.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RankedList {
    pub customer_id: String,
    pub items: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("duplicate item `{item_id}` in ranked list")]
pub struct DuplicateItemError {
    pub item_id: String,
}

impl RankedList {
    /// Builds a list, rejecting duplicate item ids.
    pub fn new(customer_id: String, items: Vec<String>) -> Result<Self, DuplicateItemError> {
        let mut seen = BTreeSet::new();
        for item in &items {
            if !seen.insert(item.as_str()) {
                return Err(DuplicateItemError {
                    item_id: item.clone(),
                });
            }
        }
        Ok(RankedList { customer_id, items })
    }
}

/// Ground-truth items for one customer in the evaluation period.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RelevanceSet {
    pub customer_id: String,
    pub relevant_items: BTreeSet<String>,
}

/// A parse failure or invariant violation on one input row.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("row {row}: {kind}")]
pub struct RowError {
    /// 1-based line number in the source file (the CSV header is line 1).
    pub row: u64,
    pub kind: RowErrorKind,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum RowErrorKind {
    MissingField { field: &'static str },
    EmptyKey { field: &'static str },
    NonPositiveRank { value: i64 },
    NegativeTimestamp { value: i64 },
    InvalidRank { value: String },
    InvalidTimestamp { value: String },
    InvalidKind { value: String },
    InvalidNumber { field: &'static str, value: String },
    InvalidRow { detail: String },
    DuplicateItem { item_id: String },
    DuplicateCustomer { customer_id: String },
}

impl RowErrorKind {
    /// Stable machine-readable label, used for error tallies.
    pub fn label(&self) -> &'static str {
        match self {
            RowErrorKind::MissingField { .. } => "missing_field",
            RowErrorKind::EmptyKey { .. } => "empty_key",
            RowErrorKind::NonPositiveRank { .. } => "non_positive_rank",
            RowErrorKind::NegativeTimestamp { .. } => "negative_timestamp",
            RowErrorKind::InvalidRank { .. } => "invalid_rank",
            RowErrorKind::InvalidTimestamp { .. } => "invalid_timestamp",
            RowErrorKind::InvalidKind { .. } => "invalid_kind",
            RowErrorKind::InvalidNumber { .. } => "invalid_number",
            RowErrorKind::InvalidRow { .. } => "invalid_row",
            RowErrorKind::DuplicateItem { .. } => "duplicate_item",
            RowErrorKind::DuplicateCustomer { .. } => "duplicate_customer",
        }
    }
}

impl fmt::Display for RowErrorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RowErrorKind::MissingField { field } => write!(f, "missing field `{field}`"),
            RowErrorKind::EmptyKey { field } => write!(f, "empty value for key field `{field}`"),
            RowErrorKind::NonPositiveRank { value } => {
                write!(f, "rank must be >= 1, got {value}")
            }
            RowErrorKind::NegativeTimestamp { value } => {
                write!(f, "timestamp must be >= 0, got {value}")
            }
            RowErrorKind::InvalidRank { value } => write!(f, "unparseable rank `{value}`"),
            RowErrorKind::InvalidTimestamp { value } => {
                write!(f, "unparseable timestamp `{value}`")
            }
            RowErrorKind::InvalidKind { value } => {
                write!(f, "unknown interaction kind `{value}`")
            }
            RowErrorKind::InvalidNumber { field, value } => {
                write!(f, "unparseable number `{value}` in field `{field}`")
            }
            RowErrorKind::InvalidRow { detail } => write!(f, "malformed row: {detail}"),
            RowErrorKind::DuplicateItem { item_id } => {
                write!(f, "duplicate item `{item_id}` in ranked list")
            }
            RowErrorKind::DuplicateCustomer { customer_id } => {
                write!(f, "duplicate entry for customer `{customer_id}`")
            }
        }
    }
}

/// Field values extracted from one raw impression row, before invariants
/// are enforced. Numeric fields arrive pre-parsed; parse failures are
/// reported by the reader itself.
#[derive(Debug, Default)]
pub struct RawImpression {
    pub customer_id: Option<String>,
    pub session_id: Option<String>,
    pub timestamp: Option<i64>,
    pub item_id: Option<String>,
    pub rank: Option<i64>,
}

/// Enforces impression invariants and produces the validated event.
///
/// Checks, in order: field presence, non-empty key fields, timestamp >= 0,
/// rank >= 1. An empty session id is normalized to `None`.
pub fn validate_impression(raw: RawImpression, row: u64) -> Result<ImpressionEvent, RowError> {
    let err = |kind| RowError { row, kind };
    let customer_id = raw
        .customer_id
        .ok_or_else(|| err(RowErrorKind::MissingField { field: "customer_id" }))?;
    if customer_id.is_empty() {
        return Err(err(RowErrorKind::EmptyKey { field: "customer_id" }));
    }
    let item_id = raw
        .item_id
        .ok_or_else(|| err(RowErrorKind::MissingField { field: "item_id" }))?;
    if item_id.is_empty() {
        return Err(err(RowErrorKind::EmptyKey { field: "item_id" }));
    }
    let timestamp = raw
        .timestamp
        .ok_or_else(|| err(RowErrorKind::MissingField { field: "timestamp" }))?;
    if timestamp < 0 {
        return Err(err(RowErrorKind::NegativeTimestamp { value: timestamp }));
    }
    let rank = raw
        .rank
        .ok_or_else(|| err(RowErrorKind::MissingField { field: "rank" }))?;
    if rank < 1 {
        return Err(err(RowErrorKind::NonPositiveRank { value: rank }));
    }
    let rank = u32::try_from(rank).map_err(|_| {
        err(RowErrorKind::InvalidRank {
            value: rank.to_string(),
        })
    })?;
    let session_id = raw.session_id.filter(|s| !s.is_empty());
    Ok(ImpressionEvent {
        customer_id,
        session_id,
        timestamp,
        item_id,
        rank,
    })
}

#[derive(Debug, Default)]
pub struct RawInteraction {
    pub customer_id: Option<String>,
    pub timestamp: Option<i64>,
    pub item_id: Option<String>,
    pub kind: Option<InteractionKind>,
}

/// Interaction counterpart of [`validate_impression`].
pub fn validate_interaction(raw: RawInteraction, row: u64) -> Result<InteractionEvent, RowError> {
    let err = |kind| RowError { row, kind };
    let customer_id = raw
        .customer_id
        .ok_or_else(|| err(RowErrorKind::MissingField { field: "customer_id" }))?;
    if customer_id.is_empty() {
        return Err(err(RowErrorKind::EmptyKey { field: "customer_id" }));
    }
    let item_id = raw
        .item_id
        .ok_or_else(|| err(RowErrorKind::MissingField { field: "item_id" }))?;
    if item_id.is_empty() {
        return Err(err(RowErrorKind::EmptyKey { field: "item_id" }));
    }
    let timestamp = raw
        .timestamp
        .ok_or_else(|| err(RowErrorKind::MissingField { field: "timestamp" }))?;
    if timestamp < 0 {
        return Err(err(RowErrorKind::NegativeTimestamp { value: timestamp }));
    }
    let kind = raw
        .kind
        .ok_or_else(|| err(RowErrorKind::MissingField { field: "kind" }))?;
    Ok(InteractionEvent {
        customer_id,
        timestamp,
        item_id,
        kind,
    })
}
