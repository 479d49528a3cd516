//! Population-level views of per-customer cutoff spread.
//!
//! Three analyses over a profile map, each on a shared x axis of
//! customer N normalized by the population maximum: a histogram of the
//! normalized Ns, within-customer rank spread versus N, and coefficient
//! of variation versus N. Buckets are right-closed `(lo, hi]` so the
//! maximum lands in the last bucket and equal-width integer populations
//! split evenly.
//!
//! Quantiles use the nearest-rank rule: the q-th quantile of n sorted
//! values is the element at rank `ceil(q * n)`.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::event::CustomerProfile;

pub const DEFAULT_BUCKET_COUNT: usize = 20;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum CohortError {
    #[error("no profiles left to analyze after exclusions")]
    EmptyPopulation,
    #[error("bucket count must be >= 1")]
    InvalidBucketCount,
}

#[derive(Debug, Clone, Copy)]
pub struct CohortOptions {
    pub bucket_count: usize,
    /// Fallback profiles carry a synthetic N; they are excluded from the
    /// analyses unless explicitly requested.
    pub include_fallback: bool,
}

impl Default for CohortOptions {
    fn default() -> Self {
        CohortOptions {
            bucket_count: DEFAULT_BUCKET_COUNT,
            include_fallback: false,
        }
    }
}

/// Counts of normalized customer N per bucket.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    /// `bucket_count + 1` strictly increasing edges spanning [0, 1].
    pub bucket_edges: Vec<f64>,
    pub counts: Vec<usize>,
    /// Number of profiles analyzed; always equals the count sum.
    pub population: usize,
    pub max_customer_n: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Quartiles {
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bucket {
    pub count: usize,
    /// Quartiles of the bucket's y values; None when the bucket is empty.
    pub y: Option<Quartiles>,
    /// Raw-variance companion emitted by the dispersion analysis only.
    pub y_variance: Option<Quartiles>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BucketedSeries {
    pub bucket_edges: Vec<f64>,
    pub buckets: Vec<Bucket>,
    pub population: usize,
    pub max_customer_n: u32,
}

/// Divides every customer's N by the population maximum. The maximum
/// maps to exactly 1.0 and every output is in (0, 1].
pub fn normalize_customer_n(
    profiles: &BTreeMap<String, CustomerProfile>,
) -> Result<BTreeMap<String, f64>, CohortError> {
    let max = profiles
        .values()
        .map(|p| p.customer_n)
        .max()
        .ok_or(CohortError::EmptyPopulation)?;
    Ok(profiles
        .iter()
        .map(|(id, p)| (id.clone(), f64::from(p.customer_n) / f64::from(max)))
        .collect())
}

fn edges(bucket_count: usize) -> Vec<f64> {
    (0..=bucket_count)
        .map(|i| i as f64 / bucket_count as f64)
        .collect()
}

/// Right-closed assignment: the smallest bucket whose upper edge is >= v.
/// Every normalized value sits in (0, 1], so the scan always lands.
fn bucket_of(v: f64, edges: &[f64]) -> usize {
    edges[1..].partition_point(|&e| e < v)
}

fn nearest_rank(sorted: &[f64], q: f64) -> f64 {
    let rank = (q * sorted.len() as f64).ceil() as usize;
    sorted[rank.max(1) - 1]
}

fn quartiles(values: &mut [f64]) -> Quartiles {
    values.sort_by(f64::total_cmp);
    Quartiles {
        q1: nearest_rank(values, 0.25),
        median: nearest_rank(values, 0.5),
        q3: nearest_rank(values, 0.75),
    }
}

fn filtered<'a>(
    profiles: &'a BTreeMap<String, CustomerProfile>,
    opts: &CohortOptions,
    extra: impl Fn(&CustomerProfile) -> bool,
) -> Result<(Vec<&'a CustomerProfile>, u32), CohortError> {
    if opts.bucket_count == 0 {
        return Err(CohortError::InvalidBucketCount);
    }
    let kept: Vec<&CustomerProfile> = profiles
        .values()
        .filter(|p| (opts.include_fallback || !p.fallback_used) && extra(p))
        .collect();
    let max = kept
        .iter()
        .map(|p| p.customer_n)
        .max()
        .ok_or(CohortError::EmptyPopulation)?;
    Ok((kept, max))
}

/// Histogram of normalized customer N.
pub fn n_distribution(
    profiles: &BTreeMap<String, CustomerProfile>,
    opts: &CohortOptions,
) -> Result<Histogram, CohortError> {
    let (kept, max) = filtered(profiles, opts, |_| true)?;
    let edges = edges(opts.bucket_count);
    let mut counts = vec![0usize; opts.bucket_count];
    for p in &kept {
        let v = f64::from(p.customer_n) / f64::from(max);
        counts[bucket_of(v, &edges)] += 1;
    }
    Ok(Histogram {
        bucket_edges: edges,
        counts,
        population: kept.len(),
        max_customer_n: max,
    })
}

fn bucketed(
    kept: &[&CustomerProfile],
    max: u32,
    bucket_count: usize,
    y_of: impl Fn(&CustomerProfile) -> f64,
    variance_too: bool,
) -> BucketedSeries {
    let edges = edges(bucket_count);
    let mut ys: Vec<Vec<f64>> = vec![Vec::new(); bucket_count];
    let mut vars: Vec<Vec<f64>> = vec![Vec::new(); bucket_count];
    for p in kept {
        let x = f64::from(p.customer_n) / f64::from(max);
        let b = bucket_of(x, &edges);
        ys[b].push(y_of(p));
        if variance_too {
            vars[b].push(p.rank_stddev * p.rank_stddev);
        }
    }
    let buckets = ys
        .iter_mut()
        .zip(&mut vars)
        .map(|(y, v)| Bucket {
            count: y.len(),
            y: (!y.is_empty()).then(|| quartiles(y)),
            y_variance: (!v.is_empty()).then(|| quartiles(v)),
        })
        .collect();
    BucketedSeries {
        bucket_edges: edges,
        buckets,
        population: kept.len(),
        max_customer_n: max,
    }
}

/// Within-customer rank spread versus normalized N. The y axis is the
/// population stddev of per-session max ranks, divided by max N to share
/// the figure's scale; the raw variance rides along as a second set of
/// quartiles so either reading of the source plot can be compared.
pub fn dispersion_vs_median(
    profiles: &BTreeMap<String, CustomerProfile>,
    opts: &CohortOptions,
) -> Result<BucketedSeries, CohortError> {
    let (kept, max) = filtered(profiles, opts, |p| p.session_count >= 2)?;
    Ok(bucketed(
        &kept,
        max,
        opts.bucket_count,
        |p| p.rank_stddev / f64::from(max),
        true,
    ))
}

/// Coefficient of variation versus normalized N. CV is scale-free, so
/// the y axis is left unnormalized.
pub fn cv_vs_median(
    profiles: &BTreeMap<String, CustomerProfile>,
    opts: &CohortOptions,
) -> Result<BucketedSeries, CohortError> {
    let (kept, max) = filtered(profiles, opts, |p| {
        p.session_count >= 2 && p.rank_mean > 0.0
    })?;
    Ok(bucketed(
        &kept,
        max,
        opts.bucket_count,
        |p| p.rank_cv,
        false,
    ))
}

#[cfg(test)]
pub(crate) fn profile_from_ranks(customer: &str, ranks: &[u32]) -> CustomerProfile {
    use crate::customer_n::{median_rank, MedianMode};
    let mean = ranks.iter().map(|&r| f64::from(r)).sum::<f64>() / ranks.len() as f64;
    let var = ranks
        .iter()
        .map(|&r| (f64::from(r) - mean).powi(2))
        .sum::<f64>()
        / ranks.len() as f64;
    let stddev = var.sqrt();
    CustomerProfile {
        customer_id: customer.to_string(),
        customer_n: median_rank(ranks, MedianMode::InterpolateCeil).unwrap(),
        session_count: ranks.len(),
        session_max_ranks: ranks.to_vec(),
        rank_mean: mean,
        rank_stddev: stddev,
        rank_cv: if mean > 0.0 { stddev / mean } else { 0.0 },
        fallback_used: false,
    }
}
