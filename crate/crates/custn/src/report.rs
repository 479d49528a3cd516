//! File emission and the readers for the formats this tool itself writes.
//!
//! Every writer goes through [`atomic_write`]: bytes are staged in a
//! temp file beside the target and renamed into place, so a crashed run
//! never leaves a half-written report. Writers are deterministic for
//! identical inputs; floats use Rust's shortest round-trip formatting.

use std::collections::BTreeMap;
use std::io::{self, Read, Write};
use std::path::Path;

use serde::Serialize;
use thiserror::Error;

use crate::cohort::{BucketedSeries, Histogram};
use crate::event::{
    CustomerProfile, ImpressionEvent, InteractionEvent, RankedList, RowError, RowErrorKind,
};
use crate::ingest::{open_buffered, IngestError};
use crate::metrics::{AggregateReport, MetricKind};

pub fn atomic_write(path: &Path, bytes: &[u8]) -> io::Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty());
    if let Some(dir) = dir {
        std::fs::create_dir_all(dir)?;
    }
    let mut tmp = match dir {
        Some(dir) => tempfile::NamedTempFile::new_in(dir)?,
        None => tempfile::NamedTempFile::new_in(".")?,
    };
    tmp.write_all(bytes)?;
    tmp.persist(path).map_err(|e| e.error)?;
    Ok(())
}

fn csv_bytes(build: impl FnOnce(&mut csv::Writer<Vec<u8>>) -> csv::Result<()>) -> io::Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    build(&mut w).map_err(io::Error::other)?;
    w.into_inner().map_err(io::Error::other)
}

pub fn write_impressions_csv(path: &Path, events: &[ImpressionEvent]) -> io::Result<()> {
    let bytes = csv_bytes(|w| {
        w.write_record(["customer_id", "session_id", "timestamp", "item_id", "rank"])?;
        for e in events {
            w.write_record([
                e.customer_id.as_str(),
                e.session_id.as_deref().unwrap_or(""),
                &e.timestamp.to_string(),
                e.item_id.as_str(),
                &e.rank.to_string(),
            ])?;
        }
        Ok(())
    })?;
    atomic_write(path, &bytes)
}

pub fn write_interactions_csv(path: &Path, events: &[InteractionEvent]) -> io::Result<()> {
    let bytes = csv_bytes(|w| {
        w.write_record(["customer_id", "item_id", "timestamp", "kind"])?;
        for e in events {
            w.write_record([
                e.customer_id.as_str(),
                e.item_id.as_str(),
                &e.timestamp.to_string(),
                e.kind.as_str(),
            ])?;
        }
        Ok(())
    })?;
    atomic_write(path, &bytes)
}

pub fn write_segments_csv(path: &Path, segments: &BTreeMap<String, String>) -> io::Result<()> {
    let bytes = csv_bytes(|w| {
        w.write_record(["customer_id", "segment"])?;
        for (customer, label) in segments {
            w.write_record([customer.as_str(), label.as_str()])?;
        }
        Ok(())
    })?;
    atomic_write(path, &bytes)
}

/// Reader-level failure for the tables this module writes. Path-level
/// wrappers attach the file name and convert to [`IngestError`].
#[derive(Debug, Error)]
pub enum TableReadError {
    #[error("format mismatch: {0}")]
    Format(String),
    #[error(transparent)]
    Row(#[from] RowError),
}

fn attach_path(err: TableReadError, path: &Path) -> IngestError {
    let path = path.display().to_string();
    match err {
        TableReadError::Format(detail) => IngestError::FormatMismatch { path, detail },
        TableReadError::Row(source) => IngestError::Row { path, source },
    }
}

fn need_col(headers: &csv::StringRecord, name: &str) -> Result<usize, TableReadError> {
    headers
        .iter()
        .position(|h| h.trim() == name)
        .ok_or_else(|| TableReadError::Format(format!("missing required column `{name}`")))
}

fn record_row(record: &csv::StringRecord) -> u64 {
    record.position().map(|p| p.line()).unwrap_or(0)
}

fn csv_row_error(e: csv::Error) -> TableReadError {
    let row = e.position().map(|p| p.line()).unwrap_or(0);
    TableReadError::Row(RowError {
        row,
        kind: RowErrorKind::InvalidRow {
            detail: e.to_string(),
        },
    })
}

/// Profile interchange between `profile` and the downstream subcommands.
/// The per-session rank list stays internal; the export carries the
/// derived statistics only.
pub fn write_profiles_csv(
    path: &Path,
    profiles: &BTreeMap<String, CustomerProfile>,
) -> io::Result<()> {
    let bytes = csv_bytes(|w| {
        w.write_record([
            "customer_id",
            "customer_n",
            "session_count",
            "rank_mean",
            "rank_stddev",
            "rank_cv",
            "fallback_used",
        ])?;
        for p in profiles.values() {
            w.write_record([
                p.customer_id.as_str(),
                &p.customer_n.to_string(),
                &p.session_count.to_string(),
                &p.rank_mean.to_string(),
                &p.rank_stddev.to_string(),
                &p.rank_cv.to_string(),
                if p.fallback_used { "true" } else { "false" },
            ])?;
        }
        Ok(())
    })?;
    atomic_write(path, &bytes)
}

pub fn read_profiles_from_reader<R: Read>(
    reader: R,
) -> Result<BTreeMap<String, CustomerProfile>, TableReadError> {
    let mut rdr = csv::ReaderBuilder::new().flexible(true).from_reader(reader);
    let headers = rdr
        .headers()
        .map_err(|e| TableReadError::Format(e.to_string()))?
        .clone();
    let id_col = need_col(&headers, "customer_id")?;
    let n_col = need_col(&headers, "customer_n")?;
    let count_col = need_col(&headers, "session_count")?;
    let mean_col = need_col(&headers, "rank_mean")?;
    let stddev_col = need_col(&headers, "rank_stddev")?;
    let cv_col = need_col(&headers, "rank_cv")?;
    let fb_col = need_col(&headers, "fallback_used")?;

    let mut out = BTreeMap::new();
    let mut record = csv::StringRecord::new();
    loop {
        match rdr.read_record(&mut record) {
            Ok(false) => break,
            Ok(true) => {}
            Err(e) => return Err(csv_row_error(e)),
        }
        let row = record_row(&record);
        let field = |idx: usize, name: &'static str| -> Result<&str, TableReadError> {
            record
                .get(idx)
                .map(str::trim)
                .filter(|s| !s.is_empty())
                .ok_or(TableReadError::Row(RowError {
                    row,
                    kind: RowErrorKind::MissingField { field: name },
                }))
        };
        let bad_number = |name: &'static str, value: &str| {
            TableReadError::Row(RowError {
                row,
                kind: RowErrorKind::InvalidNumber {
                    field: name,
                    value: value.to_string(),
                },
            })
        };
        let customer_id = field(id_col, "customer_id")?.to_string();
        let text = field(n_col, "customer_n")?;
        let customer_n = text.parse::<u32>().map_err(|_| bad_number("customer_n", text))?;
        let text = field(count_col, "session_count")?;
        let session_count = text
            .parse::<usize>()
            .map_err(|_| bad_number("session_count", text))?;
        let parse_f = |idx: usize, name: &'static str| -> Result<f64, TableReadError> {
            let text = field(idx, name)?;
            text.parse::<f64>().map_err(|_| bad_number(name, text))
        };
        let rank_mean = parse_f(mean_col, "rank_mean")?;
        let rank_stddev = parse_f(stddev_col, "rank_stddev")?;
        let rank_cv = parse_f(cv_col, "rank_cv")?;
        let fallback_used = match field(fb_col, "fallback_used")? {
            "true" => true,
            "false" => false,
            other => {
                return Err(TableReadError::Row(RowError {
                    row,
                    kind: RowErrorKind::InvalidRow {
                        detail: format!("fallback_used must be true or false, got `{other}`"),
                    },
                }))
            }
        };
        out.insert(
            customer_id.clone(),
            CustomerProfile {
                customer_id,
                customer_n,
                session_count,
                session_max_ranks: Vec::new(),
                rank_mean,
                rank_stddev,
                rank_cv,
                fallback_used,
            },
        );
    }
    Ok(out)
}

pub fn read_profiles(path: &Path) -> Result<BTreeMap<String, CustomerProfile>, IngestError> {
    let reader = open_buffered(path)?;
    read_profiles_from_reader(reader).map_err(|e| attach_path(e, path))
}

/// JSON export keeps the full profile, per-session rank list included.
pub fn write_profiles_json(
    path: &Path,
    profiles: &BTreeMap<String, CustomerProfile>,
) -> io::Result<()> {
    let ordered: Vec<&CustomerProfile> = profiles.values().collect();
    let mut bytes = serde_json::to_vec_pretty(&ordered)?;
    bytes.push(b'\n');
    atomic_write(path, &bytes)
}

pub fn read_profiles_json(path: &Path) -> Result<BTreeMap<String, CustomerProfile>, IngestError> {
    let reader = open_buffered(path)?;
    let list: Vec<CustomerProfile> =
        serde_json::from_reader(reader).map_err(|e| IngestError::FormatMismatch {
            path: path.display().to_string(),
            detail: e.to_string(),
        })?;
    Ok(list.into_iter().map(|p| (p.customer_id.clone(), p)).collect())
}

/// Profile loader that dispatches on the file extension: `.json` exports
/// next to the default CSV interchange.
pub fn read_profiles_auto(path: &Path) -> Result<BTreeMap<String, CustomerProfile>, IngestError> {
    let is_json = path
        .extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| e.eq_ignore_ascii_case("json"));
    if is_json {
        read_profiles_json(path)
    } else {
        read_profiles(path)
    }
}

pub fn write_segment_n_csv(path: &Path, segment_n: &BTreeMap<String, u32>) -> io::Result<()> {
    let bytes = csv_bytes(|w| {
        w.write_record(["segment", "segment_n"])?;
        for (label, n) in segment_n {
            w.write_record([label.as_str(), &n.to_string()])?;
        }
        Ok(())
    })?;
    atomic_write(path, &bytes)
}

pub fn read_segment_n_from_reader<R: Read>(
    reader: R,
) -> Result<BTreeMap<String, u32>, TableReadError> {
    let mut rdr = csv::ReaderBuilder::new().flexible(true).from_reader(reader);
    let headers = rdr
        .headers()
        .map_err(|e| TableReadError::Format(e.to_string()))?
        .clone();
    let label_col = need_col(&headers, "segment")?;
    let n_col = need_col(&headers, "segment_n")?;
    let mut out = BTreeMap::new();
    let mut record = csv::StringRecord::new();
    loop {
        match rdr.read_record(&mut record) {
            Ok(false) => break,
            Ok(true) => {}
            Err(e) => return Err(csv_row_error(e)),
        }
        let row = record_row(&record);
        let label = record.get(label_col).map(str::trim).unwrap_or("");
        if label.is_empty() {
            return Err(TableReadError::Row(RowError {
                row,
                kind: RowErrorKind::EmptyKey { field: "segment" },
            }));
        }
        let text = record.get(n_col).map(str::trim).unwrap_or("");
        let n = text.parse::<u32>().map_err(|_| {
            TableReadError::Row(RowError {
                row,
                kind: RowErrorKind::InvalidNumber {
                    field: "segment_n",
                    value: text.to_string(),
                },
            })
        })?;
        out.insert(label.to_string(), n);
    }
    Ok(out)
}

pub fn read_segment_n(path: &Path) -> Result<BTreeMap<String, u32>, IngestError> {
    let reader = open_buffered(path)?;
    read_segment_n_from_reader(reader).map_err(|e| attach_path(e, path))
}

#[derive(Serialize)]
struct RankedListLine<'a> {
    customer_id: &'a str,
    items: &'a [String],
}

pub fn write_ranked_lists_jsonl(
    path: &Path,
    lists: &BTreeMap<String, RankedList>,
) -> io::Result<()> {
    let mut bytes = Vec::new();
    for list in lists.values() {
        let line = serde_json::to_string(&RankedListLine {
            customer_id: &list.customer_id,
            items: &list.items,
        })?;
        bytes.extend_from_slice(line.as_bytes());
        bytes.push(b'\n');
    }
    atomic_write(path, &bytes)
}

#[derive(Serialize)]
struct EvalReportFile<'a> {
    #[serde(flatten)]
    report: &'a AggregateReport,
    config: &'a serde_json::Value,
}

/// JSON report: the aggregate plus the effective configuration, so a
/// figure can be reproduced from its own metadata.
pub fn write_eval_report_json(
    path: &Path,
    report: &AggregateReport,
    config: &serde_json::Value,
) -> io::Result<()> {
    let mut bytes = serde_json::to_vec_pretty(&EvalReportFile { report, config })?;
    bytes.push(b'\n');
    atomic_write(path, &bytes)
}

pub fn write_eval_report_csv(path: &Path, report: &AggregateReport) -> io::Result<()> {
    let bytes = csv_bytes(|w| {
        w.write_record(["customer_id", "metric", "mode", "cutoff_used", "value", "relevant_count"])?;
        let mode = report.mode.to_string();
        for r in &report.per_customer {
            w.write_record([
                r.customer_id.as_str(),
                r.metric.as_str(),
                mode.as_str(),
                &r.cutoff_used.to_string(),
                &r.value.to_string(),
                &r.relevant_count.to_string(),
            ])?;
        }
        Ok(())
    })?;
    atomic_write(path, &bytes)
}

pub fn write_histogram_csv(path: &Path, histogram: &Histogram) -> io::Result<()> {
    let bytes = csv_bytes(|w| {
        w.write_record(["bucket_lo", "bucket_hi", "count"])?;
        for (i, count) in histogram.counts.iter().enumerate() {
            w.write_record([
                histogram.bucket_edges[i].to_string(),
                histogram.bucket_edges[i + 1].to_string(),
                count.to_string(),
            ])?;
        }
        Ok(())
    })?;
    atomic_write(path, &bytes)
}

/// Bucketed quartile series. Empty buckets leave the quartile cells
/// blank rather than inventing zeros.
pub fn write_series_csv(path: &Path, series: &BucketedSeries, with_variance: bool) -> io::Result<()> {
    let bytes = csv_bytes(|w| {
        let mut header = vec!["bucket_lo", "bucket_hi", "count", "q1", "median", "q3"];
        if with_variance {
            header.extend(["q1_variance", "median_variance", "q3_variance"]);
        }
        w.write_record(&header)?;
        for (i, bucket) in series.buckets.iter().enumerate() {
            let mut row = vec![
                series.bucket_edges[i].to_string(),
                series.bucket_edges[i + 1].to_string(),
                bucket.count.to_string(),
            ];
            match bucket.y {
                Some(q) => row.extend([q.q1.to_string(), q.median.to_string(), q.q3.to_string()]),
                None => row.extend([String::new(), String::new(), String::new()]),
            }
            if with_variance {
                match bucket.y_variance {
                    Some(q) => {
                        row.extend([q.q1.to_string(), q.median.to_string(), q.q3.to_string()])
                    }
                    None => row.extend([String::new(), String::new(), String::new()]),
                }
            }
            w.write_record(&row)?;
        }
        Ok(())
    })?;
    atomic_write(path, &bytes)
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct ComparisonRow {
    pub metric: MetricKind,
    pub static_mean: f64,
    pub customer_mean: f64,
}

/// Side-by-side static versus per-customer means, one row per metric.
pub fn write_comparison_csv(path: &Path, rows: &[ComparisonRow]) -> io::Result<()> {
    let bytes = csv_bytes(|w| {
        w.write_record(["metric", "static_mean", "customer_mean", "delta"])?;
        for r in rows {
            w.write_record([
                r.metric.as_str(),
                &r.static_mean.to_string(),
                &r.customer_mean.to_string(),
                &(r.customer_mean - r.static_mean).to_string(),
            ])?;
        }
        Ok(())
    })?;
    atomic_write(path, &bytes)
}

pub fn write_json_value(path: &Path, value: &serde_json::Value) -> io::Result<()> {
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    atomic_write(path, &bytes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cohort::{cv_vs_median, dispersion_vs_median, n_distribution, profile_from_ranks, CohortOptions};
    use crate::event::InteractionKind;
    use crate::ingest::{read_impressions, read_interactions, read_ranked_lists, read_segments, IngestOptions};
    use crate::metrics::{PerCustomerResult, ReportMode};

    fn tmpdir() -> tempfile::TempDir {
        tempfile::tempdir().unwrap()
    }

    #[test]
    fn population_files_round_trip_through_ingest() {
        let dir = tmpdir();
        let impressions = vec![
            ImpressionEvent {
                customer_id: "c1".into(),
                session_id: Some("s0".into()),
                timestamp: 1000,
                item_id: "i1".into(),
                rank: 1,
            },
            ImpressionEvent {
                customer_id: "c1".into(),
                session_id: None,
                timestamp: 2000,
                item_id: "i2".into(),
                rank: 2,
            },
        ];
        let interactions = vec![InteractionEvent {
            customer_id: "c1".into(),
            item_id: "i2".into(),
            timestamp: 2500,
            kind: InteractionKind::Conversion,
        }];
        let segments: BTreeMap<String, String> = [("c1".to_string(), "segA".to_string())].into();

        let imp_path = dir.path().join("impressions.csv");
        let int_path = dir.path().join("interactions.csv");
        let seg_path = dir.path().join("segments.csv");
        write_impressions_csv(&imp_path, &impressions).unwrap();
        write_interactions_csv(&int_path, &interactions).unwrap();
        write_segments_csv(&seg_path, &segments).unwrap();

        let opts = IngestOptions { strict: true, dedup: false };
        let batch = read_impressions(&imp_path, opts).unwrap();
        assert_eq!(batch.events, impressions);
        let batch = read_interactions(&int_path, opts).unwrap();
        assert_eq!(batch.events, interactions);
        let (got_segments, errors) = read_segments(&seg_path, true).unwrap();
        assert!(errors.is_empty());
        assert_eq!(got_segments, segments);
    }

    #[test]
    fn profiles_round_trip_except_the_rank_list() {
        let dir = tmpdir();
        let mut profiles = BTreeMap::new();
        for (id, ranks) in [("a", vec![2u32, 8, 14, 20]), ("b", vec![5, 5, 5])] {
            profiles.insert(id.to_string(), profile_from_ranks(id, &ranks));
        }
        profiles.get_mut("b").unwrap().fallback_used = true;
        let path = dir.path().join("profiles.csv");
        write_profiles_csv(&path, &profiles).unwrap();
        let got = read_profiles(&path).unwrap();
        assert_eq!(got.len(), 2);
        for (id, original) in &profiles {
            let loaded = &got[id];
            assert_eq!(loaded.customer_n, original.customer_n);
            assert_eq!(loaded.session_count, original.session_count);
            assert_eq!(loaded.rank_mean, original.rank_mean);
            assert_eq!(loaded.rank_stddev, original.rank_stddev);
            assert_eq!(loaded.rank_cv, original.rank_cv);
            assert_eq!(loaded.fallback_used, original.fallback_used);
            assert!(loaded.session_max_ranks.is_empty());
        }
    }

    #[test]
    fn json_profiles_keep_the_rank_list() {
        let dir = tmpdir();
        let mut profiles = BTreeMap::new();
        profiles.insert("a".to_string(), profile_from_ranks("a", &[2, 8, 14, 20]));
        let path = dir.path().join("profiles.json");
        write_profiles_json(&path, &profiles).unwrap();
        let got = read_profiles_auto(&path).unwrap();
        assert_eq!(got, profiles);
    }

    #[test]
    fn profile_reader_rejects_bad_rows() {
        let text = "customer_id,customer_n,session_count,rank_mean,rank_stddev,rank_cv,fallback_used\nc1,notanumber,3,1.0,0.0,0.0,false\n";
        let err = read_profiles_from_reader(text.as_bytes()).unwrap_err();
        assert!(matches!(err, TableReadError::Row(_)));

        let text = "customer_id,customer_n\nc1,5\n";
        let err = read_profiles_from_reader(text.as_bytes()).unwrap_err();
        assert!(matches!(err, TableReadError::Format(_)));

        let text = "customer_id,customer_n,session_count,rank_mean,rank_stddev,rank_cv,fallback_used\nc1,5,3,1.0,0.0,0.0,maybe\n";
        let err = read_profiles_from_reader(text.as_bytes()).unwrap_err();
        assert!(err.to_string().contains("fallback_used"));
    }

    #[test]
    fn segment_n_round_trips() {
        let dir = tmpdir();
        let map: BTreeMap<String, u32> = [("A".to_string(), 3), ("B".to_string(), 20)].into();
        let path = dir.path().join("segment_n.csv");
        write_segment_n_csv(&path, &map).unwrap();
        assert_eq!(read_segment_n(&path).unwrap(), map);

        let err = read_segment_n_from_reader("segment,segment_n\n,4\n".as_bytes()).unwrap_err();
        assert!(matches!(err, TableReadError::Row(_)));
    }

    #[test]
    fn ranked_lists_round_trip() {
        let dir = tmpdir();
        let mut lists = BTreeMap::new();
        for (id, items) in [("c1", vec!["a", "b"]), ("c2", vec!["x"])] {
            lists.insert(
                id.to_string(),
                RankedList::new(id.to_string(), items.iter().map(|s| s.to_string()).collect())
                    .unwrap(),
            );
        }
        let path = dir.path().join("lists.jsonl");
        write_ranked_lists_jsonl(&path, &lists).unwrap();
        let (got, errors) = read_ranked_lists(&path, true).unwrap();
        assert!(errors.is_empty());
        assert_eq!(got, lists);
    }

    #[test]
    fn writers_are_byte_stable() {
        let dir = tmpdir();
        let mut profiles = BTreeMap::new();
        profiles.insert("a".to_string(), profile_from_ranks("a", &[3, 9, 27]));
        let p1 = dir.path().join("one.csv");
        let p2 = dir.path().join("two.csv");
        write_profiles_csv(&p1, &profiles).unwrap();
        write_profiles_csv(&p2, &profiles).unwrap();
        assert_eq!(std::fs::read(&p1).unwrap(), std::fs::read(&p2).unwrap());
    }

    #[test]
    fn atomic_write_replaces_existing_content() {
        let dir = tmpdir();
        let path = dir.path().join("out.txt");
        atomic_write(&path, b"first").unwrap();
        atomic_write(&path, b"second").unwrap();
        assert_eq!(std::fs::read(&path).unwrap(), b"second");
        // No stray temp files left behind.
        let residue: Vec<_> = std::fs::read_dir(dir.path())
            .unwrap()
            .filter(|e| e.as_ref().unwrap().file_name() != "out.txt")
            .collect();
        assert!(residue.is_empty());
    }

    #[test]
    fn eval_report_json_embeds_the_config() {
        let dir = tmpdir();
        let report = AggregateReport {
            metric: MetricKind::Recall,
            mode: ReportMode::StaticN,
            mean_value: 0.5,
            customer_count: 1,
            per_customer: vec![PerCustomerResult {
                customer_id: "c1".into(),
                metric: MetricKind::Recall,
                cutoff_used: 5,
                value: 0.5,
                relevant_count: 2,
            }],
        };
        let config = serde_json::json!({"static_n": 5, "window_days": 90});
        let path = dir.path().join("recall.json");
        write_eval_report_json(&path, &report, &config).unwrap();
        let parsed: serde_json::Value =
            serde_json::from_slice(&std::fs::read(&path).unwrap()).unwrap();
        assert_eq!(parsed["metric"], "recall");
        assert_eq!(parsed["mean_value"], 0.5);
        assert_eq!(parsed["config"]["window_days"], 90);
        assert_eq!(parsed["per_customer"][0]["customer_id"], "c1");

        let csv_path = dir.path().join("recall.csv");
        write_eval_report_csv(&csv_path, &report).unwrap();
        let text = std::fs::read_to_string(&csv_path).unwrap();
        assert!(text.starts_with("customer_id,metric,mode,cutoff_used,value,relevant_count\n"));
        assert!(text.contains("c1,recall,static_n,5,0.5,2"));
    }

    #[test]
    fn cohort_csvs_have_one_row_per_bucket() {
        let mut profiles = BTreeMap::new();
        for (i, ranks) in [vec![2u32, 8, 14], vec![5, 15], vec![20, 20, 26]].iter().enumerate() {
            let id = format!("c{i}");
            profiles.insert(id.clone(), profile_from_ranks(&id, ranks));
        }
        let opts = CohortOptions { bucket_count: 4, ..Default::default() };
        let dir = tmpdir();

        let hist = n_distribution(&profiles, &opts).unwrap();
        let path = dir.path().join("hist.csv");
        write_histogram_csv(&path, &hist).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text.lines().count(), 5);
        assert!(text.starts_with("bucket_lo,bucket_hi,count\n"));

        let disp = dispersion_vs_median(&profiles, &opts).unwrap();
        let path = dir.path().join("disp.csv");
        write_series_csv(&path, &disp, true).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("bucket_lo,bucket_hi,count,q1,median,q3,q1_variance,median_variance,q3_variance\n"));
        assert_eq!(text.lines().count(), 5);
        // Empty buckets leave blank quartile cells.
        assert!(text.lines().any(|l| l.ends_with(",0,,,,,,")));

        let cv = cv_vs_median(&profiles, &opts).unwrap();
        let path = dir.path().join("cv.csv");
        write_series_csv(&path, &cv, false).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("bucket_lo,bucket_hi,count,q1,median,q3\n"));
    }

    #[test]
    fn comparison_rows_compute_the_delta() {
        let dir = tmpdir();
        let path = dir.path().join("compare.csv");
        write_comparison_csv(
            &path,
            &[ComparisonRow {
                metric: MetricKind::Ndcg,
                static_mean: 0.25,
                customer_mean: 0.75,
            }],
        )
        .unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.contains("ndcg,0.25,0.75,0.5"));
    }
}
