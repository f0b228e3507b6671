//! Aggregation of raw episode records into tables and curves. Aggregates
//! are always recomputed from the per-episode results, never read back from
//! earlier reports, so reporting is idempotent and order-independent.

use crate::eval::{
    spl, success_rate, CameraMode, EpisodeRecord, EpisodeResult, SweepBucket, SweepParameter,
};
use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("failed to read {path}: {source}")]
    Read {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: malformed episode record: {source}")]
    Malformed {
        path: String,
        line: usize,
        #[source]
        source: serde_json::Error,
    },
}

/// Parses a JSON-lines results file, one episode record per line. Blank
/// lines are tolerated; anything else malformed is an error naming the
/// line.
pub fn read_records(path: &Path) -> Result<Vec<EpisodeRecord>, ReportError> {
    let text = std::fs::read_to_string(path)
        .map_err(|source| ReportError::Read { path: path.display().to_string(), source })?;
    let mut records = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let record = serde_json::from_str(line).map_err(|source| ReportError::Malformed {
            path: path.display().to_string(),
            line: idx + 1,
            source,
        })?;
        records.push(record);
    }
    Ok(records)
}

/// Serializes records as JSON lines.
pub fn records_to_jsonl(records: &[EpisodeRecord]) -> String {
    let mut out = String::new();
    for record in records {
        out.push_str(&serde_json::to_string(record).expect("record serializes"));
        out.push('\n');
    }
    out
}

/// Number of episodes that could not run.
pub fn invalid_count(records: &[EpisodeRecord]) -> usize {
    records.iter().filter(|r| r.invalid.is_some()).count()
}

/// Grouping dimensions for aggregate tables.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GroupKey {
    Task,
    Init,
    Camera,
    Controller,
}

pub const ALL_GROUP_KEYS: [GroupKey; 4] =
    [GroupKey::Task, GroupKey::Init, GroupKey::Camera, GroupKey::Controller];

/// One aggregate table row. Columns not grouped on read "all".
#[derive(Debug, Clone, PartialEq)]
pub struct AggregateRow {
    pub task: String,
    pub init: String,
    pub camera_mode: String,
    pub controller: String,
    pub sr: f64,
    pub spl: f64,
    /// Valid episodes in the group.
    pub n: usize,
    pub mean_steps: f64,
    pub mean_collisions: f64,
}

/// Groups valid episodes by the requested keys and recomputes SR/SPL and
/// means per group. Rows come out sorted by their label tuple, so the
/// table is independent of record order.
pub fn aggregate_by(records: &[EpisodeRecord], keys: &[GroupKey]) -> Vec<AggregateRow> {
    let label = |key: GroupKey, record: &EpisodeRecord| -> String {
        if !keys.contains(&key) {
            return "all".to_string();
        }
        match key {
            GroupKey::Task => record.config.task.kind().label().to_string(),
            GroupKey::Init => record.config.init.label().to_string(),
            GroupKey::Camera => record.config.camera_mode.label(),
            GroupKey::Controller => record.config.controller.label().to_string(),
        }
    };
    let mut groups: BTreeMap<[String; 4], Vec<EpisodeResult>> = BTreeMap::new();
    for record in records {
        let Some(result) = record.result else { continue };
        let key = [
            label(GroupKey::Task, record),
            label(GroupKey::Init, record),
            label(GroupKey::Camera, record),
            label(GroupKey::Controller, record),
        ];
        groups.entry(key).or_default().push(result);
    }
    groups
        .into_iter()
        .map(|([task, init, camera_mode, controller], results)| {
            let n = results.len();
            AggregateRow {
                task,
                init,
                camera_mode,
                controller,
                sr: success_rate(&results),
                spl: spl(&results),
                n,
                mean_steps: results.iter().map(|r| r.steps as f64).sum::<f64>() / n as f64,
                mean_collisions: results.iter().map(|r| r.collisions as f64).sum::<f64>()
                    / n as f64,
            }
        })
        .collect()
}

/// Full four-way grouping.
pub fn aggregate(records: &[EpisodeRecord]) -> Vec<AggregateRow> {
    aggregate_by(records, &ALL_GROUP_KEYS)
}

/// Stable CSV rendering: rates to 4 decimals, means to 2.
pub fn aggregate_csv(rows: &[AggregateRow]) -> String {
    let mut out = String::from("task,init,camera_mode,controller,sr,spl,n,mean_steps,mean_collisions\n");
    for row in rows {
        writeln!(
            out,
            "{},{},{},{},{:.4},{:.4},{},{:.2},{:.2}",
            row.task,
            row.init,
            row.camera_mode,
            row.controller,
            row.sr,
            row.spl,
            row.n,
            row.mean_steps,
            row.mean_collisions
        )
        .expect("string write");
    }
    out
}

/// Markdown table with the same columns and formatting as the CSV.
pub fn aggregate_markdown(rows: &[AggregateRow]) -> String {
    let mut out = String::from(
        "| task | init | camera_mode | controller | sr | spl | n | mean_steps | mean_collisions |\n\
         |---|---|---|---|---|---|---|---|---|\n",
    );
    for row in rows {
        writeln!(
            out,
            "| {} | {} | {} | {} | {:.4} | {:.4} | {} | {:.2} | {:.2} |",
            row.task,
            row.init,
            row.camera_mode,
            row.controller,
            row.sr,
            row.spl,
            row.n,
            row.mean_steps,
            row.mean_collisions
        )
        .expect("string write");
    }
    out
}

/// Width of the init-distance histogram buckets, meters.
pub const INIT_DISTANCE_BUCKET_M: f64 = 0.5;
/// Centered window used to smooth bucketed success curves.
pub const SMOOTHING_WINDOW: usize = 3;

/// One success-rate bucket over a scalar axis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurveBucket {
    /// Inclusive lower edge of the bucket.
    pub lo: f64,
    pub successes: usize,
    pub n: usize,
}

impl CurveBucket {
    pub fn sr(&self) -> f64 {
        assert!(self.n > 0, "success rate of an empty bucket");
        self.successes as f64 / self.n as f64
    }
}

/// Bins the valid off-trajectory episodes by init distance into dense
/// 0.5 m buckets from zero to the largest observed distance. Buckets
/// nothing landed in have n = 0.
pub fn init_distance_buckets(records: &[EpisodeRecord]) -> Vec<CurveBucket> {
    let offs: Vec<&EpisodeRecord> = records
        .iter()
        .filter(|r| r.result.is_some() && r.config.init == crate::eval::Init::Off)
        .collect();
    let Some(max_distance) = offs
        .iter()
        .map(|r| r.result.as_ref().unwrap().init_distance)
        .max_by(f64::total_cmp)
    else {
        return Vec::new();
    };
    let n_buckets = (max_distance / INIT_DISTANCE_BUCKET_M).floor() as usize + 1;
    let mut buckets: Vec<CurveBucket> = (0..n_buckets)
        .map(|i| CurveBucket { lo: i as f64 * INIT_DISTANCE_BUCKET_M, successes: 0, n: 0 })
        .collect();
    for record in offs {
        let result = record.result.as_ref().unwrap();
        let idx = ((result.init_distance / INIT_DISTANCE_BUCKET_M).floor() as usize)
            .min(n_buckets - 1);
        buckets[idx].n += 1;
        if result.success {
            buckets[idx].successes += 1;
        }
    }
    buckets
}

/// Pools each bucket with its neighbors over a centered odd-width window
/// (shrunk at the edges), so sparse buckets borrow statistics from their
/// neighborhood instead of reporting noisy rates.
pub fn smooth_buckets(buckets: &[CurveBucket], window: usize) -> Vec<CurveBucket> {
    assert!(window >= 1 && window % 2 == 1, "window must be odd");
    let half = window / 2;
    buckets
        .iter()
        .enumerate()
        .map(|(i, bucket)| {
            let lo_idx = i.saturating_sub(half);
            let hi_idx = (i + half).min(buckets.len().saturating_sub(1));
            let pooled = &buckets[lo_idx..=hi_idx];
            CurveBucket {
                lo: bucket.lo,
                successes: pooled.iter().map(|b| b.successes).sum(),
                n: pooled.iter().map(|b| b.n).sum(),
            }
        })
        .collect()
}

/// CSV series of the non-empty buckets: lower edge, upper edge, rate, n.
pub fn curve_csv(buckets: &[CurveBucket]) -> String {
    let mut out = String::from("bucket_lo,bucket_hi,sr,n\n");
    for bucket in buckets.iter().filter(|b| b.n > 0) {
        writeln!(
            out,
            "{:.2},{:.2},{:.4},{}",
            bucket.lo,
            bucket.lo + INIT_DISTANCE_BUCKET_M,
            bucket.sr(),
            bucket.n
        )
        .expect("string write");
    }
    out
}

/// One mismatch-sweep point; the magnitude stays in the parameter's
/// native units.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MismatchPoint {
    pub magnitude: f64,
    pub sr: f64,
    pub spl: f64,
    pub n: usize,
}

/// SR per sweep magnitude, recomputed from the raw records.
pub fn mismatch_points(buckets: &[SweepBucket]) -> Vec<MismatchPoint> {
    buckets
        .iter()
        .map(|bucket| {
            let results = crate::eval::valid_results(&bucket.records);
            MismatchPoint {
                magnitude: bucket.magnitude,
                sr: success_rate(&results),
                spl: spl(&results),
                n: results.len(),
            }
        })
        .collect()
}

/// Reconstructs per-magnitude sweep buckets from a mixed record stream by
/// grouping sweep-mode episodes on (parameter, absolute magnitude). Bucket
/// magnitudes come out ascending.
pub fn sweep_buckets_by_parameter(
    records: &[EpisodeRecord],
) -> Vec<(SweepParameter, Vec<SweepBucket>)> {
    // For non-negative floats the bit pattern orders like the value, so it
    // can serve as an exact map key.
    let mut by_param: BTreeMap<SweepParameter, BTreeMap<u64, SweepBucket>> = BTreeMap::new();
    for record in records {
        let CameraMode::Sweep { parameter, magnitude } = record.config.camera_mode else {
            continue;
        };
        let magnitude = magnitude.abs();
        by_param
            .entry(parameter)
            .or_default()
            .entry(magnitude.to_bits())
            .or_insert_with(|| SweepBucket { magnitude, records: Vec::new() })
            .records
            .push(record.clone());
    }
    by_param
        .into_iter()
        .map(|(parameter, buckets)| (parameter, buckets.into_values().collect()))
        .collect()
}

/// CSV series over sweep magnitudes (printed in the given display units).
pub fn mismatch_csv(points: &[MismatchPoint]) -> String {
    let mut out = String::from("magnitude,sr,spl,n\n");
    for point in points {
        writeln!(out, "{:.4},{:.4},{:.4},{}", point.magnitude, point.sr, point.spl, point.n)
            .expect("string write");
    }
    out
}
