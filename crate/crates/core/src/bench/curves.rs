use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use super::{BenchError, EvalRecord};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub t_seconds: f64,
    pub solved_cumulative: usize,
}

/// Pairs solved by each bucket edge `k·bucket_s`, for `k = 1..` up to the
/// first edge at or beyond `horizon_s`. With no horizon the curve ends at
/// the latest first-solution time, and always has at least one point.
pub fn aggregate_curves(records: &[EvalRecord], bucket_s: f64, horizon_s: Option<f64>) -> Vec<CurvePoint> {
    assert!(bucket_s > 0.0 && bucket_s.is_finite(), "bucket width must be positive");
    let mut times: Vec<f64> = records
        .iter()
        .filter(|r| r.solved)
        .filter_map(|r| r.first_ms)
        .map(|ms| ms / 1e3)
        .collect();
    times.sort_by(f64::total_cmp);
    let end = horizon_s.unwrap_or_else(|| times.last().copied().unwrap_or(0.0));
    let buckets = ((end / bucket_s).ceil() as usize).max(1);
    let mut solved = 0;
    (1..=buckets)
        .map(|k| {
            let edge = k as f64 * bucket_s;
            while solved < times.len() && times[solved] <= edge {
                solved += 1;
            }
            CurvePoint {
                t_seconds: edge,
                solved_cumulative: solved,
            }
        })
        .collect()
}

pub fn write_curves<W: Write>(out: W, points: &[CurvePoint]) -> Result<(), BenchError> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
    w.write_record(["t_seconds", "solved_cumulative"])?;
    for p in points {
        w.serialize(p)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_curves<R: Read>(input: R) -> Result<Vec<CurvePoint>, BenchError> {
    let mut r = csv::Reader::from_reader(input);
    Ok(r.deserialize().collect::<Result<Vec<CurvePoint>, _>>()?)
}
