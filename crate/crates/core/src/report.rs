//! Metrics files: writing, parsing, smoothing and summaries.
//!
//! The metrics CSV has the fixed header `epoch,return,task_length,mean_kl,zeta_bas`.
//! Undefined values (no finished episode, no prior) are written as `NaN`.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agent::EpochMetrics;

pub const METRICS_HEADER: [&str; 5] = ["epoch", "return", "task_length", "mean_kl", "zeta_bas"];
/// Weight on the previous smoothed value.
pub const SMOOTHING: f64 = 0.9;

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("unexpected metrics header {0:?}")]
    Header(Vec<String>),
    #[error("row {row}: expected epoch {expected}, found {found}")]
    EpochOrder { row: usize, expected: usize, found: usize },
    #[error("no metrics rows")]
    Empty,
}

pub fn write_metrics<W: Write>(w: W, rows: &[EpochMetrics]) -> Result<(), ReportError> {
    write_records(w, rows)
}

/// Writes any serializable records as CSV with a header row.
pub fn write_records<W: Write, T: Serialize>(w: W, rows: &[T]) -> Result<(), ReportError> {
    let mut wr = csv::Writer::from_writer(w);
    for r in rows {
        wr.serialize(r)?;
    }
    wr.flush().map_err(csv::Error::from)?;
    Ok(())
}

/// Parses a metrics CSV. The header must match exactly and epochs must
/// count up from 1.
pub fn read_metrics<R: Read>(r: R) -> Result<Vec<EpochMetrics>, ReportError> {
    let mut rd = csv::Reader::from_reader(r);
    let header: Vec<String> = rd.headers()?.iter().map(str::to_string).collect();
    if header != METRICS_HEADER {
        return Err(ReportError::Header(header));
    }
    let mut out = Vec::new();
    for (i, row) in rd.deserialize::<EpochMetrics>().enumerate() {
        let row = row?;
        if row.epoch != i + 1 {
            return Err(ReportError::EpochOrder { row: i + 1, expected: i + 1, found: row.epoch });
        }
        out.push(row);
    }
    Ok(out)
}

/// `s_0 = x_0`, `s_t = w s_{t-1} + (1 - w) x_t`. NaN inputs carry the
/// previous smoothed value forward.
pub fn smooth(xs: &[f64], weight: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(xs.len());
    let mut s = f64::NAN;
    for &x in xs {
        if s.is_nan() {
            s = x;
        } else if !x.is_nan() {
            s = weight * s + (1.0 - weight) * x;
        }
        out.push(s);
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExportRow {
    pub epoch: usize,
    #[serde(rename = "return")]
    pub total_return: f64,
    pub return_smoothed: f64,
    pub task_length: f64,
    pub task_length_smoothed: f64,
    pub mean_kl: f64,
    pub mean_kl_smoothed: f64,
    pub zeta_bas: f64,
    pub zeta_bas_smoothed: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub epochs: usize,
    pub mean_return: f64,
    pub best_return: f64,
    pub best_epoch: usize,
    pub final_return: f64,
    pub final_return_smoothed: f64,
    pub final_task_length: Option<f64>,
    pub final_mean_kl: Option<f64>,
    pub final_zeta_bas: f64,
}

fn finite(x: f64) -> Option<f64> {
    x.is_finite().then_some(x)
}

/// Adds smoothed companion columns and a summary.
pub fn export(rows: &[EpochMetrics]) -> Result<(Vec<ExportRow>, Summary), ReportError> {
    let last = rows.last().ok_or(ReportError::Empty)?;
    let col = |f: fn(&EpochMetrics) -> f64| smooth(&rows.iter().map(f).collect::<Vec<_>>(), SMOOTHING);
    let ret = col(|m| m.total_return);
    let len = col(|m| m.task_length);
    let kl = col(|m| m.mean_kl);
    let zeta = col(|m| m.zeta_bas);
    let out: Vec<ExportRow> = rows
        .iter()
        .enumerate()
        .map(|(i, m)| ExportRow {
            epoch: m.epoch,
            total_return: m.total_return,
            return_smoothed: ret[i],
            task_length: m.task_length,
            task_length_smoothed: len[i],
            mean_kl: m.mean_kl,
            mean_kl_smoothed: kl[i],
            zeta_bas: m.zeta_bas,
            zeta_bas_smoothed: zeta[i],
        })
        .collect();
    let best = rows.iter().max_by(|a, b| a.total_return.total_cmp(&b.total_return)).expect("nonempty");
    let summary = Summary {
        epochs: rows.len(),
        mean_return: rows.iter().map(|m| m.total_return).sum::<f64>() / rows.len() as f64,
        best_return: best.total_return,
        best_epoch: best.epoch,
        final_return: last.total_return,
        final_return_smoothed: ret[rows.len() - 1],
        final_task_length: finite(last.task_length),
        final_mean_kl: finite(last.mean_kl),
        final_zeta_bas: last.zeta_bas,
    };
    Ok((out, summary))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn row(epoch: usize, r: f64) -> EpochMetrics {
        EpochMetrics { epoch, total_return: r, task_length: f64::NAN, mean_kl: 0.5, zeta_bas: 1.0 }
    }

    #[test]
    fn smoothing_examples() {
        assert_eq!(smooth(&[3.0], 0.9), vec![3.0]);
        assert_eq!(smooth(&[2.0; 5], 0.9), vec![2.0; 5]);
        let s = smooth(&[0.0, 1.0], 0.9);
        assert!((s[1] - 0.1).abs() < 1e-15);
        let s = smooth(&[f64::NAN, 4.0, f64::NAN, 5.0], 0.9);
        assert!(s[0].is_nan());
        assert_eq!(&s[1..3], &[4.0, 4.0]);
        assert!((s[3] - 4.1).abs() < 1e-12);
    }

    #[test]
    fn csv_round_trip_keeps_nan_and_order() {
        let rows = vec![row(1, -3.5), row(2, 1e-300), row(3, 7.0)];
        let mut buf = Vec::new();
        write_metrics(&mut buf, &rows).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("epoch,return,task_length,mean_kl,zeta_bas\n"));
        let back = read_metrics(&buf[..]).unwrap();
        assert_eq!(back.len(), 3);
        for (a, b) in rows.iter().zip(&back) {
            assert_eq!(a.total_return, b.total_return);
            assert!(b.task_length.is_nan());
        }
    }

    #[test]
    fn malformed_input_is_rejected() {
        assert!(matches!(read_metrics("a,b\n1,2\n".as_bytes()), Err(ReportError::Header(_))));
        assert!(matches!(
            read_metrics("epoch,return,task_length,mean_kl,zeta_bas\n2,1,1,1,1\n".as_bytes()),
            Err(ReportError::EpochOrder { found: 2, .. })
        ));
        assert!(read_metrics("epoch,return,task_length,mean_kl,zeta_bas\n1,x,1,1,1\n".as_bytes()).is_err());
        assert!(matches!(export(&[]), Err(ReportError::Empty)));
    }

    #[test]
    fn export_single_epoch_is_raw() {
        let (rows, s) = export(&[row(1, 42.0)]).unwrap();
        assert_eq!(rows[0].return_smoothed, 42.0);
        assert_eq!(s.final_return_smoothed, 42.0);
        assert_eq!(s.best_epoch, 1);
        assert!(s.final_task_length.is_none());
    }

    proptest! {
        #[test]
        fn smoothed_stays_within_range(xs in proptest::collection::vec(-1e3f64..1e3, 1..40)) {
            let s = smooth(&xs, SMOOTHING);
            let lo = xs.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            prop_assert!(s.iter().all(|v| *v >= lo - 1e-9 && *v <= hi + 1e-9));
        }
    }
}
