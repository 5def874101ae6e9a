//! Metrics tables, CSV emission with locale-independent 17-significant-
//! digit formatting, and the normalized mean squared error of the
//! Bellman-residual predictor.

use std::collections::VecDeque;
use std::path::Path;

use crate::HarnessError;

/// A fixed-header table of optional values; blanks encode undefined
/// entries (e.g. NMSE before the window fills).
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsTable {
    header: Vec<String>,
    rows: Vec<Vec<Option<f64>>>,
}

impl MetricsTable {
    pub fn new(header: &[&str]) -> Self {
        MetricsTable {
            header: header.iter().map(|s| s.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<Option<f64>>) {
        assert_eq!(row.len(), self.header.len(), "row width must match header");
        self.rows.push(row);
    }

    pub fn header(&self) -> &[String] {
        &self.header
    }

    pub fn rows(&self) -> &[Vec<Option<f64>>] {
        &self.rows
    }

    pub fn column(&self, name: &str) -> Option<Vec<Option<f64>>> {
        let idx = self.header.iter().position(|h| h == name)?;
        Some(self.rows.iter().map(|r| r[idx]).collect())
    }

    /// One row per step, 17 significant digits, so a reparse recovers the
    /// doubles exactly.
    pub fn write_csv(&self, path: &Path) -> Result<(), HarnessError> {
        let mut w = csv::Writer::from_path(path)
            .map_err(|e| HarnessError::Io(format!("open {}: {e}", path.display())))?;
        w.write_record(&self.header)
            .map_err(|e| HarnessError::Io(format!("write header: {e}")))?;
        for row in &self.rows {
            let record: Vec<String> = row.iter().map(|v| format_value(*v)).collect();
            w.write_record(&record)
                .map_err(|e| HarnessError::Io(format!("write row: {e}")))?;
        }
        w.flush().map_err(|e| HarnessError::Io(format!("flush: {e}")))?;
        Ok(())
    }

    pub fn read_csv(path: &Path) -> Result<Self, HarnessError> {
        let mut r = csv::Reader::from_path(path)
            .map_err(|e| HarnessError::Io(format!("open {}: {e}", path.display())))?;
        let header = r
            .headers()
            .map_err(|e| HarnessError::Io(format!("read header: {e}")))?
            .iter()
            .map(|s| s.to_string())
            .collect();
        let mut rows = Vec::new();
        for record in r.records() {
            let record = record.map_err(|e| HarnessError::Io(format!("read row: {e}")))?;
            rows.push(
                record
                    .iter()
                    .map(|f| {
                        if f.is_empty() {
                            Ok(None)
                        } else {
                            f.parse::<f64>()
                                .map(Some)
                                .map_err(|e| HarnessError::Io(format!("bad number '{f}': {e}")))
                        }
                    })
                    .collect::<Result<Vec<_>, _>>()?,
            );
        }
        Ok(MetricsTable { header, rows })
    }
}

fn format_value(v: Option<f64>) -> String {
    match v {
        None => String::new(),
        Some(x) => format!("{x:.16e}"),
    }
}

/// `Σ(pred − R)² / ΣR²` over a window of (prediction, reward) samples;
/// undefined when every reward is zero.
pub fn compute_nmse(samples: &[(f64, f64)]) -> Option<f64> {
    let den: f64 = samples.iter().map(|(_, r)| r * r).sum();
    if den == 0.0 {
        return None;
    }
    let num: f64 = samples.iter().map(|(p, r)| (p - r) * (p - r)).sum();
    Some(num / den)
}

/// Sliding-window NMSE (window 100) smoothed by a 100-point moving
/// average, matching how the learning curves are reported.
#[derive(Debug, Clone, Default)]
pub struct NmseTracker {
    samples: VecDeque<(f64, f64)>,
    raw: VecDeque<f64>,
}

impl NmseTracker {
    const WINDOW: usize = 100;

    pub fn push(&mut self, prediction: f64, reward: f64) -> Option<f64> {
        if self.samples.len() == Self::WINDOW {
            self.samples.pop_front();
        }
        self.samples.push_back((prediction, reward));
        let raw = compute_nmse(self.samples.make_contiguous())?;
        if self.raw.len() == Self::WINDOW {
            self.raw.pop_front();
        }
        self.raw.push_back(raw);
        Some(self.raw.iter().sum::<f64>() / self.raw.len() as f64)
    }
}
