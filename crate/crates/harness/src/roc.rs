//! Threshold sweep over an existing matrix report: false acceptance and
//! false rejection rates as the passing threshold moves.

use crate::matrix::{AttemptCategory, MatrixReport};
use crate::HarnessError;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RocRow {
    pub threshold: f64,
    pub far: f64,
    pub frr: f64,
}

/// Re-decide every attempt at each threshold. FAR counts non-valid attempts
/// that would pass (same-user attempts excluded, as in the accuracy metric);
/// FRR counts valid attempts that would fail. Gate-rejected attempts never
/// pass at any threshold.
pub fn roc_sweep(report: &MatrixReport, thresholds: &[f64]) -> Vec<RocRow> {
    let decide = |total: Option<f64>, gate_rejected: bool, threshold: f64| -> bool {
        !gate_rejected && total.is_some_and(|t| t <= threshold)
    };
    thresholds
        .iter()
        .map(|&threshold| {
            let mut far_hits = 0usize;
            let mut far_total = 0usize;
            let mut frr_hits = 0usize;
            let mut frr_total = 0usize;
            for row in &report.rows {
                let passes = decide(row.total, row.gate_rejected, threshold);
                match row.category {
                    AttemptCategory::ValidAttempt => {
                        frr_total += 1;
                        frr_hits += usize::from(!passes);
                    }
                    AttemptCategory::SameUserDifferentMusic => {}
                    _ => {
                        far_total += 1;
                        far_hits += usize::from(passes);
                    }
                }
            }
            RocRow {
                threshold,
                far: if far_total == 0 {
                    0.0
                } else {
                    far_hits as f64 / far_total as f64
                },
                frr: if frr_total == 0 {
                    0.0
                } else {
                    frr_hits as f64 / frr_total as f64
                },
            }
        })
        .collect()
}

/// Parse a `start:end:step` range (inclusive of both ends) or a comma list.
pub fn parse_thresholds(spec: &str) -> Result<Vec<f64>, HarnessError> {
    let bad = |msg: &str| HarnessError::InvalidArgument(format!("thresholds {spec:?}: {msg}"));
    if spec.contains(':') {
        let parts: Vec<&str> = spec.split(':').collect();
        if parts.len() != 3 {
            return Err(bad("expected start:end:step"));
        }
        let start: f64 = parts[0].parse().map_err(|_| bad("bad start"))?;
        let end: f64 = parts[1].parse().map_err(|_| bad("bad end"))?;
        let step: f64 = parts[2].parse().map_err(|_| bad("bad step"))?;
        if step <= 0.0 || end < start {
            return Err(bad("need end >= start and step > 0"));
        }
        let mut out = Vec::new();
        let mut i = 0u64;
        loop {
            let t = start + i as f64 * step;
            if t > end + step * 1e-9 {
                break;
            }
            out.push(t);
            i += 1;
        }
        Ok(out)
    } else {
        spec.split(',')
            .map(|s| s.trim().parse::<f64>().map_err(|_| bad("bad value")))
            .collect()
    }
}

pub fn roc_csv(rows: &[RocRow]) -> String {
    let mut out = String::from("threshold,far,frr\n");
    for r in rows {
        out.push_str(&format!("{:.4},{:.6},{:.6}\n", r.threshold, r.far, r.frr));
    }
    out
}
