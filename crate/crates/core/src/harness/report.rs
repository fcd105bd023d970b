//! Experiment results and their CSV and text renderings.

use std::fmt::Write as _;

use thiserror::Error;

/// Seconds per statistics interval.
pub const INTERVAL_SECS: f64 = 3.0;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Totals {
    pub received: u64,
    pub analyzed: u64,
    pub allowed: u64,
    pub blocked: u64,
    /// Received but never analyzed: ring or pool overflow plus frames that
    /// failed to decode.
    pub dropped: u64,
    pub decode_failed: u64,
    pub alerts: u64,
    pub tx_sent: u64,
    /// Descriptors still queued when the report was taken.
    pub residual: u64,
    pub flows: u64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct IntervalStats {
    pub index: usize,
    pub start_s: f64,
    pub received: u64,
    pub analyzed: u64,
    pub dropped: u64,
    pub drop_rate_pct: f64,
    pub paging_activity_pct: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Report {
    pub totals: Totals,
    /// From first arrival to the end of the drain.
    pub elapsed_s: f64,
    pub throughput_pps: f64,
    pub throughput_bps: f64,
    pub mean_frame_bytes: f64,
    pub peak_footprint_bytes: u64,
    pub peak_paging_factor: f64,
    pub intervals: Vec<IntervalStats>,
    pub config: Vec<(String, String)>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ConservationError {
    #[error("received {received} != analyzed {analyzed} + dropped {dropped} + residual {residual}")]
    Received { received: u64, analyzed: u64, dropped: u64, residual: u64 },
    #[error("allowed {allowed} != analyzed {analyzed} - blocked {blocked}")]
    Allowed { allowed: u64, analyzed: u64, blocked: u64 },
}

impl Totals {
    pub fn check(&self) -> Result<(), ConservationError> {
        let t = self;
        if t.received != t.analyzed + t.dropped + t.residual {
            return Err(ConservationError::Received {
                received: t.received,
                analyzed: t.analyzed,
                dropped: t.dropped,
                residual: t.residual,
            });
        }
        if t.allowed + t.blocked != t.analyzed {
            return Err(ConservationError::Allowed { allowed: t.allowed, analyzed: t.analyzed, blocked: t.blocked });
        }
        Ok(())
    }
}

pub fn percent(part: u64, whole: u64) -> f64 {
    if whole == 0 {
        0.0
    } else {
        (part as f64 * 100.0 / whole as f64).clamp(0.0, 100.0)
    }
}

/// `ceil(duration / 3 s)`, at least one.
pub fn interval_count(duration_s: f64) -> usize {
    ((duration_s / INTERVAL_SECS).ceil() as usize).max(1)
}

pub const CSV_HEADER: &str = "record,index,start_s,received,analyzed,dropped,drop_rate_pct,paging_activity_pct,allowed,blocked,alerts,elapsed_s,throughput_pps,throughput_bps";

impl Report {
    pub fn check_conservation(&self) -> Result<(), ConservationError> {
        self.totals.check()
    }

    /// One `interval` row per 3-second interval, then one `total` row.
    /// Columns that do not apply to a row are left empty.
    pub fn to_csv(&self) -> String {
        let mut out = String::from(CSV_HEADER);
        out.push('\n');
        for i in &self.intervals {
            let _ = writeln!(
                out,
                "interval,{},{:.3},{},{},{},{:.3},{:.3},,,,,,",
                i.index, i.start_s, i.received, i.analyzed, i.dropped, i.drop_rate_pct, i.paging_activity_pct
            );
        }
        let t = &self.totals;
        let _ = writeln!(
            out,
            "total,,,{},{},{},{:.3},,{},{},{},{:.6},{:.1},{:.1}",
            t.received,
            t.analyzed,
            t.dropped,
            percent(t.dropped, t.received),
            t.allowed,
            t.blocked,
            t.alerts,
            self.elapsed_s,
            self.throughput_pps,
            self.throughput_bps
        );
        out
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (k, v) in &self.config {
            let _ = writeln!(out, "{k:>16}: {v}");
        }
        let t = &self.totals;
        let _ = writeln!(out, "{:=<60}", "");
        let _ = writeln!(out, "Packets received:  {:>12}", t.received);
        let _ = writeln!(out, "Packets analyzed:  {:>12}", t.analyzed);
        let _ = writeln!(out, "Packets allowed:   {:>12}", t.allowed);
        let _ = writeln!(out, "Packets blocked:   {:>12}", t.blocked);
        let _ = writeln!(out, "Packets dropped:   {:>12} ({:.2}%)", t.dropped, percent(t.dropped, t.received));
        let _ = writeln!(out, "  decode failures: {:>12}", t.decode_failed);
        let _ = writeln!(out, "Alerts:            {:>12}", t.alerts);
        let _ = writeln!(out, "Flows:             {:>12}", t.flows);
        let _ = writeln!(out, "Elapsed:           {:>12.6} s", self.elapsed_s);
        let _ = writeln!(
            out,
            "Throughput:        {:>12.0} pkt/s  {:.3} Mbit/s",
            self.throughput_pps,
            self.throughput_bps / 1e6
        );
        let _ = writeln!(
            out,
            "Trusted footprint: {:>12.1} MiB peak, paging factor {:.3}",
            self.peak_footprint_bytes as f64 / (1024.0 * 1024.0),
            self.peak_paging_factor
        );
        let _ = writeln!(out, "{:=<60}", "");
        let _ = writeln!(out, "interval  start_s   received    dropped  drop%  paging%");
        for i in &self.intervals {
            let _ = writeln!(
                out,
                "{:>8} {:>8.1} {:>10} {:>10} {:>6.2} {:>8.2}",
                i.index, i.start_s, i.received, i.dropped, i.drop_rate_pct, i.paging_activity_pct
            );
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn conservation_checks() {
        let mut t = Totals { received: 10, analyzed: 7, dropped: 3, allowed: 6, blocked: 1, ..Totals::default() };
        assert!(t.check().is_ok());
        t.allowed = 7;
        assert!(matches!(t.check(), Err(ConservationError::Allowed { .. })));
        t.allowed = 6;
        t.dropped = 2;
        assert!(matches!(t.check(), Err(ConservationError::Received { .. })));
        t.residual = 1;
        assert!(t.check().is_ok());
    }

    #[test]
    fn csv_has_one_row_per_interval_plus_total() {
        let r = Report {
            intervals: (0..4)
                .map(|i| IntervalStats { index: i, start_s: i as f64 * 3.0, ..Default::default() })
                .collect(),
            ..Report::default()
        };
        let csv = r.to_csv();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines.len(), 6);
        let width = CSV_HEADER.split(',').count();
        assert!(lines.iter().all(|l| l.split(',').count() == width));
        assert!(lines[5].starts_with("total,"));
        assert_eq!(interval_count(30.0), 10);
        assert_eq!(interval_count(31.0), 11);
        assert_eq!(interval_count(0.001), 1);
    }
}
