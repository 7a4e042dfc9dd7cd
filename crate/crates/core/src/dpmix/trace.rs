//! Sweep traces and occupancy diagnostics.

use serde::Serialize;
use std::io::{self, Write};

/// State recorded for one sweep of the sampler.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TraceRow {
    /// 1-based sweep index.
    pub iteration: usize,
    /// Concentration parameter after the sweep.
    pub alpha: f64,
    /// Occupancy count of every component.
    pub occupancy: Vec<u32>,
    /// Mixture weights at the end of the sweep.
    pub weights: Vec<f64>,
    /// Component means.
    pub means: Vec<f64>,
    /// Component precisions.
    pub precisions: Vec<f64>,
}

/// All recorded sweeps of one chain.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TraceLog {
    /// Truncation level (columns per block).
    pub truncation: usize,
    /// Recorded sweeps in increasing iteration order.
    pub rows: Vec<TraceRow>,
}

impl TraceLog {
    /// Writes the log as CSV: one row per recorded sweep with columns
    /// `iteration, alpha, n_1..n_H, pi_1..pi_H, mu_1..mu_H, phi_1..phi_H`.
    pub fn write_csv<W: Write>(&self, out: &mut W) -> io::Result<()> {
        let h = self.truncation;
        let mut header = String::from("iteration,alpha");
        for prefix in ["n", "pi", "mu", "phi"] {
            for k in 1..=h {
                header.push_str(&format!(",{prefix}_{k}"));
            }
        }
        writeln!(out, "{header}")?;
        for row in &self.rows {
            // `{}` on f64 prints the shortest representation that
            // round-trips, so the trace is loss-free.
            let mut line = format!("{},{}", row.iteration, row.alpha);
            for &n in &row.occupancy {
                line.push_str(&format!(",{n}"));
            }
            for block in [&row.weights, &row.means, &row.precisions] {
                for &v in block.iter() {
                    line.push_str(&format!(",{v}"));
                }
            }
            writeln!(out, "{line}")?;
        }
        Ok(())
    }
}

/// Occupancy diagnostics aggregated over a whole trace.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OccupancySummary {
    /// Mean occupancy of every component over the recorded sweeps; the
    /// entries sum to the number of observations.
    pub mean_occupancy: Vec<f64>,
    /// Number of (sweep, component) events with exactly one member.
    pub irregular_events: usize,
    /// Number of (sweep, component) events with no members.
    pub empty_events: usize,
    /// Recorded sweeps contributing to the summary.
    pub sweeps: usize,
}

/// Aggregates expected cluster membership over the recorded sweeps,
/// counting singleton ("irregular") and empty component events along the
/// way.
pub fn posterior_membership_curve(traces: &TraceLog) -> OccupancySummary {
    let h = traces.truncation;
    let mut mean_occupancy = vec![0.0; h];
    let mut irregular = 0usize;
    let mut empty = 0usize;
    for row in &traces.rows {
        for (k, &n) in row.occupancy.iter().enumerate() {
            mean_occupancy[k] += n as f64;
            match n {
                0 => empty += 1,
                1 => irregular += 1,
                _ => {}
            }
        }
    }
    let sweeps = traces.rows.len();
    if sweeps > 0 {
        for m in mean_occupancy.iter_mut() {
            *m /= sweeps as f64;
        }
    }
    OccupancySummary {
        mean_occupancy,
        irregular_events: irregular,
        empty_events: empty,
        sweeps,
    }
}
