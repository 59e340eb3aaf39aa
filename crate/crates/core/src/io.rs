//! File formats: JSON result envelopes and plot-ready CSV.
//!
//! All writers are deterministic: struct fields serialize in declaration
//! order, tables use ordered maps, and floats print in shortest round-trip
//! form, so identical runs produce byte-identical files.

use crate::config::SimulationConfig;
use crate::error::Result;
use crate::rate::RateSurface;
use crate::sim::{ArrivalHistogram, TransmissionTrace};
use crate::verify::FitGrid;
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;
use std::path::Path;

/// JSON envelope around a result: the resolved configuration and seed are
/// echoed so the file alone suffices to rerun the experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultEnvelope<T> {
    pub tool: String,
    pub seed: u64,
    pub config: SimulationConfig,
    pub data: T,
}

impl<T> ResultEnvelope<T> {
    pub fn new(config: &SimulationConfig, data: T) -> Self {
        Self {
            tool: format!("mcvd {}", env!("CARGO_PKG_VERSION")),
            seed: config.rng_seed,
            config: config.clone(),
            data,
        }
    }
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text)?;
    Ok(())
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
}

/// `slot,count` rows of an impulse histogram.
pub fn histogram_csv(hist: &ArrivalHistogram) -> String {
    let mut out = String::from("slot,count\n");
    for (slot, count) in hist.slot_counts.iter().enumerate() {
        let _ = writeln!(out, "{slot},{count}");
    }
    out
}

/// `slot,count` rows of the received counts of a trace.
pub fn trace_csv(trace: &TransmissionTrace) -> String {
    let mut out = String::from("slot,count\n");
    for (slot, count) in trace.rx_counts.iter().enumerate() {
        let _ = writeln!(out, "{slot},{count}");
    }
    out
}

/// Long-format good-fit ratios:
/// `d,eta,tau,alpha,ratio,n_tested,n_excluded`.
pub fn fit_grid_csv(grid: &FitGrid) -> String {
    let mut out = String::from("d,eta,tau,alpha,ratio,n_tested,n_excluded\n");
    for cell in &grid.cells {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{}",
            cell.distance,
            cell.eta,
            cell.tau,
            cell.alpha,
            cell.ratio(),
            cell.n_tested,
            cell.n_excluded
        );
    }
    out
}

/// Mutual-information surface: `tau,p_one,i_bits_per_use,std_err`.
pub fn rate_surface_csv(surface: &RateSurface) -> String {
    let mut out = String::from("tau,p_one,i_bits_per_use,std_err\n");
    for point in &surface.points {
        let se = point
            .std_err
            .map(|s| s.to_string())
            .unwrap_or_default();
        let _ = writeln!(out, "{},{},{},{}", point.tau, point.p_one, point.i_bits, se);
    }
    out
}
