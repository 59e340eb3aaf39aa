//! Scenario files and resolved experiment specifications.
//!
//! A scenario is a TOML file of optional keys; anything omitted falls back to
//! the standard deployment (see README for the schema). The resolved
//! specification is echoed into every run manifest so outputs can be
//! regenerated exactly.

use anyhow::{bail, Context};
use mcvd::config::{symbol_duration_for, ReleaseMode, SimulationConfig};
use mcvd::model::Provenance;
use mcvd::rate::RateParams;
use mcvd::rng::derive_seed;
use serde::{Deserialize, Serialize};
use std::path::Path;

/// Seed-derivation tags for per-command, per-distance configurations.
pub mod cli_tags {
    pub const COEFFS: u64 = 0x100;
    pub const SIMULATE: u64 = 0x101;
    pub const VERIFY: u64 = 0x102;
    pub const RATE: u64 = 0x103;
}

/// Scenario file contents; every field optional.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    pub distances: Option<Vec<f64>>,
    pub etas: Option<Vec<usize>>,
    pub eta_max: Option<usize>,
    pub taus: Option<Vec<u32>>,
    pub p_ones: Option<Vec<f64>>,
    pub alphas: Option<Vec<f64>>,
    pub tx_p_one: Option<f64>,
    pub diffusion_coefficient: Option<f64>,
    pub receiver_radius: Option<f64>,
    pub transmitter_radius: Option<f64>,
    pub molecule_radius: Option<f64>,
    pub molecules_per_one: Option<u32>,
    pub release_mode: Option<ReleaseMode>,
    /// `micro_step = symbol_duration / micro_step_divisor`.
    pub micro_step_divisor: Option<f64>,
}

impl ScenarioFile {
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("cannot read scenario file {}", path.display()))?;
        toml::from_str(&text).with_context(|| format!("malformed scenario {}", path.display()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Scale {
    /// 1000-bit traces, 10 repetitions, n = 1e5 for entropy estimates.
    Desk,
    /// 10000-bit traces, 30 repetitions, n = 1e6.
    Paper,
}

impl Scale {
    pub fn bits_per_trace(self) -> usize {
        match self {
            Scale::Desk => 1_000,
            Scale::Paper => 10_000,
        }
    }

    pub fn repetitions(self) -> u64 {
        match self {
            Scale::Desk => 10,
            Scale::Paper => 30,
        }
    }

    pub fn entropy_n(self) -> usize {
        match self {
            Scale::Desk => 100_000,
            Scale::Paper => 1_000_000,
        }
    }

    pub fn coeff_molecules(self) -> u64 {
        match self {
            Scale::Desk => 100_000,
            Scale::Paper => 1_000_000,
        }
    }

    pub fn rate_params(self, master_seed: u64) -> RateParams {
        match self {
            Scale::Desk => RateParams::desk(master_seed),
            Scale::Paper => RateParams::paper(master_seed),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum ProvenanceArg {
    Analytical,
    MonteCarlo,
    Both,
}

impl ProvenanceArg {
    pub fn list(self) -> Vec<Provenance> {
        match self {
            ProvenanceArg::Analytical => vec![Provenance::Analytical],
            ProvenanceArg::MonteCarlo => vec![Provenance::MonteCarlo],
            ProvenanceArg::Both => vec![Provenance::Analytical, Provenance::MonteCarlo],
        }
    }

    pub fn single(self) -> Provenance {
        match self {
            ProvenanceArg::MonteCarlo | ProvenanceArg::Both => Provenance::MonteCarlo,
            ProvenanceArg::Analytical => Provenance::Analytical,
        }
    }
}

/// Fully resolved experiment parameters, written into manifests.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentSpec {
    pub scale: Scale,
    pub seed: u64,
    pub distances: Vec<f64>,
    pub etas: Vec<usize>,
    pub eta_max: usize,
    pub taus: Vec<u32>,
    pub p_ones: Vec<f64>,
    pub alphas: Vec<f64>,
    pub tx_p_one: f64,
    pub diffusion_coefficient: f64,
    pub receiver_radius: f64,
    pub transmitter_radius: f64,
    pub molecule_radius: f64,
    pub molecules_per_one: u32,
    pub release_mode: ReleaseMode,
    pub micro_step_divisor: f64,
    pub bits_per_trace: usize,
    pub repetitions: u64,
    pub entropy_n: usize,
    pub coeff_molecules: u64,
}

impl ExperimentSpec {
    pub fn resolve(file: &ScenarioFile, scale: Scale, seed: u64) -> anyhow::Result<Self> {
        let eta_max = file.eta_max.unwrap_or(14);
        let spec = Self {
            scale,
            seed,
            distances: file
                .distances
                .clone()
                .unwrap_or_else(|| vec![4.0, 8.0, 12.0, 16.0, 20.0, 24.0]),
            etas: file.etas.clone().unwrap_or_else(|| (0..=eta_max).collect()),
            eta_max,
            taus: file.taus.clone().unwrap_or_else(mcvd::rate::default_tau_grid),
            p_ones: file
                .p_ones
                .clone()
                .unwrap_or_else(mcvd::rate::default_p_one_grid),
            alphas: file.alphas.clone().unwrap_or_else(|| vec![0.01, 0.05]),
            tx_p_one: file.tx_p_one.unwrap_or(0.5),
            diffusion_coefficient: file.diffusion_coefficient.unwrap_or(79.4),
            receiver_radius: file.receiver_radius.unwrap_or(10.0),
            transmitter_radius: file.transmitter_radius.unwrap_or(10.0),
            molecule_radius: file.molecule_radius.unwrap_or(0.0025),
            molecules_per_one: file.molecules_per_one.unwrap_or(50),
            release_mode: file.release_mode.unwrap_or_default(),
            micro_step_divisor: file.micro_step_divisor.unwrap_or(4000.0),
            bits_per_trace: scale.bits_per_trace(),
            repetitions: scale.repetitions(),
            entropy_n: scale.entropy_n(),
            coeff_molecules: scale.coeff_molecules(),
        };
        if spec.distances.is_empty() {
            bail!("scenario needs at least one distance");
        }
        if spec.etas.iter().any(|&eta| eta > spec.eta_max) {
            bail!("etas must not exceed eta_max = {}", spec.eta_max);
        }
        if !spec.micro_step_divisor.is_finite() || spec.micro_step_divisor <= 1.0 {
            bail!("micro_step_divisor must exceed 1");
        }
        // Surface every config error now rather than mid-run.
        for &d in &spec.distances {
            spec.config(d, 0, 0).validate().map_err(|e| {
                anyhow::anyhow!("scenario invalid at distance {d}: {e}")
            })?;
        }
        Ok(spec)
    }

    /// Simulation config for one distance, seeded per command tag.
    pub fn config(&self, distance: f64, tag: u64, index: u64) -> SimulationConfig {
        let symbol_duration = symbol_duration_for(distance);
        SimulationConfig {
            diffusion_coefficient: self.diffusion_coefficient,
            receiver_radius: self.receiver_radius,
            transmitter_radius: self.transmitter_radius,
            molecule_radius: self.molecule_radius,
            distance,
            symbol_duration,
            micro_step: symbol_duration / self.micro_step_divisor,
            molecules_per_one: self.molecules_per_one,
            molecules_per_zero: 0,
            rng_seed: derive_seed(self.seed, tag, index),
            release_mode: self.release_mode,
        }
    }
}

/// Run manifest: the resolved spec plus the files the run produced.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub command: String,
    pub spec: ExperimentSpec,
    pub outputs: Vec<String>,
}

impl Manifest {
    pub fn new(command: &str, spec: &ExperimentSpec) -> Self {
        Self {
            tool: format!("mcvd {}", env!("CARGO_PKG_VERSION")),
            command: command.to_string(),
            spec: spec.clone(),
            outputs: Vec::new(),
        }
    }
}
