//! The five experiment commands.

use crate::scenario::{cli_tags, ExperimentSpec, Manifest, ProvenanceArg};
use anyhow::Context;
use mcvd::io::{
    fit_grid_csv, histogram_csv, rate_surface_csv, trace_csv, write_json, ResultEnvelope,
};
use mcvd::model::{
    analytical_coefficients, demod_prob_tables, ChannelCoefficients, Provenance,
};
use mcvd::rate::{achievable_rate, RateSurface};
use mcvd::rng::derive_seed;
use mcvd::sim::{
    estimate_channel_coefficients, random_bits, simulate_impulse, simulate_sequence,
};
use mcvd::verify::{run_fit_grid, FitGridParams};
use serde::Serialize;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

pub struct OutputDir {
    root: PathBuf,
    written: Vec<String>,
}

impl OutputDir {
    pub fn new(root: &Path) -> anyhow::Result<Self> {
        std::fs::create_dir_all(root)
            .with_context(|| format!("cannot create output directory {}", root.display()))?;
        Ok(Self {
            root: root.to_path_buf(),
            written: Vec::new(),
        })
    }

    fn write_text(&mut self, name: &str, text: &str) -> anyhow::Result<()> {
        std::fs::write(self.root.join(name), text)
            .with_context(|| format!("cannot write {name}"))?;
        self.written.push(name.to_string());
        Ok(())
    }

    fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> anyhow::Result<()> {
        write_json(&self.root.join(name), value)
            .with_context(|| format!("cannot write {name}"))?;
        self.written.push(name.to_string());
        Ok(())
    }

    pub fn finish(mut self, mut manifest: Manifest) -> anyhow::Result<()> {
        self.written.sort();
        manifest.outputs = self.written.clone();
        write_json(&self.root.join("manifest.json"), &manifest)
            .context("cannot write manifest.json")?;
        Ok(())
    }
}

fn provenance_slug(p: Provenance) -> &'static str {
    match p {
        Provenance::Analytical => "analytical",
        Provenance::MonteCarlo => "monte-carlo",
    }
}

fn coefficients_for(
    spec: &ExperimentSpec,
    distance: f64,
    d_index: u64,
    provenance: Provenance,
    tag: u64,
) -> anyhow::Result<ChannelCoefficients> {
    let cfg = spec.config(distance, tag, d_index);
    let coeffs = match provenance {
        Provenance::Analytical => analytical_coefficients(&cfg, spec.eta_max)?,
        Provenance::MonteCarlo => {
            estimate_channel_coefficients(&cfg, spec.eta_max, spec.coeff_molecules, 1)?
        }
    };
    Ok(coeffs)
}

/// `coeffs`: channel coefficient files per distance and provenance.
pub fn cmd_coeffs(
    spec: &ExperimentSpec,
    out: &Path,
    provenance: ProvenanceArg,
) -> anyhow::Result<()> {
    let mut dir = OutputDir::new(out)?;
    for (di, &d) in spec.distances.iter().enumerate() {
        for prov in provenance.list() {
            let coeffs = coefficients_for(spec, d, di as u64, prov, cli_tags::COEFFS)?;
            let cfg = spec.config(d, cli_tags::COEFFS, di as u64);
            let name = format!("coeffs_d{d}_{}.json", provenance_slug(prov));
            dir.write_json(&name, &ResultEnvelope::new(&cfg, coeffs))?;
        }
    }
    dir.finish(Manifest::new("coeffs", spec))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum SimulateMode {
    Sequence,
    Impulse,
}

/// `simulate`: raw traces or impulse histograms per distance.
pub fn cmd_simulate(
    spec: &ExperimentSpec,
    out: &Path,
    mode: SimulateMode,
) -> anyhow::Result<()> {
    let mut dir = OutputDir::new(out)?;
    for (di, &d) in spec.distances.iter().enumerate() {
        let cfg = spec.config(d, cli_tags::SIMULATE, di as u64);
        match mode {
            SimulateMode::Impulse => {
                let hist = simulate_impulse(&cfg, spec.coeff_molecules, spec.eta_max + 1)?;
                dir.write_text(&format!("impulse_d{d}.csv"), &histogram_csv(&hist))?;
                dir.write_json(
                    &format!("impulse_d{d}.json"),
                    &ResultEnvelope::new(&cfg, hist),
                )?;
            }
            SimulateMode::Sequence => {
                let bits = random_bits(
                    spec.bits_per_trace,
                    spec.tx_p_one,
                    derive_seed(cfg.rng_seed, mcvd::rng::tags::BITS, 0),
                );
                let trace = simulate_sequence(&cfg, &bits)?;
                dir.write_text(&format!("trace_d{d}.csv"), &trace_csv(&trace))?;
                dir.write_json(
                    &format!("trace_d{d}.json"),
                    &ResultEnvelope::new(&cfg, trace),
                )?;
            }
        }
    }
    dir.finish(Manifest::new("simulate", spec))
}

/// `verify`: chi-square good-fit ratio grid.
pub fn cmd_verify(
    spec: &ExperimentSpec,
    out: &Path,
    provenance: ProvenanceArg,
) -> anyhow::Result<()> {
    let mut dir = OutputDir::new(out)?;
    let params = fit_params(spec, provenance.single());
    let grid = run_fit_grid(&params)?;
    dir.write_text("fit_grid.csv", &fit_grid_csv(&grid))?;
    dir.write_json("fit_grid.json", &grid)?;
    dir.finish(Manifest::new("verify", spec))
}

pub fn fit_params(spec: &ExperimentSpec, provenance: Provenance) -> FitGridParams {
    FitGridParams {
        distances: spec.distances.clone(),
        etas: spec.etas.clone(),
        taus: spec.taus.clone(),
        alphas: spec.alphas.clone(),
        bits_per_trace: spec.bits_per_trace,
        repetitions: spec.repetitions,
        p_one: spec.tx_p_one,
        provenance,
        coeff_molecules: spec.coeff_molecules,
        release_mode: spec.release_mode,
        seed: derive_seed(spec.seed, cli_tags::VERIFY, 0),
    }
}

#[derive(Debug, Serialize)]
struct RateRow {
    d: f64,
    t_s: f64,
    rate_eta_optimistic: f64,
    rate_eta_full: f64,
    bits_per_sec: f64,
}

/// `rate`: mutual-information surfaces and the achievable-rate table
/// comparing the one-slot-memory model with the full awareness window.
pub fn cmd_rate(
    spec: &ExperimentSpec,
    out: &Path,
    provenance: ProvenanceArg,
) -> anyhow::Result<()> {
    let mut dir = OutputDir::new(out)?;
    let mut rows = Vec::new();
    let etas = if spec.eta_max <= 1 {
        vec![spec.eta_max]
    } else {
        vec![1usize, spec.eta_max]
    };
    for (di, &d) in spec.distances.iter().enumerate() {
        let coeffs =
            coefficients_for(spec, d, di as u64, provenance.single(), cli_tags::RATE)?;
        let cfg = spec.config(d, cli_tags::RATE, di as u64);
        let mut per_eta = Vec::new();
        for &eta in &etas {
            let truncated = coeffs.truncated(eta)?;
            let models = demod_prob_tables(&truncated, spec.molecules_per_one, &spec.taus);
            let params = spec.scale.rate_params(derive_seed(
                spec.seed,
                cli_tags::RATE,
                (di as u64) << 8 | eta as u64,
            ));
            let surface: RateSurface =
                achievable_rate(&models, &spec.p_ones, cfg.symbol_duration, &params)?;
            dir.write_text(
                &format!("rate_surface_d{d}_eta{eta}.csv"),
                &rate_surface_csv(&surface),
            )?;
            dir.write_json(&format!("rate_summary_d{d}_eta{eta}.json"), &surface)?;
            per_eta.push(surface.achievable_rate_bits_per_use);
        }
        let full = *per_eta.last().expect("at least one eta");
        rows.push(RateRow {
            d,
            t_s: cfg.symbol_duration,
            rate_eta_optimistic: per_eta[0],
            rate_eta_full: full,
            bits_per_sec: full / cfg.symbol_duration,
        });
    }
    let mut csv = String::from("d,t_s,rate_eta1_bits_per_use,rate_eta_full_bits_per_use,bits_per_sec\n");
    for row in &rows {
        let _ = writeln!(
            csv,
            "{},{},{},{},{}",
            row.d, row.t_s, row.rate_eta_optimistic, row.rate_eta_full, row.bits_per_sec
        );
    }
    dir.write_text("rate_table.csv", &csv)?;
    dir.finish(Manifest::new("rate", spec))
}

/// `sweep`: coefficients, verification, and rates in one run.
pub fn cmd_sweep(
    spec: &ExperimentSpec,
    out: &Path,
    provenance: ProvenanceArg,
) -> anyhow::Result<()> {
    type Stage = fn(&ExperimentSpec, &Path, ProvenanceArg) -> anyhow::Result<()>;
    let stages: [(&str, Stage); 3] = [
        ("coeffs", cmd_coeffs),
        ("verify", cmd_verify),
        ("rate", cmd_rate),
    ];
    let mut dir = OutputDir::new(out)?;
    for (name, run) in stages {
        run(spec, &out.join(name), provenance)?;
        dir.written.push(format!("{name}/manifest.json"));
    }
    dir.finish(Manifest::new("sweep", spec))
}
