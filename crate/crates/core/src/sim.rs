//! Particle-tracking Monte Carlo of messenger molecules.
//!
//! Each molecule performs an isotropic Gaussian random walk (per-axis step
//! standard deviation `sqrt(2 D dt)`) and is absorbed the first time its
//! center ends a step within the absorption radius of the receiver center.
//! Absorption is first-passage: the molecule is removed and counted once.
//!
//! The receiver sits at the origin and molecules are released on the x axis
//! at the configured release distance. Within a few step lengths of the
//! receiver the walk advances by `micro_step`; farther out the step length is
//! stretched so that the first-passage probability skipped inside one step
//! stays below `(a/r) erfc(6)` (about 1e-17), which keeps long-lived
//! stragglers affordable without touching the statistics. Every particle
//! draws from its own counter-derived RNG stream, so results are identical at
//! any thread count.

use crate::config::SimulationConfig;
use crate::error::{Error, Result};
use crate::model::{ChannelCoefficients, Provenance};
use crate::rng::{derive_seed, stream_rng, tags};
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Coarse far-field steps keep the skipped first-passage mass below
/// `erfc(FAR_FIELD_SAFETY)` per step.
const FAR_FIELD_SAFETY: f64 = 6.0;

/// Flag a Monte Carlo coefficient whose standard error exceeds this.
pub const COEFF_STD_ERR_TOLERANCE: f64 = 5e-3;

/// One tracked messenger molecule.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParticleState {
    /// Center position relative to the receiver center (um).
    pub position: [f64; 3],
    /// Elapsed simulation time for this particle (s).
    pub time: f64,
    pub absorbed: bool,
    pub absorption_time: Option<f64>,
}

impl ParticleState {
    /// Particle at the configured emission point at the given release time.
    pub fn released(cfg: &SimulationConfig, time: f64) -> Self {
        Self {
            position: [cfg.release_distance(), 0.0, 0.0],
            time,
            absorbed: false,
            absorption_time: None,
        }
    }
}

/// Advance a live particle by one fixed micro step.
///
/// If the step ends within the absorption radius the particle is marked
/// absorbed at the end-of-step time and its position freezes there.
pub fn advance_particle<R: Rng>(
    state: &ParticleState,
    cfg: &SimulationConfig,
    rng: &mut R,
) -> ParticleState {
    assert!(!state.absorbed, "cannot advance an absorbed particle");
    let sigma = (2.0 * cfg.diffusion_coefficient * cfg.micro_step).sqrt();
    let mut next = *state;
    for axis in &mut next.position {
        *axis += sigma * rng.sample::<f64, _>(StandardNormal);
    }
    next.time += cfg.micro_step;
    let r2 = next.position.iter().map(|c| c * c).sum::<f64>();
    let abs_r = cfg.absorption_radius();
    if r2 <= abs_r * abs_r {
        next.absorbed = true;
        next.absorption_time = Some(next.time);
    }
    next
}

/// Walk one molecule from the release point at `t0` until absorption or
/// `t_end`; returns the absorption time if it hits.
fn walk_to_absorption<R: Rng>(
    cfg: &SimulationConfig,
    t0: f64,
    t_end: f64,
    rng: &mut R,
) -> Option<f64> {
    let abs_r = cfg.absorption_radius();
    let abs_r2 = abs_r * abs_r;
    let diffusion = cfg.diffusion_coefficient;
    let mut pos = [cfg.release_distance(), 0.0, 0.0];
    let mut t = t0;
    loop {
        let remaining = t_end - t;
        if remaining <= 0.0 {
            return None;
        }
        let r = (pos[0] * pos[0] + pos[1] * pos[1] + pos[2] * pos[2]).sqrt();
        let reach = (r - abs_r) / FAR_FIELD_SAFETY;
        let far_dt = reach * reach / (4.0 * diffusion);
        let dt = cfg.micro_step.max(far_dt).min(remaining);
        let sigma = (2.0 * diffusion * dt).sqrt();
        for axis in &mut pos {
            *axis += sigma * rng.sample::<f64, _>(StandardNormal);
        }
        t += dt;
        if pos[0] * pos[0] + pos[1] * pos[1] + pos[2] * pos[2] <= abs_r2 {
            return Some(t);
        }
    }
}

/// Arrival counts of an impulse release, binned by delay slot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArrivalHistogram {
    /// Absorptions with delay slot `i`, `i = 0 .. slot_counts.len()`.
    pub slot_counts: Vec<u64>,
    /// Molecules released per trial.
    pub emitted: u64,
    pub trials: u64,
}

impl ArrivalHistogram {
    pub fn total_absorbed(&self) -> u64 {
        self.slot_counts.iter().sum()
    }

    /// Pooled arrival fraction per slot.
    pub fn fractions(&self) -> Vec<f64> {
        let n = (self.emitted * self.trials) as f64;
        self.slot_counts.iter().map(|&c| c as f64 / n).collect()
    }
}

fn impulse_counts(
    cfg: &SimulationConfig,
    n_molecules: u64,
    n_slots: usize,
    seed: u64,
) -> Vec<u64> {
    let t_end = n_slots as f64 * cfg.symbol_duration;
    (0..n_molecules)
        .into_par_iter()
        .fold(
            || vec![0u64; n_slots],
            |mut counts, stream| {
                let mut rng = stream_rng(seed, stream);
                if let Some(t_abs) = walk_to_absorption(cfg, 0.0, t_end, &mut rng) {
                    let slot = ((t_abs / cfg.symbol_duration) as usize).min(n_slots - 1);
                    counts[slot] += 1;
                }
                counts
            },
        )
        .reduce(
            || vec![0u64; n_slots],
            |mut a, b| {
                for (x, y) in a.iter_mut().zip(b) {
                    *x += y;
                }
                a
            },
        )
}

/// Release `n_molecules` simultaneously at time zero and bin each absorption
/// time into its delay slot.
pub fn simulate_impulse(
    cfg: &SimulationConfig,
    n_molecules: u64,
    n_slots: usize,
) -> Result<ArrivalHistogram> {
    cfg.validate()?;
    if n_molecules == 0 || n_slots == 0 {
        return Err(Error::InvalidConfig(
            "impulse needs at least one molecule and one slot".into(),
        ));
    }
    let seed = derive_seed(cfg.rng_seed, tags::IMPULSE, 0);
    Ok(ArrivalHistogram {
        slot_counts: impulse_counts(cfg, n_molecules, n_slots, seed),
        emitted: n_molecules,
        trials: 1,
    })
}

/// Empirical first-passage fraction at each requested time, from one release
/// of `n_molecules` at time zero.
pub fn first_passage_fractions(
    cfg: &SimulationConfig,
    n_molecules: u64,
    times: &[f64],
) -> Result<Vec<f64>> {
    cfg.validate()?;
    let t_end = times.iter().cloned().fold(0.0, f64::max);
    if t_end <= 0.0 || t_end.is_nan() {
        return Err(Error::InvalidConfig("need a positive horizon".into()));
    }
    let seed = derive_seed(cfg.rng_seed, tags::FIRST_PASSAGE, 0);
    let hits: Vec<Option<f64>> = (0..n_molecules)
        .into_par_iter()
        .map(|stream| {
            let mut rng = stream_rng(seed, stream);
            walk_to_absorption(cfg, 0.0, t_end, &mut rng)
        })
        .collect();
    Ok(times
        .iter()
        .map(|&t| {
            let hit = hits.iter().flatten().filter(|&&ta| ta <= t).count();
            hit as f64 / n_molecules as f64
        })
        .collect())
}

/// Estimate `p_0 .. p_eta` by pooling impulse releases across repetitions.
///
/// Fractions are pooled counts over `n_molecules * n_repetitions` (maximum
/// likelihood), with per-coefficient binomial standard errors. A coefficient
/// whose standard error exceeds [`COEFF_STD_ERR_TOLERANCE`] adds a warning to
/// the result metadata rather than failing.
pub fn estimate_channel_coefficients(
    cfg: &SimulationConfig,
    eta: usize,
    n_molecules: u64,
    n_repetitions: u64,
) -> Result<ChannelCoefficients> {
    cfg.validate()?;
    if n_molecules == 0 || n_repetitions == 0 {
        return Err(Error::InvalidConfig(
            "coefficient estimation needs molecules and repetitions".into(),
        ));
    }
    let n_slots = eta + 1;
    let mut pooled = vec![0u64; n_slots];
    for rep in 0..n_repetitions {
        let seed = derive_seed(cfg.rng_seed, tags::COEFFS, rep);
        for (total, c) in pooled
            .iter_mut()
            .zip(impulse_counts(cfg, n_molecules, n_slots, seed))
        {
            *total += c;
        }
    }
    let n = (n_molecules * n_repetitions) as f64;
    let p: Vec<f64> = pooled.iter().map(|&c| c as f64 / n).collect();
    let std_err: Vec<f64> = p.iter().map(|&pi| (pi * (1.0 - pi) / n).sqrt()).collect();
    let mut coeffs = ChannelCoefficients::new(p, Provenance::MonteCarlo)?;
    for (i, &se) in std_err.iter().enumerate() {
        if se > COEFF_STD_ERR_TOLERANCE {
            coeffs.warnings.push(format!(
                "p_{i} standard error {se:.2e} exceeds tolerance {COEFF_STD_ERR_TOLERANCE:.2e}"
            ));
        }
    }
    coeffs.std_err = Some(std_err);
    Ok(coeffs)
}

/// Transmitted bits, per-slot received counts, and (once demodulated) the
/// received bits of one transmission.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransmissionTrace {
    pub tx_bits: Vec<u8>,
    pub rx_counts: Vec<u64>,
    /// Filled by [`TransmissionTrace::demodulate`].
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub rx_bits: Option<Vec<u8>>,
}

impl TransmissionTrace {
    pub fn len(&self) -> usize {
        self.tx_bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tx_bits.is_empty()
    }

    /// Apply the threshold rule to every slot and record the result.
    pub fn demodulate(&mut self, tau: u32) -> &[u8] {
        self.rx_bits = Some(
            self.rx_counts
                .iter()
                .map(|&c| crate::model::demodulate(c, tau))
                .collect(),
        );
        self.rx_bits.as_deref().expect("just set")
    }
}

/// Simulate a whole transmission: every 1 bit releases `molecules_per_one`
/// molecules at its slot start, particles are tracked across slot boundaries
/// until the end of the transmission, and `rx_counts[r]` collects the
/// absorptions that land in slot `r`.
pub fn simulate_sequence(cfg: &SimulationConfig, tx_bits: &[u8]) -> Result<TransmissionTrace> {
    cfg.validate()?;
    if tx_bits.is_empty() {
        return Err(Error::InvalidConfig("tx_bits must not be empty".into()));
    }
    let n_slots = tx_bits.len();
    let t_end = n_slots as f64 * cfg.symbol_duration;
    let seed = derive_seed(cfg.rng_seed, tags::SEQUENCE, 0);

    // Stream ids are assigned slot-major before any work is dispatched so the
    // layout is independent of scheduling.
    let mut emissions: Vec<(usize, u32, u64)> = Vec::new();
    let mut next_stream = 0u64;
    for (slot, &bit) in tx_bits.iter().enumerate() {
        let count = cfg.emission_count(bit);
        if count > 0 {
            emissions.push((slot, count, next_stream));
            next_stream += u64::from(count);
        }
    }

    let rx_counts = emissions
        .par_iter()
        .fold(
            || vec![0u64; n_slots],
            |mut counts, &(slot, count, stream_base)| {
                let t0 = slot as f64 * cfg.symbol_duration;
                for k in 0..u64::from(count) {
                    let mut rng = stream_rng(seed, stream_base + k);
                    if let Some(t_abs) = walk_to_absorption(cfg, t0, t_end, &mut rng) {
                        let r = ((t_abs / cfg.symbol_duration) as usize).min(n_slots - 1);
                        counts[r] += 1;
                    }
                }
                counts
            },
        )
        .reduce(
            || vec![0u64; n_slots],
            |mut a, b| {
                for (x, y) in a.iter_mut().zip(b) {
                    *x += y;
                }
                a
            },
        );

    Ok(TransmissionTrace {
        tx_bits: tx_bits.to_vec(),
        rx_counts,
        rx_bits: None,
    })
}

/// Draw i.i.d. bits with the given probability of 1.
pub fn random_bits(n: usize, p_one: f64, seed: u64) -> Vec<u8> {
    let mut rng = stream_rng(seed, 0);
    (0..n).map(|_| u8::from(rng.gen::<f64>() < p_one)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::ReleaseMode;

    fn fast_cfg(distance: f64, seed: u64) -> SimulationConfig {
        let mut cfg = SimulationConfig::for_distance(distance, seed);
        // Coarse integration keeps unit tests quick; bias is irrelevant here.
        cfg.micro_step = cfg.symbol_duration / 200.0;
        cfg
    }

    #[test]
    fn zero_diffusion_keeps_position() {
        let mut cfg = fast_cfg(4.0, 1);
        cfg.diffusion_coefficient = 0.0;
        let state = ParticleState::released(&cfg, 0.0);
        let mut rng = stream_rng(1, 0);
        let next = advance_particle(&state, &cfg, &mut rng);
        assert_eq!(next.position, state.position);
        assert!(!next.absorbed);
        assert_eq!(next.time, cfg.micro_step);
    }

    #[test]
    fn particle_inside_radius_absorbs_on_first_check() {
        let mut cfg = fast_cfg(4.0, 1);
        cfg.diffusion_coefficient = 1e-12;
        let state = ParticleState {
            position: [1.0, 0.0, 0.0],
            time: 0.0,
            absorbed: false,
            absorption_time: None,
        };
        let mut rng = stream_rng(1, 0);
        let next = advance_particle(&state, &cfg, &mut rng);
        assert!(next.absorbed);
        assert_eq!(next.absorption_time, Some(cfg.micro_step));
    }

    #[test]
    fn fast_diffusion_from_the_boundary_absorbs_in_slot_zero() {
        // Release just outside the absorption radius with a step length far
        // smaller than the receiver: the hit-ever probability a/r0 is ~1 and
        // the whole population lands in slot 0.
        let cfg = SimulationConfig {
            diffusion_coefficient: 50.0,
            receiver_radius: 10.0,
            transmitter_radius: 10.0,
            molecule_radius: 0.0,
            distance: 0.0005,
            symbol_duration: 0.1,
            micro_step: 1e-7,
            molecules_per_one: 50,
            molecules_per_zero: 0,
            rng_seed: 3,
            release_mode: ReleaseMode::Surface,
        };
        let hist = simulate_impulse(&cfg, 200, 1).unwrap();
        assert_eq!(hist.slot_counts, vec![200]);
    }

    #[test]
    fn impulse_fractions_decay_and_stay_below_hit_bound() {
        let cfg = fast_cfg(4.0, 7);
        let hist = simulate_impulse(&cfg, 4000, 6).unwrap();
        let f = hist.fractions();
        assert!(f[0] > f[1] && f[1] > f[2], "fractions should decay: {f:?}");
        let bound = cfg.receiver_radius / cfg.release_distance();
        let total: f64 = f.iter().sum();
        assert!(total < bound + 3.0 * (bound / 4000.0f64).sqrt());
        assert!(hist.total_absorbed() <= hist.emitted * hist.trials);
    }

    #[test]
    fn impulse_is_deterministic() {
        let cfg = fast_cfg(4.0, 11);
        let a = simulate_impulse(&cfg, 500, 3).unwrap();
        let b = simulate_impulse(&cfg, 500, 3).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn coefficient_estimate_shapes() {
        let cfg = fast_cfg(4.0, 5);
        let c = estimate_channel_coefficients(&cfg, 0, 500, 2).unwrap();
        assert_eq!(c.p.len(), 1);
        let c = estimate_channel_coefficients(&cfg, 4, 500, 2).unwrap();
        assert_eq!(c.p.len(), 5);
        assert!(c.p.iter().sum::<f64>() < 1.0);
        assert!(c.std_err.is_some());
    }

    #[test]
    fn all_zero_sequence_receives_nothing() {
        let cfg = fast_cfg(4.0, 9);
        let trace = simulate_sequence(&cfg, &[0, 0, 0, 0]).unwrap();
        assert_eq!(trace.rx_counts, vec![0, 0, 0, 0]);
    }

    #[test]
    fn lone_one_looks_like_an_impulse() {
        let cfg = fast_cfg(4.0, 13);
        let trace = simulate_sequence(&cfg, &[1, 0, 0]).unwrap();
        let total: u64 = trace.rx_counts.iter().sum();
        assert!(total <= u64::from(cfg.molecules_per_one));
        assert!(trace.rx_counts[0] >= trace.rx_counts[1]);
    }

    #[test]
    fn first_passage_curve_is_monotone() {
        let mut cfg = fast_cfg(4.0, 17);
        cfg.release_mode = ReleaseMode::Center;
        let ts = cfg.symbol_duration;
        let f = first_passage_fractions(&cfg, 2000, &[0.5 * ts, ts, 2.0 * ts]).unwrap();
        assert!(f[0] <= f[1] && f[1] <= f[2]);
        assert!(f[2] <= 1.0);
    }

    #[test]
    fn trace_demodulation_thresholds() {
        let mut trace = TransmissionTrace {
            tx_bits: vec![1, 0, 1],
            rx_counts: vec![5, 2, 0],
            rx_bits: None,
        };
        assert_eq!(trace.demodulate(2), &[1, 0, 0]);
    }
}
