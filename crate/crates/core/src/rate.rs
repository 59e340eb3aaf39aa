//! Achievable-rate analysis of the finite-state ISI channel.
//!
//! The channel defined by a demodulation table is a finite-state machine
//! whose state is the window of the last `eta + 1` transmitted bits. With
//! i.i.d. inputs, `H(Y|X)` is exact (outputs are conditionally independent
//! given the input window) while `H(Y)` is estimated as the sample entropy
//! rate of a long simulated output sequence, computing `p(y_1..y_n)` with the
//! forward state-sum recursion and per-step renormalization. The mutual
//! information rate is their difference; scanning thresholds and input
//! distributions and taking the maximum gives the achievable rate.

use crate::error::{Error, Result};
use crate::model::DemodulationModel;
use crate::rng::{derive_seed, stream_rng, tags};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Burn-in discarded from entropy averages, in multiples of `eta + 1` slots.
const BURN_IN_WINDOWS: usize = 10;

/// i.i.d. input distribution: probability of transmitting 1.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InputDistribution {
    pub p_one: f64,
}

impl InputDistribution {
    pub fn new(p_one: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&p_one) {
            return Err(Error::InvalidConfig(format!(
                "p_one = {p_one} outside [0, 1]"
            )));
        }
        Ok(Self { p_one })
    }

    /// Probability of a window under i.i.d. bits.
    fn window_prob(&self, window: u32, width: usize) -> f64 {
        let ones = window.count_ones() as i32;
        self.p_one.powi(ones) * (1.0 - self.p_one).powi(width as i32 - ones)
    }
}

/// Binary entropy in bits.
pub fn binary_entropy(p: f64) -> f64 {
    if p <= 0.0 || p >= 1.0 {
        0.0
    } else {
        -(p * p.log2() + (1.0 - p) * (1.0 - p).log2())
    }
}

/// Shift-register view of the demodulation table: states are the
/// `2^(eta+1)` input windows, each with two outgoing transitions, emitting
/// `y` according to the table of the state just entered.
#[derive(Debug, Clone, Copy)]
pub struct ChannelStateMachine<'a> {
    model: &'a DemodulationModel,
}

impl<'a> ChannelStateMachine<'a> {
    pub fn new(model: &'a DemodulationModel) -> Self {
        Self { model }
    }

    pub fn state_count(&self) -> usize {
        self.model.window_count()
    }

    /// Idle channel before the first slot.
    pub fn initial_state(&self) -> u32 {
        0
    }

    pub fn next_state(&self, state: u32, x: u8) -> u32 {
        ((state << 1) | u32::from(x != 0)) & (self.state_count() as u32 - 1)
    }

    pub fn prob_y0(&self, state: u32) -> f64 {
        self.model.prob_y0(state)
    }
}

/// Exact `H(Y|X)` in bits per channel use: the window-probability-weighted
/// binary entropy of the table.
pub fn conditional_entropy_rate(model: &DemodulationModel, input: &InputDistribution) -> f64 {
    let width = model.eta() + 1;
    (0..model.window_count() as u32)
        .map(|w| input.window_prob(w, width) * binary_entropy(model.prob_y0(w)))
        .sum()
}

/// Draw an (input, output) pair of sequences from the channel driven by
/// i.i.d. inputs, starting from the idle (all-zero) state.
pub fn sample_channel_sequence(
    model: &DemodulationModel,
    input: &InputDistribution,
    n: usize,
    seed: u64,
) -> (Vec<u8>, Vec<u8>) {
    let machine = ChannelStateMachine::new(model);
    let mut rng = stream_rng(seed, 0);
    let mut state = machine.initial_state();
    let mut xs = Vec::with_capacity(n);
    let mut ys = Vec::with_capacity(n);
    for _ in 0..n {
        let x = u8::from(rng.gen::<f64>() < input.p_one);
        state = machine.next_state(state, x);
        xs.push(x);
        ys.push(u8::from(rng.gen::<f64>() >= machine.prob_y0(state)));
    }
    (xs, ys)
}

/// Demodulated-output sequence of length `n`; the inputs are drawn and
/// discarded.
pub fn sample_output_sequence(
    model: &DemodulationModel,
    input: &InputDistribution,
    n: usize,
    seed: u64,
) -> Vec<u8> {
    sample_channel_sequence(model, input, n, seed).1
}

/// Forward state-sum recursion over the whole sequence; returns the log2 of
/// the per-step conditional probabilities `p(y_r | y_1..y_{r-1})`, whose sum
/// is `log2 p(y_1..y_n)`.
///
/// The state vector starts concentrated on the all-zero window; each step
/// folds the previous step's normalizer back in, which is per-step
/// renormalization without an extra pass.
fn forward_step_log2(
    y: &[u8],
    model: &DemodulationModel,
    input: &InputDistribution,
) -> Result<Vec<f64>> {
    let states = model.window_count();
    let half = states >> 1;
    let p1 = input.p_one;
    let p0 = 1.0 - p1;

    // g[y][s] = p(x = low bit of s) * P(y | s)
    let mut g0 = vec![0.0f64; states];
    let mut g1 = vec![0.0f64; states];
    for s in 0..states {
        let px = if s & 1 == 1 { p1 } else { p0 };
        let q = model.prob_y0(s as u32);
        g0[s] = px * q;
        g1[s] = px * (1.0 - q);
    }

    // Posterior mass this far below the per-step maximum is beyond double
    // precision anyway; flushing it avoids subnormal arithmetic.
    const FLUSH: f64 = 1e-280;

    let mut alpha = vec![0.0f64; states];
    let mut next = vec![0.0f64; states];
    alpha[0] = 1.0;
    let mut inv_norm = 1.0f64;
    let mut logs = Vec::with_capacity(y.len());
    for (r, &yr) in y.iter().enumerate() {
        let g = if yr == 0 { &g0 } else { &g1 };
        let mut sum = 0.0;
        // States 2j and 2j+1 share the same two predecessors j and j+half.
        for j in 0..half {
            let t = (alpha[j] + alpha[j + half]) * inv_norm;
            let a = g[2 * j] * t;
            let b = g[2 * j + 1] * t;
            next[2 * j] = if a < FLUSH { 0.0 } else { a };
            next[2 * j + 1] = if b < FLUSH { 0.0 } else { b };
            sum += a + b;
        }
        if sum <= 0.0 || sum.is_nan() {
            return Err(Error::InconsistentModel { step: r + 1 });
        }
        logs.push(sum.log2());
        inv_norm = 1.0 / sum;
        std::mem::swap(&mut alpha, &mut next);
    }
    Ok(logs)
}

/// `log2 p(y_1..y_n)` under the channel law with i.i.d. inputs marginalized
/// out.
pub fn forward_log2_prob(
    y: &[u8],
    model: &DemodulationModel,
    input: &InputDistribution,
) -> Result<f64> {
    Ok(forward_step_log2(y, model, input)?.iter().sum())
}

/// Sample entropy rate `-(1/n) log2 p(y_1..y_n)` in bits per channel use.
pub fn forward_entropy_estimate(
    y: &[u8],
    model: &DemodulationModel,
    input: &InputDistribution,
) -> Result<f64> {
    if y.is_empty() {
        return Err(Error::InvalidConfig("output sequence must be non-empty".into()));
    }
    Ok(-forward_log2_prob(y, model, input)? / y.len() as f64)
}

/// Mutual-information estimate with its cross-seed standard error.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MiEstimate {
    pub i_bits: f64,
    pub h_y: f64,
    pub h_y_given_x: f64,
    /// Standard error of the mean over seeds; absent with a single seed.
    pub std_err: Option<f64>,
    pub n: usize,
    pub n_seeds: usize,
}

/// Estimate `I = H(Y) - H(Y|X)` in bits per channel use.
///
/// One output sequence of `burn + n` slots is sampled per seed; the entropy
/// average discards the burn-in (`10 (eta+1)` slots) to wash out the idle
/// start. `H(Y|X)` is exact.
pub fn mutual_information_rate(
    model: &DemodulationModel,
    input: &InputDistribution,
    n: usize,
    seeds: &[u64],
) -> Result<MiEstimate> {
    if n == 0 || seeds.is_empty() {
        return Err(Error::InvalidConfig(
            "entropy estimation needs n > 0 and at least one seed".into(),
        ));
    }
    let burn = BURN_IN_WINDOWS * (model.eta() + 1);
    let estimates: Vec<Result<f64>> = seeds
        .par_iter()
        .map(|&seed| {
            let y = sample_output_sequence(model, input, burn + n, seed);
            let logs = forward_step_log2(&y, model, input)?;
            Ok(-logs[burn..].iter().sum::<f64>() / n as f64)
        })
        .collect();
    let estimates: Vec<f64> = estimates.into_iter().collect::<Result<_>>()?;
    let k = estimates.len() as f64;
    let h_y = estimates.iter().sum::<f64>() / k;
    let std_err = (estimates.len() > 1).then(|| {
        let var = estimates.iter().map(|e| (e - h_y) * (e - h_y)).sum::<f64>() / (k - 1.0);
        (var / k).sqrt()
    });
    let h_y_given_x = conditional_entropy_rate(model, input);
    Ok(MiEstimate {
        i_bits: h_y - h_y_given_x,
        h_y,
        h_y_given_x,
        std_err,
        n,
        n_seeds: seeds.len(),
    })
}

/// Sampling scale for an achievable-rate scan.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateParams {
    /// Sequence length for the final estimates.
    pub n: usize,
    /// Seeds for the final estimates.
    pub n_seeds: usize,
    /// Shorter sequence length used to survey the whole grid.
    pub survey_n: usize,
    /// Number of top survey cells re-estimated at full scale.
    pub refine_top: usize,
    pub master_seed: u64,
}

impl RateParams {
    /// Desk scale: n = 1e5.
    pub fn desk(master_seed: u64) -> Self {
        Self {
            n: 100_000,
            n_seeds: 2,
            survey_n: 2_000,
            refine_top: 5,
            master_seed,
        }
    }

    /// Full scale: n = 1e6 with 10 seeds.
    pub fn paper(master_seed: u64) -> Self {
        Self {
            n: 1_000_000,
            n_seeds: 10,
            survey_n: 50_000,
            refine_top: 8,
            master_seed,
        }
    }

    fn seeds(&self, count: usize) -> Vec<u64> {
        (0..count as u64)
            .map(|i| derive_seed(self.master_seed, tags::RATE_SAMPLE, i))
            .collect()
    }
}

/// Default threshold axis, 1 ..= 50.
pub fn default_tau_grid() -> Vec<u32> {
    (1..=50).collect()
}

/// Default input-distribution axis, 0.05 ..= 0.95 in steps of 0.05.
pub fn default_p_one_grid() -> Vec<f64> {
    (1..=19).map(|i| i as f64 / 20.0).collect()
}

/// One cell of the mutual-information surface.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatePoint {
    pub tau: u32,
    pub p_one: f64,
    pub i_bits: f64,
    pub std_err: Option<f64>,
    pub n: usize,
    /// True once the cell was re-estimated at full scale.
    pub refined: bool,
}

/// Mutual-information surface over `(tau, p_one)` with its maximum.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateSurface {
    pub eta: usize,
    pub n_one: u32,
    /// Symbol duration used for the bits-per-second conversion.
    pub t_s: f64,
    pub points: Vec<RatePoint>,
    pub argmax_tau: u32,
    pub argmax_p_one: f64,
    pub achievable_rate_bits_per_use: f64,
    pub achievable_rate_bits_per_sec: f64,
    pub n: usize,
    pub n_seeds: usize,
}

/// Ordering for the argmax: larger rate first, ties by smaller threshold,
/// then input closest to equiprobable.
fn better(a: (f64, u32, f64), b: (f64, u32, f64)) -> bool {
    if a.0 != b.0 {
        return a.0 > b.0;
    }
    if a.1 != b.1 {
        return a.1 < b.1;
    }
    (a.2 - 0.5).abs() < (b.2 - 0.5).abs()
}

/// Scan the `(tau, p_one)` grid for the model family and report the
/// achievable rate.
///
/// `models` holds one demodulation table per entry of the threshold axis
/// (same coefficients, same `eta`). The whole grid is first surveyed at
/// `survey_n` with one seed; the best `refine_top` cells are then
/// re-estimated at full `(n, seeds)` scale and the maximum is taken over the
/// refined cells.
pub fn achievable_rate(
    models: &[DemodulationModel],
    p_ones: &[f64],
    t_s: f64,
    params: &RateParams,
) -> Result<RateSurface> {
    if models.is_empty() || p_ones.is_empty() {
        return Err(Error::InvalidConfig("rate grids must be non-empty".into()));
    }
    let eta = models[0].eta();
    if models.iter().any(|m| m.eta() != eta) {
        return Err(Error::InvalidConfig(
            "model family must share one awareness window".into(),
        ));
    }
    let inputs: Vec<InputDistribution> = p_ones
        .iter()
        .map(|&p| InputDistribution::new(p))
        .collect::<Result<_>>()?;

    let survey_seeds = params.seeds(1);
    let mut points: Vec<RatePoint> = models
        .par_iter()
        .flat_map_iter(|model| inputs.iter().map(move |input| (model, input)))
        .map(|(model, input)| {
            let est = mutual_information_rate(model, input, params.survey_n, &survey_seeds)?;
            Ok(RatePoint {
                tau: model.tau(),
                p_one: input.p_one,
                i_bits: est.i_bits,
                std_err: est.std_err,
                n: params.survey_n,
                refined: false,
            })
        })
        .collect::<Result<_>>()?;

    // Refine the most promising cells at full scale.
    let mut order: Vec<usize> = (0..points.len()).collect();
    order.sort_by(|&a, &b| {
        let ka = (points[a].i_bits, points[a].tau, points[a].p_one);
        let kb = (points[b].i_bits, points[b].tau, points[b].p_one);
        if better(ka, kb) {
            std::cmp::Ordering::Less
        } else {
            std::cmp::Ordering::Greater
        }
    });
    let refine: Vec<usize> = order.into_iter().take(params.refine_top.max(1)).collect();
    let full_seeds = params.seeds(params.n_seeds.max(1));
    let tau_index: std::collections::HashMap<u32, usize> = models
        .iter()
        .enumerate()
        .map(|(i, m)| (m.tau(), i))
        .collect();
    let refined: Vec<(usize, MiEstimate)> = refine
        .par_iter()
        .map(|&idx| {
            let model = &models[tau_index[&points[idx].tau]];
            let input = InputDistribution::new(points[idx].p_one)?;
            Ok((
                idx,
                mutual_information_rate(model, &input, params.n, &full_seeds)?,
            ))
        })
        .collect::<Result<_>>()?;
    for (idx, est) in refined {
        points[idx] = RatePoint {
            tau: points[idx].tau,
            p_one: points[idx].p_one,
            i_bits: est.i_bits,
            std_err: est.std_err,
            n: est.n,
            refined: true,
        };
    }

    let best = points
        .iter()
        .filter(|p| p.refined)
        .fold(None::<&RatePoint>, |acc, p| match acc {
            Some(cur) if !better((p.i_bits, p.tau, p.p_one), (cur.i_bits, cur.tau, cur.p_one)) => {
                Some(cur)
            }
            _ => Some(p),
        })
        .expect("at least one refined cell");

    Ok(RateSurface {
        eta,
        n_one: models[0].n_one(),
        t_s,
        argmax_tau: best.tau,
        argmax_p_one: best.p_one,
        achievable_rate_bits_per_use: best.i_bits,
        achievable_rate_bits_per_sec: best.i_bits / t_s,
        n: params.n,
        n_seeds: params.n_seeds,
        points,
    })
}
