//! Goodness-of-fit verification of the channel model against simulated
//! transmissions.
//!
//! For a scenario, the demodulated outputs of a simulated trace are tallied
//! per input window and compared with the model's conditional probabilities
//! by one pooled Pearson chi-square test over all `(window, y)` cells.
//! Ratios of good fits over scenario grids reproduce the model-validation
//! sweeps over awareness window, distance, and threshold.

use crate::config::{ReleaseMode, SimulationConfig};
use crate::error::{Error, Result};
use crate::model::{
    analytical_coefficients, demod_prob_tables, demodulate, ChannelCoefficients,
    DemodulationModel, Provenance,
};
use crate::rng::{derive_seed, tags};
use crate::sim::{estimate_channel_coefficients, random_bits, simulate_sequence};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::gamma_ur;

/// Expected count below which a cell must be merged before testing.
const MIN_EXPECTED: f64 = 5.0;

/// Expected count below which an observed event is treated as impossible
/// under the model. Observing such an event falsifies the model outright;
/// merging it away would hide exactly the mismatch the test exists to find.
const STRUCTURAL_ZERO: f64 = 1e-9;

/// Observed demodulation outcomes per input window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowCounts {
    pub eta: usize,
    pub tau: u32,
    /// `counts[w] = [n(y=0), n(y=1)]`, indexed by packed window.
    pub counts: Vec<[u64; 2]>,
    /// Demodulated slots tallied (slots with a complete history).
    pub total: u64,
}

impl WindowCounts {
    pub fn occurrences(&self, window: u32) -> u64 {
        let [a, b] = self.counts[window as usize];
        a + b
    }
}

/// Tally `(window, y)` observations of a trace, skipping the first `eta`
/// slots, whose history is incomplete.
pub fn collect_window_counts(
    trace: &crate::sim::TransmissionTrace,
    eta: usize,
    tau: u32,
) -> Result<WindowCounts> {
    if trace.len() <= eta {
        return Err(Error::InvalidConfig(format!(
            "trace of {} slots cannot fill an eta {eta} window",
            trace.len()
        )));
    }
    let mask = (1u32 << (eta + 1)) - 1;
    let mut counts = vec![[0u64; 2]; 1 << (eta + 1)];
    let mut window = 0u32;
    let mut total = 0u64;
    for (r, (&bit, &count)) in trace.tx_bits.iter().zip(&trace.rx_counts).enumerate() {
        window = ((window << 1) | u32::from(bit != 0)) & mask;
        if r >= eta {
            let y = demodulate(count, tau);
            counts[window as usize][usize::from(y)] += 1;
            total += 1;
        }
    }
    Ok(WindowCounts {
        eta,
        tau,
        counts,
        total,
    })
}

/// Outcome of one pooled chi-square test.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GofResult {
    pub statistic: f64,
    pub dof: usize,
    pub p_value: f64,
    pub good_fit: bool,
    pub cells_merged: usize,
}

/// Upper-tail chi-square probability `P(X > statistic)` at `dof` degrees of
/// freedom.
pub fn chi_square_survival(statistic: f64, dof: usize) -> f64 {
    if statistic <= 0.0 {
        return 1.0;
    }
    gamma_ur(dof as f64 / 2.0, statistic / 2.0)
}

#[derive(Debug)]
struct Cell {
    window: u32,
    y: u8,
    members: Vec<(u32, u8)>,
    observed: f64,
    expected: f64,
}

/// Pooled Pearson chi-square of observed window outcomes against the model
/// table.
///
/// Expected counts are `occurrences(w) * P(y | w)`. Never-observed windows
/// are excluded. An observation in a cell whose expected count is below
/// `STRUCTURAL_ZERO` is impossible under the model and yields a divergent
/// statistic. Otherwise cells with expected count below 5 are merged into the
/// opposite-`y` cell of the same window first, then into the nearest cell by
/// window Hamming distance (lowest packed index breaking ties), reducing the
/// degrees of freedom (`cells - 1`) accordingly.
pub fn chi_square_gof(
    obs: &WindowCounts,
    model: &DemodulationModel,
    alpha: f64,
) -> Result<GofResult> {
    if model.eta() != obs.eta {
        return Err(Error::InvalidConfig(format!(
            "model eta {} does not match observations eta {}",
            model.eta(),
            obs.eta
        )));
    }

    let mut cells: Vec<Cell> = Vec::new();
    for (w, &[n0, n1]) in obs.counts.iter().enumerate() {
        let occ = n0 + n1;
        if occ == 0 {
            continue;
        }
        let w = w as u32;
        for (y, o) in [(0u8, n0), (1u8, n1)] {
            let expected = occ as f64 * model.prob(w, y);
            let observed = o as f64;
            if expected < STRUCTURAL_ZERO {
                if observed > 0.0 {
                    // Impossible under the model: reject outright.
                    return Ok(GofResult {
                        statistic: f64::INFINITY,
                        dof: 0,
                        p_value: 0.0,
                        good_fit: false,
                        cells_merged: 0,
                    });
                }
                continue;
            }
            cells.push(Cell {
                window: w,
                y,
                members: vec![(w, y)],
                observed,
                expected,
            });
        }
    }

    let mut merged = 0usize;
    loop {
        if cells.len() < 2 {
            return Err(Error::TestInapplicable(cells.len()));
        }
        let Some(src) = cells
            .iter()
            .enumerate()
            .filter(|(_, c)| c.expected < MIN_EXPECTED)
            .min_by(|(_, a), (_, b)| {
                a.expected
                    .partial_cmp(&b.expected)
                    .unwrap()
                    .then(a.window.cmp(&b.window))
                    .then(a.y.cmp(&b.y))
            })
            .map(|(i, _)| i)
        else {
            break;
        };

        let (w, y) = (cells[src].window, cells[src].y);
        let sibling = (w, 1 - y);
        let dst = cells
            .iter()
            .enumerate()
            .filter(|&(i, _)| i != src)
            .find(|(_, c)| c.members.contains(&sibling))
            .map(|(i, _)| i)
            .unwrap_or_else(|| {
                cells
                    .iter()
                    .enumerate()
                    .filter(|&(i, _)| i != src)
                    .min_by_key(|(_, c)| ((c.window ^ w).count_ones(), c.window, c.y))
                    .map(|(i, _)| i)
                    .expect("at least two cells")
            });

        let src_cell = cells.swap_remove(src);
        // swap_remove may have moved dst; recompute by identity.
        let dst = if dst == cells.len() { src } else { dst };
        let dst_cell = &mut cells[dst];
        dst_cell.observed += src_cell.observed;
        dst_cell.expected += src_cell.expected;
        dst_cell.members.extend(src_cell.members);
        merged += 1;
    }

    let statistic: f64 = cells
        .iter()
        .map(|c| {
            let d = c.observed - c.expected;
            d * d / c.expected
        })
        .sum();
    let dof = cells.len() - 1;
    let p_value = chi_square_survival(statistic, dof);
    Ok(GofResult {
        statistic,
        dof,
        p_value,
        good_fit: p_value > alpha,
        cells_merged: merged,
    })
}

/// Per-window diagnostic: a separate two-cell test for every observed window
/// with enough mass, for inspecting where a pooled rejection comes from.
pub fn per_window_gof(
    obs: &WindowCounts,
    model: &DemodulationModel,
    alpha: f64,
) -> Vec<(u32, GofResult)> {
    (0..obs.counts.len() as u32)
        .filter(|&w| obs.occurrences(w) > 0)
        .filter_map(|w| {
            let single = WindowCounts {
                eta: obs.eta,
                tau: obs.tau,
                counts: {
                    let mut c = vec![[0u64; 2]; obs.counts.len()];
                    c[w as usize] = obs.counts[w as usize];
                    c
                },
                total: obs.occurrences(w),
            };
            chi_square_gof(&single, model, alpha).ok().map(|g| (w, g))
        })
        .collect()
}

/// Scenario axes and sampling scale for a fit-ratio sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitGridParams {
    pub distances: Vec<f64>,
    pub etas: Vec<usize>,
    pub taus: Vec<u32>,
    pub alphas: Vec<f64>,
    pub bits_per_trace: usize,
    pub repetitions: u64,
    /// Probability of transmitting 1.
    pub p_one: f64,
    /// Coefficient source for the model side of the test.
    pub provenance: Provenance,
    /// Molecules pooled when estimating Monte Carlo coefficients.
    pub coeff_molecules: u64,
    pub release_mode: ReleaseMode,
    pub seed: u64,
}

impl FitGridParams {
    /// Desk scale: 1000-bit traces, 10 repetitions.
    pub fn desk(seed: u64) -> Self {
        Self {
            distances: vec![4.0, 8.0, 12.0, 16.0, 20.0, 24.0],
            etas: (0..=14).collect(),
            taus: (1..=50).collect(),
            alphas: vec![0.01, 0.05],
            bits_per_trace: 1000,
            repetitions: 10,
            p_one: 0.5,
            provenance: Provenance::MonteCarlo,
            coeff_molecules: 100_000,
            release_mode: ReleaseMode::Surface,
            seed,
        }
    }

    /// Full scale: 10000-bit traces, 30 repetitions.
    pub fn paper(seed: u64) -> Self {
        Self {
            bits_per_trace: 10_000,
            repetitions: 30,
            coeff_molecules: 1_000_000,
            ..Self::desk(seed)
        }
    }

    pub fn max_eta(&self) -> usize {
        self.etas.iter().copied().max().unwrap_or(0)
    }

    fn validate(&self) -> Result<()> {
        if self.distances.is_empty()
            || self.etas.is_empty()
            || self.taus.is_empty()
            || self.alphas.is_empty()
        {
            return Err(Error::InvalidConfig("fit grid axes must be non-empty".into()));
        }
        if self.repetitions == 0 || self.bits_per_trace <= self.max_eta() {
            return Err(Error::InvalidConfig(
                "fit grid needs repetitions and traces longer than the largest window".into(),
            ));
        }
        Ok(())
    }
}

/// Good-fit tally for one `(d, eta, tau, alpha)` grid cell across
/// repetitions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitCell {
    pub distance: f64,
    pub eta: usize,
    pub tau: u32,
    pub alpha: f64,
    pub n_good: u64,
    pub n_tested: u64,
    /// Repetitions where the test was inapplicable.
    pub n_excluded: u64,
}

impl FitCell {
    pub fn ratio(&self) -> f64 {
        if self.n_tested == 0 {
            f64::NAN
        } else {
            self.n_good as f64 / self.n_tested as f64
        }
    }
}

/// Long-format good-fit ratios over the scenario grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitGrid {
    pub params: FitGridParams,
    pub cells: Vec<FitCell>,
}

impl FitGrid {
    /// Pooled good-fit ratio over every cell selected by the filter.
    pub fn pooled_ratio<F: Fn(&FitCell) -> bool>(&self, filter: F) -> f64 {
        let (good, tested) = self
            .cells
            .iter()
            .filter(|c| filter(c))
            .fold((0u64, 0u64), |(g, t), c| (g + c.n_good, t + c.n_tested));
        if tested == 0 {
            f64::NAN
        } else {
            good as f64 / tested as f64
        }
    }

    /// Ratio versus awareness window, pooled over distance, threshold, and
    /// repetitions.
    pub fn ratio_vs_eta(&self, alpha: f64) -> Vec<(usize, f64)> {
        self.params
            .etas
            .iter()
            .map(|&eta| {
                (
                    eta,
                    self.pooled_ratio(|c| c.eta == eta && c.alpha == alpha),
                )
            })
            .collect()
    }

    /// Ratio per (eta, distance), pooled over thresholds and repetitions.
    pub fn ratio_by_eta_distance(&self, alpha: f64) -> Vec<(usize, f64, f64)> {
        let mut out = Vec::new();
        for &eta in &self.params.etas {
            for &d in &self.params.distances {
                let r = self.pooled_ratio(|c| {
                    c.eta == eta && c.distance == d && c.alpha == alpha
                });
                out.push((eta, d, r));
            }
        }
        out
    }

    /// Ratio per (tau, distance) at one awareness window, pooled over
    /// repetitions (one heat map panel).
    pub fn ratio_by_tau_distance(&self, eta: usize, alpha: f64) -> Vec<(u32, f64, f64)> {
        let mut out = Vec::new();
        for &tau in &self.params.taus {
            for &d in &self.params.distances {
                let r = self.pooled_ratio(|c| {
                    c.eta == eta && c.tau == tau && c.distance == d && c.alpha == alpha
                });
                out.push((tau, d, r));
            }
        }
        out
    }
}

/// Run the full verification sweep: per distance, estimate (or derive)
/// coefficients, simulate repeated random transmissions, and chi-square test
/// every `(eta, tau)` model table against every trace.
pub fn run_fit_grid(params: &FitGridParams) -> Result<FitGrid> {
    params.validate()?;
    let eta_max = params.max_eta();
    let mut cells = Vec::new();

    for (di, &distance) in params.distances.iter().enumerate() {
        let mut cfg = SimulationConfig::for_distance(distance, params.seed);
        cfg.release_mode = params.release_mode;

        let coeffs = grid_coefficients(&cfg, eta_max, params, di)?;

        // Per-eta demodulation tables over the whole threshold axis.
        let tables: Vec<Vec<DemodulationModel>> = params
            .etas
            .par_iter()
            .map(|&eta| {
                let truncated = coeffs.truncated(eta).expect("eta <= eta_max");
                demod_prob_tables(&truncated, cfg.molecules_per_one, &params.taus)
            })
            .collect();

        let traces: Vec<crate::sim::TransmissionTrace> = (0..params.repetitions)
            .map(|rep| {
                let scenario = (di as u64) << 32 | rep;
                let mut trace_cfg = cfg.clone();
                trace_cfg.rng_seed = derive_seed(params.seed, tags::FIT_TRACE, scenario);
                let bits = random_bits(
                    params.bits_per_trace,
                    params.p_one,
                    derive_seed(params.seed, tags::BITS, scenario),
                );
                simulate_sequence(&trace_cfg, &bits)
            })
            .collect::<Result<_>>()?;

        // One verdict per (eta, tau, rep); alphas reuse the same p-value.
        let verdicts: Vec<Vec<Option<f64>>> = params
            .etas
            .par_iter()
            .enumerate()
            .map(|(ei, &eta)| {
                let mut row = Vec::with_capacity(params.taus.len() * traces.len());
                for (ti, _tau) in params.taus.iter().enumerate() {
                    let model = &tables[ei][ti];
                    for trace in &traces {
                        let obs = collect_window_counts(trace, eta, model.tau())
                            .expect("trace longer than window");
                        row.push(match chi_square_gof(&obs, model, 0.0) {
                            Ok(gof) => Some(gof.p_value),
                            Err(Error::TestInapplicable(_)) => None,
                            Err(e) => panic!("unexpected gof failure: {e}"),
                        });
                    }
                }
                row
            })
            .collect();

        for (ei, &eta) in params.etas.iter().enumerate() {
            for (ti, &tau) in params.taus.iter().enumerate() {
                for &alpha in &params.alphas {
                    let mut cell = FitCell {
                        distance,
                        eta,
                        tau,
                        alpha,
                        n_good: 0,
                        n_tested: 0,
                        n_excluded: 0,
                    };
                    for rep in 0..traces.len() {
                        match verdicts[ei][ti * traces.len() + rep] {
                            Some(p) => {
                                cell.n_tested += 1;
                                if p > alpha {
                                    cell.n_good += 1;
                                }
                            }
                            None => cell.n_excluded += 1,
                        }
                    }
                    cells.push(cell);
                }
            }
        }
    }

    Ok(FitGrid {
        params: params.clone(),
        cells,
    })
}

fn grid_coefficients(
    cfg: &SimulationConfig,
    eta_max: usize,
    params: &FitGridParams,
    distance_index: usize,
) -> Result<ChannelCoefficients> {
    match params.provenance {
        Provenance::Analytical => analytical_coefficients(cfg, eta_max),
        Provenance::MonteCarlo => {
            let mut coeff_cfg = cfg.clone();
            coeff_cfg.rng_seed = derive_seed(params.seed, tags::COEFFS, distance_index as u64);
            estimate_channel_coefficients(&coeff_cfg, eta_max, params.coeff_molecules, 1)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::demod_prob_table;
    use crate::sim::TransmissionTrace;
    use approx::assert_abs_diff_eq;

    fn coeffs(p: &[f64]) -> ChannelCoefficients {
        ChannelCoefficients::new(p.to_vec(), Provenance::Analytical).unwrap()
    }

    fn trace(tx: &[u8], rx: &[u64]) -> TransmissionTrace {
        TransmissionTrace {
            tx_bits: tx.to_vec(),
            rx_counts: rx.to_vec(),
            rx_bits: None,
        }
    }

    #[test]
    fn window_counts_all_zero_trace() {
        let t = trace(&[0; 8], &[0; 8]);
        let obs = collect_window_counts(&t, 2, 1).unwrap();
        assert_eq!(obs.total, 6);
        assert_eq!(obs.counts[0], [6, 0]);
        assert!(obs.counts[1..].iter().all(|&c| c == [0, 0]));
    }

    #[test]
    fn window_counts_boundary_single_slot() {
        let t = trace(&[1, 0, 1], &[9, 1, 7]);
        let obs = collect_window_counts(&t, 2, 3).unwrap();
        assert_eq!(obs.total, 1);
        // Window 101 observed once with y = demod(7 > 3) = 1.
        assert_eq!(obs.counts[0b101], [0, 1]);
    }

    #[test]
    fn window_counts_requires_history() {
        let t = trace(&[1, 0], &[0, 0]);
        assert!(collect_window_counts(&t, 2, 1).is_err());
    }

    #[test]
    fn perfect_agreement_gives_zero_statistic() {
        // Model: P(y=0 | w) with p = [0.5], n_one = 1, tau = 0:
        // w=0 -> 1.0, w=1 -> 0.5.
        let model = demod_prob_table(&coeffs(&[0.5]), 1, 0);
        let obs = WindowCounts {
            eta: 0,
            tau: 0,
            counts: vec![[40, 0], [20, 20]],
            total: 80,
        };
        let gof = chi_square_gof(&obs, &model, 0.01).unwrap();
        assert_abs_diff_eq!(gof.statistic, 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(gof.p_value, 1.0, epsilon = 1e-12);
        assert!(gof.good_fit);
    }

    #[test]
    fn impossible_observation_rejects_outright() {
        // All-zero window can never demodulate to 1 under the model.
        let model = demod_prob_table(&coeffs(&[0.5]), 1, 0);
        let obs = WindowCounts {
            eta: 0,
            tau: 0,
            counts: vec![[35, 5], [20, 20]],
            total: 80,
        };
        let gof = chi_square_gof(&obs, &model, 0.01).unwrap();
        assert!(gof.statistic.is_infinite());
        assert_eq!(gof.p_value, 0.0);
        assert!(!gof.good_fit);
    }

    #[test]
    fn sparse_cells_merge() {
        // p = [0.5], n_one = 2, tau = 1: P(y=1 | w=1) = 0.25, so 16
        // occurrences of w=1 leave E(w=1, y=1) = 4 < 5 and force a merge.
        let model = demod_prob_table(&coeffs(&[0.5]), 2, 1);
        let obs = WindowCounts {
            eta: 0,
            tau: 1,
            counts: vec![[100, 0], [15, 1]],
            total: 116,
        };
        let gof = chi_square_gof(&obs, &model, 0.01).unwrap();
        assert!(gof.cells_merged > 0);
        assert!(gof.statistic.is_finite());
        assert_eq!(gof.dof, 1);
    }

    #[test]
    fn too_little_data_is_inapplicable() {
        let model = demod_prob_table(&coeffs(&[0.5]), 1, 0);
        let obs = WindowCounts {
            eta: 0,
            tau: 0,
            counts: vec![[2, 0], [1, 1]],
            total: 4,
        };
        assert!(matches!(
            chi_square_gof(&obs, &model, 0.01),
            Err(Error::TestInapplicable(_))
        ));
    }

    #[test]
    fn survival_function_endpoints() {
        assert_eq!(chi_square_survival(0.0, 5), 1.0);
        let p = chi_square_survival(100.0, 2);
        assert!(p < 1e-20);
        // chi2 with 2 dof: P(X > x) = exp(-x/2).
        assert_abs_diff_eq!(
            chi_square_survival(3.0, 2),
            (-1.5f64).exp(),
            epsilon = 1e-12
        );
    }

    #[test]
    fn smaller_alpha_never_lowers_ratio() {
        let model = demod_prob_table(&coeffs(&[0.5]), 2, 1);
        let obs = WindowCounts {
            eta: 0,
            tau: 1,
            counts: vec![[200, 0], [160, 40]],
            total: 400,
        };
        let strict = chi_square_gof(&obs, &model, 0.01).unwrap();
        let loose = chi_square_gof(&obs, &model, 0.05).unwrap();
        assert!(strict.good_fit as u8 >= loose.good_fit as u8);
    }

    #[test]
    fn per_window_diagnostic_accepts_perfect_data() {
        let model = demod_prob_table(&coeffs(&[0.5]), 1, 0);
        // Occurrences proportional to the table: w=1 has P(y=0) = 0.5.
        let obs = WindowCounts {
            eta: 0,
            tau: 0,
            counts: vec![[40, 0], [30, 30]],
            total: 100,
        };
        for (_, gof) in per_window_gof(&obs, &model, 0.01) {
            assert!(gof.good_fit);
        }
    }

    #[test]
    fn single_cell_grid_reproduces_direct_test() {
        use crate::rng::{derive_seed, tags};
        let params = FitGridParams {
            distances: vec![4.0],
            etas: vec![1],
            taus: vec![10],
            alphas: vec![0.01],
            bits_per_trace: 200,
            repetitions: 1,
            p_one: 0.5,
            provenance: Provenance::Analytical,
            coeff_molecules: 0,
            release_mode: ReleaseMode::Surface,
            seed: 5,
        };
        let grid = run_fit_grid(&params).unwrap();
        assert_eq!(grid.cells.len(), 1);

        // Reproduce the grid's single scenario by hand.
        let mut cfg = SimulationConfig::for_distance(4.0, params.seed);
        cfg.rng_seed = derive_seed(params.seed, tags::FIT_TRACE, 0);
        let bits = random_bits(200, 0.5, derive_seed(params.seed, tags::BITS, 0));
        let t = simulate_sequence(&cfg, &bits).unwrap();
        let coeffs = analytical_coefficients(&SimulationConfig::for_distance(4.0, params.seed), 1)
            .unwrap();
        let model = demod_prob_table(&coeffs, cfg.molecules_per_one, 10);
        let obs = collect_window_counts(&t, 1, 10).unwrap();
        let direct = chi_square_gof(&obs, &model, 0.01).unwrap();
        assert_eq!(grid.cells[0].n_good, u64::from(direct.good_fit));
        assert_eq!(grid.cells[0].n_tested, 1);
    }

    #[test]
    fn tiny_fit_grid_runs() {
        let params = FitGridParams {
            distances: vec![4.0],
            etas: vec![0, 1],
            taus: vec![5, 20],
            alphas: vec![0.01],
            bits_per_trace: 120,
            repetitions: 2,
            p_one: 0.5,
            provenance: Provenance::Analytical,
            coeff_molecules: 0,
            release_mode: ReleaseMode::Surface,
            seed: 42,
        };
        let grid = run_fit_grid(&params).unwrap();
        // 1 distance x 2 etas x 2 taus x 1 alpha.
        assert_eq!(grid.cells.len(), 4);
        for cell in &grid.cells {
            assert_eq!(cell.n_tested + cell.n_excluded, 2);
        }
        // Deterministic given the seed.
        let again = run_fit_grid(&params).unwrap();
        assert_eq!(grid, again);
    }
}
