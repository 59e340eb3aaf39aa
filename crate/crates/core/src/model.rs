//! ISI-aware binomial channel model.
//!
//! A molecule emitted at the start of a slot is absorbed with a delay of `i`
//! whole slots with probability `p_i`. Reception of the `N_1` molecules of one
//! emission is then binomial per delay, and the count received in a slot is
//! the sum of the delayed binomials of the last `eta + 1` emissions, computed
//! by `eta` successive PMF convolutions. Thresholding that count gives the
//! demodulation probability table over all `2^(eta+1)` input windows.
//!
//! Window convention: a window lists the bits `x_{r-eta} .. x_r` oldest
//! first. The packed integer form puts `x_{r-k}` at bit `k`, so the bit
//! string read left to right is the binary rendering of the packed index.

use crate::config::SimulationConfig;
use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;
use statrs::function::factorial::ln_binomial;
use std::collections::BTreeMap;

/// How a coefficient vector was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Provenance {
    MonteCarlo,
    Analytical,
}

/// Delay-probability vector `p_0 .. p_eta` plus the mass never absorbed
/// within the window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelCoefficients {
    pub eta: usize,
    pub p: Vec<f64>,
    /// `1 - sum(p)`: mass not received within the awareness window.
    pub survival: f64,
    pub provenance: Provenance,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub std_err: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub warnings: Vec<String>,
}

impl ChannelCoefficients {
    pub fn new(p: Vec<f64>, provenance: Provenance) -> Result<Self> {
        if p.is_empty() {
            return Err(Error::InvalidConfig(
                "coefficient vector must not be empty".into(),
            ));
        }
        let mut sum = 0.0;
        for (i, &pi) in p.iter().enumerate() {
            if !(0.0..=1.0).contains(&pi) {
                return Err(Error::InvalidConfig(format!(
                    "p_{i} = {pi} outside [0, 1]"
                )));
            }
            sum += pi;
        }
        if sum > 1.0 + 1e-9 {
            return Err(Error::InvalidConfig(format!(
                "coefficients sum to {sum} > 1"
            )));
        }
        Ok(Self {
            eta: p.len() - 1,
            survival: (1.0 - sum).max(0.0),
            p,
            provenance,
            std_err: None,
            warnings: Vec::new(),
        })
    }

    pub fn eta(&self) -> usize {
        self.eta
    }

    /// Coefficients restricted to a smaller awareness window. The marginal
    /// delay probabilities do not depend on the window, so truncation is just
    /// a prefix.
    pub fn truncated(&self, eta: usize) -> Result<Self> {
        if eta > self.eta {
            return Err(Error::InvalidConfig(format!(
                "cannot truncate eta {} to {}",
                self.eta, eta
            )));
        }
        let mut out = Self::new(self.p[..=eta].to_vec(), self.provenance)?;
        out.std_err = self.std_err.as_ref().map(|se| se[..=eta].to_vec());
        out.warnings.clone_from(&self.warnings);
        Ok(out)
    }
}

/// Success probability of a remaining molecule being received `i` slots
/// after emission, given it was not received earlier:
/// `p*_i = p_i / (1 - sum_{j<i} p_j)`.
pub fn conditional_success_probs(coeffs: &ChannelCoefficients) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(coeffs.p.len());
    let mut cum = 0.0;
    for (i, &pi) in coeffs.p.iter().enumerate() {
        let denom = 1.0 - cum;
        if denom <= 0.0 {
            return Err(Error::DegenerateCoefficients(format!(
                "no mass remains before slot {i}"
            )));
        }
        out.push((pi / denom).min(1.0));
        cum += pi;
    }
    Ok(out)
}

/// Closed-form first-passage fraction for a point source at distance `r0`
/// from an absorbing sphere of radius `a`: `F(t) = (a/r0) erfc((r0 - a) /
/// sqrt(4 D t))`.
pub fn first_passage_fraction(a: f64, r0: f64, diffusion: f64, t: f64) -> f64 {
    if t <= 0.0 || diffusion <= 0.0 {
        return 0.0;
    }
    (a / r0) * erfc((r0 - a) / (4.0 * diffusion * t).sqrt())
}

/// Delay coefficients from the closed-form first-passage law,
/// `p_i = F((i+1) t_s) - F(i t_s)`.
///
/// The point source is placed at the configured emission point (the
/// transmitter is transparent after release, so this is exact for the
/// simulator up to step-size bias); the absorbing radius accounts for the
/// molecule radius the same way the simulator does.
pub fn analytical_coefficients(cfg: &SimulationConfig, eta: usize) -> Result<ChannelCoefficients> {
    cfg.validate()?;
    let a = cfg.absorption_radius();
    let r0 = cfg.release_distance();
    let d = cfg.diffusion_coefficient;
    let ts = cfg.symbol_duration;
    let mut prev = 0.0;
    let p: Vec<f64> = (0..=eta)
        .map(|i| {
            let next = first_passage_fraction(a, r0, d, (i + 1) as f64 * ts);
            let pi = (next - prev).max(0.0);
            prev = next;
            pi
        })
        .collect();
    ChannelCoefficients::new(p, Provenance::Analytical)
}

/// Dense probability mass function over counts `0 ..= n_max`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Pmf(pub Vec<f64>);

impl Pmf {
    pub fn point_mass_at_zero() -> Self {
        Pmf(vec![1.0])
    }

    pub fn mass(&self) -> &[f64] {
        &self.0
    }

    pub fn total(&self) -> f64 {
        self.0.iter().sum()
    }

    /// `P(X <= k)`; saturates at 1 beyond the support.
    pub fn cdf_at(&self, k: u32) -> f64 {
        let k = k as usize;
        if k + 1 >= self.0.len() {
            1.0
        } else {
            self.0[..=k].iter().sum::<f64>().min(1.0)
        }
    }

    /// Distribution of the sum of two independent counts.
    pub fn convolve(&self, other: &Pmf) -> Pmf {
        let mut out = vec![0.0; self.0.len() + other.0.len() - 1];
        for (i, &a) in self.0.iter().enumerate() {
            if a == 0.0 {
                continue;
            }
            for (j, &b) in other.0.iter().enumerate() {
                out[i + j] += a * b;
            }
        }
        Pmf(out)
    }
}

/// Binomial PMF over `0 ..= n`, computed in log space so large `n` stays
/// stable.
pub fn binomial_pmf(n: u32, prob: f64) -> Pmf {
    assert!((0.0..=1.0).contains(&prob), "prob outside [0, 1]");
    if n == 0 || prob == 0.0 {
        let mut mass = vec![0.0; n as usize + 1];
        mass[0] = 1.0;
        return Pmf(mass);
    }
    if prob == 1.0 {
        let mut mass = vec![0.0; n as usize + 1];
        mass[n as usize] = 1.0;
        return Pmf(mass);
    }
    let ln_p = prob.ln();
    let ln_q = (1.0 - prob).ln();
    let nf = f64::from(n);
    let mass = (0..=n)
        .map(|k| {
            let kf = f64::from(k);
            (ln_binomial(n as u64, k as u64) + kf * ln_p + (nf - kf) * ln_q).exp()
        })
        .collect();
    Pmf(mass)
}

/// Pack an oldest-first window slice into the integer form
/// (bit `k` holds `x_{r-k}`).
pub fn window_index(bits_oldest_first: &[u8]) -> u32 {
    bits_oldest_first
        .iter()
        .fold(0u32, |acc, &b| (acc << 1) | u32::from(b != 0))
}

/// Render a packed window as its oldest-first bit string.
pub fn window_string(index: u32, eta: usize) -> String {
    (0..=eta)
        .rev()
        .map(|k| if index >> k & 1 == 1 { '1' } else { '0' })
        .collect()
}

fn parse_window(s: &str) -> Result<u32> {
    if s.is_empty() || !s.bytes().all(|b| b == b'0' || b == b'1') {
        return Err(Error::Parse(format!("bad window bit-string {s:?}")));
    }
    Ok(u32::from_str_radix(s, 2).expect("validated binary string"))
}

/// PMF of the count received in slot `r` given the window of the last
/// `eta + 1` transmitted bits (oldest first): the convolution of
/// `Binomial(n_one * x_{r-k}, p_k)` over `k = 0 ..= eta`.
pub fn received_count_pmf(
    window_oldest_first: &[u8],
    coeffs: &ChannelCoefficients,
    n_one: u32,
) -> Pmf {
    assert_eq!(
        window_oldest_first.len(),
        coeffs.eta() + 1,
        "window length must be eta + 1"
    );
    let eta = coeffs.eta();
    let mut pmf = Pmf::point_mass_at_zero();
    for k in 0..=eta {
        if window_oldest_first[eta - k] != 0 {
            pmf = pmf.convolve(&binomial_pmf(n_one, coeffs.p[k]));
        }
    }
    pmf
}

/// Threshold demodulation probability table: `P(y_r = 0 | window)` for every
/// window of the last `eta + 1` bits, where `y_r = 0` iff the received count
/// is at most `tau`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(into = "DemodulationModelRepr", try_from = "DemodulationModelRepr")]
pub struct DemodulationModel {
    eta: usize,
    n_one: u32,
    tau: u32,
    /// Indexed by packed window; length `2^(eta+1)`.
    p_y0: Vec<f64>,
}

impl DemodulationModel {
    /// Assemble a model from explicit per-window probabilities, indexed by
    /// packed window (length must be a power of two).
    pub fn from_probs(eta: usize, n_one: u32, tau: u32, p_y0: Vec<f64>) -> Result<Self> {
        if p_y0.len() != 1 << (eta + 1) {
            return Err(Error::InvalidConfig(format!(
                "table needs {} entries, got {}",
                1 << (eta + 1),
                p_y0.len()
            )));
        }
        if let Some(q) = p_y0.iter().find(|q| !(0.0..=1.0).contains(*q)) {
            return Err(Error::InvalidConfig(format!("P(y=0|w) = {q} outside [0, 1]")));
        }
        Ok(Self {
            eta,
            n_one,
            tau,
            p_y0,
        })
    }

    pub fn eta(&self) -> usize {
        self.eta
    }

    pub fn n_one(&self) -> u32 {
        self.n_one
    }

    pub fn tau(&self) -> u32 {
        self.tau
    }

    pub fn window_count(&self) -> usize {
        self.p_y0.len()
    }

    pub fn prob_y0(&self, window: u32) -> f64 {
        self.p_y0[window as usize]
    }

    pub fn prob_y0_window(&self, bits_oldest_first: &[u8]) -> f64 {
        assert_eq!(bits_oldest_first.len(), self.eta + 1);
        self.prob_y0(window_index(bits_oldest_first))
    }

    /// `P(y_r = y | window)`.
    pub fn prob(&self, window: u32, y: u8) -> f64 {
        let q = self.prob_y0(window);
        if y == 0 {
            q
        } else {
            1.0 - q
        }
    }

    pub fn probs_y0(&self) -> &[f64] {
        &self.p_y0
    }
}

#[derive(Serialize, Deserialize)]
struct DemodulationModelRepr {
    eta: usize,
    n_one: u32,
    tau: u32,
    table: BTreeMap<String, f64>,
}

impl From<DemodulationModel> for DemodulationModelRepr {
    fn from(m: DemodulationModel) -> Self {
        let table = m
            .p_y0
            .iter()
            .enumerate()
            .map(|(i, &q)| (window_string(i as u32, m.eta), q))
            .collect();
        Self {
            eta: m.eta,
            n_one: m.n_one,
            tau: m.tau,
            table,
        }
    }
}

impl TryFrom<DemodulationModelRepr> for DemodulationModel {
    type Error = Error;

    fn try_from(repr: DemodulationModelRepr) -> Result<Self> {
        let windows = 1usize << (repr.eta + 1);
        if repr.table.len() != windows {
            return Err(Error::Parse(format!(
                "table has {} entries, expected {windows}",
                repr.table.len()
            )));
        }
        let mut p_y0 = vec![f64::NAN; windows];
        for (key, q) in &repr.table {
            if key.len() != repr.eta + 1 {
                return Err(Error::Parse(format!("window key {key:?} has wrong length")));
            }
            if !(0.0..=1.0).contains(q) {
                return Err(Error::Parse(format!("P(y=0|{key}) = {q} outside [0, 1]")));
            }
            p_y0[parse_window(key)? as usize] = *q;
        }
        Ok(Self {
            eta: repr.eta,
            n_one: repr.n_one,
            tau: repr.tau,
            p_y0,
        })
    }
}

/// Build the demodulation table for a single threshold.
pub fn demod_prob_table(
    coeffs: &ChannelCoefficients,
    n_one: u32,
    tau: u32,
) -> DemodulationModel {
    demod_prob_tables(coeffs, n_one, &[tau]).pop().expect("one table")
}

/// Build demodulation tables for several thresholds in one pass.
///
/// Windows sharing a prefix share the partial convolution of their older
/// bits, so the whole `2^(eta+1)`-window family costs one depth-first sweep
/// instead of an independent convolution chain per window, and every `tau`
/// reads the same per-window CDF.
pub fn demod_prob_tables(
    coeffs: &ChannelCoefficients,
    n_one: u32,
    taus: &[u32],
) -> Vec<DemodulationModel> {
    let eta = coeffs.eta();
    let windows = 1usize << (eta + 1);
    let one_emission: Vec<Pmf> = coeffs
        .p
        .iter()
        .map(|&pk| binomial_pmf(n_one, pk))
        .collect();
    let mut tables = vec![vec![0.0; windows]; taus.len()];

    // Depth j fixes the bit with delay k = eta - j (oldest bits first).
    fn walk(
        j: usize,
        index: u32,
        pmf: &Pmf,
        eta: usize,
        one_emission: &[Pmf],
        taus: &[u32],
        tables: &mut [Vec<f64>],
    ) {
        if j == eta + 1 {
            for (ti, &tau) in taus.iter().enumerate() {
                tables[ti][index as usize] = pmf.cdf_at(tau);
            }
            return;
        }
        let k = eta - j;
        walk(j + 1, index, pmf, eta, one_emission, taus, tables);
        let with_one = pmf.convolve(&one_emission[k]);
        walk(
            j + 1,
            index | (1 << k),
            &with_one,
            eta,
            one_emission,
            taus,
            tables,
        );
    }

    walk(
        0,
        0,
        &Pmf::point_mass_at_zero(),
        eta,
        &one_emission,
        taus,
        &mut tables,
    );

    tables
        .into_iter()
        .zip(taus)
        .map(|(p_y0, &tau)| DemodulationModel {
            eta,
            n_one,
            tau,
            p_y0,
        })
        .collect()
}

/// Threshold rule: the slot is read as 1 iff the count exceeds `tau`.
pub fn demodulate(count: u64, tau: u32) -> u8 {
    u8::from(count > u64::from(tau))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn coeffs(p: &[f64]) -> ChannelCoefficients {
        ChannelCoefficients::new(p.to_vec(), Provenance::Analytical).unwrap()
    }

    #[test]
    fn conditional_probs_match_hand_values() {
        assert_eq!(conditional_success_probs(&coeffs(&[1.0])).unwrap(), vec![1.0]);
        let p_star = conditional_success_probs(&coeffs(&[0.5, 0.25])).unwrap();
        assert_abs_diff_eq!(p_star[0], 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(p_star[1], 0.5, epsilon = 1e-15);
    }

    #[test]
    fn conditional_probs_round_trip() {
        let original = coeffs(&[0.3, 0.2, 0.1, 0.05]);
        let p_star = conditional_success_probs(&original).unwrap();
        let mut cum = 0.0;
        for (i, &ps) in p_star.iter().enumerate() {
            let reconstructed = ps * (1.0 - cum);
            assert_abs_diff_eq!(reconstructed, original.p[i], epsilon = 1e-14);
            cum += reconstructed;
        }
    }

    #[test]
    fn degenerate_coefficients_detected() {
        let c = coeffs(&[1.0, 0.0]);
        assert!(matches!(
            conditional_success_probs(&c),
            Err(Error::DegenerateCoefficients(_))
        ));
    }

    #[test]
    fn binomial_small_case() {
        let pmf = binomial_pmf(2, 0.5);
        assert_eq!(pmf.mass().len(), 3);
        assert_abs_diff_eq!(pmf.mass()[0], 0.25, epsilon = 1e-15);
        assert_abs_diff_eq!(pmf.mass()[1], 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(pmf.mass()[2], 0.25, epsilon = 1e-15);
    }

    #[test]
    fn binomial_point_masses() {
        let zero = binomial_pmf(5, 0.0);
        assert_eq!(zero.mass()[0], 1.0);
        assert_eq!(zero.total(), 1.0);
        let one = binomial_pmf(5, 1.0);
        assert_eq!(one.mass()[5], 1.0);
    }

    /// Pascal-recurrence oracle: `p(n, k) = p(n-1, k-1) p + p(n-1, k) (1-p)`.
    fn binomial_by_recurrence(n: u32, p: f64) -> Vec<f64> {
        let mut row = vec![1.0];
        for _ in 0..n {
            let mut next = vec![0.0; row.len() + 1];
            for (k, &v) in row.iter().enumerate() {
                next[k] += v * (1.0 - p);
                next[k + 1] += v * p;
            }
            row = next;
        }
        row
    }

    #[test]
    fn binomial_matches_pascal_recurrence() {
        let pmf = binomial_pmf(50, 0.3);
        let oracle = binomial_by_recurrence(50, 0.3);
        for (a, b) in pmf.mass().iter().zip(&oracle) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-12);
        }
    }

    #[test]
    fn analytical_limits() {
        use crate::config::SimulationConfig;
        let mut cfg = SimulationConfig::for_distance(4.0, 1);
        cfg.molecule_radius = 0.0;
        let c = analytical_coefficients(&cfg, 400).unwrap();
        // t -> infinity: cumulative mass approaches a / r0.
        let hit_ever = cfg.receiver_radius / cfg.release_distance();
        let total: f64 = c.p.iter().sum();
        assert!(total < hit_ever);
        assert!(total > hit_ever - 0.05);
        // p_0 dominates and the tail decays.
        assert!(c.p[0] > c.p[1] && c.p[1] > c.p[2]);

        cfg.diffusion_coefficient = 0.0;
        let frozen = analytical_coefficients(&cfg, 5).unwrap();
        assert!(frozen.p.iter().all(|&pi| pi == 0.0));
        assert_eq!(frozen.survival, 1.0);
    }

    #[test]
    fn received_count_trivial_windows() {
        let c = coeffs(&[0.4, 0.2]);
        let zero = received_count_pmf(&[0, 0], &c, 3);
        assert_eq!(zero.mass(), &[1.0]);

        let c0 = coeffs(&[0.4]);
        let single = received_count_pmf(&[1], &c0, 3);
        let direct = binomial_pmf(3, 0.4);
        for (a, b) in single.mass().iter().zip(direct.mass()) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-15);
        }
    }

    #[test]
    fn convolution_preserves_normalization() {
        let a = binomial_pmf(50, 0.3);
        let b = binomial_pmf(50, 0.05);
        assert_abs_diff_eq!(a.convolve(&b).total(), 1.0, epsilon = 1e-9);
    }

    #[test]
    fn table_trivia() {
        let c = coeffs(&[0.4, 0.2]);
        let model = demod_prob_table(&c, 3, 6);
        // tau >= (eta+1) n_one: the count can never exceed total emissions.
        for w in 0..model.window_count() as u32 {
            assert_eq!(model.prob_y0(w), 1.0);
        }
        let tight = demod_prob_table(&c, 3, 1);
        assert_eq!(tight.prob_y0(0), 1.0);
        // All-zero window always demodulates to 0.
        assert_eq!(tight.prob_y0_window(&[0, 0]), 1.0);
    }

    #[test]
    fn table_matches_per_window_convolution() {
        let c = coeffs(&[0.35, 0.15, 0.05]);
        let n_one = 4;
        let models = demod_prob_tables(&c, n_one, &[0, 2, 5]);
        for model in &models {
            for w in 0..1u32 << 3 {
                let bits: Vec<u8> = (0..3).rev().map(|k| (w >> k & 1) as u8).collect();
                let pmf = received_count_pmf(&bits, &c, n_one);
                assert_abs_diff_eq!(
                    model.prob_y0(w),
                    pmf.cdf_at(model.tau()),
                    epsilon = 1e-12
                );
            }
        }
    }

    #[test]
    fn demodulate_boundary_inclusive() {
        assert_eq!(demodulate(0, 1), 0);
        assert_eq!(demodulate(2, 1), 1);
        for tau in [0u32, 1, 7, 50] {
            assert_eq!(demodulate(u64::from(tau), tau), 0);
        }
    }

    #[test]
    fn window_packing_round_trip() {
        assert_eq!(window_index(&[1, 0, 1]), 0b101);
        assert_eq!(window_string(0b101, 2), "101");
        // Oldest-first: leftmost char is x_{r-eta} (highest bit).
        assert_eq!(window_index(&[1, 0, 0]), 4);
    }

    #[test]
    fn model_json_round_trip() {
        let c = coeffs(&[0.4, 0.2]);
        let model = demod_prob_table(&c, 3, 1);
        let json = serde_json::to_string(&model).unwrap();
        assert!(json.contains("\"10\""));
        let back: DemodulationModel = serde_json::from_str(&json).unwrap();
        assert_eq!(back, model);
    }
}
