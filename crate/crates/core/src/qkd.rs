//! Entanglement-based (BBM92) key distribution per spectral channel.
//!
//! Both parties pick the rectilinear (0°) or diagonal (45°) analyzer
//! uniformly at random for every detected pair; the joint outcome is drawn
//! from the source's four-outcome distribution at those angles. Pairs with
//! mismatched bases are sifted out, and one party inverts its bit in bases
//! where the source is anti-correlated.

use rand::Rng;
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;

use crate::biphoton::{CoincidenceModel, JointOutcomeDistribution, MeasurementSetting};
use crate::error::{invalid, Error, Result};
use crate::rng::{derive_stream, DOMAIN_QKD};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Basis {
    Rectilinear,
    Diagonal,
}

impl Basis {
    pub const ALL: [Basis; 2] = [Basis::Rectilinear, Basis::Diagonal];

    pub fn analyzer_deg(&self) -> f64 {
        match self {
            Basis::Rectilinear => 0.0,
            Basis::Diagonal => 45.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProtocolConfig {
    /// Detected pairs to simulate per channel.
    pub n_pairs: u64,
    pub flip_rectilinear: bool,
    pub flip_diagonal: bool,
    pub seed: u64,
}

impl Default for ProtocolConfig {
    /// Flips calibrated for `f = 1, α = 0`: anti-correlated in the
    /// rectilinear basis, correlated in the diagonal one.
    fn default() -> Self {
        Self {
            n_pairs: 100_000,
            flip_rectilinear: true,
            flip_diagonal: false,
            seed: 0,
        }
    }
}

impl ProtocolConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_pairs == 0 {
            return Err(invalid("n_pairs", "must be >= 1"));
        }
        Ok(())
    }

    pub fn flip(&self, basis: Basis) -> bool {
        match basis {
            Basis::Rectilinear => self.flip_rectilinear,
            Basis::Diagonal => self.flip_diagonal,
        }
    }
}

/// Flips that make both bases correlated: flip where `E < 0`.
pub fn calibrate_flips<M: CoincidenceModel + ?Sized>(model: &M) -> (bool, bool) {
    let e = |b: Basis| model.correlation(MeasurementSetting::new(b.analyzer_deg(), b.analyzer_deg()));
    (e(Basis::Rectilinear) < 0.0, e(Basis::Diagonal) < 0.0)
}

/// Expected error rate in a basis for the given flip setting.
pub fn expected_qber<M: CoincidenceModel + ?Sized>(model: &M, basis: Basis, flip: bool) -> f64 {
    let a = basis.analyzer_deg();
    let j = model.joint_outcome_distribution(MeasurementSetting::new(a, a));
    let disagree = j.p_tr + j.p_rt;
    if flip {
        1.0 - disagree
    } else {
        disagree
    }
}

/// Binary entropy in bits, with `h(0) = h(1) = 0`.
pub fn binary_entropy(q: f64) -> f64 {
    if q <= 0.0 || q >= 1.0 {
        return 0.0;
    }
    -q * q.log2() - (1.0 - q) * (1.0 - q).log2()
}

/// Asymptotic secret-key fraction `max(0, 1 − h(Q_rect) − h(Q_diag))`.
pub fn secret_fraction(qber_rect: f64, qber_diag: f64) -> f64 {
    (1.0 - binary_entropy(qber_rect) - binary_entropy(qber_diag)).max(0.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChannelKeyReport {
    pub channel_id: u64,
    pub lambda_signal: f64,
    pub n_pairs: u64,
    pub sifted_bits: u64,
    pub sifted_rect: u64,
    pub sifted_diag: u64,
    pub errors_rect: u64,
    pub errors_diag: u64,
    /// `None` when no pair was sifted in that basis.
    pub qber_rect: Option<f64>,
    pub qber_diag: Option<f64>,
    pub secret_fraction: f64,
    pub secret_bits_estimate: f64,
}

impl ChannelKeyReport {
    pub const CSV_HEADER: &'static str =
        "lambda_nm,sifted_bits,qber_rect,qber_diag,secret_fraction,secret_bits";

    fn csv_row(&self) -> String {
        let opt = |q: Option<f64>| q.map(|x| x.to_string()).unwrap_or_default();
        format!(
            "{},{},{},{},{},{}",
            self.lambda_signal,
            self.sifted_bits,
            opt(self.qber_rect),
            opt(self.qber_diag),
            self.secret_fraction,
            self.secret_bits_estimate
        )
    }
}

/// Reports as CSV; an undefined QBER is an empty field.
pub fn reports_to_csv(reports: &[ChannelKeyReport]) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "# units: wavelength nm, bits per run, qber and fractions dimensionless");
    out.push_str(ChannelKeyReport::CSV_HEADER);
    out.push('\n');
    for r in reports {
        out.push_str(&r.csv_row());
        out.push('\n');
    }
    out
}

const OUTCOMES: [(bool, bool); 4] = [(false, false), (false, true), (true, false), (true, true)];

/// Draws `(signal_bit, idler_bit)`; `t` is 0 and `r` is 1. Outcomes of zero
/// probability are never returned.
fn sample_outcome<R: Rng + ?Sized>(dist: &JointOutcomeDistribution, rng: &mut R) -> (bool, bool) {
    let u: f64 = rng.random::<f64>() * dist.total();
    let mut acc = 0.0;
    let mut last = OUTCOMES[0];
    for (p, outcome) in dist.as_array().into_iter().zip(OUTCOMES) {
        if p <= 0.0 {
            continue;
        }
        acc += p;
        last = outcome;
        if u < acc {
            return outcome;
        }
    }
    last
}

/// Simulates BBM92 on one channel. Deterministic in `(config.seed,
/// channel_id)`.
pub fn run_bbm92<M: CoincidenceModel + ?Sized>(
    model: &M,
    config: &ProtocolConfig,
    channel_id: u64,
    lambda_signal: f64,
) -> Result<ChannelKeyReport> {
    config.validate()?;
    let dist = |a: Basis, b: Basis| {
        model.joint_outcome_distribution(MeasurementSetting::new(a.analyzer_deg(), b.analyzer_deg()))
    };
    let table = [
        [dist(Basis::Rectilinear, Basis::Rectilinear), dist(Basis::Rectilinear, Basis::Diagonal)],
        [dist(Basis::Diagonal, Basis::Rectilinear), dist(Basis::Diagonal, Basis::Diagonal)],
    ];

    let mut rng = derive_stream(config.seed, &[DOMAIN_QKD, channel_id]);
    let mut sifted = [0u64; 2];
    let mut errors = [0u64; 2];
    for _ in 0..config.n_pairs {
        let a = rng.random::<bool>() as usize;
        let b = rng.random::<bool>() as usize;
        let (bit_s, bit_i) = sample_outcome(&table[a][b], &mut rng);
        if a != b {
            continue;
        }
        let basis = Basis::ALL[a];
        let bit_i = bit_i ^ config.flip(basis);
        sifted[a] += 1;
        if bit_s != bit_i {
            errors[a] += 1;
        }
    }

    let qber = |k: usize| (sifted[k] > 0).then(|| errors[k] as f64 / sifted[k] as f64);
    let (qber_rect, qber_diag) = (qber(0), qber(1));
    let fraction = match (qber_rect, qber_diag) {
        (Some(r), Some(d)) => secret_fraction(r, d),
        _ => 0.0,
    };
    let sifted_bits = sifted[0] + sifted[1];
    Ok(ChannelKeyReport {
        channel_id,
        lambda_signal,
        n_pairs: config.n_pairs,
        sifted_bits,
        sifted_rect: sifted[0],
        sifted_diag: sifted[1],
        errors_rect: errors[0],
        errors_diag: errors[1],
        qber_rect,
        qber_diag,
        secret_fraction: fraction,
        secret_bits_estimate: sifted_bits as f64 * fraction,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WdmSummary {
    pub n_channels: usize,
    pub total_sifted_bits: u64,
    pub total_secret_bits: f64,
    pub channels: Vec<ChannelKeyReport>,
}

/// Sums per-channel secret bits, keeping the per-channel table in order.
pub fn wdm_aggregate(reports: &[ChannelKeyReport]) -> Result<WdmSummary> {
    if reports.is_empty() {
        return Err(Error::EmptyReports);
    }
    Ok(WdmSummary {
        n_channels: reports.len(),
        total_sifted_bits: reports.iter().map(|r| r.sifted_bits).sum(),
        total_secret_bits: reports.iter().map(|r| r.secret_bits_estimate).sum(),
        channels: reports.to_vec(),
    })
}
