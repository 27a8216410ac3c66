//! Seeded Monte Carlo of coincidence counting.
//!
//! Each scan point draws an exact Poisson count with mean
//! `T · (R_pair · η_s · η_i · p + R_acc)`. The random stream of a point is
//! derived from the master seed, the channel, the fixed polarizer and the
//! scanned angle itself, never from a shared generator, so points can be
//! evaluated in any order or in parallel.

use rand::Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;

use crate::biphoton::{CoincidenceModel, MeasurementSetting};
use crate::error::{invalid, Error, Result};
use crate::rng::{derive_stream, DOMAIN_DETECTION};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetectionConfig {
    /// Generated pairs per second.
    pub pair_rate: f64,
    pub efficiency_signal: f64,
    pub efficiency_idler: f64,
    /// Accidental coincidences per second, independent of angle.
    pub accidental_rate: f64,
    /// Seconds per scan point.
    pub integration_time: f64,
    pub seed: u64,
}

impl Default for DetectionConfig {
    fn default() -> Self {
        Self {
            pair_rate: 2000.0,
            efficiency_signal: 1.0,
            efficiency_idler: 1.0,
            accidental_rate: 0.0,
            integration_time: 1.0,
            seed: 0,
        }
    }
}

impl DetectionConfig {
    pub fn validate(&self) -> Result<()> {
        let nonneg = |name, v: f64| {
            if v.is_finite() && v >= 0.0 {
                Ok(())
            } else {
                Err(invalid(name, format!("must be finite and >= 0, got {v}")))
            }
        };
        let unit = |name, v: f64| {
            if (0.0..=1.0).contains(&v) {
                Ok(())
            } else {
                Err(invalid(name, format!("must be in [0, 1], got {v}")))
            }
        };
        nonneg("pair_rate", self.pair_rate)?;
        nonneg("accidental_rate", self.accidental_rate)?;
        unit("efficiency_signal", self.efficiency_signal)?;
        unit("efficiency_idler", self.efficiency_idler)?;
        if !(self.integration_time.is_finite() && self.integration_time > 0.0) {
            return Err(invalid("integration_time", "must be finite and > 0"));
        }
        Ok(())
    }

    /// Expected count for coincidence probability `p`.
    pub fn expected_counts(&self, p: f64) -> f64 {
        self.integration_time
            * (self.pair_rate * self.efficiency_signal * self.efficiency_idler * p
                + self.accidental_rate)
    }
}

/// Draws one Poisson count for coincidence probability `p`.
pub fn simulate_counts<R: Rng + ?Sized>(p: f64, config: &DetectionConfig, rng: &mut R) -> u64 {
    let lambda = config.expected_counts(p.clamp(0.0, 1.0));
    if lambda <= 0.0 {
        return 0;
    }
    Poisson::new(lambda)
        .expect("positive finite Poisson mean")
        .sample(rng) as u64
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Arm {
    Signal,
    Idler,
}

impl Arm {
    pub fn as_str(&self) -> &'static str {
        match self {
            Arm::Signal => "signal",
            Arm::Idler => "idler",
        }
    }

    fn tag(&self) -> u64 {
        match self {
            Arm::Signal => 1,
            Arm::Idler => 2,
        }
    }
}

impl std::str::FromStr for Arm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "signal" => Ok(Arm::Signal),
            "idler" => Ok(Arm::Idler),
            other => Err(invalid("fixed_arm", format!("expected signal|idler, got `{other}`"))),
        }
    }
}

/// A polarizer scan: one arm fixed, the other stepped through `angles`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanData {
    pub fixed_arm: Arm,
    pub fixed_theta_deg: f64,
    pub angles: Vec<f64>,
    pub counts: Vec<u64>,
    pub config: DetectionConfig,
}

impl ScanData {
    pub fn setting(&self, k: usize) -> MeasurementSetting {
        setting_for(self.fixed_arm, self.fixed_theta_deg, self.angles[k])
    }

    /// CSV with `#` metadata lines and header `theta_deg,counts`.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "# units: angles in degrees from vertical, counts per integration window");
        let _ = writeln!(out, "# fixed_arm={}", self.fixed_arm.as_str());
        let _ = writeln!(out, "# fixed_theta_deg={}", self.fixed_theta_deg);
        let _ = writeln!(out, "# seed={}", self.config.seed);
        out.push_str("theta_deg,counts\n");
        for (a, c) in self.angles.iter().zip(&self.counts) {
            let _ = writeln!(out, "{a},{c}");
        }
        out
    }

    /// Reads the CSV form back. Detection settings other than the seed are
    /// not stored in the file and take their defaults.
    pub fn parse_csv(text: &str) -> Result<Self> {
        let perr = |line: usize, reason: String| Error::Parse {
            what: "scan csv",
            line,
            reason,
        };
        let mut fixed_arm = None;
        let mut fixed_theta = None;
        let mut seed = 0u64;
        let mut header = false;
        let mut angles = Vec::new();
        let mut counts = Vec::new();
        for (idx, raw) in text.lines().enumerate() {
            let n = idx + 1;
            let line = raw.trim();
            if line.is_empty() {
                continue;
            }
            if let Some(meta) = line.strip_prefix('#') {
                if let Some((k, v)) = meta.trim().split_once('=') {
                    let v = v.trim();
                    match k.trim() {
                        "fixed_arm" => fixed_arm = Some(v.parse::<Arm>().map_err(|e| perr(n, e.to_string()))?),
                        "fixed_theta_deg" => {
                            fixed_theta = Some(v.parse::<f64>().map_err(|e| perr(n, e.to_string()))?)
                        }
                        "seed" => seed = v.parse().map_err(|e: std::num::ParseIntError| perr(n, e.to_string()))?,
                        _ => {}
                    }
                }
                continue;
            }
            if !header {
                if line.replace(' ', "") != "theta_deg,counts" {
                    return Err(perr(n, "expected header `theta_deg,counts`".into()));
                }
                header = true;
                continue;
            }
            let (a, c) = line
                .split_once(',')
                .ok_or_else(|| perr(n, "expected two fields".into()))?;
            angles.push(a.trim().parse::<f64>().map_err(|e| perr(n, e.to_string()))?);
            counts.push(c.trim().parse::<u64>().map_err(|e| perr(n, e.to_string()))?);
        }
        let data = ScanData {
            fixed_arm: fixed_arm.ok_or_else(|| perr(0, "missing `# fixed_arm=`".into()))?,
            fixed_theta_deg: fixed_theta.ok_or_else(|| perr(0, "missing `# fixed_theta_deg=`".into()))?,
            angles,
            counts,
            config: DetectionConfig {
                seed,
                ..DetectionConfig::default()
            },
        };
        if data.angles.len() < 3 {
            return Err(Error::InsufficientData(format!(
                "{} rows, need at least 3",
                data.angles.len()
            )));
        }
        Ok(data)
    }
}

fn setting_for(fixed_arm: Arm, fixed_deg: f64, scanned_deg: f64) -> MeasurementSetting {
    match fixed_arm {
        Arm::Signal => MeasurementSetting::new(fixed_deg, scanned_deg),
        Arm::Idler => MeasurementSetting::new(scanned_deg, fixed_deg),
    }
}

/// Simulates one count per scanned angle.
///
/// The stream for point `k` is keyed by `(seed, channel_id, fixed arm,
/// fixed angle, angle[k], occurrence of angle[k] among earlier equal
/// angles)`, so permuting `angles` permutes `counts` the same way.
pub fn simulate_scan<M: CoincidenceModel + ?Sized>(
    model: &M,
    fixed: (Arm, f64),
    angles: &[f64],
    config: &DetectionConfig,
    channel_id: u64,
) -> Result<ScanData> {
    config.validate()?;
    if angles.len() < 3 {
        return Err(Error::InsufficientData(format!(
            "{} angles, need at least 3",
            angles.len()
        )));
    }
    if angles.iter().any(|a| !a.is_finite()) || !fixed.1.is_finite() {
        return Err(invalid("angles", "must be finite"));
    }
    let (arm, fixed_deg) = fixed;
    let counts = angles
        .iter()
        .enumerate()
        .map(|(k, &theta)| {
            let occurrence = angles[..k].iter().filter(|&&a| a.to_bits() == theta.to_bits()).count();
            let mut rng = derive_stream(
                config.seed,
                &[
                    DOMAIN_DETECTION,
                    channel_id,
                    arm.tag(),
                    fixed_deg.to_bits(),
                    theta.to_bits(),
                    occurrence as u64,
                ],
            );
            let p = model.coincidence_probability(setting_for(arm, fixed_deg, theta));
            simulate_counts(p, config, &mut rng)
        })
        .collect();
    Ok(ScanData {
        fixed_arm: arm,
        fixed_theta_deg: fixed_deg,
        angles: angles.to_vec(),
        counts,
        config: *config,
    })
}

/// `n` evenly spaced angles from `start` to `stop` inclusive.
pub fn angle_grid(start_deg: f64, stop_deg: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![start_deg],
        _ => {
            let step = (stop_deg - start_deg) / (n - 1) as f64;
            (0..n).map(|k| start_deg + step * k as f64).collect()
        }
    }
}
