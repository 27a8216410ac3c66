//! Frequency-resolved source model.
//!
//! Channels are keyed by signal wavelength; the idler follows from energy
//! conservation `1/λs + 1/λi = 1/λp`. Each channel carries the HV and VH
//! coincidence rates that fix its `f`, taken either from Gaussian spectral
//! profiles or from a tabulated spectrum.

use serde::{Deserialize, Serialize};

use crate::biphoton::BiphotonPureState;
use crate::correlation::{estimate_f, FEstimate};
use crate::error::{invalid, Error, Result};

/// Second harmonic of the 859.4 nm fundamental.
pub const DEFAULT_PUMP_NM: f64 = 429.7;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PumpConfig {
    pub lambda_pump_nm: f64,
}

impl Default for PumpConfig {
    fn default() -> Self {
        Self {
            lambda_pump_nm: DEFAULT_PUMP_NM,
        }
    }
}

impl PumpConfig {
    pub fn new(lambda_pump_nm: f64) -> Result<Self> {
        let p = Self { lambda_pump_nm };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lambda_pump_nm.is_finite() && self.lambda_pump_nm > 0.0) {
            return Err(invalid("lambda_pump_nm", "must be finite and > 0"));
        }
        Ok(())
    }
}

/// Idler wavelength paired with `lambda_signal_nm` by energy conservation.
pub fn idler_wavelength(lambda_signal_nm: f64, pump: PumpConfig) -> Result<f64> {
    let lp = pump.lambda_pump_nm;
    if !lambda_signal_nm.is_finite() || lambda_signal_nm <= lp {
        return Err(Error::NoIdler {
            signal_nm: lambda_signal_nm,
            pump_nm: lp,
        });
    }
    Ok(1.0 / (1.0 / lp - 1.0 / lambda_signal_nm))
}

/// Gaussian rate profile over signal wavelength.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpectralProfile {
    pub center_nm: f64,
    /// Full width at half maximum.
    pub fwhm_nm: f64,
    /// Rate at the centre, counts/s.
    pub peak: f64,
}

impl SpectralProfile {
    pub fn validate(&self, name: &'static str) -> Result<()> {
        if !self.center_nm.is_finite() {
            return Err(invalid(name, "center_nm must be finite"));
        }
        if !(self.fwhm_nm.is_finite() && self.fwhm_nm > 0.0) {
            return Err(invalid(name, "fwhm_nm must be > 0"));
        }
        if !(self.peak.is_finite() && self.peak >= 0.0) {
            return Err(invalid(name, "peak must be >= 0"));
        }
        Ok(())
    }

    pub fn rate(&self, lambda_nm: f64) -> f64 {
        let x = (lambda_nm - self.center_nm) / self.fwhm_nm;
        self.peak * (-4.0 * std::f64::consts::LN_2 * x * x).exp()
    }
}

/// Default HV/VH profiles: equal 12 nm widths, HV centred at 862 nm, VH
/// centre and peak solved so that HV/VH = 3 at 866 nm and 1 at 870 nm.
pub fn default_profiles() -> (SpectralProfile, SpectralProfile) {
    let fwhm = 12.0;
    let hv = SpectralProfile {
        center_nm: 862.0,
        fwhm_nm: fwhm,
        peak: 1000.0,
    };
    // ln(HV/VH)(λ) = ln(p_hv/p_vh) − k·(c_vh − c_hv)(2λ − c_hv − c_vh),
    // k = 4 ln2 / w²; linear in λ, so two points fix both unknowns.
    let k = 4.0 * std::f64::consts::LN_2 / (fwhm * fwhm);
    let (l1, r1, l2, r2) = (866.0, 3.0f64, 870.0, 1.0f64);
    let delta = (r1.ln() - r2.ln()) / (2.0 * k * (l2 - l1));
    let c_vh = hv.center_nm + delta;
    let log_peak_ratio = r2.ln() + k * delta * (2.0 * l2 - hv.center_nm - c_vh);
    let vh = SpectralProfile {
        center_nm: c_vh,
        fwhm_nm: fwhm,
        peak: hv.peak / log_peak_ratio.exp(),
    };
    (hv, vh)
}

/// Tabulated spectrum, linearly interpolated in signal wavelength.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TabulatedSpectrum {
    rows: Vec<(f64, f64, f64)>,
}

impl TabulatedSpectrum {
    pub const HEADER: &'static str = "lambda_nm,rate_hv,rate_vh";

    pub fn new(mut rows: Vec<(f64, f64, f64)>) -> Result<Self> {
        if rows.is_empty() {
            return Err(invalid("spectrum", "no rows"));
        }
        for &(l, hv, vh) in &rows {
            if !(l.is_finite() && hv.is_finite() && vh.is_finite()) || hv < 0.0 || vh < 0.0 {
                return Err(invalid("spectrum", format!("bad row at {l} nm")));
            }
        }
        rows.sort_by(|a, b| a.0.total_cmp(&b.0));
        if rows.windows(2).any(|w| w[0].0 == w[1].0) {
            return Err(invalid("spectrum", "duplicate wavelength"));
        }
        Ok(Self { rows })
    }

    /// Parses CSV text with header `lambda_nm,rate_hv,rate_vh`. Blank lines
    /// and lines starting with `#` are skipped.
    pub fn parse_csv(text: &str) -> Result<Self> {
        let parse_err = |line: usize, reason: String| Error::Parse {
            what: "spectrum csv",
            line,
            reason,
        };
        let mut header_seen = false;
        let mut rows = Vec::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            if !header_seen {
                let normalized: String = line.split(',').map(str::trim).collect::<Vec<_>>().join(",");
                if normalized != Self::HEADER {
                    return Err(parse_err(idx + 1, format!("expected header `{}`", Self::HEADER)));
                }
                header_seen = true;
                continue;
            }
            let fields: Vec<&str> = line.split(',').map(str::trim).collect();
            if fields.len() != 3 {
                return Err(parse_err(idx + 1, format!("expected 3 fields, got {}", fields.len())));
            }
            let mut vals = [0.0; 3];
            for (v, s) in vals.iter_mut().zip(&fields) {
                *v = s
                    .parse()
                    .map_err(|e| parse_err(idx + 1, format!("`{s}`: {e}")))?;
            }
            rows.push((vals[0], vals[1], vals[2]));
        }
        if !header_seen {
            return Err(parse_err(0, "missing header".into()));
        }
        Self::new(rows)
    }

    pub fn range(&self) -> (f64, f64) {
        (self.rows[0].0, self.rows[self.rows.len() - 1].0)
    }

    pub fn rates(&self, lambda_nm: f64) -> Result<(f64, f64)> {
        let (lo, hi) = self.range();
        if !(lo..=hi).contains(&lambda_nm) {
            return Err(invalid(
                "lambda_nm",
                format!("{lambda_nm} nm outside tabulated range [{lo}, {hi}]"),
            ));
        }
        let k = self.rows.partition_point(|r| r.0 <= lambda_nm);
        if k == self.rows.len() {
            let r = self.rows[k - 1];
            return Ok((r.1, r.2));
        }
        let (a, b) = (self.rows[k - 1], self.rows[k]);
        let t = (lambda_nm - a.0) / (b.0 - a.0);
        Ok((a.1 + t * (b.1 - a.1), a.2 + t * (b.2 - a.2)))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Spectrum {
    Gaussian {
        hv: SpectralProfile,
        vh: SpectralProfile,
    },
    Tabulated(TabulatedSpectrum),
}

impl Default for Spectrum {
    fn default() -> Self {
        let (hv, vh) = default_profiles();
        Spectrum::Gaussian { hv, vh }
    }
}

impl Spectrum {
    /// `(rate_HV, rate_VH)` at a signal wavelength.
    pub fn rates(&self, lambda_nm: f64) -> Result<(f64, f64)> {
        match self {
            Spectrum::Gaussian { hv, vh } => Ok((hv.rate(lambda_nm), vh.rate(lambda_nm))),
            Spectrum::Tabulated(t) => t.rates(lambda_nm),
        }
    }
}

/// How the measured HV/VH rate ratio maps onto `f`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FConvention {
    /// `f = √(rate_VH / rate_HV)`, from the state's term weights.
    RatioAsF,
    /// `f = √(rate_HV / rate_VH)`.
    #[default]
    RatioAsInverseF,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpectralChannel {
    pub lambda_signal_nm: f64,
    pub lambda_idler_nm: f64,
    pub rate_hv: f64,
    pub rate_vh: f64,
    /// Relative phase, radians.
    pub alpha: f64,
}

impl SpectralChannel {
    pub fn new(
        lambda_signal_nm: f64,
        rate_hv: f64,
        rate_vh: f64,
        alpha: f64,
        pump: PumpConfig,
    ) -> Result<Self> {
        if !(rate_hv.is_finite() && rate_vh.is_finite()) || rate_hv < 0.0 || rate_vh < 0.0 {
            return Err(invalid("rates", "must be finite and >= 0"));
        }
        if rate_hv == 0.0 && rate_vh == 0.0 {
            return Err(Error::ZeroRates);
        }
        Ok(Self {
            lambda_signal_nm,
            lambda_idler_nm: idler_wavelength(lambda_signal_nm, pump)?,
            rate_hv,
            rate_vh,
            alpha,
        })
    }

    pub fn f_estimate(&self) -> FEstimate {
        estimate_f(self.rate_hv, self.rate_vh).expect("channel rates validated at construction")
    }

    /// Only one of the two polarization terms is present.
    pub fn is_single_term(&self) -> bool {
        self.rate_hv == 0.0 || self.rate_vh == 0.0
    }

    pub fn state(&self, convention: FConvention) -> Result<BiphotonPureState> {
        channel_state(self, convention)
    }
}

pub fn channel_state(channel: &SpectralChannel, convention: FConvention) -> Result<BiphotonPureState> {
    let (num, den) = match convention {
        FConvention::RatioAsF => (channel.rate_vh, channel.rate_hv),
        FConvention::RatioAsInverseF => (channel.rate_hv, channel.rate_vh),
    };
    if den == 0.0 {
        return Err(Error::InfiniteF);
    }
    BiphotonPureState::new((num / den).sqrt(), channel.alpha)
}

/// Uniform signal-wavelength grid over `range` (inclusive); a single
/// channel sits at the midpoint.
pub fn build_channels(
    spectrum: &Spectrum,
    alpha: f64,
    range: (f64, f64),
    n_channels: usize,
    pump: PumpConfig,
) -> Result<Vec<SpectralChannel>> {
    pump.validate()?;
    let (lo, hi) = range;
    if n_channels == 0 {
        return Err(invalid("n_channels", "must be >= 1"));
    }
    if !(lo.is_finite() && hi.is_finite()) || lo > hi {
        return Err(invalid("lambda_range", format!("invalid range ({lo}, {hi})")));
    }
    if lo <= pump.lambda_pump_nm {
        return Err(Error::NoIdler {
            signal_nm: lo,
            pump_nm: pump.lambda_pump_nm,
        });
    }
    if let Spectrum::Gaussian { hv, vh } = spectrum {
        hv.validate("hv")?;
        vh.validate("vh")?;
    }
    let grid: Vec<f64> = if n_channels == 1 {
        vec![0.5 * (lo + hi)]
    } else {
        let step = (hi - lo) / (n_channels - 1) as f64;
        (0..n_channels).map(|k| lo + step * k as f64).collect()
    };
    grid.into_iter()
        .map(|ls| {
            let (hv, vh) = spectrum.rates(ls)?;
            SpectralChannel::new(ls, hv, vh, alpha, pump)
        })
        .collect()
}
