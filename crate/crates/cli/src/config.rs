//! TOML run configuration.
//!
//! Every section is optional; omitted keys take the defaults below and
//! unknown keys are rejected. Relative `spectrum_file` paths resolve
//! against the directory of the config file.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;
use wdmqkd_core::detection::{Arm, DetectionConfig};
use wdmqkd_core::qkd::ProtocolConfig;
use wdmqkd_core::spectral::{
    build_channels, default_profiles, FConvention, PumpConfig, SpectralChannel, SpectralProfile,
    Spectrum, TabulatedSpectrum, DEFAULT_PUMP_NM,
};
use wdmqkd_core::{BiphotonPureState, SourceState};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Parse {
        path: PathBuf,
        source: Box<toml::de::Error>,
    },
    #[error("`{key}`: {reason}")]
    Invalid { key: String, reason: String },
}

fn invalid(key: &str, reason: impl ToString) -> ConfigError {
    ConfigError::Invalid {
        key: key.to_string(),
        reason: reason.to_string(),
    }
}

/// Prefixes a core validation error with its config section.
fn in_section(section: &str, e: wdmqkd_core::Error) -> ConfigError {
    match e {
        wdmqkd_core::Error::InvalidParameter { name, reason } => {
            invalid(&format!("{section}.{name}"), reason)
        }
        other => invalid(section, other),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SourceKind {
    #[default]
    Entangled,
    Product,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ChannelGrid {
    pub lambda_min_nm: f64,
    pub lambda_max_nm: f64,
    pub count: usize,
    /// Explicit signal wavelengths; replaces the uniform grid when set.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub wavelengths_nm: Option<Vec<f64>>,
}

impl Default for ChannelGrid {
    fn default() -> Self {
        Self {
            lambda_min_nm: 860.0,
            lambda_max_nm: 874.0,
            count: 8,
            wavelengths_nm: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SourceSection {
    pub kind: SourceKind,
    pub pump_nm: f64,
    pub alpha_deg: f64,
    pub f_convention: FConvention,
    /// CSV with header `lambda_nm,rate_hv,rate_vh`; overrides `hv`/`vh`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub spectrum_file: Option<PathBuf>,
    pub hv: SpectralProfile,
    pub vh: SpectralProfile,
    pub channels: ChannelGrid,
}

impl Default for SourceSection {
    fn default() -> Self {
        let (hv, vh) = default_profiles();
        Self {
            kind: SourceKind::Entangled,
            pump_nm: DEFAULT_PUMP_NM,
            alpha_deg: 0.0,
            f_convention: FConvention::default(),
            spectrum_file: None,
            hv,
            vh,
            channels: ChannelGrid::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DetectionSection {
    pub pair_rate: f64,
    pub efficiency_signal: f64,
    pub efficiency_idler: f64,
    pub accidental_rate: f64,
    pub integration_time: f64,
}

impl Default for DetectionSection {
    fn default() -> Self {
        let d = DetectionConfig::default();
        Self {
            pair_rate: d.pair_rate,
            efficiency_signal: d.efficiency_signal,
            efficiency_idler: d.efficiency_idler,
            accidental_rate: d.accidental_rate,
            integration_time: d.integration_time,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FitSection {
    pub period_deg: f64,
}

impl Default for FitSection {
    fn default() -> Self {
        Self { period_deg: 180.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScanSection {
    pub fixed_arm: Arm,
    pub fixed_angles_deg: Vec<f64>,
    pub start_deg: f64,
    pub stop_deg: f64,
    pub points: usize,
}

impl Default for ScanSection {
    fn default() -> Self {
        Self {
            fixed_arm: Arm::Signal,
            fixed_angles_deg: vec![0.0, 45.0, 90.0, 135.0],
            start_deg: 0.0,
            stop_deg: 180.0,
            points: 19,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct QkdSection {
    pub n_pairs: u64,
    pub flip_rectilinear: bool,
    pub flip_diagonal: bool,
    /// Derive flips per channel from the sign of the correlation.
    pub calibrate: bool,
}

impl Default for QkdSection {
    fn default() -> Self {
        let p = ProtocolConfig::default();
        Self {
            n_pairs: p.n_pairs,
            flip_rectilinear: p.flip_rectilinear,
            flip_diagonal: p.flip_diagonal,
            calibrate: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    #[serde(with = "seed_repr")]
    pub seed: u64,
    pub output_dir: PathBuf,
    pub source: SourceSection,
    pub detection: DetectionSection,
    pub fit: FitSection,
    pub scan: ScanSection,
    pub qkd: QkdSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            output_dir: PathBuf::from("out"),
            source: SourceSection::default(),
            detection: DetectionSection::default(),
            fit: FitSection::default(),
            scan: ScanSection::default(),
            qkd: QkdSection::default(),
        }
    }
}

/// TOML integers are signed 64-bit; seeds above `i64::MAX` are written as
/// decimal strings.
mod seed_repr {
    use serde::{de, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(seed: &u64, s: S) -> Result<S::Ok, S::Error> {
        match i64::try_from(*seed) {
            Ok(v) => s.serialize_i64(v),
            Err(_) => s.serialize_str(&seed.to_string()),
        }
    }

    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Raw {
        Int(i64),
        Str(String),
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<u64, D::Error> {
        match Raw::deserialize(d)? {
            Raw::Int(v) => u64::try_from(v).map_err(|_| de::Error::custom("seed must be >= 0")),
            Raw::Str(s) => s.parse().map_err(de::Error::custom),
        }
    }
}

/// Reads, resolves and validates a config file.
pub fn load_config(path: &Path) -> Result<RunConfig, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mut config = parse_config(&text).map_err(|source| ConfigError::Parse {
        path: path.to_path_buf(),
        source: Box::new(source),
    })?;
    if let Some(file) = &config.source.spectrum_file {
        if file.is_relative() {
            let base = path.parent().unwrap_or(Path::new(""));
            let joined = base.join(file);
            // Absolute in the echo, so it reloads from any directory.
            config.source.spectrum_file = Some(joined.canonicalize().unwrap_or(joined));
        }
    }
    config.validate()?;
    Ok(config)
}

pub fn parse_config(text: &str) -> Result<RunConfig, toml::de::Error> {
    toml::from_str(text)
}

impl RunConfig {
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config is always representable as TOML")
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let s = &self.source;
        PumpConfig::new(s.pump_nm).map_err(|e| in_section("source", e))?;
        if !s.alpha_deg.is_finite() {
            return Err(invalid("source.alpha_deg", "must be finite"));
        }
        s.hv.validate("hv").map_err(|e| in_section("source", e))?;
        s.vh.validate("vh").map_err(|e| in_section("source", e))?;
        if let Some(file) = &s.spectrum_file {
            if !file.is_file() {
                return Err(invalid(
                    "source.spectrum_file",
                    format!("{} does not exist", file.display()),
                ));
            }
        }
        let g = &s.channels;
        match &g.wavelengths_nm {
            Some(list) => {
                if list.is_empty() {
                    return Err(invalid("source.channels.wavelengths_nm", "must not be empty"));
                }
                if list.iter().any(|l| !(l.is_finite() && *l > 0.0)) {
                    return Err(invalid("source.channels.wavelengths_nm", "must be positive"));
                }
            }
            None => {
                if g.count == 0 {
                    return Err(invalid("source.channels.count", "must be >= 1"));
                }
                if !(g.lambda_min_nm.is_finite() && g.lambda_max_nm.is_finite())
                    || g.lambda_min_nm <= 0.0
                    || g.lambda_min_nm > g.lambda_max_nm
                {
                    return Err(invalid(
                        "source.channels.lambda_min_nm",
                        "need 0 < lambda_min_nm <= lambda_max_nm",
                    ));
                }
            }
        }

        self.detection_config()
            .validate()
            .map_err(|e| in_section("detection", e))?;

        if self.fit.period_deg != 180.0 && self.fit.period_deg != 360.0 {
            return Err(invalid("fit.period_deg", "must be 180 or 360"));
        }

        let sc = &self.scan;
        if sc.fixed_angles_deg.is_empty() || sc.fixed_angles_deg.iter().any(|a| !a.is_finite()) {
            return Err(invalid("scan.fixed_angles_deg", "need at least one finite angle"));
        }
        if sc.points < 4 {
            return Err(invalid("scan.points", "must be >= 4"));
        }
        if !(sc.start_deg.is_finite() && sc.stop_deg.is_finite()) || sc.stop_deg <= sc.start_deg {
            return Err(invalid("scan.stop_deg", "must be finite and > start_deg"));
        }
        if sc.stop_deg - sc.start_deg < self.fit.period_deg / 2.0 {
            return Err(invalid("scan.stop_deg", "scan must cover at least half a fit period"));
        }

        self.protocol_config()
            .validate()
            .map_err(|e| in_section("qkd", e))?;
        Ok(())
    }

    pub fn detection_config(&self) -> DetectionConfig {
        let d = &self.detection;
        DetectionConfig {
            pair_rate: d.pair_rate,
            efficiency_signal: d.efficiency_signal,
            efficiency_idler: d.efficiency_idler,
            accidental_rate: d.accidental_rate,
            integration_time: d.integration_time,
            seed: self.seed,
        }
    }

    pub fn protocol_config(&self) -> ProtocolConfig {
        ProtocolConfig {
            n_pairs: self.qkd.n_pairs,
            flip_rectilinear: self.qkd.flip_rectilinear,
            flip_diagonal: self.qkd.flip_diagonal,
            seed: self.seed,
        }
    }

    pub fn pump(&self) -> PumpConfig {
        PumpConfig {
            lambda_pump_nm: self.source.pump_nm,
        }
    }

    pub fn spectrum(&self) -> anyhow::Result<Spectrum> {
        Ok(match &self.source.spectrum_file {
            Some(path) => {
                let text = std::fs::read_to_string(path)
                    .map_err(|e| anyhow::anyhow!("cannot read {}: {e}", path.display()))?;
                Spectrum::Tabulated(TabulatedSpectrum::parse_csv(&text)?)
            }
            None => Spectrum::Gaussian {
                hv: self.source.hv,
                vh: self.source.vh,
            },
        })
    }

    pub fn channels(&self) -> anyhow::Result<Vec<SpectralChannel>> {
        let spectrum = self.spectrum()?;
        let alpha = self.source.alpha_deg.to_radians();
        let g = &self.source.channels;
        let channels = match &g.wavelengths_nm {
            Some(list) => list
                .iter()
                .map(|&l| {
                    let (hv, vh) = spectrum.rates(l)?;
                    SpectralChannel::new(l, hv, vh, alpha, self.pump())
                })
                .collect::<Result<Vec<_>, _>>()?,
            None => build_channels(
                &spectrum,
                alpha,
                (g.lambda_min_nm, g.lambda_max_nm),
                g.count,
                self.pump(),
            )?,
        };
        Ok(channels)
    }

    /// Source model for one channel.
    pub fn channel_source(&self, channel: &SpectralChannel) -> wdmqkd_core::Result<SourceState> {
        match self.source.kind {
            SourceKind::Product => Ok(SourceState::Product),
            SourceKind::Entangled => {
                let state = channel.state(self.source.f_convention)?;
                // Keep 180° exactly on π.
                let state = BiphotonPureState::from_degrees(state.f(), self.source.alpha_deg)?;
                Ok(SourceState::Entangled(state))
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seed_only_gives_defaults() {
        let c = parse_config("seed = 7\n").unwrap();
        assert_eq!(c.seed, 7);
        assert_eq!(c.source.pump_nm, 429.7);
        assert_eq!(c.source.channels.count, 8);
        assert_eq!(c.channels().unwrap().len(), 8);
        c.validate().unwrap();
    }

    #[test]
    fn unknown_key_rejected() {
        let e = parse_config("seed = 1\n[detection]\npair_rat = 3.0\n").unwrap_err();
        let msg = e.to_string();
        assert!(msg.contains("pair_rat"), "{msg}");
        assert!(msg.contains("line 3"), "{msg}");
    }

    #[test]
    fn constraint_error_names_key() {
        let c = parse_config("[detection]\nefficiency_signal = 1.5\n").unwrap();
        let msg = c.validate().unwrap_err().to_string();
        assert!(msg.contains("detection.efficiency_signal"), "{msg}");
        let c = parse_config("[fit]\nperiod_deg = 90.0\n").unwrap();
        assert!(c.validate().unwrap_err().to_string().contains("fit.period_deg"));
        let c = parse_config("[qkd]\nn_pairs = 0\n").unwrap();
        assert!(c.validate().unwrap_err().to_string().contains("qkd.n_pairs"));
    }

    #[test]
    fn explicit_operating_points() {
        let c = parse_config("[source.channels]\nwavelengths_nm = [866.0, 870.0]\n").unwrap();
        c.validate().unwrap();
        let ch = c.channels().unwrap();
        assert_eq!(ch.len(), 2);
        assert!((ch[0].rate_hv / ch[0].rate_vh - 3.0).abs() < 1e-9);
        assert!((ch[1].rate_hv / ch[1].rate_vh - 1.0).abs() < 1e-9);
    }

    #[test]
    fn echo_round_trips() {
        let mut c = RunConfig {
            seed: u64::MAX,
            ..RunConfig::default()
        };
        c.source.kind = SourceKind::Product;
        c.source.alpha_deg = 60.0;
        c.source.channels.wavelengths_nm = Some(vec![866.0, 870.0]);
        c.scan.fixed_arm = Arm::Idler;
        c.qkd.calibrate = true;
        let text = c.to_toml();
        assert_eq!(parse_config(&text).unwrap(), c);
        let d = RunConfig::default();
        assert_eq!(parse_config(&d.to_toml()).unwrap(), d);
    }

    #[test]
    fn negative_seed_rejected() {
        assert!(parse_config("seed = -1\n").is_err());
    }
}
