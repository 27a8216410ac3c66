//! Subcommand bodies. Channel work runs on the rayon pool; every file is
//! written afterwards by one [`Output`] in a fixed order.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use rayon::prelude::*;
use serde::Serialize;
use wdmqkd_core::correlation::{
    chsh_optimize, find_theta_max, shift_table, signed_shift, ChshOptimum, ShiftRow,
    ThetaMaxResult,
};
use wdmqkd_core::detection::{angle_grid, simulate_scan, Arm, ScanData};
use wdmqkd_core::fit::{fit_scan, scan_metrics, FitReport};
use wdmqkd_core::qkd::{calibrate_flips, reports_to_csv, run_bbm92, wdm_aggregate, ChannelKeyReport};
use wdmqkd_core::biphoton::sin_cos_deg;
use wdmqkd_core::spectral::SpectralChannel;
use wdmqkd_core::{BiphotonPureState, CoincidenceModel, MeasurementSetting, SourceState};

use crate::config::RunConfig;

/// Serialized file writer rooted at the output directory.
pub struct Output {
    root: PathBuf,
    written: Vec<PathBuf>,
}

impl Output {
    pub fn new(root: &Path) -> Self {
        Self {
            root: root.to_path_buf(),
            written: Vec::new(),
        }
    }

    pub fn write(&mut self, rel: impl AsRef<Path>, contents: &str) -> Result<()> {
        let path = self.root.join(rel);
        if let Some(dir) = path.parent() {
            std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        }
        std::fs::write(&path, contents).with_context(|| format!("writing {}", path.display()))?;
        self.written.push(path);
        Ok(())
    }

    pub fn write_json<T: Serialize + ?Sized>(&mut self, rel: impl AsRef<Path>, value: &T) -> Result<()> {
        let mut text = serde_json::to_string_pretty(value)?;
        text.push('\n');
        self.write(rel, &text)
    }

    pub fn written(&self) -> &[PathBuf] {
        &self.written
    }
}

/// Angle label for file names: `45`, `22.5`.
fn angle_label(deg: f64) -> String {
    format!("{deg}")
}

fn source_label(source: &SourceState) -> String {
    match source {
        SourceState::Entangled(s) => format!("entangled f={} alpha_deg={}", s.f(), s.alpha_deg()),
        SourceState::Product => "product".to_string(),
    }
}

// ---------------------------------------------------------------- theory

#[derive(Debug, Serialize)]
pub struct TheorySummary {
    pub source: SourceState,
    pub reference_theta_s_deg: f64,
    pub rows: Vec<ShiftRow>,
    pub chsh: ChshOptimum,
    pub flags: Vec<String>,
}

/// Analytic idler scans on a 1° grid for each signal angle, plus a summary
/// of maximizing angles, shifts relative to the first signal angle, and
/// visibilities.
pub fn theory_scan(out: &mut Output, dir: &str, source: &SourceState, theta_s_list: &[f64]) -> Result<TheorySummary> {
    anyhow::ensure!(!theta_s_list.is_empty(), "theta_s list is empty");
    for &ts in theta_s_list {
        let mut csv = String::new();
        writeln!(csv, "# units: angles deg, rate = normalized coincidence probability")?;
        writeln!(csv, "# source: {}", source_label(source))?;
        writeln!(csv, "# theta_s_deg={ts}")?;
        csv.push_str("theta_i_deg,rate\n");
        for k in 0..=180 {
            let ti = k as f64;
            let p = source.coincidence_probability(MeasurementSetting::new(ts, ti));
            writeln!(csv, "{ti},{p}")?;
        }
        out.write(format!("{dir}/theta_s_{}.csv", angle_label(ts)), &csv)?;
    }

    let reference = theta_s_list[0];
    let rows = shift_table(source, theta_s_list, reference);
    let flags = rows
        .iter()
        .filter(|r| r.degenerate)
        .map(|r| {
            let why = if r.zero_rate { "zero rate" } else { "flat scan" };
            format!("theta_s={} deg: {why}, no maximizing angle", r.theta_s_deg)
        })
        .collect();
    let summary = TheorySummary {
        source: *source,
        reference_theta_s_deg: reference,
        rows,
        chsh: chsh_optimize(source),
        flags,
    };
    out.write_json(format!("{dir}/summary.json"), &summary)?;
    Ok(summary)
}

/// The four operating points of the analytic correlation figure.
pub const FIGURE_SETS: [(f64, f64); 4] = [(1.0, 0.0), (1.0, 180.0), (1.0, 60.0), (1.73, 0.0)];
pub const FIGURE_THETA_S: [f64; 3] = [0.0, 45.0, 135.0];

pub fn reproduce_figures(out: &mut Output) -> Result<Vec<TheorySummary>> {
    let mut all = Vec::new();
    for (f, alpha) in FIGURE_SETS {
        let source = SourceState::Entangled(BiphotonPureState::from_degrees(f, alpha)?);
        let dir = format!("reproduce/f{f}_alpha{alpha}");
        all.push(theory_scan(out, &dir, &source, &FIGURE_THETA_S)?);
    }
    all.push(theory_scan(out, "reproduce/product", &SourceState::Product, &FIGURE_THETA_S)?);
    Ok(all)
}

// -------------------------------------------------------------- spectrum

pub fn spectrum(out: &mut Output, config: &RunConfig) -> Result<Vec<SpectralChannel>> {
    let channels = config.channels()?;
    let mut csv = String::new();
    writeln!(csv, "# units: wavelengths nm, rates counts/s, f dimensionless")?;
    writeln!(csv, "# pump_nm={}", config.source.pump_nm)?;
    csv.push_str("lambda_signal_nm,lambda_idler_nm,rate_hv,rate_vh,f_hat,f_hat_inv\n");
    for c in &channels {
        let f = c.f_estimate();
        writeln!(
            csv,
            "{},{},{},{},{},{}",
            c.lambda_signal_nm, c.lambda_idler_nm, c.rate_hv, c.rate_vh, f.f_hat, f.f_hat_inverse
        )?;
    }
    out.write("spectrum/spectrum.csv", &csv)?;
    Ok(channels)
}

// --------------------------------------------------------- simulate + fit

#[derive(Debug, Clone, Serialize)]
pub struct SettingSummary {
    pub fixed_theta_deg: f64,
    pub theta_max_deg: Option<f64>,
    pub theta_max_err_deg: Option<f64>,
    pub shift_deg: Option<f64>,
    pub shift_err_deg: Option<f64>,
    pub visibility: Option<f64>,
    pub visibility_err: Option<f64>,
    pub analytic_theta_max_deg: Option<f64>,
    pub analytic_visibility: f64,
    pub fit: Option<FitReport>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ChannelSummary {
    pub channel_id: u64,
    pub lambda_signal_nm: f64,
    pub lambda_idler_nm: f64,
    pub source: Option<SourceState>,
    pub fixed_arm: Arm,
    pub settings: Vec<SettingSummary>,
    pub error: Option<String>,
}

struct ChannelRun {
    summary: ChannelSummary,
    scans: Vec<ScanData>,
}

fn simulate_channel(config: &RunConfig, id: u64, channel: &SpectralChannel) -> ChannelRun {
    let mut summary = ChannelSummary {
        channel_id: id,
        lambda_signal_nm: channel.lambda_signal_nm,
        lambda_idler_nm: channel.lambda_idler_nm,
        source: None,
        fixed_arm: config.scan.fixed_arm,
        settings: Vec::new(),
        error: None,
    };
    let source = match config.channel_source(channel) {
        Ok(s) => s,
        Err(e) => {
            summary.error = Some(e.to_string());
            return ChannelRun { summary, scans: Vec::new() };
        }
    };
    summary.source = Some(source);

    let sc = &config.scan;
    let angles = angle_grid(sc.start_deg, sc.stop_deg, sc.points);
    let detection = config.detection_config();
    let period = config.fit.period_deg;
    let mut scans = Vec::new();
    for &fixed in &sc.fixed_angles_deg {
        // Analytic reference; with the idler fixed, the arm-swapped state.
        let analytic = match (sc.fixed_arm, source) {
            (Arm::Idler, SourceState::Entangled(s)) => match s.arm_swapped() {
                Some(sw) => find_theta_max(&sw.into(), fixed),
                None => hv_only_idler_fixed(fixed),
            },
            _ => find_theta_max(&source, fixed),
        };
        let mut row = SettingSummary {
            fixed_theta_deg: fixed,
            theta_max_deg: None,
            theta_max_err_deg: None,
            shift_deg: None,
            shift_err_deg: None,
            visibility: None,
            visibility_err: None,
            analytic_theta_max_deg: analytic.theta_max_deg,
            analytic_visibility: analytic.visibility,
            fit: None,
            error: None,
        };
        let data = match simulate_scan(&source, (sc.fixed_arm, fixed), &angles, &detection, id) {
            Ok(d) => d,
            Err(e) => {
                row.error = Some(e.to_string());
                summary.settings.push(row);
                continue;
            }
        };
        match fit_scan(&data, period) {
            Ok(fit) => {
                row.fit = Some(fit.report());
                match scan_metrics(&fit) {
                    Ok(m) => {
                        row.theta_max_deg = Some(m.theta_max_deg);
                        row.theta_max_err_deg = Some(m.theta_max_err_deg);
                        row.visibility = Some(m.visibility);
                        row.visibility_err = Some(m.visibility_err);
                    }
                    Err(e) => row.error = Some(e.to_string()),
                }
            }
            Err(e) => row.error = Some(e.to_string()),
        }
        scans.push(data);
        summary.settings.push(row);
    }

    if let Some(reference) = summary.settings.first().cloned() {
        for row in &mut summary.settings {
            if let (Some(t), Some(t0)) = (row.theta_max_deg, reference.theta_max_deg) {
                row.shift_deg = Some(signed_shift(t, t0));
                row.shift_err_deg = Some(
                    row.theta_max_err_deg
                        .unwrap_or(f64::NAN)
                        .hypot(reference.theta_max_err_deg.unwrap_or(f64::NAN)),
                );
            }
        }
        summary.settings[0].shift_err_deg = Some(0.0);
    }
    ChannelRun { summary, scans }
}

/// `f = 0` with the idler fixed at `x`: `P(θs) = sin²θs cos²x`.
fn hv_only_idler_fixed(x: f64) -> ThetaMaxResult {
    let c2 = sin_cos_deg(x).1.powi(2);
    let zero = c2 == 0.0;
    ThetaMaxResult {
        theta_s_deg: x,
        theta_max_deg: (!zero).then_some(90.0),
        r_max: c2,
        r_min: 0.0,
        visibility: if zero { 0.0 } else { 1.0 },
        degenerate: zero,
        zero_rate: zero,
    }
}

pub fn simulate_fit(out: &mut Output, config: &RunConfig) -> Result<Vec<ChannelSummary>> {
    let channels = config.channels()?;
    let runs: Vec<ChannelRun> = channels
        .par_iter()
        .enumerate()
        .map(|(k, c)| simulate_channel(config, k as u64, c))
        .collect();

    let mut summaries = Vec::with_capacity(runs.len());
    for run in runs {
        let dir = format!("simulate_fit/channel_{:02}", run.summary.channel_id);
        for data in &run.scans {
            let label = angle_label(data.fixed_theta_deg);
            out.write(format!("{dir}/scan_fixed_{label}.csv"), &data.to_csv())?;
            let row = run
                .summary
                .settings
                .iter()
                .find(|r| r.fixed_theta_deg.to_bits() == data.fixed_theta_deg.to_bits());
            if let Some(fit) = row.and_then(|r| r.fit) {
                out.write_json(format!("{dir}/fit_fixed_{label}.json"), &fit)?;
            }
        }
        out.write_json(format!("{dir}/summary.json"), &run.summary)?;
        summaries.push(run.summary);
    }
    out.write_json("simulate_fit/summary.json", &summaries)?;
    Ok(summaries)
}

// ------------------------------------------------------------------- qkd

#[derive(Debug, Clone, Serialize)]
pub struct QkdSummary {
    pub n_channels: usize,
    pub total_sifted_bits: u64,
    pub total_secret_bits: f64,
    pub channels: Vec<ChannelKeyReport>,
    pub flags: Vec<String>,
}

pub fn qkd(out: &mut Output, config: &RunConfig) -> Result<QkdSummary> {
    let channels = config.channels()?;
    let base = config.protocol_config();
    let results: Vec<std::result::Result<ChannelKeyReport, String>> = channels
        .par_iter()
        .enumerate()
        .map(|(k, c)| {
            let source = config.channel_source(c).map_err(|e| e.to_string())?;
            let mut protocol = base;
            if config.qkd.calibrate {
                (protocol.flip_rectilinear, protocol.flip_diagonal) = calibrate_flips(&source);
            }
            run_bbm92(&source, &protocol, k as u64, c.lambda_signal_nm).map_err(|e| e.to_string())
        })
        .collect();

    let mut reports = Vec::new();
    let mut flags = Vec::new();
    for (k, (r, c)) in results.into_iter().zip(&channels).enumerate() {
        match r {
            Ok(r) => {
                if r.qber_rect.is_none() || r.qber_diag.is_none() {
                    flags.push(format!("channel {k} ({} nm): undefined QBER", c.lambda_signal_nm));
                } else if r.secret_fraction == 0.0 {
                    flags.push(format!("channel {k} ({} nm): no secret key", c.lambda_signal_nm));
                }
                reports.push(r);
            }
            Err(e) => flags.push(format!("channel {k} ({} nm): skipped: {e}", c.lambda_signal_nm)),
        }
    }
    let summary = match wdm_aggregate(&reports) {
        Ok(agg) => QkdSummary {
            n_channels: agg.n_channels,
            total_sifted_bits: agg.total_sifted_bits,
            total_secret_bits: agg.total_secret_bits,
            channels: agg.channels,
            flags,
        },
        Err(e) => {
            flags.push(e.to_string());
            QkdSummary {
                n_channels: 0,
                total_sifted_bits: 0,
                total_secret_bits: 0.0,
                channels: Vec::new(),
                flags,
            }
        }
    };
    out.write("qkd/channels.csv", &reports_to_csv(&reports))?;
    out.write_json("qkd/channels.json", &reports)?;
    out.write_json("qkd/summary.json", &summary)?;
    Ok(summary)
}
