//! Characterization of the polarization correlation: the idler angle that
//! maximizes the coincidence rate at fixed signal angle, how that angle
//! moves between bases, fringe visibility, CHSH value, and the estimate of
//! `f` from the HV/VH rates.

use serde::{Deserialize, Serialize};

use crate::biphoton::{sin_cos_deg, wrap_deg, CoincidenceModel, MeasurementSetting, SourceState};
use crate::error::{Error, Result};

/// Relative amplitude below which a scan counts as constant.
pub const DEGENERACY_THRESHOLD: f64 = 1e-12;

/// At fixed `θs` every source here gives an idler scan of the form
/// `scale · (mean + cos2·cos 2θi + sin2·sin 2θi)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IdlerScan {
    pub scale: f64,
    pub mean: f64,
    pub cos2: f64,
    pub sin2: f64,
}

impl IdlerScan {
    pub fn of(source: &SourceState, theta_s_deg: f64) -> Self {
        match source {
            SourceState::Entangled(state) => {
                let (ss, cs) = sin_cos_deg(theta_s_deg);
                let f = state.f();
                let hv = ss * ss;
                let vh = f * f * cs * cs;
                IdlerScan {
                    scale: 1.0 / (1.0 + f * f),
                    mean: 0.5 * (hv + vh),
                    cos2: 0.5 * (hv - vh),
                    sin2: f * state.alpha().cos() * ss * cs,
                }
            }
            // sin²(θs+45°) · sin²(θi+45°) = g · (1 + sin 2θi) / 2; the θi
            // factor does not depend on θs, only the prefactor g does.
            SourceState::Product => {
                let g = sin_cos_deg(theta_s_deg + 45.0).0.powi(2);
                IdlerScan {
                    scale: g,
                    mean: 0.5,
                    cos2: 0.0,
                    sin2: 0.5,
                }
            }
        }
    }

    pub fn amplitude(&self) -> f64 {
        self.cos2.hypot(self.sin2)
    }

    pub fn rate(&self, theta_i_deg: f64) -> f64 {
        let (s, c) = sin_cos_deg(2.0 * theta_i_deg);
        self.scale * (self.mean + self.cos2 * c + self.sin2 * s)
    }

    pub fn is_degenerate(&self) -> bool {
        self.mean <= 0.0 || self.amplitude() <= DEGENERACY_THRESHOLD * self.mean
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThetaMaxResult {
    pub theta_s_deg: f64,
    /// Maximizing idler angle in `[0°, 180°)`; `None` when degenerate.
    pub theta_max_deg: Option<f64>,
    pub r_max: f64,
    pub r_min: f64,
    /// `(r_max − r_min)/(r_max + r_min)`, 0 when both rates vanish.
    pub visibility: f64,
    pub degenerate: bool,
    /// The whole scan is identically zero. For the product source the peak
    /// position is still defined by the θs-independent idler factor.
    pub zero_rate: bool,
}

/// Maximizing idler angle for fixed signal angle, from the closed-form
/// sinusoid of the idler scan.
pub fn find_theta_max(source: &SourceState, theta_s_deg: f64) -> ThetaMaxResult {
    let scan = IdlerScan::of(source, theta_s_deg);
    let amp = scan.amplitude();
    let degenerate = scan.is_degenerate();
    let r_max = scan.scale * (scan.mean + amp);
    let r_min = scan.scale * (scan.mean - amp).max(0.0);
    let zero_rate = r_max <= 0.0;
    let visibility = if r_max + r_min > 0.0 {
        (r_max - r_min) / (r_max + r_min)
    } else {
        0.0
    };
    let theta_max_deg = (!degenerate)
        .then(|| wrap_deg(0.5 * scan.sin2.atan2(scan.cos2).to_degrees(), 180.0));

    #[cfg(debug_assertions)]
    if let Some(t) = theta_max_deg {
        if !zero_rate && visibility > 1e-6 {
            let grid = grid_theta_max(source, theta_s_deg, 0.01);
            debug_assert!(
                angular_distance(t, grid, 180.0) <= 0.01,
                "closed form {t} vs grid {grid} at theta_s={theta_s_deg}"
            );
        }
    }

    ThetaMaxResult {
        theta_s_deg,
        theta_max_deg,
        r_max,
        r_min,
        visibility: visibility.clamp(0.0, 1.0),
        degenerate,
        zero_rate,
    }
}

/// Brute-force argmax of the coincidence probability over a θi grid.
pub fn grid_theta_max<M: CoincidenceModel>(model: &M, theta_s_deg: f64, step_deg: f64) -> f64 {
    let n = (180.0 / step_deg).round() as usize;
    (0..n)
        .map(|k| k as f64 * step_deg)
        .map(|ti| (ti, model.coincidence_probability(MeasurementSetting::new(theta_s_deg, ti))))
        .fold((0.0, f64::NEG_INFINITY), |best, cur| if cur.1 > best.1 { cur } else { best })
        .0
}

/// Minimal signed difference `a − b` modulo 180°, in `(−90°, 90°]`.
pub fn signed_shift(a_deg: f64, b_deg: f64) -> f64 {
    let d = wrap_deg(a_deg - b_deg, 180.0);
    if d > 90.0 {
        d - 180.0
    } else {
        d
    }
}

pub fn angular_distance(a: f64, b: f64, period: f64) -> f64 {
    let d = wrap_deg(a - b, period);
    d.min(period - d)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShiftRow {
    pub theta_s_deg: f64,
    pub theta_max_deg: Option<f64>,
    pub shift_deg: Option<f64>,
    pub visibility: f64,
    pub degenerate: bool,
    pub zero_rate: bool,
}

/// Θ_i for each signal angle and its shift relative to Θ_i at
/// `reference_deg` (normally 0°).
pub fn shift_table(source: &SourceState, theta_s_list: &[f64], reference_deg: f64) -> Vec<ShiftRow> {
    let reference = find_theta_max(source, reference_deg).theta_max_deg;
    theta_s_list
        .iter()
        .map(|&ts| {
            let r = find_theta_max(source, ts);
            let shift = match (r.theta_max_deg, reference) {
                (Some(t), Some(t0)) => Some(signed_shift(t, t0)),
                _ => None,
            };
            ShiftRow {
                theta_s_deg: ts,
                theta_max_deg: r.theta_max_deg,
                shift_deg: shift,
                visibility: r.visibility,
                degenerate: r.degenerate,
                zero_rate: r.zero_rate,
            }
        })
        .collect()
}

/// Fringe visibility of the idler scan at fixed signal angle.
pub fn visibility(source: &SourceState, theta_s_deg: f64) -> Result<f64> {
    let r = find_theta_max(source, theta_s_deg);
    if r.zero_rate || (r.degenerate && r.r_max <= 0.0) {
        return Err(Error::DegenerateScan { theta_s_deg });
    }
    Ok(r.visibility)
}

/// Analyzer angles for a CHSH test, degrees.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChshSettings {
    pub a: f64,
    pub a_prime: f64,
    pub b: f64,
    pub b_prime: f64,
}

impl ChshSettings {
    pub fn as_array(&self) -> [f64; 4] {
        [self.a, self.a_prime, self.b, self.b_prime]
    }

    fn from_array(x: [f64; 4]) -> Self {
        Self {
            a: x[0],
            a_prime: x[1],
            b: x[2],
            b_prime: x[3],
        }
    }
}

/// `S = E(a,b) − E(a,b′) + E(a′,b) + E(a′,b′)`.
pub fn chsh_value<M: CoincidenceModel>(model: &M, s: &ChshSettings) -> f64 {
    let e = |x, y| model.correlation(MeasurementSetting::new(x, y));
    e(s.a, s.b) - e(s.a, s.b_prime) + e(s.a_prime, s.b) + e(s.a_prime, s.b_prime)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChshOptimum {
    pub settings: ChshSettings,
    /// Largest `|S|` found; `settings` evaluate to `+s_max`.
    pub s_max: f64,
}

const CHSH_GRID_STEP: f64 = 5.0;
const CHSH_MIN_STEP: f64 = 1e-4;

/// Maximizes `|S|` by a 5° grid over all four angles followed by
/// coordinate search with step halving down to 1e-4°.
pub fn chsh_optimize<M: CoincidenceModel>(model: &M) -> ChshOptimum {
    let n = (180.0 / CHSH_GRID_STEP) as usize;
    let angles: Vec<f64> = (0..n).map(|k| k as f64 * CHSH_GRID_STEP).collect();
    let table: Vec<Vec<f64>> = angles
        .iter()
        .map(|&x| {
            angles
                .iter()
                .map(|&y| model.correlation(MeasurementSetting::new(x, y)))
                .collect()
        })
        .collect();

    let mut best = (0.0f64, [0usize; 4]);
    for i in 0..n {
        for ip in 0..n {
            for j in 0..n {
                for jp in 0..n {
                    let s = table[i][j] - table[i][jp] + table[ip][j] + table[ip][jp];
                    if s.abs() > best.0.abs() {
                        best = (s, [i, ip, j, jp]);
                    }
                }
            }
        }
    }

    let sign = if best.0 < 0.0 { -1.0 } else { 1.0 };
    let mut x = best.1.map(|k| angles[k]);
    let objective = |x: &[f64; 4]| sign * chsh_value(model, &ChshSettings::from_array(*x));
    let mut current = objective(&x);
    let mut step = CHSH_GRID_STEP / 2.0;
    while step >= CHSH_MIN_STEP {
        let mut improved = false;
        for k in 0..4 {
            for dir in [1.0, -1.0] {
                let mut trial = x;
                trial[k] += dir * step;
                let value = objective(&trial);
                if value > current {
                    x = trial;
                    current = value;
                    improved = true;
                }
            }
        }
        if !improved {
            step *= 0.5;
        }
    }

    // rotating both signal analyzers by 90° negates S
    if sign < 0.0 {
        x[0] += 90.0;
        x[1] += 90.0;
    }
    let settings = ChshSettings::from_array(x.map(|a| wrap_deg(a, 180.0)));
    ChshOptimum {
        s_max: chsh_value(model, &settings),
        settings,
    }
}

/// `f` recovered from the HV and VH coincidence rates under the state
/// weights `1/(1+f²)` and `f²/(1+f²)`, plus its reciprocal.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FEstimate {
    /// `√(rate_VH / rate_HV)`; infinite when `rate_HV = 0`.
    pub f_hat: f64,
    pub f_hat_inverse: f64,
}

impl FEstimate {
    pub fn is_infinite(&self) -> bool {
        self.f_hat.is_infinite()
    }
}

pub fn estimate_f(rate_hv: f64, rate_vh: f64) -> Result<FEstimate> {
    if !(rate_hv.is_finite() && rate_vh.is_finite()) || rate_hv < 0.0 || rate_vh < 0.0 {
        return Err(crate::error::invalid(
            "rates",
            format!("must be finite and >= 0, got HV={rate_hv}, VH={rate_vh}"),
        ));
    }
    if rate_hv == 0.0 && rate_vh == 0.0 {
        return Err(Error::ZeroRates);
    }
    if rate_hv == 0.0 {
        return Ok(FEstimate {
            f_hat: f64::INFINITY,
            f_hat_inverse: 0.0,
        });
    }
    let f_hat = (rate_vh / rate_hv).sqrt();
    Ok(FEstimate {
        f_hat,
        f_hat_inverse: if f_hat == 0.0 { f64::INFINITY } else { 1.0 / f_hat },
    })
}
