//! Weighted least-squares fit of polarizer scans to
//! `c · (1 + v · cos(2π(θ − θ0)/P))`.
//!
//! The model is linear in `(c, c·v·cos φ0, c·v·sin φ0)`, so the starting
//! point is the weighted projection onto `{1, cos ωθ, sin ωθ}` (the
//! discrete Fourier component at the fit period). Damped Gauss-Newton then
//! refines `(c, v, θ0)` directly and supplies the covariance.

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::biphoton::wrap_deg;
use crate::detection::ScanData;
use crate::error::{invalid, Error, Result};

pub const MAX_ITERATIONS: usize = 200;
pub const STEP_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub c: f64,
    pub v: f64,
    /// Peak position in `[0, period)`.
    pub theta0_deg: f64,
    pub period_deg: f64,
    /// Covariance of `(c, v, θ0)`; entries are `+∞` when the normal matrix
    /// is singular.
    pub covariance: [[f64; 3]; 3],
    pub chi2_reduced: f64,
    pub converged: bool,
    pub iterations: usize,
}

impl FitResult {
    pub fn c_err(&self) -> f64 {
        self.covariance[0][0].sqrt()
    }

    pub fn v_err(&self) -> f64 {
        self.covariance[1][1].sqrt()
    }

    pub fn theta0_err_deg(&self) -> f64 {
        self.covariance[2][2].sqrt()
    }

    pub fn model(&self, theta_deg: f64) -> f64 {
        model(self.params(), omega(self.period_deg), theta_deg)
    }

    fn params(&self) -> [f64; 3] {
        [self.c, self.v, self.theta0_deg]
    }

    /// Flat summary used for JSON output.
    pub fn report(&self) -> FitReport {
        FitReport {
            c: self.c,
            v: self.v,
            theta0_deg: self.theta0_deg,
            period_deg: self.period_deg,
            c_err: self.c_err(),
            v_err: self.v_err(),
            theta0_err_deg: self.theta0_err_deg(),
            chi2_reduced: self.chi2_reduced,
            converged: self.converged,
        }
    }
}

/// JSON form of a fit. Non-finite errors serialize as `null`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub c: f64,
    pub v: f64,
    pub theta0_deg: f64,
    pub period_deg: f64,
    pub c_err: f64,
    pub v_err: f64,
    pub theta0_err_deg: f64,
    pub chi2_reduced: f64,
    pub converged: bool,
}

fn omega(period_deg: f64) -> f64 {
    std::f64::consts::TAU / period_deg
}

fn model(p: [f64; 3], w: f64, theta: f64) -> f64 {
    p[0] * (1.0 + p[1] * (w * (theta - p[2])).cos())
}

fn jacobian_row(p: [f64; 3], w: f64, theta: f64) -> Vector3<f64> {
    let (s, c) = (w * (theta - p[2])).sin_cos();
    Vector3::new(1.0 + p[1] * c, p[0] * c, p[0] * p[1] * w * s)
}

struct Problem<'a> {
    angles: &'a [f64],
    values: &'a [f64],
    weights: Vec<f64>,
    w: f64,
}

impl Problem<'_> {
    fn cost(&self, p: [f64; 3]) -> f64 {
        self.angles
            .iter()
            .zip(self.values)
            .zip(&self.weights)
            .map(|((&t, &y), &wt)| {
                let r = y - model(p, self.w, t);
                wt * r * r
            })
            .sum()
    }

    /// `(JᵀWJ, JᵀWr)` at `p`.
    fn normal_equations(&self, p: [f64; 3]) -> (Matrix3<f64>, Vector3<f64>) {
        let mut a = Matrix3::zeros();
        let mut g = Vector3::zeros();
        for ((&t, &y), &wt) in self.angles.iter().zip(self.values).zip(&self.weights) {
            let j = jacobian_row(p, self.w, t);
            a += wt * j * j.transpose();
            g += wt * (y - model(p, self.w, t)) * j;
        }
        (a, g)
    }

    /// Weighted linear fit on `{1, cos ωθ, sin ωθ}`.
    fn linear_start(&self) -> Option<[f64; 3]> {
        let mut a = Matrix3::zeros();
        let mut b = Vector3::zeros();
        for ((&t, &y), &wt) in self.angles.iter().zip(self.values).zip(&self.weights) {
            let (s, c) = (self.w * t).sin_cos();
            let basis = Vector3::new(1.0, c, s);
            a += wt * basis * basis.transpose();
            b += wt * y * basis;
        }
        let x = a.lu().solve(&b)?;
        let c0 = x[0];
        if c0 <= 0.0 {
            return None;
        }
        let v = x[1].hypot(x[2]) / c0;
        let theta0 = x[2].atan2(x[1]) / self.w;
        Some([c0, v, theta0])
    }
}

/// Fits real-valued observations; weights are `1 / max(y, 1)`.
pub fn fit_points(angles: &[f64], values: &[f64], period_deg: f64) -> Result<FitResult> {
    if !(period_deg.is_finite() && period_deg > 0.0) {
        return Err(invalid("period", "must be finite and > 0"));
    }
    if angles.len() != values.len() {
        return Err(invalid("values", "angles and values differ in length"));
    }
    if angles.len() < 4 {
        return Err(Error::InsufficientData(format!(
            "{} points, need at least 4",
            angles.len()
        )));
    }
    if angles.iter().chain(values).any(|x| !x.is_finite()) {
        return Err(invalid("values", "must be finite"));
    }
    let lo = angles.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = angles.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if hi - lo < 0.5 * period_deg {
        return Err(Error::InsufficientData(format!(
            "angles span {} deg, need at least half the {period_deg} deg period",
            hi - lo
        )));
    }

    let problem = Problem {
        angles,
        values,
        weights: values.iter().map(|&y| 1.0 / y.max(1.0)).collect(),
        w: omega(period_deg),
    };
    let dof = (angles.len() - 3) as f64;

    let Some(mut p) = problem.linear_start() else {
        // no positive baseline: nothing to fit
        return Ok(FitResult {
            c: 0.0,
            v: 0.0,
            theta0_deg: 0.0,
            period_deg,
            covariance: [[f64::INFINITY; 3]; 3],
            chi2_reduced: problem.cost([0.0, 0.0, 0.0]) / dof,
            converged: false,
            iterations: 0,
        });
    };

    let mut cost = problem.cost(p);
    let mut converged = false;
    let mut iterations = 0;
    while iterations < MAX_ITERATIONS {
        iterations += 1;
        if p[1].abs() <= 1e-12 {
            // phase unidentifiable; c is already optimal from the linear start
            converged = true;
            break;
        }
        let (a, g) = problem.normal_equations(p);
        let Some(step) = a.cholesky().map(|ch| ch.solve(&g)) else {
            // singular normal matrix (v = 0): the linear start is already
            // the least-squares optimum
            converged = true;
            break;
        };
        let mut scale = 1.0;
        let mut accepted = None;
        for _ in 0..40 {
            let trial = [p[0] + scale * step[0], p[1] + scale * step[1], p[2] + scale * step[2]];
            let c = problem.cost(trial);
            if c <= cost {
                accepted = Some((trial, c));
                break;
            }
            scale *= 0.5;
        }
        let Some((trial, trial_cost)) = accepted else {
            // no descent along the Gauss-Newton direction: stationary
            converged = true;
            break;
        };
        let rel = [
            (trial[0] - p[0]).abs() / p[0].abs().max(f64::MIN_POSITIVE),
            (trial[1] - p[1]).abs(),
            (trial[2] - p[2]).abs() / period_deg,
        ]
        .into_iter()
        .fold(0.0, f64::max);
        p = trial;
        cost = trial_cost;
        if rel < STEP_TOLERANCE {
            converged = true;
            break;
        }
    }

    let (a, _) = problem.normal_equations(p);
    let mut covariance = match a.try_inverse() {
        Some(inv) if inv.iter().all(|x| x.is_finite()) => {
            let mut m = [[0.0; 3]; 3];
            for (i, row) in m.iter_mut().enumerate() {
                for (j, x) in row.iter_mut().enumerate() {
                    *x = inv[(i, j)];
                }
            }
            m
        }
        _ => [[f64::INFINITY; 3]; 3],
    };

    if p[1] < 0.0 {
        p[1] = -p[1];
        p[2] += 0.5 * period_deg;
        for k in [0, 2] {
            covariance[1][k] = -covariance[1][k];
            covariance[k][1] = -covariance[k][1];
        }
    }
    p[2] = wrap_deg(p[2], period_deg);

    Ok(FitResult {
        c: p[0],
        v: p[1],
        theta0_deg: p[2],
        period_deg,
        covariance,
        chi2_reduced: cost / dof,
        converged,
        iterations,
    })
}

pub fn fit_scan(data: &ScanData, period_deg: f64) -> Result<FitResult> {
    let values: Vec<f64> = data.counts.iter().map(|&c| c as f64).collect();
    fit_points(&data.angles, &values, period_deg)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScanMetrics {
    /// Fitted peak position reduced to `[0°, 180°)`.
    pub theta_max_deg: f64,
    pub theta_max_err_deg: f64,
    pub visibility: f64,
    pub visibility_err: f64,
}

pub fn scan_metrics(fit: &FitResult) -> Result<ScanMetrics> {
    if !fit.converged {
        return Err(Error::NotConverged);
    }
    Ok(ScanMetrics {
        theta_max_deg: wrap_deg(fit.theta0_deg, 180.0),
        theta_max_err_deg: fit.theta0_err_deg(),
        visibility: fit.v,
        visibility_err: fit.v_err(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::correlation::angular_distance;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn synth(c: f64, v: f64, t0: f64, period: f64, angles: &[f64]) -> Vec<f64> {
        let w = std::f64::consts::TAU / period;
        angles.iter().map(|&t| c * (1.0 + v * (w * (t - t0)).cos())).collect()
    }

    fn grid(n: usize, span: f64) -> Vec<f64> {
        (0..n).map(|k| k as f64 * span / (n - 1) as f64).collect()
    }

    #[test]
    fn noiseless_round_trip() {
        let angles = grid(19, 180.0);
        let y = synth(100.0, 0.9, 20.0, 180.0, &angles);
        let fit = fit_points(&angles, &y, 180.0).unwrap();
        assert!(fit.converged);
        assert_relative_eq!(fit.c, 100.0, max_relative = 1e-6);
        assert_relative_eq!(fit.v, 0.9, max_relative = 1e-6);
        assert_relative_eq!(fit.theta0_deg, 20.0, max_relative = 1e-6);
        assert!(fit.chi2_reduced < 1e-20);
    }

    #[test]
    fn full_turn_period() {
        let angles = grid(37, 360.0);
        let y = synth(50.0, 0.4, 300.0, 360.0, &angles);
        let fit = fit_points(&angles, &y, 360.0).unwrap();
        assert_relative_eq!(fit.theta0_deg, 300.0, max_relative = 1e-9);
        let m = scan_metrics(&fit).unwrap();
        assert_relative_eq!(m.theta_max_deg, 120.0, max_relative = 1e-9);
    }

    #[test]
    fn constant_data_blows_up_covariance() {
        let angles = grid(19, 180.0);
        let y = vec![100.0; 19];
        let fit = fit_points(&angles, &y, 180.0).unwrap();
        assert_relative_eq!(fit.c, 100.0, max_relative = 1e-12);
        assert!(fit.v.abs() < 1e-12);
        assert!(!fit.theta0_err_deg().is_finite() || fit.theta0_err_deg() > 1e6);
    }

    #[test]
    fn all_zero_counts_do_not_converge() {
        let angles = grid(19, 180.0);
        let fit = fit_points(&angles, &[0.0; 19], 180.0).unwrap();
        assert!(!fit.converged);
        assert!(scan_metrics(&fit).is_err());
    }

    #[test]
    fn input_checks() {
        assert!(matches!(
            fit_points(&[0.0, 10.0, 20.0], &[1.0, 2.0, 3.0], 180.0),
            Err(Error::InsufficientData(_))
        ));
        let short = grid(10, 60.0);
        assert!(matches!(
            fit_points(&short, &[1.0; 10], 180.0),
            Err(Error::InsufficientData(_))
        ));
        assert!(fit_points(&grid(10, 90.0), &[1.0; 10], 180.0).is_ok());
        assert!(fit_points(&grid(4, 180.0), &[1.0; 3], 180.0).is_err());
        assert!(fit_points(&grid(4, 180.0), &[1.0; 4], 0.0).is_err());
    }

    #[test]
    fn metrics_examples() {
        let fit = FitResult {
            c: 100.0,
            v: 1.0,
            theta0_deg: 45.0,
            period_deg: 180.0,
            covariance: [[0.0; 3]; 3],
            chi2_reduced: 0.0,
            converged: true,
            iterations: 1,
        };
        let m = scan_metrics(&fit).unwrap();
        assert_eq!(m.theta_max_deg, 45.0);
        assert_eq!(m.visibility, 1.0);
        assert!(scan_metrics(&FitResult { converged: false, ..fit }).is_err());
    }

    #[test]
    fn negative_amplitude_is_canonicalized() {
        // a minimum at 30° is a maximum at 120°
        let angles = grid(19, 180.0);
        let y = synth(100.0, -0.5, 30.0, 180.0, &angles);
        let fit = fit_points(&angles, &y, 180.0).unwrap();
        assert_relative_eq!(fit.v, 0.5, max_relative = 1e-9);
        assert_relative_eq!(fit.theta0_deg, 120.0, max_relative = 1e-9);
    }

    proptest! {
        #[test]
        fn round_trip_any_parameters(c in 1.0..1e4f64, v in 0.01..=1.0f64, t0 in 0.0..180.0f64, n in 6usize..40) {
            let angles = grid(n, 180.0);
            let y = synth(c, v, t0, 180.0, &angles);
            let fit = fit_points(&angles, &y, 180.0).unwrap();
            prop_assert!(fit.converged);
            prop_assert!((fit.c - c).abs() <= 1e-6 * c);
            prop_assert!((fit.v - v).abs() <= 1e-6 * v);
            prop_assert!(angular_distance(fit.theta0_deg, t0, 180.0) <= 1e-6 * t0.max(1.0));
        }

        #[test]
        fn canonical_fixed_point(c in 1.0..1e4f64, v in -1.0..1.0f64, t0 in -400.0..400.0f64) {
            prop_assume!(v.abs() > 1e-3);
            let angles = grid(25, 180.0);
            let first = fit_points(&angles, &synth(c, v, t0, 180.0, &angles), 180.0).unwrap();
            prop_assert!(first.v >= 0.0);
            prop_assert!((0.0..180.0).contains(&first.theta0_deg));
            let again: Vec<f64> = angles.iter().map(|&t| first.model(t)).collect();
            let second = fit_points(&angles, &again, 180.0).unwrap();
            prop_assert!((second.c - first.c).abs() <= 1e-9 * first.c);
            prop_assert!((second.v - first.v).abs() <= 1e-9);
            prop_assert!(angular_distance(second.theta0_deg, first.theta0_deg, 180.0) <= 1e-9 * 180.0);
        }
    }
}
