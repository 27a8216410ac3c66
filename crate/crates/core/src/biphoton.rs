//! Two-photon polarization model.
//!
//! The entangled source emits the pure state
//!
//! ```text
//! |ψ⟩ = (|H⟩s|V⟩i + f·e^{iα}|V⟩s|H⟩i) / √(1 + f²)
//! ```
//!
//! and each arm carries a linear polarizer at angle θ measured from the
//! vertical axis, transmitting the field `a_H sin θ + a_V cos θ`. The
//! coincidence probability is the squared projection amplitude.
//!
//! The separable source emits `(|H⟩ + |V⟩)s ⊗ (|H⟩ + |V⟩)i` (unnormalized,
//! squared norm 4).

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::f64::consts::TAU;

use crate::error::{invalid, Result};

/// `(sin, cos)` of an angle in degrees, exact at multiples of 90°.
pub fn sin_cos_deg(deg: f64) -> (f64, f64) {
    let r = deg.rem_euclid(360.0);
    if r == 0.0 || r == 360.0 {
        (0.0, 1.0)
    } else if r == 90.0 {
        (1.0, 0.0)
    } else if r == 180.0 {
        (0.0, -1.0)
    } else if r == 270.0 {
        (-1.0, 0.0)
    } else {
        r.to_radians().sin_cos()
    }
}

/// Reduces an angle into `[0, period)`.
pub fn wrap_deg(deg: f64, period: f64) -> f64 {
    let r = deg.rem_euclid(period);
    // rem_euclid can round up to `period` for tiny negative inputs
    if r >= period {
        0.0
    } else {
        r
    }
}

/// The pure biphoton state parameterized by amplitude ratio `f` and
/// relative phase `α`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BiphotonPureState {
    f: f64,
    alpha: f64,
}

impl BiphotonPureState {
    /// Builds a state from `f ≥ 0` and a phase in radians. The phase is
    /// normalized into `[0, 2π)`.
    pub fn new(f: f64, alpha_rad: f64) -> Result<Self> {
        if !f.is_finite() || f < 0.0 {
            return Err(invalid("f", format!("must be finite and >= 0, got {f}")));
        }
        if !alpha_rad.is_finite() {
            return Err(invalid("alpha", "must be finite"));
        }
        let alpha = alpha_rad.rem_euclid(TAU);
        let alpha = if alpha >= TAU { 0.0 } else { alpha };
        Ok(Self { f, alpha })
    }

    pub fn from_degrees(f: f64, alpha_deg: f64) -> Result<Self> {
        if !alpha_deg.is_finite() {
            return Err(invalid("alpha", "must be finite"));
        }
        // keep 180° exact so cos α = -1 without rounding noise
        let wrapped = wrap_deg(alpha_deg, 360.0);
        let rad = if wrapped == 180.0 {
            std::f64::consts::PI
        } else {
            wrapped.to_radians()
        };
        Self::new(f, rad)
    }

    /// Maximally entangled state with `f = 1`, `α = 0`.
    pub fn bell() -> Self {
        Self { f: 1.0, alpha: 0.0 }
    }

    pub fn f(&self) -> f64 {
        self.f
    }

    /// Relative phase in radians, in `[0, 2π)`.
    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn alpha_deg(&self) -> f64 {
        self.alpha.to_degrees()
    }

    /// Probability weights of the HV and VH terms; they sum to one.
    pub fn weights(&self) -> (f64, f64) {
        let n = 1.0 + self.f * self.f;
        (1.0 / n, self.f * self.f / n)
    }

    /// The same physical state with H and V relabelled: `f → 1/f`, used
    /// together with angles `θ → 90° − θ`. `None` for `f = 0`.
    pub fn label_swapped(&self) -> Option<Self> {
        (self.f > 0.0).then(|| Self {
            f: 1.0 / self.f,
            alpha: self.alpha,
        })
    }

    /// The state with the signal and idler arms exchanged, so that
    /// `P'(θi, θs) = P(θs, θi)`: `f → 1/f`, `α → −α`. `None` for `f = 0`.
    pub fn arm_swapped(&self) -> Option<Self> {
        (self.f > 0.0).then(|| Self {
            f: 1.0 / self.f,
            alpha: (std::f64::consts::TAU - self.alpha) % std::f64::consts::TAU,
        })
    }

    fn phase_factor(&self) -> Complex64 {
        if self.alpha == std::f64::consts::PI {
            Complex64::new(-1.0, 0.0)
        } else {
            Complex64::from_polar(1.0, self.alpha)
        }
    }
}

/// Polarizer angles of both arms, degrees from vertical, stored modulo 180°.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeasurementSetting {
    theta_s: f64,
    theta_i: f64,
}

impl MeasurementSetting {
    pub fn new(theta_s_deg: f64, theta_i_deg: f64) -> Self {
        Self {
            theta_s: wrap_deg(theta_s_deg, 180.0),
            theta_i: wrap_deg(theta_i_deg, 180.0),
        }
    }

    pub fn theta_s(&self) -> f64 {
        self.theta_s
    }

    pub fn theta_i(&self) -> f64 {
        self.theta_i
    }

    /// Setting with either polarizer rotated by 90° (the orthogonal port).
    pub fn rotated(&self, signal_orthogonal: bool, idler_orthogonal: bool) -> Self {
        let ds = if signal_orthogonal { 90.0 } else { 0.0 };
        let di = if idler_orthogonal { 90.0 } else { 0.0 };
        Self::new(self.theta_s + ds, self.theta_i + di)
    }
}

/// Probabilities of the four transmit (`t`) / orthogonal (`r`) outcome
/// pairs, ordered (signal, idler).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JointOutcomeDistribution {
    pub p_tt: f64,
    pub p_tr: f64,
    pub p_rt: f64,
    pub p_rr: f64,
}

impl JointOutcomeDistribution {
    pub fn total(&self) -> f64 {
        self.p_tt + self.p_tr + self.p_rt + self.p_rr
    }

    /// `E = p_tt + p_rr − p_tr − p_rt`.
    pub fn correlation(&self) -> f64 {
        self.p_tt + self.p_rr - self.p_tr - self.p_rt
    }

    pub fn as_array(&self) -> [f64; 4] {
        [self.p_tt, self.p_tr, self.p_rt, self.p_rr]
    }
}

/// Anything that yields a coincidence probability for a pair of polarizer
/// settings.
pub trait CoincidenceModel {
    fn coincidence_probability(&self, setting: MeasurementSetting) -> f64;

    fn joint_outcome_distribution(&self, setting: MeasurementSetting) -> JointOutcomeDistribution {
        JointOutcomeDistribution {
            p_tt: self.coincidence_probability(setting),
            p_tr: self.coincidence_probability(setting.rotated(false, true)),
            p_rt: self.coincidence_probability(setting.rotated(true, false)),
            p_rr: self.coincidence_probability(setting.rotated(true, true)),
        }
    }

    fn correlation(&self, setting: MeasurementSetting) -> f64 {
        self.joint_outcome_distribution(setting).correlation()
    }
}

/// Projection amplitude `⟨0|E_s⁺E_i⁺|ψ⟩` for the normalized pure state.
pub fn coincidence_amplitude(state: &BiphotonPureState, setting: MeasurementSetting) -> Complex64 {
    let (ss, cs) = sin_cos_deg(setting.theta_s);
    let (si, ci) = sin_cos_deg(setting.theta_i);
    let hv = Complex64::new(ss * ci, 0.0);
    let vh = state.phase_factor() * (state.f * cs * si);
    (hv + vh) / (1.0 + state.f * state.f).sqrt()
}

pub fn coincidence_probability(state: &BiphotonPureState, setting: MeasurementSetting) -> f64 {
    coincidence_amplitude(state, setting).norm_sqr()
}

/// The expanded three-term rate written in sum/difference angles. It is
/// unnormalized: it equals `(1 + f²)` times the coincidence probability.
pub fn expanded_rate(f: f64, alpha_rad: f64, setting: MeasurementSetting) -> f64 {
    let plus = (setting.theta_s + setting.theta_i).to_radians().sin();
    let minus = (setting.theta_s - setting.theta_i).to_radians().sin();
    let f2 = f * f;
    let two_f_cos = 2.0 * f * alpha_rad.cos();
    (1.0 + f2 + two_f_cos) / 4.0 * plus * plus
        + (1.0 + f2 - two_f_cos) / 4.0 * minus * minus
        + (1.0 - f2) / 2.0 * plus * minus
}

/// Literal product-state rate `sin²(θi + 45°)·sin²(θs + 45°)`.
pub fn product_rate(setting: MeasurementSetting) -> f64 {
    let s = (setting.theta_s + 45.0).to_radians().sin();
    let i = (setting.theta_i + 45.0).to_radians().sin();
    s * s * i * i
}

/// Projection amplitude of the unnormalized product state.
pub fn product_amplitude(setting: MeasurementSetting) -> f64 {
    let (ss, cs) = sin_cos_deg(setting.theta_s);
    let (si, ci) = sin_cos_deg(setting.theta_i);
    (ss + cs) * (si + ci)
}

/// Separable source `(|H⟩ + |V⟩)s ⊗ (|H⟩ + |V⟩)i`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct ProductState;

impl ProductState {
    /// Squared norm of the unnormalized state vector.
    pub const NORM_SQR: f64 = 4.0;
}

impl CoincidenceModel for ProductState {
    // |amplitude|² / 4, which coincides with the literal product_rate value
    fn coincidence_probability(&self, setting: MeasurementSetting) -> f64 {
        let a = product_amplitude(setting);
        a * a / Self::NORM_SQR
    }
}

impl CoincidenceModel for BiphotonPureState {
    fn coincidence_probability(&self, setting: MeasurementSetting) -> f64 {
        coincidence_probability(self, setting)
    }
}

/// Either kind of source, as selected by configuration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SourceState {
    Entangled(BiphotonPureState),
    Product,
}

impl CoincidenceModel for SourceState {
    fn coincidence_probability(&self, setting: MeasurementSetting) -> f64 {
        match self {
            SourceState::Entangled(s) => s.coincidence_probability(setting),
            SourceState::Product => ProductState.coincidence_probability(setting),
        }
    }
}

impl From<BiphotonPureState> for SourceState {
    fn from(s: BiphotonPureState) -> Self {
        SourceState::Entangled(s)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn st(f: f64, alpha_deg: f64) -> BiphotonPureState {
        BiphotonPureState::from_degrees(f, alpha_deg).unwrap()
    }

    /// Independent route: explicit 2×2 amplitude matrix contracted with the
    /// two polarizer vectors, using plain trig in radians.
    fn oracle_probability(f: f64, alpha: f64, ts: f64, ti: f64) -> f64 {
        let n = (1.0 + f * f).sqrt();
        // psi[s][i], index 0 = H, 1 = V
        let psi = [
            [Complex64::new(0.0, 0.0), Complex64::new(1.0 / n, 0.0)],
            [Complex64::from_polar(f / n, alpha), Complex64::new(0.0, 0.0)],
        ];
        let es = [ts.to_radians().sin(), ts.to_radians().cos()];
        let ei = [ti.to_radians().sin(), ti.to_radians().cos()];
        let mut a = Complex64::new(0.0, 0.0);
        for s in 0..2 {
            for i in 0..2 {
                a += psi[s][i] * es[s] * ei[i];
            }
        }
        a.norm_sqr()
    }

    #[test]
    fn state_validation() {
        assert!(BiphotonPureState::new(-0.1, 0.0).is_err());
        assert!(BiphotonPureState::new(f64::NAN, 0.0).is_err());
        assert!(BiphotonPureState::new(f64::INFINITY, 0.0).is_err());
        assert!(BiphotonPureState::new(1.0, f64::NAN).is_err());
        let s = BiphotonPureState::new(0.0, -0.5).unwrap();
        assert!(s.alpha() >= 0.0 && s.alpha() < TAU);
        let s = BiphotonPureState::from_degrees(1.0, 540.0).unwrap();
        assert_eq!(s.alpha(), std::f64::consts::PI);
        let (hv, vh) = st(1.73, 0.0).weights();
        assert_abs_diff_eq!(hv + vh, 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(vh / hv, 1.73 * 1.73, epsilon = 1e-12);
    }

    #[test]
    fn amplitude_examples() {
        let a = coincidence_amplitude(&st(1.0, 0.0), MeasurementSetting::new(0.0, 0.0));
        assert_eq!(a.norm(), 0.0);
        let a = coincidence_amplitude(&st(1.0, 0.0), MeasurementSetting::new(0.0, 90.0));
        assert_abs_diff_eq!(a.re, std::f64::consts::FRAC_1_SQRT_2, epsilon = 1e-15);
        // numpy oracle: 0.6831065263076868
        let a = coincidence_amplitude(&st(1.73, 0.0), MeasurementSetting::new(45.0, 45.0));
        assert_abs_diff_eq!(a.re, 0.683_106_526_307_686_8, epsilon = 1e-12);
        assert_abs_diff_eq!(a.im, 0.0, epsilon = 1e-15);
    }

    #[test]
    fn probability_examples() {
        let p = coincidence_probability(&st(1.0, 0.0), MeasurementSetting::new(0.0, 90.0));
        assert_abs_diff_eq!(p, 0.5, epsilon = 1e-15);
        let p = coincidence_probability(&st(1.73, 0.0), MeasurementSetting::new(45.0, 135.0));
        assert_abs_diff_eq!(p, 0.033_365_473_715_845_67, epsilon = 1e-12);
    }

    #[test]
    fn expanded_rate_examples() {
        let set = MeasurementSetting::new(30.0, 60.0);
        assert_abs_diff_eq!(expanded_rate(1.0, 0.0, set), 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(
            expanded_rate(1.0, std::f64::consts::PI, set),
            0.25,
            epsilon = 1e-15
        );
        // (0.5 + 0.865)² = 1.863225
        let r = expanded_rate(1.73, 0.0, MeasurementSetting::new(45.0, 45.0));
        assert_abs_diff_eq!(r, 1.863_225, epsilon = 1e-12);
    }

    #[test]
    fn product_rate_examples() {
        assert_abs_diff_eq!(product_rate(MeasurementSetting::new(45.0, 45.0)), 1.0, epsilon = 1e-15);
        for ti in [0.0, 17.0, 45.0, 133.0] {
            assert_abs_diff_eq!(
                product_rate(MeasurementSetting::new(135.0, ti)),
                0.0,
                epsilon = 1e-15
            );
        }
        assert_abs_diff_eq!(product_rate(MeasurementSetting::new(0.0, 0.0)), 0.25, epsilon = 1e-15);
    }

    #[test]
    fn product_probability_matches_literal_rate() {
        for ts in (0..180).step_by(7) {
            for ti in (0..180).step_by(11) {
                let set = MeasurementSetting::new(ts as f64, ti as f64);
                assert_abs_diff_eq!(
                    ProductState.coincidence_probability(set),
                    product_rate(set),
                    epsilon = 1e-14
                );
                assert_abs_diff_eq!(
                    ProductState.joint_outcome_distribution(set).total(),
                    1.0,
                    epsilon = 1e-14
                );
            }
        }
    }

    #[test]
    fn joint_distribution_examples() {
        let j = st(1.0, 0.0).joint_outcome_distribution(MeasurementSetting::new(0.0, 0.0));
        for (got, want) in j.as_array().iter().zip([0.0, 0.5, 0.5, 0.0]) {
            assert_abs_diff_eq!(*got, want, epsilon = 1e-15);
        }
        let j = st(1.0, 0.0).joint_outcome_distribution(MeasurementSetting::new(45.0, 45.0));
        for (got, want) in j.as_array().iter().zip([0.5, 0.0, 0.0, 0.5]) {
            assert_abs_diff_eq!(*got, want, epsilon = 1e-15);
        }
        let j = st(1.73, 0.0).joint_outcome_distribution(MeasurementSetting::new(45.0, 45.0));
        let want = [
            0.466_634_526_284_154_36,
            0.033_365_473_715_845_67,
            0.033_365_473_715_845_58,
            0.466_634_526_284_154_36,
        ];
        for (got, want) in j.as_array().iter().zip(want) {
            assert_abs_diff_eq!(*got, want, epsilon = 1e-12);
        }
    }

    #[test]
    fn correlation_examples() {
        assert_abs_diff_eq!(
            st(1.0, 0.0).correlation(MeasurementSetting::new(0.0, 0.0)),
            -1.0,
            epsilon = 1e-15
        );
        let f = 1.73;
        assert_abs_diff_eq!(
            st(f, 0.0).correlation(MeasurementSetting::new(45.0, 45.0)),
            2.0 * f / (1.0 + f * f),
            epsilon = 1e-12
        );
        for ts in (0..180).step_by(5) {
            for ti in (0..180).step_by(5) {
                let (ts, ti) = (ts as f64, ti as f64);
                let e = st(1.0, 0.0).correlation(MeasurementSetting::new(ts, ti));
                assert_abs_diff_eq!(e, -(2.0 * (ts + ti)).to_radians().cos(), epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn bell_reductions_on_grid() {
        for ts in (0..360).step_by(3) {
            for ti in (0..360).step_by(3) {
                let (ts, ti) = (ts as f64 * 0.5, ti as f64 * 0.5);
                let set = MeasurementSetting::new(ts, ti);
                let plus = (ts + ti).to_radians().sin();
                let minus = (ts - ti).to_radians().sin();
                assert_abs_diff_eq!(
                    coincidence_probability(&st(1.0, 0.0), set),
                    plus * plus / 2.0,
                    epsilon = 1e-12
                );
                assert_abs_diff_eq!(
                    coincidence_probability(&st(1.0, 180.0), set),
                    minus * minus / 2.0,
                    epsilon = 1e-12
                );
            }
        }
    }

    #[test]
    fn setting_wraps_into_half_turn() {
        let s = MeasurementSetting::new(-10.0, 370.0);
        assert_abs_diff_eq!(s.theta_s(), 170.0, epsilon = 1e-12);
        assert_abs_diff_eq!(s.theta_i(), 10.0, epsilon = 1e-12);
        assert_eq!(MeasurementSetting::new(-1e-18, 180.0).theta_i(), 0.0);
        assert!(MeasurementSetting::new(-1e-18, 0.0).theta_s() < 180.0);
    }

    proptest! {
        #[test]
        fn matches_state_vector_oracle(f in 0.0..4.0f64, a in 0.0..TAU, ts in -360.0..360.0f64, ti in -360.0..360.0f64) {
            let s = BiphotonPureState::new(f, a).unwrap();
            let p = coincidence_probability(&s, MeasurementSetting::new(ts, ti));
            prop_assert!((p - oracle_probability(f, a, ts, ti)).abs() < 1e-12);
            prop_assert!((-1e-15..=1.0 + 1e-12).contains(&p));
        }

        #[test]
        fn expanded_rate_equivalence(f in 0.0..4.0f64, a in 0.0..TAU, ts in 0.0..180.0f64, ti in 0.0..180.0f64) {
            let s = BiphotonPureState::new(f, a).unwrap();
            let set = MeasurementSetting::new(ts, ti);
            let lhs = expanded_rate(f, s.alpha(), set);
            let rhs = (1.0 + f * f) * coincidence_probability(&s, set);
            prop_assert!((lhs - rhs).abs() < 1e-12);
        }

        #[test]
        fn normalization_and_periodicity(f in 0.0..4.0f64, a in 0.0..TAU, ts in 0.0..180.0f64, ti in 0.0..180.0f64) {
            let s = BiphotonPureState::new(f, a).unwrap();
            let set = MeasurementSetting::new(ts, ti);
            prop_assert!((s.joint_outcome_distribution(set).total() - 1.0).abs() < 1e-12);
            let p = coincidence_probability(&s, set);
            let shifted_s = coincidence_probability(&s, MeasurementSetting::new(ts + 180.0, ti));
            let shifted_i = coincidence_probability(&s, MeasurementSetting::new(ts, ti + 180.0));
            prop_assert!((p - shifted_s).abs() < 1e-12);
            prop_assert!((p - shifted_i).abs() < 1e-12);
        }

        #[test]
        fn label_swap_symmetry(f in 0.01..4.0f64, a in 0.0..TAU, ts in 0.0..180.0f64, ti in 0.0..180.0f64) {
            let s = BiphotonPureState::new(f, a).unwrap();
            let swapped = s.label_swapped().unwrap();
            let p = coincidence_probability(&s, MeasurementSetting::new(ts, ti));
            let q = coincidence_probability(&swapped, MeasurementSetting::new(90.0 - ts, 90.0 - ti));
            prop_assert!((p - q).abs() < 1e-12);
        }

        #[test]
        fn arm_swap_symmetry(f in 0.01..4.0f64, a in 0.0..TAU, ts in 0.0..180.0f64, ti in 0.0..180.0f64) {
            let s = BiphotonPureState::new(f, a).unwrap();
            let swapped = s.arm_swapped().unwrap();
            let p = coincidence_probability(&s, MeasurementSetting::new(ts, ti));
            let q = coincidence_probability(&swapped, MeasurementSetting::new(ti, ts));
            prop_assert!((p - q).abs() < 1e-12);
            prop_assert!(swapped.alpha() >= 0.0 && swapped.alpha() < TAU);
        }
    }
}
