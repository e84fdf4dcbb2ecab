//! Back-to-back source calibration and channel estimation from symbol/outcome moments.
//!
//! All electronic noise values `t` here are referred to one heterodyne output quadrature,
//! which is [`DetectorParams::t_het`].

use crate::error::{Error, Result};
use crate::finite_size::{excess_noise_estimator_variance, transmittance_estimator_variance};
use crate::frame::SampleFrame;
use crate::moments::Moments;
use crate::protocol::{ChannelParams, DetectorParams, ProtocolParams, SourceParams};

/// Tolerance for calling a slightly negative anti-squeezing noise estimate zero.
const DELTA_V_TOLERANCE: f64 = 1e-12;

/// Heterodyne-output variances of the source measured without a channel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct B2BMeasurement {
    pub v_x_b2b: f64,
    pub v_p_b2b: f64,
    pub t: f64,
    pub tau: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SourceCalibration {
    pub v_sqz_pure: f64,
    pub delta_v_an: f64,
}

impl SourceCalibration {
    /// Calibration of an unsqueezed (coherent) source.
    pub fn vacuum() -> Self {
        SourceCalibration {
            v_sqz_pure: 1.0,
            delta_v_an: 0.0,
        }
    }

    /// Calibration that matches a source exactly.
    pub fn exact(source: &SourceParams) -> Self {
        SourceCalibration {
            v_sqz_pure: source.effective_v_sqz(),
            delta_v_an: source.effective_delta_v(),
        }
    }
}

/// Variances the back-to-back measurement would show for a calibrated source.
pub fn b2b_forward(cal: &SourceCalibration, t: f64, tau: f64) -> B2BMeasurement {
    let h = 0.5 * tau;
    let v_anti = 1.0 + h * (1.0 / cal.v_sqz_pure - 1.0);
    B2BMeasurement {
        v_x_b2b: 1.0 - h * (1.0 - cal.v_sqz_pure) + t,
        v_p_b2b: v_anti + h * cal.delta_v_an + t,
        t,
        tau,
    }
}

/// Recovers the pure squeezing and the anti-squeezing noise from a B2B measurement.
pub fn b2b_calibrate(m: &B2BMeasurement) -> Result<SourceCalibration> {
    let cal_err = |msg: String| Err(Error::Calibration(msg));
    if !(m.tau > 0.0 && m.tau <= 1.0) {
        return cal_err(format!("tau must lie in (0,1], got {}", m.tau));
    }
    if !(m.t >= 0.0) {
        return cal_err(format!(
            "electronic noise t must be non-negative, got {}",
            m.t
        ));
    }
    if !(m.v_x_b2b > m.t) {
        return cal_err(format!(
            "squeezed variance {} does not exceed electronic noise {}",
            m.v_x_b2b, m.t
        ));
    }
    let h = 0.5 * m.tau;
    let v_pure = 1.0 - (1.0 - (m.v_x_b2b - m.t)) / h;
    if !(v_pure > 0.0) {
        return cal_err(format!(
            "measured squeezing is deeper than tau = {} allows (pure variance {v_pure})",
            m.tau
        ));
    }
    if v_pure > 1.0 + 1e-12 {
        return cal_err(format!(
            "source shows no squeezing (pure variance {v_pure})"
        ));
    }
    let v_pure = v_pure.min(1.0);
    let v_anti = 1.0 + h * (1.0 / v_pure - 1.0);
    let dv = (m.v_p_b2b - v_anti - m.t) / h;
    if dv < -DELTA_V_TOLERANCE {
        return cal_err(format!("negative anti-squeezing noise {dv}"));
    }
    Ok(SourceCalibration {
        v_sqz_pure: v_pure,
        delta_v_an: dv.max(0.0),
    })
}

/// Squeezed and anti-squeezed noise floors at the receiver after loss η and efficiency τ.
pub fn receiver_noise_floor(cal: &SourceCalibration, eta: f64, tau: f64) -> (f64, f64) {
    let k = 0.5 * tau * eta;
    (
        1.0 - k * (1.0 - cal.v_sqz_pure),
        1.0 + k * (1.0 / cal.v_sqz_pure - 1.0),
    )
}

/// Output-referred excess noise of a coherent-state link, `u = V_B − C² − t − 1`.
///
/// `c2` is the signal contribution to Bob's variance, `Ĉ²/V̂_M`.
pub fn coherent_excess_noise(v_b: f64, c2: f64, t: f64) -> f64 {
    v_b - c2 - t - 1.0
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChannelEstimate {
    pub n: u64,
    pub eta: f64,
    /// Excess noise after detection, not clipped.
    pub u_x: f64,
    pub u_p: f64,
    /// Input-referred excess noise `2u/(ητ)`, not clipped.
    pub eps_x: f64,
    pub eps_p: f64,
    pub sigma_eta: f64,
    pub sigma_eps_x: f64,
    pub sigma_eps_p: f64,
    /// Estimated modulation variance and Alice-Bob covariance.
    pub v_mod: f64,
    pub c_ab: f64,
}

impl ChannelEstimate {
    /// Excess noise for display: negative fluctuations shown as zero, with a flag.
    pub fn reported_eps(&self) -> ((f64, bool), (f64, bool)) {
        let clip = |e: f64| (e.max(0.0), e < 0.0);
        (clip(self.eps_x), clip(self.eps_p))
    }

    /// Physical channel for asymptotic evaluation (noise and η clipped to valid ranges).
    pub fn clipped_channel(&self) -> Result<ChannelParams> {
        ChannelParams::new(self.eta.min(1.0), self.eps_x.max(0.0), self.eps_p.max(0.0))
    }
}

/// Estimates η and the excess noise from the moments of a phase-corrected frame.
pub fn estimate_channel_from_moments(
    m: &Moments,
    cal: &SourceCalibration,
    det: &DetectorParams,
    v_mod: f64,
) -> Result<ChannelEstimate> {
    det.validate()?;
    if m.count() < 1000 {
        return Err(Error::Estimation(format!(
            "need at least 1000 symbols, have {}",
            m.count()
        )));
    }
    let cov = m.covariance()?;
    let vm_hat = 0.5 * (cov[(0, 0)] + cov[(1, 1)]);
    if !(v_mod > 0.0) || (vm_hat - v_mod).abs() > 0.2 * v_mod {
        return Err(Error::Estimation(format!(
            "Alice's empirical variance {vm_hat} is not within 20% of V_M = {v_mod}"
        )));
    }
    let c = 0.5 * (cov[(0, 2)] + cov[(1, 3)]);
    let tau = det.tau;
    let eta = 2.0 * c * c / (tau * vm_hat * vm_hat);
    if !(eta > 0.0) || !eta.is_finite() {
        return Err(Error::Estimation(format!(
            "non-positive transmittance estimate {eta}"
        )));
    }
    let t = det.t_het();
    let (floor_x, floor_p) = receiver_noise_floor(cal, eta, tau);
    let signal = c * c / vm_hat;
    let u_x = cov[(2, 2)] - signal - floor_x - t;
    let u_p = cov[(3, 3)] - signal - floor_p - 0.5 * tau * eta * cal.delta_v_an - t;
    let eps_x = 2.0 * u_x / (eta * tau);
    let eps_p = 2.0 * u_p / (eta * tau);

    let n = m.count() as f64;
    let model = ProtocolParams::new(
        SourceParams::squeezed(cal.v_sqz_pure, cal.delta_v_an, vm_hat)?,
        ChannelParams::new(eta.min(1.0), eps_x.max(0.0), eps_p.max(0.0))?,
        *det,
    )?;
    let s_eta = transmittance_estimator_variance(&model, n)?.sqrt();
    let (s_x, s_p) = excess_noise_estimator_variance(&model, n)?;
    Ok(ChannelEstimate {
        n: m.count(),
        eta,
        u_x,
        u_p,
        eps_x,
        eps_p,
        sigma_eta: s_eta,
        sigma_eps_x: s_x.sqrt(),
        sigma_eps_p: s_p.sqrt(),
        v_mod: vm_hat,
        c_ab: c,
    })
}

/// Estimates the channel from a frame whose Bob quadratures are already aligned.
pub fn estimate_channel(
    frame: &SampleFrame,
    cal: &SourceCalibration,
    det: &DetectorParams,
    v_mod: f64,
) -> Result<ChannelEstimate> {
    estimate_channel_from_moments(&frame.moments()?, cal, det, v_mod)
}
