//! Entanglement-based models of the squeezed-state and coherent-state protocols,
//! the untrusted channel, the trusted detector, and the asymptotic key rate.
//!
//! Squeezed-protocol mode layout: `A = 0`, transmitted mode `B = 1`, Alice's
//! auxiliary squeezer `C = 2`, and the anti-squeezing noise ancilla `N = 3`.
//! The detector appends two ancilla modes and heterodyne detection one more.

use nalgebra::{Matrix2, Matrix4};

use crate::error::{invalid, Error, Result};
use crate::gaussian::{CovMat, Quadrature, Symplectic};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ProtocolKind {
    Squeezed,
    Coherent,
}

impl ProtocolKind {
    /// Quadratures per symbol that carry key.
    pub fn key_quadratures(self) -> u32 {
        match self {
            ProtocolKind::Squeezed => 1,
            ProtocolKind::Coherent => 2,
        }
    }
}

impl std::fmt::Display for ProtocolKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ProtocolKind::Squeezed => "squeezed",
            ProtocolKind::Coherent => "coherent",
        })
    }
}

/// Preparation-side parameters, all in SNU.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SourceParams {
    pub protocol: ProtocolKind,
    /// Variance of the squeezed (x) quadrature.
    pub v_sqz: f64,
    /// Trusted excess preparation noise on the anti-squeezed (p) quadrature.
    pub delta_v_an: f64,
    /// Gaussian modulation variance, the same in both quadratures.
    pub v_mod: f64,
}

impl SourceParams {
    pub fn squeezed(v_sqz: f64, delta_v_an: f64, v_mod: f64) -> Result<Self> {
        let s = SourceParams {
            protocol: ProtocolKind::Squeezed,
            v_sqz,
            delta_v_an,
            v_mod,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn coherent(v_mod: f64) -> Result<Self> {
        let s = SourceParams {
            protocol: ProtocolKind::Coherent,
            v_sqz: 1.0,
            delta_v_an: 0.0,
            v_mod,
        };
        s.validate()?;
        Ok(s)
    }

    /// Squeezed-quadrature variance actually used; coherent sources are pinned to vacuum.
    pub fn effective_v_sqz(&self) -> f64 {
        match self.protocol {
            ProtocolKind::Squeezed => self.v_sqz,
            ProtocolKind::Coherent => 1.0,
        }
    }

    pub fn effective_delta_v(&self) -> f64 {
        match self.protocol {
            ProtocolKind::Squeezed => self.delta_v_an,
            ProtocolKind::Coherent => 0.0,
        }
    }

    /// Variance of the p quadrature of the unmodulated state, `1/V_sqz + ΔV_AN`.
    pub fn anti_squeezed_variance(&self) -> f64 {
        1.0 / self.effective_v_sqz() + self.effective_delta_v()
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.v_sqz > 0.0) || !self.v_sqz.is_finite() {
            return Err(invalid(format!(
                "source.v_sqz must be positive, got {}",
                self.v_sqz
            )));
        }
        if !(self.delta_v_an >= 0.0) || !self.delta_v_an.is_finite() {
            return Err(invalid(format!(
                "source.delta_v_an must be non-negative, got {}",
                self.delta_v_an
            )));
        }
        if !(self.v_mod >= 0.0) || !self.v_mod.is_finite() {
            return Err(invalid(format!(
                "source.v_mod must be non-negative, got {}",
                self.v_mod
            )));
        }
        Ok(())
    }
}

/// Untrusted channel. Excess noise is referred to the channel input.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChannelParams {
    pub eta: f64,
    pub eps_x: f64,
    pub eps_p: f64,
}

impl ChannelParams {
    pub fn new(eta: f64, eps_x: f64, eps_p: f64) -> Result<Self> {
        let c = ChannelParams { eta, eps_x, eps_p };
        c.validate()?;
        Ok(c)
    }

    /// The conservative single value used for key rates.
    pub fn symmetrized_eps(&self) -> f64 {
        self.eps_x.max(self.eps_p)
    }

    pub fn symmetrized(&self) -> Self {
        let e = self.symmetrized_eps();
        ChannelParams {
            eta: self.eta,
            eps_x: e,
            eps_p: e,
        }
    }

    /// Builds a channel from excess noise measured after detection, `ε = 2u/(ητ)`.
    pub fn from_detected_noise(eta: f64, u_x: f64, u_p: f64, tau: f64) -> Result<Self> {
        if !(eta > 0.0) || !(tau > 0.0) {
            return Err(invalid(
                "eta and tau must be positive to refer noise to the input",
            ));
        }
        Self::new(eta, 2.0 * u_x / (eta * tau), 2.0 * u_p / (eta * tau))
    }

    /// Builds a channel from excess noise referred to the channel output, `ε = u_out/η`.
    pub fn from_output_noise(eta: f64, u_out_x: f64, u_out_p: f64) -> Result<Self> {
        if !(eta > 0.0) {
            return Err(invalid("eta must be positive to refer noise to the input"));
        }
        Self::new(eta, u_out_x / eta, u_out_p / eta)
    }

    /// Noise after detection corresponding to this channel, `u = ητε/2`.
    pub fn detected_noise(&self, tau: f64) -> (f64, f64) {
        let k = 0.5 * self.eta * tau;
        (k * self.eps_x, k * self.eps_p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.eta > 0.0 && self.eta <= 1.0) {
            return Err(invalid(format!(
                "channel.eta must lie in (0,1], got {}",
                self.eta
            )));
        }
        for (name, e) in [("channel.eps_x", self.eps_x), ("channel.eps_p", self.eps_p)] {
            if !(e >= 0.0) || !e.is_finite() {
                return Err(invalid(format!("{name} must be non-negative, got {e}")));
            }
        }
        Ok(())
    }
}

/// Trusted detector: efficiency `tau` and a thermal ancilla of variance `v_d`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetectorParams {
    pub tau: f64,
    pub v_d: f64,
}

impl DetectorParams {
    pub fn new(tau: f64, v_d: f64) -> Result<Self> {
        let d = DetectorParams { tau, v_d };
        d.validate()?;
        Ok(d)
    }

    /// Electronic noise of one homodyne channel before the heterodyne split, `(1−τ)(V_D−1)`.
    pub fn t(&self) -> f64 {
        (1.0 - self.tau) * (self.v_d - 1.0)
    }

    /// Electronic noise in each heterodyne output quadrature, `t/2`.
    pub fn t_het(&self) -> f64 {
        0.5 * self.t()
    }

    /// Detector whose heterodyne-output electronic noise equals `t_het`.
    pub fn from_output_noise(tau: f64, t_het: f64) -> Result<Self> {
        if !(tau > 0.0 && tau < 1.0) {
            if tau == 1.0 && t_het == 0.0 {
                return Self::new(1.0, 1.0);
            }
            return Err(invalid(format!(
                "electronic noise needs tau in (0,1), got tau = {tau}"
            )));
        }
        Self::new(tau, 1.0 + 2.0 * t_het / (1.0 - tau))
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.tau > 0.0 && self.tau <= 1.0) {
            return Err(invalid(format!(
                "detector.tau must lie in (0,1], got {}",
                self.tau
            )));
        }
        if !(self.v_d >= 1.0) || !self.v_d.is_finite() {
            return Err(invalid(format!(
                "detector.v_d must be >= 1, got {}",
                self.v_d
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProtocolParams {
    pub source: SourceParams,
    pub channel: ChannelParams,
    pub detector: DetectorParams,
}

impl ProtocolParams {
    pub fn new(
        source: SourceParams,
        channel: ChannelParams,
        detector: DetectorParams,
    ) -> Result<Self> {
        let p = ProtocolParams {
            source,
            channel,
            detector,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn protocol(&self) -> ProtocolKind {
        self.source.protocol
    }

    pub fn validate(&self) -> Result<()> {
        self.source.validate()?;
        self.channel.validate()?;
        self.detector.validate()
    }

    pub fn with_channel(&self, channel: ChannelParams) -> Self {
        ProtocolParams { channel, ..*self }
    }

    /// Same parameters with `ε_x = ε_p = max(ε_x, ε_p)`.
    pub fn symmetrized(&self) -> Self {
        self.with_channel(self.channel.symmetrized())
    }
}

/// How excess noise enters key-rate evaluations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum EpsilonMode {
    /// Both quadratures take the larger of the two values.
    #[default]
    Symmetrized,
    /// Each quadrature keeps its own value (diagnostics only).
    PerQuadrature,
}

impl EpsilonMode {
    pub fn apply(self, p: &ProtocolParams) -> ProtocolParams {
        match self {
            EpsilonMode::Symmetrized => p.symmetrized(),
            EpsilonMode::PerQuadrature => *p,
        }
    }
}

/// Squeezer variances `(V₁, V₂, V₃)` of the three-squeezer purification.
pub fn three_squeezer_variances(v_s: f64, v_m: f64) -> Result<(f64, f64, f64)> {
    if !(v_m > 0.0) {
        return Err(Error::DegenerateModulation(format!(
            "three-squeezer purification needs V_M > 0, got {v_m}"
        )));
    }
    if !(v_s > 0.0) {
        return Err(invalid(format!("V_sqz must be positive, got {v_s}")));
    }
    let s = v_s + v_m;
    let r = (s * (v_m + v_s * v_m * s) / (1.0 + v_s * v_m)).sqrt();
    let v3 = v_s * v_s * v_m * s / (v_m * (1.0 + v_s * v_m));
    Ok((s + r, s - r, v3))
}

/// Four-mode purification `(A, B, C, N)` of the squeezed-state ensemble.
pub fn build_squeezed_eb_state(source: &SourceParams) -> Result<CovMat> {
    source.validate()?;
    if source.protocol != ProtocolKind::Squeezed {
        return Err(invalid("build_squeezed_eb_state needs a squeezed source"));
    }
    let (v1, v2, v3) = three_squeezer_variances(source.v_sqz, source.v_mod)?;
    let n = 4;
    let mut g = crate::gaussian::vacuum_state(n)?;
    for (mode, v) in [(0, v1), (1, v2), (2, v3)] {
        g = g.apply(&Symplectic::squeezer(n, mode, v)?)?;
    }
    g = g.apply(&Symplectic::beamsplitter(n, 0, 1, 0.5)?)?;
    g.apply(&Symplectic::controlled_z(
        n,
        1,
        3,
        source.delta_v_an.sqrt(),
    )?)
}

/// Alice's measurement on the squeezed purification: returns the conditional state of `(B, N)`.
///
/// Her outcomes are in one-to-one correspondence with the prepare-and-measure displacements.
pub fn condition_alice_squeezed(eb: &CovMat) -> Result<CovMat> {
    if eb.n_modes() != 4 {
        return Err(invalid("expected the four-mode squeezed purification"));
    }
    let g = eb.apply(&Symplectic::beamsplitter(4, 0, 2, 0.5)?)?;
    // After removing A, mode C sits at index 1.
    g.condition_homodyne(0, Quadrature::X)?
        .condition_homodyne(1, Quadrature::P)
}

/// Two-mode squeezed vacuum with arm variance `V_M + 1`.
pub fn build_coherent_eb_state(v_mod: f64) -> Result<CovMat> {
    if !(v_mod >= 0.0) || !v_mod.is_finite() {
        return Err(invalid(format!("v_mod must be non-negative, got {v_mod}")));
    }
    CovMat::two_mode_squeezed(v_mod + 1.0)
}

/// Lossy, noisy channel on `mode`: `V → ηV + (1−η) + ηε` per quadrature.
pub fn apply_channel(gamma: &CovMat, mode: usize, ch: &ChannelParams) -> Result<CovMat> {
    ch.validate()?;
    let e = ch.eta;
    let x = Matrix2::from_diagonal_element(e.sqrt());
    let y = Matrix2::new(1.0 - e + e * ch.eps_x, 0.0, 0.0, 1.0 - e + e * ch.eps_p);
    gamma.apply_mode_channel(mode, &x, &y)
}

/// Mixes `mode` with one arm of a TMSV(V_D) on a beamsplitter of transmittance τ.
///
/// Both ancilla modes are appended (in that order) and kept, so their noise stays trusted.
pub fn apply_detector(gamma: &CovMat, mode: usize, det: &DetectorParams) -> Result<CovMat> {
    det.validate()?;
    if mode >= gamma.n_modes() {
        return Err(invalid(format!("mode {mode} out of range")));
    }
    let n = gamma.n_modes();
    let g = gamma.append(&CovMat::two_mode_squeezed(det.v_d)?);
    g.apply(&Symplectic::beamsplitter(n + 2, mode, n, det.tau)?)
}

/// Covariance of `(a_x, a_p, X, P)`: Alice's displacements and Bob's heterodyne outcomes.
pub fn pm_covariance(p: &ProtocolParams) -> Result<Matrix4<f64>> {
    p.validate()?;
    let k = 0.5 * p.detector.tau * p.channel.eta;
    let vm = p.source.v_mod;
    let th = p.detector.t_het();
    let vx = 1.0 + k * (vm + p.source.effective_v_sqz() + p.channel.eps_x - 1.0) + th;
    let vp = 1.0 + k * (vm + p.source.anti_squeezed_variance() + p.channel.eps_p - 1.0) + th;
    let c = k.sqrt() * vm;
    #[rustfmt::skip]
    let m = Matrix4::new(
        vm,  0.0, c,   0.0,
        0.0, vm,  0.0, c,
        c,   0.0, vx,  0.0,
        0.0, c,   0.0, vp,
    );
    Ok(m)
}

/// Mutual information between Alice and Bob in bits per symbol.
///
/// The squeezed protocol uses the x quadrature only; the coherent protocol both.
pub fn mutual_information(p: &ProtocolParams) -> Result<f64> {
    p.validate()?;
    let k = 0.5 * p.detector.tau * p.channel.eta;
    let signal = k * p.source.v_mod;
    let th = p.detector.t_het();
    let quad = |noise_in: f64| 0.5 * (1.0 + signal / (1.0 + k * noise_in + th)).log2();
    Ok(match p.protocol() {
        ProtocolKind::Squeezed => quad(p.source.v_sqz - 1.0 + p.channel.eps_x),
        ProtocolKind::Coherent => quad(p.channel.eps_x) + quad(p.channel.eps_p),
    })
}

/// Mutual information per key quadrature.
pub fn mutual_information_per_quadrature(p: &ProtocolParams) -> Result<f64> {
    Ok(mutual_information(p)? / f64::from(p.protocol().key_quadratures()))
}

/// Full trusted-side state of the squeezed protocol after heterodyne detection.
///
/// Mode order: `A, B(x port), C, N, F, G, H(p port)`.
pub fn squeezed_detected_state(p: &ProtocolParams) -> Result<CovMat> {
    let g = build_squeezed_eb_state(&p.source)?;
    let g = apply_channel(&g, 1, &p.channel)?;
    let g = apply_detector(&g, 1, &p.detector)?.append_vacuum(1);
    g.apply(&Symplectic::beamsplitter(7, 1, 6, 0.5)?)
}

fn squeezed_holevo(p: &ProtocolParams) -> Result<f64> {
    let g = squeezed_detected_state(p)?;
    let given_p = g.condition_homodyne(6, Quadrature::P)?;
    let given_xp = given_p.condition_homodyne(1, Quadrature::X)?;
    Ok(given_p.entropy()? - given_xp.entropy()?)
}

fn coherent_holevo(p: &ProtocolParams) -> Result<f64> {
    let g = build_coherent_eb_state(p.source.v_mod)?;
    let g = apply_channel(&g, 1, &p.channel)?;
    let s_ab = g.entropy()?;
    let g = apply_detector(&g, 1, &p.detector)?;
    let s_cond = g.condition_heterodyne(1)?.entropy()?;
    Ok(s_ab - s_cond)
}

/// Holevo bound on Eve's information about Bob's key quadrature(s), bits per symbol.
pub fn holevo_bound(p: &ProtocolParams) -> Result<f64> {
    p.validate()?;
    let chi = match p.protocol() {
        ProtocolKind::Squeezed => squeezed_holevo(p)?,
        ProtocolKind::Coherent => coherent_holevo(p)?,
    };
    if chi < -1e-9 {
        return Err(Error::InvalidState(format!("negative Holevo bound {chi}")));
    }
    Ok(chi.max(0.0))
}

/// `max{0, β I − χ}` with symmetrized excess noise.
pub fn asymptotic_key_rate(p: &ProtocolParams, beta: f64) -> Result<f64> {
    asymptotic_key_rate_with(p, beta, EpsilonMode::Symmetrized)
}

pub fn asymptotic_key_rate_with(p: &ProtocolParams, beta: f64, mode: EpsilonMode) -> Result<f64> {
    if !(0.0..=1.0).contains(&beta) {
        return Err(invalid(format!("beta must lie in [0,1], got {beta}")));
    }
    let q = mode.apply(p);
    Ok((beta * mutual_information(&q)? - holevo_bound(&q)?).max(0.0))
}
