//! Estimator variances, worst-case channel bounds, the AEP penalty, and
//! finite-size and operational key rates.

use crate::error::{invalid, Error, Result};
use crate::protocol::{
    holevo_bound, mutual_information, ChannelParams, ProtocolKind, ProtocolParams,
};

/// Floor applied to the worst-case transmittance so downstream models stay defined.
pub const ETA_FLOOR: f64 = 1e-12;

/// Sample size and confidence multiplier for parameter estimation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EstimatorBudget {
    pub n: f64,
    pub z: f64,
    /// Failure probability the multiplier `z` stands for. Kept for reporting.
    pub eps_pe: f64,
}

impl Default for EstimatorBudget {
    fn default() -> Self {
        EstimatorBudget {
            n: 1e8,
            z: 6.5,
            eps_pe: 1e-10,
        }
    }
}

impl EstimatorBudget {
    pub fn with_n(n: f64) -> Self {
        EstimatorBudget {
            n,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.n >= 1.0) {
            return Err(invalid(format!(
                "estimation.n must be >= 1, got {}",
                self.n
            )));
        }
        if !(self.z >= 0.0) || !self.z.is_finite() {
            return Err(invalid(format!(
                "estimation.z must be non-negative, got {}",
                self.z
            )));
        }
        Ok(())
    }
}

/// Constants of the AEP correction term.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PenaltyConfig {
    /// Discretization bits per quadrature sample.
    pub d: u32,
    pub eps_smooth: f64,
}

impl Default for PenaltyConfig {
    fn default() -> Self {
        PenaltyConfig {
            d: 5,
            eps_smooth: 1e-10,
        }
    }
}

impl PenaltyConfig {
    pub fn validate(&self) -> Result<()> {
        if self.d == 0 {
            return Err(invalid("penalty.d must be >= 1"));
        }
        if !(self.eps_smooth > 0.0 && self.eps_smooth < 1.0) {
            return Err(invalid(format!(
                "penalty.eps_smooth must lie in (0,1), got {}",
                self.eps_smooth
            )));
        }
        Ok(())
    }
}

/// Error-correcting code after puncturing.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReconciliationConfig {
    pub n_code: u64,
    pub k: u64,
    pub p: u64,
    pub fer: f64,
    /// Decoder iterations; bookkeeping only.
    pub iterations: u32,
    /// Measured mutual information per key quadrature. When absent the model value
    /// at the worst-case parameters is used to define β.
    pub measured_mi: Option<f64>,
}

impl ReconciliationConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_code == 0 || self.k == 0 {
            return Err(invalid(
                "reconciliation.n_code and reconciliation.k must be positive",
            ));
        }
        if self.p >= self.n_code {
            return Err(invalid(format!(
                "reconciliation.p = {} must be below n_code = {}",
                self.p, self.n_code
            )));
        }
        if self.k > self.n_code - self.p {
            return Err(invalid(format!(
                "reconciliation.k = {} exceeds n_code - p = {}",
                self.k,
                self.n_code - self.p
            )));
        }
        check_fer(self.fer)?;
        if let Some(mi) = self.measured_mi {
            if !(mi > 0.0) {
                return Err(invalid(format!(
                    "reconciliation.mi must be positive, got {mi}"
                )));
            }
        }
        Ok(())
    }

    /// `R_punc = k/(n_code − p)`, bits per key quadrature.
    pub fn punctured_rate(&self) -> f64 {
        self.k as f64 / (self.n_code - self.p) as f64
    }
}

fn check_fer(fer: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&fer) {
        return Err(invalid(format!(
            "reconciliation.fer must lie in [0,1], got {fer}"
        )));
    }
    Ok(())
}

/// How Alice and Bob reconcile: a concrete punctured code, or a bare efficiency.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Reconciliation {
    Code(ReconciliationConfig),
    Efficiency { beta: f64, fer: f64 },
}

impl Reconciliation {
    pub fn fer(&self) -> f64 {
        match self {
            Reconciliation::Code(r) => r.fer,
            Reconciliation::Efficiency { fer, .. } => *fer,
        }
    }
}

/// Decoder capacity model for the throughput estimate.
#[derive(Debug, Clone, PartialEq)]
pub struct ThroughputModel {
    /// Quantum symbols per second sent by Alice.
    pub symbol_rate: f64,
    /// Decoded codewords per second as a function of β, as `(β, codewords/s)` points.
    /// Linear interpolation in between, clamped outside. Empty means the decoder keeps up.
    pub decoder_table: Vec<(f64, f64)>,
}

impl ThroughputModel {
    fn codewords_per_second(&self, beta: f64) -> Option<f64> {
        let t = &self.decoder_table;
        if t.is_empty() {
            return None;
        }
        let mut pts = t.clone();
        pts.sort_by(|a, b| a.0.total_cmp(&b.0));
        if beta <= pts[0].0 {
            return Some(pts[0].1);
        }
        for w in pts.windows(2) {
            let ((b0, r0), (b1, r1)) = (w[0], w[1]);
            if beta <= b1 {
                let f = if b1 > b0 {
                    (beta - b0) / (b1 - b0)
                } else {
                    1.0
                };
                return Some(r0 + f * (r1 - r0));
            }
        }
        Some(pts[pts.len() - 1].1)
    }

    /// Secret bits per second, excluding DSP time.
    pub fn throughput(
        &self,
        k_operational: f64,
        beta: f64,
        code: &ReconciliationConfig,
        quadratures: u32,
    ) -> f64 {
        let symbols = match self.codewords_per_second(beta) {
            None => self.symbol_rate,
            Some(cw) => {
                let decodable = cw * (code.n_code - code.p) as f64 / f64::from(quadratures);
                decodable.min(self.symbol_rate)
            }
        };
        k_operational * symbols
    }
}

/// Input-referred noise terms `(V'_Nx, V'_Np)` of the estimator variances.
pub fn noise_terms(p: &ProtocolParams) -> Result<(f64, f64)> {
    p.validate()?;
    let tau = p.detector.tau;
    if !(tau > 0.0) {
        return Err(invalid("tau must be positive"));
    }
    let eta = p.channel.eta;
    let el = (1.0 - tau) / tau * (p.detector.v_d - 1.0);
    let vs = p.source.effective_v_sqz();
    let nx = 2.0 / tau + eta * (p.channel.eps_x + vs - 1.0) + el;
    let np = 2.0 / tau + eta * (p.channel.eps_p + p.source.anti_squeezed_variance() - 1.0) + el;
    Ok((nx, np))
}

/// Variance of the transmittance estimator over `n` symbols.
pub fn transmittance_estimator_variance(p: &ProtocolParams, n: f64) -> Result<f64> {
    if !(n >= 1.0) {
        return Err(invalid(format!("n must be >= 1, got {n}")));
    }
    let vm = p.source.v_mod;
    if !(vm > 0.0) {
        return Err(invalid("transmittance estimator needs V_M > 0"));
    }
    let (nx, np) = noise_terms(p)?;
    let eta = p.channel.eta;
    Ok(eta * (np + 4.0 * eta * vm + nx) / (2.0 * n * vm))
}

/// Variances `(σ²_εx, σ²_εp)` of the excess-noise estimators over `n` symbols.
pub fn excess_noise_estimator_variance(p: &ProtocolParams, n: f64) -> Result<(f64, f64)> {
    let s2_eta = transmittance_estimator_variance(p, n)?;
    let (nx, np) = noise_terms(p)?;
    let vs = p.source.effective_v_sqz();
    let dv = p.source.effective_delta_v();
    let sx = 2.0 / n * nx * nx + (1.0 - vs).powi(2) * s2_eta;
    let sp = 2.0 / n * np * np + (1.0 - 1.0 / vs - dv).powi(2) * s2_eta;
    Ok((sx, sp))
}

/// Confidence-bound channel parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WorstCase {
    pub eta_low: f64,
    pub eps_x_up: f64,
    pub eps_p_up: f64,
    pub sigma_eta: f64,
    pub sigma_eps_x: f64,
    pub sigma_eps_p: f64,
    /// The lower transmittance bound is not positive: no key can be certified.
    pub no_key: bool,
}

impl WorstCase {
    /// Larger of the two excess-noise bounds, used by the key rate.
    pub fn eps_up(&self) -> f64 {
        self.eps_x_up.max(self.eps_p_up)
    }

    /// The nominal parameters with the channel replaced by its worst-case bounds.
    ///
    /// Excess noise is floored at zero here only so the channel stays a physical map;
    /// raising ε can never lower the bound on Eve's information.
    pub fn params(&self, nominal: &ProtocolParams) -> ProtocolParams {
        nominal.with_channel(ChannelParams {
            eta: self.eta_low,
            eps_x: self.eps_x_up.max(0.0),
            eps_p: self.eps_p_up.max(0.0),
        })
    }
}

/// Worst-case `η_low = η − zσ_η` and `ε_up = ε + zσ_ε` bounds.
pub fn worst_case(p: &ProtocolParams, b: &EstimatorBudget) -> Result<WorstCase> {
    b.validate()?;
    let s_eta = transmittance_estimator_variance(p, b.n)?.sqrt();
    let (sx, sp) = excess_noise_estimator_variance(p, b.n)?;
    let (sx, sp) = (sx.sqrt(), sp.sqrt());
    let raw = p.channel.eta - b.z * s_eta;
    Ok(WorstCase {
        eta_low: raw.max(ETA_FLOOR),
        eps_x_up: p.channel.eps_x + b.z * sx,
        eps_p_up: p.channel.eps_p + b.z * sp,
        sigma_eta: s_eta,
        sigma_eps_x: sx,
        sigma_eps_p: sp,
        no_key: raw <= 0.0,
    })
}

/// AEP correction `Δ(n) = 4 log₂(2^{d/2} + 2) √(log₂(2/ε²)) / √n`.
pub fn aep_penalty(n: f64, c: &PenaltyConfig) -> Result<f64> {
    c.validate()?;
    if !(n >= 1.0) {
        return Err(invalid(format!("n must be >= 1, got {n}")));
    }
    if n.is_infinite() {
        return Ok(0.0);
    }
    let a = (2f64.powf(0.5 * f64::from(c.d)) + 2.0).log2();
    let b = (2.0 / (c.eps_smooth * c.eps_smooth)).log2().sqrt();
    Ok(4.0 * a * b / n.sqrt())
}

/// Mutual information and Holevo bound at the worst-case channel, symmetrized.
fn worst_case_terms(p: &ProtocolParams, wc: &WorstCase) -> Result<(f64, f64)> {
    let q = wc.params(p).symmetrized();
    Ok((mutual_information(&q)?, holevo_bound(&q)?))
}

/// `max{0, β I(η_low, ε_up) − χ(η_low, ε_up) − Δ(n)}`.
pub fn finite_size_key_rate(
    p: &ProtocolParams,
    beta: f64,
    b: &EstimatorBudget,
    c: &PenaltyConfig,
) -> Result<f64> {
    if !(0.0..=1.0).contains(&beta) {
        return Err(invalid(format!("beta must lie in [0,1], got {beta}")));
    }
    let wc = worst_case(p, b)?;
    if wc.no_key {
        return Ok(0.0);
    }
    let (i, chi) = worst_case_terms(p, &wc)?;
    let delta = aep_penalty(b.n, c)?;
    Ok((beta * i - chi - delta).max(0.0))
}

/// Every intermediate of an operational key-rate evaluation. Rates are bits per symbol.
#[derive(Debug, Clone, PartialEq)]
pub struct KeyRateReport {
    pub protocol: ProtocolKind,
    /// Mutual information at the nominal parameters.
    pub i_nominal: f64,
    /// Mutual information at the worst-case parameters.
    pub i_worst: f64,
    /// Mutual information that defines β.
    pub i_reference: f64,
    pub chi_nominal: f64,
    pub chi_worst: f64,
    pub delta_n: f64,
    pub worst: WorstCase,
    pub beta: f64,
    /// Reconciled bits per symbol, `β · I_reference`.
    pub reconciled_rate: f64,
    pub fer: f64,
    pub k_asym: f64,
    pub k_finite: f64,
    pub k_operational: f64,
    pub throughput_excl_dsp: Option<f64>,
}

/// Finite-size key after reconciliation, weighted by `(1 − FER)`.
pub fn operational_key_rate(
    p: &ProtocolParams,
    r: &Reconciliation,
    b: &EstimatorBudget,
    c: &PenaltyConfig,
    throughput: Option<&ThroughputModel>,
) -> Result<KeyRateReport> {
    let wc = worst_case(p, b)?;
    report_from_worst_case(p, &wc, r, b.n, c, throughput)
}

/// Operational key rate for given worst-case bounds over `n` symbols.
///
/// `nominal` supplies the source and detector and the channel used for the asymptotic rate.
pub fn report_from_worst_case(
    nominal: &ProtocolParams,
    wc: &WorstCase,
    r: &Reconciliation,
    n: f64,
    c: &PenaltyConfig,
    throughput: Option<&ThroughputModel>,
) -> Result<KeyRateReport> {
    nominal.validate()?;
    let delta_n = aep_penalty(n, c)?;
    let sym = nominal.symmetrized();
    let i_nominal = mutual_information(&sym)?;
    let chi_nominal = holevo_bound(&sym)?;
    let (i_worst, chi_worst) = if wc.no_key {
        (0.0, f64::NAN)
    } else {
        worst_case_terms(nominal, wc)?
    };
    let q = nominal.protocol().key_quadratures();
    let (beta, reconciled, i_reference, fer) = match r {
        Reconciliation::Code(code) => {
            code.validate()?;
            let rate = f64::from(q) * code.punctured_rate();
            let i_ref = match code.measured_mi {
                Some(mi) => f64::from(q) * mi,
                None => i_worst,
            };
            let beta = rate / i_ref;
            if !(beta <= 1.0) {
                return Err(Error::ImpossibleEfficiency {
                    beta,
                    rate,
                    mutual_information: i_ref,
                });
            }
            (beta, rate, i_ref, code.fer)
        }
        Reconciliation::Efficiency { beta, fer } => {
            if !(0.0..=1.0).contains(beta) {
                return Err(invalid(format!("beta must lie in [0,1], got {beta}")));
            }
            check_fer(*fer)?;
            (*beta, beta * i_worst, i_worst, *fer)
        }
    };
    let k_asym = (beta * i_nominal - chi_nominal).max(0.0);
    let k_finite = if wc.no_key {
        0.0
    } else {
        (reconciled - chi_worst - delta_n).max(0.0)
    };
    let k_operational = (1.0 - fer) * k_finite;
    let throughput_excl_dsp = match (throughput, r) {
        (Some(t), Reconciliation::Code(code)) => Some(t.throughput(k_operational, beta, code, q)),
        (Some(t), Reconciliation::Efficiency { .. }) => Some(k_operational * t.symbol_rate),
        (None, _) => None,
    };
    Ok(KeyRateReport {
        protocol: nominal.protocol(),
        i_nominal,
        i_worst,
        i_reference,
        chi_nominal,
        chi_worst,
        delta_n,
        worst: *wc,
        beta,
        reconciled_rate: reconciled,
        fer,
        k_asym,
        k_finite,
        k_operational,
        throughput_excl_dsp,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::protocol::{asymptotic_key_rate, DetectorParams, SourceParams};
    use proptest::prelude::*;

    fn km50_squeezed() -> ProtocolParams {
        ProtocolParams::new(
            SourceParams::squeezed(0.417, 3.029, 1.372).unwrap(),
            ChannelParams::new(0.166, 0.041, 0.037).unwrap(),
            DetectorParams::new(0.68, 1.07).unwrap(),
        )
        .unwrap()
    }

    fn km50_coherent() -> ProtocolParams {
        ProtocolParams::new(
            SourceParams::coherent(1.372).unwrap(),
            ChannelParams::new(0.163, 0.032, 0.031).unwrap(),
            DetectorParams::new(0.68, 1.07).unwrap(),
        )
        .unwrap()
    }

    fn ldpc_code(p: u64) -> ReconciliationConfig {
        ReconciliationConfig {
            n_code: 819200,
            k: 16384,
            p,
            fer: 0.0,
            iterations: 100,
            measured_mi: Some(0.0516),
        }
    }

    #[test]
    fn noise_terms_examples() {
        let ideal = ProtocolParams::new(
            SourceParams::squeezed(1.0, 0.0, 1.0).unwrap(),
            ChannelParams::new(0.5, 0.0, 0.0).unwrap(),
            DetectorParams::new(1.0, 1.0).unwrap(),
        )
        .unwrap();
        assert_eq!(noise_terms(&ideal).unwrap(), (2.0, 2.0));

        let p = km50_squeezed();
        let (nx, np) = noise_terms(&p).unwrap();
        let expect = 2.0 / 0.68 + 0.166 * (0.041 + 0.417 - 1.0) + (0.32 / 0.68) * 0.07;
        assert!((nx - expect).abs() < 1e-14);
        assert!(np >= nx);
    }

    #[test]
    fn estimator_variances_scale_as_inverse_n() {
        let p = km50_squeezed();
        let a = transmittance_estimator_variance(&p, 1e8).unwrap();
        let b = transmittance_estimator_variance(&p, 2e8).unwrap();
        assert!((a / b - 2.0).abs() < 1e-14);
        let (x1, p1) = excess_noise_estimator_variance(&p, 1e8).unwrap();
        let (x2, p2) = excess_noise_estimator_variance(&p, 4e8).unwrap();
        assert!((x1 / x2 - 4.0).abs() < 1e-12 && (p1 / p2 - 4.0).abs() < 1e-12);
    }

    #[test]
    fn km50_estimator_arithmetic() {
        let p = km50_squeezed();
        let (nx, np) = noise_terms(&p).unwrap();
        let s2 = 0.166 * (np + 4.0 * 0.166 * 1.372 + nx) / (2.0 * 1e8 * 1.372);
        let got = transmittance_estimator_variance(&p, 1e8).unwrap();
        assert!((got - s2).abs() <= 1e-15 * s2);
        let (sx, sp) = excess_noise_estimator_variance(&p, 1e8).unwrap();
        let ex = 2e-8 * nx * nx + (1.0f64 - 0.417).powi(2) * s2;
        let ep = 2e-8 * np * np + (1.0 - 1.0 / 0.417 - 3.029f64).powi(2) * s2;
        assert!((sx - ex).abs() <= 1e-15 * ex);
        assert!((sp - ep).abs() <= 1e-15 * ep);
    }

    #[test]
    fn coherent_limit_drops_eta_term() {
        let p = km50_coherent();
        let (nx, np) = noise_terms(&p).unwrap();
        let (sx, sp) = excess_noise_estimator_variance(&p, 1e6).unwrap();
        assert!((sx - 2e-6 * nx * nx).abs() < 1e-18);
        assert!((sp - 2e-6 * np * np).abs() < 1e-18);
    }

    #[test]
    fn worst_case_at_50_km() {
        let wc = worst_case(&km50_squeezed(), &EstimatorBudget::default()).unwrap();
        assert!((wc.eta_low - 0.165562).abs() < 2e-6, "{}", wc.eta_low);
        assert!((wc.eps_up() - 0.043663).abs() < 2e-6, "{}", wc.eps_up());
        let p = wc.params(&km50_squeezed()).symmetrized();
        assert!((mutual_information(&p).unwrap() - 0.054674).abs() < 2e-6);
        assert!((holevo_bound(&p).unwrap() - 0.024480).abs() < 2e-6);

        let wc = worst_case(&km50_coherent(), &EstimatorBudget::default()).unwrap();
        let p = wc.params(&km50_coherent()).symmetrized();
        assert!((mutual_information(&p).unwrap() - 0.104150).abs() < 2e-6);
        assert!((holevo_bound(&p).unwrap() - 0.078209).abs() < 2e-6);
    }

    #[test]
    fn worst_case_identities() {
        let p = km50_squeezed();
        let wc = worst_case(
            &p,
            &EstimatorBudget {
                z: 0.0,
                ..Default::default()
            },
        )
        .unwrap();
        assert_eq!(wc.eta_low, p.channel.eta);
        assert_eq!(
            (wc.eps_x_up, wc.eps_p_up),
            (p.channel.eps_x, p.channel.eps_p)
        );
        let wc = worst_case(&p, &EstimatorBudget::with_n(1e30)).unwrap();
        assert!((wc.eta_low - p.channel.eta).abs() < 1e-12);
        assert!((wc.eps_up() - p.channel.symmetrized_eps()).abs() < 1e-12);
    }

    #[test]
    fn tiny_n_is_no_key() {
        let p = km50_squeezed();
        let b = EstimatorBudget::with_n(10.0);
        let wc = worst_case(&p, &b).unwrap();
        assert!(wc.no_key && wc.eta_low > 0.0);
        assert_eq!(
            finite_size_key_rate(&p, 0.95, &b, &PenaltyConfig::default()).unwrap(),
            0.0
        );
    }

    #[test]
    fn aep_examples() {
        let c = PenaltyConfig::default();
        let a = aep_penalty(1e8, &c).unwrap();
        assert_eq!(a / aep_penalty(4e8, &c).unwrap(), 2.0);
        assert!((a - 0.00965).abs() < 5e-5, "{a}");
        let d6 = PenaltyConfig {
            d: 6,
            eps_smooth: 1e-10,
        };
        let expect = 4.0 * 10f64.log2() * (2e20f64).log2().sqrt() / 1e4;
        assert!((aep_penalty(1e8, &d6).unwrap() - expect).abs() < 1e-15);
        assert_eq!(aep_penalty(f64::INFINITY, &c).unwrap(), 0.0);
        assert!(aep_penalty(0.5, &c).is_err());
    }

    #[test]
    fn puncturing_reproduces_beta() {
        let p = km50_squeezed();
        let b = EstimatorBudget::default();
        let c = PenaltyConfig::default();
        for (punct, beta) in [(472700, 0.917), (462162, 0.890), (425162, 0.806)] {
            let code = ldpc_code(punct);
            let r = operational_key_rate(&p, &Reconciliation::Code(code), &b, &c, None).unwrap();
            assert!(
                (r.beta - beta).abs() < 1.5e-3,
                "p = {punct}: beta = {}",
                r.beta
            );
            assert!(
                (r.beta * r.i_reference - code.punctured_rate()).abs() < 1e-12 * r.reconciled_rate
            );
        }
        assert!((ldpc_code(472700).punctured_rate() - 16384.0 / 346500.0).abs() < 1e-15);
    }

    #[test]
    fn impossible_efficiency_is_reported() {
        let mut code = ldpc_code(472700);
        code.measured_mi = Some(0.04);
        let r = operational_key_rate(
            &km50_squeezed(),
            &Reconciliation::Code(code),
            &EstimatorBudget::default(),
            &PenaltyConfig::default(),
            None,
        );
        assert!(matches!(r, Err(Error::ImpossibleEfficiency { .. })));
    }

    #[test]
    fn fer_one_gives_zero() {
        let r = operational_key_rate(
            &km50_squeezed(),
            &Reconciliation::Efficiency {
                beta: 0.95,
                fer: 1.0,
            },
            &EstimatorBudget::default(),
            &PenaltyConfig::default(),
            None,
        )
        .unwrap();
        assert_eq!(r.k_operational, 0.0);
        assert!(r.k_finite > 0.0);
    }

    #[test]
    fn efficiency_route_matches_finite_size_rate() {
        let p = km50_squeezed();
        let b = EstimatorBudget::default();
        let c = PenaltyConfig::default();
        let r = operational_key_rate(
            &p,
            &Reconciliation::Efficiency {
                beta: 0.95,
                fer: 0.0,
            },
            &b,
            &c,
            None,
        )
        .unwrap();
        let k = finite_size_key_rate(&p, 0.95, &b, &c).unwrap();
        assert!((r.k_finite - k).abs() < 1e-15);
        assert!(r.k_finite <= r.k_asym);
    }

    #[test]
    fn throughput_model() {
        let code = ldpc_code(472700);
        let t = ThroughputModel {
            symbol_rate: 1e9,
            decoder_table: vec![(0.9, 100.0), (0.95, 50.0)],
        };
        // Decoder limited: 75 codewords/s at β = 0.925.
        let got = t.throughput(0.01, 0.925, &code, 1);
        assert!((got - 0.01 * 75.0 * 346500.0).abs() < 1e-6);
        let half = t.throughput(0.01, 0.925, &code, 2);
        assert!((got / half - 2.0).abs() < 1e-12);
        let free = ThroughputModel {
            symbol_rate: 1e6,
            decoder_table: vec![],
        };
        assert_eq!(free.throughput(0.01, 0.9, &code, 1), 1e4);
    }

    #[test]
    fn reconciliation_validation() {
        let mut c = ldpc_code(819200);
        assert!(c.validate().is_err());
        c.p = 819100;
        assert!(c.validate().is_err());
        c = ldpc_code(1000);
        c.fer = 1.5;
        assert!(c.validate().is_err());
    }

    #[test]
    fn finite_converges_to_asymptotic() {
        let p = km50_squeezed();
        let ka = asymptotic_key_rate(&p, 0.95).unwrap();
        let kf = finite_size_key_rate(
            &p,
            0.95,
            &EstimatorBudget::with_n(1e14),
            &PenaltyConfig::default(),
        )
        .unwrap();
        assert!(kf <= ka && (ka - kf) / ka < 1e-3);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn finite_never_exceeds_asymptotic(
            eps in 0.0f64..0.12,
            eta in 0.1f64..0.9,
            log_n in 6.0f64..12.0,
            beta in 0.85f64..1.0,
        ) {
            let p = km50_squeezed().with_channel(ChannelParams::new(eta, eps, eps).unwrap());
            let b = EstimatorBudget::with_n(10f64.powf(log_n));
            let kf = finite_size_key_rate(&p, beta, &b, &PenaltyConfig::default()).unwrap();
            let ka = asymptotic_key_rate(&p, beta).unwrap();
            prop_assert!(kf <= ka + 1e-12);
        }

        #[test]
        fn worst_case_tightens_with_n(log_n in 6.0f64..11.0) {
            let p = km50_squeezed();
            let a = worst_case(&p, &EstimatorBudget::with_n(10f64.powf(log_n))).unwrap();
            let b = worst_case(&p, &EstimatorBudget::with_n(10f64.powf(log_n + 0.5))).unwrap();
            prop_assert!(b.eta_low >= a.eta_low);
            prop_assert!(b.eps_up() <= a.eps_up());
        }

        #[test]
        fn operational_is_affine_in_fer(fer in 0.0f64..1.0) {
            let p = km50_squeezed();
            let b = EstimatorBudget::default();
            let c = PenaltyConfig::default();
            let at = |f: f64| operational_key_rate(&p, &Reconciliation::Efficiency { beta: 0.96, fer: f }, &b, &c, None)
                .unwrap()
                .k_operational;
            let (k0, k1, kf) = (at(0.0), at(1.0), at(fer));
            prop_assert!((kf - (k0 + fer * (k1 - k0))).abs() < 1e-15);
        }
    }
}
