//! Browser bindings: key-rate curves and the squeezed-minus-coherent advantage map.
//!
//! Every exported function returns a flat `Float64Array`; the layouts are given per
//! function. The same computations are available to Rust callers without JavaScript.

use wasm_bindgen::prelude::*;

use sqzkey::finite_size::{operational_key_rate, EstimatorBudget, PenaltyConfig, Reconciliation};
use sqzkey::protocol::{ChannelParams, DetectorParams, ProtocolParams, SourceParams};

/// Source, detector and block-size settings shared by every plot.
#[wasm_bindgen]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Setup {
    squeezing_db: f64,
    delta_v_an: f64,
    v_mod: f64,
    tau: f64,
    v_d: f64,
    log10_n: f64,
    beta: f64,
}

#[wasm_bindgen]
impl Setup {
    #[wasm_bindgen(constructor)]
    pub fn new(
        squeezing_db: f64,
        delta_v_an: f64,
        v_mod: f64,
        tau: f64,
        v_d: f64,
        log10_n: f64,
        beta: f64,
    ) -> Setup {
        Setup {
            squeezing_db,
            delta_v_an,
            v_mod,
            tau,
            v_d,
            log10_n,
            beta,
        }
    }
}

impl Setup {
    fn params(&self, squeezed: bool, eta: f64, eps: f64) -> Result<ProtocolParams, String> {
        let source = if squeezed {
            SourceParams::squeezed(
                10f64.powf(-self.squeezing_db / 10.0),
                self.delta_v_an,
                self.v_mod,
            )
        } else {
            SourceParams::coherent(self.v_mod)
        };
        let p = ProtocolParams::new(
            source.map_err(|e| e.to_string())?,
            ChannelParams::new(eta, eps, eps).map_err(|e| e.to_string())?,
            DetectorParams::new(self.tau, self.v_d).map_err(|e| e.to_string())?,
        );
        p.map_err(|e| e.to_string())
    }

    /// Operational key rate in bits per symbol.
    fn rate(&self, squeezed: bool, eta: f64, eps: f64, beta: f64) -> Result<f64, String> {
        let p = self.params(squeezed, eta, eps)?;
        let r = operational_key_rate(
            &p,
            &Reconciliation::Efficiency { beta, fer: 0.0 },
            &EstimatorBudget::with_n(10f64.powf(self.log10_n)),
            &PenaltyConfig::default(),
            None,
        );
        Ok(r.map_err(|e| e.to_string())?.k_operational)
    }
}

fn transmittance(attenuation_db: f64) -> f64 {
    10f64.powf(-attenuation_db / 10.0)
}

fn grid(lo: f64, hi: f64, points: usize) -> Result<Vec<f64>, String> {
    if points < 2 {
        return Err("need at least two points".into());
    }
    Ok((0..points)
        .map(|i| lo + (hi - lo) * i as f64 / (points - 1) as f64)
        .collect())
}

/// `[eps, k_squeezed, k_coherent]` triples for input-referred excess noise in `[0, eps_max]`.
pub fn noise_curve(
    s: &Setup,
    attenuation_db: f64,
    eps_max: f64,
    points: usize,
) -> Result<Vec<f64>, String> {
    let eta = transmittance(attenuation_db);
    let mut out = Vec::with_capacity(3 * points);
    for eps in grid(0.0, eps_max, points)? {
        out.extend([
            eps,
            s.rate(true, eta, eps, s.beta)?,
            s.rate(false, eta, eps, s.beta)?,
        ]);
    }
    Ok(out)
}

/// `[beta, k_squeezed, k_coherent]` triples for efficiencies in `[beta_min, beta_max]`.
pub fn beta_curve(
    s: &Setup,
    attenuation_db: f64,
    eps: f64,
    beta_min: f64,
    beta_max: f64,
    points: usize,
) -> Result<Vec<f64>, String> {
    let eta = transmittance(attenuation_db);
    let mut out = Vec::with_capacity(3 * points);
    for beta in grid(beta_min, beta_max, points)? {
        out.extend([
            beta,
            s.rate(true, eta, eps, beta)?,
            s.rate(false, eta, eps, beta)?,
        ]);
    }
    Ok(out)
}

/// Row-major `k_squeezed − k_coherent` with attenuation along rows and excess noise
/// referred to the channel output (mSNU) along columns.
pub fn advantage_grid(
    s: &Setup,
    att_min: f64,
    att_max: f64,
    att_points: usize,
    noise_max_msnu: f64,
    noise_points: usize,
) -> Result<Vec<f64>, String> {
    let mut out = Vec::with_capacity(att_points * noise_points);
    let noise = grid(0.0, noise_max_msnu, noise_points)?;
    for att in grid(att_min, att_max, att_points)? {
        let eta = transmittance(att);
        for u in &noise {
            let eps = 1e-3 * u / eta;
            out.push(s.rate(true, eta, eps, s.beta)? - s.rate(false, eta, eps, s.beta)?);
        }
    }
    Ok(out)
}

#[wasm_bindgen(js_name = noiseCurve)]
pub fn noise_curve_js(
    s: &Setup,
    attenuation_db: f64,
    eps_max: f64,
    points: usize,
) -> Result<Vec<f64>, JsError> {
    noise_curve(s, attenuation_db, eps_max, points).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen(js_name = betaCurve)]
pub fn beta_curve_js(
    s: &Setup,
    attenuation_db: f64,
    eps: f64,
    beta_min: f64,
    beta_max: f64,
    points: usize,
) -> Result<Vec<f64>, JsError> {
    beta_curve(s, attenuation_db, eps, beta_min, beta_max, points).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen(js_name = advantageGrid)]
pub fn advantage_grid_js(
    s: &Setup,
    att_min: f64,
    att_max: f64,
    att_points: usize,
    noise_max_msnu: f64,
    noise_points: usize,
) -> Result<Vec<f64>, JsError> {
    advantage_grid(
        s,
        att_min,
        att_max,
        att_points,
        noise_max_msnu,
        noise_points,
    )
    .map_err(|e| JsError::new(&e))
}
