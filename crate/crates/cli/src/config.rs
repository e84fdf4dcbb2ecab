//! Run configuration: a TOML document with one table per concern.
//!
//! Physical quantities are in shot-noise units, angles in degrees. Every field has a
//! default (the 50 km squeezed-state operating point) except `mode`, so a config can be
//! as short as the quantities it changes.

use std::path::Path;

use serde::{Deserialize, Serialize};

use sqzkey::calibration::{B2BMeasurement, SourceCalibration};
use sqzkey::finite_size::{
    EstimatorBudget, PenaltyConfig, Reconciliation, ReconciliationConfig, ThroughputModel,
};
use sqzkey::protocol::{ChannelParams, DetectorParams, ProtocolKind, ProtocolParams, SourceParams};
use sqzkey::simulation::{PhaseKind, PhaseModel, RunConfig};

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Keyrate,
    Sweep,
    Simulate,
    Calibrate,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProtocolChoice {
    Squeezed,
    Coherent,
    #[default]
    Both,
}

impl ProtocolChoice {
    pub fn kinds(self) -> Vec<ProtocolKind> {
        match self {
            ProtocolChoice::Squeezed => vec![ProtocolKind::Squeezed],
            ProtocolChoice::Coherent => vec![ProtocolKind::Coherent],
            ProtocolChoice::Both => vec![ProtocolKind::Squeezed, ProtocolKind::Coherent],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub mode: Mode,
    #[serde(default)]
    pub protocol: ProtocolChoice,
    #[serde(default)]
    pub seed: u64,
    /// Output path; `--out` takes precedence.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<String>,
    #[serde(default)]
    pub source: SourceSection,
    #[serde(default)]
    pub channel: ChannelSection,
    /// Channel seen by the coherent-state protocol when it differs from `channel`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub coherent_channel: Option<ChannelSection>,
    #[serde(default)]
    pub detector: DetectorSection,
    #[serde(default)]
    pub estimation: EstimationSection,
    #[serde(default)]
    pub penalty: PenaltySection,
    #[serde(default)]
    pub reconciliation: ReconciliationSection,
    /// Reconciliation of the coherent-state protocol when it differs.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub coherent_reconciliation: Option<ReconciliationSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub throughput: Option<ThroughputSection>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub sweep: Vec<Axis>,
    #[serde(default)]
    pub simulation: SimulationSection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub b2b: Option<B2BSection>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SourceSection {
    pub v_sqz: f64,
    pub delta_v_an: f64,
    pub v_mod: f64,
}

impl Default for SourceSection {
    fn default() -> Self {
        SourceSection {
            v_sqz: 0.417,
            delta_v_an: 3.029,
            v_mod: 1.372,
        }
    }
}

/// Give either `eta` or `attenuation_db`, and either per-quadrature input-referred noise,
/// a common `eps`, or a common `output_noise` referred to the channel output. Omitted
/// noise is zero. The defaults apply only when the whole table is absent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChannelSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub attenuation_db: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eps_x: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eps_p: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eps: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_noise: Option<f64>,
}

impl Default for ChannelSection {
    fn default() -> Self {
        ChannelSection {
            eta: Some(0.166),
            attenuation_db: None,
            eps_x: Some(0.041),
            eps_p: Some(0.037),
            eps: None,
            output_noise: None,
        }
    }
}

impl ChannelSection {
    pub fn params(&self, table: &str) -> Result<ChannelParams, CliError> {
        let eta = match (self.eta, self.attenuation_db) {
            (Some(e), None) => e,
            (None, Some(db)) => 10f64.powf(-db / 10.0),
            (Some(_), Some(_)) => {
                return Err(CliError::config(format!(
                    "{table}: give eta or attenuation_db, not both"
                )))
            }
            (None, None) => return Err(CliError::config(format!("{table}.eta is missing"))),
        };
        let per_quad = self.eps_x.is_some() || self.eps_p.is_some();
        let given = [per_quad, self.eps.is_some(), self.output_noise.is_some()];
        if given.iter().filter(|g| **g).count() > 1 {
            return Err(CliError::config(format!(
                "{table}: excess noise must be given one way: eps_x/eps_p, eps, or output_noise"
            )));
        }
        let ch = if let Some(u) = self.output_noise {
            ChannelParams::from_output_noise(eta, u, u)
        } else if let Some(e) = self.eps {
            ChannelParams::new(eta, e, e)
        } else {
            ChannelParams::new(eta, self.eps_x.unwrap_or(0.0), self.eps_p.unwrap_or(0.0))
        };
        ch.map_err(|e| CliError::config(format!("{table}: {e}")))
    }
}

/// Trusted electronic noise as the thermal variance `v_d` or as `t`, referred to one
/// heterodyne output quadrature. A `[detector]` table with neither has no electronic noise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetectorSection {
    #[serde(default = "default_tau")]
    pub tau: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub v_d: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t: Option<f64>,
}

fn default_tau() -> f64 {
    0.68
}

impl Default for DetectorSection {
    fn default() -> Self {
        DetectorSection {
            tau: default_tau(),
            v_d: Some(1.07),
            t: None,
        }
    }
}

impl DetectorSection {
    pub fn params(&self) -> Result<DetectorParams, CliError> {
        let d = match (self.v_d, self.t) {
            (Some(v), None) => DetectorParams::new(self.tau, v),
            (None, Some(t)) => DetectorParams::from_output_noise(self.tau, t),
            (None, None) => DetectorParams::new(self.tau, 1.0),
            (Some(_), Some(_)) => {
                return Err(CliError::config("detector: give v_d or t, not both"))
            }
        };
        d.map_err(|e| CliError::config(format!("detector: {e}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EstimationSection {
    pub n: f64,
    pub z: f64,
}

impl Default for EstimationSection {
    fn default() -> Self {
        let b = EstimatorBudget::default();
        EstimationSection { n: b.n, z: b.z }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PenaltySection {
    pub d: u32,
    pub eps_smooth: f64,
}

impl Default for PenaltySection {
    fn default() -> Self {
        let p = PenaltyConfig::default();
        PenaltySection {
            d: p.d,
            eps_smooth: p.eps_smooth,
        }
    }
}

/// A bare efficiency `beta`, or a punctured code (`n_code`, `k`, `p`) whose efficiency
/// follows from the rate and the mutual information (`mi` per key quadrature if given).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReconciliationSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
    #[serde(default)]
    pub fer: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_code: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub iterations: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mi: Option<f64>,
}

impl Default for ReconciliationSection {
    fn default() -> Self {
        ReconciliationSection {
            beta: Some(0.92),
            fer: 0.0,
            n_code: None,
            k: None,
            p: None,
            iterations: None,
            mi: None,
        }
    }
}

impl ReconciliationSection {
    pub fn reconciliation(&self, table: &str) -> Result<Reconciliation, CliError> {
        let code_given = self.n_code.is_some() || self.k.is_some() || self.p.is_some();
        match (self.beta, code_given) {
            (Some(beta), false) => Ok(Reconciliation::Efficiency {
                beta,
                fer: self.fer,
            }),
            (None, true) => {
                let need = |v: Option<u64>, name: &str| {
                    v.ok_or_else(|| CliError::config(format!("{table}.{name} is missing")))
                };
                let code = ReconciliationConfig {
                    n_code: need(self.n_code, "n_code")?,
                    k: need(self.k, "k")?,
                    p: need(self.p, "p")?,
                    fer: self.fer,
                    iterations: self.iterations.unwrap_or(0),
                    measured_mi: self.mi,
                };
                code.validate()
                    .map_err(|e| CliError::config(format!("{table}: {e}")))?;
                Ok(Reconciliation::Code(code))
            }
            (Some(_), true) => Err(CliError::config(format!(
                "{table}: give beta or a code (n_code, k, p), not both"
            ))),
            (None, false) => Err(CliError::config(format!(
                "{table}: give beta or a code (n_code, k, p)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ThroughputSection {
    pub symbol_rate: f64,
    /// `[beta, codewords per second]` pairs.
    #[serde(default)]
    pub decoder_table: Vec<[f64; 2]>,
}

impl ThroughputSection {
    pub fn model(&self) -> ThroughputModel {
        ThroughputModel {
            symbol_rate: self.symbol_rate,
            decoder_table: self.decoder_table.iter().map(|p| (p[0], p[1])).collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scale {
    #[default]
    Linear,
    Log,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Axis {
    pub variable: String,
    pub start: f64,
    pub stop: f64,
    pub points: usize,
    #[serde(default)]
    pub scale: Scale,
}

/// Names a sweep axis may refer to.
pub const SWEEP_VARIABLES: &[&str] = &[
    "beta",
    "fer",
    "eta",
    "attenuation_db",
    "eps",
    "eps_x",
    "eps_p",
    "output_noise",
    "v_mod",
    "v_sqz",
    "squeezing_db",
    "delta_v_an",
    "tau",
    "v_d",
    "t",
    "n",
];

impl Axis {
    pub fn validate(&self, i: usize) -> Result<(), CliError> {
        if !SWEEP_VARIABLES.contains(&self.variable.as_str()) {
            return Err(CliError::config(format!(
                "sweep[{i}].variable = \"{}\" is not one of {}",
                self.variable,
                SWEEP_VARIABLES.join(", ")
            )));
        }
        if self.points < 2 {
            return Err(CliError::config(format!("sweep[{i}].points must be >= 2")));
        }
        if !self.start.is_finite() || !self.stop.is_finite() {
            return Err(CliError::config(format!(
                "sweep[{i}]: start and stop must be finite"
            )));
        }
        if self.scale == Scale::Log && !(self.start > 0.0 && self.stop > 0.0) {
            return Err(CliError::config(format!(
                "sweep[{i}]: log scale needs positive start and stop"
            )));
        }
        Ok(())
    }

    pub fn values(&self) -> Vec<f64> {
        let last = (self.points - 1) as f64;
        (0..self.points)
            .map(|k| {
                let f = k as f64 / last;
                match self.scale {
                    Scale::Linear => self.start + f * (self.stop - self.start),
                    Scale::Log => (self.start.ln() + f * (self.stop.ln() - self.start.ln())).exp(),
                }
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PhaseChoice {
    None,
    #[default]
    Fixed,
    RandomWalk,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulationSection {
    pub frames: usize,
    pub n_per_frame: usize,
    #[serde(default)]
    pub phase: PhaseChoice,
    /// Receiver phase at the first symbol; drawn per frame when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theta0_deg: Option<f64>,
    #[serde(default)]
    pub step_std_deg: f64,
    /// Rotation of Alice's recorded symbols; drawn per frame when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub modulation_offset_deg: Option<f64>,
    /// Directory that receives one binary frame file per frame.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub frame_dir: Option<String>,
    /// Directory of frame files to process instead of generating new frames.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub replay_dir: Option<String>,
}

impl Default for SimulationSection {
    fn default() -> Self {
        SimulationSection {
            frames: 250,
            n_per_frame: 400_000,
            phase: PhaseChoice::Fixed,
            theta0_deg: None,
            step_std_deg: 0.0,
            modulation_offset_deg: None,
            frame_dir: None,
            replay_dir: None,
        }
    }
}

impl SimulationSection {
    pub fn phase_model(&self) -> PhaseModel {
        PhaseModel {
            kind: match self.phase {
                PhaseChoice::None => PhaseKind::None,
                PhaseChoice::Fixed => PhaseKind::FixedOffset,
                PhaseChoice::RandomWalk => PhaseKind::RandomWalk,
            },
            theta0: self.theta0_deg.map(f64::to_radians),
            step_std: self.step_std_deg.to_radians(),
            modulation_offset: self.modulation_offset_deg.map(f64::to_radians),
        }
    }
}

/// Back-to-back measurement, inline or read from `file` (a TOML file with the same keys).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct B2BSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub file: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub v_x_b2b: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub v_p_b2b: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tau: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct B2BFile {
    v_x_b2b: f64,
    v_p_b2b: f64,
    t: f64,
    tau: f64,
}

impl B2BSection {
    /// Resolves the measurement; relative `file` paths are taken from `base`.
    pub fn measurement(&self, base: &Path) -> Result<B2BMeasurement, CliError> {
        if let Some(f) = &self.file {
            if self.v_x_b2b.is_some()
                || self.v_p_b2b.is_some()
                || self.t.is_some()
                || self.tau.is_some()
            {
                return Err(CliError::config(
                    "b2b: give file or inline values, not both",
                ));
            }
            let path = base.join(f);
            let text = std::fs::read_to_string(&path)
                .map_err(|e| CliError::config(format!("b2b.file {}: {e}", path.display())))?;
            let m: B2BFile = toml::from_str(&text)
                .map_err(|e| CliError::config(format!("b2b.file {}: {e}", path.display())))?;
            return Ok(B2BMeasurement {
                v_x_b2b: m.v_x_b2b,
                v_p_b2b: m.v_p_b2b,
                t: m.t,
                tau: m.tau,
            });
        }
        let need = |v: Option<f64>, name: &str| {
            v.ok_or_else(|| CliError::config(format!("b2b.{name} is missing")))
        };
        Ok(B2BMeasurement {
            v_x_b2b: need(self.v_x_b2b, "v_x_b2b")?,
            v_p_b2b: need(self.v_p_b2b, "v_p_b2b")?,
            t: need(self.t, "t")?,
            tau: need(self.tau, "tau")?,
        })
    }
}

impl Config {
    pub fn parse(text: &str) -> Result<Config, CliError> {
        let cfg: Config = toml::from_str(text).map_err(|e| CliError::config(e.to_string()))?;
        cfg.check()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Cross-field checks that need no file system access.
    pub fn check(&self) -> Result<(), CliError> {
        for (i, a) in self.sweep.iter().enumerate() {
            a.validate(i)?;
        }
        if self.mode == Mode::Sweep && !(1..=2).contains(&self.sweep.len()) {
            return Err(CliError::config(
                "sweep mode needs one or two [[sweep]] axes",
            ));
        }
        if self.mode == Mode::Calibrate && self.b2b.is_none() {
            return Err(CliError::config("calibrate mode needs a [b2b] table"));
        }
        if self.mode == Mode::Simulate && self.protocol == ProtocolChoice::Both {
            return Err(CliError::config(
                "simulate mode needs protocol = \"squeezed\" or \"coherent\"",
            ));
        }
        self.params(ProtocolKind::Squeezed)?;
        self.params(ProtocolKind::Coherent)?;
        self.reconciliation_for(ProtocolKind::Squeezed)?;
        self.reconciliation_for(ProtocolKind::Coherent)?;
        self.budget()?;
        self.penalty()?;
        Ok(())
    }

    pub fn params(&self, kind: ProtocolKind) -> Result<ProtocolParams, CliError> {
        let s = &self.source;
        let source = match kind {
            ProtocolKind::Squeezed => SourceParams::squeezed(s.v_sqz, s.delta_v_an, s.v_mod),
            ProtocolKind::Coherent => SourceParams::coherent(s.v_mod),
        }
        .map_err(|e| CliError::config(format!("source: {e}")))?;
        let channel = match (kind, &self.coherent_channel) {
            (ProtocolKind::Coherent, Some(c)) => c.params("coherent_channel")?,
            _ => self.channel.params("channel")?,
        };
        ProtocolParams::new(source, channel, self.detector.params()?)
            .map_err(|e| CliError::config(e.to_string()))
    }

    pub fn reconciliation_for(&self, kind: ProtocolKind) -> Result<Reconciliation, CliError> {
        match (kind, &self.coherent_reconciliation) {
            (ProtocolKind::Coherent, Some(r)) => r.reconciliation("coherent_reconciliation"),
            _ => self.reconciliation.reconciliation("reconciliation"),
        }
    }

    pub fn budget(&self) -> Result<EstimatorBudget, CliError> {
        let b = EstimatorBudget {
            n: self.estimation.n,
            z: self.estimation.z,
            ..Default::default()
        };
        b.validate().map_err(|e| CliError::config(e.to_string()))?;
        Ok(b)
    }

    pub fn penalty(&self) -> Result<PenaltyConfig, CliError> {
        let p = PenaltyConfig {
            d: self.penalty.d,
            eps_smooth: self.penalty.eps_smooth,
        };
        p.validate().map_err(|e| CliError::config(e.to_string()))?;
        Ok(p)
    }

    pub fn run_config(
        &self,
        kind: ProtocolKind,
        calibration: Option<SourceCalibration>,
    ) -> Result<RunConfig, CliError> {
        let sim = &self.simulation;
        let mut rc = RunConfig::new(
            sim.frames,
            sim.n_per_frame,
            self.reconciliation_for(kind)?,
            self.seed,
        );
        rc.phase = sim.phase_model();
        rc.phase
            .validate()
            .map_err(|e| CliError::config(format!("simulation: {e}")))?;
        rc.z = self.estimation.z;
        rc.penalty = self.penalty()?;
        rc.calibration = calibration;
        Ok(rc)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_uses_defaults() {
        let c = Config::parse("mode = \"keyrate\"").unwrap();
        assert_eq!(c.protocol, ProtocolChoice::Both);
        assert_eq!(c.source, SourceSection::default());
        let p = c.params(ProtocolKind::Squeezed).unwrap();
        assert_eq!(p.channel.eta, 0.166);
    }

    #[test]
    fn dump_round_trips() {
        let text = r#"
            mode = "sweep"
            seed = 7
            [channel]
            attenuation_db = 20.0
            output_noise = 0.001
            [[sweep]]
            variable = "beta"
            start = 0.8
            stop = 0.95
            points = 4
            [b2b]
            v_x_b2b = 0.9
            v_p_b2b = 2.0
            t = 0.01
            tau = 0.68
        "#;
        let c = Config::parse(text).unwrap();
        let again = Config::parse(&c.to_toml()).unwrap();
        assert_eq!(c, again);
    }

    #[test]
    fn errors_name_the_field() {
        let e = Config::parse("mode = \"keyrate\"\n[channel]\neta = 1.5\neps = 0.1").unwrap_err();
        assert!(e.to_string().contains("eta"), "{e}");
        let e = Config::parse(
            "mode = \"keyrate\"\n[source]\nv_sqz = 0.5\nv_mod = 1\ndelta_v_an = 0\nbogus = 1",
        )
        .unwrap_err();
        assert!(e.to_string().contains("bogus"), "{e}");
        let e = Config::parse(
            "mode = \"sweep\"\n[[sweep]]\nvariable = \"nope\"\nstart = 0\nstop = 1\npoints = 3",
        )
        .unwrap_err();
        assert!(e.to_string().contains("sweep[0].variable"), "{e}");
    }

    #[test]
    fn partial_tables_keep_remaining_defaults() {
        let c = Config::parse("mode = \"keyrate\"\n[estimation]\nn = 1e9\n[source]\nv_mod = 5.0")
            .unwrap();
        assert_eq!(c.estimation.z, 6.5);
        assert_eq!(c.source.v_sqz, 0.417);
        let ch = Config::parse("mode = \"keyrate\"\n[channel]\nattenuation_db = 10.0").unwrap();
        let p = ch.params(ProtocolKind::Coherent).unwrap();
        assert!((p.channel.eta - 0.1).abs() < 1e-15);
        assert_eq!(p.channel.eps_x, 0.0);
    }

    #[test]
    fn log_axis_values() {
        let a = Axis {
            variable: "n".into(),
            start: 1e6,
            stop: 1e10,
            points: 5,
            scale: Scale::Log,
        };
        let v = a.values();
        assert!((v[2] / 1e8 - 1.0).abs() < 1e-12);
        assert_eq!(v.len(), 5);
    }
}
