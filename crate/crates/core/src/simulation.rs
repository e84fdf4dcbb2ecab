//! Symbol-level Monte Carlo of the prepare-and-measure link and the receiver DSP
//! (quadrature alignment and Alice-side remapping) that feeds channel estimation.

use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, PI, TAU};

use nalgebra::{Matrix2, Matrix4};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::calibration::{estimate_channel_from_moments, ChannelEstimate, SourceCalibration};
use crate::error::{invalid, Error, Result};
use crate::finite_size::{
    report_from_worst_case, EstimatorBudget, KeyRateReport, PenaltyConfig, Reconciliation,
    WorstCase,
};
use crate::frame::{FrameTruth, SampleFrame};
use crate::moments::Moments;
use crate::protocol::{ChannelParams, ProtocolKind, ProtocolParams, SourceParams};

/// A statistically negligible asymmetry or correlation is this many standard errors or fewer.
const DEGENERACY_SIGMAS: f64 = 6.0;
const MIN_DSP_SYMBOLS: usize = 1000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PhaseKind {
    /// No receiver phase and no modulation offset.
    None,
    /// Constant receiver phase over the frame.
    #[default]
    FixedOffset,
    /// Receiver phase performs a Gaussian random walk starting at `theta0`.
    RandomWalk,
}

/// Residual phase between Alice's reference and Bob's receiver.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhaseModel {
    pub kind: PhaseKind,
    /// Receiver phase (radians) at the first symbol; `None` draws it uniformly in
    /// `[−π/2, π/2)` for every frame.
    pub theta0: Option<f64>,
    /// Random-walk step standard deviation, radians per symbol.
    pub step_std: f64,
    /// Rotation (radians) between Alice's recorded symbols and the transmitted
    /// displacement; `None` draws it uniformly in `[0, 2π)` for every frame.
    pub modulation_offset: Option<f64>,
}

impl Default for PhaseModel {
    fn default() -> Self {
        PhaseModel {
            kind: PhaseKind::FixedOffset,
            theta0: None,
            step_std: 0.0,
            modulation_offset: None,
        }
    }
}

impl PhaseModel {
    pub fn none() -> Self {
        PhaseModel {
            kind: PhaseKind::None,
            theta0: Some(0.0),
            step_std: 0.0,
            modulation_offset: Some(0.0),
        }
    }

    pub fn fixed(theta0: f64, modulation_offset: f64) -> Self {
        PhaseModel {
            kind: PhaseKind::FixedOffset,
            theta0: Some(theta0),
            step_std: 0.0,
            modulation_offset: Some(modulation_offset),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.step_std >= 0.0) || !self.step_std.is_finite() {
            return Err(invalid(format!(
                "phase.step_std must be non-negative, got {}",
                self.step_std
            )));
        }
        Ok(())
    }
}

/// Draws one frame's symbols and passes each `(a_x, a_p, X, P)` to `sink`.
fn simulate_symbols<F: FnMut(usize, [f64; 4], f64)>(
    p: &ProtocolParams,
    n: usize,
    phase: &PhaseModel,
    seed: u64,
    mut sink: F,
) -> Result<(f64, f64)> {
    p.validate()?;
    phase.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (theta0, offset) = match phase.kind {
        PhaseKind::None => (0.0, 0.0),
        _ => {
            let th = match phase.theta0 {
                Some(t) => t,
                None => rng.random_range(-FRAC_PI_2..FRAC_PI_2),
            };
            let off = match phase.modulation_offset {
                Some(o) => o,
                None => rng.random_range(0.0..TAU),
            };
            (th, off)
        }
    };
    let sd_m = p.source.v_mod.sqrt();
    let (sd_sx, sd_sp) = (
        p.source.effective_v_sqz().sqrt(),
        p.source.anti_squeezed_variance().sqrt(),
    );
    let eta = p.channel.eta;
    let se = eta.sqrt();
    // Source quadrature noise and channel excess noise both enter before the receiver
    // rotation, so each quadrature gets a single Gaussian carrying their summed variance.
    let sd_nx = (eta * (sd_sx * sd_sx + p.channel.eps_x)).sqrt();
    let sd_np = (eta * (sd_sp * sd_sp + p.channel.eps_p)).sqrt();
    let tau = p.detector.tau;
    let gain = (0.5 * tau).sqrt();
    // Loss vacuum, detector thermal noise and heterodyne vacuum are isotropic, so they
    // are added as one Gaussian per output quadrature.
    let sd_iso = (0.5 * (tau * (1.0 - eta) + (1.0 - tau) * p.detector.v_d + 1.0)).sqrt();
    let (so, co) = offset.sin_cos();
    let walk = phase.kind == PhaseKind::RandomWalk && phase.step_std > 0.0;
    let mut theta = theta0;
    let (mut st, mut ct) = theta.sin_cos();
    for k in 0..n {
        if walk && k > 0 {
            let step: f64 = rng.sample(StandardNormal);
            theta += phase.step_std * step;
            (st, ct) = theta.sin_cos();
        }
        let z: [f64; 6] = std::array::from_fn(|_| rng.sample(StandardNormal));
        let ax = sd_m * z[0];
        let ap = sd_m * z[1];
        let dx = co * ax - so * ap;
        let dp = so * ax + co * ap;
        let yx = se * dx + sd_nx * z[2];
        let yp = se * dp + sd_np * z[3];
        let rx = ct * yx - st * yp;
        let rp = st * yx + ct * yp;
        let bx = gain * rx + sd_iso * z[4];
        let bp = gain * rp + sd_iso * z[5];
        sink(k, [ax, ap, bx, bp], theta);
    }
    Ok((theta0, offset))
}

/// Generates a frame of `n` symbols. The same seed always yields the same frame.
pub fn generate_frame(
    p: &ProtocolParams,
    n: usize,
    phase: &PhaseModel,
    seed: u64,
) -> Result<SampleFrame> {
    if n == 0 {
        return Err(invalid("frame length must be positive"));
    }
    let mut cols: [Vec<f64>; 4] = std::array::from_fn(|_| Vec::with_capacity(n));
    let walk = phase.kind == PhaseKind::RandomWalk && phase.step_std > 0.0;
    let mut thetas = Vec::with_capacity(if walk { n } else { 0 });
    let (theta0, offset) = simulate_symbols(p, n, phase, seed, |_, v, th| {
        for k in 0..4 {
            cols[k].push(v[k]);
        }
        if walk {
            thetas.push(th);
        }
    })?;
    let [ax, ap, bx, bp] = cols;
    let mut f = SampleFrame::new(ax, ap, bx, bp)?;
    f.seed = seed;
    f.truth = Some(FrameTruth {
        eta: p.channel.eta,
        eps_x: p.channel.eps_x,
        eps_p: p.channel.eps_p,
        theta0,
        theta: thetas,
        modulation_offset: offset,
    });
    Ok(f)
}

/// Raw moments of a frame, identical to `generate_frame(..).moments()` up to rounding,
/// without storing the samples.
pub fn generate_frame_moments(
    p: &ProtocolParams,
    n: usize,
    phase: &PhaseModel,
    seed: u64,
) -> Result<(Moments, f64, f64)> {
    if n == 0 {
        return Err(invalid("frame length must be positive"));
    }
    // Per-frame raw sums are accurate here: every column has zero mean.
    let mut s1 = [0.0f64; 4];
    let mut s2 = [[0.0f64; 4]; 4];
    let (th, off) = simulate_symbols(p, n, phase, seed, |_, v, _| {
        for r in 0..4 {
            s1[r] += v[r];
            for c in r..4 {
                s2[r][c] += v[r] * v[c];
            }
        }
    })?;
    for r in 0..4 {
        for c in 0..r {
            s2[r][c] = s2[c][r];
        }
    }
    Ok((Moments::from_raw_sums(n as u64, s1, s2), th, off))
}

fn rot(theta: f64) -> Matrix2<f64> {
    let (s, c) = theta.sin_cos();
    Matrix2::new(c, -s, s, c)
}

fn block_transform(alice: Matrix2<f64>, bob: Matrix2<f64>) -> Matrix4<f64> {
    let mut t = Matrix4::zeros();
    t.fixed_view_mut::<2, 2>(0, 0).copy_from(&alice);
    t.fixed_view_mut::<2, 2>(2, 2).copy_from(&bob);
    t
}

fn wrap_half_turn(theta: f64) -> f64 {
    // Second moments cannot tell θ from θ + π; report θ in [−π/2, π/2).
    (theta + FRAC_PI_2).rem_euclid(PI) - FRAC_PI_2
}

fn golden_section_min<F: Fn(f64) -> f64>(f: F, mut lo: f64, mut hi: f64, tol: f64) -> f64 {
    let g = 0.5 * (5f64.sqrt() - 1.0);
    let mut a = hi - g * (hi - lo);
    let mut b = lo + g * (hi - lo);
    let (mut fa, mut fb) = (f(a), f(b));
    while hi - lo > tol {
        if fa < fb {
            hi = b;
            b = a;
            fb = fa;
            a = hi - g * (hi - lo);
            fa = f(a);
        } else {
            lo = a;
            a = b;
            fa = fb;
            b = lo + g * (hi - lo);
            fb = f(b);
        }
    }
    0.5 * (lo + hi)
}

/// Rotation θ̂ such that Bob's outcomes rotated by `R(−θ̂)` are uncorrelated, with the
/// low-variance quadrature on X. `bob` is Bob's 2x2 sample covariance over `n` symbols.
pub fn alignment_angle(bob: &Matrix2<f64>, n: u64) -> Result<f64> {
    if (n as usize) < MIN_DSP_SYMBOLS {
        return Err(invalid(format!(
            "alignment needs at least {MIN_DSP_SYMBOLS} symbols"
        )));
    }
    let (a, b, c) = (bob[(0, 0)], bob[(1, 1)], 0.5 * (bob[(0, 1)] + bob[(1, 0)]));
    let amplitude = 0.5 * ((a - b).powi(2) + 4.0 * c * c).sqrt();
    let se = 0.5 * (a + b) / (n as f64).sqrt();
    if amplitude < DEGENERACY_SIGMAS * se {
        return Err(Error::DegenerateAlignment(format!(
            "quadrature asymmetry {amplitude:.3e} is within noise ({se:.3e}); \
             the ensemble looks symmetric"
        )));
    }
    let cross = |th: f64| ((2.0 * th).cos() * c - 0.5 * (2.0 * th).sin() * (a - b)).abs();
    let step = 0.5f64.to_radians();
    let grid = (0..180).map(|k| -FRAC_PI_4 + step * k as f64);
    let coarse = grid
        .min_by(|x, y| cross(*x).total_cmp(&cross(*y)))
        .expect("non-empty grid");
    let mut theta = golden_section_min(cross, coarse - step, coarse + step, 1e-12);
    let r = rot(-theta);
    let rotated = r * Matrix2::new(a, c, c, b) * r.transpose();
    if rotated[(0, 0)] > rotated[(1, 1)] {
        theta += FRAC_PI_2;
    }
    Ok(wrap_half_turn(theta))
}

fn rotate_pairs(xs: &mut [f64], ps: &mut [f64], theta: f64) {
    let (s, c) = theta.sin_cos();
    for (x, p) in xs.iter_mut().zip(ps.iter_mut()) {
        let (x0, p0) = (*x, *p);
        *x = c * x0 - s * p0;
        *p = s * x0 + c * p0;
    }
}

/// Finds and removes Bob's quadrature rotation. Returns θ̂ and the aligned frame.
pub fn align_quadratures(frame: &SampleFrame) -> Result<(f64, SampleFrame)> {
    let cov = frame.moments()?.covariance()?;
    let bob = cov.fixed_view::<2, 2>(2, 2).into_owned();
    let theta = alignment_angle(&bob, frame.len() as u64)?;
    let mut out = frame.clone();
    rotate_pairs(&mut out.bob_x, &mut out.bob_p, -theta);
    Ok((theta, out))
}

/// Result of the Alice-side remapping.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Remap {
    /// Rotation applied to Alice's symbols, `a' = R(φ̂) a`, in `[0, 2π)`.
    pub phi: f64,
    /// Per-quadrature covariance between remapped Alice symbols and Bob's outcomes.
    pub c_ab: f64,
    /// Maximum of the summed covariance, `2 Ĉ_AB`.
    pub objective: f64,
}

/// Closed-form maximizer of `Cov(a'_x, X) + Cov(a'_p, P)` over rotations of Alice's symbols.
pub fn remap_from_covariance(cov: &Matrix4<f64>, n: u64) -> Result<Remap> {
    if (n as usize) < MIN_DSP_SYMBOLS {
        return Err(invalid(format!(
            "remapping needs at least {MIN_DSP_SYMBOLS} symbols"
        )));
    }
    let (cxx, cxp, cpx, cpp) = (cov[(0, 2)], cov[(0, 3)], cov[(1, 2)], cov[(1, 3)]);
    let (u, v) = (cxx + cpp, cxp - cpx);
    let m = u.hypot(v);
    let va = 0.5 * (cov[(0, 0)] + cov[(1, 1)]);
    let vb = 0.5 * (cov[(2, 2)] + cov[(3, 3)]);
    let noise = (2.0 * va * vb / n as f64).sqrt();
    if !(m > DEGENERACY_SIGMAS * noise) {
        return Err(Error::Remap(format!(
            "Alice-Bob covariance {m:.3e} is within noise ({noise:.3e})"
        )));
    }
    Ok(Remap {
        phi: v.atan2(u).rem_euclid(TAU),
        c_ab: 0.5 * m,
        objective: m,
    })
}

/// Rotates Alice's symbols to maximize their covariance with Bob's outcomes.
pub fn remap_alice(frame: &SampleFrame) -> Result<(Remap, SampleFrame)> {
    let cov = frame.moments()?.covariance()?;
    let r = remap_from_covariance(&cov, frame.len() as u64)?;
    let mut out = frame.clone();
    rotate_pairs(&mut out.alice_x, &mut out.alice_p, r.phi);
    Ok((r, out))
}

/// DSP outcome for a frame, computed on moments.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrameDsp {
    /// Alignment angle; `None` for coherent frames, which are remapped only.
    pub theta: Option<f64>,
    pub remap: Remap,
    /// Moments of the aligned and remapped frame.
    pub moments: Moments,
}

/// Alignment (squeezed only) then remapping, applied to raw frame moments.
pub fn process_moments(raw: &Moments, protocol: ProtocolKind) -> Result<FrameDsp> {
    let n = raw.count();
    let cov = raw.covariance()?;
    let (theta, aligned) = match protocol {
        ProtocolKind::Squeezed => {
            let bob = cov.fixed_view::<2, 2>(2, 2).into_owned();
            let th = alignment_angle(&bob, n)?;
            (
                Some(th),
                raw.transformed(&block_transform(Matrix2::identity(), rot(-th))),
            )
        }
        ProtocolKind::Coherent => (None, *raw),
    };
    let remap = remap_from_covariance(&aligned.covariance()?, n)?;
    let moments = aligned.transformed(&block_transform(rot(remap.phi), Matrix2::identity()));
    Ok(FrameDsp {
        theta,
        remap,
        moments,
    })
}

/// Everything an end-to-end run needs besides the true protocol parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub frames: usize,
    pub n_per_frame: usize,
    pub phase: PhaseModel,
    pub reconciliation: Reconciliation,
    /// Confidence multiplier of the worst-case bounds; `n` is the total symbol count.
    pub z: f64,
    pub penalty: PenaltyConfig,
    /// Back-to-back calibration, done once per campaign. `None` uses the true source.
    pub calibration: Option<SourceCalibration>,
    pub seed: u64,
}

impl RunConfig {
    pub fn new(
        frames: usize,
        n_per_frame: usize,
        reconciliation: Reconciliation,
        seed: u64,
    ) -> Self {
        RunConfig {
            frames,
            n_per_frame,
            phase: PhaseModel::default(),
            reconciliation,
            z: EstimatorBudget::default().z,
            penalty: PenaltyConfig::default(),
            calibration: None,
            seed,
        }
    }

    pub fn total_symbols(&self) -> f64 {
        self.frames as f64 * self.n_per_frame as f64
    }
}

/// Per-frame record of an end-to-end run.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameRecord {
    pub index: usize,
    pub seed: u64,
    pub theta_true: f64,
    pub modulation_offset_true: f64,
    pub dsp: FrameDsp,
    pub estimate: ChannelEstimate,
}

/// One line of the truth-versus-estimate table.
#[derive(Debug, Clone, PartialEq)]
pub struct TruthRow {
    pub name: &'static str,
    pub truth: f64,
    pub estimate: f64,
    pub sigma: f64,
}

impl TruthRow {
    /// Estimation error in units of the estimator's standard deviation.
    pub fn z_score(&self) -> f64 {
        (self.estimate - self.truth) / self.sigma
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EndToEndReport {
    pub frames: Vec<FrameRecord>,
    pub aggregate: ChannelEstimate,
    pub worst: WorstCase,
    /// Key rate from the estimated parameters.
    pub report: KeyRateReport,
    /// Key rate the analytic model gives for the true parameters at the same data size.
    pub truth_report: KeyRateReport,
    pub truth_table: Vec<TruthRow>,
}

/// Seed of frame `index` in a run seeded with `base`.
pub fn frame_seed(base: u64, index: usize) -> u64 {
    base.wrapping_add(index as u64)
}

/// Worst-case bounds from an aggregate estimate. The excess-noise bounds start from the
/// unclipped estimates.
pub fn worst_case_from_estimate(est: &ChannelEstimate, z: f64) -> WorstCase {
    let raw = est.eta.min(1.0) - z * est.sigma_eta;
    WorstCase {
        eta_low: raw.max(crate::finite_size::ETA_FLOOR),
        eps_x_up: est.eps_x + z * est.sigma_eps_x,
        eps_p_up: est.eps_p + z * est.sigma_eps_p,
        sigma_eta: est.sigma_eta,
        sigma_eps_x: est.sigma_eps_x,
        sigma_eps_p: est.sigma_eps_p,
        no_key: raw <= 0.0,
    }
}

/// Channel estimate, worst-case bounds and key-rate report for DSP-processed moments
/// pooled over any number of frames. The data size is the pooled symbol count.
///
/// Only the source, detector and modulation variance of `p` are used; the channel is
/// what gets estimated.
pub fn evaluate_aggregate(
    p: &ProtocolParams,
    total: &Moments,
    cfg: &RunConfig,
) -> Result<(ChannelEstimate, WorstCase, KeyRateReport)> {
    let cal = cfg
        .calibration
        .unwrap_or_else(|| SourceCalibration::exact(&p.source));
    let v_mod = p.source.v_mod;
    let aggregate = estimate_channel_from_moments(total, &cal, &p.detector, v_mod)?;
    let worst = worst_case_from_estimate(&aggregate, cfg.z);
    let source = match p.protocol() {
        ProtocolKind::Squeezed => SourceParams::squeezed(cal.v_sqz_pure, cal.delta_v_an, v_mod)?,
        ProtocolKind::Coherent => SourceParams::coherent(v_mod)?,
    };
    let nominal = ProtocolParams::new(source, aggregate.clipped_channel()?, p.detector)?;
    let n = total.count() as f64;
    let report =
        report_from_worst_case(&nominal, &worst, &cfg.reconciliation, n, &cfg.penalty, None)?;
    Ok((aggregate, worst, report))
}

/// Key rate the analytic model gives for the true parameters over `n` symbols.
pub fn truth_report(p: &ProtocolParams, cfg: &RunConfig, n: f64) -> Result<KeyRateReport> {
    let budget = EstimatorBudget {
        n,
        z: cfg.z,
        ..Default::default()
    };
    let wc = crate::finite_size::worst_case(p, &budget)?;
    report_from_worst_case(p, &wc, &cfg.reconciliation, n, &cfg.penalty, None)
}

/// True channel parameters next to their aggregate estimates.
pub fn truth_table(p: &ProtocolParams, est: &ChannelEstimate) -> Vec<TruthRow> {
    vec![
        TruthRow {
            name: "eta",
            truth: p.channel.eta,
            estimate: est.eta,
            sigma: est.sigma_eta,
        },
        TruthRow {
            name: "eps_x",
            truth: p.channel.eps_x,
            estimate: est.eps_x,
            sigma: est.sigma_eps_x,
        },
        TruthRow {
            name: "eps_p",
            truth: p.channel.eps_p,
            estimate: est.eps_p,
            sigma: est.sigma_eps_p,
        },
    ]
}

/// Generate, align, remap and estimate every frame, then bound the channel and
/// evaluate the operational key rate of the aggregate.
///
/// Frames run in parallel but are merged in index order, so the result does not depend
/// on the number of worker threads.
pub fn end_to_end_run(p: &ProtocolParams, cfg: &RunConfig) -> Result<EndToEndReport> {
    p.validate()?;
    if cfg.frames == 0 || cfg.n_per_frame < MIN_DSP_SYMBOLS {
        return Err(invalid(format!(
            "need at least one frame of at least {MIN_DSP_SYMBOLS} symbols"
        )));
    }
    let cal = cfg
        .calibration
        .unwrap_or_else(|| SourceCalibration::exact(&p.source));
    let v_mod = p.source.v_mod;
    let records: Vec<FrameRecord> = (0..cfg.frames)
        .into_par_iter()
        .map(|index| {
            let seed = frame_seed(cfg.seed, index);
            let (raw, theta_true, offset) =
                generate_frame_moments(p, cfg.n_per_frame, &cfg.phase, seed)?;
            let dsp = process_moments(&raw, p.protocol())?;
            let estimate = estimate_channel_from_moments(&dsp.moments, &cal, &p.detector, v_mod)?;
            Ok(FrameRecord {
                index,
                seed,
                theta_true,
                modulation_offset_true: offset,
                dsp,
                estimate,
            })
        })
        .collect::<Result<_>>()?;

    let mut total = Moments::new();
    for r in &records {
        total.merge(&r.dsp.moments);
    }
    let (aggregate, worst, report) = evaluate_aggregate(p, &total, cfg)?;
    let truth_report = truth_report(p, cfg, total.count() as f64)?;
    let truth_table = truth_table(p, &aggregate);
    Ok(EndToEndReport {
        frames: records,
        aggregate,
        worst,
        report,
        truth_report,
        truth_table,
    })
}

/// Estimated channel of an end-to-end run, as protocol parameters (for reporting).
pub fn estimated_params(p: &ProtocolParams, est: &ChannelEstimate) -> Result<ProtocolParams> {
    Ok(p.with_channel(ChannelParams::new(
        est.eta.min(1.0),
        est.eps_x.max(0.0),
        est.eps_p.max(0.0),
    )?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::protocol::DetectorParams;

    fn km30_high_noise() -> ProtocolParams {
        ProtocolParams::new(
            SourceParams::squeezed(0.427, 3.119, 1.067).unwrap(),
            ChannelParams::new(0.410, 0.117, 0.092).unwrap(),
            DetectorParams::new(0.68, 1.07).unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn seed_reproduces_frame() {
        let p = km30_high_noise();
        let a = generate_frame(&p, 2000, &PhaseModel::default(), 9).unwrap();
        let b = generate_frame(&p, 2000, &PhaseModel::default(), 9).unwrap();
        let c = generate_frame(&p, 2000, &PhaseModel::default(), 10).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.bob_x, c.bob_x);
    }

    #[test]
    fn streamed_moments_match_frame() {
        let p = km30_high_noise();
        let phase = PhaseModel {
            kind: PhaseKind::RandomWalk,
            step_std: 1e-4,
            ..Default::default()
        };
        let f = generate_frame(&p, 5000, &phase, 3).unwrap();
        let (m, th, off) = generate_frame_moments(&p, 5000, &phase, 3).unwrap();
        let truth = f.truth.as_ref().unwrap();
        assert_eq!((th, off), (truth.theta0, truth.modulation_offset));
        assert_eq!(truth.theta.len(), 5000);
        let d = (m.covariance().unwrap() - f.moments().unwrap().covariance().unwrap()).amax();
        assert!(d < 1e-12, "{d}");
    }

    #[test]
    fn vacuum_through_ideal_link() {
        let p = ProtocolParams::new(
            SourceParams::coherent(0.0).unwrap(),
            ChannelParams::new(1.0, 0.0, 0.0).unwrap(),
            DetectorParams::new(1.0, 1.0).unwrap(),
        )
        .unwrap();
        let f = generate_frame(&p, 200_000, &PhaseModel::none(), 1).unwrap();
        let cov = f.moments().unwrap().covariance().unwrap();
        let se = (2.0 / 200_000f64).sqrt();
        assert!((cov[(2, 2)] - 1.0).abs() < 4.0 * se);
        assert!((cov[(3, 3)] - 1.0).abs() < 4.0 * se);
        assert_eq!(cov[(0, 0)], 0.0);
    }

    #[test]
    fn alignment_round_trip_is_exact() {
        let p = km30_high_noise();
        let f = generate_frame(&p, 20_000, &PhaseModel::fixed(0.0, 0.0), 5).unwrap();
        let (_, aligned) = align_quadratures(&f).unwrap();
        let mut rotated = aligned.clone();
        rotate_pairs(&mut rotated.bob_x, &mut rotated.bob_p, 0.3);
        let (th, back) = align_quadratures(&rotated).unwrap();
        assert!((th - 0.3).abs() < 1e-9);
        for k in 0..aligned.len() {
            assert!((back.bob_x[k] - aligned.bob_x[k]).abs() < 1e-9);
            assert!((back.bob_p[k] - aligned.bob_p[k]).abs() < 1e-9);
        }
    }

    #[test]
    fn alignment_rejects_symmetric_ensemble() {
        let p = ProtocolParams::new(
            SourceParams::coherent(1.067).unwrap(),
            ChannelParams::new(0.41, 0.06, 0.06).unwrap(),
            DetectorParams::new(0.68, 1.07).unwrap(),
        )
        .unwrap();
        let f = generate_frame(&p, 100_000, &PhaseModel::fixed(0.2, 0.0), 2).unwrap();
        assert!(matches!(
            align_quadratures(&f),
            Err(Error::DegenerateAlignment(_))
        ));
    }

    #[test]
    fn alignment_residual_is_zero() {
        let p = km30_high_noise();
        let f = generate_frame(&p, 50_000, &PhaseModel::fixed(0.4, 1.0), 11).unwrap();
        let (_, aligned) = align_quadratures(&f).unwrap();
        let c = aligned.moments().unwrap().covariance().unwrap();
        let r = c[(2, 3)] / (c[(2, 2)] * c[(3, 3)]).sqrt();
        assert!(r.abs() < 3.0 / (50_000f64).sqrt() && c[(2, 2)] < c[(3, 3)]);
    }

    #[test]
    fn remap_matches_brute_force_and_singular_values() {
        let p = km30_high_noise();
        let f = generate_frame(&p, 50_000, &PhaseModel::fixed(0.0, 0.7), 8).unwrap();
        let cov = f.moments().unwrap().covariance().unwrap();
        let r = remap_from_covariance(&cov, 50_000).unwrap();
        let obj = |phi: f64| {
            let (s, c) = phi.sin_cos();
            c * (cov[(0, 2)] + cov[(1, 3)]) + s * (cov[(0, 3)] - cov[(1, 2)])
        };
        let (best_phi, best) = (0..36_000)
            .map(|k| (k as f64 * 0.01).to_radians())
            .map(|phi| (phi, obj(phi)))
            .max_by(|a, b| a.1.total_cmp(&b.1))
            .unwrap();
        assert!((best_phi - r.phi).abs() < 0.01f64.to_radians());
        assert!(best <= r.objective && r.objective - best < 1e-8);
        let cross = cov.fixed_view::<2, 2>(0, 2).into_owned();
        let sv = cross.singular_values();
        let sign = cross.determinant().signum();
        assert!((r.objective - (sv[0] + sign * sv[1])).abs() < 1e-12);
        assert!((r.phi - 0.7).abs() < 0.02);
    }

    #[test]
    fn remap_errors_without_correlation() {
        let mut p = km30_high_noise();
        p.channel.eta = 1e-9;
        let f = generate_frame(&p, 20_000, &PhaseModel::none(), 4).unwrap();
        assert!(matches!(remap_alice(&f), Err(Error::Remap(_))));
    }

    #[test]
    fn moment_pipeline_matches_sample_pipeline() {
        let p = km30_high_noise();
        let f = generate_frame(&p, 30_000, &PhaseModel::fixed(-0.5, 2.0), 21).unwrap();
        let (th, aligned) = align_quadratures(&f).unwrap();
        let (r, remapped) = remap_alice(&aligned).unwrap();
        let dsp = process_moments(&f.moments().unwrap(), ProtocolKind::Squeezed).unwrap();
        assert!((dsp.theta.unwrap() - th).abs() < 1e-12);
        assert!((dsp.remap.phi - r.phi).abs() < 1e-12);
        let d =
            dsp.moments.covariance().unwrap() - remapped.moments().unwrap().covariance().unwrap();
        assert!(d.amax() < 1e-12);
    }

    #[test]
    fn golden_section_finds_minimum() {
        let x = golden_section_min(|t| (t - 0.123).abs(), -1.0, 1.0, 1e-12);
        assert!((x - 0.123).abs() < 1e-11);
    }
}
