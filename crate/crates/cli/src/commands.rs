//! The four run modes. Each returns its tables and any warnings; the caller writes them.

use std::path::{Path, PathBuf};

use rayon::prelude::*;

use sqzkey::calibration::{b2b_calibrate, estimate_channel_from_moments, SourceCalibration};
use sqzkey::finite_size::{operational_key_rate, KeyRateReport};
use sqzkey::frame::SampleFrame;
use sqzkey::moments::Moments;
use sqzkey::protocol::{ProtocolKind, ProtocolParams};
use sqzkey::simulation::{
    end_to_end_run, evaluate_aggregate, frame_seed, generate_frame, process_moments, truth_report,
    truth_table, EndToEndReport, FrameRecord, RunConfig,
};

use crate::config::{Config, Mode};
use crate::csv::{num, report_fields, Table, REPORT_COLUMNS};
use crate::CliError;

/// Extension of binary frame files.
pub const FRAME_EXT: &str = "sqzf";

/// Tables produced by a run. The first is the primary output; the others carry a
/// suffix appended to the primary file name (`run.csv` gives `run_truth.csv`).
#[derive(Debug, Default)]
pub struct RunOutput {
    pub tables: Vec<(&'static str, Table)>,
    pub warnings: Vec<String>,
}

/// Runs `cfg`. Relative paths inside the config are resolved against `base`.
pub fn run(cfg: &Config, base: &Path) -> Result<RunOutput, CliError> {
    match cfg.mode {
        Mode::Keyrate => keyrate(cfg),
        Mode::Sweep => sweep(cfg),
        Mode::Simulate => simulate(cfg, base),
        Mode::Calibrate => calibrate(cfg, base),
    }
}

fn prefix(kind: ProtocolKind) -> &'static str {
    match kind {
        ProtocolKind::Squeezed => "sqz_",
        ProtocolKind::Coherent => "coh_",
    }
}

fn report_for(cfg: &Config, kind: ProtocolKind) -> Result<KeyRateReport, CliError> {
    let p = cfg.params(kind)?;
    let r = cfg.reconciliation_for(kind)?;
    let t = cfg.throughput.as_ref().map(|t| t.model());
    Ok(operational_key_rate(
        &p,
        &r,
        &cfg.budget()?,
        &cfg.penalty()?,
        t.as_ref(),
    )?)
}

fn keyrate(cfg: &Config) -> Result<RunOutput, CliError> {
    let mut table = Table::new(std::iter::once("protocol").chain(REPORT_COLUMNS.iter().copied()));
    let mut out = RunOutput::default();
    for kind in cfg.protocol.kinds() {
        let r = report_for(cfg, kind)?;
        if r.k_operational == 0.0 {
            out.warnings.push(format!("{kind}: no secret key"));
        }
        let mut row = vec![kind.to_string()];
        row.extend(report_fields(&r));
        table.push(row);
    }
    out.tables.push(("", table));
    Ok(out)
}

/// Applies one sweep coordinate to a copy of the configuration.
fn set_variable(cfg: &mut Config, name: &str, v: f64) -> Result<(), CliError> {
    let mut channels = vec![&mut cfg.channel];
    if let Some(c) = cfg.coherent_channel.as_mut() {
        channels.push(c);
    }
    match name {
        "eta" | "attenuation_db" | "eps" | "eps_x" | "eps_p" | "output_noise" => {
            for ch in channels {
                match name {
                    "eta" => {
                        ch.eta = Some(v);
                        ch.attenuation_db = None;
                    }
                    "attenuation_db" => {
                        ch.attenuation_db = Some(v);
                        ch.eta = None;
                    }
                    "eps" => {
                        ch.eps = Some(v);
                        ch.eps_x = None;
                        ch.eps_p = None;
                        ch.output_noise = None;
                    }
                    "output_noise" => {
                        ch.output_noise = Some(v);
                        ch.eps = None;
                        ch.eps_x = None;
                        ch.eps_p = None;
                    }
                    _ => {
                        if ch.output_noise.is_some() {
                            return Err(CliError::config(format!(
                                "sweeping {name} needs input-referred noise, not output_noise"
                            )));
                        }
                        if let Some(e) = ch.eps.take() {
                            ch.eps_x = Some(e);
                            ch.eps_p = Some(e);
                        }
                        if name == "eps_x" {
                            ch.eps_x = Some(v);
                        } else {
                            ch.eps_p = Some(v);
                        }
                    }
                }
            }
        }
        "beta" | "fer" => {
            let mut recs = vec![&mut cfg.reconciliation];
            if let Some(r) = cfg.coherent_reconciliation.as_mut() {
                recs.push(r);
            }
            for r in recs {
                if name == "fer" {
                    r.fer = v;
                } else if r.n_code.is_some() || r.k.is_some() || r.p.is_some() {
                    return Err(CliError::config(
                        "sweeping beta needs efficiency reconciliation, not a code",
                    ));
                } else {
                    r.beta = Some(v);
                }
            }
        }
        "v_mod" => cfg.source.v_mod = v,
        "v_sqz" => cfg.source.v_sqz = v,
        "squeezing_db" => cfg.source.v_sqz = 10f64.powf(-v / 10.0),
        "delta_v_an" => cfg.source.delta_v_an = v,
        "tau" => cfg.detector.tau = v,
        "v_d" => {
            cfg.detector.v_d = Some(v);
            cfg.detector.t = None;
        }
        "t" => {
            cfg.detector.t = Some(v);
            cfg.detector.v_d = None;
        }
        "n" => cfg.estimation.n = v,
        other => return Err(CliError::config(format!("unknown sweep variable {other}"))),
    }
    Ok(())
}

fn sweep(cfg: &Config) -> Result<RunOutput, CliError> {
    let axes = &cfg.sweep;
    let values: Vec<Vec<f64>> = axes.iter().map(|a| a.values()).collect();
    let points: Vec<Vec<f64>> = match values.as_slice() {
        [a] => a.iter().map(|&x| vec![x]).collect(),
        [a, b] => a
            .iter()
            .flat_map(|&x| b.iter().map(move |&y| vec![x, y]))
            .collect(),
        _ => {
            return Err(CliError::config(
                "sweep mode needs one or two [[sweep]] axes",
            ))
        }
    };
    let kinds = cfg.protocol.kinds();
    let rows: Vec<Vec<KeyRateReport>> = points
        .par_iter()
        .map(|pt| {
            let mut c = cfg.clone();
            for (axis, &v) in axes.iter().zip(pt) {
                set_variable(&mut c, &axis.variable, v)?;
            }
            kinds
                .iter()
                .map(|&k| report_for(&c, k))
                .collect::<Result<Vec<_>, _>>()
                .map_err(|e| at_point(e, axes, pt))
        })
        .collect::<Result<_, _>>()?;

    let mut header: Vec<String> = axes.iter().map(|a| a.variable.clone()).collect();
    for &k in &kinds {
        header.extend(REPORT_COLUMNS.iter().map(|c| format!("{}{c}", prefix(k))));
    }
    let both = kinds.len() == 2;
    if both {
        header.push("k_diff".into());
    }
    let mut table = Table::new(header);
    let mut out = RunOutput::default();
    let mut no_key = 0;
    for (pt, reports) in points.iter().zip(&rows) {
        let mut row: Vec<String> = pt.iter().map(|&v| num(v)).collect();
        for r in reports {
            row.extend(report_fields(r));
            no_key += usize::from(r.k_operational == 0.0);
        }
        if both {
            row.push(num(reports[0].k_operational - reports[1].k_operational));
        }
        table.push(row);
    }
    if no_key > 0 {
        out.warnings.push(format!(
            "{no_key} of {} evaluations give no secret key",
            points.len() * kinds.len()
        ));
    }
    out.tables.push(("", table));
    Ok(out)
}

fn at_point(e: CliError, axes: &[crate::config::Axis], pt: &[f64]) -> CliError {
    let loc: Vec<String> = axes
        .iter()
        .zip(pt)
        .map(|(a, v)| format!("{} = {}", a.variable, num(*v)))
        .collect();
    let loc = loc.join(", ");
    match e {
        CliError::Config(m) => CliError::Config(format!("at {loc}: {m}")),
        CliError::Numeric(sqzkey::Error::InvalidArgument(m)) => {
            CliError::Config(format!("at {loc}: {m}"))
        }
        CliError::Numeric(err) => {
            eprintln!("error at {loc}");
            CliError::Numeric(err)
        }
        other => other,
    }
}

fn frame_path(dir: &Path, index: usize) -> PathBuf {
    dir.join(format!("frame_{index:06}.{FRAME_EXT}"))
}

fn process_frame(
    p: &ProtocolParams,
    cal: &SourceCalibration,
    frame: &SampleFrame,
    index: usize,
) -> Result<FrameRecord, CliError> {
    let dsp = process_moments(&frame.moments()?, p.protocol())?;
    let estimate = estimate_channel_from_moments(&dsp.moments, cal, &p.detector, p.source.v_mod)?;
    let (theta_true, offset) = frame
        .truth
        .as_ref()
        .map_or((f64::NAN, f64::NAN), |t| (t.theta0, t.modulation_offset));
    Ok(FrameRecord {
        index,
        seed: frame.seed,
        theta_true,
        modulation_offset_true: offset,
        dsp,
        estimate,
    })
}

/// Aggregates per-frame records the way an end-to-end run does. Without ground truth
/// (replayed frames) the truth report and table are omitted.
fn aggregate_records(
    p: &ProtocolParams,
    rc: &RunConfig,
    frames: Vec<FrameRecord>,
    with_truth: bool,
) -> Result<EndToEndReport, CliError> {
    let mut total = Moments::new();
    for r in &frames {
        total.merge(&r.dsp.moments);
    }
    let (aggregate, worst, report) = evaluate_aggregate(p, &total, rc)?;
    let n = total.count() as f64;
    let truth = if with_truth {
        truth_report(p, rc, n)?
    } else {
        report.clone()
    };
    Ok(EndToEndReport {
        truth_table: if with_truth {
            truth_table(p, &aggregate)
        } else {
            Vec::new()
        },
        frames,
        aggregate,
        worst,
        report,
        truth_report: truth,
    })
}

fn generate_and_write(
    p: &ProtocolParams,
    rc: &RunConfig,
    cal: &SourceCalibration,
    dir: &Path,
) -> Result<Vec<FrameRecord>, CliError> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    (0..rc.frames)
        .into_par_iter()
        .map(|index| {
            let frame = generate_frame(p, rc.n_per_frame, &rc.phase, frame_seed(rc.seed, index))?;
            let path = frame_path(dir, index);
            let file = std::fs::File::create(&path).map_err(|e| CliError::io(&path, e))?;
            frame.write_to(std::io::BufWriter::new(file))?;
            process_frame(p, cal, &frame, index)
        })
        .collect()
}

fn replay(
    p: &ProtocolParams,
    cal: &SourceCalibration,
    dir: &Path,
) -> Result<Vec<FrameRecord>, CliError> {
    let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| CliError::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == FRAME_EXT))
        .collect();
    paths.sort();
    if paths.is_empty() {
        return Err(CliError::config(format!(
            "no .{FRAME_EXT} files in {}",
            dir.display()
        )));
    }
    paths
        .par_iter()
        .enumerate()
        .map(|(index, path)| {
            let file = std::fs::File::open(path).map_err(|e| CliError::io(path, e))?;
            let frame = SampleFrame::read_from(std::io::BufReader::new(file))
                .map_err(|e| CliError::config(format!("{}: {e}", path.display())))?;
            process_frame(p, cal, &frame, index)
        })
        .collect()
}

fn simulate(cfg: &Config, base: &Path) -> Result<RunOutput, CliError> {
    let kind = cfg.protocol.kinds()[0];
    let p = cfg.params(kind)?;
    let mut out = RunOutput::default();
    let calibration = match (&cfg.b2b, kind) {
        (Some(b), ProtocolKind::Squeezed) => Some(b2b_calibrate(&b.measurement(base)?)?),
        (Some(_), ProtocolKind::Coherent) => {
            out.warnings
                .push("[b2b] is ignored for the coherent protocol".into());
            None
        }
        (None, _) => None,
    };
    let rc = cfg.run_config(kind, calibration)?;
    let cal = calibration.unwrap_or_else(|| SourceCalibration::exact(&p.source));
    let sim = &cfg.simulation;
    let with_truth = sim.replay_dir.is_none();
    let run = if let Some(dir) = &sim.replay_dir {
        aggregate_records(&p, &rc, replay(&p, &cal, &base.join(dir))?, false)?
    } else if let Some(dir) = &sim.frame_dir {
        aggregate_records(
            &p,
            &rc,
            generate_and_write(&p, &rc, &cal, &base.join(dir))?,
            true,
        )?
    } else {
        end_to_end_run(&p, &rc)?
    };

    let mut frames = Table::new([
        "index",
        "seed",
        "theta_true_deg",
        "modulation_offset_true_deg",
        "theta_hat_deg",
        "remap_phi_deg",
        "eta",
        "eps_x",
        "eps_p",
        "sigma_eta",
        "sigma_eps_x",
        "sigma_eps_p",
        "v_mod",
        "c_ab",
    ]);
    for f in &run.frames {
        let e = &f.estimate;
        frames.push(vec![
            f.index.to_string(),
            f.seed.to_string(),
            num(f.theta_true.to_degrees()),
            num(f.modulation_offset_true.to_degrees()),
            f.dsp.theta.map(|t| num(t.to_degrees())).unwrap_or_default(),
            num(f.dsp.remap.phi.to_degrees()),
            num(e.eta),
            num(e.eps_x),
            num(e.eps_p),
            num(e.sigma_eta),
            num(e.sigma_eps_x),
            num(e.sigma_eps_p),
            num(e.v_mod),
            num(e.c_ab),
        ]);
    }
    out.tables.push(("", frames));

    if with_truth {
        let mut truth = Table::new(["quantity", "truth", "estimate", "sigma", "z_score"]);
        for r in &run.truth_table {
            truth.push(vec![
                r.name.into(),
                num(r.truth),
                num(r.estimate),
                num(r.sigma),
                num(r.z_score()),
            ]);
        }
        out.tables.push(("_truth", truth));
    }

    let mut report = Table::new(
        ["evaluation", "symbols", "eta_hat", "eps_x_hat", "eps_p_hat"]
            .into_iter()
            .chain(REPORT_COLUMNS.iter().copied()),
    );
    let agg = &run.aggregate;
    let ((_, clip_x), (_, clip_p)) = agg.reported_eps();
    let mut rows = vec![("estimated", &run.report, agg.eta, agg.eps_x, agg.eps_p)];
    if with_truth {
        rows.push((
            "analytic",
            &run.truth_report,
            p.channel.eta,
            p.channel.eps_x,
            p.channel.eps_p,
        ));
    }
    for (label, r, eta, ex, ep) in rows {
        let mut row = vec![
            label.to_string(),
            agg.n.to_string(),
            num(eta),
            num(ex),
            num(ep),
        ];
        row.extend(report_fields(r));
        report.push(row);
    }
    out.tables.push(("_report", report));

    for (clipped, q, v) in [(clip_x, "eps_x", agg.eps_x), (clip_p, "eps_p", agg.eps_p)] {
        if clipped {
            out.warnings.push(format!(
                "aggregate {q} estimate {} is negative and is clipped to 0 in the asymptotic terms",
                num(v)
            ));
        }
    }
    if run.report.k_operational == 0.0 {
        out.warnings
            .push(format!("{kind}: no secret key from the estimated channel"));
    }
    Ok(out)
}

fn calibrate(cfg: &Config, base: &Path) -> Result<RunOutput, CliError> {
    let b = cfg
        .b2b
        .as_ref()
        .ok_or_else(|| CliError::config("calibrate mode needs a [b2b] table"))?;
    let cal = b2b_calibrate(&b.measurement(base)?)?;
    let mut t = Table::new(["v_sqz_pure", "delta_v_an"]);
    t.push(vec![num(cal.v_sqz_pure), num(cal.delta_v_an)]);
    Ok(RunOutput {
        tables: vec![("", t)],
        warnings: Vec::new(),
    })
}
