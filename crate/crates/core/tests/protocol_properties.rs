use sqzkey::finite_size::{finite_size_key_rate, EstimatorBudget, PenaltyConfig};
use sqzkey::gaussian::{vacuum_state, Quadrature};
use sqzkey::protocol::{
    apply_channel, apply_detector, asymptotic_key_rate, holevo_bound,
    mutual_information_per_quadrature, pm_covariance, squeezed_detected_state, ChannelParams,
    DetectorParams, ProtocolParams, SourceParams,
};

fn det() -> DetectorParams {
    DetectorParams::new(0.68, 1.07).unwrap()
}

fn sqz(eta: f64, ex: f64, ep: f64) -> ProtocolParams {
    ProtocolParams::new(
        SourceParams::squeezed(0.417, 3.029, 1.372).unwrap(),
        ChannelParams::new(eta, ex, ep).unwrap(),
        det(),
    )
    .unwrap()
}

fn coh(eta: f64, ex: f64, ep: f64) -> ProtocolParams {
    ProtocolParams::new(
        SourceParams::coherent(1.372).unwrap(),
        ChannelParams::new(eta, ex, ep).unwrap(),
        det(),
    )
    .unwrap()
}

#[test]
fn km50_mutual_information_per_quadrature() {
    let s = mutual_information_per_quadrature(&sqz(0.166, 0.041, 0.037)).unwrap();
    let c = mutual_information_per_quadrature(&coh(0.163, 0.032, 0.031)).unwrap();
    assert!((s / 0.0516 - 1.0).abs() < 0.10, "squeezed {s}");
    assert!((c / 0.0502 - 1.0).abs() < 0.10, "coherent {c}");
}

#[test]
fn detected_state_matches_prepare_and_measure_model() {
    for p in [
        sqz(0.166, 0.041, 0.037),
        sqz(0.7, 0.0, 0.2),
        sqz(1.0, 0.0, 0.0),
    ] {
        let g = squeezed_detected_state(&p).unwrap();
        let pm = pm_covariance(&p).unwrap();
        // Bob's unconditional heterodyne variances live on modes 1 (x port) and 6 (p port).
        assert!((g.variance(1, Quadrature::X) - pm[(2, 2)]).abs() < 1e-10);
        assert!((g.variance(6, Quadrature::P) - pm[(3, 3)]).abs() < 1e-10);
    }
}

#[test]
fn detector_and_channel_compose_on_vacuum() {
    let vac = vacuum_state(2).unwrap();
    let ch = apply_channel(&vac, 1, &ChannelParams::new(0.3, 0.0, 0.0).unwrap()).unwrap();
    let g = apply_detector(&ch, 1, &det()).unwrap();
    let want = 0.68 + 0.32 * 1.07;
    assert!((g.variance(1, Quadrature::X) - want).abs() < 1e-12);
    assert!((g.variance(1, Quadrature::P) - want).abs() < 1e-12);
}

#[test]
fn asymptotic_rate_monotone_on_grids() {
    for make in [sqz as fn(f64, f64, f64) -> ProtocolParams, coh] {
        let mut prev = f64::INFINITY;
        for i in 0..10 {
            let e = 0.01 * i as f64;
            let k = asymptotic_key_rate(&make(0.3, e, e), 0.95).unwrap();
            assert!(k <= prev + 1e-12, "not non-increasing in eps at {e}");
            prev = k;
        }
        let mut prev = -1.0;
        for i in 0..10 {
            let eta = 0.1 + 0.09 * i as f64;
            let k = asymptotic_key_rate(&make(eta, 0.02, 0.02), 0.95).unwrap();
            assert!(k >= prev - 1e-12, "not non-decreasing in eta at {eta}");
            prev = k;
        }
        let mut prev = -1.0;
        for i in 0..10 {
            let beta = 0.8 + 0.02 * i as f64;
            let k = asymptotic_key_rate(&make(0.3, 0.02, 0.02), beta).unwrap();
            assert!(k >= prev - 1e-12, "not non-decreasing in beta at {beta}");
            prev = k;
        }
    }
}

#[test]
fn holevo_monotone_in_each_quadrature_noise() {
    let mut prev_x = 0.0;
    let mut prev_p = 0.0;
    for i in 0..10 {
        let e = 0.02 * i as f64;
        let cx = holevo_bound(&sqz(0.3, e, 0.05)).unwrap();
        let cp = holevo_bound(&sqz(0.3, 0.05, e)).unwrap();
        assert!(cx >= prev_x - 1e-12 && cp >= prev_p - 1e-12);
        prev_x = cx;
        prev_p = cp;
    }
}

#[test]
fn finite_size_below_asymptotic_at_operating_points() {
    let b = EstimatorBudget::default();
    let c = PenaltyConfig::default();
    for p in [
        sqz(0.166, 0.041, 0.037),
        coh(0.163, 0.032, 0.031),
        sqz(0.413, 0.072, 0.107),
    ] {
        let fin = finite_size_key_rate(&p, 0.92, &b, &c).unwrap();
        let asym = asymptotic_key_rate(&p, 0.92).unwrap();
        assert!(fin < asym, "finite {fin} asymptotic {asym}");
    }
}

#[test]
fn km30_low_noise_row() {
    let p = ProtocolParams::new(
        SourceParams::squeezed(0.427, 3.119, 1.067).unwrap(),
        ChannelParams::new(0.413, 0.072, 0.107).unwrap(),
        det(),
    )
    .unwrap();
    let k = finite_size_key_rate(
        &p,
        0.92,
        &EstimatorBudget::default(),
        &PenaltyConfig::default(),
    )
    .unwrap();
    assert!((k / 0.0208 - 1.0).abs() < 0.30, "K = {k}");
    assert!(asymptotic_key_rate(&p, 0.92).unwrap() > k);
}
