//! Minimal CSV output. Fields never contain commas or quotes, so no quoting is needed.

use std::fmt::Write as _;

use sqzkey::finite_size::KeyRateReport;

/// Formats like C's `%.12g`: twelve significant digits, trailing zeros removed,
/// scientific notation for very large or small magnitudes.
pub fn num(x: f64) -> String {
    if x.is_nan() {
        return "nan".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if x == 0.0 {
        return "0".into();
    }
    let sci = format!("{x:.11e}");
    let (mantissa, exp) = sci.split_once('e').expect("exponent present");
    let exp: i32 = exp.parse().expect("integer exponent");
    if !(-4..12).contains(&exp) {
        let m = trim_zeros(mantissa);
        let sign = if exp < 0 { '-' } else { '+' };
        return format!("{m}e{sign}{:02}", exp.abs());
    }
    let decimals = (11 - exp).max(0) as usize;
    trim_zeros(&format!("{x:.decimals$}")).to_string()
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

pub fn opt(x: Option<f64>) -> String {
    x.map(num).unwrap_or_default()
}

/// Rows accumulated in memory and rendered at once.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new<S: Into<String>>(header: impl IntoIterator<Item = S>) -> Self {
        Table {
            header: header.into_iter().map(Into::into).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        writeln!(out, "{}", self.header.join(",")).unwrap();
        for r in &self.rows {
            writeln!(out, "{}", r.join(",")).unwrap();
        }
        out
    }
}

pub const REPORT_COLUMNS: &[&str] = &[
    "i_nominal",
    "i_worst",
    "i_reference",
    "chi_nominal",
    "chi_worst",
    "delta_n",
    "eta_low",
    "eps_x_up",
    "eps_p_up",
    "eps_up",
    "no_key",
    "beta",
    "reconciled_rate",
    "fer",
    "k_asym",
    "k_finite",
    "k_operational",
    "throughput_excl_dsp",
];

pub fn report_fields(r: &KeyRateReport) -> Vec<String> {
    let w = &r.worst;
    vec![
        num(r.i_nominal),
        num(r.i_worst),
        num(r.i_reference),
        num(r.chi_nominal),
        num(r.chi_worst),
        num(r.delta_n),
        num(w.eta_low),
        num(w.eps_x_up),
        num(w.eps_p_up),
        num(w.eps_up()),
        w.no_key.to_string(),
        num(r.beta),
        num(r.reconciled_rate),
        num(r.fer),
        num(r.k_asym),
        num(r.k_finite),
        num(r.k_operational),
        opt(r.throughput_excl_dsp),
    ]
}
