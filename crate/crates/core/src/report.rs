//! Report documents and plot-data CSV files.
//!
//! All CSV numbers are written with 9 significant digits through
//! [`fmt_sig9`], so identical inputs give byte-identical files.

use std::io::Write;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::Result;
use crate::models::{AdCurve, AdMode};
use crate::network::NodeId;
use crate::planner::{AdCalibration, CompensationCoefficient, CompensationPlan, NodeRanking};
use crate::stability::{CrossoverEvent, Direction, EigenTrace, Verdict};

pub const TRACE_HEADER: [&str; 4] = ["f_hz", "trace_id", "re_lambda", "im_lambda"];
pub const CROSSOVER_HEADER: [&str; 4] = ["trace_id", "f_cr_hz", "re_lambda", "verdict"];
pub const K_C_HEADER: [&str; 5] = ["trace_id", "f_cr_hz", "node_id", "re_k_c", "im_k_c"];
pub const AD_CURVE_HEADER: [&str; 7] = ["param", "value", "f_hz", "re_y_ad", "im_y_ad", "im_re_ratio", "mode"];
pub const COMPARISON_HEADER: [&str; 5] = ["case", "trace_id", "f_cr_hz", "re_lambda", "verdict"];

/// Formats like C's `%.9g`.
pub fn fmt_sig9(x: f64) -> String {
    if x == 0.0 {
        return "0".into();
    }
    if !x.is_finite() {
        return if x.is_nan() {
            "nan".into()
        } else if x > 0.0 {
            "inf".into()
        } else {
            "-inf".into()
        };
    }
    let sci = format!("{x:.8e}");
    let (mant, exp) = sci.split_once('e').expect("exponent");
    let exp: i32 = exp.parse().expect("exponent digits");
    if (-5..9).contains(&exp) {
        let s = format!("{:.*}", (8 - exp) as usize, x);
        trim_fraction(&s).to_string()
    } else {
        format!("{}e{}{:02}", trim_fraction(mant), if exp < 0 { '-' } else { '+' }, exp.abs())
    }
}

fn trim_fraction(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

fn verdict_str(v: Verdict) -> &'static str {
    match v {
        Verdict::Stable => "stable",
        Verdict::Critical => "critical",
    }
}

/// Per-trace eigenvalue curves, ordered by trace then frequency.
pub fn write_traces_csv<W: Write>(w: W, traces: &[EigenTrace]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(TRACE_HEADER)?;
    for t in traces {
        for p in &t.points {
            out.write_record([
                fmt_sig9(p.f_hz),
                t.id.to_string(),
                fmt_sig9(p.lambda.re),
                fmt_sig9(p.lambda.im),
            ])?;
        }
    }
    out.flush()?;
    Ok(())
}

pub fn write_crossovers_csv<W: Write>(w: W, events: &[CrossoverEvent]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(CROSSOVER_HEADER)?;
    for e in events {
        out.write_record([
            e.trace.to_string(),
            fmt_sig9(e.f_cr_hz),
            fmt_sig9(e.lambda.re),
            verdict_str(e.verdict).to_string(),
        ])?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_k_c_csv<W: Write>(w: W, rows: &[CompensationCoefficient]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(K_C_HEADER)?;
    for r in rows {
        out.write_record([
            r.trace.to_string(),
            fmt_sig9(r.f_cr_hz),
            r.node.to_string(),
            fmt_sig9(r.k_c.re),
            fmt_sig9(r.k_c.im),
        ])?;
    }
    out.flush()?;
    Ok(())
}

/// A labelled family of damper curves.
pub struct AdCurveSet<'a> {
    pub param: &'a str,
    pub mode: AdMode,
    pub curves: &'a [AdCurve],
}

pub fn write_ad_curves_csv<W: Write>(w: W, sets: &[AdCurveSet<'_>]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(AD_CURVE_HEADER)?;
    for set in sets {
        for curve in set.curves {
            for (f, y) in &curve.points {
                out.write_record([
                    set.param.to_string(),
                    fmt_sig9(curve.value),
                    fmt_sig9(*f),
                    fmt_sig9(y.re),
                    fmt_sig9(y.im),
                    fmt_sig9((y.im / y.re).abs()),
                    set.mode.to_string(),
                ])?;
            }
        }
    }
    out.flush()?;
    Ok(())
}

pub fn write_comparison_csv<W: Write>(w: W, before: &[CrossoverEvent], after: &[CrossoverEvent]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(COMPARISON_HEADER)?;
    for (case, events) in [("before", before), ("after", after)] {
        for e in events {
            out.write_record([
                case.to_string(),
                e.trace.to_string(),
                fmt_sig9(e.f_cr_hz),
                fmt_sig9(e.lambda.re),
                verdict_str(e.verdict).to_string(),
            ])?;
        }
    }
    out.flush()?;
    Ok(())
}

/// SHA-256 over the serialized run configuration and the network file bytes.
pub fn config_hash(config: &impl Serialize, network: &[u8]) -> Result<String> {
    let mut h = Sha256::new();
    h.update(serde_json::to_vec(config)?);
    h.update([0u8]);
    h.update(network);
    Ok(hex::encode(h.finalize()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossoverRow {
    pub trace_id: usize,
    pub f_cr_hz: f64,
    pub re_lambda_s: f64,
    pub im_lambda_s: f64,
    pub direction: Direction,
    pub verdict: Verdict,
}

impl From<&CrossoverEvent> for CrossoverRow {
    fn from(e: &CrossoverEvent) -> Self {
        Self {
            trace_id: e.trace,
            f_cr_hz: e.f_cr_hz,
            re_lambda_s: e.lambda.re,
            im_lambda_s: e.lambda.im,
            direction: e.direction,
            verdict: e.verdict,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KcRow {
    pub trace_id: usize,
    pub node_id: NodeId,
    pub f_cr_hz: f64,
    pub re_k_c: f64,
    pub im_k_c: f64,
}

impl From<&CompensationCoefficient> for KcRow {
    fn from(k: &CompensationCoefficient) -> Self {
        Self {
            trace_id: k.trace,
            node_id: k.node,
            f_cr_hz: k.f_cr_hz,
            re_k_c: k.k_c.re,
            im_k_c: k.k_c.im,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationRow {
    pub mode: AdMode,
    pub k_v: f64,
    pub f_lo_hz: f64,
    pub f_hi_hz: f64,
    pub required_re_y_s: f64,
    pub min_re_y_s: f64,
    pub max_im_re_ratio: f64,
}

impl From<&AdCalibration> for CalibrationRow {
    fn from(c: &AdCalibration) -> Self {
        Self {
            mode: c.params.mode,
            k_v: c.params.k_v,
            f_lo_hz: c.band.f_lo_hz,
            f_hi_hz: c.band.f_hi_hz,
            required_re_y_s: c.required_re_y_s,
            min_re_y_s: c.min_re_y_s,
            max_im_re_ratio: c.max_im_re_ratio,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerificationRow {
    pub node_id: NodeId,
    pub mode: AdMode,
    pub k_v: f64,
    pub verdict_before: String,
    pub verdict_after: String,
    pub crossovers_after: Vec<CrossoverRow>,
}

/// Summary of one command run. Numeric keys carry their unit as a suffix;
/// ids, counts, `k_v`, `K_C` and ratios are dimensionless.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportDocument {
    pub tool_version: String,
    pub command: String,
    pub config_hash_sha256: String,
    pub started_unix_s: f64,
    pub finished_unix_s: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub verdict: Option<String>,
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub crossovers: Vec<CrossoverRow>,
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub k_c: Vec<KcRow>,
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub ranking: Vec<NodeRanking>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub plan: Option<CompensationPlan>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ad_calibration: Option<CalibrationRow>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub verification: Option<VerificationRow>,
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub files: Vec<String>,
}

impl ReportDocument {
    pub fn new(command: &str, config_hash: String) -> Self {
        Self {
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            command: command.to_string(),
            config_hash_sha256: config_hash,
            started_unix_s: unix_now(),
            finished_unix_s: 0.0,
            verdict: None,
            crossovers: Vec::new(),
            k_c: Vec::new(),
            ranking: Vec::new(),
            plan: None,
            ad_calibration: None,
            verification: None,
            files: Vec::new(),
        }
    }

    pub fn finish(&mut self) {
        self.finished_unix_s = unix_now();
    }
}

pub fn unix_now() -> f64 {
    std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_secs_f64())
        .unwrap_or(0.0)
}

pub fn verdict_word(stable: bool) -> &'static str {
    if stable {
        "stable"
    } else {
        "unstable"
    }
}
