//! dq-frame admittance and impedance models of the physical elements:
//! series RL branches, pi-section cables, shunt capacitors, grid-following
//! inverters (analytic or tabulated) and the active damper.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dq::{c, jw, DqBlock, FrequencyGrid, TransferElement, C64};
use crate::error::{Error, Result};

fn require(cond: bool, msg: impl FnOnce() -> String) -> Result<()> {
    if cond {
        Ok(())
    } else {
        Err(Error::InvalidParameter(msg()))
    }
}

fn finite_nonneg(x: f64) -> bool {
    x.is_finite() && x >= 0.0
}

fn finite_pos(x: f64) -> bool {
    x.is_finite() && x > 0.0
}

/// Series resistance and inductance of a line or transformer.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RlBranchParams {
    pub r_ohm: f64,
    pub l_h: f64,
}

impl RlBranchParams {
    pub fn new(r_ohm: f64, l_h: f64) -> Result<Self> {
        let p = Self { r_ohm, l_h };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        require(finite_nonneg(self.r_ohm) && finite_nonneg(self.l_h), || {
            format!("R and L must be >= 0 (R = {}, L = {})", self.r_ohm, self.l_h)
        })?;
        require(self.r_ohm > 0.0 || self.l_h > 0.0, || {
            "R and L cannot both be zero".to_string()
        })
    }
}

/// Impedance stamp `[R + jwL, -w0 L; w0 L, R + jwL]`.
pub fn rl_series_dq(p: &RlBranchParams, f_hz: f64, omega0: f64) -> DqBlock {
    let w = 2.0 * std::f64::consts::PI * f_hz;
    DqBlock::rotating(c(p.r_ohm, w * p.l_h), omega0 * p.l_h)
}

/// Admittance stamp of a shunt capacitor, `[jwC, -w0 C; w0 C, jwC]`.
pub fn capacitor_dq(c_f: f64, f_hz: f64, omega0: f64) -> DqBlock {
    let w = 2.0 * std::f64::consts::PI * f_hz;
    DqBlock::rotating(c(0.0, w * c_f), omega0 * c_f)
}

/// Pi-section cable; `c_f` is the total shunt capacitance, half at each end.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PiCableParams {
    pub r_ohm: f64,
    pub l_h: f64,
    pub c_f: f64,
}

impl PiCableParams {
    pub fn validate(&self) -> Result<()> {
        RlBranchParams {
            r_ohm: self.r_ohm,
            l_h: self.l_h,
        }
        .validate()?;
        require(finite_nonneg(self.c_f), || {
            format!("cable capacitance must be >= 0, got {}", self.c_f)
        })
    }
}

/// Series impedance and the per-terminal shunt admittance of a pi section.
pub fn pi_cable_stamps(p: &PiCableParams, f_hz: f64, omega0: f64) -> (DqBlock, DqBlock) {
    let series = rl_series_dq(
        &RlBranchParams {
            r_ohm: p.r_ohm,
            l_h: p.l_h,
        },
        f_hz,
        omega0,
    );
    (series, capacitor_dq(p.c_f / 2.0, f_hz, omega0))
}

fn default_v_d0() -> f64 {
    311.0
}

fn default_true() -> bool {
    true
}

/// Grid-following inverter with L filter, output capacitor, PI current loop
/// and SRF-PLL.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InverterParams {
    pub v_dc: f64,
    pub l_h: f64,
    pub c_f: f64,
    pub i_d: f64,
    pub i_q: f64,
    pub k_pi: f64,
    pub k_ii: f64,
    pub k_ppll: f64,
    pub k_ipll: f64,
    pub f_s: f64,
    /// Operating-point PCC voltage on the d-axis (volts).
    #[serde(default = "default_v_d0")]
    pub v_d0: f64,
    /// Cross-coupling compensation `w0 L` in the current controller.
    #[serde(default = "default_true")]
    pub decoupling: bool,
}

impl InverterParams {
    /// Inverter data of the three-inverter case system.
    pub fn case_study() -> Self {
        Self {
            v_dc: 750.0,
            l_h: 2.5e-3,
            c_f: 15e-6,
            i_d: 50.0,
            i_q: 0.0,
            k_pi: 10.0,
            k_ii: 300.0,
            k_ppll: 6.0,
            k_ipll: 100.0,
            f_s: 10e3,
            v_d0: default_v_d0(),
            decoupling: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        require(finite_pos(self.f_s), || format!("f_s must be > 0, got {}", self.f_s))?;
        require(finite_pos(self.l_h), || format!("L must be > 0, got {}", self.l_h))?;
        require(finite_pos(self.v_d0), || format!("v_d0 must be > 0, got {}", self.v_d0))?;
        require(finite_nonneg(self.c_f), || format!("C must be >= 0, got {}", self.c_f))?;
        for (name, v) in [
            ("k_pi", self.k_pi),
            ("k_ii", self.k_ii),
            ("k_ppll", self.k_ppll),
            ("k_ipll", self.k_ipll),
        ] {
            require(finite_nonneg(v), || format!("{name} must be >= 0, got {v}"))?;
        }
        require(self.i_d.is_finite() && self.i_q.is_finite(), || {
            "operating currents must be finite".into()
        })
    }

    /// Computation and PWM delay, 1.5 sampling periods.
    pub fn delay_s(&self) -> f64 {
        1.5 / self.f_s
    }
}

/// Small-signal output admittance of a grid-following inverter at `f_hz`.
///
/// Plant: bridge voltage `v_c` drives the filter inductor into the PCC,
/// `Z_L i = v_c - v`, with `Z_L = [sL, -w0 L; w0 L, sL]`. The controller works
/// in the PLL frame: `v_c^c = G_d (K i^c)` with `K = K_dec - G_ci I`. A small
/// PLL angle error `theta = H v_q` rotates the sensed current,
/// `i^c = i + [0, I_q H; 0, -I_d H] v`, and the modulation voltage on its way
/// back, `[0, -V_cq H; 0, V_cd H] v`. The inverse rotation is computed in the
/// digital controller and therefore also passes through `G_d`. The returned
/// block is `Y = -di/dv + Y_C`, the current drawn from the node.
pub fn inverter_admittance(p: &InverterParams, f_hz: f64, omega0: f64) -> Result<DqBlock> {
    if !(f_hz > 0.0 && f_hz < p.f_s / 2.0) {
        return Err(Error::InvalidParameter(format!(
            "inverter model valid for 0 < f < f_s/2 = {} Hz, got {f_hz}",
            p.f_s / 2.0
        )));
    }
    let s = jw(f_hz);
    let g_ci = TransferElement::new(&[p.k_pi, p.k_ii], &[1.0, 0.0])?.evaluate(s)?;
    let g_pll = TransferElement::new(&[p.k_ppll, p.k_ipll], &[1.0, 0.0])?.evaluate(s)?;
    let g_d = TransferElement::pure_delay(p.delay_s())?.evaluate(s)?;
    let h_pll = g_pll / (s + p.v_d0 * g_pll);

    let z = c(0.0, 0.0);
    let xl = omega0 * p.l_h;
    let z_l = DqBlock::rotating(s * p.l_h, xl);
    let k_dec = if p.decoupling {
        DqBlock::rotating(z, xl)
    } else {
        DqBlock::zero()
    };
    let k = k_dec - DqBlock::scalar(g_ci);

    let v_cd = p.v_d0 - xl * p.i_q;
    let v_cq = xl * p.i_d;
    let p_i = DqBlock::new(z, p.i_q * h_pll, z, -p.i_d * h_pll);
    let p_d = DqBlock::new(z, -v_cq * h_pll, z, v_cd * h_pll);

    let a = z_l - k.scale(g_d);
    let b = (k * p_i + p_d).scale(g_d) - DqBlock::identity();
    let i_out = a.solve(&b)?;
    Ok(capacitor_dq(p.c_f, f_hz, omega0) - i_out)
}

/// One tabulated admittance sample.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TableRow {
    pub f_hz: f64,
    pub y: DqBlock,
}

/// Measured or precomputed admittance, interpolated linearly in `log10 f`
/// on each real and imaginary part.
#[derive(Debug, Clone, PartialEq)]
pub struct AdmittanceTable {
    rows: Vec<TableRow>,
}

#[derive(Debug, Serialize, Deserialize)]
struct CsvRow {
    f_hz: f64,
    re_dd: f64,
    im_dd: f64,
    re_dq: f64,
    im_dq: f64,
    re_qd: f64,
    im_qd: f64,
    re_qq: f64,
    im_qq: f64,
}

impl AdmittanceTable {
    pub const CSV_HEADER: &'static str = "f_hz,re_dd,im_dd,re_dq,im_dq,re_qd,im_qd,re_qq,im_qq";

    pub fn new(rows: Vec<TableRow>) -> Result<Self> {
        if rows.len() < 2 {
            return Err(Error::Table(format!("need at least 2 rows, got {}", rows.len())));
        }
        if let Some(r) = rows.iter().find(|r| !(r.f_hz > 0.0 && r.f_hz.is_finite())) {
            return Err(Error::Table(format!("non-positive frequency {}", r.f_hz)));
        }
        if let Some(w) = rows.windows(2).find(|w| w[1].f_hz <= w[0].f_hz) {
            return Err(Error::Table(format!(
                "frequencies not strictly increasing at {} -> {}",
                w[0].f_hz, w[1].f_hz
            )));
        }
        if rows.iter().any(|r| !r.y.is_finite()) {
            return Err(Error::Table("non-finite admittance entry".into()));
        }
        Ok(Self { rows })
    }

    /// Samples any admittance model on a grid.
    pub fn tabulate<F>(grid: &FrequencyGrid, mut model: F) -> Result<Self>
    where
        F: FnMut(f64) -> Result<DqBlock>,
    {
        let rows = grid
            .freqs()
            .iter()
            .map(|&f| Ok(TableRow { f_hz: f, y: model(f)? }))
            .collect::<Result<Vec<_>>>()?;
        Self::new(rows)
    }

    pub fn rows(&self) -> &[TableRow] {
        &self.rows
    }

    pub fn range_hz(&self) -> (f64, f64) {
        (self.rows[0].f_hz, self.rows[self.rows.len() - 1].f_hz)
    }

    pub fn from_csv_reader<R: std::io::Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
        if header.join(",") != Self::CSV_HEADER {
            return Err(Error::Table(format!(
                "unexpected header '{}', expected '{}'",
                header.join(","),
                Self::CSV_HEADER
            )));
        }
        let mut rows = Vec::new();
        for rec in rdr.deserialize() {
            let r: CsvRow = rec?;
            rows.push(TableRow {
                f_hz: r.f_hz,
                y: DqBlock::new(
                    c(r.re_dd, r.im_dd),
                    c(r.re_dq, r.im_dq),
                    c(r.re_qd, r.im_qd),
                    c(r.re_qq, r.im_qq),
                ),
            });
        }
        Self::new(rows)
    }

    pub fn from_csv_path(path: &Path) -> Result<Self> {
        Self::from_csv_reader(std::fs::File::open(path)?)
    }

    pub fn write_csv<W: std::io::Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        for r in &self.rows {
            w.serialize(CsvRow {
                f_hz: r.f_hz,
                re_dd: r.y.dd.re,
                im_dd: r.y.dd.im,
                re_dq: r.y.dq.re,
                im_dq: r.y.dq.im,
                re_qd: r.y.qd.re,
                im_qd: r.y.qd.im,
                re_qq: r.y.qq.re,
                im_qq: r.y.qq.im,
            })?;
        }
        w.flush()?;
        Ok(())
    }
}

fn lerp_c(a: C64, b: C64, t: f64) -> C64 {
    c(a.re + t * (b.re - a.re), a.im + t * (b.im - a.im))
}

pub fn tabulated_admittance(t: &AdmittanceTable, f_hz: f64) -> Result<DqBlock> {
    let (lo, hi) = t.range_hz();
    if !(f_hz >= lo && f_hz <= hi) {
        return Err(Error::OutOfRange {
            f_hz,
            min_hz: lo,
            max_hz: hi,
        });
    }
    let rows = t.rows();
    let idx = rows.partition_point(|r| r.f_hz < f_hz);
    if rows[idx].f_hz == f_hz {
        return Ok(rows[idx].y);
    }
    let (a, b) = (&rows[idx - 1], &rows[idx]);
    let u = (f_hz.log10() - a.f_hz.log10()) / (b.f_hz.log10() - a.f_hz.log10());
    Ok(DqBlock::new(
        lerp_c(a.y.dd, b.y.dd, u),
        lerp_c(a.y.dq, b.y.dq, u),
        lerp_c(a.y.qd, b.y.qd, u),
        lerp_c(a.y.qq, b.y.qq, u),
    ))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum AdMode {
    /// Output-current feedforward shapes the filter into a low-pass conductance.
    #[default]
    Proposed,
    /// No feedforward (`H_i = 0`).
    Traditional,
}

impl std::str::FromStr for AdMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "proposed" => Ok(AdMode::Proposed),
            "traditional" => Ok(AdMode::Traditional),
            other => Err(Error::InvalidParameter(format!(
                "unknown AD mode '{other}' (expected proposed|traditional)"
            ))),
        }
    }
}

impl std::fmt::Display for AdMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            AdMode::Proposed => "proposed",
            AdMode::Traditional => "traditional",
        })
    }
}

/// Active damper: current-controlled shunt converter with a notch/lag/low-pass
/// voltage damping loop and optional output-current feedforward.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdParams {
    pub v_dc: f64,
    pub l_f: f64,
    pub k_pi: f64,
    pub k_ii: f64,
    /// Notch damping ratio.
    pub xi: f64,
    /// Lag filter time constant (s).
    pub tau: f64,
    /// Lag filter pole/zero ratio.
    pub beta: f64,
    pub omega_low: f64,
    /// Cut-off of the intended low-pass conductance (rad/s).
    pub omega_c: f64,
    /// Gain of the intended low-pass conductance (S).
    pub g: f64,
    /// Voltage damping gain.
    #[serde(default)]
    pub k_v: f64,
    pub f_s: f64,
    #[serde(default)]
    pub mode: AdMode,
}

impl AdParams {
    /// Damper data of the case system; `k_v` is left at zero for calibration.
    pub fn case_study() -> Self {
        Self {
            v_dc: 750.0,
            l_f: 0.8e-3,
            k_pi: 5.0,
            k_ii: 100.0,
            xi: 0.707,
            tau: 0.0014,
            beta: 2.0,
            omega_low: 12566.36,
            omega_c: 21991.13,
            g: 0.06,
            k_v: 0.0,
            f_s: 40e3,
            mode: AdMode::Proposed,
        }
    }

    pub fn with_k_v(mut self, k_v: f64) -> Self {
        self.k_v = k_v;
        self
    }

    pub fn with_mode(mut self, mode: AdMode) -> Self {
        self.mode = mode;
        self
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("v_dc", self.v_dc),
            ("l_f", self.l_f),
            ("k_pi", self.k_pi),
            ("k_ii", self.k_ii),
            ("xi", self.xi),
            ("tau", self.tau),
            ("beta", self.beta),
            ("omega_low", self.omega_low),
            ("omega_c", self.omega_c),
            ("g", self.g),
            ("f_s", self.f_s),
        ] {
            require(finite_pos(v), || format!("AD parameter {name} must be > 0, got {v}"))?;
        }
        require(finite_nonneg(self.k_v), || format!("k_v must be >= 0, got {}", self.k_v))
    }

    /// Coefficients `(slope, constant)` of `H_i(s) = slope * s + constant`,
    /// which makes `1 / (s L_f + H_i)` equal `G w_c / (s + w_c)`.
    pub fn feedforward_coefficients(&self) -> (f64, f64) {
        (1.0 / (self.g * self.omega_c) - self.l_f, 1.0 / self.g)
    }
}

/// Precomputed transfer elements of one damper configuration.
#[derive(Debug, Clone)]
pub struct AdModel {
    params: AdParams,
    g_v: TransferElement,
    g_low: TransferElement,
    h_i: Option<TransferElement>,
    g_i: TransferElement,
    g_d: TransferElement,
}

impl AdModel {
    pub fn new(p: &AdParams, omega0: f64) -> Result<Self> {
        p.validate()?;
        let w0 = omega0;
        let g_h = TransferElement::new(&[1.0, 0.0, w0 * w0], &[1.0, 2.0 * p.xi * w0, w0 * w0])?;
        let g_lag = TransferElement::new(&[p.tau, 1.0], &[p.beta * p.tau, 1.0])?;
        let g_low = TransferElement::new(&[p.omega_low], &[1.0, p.omega_low])?;
        let g_v = g_h.series(&g_lag).series(&g_low).freq_shift(w0)?;
        let h_i = match p.mode {
            AdMode::Proposed => {
                let (slope, constant) = p.feedforward_coefficients();
                Some(TransferElement::new(&[slope, constant], &[1.0])?)
            }
            AdMode::Traditional => None,
        };
        Ok(Self {
            params: *p,
            g_v,
            g_low,
            h_i,
            g_i: TransferElement::new(&[p.k_pi, p.k_ii], &[1.0, 0.0])?,
            g_d: TransferElement::pure_delay(1.5 / p.f_s)?,
        })
    }

    pub fn params(&self) -> &AdParams {
        &self.params
    }

    /// Scalar admittance `(1 + K_v G_v G_d) / (s L_f + H_i G_low G_d + G_i G_d)`.
    pub fn admittance(&self, f_hz: f64) -> Result<C64> {
        let (p, q) = self.admittance_parts(f_hz)?;
        Ok(p + self.params.k_v * q)
    }

    /// `(p, q)` with `Y_ad = p + K_v q`; the admittance is affine in `K_v`.
    pub fn admittance_parts(&self, f_hz: f64) -> Result<(C64, C64)> {
        let s = jw(f_hz);
        let g_d = self.g_d.evaluate(s)?;
        let g_v = self.g_v.evaluate(s)?;
        let ff = match &self.h_i {
            Some(h) => h.evaluate(s)? * self.g_low.evaluate(s)? * g_d,
            None => c(0.0, 0.0),
        };
        let den = s * self.params.l_f + ff + self.g_i.evaluate(s)? * g_d;
        if den.norm() < crate::dq::POLE_THRESHOLD {
            return Err(Error::PoleHit { s });
        }
        let p = den.inv();
        Ok((p, g_v * g_d * p))
    }

    /// d- and q-axis are decoupled; off-diagonals are exactly zero.
    pub fn block(&self, f_hz: f64) -> Result<DqBlock> {
        Ok(DqBlock::scalar(self.admittance(f_hz)?))
    }
}

pub fn ad_admittance(p: &AdParams, f_hz: f64, omega0: f64) -> Result<DqBlock> {
    AdModel::new(p, omega0)?.block(f_hz)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum AdSweepParam {
    #[serde(rename = "l_f")]
    FilterInductance,
    #[serde(rename = "g")]
    LowPassGain,
    #[serde(rename = "k_v")]
    DampingGain,
}

impl AdSweepParam {
    fn apply(self, base: &AdParams, value: f64) -> AdParams {
        let mut p = *base;
        match self {
            AdSweepParam::FilterInductance => p.l_f = value,
            AdSweepParam::LowPassGain => p.g = value,
            AdSweepParam::DampingGain => p.k_v = value,
        }
        p
    }
}

/// Admittance curve of the damper for one value of a swept parameter.
#[derive(Debug, Clone)]
pub struct AdCurve {
    pub value: f64,
    pub points: Vec<(f64, C64)>,
}

/// Family of damper admittance curves with one parameter varied and the
/// others held at `base`.
pub fn ad_curve_cluster(
    base: &AdParams,
    param: AdSweepParam,
    values: &[f64],
    grid: &FrequencyGrid,
) -> Result<Vec<AdCurve>> {
    if values.is_empty() {
        return Err(Error::InvalidParameter("empty parameter value list".into()));
    }
    values
        .iter()
        .map(|&v| {
            let model = AdModel::new(&param.apply(base, v), grid.omega0())?;
            let points = grid
                .freqs()
                .iter()
                .map(|&f| Ok((f, model.admittance(f)?)))
                .collect::<Result<Vec<_>>>()?;
            Ok(AdCurve { value: v, points })
        })
        .collect()
}
