//! Eigenvalue sensitivity, compensation coefficients, the iterative
//! damping-requirement search, damper placement ranking and calibration.

use serde::{Deserialize, Serialize};

use crate::dq::{c, DqBlock, FrequencyGrid, C64};
use crate::eig::Spectrum;
use crate::error::{Error, Result};
use crate::models::{AdModel, AdParams};
use crate::network::{NodeId, PreparedNetwork};
use crate::stability::{
    analyze, best_match, refine, sample, Analysis, CrossoverEvent, CrossoverOptions,
    MatrixSource, TracePoint, WithShunt,
};

pub const DEFAULT_DALPHA: f64 = 1e-3;
pub const DEFAULT_EPSILON: f64 = 0.005;
pub const DEFAULT_MAX_ITER: usize = 10_000;
/// Largest tolerated `|Im/Re|` of a calibrated damper.
pub const RATIO_LIMIT: f64 = 0.1;

/// First-order sensitivity of one eigenvalue to a real parameter `alpha`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SensitivityEntry {
    pub trace: usize,
    pub f_hz: f64,
    pub node: NodeId,
    pub d_lambda: C64,
}

impl SensitivityEntry {
    pub fn s_re(&self) -> f64 {
        self.d_lambda.re
    }

    pub fn s_im(&self) -> f64 {
        self.d_lambda.im
    }

    /// Sensitivity to a susceptance `B` added at the same place as the
    /// conductance `G`: `j dλ/dG`.
    pub fn wrt_susceptance(&self) -> C64 {
        c(0.0, 1.0) * self.d_lambda
    }
}

/// `u_kj w_jk` for a perturbation of the single diagonal entry `(j, j)`.
pub fn entry_sensitivity(s: &Spectrum, k: usize, j: usize) -> C64 {
    warn_if_degenerate(s, k);
    s.left[(k, j)] * s.right[(j, k)]
}

/// `K_C` from a mode's left and right vectors for the two rows of a node.
pub fn k_c(left: &[C64], right: &[C64], node_index: usize) -> C64 {
    let (d, q) = (2 * node_index, 2 * node_index + 1);
    left[d] * right[d] + left[q] * right[q]
}

fn warn_if_degenerate(s: &Spectrum, k: usize) {
    let scale = s.values.iter().map(|z| z.norm()).fold(0.0, f64::max);
    let lam = s.values[k];
    let gap = s
        .values
        .iter()
        .enumerate()
        .filter(|(j, _)| *j != k)
        .map(|(_, z)| (z - lam).norm())
        .fold(f64::INFINITY, f64::min);
    if gap < 1e-8 * scale {
        log::warn!("eigenvalue {k} is nearly repeated (gap {gap:.3e}); sensitivity is unreliable");
    }
}

/// Sensitivity of eigenvalue `k` to a conductance added on both axes of the
/// node at `node_index`.
pub fn sensitivity(s: &Spectrum, k: usize, node_index: usize) -> C64 {
    warn_if_degenerate(s, k);
    k_c(&s.left_vec(k), &s.right_vec(k), node_index)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CompensationCoefficient {
    pub trace: usize,
    pub node: NodeId,
    pub f_cr_hz: f64,
    pub k_c: C64,
}

/// `K_C` of one crossover at every node.
pub fn compensation_coefficients(ev: &CrossoverEvent, nodes: &[NodeId]) -> Vec<CompensationCoefficient> {
    nodes
        .iter()
        .enumerate()
        .map(|(i, &node)| CompensationCoefficient {
            trace: ev.trace,
            node,
            f_cr_hz: ev.f_cr_hz,
            k_c: k_c(&ev.left, &ev.right, i),
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeRanking {
    pub node: NodeId,
    /// Largest first-order conductance needed over the critical modes;
    /// infinite when some mode cannot be damped from this node.
    pub required_alpha_s: f64,
    /// Smallest `Re K_C` over the critical modes.
    pub worst_re_k_c: f64,
    pub rationale: String,
}

/// Orders candidate nodes by the conductance each would need to lift every
/// critical mode to `epsilon`, `max_k (epsilon - Re λ_k) / Re K_C`, ascending.
/// Ties go to the lower node id.
pub fn rank_locations(events: &[CrossoverEvent], nodes: &[NodeId], epsilon: f64) -> Vec<NodeRanking> {
    let mut out: Vec<NodeRanking> = nodes
        .iter()
        .enumerate()
        .map(|(i, &node)| {
            let mut required: f64 = 0.0;
            let mut worst = f64::INFINITY;
            let mut binding = None;
            for ev in events {
                let kc = k_c(&ev.left, &ev.right, i).re;
                worst = worst.min(kc);
                let need = (epsilon - ev.lambda.re).max(0.0);
                let a = if need == 0.0 {
                    0.0
                } else if kc > 0.0 {
                    need / kc
                } else {
                    f64::INFINITY
                };
                if a > required || binding.is_none() {
                    required = required.max(a);
                    binding = Some((ev.trace, ev.f_cr_hz, kc));
                }
            }
            let rationale = match binding {
                Some((t, f, kc)) => format!(
                    "binding mode: trace {t} at {f:.1} Hz with Re K_C = {kc:.4}; worst Re K_C over critical modes = {worst:.4}"
                ),
                None => "no critical modes".to_string(),
            };
            NodeRanking {
                node,
                required_alpha_s: required,
                worst_re_k_c: if worst.is_finite() { worst } else { 0.0 },
                rationale,
            }
        })
        .collect();
    out.sort_by(|a, b| {
        a.required_alpha_s
            .total_cmp(&b.required_alpha_s)
            .then(a.node.cmp(&b.node))
    });
    out
}

/// One critical mode as seen with some conductance installed.
#[derive(Debug, Clone, PartialEq)]
pub struct ModeState {
    pub trace: usize,
    pub f_cr_hz: f64,
    pub lambda: C64,
    pub k_c: C64,
    pub left: Vec<C64>,
    pub right: Vec<C64>,
}

/// Re-identifies a critical mode after the compensating conductance changed.
pub trait ModeLocator {
    fn locate(&self, alpha: f64, prev: &ModeState) -> Result<ModeState>;
}

/// Locates modes of a matrix source with a conductance `alpha` on both axes
/// of one node. The new crossover is searched outward from the previous one
/// in `step_hz` increments, first within `window_hz` and then within four
/// times that.
pub struct NetworkModeLocator<S> {
    pub source: S,
    pub node_index: usize,
    pub window_hz: f64,
    pub step_hz: f64,
    pub opts: CrossoverOptions,
}

impl<S: MatrixSource> NetworkModeLocator<S> {
    pub fn new(source: S, node_index: usize) -> Self {
        Self {
            source,
            node_index,
            window_hz: 50.0,
            step_hz: 1.0,
            opts: CrossoverOptions::default(),
        }
    }

    pub fn state_from_event(&self, ev: &CrossoverEvent) -> ModeState {
        ModeState {
            trace: ev.trace,
            f_cr_hz: ev.f_cr_hz,
            lambda: ev.lambda,
            k_c: k_c(&ev.left, &ev.right, self.node_index),
            left: ev.left.clone(),
            right: ev.right.clone(),
        }
    }
}

impl<S: MatrixSource> ModeLocator for NetworkModeLocator<S> {
    fn locate(&self, alpha: f64, prev: &ModeState) -> Result<ModeState> {
        let y = DqBlock::scalar(c(alpha, 0.0));
        let src = WithShunt::new(&self.source, self.node_index, move |_| Ok(y));
        let point = |f: f64, u_ref: &[C64], near: C64| -> Result<TracePoint> {
            let s = sample(&src, f)?;
            let j = best_match(&s.spectrum, u_ref, near);
            Ok(TracePoint {
                f_hz: f,
                lambda: s.spectrum.values[j],
                left: s.spectrum.left_vec(j),
                right: s.spectrum.right_vec(j),
            })
        };
        let to_state = |p: TracePoint| ModeState {
            trace: prev.trace,
            f_cr_hz: p.f_hz,
            lambda: p.lambda,
            k_c: k_c(&p.left, &p.right, self.node_index),
            left: p.left,
            right: p.right,
        };
        let centre = point(prev.f_cr_hz, &prev.left, prev.lambda)?;
        if centre.lambda.im.abs() <= self.opts.rel_tol * centre.lambda.re.abs().max(1.0) {
            return Ok(to_state(centre));
        }
        let mut sides = [centre.clone(), centre.clone()];
        let max_steps = (4.0 * self.window_hz / self.step_hz).ceil() as usize;
        for n in 1..=max_steps {
            for (side, sign) in [(0usize, 1.0), (1usize, -1.0)] {
                let f = prev.f_cr_hz + sign * n as f64 * self.step_hz;
                if f <= 0.0 {
                    continue;
                }
                let last = &sides[side];
                let p = point(f, &last.left, last.lambda)?;
                if p.lambda.im * last.lambda.im <= 0.0 {
                    let (a, b) = if sign > 0.0 { (last, &p) } else { (&p, last) };
                    if let Some(ev) = refine(prev.trace, a, b, &src, &self.opts)? {
                        return Ok(ModeState {
                            trace: prev.trace,
                            f_cr_hz: ev.f_cr_hz,
                            lambda: ev.lambda,
                            k_c: k_c(&ev.left, &ev.right, self.node_index),
                            left: ev.left,
                            right: ev.right,
                        });
                    }
                }
                sides[side] = p;
            }
        }
        Err(Error::BisectionFailed {
            trace: prev.trace,
            f_lo_hz: prev.f_cr_hz - 4.0 * self.window_hz,
            f_hi_hz: prev.f_cr_hz + 4.0 * self.window_hz,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlanOptions {
    pub epsilon: f64,
    pub dalpha: f64,
    pub max_iter: usize,
}

impl Default for PlanOptions {
    fn default() -> Self {
        Self {
            epsilon: DEFAULT_EPSILON,
            dalpha: DEFAULT_DALPHA,
            max_iter: DEFAULT_MAX_ITER,
        }
    }
}

impl PlanOptions {
    fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return Err(Error::InvalidParameter(format!("epsilon must be > 0, got {}", self.epsilon)));
        }
        if !(self.dalpha > 0.0 && self.dalpha.is_finite()) {
            return Err(Error::InvalidParameter(format!("dalpha must be > 0, got {}", self.dalpha)));
        }
        Ok(())
    }
}

/// Requirement for one critical mode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModePlan {
    pub trace: usize,
    pub node: NodeId,
    pub f_cr_hz: f64,
    pub re_lambda_s: f64,
    pub required_alpha_s: f64,
    pub iterations: usize,
    /// `Re λ + Re Δλ` with the first-order accumulation.
    pub predicted_re_s: f64,
    /// Crossover and `Re λ` re-located with `required_alpha_s` installed.
    pub final_f_cr_hz: f64,
    pub final_re_lambda_s: f64,
}

/// Runs the step loop for one mode: while `Re λ + Re Δλ < epsilon`, add
/// `dalpha·K_C` to `Δλ`, raise `alpha` by `dalpha` and re-locate the mode.
pub fn plan_mode(
    locator: &impl ModeLocator,
    start: &ModeState,
    node: NodeId,
    opts: &PlanOptions,
) -> Result<ModePlan> {
    opts.validate()?;
    let base = start.lambda.re;
    let mut state = start.clone();
    let mut delta = c(0.0, 0.0);
    let mut n = 0usize;
    while base + delta.re < opts.epsilon {
        if n >= opts.max_iter {
            return Err(Error::PlanInfeasible {
                trace: start.trace,
                iterations: n,
                shortfall: opts.epsilon - base - delta.re,
            });
        }
        delta += opts.dalpha * state.k_c;
        n += 1;
        state = locator.locate(n as f64 * opts.dalpha, &state)?;
    }
    Ok(ModePlan {
        trace: start.trace,
        node,
        f_cr_hz: start.f_cr_hz,
        re_lambda_s: base,
        required_alpha_s: n as f64 * opts.dalpha,
        iterations: n,
        predicted_re_s: base + delta.re,
        final_f_cr_hz: state.f_cr_hz,
        final_re_lambda_s: state.lambda.re,
    })
}

/// Frequency band a damper must cover.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Band {
    pub f_lo_hz: f64,
    pub f_hi_hz: f64,
}

impl Band {
    /// Span of the given crossover frequencies widened outward to multiples
    /// of 100 Hz.
    pub fn around(freqs: impl IntoIterator<Item = f64>) -> Option<Band> {
        let (lo, hi) = freqs
            .into_iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), f| (lo.min(f), hi.max(f)));
        if !lo.is_finite() {
            return None;
        }
        let lo = ((lo / 100.0).floor() * 100.0).max(0.0);
        let mut hi = (hi / 100.0).ceil() * 100.0;
        if hi <= lo {
            hi = lo + 100.0;
        }
        Some(Band {
            f_lo_hz: lo,
            f_hi_hz: hi,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompensationPlan {
    pub node: NodeId,
    pub epsilon_s: f64,
    pub dalpha_s: f64,
    pub modes: Vec<ModePlan>,
    /// Required `Re Y_ad` over `band`: the largest per-mode requirement.
    pub required_re_y_s: f64,
    pub band: Option<Band>,
}

impl CompensationPlan {
    pub fn is_trivial(&self) -> bool {
        self.modes.is_empty()
    }
}

/// Sizes a shunt conductance at `node` for every critical event.
pub fn plan(
    net: &PreparedNetwork,
    node: NodeId,
    critical: &[CrossoverEvent],
    opts: &PlanOptions,
) -> Result<CompensationPlan> {
    opts.validate()?;
    let idx = net
        .node_index(node)
        .ok_or_else(|| Error::InvalidParameter(format!("unknown node {node}")))?;
    let locator = NetworkModeLocator::new(net, idx);
    let modes = critical
        .iter()
        .map(|ev| plan_mode(&locator, &locator.state_from_event(ev), node, opts))
        .collect::<Result<Vec<_>>>()?;
    Ok(assemble_plan(node, opts, modes))
}

pub fn assemble_plan(node: NodeId, opts: &PlanOptions, modes: Vec<ModePlan>) -> CompensationPlan {
    let required = modes.iter().map(|m| m.required_alpha_s).fold(0.0, f64::max);
    let band = Band::around(modes.iter().map(|m| m.f_cr_hz));
    CompensationPlan {
        node,
        epsilon_s: opts.epsilon,
        dalpha_s: opts.dalpha,
        modes,
        required_re_y_s: required,
        band,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdCalibration {
    pub params: AdParams,
    pub band: Band,
    pub required_re_y_s: f64,
    pub min_re_y_s: f64,
    pub max_im_re_ratio: f64,
}

/// Damper admittance over a band at 1 Hz, split as `p + K_v q`.
struct BandResponse {
    parts: Vec<(C64, C64)>,
}

impl BandResponse {
    fn new(model: &AdModel, band: &Band) -> Result<Self> {
        let n = (band.f_hi_hz - band.f_lo_hz).round() as usize;
        let parts = (0..=n)
            .map(|i| {
                let f = band.f_lo_hz + i as f64;
                model.admittance_parts(f).map_err(|e| e.at(f))
            })
            .collect::<Result<_>>()?;
        Ok(Self { parts })
    }

    /// `(min Re Y, max |Im/Re|)` at damping gain `k_v`.
    fn evaluate(&self, k_v: f64) -> (f64, f64) {
        self.parts.iter().fold((f64::INFINITY, 0.0), |(lo, r), (p, q)| {
            let y = p + k_v * q;
            let ratio = if y.re > 0.0 { (y.im / y.re).abs() } else { f64::INFINITY };
            (lo.min(y.re), f64::max(r, ratio))
        })
    }
}

/// Upper end of the `K_v` search.
const K_V_MAX: f64 = 50.0;
const K_V_SCAN: f64 = 0.01;
const K_V_RESOLUTION: f64 = 1e-3;

/// Smallest `K_v` whose damper meets the plan's conductance requirement with
/// `|Im/Re| <= 0.1` over the plan's band.
pub fn calibrate_ad(plan: &CompensationPlan, base: &AdParams, omega0: f64) -> Result<AdCalibration> {
    let band = plan.band.unwrap_or(Band {
        f_lo_hz: 100.0,
        f_hi_hz: 2000.0,
    });
    calibrate_ad_band(plan.required_re_y_s, band, base, omega0)
}

pub fn calibrate_ad_band(required: f64, band: Band, base: &AdParams, omega0: f64) -> Result<AdCalibration> {
    if !(required >= 0.0 && required.is_finite()) {
        return Err(Error::InvalidParameter(format!("requirement must be >= 0, got {required}")));
    }
    let model = AdModel::new(&base.with_k_v(0.0), omega0)?;
    let resp = BandResponse::new(&model, &band)?;
    let ok = |k: f64| {
        let (lo, r) = resp.evaluate(k);
        lo >= required && r <= RATIO_LIMIT
    };
    let steps = (K_V_MAX / K_V_SCAN).round() as usize;
    let mut prev = None;
    let mut best_ratio_ok_re = f64::NEG_INFINITY;
    let mut best_ratio = f64::INFINITY;
    let mut found = None;
    for i in 0..=steps {
        let k = i as f64 * K_V_SCAN;
        let (lo, r) = resp.evaluate(k);
        best_ratio = best_ratio.min(r);
        if r <= RATIO_LIMIT {
            best_ratio_ok_re = best_ratio_ok_re.max(lo);
        }
        if lo >= required && r <= RATIO_LIMIT {
            found = Some((prev, k));
            break;
        }
        prev = Some(k);
    }
    let Some((below, mut hi)) = found else {
        let msg = if best_ratio > RATIO_LIMIT {
            format!(
                "|Im/Re| <= {RATIO_LIMIT} binds: no K_v in [0, {K_V_MAX}] meets it over [{}, {}] Hz (best {best_ratio:.3})",
                band.f_lo_hz, band.f_hi_hz
            )
        } else {
            format!(
                "conductance requirement binds: {required:.4} S exceeds the best min Re[Y_ad] = {best_ratio_ok_re:.4} S reachable with |Im/Re| <= {RATIO_LIMIT}"
            )
        };
        return Err(Error::CalibrationInfeasible(msg));
    };
    if let Some(mut lo) = below {
        while hi - lo > K_V_RESOLUTION {
            let mid = 0.5 * (lo + hi);
            if ok(mid) {
                hi = mid;
            } else {
                lo = mid;
            }
        }
    }
    let (min_re, ratio) = resp.evaluate(hi);
    Ok(AdCalibration {
        params: base.with_k_v(hi),
        band,
        required_re_y_s: required,
        min_re_y_s: min_re,
        max_im_re_ratio: ratio,
    })
}

/// Installs the damper at `node` and re-runs the full analysis.
pub fn verify_with_ad(
    net: &PreparedNetwork,
    node: NodeId,
    ad: &AdParams,
    grid: &FrequencyGrid,
    opts: &CrossoverOptions,
) -> Result<Analysis> {
    let idx = net
        .node_index(node)
        .ok_or_else(|| Error::InvalidParameter(format!("unknown node {node}")))?;
    let model = AdModel::new(ad, net.omega0())?;
    let src = WithShunt::new(net, idx, move |f| model.block(f));
    analyze(&src, grid, opts)
}
