//! Frequency sweeps, eigenvalue tracking and the zero-crossing stability test.

use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dq::{DqBlock, FrequencyGrid, C64};
use crate::eig::{dot, eig_lr, Spectrum};
use crate::error::{Error, Result};
use crate::network::{add_block, CMatrix, PreparedNetwork};

/// Below this overlap a tracking step is flagged as a possible mis-match.
pub const TRACK_THRESHOLD: f64 = 0.5;

/// Anything that yields a square complex matrix as a function of frequency.
pub trait MatrixSource: Sync {
    fn dim(&self) -> usize;
    fn matrix(&self, f_hz: f64) -> Result<CMatrix>;
}

impl MatrixSource for PreparedNetwork {
    fn dim(&self) -> usize {
        PreparedNetwork::dim(self)
    }

    fn matrix(&self, f_hz: f64) -> Result<CMatrix> {
        Ok(self.assemble(f_hz)?.matrix)
    }
}

impl<S: MatrixSource + ?Sized> MatrixSource for &S {
    fn dim(&self) -> usize {
        (**self).dim()
    }

    fn matrix(&self, f_hz: f64) -> Result<CMatrix> {
        (**self).matrix(f_hz)
    }
}

/// Wraps a closure as a source.
pub struct FnSource<F> {
    dim: usize,
    f: F,
}

impl<F> FnSource<F>
where
    F: Fn(f64) -> Result<CMatrix> + Sync,
{
    pub fn new(dim: usize, f: F) -> Self {
        Self { dim, f }
    }
}

impl<F> MatrixSource for FnSource<F>
where
    F: Fn(f64) -> Result<CMatrix> + Sync,
{
    fn dim(&self) -> usize {
        self.dim
    }

    fn matrix(&self, f_hz: f64) -> Result<CMatrix> {
        (self.f)(f_hz)
    }
}

/// Adds a frequency-dependent 2x2 shunt to the diagonal block of one node.
pub struct WithShunt<S, F> {
    inner: S,
    node_index: usize,
    shunt: F,
}

impl<S, F> WithShunt<S, F>
where
    S: MatrixSource,
    F: Fn(f64) -> Result<DqBlock> + Sync,
{
    pub fn new(inner: S, node_index: usize, shunt: F) -> Self {
        assert!(2 * node_index + 1 < inner.dim(), "node index out of range");
        Self {
            inner,
            node_index,
            shunt,
        }
    }
}

impl<S, F> MatrixSource for WithShunt<S, F>
where
    S: MatrixSource,
    F: Fn(f64) -> Result<DqBlock> + Sync,
{
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    fn matrix(&self, f_hz: f64) -> Result<CMatrix> {
        let mut m = self.inner.matrix(f_hz)?;
        let y = (self.shunt)(f_hz).map_err(|e| e.at(f_hz))?;
        add_block(&mut m, self.node_index, self.node_index, &y);
        Ok(m)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EigenSample {
    pub f_hz: f64,
    pub spectrum: Spectrum,
}

pub fn sample(source: &(impl MatrixSource + ?Sized), f_hz: f64) -> Result<EigenSample> {
    let m = source.matrix(f_hz).map_err(|e| e.at(f_hz))?;
    let spectrum = eig_lr(&m).map_err(|e| e.at(f_hz))?;
    Ok(EigenSample { f_hz, spectrum })
}

/// Decomposes the source at every grid frequency, in parallel; results are in
/// grid order regardless of scheduling.
pub fn sweep(source: &(impl MatrixSource + ?Sized), grid: &FrequencyGrid) -> Result<Vec<EigenSample>> {
    grid.freqs().par_iter().map(|&f| sample(source, f)).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct TracePoint {
    pub f_hz: f64,
    pub lambda: C64,
    pub left: Vec<C64>,
    pub right: Vec<C64>,
}

/// One eigenvalue followed across the sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct EigenTrace {
    pub id: usize,
    pub points: Vec<TracePoint>,
    /// Index `i` means the step from point `i` to `i + 1` matched with an
    /// overlap below the threshold.
    pub discontinuities: Vec<usize>,
}

impl EigenTrace {
    pub fn lambdas(&self) -> impl Iterator<Item = C64> + '_ {
        self.points.iter().map(|p| p.lambda)
    }
}

/// Connects eigenvalues between neighbouring samples by greedily pairing the
/// largest `|u_k(f) . w_j(f + df)|`, ties going to the nearest eigenvalue.
/// Trace ids follow the descending-modulus order at the first sample.
pub fn track(samples: &[EigenSample]) -> Vec<EigenTrace> {
    track_with_threshold(samples, TRACK_THRESHOLD)
}

pub fn track_with_threshold(samples: &[EigenSample], threshold: f64) -> Vec<EigenTrace> {
    let Some(first) = samples.first() else {
        return Vec::new();
    };
    let n = first.spectrum.len();
    let point = |s: &EigenSample, j: usize| TracePoint {
        f_hz: s.f_hz,
        lambda: s.spectrum.values[j],
        left: s.spectrum.left_vec(j),
        right: s.spectrum.right_vec(j),
    };
    let mut traces: Vec<EigenTrace> = (0..n)
        .map(|k| EigenTrace {
            id: k,
            points: vec![point(first, k)],
            discontinuities: Vec::new(),
        })
        .collect();
    // current[k] = column index in the latest sample held by trace k
    let mut current: Vec<usize> = (0..n).collect();
    for (step, pair) in samples.windows(2).enumerate() {
        let (a, b) = (&pair[0].spectrum, &pair[1].spectrum);
        let mut cands = Vec::with_capacity(n * n);
        for (k, &ck) in current.iter().enumerate() {
            for j in 0..n {
                let score = a.overlap(ck, b, j);
                let dist = (a.values[ck] - b.values[j]).norm();
                cands.push((score, dist, k, j));
            }
        }
        cands.sort_by(|x, y| y.0.total_cmp(&x.0).then(x.1.total_cmp(&y.1)));
        let mut trace_done = vec![false; n];
        let mut col_done = vec![false; n];
        let mut next = vec![0; n];
        let mut left = n;
        for (score, _, k, j) in cands {
            if left == 0 {
                break;
            }
            if trace_done[k] || col_done[j] {
                continue;
            }
            trace_done[k] = true;
            col_done[j] = true;
            left -= 1;
            next[k] = j;
            if score < threshold {
                traces[k].discontinuities.push(step);
            }
        }
        for (k, t) in traces.iter_mut().enumerate() {
            t.points.push(point(&pair[1], next[k]));
        }
        current = next;
    }
    traces
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    /// Im goes from positive to negative with increasing frequency.
    PositiveToNegative,
    NegativeToPositive,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Stable,
    Critical,
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Verdict::Stable => "stable",
            Verdict::Critical => "critical",
        })
    }
}

/// A refined zero of Im(lambda) on one trace, with the eigenvectors there.
#[derive(Debug, Clone, PartialEq)]
pub struct CrossoverEvent {
    pub trace: usize,
    pub f_cr_hz: f64,
    pub lambda: C64,
    pub direction: Direction,
    pub verdict: Verdict,
    pub left: Vec<C64>,
    pub right: Vec<C64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CrossoverOptions {
    /// A crossover with `Re(lambda) < margin` is critical.
    pub margin: f64,
    /// Convergence when `|Im| <= rel_tol * max(1, |Re|)`.
    pub rel_tol: f64,
    pub max_iter: usize,
}

impl Default for CrossoverOptions {
    fn default() -> Self {
        Self {
            margin: 0.0,
            rel_tol: 1e-6,
            max_iter: 60,
        }
    }
}

impl CrossoverOptions {
    pub fn with_margin(margin: f64) -> Self {
        Self {
            margin,
            ..Self::default()
        }
    }

    fn verdict(&self, re: f64) -> Verdict {
        if re < self.margin {
            Verdict::Critical
        } else {
            Verdict::Stable
        }
    }
}

/// Picks the eigenpair in `s` that best continues the left vector `u_ref`.
pub(crate) fn best_match(s: &Spectrum, u_ref: &[C64], near: C64) -> usize {
    (0..s.len())
        .max_by(|&a, &b| {
            let sa = dot(u_ref.iter(), s.right.column(a).iter()).norm();
            let sb = dot(u_ref.iter(), s.right.column(b).iter()).norm();
            sa.total_cmp(&sb)
                .then((s.values[b] - near).norm().total_cmp(&(s.values[a] - near).norm()))
        })
        .expect("non-empty spectrum")
}

/// Locates every sign change of Im(lambda) on `trace` and refines it by
/// bisection on `source`.
pub fn find_crossovers(
    trace: &EigenTrace,
    source: &(impl MatrixSource + ?Sized),
    opts: &CrossoverOptions,
) -> Result<Vec<CrossoverEvent>> {
    let pts = &trace.points;
    let mut out = Vec::new();
    for i in 0..pts.len().saturating_sub(1) {
        let (a, b) = (&pts[i], &pts[i + 1]);
        let (ia, ib) = (a.lambda.im, b.lambda.im);
        if ia == 0.0 && i > 0 {
            let prev = pts[i - 1].lambda.im;
            if prev * ib < 0.0 {
                out.push(CrossoverEvent {
                    trace: trace.id,
                    f_cr_hz: a.f_hz,
                    lambda: a.lambda,
                    direction: direction(prev),
                    verdict: opts.verdict(a.lambda.re),
                    left: a.left.clone(),
                    right: a.right.clone(),
                });
            }
            continue;
        }
        if ia * ib >= 0.0 {
            continue;
        }
        if let Some(ev) = refine(trace.id, a, b, source, opts)? {
            out.push(ev);
        }
    }
    Ok(out)
}

fn direction(im_before: f64) -> Direction {
    if im_before > 0.0 {
        Direction::PositiveToNegative
    } else {
        Direction::NegativeToPositive
    }
}

/// Refines a crossover located between the tracked points `a` and `b`.
/// Returns `None` when the sign change is a jump through a pole rather than
/// a zero.
pub fn refine(
    trace: usize,
    a: &TracePoint,
    b: &TracePoint,
    source: &(impl MatrixSource + ?Sized),
    opts: &CrossoverOptions,
) -> Result<Option<CrossoverEvent>> {
    let converged = |z: C64| z.im.abs() <= opts.rel_tol * z.re.abs().max(1.0);
    let dir = direction(a.lambda.im);
    let make = |f: f64, lambda: C64, left: Vec<C64>, right: Vec<C64>| CrossoverEvent {
        trace,
        f_cr_hz: f,
        lambda,
        direction: dir,
        verdict: opts.verdict(lambda.re),
        left,
        right,
    };
    for p in [a, b] {
        if converged(p.lambda) {
            return Ok(Some(make(p.f_hz, p.lambda, p.left.clone(), p.right.clone())));
        }
    }
    let start = a.lambda.im.abs().min(b.lambda.im.abs());
    let sign_a = a.lambda.im.signum();
    let (mut lo, mut hi) = (a.f_hz, b.f_hz);
    let (mut lam_lo, mut lam_hi) = (a.lambda, b.lambda);
    let mut u_ref = a.left.clone();
    let mut last = None;
    for _ in 0..opts.max_iter {
        let mid = 0.5 * (lo + hi);
        let s = match sample(source, mid) {
            Ok(s) => s,
            // evaluating exactly on a pole; only a jump if |Im| never shrank
            Err(_) if lam_lo.im.abs().min(lam_hi.im.abs()) >= start => {
                log::debug!("trace {trace}: singular sample at {mid} Hz inside an Im sign change");
                return Ok(None);
            }
            Err(e) => return Err(e),
        };
        let t = (mid - lo) / (hi - lo);
        let guess = lam_lo + (lam_hi - lam_lo) * t;
        let j = best_match(&s.spectrum, &u_ref, guess);
        let lam = s.spectrum.values[j];
        if converged(lam) {
            return Ok(Some(make(mid, lam, s.spectrum.left_vec(j), s.spectrum.right_vec(j))));
        }
        if lam.im.signum() == sign_a {
            lo = mid;
            lam_lo = lam;
            u_ref = s.spectrum.left_vec(j);
        } else {
            hi = mid;
            lam_hi = lam;
        }
        last = Some(lam);
        if hi - lo <= f64::EPSILON * hi {
            break;
        }
    }
    if let Some(lam) = last {
        if lam_lo.im.abs().min(lam_hi.im.abs()) >= start || !lam.im.is_finite() {
            log::debug!(
                "trace {trace}: Im sign change in [{}, {}] Hz is a pole, not a crossover",
                a.f_hz,
                b.f_hz
            );
            return Ok(None);
        }
    }
    Err(Error::BisectionFailed {
        trace,
        f_lo_hz: a.f_hz,
        f_hi_hz: b.f_hz,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct StabilityReport {
    pub margin: f64,
    pub events: Vec<CrossoverEvent>,
}

impl StabilityReport {
    pub fn is_stable(&self) -> bool {
        self.events.iter().all(|e| e.verdict == Verdict::Stable)
    }

    pub fn critical(&self) -> impl Iterator<Item = &CrossoverEvent> {
        self.events.iter().filter(|e| e.verdict == Verdict::Critical)
    }
}

/// Collects events in (frequency, trace) order and applies the margin.
pub fn assess(events: impl IntoIterator<Item = CrossoverEvent>, margin: f64) -> StabilityReport {
    let mut events: Vec<_> = events
        .into_iter()
        .map(|mut e| {
            e.verdict = CrossoverOptions::with_margin(margin).verdict(e.lambda.re);
            e
        })
        .collect();
    events.sort_by(|a, b| a.f_cr_hz.total_cmp(&b.f_cr_hz).then(a.trace.cmp(&b.trace)));
    StabilityReport { margin, events }
}

/// Traces plus the assessed crossovers of one sweep.
#[derive(Debug, Clone)]
pub struct Analysis {
    pub traces: Vec<EigenTrace>,
    pub report: StabilityReport,
}

pub fn analyze(
    source: &(impl MatrixSource + ?Sized),
    grid: &FrequencyGrid,
    opts: &CrossoverOptions,
) -> Result<Analysis> {
    let samples = sweep(source, grid)?;
    let traces = track(&samples);
    drop(samples);
    let per_trace: Vec<Vec<CrossoverEvent>> = traces
        .iter()
        .map(|t| find_crossovers(t, source, opts))
        .collect::<Result<_>>()?;
    let report = assess(per_trace.into_iter().flatten(), opts.margin);
    Ok(Analysis { traces, report })
}

/// Winding number of a closed polyline about the origin, counter-clockwise
/// positive. Fails if the path comes within `1e-9` of the origin.
pub fn winding_number(path: &[C64]) -> Result<i64> {
    const GUARD: f64 = 1e-9;
    if path.len() < 2 {
        return Ok(0);
    }
    let mut total = 0.0;
    for i in 0..path.len() {
        let p = path[i];
        let q = path[(i + 1) % path.len()];
        if segment_distance(p, q) < GUARD {
            return Err(Error::Indeterminate(format!(
                "contour passes within {GUARD:e} of the origin between {p} and {q}"
            )));
        }
        total += (q / p).arg();
    }
    Ok((total / std::f64::consts::TAU).round() as i64)
}

fn segment_distance(p: C64, q: C64) -> f64 {
    let d = q - p;
    let len2 = d.norm_sqr();
    if len2 == 0.0 {
        return p.norm();
    }
    let t = (-(p.re * d.re + p.im * d.im) / len2).clamp(0.0, 1.0);
    (p + d * t).norm()
}

/// Net counter-clockwise encirclements of the origin by one eigenlocus,
/// closed by conjugate symmetry over negative frequencies.
pub fn nyquist_encirclements(trace: &EigenTrace) -> Result<i64> {
    let fwd: Vec<C64> = trace.lambdas().collect();
    let path: Vec<C64> = fwd
        .iter()
        .copied()
        .chain(fwd.iter().rev().map(|z| z.conj()))
        .collect();
    winding_number(&path)
}
