use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::Serialize;

use dampplan_core::dq::FrequencyGrid;
use dampplan_core::models::{ad_curve_cluster, AdMode, AdParams, AdSweepParam};
use dampplan_core::netfile::{emit_fixture, parse_network, NetworkDocument};
use dampplan_core::network::{NodeId, PreparedNetwork};
use dampplan_core::planner::{
    calibrate_ad, compensation_coefficients, plan, rank_locations, verify_with_ad, AdCalibration,
    CompensationPlan, PlanOptions,
};
use dampplan_core::report::{
    config_hash, verdict_word, write_ad_curves_csv, write_comparison_csv, write_crossovers_csv,
    write_k_c_csv, write_traces_csv, AdCurveSet, CalibrationRow, CrossoverRow, KcRow,
    ReportDocument, VerificationRow,
};
use dampplan_core::stability::{analyze, Analysis, CrossoverEvent, CrossoverOptions};

use crate::{Cli, Command};

pub const THREADS_ENV: &str = "DAMP_PLANNER_THREADS";

pub enum Outcome {
    Stable,
    Unstable,
    Done,
}

impl Outcome {
    fn from_verdict(stable: bool) -> Self {
        if stable {
            Outcome::Stable
        } else {
            Outcome::Unstable
        }
    }
}

/// The inputs that determine a run's results; hashed into every report.
#[derive(Debug, Serialize)]
struct RunConfig<'a> {
    command: &'a str,
    fmin_hz: f64,
    fmax_hz: f64,
    df_hz: f64,
    epsilon_s: f64,
    dalpha_s: f64,
    node: Option<NodeId>,
    ad_mode: AdMode,
    k_v: Option<f64>,
    param: Option<&'a str>,
    values: &'a [f64],
}

impl<'a> RunConfig<'a> {
    fn new(cli: &'a Cli) -> Self {
        let (command, param, values): (&str, Option<&str>, &[f64]) = match &cli.command {
            Command::Sweep => ("sweep", None, &[]),
            Command::Criticals => ("criticals", None, &[]),
            Command::Rank => ("rank", None, &[]),
            Command::Plan => ("plan", None, &[]),
            Command::AdCurve { param, values } => ("ad-curve", param.as_deref(), values),
            Command::Verify => ("verify", None, &[]),
            Command::Fixture { .. } => ("fixture", None, &[]),
        };
        Self {
            command,
            fmin_hz: cli.fmin,
            fmax_hz: cli.fmax,
            df_hz: cli.df,
            epsilon_s: cli.epsilon,
            dalpha_s: cli.dalpha,
            node: cli.node,
            ad_mode: cli.ad_mode,
            k_v: cli.k_v,
            param,
            values,
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.fmin_hz > 0.0 && self.fmax_hz > self.fmin_hz && self.fmax_hz.is_finite()) {
            bail!("sweep range must satisfy 0 < fmin < fmax (got {} .. {})", self.fmin_hz, self.fmax_hz);
        }
        if !(self.df_hz > 0.0 && self.df_hz.is_finite()) {
            bail!("--df must be > 0 (got {})", self.df_hz);
        }
        if !(self.epsilon_s > 0.0 && self.epsilon_s.is_finite()) {
            bail!("--epsilon must be > 0 (got {})", self.epsilon_s);
        }
        if !(self.dalpha_s > 0.0 && self.dalpha_s.is_finite()) {
            bail!("--dalpha must be > 0 (got {})", self.dalpha_s);
        }
        if let Some(k) = self.k_v {
            if !(k >= 0.0 && k.is_finite()) {
                bail!("--k-v must be >= 0 (got {k})");
            }
        }
        Ok(())
    }
}

fn init_threads() -> Result<()> {
    if let Ok(v) = std::env::var(THREADS_ENV) {
        let n: usize = v
            .trim()
            .parse()
            .ok()
            .filter(|n| *n > 0)
            .with_context(|| format!("{THREADS_ENV} must be a positive integer, got '{v}'"))?;
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("configuring the sweep thread pool")?;
    }
    Ok(())
}

struct Session<'a> {
    cli: &'a Cli,
    doc: NetworkDocument,
    net: PreparedNetwork,
    grid: FrequencyGrid,
    report: ReportDocument,
}

impl<'a> Session<'a> {
    fn open(cli: &'a Cli, config: &RunConfig<'_>) -> Result<Self> {
        let path = cli
            .network
            .as_ref()
            .context("--network <path> is required for this command")?;
        let bytes = std::fs::read(path).with_context(|| format!("reading {}", path.display()))?;
        let text = String::from_utf8(bytes.clone()).with_context(|| format!("{} is not UTF-8", path.display()))?;
        let base = path.parent().unwrap_or_else(|| Path::new("."));
        let doc = parse_network(&text, &path.display().to_string(), base)?;
        let net = PreparedNetwork::new(&doc.graph)?;
        let grid = FrequencyGrid::linear(cli.fmin, cli.fmax, cli.df, net.omega0())?;
        let report = ReportDocument::new(config.command, config_hash(config, &bytes)?);
        std::fs::create_dir_all(&cli.out).with_context(|| format!("creating {}", cli.out.display()))?;
        Ok(Self {
            cli,
            doc,
            net,
            grid,
            report,
        })
    }

    fn opts(&self) -> CrossoverOptions {
        CrossoverOptions::default()
    }

    fn analyze(&self) -> Result<Analysis> {
        Ok(analyze(&self.net, &self.grid, &self.opts())?)
    }

    fn create(&mut self, name: &str) -> Result<BufWriter<File>> {
        let path = self.cli.out.join(name);
        let f = File::create(&path).with_context(|| format!("creating {}", path.display()))?;
        self.report.files.push(name.to_string());
        Ok(BufWriter::new(f))
    }

    fn record_analysis(&mut self, an: &Analysis) {
        self.report.verdict = Some(verdict_word(an.report.is_stable()).to_string());
        self.report.crossovers = an.report.events.iter().map(CrossoverRow::from).collect();
    }

    fn critical(an: &Analysis) -> Vec<CrossoverEvent> {
        an.report.critical().cloned().collect()
    }

    fn plan_options(&self) -> PlanOptions {
        PlanOptions {
            epsilon: self.cli.epsilon,
            dalpha: self.cli.dalpha,
            ..PlanOptions::default()
        }
    }

    /// `--node`, or the best-ranked node for the critical events.
    fn target_node(&self, critical: &[CrossoverEvent]) -> NodeId {
        self.cli.node.unwrap_or_else(|| {
            rank_locations(critical, &self.doc.graph.nodes, self.cli.epsilon)
                .first()
                .map(|r| r.node)
                .unwrap_or(self.doc.graph.nodes[0])
        })
    }

    fn ad_base(&self) -> AdParams {
        self.doc
            .ad_base
            .unwrap_or_else(AdParams::case_study)
            .with_mode(self.cli.ad_mode)
    }

    /// Damper to install: explicit `--k-v`, a non-zero `k_v` from the file,
    /// or calibration against the plan at the top-ranked node.
    fn resolve_ad(&mut self, critical: &[CrossoverEvent]) -> Result<AdParams> {
        let base = self.ad_base();
        if let Some(k) = self.cli.k_v {
            return Ok(base.with_k_v(k));
        }
        if base.k_v > 0.0 {
            return Ok(base);
        }
        let top = rank_locations(critical, &self.doc.graph.nodes, self.cli.epsilon)
            .first()
            .map(|r| r.node)
            .unwrap_or(self.doc.graph.nodes[0]);
        let p = plan(&self.net, top, critical, &self.plan_options())?;
        // calibrate with the proposed structure, then apply the requested mode
        let cal = calibrate_ad(&p, &base.with_mode(AdMode::Proposed), self.net.omega0())?;
        self.report.plan = Some(p);
        self.report.ad_calibration = Some(CalibrationRow::from(&cal));
        Ok(cal.params.with_mode(self.cli.ad_mode))
    }

    fn finish(mut self) -> Result<()> {
        self.report.finish();
        let name = format!("{}.json", self.report.command);
        let path = self.cli.out.join(&name);
        let text = serde_json::to_string_pretty(&self.report)?;
        std::fs::write(&path, text + "\n").with_context(|| format!("writing {}", path.display()))?;
        println!("report: {}", path.display());
        Ok(())
    }
}

pub fn execute(cli: &Cli) -> Result<Outcome> {
    let config = RunConfig::new(cli);
    config.validate()?;
    init_threads()?;
    if let Command::Fixture { path } = &cli.command {
        let target: PathBuf = path.clone().unwrap_or_else(|| cli.out.join("fixture.json"));
        if let Some(dir) = target.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir)?;
        }
        emit_fixture(&target)?;
        println!("wrote {}", target.display());
        return Ok(Outcome::Done);
    }
    let mut s = Session::open(cli, &config)?;
    let outcome = match &cli.command {
        Command::Sweep => {
            let an = s.analyze()?;
            write_traces_csv(s.create("traces.csv")?, &an.traces)?;
            write_crossovers_csv(s.create("crossovers.csv")?, &an.report.events)?;
            s.record_analysis(&an);
            print_events(&an.report.events);
            Outcome::from_verdict(an.report.is_stable())
        }
        Command::Criticals => {
            let an = s.analyze()?;
            write_crossovers_csv(s.create("crossovers.csv")?, &an.report.events)?;
            s.record_analysis(&an);
            print_events(&an.report.events);
            Outcome::from_verdict(an.report.is_stable())
        }
        Command::Rank => {
            let an = s.analyze()?;
            let critical = Session::critical(&an);
            let coeffs: Vec<_> = critical
                .iter()
                .flat_map(|e| compensation_coefficients(e, &s.doc.graph.nodes))
                .collect();
            write_k_c_csv(s.create("k_c.csv")?, &coeffs)?;
            s.record_analysis(&an);
            s.report.k_c = coeffs.iter().map(KcRow::from).collect();
            s.report.ranking = rank_locations(&critical, &s.doc.graph.nodes, cli.epsilon);
            for (i, r) in s.report.ranking.iter().enumerate() {
                println!("{:>2}. node {:<4} required {:.4} S  ({})", i + 1, r.node, r.required_alpha_s, r.rationale);
            }
            Outcome::from_verdict(an.report.is_stable())
        }
        Command::Plan => {
            let an = s.analyze()?;
            let critical = Session::critical(&an);
            let node = s.target_node(&critical);
            let p = plan(&s.net, node, &critical, &s.plan_options())?;
            print_plan(&p);
            s.record_analysis(&an);
            if !p.is_trivial() {
                match calibrate_ad(&p, &s.ad_base(), s.net.omega0()) {
                    Ok(cal) => {
                        print_calibration(&cal);
                        s.report.ad_calibration = Some(CalibrationRow::from(&cal));
                    }
                    Err(e) => log::warn!("damper calibration: {e}"),
                }
            }
            s.report.plan = Some(p);
            Outcome::Done
        }
        Command::AdCurve { param, values } => {
            let an = s.analyze()?;
            let ad = s.resolve_ad(&Session::critical(&an))?;
            let mut sets = Vec::new();
            let base_curves: Vec<_> = [AdMode::Proposed, AdMode::Traditional]
                .iter()
                .map(|&m| ad_curve_cluster(&ad.with_mode(m), AdSweepParam::DampingGain, &[ad.k_v], &s.grid))
                .collect::<std::result::Result<_, _>>()?;
            let cluster = match param {
                Some(p) => {
                    let which = parse_param(p)?;
                    if values.is_empty() {
                        bail!("--param needs --values");
                    }
                    Some((p.as_str(), ad_curve_cluster(&ad, which, values, &s.grid)?))
                }
                None => None,
            };
            for (m, c) in [AdMode::Proposed, AdMode::Traditional].iter().zip(&base_curves) {
                sets.push(AdCurveSet {
                    param: "k_v",
                    mode: *m,
                    curves: c,
                });
            }
            if let Some((p, c)) = &cluster {
                sets.push(AdCurveSet {
                    param: p,
                    mode: ad.mode,
                    curves: c,
                });
            }
            write_ad_curves_csv(s.create("ad_curve.csv")?, &sets)?;
            println!("damper k_v = {:.4}", ad.k_v);
            Outcome::Done
        }
        Command::Verify => {
            let before = s.analyze()?;
            let critical = Session::critical(&before);
            let node = s.target_node(&critical);
            let ad = s.resolve_ad(&critical)?;
            let after = verify_with_ad(&s.net, node, &ad, &s.grid, &s.opts())?;
            write_comparison_csv(s.create("comparison.csv")?, &before.report.events, &after.report.events)?;
            let stable = after.report.is_stable();
            s.report.crossovers = before.report.events.iter().map(CrossoverRow::from).collect();
            s.report.verdict = Some(verdict_word(stable).to_string());
            s.report.verification = Some(VerificationRow {
                node_id: node,
                mode: ad.mode,
                k_v: ad.k_v,
                verdict_before: verdict_word(before.report.is_stable()).to_string(),
                verdict_after: verdict_word(stable).to_string(),
                crossovers_after: after.report.events.iter().map(CrossoverRow::from).collect(),
            });
            println!("{} damper (k_v = {:.4}) at node {node}", ad.mode, ad.k_v);
            print_events(&after.report.events);
            Outcome::from_verdict(stable)
        }
        Command::Fixture { .. } => unreachable!("handled above"),
    };
    if let Some(v) = &s.report.verdict {
        println!("verdict: {v}");
    }
    s.finish()?;
    Ok(outcome)
}

fn parse_param(p: &str) -> Result<AdSweepParam> {
    Ok(match p {
        "l_f" => AdSweepParam::FilterInductance,
        "g" => AdSweepParam::LowPassGain,
        "k_v" => AdSweepParam::DampingGain,
        other => bail!("unknown --param '{other}' (expected l_f, g or k_v)"),
    })
}

fn print_events(events: &[CrossoverEvent]) {
    for e in events {
        println!(
            "trace {:>2}  f_cr {:>10.3} Hz  Re {:>+.5} S  {}",
            e.trace, e.f_cr_hz, e.lambda.re, e.verdict
        );
    }
}

fn print_plan(p: &CompensationPlan) {
    for m in &p.modes {
        println!(
            "trace {:>2} at {:.1} Hz: alpha {:.3} S after {} steps (predicted Re {:+.5} S)",
            m.trace, m.f_cr_hz, m.required_alpha_s, m.iterations, m.predicted_re_s
        );
    }
    match p.band {
        Some(b) => println!(
            "node {}: Re[Y_ad] >= {:.3} S over {}-{} Hz",
            p.node, p.required_re_y_s, b.f_lo_hz, b.f_hi_hz
        ),
        None => println!("node {}: no compensation required", p.node),
    }
}

fn print_calibration(c: &AdCalibration) {
    println!(
        "calibrated k_v = {:.4}: min Re[Y_ad] {:.4} S, max |Im/Re| {:.3}",
        c.params.k_v, c.min_re_y_s, c.max_im_re_ratio
    );
}
