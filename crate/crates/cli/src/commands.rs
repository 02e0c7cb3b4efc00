//! The six subcommands. Each writes its report to `out` and returns the exit code.

use std::io::Write;

use clap::ValueEnum;
use serde_json::json;
use thiserror::Error;

use drphase_core::criteria::{classify, lemma_audit, LemmaStatus, Verdict};
use drphase_core::evolution::{evolve, EvolutionTrace, EvolveFailure};
use drphase_core::montecarlo::simulate;
use drphase_core::scan::{boundary_report_on, scan, scan_points, Boundary, Interval};
use drphase_core::{BoundaryReport, EvolveError, PhaseVerdict, ScanError, SimError};

use crate::config::{ConfigError, RunConfig};
use crate::output::{
    csv_writer, fmt_f, fmt_opt, read_trace_csv, table, write_trace_row, OutputFormat, EVOLVE_HEADER, SCAN_HEADER, SIMULATE_HEADER,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Command {
    Classify,
    Evolve,
    EstimateQ,
    Simulate,
    Scan,
    CheckLemmas,
}

impl Command {
    fn default_format(self) -> OutputFormat {
        match self {
            Command::Evolve | Command::Scan => OutputFormat::Csv,
            _ => OutputFormat::Table,
        }
    }
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("output error: {0}")]
    Output(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Numerical(_) => 3,
            CliError::Output(_) => 1,
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Output(e.to_string())
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Output(e.to_string())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Output(e.to_string())
    }
}

impl From<EvolveError> for CliError {
    fn from(e: EvolveError) -> Self {
        CliError::Numerical(e.to_string())
    }
}

impl From<SimError> for CliError {
    fn from(e: SimError) -> Self {
        match e {
            SimError::PopulationTooSmall { .. } => CliError::Config(ConfigError::Field {
                path: "simulate.pop_size".into(),
                message: e.to_string(),
            }),
            _ => CliError::Numerical(e.to_string()),
        }
    }
}

impl From<ScanError> for CliError {
    fn from(e: ScanError) -> Self {
        match e {
            ScanError::Model(m) => CliError::Config(m.into()),
            ScanError::GridTooSmall(_) | ScanError::BadTolerance(_) => CliError::Config(ConfigError::Field {
                path: "scan".into(),
                message: e.to_string(),
            }),
            _ => CliError::Numerical(e.to_string()),
        }
    }
}

/// Runs `cmd` and returns the process exit code on success.
pub fn run<W: Write>(cmd: Command, cfg: &RunConfig, format: Option<OutputFormat>, out: &mut W) -> Result<u8, CliError> {
    let format = format.unwrap_or(cmd.default_format());
    match cmd {
        Command::Classify => cmd_classify(cfg, format, out),
        Command::Evolve => cmd_evolve(cfg, format, out),
        Command::EstimateQ => cmd_estimate_q(cfg, format, out),
        Command::Simulate => cmd_simulate(cfg, format, out),
        Command::Scan => cmd_scan(cfg, format, out),
        Command::CheckLemmas => cmd_check_lemmas(cfg, format, out),
    }
}

const UNBOUNDED: &str = "n/a: N unbounded";

fn verdict_fields(v: &PhaseVerdict) -> Vec<(&'static str, String)> {
    vec![
        ("verdict", v.verdict.to_string()),
        ("d_super", fmt_f(v.d_super)),
        ("d_sub", v.d_sub.map(fmt_f).unwrap_or_else(|| UNBOUNDED.into())),
        ("s_super", fmt_f(v.points.s_super)),
        ("m_super", fmt_f(v.points.m_super)),
        ("s_sub", v.points.s_sub.map(fmt_f).unwrap_or_else(|| UNBOUNDED.into())),
        ("m_sub", v.points.m_sub.map(|m| m.to_string()).unwrap_or_else(|| UNBOUNDED.into())),
    ]
}

fn key_values<W: Write>(out: &mut W, format: OutputFormat, fields: &[(&str, String)]) -> Result<(), CliError> {
    match format {
        OutputFormat::Table => {
            let rows: Vec<Vec<String>> = fields.iter().map(|(k, v)| vec![k.to_string(), v.clone()]).collect();
            let t = table(&["field", "value"], &rows);
            out.write_all(t.as_bytes())?;
        }
        OutputFormat::Csv => {
            let mut w = csv_writer(&mut *out);
            w.write_record(fields.iter().map(|(k, _)| *k))?;
            w.write_record(fields.iter().map(|(_, v)| v.as_str()))?;
            w.flush()?;
        }
        OutputFormat::Json => unreachable!("JSON output is built by each command"),
    }
    Ok(())
}

fn cmd_classify<W: Write>(cfg: &RunConfig, format: OutputFormat, out: &mut W) -> Result<u8, CliError> {
    let v = classify(&cfg.model()?);
    if format == OutputFormat::Json {
        let mut value = serde_json::to_value(v)?;
        if v.d_sub.is_none() {
            value["d_sub_note"] = json!(UNBOUNDED);
        }
        writeln!(out, "{}", serde_json::to_string_pretty(&value)?)?;
    } else {
        key_values(out, format, &verdict_fields(&v))?;
    }
    Ok(0)
}

fn run_evolve(cfg: &RunConfig) -> Result<(EvolutionTrace<f64>, Option<EvolveError>), CliError> {
    let model = cfg.model()?;
    Ok(match evolve(&model, cfg.evolve.steps, &cfg.evolve.options) {
        Ok(trace) => (trace, None),
        Err(EvolveFailure { partial, error }) => (partial, Some(error)),
    })
}

fn trace_rows(trace: &EvolutionTrace<f64>) -> Vec<Vec<String>> {
    trace
        .rows
        .iter()
        .map(|r| {
            vec![
                r.n.to_string(),
                fmt_f(r.mean_xn),
                fmt_f(r.q_upper),
                fmt_f(r.q_lower),
                r.support_max.to_string(),
                fmt_f(r.cumulative_leak),
            ]
        })
        .collect()
}

fn cmd_evolve<W: Write>(cfg: &RunConfig, format: OutputFormat, out: &mut W) -> Result<u8, CliError> {
    let (trace, error) = run_evolve(cfg)?;
    match format {
        OutputFormat::Csv => {
            let mut w = csv_writer(&mut *out);
            w.write_record(EVOLVE_HEADER)?;
            for r in &trace.rows {
                write_trace_row(&mut w, r)?;
            }
            w.flush()?;
        }
        OutputFormat::Table => out.write_all(table(&EVOLVE_HEADER, &trace_rows(&trace)).as_bytes())?,
        OutputFormat::Json => writeln!(out, "{}", serde_json::to_string_pretty(&trace)?)?,
    }
    match error {
        Some(e) => Err(e.into()),
        None => Ok(0),
    }
}

fn cmd_estimate_q<W: Write>(cfg: &RunConfig, format: OutputFormat, out: &mut W) -> Result<u8, CliError> {
    let (trace, error) = run_evolve(cfg)?;
    if let Some(e) = error {
        return Err(e.into());
    }
    let last = trace.last().expect("trace has generation 0");
    let certified = trace.first_positive_lower();
    if format == OutputFormat::Json {
        let value = json!({
            "steps": last.n,
            "mean": last.mean_xn,
            "q_lower": last.q_lower,
            "q_upper": last.q_upper,
            "certified_n": certified,
        });
        writeln!(out, "{}", serde_json::to_string_pretty(&value)?)?;
        return Ok(0);
    }
    let fields = [
        ("steps", last.n.to_string()),
        ("mean", fmt_f(last.mean_xn)),
        ("q_lower", fmt_f(last.q_lower)),
        ("q_upper", fmt_f(last.q_upper)),
        ("certified_n", certified.map(|n| n.to_string()).unwrap_or_default()),
    ];
    key_values(out, format, &fields)?;
    Ok(0)
}

fn cmd_simulate<W: Write>(cfg: &RunConfig, format: OutputFormat, out: &mut W) -> Result<u8, CliError> {
    let model = cfg.model()?;
    let s = &cfg.simulate;
    let seed = s.seed.ok_or_else(|| ConfigError::Field {
        path: "simulate.seed".into(),
        message: "a seed is required (config or --seed)".into(),
    })?;
    let gens = simulate(&model, s.pop_size, s.steps, seed)?;
    let exact: Vec<f64> = if s.exact {
        let trace = match evolve(&model, s.steps, &cfg.evolve.options) {
            Ok(t) => t,
            Err(f) => f.partial,
        };
        trace.rows.iter().map(|r| r.mean_xn).collect()
    } else {
        Vec::new()
    };
    let rows: Vec<Vec<String>> = gens
        .iter()
        .map(|g| {
            vec![
                g.n.to_string(),
                fmt_f(g.stats.mean),
                fmt_f(g.stats.std),
                fmt_f(g.stats.stderr),
                fmt_opt(exact.get(g.n).copied()),
            ]
        })
        .collect();
    match format {
        OutputFormat::Csv => {
            let mut w = csv_writer(&mut *out);
            w.write_record(SIMULATE_HEADER)?;
            for r in &rows {
                w.write_record(r)?;
            }
            w.flush()?;
        }
        OutputFormat::Table => out.write_all(table(&SIMULATE_HEADER, &rows).as_bytes())?,
        OutputFormat::Json => {
            let value = json!({
                "seed": seed,
                "pop_size": s.pop_size,
                "generations": gens.iter().map(|g| json!({
                    "n": g.n,
                    "mean": g.stats.mean,
                    "std": g.stats.std,
                    "stderr": g.stats.stderr,
                    "exact_mean": exact.get(g.n),
                })).collect::<Vec<_>>(),
            });
            writeln!(out, "{}", serde_json::to_string_pretty(&value)?)?;
        }
    }
    Ok(0)
}

fn fmt_interval(i: &Interval<f64>) -> String {
    format!("[{}, {}]", fmt_f(i.lo), fmt_f(i.hi))
}

fn boundary_line(name: &str, b: &Boundary<f64>) -> String {
    match b {
        Boundary::Found(i) => format!("{name} {} width {}", fmt_interval(i), fmt_f(i.width())),
        Boundary::NoSignChange => format!("{name} no boundary in range"),
        Boundary::Unavailable => format!("{name} {UNBOUNDED}"),
    }
}

fn summary_lines(rep: &BoundaryReport, slow: Option<String>) -> Vec<String> {
    let mut lines = vec![
        boundary_line("super_boundary", &rep.super_boundary),
        boundary_line("sub_boundary", &rep.sub_boundary),
    ];
    lines.push(match rep.undetermined_band {
        Some(b) if b.lo < b.hi => format!(
            "undetermined_band ({}, {}) undetermined by either sufficient criterion",
            fmt_f(b.lo),
            fmt_f(b.hi)
        ),
        Some(_) => "undetermined_band empty".into(),
        None => "undetermined_band n/a".into(),
    });
    lines.push(format!(
        "counts subcritical={} supercritical={} undetermined={}",
        rep.count(Verdict::Subcritical),
        rep.count(Verdict::Supercritical),
        rep.count(Verdict::Undetermined)
    ));
    lines.extend(slow);
    lines
}

/// Evolves the band midpoint and reads the bracket back from the CSV it renders.
fn slow_check(cfg: &RunConfig, rep: &BoundaryReport, steps: usize) -> String {
    let Some(band) = rep.undetermined_band.filter(|b| b.lo < b.hi) else {
        return "slow_check skipped: no undetermined band".into();
    };
    let p = band.midpoint();
    let attempt = || -> Result<String, CliError> {
        let model = cfg.family()?.model_at(p).map_err(ConfigError::from)?;
        let trace = evolve(&model, steps, &cfg.evolve.options).map_err(|f| CliError::Numerical(f.error.to_string()))?;
        let mut w = csv_writer(Vec::new());
        w.write_record(EVOLVE_HEADER)?;
        for r in &trace.rows {
            write_trace_row(&mut w, r)?;
        }
        let bytes = w.into_inner().map_err(|e| CliError::Output(e.to_string()))?;
        let last = *read_trace_csv(bytes.as_slice())?.last().expect("at least one row");
        Ok(format!(
            "slow_check parameter={} n={} q_lower={} q_upper={}",
            fmt_f(p),
            last.n,
            fmt_f(last.q_lower),
            fmt_f(last.q_upper)
        ))
    };
    attempt().unwrap_or_else(|e| format!("slow_check parameter={} failed: {e}", fmt_f(p)))
}

fn cmd_scan<W: Write>(cfg: &RunConfig, format: OutputFormat, out: &mut W) -> Result<u8, CliError> {
    let family = cfg.family()?;
    let settings = cfg.scan.as_ref().expect("family() checked the scan block");
    let grid = match &settings.params {
        Some(ps) => scan_points(&family, ps)?,
        None => scan(&family, settings.grid_points)?,
    };
    let rep = boundary_report_on(&family, grid, settings.tolerance)?;
    let slow = settings.slow.then(|| slow_check(cfg, &rep, settings.slow_steps));
    let rows: Vec<Vec<String>> = rep
        .grid
        .iter()
        .map(|g| {
            vec![
                fmt_f(g.parameter),
                g.verdict.verdict.to_string(),
                fmt_f(g.verdict.d_super),
                fmt_opt(g.verdict.d_sub),
            ]
        })
        .collect();
    match format {
        OutputFormat::Csv => {
            {
                let mut w = csv_writer(&mut *out);
                w.write_record(SCAN_HEADER)?;
                for r in &rows {
                    w.write_record(r)?;
                }
                w.flush()?;
            }
            for line in summary_lines(&rep, slow) {
                writeln!(out, "# {line}")?;
            }
        }
        OutputFormat::Table => {
            out.write_all(table(&SCAN_HEADER, &rows).as_bytes())?;
            for line in summary_lines(&rep, slow) {
                writeln!(out, "{line}")?;
            }
        }
        OutputFormat::Json => {
            let mut value = serde_json::to_value(&rep)?;
            if let Some(s) = slow {
                value["slow_check"] = json!(s);
            }
            writeln!(out, "{}", serde_json::to_string_pretty(&value)?)?;
        }
    }
    Ok(0)
}

fn cmd_check_lemmas<W: Write>(cfg: &RunConfig, format: OutputFormat, out: &mut W) -> Result<u8, CliError> {
    let outcomes = lemma_audit(&cfg.model()?, &cfg.audit)?;
    let failed = outcomes.iter().any(|o| o.status == LemmaStatus::Fail);
    let status = |s: &LemmaStatus| match s {
        LemmaStatus::Pass => "PASS".to_string(),
        LemmaStatus::Fail => "FAIL".to_string(),
        LemmaStatus::Skipped(r) => format!("SKIPPED({r})"),
    };
    let header = ["lemma", "status", "worst_margin", "detail"];
    let rows: Vec<Vec<String>> = outcomes
        .iter()
        .map(|o| vec![o.lemma.to_string(), status(&o.status), fmt_opt(o.worst_margin), o.detail.clone()])
        .collect();
    match format {
        OutputFormat::Csv => {
            let mut w = csv_writer(&mut *out);
            w.write_record(header)?;
            for r in &rows {
                w.write_record(r)?;
            }
            w.flush()?;
        }
        OutputFormat::Table => out.write_all(table(&header, &rows).as_bytes())?,
        OutputFormat::Json => writeln!(out, "{}", serde_json::to_string_pretty(&outcomes)?)?,
    }
    Ok(if failed { 1 } else { 0 })
}
