use std::fs;
use std::path::{Path, PathBuf};

use covmech::catalog::ControlKind;
use covmech::dynamics::{integrate, StepStats, TrajectoryStatus};
use covmech::killing::{closure_check, conserved_check, hierarchy_check, killing_check, CheckOutcome};
use covmech::sweep::{self, Execution};
use covmech::PhasePoint;
use serde::Serialize;

use crate::config::{Resolved, RunConfig};
use crate::{CliError, Status};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Simulate,
    Verify,
    BracketTable,
}

/// A negative control must miss its tolerance by at least this factor.
pub const CONTROL_MARGIN: f64 = 1e3;

/// What a command produced.
#[derive(Debug, Clone)]
pub struct Outcome {
    pub status: Status,
    pub files: Vec<PathBuf>,
    /// Human-readable lines for stdout.
    pub summary: Vec<String>,
    pub warnings: Vec<String>,
}

#[derive(Serialize)]
struct ChartInfo<'a> {
    name: &'a str,
    coordinates: &'a [String],
    signature: &'a [i8],
}

fn chart_info(r: &Resolved) -> ChartInfo<'_> {
    let chart = r.system.chart();
    ChartInfo {
        name: chart.name(),
        coordinates: chart.coordinate_names(),
        signature: chart.signature_hint(),
    }
}

fn write_json<T: Serialize>(dir: &Path, name: &str, report: &T) -> Result<PathBuf, CliError> {
    fs::create_dir_all(dir).map_err(|e| CliError::Config(format!("{}: {e}", dir.display())))?;
    let path = dir.join(name);
    let mut text = serde_json::to_string_pretty(report).map_err(|e| CliError::Numerical(e.to_string()))?;
    text.push('\n');
    fs::write(&path, text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    Ok(path)
}

fn verdict(ok: bool) -> &'static str {
    if ok {
        "PASS"
    } else {
        "FAIL"
    }
}

#[derive(Serialize)]
struct DriftEntry {
    name: String,
    initial: f64,
    final_value: f64,
    max_abs_drift: f64,
    max_rel_drift: f64,
    /// Only registered invariants are judged.
    tolerance: Option<f64>,
    pass: bool,
}

#[derive(Serialize)]
struct SimulateReport<'a> {
    command: &'static str,
    config: &'a RunConfig,
    chart: ChartInfo<'a>,
    status: &'a TrajectoryStatus,
    stats: StepStats,
    final_tau: f64,
    samples: usize,
    drift: Vec<DriftEntry>,
    pass: bool,
}

pub fn simulate(r: &Resolved) -> Result<Outcome, CliError> {
    let cfg = &r.config;
    let span = (cfg.span[0], cfg.span[1]);
    let tr = integrate(&r.system.hamiltonian, &r.initial, &cfg.integrator, span, &r.monitors)?;
    let invariants = r.system.invariant_names();
    let tol = r.system.tolerances.drift;
    let drift: Vec<DriftEntry> = tr
        .monitors
        .iter()
        .map(|m| {
            let judged = invariants.contains(&m.name);
            DriftEntry {
                name: m.name.clone(),
                initial: m.initial,
                final_value: m.initial + m.drift.last().copied().unwrap_or(0.0),
                max_abs_drift: m.max_abs_drift,
                max_rel_drift: m.max_rel_drift,
                tolerance: judged.then_some(tol),
                pass: !judged || m.max_rel_drift <= tol,
            }
        })
        .collect();
    let pass = drift.iter().all(|d| d.pass);

    let mut out = Outcome {
        status: Status::Pass,
        files: Vec::new(),
        summary: Vec::new(),
        warnings: Vec::new(),
    };
    let dir = &cfg.output.dir;
    if cfg.output.csv {
        fs::create_dir_all(dir).map_err(|e| CliError::Config(format!("{}: {e}", dir.display())))?;
        let path = dir.join("trajectory.csv");
        let file = fs::File::create(&path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        tr.write_csv(std::io::BufWriter::new(file), r.system.chart().coordinate_names())?;
        out.files.push(path);
    }
    let report = SimulateReport {
        command: "simulate",
        config: cfg,
        chart: chart_info(r),
        status: &tr.status,
        stats: tr.stats,
        final_tau: tr.final_sample().tau,
        samples: tr.samples.len(),
        drift,
        pass,
    };
    if cfg.output.json {
        out.files.push(write_json(dir, "simulate.json", &report)?);
    }

    out.summary.push(format!(
        "{}: {} accepted steps, {} rejected, tau_end = {}",
        r.system.name, tr.stats.accepted, tr.stats.rejected, report.final_tau
    ));
    for d in &report.drift {
        let tol = d.tolerance.map_or("untracked".to_string(), |t| format!("tol {t:.0e}"));
        out.summary.push(format!(
            "  {:<5} {:<10} max relative drift {:.3e} ({tol})",
            if d.tolerance.is_some() { verdict(d.pass) } else { "-" },
            d.name,
            d.max_rel_drift
        ));
    }
    if let TrajectoryStatus::DomainStop { tau } = tr.status {
        out.warnings.push(format!("orbit reached the domain margin at tau = {tau}; integration stopped"));
    }
    tr.check()?;
    out.status = if pass { Status::Pass } else { Status::CheckFailed };
    Ok(out)
}

#[derive(Serialize)]
struct CheckEntry {
    kind: &'static str,
    name: String,
    tolerance: f64,
    max_ratio: f64,
    residual: f64,
    scale: f64,
    max_residual: f64,
    mean_residual: f64,
    worst_point: PhasePoint,
    #[serde(skip_serializing_if = "Option::is_none")]
    worst_rank: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    rank_ratios: Option<Vec<f64>>,
    pass: bool,
}

impl CheckEntry {
    fn new(kind: &'static str, name: &str, tolerance: f64, c: &CheckOutcome, sample: &[PhasePoint]) -> Self {
        CheckEntry {
            kind,
            name: name.to_string(),
            tolerance,
            max_ratio: c.max_ratio,
            residual: c.residual,
            scale: c.scale,
            max_residual: c.max_residual,
            mean_residual: c.mean_residual,
            worst_point: sample[c.worst_index].clone(),
            worst_rank: None,
            rank_ratios: None,
            pass: c.passes(tolerance),
        }
    }

    fn hierarchy(name: &str, tolerance: f64, ranks: &[CheckOutcome], sample: &[PhasePoint]) -> Self {
        let worst = (0..ranks.len())
            .max_by(|&a, &b| ranks[a].max_ratio.total_cmp(&ranks[b].max_ratio))
            .unwrap_or(0);
        let mut e = CheckEntry::new("hierarchy", name, tolerance, &ranks[worst], sample);
        e.worst_rank = Some(worst);
        e.rank_ratios = Some(ranks.iter().map(|c| c.max_ratio).collect());
        e.pass = ranks.iter().all(|c| c.passes(tolerance));
        e
    }
}

#[derive(Serialize)]
struct ControlEntry {
    #[serde(flatten)]
    check: CheckEntry,
    /// `max_ratio / tolerance`; controls must reach the required margin.
    margin: f64,
    required_margin: f64,
    failed_as_expected: bool,
}

#[derive(Serialize)]
struct VerifyReport<'a> {
    command: &'static str,
    config: &'a RunConfig,
    chart: ChartInfo<'a>,
    points: usize,
    checks: Vec<CheckEntry>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    negative_controls: Vec<ControlEntry>,
    pass: bool,
}

pub fn verify(r: &Resolved) -> Result<Outcome, CliError> {
    let cfg = &r.config;
    let sys = &r.system;
    let tol = sys.tolerances;
    let sample = sys.sample(cfg.points, cfg.seed);
    let ham = &sys.hamiltonian;

    let mut checks = Vec::new();
    for o in &sys.invariants {
        let c = conserved_check(ham, &**o, &sample)?;
        checks.push(CheckEntry::new("conserved", o.name(), tol.conserved, &c, &sample));
    }
    for k in &sys.killing {
        let c = killing_check(sys.chart(), &k.field, &sample)?;
        checks.push(CheckEntry::new("killing", &k.name, tol.killing, &c, &sample));
    }
    for s in &sys.series {
        let ranks = hierarchy_check(ham, &s.series, &sample)?;
        checks.push(CheckEntry::hierarchy(&s.name, tol.hierarchy, &ranks, &sample));
    }
    for (a, b) in &sys.closure_pairs {
        let c = closure_check(ham, &sys.observable(a)?, &sys.observable(b)?, &sample)?;
        checks.push(CheckEntry::new("closure", &format!("{{{a}, {b}}}"), tol.closure, &c, &sample));
    }

    let mut controls = Vec::new();
    if cfg.negative_controls {
        for nc in &sys.negative_controls {
            let check = match &nc.kind {
                ControlKind::Conserved { hamiltonian, observable } => {
                    let c = conserved_check(hamiltonian, &**observable, &sample)?;
                    CheckEntry::new("conserved", &nc.name, nc.tolerance, &c, &sample)
                }
                ControlKind::Hierarchy { hamiltonian, series } => {
                    let ranks = hierarchy_check(hamiltonian, series, &sample)?;
                    CheckEntry::hierarchy(&nc.name, nc.tolerance, &ranks, &sample)
                }
                ControlKind::Killing { chart, field } => {
                    let c = killing_check(chart, field, &sample)?;
                    CheckEntry::new("killing", &nc.name, nc.tolerance, &c, &sample)
                }
            };
            let margin = check.max_ratio / nc.tolerance;
            controls.push(ControlEntry {
                check,
                margin,
                required_margin: CONTROL_MARGIN,
                failed_as_expected: margin >= CONTROL_MARGIN,
            });
        }
    }

    let pass = checks.iter().all(|c| c.pass) && controls.iter().all(|c| c.failed_as_expected);
    let mut out = Outcome {
        status: if pass { Status::Pass } else { Status::CheckFailed },
        files: Vec::new(),
        summary: Vec::new(),
        warnings: Vec::new(),
    };
    out.summary.push(format!("{}: {} sample points, seed {}", sys.name, cfg.points, cfg.seed));
    for c in &checks {
        let rank = c.worst_rank.map_or(String::new(), |k| format!(" (worst rank {k})"));
        out.summary.push(format!(
            "  {} {:<9} {:<16} max ratio {:.3e} tol {:.0e}{rank}",
            verdict(c.pass),
            c.kind,
            c.name,
            c.max_ratio,
            c.tolerance
        ));
    }
    for c in &controls {
        let rank = c.check.worst_rank.map_or(String::new(), |k| format!(", worst rank {k}"));
        out.summary.push(format!(
            "  {} control   {:<16} max ratio {:.3e} = {:.1e} x tol ({}{rank})",
            verdict(c.failed_as_expected),
            c.check.name,
            c.check.max_ratio,
            c.margin,
            if c.failed_as_expected { "fails as required" } else { "should have failed" }
        ));
    }
    let report = VerifyReport {
        command: "verify",
        config: cfg,
        chart: chart_info(r),
        points: sample.len(),
        checks,
        negative_controls: controls,
        pass,
    };
    if cfg.output.json {
        out.files.push(write_json(&cfg.output.dir, "verify.json", &report)?);
    }
    Ok(out)
}

#[derive(Serialize)]
struct TableEntry {
    /// `max |{G_i, G_j}|` over the sample.
    max_abs: f64,
    /// Largest `|{G_i, G_j}| / scale`.
    max_ratio: f64,
    /// Bracket at the first sample point, showing the sign pattern.
    first_point_value: f64,
    commuting: bool,
}

#[derive(Serialize)]
struct ClosureEntry {
    pair: [String; 2],
    max_ratio: f64,
    tolerance: f64,
    pass: bool,
}

#[derive(Serialize)]
struct TableReport<'a> {
    command: &'static str,
    config: &'a RunConfig,
    chart: ChartInfo<'a>,
    points: usize,
    observables: &'a [String],
    commuting_tolerance: f64,
    table: Vec<Vec<TableEntry>>,
    antisymmetric: bool,
    closure: Vec<ClosureEntry>,
    pass: bool,
}

pub fn bracket_table(r: &Resolved) -> Result<Outcome, CliError> {
    let cfg = &r.config;
    let sys = &r.system;
    let n = r.observables.len();
    if n < 2 {
        return Err(CliError::Config("bracket-table needs at least two observables".into()));
    }
    let ctx = sys.hamiltonian.context();
    let sample = sys.sample(cfg.points, cfg.seed);
    // per point: n×n (value, scale)
    let per_point = sweep::map(Execution::default(), &sample, |p| -> covmech::Result<Vec<(f64, f64)>> {
        let frame = ctx.frame(p)?;
        let grads: Vec<_> = r.observables.iter().map(|o| o.gradient(p)).collect();
        let mut out = Vec::with_capacity(n * n);
        for gi in &grads {
            for gj in &grads {
                let b = frame.bracket(gi, gj);
                out.push((b.value, b.scale));
            }
        }
        Ok(out)
    });
    let per_point = per_point.into_iter().collect::<covmech::Result<Vec<_>>>()?;

    let tol = sys.tolerances.conserved;
    let mut antisymmetric = true;
    let mut table = Vec::with_capacity(n);
    for i in 0..n {
        let mut row = Vec::with_capacity(n);
        for j in 0..n {
            let pairs: Vec<(f64, f64)> = per_point.iter().map(|v| (v[i * n + j].0.abs(), v[i * n + j].1)).collect();
            antisymmetric &= per_point.iter().all(|v| v[i * n + j].0 == -v[j * n + i].0);
            let c = CheckOutcome::from_pairs(&pairs);
            row.push(TableEntry {
                max_abs: c.max_residual,
                max_ratio: c.max_ratio,
                first_point_value: per_point[0][i * n + j].0,
                commuting: c.passes(tol),
            });
        }
        table.push(row);
    }

    let mut closure = Vec::new();
    for i in 0..n {
        for j in (i + 1)..n {
            let c = closure_check(&sys.hamiltonian, &r.observables[i], &r.observables[j], &sample)?;
            closure.push(ClosureEntry {
                pair: [cfg.observables[i].clone(), cfg.observables[j].clone()],
                max_ratio: c.max_ratio,
                tolerance: sys.tolerances.closure,
                pass: c.passes(sys.tolerances.closure),
            });
        }
    }
    let pass = antisymmetric && closure.iter().all(|c| c.pass);

    let mut out = Outcome {
        status: if pass { Status::Pass } else { Status::CheckFailed },
        files: Vec::new(),
        summary: Vec::new(),
        warnings: Vec::new(),
    };
    let width = cfg.observables.iter().map(|s| s.len()).max().unwrap_or(1).max(10);
    let mut header = format!("{:width$}", "");
    for name in &cfg.observables {
        header += &format!(" {name:>width$}");
    }
    out.summary.push(format!("{}: max |{{G_i, G_j}}| over {} points (* = commuting)", sys.name, sample.len()));
    out.summary.push(header);
    for (name, row) in cfg.observables.iter().zip(&table) {
        let mut line = format!("{name:width$}");
        for e in row {
            let cell = format!("{:.2e}{}", e.max_abs, if e.commuting { "*" } else { " " });
            line += &format!(" {cell:>width$}");
        }
        out.summary.push(line);
    }
    out.summary.push(format!("  antisymmetric: {antisymmetric}"));
    for c in &closure {
        out.summary.push(format!(
            "  {} closure {{{}, {}}} max ratio {:.3e} tol {:.0e}",
            verdict(c.pass),
            c.pair[0],
            c.pair[1],
            c.max_ratio,
            c.tolerance
        ));
    }
    let report = TableReport {
        command: "bracket-table",
        config: cfg,
        chart: chart_info(r),
        points: sample.len(),
        observables: &cfg.observables,
        commuting_tolerance: tol,
        table,
        antisymmetric,
        closure,
        pass,
    };
    if cfg.output.json {
        out.files.push(write_json(&cfg.output.dir, "bracket_table.json", &report)?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::{parse, Overrides};

    fn resolved(text: &str, dir: &Path) -> Resolved {
        let overrides = Overrides {
            output: Some(dir.to_path_buf()),
            ..Overrides::default()
        };
        parse(text, "test").unwrap().resolve(&overrides).unwrap()
    }

    #[test]
    fn simulate_writes_both_files() {
        let dir = tempfile::tempdir().unwrap();
        let r = resolved(r#"{"system": "flat", "span": [0, 5]}"#, dir.path());
        let out = simulate(&r).unwrap();
        assert_eq!(out.status, Status::Pass);
        assert_eq!(out.files.len(), 2);
        assert!(out.files.iter().all(|f| f.exists()));
        assert!(out.warnings.is_empty());
    }

    #[test]
    fn outputs_can_be_switched_off() {
        let dir = tempfile::tempdir().unwrap();
        let r = resolved(r#"{"system": "flat", "output": {"csv": false, "json": false}}"#, dir.path());
        assert!(simulate(&r).unwrap().files.is_empty());
        assert!(verify(&r).unwrap().files.is_empty());
    }

    #[test]
    fn bracket_table_needs_two_observables() {
        let dir = tempfile::tempdir().unwrap();
        let r = resolved(r#"{"system": "flat", "observables": ["J"]}"#, dir.path());
        assert!(matches!(bracket_table(&r), Err(CliError::Config(_))));
    }
}
