//! Run configuration: one JSON document per run.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use covmech::catalog::{self, System};
use covmech::dynamics::{momentum_from_velocity, IntegratorConfig};
use covmech::{PhasePoint, SharedObservable};
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub system: String,
    #[serde(default)]
    pub params: BTreeMap<String, f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial: Option<InitialState>,
    #[serde(default = "default_integrator")]
    pub integrator: IntegratorConfig,
    #[serde(default = "default_span")]
    pub span: [f64; 2],
    /// Observables logged along trajectories; empty means every registered
    /// invariant.
    #[serde(default)]
    pub monitors: Vec<String>,
    /// Observables tabulated by `bracket-table`; empty means every
    /// registered invariant.
    #[serde(default)]
    pub observables: Vec<String>,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default = "default_points")]
    pub points: usize,
    #[serde(default)]
    pub negative_controls: bool,
    #[serde(default)]
    pub output: OutputConfig,
}

/// Starting point; give either `pi` or `velocity`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialState {
    pub x: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pi: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub velocity: Option<Vec<f64>>,
    #[serde(default)]
    pub t: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    /// Not embedded in reports, so identical runs into different
    /// directories produce identical files.
    #[serde(default = "default_dir", skip_serializing)]
    pub dir: PathBuf,
    #[serde(default = "yes")]
    pub csv: bool,
    #[serde(default = "yes")]
    pub json: bool,
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig {
            dir: default_dir(),
            csv: true,
            json: true,
        }
    }
}

fn default_integrator() -> IntegratorConfig {
    IntegratorConfig::rk45(1e-10, 1e-12)
}
fn default_span() -> [f64; 2] {
    [0.0, 100.0]
}
fn default_seed() -> u64 {
    42
}
fn default_points() -> usize {
    100
}
fn default_dir() -> PathBuf {
    PathBuf::from(".")
}
fn yes() -> bool {
    true
}

/// Command-line values that take precedence over the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub output: Option<PathBuf>,
    pub seed: Option<u64>,
    pub points: Option<usize>,
    pub negative_controls: bool,
}

pub fn parse(text: &str, origin: &str) -> Result<RunConfig, CliError> {
    let mut de = serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(&mut de).map_err(|e| {
        let path = e.path().to_string();
        let inner = e.into_inner();
        CliError::Config(format!(
            "{origin}: at `{path}` (line {}, column {}): {inner}",
            inner.line(),
            inner.column()
        ))
    })
}

pub fn load(path: &Path) -> Result<RunConfig, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    parse(&text, &path.display().to_string())
}

/// A configuration with every default filled in, plus the objects it names.
pub struct Resolved {
    pub config: RunConfig,
    pub system: System,
    pub initial: PhasePoint,
    pub monitors: Vec<SharedObservable>,
    pub observables: Vec<SharedObservable>,
}

fn lookup(system: &System, names: &[String]) -> Result<Vec<SharedObservable>, CliError> {
    names
        .iter()
        .map(|n| system.observable(n).map_err(CliError::from))
        .collect()
}

fn initial_point(system: &System, init: &InitialState) -> Result<PhasePoint, CliError> {
    let d = system.chart().dim();
    let k = system.hamiltonian.context().algebra_dim();
    let bad = |m: String| Err(CliError::Config(format!("initial: {m}")));
    if init.x.len() != d {
        return bad(format!("x has {} components, the chart has {d}", init.x.len()));
    }
    if init.t.len() != k {
        return bad(format!("t has {} components, the background needs {k}", init.t.len()));
    }
    let pi = match (&init.pi, &init.velocity) {
        (Some(pi), None) => pi.clone(),
        (None, Some(v)) => {
            if v.len() != d {
                return bad(format!("velocity has {} components, the chart has {d}", v.len()));
            }
            momentum_from_velocity(&system.hamiltonian, &init.x, v)?
        }
        _ => return bad("give exactly one of `pi` and `velocity`".into()),
    };
    if pi.len() != d {
        return bad(format!("pi has {} components, the chart has {d}", pi.len()));
    }
    let p = PhasePoint::with_charges(init.x.clone(), pi, init.t.clone());
    system.hamiltonian.context().check_point(&p)?;
    Ok(p)
}

impl RunConfig {
    pub fn resolve(mut self, overrides: &Overrides) -> Result<Resolved, CliError> {
        if let Some(dir) = &overrides.output {
            self.output.dir = dir.clone();
        }
        if let Some(seed) = overrides.seed {
            self.seed = seed;
        }
        if let Some(points) = overrides.points {
            self.points = points;
        }
        self.negative_controls |= overrides.negative_controls;
        if self.points == 0 {
            return Err(CliError::Config("points must be positive".into()));
        }
        if !(self.span[1] > self.span[0]) || !self.span.iter().all(|v| v.is_finite()) {
            return Err(CliError::Config(format!("span must be finite and increasing, got {:?}", self.span)));
        }
        self.integrator.validate()?;

        let system = catalog::build(&self.system, &self.params)?;
        self.params = system.params.clone();
        let initial = match &self.initial {
            Some(init) => initial_point(&system, init)?,
            None => system.default_initial.clone(),
        };
        self.initial = Some(InitialState {
            x: initial.x.clone(),
            pi: Some(initial.pi.clone()),
            velocity: None,
            t: initial.t.clone(),
        });
        if self.monitors.is_empty() {
            self.monitors = system.invariant_names();
        }
        if self.observables.is_empty() {
            self.observables = system.invariant_names();
        }
        let monitors = lookup(&system, &self.monitors)?;
        let observables = lookup(&system, &self.observables)?;
        Ok(Resolved {
            config: self,
            system,
            initial,
            monitors,
            observables,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn diagnostics_name_the_field() {
        let err = parse("{\n  \"system\": \"kerr\",\n  \"integrator\": {\"method\": \"euler\"}\n}", "cfg.json").unwrap_err();
        let CliError::Config(msg) = err else { panic!() };
        assert!(msg.contains("integrator.method") && msg.contains("line 3"), "{msg}");
        assert!(parse("{\"system\": \"kerr\", \"sistem\": 1}", "c").is_err());
    }

    #[test]
    fn resolution_fills_defaults_and_round_trips() {
        let cfg = parse("{\"system\": \"su2-plane\"}", "c").unwrap();
        let r = cfg.resolve(&Overrides::default()).unwrap();
        assert_eq!(r.config.params["g"], 1.0);
        assert_eq!(r.config.monitors, vec!["H", "J", "K_x", "K_y", "|t|^2"]);
        let text = serde_json::to_string(&r.config).unwrap();
        let again = parse(&text, "c").unwrap().resolve(&Overrides::default()).unwrap();
        assert_eq!(again.config, r.config);
        assert_eq!(again.initial, r.initial);
    }

    #[test]
    fn velocity_initial_data() {
        let cfg = parse(
            r#"{"system": "flat", "params": {"mass": 2}, "initial": {"x": [0, 0], "velocity": [1, 0]}}"#,
            "c",
        )
        .unwrap();
        let r = cfg.resolve(&Overrides::default()).unwrap();
        assert_eq!(r.initial.pi, vec![2.0, 0.0]);
    }

    #[test]
    fn rejects_bad_references() {
        let r = parse(r#"{"system": "kerr", "monitors": ["Q"]}"#, "c").unwrap().resolve(&Overrides::default());
        assert!(matches!(r, Err(CliError::Config(_))));
        let r = parse(r#"{"system": "kerr", "initial": {"x": [0, 1.0, 1, 0], "pi": [0, 0, 0, 0]}}"#, "c")
            .unwrap()
            .resolve(&Overrides::default());
        assert!(matches!(r, Err(CliError::Config(_))));
    }
}
