//! Hamiltonians, equations of motion and trajectory integration.

use std::io::Write;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::LocalGeometry;
use crate::phase::{Background, BracketContext, Observable, PhaseFrame, PhaseGradient, PhasePoint, SharedObservable};
use crate::sweep::{self, Execution};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum HamiltonianKind {
    Geodesic,
    Abelian,
    Nonabelian,
}

/// `H = (1/2m) g^{μν} π_μ π_ν + Φ(x)` over a bracket context.
#[derive(Debug, Clone)]
pub struct HamiltonianSpec {
    mass: f64,
    ctx: BracketContext,
}

impl HamiltonianSpec {
    pub fn new(mass: f64, ctx: BracketContext) -> Result<Self> {
        if !(mass > 0.0 && mass.is_finite()) {
            return Err(Error::InvalidParameter {
                name: "mass".into(),
                reason: format!("must be positive, got {mass}"),
            });
        }
        Ok(HamiltonianSpec { mass, ctx })
    }

    pub fn mass(&self) -> f64 {
        self.mass
    }

    pub fn context(&self) -> &BracketContext {
        &self.ctx
    }

    pub fn kind(&self) -> HamiltonianKind {
        match self.ctx.background() {
            Background::None => HamiltonianKind::Geodesic,
            Background::Abelian(_) => HamiltonianKind::Abelian,
            Background::NonAbelian(_) => HamiltonianKind::Nonabelian,
        }
    }

    pub fn eval(&self, p: &PhasePoint) -> Result<f64> {
        self.ctx.check_point(p)?;
        let ginv = self.ctx.chart().inverse_metric_at(&p.x)?;
        Ok(self.eval_with(&ginv, p))
    }

    fn eval_with(&self, ginv: &nalgebra::DMatrix<f64>, p: &PhasePoint) -> f64 {
        let d = p.dim();
        let mut kin = 0.0;
        for m in 0..d {
            for n in 0..d {
                kin += ginv[(m, n)] * p.pi[m] * p.pi[n];
            }
        }
        let phi = self.ctx.scalar_potential().map_or(0.0, |s| s.value(&p.x));
        0.5 * kin / self.mass + phi
    }

    /// Exact gradient from the metric partials at a prepared point.
    fn gradient_with(&self, local: &LocalGeometry, p: &PhasePoint) -> PhaseGradient {
        let d = p.dim();
        let up = local.raise(&p.pi);
        let dphi = self.ctx.scalar_potential().map(|s| s.gradient(&p.x));
        let dx = (0..d)
            .map(|l| {
                let dg = &local.dg[l];
                let mut s = 0.0;
                for a in 0..d {
                    for b in 0..d {
                        s += up[a] * dg[(a, b)] * up[b];
                    }
                }
                -0.5 * s / self.mass + dphi.as_ref().map_or(0.0, |g| g[l])
            })
            .collect();
        PhaseGradient {
            dx,
            dpi: up.iter().map(|v| v / self.mass).collect(),
            dt: vec![0.0; p.algebra_dim()],
        }
    }

    pub fn observable(&self) -> SharedObservable {
        Arc::new(HamiltonianObservable { spec: self.clone() })
    }
}

struct HamiltonianObservable {
    spec: HamiltonianSpec,
}

impl Observable for HamiltonianObservable {
    fn name(&self) -> &str {
        "H"
    }

    fn value(&self, p: &PhasePoint) -> f64 {
        self.spec.eval(p).unwrap_or(f64::NAN)
    }

    fn gradient(&self, p: &PhasePoint) -> PhaseGradient {
        match self.spec.ctx.chart().local(&p.x) {
            Ok(local) => self.spec.gradient_with(&local, p),
            Err(_) => {
                let mut g = PhaseGradient::zeros(p.dim(), p.algebra_dim());
                g.dx.iter_mut().chain(&mut g.dpi).for_each(|v| *v = f64::NAN);
                g
            }
        }
    }
}

/// Time derivative of the flat state `(x, π, t)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Tangent {
    pub dx: Vec<f64>,
    pub dpi: Vec<f64>,
    pub dt: Vec<f64>,
}

impl Tangent {
    pub fn to_state(&self) -> Vec<f64> {
        let mut s = self.dx.clone();
        s.extend_from_slice(&self.dpi);
        s.extend_from_slice(&self.dt);
        s
    }
}

fn unit_gradient(frame: &PhaseFrame, algebra_dim: usize, slot: usize) -> PhaseGradient {
    let d = frame.dim();
    let mut g = PhaseGradient::zeros(d, algebra_dim);
    if slot < d {
        g.dx[slot] = 1.0;
    } else if slot < 2 * d {
        g.dpi[slot - d] = 1.0;
    } else {
        g.dt[slot - 2 * d] = 1.0;
    }
    g
}

/// Flow generated by `H`: every state variable `z` evolves as `{z, H}`.
pub fn equations_of_motion(spec: &HamiltonianSpec, p: &PhasePoint) -> Result<Tangent> {
    let frame = spec.ctx.frame(p)?;
    let hg = spec.gradient_with(&frame.local, p);
    let d = p.dim();
    let k = p.algebra_dim();
    let rates: Vec<f64> = (0..2 * d + k)
        .map(|slot| frame.bracket(&unit_gradient(&frame, k, slot), &hg).value)
        .collect();
    Ok(Tangent {
        dx: rates[..d].to_vec(),
        dpi: rates[d..2 * d].to_vec(),
        dt: rates[2 * d..].to_vec(),
    })
}

/// Curved-space Lorentz force with Wong charge precession, written out:
///
/// ```text
/// ẋ^μ  = g^{μν} π_ν / m
/// π̇_μ  = m ∂_λ g_{μν} ẋ^λ ẋ^ν − m g_{μρ} Γ_{κλ}^{ ρ} ẋ^κ ẋ^λ + Q_{μν} ẋ^ν − ∂_μ Φ
/// ṫ_a  = −g f_{ab}^{ c} t_c A_μ^b ẋ^μ
/// ```
pub fn equations_of_motion_closed_form(spec: &HamiltonianSpec, p: &PhasePoint) -> Result<Tangent> {
    let ctx = &spec.ctx;
    ctx.check_point(p)?;
    let local = ctx.chart().local(&p.x)?;
    let d = p.dim();
    let m = spec.mass;
    let v: Vec<f64> = local.raise(&p.pi).iter().map(|u| u / m).collect();
    let q = ctx.field_matrix(&p.x, &p.t)?;
    let dphi = ctx.scalar_potential().map(|s| s.gradient(&p.x));
    let dpi = (0..d)
        .map(|mu| {
            let mut s = 0.0;
            for l in 0..d {
                for n in 0..d {
                    s += m * local.dg[l][(mu, n)] * v[l] * v[n];
                }
            }
            for r in 0..d {
                let mut acc = 0.0;
                for kk in 0..d {
                    for l in 0..d {
                        acc += local.gamma.get(kk, l, r) * v[kk] * v[l];
                    }
                }
                s -= m * local.g[(mu, r)] * acc;
            }
            if let Some(q) = &q {
                s += (0..d).map(|n| q[(mu, n)] * v[n]).sum::<f64>();
            }
            if let Some(g) = &dphi {
                s -= g[mu];
            }
            s
        })
        .collect();
    let dt = match ctx.background() {
        Background::NonAbelian(bg) => {
            let a = bg.potential_at(&p.x);
            let f = bg.structure();
            let n = bg.algebra_dim();
            (0..n)
                .map(|ai| {
                    let mut s = 0.0;
                    for b in 0..n {
                        let av: f64 = (0..d).map(|mu| a[b][mu] * v[mu]).sum();
                        for c in 0..n {
                            s += f.get(ai, b, c) * p.t[c] * av;
                        }
                    }
                    -bg.coupling() * s
                })
                .collect()
        }
        _ => Vec::new(),
    };
    Ok(Tangent { dx: v, dpi, dt })
}

/// `π_μ = m g_{μν} v^ν`.
pub fn momentum_from_velocity(spec: &HamiltonianSpec, x: &[f64], v: &[f64]) -> Result<Vec<f64>> {
    let g = spec.ctx.chart().metric_at(x)?;
    check_len(v.len(), x.len())?;
    Ok((0..x.len())
        .map(|m| spec.mass * (0..x.len()).map(|n| g[(m, n)] * v[n]).sum::<f64>())
        .collect())
}

/// `v^μ = g^{μν} π_ν / m`.
pub fn velocity_from_momentum(spec: &HamiltonianSpec, x: &[f64], pi: &[f64]) -> Result<Vec<f64>> {
    let ginv = spec.ctx.chart().inverse_metric_at(x)?;
    check_len(pi.len(), x.len())?;
    Ok((0..x.len())
        .map(|m| (0..x.len()).map(|n| ginv[(m, n)] * pi[n]).sum::<f64>() / spec.mass)
        .collect())
}

fn check_len(got: usize, expected: usize) -> Result<()> {
    if got != expected {
        return Err(Error::DimensionMismatch {
            what: "vector",
            expected,
            got,
        });
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Rk4Fixed,
    Rk45Adaptive,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IntegratorConfig {
    pub method: Method,
    /// Fixed step for `rk4-fixed`; initial step for `rk45-adaptive` (0 picks one).
    #[serde(default)]
    pub step: f64,
    #[serde(default = "default_rel_tol")]
    pub rel_tol: f64,
    #[serde(default = "default_abs_tol")]
    pub abs_tol: f64,
    #[serde(default = "default_max_steps")]
    pub max_steps: usize,
    /// Stop once the chart's boundary distance drops below this value.
    #[serde(default)]
    pub domain_margin: f64,
    /// Keep every n-th accepted step in the sample list.
    #[serde(default = "default_record_every")]
    pub record_every: usize,
}

fn default_rel_tol() -> f64 {
    1e-10
}
fn default_abs_tol() -> f64 {
    1e-12
}
fn default_max_steps() -> usize {
    10_000_000
}
fn default_record_every() -> usize {
    1
}

impl IntegratorConfig {
    pub fn rk4(step: f64) -> Self {
        IntegratorConfig {
            method: Method::Rk4Fixed,
            step,
            rel_tol: default_rel_tol(),
            abs_tol: default_abs_tol(),
            max_steps: default_max_steps(),
            domain_margin: 0.0,
            record_every: 1,
        }
    }

    pub fn rk45(rel_tol: f64, abs_tol: f64) -> Self {
        IntegratorConfig {
            method: Method::Rk45Adaptive,
            step: 0.0,
            rel_tol,
            abs_tol,
            max_steps: default_max_steps(),
            domain_margin: 0.0,
            record_every: 1,
        }
    }

    pub fn with_record_every(mut self, n: usize) -> Self {
        self.record_every = n;
        self
    }

    pub fn with_domain_margin(mut self, margin: f64) -> Self {
        self.domain_margin = margin;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.to_string()));
        if self.max_steps == 0 {
            return bad("max_steps must be positive");
        }
        if self.record_every == 0 {
            return bad("record_every must be positive");
        }
        if !(self.domain_margin >= 0.0) {
            return bad("domain_margin must be non-negative");
        }
        match self.method {
            Method::Rk4Fixed if !(self.step > 0.0 && self.step.is_finite()) => bad("rk4-fixed needs a positive step"),
            Method::Rk45Adaptive if !(self.rel_tol > 0.0 && self.abs_tol > 0.0) => bad("tolerances must be positive"),
            Method::Rk45Adaptive if !(self.step >= 0.0) => bad("initial step must be non-negative"),
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum TrajectoryStatus {
    Completed,
    /// The orbit came within the domain margin of an exclusion zone.
    DomainStop { tau: f64 },
    MaxStepsExceeded { tau: f64 },
    NonFiniteState { tau: f64 },
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StepStats {
    pub accepted: usize,
    pub rejected: usize,
    pub rhs_evaluations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub tau: f64,
    pub point: PhasePoint,
}

/// `G(τ) − G(0)` for one monitored observable.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonitorLog {
    pub name: String,
    pub initial: f64,
    /// One entry per recorded sample.
    pub drift: Vec<f64>,
    /// Over every accepted step, not only the recorded ones.
    pub max_abs_drift: f64,
    /// `max_abs_drift / |G(0)|`, or the absolute drift when `G(0) = 0`.
    pub max_rel_drift: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub samples: Vec<Sample>,
    pub stats: StepStats,
    pub monitors: Vec<MonitorLog>,
    pub status: TrajectoryStatus,
}

impl Trajectory {
    pub fn final_sample(&self) -> &Sample {
        self.samples.last().expect("trajectory has at least the initial sample")
    }

    pub fn monitor(&self, name: &str) -> Option<&MonitorLog> {
        self.monitors.iter().find(|m| m.name == name)
    }

    /// Fatal statuses as errors; completion and domain stops pass.
    pub fn check(&self) -> Result<()> {
        match self.status {
            TrajectoryStatus::MaxStepsExceeded { tau } => Err(Error::MaxStepsExceeded {
                max_steps: self.stats.accepted + self.stats.rejected,
                tau,
            }),
            TrajectoryStatus::NonFiniteState { tau } => Err(Error::NonFiniteState { tau }),
            _ => Ok(()),
        }
    }

    /// One row per sample: `tau`, coordinates, momenta, charges, monitor values.
    pub fn write_csv<W: Write>(&self, out: W, coordinate_names: &[String]) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let k = self.samples.first().map_or(0, |s| s.point.algebra_dim());
        let mut header = vec!["tau".to_string()];
        header.extend(coordinate_names.iter().cloned());
        header.extend(coordinate_names.iter().map(|c| format!("pi_{c}")));
        header.extend((0..k).map(|a| format!("t{}", a + 1)));
        header.extend(self.monitors.iter().map(|m| m.name.clone()));
        w.write_record(&header)?;
        for (i, s) in self.samples.iter().enumerate() {
            let mut row = vec![fmt_f64(s.tau)];
            row.extend(s.point.x.iter().chain(&s.point.pi).chain(&s.point.t).map(|v| fmt_f64(*v)));
            row.extend(self.monitors.iter().map(|m| fmt_f64(m.initial + m.drift[i])));
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }
}

fn fmt_f64(v: f64) -> String {
    format!("{v:.17e}")
}

struct Monitors<'a> {
    observables: &'a [SharedObservable],
    logs: Vec<MonitorLog>,
}

impl<'a> Monitors<'a> {
    fn new(observables: &'a [SharedObservable], p: &PhasePoint) -> Self {
        let logs = observables
            .iter()
            .map(|o| MonitorLog {
                name: o.name().to_string(),
                initial: o.value(p),
                drift: vec![0.0],
                max_abs_drift: 0.0,
                max_rel_drift: 0.0,
            })
            .collect();
        Monitors { observables, logs }
    }

    fn observe(&mut self, p: &PhasePoint, record: bool) {
        for (o, log) in self.observables.iter().zip(self.logs.iter_mut()) {
            let delta = o.value(p) - log.initial;
            let a = delta.abs();
            if a > log.max_abs_drift || a.is_nan() {
                log.max_abs_drift = a;
                log.max_rel_drift = if log.initial != 0.0 { a / log.initial.abs() } else { a };
            }
            if record {
                log.drift.push(delta);
            }
        }
    }
}

fn rhs(spec: &HamiltonianSpec, d: usize, y: &[f64]) -> Result<Vec<f64>> {
    let p = PhasePoint::from_state(d, y);
    Ok(equations_of_motion(spec, &p)?.to_state())
}

fn axpy(y: &[f64], h: f64, terms: &[(f64, &[f64])]) -> Vec<f64> {
    let mut out = y.to_vec();
    for (c, k) in terms {
        if *c != 0.0 {
            for (o, v) in out.iter_mut().zip(k.iter()) {
                *o += h * c * v;
            }
        }
    }
    out
}

/// Integrates the flow of `spec` from `p0` over `span = (τ0, τ1)`.
pub fn integrate(
    spec: &HamiltonianSpec,
    p0: &PhasePoint,
    cfg: &IntegratorConfig,
    span: (f64, f64),
    monitors: &[SharedObservable],
) -> Result<Trajectory> {
    cfg.validate()?;
    spec.ctx.check_point(p0)?;
    if !(span.1 > span.0) || !span.0.is_finite() || !span.1.is_finite() {
        return Err(Error::InvalidConfig(format!("span must be finite and increasing, got {span:?}")));
    }
    let mut run = Run {
        spec,
        cfg,
        d: p0.dim(),
        samples: vec![Sample {
            tau: span.0,
            point: p0.clone(),
        }],
        stats: StepStats::default(),
        monitors: Monitors::new(monitors, p0),
    };
    let status = match cfg.method {
        Method::Rk4Fixed => run.rk4(p0.state(), span),
        Method::Rk45Adaptive => run.dopri(p0.state(), span),
    };
    Ok(Trajectory {
        samples: run.samples,
        stats: run.stats,
        monitors: run.monitors.logs,
        status,
    })
}

/// Independent trajectories, optionally in parallel; order is preserved.
pub fn integrate_batch(
    spec: &HamiltonianSpec,
    starts: &[PhasePoint],
    cfg: &IntegratorConfig,
    span: (f64, f64),
    monitors: &[SharedObservable],
    exec: Execution,
) -> Vec<Result<Trajectory>> {
    sweep::map(exec, starts, |p| integrate(spec, p, cfg, span, monitors))
}

struct Run<'a> {
    spec: &'a HamiltonianSpec,
    cfg: &'a IntegratorConfig,
    d: usize,
    samples: Vec<Sample>,
    stats: StepStats,
    monitors: Monitors<'a>,
}

enum StepCheck {
    Continue,
    Stop(TrajectoryStatus),
}

impl Run<'_> {
    fn eval(&mut self, y: &[f64]) -> Result<Vec<f64>> {
        self.stats.rhs_evaluations += 1;
        rhs(self.spec, self.d, y)
    }

    fn near_boundary(&self, x: &[f64]) -> bool {
        let chart = self.spec.ctx.chart();
        if !chart.in_domain(x) {
            return true;
        }
        self.cfg.domain_margin > 0.0 && chart.boundary_distance(x).is_some_and(|dist| dist < self.cfg.domain_margin)
    }

    /// Bookkeeping after an accepted step.
    fn accept(&mut self, tau: f64, y: Vec<f64>, last: bool) -> StepCheck {
        self.stats.accepted += 1;
        if y.iter().any(|v| !v.is_finite()) {
            return StepCheck::Stop(TrajectoryStatus::NonFiniteState { tau });
        }
        let p = PhasePoint::from_state(self.d, &y);
        let boundary = self.near_boundary(&p.x);
        let record = last || boundary || self.stats.accepted % self.cfg.record_every == 0;
        self.monitors.observe(&p, record);
        if record {
            self.samples.push(Sample { tau, point: p });
        }
        if boundary {
            return StepCheck::Stop(TrajectoryStatus::DomainStop { tau });
        }
        StepCheck::Continue
    }

    fn steps_exhausted(&self) -> bool {
        self.stats.accepted + self.stats.rejected >= self.cfg.max_steps
    }

    fn rk4(&mut self, mut y: Vec<f64>, span: (f64, f64)) -> TrajectoryStatus {
        let h0 = self.cfg.step;
        let n = ((span.1 - span.0) / h0 - 1e-9).ceil().max(1.0) as usize;
        let h = (span.1 - span.0) / n as f64;
        for i in 0..n {
            let tau = span.0 + i as f64 * h;
            if self.steps_exhausted() {
                return TrajectoryStatus::MaxStepsExceeded { tau };
            }
            let step = (|| -> Result<Vec<f64>> {
                let k1 = self.eval(&y)?;
                let k2 = self.eval(&axpy(&y, h, &[(0.5, &k1)]))?;
                let k3 = self.eval(&axpy(&y, h, &[(0.5, &k2)]))?;
                let k4 = self.eval(&axpy(&y, h, &[(1.0, &k3)]))?;
                Ok(axpy(&y, h, &[(1.0 / 6.0, &k1), (1.0 / 3.0, &k2), (1.0 / 3.0, &k3), (1.0 / 6.0, &k4)]))
            })();
            let ynew = match step {
                Ok(v) => v,
                Err(Error::OutOfDomain { .. }) | Err(Error::SingularMetric { .. }) => {
                    return TrajectoryStatus::DomainStop { tau };
                }
                Err(_) => return TrajectoryStatus::NonFiniteState { tau },
            };
            let tnext = if i + 1 == n { span.1 } else { span.0 + (i + 1) as f64 * h };
            if let StepCheck::Stop(s) = self.accept(tnext, ynew.clone(), i + 1 == n) {
                return s;
            }
            y = ynew;
        }
        TrajectoryStatus::Completed
    }

    fn error_norm(&self, y: &[f64], ynew: &[f64], err: &[f64]) -> f64 {
        let n = y.len() as f64;
        let s: f64 = y
            .iter()
            .zip(ynew)
            .zip(err)
            .map(|((a, b), e)| {
                let sc = self.cfg.abs_tol + self.cfg.rel_tol * a.abs().max(b.abs());
                (e / sc).powi(2)
            })
            .sum();
        (s / n).sqrt()
    }

    /// Starting step from the local derivative scales.
    fn initial_step(&mut self, y: &[f64], f0: &[f64], span: (f64, f64)) -> f64 {
        let sc: Vec<f64> = y.iter().map(|v| self.cfg.abs_tol + self.cfg.rel_tol * v.abs()).collect();
        let rms = |v: &[f64]| (v.iter().zip(&sc).map(|(a, s)| (a / s).powi(2)).sum::<f64>() / v.len() as f64).sqrt();
        let (d0, d1) = (rms(y), rms(f0));
        let h0 = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 } else { 0.01 * d0 / d1 };
        let y1 = axpy(y, h0, &[(1.0, f0)]);
        let h1 = match self.eval(&y1) {
            Ok(f1) => {
                let diff: Vec<f64> = f1.iter().zip(f0).map(|(a, b)| a - b).collect();
                let d2 = rms(&diff) / h0;
                if d1.max(d2) <= 1e-15 {
                    (h0 * 1e-3).max(1e-6)
                } else {
                    (0.01 / d1.max(d2)).powf(1.0 / 5.0)
                }
            }
            Err(_) => h0,
        };
        (100.0 * h0).min(h1).min(span.1 - span.0)
    }

    fn dopri(&mut self, mut y: Vec<f64>, span: (f64, f64)) -> TrajectoryStatus {
        const A2: [f64; 1] = [1.0 / 5.0];
        const A3: [f64; 2] = [3.0 / 40.0, 9.0 / 40.0];
        const A4: [f64; 3] = [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0];
        const A5: [f64; 4] = [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0];
        const A6: [f64; 5] = [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0];
        const B: [f64; 6] = [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0];
        const E: [f64; 7] = [
            71.0 / 57600.0,
            0.0,
            -71.0 / 16695.0,
            71.0 / 1920.0,
            -17253.0 / 339200.0,
            22.0 / 525.0,
            -1.0 / 40.0,
        ];
        let mut tau = span.0;
        let mut k1 = match self.eval(&y) {
            Ok(k) => k,
            Err(_) => return TrajectoryStatus::NonFiniteState { tau },
        };
        let mut h = if self.cfg.step > 0.0 {
            self.cfg.step.min(span.1 - span.0)
        } else {
            self.initial_step(&y, &k1, span)
        };
        let mut last_rejected = false;
        loop {
            if self.steps_exhausted() {
                return TrajectoryStatus::MaxStepsExceeded { tau };
            }
            let remaining = span.1 - tau;
            let last = h >= remaining * (1.0 - 1e-12);
            if last {
                h = remaining;
            }
            if h <= 1e-14 * tau.abs().max(1.0) {
                return TrajectoryStatus::DomainStop { tau };
            }
            let stages = (|| -> Result<(Vec<f64>, Vec<f64>, Vec<f64>)> {
                let k2 = self.eval(&axpy(&y, h, &[(A2[0], &k1)]))?;
                let k3 = self.eval(&axpy(&y, h, &[(A3[0], &k1), (A3[1], &k2)]))?;
                let k4 = self.eval(&axpy(&y, h, &[(A4[0], &k1), (A4[1], &k2), (A4[2], &k3)]))?;
                let k5 = self.eval(&axpy(&y, h, &[(A5[0], &k1), (A5[1], &k2), (A5[2], &k3), (A5[3], &k4)]))?;
                let k6 = self.eval(&axpy(
                    &y,
                    h,
                    &[(A6[0], &k1), (A6[1], &k2), (A6[2], &k3), (A6[3], &k4), (A6[4], &k5)],
                ))?;
                let ynew = axpy(&y, h, &[(B[0], &k1), (B[2], &k3), (B[3], &k4), (B[4], &k5), (B[5], &k6)]);
                let k7 = self.eval(&ynew)?;
                let err: Vec<f64> = (0..y.len())
                    .map(|i| {
                        h * (E[0] * k1[i] + E[2] * k3[i] + E[3] * k4[i] + E[4] * k5[i] + E[5] * k6[i] + E[6] * k7[i])
                    })
                    .collect();
                Ok((ynew, k7, err))
            })();
            let (ynew, k7, err) = match stages {
                Ok(s) => s,
                Err(Error::OutOfDomain { .. }) | Err(Error::SingularMetric { .. }) => {
                    self.stats.rejected += 1;
                    h *= 0.5;
                    last_rejected = true;
                    continue;
                }
                Err(_) => return TrajectoryStatus::NonFiniteState { tau },
            };
            let en = self.error_norm(&y, &ynew, &err);
            if !en.is_finite() {
                self.stats.rejected += 1;
                h *= 0.2;
                last_rejected = true;
                continue;
            }
            if en <= 1.0 {
                let tnext = if last { span.1 } else { tau + h };
                if let StepCheck::Stop(s) = self.accept(tnext, ynew.clone(), last) {
                    return s;
                }
                tau = tnext;
                y = ynew;
                k1 = k7;
                if last {
                    return TrajectoryStatus::Completed;
                }
                let mut factor = if en == 0.0 { 5.0 } else { 0.9 * en.powf(-0.2) };
                factor = factor.clamp(0.2, 5.0);
                if last_rejected {
                    factor = factor.min(1.0);
                }
                last_rejected = false;
                h *= factor;
            } else {
                self.stats.rejected += 1;
                h *= (0.9 * en.powf(-0.2)).clamp(0.2, 1.0);
                last_rejected = true;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog::{axial, flat};
    use crate::gauge::{AbelianBackground, ScalarPotential};
    use crate::{Dual, DualNum};

    fn free(dim: usize, m: f64) -> HamiltonianSpec {
        HamiltonianSpec::new(m, BracketContext::geodesic(flat(dim))).unwrap()
    }

    #[test]
    fn flat_energy() {
        let h = free(2, 1.0);
        assert_eq!(h.eval(&PhasePoint::new(vec![0.1, 0.2], vec![3.0, 4.0])).unwrap(), 12.5);
        assert_eq!(h.kind(), HamiltonianKind::Geodesic);
    }

    #[test]
    fn free_motion_is_straight() {
        let h = free(2, 2.0);
        let p = PhasePoint::new(vec![0.5, -1.0], vec![1.0, 3.0]);
        let e = equations_of_motion(&h, &p).unwrap();
        assert_eq!(e.dx, vec![0.5, 1.5]);
        assert_eq!(e.dpi, vec![0.0, 0.0]);
        let tr = integrate(&h, &p, &IntegratorConfig::rk4(0.01), (0.0, 10.0), &[]).unwrap();
        let last = tr.final_sample();
        assert_eq!(last.tau, 10.0);
        assert!((last.point.x[0] - 5.5).abs() < 1e-12);
        assert!((last.point.x[1] - 14.0).abs() < 1e-12);
    }

    #[test]
    fn velocity_round_trip_on_axial_chart() {
        let h = HamiltonianSpec::new(1.0, BracketContext::geodesic(axial())).unwrap();
        let pi = momentum_from_velocity(&h, &[2.0, 0.0, 0.3], &[0.0, 0.0, 0.7]).unwrap();
        assert!((pi[2] - 2.8).abs() < 1e-15);
        let v = velocity_from_momentum(&h, &[2.0, 0.0, 0.3], &pi).unwrap();
        assert!((v[2] - 0.7).abs() < 1e-15);
    }

    #[test]
    fn cyclotron_radius() {
        let b = 2.0;
        let bg = AbelianBackground::new(1.0, move |x: &[Dual]| vec![x[1] * (-0.5 * b), x[0] * (0.5 * b)]);
        let h = HamiltonianSpec::new(1.0, BracketContext::abelian(flat(2), bg)).unwrap();
        let p = PhasePoint::new(vec![0.0, 0.0], vec![1.0, 0.0]);
        let tr = integrate(&h, &p, &IntegratorConfig::rk45(1e-12, 1e-14), (0.0, 20.0), &[h.observable()]).unwrap();
        // centre at (0, -r) for positive charge with v = +x: the force qF·v points along -y
        let r = 1.0 / b;
        for s in &tr.samples {
            let dist = (s.point.x[0].powi(2) + (s.point.x[1] + r).powi(2)).sqrt();
            assert!((dist - r).abs() / r < 1e-6, "{dist}");
        }
        assert!(tr.monitors[0].max_rel_drift < 1e-10);
    }

    #[test]
    fn bracket_and_closed_form_agree_with_potential() {
        let phi = ScalarPotential::new(|x: &[Dual]| x[0] * x[0] * 0.5 + x[1].sin());
        let ctx = BracketContext::geodesic(axial()).with_scalar_potential(phi);
        let h = HamiltonianSpec::new(1.3, ctx).unwrap();
        let p = PhasePoint::new(vec![1.4, 0.2, 0.9], vec![0.3, -0.5, 1.1]);
        let a = equations_of_motion(&h, &p).unwrap().to_state();
        let b = equations_of_motion_closed_form(&h, &p).unwrap().to_state();
        for (u, v) in a.iter().zip(&b) {
            assert!((u - v).abs() <= 1e-12 * u.abs().max(1.0), "{u} {v}");
        }
    }

    #[test]
    fn rejects_bad_configs() {
        let h = free(1, 1.0);
        let p = PhasePoint::new(vec![0.0], vec![1.0]);
        assert!(matches!(
            integrate(&h, &p, &IntegratorConfig::rk4(0.0), (0.0, 1.0), &[]),
            Err(Error::InvalidConfig(_))
        ));
        assert!(integrate(&h, &p, &IntegratorConfig::rk4(0.1), (1.0, 1.0), &[]).is_err());
        assert!(HamiltonianSpec::new(-1.0, BracketContext::geodesic(flat(1))).is_err());
    }

    #[test]
    fn max_steps_reported() {
        let h = free(1, 1.0);
        let p = PhasePoint::new(vec![0.0], vec![1.0]);
        let mut cfg = IntegratorConfig::rk4(0.1);
        cfg.max_steps = 3;
        let tr = integrate(&h, &p, &cfg, (0.0, 1.0), &[]).unwrap();
        assert!(matches!(tr.status, TrajectoryStatus::MaxStepsExceeded { .. }));
        assert!(tr.check().is_err());
    }
}
