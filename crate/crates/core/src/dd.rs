//! The two-subdomain Robin iteration.
//!
//! Every iteration solves the subdomain-1 Robin problem and the
//! subdomain-2 Robin + contact problem concurrently, then updates both
//! transmission traces from the previous opposite-side data (Jacobi
//! style). Four discretizations share the loop: primal FEM, mixed FEM and
//! their multiscale (CEM) variants on subdomain 1.

use std::io::Write;
use std::path::PathBuf;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::material::MaterialField;
use crate::mesh::{InterfaceQuadrature, InterfaceRule, Region, TwoScaleMesh};
use crate::metrics::{mixed_errors, primal_errors, ContactSample, MixedPiece, PrimalPiece};
use crate::mixed::{
    assemble_mixed, contact_trace_mixed, solve_monolithic_mixed, MixedOperators, MixedSolution, MixedSub1, MixedSub2,
};
use crate::msfem::{CemParams, MixedAux, MixedCemSolver, PrimalCemSolver};
use crate::newton::{NewtonParams, NewtonStats};
use crate::primal::{
    assemble_primal, contact_trace_primal, solve_monolithic_contact, PrimalOperators, PrimalSub1, PrimalSub2,
};
use crate::source::SourceSpec;
use crate::trace::{g_star_norm, TraceData, TraceSide};

/// Discretization of the two subproblems.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Formulation {
    PrimalFem,
    MixedFem,
    PrimalCem,
    MixedCem,
}

impl Formulation {
    pub fn is_mixed(self) -> bool {
        matches!(self, Self::MixedFem | Self::MixedCem)
    }

    pub fn is_multiscale(self) -> bool {
        matches!(self, Self::PrimalCem | Self::MixedCem)
    }

    /// Nodal trapezoid rule for displacements, 4-point Gauss for tractions.
    pub fn default_rule(self) -> InterfaceRule {
        if self.is_mixed() {
            InterfaceRule::Gauss(4)
        } else {
            InterfaceRule::NewtonCotes
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::PrimalFem => "primal_fem",
            Self::MixedFem => "mixed_fem",
            Self::PrimalCem => "primal_cem",
            Self::MixedCem => "mixed_cem",
        }
    }
}

/// Parameters of one DD run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DdConfig {
    pub formulation: Formulation,
    /// α (primal) or β (mixed), used on both sides of the interface.
    pub robin: f64,
    /// Penalty parameter.
    pub delta: f64,
    pub tol: f64,
    pub max_iter: usize,
    #[serde(default)]
    pub cem: CemParams,
    pub rule: InterfaceRule,
    #[serde(default)]
    pub newton: NewtonParams,
    /// Mixed FEM only: replace (f, v) on subdomain 1 by its projection onto
    /// the auxiliary space built with `cem.n_eig` modes.
    #[serde(default)]
    pub projected_load: bool,
    /// Directory for multiscale basis files.
    #[serde(default)]
    pub cache_dir: Option<PathBuf>,
}

impl DdConfig {
    pub fn new(formulation: Formulation, robin: f64, delta: f64) -> Self {
        Self {
            formulation,
            robin,
            delta,
            tol: 1e-5,
            max_iter: 200,
            cem: CemParams::default(),
            rule: formulation.default_rule(),
            newton: NewtonParams::default(),
            projected_load: false,
            cache_dir: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let pos = |v: f64, what: &str| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::InvalidConfig(format!("{what} must be positive, got {v}")))
            }
        };
        pos(self.robin, "Robin parameter")?;
        pos(self.delta, "penalty parameter")?;
        pos(self.tol, "tolerance")?;
        if self.max_iter == 0 {
            return Err(Error::InvalidConfig("max_iter must be at least 1".into()));
        }
        if self.formulation.is_multiscale() || self.projected_load {
            self.cem.validate()?;
        }
        if self.projected_load && self.formulation != Formulation::MixedFem {
            return Err(Error::InvalidConfig("projected_load applies to mixed_fem only".into()));
        }
        if let InterfaceRule::Gauss(0) = self.rule {
            return Err(Error::InvalidConfig("Gauss interface rule needs at least one point".into()));
        }
        Ok(())
    }
}

/// Monolithic penalized solution on the whole domain.
#[allow(clippy::large_enum_variant)] // built once per run
pub enum Reference {
    Primal { ops: PrimalOperators, u: Vec<f64> },
    Mixed { ops: MixedOperators, solution: MixedSolution },
}

impl Reference {
    pub fn compute(
        formulation: Formulation,
        mesh: &TwoScaleMesh,
        material: &MaterialField,
        source: &SourceSpec,
        delta: f64,
        newton: &NewtonParams,
    ) -> Result<Self> {
        let rule = formulation.default_rule();
        if formulation.is_mixed() {
            let ops = assemble_mixed(mesh, material, source, Region::Omega, rule)?;
            let (solution, _) = solve_monolithic_mixed(&ops, delta, newton)?;
            Ok(Self::Mixed { ops, solution })
        } else {
            let ops = assemble_primal(mesh, material, source, Region::Omega, rule)?;
            let (u, _) = solve_monolithic_contact(&ops, delta, newton)?;
            Ok(Self::Primal { ops, u })
        }
    }

    pub fn is_mixed(&self) -> bool {
        matches!(self, Self::Mixed { .. })
    }

    /// Contact samples of the reference.
    pub fn contact_trace(&self, delta: f64) -> Result<Vec<ContactSample>> {
        let t = match self {
            Self::Primal { ops, u } => contact_trace_primal(ops, u, delta)?,
            Self::Mixed { ops, solution } => contact_trace_mixed(ops, &solution.sigma, delta)?,
        };
        Ok(ContactSample::from_triples(&t))
    }
}

/// Optional inputs of [`run_dd`].
#[derive(Default)]
pub struct RunOptions<'a> {
    /// Enables per-iteration relative errors.
    pub reference: Option<&'a Reference>,
    /// Initial (g12, g21); zero traces when absent.
    pub initial: Option<(TraceData, TraceData)>,
    /// Keep every iterate (primal FEM only), for [`lyapunov_check`].
    pub record_history: bool,
}

/// Diagnostics of one iteration.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub n: usize,
    /// ‖σⁿ−σⁿ⁻¹‖∞ + ‖uⁿ−uⁿ⁻¹‖∞ (mixed) or ‖uⁿ−uⁿ⁻¹‖∞ (primal), with zero
    /// fields before the first iteration.
    pub residual: f64,
    /// Stress A-norm error (mixed) or energy error (primal).
    pub e_sigma: Option<f64>,
    pub e_u: Option<f64>,
    /// ‖gⁿ‖* of the data used in this iteration.
    pub g_norm: f64,
    pub seconds: f64,
    /// max |gⁿ⁺¹ − gⁿ| over both traces.
    pub trace_change: f64,
    pub newton_iterations: usize,
    /// Largest equilibrium defect over both subdomains relative to the
    /// load scale (mixed only). Per displacement dof for FEM, per auxiliary
    /// mode on a multiscale subdomain 1.
    pub conservation: Option<f64>,
}

/// Per-iteration history of a run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IterationReport {
    pub formulation: Formulation,
    pub h: f64,
    pub robin: f64,
    pub tol: f64,
    pub converged: bool,
    pub records: Vec<IterationRecord>,
}

/// Compact outcome of a run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DdSummary {
    pub formulation: Formulation,
    pub h: f64,
    pub robin: f64,
    pub iterations: usize,
    pub converged: bool,
    pub residual: f64,
    pub e_sigma: Option<f64>,
    pub e_u: Option<f64>,
    pub seconds: f64,
    pub max_conservation: Option<f64>,
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.10e}")).unwrap_or_default()
}

impl IterationReport {
    pub fn iterations(&self) -> usize {
        self.records.len()
    }

    pub fn last(&self) -> Option<&IterationRecord> {
        self.records.last()
    }

    /// Errors with [`Error::DdNotConverged`] if the tolerance was not met.
    pub fn ensure_converged(&self) -> Result<()> {
        if self.converged {
            return Ok(());
        }
        Err(Error::DdNotConverged {
            iterations: self.iterations(),
            residual: self.last().map_or(f64::NAN, |r| r.residual),
        })
    }

    pub fn summary(&self) -> DdSummary {
        let last = self.last().cloned().unwrap_or_default();
        let cons = self.records.iter().filter_map(|r| r.conservation).fold(None, |m: Option<f64>, v| Some(m.map_or(v, |m| m.max(v))));
        DdSummary {
            formulation: self.formulation,
            h: self.h,
            robin: self.robin,
            iterations: self.iterations(),
            converged: self.converged,
            residual: last.residual,
            e_sigma: last.e_sigma,
            e_u: last.e_u,
            seconds: self.records.iter().map(|r| r.seconds).sum(),
            max_conservation: cons,
        }
    }

    /// CSV with columns n, residual, e_sigma, e_u, g_norm, seconds followed
    /// by trace_change, newton_iterations, conservation. Missing values are
    /// left empty.
    pub fn write_csv(&self, mut w: impl Write) -> Result<()> {
        writeln!(w, "n,residual,e_sigma,e_u,g_norm,seconds,trace_change,newton_iterations,conservation")?;
        for r in &self.records {
            writeln!(
                w,
                "{},{:.10e},{},{},{:.10e},{:.6},{:.10e},{},{}",
                r.n,
                r.residual,
                opt(r.e_sigma),
                opt(r.e_u),
                r.g_norm,
                r.seconds,
                r.trace_change,
                r.newton_iterations,
                opt(r.conservation)
            )?;
        }
        Ok(())
    }
}

/// Iterate n of a primal FEM run: the data used and the fields produced.
#[derive(Clone, Debug, PartialEq)]
pub struct PrimalIterate {
    pub g12: TraceData,
    pub g21: TraceData,
    pub u1: Vec<f64>,
    pub u2: Vec<f64>,
}

/// Final subdomain fields with their operators.
#[allow(clippy::large_enum_variant)] // built once per run
pub enum DdState {
    Primal { ops1: PrimalOperators, ops2: PrimalOperators, u1: Vec<f64>, u2: Vec<f64> },
    Mixed { ops1: MixedOperators, ops2: MixedOperators, s1: MixedSolution, s2: MixedSolution },
}

impl DdState {
    /// Contact samples of the subdomain-2 field.
    pub fn contact_trace(&self, delta: f64) -> Result<Vec<ContactSample>> {
        let t = match self {
            Self::Primal { ops2, u2, .. } => contact_trace_primal(ops2, u2, delta)?,
            Self::Mixed { ops2, s2, .. } => contact_trace_mixed(ops2, &s2.sigma, delta)?,
        };
        Ok(ContactSample::from_triples(&t))
    }
}

pub struct DdOutcome {
    pub report: IterationReport,
    pub state: DdState,
    /// Traces after the last update (input of a further iteration).
    pub g12: TraceData,
    pub g21: TraceData,
    pub history: Vec<PrimalIterate>,
}

#[derive(Clone, Debug, PartialEq)]
enum Field {
    Primal(Vec<f64>),
    Mixed(MixedSolution),
}

impl Field {
    fn primal(&self) -> &[f64] {
        match self {
            Self::Primal(u) => u,
            Self::Mixed(_) => unreachable!("primal field expected"),
        }
    }
    fn mixed(&self) -> &MixedSolution {
        match self {
            Self::Mixed(s) => s,
            Self::Primal(_) => unreachable!("mixed field expected"),
        }
    }
    fn into_primal(self) -> Vec<f64> {
        match self {
            Self::Primal(u) => u,
            Self::Mixed(_) => unreachable!("primal field expected"),
        }
    }
    fn into_mixed(self) -> MixedSolution {
        match self {
            Self::Mixed(s) => s,
            Self::Primal(_) => unreachable!("mixed field expected"),
        }
    }
}

#[allow(clippy::large_enum_variant)] // built once per run
enum Sub1 {
    Primal(PrimalSub1),
    PrimalCem(Box<PrimalCemSolver>),
    Mixed(MixedSub1),
    MixedCem(Box<MixedCemSolver>),
}

impl Sub1 {
    fn solve(&self, g: &TraceData) -> Result<Field> {
        Ok(match self {
            Self::Primal(s) => Field::Primal(s.solve(g)?),
            Self::PrimalCem(s) => Field::Primal(s.solve(g)?),
            Self::Mixed(s) => Field::Mixed(s.solve(g)?),
            Self::MixedCem(s) => Field::Mixed(s.solve(g)?),
        })
    }

    fn sample(&self, f: &Field) -> Result<Vec<[f64; 2]>> {
        match self {
            Self::Primal(s) => Ok(s.ops().interface()?.sample(f.primal())),
            Self::PrimalCem(s) => Ok(s.ops().interface()?.sample(f.primal())),
            Self::Mixed(s) => s.ops().interface_traction(&f.mixed().sigma),
            Self::MixedCem(s) => s.ops().interface_traction(&f.mixed().sigma),
        }
    }

    fn quad(&self) -> Result<&InterfaceQuadrature> {
        Ok(match self {
            Self::Primal(s) => &s.ops().interface()?.quad,
            Self::PrimalCem(s) => &s.ops().interface()?.quad,
            Self::Mixed(s) => &s.ops().interface()?.quad,
            Self::MixedCem(s) => &s.ops().interface()?.quad,
        })
    }

    /// Largest equilibrium defect, unscaled, and the load scale.
    fn conservation(&self, f: &Field) -> Option<(f64, f64)> {
        let inf = |v: &[f64]| v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        match self {
            Self::Mixed(s) => {
                let r = s.ops().divergence_residual(&f.mixed().sigma, s.load());
                Some((inf(&r), inf(s.load())))
            }
            Self::MixedCem(s) => {
                let r = s.ops().divergence_residual(&f.mixed().sigma, &s.ops().load);
                Some((inf(&s.aux().restrict(&r)), inf(&s.aux().restrict(&s.ops().load))))
            }
            _ => None,
        }
    }

    fn n_dofs(&self) -> usize {
        match self {
            Self::Primal(s) => s.ops().n_dofs(),
            Self::PrimalCem(s) => s.ops().n_dofs(),
            Self::Mixed(s) => s.ops().space.n_dofs(),
            Self::MixedCem(s) => s.ops().space.n_dofs(),
        }
    }
}

enum Sub2 {
    Primal(PrimalSub2),
    Mixed(MixedSub2),
}

impl Sub2 {
    fn solve(&mut self, g: &TraceData, warm: Option<&Field>, params: &NewtonParams) -> Result<(Field, NewtonStats)> {
        Ok(match self {
            Self::Primal(s) => {
                let (u, st) = s.solve(g, warm.map(|w| w.primal()), params)?;
                (Field::Primal(u), st)
            }
            Self::Mixed(s) => {
                let (x, st) = s.solve(g, warm.map(|w| w.mixed()), params)?;
                (Field::Mixed(x), st)
            }
        })
    }

    fn sample(&self, f: &Field) -> Result<Vec<[f64; 2]>> {
        match self {
            Self::Primal(s) => Ok(s.ops().interface()?.sample(f.primal())),
            Self::Mixed(s) => s.ops().interface_traction(&f.mixed().sigma),
        }
    }

    fn conservation(&self, f: &Field) -> Option<(f64, f64)> {
        let inf = |v: &[f64]| v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        match self {
            Self::Mixed(s) => {
                let r = s.ops().divergence_residual(&f.mixed().sigma, &s.ops().load);
                Some((inf(&r), inf(&s.ops().load)))
            }
            Self::Primal(_) => None,
        }
    }

    fn zero_field(&self) -> Field {
        match self {
            Self::Primal(s) => Field::Primal(vec![0.0; s.ops().n_dofs()]),
            Self::Mixed(s) => Field::Mixed(MixedSolution::zeros(&s.ops().space)),
        }
    }
}

fn zero_like(sub1: &Sub1) -> Field {
    match sub1 {
        Sub1::Primal(_) | Sub1::PrimalCem(_) => Field::Primal(vec![0.0; sub1.n_dofs()]),
        Sub1::Mixed(s) => Field::Mixed(MixedSolution::zeros(&s.ops().space)),
        Sub1::MixedCem(s) => Field::Mixed(MixedSolution::zeros(&s.ops().space)),
    }
}

fn build(config: &DdConfig, mesh: &TwoScaleMesh, material: &MaterialField, source: &SourceSpec) -> Result<(Sub1, Sub2)> {
    let (rule, robin, delta) = (config.rule, config.robin, config.delta);
    let cache = config.cache_dir.as_deref();
    if config.formulation.is_mixed() {
        let o1 = assemble_mixed(mesh, material, source, Region::Omega1, rule)?;
        let o2 = assemble_mixed(mesh, material, source, Region::Omega2, rule)?;
        let s1 = match config.formulation {
            Formulation::MixedFem => {
                let aux = if config.projected_load {
                    Some(MixedAux::build(&o1, material, robin, config.cem.n_eig)?)
                } else {
                    None
                };
                let load = aux.map(|a| a.projected_load(&o1.load));
                let mut s = MixedSub1::new(o1, robin)?;
                if let Some(l) = load {
                    s.set_load(l)?;
                }
                Sub1::Mixed(s)
            }
            _ => Sub1::MixedCem(Box::new(MixedCemSolver::new(o1, material, robin, config.cem, cache)?)),
        };
        Ok((s1, Sub2::Mixed(MixedSub2::new(o2, robin, delta)?)))
    } else {
        let o1 = assemble_primal(mesh, material, source, Region::Omega1, rule)?;
        let o2 = assemble_primal(mesh, material, source, Region::Omega2, rule)?;
        let s1 = match config.formulation {
            Formulation::PrimalFem => Sub1::Primal(PrimalSub1::new(o1, robin)?),
            _ => Sub1::PrimalCem(Box::new(PrimalCemSolver::new(o1, material, robin, config.cem, cache)?)),
        };
        Ok((s1, Sub2::Primal(PrimalSub2::new(o2, robin, delta)?)))
    }
}

fn inf_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0f64, |m, (x, y)| m.max((x - y).abs()))
}

fn residual(prev: (&Field, &Field), next: (&Field, &Field)) -> f64 {
    match (prev.0, next.0) {
        (Field::Primal(a), Field::Primal(b)) => inf_diff(a, b).max(inf_diff(prev.1.primal(), next.1.primal())),
        _ => {
            let (p1, p2, n1, n2) = (prev.0.mixed(), prev.1.mixed(), next.0.mixed(), next.1.mixed());
            let ds = inf_diff(&p1.sigma, &n1.sigma).max(inf_diff(&p2.sigma, &n2.sigma));
            let du = inf_diff(&p1.u, &n1.u).max(inf_diff(&p2.u, &n2.u));
            ds + du
        }
    }
}

fn errors(reference: &Reference, sub1: &Sub1, sub2: &Sub2, f1: &Field, f2: &Field, material: &MaterialField) -> Result<(f64, f64)> {
    match (reference, sub2) {
        (Reference::Primal { ops, u }, Sub2::Primal(s2)) => {
            let ops1 = match sub1 {
                Sub1::Primal(s) => s.ops(),
                Sub1::PrimalCem(s) => s.ops(),
                _ => unreachable!(),
            };
            primal_errors(
                &[PrimalPiece { space: &ops.space, u }],
                &[PrimalPiece { space: &ops1.space, u: f1.primal() }, PrimalPiece { space: &s2.ops().space, u: f2.primal() }],
                material,
            )
        }
        (Reference::Mixed { ops, solution }, Sub2::Mixed(s2)) => {
            let ops1 = match sub1 {
                Sub1::Mixed(s) => s.ops(),
                Sub1::MixedCem(s) => s.ops(),
                _ => unreachable!(),
            };
            let (a, b) = (f1.mixed(), f2.mixed());
            mixed_errors(
                &[MixedPiece { space: &ops.space, sigma: &solution.sigma, u: &solution.u }],
                &[
                    MixedPiece { space: &ops1.space, sigma: &a.sigma, u: &a.u },
                    MixedPiece { space: &s2.ops().space, sigma: &b.sigma, u: &b.u },
                ],
                material,
            )
        }
        _ => Err(Error::InvalidConfig("reference formulation does not match the run".into())),
    }
}

/// Runs the Robin iteration until the residual drops below `config.tol` or
/// `config.max_iter` iterations have run. Non-convergence is reported
/// through `report.converged`, not as an error.
pub fn run_dd(
    config: &DdConfig,
    mesh: &TwoScaleMesh,
    material: &MaterialField,
    source: &SourceSpec,
    options: RunOptions,
) -> Result<DdOutcome> {
    config.validate()?;
    source.validate()?;
    if let Some(r) = options.reference {
        if r.is_mixed() != config.formulation.is_mixed() {
            return Err(Error::InvalidConfig("reference formulation does not match the run".into()));
        }
    }
    let (sub1, mut sub2) = build(config, mesh, material, source)?;
    let quad = sub1.quad()?.clone();
    let (mut g12, mut g21) = match options.initial {
        Some((a, b)) => {
            a.check_layout(&quad)?;
            b.check_layout(&quad)?;
            (TraceData { side: TraceSide::G12, ..a }, TraceData { side: TraceSide::G21, ..b })
        }
        None => (TraceData::zeros(TraceSide::G12, quad.len()), TraceData::zeros(TraceSide::G21, quad.len())),
    };
    let record_history = options.record_history && config.formulation == Formulation::PrimalFem;
    let mut history = Vec::new();
    let mut prev = (zero_like(&sub1), sub2.zero_field());
    let mut records = Vec::new();
    let mut converged = false;
    let robin = config.robin;
    let mixed = config.formulation.is_mixed();
    for n in 1..=config.max_iter {
        let t0 = Instant::now();
        let g_norm = g_star_norm(&g12, &g21, robin, &quad)?.sqrt();
        let warm = Some(&prev.1);
        let (r1, r2) = std::thread::scope(|s| {
            let h = s.spawn(|| sub1.solve(&g12));
            let r2 = sub2.solve(&g21, warm, &config.newton);
            (h.join().expect("subdomain 1 solve panicked"), r2)
        });
        let (f1, (f2, stats)) = (r1?, r2?);
        let t1 = sub1.sample(&f1)?;
        let t2 = sub2.sample(&f2)?;
        let mut n12 = TraceData::zeros(TraceSide::G12, quad.len());
        let mut n21 = TraceData::zeros(TraceSide::G21, quad.len());
        for p in 0..quad.len() {
            for l in 0..2 {
                if mixed {
                    n12.values[p][l] = -2.0 * robin * t2[p][l] + g21.values[p][l];
                    n21.values[p][l] = -2.0 * robin * t1[p][l] + g12.values[p][l];
                } else {
                    n12.values[p][l] = 2.0 * robin * t2[p][l] - g21.values[p][l];
                    n21.values[p][l] = 2.0 * robin * t1[p][l] - g12.values[p][l];
                }
            }
        }
        let trace_change = inf_diff(&n12.flat(), &g12.flat()).max(inf_diff(&n21.flat(), &g21.flat()));
        let res = residual((&prev.0, &prev.1), (&f1, &f2));
        let conservation = match (sub1.conservation(&f1), sub2.conservation(&f2)) {
            (Some((d1, s1)), Some((d2, s2))) => {
                let scale = s1.max(s2);
                Some(if scale > 0.0 { d1.max(d2) / scale } else { d1.max(d2) })
            }
            _ => None,
        };
        let (e_sigma, e_u) = match options.reference {
            Some(r) => {
                let (a, b) = errors(r, &sub1, &sub2, &f1, &f2, material)?;
                (Some(a), Some(b))
            }
            None => (None, None),
        };
        if record_history {
            history.push(PrimalIterate { g12: g12.clone(), g21: g21.clone(), u1: f1.primal().to_vec(), u2: f2.primal().to_vec() });
        }
        records.push(IterationRecord {
            n,
            residual: res,
            e_sigma,
            e_u,
            g_norm,
            seconds: t0.elapsed().as_secs_f64(),
            trace_change,
            newton_iterations: stats.iterations,
            conservation,
        });
        g12 = n12;
        g21 = n21;
        prev = (f1, f2);
        if res <= config.tol {
            converged = true;
            break;
        }
    }
    let report = IterationReport { formulation: config.formulation, h: mesh.h(), robin, tol: config.tol, converged, records };
    let (f1, f2) = prev;
    let state = match (sub1, sub2) {
        (Sub1::Primal(s1), Sub2::Primal(s2)) => DdState::Primal { ops1: s1.into_ops(), ops2: s2.into_ops(), u1: f1.into_primal(), u2: f2.into_primal() },
        (Sub1::PrimalCem(s1), Sub2::Primal(s2)) => DdState::Primal { ops1: s1.into_ops(), ops2: s2.into_ops(), u1: f1.into_primal(), u2: f2.into_primal() },
        (Sub1::Mixed(s1), Sub2::Mixed(s2)) => DdState::Mixed { ops1: s1.into_ops(), ops2: s2.into_ops(), s1: f1.into_mixed(), s2: f2.into_mixed() },
        (Sub1::MixedCem(s1), Sub2::Mixed(s2)) => DdState::Mixed { ops1: s1.into_ops(), ops2: s2.into_ops(), s1: f1.into_mixed(), s2: f2.into_mixed() },
        _ => unreachable!("subdomain solvers are built in matching pairs"),
    };
    Ok(DdOutcome { report, state, g12, g21, history })
}

/// Inputs of the energy identity check: operators of both subdomains, the
/// exact-split traces g* and the restrictions of the monolithic solution.
pub struct LyapunovSetup<'a> {
    pub ops1: &'a PrimalOperators,
    pub ops2: &'a PrimalOperators,
    pub alpha: f64,
    pub delta: f64,
    pub g12_star: &'a TraceData,
    pub g21_star: &'a TraceData,
    pub uh1: &'a [f64],
    pub uh2: &'a [f64],
}

/// Both sides of ‖ĝⁿ⁺¹‖*² = ‖ĝⁿ‖*² − 4[Σ aᵢ(eᵢ,eᵢ) + contact term].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LyapunovRow {
    pub n: usize,
    /// ‖ĝⁿ‖*²
    pub g_hat_sq: f64,
    /// Σᵢ aᵢ(eᵢⁿ, eᵢⁿ)
    pub energy: f64,
    /// (1/δ)∫((u₂,c)⁺ − (u_hc)⁺)(u₂,c − u_hc), always ≥ 0
    pub contact: f64,
    pub lhs: f64,
    pub rhs: f64,
    /// |lhs − rhs| / max(lhs, 1)
    pub residual: f64,
}

/// Evaluates the energy identity for every recorded iterate. `last` holds
/// the traces produced by the final iterate.
pub fn lyapunov_check(setup: &LyapunovSetup, history: &[PrimalIterate], last: (&TraceData, &TraceData)) -> Result<Vec<LyapunovRow>> {
    let quad = &setup.ops1.interface()?.quad;
    let contact = setup.ops2.contact()?;
    let ghat = |a: &TraceData, b: &TraceData| -> Result<f64> {
        g_star_norm(&a.sub(setup.g12_star), &b.sub(setup.g21_star), setup.alpha, quad)
    };
    let mut rows = Vec::with_capacity(history.len());
    for (n, it) in history.iter().enumerate() {
        let (a, b) = match history.get(n + 1) {
            Some(next) => (&next.g12, &next.g21),
            None => last,
        };
        let lhs = ghat(a, b)?;
        let g_hat_sq = ghat(&it.g12, &it.g21)?;
        let e1: Vec<f64> = it.u1.iter().zip(setup.uh1).map(|(x, y)| x - y).collect();
        let e2: Vec<f64> = it.u2.iter().zip(setup.uh2).map(|(x, y)| x - y).collect();
        let energy = setup.ops1.energy(&e1, &e1) + setup.ops2.energy(&e2, &e2);
        let c: f64 = contact
            .dofs
            .iter()
            .zip(&contact.weights)
            .map(|(&d, w)| w / setup.delta * (it.u2[d].max(0.0) - setup.uh2[d].max(0.0)) * (it.u2[d] - setup.uh2[d]))
            .sum();
        let rhs = g_hat_sq - 4.0 * (energy + c);
        rows.push(LyapunovRow { n, g_hat_sq, energy, contact: c, lhs, rhs, residual: (lhs - rhs).abs() / lhs.max(1.0) });
    }
    Ok(rows)
}
