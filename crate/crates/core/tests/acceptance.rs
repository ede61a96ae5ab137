//! Acceptance checks with pinned tolerances.
//!
//! Prints one `PASS`/`FAIL` line per criterion. The process exits with 0
//! unless `CONTACTDD_ACCEPTANCE_STRICT=1` is set, in which case any failure
//! makes it exit with 1. `CONTACTDD_ACCEPTANCE_ONLY=1,3,9` restricts the run
//! to the listed criteria.

#![allow(clippy::needless_range_loop)]

use std::time::Instant;

use contactdd::dd::{lyapunov_check, DdState, LyapunovSetup};
use contactdd::linalg::{inf_norm, TripletBuilder};
use contactdd::material::{compliance_voigt, stiffness_voigt};
use contactdd::metrics::{primal_errors, Complementarity, PrimalPiece};
use contactdd::mixed::{assemble_mixed, solve_linear_mixed, solve_monolithic_mixed, MixedSub1};
use contactdd::msfem::{build_mixed_basis, build_primal_basis, local_spectral_mixed, local_spectral_primal, MixedAux, MixedCemSolver, PrimalAux, PrimalCemSolver};
use contactdd::newton::penalty_monotonicity_gap;
use contactdd::primal::{assemble_primal, element_stiffness, solve_linear, solve_monolithic_contact, theorem31_split, PrimalSub1};
use contactdd::{
    run_dd, CemParams, DdConfig, Formulation, InterfaceRule, IterationReport, MaterialField, NewtonParams, PatternSpec, Phase, Reference,
    Region, RunOptions, SourceSpec, TraceData, TraceSide, TwoScaleMesh,
};
use proptest::test_runner::{Config, TestRunner};

type Outcome = Result<(bool, String), Box<dyn std::error::Error>>;

struct Criterion {
    id: u32,
    name: &'static str,
    run: fn() -> Outcome,
}

const CRITERIA: &[Criterion] = &[
    Criterion { id: 1, name: "energy identity along the primal iteration", run: lyapunov },
    Criterion { id: 2, name: "exact split is a fixed point", run: fixed_point },
    Criterion { id: 3, name: "primal iteration reaches the monolithic solution", run: primal_convergence },
    Criterion { id: 4, name: "mixed FEM iteration counts and errors (model1, E ratio 1e3)", run: mixed_table },
    Criterion { id: 5, name: "oversampling decay of the mixed multiscale error (model2)", run: oversampling },
    Criterion { id: 6, name: "robustness for nearly incompressible phases", run: locking },
    Criterion { id: 7, name: "contact complementarity at convergence", run: complementarity },
    Criterion { id: 8, name: "mixed equilibrium at every iteration", run: conservation },
    Criterion { id: 9, name: "degeneracy oracles", run: oracles },
    Criterion { id: 10, name: "property suite", run: properties },
];

fn main() {
    let only: Option<Vec<u32>> = std::env::var("CONTACTDD_ACCEPTANCE_ONLY")
        .ok()
        .map(|s| s.split(',').filter_map(|t| t.trim().parse().ok()).collect());
    let strict = std::env::var("CONTACTDD_ACCEPTANCE_STRICT").is_ok_and(|v| v == "1");
    let mut failed = 0;
    for c in CRITERIA {
        if only.as_ref().is_some_and(|o| !o.contains(&c.id)) {
            continue;
        }
        let t = Instant::now();
        let (ok, detail) = match (c.run)() {
            Ok(r) => r,
            Err(e) => (false, format!("error: {e}")),
        };
        failed += usize::from(!ok);
        println!("{} {:>2} {}: {} [{:.1} s]", if ok { "PASS" } else { "FAIL" }, c.id, c.name, detail, t.elapsed().as_secs_f64());
    }
    if strict && failed > 0 {
        std::process::exit(1);
    }
}

fn model1(nc: usize, refine: usize, stiff: Phase, matrix: Phase) -> (TwoScaleMesh, MaterialField, SourceSpec) {
    let mesh = TwoScaleMesh::new(nc, refine).expect("mesh");
    let mat = MaterialField::build(&mesh, &PatternSpec::model1(stiff, matrix)).expect("material");
    (mesh, mat, SourceSpec::builtin("model1").expect("source"))
}

fn model2(nc: usize, refine: usize, stiff: Phase, matrix: Phase) -> (TwoScaleMesh, MaterialField, SourceSpec) {
    let mesh = TwoScaleMesh::new(nc, refine).expect("mesh");
    let mat = MaterialField::build(&mesh, &PatternSpec::model2(stiff, matrix)).expect("material");
    (mesh, mat, SourceSpec::builtin("model2").expect("source"))
}

const STIFF: Phase = Phase::new(1e3, 0.35);
const MATRIX: Phase = Phase::new(1.0, 0.35);

fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

fn primal_state(s: &DdState) -> Option<(&contactdd::primal::PrimalOperators, &contactdd::primal::PrimalOperators, &[f64], &[f64])> {
    match s {
        DdState::Primal { ops1, ops2, u1, u2 } => Some((ops1, ops2, u1, u2)),
        DdState::Mixed { .. } => None,
    }
}

// 8×8 coarse, 32×32 fine, 10 iterations.
fn lyapunov() -> Outcome {
    let t = Instant::now();
    let (mesh, mat, src) = model1(8, 4, STIFF, MATRIX);
    let delta = mesh.h();
    let alpha = 1.0;
    let cfg = DdConfig { tol: 1e-300, max_iter: 10, ..DdConfig::new(Formulation::PrimalFem, alpha, delta) };
    let reference = Reference::compute(Formulation::PrimalFem, &mesh, &mat, &src, delta, &cfg.newton)?;
    let Reference::Primal { ops, u } = &reference else { unreachable!() };
    let out = run_dd(&cfg, &mesh, &mat, &src, RunOptions { record_history: true, ..Default::default() })?;
    let (ops1, ops2, _, _) = primal_state(&out.state).ok_or("primal state expected")?;
    let (g12s, g21s) = theorem31_split(ops, u, ops1, ops2, alpha, delta)?;
    let uh1 = ops1.space.transfer_from(&ops.space, u);
    let uh2 = ops2.space.transfer_from(&ops.space, u);
    let setup = LyapunovSetup { ops1, ops2, alpha, delta, g12_star: &g12s, g21_star: &g21s, uh1: &uh1, uh2: &uh2 };
    let rows = lyapunov_check(&setup, &out.history, (&out.g12, &out.g21))?;
    let worst = rows.iter().map(|r| r.residual).fold(0.0, f64::max);
    let monotone = rows.iter().all(|r| r.lhs <= r.g_hat_sq * (1.0 + 1e-12));
    let secs = t.elapsed().as_secs_f64();
    Ok((
        rows.len() == 10 && worst <= 1e-9 && monotone && secs < 10.0,
        format!("{} iterations, max identity residual {worst:.2e} (≤ 1e-9), ‖ĝ‖* nonincreasing: {monotone}", rows.len()),
    ))
}

fn fixed_point() -> Outcome {
    let t = Instant::now();
    let (mesh, mat, src) = model1(8, 4, STIFF, MATRIX);
    let delta = mesh.h();
    let cfg = DdConfig { tol: 1e-10, max_iter: 1, ..DdConfig::new(Formulation::PrimalFem, 1.0, delta) };
    let reference = Reference::compute(Formulation::PrimalFem, &mesh, &mat, &src, delta, &cfg.newton)?;
    let Reference::Primal { ops, u } = &reference else { unreachable!() };
    let o1 = assemble_primal(&mesh, &mat, &src, Region::Omega1, cfg.rule)?;
    let o2 = assemble_primal(&mesh, &mat, &src, Region::Omega2, cfg.rule)?;
    let (g12, g21) = theorem31_split(ops, u, &o1, &o2, 1.0, delta)?;
    let scale = g12.flat().iter().chain(&g21.flat()).fold(0.0f64, |m, v| m.max(v.abs()));
    let opts = RunOptions { reference: Some(&reference), initial: Some((g12, g21)), record_history: false };
    let out = run_dd(&cfg, &mesh, &mat, &src, opts)?;
    let first = &out.report.records[0];
    let (ops1, ops2, u1, u2) = primal_state(&out.state).ok_or("primal state expected")?;
    let (ea, _) = primal_errors(
        &[PrimalPiece { space: &ops.space, u }],
        &[PrimalPiece { space: &ops1.space, u: u1 }, PrimalPiece { space: &ops2.space, u: u2 }],
        &mat,
    )?;
    let moved = first.trace_change / scale.max(1.0);
    let secs = t.elapsed().as_secs_f64();
    Ok((moved <= 1e-10 && ea <= 1e-10 && secs < 10.0, format!("relative trace change {moved:.2e}, relative a-norm error {ea:.2e} (both ≤ 1e-10)")))
}

fn primal_convergence() -> Outcome {
    let t = Instant::now();
    let (mesh, mat, src) = model1(16, 2, STIFF, MATRIX);
    let delta = mesh.h();
    let cfg = DdConfig { tol: 1e-10, max_iter: 5000, ..DdConfig::new(Formulation::PrimalFem, 1.0, delta) };
    let reference = Reference::compute(Formulation::PrimalFem, &mesh, &mat, &src, delta, &cfg.newton)?;
    let out = run_dd(&cfg, &mesh, &mat, &src, RunOptions { reference: Some(&reference), ..Default::default() })?;
    let last = out.report.last().ok_or("no iterations")?;
    let ea = last.e_sigma.unwrap_or(f64::INFINITY);
    let secs = t.elapsed().as_secs_f64();
    Ok((
        out.report.converged && ea <= 1e-6 && secs < 60.0,
        format!("h = 1/32, {} iterations, converged: {}, relative a-norm error {ea:.2e} (≤ 1e-6)", out.report.iterations(), out.report.converged),
    ))
}

/// Runs a mixed-formulation sweep point against its monolithic reference.
fn mixed_run(
    mesh: &TwoScaleMesh,
    mat: &MaterialField,
    src: &SourceSpec,
    cfg: &DdConfig,
    reference: &Reference,
) -> Result<IterationReport, Box<dyn std::error::Error>> {
    Ok(run_dd(cfg, mesh, mat, src, RunOptions { reference: Some(reference), ..Default::default() })?.report)
}

fn mixed_table() -> Outcome {
    let t = Instant::now();
    let mut ok = true;
    let mut parts = vec![];
    for refine in [4, 8] {
        let (mesh, mat, src) = model1(16, refine, STIFF, MATRIX);
        let h = mesh.h();
        let reference = Reference::compute(Formulation::MixedFem, &mesh, &mat, &src, h, &NewtonParams::default())?;
        for (label, beta, tol, bound) in [("1", 1.0, 1e-5, 35), ("sqrt(h)", h.sqrt(), 1e-4, 15)] {
            let cfg = DdConfig { tol, max_iter: bound, ..DdConfig::new(Formulation::MixedFem, beta, h) };
            let r = mixed_run(&mesh, &mat, &src, &cfg, &reference)?;
            let last = r.last().ok_or("no iterations")?;
            let (es, eu) = (last.e_sigma.unwrap_or(f64::NAN), last.e_u.unwrap_or(f64::NAN));
            let pass = r.converged && es <= 0.15 && eu <= 0.10;
            ok &= pass;
            parts.push(format!(
                "h=1/{} β={label}: {}{} it (≤ {bound}), residual {:.2e}, e_σ {es:.3}, e_u {eu:.3}",
                mesh.n_fine(),
                if r.converged { "" } else { "not converged after " },
                r.iterations(),
                last.residual
            ));
        }
    }
    ok &= t.elapsed().as_secs_f64() < 900.0;
    Ok((ok, parts.join("; ")))
}

fn oversampling() -> Outcome {
    let t = Instant::now();
    let (mesh, mat, src) = model2(16, 4, STIFF, MATRIX);
    let h = mesh.h();
    let reference = Reference::compute(Formulation::MixedCem, &mesh, &mat, &src, h, &NewtonParams::default())?;
    let mut es = vec![];
    let mut converged = true;
    for layers in 1..=4 {
        let cfg = DdConfig {
            max_iter: 400,
            cem: CemParams { n_eig: 4, layers },
            ..DdConfig::new(Formulation::MixedCem, 1.0, h)
        };
        let r = mixed_run(&mesh, &mat, &src, &cfg, &reference)?;
        converged &= r.converged;
        es.push(r.last().and_then(|l| l.e_sigma).unwrap_or(f64::NAN));
    }
    let decreasing = es[0] > es[1] && es[1] > es[2];
    let halved = es[3] <= 0.5 * es[0];
    let list: Vec<String> = es.iter().map(|e| format!("{e:.4}")).collect();
    Ok((
        decreasing && halved && converged && t.elapsed().as_secs_f64() < 1200.0,
        format!("e_σ for osly 1..4: {} (strictly decreasing to 3: {decreasing}, osly 4 ≤ half of osly 1: {halved})", list.join(", ")),
    ))
}

/// Errors (e_σ, e_u) of a mixed multiscale run on model1 with the given phases.
fn locking_case(e1: f64, nu1: f64, nu2: f64) -> Result<(f64, f64, String), Box<dyn std::error::Error>> {
    let (mesh, mat, src) = model1(16, 4, Phase::new(e1, nu1), Phase::new(1.0, nu2));
    let h = mesh.h();
    let reference = Reference::compute(Formulation::MixedCem, &mesh, &mat, &src, h, &NewtonParams::default())?;
    let cfg = DdConfig { max_iter: 400, cem: CemParams { n_eig: 4, layers: 3 }, ..DdConfig::new(Formulation::MixedCem, 1.0, h) };
    let r = mixed_run(&mesh, &mat, &src, &cfg, &reference)?;
    let last = r.last().ok_or("no iterations")?;
    let status = format!("{} it{}", r.iterations(), if r.converged { "" } else { " (cap)" });
    Ok((last.e_sigma.unwrap_or(f64::NAN), last.e_u.unwrap_or(f64::NAN), status))
}

fn locking() -> Outcome {
    let mut ok = true;
    let mut parts = vec![];
    // (E1/E2, ν1, ν2)
    for (ratio, nu1, nu2) in [(1e-4, 0.35, 0.49), (1e4, 0.49, 0.35), (1.0, 0.49, 0.49)] {
        // errors are taken at the final iterate, converged or not
        let (bs, bu, bit) = locking_case(ratio, 0.35, 0.35)?;
        let (s, u, it) = locking_case(ratio, nu1, nu2)?;
        ok &= s <= 2.0 * bs && u <= 2.0 * bu && s <= 0.2 && u <= 0.2;
        parts.push(format!("E1/E2={ratio:e} ν=({nu1},{nu2}): e_σ {s:.3} vs {bs:.3}, e_u {u:.3} vs {bu:.3}, {it} vs {bit}"));
    }
    Ok((ok, parts.join("; ")))
}

/// Complementarity diagnostics of each formulation at convergence with
/// penalty parameter `delta`.
type ContactRow = (Formulation, bool, usize, Complementarity, f64);

fn contact_at(delta_scale: f64) -> Result<Vec<ContactRow>, Box<dyn std::error::Error>> {
    let (mesh, mat, src) = model1(8, 4, STIFF, MATRIX);
    let h = mesh.h();
    let delta = delta_scale * h;
    let mut out = vec![];
    for f in [Formulation::PrimalFem, Formulation::PrimalCem, Formulation::MixedFem, Formulation::MixedCem] {
        let robin = if f.is_mixed() { h.sqrt() } else { 1.0 };
        let cfg = DdConfig { tol: 1e-8, max_iter: 3000, cem: CemParams { n_eig: 4, layers: 2 }, ..DdConfig::new(f, robin, delta) };
        let run = run_dd(&cfg, &mesh, &mat, &src, RunOptions::default())?;
        let c = Complementarity::of(&run.state.contact_trace(delta)?);
        out.push((f, run.report.converged, run.report.iterations(), c, delta));
    }
    Ok(out)
}

fn complementarity() -> Outcome {
    let mut ok = true;
    let mut parts = vec![];
    for (f, converged, iterations, c, delta) in contact_at(1.0)? {
        ok &= converged && c.holds(1e-6, 1e-8, delta);
        parts.push(format!(
            "{}: {iterations} it, |σu| ratio {:.1e}, max σ_c {:.1e}, max u_c {:.1e} vs δ·max|σ_c| {:.1e}",
            f.name(),
            c.product_ratio,
            c.max_sigma,
            c.max_u,
            delta * c.max_abs_sigma
        ));
    }
    // The penalty leaves an O(δ) violation; a much smaller δ shows it shrinking.
    let small = contact_at(1e-6)?;
    let all = small.iter().all(|(_, conv, _, c, d)| *conv && c.holds(1e-6, 1e-8, *d));
    let list: Vec<String> =
        small.iter().map(|(f, _, _, c, _)| format!("{} ratio {:.1e} max σ_c {:.1e}", f.name(), c.product_ratio, c.max_sigma)).collect();
    parts.push(format!("diagnostic at δ = 1e-6·h (all bounds met: {all}): {}", list.join(", ")));
    Ok((ok, parts.join("; ")))
}

fn conservation() -> Outcome {
    let (mesh, mat, src) = model1(8, 4, STIFF, MATRIX);
    let h = mesh.h();
    let mut worst: f64 = 0.0;
    let mut total = 0;
    for (f, projected) in [(Formulation::MixedFem, false), (Formulation::MixedFem, true), (Formulation::MixedCem, false)] {
        let cfg = DdConfig {
            max_iter: 60,
            projected_load: projected,
            cem: CemParams { n_eig: 4, layers: 2 },
            ..DdConfig::new(f, h.sqrt(), h)
        };
        let out = run_dd(&cfg, &mesh, &mat, &src, RunOptions::default())?;
        for r in &out.report.records {
            worst = worst.max(r.conservation.unwrap_or(f64::INFINITY));
            total += 1;
        }
    }
    Ok((worst <= 1e-10, format!("{total} iterations over mixed_fem, mixed_fem with projected load and mixed_cem; max relative defect {worst:.2e} (≤ 1e-10)")))
}

fn wave(n: usize) -> TraceData {
    let v: Vec<f64> = (0..2 * n).map(|i| ((i as f64) * 0.37).sin() + 0.2).collect();
    TraceData::from_flat(TraceSide::G12, &v)
}

fn oracles() -> Outcome {
    let mut notes = vec![];
    let mut ok = true;
    let (mesh, mat, _) = model1(4, 2, Phase::new(10.0, 0.3), Phase::new(1.0, 0.3));
    let src = SourceSpec::builtin("model1")?;

    // (a) full eigencount and oversampling that covers Ω1
    let ops = assemble_primal(&mesh, &mat, &src, Region::Omega1, InterfaceRule::NewtonCotes)?;
    let g = wave(ops.interface()?.quad.len());
    let uf = PrimalSub1::new(ops.clone(), 1.0)?.solve(&g)?;
    let uc = PrimalCemSolver::new(ops.clone(), &mat, 1.0, CemParams { n_eig: 1000, layers: 4 }, None)?.solve(&g)?;
    let d = sub(&uc, &uf);
    let ep = (ops.energy(&d, &d) / ops.energy(&uf, &uf)).sqrt();
    let mops = assemble_mixed(&mesh, &mat, &src, Region::Omega1, InterfaceRule::Gauss(4))?;
    let g = wave(mops.interface()?.quad.len());
    let sf = MixedSub1::new(mops.clone(), 1.0)?.solve(&g)?;
    let sc = MixedCemSolver::new(mops.clone(), &mat, 1.0, CemParams { n_eig: 1000, layers: 4 }, None)?.solve(&g)?;
    let ds = sub(&sc.sigma, &sf.sigma);
    let em = (mops.stress_energy(&ds) / mops.stress_energy(&sf.sigma)).sqrt();
    ok &= ep <= 1e-8 && em <= 1e-8;
    notes.push(format!("(a) full CEM vs FEM: primal {ep:.1e}, mixed {em:.1e} (≤ 1e-8)"));

    // (b) inactive contact
    let (m4, mat4, _) = model1(4, 4, Phase::new(1.0, 0.3), Phase::new(1.0, 0.3));
    let pops = assemble_primal(&m4, &mat4, &SourceSpec::constant(-1.0, 0.0), Region::Omega, InterfaceRule::NewtonCotes)?;
    let lin = solve_linear(&pops)?;
    let (u, st) = solve_monolithic_contact(&pops, m4.h(), &NewtonParams::default())?;
    let bp = inf_norm(&sub(&u, &lin)) / inf_norm(&lin);
    let xops = assemble_mixed(&m4, &mat4, &SourceSpec::constant(1.0, 0.0), Region::Omega, InterfaceRule::Gauss(4))?;
    let xlin = solve_linear_mixed(&xops, None, None)?;
    let (xs, xst) = solve_monolithic_mixed(&xops, m4.h(), &NewtonParams::default())?;
    let bm = inf_norm(&sub(&xs.sigma, &xlin.sigma)) / inf_norm(&xlin.sigma);
    ok &= st.n_active == 0 && xst.n_active == 0 && bp <= 1e-10 && bm <= 1e-10;
    notes.push(format!("(b) inactive penalty vs linear: primal {bp:.1e}, mixed {bm:.1e} (≤ 1e-10)"));

    // (c) localized bases approach the global ones as m grows
    let (m6, mat6, _) = model1(6, 2, Phase::new(100.0, 0.3), Phase::new(1.0, 0.3));
    let ops = assemble_primal(&m6, &mat6, &src, Region::Omega1, InterfaceRule::NewtonCotes)?;
    let aux = PrimalAux::build(&ops, &mat6, 1.0, 3)?;
    let (glob, _) = build_primal_basis(&ops, &aux, 1.0, 6)?;
    let a = ops.robin_matrix(1.0)?;
    let n = ops.n_dofs();
    let mut pe = vec![];
    for m in 1..=4 {
        let (loc, _) = build_primal_basis(&ops, &aux, 1.0, m)?;
        let mut err: f64 = 0.0;
        for (lc, gc) in loc.cells.iter().zip(&glob.cells) {
            for j in 0..lc.ncols() {
                let d = sub(&lc.column(j, n), &gc.column(j, n));
                err = err.max(a.bilinear(&d, &d).sqrt());
            }
        }
        pe.push(err);
    }
    let mops = assemble_mixed(&m6, &mat6, &src, Region::Omega1, InterfaceRule::Gauss(4))?;
    let maux = MixedAux::build(&mops, &mat6, 1.0, 4)?;
    let (mglob, _) = build_mixed_basis(&mops, &maux, 1.0, 6)?;
    let ns = mops.n_stress();
    let mut me = vec![];
    for m in 1..=4 {
        let (loc, _) = build_mixed_basis(&mops, &maux, 1.0, m)?;
        let mut err: f64 = 0.0;
        for (lc, gc) in loc.cells.iter().zip(&mglob.cells) {
            for j in 0..lc.ncols() {
                let d = sub(&lc.column(j, ns), &gc.column(j, ns));
                err = err.max(mops.stress_energy(&d).sqrt());
            }
        }
        me.push(err);
    }
    let mono = |v: &[f64]| v.windows(2).all(|w| w[1] < w[0]);
    ok &= mono(&pe) && mono(&me);
    let fmt = |v: &[f64]| v.iter().map(|e| format!("{e:.1e}")).collect::<Vec<_>>().join(" > ");
    notes.push(format!("(c) local-global basis gap for m=1..4: primal {}, mixed {}", fmt(&pe), fmt(&me)));
    Ok((ok, notes.join("; ")))
}

fn properties() -> Outcome {
    let mut notes = vec![];
    let mut ok = true;

    // scalar penalty inequality on random pairs
    let mut runner = TestRunner::new(Config { cases: 10_000, failure_persistence: None, ..Config::default() });
    let res = runner.run(&(-1e3f64..1e3, -1e3f64..1e3), |(v, w)| {
        let d = v.max(0.0) - w.max(0.0);
        proptest::prop_assert!(d * (v - w) >= d * d - 1e-9 * (1.0 + d * d));
        proptest::prop_assert!(penalty_monotonicity_gap(v, w) >= -1e-9 * (1.0 + v.abs() + w.abs()).powi(2));
        Ok(())
    });
    ok &= res.is_ok();
    notes.push(format!("penalty inequality on 10^4 pairs: {}", if res.is_ok() { "holds" } else { "violated" }));

    // rigid motions span the kernel of the unconstrained stiffness
    let (mesh, mat, _) = model1(4, 2, Phase::new(1e3, 0.3), Phase::new(1.0, 0.45));
    let nv = mesh.n_vertices();
    let mut b = TripletBuilder::new(2 * nv, 2 * nv);
    for c in 0..mesh.n_cells() {
        let (i, j) = mesh.cell_ij(c);
        let vs = [mesh.vertex(i, j), mesh.vertex(i + 1, j), mesh.vertex(i + 1, j + 1), mesh.vertex(i, j + 1)];
        let ke = element_stiffness(&mat, c);
        for p in 0..8 {
            for q in 0..8 {
                b.push(2 * vs[p / 2] + p % 2, 2 * vs[q / 2] + q % 2, ke[p][q]);
            }
        }
    }
    let k = b.build();
    let mut rigid: f64 = 0.0;
    for mode in 0..3 {
        let u: Vec<f64> = (0..nv)
            .flat_map(|v| {
                let (x, y) = mesh.vertex_coords(v);
                match mode {
                    0 => [1.0, 0.0],
                    1 => [0.0, 1.0],
                    _ => [-y, x],
                }
            })
            .collect();
        rigid = rigid.max(inf_norm(&k.mul_vec(&u)) / k.norm_inf());
    }
    ok &= rigid <= 1e-12;
    notes.push(format!("rigid modes ‖Kr‖/‖K‖ {rigid:.1e}"));

    // local spectral problems: nonnegative spectrum, s-orthonormal modes
    let (m5, mat5, src) = model1(5, 2, Phase::new(10.0, 0.3), Phase::new(1.0, 0.3));
    let pops = assemble_primal(&m5, &mat5, &src, Region::Omega1, InterfaceRule::NewtonCotes)?;
    let mops = assemble_mixed(&m5, &mat5, &src, Region::Omega1, InterfaceRule::Gauss(4))?;
    let mut neg: f64 = 0.0;
    let mut orth: f64 = 0.0;
    for k in 0..m5.n_coarse_omega1() {
        let p = local_spectral_primal(&pops, &mat5, k, 1.0, 5)?;
        let x = local_spectral_mixed(&mops, &mat5, k, 1.0, 5)?;
        for (ev, modes, weighted, scale) in [(&p.eigenvalues, &p.modes, &p.weighted, p.scale), (&x.eigenvalues, &x.modes, &x.weighted, x.scale)] {
            neg = neg.max(ev.iter().map(|l| -l / scale).fold(0.0, f64::max));
            let g = modes.transpose() * weighted;
            for i in 0..g.nrows() {
                for j in 0..g.ncols() {
                    orth = orth.max((g[(i, j)] - if i == j { 1.0 } else { 0.0 }).abs());
                }
            }
        }
    }
    ok &= neg <= 1e-10 && orth <= 1e-10;
    notes.push(format!("spectra: most negative λ/scale {:.1e}, orthonormality defect {orth:.1e}", -neg));

    // interface rules integrate linear functions exactly
    let m = TwoScaleMesh::new(16, 4)?;
    let mut quad: f64 = 0.0;
    for rule in [InterfaceRule::NewtonCotes, InterfaceRule::Gauss(1), InterfaceRule::Gauss(2), InterfaceRule::Gauss(4)] {
        let q = m.interface_quadrature(rule);
        for (a, bb) in [(1.0, 0.0), (0.0, 1.0), (-0.3, 2.7)] {
            quad = quad.max((q.integrate(|y| a + bb * y) - (a + bb / 2.0)).abs());
        }
    }
    ok &= quad <= 1e-14;
    notes.push(format!("quadrature error on linears {quad:.1e}"));

    // compliance inverts stiffness cell by cell
    let (m8, mat8, _) = model1(8, 2, Phase::new(1e4, 0.49), Phase::new(1e-4, 0.35));
    let mut inv: f64 = 0.0;
    for c in 0..m8.n_cells() {
        let (l, mu) = (mat8.lambda[c], mat8.mu[c]);
        let (a, cc) = (compliance_voigt(l, mu), stiffness_voigt(l, mu));
        for i in 0..3 {
            for j in 0..3 {
                let v: f64 = (0..3).map(|k| a[i][k] * cc[k][j]).sum();
                inv = inv.max((v - if i == j { 1.0 } else { 0.0 }).abs());
            }
        }
    }
    ok &= inv <= 1e-12;
    notes.push(format!("A·C = I defect {inv:.1e}"));
    Ok((ok, notes.join("; ")))
}
