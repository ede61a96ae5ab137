use super::*;
use crate::linalg::inf_norm;
use crate::material::{PatternSpec, Phase};
use crate::trace::TraceSide;
use approx::assert_relative_eq;

fn setup(nc: usize, r: usize) -> (TwoScaleMesh, MaterialField) {
    let mesh = TwoScaleMesh::new(nc, r).unwrap();
    let mat = MaterialField::build(&mesh, &PatternSpec::uniform(Phase::new(1.0, 0.3))).unwrap();
    (mesh, mat)
}

/// Coefficients of a constant stress field.
fn constant_field(space: &MixedSpace, s: [f64; 3]) -> Vec<f64> {
    let mut x = vec![0.0; space.n_stress()];
    for &t in space.triangles() {
        let kind = triangle_kind(t);
        let sd = space.local_stress_dofs(t);
        let mut loc = [0.0; NS];
        for v in 0..3 {
            loc[3 * v..3 * v + 3].copy_from_slice(&s);
        }
        for (e, (_, a, b)) in kind.edges().iter().enumerate() {
            let (_, n, _) = element::edge_frame(a.coords(), b.coords());
            loc[9 + 4 * e] = s[0] * n[0] + s[2] * n[1];
            loc[9 + 4 * e + 2] = s[2] * n[0] + s[1] * n[1];
        }
        loc[21..24].copy_from_slice(&s);
        for j in 0..NS {
            if let Some(d) = sd[j] {
                x[d] = loc[j];
            }
        }
    }
    x
}

fn pseudo_random(n: usize, seed: u64) -> Vec<f64> {
    let mut s = seed;
    (0..n)
        .map(|_| {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((s >> 11) as f64 / (1u64 << 53) as f64) * 2.0 - 1.0
        })
        .collect()
}

#[test]
fn constant_stress_energy() {
    let (mesh, mat) = setup(4, 2);
    let ops = assemble_mixed(&mesh, &mat, &SourceSpec::zero(), Region::Omega, InterfaceRule::Gauss(4)).unwrap();
    let x = constant_field(&ops.space, [1.0, 1.0, 0.0]);
    let a = crate::material::compliance_voigt(mat.lambda[0], mat.mu[0]);
    let expected = a[0][0] + a[0][1] + a[1][0] + a[1][1];
    assert_relative_eq!(ops.stress_energy(&x), expected, epsilon = 1e-12);
    // shear: (0,0,1) has density 2 A33
    let x = constant_field(&MixedSpace::new(&mesh, Region::Omega1), [0.0, 0.0, 1.0]);
    let o1 = assemble_mixed(&mesh, &mat, &SourceSpec::zero(), Region::Omega1, InterfaceRule::Gauss(4)).unwrap();
    assert_relative_eq!(o1.stress_energy(&x), 0.75 * 2.0 * a[2][2], epsilon = 1e-12);
}

#[test]
fn constant_stress_is_divergence_free() {
    let (mesh, mat) = setup(4, 2);
    let ops = assemble_mixed(&mesh, &mat, &SourceSpec::zero(), Region::Omega, InterfaceRule::Gauss(4)).unwrap();
    let x = constant_field(&ops.space, [0.3, -1.2, 0.0]);
    assert!(inf_norm(&ops.div.mul_vec(&x)) < 1e-12);
}

fn edge_traction(space: &MixedSpace, sigma: &[f64], t: usize, e: usize, s: f64) -> [f64; 2] {
    let kind = triangle_kind(t);
    let (_, a, b) = kind.edges()[e];
    let (_, n, _) = element::edge_frame(a.coords(), b.coords());
    let (a, b) = (a.coords(), b.coords());
    let p = [a[0] + s * (b[0] - a[0]), a[1] + s * (b[1] - a[1])];
    let v = space.stress_at(sigma, t, p);
    [v[0] * n[0] + v[2] * n[1], v[2] * n[0] + v[1] * n[1]]
}

#[test]
fn normal_traction_is_continuous() {
    let (mesh, _) = setup(2, 3);
    let space = MixedSpace::new(&mesh, Region::Omega);
    let x = pseudo_random(space.n_stress(), 7);
    let n = mesh.n_fine();
    let mut checked = 0;
    for cj in 0..n {
        for ci in 0..n {
            let c = mesh.cell(ci, cj);
            let mut pairs = vec![((2 * c, 2), (2 * c + 1, 0))];
            if cj > 0 {
                pairs.push(((2 * c, 0), (2 * mesh.cell(ci, cj - 1) + 1, 1)));
            }
            if ci > 0 {
                pairs.push(((2 * c + 1, 2), (2 * mesh.cell(ci - 1, cj), 1)));
            }
            for ((t1, e1), (t2, e2)) in pairs {
                for s in [0.0, 0.13, 0.5, 0.77, 1.0] {
                    let a = edge_traction(&space, &x, t1, e1, s);
                    let b = edge_traction(&space, &x, t2, e2, s);
                    assert!((a[0] - b[0]).abs() < 1e-10 && (a[1] - b[1]).abs() < 1e-10);
                    checked += 1;
                }
            }
        }
    }
    assert!(checked > 100);
}

#[test]
fn contact_edges_have_no_shear() {
    let (mesh, _) = setup(2, 2);
    let space = MixedSpace::new(&mesh, Region::Omega2);
    let x = pseudo_random(space.n_stress(), 3);
    let n = mesh.n_fine();
    for j in 0..n {
        let t = 2 * mesh.cell(n - 1, j);
        for s in [0.0, 0.3, 1.0] {
            assert!(edge_traction(&space, &x, t, 1, s)[1].abs() < 1e-12);
        }
    }
}

#[test]
fn zero_load_zero_solution() {
    let (mesh, mat) = setup(4, 2);
    let ops = assemble_mixed(&mesh, &mat, &SourceSpec::zero(), Region::Omega, InterfaceRule::Gauss(4)).unwrap();
    let (s, _) = solve_monolithic_mixed(&ops, mesh.h(), &NewtonParams::default()).unwrap();
    assert!(s.sigma.iter().chain(&s.u).all(|v| *v == 0.0));
}

#[test]
fn inactive_contact_matches_linear_solve() {
    let (mesh, mat) = setup(4, 4);
    // pushing toward the wall keeps the normal traction compressive
    let ops = assemble_mixed(&mesh, &mat, &SourceSpec::constant(1.0, 0.0), Region::Omega, InterfaceRule::Gauss(4)).unwrap();
    let lin = solve_linear_mixed(&ops, None, None).unwrap();
    let sc = ops.contact.as_ref().unwrap().normal_stress(&lin.sigma);
    assert!(sc.iter().all(|v| *v < 0.0));
    let (s, st) = solve_monolithic_mixed(&ops, 1e-6, &NewtonParams::default()).unwrap();
    assert_eq!(st.n_active, 0);
    let scale = inf_norm(&lin.sigma);
    for (a, b) in s.sigma.iter().zip(&lin.sigma) {
        assert!((a - b).abs() <= 1e-10 * scale);
    }
}

#[test]
fn monolithic_conserves_momentum_and_penalizes_tension() {
    let (mesh, _) = setup(4, 4);
    let spec = PatternSpec::model1(Phase::new(100.0, 0.3), Phase::new(1.0, 0.35));
    let mat = MaterialField::build(&mesh, &spec).unwrap();
    let f = SourceSpec::builtin("model1").unwrap();
    let ops = assemble_mixed(&mesh, &mat, &f, Region::Omega, InterfaceRule::Gauss(4)).unwrap();
    let delta = 1e-9;
    let (s, st) = solve_monolithic_mixed(&ops, delta, &NewtonParams::default()).unwrap();
    assert!(st.n_active > 0);
    let r = ops.divergence_residual(&s.sigma, &ops.load);
    assert!(inf_norm(&r) <= 1e-10 * inf_norm(&ops.load));
    let tr = contact_trace_mixed(&ops, &s.sigma, delta).unwrap();
    let smax = tr.iter().fold(0.0f64, |m, t| m.max(t.2.abs()));
    assert!(tr.iter().any(|t| t.2 < 0.0));
    for (_, _, sc) in tr {
        assert!(sc <= 1e-6 * smax);
    }
}

#[test]
fn sub1_linear_and_reproducible() {
    let (mesh, mat) = setup(4, 2);
    let ops = assemble_mixed(&mesh, &mat, &SourceSpec::zero(), Region::Omega1, InterfaceRule::Gauss(4)).unwrap();
    let n = ops.interface.as_ref().unwrap().quad.len();
    let s = MixedSub1::new(ops, 1.0).unwrap();
    let z = s.solve(&TraceData::zeros(TraceSide::G12, n)).unwrap();
    assert!(z.sigma.iter().chain(&z.u).all(|v| *v == 0.0));
    let a = TraceData::from_flat(TraceSide::G12, &pseudo_random(2 * n, 1));
    let b = TraceData::from_flat(TraceSide::G12, &pseudo_random(2 * n, 2));
    let (sa, sb, sab) = (s.solve(&a).unwrap(), s.solve(&b).unwrap(), s.solve(&a.add(&b)).unwrap());
    let scale = inf_norm(&sab.sigma);
    for k in 0..sab.sigma.len() {
        assert!((sab.sigma[k] - sa.sigma[k] - sb.sigma[k]).abs() <= 1e-10 * scale);
    }
    // data extracted from a solution gives the same solution back
    let g = robin_data_from_solution(s.ops(), 1.0, &sa).unwrap();
    let again = s.solve(&g).unwrap();
    let scale = inf_norm(&sa.sigma);
    for k in 0..sa.sigma.len() {
        assert!((again.sigma[k] - sa.sigma[k]).abs() <= 1e-9 * scale);
    }
}

#[test]
fn sub2_inactive_and_active_cases() {
    let (mesh, mat) = setup(4, 4);
    let f = SourceSpec::constant(1.0, 0.0);
    let ops = assemble_mixed(&mesh, &mat, &f, Region::Omega2, InterfaceRule::Gauss(4)).unwrap();
    let n = ops.interface.as_ref().unwrap().quad.len();
    let zero = TraceData::zeros(TraceSide::G21, n);
    let lin = solve_linear_mixed(&ops, Some(1.0), Some(&zero)).unwrap();
    let mut s = MixedSub2::new(ops, 1.0, 1e-6).unwrap();
    let (x, st) = s.solve(&zero, None, &NewtonParams::default()).unwrap();
    assert_eq!(st.n_active, 0);
    let scale = inf_norm(&lin.sigma);
    for (a, b) in x.sigma.iter().zip(&lin.sigma) {
        assert!((a - b).abs() <= 1e-10 * scale);
    }
    // pulling away from the wall activates the penalty
    let ops = assemble_mixed(&mesh, &mat, &SourceSpec::constant(-1.0, 0.0), Region::Omega2, InterfaceRule::Gauss(4)).unwrap();
    let mut s = MixedSub2::new(ops, 1.0, 1e-6).unwrap();
    let (_, st) = s.solve(&zero, None, &NewtonParams::default()).unwrap();
    assert!(st.n_active > 0 && st.iterations < 20);
    // zero data, zero result
    let ops = assemble_mixed(&mesh, &mat, &SourceSpec::zero(), Region::Omega2, InterfaceRule::Gauss(4)).unwrap();
    let mut s = MixedSub2::new(ops, 1.0, 1e-6).unwrap();
    let (x, _) = s.solve(&zero, None, &NewtonParams::default()).unwrap();
    assert!(x.sigma.iter().all(|v| *v == 0.0));
}

#[test]
fn interface_trace_is_consistent_between_sides() {
    // a constant stress sampled from both sides gives opposite tractions
    let (mesh, mat) = setup(4, 2);
    let s = [0.4, 1.1, -0.3];
    let o1 = assemble_mixed(&mesh, &mat, &SourceSpec::zero(), Region::Omega1, InterfaceRule::Gauss(4)).unwrap();
    let o2 = assemble_mixed(&mesh, &mat, &SourceSpec::zero(), Region::Omega2, InterfaceRule::Gauss(4)).unwrap();
    let t1 = o1.interface_traction(&constant_field(&o1.space, s)).unwrap();
    let x2 = constant_field(&o2.space, [s[0], s[1], s[2]]);
    let t2 = o2.interface_traction(&x2).unwrap();
    for (a, b) in t1.iter().zip(&t2) {
        assert_relative_eq!(a[0], s[0], epsilon = 1e-12);
        assert_relative_eq!(a[1], s[2], epsilon = 1e-12);
        assert_relative_eq!(a[0], -b[0], epsilon = 1e-12);
        assert_relative_eq!(a[1], -b[1], epsilon = 1e-12);
    }
}

