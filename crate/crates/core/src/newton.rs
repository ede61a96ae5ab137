//! Semismooth Newton for K x + Σ_q c_q (e_q·x)⁺ e_q = b.
//!
//! Each e_q is a sparse linear functional (a contact sample) and c_q > 0 its
//! penalty weight. The residual is piecewise linear, so a Newton step with
//! active set A = {q : e_q·x > 0} solves the linear system of that piece
//! exactly, and the iteration stops once the active set repeats.

use std::collections::VecDeque;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{inf_norm, CscMatrix, Factorization, SystemKind, TripletBuilder};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NewtonParams {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for NewtonParams {
    fn default() -> Self {
        Self { tol: 1e-12, max_iter: 50 }
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct NewtonStats {
    pub iterations: usize,
    pub residual: f64,
    pub n_active: usize,
}

/// Sparse linear functional x ↦ Σ coef·x[idx].
pub type Functional = Vec<(usize, f64)>;

/// A symmetric system with a one-sided penalty on sampled functionals.
pub struct PenalizedSystem {
    base: CscMatrix,
    kind: SystemKind,
    samples: Vec<Functional>,
    weights: Vec<f64>,
    /// positions in `base.values()` touched by sample q, with e_a e_b products
    updates: Vec<Vec<(usize, f64)>>,
    symbolic: Option<Arc<faer::sparse::linalg::cholesky::SymbolicCholesky<usize>>>,
    cache: VecDeque<(Vec<bool>, Arc<Factorization>)>,
    cache_cap: usize,
}

impl PenalizedSystem {
    /// `weights[q]` already includes 1/δ.
    pub fn new(matrix: &CscMatrix, kind: SystemKind, samples: Vec<Functional>, weights: Vec<f64>) -> Result<Self> {
        if samples.len() != weights.len() {
            return Err(Error::DimensionMismatch("penalty samples and weights".into()));
        }
        // widen the pattern so every Jacobian shares one symbolic analysis
        let n = matrix.nrows();
        let mut b = TripletBuilder::with_capacity(n, n, matrix.nnz() + samples.iter().map(|s| s.len() * s.len()).sum::<usize>());
        matrix.push_into(&mut b, 0, 0, 1.0);
        for s in &samples {
            for &(i, _) in s {
                for &(j, _) in s {
                    b.push(i, j, 0.0);
                }
            }
        }
        let base = b.build();
        let mut updates = Vec::with_capacity(samples.len());
        for s in &samples {
            let mut u = Vec::with_capacity(s.len() * s.len());
            for &(i, a) in s {
                for &(j, c) in s {
                    let r = base.col_ptr()[j]..base.col_ptr()[j + 1];
                    let p = base.row_idx()[r.clone()].binary_search(&i).expect("pattern includes sample block");
                    u.push((r.start + p, a * c));
                }
            }
            updates.push(u);
        }
        Ok(Self { base, kind, samples, weights, updates, symbolic: None, cache: VecDeque::new(), cache_cap: 8 })
    }

    /// Maximum number of cached Jacobian factorizations.
    pub fn set_cache_capacity(&mut self, cap: usize) {
        self.cache_cap = cap.max(1);
        while self.cache.len() > self.cache_cap {
            self.cache.pop_back();
        }
    }

    pub fn dim(&self) -> usize {
        self.base.nrows()
    }

    pub fn n_samples(&self) -> usize {
        self.samples.len()
    }

    pub fn sample_value(&self, q: usize, x: &[f64]) -> f64 {
        self.samples[q].iter().map(|&(i, c)| c * x[i]).sum()
    }

    pub fn sample_values(&self, x: &[f64]) -> Vec<f64> {
        (0..self.samples.len()).map(|q| self.sample_value(q, x)).collect()
    }

    pub fn matrix(&self) -> &CscMatrix {
        &self.base
    }

    pub fn active_set(&self, x: &[f64]) -> Vec<bool> {
        (0..self.samples.len()).map(|q| self.sample_value(q, x) > 0.0).collect()
    }

    /// K x + Σ c_q (e_q·x)⁺ e_q − b
    pub fn residual(&self, x: &[f64], b: &[f64]) -> Vec<f64> {
        let mut r = self.base.mul_vec(x);
        for (q, s) in self.samples.iter().enumerate() {
            let v = self.sample_value(q, x);
            if v > 0.0 {
                for &(i, c) in s {
                    r[i] += self.weights[q] * v * c;
                }
            }
        }
        for (ri, bi) in r.iter_mut().zip(b) {
            *ri -= bi;
        }
        r
    }

    fn factor_for(&mut self, active: &[bool]) -> Result<Arc<Factorization>> {
        if let Some(pos) = self.cache.iter().position(|(a, _)| a == active) {
            let entry = self.cache.remove(pos).unwrap();
            let f = entry.1.clone();
            self.cache.push_front(entry);
            return Ok(f);
        }
        let mut m = self.base.clone();
        {
            let vals = m.values_mut();
            for (q, on) in active.iter().enumerate() {
                if *on {
                    for &(p, prod) in &self.updates[q] {
                        vals[p] += self.weights[q] * prod;
                    }
                }
            }
        }
        let f = match &self.symbolic {
            Some(s) => Factorization::with_symbolic(s.clone(), &m, &self.kind)?,
            None => {
                let f = Factorization::new(&m, &self.kind)?;
                self.symbolic = Some(f.symbolic());
                f
            }
        };
        let f = Arc::new(f);
        self.cache.push_front((active.to_vec(), f.clone()));
        if self.cache.len() > self.cache_cap {
            self.cache.pop_back();
        }
        Ok(f)
    }

    /// Solves with an optional warm start. Returns the solution and stats.
    pub fn solve(&mut self, b: &[f64], x0: Option<&[f64]>, params: &NewtonParams) -> Result<(Vec<f64>, NewtonStats)> {
        if b.len() != self.dim() {
            return Err(Error::DimensionMismatch("penalized system rhs".into()));
        }
        let mut active = match x0 {
            Some(x) if x.len() == b.len() => self.active_set(x),
            _ => vec![false; self.samples.len()],
        };
        let scale = inf_norm(b).max(f64::MIN_POSITIVE);
        let mut last_res = f64::INFINITY;
        for it in 1..=params.max_iter.max(1) {
            let f = self.factor_for(&active)?;
            let x = f.solve(b)?;
            let next = self.active_set(&x);
            let r = inf_norm(&self.residual(&x, b));
            last_res = r;
            let n_active = next.iter().filter(|a| **a).count();
            if next == active || r <= params.tol * scale {
                return Ok((x, NewtonStats { iterations: it, residual: r, n_active }));
            }
            active = next;
        }
        Err(Error::NewtonDiverged { iterations: params.max_iter, residual: last_res })
    }
}

/// Scalar form of the penalty monotonicity: (v⁺ − w⁺)(v − w) ≥ (v⁺ − w⁺)².
pub fn penalty_monotonicity_gap(v: f64, w: f64) -> f64 {
    let d = v.max(0.0) - w.max(0.0);
    d * (v - w) - d * d
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn laplace(n: usize) -> CscMatrix {
        let mut b = TripletBuilder::new(n, n);
        for i in 0..n {
            b.push(i, i, 2.0);
            if i + 1 < n {
                b.push_sym(i, i + 1, -1.0);
            }
        }
        b.build()
    }

    #[test]
    fn inactive_penalty_is_linear_solve() {
        let k = laplace(5);
        let b = vec![-1.0; 5];
        let mut s = PenalizedSystem::new(&k, SystemKind::Spd, vec![vec![(2, 1.0)]], vec![1e6]).unwrap();
        let (x, st) = s.solve(&b, None, &NewtonParams::default()).unwrap();
        let lin = crate::linalg::solve_sparse(&k, &b, &SystemKind::Spd).unwrap();
        for (a, c) in x.iter().zip(&lin) {
            assert_relative_eq!(a, c, epsilon = 1e-13);
        }
        assert_eq!(st.n_active, 0);
    }

    #[test]
    fn active_penalty_pushes_back() {
        // 1D obstacle-like problem: pushing up, penalized at the middle
        let n = 9;
        let k = laplace(n);
        let b = vec![1.0; n];
        let c = 1e8;
        let mut s = PenalizedSystem::new(&k, SystemKind::Spd, vec![vec![(4, 1.0)]], vec![c]).unwrap();
        let (x, st) = s.solve(&b, None, &NewtonParams::default()).unwrap();
        assert_eq!(st.n_active, 1);
        assert!(x[4] > 0.0 && x[4] < 1e-6);
        assert!(inf_norm(&s.residual(&x, &b)) < 1e-8);
        assert!(st.iterations <= 3);
    }

    #[test]
    fn zero_rhs_gives_zero() {
        let k = laplace(4);
        let mut s = PenalizedSystem::new(&k, SystemKind::Spd, vec![vec![(0, 1.0)], vec![(3, 1.0)]], vec![1.0, 1.0]).unwrap();
        let (x, _) = s.solve(&[0.0; 4], None, &NewtonParams::default()).unwrap();
        assert!(x.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn monotonicity_examples() {
        assert_eq!(penalty_monotonicity_gap(2.0, 1.0), 0.0);
        assert_eq!(penalty_monotonicity_gap(-2.0, -1.0), 0.0);
        // v > 0 > w: (v)(v - w) - v² = -v w > 0
        assert_eq!(penalty_monotonicity_gap(2.0, -1.0), 2.0);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(10_000))]
            #[test]
            fn scalar_penalty_inequality(v in -1e3f64..1e3, w in -1e3f64..1e3) {
                let d = v.max(0.0) - w.max(0.0);
                prop_assert!(d * (v - w) >= d * d - 1e-9 * (1.0 + d * d));
                prop_assert!(d * d >= 0.0);
                prop_assert!(penalty_monotonicity_gap(v, w) >= -1e-9 * (1.0 + v.abs() + w.abs()).powi(2));
            }
        }

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(64))]
            #[test]
            fn newton_residual_vanishes(loads in proptest::collection::vec(-1.0f64..1.0, 8), c in 1.0f64..1e6) {
                let k = laplace(8);
                let samples: Vec<Functional> = (0..8).step_by(2).map(|i| vec![(i, 1.0)]).collect();
                let w = vec![c; samples.len()];
                let mut s = PenalizedSystem::new(&k, SystemKind::Spd, samples, w).unwrap();
                let (x, _) = s.solve(&loads, None, &NewtonParams::default()).unwrap();
                prop_assert!(inf_norm(&s.residual(&x, &loads)) <= 1e-9 * (1.0 + c * inf_norm(&x)));
            }
        }
    }
}
