//! Example damping and depth callbacks, and a small demo comparing them on
//! a random affine contraction.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::anderson::{fixed_point_solve, gain, AndersonConfig, DampingArgs, DepthArgs, DepthChange, FixedPointProblem};
use crate::error::{Error, Result};
use crate::harness::report::{csv_float, Table};

/// Gain-based damping: `β = 1 − ½·gain`, bounded below by `beta_min`.
///
/// The gain is the predicted accelerated residual over the current one.
/// A gain near 0 means the history explains the residual well, so the
/// accelerated point is taken as is. With no history the gain is 1.
pub fn gain_damping(beta_min: f64) -> impl FnMut(&DampingArgs<'_>) -> f64 {
    move |a| {
        let f: Vec<f64> = a.g.iter().zip(a.u).map(|(g, u)| g - u).collect();
        (1.0 - 0.5 * gain(&f, a.qt_f)).max(beta_min)
    }
}

/// Filtering: removes history columns whose `|R_ii|` falls below
/// `tau · max_j |R_jj|`.
pub fn filtering_depth(tau: f64) -> impl FnMut(&DepthArgs<'_>) -> DepthChange {
    move |a| {
        let d = a.r.diagonal();
        let max = d.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        let remove: Vec<bool> = d.iter().map(|x| x.abs() < tau * max).collect();
        let kept = remove.iter().filter(|r| !**r).count();
        DepthChange { new_depth: kept, remove }
    }
}

/// `G(u) = M u + b` with `‖M‖₂ = norm` and entries drawn from `seed`.
#[derive(Debug, Clone)]
pub struct AffineMap {
    pub m: DMatrix<f64>,
    pub b: DVector<f64>,
}

impl AffineMap {
    pub fn random(n: usize, norm: f64, seed: u64) -> Result<Self> {
        if n == 0 || !(norm > 0.0 && norm < 1.0) {
            return Err(Error::invalid("affine map needs n > 0 and norm in (0, 1)"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let raw = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
        let s = raw.singular_values().max();
        let b = DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0));
        Ok(Self { m: raw * (norm / s), b })
    }

    pub fn dimension(&self) -> usize {
        self.b.len()
    }

    pub fn apply(&self, u: &[f64], out: &mut [f64]) {
        let n = self.dimension();
        for i in 0..n {
            out[i] = self.b[i] + (0..n).map(|j| self.m[(i, j)] * u[j]).sum::<f64>();
        }
    }

    /// Solves `(I − M) u = b` directly.
    pub fn fixed_point(&self) -> Option<Vec<f64>> {
        let n = self.dimension();
        let a = DMatrix::identity(n, n) - &self.m;
        a.lu().solve(&self.b).map(|x| x.as_slice().to_vec())
    }
}

pub const AA_DEMO_DIMENSION: usize = 10;
pub const AA_DEMO_NORM: f64 = 0.95;

#[derive(Debug, Clone, PartialEq)]
pub struct AaRow {
    pub config: String,
    pub iteration: usize,
    pub residual: f64,
}

/// Residual histories of plain iteration and several accelerated variants
/// on a random affine contraction, all starting from zero.
pub fn run_aa_demo(seed: u64) -> Result<Vec<AaRow>> {
    let map = AffineMap::random(AA_DEMO_DIMENSION, AA_DEMO_NORM, seed)?;
    let n = map.dimension();
    let configs: Vec<(&str, AndersonConfig)> = vec![
        ("picard", AndersonConfig::new(0)),
        ("picard-damped-0.5", AndersonConfig::new(0).with_damping(0.5)),
        ("aa-m1", AndersonConfig::new(1)),
        ("aa-m3", AndersonConfig::new(3)),
        ("aa-m5", AndersonConfig::new(5)),
        ("aa-m5-gain-damping", AndersonConfig::new(5).with_damping_fn(gain_damping(0.5))),
        ("aa-m5-filtering", AndersonConfig::new(5).with_depth_fn(filtering_depth(1e-3))),
    ];
    let mut rows = Vec::new();
    for (name, mut cfg) in configs {
        cfg.max_iters = 500;
        cfg.stop_tol = 1e-12;
        let mut p = FixedPointProblem::new(n, |u: &[f64], g: &mut [f64]| map.apply(u, g));
        let history = match fixed_point_solve(&mut p, &vec![0.0; n], &mut cfg) {
            Ok(s) => s.residual_history,
            Err(Error::NotConverged { .. }) => Vec::new(),
            Err(e) => return Err(e),
        };
        rows.extend(history.into_iter().enumerate().map(|(iteration, residual)| AaRow {
            config: name.to_string(),
            iteration,
            residual,
        }));
    }
    Ok(rows)
}

pub fn aa_table_csv(rows: &[AaRow]) -> Table {
    let mut t = Table::new(&["config", "iteration", "residual"]);
    for r in rows {
        t.push(vec![r.config.clone(), r.iteration.to_string(), csv_float(r.residual)]);
    }
    t
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn random_map_has_requested_norm() {
        let a = AffineMap::random(4, 0.5, 1).unwrap();
        assert!((a.m.singular_values().max() - 0.5).abs() < 1e-12);
        let u = a.fixed_point().unwrap();
        let mut g = vec![0.0; 4];
        a.apply(&u, &mut g);
        assert!(g.iter().zip(&u).all(|(x, y)| (x - y).abs() < 1e-12));
    }

    #[test]
    fn filtering_keeps_well_conditioned_columns() {
        let r = DMatrix::from_row_slice(3, 3, &[2.0, 0.1, 0.3, 0.0, 1e-6, 0.2, 0.0, 0.0, 1.0]);
        let mut f = filtering_depth(1e-3);
        let change = f(&DepthArgs { iter: 0, u: &[], g: &[], f: &[], df_history: &[], r: &r, depth: 3 });
        assert_eq!(change, DepthChange { new_depth: 2, remove: vec![false, true, false] });
    }

    #[test]
    fn demo_is_deterministic_and_accelerates() {
        let a = run_aa_demo(7).unwrap();
        assert_eq!(a, run_aa_demo(7).unwrap());
        let count = |c: &str| a.iter().filter(|r| r.config == c).count();
        assert!(count("aa-m5") < count("picard"));
        assert!(count("aa-m5-gain-damping") > 0 && count("aa-m5-filtering") > 0);
    }
}
