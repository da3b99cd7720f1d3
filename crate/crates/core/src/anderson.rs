//! Fixed-point iteration `u = G(u)` with optional Anderson acceleration.
//!
//! The least-squares problem `min ‖f_k − ΔF γ‖` is solved through a thin QR
//! factorization of the residual-difference history `ΔF`. The factorization
//! is updated in place: new columns are orthogonalized by modified
//! Gram–Schmidt (with one re-orthogonalization pass), and removed columns
//! are eliminated by Givens rotations.
//!
//! With damping `β_k` the update is
//! `u_{k+1} = β_k (G(u_k) − ΔG γ) + (1 − β_k)(u_k − ΔU γ)`,
//! which is pure acceleration at `β = 1` and damped Picard iteration at
//! depth zero.

use std::sync::Arc;

use nalgebra::DMatrix;

use crate::diagnostics::{Level, LogRecord, Logger};
use crate::error::{check_dim, check_finite, Error, Result};
use crate::vector::{dot, norm2};

/// Largest tolerated ratio between the biggest and smallest diagonal entries
/// of `R` before the oldest history column is dropped.
pub const MAX_R_DIAGONAL_RATIO: f64 = 1e14;

/// A map `G: ℝⁿ → ℝⁿ` whose fixed point is sought.
pub struct FixedPointProblem<G> {
    n: usize,
    g: G,
}

impl<G: FnMut(&[f64], &mut [f64])> FixedPointProblem<G> {
    pub fn new(n: usize, g: G) -> Self {
        Self { n, g }
    }

    pub fn dimension(&self) -> usize {
        self.n
    }

    pub fn apply(&mut self, u: &[f64], out: &mut [f64]) -> Result<()> {
        check_dim(self.n, u.len())?;
        check_dim(self.n, out.len())?;
        (self.g)(u, out);
        check_finite(out, "fixed-point map")
    }
}

/// Arguments handed to a [`DampingFn`].
#[derive(Debug, Clone, Copy)]
pub struct DampingArgs<'a> {
    /// Zero-based index of the update being computed.
    pub iter: usize,
    pub u: &'a [f64],
    pub g: &'a [f64],
    /// `Qᵀ f_k`, one entry per history column (oldest first); see
    /// [`aa_gain_inputs`].
    pub qt_f: &'a [f64],
    pub depth: usize,
}

/// Returns the damping factor for this iteration, in `(0, 1]`.
/// Invoked once per iteration, including delay iterations (where
/// `qt_f` is empty and `depth` is 0). User data lives in the closure.
pub type DampingFn = Box<dyn FnMut(&DampingArgs<'_>) -> f64>;

/// Arguments handed to a [`DepthFn`].
#[derive(Debug, Clone, Copy)]
pub struct DepthArgs<'a> {
    pub iter: usize,
    pub u: &'a [f64],
    pub g: &'a [f64],
    pub f: &'a [f64],
    /// Residual differences, oldest first.
    pub df_history: &'a [Vec<f64>],
    /// Upper-triangular factor with `Q R = ΔF`.
    pub r: &'a DMatrix<f64>,
    pub depth: usize,
}

/// Result of a [`DepthFn`]: `remove[i]` drops history slot `i`, and
/// `new_depth` must equal the number of slots kept.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DepthChange {
    pub new_depth: usize,
    pub remove: Vec<bool>,
}

impl DepthChange {
    pub fn keep_all(depth: usize) -> Self {
        Self { new_depth: depth, remove: vec![false; depth] }
    }

    pub fn clear(depth: usize) -> Self {
        Self { new_depth: 0, remove: vec![true; depth] }
    }
}

/// Invoked after the newest history column is added, whenever the history
/// is non-empty.
pub type DepthFn = Box<dyn FnMut(&DepthArgs<'_>) -> DepthChange>;

pub enum Damping {
    Fixed(f64),
    Callback(DampingFn),
}

impl std::fmt::Debug for Damping {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Damping::Fixed(b) => write!(f, "Fixed({b})"),
            Damping::Callback(_) => f.write_str("Callback(..)"),
        }
    }
}

fn check_beta(beta: f64) -> Result<f64> {
    if beta > 0.0 && beta <= 1.0 {
        Ok(beta)
    } else {
        Err(Error::invalid(format!("damping factor {beta} outside (0, 1]")))
    }
}

pub struct AndersonConfig {
    /// History window `m`; 0 disables acceleration.
    pub max_depth: usize,
    /// Plain (damped) iterations before history is collected.
    pub delay: usize,
    pub damping: Damping,
    pub depth_fn: Option<DepthFn>,
    pub max_iters: usize,
    /// Convergence test on `‖G(u) − u‖₂`.
    pub stop_tol: f64,
    pub logger: Option<Arc<Logger>>,
}

impl AndersonConfig {
    pub fn new(max_depth: usize) -> Self {
        Self {
            max_depth,
            delay: 0,
            damping: Damping::Fixed(1.0),
            depth_fn: None,
            max_iters: 100,
            stop_tol: 1e-10,
            logger: None,
        }
    }

    pub fn with_damping(mut self, beta: f64) -> Self {
        self.damping = Damping::Fixed(beta);
        self
    }

    pub fn with_damping_fn(mut self, f: impl FnMut(&DampingArgs<'_>) -> f64 + 'static) -> Self {
        self.damping = Damping::Callback(Box::new(f));
        self
    }

    pub fn with_depth_fn(mut self, f: impl FnMut(&DepthArgs<'_>) -> DepthChange + 'static) -> Self {
        self.depth_fn = Some(Box::new(f));
        self
    }

    pub fn validate(&self) -> Result<()> {
        if let Damping::Fixed(b) = self.damping {
            check_beta(b)?;
        }
        if !(self.stop_tol >= 0.0) {
            return Err(Error::invalid("stop_tol must be non-negative"));
        }
        Ok(())
    }
}

impl std::fmt::Debug for AndersonConfig {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("AndersonConfig")
            .field("max_depth", &self.max_depth)
            .field("delay", &self.delay)
            .field("damping", &self.damping)
            .field("depth_fn", &self.depth_fn.is_some())
            .field("max_iters", &self.max_iters)
            .field("stop_tol", &self.stop_tol)
            .finish()
    }
}

/// Difference histories and the QR factors of `ΔF`, oldest column first.
#[derive(Debug, Clone)]
pub struct AaWorkspace {
    n: usize,
    du: Vec<Vec<f64>>,
    dg: Vec<Vec<f64>>,
    df: Vec<Vec<f64>>,
    q: Vec<Vec<f64>>,
    r: DMatrix<f64>,
}

impl AaWorkspace {
    pub fn new(n: usize) -> Self {
        Self {
            n,
            du: Vec::new(),
            dg: Vec::new(),
            df: Vec::new(),
            q: Vec::new(),
            r: DMatrix::zeros(0, 0),
        }
    }

    pub fn depth(&self) -> usize {
        self.q.len()
    }

    pub fn q_columns(&self) -> &[Vec<f64>] {
        &self.q
    }

    pub fn r(&self) -> &DMatrix<f64> {
        &self.r
    }

    pub fn df_history(&self) -> &[Vec<f64>] {
        &self.df
    }

    pub fn clear(&mut self) {
        *self = Self::new(self.n);
    }

    /// Appends a history column. Fails if `df` lies numerically in the span
    /// of the current columns.
    pub fn qr_insert(&mut self, du: &[f64], dg: &[f64], df: &[f64]) -> Result<()> {
        for v in [du, dg, df] {
            check_dim(self.n, v.len())?;
        }
        let k = self.depth();
        let mut v = df.to_vec();
        let mut coeff = vec![0.0; k];
        for _pass in 0..2 {
            for (i, q) in self.q.iter().enumerate() {
                let s = dot(q, &v);
                coeff[i] += s;
                for (vj, qj) in v.iter_mut().zip(q) {
                    *vj -= s * qj;
                }
            }
        }
        let rkk = norm2(&v);
        if !(rkk > f64::EPSILON * self.n as f64 * norm2(df)) || !rkk.is_finite() {
            return Err(Error::invalid("history column is linearly dependent"));
        }
        v.iter_mut().for_each(|x| *x /= rkk);
        self.r.resize_mut(k + 1, k + 1, 0.0);
        for (i, c) in coeff.into_iter().enumerate() {
            self.r[(i, k)] = c;
        }
        self.r[(k, k)] = rkk;
        self.q.push(v);
        self.du.push(du.to_vec());
        self.dg.push(dg.to_vec());
        self.df.push(df.to_vec());
        Ok(())
    }

    /// Removes history column `index` and restores the triangular form of
    /// `R` with Givens rotations.
    pub fn qr_remove(&mut self, index: usize) -> Result<()> {
        let k = self.depth();
        if index >= k {
            return Err(Error::IndexOutOfRange { index, len: k });
        }
        for j in index..k - 1 {
            for i in 0..k {
                self.r[(i, j)] = self.r[(i, j + 1)];
            }
        }
        for j in index..k - 1 {
            let (a, b) = (self.r[(j, j)], self.r[(j + 1, j)]);
            let h = a.hypot(b);
            if h == 0.0 {
                continue;
            }
            let (c, s) = (a / h, b / h);
            for col in j..k - 1 {
                let (x, y) = (self.r[(j, col)], self.r[(j + 1, col)]);
                self.r[(j, col)] = c * x + s * y;
                self.r[(j + 1, col)] = -s * x + c * y;
            }
            self.r[(j + 1, j)] = 0.0;
            let (lo, hi) = self.q.split_at_mut(j + 1);
            for (x, y) in lo[j].iter_mut().zip(hi[0].iter_mut()) {
                let (qx, qy) = (*x, *y);
                *x = c * qx + s * qy;
                *y = -s * qx + c * qy;
            }
        }
        self.q.pop();
        self.r.resize_mut(k - 1, k - 1, 0.0);
        self.du.remove(index);
        self.dg.remove(index);
        self.df.remove(index);
        Ok(())
    }

    /// `max |R_ii| / min |R_ii|`; 1 for an empty history.
    pub fn diagonal_ratio(&self) -> f64 {
        let d = self.r.diagonal();
        if d.is_empty() {
            return 1.0;
        }
        let max = d.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        let min = d.iter().fold(f64::INFINITY, |m, x| m.min(x.abs()));
        max / min
    }

    /// Solves `R γ = Qᵀ f`.
    pub fn solve(&self, qt_f: &[f64]) -> Vec<f64> {
        let k = self.depth();
        let mut gamma = qt_f.to_vec();
        for i in (0..k).rev() {
            let s: f64 = (i + 1..k).map(|j| self.r[(i, j)] * gamma[j]).sum();
            gamma[i] = (gamma[i] - s) / self.r[(i, i)];
        }
        gamma
    }
}

/// `Qᵀ f` for the current history, oldest column first. Its squared norm is
/// the residual reduction the accelerated step predicts:
/// `min ‖f − ΔF γ‖² = ‖f‖² − ‖Qᵀ f‖²`.
pub fn aa_gain_inputs(ws: &AaWorkspace, f: &[f64]) -> Vec<f64> {
    ws.q.iter().map(|q| dot(q, f)).collect()
}

/// Predicted over current residual norm, in `[0, 1]`.
pub fn gain(f: &[f64], qt_f: &[f64]) -> f64 {
    let ff = dot(f, f);
    if ff == 0.0 {
        return 0.0;
    }
    (1.0 - dot(qt_f, qt_f) / ff).max(0.0).sqrt()
}

#[derive(Debug, Clone, PartialEq)]
pub struct FixedPointSolution {
    pub u: Vec<f64>,
    /// Number of updates performed.
    pub iterations: usize,
    /// `‖G(u_k) − u_k‖₂` for every iterate, starting with `u_0`.
    pub residual_history: Vec<f64>,
}

/// Iterates until `‖G(u) − u‖₂ ≤ stop_tol`. Exhausting `max_iters` returns
/// [`Error::NotConverged`] carrying the iterate with the smallest residual.
pub fn fixed_point_solve<G: FnMut(&[f64], &mut [f64])>(
    problem: &mut FixedPointProblem<G>,
    u0: &[f64],
    cfg: &mut AndersonConfig,
) -> Result<FixedPointSolution> {
    cfg.validate()?;
    let n = problem.dimension();
    check_dim(n, u0.len())?;
    check_finite(u0, "fixed-point initial guess")?;
    if cfg.max_depth > n {
        if let Some(l) = cfg.logger.as_deref() {
            l.log(
                &LogRecord::new(Level::Warning, "fixed_point_solve", "depth-exceeds-dimension")
                    .with("max_depth", cfg.max_depth as f64)
                    .with("n", n as f64),
            );
        }
    }

    let mut ws = AaWorkspace::new(n);
    let mut u = u0.to_vec();
    let mut g = vec![0.0; n];
    problem.apply(&u, &mut g)?;
    let mut f: Vec<f64> = g.iter().zip(&u).map(|(a, b)| a - b).collect();
    let mut history = vec![norm2(&f)];
    let mut best = (history[0], u.clone());
    let mut prev: Option<(Vec<f64>, Vec<f64>, Vec<f64>)> = None;

    let mut k = 0;
    loop {
        let res = *history.last().unwrap();
        if res <= cfg.stop_tol {
            return Ok(FixedPointSolution { u, iterations: k, residual_history: history });
        }
        if k == cfg.max_iters {
            return Err(Error::NotConverged { iterations: k, residual: best.0, best: best.1 });
        }

        if cfg.max_depth > 0 && k >= cfg.delay {
            if let Some((pu, pg, pf)) = prev.take() {
                let du: Vec<f64> = u.iter().zip(&pu).map(|(a, b)| a - b).collect();
                let dg: Vec<f64> = g.iter().zip(&pg).map(|(a, b)| a - b).collect();
                let df: Vec<f64> = f.iter().zip(&pf).map(|(a, b)| a - b).collect();
                push_column(&mut ws, cfg.max_depth, &du, &dg, &df)?;
            }
            if ws.depth() > 0 {
                if let Some(depth_fn) = cfg.depth_fn.as_mut() {
                    let depth = ws.depth();
                    let change = depth_fn(&DepthArgs {
                        iter: k,
                        u: &u,
                        g: &g,
                        f: &f,
                        df_history: ws.df_history(),
                        r: ws.r(),
                        depth,
                    });
                    apply_depth_change(&mut ws, &change)?;
                }
            }
        }

        let qt_f = aa_gain_inputs(&ws, &f);
        let beta = match &mut cfg.damping {
            Damping::Fixed(b) => *b,
            Damping::Callback(cb) => check_beta(cb(&DampingArgs {
                iter: k,
                u: &u,
                g: &g,
                qt_f: &qt_f,
                depth: ws.depth(),
            }))?,
        };
        let gamma = ws.solve(&qt_f);
        let mut acc_g = g.clone();
        let mut acc_u = u.clone();
        for (j, gj) in gamma.iter().enumerate() {
            for i in 0..n {
                acc_g[i] -= gj * ws.dg[j][i];
                acc_u[i] -= gj * ws.du[j][i];
            }
        }
        let next: Vec<f64> = if beta == 1.0 {
            acc_g
        } else {
            acc_g.iter().zip(&acc_u).map(|(a, b)| beta * a + (1.0 - beta) * b).collect()
        };

        prev = Some((std::mem::replace(&mut u, next), g.clone(), f.clone()));
        problem.apply(&u, &mut g)?;
        for i in 0..n {
            f[i] = g[i] - u[i];
        }
        let r = norm2(&f);
        history.push(r);
        if r < best.0 {
            best = (r, u.clone());
        }
        k += 1;
    }
}

/// Slides the window if full, inserts, then enforces the conditioning
/// safeguard by dropping the oldest columns.
fn push_column(ws: &mut AaWorkspace, max_depth: usize, du: &[f64], dg: &[f64], df: &[f64]) -> Result<()> {
    if norm2(df) == 0.0 {
        return Ok(());
    }
    if ws.depth() == max_depth {
        ws.qr_remove(0)?;
    }
    while ws.qr_insert(du, dg, df).is_err() {
        if ws.depth() == 0 {
            return Ok(());
        }
        ws.qr_remove(0)?;
    }
    while ws.depth() > 1 && !(ws.diagonal_ratio() <= MAX_R_DIAGONAL_RATIO) {
        ws.qr_remove(0)?;
    }
    Ok(())
}

fn apply_depth_change(ws: &mut AaWorkspace, change: &DepthChange) -> Result<()> {
    let depth = ws.depth();
    if change.remove.len() != depth {
        return Err(Error::invalid(format!(
            "depth callback returned {} removal flags for depth {depth}",
            change.remove.len()
        )));
    }
    let kept = change.remove.iter().filter(|r| !**r).count();
    if kept != change.new_depth {
        return Err(Error::invalid(format!(
            "depth callback returned new depth {} but keeps {kept} columns",
            change.new_depth
        )));
    }
    for i in (0..depth).rev().filter(|i| change.remove[*i]) {
        ws.qr_remove(i)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DVector;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_vec(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
        (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
    }

    fn insert_df(ws: &mut AaWorkspace, df: &[f64]) {
        ws.qr_insert(df, df, df).unwrap();
    }

    fn reconstruction_error(ws: &AaWorkspace) -> f64 {
        let k = ws.depth();
        let mut worst = 0.0f64;
        for j in 0..k {
            for i in 0..ws.n {
                let qr: f64 = (0..=j).map(|l| ws.q[l][i] * ws.r[(l, j)]).sum();
                worst = worst.max((qr - ws.df[j][i]).abs());
            }
        }
        worst
    }

    #[test]
    fn first_insert_normalizes() {
        let mut ws = AaWorkspace::new(3);
        insert_df(&mut ws, &[3.0, 0.0, 4.0]);
        assert_eq!(ws.r().shape(), (1, 1));
        assert_eq!(ws.r()[(0, 0)], 5.0);
        assert_eq!(ws.q_columns()[0], vec![0.6, 0.0, 0.8]);
    }

    #[test]
    fn insert_then_remove_empties() {
        let mut ws = AaWorkspace::new(2);
        insert_df(&mut ws, &[1.0, 2.0]);
        ws.qr_remove(0).unwrap();
        assert_eq!(ws.depth(), 0);
        assert_eq!(ws.r().shape(), (0, 0));
        assert!(ws.df_history().is_empty());
        assert!(matches!(ws.qr_remove(0), Err(Error::IndexOutOfRange { index: 0, len: 0 })));
    }

    #[test]
    fn removing_middle_column_keeps_factorization() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut ws = AaWorkspace::new(5);
        let cols: Vec<Vec<f64>> = (0..3).map(|_| random_vec(&mut rng, 5)).collect();
        for c in &cols {
            insert_df(&mut ws, c);
        }
        ws.qr_remove(1).unwrap();
        assert_eq!(ws.df_history(), &[cols[0].clone(), cols[2].clone()]);
        assert!(reconstruction_error(&ws) < 1e-12);
        assert_eq!(ws.r()[(1, 0)], 0.0);
    }

    #[test]
    fn dependent_column_is_rejected() {
        let mut ws = AaWorkspace::new(2);
        insert_df(&mut ws, &[1.0, 1.0]);
        assert!(ws.qr_insert(&[2.0, 2.0], &[2.0, 2.0], &[2.0, 2.0]).is_err());
        assert_eq!(ws.depth(), 1);
    }

    #[test]
    fn gain_inputs_match_dense_least_squares() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let n = 6;
        let mut ws = AaWorkspace::new(n);
        assert!(aa_gain_inputs(&ws, &[1.0; 6]).is_empty());
        assert_eq!(gain(&[1.0; 6], &[]), 1.0);
        let cols: Vec<Vec<f64>> = (0..3).map(|_| random_vec(&mut rng, n)).collect();
        for c in &cols {
            insert_df(&mut ws, c);
        }
        let f = random_vec(&mut rng, n);
        let qt_f = aa_gain_inputs(&ws, &f);
        let predicted = dot(&f, &f) - dot(&qt_f, &qt_f);

        let a = DMatrix::from_fn(n, 3, |i, j| cols[j][i]);
        let b = DVector::from_column_slice(&f);
        let x = a.clone().svd(true, true).solve(&b, 1e-14).unwrap();
        let resid = (&a * &x - &b).norm_squared();
        assert!((predicted - resid).abs() < 1e-12);
        let gamma = ws.solve(&qt_f);
        for j in 0..3 {
            assert!((gamma[j] - x[j]).abs() < 1e-10);
        }

        let in_span: Vec<f64> = (0..n).map(|i| 0.5 * cols[0][i] - 2.0 * cols[2][i]).collect();
        let qt = aa_gain_inputs(&ws, &in_span);
        assert!((norm2(&qt) - norm2(&in_span)).abs() < 1e-12);
        assert!(gain(&in_span, &qt) < 1e-6);
    }

    #[test]
    fn plain_iteration_halves_residual() {
        let mut p = FixedPointProblem::new(2, |u: &[f64], g: &mut [f64]| {
            g[0] = 0.5 * u[0];
            g[1] = 0.5 * u[1];
        });
        let mut cfg = AndersonConfig::new(0);
        cfg.stop_tol = 1e-12;
        let s = fixed_point_solve(&mut p, &[1.0, -3.0], &mut cfg).unwrap();
        for w in s.residual_history.windows(2) {
            assert_eq!(w[1], 0.5 * w[0]);
        }
        assert!(s.u.iter().all(|x| x.abs() < 1e-11));
    }

    #[test]
    fn rejects_bad_damping() {
        let mut p = FixedPointProblem::new(1, |u: &[f64], g: &mut [f64]| g[0] = u[0].cos());
        assert!(fixed_point_solve(&mut p, &[0.0], &mut AndersonConfig::new(1).with_damping(0.0)).is_err());
        let mut cfg = AndersonConfig::new(1).with_damping_fn(|_| 1.5);
        assert!(matches!(fixed_point_solve(&mut p, &[0.0], &mut cfg), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn inconsistent_depth_change_is_an_error() {
        let mut p = FixedPointProblem::new(2, |u: &[f64], g: &mut [f64]| {
            g[0] = 0.3 * u[1] + 1.0;
            g[1] = 0.2 * u[0];
        });
        let mut cfg = AndersonConfig::new(2).with_depth_fn(|a| DepthChange { new_depth: 0, remove: vec![false; a.depth] });
        assert!(fixed_point_solve(&mut p, &[0.0, 0.0], &mut cfg).is_err());
    }

    #[test]
    fn oversized_depth_logs_warning() {
        let mut logger = Logger::silent();
        logger.set_max_level(Some(Level::Warning));
        logger.capture(Level::Warning);
        let logger = Arc::new(logger);
        let mut cfg = AndersonConfig::new(3);
        cfg.logger = Some(Arc::clone(&logger));
        let mut p = FixedPointProblem::new(1, |u: &[f64], g: &mut [f64]| g[0] = u[0].cos());
        fixed_point_solve(&mut p, &[1.0], &mut cfg).unwrap();
        assert!(logger.take_buffer(Level::Warning).contains("depth-exceeds-dimension"));
    }
}
