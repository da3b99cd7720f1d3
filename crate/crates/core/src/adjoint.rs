//! Discrete adjoint sensitivities for fixed-step explicit Runge–Kutta.
//!
//! The backward sweep differentiates the discrete forward map exactly, so
//! the gradients it returns are those of the computed solution, not of the
//! underlying ODE. Only step-start states are checkpointed; stage values are
//! regenerated during the sweep.

use std::collections::BTreeMap;

use crate::erk::{ButcherTable, ErkWorkspace};
use crate::error::{check_dim, check_finite, Error, Result};
use crate::system::OdeSystem;

/// `y' = f(t, y, p)` with transposed Jacobian–vector products.
pub trait ParameterizedSystem {
    fn dimension(&self) -> usize;
    fn num_params(&self) -> usize;
    fn rhs(&self, t: f64, y: &[f64], p: &[f64], dydt: &mut [f64]) -> Result<()>;
    /// `out = (∂f/∂y)ᵀ v`.
    fn vjp_y(&self, t: f64, y: &[f64], p: &[f64], v: &[f64], out: &mut [f64]) -> Result<()>;
    /// `out = (∂f/∂p)ᵀ v`.
    fn vjp_p(&self, t: f64, y: &[f64], p: &[f64], v: &[f64], out: &mut [f64]) -> Result<()>;
}

/// A parameterized system with its parameters fixed, as a plain [`OdeSystem`].
pub struct WithParams<'a, S: ?Sized> {
    pub sys: &'a S,
    pub p: &'a [f64],
}

impl<S: ParameterizedSystem + ?Sized> OdeSystem for WithParams<'_, S> {
    fn dimension(&self) -> usize {
        self.sys.dimension()
    }
    fn rhs(&self, t: f64, y: &[f64], dydt: &mut [f64]) -> Result<()> {
        self.sys.rhs(t, y, self.p, dydt)
    }
}

/// A terminal cost `g(t_f, y(t_f), p)` and its gradients.
pub trait CostFunction {
    fn value(&self, t: f64, y: &[f64], p: &[f64]) -> f64;
    fn dg_dy(&self, t: f64, y: &[f64], p: &[f64]) -> Vec<f64>;
    fn dg_dp(&self, t: f64, y: &[f64], p: &[f64]) -> Vec<f64>;
}

/// `g = ½ ‖target − y‖²`, independent of `p`.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceCost {
    pub target: Vec<f64>,
    pub num_params: usize,
}

impl CostFunction for DistanceCost {
    fn value(&self, _t: f64, y: &[f64], _p: &[f64]) -> f64 {
        0.5 * y.iter().zip(&self.target).map(|(a, b)| (a - b) * (a - b)).sum::<f64>()
    }
    fn dg_dy(&self, _t: f64, y: &[f64], _p: &[f64]) -> Vec<f64> {
        y.iter().zip(&self.target).map(|(a, b)| a - b).collect()
    }
    fn dg_dp(&self, _t: f64, _y: &[f64], _p: &[f64]) -> Vec<f64> {
        vec![0.0; self.num_params]
    }
}

/// Step-start snapshots kept every `interval` steps, plus the initial and
/// final states.
#[derive(Debug, Clone, PartialEq)]
pub struct CheckpointStore {
    interval: usize,
    snapshots: BTreeMap<usize, (f64, Vec<f64>)>,
}

impl CheckpointStore {
    pub fn new(interval: usize) -> Result<Self> {
        if interval == 0 {
            return Err(Error::invalid("checkpoint interval must be positive"));
        }
        Ok(Self {
            interval,
            snapshots: BTreeMap::new(),
        })
    }

    pub fn interval(&self) -> usize {
        self.interval
    }

    pub fn len(&self) -> usize {
        self.snapshots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.snapshots.is_empty()
    }

    pub fn indices(&self) -> Vec<usize> {
        self.snapshots.keys().copied().collect()
    }

    pub fn get(&self, step: usize) -> Option<(f64, &[f64])> {
        self.snapshots.get(&step).map(|(t, y)| (*t, y.as_slice()))
    }

    /// The latest snapshot at or before `step`.
    pub fn at_or_before(&self, step: usize) -> Option<(usize, f64, &[f64])> {
        self.snapshots
            .range(..=step)
            .next_back()
            .map(|(&i, (t, y))| (i, *t, y.as_slice()))
    }

    fn wants(&self, step: usize, last: usize) -> bool {
        step.is_multiple_of(self.interval) || step == last
    }

    fn clear(&mut self) {
        self.snapshots.clear();
    }

    fn insert(&mut self, step: usize, t: f64, y: &[f64]) {
        self.snapshots.insert(step, (t, y.to_vec()));
    }
}

/// The fixed-step time grid: `n` steps of `h`, the last one truncated to
/// land on `tf`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepGrid {
    pub t0: f64,
    pub tf: f64,
    pub h: f64,
    pub steps: usize,
}

impl StepGrid {
    pub fn new(t0: f64, tf: f64, h: f64) -> Result<Self> {
        if !(h > 0.0 && h.is_finite()) || !(tf > t0) {
            return Err(Error::invalid("need h > 0 and tf > t0"));
        }
        let ratio = (tf - t0) / h;
        let steps = (ratio - 1e-9 * ratio.max(1.0)).ceil().max(1.0) as usize;
        Ok(Self { t0, tf, h, steps })
    }

    pub fn time(&self, n: usize) -> f64 {
        if n >= self.steps {
            self.tf
        } else {
            self.t0 + n as f64 * self.h
        }
    }

    pub fn step_size(&self, n: usize) -> f64 {
        self.time(n + 1) - self.time(n)
    }
}

fn check_system(sys: &dyn ParameterizedSystem, p: &[f64], y0: &[f64]) -> Result<()> {
    check_dim(sys.dimension(), y0.len())?;
    check_dim(sys.num_params(), p.len())?;
    check_finite(y0, "initial state")
}

/// Integrates forward, filling `store` (which is cleared first). Returns the
/// final state and the step count.
#[allow(clippy::too_many_arguments)]
pub fn forward_with_checkpoints(
    table: &ButcherTable,
    sys: &dyn ParameterizedSystem,
    p: &[f64],
    t0: f64,
    tf: f64,
    h: f64,
    y0: &[f64],
    store: &mut CheckpointStore,
) -> Result<(Vec<f64>, usize)> {
    check_system(sys, p, y0)?;
    let grid = StepGrid::new(t0, tf, h)?;
    let rhs = WithParams { sys, p };
    let mut ws = ErkWorkspace::default();
    let mut y = y0.to_vec();
    let mut next = vec![0.0; y.len()];
    store.clear();
    store.insert(0, t0, &y);
    for n in 0..grid.steps {
        ws.step(table, &rhs, grid.time(n), &y, grid.step_size(n), &mut next, None)?;
        std::mem::swap(&mut y, &mut next);
        if store.wants(n + 1, grid.steps) {
            store.insert(n + 1, grid.time(n + 1), &y);
        }
    }
    check_finite(&y, "forward solution")?;
    Ok((y, grid.steps))
}

/// Sensitivities of the cost with respect to the state (`lambda`) and the
/// parameters (`mu`) at some step.
#[derive(Debug, Clone, PartialEq)]
pub struct AdjointState {
    pub lambda: Vec<f64>,
    pub mu: Vec<f64>,
}

/// Reusable storage for [`adjoint_step`].
#[derive(Debug, Clone, Default)]
pub struct AdjointWorkspace {
    erk: ErkWorkspace,
    big_lambda: Vec<Vec<f64>>,
}

impl AdjointWorkspace {
    /// Maps the adjoint at the end of a step back to its start:
    /// `Λ_i = h J_iᵀ (b_i λ + Σ_{j>i} a_ji Λ_j)` for `i = s…1`,
    /// `ν_i = h J_{p,i}ᵀ (b_i λ + Σ_{j≥i} a_ji Λ_j)`, then
    /// `λ ← λ + Σ Λ_i` and `μ ← μ + Σ ν_i`.
    #[allow(clippy::too_many_arguments)]
    pub fn step(
        &mut self,
        table: &ButcherTable,
        sys: &dyn ParameterizedSystem,
        p: &[f64],
        t: f64,
        y_start: &[f64],
        h: f64,
        state: &mut AdjointState,
    ) -> Result<()> {
        let n = sys.dimension();
        check_dim(n, y_start.len())?;
        check_dim(n, state.lambda.len())?;
        check_dim(sys.num_params(), state.mu.len())?;
        let s = table.stages();
        let mut scratch = vec![0.0; n];
        self.erk.step(table, &WithParams { sys, p }, t, y_start, h, &mut scratch, None)?;
        if self.big_lambda.len() != s || self.big_lambda.first().is_some_and(|v| v.len() != n) {
            self.big_lambda = vec![vec![0.0; n]; s];
        }
        let a = table.a();
        let mut w = vec![0.0; n];
        let mut nu = vec![0.0; p.len()];
        for i in (0..s).rev() {
            for (wk, lk) in w.iter_mut().zip(&state.lambda) {
                *wk = table.b()[i] * lk;
            }
            for j in (i + 1)..s {
                // a[i][i] is zero for explicit tables, so j = i adds nothing
                if a[j][i] != 0.0 {
                    crate::vector::axpy(a[j][i], &self.big_lambda[j], &mut w);
                }
            }
            let z = &self.erk.stages()[i];
            let ti = t + table.c()[i] * h;
            let li = &mut self.big_lambda[i];
            if w.iter().all(|&x| x == 0.0) {
                li.fill(0.0);
                continue;
            }
            sys.vjp_y(ti, z, p, &w, li)?;
            li.iter_mut().for_each(|x| *x *= h);
            sys.vjp_p(ti, z, p, &w, &mut nu)?;
            crate::vector::axpy(h, &nu, &mut state.mu);
        }
        for li in &self.big_lambda {
            crate::vector::axpy(1.0, li, &mut state.lambda);
        }
        Ok(())
    }
}

/// One backward step with freshly allocated storage.
#[allow(clippy::too_many_arguments)]
pub fn adjoint_step(
    table: &ButcherTable,
    sys: &dyn ParameterizedSystem,
    p: &[f64],
    t: f64,
    y_start: &[f64],
    state: &AdjointState,
    h: f64,
) -> Result<AdjointState> {
    let mut out = state.clone();
    AdjointWorkspace::default().step(table, sys, p, t, y_start, h, &mut out)?;
    Ok(out)
}

/// Cost value, gradients, and bookkeeping from [`adjoint_solve`].
#[derive(Debug, Clone, PartialEq)]
pub struct AdjointResult {
    pub g: f64,
    pub y_final: Vec<f64>,
    pub dg_dy0: Vec<f64>,
    pub dg_dp: Vec<f64>,
    pub steps: usize,
    /// Forward steps redone during the backward sweep.
    pub recomputed_steps: usize,
    pub checkpoints: usize,
}

/// Forward solve with checkpoints every `interval` steps, then a backward
/// sweep seeded with the cost gradients. Missing step-start states are
/// recomputed one checkpoint block at a time.
#[allow(clippy::too_many_arguments)]
pub fn adjoint_solve(
    table: &ButcherTable,
    sys: &dyn ParameterizedSystem,
    p: &[f64],
    cost: &dyn CostFunction,
    t0: f64,
    tf: f64,
    h: f64,
    y0: &[f64],
    interval: usize,
) -> Result<AdjointResult> {
    let mut store = CheckpointStore::new(interval)?;
    let (y_final, steps) = forward_with_checkpoints(table, sys, p, t0, tf, h, y0, &mut store)?;
    let grid = StepGrid::new(t0, tf, h)?;
    let mut state = AdjointState {
        lambda: cost.dg_dy(tf, &y_final, p),
        mu: cost.dg_dp(tf, &y_final, p),
    };
    check_dim(sys.dimension(), state.lambda.len())?;
    check_dim(sys.num_params(), state.mu.len())?;

    let rhs = WithParams { sys, p };
    let mut fwd = ErkWorkspace::default();
    let mut adj = AdjointWorkspace::default();
    let mut block: Vec<Vec<f64>> = Vec::new();
    let mut block_start = usize::MAX;
    let mut recomputed = 0;
    let mut next = vec![0.0; y0.len()];
    for n in (0..steps).rev() {
        if n < block_start || n >= block_start + block.len() {
            let (c, _, yc) = store
                .at_or_before(n)
                .ok_or_else(|| Error::invalid("checkpoint store lost the initial state"))?;
            block.clear();
            block.push(yc.to_vec());
            for m in c..n {
                let y = block.last().expect("block starts with a checkpoint");
                fwd.step(table, &rhs, grid.time(m), y, grid.step_size(m), &mut next, None)?;
                block.push(next.clone());
                recomputed += 1;
            }
            block_start = c;
        }
        adj.step(table, sys, p, grid.time(n), &block[n - block_start], grid.step_size(n), &mut state)?;
    }
    check_finite(&state.lambda, "adjoint state")?;
    Ok(AdjointResult {
        g: cost.value(tf, &y_final, p),
        y_final,
        dg_dy0: state.lambda,
        dg_dp: state.mu,
        steps,
        recomputed_steps: recomputed,
        checkpoints: store.len(),
    })
}
