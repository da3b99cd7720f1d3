//! Explicit Runge–Kutta methods with embedded error estimates.
//!
//! A step computes `z_i = y + h Σ_{j<i} a_ij f(t + c_j h, z_j)` and
//! `y_next = y + h Σ b_i f(t + c_i h, z_i)`. With an embedding `b̂` the local
//! error estimate is `h Σ (b_i − b̂_i) f_i`.

use std::sync::Arc;

use crate::adaptive::{evolve_adaptive, AdaptiveMethod, AdaptiveOptions};
use crate::control::ToleranceSpec;
use crate::diagnostics::{Level, LogRecord, Logger};
use crate::error::{check_dim, Error, Result};
use crate::stepper::{AdaptiveStepper, InnerReport, Stepper};
use crate::system::OdeSystem;

#[derive(Debug, Clone, PartialEq)]
pub struct ButcherTable {
    name: String,
    a: Vec<Vec<f64>>,
    b: Vec<f64>,
    c: Vec<f64>,
    b_embed: Option<Vec<f64>>,
    order: usize,
    embed_order: usize,
}

impl ButcherTable {
    /// Builds a table from the strictly lower triangular rows of `A`
    /// (row `i` may hold `i` or `s` entries). `c` is taken as the row sums.
    pub fn new(
        name: impl Into<String>,
        a: Vec<Vec<f64>>,
        b: Vec<f64>,
        b_embed: Option<Vec<f64>>,
        order: usize,
        embed_order: usize,
    ) -> Result<Self> {
        let s = b.len();
        if s == 0 || a.len() != s {
            return Err(Error::invalid("A must have one row per stage"));
        }
        let mut dense = vec![vec![0.0; s]; s];
        for (i, row) in a.iter().enumerate() {
            if row.len() > s {
                return Err(Error::invalid("row of A longer than the stage count"));
            }
            for (j, &v) in row.iter().enumerate() {
                if j >= i && v != 0.0 {
                    return Err(Error::invalid("A must be strictly lower triangular"));
                }
                dense[i][j] = v;
            }
        }
        if let Some(e) = &b_embed {
            check_dim(s, e.len())?;
        }
        if order == 0 {
            return Err(Error::invalid("order must be positive"));
        }
        let c = dense.iter().map(|r| r.iter().sum()).collect();
        Ok(Self {
            name: name.into(),
            a: dense,
            b,
            c,
            b_embed,
            order,
            embed_order,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }
    pub fn stages(&self) -> usize {
        self.b.len()
    }
    pub fn a(&self) -> &[Vec<f64>] {
        &self.a
    }
    pub fn b(&self) -> &[f64] {
        &self.b
    }
    pub fn c(&self) -> &[f64] {
        &self.c
    }
    pub fn b_embed(&self) -> Option<&[f64]> {
        self.b_embed.as_deref()
    }
    pub fn order(&self) -> usize {
        self.order
    }
    pub fn embed_order(&self) -> usize {
        self.embed_order
    }
    pub fn has_embedding(&self) -> bool {
        self.b_embed.is_some()
    }
}

/// Names accepted by [`builtin_table`].
pub const BUILTIN_NAMES: &[&str] = &[
    "euler",
    "heun-euler",
    "erk2-3stage",
    "bs3",
    "rk4",
    "zonneveld4",
    "dp5",
    "cash-karp5",
    "butcher6",
];

/// Looks up a built-in table by name.
pub fn builtin_table(name: &str) -> Result<ButcherTable> {
    
    match name {
        "euler" => ButcherTable::new(name, vec![vec![]], vec![1.0], None, 1, 0),
        "heun-euler" => ButcherTable::new(
            name,
            vec![vec![], vec![1.0]],
            vec![0.5, 0.5],
            Some(vec![1.0, 0.0]),
            2,
            1,
        ),
        // Ralston's second-order method with its first-same-as-last stage
        // kept as a third stage; the equal-weight embedding is first order.
        "erk2-3stage" => ButcherTable::new(
            name,
            vec![vec![], vec![2.0 / 3.0], vec![0.25, 0.75]],
            vec![0.25, 0.75, 0.0],
            Some(vec![1.0 / 3.0; 3]),
            2,
            1,
        ),
        "bs3" => ButcherTable::new(
            name,
            vec![
                vec![],
                vec![0.5],
                vec![0.0, 0.75],
                vec![2.0 / 9.0, 1.0 / 3.0, 4.0 / 9.0],
            ],
            vec![2.0 / 9.0, 1.0 / 3.0, 4.0 / 9.0, 0.0],
            Some(vec![7.0 / 24.0, 0.25, 1.0 / 3.0, 0.125]),
            3,
            2,
        ),
        "rk4" => ButcherTable::new(
            name,
            vec![vec![], vec![0.5], vec![0.0, 0.5], vec![0.0, 0.0, 1.0]],
            vec![1.0 / 6.0, 1.0 / 3.0, 1.0 / 3.0, 1.0 / 6.0],
            None,
            4,
            0,
        ),
        "dp5" => ButcherTable::new(
            name,
            vec![
                vec![],
                vec![1.0 / 5.0],
                vec![3.0 / 40.0, 9.0 / 40.0],
                vec![44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0],
                vec![19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0],
                vec![
                    9017.0 / 3168.0,
                    -355.0 / 33.0,
                    46732.0 / 5247.0,
                    49.0 / 176.0,
                    -5103.0 / 18656.0,
                ],
                vec![
                    35.0 / 384.0,
                    0.0,
                    500.0 / 1113.0,
                    125.0 / 192.0,
                    -2187.0 / 6784.0,
                    11.0 / 84.0,
                ],
            ],
            vec![
                35.0 / 384.0,
                0.0,
                500.0 / 1113.0,
                125.0 / 192.0,
                -2187.0 / 6784.0,
                11.0 / 84.0,
                0.0,
            ],
            Some(vec![
                5179.0 / 57600.0,
                0.0,
                7571.0 / 16695.0,
                393.0 / 640.0,
                -92097.0 / 339200.0,
                187.0 / 2100.0,
                1.0 / 40.0,
            ]),
            5,
            4,
        ),
        // Classical fourth-order weights with a fifth stage feeding a
        // third-order embedding.
        "zonneveld4" => ButcherTable::new(
            name,
            vec![
                vec![],
                vec![0.5],
                vec![0.0, 0.5],
                vec![0.0, 0.0, 1.0],
                vec![5.0 / 32.0, 7.0 / 32.0, 13.0 / 32.0, -1.0 / 32.0],
            ],
            vec![1.0 / 6.0, 1.0 / 3.0, 1.0 / 3.0, 1.0 / 6.0, 0.0],
            Some(vec![-0.5, 7.0 / 3.0, 7.0 / 3.0, 13.0 / 6.0, -16.0 / 3.0]),
            4,
            3,
        ),
        "cash-karp5" => ButcherTable::new(
            name,
            vec![
                vec![],
                vec![1.0 / 5.0],
                vec![3.0 / 40.0, 9.0 / 40.0],
                vec![3.0 / 10.0, -9.0 / 10.0, 6.0 / 5.0],
                vec![-11.0 / 54.0, 5.0 / 2.0, -70.0 / 27.0, 35.0 / 27.0],
                vec![
                    1631.0 / 55296.0,
                    175.0 / 512.0,
                    575.0 / 13824.0,
                    44275.0 / 110592.0,
                    253.0 / 4096.0,
                ],
            ],
            vec![37.0 / 378.0, 0.0, 250.0 / 621.0, 125.0 / 594.0, 0.0, 512.0 / 1771.0],
            Some(vec![
                2825.0 / 27648.0,
                0.0,
                18575.0 / 48384.0,
                13525.0 / 55296.0,
                277.0 / 14336.0,
                0.25,
            ]),
            5,
            4,
        ),
        "butcher6" => ButcherTable::new(
            name,
            vec![
                vec![],
                vec![1.0 / 3.0],
                vec![0.0, 2.0 / 3.0],
                vec![1.0 / 12.0, 1.0 / 3.0, -1.0 / 12.0],
                vec![-1.0 / 16.0, 9.0 / 8.0, -3.0 / 16.0, -3.0 / 8.0],
                vec![0.0, 9.0 / 8.0, -3.0 / 8.0, -3.0 / 4.0, 1.0 / 2.0],
                vec![
                    9.0 / 44.0,
                    -9.0 / 11.0,
                    63.0 / 44.0,
                    18.0 / 11.0,
                    0.0,
                    -16.0 / 11.0,
                ],
            ],
            vec![
                11.0 / 120.0,
                0.0,
                27.0 / 40.0,
                27.0 / 40.0,
                -4.0 / 15.0,
                -4.0 / 15.0,
                11.0 / 120.0,
            ],
            None,
            6,
            0,
        ),
        _ => Err(Error::UnknownMethod(name.to_string())),
    }
}

/// Every built-in table.
pub fn builtin_tables() -> Vec<ButcherTable> {
    BUILTIN_NAMES
        .iter()
        .map(|n| builtin_table(n).expect("built-in table"))
        .collect()
}

/// The explicit table of a given order used where a method of matching
/// order is needed (orders 1–6).
pub fn table_of_order(order: usize) -> Result<ButcherTable> {
    match order {
        1 => builtin_table("euler"),
        2 => builtin_table("erk2-3stage"),
        3 => builtin_table("bs3"),
        4 => builtin_table("rk4"),
        5 => builtin_table("dp5"),
        6 => builtin_table("butcher6"),
        _ => Err(Error::invalid(format!("no built-in explicit table of order {order}"))),
    }
}

/// Dense stage storage reused across steps.
#[derive(Debug, Clone, Default)]
pub struct ErkWorkspace {
    z: Vec<Vec<f64>>,
    k: Vec<Vec<f64>>,
}

impl ErkWorkspace {
    pub fn new(stages: usize, n: usize) -> Self {
        Self {
            z: vec![vec![0.0; n]; stages],
            k: vec![vec![0.0; n]; stages],
        }
    }

    fn ensure(&mut self, stages: usize, n: usize) {
        if self.z.len() != stages || self.z.first().is_some_and(|v| v.len() != n) {
            *self = Self::new(stages, n);
        }
    }

    /// Stage values `z_i` of the last step.
    pub fn stages(&self) -> &[Vec<f64>] {
        &self.z
    }

    /// Stage derivatives `f(t + c_i h, z_i)` of the last step.
    pub fn stage_rhs(&self) -> &[Vec<f64>] {
        &self.k
    }

    /// One step; `err` receives `h Σ (b_i − b̂_i) f_i` when the table has an
    /// embedding (and zeros otherwise).
    #[allow(clippy::too_many_arguments)]
    pub fn step(
        &mut self,
        table: &ButcherTable,
        sys: &dyn OdeSystem,
        t: f64,
        y: &[f64],
        h: f64,
        y_next: &mut [f64],
        err: Option<&mut [f64]>,
    ) -> Result<()> {
        let n = y.len();
        check_dim(sys.dimension(), n)?;
        check_dim(n, y_next.len())?;
        let s = table.stages();
        self.ensure(s, n);
        for i in 0..s {
            let (done, rest) = self.k.split_at_mut(i);
            let zi = &mut self.z[i];
            zi.copy_from_slice(y);
            for (j, kj) in done.iter().enumerate() {
                let aij = table.a[i][j];
                if aij != 0.0 {
                    crate::vector::axpy(h * aij, kj, zi);
                }
            }
            sys.rhs(t + table.c[i] * h, zi, &mut rest[0])?;
        }
        y_next.copy_from_slice(y);
        for (bi, ki) in table.b.iter().zip(&self.k) {
            if *bi != 0.0 {
                crate::vector::axpy(h * bi, ki, y_next);
            }
        }
        if let Some(err) = err {
            check_dim(n, err.len())?;
            err.fill(0.0);
            if let Some(bh) = &table.b_embed {
                for ((bi, bhi), ki) in table.b.iter().zip(bh).zip(&self.k) {
                    let d = bi - bhi;
                    if d != 0.0 {
                        crate::vector::axpy(h * d, ki, err);
                    }
                }
            }
        }
        Ok(())
    }
}

/// Result of a single [`erk_step`].
#[derive(Debug, Clone)]
pub struct ErkStepResult {
    pub y_next: Vec<f64>,
    pub stages: Vec<Vec<f64>>,
    pub stage_rhs: Vec<Vec<f64>>,
    pub est: Option<Vec<f64>>,
}

/// One explicit Runge–Kutta step, returning every stage.
pub fn erk_step(
    table: &ButcherTable,
    sys: &dyn OdeSystem,
    t: f64,
    y: &[f64],
    h: f64,
) -> Result<ErkStepResult> {
    let mut ws = ErkWorkspace::new(table.stages(), y.len());
    let mut y_next = vec![0.0; y.len()];
    let mut est = vec![0.0; y.len()];
    ws.step(table, sys, t, y, h, &mut y_next, Some(&mut est))?;
    Ok(ErkStepResult {
        y_next,
        stages: ws.z,
        stage_rhs: ws.k,
        est: table.has_embedding().then_some(est),
    })
}

/// Integrates with `steps` equal steps from `t0` to `tf`.
pub fn erk_fixed(
    table: &ButcherTable,
    sys: &dyn OdeSystem,
    t0: f64,
    tf: f64,
    y0: &[f64],
    steps: usize,
) -> Result<Vec<f64>> {
    if steps == 0 {
        return Err(Error::invalid("need at least one step"));
    }
    let h = (tf - t0) / steps as f64;
    let mut ws = ErkWorkspace::new(table.stages(), y0.len());
    let mut y = y0.to_vec();
    let mut next = y.clone();
    for i in 0..steps {
        ws.step(table, sys, t0 + i as f64 * h, &y, h, &mut next, None)?;
        std::mem::swap(&mut y, &mut next);
    }
    Ok(y)
}

/// Adapter running an embedded table inside [`evolve_adaptive`].
pub struct ErkMethod<'t> {
    table: &'t ButcherTable,
    ws: ErkWorkspace,
    evals: usize,
}

impl<'t> ErkMethod<'t> {
    pub fn new(table: &'t ButcherTable) -> Result<Self> {
        if !table.has_embedding() {
            return Err(Error::invalid(format!(
                "table {} has no embedding and cannot adapt",
                table.name()
            )));
        }
        Ok(Self {
            table,
            ws: ErkWorkspace::default(),
            evals: 0,
        })
    }
}

impl AdaptiveMethod for ErkMethod<'_> {
    fn controller_order(&self) -> usize {
        self.table.embed_order.max(1)
    }

    fn attempt(
        &mut self,
        sys: &dyn OdeSystem,
        t: f64,
        y: &[f64],
        h: f64,
        y_next: &mut [f64],
        err: &mut [f64],
    ) -> Result<()> {
        self.evals += self.table.stages();
        self.ws.step(self.table, sys, t, y, h, y_next, Some(err))
    }

    fn rhs_evals(&self) -> usize {
        self.evals
    }

    fn scope(&self) -> &'static str {
        "ErkEvolve"
    }
}

/// Adaptive integration with an embedded table.
pub fn erk_evolve(
    table: &ButcherTable,
    sys: &dyn OdeSystem,
    opts: &AdaptiveOptions,
    t0: f64,
    tf: f64,
    y0: &[f64],
) -> Result<crate::adaptive::AdaptiveOutcome> {
    let mut m = ErkMethod::new(table)?;
    evolve_adaptive(&mut m, sys, opts, t0, tf, y0)
}

/// Adds a constant vector to a system's right-hand side.
pub(crate) struct Forced<'a> {
    pub sys: &'a dyn OdeSystem,
    pub forcing: Option<&'a [f64]>,
}

impl OdeSystem for Forced<'_> {
    fn dimension(&self) -> usize {
        self.sys.dimension()
    }

    fn rhs(&self, t: f64, y: &[f64], dydt: &mut [f64]) -> Result<()> {
        self.sys.rhs(t, y, dydt)?;
        if let Some(f) = self.forcing {
            crate::vector::axpy(1.0, f, dydt);
        }
        Ok(())
    }
}

/// How an [`ErkStepper`] covers each requested interval.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ErkMode {
    /// This many equal steps per call.
    Substeps(usize),
    /// Equal steps no longer than the given size.
    MaxStep(f64),
    /// Error-controlled steps under the stepper's tolerance.
    Adaptive,
}

/// Runge–Kutta integration of one system packaged as a [`Stepper`], so it
/// can serve as a splitting partition, a forcing partition, or a multirate
/// inner integrator.
pub struct ErkStepper<S> {
    table: ButcherTable,
    sys: S,
    mode: ErkMode,
    opts: AdaptiveOptions,
    forcing: Option<Vec<f64>>,
    ws: ErkWorkspace,
    hint: Option<f64>,
    report: InnerReport,
    logger: Option<Arc<Logger>>,
    steps_total: usize,
}

impl<S: OdeSystem> ErkStepper<S> {
    /// Fixed mode taking `substeps` equal steps per call.
    pub fn fixed(table: ButcherTable, sys: S, substeps: usize) -> Result<Self> {
        if substeps == 0 {
            return Err(Error::invalid("substeps must be positive"));
        }
        Ok(Self::build(table, sys, ErkMode::Substeps(substeps), ToleranceSpec::default()))
    }

    /// Fixed mode with steps no larger than `h_max`.
    pub fn max_step(table: ButcherTable, sys: S, h_max: f64) -> Result<Self> {
        if !(h_max > 0.0) {
            return Err(Error::invalid("maximum step must be positive"));
        }
        Ok(Self::build(table, sys, ErkMode::MaxStep(h_max), ToleranceSpec::default()))
    }

    /// Adaptive mode; the table needs an embedding.
    pub fn adaptive(table: ButcherTable, sys: S, tol: ToleranceSpec) -> Result<Self> {
        if !table.has_embedding() {
            return Err(Error::invalid(format!(
                "table {} has no embedding and cannot adapt",
                table.name()
            )));
        }
        Ok(Self::build(table, sys, ErkMode::Adaptive, tol))
    }

    fn build(table: ButcherTable, sys: S, mode: ErkMode, tol: ToleranceSpec) -> Self {
        Self {
            table,
            sys,
            mode,
            opts: AdaptiveOptions::new(tol),
            forcing: None,
            ws: ErkWorkspace::default(),
            hint: None,
            report: InnerReport::default(),
            logger: None,
            steps_total: 0,
        }
    }

    pub fn with_logger(mut self, logger: Arc<Logger>) -> Self {
        self.opts.logger = Some(Arc::clone(&logger));
        self.logger = Some(logger);
        self
    }

    /// Replaces the adaptive options (tolerance, controller, limits).
    pub fn with_options(mut self, opts: AdaptiveOptions) -> Self {
        self.opts = opts;
        self
    }

    pub fn system(&self) -> &S {
        &self.sys
    }

    pub fn table(&self) -> &ButcherTable {
        &self.table
    }

    pub fn mode(&self) -> ErkMode {
        self.mode
    }

    /// Accepted steps over the stepper's lifetime.
    pub fn total_steps(&self) -> usize {
        self.steps_total
    }

    fn evolve_fixed(&mut self, t0: f64, t1: f64, y: &mut [f64]) -> Result<()> {
        let span = t1 - t0;
        let steps = match self.mode {
            ErkMode::Substeps(n) => n,
            ErkMode::MaxStep(hm) => ((span.abs() / hm) * (1.0 - 1e-12)).ceil().max(1.0) as usize,
            ErkMode::Adaptive => unreachable!(),
        };
        let h = span / steps as f64;
        let sys = Forced {
            sys: &self.sys,
            forcing: self.forcing.as_deref(),
        };
        let log = self.logger.as_deref().filter(|l| l.enabled(Level::Info));
        let mut next = vec![0.0; y.len()];
        for i in 0..steps {
            let t = t0 + i as f64 * h;
            if let Some(l) = log {
                l.log(
                    &LogRecord::new(Level::Info, "ErkEvolve", "begin-step-attempt")
                        .with("step", self.steps_total + 1)
                        .with("tn", t)
                        .with("h", h),
                );
            }
            self.ws.step(&self.table, &sys, t, y, h, &mut next, None)?;
            y.copy_from_slice(&next);
            self.steps_total += 1;
            if let Some(l) = log {
                l.log(
                    &LogRecord::new(Level::Info, "ErkEvolve", "end-step-attempt")
                        .with("step", self.steps_total)
                        .with("tn", t)
                        .with("h", h)
                        .with("status", "success"),
                );
            }
        }
        self.report.steps += steps;
        self.report.total_step += span.abs();
        self.report.last_step = h.abs();
        Ok(())
    }

    fn evolve_adaptive_mode(&mut self, t0: f64, t1: f64, y: &mut [f64]) -> Result<()> {
        let sys = Forced {
            sys: &self.sys,
            forcing: self.forcing.as_deref(),
        };
        let mut opts = self.opts.clone();
        if let Some(h) = self.hint {
            opts.h0 = Some(h.min((t1 - t0).abs()));
        }
        let mut m = ErkMethod::new(&self.table)?;
        let out = evolve_adaptive(&mut m, &sys, &opts, t0, t1, y)?;
        y.copy_from_slice(&out.y);
        self.hint = Some(out.stats.h_next);
        self.steps_total += out.stats.steps;
        let r = &mut self.report;
        r.steps += out.stats.steps;
        r.rejections += out.stats.rejections;
        r.total_step += (t1 - t0).abs();
        r.last_estimate = out.stats.last_estimate;
        r.last_step = out.stats.h_last;
        if r.accumulated_error.len() != y.len() {
            r.accumulated_error = vec![0.0; y.len()];
        }
        for (a, e) in r.accumulated_error.iter_mut().zip(&out.accumulated_error) {
            *a += e;
        }
        Ok(())
    }
}

impl<S: OdeSystem> Stepper for ErkStepper<S> {
    fn evolve(&mut self, t_start: f64, t_end: f64, y: &mut [f64]) -> Result<()> {
        check_dim(self.sys.dimension(), y.len())?;
        if t_start == t_end {
            return Ok(());
        }
        match self.mode {
            ErkMode::Adaptive => self.evolve_adaptive_mode(t_start, t_end, y),
            _ => self.evolve_fixed(t_start, t_end, y),
        }
    }

    fn reset(&mut self, _t: f64, _y: &[f64]) {
        self.hint = None;
        self.report = InnerReport::default();
    }

    fn set_forcing(&mut self, forcing: &[f64]) -> Result<()> {
        check_dim(self.sys.dimension(), forcing.len())?;
        self.forcing = Some(forcing.to_vec());
        Ok(())
    }

    fn clear_forcing(&mut self) {
        self.forcing = None;
    }

    fn supports_forcing(&self) -> bool {
        true
    }
}

impl<S: OdeSystem> AdaptiveStepper for ErkStepper<S> {
    fn set_tolerance(&mut self, tol: ToleranceSpec) {
        self.opts.tol = tol;
    }

    fn tolerance(&self) -> &ToleranceSpec {
        &self.opts.tol
    }

    fn set_step_hint(&mut self, h: f64) {
        if h > 0.0 {
            self.hint = Some(h);
        }
    }

    fn order(&self) -> usize {
        self.table.order()
    }

    fn take_report(&mut self) -> InnerReport {
        std::mem::take(&mut self.report)
    }
}
