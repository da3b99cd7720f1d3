//! Runge–Kutta–Chebyshev (RKC) and Runge–Kutta–Legendre (RKL) steps.
//!
//! Both use the three-term recurrence
//!
//! ```text
//! z_0 = y_{n-1}
//! z_1 = z_0 + μ̃_1 h f(t_{n-1}, z_0)
//! z_j = (1 − μ_j − ν_j) z_0 + μ_j z_{j-1} + ν_j z_{j-2}
//!       + μ̃_j h f(t_{n-1} + c_{j-1} h, z_{j-1}) + γ̃_j h f(t_{n-1}, z_0)
//! y_n = z_s
//! ```
//!
//! so only `z_{j-1}`, `z_{j-2}`, `z_0`, and `f(t_{n-1}, z_0)` are live at a
//! time. The local error estimate is
//! `(1/15) [12 (y_{n-1} − y_n) + 6 h (f(t_{n-1}, y_{n-1}) + f(t_n, y_n))]`.

use crate::adaptive::{evolve_adaptive, AdaptiveMethod, AdaptiveOptions, StepStats};
use crate::error::{check_dim, Error, Result};
use crate::system::OdeSystem;

use super::Registers;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StsKind {
    /// Second-order Chebyshev method with damping `ε = 2/13`.
    Rkc,
    /// Second-order Legendre method.
    Rkl,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StsConfig {
    pub kind: StsKind,
    pub max_stages: usize,
    /// Multiplies `h ρ` before comparing with the stability extent.
    pub stage_safety: f64,
    /// Accepted steps between spectral-radius updates.
    pub rho_recompute_period: usize,
}

impl StsConfig {
    pub fn new(kind: StsKind) -> Self {
        Self {
            kind,
            max_stages: 200,
            stage_safety: 1.01,
            rho_recompute_period: 25,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.max_stages < 2 {
            return Err(Error::invalid("max_stages must be at least 2"));
        }
        if !(self.stage_safety >= 1.0) {
            return Err(Error::invalid("stage_safety must be at least 1"));
        }
        if self.rho_recompute_period == 0 {
            return Err(Error::invalid("rho_recompute_period must be positive"));
        }
        Ok(())
    }

    /// Nominal real-axis stability extent used for stage selection.
    pub fn nominal_extent(&self, s: usize) -> f64 {
        let s = s as f64;
        match self.kind {
            StsKind::Rkc => 0.81 * s * s,
            StsKind::Rkl => (s * s + s - 2.0) / 2.0,
        }
    }

    /// An extent the method actually attains. For RKL this is the nominal
    /// value; for damped RKC the interval is about `0.653 (s² − 1)`.
    pub fn guaranteed_extent(&self, s: usize) -> f64 {
        match self.kind {
            StsKind::Rkc => RKC_EXTENT_FACTOR * ((s * s) as f64 - 1.0),
            StsKind::Rkl => self.nominal_extent(s),
        }
    }
}

/// Lower bound on `β(s) / (s² − 1)` for damped RKC over all `s ≥ 2`.
pub const RKC_EXTENT_FACTOR: f64 = 0.653;

const RKC_DAMPING: f64 = 2.0 / 13.0;

/// Smallest `s ≥ 2` whose nominal extent covers `stage_safety · h · ρ`.
///
/// ```
/// use chronos::lsrk::{select_stage_count, StsConfig, StsKind};
/// let mut cfg = StsConfig::new(StsKind::Rkc);
/// cfg.stage_safety = 1.0;
/// assert_eq!(select_stage_count(&cfg, 1.0, 100.0).unwrap(), 12);
/// ```
pub fn select_stage_count(cfg: &StsConfig, h: f64, rho: f64) -> Result<usize> {
    smallest_covering(cfg, cfg.stage_safety * h.abs() * rho, |s| cfg.nominal_extent(s))
}

fn smallest_covering(cfg: &StsConfig, target: f64, extent: impl Fn(usize) -> f64) -> Result<usize> {
    if !target.is_finite() {
        return Err(Error::NonFinite {
            context: "spectral radius estimate",
        });
    }
    // Quadratic growth: start near the root and walk.
    let mut s = ((target.max(0.0) / 0.65).sqrt() as usize).clamp(2, cfg.max_stages + 1);
    while s > 2 && extent(s - 1) >= target {
        s -= 1;
    }
    while extent(s) < target {
        s += 1;
        if s > cfg.max_stages {
            return Err(Error::ReduceStep {
                required: s,
                max: cfg.max_stages,
            });
        }
    }
    if s > cfg.max_stages {
        return Err(Error::ReduceStep {
            required: s,
            max: cfg.max_stages,
        });
    }
    Ok(s)
}

/// Stage count actually used by the integrator: the nominal selection,
/// raised if needed so that the attained extent also covers `h ρ`.
pub fn stages_for_step(cfg: &StsConfig, h: f64, rho: f64) -> Result<usize> {
    let nominal = select_stage_count(cfg, h, rho)?;
    let target = cfg.stage_safety * h.abs() * rho;
    let attained = smallest_covering(cfg, target, |s| cfg.guaranteed_extent(s))?;
    Ok(nominal.max(attained))
}

/// Largest step the stage cap allows for a given spectral radius.
pub fn max_stable_step(cfg: &StsConfig, rho: f64) -> f64 {
    if rho <= 0.0 {
        return f64::INFINITY;
    }
    let s = cfg.max_stages;
    cfg.nominal_extent(s).min(cfg.guaranteed_extent(s)) / (cfg.stage_safety * rho)
}

/// Recurrence coefficients for one stage count (index 0 unused where
/// undefined). `c[j]` is the abscissa of `z_j`.
#[derive(Debug, Clone, PartialEq)]
pub struct StsCoefficients {
    pub kind: StsKind,
    pub s: usize,
    pub mu: Vec<f64>,
    pub nu: Vec<f64>,
    pub mu_tilde: Vec<f64>,
    pub gamma_tilde: Vec<f64>,
    pub c: Vec<f64>,
}

impl StsCoefficients {
    pub fn new(kind: StsKind, s: usize) -> Result<Self> {
        if s < 2 {
            return Err(Error::invalid("super-time-stepping needs at least 2 stages"));
        }
        let mut mu = vec![0.0; s + 1];
        let mut nu = vec![0.0; s + 1];
        let mut mt = vec![0.0; s + 1];
        let mut gt = vec![0.0; s + 1];
        match kind {
            StsKind::Rkc => {
                let w0 = 1.0 + RKC_DAMPING / (s * s) as f64;
                // Chebyshev values and first two derivatives at w0.
                let mut t = vec![0.0; s + 1];
                let mut tp = vec![0.0; s + 1];
                let mut tpp = vec![0.0; s + 1];
                t[0] = 1.0;
                t[1] = w0;
                tp[1] = 1.0;
                for j in 2..=s {
                    t[j] = 2.0 * w0 * t[j - 1] - t[j - 2];
                    tp[j] = 2.0 * t[j - 1] + 2.0 * w0 * tp[j - 1] - tp[j - 2];
                    tpp[j] = 4.0 * tp[j - 1] + 2.0 * w0 * tpp[j - 1] - tpp[j - 2];
                }
                let w1 = tp[s] / tpp[s];
                let mut b = vec![0.0; s + 1];
                for j in 2..=s {
                    b[j] = tpp[j] / (tp[j] * tp[j]);
                }
                b[0] = b[2];
                b[1] = b[2];
                let a: Vec<f64> = (0..=s).map(|j| 1.0 - b[j] * t[j]).collect();
                mt[1] = b[1] * w1;
                for j in 2..=s {
                    mu[j] = 2.0 * b[j] * w0 / b[j - 1];
                    nu[j] = -b[j] / b[j - 2];
                    mt[j] = 2.0 * b[j] * w1 / b[j - 1];
                    gt[j] = -a[j - 1] * mt[j];
                }
            }
            StsKind::Rkl => {
                let sf = s as f64;
                let w1 = 4.0 / (sf * sf + sf - 2.0);
                let mut b = vec![1.0 / 3.0; s + 1];
                for (j, bj) in b.iter_mut().enumerate().skip(2) {
                    let jf = j as f64;
                    *bj = (jf * jf + jf - 2.0) / (2.0 * jf * (jf + 1.0));
                }
                mt[1] = b[1] * w1;
                for j in 2..=s {
                    let jf = j as f64;
                    mu[j] = (2.0 * jf - 1.0) / jf * b[j] / b[j - 1];
                    nu[j] = -(jf - 1.0) / jf * b[j] / b[j - 2];
                    mt[j] = mu[j] * w1;
                    gt[j] = -(1.0 - b[j - 1]) * mt[j];
                }
            }
        }
        // Abscissae from the same recurrence applied to y' = 1.
        let mut c = vec![0.0; s + 1];
        c[1] = mt[1];
        for j in 2..=s {
            c[j] = mu[j] * c[j - 1] + nu[j] * c[j - 2] + mt[j] + gt[j];
        }
        Ok(Self {
            kind,
            s,
            mu,
            nu,
            mu_tilde: mt,
            gamma_tilde: gt,
            c,
        })
    }
}

/// Six work vectors regardless of the stage count.
#[derive(Debug, Default, Clone)]
pub struct StsWorkspace {
    regs: Registers,
    coeffs: Option<StsCoefficients>,
    /// `f(t_{n-1}, y_{n-1})` is valid in register 0 for this `(t, h-independent)` state.
    f0_valid: bool,
}

const F0: usize = 0;
const DM1: usize = 1;
const DM2: usize = 2;
const DJ: usize = 3;
const FTMP: usize = 4;
const Z: usize = 5;

impl StsWorkspace {
    pub fn new() -> Self {
        Self::default()
    }

    /// Work vectors allocated so far (constant after the first step).
    pub fn allocations(&self) -> usize {
        self.regs.allocations
    }

    /// Forgets the cached `f(t_{n-1}, y_{n-1})`.
    pub fn invalidate(&mut self) {
        self.f0_valid = false;
    }

    /// One step with `s` stages. Writes `y_n` and the error estimate. On
    /// return the workspace holds `f(t_n, y_n)` for reuse if the caller
    /// accepts the step (see [`StsWorkspace::accept`]).
    #[allow(clippy::too_many_arguments)]
    pub fn step(
        &mut self,
        kind: StsKind,
        sys: &dyn OdeSystem,
        t: f64,
        y: &[f64],
        h: f64,
        s: usize,
        y_next: &mut [f64],
        est: &mut [f64],
    ) -> Result<()> {
        let n = y.len();
        check_dim(sys.dimension(), n)?;
        check_dim(n, y_next.len())?;
        check_dim(n, est.len())?;
        if self.regs.vecs.first().is_some_and(|v| v.len() != n) {
            self.f0_valid = false;
        }
        self.regs.ensure(6, n);
        if self.coeffs.as_ref().is_none_or(|c| c.kind != kind || c.s != s) {
            self.coeffs = Some(StsCoefficients::new(kind, s)?);
        }
        let co = self.coeffs.as_ref().expect("coefficients");
        let v = &mut self.regs.vecs;
        if !self.f0_valid {
            sys.rhs(t, y, &mut v[F0])?;
        }
        self.f0_valid = false;

        // Stages are stored as increments d_j = z_j − z_0, which keeps the
        // (1 − μ_j − ν_j) z_0 term exact.
        for i in 0..n {
            v[DM1][i] = co.mu_tilde[1] * h * v[F0][i];
        }
        v[DM2].fill(0.0);
        for j in 2..=s {
            for i in 0..n {
                v[Z][i] = y[i] + v[DM1][i];
            }
            let [f0, dm1, dm2, dj, ftmp, z] = &mut v[..] else {
                unreachable!()
            };
            sys.rhs(t + co.c[j - 1] * h, z, ftmp)?;
            let (mu, nu, mt, gt) = (co.mu[j], co.nu[j], co.mu_tilde[j], co.gamma_tilde[j]);
            for i in 0..n {
                dj[i] = mu * dm1[i] + nu * dm2[i] + h * (mt * ftmp[i] + gt * f0[i]);
            }
            // d_{j-2} <- d_{j-1} <- d_j without copying.
            v.swap(DM2, DM1);
            v.swap(DM1, DJ);
        }
        for i in 0..n {
            y_next[i] = y[i] + v[DM1][i];
        }
        crate::error::check_finite(y_next, "super-time-stepping stage")?;

        sys.rhs(t + h, y_next, &mut v[FTMP])?;
        for i in 0..n {
            est[i] = (12.0 * (y[i] - y_next[i]) + 6.0 * h * (v[F0][i] + v[FTMP][i])) / 15.0;
        }
        Ok(())
    }

    /// Marks `f(t_n, y_n)` from the last step as the next step's `f(t_{n-1}, y_{n-1})`.
    pub fn accept(&mut self) {
        if self.regs.vecs.len() == 6 {
            self.regs.vecs.swap(F0, FTMP);
            self.f0_valid = true;
        }
    }

    /// Keeps `f(t_{n-1}, y_{n-1})` after a rejected step (the state is unchanged).
    pub fn reject(&mut self) {
        self.f0_valid = self.regs.vecs.len() == 6;
    }
}

/// One step with freshly allocated storage. Returns `(y_n, estimate)`.
pub fn sts_step(
    kind: StsKind,
    sys: &dyn OdeSystem,
    t: f64,
    y: &[f64],
    h: f64,
    s: usize,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let mut ws = StsWorkspace::new();
    let mut y_next = vec![0.0; y.len()];
    let mut est = vec![0.0; y.len()];
    ws.step(kind, sys, t, y, h, s, &mut y_next, &mut est)?;
    Ok((y_next, est))
}

/// Spectral-radius callback `(t, y) -> ρ`.
pub type RhoFn<'a> = dyn FnMut(f64, &[f64]) -> Result<f64> + 'a;

struct StsMethod<'a, 'r> {
    cfg: &'a StsConfig,
    rho_fn: &'a mut RhoFn<'r>,
    ws: StsWorkspace,
    rho: f64,
    need_rho: bool,
    since_rho: usize,
    stages: usize,
    evals: usize,
    rho_evals: usize,
    stage_total: usize,
    max_stages_used: usize,
}

impl AdaptiveMethod for StsMethod<'_, '_> {
    fn controller_order(&self) -> usize {
        2
    }

    fn prepare(&mut self, _sys: &dyn OdeSystem, t: f64, y: &[f64], h: f64) -> Result<f64> {
        if self.need_rho {
            let rho = (self.rho_fn)(t, y)?;
            if !(rho >= 0.0) || !rho.is_finite() {
                return Err(Error::invalid("spectral radius estimate must be finite and non-negative"));
            }
            self.rho = rho;
            self.rho_evals += 1;
            self.need_rho = false;
            self.since_rho = 0;
        }
        let mut h = h;
        self.stages = match stages_for_step(self.cfg, h, self.rho) {
            Ok(s) => s,
            Err(Error::ReduceStep { .. }) => {
                h = max_stable_step(self.cfg, self.rho) * (1.0 - 1e-12);
                self.cfg.max_stages
            }
            Err(e) => return Err(e),
        };
        Ok(h)
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
        let s = self.stages;
        // s − 1 interior evaluations and f(t_n, y_n), plus f(t_{n-1}, y_{n-1}) when not cached.
        self.evals += s + usize::from(!self.ws.f0_valid);
        self.stage_total += s;
        self.max_stages_used = self.max_stages_used.max(s);
        self.ws.step(self.cfg.kind, sys, t, y, h, s, y_next, err)
    }

    fn on_accept(&mut self, _t: f64, _y: &[f64]) {
        self.ws.accept();
        self.since_rho += 1;
        if self.since_rho >= self.cfg.rho_recompute_period {
            self.need_rho = true;
        }
    }

    fn on_reject(&mut self) {
        self.ws.reject();
        self.need_rho = true;
    }

    fn rhs_evals(&self) -> usize {
        self.evals
    }

    fn scope(&self) -> &'static str {
        "LsrkEvolve"
    }
}

#[derive(Debug, Clone)]
pub struct StsOutcome {
    pub y: Vec<f64>,
    pub stats: StepStats,
    pub rho_evals: usize,
    pub stage_total: usize,
    pub max_stages_used: usize,
}

/// Adaptive super-time-stepping integration.
///
/// `rho` is called on the first step, after every rejected step, and every
/// `rho_recompute_period` accepted steps; the stage count is reselected on
/// every step.
pub fn sts_evolve(
    cfg: &StsConfig,
    rho: &mut RhoFn<'_>,
    sys: &dyn OdeSystem,
    opts: &AdaptiveOptions,
    t0: f64,
    tf: f64,
    y0: &[f64],
) -> Result<StsOutcome> {
    cfg.validate()?;
    let mut m = StsMethod {
        cfg,
        rho_fn: rho,
        ws: StsWorkspace::new(),
        rho: 0.0,
        need_rho: true,
        since_rho: 0,
        stages: 2,
        evals: 0,
        rho_evals: 0,
        stage_total: 0,
        max_stages_used: 0,
    };
    let out = evolve_adaptive(&mut m, sys, opts, t0, tf, y0)?;
    Ok(StsOutcome {
        y: out.y,
        stats: out.stats,
        rho_evals: m.rho_evals,
        stage_total: m.stage_total,
        max_stages_used: m.max_stages_used,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::control::ToleranceSpec;
    use crate::system::FnSystem;
    use proptest::prelude::*;

    fn linear(lambda: f64) -> FnSystem<impl Fn(f64, &[f64], &mut [f64])> {
        FnSystem::new(1, move |_t: f64, y: &[f64], d: &mut [f64]| d[0] = lambda * y[0])
    }

    fn unit_safety(kind: StsKind) -> StsConfig {
        StsConfig {
            stage_safety: 1.0,
            ..StsConfig::new(kind)
        }
    }

    #[test]
    fn stage_selection_examples() {
        for kind in [StsKind::Rkc, StsKind::Rkl] {
            assert_eq!(select_stage_count(&unit_safety(kind), 0.5, 0.0).unwrap(), 2);
        }
        assert_eq!(select_stage_count(&unit_safety(StsKind::Rkc), 1.0, 100.0).unwrap(), 12);
        assert_eq!(select_stage_count(&unit_safety(StsKind::Rkl), 1.0, 100.0).unwrap(), 14);
    }

    #[test]
    fn stage_cap_requests_smaller_step() {
        let cfg = StsConfig {
            max_stages: 10,
            ..unit_safety(StsKind::Rkl)
        };
        let r = select_stage_count(&cfg, 1.0, 1000.0);
        assert!(matches!(r, Err(Error::ReduceStep { max: 10, .. })));
    }

    #[test]
    fn rkc_integrator_raises_stage_count_to_attained_extent() {
        let cfg = unit_safety(StsKind::Rkc);
        let s = stages_for_step(&cfg, 1.0, 100.0).unwrap();
        assert_eq!(s, 13);
        assert!(cfg.guaranteed_extent(s) >= 100.0);
    }

    #[test]
    fn zero_rhs_is_identity() {
        let sys = FnSystem::new(2, |_t: f64, _y: &[f64], d: &mut [f64]| d.fill(0.0));
        for kind in [StsKind::Rkc, StsKind::Rkl] {
            let (y, e) = sts_step(kind, &sys, 0.0, &[1.0, 2.0], 0.3, 7).unwrap();
            assert_eq!(y, vec![1.0, 2.0]);
            assert_eq!(e, vec![0.0, 0.0]);
        }
    }

    #[test]
    fn matches_high_precision_scalar_reference() {
        // Values from an independent 40-digit evaluation of the recurrence.
        let sys = linear(-1.0);
        let (y, _) = sts_step(StsKind::Rkc, &sys, 0.0, &[1.0], 0.1, 5).unwrap();
        assert!((y[0] - 0.904_912_146_934_665_4).abs() < 1e-15);
        let (y, _) = sts_step(StsKind::Rkl, &sys, 0.0, &[1.0], 0.1, 5).unwrap();
        assert!((y[0] - 0.904_905_525_024_295_4).abs() < 1e-15);
        // Both agree with the quadratic Taylor polynomial to O(h³).
        assert!((y[0] - 0.905).abs() < 2.0 * 0.1f64.powi(3));
    }

    #[test]
    fn abscissae_end_at_one() {
        for kind in [StsKind::Rkc, StsKind::Rkl] {
            for s in [2, 3, 10, 57] {
                let c = StsCoefficients::new(kind, s).unwrap();
                assert!((c.c[s] - 1.0).abs() < 1e-12, "{kind:?} s={s}: {}", c.c[s]);
            }
        }
    }

    #[test]
    fn stiff_decay_is_stable() {
        let lambda = -1.0e4;
        let h = 8000.0 / 1.0e4;
        for kind in [StsKind::Rkc, StsKind::Rkl] {
            let cfg = StsConfig::new(kind);
            let s = stages_for_step(&cfg, h, -lambda).unwrap();
            let (y, _) = sts_step(kind, &linear(lambda), 0.0, &[1.0], h, s).unwrap();
            assert!(y[0].abs() <= 1.0, "{kind:?}: {}", y[0]);
        }
    }

    proptest! {
        #[test]
        fn stable_within_attained_extent(s in 2usize..60, frac in 0.0f64..1.0) {
            for kind in [StsKind::Rkc, StsKind::Rkl] {
                let cfg = unit_safety(kind);
                let z = frac * cfg.guaranteed_extent(s);
                let (y, _) = sts_step(kind, &linear(-z), 0.0, &[1.0], 1.0, s).unwrap();
                prop_assert!(y[0].abs() <= 1.0 + 1e-12, "{:?} s={} z={} y={}", kind, s, z, y[0]);
            }
        }
    }

    #[test]
    fn rkl_nominal_extent_is_attained() {
        for s in [2, 5, 14, 40] {
            let cfg = unit_safety(StsKind::Rkl);
            let z = cfg.nominal_extent(s);
            let (y, _) = sts_step(StsKind::Rkl, &linear(-z), 0.0, &[1.0], 1.0, s).unwrap();
            assert!(y[0].abs() <= 1.0 + 1e-12);
        }
    }

    #[test]
    fn second_order_convergence_and_estimate_decay() {
        let sys = FnSystem::new(1, |t: f64, y: &[f64], d: &mut [f64]| d[0] = -y[0] + t.sin());
        let exact = 1.5 * (-2.0f64).exp() + 0.5 * (2.0f64.sin() - 2.0f64.cos());
        for kind in [StsKind::Rkc, StsKind::Rkl] {
            let errs: Vec<f64> = [20usize, 40, 80]
                .iter()
                .map(|&n| {
                    let h = 2.0 / n as f64;
                    let mut y = vec![1.0];
                    for i in 0..n {
                        y = sts_step(kind, &sys, i as f64 * h, &y, h, 6).unwrap().0;
                    }
                    (y[0] - exact).abs()
                })
                .collect();
            for w in errs.windows(2) {
                let rate = (w[0] / w[1]).log2();
                assert!((rate - 2.0).abs() < 0.2, "{kind:?}: {rate}");
            }
            let ests: Vec<f64> = [0.1, 0.05, 0.025]
                .iter()
                .map(|&h| sts_step(kind, &sys, 0.0, &[1.0], h, 6).unwrap().1[0].abs())
                .collect();
            for w in ests.windows(2) {
                assert!((w[0] / w[1]).log2() >= 2.0 - 0.1);
            }
        }
    }

    #[test]
    fn work_vectors_do_not_grow_with_stages() {
        let sys = linear(-1.0);
        let mut ws = StsWorkspace::new();
        let (mut y, mut e) = (vec![0.0], vec![0.0]);
        ws.step(StsKind::Rkc, &sys, 0.0, &[1.0], 0.1, 3, &mut y, &mut e).unwrap();
        let after_small = ws.allocations();
        for s in [10, 50, 150] {
            ws.step(StsKind::Rkl, &sys, 0.0, &[1.0], 0.1, s, &mut y, &mut e).unwrap();
            ws.step(StsKind::Rkc, &sys, 0.0, &[1.0], 0.1, s, &mut y, &mut e).unwrap();
        }
        assert_eq!(ws.allocations(), after_small);
        assert_eq!(after_small, 6);
    }

    fn heat_1d(n: usize) -> (FnSystem<impl Fn(f64, &[f64], &mut [f64])>, f64) {
        let dx = 1.0 / (n + 1) as f64;
        let k = 1.0 / (dx * dx);
        let sys = FnSystem::new(n, move |_t: f64, u: &[f64], d: &mut [f64]| {
            for i in 0..n {
                let l = if i == 0 { 0.0 } else { u[i - 1] };
                let r = if i + 1 == n { 0.0 } else { u[i + 1] };
                d[i] = k * (l - 2.0 * u[i] + r);
            }
        });
        (sys, 4.0 * k)
    }

    #[test]
    fn heat_equation_uses_many_stages_without_instability() {
        let n = 128;
        let (sys, rho) = heat_1d(n);
        let y0: Vec<f64> = (1..=n)
            .map(|i| (std::f64::consts::PI * i as f64 / (n + 1) as f64).sin())
            .collect();
        let tol = ToleranceSpec::new(1e-4, 1e-8).unwrap();
        for kind in [StsKind::Rkc, StsKind::Rkl] {
            let mut rho_fn = |_t: f64, _y: &[f64]| Ok(rho);
            let out = sts_evolve(&StsConfig::new(kind), &mut rho_fn, &sys, &AdaptiveOptions::new(tol.clone()), 0.0, 0.1, &y0)
                .unwrap();
            assert!(out.max_stages_used > 10, "{kind:?}: {}", out.max_stages_used);
            assert_eq!(out.stats.rejections, 0, "{kind:?}");
            // Slowest mode decays like exp(−π² t) up to the spatial error.
            let decay = (-std::f64::consts::PI.powi(2) * 0.1).exp();
            let err = out.y.iter().zip(&y0).map(|(a, b)| (a - decay * b).abs()).fold(0.0, f64::max);
            assert!(err < 1e-3, "{kind:?}: {err}");
        }
    }

    #[test]
    fn zero_spectral_radius_falls_back_to_two_stages() {
        let sys = linear(1.0);
        let tol = ToleranceSpec::new(1e-8, 1e-10).unwrap();
        let mut rho_fn = |_t: f64, _y: &[f64]| Ok(0.0);
        let out = sts_evolve(&StsConfig::new(StsKind::Rkc), &mut rho_fn, &sys, &AdaptiveOptions::new(tol), 0.0, 1.0, &[1.0]).unwrap();
        assert_eq!(out.max_stages_used, 2);
        assert!((out.y[0] - std::f64::consts::E).abs() < 1e-4, "{} {:?}", out.y[0], out.stats);
    }

    #[test]
    fn tighter_tolerance_means_more_steps_and_smaller_error() {
        let (sys, rho) = heat_1d(32);
        let y0: Vec<f64> = (1..=32).map(|i| (i as f64 * 0.3).sin()).collect();
        let reference = {
            let mut rho_fn = |_t: f64, _y: &[f64]| Ok(rho);
            let tol = ToleranceSpec::new(1e-12, 1e-14).unwrap();
            sts_evolve(&StsConfig::new(StsKind::Rkl), &mut rho_fn, &sys, &AdaptiveOptions::new(tol), 0.0, 0.05, &y0)
                .unwrap()
                .y
        };
        let mut prev: Option<(usize, f64)> = None;
        for rtol in [1e-4, 1e-7, 1e-10] {
            let mut rho_fn = |_t: f64, _y: &[f64]| Ok(rho);
            let tol = ToleranceSpec::new(rtol, rtol * 1e-2).unwrap();
            let out = sts_evolve(&StsConfig::new(StsKind::Rkc), &mut rho_fn, &sys, &AdaptiveOptions::new(tol), 0.0, 0.05, &y0)
                .unwrap();
            let err = out.y.iter().zip(&reference).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            if let Some((steps, e)) = prev {
                assert!(out.stats.steps > steps);
                assert!(err < e);
            }
            prev = Some((out.stats.steps, err));
        }
    }

    #[test]
    fn spectral_radius_is_reused_between_updates() {
        let (sys, rho) = heat_1d(16);
        let y0 = vec![1.0; 16];
        let mut calls = 0;
        let mut rho_fn = |_t: f64, _y: &[f64]| {
            calls += 1;
            Ok(rho)
        };
        let cfg = StsConfig {
            rho_recompute_period: 5,
            ..StsConfig::new(StsKind::Rkl)
        };
        let tol = ToleranceSpec::new(1e-6, 1e-10).unwrap();
        let out = sts_evolve(&cfg, &mut rho_fn, &sys, &AdaptiveOptions::new(tol), 0.0, 0.2, &y0).unwrap();
        assert_eq!(out.rho_evals, calls);
        assert!(out.rho_evals <= 1 + out.stats.steps / 5 + out.stats.rejections);
        assert!(out.rho_evals < out.stats.steps);
    }
}
