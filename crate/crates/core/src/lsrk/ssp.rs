//! Low-storage strong-stability-preserving methods.
//!
//! Each method is a short program over two registers `q1`, `q2` (both start
//! as `y_{n-1}`). Running the program on weight vectors instead of states
//! yields the equivalent Butcher tableau, which is used for the stage times
//! and to build the embedded estimate.

use nalgebra::{DMatrix, DVector};

use crate::adaptive::{evolve_adaptive, AdaptiveMethod, AdaptiveOptions, AdaptiveOutcome};
use crate::error::{check_dim, Error, Result};
use crate::system::OdeSystem;

use super::Registers;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SspFamily {
    /// Second order, any `s ≥ 2`.
    Ssp2,
    /// Third order, `s = k²` with `k ≥ 2`.
    Ssp3,
    /// Fourth order, `s = 10`.
    Ssp4,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SspConfig {
    pub family: SspFamily,
    pub stage_count: usize,
}

impl SspConfig {
    pub fn new(family: SspFamily, stage_count: usize) -> Result<Self> {
        let ok = match family {
            SspFamily::Ssp2 => stage_count >= 2,
            SspFamily::Ssp3 => {
                let k = (stage_count as f64).sqrt().round() as usize;
                k >= 2 && k * k == stage_count
            }
            SspFamily::Ssp4 => stage_count == 10,
        };
        if !ok {
            return Err(Error::invalid(format!(
                "invalid stage count {stage_count} for {family:?}"
            )));
        }
        Ok(Self {
            family,
            stage_count,
        })
    }

    pub fn order(&self) -> usize {
        match self.family {
            SspFamily::Ssp2 => 2,
            SspFamily::Ssp3 => 3,
            SspFamily::Ssp4 => 4,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Op {
    /// `q[r] += coef · h · f(q[r])`
    Stage { r: usize, coef: f64 },
    /// `q[dst] = a1 · q[0] + a2 · q[1] (+ fc · h · f(q[0]) if fc != 0)`
    Combine { dst: usize, a1: f64, a2: f64, fc: f64 },
}

fn program(cfg: &SspConfig) -> Vec<Op> {
    let s = cfg.stage_count;
    let sf = s as f64;
    let mut ops = Vec::new();
    match cfg.family {
        SspFamily::Ssp2 => {
            let c = 1.0 / (sf - 1.0);
            for _ in 0..s - 1 {
                ops.push(Op::Stage { r: 0, coef: c });
            }
            ops.push(Op::Combine {
                dst: 0,
                a1: (sf - 1.0) / sf,
                a2: 1.0 / sf,
                fc: 1.0 / sf,
            });
        }
        SspFamily::Ssp3 => {
            let n = (sf.sqrt().round()) as usize;
            let nf = n as f64;
            let r = 1.0 / (sf - nf);
            let first = (n - 1) * (n - 2) / 2;
            let second = n * (n + 1) / 2 - 1 - first;
            let last = n * n - n * (n + 1) / 2;
            ops.extend(std::iter::repeat_n(Op::Stage { r: 0, coef: r }, first));
            ops.push(Op::Combine {
                dst: 1,
                a1: 1.0,
                a2: 0.0,
                fc: 0.0,
            });
            ops.extend(std::iter::repeat_n(Op::Stage { r: 0, coef: r }, second));
            let d = 2.0 * nf - 1.0;
            ops.push(Op::Combine {
                dst: 0,
                a1: (nf - 1.0) / d,
                a2: nf / d,
                fc: (nf - 1.0) * r / d,
            });
            ops.extend(std::iter::repeat_n(Op::Stage { r: 0, coef: r }, last));
        }
        SspFamily::Ssp4 => {
            let c = 1.0 / 6.0;
            ops.extend(std::iter::repeat_n(Op::Stage { r: 0, coef: c }, 5));
            ops.push(Op::Combine {
                dst: 1,
                a1: 9.0 / 25.0,
                a2: 1.0 / 25.0,
                fc: 0.0,
            });
            ops.push(Op::Combine {
                dst: 0,
                a1: -5.0,
                a2: 15.0,
                fc: 0.0,
            });
            ops.extend(std::iter::repeat_n(Op::Stage { r: 0, coef: c }, 4));
            ops.push(Op::Combine {
                dst: 0,
                a1: 0.6,
                a2: 1.0,
                fc: 0.1,
            });
        }
    }
    ops
}

/// Butcher form of a low-storage program plus the embedding weights.
#[derive(Debug, Clone, PartialEq)]
pub struct SspTableau {
    pub a: Vec<Vec<f64>>,
    pub b: Vec<f64>,
    pub c: Vec<f64>,
    pub b_embed: Vec<f64>,
    pub order: usize,
    pub embed_order: usize,
}

/// Symbolic execution of the program: each register holds the weights of
/// `y + h Σ_j w_j f_j`.
fn tableau_of(ops: &[Op], s: usize) -> (Vec<Vec<f64>>, Vec<f64>) {
    let mut q = [vec![0.0; s], vec![0.0; s]];
    let mut a = Vec::with_capacity(s);
    for op in ops {
        match *op {
            Op::Stage { r, coef } => {
                let i = a.len();
                a.push(q[r].clone());
                q[r][i] += coef;
            }
            Op::Combine { dst, a1, a2, fc } => {
                let mut w: Vec<f64> = q[0].iter().zip(&q[1]).map(|(x, y)| a1 * x + a2 * y).collect();
                if fc != 0.0 {
                    let i = a.len();
                    a.push(q[0].clone());
                    w[i] += fc;
                }
                q[dst] = w;
            }
        }
    }
    (a, q[0].clone())
}

/// Embedding of order `order − 1`, supported on a few spread-out stages.
fn embedding(a: &[Vec<f64>], c: &[f64], order: usize) -> Result<Vec<f64>> {
    let s = c.len();
    let mut bh = vec![0.0; s];
    match order - 1 {
        1 => bh[0] = 1.0,
        2 => {
            // b̂_1 + b̂_s = 1, b̂_s c_s = 1/2
            let cs = c[s - 1];
            bh[s - 1] = 0.5 / cs;
            bh[0] = 1.0 - bh[s - 1];
        }
        3 => {
            // Evenly spaced stages give a fourth-order (Simpson-like)
            // combination here, which would make the estimate vanish.
            let idx = [0, s / 3, (2 * s) / 3 + 1, s - 1];
            let ac: Vec<f64> = a.iter().map(|row| row.iter().zip(c).map(|(x, y)| x * y).sum()).collect();
            let m = DMatrix::from_fn(4, 4, |r, k| {
                let i = idx[k];
                match r {
                    0 => 1.0,
                    1 => c[i],
                    2 => c[i] * c[i],
                    _ => ac[i],
                }
            });
            let rhs = DVector::from_vec(vec![1.0, 0.5, 1.0 / 3.0, 1.0 / 6.0]);
            let sol = m
                .lu()
                .solve(&rhs)
                .ok_or_else(|| Error::invalid("singular embedding system"))?;
            for (k, &i) in idx.iter().enumerate() {
                bh[i] = sol[k];
            }
        }
        _ => unreachable!("embedding orders 1 to 3 only"),
    }
    Ok(bh)
}

impl SspTableau {
    pub fn new(cfg: &SspConfig) -> Result<Self> {
        let s = cfg.stage_count;
        let (a, b) = tableau_of(&program(cfg), s);
        let c: Vec<f64> = a.iter().map(|r| r.iter().sum()).collect();
        let b_embed = embedding(&a, &c, cfg.order())?;
        Ok(Self {
            a,
            b,
            c,
            b_embed,
            order: cfg.order(),
            embed_order: cfg.order() - 1,
        })
    }
}

/// Two stage registers, the stage derivative, and a scratch stage value.
#[derive(Debug, Default, Clone)]
pub struct SspWorkspace {
    regs: Registers,
    cached: Option<(SspConfig, Vec<Op>, SspTableau)>,
}

impl SspWorkspace {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn allocations(&self) -> usize {
        self.regs.allocations
    }

    /// The tableau equivalent to the configured method.
    pub fn tableau(&mut self, cfg: &SspConfig) -> Result<&SspTableau> {
        self.prepare(cfg)?;
        Ok(&self.cached.as_ref().expect("cached").2)
    }

    fn prepare(&mut self, cfg: &SspConfig) -> Result<()> {
        if self.cached.as_ref().is_none_or(|(c, _, _)| c != cfg) {
            let cfg = SspConfig::new(cfg.family, cfg.stage_count)?;
            self.cached = Some((cfg, program(&cfg), SspTableau::new(&cfg)?));
        }
        Ok(())
    }

    #[allow(clippy::too_many_arguments)]
    pub fn step(
        &mut self,
        cfg: &SspConfig,
        sys: &dyn OdeSystem,
        t: f64,
        y: &[f64],
        h: f64,
        y_next: &mut [f64],
        est: &mut [f64],
    ) -> Result<()> {
        let n = y.len();
        check_dim(sys.dimension(), n)?;
        check_dim(n, y_next.len())?;
        check_dim(n, est.len())?;
        self.prepare(cfg)?;
        self.regs.ensure(4, n);
        let (_, ops, tab) = self.cached.as_ref().expect("cached");
        // Registers hold q_r = λ_r y + d_r; only the increments d_r are stored.
        let [d1, d2, f, z] = &mut self.regs.vecs[..] else {
            unreachable!()
        };
        d1.fill(0.0);
        d2.fill(0.0);
        let mut lam = [1.0, 1.0];
        est.fill(0.0);
        let load = |z: &mut [f64], lam: f64, d: &[f64]| {
            for i in 0..n {
                z[i] = if lam == 1.0 { y[i] + d[i] } else { lam * y[i] + d[i] };
            }
        };
        let mut stage = 0;
        for op in ops {
            match *op {
                Op::Stage { r, coef } => {
                    let d = if r == 0 { &mut *d1 } else { &mut *d2 };
                    load(z, lam[r], d);
                    sys.rhs(t + tab.c[stage] * h, z, f)?;
                    let e = h * (tab.b[stage] - tab.b_embed[stage]);
                    for i in 0..n {
                        d[i] += coef * h * f[i];
                        est[i] += e * f[i];
                    }
                    stage += 1;
                }
                Op::Combine { dst, a1, a2, fc } => {
                    if fc != 0.0 {
                        load(z, lam[0], d1);
                        sys.rhs(t + tab.c[stage] * h, z, f)?;
                        let e = h * (tab.b[stage] - tab.b_embed[stage]);
                        for i in 0..n {
                            est[i] += e * f[i];
                        }
                        stage += 1;
                    }
                    for i in 0..n {
                        let v = a1 * d1[i] + a2 * d2[i] + if fc != 0.0 { fc * h * f[i] } else { 0.0 };
                        if dst == 0 {
                            d1[i] = v;
                        } else {
                            d2[i] = v;
                        }
                    }
                    lam[dst] = a1 * lam[0] + a2 * lam[1];
                }
            }
        }
        debug_assert!((lam[0] - 1.0).abs() < 1e-12);
        for i in 0..n {
            y_next[i] = y[i] + d1[i];
        }
        crate::error::check_finite(y_next, "strong-stability-preserving stage")
    }
}

/// One step with freshly allocated storage. Returns `(y_n, estimate)`.
pub fn ssp_step(
    cfg: &SspConfig,
    sys: &dyn OdeSystem,
    t: f64,
    y: &[f64],
    h: f64,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let mut ws = SspWorkspace::new();
    let mut y_next = vec![0.0; y.len()];
    let mut est = vec![0.0; y.len()];
    ws.step(cfg, sys, t, y, h, &mut y_next, &mut est)?;
    Ok((y_next, est))
}

struct SspMethod {
    cfg: SspConfig,
    ws: SspWorkspace,
    evals: usize,
}

impl AdaptiveMethod for SspMethod {
    fn controller_order(&self) -> usize {
        self.cfg.order() - 1
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
        self.evals += self.cfg.stage_count;
        self.ws.step(&self.cfg, sys, t, y, h, y_next, err)
    }

    fn rhs_evals(&self) -> usize {
        self.evals
    }

    fn scope(&self) -> &'static str {
        "LsrkEvolve"
    }
}

/// Adaptive integration with an SSP method and its embedding.
pub fn ssp_evolve(
    cfg: &SspConfig,
    sys: &dyn OdeSystem,
    opts: &AdaptiveOptions,
    t0: f64,
    tf: f64,
    y0: &[f64],
) -> Result<AdaptiveOutcome> {
    let cfg = SspConfig::new(cfg.family, cfg.stage_count)?;
    let mut m = SspMethod {
        cfg,
        ws: SspWorkspace::new(),
        evals: 0,
    };
    evolve_adaptive(&mut m, sys, opts, t0, tf, y0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::control::ToleranceSpec;
    use crate::order_conditions::residuals;
    use crate::system::FnSystem;

    fn all_configs() -> Vec<SspConfig> {
        vec![
            SspConfig::new(SspFamily::Ssp2, 2).unwrap(),
            SspConfig::new(SspFamily::Ssp2, 5).unwrap(),
            SspConfig::new(SspFamily::Ssp2, 10).unwrap(),
            SspConfig::new(SspFamily::Ssp3, 4).unwrap(),
            SspConfig::new(SspFamily::Ssp3, 9).unwrap(),
            SspConfig::new(SspFamily::Ssp4, 10).unwrap(),
        ]
    }

    #[test]
    fn invalid_stage_counts() {
        assert!(SspConfig::new(SspFamily::Ssp2, 1).is_err());
        assert!(SspConfig::new(SspFamily::Ssp3, 5).is_err());
        assert!(SspConfig::new(SspFamily::Ssp3, 1).is_err());
        assert!(SspConfig::new(SspFamily::Ssp4, 9).is_err());
    }

    #[test]
    fn ssp2_two_stages_is_heun() {
        let sys = FnSystem::new(1, |_t: f64, y: &[f64], d: &mut [f64]| d[0] = y[0]);
        let cfg = SspConfig::new(SspFamily::Ssp2, 2).unwrap();
        let (y, _) = ssp_step(&cfg, &sys, 0.0, &[1.0], 0.1).unwrap();
        // Heun: k1 = 1, k2 = 1.1, y = 1 + 0.05 (k1 + k2)
        let heun = 1.0 + 0.05 * (1.0 + 1.1);
        assert!((y[0] - heun).abs() < 1e-15);
        assert!((y[0] - 1.105).abs() < 1e-15);
    }

    #[test]
    fn tableaus_satisfy_order_conditions() {
        for cfg in all_configs() {
            let tab = SspTableau::new(&cfg).unwrap();
            let p = cfg.order();
            let res = residuals(&tab.a, &tab.b, p + 1);
            assert!(res[..p].iter().all(|r| *r < 1e-13), "{cfg:?}: {res:?}");
            let res_e = residuals(&tab.a, &tab.b_embed, p);
            assert!(res_e[..p - 1].iter().all(|r| *r < 1e-12), "{cfg:?}: {res_e:?}");
            assert!(res_e[p - 1] > 1e-6, "{cfg:?} embedding should be exactly order {}", p - 1);
            assert!(tab.a.iter().enumerate().all(|(i, r)| r[i..].iter().all(|v| *v == 0.0)));
        }
    }

    #[test]
    fn zero_rhs_is_identity() {
        let sys = FnSystem::new(2, |_t: f64, _y: &[f64], d: &mut [f64]| d.fill(0.0));
        for cfg in all_configs() {
            let (y, e) = ssp_step(&cfg, &sys, 0.0, &[1.0, -1.0], 0.4).unwrap();
            assert_eq!(y, vec![1.0, -1.0]);
            assert_eq!(e, vec![0.0, 0.0]);
        }
    }

    #[test]
    fn convergence_slopes() {
        let sys = FnSystem::new(1, |t: f64, y: &[f64], d: &mut [f64]| d[0] = -y[0] + t.sin());
        let exact = 1.5 * (-2.0f64).exp() + 0.5 * (2.0f64.sin() - 2.0f64.cos());
        for cfg in all_configs() {
            let ns = [10usize, 20, 40];
            let errs: Vec<f64> = ns
                .iter()
                .map(|&n| {
                    let h = 2.0 / n as f64;
                    let mut y = vec![1.0];
                    for i in 0..n {
                        y = ssp_step(&cfg, &sys, i as f64 * h, &y, h).unwrap().0;
                    }
                    (y[0] - exact).abs()
                })
                .collect();
            let slope = (errs[0] / errs[2]).log2() / 2.0;
            assert!((slope - cfg.order() as f64).abs() <= 0.25, "{cfg:?}: {slope}");
        }
    }

    #[test]
    fn two_live_registers_plus_derivative() {
        let sys = FnSystem::new(3, |_t: f64, y: &[f64], d: &mut [f64]| {
            for i in 0..3 {
                d[i] = -y[i];
            }
        });
        let mut ws = SspWorkspace::new();
        let (mut y, mut e) = (vec![0.0; 3], vec![0.0; 3]);
        for cfg in all_configs() {
            ws.step(&cfg, &sys, 0.0, &[1.0, 2.0, 3.0], 0.1, &mut y, &mut e).unwrap();
        }
        assert_eq!(ws.allocations(), 4);
    }

    #[test]
    fn adaptive_meets_tolerance() {
        let sys = FnSystem::new(1, |_t: f64, y: &[f64], d: &mut [f64]| d[0] = -2.0 * y[0]);
        for cfg in all_configs() {
            let tol = ToleranceSpec::new(1e-6, 1e-10).unwrap();
            let out = ssp_evolve(&cfg, &sys, &AdaptiveOptions::new(tol), 0.0, 1.0, &[1.0]).unwrap();
            let err = (out.y[0] - (-2.0f64).exp()).abs();
            assert!(err < 1e-4, "{cfg:?}: {err}");
        }
    }
}
