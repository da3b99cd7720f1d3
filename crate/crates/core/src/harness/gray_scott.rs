//! The Gray–Scott reaction–diffusion system on a periodic `[-1, 1]²` grid,
//! with its three-way split: linear `u` reaction, Riccati `v` reaction, and
//! diffusion.
//!
//! State layout: the `N²` values of `u` (row-major), then those of `v`.

use crate::error::{check_dim, Error, Result};
use crate::stepper::Stepper;
use crate::system::OdeSystem;

#[derive(Debug, Clone, PartialEq)]
pub struct GrayScott {
    pub n: usize,
    pub eps1: f64,
    pub eps2: f64,
    pub a: f64,
    pub b: f64,
}

impl GrayScott {
    pub fn new(n: usize) -> Result<Self> {
        if n < 3 {
            return Err(Error::invalid("Gray-Scott grid needs at least 3 points per side"));
        }
        Ok(Self {
            n,
            eps1: 2e-5,
            eps2: 1e-5,
            a: 0.04,
            b: 0.06,
        })
    }

    pub fn cells(&self) -> usize {
        self.n * self.n
    }

    pub fn dimension(&self) -> usize {
        2 * self.cells()
    }

    pub fn spacing(&self) -> f64 {
        2.0 / self.n as f64
    }

    /// Coordinate of grid index `i` along either axis.
    pub fn coord(&self, i: usize) -> f64 {
        -1.0 + i as f64 * self.spacing()
    }

    /// Gaussian bumps: `u = 1 − exp(−80((x+0.05)² + (y+0.02)²))`,
    /// `v = exp(−80((x−0.05)² + (y−0.02)²))`.
    pub fn initial_condition(&self) -> Vec<f64> {
        let m = self.cells();
        let mut y = vec![0.0; 2 * m];
        for row in 0..self.n {
            let yy = self.coord(row);
            for col in 0..self.n {
                let x = self.coord(col);
                let idx = row * self.n + col;
                y[idx] = 1.0 - (-80.0 * ((x + 0.05).powi(2) + (yy + 0.02).powi(2))).exp();
                y[m + idx] = (-80.0 * ((x - 0.05).powi(2) + (yy - 0.02).powi(2))).exp();
            }
        }
        y
    }

    /// `out = scale · D field`, with `D` the periodic five-point Laplacian.
    pub fn laplacian(&self, field: &[f64], scale: f64, out: &mut [f64]) {
        let n = self.n;
        let c = scale / (self.spacing() * self.spacing());
        for row in 0..n {
            let up = if row == 0 { n - 1 } else { row - 1 } * n;
            let down = if row + 1 == n { 0 } else { row + 1 } * n;
            let here = row * n;
            for col in 0..n {
                let left = if col == 0 { n - 1 } else { col - 1 };
                let right = if col + 1 == n { 0 } else { col + 1 };
                let centre = field[here + col];
                out[here + col] = c
                    * (field[here + left] + field[here + right] + field[up + col] + field[down + col] - 4.0 * centre);
            }
        }
    }

    /// Gershgorin bound on the spectral radius of the diffusion Jacobian.
    pub fn diffusion_spectral_bound(&self) -> f64 {
        8.0 * self.eps1.max(self.eps2) / (self.spacing() * self.spacing())
    }

    pub fn full(&self) -> GrayScottRhs<'_> {
        GrayScottRhs { p: self, part: Part::Full }
    }
    pub fn diffusion(&self) -> GrayScottRhs<'_> {
        GrayScottRhs { p: self, part: Part::Diffusion }
    }
    pub fn linear_reaction(&self) -> GrayScottRhs<'_> {
        GrayScottRhs { p: self, part: Part::Linear }
    }
    pub fn riccati_reaction(&self) -> GrayScottRhs<'_> {
        GrayScottRhs { p: self, part: Part::Riccati }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Part {
    Full,
    Diffusion,
    /// `u' = −u v² + a (1 − u)`, `v' = 0`.
    Linear,
    /// `u' = 0`, `v' = u v² − (a + b) v`.
    Riccati,
}

/// One of the Gray–Scott right-hand sides as an [`OdeSystem`].
#[derive(Debug, Clone, Copy)]
pub struct GrayScottRhs<'p> {
    p: &'p GrayScott,
    part: Part,
}

impl OdeSystem for GrayScottRhs<'_> {
    fn dimension(&self) -> usize {
        self.p.dimension()
    }

    fn rhs(&self, _t: f64, y: &[f64], dydt: &mut [f64]) -> Result<()> {
        let m = self.p.cells();
        let (u, v) = y.split_at(m);
        let (du, dv) = dydt.split_at_mut(m);
        let (a, b) = (self.p.a, self.p.b);
        match self.part {
            Part::Diffusion | Part::Full => {
                self.p.laplacian(u, self.p.eps1, du);
                self.p.laplacian(v, self.p.eps2, dv);
                if self.part == Part::Full {
                    for i in 0..m {
                        let uvv = u[i] * v[i] * v[i];
                        du[i] += -uvv + a * (1.0 - u[i]);
                        dv[i] += uvv - (a + b) * v[i];
                    }
                }
            }
            Part::Linear => {
                for i in 0..m {
                    du[i] = -u[i] * v[i] * v[i] + a * (1.0 - u[i]);
                }
                dv.fill(0.0);
            }
            Part::Riccati => {
                du.fill(0.0);
                for i in 0..m {
                    dv[i] = u[i] * v[i] * v[i] - (a + b) * v[i];
                }
            }
        }
        Ok(())
    }
}

/// Exact flow of the linear `u` reaction with `v` frozen:
/// `u(τ) = ū + (u₀ − ū) e^{−(v²+a)τ}`, `ū = a / (v² + a)`.
#[derive(Debug, Clone, Copy)]
pub struct LinearReactionExact {
    pub a: f64,
}

impl LinearReactionExact {
    pub fn flow(&self, u0: f64, v: f64, tau: f64) -> f64 {
        let k = v * v + self.a;
        let ubar = self.a / k;
        u0 - (ubar - u0) * (-k * tau).exp_m1()
    }
}

impl Stepper for LinearReactionExact {
    fn evolve(&mut self, t_start: f64, t_end: f64, y: &mut [f64]) -> Result<()> {
        if !y.len().is_multiple_of(2) {
            return Err(Error::invalid("Gray-Scott state has odd length"));
        }
        let tau = t_end - t_start;
        if tau == 0.0 {
            return Ok(());
        }
        let (u, v) = y.split_at_mut(y.len() / 2);
        for (ui, vi) in u.iter_mut().zip(v.iter()) {
            *ui = self.flow(*ui, *vi, tau);
        }
        Ok(())
    }
}

/// Exact flow of the Riccati `v` reaction with `u` frozen, through
/// `w = 1/v`: `w(τ) = w̄ + (w₀ − w̄) e^{(a+b)τ}`, `w̄ = u / (a + b)`.
#[derive(Debug, Clone, Copy)]
pub struct RiccatiReactionExact {
    pub a: f64,
    pub b: f64,
}

impl RiccatiReactionExact {
    /// The flow, or the time offset at which `v` becomes unbounded if that
    /// happens within `[0, τ]`.
    pub fn flow(&self, u: f64, v0: f64, tau: f64) -> std::result::Result<f64, f64> {
        if v0 == 0.0 {
            return Ok(0.0);
        }
        let k = self.a + self.b;
        let w0 = 1.0 / v0;
        let wbar = u / k;
        let w = wbar + (w0 - wbar) * (k * tau).exp();
        if w == 0.0 || w.signum() != w0.signum() {
            return Err((wbar / (wbar - w0)).ln() / k);
        }
        Ok(1.0 / w)
    }
}

impl Stepper for RiccatiReactionExact {
    fn evolve(&mut self, t_start: f64, t_end: f64, y: &mut [f64]) -> Result<()> {
        if !y.len().is_multiple_of(2) {
            return Err(Error::invalid("Gray-Scott state has odd length"));
        }
        let tau = t_end - t_start;
        if tau == 0.0 {
            return Ok(());
        }
        let (u, v) = y.split_at_mut(y.len() / 2);
        for (ui, vi) in u.iter().zip(v.iter_mut()) {
            *vi = self
                .flow(*ui, *vi, tau)
                .map_err(|offset| Error::BlowUp { t: t_start + offset })?;
        }
        Ok(())
    }
}

/// Relative ℓ² error over the whole state.
pub fn relative_l2_error(y: &[f64], reference: &[f64]) -> Result<f64> {
    check_dim(reference.len(), y.len())?;
    let num: f64 = y.iter().zip(reference).map(|(a, b)| (a - b) * (a - b)).sum();
    let den: f64 = reference.iter().map(|b| b * b).sum();
    Ok((num / den).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::control::ToleranceSpec;
    use crate::erk::{builtin_table, erk_evolve};
    use crate::adaptive::AdaptiveOptions;
    use crate::system::FnSystem;

    fn scalar_reference(f: impl Fn(f64) -> f64, y0: f64, tau: f64) -> f64 {
        let sys = FnSystem::new(1, move |_t: f64, y: &[f64], d: &mut [f64]| d[0] = f(y[0]));
        let opts = AdaptiveOptions::new(ToleranceSpec::new(1e-12, 1e-14).unwrap());
        erk_evolve(&builtin_table("dp5").unwrap(), &sys, &opts, 0.0, tau, &[y0]).unwrap().y[0]
    }

    #[test]
    fn laplacian_annihilates_constants() {
        let gs = GrayScott::new(8).unwrap();
        let mut out = vec![1.0; 64];
        gs.laplacian(&[3.5; 64], 1.0, &mut out);
        assert!(out.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn laplacian_matches_second_derivative() {
        let gs = GrayScott::new(64).unwrap();
        let pi = std::f64::consts::PI;
        let mut f = vec![0.0; 64 * 64];
        for r in 0..64 {
            for c in 0..64 {
                f[r * 64 + c] = (pi * gs.coord(c)).sin();
            }
        }
        let mut out = vec![0.0; f.len()];
        gs.laplacian(&f, 1.0, &mut out);
        for (o, x) in out.iter().zip(&f) {
            assert!((o + pi * pi * x).abs() < 1e-2);
        }
    }

    #[test]
    fn linear_reaction_values() {
        let s = LinearReactionExact { a: 0.04 };
        assert!((s.flow(0.0, 0.0, 1.0) - (1.0 - (-0.04f64).exp())).abs() < 1e-16);
        assert!((s.flow(0.0, 0.0, 1.0) - 0.039_210_560_847_676_82).abs() < 1e-15);
        let ueq = 0.04 / (0.25 + 0.04);
        assert!((s.flow(ueq, 0.5, 3.0) - ueq).abs() < 1e-16);
        assert_eq!(s.flow(0.7, 0.3, 0.0), 0.7);
        for (u0, v, tau) in [(0.2, 0.5, 1.0), (0.9, 0.1, 2.5), (0.5, 0.8, -0.5)] {
            let r = scalar_reference(|u| -u * v * v + 0.04 * (1.0 - u), u0, tau);
            assert!((s.flow(u0, v, tau) - r).abs() < 1e-10);
        }
    }

    #[test]
    fn riccati_values() {
        let s = RiccatiReactionExact { a: 0.04, b: 0.06 };
        assert_eq!(s.flow(1.0, 0.0, 5.0), Ok(0.0));
        let v = s.flow(1.0, 0.5, 1.0).unwrap();
        let w = 10.0 + (2.0 - 10.0) * 0.1f64.exp();
        // 40-digit values of the closed form
        assert!((w - 1.158632655394819).abs() < 1e-14);
        assert!((v - 0.8630863245082948).abs() < 1e-14);
        assert!((s.flow(0.0, 0.3, 2.0).unwrap() - 0.3 * (-0.2f64).exp()).abs() < 1e-15);
        for (u, v0, tau) in [(1.0, 0.5, 1.0), (0.4, 0.9, 2.0), (0.3, 0.2, -1.0)] {
            let r = scalar_reference(|v| u * v * v - 0.1 * v, v0, tau);
            assert!((s.flow(u, v0, tau).unwrap() - r).abs() < 1e-10);
        }
    }

    #[test]
    fn riccati_blow_up_is_reported() {
        let mut s = RiccatiReactionExact { a: 0.04, b: 0.06 };
        // w = 10 − 9 e^{0.1 τ} vanishes at τ = 10 ln(10/9)
        match s.flow(1.0, 1.0, 5.0) {
            Err(t) => assert!((t - 10.0 * (10.0f64 / 9.0).ln()).abs() < 1e-12),
            Ok(v) => panic!("expected blow-up, got {v}"),
        }
        let mut y = [1.0, 1.0];
        assert!(matches!(s.evolve(2.0, 7.0, &mut y), Err(Error::BlowUp { .. })));
    }

    #[test]
    fn partitions_sum_to_full_rhs() {
        let gs = GrayScott::new(16).unwrap();
        let y = gs.initial_condition();
        let n = y.len();
        let mut total = vec![0.0; n];
        let mut part = vec![0.0; n];
        for sys in [gs.diffusion(), gs.linear_reaction(), gs.riccati_reaction()] {
            sys.rhs(0.0, &y, &mut part).unwrap();
            crate::vector::axpy(1.0, &part, &mut total);
        }
        let mut full = vec![0.0; n];
        gs.full().rhs(0.0, &y, &mut full).unwrap();
        for (a, b) in total.iter().zip(&full) {
            assert!((a - b).abs() < 1e-13);
        }
    }

    #[test]
    fn initial_bumps() {
        let gs = GrayScott::new(64).unwrap();
        let y = gs.initial_condition();
        let max_v = y[gs.cells()..].iter().cloned().fold(0.0, f64::max);
        let min_u = y[..gs.cells()].iter().cloned().fold(1.0, f64::min);
        assert!(max_v > 0.8 && max_v <= 1.0);
        assert!((0.0..0.2).contains(&min_u));
    }
}
