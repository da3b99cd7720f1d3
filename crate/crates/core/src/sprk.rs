//! Symplectic partitioned Runge–Kutta methods for separable Hamiltonians
//! `H(p, q) = T(p) + V(q)`, with `p' = f1(t, q) = −∂V/∂q` and
//! `q' = f2(t, p) = ∂T/∂p`.
//!
//! Two formulations are provided. The standard one updates `P` and `Q`
//! stage by stage. The increment one builds `ΔP`, `ΔQ` from the step's base
//! state and adds them with compensated summation, which keeps roundoff
//! from accumulating over very long runs.

use crate::error::{check_dim, Error, Result};

/// A separable Hamiltonian system.
pub trait SeparableHamiltonian {
    fn dim_p(&self) -> usize;
    fn dim_q(&self) -> usize;
    /// `f1(t, q) = −∂V/∂q`, the time derivative of `p`.
    fn force(&self, t: f64, q: &[f64], out: &mut [f64]) -> Result<()>;
    /// `f2(t, p) = ∂T/∂p`, the time derivative of `q`.
    fn velocity(&self, t: f64, p: &[f64], out: &mut [f64]) -> Result<()>;
    /// `H(p, q)` when known.
    fn energy(&self, _p: &[f64], _q: &[f64]) -> Option<f64> {
        None
    }
}

/// `H = ω (p² + q²) / 2` in one degree of freedom.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HarmonicOscillator {
    pub omega: f64,
}

impl Default for HarmonicOscillator {
    fn default() -> Self {
        Self { omega: 1.0 }
    }
}

impl SeparableHamiltonian for HarmonicOscillator {
    fn dim_p(&self) -> usize {
        1
    }
    fn dim_q(&self) -> usize {
        1
    }
    fn force(&self, _t: f64, q: &[f64], out: &mut [f64]) -> Result<()> {
        out[0] = -self.omega * q[0];
        Ok(())
    }
    fn velocity(&self, _t: f64, p: &[f64], out: &mut [f64]) -> Result<()> {
        out[0] = self.omega * p[0];
        Ok(())
    }
    fn energy(&self, p: &[f64], q: &[f64]) -> Option<f64> {
        Some(0.5 * self.omega * (p[0] * p[0] + q[0] * q[0]))
    }
}

/// Separable system built from two closures.
pub struct FnHamiltonian<F1, F2> {
    pub dim_p: usize,
    pub dim_q: usize,
    pub force: F1,
    pub velocity: F2,
}

impl<F1, F2> SeparableHamiltonian for FnHamiltonian<F1, F2>
where
    F1: Fn(f64, &[f64], &mut [f64]),
    F2: Fn(f64, &[f64], &mut [f64]),
{
    fn dim_p(&self) -> usize {
        self.dim_p
    }
    fn dim_q(&self) -> usize {
        self.dim_q
    }
    fn force(&self, t: f64, q: &[f64], out: &mut [f64]) -> Result<()> {
        (self.force)(t, q, out);
        Ok(())
    }
    fn velocity(&self, t: f64, p: &[f64], out: &mut [f64]) -> Result<()> {
        (self.velocity)(t, p, out);
        Ok(())
    }
}

/// Stage weights `a` (drifts, applied to `f2`) and `â` (kicks, applied to
/// `f1`). Stage times are the inclusive prefix sums of each.
#[derive(Debug, Clone, PartialEq)]
pub struct SprkCoefficients {
    pub a: Vec<f64>,
    pub a_hat: Vec<f64>,
    pub order: usize,
}

impl SprkCoefficients {
    pub fn new(a: Vec<f64>, a_hat: Vec<f64>, order: usize) -> Result<Self> {
        check_dim(a.len(), a_hat.len())?;
        if a.is_empty() {
            return Err(Error::invalid("at least one stage is required"));
        }
        let sa: f64 = a.iter().sum();
        let sh: f64 = a_hat.iter().sum();
        if (sa - 1.0).abs() > 1e-12 || (sh - 1.0).abs() > 1e-12 {
            return Err(Error::invalid("SPRK weights must each sum to 1"));
        }
        Ok(Self { a, a_hat, order })
    }

    pub fn stages(&self) -> usize {
        self.a.len()
    }

    /// `c_i = Σ_{j≤i} a_j`.
    pub fn c(&self) -> Vec<f64> {
        prefix(&self.a)
    }

    /// `ĉ_i = Σ_{j≤i} â_j`.
    pub fn c_hat(&self) -> Vec<f64> {
        prefix(&self.a_hat)
    }
}

fn prefix(w: &[f64]) -> Vec<f64> {
    w.iter()
        .scan(0.0, |acc, x| {
            *acc += x;
            Some(*acc)
        })
        .collect()
}

/// Built-in methods of orders 1 to 4.
///
/// 1: symplectic Euler. 2: velocity Verlet. 3: Ruth's three-stage method.
/// 4: the Forest–Ruth / Candy–Rozmus composition.
pub fn builtin_sprk(order: usize) -> Result<SprkCoefficients> {
    match order {
        1 => SprkCoefficients::new(vec![1.0], vec![1.0], 1),
        2 => SprkCoefficients::new(vec![1.0, 0.0], vec![0.5, 0.5], 2),
        3 => SprkCoefficients::new(
            vec![2.0 / 3.0, -2.0 / 3.0, 1.0],
            vec![7.0 / 24.0, 3.0 / 4.0, -1.0 / 24.0],
            3,
        ),
        4 => {
            let x = 2f64.cbrt();
            let outer = (2.0 + x + 1.0 / x) / 6.0;
            let inner = (1.0 - x - 1.0 / x) / 6.0;
            let k = 1.0 / (2.0 - x);
            SprkCoefficients::new(
                vec![outer, inner, inner, outer],
                vec![0.0, k, 1.0 / (1.0 - x * x), k],
                4,
            )
        }
        _ => Err(Error::invalid(format!(
            "no built-in SPRK method of order {order} (available: 1-4)"
        ))),
    }
}

/// Running sum with a correction term (Kahan–Babuška–Neumaier), so that
/// small increments are not lost against a large total.
#[derive(Debug, Clone, PartialEq)]
pub struct CompensatedAccumulator {
    value: Vec<f64>,
    compensation: Vec<f64>,
}

impl CompensatedAccumulator {
    pub fn new(initial: &[f64]) -> Self {
        Self {
            value: initial.to_vec(),
            compensation: vec![0.0; initial.len()],
        }
    }

    pub fn len(&self) -> usize {
        self.value.len()
    }

    pub fn is_empty(&self) -> bool {
        self.value.is_empty()
    }

    pub fn add(&mut self, delta: &[f64]) {
        for ((s, c), &x) in self.value.iter_mut().zip(&mut self.compensation).zip(delta) {
            let t = *s + x;
            if s.abs() >= x.abs() {
                *c += (*s - t) + x;
            } else {
                *c += (x - t) + *s;
            }
            *s = t;
        }
    }

    /// The compensated total.
    pub fn total(&self) -> Vec<f64> {
        self.value.iter().zip(&self.compensation).map(|(s, c)| s + c).collect()
    }

    pub fn total_into(&self, out: &mut [f64]) {
        for ((o, s), c) in out.iter_mut().zip(&self.value).zip(&self.compensation) {
            *o = s + c;
        }
    }

    /// Raw running sum without the correction.
    pub fn raw(&self) -> &[f64] {
        &self.value
    }

    pub fn compensation(&self) -> &[f64] {
        &self.compensation
    }
}

fn check_dims(sys: &dyn SeparableHamiltonian, p: usize, q: usize) -> Result<()> {
    check_dim(sys.dim_p(), p)?;
    check_dim(sys.dim_q(), q)
}

/// One step of the standard formulation, in place:
/// `P_i = P_{i-1} + h â_i f1(t + ĉ_i h, Q_i)`,
/// `Q_{i+1} = Q_i + h a_i f2(t + c_i h, P_i)`.
pub fn sprk_step_standard(
    coeffs: &SprkCoefficients,
    sys: &dyn SeparableHamiltonian,
    t: f64,
    p: &mut [f64],
    q: &mut [f64],
    h: f64,
) -> Result<()> {
    check_dims(sys, p.len(), q.len())?;
    let mut fp = vec![0.0; p.len()];
    let mut fq = vec![0.0; q.len()];
    let (mut c, mut ch) = (0.0, 0.0);
    for (&ai, &ahi) in coeffs.a.iter().zip(&coeffs.a_hat) {
        c += ai;
        ch += ahi;
        if ahi != 0.0 {
            sys.force(t + ch * h, q, &mut fp)?;
            crate::vector::axpy(h * ahi, &fp, p);
        }
        if ai != 0.0 {
            sys.velocity(t + c * h, p, &mut fq)?;
            crate::vector::axpy(h * ai, &fq, q);
        }
    }
    Ok(())
}

/// One step of the increment formulation. The state lives in the two
/// accumulators; increments are formed from the step's base state and added
/// with compensated summation.
pub fn sprk_step_increment(
    coeffs: &SprkCoefficients,
    sys: &dyn SeparableHamiltonian,
    t: f64,
    h: f64,
    acc_p: &mut CompensatedAccumulator,
    acc_q: &mut CompensatedAccumulator,
) -> Result<()> {
    check_dims(sys, acc_p.len(), acc_q.len())?;
    let p0 = acc_p.total();
    let q0 = acc_q.total();
    let (np, nq) = (p0.len(), q0.len());
    let mut dp = vec![0.0; np];
    let mut dq = vec![0.0; nq];
    let mut stage = vec![0.0; np.max(nq)];
    let mut fp = vec![0.0; np];
    let mut fq = vec![0.0; nq];
    let (mut c, mut ch) = (0.0, 0.0);
    for (&ai, &ahi) in coeffs.a.iter().zip(&coeffs.a_hat) {
        c += ai;
        ch += ahi;
        if ahi != 0.0 {
            for i in 0..nq {
                stage[i] = q0[i] + dq[i];
            }
            sys.force(t + ch * h, &stage[..nq], &mut fp)?;
            crate::vector::axpy(h * ahi, &fp, &mut dp);
        }
        if ai != 0.0 {
            for i in 0..np {
                stage[i] = p0[i] + dp[i];
            }
            sys.velocity(t + c * h, &stage[..np], &mut fq)?;
            crate::vector::axpy(h * ai, &fq, &mut dq);
        }
    }
    acc_p.add(&dp);
    acc_q.add(&dq);
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SprkForm {
    Standard,
    Increment,
}

/// Fixed-step integration over `steps` steps of size `h`. `observe` is
/// called after every step with `(step, t, p, q)`.
#[allow(clippy::too_many_arguments)]
pub fn sprk_evolve(
    coeffs: &SprkCoefficients,
    sys: &dyn SeparableHamiltonian,
    form: SprkForm,
    t0: f64,
    h: f64,
    steps: usize,
    p0: &[f64],
    q0: &[f64],
    mut observe: impl FnMut(usize, f64, &[f64], &[f64]),
) -> Result<(Vec<f64>, Vec<f64>)> {
    check_dims(sys, p0.len(), q0.len())?;
    let mut p = p0.to_vec();
    let mut q = q0.to_vec();
    match form {
        SprkForm::Standard => {
            for k in 0..steps {
                sprk_step_standard(coeffs, sys, t0 + k as f64 * h, &mut p, &mut q, h)?;
                observe(k + 1, t0 + (k + 1) as f64 * h, &p, &q);
            }
        }
        SprkForm::Increment => {
            let mut ap = CompensatedAccumulator::new(p0);
            let mut aq = CompensatedAccumulator::new(q0);
            for k in 0..steps {
                sprk_step_increment(coeffs, sys, t0 + k as f64 * h, h, &mut ap, &mut aq)?;
                ap.total_into(&mut p);
                aq.total_into(&mut q);
                observe(k + 1, t0 + (k + 1) as f64 * h, &p, &q);
            }
        }
    }
    crate::error::check_finite(&p, "SPRK momentum")?;
    crate::error::check_finite(&q, "SPRK position")?;
    Ok((p, q))
}

/// The 2×2 one-step map of a method on the unit harmonic oscillator, as
/// `[[∂p'/∂p, ∂p'/∂q], [∂q'/∂p, ∂q'/∂q]]`.
pub fn oscillator_step_matrix(coeffs: &SprkCoefficients, h: f64) -> Result<[[f64; 2]; 2]> {
    let sys = HarmonicOscillator::default();
    let mut m = [[0.0; 2]; 2];
    for (col, (p0, q0)) in [(1.0, 0.0), (0.0, 1.0)].into_iter().enumerate() {
        let (mut p, mut q) = ([p0], [q0]);
        sprk_step_standard(coeffs, &sys, 0.0, &mut p, &mut q, h)?;
        m[0][col] = p[0];
        m[1][col] = q[0];
    }
    Ok(m)
}

/// Quadratic form `x' S x` left invariant by a 2×2 map `M` with unit
/// determinant: `S = [[c, (d − a)/2], [(d − a)/2, −b]]` for `M = [[a, b], [c, d]]`.
/// For a symplectic method on the oscillator this is the exactly conserved
/// modified energy (up to scale), so its drift measures roundoff alone.
pub fn invariant_form(m: &[[f64; 2]; 2], p: f64, q: f64) -> f64 {
    let (a, b, c, d) = (m[0][0], m[0][1], m[1][0], m[1][1]);
    c * p * p + (d - a) * p * q - b * q * q
}
