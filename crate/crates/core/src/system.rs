//! Right-hand-side abstractions: `y' = f(t, y)` and its additive partitions.

use crate::error::{Error, Result};

/// A first-order ODE system `y' = f(t, y)` of fixed dimension.
pub trait OdeSystem {
    fn dimension(&self) -> usize;

    /// Writes `f(t, y)` into `dydt`.
    fn rhs(&self, t: f64, y: &[f64], dydt: &mut [f64]) -> Result<()>;
}

impl<S: OdeSystem + ?Sized> OdeSystem for &S {
    fn dimension(&self) -> usize {
        (**self).dimension()
    }
    fn rhs(&self, t: f64, y: &[f64], dydt: &mut [f64]) -> Result<()> {
        (**self).rhs(t, y, dydt)
    }
}

impl<S: OdeSystem + ?Sized> OdeSystem for Box<S> {
    fn dimension(&self) -> usize {
        (**self).dimension()
    }
    fn rhs(&self, t: f64, y: &[f64], dydt: &mut [f64]) -> Result<()> {
        (**self).rhs(t, y, dydt)
    }
}

impl<S: OdeSystem + ?Sized> OdeSystem for std::rc::Rc<S> {
    fn dimension(&self) -> usize {
        (**self).dimension()
    }
    fn rhs(&self, t: f64, y: &[f64], dydt: &mut [f64]) -> Result<()> {
        (**self).rhs(t, y, dydt)
    }
}

/// Closure-backed system.
///
/// ```
/// use chronos::system::{FnSystem, OdeSystem};
/// let decay = FnSystem::new(1, |_t, y: &[f64], dy: &mut [f64]| dy[0] = -y[0]);
/// let mut dy = [0.0];
/// decay.rhs(0.0, &[2.0], &mut dy).unwrap();
/// assert_eq!(dy[0], -2.0);
/// ```
pub struct FnSystem<F> {
    dim: usize,
    f: F,
}

impl<F> FnSystem<F>
where
    F: Fn(f64, &[f64], &mut [f64]),
{
    pub fn new(dim: usize, f: F) -> Self {
        Self { dim, f }
    }
}

impl<F> OdeSystem for FnSystem<F>
where
    F: Fn(f64, &[f64], &mut [f64]),
{
    fn dimension(&self) -> usize {
        self.dim
    }

    fn rhs(&self, t: f64, y: &[f64], dydt: &mut [f64]) -> Result<()> {
        (self.f)(t, y, dydt);
        Ok(())
    }
}

/// `y' = f_1(t, y) + ... + f_P(t, y)` with `P >= 2`.
pub struct PartitionedOdeSystem {
    dim: usize,
    partitions: Vec<Box<dyn OdeSystem>>,
}

impl PartitionedOdeSystem {
    pub fn new(partitions: Vec<Box<dyn OdeSystem>>) -> Result<Self> {
        if partitions.len() < 2 {
            return Err(Error::invalid("a partitioned system needs at least two partitions"));
        }
        let dim = partitions[0].dimension();
        for p in &partitions {
            crate::error::check_dim(dim, p.dimension())?;
        }
        Ok(Self { dim, partitions })
    }

    pub fn num_partitions(&self) -> usize {
        self.partitions.len()
    }

    pub fn partition(&self, k: usize) -> &dyn OdeSystem {
        self.partitions[k].as_ref()
    }

    pub fn into_partitions(self) -> Vec<Box<dyn OdeSystem>> {
        self.partitions
    }
}

/// The full right-hand side is the sum of the partitions.
impl OdeSystem for PartitionedOdeSystem {
    fn dimension(&self) -> usize {
        self.dim
    }

    fn rhs(&self, t: f64, y: &[f64], dydt: &mut [f64]) -> Result<()> {
        let mut tmp = vec![0.0; self.dim];
        dydt.fill(0.0);
        for p in &self.partitions {
            p.rhs(t, y, &mut tmp)?;
            crate::vector::axpy(1.0, &tmp, dydt);
        }
        Ok(())
    }
}

/// Wraps a system and counts right-hand-side evaluations.
pub struct Counted<S> {
    pub inner: S,
    count: std::cell::Cell<usize>,
}

impl<S> Counted<S> {
    pub fn new(inner: S) -> Self {
        Self {
            inner,
            count: std::cell::Cell::new(0),
        }
    }

    pub fn evaluations(&self) -> usize {
        self.count.get()
    }
}

impl<S: OdeSystem> OdeSystem for Counted<S> {
    fn dimension(&self) -> usize {
        self.inner.dimension()
    }

    fn rhs(&self, t: f64, y: &[f64], dydt: &mut [f64]) -> Result<()> {
        self.count.set(self.count.get() + 1);
        self.inner.rhs(t, y, dydt)
    }
}
