use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};

const CONSISTENCY_TOL: f64 = 1e-12;

/// The `(α, β)` description of an operator-splitting method.
///
/// `β` has shape `r × (s+1) × P`: sequential method `i` evolves partition `k`
/// during stage `j` over `[t + β[i][j][k] h, t + β[i][j+1][k] h]`, and the
/// step result is `Σ_i α_i y_i`.
#[derive(Debug, Clone, PartialEq)]
pub struct SplittingCoefficients {
    name: String,
    r: usize,
    s: usize,
    p: usize,
    alpha: Vec<f64>,
    beta: Vec<f64>,
    order: usize,
}

impl SplittingCoefficients {
    /// Builds and validates a coefficient set; `beta` is indexed `[i][j][k]`.
    pub fn new(name: impl Into<String>, alpha: Vec<f64>, beta: Vec<Vec<Vec<f64>>>, order: usize) -> Result<Self> {
        let r = alpha.len();
        if r == 0 || beta.len() != r {
            return Err(Error::invalid("alpha and beta must describe the same, nonzero number of sequential methods"));
        }
        let s = beta[0].len().checked_sub(1).filter(|&s| s > 0).ok_or_else(|| Error::invalid("at least one stage is required"))?;
        let p = beta[0][0].len();
        if p == 0 {
            return Err(Error::invalid("at least one partition is required"));
        }
        let mut flat = Vec::with_capacity(r * (s + 1) * p);
        for bi in &beta {
            if bi.len() != s + 1 || bi.iter().any(|row| row.len() != p) {
                return Err(Error::invalid("beta must have shape r x (s+1) x P"));
            }
            for row in bi {
                flat.extend_from_slice(row);
            }
        }
        Self::from_flat(name.into(), r, s, p, alpha, flat, order)
    }

    fn from_flat(name: String, r: usize, s: usize, p: usize, alpha: Vec<f64>, beta: Vec<f64>, order: usize) -> Result<Self> {
        let c = Self { name, r, s, p, alpha, beta, order };
        c.validate()?;
        Ok(c)
    }

    /// Checks the three consistency invariants.
    pub fn validate(&self) -> Result<()> {
        if self.alpha.iter().chain(&self.beta).any(|v| !v.is_finite()) {
            return Err(Error::invalid("splitting coefficients must be finite"));
        }
        for i in 0..self.r {
            for k in 0..self.p {
                if self.beta(i, 0, k) != 0.0 {
                    return Err(Error::invalid(format!("beta[{i}][0][{k}] must be 0")));
                }
            }
        }
        let sum: f64 = self.alpha.iter().sum();
        if (sum - 1.0).abs() > CONSISTENCY_TOL {
            return Err(Error::invalid(format!("alpha sums to {sum}, not 1")));
        }
        for k in 0..self.p {
            let reach: f64 = (0..self.r).map(|i| self.alpha[i] * self.beta(i, self.s, k)).sum();
            if (reach - 1.0).abs() > CONSISTENCY_TOL {
                return Err(Error::invalid(format!(
                    "partition {k} is advanced by a total of {reach} steps, not 1"
                )));
            }
        }
        Ok(())
    }

    pub fn name(&self) -> &str {
        &self.name
    }
    pub fn sequential_methods(&self) -> usize {
        self.r
    }
    pub fn stages(&self) -> usize {
        self.s
    }
    pub fn partitions(&self) -> usize {
        self.p
    }
    pub fn order(&self) -> usize {
        self.order
    }
    pub fn alpha(&self) -> &[f64] {
        &self.alpha
    }

    /// `β[i][j][k]` with `j` in `0..=s`.
    pub fn beta(&self, i: usize, j: usize, k: usize) -> f64 {
        self.beta[(i * (self.s + 1) + j) * self.p + k]
    }

    /// `γ[i][j][k] = β[i][j+1][k] − β[i][j][k]`, the signed fraction of the
    /// step taken by that subintegration.
    pub fn gamma(&self, i: usize, j: usize, k: usize) -> f64 {
        self.beta(i, j + 1, k) - self.beta(i, j, k)
    }

    /// The nonzero subintegrations of sequential method `i`, in execution
    /// order, as `(partition, fraction)`.
    pub fn flows(&self, i: usize) -> Vec<(usize, f64)> {
        let mut out = Vec::new();
        for j in 0..self.s {
            for k in 0..self.p {
                let g = self.gamma(i, j, k);
                if g != 0.0 {
                    out.push((k, g));
                }
            }
        }
        out
    }

    /// A single sequential method from flows applied in order. Adjacent
    /// flows of the same partition are merged; a new stage begins whenever a
    /// partition does not come after the previous one.
    pub fn from_flows(name: impl Into<String>, partitions: usize, flows: &[(usize, f64)], order: usize) -> Result<Self> {
        if partitions == 0 {
            return Err(Error::invalid("at least one partition is required"));
        }
        let mut merged: Vec<(usize, f64)> = Vec::new();
        for &(k, g) in flows {
            if k >= partitions {
                return Err(Error::IndexOutOfRange { index: k, len: partitions });
            }
            match merged.last_mut() {
                Some((last, acc)) if *last == k => *acc += g,
                _ => merged.push((k, g)),
            }
            if merged.last().is_some_and(|&(_, acc)| acc == 0.0) {
                merged.pop();
            }
        }
        let mut rows: Vec<Vec<f64>> = vec![vec![0.0; partitions]];
        let mut last_k: Option<usize> = None;
        for (k, g) in merged {
            if last_k.is_none_or(|lk| k <= lk) {
                let prev = rows.last().cloned().unwrap_or_default();
                rows.push(prev);
            }
            let row = rows.last_mut().expect("a stage row exists");
            row[k] += g;
            last_k = Some(k);
        }
        if rows.len() == 1 {
            rows.push(rows[0].clone());
        }
        Self::new(name, vec![1.0], vec![rows], order)
    }

    /// Parses the text format: a header `r s P order`, then the `r` values of
    /// α, then the `r (s+1) P` values of β in `(i, j, k)` row-major order.
    /// Whitespace (including newlines) separates values; `#` starts a comment.
    pub fn parse(text: &str) -> Result<Self> {
        let mut tokens = text
            .lines()
            .map(|l| l.split('#').next().unwrap_or(""))
            .flat_map(str::split_whitespace);
        let mut int = |what: &str| -> Result<usize> {
            let tok = tokens.next().ok_or_else(|| Error::Parse(format!("missing {what}")))?;
            tok.parse().map_err(|_| Error::Parse(format!("bad {what}: {tok:?}")))
        };
        let (r, s, p, order) = (int("r")?, int("s")?, int("P")?, int("order")?);
        if r == 0 || s == 0 || p == 0 {
            return Err(Error::Parse("r, s and P must be positive".into()));
        }
        let mut real = |what: &str| -> Result<f64> {
            let tok = tokens.next().ok_or_else(|| Error::Parse(format!("missing {what}")))?;
            tok.parse().map_err(|_| Error::Parse(format!("bad {what}: {tok:?}")))
        };
        let alpha = (0..r).map(|_| real("alpha value")).collect::<Result<Vec<_>>>()?;
        let beta = (0..r * (s + 1) * p).map(|_| real("beta value")).collect::<Result<Vec<_>>>()?;
        if let Some(extra) = tokens.next() {
            return Err(Error::Parse(format!("unexpected trailing value {extra:?}")));
        }
        Self::from_flat("custom".into(), r, s, p, alpha, beta, order)
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let mut c = Self::parse(&std::fs::read_to_string(path)?)?;
        if let Some(stem) = path.file_stem().and_then(|s| s.to_str()) {
            c.name = stem.to_string();
        }
        Ok(c)
    }

    /// Inverse of [`parse`](Self::parse), with round-trip precision.
    pub fn to_text(&self) -> String {
        let mut out = format!("{} {} {} {}\n", self.r, self.s, self.p, self.order);
        let join = |v: &[f64]| v.iter().map(|x| format!("{x:?}")).collect::<Vec<_>>().join(" ");
        let _ = writeln!(out, "{}", join(&self.alpha));
        for row in self.beta.chunks(self.p) {
            let _ = writeln!(out, "{}", join(row));
        }
        out
    }

    pub fn to_file(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }
}

fn require_partitions(p: usize) -> Result<()> {
    if p < 2 {
        return Err(Error::invalid(format!("splitting needs at least 2 partitions, got {p}")));
    }
    Ok(())
}

/// Lie–Trotter: each partition over the full step, `1` through `P`.
pub fn lie_trotter(p: usize) -> Result<SplittingCoefficients> {
    require_partitions(p)?;
    SplittingCoefficients::new("lie-trotter", vec![1.0], vec![vec![vec![0.0; p], vec![1.0; p]]], 1)
}

/// Lie–Trotter flows scaled by `w`: partitions `1..P`.
fn forward(p: usize, w: f64) -> impl Iterator<Item = (usize, f64)> {
    (0..p).map(move |k| (k, w))
}

/// The adjoint of Lie–Trotter scaled by `w`: partitions `P..1`.
fn backward(p: usize, w: f64) -> impl Iterator<Item = (usize, f64)> {
    (0..p).rev().map(move |k| (k, w))
}

/// Strang–Marchuk: half steps of partitions `1..P−1` around a full step of
/// partition `P`.
pub fn strang(p: usize) -> Result<SplittingCoefficients> {
    require_partitions(p)?;
    let flows: Vec<_> = forward(p, 0.5).chain(backward(p, 0.5)).collect();
    SplittingCoefficients::from_flows("strang", p, &flows, 2)
}

/// Parallel (additive) splitting: `P` independent single-partition methods
/// plus a do-nothing method weighted `1 − P`.
pub fn parallel(p: usize) -> Result<SplittingCoefficients> {
    require_partitions(p)?;
    let mut alpha = vec![1.0; p];
    alpha.push(1.0 - p as f64);
    let beta = (0..=p)
        .map(|i| {
            let end = (0..p).map(|k| if k == i { 1.0 } else { 0.0 }).collect();
            vec![vec![0.0; p], end]
        })
        .collect();
    SplittingCoefficients::new("parallel", alpha, beta, 1)
}

/// Lie–Trotter/adjoint weights `(α, β)` of a third-order composition
/// `Φ*_{β₃} Φ_{α₃} Φ*_{β₂} Φ_{α₂} Φ*_{β₁} Φ_{α₁}`. For `P = 2` this is
/// Ruth's method.
const ORDER3_WEIGHTS: [(f64, f64); 3] = [(7.0 / 24.0, 3.0 / 8.0), (3.0 / 8.0, -25.0 / 24.0), (1.0, 0.0)];

/// A third-order, real-coefficient splitting for any `P ≥ 2`.
pub fn third_order(p: usize) -> Result<SplittingCoefficients> {
    require_partitions(p)?;
    let flows: Vec<_> = ORDER3_WEIGHTS
        .iter()
        .flat_map(|&(a, b)| forward(p, a).chain(backward(p, b)))
        .collect();
    SplittingCoefficients::from_flows("order-3", p, &flows, 3)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CompositionScheme {
    TripleJump,
    QuintupleJump,
}

impl CompositionScheme {
    /// Substep weights raising a symmetric method of even order `p` to `p + 2`.
    pub fn weights(self, p: usize) -> Vec<f64> {
        let root = 1.0 / (p as f64 + 1.0);
        match self {
            Self::TripleJump => {
                let g = 1.0 / (2.0 - 2f64.powf(root));
                vec![g, 1.0 - 2.0 * g, g]
            }
            Self::QuintupleJump => {
                let g = 1.0 / (4.0 - 4f64.powf(root));
                vec![g, g, 1.0 - 4.0 * g, g, g]
            }
        }
    }
}

/// Symmetric composition of `base` raising its order by two. The base must
/// be a single sequential method of even order.
pub fn compose(base: &SplittingCoefficients, scheme: CompositionScheme) -> Result<SplittingCoefficients> {
    let p = base.order();
    if p == 0 || p % 2 == 1 {
        return Err(Error::invalid(format!(
            "composition needs a symmetric base of even order, got order {p}"
        )));
    }
    if base.sequential_methods() != 1 {
        return Err(Error::invalid("composition needs a base with a single sequential method"));
    }
    let inner = base.flows(0);
    let flows: Vec<_> = scheme
        .weights(p)
        .into_iter()
        .flat_map(|w| inner.iter().map(move |&(k, g)| (k, w * g)))
        .collect();
    let tag = match scheme {
        CompositionScheme::TripleJump => "triple-jump",
        CompositionScheme::QuintupleJump => "quintuple-jump",
    };
    SplittingCoefficients::from_flows(format!("{tag}({})", base.name()), base.partitions(), &flows, p + 2)
}

/// Looks up a method by name: `lie-trotter`, `strang`, `parallel`,
/// `order-3`, `triple-jump-4`, `quintuple-jump-4`, `triple-jump-6`, or
/// `order-N` for `N` in `1, 2, 3, 4, 6`.
pub fn splitting_by_name(name: &str, p: usize) -> Result<SplittingCoefficients> {
    let tj = |c: &SplittingCoefficients| compose(c, CompositionScheme::TripleJump);
    match name {
        "lie-trotter" | "order-1" => lie_trotter(p),
        "strang" | "order-2" => strang(p),
        "parallel" => parallel(p),
        "order-3" => third_order(p),
        "triple-jump-4" | "order-4" => tj(&strang(p)?),
        "quintuple-jump-4" => compose(&strang(p)?, CompositionScheme::QuintupleJump),
        "triple-jump-6" | "order-6" => tj(&tj(&strang(p)?)?),
        _ => Err(Error::UnknownMethod(name.to_string())),
    }
}

/// The five default methods of orders 1, 2, 3, 4 and 6.
pub fn default_methods(p: usize) -> Result<Vec<SplittingCoefficients>> {
    ["order-1", "order-2", "order-3", "order-4", "order-6"]
        .iter()
        .map(|n| splitting_by_name(n, p))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lie_trotter_shape() {
        let c = lie_trotter(2).unwrap();
        assert_eq!((c.sequential_methods(), c.stages()), (1, 1));
        assert_eq!((c.beta(0, 1, 0), c.beta(0, 1, 1)), (1.0, 1.0));
        assert_eq!(c.alpha(), &[1.0]);
    }

    #[test]
    fn strang_shape() {
        let c = strang(2).unwrap();
        assert_eq!(c.stages(), 2);
        let col = |k| (0..=2).map(|j| c.beta(0, j, k)).collect::<Vec<_>>();
        assert_eq!(col(0), vec![0.0, 0.5, 1.0]);
        assert_eq!(col(1), vec![0.0, 1.0, 1.0]);
        assert_eq!(strang(4).unwrap().flows(0).len(), 7);
    }

    #[test]
    fn parallel_shape() {
        let c = parallel(2).unwrap();
        assert_eq!(c.alpha(), &[1.0, 1.0, -1.0]);
        assert_eq!(c.flows(0), vec![(0, 1.0)]);
        assert_eq!(c.flows(1), vec![(1, 1.0)]);
        assert!(c.flows(2).is_empty());
    }

    #[test]
    fn triple_jump_weights() {
        let w = CompositionScheme::TripleJump.weights(2);
        assert!((w[0] - 1.351207191959657).abs() < 1e-14);
        assert!((w[1] + 1.702414383919315).abs() < 1e-14);
        assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-15);
        let q = CompositionScheme::QuintupleJump.weights(2);
        assert!((q.iter().sum::<f64>() - 1.0).abs() < 1e-15);
        let c = compose(&strang(2).unwrap(), CompositionScheme::TripleJump).unwrap();
        // the junction half steps of partition 1 merge
        assert_eq!(c.flows(0).len(), 7);
        assert_eq!(c.order(), 4);
    }

    #[test]
    fn every_builtin_is_consistent() {
        for p in 2..=4 {
            for name in ["lie-trotter", "strang", "parallel", "order-3", "order-4", "quintuple-jump-4", "order-6"] {
                splitting_by_name(name, p).unwrap().validate().unwrap();
            }
        }
    }

    #[test]
    fn rejects_bad_input() {
        assert!(lie_trotter(1).is_err());
        assert!(compose(&lie_trotter(2).unwrap(), CompositionScheme::TripleJump).is_err());
        assert!(compose(&third_order(2).unwrap(), CompositionScheme::QuintupleJump).is_err());
        assert!(SplittingCoefficients::new("x", vec![1.0], vec![vec![vec![0.0, 0.0], vec![1.0, 0.5]]], 1).is_err());
        assert!(SplittingCoefficients::new("x", vec![1.0], vec![vec![vec![0.1, 0.0], vec![1.0, 1.0]]], 1).is_err());
        assert!(splitting_by_name("order-5", 2).is_err());
    }

    #[test]
    fn ruth_coefficients_for_two_partitions() {
        let f = third_order(2).unwrap().flows(0);
        let expect = [(0, 7.0 / 24.0), (1, 2.0 / 3.0), (0, 0.75), (1, -2.0 / 3.0), (0, -1.0 / 24.0), (1, 1.0)];
        assert_eq!(f.len(), expect.len());
        for ((k, g), (ek, eg)) in f.iter().zip(expect) {
            assert_eq!(*k, ek);
            assert!((g - eg).abs() < 1e-15);
        }
    }

    #[test]
    fn text_round_trip() {
        for c in [parallel(3).unwrap(), splitting_by_name("order-6", 3).unwrap()] {
            let back = SplittingCoefficients::parse(&c.to_text()).unwrap();
            assert_eq!(back.alpha(), c.alpha());
            assert_eq!(back.beta, c.beta);
            assert_eq!(back.order(), c.order());
        }
        let lt = SplittingCoefficients::parse("1 1 2 1 # lie-trotter\n1\n0 0\n1 1\n").unwrap();
        assert_eq!(lt.beta, lie_trotter(2).unwrap().beta);
        assert!(matches!(SplittingCoefficients::parse("1 1 2 1\n1\n0 0\n1"), Err(Error::Parse(_))));
        assert!(matches!(SplittingCoefficients::parse("1 1 2 1\n1\n0 0 1 1 7"), Err(Error::Parse(_))));
    }
}
