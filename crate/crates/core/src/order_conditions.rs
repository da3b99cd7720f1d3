//! Runge–Kutta order conditions from rooted trees.
//!
//! Independent of the stepping code: a tableau `(A, b)` has order `p` iff
//! `Σ_i b_i Φ_i(τ) = 1/γ(τ)` for every rooted tree `τ` with at most `p` nodes.

use std::collections::BTreeSet;

/// A rooted tree in canonical form (children sorted).
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct Tree(pub Vec<Tree>);

impl Tree {
    pub fn order(&self) -> usize {
        1 + self.0.iter().map(Tree::order).sum::<usize>()
    }

    /// Tree density γ.
    pub fn density(&self) -> f64 {
        self.order() as f64 * self.0.iter().map(Tree::density).product::<f64>()
    }

    fn canonical(mut self) -> Tree {
        self.0 = self.0.into_iter().map(Tree::canonical).collect();
        self.0.sort();
        self
    }

    /// Every tree obtained by attaching one leaf to some node of `self`.
    fn grow(&self) -> Vec<Tree> {
        let mut out = vec![{
            let mut t = self.clone();
            t.0.push(Tree(Vec::new()));
            t.canonical()
        }];
        for (i, child) in self.0.iter().enumerate() {
            for grown in child.grow() {
                let mut t = self.clone();
                t.0[i] = grown;
                out.push(t.canonical());
            }
        }
        out
    }

    /// Stage-wise elementary weights Φ_i(τ).
    pub fn stage_weights(&self, a: &[Vec<f64>]) -> Vec<f64> {
        let s = a.len();
        let mut phi = vec![1.0; s];
        for child in &self.0 {
            let inner = child.stage_weights(a);
            for (i, p) in phi.iter_mut().enumerate() {
                *p *= (0..s).map(|j| a[i][j] * inner[j]).sum::<f64>();
            }
        }
        phi
    }
}

/// All rooted trees with exactly `n` nodes (1, 1, 2, 4, 9, 20, 48, ...).
pub fn trees_of_order(n: usize) -> Vec<Tree> {
    let mut level: BTreeSet<Tree> = BTreeSet::new();
    if n == 0 {
        return Vec::new();
    }
    level.insert(Tree(Vec::new()));
    for _ in 1..n {
        level = level.iter().flat_map(|t| t.grow()).collect();
    }
    level.into_iter().collect()
}

/// Largest residual `|b·Φ(τ) − 1/γ(τ)|` over all trees of each order `1..=p`.
pub fn residuals(a: &[Vec<f64>], b: &[f64], p: usize) -> Vec<f64> {
    (1..=p)
        .map(|n| {
            trees_of_order(n)
                .iter()
                .map(|t| {
                    let w: f64 = t.stage_weights(a).iter().zip(b).map(|(x, y)| x * y).sum();
                    (w - 1.0 / t.density()).abs()
                })
                .fold(0.0, f64::max)
        })
        .collect()
}

/// Highest `p <= max_order` for which every condition holds to `tol`.
pub fn achieved_order(a: &[Vec<f64>], b: &[f64], max_order: usize, tol: f64) -> usize {
    residuals(a, b, max_order)
        .iter()
        .take_while(|r| **r <= tol)
        .count()
}
