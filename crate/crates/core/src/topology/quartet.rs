//! Four-point decisions with a margin.

use rayon::prelude::*;

use super::logdet::LogDetMetric;

/// A resolved quartet `{a, b} | {c, d}`, each pair sorted and the pairs ordered.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct QuartetSplit {
    pub left: (usize, usize),
    pub right: (usize, usize),
}

impl QuartetSplit {
    pub fn new(a: usize, b: usize, c: usize, d: usize) -> Self {
        let p = (a.min(b), a.max(b));
        let q = (c.min(d), c.max(d));
        if p <= q {
            QuartetSplit { left: p, right: q }
        } else {
            QuartetSplit { left: q, right: p }
        }
    }

    pub fn leaves(&self) -> [usize; 4] {
        [self.left.0, self.left.1, self.right.0, self.right.1]
    }

    pub fn contains(&self, x: usize) -> bool {
        self.leaves().contains(&x)
    }

    /// True when `x` and `y` sit on opposite sides.
    pub fn separates(&self, x: usize, y: usize) -> bool {
        let on_left = |z: usize| self.left.0 == z || self.left.1 == z;
        self.contains(x) && self.contains(y) && on_left(x) != on_left(y)
    }

    /// True when `x` and `y` form one side.
    pub fn pairs(&self, x: usize, y: usize) -> bool {
        let p = (x.min(y), x.max(y));
        self.left == p || self.right == p
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum QuartetDecision {
    Split(QuartetSplit),
    Undecided,
}

/// Decides `{a, b} | {c, d}` when `psi(a, b) + psi(c, d)` undercuts both other pairings by `2 delta`.
///
/// With `delta = 0` ties are left undecided.
pub fn four_point(q: [usize; 4], psi: impl Fn(usize, usize) -> f64, delta: f64) -> QuartetDecision {
    let [a, b, c, d] = q;
    let sums = [
        (psi(a, b) + psi(c, d), QuartetSplit::new(a, b, c, d)),
        (psi(a, c) + psi(b, d), QuartetSplit::new(a, c, b, d)),
        (psi(a, d) + psi(b, c), QuartetSplit::new(a, d, b, c)),
    ];
    if sums.iter().any(|s| !s.0.is_finite()) {
        return QuartetDecision::Undecided;
    }
    let winners: Vec<QuartetSplit> = (0..3)
        .filter(|&i| {
            let others = (0..3).filter(|&j| j != i).map(|j| sums[j].0).fold(f64::INFINITY, f64::min);
            sums[i].0 <= others - 2.0 * delta
        })
        .map(|i| sums[i].1)
        .collect();
    match winners.as_slice() {
        [one] => QuartetDecision::Split(*one),
        _ => QuartetDecision::Undecided,
    }
}

/// Outcome of deciding every quartet whose six pairs are short.
#[derive(Clone, Debug, PartialEq, Default)]
pub struct QuartetSet {
    pub decided: Vec<QuartetSplit>,
    pub undecided: usize,
}

/// Runs [`four_point`] on all 4-subsets of short pairs, in lexicographic order.
pub fn decide_short_quartets(metric: &LogDetMetric, delta_cap: f64, delta: f64) -> QuartetSet {
    let n = metric.n();
    let short = |a: usize, b: usize| metric.is_short(a, b, delta_cap);
    let mut subsets = Vec::new();
    for a in 1..=n {
        for b in a + 1..=n {
            if !short(a, b) {
                continue;
            }
            for c in b + 1..=n {
                if !(short(a, c) && short(b, c)) {
                    continue;
                }
                for d in c + 1..=n {
                    if short(a, d) && short(b, d) && short(c, d) {
                        subsets.push([a, b, c, d]);
                    }
                }
            }
        }
    }
    let decisions: Vec<QuartetDecision> = subsets
        .par_iter()
        .map(|&q| four_point(q, |x, y| metric.get(x, y), delta))
        .collect();
    let mut out = QuartetSet::default();
    for d in decisions {
        match d {
            QuartetDecision::Split(s) => out.decided.push(s),
            QuartetDecision::Undecided => out.undecided += 1,
        }
    }
    out
}
