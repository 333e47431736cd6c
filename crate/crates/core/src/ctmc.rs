//! Sparse CTMC generators and steady-state solvers.
//!
//! A generator is assembled with [`GeneratorBuilder`] and frozen into a CSR
//! [`SparseGenerator`] whose diagonal is the negated off-diagonal row sum.
//! Two solvers are provided: dense Gaussian elimination for small chains and
//! power iteration on the uniformized chain for larger ones. Both prune states
//! unreachable from a root state before solving.

use std::collections::VecDeque;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Default dimension cap of [`steady_state_direct`].
pub const DEFAULT_DIRECT_LIMIT: usize = 20_000;
/// Default iteration cap of [`steady_state_iterative`].
pub const DEFAULT_MAX_ITERATIONS: usize = 10_000_000;

const CLAMP_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CtmcError {
    #[error("state index {index} out of range for dimension {dimension}")]
    IndexOutOfRange { index: usize, dimension: usize },
    #[error("self-loop on state {0}")]
    SelfLoop(usize),
    #[error("rate {rate} from {from} to {to} is negative or not finite")]
    BadRate { from: usize, to: usize, rate: f64 },
    #[error("chain is reducible: {} reachable states cannot return to the root (first: {:?})", .states.len(), .states.first())]
    Reducible { states: Vec<usize> },
    #[error("singular system at pivot {0}")]
    Singular(usize),
    #[error("dimension {dimension} exceeds the direct-solve limit {limit}")]
    TooLarge { dimension: usize, limit: usize },
    #[error("power iteration did not converge in {iterations} iterations (last change {last_change:e})")]
    NotConverged { iterations: usize, last_change: f64 },
    #[error("solution has probability {value:e} at state {state}")]
    NegativeProbability { state: usize, value: f64 },
}

/// Collects transitions before freezing them into a [`SparseGenerator`].
#[derive(Debug, Clone)]
pub struct GeneratorBuilder {
    dimension: usize,
    entries: Vec<(usize, usize, f64)>,
}

impl GeneratorBuilder {
    pub fn new(dimension: usize) -> Self {
        Self { dimension, entries: Vec::new() }
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    /// Records `from -> to` at `rate`. Zero rates are discarded; duplicates are
    /// summed by [`GeneratorBuilder::finalize`].
    pub fn add_transition(&mut self, from: usize, to: usize, rate: f64) -> Result<(), CtmcError> {
        for index in [from, to] {
            if index >= self.dimension {
                return Err(CtmcError::IndexOutOfRange { index, dimension: self.dimension });
            }
        }
        if from == to {
            return Err(CtmcError::SelfLoop(from));
        }
        if !(rate.is_finite() && rate >= 0.0) {
            return Err(CtmcError::BadRate { from, to, rate });
        }
        if rate > 0.0 {
            self.entries.push((from, to, rate));
        }
        Ok(())
    }

    pub fn finalize(mut self) -> SparseGenerator {
        // stable: duplicates are summed in insertion order
        self.entries.sort_by_key(|&(r, c, _)| (r, c));
        let mut row_ptr = vec![0usize; self.dimension + 1];
        let mut cols = Vec::with_capacity(self.entries.len());
        let mut rates: Vec<f64> = Vec::with_capacity(self.entries.len());
        let mut last: Option<(usize, usize)> = None;
        for (r, c, rate) in self.entries {
            if last == Some((r, c)) {
                *rates.last_mut().unwrap() += rate;
            } else {
                cols.push(c);
                rates.push(rate);
                row_ptr[r + 1] += 1;
                last = Some((r, c));
            }
        }
        for i in 0..self.dimension {
            row_ptr[i + 1] += row_ptr[i];
        }
        let diagonal = (0..self.dimension)
            .map(|i| -rates[row_ptr[i]..row_ptr[i + 1]].iter().sum::<f64>())
            .collect();
        SparseGenerator { row_ptr, cols, rates, diagonal }
    }
}

/// Frozen generator in CSR form (off-diagonal entries only).
#[derive(Debug, Clone, PartialEq)]
pub struct SparseGenerator {
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    rates: Vec<f64>,
    diagonal: Vec<f64>,
}

impl SparseGenerator {
    pub fn dimension(&self) -> usize {
        self.diagonal.len()
    }

    pub fn nnz(&self) -> usize {
        self.rates.len()
    }

    /// Off-diagonal `(column, rate)` pairs of `row`, sorted by column.
    pub fn row(&self, row: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let span = self.row_ptr[row]..self.row_ptr[row + 1];
        self.cols[span.clone()].iter().copied().zip(self.rates[span].iter().copied())
    }

    pub fn diagonal(&self, row: usize) -> f64 {
        self.diagonal[row]
    }

    pub fn rate(&self, from: usize, to: usize) -> f64 {
        if from == to {
            return self.diagonal[from];
        }
        let span = self.row_ptr[from]..self.row_ptr[from + 1];
        match self.cols[span.clone()].binary_search(&to) {
            Ok(k) => self.rates[span.start + k],
            Err(_) => 0.0,
        }
    }

    pub fn exit_rate(&self, row: usize) -> f64 {
        -self.diagonal[row]
    }

    pub fn max_exit_rate(&self) -> f64 {
        self.diagonal.iter().fold(0.0, |m, &d| m.max(-d))
    }

    /// Every triple `(row, column, rate)` including the diagonal.
    pub fn triples(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.dimension()).flat_map(move |r| {
            let mut row: Vec<(usize, usize, f64)> = self.row(r).map(|(c, q)| (r, c, q)).collect();
            let pos = row.partition_point(|&(_, c, _)| c < r);
            row.insert(pos, (r, r, self.diagonal[r]));
            row
        })
    }

    /// Text dump for diffing: one `row column rate` line per nonzero entry in
    /// row-major order, rates with 17 significant digits.
    pub fn dump(&self) -> String {
        let mut out = String::new();
        for (r, c, q) in self.triples() {
            if q != 0.0 {
                writeln!(out, "{r} {c} {q:.16e}").unwrap();
            }
        }
        out
    }

    /// States reachable from `root`, as a membership mask.
    pub fn reachable_from(&self, root: usize) -> Vec<bool> {
        let mut seen = vec![false; self.dimension()];
        let mut queue = VecDeque::from([root]);
        seen[root] = true;
        while let Some(s) = queue.pop_front() {
            for (t, _) in self.row(s) {
                if !seen[t] {
                    seen[t] = true;
                    queue.push_back(t);
                }
            }
        }
        seen
    }

    /// States that can reach `root`.
    fn reaching(&self, root: usize) -> Vec<bool> {
        let n = self.dimension();
        let mut preds: Vec<Vec<usize>> = vec![Vec::new(); n];
        for r in 0..n {
            for (c, _) in self.row(r) {
                preds[c].push(r);
            }
        }
        let mut seen = vec![false; n];
        let mut queue = VecDeque::from([root]);
        seen[root] = true;
        while let Some(s) = queue.pop_front() {
            for &p in &preds[s] {
                if !seen[p] {
                    seen[p] = true;
                    queue.push_back(p);
                }
            }
        }
        seen
    }

    /// Row sums including the diagonal, accumulated in storage order.
    pub fn row_sums(&self) -> Vec<f64> {
        (0..self.dimension())
            .map(|r| self.row(r).map(|(_, q)| q).sum::<f64>() + self.diagonal[r])
            .collect()
    }

    /// `pi * Q`.
    pub fn left_multiply(&self, pi: &[f64]) -> Vec<f64> {
        let mut out: Vec<f64> = pi.iter().zip(&self.diagonal).map(|(p, d)| p * d).collect();
        for (r, &p) in pi.iter().enumerate() {
            if p != 0.0 {
                for (c, q) in self.row(r) {
                    out[c] += p * q;
                }
            }
        }
        out
    }

    /// Restriction to the states in `keep` (ascending), renumbered densely.
    fn restrict(&self, keep: &[usize]) -> SparseGenerator {
        let mut new_index = vec![usize::MAX; self.dimension()];
        for (i, &s) in keep.iter().enumerate() {
            new_index[s] = i;
        }
        let mut b = GeneratorBuilder::new(keep.len());
        for &s in keep {
            for (t, q) in self.row(s) {
                if new_index[t] != usize::MAX {
                    b.add_transition(new_index[s], new_index[t], q).expect("restriction preserves validity");
                }
            }
        }
        b.finalize()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SolverTag {
    Direct,
    Iterative,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SteadyStateDistribution {
    pub probabilities: Vec<f64>,
    /// Max-norm of `pi * Q`.
    pub residual_norm: f64,
    pub solver: SolverTag,
    /// Power-iteration steps taken; 0 for the direct solver.
    pub iterations: usize,
}

/// Max-norm of `pi * Q`.
pub fn residual(gen: &SparseGenerator, pi: &[f64]) -> f64 {
    gen.left_multiply(pi).iter().fold(0.0, |m, v| m.max(v.abs()))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DirectOptions {
    pub root: usize,
    pub limit: usize,
}

impl Default for DirectOptions {
    fn default() -> Self {
        Self { root: 0, limit: DEFAULT_DIRECT_LIMIT }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IterativeOptions {
    pub root: usize,
    /// Stop once successive iterates differ by less than this in max-norm.
    pub tol: f64,
    pub max_iterations: usize,
}

impl Default for IterativeOptions {
    fn default() -> Self {
        Self { root: 0, tol: 1e-13, max_iterations: DEFAULT_MAX_ITERATIONS }
    }
}

/// Reachable states from `root`, after checking that all of them return to it.
fn recurrent_class(gen: &SparseGenerator, root: usize) -> Result<Vec<usize>, CtmcError> {
    let n = gen.dimension();
    if root >= n {
        return Err(CtmcError::IndexOutOfRange { index: root, dimension: n });
    }
    let fwd = gen.reachable_from(root);
    let back = gen.reaching(root);
    let stuck: Vec<usize> = (0..n).filter(|&s| fwd[s] && !back[s]).collect();
    if !stuck.is_empty() {
        return Err(CtmcError::Reducible { states: stuck });
    }
    Ok((0..n).filter(|&s| fwd[s]).collect())
}

fn scatter(n: usize, keep: &[usize], values: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; n];
    for (&s, &v) in keep.iter().zip(values) {
        out[s] = v;
    }
    out
}

/// Clamps tiny negatives and renormalizes.
fn clean(mut pi: Vec<f64>) -> Result<Vec<f64>, CtmcError> {
    for (state, p) in pi.iter_mut().enumerate() {
        if *p < 0.0 {
            if *p < -CLAMP_TOLERANCE {
                return Err(CtmcError::NegativeProbability { state, value: *p });
            }
            *p = 0.0;
        }
    }
    let total: f64 = pi.iter().sum();
    pi.iter_mut().for_each(|p| *p /= total);
    Ok(pi)
}

/// Solves `pi Q = 0, sum(pi) = 1` by Gaussian elimination with partial
/// pivoting; the last balance equation is replaced by the normalization.
pub fn steady_state_direct(gen: &SparseGenerator, opts: DirectOptions) -> Result<SteadyStateDistribution, CtmcError> {
    let keep = recurrent_class(gen, opts.root)?;
    let n = keep.len();
    if n > opts.limit {
        return Err(CtmcError::TooLarge { dimension: n, limit: opts.limit });
    }
    let sub = gen.restrict(&keep);

    // Row i of A is balance equation i: sum_r pi_r Q[r][i] = 0, i.e. A = Q^T.
    let mut a = vec![0.0; n * n];
    for r in 0..n {
        a[r * n + r] = sub.diagonal(r);
        for (c, q) in sub.row(r) {
            a[c * n + r] = q;
        }
    }
    let mut b = vec![0.0; n];
    a[(n - 1) * n..].fill(1.0);
    b[n - 1] = 1.0;

    let x = gauss_solve(&mut a, &mut b, n)?;
    let pi = clean(x)?;
    let pi = scatter(gen.dimension(), &keep, &pi);
    let residual_norm = residual(gen, &pi);
    Ok(SteadyStateDistribution { probabilities: pi, residual_norm, solver: SolverTag::Direct, iterations: 0 })
}

/// In-place elimination on a row-major `n x n` matrix. Tracks each row's last
/// nonzero column so sparse rows stay cheap.
fn gauss_solve(a: &mut [f64], b: &mut [f64], n: usize) -> Result<Vec<f64>, CtmcError> {
    let mut extent: Vec<usize> = (0..n)
        .map(|r| (0..n).rev().find(|&c| a[r * n + c] != 0.0).unwrap_or(0))
        .collect();
    let scale = a.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    for k in 0..n {
        let pivot_row = (k..n)
            .max_by(|&i, &j| a[i * n + k].abs().total_cmp(&a[j * n + k].abs()))
            .unwrap();
        if a[pivot_row * n + k].abs() <= scale * 1e-15 {
            return Err(CtmcError::Singular(k));
        }
        if pivot_row != k {
            for c in 0..n {
                a.swap(k * n + c, pivot_row * n + c);
            }
            b.swap(k, pivot_row);
            extent.swap(k, pivot_row);
        }
        let pivot = a[k * n + k];
        let hi = extent[k];
        for i in k + 1..n {
            let factor = a[i * n + k] / pivot;
            if factor == 0.0 {
                continue;
            }
            let (upper, lower) = a.split_at_mut(i * n);
            let row_k = &upper[k * n + k..=k * n + hi];
            let row_i = &mut lower[k..=hi];
            for (x, y) in row_i.iter_mut().zip(row_k) {
                *x -= factor * y;
            }
            a[i * n + k] = 0.0;
            b[i] -= factor * b[k];
            extent[i] = extent[i].max(hi);
        }
    }
    let mut x = vec![0.0; n];
    for k in (0..n).rev() {
        let s: f64 = (k + 1..=extent[k].max(k)).map(|c| a[k * n + c] * x[c]).sum();
        x[k] = (b[k] - s) / a[k * n + k];
    }
    Ok(x)
}

/// Power iteration on `P = I + Q / L` with `L = 1.01 * max exit rate`, from the
/// uniform vector over the recurrent class.
pub fn steady_state_iterative(
    gen: &SparseGenerator,
    opts: IterativeOptions,
) -> Result<SteadyStateDistribution, CtmcError> {
    let keep = recurrent_class(gen, opts.root)?;
    let sub = gen.restrict(&keep);
    let n = keep.len();
    let lambda = 1.01 * sub.max_exit_rate();
    let mut pi = vec![1.0 / n as f64; n];
    if lambda == 0.0 {
        // single absorbing state
        let pi = scatter(gen.dimension(), &keep, &pi);
        return Ok(SteadyStateDistribution { probabilities: pi, residual_norm: 0.0, solver: SolverTag::Iterative, iterations: 0 });
    }
    let self_weight: Vec<f64> = (0..n).map(|r| 1.0 + sub.diagonal(r) / lambda).collect();
    let mut next = vec![0.0; n];
    let mut last_change = f64::INFINITY;
    for iteration in 1..=opts.max_iterations {
        for (x, (p, w)) in next.iter_mut().zip(pi.iter().zip(&self_weight)) {
            *x = p * w;
        }
        for (r, &p) in pi.iter().enumerate() {
            let flow = p / lambda;
            for (c, q) in sub.row(r) {
                next[c] += flow * q;
            }
        }
        let total: f64 = next.iter().sum();
        last_change = 0.0;
        for (x, p) in next.iter_mut().zip(&pi) {
            *x /= total;
            last_change = last_change.max((*x - p).abs());
        }
        std::mem::swap(&mut pi, &mut next);
        if last_change < opts.tol {
            let pi = clean(pi)?;
            let pi = scatter(gen.dimension(), &keep, &pi);
            let residual_norm = residual(gen, &pi);
            return Ok(SteadyStateDistribution {
                probabilities: pi,
                residual_norm,
                solver: SolverTag::Iterative,
                iterations: iteration,
            });
        }
    }
    Err(CtmcError::NotConverged { iterations: opts.max_iterations, last_change })
}

/// Which solver [`solve`] uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SolverChoice {
    /// Direct up to [`SolveOptions::auto_direct_max`] states, iterative above.
    #[default]
    Auto,
    Direct,
    Iterative,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolveOptions {
    pub method: SolverChoice,
    pub tol: f64,
    pub max_iterations: usize,
    pub direct_limit: usize,
    pub auto_direct_max: usize,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            method: SolverChoice::Auto,
            tol: 1e-13,
            max_iterations: DEFAULT_MAX_ITERATIONS,
            direct_limit: DEFAULT_DIRECT_LIMIT,
            auto_direct_max: 3_000,
        }
    }
}

/// Steady state of `gen` over the states reachable from `root`.
pub fn solve(gen: &SparseGenerator, root: usize, opts: &SolveOptions) -> Result<SteadyStateDistribution, CtmcError> {
    let direct = match opts.method {
        SolverChoice::Direct => true,
        SolverChoice::Iterative => false,
        SolverChoice::Auto => gen.dimension() <= opts.auto_direct_max,
    };
    if direct {
        steady_state_direct(gen, DirectOptions { root, limit: opts.direct_limit })
    } else {
        steady_state_iterative(gen, IterativeOptions { root, tol: opts.tol, max_iterations: opts.max_iterations })
    }
}
