//! Sub-Markovian kernels, probability vectors, and the regenerative kernel.
//!
//! A sub-Markovian kernel `K` on states `{0..N-1}` has nonnegative entries
//! and row sums at most 1; the deficit `exit_mass(x) = 1 - Σ_y K(x,y)` is the
//! per-step absorption probability from `x`. For a probability vector `α`,
//! the regenerative kernel
//!
//! ```text
//! K_α(x,y) = K(x,y) + exit_mass(x) · α(y)
//! ```
//!
//! is Markovian: absorbed mass re-enters the state space according to `α`.
//! `α` is the QSD of `K` exactly when `α = α K_α`.

use crate::error::{Error, Result};
use crate::Float;
use rand::Rng;
use std::fmt::Write as _;
use std::path::Path;

/// Row sums may exceed 1 by at most this much; smaller deficits than this
/// are snapped to an exit mass of exactly zero.
pub const ROW_SUM_TOL: f64 = 1e-12;

/// Tolerance on `Σ weights = 1` for [`Distribution`].
pub const DIST_SUM_TOL: f64 = 1e-10;

/// A probability vector over the non-absorbing states.
#[derive(Debug, Clone, PartialEq)]
pub struct Distribution<F> {
    weights: Vec<F>,
}

impl<F: Float> Distribution<F> {
    /// Validates nonnegativity and `Σ = 1` within [`DIST_SUM_TOL`].
    pub fn new(weights: Vec<F>) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::NotADistribution {
                sum: 0.0,
                min: 0.0,
            });
        }
        let sum: F = weights.iter().copied().sum();
        let min = weights.iter().copied().fold(F::infinity(), F::min);
        if min < F::zero() || (sum - F::one()).abs() > F::cast(DIST_SUM_TOL) {
            return Err(Error::NotADistribution {
                sum: sum.to_f64().unwrap_or(f64::NAN),
                min: min.to_f64().unwrap_or(f64::NAN),
            });
        }
        Ok(Self { weights })
    }

    /// Skips validation; for hot loops where the invariant holds by
    /// construction. Checked in debug builds.
    pub fn new_unchecked(weights: Vec<F>) -> Self {
        debug_assert!(
            !weights.is_empty()
                && weights.iter().all(|w| *w >= F::zero())
                && (weights.iter().copied().sum::<F>() - F::one()).abs()
                    <= F::cast(DIST_SUM_TOL),
            "invalid distribution"
        );
        Self { weights }
    }

    /// Uniform distribution on `n` states.
    pub fn uniform(n: usize) -> Self {
        let w = F::one() / F::cast_usize(n);
        Self {
            weights: vec![w; n],
        }
    }

    /// Point mass at state `i`.
    pub fn point(n: usize, i: usize) -> Self {
        let mut weights = vec![F::zero(); n];
        weights[i] = F::one();
        Self { weights }
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn w(&self, i: usize) -> F {
        self.weights[i]
    }

    pub fn weights(&self) -> &[F] {
        &self.weights
    }

    pub fn into_weights(self) -> Vec<F> {
        self.weights
    }

    /// True when every state has strictly positive mass.
    pub fn full_support(&self) -> bool {
        self.weights.iter().all(|w| *w > F::zero())
    }

    /// `Σ |a_i - b_i|`.
    pub fn l1_distance(&self, other: &Self) -> F {
        self.weights
            .iter()
            .zip(&other.weights)
            .map(|(a, b)| (*a - *b).abs())
            .sum()
    }

    /// Precomputed inverse-CDF sampler; build once, draw many times.
    pub fn sampler(&self) -> CdfSampler<F> {
        CdfSampler::from_weights(&self.weights)
    }

    /// Single draw without a prebuilt sampler (linear walk).
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let u = F::cast(rng.random::<f64>());
        let mut acc = F::zero();
        for (i, w) in self.weights.iter().enumerate() {
            acc += *w;
            if u < acc {
                return i;
            }
        }
        // u landed in the rounding slack past the last cumulative sum
        last_positive_index(&self.weights)
    }
}

fn last_positive_index<F: Float>(weights: &[F]) -> usize {
    weights
        .iter()
        .rposition(|w| *w > F::zero())
        .unwrap_or(weights.len() - 1)
}

/// Inverse-CDF sampler over a fixed weight vector (`O(log n)` per draw).
#[derive(Debug, Clone)]
pub struct CdfSampler<F> {
    cdf: Vec<F>,
    fallback: usize,
}

impl<F: Float> CdfSampler<F> {
    fn from_weights(weights: &[F]) -> Self {
        let mut cdf = Vec::with_capacity(weights.len());
        let mut acc = F::zero();
        for w in weights {
            acc += *w;
            cdf.push(acc);
        }
        Self {
            cdf,
            fallback: last_positive_index(weights),
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let u = F::cast(rng.random::<f64>());
        let idx = match self
            .cdf
            .binary_search_by(|c| c.partial_cmp(&u).unwrap_or(std::cmp::Ordering::Less))
        {
            Ok(i) => i + 1,
            Err(i) => i,
        };
        if idx < self.cdf.len() {
            idx
        } else {
            // rounding slack past the final cumulative sum
            self.fallback
        }
    }
}

/// Diagnosis produced by [`SubMarkovKernel::validate`]: one flag per
/// structural invariant, plus irreducibility.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KernelReport {
    /// Every entry lies in `[0, 1]`.
    pub entries_in_range: bool,
    /// Every row sums to at most `1 + ROW_SUM_TOL`.
    pub row_sums_ok: bool,
    /// `exit_mass(x) ∈ [0,1]` and equals `1 - row_sum(x)` within tolerance.
    pub exit_mass_consistent: bool,
    /// Every row carries some positive mass.
    pub rows_nonzero: bool,
    /// At least one state has positive exit mass.
    pub strictly_sub_markovian: bool,
    /// The directed graph of positive entries is strongly connected.
    pub irreducible: bool,
}

impl KernelReport {
    /// All structural invariants hold. Irreducibility is reported but not
    /// required: solvers assume it, the representation does not.
    pub fn pass(&self) -> bool {
        self.entries_in_range
            && self.row_sums_ok
            && self.exit_mass_consistent
            && self.rows_nonzero
            && self.strictly_sub_markovian
    }
}

impl std::fmt::Display for KernelReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let pf = |b: bool| if b { "pass" } else { "fail" };
        writeln!(f, "entries_in_range: {}", pf(self.entries_in_range))?;
        writeln!(f, "row_sums_ok: {}", pf(self.row_sums_ok))?;
        writeln!(f, "exit_mass_consistent: {}", pf(self.exit_mass_consistent))?;
        writeln!(f, "rows_nonzero: {}", pf(self.rows_nonzero))?;
        writeln!(
            f,
            "strictly_sub_markovian: {}",
            pf(self.strictly_sub_markovian)
        )?;
        writeln!(f, "irreducible: {}", self.irreducible)?;
        write!(f, "valid: {}", self.pass())
    }
}

/// A dense `N×N` row-substochastic matrix with precomputed exit masses and
/// per-row CDFs for sampling.
///
/// Immutable after construction; safe to share across threads. Sampling takes
/// a caller-supplied random stream.
#[derive(Debug, Clone)]
pub struct SubMarkovKernel<F> {
    n: usize,
    entries: Vec<F>,  // row-major
    exit_mass: Vec<F>,
    row_cdf: Vec<F>, // row-major cumulative sums of `entries`
}

impl<F: Float> SubMarkovKernel<F> {
    /// Builds a kernel from dense rows.
    ///
    /// Rejects non-square input, entries outside `[0,1]`, and row sums above
    /// `1 + ROW_SUM_TOL`. Deficits smaller than the tolerance snap to an exit
    /// mass of exactly zero, so Markovian rows report no absorption.
    /// Degenerate matrices (all-zero rows, no exit anywhere) are representable
    /// and flagged by [`validate`](Self::validate) rather than rejected here.
    pub fn from_rows(rows: Vec<Vec<F>>) -> Result<Self> {
        let n = rows.len();
        for (i, row) in rows.iter().enumerate() {
            if n == 0 || row.len() != n {
                return Err(Error::NotSquare {
                    rows: n,
                    bad_row: i,
                    bad_len: row.len(),
                });
            }
        }
        let mut entries = Vec::with_capacity(n * n);
        let mut exit_mass = Vec::with_capacity(n);
        let tol = F::cast(ROW_SUM_TOL);
        for (x, row) in rows.iter().enumerate() {
            let mut sum = F::zero();
            for (y, &v) in row.iter().enumerate() {
                if !(F::zero()..=F::one() + tol).contains(&v) {
                    return Err(Error::EntryOutOfRange {
                        x,
                        y,
                        value: v.to_f64().unwrap_or(f64::NAN),
                    });
                }
                entries.push(v.min(F::one()));
                sum += v;
            }
            if sum > F::one() + tol {
                return Err(Error::RowSumExceedsOne {
                    row: x,
                    sum: sum.to_f64().unwrap_or(f64::NAN),
                });
            }
            let deficit = F::one() - sum;
            exit_mass.push(if deficit.abs() <= tol { F::zero() } else { deficit });
        }
        let mut row_cdf = Vec::with_capacity(n * n);
        for x in 0..n {
            let mut acc = F::zero();
            for y in 0..n {
                acc += entries[x * n + y];
                row_cdf.push(acc);
            }
        }
        Ok(Self {
            n,
            entries,
            exit_mass,
            row_cdf,
        })
    }

    /// Loads a kernel from a plain-text matrix file: first line `N`, then `N`
    /// rows of `N` space-separated probabilities. Exit mass is inferred.
    pub fn from_text_file(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let n: usize = lines
            .next()
            .ok_or_else(|| Error::Parse("empty kernel file".into()))?
            .trim()
            .parse()
            .map_err(|e| Error::Parse(format!("bad state count: {e}")))?;
        let mut rows = Vec::with_capacity(n);
        for i in 0..n {
            let line = lines
                .next()
                .ok_or_else(|| Error::Parse(format!("missing row {i}")))?;
            let row: Vec<F> = line
                .split_whitespace()
                .map(|tok| {
                    tok.parse::<f64>()
                        .map(F::cast)
                        .map_err(|e| Error::Parse(format!("row {i}: {e}")))
                })
                .collect::<Result<_>>()?;
            if row.len() != n {
                return Err(Error::Parse(format!(
                    "row {i} has {} entries, expected {n}",
                    row.len()
                )));
            }
            rows.push(row);
        }
        Self::from_rows(rows)
    }

    pub fn n_states(&self) -> usize {
        self.n
    }

    /// `K(x,y)`.
    pub fn entry(&self, x: usize, y: usize) -> F {
        self.entries[x * self.n + y]
    }

    /// Row `x` of `K` as a slice.
    pub fn row(&self, x: usize) -> &[F] {
        &self.entries[x * self.n..(x + 1) * self.n]
    }

    /// `1 - K(x, E)`, the absorption probability from `x`.
    pub fn exit_mass(&self, x: usize) -> F {
        self.exit_mass[x]
    }

    pub fn exit_masses(&self) -> &[F] {
        &self.exit_mass
    }

    /// Largest exit mass over all states.
    pub fn max_exit_mass(&self) -> F {
        self.exit_mass
            .iter()
            .copied()
            .fold(F::zero(), F::max)
    }

    fn check_state(&self, x: usize) -> Result<()> {
        if x >= self.n {
            return Err(Error::StateOutOfRange {
                state: x,
                n_states: self.n,
            });
        }
        Ok(())
    }

    /// Checks every structural invariant and reports irreducibility
    /// (strong connectivity of the positive-entry digraph). Diagnostic only;
    /// never fails.
    pub fn validate(&self) -> KernelReport {
        let tol = F::cast(ROW_SUM_TOL);
        let mut entries_in_range = true;
        let mut row_sums_ok = true;
        let mut exit_mass_consistent = true;
        let mut rows_nonzero = true;
        for x in 0..self.n {
            let mut sum = F::zero();
            let mut any_positive = false;
            for y in 0..self.n {
                let v = self.entry(x, y);
                if v < F::zero() || v > F::one() {
                    entries_in_range = false;
                }
                if v > F::zero() {
                    any_positive = true;
                }
                sum += v;
            }
            if sum > F::one() + tol {
                row_sums_ok = false;
            }
            let e = self.exit_mass[x];
            if e < F::zero() || e > F::one() || (e - (F::one() - sum)).abs() > tol {
                exit_mass_consistent = false;
            }
            if !any_positive {
                rows_nonzero = false;
            }
        }
        KernelReport {
            entries_in_range,
            row_sums_ok,
            exit_mass_consistent,
            rows_nonzero,
            strictly_sub_markovian: self.max_exit_mass() > F::zero(),
            irreducible: self.is_irreducible(),
        }
    }

    /// Strong connectivity of the digraph with an edge `x → y` whenever
    /// `K(x,y) > 0`: every node reachable from node 0 in both the graph and
    /// its transpose.
    fn is_irreducible(&self) -> bool {
        if self.n == 0 {
            return false;
        }
        let reach = |transpose: bool| -> bool {
            let mut seen = vec![false; self.n];
            let mut stack = vec![0usize];
            seen[0] = true;
            let mut count = 1usize;
            while let Some(x) = stack.pop() {
                for y in 0..self.n {
                    let v = if transpose {
                        self.entry(y, x)
                    } else {
                        self.entry(x, y)
                    };
                    if v > F::zero() && !seen[y] {
                        seen[y] = true;
                        count += 1;
                        stack.push(y);
                    }
                }
            }
            count == self.n
        };
        reach(false) && reach(true)
    }

    /// Row `x` of the regenerative kernel: `K(x,·) + exit_mass(x)·α`.
    /// Sums to 1 within machine accuracy.
    pub fn k_alpha_row(&self, alpha: &Distribution<F>, x: usize) -> Result<Distribution<F>> {
        self.check_state(x)?;
        self.check_len(alpha)?;
        let e = self.exit_mass[x];
        let row = self.row(x);
        let weights = row
            .iter()
            .zip(alpha.weights())
            .map(|(&k, &a)| k + e * a)
            .collect();
        Ok(Distribution::new_unchecked(weights))
    }

    /// Single entry `K_α(x,y)` without materializing the row.
    pub fn k_alpha_entry(&self, alpha: &Distribution<F>, x: usize, y: usize) -> F {
        self.entry(x, y) + self.exit_mass[x] * alpha.w(y)
    }

    /// One step under the raw absorbed chain: `Some(y)` for a surviving
    /// transition, `None` for absorption.
    pub fn sample_sub_transition<R: Rng + ?Sized>(&self, x: usize, rng: &mut R) -> Option<usize> {
        let u = F::cast(rng.random::<f64>());
        let cdf = &self.row_cdf[x * self.n..(x + 1) * self.n];
        let total = cdf[self.n - 1];
        if u >= total {
            if self.exit_mass[x] > F::zero() {
                return None;
            }
            // Markovian row: u fell in rounding slack past the row sum.
            return Some(last_positive_index(self.row(x)));
        }
        let idx = match cdf
            .binary_search_by(|c| c.partial_cmp(&u).unwrap_or(std::cmp::Ordering::Less))
        {
            Ok(i) => i + 1,
            Err(i) => i,
        };
        Some(idx.min(self.n - 1))
    }

    /// One step under `K_α`: run the absorbed chain as normal; on absorption,
    /// regenerate by drawing the next state from `α`.
    pub fn sample_transition<R: Rng + ?Sized>(
        &self,
        alpha: &Distribution<F>,
        x: usize,
        rng: &mut R,
    ) -> usize {
        match self.sample_sub_transition(x, rng) {
            Some(y) => y,
            None => alpha.sample(rng),
        }
    }

    /// Same as [`sample_transition`](Self::sample_transition) with a prebuilt
    /// sampler for `α`, for hot loops.
    pub fn sample_transition_with<R: Rng + ?Sized>(
        &self,
        alpha_sampler: &CdfSampler<F>,
        x: usize,
        rng: &mut R,
    ) -> usize {
        match self.sample_sub_transition(x, rng) {
            Some(y) => y,
            None => alpha_sampler.sample(rng),
        }
    }

    fn check_len(&self, alpha: &Distribution<F>) -> Result<()> {
        if alpha.len() != self.n {
            return Err(Error::LengthMismatch {
                left: alpha.len(),
                right: self.n,
            });
        }
        Ok(())
    }

    /// The one-step distribution `β = α K_α`, computed by the dense exact sum
    /// `β(y) = Σ_x α(x) K(x,y) + (Σ_x α(x) exit_mass(x)) · α(y)`.
    pub fn one_step_distribution(&self, alpha: &Distribution<F>) -> Result<Distribution<F>> {
        self.check_len(alpha)?;
        let mut beta = vec![F::zero(); self.n];
        for x in 0..self.n {
            let a = alpha.w(x);
            if a == F::zero() {
                continue;
            }
            let row = self.row(x);
            for (b, &k) in beta.iter_mut().zip(row) {
                *b += a * k;
            }
        }
        let absorbed = self.expected_exit(alpha);
        for (b, &a) in beta.iter_mut().zip(alpha.weights()) {
            *b += absorbed * a;
        }
        Ok(Distribution::new_unchecked(beta))
    }

    /// `Σ_x α(x) · exit_mass(x)`: per-step absorbed mass under initial `α`.
    pub fn expected_exit(&self, alpha: &Distribution<F>) -> F {
        alpha
            .weights()
            .iter()
            .zip(&self.exit_mass)
            .map(|(&a, &e)| a * e)
            .sum()
    }

    /// Serializes in the plain-text matrix format read by
    /// [`from_text_file`](Self::from_text_file).
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{}", self.n);
        for x in 0..self.n {
            let row: Vec<String> = self.row(x).iter().map(|v| format!("{v}")).collect();
            let _ = writeln!(out, "{}", row.join(" "));
        }
        out
    }
}
