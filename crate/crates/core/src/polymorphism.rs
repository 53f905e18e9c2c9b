//! The semigroup of polymorphisms of a finite space.
//!
//! A polymorphism is stored as its bistochastic measure `nu` on the square of
//! the space: row `x` carries mass `mu[x]`, column `y` carries mass `mu[y]`.
//! The transition measure of a point is its row divided by its weight.
//!
//! Composition follows the right-acts-first convention: in
//! `compose(p1, p2)` the kernel `p2` moves a point first and `p1` moves the
//! result, so `compose(phi, shift)` shifts and then perturbs.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::finite_space::{enumerate_partitions, FiniteSpace, Partition, MAX_ENUMERATION};
use crate::linalg::Matrix;
use crate::scalar::{sum, Scalar};

#[derive(Clone, Debug, PartialEq)]
pub struct Polymorphism<S> {
    space: FiniteSpace<S>,
    nu: Matrix<S>,
}

impl<S: Scalar> Polymorphism<S> {
    /// Validates nonnegativity and both marginals.
    pub fn new(space: FiniteSpace<S>, nu: Matrix<S>) -> Result<Self> {
        let p = Self { space, nu };
        p.validate()?;
        Ok(p)
    }

    pub fn from_rows(space: FiniteSpace<S>, rows: Vec<Vec<S>>) -> Result<Self> {
        let n = space.size();
        if rows.len() != n || rows.iter().any(|r| r.len() != n) {
            return Err(Error::Format(format!("nu must be a {n}x{n} array")));
        }
        let nu = Matrix::from_rows(rows).expect("checked shape");
        Self::new(space, nu)
    }

    pub(crate) fn from_parts_unchecked(space: FiniteSpace<S>, nu: Matrix<S>) -> Self {
        Self { space, nu }
    }

    pub fn identity(space: &FiniteSpace<S>) -> Self {
        let n = space.size();
        let nu = Matrix::from_fn(n, n, |x, y| if x == y { space.weight(x).clone() } else { S::zero() });
        Self { space: space.clone(), nu }
    }

    /// The product measure `mu x mu`.
    pub fn zero(space: &FiniteSpace<S>) -> Self {
        let n = space.size();
        let nu = Matrix::from_fn(n, n, |x, y| space.weight(x).clone() * space.weight(y).clone());
        Self { space: space.clone(), nu }
    }

    /// `nu[x][y] = mu[x] P[x][y]`. Rejects arrays that are not row-stochastic
    /// or do not preserve `mu`.
    pub fn from_transitions(space: &FiniteSpace<S>, p: &Matrix<S>) -> Result<Self> {
        let n = space.size();
        if p.rows() != n || p.cols() != n {
            return Err(Error::SizeMismatch { left: n, right: p.rows() });
        }
        let nu = Matrix::from_fn(n, n, |x, y| space.weight(x).clone() * p[(x, y)].clone());
        Self::new(space.clone(), nu)
    }

    /// Deterministic kernel of the map `x -> perm[x]`; `perm` must be a
    /// bijection preserving the weights.
    pub fn from_permutation(space: &FiniteSpace<S>, perm: &[usize]) -> Result<Self> {
        let n = space.size();
        if perm.len() != n {
            return Err(Error::SizeMismatch { left: n, right: perm.len() });
        }
        let mut hit = vec![false; n];
        for &y in perm {
            if y >= n || std::mem::replace(&mut hit[y], true) {
                return Err(Error::NotInvertible);
            }
        }
        let nu = Matrix::from_fn(n, n, |x, y| if perm[x] == y { space.weight(x).clone() } else { S::zero() });
        Self::new(space.clone(), nu)
    }

    pub fn space(&self) -> &FiniteSpace<S> {
        &self.space
    }

    pub fn size(&self) -> usize {
        self.space.size()
    }

    pub fn nu(&self) -> &Matrix<S> {
        &self.nu
    }

    pub fn mass(&self, x: usize, y: usize) -> &S {
        &self.nu[(x, y)]
    }

    /// Row-stochastic transition array `nu[x][y] / mu[x]`.
    pub fn transitions(&self) -> Matrix<S> {
        let n = self.size();
        Matrix::from_fn(n, n, |x, y| self.nu[(x, y)].clone() / self.space.weight(x).clone())
    }

    /// Nonnegativity and both marginals, at mode tolerance.
    pub fn validate(&self) -> Result<()> {
        let n = self.size();
        if self.nu.rows() != n || self.nu.cols() != n {
            return Err(Error::SizeMismatch { left: n, right: self.nu.rows() });
        }
        for x in 0..n {
            for y in 0..n {
                let v = &self.nu[(x, y)];
                if v.is_negative() && !v.is_negligible() {
                    return Err(Error::NegativeEntry { row: x, col: y });
                }
            }
        }
        for (x, r) in self.nu.row_sums().iter().enumerate() {
            if !r.approx_eq(self.space.weight(x)) {
                return Err(Error::RowMarginal { row: x });
            }
        }
        for (y, c) in self.nu.col_sums().iter().enumerate() {
            if !c.approx_eq(self.space.weight(y)) {
                return Err(Error::ColumnMarginal { col: y });
            }
        }
        Ok(())
    }

    /// The map behind a deterministic invertible kernel.
    pub fn as_permutation(&self) -> Option<Vec<usize>> {
        let n = self.size();
        let mut perm = Vec::with_capacity(n);
        for x in 0..n {
            perm.push(self.delta_target(x)?);
        }
        let mut hit = vec![false; n];
        for &y in &perm {
            if std::mem::replace(&mut hit[y], true) {
                return None;
            }
        }
        Some(perm)
    }

    /// The point carrying the whole row mass, if row `x` is a point mass.
    fn delta_target(&self, x: usize) -> Option<usize> {
        let w = self.space.weight(x);
        (0..self.size()).find(|&y| self.nu[(x, y)].approx_eq(w))
    }

    pub fn to_wire(&self) -> KernelWire {
        KernelWire {
            weights: self.space.to_wire().weights,
            nu: self.nu.to_rows().iter().map(|r| r.iter().map(|v| v.to_string()).collect()).collect(),
        }
    }
}

/// JSON form: `{"weights": [...], "nu": [[...], ...]}`.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct KernelWire {
    #[serde(deserialize_with = "crate::io::numeric_strings")]
    pub weights: Vec<String>,
    #[serde(deserialize_with = "crate::io::numeric_string_rows")]
    pub nu: Vec<Vec<String>>,
}

impl KernelWire {
    pub fn into_kernel<S: Scalar>(&self) -> Result<Polymorphism<S>> {
        let space = FiniteSpace::parse(&self.weights)?;
        let rows = self
            .nu
            .iter()
            .map(|r| r.iter().map(|s| S::parse(s)).collect::<Result<Vec<_>>>())
            .collect::<Result<Vec<_>>>()?;
        Polymorphism::from_rows(space, rows)
    }
}

fn check_same<S: Scalar>(a: &Polymorphism<S>, b: &Polymorphism<S>) -> Result<()> {
    if a.space != b.space {
        return Err(Error::SizeMismatch { left: a.size(), right: b.size() });
    }
    Ok(())
}

fn check_partition<S: Scalar>(p: &Polymorphism<S>, xi: &Partition) -> Result<()> {
    if p.size() != xi.size() {
        return Err(Error::SizeMismatch { left: p.size(), right: xi.size() });
    }
    Ok(())
}

/// Product `p1 p2`: `p2` acts first. Computed on measures,
/// `nu[x][z] = sum_y nu2[x][y] nu1[y][z] / mu[y]`.
pub fn compose<S: Scalar>(p1: &Polymorphism<S>, p2: &Polymorphism<S>) -> Result<Polymorphism<S>> {
    check_same(p1, p2)?;
    let n = p1.size();
    let mut nu = Matrix::zeros(n, n);
    for y in 0..n {
        let inv = S::one() / p1.space.weight(y).clone();
        for x in 0..n {
            let a = &p2.nu[(x, y)];
            if a.is_zero() {
                continue;
            }
            let a = a.clone() * inv.clone();
            for z in 0..n {
                let b = &p1.nu[(y, z)];
                if b.is_zero() {
                    continue;
                }
                let v = a.clone() * b.clone();
                nu[(x, z)] += &v;
            }
        }
    }
    Ok(Polymorphism::from_parts_unchecked(p1.space.clone(), nu))
}

/// Reflection of the diagram: the transposed measure.
pub fn conjugate<S: Scalar>(p: &Polymorphism<S>) -> Polymorphism<S> {
    Polymorphism::from_parts_unchecked(p.space.clone(), p.nu.transpose())
}

pub fn convex_combination<S: Scalar>(ps: &[Polymorphism<S>], coeffs: &[S]) -> Result<Polymorphism<S>> {
    let first = ps.first().ok_or(Error::CoefficientSum)?;
    if ps.len() != coeffs.len() {
        return Err(Error::SizeMismatch { left: ps.len(), right: coeffs.len() });
    }
    if coeffs.iter().any(|c| c.is_negative() && !c.is_negligible()) || !sum(coeffs).approx_eq(&S::one()) {
        return Err(Error::CoefficientSum);
    }
    let n = first.size();
    let mut nu = Matrix::zeros(n, n);
    for (p, c) in ps.iter().zip(coeffs) {
        check_same(first, p)?;
        for x in 0..n {
            for y in 0..n {
                let v = c.clone() * p.nu[(x, y)].clone();
                nu[(x, y)] += &v;
            }
        }
    }
    Ok(Polymorphism::from_parts_unchecked(first.space.clone(), nu))
}

/// `n`-fold product by repeated squaring; `power(p, 0)` is the identity.
pub fn power<S: Scalar>(p: &Polymorphism<S>, mut n: u64) -> Polymorphism<S> {
    let mut result = Polymorphism::identity(&p.space);
    let mut base = p.clone();
    while n > 0 {
        if n & 1 == 1 {
            result = compose(&result, &base).expect("same space");
        }
        n >>= 1;
        if n > 0 {
            base = compose(&base, &base).expect("same space");
        }
    }
    result
}

/// Total variation `sum |nu1 - nu2|` between bistochastic measures.
pub fn weak_distance<S: Scalar>(p1: &Polymorphism<S>, p2: &Polymorphism<S>) -> Result<S> {
    check_same(p1, p2)?;
    let mut d = S::zero();
    for (a, b) in p1.nu.entries().zip(p2.nu.entries()) {
        d += &(a.clone() - b.clone()).abs();
    }
    Ok(d)
}

/// Mass of row `x` inside the point set `block`.
fn row_mass_in<S: Scalar>(p: &Polymorphism<S>, x: usize, block: &[usize]) -> S {
    let mut m = S::zero();
    for &y in block {
        m += p.mass(x, y);
    }
    m
}

/// `true` when every row puts its whole mass inside its own block.
pub fn is_associated<S: Scalar>(p: &Polymorphism<S>, xi: &Partition) -> Result<bool> {
    check_partition(p, xi)?;
    Ok(xi.blocks().iter().all(|b| b.iter().all(|&x| row_mass_in(p, x, b).approx_eq(p.space.weight(x)))))
}

/// For an invariant partition, the block index each block is sent into.
pub fn block_image<S: Scalar>(p: &Polymorphism<S>, xi: &Partition) -> Result<Option<Vec<usize>>> {
    check_partition(p, xi)?;
    let mut image = Vec::with_capacity(xi.num_blocks());
    for c in xi.blocks() {
        let x0 = c[0];
        let w0 = p.space.weight(x0);
        let Some(d) = xi.blocks().iter().position(|d| row_mass_in(p, x0, d).approx_eq(w0)) else {
            return Ok(None);
        };
        let target = &xi.blocks()[d];
        if !c.iter().all(|&x| row_mass_in(p, x, target).approx_eq(p.space.weight(x))) {
            return Ok(None);
        }
        image.push(d);
    }
    Ok(Some(image))
}

pub fn is_invariant_partition<S: Scalar>(p: &Polymorphism<S>, xi: &Partition) -> Result<bool> {
    Ok(block_image(p, xi)?.is_some())
}

pub fn is_fixed_partition<S: Scalar>(p: &Polymorphism<S>, xi: &Partition) -> Result<bool> {
    Ok(block_image(p, xi)?.is_some_and(|img| img.iter().enumerate().all(|(c, &d)| c == d)))
}

/// No proper nonempty absorbing set. The stationary weights are positive, so
/// every closed class is a communicating class and it suffices to check that
/// point 0 reaches everything on the support graph.
pub fn is_ergodic<S: Scalar>(p: &Polymorphism<S>) -> bool {
    let n = p.size();
    let mut seen = vec![false; n];
    let mut stack = vec![0];
    seen[0] = true;
    while let Some(x) = stack.pop() {
        for y in 0..n {
            if !seen[y] && !p.mass(x, y).is_negligible() {
                seen[y] = true;
                stack.push(y);
            }
        }
    }
    seen.into_iter().all(|s| s)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PrimeReport {
    pub prime: bool,
    /// First nontrivial invariant partition in enumeration order.
    pub witness: Option<Partition>,
}

/// Exhaustive scan for a nontrivial invariant partition. The discrete
/// partition counts as nontrivial, so deterministic kernels are never prime
/// on two or more points.
pub fn is_prime<S: Scalar>(p: &Polymorphism<S>, size_limit: usize) -> Result<PrimeReport> {
    let n = p.size();
    let limit = size_limit.min(MAX_ENUMERATION);
    if n > limit {
        return Err(Error::SizeLimit { n, limit });
    }
    for xi in enumerate_partitions(n, None)?.filter(|xi| !xi.is_trivial()) {
        if is_invariant_partition(p, &xi)? {
            return Ok(PrimeReport { prime: false, witness: Some(xi) });
        }
    }
    Ok(PrimeReport { prime: true, witness: None })
}

pub fn is_coprime<S: Scalar>(p: &Polymorphism<S>, size_limit: usize) -> Result<PrimeReport> {
    is_prime(&conjugate(p), size_limit)
}

/// `true` when no transition measure is a point mass.
pub fn is_nondegenerate<S: Scalar>(p: &Polymorphism<S>) -> bool {
    (0..p.size()).all(|x| p.delta_target(x).is_none())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct DensityReport {
    pub semi_dense: bool,
    pub codense: bool,
    pub dense: bool,
}

/// Semi-density is a trivial kernel of the transition array; codensity the
/// same for the conjugate.
pub fn density_check<S: Scalar>(p: &Polymorphism<S>) -> DensityReport {
    let n = p.size();
    let semi_dense = p.transitions().rank() == n;
    let codense = conjugate(p).transitions().rank() == n;
    DensityReport { semi_dense, codense, dense: semi_dense && codense }
}

pub const DEFAULT_MIXING_STEPS: usize = 200;
pub const DEFAULT_MIXING_TOL: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq)]
pub struct MixingReport<S> {
    /// `d(p^n, zero)` for `n = 1..=N`.
    pub distances: Vec<S>,
    pub is_mixing: bool,
    /// Geometric mean of consecutive ratios over the tail.
    pub rate: f64,
}

pub fn mixing_report<S: Scalar>(p: &Polymorphism<S>, steps: usize, tol: f64) -> MixingReport<S> {
    let theta = Polymorphism::zero(&p.space);
    let mut distances = Vec::with_capacity(steps);
    let mut cur = p.clone();
    for n in 1..=steps {
        if n > 1 {
            cur = compose(&cur, p).expect("same space");
        }
        distances.push(weak_distance(&cur, &theta).expect("same space"));
    }
    let is_mixing = distances.last().is_none_or(|d| d.to_f64() < tol);
    MixingReport { rate: tail_rate(&distances), distances, is_mixing }
}

fn tail_rate<S: Scalar>(d: &[S]) -> f64 {
    let Some(last) = d.last() else { return 0.0 };
    if last.to_f64() == 0.0 {
        return 0.0;
    }
    let tail = &d[d.len().saturating_sub(10)..];
    let mut log_sum = 0.0;
    let mut count = 0;
    for w in tail.windows(2) {
        let (a, b) = (w[0].to_f64(), w[1].to_f64());
        if a > 0.0 && b > 0.0 {
            log_sum += (b / a).ln();
            count += 1;
        }
    }
    if count == 0 {
        1.0
    } else {
        (log_sum / count as f64).exp()
    }
}

/// Quotient polymorphism on the blocks of `xi`.
pub fn factor<S: Scalar>(p: &Polymorphism<S>, xi: &Partition) -> Result<Polymorphism<S>> {
    check_partition(p, xi)?;
    let k = xi.num_blocks();
    let space = FiniteSpace::new(xi.blocks().iter().map(|b| p.space.mass(b)).collect())?;
    let labels = xi.labels();
    let mut nu = Matrix::zeros(k, k);
    for x in 0..p.size() {
        for y in 0..p.size() {
            nu[(labels[x], labels[y])] += p.mass(x, y);
        }
    }
    Ok(Polymorphism::from_parts_unchecked(space, nu))
}

/// A probability vector on the points of a space.
#[derive(Clone, Debug, PartialEq)]
pub struct PointMeasure<S> {
    mass: Vec<S>,
}

impl<S: Scalar> PointMeasure<S> {
    pub fn new(mass: Vec<S>) -> Result<Self> {
        if mass.iter().any(|m| m.is_negative() && !m.is_negligible()) || !sum(&mass).approx_eq(&S::one()) {
            return Err(Error::NotProbability(format!("{} entries", mass.len())));
        }
        Ok(Self { mass })
    }

    pub fn delta(n: usize, x: usize) -> Self {
        Self { mass: (0..n).map(|y| if y == x { S::one() } else { S::zero() }).collect() }
    }

    pub fn of_space(space: &FiniteSpace<S>) -> Self {
        Self { mass: space.weights().to_vec() }
    }

    pub fn mass(&self) -> &[S] {
        &self.mass
    }
}

/// Push-forward of `m` through the transition measures of `p`.
pub fn convolve<S: Scalar>(p: &Polymorphism<S>, m: &PointMeasure<S>) -> Result<PointMeasure<S>> {
    if m.mass.len() != p.size() {
        return Err(Error::SizeMismatch { left: p.size(), right: m.mass.len() });
    }
    let out = p.transitions().transpose().matvec(&m.mass);
    Ok(PointMeasure { mass: out })
}

/// Stationary chain: the initial state is drawn from `mu`, each step from the
/// transition measure of the current state.
pub fn sample_markov_chain<S: Scalar>(p: &Polymorphism<S>, length: usize, seed: u64) -> Vec<usize> {
    let n = p.size();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cdf = |row: Vec<f64>| -> Vec<f64> {
        let total: f64 = row.iter().sum();
        let mut acc = 0.0;
        row.iter()
            .map(|v| {
                acc += v / total;
                acc
            })
            .collect()
    };
    let initial = cdf(p.space.weights().iter().map(Scalar::to_f64).collect());
    let rows: Vec<Vec<f64>> = (0..n).map(|x| cdf((0..n).map(|y| p.mass(x, y).to_f64()).collect())).collect();
    let draw = |c: &[f64], rng: &mut ChaCha8Rng| {
        let u: f64 = rng.gen();
        c.iter().position(|&v| u < v).unwrap_or(n - 1)
    };
    let mut seq = Vec::with_capacity(length);
    if length == 0 {
        return seq;
    }
    let mut x = draw(&initial, &mut rng);
    seq.push(x);
    for _ in 1..length {
        x = draw(&rows[x], &mut rng);
        seq.push(x);
    }
    seq
}

/// Plug-in block entropy of `k`-words, in nats.
fn block_entropy(seq: &[usize], k: usize) -> f64 {
    if k == 0 || seq.len() < k {
        return 0.0;
    }
    let mut counts = std::collections::BTreeMap::<&[usize], usize>::new();
    for w in seq.windows(k) {
        *counts.entry(w).or_default() += 1;
    }
    let total = (seq.len() - k + 1) as f64;
    counts
        .values()
        .map(|&c| {
            let q = c as f64 / total;
            -q * q.ln()
        })
        .sum()
}

/// Entropy-rate estimate `H_k - H_{k-1}` from plug-in block entropies (nats).
pub fn entropy_rate_estimate(seq: &[usize], block: usize) -> f64 {
    let block = block.max(1);
    block_entropy(seq, block) - block_entropy(seq, block - 1)
}

/// `step,state` CSV for a sampled chain.
pub fn chain_csv(seq: &[usize]) -> String {
    let mut out = String::from("step,state\n");
    for (i, s) in seq.iter().enumerate() {
        out.push_str(&format!("{i},{s}\n"));
    }
    out
}
