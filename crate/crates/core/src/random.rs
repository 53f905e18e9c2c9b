//! Seeded random rational objects for sweeps and corpora.
//!
//! Kernels are mixtures of identity, `Θ`, block averages, weight-preserving
//! permutations and zero-diagonal couplings, optionally composed with a
//! second mixture so the result is generally not self-adjoint.

use rand::seq::SliceRandom;
use rand::Rng;

use crate::coupling::{feasibility_check, solve_coupling};
use crate::finite_space::{conditional_weights, FiniteSpace, Partition};
use crate::linalg::Matrix;
use crate::polymorphism::{compose, convex_combination, Polymorphism};
use crate::scalar::Scalar;

/// Integer weights in `1..=6`, normalized.
pub fn random_space<S: Scalar, R: Rng>(n: usize, rng: &mut R) -> FiniteSpace<S> {
    let raw: Vec<i64> = (0..n).map(|_| rng.gen_range(1..=6)).collect();
    let total: i64 = raw.iter().sum();
    FiniteSpace::new(raw.iter().map(|&w| S::from_ratio(w, total)).collect()).expect("positive weights")
}

/// Half uniform, half [`random_space`].
pub fn random_space_mixed<S: Scalar, R: Rng>(n: usize, rng: &mut R) -> FiniteSpace<S> {
    if rng.gen_bool(0.5) {
        FiniteSpace::uniform(n).expect("n >= 1")
    } else {
        random_space(n, rng)
    }
}

pub fn random_partition<R: Rng>(n: usize, rng: &mut R) -> Partition {
    let k = rng.gen_range(1..=n.max(1));
    let labels: Vec<usize> = (0..n).map(|_| rng.gen_range(0..k)).collect();
    Partition::from_labels(&labels)
}

/// Conditional expectation onto a partition:
/// `nu[x][y] = mu[x] mu[y] / mu(C)` for `x, y` in the same block `C`.
pub fn block_average<S: Scalar>(space: &FiniteSpace<S>, xi: &Partition) -> Polymorphism<S> {
    let n = space.size();
    let labels = xi.labels();
    let mass: Vec<S> = xi.blocks().iter().map(|b| space.mass(b)).collect();
    let nu = Matrix::from_fn(n, n, |x, y| {
        if labels[x] == labels[y] {
            space.weight(x).clone() * space.weight(y).clone() / mass[labels[x]].clone()
        } else {
            S::zero()
        }
    });
    Polymorphism::new(space.clone(), nu).expect("block averages are bistochastic")
}

/// A random permutation of points with equal weight.
pub fn random_preserving_permutation<S: Scalar, R: Rng>(space: &FiniteSpace<S>, rng: &mut R) -> Polymorphism<S> {
    let n = space.size();
    let mut perm: Vec<usize> = (0..n).collect();
    let mut seen = vec![false; n];
    for x in 0..n {
        if seen[x] {
            continue;
        }
        let class: Vec<usize> = (x..n).filter(|&y| space.weight(y) == space.weight(x)).collect();
        let mut image = class.clone();
        image.shuffle(rng);
        for (&from, &to) in class.iter().zip(&image) {
            perm[from] = to;
            seen[from] = true;
        }
    }
    Polymorphism::from_permutation(space, &perm).expect("weight classes are preserved")
}

fn random_mixture<S: Scalar, R: Rng>(space: &FiniteSpace<S>, rng: &mut R) -> Polymorphism<S> {
    let mut parts = vec![
        Polymorphism::identity(space),
        Polymorphism::zero(space),
        block_average(space, &random_partition(space.size(), rng)),
        random_preserving_permutation(space, rng),
    ];
    if space.size() >= 2 && feasibility_check(space.weights()).unwrap_or(false) {
        let c = solve_coupling(space.weights()).expect("feasible");
        parts.push(c.as_polymorphism().expect("positive weights"));
    }
    let mut raw: Vec<i64> = parts.iter().map(|_| rng.gen_range(0..=4)).collect();
    if raw.iter().all(|&c| c == 0) {
        let i = rng.gen_range(0..raw.len());
        raw[i] = 1;
    }
    let total: i64 = raw.iter().sum();
    let coeffs: Vec<S> = raw.iter().map(|&c| S::from_ratio(c, total)).collect();
    convex_combination(&parts, &coeffs).expect("normalized coefficients")
}

/// A random polymorphism of `space`.
pub fn random_kernel<S: Scalar, R: Rng>(space: &FiniteSpace<S>, rng: &mut R) -> Polymorphism<S> {
    let p = random_mixture(space, rng);
    if rng.gen_bool(0.5) {
        compose(&p, &random_mixture(space, rng)).expect("same space")
    } else {
        p
    }
}

/// A random kernel that keeps every block of `xi` fixed.
pub fn block_diagonal_kernel<S: Scalar, R: Rng>(
    space: &FiniteSpace<S>,
    xi: &Partition,
    rng: &mut R,
) -> Polymorphism<S> {
    let n = space.size();
    let mut nu = Matrix::zeros(n, n);
    for block in xi.blocks() {
        let cond = FiniteSpace::new(conditional_weights(space, block).expect("valid block")).expect("positive");
        let inner = random_kernel(&cond, rng);
        let mass = space.mass(block);
        for (i, &x) in block.iter().enumerate() {
            for (j, &y) in block.iter().enumerate() {
                nu[(x, y)] = mass.clone() * inner.nu()[(i, j)].clone();
            }
        }
    }
    Polymorphism::new(space.clone(), nu).expect("blockwise bistochastic")
}
