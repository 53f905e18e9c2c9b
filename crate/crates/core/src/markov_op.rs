//! Markov operators on `L^2(mu)` of a finite space.
//!
//! A kernel acts on functions by `(Vf)(x) = sum_y op[x][y] f(y)` with
//! `op[x][y] = nu[x][y] / mu[x]`. The correspondence kernel -> operator
//! reverses products: `V_{p1 p2} = V_{p2} V_{p1}`.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::finite_space::{enumerate_partitions, FiniteSpace, Partition, MAX_ENUMERATION};
use crate::linalg::{spectral_norm, Matrix};
use crate::polymorphism::{compose, conjugate, weak_distance, Polymorphism};
use crate::scalar::Scalar;

#[derive(Clone, Debug, PartialEq)]
pub struct MarkovMatrix<S> {
    space: FiniteSpace<S>,
    op: Matrix<S>,
}

impl<S: Scalar> MarkovMatrix<S> {
    /// Wraps an arbitrary square array; the Markov axioms are not enforced
    /// here, see [`axioms_check`].
    pub fn from_array(space: FiniteSpace<S>, op: Matrix<S>) -> Result<Self> {
        let n = space.size();
        if op.rows() != n || op.cols() != n {
            return Err(Error::SizeMismatch { left: n, right: op.rows() });
        }
        Ok(Self { space, op })
    }

    pub fn identity(space: &FiniteSpace<S>) -> Self {
        Self { space: space.clone(), op: Matrix::identity(space.size()) }
    }

    pub fn space(&self) -> &FiniteSpace<S> {
        &self.space
    }

    pub fn op(&self) -> &Matrix<S> {
        &self.op
    }

    pub fn apply(&self, f: &[S]) -> Vec<S> {
        self.op.matvec(f)
    }

    /// Operator product `self * other` (apply `other` first).
    pub fn then_after(&self, other: &Self) -> Result<Self> {
        check_same(self, other)?;
        Ok(Self { space: self.space.clone(), op: self.op.matmul(&other.op) })
    }

    /// `<f, g> = sum_x mu[x] f(x) g(x)` (real functions).
    pub fn inner(&self, f: &[S], g: &[S]) -> S {
        inner(&self.space, f, g)
    }

    /// Norm in `L^2(mu)`: the spectral norm of `D^{1/2} op D^{-1/2}`.
    pub fn operator_norm(&self) -> f64 {
        weighted_norm(&self.space, &self.op)
    }
}

pub(crate) fn inner<S: Scalar>(space: &FiniteSpace<S>, f: &[S], g: &[S]) -> S {
    let mut acc = S::zero();
    for ((w, a), b) in space.weights().iter().zip(f).zip(g) {
        acc += &(w.clone() * a.clone() * b.clone());
    }
    acc
}

fn weighted_norm<S: Scalar>(space: &FiniteSpace<S>, m: &Matrix<S>) -> f64 {
    let sq: Vec<f64> = space.weights().iter().map(|w| w.to_f64().sqrt()).collect();
    let mut a = m.to_f64();
    for i in 0..a.nrows() {
        for j in 0..a.ncols() {
            a[(i, j)] *= sq[i] / sq[j];
        }
    }
    spectral_norm(&a)
}

fn check_same<S: Scalar>(a: &MarkovMatrix<S>, b: &MarkovMatrix<S>) -> Result<()> {
    if a.space != b.space {
        return Err(Error::SizeMismatch { left: a.space.size(), right: b.space.size() });
    }
    Ok(())
}

pub fn operator_of<S: Scalar>(p: &Polymorphism<S>) -> MarkovMatrix<S> {
    MarkovMatrix { space: p.space().clone(), op: p.transitions() }
}

/// Inverse of [`operator_of`]; fails on the first violated axiom.
pub fn kernel_of<S: Scalar>(v: &MarkovMatrix<S>) -> Result<Polymorphism<S>> {
    let report = axioms_check(v);
    if let Some(msg) = report.failure() {
        return Err(Error::Axiom(msg));
    }
    let n = v.space.size();
    let nu = Matrix::from_fn(n, n, |x, y| v.space.weight(x).clone() * v.op[(x, y)].clone());
    Polymorphism::new(v.space.clone(), nu)
}

/// `mu`-weighted adjoint: `op*[y][x] = mu[x] op[x][y] / mu[y]`.
pub fn adjoint<S: Scalar>(v: &MarkovMatrix<S>) -> MarkovMatrix<S> {
    let n = v.space.size();
    let op = Matrix::from_fn(n, n, |y, x| v.space.weight(x).clone() * v.op[(x, y)].clone() / v.space.weight(y).clone());
    MarkovMatrix { space: v.space.clone(), op }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AxiomsReport {
    pub positive: bool,
    pub negative_entry: Option<(usize, usize)>,
    /// `V 1 = 1`.
    pub unit_preserving: bool,
    pub unit_witness_row: Option<usize>,
    /// `V* 1 = 1`, i.e. `mu` is invariant.
    pub adjoint_unit_preserving: bool,
    pub adjoint_witness_column: Option<usize>,
    pub operator_norm: f64,
    pub contraction: bool,
    /// Positivity and both unit conditions force the contraction bound; this
    /// records that the measured norm agrees whenever they hold.
    pub norm_consistent: bool,
}

impl AxiomsReport {
    pub fn passed(&self) -> bool {
        self.positive && self.unit_preserving && self.adjoint_unit_preserving && self.contraction
    }

    pub fn failure(&self) -> Option<String> {
        if let Some((i, j)) = self.negative_entry {
            return Some(format!("positivity fails at ({i}, {j})"));
        }
        if let Some(r) = self.unit_witness_row {
            return Some(format!("V1 = 1 fails at row {r}"));
        }
        if let Some(c) = self.adjoint_witness_column {
            return Some(format!("V*1 = 1 fails at column {c}"));
        }
        if !self.contraction {
            return Some(format!("operator norm {} exceeds 1", self.operator_norm));
        }
        None
    }
}

pub fn axioms_check<S: Scalar>(v: &MarkovMatrix<S>) -> AxiomsReport {
    let n = v.space.size();
    let negative_entry = (0..n)
        .flat_map(|i| (0..n).map(move |j| (i, j)))
        .find(|&(i, j)| v.op[(i, j)].is_negative() && !v.op[(i, j)].is_negligible());
    let unit_witness_row = v.op.row_sums().iter().position(|s| !s.approx_eq(&S::one()));
    // V*1 = 1  <=>  sum_x mu[x] op[x][y] = mu[y]
    let adjoint_witness_column = (0..n).find(|&y| {
        let mut s = S::zero();
        for x in 0..n {
            s += &(v.space.weight(x).clone() * v.op[(x, y)].clone());
        }
        !s.approx_eq(v.space.weight(y))
    });
    let operator_norm = v.operator_norm();
    let contraction = operator_norm <= 1.0 + 1e-12;
    let axioms_23 = negative_entry.is_none() && unit_witness_row.is_none() && adjoint_witness_column.is_none();
    AxiomsReport {
        positive: negative_entry.is_none(),
        negative_entry,
        unit_preserving: unit_witness_row.is_none(),
        unit_witness_row,
        adjoint_unit_preserving: adjoint_witness_column.is_none(),
        adjoint_witness_column,
        operator_norm,
        contraction,
        norm_consistent: !axioms_23 || contraction,
    }
}

/// `|| V_{p1 p2} - V_{p2} V_{p1} ||`. The left side goes through
/// measure-level composition, the right side through operator products.
pub fn antiisomorphism_check<S: Scalar>(p1: &Polymorphism<S>, p2: &Polymorphism<S>) -> Result<f64> {
    let lhs = operator_of(&compose(p1, p2)?);
    let rhs = operator_of(p2).then_after(&operator_of(p1))?;
    Ok(weighted_norm(&lhs.space, &lhs.op.sub(&rhs.op)))
}

/// Which operators a subalgebra must be invariant under before it can be a
/// witness.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SubalgebraInvariance {
    #[default]
    Forward,
    /// Invariance under both `V` and `V*`.
    Both,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct IsometryScan {
    pub totally_nonisometric: bool,
    pub witness: Option<Partition>,
}

/// Searches the nontrivial partitions (in enumeration order) for one whose
/// measurable functions are mapped into themselves by `V`, with `V` isometric
/// on their mean-zero part.
pub fn isometric_subalgebra_scan<S: Scalar>(
    v: &MarkovMatrix<S>,
    size_limit: usize,
    invariance: SubalgebraInvariance,
) -> Result<IsometryScan> {
    let n = v.space.size();
    let limit = size_limit.min(MAX_ENUMERATION);
    if n > limit {
        return Err(Error::SizeLimit { n, limit });
    }
    let vstar = adjoint(v);
    for xi in enumerate_partitions(n, None)?.filter(|xi| !xi.is_trivial()) {
        if !maps_subalgebra_into_itself(v, &xi) {
            continue;
        }
        if invariance == SubalgebraInvariance::Both && !maps_subalgebra_into_itself(&vstar, &xi) {
            continue;
        }
        if is_isometric_on(v, &xi) {
            return Ok(IsometryScan { totally_nonisometric: false, witness: Some(xi) });
        }
    }
    Ok(IsometryScan { totally_nonisometric: true, witness: None })
}

/// `V 1_C` is constant on the blocks of `xi` for every block `C`.
fn maps_subalgebra_into_itself<S: Scalar>(v: &MarkovMatrix<S>, xi: &Partition) -> bool {
    xi.blocks().iter().all(|c| {
        let image: Vec<S> = (0..v.space.size())
            .map(|x| {
                let mut s = S::zero();
                for &y in c {
                    s += &v.op[(x, y)];
                }
                s
            })
            .collect();
        xi.blocks().iter().all(|d| d.iter().all(|&x| image[x].approx_eq(&image[d[0]])))
    })
}

/// Gram-matrix test on the basis `1_{C_i} - mu(C_i)` (all blocks but the
/// last), which spans the mean-zero measurable functions. Exact in rational
/// mode; `1e-10` in float mode.
fn is_isometric_on<S: Scalar>(v: &MarkovMatrix<S>, xi: &Partition) -> bool {
    let n = v.space.size();
    let k = xi.num_blocks();
    let basis: Vec<Vec<S>> = xi.blocks()[..k - 1]
        .iter()
        .map(|c| {
            let m = v.space.mass(c);
            (0..n).map(|x| if c.contains(&x) { S::one() - m.clone() } else { -m.clone() }).collect()
        })
        .collect();
    let images: Vec<Vec<S>> = basis.iter().map(|b| v.apply(b)).collect();
    for i in 0..basis.len() {
        for j in i..basis.len() {
            let before = v.inner(&basis[i], &basis[j]);
            let after = v.inner(&images[i], &images[j]);
            if !(before - after).approx_zero(1e-10) {
                return false;
            }
        }
    }
    true
}

/// `|| V L - L U ||`.
pub fn intertwining_residual<S: Scalar>(v: &MarkovMatrix<S>, u: &MarkovMatrix<S>, l: &MarkovMatrix<S>) -> Result<f64> {
    check_same(v, u)?;
    check_same(v, l)?;
    let lhs = v.op.matmul(&l.op);
    let rhs = l.op.matmul(&u.op);
    Ok(weighted_norm(&v.space, &lhs.sub(&rhs)))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SequenceVerdict {
    /// Consecutive terms agree at the end of the run.
    Converged,
    /// The sequence revisits an earlier term with a period > 1.
    Cycling {
        period: usize,
    },
    Undetermined,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ProductConvergence {
    /// `d(R^n S^-n, R^(n-1) S^-(n-1))` for `n = 1..=N`.
    pub product_steps: Vec<f64>,
    pub product_verdict: SequenceVerdict,
    /// Same for `S^n Q S^-n` with `Q = S^-1 R`.
    pub conjugate_steps: Vec<f64>,
    pub conjugate_verdict: SequenceVerdict,
}

/// Evidence for whether `R^n S^-n` settles. On a finite space every
/// deterministic kernel is invertible, so this reports what happens instead
/// of asserting anything.
pub fn product_convergence_report<S: Scalar>(
    r: &Polymorphism<S>,
    s: &Polymorphism<S>,
    steps: usize,
) -> Result<ProductConvergence> {
    if r.space() != s.space() {
        return Err(Error::SizeMismatch { left: r.size(), right: s.size() });
    }
    s.as_permutation().ok_or(Error::NotInvertible)?;
    let s_inv = conjugate(s);
    let q = compose(&s_inv, r)?;

    let mut products = vec![Polymorphism::identity(r.space())];
    let mut conjugates = vec![q.clone()];
    let mut rn = Polymorphism::identity(r.space());
    let mut sn = rn.clone();
    let mut sinv_n = rn.clone();
    for _ in 1..=steps {
        rn = compose(&rn, r)?;
        sn = compose(&sn, s)?;
        sinv_n = compose(&s_inv, &sinv_n)?;
        products.push(compose(&rn, &sinv_n)?);
        conjugates.push(compose(&compose(&sn, &q)?, &sinv_n)?);
    }
    let steps_of = |seq: &[Polymorphism<S>]| -> Result<Vec<f64>> {
        seq.windows(2).map(|w| weak_distance(&w[1], &w[0]).map(|d| d.to_f64())).collect()
    };
    Ok(ProductConvergence {
        product_steps: steps_of(&products)?,
        product_verdict: verdict(&products)?,
        conjugate_steps: steps_of(&conjugates)?,
        conjugate_verdict: verdict(&conjugates)?,
    })
}

fn verdict<S: Scalar>(seq: &[Polymorphism<S>]) -> Result<SequenceVerdict> {
    let close =
        |a: &Polymorphism<S>, b: &Polymorphism<S>| -> Result<bool> { Ok(weak_distance(a, b)?.approx_zero(1e-10)) };
    let last = seq.len() - 1;
    if last == 0 {
        return Ok(SequenceVerdict::Undetermined);
    }
    if close(&seq[last], &seq[last - 1])? {
        return Ok(SequenceVerdict::Converged);
    }
    // periods are judged on the second half of the run
    for period in 2..=last / 2 {
        let mut all = true;
        for i in (last / 2).max(period)..=last {
            if !close(&seq[i], &seq[i - period])? {
                all = false;
                break;
            }
        }
        if all {
            return Ok(SequenceVerdict::Cycling { period });
        }
    }
    Ok(SequenceVerdict::Undetermined)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::polymorphism::{is_prime, Polymorphism};
    use crate::scalar::Rational;

    fn q(n: i64, d: i64) -> Rational {
        Rational::from_ratio(n, d)
    }

    fn uniform(n: usize) -> FiniteSpace<Rational> {
        FiniteSpace::uniform(n).unwrap()
    }

    fn lazy2() -> Polymorphism<Rational> {
        Polymorphism::from_rows(uniform(2), vec![vec![q(9, 20), q(1, 20)], vec![q(1, 20), q(9, 20)]]).unwrap()
    }

    /// Swaps the blocks {0,1} and {2,3}, uniformly inside the target block.
    fn block_swap() -> Polymorphism<Rational> {
        let e = q(1, 8);
        let z = q(0, 1);
        Polymorphism::from_rows(
            uniform(4),
            vec![
                vec![z.clone(), z.clone(), e.clone(), e.clone()],
                vec![z.clone(), z.clone(), e.clone(), e.clone()],
                vec![e.clone(), e.clone(), z.clone(), z.clone()],
                vec![e.clone(), e, z.clone(), z],
            ],
        )
        .unwrap()
    }

    #[test]
    fn operator_examples() {
        let theta = Polymorphism::zero(&uniform(3));
        let v = operator_of(&theta);
        assert!(v.op().entries().all(|x| *x == q(1, 3)));
        let perm = Polymorphism::from_permutation(&uniform(3), &[2, 0, 1]).unwrap();
        assert_eq!(operator_of(&perm).op()[(0, 2)], q(1, 1));
        assert_eq!(operator_of(&lazy2()).op().to_rows(), vec![vec![q(9, 10), q(1, 10)], vec![q(1, 10), q(9, 10)]]);
    }

    #[test]
    fn kernel_roundtrip() {
        let theta = Polymorphism::zero(&uniform(3));
        assert_eq!(kernel_of(&operator_of(&theta)).unwrap(), theta);
        let perm = Polymorphism::from_permutation(&uniform(3), &[2, 0, 1]).unwrap();
        assert_eq!(kernel_of(&operator_of(&perm)).unwrap(), perm);
    }

    #[test]
    fn kernel_of_rejects_broken_axioms() {
        let w = FiniteSpace::<Rational>::parse(&["0.6", "0.4"]).unwrap();
        // row-stochastic but mu is not invariant: column 0 receives 0.5
        let bad = MarkovMatrix::from_array(
            w,
            Matrix::from_rows(vec![vec![q(1, 2), q(1, 2)], vec![q(1, 2), q(1, 2)]]).unwrap(),
        )
        .unwrap();
        let r = axioms_check(&bad);
        assert!(r.positive && r.unit_preserving);
        assert!(!r.adjoint_unit_preserving);
        assert_eq!(r.adjoint_witness_column, Some(0));
        assert!(matches!(kernel_of(&bad), Err(Error::Axiom(_))));
    }

    #[test]
    fn negative_entry_fails_positivity() {
        let v = MarkovMatrix::from_array(
            uniform(2),
            Matrix::from_rows(vec![vec![q(3, 2), q(-1, 2)], vec![q(-1, 2), q(3, 2)]]).unwrap(),
        )
        .unwrap();
        let r = axioms_check(&v);
        assert!(!r.positive);
        assert_eq!(r.negative_entry, Some((0, 1)));
        // 1 and 1^perp are eigenvectors with eigenvalues 1 and 2
        assert!((r.operator_norm - 2.0).abs() < 1e-12);
        assert!(!r.contraction);
    }

    #[test]
    fn theta_operator_passes() {
        let r = axioms_check(&operator_of(&Polymorphism::zero(&uniform(4))));
        assert!(r.passed());
        assert!(r.norm_consistent);
        assert!((r.operator_norm - 1.0).abs() < 1e-12);
    }

    #[test]
    fn adjoint_matches_conjugate() {
        let sym = operator_of(&lazy2());
        assert_eq!(adjoint(&sym), sym);
        let perm = Polymorphism::from_permutation(&uniform(3), &[2, 0, 1]).unwrap();
        assert_eq!(adjoint(&operator_of(&perm)), operator_of(&conjugate(&perm)));
        let w = FiniteSpace::<Rational>::parse(&["0.6", "0.4"]).unwrap();
        // mu-invariant asymmetric transitions on (0.6, 0.4)
        let p = Matrix::from_rows(vec![vec![q(2, 3), q(1, 3)], vec![q(1, 2), q(1, 2)]]).unwrap();
        let k = Polymorphism::from_transitions(&w, &p).unwrap();
        let a = adjoint(&operator_of(&k));
        assert_eq!(a, operator_of(&conjugate(&k)));
        // weighted transpose by hand: op*[0][1] = 0.4 * 1/2 / 0.6
        assert_eq!(a.op()[(0, 1)], q(1, 3));
    }

    #[test]
    fn antiisomorphism_examples() {
        let id = Polymorphism::identity(&uniform(2));
        assert_eq!(antiisomorphism_check(&id, &lazy2()).unwrap(), 0.0);
        let s = uniform(4);
        let a = Polymorphism::from_permutation(&s, &[1, 2, 3, 0]).unwrap();
        let b = Polymorphism::from_permutation(&s, &[1, 0, 3, 2]).unwrap();
        assert_eq!(antiisomorphism_check(&a, &b).unwrap(), 0.0);
        // the non-reversed product is a different operator
        let wrong = operator_of(&a).then_after(&operator_of(&b)).unwrap();
        assert_ne!(wrong, operator_of(&compose(&a, &b).unwrap()));
    }

    #[test]
    fn isometry_scan_examples() {
        let perm = Polymorphism::from_permutation(&uniform(3), &[1, 2, 0]).unwrap();
        let scan = isometric_subalgebra_scan(&operator_of(&perm), 12, SubalgebraInvariance::Forward).unwrap();
        assert!(!scan.totally_nonisometric);
        assert_eq!(scan.witness, Some(Partition::discrete(3)));

        let theta = operator_of(&Polymorphism::zero(&uniform(4)));
        assert!(isometric_subalgebra_scan(&theta, 12, SubalgebraInvariance::Forward).unwrap().totally_nonisometric);

        let scan = isometric_subalgebra_scan(&operator_of(&block_swap()), 12, SubalgebraInvariance::Forward).unwrap();
        let xi = Partition::new(4, vec![vec![0, 1], vec![2, 3]]).unwrap();
        assert_eq!(scan.witness, Some(xi.clone()));
        assert_eq!(is_prime(&block_swap(), 12).unwrap().witness, Some(xi));

        let big = operator_of(&Polymorphism::zero(&uniform(5)));
        assert!(isometric_subalgebra_scan(&big, 4, SubalgebraInvariance::Forward).is_err());
    }

    #[test]
    fn intertwining_examples() {
        let u = operator_of(&Polymorphism::from_permutation(&uniform(3), &[1, 2, 0]).unwrap());
        let id = MarkovMatrix::identity(&uniform(3));
        assert_eq!(intertwining_residual(&u, &u, &id).unwrap(), 0.0);
        let v = operator_of(
            &Polymorphism::from_rows(
                uniform(3),
                vec![vec![q(1, 6), q(1, 6), q(0, 1)], vec![q(0, 1), q(1, 6), q(1, 6)], vec![q(1, 6), q(0, 1), q(1, 6)]],
            )
            .unwrap(),
        );
        assert!(intertwining_residual(&v, &u, &id).unwrap() > 0.1);
    }

    #[test]
    fn product_convergence_examples() {
        let s = Polymorphism::from_permutation(&uniform(4), &[1, 2, 3, 0]).unwrap();
        let r = product_convergence_report(&s, &s, 6).unwrap();
        assert!(r.product_steps.iter().all(|&d| d == 0.0));
        assert_eq!(r.product_verdict, SequenceVerdict::Converged);

        let theta = Polymorphism::zero(&uniform(4));
        let r = product_convergence_report(&theta, &s, 6).unwrap();
        assert_eq!(r.conjugate_verdict, SequenceVerdict::Converged);

        // r = phi * s with phi mixing inside {0,1}
        let h = q(1, 8);
        let z = q(0, 1);
        let phi = Polymorphism::from_rows(
            uniform(4),
            vec![
                vec![h.clone(), h.clone(), z.clone(), z.clone()],
                vec![h.clone(), h.clone(), z.clone(), z.clone()],
                vec![z.clone(), z.clone(), q(1, 4), z.clone()],
                vec![z.clone(), z.clone(), z.clone(), q(1, 4)],
            ],
        )
        .unwrap();
        let r = product_convergence_report(&compose(&phi, &s).unwrap(), &s, 12).unwrap();
        assert_eq!(r.conjugate_verdict, SequenceVerdict::Cycling { period: 4 });

        assert_eq!(product_convergence_report(&theta, &theta, 3).unwrap_err(), Error::NotInvertible);
    }
}
