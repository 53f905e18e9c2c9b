//! Couplings with forbidden diagonal.
//!
//! Given a probability vector `p`, a coupling is a nonnegative matrix `q`
//! with `q[i][i] = 0` whose row and column sums are both `p`. Such a matrix
//! exists iff `max p[i] <= 1/2`: row `i` must place all of `p[i]` into
//! columns other than `i`, whose total budget is `1 - p[i]`. Read as a
//! transition rule (`i -> j` with probability `q[i][j] / p[i]`) it moves every
//! point and preserves `p`.

use std::collections::VecDeque;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::finite_space::FiniteSpace;
use crate::linalg::Matrix;
use crate::polymorphism::Polymorphism;
use crate::scalar::{sum, Scalar};

#[derive(Clone, Debug, PartialEq)]
pub struct CouplingMatrix<S> {
    q: Matrix<S>,
    p: Vec<S>,
}

impl<S: Scalar> CouplingMatrix<S> {
    pub fn size(&self) -> usize {
        self.p.len()
    }

    pub fn q(&self) -> &Matrix<S> {
        &self.q
    }

    pub fn marginal(&self) -> &[S] {
        &self.p
    }

    /// Probability of moving from label `i` to label `j`.
    pub fn transition(&self, i: usize, j: usize) -> S {
        self.q[(i, j)].clone() / self.p[i].clone()
    }

    /// Zero diagonal, nonnegative entries, both marginals equal to `p`.
    pub fn validate(&self) -> Result<()> {
        let k = self.size();
        for i in 0..k {
            if !self.q[(i, i)].is_negligible() {
                return Err(Error::Format(format!("diagonal entry {i} is nonzero")));
            }
            for j in 0..k {
                if self.q[(i, j)].is_negative() && !self.q[(i, j)].is_negligible() {
                    return Err(Error::NegativeEntry { row: i, col: j });
                }
            }
        }
        for (i, (r, p)) in self.q.row_sums().iter().zip(&self.p).enumerate() {
            if !r.approx_eq(p) {
                return Err(Error::RowMarginal { row: i });
            }
        }
        for (j, (c, p)) in self.q.col_sums().iter().zip(&self.p).enumerate() {
            if !c.approx_eq(p) {
                return Err(Error::ColumnMarginal { col: j });
            }
        }
        Ok(())
    }

    /// The bistochastic kernel on the labelled points; requires `p > 0`.
    pub fn as_polymorphism(&self) -> Result<Polymorphism<S>> {
        Polymorphism::new(FiniteSpace::new(self.p.clone())?, self.q.clone())
    }
}

fn check_probability<S: Scalar>(p: &[S]) -> Result<()> {
    if p.len() < 2 {
        return Err(Error::NotProbability("need at least two entries".into()));
    }
    if let Some(i) = p.iter().position(|x| x.is_negative() && !x.is_negligible()) {
        return Err(Error::NotProbability(format!("entry {i} is negative")));
    }
    if !sum(p).approx_eq(&S::one()) {
        return Err(Error::NotProbability(format!("entries sum to {}", sum(p))));
    }
    Ok(())
}

/// Index of the first largest entry.
fn argmax<S: Scalar>(p: &[S]) -> usize {
    let mut best = 0;
    for (i, x) in p.iter().enumerate() {
        if *x > p[best] {
            best = i;
        }
    }
    best
}

/// `max p[i] <= 1/2`, with equality allowed.
pub fn feasibility_check<S: Scalar>(p: &[S]) -> Result<bool> {
    check_probability(p)?;
    Ok(violating_index(p).is_none())
}

fn violating_index<S: Scalar>(p: &[S]) -> Option<usize> {
    let i = argmax(p);
    let excess = p[i].clone() * S::from_usize(2) - sum(p);
    (excess.is_positive() && !excess.is_negligible()).then_some(i)
}

/// A zero-diagonal coupling of `p` with itself, or [`Error::Infeasible`]
/// naming the heaviest entry. Uniform vectors get the symmetric solution
/// `q[i][j] = 1/(k(k-1))`; everything else is routed by max-flow.
pub fn solve_coupling<S: Scalar>(p: &[S]) -> Result<CouplingMatrix<S>> {
    check_probability(p)?;
    if let Some(index) = violating_index(p) {
        return Err(Error::Infeasible { index });
    }
    let k = p.len();
    let q = if p.iter().all(|x| x.approx_eq(&p[0])) {
        let v = p[0].clone() / S::from_usize(k - 1);
        Matrix::from_fn(k, k, |i, j| if i == j { S::zero() } else { v.clone() })
    } else {
        max_flow_coupling(p)
    };
    let c = CouplingMatrix { q, p: p.to_vec() };
    c.validate()?;
    Ok(c)
}

/// Edmonds-Karp on source -> rows -> columns (off diagonal) -> sink, with
/// row capacity `p[i]`, column capacity `p[j]`. BFS explores nodes in index
/// order, so the output is a function of `p` alone.
fn max_flow_coupling<S: Scalar>(p: &[S]) -> Matrix<S> {
    let k = p.len();
    // nodes: 0 = source, 1..=k rows, k+1..=2k columns, 2k+1 = sink
    let nodes = 2 * k + 2;
    let (source, sink) = (0, 2 * k + 1);
    let row = |i: usize| 1 + i;
    let col = |j: usize| 1 + k + j;
    let mut cap = Matrix::<S>::zeros(nodes, nodes);
    for i in 0..k {
        cap[(source, row(i))] = p[i].clone();
        cap[(col(i), sink)] = p[i].clone();
        for j in 0..k {
            if i != j {
                // p[i] bounds any flow through row i
                cap[(row(i), col(j))] = p[i].clone();
            }
        }
    }
    let mut flow = Matrix::<S>::zeros(nodes, nodes);
    let residual = |cap: &Matrix<S>, flow: &Matrix<S>, u: usize, v: usize| cap[(u, v)].clone() - flow[(u, v)].clone();

    loop {
        let mut parent = vec![usize::MAX; nodes];
        parent[source] = source;
        let mut queue = VecDeque::from([source]);
        while let Some(u) = queue.pop_front() {
            if u == sink {
                break;
            }
            for v in 0..nodes {
                if parent[v] == usize::MAX {
                    let r = residual(&cap, &flow, u, v);
                    if r.is_positive() && !r.is_negligible() {
                        parent[v] = u;
                        queue.push_back(v);
                    }
                }
            }
        }
        if parent[sink] == usize::MAX {
            break;
        }
        let mut bottleneck: Option<S> = None;
        let mut v = sink;
        while v != source {
            let u = parent[v];
            let r = residual(&cap, &flow, u, v);
            bottleneck = Some(match bottleneck {
                Some(b) if b <= r => b,
                _ => r,
            });
            v = u;
        }
        let b = bottleneck.expect("path has at least one edge");
        let mut v = sink;
        while v != source {
            let u = parent[v];
            flow[(u, v)] += &b;
            // skew symmetry gives the residual back-edge
            flow[(v, u)] = flow[(v, u)].clone() - b.clone();
            v = u;
        }
    }

    Matrix::from_fn(k, k, |i, j| {
        if i == j {
            S::zero()
        } else {
            let f = flow[(row(i), col(j))].clone();
            if f.is_negative() {
                S::zero()
            } else {
                f
            }
        }
    })
}

/// What the caller should do when the residual exceeds its cap.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ResidualPolicy {
    /// Keep whatever residual remains.
    #[default]
    Accept,
    /// Ask the caller to enlarge the window.
    Grow,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BlockPolicy<S> {
    pub residual: ResidualPolicy,
    /// Residual mass (as a fraction of the total) tolerated before `Grow`
    /// fires.
    pub residual_cap: S,
}

impl<S: Scalar> Default for BlockPolicy<S> {
    fn default() -> Self {
        Self { residual: ResidualPolicy::Accept, residual_cap: S::from_ratio(1, 64) }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Block<S> {
    /// Point indices; a point's position here is its label.
    pub members: Vec<usize>,
    pub weights: Vec<S>,
    pub coupling: CouplingMatrix<S>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BlockSystem<S> {
    pub blocks: Vec<Block<S>>,
    /// Points left fixed.
    pub residual: Vec<usize>,
    /// Residual weight as a fraction of the total weight.
    pub residual_mass: S,
    pub grow_requested: bool,
}

impl<S: Scalar> BlockSystem<S> {
    /// `(block, label)` of every point, `None` on the residual.
    pub fn labels(&self, n: usize) -> Vec<Option<(usize, usize)>> {
        let mut out = vec![None; n];
        for (b, block) in self.blocks.iter().enumerate() {
            for (label, &x) in block.members.iter().enumerate() {
                out[x] = Some((b, label));
            }
        }
        out
    }
}

/// Groups point indices into blocks of at least `min_block` points whose
/// renormalized weights admit a zero-diagonal coupling.
///
/// Heaviest points are moved to the residual one at a time until the rest is
/// feasible; a smaller `min_block` therefore never leaves more residual mass.
/// The kept points are split into consecutive chunks of `min_block` when
/// every chunk is itself feasible, and kept as one block otherwise.
pub fn block_builder<S: Scalar>(weights: &[S], min_block: usize, policy: &BlockPolicy<S>) -> Result<BlockSystem<S>> {
    if let Some(i) = weights.iter().position(|w| !w.is_positive()) {
        return Err(Error::InvalidWeights(format!("weight {i} is not positive")));
    }
    let min_block = min_block.max(2);
    let total = sum(weights);
    let mut order: Vec<usize> = (0..weights.len()).collect();
    order.sort_by(|&a, &b| weights[b].partial_cmp(&weights[a]).expect("comparable weights").then(a.cmp(&b)));

    let feasible = |idx: &[usize]| {
        let w: Vec<S> = idx.iter().map(|&i| weights[i].clone()).collect();
        violating_index(&w).is_none()
    };

    let mut kept: Vec<usize> = Vec::new();
    for t in 0..order.len() {
        let candidate = &order[t..];
        if candidate.len() < min_block {
            break;
        }
        if feasible(candidate) {
            kept = candidate.to_vec();
            break;
        }
    }
    kept.sort_unstable();

    let chunks: Vec<Vec<usize>> = {
        let mut chunks: Vec<Vec<usize>> = kept.chunks(min_block).map(<[usize]>::to_vec).collect();
        if chunks.len() > 1 && chunks.last().is_some_and(|c| c.len() < min_block) {
            let tail = chunks.pop().expect("nonempty");
            chunks.last_mut().expect("nonempty").extend(tail);
        }
        if chunks.len() > 1 && chunks.iter().all(|c| feasible(c)) {
            chunks
        } else if kept.is_empty() {
            Vec::new()
        } else {
            vec![kept.clone()]
        }
    };

    let mut blocks = Vec::with_capacity(chunks.len());
    for members in chunks {
        let mass: S = members.iter().fold(S::zero(), |acc, &i| acc + weights[i].clone());
        let cond: Vec<S> = members.iter().map(|&i| weights[i].clone() / mass.clone()).collect();
        let coupling = solve_coupling(&cond)?;
        blocks.push(Block { members, weights: cond, coupling });
    }

    let residual: Vec<usize> = (0..weights.len()).filter(|i| kept.binary_search(i).is_err()).collect();
    let residual_mass = residual.iter().fold(S::zero(), |acc, &i| acc + weights[i].clone()) / total;
    let grow_requested = policy.residual == ResidualPolicy::Grow
        && residual_mass > policy.residual_cap
        && !(residual_mass.clone() - policy.residual_cap.clone()).is_negligible();
    Ok(BlockSystem { blocks, residual, residual_mass, grow_requested })
}

#[derive(Clone, Debug, Serialize)]
pub struct CouplingWire {
    pub p: Vec<String>,
    pub q: Vec<Vec<String>>,
    pub diagnostics: CouplingDiagnostics,
}

#[derive(Clone, Debug, Serialize)]
pub struct CouplingDiagnostics {
    pub mode: String,
    pub zero_diagonal: bool,
    pub marginals_exact: bool,
    pub max_weight: String,
}

impl<S: Scalar> CouplingMatrix<S> {
    pub fn to_wire(&self) -> CouplingWire {
        let valid = self.validate().is_ok();
        CouplingWire {
            p: self.p.iter().map(ToString::to_string).collect(),
            q: self.q.to_rows().iter().map(|r| r.iter().map(ToString::to_string).collect()).collect(),
            diagnostics: CouplingDiagnostics {
                mode: S::MODE.to_string(),
                zero_diagonal: (0..self.size()).all(|i| self.q[(i, i)].is_zero()),
                marginals_exact: valid,
                max_weight: self.p[argmax(&self.p)].to_string(),
            },
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scalar::Rational;

    fn qv(xs: &[(i64, i64)]) -> Vec<Rational> {
        xs.iter().map(|&(n, d)| Rational::from_ratio(n, d)).collect()
    }

    fn parse(xs: &[&str]) -> Vec<Rational> {
        xs.iter().map(|s| Rational::parse(s).unwrap()).collect()
    }

    #[test]
    fn feasibility_examples() {
        assert!(feasibility_check(&qv(&[(1, 4); 4])).unwrap());
        assert!(!feasibility_check(&parse(&["0.6", "0.2", "0.1", "0.1"])).unwrap());
        assert!(feasibility_check(&parse(&["0.5", "0.3", "0.1", "0.1"])).unwrap());
        assert!(feasibility_check(&parse(&["0.5", "0.4"])).is_err());
        assert!(feasibility_check(&parse(&["1"])).is_err());
    }

    #[test]
    fn uniform_gets_symmetric_solution() {
        let c = solve_coupling(&qv(&[(1, 4); 4])).unwrap();
        for i in 0..4 {
            for j in 0..4 {
                let expect = if i == j { Rational::from_ratio(0, 1) } else { Rational::from_ratio(1, 12) };
                assert_eq!(c.q()[(i, j)], expect);
            }
        }
    }

    #[test]
    fn two_points_forced() {
        let c = solve_coupling(&qv(&[(1, 2), (1, 2)])).unwrap();
        assert_eq!(c.q().to_rows(), vec![qv(&[(0, 1), (1, 2)]), qv(&[(1, 2), (0, 1)])]);
    }

    #[test]
    fn skewed_vector_solves_exactly() {
        let p = parse(&["0.4", "0.3", "0.2", "0.1"]);
        let c = solve_coupling(&p).unwrap();
        c.validate().unwrap();
        assert_eq!(c.q().row_sums(), p);
        assert_eq!(c.q().col_sums(), p);
        assert!((0..4).all(|i| c.q()[(i, i)] == Rational::from_ratio(0, 1)));
        let k = c.as_polymorphism().unwrap();
        assert!((0..4).all(|x| k.transitions()[(x, x)] == Rational::from_ratio(0, 1)));
    }

    #[test]
    fn boundary_half_is_feasible() {
        let p = parse(&["0.5", "0.25", "0.25"]);
        solve_coupling(&p).unwrap().validate().unwrap();
    }

    #[test]
    fn infeasible_names_heaviest() {
        let p = parse(&["0.1", "0.6", "0.2", "0.1"]);
        assert_eq!(solve_coupling(&p).unwrap_err(), Error::Infeasible { index: 1 });
    }

    #[test]
    fn deterministic_output() {
        let p = parse(&["0.35", "0.3", "0.2", "0.1", "0.05"]);
        assert_eq!(solve_coupling(&p).unwrap(), solve_coupling(&p).unwrap());
    }

    #[test]
    fn float_mode_within_tolerance() {
        let p = vec![0.4, 0.3, 0.2, 0.1];
        let c = solve_coupling(&p).unwrap();
        c.validate().unwrap();
    }

    #[test]
    fn builder_examples() {
        let policy = BlockPolicy { residual: ResidualPolicy::Grow, ..BlockPolicy::default() };
        let b = block_builder(&qv(&[(1, 2), (1, 2)]), 2, &policy).unwrap();
        assert_eq!(b.blocks.len(), 1);
        assert_eq!(b.blocks[0].members, vec![0, 1]);
        assert!(b.residual.is_empty());

        let bern = parse(&["0.64", "0.16", "0.16", "0.04"]);
        let b = block_builder(&bern, 4, &policy).unwrap();
        assert!(!b.residual.is_empty());
        assert!(b.grow_requested);

        let b = block_builder(&parse(&["0.4", "0.3", "0.2", "0.1"]), 4, &policy).unwrap();
        assert_eq!(b.blocks.len(), 1);
        assert_eq!(b.blocks[0].members, vec![0, 1, 2, 3]);
        assert!(b.residual.is_empty());
        assert!(!b.grow_requested);
    }

    #[test]
    fn builder_drops_heavy_point() {
        let w = parse(&["0.64", "0.16", "0.16", "0.04"]);
        let b = block_builder(&w, 3, &BlockPolicy::default()).unwrap();
        assert_eq!(b.residual, vec![0]);
        assert_eq!(b.residual_mass, Rational::parse("0.64").unwrap());
        assert_eq!(b.blocks[0].members, vec![1, 2, 3]);
        assert!(!b.grow_requested);
    }

    #[test]
    fn builder_chunks_uniform_blocks() {
        let w = vec![Rational::from_ratio(1, 16); 16];
        let b = block_builder(&w, 4, &BlockPolicy::default()).unwrap();
        assert_eq!(b.blocks.len(), 4);
        assert!(b.blocks.iter().all(|blk| blk.members.len() == 4));
        let labels = b.labels(16);
        assert_eq!(labels[5], Some((1, 1)));
    }

    #[test]
    fn wire_format() {
        let c = solve_coupling(&qv(&[(1, 2), (1, 2)])).unwrap();
        let s = serde_json::to_string(&c.to_wire()).unwrap();
        assert!(s.contains(r#""q":[["0","1/2"],["1/2","0"]]"#), "{s}");
    }
}
