//! Finite probability spaces and the lattice of set partitions.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::{sum, Scalar};

/// Largest point count that may be enumerated exhaustively without a cap.
pub const MAX_ENUMERATION: usize = 12;

/// A finite point set `{0, .., n-1}` with strictly positive weights summing to one.
#[derive(Clone, Debug, PartialEq)]
pub struct FiniteSpace<S> {
    weights: Vec<S>,
}

impl<S: Scalar> FiniteSpace<S> {
    pub fn new(weights: Vec<S>) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::InvalidWeights("empty weight vector".into()));
        }
        if let Some(i) = weights.iter().position(|w| !w.is_positive()) {
            return Err(Error::InvalidWeights(format!("weight {i} is not positive")));
        }
        let total = sum(&weights);
        if !total.approx_eq(&S::one()) {
            return Err(Error::InvalidWeights(format!("weights sum to {total}")));
        }
        Ok(Self { weights })
    }

    pub fn uniform(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidWeights("empty weight vector".into()));
        }
        Self::new(vec![S::from_ratio(1, n as i64); n])
    }

    /// Parses weights written as `"2/5"` or `"0.4"`.
    pub fn parse<T: AsRef<str>>(weights: &[T]) -> Result<Self> {
        let w = weights.iter().map(|s| S::parse(s.as_ref())).collect::<Result<Vec<_>>>()?;
        Self::new(w)
    }

    pub fn size(&self) -> usize {
        self.weights.len()
    }

    pub fn weights(&self) -> &[S] {
        &self.weights
    }

    pub fn weight(&self, x: usize) -> &S {
        &self.weights[x]
    }

    pub fn mass(&self, points: &[usize]) -> S {
        let mut m = S::zero();
        for &x in points {
            m += &self.weights[x];
        }
        m
    }

    pub fn to_wire(&self) -> SpaceWire {
        SpaceWire { weights: self.weights.iter().map(|w| w.to_string()).collect() }
    }
}

/// JSON form: `{"weights": ["2/5", "3/10", ...]}`. Numbers are accepted as
/// well as strings.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct SpaceWire {
    #[serde(deserialize_with = "crate::io::numeric_strings")]
    pub weights: Vec<String>,
}

impl SpaceWire {
    pub fn into_space<S: Scalar>(&self) -> Result<FiniteSpace<S>> {
        FiniteSpace::parse(&self.weights)
    }
}

/// Conditional weights of the points of `block`, renormalized to sum one, in
/// block order.
pub fn conditional_weights<S: Scalar>(space: &FiniteSpace<S>, block: &[usize]) -> Result<Vec<S>> {
    if block.is_empty() {
        return Err(Error::EmptyBlock);
    }
    if let Some(&x) = block.iter().find(|&&x| x >= space.size()) {
        return Err(Error::InvalidPartition(format!("point {x} outside space")));
    }
    let total = space.mass(block);
    Ok(block.iter().map(|&x| space.weight(x).clone() / total.clone()).collect())
}

/// A set partition of `{0, .., n-1}` in canonical form: every block sorted,
/// blocks ordered by least element.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Partition {
    n: usize,
    blocks: Vec<Vec<usize>>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PartitionKind {
    Trivial,
    Discrete,
    Proper,
}

impl Partition {
    /// Builds a partition from arbitrary blocks, validating coverage and
    /// disjointness and bringing it to canonical form.
    pub fn new(n: usize, blocks: Vec<Vec<usize>>) -> Result<Self> {
        let mut seen = vec![false; n];
        let mut canon = Vec::with_capacity(blocks.len());
        for mut b in blocks {
            if b.is_empty() {
                return Err(Error::EmptyBlock);
            }
            b.sort_unstable();
            for &x in &b {
                if x >= n {
                    return Err(Error::InvalidPartition(format!("point {x} outside 0..{n}")));
                }
                if std::mem::replace(&mut seen[x], true) {
                    return Err(Error::InvalidPartition(format!("point {x} appears twice")));
                }
            }
            canon.push(b);
        }
        if let Some(x) = seen.iter().position(|s| !s) {
            return Err(Error::InvalidPartition(format!("point {x} not covered")));
        }
        canon.sort_unstable_by_key(|b| b[0]);
        Ok(Self { n, blocks: canon })
    }

    /// Builds a partition from a block label per point.
    pub fn from_labels(labels: &[usize]) -> Self {
        let mut index_of_label: Vec<Option<usize>> = Vec::new();
        let mut blocks: Vec<Vec<usize>> = Vec::new();
        for (x, &l) in labels.iter().enumerate() {
            if l >= index_of_label.len() {
                index_of_label.resize(l + 1, None);
            }
            match index_of_label[l] {
                Some(b) => blocks[b].push(x),
                None => {
                    index_of_label[l] = Some(blocks.len());
                    blocks.push(vec![x]);
                }
            }
        }
        // first-appearance order is already sorted by least element
        Self { n: labels.len(), blocks }
    }

    pub fn trivial(n: usize) -> Self {
        Self { n, blocks: vec![(0..n).collect()] }
    }

    pub fn discrete(n: usize) -> Self {
        Self { n, blocks: (0..n).map(|x| vec![x]).collect() }
    }

    pub fn size(&self) -> usize {
        self.n
    }

    pub fn blocks(&self) -> &[Vec<usize>] {
        &self.blocks
    }

    pub fn num_blocks(&self) -> usize {
        self.blocks.len()
    }

    /// Block index of every point.
    pub fn labels(&self) -> Vec<usize> {
        let mut labels = vec![0; self.n];
        for (b, block) in self.blocks.iter().enumerate() {
            for &x in block {
                labels[x] = b;
            }
        }
        labels
    }

    pub fn classify(&self) -> PartitionKind {
        if self.blocks.len() == 1 {
            PartitionKind::Trivial
        } else if self.blocks.len() == self.n {
            PartitionKind::Discrete
        } else {
            PartitionKind::Proper
        }
    }

    pub fn is_trivial(&self) -> bool {
        self.blocks.len() == 1
    }

    /// `true` when every block of `self` lies inside a block of `other`.
    pub fn refines(&self, other: &Partition) -> bool {
        if self.n != other.n {
            return false;
        }
        let labels = other.labels();
        self.blocks.iter().all(|b| b.iter().all(|&x| labels[x] == labels[b[0]]))
    }
}

impl fmt::Display for Partition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{{")?;
        for (i, b) in self.blocks.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{{")?;
            for (j, x) in b.iter().enumerate() {
                if j > 0 {
                    write!(f, ",")?;
                }
                write!(f, "{x}")?;
            }
            write!(f, "}}")?;
        }
        write!(f, "}}")
    }
}

impl Serialize for Partition {
    fn serialize<Ser: serde::Serializer>(&self, serializer: Ser) -> Result<Ser::Ok, Ser::Error> {
        self.blocks.serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for Partition {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let blocks = Vec::<Vec<usize>>::deserialize(deserializer)?;
        let n = blocks.iter().map(Vec::len).sum();
        Partition::new(n, blocks).map_err(serde::de::Error::custom)
    }
}

/// Coarsest common refinement: nonempty pairwise block intersections.
pub fn join(p1: &Partition, p2: &Partition) -> Result<Partition> {
    if p1.n != p2.n {
        return Err(Error::SizeMismatch { left: p1.n, right: p2.n });
    }
    let l1 = p1.labels();
    let l2 = p2.labels();
    let k2 = p2.num_blocks();
    let labels: Vec<usize> = (0..p1.n).map(|x| l1[x] * k2 + l2[x]).collect();
    Ok(Partition::from_labels(&labels))
}

/// Finest common coarsening: connected components of block overlap.
pub fn meet(p1: &Partition, p2: &Partition) -> Result<Partition> {
    if p1.n != p2.n {
        return Err(Error::SizeMismatch { left: p1.n, right: p2.n });
    }
    let mut parent: Vec<usize> = (0..p1.n).collect();
    fn find(parent: &mut [usize], mut x: usize) -> usize {
        while parent[x] != x {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        x
    }
    for block in p1.blocks.iter().chain(p2.blocks.iter()) {
        for &x in &block[1..] {
            let a = find(&mut parent, block[0]);
            let b = find(&mut parent, x);
            if a != b {
                parent[a.max(b)] = a.min(b);
            }
        }
    }
    let labels: Vec<usize> = (0..p1.n).map(|x| find(&mut parent, x)).collect();
    Ok(Partition::from_labels(&labels))
}

/// Every set partition of `{0, .., n-1}` exactly once, in restricted-growth
/// string order. Without a cap, `n` must not exceed [`MAX_ENUMERATION`].
pub fn enumerate_partitions(n: usize, cap: Option<usize>) -> Result<PartitionIter> {
    if n == 0 {
        return Err(Error::InvalidPartition("empty point set".into()));
    }
    if cap.is_none() && n > MAX_ENUMERATION {
        return Err(Error::SizeLimit { n, limit: MAX_ENUMERATION });
    }
    Ok(PartitionIter { rgs: vec![0; n], maxes: vec![0; n], done: false, remaining: cap })
}

/// Iterator over restricted growth strings `a` with `a[0] = 0` and
/// `a[i] <= 1 + max(a[..i])`.
#[derive(Clone, Debug)]
pub struct PartitionIter {
    rgs: Vec<usize>,
    // maxes[i] = max(rgs[..=i])
    maxes: Vec<usize>,
    done: bool,
    remaining: Option<usize>,
}

impl Iterator for PartitionIter {
    type Item = Partition;

    fn next(&mut self) -> Option<Partition> {
        if self.done {
            return None;
        }
        if let Some(r) = self.remaining.as_mut() {
            if *r == 0 {
                self.done = true;
                return None;
            }
            *r -= 1;
        }
        let out = Partition::from_labels(&self.rgs);

        let n = self.rgs.len();
        let mut i = n;
        loop {
            if i <= 1 {
                self.done = true;
                break;
            }
            i -= 1;
            if self.rgs[i] <= self.maxes[i - 1] {
                self.rgs[i] += 1;
                self.maxes[i] = self.maxes[i - 1].max(self.rgs[i]);
                for j in i + 1..n {
                    self.rgs[j] = 0;
                    self.maxes[j] = self.maxes[i];
                }
                break;
            }
        }
        Some(out)
    }
}
