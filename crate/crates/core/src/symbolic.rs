//! Homoclinic perturbations of a Bernoulli shift, evaluated on cylinder
//! functions.
//!
//! The base system is the two-sided shift over a finite alphabet with a
//! product measure. `T` is the right shift, `(Tx)_i = x_{i-1}`, so the
//! Koopman operator `f -> f∘T` moves a cylinder window one step to the left.
//!
//! A perturbation `Φ` re-draws the coordinates in the base window
//! `B = [0, r-1]` inside the blocks of a [`BlockSystem`] built over the `a^r`
//! configurations of `B`; `Φ_k` is the same rule on `B + k`. We write
//! `Π = ΦT`, `Λ_n = Φ_0 Φ_1 ⋯ Φ_{n-1}` and `Γ_n = Φ_{-n} ⋯ Φ_{-1}`, so that
//! `Πⁿ = Λ_n Tⁿ`. Operators compose in reverse, `V_{PQ} = V_Q V_P`.
//!
//! Limits are never materialized. A pairing `⟨V_{Λ_n} f, g⟩` is evaluated as
//! `⟨f, V_{Λ_n}^* g⟩`: the factors far to the right act first and leave `g`
//! alone until they reach its window, which makes stabilization exact. The
//! `Γ` side is evaluated forward on `f` for the mirror reason.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::coupling::{block_builder, solve_coupling, Block, BlockPolicy, BlockSystem, ResidualPolicy};
use crate::error::{Error, Result};
use crate::finite_space::FiniteSpace;
use crate::linalg::Matrix;
use crate::scalar::Scalar;

/// Largest cylinder table (in entries) any operation will build.
pub const MAX_TABLE_ENTRIES: usize = 1 << 18;

/// Largest table the tail probe will eliminate over.
pub const MAX_PROBE_ENTRIES: usize = 512;

/// Bernoulli shift over `{0, .., a-1}` with i.i.d. site weights.
#[derive(Clone, Debug, PartialEq)]
pub struct SymbolicSystem<S> {
    weights: Vec<S>,
}

impl<S: Scalar> SymbolicSystem<S> {
    pub fn new(weights: Vec<S>) -> Result<Self> {
        let space = FiniteSpace::new(weights)?;
        Ok(Self { weights: space.weights().to_vec() })
    }

    pub fn uniform(alphabet: usize) -> Result<Self> {
        Ok(Self { weights: FiniteSpace::uniform(alphabet)?.weights().to_vec() })
    }

    pub fn parse<T: AsRef<str>>(weights: &[T]) -> Result<Self> {
        Ok(Self { weights: FiniteSpace::parse(weights)?.weights().to_vec() })
    }

    pub fn alphabet(&self) -> usize {
        self.weights.len()
    }

    pub fn weights(&self) -> &[S] {
        &self.weights
    }

    /// Product weight of every word of length `len`, in table order.
    pub fn word_weights(&self, len: usize) -> Vec<S> {
        let mut out = vec![S::one()];
        for _ in 0..len {
            out = out.iter().flat_map(|w| self.weights.iter().map(move |x| w.clone() * x.clone())).collect();
        }
        out
    }
}

fn table_size(alphabet: usize, len: usize) -> Option<usize> {
    alphabet.checked_pow(u32::try_from(len).ok()?)
}

/// Writes the base-`a` digits of `idx` (most significant first).
fn decode(mut idx: usize, a: usize, out: &mut [usize]) {
    for d in out.iter_mut().rev() {
        *d = idx % a;
        idx /= a;
    }
}

/// A function of the coordinates `lo, .., lo+len-1`.
///
/// Table index of a word `x_lo .. x_{lo+len-1}` is its base-`a` value with
/// `x_lo` most significant. `len == 0` is a constant.
#[derive(Clone, Debug, PartialEq)]
pub struct CylinderFunction<S> {
    alphabet: usize,
    lo: i64,
    len: usize,
    table: Vec<S>,
}

impl<S: Scalar> CylinderFunction<S> {
    pub fn new(alphabet: usize, lo: i64, len: usize, table: Vec<S>) -> Result<Self> {
        if alphabet == 0 {
            return Err(Error::Format("empty alphabet".into()));
        }
        let expect = table_size(alphabet, len).filter(|&n| n <= MAX_TABLE_ENTRIES);
        match expect {
            Some(n) if n == table.len() => Ok(Self { alphabet, lo: if len == 0 { 0 } else { lo }, len, table }),
            Some(n) => Err(Error::SizeMismatch { left: table.len(), right: n }),
            None => Err(Error::Guard(format!("cylinder table over {len} sites is too large"))),
        }
    }

    pub fn constant(alphabet: usize, value: S) -> Self {
        Self { alphabet, lo: 0, len: 0, table: vec![value] }
    }

    /// `x -> values[x_site]`.
    pub fn single_site(site: i64, values: Vec<S>) -> Self {
        Self { alphabet: values.len(), lo: site, len: 1, table: values }
    }

    pub fn from_fn(alphabet: usize, lo: i64, len: usize, mut f: impl FnMut(&[usize]) -> S) -> Result<Self> {
        let n = table_size(alphabet, len)
            .filter(|&n| n <= MAX_TABLE_ENTRIES)
            .ok_or_else(|| Error::Guard(format!("cylinder table over {len} sites is too large")))?;
        let mut word = vec![0; len];
        let table = (0..n)
            .map(|idx| {
                decode(idx, alphabet, &mut word);
                f(&word)
            })
            .collect();
        Self::new(alphabet, lo, len, table)
    }

    /// Random function on a window inside `[lo_min, hi_max]` of at most
    /// `max_len` sites, with values `n/d`, `|n| <= 3`, `1 <= d <= 3`.
    pub fn random<R: Rng>(alphabet: usize, lo_min: i64, hi_max: i64, max_len: usize, rng: &mut R) -> Self {
        let span = usize::try_from(hi_max - lo_min + 1).unwrap_or(0).min(max_len);
        if span == 0 {
            return Self::constant(alphabet, S::from_ratio(rng.gen_range(-3..=3), 1));
        }
        let len = rng.gen_range(1..=span);
        let lo = rng.gen_range(lo_min..=hi_max + 1 - len as i64);
        Self::from_fn(alphabet, lo, len, |_| S::from_ratio(rng.gen_range(-3..=3), rng.gen_range(1..=3)))
            .expect("random window within table limits")
    }

    pub fn alphabet(&self) -> usize {
        self.alphabet
    }

    pub fn lo(&self) -> i64 {
        self.lo
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn table(&self) -> &[S] {
        &self.table
    }

    /// Inclusive site range, `None` for constants.
    pub fn window(&self) -> Option<(i64, i64)> {
        (self.len > 0).then(|| (self.lo, self.lo + self.len as i64 - 1))
    }

    pub fn value(&self, word: &[usize]) -> &S {
        assert_eq!(word.len(), self.len, "word length must match the window");
        let idx = word.iter().fold(0, |acc, &d| acc * self.alphabet + d);
        &self.table[idx]
    }

    fn contains(&self, site: i64) -> bool {
        self.window().is_some_and(|(lo, hi)| lo <= site && site <= hi)
    }

    fn stride(&self, site: i64) -> usize {
        let pos = (site - self.lo) as usize;
        self.alphabet.pow((self.len - 1 - pos) as u32)
    }

    /// Same values on the window moved by `by`.
    pub fn translate(&self, by: i64) -> Self {
        let mut out = self.clone();
        if out.len > 0 {
            out.lo += by;
        }
        out
    }

    /// Drops edge coordinates the function does not depend on.
    pub fn canonical(&self) -> Self {
        let a = self.alphabet;
        let mut f = self.clone();
        while f.len > 0 {
            let block = f.table.len() / a;
            let head = &f.table[..block];
            if (1..a).all(|d| &f.table[d * block..(d + 1) * block] == head) {
                f.table.truncate(block);
                f.lo += 1;
                f.len -= 1;
                continue;
            }
            if f.table.chunks(a).all(|c| c.iter().all(|v| v == &c[0])) {
                f.table = f.table.chunks(a).map(|c| c[0].clone()).collect();
                f.len -= 1;
                continue;
            }
            break;
        }
        if f.len == 0 {
            f.lo = 0;
        }
        f
    }

    /// The same function written over `[lo, lo+len)`, which must contain the
    /// current window.
    pub fn extend(&self, lo: i64, len: usize) -> Result<Self> {
        if let Some((flo, fhi)) = self.window() {
            if flo < lo || fhi > lo + len as i64 - 1 {
                return Err(Error::Format("extension window must contain the function window".into()));
            }
        }
        let shift = (self.lo - lo).max(0) as usize;
        Self::from_fn(self.alphabet, lo, len, |w| {
            let idx = w[shift..shift + self.len].iter().fold(0, |acc, &d| acc * self.alphabet + d);
            self.table[idx].clone()
        })
    }

    /// Conditional expectation onto the sub-window `[lo, lo+len)`.
    fn marginal(&self, system: &SymbolicSystem<S>, lo: i64, len: usize) -> Self {
        let a = self.alphabet;
        let offset = (lo - self.lo) as usize;
        let mut out = vec![S::zero(); a.pow(len as u32)];
        let mut word = vec![0; self.len];
        for (idx, v) in self.table.iter().enumerate() {
            if v.is_zero() {
                continue;
            }
            decode(idx, a, &mut word);
            let mut w = v.clone();
            let mut j = 0;
            for (t, &d) in word.iter().enumerate() {
                if t >= offset && t < offset + len {
                    j = j * a + d;
                } else {
                    w = w * system.weights[d].clone();
                }
            }
            out[j] += &w;
        }
        Self { alphabet: a, lo: if len == 0 { 0 } else { lo }, len, table: out }
    }

    pub fn mean(&self, system: &SymbolicSystem<S>) -> S {
        self.marginal(system, 0, 0).table[0].clone()
    }

    /// Squared norm in `L²` of the product measure.
    pub fn norm_sq(&self, system: &SymbolicSystem<S>) -> S {
        pairing(self, self, system)
    }
}

/// `⟨f, g⟩ = E[f g]` under the product measure.
///
/// Coordinates private to one side are integrated out first, so the cost is
/// linear in the two tables.
pub fn pairing<S: Scalar>(f: &CylinderFunction<S>, g: &CylinderFunction<S>, system: &SymbolicSystem<S>) -> S {
    assert_eq!(f.alphabet, system.alphabet(), "alphabet mismatch");
    assert_eq!(g.alphabet, system.alphabet(), "alphabet mismatch");
    let (Some((flo, fhi)), Some((glo, ghi))) = (f.window(), g.window()) else {
        return f.mean(system) * g.mean(system);
    };
    let (lo, hi) = (flo.max(glo), fhi.min(ghi));
    if lo > hi {
        return f.mean(system) * g.mean(system);
    }
    let len = (hi - lo + 1) as usize;
    let fm = f.marginal(system, lo, len);
    let gm = g.marginal(system, lo, len);
    let mut acc = S::zero();
    for ((w, x), y) in system.word_weights(len).iter().zip(&fm.table).zip(&gm.table) {
        if !x.is_zero() && !y.is_zero() {
            acc += &(w.clone() * x.clone() * y.clone());
        }
    }
    acc
}

/// Koopman operator of `T^k`: the window moves by `-k`.
pub fn shift_apply<S: Scalar>(f: &CylinderFunction<S>, k: i64) -> CylinderFunction<S> {
    f.translate(-k)
}

/// Words over a window, grouped into blocks. A block lists complete words
/// whose first `r` letters are the base-window configuration; any further
/// letters pin coordinates to the right of the window.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PerturbationLayout {
    pub alphabet: usize,
    pub r: usize,
    pub blocks: Vec<Vec<Vec<usize>>>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct AssociationReport {
    pub associated: bool,
    /// No blocks at all: the perturbation is the identity.
    pub degenerate: bool,
    pub reason: Option<String>,
}

/// A layout is associated with the finitely-differing relation when every
/// block only re-draws coordinates of the base window, i.e. its words agree
/// everywhere outside it.
pub fn association_check(layout: &PerturbationLayout) -> AssociationReport {
    let fail = |reason: String| AssociationReport { associated: false, degenerate: false, reason: Some(reason) };
    let mut seen = std::collections::BTreeSet::new();
    for (b, block) in layout.blocks.iter().enumerate() {
        for word in block {
            if word.len() < layout.r {
                return fail(format!("block {b} has a word shorter than the window"));
            }
            if word.iter().any(|&l| l >= layout.alphabet) {
                return fail(format!("block {b} uses a letter outside the alphabet"));
            }
            if !seen.insert(word.clone()) {
                return fail(format!("word {word:?} appears twice"));
            }
        }
        if let Some(first) = block.first() {
            if block.iter().any(|w| w[layout.r..] != first[layout.r..]) {
                return fail(format!("block {b} mixes different words outside the window"));
            }
        }
    }
    AssociationReport { associated: true, degenerate: layout.blocks.is_empty(), reason: None }
}

type Transitions<S> = Vec<Vec<(usize, S)>>;

/// `Φ` on the base window `[0, r-1]`: every configuration in a block moves to
/// the configuration labelled `j` with probability `q[i][j] / p[i]`; the
/// residual stays put.
#[derive(Clone, Debug)]
pub struct PerturbationSpec<S> {
    system: SymbolicSystem<S>,
    r: usize,
    blocks: BlockSystem<S>,
    forward: Transitions<S>,
    backward: Transitions<S>,
}

impl<S: Scalar> PerturbationSpec<S> {
    /// Blocks from [`block_builder`] over the `a^r` configurations. Under
    /// [`ResidualPolicy::Grow`] a residual above the cap is an error, so the
    /// caller can retry with a larger window (see [`Self::grow`]).
    pub fn new(system: SymbolicSystem<S>, r: usize, min_block: usize, policy: &BlockPolicy<S>) -> Result<Self> {
        let configs = Self::config_count(&system, r)?;
        let blocks = block_builder(&system.word_weights(r), min_block, policy)?;
        debug_assert!(blocks.labels(configs).len() == configs);
        if blocks.grow_requested {
            return Err(Error::ResidualCap {
                residual: blocks.residual_mass.to_string(),
                cap: policy.residual_cap.to_string(),
            });
        }
        Ok(Self::from_blocks(system, r, blocks))
    }

    /// Smallest `r` in `r_min..=r_max` whose residual fits under the cap.
    pub fn grow(system: SymbolicSystem<S>, r_min: usize, r_max: usize, min_block: usize, cap: S) -> Result<Self> {
        let policy = BlockPolicy { residual: ResidualPolicy::Grow, residual_cap: cap };
        let mut last = Error::Guard("empty window range".into());
        for r in r_min..=r_max {
            match Self::new(system.clone(), r, min_block, &policy) {
                Err(e @ Error::ResidualCap { .. }) => last = e,
                other => return other,
            }
        }
        Err(last)
    }

    /// Hand-built blocks; rejected unless associated with the window.
    pub fn from_layout(system: SymbolicSystem<S>, layout: &PerturbationLayout) -> Result<Self> {
        if layout.alphabet != system.alphabet() {
            return Err(Error::SizeMismatch { left: layout.alphabet, right: system.alphabet() });
        }
        let report = association_check(layout);
        if !report.associated {
            return Err(Error::NotAssociated(report.reason.unwrap_or_default()));
        }
        let r = layout.r;
        let configs = Self::config_count(&system, r)?;
        let a = system.alphabet();
        let weights = system.word_weights(r);
        let mut blocks = Vec::with_capacity(layout.blocks.len());
        let mut used = vec![false; configs];
        for block in &layout.blocks {
            if block.iter().any(|w| w.len() != r) {
                return Err(Error::Format("layout words must span exactly the window".into()));
            }
            let members: Vec<usize> = block.iter().map(|w| w.iter().fold(0, |acc, &d| acc * a + d)).collect();
            let mass = members.iter().fold(S::zero(), |acc, &c| acc + weights[c].clone());
            let cond: Vec<S> = members.iter().map(|&c| weights[c].clone() / mass.clone()).collect();
            let coupling = solve_coupling(&cond)?;
            for &c in &members {
                used[c] = true;
            }
            blocks.push(Block { members, weights: cond, coupling });
        }
        let residual: Vec<usize> = (0..configs).filter(|&c| !used[c]).collect();
        let residual_mass = residual.iter().fold(S::zero(), |acc, &c| acc + weights[c].clone());
        let blocks = BlockSystem { blocks, residual, residual_mass, grow_requested: false };
        Ok(Self::from_blocks(system, r, blocks))
    }

    fn config_count(system: &SymbolicSystem<S>, r: usize) -> Result<usize> {
        if r == 0 {
            return Err(Error::Format("window length r must be at least 1".into()));
        }
        table_size(system.alphabet(), r)
            .filter(|&n| n <= MAX_TABLE_ENTRIES)
            .ok_or_else(|| Error::Guard(format!("{} configurations of length {r} are too many", system.alphabet())))
    }

    fn from_blocks(system: SymbolicSystem<S>, r: usize, blocks: BlockSystem<S>) -> Self {
        let configs = system.alphabet().pow(r as u32);
        let mut forward: Transitions<S> = (0..configs).map(|c| vec![(c, S::one())]).collect();
        let mut backward = forward.clone();
        for block in &blocks.blocks {
            let q = block.coupling.q();
            for (i, &c) in block.members.iter().enumerate() {
                let p = block.weights[i].clone();
                forward[c] = block
                    .members
                    .iter()
                    .enumerate()
                    .filter(|&(j, _)| !q[(i, j)].is_zero())
                    .map(|(j, &d)| (d, q[(i, j)].clone() / p.clone()))
                    .collect();
                backward[c] = block
                    .members
                    .iter()
                    .enumerate()
                    .filter(|&(j, _)| !q[(j, i)].is_zero())
                    .map(|(j, &d)| (d, q[(j, i)].clone() / p.clone()))
                    .collect();
            }
        }
        Self { system, r, blocks, forward, backward }
    }

    pub fn system(&self) -> &SymbolicSystem<S> {
        &self.system
    }

    pub fn r(&self) -> usize {
        self.r
    }

    pub fn blocks(&self) -> &BlockSystem<S> {
        &self.blocks
    }

    pub fn residual_mass(&self) -> &S {
        &self.blocks.residual_mass
    }

    /// Transition probabilities of `Φ` between configurations of `B`.
    pub fn transitions(&self) -> &[Vec<(usize, S)>] {
        &self.forward
    }

    /// The blocks spelled out as words of length `r`.
    pub fn layout(&self) -> PerturbationLayout {
        let a = self.system.alphabet();
        let spell = |c: usize| {
            let mut w = vec![0; self.r];
            decode(c, a, &mut w);
            w
        };
        PerturbationLayout {
            alphabet: a,
            r: self.r,
            blocks: self.blocks.blocks.iter().map(|b| b.members.iter().map(|&c| spell(c)).collect()).collect(),
        }
    }

    pub fn association(&self) -> AssociationReport {
        association_check(&self.layout())
    }

    fn overlaps(&self, f: &CylinderFunction<S>, k: i64) -> bool {
        f.window().is_some_and(|(lo, hi)| k <= hi && k + self.r as i64 - 1 >= lo)
    }
}

fn apply<S: Scalar>(
    f: &CylinderFunction<S>,
    spec: &PerturbationSpec<S>,
    k: i64,
    table: &Transitions<S>,
) -> Result<CylinderFunction<S>> {
    assert_eq!(f.alphabet, spec.system.alphabet(), "alphabet mismatch");
    if !spec.overlaps(f, k) {
        return Ok(f.clone());
    }
    let (flo, fhi) = f.window().expect("overlap implies a window");
    let a = f.alphabet;
    let r = spec.r;
    let (blo, bhi) = (k, k + r as i64 - 1);
    let (lo, hi) = (flo.min(blo), fhi.max(bhi));
    let len = (hi - lo + 1) as usize;
    let size = table_size(a, len)
        .filter(|&n| n <= MAX_TABLE_ENTRIES)
        .ok_or_else(|| Error::Guard(format!("perturbed window [{lo}, {hi}] is too large")))?;

    // where each configuration of B+k lands in f's table
    let mut cfg = vec![0; r];
    let cfg_offset: Vec<usize> = (0..table.len())
        .map(|c| {
            decode(c, a, &mut cfg);
            (0..r).filter(|&t| f.contains(blo + t as i64)).map(|t| cfg[t] * f.stride(blo + t as i64)).sum()
        })
        .collect();
    let outside: Vec<(usize, usize)> = (0..len)
        .filter_map(|t| {
            let site = lo + t as i64;
            (f.contains(site) && !(blo..=bhi).contains(&site)).then(|| (t, f.stride(site)))
        })
        .collect();
    let b_at = (blo - lo) as usize;

    let mut word = vec![0; len];
    let mut out = Vec::with_capacity(size);
    for idx in 0..size {
        decode(idx, a, &mut word);
        let c = word[b_at..b_at + r].iter().fold(0, |acc, &d| acc * a + d);
        let base: usize = outside.iter().map(|&(t, s)| word[t] * s).sum();
        let mut acc = S::zero();
        for (c2, pr) in &table[c] {
            let v = &f.table[base + cfg_offset[*c2]];
            if !v.is_zero() {
                acc += &(pr.clone() * v.clone());
            }
        }
        out.push(acc);
    }
    Ok(CylinderFunction { alphabet: a, lo, len, table: out }.canonical())
}

/// `V_{Φ_k} f`, the average of `f` over the re-drawn window `B + k`.
/// Returns `f` itself when `B + k` misses its window.
pub fn phi_apply<S: Scalar>(
    f: &CylinderFunction<S>,
    spec: &PerturbationSpec<S>,
    k: i64,
) -> Result<CylinderFunction<S>> {
    apply(f, spec, k, &spec.forward)
}

/// `V_{Φ_k}^*`, driven by the transposed block couplings.
pub fn phi_adjoint_apply<S: Scalar>(
    g: &CylinderFunction<S>,
    spec: &PerturbationSpec<S>,
    k: i64,
) -> Result<CylinderFunction<S>> {
    apply(g, spec, k, &spec.backward)
}

/// A pairing against a product of `Φ_k`'s together with its limit.
#[derive(Clone, Debug, PartialEq)]
pub struct LimitPairing<S> {
    /// Pairing at the requested `n`.
    pub value: S,
    /// Value the sequence settles on.
    pub limit: S,
    /// Smallest `m` with the pairing equal to `limit` for every `n >= m`.
    pub stabilized_at: usize,
    /// Sites re-drawn while evaluating `value`.
    pub touched: Vec<i64>,
}

/// `V_{Λ_n}^* g = V_{Φ_0}^* ⋯ V_{Φ_{n-1}}^* g`.
fn lambda_adjoint<S: Scalar>(
    g: &CylinderFunction<S>,
    spec: &PerturbationSpec<S>,
    n: usize,
    touched: &mut Vec<i64>,
) -> Result<CylinderFunction<S>> {
    let mut h = g.clone();
    for k in (0..n as i64).rev() {
        if spec.overlaps(&h, k) {
            touched.extend(k..k + spec.r as i64);
            h = phi_adjoint_apply(&h, spec, k)?;
        }
    }
    Ok(h)
}

/// `V_{Γ_n} f = V_{Φ_{-1}} ⋯ V_{Φ_{-n}} f`.
fn gamma_forward<S: Scalar>(
    f: &CylinderFunction<S>,
    spec: &PerturbationSpec<S>,
    n: usize,
    touched: &mut Vec<i64>,
) -> Result<CylinderFunction<S>> {
    let mut h = f.clone();
    for k in -(n as i64)..0 {
        if spec.overlaps(&h, k) {
            touched.extend(k..k + spec.r as i64);
            h = phi_apply(&h, spec, k)?;
        }
    }
    Ok(h)
}

fn settle<S: Scalar>(series: &[S]) -> (S, usize) {
    let limit = series.last().expect("nonempty series").clone();
    let mut m = series.len() - 1;
    while m > 0 && series[m - 1] == limit {
        m -= 1;
    }
    (limit, m)
}

fn finish(mut touched: Vec<i64>) -> Vec<i64> {
    touched.sort_unstable();
    touched.dedup();
    touched
}

/// `⟨V_{Λ_n} f, g⟩`. Factors `Φ_k` with `k > hi(g)` leave `g` untouched when
/// applied first, so the sequence is constant from `hi(g) + 1` on.
pub fn lambda_pairing<S: Scalar>(
    f: &CylinderFunction<S>,
    g: &CylinderFunction<S>,
    spec: &PerturbationSpec<S>,
    n: usize,
) -> Result<LimitPairing<S>> {
    let horizon = g.window().map_or(0, |(_, hi)| (hi + 1).max(0) as usize);
    let series = lambda_series(f, g, spec, horizon)?;
    let (limit, stabilized_at) = settle(&series);
    let mut touched = Vec::new();
    let value = pairing(f, &lambda_adjoint(g, spec, n, &mut touched)?, &spec.system);
    Ok(LimitPairing { value, limit, stabilized_at, touched: finish(touched) })
}

/// `⟨V_{Λ_n} f, g⟩` for `n = 0..=n_max`.
pub fn lambda_series<S: Scalar>(
    f: &CylinderFunction<S>,
    g: &CylinderFunction<S>,
    spec: &PerturbationSpec<S>,
    n_max: usize,
) -> Result<Vec<S>> {
    (0..=n_max).map(|n| Ok(pairing(f, &lambda_adjoint(g, spec, n, &mut Vec::new())?, &spec.system))).collect()
}

/// `⟨V_{Γ_n} f, g⟩` with `Γ_n = Φ_{-n} ⋯ Φ_{-1}`; `n = 0` is `⟨f, g⟩`.
/// Constant once `B - n` lies left of `f`, i.e. from `r - lo(f)` on.
pub fn gamma_pairing<S: Scalar>(
    f: &CylinderFunction<S>,
    g: &CylinderFunction<S>,
    spec: &PerturbationSpec<S>,
    n: usize,
) -> Result<LimitPairing<S>> {
    let horizon = f.window().map_or(0, |(lo, _)| (spec.r as i64 - lo).max(0) as usize);
    let series = gamma_series(f, g, spec, horizon)?;
    let (limit, stabilized_at) = settle(&series);
    let mut touched = Vec::new();
    let value = pairing(&gamma_forward(f, spec, n, &mut touched)?, g, &spec.system);
    Ok(LimitPairing { value, limit, stabilized_at, touched: finish(touched) })
}

pub fn gamma_series<S: Scalar>(
    f: &CylinderFunction<S>,
    g: &CylinderFunction<S>,
    spec: &PerturbationSpec<S>,
    n_max: usize,
) -> Result<Vec<S>> {
    (0..=n_max).map(|n| Ok(pairing(&gamma_forward(f, spec, n, &mut Vec::new())?, g, &spec.system))).collect()
}

/// `⟨V_{Πⁿ} f, g⟩ = ⟨f, V_{Λ_n}^* V_{T^{-n}} g⟩`.
pub fn pi_pairing<S: Scalar>(
    f: &CylinderFunction<S>,
    g: &CylinderFunction<S>,
    spec: &PerturbationSpec<S>,
    n: usize,
) -> Result<S> {
    let h = lambda_adjoint(&shift_apply(g, -(n as i64)), spec, n, &mut Vec::new())?;
    Ok(pairing(f, &h, &spec.system))
}

/// [`pi_pairing`] for `n = 0..=n_max`.
pub fn pi_series<S: Scalar>(
    f: &CylinderFunction<S>,
    g: &CylinderFunction<S>,
    spec: &PerturbationSpec<S>,
    n_max: usize,
) -> Result<Vec<S>> {
    (0..=n_max).map(|n| pi_pairing(f, g, spec, n)).collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct IntertwiningResidual<S> {
    /// `⟨V_{ΠΛ_n} f, g⟩ - ⟨V_{Λ_{n+1}T} f, g⟩`.
    pub lambda: S,
    /// `⟨V_{Γ_nΠ} f, g⟩ - ⟨V_{TΓ_{n+1}} f, g⟩`.
    pub gamma: S,
}

impl<S: Scalar> IntertwiningResidual<S> {
    pub fn is_zero(&self) -> bool {
        self.lambda.is_negligible() && self.gamma.is_negligible()
    }
}

/// Both sides of `ΠΛ_n = Λ_{n+1}T` and `Γ_nΠ = TΓ_{n+1}`, each evaluated
/// along a different route.
pub fn intertwining_pairing_check<S: Scalar>(
    f: &CylinderFunction<S>,
    g: &CylinderFunction<S>,
    spec: &PerturbationSpec<S>,
    n: usize,
) -> Result<IntertwiningResidual<S>> {
    let sys = &spec.system;
    let mut scratch = Vec::new();

    // V_{ΠΛ_n} = V_{Λ_n} V_T V_Φ
    let pi_f = shift_apply(&phi_apply(f, spec, 0)?, 1);
    let lhs = pairing(&pi_f, &lambda_adjoint(g, spec, n, &mut scratch)?, sys);
    // V_{Λ_{n+1}T} = V_T V_{Λ_{n+1}}, and V_T^* = V_{T^{-1}}
    let rhs = pairing(f, &lambda_adjoint(&shift_apply(g, -1), spec, n + 1, &mut scratch)?, sys);
    let lambda = lhs - rhs;

    // V_{Γ_nΠ} = V_T V_Φ V_{Γ_n}
    let gamma_f = gamma_forward(f, spec, n, &mut scratch)?;
    let lhs = pairing(&shift_apply(&phi_apply(&gamma_f, spec, 0)?, 1), g, sys);
    // V_{TΓ_{n+1}} = V_{Γ_{n+1}} V_T
    let rhs = pairing(&gamma_forward(&shift_apply(f, 1), spec, n + 1, &mut scratch)?, g, sys);
    let gamma = lhs - rhs;

    Ok(IntertwiningResidual { lambda, gamma })
}

/// `⟨V_{Φ_k} f, g⟩ - ⟨f, g⟩`.
pub fn phi_k_identity_check<S: Scalar>(
    f: &CylinderFunction<S>,
    g: &CylinderFunction<S>,
    spec: &PerturbationSpec<S>,
    k: i64,
) -> Result<S> {
    Ok(pairing(&phi_apply(f, spec, k)?, g, &spec.system) - pairing(f, g, &spec.system))
}

/// Dimension of the cylinder functions on `[-window, window]` left fixed by
/// every single-coordinate resampling `Q_i`.
///
/// Each `Q_i` is an orthogonal projection in `L²`, so `I - Q_i` is positive
/// and the common fixed space is the kernel of `Σ_i (I - Q_i)`.
pub fn tail_ergodicity_probe<S: Scalar>(system: &SymbolicSystem<S>, window: usize) -> Result<usize> {
    let a = system.alphabet();
    if window > 4 || a > 4 {
        return Err(Error::Guard(format!("tail probe needs window <= 4 and alphabet <= 4 (got {window}, {a})")));
    }
    let sites = 2 * window + 1;
    let n = table_size(a, sites)
        .filter(|&n| n <= MAX_PROBE_ENTRIES)
        .ok_or_else(|| Error::Guard(format!("tail probe table {a}^{sites} exceeds {MAX_PROBE_ENTRIES} entries")))?;
    let mut m = Matrix::<S>::zeros(n, n);
    let mut word = vec![0; sites];
    for x in 0..n {
        decode(x, a, &mut word);
        for i in 0..sites {
            let stride = a.pow((sites - 1 - i) as u32);
            let base = x - word[i] * stride;
            m[(x, x)] += &S::one();
            for (b, w) in system.weights().iter().enumerate() {
                let y = base + b * stride;
                m[(x, y)] = m[(x, y)].clone() - w.clone();
            }
        }
    }
    Ok(m.nullity())
}

fn default_cap() -> String {
    "1/64".into()
}

/// Sweep bounds for symbolic experiments.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Sweeps {
    /// Test windows lie in `[-W, W]`.
    #[serde(rename = "W")]
    pub w: i64,
    /// Longest product / power evaluated.
    #[serde(rename = "N")]
    pub n: usize,
}

impl Default for Sweeps {
    fn default() -> Self {
        Self { w: 2, n: 50 }
    }
}

/// JSON form of a symbolic experiment.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SymbolicConfig {
    pub alphabet: usize,
    #[serde(deserialize_with = "crate::io::numeric_strings")]
    pub weights: Vec<String>,
    pub r: usize,
    pub min_block: usize,
    #[serde(default = "default_cap", deserialize_with = "crate::io::numeric_string")]
    pub residual_cap: String,
    #[serde(default)]
    pub sweeps: Sweeps,
}

impl SymbolicConfig {
    /// Four letters weighted `(0.4, 0.3, 0.2, 0.1)`, one block of all four.
    pub fn biased_four() -> Self {
        Self {
            alphabet: 4,
            weights: ["0.4", "0.3", "0.2", "0.1"].map(String::from).to_vec(),
            r: 1,
            min_block: 4,
            residual_cap: default_cap(),
            sweeps: Sweeps::default(),
        }
    }

    pub fn uniform(alphabet: usize) -> Self {
        Self {
            alphabet,
            weights: vec![format!("1/{alphabet}"); alphabet],
            r: 1,
            min_block: alphabet,
            residual_cap: default_cap(),
            sweeps: Sweeps::default(),
        }
    }

    /// Checks guards and parses the weights.
    pub fn validate(&self) -> Result<()> {
        if self.weights.len() != self.alphabet {
            return Err(Error::SizeMismatch { left: self.weights.len(), right: self.alphabet });
        }
        if self.alphabet > 4 {
            return Err(Error::Guard(format!("alphabet: {} exceeds 4", self.alphabet)));
        }
        if !(0..=4).contains(&self.sweeps.w) {
            return Err(Error::Guard(format!("sweeps.W: {} outside 0..=4", self.sweeps.w)));
        }
        if self.r == 0 {
            return Err(Error::Format("r: must be at least 1".into()));
        }
        SymbolicSystem::<crate::scalar::Rational>::parse(&self.weights)?;
        crate::scalar::parse_rational(&self.residual_cap)?;
        Ok(())
    }

    pub fn system<S: Scalar>(&self) -> Result<SymbolicSystem<S>> {
        self.validate()?;
        SymbolicSystem::parse(&self.weights)
    }

    /// Builds the perturbation; a residual above the cap is an error.
    pub fn spec<S: Scalar>(&self) -> Result<PerturbationSpec<S>> {
        let policy = BlockPolicy { residual: ResidualPolicy::Grow, residual_cap: S::parse(&self.residual_cap)? };
        PerturbationSpec::new(self.system()?, self.r, self.min_block, &policy)
    }
}

/// `f - E[f]`.
pub fn centred<S: Scalar>(f: &CylinderFunction<S>, system: &SymbolicSystem<S>) -> CylinderFunction<S> {
    let m = f.mean(system);
    let mut out = f.clone();
    for v in &mut out.table {
        *v = v.clone() - m.clone();
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scalar::Rational;

    fn q(n: i64, d: i64) -> Rational {
        Rational::from_ratio(n, d)
    }

    fn uniform4() -> PerturbationSpec<Rational> {
        SymbolicConfig::uniform(4).spec().unwrap()
    }

    fn s(site: i64) -> CylinderFunction<Rational> {
        CylinderFunction::single_site(site, vec![q(1, 1), q(-1, 1), q(1, 1), q(-1, 1)])
    }

    #[test]
    fn shift_translates_window() {
        let f = s(0);
        assert_eq!(shift_apply(&f, 0), f);
        assert_eq!(shift_apply(&f, 1).window(), Some((-1, -1)));
        assert_eq!(shift_apply(&shift_apply(&f, 3), -3), f);
    }

    #[test]
    fn phi_on_single_site() {
        let spec = uniform4();
        let out = phi_apply(&s(0), &spec, 0).unwrap();
        assert_eq!(out.window(), Some((0, 0)));
        assert_eq!(out.table(), &[q(-1, 3), q(1, 3), q(-1, 3), q(1, 3)]);
        assert_eq!(phi_apply(&s(2), &spec, 0).unwrap(), s(2));
        let c = CylinderFunction::constant(4, q(5, 1));
        assert_eq!(phi_apply(&c, &spec, 0).unwrap(), c);
        // uniform blocks are self-adjoint
        assert_eq!(phi_adjoint_apply(&s(0), &spec, 0).unwrap(), out);
    }

    #[test]
    fn lambda_and_gamma_examples() {
        let spec = uniform4();
        let l = lambda_pairing(&s(0), &s(0), &spec, 5).unwrap();
        assert_eq!(l.limit, q(-1, 3));
        assert_eq!(l.value, q(-1, 3));
        assert_eq!(l.stabilized_at, 1);
        assert_eq!(lambda_pairing(&s(0), &s(0), &spec, 0).unwrap().value, q(1, 1));

        let g = gamma_pairing(&s(-1), &s(-1), &spec, 3).unwrap();
        assert_eq!(g.limit, q(-1, 3));
        assert_eq!(g.stabilized_at, 1);

        // supports away from the perturbed side
        let neg = lambda_pairing(&s(-2), &s(-2), &spec, 7).unwrap();
        assert_eq!((neg.value, neg.stabilized_at), (q(1, 1), 0));
        let pos = gamma_pairing(&s(1), &s(1), &spec, 7).unwrap();
        assert_eq!((pos.value, pos.stabilized_at), (q(1, 1), 0));
    }

    #[test]
    fn pi_pairing_decorrelates() {
        let spec = uniform4();
        assert_eq!(pi_pairing(&s(0), &s(0), &spec, 0).unwrap(), q(1, 1));
        assert_eq!(pi_pairing(&s(0), &s(0), &spec, 1).unwrap(), q(0, 1));
        assert_eq!(pi_pairing(&s(0), &s(0), &spec, 4).unwrap(), q(0, 1));
        let one = CylinderFunction::constant(4, q(1, 1));
        let g = CylinderFunction::single_site(0, vec![q(2, 1), q(0, 1), q(0, 1), q(0, 1)]);
        for n in 0..4 {
            assert_eq!(pi_pairing(&one, &g, &spec, n).unwrap(), q(1, 2));
        }
    }

    #[test]
    fn corollary_examples() {
        let spec = uniform4();
        assert_eq!(phi_k_identity_check(&s(0), &s(0), &spec, 0).unwrap(), q(-4, 3));
        assert_eq!(phi_k_identity_check(&s(0), &s(0), &spec, 3).unwrap(), q(0, 1));
        let c = CylinderFunction::constant(4, q(2, 1));
        assert_eq!(phi_k_identity_check(&c, &s(0), &spec, 0).unwrap(), q(0, 1));
    }

    #[test]
    fn intertwining_small() {
        let spec: PerturbationSpec<Rational> = SymbolicConfig::biased_four().spec().unwrap();
        let f = CylinderFunction::from_fn(4, -1, 2, |w| q(w[0] as i64 - 2 * w[1] as i64, 3)).unwrap();
        let g = CylinderFunction::from_fn(4, 0, 2, |w| q((w[0] * w[1]) as i64, 1)).unwrap();
        for n in 0..6 {
            let res = intertwining_pairing_check(&f, &g, &spec, n).unwrap();
            assert!(res.is_zero(), "n = {n}: {res:?}");
        }
    }

    #[test]
    fn canonical_trims_unused_edges() {
        let f = CylinderFunction::from_fn(2, -1, 3, |w| q(w[1] as i64, 1)).unwrap();
        let c = f.canonical();
        assert_eq!(c.window(), Some((0, 0)));
        assert_eq!(c.table(), &[q(0, 1), q(1, 1)]);
        let e = c.extend(-2, 4).unwrap();
        assert_eq!(e.canonical(), c);
    }

    #[test]
    fn association_examples() {
        let spec = uniform4();
        assert!(spec.association().associated);
        let mixed = PerturbationLayout { alphabet: 2, r: 1, blocks: vec![vec![vec![0, 0], vec![1, 1]]] };
        let rep = association_check(&mixed);
        assert!(!rep.associated);
        let empty = PerturbationLayout { alphabet: 2, r: 1, blocks: vec![] };
        let rep = association_check(&empty);
        assert!(rep.associated && rep.degenerate);
        let sys = SymbolicSystem::<Rational>::uniform(2).unwrap();
        assert!(matches!(PerturbationSpec::from_layout(sys, &mixed), Err(Error::NotAssociated(_))));
    }

    #[test]
    fn grow_finds_feasible_window() {
        let sys = SymbolicSystem::<Rational>::parse(&["0.8", "0.2"]).unwrap();
        let policy = BlockPolicy { residual: ResidualPolicy::Grow, residual_cap: q(1, 64) };
        assert!(matches!(PerturbationSpec::new(sys.clone(), 2, 4, &policy), Err(Error::ResidualCap { .. })));
        let spec = PerturbationSpec::grow(sys, 1, 6, 2, q(1, 64)).unwrap();
        assert!(spec.r() > 2);
        assert!(*spec.residual_mass() <= q(1, 64));
    }

    #[test]
    fn tail_probe_examples() {
        let bin = SymbolicSystem::<Rational>::uniform(2).unwrap();
        assert_eq!(tail_ergodicity_probe(&bin, 1).unwrap(), 1);
        let biased = SymbolicSystem::<Rational>::parse(&["0.4", "0.3", "0.2", "0.1"]).unwrap();
        assert_eq!(tail_ergodicity_probe(&biased, 1).unwrap(), 1);
        let single = SymbolicSystem::<Rational>::new(vec![q(1, 1)]).unwrap();
        assert_eq!(tail_ergodicity_probe(&single, 2).unwrap(), 1);
        assert!(tail_ergodicity_probe(&biased, 5).is_err());
    }

    #[test]
    fn config_round_trip() {
        let json = r#"{"alphabet":4,"weights":[0.4,"3/10",0.2,0.1],"r":1,"min_block":4,"sweeps":{"W":2,"N":10}}"#;
        let cfg: SymbolicConfig = serde_json::from_str(json).unwrap();
        assert_eq!(cfg.residual_cap, "1/64");
        cfg.validate().unwrap();
        let bad = SymbolicConfig { alphabet: 5, weights: vec!["1/5".into(); 5], ..SymbolicConfig::uniform(4) };
        assert!(bad.validate().is_err());
    }
}
