//! Kernel corpus: the bundled file plus seeded random kernels.

use std::path::Path;

use polymorph::polymorphism::KernelWire;
use polymorph::random::{
    block_diagonal_kernel, random_kernel, random_partition, random_preserving_permutation, random_space_mixed,
};
use polymorph::{Polymorphism, Rational, Scalar};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Deserialize;

use crate::config::KernelSource;
use crate::RunError;

const BUNDLED: &str = include_str!("../corpus/kernels.json");

#[derive(Clone, Debug, PartialEq)]
pub struct NamedKernel {
    pub name: String,
    pub wire: KernelWire,
}

impl NamedKernel {
    pub fn kernel<S: Scalar>(&self) -> Result<Polymorphism<S>, RunError> {
        self.wire.into_kernel().map_err(|e| RunError::Invalid(vec![format!("kernels: {}: {e}", self.name)]))
    }
}

#[derive(Deserialize)]
struct Entry {
    name: String,
    #[serde(flatten)]
    wire: KernelWire,
}

/// The kernels shipped with the binary: permutations, Θ, block-diagonal,
/// couplings and random rational kernels.
pub fn bundled() -> Vec<NamedKernel> {
    let entries: Vec<Entry> = serde_json::from_str(BUNDLED).expect("bundled corpus parses");
    entries.into_iter().map(|e| NamedKernel { name: e.name, wire: e.wire }).collect()
}

/// `count` kernels on spaces of size `1..=max_n`. Consecutive kernels share a
/// space so that they can be composed; the family rotates through random
/// mixtures, measure-preserving permutations, block-diagonal kernels and Θ.
pub fn generated(seed: u64, count: usize, max_n: usize) -> Vec<NamedKernel> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(count);
    let mut space = random_space_mixed::<Rational, _>(rng.gen_range(1..=max_n.max(1)), &mut rng);
    for i in 0..count {
        if i % 2 == 0 && i > 0 {
            space = random_space_mixed(rng.gen_range(1..=max_n.max(1)), &mut rng);
        }
        let (family, kernel) = match i % 8 {
            1 | 5 => ("permutation", random_preserving_permutation(&space, &mut rng)),
            3 => {
                let xi = random_partition(space.size(), &mut rng);
                ("block-diagonal", block_diagonal_kernel(&space, &xi, &mut rng))
            }
            7 => ("theta", Polymorphism::zero(&space)),
            _ => ("random", random_kernel(&space, &mut rng)),
        };
        out.push(NamedKernel { name: format!("gen-{i}-{family}-{}", space.size()), wire: kernel.to_wire() });
    }
    out
}

/// Resolves configured kernels; relative paths are taken from `base`.
pub fn load(sources: &[KernelSource], base: &Path) -> Result<Vec<NamedKernel>, RunError> {
    sources
        .iter()
        .enumerate()
        .map(|(i, src)| match src {
            KernelSource::Inline(wire) => Ok(NamedKernel { name: format!("inline-{i}"), wire: wire.clone() }),
            KernelSource::Path(p) => {
                let path = base.join(p);
                let text = std::fs::read_to_string(&path).map_err(|e| RunError::Io(path.display().to_string(), e))?;
                let wire =
                    serde_json::from_str(&text).map_err(|e| RunError::Invalid(vec![format!("kernels: {p}: {e}")]))?;
                Ok(NamedKernel { name: p.clone(), wire })
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bundled_kernels_are_bistochastic() {
        let corpus = bundled();
        assert!(corpus.len() >= 10);
        for k in &corpus {
            k.kernel::<Rational>().unwrap().validate().unwrap();
            k.kernel::<f64>().unwrap().validate().unwrap();
        }
    }

    #[test]
    fn generation_is_seeded() {
        assert_eq!(generated(3, 12, 5), generated(3, 12, 5));
        assert_ne!(generated(3, 12, 5), generated(4, 12, 5));
        let g = generated(1, 10, 4);
        for pair in g.chunks(2) {
            assert_eq!(pair[0].wire.weights, pair[pair.len() - 1].wire.weights);
        }
    }
}
