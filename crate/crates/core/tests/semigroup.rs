use num_traits::Signed;
use polymorph::markov_op::{antiisomorphism_check, isometric_subalgebra_scan, operator_of, SubalgebraInvariance};
use polymorph::polymorphism::{
    compose, conjugate, convex_combination, convolve, factor, is_prime, power, weak_distance, PointMeasure,
};
use polymorph::random::{random_kernel, random_partition, random_space_mixed};
use polymorph::{FiniteSpace, Partition, Polymorphism, Rational, Scalar};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn setup(seed: u64, max_n: usize) -> (ChaCha8Rng, FiniteSpace<Rational>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.gen_range(1..=max_n);
    let space = random_space_mixed(n, &mut rng);
    (rng, space)
}

/// Marginals recomputed from scratch rather than through `validate`.
fn marginals_hold(p: &Polymorphism<Rational>) -> bool {
    let n = p.size();
    (0..n).all(|x| {
        let row: Rational = (0..n).map(|y| p.nu()[(x, y)].clone()).sum();
        let col: Rational = (0..n).map(|y| p.nu()[(y, x)].clone()).sum();
        row == *p.space().weight(x) && col == *p.space().weight(x)
    }) && p.nu().entries().all(|v| !v.is_negative())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn operations_stay_bistochastic(seed in any::<u64>()) {
        let (mut rng, space) = setup(seed, 6);
        let p1 = random_kernel(&space, &mut rng);
        let p2 = random_kernel(&space, &mut rng);
        prop_assert!(marginals_hold(&compose(&p1, &p2).unwrap()));
        prop_assert!(marginals_hold(&power(&p1, rng.gen_range(0..6))));
        prop_assert!(marginals_hold(&conjugate(&p1)));
        let c = Rational::from_ratio(rng.gen_range(0..=5), 5);
        let mix = convex_combination(&[p1.clone(), p2], &[c.clone(), Rational::from_ratio(1, 1) - c]).unwrap();
        prop_assert!(marginals_hold(&mix));
        let xi = random_partition(space.size(), &mut rng);
        prop_assert!(marginals_hold(&factor(&p1, &xi).unwrap()));
    }

    #[test]
    fn composition_is_associative(seed in any::<u64>()) {
        let (mut rng, space) = setup(seed, 5);
        let [a, b, c] = [0, 1, 2].map(|_| random_kernel(&space, &mut rng));
        let left = compose(&compose(&a, &b).unwrap(), &c).unwrap();
        let right = compose(&a, &compose(&b, &c).unwrap()).unwrap();
        prop_assert_eq!(left, right);
    }

    #[test]
    fn identity_and_zero(seed in any::<u64>()) {
        let (mut rng, space) = setup(seed, 6);
        let p = random_kernel(&space, &mut rng);
        let id = Polymorphism::identity(&space);
        let theta = Polymorphism::zero(&space);
        prop_assert_eq!(&compose(&p, &id).unwrap(), &p);
        prop_assert_eq!(&compose(&id, &p).unwrap(), &p);
        prop_assert_eq!(&compose(&p, &theta).unwrap(), &theta);
        prop_assert_eq!(&compose(&theta, &p).unwrap(), &theta);
    }

    #[test]
    fn conjugation_reverses_products(seed in any::<u64>()) {
        let (mut rng, space) = setup(seed, 6);
        let a = random_kernel(&space, &mut rng);
        let b = random_kernel(&space, &mut rng);
        prop_assert_eq!(&conjugate(&conjugate(&a)), &a);
        prop_assert_eq!(
            conjugate(&compose(&a, &b).unwrap()),
            compose(&conjugate(&b), &conjugate(&a)).unwrap()
        );
    }

    #[test]
    fn operators_compose_in_reverse(seed in any::<u64>()) {
        let (mut rng, space) = setup(seed, 6);
        let a = random_kernel(&space, &mut rng);
        let b = random_kernel(&space, &mut rng);
        prop_assert_eq!(antiisomorphism_check(&a, &b).unwrap(), 0.0);
        let fa = Polymorphism::<f64>::from_rows(
            FiniteSpace::new(space.weights().iter().map(Scalar::to_f64).collect()).unwrap(),
            a.nu().to_rows().iter().map(|r| r.iter().map(Scalar::to_f64).collect()).collect(),
        );
        if let Ok(fa) = fa {
            prop_assert!(antiisomorphism_check(&fa, &fa).unwrap() <= 1e-12);
        }
    }

    #[test]
    fn weak_distance_is_a_metric(seed in any::<u64>()) {
        let (mut rng, space) = setup(seed, 5);
        let [a, b, c] = [0, 1, 2].map(|_| random_kernel(&space, &mut rng));
        let ab = weak_distance(&a, &b).unwrap();
        prop_assert_eq!(&ab, &weak_distance(&b, &a).unwrap());
        prop_assert!(ab <= weak_distance(&a, &c).unwrap() + weak_distance(&c, &b).unwrap());
        prop_assert_eq!(weak_distance(&a, &a).unwrap(), Rational::from_ratio(0, 1));
    }

    #[test]
    fn factor_of_composition_with_fixed_blocks(seed in any::<u64>()) {
        // A kernel fixing xi factors to the identity; composing with it
        // commutes with taking the factor.
        let (mut rng, space) = setup(seed, 6);
        let xi = random_partition(space.size(), &mut rng);
        let fix = polymorph::random::block_diagonal_kernel(&space, &xi, &mut rng);
        let q = factor(&fix, &xi).unwrap();
        prop_assert_eq!(&q, &Polymorphism::identity(q.space()));
        let p = random_kernel(&space, &mut rng);
        prop_assert_eq!(
            factor(&compose(&p, &fix).unwrap(), &xi).unwrap(),
            compose(&factor(&p, &xi).unwrap(), &q).unwrap()
        );
    }

    #[test]
    fn convolution_fixes_the_measure(seed in any::<u64>()) {
        let (mut rng, space) = setup(seed, 6);
        let p = random_kernel(&space, &mut rng);
        let mu = PointMeasure::of_space(&space);
        prop_assert_eq!(convolve(&p, &mu).unwrap(), mu);
    }

    #[test]
    fn prime_iff_totally_nonisometric(seed in any::<u64>()) {
        let (mut rng, space) = setup(seed, 5);
        let p = random_kernel(&space, &mut rng);
        let prime = is_prime(&p, 12).unwrap().prime;
        let scan = isometric_subalgebra_scan(&operator_of(&p), 12, SubalgebraInvariance::Forward).unwrap();
        prop_assert_eq!(prime, scan.totally_nonisometric);
    }
}

#[test]
fn trivial_and_discrete_factors() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let space = random_space_mixed::<Rational, _>(5, &mut rng);
    let p = random_kernel(&space, &mut rng);
    assert_eq!(factor(&p, &Partition::discrete(5)).unwrap(), p);
    assert_eq!(factor(&p, &Partition::trivial(5)).unwrap().size(), 1);
}
