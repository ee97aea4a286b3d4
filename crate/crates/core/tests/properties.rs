use std::sync::{Arc, OnceLock};

use bsnf_core::bsnf::{is_bsnf, semantic_locality_check};
use bsnf_core::eval::{model_check, Assignment};
use bsnf_core::formula::CountMode;
use bsnf_core::hanf::{histogram, CountingSentence};
use bsnf_core::lowerbound::{chain_family, lemma8_scenario, phi_h};
use bsnf_core::oracle::{random_structure, Comparison};
use bsnf_core::rtype::{enumerate_types, extract_rtype, TypeBudget, TypeRegistry};
use bsnf_core::structure::disjoint_union;
use bsnf_core::transform::{combine_and, combine_or, counting_to_bsnf};
use bsnf_core::{nu, var, Formula, Signature, Structure};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn sig_e() -> Arc<Signature> {
    Arc::new(Signature::new([("E", 2)]).unwrap())
}

fn registry(r: usize, n: usize) -> &'static TypeRegistry {
    static CACHE: OnceLock<[TypeRegistry; 4]> = OnceLock::new();
    let all = CACHE.get_or_init(|| {
        [(0, 1), (1, 1), (0, 2), (1, 2)].map(|(r, n)| enumerate_types(&sig_e(), 2, r, n, &TypeBudget::default()).unwrap())
    });
    &all[r + 2 * (n - 1)]
}

fn structure(seed: u64, n: usize, degree: Option<usize>) -> Structure {
    random_structure(&sig_e(), n, degree, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap()
}

fn permutation(seed: u64, n: usize) -> Vec<usize> {
    let mut p: Vec<usize> = (0..n).collect();
    let mut s = seed;
    for i in (1..n).rev() {
        s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        p.swap(i, (s >> 33) as usize % (i + 1));
    }
    p
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn neighbourhoods_stay_small(seed in any::<u64>(), n in 1usize..7, r in 0usize..3, a in 0usize..6, b in 0usize..6) {
        let s = structure(seed, n, Some(2));
        let centers = [a % n, b % n];
        let ball = s.neighborhood(&centers, r).unwrap();
        prop_assert!(ball.len() <= 2 * nu(2, r).unwrap());
        let t = extract_rtype(&s, &centers, r).unwrap();
        if t.is_connected() {
            let wide = s.neighborhood(&centers[..1], r + 2 * r + 1).unwrap();
            prop_assert!(ball.iter().all(|e| wide.contains(e)));
        }
    }

    #[test]
    fn distance_is_a_metric(seed in any::<u64>(), n in 1usize..7, a in 0usize..6, b in 0usize..6, c in 0usize..6) {
        let s = structure(seed, n, Some(2));
        let (a, b, c) = (a % n, b % n, c % n);
        let d = |x, y| s.distance(x, y);
        prop_assert_eq!(d(a, a), Some(0));
        prop_assert_eq!(d(a, b), d(b, a));
        if let (Some(ab), Some(bc)) = (d(a, b), d(b, c)) {
            prop_assert!(d(a, c).unwrap() <= ab + bc);
        }
    }

    #[test]
    fn types_are_relabelling_invariant(seed in any::<u64>(), n in 1usize..7, r in 0usize..2, a in 0usize..6, b in 0usize..6, ps in any::<u64>()) {
        let reg = registry(r, 2);
        let s = structure(seed, n, Some(2));
        let perm = permutation(ps, n);
        let moved = s.relabel(&perm);
        let centers = [a % n, b % n];
        let t = extract_rtype(&s, &centers, r).unwrap();
        let u = extract_rtype(&moved, &[perm[centers[0]], perm[centers[1]]], r).unwrap();
        prop_assert_eq!(t.code(), u.code());
        prop_assert!(reg.position(&t).is_some());
    }

    #[test]
    fn histograms_ignore_labels(seed in any::<u64>(), n in 1usize..7, ps in any::<u64>()) {
        let reg = registry(1, 1);
        let s = structure(seed, n, Some(2));
        let moved = s.relabel(&permutation(ps, n));
        prop_assert_eq!(histogram(&s, 1, 3, reg).unwrap(), histogram(&moved, 1, 3, reg).unwrap());
    }

    #[test]
    fn counting_forms_are_exact(ti in 0usize..172, mode in 0usize..5, seed in any::<u64>(), n in 1usize..7) {
        let mut types = registry(0, 1).members().to_vec();
        types.extend(registry(1, 1).members().iter().cloned());
        let mode = [CountMode::AtLeast(1), CountMode::AtLeast(2), CountMode::Exactly(0), CountMode::Exactly(1), CountMode::Exactly(2)][mode];
        let c = CountingSentence::new(mode, &types[ti % types.len()]).unwrap();
        let b = counting_to_bsnf(&c);
        let shape = is_bsnf(&b.to_formula()).unwrap();
        prop_assert_eq!(shape.radius, c.ty.radius());
        let s = structure(seed, n, None);
        let cmp = Comparison::new(&c.to_formula(&var("y")), &b.to_formula()).unwrap();
        prop_assert_eq!(cmp.first_difference(&s).unwrap(), None);
    }

    #[test]
    fn combinations_are_pointwise(i in 0usize..40, j in 0usize..40, seed in any::<u64>(), n in 2usize..6) {
        let types = registry(0, 1);
        let sentences: Vec<CountingSentence> = types
            .members()
            .iter()
            .flat_map(|t| (0..20).map(move |k| (t, k)))
            .map(|(t, k)| {
                let mode = if k % 2 == 0 { CountMode::AtLeast(k / 2 + 1) } else { CountMode::Exactly(k / 2) };
                CountingSentence::new(mode, t).unwrap()
            })
            .collect();
        let (c1, c2) = (&sentences[i], &sentences[j]);
        let (b1, b2) = (counting_to_bsnf(c1), counting_to_bsnf(c2));
        let (f1, f2) = (c1.to_formula(&var("y")), c2.to_formula(&var("y")));
        let s = structure(seed, n, None);
        let and = combine_and(&b1, &b2).to_formula();
        let or = combine_or(&b1, &b2).to_formula();
        prop_assert!(is_bsnf(&and).is_ok() && is_bsnf(&or).is_ok());
        let none = Assignment::new();
        let v1 = model_check(&s, &f1, &none).unwrap();
        let v2 = model_check(&s, &f2, &none).unwrap();
        prop_assert_eq!(model_check(&s, &and, &none).unwrap(), v1 && v2);
        prop_assert_eq!(model_check(&s, &or, &none).unwrap(), v1 || v2);
    }

    #[test]
    fn duplication_law(picks in proptest::collection::vec(0usize..8, 1..5), copies in proptest::collection::vec(1usize..3, 5)) {
        let fam = chain_family(2, 64).unwrap();
        let mut parts = Vec::new();
        let mut chosen: Vec<usize> = picks.clone();
        chosen.sort_unstable();
        chosen.dedup();
        for (k, &p) in chosen.iter().enumerate() {
            for _ in 0..copies[k] {
                parts.push(fam[p].structure.clone());
            }
        }
        let forest = disjoint_union(&parts).unwrap().structure;
        let expected = chosen.iter().enumerate().all(|(k, _)| copies[k] >= 2);
        prop_assert_eq!(model_check(&forest, &phi_h(2, 1), &Assignment::new()).unwrap(), expected);
    }
}

#[test]
fn accepted_shapes_are_local() {
    let reg = registry(1, 1);
    let pool: Vec<Structure> = (0..60).map(|i| structure(i, 1 + (i as usize % 6), Some(2))).collect();
    for t in reg.members().iter().step_by(17) {
        let b = counting_to_bsnf(&CountingSentence::new(CountMode::AtLeast(1), t).unwrap());
        let shape = is_bsnf(&b.to_formula()).unwrap();
        let mut matrix = shape.matrix.clone();
        for y in &shape.prefix {
            matrix = Formula::and(vec![matrix, Formula::eq(y, y)]);
        }
        let w = semantic_locality_check(&matrix, std::slice::from_ref(&shape.universal), shape.radius, &pool).unwrap();
        assert!(w.is_none(), "{w:?}");
    }
}

#[test]
fn scenario_pivot() {
    let fam = chain_family(2, 64).unwrap();
    let parts: Vec<Structure> = fam.iter().take(3).map(|t| t.structure.clone()).collect();
    let (a, reduced) = lemma8_scenario(&parts, None).unwrap();
    assert_eq!(a.size(), 2 * parts.iter().map(|p| p.size()).sum::<usize>());
    assert_eq!(a.components().len(), 6);
    assert!(model_check(&a, &phi_h(2, 1), &Assignment::new()).unwrap());
    assert!(!model_check(&reduced, &phi_h(2, 1), &Assignment::new()).unwrap());
}
