mod common;

use forge_core::hierarchy::{BuildMode, FamilyLevel, Gamma, TestKind};
use forge_core::lab::{empirical_measure, measure_distance, sample_point_with_offset};
use forge_core::sequence::mobius_table;
use forge_core::symbolic::{apply_code, concat, correlate, Block, Code};
use proptest::prelude::*;

fn block(alphabet: usize, len: std::ops::Range<usize>) -> impl Strategy<Value = Block> {
    prop::collection::vec(0..alphabet as u8, len).prop_map(move |s| Block::new(&s, alphabet).unwrap())
}

fn level_of(blocks: Vec<Block>) -> FamilyLevel {
    FamilyLevel {
        k: 1,
        length: blocks[0].len(),
        multiplier: 2,
        alphabet: blocks[0].alphabet_size(),
        parent_size: 0,
        eps_plus_delta: 0.5,
        code_window: 1,
        gamma: Gamma::Exact {
            passed: blocks.len() as u64,
            total: blocks.len() as u64,
        },
        log_count: (blocks.len() as f64).ln(),
        tests: vec![TestKind::R],
        mode: BuildMode::Exhaustive,
        worst_correlation: 0.0,
        bernstein: None,
        blocks,
    }
}

fn gcd(a: u64, b: u64) -> u64 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

proptest! {
    #[test]
    fn distance_is_a_pseudometric(a in block(2, 4..40), b in block(2, 4..40), c in block(2, 4..40)) {
        let (ma, mb, mc) = (
            empirical_measure(&a, 4).unwrap(),
            empirical_measure(&b, 4).unwrap(),
            empirical_measure(&c, 4).unwrap(),
        );
        let ab = measure_distance(&ma, &mb, 4).unwrap().value;
        let ba = measure_distance(&mb, &ma, 4).unwrap().value;
        let bc = measure_distance(&mb, &mc, 4).unwrap().value;
        let ac = measure_distance(&ma, &mc, 4).unwrap().value;
        prop_assert_eq!(measure_distance(&ma, &ma, 4).unwrap().value, 0.0);
        prop_assert!((ab - ba).abs() < 1e-15);
        prop_assert!(ac <= ab + bc + 1e-12);
        // Each length contributes an L1 difference of at most 2.
        prop_assert!((0.0..=2.0 * (1.0 - 0.5f64.powi(4))).contains(&ab));
    }

    #[test]
    fn measures_are_normalised(a in block(3, 3..50)) {
        let m = empirical_measure(&a, 3).unwrap();
        prop_assert!(m.normalisation_holds());
    }

    #[test]
    fn split_undoes_concat(parts in prop::collection::vec(block(3, 5..6), 1..8)) {
        let joined = concat(&parts).unwrap();
        prop_assert_eq!(joined.len(), 5 * parts.len());
        prop_assert_eq!(joined.split(5).unwrap(), parts);
        prop_assert_eq!(Block::parse(&joined.to_digits(), 3).unwrap(), joined);
    }

    #[test]
    fn correlations_are_bounded(
        b in block(2, 2..60),
        table in prop::collection::vec(prop::bool::ANY, 4),
        y in prop::collection::vec(-1.0f64..=1.0, 60),
    ) {
        let code = Code::new(0, 2, 2, table.iter().map(|&t| if t { 1 } else { -1 }).collect()).unwrap();
        let signs = apply_code(&code, &b).unwrap().to_f64();
        let c = correlate(&signs, &y[..signs.len()]).unwrap();
        prop_assert!(c.abs() <= 1.0);
        let back = Code::parse(&code.serialize(), 0, 2).unwrap();
        prop_assert_eq!(back.table(), code.table());
    }

    #[test]
    fn sample_points_are_shifted_concatenations(
        blocks in prop::collection::vec(block(2, 7..8), 1..6),
        length in 7usize..80,
        seed in any::<u64>(),
    ) {
        let level = level_of(blocks.clone());
        let (x, offset) = sample_point_with_offset(&level, length, seed).unwrap();
        prop_assert_eq!(x.len(), length);
        prop_assert!(offset < 7);
        // Whole family blocks start at every N_k - offset (mod N_k).
        let mut start = (7 - offset) % 7;
        while start + 7 <= length {
            prop_assert!(blocks.contains(&x.slice(start, 7).unwrap()));
            start += 7;
        }
        let (again, _) = sample_point_with_offset(&level, length, seed).unwrap();
        prop_assert_eq!(again, x);
    }
}

#[test]
fn mobius_is_multiplicative() {
    let mu = mobius_table(3000);
    for a in 1..=54u64 {
        for b in 1..=54u64 {
            if gcd(a, b) == 1 {
                assert_eq!(mu[(a * b) as usize], mu[a as usize] * mu[b as usize], "{a} * {b}");
            }
        }
    }
    let sum: i64 = (1..=3000).map(|n| mu[n] as i64).sum();
    assert_eq!(
        sum,
        (1..=3000).map(|n| common::trial_mobius(n as u64) as i64).sum::<i64>()
    );
}

/// Passing (C) implies passing (C'); the two bounds coincide at `k = 1`.
#[test]
fn c_bound_dominates_c_prime_bound() {
    use forge_core::schedule::JumpRule;
    for alpha in [0.01, 0.5, 1.0, 7.0] {
        let bound = |rule: JumpRule, k: i32| 1.0 - alpha * rule.base().powi(k - 1);
        assert_eq!(bound(JumpRule::B, 1), bound(JumpRule::BPrime, 1));
        for k in 2..300 {
            assert!(
                bound(JumpRule::B, k) > bound(JumpRule::BPrime, k),
                "alpha={alpha} k={k}"
            );
        }
    }
}
