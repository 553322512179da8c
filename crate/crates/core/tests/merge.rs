use apd_sim::{merge_streams, EngineFault, Picos};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn merge_equals_sorted_concatenation() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut generators: Vec<Vec<Picos>> = (0..5).map(|_| Vec::new()).collect();
    for _ in 0..10_000 {
        let g = rng.random_range(0..5);
        generators[g].push(Picos(rng.random_range(0..1_000_000)));
    }
    for g in &mut generators {
        g.sort();
    }
    let mut expected: Vec<Picos> = generators.iter().flatten().copied().collect();
    expected.sort();
    let merged: Vec<Picos> = merge_streams(generators.into_iter().map(|g| g.into_iter()).collect())
        .collect::<Result<_, _>>()
        .unwrap();
    assert_eq!(merged, expected);
}

#[test]
fn two_interleaved_generators() {
    let a = vec![Picos(1), Picos(3)];
    let b = vec![Picos(2), Picos(4)];
    let merged: Vec<u64> = merge_streams(vec![a.into_iter(), b.into_iter()])
        .map(|t| t.unwrap().0)
        .collect();
    assert_eq!(merged, [1, 2, 3, 4]);
}

#[test]
fn empty_generator_is_identity() {
    let a = vec![Picos(7), Picos(7), Picos(9)];
    let merged: Vec<Picos> = merge_streams(vec![Vec::new().into_iter(), a.clone().into_iter()])
        .map(Result::unwrap)
        .collect();
    assert_eq!(merged, a);
}

#[test]
fn decreasing_generator_is_a_fault() {
    let bad = vec![Picos(5), Picos(2)];
    let out: Vec<Result<Picos, EngineFault>> = merge_streams(vec![bad.into_iter()]).collect();
    assert!(
        out.iter()
            .any(|r| matches!(r, Err(EngineFault::NonMonotoneGenerator { .. }))),
        "{out:?}"
    );
}
