use expander_core::fourier::{fourier_coeff, TorusMeasure};
use expander_core::grpenum::{enumerate, GeneratorSet, GroupTable};
use expander_core::modq::{FactoredModulus, MatModQ};
use expander_core::qr::conjugacy_classes;
use expander_core::spectral::{
    cheeger_bounds, mean_zero_spectrum, spectral_report, walk_operator_apply, SolverOptions,
};
use expander_core::walk::{SparseMeasure, Walker, WordMeasure};
use proptest::prelude::*;

fn sl2(q: u64) -> GroupTable {
    enumerate(
        &GeneratorSet::standard_sl2(),
        &FactoredModulus::new(q).unwrap(),
        1 << 20,
    )
    .unwrap()
}

fn word_matrix(t: &GroupTable, word: &[usize]) -> MatModQ {
    word.iter()
        .fold(MatModQ::identity(t.q(), 2), |acc, &g| t.generators()[g].mul(&acc))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn words_land_in_the_table(q in 2u64..20, word in prop::collection::vec(0usize..4, 0..24)) {
        let t = sl2(q);
        let m = word_matrix(&t, &word);
        let x = t.index_of(&m).expect("closed under generators");
        prop_assert!(t.word_length()[x as usize] as usize <= word.len());
        prop_assert_eq!(word_matrix(&t, &t.word_of(x)), m);
    }

    #[test]
    fn table_multiplication_matches_matrices(q in 2u64..16, a in 0u32..10_000, b in 0u32..10_000) {
        let t = sl2(q);
        let (x, y) = (a % t.len() as u32, b % t.len() as u32);
        let xy = t.mul(x, y);
        prop_assert_eq!(t.element(xy), t.element(x).mul(&t.element(y)));
        prop_assert_eq!(t.mul(x, t.inverse(x)), 0);
    }

    #[test]
    fn convolution_theorem_on_the_torus(
        q in 2u64..9,
        seed_a in prop::collection::vec(0u32..5, 64),
        seed_b in prop::collection::vec(0u32..5, 64),
        b in prop::collection::vec(-20i64..20, 2),
    ) {
        let n = (q * q) as usize;
        let normalize = |raw: &[u32]| {
            let w: Vec<f64> = raw[..n].iter().map(|&c| f64::from(c) + 0.5).collect();
            let total: f64 = w.iter().sum();
            TorusMeasure::from_weights(q, 2, w.iter().map(|x| x / total).collect()).unwrap()
        };
        let (mu, nu) = (normalize(&seed_a), normalize(&seed_b));
        let conv = mu.convolve(&nu).unwrap();
        let lhs = fourier_coeff(&conv, &b);
        let rhs = fourier_coeff(&mu, &b) * fourier_coeff(&nu, &b);
        prop_assert!((lhs - rhs).norm() < 1e-12);
    }

    #[test]
    fn walk_steps_preserve_exact_mass(q in 2u64..12, n in 0usize..6) {
        let t = sl2(q);
        let mu = SparseMeasure::uniform_on_generators(&t);
        let d = Walker::new(&t, &mu).power(n);
        prop_assert!(d.is_exact());
        let total: f64 = d.to_f64().iter().sum();
        prop_assert!((total - 1.0).abs() < 1e-12);
    }
}

#[test]
fn operator_fixes_constants_and_spectrum_is_bounded() {
    for q in [3u64, 4, 5, 7, 9] {
        let t = sl2(q);
        let mu = SparseMeasure::uniform_on_generators(&t);
        let ones = vec![1.0; t.len()];
        let image = walk_operator_apply(&t, &mu, &ones);
        assert!(image.iter().all(|&v| (v - 1.0).abs() < 1e-14));
        let spec = mean_zero_spectrum(&t, &mu, &SolverOptions::default()).unwrap();
        assert!(spec.lambda_min >= -1.0 - 1e-12 && spec.lambda2 < 1.0);
        let (lo, hi) = cheeger_bounds(spec.lambda2);
        assert!(0.0 <= lo && lo <= hi);
    }
}

#[test]
fn report_for_word_measure_matches_generator_measure() {
    let s = GeneratorSet::standard_sl2();
    let t = sl2(7);
    let words = WordMeasure::uniform_on(&s);
    let opts = SolverOptions::default();
    let report = spectral_report(&s, 7, &words, &opts, 1 << 20).unwrap();
    let direct = mean_zero_spectrum(&t, &SparseMeasure::uniform_on_generators(&t), &opts).unwrap();
    assert_eq!(report.order, 336);
    assert!((report.lambda2 - direct.lambda2).abs() < 1e-12);
    assert!((report.gap - (1.0 - direct.lambda2)).abs() < 1e-12);
}

#[test]
fn class_sizes_partition_and_divide_the_order() {
    for q in [3u64, 4, 5, 7, 8] {
        let t = sl2(q);
        let c = conjugacy_classes(&t, 100_000).unwrap();
        let n = t.len();
        assert_eq!(c.class_sizes.iter().sum::<usize>(), n);
        assert!(c.class_sizes.iter().all(|&k| n % k == 0));
        assert_eq!(c.class_sizes[c.class_of[0] as usize], 1);
    }
}
