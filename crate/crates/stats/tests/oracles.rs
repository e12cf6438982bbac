use insitu_stats::comparison::{mcnemar_chi2, mcnemar_counts, mcnemar_exact};
use insitu_stats::{chi2_sf, cochran_q, f_sf, mcnemar, rm_anova_f, CorrectnessMatrix};
use proptest::prelude::*;
use statrs::distribution::{ChiSquared, ContinuousCDF, FisherSnedecor};

#[test]
fn chi2_matches_reference_library() {
    for df in [1.0, 2.0, 3.0, 4.5, 10.0, 30.0] {
        let dist = ChiSquared::new(df).unwrap();
        for i in 0..=400 {
            let x = i as f64 * 0.1;
            let ours = chi2_sf(x, df).unwrap();
            let theirs = 1.0 - dist.cdf(x);
            assert!((ours - theirs).abs() < 1e-9, "df {df} x {x}: {ours} vs {theirs}");
        }
    }
}

#[test]
fn f_matches_reference_library() {
    for (d1, d2) in [(1.0, 1.0), (2.0, 6.0), (2.0, 20.0), (5.0, 12.0), (2.0, 2198.0), (10.0, 3.0)] {
        let dist = FisherSnedecor::new(d1, d2).unwrap();
        for i in 0..=300 {
            let x = i as f64 * 0.05;
            let ours = f_sf(x, d1, d2).unwrap();
            let theirs = 1.0 - dist.cdf(x);
            assert!((ours - theirs).abs() < 1e-9, "F({d1},{d2}) x {x}: {ours} vs {theirs}");
        }
    }
}

#[test]
fn survival_functions_are_monotone() {
    for df in [1.0, 2.0, 5.0] {
        let mut prev = 1.0;
        for i in 0..2000 {
            let p = chi2_sf(i as f64 * 0.02, df).unwrap();
            assert!(p <= prev + 1e-15);
            prev = p;
        }
        let mut prev = 1.0;
        for i in 0..2000 {
            let p = f_sf(i as f64 * 0.01, df, 12.0).unwrap();
            assert!(p <= prev + 1e-15);
            prev = p;
        }
    }
}

/// Textbook two-pass repeated-measures ANOVA: means first, then squared
/// deviations and residuals.
fn two_pass_anova(x: &[Vec<f64>]) -> (f64, f64, f64) {
    let n = x.len();
    let l = x[0].len();
    let grand = x.iter().flatten().sum::<f64>() / (n * l) as f64;
    let row_mean: Vec<f64> = x.iter().map(|r| r.iter().sum::<f64>() / l as f64).collect();
    let col_mean: Vec<f64> = (0..l).map(|j| x.iter().map(|r| r[j]).sum::<f64>() / n as f64).collect();
    let ss_cols: f64 = col_mean.iter().map(|m| n as f64 * (m - grand).powi(2)).sum();
    let mut ss_res = 0.0;
    for i in 0..n {
        for j in 0..l {
            ss_res += (x[i][j] - row_mean[i] - col_mean[j] + grand).powi(2);
        }
    }
    let df1 = (l - 1) as f64;
    let df2 = ((l - 1) * (n - 1)) as f64;
    (ss_cols / df1 / (ss_res / df2), df1, df2)
}

fn as_f64(m: &CorrectnessMatrix) -> Vec<Vec<f64>> {
    m.rows().iter().map(|r| r.iter().map(|&b| b as u8 as f64).collect()).collect()
}

#[test]
fn anova_matches_two_pass_oracle_on_fixture() {
    let m = CorrectnessMatrix::from_bits(&[&[1, 1, 0], &[1, 0, 0], &[1, 1, 1], &[0, 0, 0]]).unwrap();
    let (f, df1, df2) = two_pass_anova(&as_f64(&m));
    let r = rm_anova_f(&m).unwrap();
    assert!((r.statistic - f).abs() < 1e-10, "{} vs {f}", r.statistic);
    let p = 1.0 - FisherSnedecor::new(df1, df2).unwrap().cdf(f);
    assert!((r.p_value - p).abs() < 1e-10);
}

fn matrix(n: usize, l: usize) -> impl Strategy<Value = CorrectnessMatrix> {
    prop::collection::vec(prop::collection::vec(any::<bool>(), l), n)
        .prop_map(move |rows| CorrectnessMatrix::new((0..l).map(|j| format!("m{j}")).collect(), rows).unwrap())
}

proptest! {
    #[test]
    fn anova_matches_two_pass_oracle(m in (2usize..60, 2usize..6).prop_flat_map(|(n, l)| matrix(n, l))) {
        let r = rm_anova_f(&m).unwrap();
        if !r.degenerate {
            let (f, _, _) = two_pass_anova(&as_f64(&m));
            prop_assert!((r.statistic - f).abs() < 1e-10 * f.max(1.0), "{} vs {}", r.statistic, f);
        }
    }

    #[test]
    fn duplicating_rows_never_weakens_f(m in (2usize..40, 2usize..5).prop_flat_map(|(n, l)| matrix(n, l))) {
        let doubled = CorrectnessMatrix::new(
            m.classifiers.clone(),
            m.rows().iter().chain(m.rows()).cloned().collect(),
        ).unwrap();
        let (a, b) = (rm_anova_f(&m).unwrap(), rm_anova_f(&doubled).unwrap());
        prop_assert!(b.p_value <= a.p_value + 1e-12);
        prop_assert!(b.statistic >= a.statistic - 1e-12);
    }

    #[test]
    fn cochran_permutation_invariant(
        m in (1usize..50, 2usize..6).prop_flat_map(|(n, l)| matrix(n, l)),
        row_seed in any::<u64>(),
        col_shift in 0usize..6,
    ) {
        let l = m.l();
        let mut rows = m.rows().to_vec();
        // deterministic row shuffle
        let mut s = row_seed | 1;
        for i in (1..rows.len()).rev() {
            s ^= s << 13; s ^= s >> 7; s ^= s << 17;
            rows.swap(i, (s % (i as u64 + 1)) as usize);
        }
        let rotated: Vec<Vec<bool>> = rows.iter().map(|r| (0..l).map(|j| r[(j + col_shift) % l]).collect()).collect();
        let names = (0..l).map(|j| m.classifiers[(j + col_shift) % l].clone()).collect();
        let p = CorrectnessMatrix::new(names, rotated).unwrap();
        let (a, b) = (cochran_q(&m).unwrap(), cochran_q(&p).unwrap());
        prop_assert_eq!(a.statistic, b.statistic);
        prop_assert_eq!(a.degenerate, b.degenerate);

        let mut with_unanimous = m.rows().to_vec();
        with_unanimous.push(vec![true; l]);
        let u = CorrectnessMatrix::new(m.classifiers.clone(), with_unanimous).unwrap();
        prop_assert_eq!(cochran_q(&u).unwrap().statistic, a.statistic);
    }

    #[test]
    fn mcnemar_symmetric(a in prop::collection::vec(any::<bool>(), 0..120), flips in prop::collection::vec(any::<bool>(), 120)) {
        let b: Vec<bool> = a.iter().zip(&flips).map(|(x, f)| x ^ f).collect();
        prop_assert_eq!(mcnemar(&a, &b).unwrap().p_value, mcnemar(&b, &a).unwrap().p_value);
    }
}

fn binomial_coefficient(n: u64, k: u64) -> u128 {
    (0..k).fold(1u128, |acc, i| acc * (n - i) as u128 / (i + 1) as u128)
}

#[test]
fn exact_path_matches_integer_enumeration() {
    for n in 0..25u64 {
        for b in 0..=n {
            let c = n - b;
            let k = b.min(c);
            let tail: u128 = (0..=k).map(|i| binomial_coefficient(n, i)).sum();
            let expected = (2.0 * tail as f64 / 2f64.powi(n as i32)).min(1.0);
            assert!((mcnemar_exact(b, c) - expected).abs() < 1e-15, "b {b} c {c}");
        }
    }
    assert_eq!(mcnemar_counts(5, 1).p_value, 14.0 / 64.0);
}

#[test]
fn exact_and_corrected_paths_agree_near_crossover() {
    for n in 20..=30u64 {
        for b in 0..=n {
            let c = n - b;
            let diff = (mcnemar_exact(b, c) - mcnemar_chi2(b, c).1).abs();
            assert!(diff < 0.02, "b {b} c {c}: {diff}");
        }
    }
    assert_eq!(mcnemar_counts(12, 12).method, "mcnemar_exact");
    assert_eq!(mcnemar_counts(12, 13).method, "mcnemar_chi2");
}
