use approx::assert_abs_diff_eq;
use mdqda::la::{DataMatrix, SpdMatrix};
use mdqda::qda::{
    correction_constants, fit, optimal_discriminant, ClassLabel, Noise, OptimalQda, PopulationSpec,
    Variant,
};
use mdqda::Error;
use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn random_data(p: usize, n: usize, r: &mut ChaCha8Rng) -> DataMatrix {
    DataMatrix::new(DMatrix::from_fn(p, n, |_, _| StandardNormal.sample(r))).unwrap()
}

fn random_z(p: usize, r: &mut ChaCha8Rng) -> DVector<f64> {
    DVector::from_fn(p, |_, _| StandardNormal.sample(r))
}

#[test]
fn constants_approach_classical_values() {
    let k = correction_constants(1, 1_000_000, 1_000_000).unwrap();
    assert_abs_diff_eq!(k.s0n, 1.0 + 1e-6, epsilon = 1e-9);
    assert!(k.l1n.abs() < 1e-6);
    assert!(k.l1n < 0.0);
}

#[test]
fn constants_at_ratio_point_eight() {
    let k = correction_constants(80, 100, 100).unwrap();
    assert_eq!(k.s0n, 5.0);
    assert_eq!(k.m0n, 5.0);
}

#[test]
fn log_det_centering_at_ratio_half() {
    let k = correction_constants(50, 100, 100).unwrap();
    // Direct evaluation at c = 1/2: ((c-1)/c) ln(1-c) - 1 = -ln(1/2) - 1.
    let oracle = ((0.5 - 1.0) / 0.5) * 0.5f64.ln() - 1.0;
    assert_abs_diff_eq!(k.l1n, oracle, epsilon = 1e-15);
    assert_eq!(k.l1n, k.l2n);
    assert_abs_diff_eq!(k.l1n, -0.306853, epsilon = 1e-6);
}

#[test]
fn centering_constants_stay_in_unit_interval() {
    for (p, n) in [
        (1usize, 10usize),
        (5, 12),
        (49, 51),
        (400, 1000),
        (799, 1000),
    ] {
        let k = correction_constants(p, n, n).unwrap();
        assert!(k.l1n > -1.0 && k.l1n < 0.0, "p={p} n={n}: l1n={}", k.l1n);
        assert!(k.s0n > 1.0);
    }
}

#[test]
fn constants_reject_dimension_at_sample_size() {
    assert!(matches!(
        correction_constants(99, 100, 100),
        Err(Error::ModerateDimension { .. })
    ));
    assert!(matches!(
        correction_constants(0, 100, 100),
        Err(Error::ModerateDimension { .. })
    ));
}

#[test]
fn identical_training_sets_score_zero() {
    let mut r = rng(31);
    let x = random_data(3, 12, &mut r);
    let model = fit(&x, &x, Variant::Generalized).unwrap();
    for _ in 0..20 {
        let z = random_z(3, &mut r);
        assert_eq!(model.discriminant(&z).unwrap(), 0.0);
        assert_eq!(model.classify(&z).unwrap(), ClassLabel::Class2);
    }
}

#[test]
fn sample_variant_equals_generalized_with_classical_constants() {
    let mut r = rng(32);
    let x1 = random_data(4, 20, &mut r);
    let x2 = random_data(4, 25, &mut r);
    let sample = fit(&x1, &x2, Variant::Sample).unwrap();
    let gen = fit(&x1, &x2, Variant::Generalized).unwrap();
    let reviewed = gen.to_variant(Variant::Sample);
    for _ in 0..100 {
        let z = random_z(4, &mut r);
        let a = sample.discriminant(&z).unwrap();
        let b = reviewed.discriminant(&z).unwrap();
        assert_eq!(a.to_bits(), b.to_bits(), "scores must be bit-identical");
    }
}

#[test]
fn fitted_covariance_matches_double_loop() {
    let m = DMatrix::from_row_slice(2, 5, &[1.0, 2.0, 0.5, -1.0, 3.0, 0.0, 1.5, -0.5, 2.0, 1.0]);
    let x = DataMatrix::new(m.clone()).unwrap();
    let other = {
        let mut r = rng(33);
        random_data(2, 5, &mut r)
    };
    let model = fit(&x, &other, Variant::Generalized).unwrap();

    let mut mean = [0.0f64; 2];
    for j in 0..5 {
        for i in 0..2 {
            mean[i] += m[(i, j)] / 5.0;
        }
    }
    let s1 = model.chol1().reconstruct();
    for a in 0..2 {
        for b in 0..2 {
            let mut acc = 0.0;
            for j in 0..5 {
                acc += (m[(a, j)] - mean[a]) * (m[(b, j)] - mean[b]);
            }
            acc /= 4.0;
            assert_abs_diff_eq!(s1[(a, b)], acc, epsilon = 1e-12);
        }
    }
}

#[test]
fn fit_rejects_dimension_near_sample_size() {
    let mut r = rng(34);
    let x1 = random_data(4, 20, &mut r);
    let x2 = random_data(4, 20, &mut r);
    let short = x2.slice_columns(0, 5);
    match fit(&x1, &short, Variant::Sample) {
        Err(Error::ModerateDimension { .. }) => {}
        other => panic!("expected precondition failure, got {other:?}"),
    }
}

#[test]
fn fit_names_the_singular_class() {
    let mut r = rng(34);
    let x1 = random_data(3, 12, &mut r);
    // Every observation in class 2 is the same point, so its covariance is
    // exactly zero and factorization fails on the first pivot.
    let constant = DataMatrix::new(DMatrix::from_fn(3, 12, |i, _| i as f64)).unwrap();
    match fit(&x1, &constant, Variant::Generalized) {
        Err(Error::ClassCovarianceSingular { class: 2, pivot: 0 }) => {}
        other => panic!("expected a singular class 2, got {other:?}"),
    }
}

/// Scalar training sets {-1, 0, 1} and {-2, 0, 2}: variances 1 and 4, both
/// means zero, so at z = 0 only the log-determinants survive.
fn scalar_example() -> (DataMatrix, DataMatrix) {
    let t1 = DataMatrix::new(DMatrix::from_row_slice(1, 3, &[-1.0, 0.0, 1.0])).unwrap();
    let t2 = DataMatrix::new(DMatrix::from_row_slice(1, 3, &[-2.0, 0.0, 2.0])).unwrap();
    (t1, t2)
}

#[test]
fn scalar_sample_discriminant_is_log_variance_ratio() {
    let (t1, t2) = scalar_example();
    let model = fit(&t1, &t2, Variant::Sample).unwrap();
    let z = DVector::from_element(1, 0.0);
    let delta = model.discriminant(&z).unwrap();
    assert_abs_diff_eq!(delta, -(4.0f64.ln()), epsilon = 1e-12);
    assert_eq!(model.classify(&z).unwrap(), ClassLabel::Class1);
}

#[test]
fn scalar_generalized_discriminant_cancels_symmetric_constants() {
    let (t1, t2) = scalar_example();
    let model = fit(&t1, &t2, Variant::Generalized).unwrap();
    let z = DVector::from_element(1, 0.0);
    // Equal class sizes: s0n = m0n and l1n = l2n, and both quadratic terms
    // vanish at the common mean, so the corrected score reduces to the same
    // log variance ratio.
    let delta = model.discriminant(&z).unwrap();
    assert_abs_diff_eq!(delta, -(4.0f64.ln()), epsilon = 1e-12);
}

#[test]
fn discriminant_rejects_non_finite_points() {
    let mut r = rng(35);
    let model = fit(
        &random_data(2, 10, &mut r),
        &random_data(2, 10, &mut r),
        Variant::Sample,
    )
    .unwrap();
    let z = DVector::from_vec(vec![f64::NAN, 0.0]);
    assert!(matches!(model.discriminant(&z), Err(Error::NonFinite)));
}

#[test]
fn optimal_rule_with_shared_identity_covariance() {
    let p = 4;
    let pop1 = PopulationSpec::new(
        DVector::zeros(p),
        SpdMatrix::identity(p),
        Noise::StandardNormal,
    )
    .unwrap();
    let mut mu2 = DVector::zeros(p);
    mu2[0] = 2.0;
    let pop2 =
        PopulationSpec::new(mu2.clone(), SpdMatrix::identity(p), Noise::StandardNormal).unwrap();

    let z = DVector::zeros(p);
    let delta = optimal_discriminant(&pop1, &pop2, &z).unwrap();
    assert_abs_diff_eq!(delta, -4.0, epsilon = 1e-12);

    let rule = OptimalQda::new(&pop1, &pop2).unwrap();
    assert_eq!(rule.classify(&z).unwrap(), ClassLabel::Class1);

    // Midpoint is equidistant: zero score goes to class 2 by the tie rule.
    let mid = mu2 * 0.5;
    let delta_mid = rule.discriminant(&mid).unwrap();
    assert_abs_diff_eq!(delta_mid, 0.0, epsilon = 1e-12);
    assert_eq!(rule.classify(&mid).unwrap(), ClassLabel::Class2);
}

#[test]
fn optimal_rule_with_scaled_covariances() {
    let p = 2;
    let pop1 = PopulationSpec::new(
        DVector::zeros(p),
        SpdMatrix::identity(p),
        Noise::StandardNormal,
    )
    .unwrap();
    let pop2 = PopulationSpec::new(
        DVector::zeros(p),
        SpdMatrix::scaled_identity(p, 2.0).unwrap(),
        Noise::StandardNormal,
    )
    .unwrap();
    let z = DVector::from_vec(vec![1.0, 1.0]);
    // d1 = 2, d2 = 1, log-dets 0 and 2 ln 2.
    let delta = optimal_discriminant(&pop1, &pop2, &z).unwrap();
    assert_abs_diff_eq!(delta, 1.0 - 2.0 * 2.0f64.ln(), epsilon = 1e-12);
    assert!(delta < 0.0);
}

#[test]
fn scores_invariant_under_coordinate_permutation() {
    let mut r = rng(36);
    let p = 5;
    let x1 = random_data(p, 30, &mut r);
    let x2 = random_data(p, 24, &mut r);
    let z = random_z(p, &mut r);
    let perm = [3usize, 0, 4, 1, 2];

    let permute_data = |x: &DataMatrix| {
        DataMatrix::new(DMatrix::from_fn(p, x.count(), |i, j| {
            x.as_matrix()[(perm[i], j)]
        }))
        .unwrap()
    };
    let pz = DVector::from_fn(p, |i, _| z[perm[i]]);

    for variant in [Variant::Sample, Variant::Generalized] {
        let base = fit(&x1, &x2, variant).unwrap().discriminant(&z).unwrap();
        let permuted = fit(&permute_data(&x1), &permute_data(&x2), variant)
            .unwrap()
            .discriminant(&pz)
            .unwrap();
        assert_abs_diff_eq!(base, permuted, epsilon = 1e-10 * base.abs().max(1.0));
    }
}

#[test]
fn optimal_score_invariant_under_data_rescaling() {
    let mut r = rng(37);
    let p = 3;
    let a = 2.5f64;
    let g: DMatrix<f64> = DMatrix::from_fn(p, p + 2, |_, _| StandardNormal.sample(&mut r));
    let sigma1 = SpdMatrix::new(&g * g.transpose() / 5.0 + DMatrix::identity(p, p)).unwrap();
    let h: DMatrix<f64> = DMatrix::from_fn(p, p + 2, |_, _| StandardNormal.sample(&mut r));
    let sigma2 = SpdMatrix::new(&h * h.transpose() / 5.0 + DMatrix::identity(p, p)).unwrap();
    let mu1 = random_z(p, &mut r);
    let mu2 = random_z(p, &mut r);
    let z = random_z(p, &mut r);

    let noise = Noise::StandardNormal;
    let pop1 = PopulationSpec::new(mu1.clone(), sigma1.clone(), noise).unwrap();
    let pop2 = PopulationSpec::new(mu2.clone(), sigma2.clone(), noise).unwrap();
    let base = optimal_discriminant(&pop1, &pop2, &z).unwrap();

    // Rescale the whole problem: mu -> a mu, Sigma -> a^2 Sigma, z -> a z.
    // Quadratic forms are unchanged and the log-det shifts cancel between
    // the classes, so the score is identical.
    let scale = |s: &SpdMatrix| SpdMatrix::new(s.as_matrix() * (a * a)).unwrap();
    let spop1 = PopulationSpec::new(&mu1 * a, scale(&sigma1), noise).unwrap();
    let spop2 = PopulationSpec::new(&mu2 * a, scale(&sigma2), noise).unwrap();
    let scaled = optimal_discriminant(&spop1, &spop2, &(&z * a)).unwrap();
    assert_abs_diff_eq!(base, scaled, epsilon = 1e-9 * base.abs().max(1.0));
}

#[test]
fn generalized_approaches_sample_in_classical_limit() {
    let p = 5;
    let mut diffs = Vec::new();
    for n in [1000usize, 10_000, 100_000] {
        let mut r = rng(38);
        let x1 = random_data(p, n, &mut r);
        let x2 = random_data(p, n, &mut r);
        let gen = fit(&x1, &x2, Variant::Generalized).unwrap();
        let sam = gen.to_variant(Variant::Sample);
        let mut zr = rng(39);
        let avg: f64 = (0..20)
            .map(|_| {
                let z = random_z(p, &mut zr);
                (gen.discriminant(&z).unwrap() - sam.discriminant(&z).unwrap()).abs()
            })
            .sum::<f64>()
            / 20.0;
        diffs.push(avg);
    }
    assert!(
        diffs[0] > diffs[1] && diffs[1] > diffs[2],
        "correction must fade as n grows: {diffs:?}"
    );
    assert!(diffs[2] < 1e-3);
}

#[test]
fn label_swap_negates_score_for_equal_sizes() {
    let mut r = rng(40);
    let p = 4;
    let x1 = random_data(p, 18, &mut r);
    let x2 = random_data(p, 18, &mut r);
    for variant in [Variant::Sample, Variant::Generalized] {
        let fwd = fit(&x1, &x2, variant).unwrap();
        let rev = fit(&x2, &x1, variant).unwrap();
        for _ in 0..20 {
            let z = random_z(p, &mut r);
            let a = fwd.discriminant(&z).unwrap();
            let b = rev.discriminant(&z).unwrap();
            assert_abs_diff_eq!(a, -b, epsilon = 1e-10 * a.abs().max(1.0));
        }
    }
}

#[test]
fn noise_fourth_moments() {
    assert_eq!(Noise::StandardNormal.m4(), 3.0);
    assert_eq!(Noise::standardized_t(5).unwrap().m4(), 9.0);
    assert_eq!(Noise::standardized_t(7).unwrap().m4(), 5.0);
    assert!(matches!(
        Noise::standardized_t(4),
        Err(Error::DfTooSmall { df: 4 })
    ));
}

#[test]
fn model_json_round_trip_is_exact() {
    let mut r = rng(41);
    let p = 3;
    let x1 = random_data(p, 15, &mut r);
    let x2 = random_data(p, 12, &mut r);
    for variant in [Variant::Sample, Variant::Generalized] {
        let model = fit(&x1, &x2, variant).unwrap();
        let text = model.to_json();
        let back = mdqda::qda::FittedQda::from_json(&text).unwrap();
        assert_eq!(back.variant(), variant);
        assert_eq!(back.n1(), 15);
        assert_eq!(back.n2(), 12);
        for _ in 0..50 {
            let z = random_z(p, &mut r);
            let a = model.discriminant(&z).unwrap();
            let b = back.discriminant(&z).unwrap();
            assert_eq!(
                a.to_bits(),
                b.to_bits(),
                "round trip must score identically"
            );
        }
    }
}

#[test]
fn model_json_rejects_corrupted_documents() {
    let mut r = rng(42);
    let model = fit(
        &random_data(2, 10, &mut r),
        &random_data(2, 10, &mut r),
        Variant::Generalized,
    )
    .unwrap();
    let good = model.to_json();

    let bad_version = good.replace("\"format_version\": 1", "\"format_version\": 99");
    assert!(matches!(
        mdqda::qda::FittedQda::from_json(&bad_version),
        Err(Error::ModelFormat(_))
    ));

    assert!(mdqda::qda::FittedQda::from_json("{").is_err());

    let bad_p = good.replace("\"p\": 2", "\"p\": 3");
    assert!(mdqda::qda::FittedQda::from_json(&bad_p).is_err());
}
