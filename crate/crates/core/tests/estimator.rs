use scid::analysis::LinearEstimator;
use scid::{
    build_cover, build_frame_matrices, build_grid, estimate, identify_oracle, monte_carlo,
    random_weights, simulate_ensemble, Cover, Grid, McConfig, ScatteringFunction, WeightSequence,
};

fn instance() -> (Grid, Cover, ScatteringFunction, WeightSequence) {
    let g = build_grid(3, 0.5, 2, 2, 2, 3).unwrap();
    let c = build_cover(&g, &[vec![true, false, true], vec![false, true, false]]).unwrap();
    let sf = ScatteringFunction::random(&g, &c, 8);
    let w = random_weights(3, 12).unwrap();
    (g, c, sf, w)
}

#[test]
fn empirical_variance_matches_exact() {
    let (_, c, sf, w) = instance();
    let r = monte_carlo(
        &sf,
        &w,
        &c,
        McConfig {
            l: 20,
            trials: 2000,
            seed: 1,
            scaling_check: false,
        },
    )
    .unwrap();
    let rel = (r.cover_averaged_variance - r.exact_cover_averaged_variance).abs()
        / r.exact_cover_averaged_variance;
    assert!(
        rel < 0.08,
        "cover-averaged {} vs exact {}",
        r.cover_averaged_variance,
        r.exact_cover_averaged_variance
    );
    for p in &r.points {
        let rel = (p.variance - p.exact_variance).abs() / p.exact_variance;
        assert!(rel < 0.3, "{p:?}");
    }
    assert!(r.unbiased());
    assert!(r.bound_holds());
}

#[test]
fn within_trial_variance_tracks_across_trial_variance() {
    let (_, c, sf, w) = instance();
    let r = monte_carlo(
        &sf,
        &w,
        &c,
        McConfig {
            l: 200,
            trials: 100,
            seed: 2,
            scaling_check: false,
        },
    )
    .unwrap();
    let mean_within = r.trial_variance.iter().sum::<f64>() / r.trial_variance.len() as f64;
    let rel =
        (mean_within - r.exact_cover_averaged_variance).abs() / r.exact_cover_averaged_variance;
    assert!(
        rel < 0.05,
        "{mean_within} vs {}",
        r.exact_cover_averaged_variance
    );
}

#[test]
fn exact_variance_is_inverse_in_l() {
    let (g, _, sf, w) = instance();
    let fm = build_frame_matrices(&w, sf.cover()).unwrap();
    let lin = LinearEstimator::new(&g, &fm);
    let v1 = lin.exact_variance(&sf, &w, 10);
    let v4 = lin.exact_variance(&sf, &w, 40);
    for (a, b) in v1.iter().zip(&v4) {
        for (x, y) in a.iter().zip(b.iter()) {
            assert!((x / y - 4.0).abs() < 1e-12);
        }
    }
}

#[test]
fn estimate_approaches_oracle() {
    let (_, c, sf, w) = instance();
    let oracle = identify_oracle(&sf, &w).unwrap();
    assert!(oracle.max_relative_error(&sf).unwrap() < 1e-12);
    let errs: Vec<f64> = [100, 10_000]
        .iter()
        .map(|&l| {
            let ens = simulate_ensemble(&sf, &w, l, 77).unwrap();
            estimate(&ens, &w, &c)
                .unwrap()
                .raw
                .max_relative_error(&sf)
                .unwrap()
        })
        .collect();
    assert!(errs[1] < errs[0] / 3.0, "{errs:?}");
    assert!(errs[1] < 0.2, "{errs:?}");
}

#[test]
fn clamped_estimate_is_a_valid_scattering_function() {
    let (_, c, sf, w) = instance();
    let ens = simulate_ensemble(&sf, &w, 3, 5).unwrap();
    let est = estimate(&ens, &w, &c).unwrap();
    assert!(est
        .clamped
        .patches()
        .iter()
        .all(|p| p.iter().all(|&v| v >= 0.0)));
    let raw_negative = est
        .raw
        .patches()
        .iter()
        .flat_map(|p| p.iter())
        .filter(|z| z.re < 0.0)
        .count();
    assert_eq!(raw_negative, est.clamp.negative_points);
}
