use nalgebra::DVector;
use nonadditivity::dvoretzky::{estimate_m, ratio_floor, shrinking_experiment, window_experiment};
use nonadditivity::ensembles::{random_subspace_basis, Isometry, RngStream};
use nonadditivity::linalg::{schatten_norm, CMatrix, SchattenOrder, C64};
use nonadditivity::optimize::{
    random_unit_vector, sphere_ascent, subspace_max_ratio, subspace_norm_window, tangent_projection, AscentConfig,
    Sense, SubspaceNorm,
};

fn order(q: f64) -> SchattenOrder {
    SchattenOrder::new(q).unwrap()
}

/// `||x||_q` for `x = sum_k c_k W_k`, built entry by entry and normed through the SVD.
fn ratio_by_hand(w: &Isometry, c: &DVector<C64>, q: SchattenOrder) -> f64 {
    let (d, r) = w.out_shape();
    let v = w.matrix();
    let entries: Vec<C64> = (0..d * r).map(|row| (0..c.len()).map(|k| v.get(row, k) * c[k]).sum()).collect();
    schatten_norm(&CMatrix::from_row_major(d, r, &entries).unwrap(), q).unwrap() / c.norm()
}

#[test]
fn gradient_matches_central_differences() {
    let q = order(4.0);
    let w = random_subspace_basis(5, 4, &mut RngStream::new(401, 0)).unwrap();
    let c = random_unit_vector(5, &mut RngStream::new(401, 1));
    let (_, g) = SubspaceNorm::new(&w, q).value_and_gradient(&c);
    let h = 1e-5;
    for k in 0..5 {
        for (dir, part) in [(C64::new(1.0, 0.0), g[k].re), (C64::new(0.0, 1.0), g[k].im)] {
            let mut plus = c.clone();
            let mut minus = c.clone();
            plus[k] += dir * h;
            minus[k] -= dir * h;
            // the unnormalized norm, so the derivative is the Euclidean one
            let f = |x: &DVector<C64>| ratio_by_hand(&w, x, q) * x.norm();
            let fd = (f(&plus) - f(&minus)) / (2.0 * h);
            assert!((fd - part).abs() <= 1e-6, "coordinate {k}: {fd} vs {part}");
        }
    }
}

#[test]
fn ascent_is_monotone_and_stationary() {
    let q = order(6.0);
    let w = random_subspace_basis(12, 6, &mut RngStream::new(402, 0)).unwrap();
    let obj = SubspaceNorm::new(&w, q);
    let cfg = AscentConfig { max_iters: 2000, ..Default::default() };
    for s in 0..4 {
        let start = random_unit_vector(12, &mut RngStream::new(402, 10 + s));
        for sense in [Sense::Maximize, Sense::Minimize] {
            let run = sphere_ascent(&obj, start.clone(), sense, &cfg);
            let ok = run.history.windows(2).all(|p| match sense {
                Sense::Maximize => p[1] >= p[0] - 1e-14,
                Sense::Minimize => p[1] <= p[0] + 1e-14,
            });
            assert!(ok, "history not monotone");
            assert!((run.point.norm() - 1.0).abs() < 1e-12);
            assert!((ratio_by_hand(&w, &run.point, q) - run.value).abs() < 1e-12);
            if run.converged {
                let (_, g) = obj.value_and_gradient(&run.point);
                assert!(tangent_projection(&run.point, &g).norm() < 1e-6);
            }
        }
    }
}

#[test]
fn one_dimensional_subspace_is_exact() {
    let q = order(4.0);
    let w = random_subspace_basis(1, 5, &mut RngStream::new(403, 0)).unwrap();
    let cfg = AscentConfig { restarts: 3, sample_baseline: 10, ..Default::default() };
    let window = subspace_norm_window(&w, q, &cfg, &mut RngStream::new(403, 1)).unwrap();
    let exact = ratio_by_hand(&w, &DVector::from_element(1, C64::new(1.0, 0.0)), q);
    assert!((window.max_ratio - exact).abs() < 1e-12);
    assert!((window.min_ratio - exact).abs() < 1e-12);
}

#[test]
fn window_brackets_random_subspace_samples() {
    let (d, m, q) = (8, 23, order(4.0));
    let cfg = AscentConfig { restarts: 10, ..Default::default() };
    for t in 0..3 {
        let w = random_subspace_basis(m, d, &mut RngStream::new(404, t)).unwrap();
        let window = subspace_norm_window(&w, q, &cfg, &mut RngStream::new(404, 100 + t)).unwrap();
        assert!(window.max_ratio / window.min_ratio <= 2.5, "spread {}", window.max_ratio / window.min_ratio);
        assert!(window.min_ratio >= ratio_floor(d, q) - 1e-12 && window.max_ratio <= 1.0 + 1e-12);
        let mut rng = RngStream::new(404, 200 + t);
        let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
        for _ in 0..10_000 {
            let r = ratio_by_hand(&w, &random_unit_vector(m, &mut rng), q);
            lo = lo.min(r);
            hi = hi.max(r);
        }
        assert!(hi <= window.max_ratio + 1e-12, "sample {hi} above optimizer {}", window.max_ratio);
        assert!(lo >= window.min_ratio - 1e-12, "sample {lo} below optimizer {}", window.min_ratio);
    }
}

#[test]
fn window_at_the_dvoretzky_dimension_sits_around_the_mean() {
    let (d, q) = (16, order(4.0));
    let stats = estimate_m(d, q, 500, &mut RngStream::new(405, 0)).unwrap();
    let cfg = AscentConfig { restarts: 8, sample_baseline: 500, ..Default::default() };
    let window = window_experiment(d, q, 64, 4, &cfg, &stats, &mut RngStream::new(405, 1)).unwrap();
    for w in &window.per_trial {
        assert!(w.max_ratio <= 2.0 * stats.m_hat && w.min_ratio >= 0.5 * stats.m_hat, "{w:?}");
    }
}

#[test]
fn shrink_constant_at_quarter_dimension() {
    let rows = shrinking_experiment(16, SchattenOrder::INFINITY, &[64], 10, &AscentConfig::default(), &mut RngStream::new(406, 0))
        .unwrap();
    let c = rows[0].empirical_c;
    assert!((1.0..=4.0).contains(&c), "C = {c}");
}

#[test]
fn subspace_maximum_grows_with_nested_subspaces() {
    let cfg = AscentConfig::default();
    for t in 0..3 {
        let full = random_subspace_basis(128, 16, &mut RngStream::new(407, t)).unwrap();
        let maxima: Vec<f64> = [16, 32, 64, 128]
            .iter()
            .map(|&k| {
                let w = full.leading_columns(k).unwrap();
                subspace_max_ratio(&w, SchattenOrder::INFINITY, &cfg, &mut RngStream::new(407, 100 + t)).unwrap()
            })
            .collect();
        assert!(maxima.windows(2).all(|p| p[1] >= p[0] - 1e-9), "{maxima:?}");
    }
}
