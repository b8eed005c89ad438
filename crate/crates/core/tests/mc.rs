use sticky_wage::mc::{pairwise_sum, Estimate};
use sticky_wage::policy::{simulate_controlled, ControlledConfig};
use sticky_wage::suite::fixed_suite;
use sticky_wage::{Constants, Correlation, FeedbackRule, Matrix, NoisePlan};

/// Sample covariance of (income, market) increments per unit time over 10⁴ draws.
fn covariances(corr: &Correlation<f64>) -> (Vec<f64>, Vec<f64>) {
    let n = corr.dim();
    let plan = NoisePlan::new(0.01, 1.0, 4, corr.clone()).unwrap();
    let mut zy = vec![Vec::new(); n * n];
    let mut yy = vec![Vec::new(); n * n];
    for p in 0..100 {
        let noise = plan.generate(p);
        for k in 0..noise.steps() {
            let y = noise.income_increment(corr, k);
            let z = noise.dz(k);
            for i in 0..n {
                for j in 0..n {
                    zy[i * n + j].push(y[i] * z[j] / 0.01);
                    yy[i * n + j].push(y[i] * y[j] / 0.01);
                }
            }
        }
    }
    let mean = |v: &Vec<f64>| pairwise_sum(v) / v.len() as f64;
    (zy.iter().map(mean).collect(), yy.iter().map(mean).collect())
}

#[test]
fn income_noise_has_the_requested_correlation() {
    // 4 stderr of a product of unit normals over 10⁴ draws.
    let tol = 4.0 / 100.0;
    let diag = Correlation::diagonal(&[0.6, -0.3]).unwrap();
    let c1 = Matrix::from_rows(&[vec![0.6, 0.0], vec![0.0, -0.3]]).unwrap();
    for (corr, cross) in [(Correlation::perfect(2), Matrix::identity(2)), (Correlation::null(2), Matrix::zeros(2)), (diag, c1)] {
        let (zy, yy) = covariances(&corr);
        for i in 0..2 {
            for j in 0..2 {
                assert!((zy[i * 2 + j] - cross[(i, j)]).abs() < tol * 1.5, "{corr:?} zy[{i},{j}] = {}", zy[i * 2 + j]);
                let id = if i == j { 1.0 } else { 0.0 };
                assert!((yy[i * 2 + j] - id).abs() < tol * 1.5, "{corr:?} yy[{i},{j}] = {}", yy[i * 2 + j]);
            }
        }
    }
}

#[test]
fn quadratic_variation_matches_elapsed_time() {
    let plan = NoisePlan::<f64>::new(1e-4, 1.0, 1, Correlation::diagonal(&[0.5]).unwrap()).unwrap();
    for p in 0..5 {
        let noise = plan.generate(p);
        let qv: f64 = (0..noise.steps()).map(|k| noise.dz(k)[0].powi(2)).sum();
        let qv_star: f64 = (0..noise.steps()).map(|k| noise.dz_star(k).unwrap()[0].powi(2)).sum();
        assert!((qv - 1.0).abs() < 0.05 && (qv_star - 1.0).abs() < 0.05, "{qv} {qv_star}");
    }
}

#[test]
fn coarsening_sums_increments() {
    let noise = NoisePlan::<f64>::new(0.25, 2.0, 3, Correlation::null(1)).unwrap().generate(2);
    let coarse = noise.coarsen(4).unwrap();
    assert_eq!(coarse.steps(), 2);
    assert_eq!(coarse.step(), 1.0);
    let z = noise.brownian();
    assert!((coarse.dz(0)[0] - z[4]).abs() < 1e-15);
    assert!((coarse.dz(1)[0] - (z[8] - z[4])).abs() < 1e-15);
    assert!(noise.coarsen(3).is_err());
}

#[test]
fn estimate_examples() {
    let e = Estimate::from_samples(&[1.0, 2.0, 3.0, 4.0]);
    assert_eq!(e.mean, 2.5);
    assert!((e.stderr - (5.0f64 / 12.0).sqrt()).abs() < 1e-15);
    let e = e.with_tail(0.5);
    assert!(e.agrees_with(2.5 + 2.0 * e.stderr + 0.49, 2.0));
    assert!(!e.agrees_with(2.5 + 2.0 * e.stderr + 0.51, 2.0));
}

#[test]
fn results_do_not_depend_on_thread_count() {
    let s = &fixed_suite::<f64>(2.0, 0.02).unwrap()[3];
    let c = Constants::new(&s.params, &s.phi, 0.02).unwrap();
    let rule = FeedbackRule::optimal(&s.params, &c).unwrap();
    let run = |threads| {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        pool.install(|| simulate_controlled(s.w, &s.x, &s.phi, &s.params, &rule, &ControlledConfig::new(5.0, 300, 9)).unwrap())
    };
    let (a, b, c16) = (run(1), run(4), run(16));
    assert_eq!(a.utility.estimate, b.utility.estimate);
    assert_eq!(a.utility.estimate, c16.utility.estimate);
    assert_eq!(a.summaries, b.summaries);
}
