use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sticky_wage::labor::{feedback_representation, picard_solve, positivity_witness, simulate_income, PicardOptions};
use sticky_wage::mc::{convergence_study, error_study, par_paths};
use sticky_wage::suite::{base_market, suite_kernels};
use sticky_wage::{Correlation, HistorySegment, KernelProcess, Measure, NoisePlan, RadonMeasure, Scheme};

fn random_nonneg(rng: &mut ChaCha8Rng, scale: f64) -> Measure {
    let mut atoms = Vec::new();
    for i in 0..10 {
        if rng.random_bool(0.3) {
            atoms.push((-1.0 + i as f64 / 10.0, scale * rng.random::<f64>()));
        }
    }
    let density = (0..5).map(|i| (-1.0 + i as f64 / 5.0, if rng.random_bool(0.5) { scale * rng.random::<f64>() } else { 0.0 })).collect();
    RadonMeasure::new(1.0, atoms, density).unwrap()
}

fn sup_gap(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(u, v)| (u - v).abs()).fold(0.0, f64::max)
}

#[test]
fn nonnegative_kernels_keep_income_positive() {
    let p = base_market(0.5, 0.3).unwrap();
    let plan = NoisePlan::new(0.01, 5.0, 21, p.corr.clone()).unwrap();
    for (name, phi) in suite_kernels::<f64>().unwrap() {
        let x = HistorySegment::tent(1.0, 0.01, 0.05, -0.5, 0.3, 1.0).unwrap();
        let kernel: KernelProcess<f64> = phi.into();
        let mins = par_paths(500, |i| simulate_income(&x, &kernel, &p, &plan.generate(i), Scheme::Milstein).unwrap().min());
        assert!(mins.iter().all(|&m| m > 0.0), "{name}");
    }
}

#[test]
fn income_is_linear_in_the_initial_datum() {
    let p = base_market(0.5, 0.15).unwrap();
    let x = HistorySegment::linear(1.0, 0.01, 0.5, 1.2).unwrap();
    let phi: KernelProcess<f64> = suite_kernels::<f64>().unwrap()[2].1.clone().into();
    let noise = NoisePlan::new(0.01, 3.0, 4, p.corr.clone()).unwrap().generate(0);
    let base = simulate_income(&x, &phi, &p, &noise, Scheme::Milstein).unwrap();
    for lambda in [0.25, 3.0, 17.0] {
        let scaled = simulate_income(&x.scaled(lambda), &phi, &p, &noise, Scheme::Milstein).unwrap();
        for (a, b) in scaled.values.iter().zip(&base.values) {
            assert!((a - lambda * b).abs() <= 1e-13 * (lambda * b).abs());
        }
    }
}

#[test]
fn income_is_monotone_in_the_kernel() {
    let p = base_market(0.5, 0.15).unwrap();
    let x = HistorySegment::linear(1.0, 0.02, 0.6, 1.0).unwrap();
    let plan = NoisePlan::new(0.02, 4.0, 8, p.corr.clone()).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..4 {
        let phi = random_nonneg(&mut rng, 0.05);
        let inc = random_nonneg(&mut rng, 0.05);
        let psi = phi.checked_add(&inc).unwrap();
        let (kp, ks): (KernelProcess<f64>, KernelProcess<f64>) = (phi.into(), psi.into());
        let strict = !inc.is_zero();
        let ok = par_paths(100, |i| {
            let noise = plan.generate(i);
            let a = simulate_income(&x, &kp, &p, &noise, Scheme::Milstein).unwrap();
            let b = simulate_income(&x, &ks, &p, &noise, Scheme::Milstein).unwrap();
            a.values.iter().zip(&b.values).enumerate().all(|(k, (u, v))| if k > 0 && strict { u < v } else { u <= v })
        });
        assert!(ok.iter().all(|&b| b));
    }
}

#[test]
fn method_of_steps_second_window() {
    // y' = 0.1 y(t - 1) with y = 1 on [-1, 0]: y(t) = 1.1 + 0.1(t - 1) + 0.005(t - 1)^2 on [1, 2].
    let mut p = base_market(0.5, 0.0).unwrap();
    p.mu_y = 0.0;
    let phi: KernelProcess<f64> = Measure::dirac(1.0, -1.0, 0.1).unwrap().into();
    let err = |h: f64| {
        let x = HistorySegment::constant(1.0, h, 1.0).unwrap();
        let noise = NoisePlan::new(h, 2.0, 0, p.corr.clone()).unwrap().generate(0);
        let y = simulate_income(&x, &phi, &p, &noise, Scheme::Milstein).unwrap();
        (y.values.last().unwrap() - 1.205).abs()
    };
    let (e1, e2) = (err(0.01), err(0.005));
    assert!(e1 < 0.01 * 0.01 && (e1 / e2 - 2.0).abs() < 0.1, "{e1} {e2}");
}

#[test]
fn picard_oracle_agrees_with_time_stepping() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let h = 0.01;
    for s in 0..5 {
        let p = base_market(0.5, rng.random_range(0.0..0.3)).unwrap();
        let phi = random_nonneg(&mut rng, 0.2);
        let x = HistorySegment::linear(1.0, h, rng.random_range(0.2..1.0), rng.random_range(0.5..2.0)).unwrap();
        let kernel: KernelProcess<f64> = phi.into();
        let noise = NoisePlan::new(h, 3.0, 100 + s, p.corr.clone()).unwrap().generate(0);
        let euler = simulate_income(&x, &kernel, &p, &noise, Scheme::Milstein).unwrap();
        let picard = picard_solve(&x, &kernel, &p, &noise, &PicardOptions::default()).unwrap();
        let scale = euler.values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        assert!(sup_gap(&euler.values, &picard.path.values) < 5.0 * h * scale);
    }
}

#[test]
fn picard_contraction_improves_with_alpha() {
    let p = base_market(0.5, 0.2).unwrap();
    let x = HistorySegment::constant(1.0, 0.01, 1.0).unwrap();
    let kernel: KernelProcess<f64> = suite_kernels::<f64>().unwrap()[2].1.clone().into();
    let noise = NoisePlan::new(0.01, 3.0, 5, p.corr.clone()).unwrap().generate(0);
    let ratio = |alpha| {
        let opts = PicardOptions { alpha, ..PicardOptions::default() };
        picard_solve(&x, &kernel, &p, &noise, &opts).unwrap().contraction_ratio
    };
    let r: Vec<f64> = [1.0, 5.0, 25.0].into_iter().map(ratio).collect();
    assert!(r[0] > r[1] && r[1] > r[2], "{r:?}");
}

#[test]
fn picard_reports_non_convergence() {
    let p = base_market(0.5, 0.2).unwrap();
    let x = HistorySegment::constant(1.0, 0.01, 1.0).unwrap();
    let noise = NoisePlan::new(0.01, 2.0, 5, p.corr.clone()).unwrap().generate(0);
    let opts = PicardOptions { max_iterations: 3, ..PicardOptions::default() };
    let err = picard_solve(&x, &Measure::flat(1.0, 0.1).unwrap().into(), &p, &noise, &opts).unwrap_err();
    assert!(matches!(err, sticky_wage::Error::NoConvergence { iterations: 3, .. }));
}

#[test]
fn feedback_representation_converges_at_first_order() {
    let p = base_market(0.5, 0.15).unwrap();
    let phi: KernelProcess<f64> = suite_kernels::<f64>().unwrap()[2].1.clone().into();
    let plan = NoisePlan::new(0.0025, 2.0, 12, p.corr.clone()).unwrap();
    let table = error_study(&plan, 50, &[4, 2, 1], |noise| {
        let x = HistorySegment::linear(1.0, noise.step(), 0.8, 1.0)?;
        let y = simulate_income(&x, &phi, &p, noise, Scheme::Milstein)?;
        let rec = feedback_representation(&x, &y, &phi, &p)?;
        Ok(sup_gap(&y.values, &rec.values))
    })
    .unwrap();
    assert!(table.monotone, "{table:?}");
    assert!(table.ratios.iter().all(|r| (1.6..=2.4).contains(r)), "{table:?}");
}

#[test]
fn strong_convergence_against_finer_reference() {
    let p = base_market(0.5, 0.15).unwrap();
    let phi: KernelProcess<f64> = suite_kernels::<f64>().unwrap()[0].1.clone().into();
    let plan = NoisePlan::new(0.0025, 2.0, 13, p.corr.clone()).unwrap();
    let table = convergence_study(&plan, 50, &[8, 4, 2], |noise| {
        let x = HistorySegment::linear(1.0, noise.step(), 0.8, 1.0)?;
        Ok(simulate_income(&x, &phi, &p, noise, Scheme::Milstein)?.values)
    })
    .unwrap();
    assert!(table.monotone, "{table:?}");
    // Later ratios are biased upward by the reference's own error.
    assert!((1.6..=2.4).contains(&table.ratios[0]), "{table:?}");
}

#[test]
fn euler_maruyama_is_only_half_order_under_noise() {
    let p = base_market(0.5, 0.3).unwrap();
    let phi: KernelProcess<f64> = Measure::zero(1.0).into();
    let plan = NoisePlan::new(0.0025, 2.0, 14, p.corr.clone()).unwrap();
    let run = |scheme| {
        convergence_study(&plan, 50, &[8, 4], |noise| {
            let x = HistorySegment::constant(1.0, noise.step(), 1.0)?;
            Ok(simulate_income(&x, &phi, &p, noise, scheme)?.values)
        })
        .unwrap()
    };
    assert!(run(Scheme::EulerMaruyama).ratios[0] < 1.6);
    assert!(run(Scheme::Milstein).ratios[0] > 1.6);
}

#[test]
fn witness_pushes_income_below_zero() {
    let p = base_market(0.5, 0.15).unwrap();
    let phi = Measure::dirac(1.0, -0.5, -1.0).unwrap();
    let w = positivity_witness(&phi, 0.01, 1.0 / 64.0).unwrap().unwrap();
    assert!(w.integral < -0.5 * w.negative_mass);
    let kernel: KernelProcess<f64> = phi.into();
    let plan = NoisePlan::new(0.01, 1.0, 2, p.corr.clone()).unwrap();
    let hits = par_paths(400, |i| simulate_income(&w.history, &kernel, &p, &plan.generate(i), Scheme::Milstein).unwrap().min() <= 0.0);
    assert!(hits.iter().filter(|&&b| b).count() as f64 / 400.0 > 0.05);
}

#[test]
fn income_csv_has_replay_columns() {
    let p = base_market(0.5, 0.15).unwrap();
    let mut p2 = p.clone();
    p2.corr = Correlation::diagonal(&[0.3]).unwrap();
    let x = HistorySegment::constant(1.0, 0.1, 1.0).unwrap();
    let noise = NoisePlan::new(0.1, 1.0, 0, p2.corr.clone()).unwrap().generate(0);
    let y = simulate_income(&x, &Measure::zero(1.0).into(), &p2, &noise, Scheme::Milstein).unwrap();
    let csv = y.to_csv();
    let mut lines = csv.lines();
    assert_eq!(lines.next().unwrap(), "t,y,dZ1,dZstar1");
    assert_eq!(csv.lines().count(), 12);
}
