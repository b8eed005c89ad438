//! One line per acceptance criterion; exits nonzero if any fails.

use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sticky_wage::labor::{picard_solve, positivity_witness, simulate_income, PicardOptions};
use sticky_wage::mc::try_par_paths;
use sticky_wage::policy::{doleans_study, feedback_controls, simulate_controlled, value_function, ControlledConfig};
use sticky_wage::robust::{sample_adversaries, solve_robust, stress_report, StressConfig};
use sticky_wage::suite::{base_market, fixed_suite, no_delay_suite, suite_kernels, Scenario};
use sticky_wage::valuation::{verify_markov_rep, MarkovRepOptions};
use sticky_wage::{
    Constants, ControlledState, Correlation, Estimate, FeedbackRule, HistorySegment, KernelProcess, Measure, NoisePlan, Result, Scheme,
    UncertaintySet,
};

type Outcome = Result<(bool, String)>;

fn random_nonneg(rng: &mut ChaCha8Rng, scale: f64) -> Measure {
    let mut atoms = Vec::new();
    for i in 0..10 {
        if rng.random_bool(0.3) {
            atoms.push((-1.0 + i as f64 / 10.0, scale * rng.random::<f64>()));
        }
    }
    let density = (0..5).map(|i| (-1.0 + i as f64 / 5.0, if rng.random_bool(0.5) { scale * rng.random::<f64>() } else { 0.0 })).collect();
    Measure::new(1.0, atoms, density).unwrap()
}

fn history(h: f64) -> Result<HistorySegment<f64>> {
    HistorySegment::linear(1.0, h, 0.8, 1.0)
}

fn markov(suite: &[Scenario<f64>], k: f64) -> Outcome {
    let mut worst_z = 0.0f64;
    let mut slowest = 0.0f64;
    let mut ok = true;
    for (i, s) in suite.iter().enumerate() {
        let t = Instant::now();
        let opts = MarkovRepOptions { t_trunc: None, n_paths: 100_000, seed: 100 + i as u64, max_stderr: None, scheme: Scheme::Milstein };
        let chk = verify_markov_rep(&s.x, &s.phi, &s.params, &opts)?;
        let secs = t.elapsed().as_secs_f64();
        let e = chk.estimate;
        let z = (e.mean - chk.closed_form) / e.stderr.max(f64::MIN_POSITIVE);
        let pass = chk.passes(k) && secs < 120.0;
        if !pass {
            eprintln!("  {}: mean {} closed form {} stderr {} tail {:?} in {secs:.1} s", s.name, e.mean, chk.closed_form, e.stderr, e.tail_bound);
        }
        ok &= pass;
        worst_z = worst_z.max(z.abs().min(1e9));
        slowest = slowest.max(secs);
    }
    Ok((ok, format!("{} scenarios, 1e5 paths, h = 1/250, worst |z| {worst_z:.2} vs {k} stderr + tail, slowest {slowest:.1} s", suite.len())))
}

fn doleans(suite: &[Scenario<f64>]) -> Outcome {
    let mut worst_gap = 0.0f64;
    let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
    for (i, s) in suite.iter().enumerate() {
        let plan = NoisePlan::new(0.0005, 2.0, 200 + i as u64, s.params.corr.clone())?;
        let st = doleans_study(s.w, history, &s.phi, &s.params, &plan, 1000, &[2, 1])?;
        worst_gap = worst_gap.max(st.max_gaps[0]);
        lo = lo.min(st.table.ratios[0]);
        hi = hi.max(st.table.ratios[0]);
    }
    let ok = worst_gap <= 0.005 && lo >= 1.6 && hi <= 2.4;
    Ok((ok, format!("max sup-t gap {worst_gap:.2e} at h = 1/1000 (limit 5e-3), halving ratios in [{lo:.3}, {hi:.3}]")))
}

fn verification(gammas: &[f64], suite: impl Fn(f64, f64) -> Result<Vec<Scenario<f64>>>, k: f64) -> Outcome {
    let h = 1.0 / 50.0;
    let mut ok = true;
    let mut worst_z = 0.0f64;
    let mut closest = f64::NEG_INFINITY;
    let mut count = 0;
    for &gamma in gammas {
        for (i, s) in suite(gamma, h)?.iter().enumerate() {
            count += 1;
            let c = Constants::new(&s.params, &s.phi, h)?;
            let optimal = FeedbackRule::optimal(&s.params, &c)?;
            let v = value_function(s.w, &s.x, &c)?;
            let cfg = ControlledConfig::new(80.0, 5000, 300 + i as u64);
            let run = |rule: &FeedbackRule<f64>| simulate_controlled(s.w, &s.x, &s.phi, &s.params, rule, &cfg);
            let base = run(&optimal)?;
            let e = base.utility.estimate;
            let agrees = !base.utility.tail_divergent && e.agrees_with(v, k);
            if !agrees {
                eprintln!("  {} gamma {gamma}: J {} +- {} (tail {:?}) vs V {v}", s.name, e.mean, e.stderr, e.tail_bound);
            }
            ok &= agrees;
            worst_z = worst_z.max((e.mean - v).abs() / e.stderr);
            let perturbed = [
                ("c x 1.25", optimal.clone().scale_consumption(1.25)),
                ("c x 0.8", optimal.clone().scale_consumption(0.8)),
                ("B x 0.5", optimal.clone().scale_bequest(0.5)),
                ("B x 2", optimal.clone().scale_bequest(2.0)),
                ("theta tilt", optimal.clone().tilt_exposure(-0.5, &optimal.exposure_gamma)),
            ];
            for (name, rule) in perturbed {
                let pr = run(&rule)?;
                let diffs: Vec<f64> = pr.summaries.iter().zip(&base.summaries).map(|(a, b)| a.utility - b.utility).collect();
                let d = Estimate::from_samples(&diffs);
                let tails = e.tail_bound.unwrap_or(f64::INFINITY) + pr.utility.estimate.tail_bound.unwrap_or(f64::INFINITY);
                let margin = d.mean + tails;
                if margin >= 0.0 {
                    eprintln!("  {} gamma {gamma} {name}: paired difference {} +- {}, tails {tails}", s.name, d.mean, d.stderr);
                }
                ok &= margin < 0.0;
                closest = closest.max(margin / v.abs());
            }
        }
    }
    Ok((ok, format!("{count} runs, 5e3 paths, T = 80, worst |z| {worst_z:.2} vs {k} stderr + tail; 5 perturbations each, closest relative margin {closest:.2e} (< 0 needed)")))
}

/// Signed kernels with their witness scale and pinned crossing probability
/// (pilot: h = 0.01, horizon 2, seed 4, 1e4 paths).
fn signed_kernels() -> Result<Vec<(Measure, f64, f64)>> {
    Ok(vec![
        (Measure::dirac(1.0, -0.5, -0.5)?, 1.15, 0.4105),
        (Measure::new(1.0, vec![(-1.0, 0.1)], vec![(-1.0, 0.0), (-0.8, -0.6), (-0.4, 0.0)])?, 1.6, 0.6902),
        (Measure::new(1.0, vec![(-0.3, -0.4)], vec![(-1.0, 0.1), (-0.5, 0.0)])?, 1.05, 0.2055),
    ])
}

fn positivity() -> Outcome {
    let n = 10_000;
    let p = base_market(0.5, 0.3)?;
    let plan = NoisePlan::new(0.01, 5.0, 21, p.corr.clone())?;
    let x = history(0.01)?;
    let mut negative = 0;
    let mut lowest = f64::INFINITY;
    for (_, phi) in suite_kernels::<f64>()? {
        let kernel: KernelProcess<f64> = phi.into();
        let mins = try_par_paths(n, |i| Ok(simulate_income(&x, &kernel, &p, &plan.generate(i), Scheme::Milstein)?.min()))?;
        negative += mins.iter().filter(|&&m| m < 0.0).count();
        lowest = lowest.min(mins.iter().copied().fold(f64::INFINITY, f64::min));
    }
    let mut ok = negative == 0;
    let mut fracs = Vec::new();
    let p = base_market(2.0, 0.15)?;
    let plan = NoisePlan::new(0.01, 2.0, 4, p.corr.clone())?;
    for (phi, c, pinned) in signed_kernels()? {
        let w = positivity_witness(&phi, 0.01, c)?.expect("signed kernel");
        let kernel: KernelProcess<f64> = phi.into();
        let hits = try_par_paths(n, |i| Ok(simulate_income(&w.history, &kernel, &p, &plan.generate(i), Scheme::Milstein)?.min() <= 0.0))?;
        let frac = hits.iter().filter(|&&b| b).count() as f64 / n as f64;
        let se = (pinned * (1.0 - pinned) / n as f64).sqrt();
        ok &= frac > 0.0 && (frac - pinned).abs() <= 3.0 * se;
        fracs.push(format!("{frac} (pinned {pinned})"));
    }
    Ok((ok, format!("nonnegative suite: {negative} negative paths of 3e4, min income {lowest:.3}; signed crossing fractions {}", fracs.join(", "))))
}

fn monotonicity() -> Outcome {
    let p = base_market(0.5, 0.15)?;
    let x = HistorySegment::linear(1.0, 0.02, 0.6, 1.0)?;
    let plan = NoisePlan::new(0.02, 4.0, 8, p.corr.clone())?;
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let (mut violations, mut weak) = (0usize, 0usize);
    for _ in 0..10 {
        let phi = random_nonneg(&mut rng, 0.05);
        let inc = random_nonneg(&mut rng, 0.05);
        let strict = !inc.is_zero();
        let psi = phi.checked_add(&inc)?;
        let (kp, ks): (KernelProcess<f64>, KernelProcess<f64>) = (phi.into(), psi.into());
        let counts = try_par_paths(1000, |i| {
            let noise = plan.generate(i);
            let a = simulate_income(&x, &kp, &p, &noise, Scheme::Milstein)?;
            let b = simulate_income(&x, &ks, &p, &noise, Scheme::Milstein)?;
            let bad = a.values.iter().zip(&b.values).filter(|(u, v)| u > v).count();
            let ties = a.values.iter().zip(&b.values).skip(1).filter(|(u, v)| u >= v).count();
            Ok((bad, if strict { ties } else { 0 }))
        })?;
        violations += counts.iter().map(|c| c.0).sum::<usize>();
        weak += counts.iter().map(|c| c.1).sum::<usize>();
    }
    Ok((violations == 0 && weak == 0, format!("10 pairs x 1e3 paths: {violations} order violations, {weak} non-strict nodes where the kernels differ")))
}

fn oracles() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let h = 0.01;
    let mut worst = 0.0f64;
    for s in 0..20 {
        let p = base_market(0.5, rng.random_range(0.0..0.3))?;
        let phi = random_nonneg(&mut rng, 0.2);
        let x = HistorySegment::linear(1.0, h, rng.random_range(0.2..1.0), rng.random_range(0.5..2.0))?;
        let kernel: KernelProcess<f64> = phi.into();
        let noise = NoisePlan::new(h, 3.0, 400 + s, p.corr.clone())?.generate(0);
        let euler = simulate_income(&x, &kernel, &p, &noise, Scheme::Milstein)?;
        let picard = picard_solve(&x, &kernel, &p, &noise, &PicardOptions::default())?;
        let scale = euler.values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let gap = euler.values.iter().zip(&picard.path.values).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        worst = worst.max(gap / (h * scale));
    }
    // y' = 0.1 y(t - 1), y = 1 on [-1, 0]
    let exact = |t: f64| if t <= 1.0 { 1.0 + 0.1 * t } else { 1.1 + 0.1 * (t - 1.0) + 0.005 * (t - 1.0).powi(2) };
    let mut p = base_market(0.5, 0.0)?;
    p.mu_y = 0.0;
    let phi: KernelProcess<f64> = Measure::dirac(1.0, -1.0, 0.1)?.into();
    let err = |h: f64| -> Result<f64> {
        let noise = NoisePlan::new(h, 2.0, 0, p.corr.clone())?.generate(0);
        let y = simulate_income(&HistorySegment::constant(1.0, h, 1.0)?, &phi, &p, &noise, Scheme::Milstein)?;
        Ok(y.values.iter().enumerate().map(|(k, v)| (v - exact(k as f64 * h)).abs()).fold(0.0, f64::max))
    };
    let (e1, e2) = (err(0.01)?, err(0.005)?);
    let ratio = e1 / e2;
    let ok = worst <= 5.0 && (1.6..=2.4).contains(&ratio) && e1 <= 0.01;
    Ok((ok, format!("Picard gap at most {worst:.3} h scale over 20 scenarios (limit 5); method of steps error {:.4} h, ratio {ratio:.3}", e1 / 0.01)))
}

fn robust() -> Outcome {
    let p = base_market(2.0, 0.15)?;
    let x = HistorySegment::linear(1.0, 0.02, 0.8, 1.0)?;
    let atomic = suite_kernels::<f64>()?[0].1.clone();
    let radius = Measure::dirac(1.0, -1.0, 0.01)?.checked_add(&Measure::uniform_on(1.0, -0.8, -0.3, 0.01)?)?;
    let mid = atomic.checked_add(&Measure::dirac(1.0, -0.25, 0.02)?)?;
    let top = mid.checked_add(&Measure::flat(1.0, 0.02)?)?;
    let sets = [("tube", UncertaintySet::tube(atomic.clone(), radius)?), ("family", UncertaintySet::family(vec![top, atomic.clone(), mid])?)];
    let mut ok = true;
    let mut notes = Vec::new();
    for (i, (name, k)) in sets.iter().enumerate() {
        let report = solve_robust(5.0, &x, k, &p)?;
        let direct = value_function(5.0, &x, &Constants::new(&p, k.minimum(), 0.02)?)?;
        let exact = report.robust_value == direct;
        let adv = sample_adversaries(k, 5, 5, 5.0, 20 + i as u64)?;
        let stress = stress_report(5.0, &x, k, &p, &adv, &StressConfig::new(5.0, 1000, 30 + i as u64))?.stress.expect("stress run");
        let worst_gamma = stress.adversaries.iter().map(|a| a.min_total_wealth).fold(f64::INFINITY, f64::min);
        let worst_j = stress.adversaries.iter().map(|a| a.max_utility_difference).fold(0.0, f64::max);
        ok &= exact && adv.len() == 10 && stress.passed();
        notes.push(format!("{name}: value exact {exact}, min Gamma {worst_gamma:.4} vs band -{:.4}, max |dJ| {worst_j:e}", stress.band));
    }
    Ok((ok, notes.join("; ")))
}

fn hedging() -> Outcome {
    let phi = suite_kernels::<f64>()?[2].1.clone();
    let x = history(0.02)?;
    let w = 5.0;
    let mut thetas = Vec::new();
    let mut ok = true;
    let mut notes = Vec::new();
    for i in 0..=20 {
        let rho1 = (i as f64 - 10.0) / 10.0;
        let mut p = base_market(2.0, 0.15)?;
        p.corr = Correlation::diagonal(&[rho1])?;
        let p = p.validated()?;
        let c = Constants::new(&p, &phi, 0.02)?;
        let state = ControlledState::new(0.0, w, &x, &c);
        let theta = feedback_controls(&state, &c, &p)?.theta[0];
        let (sigma, sigma_y, kappa) = (p.sigma[(0, 0)], p.sigma_y[0], c.kappa[0]);
        let merton = state.gamma * kappa / (p.gamma * sigma);
        let correction = -rho1 * c.g_inf * state.y * sigma_y / sigma;
        if rho1 == 0.0 {
            let rule = FeedbackRule::optimal(&p, &c)?;
            let exact = rule.exposure_y.iter().all(|&e| e == 0.0) && (theta - merton).abs() <= 4.0 * f64::EPSILON * merton.abs();
            ok &= exact;
            notes.push(format!("rho1 = 0: theta - Merton = {:e}", theta - merton));
        }
        if rho1.abs() == 1.0 {
            let err = (theta - merton - correction).abs();
            ok &= err <= 1e-12 * theta.abs().max(merton.abs());
            notes.push(format!("rho1 = {rho1}: correction error {err:e}"));
        }
        thetas.push(theta);
    }
    let decreasing = thetas.windows(2).all(|t| t[1] < t[0]);
    ok &= decreasing;
    Ok((ok, format!("21 values, strictly decreasing {decreasing}; {}", notes.join("; "))))
}

fn no_delay() -> Outcome {
    let mut ok = true;
    let mut lines = Vec::new();
    for gamma in [0.5, 2.0] {
        for s in no_delay_suite::<f64>(gamma, 0.02)? {
            let c = Constants::new(&s.params, &s.phi, 0.02)?;
            ok &= c.g_inf == 1.0 / s.params.beta()? && c.h_inf.values().iter().all(|&v| v == 0.0);
            let state = ControlledState::new(0.0, s.w, &s.x, &c);
            let theta = feedback_controls(&state, &c, &s.params)?.theta[0];
            let (sigma, sigma_y, kappa) = (s.params.sigma[(0, 0)], s.params.sigma_y[0], c.kappa[0]);
            let dybvig_liu = (state.gamma * kappa / gamma - c.g_inf * state.y * sigma_y) / sigma;
            ok &= (theta - dybvig_liu).abs() <= 1e-12 * dybvig_liu.abs();
        }
    }
    lines.push(format!("closed forms {}", if ok { "match" } else { "differ" }));
    let (a, la) = markov(&no_delay_suite(2.0, 1.0 / 250.0)?, 2.0)?;
    let (b, lb) = doleans(&[no_delay_suite(0.5, 0.001)?, no_delay_suite(2.0, 0.001)?].concat())?;
    let (c, lc) = verification(&[0.5, 2.0], no_delay_suite, 2.0)?;
    lines.extend([la, lb, lc]);
    Ok((ok && a && b && c, lines.join(" | ")))
}

fn workspace() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn determinism() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| sticky_wage::Error::Domain(e.to_string()))?;
    let scenarios = workspace().join("scenarios");
    let mut outputs = Vec::new();
    for threads in ["1", "4", "16"] {
        let out = dir.path().join(threads);
        let run = |args: &[&str]| {
            Command::new(env!("CARGO_BIN_EXE_sticky-wage")).env("RAYON_NUM_THREADS", threads).args(args).output().expect("binary runs").stdout
        };
        let base = scenarios.join("base.toml");
        let tube = scenarios.join("tube.toml");
        let (base, tube, out_s) = (base.to_str().unwrap(), tube.to_str().unwrap(), out.to_str().unwrap());
        let mut bytes = run(&["simulate", base, "--n-paths", "300", "--out", out_s]);
        bytes.extend(run(&["verify", base, "--which", "markov,gamma,monotonicity", "--n-paths", "300"]));
        bytes.extend(run(&["robust", tube, "--n-paths", "200"]));
        for f in ["paths.csv", "summary.json"] {
            bytes.extend(std::fs::read(out.join(f)).unwrap_or_default());
        }
        outputs.push(bytes);
    }
    let same = outputs.windows(2).all(|w| w[0] == w[1]) && !outputs[0].is_empty();
    Ok((same, format!("simulate, verify and robust outputs ({} bytes) identical across 1, 4, 16 threads: {same}", outputs[0].len())))
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 10] = [
        ("markov identity", || markov(&fixed_suite(2.0, 1.0 / 250.0)?, 3.0)),
        ("doleans equivalence", || doleans(&[fixed_suite(0.5, 0.001)?, fixed_suite(2.0, 0.001)?].concat())),
        ("verification", || verification(&[0.5, 2.0], fixed_suite, 3.0)),
        ("positivity", positivity),
        ("monotonicity", monotonicity),
        ("robust reduction", robust),
        ("oracle agreement", oracles),
        ("correlation hedging", hedging),
        ("no-delay reduction", no_delay),
        ("determinism", determinism),
    ];
    let only: Vec<usize> = std::env::var("ACCEPTANCE_ONLY")
        .map(|v| v.split(',').filter_map(|s| s.trim().parse().ok()).collect())
        .unwrap_or_default();
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        if !only.is_empty() && !only.contains(&(i + 1)) {
            continue;
        }
        let t = Instant::now();
        let (pass, detail) = f().unwrap_or_else(|e| (false, format!("error: {e}")));
        failed += usize::from(!pass);
        println!("criterion {:>2} {} {name} ({:.0} s): {detail}", i + 1, if pass { "PASS" } else { "FAIL" }, t.elapsed().as_secs_f64());
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
