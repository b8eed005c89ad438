use std::fmt::Write as _;
use std::path::Path;

use serde_json::{json, Value};
use sticky_wage::labor::{picard_solve, positivity_witness, simulate_income, PicardOptions, Scheme};
use sticky_wage::mc::{try_par_paths, Estimate};
use sticky_wage::policy::{feedback_controls, simulate_controlled, value_function, ControlledConfig};
use sticky_wage::robust::{check_robust_assumption, sample_adversaries, solve_robust, stress_report, StressConfig};
use sticky_wage::valuation::{beta_infinity, verify_markov_rep, MarkovRepOptions};
use sticky_wage::{Assumption, Constants, ControlledState, Error, FeedbackRule, Market, Measure, NoisePlan};

use crate::scenario::{CorrelationSpec, Scenario, SetSpec};
use crate::svg::fan_chart;

pub const VERSION: &str = env!("STICKY_WAGE_VERSION");

#[derive(Debug)]
pub enum Failure {
    Assumption(String),
    Verification(String),
    Input(String),
}

impl Failure {
    pub fn code(&self) -> i32 {
        match self {
            Failure::Assumption(_) => 2,
            Failure::Verification(_) => 3,
            Failure::Input(_) => 4,
        }
    }
}

impl std::fmt::Display for Failure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Failure::Assumption(m) | Failure::Verification(m) | Failure::Input(m) => f.write_str(m),
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let msg = e.to_string();
        match e {
            Error::Assumption { .. } | Error::EmptyRobustSet { .. } | Error::Inadmissible { .. } => Failure::Assumption(msg),
            Error::Domain(_) | Error::Measure(_) | Error::Singular(_) | Error::AdversaryOutsideSet { .. } => Failure::Input(msg),
            _ => Failure::Verification(msg),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Input(e.to_string())
    }
}

/// What a command prints, and whether its checks passed.
pub struct Outcome {
    pub json: String,
    pub pass: bool,
    pub summary: String,
}

pub fn envelope(command: &str, scenario: &Scenario, result: Value) -> String {
    let doc = json!({ "version": VERSION, "command": command, "config": scenario, "result": result });
    let mut s = serde_json::to_string_pretty(&doc).expect("serializable");
    s.push('\n');
    s
}

fn csv_preamble(scenario: &Scenario) -> String {
    format!("# sticky-wage {VERSION}\n# config: {}\n", serde_json::to_string(scenario).expect("serializable"))
}

fn verdict(check: &str, pass: bool, statistic: f64, tolerance: f64, details: Value) -> Value {
    json!({ "check": check, "pass": pass, "statistic": statistic, "tolerance": tolerance, "details": details })
}

fn estimate_json(e: &Estimate<f64>) -> Value {
    json!({ "mean": e.mean, "stderr": e.stderr, "n_paths": e.n_paths, "tail_bound": e.tail_bound })
}

fn measure_json(m: &Measure) -> Value {
    let atoms: Vec<[f64; 2]> = m.atoms().iter().map(|&(s, w)| [s, w]).collect();
    let density: Vec<[f64; 2]> = m.density_pieces().map(|(a, _, v)| [a, v]).collect();
    json!({ "horizon": m.horizon(), "atoms": atoms, "density": density })
}

fn scheme(s: &Scenario) -> Scheme {
    s.numerics.scheme.into()
}

fn assumption_entry<E: std::fmt::Display>(name: Assumption, result: Result<(), E>) -> Value {
    match result {
        Ok(()) => json!({ "assumption": name.to_string(), "holds": true }),
        Err(e) => json!({ "assumption": name.to_string(), "holds": false, "detail": e.to_string() }),
    }
}

pub fn params_check(s: &Scenario) -> Result<Outcome, Failure> {
    let p = s.market()?;
    let phi = s.phi()?;
    let kappa = p.kappa()?;
    let beta = p.beta()?;
    let beta_inf = beta_infinity(&phi, p.r, p.delta);
    let mut checks = Vec::new();
    let mut result = json!({ "kappa": kappa, "beta": beta, "beta_inf": beta_inf });
    let hc = Constants::new(&p, &phi, s.numerics.h);
    let merton = p.merton_nu();
    for e in [hc.as_ref().err(), merton.as_ref().err()].into_iter().flatten() {
        if e.assumption_kind().is_none() {
            return Err(Failure::Input(e.to_string()));
        }
    }
    if let Ok(c) = &hc {
        result["g_inf"] = json!(c.g_inf);
        result["min_h_inf"] = json!(c.min_h_inf());
        result["human_capital"] = json!(c.human_capital(&s.history()?));
    }
    if let Ok(nu) = &merton {
        result["nu"] = json!(*nu);
        result["f_inf"] = json!(p.f_inf()?);
    }
    checks.push(assumption_entry(Assumption::HumanCapitalWellPosed, hc.as_ref().map(|_| ())));
    checks.push(assumption_entry(Assumption::MertonWellPosed, merton.as_ref().map(|_| ())));
    if s.uncertainty.is_some() {
        let robust = s.uncertainty_set().and_then(|k| {
            let k = k.expect("uncertainty block present");
            result["order_minimum"] = measure_json(k.minimum());
            check_robust_assumption(&p, k.minimum(), s.numerics.h).map(|c| {
                result["robust_g_inf"] = json!(c.g_inf);
                result["robust_min_h_inf"] = json!(c.min_h_inf());
            })
        });
        match robust {
            Err(e) if e.assumption_kind().is_none() => return Err(e.into()),
            r => checks.push(assumption_entry(Assumption::RobustKernelNonnegative, r)),
        }
    }
    let pass = checks.iter().all(|c| c["holds"] == json!(true));
    let failed: Vec<String> = checks.iter().filter(|c| c["holds"] != json!(true)).map(|c| c["assumption"].as_str().unwrap_or_default().to_string()).collect();
    result["assumptions"] = Value::Array(checks);
    Ok(Outcome { json: envelope("params-check", s, result), pass, summary: format!("assumption violated: {}", failed.join("; ")) })
}

pub fn simulate(s: &Scenario, out: &Path, svg: bool) -> Result<Outcome, Failure> {
    let p = s.market()?;
    let phi = s.constant_phi()?;
    let x = s.history()?;
    let n = &s.numerics;
    let c = Constants::new(&p, &phi, n.h)?;
    let rule = FeedbackRule::optimal(&p, &c)?;
    let cfg = ControlledConfig {
        horizon: n.horizon,
        n_paths: n.n_paths,
        seed: n.seed,
        scheme: scheme(s),
        record_paths: n.record_paths.min(n.n_paths),
        band_factor: n.band_factor,
    };
    let run = simulate_controlled(s.initial.w, &x, &phi, &p, &rule, &cfg)?;
    let v = value_function(s.initial.w, &x, &c)?;

    std::fs::create_dir_all(out)?;
    let mut csv = csv_preamble(s);
    csv.push_str("path,t,W,y,Gamma,c,B");
    for i in 1..=p.n() {
        let _ = write!(csv, ",theta{i}");
    }
    csv.push('\n');
    for (i, rec) in run.records.iter().enumerate() {
        for k in 0..rec.w.len() {
            let _ = write!(csv, "{i},{},{},{},{},{},{}", rec.time(k), rec.w[k], rec.y[k], rec.gamma[k], rec.c[k], rec.b[k]);
            for th in rec.theta_at(k) {
                let _ = write!(csv, ",{th}");
            }
            csv.push('\n');
        }
    }
    std::fs::write(out.join("paths.csv"), csv)?;
    if svg && !run.records.is_empty() {
        let times: Vec<f64> = (0..run.records[0].w.len()).map(|k| run.records[0].time(k)).collect();
        let gammas: Vec<Vec<f64>> = run.records.iter().map(|r| r.gamma.clone()).collect();
        let cons: Vec<Vec<f64>> = run.records.iter().map(|r| r.c.clone()).collect();
        std::fs::write(out.join("gamma.svg"), fan_chart("total wealth", &times, &gammas))?;
        std::fs::write(out.join("consumption.svg"), fan_chart("consumption", &times, &cons))?;
    }
    let result = json!({
        "mc_value": estimate_json(&run.utility.estimate),
        "tail_divergent": run.utility.tail_divergent,
        "closed_form_value": v,
        "gamma0": run.gamma0,
        "max_doleans_gap": run.max_doleans_gap,
        "max_deficit": run.max_deficit,
        "band": run.band,
        "recorded_paths": run.records.len(),
    });
    let json = envelope("simulate", s, result);
    std::fs::write(out.join("summary.json"), &json)?;
    Ok(Outcome { json, pass: true, summary: String::new() })
}

pub const CHECKS: [&str; 6] = ["markov", "gamma", "value", "positivity", "monotonicity", "picard"];

pub fn verify(s: &Scenario, which: &[String]) -> Result<Outcome, Failure> {
    let mut verdicts = Vec::new();
    for w in which {
        verdicts.push(match w.as_str() {
            "markov" => verify_markov(s)?,
            "gamma" => verify_gamma(s)?,
            "value" => verify_value(s)?,
            "positivity" => verify_positivity(s)?,
            "monotonicity" => verify_monotonicity(s)?,
            "picard" => verify_picard(s)?,
            other => return Err(Failure::Input(format!("unknown check {other}; expected one of {}", CHECKS.join(", ")))),
        });
    }
    let failed: Vec<String> = verdicts.iter().filter(|v| v["pass"] != json!(true)).map(|v| v["check"].as_str().unwrap_or_default().to_string()).collect();
    let summary = format!("failed checks: {}", failed.join(", "));
    Ok(Outcome { json: envelope("verify", s, Value::Array(verdicts)), pass: failed.is_empty(), summary })
}

fn verify_markov(s: &Scenario) -> Result<Value, Failure> {
    let p = s.market()?;
    let n = &s.numerics;
    let opts = MarkovRepOptions { t_trunc: n.t_trunc, n_paths: n.n_paths, seed: n.seed, max_stderr: None, scheme: scheme(s) };
    let chk = verify_markov_rep(&s.history()?, &s.constant_phi()?, &p, &opts)?;
    let stat = (chk.estimate.mean - chk.closed_form).abs();
    Ok(verdict(
        "markov",
        chk.passes(n.k_stderr),
        stat,
        chk.estimate.tolerance(n.k_stderr),
        json!({ "estimate": estimate_json(&chk.estimate), "closed_form": chk.closed_form, "t_trunc": chk.t_trunc, "decay_rate": chk.decay_rate }),
    ))
}

fn controlled(s: &Scenario, p: &Market, rule: Option<FeedbackRule<f64>>) -> Result<(sticky_wage::policy::ControlledRun<f64>, f64), Failure> {
    let phi = s.constant_phi()?;
    let x = s.history()?;
    let n = &s.numerics;
    let c = Constants::new(p, &phi, n.h)?;
    let rule = match rule {
        Some(r) => r,
        None => FeedbackRule::optimal(p, &c)?,
    };
    let cfg = ControlledConfig { horizon: n.horizon, n_paths: n.n_paths, seed: n.seed, scheme: scheme(s), record_paths: 0, band_factor: n.band_factor };
    let run = simulate_controlled(s.initial.w, &x, &phi, p, &rule, &cfg)?;
    Ok((run, value_function(s.initial.w, &x, &c)?))
}

fn verify_gamma(s: &Scenario) -> Result<Value, Failure> {
    let p = s.market()?;
    let (run, _) = controlled(s, &p, None)?;
    let tol = s.numerics.doleans_tol;
    Ok(verdict(
        "gamma",
        run.max_doleans_gap <= tol,
        run.max_doleans_gap,
        tol,
        json!({ "gamma0": run.gamma0, "max_deficit": run.max_deficit, "band": run.band }),
    ))
}

fn verify_value(s: &Scenario) -> Result<Value, Failure> {
    let p = s.market()?;
    let (run, v) = controlled(s, &p, None)?;
    let e = run.utility.estimate;
    let k = s.numerics.k_stderr;
    Ok(verdict(
        "value",
        !run.utility.tail_divergent && e.agrees_with(v, k),
        (e.mean - v).abs(),
        e.tolerance(k),
        json!({ "estimate": estimate_json(&e), "closed_form": v, "tail_divergent": run.utility.tail_divergent }),
    ))
}

fn verify_positivity(s: &Scenario) -> Result<Value, Failure> {
    let p = s.market()?;
    let n = &s.numerics;
    let phi = s.phi()?;
    let kernel = s.process()?;
    let plan = NoisePlan::new(n.h, n.horizon, n.seed, p.corr.clone())?;
    match positivity_witness(&phi, n.h, n.witness_scale)? {
        None => {
            let x = s.history()?;
            if !x.is_strictly_positive() {
                return Err(Failure::Input("positivity check needs a strictly positive initial history".into()));
            }
            let mins = try_par_paths(n.n_paths, |i| Ok(simulate_income(&x, &kernel, &p, &plan.generate(i), scheme(s))?.min()))?;
            let negative = mins.iter().filter(|&&m| m < 0.0).count();
            let lowest = mins.iter().copied().fold(f64::INFINITY, f64::min);
            Ok(verdict("positivity", negative == 0, negative as f64, 0.0, json!({ "kernel_sign": "nonnegative", "min_income": lowest })))
        }
        Some(w) => {
            let hits = try_par_paths(n.n_paths, |i| Ok(simulate_income(&w.history, &kernel, &p, &plan.generate(i), scheme(s))?.min() <= 0.0))?;
            let k = hits.iter().filter(|&&b| b).count();
            let frac = k as f64 / n.n_paths.max(1) as f64;
            let se = (frac * (1.0 - frac) / n.n_paths.max(1) as f64).sqrt();
            Ok(verdict(
                "positivity",
                k > 0,
                frac,
                0.0,
                json!({
                    "kernel_sign": "signed",
                    "crossing_stderr": se,
                    "witness_x0": w.x0,
                    "witness_integral": w.integral,
                    "negative_mass": w.negative_mass,
                    "ramp_width": w.epsilon,
                }),
            ))
        }
    }
}

fn monotone_pair(s: &Scenario) -> Result<(Measure, Measure), Failure> {
    Ok(match s.uncertainty_set()? {
        Some(k) => (k.minimum().clone(), k.envelope().clone()),
        None => {
            let phi = s.phi()?;
            let hj = phi.hahn_jordan();
            let abs = hj.positive.checked_add(&hj.negative).map_err(Error::from)?;
            (phi.clone(), phi.checked_add(&abs.scale(0.5)).map_err(Error::from)?)
        }
    })
}

fn verify_monotonicity(s: &Scenario) -> Result<Value, Failure> {
    let p = s.market()?;
    let n = &s.numerics;
    let x = s.history()?;
    let (lo, hi) = monotone_pair(s)?;
    let strict = lo != hi;
    let plan = NoisePlan::new(n.h, n.horizon, n.seed, p.corr.clone())?;
    let (kl, kh) = (lo.clone().into(), hi.clone().into());
    let counts = try_par_paths(n.n_paths, |i| {
        let noise = plan.generate(i);
        let a = simulate_income(&x, &kl, &p, &noise, scheme(s))?;
        let b = simulate_income(&x, &kh, &p, &noise, scheme(s))?;
        let mut bad = 0usize;
        let mut strict_nodes = 0usize;
        let mut min_gap = f64::INFINITY;
        for (k, (u, v)) in a.values.iter().zip(&b.values).enumerate() {
            bad += usize::from(u > v);
            if k > 0 {
                strict_nodes += usize::from(u < v);
                min_gap = min_gap.min(v - u);
            }
        }
        Ok((bad, strict_nodes, a.values.len() - 1, min_gap))
    })?;
    let violations: usize = counts.iter().map(|c| c.0).sum();
    let strict_nodes: usize = counts.iter().map(|c| c.1).sum();
    let nodes: usize = counts.iter().map(|c| c.2).sum();
    let min_gap = counts.iter().map(|c| c.3).fold(f64::INFINITY, f64::min);
    Ok(verdict(
        "monotonicity",
        violations == 0,
        violations as f64,
        0.0,
        json!({
            "lower": measure_json(&lo),
            "upper": measure_json(&hi),
            "strictly_ordered": strict,
            "strict_share": strict_nodes as f64 / nodes.max(1) as f64,
            "min_gap": min_gap,
        }),
    ))
}

fn verify_picard(s: &Scenario) -> Result<Value, Failure> {
    let p = s.market()?;
    let n = &s.numerics;
    let x = s.history()?;
    let kernel = s.process()?;
    let plan = NoisePlan::new(n.h, n.horizon, n.seed, p.corr.clone())?;
    let opts = PicardOptions { scheme: scheme(s), ..PicardOptions::default() };
    let paths = n.n_paths.min(20);
    let rel = try_par_paths(paths, |i| {
        let noise = plan.generate(i);
        let euler = simulate_income(&x, &kernel, &p, &noise, scheme(s))?;
        let pic = picard_solve(&x, &kernel, &p, &noise, &opts)?;
        let scale = euler.values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let gap = euler.values.iter().zip(&pic.path.values).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        Ok((gap / scale, pic.iterations, pic.contraction_ratio))
    })?;
    let worst = rel.iter().map(|r| r.0).fold(0.0, f64::max);
    let tol = 5.0 * n.h;
    Ok(verdict(
        "picard",
        worst <= tol,
        worst,
        tol,
        json!({
            "paths": paths,
            "max_iterations": rel.iter().map(|r| r.1).max(),
            "max_contraction_ratio": rel.iter().map(|r| r.2).fold(0.0, f64::max),
        }),
    ))
}

pub fn robust(s: &Scenario) -> Result<Outcome, Failure> {
    let p = s.market()?;
    let x = s.history()?;
    let n = &s.numerics;
    let spec = s.uncertainty.as_ref().ok_or_else(|| Failure::Input("robust needs an [uncertainty] block".into()))?;
    let k = s.uncertainty_set()?.expect("uncertainty block present");
    let adversaries = sample_adversaries(&k, spec.deterministic_adversaries, spec.state_adversaries, n.horizon, n.seed)?;
    let cfg = StressConfig { horizon: n.horizon, n_paths: n.n_paths, seed: n.seed, scheme: scheme(s), band_factor: n.band_factor };
    let report = stress_report(s.initial.w, &x, &k, &p, &adversaries, &cfg)?;
    let stress = report.stress.as_ref().expect("stress summary present");
    let adv: Vec<Value> = stress
        .adversaries
        .iter()
        .map(|a| {
            json!({
                "name": a.name,
                "passed": a.passed(),
                "min_total_wealth": a.min_total_wealth,
                "min_wealth_gap": a.min_wealth_gap,
                "min_income_gap": a.min_income_gap,
                "strict_income_share": a.strict_income_share,
                "max_utility_difference": a.max_utility_difference,
            })
        })
        .collect();
    let failed: Vec<String> = stress.adversaries.iter().filter(|a| !a.passed()).map(|a| a.name.clone()).collect();
    let nu_ok = stress.nu_max_deficit <= stress.band;
    let result = json!({
        "minimum": measure_json(&report.minimum),
        "robust_value": report.robust_value,
        "total_wealth": report.total_wealth,
        "g_inf": report.g_inf,
        "beta_inf": report.beta_inf,
        "saddle": { "c": report.saddle.c, "b": report.saddle.b, "theta": report.saddle.theta },
        "stress": {
            "passed": stress.passed(),
            "horizon": stress.horizon,
            "n_paths": stress.n_paths,
            "seed": stress.seed,
            "band": stress.band,
            "nu_max_deficit": stress.nu_max_deficit,
            "nu_utility": estimate_json(&stress.nu_utility),
            "adversaries": adv,
        },
    });
    let mut summary = format!("saddle stress failed for: {}", failed.join(", "));
    if !nu_ok {
        summary.push_str("; saddle run left the admissibility band");
    }
    Ok(Outcome { json: envelope("robust", s, result), pass: stress.passed(), summary })
}

pub const SWEEPS: [&str; 3] = ["rho1", "gamma", "radius"];

pub fn sweep(s: &Scenario, parameter: &str, from: f64, to: f64, steps: usize) -> Result<String, Failure> {
    let grid: Vec<f64> = if steps <= 1 {
        vec![from]
    } else {
        (0..steps).map(|i| from + (to - from) * i as f64 / (steps - 1) as f64).collect()
    };
    let x = s.history()?;
    let w = s.initial.w;
    let mut csv = csv_preamble(s);
    match parameter {
        "rho1" => {
            let dim = s.market.mu.len();
            let _ = writeln!(
                csv,
                "rho1,{},{},{}",
                cols("theta", dim),
                cols("merton", dim),
                cols("hedge", dim)
            );
            let phi = s.constant_phi()?;
            for &r in &grid {
                let mut sc = s.clone();
                sc.market.correlation = CorrelationSpec::Diagonal { rho: vec![r; dim] };
                let p = sc.market()?;
                let c = Constants::new(&p, &phi, s.numerics.h)?;
                let state = ControlledState::new(0.0, w, &x, &c);
                let theta = feedback_controls(&state, &c, &p)?.theta;
                let merton = FeedbackRule::optimal(&p, &c)?.controls(state.gamma, 0.0).theta;
                let hedge: Vec<f64> = theta.iter().zip(&merton).map(|(a, b)| a - b).collect();
                let _ = writeln!(csv, "{r},{},{},{}", join(&theta), join(&merton), join(&hedge));
            }
        }
        "gamma" => {
            let _ = writeln!(csv, "gamma,f_inf,value");
            let phi = s.constant_phi()?;
            for &g in &grid {
                let mut sc = s.clone();
                sc.market.gamma = g;
                let p = sc.market()?;
                let c = Constants::new(&p, &phi, s.numerics.h)?;
                let _ = writeln!(csv, "{g},{},{}", c.f_inf, value_function(w, &x, &c)?);
            }
        }
        "radius" => {
            let Some(SetSpec::Tube { radius }) = s.uncertainty.as_ref().map(|u| &u.set) else {
                return Err(Failure::Input("radius sweep needs a tube uncertainty block".into()));
            };
            let _ = writeln!(csv, "scale,robust_value,g_inf,beta_inf");
            let p = s.market()?;
            let center = s.constant_phi()?;
            let psi = s.measure(radius)?;
            for &f in &grid {
                let k = sticky_wage::UncertaintySet::tube(center.clone(), psi.scale(f))?;
                let rep = solve_robust(w, &x, &k, &p)?;
                let _ = writeln!(csv, "{f},{},{},{}", rep.robust_value, rep.g_inf, rep.beta_inf);
            }
        }
        other => return Err(Failure::Input(format!("unknown sweep parameter {other}; expected one of {}", SWEEPS.join(", ")))),
    }
    Ok(csv)
}

fn cols(prefix: &str, n: usize) -> String {
    (1..=n).map(|i| format!("{prefix}{i}")).collect::<Vec<_>>().join(",")
}

fn join(v: &[f64]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",")
}
