//! Uncertainty sets with an order minimum, the reduction of the maxmin
//! problem to the minimum, and a stress test of the saddle strategy against
//! sampled adversarial kernel processes.

use std::sync::Arc;

use rand::Rng;

use crate::error::{Assumption, Error, Result};
use crate::labor::{simulate_compiled, HistorySegment, IncomeLoadings, Scheme};
use crate::market::MarketParams;
use crate::mc::{purpose, stream_rng, try_par_paths, Estimate, NoisePlan};
use crate::measure::{CompiledKernel, KernelProcess, PathContext, PathFunctional, RadonMeasure};
use crate::policy::{discounted_utility, feedback_controls, value_function, wealth_scale, ControlTriplet, ControlledState, Engine, FeedbackRule};
use crate::scalar::Real;
use crate::valuation::{PolicyConstants, WealthRegion};

#[derive(Clone, Debug, PartialEq)]
pub enum UncertaintyKind<T> {
    /// `{φ : φ₀ − ψ ≤ φ ≤ φ₀ + ψ}` with `ψ ≥ 0`.
    Tube { center: RadonMeasure<T>, radius: RadonMeasure<T> },
    Family(Vec<RadonMeasure<T>>),
}

#[derive(Clone, Debug, PartialEq)]
pub struct UncertaintySet<T> {
    kind: UncertaintyKind<T>,
    minimum: RadonMeasure<T>,
    envelope: RadonMeasure<T>,
}

impl<T: Real> UncertaintySet<T> {
    pub fn tube(center: RadonMeasure<T>, radius: RadonMeasure<T>) -> Result<Self> {
        if !radius.is_nonnegative() {
            return Err(Error::Domain("tube radius must be a nonnegative measure".into()));
        }
        let minimum = center.checked_sub(&radius)?;
        let envelope = center.checked_add(&radius)?;
        Ok(Self { kind: UncertaintyKind::Tube { center, radius }, minimum, envelope })
    }

    /// A finite family; its lattice minimum must be one of the members.
    pub fn family(members: Vec<RadonMeasure<T>>) -> Result<Self> {
        let first = members.first().ok_or_else(|| Error::Domain("empty uncertainty family".into()))?.clone();
        let mut minimum = first.clone();
        let mut envelope = first;
        for m in &members[1..] {
            minimum = minimum.meet(m)?;
            envelope = envelope.join(m)?;
        }
        if !members.contains(&minimum) {
            return Err(Error::assumption(
                Assumption::OrderMinimum,
                format!("the lattice minimum of the {} members is not itself a member", members.len()),
            ));
        }
        Ok(Self { kind: UncertaintyKind::Family(members), minimum, envelope })
    }

    pub fn singleton(phi: RadonMeasure<T>) -> Self {
        Self { kind: UncertaintyKind::Family(vec![phi.clone()]), minimum: phi.clone(), envelope: phi }
    }

    pub fn kind(&self) -> &UncertaintyKind<T> {
        &self.kind
    }

    pub fn minimum(&self) -> &RadonMeasure<T> {
        &self.minimum
    }

    /// Lattice maximum; a member for tubes, possibly not for families.
    pub fn envelope(&self) -> &RadonMeasure<T> {
        &self.envelope
    }

    pub fn horizon(&self) -> T {
        *self.minimum.horizon()
    }

    /// Membership up to `tol` in total variation.
    pub fn contains(&self, m: &RadonMeasure<T>, tol: T) -> Result<bool> {
        Ok(match &self.kind {
            UncertaintyKind::Tube { .. } => {
                let below = m.checked_sub(&self.minimum)?.negative_part().total_variation();
                let above = self.envelope.checked_sub(m)?.negative_part().total_variation();
                below <= tol && above <= tol
            }
            UncertaintyKind::Family(members) => {
                let mut hit = false;
                for f in members {
                    hit |= m.checked_sub(f)?.total_variation() <= tol;
                }
                hit
            }
        })
    }
}

pub fn order_minimum<T: Real>(k: &UncertaintySet<T>) -> RadonMeasure<T> {
    k.minimum().clone()
}

/// Policy constants at `ν`, requiring `β > β∞^ν` and `h∞^ν ≥ 0` on the grid.
pub fn check_robust_assumption<T: Real>(params: &MarketParams<T>, nu: &RadonMeasure<T>, h: T) -> Result<PolicyConstants<T>> {
    let constants = PolicyConstants::new(params, nu, h).map_err(|e| match e.assumption_kind() {
        Some(Assumption::HumanCapitalWellPosed) => Error::assumption(Assumption::RobustKernelNonnegative, e.to_string()),
        _ => e,
    })?;
    let tol = T::lit(1e-12) * constants.g_inf.abs();
    let values = constants.h_inf.values();
    if let Some((i, v)) = values.iter().enumerate().find(|(_, v)| **v < -tol) {
        let s = -constants.h_inf.horizon() + h * T::from_usize_lossy(i);
        return Err(Error::assumption(Assumption::RobustKernelNonnegative, format!("h_inf({s}) = {v} < 0 at the order minimum")));
    }
    Ok(constants)
}

#[derive(Clone, Debug)]
pub struct AdversaryOutcome<T> {
    pub name: String,
    /// Lower bound of the adversary's total wealth, minimized over paths and nodes.
    pub min_total_wealth: T,
    /// `min (Γ^φ − Γ^ν)`.
    pub min_wealth_gap: T,
    /// `min (y^φ − y^ν)`.
    pub min_income_gap: T,
    /// Share of nodes `t > 0` where `y^φ > y^ν`.
    pub strict_income_share: T,
    /// `max |J(π*; φ) − J(π*; ν)|` over paths.
    pub max_utility_difference: T,
    pub band: T,
}

impl<T: Real> AdversaryOutcome<T> {
    pub fn admissible(&self) -> bool {
        self.min_total_wealth >= -self.band
    }

    pub fn dominates(&self) -> bool {
        self.min_wealth_gap >= -self.band
    }

    pub fn income_monotone(&self) -> bool {
        self.min_income_gap >= T::zero()
    }

    pub fn passed(&self) -> bool {
        self.admissible() && self.dominates() && self.income_monotone() && self.max_utility_difference == T::zero()
    }
}

#[derive(Clone, Debug)]
pub struct StressSummary<T> {
    pub horizon: T,
    pub n_paths: usize,
    pub seed: u64,
    pub band: T,
    /// Largest `−Γ^ν` seen in the saddle run itself.
    pub nu_max_deficit: T,
    /// Truncated utility of the saddle strategy at `ν`, with tail bound.
    pub nu_utility: Estimate<T>,
    pub adversaries: Vec<AdversaryOutcome<T>>,
}

impl<T: Real> StressSummary<T> {
    pub fn passed(&self) -> bool {
        self.nu_max_deficit <= self.band && self.adversaries.iter().all(|a| a.passed())
    }
}

#[derive(Clone, Debug)]
pub struct GameReport<T> {
    pub minimum: RadonMeasure<T>,
    pub robust_value: T,
    pub total_wealth: T,
    pub g_inf: T,
    pub beta_inf: T,
    pub saddle: ControlTriplet<T>,
    pub stress: Option<StressSummary<T>>,
}

/// Value and saddle controls of the robust problem, computed at the order minimum.
pub fn solve_robust<T: Real>(w: T, x: &HistorySegment<T>, k: &UncertaintySet<T>, params: &MarketParams<T>) -> Result<GameReport<T>> {
    if !x.is_strictly_positive() {
        return Err(Error::Domain("robust reduction needs a strictly positive income history".into()));
    }
    let nu = order_minimum(k);
    let constants = check_robust_assumption(params, &nu, x.step())?;
    let (total, region) = constants.classify(w, x);
    if region == WealthRegion::Exterior {
        return Err(Error::EmptyRobustSet { total_wealth: total.to_f64_lossy() });
    }
    let robust_value = value_function(w, x, &constants)?;
    let direct = value_function(w, x, &PolicyConstants::new(params, &nu, x.step())?)?;
    if robust_value != direct && !(robust_value.is_infinite() && direct.is_infinite()) {
        return Err(Error::Invariant(format!("robust value {robust_value} differs from the value at the minimum {direct}")));
    }
    let state = ControlledState { t: T::zero(), w, y: x.x0(), gamma: total.max(T::zero()) };
    let saddle = feedback_controls(&state, &constants, params)?;
    Ok(GameReport { minimum: nu, robust_value, total_wealth: total, g_inf: constants.g_inf, beta_inf: constants.beta_inf, saddle, stress: None })
}

/// Named kernel process played by Nature.
#[derive(Clone, Debug)]
pub struct Adversary<T> {
    pub name: String,
    pub process: KernelProcess<T>,
}

/// How an adversary moves inside the uncertainty set.
#[derive(Clone)]
pub enum Modulation<T> {
    /// Tube: `ν + λ(t)(φ₀ + ψ − ν)`.
    Deterministic(Arc<dyn Fn(T) -> T + Send + Sync>),
    /// Tube: `ν + λ(t, Z)(φ₀ + ψ − ν)`.
    State(PathFunctional<T>),
    /// Family: member `index` where the functional is at least 1/2, `ν` elsewhere.
    Member { index: usize, functional: PathFunctional<T> },
    /// Family: cycles through the members, `period` time units each.
    Switching { period: T },
}

/// Builds an adversary from a template and checks samplewise that it stays
/// in `K` on a grid of times in `[0, horizon]` and Brownian levels.
pub fn adversary_sampler<T: Real>(k: &UncertaintySet<T>, name: &str, template: Modulation<T>, horizon: T) -> Result<Adversary<T>> {
    let nu = k.minimum().clone();
    let d = k.horizon();
    let process = match (k.kind(), template) {
        (UncertaintyKind::Tube { .. }, Modulation::Deterministic(f)) => tube_process(k, PathFunctional::Time(f)),
        (UncertaintyKind::Tube { .. }, Modulation::State(f)) => tube_process(k, f),
        (UncertaintyKind::Family(members), Modulation::Member { index, functional }) => {
            let member = members.get(index).ok_or_else(|| Error::Domain(format!("family has no member {index}")))?;
            let span = member.checked_sub(&nu)?;
            let tv_bound = nu.total_variation().max(member.total_variation());
            let switch = PathFunctional::Custom(Arc::new(move |ctx: &PathContext<'_, T>| {
                if functional.eval(ctx) >= T::lit(0.5) {
                    T::one()
                } else {
                    T::zero()
                }
            }));
            KernelProcess::StateModulated { floor: nu, span, functional: switch, tv_bound }
        }
        (UncertaintyKind::Family(members), Modulation::Switching { period }) => {
            if !(period > T::zero()) {
                return Err(Error::Domain("switching period must be positive".into()));
            }
            let members = members.clone();
            let tv_bound = members.iter().map(|m| m.total_variation()).fold(T::zero(), T::max);
            KernelProcess::time_varying(d, tv_bound, move |t| {
                let i = (t / period).floor().to_usize().unwrap_or(0) % members.len();
                members[i].clone()
            })
        }
        (UncertaintyKind::Tube { .. }, _) => return Err(Error::Domain("tube adversaries use Deterministic or State modulation".into())),
        (UncertaintyKind::Family(_), _) => return Err(Error::Domain("family adversaries use Member or Switching modulation".into())),
    };
    check_range(k, &process, horizon)?;
    Ok(Adversary { name: name.to_string(), process })
}

fn tube_process<T: Real>(k: &UncertaintySet<T>, functional: PathFunctional<T>) -> KernelProcess<T> {
    let nu = k.minimum().clone();
    let top = k.envelope();
    let span = top.checked_sub(&nu).expect("tube bounds share the window");
    let tv_bound = nu.total_variation().max(top.total_variation());
    KernelProcess::StateModulated { floor: nu, span, functional, tv_bound }
}

const RANGE_TIMES: usize = 40;
const RANGE_LEVELS: [f64; 9] = [-4.0, -2.0, -1.0, -0.5, 0.0, 0.5, 1.0, 2.0, 4.0];

fn check_range<T: Real>(k: &UncertaintySet<T>, process: &KernelProcess<T>, horizon: T) -> Result<()> {
    let tol = T::lit(1e-12) * (T::one() + k.envelope().total_variation() + k.minimum().total_variation());
    for i in 0..=RANGE_TIMES {
        let t = horizon * T::from_usize_lossy(i) / T::from_usize_lossy(RANGE_TIMES);
        for &z in &RANGE_LEVELS {
            let zs = [T::lit(z)];
            let ctx = PathContext::at(t, &zs);
            if let KernelProcess::StateModulated { functional, .. } = process {
                let lambda = functional.eval(&ctx);
                if !(lambda >= T::zero() && lambda <= T::one()) {
                    return Err(Error::AdversaryOutsideSet { t: t.to_f64_lossy(), detail: format!("modulation {lambda} outside [0, 1] at Z = {z}") });
                }
            }
            let m = process.sample(&ctx)?;
            if !k.contains(&m, tol)? {
                return Err(Error::AdversaryOutsideSet { t: t.to_f64_lossy(), detail: format!("at Z = {z} the kernel is {m:?}") });
            }
        }
    }
    Ok(())
}

/// `n_det` deterministic and `n_state` state-modulated adversaries, always
/// including both extremes; free shape parameters are drawn from `seed`.
pub fn sample_adversaries<T: Real>(k: &UncertaintySet<T>, n_det: usize, n_state: usize, horizon: T, seed: u64) -> Result<Vec<Adversary<T>>> {
    let mut out = Vec::with_capacity(n_det + n_state);
    let mut rng = stream_rng(seed, purpose::ADVERSARY, 0);
    match k.kind() {
        UncertaintyKind::Tube { .. } => {
            for i in 0..n_det {
                let (name, f): (String, Arc<dyn Fn(T) -> T + Send + Sync>) = match i % 5 {
                    0 => ("minimum".into(), Arc::new(|_| T::zero())),
                    1 => ("maximum".into(), Arc::new(|_| T::one())),
                    2 => ("ramp".into(), Arc::new(move |t: T| (t / horizon).min(T::one()).max(T::zero()))),
                    3 => {
                        let freq = T::lit(rng.random_range(0.5..3.0));
                        let phase = T::lit(rng.random_range(0.0..std::f64::consts::TAU));
                        (format!("wave(freq={freq:.3})"), Arc::new(move |t: T| T::lit(0.5) * (T::one() + (freq * t + phase).sin())))
                    }
                    _ => {
                        let at = horizon * T::lit(rng.random_range(0.1..0.9));
                        (format!("step(at={at:.3})"), Arc::new(move |t: T| if t >= at { T::one() } else { T::zero() }))
                    }
                };
                out.push(adversary_sampler(k, &name, Modulation::Deterministic(f), horizon)?);
            }
            for i in 0..n_state {
                let (name, f) = match i % 5 {
                    0 => ("inverse-quadratic".to_string(), PathFunctional::InverseQuadratic { component: 0 }),
                    1 => {
                        let a = T::lit(rng.random_range(0.5..4.0));
                        (format!("logistic(a={a:.3})"), custom(move |z, _| T::one() / (T::one() + (-a * z).exp())))
                    }
                    2 => {
                        let b = T::lit(rng.random_range(-1.0..1.0));
                        (format!("indicator(z>{b:.3})"), custom(move |z, _| if z > b { T::one() } else { T::zero() }))
                    }
                    3 => {
                        let a = T::lit(rng.random_range(0.5..3.0));
                        (format!("decay(a={a:.3})"), custom(move |z: T, _| (-a * z.abs()).exp()))
                    }
                    _ => (
                        "ramped-inverse-quadratic".to_string(),
                        custom(move |z: T, t: T| (t / horizon).min(T::one()) / (T::one() + z * z)),
                    ),
                };
                out.push(adversary_sampler(k, &name, Modulation::State(f), horizon)?);
            }
        }
        UncertaintyKind::Family(members) => {
            let m = members.len();
            for i in 0..n_det {
                let index = i % m;
                let (name, template) = if i > 0 && i % (m + 1) == m {
                    let period = horizon * T::lit(rng.random_range(0.05..0.5));
                    (format!("switching(period={period:.3})"), Modulation::Switching { period })
                } else {
                    (format!("member-{index}"), Modulation::Member { index, functional: PathFunctional::Time(Arc::new(|_| T::one())) })
                };
                out.push(adversary_sampler(k, &name, template, horizon)?);
            }
            for i in 0..n_state {
                let index = i % m;
                let b = T::lit(rng.random_range(-1.0..1.0));
                let f = custom(move |z, _| if z > b { T::one() } else { T::zero() });
                out.push(adversary_sampler(k, &format!("member-{index}(z>{b:.3})"), Modulation::Member { index, functional: f }, horizon)?);
            }
        }
    }
    Ok(out)
}

fn custom<T: Real>(f: impl Fn(T, T) -> T + Send + Sync + 'static) -> PathFunctional<T> {
    PathFunctional::Custom(Arc::new(move |ctx: &PathContext<'_, T>| f(ctx.z.first().copied().unwrap_or_else(T::zero), ctx.t)))
}

#[derive(Clone, Debug)]
pub struct StressConfig<T> {
    pub horizon: T,
    pub n_paths: usize,
    pub seed: u64,
    pub scheme: Scheme,
    pub band_factor: T,
}

impl<T: Real> StressConfig<T> {
    pub fn new(horizon: T, n_paths: usize, seed: u64) -> Self {
        Self { horizon, n_paths, seed, scheme: Scheme::default(), band_factor: T::lit(10.0) }
    }
}

struct PathStress<T> {
    utility: T,
    last_flow: T,
    nu_deficit: T,
    per_adversary: Vec<[T; 5]>,
}

/// Runs the saddle strategy against each adversary on common noise.
///
/// The controls are generated once, by the `ν`-feedback rule on the `ν`
/// state, and replayed unchanged (open loop in `φ`) under every adversary.
/// Adversary total wealth is bounded below by `W^φ + g∞^ν y^φ + ⟨h∞^ν, y^φ⟩`.
pub fn stress_report<T: Real>(
    w: T,
    x: &HistorySegment<T>,
    k: &UncertaintySet<T>,
    params: &MarketParams<T>,
    adversaries: &[Adversary<T>],
    cfg: &StressConfig<T>,
) -> Result<GameReport<T>> {
    let mut report = solve_robust(w, x, k, params)?;
    let h = x.step();
    let constants = check_robust_assumption(params, &report.minimum, h)?;
    let rule = FeedbackRule::optimal(params, &constants)?;
    let nu_kernel = KernelProcess::Constant(report.minimum.clone()).compile(h)?;
    let engine = Engine::new(params, &constants, &rule, &nu_kernel, cfg.scheme)?;
    let kernels: Vec<CompiledKernel<T>> = adversaries
        .iter()
        .map(|a| {
            if (a.process.horizon() - x.horizon()).abs() > T::lit(1e-12) * x.horizon() {
                return Err(Error::Domain(format!("adversary {} has window {} but the history has {}", a.name, a.process.horizon(), x.horizon())));
            }
            a.process.compile(h)
        })
        .collect::<Result<_>>()?;
    let load = IncomeLoadings::new(params);
    let plan = NoisePlan::new(h, cfg.horizon, cfg.seed, params.corr.clone())?;
    let band = cfg.band_factor * h * wealth_scale(w, x, &constants);
    let g = constants.g_inf;
    let rd = params.discount();
    let cells = x.cells();
    let tiny = T::lit(1e-12);

    let per_path = try_par_paths(cfg.n_paths, |p| {
        let noise = plan.generate(p);
        let (summary, rec) = engine.run(w, x, &noise, true)?;
        let rec = rec.expect("kept");
        let (j_nu, _) = discounted_utility(&rec.c, &rec.b, h, params);
        let mut per_adversary = Vec::with_capacity(kernels.len());
        let mut full = Vec::with_capacity(x.values().len() + noise.steps());
        for kernel in &kernels {
            let income = simulate_compiled(x, kernel, &load, &noise, cfg.scheme)?;
            full.clear();
            full.extend_from_slice(x.values());
            full.extend_from_slice(&income.values[1..]);
            let mut w_k = w;
            let mut min_total = T::infinity();
            let mut min_gap = T::infinity();
            let mut min_income = T::infinity();
            let mut strict = 0usize;
            for (i, &y) in income.values.iter().enumerate() {
                let total = w_k + g * y + constants.h_inf.inner(&full[i..i + cells + 1]);
                min_total = min_total.min(total);
                min_gap = min_gap.min(total - rec.gamma[i]);
                let dy = y - rec.y[i];
                min_income = min_income.min(if dy.abs() <= tiny * (T::one() + rec.y[i].abs()) { T::zero() } else { dy });
                if i > 0 && dy > T::zero() {
                    strict += 1;
                }
                if i < rec.gains.len() {
                    w_k = w_k + (rd * w_k + y - rec.c[i] - params.delta * rec.b[i]) * h + rec.gains[i];
                }
            }
            // J depends on (c, B) alone, which are replayed verbatim.
            let (j_phi, _) = discounted_utility(&rec.c, &rec.b, h, params);
            per_adversary.push([min_total, min_gap, min_income, T::from_usize_lossy(strict), (j_phi - j_nu).abs()]);
        }
        Ok(PathStress { utility: summary.utility, last_flow: summary.last_flow, nu_deficit: summary.max_deficit, per_adversary })
    })?;

    let nodes = T::from_usize_lossy(plan.steps * cfg.n_paths);
    let adversaries = adversaries
        .iter()
        .enumerate()
        .map(|(a, adv)| {
            let fold = |j: usize, init: T, f: fn(T, T) -> T| per_path.iter().map(|p| p.per_adversary[a][j]).fold(init, f);
            AdversaryOutcome {
                name: adv.name.clone(),
                min_total_wealth: fold(0, T::infinity(), T::min),
                min_wealth_gap: fold(1, T::infinity(), T::min),
                min_income_gap: fold(2, T::infinity(), T::min),
                strict_income_share: fold(3, T::zero(), |a, b| a + b) / nodes,
                max_utility_difference: fold(4, T::zero(), T::max),
                band,
            }
        })
        .collect();
    let integrals: Vec<T> = per_path.iter().map(|p| p.utility).collect();
    let last: Vec<T> = per_path.iter().map(|p| p.last_flow).collect();
    let tail_rate = params.rho + params.delta - rule.utility_growth(params)?;
    let last_mean = crate::mc::pairwise_sum(&last) / T::from_usize_lossy(last.len().max(1));
    let tail = if tail_rate > T::zero() { last_mean.abs() / tail_rate } else { T::infinity() };
    report.stress = Some(StressSummary {
        horizon: cfg.horizon,
        n_paths: cfg.n_paths,
        seed: cfg.seed,
        band,
        nu_max_deficit: per_path.iter().map(|p| p.nu_deficit).fold(T::zero(), T::max),
        nu_utility: Estimate::from_samples(&integrals).with_tail(tail),
        adversaries,
    });
    Ok(report)
}

/// [`stress_report`], failing when any adversary breaks admissibility,
/// dominance, income monotonicity or utility invariance.
pub fn stress_saddle<T: Real>(
    w: T,
    x: &HistorySegment<T>,
    k: &UncertaintySet<T>,
    params: &MarketParams<T>,
    adversaries: &[Adversary<T>],
    cfg: &StressConfig<T>,
) -> Result<GameReport<T>> {
    let report = stress_report(w, x, k, params, adversaries, cfg)?;
    let stress = report.stress.as_ref().expect("stress summary present");
    if let Some(bad) = stress.adversaries.iter().find(|a| !a.passed()) {
        return Err(Error::SaddleStress(format!(
            "adversary {}: min total wealth {}, min gap to nu {}, min income gap {}, utility difference {} (band {})",
            bad.name, bad.min_total_wealth, bad.min_wealth_gap, bad.min_income_gap, bad.max_utility_difference, bad.band
        )));
    }
    if stress.nu_max_deficit > stress.band {
        return Err(Error::AdmissibilityLeak { min_total_wealth: (-stress.nu_max_deficit).to_f64_lossy(), band: stress.band.to_f64_lossy() });
    }
    Ok(report)
}
