//! Closed-form value function, feedback controls and the controlled
//! wealth/income simulation.

use crate::error::{Error, Result};
use crate::labor::{HistorySegment, IncomeLoadings, PathBuffer, RunningBrownian, Scheme};
use crate::linalg::{dot, norm_sq, Matrix};
use crate::market::MarketParams;
use crate::mc::{pairwise_sum, try_par_paths, ConvergenceTable, Estimate, Noise, NoisePlan};
use crate::measure::{CompiledKernel, KernelProcess, PathContext, RadonMeasure};
use crate::scalar::Real;
use crate::valuation::PolicyConstants;

/// Consumption rate, bequest target and risky allocations.
#[derive(Clone, Debug, PartialEq)]
pub struct ControlTriplet<T> {
    pub c: T,
    pub b: T,
    pub theta: Vec<T>,
}

/// Current wealth, income and total wealth.
#[derive(Clone, Debug, PartialEq)]
pub struct ControlledState<T> {
    pub t: T,
    pub w: T,
    pub y: T,
    pub gamma: T,
}

impl<T: Real> ControlledState<T> {
    pub fn new(t: T, w: T, x: &HistorySegment<T>, constants: &PolicyConstants<T>) -> Self {
        Self { t, w, y: x.x0(), gamma: constants.total_wealth(w, x) }
    }
}

/// `f∞^γ G^{1−γ}/(1−γ)` for `G > 0`; `0` or `−∞` at `G = 0`.
pub fn value_of_total_wealth<T: Real>(total: T, constants: &PolicyConstants<T>) -> T {
    let gamma = constants.gamma;
    if total <= T::zero() {
        return if gamma < T::one() { T::zero() } else { T::neg_infinity() };
    }
    constants.f_inf.powf(gamma) * total.powf(T::one() - gamma) / (T::one() - gamma)
}

/// `V(w, x)`; errors outside the admissible half-space.
pub fn value_function<T: Real>(w: T, x: &HistorySegment<T>, constants: &PolicyConstants<T>) -> Result<T> {
    let (total, region) = constants.classify(w, x);
    match region {
        crate::valuation::WealthRegion::Exterior => Err(Error::Inadmissible { total_wealth: total.to_f64_lossy() }),
        crate::valuation::WealthRegion::Boundary => Ok(value_of_total_wealth(T::zero(), constants)),
        crate::valuation::WealthRegion::Interior => Ok(value_of_total_wealth(total, constants)),
    }
}

/// Policy that is linear in total wealth plus an income hedge:
/// `c = c_rate Γ`, `B = b_rate Γ`, `σᵀθ = Γ e_Γ + y e_y` (with `Γ` floored at 0).
#[derive(Clone, Debug, PartialEq)]
pub struct FeedbackRule<T> {
    pub c_rate: T,
    pub b_rate: T,
    pub exposure_gamma: Vec<T>,
    pub exposure_y: Vec<T>,
    sigma_t_inv: Matrix<T>,
}

impl<T: Real> FeedbackRule<T> {
    /// The optimal feedback: `c = Γ/f∞`, `B = k^{−b}Γ/f∞`,
    /// `θ = (σσᵀ)⁻¹(μ − r𝟏)Γ/γ − g∞ y (σᵀ)⁻¹C₁ᵀσ_y`.
    pub fn optimal(params: &MarketParams<T>, constants: &PolicyConstants<T>) -> Result<Self> {
        let f = constants.f_inf;
        Ok(Self {
            c_rate: T::one() / f,
            b_rate: params.k.powf(-constants.b) / f,
            exposure_gamma: constants.kappa.iter().map(|&k| k / params.gamma).collect(),
            exposure_y: params.income_market_loading().iter().map(|&a| -constants.g_inf * a).collect(),
            sigma_t_inv: params.sigma.transpose().inverse()?,
        })
    }

    pub fn scale_consumption(mut self, factor: T) -> Self {
        self.c_rate = self.c_rate * factor;
        self
    }

    pub fn scale_bequest(mut self, factor: T) -> Self {
        self.b_rate = self.b_rate * factor;
        self
    }

    /// Adds `ε u` to the per-unit-Γ exposure `σᵀθ/Γ`.
    pub fn tilt_exposure(mut self, eps: T, direction: &[T]) -> Self {
        for (e, &u) in self.exposure_gamma.iter_mut().zip(direction) {
            *e = *e + eps * u;
        }
        self
    }

    /// Exposure vector `σᵀθ`.
    #[inline]
    pub fn exposure(&self, gamma: T, y: T) -> Vec<T> {
        let g = gamma.max(T::zero());
        self.exposure_gamma.iter().zip(&self.exposure_y).map(|(&a, &b)| g * a + y * b).collect()
    }

    pub fn controls(&self, gamma: T, y: T) -> ControlTriplet<T> {
        let g = gamma.max(T::zero());
        let exposure = self.exposure(gamma, y);
        ControlTriplet { c: self.c_rate * g, b: self.b_rate * g, theta: self.sigma_t_inv.mul_vec(&exposure) }
    }

    /// Drift and volatility of `Γ` under this rule when the hedge neutralizes
    /// income risk (perfect correlation): `dΓ = Γ a dt + Γ vᵀ dZ`.
    pub fn gamma_dynamics(&self, params: &MarketParams<T>) -> Result<(T, Vec<T>)> {
        let kappa = params.kappa()?;
        let drift = params.discount() + dot(&self.exposure_gamma, &kappa) - self.c_rate - params.delta * self.b_rate;
        Ok((drift, self.exposure_gamma.clone()))
    }

    /// Growth rate of `E[Γ^{1−γ}]` under [`Self::gamma_dynamics`].
    pub fn utility_growth(&self, params: &MarketParams<T>) -> Result<T> {
        let (a, v) = self.gamma_dynamics(params)?;
        let g = params.gamma;
        Ok((T::one() - g) * a - T::lit(0.5) * g * (T::one() - g) * norm_sq(&v))
    }

    /// Exact expected discounted utility from `Γ₀` under the same hypothesis;
    /// `None` when the integral diverges.
    pub fn analytic_value(&self, gamma0: T, params: &MarketParams<T>) -> Result<Option<T>> {
        let g = params.gamma;
        let rate = params.rho + params.delta - self.utility_growth(params)?;
        if !(rate > T::zero()) {
            return Ok(None);
        }
        let one = T::one() - g;
        let flow = self.c_rate.powf(one) + params.delta * (params.k * self.b_rate).powf(one);
        Ok(Some(gamma0.powf(one) * flow / (one * rate)))
    }
}

/// Optimal feedback controls at a state.
pub fn feedback_controls<T: Real>(
    state: &ControlledState<T>,
    constants: &PolicyConstants<T>,
    params: &MarketParams<T>,
) -> Result<ControlTriplet<T>> {
    if state.gamma < T::zero() {
        return Err(Error::Inadmissible { total_wealth: state.gamma.to_f64_lossy() });
    }
    Ok(FeedbackRule::optimal(params, constants)?.controls(state.gamma, state.y))
}

/// Maximizers of the control part of the Hamiltonian and its maximum.
#[derive(Clone, Debug, PartialEq)]
pub struct HamiltonianMax<T> {
    pub controls: ControlTriplet<T>,
    pub value: T,
}

/// `c^{1−γ}/(1−γ) + δ(kB)^{1−γ}/(1−γ) + [θᵀ(μ−r𝟏) − c − δB]p₁
///  + ½θᵀσσᵀθ P₁₁ + θᵀσC₁ᵀσ_y x₀ P₁₂`.
pub fn hamiltonian_value<T: Real>(
    u: &ControlTriplet<T>,
    x0: T,
    p1: T,
    p11: T,
    p12: T,
    params: &MarketParams<T>,
) -> T {
    let one = T::one() - params.gamma;
    let st = params.sigma.transpose().mul_vec(&u.theta);
    let excess: Vec<T> = params.mu.iter().map(|&m| m - params.r).collect();
    let a1 = params.income_market_loading();
    u.c.powf(one) / one + params.delta * (params.k * u.b).powf(one) / one
        + (dot(&u.theta, &excess) - u.c - params.delta * u.b) * p1
        + T::lit(0.5) * norm_sq(&st) * p11
        + dot(&st, &a1) * x0 * p12
}

/// `c = p₁^{−1/γ}`, `B = k^{−b} p₁^{−1/γ}`,
/// `θ = −(σσᵀ)⁻¹[(μ − r𝟏)p₁ + σC₁ᵀσ_y x₀ P₁₂]/P₁₁`.
pub fn hamiltonian_maximizers<T: Real>(x0: T, p1: T, p11: T, p12: T, params: &MarketParams<T>) -> Result<HamiltonianMax<T>> {
    if !(p1 > T::zero()) || !(p11 < T::zero()) {
        return Err(Error::DegenerateHamiltonian(format!(
            "need p1 > 0 and P11 < 0, got p1 = {p1}, P11 = {p11}; the Hamiltonian is +inf or degenerate"
        )));
    }
    let kappa = params.kappa()?;
    let a1 = params.income_market_loading();
    let c = p1.powf(-T::one() / params.gamma);
    let b = params.k.powf(-params.b()) * c;
    let exposure: Vec<T> = kappa.iter().zip(&a1).map(|(&k, &a)| -(k * p1 + a * x0 * p12) / p11).collect();
    let theta = params.sigma.transpose().solve(&exposure)?;
    let controls = ControlTriplet { c, b, theta };
    let value = hamiltonian_value(&controls, x0, p1, p11, p12, params);
    Ok(HamiltonianMax { controls, value })
}

/// `Γ₀ exp{(a − |v|²/2) t + vᵀZ(t)}` on the nodes of `noise`, with the
/// optimal `a = r + δ + |κ|²/γ − (1 + δk^{−b})/f∞` and `v = κ/γ`.
pub fn gamma_closed_form<T: Real>(
    gamma0: T,
    params: &MarketParams<T>,
    constants: &PolicyConstants<T>,
    noise: &Noise<T>,
) -> Result<Vec<T>> {
    let (a, v) = FeedbackRule::optimal(params, constants)?.gamma_dynamics(params)?;
    Ok(doleans_path(gamma0, a, &v, noise))
}

pub(crate) fn doleans_path<T: Real>(gamma0: T, a: T, v: &[T], noise: &Noise<T>) -> Vec<T> {
    let h = noise.step();
    let step_drift = (a - T::lit(0.5) * norm_sq(v)) * h;
    let mut log = T::zero();
    let mut out = Vec::with_capacity(noise.steps() + 1);
    out.push(gamma0);
    for k in 0..noise.steps() {
        log = log + step_drift + dot(v, noise.dz(k));
        out.push(gamma0 * log.exp());
    }
    out
}

/// Discounted utility flow `e^{−(ρ+δ)t}(u(c) + δ u(kB))`.
#[inline]
pub fn utility_flow<T: Real>(t: T, c: T, b: T, params: &MarketParams<T>) -> T {
    let one = T::one() - params.gamma;
    let u = c.powf(one) / one + params.delta * (params.k * b).powf(one) / one;
    (-(params.rho + params.delta) * t).exp() * u
}

/// Trapezoid integral of the utility flow along one path and its last value.
pub fn discounted_utility<T: Real>(c: &[T], b: &[T], h: T, params: &MarketParams<T>) -> (T, T) {
    let mut acc = T::zero();
    let mut prev = T::zero();
    for (k, (&ck, &bk)) in c.iter().zip(b).enumerate() {
        let cur = utility_flow(h * T::from_usize_lossy(k), ck, bk, params);
        if k > 0 {
            acc = acc + T::lit(0.5) * h * (prev + cur);
        }
        prev = cur;
    }
    (acc, prev)
}

#[derive(Clone, Debug)]
pub struct UtilityEstimate<T> {
    /// Carries the tail bound when it is finite.
    pub estimate: Estimate<T>,
    /// The truncated tail does not decay at the supplied rate.
    pub tail_divergent: bool,
}

fn utility_estimate<T: Real>(integrals: &[T], last: &[T], tail_rate: Option<T>) -> UtilityEstimate<T> {
    let est = Estimate::from_samples(integrals);
    let last_mean = pairwise_sum(last) / T::from_usize_lossy(last.len().max(1));
    match tail_rate {
        Some(rate) if rate > T::lit(1e-10) => UtilityEstimate { estimate: est.with_tail(last_mean.abs() / rate), tail_divergent: false },
        Some(_) => UtilityEstimate { estimate: est.with_tail(T::infinity()), tail_divergent: true },
        None => UtilityEstimate { estimate: est, tail_divergent: false },
    }
}

/// Monte Carlo value of recorded consumption/bequest paths, with the tail
/// `|E flow(T)| / tail_rate` when a decay rate of the flow is supplied.
pub fn estimate_j<T: Real>(paths: &[ControlledPath<T>], params: &MarketParams<T>, tail_rate: Option<T>) -> Result<UtilityEstimate<T>> {
    if (params.gamma - T::one()).abs() < T::lit(1e-12) {
        return Err(Error::Domain("gamma = 1 is not supported".into()));
    }
    let (integrals, last): (Vec<T>, Vec<T>) = paths.iter().map(|p| discounted_utility(&p.c, &p.b, p.h, params)).unzip();
    Ok(utility_estimate(&integrals, &last, tail_rate))
}

/// Full record of one controlled path on `{0, h, ..., T}`.
#[derive(Clone, Debug, PartialEq)]
pub struct ControlledPath<T> {
    pub h: T,
    pub w: Vec<T>,
    pub y: Vec<T>,
    pub gamma: Vec<T>,
    pub gamma_closed: Vec<T>,
    pub c: Vec<T>,
    pub b: Vec<T>,
    /// `θ` at each node, flattened (`n` per node).
    pub theta: Vec<T>,
    /// Portfolio gain in excess of the riskless rate over each step.
    pub gains: Vec<T>,
}

impl<T: Real> ControlledPath<T> {
    pub fn time(&self, k: usize) -> T {
        self.h * T::from_usize_lossy(k)
    }

    pub fn theta_at(&self, k: usize) -> &[T] {
        let n = self.theta.len() / self.w.len();
        &self.theta[k * n..(k + 1) * n]
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PathSummary<T> {
    pub utility: T,
    pub last_flow: T,
    pub min_gamma: T,
    /// Largest `−Γ` seen (0 if `Γ` stayed nonnegative).
    pub max_deficit: T,
    /// `sup_t |Γ − Γ_closed| / Γ_closed`.
    pub doleans_gap: T,
    pub terminal_gamma: T,
}

#[derive(Clone, Debug)]
pub struct ControlledConfig<T> {
    pub horizon: T,
    pub n_paths: usize,
    pub seed: u64,
    pub scheme: Scheme,
    /// Number of leading paths kept in full.
    pub record_paths: usize,
    /// Leak band is `band_factor · h · scale`.
    pub band_factor: T,
}

impl<T: Real> ControlledConfig<T> {
    pub fn new(horizon: T, n_paths: usize, seed: u64) -> Self {
        Self { horizon, n_paths, seed, scheme: Scheme::default(), record_paths: 0, band_factor: T::lit(10.0) }
    }
}

#[derive(Clone, Debug)]
pub struct ControlledRun<T> {
    pub gamma0: T,
    pub band: T,
    pub summaries: Vec<PathSummary<T>>,
    pub records: Vec<ControlledPath<T>>,
    pub utility: UtilityEstimate<T>,
    pub max_deficit: T,
    pub max_doleans_gap: T,
}

/// Wealth scale used for discretization bands: `|Γ₀| + |w| + g∞|x₀| + ⟨h∞, |x₁|⟩`.
pub fn wealth_scale<T: Real>(w: T, x: &HistorySegment<T>, constants: &PolicyConstants<T>) -> T {
    let abs: Vec<T> = x.values().iter().map(|v| v.abs()).collect();
    constants.total_wealth(w, x).abs() + w.abs() + constants.g_inf * x.x0().abs() + constants.h_inf.inner(&abs).abs()
}

/// One-path engine shared by the controlled simulation and the robust replay.
pub(crate) struct Engine<'a, T> {
    pub params: &'a MarketParams<T>,
    pub constants: &'a PolicyConstants<T>,
    pub rule: &'a FeedbackRule<T>,
    pub kernel: &'a CompiledKernel<T>,
    pub load: IncomeLoadings<T>,
    pub scheme: Scheme,
    pub doleans: (T, Vec<T>),
    proj: Projections<T>,
}

/// Inner products of the rule's exposures with `κ` and the income loading.
struct Projections<T> {
    eg_kappa: T,
    ey_kappa: T,
    eg_eg: T,
    ey_eg: T,
    a1_eg: T,
    a1_ey: T,
}

impl<'a, T: Real> Engine<'a, T> {
    pub fn new(
        params: &'a MarketParams<T>,
        constants: &'a PolicyConstants<T>,
        rule: &'a FeedbackRule<T>,
        kernel: &'a CompiledKernel<T>,
        scheme: Scheme,
    ) -> Result<Self> {
        let kappa = params.kappa()?;
        let load = IncomeLoadings::new(params);
        let (eg, ey) = (&rule.exposure_gamma, &rule.exposure_y);
        let proj = Projections {
            eg_kappa: dot(eg, &kappa),
            ey_kappa: dot(ey, &kappa),
            eg_eg: dot(eg, eg),
            ey_eg: dot(ey, eg),
            a1_eg: dot(&load.a1, eg),
            a1_ey: dot(&load.a1, ey),
        };
        Ok(Self { params, constants, rule, kernel, load, scheme, doleans: rule.gamma_dynamics(params)?, proj })
    }

    /// Simulates `(W, y)` under the feedback rule; `Γ` is recomputed from the
    /// state at every node.
    pub fn run(&self, w: T, x: &HistorySegment<T>, noise: &Noise<T>, keep: bool) -> Result<(PathSummary<T>, Option<ControlledPath<T>>)> {
        let p = self.params;
        let h = x.step();
        let steps = noise.steps();
        let g = self.constants.g_inf;
        let rd = p.discount();
        let half = T::lit(0.5);
        let n = p.n();
        let mut buf = PathBuffer::new(x, steps);
        let mut z = RunningBrownian::new(noise.dim());
        let mut w_k = w;
        let gamma0 = self.constants.total_wealth(w, x);
        let closed = doleans_path(gamma0, self.doleans.0, &self.doleans.1, noise);
        let mut rec = keep.then(|| ControlledPath {
            h,
            w: Vec::with_capacity(steps + 1),
            y: Vec::with_capacity(steps + 1),
            gamma: Vec::with_capacity(steps + 1),
            gamma_closed: closed.clone(),
            c: Vec::with_capacity(steps + 1),
            b: Vec::with_capacity(steps + 1),
            theta: Vec::with_capacity((steps + 1) * n),
            gains: Vec::with_capacity(steps),
        });
        let one = T::one() - p.gamma;
        let flow_per_unit = utility_flow(T::zero(), self.rule.c_rate, self.rule.b_rate, p);
        let step_discount = (-(p.rho + p.delta) * h).exp();
        let mut discount = T::one();
        let mut utility = T::zero();
        let mut prev_flow = T::zero();
        let mut min_gamma = T::infinity();
        let mut max_deficit = T::zero();
        let mut gap = T::zero();
        let mut last_gamma = gamma0;
        for k in 0..=steps {
            let t = h * T::from_usize_lossy(k);
            let y = buf.current();
            let gamma = w_k + g * y + self.constants.h_inf.inner(buf.window(k));
            if !gamma.is_finite() {
                return Err(Error::NonFinite { step: k, t: t.to_f64_lossy() });
            }
            last_gamma = gamma;
            min_gamma = min_gamma.min(gamma);
            max_deficit = max_deficit.max(-gamma);
            if closed[k] > T::zero() {
                gap = gap.max((gamma - closed[k]).abs() / closed[k]);
            }
            let gp = gamma.max(T::zero());
            let (c, b) = (self.rule.c_rate * gp, self.rule.b_rate * gp);
            let flow = discount * gp.powf(one) * flow_per_unit;
            discount = discount * step_discount;
            if k > 0 {
                utility = utility + half * h * (prev_flow + flow);
            }
            prev_flow = flow;
            if let Some(r) = rec.as_mut() {
                r.w.push(w_k);
                r.y.push(y);
                r.gamma.push(gamma);
                r.c.push(c);
                r.b.push(b);
                r.theta.extend_from_slice(&self.rule.controls(gamma, y).theta);
            }
            if k == steps {
                break;
            }
            let dz = noise.dz(k);
            let gain = self.gain(gamma, y, noise, k, h);
            if let Some(r) = rec.as_mut() {
                r.gains.push(gain);
            }
            let drift = buf.delay_drift(self.kernel, &PathContext::at(t, &z.z), k)?;
            let xi = self.load.shock(noise, k);
            let y_next = y * self.load.growth(xi, h, self.scheme) + drift * h;
            w_k = w_k + (rd * w_k + y - c - p.delta * b) * h + gain;
            buf.push(y_next);
            z.advance(dz);
        }
        let summary = PathSummary {
            utility,
            last_flow: prev_flow,
            min_gamma,
            max_deficit,
            doleans_gap: gap,
            terminal_gamma: last_gamma,
        };
        Ok((summary, rec))
    }

    /// `θᵀ(μ − r𝟏)h + θᵀσΔZ` plus the Milstein terms of the wealth diffusion.
    #[inline]
    fn gain(&self, gamma: T, y: T, noise: &Noise<T>, k: usize, h: T) -> T {
        let dz = noise.dz(k);
        let q = &self.proj;
        let half = T::lit(0.5);
        let gp = gamma.max(T::zero());
        let sg = dot(&self.rule.exposure_gamma, dz);
        let sy = dot(&self.rule.exposure_y, dz);
        let e_dz = gp * sg + y * sy;
        let mut gain = (gp * q.eg_kappa + y * q.ey_kappa) * h + e_dz;
        if self.scheme == Scheme::Milstein {
            let g = self.constants.g_inf;
            let sa = dot(&self.load.a1, dz);
            // ∂Γ-exposure vanishes where Γ is floored.
            let (u_dz, a1_u) = if gamma > T::zero() {
                let e_eg = gp * q.eg_eg + y * q.ey_eg;
                gain = gain + half * (e_dz * sg - h * e_eg);
                (g * sg + sy, g * q.a1_eg + q.a1_ey)
            } else {
                (sy, q.a1_ey)
            };
            gain = gain + half * y * (sa * u_dz - h * a1_u);
            if let Some(ds) = noise.dz_star(k) {
                gain = gain + half * y * dot(&self.load.a2, ds) * u_dz;
            }
        }
        gain
    }
}

/// Co-simulates wealth and income under `rule` for a constant kernel `phi`.
pub fn simulate_controlled<T: Real>(
    w: T,
    x: &HistorySegment<T>,
    phi: &RadonMeasure<T>,
    params: &MarketParams<T>,
    rule: &FeedbackRule<T>,
    cfg: &ControlledConfig<T>,
) -> Result<ControlledRun<T>> {
    let h = x.step();
    let constants = PolicyConstants::new(params, phi, h)?;
    let (gamma0, region) = constants.classify(w, x);
    if region == crate::valuation::WealthRegion::Exterior {
        return Err(Error::Inadmissible { total_wealth: gamma0.to_f64_lossy() });
    }
    let kernel = KernelProcess::Constant(phi.clone()).compile(h)?;
    let engine = Engine::new(params, &constants, rule, &kernel, cfg.scheme)?;
    let plan = NoisePlan::new(h, cfg.horizon, cfg.seed, params.corr.clone())?;
    let band = cfg.band_factor * h * wealth_scale(w, x, &constants);
    let results = try_par_paths(cfg.n_paths, |p| engine.run(w, x, &plan.generate(p), (p as usize) < cfg.record_paths))?;
    let mut summaries = Vec::with_capacity(results.len());
    let mut records = Vec::new();
    for (s, r) in results {
        summaries.push(s);
        records.extend(r);
    }
    let max_deficit = summaries.iter().map(|s| s.max_deficit).fold(T::zero(), T::max);
    if max_deficit > band {
        return Err(Error::AdmissibilityLeak { min_total_wealth: (-max_deficit).to_f64_lossy(), band: band.to_f64_lossy() });
    }
    let integrals: Vec<T> = summaries.iter().map(|s| s.utility).collect();
    let last: Vec<T> = summaries.iter().map(|s| s.last_flow).collect();
    let tail_rate = params.rho + params.delta - rule.utility_growth(params)?;
    let utility = utility_estimate(&integrals, &last, Some(tail_rate));
    let max_doleans_gap = summaries.iter().map(|s| s.doleans_gap).fold(T::zero(), T::max);
    Ok(ControlledRun { gamma0, band, summaries, records, utility, max_deficit, max_doleans_gap })
}

/// Doléans gaps of the optimal rule on common noise at the coarsenings
/// `factors` of `finest`.
#[derive(Clone, Debug)]
pub struct DoleansStudy<T> {
    /// Path-averaged sup-t relative gaps.
    pub table: ConvergenceTable<T>,
    /// Largest sup-t relative gap over paths, per factor.
    pub max_gaps: Vec<T>,
}

/// `history(h)` supplies the initial segment on the grid of step `h`.
pub fn doleans_study<T: Real>(
    w: T,
    history: impl Fn(T) -> Result<HistorySegment<T>>,
    phi: &RadonMeasure<T>,
    params: &MarketParams<T>,
    finest: &NoisePlan<T>,
    n_paths: usize,
    factors: &[usize],
) -> Result<DoleansStudy<T>> {
    struct Level<T> {
        x: HistorySegment<T>,
        constants: PolicyConstants<T>,
        rule: FeedbackRule<T>,
        kernel: CompiledKernel<T>,
    }
    let levels = factors
        .iter()
        .map(|&f| {
            let h = finest.h * T::from_usize_lossy(f);
            let constants = PolicyConstants::new(params, phi, h)?;
            let rule = FeedbackRule::optimal(params, &constants)?;
            Ok(Level { x: history(h)?, kernel: KernelProcess::Constant(phi.clone()).compile(h)?, constants, rule })
        })
        .collect::<Result<Vec<_>>>()?;
    let per_path = try_par_paths(n_paths, |p| {
        let fine = finest.generate(p);
        factors
            .iter()
            .zip(&levels)
            .map(|(&f, l)| {
                let engine = Engine::new(params, &l.constants, &l.rule, &l.kernel, Scheme::Milstein)?;
                Ok(engine.run(w, &l.x, &fine.coarsen(f)?, false)?.0.doleans_gap)
            })
            .collect::<Result<Vec<T>>>()
    })?;
    let n = T::from_usize_lossy(per_path.len().max(1));
    let column = |i: usize| per_path.iter().map(|g| g[i]).collect::<Vec<T>>();
    let steps = factors.iter().map(|&f| finest.h * T::from_usize_lossy(f)).collect();
    let gaps = (0..factors.len()).map(|i| pairwise_sum(&column(i)) / n).collect();
    let max_gaps = (0..factors.len()).map(|i| column(i).into_iter().fold(T::zero(), T::max)).collect();
    Ok(DoleansStudy { table: ConvergenceTable::from_gaps(steps, gaps), max_gaps })
}
