//! Human capital and total wealth in closed form.

use crate::error::{Assumption, Error, Result};
use crate::labor::{simulate_compiled, HistorySegment, IncomeLoadings, Scheme};
use crate::linalg::norm_sq;
use crate::market::MarketParams;
use crate::mc::{pairwise_sum, Estimate, NoisePlan};
use crate::measure::grid::cells;
use crate::measure::{GridFn, KernelProcess, RadonMeasure};
use crate::scalar::Real;

/// `κ = σ⁻¹(μ − r𝟏)`.
pub fn market_price_of_risk<T: Real>(params: &MarketParams<T>) -> Result<Vec<T>> {
    params.kappa()
}

/// `β∞ = ∫ e^{(r+δ)s} φ(ds)`, exact on atoms and density pieces.
pub fn beta_infinity<T: Real>(phi: &RadonMeasure<T>, r: T, delta: T) -> T {
    phi.integrate_exp(r + delta)
}

/// Snap tolerance when deciding whether an atom sits at or left of a node.
fn at_or_left<T: Real>(a: T, s: T, h: T) -> bool {
    a <= s + h * T::lit(1e-9)
}

/// `h∞(s)/g∞ = ∫_{-d}^{s} e^{−ρ(s−τ)} φ(dτ)` at a single point.
fn discounted_mass_left_of<T: Real>(phi: &RadonMeasure<T>, rate: T, s: T, h: T) -> T {
    let atoms = phi
        .atoms()
        .iter()
        .filter(|&&(a, _)| at_or_left(a, s, h))
        .fold(T::zero(), |acc, &(a, w)| acc + w * (-rate * (s - a)).exp());
    phi.density_pieces().filter(|&(a, _, _)| a < s).fold(atoms, |acc, (a, b, v)| {
        let end = b.min(s);
        let piece = if rate.abs() * (end - a) < T::lit(1e-8) {
            (end - a) * (-rate * (s - T::lit(0.5) * (a + end))).exp()
        } else {
            ((-rate * (s - end)).exp() - (-rate * (s - a)).exp()) / rate
        };
        acc + v * piece
    })
}

/// `g∞ = 1/(β − β∞)` and `h∞` at the nodes of the grid with step `h`.
pub fn human_capital_kernel<T: Real>(phi: &RadonMeasure<T>, params: &MarketParams<T>, h: T) -> Result<(T, GridFn<T>)> {
    let beta = params.beta()?;
    let beta_inf = beta_infinity(phi, params.r, params.delta);
    let gap = beta - beta_inf;
    if !(gap > T::zero()) {
        return Err(Error::assumption(
            Assumption::HumanCapitalWellPosed,
            format!("beta = {beta}, beta_inf = {beta_inf}"),
        ));
    }
    let g = T::one() / gap;
    let d = *phi.horizon();
    cells(d, h)?;
    let rate = params.discount();
    let kernel = GridFn::from_fn(d, h, |s| g * discounted_mass_left_of(phi, rate, s, h))?;
    Ok((g, kernel))
}

/// Where a state sits relative to the admissible half-space `{G ≥ 0}`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum WealthRegion {
    Interior,
    Boundary,
    Exterior,
}

/// Every scalar and function the closed-form solution needs for one kernel.
#[derive(Clone, Debug)]
pub struct PolicyConstants<T> {
    pub kappa: Vec<T>,
    pub beta: T,
    pub beta_inf: T,
    pub g_inf: T,
    pub h_inf: GridFn<T>,
    pub b: T,
    pub nu: T,
    pub f_inf: T,
    pub gamma: T,
}

impl<T: Real> PolicyConstants<T> {
    pub fn new(params: &MarketParams<T>, phi: &RadonMeasure<T>, h: T) -> Result<Self> {
        let (g_inf, h_inf) = human_capital_kernel(phi, params, h)?;
        Ok(Self {
            kappa: params.kappa()?,
            beta: params.beta()?,
            beta_inf: beta_infinity(phi, params.r, params.delta),
            g_inf,
            h_inf,
            b: params.b(),
            nu: params.merton_nu()?,
            f_inf: params.f_inf()?,
            gamma: params.gamma,
        })
    }

    pub fn min_h_inf(&self) -> T {
        self.h_inf.min()
    }

    /// Human capital `g∞ x₀ + ⟨h∞, x₁⟩`.
    pub fn human_capital(&self, x: &HistorySegment<T>) -> T {
        self.g_inf * x.x0() + x.pair(&self.h_inf)
    }

    /// `G(w, x) = w + g∞ x₀ + ⟨h∞, x₁⟩`.
    pub fn total_wealth(&self, w: T, x: &HistorySegment<T>) -> T {
        w + self.human_capital(x)
    }

    /// Tolerance band around `G = 0`.
    pub fn boundary_band(w: T, x: &HistorySegment<T>) -> T {
        T::lit(1e-9) * (T::one() + w.abs() + x.x0().abs())
    }

    pub fn classify(&self, w: T, x: &HistorySegment<T>) -> (T, WealthRegion) {
        let g = self.total_wealth(w, x);
        let band = Self::boundary_band(w, x);
        let region = if g > band {
            WealthRegion::Interior
        } else if g >= -band {
            WealthRegion::Boundary
        } else {
            WealthRegion::Exterior
        };
        (g, region)
    }
}

/// `G(w, x)` for the given constants.
pub fn total_wealth<T: Real>(w: T, x: &HistorySegment<T>, constants: &PolicyConstants<T>) -> T {
    constants.total_wealth(w, x)
}

/// Positive `λ` with `λ = β − e^{λd} ∫ e^{(r+δ)s} |φ|(ds)`: every solution of
/// the mean equation for `E[ξ(u) y(u)]` decays at least at this rate.
pub fn mean_decay_rate<T: Real>(phi: &RadonMeasure<T>, params: &MarketParams<T>) -> Result<Option<T>> {
    let beta = params.beta()?;
    let abs_mass = phi.positive_part().integrate_exp(params.discount()) + phi.negative_part().integrate_exp(params.discount());
    let d = *phi.horizon();
    let f = |l: T| l - beta + (l * d).exp() * abs_mass;
    if !(f(T::zero()) < T::zero()) {
        return Ok(None);
    }
    let (mut lo, mut hi) = (T::zero(), beta.max(T::lit(1e-12)));
    for _ in 0..200 {
        let mid = T::lit(0.5) * (lo + hi);
        if f(mid) < T::zero() {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(Some(lo))
}

#[derive(Clone, Debug)]
pub struct MarkovRepOptions<T> {
    /// Truncation horizon; `None` picks one from the decay rate.
    pub t_trunc: Option<T>,
    pub n_paths: usize,
    pub seed: u64,
    /// Standard error above which the check is inconclusive.
    pub max_stderr: Option<T>,
    pub scheme: Scheme,
}

#[derive(Clone, Debug)]
pub struct MarkovRepCheck<T> {
    /// Estimate of `E ∫₀^{T} ξ y du`, carrying the tail bound.
    pub estimate: Estimate<T>,
    pub closed_form: T,
    pub t_trunc: T,
    pub decay_rate: Option<T>,
    pub inconclusive: bool,
}

impl<T: Real> MarkovRepCheck<T> {
    pub fn passes(&self, k_stderr: T) -> bool {
        self.estimate.agrees_with(self.closed_form, k_stderr)
    }
}

/// Default truncation: the tail bound falls to about 0.05% of the leading term.
pub fn default_truncation<T: Real>(rate: T, d: T, h: T) -> T {
    let t = T::lit(2000.0).ln() / rate + d;
    (t / h).ceil() * h
}

/// Monte Carlo check of `g∞ x₀ + ⟨h∞, x₁⟩ = E ∫₀^∞ ξ(u) y(u) du`
/// with `ξ` the pre-death state-price density built from `Z` alone.
pub fn verify_markov_rep<T: Real>(
    x: &HistorySegment<T>,
    phi: &RadonMeasure<T>,
    params: &MarketParams<T>,
    opts: &MarkovRepOptions<T>,
) -> Result<MarkovRepCheck<T>> {
    let constants = PolicyConstants::new(params, phi, x.step())?;
    let closed_form = constants.human_capital(x);
    let decay_rate = mean_decay_rate(phi, params)?;
    let h = x.step();
    let d = x.horizon();
    let t_trunc = match (opts.t_trunc, decay_rate) {
        (Some(t), _) => t,
        (None, Some(rate)) => default_truncation(rate, d, h),
        (None, None) => return Err(Error::Domain("no decay rate available; set the truncation horizon".into())),
    };
    let plan = NoisePlan::new(h, t_trunc, opts.seed, params.corr.clone())?;
    let kernel = KernelProcess::Constant(phi.clone()).compile(h)?;
    let load = IncomeLoadings::new(params);
    let kappa = params.kappa()?;
    let xi_drift = -(params.discount() + T::lit(0.5) * norm_sq(&kappa)) * h;
    let window = x.cells() + 1;
    let steps = plan.steps;

    // Per-path integral plus the last window of ξy, summed over fixed chunks
    // so the reduction order does not depend on scheduling.
    const CHUNK: usize = 256;
    let n_chunks = opts.n_paths.div_ceil(CHUNK);
    let chunks = crate::mc::try_par_paths(n_chunks, |c| {
        let start = c as usize * CHUNK;
        let end = (start + CHUNK).min(opts.n_paths);
        let mut integrals = Vec::with_capacity(end - start);
        let mut tail = vec![T::zero(); window];
        for p in start..end {
            let noise = plan.generate(p as u64);
            let path = simulate_compiled(x, &kernel, &load, &noise, opts.scheme)?;
            let mut xi = T::one();
            let mut prev = path.values[0];
            let mut acc = T::zero();
            for k in 0..steps {
                let shock = -crate::linalg::dot(&kappa, noise.dz(k));
                xi = xi * (xi_drift + shock).exp();
                let cur = xi * path.values[k + 1];
                acc = acc + T::lit(0.5) * h * (prev + cur);
                prev = cur;
                if k + 1 + window > steps {
                    let slot = k + 1 + window - steps - 1;
                    tail[slot] = tail[slot] + cur;
                }
            }
            integrals.push(acc);
        }
        Ok((integrals, tail))
    })?;
    let mut integrals = Vec::with_capacity(opts.n_paths);
    let mut tails: Vec<Vec<T>> = vec![Vec::with_capacity(n_chunks); window];
    for (ints, tail) in chunks {
        integrals.extend(ints);
        for (slot, v) in tail.into_iter().enumerate() {
            tails[slot].push(v);
        }
    }
    let mut estimate = Estimate::from_samples(&integrals);
    let n = T::from_usize_lossy(opts.n_paths.max(1));
    let tail_bound = match decay_rate {
        Some(rate) if rate > T::zero() => {
            let m = tails
                .iter()
                .enumerate()
                .map(|(slot, sums)| {
                    let lag = T::from_usize_lossy(window - 1 - slot) * h;
                    (pairwise_sum(sums) / n).abs() * (-rate * lag).exp()
                })
                .fold(T::zero(), T::max);
            m / rate
        }
        _ => T::infinity(),
    };
    estimate = estimate.with_tail(tail_bound);
    let inconclusive = opts.max_stderr.is_some_and(|tol| estimate.stderr > tol);
    Ok(MarkovRepCheck { estimate, closed_form, t_trunc, decay_rate, inconclusive })
}
