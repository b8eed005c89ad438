//! Labor income as a linear stochastic delay equation
//!
//! `dy(t) = [μ_y y(t) + ∫ y(t+s) φ(t)(ds)] dt + y(t) σ_yᵀ dZ^y(t)`
//!
//! with a simulator, two independent reconstructions (variation of
//! constants and a Picard fixed point) and the positivity witness.

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::linalg::{dot, norm_sq};
use crate::market::MarketParams;
use crate::mc::{Noise, NoisePlan};
use crate::measure::grid::cells;
use crate::measure::{window_cumulative, CompiledKernel, GridFn, KernelProcess, PathContext, RadonMeasure};
use crate::scalar::Real;

/// Time-stepping scheme for the income equation.
///
/// Income noise is a scalar multiple of `y`, so the Milstein correction
/// needs no Lévy areas and gives strong order one.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Scheme {
    EulerMaruyama,
    #[default]
    Milstein,
}

/// Initial datum `(x₀, x₁)` sampled on `{-d, ..., -h, 0}`; the last node is `x₀`.
#[derive(Clone, Debug, PartialEq)]
pub struct HistorySegment<T> {
    grid: GridFn<T>,
}

impl<T: Real> HistorySegment<T> {
    pub fn new(d: T, h: T, values: Vec<T>) -> Result<Self> {
        let grid = GridFn::new(d, h, values)?;
        if grid.values().iter().any(|v| !v.is_finite()) {
            return Err(Error::Domain("history contains non-finite values".into()));
        }
        Ok(Self { grid })
    }

    pub fn from_fn(d: T, h: T, f: impl Fn(T) -> T) -> Result<Self> {
        Self::new(d, h, GridFn::from_fn(d, h, f)?.values().to_vec())
    }

    pub fn constant(d: T, h: T, x0: T) -> Result<Self> {
        Self::from_fn(d, h, |_| x0)
    }

    /// Linear from `start` at `-d` to `x0` at `0`.
    pub fn linear(d: T, h: T, start: T, x0: T) -> Result<Self> {
        Self::from_fn(d, h, |s| x0 + (x0 - start) * s / d)
    }

    /// `base` plus a tent of height `peak` and half-width `width` centred at `center`.
    pub fn tent(d: T, h: T, base: T, center: T, width: T, peak: T) -> Result<Self> {
        Self::from_fn(d, h, |s| base + peak * (T::one() - (s - center).abs() / width).max(T::zero()))
    }

    pub fn grid(&self) -> &GridFn<T> {
        &self.grid
    }

    pub fn values(&self) -> &[T] {
        self.grid.values()
    }

    pub fn x0(&self) -> T {
        *self.grid.values().last().unwrap()
    }

    pub fn step(&self) -> T {
        self.grid.step()
    }

    pub fn horizon(&self) -> T {
        self.grid.horizon()
    }

    pub fn cells(&self) -> usize {
        self.grid.cells()
    }

    pub fn scaled(&self, factor: T) -> Self {
        Self { grid: GridFn::new(self.horizon(), self.step(), self.values().iter().map(|&v| v * factor).collect()).unwrap() }
    }

    pub fn is_strictly_positive(&self) -> bool {
        self.values().iter().all(|&v| v > T::zero())
    }

    /// `⟨g, x₁⟩` by the trapezoid rule.
    pub fn pair(&self, g: &GridFn<T>) -> T {
        g.inner(self.values())
    }
}

/// Simulated income on `{0, h, ..., T}` together with the noise that drove it.
#[derive(Clone, Debug)]
pub struct IncomePath<T> {
    pub h: T,
    pub values: Vec<T>,
    pub noise: Noise<T>,
}

impl<T: Real> IncomePath<T> {
    pub fn time(&self, k: usize) -> T {
        self.h * T::from_usize_lossy(k)
    }

    pub fn horizon(&self) -> T {
        self.time(self.values.len() - 1)
    }

    pub fn min(&self) -> T {
        self.values.iter().copied().fold(T::infinity(), T::min)
    }

    /// `t, y, dZ_1..dZ_n[, dZ*_1..dZ*_n]`; increments are those of the step
    /// starting at `t` (empty on the last row).
    pub fn to_csv(&self) -> String {
        let n = self.noise.dim();
        let mut out = String::from("t,y");
        for i in 1..=n {
            let _ = write!(out, ",dZ{i}");
        }
        if self.noise.has_orthogonal() {
            for i in 1..=n {
                let _ = write!(out, ",dZstar{i}");
            }
        }
        out.push('\n');
        for (k, y) in self.values.iter().enumerate() {
            let _ = write!(out, "{},{}", self.time(k), y);
            let width = if self.noise.has_orthogonal() { 2 * n } else { n };
            if k < self.noise.steps() {
                for v in self.noise.dz(k) {
                    let _ = write!(out, ",{v}");
                }
                if let Some(s) = self.noise.dz_star(k) {
                    for v in s {
                        let _ = write!(out, ",{v}");
                    }
                }
            } else {
                out.push_str(&",".repeat(width));
            }
            out.push('\n');
        }
        out
    }
}

/// Income noise loadings derived from the market.
#[derive(Clone, Debug)]
pub(crate) struct IncomeLoadings<T> {
    pub mu_y: T,
    pub a1: Vec<T>,
    pub a2: Vec<T>,
    pub q: T,
}

impl<T: Real> IncomeLoadings<T> {
    pub fn new(params: &MarketParams<T>) -> Self {
        let a1 = params.income_market_loading();
        let a2 = params.income_orthogonal_loading();
        let q = norm_sq(&a1) + norm_sq(&a2);
        Self { mu_y: params.mu_y, a1, a2, q }
    }

    /// `σ_yᵀ ΔZ^y_k` split as `a₁ᵀΔZ + a₂ᵀΔZ*`.
    #[inline]
    pub fn shock(&self, noise: &Noise<T>, k: usize) -> T {
        let mut xi = dot(&self.a1, noise.dz(k));
        if let Some(s) = noise.dz_star(k) {
            xi = xi + dot(&self.a2, s);
        }
        xi
    }

    /// Multiplier of `y_k` in one step, apart from the delay drift.
    #[inline]
    pub fn growth(&self, xi: T, h: T, scheme: Scheme) -> T {
        let base = T::one() + self.mu_y * h + xi;
        match scheme {
            Scheme::EulerMaruyama => base,
            Scheme::Milstein => base + T::lit(0.5) * (xi * xi - self.q * h),
        }
    }
}

/// Rolling path buffer: history nodes followed by the simulated values, with
/// running trapezoid integrals so every window integral is `O(kernel size)`.
#[derive(Clone, Debug)]
pub(crate) struct PathBuffer<T> {
    cells: usize,
    h: T,
    values: Vec<T>,
    cum: Vec<T>,
}

impl<T: Real> PathBuffer<T> {
    pub fn new(x: &HistorySegment<T>, capacity: usize) -> Self {
        let mut values = Vec::with_capacity(x.values().len() + capacity);
        values.extend_from_slice(x.values());
        let mut cum = Vec::with_capacity(values.capacity());
        cum.extend(window_cumulative(&values, x.step()));
        Self { cells: x.cells(), h: x.step(), values, cum }
    }

    pub fn push(&mut self, y: T) {
        let last = *self.values.last().unwrap();
        let acc = *self.cum.last().unwrap() + self.h * T::lit(0.5) * (last + y);
        self.values.push(y);
        self.cum.push(acc);
    }

    /// Window `y(t_k + s)`, `s ∈ {-d, ..., 0}`.
    #[inline]
    pub fn window(&self, k: usize) -> &[T] {
        &self.values[k..k + self.cells + 1]
    }

    #[inline]
    pub fn window_cum(&self, k: usize) -> &[T] {
        &self.cum[k..k + self.cells + 1]
    }

    #[inline]
    pub fn delay_drift(&self, kernel: &CompiledKernel<T>, ctx: &PathContext<'_, T>, k: usize) -> Result<T> {
        kernel.integrate(ctx, self.window(k), self.window_cum(k))
    }

    pub fn current(&self) -> T {
        *self.values.last().unwrap()
    }

    /// Values from `t = 0` on.
    pub fn simulated(&self) -> &[T] {
        &self.values[self.cells..]
    }
}

/// Running Brownian value `Z(t_k)` for path-dependent kernels.
#[derive(Clone, Debug)]
pub(crate) struct RunningBrownian<T> {
    pub z: Vec<T>,
}

impl<T: Real> RunningBrownian<T> {
    pub fn new(n: usize) -> Self {
        Self { z: vec![T::zero(); n] }
    }

    pub fn advance(&mut self, dz: &[T]) {
        for (z, &d) in self.z.iter_mut().zip(dz) {
            *z = *z + d;
        }
    }
}

fn check_grid<T: Real>(x: &HistorySegment<T>, kernel: &KernelProcess<T>, noise: &Noise<T>) -> Result<()> {
    let d = x.horizon();
    if (kernel.horizon() - d).abs() > T::lit(1e-12) * d {
        return Err(Error::Domain(format!("kernel window {} differs from history window {d}", kernel.horizon())));
    }
    if (noise.step() - x.step()).abs() > T::lit(1e-9) * x.step() {
        return Err(Error::Domain(format!("noise step {} differs from history step {}", noise.step(), x.step())));
    }
    Ok(())
}

/// Simulates income along the given increments.
pub fn simulate_income<T: Real>(
    x: &HistorySegment<T>,
    kernel: &KernelProcess<T>,
    params: &MarketParams<T>,
    noise: &Noise<T>,
    scheme: Scheme,
) -> Result<IncomePath<T>> {
    check_grid(x, kernel, noise)?;
    let compiled = kernel.compile(x.step())?;
    simulate_compiled(x, &compiled, &IncomeLoadings::new(params), noise, scheme)
}

pub(crate) fn simulate_compiled<T: Real>(
    x: &HistorySegment<T>,
    kernel: &CompiledKernel<T>,
    load: &IncomeLoadings<T>,
    noise: &Noise<T>,
    scheme: Scheme,
) -> Result<IncomePath<T>> {
    let h = x.step();
    let mut buf = PathBuffer::new(x, noise.steps());
    let mut z = RunningBrownian::new(noise.dim());
    for k in 0..noise.steps() {
        let t = h * T::from_usize_lossy(k);
        let y = buf.current();
        let drift = buf.delay_drift(kernel, &PathContext::at(t, &z.z), k)?;
        let xi = load.shock(noise, k);
        let next = y * load.growth(xi, h, scheme) + drift * h;
        if !next.is_finite() {
            return Err(Error::NonFinite { step: k + 1, t: (t + h).to_f64_lossy() });
        }
        buf.push(next);
        z.advance(noise.dz(k));
    }
    Ok(IncomePath { h, values: buf.simulated().to_vec(), noise: noise.clone() })
}

/// Convenience: draws path `path` of a fresh plan and simulates it.
pub fn simulate_income_seeded<T: Real>(
    x: &HistorySegment<T>,
    kernel: &KernelProcess<T>,
    params: &MarketParams<T>,
    horizon: T,
    seed: u64,
    path: u64,
) -> Result<IncomePath<T>> {
    let plan = NoisePlan::new(x.step(), horizon, seed, params.corr.clone())?;
    simulate_income(x, kernel, params, &plan.generate(path), Scheme::default())
}

/// Rebuilds `y = E (x₀ + I)` from the drift realized along `income`, with
/// `E(t) = exp((μ_y − |σ_y|²/2) t + σ_yᵀ Z^y(t))` and
/// `I(t) = ∫₀ᵗ E(u)⁻¹ ∫ y(u+s) φ(u)(ds) du` (trapezoid).
pub fn feedback_representation<T: Real>(
    x: &HistorySegment<T>,
    income: &IncomePath<T>,
    kernel: &KernelProcess<T>,
    params: &MarketParams<T>,
) -> Result<IncomePath<T>> {
    check_grid(x, kernel, &income.noise)?;
    let compiled = kernel.compile(x.step())?;
    let load = IncomeLoadings::new(params);
    let h = income.h;
    let steps = income.noise.steps();
    let mut buf = PathBuffer::new(x, steps);
    for &y in &income.values[1..] {
        buf.push(y);
    }
    let mut z = RunningBrownian::new(income.noise.dim());
    let mut log_e = T::zero();
    let rate = load.mu_y - T::lit(0.5) * load.q;
    let mut integrand_prev = T::zero();
    let mut integral = T::zero();
    let mut out = Vec::with_capacity(steps + 1);
    for k in 0..=steps {
        let t = h * T::from_usize_lossy(k);
        let drift = buf.delay_drift(&compiled, &PathContext::at(t, &z.z), k)?;
        let e = (rate * t + log_e).exp();
        let integrand = drift / e;
        if k > 0 {
            integral = integral + T::lit(0.5) * h * (integrand_prev + integrand);
        }
        integrand_prev = integrand;
        out.push(e * (x.x0() + integral));
        if k < steps {
            log_e = log_e + load.shock(&income.noise, k);
            z.advance(income.noise.dz(k));
        }
    }
    Ok(IncomePath { h, values: out, noise: income.noise.clone() })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PicardOptions<T> {
    /// Weight `α` of the norm `sup_t e^{-αt} |y(t)|`.
    pub alpha: T,
    /// Stop once the sup-norm change falls below this.
    pub tolerance: T,
    pub max_iterations: usize,
    pub scheme: Scheme,
}

impl<T: Real> Default for PicardOptions<T> {
    fn default() -> Self {
        Self { alpha: T::lit(10.0), tolerance: T::lit(1e-12), max_iterations: 2000, scheme: Scheme::default() }
    }
}

#[derive(Clone, Debug)]
pub struct PicardSolution<T> {
    pub path: IncomePath<T>,
    pub iterations: usize,
    /// Largest ratio of successive α-norm changes over the first iterations.
    pub contraction_ratio: T,
    /// α-norm of each successive change.
    pub changes: Vec<T>,
}

/// Fixed point of the discretized integral map
/// `F(y)(t) = x₀ + ∫₀ᵗ [μ_y y + ∫ y(u+s) φ(u)(ds)] du + ∫₀ᵗ y σ_yᵀ dZ^y`
/// (trapezoid in `du`, Itô sums with the Milstein correction in `dZ^y`),
/// iterated from `y ≡ x₀`.
pub fn picard_solve<T: Real>(
    x: &HistorySegment<T>,
    kernel: &KernelProcess<T>,
    params: &MarketParams<T>,
    noise: &Noise<T>,
    opts: &PicardOptions<T>,
) -> Result<PicardSolution<T>> {
    check_grid(x, kernel, noise)?;
    let compiled = kernel.compile(x.step())?;
    let load = IncomeLoadings::new(params);
    let h = x.step();
    let steps = noise.steps();
    let half_h = T::lit(0.5) * h;
    let times: Vec<T> = (0..=steps).map(|k| h * T::from_usize_lossy(k)).collect();
    let weights: Vec<T> = times.iter().map(|&t| (-opts.alpha * t).exp()).collect();
    let stoch: Vec<T> = (0..steps)
        .map(|k| {
            let xi = load.shock(noise, k);
            load.growth(xi, h, opts.scheme) - T::one() - load.mu_y * h
        })
        .collect();
    let brownian = noise.brownian();
    let n = noise.dim();

    let mut y = vec![x.x0(); steps + 1];
    let mut changes = Vec::new();
    for it in 1..=opts.max_iterations {
        let mut buf = PathBuffer::new(x, steps);
        for &v in &y[1..] {
            buf.push(v);
        }
        let drift: Vec<T> = (0..=steps)
            .map(|k| {
                let ctx = PathContext::at(times[k], &brownian[k * n..(k + 1) * n]);
                Ok(load.mu_y * y[k] + buf.delay_drift(&compiled, &ctx, k)?)
            })
            .collect::<Result<_>>()?;
        let mut next = Vec::with_capacity(steps + 1);
        let mut acc = x.x0();
        next.push(acc);
        for k in 0..steps {
            acc = acc + half_h * (drift[k] + drift[k + 1]) + y[k] * stoch[k];
            next.push(acc);
        }
        if next.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite { step: it, t: f64::NAN });
        }
        let mut sup = T::zero();
        let mut weighted = T::zero();
        for k in 0..=steps {
            let diff = (next[k] - y[k]).abs();
            sup = sup.max(diff);
            weighted = weighted.max(weights[k] * diff);
        }
        changes.push(weighted);
        y = next;
        if sup < opts.tolerance {
            return Ok(PicardSolution {
                path: IncomePath { h, values: y, noise: noise.clone() },
                iterations: it,
                contraction_ratio: early_ratio(&changes),
                changes,
            });
        }
    }
    Err(Error::NoConvergence { iterations: opts.max_iterations, ratio: early_ratio(&changes).to_f64_lossy() })
}

fn early_ratio<T: Real>(changes: &[T]) -> T {
    changes
        .windows(2)
        .take(3)
        .filter(|w| w[0] > T::zero())
        .map(|w| w[1] / w[0])
        .fold(T::zero(), T::max)
}

/// Initial datum that drives income negative under a signed kernel.
#[derive(Clone, Debug)]
pub struct PositivityWitness<T> {
    pub x0: T,
    /// Continuous bump, equal to 1 on the support of the negative part.
    pub bump: GridFn<T>,
    /// History with the bump on `[-d, 0)` and `x₀` at `0`.
    pub history: HistorySegment<T>,
    /// `∫ bump dφ` on the grid.
    pub integral: T,
    /// Mass of the negative part.
    pub negative_mass: T,
    /// Width of the linear ramps.
    pub epsilon: T,
}

fn distance_to<T: Real>(s: T, points: &[T], intervals: &[(T, T)]) -> T {
    let p = points.iter().map(|&p| (s - p).abs()).fold(T::infinity(), T::min);
    intervals
        .iter()
        .map(|&(a, b)| if s < a { a - s } else if s > b { s - b } else { T::zero() })
        .fold(p, T::min)
}

/// Bump construction: plateau 1 on the support of `φ⁻`, linear ramps of
/// width `ε`, notches at the positive atoms; `ε` shrinks in steps of `h`
/// until `∫ bump dφ < −m/2`. Returns `None` when `φ ≥ 0`.
pub fn positivity_witness<T: Real>(phi: &RadonMeasure<T>, h: T, c: T) -> Result<Option<PositivityWitness<T>>> {
    let split = phi.hahn_jordan();
    if split.negative_mass <= T::zero() {
        return Ok(None);
    }
    let d = *phi.horizon();
    let m = split.negative_mass;
    let n = cells(d, h)?;
    let support = split.negative.support();
    let positive_atoms: Vec<T> = split.positive.atoms().iter().map(|&(s, _)| s).collect();
    let build = |eps: T| -> Result<GridFn<T>> {
        GridFn::from_fn(d, h, |s| {
            let mut v = (T::one() - distance_to(s, &support.points, &support.intervals) / eps).max(T::zero());
            for &a in &positive_atoms {
                v = v * ((s - a).abs() / eps).min(T::one());
            }
            v
        })
    };
    let mut j = (n / 4).max(1);
    let (epsilon, bump, integral) = loop {
        let eps = h * T::from_usize_lossy(j);
        let bump = build(eps)?;
        let integral = phi.integrate(&bump)?;
        if integral < -m * T::lit(0.5) || j == 1 {
            break (eps, bump, integral);
        }
        j = (j / 2).max(1);
    };
    let x0 = c * m / T::lit(8.0);
    let mut values = bump.values().to_vec();
    *values.last_mut().unwrap() = x0;
    let history = HistorySegment::new(d, h, values)?;
    Ok(Some(PositivityWitness { x0, bump, history, integral, negative_mass: m, epsilon }))
}
