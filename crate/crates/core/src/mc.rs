//! Monte Carlo plumbing: keyed random streams, correlated Brownian
//! increments, estimators and step-refinement studies.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::market::Correlation;
use crate::measure::grid::cells;
use crate::scalar::Real;

/// Stream purposes. New consumers get new constants so existing draws never move.
pub mod purpose {
    pub const MARKET: u64 = 1;
    pub const ORTHOGONAL: u64 = 2;
    pub const ADVERSARY: u64 = 3;
    pub const SCENARIO: u64 = 4;
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

/// Independent generator for `(seed, purpose, stream)`.
pub fn stream_rng(seed: u64, purpose: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(splitmix64(seed ^ splitmix64(purpose)));
    rng.set_stream(stream);
    rng
}

pub fn standard_normal<T: Real>(rng: &mut impl Rng) -> T {
    T::lit(rng.sample::<f64, _>(StandardNormal))
}

/// Brownian increments of one path.
#[derive(Clone, Debug, PartialEq)]
pub struct Noise<T> {
    n: usize,
    h: T,
    steps: usize,
    dz: Vec<T>,
    dz_star: Option<Vec<T>>,
}

impl<T: Real> Noise<T> {
    pub fn from_increments(n: usize, h: T, dz: Vec<T>, dz_star: Option<Vec<T>>) -> Result<Self> {
        if n == 0 || !dz.len().is_multiple_of(n) || dz_star.as_ref().is_some_and(|s| s.len() != dz.len()) {
            return Err(Error::Domain("increment arrays do not match the dimension".into()));
        }
        Ok(Self { n, h, steps: dz.len() / n, dz, dz_star })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn step(&self) -> T {
        self.h
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn horizon(&self) -> T {
        self.h * T::from_usize_lossy(self.steps)
    }

    /// Market increment `ΔZ_k`.
    #[inline]
    pub fn dz(&self, k: usize) -> &[T] {
        &self.dz[k * self.n..(k + 1) * self.n]
    }

    /// Orthogonal increment `ΔZ*_k`, absent under perfect correlation.
    #[inline]
    pub fn dz_star(&self, k: usize) -> Option<&[T]> {
        self.dz_star.as_ref().map(|s| &s[k * self.n..(k + 1) * self.n])
    }

    pub fn has_orthogonal(&self) -> bool {
        self.dz_star.is_some()
    }

    /// Income noise increment `C₁ΔZ_k + C₂ΔZ*_k`.
    pub fn income_increment(&self, corr: &Correlation<T>, k: usize) -> Vec<T> {
        let mut out = corr.c1().mul_vec(self.dz(k));
        if let Some(s) = self.dz_star(k) {
            for (o, v) in out.iter_mut().zip(corr.c2().mul_vec(s)) {
                *o = *o + v;
            }
        }
        out
    }

    /// `Z(t_k)` for `k = 0..=steps`, flattened.
    pub fn brownian(&self) -> Vec<T> {
        let mut z = vec![T::zero(); (self.steps + 1) * self.n];
        for k in 0..self.steps {
            for i in 0..self.n {
                z[(k + 1) * self.n + i] = z[k * self.n + i] + self.dz[k * self.n + i];
            }
        }
        z
    }

    /// Sums blocks of `factor` consecutive increments (step `factor · h`).
    pub fn coarsen(&self, factor: usize) -> Result<Self> {
        if factor == 0 || !self.steps.is_multiple_of(factor) {
            return Err(Error::Domain(format!("cannot coarsen {} steps by {factor}", self.steps)));
        }
        let sum = |v: &Vec<T>| {
            let mut out = vec![T::zero(); v.len() / factor];
            for k in 0..self.steps / factor {
                for j in 0..factor {
                    for i in 0..self.n {
                        out[k * self.n + i] = out[k * self.n + i] + v[(k * factor + j) * self.n + i];
                    }
                }
            }
            out
        };
        Ok(Self {
            n: self.n,
            h: self.h * T::from_usize_lossy(factor),
            steps: self.steps / factor,
            dz: sum(&self.dz),
            dz_star: self.dz_star.as_ref().map(sum),
        })
    }
}

/// Recipe for the increments of every path of a run.
#[derive(Clone, Debug)]
pub struct NoisePlan<T> {
    pub n: usize,
    pub h: T,
    pub steps: usize,
    pub seed: u64,
    pub corr: Correlation<T>,
}

impl<T: Real> NoisePlan<T> {
    pub fn new(h: T, horizon: T, seed: u64, corr: Correlation<T>) -> Result<Self> {
        let steps = cells(horizon, h)?;
        Ok(Self { n: corr.dim(), h, steps, seed, corr })
    }

    /// Same draws at a step `factor` times finer: one fine draw per fine step.
    pub fn refined(&self, factor: usize) -> Self {
        Self { h: self.h / T::from_usize_lossy(factor), steps: self.steps * factor, ..self.clone() }
    }

    pub fn generate(&self, path: u64) -> Noise<T> {
        let sd = self.h.sqrt();
        let draw = |purpose| {
            let mut rng = stream_rng(self.seed, purpose, path);
            (0..self.steps * self.n).map(|_| sd * standard_normal::<T>(&mut rng)).collect::<Vec<T>>()
        };
        let dz = draw(purpose::MARKET);
        let dz_star = (!self.corr.is_complete()).then(|| draw(purpose::ORTHOGONAL));
        Noise { n: self.n, h: self.h, steps: self.steps, dz, dz_star }
    }
}

/// Sum with a fixed binary reduction tree, independent of scheduling.
pub fn pairwise_sum<T: Real>(v: &[T]) -> T {
    if v.len() <= 8 {
        return v.iter().fold(T::zero(), |a, &b| a + b);
    }
    let mid = v.len() / 2;
    pairwise_sum(&v[..mid]) + pairwise_sum(&v[mid..])
}

/// Runs `f` for each path in parallel; results come back in path order.
pub fn par_paths<R: Send>(n_paths: usize, f: impl Fn(u64) -> R + Sync + Send) -> Vec<R> {
    (0..n_paths as u64).into_par_iter().map(f).collect()
}

/// Like [`par_paths`] but stops at the first error in path order.
pub fn try_par_paths<R: Send>(n_paths: usize, f: impl Fn(u64) -> Result<R> + Sync + Send) -> Result<Vec<R>> {
    par_paths(n_paths, f).into_iter().collect()
}

/// Sample mean with its standard error.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Estimate<T> {
    pub mean: T,
    pub stderr: T,
    pub n_paths: usize,
    pub tail_bound: Option<T>,
}

impl<T: Real> Estimate<T> {
    pub fn from_samples(samples: &[T]) -> Self {
        let n = samples.len();
        let nf = T::from_usize_lossy(n.max(1));
        let mean = pairwise_sum(samples) / nf;
        let dev: Vec<T> = samples.iter().map(|&x| (x - mean) * (x - mean)).collect();
        let var = if n > 1 { pairwise_sum(&dev) / T::from_usize_lossy(n - 1) } else { T::zero() };
        Self { mean, stderr: (var / nf).sqrt(), n_paths: n, tail_bound: None }
    }

    pub fn with_tail(mut self, bound: T) -> Self {
        self.tail_bound = Some(bound);
        self
    }

    /// Allowed deviation: `k · stderr` plus the tail bound.
    pub fn tolerance(&self, k: T) -> T {
        k * self.stderr + self.tail_bound.unwrap_or_else(T::zero)
    }

    pub fn agrees_with(&self, target: T, k: T) -> bool {
        (self.mean - target).abs() <= self.tolerance(k)
    }
}

/// Errors at successive step sizes and the ratios between neighbours.
#[derive(Clone, Debug, PartialEq)]
pub struct ConvergenceTable<T> {
    pub steps: Vec<T>,
    pub gaps: Vec<T>,
    /// `gaps[i] / gaps[i + 1]`.
    pub ratios: Vec<T>,
    /// False when some refinement failed to shrink the gap.
    pub monotone: bool,
}

impl<T: Real> ConvergenceTable<T> {
    pub fn from_gaps(steps: Vec<T>, gaps: Vec<T>) -> Self {
        let ratios: Vec<T> = gaps.windows(2).map(|w| w[0] / w[1]).collect();
        let monotone = gaps.windows(2).all(|w| w[1] < w[0]);
        Self { steps, gaps, ratios, monotone }
    }
}

/// Runs `runner` on the finest noise of each path and on its coarsenings by
/// `factors` (e.g. `[8, 4, 2]` for `h, h/2, h/4` against a reference at
/// `h/8`); gaps are path-averaged sup distances on the coarse nodes.
pub fn convergence_study<T: Real>(
    finest: &NoisePlan<T>,
    n_paths: usize,
    factors: &[usize],
    runner: impl Fn(&Noise<T>) -> Result<Vec<T>> + Sync + Send,
) -> Result<ConvergenceTable<T>> {
    let per_path = try_par_paths(n_paths, |p| {
        let fine = finest.generate(p);
        let reference = runner(&fine)?;
        factors
            .iter()
            .map(|&f| {
                let coarse = runner(&fine.coarsen(f)?)?;
                Ok(coarse.iter().enumerate().map(|(k, &v)| (v - reference[k * f]).abs()).fold(T::zero(), T::max))
            })
            .collect::<Result<Vec<T>>>()
    })?;
    Ok(average_table(finest, factors, &per_path))
}

/// Path-averaged scalar error of `error` at the coarsenings `factors` of the
/// finest plan (factor 1 is the finest step itself).
pub fn error_study<T: Real>(
    finest: &NoisePlan<T>,
    n_paths: usize,
    factors: &[usize],
    error: impl Fn(&Noise<T>) -> Result<T> + Sync + Send,
) -> Result<ConvergenceTable<T>> {
    let per_path = try_par_paths(n_paths, |p| {
        let fine = finest.generate(p);
        factors.iter().map(|&f| error(&fine.coarsen(f)?)).collect::<Result<Vec<T>>>()
    })?;
    Ok(average_table(finest, factors, &per_path))
}

fn average_table<T: Real>(finest: &NoisePlan<T>, factors: &[usize], per_path: &[Vec<T>]) -> ConvergenceTable<T> {
    let steps = factors.iter().map(|&f| finest.h * T::from_usize_lossy(f)).collect();
    let gaps = (0..factors.len())
        .map(|i| {
            let col: Vec<T> = per_path.iter().map(|g| g[i]).collect();
            pairwise_sum(&col) / T::from_usize_lossy(col.len().max(1))
        })
        .collect();
    ConvergenceTable::from_gaps(steps, gaps)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::Matrix;

    #[test]
    fn streams_are_reproducible_and_distinct() {
        let a: Vec<u64> = (0..4).map(|_| stream_rng(7, purpose::MARKET, 3).random()).collect();
        let b: Vec<u64> = (0..4).map(|_| stream_rng(7, purpose::MARKET, 3).random()).collect();
        assert_eq!(a, b);
        let c: u64 = stream_rng(7, purpose::MARKET, 4).random();
        let d: u64 = stream_rng(7, purpose::ORTHOGONAL, 3).random();
        assert_ne!(a[0], c);
        assert_ne!(a[0], d);
    }

    #[test]
    fn perfect_correlation_draws_no_orthogonal_noise() {
        let plan = NoisePlan::new(0.01, 1.0, 1, Correlation::perfect(2)).unwrap();
        let noise = plan.generate(0);
        assert!(!noise.has_orthogonal());
        let corr = Correlation::perfect(2);
        assert_eq!(noise.income_increment(&corr, 5), noise.dz(5));
    }

    #[test]
    fn coarsening_preserves_brownian_endpoints() {
        let plan = NoisePlan::<f64>::new(0.01, 1.0, 2, Correlation::diagonal(&[0.5]).unwrap()).unwrap();
        let fine = plan.generate(9);
        let coarse = fine.coarsen(4).unwrap();
        assert_eq!(coarse.steps(), 25);
        let zf = fine.brownian();
        let zc = coarse.brownian();
        assert!((zf[100] - zc[25]).abs() < 1e-14);
        assert!(fine.coarsen(3).is_err());
    }

    #[test]
    fn refined_plan_has_matching_horizon() {
        let plan = NoisePlan::new(0.01, 1.0, 2, Correlation::<f64>::perfect(1)).unwrap();
        let fine = plan.refined(4);
        assert_eq!(fine.steps, 400);
        assert!((fine.h * 400.0 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn pairwise_sum_matches_naive_on_integers() {
        let v: Vec<f64> = (0..1000).map(|i| i as f64).collect();
        assert_eq!(pairwise_sum(&v), 499_500.0);
    }

    #[test]
    fn estimate_of_constant_has_zero_stderr() {
        let e = Estimate::from_samples(&[2.0; 10]);
        assert_eq!((e.mean, e.stderr), (2.0, 0.0));
        assert!(e.agrees_with(2.0, 3.0));
        let e = Estimate::<f64>::from_samples(&[1.0, 3.0]);
        assert!((e.stderr - 1.0).abs() < 1e-15);
    }

    #[test]
    fn lower_triangular_factor_noise() {
        let c1 = Matrix::<f64>::from_rows(&[vec![0.6, 0.0], vec![0.0, 0.6]]).unwrap();
        let c2 = Matrix::diagonal(&[0.8, 0.8]);
        let corr = Correlation::new(c1, c2).unwrap();
        let plan = NoisePlan::new(0.5, 1.0, 3, corr.clone()).unwrap();
        let noise = plan.generate(0);
        let zy = noise.income_increment(&corr, 0);
        let expect = 0.6 * noise.dz(0)[0] + 0.8 * noise.dz_star(0).unwrap()[0];
        assert!((zy[0] - expect).abs() < 1e-15);
    }
}
