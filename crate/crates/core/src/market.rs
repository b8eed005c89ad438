//! Financial market, income dynamics and preferences.

use crate::error::{Assumption, Error, Result};
use crate::linalg::{dot, norm_sq, Matrix};
use crate::scalar::Real;

/// Factors `(C₁, C₂)` with `Z^y = C₁ Z + C₂ Z*`.
#[derive(Clone, Debug, PartialEq)]
pub struct Correlation<T> {
    c1: Matrix<T>,
    c2: Matrix<T>,
}

fn identity_tolerance<T: Real>() -> T {
    T::lit(1e-12).max(T::epsilon() * T::lit(100.0))
}

impl<T: Real> Correlation<T> {
    /// Validates `C₁ᵀC₁ + C₂ᵀC₂ = I` and `C₁C₁ᵀ + C₂C₂ᵀ = I` (the latter makes
    /// `Z^y` a Brownian motion) and lower-triangularity.
    pub fn new(c1: Matrix<T>, c2: Matrix<T>) -> Result<Self> {
        let n = c1.dim();
        if c2.dim() != n {
            return Err(Error::Domain(format!("correlation factors have sizes {n} and {}", c2.dim())));
        }
        if !c1.is_lower_triangular() || !c2.is_lower_triangular() {
            return Err(Error::Domain("correlation factors must be lower triangular".into()));
        }
        let id = Matrix::identity(n);
        let tol = identity_tolerance::<T>();
        let gram = |a: &Matrix<T>, b: &Matrix<T>| {
            let s = a.transpose().matmul(a);
            let t = b.transpose().matmul(b);
            let mut out = s.clone();
            for i in 0..n {
                for j in 0..n {
                    out[(i, j)] = s[(i, j)] + t[(i, j)];
                }
            }
            out
        };
        let err = gram(&c1, &c2).max_abs_diff(&id);
        if !(err <= tol) {
            return Err(Error::Domain(format!("C1'C1 + C2'C2 differs from the identity by {err}")));
        }
        let err = gram(&c1.transpose(), &c2.transpose()).max_abs_diff(&id);
        if !(err <= tol) {
            return Err(Error::Domain(format!("C1 C1' + C2 C2' differs from the identity by {err}")));
        }
        Ok(Self { c1, c2 })
    }

    /// `C₁ = I, C₂ = 0`.
    pub fn perfect(n: usize) -> Self {
        Self { c1: Matrix::identity(n), c2: Matrix::zeros(n) }
    }

    /// `C₁ = 0, C₂ = I`.
    pub fn null(n: usize) -> Self {
        Self { c1: Matrix::zeros(n), c2: Matrix::identity(n) }
    }

    /// `C₁ = diag(ρᵢ)`, `C₂ = diag(√(1 − ρᵢ²))`.
    pub fn diagonal(rho: &[T]) -> Result<Self> {
        if let Some(r) = rho.iter().find(|r| !(r.abs() <= T::one())) {
            return Err(Error::Domain(format!("correlation {r} outside [-1, 1]")));
        }
        let c2: Vec<T> = rho.iter().map(|&r| (T::one() - r * r).max(T::zero()).sqrt()).collect();
        Self::new(Matrix::diagonal(rho), Matrix::diagonal(&c2))
    }

    pub fn c1(&self) -> &Matrix<T> {
        &self.c1
    }

    pub fn c2(&self) -> &Matrix<T> {
        &self.c2
    }

    pub fn dim(&self) -> usize {
        self.c1.dim()
    }

    /// True when income carries no risk orthogonal to the market.
    pub fn is_complete(&self) -> bool {
        self.c2.is_zero()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MarketParams<T> {
    pub r: T,
    /// Mortality intensity.
    pub delta: T,
    /// Impatience.
    pub rho: T,
    /// Relative risk aversion, `γ > 0`, `γ ≠ 1`.
    pub gamma: T,
    /// Bequest weight.
    pub k: T,
    pub mu: Vec<T>,
    pub sigma: Matrix<T>,
    pub mu_y: T,
    pub sigma_y: Vec<T>,
    pub corr: Correlation<T>,
}

impl<T: Real> MarketParams<T> {
    /// Checks every standing restriction, including Merton well-posedness.
    pub fn validated(self) -> Result<Self> {
        let positive = [("r", self.r), ("delta", self.delta), ("rho", self.rho), ("gamma", self.gamma), ("k", self.k)];
        for (name, v) in positive {
            if !(v > T::zero()) || !v.is_finite() {
                return Err(Error::Domain(format!("{name} must be positive and finite, got {v}")));
            }
        }
        if (self.gamma - T::one()).abs() < T::lit(1e-12) {
            return Err(Error::Domain("gamma = 1 (log utility) is not supported".into()));
        }
        let n = self.sigma.dim();
        if self.mu.len() != n || self.sigma_y.len() != n || self.corr.dim() != n {
            return Err(Error::Domain(format!(
                "dimension mismatch: sigma is {n}x{n}, mu has {}, sigma_y has {}, correlation is {}",
                self.mu.len(),
                self.sigma_y.len(),
                self.corr.dim()
            )));
        }
        if !self.mu_y.is_finite() || self.mu.iter().chain(&self.sigma_y).any(|v| !v.is_finite()) {
            return Err(Error::Domain("non-finite drift or volatility".into()));
        }
        let cond = self.sigma.condition_number();
        if !(cond < T::one() / (T::epsilon() * T::lit(1e4))) {
            return Err(Error::Singular(format!("sigma is (numerically) singular, condition number {cond}")));
        }
        self.merton_nu()?;
        Ok(self)
    }

    pub fn n(&self) -> usize {
        self.mu.len()
    }

    /// `κ = σ⁻¹(μ − r𝟏)`.
    pub fn kappa(&self) -> Result<Vec<T>> {
        let excess: Vec<T> = self.mu.iter().map(|&m| m - self.r).collect();
        self.sigma.solve(&excess)
    }

    /// Exposure of income to the market noise, `C₁ᵀσ_y`.
    pub fn income_market_loading(&self) -> Vec<T> {
        self.corr.c1.transpose().mul_vec(&self.sigma_y)
    }

    /// Exposure of income to the orthogonal noise, `C₂ᵀσ_y`.
    pub fn income_orthogonal_loading(&self) -> Vec<T> {
        self.corr.c2.transpose().mul_vec(&self.sigma_y)
    }

    /// Instantaneous income variance rate `|σ_y|²`.
    pub fn income_variance(&self) -> T {
        norm_sq(&self.sigma_y)
    }

    /// Effective income discount `β = r + δ − μ_y + (C₁ᵀσ_y)ᵀκ`.
    pub fn beta(&self) -> Result<T> {
        Ok(self.r + self.delta - self.mu_y + dot(&self.income_market_loading(), &self.kappa()?))
    }

    /// Discount rate of the death-adjusted bond, `r + δ`.
    pub fn discount(&self) -> T {
        self.r + self.delta
    }

    /// `b = 1 − 1/γ`.
    pub fn b(&self) -> T {
        T::one() - T::one() / self.gamma
    }

    /// `ν = γ / (ρ + δ − (1 − γ)(r + δ + |κ|²/(2γ)))`.
    pub fn merton_nu(&self) -> Result<T> {
        let kk = norm_sq(&self.kappa()?);
        let two = T::lit(2.0);
        let den = self.rho + self.delta - (T::one() - self.gamma) * (self.r + self.delta + kk / (two * self.gamma));
        if !(den > T::zero()) {
            return Err(Error::assumption(Assumption::MertonWellPosed, format!("denominator is {den}")));
        }
        Ok(self.gamma / den)
    }

    /// `f∞ = (1 + δ k^{−b}) ν`.
    pub fn f_inf(&self) -> Result<T> {
        Ok((T::one() + self.delta * self.k.powf(-self.b())) * self.merton_nu()?)
    }
}
