//! Fixed desk-scale scenarios used by the regression and acceptance runs.

use crate::error::Result;
use crate::labor::HistorySegment;
use crate::linalg::Matrix;
use crate::market::{Correlation, MarketParams};
use crate::measure::RadonMeasure;
use crate::scalar::Real;

#[derive(Clone, Debug)]
pub struct Scenario<T> {
    pub name: String,
    pub params: MarketParams<T>,
    pub phi: RadonMeasure<T>,
    pub w: T,
    pub x: HistorySegment<T>,
}

/// One stock, perfectly correlated income, delay window of one year.
pub fn base_market<T: Real>(gamma: T, sigma_y: T) -> Result<MarketParams<T>> {
    MarketParams {
        r: T::lit(0.03),
        delta: T::lit(0.02),
        rho: T::lit(0.1),
        gamma,
        k: T::lit(2.0),
        mu: vec![T::lit(0.07)],
        sigma: Matrix::from_rows(&[vec![T::lit(0.2)]])?,
        mu_y: T::lit(-0.15),
        sigma_y: vec![sigma_y],
        corr: Correlation::perfect(1),
    }
    .validated()
}

/// Atomic, density and mixed nonnegative kernels on `[-1, 0]`.
pub fn suite_kernels<T: Real>() -> Result<Vec<(&'static str, RadonMeasure<T>)>> {
    let d = T::one();
    let atomic = RadonMeasure::new(d, vec![(-T::one(), T::lit(0.04)), (T::lit(-0.5), T::lit(0.02))], Vec::new())?;
    let density = RadonMeasure::uniform_on(d, -T::one(), T::lit(-0.2), T::lit(0.075))?;
    let mixed = RadonMeasure::dirac(d, -T::one(), T::lit(0.03))?
        .checked_add(&RadonMeasure::uniform_on(d, T::lit(-0.6), T::lit(-0.1), T::lit(0.06))?)?;
    Ok(vec![("atomic", atomic), ("density", density), ("mixed", mixed)])
}

pub const SUITE_SIGMA_Y: [f64; 2] = [0.0, 0.15];

/// The six scenarios: kernel in {atomic, density, mixed} × σ_y in {0, 0.15}.
pub fn fixed_suite<T: Real>(gamma: T, h: T) -> Result<Vec<Scenario<T>>> {
    let mut out = Vec::new();
    for (kname, phi) in suite_kernels::<T>()? {
        for sy in SUITE_SIGMA_Y {
            out.push(Scenario {
                name: format!("{kname}/sigma_y={sy}"),
                params: base_market(gamma, T::lit(sy))?,
                phi: phi.clone(),
                w: T::lit(5.0),
                x: HistorySegment::linear(T::one(), h, T::lit(0.8), T::one())?,
            });
        }
    }
    Ok(out)
}

/// Same markets with `φ = 0`.
pub fn no_delay_suite<T: Real>(gamma: T, h: T) -> Result<Vec<Scenario<T>>> {
    let mut out = fixed_suite(gamma, h)?;
    out.retain(|s| s.name.starts_with("atomic"));
    for s in &mut out {
        s.phi = RadonMeasure::zero(T::one());
        s.name = s.name.replace("atomic", "none");
    }
    Ok(out)
}
