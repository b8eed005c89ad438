use thiserror::Error;

use crate::measure::MeasureError;

/// Modelling assumption whose failure makes a closed-form object undefined.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Assumption {
    /// beta - beta_inf > 0: human capital admits its Markovian representation.
    HumanCapitalWellPosed,
    /// Merton well-posedness with impatience and mortality.
    MertonWellPosed,
    /// Robust reduction: beta > beta_inf and h_inf >= 0 at the order minimum.
    RobustKernelNonnegative,
    /// The uncertainty set has an order minimum that belongs to it.
    OrderMinimum,
}

impl std::fmt::Display for Assumption {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Assumption::HumanCapitalWellPosed => "human-capital well-posedness (beta - beta_inf > 0)",
            Assumption::MertonWellPosed => "Merton well-posedness (rho + delta - (1-gamma)(r + delta + |kappa|^2/(2 gamma)) > 0)",
            Assumption::RobustKernelNonnegative => "robust kernel condition (beta > beta_inf and h_inf >= 0 at the order minimum)",
            Assumption::OrderMinimum => "order minimum of the uncertainty set",
        })
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Measure(#[from] MeasureError),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("singular matrix: {0}")]
    Singular(String),
    #[error("invariant violated: {0}")]
    Invariant(String),
    #[error("assumption violated: {assumption}: {detail}")]
    Assumption { assumption: Assumption, detail: String },
    #[error("non-finite value at step {step} (t = {t})")]
    NonFinite { step: usize, t: f64 },
    #[error("fixed-point iteration did not converge in {iterations} iterations (empirical contraction ratio {ratio:.4})")]
    NoConvergence { iterations: usize, ratio: f64 },
    #[error("state outside the admissible set: total wealth {total_wealth}")]
    Inadmissible { total_wealth: f64 },
    #[error("admissibility leak: total wealth reached {min_total_wealth} (band {band})")]
    AdmissibilityLeak { min_total_wealth: f64, band: f64 },
    #[error("degenerate Hamiltonian: {0}")]
    DegenerateHamiltonian(String),
    #[error("robust admissible set is empty: total wealth at the order minimum is {total_wealth}")]
    EmptyRobustSet { total_wealth: f64 },
    #[error("adversary leaves the uncertainty set at t = {t}: {detail}")]
    AdversaryOutsideSet { t: f64, detail: String },
    #[error("saddle stress failure: {0}")]
    SaddleStress(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub fn assumption(assumption: Assumption, detail: impl Into<String>) -> Self {
        Error::Assumption { assumption, detail: detail.into() }
    }

    pub fn assumption_kind(&self) -> Option<Assumption> {
        match self {
            Error::Assumption { assumption, .. } => Some(*assumption),
            _ => None,
        }
    }
}
