//! Scenario files: TOML (or JSON by extension), resolved into library types.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sticky_wage::labor::Scheme;
use sticky_wage::{Correlation, HistorySegment, KernelProcess, Market, Matrix, Measure, UncertaintySet};

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub market: MarketSpec,
    pub kernel: KernelSpec,
    pub initial: InitialSpec,
    #[serde(default)]
    pub numerics: Numerics,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub uncertainty: Option<UncertaintySpec>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MarketSpec {
    pub r: f64,
    pub delta: f64,
    pub rho: f64,
    pub gamma: f64,
    pub k: f64,
    pub mu: Vec<f64>,
    /// Rows of the volatility matrix.
    pub sigma: Vec<Vec<f64>>,
    pub mu_y: f64,
    pub sigma_y: Vec<f64>,
    #[serde(default)]
    pub correlation: CorrelationSpec,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum CorrelationSpec {
    #[default]
    Perfect,
    Null,
    Diagonal { rho: Vec<f64> },
    Factors { c1: Vec<Vec<f64>>, c2: Vec<Vec<f64>> },
}

/// Atoms `[location, weight]` and density pieces `[start, value]` on `[-d, 0)`.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeasureSpec {
    #[serde(default)]
    pub atoms: Vec<[f64; 2]>,
    #[serde(default)]
    pub density: Vec<[f64; 2]>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelSpec {
    #[serde(default = "one")]
    pub horizon: f64,
    #[serde(default)]
    pub atoms: Vec<[f64; 2]>,
    #[serde(default)]
    pub density: Vec<[f64; 2]>,
    /// Random modulation of the measure; only the income-level checks accept it.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub modulation: Option<ModulationSpec>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ModulationSpec {
    /// `φ / (1 + Z_i(t)²)`.
    InverseQuadratic { component: usize },
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialSpec {
    pub w: f64,
    pub history: HistorySpec,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "snake_case", deny_unknown_fields)]
pub enum HistorySpec {
    Constant { x0: f64 },
    Linear { start: f64, x0: f64 },
    Tent { base: f64, center: f64, width: f64, peak: f64 },
    /// Node values on `-d, -d + h, ..., 0`.
    Grid { values: Vec<f64> },
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SchemeSpec {
    #[default]
    Milstein,
    EulerMaruyama,
}

impl From<SchemeSpec> for Scheme {
    fn from(s: SchemeSpec) -> Self {
        match s {
            SchemeSpec::Milstein => Scheme::Milstein,
            SchemeSpec::EulerMaruyama => Scheme::EulerMaruyama,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Numerics {
    pub h: f64,
    pub horizon: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub t_trunc: Option<f64>,
    pub n_paths: usize,
    pub seed: u64,
    pub scheme: SchemeSpec,
    /// Standard errors allowed in Monte Carlo agreement checks.
    pub k_stderr: f64,
    /// Paths written out in full by `simulate`.
    pub record_paths: usize,
    pub doleans_tol: f64,
    /// Leak band is `band_factor · h · scale`.
    pub band_factor: f64,
    /// Initial income of the positivity witness relative to `|φ⁻|/8`.
    pub witness_scale: f64,
}

impl Default for Numerics {
    fn default() -> Self {
        Self {
            h: 0.01,
            horizon: 5.0,
            t_trunc: None,
            n_paths: 1000,
            seed: 1,
            scheme: SchemeSpec::Milstein,
            k_stderr: 3.0,
            record_paths: 50,
            doleans_tol: 0.005,
            band_factor: 10.0,
            witness_scale: 1.0 / 64.0,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct UncertaintySpec {
    #[serde(flatten)]
    pub set: SetSpec,
    #[serde(default = "five")]
    pub deterministic_adversaries: usize,
    #[serde(default = "five")]
    pub state_adversaries: usize,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SetSpec {
    /// `φ₀ ± radius` around the kernel block.
    Tube { radius: MeasureSpec },
    Family { members: Vec<MeasureSpec> },
}

fn one() -> f64 {
    1.0
}

fn five() -> usize {
    5
}

/// Flag values that replace file fields.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub h: Option<f64>,
    pub horizon: Option<f64>,
    pub n_paths: Option<usize>,
    pub seed: Option<u64>,
    pub gamma: Option<f64>,
    pub scheme: Option<SchemeSpec>,
}

#[derive(Debug)]
pub enum LoadError {
    Io(String),
    Parse(String),
}

impl std::fmt::Display for LoadError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            LoadError::Io(m) | LoadError::Parse(m) => f.write_str(m),
        }
    }
}

impl Scenario {
    pub fn load(path: &Path) -> Result<Self, LoadError> {
        let text = std::fs::read_to_string(path).map_err(|e| LoadError::Io(format!("{}: {e}", path.display())))?;
        if path.extension().is_some_and(|e| e == "json") {
            serde_json::from_str(&text).map_err(|e| LoadError::Parse(format!("{}: {e}", path.display())))
        } else {
            toml::from_str(&text).map_err(|e| LoadError::Parse(format!("{}: {e}", path.display())))
        }
    }

    pub fn apply(&mut self, o: &Overrides) {
        let n = &mut self.numerics;
        n.h = o.h.unwrap_or(n.h);
        n.horizon = o.horizon.unwrap_or(n.horizon);
        n.n_paths = o.n_paths.unwrap_or(n.n_paths);
        n.seed = o.seed.unwrap_or(n.seed);
        n.scheme = o.scheme.unwrap_or(n.scheme);
        self.market.gamma = o.gamma.unwrap_or(self.market.gamma);
    }

    pub fn market(&self) -> sticky_wage::Result<Market> {
        let m = &self.market;
        let corr = match &m.correlation {
            CorrelationSpec::Perfect => Correlation::perfect(m.mu.len()),
            CorrelationSpec::Null => Correlation::null(m.mu.len()),
            CorrelationSpec::Diagonal { rho } => Correlation::diagonal(rho)?,
            CorrelationSpec::Factors { c1, c2 } => Correlation::new(Matrix::from_rows(c1)?, Matrix::from_rows(c2)?)?,
        };
        Market {
            r: m.r,
            delta: m.delta,
            rho: m.rho,
            gamma: m.gamma,
            k: m.k,
            mu: m.mu.clone(),
            sigma: Matrix::from_rows(&m.sigma)?,
            mu_y: m.mu_y,
            sigma_y: m.sigma_y.clone(),
            corr,
        }
        .validated()
    }

    pub fn measure(&self, spec: &MeasureSpec) -> sticky_wage::Result<Measure> {
        measure(self.kernel.horizon, &spec.atoms, &spec.density)
    }

    pub fn phi(&self) -> sticky_wage::Result<Measure> {
        measure(self.kernel.horizon, &self.kernel.atoms, &self.kernel.density)
    }

    pub fn process(&self) -> sticky_wage::Result<KernelProcess<f64>> {
        let phi = self.phi()?;
        Ok(match self.kernel.modulation {
            None => phi.into(),
            Some(ModulationSpec::InverseQuadratic { component }) => KernelProcess::inverse_quadratic(phi, component),
        })
    }

    /// The constant kernel; policy and valuation commands reject modulated ones.
    pub fn constant_phi(&self) -> sticky_wage::Result<Measure> {
        if self.kernel.modulation.is_some() {
            return Err(sticky_wage::Error::Domain("this command needs a constant kernel (remove kernel.modulation)".into()));
        }
        self.phi()
    }

    pub fn history(&self) -> sticky_wage::Result<HistorySegment<f64>> {
        self.history_at(self.numerics.h)
    }

    pub fn history_at(&self, h: f64) -> sticky_wage::Result<HistorySegment<f64>> {
        let d = self.kernel.horizon;
        match &self.initial.history {
            HistorySpec::Constant { x0 } => HistorySegment::constant(d, h, *x0),
            HistorySpec::Linear { start, x0 } => HistorySegment::linear(d, h, *start, *x0),
            HistorySpec::Tent { base, center, width, peak } => HistorySegment::tent(d, h, *base, *center, *width, *peak),
            HistorySpec::Grid { values } => HistorySegment::new(d, h, values.clone()),
        }
    }

    pub fn uncertainty_set(&self) -> sticky_wage::Result<Option<UncertaintySet<f64>>> {
        let Some(u) = &self.uncertainty else { return Ok(None) };
        Ok(Some(match &u.set {
            SetSpec::Tube { radius } => UncertaintySet::tube(self.constant_phi()?, self.measure(radius)?)?,
            SetSpec::Family { members } => {
                UncertaintySet::family(members.iter().map(|m| self.measure(m)).collect::<sticky_wage::Result<_>>()?)?
            }
        }))
    }
}

fn measure(d: f64, atoms: &[[f64; 2]], density: &[[f64; 2]]) -> sticky_wage::Result<Measure> {
    Ok(Measure::new(d, atoms.iter().map(|a| (a[0], a[1])).collect(), density.iter().map(|p| (p[0], p[1])).collect())?)
}
