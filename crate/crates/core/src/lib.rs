//! Life-cycle consumption and portfolio choice with labor income driven by
//! a stochastic delay equation whose memory is a signed Radon measure.

pub mod error;
pub mod labor;
pub mod linalg;
pub mod market;
pub mod mc;
pub mod measure;
pub mod policy;
pub mod robust;
pub mod scalar;
pub mod suite;
pub mod valuation;

pub use error::{Assumption, Error, Result};
pub use labor::{HistorySegment, IncomePath, Scheme};
pub use linalg::Matrix;
pub use market::{Correlation, MarketParams};
pub use mc::{Estimate, NoisePlan};
pub use measure::{GridFn, KernelProcess, MeasureError, OrderRelation, RadonMeasure};
pub use policy::{ControlTriplet, ControlledState, FeedbackRule};
pub use robust::{GameReport, UncertaintySet};
pub use scalar::{Real, Weight};
pub use valuation::PolicyConstants;

/// Double-precision measure.
pub type Measure = RadonMeasure<f64>;
/// Measure with exact rational weights, for lattice arithmetic.
pub type ExactMeasure = RadonMeasure<num_rational::Rational64>;
pub type Market = MarketParams<f64>;
pub type History = HistorySegment<f64>;
pub type Constants = PolicyConstants<f64>;
/// Single-precision variants, for memory-bound sweeps.
pub type Measure32 = RadonMeasure<f32>;
pub type Market32 = MarketParams<f32>;
pub type History32 = HistorySegment<f32>;
