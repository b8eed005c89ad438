use std::fmt;
use std::sync::Arc;

use crate::error::Result;
use crate::scalar::Real;

use super::grid::GridKernel;
use super::{MeasureError, RadonMeasure};

/// What a path-dependent kernel may look at: the current time and the
/// driving Brownian motion `Z(t)`.
#[derive(Clone, Copy, Debug)]
pub struct PathContext<'a, T> {
    pub t: T,
    pub z: &'a [T],
}

impl<'a, T: Real> PathContext<'a, T> {
    pub fn at(t: T, z: &'a [T]) -> Self {
        Self { t, z }
    }
}

/// Scalar functional of the path prefix that scales a base measure.
#[derive(Clone)]
pub enum PathFunctional<T> {
    /// `1 / (1 + Z_i(t)^2)`.
    InverseQuadratic { component: usize },
    /// Deterministic function of time.
    Time(Arc<dyn Fn(T) -> T + Send + Sync>),
    Custom(Arc<dyn Fn(&PathContext<'_, T>) -> T + Send + Sync>),
}

impl<T: Real> PathFunctional<T> {
    pub fn eval(&self, ctx: &PathContext<'_, T>) -> T {
        match self {
            Self::InverseQuadratic { component } => {
                let z = ctx.z.get(*component).copied().unwrap_or_else(T::zero);
                T::one() / (T::one() + z * z)
            }
            Self::Time(f) => f(ctx.t),
            Self::Custom(f) => f(ctx),
        }
    }
}

impl<T> fmt::Debug for PathFunctional<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::InverseQuadratic { component } => write!(f, "InverseQuadratic({component})"),
            Self::Time(_) => f.write_str("Time(..)"),
            Self::Custom(_) => f.write_str("Custom(..)"),
        }
    }
}

/// Measure-valued control `t ↦ φ(t, ω)` with a total-variation bound.
#[derive(Clone)]
pub enum KernelProcess<T> {
    Constant(RadonMeasure<T>),
    TimeVarying {
        d: T,
        schedule: Arc<dyn Fn(T) -> RadonMeasure<T> + Send + Sync>,
        tv_bound: T,
    },
    /// `floor + λ(t, ω) · span`.
    StateModulated {
        floor: RadonMeasure<T>,
        span: RadonMeasure<T>,
        functional: PathFunctional<T>,
        tv_bound: T,
    },
}

impl<T: fmt::Debug> fmt::Debug for KernelProcess<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Constant(m) => f.debug_tuple("Constant").field(m).finish(),
            Self::TimeVarying { d, tv_bound, .. } => {
                f.debug_struct("TimeVarying").field("d", d).field("tv_bound", tv_bound).finish_non_exhaustive()
            }
            Self::StateModulated { floor, span, functional, tv_bound } => f
                .debug_struct("StateModulated")
                .field("floor", floor)
                .field("span", span)
                .field("functional", functional)
                .field("tv_bound", tv_bound)
                .finish(),
        }
    }
}

impl<T: Real> From<RadonMeasure<T>> for KernelProcess<T> {
    fn from(m: RadonMeasure<T>) -> Self {
        Self::Constant(m)
    }
}

fn tv_slack<T: Real>(bound: T) -> T {
    bound * T::lit(1e-12) + T::lit(1e-12)
}

impl<T: Real> KernelProcess<T> {
    pub fn time_varying(d: T, tv_bound: T, schedule: impl Fn(T) -> RadonMeasure<T> + Send + Sync + 'static) -> Self {
        Self::TimeVarying { d, schedule: Arc::new(schedule), tv_bound }
    }

    /// The fading atom `((T - t)/T) δ_{-d}` on `[0, T]`, zero afterwards.
    pub fn fading_atom(d: T, horizon: T, weight: T) -> Self {
        Self::time_varying(d, weight.abs(), move |t| {
            let frac = ((horizon - t) / horizon).max(T::zero()).min(T::one());
            RadonMeasure::dirac(d, -d, weight * frac).expect("atom at -d is valid")
        })
    }

    /// `base / (1 + Z_i(t)^2)`.
    pub fn inverse_quadratic(base: RadonMeasure<T>, component: usize) -> Self {
        let d = *base.horizon();
        let tv_bound = base.total_variation();
        Self::StateModulated {
            floor: RadonMeasure::zero(d),
            span: base,
            functional: PathFunctional::InverseQuadratic { component },
            tv_bound,
        }
    }

    pub fn horizon(&self) -> T {
        match self {
            Self::Constant(m) => *m.horizon(),
            Self::TimeVarying { d, .. } => *d,
            Self::StateModulated { floor, .. } => *floor.horizon(),
        }
    }

    pub fn tv_bound(&self) -> T {
        match self {
            Self::Constant(m) => m.total_variation(),
            Self::TimeVarying { tv_bound, .. } | Self::StateModulated { tv_bound, .. } => *tv_bound,
        }
    }

    pub fn as_constant(&self) -> Option<&RadonMeasure<T>> {
        match self {
            Self::Constant(m) => Some(m),
            _ => None,
        }
    }

    /// Realized measure `φ(t, ω)`; errors if it breaks the TV bound.
    pub fn sample(&self, ctx: &PathContext<'_, T>) -> Result<RadonMeasure<T>> {
        let m = match self {
            Self::Constant(m) => return Ok(m.clone()),
            Self::TimeVarying { d, schedule, .. } => {
                let m = schedule(ctx.t);
                if *m.horizon() != *d {
                    return Err(MeasureError::HorizonMismatch(format!("{d}"), format!("{}", m.horizon())).into());
                }
                m
            }
            Self::StateModulated { floor, span, functional, .. } => {
                floor.checked_add(&span.scale(functional.eval(ctx)))?
            }
        };
        self.check_tv(&m, ctx.t)?;
        Ok(m)
    }

    fn check_tv(&self, m: &RadonMeasure<T>, t: T) -> Result<()> {
        let tv = m.total_variation();
        let bound = self.tv_bound();
        if !tv.is_finite() || tv > bound + tv_slack(bound) {
            return Err(MeasureError::TotalVariationExceeded { tv: tv.to_string(), bound: bound.to_string(), t: t.to_string() }.into());
        }
        Ok(())
    }

    /// Pre-locates the kernel on the grid with step `h`.
    pub fn compile(&self, h: T) -> Result<CompiledKernel<T>> {
        let d = self.horizon();
        Ok(match self {
            Self::Constant(m) => CompiledKernel::Constant(GridKernel::compile(m, d, h)?),
            Self::TimeVarying { .. } => {
                super::grid::cells(d, h)?;
                CompiledKernel::Sampled { process: self.clone(), d, h }
            }
            Self::StateModulated { floor, span, functional, tv_bound } => CompiledKernel::Modulated {
                floor: GridKernel::compile(floor, d, h)?,
                span: GridKernel::compile(span, d, h)?,
                floor_measure: floor.clone(),
                span_measure: span.clone(),
                crude_tv: (floor.total_variation(), span.total_variation()),
                functional: functional.clone(),
                tv_bound: *tv_bound,
            },
        })
    }
}

/// A kernel process located on a grid, ready to integrate path windows.
#[derive(Clone)]
pub enum CompiledKernel<T> {
    Constant(GridKernel<T>),
    Sampled {
        process: KernelProcess<T>,
        d: T,
        h: T,
    },
    Modulated {
        floor: GridKernel<T>,
        span: GridKernel<T>,
        floor_measure: RadonMeasure<T>,
        span_measure: RadonMeasure<T>,
        crude_tv: (T, T),
        functional: PathFunctional<T>,
        tv_bound: T,
    },
}

impl<T: Real> CompiledKernel<T> {
    pub fn is_constant(&self) -> bool {
        matches!(self, Self::Constant(_))
    }

    /// `∫ window(s) φ(t)(ds)` where `window` holds the path at `t + s` on the grid.
    #[inline]
    pub fn integrate(&self, ctx: &PathContext<'_, T>, window: &[T], cum: &[T]) -> Result<T> {
        match self {
            Self::Constant(k) => Ok(k.integrate(window, cum)),
            Self::Sampled { process, d, h } => {
                let m = process.sample(ctx)?;
                Ok(GridKernel::compile(&m, *d, *h)?.integrate(window, cum))
            }
            Self::Modulated { floor, span, floor_measure, span_measure, crude_tv, functional, tv_bound } => {
                let lambda = functional.eval(ctx);
                if crude_tv.0 + lambda.abs() * crude_tv.1 > *tv_bound + tv_slack(*tv_bound) {
                    let tv = floor_measure.checked_add(&span_measure.scale(lambda))?.total_variation();
                    if !(tv <= *tv_bound + tv_slack(*tv_bound)) {
                        return Err(MeasureError::TotalVariationExceeded {
                            tv: tv.to_string(),
                            bound: tv_bound.to_string(),
                            t: ctx.t.to_string(),
                        }
                        .into());
                    }
                }
                Ok(floor.integrate(window, cum) + lambda * span.integrate(window, cum))
            }
        }
    }
}
