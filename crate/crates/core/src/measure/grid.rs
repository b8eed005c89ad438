use crate::error::{Error, Result};
use crate::scalar::Real;

use super::{MeasureError, RadonMeasure};

/// Checks that `h` divides `d` and returns the number of cells.
pub(crate) fn cells<T: Real>(d: T, h: T) -> Result<usize> {
    if !(h > T::zero()) || !(d > T::zero()) || !h.is_finite() || !d.is_finite() {
        return Err(Error::Domain(format!("grid needs positive finite d and h, got d = {d}, h = {h}")));
    }
    let ratio = d / h;
    let n = ratio.round();
    let tol = T::lit(1e3) * T::epsilon() * n.max(T::one());
    if n < T::one() || (ratio - n).abs() > tol {
        return Err(Error::Domain(format!("step h = {h} does not divide d = {d}")));
    }
    Ok(n.to_usize().expect("cell count fits usize"))
}

fn same_window<T: Real>(a: T, b: T) -> bool {
    (a - b).abs() <= T::lit(1e3) * T::epsilon() * a.abs().max(b.abs())
}

/// Function sampled on the uniform grid `{-d, -d + h, ..., 0}`.
#[derive(Clone, Debug, PartialEq)]
pub struct GridFn<T> {
    d: T,
    h: T,
    values: Vec<T>,
}

impl<T: Real> GridFn<T> {
    pub fn new(d: T, h: T, values: Vec<T>) -> Result<Self> {
        let n = cells(d, h)?;
        if values.len() != n + 1 {
            return Err(Error::Domain(format!("grid function needs {} nodes, got {}", n + 1, values.len())));
        }
        Ok(Self { d, h, values })
    }

    pub fn from_fn(d: T, h: T, f: impl Fn(T) -> T) -> Result<Self> {
        let n = cells(d, h)?;
        let values = (0..=n).map(|i| f(-d + T::from_usize_lossy(i) * h)).collect();
        Ok(Self { d, h, values })
    }

    pub fn constant(d: T, h: T, value: T) -> Result<Self> {
        Self::from_fn(d, h, |_| value)
    }

    pub fn horizon(&self) -> T {
        self.d
    }

    pub fn step(&self) -> T {
        self.h
    }

    pub fn cells(&self) -> usize {
        self.values.len() - 1
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn node(&self, i: usize) -> T {
        -self.d + T::from_usize_lossy(i) * self.h
    }

    /// Trapezoid rule over `[-d, 0]`.
    pub fn integral(&self) -> T {
        *window_cumulative(&self.values, self.h).last().unwrap()
    }

    /// `∫ self(s) other(s) ds` by the trapezoid rule on the shared nodes.
    pub fn inner(&self, other: &[T]) -> T {
        assert_eq!(other.len(), self.values.len(), "grid mismatch");
        let n = self.values.len();
        let interior = (1..n - 1).fold(T::zero(), |acc, i| acc + self.values[i] * other[i]);
        let ends = (self.values[0] * other[0] + self.values[n - 1] * other[n - 1]) * T::lit(0.5);
        (interior + ends) * self.h
    }

    pub fn min(&self) -> T {
        self.values.iter().copied().fold(T::infinity(), T::min)
    }
}

/// Cumulative trapezoid integral of the piecewise-linear interpolant:
/// `out[j] = ∫_{node 0}^{node j}`.
pub fn window_cumulative<T: Real>(values: &[T], h: T) -> Vec<T> {
    let half = h * T::lit(0.5);
    let mut out = Vec::with_capacity(values.len());
    let mut acc = T::zero();
    out.push(acc);
    for w in values.windows(2) {
        acc = acc + half * (w[0] + w[1]);
        out.push(acc);
    }
    out
}

/// A measure pre-located on a uniform grid, so integrating it against a
/// path window costs `O(atoms + pieces)`.
///
/// Atoms read the linear interpolant between the neighbouring nodes;
/// density pieces integrate the interpolant exactly.
#[derive(Clone, Debug)]
pub struct GridKernel<T> {
    cells: usize,
    h: T,
    atoms: Vec<(usize, T, T)>,
    pieces: Vec<(usize, T, usize, T, T)>,
}

impl<T: Real> GridKernel<T> {
    pub fn compile(measure: &RadonMeasure<T>, d: T, h: T) -> Result<Self> {
        if !same_window(*measure.horizon(), d) {
            return Err(MeasureError::GridMismatch(format!("measure window d = {} but grid window d = {d}", measure.horizon())).into());
        }
        let cells = cells(d, h)?;
        let locate = |s: T| -> (usize, T) {
            let u = (s + d) / h;
            let mut i = u.floor();
            let mut frac = u - i;
            let snap = T::lit(1e-9);
            if frac > T::one() - snap {
                i = i + T::one();
                frac = T::zero();
            } else if frac < snap {
                frac = T::zero();
            }
            let i = i.to_usize().unwrap_or(0).min(cells);
            if i == cells {
                (cells, T::zero())
            } else {
                (i, frac)
            }
        };
        let atoms = measure
            .atoms()
            .iter()
            .map(|&(s, w)| {
                let (i, f) = locate(s);
                (i, f, w)
            })
            .collect();
        let pieces = measure
            .density_pieces()
            .filter(|(_, _, v)| !v.is_zero())
            .map(|(a, b, v)| {
                let (ia, fa) = locate(a);
                let (ib, fb) = locate(b);
                (ia, fa, ib, fb, v)
            })
            .collect();
        Ok(Self { cells, h, atoms, pieces })
    }

    pub fn cells(&self) -> usize {
        self.cells
    }

    pub fn is_zero(&self) -> bool {
        self.atoms.is_empty() && self.pieces.is_empty()
    }

    #[inline]
    fn partial(&self, values: &[T], cum: &[T], i: usize, frac: T) -> T {
        if i >= self.cells {
            return cum[self.cells] - cum[0];
        }
        let v0 = values[i];
        let v1 = values[i + 1];
        cum[i] - cum[0] + self.h * frac * (v0 + T::lit(0.5) * frac * (v1 - v0))
    }

    /// Integrates the window `values` (nodes at `-d, ..., 0`) whose cumulative
    /// trapezoid sums are `cum` (only differences of `cum` are used).
    #[inline]
    pub fn integrate(&self, values: &[T], cum: &[T]) -> T {
        debug_assert_eq!(values.len(), self.cells + 1);
        debug_assert_eq!(cum.len(), self.cells + 1);
        let mut acc = T::zero();
        for &(i, f, w) in &self.atoms {
            let v = if i >= self.cells { values[self.cells] } else { values[i] + f * (values[i + 1] - values[i]) };
            acc = acc + w * v;
        }
        for &(ia, fa, ib, fb, v) in &self.pieces {
            acc = acc + v * (self.partial(values, cum, ib, fb) - self.partial(values, cum, ia, fa));
        }
        acc
    }
}

impl<T: Real> RadonMeasure<T> {
    /// `∫ f(s) measure(ds)` for a grid function on `[-d, 0]`.
    pub fn integrate(&self, f: &GridFn<T>) -> Result<T> {
        let kernel = GridKernel::compile(self, f.horizon(), f.step())?;
        let cum = window_cumulative(f.values(), f.step());
        Ok(kernel.integrate(f.values(), &cum))
    }

    /// `∫ exp(rate * s) measure(ds)`, exact.
    pub fn integrate_exp(&self, rate: T) -> T {
        let atoms = self.atoms().iter().fold(T::zero(), |acc, &(s, w)| acc + w * (rate * s).exp());
        self.density_pieces().fold(atoms, |acc, (a, b, v)| {
            let piece = if rate.abs() * (b - a) < T::lit(1e-8) {
                (b - a) * (rate * (a + b) * T::lit(0.5)).exp()
            } else {
                ((rate * b).exp() - (rate * a).exp()) / rate
            };
            acc + v * piece
        })
    }

    /// Exact integral of the piecewise-linear function through `knots`
    /// (sorted `(s, g(s))`, spanning `[-d, 0]`).
    pub fn integrate_piecewise_linear(&self, knots: &[(T, T)]) -> T {
        let eval = |s: T| -> T {
            let k = knots.partition_point(|&(x, _)| x <= s).clamp(1, knots.len() - 1);
            let (x0, y0) = knots[k - 1];
            let (x1, y1) = knots[k];
            if x1 == x0 {
                y1
            } else {
                y0 + (y1 - y0) * (s - x0) / (x1 - x0)
            }
        };
        let atoms = self.atoms().iter().fold(T::zero(), |acc, &(s, w)| acc + w * eval(s));
        self.density_pieces().fold(atoms, |acc, (a, b, v)| {
            let mut pts = vec![a];
            pts.extend(knots.iter().map(|&(x, _)| x).filter(|&x| x > a && x < b));
            pts.push(b);
            let piece = pts.windows(2).fold(T::zero(), |s, w| s + (w[1] - w[0]) * (eval(w[0]) + eval(w[1])) * T::lit(0.5));
            acc + v * piece
        })
    }
}
