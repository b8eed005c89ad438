//! Signed Radon measures on `[-d, 0]` that carry no mass at `0`.
//!
//! A measure is a finite list of atoms plus a piecewise-constant density.
//! That class is closed under sums, differences, the Hahn–Jordan split and
//! the lattice operations, so all of those are exact on the representation.
//! Weights may be floats or exact rationals; integration against functions
//! needs a [`Real`](crate::Real) scalar and lives in [`grid`].

pub(crate) mod grid;
mod kernel;

pub use grid::{window_cumulative, GridFn, GridKernel};
pub use kernel::{CompiledKernel, KernelProcess, PathContext, PathFunctional};

use std::cmp::Ordering;

use thiserror::Error;

use crate::scalar::Weight;

#[derive(Clone, Debug, Error, PartialEq)]
pub enum MeasureError {
    #[error("horizon d must be positive, got {0}")]
    NonPositiveHorizon(String),
    #[error("atom at {0} lies outside [-d, 0)")]
    AtomOutOfRange(String),
    #[error("atom at 0: measures must be null at 0 (fold it into the income drift instead)")]
    AtomAtZero,
    #[error("atom locations must be strictly increasing")]
    AtomsNotIncreasing,
    #[error("invalid density: {0}")]
    BadDensity(String),
    #[error("non-finite weight {0}")]
    NonFinite(String),
    #[error("measures live on different windows: d = {0} vs d = {1}")]
    HorizonMismatch(String, String),
    #[error("grid does not cover [-d, 0]: {0}")]
    GridMismatch(String),
    #[error("realized total variation {tv} exceeds the bound {bound} at t = {t}")]
    TotalVariationExceeded { tv: String, bound: String, t: String },
}

/// Outcome of comparing two measures in the lattice order.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum OrderRelation {
    LessOrEqual,
    GreaterOrEqual,
    Equal,
    Incomparable,
}

/// Hahn–Jordan split `measure = positive - negative`.
#[derive(Clone, Debug, PartialEq)]
pub struct HahnJordan<T> {
    pub positive: RadonMeasure<T>,
    pub negative: RadonMeasure<T>,
    /// Total mass of the negative part.
    pub negative_mass: T,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RadonMeasure<T> {
    d: T,
    /// `(location, weight)`, locations strictly increasing in `[-d, 0)`.
    atoms: Vec<(T, T)>,
    /// `(start, value)`; piece `i` covers `[start_i, start_{i+1})`, the last one ends at 0.
    density: Vec<(T, T)>,
}

fn show<T: std::fmt::Debug>(x: &T) -> String {
    format!("{x:?}")
}

#[allow(clippy::eq_op)]
fn is_nan<T: PartialEq>(x: &T) -> bool {
    x != x
}

impl<T: Weight> RadonMeasure<T> {
    /// Builds a measure, validating the layout and normalizing it (zero
    /// atoms dropped, equal neighbouring density pieces merged).
    pub fn new(d: T, atoms: Vec<(T, T)>, density: Vec<(T, T)>) -> Result<Self, MeasureError> {
        if !(d > T::zero()) {
            return Err(MeasureError::NonPositiveHorizon(show(&d)));
        }
        let lo = -d.clone();
        for (i, (s, w)) in atoms.iter().enumerate() {
            if *s == T::zero() {
                return Err(MeasureError::AtomAtZero);
            }
            if !(*s >= lo && *s < T::zero()) {
                return Err(MeasureError::AtomOutOfRange(show(s)));
            }
            if is_nan(w) {
                return Err(MeasureError::NonFinite(show(w)));
            }
            if i > 0 && !(atoms[i - 1].0 < *s) {
                return Err(MeasureError::AtomsNotIncreasing);
            }
        }
        if let Some((first, _)) = density.first() {
            if *first != lo {
                return Err(MeasureError::BadDensity(format!("first breakpoint {} must equal -d = {}", show(first), show(&lo))));
            }
        }
        for (i, (s, v)) in density.iter().enumerate() {
            if !(*s < T::zero()) {
                return Err(MeasureError::BadDensity(format!("breakpoint {} must be < 0", show(s))));
            }
            if is_nan(v) {
                return Err(MeasureError::NonFinite(show(v)));
            }
            if i > 0 && !(density[i - 1].0 < *s) {
                return Err(MeasureError::BadDensity("breakpoints must be strictly increasing".into()));
            }
        }
        Ok(Self::normalized(d, atoms, density))
    }

    pub fn zero(d: T) -> Self {
        Self { d, atoms: Vec::new(), density: Vec::new() }
    }

    /// `weight * delta_location`.
    pub fn dirac(d: T, location: T, weight: T) -> Result<Self, MeasureError> {
        Self::new(d, vec![(location, weight)], Vec::new())
    }

    /// Constant density on the whole window.
    pub fn flat(d: T, value: T) -> Result<Self, MeasureError> {
        let lo = -d.clone();
        Self::new(d, Vec::new(), vec![(lo, value)])
    }

    /// Density `value` on `[a, b)`, zero elsewhere.
    pub fn uniform_on(d: T, a: T, b: T, value: T) -> Result<Self, MeasureError> {
        let lo = -d.clone();
        if !(a >= lo && a < b && b <= T::zero()) {
            return Err(MeasureError::BadDensity(format!("interval [{}, {}) not inside [-d, 0)", show(&a), show(&b))));
        }
        let mut pieces = Vec::new();
        if a > lo {
            pieces.push((lo, T::zero()));
        }
        pieces.push((a, value));
        if b < T::zero() {
            pieces.push((b, T::zero()));
        }
        Self::new(d, Vec::new(), pieces)
    }

    fn normalized(d: T, atoms: Vec<(T, T)>, density: Vec<(T, T)>) -> Self {
        let mut merged_atoms: Vec<(T, T)> = Vec::with_capacity(atoms.len());
        for (s, w) in atoms {
            match merged_atoms.last_mut() {
                Some((ls, lw)) if *ls == s => *lw = lw.clone() + w,
                _ => merged_atoms.push((s, w)),
            }
        }
        merged_atoms.retain(|(_, w)| !w.is_zero());

        let mut pieces: Vec<(T, T)> = Vec::with_capacity(density.len());
        for (s, v) in density {
            match pieces.last() {
                Some((_, lv)) if *lv == v => {}
                _ => pieces.push((s, v)),
            }
        }
        if pieces.iter().all(|(_, v)| v.is_zero()) {
            pieces.clear();
        }
        Self { d, atoms: merged_atoms, density: pieces }
    }

    pub fn horizon(&self) -> &T {
        &self.d
    }

    pub fn atoms(&self) -> &[(T, T)] {
        &self.atoms
    }

    /// Density pieces as `(start, end, value)`.
    pub fn density_pieces(&self) -> impl Iterator<Item = (T, T, T)> + '_ {
        self.density.iter().enumerate().map(move |(i, (s, v))| {
            let end = self.density.get(i + 1).map_or_else(T::zero, |(e, _)| e.clone());
            (s.clone(), end, v.clone())
        })
    }

    /// Raw `(start, value)` density breakpoints.
    pub fn density_breakpoints(&self) -> &[(T, T)] {
        &self.density
    }

    pub fn is_zero(&self) -> bool {
        self.atoms.is_empty() && self.density.is_empty()
    }

    pub fn is_nonnegative(&self) -> bool {
        self.atoms.iter().all(|(_, w)| *w >= T::zero()) && self.density.iter().all(|(_, v)| *v >= T::zero())
    }

    /// Density value at `s` (0 outside the pieces).
    pub fn density_at(&self, s: &T) -> T {
        self.density.iter().rev().find(|(b, _)| b <= s).map_or_else(T::zero, |(_, v)| v.clone())
    }

    /// Weight of the atom sitting exactly at `s`, zero if none.
    pub fn atom_at(&self, s: &T) -> T {
        self.atoms.iter().find(|(a, _)| a == s).map_or_else(T::zero, |(_, w)| w.clone())
    }

    pub fn total_mass(&self) -> T {
        let atoms = self.atoms.iter().fold(T::zero(), |acc, (_, w)| acc + w.clone());
        self.density_pieces().fold(atoms, |acc, (a, b, v)| acc + v * (b - a))
    }

    /// `sum |atom weights| + integral of |density|`.
    pub fn total_variation(&self) -> T {
        let atoms = self.atoms.iter().fold(T::zero(), |acc, (_, w)| acc + w.abs());
        self.density_pieces().fold(atoms, |acc, (a, b, v)| acc + v.abs() * (b - a))
    }

    pub fn scale(&self, factor: T) -> Self {
        Self::normalized(
            self.d.clone(),
            self.atoms.iter().map(|(s, w)| (s.clone(), w.clone() * factor.clone())).collect(),
            self.density.iter().map(|(s, v)| (s.clone(), v.clone() * factor.clone())).collect(),
        )
    }

    fn map_parts(&self, f: impl Fn(&T) -> T) -> Self {
        Self::normalized(
            self.d.clone(),
            self.atoms.iter().map(|(s, w)| (s.clone(), f(w))).collect(),
            self.density.iter().map(|(s, v)| (s.clone(), f(v))).collect(),
        )
    }

    pub fn positive_part(&self) -> Self {
        self.map_parts(|v| if *v > T::zero() { v.clone() } else { T::zero() })
    }

    pub fn negative_part(&self) -> Self {
        self.map_parts(|v| if *v < T::zero() { -v.clone() } else { T::zero() })
    }

    /// Exact Hahn–Jordan decomposition: atoms and density pieces are split by sign.
    pub fn hahn_jordan(&self) -> HahnJordan<T> {
        let negative = self.negative_part();
        let negative_mass = negative.total_mass();
        HahnJordan { positive: self.positive_part(), negative, negative_mass }
    }

    fn check_horizon(&self, other: &Self) -> Result<(), MeasureError> {
        if self.d != other.d {
            return Err(MeasureError::HorizonMismatch(show(&self.d), show(&other.d)));
        }
        Ok(())
    }

    /// Pointwise combination `f(self, other)` on the common refinement.
    /// `f(0, 0)` must be 0.
    fn zip_with(&self, other: &Self, f: impl Fn(T, T) -> T) -> Result<Self, MeasureError> {
        self.check_horizon(other)?;
        let mut atoms = Vec::with_capacity(self.atoms.len() + other.atoms.len());
        let (mut i, mut j) = (0, 0);
        while i < self.atoms.len() || j < other.atoms.len() {
            let ord = match (self.atoms.get(i), other.atoms.get(j)) {
                (Some(a), Some(b)) => a.0.partial_cmp(&b.0).unwrap_or(Ordering::Equal),
                (Some(_), None) => Ordering::Less,
                _ => Ordering::Greater,
            };
            match ord {
                Ordering::Less => {
                    atoms.push((self.atoms[i].0.clone(), f(self.atoms[i].1.clone(), T::zero())));
                    i += 1;
                }
                Ordering::Greater => {
                    atoms.push((other.atoms[j].0.clone(), f(T::zero(), other.atoms[j].1.clone())));
                    j += 1;
                }
                Ordering::Equal => {
                    atoms.push((self.atoms[i].0.clone(), f(self.atoms[i].1.clone(), other.atoms[j].1.clone())));
                    i += 1;
                    j += 1;
                }
            }
        }
        let mut starts: Vec<T> = self.density.iter().chain(&other.density).map(|(s, _)| s.clone()).collect();
        starts.sort_by(|a, b| a.partial_cmp(b).unwrap_or(Ordering::Equal));
        starts.dedup();
        if let Some(first) = starts.first() {
            if *first != -self.d.clone() {
                starts.insert(0, -self.d.clone());
            }
        }
        let density = starts
            .into_iter()
            .map(|s| {
                let v = f(self.density_at(&s), other.density_at(&s));
                (s, v)
            })
            .collect();
        Ok(Self::normalized(self.d.clone(), atoms, density))
    }

    pub fn checked_add(&self, other: &Self) -> Result<Self, MeasureError> {
        self.zip_with(other, |a, b| a + b)
    }

    pub fn checked_sub(&self, other: &Self) -> Result<Self, MeasureError> {
        self.zip_with(other, |a, b| a - b)
    }

    /// Lattice order: `self <= other` iff `other - self` is a nonnegative measure.
    pub fn compare(&self, other: &Self) -> Result<OrderRelation, MeasureError> {
        let diff = other.checked_sub(self)?;
        Ok(if diff.is_zero() {
            OrderRelation::Equal
        } else if diff.is_nonnegative() {
            OrderRelation::LessOrEqual
        } else if diff.scale(-T::one()).is_nonnegative() {
            OrderRelation::GreaterOrEqual
        } else {
            OrderRelation::Incomparable
        })
    }

    pub fn le(&self, other: &Self) -> Result<bool, MeasureError> {
        Ok(matches!(self.compare(other)?, OrderRelation::LessOrEqual | OrderRelation::Equal))
    }

    /// Lattice infimum `self ∧ other`.
    pub fn meet(&self, other: &Self) -> Result<Self, MeasureError> {
        self.zip_with(other, |a, b| if a <= b { a } else { b })
    }

    /// Lattice supremum `self ∨ other`.
    pub fn join(&self, other: &Self) -> Result<Self, MeasureError> {
        self.zip_with(other, |a, b| if a >= b { a } else { b })
    }

    /// Closed support.
    pub fn support(&self) -> Support<T> {
        let mut intervals: Vec<(T, T)> = Vec::new();
        for (a, b, v) in self.density_pieces() {
            if v.is_zero() {
                continue;
            }
            match intervals.last_mut() {
                Some((_, end)) if *end == a => *end = b,
                _ => intervals.push((a, b)),
            }
        }
        let points = self
            .atoms
            .iter()
            .map(|(s, _)| s.clone())
            .filter(|s| !intervals.iter().any(|(a, b)| a <= s && s <= b))
            .collect();
        Support { points, intervals }
    }
}

impl<T: Weight> std::ops::Add for &RadonMeasure<T> {
    type Output = RadonMeasure<T>;
    /// Panics when the windows differ; use [`RadonMeasure::checked_add`] otherwise.
    fn add(self, rhs: Self) -> RadonMeasure<T> {
        self.checked_add(rhs).expect("measures on the same window")
    }
}

impl<T: Weight> std::ops::Sub for &RadonMeasure<T> {
    type Output = RadonMeasure<T>;
    fn sub(self, rhs: Self) -> RadonMeasure<T> {
        self.checked_sub(rhs).expect("measures on the same window")
    }
}

impl<T: Weight> std::ops::Neg for &RadonMeasure<T> {
    type Output = RadonMeasure<T>;
    fn neg(self) -> RadonMeasure<T> {
        self.scale(-T::one())
    }
}

/// Closed support: isolated atom locations plus closed intervals.
#[derive(Clone, Debug, PartialEq)]
pub struct Support<T> {
    pub points: Vec<T>,
    pub intervals: Vec<(T, T)>,
}

impl<T: Weight> Support<T> {
    fn covers(&self, s: &T) -> bool {
        self.points.iter().any(|p| p == s) || self.intervals.iter().any(|(a, b)| a <= s && s <= b)
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty() && self.intervals.is_empty()
    }

    pub fn is_subset(&self, other: &Self) -> bool {
        self.points.iter().all(|p| other.covers(p))
            && self.intervals.iter().all(|(a, b)| other.intervals.iter().any(|(c, e)| c <= a && b <= e))
    }

    pub fn is_strict_subset(&self, other: &Self) -> bool {
        self.is_subset(other) && !other.is_subset(self)
    }
}
