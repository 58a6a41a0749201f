use std::ops::{Add, Div, Mul, Neg, Sub};

use crate::autodiff::Var;

/// Arithmetic shared by plain `f64` (ground truth) and tape nodes (learned
/// models, where each value is a batch column). The force and
/// equation-of-motion code is written once against this trait.
pub trait Scalar:
    Copy
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
    + Add<f64, Output = Self>
    + Sub<f64, Output = Self>
    + Mul<f64, Output = Self>
    + Div<f64, Output = Self>
{
    fn sqrt(self) -> Self;
    /// A constant shaped like `self`.
    fn splat(self, v: f64) -> Self;
    /// Smallest element, for validity checks.
    fn min_value(self) -> f64;
}

impl Scalar for f64 {
    fn sqrt(self) -> Self {
        f64::sqrt(self)
    }

    fn splat(self, v: f64) -> Self {
        v
    }

    fn min_value(self) -> f64 {
        self
    }
}

impl<'t> Scalar for Var<'t> {
    fn sqrt(self) -> Self {
        Var::sqrt(self)
    }

    fn splat(self, v: f64) -> Self {
        self.full_like(v)
    }

    fn min_value(self) -> f64 {
        self.value().iter().copied().fold(f64::INFINITY, f64::min)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Vec2<T> {
    pub x: T,
    pub y: T,
}

impl<T: Scalar> Vec2<T> {
    pub fn new(x: T, y: T) -> Self {
        Self { x, y }
    }

    pub fn dot(self, o: Self) -> T {
        self.x * o.x + self.y * o.y
    }

    pub fn norm(self) -> T {
        self.dot(self).sqrt()
    }

    pub fn scale(self, k: T) -> Self {
        Self { x: self.x * k, y: self.y * k }
    }

    pub fn zero_like(self) -> Self {
        Self { x: self.x.splat(0.0), y: self.y.splat(0.0) }
    }
}

impl<T: Scalar> Add for Vec2<T> {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        Self { x: self.x + o.x, y: self.y + o.y }
    }
}

impl<T: Scalar> Sub for Vec2<T> {
    type Output = Self;
    fn sub(self, o: Self) -> Self {
        Self { x: self.x - o.x, y: self.y - o.y }
    }
}

impl<T: Scalar> Mul<f64> for Vec2<T> {
    type Output = Self;
    fn mul(self, k: f64) -> Self {
        Self { x: self.x * k, y: self.y * k }
    }
}

impl Vec2<f64> {
    pub fn to_array(self) -> [f64; 2] {
        [self.x, self.y]
    }
}

impl From<[f64; 2]> for Vec2<f64> {
    fn from([x, y]: [f64; 2]) -> Self {
        Self { x, y }
    }
}
