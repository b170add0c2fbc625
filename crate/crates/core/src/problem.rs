//! Closed-form solutions of `-Δu = f` used for verification.

use std::f64::consts::PI;
use std::sync::Arc;

use crate::{Point, Vector};

/// Shareable scalar field on the plane.
pub type ScalarFn = Arc<dyn Fn(Point) -> f64 + Send + Sync>;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ManufacturedProblem {
    /// `u = cos(2πx)cos(2πy) + sin(2πx)sin(2πy) = cos(2π(x - y))`.
    Trigonometric,
    /// `u = c`.
    Constant(f64),
    /// `u = c0 + cx x + cy y`.
    Affine { c0: f64, cx: f64, cy: f64 },
    /// `u = x^2`, a smooth non-affine case with constant source.
    Quadratic,
}

impl ManufacturedProblem {
    pub fn u(&self, p: Point) -> f64 {
        match *self {
            Self::Trigonometric => {
                let (x, y) = (2.0 * PI * p.x, 2.0 * PI * p.y);
                x.cos() * y.cos() + x.sin() * y.sin()
            }
            Self::Constant(c) => c,
            Self::Affine { c0, cx, cy } => c0 + cx * p.x + cy * p.y,
            Self::Quadratic => p.x * p.x,
        }
    }

    pub fn grad(&self, p: Point) -> Vector {
        match *self {
            Self::Trigonometric => {
                let (x, y) = (2.0 * PI * p.x, 2.0 * PI * p.y);
                let k = 2.0 * PI;
                Vector::new(
                    k * (-x.sin() * y.cos() + x.cos() * y.sin()),
                    k * (-x.cos() * y.sin() + x.sin() * y.cos()),
                )
            }
            Self::Constant(_) => Vector::zeros(),
            Self::Affine { cx, cy, .. } => Vector::new(cx, cy),
            Self::Quadratic => Vector::new(2.0 * p.x, 0.0),
        }
    }

    /// Source `f = -Δu`.
    pub fn f(&self, p: Point) -> f64 {
        match *self {
            Self::Trigonometric => 8.0 * PI * PI * self.u(p),
            Self::Constant(_) | Self::Affine { .. } => 0.0,
            Self::Quadratic => -2.0,
        }
    }

    /// Dirichlet data, the trace of `u`.
    pub fn g(&self, p: Point) -> f64 {
        self.u(p)
    }

    /// Normal flux `n · ∇u`.
    pub fn flux(&self, p: Point, normal: Vector) -> f64 {
        normal.dot(&self.grad(p))
    }

    /// True when `u` lies in the P1 space, so weak schemes reproduce it.
    pub fn is_affine(&self) -> bool {
        matches!(self, Self::Constant(_) | Self::Affine { .. })
    }

    pub fn source_fn(&self) -> ScalarFn {
        let p = *self;
        Arc::new(move |x| p.f(x))
    }

    pub fn dirichlet_fn(&self) -> ScalarFn {
        let p = *self;
        Arc::new(move |x| p.g(x))
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::Trigonometric => "trigonometric",
            Self::Constant(_) => "constant",
            Self::Affine { .. } => "affine",
            Self::Quadratic => "quadratic",
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn source_is_negative_laplacian() {
        // central second differences as an independent check of f = -Δu
        let e = 1e-4;
        for p in [ManufacturedProblem::Trigonometric, ManufacturedProblem::Quadratic] {
            for &(x, y) in &[(0.13, 0.71), (0.5, 0.25), (0.9, 0.05)] {
                let c = Point::new(x, y);
                let lap = (p.u(Point::new(x + e, y)) + p.u(Point::new(x - e, y))
                    + p.u(Point::new(x, y + e))
                    + p.u(Point::new(x, y - e))
                    - 4.0 * p.u(c))
                    / (e * e);
                assert_abs_diff_eq!(p.f(c), -lap, epsilon = 1e-4 * (1.0 + p.f(c).abs()));
                let gx = (p.u(Point::new(x + e, y)) - p.u(Point::new(x - e, y))) / (2.0 * e);
                let gy = (p.u(Point::new(x, y + e)) - p.u(Point::new(x, y - e))) / (2.0 * e);
                assert_abs_diff_eq!(p.grad(c).x, gx, epsilon = 1e-6);
                assert_abs_diff_eq!(p.grad(c).y, gy, epsilon = 1e-6);
            }
        }
    }

    #[test]
    fn trig_solution_is_a_shifted_cosine() {
        let p = ManufacturedProblem::Trigonometric;
        for &(x, y) in &[(0.1, 0.2), (0.77, 0.3)] {
            assert_abs_diff_eq!(p.u(Point::new(x, y)), (2.0 * PI * (x - y)).cos(), epsilon = 1e-14);
        }
    }

    #[test]
    fn bottom_edge_flux_values() {
        let p = ManufacturedProblem::Trigonometric;
        let n = Vector::new(0.0, -1.0);
        assert_abs_diff_eq!(p.flux(Point::new(0.5, 0.0), n), 0.0, epsilon = 1e-14);
        assert_abs_diff_eq!(p.flux(Point::new(0.25, 0.0), n), -2.0 * PI, epsilon = 1e-14);
    }
}
