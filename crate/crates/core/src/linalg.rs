//! Small dense helpers and continuous-branch tracking for complex roots.

use std::f64::consts::{FRAC_PI_2, PI};

use nalgebra::Matrix2;
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type Mat2 = Matrix2<Complex64>;

/// Follows the argument of a complex function sampled along a path so that
/// fractional powers can be taken on the branch continuous from the start.
#[derive(Clone, Debug)]
pub struct PhaseTracker {
    theta: f64,
    last: Complex64,
    max_jump: f64,
    largest_jump: f64,
}

impl PhaseTracker {
    /// Starts on the principal argument of `w0`.
    pub fn new(w0: Complex64) -> Self {
        PhaseTracker {
            theta: w0.arg(),
            last: w0,
            max_jump: FRAC_PI_2,
            largest_jump: 0.0,
        }
    }

    pub fn with_max_jump(mut self, max_jump: f64) -> Self {
        self.max_jump = max_jump;
        self
    }

    pub fn push(&mut self, w: Complex64) -> Result<()> {
        let jump = (w / self.last).arg();
        if !jump.is_finite() || jump.abs() >= self.max_jump {
            return Err(Error::BranchJump { jump });
        }
        self.largest_jump = self.largest_jump.max(jump.abs());
        self.theta += jump;
        self.last = w;
        Ok(())
    }

    /// Tracked from a full sequence of samples.
    pub fn track<I: IntoIterator<Item = Complex64>>(values: I) -> Result<Self> {
        let mut it = values.into_iter();
        let first = it.next().unwrap_or(Complex64::new(1.0, 0.0));
        let mut tracker = PhaseTracker::new(first);
        for w in it {
            tracker.push(w)?;
        }
        Ok(tracker)
    }

    /// Continuous argument.
    pub fn theta(&self) -> f64 {
        self.theta
    }

    pub fn value(&self) -> Complex64 {
        self.last
    }

    pub fn largest_jump(&self) -> f64 {
        self.largest_jump
    }

    /// `w^p` on the tracked branch.
    pub fn power(&self, p: f64) -> Complex64 {
        Complex64::from_polar(self.last.norm().powf(p), p * self.theta)
    }

    /// Number of full turns the argument made relative to the principal value.
    pub fn winding(&self) -> i64 {
        ((self.theta - self.last.arg()) / (2.0 * PI)).round() as i64
    }
}

pub fn det2(m: &Mat2) -> Complex64 {
    m[(0, 0)] * m[(1, 1)] - m[(0, 1)] * m[(1, 0)]
}

/// Inverse of a 2x2 matrix; `None` when `|det| < threshold`.
pub fn inv2(m: &Mat2, threshold: f64) -> Option<Mat2> {
    let d = det2(m);
    if d.norm() < threshold {
        return None;
    }
    Some(Mat2::new(m[(1, 1)], -m[(0, 1)], -m[(1, 0)], m[(0, 0)]) / d)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn tracker_follows_winding() {
        // e^{i s} for s in [0, 3 pi]: the principal sqrt flips sign at pi,
        // the tracked one does not.
        let samples = (0..=300).map(|k| Complex64::from_polar(1.0, 3.0 * PI * k as f64 / 300.0));
        let t = PhaseTracker::track(samples).unwrap();
        assert_relative_eq!(t.theta(), 3.0 * PI, epsilon = 1e-12);
        let root = t.power(0.5);
        assert_relative_eq!(root.re, (1.5 * PI).cos(), epsilon = 1e-12);
        assert_relative_eq!(root.im, (1.5 * PI).sin(), epsilon = 1e-12);
        assert_eq!(t.winding(), 1);
    }

    #[test]
    fn tracker_rejects_jumps() {
        let mut t = PhaseTracker::new(Complex64::new(1.0, 0.0));
        assert!(t.push(Complex64::new(-1.0, 0.1)).is_err());
    }

    #[test]
    fn inverse_2x2() {
        let m = Mat2::new(
            Complex64::new(1.0, 1.0),
            Complex64::new(0.5, 0.0),
            Complex64::new(0.0, -2.0),
            Complex64::new(3.0, 0.0),
        );
        let inv = inv2(&m, 1e-14).unwrap();
        let id = m * inv;
        assert_relative_eq!((id[(0, 0)] - 1.0).norm(), 0.0, epsilon = 1e-14);
        assert_relative_eq!(id[(0, 1)].norm(), 0.0, epsilon = 1e-14);
        assert!(inv2(&Mat2::zeros(), 1e-14).is_none());
    }
}
