//! Points, multi-indices and open boxes in R^s for s in {1, 2}.

use std::fmt;

use crate::error::{Error, Result};

/// A point of R^s stored in a fixed two-slot array; for s = 1 the second
/// coordinate is ignored and kept at zero.
pub type Point = [f64; 2];

pub fn point1(x: f64) -> Point {
    [x, 0.0]
}

pub fn add(a: &Point, b: &Point) -> Point {
    [a[0] + b[0], a[1] + b[1]]
}

pub fn sub(a: &Point, b: &Point) -> Point {
    [a[0] - b[0], a[1] - b[1]]
}

pub fn scale(a: &Point, k: f64) -> Point {
    [a[0] * k, a[1] * k]
}

pub fn norm(a: &Point, dim: usize) -> f64 {
    if dim == 1 {
        a[0].abs()
    } else {
        a[0].hypot(a[1])
    }
}

pub fn check_dim(dim: usize) -> Result<()> {
    if dim == 1 || dim == 2 {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("dimension {dim} not supported (s must be 1 or 2)")))
    }
}

/// Multi-index alpha in N_0^s.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct MultiIndex(pub [u32; 2]);

impl MultiIndex {
    pub const ZERO: MultiIndex = MultiIndex([0, 0]);

    pub fn d1(k: u32) -> Self {
        MultiIndex([k, 0])
    }

    pub fn d2(a: u32, b: u32) -> Self {
        MultiIndex([a, b])
    }

    pub fn unit(axis: usize) -> Self {
        let mut m = [0, 0];
        m[axis] = 1;
        MultiIndex(m)
    }

    pub fn order(&self) -> u32 {
        self.0[0] + self.0[1]
    }

    pub fn plus(&self, other: &MultiIndex) -> MultiIndex {
        MultiIndex([self.0[0] + other.0[0], self.0[1] + other.0[1]])
    }

    /// Componentwise `self - other` when `other <= self`.
    pub fn checked_minus(&self, other: &MultiIndex) -> Option<MultiIndex> {
        Some(MultiIndex([
            self.0[0].checked_sub(other.0[0])?,
            self.0[1].checked_sub(other.0[1])?,
        ]))
    }

    /// x^alpha
    pub fn monomial(&self, x: &Point) -> f64 {
        x[0].powi(self.0[0] as i32) * x[1].powi(self.0[1] as i32)
    }

    /// All multi-indices of dimension `dim` with `lo <= |alpha| <= hi`, graded
    /// by order and lexicographic within an order.
    pub fn all(dim: usize, lo: u32, hi: u32) -> Vec<MultiIndex> {
        let mut out = Vec::new();
        for total in lo..=hi {
            if dim == 1 {
                out.push(MultiIndex([total, 0]));
            } else {
                for a in (0..=total).rev() {
                    out.push(MultiIndex([a, total - a]));
                }
            }
        }
        out
    }
}

impl fmt::Display for MultiIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{})", self.0[0], self.0[1])
    }
}

/// An open box `(lo_1, hi_1) x (lo_2, hi_2)`; bounds may be infinite.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Domain {
    pub dim: usize,
    pub lo: Point,
    pub hi: Point,
}

impl Domain {
    pub fn whole(dim: usize) -> Self {
        Domain {
            dim,
            lo: [f64::NEG_INFINITY; 2],
            hi: [f64::INFINITY; 2],
        }
    }

    pub fn interval(lo: f64, hi: f64) -> Self {
        Domain {
            dim: 1,
            lo: [lo, f64::NEG_INFINITY],
            hi: [hi, f64::INFINITY],
        }
    }

    pub fn rect(lo: Point, hi: Point) -> Self {
        Domain { dim: 2, lo, hi }
    }

    pub fn is_whole(&self) -> bool {
        (0..self.dim).all(|i| self.lo[i] == f64::NEG_INFINITY && self.hi[i] == f64::INFINITY)
    }

    pub fn contains(&self, x: &Point) -> bool {
        (0..self.dim).all(|i| self.lo[i] < x[i] && x[i] < self.hi[i])
    }

    /// Whether the closed ball B(center, radius) lies inside the open box.
    pub fn contains_ball(&self, center: &Point, radius: f64) -> bool {
        (0..self.dim).all(|i| self.lo[i] < center[i] - radius && center[i] + radius < self.hi[i])
    }

    /// Distance from `x` to the boundary (infinite for the whole space).
    pub fn boundary_distance(&self, x: &Point) -> f64 {
        (0..self.dim)
            .map(|i| (x[i] - self.lo[i]).min(self.hi[i] - x[i]))
            .fold(f64::INFINITY, f64::min)
    }

    pub fn intersect(&self, other: &Domain) -> Domain {
        Domain {
            dim: self.dim,
            lo: [self.lo[0].max(other.lo[0]), self.lo[1].max(other.lo[1])],
            hi: [self.hi[0].min(other.hi[0]), self.hi[1].min(other.hi[1])],
        }
    }

    pub fn require_ball(&self, center: &Point, radius: f64, what: &str) -> Result<()> {
        if self.contains_ball(center, radius) {
            Ok(())
        } else {
            Err(Error::Domain(format!(
                "{what}: support B({:?}, {radius:e}) is not contained in {self}",
                &center[..self.dim]
            )))
        }
    }
}

impl fmt::Display for Domain {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.dim == 1 {
            write!(f, "({}, {})", self.lo[0], self.hi[0])
        } else {
            write!(f, "({}, {}) x ({}, {})", self.lo[0], self.hi[0], self.lo[1], self.hi[1])
        }
    }
}
