//! Periodic one-dimensional grid on `[-L, L)`.

use crate::error::{Error, Result};
use serde::Serialize;
use std::f64::consts::PI;

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct GridSpec {
    half_width: f64,
    n_points: usize,
}

impl GridSpec {
    pub fn new(half_width: f64, n_points: usize) -> Result<Self> {
        if !(half_width.is_finite() && half_width > 0.0) {
            return Err(Error::config("grid.L", format!("half-width must be positive, got {half_width}")));
        }
        if n_points < 4 || !n_points.is_power_of_two() {
            return Err(Error::config(
                "grid.n_points",
                format!("must be a power of two >= 4, got {n_points}"),
            ));
        }
        Ok(GridSpec { half_width, n_points })
    }

    pub fn half_width(&self) -> f64 {
        self.half_width
    }

    pub fn n_points(&self) -> usize {
        self.n_points
    }

    pub fn dx(&self) -> f64 {
        2.0 * self.half_width / self.n_points as f64
    }

    /// Spatial node `x_j = -L + j Δx`.
    pub fn x(&self, j: usize) -> f64 {
        -self.half_width + j as f64 * self.dx()
    }

    /// Index of the node at (or nearest to) `x`.
    pub fn index_of(&self, x: f64) -> usize {
        let j = ((x + self.half_width) / self.dx()).round();
        (j.max(0.0) as usize).min(self.n_points - 1)
    }

    /// Frequency spacing `π / L`.
    pub fn dxi(&self) -> f64 {
        PI / self.half_width
    }

    /// `ξ_k = π k / L`.
    pub fn xi(&self, k: usize) -> f64 {
        k as f64 * self.dxi()
    }

    /// Number of stored non-negative frequencies `n/2 + 1`.
    pub fn n_freq(&self) -> usize {
        self.n_points / 2 + 1
    }

    pub fn xi_max(&self) -> f64 {
        self.xi(self.n_points / 2)
    }
}
