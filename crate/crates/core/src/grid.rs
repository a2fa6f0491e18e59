use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Minimum number of points a radial grid may carry.
pub const MIN_GRID_POINTS: usize = 16;

/// Strictly increasing, non-negative radii in bohr.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct RadialGrid {
    points: Vec<f64>,
}

impl RadialGrid {
    pub fn new(points: Vec<f64>) -> Result<Self> {
        if points.len() < MIN_GRID_POINTS {
            return Err(Error::Validation(format!(
                "radial grid needs at least {MIN_GRID_POINTS} points, got {}",
                points.len()
            )));
        }
        if let Some(bad) = points.iter().find(|r| !r.is_finite() || **r < 0.0) {
            return Err(Error::Validation(format!(
                "radial grid points must be finite and non-negative, found {bad}"
            )));
        }
        if let Some(w) = points.windows(2).position(|w| w[1] <= w[0]) {
            return Err(Error::Validation(format!(
                "radial grid must be strictly increasing (index {}: {} then {})",
                w,
                points[w],
                points[w + 1]
            )));
        }
        Ok(Self { points })
    }

    /// `n` equally spaced points covering `[r_min, r_max]` inclusive.
    pub fn uniform(r_min: f64, r_max: f64, n: usize) -> Result<Self> {
        if !(r_max > r_min) {
            return Err(Error::Validation(format!(
                "empty radial interval [{r_min}, {r_max}]"
            )));
        }
        if n < 2 {
            return Self::new(vec![r_min; n]);
        }
        let h = (r_max - r_min) / (n - 1) as f64;
        let mut points: Vec<f64> = (0..n).map(|i| r_min + i as f64 * h).collect();
        points[n - 1] = r_max;
        Self::new(points)
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn r_min(&self) -> f64 {
        self.points[0]
    }

    pub fn r_max(&self) -> f64 {
        self.points[self.points.len() - 1]
    }

    pub fn contains(&self, r: f64) -> bool {
        r >= self.r_min() && r <= self.r_max()
    }

    /// Spacing if the grid is uniform to within `rel_tol` of the mean step.
    pub fn uniform_step(&self, rel_tol: f64) -> Option<f64> {
        let n = self.points.len();
        let h = (self.r_max() - self.r_min()) / (n - 1) as f64;
        self.points
            .windows(2)
            .all(|w| ((w[1] - w[0]) - h).abs() <= rel_tol * h)
            .then_some(h)
    }

    /// Index `i` of the interval `[points[i], points[i+1]]` containing `r`.
    /// Points at or beyond the right edge map to the last interval.
    pub(crate) fn interval(&self, r: f64) -> usize {
        let last = self.points.len() - 2;
        match self.points.binary_search_by(|p| p.total_cmp(&r)) {
            Ok(i) => i.min(last),
            Err(i) => i.saturating_sub(1).min(last),
        }
    }
}

impl TryFrom<Vec<f64>> for RadialGrid {
    type Error = Error;

    fn try_from(points: Vec<f64>) -> Result<Self> {
        Self::new(points)
    }
}

impl From<RadialGrid> for Vec<f64> {
    fn from(grid: RadialGrid) -> Self {
        grid.points
    }
}
