//! Natural cubic splines on radial grids, the s-wave Laplacian, radial
//! quadrature, and the kinetic-ratio field derived from a proxy amplitude.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::density::AmplitudeProfile;
use crate::error::{Error, Result};
use crate::grid::RadialGrid;

/// ħ²/2m in atomic units.
pub const HBAR2_OVER_2M: f64 = 0.5;

/// Relative tolerance used to decide whether a grid is uniform for quadrature.
const UNIFORM_TOL: f64 = 1e-9;

/// Natural cubic spline: piecewise cubic, C² at interior knots, zero second
/// derivative at both ends.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplineField {
    grid: RadialGrid,
    /// `[a, b, c, d]` per interval, so `s(r) = a + b·dx + c·dx² + d·dx³`
    /// with `dx = r - points[i]`.
    coefficients: Vec<[f64; 4]>,
    values: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Weight {
    None,
    /// Spherical shell measure 4πr².
    Spherical,
}

impl SplineField {
    pub fn fit(grid: &RadialGrid, values: &[f64]) -> Result<Self> {
        let n = grid.len();
        if values.len() != n {
            return Err(Error::Validation(format!(
                "spline values have length {} but grid has {n} points",
                values.len()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Numeric(format!(
                "non-finite spline value {} at r = {}",
                values[i],
                grid.points()[i]
            )));
        }
        let x = grid.points();
        let h: Vec<f64> = x.windows(2).map(|w| w[1] - w[0]).collect();

        // Second derivatives m[i]; natural ends m[0] = m[n-1] = 0.
        // Thomas algorithm over the interior unknowns.
        let mut m = vec![0.0; n];
        let interior = n - 2;
        let mut diag = vec![0.0; interior];
        let mut rhs = vec![0.0; interior];
        let mut upper = vec![0.0; interior];
        for k in 0..interior {
            let i = k + 1;
            diag[k] = 2.0 * (h[i - 1] + h[i]);
            upper[k] = h[i];
            rhs[k] = 6.0
                * ((values[i + 1] - values[i]) / h[i] - (values[i] - values[i - 1]) / h[i - 1]);
        }
        for k in 1..interior {
            let w = h[k] / diag[k - 1];
            diag[k] -= w * upper[k - 1];
            rhs[k] -= w * rhs[k - 1];
        }
        if interior > 0 {
            m[interior] = rhs[interior - 1] / diag[interior - 1];
            for k in (0..interior - 1).rev() {
                m[k + 1] = (rhs[k] - upper[k] * m[k + 2]) / diag[k];
            }
        }

        let coefficients = (0..n - 1)
            .map(|i| {
                let a = values[i];
                let b = (values[i + 1] - values[i]) / h[i] - h[i] * (2.0 * m[i] + m[i + 1]) / 6.0;
                let c = m[i] / 2.0;
                let d = (m[i + 1] - m[i]) / (6.0 * h[i]);
                [a, b, c, d]
            })
            .collect();

        Ok(Self {
            grid: grid.clone(),
            coefficients,
            values: values.to_vec(),
        })
    }

    pub fn grid(&self) -> &RadialGrid {
        &self.grid
    }

    /// The fitted nodal values.
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn coefficients(&self) -> &[[f64; 4]] {
        &self.coefficients
    }

    fn check_domain(&self, r: f64) -> Result<()> {
        if self.grid.contains(r) {
            Ok(())
        } else {
            Err(Error::Domain(format!(
                "r = {r} outside spline domain [{}, {}]",
                self.grid.r_min(),
                self.grid.r_max()
            )))
        }
    }

    /// Value, first and second derivative without a domain check; points
    /// outside the grid are extrapolated with the end cubic.
    pub(crate) fn eval_unchecked(&self, r: f64) -> (f64, f64, f64) {
        let i = self.grid.interval(r);
        let [a, b, c, d] = self.coefficients[i];
        let dx = r - self.grid.points()[i];
        (
            a + dx * (b + dx * (c + dx * d)),
            b + dx * (2.0 * c + 3.0 * dx * d),
            2.0 * c + 6.0 * dx * d,
        )
    }

    pub fn eval(&self, r: f64) -> Result<f64> {
        self.check_domain(r)?;
        Ok(self.eval_unchecked(r).0)
    }

    /// Analytic derivative of the cubic piece containing `r`; `order` is 1 or 2.
    pub fn derivative(&self, r: f64, order: u8) -> Result<f64> {
        self.check_domain(r)?;
        let (_, d1, d2) = self.eval_unchecked(r);
        match order {
            1 => Ok(d1),
            2 => Ok(d2),
            _ => Err(Error::Domain(format!(
                "derivative order must be 1 or 2, got {order}"
            ))),
        }
    }

    /// Second derivative at knot `i` from the left and from the right piece.
    pub fn knot_second_derivatives(&self, i: usize) -> Option<(f64, f64)> {
        if i == 0 || i + 1 >= self.grid.len() {
            return None;
        }
        let h = self.grid.points()[i] - self.grid.points()[i - 1];
        let [_, _, c, d] = self.coefficients[i - 1];
        let left = 2.0 * c + 6.0 * d * h;
        let right = 2.0 * self.coefficients[i][2];
        Some((left, right))
    }

    /// Evaluate on another grid; every point must lie inside this spline's domain.
    pub fn resample(&self, grid: &RadialGrid) -> Result<Vec<f64>> {
        grid.points().iter().map(|&r| self.eval(r)).collect()
    }
}

pub fn fit_spline(grid: &RadialGrid, values: &[f64]) -> Result<SplineField> {
    SplineField::fit(grid, values)
}

/// Spherically symmetric Laplacian `f'' + (2/r) f'`.
pub fn radial_laplacian(field: &SplineField, r: f64) -> Result<f64> {
    if r <= 0.0 {
        return Err(Error::Domain(format!(
            "radial Laplacian needs r > 0, got {r}"
        )));
    }
    field.check_domain(r)?;
    let (_, d1, d2) = field.eval_unchecked(r);
    Ok(d2 + 2.0 * d1 / r)
}

/// q(r) = −(ħ²/2m)·∇²|φ|/|φ|, tabulated on the amplitude grid and re-splined.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KineticRatioField {
    pub field: SplineField,
    pub hbar2_over_2m: f64,
    pub source: String,
}

impl KineticRatioField {
    pub fn grid(&self) -> &RadialGrid {
        self.field.grid()
    }

    pub fn value(&self, r: f64) -> Result<f64> {
        self.field.eval(r)
    }

    pub fn slope(&self, r: f64) -> Result<f64> {
        self.field.derivative(r, 1)
    }
}

pub fn kinetic_ratio(amp: &AmplitudeProfile) -> Result<KineticRatioField> {
    let phi_field = SplineField::fit(amp.grid(), amp.phi())?;
    let q = amp
        .grid()
        .points()
        .iter()
        .zip(amp.phi())
        .map(|(&r, &phi)| {
            let lap = radial_laplacian(&phi_field, r)?;
            let q = -HBAR2_OVER_2M * lap / phi;
            if q.is_finite() {
                Ok(q)
            } else {
                Err(Error::Numeric(format!("kinetic ratio not finite at r = {r}")))
            }
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(KineticRatioField {
        field: SplineField::fit(amp.grid(), &q)?,
        hbar2_over_2m: HBAR2_OVER_2M,
        source: amp.source().to_string(),
    })
}

/// ∫ f(r)·w(r) dr over the grid of the samples. Composite Simpson on uniform
/// grids (3/8 rule on the final three panels when the panel count is odd),
/// trapezoid otherwise. Nothing beyond the grid ends is added.
pub fn quadrature(grid: &RadialGrid, values: &[f64], weight: Weight) -> f64 {
    debug_assert_eq!(grid.len(), values.len());
    let x = grid.points();
    let f: Vec<f64> = match weight {
        Weight::None => values.to_vec(),
        Weight::Spherical => x
            .iter()
            .zip(values)
            .map(|(r, v)| 4.0 * PI * r * r * v)
            .collect(),
    };
    let n = f.len();
    match grid.uniform_step(UNIFORM_TOL) {
        Some(h) => {
            let panels = n - 1;
            let simpson_end = if panels.is_multiple_of(2) { n - 1 } else { n - 4 };
            let mut acc = 0.0;
            let mut i = 0;
            while i + 2 <= simpson_end {
                acc += h / 3.0 * (f[i] + 4.0 * f[i + 1] + f[i + 2]);
                i += 2;
            }
            if panels % 2 == 1 {
                let j = n - 4;
                acc += 3.0 * h / 8.0 * (f[j] + 3.0 * f[j + 1] + 3.0 * f[j + 2] + f[j + 3]);
            }
            acc
        }
        None => x
            .windows(2)
            .zip(f.windows(2))
            .map(|(xw, fw)| 0.5 * (xw[1] - xw[0]) * (fw[0] + fw[1]))
            .sum(),
    }
}

pub fn integrate_radial(field: &SplineField, weight: Weight) -> f64 {
    quadrature(field.grid(), field.values(), weight)
}
