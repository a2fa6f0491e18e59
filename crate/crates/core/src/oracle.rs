//! Ground-truth generator: s-wave radial Schrödinger solutions by Numerov
//! shooting, the densities they imply, and full learn-from-density round
//! trips against a known potential.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::calculus::{kinetic_ratio, quadrature, SplineField, Weight};
use crate::density::{amplitude, DensityProfile};
use crate::error::{Error, Result};
use crate::grid::RadialGrid;
use crate::model::PotentialModel;
use crate::observables::{energy_curve, energy_estimate, RadialPotential};
use crate::trainer::{train_on_field, IcPoint, TrainConfig, TrainReport};

/// Bisection stops once the eigenvalue bracket is narrower than this.
pub const EPSILON_TOL: f64 = 1e-9;
const RESCALE_AT: f64 = 1e100;

#[derive(Debug, Clone, PartialEq)]
pub enum ReferencePotential {
    /// V = −Z/r.
    Coulomb { z: f64 },
    /// V = ½kr².
    Harmonic { k: f64 },
    /// Spline table; undefined outside its grid.
    Tabulated(SplineField),
}

impl ReferencePotential {
    pub fn eval(&self, r: f64) -> Result<f64> {
        let v = match self {
            Self::Coulomb { z } => -z / r,
            Self::Harmonic { k } => 0.5 * k * r * r,
            Self::Tabulated(s) => s.eval(r)?,
        };
        if v.is_finite() {
            Ok(v)
        } else {
            Err(Error::Domain(format!("potential not finite at r = {r}")))
        }
    }

    pub fn describe(&self) -> String {
        match self {
            Self::Coulomb { z } => format!("coulomb z={z}"),
            Self::Harmonic { k } => format!("harmonic k={k}"),
            Self::Tabulated(s) => format!(
                "tabulated [{}, {}]",
                s.grid().r_min(),
                s.grid().r_max()
            ),
        }
    }
}

impl RadialPotential for ReferencePotential {
    fn potential_at(&self, rs: &[f64]) -> Result<Vec<f64>> {
        rs.iter().map(|&r| self.eval(r)).collect()
    }
}

/// Reduced radial function u(r) = r·φ(r), normalized so ∫u² dr = 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EigenSolution {
    pub epsilon: f64,
    pub grid: RadialGrid,
    pub u: Vec<f64>,
    pub node_count: usize,
}

/// Lowest eigenpair of −½u'' + V(r)u = εu with u(0) = 0 and u(r_max) = 0.
pub fn numerov_ground_state(
    potential: &ReferencePotential,
    grid: &RadialGrid,
) -> Result<EigenSolution> {
    let h = grid
        .uniform_step(1e-9)
        .ok_or_else(|| Error::Validation("Numerov integration needs a uniform grid".into()))?;
    let r = grid.points();
    let v = potential.potential_at(r)?;
    let n = r.len();

    let (v_min, mut hi) = v
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &x| {
            (a.min(x), b.max(x))
        });
    if shoot(r, &v, h, hi).0 == 0 {
        return Err(Error::NoEigenvalue(format!(
            "no bound state below max V = {hi} for {}",
            potential.describe()
        )));
    }
    // Far below the spectrum a singular V destabilizes the recursion.
    let mut width = 1.0;
    let mut lo = (hi - width).max(v_min);
    while lo > v_min && shoot(r, &v, h, lo).0 > 0 {
        hi = lo;
        width *= 2.0;
        lo = (hi - width).max(v_min);
    }
    while hi - lo > EPSILON_TOL {
        let mid = 0.5 * (lo + hi);
        if shoot(r, &v, h, mid).0 == 0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let epsilon = 0.5 * (lo + hi);

    let m = turning_point(&v, epsilon).clamp(2, n - 3);
    let mut u = vec![0.0; n];
    let g = |i: usize| 2.0 * (v[i] - epsilon);
    let c = |i: usize| 1.0 - h * h * g(i) / 12.0;

    start(r, &v, &mut u);
    for i in 1..m {
        u[i + 1] = step(u[i], u[i - 1], c(i + 1), c(i), c(i - 1));
        if u[i + 1].abs() > RESCALE_AT {
            u[..=i + 1].iter_mut().for_each(|x| *x /= RESCALE_AT);
        }
    }
    let left = u[m];

    let mut w = vec![0.0; n];
    w[n - 1] = 0.0;
    w[n - 2] = 1e-30;
    for i in (m + 1..n - 1).rev() {
        w[i - 1] = step(w[i], w[i + 1], c(i - 1), c(i), c(i + 1));
        if w[i - 1].abs() > RESCALE_AT {
            w[i - 1..].iter_mut().for_each(|x| *x /= RESCALE_AT);
        }
    }
    if w[m] == 0.0 || left == 0.0 {
        return Err(Error::Numeric("matching point falls on a node".into()));
    }
    let scale = left / w[m];
    for i in m + 1..n {
        u[i] = w[i] * scale;
    }

    let norm = quadrature(grid, &u.iter().map(|x| x * x).collect::<Vec<_>>(), Weight::None).sqrt();
    let sign = if u[n / 4].is_sign_negative() { -1.0 } else { 1.0 };
    u.iter_mut().for_each(|x| *x *= sign / norm);
    if u.iter().any(|x| !x.is_finite()) {
        return Err(Error::Numeric("eigenfunction not finite".into()));
    }
    let node_count = count_nodes(&u);
    Ok(EigenSolution {
        epsilon,
        grid: grid.clone(),
        u,
        node_count,
    })
}

/// u(r) ≈ r(1 − Z_eff·r) at the first two points, with Z_eff read off the
/// Coulomb-like part of V at the origin.
fn start(r: &[f64], v: &[f64], u: &mut [f64]) {
    let z_eff = -r[0] * v[0];
    u[0] = r[0] * (1.0 - z_eff * r[0]);
    u[1] = r[1] * (1.0 - z_eff * r[1]);
}

fn step(cur: f64, prev: f64, c_next: f64, c_cur: f64, c_prev: f64) -> f64 {
    ((12.0 - 10.0 * c_cur) * cur - c_prev * prev) / c_next
}

/// Outward integration over the whole grid: (sign changes, final value).
fn shoot(r: &[f64], v: &[f64], h: f64, epsilon: f64) -> (usize, f64) {
    let c = |i: usize| 1.0 - h * h * (v[i] - epsilon) / 6.0;
    let mut u = [0.0; 2];
    start(r, v, &mut u);
    let (mut prev, mut cur) = (u[0], u[1]);
    let mut nodes = usize::from(prev * cur < 0.0);
    for i in 1..r.len() - 1 {
        let mut next = step(cur, prev, c(i + 1), c(i), c(i - 1));
        if next.abs() > RESCALE_AT {
            next /= RESCALE_AT;
            cur /= RESCALE_AT;
        }
        if next * cur < 0.0 || (next == 0.0 && cur != 0.0) {
            nodes += 1;
        }
        prev = cur;
        cur = next;
    }
    (nodes, cur)
}

/// Outermost index where the state is classically allowed.
fn turning_point(v: &[f64], epsilon: f64) -> usize {
    v.iter().rposition(|&x| x < epsilon).unwrap_or(v.len() / 2)
}

fn count_nodes(u: &[f64]) -> usize {
    let scale = u.iter().fold(0.0f64, |a, x| a.max(x.abs()));
    let significant: Vec<f64> = u
        .iter()
        .copied()
        .filter(|x| x.abs() > 1e-10 * scale)
        .collect();
    significant.windows(2).filter(|w| w[0] * w[1] < 0.0).count()
}

/// ρ(r) = N·(u/r)²/4π.
pub fn density_from_solution(
    sol: &EigenSolution,
    n_electrons: u32,
    nuclear_charge: f64,
) -> Result<DensityProfile> {
    if sol.grid.r_min() <= 0.0 {
        return Err(Error::Domain("oracle grid must start at r > 0".into()));
    }
    let n = f64::from(n_electrons);
    let rho = sol
        .grid
        .points()
        .iter()
        .zip(&sol.u)
        .map(|(r, u)| n * (u / r).powi(2) / (4.0 * PI))
        .collect();
    DensityProfile::new(
        sol.grid.clone(),
        rho,
        n_electrons,
        nuclear_charge,
        "numerov",
    )
}

/// Oracle grid, training grid and comparison windows of a round trip.
#[derive(Debug, Clone, PartialEq)]
pub struct RoundTripSetup {
    pub oracle_grid: RadialGrid,
    pub training_points: usize,
    /// Extra span on each side of the training domain covered by the
    /// training grid, so spline end effects stay outside the sampled region.
    pub padding: f64,
    pub n_electrons: u32,
    /// Written into the density profile; must be positive.
    pub nuclear_charge: f64,
    pub energy_window: [f64; 2],
    pub potential_window: [f64; 2],
}

impl RoundTripSetup {
    pub fn new(nuclear_charge: f64) -> Self {
        Self {
            oracle_grid: RadialGrid::uniform(1e-4, 40.0, 4000).expect("static grid"),
            training_points: 2000,
            padding: 1.0,
            n_electrons: 1,
            nuclear_charge,
            energy_window: [0.5, 8.0],
            potential_window: [0.5, 8.0],
        }
    }

    fn training_grid(&self, [lo, hi]: [f64; 2]) -> Result<RadialGrid> {
        let o = &self.oracle_grid;
        let lo = (lo - self.padding).max(0.5 * lo).max(o.r_min());
        let hi = (hi + self.padding).min(o.r_max());
        RadialGrid::uniform(lo, hi, self.training_points)
    }
}

#[derive(Debug, Clone)]
pub struct RoundTripReport {
    pub epsilon_true: f64,
    pub energy_estimate: f64,
    pub energy_error: f64,
    pub potential_max_abs_error: f64,
    pub model: PotentialModel,
    pub train_report: TrainReport,
}

/// Solve for the ground state of `potential`, learn a potential from the
/// resulting density on the training domain, and compare. The IC value is
/// replaced by the true potential at `config.ic_point.r0`; the potential
/// error is the largest deviation on training-grid points in the window.
pub fn round_trip(
    potential: &ReferencePotential,
    config: &TrainConfig,
    setup: &RoundTripSetup,
) -> Result<RoundTripReport> {
    let sol = numerov_ground_state(potential, &setup.oracle_grid)?;
    let dense = density_from_solution(&sol, setup.n_electrons, setup.nuclear_charge)?;
    let train_grid = setup.training_grid(config.domain)?;
    let density = dense.resample(&train_grid)?;

    let mut cfg = config.clone();
    cfg.ic_point = IcPoint {
        r0: config.ic_point.r0,
        y0: potential.eval(config.ic_point.r0)?,
    };
    let q = kinetic_ratio(&amplitude(&density, cfg.occupancy_divisor)?)?;
    let (model, train_report) = train_on_field(&q, &cfg, &potential.describe())?;

    let e = energy_estimate(&energy_curve(&model, &q)?, setup.energy_window)?;
    let [wlo, whi] = setup.potential_window;
    let probe: Vec<f64> = train_grid
        .points()
        .iter()
        .copied()
        .filter(|r| *r >= wlo && *r <= whi)
        .collect();
    let learned = model.potential_at(&probe)?;
    let truth = potential.potential_at(&probe)?;
    let potential_max_abs_error = learned
        .iter()
        .zip(&truth)
        .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
    Ok(RoundTripReport {
        epsilon_true: sol.epsilon,
        energy_estimate: e,
        energy_error: (e - sol.epsilon).abs(),
        potential_max_abs_error,
        model,
        train_report,
    })
}
