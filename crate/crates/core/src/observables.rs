//! Quantities computed from a trained potential: the local energy curve and
//! its scalar estimate, kinetic and potential expectation values, virial
//! deviation, run statistics and the direct density-to-potential inversion.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::calculus::{kinetic_ratio, quadrature, KineticRatioField, SplineField, Weight};
use crate::density::{AmplitudeProfile, DensityProfile};
use crate::error::{Error, Result};
use crate::grid::RadialGrid;
use crate::model::PotentialModel;

pub const DEFAULT_ENERGY_WINDOW: [f64; 2] = [0.5, 8.0];

/// Anything that can be evaluated as a radial potential U(r).
pub trait RadialPotential {
    fn potential_at(&self, rs: &[f64]) -> Result<Vec<f64>>;
}

impl RadialPotential for PotentialModel {
    fn potential_at(&self, rs: &[f64]) -> Result<Vec<f64>> {
        if rs.is_empty() {
            return Ok(Vec::new());
        }
        Ok(self.forward_batch(rs)?.value)
    }
}

impl RadialPotential for SplineField {
    fn potential_at(&self, rs: &[f64]) -> Result<Vec<f64>> {
        rs.iter().map(|&r| self.eval(r)).collect()
    }
}

impl<F: Fn(f64) -> f64> RadialPotential for F {
    fn potential_at(&self, rs: &[f64]) -> Result<Vec<f64>> {
        Ok(rs.iter().map(|&r| self(r)).collect())
    }
}

/// E(r) = q(r) + U(r) on the grid of q.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnergyCurve {
    pub grid: RadialGrid,
    pub q: Vec<f64>,
    pub u: Vec<f64>,
    pub e_of_r: Vec<f64>,
}

pub fn energy_curve(potential: &impl RadialPotential, q: &KineticRatioField) -> Result<EnergyCurve> {
    let grid = q.grid().clone();
    let qv = q.field.values().to_vec();
    let u = potential.potential_at(grid.points())?;
    let e_of_r: Vec<f64> = qv.iter().zip(&u).map(|(a, b)| a + b).collect();
    if let Some(i) = e_of_r.iter().position(|e| !e.is_finite()) {
        return Err(Error::Numeric(format!(
            "energy curve not finite at r = {}",
            grid.points()[i]
        )));
    }
    Ok(EnergyCurve {
        grid,
        q: qv,
        u,
        e_of_r,
    })
}

/// Median of E(r) over the grid points inside `window`.
pub fn energy_estimate(curve: &EnergyCurve, window: [f64; 2]) -> Result<f64> {
    let [lo, hi] = window;
    let mut vals: Vec<f64> = curve
        .grid
        .points()
        .iter()
        .zip(&curve.e_of_r)
        .filter(|(r, _)| **r >= lo && **r <= hi)
        .map(|(_, e)| *e)
        .collect();
    if vals.is_empty() {
        return Err(Error::Domain(format!(
            "no grid points inside the energy window [{lo}, {hi}]"
        )));
    }
    Ok(median(&mut vals))
}

fn median(vals: &mut [f64]) -> f64 {
    vals.sort_by(f64::total_cmp);
    let n = vals.len();
    if n % 2 == 1 {
        vals[n / 2]
    } else {
        0.5 * (vals[n / 2 - 1] + vals[n / 2])
    }
}

/// ⟨T⟩ = ∫ q ρ 4πr² dr on the density grid. Not divided by N.
pub fn expectation_t(density: &DensityProfile, q: &KineticRatioField) -> Result<f64> {
    let qv = q.field.resample(density.grid())?;
    weighted(density, &qv)
}

/// ⟨V⟩ = ∫ U ρ 4πr² dr on the density grid.
pub fn expectation_v(density: &DensityProfile, potential: &impl RadialPotential) -> Result<f64> {
    let u = potential.potential_at(density.grid().points())?;
    weighted(density, &u)
}

fn weighted(density: &DensityProfile, f: &[f64]) -> Result<f64> {
    let prod: Vec<f64> = f.iter().zip(density.rho()).map(|(a, b)| a * b).collect();
    let v = quadrature(density.grid(), &prod, Weight::Spherical);
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::Numeric("expectation value is not finite".into()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VirialDeviation {
    /// 2⟨T⟩ + ⟨V⟩.
    pub abs: f64,
    /// |2⟨T⟩ + ⟨V⟩| / |⟨V⟩|, absent when ⟨V⟩ = 0.
    pub rel: Option<f64>,
}

pub fn virial_deviation(t: f64, v: f64) -> VirialDeviation {
    let abs = 2.0 * t + v;
    VirialDeviation {
        abs,
        rel: (v != 0.0).then(|| abs.abs() / v.abs()),
    }
}

/// Root-mean-square error against `reference` and the sample standard
/// deviation of the per-run absolute errors (zero for a single run).
pub fn rmse_vs_reference(energies: &[f64], reference: f64) -> Result<(f64, f64)> {
    if energies.is_empty() {
        return Err(Error::Domain("no runs to compare against the reference".into()));
    }
    let n = energies.len() as f64;
    let rmse = (energies.iter().map(|e| (e - reference).powi(2)).sum::<f64>() / n).sqrt();
    let abs_err: Vec<f64> = energies.iter().map(|e| (e - reference).abs()).collect();
    Ok((rmse, sample_std(&abs_err)))
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

fn sample_std(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let m = mean(xs);
    (xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() - 1) as f64).sqrt()
}

/// V(r) = ε + ½∇²φ/φ = ε − q(r), splined on the amplitude grid.
pub fn invert_local_potential(amp: &AmplitudeProfile, epsilon: f64) -> Result<SplineField> {
    let q = kinetic_ratio(amp)?;
    let v: Vec<f64> = q.field.values().iter().map(|q| epsilon - q).collect();
    SplineField::fit(amp.grid(), &v)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShellPeaks {
    pub potential_max_r: f64,
    /// Inter-shell minimum of 4πr²ρ; absent for fewer than two peaks.
    pub radial_density_min_r: Option<f64>,
}

/// Grid argmax of U inside `window`, and the argmin of 4πr²ρ between the
/// two largest local maxima of the radial distribution.
pub fn shell_peak_analysis(
    density: &DensityProfile,
    potential: &impl RadialPotential,
    window: [f64; 2],
) -> Result<ShellPeaks> {
    let [lo, hi] = window;
    let rs: Vec<f64> = density
        .grid()
        .points()
        .iter()
        .copied()
        .filter(|r| *r > lo && *r < hi)
        .collect();
    if rs.is_empty() {
        return Err(Error::Domain(format!(
            "no density grid points inside ({lo}, {hi})"
        )));
    }
    let u = potential.potential_at(&rs)?;
    let imax = argmax(&u);

    let p = density.radial_distribution();
    let mut peaks: Vec<usize> = (1..p.len() - 1)
        .filter(|&i| p[i] > p[i - 1] && p[i] >= p[i + 1])
        .collect();
    peaks.sort_by(|&a, &b| p[b].total_cmp(&p[a]));
    let radial_density_min_r = match peaks[..] {
        [a, b, ..] => {
            let (a, b) = (a.min(b), a.max(b));
            let neg: Vec<f64> = p[a..=b].iter().map(|v| -v).collect();
            Some(density.grid().points()[a + argmax(&neg)])
        }
        _ => None,
    };
    Ok(ShellPeaks {
        potential_max_r: rs[imax],
        radial_density_min_r,
    })
}

fn argmax(v: &[f64]) -> usize {
    v.iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .map(|(i, _)| i)
        .unwrap_or(0)
}

/// Observables of one trained model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunObservables {
    pub seed: u64,
    #[serde(rename = "energy_estimate_ha")]
    pub energy_estimate: f64,
    #[serde(rename = "v_expectation_ha")]
    pub v_expectation: f64,
    #[serde(rename = "virial_deviation_abs_ha")]
    pub virial_deviation_abs: f64,
    pub virial_deviation_rel: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnergyReport {
    pub density_label: String,
    #[serde(rename = "energy_window_bohr")]
    pub energy_window: [f64; 2],
    /// Mean over runs of the per-run median energy.
    #[serde(rename = "energy_estimate_ha")]
    pub energy_estimate: f64,
    #[serde(rename = "per_run_energies_ha")]
    pub per_run_energies: Vec<f64>,
    #[serde(rename = "energy_mean_ha")]
    pub mean: f64,
    #[serde(rename = "energy_std_ha")]
    pub std: f64,
    #[serde(rename = "t_expectation_ha")]
    pub t_expectation: f64,
    /// Mean over runs.
    #[serde(rename = "v_expectation_ha")]
    pub v_expectation: f64,
    /// ⟨T⟩ + ⟨V⟩, the density-weighted alternative to the curve median.
    #[serde(rename = "expectation_energy_ha")]
    pub expectation_energy: f64,
    #[serde(rename = "virial_deviation_abs_ha")]
    pub virial_deviation_abs: f64,
    pub virial_deviation_rel: Option<f64>,
    #[serde(rename = "reference_energy_ha", skip_serializing_if = "Option::is_none")]
    pub reference_energy: Option<f64>,
    /// (rmse, spread) against the reference.
    #[serde(rename = "rmse_vs_reference_ha", skip_serializing_if = "Option::is_none")]
    pub rmse_vs_reference: Option<(f64, f64)>,
    pub runs: Vec<RunObservables>,
}

pub fn energy_report(
    density: &DensityProfile,
    q: &KineticRatioField,
    models: &[PotentialModel],
    window: [f64; 2],
    reference: Option<f64>,
) -> Result<EnergyReport> {
    if models.is_empty() {
        return Err(Error::Domain("energy report needs at least one model".into()));
    }
    let t = expectation_t(density, q)?;
    let runs = models
        .iter()
        .map(|m| {
            let e = energy_estimate(&energy_curve(m, q)?, window)?;
            let v = expectation_v(density, m)?;
            let dev = virial_deviation(t, v);
            Ok(RunObservables {
                seed: m.seed(),
                energy_estimate: e,
                v_expectation: v,
                virial_deviation_abs: dev.abs,
                virial_deviation_rel: dev.rel,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let energies: Vec<f64> = runs.iter().map(|r| r.energy_estimate).collect();
    let vs: Vec<f64> = runs.iter().map(|r| r.v_expectation).collect();
    let v = mean(&vs);
    let dev = virial_deviation(t, v);
    let m = mean(&energies);
    Ok(EnergyReport {
        density_label: density.label().to_string(),
        energy_window: window,
        energy_estimate: m,
        mean: m,
        std: sample_std(&energies),
        t_expectation: t,
        v_expectation: v,
        expectation_energy: t + v,
        virial_deviation_abs: dev.abs,
        virial_deviation_rel: dev.rel,
        reference_energy: reference,
        rmse_vs_reference: reference
            .map(|r| rmse_vs_reference(&energies, r))
            .transpose()?,
        per_run_energies: energies,
        runs,
    })
}

/// CSV with columns `r,q,u,e` and, when a density is given, `4pir2rho`.
pub fn curve_csv_string(curve: &EnergyCurve, density: Option<&DensityProfile>) -> Result<String> {
    let radial = match density {
        Some(d) if d.grid() == &curve.grid => Some(d.radial_distribution()),
        Some(d) => Some(d.resample(&curve.grid)?.radial_distribution()),
        None => None,
    };
    let mut out = String::from(if radial.is_some() {
        "r,q,u,e,4pir2rho\n"
    } else {
        "r,q,u,e\n"
    });
    for (i, r) in curve.grid.points().iter().enumerate() {
        let _ = write!(
            out,
            "{:.17e},{:.17e},{:.17e},{:.17e}",
            r, curve.q[i], curve.u[i], curve.e_of_r[i]
        );
        if let Some(p) = &radial {
            let _ = write!(out, ",{:.17e}", p[i]);
        }
        out.push('\n');
    }
    Ok(out)
}

pub fn write_curve_csv(
    curve: &EnergyCurve,
    density: Option<&DensityProfile>,
    path: impl AsRef<Path>,
) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, curve_csv_string(curve, density)?).map_err(|e| Error::io(path, e))
}
