//! Radial one-electron densities: construction, CSV ingestion, the cusp
//! estimate, and the proxy amplitude |φ| = √(ρ/c).

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::calculus::{quadrature, SplineField, Weight};
use crate::error::{Error, Result};
use crate::grid::RadialGrid;

/// Default relative tolerance on ∫4πr²ρ dr against N; truncated tails lose mass.
pub const DEFAULT_NORM_TOLERANCE: f64 = 0.02;
/// Lower bound applied to the proxy amplitude.
pub const AMPLITUDE_FLOOR: f64 = 1e-12;
/// Number of innermost grid points used by the cusp fit.
pub const DEFAULT_CUSP_WINDOW: usize = 8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensityProfile {
    grid: RadialGrid,
    rho: Vec<f64>,
    n_electrons: u32,
    nuclear_charge: f64,
    label: String,
    norm_tolerance: f64,
}

impl DensityProfile {
    pub fn new(
        grid: RadialGrid,
        rho: Vec<f64>,
        n_electrons: u32,
        nuclear_charge: f64,
        label: impl Into<String>,
    ) -> Result<Self> {
        Self::with_tolerance(
            grid,
            rho,
            n_electrons,
            nuclear_charge,
            label,
            DEFAULT_NORM_TOLERANCE,
        )
    }

    pub fn with_tolerance(
        grid: RadialGrid,
        rho: Vec<f64>,
        n_electrons: u32,
        nuclear_charge: f64,
        label: impl Into<String>,
        norm_tolerance: f64,
    ) -> Result<Self> {
        let profile = Self {
            grid,
            rho,
            n_electrons,
            nuclear_charge,
            label: label.into(),
            norm_tolerance,
        };
        profile.validate()?;
        Ok(profile)
    }

    #[cfg(test)]
    pub(crate) fn new_unchecked(
        grid: RadialGrid,
        rho: Vec<f64>,
        n_electrons: u32,
        nuclear_charge: f64,
        label: &str,
    ) -> Self {
        Self {
            grid,
            rho,
            n_electrons,
            nuclear_charge,
            label: label.to_string(),
            norm_tolerance: DEFAULT_NORM_TOLERANCE,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.rho.len() != self.grid.len() {
            return Err(Error::Validation(format!(
                "density has {} values for {} grid points",
                self.rho.len(),
                self.grid.len()
            )));
        }
        if let Some(i) = self.rho.iter().position(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::Validation(format!(
                "density must be finite and non-negative, found {} at r = {}",
                self.rho[i],
                self.grid.points()[i]
            )));
        }
        if self.n_electrons == 0 {
            return Err(Error::Validation("electron count must be positive".into()));
        }
        if !(self.nuclear_charge > 0.0) || !self.nuclear_charge.is_finite() {
            return Err(Error::Validation(format!(
                "nuclear charge must be positive, got {}",
                self.nuclear_charge
            )));
        }
        let n = f64::from(self.n_electrons);
        let norm = self.normalization();
        if (norm - n).abs() > self.norm_tolerance * n {
            return Err(Error::Validation(format!(
                "density integrates to {norm:.6} electrons, expected {n} within {:.1}%",
                100.0 * self.norm_tolerance
            )));
        }
        Ok(())
    }

    pub fn grid(&self) -> &RadialGrid {
        &self.grid
    }

    pub fn rho(&self) -> &[f64] {
        &self.rho
    }

    pub fn n_electrons(&self) -> u32 {
        self.n_electrons
    }

    pub fn nuclear_charge(&self) -> f64 {
        self.nuclear_charge
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn norm_tolerance(&self) -> f64 {
        self.norm_tolerance
    }

    /// ∫ 4πr²ρ dr over the grid.
    pub fn normalization(&self) -> f64 {
        quadrature(&self.grid, &self.rho, Weight::Spherical)
    }

    /// Radial distribution 4πr²ρ(r) on the grid.
    pub fn radial_distribution(&self) -> Vec<f64> {
        self.grid
            .points()
            .iter()
            .zip(&self.rho)
            .map(|(r, rho)| 4.0 * PI * r * r * rho)
            .collect()
    }

    /// Interpolate onto `grid` with a natural spline, clamping small negative
    /// overshoots to zero. `grid` must lie inside this profile's grid.
    pub fn resample(&self, grid: &RadialGrid) -> Result<Self> {
        let spline = SplineField::fit(&self.grid, &self.rho)?;
        let rho = spline
            .resample(grid)?
            .into_iter()
            .map(|v| v.max(0.0))
            .collect();
        Self::with_tolerance(
            grid.clone(),
            rho,
            self.n_electrons,
            self.nuclear_charge,
            self.label.clone(),
            self.norm_tolerance,
        )
    }

    /// Same density under a new label.
    pub fn relabel(mut self, label: impl Into<String>) -> Self {
        self.label = label.into();
        self
    }
}

/// Closed-form hydrogenic ground-state density (Z³/π)·e^{−2Zr}.
pub fn hydrogenic_density(z: f64, r: f64) -> f64 {
    z.powi(3) / PI * (-2.0 * z * r).exp()
}

pub fn make_hydrogenic(z: f64, grid: &RadialGrid) -> Result<DensityProfile> {
    if !(z > 0.0) || !z.is_finite() {
        return Err(Error::Domain(format!(
            "nuclear charge must be positive, got {z}"
        )));
    }
    let rho = grid
        .points()
        .iter()
        .map(|&r| hydrogenic_density(z, r))
        .collect();
    DensityProfile::new(grid.clone(), rho, 1, z, format!("hydrogenic Z={z}"))
}

/// One Slater-type term `coefficient · r^(power−1) · e^(−exponent·r)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StoTerm {
    pub coefficient: f64,
    pub power: u32,
    pub exponent: f64,
}

/// Natural radial orbital χ(r) with its occupation and symmetry factor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NaturalOrbital {
    pub sto_terms: Vec<StoTerm>,
    pub occupation: f64,
    pub symmetry_factor: f64,
}

impl NaturalOrbital {
    /// Normalized hydrogenic 1s radial function 2Z^{3/2}e^{−Zr}.
    pub fn hydrogenic_1s(z: f64, occupation: f64) -> Self {
        Self {
            sto_terms: vec![StoTerm {
                coefficient: 2.0 * z.powf(1.5),
                power: 1,
                exponent: z,
            }],
            occupation,
            symmetry_factor: 1.0,
        }
    }

    /// Normalized hydrogenic 2s radial function (Z^{3/2}/2√2)(2 − Zr)e^{−Zr/2}.
    pub fn hydrogenic_2s(z: f64, occupation: f64) -> Self {
        let norm = z.powf(1.5) / (2.0 * 2f64.sqrt());
        Self {
            sto_terms: vec![
                StoTerm {
                    coefficient: 2.0 * norm,
                    power: 1,
                    exponent: z / 2.0,
                },
                StoTerm {
                    coefficient: -z * norm,
                    power: 2,
                    exponent: z / 2.0,
                },
            ],
            occupation,
            symmetry_factor: 1.0,
        }
    }

    pub fn chi(&self, r: f64) -> f64 {
        self.sto_terms
            .iter()
            .map(|t| t.coefficient * r.powi(t.power as i32 - 1) * (-t.exponent * r).exp())
            .sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NaturalOrbitalSet {
    pub orbitals: Vec<NaturalOrbital>,
}

impl NaturalOrbitalSet {
    pub fn new(orbitals: Vec<NaturalOrbital>) -> Result<Self> {
        let set = Self { orbitals };
        set.validate()?;
        Ok(set)
    }

    pub fn validate(&self) -> Result<()> {
        if self.orbitals.is_empty() {
            return Err(Error::Validation("natural orbital set is empty".into()));
        }
        for (i, orb) in self.orbitals.iter().enumerate() {
            if !(0.0..=2.0).contains(&orb.occupation) {
                return Err(Error::Validation(format!(
                    "orbital {i}: occupation {} outside [0, 2]",
                    orb.occupation
                )));
            }
            if !(orb.symmetry_factor > 0.0) {
                return Err(Error::Validation(format!(
                    "orbital {i}: symmetry factor must be positive"
                )));
            }
            if orb.sto_terms.is_empty() {
                return Err(Error::Validation(format!("orbital {i}: no STO terms")));
            }
            for t in &orb.sto_terms {
                if t.power < 1 || !(t.exponent > 0.0) || !t.coefficient.is_finite() {
                    return Err(Error::Validation(format!(
                        "orbital {i}: invalid STO term {t:?}"
                    )));
                }
            }
        }
        Ok(())
    }

    /// Σ f·n over all orbitals.
    pub fn electron_count(&self) -> f64 {
        self.orbitals
            .iter()
            .map(|o| o.symmetry_factor * o.occupation)
            .sum()
    }

    /// Σ f·n·χ²(r).
    pub fn weighted_square_sum(&self, r: f64) -> f64 {
        self.orbitals
            .iter()
            .map(|o| o.symmetry_factor * o.occupation * o.chi(r).powi(2))
            .sum()
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let set: Self = serde_json::from_str(text)?;
        set.validate()?;
        Ok(set)
    }
}

/// ρ(r) = Σ f·n·χ²(r) / 4π, with χ normalized as ∫χ²r²dr = 1 so that the
/// spherical density integrates to Σ f·n.
pub fn make_sto_density(
    orbitals: &NaturalOrbitalSet,
    grid: &RadialGrid,
    z: f64,
) -> Result<DensityProfile> {
    orbitals.validate()?;
    let rho = grid
        .points()
        .iter()
        .map(|&r| {
            let v = orbitals.weighted_square_sum(r) / (4.0 * PI);
            if v.is_finite() {
                Ok(v)
            } else {
                Err(Error::Numeric(format!("orbital value not finite at r = {r}")))
            }
        })
        .collect::<Result<Vec<f64>>>()?;
    let n = orbitals.electron_count().round();
    if n < 1.0 {
        return Err(Error::Validation(format!(
            "orbital occupations sum to {}, need at least one electron",
            orbitals.electron_count()
        )));
    }
    DensityProfile::new(grid.clone(), rho, n as u32, z, "sto")
}

/// Z estimated from the slope of ln ρ over the innermost `DEFAULT_CUSP_WINDOW` points.
pub fn cusp_exponent(profile: &DensityProfile) -> Result<f64> {
    cusp_exponent_with_window(profile, DEFAULT_CUSP_WINDOW)
}

pub fn cusp_exponent_with_window(profile: &DensityProfile, k: usize) -> Result<f64> {
    let grid = profile.grid();
    if grid.r_min() > 0.2 {
        return Err(Error::Domain(format!(
            "cusp fit needs the grid to start at r <= 0.2, starts at {}",
            grid.r_min()
        )));
    }
    if k < 2 || k > grid.len() {
        return Err(Error::Domain(format!("invalid cusp fit window {k}")));
    }
    let xs = &grid.points()[..k];
    let rho = &profile.rho()[..k];
    if let Some(i) = rho.iter().position(|v| *v <= 0.0) {
        return Err(Error::Numeric(format!(
            "non-positive density {} at r = {} inside the cusp window",
            rho[i], xs[i]
        )));
    }
    let ys: Vec<f64> = rho.iter().map(|v| v.ln()).collect();
    let kf = k as f64;
    let mx = xs.iter().sum::<f64>() / kf;
    let my = ys.iter().sum::<f64>() / kf;
    let (sxy, sxx) = xs
        .iter()
        .zip(&ys)
        .fold((0.0, 0.0), |(sxy, sxx), (x, y)| {
            (sxy + (x - mx) * (y - my), sxx + (x - mx) * (x - mx))
        });
    Ok(-(sxy / sxx) / 2.0)
}

/// Proxy amplitude |φ| = max(√(ρ/c), floor).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AmplitudeProfile {
    grid: RadialGrid,
    phi: Vec<f64>,
    occupancy_divisor: f64,
    source: String,
    floored: usize,
}

impl AmplitudeProfile {
    /// Build from explicit amplitude values; the floor still applies.
    pub fn from_values(
        grid: RadialGrid,
        phi: Vec<f64>,
        occupancy_divisor: f64,
        source: impl Into<String>,
    ) -> Result<Self> {
        if phi.len() != grid.len() {
            return Err(Error::Validation("amplitude length does not match grid".into()));
        }
        if !(occupancy_divisor > 0.0) {
            return Err(Error::Validation(format!(
                "occupancy divisor must be positive, got {occupancy_divisor}"
            )));
        }
        if phi.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::Validation("amplitude must be finite and non-negative".into()));
        }
        let mut floored = 0;
        let phi = phi
            .into_iter()
            .map(|v| {
                if v < AMPLITUDE_FLOOR {
                    floored += 1;
                    AMPLITUDE_FLOOR
                } else {
                    v
                }
            })
            .collect();
        Ok(Self {
            grid,
            phi,
            occupancy_divisor,
            source: source.into(),
            floored,
        })
    }

    pub fn grid(&self) -> &RadialGrid {
        &self.grid
    }

    pub fn phi(&self) -> &[f64] {
        &self.phi
    }

    pub fn occupancy_divisor(&self) -> f64 {
        self.occupancy_divisor
    }

    pub fn source(&self) -> &str {
        &self.source
    }

    /// How many points were raised to the amplitude floor.
    pub fn floored_points(&self) -> usize {
        self.floored
    }
}

pub fn amplitude(profile: &DensityProfile, occupancy_divisor: f64) -> Result<AmplitudeProfile> {
    if !(occupancy_divisor > 0.0) {
        return Err(Error::Validation(format!(
            "occupancy divisor must be positive, got {occupancy_divisor}"
        )));
    }
    let phi = profile
        .rho()
        .iter()
        .map(|rho| (rho / occupancy_divisor).sqrt())
        .collect();
    AmplitudeProfile::from_values(
        profile.grid().clone(),
        phi,
        occupancy_divisor,
        profile.label(),
    )
}

/// Write `# key=value` metadata, the `r,rho` header and one row per point
/// with 17 significant digits.
pub fn write_density_csv(
    profile: &DensityProfile,
    path: impl AsRef<Path>,
    provenance: &[(String, String)],
) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, density_csv_string(profile, provenance)).map_err(|e| Error::io(path, e))
}

pub fn density_csv_string(profile: &DensityProfile, provenance: &[(String, String)]) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "# N={}", profile.n_electrons());
    let _ = writeln!(out, "# Z={:.16e}", profile.nuclear_charge());
    let _ = writeln!(out, "# label={}", profile.label());
    for (k, v) in provenance {
        let _ = writeln!(out, "# {k}={v}");
    }
    out.push_str("r,rho\n");
    for (r, rho) in profile.grid().points().iter().zip(profile.rho()) {
        let _ = writeln!(out, "{r:.16e},{rho:.16e}");
    }
    out
}

pub fn load_density_csv(path: impl AsRef<Path>) -> Result<DensityProfile> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_density_csv(&text, path)
}

pub fn parse_density_csv(text: &str, path: &Path) -> Result<DensityProfile> {
    let parse_err = |line: usize, message: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        message,
    };
    let mut n_electrons: Option<u32> = None;
    let mut z: Option<f64> = None;
    let mut label: Option<String> = None;
    let mut seen_header = false;
    let mut rows: Vec<(f64, f64, usize)> = Vec::new();

    for (idx, raw) in text.lines().enumerate() {
        let lineno = idx + 1;
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        if let Some(comment) = line.strip_prefix('#') {
            if let Some((key, value)) = comment.trim().split_once('=') {
                let value = value.trim();
                match key.trim() {
                    "N" => {
                        n_electrons = Some(value.parse().map_err(|_| {
                            parse_err(lineno, format!("invalid electron count '{value}'"))
                        })?)
                    }
                    "Z" => {
                        z = Some(value.parse().map_err(|_| {
                            parse_err(lineno, format!("invalid nuclear charge '{value}'"))
                        })?)
                    }
                    "label" => label = Some(value.to_string()),
                    _ => {}
                }
            }
            continue;
        }
        if !seen_header {
            let cols: Vec<&str> = line.split(',').map(str::trim).collect();
            if cols != ["r", "rho"] {
                return Err(parse_err(lineno, format!("expected header 'r,rho', found '{line}'")));
            }
            seen_header = true;
            continue;
        }
        let mut cols = line.split(',').map(str::trim);
        let (Some(a), Some(b), None) = (cols.next(), cols.next(), cols.next()) else {
            return Err(parse_err(lineno, format!("expected two columns, found '{line}'")));
        };
        let r: f64 = a
            .parse()
            .map_err(|_| parse_err(lineno, format!("invalid radius '{a}'")))?;
        let rho: f64 = b
            .parse()
            .map_err(|_| parse_err(lineno, format!("invalid density '{b}'")))?;
        if !r.is_finite() || !rho.is_finite() {
            return Err(parse_err(lineno, "non-finite value".into()));
        }
        if rho < 0.0 {
            return Err(Error::Validation(format!(
                "negative density {rho} at r = {r} (line {lineno})"
            )));
        }
        rows.push((r, rho, lineno));
    }

    if !seen_header {
        return Err(parse_err(1, "missing 'r,rho' header".into()));
    }
    let n_electrons =
        n_electrons.ok_or_else(|| Error::Config(format!("{}: missing '# N=' metadata", path.display())))?;
    let z = z.ok_or_else(|| Error::Config(format!("{}: missing '# Z=' metadata", path.display())))?;

    rows.sort_by(|a, b| a.0.total_cmp(&b.0));
    if let Some(w) = rows.windows(2).find(|w| w[0].0 == w[1].0) {
        return Err(parse_err(
            w[1].2,
            format!("duplicate radius {} (also on line {})", w[1].0, w[0].2),
        ));
    }
    let grid = RadialGrid::new(rows.iter().map(|r| r.0).collect())?;
    let rho = rows.iter().map(|r| r.1).collect();
    let label = label.unwrap_or_else(|| {
        path.file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default()
    });
    DensityProfile::new(grid, rho, n_electrons, z, label)
}
