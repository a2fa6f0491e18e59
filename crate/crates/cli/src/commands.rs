use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use ecpnn_core::observables::{curve_csv_string, energy_curve, energy_report};
use ecpnn_core::oracle::{density_from_solution, numerov_ground_state};
use ecpnn_core::trainer::multi_run;
use ecpnn_core::{
    amplitude, invert_local_potential, kinetic_ratio, load_density_csv, make_hydrogenic,
    make_sto_density, write_density_csv, DensityProfile, IcPoint, NaturalOrbitalSet,
    PotentialModel, RadialGrid, ReferencePotential, TrainConfig, TrainReport,
};
use log::{info, warn};
use serde::Serialize;

use crate::args::{
    Cli, DensityKind, EvalArgs, GenDensityArgs, InvertArgs, OracleArgs, PotentialKind, TrainArgs,
};
use crate::manifest::RunManifest;

#[derive(Debug)]
pub enum CliError {
    /// Bad or conflicting flags; exit code 2.
    Usage(String),
    /// Anything that fails while running; exit code 1.
    Run(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Run(_) => 1,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) | CliError::Run(m) => f.write_str(m),
        }
    }
}

impl From<ecpnn_core::Error> for CliError {
    fn from(e: ecpnn_core::Error) -> Self {
        CliError::Run(e.to_string())
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Run(e.to_string())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Run(e.to_string())
    }
}

type CliResult<T> = Result<T, CliError>;

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

fn positive(name: &str, v: Option<f64>, context: &str) -> CliResult<f64> {
    match v {
        None => Err(usage(format!("{name} is required for {context}"))),
        Some(x) if x > 0.0 && x.is_finite() => Ok(x),
        Some(x) => Err(usage(format!("{name} must be positive, got {x}"))),
    }
}

fn write_json(path: &Path, value: &impl Serialize) -> CliResult<()> {
    std::fs::write(path, serde_json::to_string_pretty(value)? + "\n")
        .map_err(|e| CliError::Run(format!("{}: {e}", path.display())))
}

fn load_density(path: &Path) -> CliResult<DensityProfile> {
    Ok(load_density_csv(path)?)
}

/// Run `body` between the initial and final manifest writes.
fn with_manifest(
    cli: &Cli,
    body: impl FnOnce(&mut RunManifest) -> CliResult<()>,
) -> CliResult<()> {
    std::fs::create_dir_all(&cli.out_dir)
        .map_err(|e| CliError::Run(format!("{}: {e}", cli.out_dir.display())))?;
    let mut manifest = RunManifest::new(&cli.out_dir);
    manifest.write()?;
    let result = body(&mut manifest);
    let status = match &result {
        Ok(()) => "ok".to_string(),
        Err(e) => format!("failed: {e}"),
    };
    manifest.finish(&status)?;
    result
}

fn oracle_grid(r_min: f64, r_max: f64) -> CliResult<RadialGrid> {
    if !(r_min > 0.0) {
        return Err(CliError::Run(format!(
            "Numerov densities need r_min > 0, got {r_min}"
        )));
    }
    let lo = r_min.min(1e-4);
    let hi = r_max.max(40.0);
    let n = (((hi - lo) / 0.01).ceil() as usize + 1).max(4000);
    Ok(RadialGrid::uniform(lo, hi, n)?)
}

pub fn gen_density(cli: &Cli, args: &GenDensityArgs) -> CliResult<()> {
    let kind = args.kind;
    let ctx = format!("--kind {}", kind_name(kind));
    if args.k.is_some() && kind != DensityKind::NumerovHarmonic {
        return Err(usage(format!("--k conflicts with {ctx}")));
    }
    if args.orbitals.is_some() && kind != DensityKind::Sto {
        return Err(usage(format!("--orbitals conflicts with {ctx}")));
    }
    if args.electrons != 1 && !matches!(kind, DensityKind::NumerovCoulomb | DensityKind::NumerovHarmonic) {
        return Err(usage(format!("--electrons conflicts with {ctx}")));
    }
    if args.electrons == 0 {
        return Err(usage("--electrons must be at least 1"));
    }
    let z = match kind {
        DensityKind::NumerovHarmonic => match args.z {
            Some(_) => positive("--z", args.z, &ctx)?,
            None => 1.0,
        },
        _ => positive("--z", args.z, &ctx)?,
    };
    let k = match kind {
        DensityKind::NumerovHarmonic => Some(positive("--k", args.k, &ctx)?),
        _ => None,
    };
    let orbitals = match kind {
        DensityKind::Sto => Some(
            args.orbitals
                .clone()
                .ok_or_else(|| usage(format!("--orbitals is required for {ctx}")))?,
        ),
        _ => None,
    };

    with_manifest(cli, |manifest| {
        manifest.config = serde_json::json!({
            "kind": kind_name(kind), "z": z, "k": k, "electrons": args.electrons,
            "rmin": args.rmin, "rmax": args.rmax, "npoints": args.npoints,
        });
        let grid = RadialGrid::uniform(args.rmin, args.rmax, args.npoints)?;
        let mut provenance = vec![("source".to_string(), kind_name(kind).to_string())];
        let density = match kind {
            DensityKind::Hydrogenic => make_hydrogenic(z, &grid)?,
            DensityKind::Sto => {
                let path = orbitals.as_deref().expect("checked above");
                manifest.add_input(path)?;
                let text = std::fs::read_to_string(path)
                    .map_err(|e| CliError::Run(format!("{}: {e}", path.display())))?;
                make_sto_density(&NaturalOrbitalSet::from_json(&text)?, &grid, z)?
            }
            DensityKind::NumerovCoulomb | DensityKind::NumerovHarmonic => {
                let potential = match k {
                    Some(k) => ReferencePotential::Harmonic { k },
                    None => ReferencePotential::Coulomb { z },
                };
                let sol = numerov_ground_state(&potential, &oracle_grid(args.rmin, args.rmax)?)?;
                provenance.push(("potential".into(), potential.describe()));
                provenance.push(("epsilon".into(), format!("{:.12}", sol.epsilon)));
                density_from_solution(&sol, args.electrons, z)?
                    .resample(&grid)?
                    .relabel(potential.describe())
            }
        };
        provenance.push(("normalization".into(), format!("{:.8}", density.normalization())));
        write_density_csv(&density, &args.out, &provenance)?;
        manifest.outputs.push(args.out.clone());
        info!(
            "wrote {} points to {} (∫ρ = {:.6})",
            density.grid().len(),
            args.out.display(),
            density.normalization()
        );
        Ok(())
    })
}

fn kind_name(kind: DensityKind) -> &'static str {
    match kind {
        DensityKind::Hydrogenic => "hydrogenic",
        DensityKind::NumerovCoulomb => "numerov-coulomb",
        DensityKind::NumerovHarmonic => "numerov-harmonic",
        DensityKind::Sto => "sto",
    }
}

#[derive(Debug, Serialize)]
struct Aggregate {
    runs: usize,
    final_total_mean: f64,
    final_total_std: f64,
    final_ec_mean: f64,
    final_ec_std: f64,
}

#[derive(Debug, Serialize)]
struct TrainOutput<'a> {
    density_sha256: String,
    runs: &'a [TrainReport],
    aggregate: Aggregate,
}

fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (m, 0.0);
    }
    let var = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
    (m, var.sqrt())
}

fn train_config(cli: &Cli, args: &TrainArgs) -> CliResult<TrainConfig> {
    let mut cfg = match &cli.config {
        Some(path) => TrainConfig::from_file(path)?,
        None => TrainConfig::default(),
    };
    match (args.ic, &cli.config) {
        (Some([r0, y0]), _) => cfg.ic_point = IcPoint { r0, y0 },
        (None, Some(_)) => {}
        (None, None) => return Err(usage("--ic r0,y0 is required (or an ic_point in --config)")),
    }
    if let Some(v) = cli.seed {
        cfg.seed = v;
    }
    if let Some(v) = args.epochs {
        cfg.epochs = v;
    }
    if let Some(v) = args.lr {
        cfg.learning_rate = v;
    }
    if let Some(v) = args.l2 {
        cfg.l2_weight = v;
    }
    if let Some(v) = args.samples {
        cfg.n_samples = v;
    }
    if let Some(v) = args.batch_size {
        cfg.batch_size = v;
    }
    if let Some(v) = args.domain {
        cfg.domain = v;
    }
    if let Some(v) = args.ic_weight {
        cfg.ic_weight = v;
    }
    if let Some(v) = args.occupancy_divisor {
        cfg.occupancy_divisor = v;
    }
    if args.clip.is_some() {
        cfg.max_grad_norm = args.clip;
    }
    cfg.validate().map_err(|e| usage(e.to_string()))?;
    Ok(cfg)
}

pub fn train(cli: &Cli, args: &TrainArgs) -> CliResult<()> {
    let cfg = train_config(cli, args)?;
    with_manifest(cli, |manifest| {
        manifest.config = serde_json::to_value(&cfg)?;
        manifest.add_input(&args.density)?;
        let density = load_density(&args.density)?;
        warn_on_edge_effects(&density, cfg.domain);

        let runs = multi_run(&density, &cfg, args.runs as usize)?;
        for (model, report) in &runs {
            let path = cli.out_dir.join(format!("model_{}.ecpnn", report.seed));
            model.save(&path)?;
            manifest.outputs.push(path);
            info!(
                "seed {}: final total {:.4e}, ec {:.4e}, ic {:.4e} ({:.1} s)",
                report.seed,
                report.final_loss.total,
                report.final_loss.ec,
                report.final_loss.ic,
                report.wall_time_s
            );
        }
        let reports: Vec<TrainReport> = runs.into_iter().map(|(_, r)| r).collect();
        let (tm, ts) = mean_std(&reports.iter().map(|r| r.final_loss.total).collect::<Vec<_>>());
        let (em, es) = mean_std(&reports.iter().map(|r| r.final_loss.ec).collect::<Vec<_>>());
        let out = TrainOutput {
            density_sha256: manifest.inputs[0].sha256.clone(),
            runs: &reports,
            aggregate: Aggregate {
                runs: reports.len(),
                final_total_mean: tm,
                final_total_std: ts,
                final_ec_mean: em,
                final_ec_std: es,
            },
        };
        let path = cli.out_dir.join("train_report.json");
        write_json(&path, &out)?;
        manifest.outputs.push(path);
        Ok(())
    })
}

/// Spline end conditions distort q' within a few grid spacings of the ends.
fn warn_on_edge_effects(density: &DensityProfile, domain: [f64; 2]) {
    let pts = density.grid().points();
    let n = pts.len();
    let margin = 5.min(n - 1);
    if domain[0] < pts[margin] || domain[1] > pts[n - 1 - margin] {
        warn!(
            "density grid [{}, {}] barely covers the training domain [{}, {}]; \
             spline end effects will enter the loss",
            pts[0],
            pts[n - 1],
            domain[0],
            domain[1]
        );
    }
}

pub fn eval(cli: &Cli, args: &EvalArgs) -> CliResult<()> {
    with_manifest(cli, |manifest| {
        manifest.config = serde_json::json!({
            "window_bohr": args.window,
            "reference_ha": args.reference,
            "occupancy_divisor": args.occupancy_divisor,
        });
        manifest.add_input(&args.density)?;
        let density = load_density(&args.density)?;
        let models = args
            .model
            .iter()
            .map(|p| {
                manifest.add_input(p)?;
                Ok(PotentialModel::load(p)?)
            })
            .collect::<CliResult<Vec<_>>>()?;
        let q = kinetic_ratio(&amplitude(&density, args.occupancy_divisor)?)?;
        let report = energy_report(&density, &q, &models, args.window, args.reference)?;
        let path = cli.out_dir.join("energy_report.json");
        write_json(&path, &report)?;
        manifest.outputs.push(path);

        let curve = energy_curve(&models[0], &q)?;
        let path = cli.out_dir.join("curves.csv");
        std::fs::write(&path, curve_csv_string(&curve, Some(&density))?)?;
        manifest.outputs.push(path);
        info!(
            "energy estimate {:.6} ha, <T> {:.6}, <V> {:.6}, virial rel {}",
            report.energy_estimate,
            report.t_expectation,
            report.v_expectation,
            report
                .virial_deviation_rel
                .map_or("n/a".to_string(), |v| format!("{v:.4}"))
        );
        Ok(())
    })
}

pub fn oracle(cli: &Cli, args: &OracleArgs) -> CliResult<()> {
    let potential = match args.potential {
        PotentialKind::Coulomb => {
            if args.k.is_some() {
                return Err(usage("--k conflicts with --potential coulomb"));
            }
            ReferencePotential::Coulomb {
                z: positive("--z", args.z, "--potential coulomb")?,
            }
        }
        PotentialKind::Harmonic => {
            if args.z.is_some() {
                return Err(usage("--z conflicts with --potential harmonic"));
            }
            ReferencePotential::Harmonic {
                k: positive("--k", args.k, "--potential harmonic")?,
            }
        }
    };
    if args.electrons == 0 {
        return Err(usage("--electrons must be at least 1"));
    }
    let grid = RadialGrid::uniform(args.rmin, args.rmax, args.npoints)?;
    let solve = || -> CliResult<_> { Ok(numerov_ground_state(&potential, &grid)?) };

    match &args.emit_density {
        None => {
            println!("{:.6}", solve()?.epsilon);
            Ok(())
        }
        Some(out) => with_manifest(cli, |manifest| {
            manifest.config = serde_json::json!({
                "potential": potential.describe(), "rmin": args.rmin, "rmax": args.rmax,
                "npoints": args.npoints, "electrons": args.electrons,
            });
            let sol = solve()?;
            let z = match potential {
                ReferencePotential::Coulomb { z } => z,
                _ => 1.0,
            };
            let density = density_from_solution(&sol, args.electrons, z)?.relabel(potential.describe());
            let provenance = vec![
                ("source".to_string(), "numerov".to_string()),
                ("potential".to_string(), potential.describe()),
                ("epsilon".to_string(), format!("{:.12}", sol.epsilon)),
            ];
            write_density_csv(&density, out, &provenance)?;
            manifest.outputs.push(out.clone());
            println!("{:.6}", sol.epsilon);
            Ok(())
        }),
    }
}

pub fn invert(cli: &Cli, args: &InvertArgs) -> CliResult<()> {
    if !(args.occupancy_divisor > 0.0) {
        return Err(usage("--occupancy-divisor must be positive"));
    }
    with_manifest(cli, |manifest| {
        manifest.config = serde_json::json!({
            "epsilon_ha": args.epsilon,
            "occupancy_divisor": args.occupancy_divisor,
        });
        manifest.add_input(&args.density)?;
        let density = load_density(&args.density)?;
        let amp = amplitude(&density, args.occupancy_divisor)?;
        if amp.floored_points() > 0 {
            warn!(
                "{} amplitude values were raised to the floor; the inversion is unreliable there",
                amp.floored_points()
            );
        }
        let v = invert_local_potential(&amp, args.epsilon)?;
        let mut csv = String::from("r,v\n");
        for (r, v) in v.grid().points().iter().zip(v.values()) {
            let _ = writeln!(csv, "{r:.17e},{v:.17e}");
        }
        let out: PathBuf = args
            .out
            .clone()
            .unwrap_or_else(|| cli.out_dir.join("inverted_potential.csv"));
        std::fs::write(&out, csv).map_err(|e| CliError::Run(format!("{}: {e}", out.display())))?;
        manifest.outputs.push(out);
        Ok(())
    })
}
