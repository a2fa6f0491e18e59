use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "ecpnn", version, about = "Learn effective radial potentials from densities")]
pub struct Cli {
    /// Random seed (training initialization and sampling).
    #[arg(long, global = true)]
    pub seed: Option<u64>,

    /// Only print warnings and errors.
    #[arg(long, short, global = true)]
    pub quiet: bool,

    /// Directory for reports, models and the run manifest.
    #[arg(long, global = true, default_value = ".")]
    pub out_dir: PathBuf,

    /// TOML file with training settings; command-line flags take precedence.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Tabulate a density and write it as CSV.
    GenDensity(GenDensityArgs),
    /// Train potential models on a density.
    Train(TrainArgs),
    /// Evaluate trained models: energies, virial check, curves.
    Eval(EvalArgs),
    /// Solve the radial Schrödinger equation for a reference potential.
    Oracle(OracleArgs),
    /// Invert a density directly to a local potential for a given ε.
    Invert(InvertArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum DensityKind {
    Hydrogenic,
    NumerovCoulomb,
    NumerovHarmonic,
    Sto,
}

#[derive(Debug, Args)]
pub struct GenDensityArgs {
    #[arg(long, value_enum)]
    pub kind: DensityKind,
    /// Nuclear charge.
    #[arg(long, allow_negative_numbers = true)]
    pub z: Option<f64>,
    /// Oscillator force constant.
    #[arg(long, allow_negative_numbers = true)]
    pub k: Option<f64>,
    /// JSON natural-orbital set for `--kind sto`.
    #[arg(long)]
    pub orbitals: Option<PathBuf>,
    /// Electrons placed in the oracle orbital.
    #[arg(long, default_value_t = 1)]
    pub electrons: u32,
    #[arg(long)]
    pub rmin: f64,
    #[arg(long)]
    pub rmax: f64,
    #[arg(long)]
    pub npoints: usize,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub density: PathBuf,
    /// Anchor point `r0,y0` fixing the additive constant.
    #[arg(long, value_parser = parse_pair, allow_hyphen_values = true)]
    pub ic: Option<[f64; 2]>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub l2: Option<f64>,
    #[arg(long)]
    pub samples: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    /// Training interval `r_min,r_max`.
    #[arg(long, value_parser = parse_pair)]
    pub domain: Option<[f64; 2]>,
    #[arg(long)]
    pub ic_weight: Option<f64>,
    #[arg(long)]
    pub occupancy_divisor: Option<f64>,
    /// Rescale gradients whose global norm exceeds this value.
    #[arg(long)]
    pub clip: Option<f64>,
    /// Independent runs with consecutive seeds.
    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u64).range(1..))]
    pub runs: u64,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long, num_args = 1.., required = true)]
    pub model: Vec<PathBuf>,
    #[arg(long)]
    pub density: PathBuf,
    /// Reference energy in hartree for the RMSE block.
    #[arg(long, allow_negative_numbers = true)]
    pub reference: Option<f64>,
    /// Energy averaging window `r_lo,r_hi`.
    #[arg(long, value_parser = parse_pair, default_value = "0.5,8")]
    pub window: [f64; 2],
    #[arg(long, default_value_t = 1.0)]
    pub occupancy_divisor: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PotentialKind {
    Coulomb,
    Harmonic,
}

#[derive(Debug, Args)]
pub struct OracleArgs {
    #[arg(long, value_enum)]
    pub potential: PotentialKind,
    #[arg(long, allow_negative_numbers = true)]
    pub z: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    pub k: Option<f64>,
    #[arg(long, default_value_t = 1e-4)]
    pub rmin: f64,
    #[arg(long, default_value_t = 40.0)]
    pub rmax: f64,
    #[arg(long, default_value_t = 4000)]
    pub npoints: usize,
    #[arg(long, default_value_t = 1)]
    pub electrons: u32,
    /// Print the eigenvalue only.
    #[arg(long, conflicts_with = "emit_density")]
    pub solve_only: bool,
    /// Also write the ground-state density CSV here.
    #[arg(long)]
    pub emit_density: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct InvertArgs {
    #[arg(long)]
    pub density: PathBuf,
    #[arg(long, allow_negative_numbers = true)]
    pub epsilon: f64,
    #[arg(long, default_value_t = 1.0)]
    pub occupancy_divisor: f64,
    /// Output CSV; defaults to `inverted_potential.csv` in the output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn parse_pair(s: &str) -> Result<[f64; 2], String> {
    let parts: Vec<&str> = s.split(',').map(str::trim).collect();
    match parts[..] {
        [a, b] => {
            let a: f64 = a.parse().map_err(|_| format!("not a number: {a}"))?;
            let b: f64 = b.parse().map_err(|_| format!("not a number: {b}"))?;
            Ok([a, b])
        }
        _ => Err(format!("expected two comma-separated numbers, got `{s}`")),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pairs() {
        assert_eq!(parse_pair("8,-0.125").unwrap(), [8.0, -0.125]);
        assert_eq!(parse_pair(" 0.5 , 8 ").unwrap(), [0.5, 8.0]);
        assert!(parse_pair("1").is_err());
        assert!(parse_pair("a,b").is_err());
    }

    #[test]
    fn cli_is_well_formed() {
        use clap::CommandFactory;
        Cli::command().debug_assert();
    }
}
