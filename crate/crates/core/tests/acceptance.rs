//! End-to-end acceptance suite. Each criterion prints one PASS/FAIL line.
//! Threshold misses are reported; errors while running a criterion make
//! the target exit nonzero.

use std::process::ExitCode;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use ecpnn_core::density::cusp_exponent;
use ecpnn_core::trainer::ec_loss;
use ecpnn_core::{
    amplitude, density_from_solution, energy_curve, energy_estimate, expectation_t,
    expectation_v, invert_local_potential, kinetic_ratio, make_hydrogenic, make_sto_density,
    numerov_ground_state, rmse_vs_reference, round_trip, shell_peak_analysis, train,
    virial_deviation, DensityProfile, IcPoint, KineticRatioField, NaturalOrbital,
    NaturalOrbitalSet, PotentialModel, RadialGrid, ReferencePotential, RoundTripSetup,
    TrainConfig, TrainReport, DEFAULT_ENERGY_WINDOW,
};

type Outcome = Result<(bool, String), Box<dyn std::error::Error>>;

struct Suite {
    passed: usize,
    failed: usize,
    errored: usize,
}

impl Suite {
    fn run(&mut self, id: u32, name: &str, f: impl FnOnce() -> Outcome) {
        match f() {
            Ok((true, detail)) => {
                self.passed += 1;
                println!("PASS [{id:>2}] {name}: {detail}");
            }
            Ok((false, detail)) => {
                self.failed += 1;
                println!("FAIL [{id:>2}] {name}: {detail}");
            }
            Err(e) => {
                self.errored += 1;
                println!("FAIL [{id:>2}] {name}: error: {e}");
            }
        }
    }
}

fn max_abs_error(model: &PotentialModel, rs: &[f64], truth: impl Fn(f64) -> f64) -> f64 {
    rs.iter()
        .map(|&r| (model.forward(r).unwrap() - truth(r)).abs())
        .fold(0.0, f64::max)
}

fn points_in(grid: &RadialGrid, [lo, hi]: [f64; 2]) -> Vec<f64> {
    grid.points()
        .iter()
        .copied()
        .filter(|r| *r >= lo && *r <= hi)
        .collect()
}

struct Hydrogen {
    q: KineticRatioField,
    model: PotentialModel,
    report: TrainReport,
    wall_s: f64,
}

fn hydrogen_density() -> DensityProfile {
    let grid = RadialGrid::uniform(0.05, 11.0, 2000).unwrap();
    make_hydrogenic(1.0, &grid).unwrap()
}

fn train_hydrogen() -> Result<Hydrogen, Box<dyn std::error::Error>> {
    let density = hydrogen_density();
    let cfg = TrainConfig {
        ic_point: IcPoint { r0: 8.0, y0: -0.125 },
        ..TrainConfig::default()
    };
    let start = Instant::now();
    let (model, report) = train(&density, &cfg)?;
    let wall_s = start.elapsed().as_secs_f64();
    let q = kinetic_ratio(&amplitude(&density, 1.0)?)?;
    Ok(Hydrogen { q, model, report, wall_s })
}

fn hydrogen_round_trip(h: &Hydrogen) -> Outcome {
    let rs = points_in(h.q.grid(), [0.5, 8.0]);
    let err = max_abs_error(&h.model, &rs, |r| -1.0 / r);
    let e = energy_estimate(&energy_curve(&h.model, &h.q)?, DEFAULT_ENERGY_WINDOW)?;
    let ok = err <= 0.05 && (e + 0.5).abs() <= 0.02 && h.wall_s <= 300.0;
    Ok((
        ok,
        format!(
            "max|U+1/r| on [0.5,8] = {err:.4} (<= 0.05), E = {e:.4} (-0.5 +/- 0.02), \
             wall = {:.1}s (<= 300), final ec = {:.3e}",
            h.wall_s, h.report.final_loss.ec
        ),
    ))
}

fn helium_like() -> Outcome {
    let pot = ReferencePotential::Coulomb { z: 2.0 };
    let cfg = TrainConfig {
        ic_point: IcPoint { r0: 8.0, y0: 0.0 },
        occupancy_divisor: 2.0,
        ..TrainConfig::default()
    };
    let setup = RoundTripSetup {
        n_electrons: 2,
        potential_window: [0.4, 5.0],
        ..RoundTripSetup::new(2.0)
    };
    let rep = round_trip(&pot, &cfg, &setup)?;
    let e = rep.energy_estimate;
    let ok = (e + 2.0).abs() <= 0.05 && rep.potential_max_abs_error <= 0.1;
    Ok((
        ok,
        format!(
            "E = {e:.4} (-2.0 +/- 0.05, oracle {:.6}), max|U-V| on [0.4,5] = {:.4} (<= 0.1)",
            rep.epsilon_true, rep.potential_max_abs_error
        ),
    ))
}

fn harmonic() -> Outcome {
    let pot = ReferencePotential::Harmonic { k: 1.0 };
    let cfg = TrainConfig {
        domain: [0.1, 6.0],
        ic_point: IcPoint { r0: 4.8, y0: 0.0 },
        ..TrainConfig::default()
    };
    let setup = RoundTripSetup {
        oracle_grid: RadialGrid::uniform(1e-4, 10.0, 4000)?,
        energy_window: [0.5, 5.0],
        potential_window: [0.5, 5.0],
        ..RoundTripSetup::new(1.0)
    };
    let rep = round_trip(&pot, &cfg, &setup)?;
    let e = rep.energy_estimate;
    Ok((
        (e - 1.5).abs() <= 0.02,
        format!(
            "E = {e:.4} (1.5 +/- 0.02, oracle {:.6}), max|U-V| on [0.5,5] = {:.4}",
            rep.epsilon_true, rep.potential_max_abs_error
        ),
    ))
}

fn virial(h: &Hydrogen) -> Outcome {
    let grid = RadialGrid::uniform(0.1, 10.0, 2000)?;
    let density = hydrogen_density().resample(&grid)?;
    let t = expectation_t(&density, &h.q)?;
    let v = expectation_v(&density, &h.model)?;
    let exact_v = expectation_v(&density, &|r: f64| -1.0 / r)?;
    let dev = virial_deviation(t, v);
    let floor = virial_deviation(t, exact_v);
    let rel = dev.rel.ok_or("zero potential energy")?;
    Ok((
        rel <= 0.02,
        format!(
            "|2T+V|/|V| = {rel:.4} (<= 0.02), T = {t:.4}, V = {v:.4}, \
             exact potential on the same domain gives {:.4}",
            floor.rel.unwrap_or(f64::NAN)
        ),
    ))
}

fn oracle() -> Outcome {
    let grid = RadialGrid::uniform(1e-4, 40.0, 4000)?;
    let mut worst_coulomb = 0.0f64;
    for z in [1.0, 2.0, 3.0] {
        let s = numerov_ground_state(&ReferencePotential::Coulomb { z }, &grid)?;
        worst_coulomb = worst_coulomb.max((s.epsilon + z * z / 2.0).abs());
    }
    let ho_grid = RadialGrid::uniform(1e-4, 10.0, 4000)?;
    let ho = ReferencePotential::Harmonic { k: 1.0 };
    let ho_err = (numerov_ground_state(&ho, &ho_grid)?.epsilon - 1.5).abs();
    let h = ReferencePotential::Coulomb { z: 1.0 };
    let coarse = RadialGrid::uniform(1e-4, 40.0, 401)?;
    let fine = RadialGrid::uniform(1e-4, 40.0, 801)?;
    let e_c = (numerov_ground_state(&h, &coarse)?.epsilon + 0.5).abs();
    let e_f = (numerov_ground_state(&h, &fine)?.epsilon + 0.5).abs();
    let ratio = e_c / e_f;
    let ok = worst_coulomb <= 1e-5 && ho_err <= 1e-6 && ratio >= 8.0;
    Ok((
        ok,
        format!(
            "coulomb Z=1..3 worst |eps+Z^2/2| = {worst_coulomb:.2e} (<= 1e-5), \
             harmonic |eps-1.5| = {ho_err:.2e} (<= 1e-6), step-halving ratio = {ratio:.1} (>= 8)"
        ),
    ))
}

fn autodiff() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut model = PotentialModel::init(17);
    for p in model.params_mut() {
        *p += rng.gen_range(-0.05..0.05);
    }
    let n = model.n_params();
    let h = 1e-5;
    let mut worst_rel = 0.0f64;
    let mut violations = 0;
    let mut significant = 0;
    for _ in 0..400 {
        let r = rng.gen_range(0.1..10.0);
        let a = rng.gen_range(-1.0..1.0);
        let g = rng.gen_range(-1.0..1.0);
        let k = rng.gen_range(0..n);
        let bp = model.backprop(r, a, g)?.flat()[k];
        let objective = |eps: f64| {
            let mut m = model.clone();
            *m.params_mut().nth(k).unwrap() += eps;
            let (u, du) = m.forward_with_input_grad(r).unwrap();
            a * u + g * du
        };
        let fd = (objective(h) - objective(-h)) / (2.0 * h);
        let diff = (bp - fd).abs();
        let scale = bp.abs().max(fd.abs());
        if scale > 1e-8 {
            significant += 1;
            worst_rel = worst_rel.max(diff / scale);
        }
        if diff > 1e-8 && diff > 1e-4 * scale {
            violations += 1;
        }
    }
    let mut worst_input = 0.0f64;
    for _ in 0..100 {
        let r = rng.gen_range(0.1..10.0);
        let (_, d) = model.forward_with_input_grad(r)?;
        let fd = (model.forward(r + h)? - model.forward(r - h)?) / (2.0 * h);
        worst_input = worst_input.max((d - fd).abs() / d.abs().max(1e-8));
    }
    Ok((
        violations == 0 && worst_input <= 1e-6,
        format!(
            "400 parameter probes ({significant} above the 1e-8 floor), worst relative error = \
             {worst_rel:.2e} (<= 1e-4), {violations} violations, input-derivative worst relative error = {worst_input:.2e} (<= 1e-6)"
        ),
    ))
}

fn shift_invariance(h: &Hydrogen) -> Outcome {
    let batch = points_in(h.q.grid(), [0.1, 10.0]);
    let shift = 0.375;
    let mut shifted = h.model.clone();
    shifted.set_output_bias(h.model.output_bias() + shift);
    let l0 = ec_loss(&h.model, &h.q, &batch)?;
    let l1 = ec_loss(&shifted, &h.q, &batch)?;
    let e0 = energy_estimate(&energy_curve(&h.model, &h.q)?, DEFAULT_ENERGY_WINDOW)?;
    let e1 = energy_estimate(&energy_curve(&shifted, &h.q)?, DEFAULT_ENERGY_WINDOW)?;
    let de = (e1 - e0 - shift).abs();
    Ok((
        l0 == l1 && de <= 1e-12,
        format!(
            "ec_loss {l0:.6e} -> {l1:.6e} (identical: {}), energy shift error = {de:.1e}",
            l0 == l1
        ),
    ))
}

fn inversion() -> Outcome {
    let grid = RadialGrid::uniform(0.1, 10.0, 2000)?;
    let amp = amplitude(&make_hydrogenic(1.0, &grid)?, 1.0)?;
    let v = invert_local_potential(&amp, -0.5)?;
    let err = points_in(&grid, [0.5, 8.0])
        .iter()
        .map(|&r| (v.eval(r).unwrap() + 1.0 / r).abs())
        .fold(0.0, f64::max);
    Ok((err <= 1e-3, format!("max|V+1/r| on [0.5,8] = {err:.2e} (<= 1e-3)")))
}

fn cusp() -> Outcome {
    let grid = RadialGrid::uniform(1e-4, 40.0, 4000)?;
    let mut worst = 0.0f64;
    let mut found = Vec::new();
    for z in [1.0, 2.0] {
        let s = numerov_ground_state(&ReferencePotential::Coulomb { z }, &grid)?;
        let d = density_from_solution(&s, 1, z)?;
        let c = cusp_exponent(&d)?;
        worst = worst.max((c - z).abs() / z);
        found.push(format!("{c:.4}"));
    }
    Ok((
        worst <= 0.01,
        format!("Z = 1, 2 recovered as {} (worst relative {worst:.2e}, <= 1%)", found.join(", ")),
    ))
}

fn determinism() -> Outcome {
    let density = hydrogen_density();
    let cfg = TrainConfig {
        epochs: 20,
        n_samples: 1000,
        seed: 11,
        ..TrainConfig::default()
    };
    let dir = tempfile::tempdir()?;
    let mut files = Vec::new();
    let mut traces = Vec::new();
    for i in 0..2 {
        let (model, report) = train(&density, &cfg)?;
        let path = dir.path().join(format!("run{i}.ecpnn"));
        model.save(&path)?;
        files.push(std::fs::read(&path)?);
        traces.push((report.loss_total, report.loss_ec, report.loss_ic, report.loss_l2));
    }
    let same_files = files[0] == files[1];
    let same_traces = traces[0] == traces[1];
    Ok((
        same_files && same_traces,
        format!(
            "model files identical: {same_files} ({} bytes), loss traces identical: {same_traces}",
            files[0].len()
        ),
    ))
}

fn statistics() -> Outcome {
    let li_ref = -7.477487;
    let offsets = [0.02, 0.04, 0.06, 0.088, 0.12];
    let runs: Vec<f64> = offsets.iter().map(|o| li_ref + o).collect();
    let (rmse, spread) = rmse_vs_reference(&runs, li_ref)?;

    let errs: Vec<f64> = runs.iter().map(|e| e - li_ref).collect();
    let n = errs.len() as f64;
    let mean_offset = errs.iter().sum::<f64>() / n;
    let expect_rmse = (errs.iter().map(|e| e * e).sum::<f64>() / n).sqrt();
    let abs: Vec<f64> = errs.iter().map(|e| e.abs()).collect();
    let m = abs.iter().sum::<f64>() / n;
    let expect_spread = (abs.iter().map(|a| (a - m).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();

    let be_ref: f64 = -14.66101;
    let be_runs = [-14.64, -14.68];
    let (be_rmse, _) = rmse_vs_reference(&be_runs, be_ref)?;
    let be_expect = (be_runs.iter().map(|e| (e - be_ref).powi(2)).sum::<f64>() / 2.0).sqrt();

    let ok = rmse == expect_rmse
        && spread == expect_spread
        && be_rmse == be_expect
        && format!("{rmse:.2} +/- {spread:.2}") == "0.07 +/- 0.04"
        && (mean_offset - 0.0656).abs() < 1e-12
        && format!("{be_rmse:.5}") == "0.02003";
    Ok((
        ok,
        format!(
            "Li mean offset {mean_offset:.4}: rmse = {rmse:.2} +/- {spread:.2}; \
             Be two-run rmse = {be_rmse:.5}"
        ),
    ))
}

fn shell_structure() -> Outcome {
    let grid = RadialGrid::uniform(0.05, 11.0, 2000)?;
    let orbitals = NaturalOrbitalSet::new(vec![
        NaturalOrbital::hydrogenic_1s(2.7, 2.0),
        NaturalOrbital::hydrogenic_2s(1.3, 1.0),
    ])?;
    let density = make_sto_density(&orbitals, &grid, 3.0)?;
    let cfg = TrainConfig {
        ic_point: IcPoint::ionic_tail(&density, 10.0),
        ..TrainConfig::default()
    };
    let (model, _) = train(&density, &cfg)?;
    let peaks = shell_peak_analysis(&density, &model, [0.1, 10.0])?;
    let min_r = peaks
        .radial_density_min_r
        .ok_or("radial density has fewer than two shells")?;
    let gap = (peaks.potential_max_r - min_r).abs();
    Ok((
        gap <= 0.5,
        format!(
            "potential max at r = {:.3}, 4pi r^2 rho minimum at r = {min_r:.3}, gap = {gap:.3} (<= 0.5)",
            peaks.potential_max_r
        ),
    ))
}

fn main() -> ExitCode {
    let mut suite = Suite {
        passed: 0,
        failed: 0,
        errored: 0,
    };
    let hydrogen = train_hydrogen();
    let with_h = |f: fn(&Hydrogen) -> Outcome| -> Outcome {
        match &hydrogen {
            Ok(h) => f(h),
            Err(e) => Err(format!("hydrogen training failed: {e}").into()),
        }
    };

    suite.run(1, "hydrogen round trip", || with_h(hydrogen_round_trip));
    suite.run(2, "helium-like round trip", helium_like);
    suite.run(3, "harmonic oscillator round trip", harmonic);
    suite.run(4, "virial check", || with_h(virial));
    suite.run(5, "oracle correctness", oracle);
    suite.run(6, "autodiff correctness", autodiff);
    suite.run(7, "shift invariance", || with_h(shift_invariance));
    suite.run(8, "closed-form inversion", inversion);
    suite.run(9, "cusp condition", cusp);
    suite.run(10, "determinism", determinism);
    suite.run(11, "statistics plumbing", statistics);
    suite.run(12, "shell structure", shell_structure);

    println!(
        "acceptance: {} passed, {} failed, {} errored",
        suite.passed, suite.failed, suite.errored
    );
    if suite.errored > 0 {
        ExitCode::FAILURE
    } else {
        ExitCode::SUCCESS
    }
}
