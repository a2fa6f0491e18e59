//! Energy-conservation training: the loss is the mean squared slope of
//! q(r) + U_θ(r) over sampled radii, plus an anchor term fixing U_θ at one
//! point and an L2 penalty on the weights. Optimized with Adam.

use std::path::Path;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::calculus::{kinetic_ratio, KineticRatioField};
use crate::density::{amplitude, DensityProfile};
use crate::error::{Error, Result};
use crate::model::{GradientSet, PotentialModel, ResidualMode, DEFAULT_HIDDEN};

const SAMPLE_STREAM: u64 = 1;
const SHUFFLE_STREAM: u64 = 2;

/// Anchor (r0, y0) pinning the additive constant of U_θ.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IcPoint {
    pub r0: f64,
    pub y0: f64,
}

impl IcPoint {
    /// y0 = −(Z − N + 1)/r0 at r0 = 0.8·r_max: the Coulomb tail seen by the
    /// outermost electron, so that U → 0 far from the nucleus.
    pub fn ionic_tail(density: &DensityProfile, r_max: f64) -> Self {
        let r0 = 0.8 * r_max;
        let net = density.nuclear_charge() - f64::from(density.n_electrons()) + 1.0;
        Self { r0, y0: -net / r0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub n_samples: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub l2_weight: f64,
    pub domain: [f64; 2],
    pub ic_point: IcPoint,
    pub ic_weight: f64,
    pub seed: u64,
    pub batch_size: usize,
    pub occupancy_divisor: f64,
    pub max_grad_norm: Option<f64>,
    pub resample_each_epoch: bool,
    pub hidden: [usize; 3],
    pub residual: ResidualMode,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            n_samples: 5000,
            epochs: 500,
            learning_rate: 1e-3,
            l2_weight: 1e-4,
            domain: [0.1, 10.0],
            ic_point: IcPoint {
                r0: 8.0,
                y0: -0.125,
            },
            ic_weight: 1.0,
            seed: 0,
            batch_size: 256,
            occupancy_divisor: 1.0,
            max_grad_norm: None,
            resample_each_epoch: false,
            hidden: DEFAULT_HIDDEN,
            residual: ResidualMode::PostActivation,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let [lo, hi] = self.domain;
        let fail = |m: String| Err(Error::Config(m));
        if !(lo.is_finite() && hi.is_finite() && lo >= 0.0 && hi > lo) {
            return fail(format!("invalid domain [{lo}, {hi}]"));
        }
        if self.n_samples == 0 {
            return fail("n_samples must be at least 1".into());
        }
        if self.batch_size == 0 {
            return fail("batch_size must be at least 1".into());
        }
        if !(self.learning_rate > 0.0) {
            return fail("learning_rate must be positive".into());
        }
        if !(self.l2_weight >= 0.0) || !(self.ic_weight >= 0.0) {
            return fail("loss weights must be non-negative".into());
        }
        if !(self.occupancy_divisor > 0.0) {
            return fail("occupancy_divisor must be positive".into());
        }
        if let Some(n) = self.max_grad_norm {
            if !(n > 0.0) {
                return fail("max_grad_norm must be positive".into());
            }
        }
        let IcPoint { r0, y0 } = self.ic_point;
        if !(r0 >= lo && r0 <= hi) || !y0.is_finite() {
            return fail(format!("initial condition r0 = {r0} outside domain [{lo}, {hi}]"));
        }
        Ok(())
    }

    /// Parse a TOML key-value file; absent keys take their defaults.
    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text)
    }
}

/// The loss components at one set of parameters. `l2` is the weighted
/// penalty, so `total = ec + ic_weight·ic + l2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub total: f64,
    pub ec: f64,
    pub ic: f64,
    pub l2: f64,
}

impl LossBreakdown {
    pub fn combine(ec: f64, ic: f64, weight_sq_sum: f64, config: &TrainConfig) -> Self {
        let l2 = config.l2_weight * weight_sq_sum;
        Self {
            total: ec + config.ic_weight * ic + l2,
            ec,
            ic,
            l2,
        }
    }
}

/// Uniform i.i.d. radii on `domain`, reproducible from `seed`.
pub fn sample_points(domain: [f64; 2], n: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(SAMPLE_STREAM);
    draw(&mut rng, domain, n)
}

fn draw(rng: &mut ChaCha8Rng, [lo, hi]: [f64; 2], n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(lo..=hi)).collect()
}

/// d/dr [q(r) + U(r)].
pub fn ec_residual(model: &PotentialModel, q: &KineticRatioField, r: f64) -> Result<f64> {
    Ok(q.slope(r)? + model.forward_with_input_grad(r)?.1)
}

/// Mean of squared residuals over `batch`.
pub fn ec_loss(model: &PotentialModel, q: &KineticRatioField, batch: &[f64]) -> Result<f64> {
    if batch.is_empty() {
        return Err(Error::Domain("empty batch".into()));
    }
    let qs = batch
        .iter()
        .map(|&r| q.slope(r))
        .collect::<Result<Vec<f64>>>()?;
    let tape = model.forward_batch(batch)?;
    Ok(mean_sq_residual(&qs, &tape.slope))
}

fn mean_sq_residual(q_slope: &[f64], u_slope: &[f64]) -> f64 {
    q_slope
        .iter()
        .zip(u_slope)
        .map(|(a, b)| (a + b) * (a + b))
        .sum::<f64>()
        / q_slope.len() as f64
}

/// (U(r0) − y0)².
pub fn ic_loss(model: &PotentialModel, ic: IcPoint) -> Result<f64> {
    let d = model.forward(ic.r0)? - ic.y0;
    Ok(d * d)
}

pub fn total_loss(
    model: &PotentialModel,
    q: &KineticRatioField,
    batch: &[f64],
    config: &TrainConfig,
) -> Result<LossBreakdown> {
    Ok(LossBreakdown::combine(
        ec_loss(model, q, batch)?,
        ic_loss(model, config.ic_point)?,
        model.weight_sq_sum(),
        config,
    ))
}

/// Loss components and their gradient for one mini-batch. `q_slope[i]` is
/// q'(batch[i]).
pub fn loss_and_gradient(
    model: &PotentialModel,
    batch: &[f64],
    q_slope: &[f64],
    config: &TrainConfig,
) -> Result<(LossBreakdown, GradientSet)> {
    let b = batch.len();
    if b == 0 {
        return Err(Error::Domain("empty batch".into()));
    }
    let mut radii = Vec::with_capacity(b + 1);
    radii.extend_from_slice(batch);
    radii.push(config.ic_point.r0);
    let tape = model.forward_batch(&radii)?;

    let mut adj_value = vec![0.0; b + 1];
    let mut adj_slope = vec![0.0; b + 1];
    let mut ec = 0.0;
    for i in 0..b {
        let res = q_slope[i] + tape.slope[i];
        ec += res * res;
        adj_slope[i] = 2.0 * res / b as f64;
    }
    ec /= b as f64;
    let ic_dev = tape.value[b] - config.ic_point.y0;
    adj_value[b] = 2.0 * config.ic_weight * ic_dev;

    let mut grads = model.backward(&tape, &adj_value, &adj_slope)?;
    grads.add_weight_decay(model, 2.0 * config.l2_weight);
    let loss = LossBreakdown::combine(ec, ic_dev * ic_dev, model.weight_sq_sum(), config);
    Ok((loss, grads))
}

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub t: u64,
}

impl AdamState {
    pub fn new(model: &PotentialModel) -> Self {
        let n = model.n_params();
        Self {
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }
}

/// One bias-corrected Adam update in place. A non-finite gradient leaves
/// both model and state untouched.
pub fn adam_step(
    state: &mut AdamState,
    model: &mut PotentialModel,
    grads: &GradientSet,
    lr: f64,
) -> Result<()> {
    if !grads.is_congruent(model) || state.m.len() != model.n_params() {
        return Err(Error::Validation("gradient shape does not match model".into()));
    }
    if !grads.all_finite() {
        return Err(Error::Numeric("non-finite gradient".into()));
    }
    state.t += 1;
    let t = state.t as i32;
    let c1 = 1.0 - ADAM_BETA1.powi(t);
    let c2 = 1.0 - ADAM_BETA2.powi(t);
    let g_iter = grads
        .layers
        .iter()
        .flat_map(|l| l.weight.iter().chain(l.bias.iter()));
    for (((theta, g), m), v) in model
        .params_mut()
        .zip(g_iter)
        .zip(state.m.iter_mut())
        .zip(state.v.iter_mut())
    {
        *m = ADAM_BETA1 * *m + (1.0 - ADAM_BETA1) * g;
        *v = ADAM_BETA2 * *v + (1.0 - ADAM_BETA2) * g * g;
        let m_hat = *m / c1;
        let v_hat = *v / c2;
        *theta -= lr * m_hat / (v_hat.sqrt() + ADAM_EPS);
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub seed: u64,
    pub density_label: String,
    pub config: TrainConfig,
    /// Per-epoch averages over the mini-batches, evaluated before each update.
    pub loss_total: Vec<f64>,
    pub loss_ec: Vec<f64>,
    pub loss_ic: Vec<f64>,
    pub loss_l2: Vec<f64>,
    /// Full-sample evaluation of the returned parameters.
    pub final_loss: LossBreakdown,
    pub wall_time_s: f64,
}

impl TrainReport {
    pub fn epochs(&self) -> usize {
        self.loss_total.len()
    }
}

pub fn train(
    density: &DensityProfile,
    config: &TrainConfig,
) -> Result<(PotentialModel, TrainReport)> {
    config.validate()?;
    let amp = amplitude(density, config.occupancy_divisor)?;
    let q = kinetic_ratio(&amp)?;
    train_on_field(&q, config, density.label())
}

/// Train against a precomputed kinetic-ratio field.
pub fn train_on_field(
    q: &KineticRatioField,
    config: &TrainConfig,
    label: &str,
) -> Result<(PotentialModel, TrainReport)> {
    config.validate()?;
    let grid = q.grid();
    let [lo, hi] = config.domain;
    if lo < grid.r_min() || hi > grid.r_max() {
        return Err(Error::Domain(format!(
            "training domain [{lo}, {hi}] exceeds density grid [{}, {}]",
            grid.r_min(),
            grid.r_max()
        )));
    }
    let start = Instant::now();

    let mut model = PotentialModel::init_with(config.hidden, config.residual, config.seed)?;
    let mut adam = AdamState::new(&model);

    let mut sample_rng = ChaCha8Rng::seed_from_u64(config.seed);
    sample_rng.set_stream(SAMPLE_STREAM);
    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(config.seed);
    shuffle_rng.set_stream(SHUFFLE_STREAM);

    let mut samples = draw(&mut sample_rng, config.domain, config.n_samples);
    let mut q_slope = slopes(q, &samples)?;

    let mut report = TrainReport {
        seed: config.seed,
        density_label: label.to_string(),
        config: config.clone(),
        loss_total: Vec::with_capacity(config.epochs),
        loss_ec: Vec::with_capacity(config.epochs),
        loss_ic: Vec::with_capacity(config.epochs),
        loss_l2: Vec::with_capacity(config.epochs),
        final_loss: LossBreakdown::combine(0.0, 0.0, 0.0, config),
        wall_time_s: 0.0,
    };

    let n = samples.len();
    let mut order: Vec<usize> = (0..n).collect();
    let mut batch_r = Vec::with_capacity(config.batch_size);
    let mut batch_q = Vec::with_capacity(config.batch_size);

    for epoch in 0..config.epochs {
        if config.resample_each_epoch && epoch > 0 {
            samples = draw(&mut sample_rng, config.domain, config.n_samples);
            q_slope = slopes(q, &samples)?;
        }
        order.shuffle(&mut shuffle_rng);
        let (mut ec, mut ic, mut l2, mut total) = (0.0, 0.0, 0.0, 0.0);
        for chunk in order.chunks(config.batch_size) {
            batch_r.clear();
            batch_q.clear();
            batch_r.extend(chunk.iter().map(|&i| samples[i]));
            batch_q.extend(chunk.iter().map(|&i| q_slope[i]));
            let diverged = |e: Error| Error::Training {
                epoch,
                message: e.to_string(),
            };
            let (loss, mut grads) =
                loss_and_gradient(&model, &batch_r, &batch_q, config).map_err(diverged)?;
            if !loss.total.is_finite() {
                return Err(Error::Training {
                    epoch,
                    message: "loss is not finite".into(),
                });
            }
            if let Some(max) = config.max_grad_norm {
                let norm = grads.norm();
                if norm > max {
                    grads.scale(max / norm);
                }
            }
            adam_step(&mut adam, &mut model, &grads, config.learning_rate).map_err(diverged)?;

            let w = chunk.len() as f64 / n as f64;
            ec += w * loss.ec;
            ic += w * loss.ic;
            l2 += w * loss.l2;
            total += w * loss.total;
        }
        report.loss_ec.push(ec);
        report.loss_ic.push(ic);
        report.loss_l2.push(l2);
        report.loss_total.push(total);
    }

    let tape = model.forward_batch(&samples)?;
    report.final_loss = LossBreakdown::combine(
        mean_sq_residual(&q_slope, &tape.slope),
        ic_loss(&model, config.ic_point)?,
        model.weight_sq_sum(),
        config,
    );
    if !report.final_loss.total.is_finite() {
        return Err(Error::Training {
            epoch: config.epochs,
            message: "final loss is not finite".into(),
        });
    }
    report.wall_time_s = start.elapsed().as_secs_f64();
    Ok((model, report))
}

fn slopes(q: &KineticRatioField, rs: &[f64]) -> Result<Vec<f64>> {
    rs.iter().map(|&r| q.slope(r)).collect()
}

/// `k` independent runs with seeds `seed, seed + 1, …`.
pub fn multi_run(
    density: &DensityProfile,
    config: &TrainConfig,
    k: usize,
) -> Result<Vec<(PotentialModel, TrainReport)>> {
    if k == 0 {
        return Err(Error::Config("number of runs must be at least 1".into()));
    }
    (0..k as u64)
        .map(|i| {
            let mut cfg = config.clone();
            cfg.seed = config.seed.wrapping_add(i);
            train(density, &cfg)
        })
        .collect()
}
