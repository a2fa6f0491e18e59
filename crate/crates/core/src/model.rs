//! The potential network U_θ(r): 1 → h1 → h2 → h3 → 1 with tanh hidden
//! layers and a residual join between the second and third hidden layers.
//!
//! Every pass carries the value and its tangent d/dr side by side as a
//! `width × 2B` matrix `[value | tangent]`, so one GEMM per layer serves both.
//! The reverse pass differentiates that forward-with-tangent graph, which
//! yields ∂/∂θ of any combination `a·U(r) + g·U'(r)`.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use ndarray::{linalg::general_mat_mul, s, Array1, Array2, ArrayView2, Axis, Zip};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MODEL_MAGIC: &str = "ECPNN001";
pub const DEFAULT_HIDDEN: [usize; 3] = [64, 128, 128];

/// Where the second hidden layer's output joins the third.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ResidualMode {
    /// h3 = tanh(W3·h2 + b3) + h2
    #[default]
    PostActivation,
    /// h3 = tanh(W3·h2 + b3 + h2)
    PreActivation,
}

impl ResidualMode {
    fn tag(self) -> &'static str {
        match self {
            ResidualMode::PostActivation => "post",
            ResidualMode::PreActivation => "pre",
        }
    }

    fn from_tag(tag: &str) -> Option<Self> {
        match tag {
            "post" => Some(ResidualMode::PostActivation),
            "pre" => Some(ResidualMode::PreActivation),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    /// out × in
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
}

impl Dense {
    fn zeros(out: usize, inp: usize) -> Self {
        Self {
            weight: Array2::zeros((out, inp)),
            bias: Array1::zeros(out),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PotentialModel {
    hidden: [usize; 3],
    residual: ResidualMode,
    seed: u64,
    layers: Vec<Dense>,
}

/// ∂(objective)/∂θ, shaped like the model's parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientSet {
    pub layers: Vec<Dense>,
}

fn layer_shapes(hidden: [usize; 3]) -> [(usize, usize); 4] {
    [
        (hidden[0], 1),
        (hidden[1], hidden[0]),
        (hidden[2], hidden[1]),
        (1, hidden[2]),
    ]
}

fn check_hidden(hidden: [usize; 3]) -> Result<()> {
    if hidden.contains(&0) {
        return Err(Error::Validation("hidden widths must be positive".into()));
    }
    if hidden[1] != hidden[2] {
        return Err(Error::Validation(format!(
            "residual join needs equal widths for hidden layers 2 and 3, got {} and {}",
            hidden[1], hidden[2]
        )));
    }
    Ok(())
}

impl PotentialModel {
    /// Default 64/128/128 network with uniform fan-scaled weights and zero biases.
    pub fn init(seed: u64) -> Self {
        Self::init_with(DEFAULT_HIDDEN, ResidualMode::default(), seed)
            .expect("default architecture is valid")
    }

    pub fn init_with(hidden: [usize; 3], residual: ResidualMode, seed: u64) -> Result<Self> {
        check_hidden(hidden)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let layers = layer_shapes(hidden)
            .iter()
            .map(|&(out, inp)| {
                let bound = (6.0 / (out + inp) as f64).sqrt();
                let mut d = Dense::zeros(out, inp);
                d.weight
                    .iter_mut()
                    .for_each(|w| *w = rng.gen_range(-bound..=bound));
                d
            })
            .collect();
        Ok(Self {
            hidden,
            residual,
            seed,
            layers,
        })
    }

    /// All parameters zero.
    pub fn zeros(hidden: [usize; 3], residual: ResidualMode) -> Result<Self> {
        check_hidden(hidden)?;
        Ok(Self {
            hidden,
            residual,
            seed: 0,
            layers: layer_shapes(hidden)
                .iter()
                .map(|&(o, i)| Dense::zeros(o, i))
                .collect(),
        })
    }

    pub fn layer_sizes(&self) -> [usize; 5] {
        [1, self.hidden[0], self.hidden[1], self.hidden[2], 1]
    }

    pub fn hidden(&self) -> [usize; 3] {
        self.hidden
    }

    pub fn residual(&self) -> ResidualMode {
        self.residual
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn layers(&self) -> &[Dense] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Dense] {
        &mut self.layers
    }

    pub fn output_bias(&self) -> f64 {
        self.layers[3].bias[0]
    }

    pub fn set_output_bias(&mut self, b: f64) {
        self.layers[3].bias[0] = b;
    }

    pub fn n_params(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weight.len() + l.bias.len())
            .sum()
    }

    /// Parameters flattened layer by layer, weights (row-major) then biases.
    pub fn params(&self) -> Vec<f64> {
        self.layers
            .iter()
            .flat_map(|l| l.weight.iter().chain(l.bias.iter()).copied())
            .collect()
    }

    pub fn params_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.layers
            .iter_mut()
            .flat_map(|l| l.weight.iter_mut().chain(l.bias.iter_mut()))
    }

    /// Σ w² over weights only; biases are not regularized.
    pub fn weight_sq_sum(&self) -> f64 {
        self.layers
            .iter()
            .map(|l| l.weight.iter().map(|w| w * w).sum::<f64>())
            .sum()
    }

    pub fn all_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.weight.iter().chain(l.bias.iter()).all(|v| v.is_finite()))
    }

    /// U(r).
    pub fn forward(&self, r: f64) -> Result<f64> {
        Ok(self.forward_with_input_grad(r)?.0)
    }

    /// (U(r), dU/dr).
    pub fn forward_with_input_grad(&self, r: f64) -> Result<(f64, f64)> {
        let tape = self.forward_batch(&[r])?;
        Ok((tape.value[0], tape.slope[0]))
    }

    /// Gradient of `adjoint_value·U(r) + adjoint_input_grad·U'(r)` with respect to θ.
    pub fn backprop(
        &self,
        r: f64,
        adjoint_value: f64,
        adjoint_input_grad: f64,
    ) -> Result<GradientSet> {
        if !adjoint_value.is_finite() || !adjoint_input_grad.is_finite() {
            return Err(Error::Numeric("non-finite adjoint".into()));
        }
        let tape = self.forward_batch(&[r])?;
        self.backward(&tape, &[adjoint_value], &[adjoint_input_grad])
    }

    /// Values and slopes at many radii, keeping what the reverse pass needs.
    pub fn forward_batch(&self, rs: &[f64]) -> Result<Tape> {
        let b = rs.len();
        if let Some(r) = rs.iter().find(|r| !r.is_finite()) {
            return Err(Error::Numeric(format!("non-finite network input {r}")));
        }

        // Layer 1 has scalar input, so its pre-activation is an outer product.
        let l1 = &self.layers[0];
        let mut pre = Array2::<f64>::zeros((self.hidden[0], 2 * b));
        for (j, mut row) in pre.outer_iter_mut().enumerate() {
            let w = l1.weight[[j, 0]];
            let bias = l1.bias[j];
            for (c, &r) in rs.iter().enumerate() {
                row[c] = w * r + bias;
                row[b + c] = w;
            }
        }
        let act1 = Activation::apply(pre, b);

        let pre2 = self.affine(1, act1.out.view(), b);
        let act2 = Activation::apply(pre2, b);

        let mut pre3 = self.affine(2, act2.out.view(), b);
        if self.residual == ResidualMode::PreActivation {
            pre3 += &act2.out;
        }
        let mut act3 = Activation::apply(pre3, b);
        if self.residual == ResidualMode::PostActivation {
            act3.out += &act2.out;
        }

        let out = self.affine(3, act3.out.view(), b);
        let value: Vec<f64> = out.slice(s![0, ..b]).to_vec();
        let slope: Vec<f64> = out.slice(s![0, b..]).to_vec();
        if let Some(i) = (0..b).find(|&i| !value[i].is_finite() || !slope[i].is_finite()) {
            return Err(Error::Numeric(format!(
                "network output not finite at r = {}",
                rs[i]
            )));
        }
        Ok(Tape {
            r: rs.to_vec(),
            acts: [act1, act2, act3],
            value,
            slope,
        })
    }

    /// `W·x` over both halves, bias added to the value half only.
    fn affine(&self, layer: usize, x: ArrayView2<f64>, b: usize) -> Array2<f64> {
        let l = &self.layers[layer];
        let mut y = Array2::<f64>::zeros((l.weight.nrows(), 2 * b));
        general_mat_mul(1.0, &l.weight, &x, 0.0, &mut y);
        y.slice_mut(s![.., ..b])
            .zip_mut_with(&l.bias.view().insert_axis(Axis(1)), |v, bias| *v += bias);
        y
    }

    /// Reverse pass with per-sample adjoints on U and on dU/dr.
    pub fn backward(
        &self,
        tape: &Tape,
        adjoint_value: &[f64],
        adjoint_slope: &[f64],
    ) -> Result<GradientSet> {
        let b = tape.r.len();
        assert_eq!(adjoint_value.len(), b);
        assert_eq!(adjoint_slope.len(), b);
        let mut grads = GradientSet::zeros_like(self);

        let mut adj = Array2::<f64>::zeros((1, 2 * b));
        adj.slice_mut(s![0, ..b])
            .iter_mut()
            .zip(adjoint_value)
            .for_each(|(d, a)| *d = *a);
        adj.slice_mut(s![0, b..])
            .iter_mut()
            .zip(adjoint_slope)
            .for_each(|(d, g)| *d = *g);

        let out = &self.layers[3];
        general_mat_mul(1.0, &adj, &tape.acts[2].out.t(), 0.0, &mut grads.layers[3].weight);
        grads.layers[3].bias[0] = adjoint_value.iter().sum();
        let mut bar = Array2::<f64>::zeros((self.hidden[2], 2 * b));
        general_mat_mul(1.0, &out.weight.t(), &adj, 0.0, &mut bar);

        // Third hidden layer.
        let zbar = tape.acts[2].pullback(&bar, b);
        self.accumulate(2, &zbar, tape.acts[1].out.view(), &mut grads, b);
        let mut bar2 = Array2::<f64>::zeros((self.hidden[1], 2 * b));
        general_mat_mul(1.0, &self.layers[2].weight.t(), &zbar, 0.0, &mut bar2);
        match self.residual {
            ResidualMode::PostActivation => bar2 += &bar,
            ResidualMode::PreActivation => bar2 += &zbar,
        }

        // Second hidden layer.
        let zbar = tape.acts[1].pullback(&bar2, b);
        self.accumulate(1, &zbar, tape.acts[0].out.view(), &mut grads, b);
        let mut bar1 = Array2::<f64>::zeros((self.hidden[0], 2 * b));
        general_mat_mul(1.0, &self.layers[1].weight.t(), &zbar, 0.0, &mut bar1);

        // First hidden layer: z = w·r + b, dz = w.
        let zbar = tape.acts[0].pullback(&bar1, b);
        let g1 = &mut grads.layers[0];
        for (j, row) in zbar.outer_iter().enumerate() {
            let mut gw = 0.0;
            let mut gb = 0.0;
            for (c, &r) in tape.r.iter().enumerate() {
                gw += row[c] * r + row[b + c];
                gb += row[c];
            }
            g1.weight[[j, 0]] = gw;
            g1.bias[j] = gb;
        }

        if !grads.all_finite() {
            return Err(Error::Numeric("non-finite parameter gradient".into()));
        }
        Ok(grads)
    }

    fn accumulate(
        &self,
        layer: usize,
        zbar: &Array2<f64>,
        input: ArrayView2<f64>,
        grads: &mut GradientSet,
        b: usize,
    ) {
        let g = &mut grads.layers[layer];
        general_mat_mul(1.0, zbar, &input.t(), 0.0, &mut g.weight);
        g.bias = zbar.slice(s![.., ..b]).sum_axis(Axis(1));
    }

    /// Text form: magic line, architecture, then every array row-major at 17
    /// significant digits. Round-trips bit-exactly.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{MODEL_MAGIC}");
        let sizes = self.layer_sizes();
        let _ = writeln!(
            out,
            "layer_sizes {} {} {} {} {}",
            sizes[0], sizes[1], sizes[2], sizes[3], sizes[4]
        );
        let _ = writeln!(out, "residual {}", self.residual.tag());
        let _ = writeln!(out, "seed {}", self.seed);
        for (k, l) in self.layers.iter().enumerate() {
            let (o, i) = l.weight.dim();
            let _ = writeln!(out, "W{} {} {}", k + 1, o, i);
            for w in l.weight.iter() {
                let _ = writeln!(out, "{w:.16e}");
            }
            let _ = writeln!(out, "b{} {}", k + 1, l.bias.len());
            for v in l.bias.iter() {
                let _ = writeln!(out, "{v:.16e}");
            }
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let bad = |m: String| Error::Format(m);
        let mut lines = text.lines().map(str::trim).filter(|l| !l.is_empty());
        let mut next = |what: &str| {
            lines
                .next()
                .ok_or_else(|| Error::Format(format!("unexpected end of file, expected {what}")))
        };
        if next("magic")? != MODEL_MAGIC {
            return Err(bad(format!("missing {MODEL_MAGIC} header")));
        }
        let sizes: Vec<usize> = next("layer_sizes")?
            .strip_prefix("layer_sizes")
            .ok_or_else(|| bad("expected layer_sizes".into()))?
            .split_whitespace()
            .map(|t| t.parse().map_err(|_| bad(format!("bad layer size '{t}'"))))
            .collect::<Result<_>>()?;
        if sizes.len() != 5 || sizes[0] != 1 || sizes[4] != 1 {
            return Err(bad(format!("unsupported layer sizes {sizes:?}")));
        }
        let residual = next("residual")?
            .strip_prefix("residual")
            .map(str::trim)
            .and_then(ResidualMode::from_tag)
            .ok_or_else(|| bad("expected 'residual post|pre'".into()))?;
        let seed: u64 = next("seed")?
            .strip_prefix("seed")
            .and_then(|s| s.trim().parse().ok())
            .ok_or_else(|| bad("expected 'seed <n>'".into()))?;
        let mut model = Self::zeros([sizes[1], sizes[2], sizes[3]], residual)?;
        model.seed = seed;
        for k in 0..4 {
            let (o, i) = model.layers[k].weight.dim();
            let expect_w = format!("W{} {} {}", k + 1, o, i);
            if next("weight header")? != expect_w {
                return Err(bad(format!("expected '{expect_w}'")));
            }
            for w in model.layers[k].weight.iter_mut() {
                *w = parse_value(next("weight")?)?;
            }
            let expect_b = format!("b{} {}", k + 1, o);
            if next("bias header")? != expect_b {
                return Err(bad(format!("expected '{expect_b}'")));
            }
            for v in model.layers[k].bias.iter_mut() {
                *v = parse_value(next("bias")?)?;
            }
        }
        if !model.all_finite() {
            return Err(bad("non-finite parameter".into()));
        }
        Ok(model)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_text(&text)
    }
}

fn parse_value(s: &str) -> Result<f64> {
    s.parse()
        .map_err(|_| Error::Format(format!("invalid number '{s}'")))
}

/// Seeded fan-scaled uniform initialization of the default network.
pub fn init_params(seed: u64) -> PotentialModel {
    PotentialModel::init(seed)
}

/// tanh layer state for a `[value | tangent]` pre-activation.
#[derive(Debug, Clone)]
struct Activation {
    t: Array2<f64>,
    s: Array2<f64>,
    dz: Array2<f64>,
    /// `[t | s·dz]`, plus the residual branch for the post-activation join.
    out: Array2<f64>,
}

impl Activation {
    fn apply(pre: Array2<f64>, b: usize) -> Self {
        let z = pre.slice(s![.., ..b]);
        let dz = pre.slice(s![.., b..]).to_owned();
        let t = z.mapv(f64::tanh);
        let s = t.mapv(|t| 1.0 - t * t);
        let mut out = pre;
        out.slice_mut(s![.., ..b]).assign(&t);
        Zip::from(out.slice_mut(s![.., b..]))
            .and(&s)
            .and(&dz)
            .for_each(|o, &s, &dz| *o = s * dz);
        Self { t, s, dz, out }
    }

    /// Map `[t̄ | (dh)̄]` to `[z̄ | (dz)̄]`.
    fn pullback(&self, bar: &Array2<f64>, b: usize) -> Array2<f64> {
        let mut zbar = Array2::<f64>::zeros(bar.raw_dim());
        let hb = bar.slice(s![.., ..b]);
        let dhb = bar.slice(s![.., b..]);
        Zip::from(zbar.slice_mut(s![.., b..]))
            .and(&dhb)
            .and(&self.s)
            .for_each(|o, &g, &s| *o = g * s);
        Zip::from(zbar.slice_mut(s![.., ..b]))
            .and(&hb)
            .and(&dhb)
            .and(&self.t)
            .and(&self.s)
            .and(&self.dz)
            .for_each(|o, &h, &g, &t, &s, &dz| *o = s * (h - 2.0 * t * g * dz));
        zbar
    }
}

/// Saved forward state for a batch of radii.
#[derive(Debug, Clone)]
pub struct Tape {
    r: Vec<f64>,
    acts: [Activation; 3],
    pub value: Vec<f64>,
    pub slope: Vec<f64>,
}

impl GradientSet {
    pub fn zeros_like(model: &PotentialModel) -> Self {
        Self {
            layers: model
                .layers
                .iter()
                .map(|l| Dense::zeros(l.weight.nrows(), l.weight.ncols()))
                .collect(),
        }
    }

    pub fn is_congruent(&self, model: &PotentialModel) -> bool {
        self.layers.len() == model.layers.len()
            && self
                .layers
                .iter()
                .zip(&model.layers)
                .all(|(g, m)| g.weight.dim() == m.weight.dim() && g.bias.len() == m.bias.len())
    }

    pub fn flat(&self) -> Vec<f64> {
        self.layers
            .iter()
            .flat_map(|l| l.weight.iter().chain(l.bias.iter()).copied())
            .collect()
    }

    pub fn values_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.layers
            .iter_mut()
            .flat_map(|l| l.weight.iter_mut().chain(l.bias.iter_mut()))
    }

    pub fn all_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.weight.iter().chain(l.bias.iter()).all(|v| v.is_finite()))
    }

    pub fn norm(&self) -> f64 {
        self.flat().iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn scale(&mut self, k: f64) {
        self.values_mut().for_each(|v| *v *= k);
    }

    /// `self += k · w` on weights only (the L2 gradient term).
    pub fn add_weight_decay(&mut self, model: &PotentialModel, k: f64) {
        for (g, m) in self.layers.iter_mut().zip(&model.layers) {
            g.weight.scaled_add(k, &m.weight);
        }
    }

    pub fn add_assign(&mut self, other: &GradientSet) {
        for (g, o) in self.layers.iter_mut().zip(&other.layers) {
            g.weight += &o.weight;
            g.bias += &o.bias;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn unit_chain() -> PotentialModel {
        let mut m = PotentialModel::zeros([1, 1, 1], ResidualMode::PostActivation).unwrap();
        for l in m.layers_mut() {
            l.weight.fill(1.0);
        }
        m
    }

    #[test]
    fn init_is_deterministic_with_zero_biases() {
        let a = init_params(7);
        let b = init_params(7);
        assert_eq!(a.params(), b.params());
        assert!(a.layers().iter().all(|l| l.bias.iter().all(|&v| v == 0.0)));
        assert_ne!(a.params(), init_params(8).params());
        assert_eq!(a.layer_sizes(), [1, 64, 128, 128, 1]);
        assert_eq!(a.n_params(), 64 + 64 + 64 * 128 + 128 + 128 * 128 + 128 + 128 + 1);
        let bound = (6.0f64 / 65.0).sqrt();
        assert!(a.layers()[0].weight.iter().all(|w| w.abs() <= bound));
    }

    #[test]
    fn residual_needs_matching_widths() {
        assert!(PotentialModel::init_with([4, 8, 6], ResidualMode::PostActivation, 1).is_err());
    }

    #[test]
    fn zero_and_constant_networks() {
        let mut m = PotentialModel::zeros(DEFAULT_HIDDEN, ResidualMode::PostActivation).unwrap();
        for r in [0.1, 1.0, 7.5] {
            assert_eq!(m.forward(r).unwrap(), 0.0);
        }
        m.set_output_bias(-0.75);
        assert_eq!(m.forward(3.0).unwrap(), -0.75);
        assert_eq!(m.forward_with_input_grad(3.0).unwrap(), (-0.75, 0.0));
    }

    #[test]
    fn unit_chain_is_odd_at_origin() {
        let m = unit_chain();
        assert_eq!(m.forward(0.0).unwrap(), 0.0);
        // tangent at 0: layer 2 and 3 each contribute tanh'(0) = 1, plus the residual
        let (_, d) = m.forward_with_input_grad(0.0).unwrap();
        assert_abs_diff_eq!(d, 2.0, epsilon = 1e-15);
    }

    #[test]
    fn single_unit_chain_values_and_slope() {
        let m = unit_chain();
        let r: f64 = 0.3;
        let h2 = r.tanh().tanh();
        assert_abs_diff_eq!(m.forward(r).unwrap(), h2.tanh() + h2, epsilon = 1e-15);

        // With the third layer switched off the chain is tanh∘tanh, slope 1 at 0.
        let mut m = unit_chain();
        m.layers_mut()[2].weight.fill(0.0);
        assert_eq!(m.forward_with_input_grad(0.0).unwrap(), (0.0, 1.0));
    }

    #[test]
    fn input_gradient_matches_central_difference() {
        let m = init_params(3);
        let r = 1.5;
        let h = 1e-5;
        let (_, d) = m.forward_with_input_grad(r).unwrap();
        let fd = (m.forward(r + h).unwrap() - m.forward(r - h).unwrap()) / (2.0 * h);
        assert!((d - fd).abs() <= 1e-6 * d.abs().max(1e-8), "{d} vs {fd}");
    }

    #[test]
    fn value_component_equals_forward_exactly() {
        let m = init_params(11);
        for r in [0.1, 0.5, 2.25, 9.9] {
            assert_eq!(m.forward(r).unwrap(), m.forward_with_input_grad(r).unwrap().0);
        }
    }

    #[test]
    fn zero_adjoints_give_zero_gradient() {
        let g = init_params(5).backprop(2.0, 0.0, 0.0).unwrap();
        assert!(g.flat().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn output_bias_gradient_is_adjoint() {
        let m = init_params(5);
        let g = m.backprop(2.0, 1.0, 0.0).unwrap();
        assert_eq!(g.layers[3].bias[0], 1.0);
        assert!(g.is_congruent(&m));
    }

    #[test]
    fn non_finite_input_is_numeric_error() {
        assert!(matches!(
            init_params(1).forward(f64::NAN),
            Err(Error::Numeric(_))
        ));
    }

    #[test]
    fn directional_derivative_matches_gradient() {
        for residual in [ResidualMode::PostActivation, ResidualMode::PreActivation] {
            let m = PotentialModel::init_with([8, 16, 16], residual, 9).unwrap();
            let (r, a, g) = (1.3, 0.7, -1.9);
            let grads = m.backprop(r, a, g).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(99);
            let dir: Vec<f64> = (0..m.n_params()).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let norm = dir.iter().map(|d| d * d).sum::<f64>().sqrt();
            let dir: Vec<f64> = dir.iter().map(|d| d / norm).collect();
            let objective = |eps: f64| {
                let mut p = m.clone();
                p.params_mut().zip(&dir).for_each(|(v, d)| *v += eps * d);
                let (u, du) = p.forward_with_input_grad(r).unwrap();
                a * u + g * du
            };
            let h = 1e-5;
            let fd = (objective(h) - objective(-h)) / (2.0 * h);
            let an: f64 = grads.flat().iter().zip(&dir).map(|(x, d)| x * d).sum();
            assert!((an - fd).abs() <= 1e-4 * an.abs().max(fd.abs()), "{residual:?}: {an} vs {fd}");
        }
    }

    #[test]
    fn batched_backward_sums_per_sample_gradients() {
        let m = PotentialModel::init_with([6, 10, 10], ResidualMode::PostActivation, 2).unwrap();
        let rs = [0.2, 1.0, 4.5];
        let a = [0.3, -1.0, 2.0];
        let g = [1.0, 0.5, -0.25];
        let tape = m.forward_batch(&rs).unwrap();
        let batched = m.backward(&tape, &a, &g).unwrap().flat();
        let mut summed = GradientSet::zeros_like(&m);
        for i in 0..3 {
            summed.add_assign(&m.backprop(rs[i], a[i], g[i]).unwrap());
        }
        for (x, y) in batched.iter().zip(summed.flat()) {
            assert!((x - y).abs() <= 1e-12 * (1.0 + y.abs()));
        }
    }

    #[test]
    fn text_round_trip_is_bit_exact() {
        let m = PotentialModel::init_with([5, 7, 7], ResidualMode::PreActivation, 42).unwrap();
        let text = m.to_text();
        assert!(text.starts_with("ECPNN001\n"));
        let back = PotentialModel::from_text(&text).unwrap();
        assert_eq!(back, m);
        assert_eq!(back.to_text(), text);
        assert!(PotentialModel::from_text("NOTMAGIC\n").is_err());
        assert!(PotentialModel::from_text(&text[..text.len() / 2]).is_err());
    }
}
