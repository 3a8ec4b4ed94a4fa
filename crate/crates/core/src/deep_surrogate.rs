//! Neural-network surrogate of the calibration surface map and calibration
//! against it.
//!
//! The network takes the free parameters in unconstrained coordinates
//! (standardized with training-set statistics) and returns one implied vol
//! per grid cell: three ELU hidden layers and a sigmoid output scaled to
//! `(vol_min, vol_max)`.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::calibration::{
    calibrate, levenberg_marquardt, surface_map, CalibrationGrid, CalibrationOptions, CalibrationResult, Calibrator,
    LeastSquares, ParamVector,
};
use crate::pricing::CosConfig;
use crate::{Error, Result};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NetSpec {
    pub input_dim: usize,
    pub hidden: Vec<usize>,
    pub output_dim: usize,
    pub vol_min: f64,
    pub vol_max: f64,
}

impl NetSpec {
    pub fn new(input_dim: usize, output_dim: usize) -> Self {
        Self {
            input_dim,
            hidden: vec![30, 30, 30],
            output_dim,
            vol_min: 0.001,
            vol_max: 1.0,
        }
    }

    fn dims(&self) -> Vec<usize> {
        let mut d = vec![self.input_dim];
        d.extend(&self.hidden);
        d.push(self.output_dim);
        d
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub n_train: usize,
    pub batch_size: usize,
    pub epochs: usize,
    pub patience: usize,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_eps: f64,
    pub validation_fraction: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            n_train: 10_000,
            batch_size: 32,
            epochs: 150,
            patience: 10,
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            adam_eps: 1e-8,
            validation_fraction: 0.1,
            seed: 0,
        }
    }
}

/// One dense layer; `weights` is `out x in`, row-major in the JSON file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    pub rows: usize,
    pub cols: usize,
    pub weights: Vec<f64>,
    pub biases: Vec<f64>,
}

impl Layer {
    fn matrix(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.rows, self.cols, &self.weights)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainedSurrogate {
    pub version: u32,
    pub spec: NetSpec,
    pub layers: Vec<Layer>,
    pub input_mean: Vec<f64>,
    pub input_std: Vec<f64>,
    /// Parameter layout the inputs refer to (free entries, in order).
    pub params: ParamVector,
    pub grid: CalibrationGrid,
    pub train_loss: f64,
    pub val_loss: f64,
    pub epochs_run: usize,
}

fn elu(x: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        x.exp_m1()
    }
}

fn elu_grad(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else {
        x.exp()
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Dense weights in matrix form, used for training and evaluation.
#[derive(Clone, Debug)]
struct Net {
    w: Vec<DMatrix<f64>>,
    b: Vec<DVector<f64>>,
    lo: f64,
    span: f64,
}

/// Per-layer pre-activations of a batch (columns are samples).
struct Trace {
    inputs: Vec<DMatrix<f64>>,
    pre: Vec<DMatrix<f64>>,
}

impl Net {
    fn init(spec: &NetSpec, rng: &mut ChaCha8Rng) -> Self {
        let d = spec.dims();
        let mut w = Vec::new();
        let mut b = Vec::new();
        for l in 0..d.len() - 1 {
            let a = (3.0 / d[l] as f64).sqrt();
            w.push(DMatrix::from_fn(d[l + 1], d[l], |_, _| rng.gen_range(-a..a)));
            b.push(DVector::zeros(d[l + 1]));
        }
        Self {
            w,
            b,
            lo: spec.vol_min,
            span: spec.vol_max - spec.vol_min,
        }
    }

    fn from_layers(spec: &NetSpec, layers: &[Layer]) -> Self {
        Self {
            w: layers.iter().map(Layer::matrix).collect(),
            b: layers.iter().map(|l| DVector::from_column_slice(&l.biases)).collect(),
            lo: spec.vol_min,
            span: spec.vol_max - spec.vol_min,
        }
    }

    fn to_layers(&self) -> Vec<Layer> {
        self.w
            .iter()
            .zip(&self.b)
            .map(|(w, b)| Layer {
                rows: w.nrows(),
                cols: w.ncols(),
                weights: w.transpose().as_slice().to_vec(),
                biases: b.as_slice().to_vec(),
            })
            .collect()
    }

    fn n_layers(&self) -> usize {
        self.w.len()
    }

    /// Forward pass on a batch `x` (features x samples).
    fn forward(&self, x: &DMatrix<f64>) -> (DMatrix<f64>, Trace) {
        let mut a = x.clone();
        let mut trace = Trace {
            inputs: Vec::new(),
            pre: Vec::new(),
        };
        for l in 0..self.n_layers() {
            let mut z = &self.w[l] * &a;
            for mut col in z.column_iter_mut() {
                col += &self.b[l];
            }
            trace.inputs.push(a);
            a = if l + 1 < self.n_layers() {
                z.map(elu)
            } else {
                z.map(|v| self.lo + self.span * sigmoid(v))
            };
            trace.pre.push(z);
        }
        (a, trace)
    }

    /// Backpropagates `d_out` (gradient w.r.t. outputs) to weight, bias and
    /// input gradients.
    fn backward(&self, trace: &Trace, d_out: DMatrix<f64>) -> (Vec<DMatrix<f64>>, Vec<DVector<f64>>, DMatrix<f64>) {
        let nl = self.n_layers();
        let mut gw = vec![DMatrix::zeros(0, 0); nl];
        let mut gb = vec![DVector::zeros(0); nl];
        let last = &trace.pre[nl - 1];
        let mut delta = d_out.zip_map(last, |g, z| {
            let s = sigmoid(z);
            g * self.span * s * (1.0 - s)
        });
        for l in (0..nl).rev() {
            gw[l] = &delta * trace.inputs[l].transpose();
            gb[l] = delta.column_sum();
            let back = self.w[l].transpose() * &delta;
            if l == 0 {
                return (gw, gb, back);
            }
            delta = back.zip_map(&trace.pre[l - 1], |g, z| g * elu_grad(z));
        }
        unreachable!("network has at least one layer")
    }
}

/// Samples and surfaces for training.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    /// Free parameters in unconstrained coordinates.
    pub inputs: Vec<Vec<f64>>,
    pub outputs: Vec<Vec<f64>>,
}

/// Uniform sampling box for the free parameters, in natural units.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SamplerBounds {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl SamplerBounds {
    /// `value ± rel·|value|` around the free entries of `center`, clipped to
    /// each transform's range.
    pub fn around(center: &ParamVector, rel: f64) -> Self {
        let (mut lower, mut upper) = (Vec::new(), Vec::new());
        for e in center.entries.iter().filter(|e| e.free) {
            let w = rel * e.value.abs().max(1e-2);
            let (mut lo, mut hi) = (e.value - w, e.value + w);
            if let crate::calibration::Transform::Logit { lo: a, hi: b } = e.transform {
                let m = 1e-3 * (b - a);
                lo = lo.max(a + m);
                hi = hi.min(b - m);
            }
            if e.transform == crate::calibration::Transform::Log {
                lo = lo.max(1e-6);
            }
            lower.push(lo);
            upper.push(hi);
        }
        Self { lower, upper }
    }
}

/// `n` admissible samples with their surfaces; samples whose surface has a
/// failed cell or a vol outside `(0, 1)` are rejected and redrawn.
pub fn generate_training_set(
    template: &ParamVector,
    grid: &CalibrationGrid,
    n: usize,
    bounds: &SamplerBounds,
    seed: u64,
    cos: &CosConfig,
) -> Result<Dataset> {
    let d = template.n_free();
    if bounds.lower.len() != d || bounds.upper.len() != d {
        return Err(Error::InvalidParams(format!(
            "sampler bounds have {} entries, expected {d}",
            bounds.lower.len()
        )));
    }
    // Each sample gets its own stream, so the set is independent of scheduling.
    let draw = |idx: u64, attempt: u64| -> Option<(Vec<f64>, Vec<f64>)> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream((idx << 8) | attempt);
        let mut p = template.clone();
        let mut it = bounds.lower.iter().zip(&bounds.upper);
        for e in p.entries.iter_mut().filter(|e| e.free) {
            let (&lo, &hi) = it.next().expect("bounds sized");
            e.value = if hi > lo { rng.gen_range(lo..hi) } else { lo };
        }
        let model = p.to_model().ok()?;
        let vols = surface_map(&model, grid, cos);
        let vols: Option<Vec<f64>> = vols.into_iter().collect();
        let vols = vols?;
        if vols.iter().all(|v| *v > 0.0 && *v < 1.0) {
            Some((p.flatten(), vols))
        } else {
            None
        }
    };
    const MAX_ATTEMPTS: u64 = 100; // fits the 8 stream bits reserved for it
    let samples: Vec<Option<(Vec<f64>, Vec<f64>)>> = (0..n as u64)
        .into_par_iter()
        .map(|idx| (0..MAX_ATTEMPTS).find_map(|a| draw(idx, a)))
        .collect();
    let mut out = Dataset {
        inputs: Vec::with_capacity(n),
        outputs: Vec::with_capacity(n),
    };
    for s in samples {
        let (x, y) = s.ok_or_else(|| {
            Error::InvalidParams(format!(
                "sampler bounds rejected {MAX_ATTEMPTS} consecutive draws (rejection rate > 99%)"
            ))
        })?;
        out.inputs.push(x);
        out.outputs.push(y);
    }
    Ok(out)
}

fn batch_matrix(rows: &[&Vec<f64>], dim: usize) -> DMatrix<f64> {
    DMatrix::from_fn(dim, rows.len(), |i, j| rows[j][i])
}

/// Mean squared error per cell.
fn mse(pred: &DMatrix<f64>, target: &DMatrix<f64>) -> f64 {
    (pred - target).norm_squared() / pred.len() as f64
}

/// Mini-batch Adam on the mean squared vol error with early stopping on a
/// held-out validation split.
pub fn train(
    dataset: &Dataset,
    params: &ParamVector,
    grid: &CalibrationGrid,
    config: &TrainConfig,
) -> Result<TrainedSurrogate> {
    let n = dataset.inputs.len();
    if n == 0 || dataset.outputs.len() != n {
        return Err(Error::Training("empty or ragged dataset".into()));
    }
    let d_in = params.n_free();
    let d_out = grid.len();
    if dataset.inputs.iter().any(|x| x.len() != d_in) || dataset.outputs.iter().any(|y| y.len() != d_out) {
        return Err(Error::Training(format!(
            "dataset dimensions do not match {d_in} parameters and {d_out} cells"
        )));
    }
    if config.batch_size == 0 || config.batch_size > n {
        return Err(Error::Training(format!(
            "batch size {} not in [1, {n}]",
            config.batch_size
        )));
    }
    let spec = NetSpec::new(d_in, d_out);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    let n_val = if n >= 10 {
        ((n as f64 * config.validation_fraction).round() as usize).min(n - config.batch_size.min(n - 1))
    } else {
        0
    };
    let (val_idx, train_idx) = order.split_at(n_val);
    let mut train_idx = train_idx.to_vec();

    let mut mean = vec![0.0; d_in];
    let mut std = vec![0.0; d_in];
    for &i in &train_idx {
        for (m, x) in mean.iter_mut().zip(&dataset.inputs[i]) {
            *m += x / train_idx.len() as f64;
        }
    }
    for &i in &train_idx {
        for ((s, m), x) in std.iter_mut().zip(&mean).zip(&dataset.inputs[i]) {
            *s += (x - m).powi(2) / train_idx.len() as f64;
        }
    }
    let std: Vec<f64> = std
        .iter()
        .map(|s| if s.sqrt() > 1e-12 { s.sqrt() } else { 1.0 })
        .collect();
    let norm = |x: &Vec<f64>| -> Vec<f64> { x.iter().zip(&mean).zip(&std).map(|((x, m), s)| (x - m) / s).collect() };
    let xs: Vec<Vec<f64>> = dataset.inputs.iter().map(norm).collect();

    let mut net = Net::init(&spec, &mut rng);
    let mut m_w: Vec<DMatrix<f64>> = net.w.iter().map(|w| DMatrix::zeros(w.nrows(), w.ncols())).collect();
    let mut v_w = m_w.clone();
    let mut m_b: Vec<DVector<f64>> = net.b.iter().map(|b| DVector::zeros(b.len())).collect();
    let mut v_b = m_b.clone();
    let mut step = 0i32;

    let eval = |net: &Net, idx: &[usize]| -> f64 {
        if idx.is_empty() {
            return f64::NAN;
        }
        let x = batch_matrix(&idx.iter().map(|&i| &xs[i]).collect::<Vec<_>>(), d_in);
        let y = batch_matrix(&idx.iter().map(|&i| &dataset.outputs[i]).collect::<Vec<_>>(), d_out);
        mse(&net.forward(&x).0, &y)
    };

    let monitor: Vec<usize> = if val_idx.is_empty() {
        train_idx.clone()
    } else {
        val_idx.to_vec()
    };
    let mut best = (f64::INFINITY, net.clone());
    let mut since_best = 0;
    let mut epochs_run = 0;
    for epoch in 0..config.epochs {
        epochs_run = epoch + 1;
        train_idx.shuffle(&mut rng);
        for (bi, chunk) in train_idx.chunks(config.batch_size).enumerate() {
            let x = batch_matrix(&chunk.iter().map(|&i| &xs[i]).collect::<Vec<_>>(), d_in);
            let y = batch_matrix(&chunk.iter().map(|&i| &dataset.outputs[i]).collect::<Vec<_>>(), d_out);
            let (pred, trace) = net.forward(&x);
            let scale = 2.0 / pred.len() as f64;
            let loss = mse(&pred, &y);
            if !loss.is_finite() {
                return Err(Error::Training(format!("non-finite loss at epoch {epoch}, batch {bi}")));
            }
            let (gw, gb, _) = net.backward(&trace, (pred - y) * scale);
            step += 1;
            let c1 = 1.0 - config.beta1.powi(step);
            let c2 = 1.0 - config.beta2.powi(step);
            let lr = config.learning_rate;
            let (b1, b2, eps) = (config.beta1, config.beta2, config.adam_eps);
            for l in 0..net.n_layers() {
                m_w[l] = &m_w[l] * b1 + &gw[l] * (1.0 - b1);
                v_w[l] = &v_w[l] * b2 + gw[l].map(|g| g * g) * (1.0 - b2);
                net.w[l] -= m_w[l].zip_map(&v_w[l], |m, v| lr * (m / c1) / ((v / c2).sqrt() + eps));
                m_b[l] = &m_b[l] * b1 + &gb[l] * (1.0 - b1);
                v_b[l] = &v_b[l] * b2 + gb[l].map(|g| g * g) * (1.0 - b2);
                net.b[l] -= m_b[l].zip_map(&v_b[l], |m, v| lr * (m / c1) / ((v / c2).sqrt() + eps));
            }
        }
        let val = eval(&net, &monitor);
        if !val.is_finite() {
            return Err(Error::Training(format!("non-finite validation loss at epoch {epoch}")));
        }
        if val < best.0 {
            best = (val, net.clone());
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= config.patience {
                break;
            }
        }
    }
    let net = best.1;
    Ok(TrainedSurrogate {
        version: FORMAT_VERSION,
        train_loss: eval(&net, &train_idx),
        val_loss: best.0,
        epochs_run,
        layers: net.to_layers(),
        spec,
        input_mean: mean,
        input_std: std,
        params: params.clone(),
        grid: grid.clone(),
    })
}

impl TrainedSurrogate {
    fn net(&self) -> Net {
        Net::from_layers(&self.spec, &self.layers)
    }

    fn normalize(&self, coords: &[f64]) -> DMatrix<f64> {
        DMatrix::from_fn(coords.len(), 1, |i, _| {
            (coords[i] - self.input_mean[i]) / self.input_std[i]
        })
    }

    fn check_dim(&self, coords: &[f64]) -> Result<()> {
        if coords.len() != self.spec.input_dim {
            return Err(Error::InvalidParams(format!(
                "surrogate expects {} inputs, got {}",
                self.spec.input_dim,
                coords.len()
            )));
        }
        Ok(())
    }

    /// Vols for free parameters given in unconstrained coordinates.
    pub fn evaluate(&self, coords: &[f64]) -> Result<Vec<f64>> {
        self.check_dim(coords)?;
        Ok(self.net().forward(&self.normalize(coords)).0.as_slice().to_vec())
    }

    /// Vols and their Jacobian (cells x inputs) by backpropagation.
    pub fn evaluate_with_jacobian(&self, coords: &[f64]) -> Result<(Vec<f64>, DMatrix<f64>)> {
        self.check_dim(coords)?;
        let net = self.net();
        let n_out = self.spec.output_dim;
        // one backward pass per output, batched as columns seeded with the identity
        let x0 = self.normalize(coords);
        let x = DMatrix::from_fn(coords.len(), n_out, |i, _| x0[(i, 0)]);
        let (_, trace) = net.forward(&x);
        let (_, _, dx) = net.backward(&trace, DMatrix::identity(n_out, n_out));
        let jac = DMatrix::from_fn(n_out, coords.len(), |r, c| dx[(c, r)] / self.input_std[c]);
        // values from the single-column pass, bit-equal to `evaluate`
        let out = net.forward(&x0).0.as_slice().to_vec();
        Ok((out, jac))
    }

    fn batch(&self, inputs: &[Vec<f64>], targets: &[Vec<f64>]) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
        if inputs.is_empty() || inputs.len() != targets.len() {
            return Err(Error::InvalidParams("empty or ragged batch".into()));
        }
        for (x, y) in inputs.iter().zip(targets) {
            self.check_dim(x)?;
            if y.len() != self.spec.output_dim {
                return Err(Error::InvalidParams(format!(
                    "target has {} vols, expected {}",
                    y.len(),
                    self.spec.output_dim
                )));
            }
        }
        let x = DMatrix::from_fn(self.spec.input_dim, inputs.len(), |i, j| {
            (inputs[j][i] - self.input_mean[i]) / self.input_std[i]
        });
        let y = batch_matrix(&targets.iter().collect::<Vec<_>>(), self.spec.output_dim);
        Ok((x, y))
    }

    /// Training loss (mean squared vol error per cell) on a batch.
    pub fn batch_loss(&self, inputs: &[Vec<f64>], targets: &[Vec<f64>]) -> Result<f64> {
        let (x, y) = self.batch(inputs, targets)?;
        Ok(mse(&self.net().forward(&x).0, &y))
    }

    /// Loss and its gradient with respect to every weight and bias, laid out
    /// like [`TrainedSurrogate::layers`].
    pub fn loss_gradient(&self, inputs: &[Vec<f64>], targets: &[Vec<f64>]) -> Result<(f64, Vec<Layer>)> {
        let (x, y) = self.batch(inputs, targets)?;
        let net = self.net();
        let (pred, trace) = net.forward(&x);
        let loss = mse(&pred, &y);
        let scale = 2.0 / pred.len() as f64;
        let (gw, gb, _) = net.backward(&trace, (pred - y) * scale);
        let grads = Net {
            w: gw,
            b: gb,
            lo: net.lo,
            span: net.span,
        };
        Ok((loss, grads.to_layers()))
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let s: Self = serde_json::from_str(text)?;
        if s.version != FORMAT_VERSION {
            return Err(Error::Data(format!(
                "surrogate format version {} not supported (expected {FORMAT_VERSION})",
                s.version
            )));
        }
        let dims = s.spec.dims();
        let ok = s.layers.len() == dims.len() - 1
            && s.layers.iter().enumerate().all(|(l, layer)| {
                layer.cols == dims[l]
                    && layer.rows == dims[l + 1]
                    && layer.weights.len() == layer.rows * layer.cols
                    && layer.biases.len() == layer.rows
            })
            && s.input_mean.len() == s.spec.input_dim
            && s.input_std.len() == s.spec.input_dim
            && s.grid.len() == s.spec.output_dim
            && s.params.n_free() == s.spec.input_dim;
        if !ok {
            return Err(Error::Data("surrogate layer dimensions are inconsistent".into()));
        }
        Ok(s)
    }
}

struct SurrogateProblem<'a> {
    surrogate: &'a TrainedSurrogate,
    params: &'a ParamVector,
    market: &'a [f64],
}

impl LeastSquares for SurrogateProblem<'_> {
    fn residuals(&self, x: &[f64]) -> Vec<f64> {
        // the network extrapolates happily; keep the search inside the admissible set
        let admissible = self.params.unflatten(x).and_then(|p| p.to_model()).is_ok();
        match self.surrogate.evaluate(x).ok().filter(|_| admissible) {
            Some(v) => v.iter().zip(self.market).map(|(a, b)| a - b).collect(),
            None => vec![crate::calibration::FAILED_CELL_PENALTY; self.market.len()],
        }
    }

    fn jacobian(&self, x: &[f64], _r: &[f64], _step: f64) -> DMatrix<f64> {
        self.surrogate
            .evaluate_with_jacobian(x)
            .map(|(_, j)| j)
            .unwrap_or_else(|_| DMatrix::zeros(self.market.len(), x.len()))
    }
}

/// Calibrates against the surrogate; with `polish`, the optimum then seeds a
/// standard calibration on the full pricing surface.
pub fn deep_calibrate(
    surrogate: &TrainedSurrogate,
    market: &[f64],
    grid: &CalibrationGrid,
    p0: &ParamVector,
    options: &CalibrationOptions,
    polish: bool,
) -> Result<CalibrationResult> {
    if *grid != surrogate.grid {
        return Err(Error::Calibration(
            "target grid does not match the grid the surrogate was trained on".into(),
        ));
    }
    if market.len() != grid.len() {
        return Err(Error::Calibration(format!(
            "target has {} vols but the grid has {} cells",
            market.len(),
            grid.len()
        )));
    }
    if p0.free_names() != surrogate.params.free_names() {
        return Err(Error::Calibration(
            "free parameters differ from the surrogate's inputs".into(),
        ));
    }
    let problem = SurrogateProblem {
        surrogate,
        params: p0,
        market,
    };
    let lm = levenberg_marquardt(&problem, &p0.flatten(), options);
    let params = p0.unflatten(&lm.x)?;
    if polish {
        return calibrate(market, grid, &params, options);
    }
    CalibrationResult::assemble(params, grid, market, &options.cos, lm)
}

pub struct DeepCalibrator {
    surrogate: Arc<TrainedSurrogate>,
    pub polish: bool,
}

impl DeepCalibrator {
    pub fn new(surrogate: Arc<TrainedSurrogate>) -> Self {
        Self {
            surrogate,
            polish: true,
        }
    }
}

impl Calibrator for DeepCalibrator {
    fn name(&self) -> &'static str {
        "deep"
    }

    fn calibrate(
        &self,
        market: &[f64],
        grid: &CalibrationGrid,
        p0: &ParamVector,
        options: &CalibrationOptions,
    ) -> Result<CalibrationResult> {
        deep_calibrate(&self.surrogate, market, grid, p0, options, self.polish)
    }
}

#[cfg(test)]
mod tests;
