//! RT-conditioned implicit neural field.
//!
//! A coordinate network maps a receiver position and the ray-tracing feature
//! vector of the link to `(received power, delay, azimuth, zenith)`. Positions
//! are lifted with sinusoidal encodings; power and delay are standardized,
//! angles divided by 360 degrees. Where ray tracing finds no direct path, the
//! LoS features are replaced by the NLoS log-distance fit.

mod file;
pub mod mlp;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use file::{dataset_from_csv, dataset_to_csv, load_model, model_from_text, model_to_text, save_model};
pub use mlp::{Gradients, Init, Mlp};

use crate::calib::CalibrationTable;
use crate::chanest::AbgModel;
use crate::error::{Error, Result};
use crate::geometry::Vec3;
use crate::raytrace::{rt_features, trace_paths, Mpc, RtFeatures, TraceConfig};
use crate::scene::{Node, Role, Scene};
use crate::units::{meters_to_ns, wrap_360};

pub const N_OUTPUTS: usize = 4;
pub const N_RT_FEATURES: usize = 7;
const ANGLE_SCALE_DEG: f64 = 360.0;
const PATH_COUNT_SCALE: f64 = 10.0;

/// Standardization statistics of the power and delay targets.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormStats {
    pub p_mean: f64,
    pub p_std: f64,
    pub tau_mean: f64,
    pub tau_std: f64,
}

impl NormStats {
    pub fn validate(&self) -> Result<()> {
        if !(self.p_std > 0.0 && self.tau_std > 0.0) {
            return Err(Error::invalid("normalization", "standard deviations must be positive"));
        }
        Ok(())
    }

    /// Normalized `(P, tau, az, el)`.
    pub fn apply(&self, p: f64, tau: f64, az: f64, el: f64) -> [f64; 4] {
        [
            (p - self.p_mean) / self.p_std,
            (tau - self.tau_mean) / self.tau_std,
            az / ANGLE_SCALE_DEG,
            el / ANGLE_SCALE_DEG,
        ]
    }

    pub fn invert(&self, y: [f64; 4]) -> [f64; 4] {
        [
            y[0] * self.p_std + self.p_mean,
            y[1] * self.tau_std + self.tau_mean,
            y[2] * ANGLE_SCALE_DEG,
            y[3] * ANGLE_SCALE_DEG,
        ]
    }
}

/// One training example.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub x: Vec3,
    pub rt: RtFeatures,
    pub target_p_db: f64,
    pub target_tau_ns: f64,
    pub target_az_deg: f64,
    pub target_el_deg: f64,
}

impl Sample {
    fn targets(&self) -> [f64; 4] {
        [
            self.target_p_db,
            self.target_tau_ns,
            wrap_360(self.target_az_deg),
            self.target_el_deg,
        ]
    }
}

fn mean_std(v: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let n = v.clone().count() as f64;
    let mean = v.clone().sum::<f64>() / n;
    let var = v.map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Standardizes power and delay targets (population statistics) and scales angles.
pub fn normalize(samples: &[Sample]) -> Result<(Vec<[f64; 4]>, NormStats)> {
    if samples.len() < 2 {
        return Err(Error::InsufficientData("normalization needs at least 2 samples".into()));
    }
    let (p_mean, p_std) = mean_std(samples.iter().map(|s| s.target_p_db));
    let (tau_mean, tau_std) = mean_std(samples.iter().map(|s| s.target_tau_ns));
    let stats = NormStats { p_mean, p_std, tau_mean, tau_std };
    if !(p_std > 0.0) || !(tau_std > 0.0) {
        return Err(Error::Numerical("zero variance in power or delay targets".into()));
    }
    Ok((normalize_with(samples, &stats), stats))
}

pub fn normalize_with(samples: &[Sample], stats: &NormStats) -> Vec<[f64; 4]> {
    samples
        .iter()
        .map(|s| {
            let t = s.targets();
            stats.apply(t[0], t[1], t[2], t[3])
        })
        .collect()
}

pub fn denormalize(y: &[[f64; 4]], stats: &NormStats) -> Vec<[f64; 4]> {
    y.iter().map(|v| stats.invert(*v)).collect()
}

/// How ray tracing conditions the field: trace order and the calibration
/// offsets applied to every fresh trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RtConditioning {
    pub max_order: u8,
    pub calibration: CalibrationTable,
}

impl RtConditioning {
    /// Calibrated paths from `tx` with its beam steered at `x`, transmit
    /// boresight gain removed, isotropic receiver. An isotropic `tx` gives the
    /// bare propagation gains.
    pub fn paths(&self, scene: &Scene, tx: &Node, x: Vec3) -> Vec<Mpc> {
        let a = tx.aimed_at(x);
        let b = Node::isotropic(Role::Rx, x);
        let g0 = tx.pattern.boresight_gain_dbi();
        let raw: Vec<Mpc> = trace_paths(scene, &a, &b, &TraceConfig::with_order(self.max_order))
            .into_iter()
            .map(|p| Mpc { power_db: p.mpc.power_db - g0, ..p.mpc })
            .collect();
        self.calibration.apply(&raw)
    }

    /// Conditioning vector at `x`, with the NLoS fallback substituted when no
    /// direct path exists.
    pub fn features(&self, scene: &Scene, tx: &Node, x: Vec3, nlos: &AbgModel) -> (Vec<Mpc>, RtFeatures) {
        let paths = self.paths(scene, tx, x);
        let raw = rt_features(&paths, &Node::isotropic(Role::Tx, tx.position), &Node::isotropic(Role::Rx, x));
        (paths, complete_features(raw, x, tx.position, nlos))
    }
}

/// Features for a location where ray tracing produced nothing.
pub fn fallback_features(x: Vec3, tx: Vec3, nlos: &AbgModel) -> RtFeatures {
    let d = tx.distance(x);
    let (az, el) = (tx - x).az_el_deg();
    RtFeatures {
        d_m: d,
        p_los_db: -nlos.path_loss_db(d),
        tau_los_ns: meters_to_ns(d),
        az_los_deg: az,
        el_los_deg: el,
        n_paths: 0,
        los_valid: false,
    }
}

/// Keeps traced LoS features; otherwise substitutes the fallback LoS fields
/// and retains the traced path count.
pub fn complete_features(raw: RtFeatures, x: Vec3, tx: Vec3, nlos: &AbgModel) -> RtFeatures {
    if raw.los_valid {
        raw
    } else {
        RtFeatures {
            n_paths: raw.n_paths,
            ..fallback_features(x, tx, nlos)
        }
    }
}

/// Network topology and input encoding.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Encoding {
    /// Sinusoidal octaves per coordinate.
    pub octaves: usize,
    /// Coordinates are mapped from this box onto `[-1, 1]^3` before encoding.
    pub bounds_lo: Vec3,
    pub bounds_hi: Vec3,
    /// Zero the RT feature block (ablation).
    #[serde(default)]
    pub ablate_rt: bool,
}

impl Encoding {
    pub fn input_size(&self) -> usize {
        3 + 6 * self.octaves + N_RT_FEATURES
    }

    pub fn encode(&self, x: Vec3, rt: &RtFeatures, norm: &NormStats) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.input_size());
        let unit: Vec<f64> = (0..3)
            .map(|i| {
                let (lo, hi) = (self.bounds_lo.axis(i), self.bounds_hi.axis(i));
                2.0 * (x.axis(i) - lo) / (hi - lo) - 1.0
            })
            .collect();
        v.extend(&unit);
        for k in 0..self.octaves {
            let w = (1u64 << k) as f64 * std::f64::consts::PI;
            for u in &unit {
                v.push((w * u).sin());
                v.push((w * u).cos());
            }
        }
        if self.ablate_rt {
            v.extend([0.0; N_RT_FEATURES]);
        } else {
            v.push((meters_to_ns(rt.d_m) - norm.tau_mean) / norm.tau_std);
            v.push((rt.p_los_db - norm.p_mean) / norm.p_std);
            v.push((rt.tau_los_ns - norm.tau_mean) / norm.tau_std);
            v.push(rt.az_los_deg / ANGLE_SCALE_DEG);
            v.push(rt.el_los_deg / ANGLE_SCALE_DEG);
            v.push(rt.n_paths as f64 / PATH_COUNT_SCALE);
            v.push(if rt.los_valid { 1.0 } else { 0.0 });
        }
        v
    }
}

/// Everything fixed before training: topology, encoding and RT conditioning.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub hidden: Vec<usize>,
    pub encoding: Encoding,
    pub rt: RtConditioning,
    pub nlos_fallback: AbgModel,
}

impl ModelSpec {
    /// 4 x 128 SiLU layers with 6 octaves over the scene's room box.
    pub fn for_scene(scene: &Scene, rt: RtConditioning, nlos_fallback: AbgModel) -> Self {
        Self {
            hidden: vec![128; 4],
            encoding: Encoding {
                octaves: 6,
                bounds_lo: scene.room().min,
                bounds_hi: scene.room().max,
                ablate_rt: false,
            },
            rt,
            nlos_fallback,
        }
    }

    pub fn widths(&self) -> Vec<usize> {
        let mut w = vec![self.encoding.input_size()];
        w.extend(&self.hidden);
        w.push(N_OUTPUTS);
        w
    }
}

/// A trained field.
#[derive(Debug, Clone, PartialEq)]
pub struct InfModel {
    pub spec: ModelSpec,
    pub net: Mlp,
    pub norm: NormStats,
    pub seed: u64,
}

/// Field output in physical units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FieldValue {
    pub p_db: f64,
    pub tau_ns: f64,
    pub az_deg: f64,
    pub el_deg: f64,
}

impl InfModel {
    pub fn validate(&self) -> Result<()> {
        self.net.check_chain()?;
        self.norm.validate()?;
        let expected = self.spec.widths();
        if self.net.widths() != expected {
            return Err(Error::Dimension(format!(
                "network widths {:?} do not match the declared topology {:?}",
                self.net.widths(),
                expected
            )));
        }
        Ok(())
    }

    pub fn input(&self, x: Vec3, rt: &RtFeatures) -> Vec<f64> {
        self.spec.encoding.encode(x, rt, &self.norm)
    }
}

/// Evaluates the field for given (already completed) features.
pub fn forward(model: &InfModel, x: Vec3, rt: &RtFeatures) -> Result<FieldValue> {
    let y = model.net.eval(&model.input(x, rt))?;
    if y.len() != N_OUTPUTS {
        return Err(Error::Dimension(format!("network emits {} values, expected 4", y.len())));
    }
    let [p, tau, az, el] = model.norm.invert([y[0], y[1], y[2], y[3]]);
    Ok(FieldValue {
        p_db: p,
        tau_ns: tau,
        az_deg: az,
        el_deg: el,
    })
}

/// Prediction at an arbitrary location.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChannelAttr {
    pub p_db: f64,
    pub tau_ns: f64,
    pub az_deg: f64,
    pub el_deg: f64,
    /// Direct path present in the RT twin.
    pub los: bool,
    /// The NLoS fallback replaced the LoS features.
    pub fallback: bool,
    pub n_rt_paths: usize,
}

/// Traces the RT twin from `tx` to `x`, completes the features and runs the field.
pub fn predict(model: &InfModel, scene: &Scene, tx: &Node, x: Vec3) -> Result<ChannelAttr> {
    let (_, f) = model.spec.rt.features(scene, tx, x, &model.spec.nlos_fallback);
    let v = forward(model, x, &f)?;
    Ok(ChannelAttr {
        p_db: v.p_db,
        tau_ns: v.tau_ns,
        az_deg: wrap_360(v.az_deg),
        el_deg: v.el_deg,
        los: f.los_valid,
        fallback: !f.los_valid,
        n_rt_paths: f.n_paths,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Optimizer {
    /// Adaptive-moment gradient descent.
    #[default]
    Adam,
    /// Plain gradient descent.
    Sgd,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    /// 0 means full batch.
    pub batch_size: usize,
    pub learning_rate: f64,
    pub seed: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub optimizer: Optimizer,
    pub init: Init,
    /// Train only the output layer.
    pub head_only: bool,
    /// Use these statistics instead of computing them from the samples.
    pub norm: Option<NormStats>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 2000,
            batch_size: 32,
            learning_rate: 1e-3,
            seed: 0,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            optimizer: Optimizer::Adam,
            init: Init::Seeded,
            head_only: false,
            norm: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::invalid("train config", "epochs must be >= 1"));
        }
        if !(self.learning_rate > 0.0) {
            return Err(Error::invalid("train config", "learning rate must be > 0"));
        }
        Ok(())
    }
}

/// Stacked network inputs and normalized targets of a dataset.
pub fn design_matrix(spec: &ModelSpec, norm: &NormStats, samples: &[Sample]) -> (Vec<f64>, Vec<f64>) {
    let mut inputs = Vec::with_capacity(samples.len() * spec.encoding.input_size());
    let mut targets = Vec::with_capacity(samples.len() * N_OUTPUTS);
    for (s, t) in samples.iter().zip(normalize_with(samples, norm)) {
        inputs.extend(spec.encoding.encode(s.x, &s.rt, norm));
        targets.extend(t);
    }
    (inputs, targets)
}

/// Fits the field by minimizing the summed squared error of the normalized
/// outputs. Deterministic for a given seed. Returns the model and the mean
/// per-sample loss of each epoch.
pub fn train(samples: &[Sample], spec: &ModelSpec, cfg: &TrainConfig) -> Result<(InfModel, Vec<f64>)> {
    cfg.validate()?;
    if samples.is_empty() {
        return Err(Error::InsufficientData("training needs at least 1 sample".into()));
    }
    let norm = match cfg.norm {
        Some(n) => {
            n.validate()?;
            n
        }
        None => normalize(samples)?.1,
    };
    let (inputs, targets) = design_matrix(spec, &norm, samples);
    let in_size = spec.encoding.input_size();
    let mut net = Mlp::new(&spec.widths(), cfg.init, cfg.seed)?;
    let trainable_from = if cfg.head_only { net.layers.len() - 1 } else { 0 };

    let n = samples.len();
    let bs = if cfg.batch_size == 0 { n } else { cfg.batch_size.min(n) };
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(0x5eed));
    let n_params = net.n_params();
    let (mut m, mut v) = (vec![0.0; n_params], vec![0.0; n_params]);
    let mut step = 0i32;
    let mut history = Vec::with_capacity(cfg.epochs);
    let mut xb = Vec::with_capacity(bs * in_size);
    let mut yb = Vec::with_capacity(bs * N_OUTPUTS);

    for epoch in 0..cfg.epochs {
        if bs < n {
            order.shuffle(&mut rng);
        }
        let mut epoch_loss = 0.0;
        for chunk in order.chunks(bs) {
            xb.clear();
            yb.clear();
            for &i in chunk {
                xb.extend_from_slice(&inputs[i * in_size..(i + 1) * in_size]);
                yb.extend_from_slice(&targets[i * N_OUTPUTS..(i + 1) * N_OUTPUTS]);
            }
            let trace = net.forward(&xb, chunk.len());
            let (loss, d_out) = mlp::squared_error(trace.output(), &yb, chunk.len());
            if !loss.is_finite() {
                return Err(Error::Numerical(format!(
                    "training diverged at epoch {epoch}: loss {loss}"
                )));
            }
            epoch_loss += loss * chunk.len() as f64;
            let grads = net.backward(&trace, &d_out, trainable_from).flat();
            step += 1;
            match cfg.optimizer {
                Optimizer::Adam => {
                    let c1 = 1.0 - cfg.beta1.powi(step);
                    let c2 = 1.0 - cfg.beta2.powi(step);
                    for (((p, g), mi), vi) in net.params_mut().zip(&grads).zip(&mut m).zip(&mut v) {
                        *mi = cfg.beta1 * *mi + (1.0 - cfg.beta1) * g;
                        *vi = cfg.beta2 * *vi + (1.0 - cfg.beta2) * g * g;
                        *p -= cfg.learning_rate * (*mi / c1) / ((*vi / c2).sqrt() + cfg.epsilon);
                    }
                }
                Optimizer::Sgd => {
                    for (p, g) in net.params_mut().zip(&grads) {
                        *p -= cfg.learning_rate * g;
                    }
                }
            }
        }
        history.push(epoch_loss / n as f64);
    }
    let model = InfModel {
        spec: spec.clone(),
        net,
        norm,
        seed: cfg.seed,
    };
    Ok((model, history))
}

/// Loss of one sample and its analytic gradient.
pub fn sample_loss_grad(model: &InfModel, sample: &Sample) -> (f64, Gradients) {
    let (x, y) = design_matrix(&model.spec, &model.norm, std::slice::from_ref(sample));
    mlp::loss_and_grad(&model.net, &x, &y, 1)
}

/// Maximum relative error between backpropagated and finite-difference
/// gradients of one sample's loss, over every parameter.
pub fn grad_check(model: &InfModel, sample: &Sample, epsilon: f64) -> Result<f64> {
    let (_, g) = sample_loss_grad(model, sample);
    grad_check_with(model, sample, epsilon, &g)
}

/// As [`grad_check`] but against a supplied analytic gradient.
pub fn grad_check_with(model: &InfModel, sample: &Sample, epsilon: f64, analytic: &Gradients) -> Result<f64> {
    let (x, y) = design_matrix(&model.spec, &model.norm, std::slice::from_ref(sample));
    mlp::grad_check_against(&model.net, &x, &y, 1, epsilon, analytic)
}

/// Root-mean-square power error (dB) of the field on a dataset.
pub fn power_rmse(model: &InfModel, samples: &[Sample]) -> Result<f64> {
    let mut se = 0.0;
    for s in samples {
        let v = forward(model, s.x, &s.rt)?;
        se += (v.p_db - s.target_p_db).powi(2);
    }
    Ok((se / samples.len() as f64).sqrt())
}
