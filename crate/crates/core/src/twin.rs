//! End-to-end assembly of the three twins on one scene.
//!
//! The physical twin is emulated: ground-truth paths are sounded with the
//! synthetic VNA and MPCs are extracted from the CFR. The measured links fit
//! the ABG models and calibrate the ray tracer (RT twin). A dense dataset of
//! truth targets conditioned on the calibrated traces trains the neural field
//! (AI twin). Radio maps of either twin feed the coverage analysis.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::calib::{match_paths, CalibrationTable, MatchWeights, Matching};
use crate::chanest::{
    extract_mpcs, fit_abg_by_condition, total_path_loss, AbgModel, PathLossSample, DEFAULT_MIN_SEPARATION_BINS,
    DEFAULT_REL_THRESHOLD_DB,
};
use crate::error::{Error, Result};
use crate::geometry::Vec3;
use crate::inf::{self, InfModel, ModelSpec, RtConditioning, Sample, TrainConfig};
use crate::raytrace::{trace, Mpc, MAX_ORDER};
use crate::scene::{Condition, Node, Role, Scene};
use crate::sounder::truth::TruthModel;
use crate::sounder::{synthesize_cfr, Sounding, SoundingSetup};
use crate::sysperf::{build_radio_map, free_space_region, Deployment, GridSpec, LinkBudget, MapSource, RadioMap};
use crate::units::{db_to_lin, lin_to_db, wrap_360};

/// Settings of the emulated measurement campaign.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CampaignConfig {
    pub seed: u64,
    pub max_order: u8,
    pub threshold_db: f64,
    pub min_separation_bins: usize,
    pub weights: MatchWeights,
    pub truth: TruthModel,
}

impl Default for CampaignConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            max_order: MAX_ORDER,
            threshold_db: DEFAULT_REL_THRESHOLD_DB,
            min_separation_bins: DEFAULT_MIN_SEPARATION_BINS,
            weights: MatchWeights::default(),
            truth: TruthModel::default(),
        }
    }
}

/// One measured link.
#[derive(Debug, Clone)]
pub struct LinkRecord {
    pub tx: String,
    pub rx: String,
    pub condition: Condition,
    pub measured: Vec<Mpc>,
    /// Nominal trace with the same antennas as the measurement (Tx horn aimed
    /// at the Rx, isotropic Rx since the sounder de-embeds its horn).
    pub rt: Vec<Mpc>,
    pub matching: Matching,
    pub path_loss: PathLossSample,
}

#[derive(Debug, Clone)]
pub struct Campaign {
    pub links: Vec<LinkRecord>,
    pub abg_los: AbgModel,
    pub abg_nlos: AbgModel,
    pub calibration: CalibrationTable,
}

/// The transmitter of a measured link, aimed at its receiver.
pub fn link_nodes(scene: &Scene, tx: &str, rx: &str) -> Result<(Node, Node)> {
    let r = scene.node(rx)?;
    let t = scene.node(tx)?.aimed_at(r.position);
    Ok((t, Node::isotropic(Role::Rx, r.position)))
}

/// Truth paths of a link sounded with the campaign horn.
pub fn sound_link(scene: &Scene, tx: &str, rx: &str, truth: &TruthModel, seed: u64) -> Result<Sounding> {
    let (t, r) = link_nodes(scene, tx, rx)?;
    let paths = truth.paths(scene, &t, &r)?;
    synthesize_cfr(&paths, &SoundingSetup::campaign(tx, rx, seed))
}

/// All `(tx, rx)` pairs with a declared measurement link, in name order.
pub fn measured_links(scene: &Scene) -> Vec<(String, String)> {
    let mut out = Vec::new();
    for (name, node) in scene.nodes() {
        if node.role == Role::Tx {
            for (rx, _) in scene.receivers_of(name) {
                out.push((name.clone(), rx.to_string()));
            }
        }
    }
    out
}

pub fn run_campaign(scene: &Scene, cfg: &CampaignConfig) -> Result<Campaign> {
    cfg.weights.validate()?;
    let links = measured_links(scene);
    if links.is_empty() {
        return Err(Error::InsufficientData("scene declares no measurement links".into()));
    }
    let records = links
        .par_iter()
        .map(|(tx, rx)| {
            let s = sound_link(scene, tx, rx, &cfg.truth, cfg.seed)?;
            let measured = extract_mpcs(&s, cfg.threshold_db, cfg.min_separation_bins)?;
            let (t, r) = link_nodes(scene, tx, rx)?;
            let rt = trace(scene, &t, &r, cfg.max_order);
            let matching = match_paths(&measured, &rt, &cfg.weights);
            // the sounder de-embeds the Rx horn; remove the aimed Tx horn as well
            let pl_db = total_path_loss(&measured)? + t.gain_toward(t.boresight);
            let condition = scene
                .node(rx)?
                .condition
                .ok_or_else(|| Error::invalid(&format!("node '{rx}'"), "measured receiver without a condition"))?;
            Ok(LinkRecord {
                tx: tx.clone(),
                rx: rx.clone(),
                condition,
                measured,
                rt,
                matching,
                path_loss: PathLossSample {
                    d_m: t.position.distance(r.position),
                    pl_db,
                    los: condition == Condition::Los,
                },
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let samples: Vec<PathLossSample> = records.iter().map(|r| r.path_loss).collect();
    let (abg_los, abg_nlos) = fit_abg_by_condition(&samples)?;
    let calibration = CalibrationTable::from_links(records.iter().map(|r| (r.rt.as_slice(), &r.matching)));
    Ok(Campaign {
        links: records,
        abg_los,
        abg_nlos,
        calibration,
    })
}

/// Settings of the dense dataset that trains the neural field.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DatasetConfig {
    pub n_samples: usize,
    pub seed: u64,
    /// Receiver heights are drawn uniformly from this range.
    pub z_range: (f64, f64),
    /// Clearance from walls and racks.
    pub margin_m: f64,
    /// Standard deviation of measurement noise on the power target, dB.
    pub power_noise_db: f64,
    /// Fraction held out for validation.
    pub validation_fraction: f64,
    /// Transmitters the samples are spread over (round robin).
    pub transmitters: Vec<String>,
    /// Adds every measured link to the training part as an anchor sample.
    pub include_anchors: bool,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        Self {
            n_samples: 200,
            seed: 0,
            z_range: (1.2, 2.6),
            margin_m: 0.1,
            power_noise_db: 0.5,
            validation_fraction: 0.2,
            transmitters: vec!["tx1".into(), "tx2".into(), "tx3".into()],
            include_anchors: true,
        }
    }
}

/// A sample with the transmitter it belongs to.
#[derive(Debug, Clone, PartialEq)]
pub struct TaggedSample {
    pub tx: String,
    pub sample: Sample,
}

/// Whether `p` is inside the room and clear of every rack by `margin`.
pub fn is_free_point(scene: &Scene, p: Vec3, margin: f64) -> bool {
    let r = scene.room();
    let inside = (0..3).all(|i| p.axis(i) > r.min.axis(i) + margin && p.axis(i) < r.max.axis(i) - margin);
    inside
        && scene
            .obstacles()
            .iter()
            .all(|o| (0..3).any(|i| p.axis(i) < o.min.axis(i) - margin || p.axis(i) > o.max.axis(i) + margin))
}

/// Ground-truth targets at `x` for `tx` steered at `x` with its boresight
/// gain removed, as the campaign measures path loss: total power and the
/// strongest path's delay and arrival angles.
pub fn truth_targets(scene: &Scene, truth: &TruthModel, tx: &Node, x: Vec3) -> Result<[f64; 4]> {
    let g0 = tx.pattern.boresight_gain_dbi();
    let paths = truth.paths(scene, &tx.aimed_at(x), &Node::isotropic(Role::Rx, x))?;
    let best = paths
        .iter()
        .max_by(|a, b| a.power_db.total_cmp(&b.power_db))
        .ok_or(Error::NoDetection)?;
    let total = lin_to_db(paths.iter().map(|p| db_to_lin(p.power_db)).sum()) - g0;
    Ok([total, best.delay_ns, wrap_360(best.az_deg), best.el_deg])
}

/// Draws receiver locations in free space and labels them with truth targets,
/// conditioned on the calibrated trace.
pub fn build_dataset(
    scene: &Scene,
    truth: &TruthModel,
    rt: &RtConditioning,
    nlos: &AbgModel,
    cfg: &DatasetConfig,
) -> Result<Vec<TaggedSample>> {
    if cfg.transmitters.is_empty() || cfg.n_samples == 0 {
        return Err(Error::invalid("dataset", "needs transmitters and at least one sample"));
    }
    let txs = cfg
        .transmitters
        .iter()
        .map(|t| Ok((t.clone(), scene.node(t)?.clone())))
        .collect::<Result<Vec<_>>>()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let noise = Normal::new(0.0, cfg.power_noise_db).map_err(|e| Error::invalid("dataset", e.to_string()))?;
    let r = scene.room();
    let mut draws = Vec::with_capacity(cfg.n_samples);
    while draws.len() < cfg.n_samples {
        let p = Vec3::new(
            rng.random_range(r.min.x..r.max.x),
            rng.random_range(r.min.y..r.max.y),
            rng.random_range(cfg.z_range.0..cfg.z_range.1),
        );
        if is_free_point(scene, p, cfg.margin_m) {
            let (tx, node) = &txs[draws.len() % txs.len()];
            draws.push((tx.clone(), node.clone(), p, noise.sample(&mut rng)));
        }
    }
    draws
        .par_iter()
        .map(|(tx, node, x, n)| {
            let [p, tau, az, el] = truth_targets(scene, truth, node, *x)?;
            let (_, features) = rt.features(scene, node, *x, nlos);
            Ok(TaggedSample {
                tx: tx.clone(),
                sample: Sample {
                    x: *x,
                    rt: features,
                    target_p_db: p + n,
                    target_tau_ns: tau,
                    target_az_deg: az,
                    target_el_deg: el,
                },
            })
        })
        .collect()
}

/// One measured link as seen by the training stage.
#[derive(Debug, Clone, Copy)]
pub struct Anchor<'a> {
    pub tx: &'a str,
    pub rx: &'a str,
    pub measured: &'a [Mpc],
    pub pl_db: f64,
}

pub fn campaign_anchors(campaign: &Campaign) -> Vec<Anchor<'_>> {
    campaign
        .links
        .iter()
        .map(|l| Anchor {
            tx: &l.tx,
            rx: &l.rx,
            measured: &l.measured,
            pl_db: l.path_loss.pl_db,
        })
        .collect()
}

/// Measured links as training samples: the measured path loss and the
/// strongest extracted component at the receiver, conditioned like any other
/// sample.
pub fn anchor_samples(scene: &Scene, anchors: &[Anchor<'_>], rt: &RtConditioning, nlos: &AbgModel) -> Result<Vec<TaggedSample>> {
    anchors
        .iter()
        .map(|a| {
            let tx = scene.node(a.tx)?;
            let x = scene.node(a.rx)?.position;
            let best = a
                .measured
                .iter()
                .max_by(|p, q| p.power_db.total_cmp(&q.power_db))
                .ok_or(Error::NoDetection)?;
            let (_, features) = rt.features(scene, tx, x, nlos);
            Ok(TaggedSample {
                tx: a.tx.to_string(),
                sample: Sample {
                    x,
                    rt: features,
                    target_p_db: -a.pl_db,
                    target_tau_ns: best.delay_ns,
                    target_az_deg: wrap_360(best.az_deg),
                    target_el_deg: best.el_deg,
                },
            })
        })
        .collect()
}

/// Seeded train/validation index split.
pub fn split_indices(n: usize, validation_fraction: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed ^ 0x5b11));
    let n_val = ((n as f64) * validation_fraction.clamp(0.0, 1.0)).round() as usize;
    let mut val = idx.split_off(n - n_val);
    idx.sort_unstable();
    val.sort_unstable();
    (idx, val)
}

/// Settings of the whole chain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TwinConfig {
    pub campaign: CampaignConfig,
    pub dataset: DatasetConfig,
    pub train: TrainConfig,
    pub hidden: Vec<usize>,
    pub octaves: usize,
    pub grid_step_m: f64,
    pub plane_z: f64,
    pub budget: LinkBudget,
}

impl Default for TwinConfig {
    fn default() -> Self {
        Self {
            campaign: CampaignConfig::default(),
            dataset: DatasetConfig::default(),
            train: TrainConfig::default(),
            hidden: vec![128; 4],
            octaves: 6,
            grid_step_m: 0.2,
            plane_z: crate::sysperf::DEFAULT_PLANE_Z,
            budget: LinkBudget::default(),
        }
    }
}

impl TwinConfig {
    /// Same configuration with every stage seeded from `seed`.
    pub fn seeded(seed: u64) -> Self {
        let mut c = Self::default();
        c.set_seed(seed);
        c
    }

    pub fn set_seed(&mut self, seed: u64) {
        self.campaign.seed = seed;
        self.dataset.seed = seed;
        self.train.seed = seed;
    }

    pub fn model_spec(&self, scene: &Scene, rt: RtConditioning, nlos: AbgModel) -> ModelSpec {
        let mut spec = ModelSpec::for_scene(scene, rt, nlos);
        spec.hidden = self.hidden.clone();
        spec.encoding.octaves = self.octaves;
        spec
    }
}

/// Calibrated RT conditioning derived from a campaign.
pub fn rt_conditioning(campaign: &Campaign, max_order: u8) -> RtConditioning {
    RtConditioning {
        max_order,
        calibration: campaign.calibration.clone(),
    }
}

pub struct AiTwin {
    pub dataset: Vec<TaggedSample>,
    pub train_idx: Vec<usize>,
    pub val_idx: Vec<usize>,
    pub model: InfModel,
    pub history: Vec<f64>,
}

impl AiTwin {
    pub fn train_samples(&self) -> Vec<Sample> {
        self.train_idx.iter().map(|&i| self.dataset[i].sample).collect()
    }

    pub fn val_samples(&self) -> Vec<Sample> {
        self.val_idx.iter().map(|&i| self.dataset[i].sample).collect()
    }
}

/// Builds the dataset, splits it, adds the measured anchors to the training
/// part and trains the field on it.
pub fn build_ai_twin(scene: &Scene, campaign: &Campaign, cfg: &TwinConfig) -> Result<AiTwin> {
    let rt = rt_conditioning(campaign, cfg.campaign.max_order);
    train_twin(scene, rt, campaign.abg_nlos, &campaign_anchors(campaign), cfg)
}

/// Training stage proper, from calibrated conditioning, the NLoS fit and the
/// measured links.
pub fn train_twin(scene: &Scene, rt: RtConditioning, nlos: AbgModel, anchors: &[Anchor<'_>], cfg: &TwinConfig) -> Result<AiTwin> {
    let mut dataset = build_dataset(scene, &cfg.campaign.truth, &rt, &nlos, &cfg.dataset)?;
    let (mut train_idx, val_idx) = split_indices(dataset.len(), cfg.dataset.validation_fraction, cfg.dataset.seed);
    if cfg.dataset.include_anchors {
        let extra = anchor_samples(scene, anchors, &rt, &nlos)?;
        train_idx.extend(dataset.len()..dataset.len() + extra.len());
        dataset.extend(extra);
    }
    let train: Vec<Sample> = train_idx.iter().map(|&i| dataset[i].sample).collect();
    let spec = cfg.model_spec(scene, rt, nlos);
    let (model, history) = inf::train(&train, &spec, &cfg.train)?;
    Ok(AiTwin {
        dataset,
        train_idx,
        val_idx,
        model,
        history,
    })
}

/// Radio maps of the given transmitters on a common grid.
pub fn radio_maps(source: MapSource<'_>, scene: &Scene, txs: &[&str], grid: &GridSpec) -> Result<Vec<RadioMap>> {
    txs.iter()
        .map(|id| build_radio_map(source, scene, id, scene.node(id)?, grid))
        .collect()
}

/// Ceiling access point deployment: `tx3` alone.
pub const AP_SERVING: &str = "tx3";
/// Rack-level deployment: `tx1` alone at the end of the cold aisle.
pub const RACK_SERVING: &str = "tx1";
/// Rack-to-rack interference: `tx2` shares the channel with the rack transmitter.
pub const RACK_INTERFERER: &str = "tx2";

/// The named deployments evaluated by the pipeline.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DeploymentKind {
    Ap,
    Rack,
    RackInterfered,
}

impl DeploymentKind {
    pub const ALL: [DeploymentKind; 3] = [DeploymentKind::Ap, DeploymentKind::Rack, DeploymentKind::RackInterfered];

    pub fn name(self) -> &'static str {
        match self {
            DeploymentKind::Ap => "ap",
            DeploymentKind::Rack => "rack",
            DeploymentKind::RackInterfered => "rack_interfered",
        }
    }

    pub fn serving(self) -> &'static str {
        match self {
            DeploymentKind::Ap => AP_SERVING,
            _ => RACK_SERVING,
        }
    }

    pub fn interferers(self) -> &'static [&'static str] {
        match self {
            DeploymentKind::RackInterfered => &[RACK_INTERFERER],
            _ => &[],
        }
    }

    /// Transmitters whose maps the deployment needs.
    pub fn transmitters(self) -> Vec<&'static str> {
        let mut v = vec![self.serving()];
        v.extend(self.interferers());
        v
    }
}

/// Builds a deployment from maps, restricted to cells clear of obstacles.
pub fn deployment(kind: DeploymentKind, scene: &Scene, maps: &[RadioMap]) -> Result<Deployment> {
    let d = Deployment::new(kind.serving(), kind.interferers(), pick(maps, &kind.transmitters())?)?;
    let region = free_space_region(scene, d.grid());
    d.with_region(region)
}

fn pick(maps: &[RadioMap], ids: &[&str]) -> Result<Vec<RadioMap>> {
    ids.iter()
        .map(|id| {
            maps.iter()
                .find(|m| m.tx_id == *id)
                .cloned()
                .ok_or_else(|| Error::invalid("deployment", format!("no radio map for '{id}'")))
        })
        .collect()
}
