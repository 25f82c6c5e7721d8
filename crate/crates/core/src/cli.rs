//! Command-line driver. Every stage reads and writes files in documented
//! formats; outputs are written atomically.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::calib::{calibrated_to_csv, match_paths, matching_to_json, CalibrationTable, OffsetPolicy};
use crate::chanest::{
    extract_mpcs, fit_abg_by_condition, path_loss_from_csv, path_loss_rows_from_csv, path_loss_to_csv, AbgModel, DEFAULT_MIN_SEPARATION_BINS,
    DEFAULT_REL_THRESHOLD_DB,
};
use crate::error::{Error, Result};
use crate::inf::{self, dataset_to_csv, load_model, save_model, InfModel, RtConditioning};
use crate::io::{csv_text, read_to_string, write_atomic};
use crate::raytrace::{paths_from_csv, paths_to_csv, trace, LinkPaths, MAX_ORDER};
use crate::scene::{canonical_scene, load_scene, save_scene, Scene};
use crate::sounder::{load_sounding, save_sounding};
use crate::sysperf::{coverage_curve, coverage_curve_to_csv, save_radio_map, GridSpec, MapSource, RadioMap};
use crate::twin::{self, Campaign, DeploymentKind, TwinConfig};
use crate::units::fmt9;

/// Environment variable naming the default output directory.
pub const OUT_ENV: &str = "THZDT_OUT";

#[derive(Parser, Debug)]
#[command(name = "thzdt", version, about = "Digital twin pipeline for THz data-center links")]
pub struct Cli {
    #[command(flatten)]
    pub common: Common,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Args, Debug, Clone)]
pub struct Common {
    /// Scene file (JSON). Defaults to the built-in canonical scene.
    #[arg(long, global = true)]
    pub scene: Option<PathBuf>,
    /// Seed for every random stage.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory (default: $THZDT_OUT, else ./out).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Maximum reflection order of the ray tracer.
    #[arg(long, global = true)]
    pub max_order: Option<u8>,
    /// Stage threshold in dB: extraction dynamic range for `extract`, SINR threshold for `coverage`.
    #[arg(long, global = true, allow_hyphen_values = true)]
    pub threshold: Option<f64>,
    /// Radio map cell size in meters.
    #[arg(long, global = true)]
    pub grid_step: Option<f64>,
    /// JSON run configuration; its values override flags.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Create or check a scene file.
    Scene {
        #[command(subcommand)]
        action: SceneAction,
    },
    /// Trace every measured link (or one) and write the path CSV.
    Trace(LinkArgs),
    /// Sound one link with the synthetic VNA and write the sounding files.
    Sound(LinkArgs),
    /// Extract MPCs from a sounding file, or from every measured link of the scene.
    Extract {
        /// Sounding header (JSON). Without it the whole campaign is sounded in memory.
        #[arg(long)]
        sounding: Option<PathBuf>,
    },
    /// Fit LoS and NLoS log-distance models to a path-loss CSV.
    FitAbg {
        /// Path-loss CSV (default: <out>/path_loss.csv).
        #[arg(long)]
        path_loss: Option<PathBuf>,
    },
    /// Match measured MPCs to the trace and derive calibration offsets.
    Calibrate {
        /// Measured path CSV (default: <out>/measured_paths.csv).
        #[arg(long)]
        measured: Option<PathBuf>,
    },
    /// Build the dense dataset and train the neural field.
    Train(TrainArgs),
    /// Compute radio maps of the transmitters.
    Map(MapArgs),
    /// Coverage probability of a deployment.
    Coverage {
        #[command(flatten)]
        map: MapArgs,
        /// Which deployment to evaluate.
        #[arg(long, value_enum, default_value_t = DeploymentArg::Ap)]
        deployment: DeploymentArg,
    },
    /// Run the complete chain on the scene and write every artifact.
    RunAll,
}

#[derive(Subcommand, Debug)]
pub enum SceneAction {
    /// Write the canonical scene (to --scene, else <out>/scene.json).
    Init,
    /// Validate a scene file.
    Validate,
}

#[derive(Args, Debug, Clone)]
pub struct LinkArgs {
    /// Transmitter id.
    #[arg(long)]
    pub tx: Option<String>,
    /// Receiver id.
    #[arg(long)]
    pub rx: Option<String>,
}

#[derive(Args, Debug, Clone)]
pub struct TrainArgs {
    /// Calibration table (default: <out>/calibration.json).
    #[arg(long)]
    pub calibration: Option<PathBuf>,
    /// NLoS fallback model (default: <out>/abg_nlos.json).
    #[arg(long)]
    pub abg_nlos: Option<PathBuf>,
    /// Measured path CSV for the anchor samples (default: <out>/measured_paths.csv).
    #[arg(long)]
    pub measured: Option<PathBuf>,
    /// Path-loss CSV for the anchor samples (default: <out>/path_loss.csv).
    #[arg(long)]
    pub path_loss: Option<PathBuf>,
    /// Training epochs.
    #[arg(long)]
    pub epochs: Option<usize>,
}

#[derive(Args, Debug, Clone)]
pub struct MapArgs {
    /// Twin evaluating the map.
    #[arg(long, value_enum, default_value_t = SourceKind::Rt)]
    pub source: SourceKind,
    /// Trained model file, for `--source inf` (default: <out>/inf_model.txt).
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Calibration table, for `--source rt` (default: <out>/calibration.json if present).
    #[arg(long)]
    pub calibration: Option<PathBuf>,
    /// Transmitter ids (default: every transmitter).
    #[arg(long, value_delimiter = ',')]
    pub tx: Vec<String>,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
pub enum SourceKind {
    Rt,
    Inf,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
pub enum DeploymentArg {
    /// Ceiling access point (tx3).
    Ap,
    /// Single rack-level transmitter (tx1).
    Rack,
    /// Rack-level transmitter with the co-channel tx2.
    RackInterfered,
}

impl From<DeploymentArg> for DeploymentKind {
    fn from(a: DeploymentArg) -> Self {
        match a {
            DeploymentArg::Ap => DeploymentKind::Ap,
            DeploymentArg::Rack => DeploymentKind::Rack,
            DeploymentArg::RackInterfered => DeploymentKind::RackInterfered,
        }
    }
}

/// Run configuration file. Present fields override command-line flags.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub scene: Option<PathBuf>,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub max_order: Option<u8>,
    pub threshold: Option<f64>,
    pub grid_step: Option<f64>,
    /// Pipeline parameters; missing fields take defaults.
    pub twin: Option<TwinConfig>,
}

/// Flags merged with the configuration file.
#[derive(Debug, Clone)]
pub struct Resolved {
    pub scene_path: Option<PathBuf>,
    pub seed: u64,
    pub out: PathBuf,
    pub max_order: u8,
    pub threshold: Option<f64>,
    pub grid_step: Option<f64>,
    pub twin: TwinConfig,
}

impl Resolved {
    pub fn from_common(c: &Common) -> Result<Self> {
        let file = match &c.config {
            Some(p) => serde_json::from_str::<RunConfig>(&read_to_string(p)?)
                .map_err(|e| Error::parse(&p.display().to_string(), e))?,
            None => RunConfig::default(),
        };
        let out = file
            .out
            .or_else(|| c.out.clone())
            .or_else(|| std::env::var_os(OUT_ENV).map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from("out"));
        let seed = file.seed.or(c.seed).unwrap_or(0);
        let max_order = file.max_order.or(c.max_order).unwrap_or(MAX_ORDER);
        if max_order > MAX_ORDER {
            return Err(Error::invalid("max-order", format!("must be <= {MAX_ORDER}")));
        }
        let grid_step = file.grid_step.or(c.grid_step);
        let mut twin = file.twin.unwrap_or_default();
        twin.set_seed(seed);
        twin.campaign.max_order = max_order;
        if let Some(g) = grid_step {
            twin.grid_step_m = g;
        }
        Ok(Self {
            scene_path: file.scene.or_else(|| c.scene.clone()),
            seed,
            out,
            max_order,
            threshold: file.threshold.or(c.threshold),
            grid_step,
            twin,
        })
    }

    pub fn scene(&self) -> Result<Scene> {
        match &self.scene_path {
            Some(p) => load_scene(p),
            None => Ok(canonical_scene()),
        }
    }

    fn out_file(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }

    fn input(&self, given: &Option<PathBuf>, default_name: &str) -> Result<PathBuf> {
        let p = given.clone().unwrap_or_else(|| self.out_file(default_name));
        if !p.exists() {
            return Err(Error::io(
                &p,
                std::io::Error::new(std::io::ErrorKind::NotFound, "stage input does not exist"),
            ));
        }
        Ok(p)
    }

    fn grid(&self, scene: &Scene) -> Result<GridSpec> {
        GridSpec::covering(scene, self.twin.grid_step_m, self.twin.plane_z)
    }
}

/// Parses `args` and runs; returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match execute(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn execute(cli: &Cli) -> Result<()> {
    let r = Resolved::from_common(&cli.common)?;
    match &cli.command {
        Command::Scene { action } => cmd_scene(&r, action),
        Command::Trace(l) => cmd_trace(&r, l),
        Command::Sound(l) => cmd_sound(&r, l),
        Command::Extract { sounding } => cmd_extract(&r, sounding.as_deref()),
        Command::FitAbg { path_loss } => cmd_fit_abg(&r, path_loss),
        Command::Calibrate { measured } => cmd_calibrate(&r, measured),
        Command::Train(a) => cmd_train(&r, a),
        Command::Map(m) => cmd_map(&r, m).map(|_| ()),
        Command::Coverage { map, deployment } => cmd_coverage(&r, map, *deployment),
        Command::RunAll => run_all(&r).map(|_| ()),
    }
}

fn cmd_scene(r: &Resolved, action: &SceneAction) -> Result<()> {
    match action {
        SceneAction::Init => {
            let path = r.scene_path.clone().unwrap_or_else(|| r.out_file("scene.json"));
            save_scene(&canonical_scene(), &path)?;
            println!("{}", path.display());
        }
        SceneAction::Validate => {
            let path = r
                .scene_path
                .as_ref()
                .ok_or_else(|| Error::invalid("scene validate", "--scene is required"))?;
            let s = load_scene(path)?;
            println!(
                "ok: {} racks, {} nodes, {} surfaces",
                s.obstacles().len(),
                s.nodes().len(),
                s.surfaces().len()
            );
        }
    }
    Ok(())
}

fn selected_links(scene: &Scene, l: &LinkArgs) -> Result<Vec<(String, String)>> {
    match (&l.tx, &l.rx) {
        (Some(t), Some(x)) => {
            scene.node(t)?;
            scene.node(x)?;
            Ok(vec![(t.clone(), x.clone())])
        }
        (None, None) => Ok(twin::measured_links(scene)),
        _ => Err(Error::invalid("link", "give both --tx and --rx, or neither")),
    }
}

fn nominal_paths(scene: &Scene, links: &[(String, String)], max_order: u8) -> Result<Vec<LinkPaths>> {
    links
        .iter()
        .map(|(tx, rx)| {
            let (t, x) = twin::link_nodes(scene, tx, rx)?;
            Ok(LinkPaths {
                tx: tx.clone(),
                rx: rx.clone(),
                paths: trace(scene, &t, &x, max_order),
            })
        })
        .collect()
}

fn cmd_trace(r: &Resolved, l: &LinkArgs) -> Result<()> {
    let scene = r.scene()?;
    let links = nominal_paths(&scene, &selected_links(&scene, l)?, r.max_order)?;
    let path = r.out_file("rt_paths.csv");
    write_atomic(&path, paths_to_csv(&links).as_bytes())?;
    println!("{} links, {} paths -> {}", links.len(), links.iter().map(|l| l.paths.len()).sum::<usize>(), path.display());
    Ok(())
}

fn cmd_sound(r: &Resolved, l: &LinkArgs) -> Result<()> {
    let scene = r.scene()?;
    let (tx, rx) = match (&l.tx, &l.rx) {
        (Some(t), Some(x)) => (t.clone(), x.clone()),
        (None, None) => twin::measured_links(&scene)
            .into_iter()
            .next()
            .ok_or_else(|| Error::invalid("sound", "scene declares no measurement links"))?,
        _ => return Err(Error::invalid("link", "give both --tx and --rx, or neither")),
    };
    let s = twin::sound_link(&scene, &tx, &rx, &r.twin.campaign.truth, r.seed)?;
    let p = save_sounding(&s, &r.out, &format!("sounding_{tx}_{rx}"))?;
    println!("{}", p.display());
    Ok(())
}

fn extraction_threshold(r: &Resolved) -> f64 {
    r.threshold.unwrap_or(DEFAULT_REL_THRESHOLD_DB)
}

fn cmd_extract(r: &Resolved, sounding: Option<&Path>) -> Result<()> {
    let thr = extraction_threshold(r);
    match sounding {
        Some(p) => {
            let s = load_sounding(p)?;
            let mpcs = extract_mpcs(&s, thr, DEFAULT_MIN_SEPARATION_BINS)?;
            let link = LinkPaths {
                tx: s.tx_id.clone(),
                rx: s.rx_id.clone(),
                paths: mpcs,
            };
            let out = r.out_file(&format!("mpcs_{}_{}.csv", s.tx_id, s.rx_id));
            write_atomic(&out, paths_to_csv(std::slice::from_ref(&link)).as_bytes())?;
            println!("{} MPCs -> {}", link.paths.len(), out.display());
        }
        None => {
            let scene = r.scene()?;
            let mut cfg = r.twin.campaign.clone();
            cfg.threshold_db = thr;
            let c = twin::run_campaign(&scene, &cfg)?;
            write_campaign(r, &c)?;
            println!("{} links -> {}", c.links.len(), r.out.display());
        }
    }
    Ok(())
}

fn write_campaign(r: &Resolved, c: &Campaign) -> Result<()> {
    let measured: Vec<LinkPaths> = c
        .links
        .iter()
        .map(|l| LinkPaths {
            tx: l.tx.clone(),
            rx: l.rx.clone(),
            paths: l.measured.clone(),
        })
        .collect();
    write_atomic(&r.out_file("measured_paths.csv"), paths_to_csv(&measured).as_bytes())?;
    let pl: Vec<_> = c.links.iter().map(|l| (l.tx.clone(), l.rx.clone(), l.path_loss)).collect();
    write_atomic(&r.out_file("path_loss.csv"), path_loss_to_csv(&pl).as_bytes())
}

fn write_abg(r: &Resolved, los: &AbgModel, nlos: &AbgModel) -> Result<()> {
    write_atomic(&r.out_file("abg_los.json"), los.to_json().as_bytes())?;
    write_atomic(&r.out_file("abg_nlos.json"), nlos.to_json().as_bytes())
}

fn cmd_fit_abg(r: &Resolved, path_loss: &Option<PathBuf>) -> Result<()> {
    let p = r.input(path_loss, "path_loss.csv")?;
    let samples = path_loss_from_csv(&read_to_string(&p)?)?;
    let (los, nlos) = fit_abg_by_condition(&samples)?;
    write_abg(r, &los, &nlos)?;
    println!("los: alpha {} beta {}", fmt9(los.alpha), fmt9(los.beta));
    println!("nlos: alpha {} beta {}", fmt9(nlos.alpha), fmt9(nlos.beta));
    Ok(())
}

/// Matches measured links to nominal traces and writes the audit files;
/// returns the pooled table.
fn calibrate_links(r: &Resolved, scene: &Scene, measured: &[LinkPaths]) -> Result<CalibrationTable> {
    let w = r.twin.campaign.weights;
    let keys: Vec<(String, String)> = measured.iter().map(|l| (l.tx.clone(), l.rx.clone())).collect();
    let rt = nominal_paths(scene, &keys, r.max_order)?;
    let matchings: Vec<_> = measured.iter().zip(&rt).map(|(m, t)| match_paths(&m.paths, &t.paths, &w)).collect();
    let policy = OffsetPolicy::default();
    let mut reports = Vec::new();
    let mut calibrated = Vec::new();
    for ((m, t), mt) in measured.iter().zip(&rt).zip(&matchings) {
        let v: serde_json::Value =
            serde_json::from_str(&matching_to_json(&m.tx, &m.rx, mt, policy)).expect("valid json");
        reports.push(v);
        let fixed = crate::calib::apply_calibration(&t.paths, mt, policy)?;
        let mut flags = vec![false; t.paths.len()];
        for p in &mt.pairs {
            flags[p.rt] = true;
        }
        calibrated.push((
            LinkPaths {
                tx: t.tx.clone(),
                rx: t.rx.clone(),
                paths: fixed,
            },
            flags,
        ));
    }
    let table = CalibrationTable::from_links(rt.iter().zip(&matchings).map(|(t, m)| (t.paths.as_slice(), m)));
    write_atomic(
        &r.out_file("matching.json"),
        serde_json::to_string_pretty(&reports).expect("json").as_bytes(),
    )?;
    write_atomic(&r.out_file("calibrated_paths.csv"), calibrated_to_csv(&calibrated).as_bytes())?;
    write_atomic(
        &r.out_file("calibration.json"),
        serde_json::to_string_pretty(&table).expect("json").as_bytes(),
    )?;
    Ok(table)
}

fn cmd_calibrate(r: &Resolved, measured: &Option<PathBuf>) -> Result<()> {
    let scene = r.scene()?;
    let p = r.input(measured, "measured_paths.csv")?;
    let links = paths_from_csv(&read_to_string(&p)?)?;
    let t = calibrate_links(r, &scene, &links)?;
    println!(
        "{} pairs, global offset {} dB -> {}",
        t.n_pairs,
        fmt9(t.global_db),
        r.out_file("calibration.json").display()
    );
    Ok(())
}

fn load_table(p: &Path) -> Result<CalibrationTable> {
    serde_json::from_str(&read_to_string(p)?).map_err(|e| Error::parse(&p.display().to_string(), e))
}

fn train_and_write(
    r: &Resolved,
    scene: &Scene,
    rt: RtConditioning,
    nlos: AbgModel,
    anchors: &[twin::Anchor<'_>],
) -> Result<twin::AiTwin> {
    let ai = twin::train_twin(scene, rt, nlos, anchors, &r.twin)?;
    let (dataset, model, history) = (&ai.dataset, &ai.model, &ai.history);
    let samples: Vec<_> = dataset.iter().map(|t| t.sample).collect();
    write_atomic(&r.out_file("dataset.csv"), dataset_to_csv(&samples).as_bytes())?;
    save_model(model, &r.out_file("inf_model.txt"))?;
    write_atomic(
        &r.out_file("loss_history.csv"),
        csv_text(
            &["epoch", "loss"],
            history.iter().enumerate().map(|(i, l)| vec![i.to_string(), fmt9(*l)]),
        )
        .as_bytes(),
    )?;
    Ok(ai)
}

fn cmd_train(r: &Resolved, a: &TrainArgs) -> Result<()> {
    let scene = r.scene()?;
    let table = load_table(&r.input(&a.calibration, "calibration.json")?)?;
    let nlos = AbgModel::from_json(&read_to_string(&r.input(&a.abg_nlos, "abg_nlos.json")?)?)?;
    let (links, pl) = if r.twin.dataset.include_anchors {
        let links = paths_from_csv(&read_to_string(&r.input(&a.measured, "measured_paths.csv")?)?)?;
        let pl = path_loss_rows_from_csv(&read_to_string(&r.input(&a.path_loss, "path_loss.csv")?)?)?;
        (links, pl)
    } else {
        (Vec::new(), Vec::new())
    };
    let anchors = pl
        .iter()
        .map(|(tx, rx, s)| {
            let l = links
                .iter()
                .find(|l| &l.tx == tx && &l.rx == rx)
                .ok_or_else(|| Error::InsufficientData(format!("no measured paths for link {tx}-{rx}")))?;
            Ok(twin::Anchor {
                tx,
                rx,
                measured: &l.paths,
                pl_db: s.pl_db,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let epochs = a.epochs;
    let mut r = r.clone();
    if let Some(e) = epochs {
        r.twin.train.epochs = e;
    }
    let rt = RtConditioning {
        max_order: r.max_order,
        calibration: table,
    };
    let ai = train_and_write(&r, &scene, rt, nlos, &anchors)?;
    println!(
        "loss {} -> {}, validation power RMSE {} dB",
        fmt9(ai.history[0]),
        fmt9(*ai.history.last().expect("epochs >= 1")),
        fmt9(inf::power_rmse(&ai.model, &ai.val_samples())?)
    );
    Ok(())
}

enum Twin {
    Rt(RtConditioning),
    Inf(Box<InfModel>),
}

impl Twin {
    fn source(&self) -> MapSource<'_> {
        match self {
            Twin::Rt(c) => MapSource::Rt(c),
            Twin::Inf(m) => MapSource::Inf(m),
        }
    }
}

fn load_twin(r: &Resolved, m: &MapArgs) -> Result<Twin> {
    Ok(match m.source {
        SourceKind::Inf => Twin::Inf(Box::new(load_model(&r.input(&m.model, "inf_model.txt")?)?)),
        SourceKind::Rt => {
            let default = r.out_file("calibration.json");
            let calibration = match &m.calibration {
                Some(p) => load_table(p)?,
                None if default.exists() => load_table(&default)?,
                None => CalibrationTable::default(),
            };
            Twin::Rt(RtConditioning {
                max_order: r.max_order,
                calibration,
            })
        }
    })
}

fn transmitters(scene: &Scene, requested: &[String]) -> Vec<String> {
    if requested.is_empty() {
        scene
            .nodes()
            .iter()
            .filter(|(_, n)| n.role == crate::scene::Role::Tx)
            .map(|(k, _)| k.clone())
            .collect()
    } else {
        requested.to_vec()
    }
}

fn source_name(m: &MapArgs) -> &'static str {
    match m.source {
        SourceKind::Rt => "rt",
        SourceKind::Inf => "inf",
    }
}

fn cmd_map(r: &Resolved, m: &MapArgs) -> Result<Vec<RadioMap>> {
    let scene = r.scene()?;
    let twin = load_twin(r, m)?;
    let txs = transmitters(&scene, &m.tx);
    let ids: Vec<&str> = txs.iter().map(String::as_str).collect();
    let maps = twin::radio_maps(twin.source(), &scene, &ids, &r.grid(&scene)?)?;
    for map in &maps {
        let p = save_radio_map(map, &r.out, &format!("map_{}_{}", source_name(m), map.tx_id))?;
        println!("{}", p.display());
    }
    Ok(maps)
}

/// Thresholds of the written coverage curves, dB.
pub fn curve_thresholds() -> Vec<f64> {
    (-20..=40).map(f64::from).collect()
}

fn cmd_coverage(r: &Resolved, m: &MapArgs, kind: DeploymentArg) -> Result<()> {
    let kind = DeploymentKind::from(kind);
    let scene = r.scene()?;
    let twin = load_twin(r, m)?;
    let maps = twin::radio_maps(twin.source(), &scene, &kind.transmitters(), &r.grid(&scene)?)?;
    let d = twin::deployment(kind, &scene, &maps)?;
    let t = r.threshold.unwrap_or(0.0);
    let pc = crate::sysperf::coverage_probability(&d, &r.twin.budget, t);
    let curve = coverage_curve(&d, &r.twin.budget, &curve_thresholds())?;
    let name = format!("coverage_{}_{}.csv", source_name(m), kind.name());
    write_atomic(&r.out_file(&name), coverage_curve_to_csv(&curve).as_bytes())?;
    println!("{}", fmt9(pc));
    Ok(())
}

/// Headline numbers of a full run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunSummary {
    pub seed: u64,
    pub abg_los: AbgModel,
    pub abg_nlos: AbgModel,
    pub calibration_pairs: usize,
    pub calibration_global_db: f64,
    pub initial_loss: f64,
    pub final_loss: f64,
    pub validation_power_rmse_db: f64,
    pub coverage_at_0db: Vec<(String, f64)>,
}

/// Runs the chain on the scene and writes every artifact into the output directory.
pub fn run_all(r: &Resolved) -> Result<RunSummary> {
    let scene = r.scene()?;
    save_scene(&scene, &r.out_file("scene.json"))?;
    let links = twin::measured_links(&scene);
    write_atomic(
        &r.out_file("rt_paths.csv"),
        paths_to_csv(&nominal_paths(&scene, &links, r.max_order)?).as_bytes(),
    )?;
    if let Some((tx, rx)) = links.first() {
        let s = twin::sound_link(&scene, tx, rx, &r.twin.campaign.truth, r.seed)?;
        save_sounding(&s, &r.out, &format!("sounding_{tx}_{rx}"))?;
    }

    let campaign = twin::run_campaign(&scene, &r.twin.campaign)?;
    write_campaign(r, &campaign)?;
    write_abg(r, &campaign.abg_los, &campaign.abg_nlos)?;
    let measured: Vec<LinkPaths> = campaign
        .links
        .iter()
        .map(|l| LinkPaths {
            tx: l.tx.clone(),
            rx: l.rx.clone(),
            paths: l.measured.clone(),
        })
        .collect();
    let table = calibrate_links(r, &scene, &measured)?;
    let rt = RtConditioning {
        max_order: r.max_order,
        calibration: table.clone(),
    };
    let ai = train_and_write(r, &scene, rt.clone(), campaign.abg_nlos, &twin::campaign_anchors(&campaign))?;

    let grid = r.grid(&scene)?;
    let txs = transmitters(&scene, &[]);
    let ids: Vec<&str> = txs.iter().map(String::as_str).collect();
    let mut coverage = Vec::new();
    for (name, source) in [("rt", MapSource::Rt(&rt)), ("inf", MapSource::Inf(&ai.model))] {
        let maps = twin::radio_maps(source, &scene, &ids, &grid)?;
        for m in &maps {
            save_radio_map(m, &r.out, &format!("map_{name}_{}", m.tx_id))?;
        }
        for kind in DeploymentKind::ALL {
            let d = twin::deployment(kind, &scene, &maps)?;
            let kind = kind.name();
            let curve = coverage_curve(&d, &r.twin.budget, &curve_thresholds())?;
            write_atomic(
                &r.out_file(&format!("coverage_{name}_{kind}.csv")),
                coverage_curve_to_csv(&curve).as_bytes(),
            )?;
            coverage.push((
                format!("{name}_{kind}"),
                crate::sysperf::coverage_probability(&d, &r.twin.budget, 0.0),
            ));
        }
    }
    let summary = RunSummary {
        seed: r.seed,
        abg_los: campaign.abg_los,
        abg_nlos: campaign.abg_nlos,
        calibration_pairs: table.n_pairs,
        calibration_global_db: table.global_db,
        initial_loss: ai.history[0],
        final_loss: *ai.history.last().expect("epochs >= 1"),
        validation_power_rmse_db: inf::power_rmse(&ai.model, &ai.val_samples())?,
        coverage_at_0db: coverage,
    };
    write_atomic(
        &r.out_file("summary.json"),
        serde_json::to_string_pretty(&summary).expect("json").as_bytes(),
    )?;
    for (k, v) in &summary.coverage_at_0db {
        println!("coverage {k} at 0 dB: {}", fmt9(*v));
    }
    Ok(summary)
}
