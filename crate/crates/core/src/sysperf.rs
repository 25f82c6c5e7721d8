//! Radio maps, SINR and coverage probability.
//!
//! Maps hold the propagation gain `K` (dB, isotropic antennas, unit transmit
//! power) of one transmitter over a horizontal receiver plane. Transmit power
//! and antenna gain enter through [`LinkBudget`].

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Vec3;
use crate::inf::{self, InfModel, RtConditioning};
use crate::io::{csv_records, csv_text, field_bool, field_f64, read_to_string, write_atomic};
use crate::raytrace::{los_blocked, DEFAULT_POWER_FLOOR_DB};
use crate::scene::{Node, Scene};
use crate::units::{db_to_lin, fmt9, lin_to_db, meters_to_ns};

/// Receiver plane: `nx * ny` square cells at height `z`; cell centers sit at
/// `origin + (i + 0.5, j + 0.5) * cell_m`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub origin_x: f64,
    pub origin_y: f64,
    pub cell_m: f64,
    pub nx: usize,
    pub ny: usize,
    pub z: f64,
}

/// Default receiver height of the coverage plane.
pub const DEFAULT_PLANE_Z: f64 = 1.7;

impl GridSpec {
    /// Tiles the floor plan of `scene` with cells of (at most) `cell_m`.
    pub fn covering(scene: &Scene, cell_m: f64, z: f64) -> Result<Self> {
        if !(cell_m > 0.0) {
            return Err(Error::invalid("grid", "cell size must be > 0"));
        }
        let r = scene.room();
        let nx = ((r.max.x - r.min.x) / cell_m - 1e-9).ceil().max(1.0) as usize;
        let ny = ((r.max.y - r.min.y) / cell_m - 1e-9).ceil().max(1.0) as usize;
        let g = Self {
            origin_x: r.min.x,
            origin_y: r.min.y,
            cell_m: (r.max.x - r.min.x) / nx as f64,
            nx,
            ny,
            z,
        };
        // keep square cells; the y extent may fall slightly short of the wall
        let g = Self { cell_m: g.cell_m.min((r.max.y - r.min.y) / ny as f64), ..g };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<()> {
        if self.nx == 0 || self.ny == 0 {
            return Err(Error::invalid("grid", "nx and ny must be >= 1"));
        }
        if !(self.cell_m > 0.0) || ![self.origin_x, self.origin_y, self.z].iter().all(|v| v.is_finite()) {
            return Err(Error::invalid("grid", "cell size must be > 0 and coordinates finite"));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.nx * self.ny
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Center of cell `(ix, iy)`; flat index is `iy * nx + ix`.
    pub fn center(&self, ix: usize, iy: usize) -> Vec3 {
        Vec3::new(
            self.origin_x + (ix as f64 + 0.5) * self.cell_m,
            self.origin_y + (iy as f64 + 0.5) * self.cell_m,
            self.z,
        )
    }

    pub fn center_of(&self, idx: usize) -> Vec3 {
        self.center(idx % self.nx, idx / self.nx)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MapSourceTag {
    Rt,
    Inf,
}

impl MapSourceTag {
    pub fn as_str(self) -> &'static str {
        match self {
            MapSourceTag::Rt => "rt",
            MapSourceTag::Inf => "inf",
        }
    }
}

/// Which twin evaluates the map.
#[derive(Debug, Clone, Copy)]
pub enum MapSource<'a> {
    /// Calibrated trace, aggregated over paths.
    Rt(&'a RtConditioning),
    /// The neural field.
    Inf(&'a InfModel),
}

impl MapSource<'_> {
    pub fn tag(&self) -> MapSourceTag {
        match self {
            MapSource::Rt(_) => MapSourceTag::Rt,
            MapSource::Inf(_) => MapSourceTag::Inf,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MapCell {
    pub p_db: f64,
    pub tau_ns: f64,
    pub az_deg: f64,
    pub el_deg: f64,
    pub los: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RadioMap {
    pub grid: GridSpec,
    pub source: MapSourceTag,
    pub tx_id: String,
    pub tx_position: Vec3,
    /// Row-major, `iy * nx + ix`.
    pub cells: Vec<MapCell>,
}

impl RadioMap {
    pub fn cell(&self, ix: usize, iy: usize) -> &MapCell {
        &self.cells[iy * self.grid.nx + ix]
    }

    pub fn validate(&self) -> Result<()> {
        self.grid.validate()?;
        if self.cells.len() != self.grid.len() {
            return Err(Error::Dimension(format!(
                "radio map has {} cells, grid needs {}",
                self.cells.len(),
                self.grid.len()
            )));
        }
        Ok(())
    }
}

fn rt_cell(scene: &Scene, cond: &RtConditioning, node: &Node, x: Vec3) -> MapCell {
    let tx = node.position;
    let paths = cond.paths(scene, node, x);
    let los = !los_blocked(scene, tx, x);
    match paths.iter().max_by(|a, b| a.power_db.total_cmp(&b.power_db)) {
        Some(best) => MapCell {
            p_db: lin_to_db(paths.iter().map(|p| db_to_lin(p.power_db)).sum()),
            tau_ns: best.delay_ns,
            az_deg: best.az_deg,
            el_deg: best.el_deg,
            los,
        },
        None => {
            let (az, el) = (tx - x).az_el_deg();
            MapCell {
                p_db: DEFAULT_POWER_FLOOR_DB,
                tau_ns: meters_to_ns(tx.distance(x)),
                az_deg: az,
                el_deg: el,
                los: false,
            }
        }
    }
}

/// Evaluates every cell of `grid` for transmitter `tx` with its beam steered
/// at each cell (antenna boresight gains are excluded). RT cells without any
/// path carry the floor power.
pub fn build_radio_map(source: MapSource<'_>, scene: &Scene, tx_id: &str, tx: &Node, grid: &GridSpec) -> Result<RadioMap> {
    grid.validate()?;
    let p = tx.position;
    let cells = (0..grid.len())
        .into_par_iter()
        .map(|i| {
            let x = grid.center_of(i);
            match source {
                MapSource::Rt(cond) => Ok(rt_cell(scene, cond, tx, x)),
                MapSource::Inf(model) => {
                    let a = inf::predict(model, scene, tx, x)?;
                    Ok(MapCell {
                        p_db: a.p_db,
                        tau_ns: a.tau_ns,
                        az_deg: a.az_deg,
                        el_deg: a.el_deg,
                        los: !los_blocked(scene, p, x),
                    })
                }
            }
        })
        .collect::<Result<Vec<_>>>()?;
    if cells.iter().any(|c| !c.p_db.is_finite()) {
        return Err(Error::Numerical(format!("non-finite power in {} map of {tx_id}", source.tag().as_str())));
    }
    Ok(RadioMap {
        grid: *grid,
        source: source.tag(),
        tx_id: tx_id.to_string(),
        tx_position: p,
        cells,
    })
}

#[derive(Serialize, Deserialize)]
struct MapHeader {
    grid: GridSpec,
    source: MapSourceTag,
    tx_id: String,
    tx_position: Vec3,
    cells: String,
}

pub const MAP_CSV_HEADER: [&str; 7] = ["x", "y", "p_db", "tau_ns", "az_deg", "el_deg", "los"];

pub fn radio_map_to_csv(m: &RadioMap) -> String {
    csv_text(
        &MAP_CSV_HEADER,
        m.cells.iter().enumerate().map(|(i, c)| {
            let x = m.grid.center_of(i);
            vec![
                fmt9(x.x),
                fmt9(x.y),
                fmt9(c.p_db),
                fmt9(c.tau_ns),
                fmt9(c.az_deg),
                fmt9(c.el_deg),
                u8::from(c.los).to_string(),
            ]
        }),
    )
}

/// Writes `<stem>.json` (header) and `<stem>.csv` (cells); returns the header path.
pub fn save_radio_map(m: &RadioMap, dir: &Path, stem: &str) -> Result<PathBuf> {
    let csv_name = format!("{stem}.csv");
    write_atomic(&dir.join(&csv_name), radio_map_to_csv(m).as_bytes())?;
    let header = MapHeader {
        grid: m.grid,
        source: m.source,
        tx_id: m.tx_id.clone(),
        tx_position: m.tx_position,
        cells: csv_name,
    };
    let path = dir.join(format!("{stem}.json"));
    write_atomic(&path, serde_json::to_string_pretty(&header).expect("header serializes").as_bytes())?;
    Ok(path)
}

pub fn load_radio_map(header_path: &Path) -> Result<RadioMap> {
    let h: MapHeader =
        serde_json::from_str(&read_to_string(header_path)?).map_err(|e| Error::parse("radio map header", e))?;
    let dir = header_path.parent().unwrap_or_else(|| Path::new("."));
    let text = read_to_string(&dir.join(&h.cells))?;
    let ctx = "radio map";
    let cells = csv_records(&text, ctx, &MAP_CSV_HEADER)?
        .iter()
        .map(|r| {
            Ok(MapCell {
                p_db: field_f64(r, 2, ctx)?,
                tau_ns: field_f64(r, 3, ctx)?,
                az_deg: field_f64(r, 4, ctx)?,
                el_deg: field_f64(r, 5, ctx)?,
                los: field_bool(r, 6, ctx)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let m = RadioMap {
        grid: h.grid,
        source: h.source,
        tx_id: h.tx_id,
        tx_position: h.tx_position,
        cells,
    };
    m.validate()?;
    Ok(m)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LinkBudget {
    pub tx_power_dbm: f64,
    /// Boresight gain of the transmit beam steered at the receiver, used for
    /// serving and interfering links. Maps carry each path's off-boresight loss.
    pub tx_gain_dbi: f64,
    /// Receive antenna gain, applied to every link (interferers at worst-case alignment).
    pub rx_gain_dbi: f64,
    pub noise_density_dbm_hz: f64,
    pub bandwidth_hz: f64,
    pub noise_figure_db: f64,
}

impl Default for LinkBudget {
    /// 1 W transmit power, 26 dBi steered horn, thermal noise over 20 GHz with
    /// a 10 dB noise figure.
    fn default() -> Self {
        Self {
            tx_power_dbm: 30.0,
            tx_gain_dbi: 26.0,
            rx_gain_dbi: 0.0,
            noise_density_dbm_hz: -174.0,
            bandwidth_hz: 20e9,
            noise_figure_db: 10.0,
        }
    }
}

impl LinkBudget {
    pub fn validate(&self) -> Result<()> {
        if !(self.bandwidth_hz > 0.0) {
            return Err(Error::invalid("link budget", "bandwidth must be > 0"));
        }
        Ok(())
    }

    /// `N0 + 10 log10(B) + NF` in dBm.
    pub fn noise_dbm(&self) -> f64 {
        self.noise_density_dbm_hz + lin_to_db(self.bandwidth_hz) + self.noise_figure_db
    }

    /// Received power (dBm) for a propagation gain `k_db`.
    pub fn rx_power_dbm(&self, k_db: f64) -> f64 {
        self.tx_power_dbm + self.tx_gain_dbi + self.rx_gain_dbi + k_db
    }
}

/// SINR from dBm powers, summed in the linear domain.
pub fn sinr_from_powers_db(signal_dbm: f64, interferers_dbm: &[f64], noise_dbm: f64) -> f64 {
    let denom: f64 = interferers_dbm.iter().map(|&i| db_to_lin(i)).sum::<f64>() + db_to_lin(noise_dbm);
    signal_dbm - lin_to_db(denom)
}

/// One serving transmitter and its co-channel interferers, each with a map on a common grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Deployment {
    pub serving: String,
    pub interferers: Vec<String>,
    pub maps: BTreeMap<String, RadioMap>,
    /// Cells where receivers can be placed; coverage is the fraction of these.
    pub region: Vec<bool>,
}

impl Deployment {
    pub fn new(serving: &str, interferers: &[&str], maps: Vec<RadioMap>) -> Result<Self> {
        let d = Self {
            serving: serving.to_string(),
            interferers: interferers.iter().map(|s| s.to_string()).collect(),
            maps: maps.into_iter().map(|m| (m.tx_id.clone(), m)).collect(),
            region: Vec::new(),
        };
        d.validate()?;
        let n = d.grid().len();
        Ok(Self { region: vec![true; n], ..d })
    }

    /// Restricts coverage to the cells flagged in `region` (grid order).
    pub fn with_region(mut self, region: Vec<bool>) -> Result<Self> {
        if region.len() != self.grid().len() {
            return Err(Error::Dimension(format!(
                "region has {} cells, grid has {}",
                region.len(),
                self.grid().len()
            )));
        }
        if !region.iter().any(|&r| r) {
            return Err(Error::invalid("deployment region", "no cell selected"));
        }
        self.region = region;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        let entity = format!("deployment '{}'", self.serving);
        if self.interferers.contains(&self.serving) {
            return Err(Error::invalid(&entity, "serving transmitter listed as interferer"));
        }
        let grid = self
            .maps
            .get(&self.serving)
            .ok_or_else(|| Error::invalid(&entity, "no map for serving transmitter"))?
            .grid;
        for id in &self.interferers {
            let m = self
                .maps
                .get(id)
                .ok_or_else(|| Error::invalid(&entity, format!("no map for interferer '{id}'")))?;
            if m.grid != grid {
                return Err(Error::invalid(&entity, format!("map of '{id}' is on a different grid")));
            }
        }
        Ok(())
    }

    pub fn grid(&self) -> &GridSpec {
        &self.maps[&self.serving].grid
    }

    fn serving_map(&self) -> &RadioMap {
        &self.maps[&self.serving]
    }
}

/// SINR (dB) at flat cell index `cell`, with unit small-scale fading.
pub fn sinr_db(d: &Deployment, lb: &LinkBudget, cell: usize) -> Result<f64> {
    if cell >= d.grid().len() {
        return Err(Error::invalid("sinr", format!("cell {cell} outside a {}-cell grid", d.grid().len())));
    }
    Ok(sinr_cell(d, lb, cell, &mut |_| 0.0))
}

fn sinr_cell(d: &Deployment, lb: &LinkBudget, cell: usize, fade_db: &mut dyn FnMut(usize) -> f64) -> f64 {
    let s = lb.rx_power_dbm(d.serving_map().cells[cell].p_db) + fade_db(0);
    let interf: Vec<f64> = d
        .interferers
        .iter()
        .enumerate()
        .map(|(k, id)| lb.rx_power_dbm(d.maps[id].cells[cell].p_db) + fade_db(k + 1))
        .collect();
    sinr_from_powers_db(s, &interf, lb.noise_dbm())
}

/// SINR of every cell in grid order.
pub fn sinr_map(d: &Deployment, lb: &LinkBudget) -> Vec<f64> {
    (0..d.grid().len()).map(|c| sinr_cell(d, lb, c, &mut |_| 0.0)).collect()
}

/// Fraction of region cells whose SINR reaches `threshold_db`.
pub fn coverage_probability(d: &Deployment, lb: &LinkBudget, threshold_db: f64) -> f64 {
    fraction_at_least(&region_sinr(d, lb), threshold_db)
}

fn region_sinr(d: &Deployment, lb: &LinkBudget) -> Vec<f64> {
    sinr_map(d, lb)
        .into_iter()
        .zip(&d.region)
        .filter(|(_, &r)| r)
        .map(|(s, _)| s)
        .collect()
}

fn fraction_at_least(sinr: &[f64], t: f64) -> f64 {
    sinr.iter().filter(|&&s| s >= t).count() as f64 / sinr.len() as f64
}

/// Cells whose centers are clear of every obstacle.
pub fn free_space_region(scene: &Scene, grid: &GridSpec) -> Vec<bool> {
    (0..grid.len())
        .map(|i| {
            let p = grid.center_of(i);
            !scene.obstacles().iter().any(|o| o.contains_point(p))
        })
        .collect()
}

/// Coverage at each threshold; thresholds must be ascending.
pub fn coverage_curve(d: &Deployment, lb: &LinkBudget, thresholds: &[f64]) -> Result<Vec<(f64, f64)>> {
    if thresholds.windows(2).any(|w| !(w[0] <= w[1])) {
        return Err(Error::invalid("coverage curve", "thresholds must be sorted ascending"));
    }
    let sinr = region_sinr(d, lb);
    Ok(thresholds.iter().map(|&t| (t, fraction_at_least(&sinr, t))).collect())
}

/// Coverage with independent lognormal fading (standard deviation `sigma_db`)
/// on every link of every cell, drawn from a seeded generator.
pub fn coverage_probability_lognormal(d: &Deployment, lb: &LinkBudget, threshold_db: f64, sigma_db: f64, seed: u64) -> Result<f64> {
    let normal = Normal::new(0.0, sigma_db).map_err(|e| Error::invalid("fading", e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sinr: Vec<f64> = (0..d.grid().len())
        .filter(|&c| d.region[c])
        .map(|c| sinr_cell(d, lb, c, &mut |_| normal.sample(&mut rng)))
        .collect();
    Ok(fraction_at_least(&sinr, threshold_db))
}

pub fn coverage_curve_to_csv(curve: &[(f64, f64)]) -> String {
    csv_text(
        &["threshold_db", "coverage"],
        curve.iter().map(|(t, p)| vec![fmt9(*t), fmt9(*p)]),
    )
}
