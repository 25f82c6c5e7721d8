use serde::{Deserialize, Serialize};

use crate::geometry::Vec3;
use crate::raytrace::{trace_paths, Mpc, TraceConfig, UNRESOLVED_ORDER};
use crate::scene::{Material, Node, Scene};
use crate::units::{fspl_db, meters_to_ns};
use crate::Result;

/// Diffuse/diffracted energy the ray tracer does not model: one extra
/// component per link, arriving along the geometric Tx direction with a
/// log-distance power law and a smooth spatial ripple.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScatterModel {
    pub slope_db_per_decade: f64,
    pub intercept_db: f64,
    pub ripple_db: f64,
    pub excess_delay_ns: f64,
}

impl Default for ScatterModel {
    fn default() -> Self {
        Self {
            slope_db_per_decade: 35.0,
            intercept_db: 88.0,
            ripple_db: 2.0,
            excess_delay_ns: 2.0,
        }
    }
}

impl ScatterModel {
    pub fn loss_db(&self, d: f64, at: Vec3) -> f64 {
        let ripple = self.ripple_db
            * (2.0 * std::f64::consts::PI * at.x / 3.0).sin()
            * (2.0 * std::f64::consts::PI * at.y / 4.0).cos();
        self.slope_db_per_decade * d.log10() + self.intercept_db + ripple
    }
}

/// Ground-truth propagation of the emulated physical site. It differs from the
/// nominal ray tracer through the material table, a global excess loss and the
/// scatter component.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthModel {
    pub materials: Vec<Material>,
    pub excess_loss_db: f64,
    pub scatter: ScatterModel,
    pub max_order: u8,
}

impl Default for TruthModel {
    fn default() -> Self {
        Self {
            materials: vec![
                Material::new("metal", 2.8),
                Material::new("glass", 7.5),
                Material::new("concrete", 12.0),
            ],
            excess_loss_db: 1.5,
            scatter: ScatterModel::default(),
            max_order: 2,
        }
    }
}

impl TruthModel {
    /// Ground-truth paths at the receiver (powers include both antenna patterns).
    pub fn paths(&self, scene: &Scene, tx: &Node, rx: &Node) -> Result<Vec<Mpc>> {
        let site = scene.with_materials(self.materials.clone())?;
        let cfg = TraceConfig::with_order(self.max_order);
        let mut paths: Vec<Mpc> = trace_paths(&site, tx, rx, &cfg)
            .into_iter()
            .map(|p| {
                let mut m = p.mpc;
                m.power_db -= self.excess_loss_db;
                m
            })
            .collect();

        let d = tx.position.distance(rx.position);
        if d > 0.0 {
            let toward_tx = tx.position - rx.position;
            let (az, el) = toward_tx.az_el_deg();
            // never stronger than the free-space direct ray
            let propagation_db = (-self.scatter.loss_db(d, rx.position)).min(-fspl_db(d, cfg.freq_hz) - 3.0);
            let power_db = propagation_db - self.excess_loss_db
                + tx.gain_toward(-toward_tx)
                + rx.gain_toward(toward_tx);
            if power_db >= cfg.power_floor_db {
                paths.push(Mpc {
                    power_db,
                    delay_ns: meters_to_ns(d) + self.scatter.excess_delay_ns,
                    az_deg: az,
                    el_deg: el,
                    bounce_order: UNRESOLVED_ORDER,
                });
            }
        }
        paths.sort_by(|a, b| a.delay_ns.total_cmp(&b.delay_ns));
        Ok(paths)
    }
}
