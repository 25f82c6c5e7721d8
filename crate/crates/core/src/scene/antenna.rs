use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Vec3;

/// Default sidelobe floor of directional patterns, dB relative to boresight.
pub const DEFAULT_SIDELOBE_FLOOR_DB: f64 = -40.0;

/// Radiation pattern attached to a node.
///
/// The directional pattern is a Gaussian main lobe in dB,
/// `G0 - 12 [(da / hpbw_az)^2 + (de / hpbw_el)^2]`, clamped at `G0 + floor`,
/// which puts the -3 dB points exactly at half the beamwidths.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum AntennaPattern {
    Isotropic {
        gain_dbi: f64,
    },
    Gaussian {
        boresight_gain_dbi: f64,
        hpbw_az_deg: f64,
        hpbw_el_deg: f64,
        sidelobe_floor_db: f64,
    },
}

impl AntennaPattern {
    /// The 26 dBi horn of the measurement campaign (8 deg x 6 deg HPBW).
    pub fn thz_horn() -> Self {
        AntennaPattern::Gaussian {
            boresight_gain_dbi: 26.0,
            hpbw_az_deg: 8.0,
            hpbw_el_deg: 6.0,
            sidelobe_floor_db: DEFAULT_SIDELOBE_FLOOR_DB,
        }
    }

    pub fn isotropic() -> Self {
        AntennaPattern::Isotropic { gain_dbi: 0.0 }
    }

    pub fn boresight_gain_dbi(&self) -> f64 {
        match *self {
            AntennaPattern::Isotropic { gain_dbi } => gain_dbi,
            AntennaPattern::Gaussian {
                boresight_gain_dbi, ..
            } => boresight_gain_dbi,
        }
    }

    pub fn validate(&self, owner: &str) -> Result<()> {
        match *self {
            AntennaPattern::Isotropic { gain_dbi } if !gain_dbi.is_finite() => Err(
                Error::invalid(format!("pattern of '{owner}'"), "gain must be finite"),
            ),
            AntennaPattern::Isotropic { .. } => Ok(()),
            AntennaPattern::Gaussian {
                boresight_gain_dbi,
                hpbw_az_deg,
                hpbw_el_deg,
                sidelobe_floor_db,
            } => {
                let entity = format!("pattern of '{owner}'");
                if !boresight_gain_dbi.is_finite() {
                    return Err(Error::invalid(entity, "boresight gain must be finite"));
                }
                for (name, v) in [("hpbw_az_deg", hpbw_az_deg), ("hpbw_el_deg", hpbw_el_deg)] {
                    if !(v > 0.0 && v < 180.0) {
                        return Err(Error::invalid(entity, format!("{name} = {v} outside (0, 180)")));
                    }
                }
                if !(sidelobe_floor_db < 0.0) {
                    return Err(Error::invalid(entity, "sidelobe_floor_db must be negative"));
                }
                Ok(())
            }
        }
    }
}

/// Pattern gain in dBi at an angular offset from boresight.
pub fn antenna_gain(pattern: &AntennaPattern, d_az: f64, d_el: f64) -> f64 {
    match *pattern {
        AntennaPattern::Isotropic { gain_dbi } => gain_dbi,
        AntennaPattern::Gaussian {
            boresight_gain_dbi,
            hpbw_az_deg,
            hpbw_el_deg,
            sidelobe_floor_db,
        } => {
            let d_az = crate::units::wrap_180(d_az).abs();
            let rolloff = 12.0 * ((d_az / hpbw_az_deg).powi(2) + (d_el / hpbw_el_deg).powi(2));
            boresight_gain_dbi - rolloff.min(-sidelobe_floor_db)
        }
    }
}

/// Orthonormal antenna frame: `forward` is the boresight, `left` and `up`
/// complete a right-handed basis with `up` as close to +z as possible.
#[derive(Debug, Clone, Copy)]
pub struct AntennaFrame {
    forward: Vec3,
    left: Vec3,
    up: Vec3,
}

impl AntennaFrame {
    pub fn new(boresight: Vec3) -> Self {
        let forward = boresight.normalized();
        let reference = if forward.z.abs() > 1.0 - 1e-9 {
            Vec3::new(1.0, 0.0, 0.0)
        } else {
            Vec3::new(0.0, 0.0, 1.0)
        };
        let left = cross(reference, forward).normalized();
        let up = cross(forward, left);
        Self { forward, left, up }
    }

    /// Azimuth/elevation offsets (degrees) of `dir` in this frame.
    pub fn offsets_deg(&self, dir: Vec3) -> (f64, f64) {
        let v = dir.normalized();
        let lx = v.dot(self.forward);
        let ly = v.dot(self.left);
        let lz = v.dot(self.up).clamp(-1.0, 1.0);
        (ly.atan2(lx).to_degrees(), lz.asin().to_degrees())
    }
}

fn cross(a: Vec3, b: Vec3) -> Vec3 {
    Vec3::new(
        a.y * b.z - a.z * b.y,
        a.z * b.x - a.x * b.z,
        a.x * b.y - a.y * b.x,
    )
}
