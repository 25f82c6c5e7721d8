//! Image-method ray tracer: LoS plus specular reflections up to second order.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Vec3;
use crate::io;
use crate::scene::{Cuboid, Node, Scene, Surface};
use crate::units::{fmt9, fspl_db, meters_to_ns, CARRIER_HZ};

/// Highest supported reflection order.
pub const MAX_ORDER: u8 = 2;
/// Paths weaker than this (dB relative to transmit power) are dropped.
pub const DEFAULT_POWER_FLOOR_DB: f64 = -130.0;

/// Bounce order of components that are not specular ray-traced paths
/// (extracted from measurements, or diffuse energy).
pub const UNRESOLVED_ORDER: u8 = u8::MAX;

const PLANE_EPS: f64 = 1e-9;
const FACE_TOL: f64 = 1e-9;

/// One multipath component.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Mpc {
    /// Received power relative to transmit power, dB.
    pub power_db: f64,
    pub delay_ns: f64,
    /// Azimuth of arrival, `[0, 360)`.
    pub az_deg: f64,
    /// Elevation of arrival from the horizontal plane.
    pub el_deg: f64,
    /// 0 for the direct path, [`UNRESOLVED_ORDER`] when unknown.
    pub bounce_order: u8,
}

/// A traced path with the geometry needed to audit it.
#[derive(Debug, Clone, PartialEq)]
pub struct RayPath {
    pub mpc: Mpc,
    pub departure_az_deg: f64,
    pub departure_el_deg: f64,
    /// Tx, interaction points, Rx.
    pub vertices: Vec<Vec3>,
    /// Surface ids in bounce order.
    pub surfaces: Vec<usize>,
    pub length_m: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceConfig {
    pub max_order: u8,
    pub freq_hz: f64,
    pub power_floor_db: f64,
}

impl TraceConfig {
    pub fn with_order(max_order: u8) -> Self {
        Self {
            max_order: max_order.min(MAX_ORDER),
            ..Self::default()
        }
    }
}

impl Default for TraceConfig {
    fn default() -> Self {
        Self {
            max_order: MAX_ORDER,
            freq_hz: CARRIER_HZ,
            power_floor_db: DEFAULT_POWER_FLOOR_DB,
        }
    }
}

/// True iff the open segment `a`-`b` passes through the interior of an obstacle.
///
/// Room faces never block, and touching or grazing an obstacle face does not count.
pub fn los_blocked(scene: &Scene, a: Vec3, b: Vec3) -> bool {
    scene.obstacles().iter().any(|o| segment_crosses_interior(a, b, o))
}

pub(crate) fn segment_crosses_interior(a: Vec3, b: Vec3, bx: &Cuboid) -> bool {
    let d = b - a;
    let (mut t0, mut t1) = (0.0f64, 1.0f64);
    for i in 0..3 {
        let (lo, hi) = (bx.min.axis(i), bx.max.axis(i));
        let (p, di) = (a.axis(i), d.axis(i));
        if di.abs() < 1e-15 {
            if p <= lo + PLANE_EPS || p >= hi - PLANE_EPS {
                return false;
            }
        } else {
            let (mut ta, mut tb) = ((lo - p) / di, (hi - p) / di);
            if ta > tb {
                std::mem::swap(&mut ta, &mut tb);
            }
            t0 = t0.max(ta);
            t1 = t1.min(tb);
            if t0 >= t1 {
                return false;
            }
        }
    }
    (t1 - t0) * d.norm() > PLANE_EPS
}

/// Multipath components between two nodes, sorted by ascending delay.
pub fn trace(scene: &Scene, tx: &Node, rx: &Node, max_order: u8) -> Vec<Mpc> {
    trace_paths(scene, tx, rx, &TraceConfig::with_order(max_order))
        .into_iter()
        .map(|p| p.mpc)
        .collect()
}

/// Full path geometry for every valid propagation path.
pub fn trace_paths(scene: &Scene, tx: &Node, rx: &Node, cfg: &TraceConfig) -> Vec<RayPath> {
    let (a, b) = (tx.position, rx.position);
    let surfaces = scene.surfaces();
    let mut out = Vec::new();
    if !los_blocked(scene, a, b) && a.distance(b) > 0.0 {
        out.push(vec![]);
    }
    if cfg.max_order >= 1 {
        for s in surfaces {
            if s.side(a) <= PLANE_EPS || s.side(b) <= PLANE_EPS {
                continue;
            }
            let img = s.mirror(a);
            let Some(p) = plane_hit(img, b, s) else { continue };
            if !los_blocked(scene, a, p) && !los_blocked(scene, p, b) {
                out.push(vec![(s.id, p)]);
            }
        }
    }
    if cfg.max_order >= 2 {
        for s1 in surfaces {
            if s1.side(a) <= PLANE_EPS {
                continue;
            }
            let img1 = s1.mirror(a);
            for s2 in surfaces {
                if s2.id == s1.id || s2.side(b) <= PLANE_EPS {
                    continue;
                }
                if s1.axis == s2.axis && (s1.coord - s2.coord).abs() < PLANE_EPS {
                    continue;
                }
                let img2 = s2.mirror(img1);
                let Some(p2) = plane_hit(img2, b, s2) else { continue };
                let Some(p1) = plane_hit(img1, p2, s1) else { continue };
                if s2.side(p1) <= PLANE_EPS || s1.side(p2) <= PLANE_EPS {
                    continue;
                }
                if !los_blocked(scene, a, p1) && !los_blocked(scene, p1, p2) && !los_blocked(scene, p2, b) {
                    out.push(vec![(s1.id, p1), (s2.id, p2)]);
                }
            }
        }
    }

    let mut paths: Vec<RayPath> = out
        .into_iter()
        .map(|bounces| build_path(scene, tx, rx, &bounces, cfg.freq_hz))
        .filter(|p| p.mpc.power_db >= cfg.power_floor_db)
        .collect();
    paths.sort_by(|p, q| {
        p.mpc
            .delay_ns
            .total_cmp(&q.mpc.delay_ns)
            .then(q.mpc.power_db.total_cmp(&p.mpc.power_db))
            .then(p.surfaces.cmp(&q.surfaces))
    });
    paths
}

/// Intersection of segment `from`-`to` with the face plane, if it lies
/// strictly between the endpoints and within the face rectangle.
fn plane_hit(from: Vec3, to: Vec3, s: &Surface) -> Option<Vec3> {
    let (fa, ta) = (from.axis(s.axis), to.axis(s.axis));
    let denom = ta - fa;
    if denom.abs() < 1e-15 {
        return None;
    }
    let t = (s.coord - fa) / denom;
    if t <= 0.0 || t >= 1.0 {
        return None;
    }
    let p = (from + (to - from) * t).with_axis(s.axis, s.coord);
    s.within_face(p, FACE_TOL).then_some(p)
}

fn build_path(scene: &Scene, tx: &Node, rx: &Node, bounces: &[(usize, Vec3)], freq_hz: f64) -> RayPath {
    let mut vertices = Vec::with_capacity(bounces.len() + 2);
    vertices.push(tx.position);
    vertices.extend(bounces.iter().map(|(_, p)| *p));
    vertices.push(rx.position);
    let length_m: f64 = vertices.windows(2).map(|w| w[0].distance(w[1])).sum();
    let departure = vertices[1] - vertices[0];
    let arrival = vertices[vertices.len() - 2] - rx.position;
    let losses: f64 = bounces
        .iter()
        .map(|(id, _)| scene.surfaces()[*id].reflection_loss_db)
        .sum();
    let power_db = -fspl_db(length_m, freq_hz) + tx.gain_toward(departure) + rx.gain_toward(arrival) - losses;
    let (az, el) = arrival.az_el_deg();
    let (daz, del) = departure.az_el_deg();
    RayPath {
        mpc: Mpc {
            power_db,
            delay_ns: meters_to_ns(length_m),
            az_deg: az,
            el_deg: el,
            bounce_order: bounces.len() as u8,
        },
        departure_az_deg: daz,
        departure_el_deg: del,
        vertices,
        surfaces: bounces.iter().map(|(id, _)| *id).collect(),
        length_m,
    }
}

/// Conditioning vector derived from a traced path list.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RtFeatures {
    pub d_m: f64,
    pub p_los_db: f64,
    pub tau_los_ns: f64,
    pub az_los_deg: f64,
    pub el_los_deg: f64,
    pub n_paths: usize,
    pub los_valid: bool,
}

/// Extracts the conditioning vector. Without a direct path the LoS fields hold
/// the geometric direct-ray placeholder (free-space power, `d/c`, Tx direction);
/// the neural field replaces them with its NLoS fallback before use.
pub fn rt_features(paths: &[Mpc], tx: &Node, rx: &Node) -> RtFeatures {
    let d_m = tx.position.distance(rx.position);
    match paths.iter().find(|p| p.bounce_order == 0) {
        Some(los) => RtFeatures {
            d_m,
            p_los_db: los.power_db,
            tau_los_ns: los.delay_ns,
            az_los_deg: los.az_deg,
            el_los_deg: los.el_deg,
            n_paths: paths.len(),
            los_valid: true,
        },
        None => {
            let (az, el) = (tx.position - rx.position).az_el_deg();
            RtFeatures {
                d_m,
                p_los_db: -fspl_db(d_m, CARRIER_HZ),
                tau_los_ns: meters_to_ns(d_m),
                az_los_deg: az,
                el_los_deg: el,
                n_paths: paths.len(),
                los_valid: false,
            }
        }
    }
}

pub const PATH_CSV_HEADER: [&str; 7] = ["tx", "rx", "bounce_order", "power_db", "delay_ns", "az_deg", "el_deg"];

/// A path list tagged with its link, as stored in path CSV files.
#[derive(Debug, Clone, PartialEq)]
pub struct LinkPaths {
    pub tx: String,
    pub rx: String,
    pub paths: Vec<Mpc>,
}

pub fn mpc_fields(tx: &str, rx: &str, m: &Mpc) -> Vec<String> {
    vec![
        tx.to_string(),
        rx.to_string(),
        m.bounce_order.to_string(),
        fmt9(m.power_db),
        fmt9(m.delay_ns),
        fmt9(m.az_deg),
        fmt9(m.el_deg),
    ]
}

pub fn paths_to_csv(links: &[LinkPaths]) -> String {
    io::csv_text(
        &PATH_CSV_HEADER,
        links
            .iter()
            .flat_map(|l| l.paths.iter().map(move |m| mpc_fields(&l.tx, &l.rx, m))),
    )
}

/// Parses a path CSV, grouping rows by consecutive (tx, rx).
pub fn paths_from_csv(text: &str) -> Result<Vec<LinkPaths>> {
    let ctx = "path csv";
    let mut links: Vec<LinkPaths> = Vec::new();
    for rec in io::csv_records(text, ctx, &PATH_CSV_HEADER)? {
        let tx = io::field_str(&rec, 0, ctx)?;
        let rx = io::field_str(&rec, 1, ctx)?;
        let order: u8 = io::field_str(&rec, 2, ctx)?
            .trim()
            .parse()
            .map_err(|_| Error::parse(ctx, "bad bounce_order"))?;
        let m = Mpc {
            bounce_order: order,
            power_db: io::field_f64(&rec, 3, ctx)?,
            delay_ns: io::field_f64(&rec, 4, ctx)?,
            az_deg: io::field_f64(&rec, 5, ctx)?,
            el_deg: io::field_f64(&rec, 6, ctx)?,
        };
        match links.last_mut() {
            Some(l) if l.tx == tx && l.rx == rx => l.paths.push(m),
            _ => links.push(LinkPaths {
                tx: tx.to_string(),
                rx: rx.to_string(),
                paths: vec![m],
            }),
        }
    }
    Ok(links)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene::{default_materials, Role, Room, SceneFile};
    use std::collections::BTreeMap;

    fn room(racks: Vec<Cuboid>, material: &str) -> Scene {
        Scene::new(SceneFile {
            description: None,
            room: Room {
                min: Vec3::new(0.0, 0.0, 0.0),
                max: Vec3::new(20.0, 20.0, 10.0),
                material: material.into(),
                face_materials: BTreeMap::new(),
            },
            materials: default_materials(),
            racks,
            nodes: BTreeMap::new(),
        })
        .unwrap()
    }

    fn iso(p: Vec3) -> Node {
        Node::isotropic(Role::Rx, p)
    }

    #[test]
    fn empty_room_never_blocks() {
        let s = room(vec![], "concrete");
        assert!(!los_blocked(&s, Vec3::new(1.0, 1.0, 1.0), Vec3::new(19.0, 19.0, 9.0)));
    }

    #[test]
    fn rack_across_midpoint_blocks() {
        let rack = Cuboid::new("r", Vec3::new(9.0, 4.0, 0.0), Vec3::new(11.0, 6.0, 2.0), "metal");
        let s = room(vec![rack], "concrete");
        assert!(los_blocked(&s, Vec3::new(5.0, 5.0, 1.0), Vec3::new(15.0, 5.0, 1.0)));
        // passes above the rack
        assert!(!los_blocked(&s, Vec3::new(5.0, 5.0, 2.5), Vec3::new(15.0, 5.0, 2.5)));
    }

    #[test]
    fn grazing_a_face_is_not_blocked() {
        let rack = Cuboid::new("r", Vec3::new(9.0, 4.0, 0.0), Vec3::new(11.0, 6.0, 2.0), "metal");
        let s = room(vec![rack], "concrete");
        // runs exactly along the top face
        assert!(!los_blocked(&s, Vec3::new(5.0, 5.0, 2.0), Vec3::new(15.0, 5.0, 2.0)));
        // ends on a face
        assert!(!los_blocked(&s, Vec3::new(5.0, 5.0, 1.0), Vec3::new(9.0, 5.0, 1.0)));
    }

    #[test]
    fn free_space_los_power() {
        let s = room(vec![], "concrete");
        let p = trace(&s, &iso(Vec3::new(5.0, 5.0, 5.0)), &iso(Vec3::new(6.0, 5.0, 5.0)), 0);
        assert_eq!(p.len(), 1);
        // 20 log10(4 pi * 1 m * 300 GHz / c)
        assert!((p[0].power_db + 81.984_197_280_4).abs() < 1e-9);
        assert!((p[0].delay_ns - 1e9 / 3e8).abs() < 1e-12);
        let p = trace(&s, &iso(Vec3::new(5.0, 5.0, 5.0)), &iso(Vec3::new(15.0, 5.0, 5.0)), 0);
        assert!((p[0].delay_ns - 33.333_333_333).abs() < 1e-6);
    }

    #[test]
    fn single_wall_reflection() {
        // metal wall at y = 0; both nodes 1 m off it, 2 m apart
        let s = room(vec![], "metal");
        let tx = iso(Vec3::new(5.0, 1.0, 5.0));
        let rx = iso(Vec3::new(7.0, 1.0, 5.0));
        let paths = trace_paths(&s, &tx, &rx, &TraceConfig::with_order(1));
        let wall: Vec<_> = paths
            .iter()
            .filter(|p| p.mpc.bounce_order == 1 && p.vertices[1].y == 0.0)
            .collect();
        assert_eq!(wall.len(), 1);
        let l = 8f64.sqrt();
        assert!((wall[0].length_m - l).abs() < 1e-12);
        assert!((wall[0].mpc.delay_ns - 9.428_090_416).abs() < 1e-6);
        let expected = -fspl_db(l, CARRIER_HZ) - 2.0;
        assert!((wall[0].mpc.power_db - expected).abs() < 1e-9);
        // arrives from below-left in the xy plane: direction (-1, -1, 0)
        assert!((wall[0].mpc.az_deg - 225.0).abs() < 1e-9);
    }

    #[test]
    fn features_from_los_and_reflections() {
        let s = room(vec![], "metal");
        let tx = iso(Vec3::new(5.0, 1.0, 5.0));
        let rx = iso(Vec3::new(7.0, 1.0, 5.0));
        let paths = trace(&s, &tx, &rx, 1);
        let f = rt_features(&paths, &tx, &rx);
        assert_eq!(f.n_paths, paths.len());
        assert!(f.n_paths >= 3);
        assert!(f.los_valid);
        let los = paths.iter().find(|p| p.bounce_order == 0).unwrap();
        assert_eq!(f.p_los_db, los.power_db);
        assert_eq!(f.tau_los_ns, los.delay_ns);
        assert!((f.d_m - 2.0).abs() < 1e-12);
    }

    #[test]
    fn features_of_empty_list() {
        let tx = iso(Vec3::new(0.0, 0.0, 0.0));
        let rx = iso(Vec3::new(3.0, 4.0, 0.0));
        let f = rt_features(&[], &tx, &rx);
        assert_eq!(f.n_paths, 0);
        assert!(!f.los_valid);
        assert!((f.d_m - 5.0).abs() < 1e-12);
    }

    #[test]
    fn sorted_by_delay_and_above_floor() {
        let s = room(vec![], "metal");
        let tx = iso(Vec3::new(3.0, 4.0, 2.0));
        let rx = iso(Vec3::new(12.0, 15.0, 7.0));
        let paths = trace(&s, &tx, &rx, 2);
        assert!(paths.windows(2).all(|w| w[0].delay_ns <= w[1].delay_ns));
        assert!(paths.iter().all(|p| p.power_db >= DEFAULT_POWER_FLOOR_DB));
        assert_eq!(paths[0].bounce_order, 0);
    }

    #[test]
    fn csv_round_trip() {
        let s = room(vec![], "metal");
        let paths = trace(&s, &iso(Vec3::new(3.0, 4.0, 2.0)), &iso(Vec3::new(12.0, 15.0, 7.0)), 1);
        let links = vec![LinkPaths {
            tx: "a".into(),
            rx: "b".into(),
            paths: paths.clone(),
        }];
        let back = paths_from_csv(&paths_to_csv(&links)).unwrap();
        assert_eq!(back.len(), 1);
        assert_eq!(back[0].paths.len(), paths.len());
        for (x, y) in back[0].paths.iter().zip(&paths) {
            assert!((x.power_db - y.power_db).abs() < 1e-6);
        }
    }
}
