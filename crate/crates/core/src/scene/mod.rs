//! Data-center geometry: room, rack boxes, materials, antennas and nodes.

mod antenna;
mod canonical;

use std::collections::{BTreeMap, HashSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

pub use antenna::{antenna_gain, AntennaFrame, AntennaPattern, DEFAULT_SIDELOBE_FLOOR_DB};
pub use canonical::canonical_scene;

use crate::error::{Error, Result};
use crate::geometry::Vec3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Material {
    pub name: String,
    /// Power lost per specular bounce, dB.
    pub reflection_loss_db: f64,
}

impl Material {
    pub fn new(name: &str, reflection_loss_db: f64) -> Self {
        Self {
            name: name.to_string(),
            reflection_loss_db,
        }
    }
}

/// The default material table: only the ordering metal < glass < concrete matters.
pub fn default_materials() -> Vec<Material> {
    vec![
        Material::new("metal", 2.0),
        Material::new("glass", 6.0),
        Material::new("concrete", 10.0),
    ]
}

/// Axis-aligned box.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cuboid {
    pub name: String,
    pub min: Vec3,
    pub max: Vec3,
    pub material: String,
}

impl Cuboid {
    pub fn new(name: &str, min: Vec3, max: Vec3, material: &str) -> Self {
        Self {
            name: name.to_string(),
            min,
            max,
            material: material.to_string(),
        }
    }

    pub fn contains_box(&self, other: &Cuboid) -> bool {
        (0..3).all(|i| other.min.axis(i) >= self.min.axis(i) && other.max.axis(i) <= self.max.axis(i))
    }

    pub fn contains_point(&self, p: Vec3) -> bool {
        (0..3).all(|i| p.axis(i) >= self.min.axis(i) && p.axis(i) <= self.max.axis(i))
    }

    /// Strict interior membership (boundary excluded).
    pub fn interior_contains(&self, p: Vec3) -> bool {
        (0..3).all(|i| p.axis(i) > self.min.axis(i) && p.axis(i) < self.max.axis(i))
    }
}

/// The air volume of the hall. Individual faces may override the room material.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Room {
    pub min: Vec3,
    pub max: Vec3,
    pub material: String,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub face_materials: BTreeMap<RoomFace, String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RoomFace {
    XMin,
    XMax,
    YMin,
    YMax,
    Floor,
    Ceiling,
}

impl RoomFace {
    pub const ALL: [RoomFace; 6] = [
        RoomFace::XMin,
        RoomFace::XMax,
        RoomFace::YMin,
        RoomFace::YMax,
        RoomFace::Floor,
        RoomFace::Ceiling,
    ];

    fn axis_and_side(self) -> (usize, bool) {
        match self {
            RoomFace::XMin => (0, false),
            RoomFace::XMax => (0, true),
            RoomFace::YMin => (1, false),
            RoomFace::YMax => (1, true),
            RoomFace::Floor => (2, false),
            RoomFace::Ceiling => (2, true),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Tx,
    Rx,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Condition {
    Los,
    Nlos,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Node {
    pub role: Role,
    pub position: Vec3,
    /// Unit vector.
    pub boresight: Vec3,
    pub pattern: AntennaPattern,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tx_power_dbm: Option<f64>,
    /// For receivers: the transmitter this location was measured against.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub link: Option<String>,
    /// For receivers: declared propagation condition of the measured link.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub condition: Option<Condition>,
}

impl Node {
    pub fn new(role: Role, position: Vec3, boresight: Vec3, pattern: AntennaPattern) -> Self {
        Self {
            role,
            position,
            boresight: boresight.normalized(),
            pattern,
            tx_power_dbm: None,
            link: None,
            condition: None,
        }
    }

    /// A 0 dBi node at `position`, used for propagation-only evaluation.
    pub fn isotropic(role: Role, position: Vec3) -> Self {
        Self::new(role, position, Vec3::new(1.0, 0.0, 0.0), AntennaPattern::isotropic())
    }

    /// Pattern gain toward a global direction, dBi.
    pub fn gain_toward(&self, dir: Vec3) -> f64 {
        match self.pattern {
            AntennaPattern::Isotropic { gain_dbi } => gain_dbi,
            ref p => {
                let (da, de) = AntennaFrame::new(self.boresight).offsets_deg(dir);
                antenna_gain(p, da, de)
            }
        }
    }

    /// Same node with the boresight pointed at `target`.
    pub fn aimed_at(&self, target: Vec3) -> Node {
        let mut n = self.clone();
        n.boresight = (target - self.position).normalized();
        n
    }
}

/// A planar reflecting face.
#[derive(Debug, Clone, PartialEq)]
pub struct Surface {
    pub id: usize,
    /// Index of the axis the face is perpendicular to.
    pub axis: usize,
    pub coord: f64,
    /// Bounds on the two remaining axes, in increasing axis order.
    pub lo: [f64; 2],
    pub hi: [f64; 2],
    /// +1 when the reflecting side is toward increasing `axis`, -1 otherwise.
    pub normal_sign: f64,
    pub reflection_loss_db: f64,
    pub owner: SurfaceOwner,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SurfaceOwner {
    Room(RoomFace),
    Obstacle(usize),
}

impl Surface {
    pub fn other_axes(&self) -> [usize; 2] {
        match self.axis {
            0 => [1, 2],
            1 => [0, 2],
            _ => [0, 1],
        }
    }

    /// Signed distance to the plane, positive on the reflecting side.
    pub fn side(&self, p: Vec3) -> f64 {
        (p.axis(self.axis) - self.coord) * self.normal_sign
    }

    pub fn mirror(&self, p: Vec3) -> Vec3 {
        p.with_axis(self.axis, 2.0 * self.coord - p.axis(self.axis))
    }

    /// True when `p` (assumed on the plane) lies within the face rectangle.
    pub fn within_face(&self, p: Vec3, tol: f64) -> bool {
        let [a, b] = self.other_axes();
        p.axis(a) >= self.lo[0] - tol
            && p.axis(a) <= self.hi[0] + tol
            && p.axis(b) >= self.lo[1] - tol
            && p.axis(b) <= self.hi[1] + tol
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub description: Option<String>,
    pub room: Room,
    pub materials: Vec<Material>,
    pub racks: Vec<Cuboid>,
    pub nodes: BTreeMap<String, Node>,
}

/// Validated, immutable scene with derived surfaces.
#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    file: SceneFile,
    room_box: Cuboid,
    surfaces: Vec<Surface>,
}

impl Scene {
    pub fn new(file: SceneFile) -> Result<Self> {
        validate(&file)?;
        let room_box = Cuboid::new("room", file.room.min, file.room.max, &file.room.material);
        let surfaces = derive_surfaces(&file);
        Ok(Self {
            file,
            room_box,
            surfaces,
        })
    }

    pub fn description(&self) -> Option<&str> {
        self.file.description.as_deref()
    }

    pub fn room(&self) -> &Cuboid {
        &self.room_box
    }

    pub fn obstacles(&self) -> &[Cuboid] {
        &self.file.racks
    }

    pub fn materials(&self) -> &[Material] {
        &self.file.materials
    }

    pub fn surfaces(&self) -> &[Surface] {
        &self.surfaces
    }

    pub fn nodes(&self) -> &BTreeMap<String, Node> {
        &self.file.nodes
    }

    pub fn node(&self, name: &str) -> Result<&Node> {
        self.file
            .nodes
            .get(name)
            .ok_or_else(|| Error::invalid(format!("node '{name}'"), "not present in scene"))
    }

    pub fn material_loss(&self, name: &str) -> Option<f64> {
        self.file
            .materials
            .iter()
            .find(|m| m.name == name)
            .map(|m| m.reflection_loss_db)
    }

    /// Receivers measured against transmitter `tx`, in name order.
    pub fn receivers_of(&self, tx: &str) -> Vec<(&str, &Node)> {
        let mut v: Vec<_> = self
            .file
            .nodes
            .iter()
            .filter(|(_, n)| n.role == Role::Rx && n.link.as_deref() == Some(tx))
            .map(|(k, n)| (k.as_str(), n))
            .collect();
        v.sort_by_key(|(k, _)| natural_key(k));
        v
    }

    pub fn as_file(&self) -> &SceneFile {
        &self.file
    }

    /// Same geometry with a different material table (names must match).
    pub fn with_materials(&self, materials: Vec<Material>) -> Result<Scene> {
        let mut f = self.file.clone();
        f.materials = materials;
        Scene::new(f)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.file).expect("scene serializes")
    }

    pub fn from_json(text: &str) -> Result<Scene> {
        let file: SceneFile = serde_json::from_str(text).map_err(|e| Error::parse("scene", e))?;
        Scene::new(file)
    }
}

/// Sort key that orders `rx2` before `rx10`.
/// Concrete hall `[min, max]` with default materials, the given racks and no nodes.
pub fn box_scene(min: Vec3, max: Vec3, racks: Vec<Cuboid>) -> Result<Scene> {
    Scene::new(SceneFile {
        description: None,
        room: Room {
            min,
            max,
            material: "concrete".into(),
            face_materials: BTreeMap::new(),
        },
        materials: default_materials(),
        racks,
        nodes: BTreeMap::new(),
    })
}

pub fn natural_key(s: &str) -> (String, u64) {
    let digits = s.len() - s.trim_end_matches(|c: char| c.is_ascii_digit()).len();
    let (head, tail) = s.split_at(s.len() - digits);
    (head.to_string(), tail.parse().unwrap_or(0))
}

pub fn load_scene(path: &Path) -> Result<Scene> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Scene::from_json(&text)
}

pub fn save_scene(scene: &Scene, path: &Path) -> Result<()> {
    crate::io::write_atomic(path, scene.to_json().as_bytes())
}

fn validate(f: &SceneFile) -> Result<()> {
    let mut names = HashSet::new();
    for m in &f.materials {
        if !names.insert(m.name.as_str()) {
            return Err(Error::invalid(format!("material '{}'", m.name), "duplicate name"));
        }
        if !(m.reflection_loss_db >= 0.0) || !m.reflection_loss_db.is_finite() {
            return Err(Error::invalid(
                format!("material '{}'", m.name),
                "reflection_loss_db must be finite and >= 0",
            ));
        }
    }
    let known = |name: &str, owner: String| -> Result<()> {
        if names.contains(name) {
            Ok(())
        } else {
            Err(Error::invalid(owner, format!("unknown material '{name}'")))
        }
    };
    let room = Cuboid::new("room", f.room.min, f.room.max, &f.room.material);
    check_corners(&room, "room")?;
    known(&f.room.material, "room".into())?;
    for m in f.room.face_materials.values() {
        known(m, "room face".into())?;
    }
    let mut rack_names = HashSet::new();
    for r in &f.racks {
        let entity = format!("rack '{}'", r.name);
        if !rack_names.insert(r.name.as_str()) {
            return Err(Error::invalid(entity, "duplicate name"));
        }
        check_corners(r, &entity)?;
        known(&r.material, entity.clone())?;
        if !room.contains_box(r) {
            return Err(Error::invalid(entity, "not contained in room"));
        }
    }
    for (name, n) in &f.nodes {
        let entity = format!("node '{name}'");
        if ![n.position.x, n.position.y, n.position.z].iter().all(|v| v.is_finite()) {
            return Err(Error::invalid(entity, "position must be finite"));
        }
        if (n.boresight.norm() - 1.0).abs() > 1e-9 {
            return Err(Error::invalid(entity, "boresight must have unit norm"));
        }
        n.pattern.validate(name)?;
        if !room.contains_point(n.position) {
            return Err(Error::invalid(entity, "position outside room"));
        }
        if let Some(r) = f.racks.iter().find(|r| r.interior_contains(n.position)) {
            return Err(Error::invalid(entity, format!("position inside rack '{}'", r.name)));
        }
        match n.role {
            Role::Tx => {
                if !n.tx_power_dbm.is_some_and(f64::is_finite) {
                    return Err(Error::invalid(entity, "transmitter requires finite tx_power_dbm"));
                }
            }
            Role::Rx => {
                if let Some(link) = &n.link {
                    if f.nodes.get(link).map(|t| t.role) != Some(Role::Tx) {
                        return Err(Error::invalid(entity, format!("link '{link}' is not a transmitter")));
                    }
                }
            }
        }
    }
    Ok(())
}

fn check_corners(b: &Cuboid, entity: &str) -> Result<()> {
    for i in 0..3 {
        let (lo, hi) = (b.min.axis(i), b.max.axis(i));
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return Err(Error::invalid(entity, "min corner must be < max corner component-wise"));
        }
    }
    Ok(())
}

fn derive_surfaces(f: &SceneFile) -> Vec<Surface> {
    let loss = |name: &str| {
        f.materials
            .iter()
            .find(|m| m.name == name)
            .map(|m| m.reflection_loss_db)
            .expect("validated material")
    };
    let mut out = Vec::with_capacity(6 + 6 * f.racks.len());
    for face in RoomFace::ALL {
        let (axis, high) = face.axis_and_side();
        let material = f.room.face_materials.get(&face).unwrap_or(&f.room.material);
        out.push(face_of(
            out.len(),
            &f.room.min,
            &f.room.max,
            axis,
            high,
            // room faces reflect toward the interior
            if high { -1.0 } else { 1.0 },
            loss(material),
            SurfaceOwner::Room(face),
        ));
    }
    for (i, r) in f.racks.iter().enumerate() {
        for axis in 0..3 {
            for high in [false, true] {
                out.push(face_of(
                    out.len(),
                    &r.min,
                    &r.max,
                    axis,
                    high,
                    if high { 1.0 } else { -1.0 },
                    loss(&r.material),
                    SurfaceOwner::Obstacle(i),
                ));
            }
        }
    }
    out
}

#[allow(clippy::too_many_arguments)]
fn face_of(
    id: usize,
    min: &Vec3,
    max: &Vec3,
    axis: usize,
    high: bool,
    normal_sign: f64,
    reflection_loss_db: f64,
    owner: SurfaceOwner,
) -> Surface {
    let others = match axis {
        0 => [1, 2],
        1 => [0, 2],
        _ => [0, 1],
    };
    Surface {
        id,
        axis,
        coord: if high { max.axis(axis) } else { min.axis(axis) },
        lo: [min.axis(others[0]), min.axis(others[1])],
        hi: [max.axis(others[0]), max.axis(others[1])],
        normal_sign,
        reflection_loss_db,
        owner,
    }
}
