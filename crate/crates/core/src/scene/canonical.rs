use std::collections::BTreeMap;

use super::{
    default_materials, AntennaPattern, Condition, Cuboid, Node, Role, Room, RoomFace, Scene,
    SceneFile,
};
use crate::geometry::Vec3;

const HALL: Vec3 = Vec3::new(12.0, 8.0, 3.2);
const RACK_HEIGHT: f64 = 2.0;
const RACK_LEVEL_Z: f64 = 2.4;
const AP_Z: f64 = 2.7;
const NLOS_RX_Z: f64 = 1.7;
const TX_POWER_DBM: f64 = 30.0;

/// The reference data hall: two rack rows split into three cabinets each,
/// a rack-side transmitter at the west end of the cold aisle (`tx1`), a
/// front-of-rack transmitter at the east end (`tx2`), a ceiling access point
/// (`tx3`) and the 29 measured receiver locations.
///
/// Hall dimensions and rack pitch are representative values, recorded in the
/// scene description; only the node heights follow the campaign settings.
pub fn canonical_scene() -> Scene {
    let mut face_materials = BTreeMap::new();
    face_materials.insert(RoomFace::YMin, "metal".to_string());
    face_materials.insert(RoomFace::YMax, "glass".to_string());
    face_materials.insert(RoomFace::Ceiling, "metal".to_string());

    let mut racks = Vec::new();
    for (row, (y0, y1)) in [("a", (2.0, 3.0)), ("b", (5.0, 6.0))] {
        for (i, (x0, x1)) in [(2.0, 4.8), (5.0, 7.0), (7.2, 10.0)].into_iter().enumerate() {
            racks.push(Cuboid::new(
                &format!("row{row}{}", i + 1),
                Vec3::new(x0, y0, 0.0),
                Vec3::new(x1, y1, RACK_HEIGHT),
                "metal",
            ));
        }
    }

    let horn = AntennaPattern::thz_horn();
    let mut nodes = BTreeMap::new();
    let tx = |pos: Vec3, bore: Vec3| {
        let mut n = Node::new(Role::Tx, pos, bore, horn);
        n.tx_power_dbm = Some(TX_POWER_DBM);
        n
    };
    let tx1 = tx(Vec3::new(1.2, 3.4, RACK_LEVEL_Z), Vec3::new(1.0, 0.0, 0.0));
    let tx2 = tx(Vec3::new(11.5, 4.0, RACK_LEVEL_Z), Vec3::new(-1.0, 0.0, 0.0));
    let tx3 = tx(Vec3::new(6.0, 4.0, AP_Z), Vec3::new(0.0, 0.0, -1.0));

    let mut rx_index = 0;
    let mut add_rx = |nodes: &mut BTreeMap<String, Node>, link: &str, tx: &Node, pos: Vec3, cond| {
        rx_index += 1;
        let mut n = Node::new(Role::Rx, pos, tx.position - pos, horn);
        n.link = Some(link.to_string());
        n.condition = Some(cond);
        nodes.insert(format!("rx{rx_index}"), n);
    };

    // rack-to-rack along the cold aisle, LoS
    let aisle: Vec<Vec3> = (0..9)
        .map(|i| {
            let x = 3.0 + i as f64;
            let y = if i % 2 == 0 { 3.4 } else { 4.6 };
            Vec3::new(x, y, RACK_LEVEL_Z)
        })
        .collect();
    for p in &aisle {
        add_rx(&mut nodes, "tx1", &tx1, *p, Condition::Los);
    }
    // behind row b, NLoS
    for x in [4.0, 6.1, 8.5] {
        add_rx(&mut nodes, "tx1", &tx1, Vec3::new(x, 6.3, NLOS_RX_Z), Condition::Nlos);
    }
    // reverse direction, same locations as rx4..rx8
    for p in &aisle[3..8] {
        add_rx(&mut nodes, "tx2", &tx2, *p, Condition::Los);
    }
    // access point to rack level
    let ap_los = [
        (3.0, 4.0),
        (4.5, 3.4),
        (7.0, 4.6),
        (7.5, 3.4),
        (9.0, 4.0),
        (1.0, 1.0),
        (6.0, 1.0),
        (11.0, 7.0),
        (6.0, 7.0),
    ];
    for (x, y) in ap_los {
        add_rx(&mut nodes, "tx3", &tx3, Vec3::new(x, y, RACK_LEVEL_Z), Condition::Los);
    }
    for (x, y) in [(3.5, 6.3), (8.2, 6.3), (6.1, 1.7)] {
        add_rx(&mut nodes, "tx3", &tx3, Vec3::new(x, y, NLOS_RX_Z), Condition::Nlos);
    }
    nodes.insert("tx1".into(), tx1);
    nodes.insert("tx2".into(), tx2);
    nodes.insert("tx3".into(), tx3);

    let file = SceneFile {
        description: Some(format!(
            "canonical data hall {}x{}x{} m; two rack rows (y 2-3 m and 5-6 m) of three \
             metal cabinets, {} m tall; rack-level nodes at {} m, ceiling AP at {} m, \
             NLoS receivers at {} m",
            HALL.x, HALL.y, HALL.z, RACK_HEIGHT, RACK_LEVEL_Z, AP_Z, NLOS_RX_Z
        )),
        room: Room {
            min: Vec3::new(0.0, 0.0, 0.0),
            max: HALL,
            material: "concrete".into(),
            face_materials,
        },
        materials: default_materials(),
        racks,
        nodes,
    };
    Scene::new(file).expect("canonical scene is valid")
}
