use proptest::prelude::*;

use thzdt::raytrace::{los_blocked, trace, trace_paths, RayPath, TraceConfig};
use thzdt::scene::{box_scene, Cuboid, Node, Role, Scene, Surface};
use thzdt::units::{fspl_db, meters_to_ns, wrap_180, CARRIER_HZ};
use thzdt::Vec3;

const ROOM: (f64, f64, f64) = (10.0, 8.0, 3.0);

fn scene_with(racks: &[(f64, f64, f64, f64, f64)]) -> Scene {
    let racks = racks
        .iter()
        .enumerate()
        .map(|(i, &(x0, y0, w, d, h))| {
            Cuboid::new(&format!("r{i}"), Vec3::new(x0, y0, 0.0), Vec3::new(x0 + w, y0 + d, h), "metal")
        })
        .collect();
    box_scene(Vec3::new(0.0, 0.0, 0.0), Vec3::new(ROOM.0, ROOM.1, ROOM.2), racks).unwrap()
}

/// Up to two racks, one in each half of the room so they never overlap.
fn racks() -> impl Strategy<Value = Vec<(f64, f64, f64, f64, f64)>> {
    let left = (0.5..3.0f64, 0.5..5.0f64, 0.5..1.5f64, 0.5..2.5f64, 1.0..2.5f64);
    let right = (5.5..8.0f64, 0.5..5.0f64, 0.5..1.5f64, 0.5..2.5f64, 1.0..2.5f64);
    (prop::option::of(left), prop::option::of(right)).prop_map(|(a, b)| a.into_iter().chain(b).collect())
}

fn point() -> impl Strategy<Value = Vec3> {
    (0.2..ROOM.0 - 0.2, 0.2..ROOM.1 - 0.2, 0.2..ROOM.2 - 0.2).prop_map(|(x, y, z)| Vec3::new(x, y, z))
}

fn free(scene: &Scene, p: Vec3) -> bool {
    scene.obstacles().iter().all(|o| !o.contains_point(p))
}

fn iso(role: Role, p: Vec3) -> Node {
    Node::isotropic(role, p)
}

/// Reflects `d` off a plane perpendicular to `axis`.
fn reflect(d: Vec3, axis: usize) -> Vec3 {
    d.with_axis(axis, -d.axis(axis))
}

/// Launches a ray from the Tx along the reported departure direction and
/// bounces it off the reported surfaces in order. Returns the unfolded length
/// to the point of closest approach to the Rx and the miss distance.
fn forward_resimulate(scene: &Scene, path: &RayPath) -> (f64, f64) {
    let mut pos = path.vertices[0];
    let mut dir = Vec3::from_az_el_deg(path.departure_az_deg, path.departure_el_deg);
    let mut length = 0.0;
    for &id in &path.surfaces {
        let s: &Surface = &scene.surfaces()[id];
        let t = (s.coord - pos.axis(s.axis)) / dir.axis(s.axis);
        pos = pos + dir * t;
        length += t;
        dir = reflect(dir, s.axis);
    }
    let rx = *path.vertices.last().unwrap();
    let t = (rx - pos).dot(dir);
    let closest = pos + dir * t;
    (length + t, closest.distance(rx))
}

/// Exhaustive oracle for direct plus single-bounce paths: for every face,
/// mirror the Tx across the face plane, intersect the image-Rx segment with the
/// face rectangle and keep the bounce if both legs are clear.
fn brute_force_first_order(scene: &Scene, a: Vec3, b: Vec3) -> Vec<(u8, f64, f64)> {
    let mut out = Vec::new();
    if !los_blocked(scene, a, b) {
        let d = a.distance(b);
        out.push((0, meters_to_ns(d), -fspl_db(d, CARRIER_HZ)));
    }
    for s in scene.surfaces() {
        let (ka, kb) = (a.axis(s.axis) - s.coord, b.axis(s.axis) - s.coord);
        if ka * s.normal_sign <= 0.0 || kb * s.normal_sign <= 0.0 {
            continue;
        }
        let image = a.with_axis(s.axis, s.coord - ka);
        let t = (s.coord - image.axis(s.axis)) / (b.axis(s.axis) - image.axis(s.axis));
        let p = image + (b - image) * t;
        let [u, v] = s.other_axes();
        let on_face = (s.lo[0]..=s.hi[0]).contains(&p.axis(u)) && (s.lo[1]..=s.hi[1]).contains(&p.axis(v));
        if on_face && !los_blocked(scene, a, p) && !los_blocked(scene, p, b) {
            let len = image.distance(b);
            out.push((1, meters_to_ns(len), -fspl_db(len, CARRIER_HZ) - s.reflection_loss_db));
        }
    }
    out.sort_by(|x, y| x.1.total_cmp(&y.1).then(x.2.total_cmp(&y.2)));
    out
}

fn key(p: &RayPath) -> (u8, f64, f64) {
    (p.mpc.bounce_order, p.mpc.delay_ns, p.mpc.power_db)
}

fn sorted_keys(paths: &[RayPath]) -> Vec<(u8, f64, f64)> {
    let mut k: Vec<_> = paths.iter().map(key).collect();
    k.sort_by(|x, y| x.1.total_cmp(&y.1).then(x.2.total_cmp(&y.2)).then(x.0.cmp(&y.0)));
    k
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn reciprocity(racks in racks(), a in point(), b in point()) {
        let scene = scene_with(&racks);
        prop_assume!(free(&scene, a) && free(&scene, b) && a.distance(b) > 0.1);
        let cfg = TraceConfig::with_order(2);
        let fwd = trace_paths(&scene, &iso(Role::Tx, a), &iso(Role::Rx, b), &cfg);
        let rev = trace_paths(&scene, &iso(Role::Tx, b), &iso(Role::Rx, a), &cfg);
        let (kf, kr) = (sorted_keys(&fwd), sorted_keys(&rev));
        prop_assert_eq!(kf.len(), kr.len());
        for (x, y) in kf.iter().zip(&kr) {
            prop_assert_eq!(x.0, y.0);
            prop_assert!((x.1 - y.1).abs() < 1e-9 && (x.2 - y.2).abs() < 1e-9, "{:?} vs {:?}", x, y);
        }
        for p in &fwd {
            let mut back = p.surfaces.clone();
            back.reverse();
            let q = rev.iter().find(|q| q.surfaces == back).expect("reverse path with mirrored bounce sequence");
            prop_assert!(wrap_180(p.mpc.az_deg - q.departure_az_deg).abs() < 1e-6);
            prop_assert!((p.mpc.el_deg - q.departure_el_deg).abs() < 1e-6);
            prop_assert!(wrap_180(p.departure_az_deg - q.mpc.az_deg).abs() < 1e-6);
            prop_assert!((p.departure_el_deg - q.mpc.el_deg).abs() < 1e-6);
        }
    }

    #[test]
    fn reflected_paths_resimulate_forward(racks in racks(), a in point(), b in point()) {
        let scene = scene_with(&racks);
        prop_assume!(free(&scene, a) && free(&scene, b) && a.distance(b) > 0.1);
        for p in trace_paths(&scene, &iso(Role::Tx, a), &iso(Role::Rx, b), &TraceConfig::with_order(2)) {
            let (length, miss) = forward_resimulate(&scene, &p);
            prop_assert!(miss < 1e-9, "ray misses the Rx by {miss} m");
            prop_assert!((length - p.length_m).abs() < 1e-9, "{length} vs {}", p.length_m);
            prop_assert!((meters_to_ns(length) - p.mpc.delay_ns).abs() < 1e-9);
        }
    }

    #[test]
    fn first_order_matches_exhaustive_images(racks in racks(), a in point(), b in point()) {
        let scene = scene_with(&racks);
        prop_assume!(free(&scene, a) && free(&scene, b) && a.distance(b) > 0.1);
        let traced = sorted_keys(&trace_paths(&scene, &iso(Role::Tx, a), &iso(Role::Rx, b), &TraceConfig::with_order(1)));
        let oracle = brute_force_first_order(&scene, a, b);
        prop_assert_eq!(traced.len(), oracle.len(), "{:?} vs {:?}", traced, oracle);
        for (x, y) in traced.iter().zip(&oracle) {
            prop_assert_eq!(x.0, y.0);
            prop_assert!((x.1 - y.1).abs() < 1e-9 && (x.2 - y.2).abs() < 1e-9, "{:?} vs {:?}", x, y);
        }
    }

    #[test]
    fn los_power_decreases_with_distance(x0 in 0.5..4.0f64, step in 0.01..4.0f64) {
        let scene = scene_with(&[]);
        let tx = iso(Role::Tx, Vec3::new(0.3, 4.0, 1.5));
        let los = |x: f64| trace(&scene, &tx, &iso(Role::Rx, Vec3::new(x, 4.0, 1.5)), 0)[0].power_db;
        prop_assert!(los(x0 + step) < los(x0));
    }
}

#[test]
fn order_two_reaches_a_shadowed_corner() {
    // a rack between the nodes blocks the direct ray but not the wall bounces
    let scene = scene_with(&[(4.0, 3.0, 1.0, 2.0, 2.5)]);
    let a = Vec3::new(2.0, 4.0, 1.5);
    let b = Vec3::new(7.0, 4.0, 1.5);
    let paths = trace(&scene, &iso(Role::Tx, a), &iso(Role::Rx, b), 2);
    assert!(paths.iter().all(|p| p.bounce_order > 0));
    assert!(paths.iter().any(|p| p.bounce_order == 1));
    assert!(paths.iter().any(|p| p.bounce_order == 2));
}
