use proptest::prelude::*;

use thzdt::calib::{apply_calibration, match_cost, match_paths, MatchWeights, OffsetPolicy};
use thzdt::raytrace::Mpc;
use thzdt::scene::{box_scene, canonical_scene, load_scene, save_scene, Cuboid};
use thzdt::Vec3;

fn mpc() -> impl Strategy<Value = Mpc> {
    (-120.0..-60.0f64, 5.0..6.0f64, 0.0..60.0f64, -20.0..20.0f64, 0u8..3).prop_map(|(p, t, a, e, o)| Mpc {
        power_db: p,
        delay_ns: t,
        az_deg: a,
        el_deg: e,
        bounce_order: o,
    })
}

fn lists() -> impl Strategy<Value = (Vec<Mpc>, Vec<Mpc>)> {
    (prop::collection::vec(mpc(), 0..7), prop::collection::vec(mpc(), 0..7))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    /// Replays the selection order: when each pair was taken, no admissible
    /// pair among the still-free paths was cheaper.
    #[test]
    fn greedy_certificate((measured, rt) in lists()) {
        let w = MatchWeights::default();
        let m = match_paths(&measured, &rt, &w);
        let mut free_m = vec![true; measured.len()];
        let mut free_r = vec![true; rt.len()];
        for p in &m.pairs {
            prop_assert!(free_m[p.measured] && free_r[p.rt]);
            for (l, a) in measured.iter().enumerate().filter(|(l, _)| free_m[*l]) {
                for (k, b) in rt.iter().enumerate().filter(|(k, _)| free_r[*k]) {
                    let c = match_cost(a, b, &w);
                    prop_assert!(c > w.gate || c >= p.cost, "({l},{k}) cost {c} beats selected {}", p.cost);
                }
            }
            free_m[p.measured] = false;
            free_r[p.rt] = false;
        }
        // nothing admissible is left over
        for (l, a) in measured.iter().enumerate().filter(|(l, _)| free_m[*l]) {
            for b in rt.iter().enumerate().filter(|(k, _)| free_r[*k]).map(|(_, b)| b) {
                prop_assert!(match_cost(a, b, &w) > w.gate, "measured {l} left unpaired");
            }
        }
        prop_assert_eq!(m.pairs.len() + m.unmatched_measured.len(), measured.len());
        prop_assert_eq!(m.pairs.len() + m.unmatched_rt.len(), rt.len());
    }

    #[test]
    fn open_gate_pairs_everything(pairs in prop::collection::vec((mpc(), mpc()), 1..7)) {
        let (measured, rt): (Vec<Mpc>, Vec<Mpc>) = pairs.into_iter().unzip();
        let w = MatchWeights { gate: f64::INFINITY, ..MatchWeights::default() };
        let m = match_paths(&measured, &rt, &w);
        prop_assert_eq!(m.pairs.len(), measured.len());
        prop_assert!(m.unmatched_measured.is_empty() && m.unmatched_rt.is_empty());
    }

    #[test]
    fn calibration_moves_only_power((measured, rt) in lists(), fallback in prop::bool::ANY) {
        let m = match_paths(&measured, &rt, &MatchWeights::default());
        let policy = if fallback { OffsetPolicy::PerOrderMean } else { OffsetPolicy::MatchedOnly };
        let out = apply_calibration(&rt, &m, policy).unwrap();
        prop_assert_eq!(out.len(), rt.len());
        for (a, b) in out.iter().zip(&rt) {
            prop_assert_eq!((a.delay_ns, a.az_deg, a.el_deg, a.bounce_order), (b.delay_ns, b.az_deg, b.el_deg, b.bounce_order));
        }
    }

    #[test]
    fn scene_file_round_trips(x in 4.0..20.0f64, y in 4.0..20.0f64, h in 2.5..5.0f64, rack in prop::option::of((0.5..2.0f64, 0.5..2.0f64, 1.0..2.4f64))) {
        let racks = rack
            .map(|(w, d, rh)| vec![Cuboid::new("r", Vec3::new(1.0, 1.0, 0.0), Vec3::new(1.0 + w, 1.0 + d, rh), "metal")])
            .unwrap_or_default();
        let scene = box_scene(Vec3::new(0.0, 0.0, 0.0), Vec3::new(x, y, h), racks).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("scene.json");
        save_scene(&scene, &path).unwrap();
        prop_assert_eq!(load_scene(&path).unwrap(), scene);
    }
}

#[test]
fn canonical_scene_round_trips() {
    let scene = canonical_scene();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("scene.json");
    save_scene(&scene, &path).unwrap();
    assert_eq!(load_scene(&path).unwrap(), scene);
    assert_eq!(std::fs::read_to_string(&path).unwrap(), scene.to_json());
}
