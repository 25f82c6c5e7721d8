//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line each and
//! fails the target if any criterion fails.

use std::path::Path;
use std::sync::OnceLock;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use thzdt::calib::{match_cost, match_paths, MatchWeights, Matching};
use thzdt::chanest::{extract_mpcs, fit_abg, PathLossSample, DEFAULT_MIN_SEPARATION_BINS, DEFAULT_REL_THRESHOLD_DB};
use thzdt::inf::{self, grad_check, mlp, Init, Mlp, Sample};
use thzdt::raytrace::{los_blocked, Mpc, UNRESOLVED_ORDER};
use thzdt::scene::{box_scene, canonical_scene, Node, Role, Scene};
use thzdt::sounder::{delay_resolution, distance_accuracy, synthesize_cfr, FreqSweep, ScanGrid, SoundingSetup};
use thzdt::sysperf::{
    build_radio_map, coverage_probability, free_space_region, sinr_db, sinr_from_powers_db, Deployment, GridSpec,
    LinkBudget, MapSource, DEFAULT_PLANE_Z,
};
use thzdt::twin::{self, AiTwin, Campaign, DeploymentKind, TwinConfig};
use thzdt::units::{fspl_db, wrap_180, CARRIER_HZ, PROPAGATION_SPEED};
use thzdt::Vec3;

type Check = (bool, String);

struct Criterion {
    id: u32,
    name: &'static str,
    limit: Duration,
    run: fn() -> Check,
}

fn main() {
    let criteria = [
        Criterion { id: 1, name: "delay resolution", limit: Duration::from_secs(1), run: delay_resolution_check },
        Criterion { id: 2, name: "plant and recover", limit: Duration::from_secs(30), run: plant_and_recover },
        Criterion { id: 3, name: "ABG recovery", limit: Duration::from_secs(10), run: abg_recovery },
        Criterion { id: 4, name: "calibration", limit: Duration::from_secs(10), run: calibration },
        Criterion { id: 5, name: "INF correctness", limit: Duration::from_secs(300), run: inf_correctness },
        Criterion { id: 6, name: "NLoS fallback", limit: Duration::from_secs(60), run: nlos_fallback },
        Criterion { id: 7, name: "SINR and coverage math", limit: Duration::from_secs(60), run: sinr_coverage_math },
        Criterion { id: 8, name: "AP vs rack coverage", limit: Duration::from_secs(120), run: ap_vs_rack },
        Criterion { id: 9, name: "determinism", limit: Duration::from_secs(600), run: determinism },
    ];
    let filter: Vec<u32> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut failed = 0;
    for c in &criteria {
        if !filter.is_empty() && !filter.contains(&c.id) {
            continue;
        }
        let start = Instant::now();
        let (ok, detail) = (c.run)();
        let elapsed = start.elapsed();
        let in_time = elapsed <= c.limit;
        let pass = ok && in_time;
        if !pass {
            failed += 1;
        }
        println!(
            "criterion {} [{}] {}: {} ({:.2} s, limit {} s{})",
            c.id,
            if pass { "PASS" } else { "FAIL" },
            c.name,
            detail,
            elapsed.as_secs_f64(),
            c.limit.as_secs(),
            if in_time { "" } else { ", over time" }
        );
    }
    if failed > 0 {
        println!("{failed} criterion(s) failed");
        std::process::exit(1);
    }
}

fn delay_resolution_check() -> Check {
    let f = FreqSweep::default().values();
    let dt = delay_resolution(&f).unwrap();
    let dx = distance_accuracy(&f).unwrap();
    (
        dt == 0.05 && dx == 0.015,
        format!("delay resolution {dt} ns, distance accuracy {} cm", dx * 100.0),
    )
}

/// Random well-separated path sets sounded with noise and extracted.
fn plant_and_recover() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(20);
    let grid = ScanGrid::default();
    let res_ns = 0.05;
    let (mut worst_tau, mut worst_ang, mut worst_p) = (0.0f64, 0.0f64, 0.0f64);
    let mut failures = Vec::new();
    let mut planted_total = 0;
    for scene in 0..20 {
        let n = rng.random_range(1..=5);
        let mut planted: Vec<Mpc> = Vec::new();
        while planted.len() < n {
            let p = Mpc {
                power_db: -60.0 - rng.random_range(0.0..15.0),
                delay_ns: rng.random_range(5.0..60.0),
                az_deg: rng.random_range(0.0..360.0),
                el_deg: rng.random_range(-14.0..14.0),
                bounce_order: UNRESOLVED_ORDER,
            };
            let separated = planted.iter().all(|q| {
                let steps = (wrap_180(p.az_deg - q.az_deg).abs() / grid.az_step)
                    .max((p.el_deg - q.el_deg).abs() / grid.el_step);
                (p.delay_ns - q.delay_ns).abs() >= 2.0 * res_ns && steps >= 2.0
            });
            if separated {
                planted.push(p);
            }
        }
        planted_total += n;
        let weakest = planted.iter().map(|p| p.power_db).fold(f64::INFINITY, f64::min);
        let mut setup = SoundingSetup::campaign("tx", &format!("plant{scene}"), 5);
        // per-sample SNR of the weakest path at boresight: 30 dB
        setup.noise_db = Some(weakest + setup.rx_pattern.boresight_gain_dbi() - 30.0);
        let s = synthesize_cfr(&planted, &setup).unwrap();
        let found = extract_mpcs(&s, DEFAULT_REL_THRESHOLD_DB, DEFAULT_MIN_SEPARATION_BINS).unwrap();
        let mut used = vec![false; found.len()];
        for p in &planted {
            let best = found
                .iter()
                .enumerate()
                .filter(|(i, _)| !used[*i])
                .min_by(|a, b| {
                    let d = |m: &Mpc| (m.delay_ns - p.delay_ns).abs();
                    d(a.1).total_cmp(&d(b.1))
                });
            match best {
                Some((i, m)) => {
                    used[i] = true;
                    let dt = (m.delay_ns - p.delay_ns).abs();
                    let da = wrap_180(m.az_deg - p.az_deg).abs();
                    let de = (m.el_deg - p.el_deg).abs();
                    let dp = (m.power_db - p.power_db).abs();
                    worst_tau = worst_tau.max(dt);
                    worst_ang = worst_ang.max(da / grid.az_step).max(de / grid.el_step);
                    worst_p = worst_p.max(dp);
                    if dt > 0.05 || da > grid.az_step || de > grid.el_step || dp > 0.5 {
                        failures.push(format!("scene {scene}: path at {:.3} ns off by {dt:.3} ns, {da:.2}/{de:.2} deg, {dp:.2} dB", p.delay_ns));
                    }
                }
                None => failures.push(format!("scene {scene}: path at {:.3} ns missing", p.delay_ns)),
            }
        }
        let spurious = used.iter().filter(|u| !**u).count();
        if spurious > 0 {
            failures.push(format!("scene {scene}: {spurious} spurious detections"));
        }
    }
    (
        failures.is_empty(),
        format!(
            "{planted_total} paths in 20 scenes; worst |dtau| {worst_tau:.4} ns, angle {worst_ang:.2} steps, |dP| {worst_p:.3} dB{}",
            if failures.is_empty() { String::new() } else { format!("; {}", failures.join("; ")) }
        ),
    )
}

fn log_spaced(n: usize, lo: f64, hi: f64) -> Vec<f64> {
    (0..n)
        .map(|i| lo * (hi / lo).powf(i as f64 / (n - 1) as f64))
        .collect()
}

fn abg_recovery() -> Check {
    let d = log_spaced(50, 1.0, 50.0);
    let clean: Vec<PathLossSample> = d
        .iter()
        .map(|&d| PathLossSample { d_m: d, pl_db: fspl_db(d, CARRIER_HZ), los: true })
        .collect();
    let m = fit_abg(&clean).unwrap();
    let beta_friis = 20.0 * (4.0 * std::f64::consts::PI * CARRIER_HZ / PROPAGATION_SPEED).log10();
    let exact = (m.alpha - 20.0).abs() <= 1e-6 && (m.beta - 81.98).abs() <= 0.01;
    let noise = Normal::new(0.0, 2.0).unwrap();
    let mut within = 0;
    for seed in 0..100 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let noisy: Vec<PathLossSample> = clean
            .iter()
            .map(|s| PathLossSample { pl_db: s.pl_db + noise.sample(&mut rng), ..*s })
            .collect();
        if (fit_abg(&noisy).unwrap().alpha - 20.0).abs() <= 1.5 {
            within += 1;
        }
    }
    (
        exact && within >= 95,
        format!(
            "alpha {:.9}, beta {:.6} (Friis {beta_friis:.6}); noisy alpha within 1.5 in {within}/100 seeds",
            m.alpha, m.beta
        ),
    )
}

/// Maximum-cardinality, then minimum-total-cost assignment under the gate, by enumeration.
fn brute_force(measured: &[Mpc], rt: &[Mpc], w: &MatchWeights) -> (usize, f64) {
    fn go(k: usize, measured: &[Mpc], rt: &[Mpc], w: &MatchWeights, taken: &mut Vec<bool>, n: usize, cost: f64, best: &mut (usize, f64)) {
        if k == measured.len() {
            if n > best.0 || (n == best.0 && cost < best.1) {
                *best = (n, cost);
            }
            return;
        }
        go(k + 1, measured, rt, w, taken, n, cost, best);
        for l in 0..rt.len() {
            let c = match_cost(&measured[k], &rt[l], w);
            if !taken[l] && c <= w.gate {
                taken[l] = true;
                go(k + 1, measured, rt, w, taken, n + 1, cost + c, best);
                taken[l] = false;
            }
        }
    }
    let mut best = (0, 0.0);
    go(0, measured, rt, w, &mut vec![false; rt.len()], 0, 0.0, &mut best);
    best
}

fn total_cost(m: &Matching) -> f64 {
    m.pairs.iter().map(|p| p.cost).sum()
}

/// A calibration-like instance: RT paths on a well-separated delay/angle
/// layout, measured copies jittered by up to 0.3 of a resolution unit per
/// dimension, plus unmatched extras on either side.
fn calibration_instance(rng: &mut ChaCha8Rng, w: &MatchWeights) -> (Vec<Mpc>, Vec<Mpc>) {
    let (s_tau, s_az, s_el) = (1.0 / w.w_tau.sqrt(), 1.0 / w.w_theta.sqrt(), 1.0 / w.w_phi.sqrt());
    let n_total = rng.random_range(1..=6);
    let mut anchors: Vec<Mpc> = Vec::new();
    while anchors.len() < n_total {
        let p = Mpc {
            power_db: rng.random_range(-110.0..-60.0),
            delay_ns: rng.random_range(5.0..30.0),
            az_deg: rng.random_range(0.0..360.0),
            el_deg: rng.random_range(-20.0..20.0),
            bounce_order: rng.random_range(0..3),
        };
        // anchors sit at least twice the gate radius apart in normalized units
        let far = anchors.iter().all(|q| {
            let d2 = ((p.delay_ns - q.delay_ns) / s_tau).powi(2)
                + (wrap_180(p.az_deg - q.az_deg) / s_az).powi(2)
                + ((p.el_deg - q.el_deg) / s_el).powi(2);
            d2 >= 4.0 * 12.0
        });
        if far {
            anchors.push(p);
        }
    }
    let mut measured = Vec::new();
    let mut rt = Vec::new();
    for a in anchors {
        match rng.random_range(0..6) {
            0 => measured.push(a),
            1 => rt.push(a),
            _ => {
                rt.push(a);
                measured.push(Mpc {
                    power_db: a.power_db + rng.random_range(-6.0..6.0),
                    delay_ns: a.delay_ns + rng.random_range(-0.3..0.3) * s_tau,
                    az_deg: a.az_deg + rng.random_range(-0.3..0.3) * s_az,
                    el_deg: a.el_deg + rng.random_range(-0.3..0.3) * s_el,
                    bounce_order: UNRESOLVED_ORDER,
                });
            }
        }
    }
    (measured, rt)
}

fn calibration() -> Check {
    let w = MatchWeights::default();
    // uniform -5 dB bias on a traced path list
    let truth = vec![
        Mpc { power_db: -70.0, delay_ns: 10.0, az_deg: 180.0, el_deg: 0.0, bounce_order: 0 },
        Mpc { power_db: -82.5, delay_ns: 14.2, az_deg: 135.0, el_deg: 5.0, bounce_order: 1 },
        Mpc { power_db: -91.0, delay_ns: 21.7, az_deg: 40.0, el_deg: -10.0, bounce_order: 2 },
    ];
    let biased: Vec<Mpc> = truth.iter().map(|m| Mpc { power_db: m.power_db - 5.0, ..*m }).collect();
    let list_offset = match_paths(&truth, &biased, &w).mean_offset_db().unwrap();

    // the same through the sounder: paths on scan directions and delay bins, noiseless
    let on_grid = vec![
        Mpc { power_db: -70.0, delay_ns: 10.0, az_deg: 180.0, el_deg: 0.0, bounce_order: 0 },
        Mpc { power_db: -80.0, delay_ns: 14.0, az_deg: 135.0, el_deg: 10.0, bounce_order: 1 },
        Mpc { power_db: -86.0, delay_ns: 22.0, az_deg: 40.0, el_deg: -10.0, bounce_order: 2 },
    ];
    let mut setup = SoundingSetup::campaign("tx", "rx", 1);
    setup.noise_db = None;
    let measured = extract_mpcs(&synthesize_cfr(&on_grid, &setup).unwrap(), DEFAULT_REL_THRESHOLD_DB, DEFAULT_MIN_SEPARATION_BINS).unwrap();
    let biased: Vec<Mpc> = on_grid.iter().map(|m| Mpc { power_db: m.power_db - 5.0, ..*m }).collect();
    let sm = match_paths(&measured, &biased, &w);
    let sounded_offset = sm.mean_offset_db().unwrap_or(f64::NAN);
    let bias_ok = (list_offset - 5.0).abs() <= 0.01 && (sounded_offset - 5.0).abs() <= 0.01 && sm.pairs.len() == 3;

    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut mismatches = 0;
    for _ in 0..1000 {
        let (m, r) = calibration_instance(&mut rng, &w);
        let g = match_paths(&m, &r, &w);
        let (n, c) = brute_force(&m, &r, &w);
        if g.pairs.len() != n || (total_cost(&g) - c).abs() > 1e-9 * (1.0 + c) {
            mismatches += 1;
        }
    }
    // informational: unstructured instances where greedy is not guaranteed optimal
    let mut adversarial = 0;
    for _ in 0..1000 {
        let gen = |rng: &mut ChaCha8Rng, n: usize| -> Vec<Mpc> {
            (0..n)
                .map(|_| Mpc {
                    power_db: -80.0,
                    delay_ns: 10.0 + rng.random_range(0.0..0.2),
                    az_deg: rng.random_range(0.0..15.0),
                    el_deg: rng.random_range(0.0..20.0),
                    bounce_order: 0,
                })
                .collect()
        };
        let (a, b) = (rng.random_range(1..=6), rng.random_range(1..=6));
        let (m, r) = (gen(&mut rng, a), gen(&mut rng, b));
        let g = match_paths(&m, &r, &w);
        let (n, c) = brute_force(&m, &r, &w);
        if g.pairs.len() != n || (total_cost(&g) - c).abs() > 1e-9 * (1.0 + c) {
            adversarial += 1;
        }
    }
    (
        bias_ok && mismatches == 0,
        format!(
            "mean offset {list_offset:.6} dB (list), {sounded_offset:.6} dB (sounded, {} pairs); greedy vs optimal mismatches {mismatches}/1000 \
             (dense unstructured instances, not asserted: {adversarial}/1000)",
            sm.pairs.len()
        ),
    )
}

struct Canonical {
    scene: Scene,
    cfg: TwinConfig,
    campaign: Campaign,
    ai: AiTwin,
}

fn canonical() -> &'static Canonical {
    static C: OnceLock<Canonical> = OnceLock::new();
    C.get_or_init(|| {
        let scene = canonical_scene();
        let cfg = TwinConfig::seeded(7);
        let campaign = twin::run_campaign(&scene, &cfg.campaign).unwrap();
        let ai = twin::build_ai_twin(&scene, &campaign, &cfg).unwrap();
        Canonical { scene, cfg, campaign, ai }
    })
}

fn dataset_loss(model_net: &Mlp, spec: &inf::ModelSpec, norm: &inf::NormStats, samples: &[Sample]) -> f64 {
    let (x, y) = inf::design_matrix(spec, norm, samples);
    let trace = model_net.forward(&x, samples.len());
    mlp::squared_error(trace.output(), &y, samples.len()).0
}

fn inf_correctness() -> Check {
    let c = canonical();
    let train = c.ai.train_samples();
    let val = c.ai.val_samples();

    // gradient check on a small network over the canonical encoding
    let mut worst = 0.0f64;
    for seed in 0..10 {
        let mut spec = c.ai.model.spec.clone();
        spec.hidden = vec![16, 16];
        let net = Mlp::new(&spec.widths(), Init::Seeded, seed).unwrap();
        let model = inf::InfModel { spec, net, norm: c.ai.model.norm, seed };
        let s = &train[seed as usize * 7 % train.len()];
        worst = worst.max(grad_check(&model, s, 1e-4).unwrap());
    }

    let m = &c.ai.model;
    let initial_net = Mlp::new(&m.spec.widths(), c.cfg.train.init, c.cfg.train.seed).unwrap();
    let initial = dataset_loss(&initial_net, &m.spec, &m.norm, &train);
    let trained = dataset_loss(&m.net, &m.spec, &m.norm, &train);

    let mut ablated_spec = m.spec.clone();
    ablated_spec.encoding.ablate_rt = true;
    let (ablated, _) = inf::train(&train, &ablated_spec, &c.cfg.train).unwrap();
    let rmse = inf::power_rmse(m, &val).unwrap();
    let rmse_ablated = inf::power_rmse(&ablated, &val).unwrap();

    (
        worst < 1e-4 && trained <= 0.1 * initial && rmse_ablated > rmse,
        format!(
            "max grad rel error {worst:.2e} over 10 seeds; loss {initial:.4} -> {trained:.6} ({:.2}%); held-out power RMSE {rmse:.3} dB with RT features, {rmse_ablated:.3} dB ablated",
            100.0 * trained / initial
        ),
    )
}

/// Free-space grid points on the receiver plane without a direct path to `tx`.
fn blocked_points(scene: &Scene, tx: Vec3, step: f64) -> Vec<Vec3> {
    let grid = GridSpec::covering(scene, step, DEFAULT_PLANE_Z).unwrap();
    let region = free_space_region(scene, &grid);
    (0..grid.len())
        .filter(|&i| region[i])
        .map(|i| grid.center_of(i))
        .filter(|&p| los_blocked(scene, tx, p))
        .collect()
}

fn nlos_fallback() -> Check {
    let c = canonical();
    let m = &c.ai.model;
    let abg = &c.campaign.abg_nlos;
    let (mut n, mut worst, mut sum) = (0usize, 0.0f64, 0.0f64);
    let mut all_finite = true;
    let mut all_fallback = true;
    let (mut outside, mut truth_outside) = (0usize, 0usize);
    for tx in ["tx1", "tx2", "tx3"] {
        let node = c.scene.node(tx).unwrap();
        for p in blocked_points(&c.scene, node.position, 0.5) {
            let a = inf::predict(m, &c.scene, node, p).unwrap();
            all_finite &= [a.p_db, a.tau_ns, a.az_deg, a.el_deg].iter().all(|v| v.is_finite());
            all_fallback &= a.fallback;
            let fit = -abg.path_loss_db(node.position.distance(p));
            let dev = (a.p_db - fit).abs();
            let t = twin::truth_targets(&c.scene, &c.cfg.campaign.truth, node, p).unwrap();
            if (t[0] - fit).abs() > 6.0 {
                truth_outside += 1;
            }
            if dev > 6.0 {
                outside += 1;
            }
            worst = worst.max(dev);
            sum += dev;
            n += 1;
        }
    }
    (
        n > 0 && all_finite && all_fallback && worst <= 6.0,
        format!(
            "{n} blocked points over 3 transmitters; deviation from the NLoS fit (alpha {:.2}, beta {:.2}): mean {:.2} dB, \
             max {worst:.2} dB, {outside} points beyond 6 dB (site truth itself beyond 6 dB at {truth_outside})",
            abg.alpha,
            abg.beta,
            sum / n.max(1) as f64
        ),
    )
}

fn sinr_coverage_math() -> Check {
    // independent linear-domain calculator on random budgets
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut worst_rel = 0.0f64;
    for _ in 0..1000 {
        let s = rng.random_range(-120.0..-30.0);
        let n_i = rng.random_range(0..5);
        let interf: Vec<f64> = (0..n_i).map(|_| rng.random_range(-140.0..-30.0)).collect();
        let noise = rng.random_range(-100.0..-40.0);
        let mw = |dbm: f64| 10f64.powf(dbm / 10.0);
        let denom: f64 = interf.iter().map(|&i| mw(i)).sum::<f64>() + mw(noise);
        let expected = 10.0 * (mw(s) / denom).log10();
        let got = sinr_from_powers_db(s, &interf, noise);
        worst_rel = worst_rel.max((got - expected).abs() / expected.abs().max(1e-12));
    }
    let math_ok = worst_rel <= 1e-9;

    // free-space coverage disk
    let scene = box_scene(Vec3::new(0.0, 0.0, 0.0), Vec3::new(20.0, 20.0, 3.0), vec![]).unwrap();
    let z = 1.5;
    let tx = Node::isotropic(Role::Tx, Vec3::new(10.0, 10.0, z));
    let lb = LinkBudget::default();
    let r_star = 6.0;
    // threshold at which the Friis range is exactly r_star
    let t_db = lb.rx_power_dbm(-fspl_db(r_star, CARRIER_HZ)) - lb.noise_dbm();
    let grid = GridSpec { origin_x: 0.0, origin_y: 0.0, cell_m: 0.1, nx: 200, ny: 200, z };
    let cond = inf::RtConditioning { max_order: 0, calibration: Default::default() };
    let map = build_radio_map(MapSource::Rt(&cond), &scene, "tx", &tx, &grid).unwrap();
    let d = Deployment::new("tx", &[], vec![map]).unwrap();
    let pc = coverage_probability(&d, &lb, t_db);
    let analytic = std::f64::consts::PI * r_star * r_star / 400.0;
    let rel = (pc - analytic).abs() / analytic;
    let _ = sinr_db(&d, &lb, 0).unwrap();

    let n_mc = 100_000;
    let mut hits = 0;
    for _ in 0..n_mc {
        let p = Vec3::new(rng.random_range(0.0..20.0), rng.random_range(0.0..20.0), z);
        let k = -fspl_db(tx.position.distance(p), CARRIER_HZ);
        if sinr_from_powers_db(lb.rx_power_dbm(k), &[], lb.noise_dbm()) >= t_db {
            hits += 1;
        }
    }
    let mc = hits as f64 / n_mc as f64;
    let sigma = (mc * (1.0 - mc) / n_mc as f64).sqrt();
    let mc_ok = (pc - mc).abs() <= 3.0 * sigma;
    (
        math_ok && rel <= 0.02 && mc_ok,
        format!(
            "max SINR rel error {worst_rel:.1e}; grid coverage {pc:.5} vs disk {analytic:.5} ({:.3}%); Monte Carlo {mc:.5}, |diff| {:.5} <= 3 sigma {:.5}",
            100.0 * rel,
            (pc - mc).abs(),
            3.0 * sigma
        ),
    )
}

/// Asserted on the AI twin, the source of the coverage analysis; the RT twin
/// is reported alongside.
fn ap_vs_rack() -> Check {
    let c = canonical();
    let grid = GridSpec::covering(&c.scene, c.cfg.grid_step_m, c.cfg.plane_z).unwrap();
    let rt = twin::rt_conditioning(&c.campaign, c.cfg.campaign.max_order);
    let coverage = |source| {
        let maps = twin::radio_maps(source, &c.scene, &["tx1", "tx3"], &grid).unwrap();
        let pc = |kind| coverage_probability(&twin::deployment(kind, &c.scene, &maps).unwrap(), &c.cfg.budget, 0.0);
        (pc(DeploymentKind::Ap), pc(DeploymentKind::Rack))
    };
    let (ap, rack) = coverage(MapSource::Inf(&c.ai.model));
    let (rt_ap, rt_rack) = coverage(MapSource::Rt(&rt));
    (
        ap > rack && ap - rack >= 0.10,
        format!(
            "AI twin: AP {:.1}% vs rack {:.1}%; RT twin: AP {:.1}% vs rack {:.1}%",
            100.0 * ap,
            100.0 * rack,
            100.0 * rt_ap,
            100.0 * rt_rack
        ),
    )
}

fn tree_bytes(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                let rel = p.strip_prefix(dir).unwrap().display().to_string();
                out.push((rel, std::fs::read(&p).unwrap()));
            }
        }
    }
    out.sort();
    out
}

fn determinism() -> Check {
    let exe = env!("CARGO_BIN_EXE_thzdt");
    let tmp = tempfile::tempdir().unwrap();
    let mut trees = Vec::new();
    for run in ["a", "b"] {
        let out = tmp.path().join(run);
        let status = std::process::Command::new(exe)
            .args(["run-all", "--seed", "7", "--out"])
            .arg(&out)
            .stdout(std::process::Stdio::null())
            .status()
            .unwrap();
        if !status.success() {
            return (false, format!("run-all exited with {status}"));
        }
        trees.push(tree_bytes(&out));
    }
    let n = trees[0].len();
    let bytes: usize = trees[0].iter().map(|(_, b)| b.len()).sum();
    (
        n > 0 && trees[0] == trees[1],
        format!("{n} files, {bytes} bytes, identical: {}", trees[0] == trees[1]),
    )
}
