use thzdt::inf::predict;
use thzdt::scene::{canonical_scene, Condition};
use thzdt::twin::{self, TwinConfig};

fn small_config() -> TwinConfig {
    let mut cfg = TwinConfig::seeded(3);
    cfg.dataset.n_samples = 120;
    cfg.hidden = vec![64, 64];
    cfg.train.epochs = 1500;
    cfg
}

#[test]
fn campaign_covers_every_declared_link() {
    let scene = canonical_scene();
    let c = twin::run_campaign(&scene, &small_config().campaign).unwrap();
    assert_eq!(c.links.len(), 29);
    let nlos = c.links.iter().filter(|l| l.condition == Condition::Nlos).count();
    assert_eq!(c.abg_los.n_samples + c.abg_nlos.n_samples, 29);
    assert_eq!(c.abg_nlos.n_samples, nlos);
    // free-space-like slope in LoS, steeper in NLoS
    assert!((c.abg_los.alpha - 20.0).abs() < 3.0, "{:?}", c.abg_los);
    assert!(c.abg_nlos.alpha > c.abg_los.alpha, "{:?}", c.abg_nlos);
    for l in &c.links {
        assert!(!l.measured.is_empty(), "{}-{} has no components", l.tx, l.rx);
    }
}

#[test]
fn measured_anchors_are_reproduced() {
    let scene = canonical_scene();
    let cfg = small_config();
    let c = twin::run_campaign(&scene, &cfg.campaign).unwrap();
    let ai = twin::build_ai_twin(&scene, &c, &cfg).unwrap();
    assert_eq!(ai.train_idx.len() + ai.val_idx.len(), cfg.dataset.n_samples + 29);
    let mut worst = 0.0f64;
    for l in &c.links {
        let a = predict(&ai.model, &scene, scene.node(&l.tx).unwrap(), scene.node(&l.rx).unwrap().position).unwrap();
        worst = worst.max((a.p_db + l.path_loss.pl_db).abs());
    }
    assert!(worst <= 3.0, "worst anchor power error {worst:.2} dB");
}

#[test]
fn dataset_points_are_free_and_split_is_disjoint() {
    let scene = canonical_scene();
    let cfg = small_config();
    let c = twin::run_campaign(&scene, &cfg.campaign).unwrap();
    let rt = twin::rt_conditioning(&c, cfg.campaign.max_order);
    let data = twin::build_dataset(&scene, &cfg.campaign.truth, &rt, &c.abg_nlos, &cfg.dataset).unwrap();
    assert_eq!(data.len(), cfg.dataset.n_samples);
    for t in &data {
        assert!(twin::is_free_point(&scene, t.sample.x, cfg.dataset.margin_m));
        assert!(t.sample.target_p_db.is_finite());
    }
    let (train, val) = twin::split_indices(data.len(), 0.2, 9);
    assert_eq!(val.len(), 24);
    let mut all: Vec<usize> = train.iter().chain(&val).copied().collect();
    all.sort_unstable();
    assert_eq!(all, (0..data.len()).collect::<Vec<_>>());
    assert_eq!(twin::split_indices(data.len(), 0.2, 9), (train, val));
}
