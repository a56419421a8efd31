use std::collections::HashMap;
use std::sync::OnceLock;

use nbv_core::harness::{
    run_experiment_with_threads, EpisodeRecord, ExperimentConfig, GeneratorSpec, PreparedScene, SceneSource,
};
use nbv_core::policies::{random_next, PolicyConfig, PolicyKind};
use nbv_core::render::{Camera, Intrinsics};
use nbv_core::surrogate::SurrogateReconstructor;

const POLICIES: [PolicyKind; 5] = [
    PolicyKind::Random,
    PolicyKind::Even,
    PolicyKind::Odd,
    PolicyKind::Candidate,
    PolicyKind::Gradient,
];

fn cheap_eval(config: &mut ExperimentConfig) {
    config.eval.n_psnr_views = 2;
    config.eval.psnr_res = 16;
}

/// 20 scenes x 2 inits x 5 views for every policy, shared by the tests below.
fn records() -> &'static [EpisodeRecord] {
    static OUT: OnceLock<Vec<EpisodeRecord>> = OnceLock::new();
    OUT.get_or_init(|| {
        let mut config = ExperimentConfig::new(
            SceneSource::Generator(GeneratorSpec::new(20, 11)),
            POLICIES.iter().map(|&k| PolicyConfig::new(k)).collect(),
        );
        config.n_inits = 2;
        config.max_views = 5;
        cheap_eval(&mut config);
        let out = run_experiment_with_threads(&config, None).unwrap();
        assert!(out.records.iter().all(|r| r.is_ok()));
        out.records
    })
}

#[test]
fn iou_at_step_5_rarely_falls_below_step_1() {
    for kind in POLICIES {
        let mut by_pair: HashMap<(&str, u64), [f64; 2]> = HashMap::new();
        for r in records().iter().filter(|r| r.policy == kind.as_str()) {
            let slot = by_pair.entry((&r.scene_id, r.init_seed)).or_default();
            match r.step {
                1 => slot[0] = r.iou.unwrap(),
                5 => slot[1] = r.iou.unwrap(),
                _ => {}
            }
        }
        let held = by_pair.values().filter(|[a, b]| b >= a).count();
        assert!(
            held as f64 >= 0.95 * by_pair.len() as f64,
            "{}: step 5 >= step 1 on {held}/{} pairs",
            kind.as_str(),
            by_pair.len()
        );
    }
}

#[test]
fn mean_iou_does_not_decrease_per_step() {
    for kind in POLICIES {
        let mut sums = [0.0; 5];
        let mut counts = [0usize; 5];
        for r in records().iter().filter(|r| r.policy == kind.as_str()) {
            sums[r.step - 1] += r.iou.unwrap();
            counts[r.step - 1] += 1;
        }
        let means: Vec<f64> = sums.iter().zip(&counts).map(|(s, &n)| s / n as f64).collect();
        assert!(means.windows(2).all(|w| w[1] >= w[0]), "{}: {means:?}", kind.as_str());
    }
}

#[test]
fn views_improve_psnr_over_the_prior() {
    let mut config = ExperimentConfig::new(SceneSource::Generator(GeneratorSpec::new(50, 3)), vec![]);
    config.eval.n_psnr_views = 4;
    config.eval.psnr_res = 16;
    let intrinsics = Intrinsics::default();
    let mut better = 0;
    for index in 0..50 {
        let scene = PreparedScene::load(&config, index).unwrap();
        let mut recon =
            SurrogateReconstructor::with_prior(scene.gt.clone(), scene.prior.clone(), config.surrogate).unwrap();
        let (before, _) = scene.cache.views_psnr(&recon.predicted_field()).unwrap();
        let mut history = Vec::new();
        for v in 0..5 {
            let p = random_next(&history, 0.7, 2.0, (index * 10 + v) as u64).position;
            recon.acquire_view(&Camera::look_at_origin(p, intrinsics).unwrap()).unwrap();
            history.push(p);
        }
        let (after, _) = scene.cache.views_psnr(&recon.predicted_field()).unwrap();
        better += usize::from(before < after);
    }
    assert!(better >= 45, "PSNR improved on {better}/50 scenes");
}
