mod common;

use std::collections::BTreeMap;

use common::{Constant, Stub};
use mbmlmc::adapt::{select_models, ModelSequence, PilotCache, PilotData, SelectedModel, SelectionParams};
use mbmlmc::homogenize::ModelSpec;
use mbmlmc::mlmc::{
    allocation_feasible, run_mlmc, run_plain_mc, select_levels, split_corrected, BiasMode, LevelPlan, SeedMode,
};
use mbmlmc::stats::{mean, variance};

fn pilot(q: &[f64], work: &[u64]) -> PilotData {
    PilotData { q: q.to_vec(), work: work.to_vec(), indicators: None }
}

fn selected(model: ModelSpec, q: &[f64], work: &[u64]) -> SelectedModel {
    SelectedModel { model, pilot: pilot(q, work), pilot_error: 0.0 }
}

fn crafted(scale: u64) -> ModelSequence {
    ModelSequence {
        models: vec![
            selected(ModelSpec::GlobalHomogenized, &[0.0, 0.0], &[39 * scale, 40 * scale]),
            selected(ModelSpec::CoarseMeshHomogenized { level: 0 }, &[0.0, 2.0], &[8 * scale, 8 * scale]),
            selected(ModelSpec::BlockwiseHomogenized, &[0.0, 2.0], &[scale, scale]),
        ],
        fine: pilot(&[0.0, 3.0], &[1_000_000 * scale, 1_000_000 * scale]),
        tol_bias: 0.0,
        exhausted: false,
        log: Vec::new(),
    }
}

#[test]
fn level_selection_picks_the_cheaper_tuple() {
    // (coarse, blockwise) scores 400, (global, blockwise) 900
    let plan = select_levels(&crafted(1), 2, 0.1).unwrap();
    assert_eq!(plan.bias_mode, BiasMode::CorrectedBias);
    assert_eq!(plan.models, vec![ModelSpec::CoarseMeshHomogenized { level: 0 }, ModelSpec::BlockwiseHomogenized]);
    assert!((plan.estimated_cost - 400.0).abs() < 1e-9);
    assert_eq!(plan.v, vec![2.0, 0.0]);
    assert_eq!(plan.w, vec![8.0, 9.0]);
    assert!(allocation_feasible(&plan.v, &plan.m, plan.split.tol_stat));
}

#[test]
fn level_selection_ignores_work_scale() {
    for scale in [3, 1000] {
        let a = select_levels(&crafted(1), 2, 0.1).unwrap();
        let b = select_levels(&crafted(scale), 2, 0.1).unwrap();
        assert_eq!(a.models, b.models);
        assert!((b.estimated_cost - a.estimated_cost * (scale as f64).sqrt()).abs() < 1e-6 * b.estimated_cost);
    }
}

#[test]
fn full_length_selection_is_the_identity() {
    let seq = crafted(1);
    let plan = select_levels(&seq, 4, 0.1).unwrap();
    assert_eq!(plan.bias_mode, BiasMode::ZeroBias);
    assert_eq!(plan.models.len(), 4);
    assert_eq!(plan.models[3], ModelSpec::FineScale);
    assert!(select_levels(&seq, 5, 0.1).is_err());
}

#[test]
fn exhausted_sequences_end_at_the_fine_model() {
    let mut seq = crafted(1);
    seq.exhausted = true;
    let plan = select_levels(&seq, 2, 0.1).unwrap();
    assert_eq!(plan.bias_mode, BiasMode::ZeroBias);
    assert_eq!(plan.models.last(), Some(&ModelSpec::FineScale));
}

#[test]
fn bias_is_charged_to_the_tolerance() {
    let mut seq = crafted(1);
    seq.tol_bias = 0.04;
    let plan = select_levels(&seq, 2, 0.1).unwrap();
    assert!((plan.split.tol_stat - 0.06).abs() < 1e-15);
    seq.tol_bias = 0.1;
    assert_eq!(select_levels(&seq, 2, 0.1).unwrap().bias_mode, BiasMode::ZeroBias);
}

fn plan_of(models: Vec<ModelSpec>, m: u64) -> LevelPlan {
    let n = models.len();
    LevelPlan {
        positions: (0..n).collect(),
        models,
        bias_mode: BiasMode::ZeroBias,
        split: split_corrected(0.1, 0.0).unwrap(),
        v: vec![1.0; n],
        w: vec![1.0; n],
        m: vec![m; n],
        estimated_cost: 0.0,
    }
}

fn stub() -> Stub {
    let mut s = Stub::new(
        vec![
            (ModelSpec::GlobalHomogenized, 0.3, 1),
            (ModelSpec::BlockwiseHomogenized, 0.1, 20),
        ],
        vec![0.05, 0.05],
    );
    s.coupled_noise = 0.5;
    s
}

#[test]
fn telescoping_with_shared_seeds() {
    let s = stub();
    let models = vec![ModelSpec::GlobalHomogenized, ModelSpec::BlockwiseHomogenized, ModelSpec::FineScale];
    let r = run_mlmc(&s, &plan_of(models.clone(), 64), 5, 0.0, SeedMode::Shared).unwrap();
    let last = run_mlmc(&s, &plan_of(vec![ModelSpec::FineScale], 64), 5, 0.0, SeedMode::Shared).unwrap();
    assert!((r.estimate - last.estimate).abs() <= 1e-13 * last.estimate.abs());

    // identical models: every correction vanishes exactly
    let same = vec![ModelSpec::FineScale; 3];
    let r = run_mlmc(&s, &plan_of(same, 64), 5, 0.0, SeedMode::Shared).unwrap();
    assert_eq!(r.estimate, last.estimate);
}

#[test]
fn constant_qoi_is_reproduced_exactly() {
    let c = Constant(2.5, BTreeMap::new());
    let r = run_mlmc(&c, &plan_of(vec![ModelSpec::FineScale], 7), 1, 0.0, SeedMode::PerLevel).unwrap();
    assert_eq!(r.estimate, 2.5);
    let p = pilot(&[2.5, 2.5, 2.5], &[1, 1, 1]);
    let r = run_plain_mc(&c, &ModelSpec::FineScale, &p, 0.01, 1).unwrap();
    assert_eq!(r.estimate, 2.5);
    assert_eq!(r.levels[0].m, 2);
}

#[test]
fn plain_mc_variance_matches_clt() {
    let s = stub();
    let cache = PilotCache::new(99, 200);
    let seq = select_models(&s, &SelectionParams { gamma: 0.5, pilot_samples: 200, tol_bias: 1.0 }, &cache).unwrap();
    let tol = 0.01;
    let reps: Vec<f64> = (0..50)
        .map(|k| run_plain_mc(&s, &ModelSpec::FineScale, &seq.fine, tol, 1000 + k).unwrap().estimate)
        .collect();
    let m = run_plain_mc(&s, &ModelSpec::FineScale, &seq.fine, tol, 0).unwrap().levels[0].m as f64;
    let predicted = variance(&seq.fine.q) / m;
    let realized = variance(&reps);
    let se = predicted * (2.0 / 49.0f64).sqrt();
    assert!((realized - predicted).abs() <= 3.0 * se, "{realized} vs {predicted}");
    assert!((mean(&reps) - 1.0).abs() <= 3.0 * (predicted / 50.0).sqrt());
}

#[test]
fn plain_mc_work_scales_like_tol_squared() {
    let s = stub();
    let p = pilot(&(0..400).map(|i| (i as f64 * 0.37).sin()).collect::<Vec<_>>(), &[10; 400]);
    let a = run_plain_mc(&s, &ModelSpec::FineScale, &p, 0.02, 3).unwrap();
    let b = run_plain_mc(&s, &ModelSpec::FineScale, &p, 0.01, 3).unwrap();
    let ratio = b.work_total / a.work_total;
    assert!((ratio - 4.0).abs() <= 0.5, "{ratio}");
}

#[test]
fn mlmc_error_matches_the_plan_on_the_stub() {
    let s = stub();
    let tol = 0.01;
    let cache = PilotCache::new(4, 100);
    let params = SelectionParams { gamma: 0.5, pilot_samples: 100, tol_bias: tol / 2f64.sqrt() };
    let seq = select_models(&s, &params, &cache).unwrap();
    let pre = cache.preprocessing_work();
    for levels in [2, 3] {
        let plan = select_levels(&seq, levels, tol).unwrap();
        assert!(allocation_feasible(&plan.v, &plan.m, plan.split.tol_stat));
        let bias = match plan.bias_mode {
            BiasMode::ZeroBias => 0.0,
            BiasMode::CorrectedBias => s.offset(plan.models.last().unwrap()),
        };
        let planned: f64 = plan.v.iter().zip(&plan.m).map(|(v, &m)| v / m as f64).sum::<f64>() + bias * bias;
        assert!(planned <= tol * tol * (1.0 + 1e-12));
        let reps = 200;
        let errs: Vec<f64> = (0..reps)
            .map(|k| {
                let r = run_mlmc(&s, &plan, 500 + k, pre, SeedMode::PerLevel).unwrap();
                assert!(r.work_total >= r.work_samples + pre - 1e-9);
                (r.estimate - 1.0).powi(2)
            })
            .collect();
        // chi-square spread of the mean squared error, plus pilot noise in V
        let mse = mean(&errs);
        assert!(mse <= 1.5 * planned, "L = {levels}: mse {mse} vs planned {planned}");
    }
}

#[test]
fn results_do_not_depend_on_thread_count() {
    let s = stub();
    let models = vec![ModelSpec::GlobalHomogenized, ModelSpec::BlockwiseHomogenized, ModelSpec::FineScale];
    let plan = plan_of(models, 300);
    let run = |threads| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| run_mlmc(&s, &plan, 17, 0.0, SeedMode::PerLevel).unwrap())
    };
    let one = run(1);
    assert_eq!(one, run(1));
    assert_eq!(one, run(4));
}
