mod common;

use std::collections::BTreeSet;

use common::Stub;
use mbmlmc::adapt::{select_models, PilotCache, SelectionParams};
use mbmlmc::homogenize::ModelSpec;

const TOL: f64 = 0.01;

fn params(tol_bias: f64) -> SelectionParams {
    SelectionParams { gamma: 0.5, pilot_samples: 8, tol_bias }
}

fn three_level_stub() -> Stub {
    Stub::new(
        vec![
            (ModelSpec::GlobalHomogenized, 10.0 * TOL, 1),
            (ModelSpec::CoarseMeshHomogenized { level: 0 }, 4.0 * TOL, 10),
            (ModelSpec::BlockwiseHomogenized, 1.0 * TOL, 100),
        ],
        vec![0.25 * TOL; 4],
    )
}

#[test]
fn stops_at_the_first_model_below_the_bias_tolerance() {
    let stub = three_level_stub();
    let cache = PilotCache::new(7, 8);
    let seq = select_models(&stub, &params(2.0 * TOL), &cache).unwrap();
    assert_eq!(seq.models.len(), 3);
    assert_eq!(seq.last().model, ModelSpec::BlockwiseHomogenized);
    assert!((seq.tol_bias - TOL).abs() < 1e-12);
    assert!(!seq.exhausted);
    let errs: Vec<f64> = seq.models.iter().map(|m| m.pilot_error).collect();
    for (e, want) in errs.iter().zip([10.0, 4.0, 1.0]) {
        assert!((e - want * TOL).abs() < 1e-12);
    }
}

#[test]
fn first_model_can_suffice() {
    let stub = three_level_stub();
    let cache = PilotCache::new(7, 8);
    let seq = select_models(&stub, &params(20.0 * TOL), &cache).unwrap();
    assert_eq!(seq.models.len(), 1);
    assert!((seq.tol_bias - 10.0 * TOL).abs() < 1e-12);
}

#[test]
fn one_block_toy_is_exhausted_immediately() {
    let stub = Stub::new(vec![(ModelSpec::GlobalHomogenized, 5.0 * TOL, 1)], vec![5.0 * TOL]);
    let cache = PilotCache::new(1, 4);
    let seq = select_models(&stub, &params(TOL), &cache).unwrap();
    assert_eq!(seq.models.len(), 1);
    assert!(seq.exhausted);
    assert_eq!(seq.tol_bias, 0.0);
}

#[test]
fn marking_grows_the_resolved_set() {
    let blocks = vec![8.0, 0.5, 4.0, 0.25, 2.0, 1.0, 0.1, 0.1].into_iter().map(|x| x * TOL).collect();
    let stub = Stub::new(vec![(ModelSpec::BlockwiseHomogenized, 15.95 * TOL, 100)], blocks);
    let cache = PilotCache::new(3, 6);
    let seq = select_models(&stub, &params(1.5 * TOL), &cache).unwrap();
    let sets: Vec<BTreeSet<usize>> = seq
        .models
        .iter()
        .map(|m| m.model.refined_blocks().cloned().unwrap_or_default())
        .collect();
    assert_eq!(sets[1], BTreeSet::from([1, 3]));
    assert_eq!(sets[2], BTreeSet::from([1, 3, 5, 6]));
    assert_eq!(sets.len(), 3);
    for w in sets.windows(2) {
        assert!(w[0].is_subset(&w[1]) && w[0].len() < w[1].len());
    }
    for w in seq.models.windows(2) {
        assert!(w[1].pilot_error <= w[0].pilot_error + 1e-15);
    }
    assert!(seq.last().pilot_error <= 1.5 * TOL);
    assert!(seq.models.len() <= stub.blocks.len() + 1);
}

#[test]
fn all_models_share_the_pilot_seeds() {
    let stub = three_level_stub();
    let cache = PilotCache::new(11, 5);
    let seq = select_models(&stub, &params(2.0 * TOL), &cache).unwrap();
    // offsets are constant, so every pilot vector is the fine one shifted
    for m in &seq.models {
        let off = stub.offset(&m.model);
        for (a, b) in m.pilot.q.iter().zip(&seq.fine.q) {
            assert!((a - b - off).abs() < 1e-12);
        }
    }
    let again = select_models(&stub, &params(2.0 * TOL), &cache).unwrap();
    assert_eq!(seq, again);
}

#[test]
fn preprocessing_counts_surrogates_twice() {
    let stub = three_level_stub();
    let cache = PilotCache::new(2, 4);
    select_models(&stub, &params(2.0 * TOL), &cache).unwrap();
    let fine = 4.0 * stub.work(&ModelSpec::FineScale) as f64;
    let surrogates = 2.0 * 4.0 * (1.0 + 10.0 + 100.0);
    assert_eq!(cache.preprocessing_work(), fine + surrogates);
}
