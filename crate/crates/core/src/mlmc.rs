//! Level selection, sample allocation and the multilevel estimator.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::adapt::{ModelSequence, PilotData};
use crate::error::{Error, Result};
use crate::homogenize::ModelSpec;
use crate::problem::ModelEvaluator;
use crate::rng::derive_seed;
use crate::stats::{mean, pairwise_sum, variance};

/// Relative slack when checking `sum V/M <= TOL_stat^2` in floating point.
const FEASIBILITY_SLACK: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ToleranceSplit {
    pub tol: f64,
    pub tol_bias: f64,
    pub tol_stat: f64,
}

impl ToleranceSplit {
    /// Statistical fraction `TOL_stat / TOL`.
    pub fn theta(&self) -> f64 {
        self.tol_stat / self.tol
    }
}

/// `TOL_bias = TOL / sqrt 2`, the rest for statistics.
pub fn split_initial(tol: f64) -> Result<ToleranceSplit> {
    if !(tol > 0.0) {
        return Err(Error::InvalidArgument(format!("tolerance {tol} must be positive")));
    }
    let tol_bias = tol / std::f64::consts::SQRT_2;
    Ok(ToleranceSplit {
        tol,
        tol_bias,
        tol_stat: tol - tol_bias,
    })
}

/// Split with a measured bias `b`: `TOL_stat = TOL - b`.
pub fn split_corrected(tol: f64, bias: f64) -> Result<ToleranceSplit> {
    if !(tol > 0.0) || !(bias >= 0.0) {
        return Err(Error::InvalidArgument(format!("need tol > 0 and bias >= 0, got ({tol}, {bias})")));
    }
    if bias >= tol {
        return Err(Error::BiasExceedsTolerance { bias, tol });
    }
    Ok(ToleranceSplit {
        tol,
        tol_bias: bias,
        tol_stat: tol - bias,
    })
}

/// `TOL_stat^-2 sum sqrt(V_l W_l)`.
pub fn estimated_cost(v: &[f64], w: &[f64], tol_stat: f64) -> f64 {
    let terms: Vec<f64> = v.iter().zip(w).map(|(v, w)| (v * w).sqrt()).collect();
    pairwise_sum(&terms) / (tol_stat * tol_stat)
}

/// `M_l = ceil(TOL_stat^-2 sqrt(V_l / W_l) sum_j sqrt(V_j W_j))`, at least 2.
pub fn allocate_samples(v: &[f64], w: &[f64], tol_stat: f64) -> Vec<u64> {
    let terms: Vec<f64> = v.iter().zip(w).map(|(v, w)| (v * w).sqrt()).collect();
    let total = pairwise_sum(&terms);
    let raw: Vec<f64> = v
        .iter()
        .zip(w)
        .map(|(v, w)| (v / w).sqrt() * total / (tol_stat * tol_stat))
        .collect();
    // shave off rounding noise so that exact products do not round up
    raw.iter()
        .map(|&m| {
            let r = m.round();
            let m = if (m - r).abs() <= 1e-9 * r.max(1.0) { r } else { m.ceil() };
            (m as u64).max(2)
        })
        .collect()
}

/// `sum V_l / M_l <= TOL_stat^2` up to floating point slack.
pub fn allocation_feasible(v: &[f64], m: &[u64], tol_stat: f64) -> bool {
    let s: f64 = v.iter().zip(m).map(|(v, &m)| v / m as f64).sum();
    s <= tol_stat * tol_stat * (1.0 + FEASIBILITY_SLACK)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BiasMode {
    /// Last level is the last surrogate; its measured bias is charged to TOL.
    CorrectedBias,
    /// Last level is the fine-scale model.
    ZeroBias,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LevelPlan {
    pub models: Vec<ModelSpec>,
    /// Position of each level's model in the selected sequence (fine = len).
    pub positions: Vec<usize>,
    pub bias_mode: BiasMode,
    pub split: ToleranceSplit,
    pub v: Vec<f64>,
    pub w: Vec<f64>,
    pub m: Vec<u64>,
    pub estimated_cost: f64,
}

fn for_each_subset(n: usize, k: usize, f: &mut impl FnMut(&[usize])) {
    fn rec(start: usize, n: usize, k: usize, cur: &mut Vec<usize>, f: &mut impl FnMut(&[usize])) {
        if cur.len() == k {
            f(cur);
            return;
        }
        for i in start..n {
            if n - i < k - cur.len() {
                break;
            }
            cur.push(i);
            rec(i + 1, n, k, cur, f);
            cur.pop();
        }
    }
    rec(0, n, k, &mut Vec::with_capacity(k), f);
}

/// Level statistics of an ordered choice of pilot data sets.
pub fn level_stats(pilots: &[&PilotData]) -> (Vec<f64>, Vec<f64>) {
    let mut v = Vec::with_capacity(pilots.len());
    let mut w = Vec::with_capacity(pilots.len());
    for (l, p) in pilots.iter().enumerate() {
        if l == 0 {
            v.push(variance(&p.q));
            w.push(p.mean_work());
        } else {
            let lo = pilots[l - 1];
            let y: Vec<f64> = p.q.iter().zip(&lo.q).map(|(a, b)| a - b).collect();
            v.push(variance(&y));
            w.push(p.mean_work() + lo.mean_work());
        }
    }
    (v, w)
}

/// Chooses the cheapest `L`-level plan over both bias modes and all ordered
/// subsets of the earlier models, scored with the pilot variances and costs.
pub fn select_levels(seq: &ModelSequence, levels: usize, tol: f64) -> Result<LevelPlan> {
    select_levels_in_mode(seq, levels, tol, None)
}

/// [`select_levels`] restricted to one bias mode when `mode` is given.
pub fn select_levels_in_mode(seq: &ModelSequence, levels: usize, tol: f64, mode: Option<BiasMode>) -> Result<LevelPlan> {
    if levels == 0 {
        return Err(Error::InvalidArgument("at least one level is needed".into()));
    }
    let s = seq.models.len();
    let mut best: Option<LevelPlan> = None;
    let mut consider = |plan: LevelPlan| {
        if best.as_ref().is_none_or(|b| plan.estimated_cost < b.estimated_cost) {
            best = Some(plan);
        }
    };
    let mut any_mode = false;
    // corrected bias: last level is the last surrogate
    if !seq.exhausted && s >= levels && mode != Some(BiasMode::ZeroBias) {
        if let Ok(split) = split_corrected(tol, seq.tol_bias) {
            any_mode = true;
            for_each_subset(s - 1, levels - 1, &mut |sub| {
                let positions: Vec<usize> = sub.iter().copied().chain([s - 1]).collect();
                let pilots: Vec<&PilotData> = positions.iter().map(|&p| &seq.models[p].pilot).collect();
                let (v, w) = level_stats(&pilots);
                consider(LevelPlan {
                    models: positions.iter().map(|&p| seq.models[p].model.clone()).collect(),
                    positions: positions.clone(),
                    bias_mode: BiasMode::CorrectedBias,
                    split,
                    estimated_cost: estimated_cost(&v, &w, split.tol_stat),
                    m: allocate_samples(&v, &w, split.tol_stat),
                    v,
                    w,
                });
            });
        }
    }
    // zero bias: the fine-scale model closes the sequence
    if s + 1 >= levels && mode != Some(BiasMode::CorrectedBias) {
        any_mode = true;
        let split = split_corrected(tol, 0.0)?;
        for_each_subset(s, levels - 1, &mut |sub| {
            let positions: Vec<usize> = sub.iter().copied().chain([s]).collect();
            let pilots: Vec<&PilotData> = positions
                .iter()
                .map(|&p| if p == s { &seq.fine } else { &seq.models[p].pilot })
                .collect();
            let (v, w) = level_stats(&pilots);
            consider(LevelPlan {
                models: positions
                    .iter()
                    .map(|&p| if p == s { ModelSpec::FineScale } else { seq.models[p].model.clone() })
                    .collect(),
                positions: positions.clone(),
                bias_mode: BiasMode::ZeroBias,
                split,
                estimated_cost: estimated_cost(&v, &w, split.tol_stat),
                m: allocate_samples(&v, &w, split.tol_stat),
                v,
                w,
            });
        });
    }
    if !any_mode {
        return Err(Error::NotEnoughModels {
            available: s + 1,
            requested: levels,
        });
    }
    best.ok_or(Error::NotEnoughModels {
        available: s + 1,
        requested: levels,
    })
}

/// `Y = q_hi - q_lo` on one shared microstructure, and the work of both solves.
pub fn coupled_sample(
    eval: &dyn ModelEvaluator,
    hi: &ModelSpec,
    lo: Option<&ModelSpec>,
    seed: u64,
) -> Result<(f64, u64)> {
    let a = eval.evaluate(hi, seed)?;
    match lo {
        None => Ok((a.q, a.work)),
        Some(lo) if lo == hi => Ok((0.0, 2 * a.work)),
        Some(lo) => {
            let b = eval.evaluate(lo, seed)?;
            Ok((a.q - b.q, a.work + b.work))
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LevelResult {
    pub model: ModelSpec,
    pub m: u64,
    /// Realized sample variance and mean work of `Y_l`.
    pub v: f64,
    pub w: f64,
    pub mean_y: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MlmcResult {
    pub estimate: f64,
    pub levels: Vec<LevelResult>,
    pub work_samples: f64,
    pub work_preprocess: f64,
    pub work_total: f64,
    pub master_seed: u64,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum SeedMode {
    /// Disjoint seed streams per level.
    #[default]
    PerLevel,
    /// Sample `i` of every level uses the same seed.
    Shared,
}

/// Draws the planned samples and sums the level means.
pub fn run_mlmc(
    eval: &dyn ModelEvaluator,
    plan: &LevelPlan,
    master_seed: u64,
    work_preprocess: f64,
    seed_mode: SeedMode,
) -> Result<MlmcResult> {
    let mut levels = Vec::with_capacity(plan.models.len());
    for (l, model) in plan.models.iter().enumerate() {
        let lo = if l == 0 { None } else { Some(&plan.models[l - 1]) };
        let key = match seed_mode {
            SeedMode::PerLevel => l as u64,
            SeedMode::Shared => 0,
        };
        let out: Vec<(f64, u64)> = (0..plan.m[l])
            .into_par_iter()
            .map(|i| {
                let seed = derive_seed(master_seed, key, i);
                coupled_sample(eval, model, lo, seed).map_err(|e| Error::Level {
                    level: l + 1,
                    index: i as usize,
                    source: Box::new(e),
                })
            })
            .collect::<Result<_>>()?;
        let y: Vec<f64> = out.iter().map(|o| o.0).collect();
        let w: Vec<f64> = out.iter().map(|o| o.1 as f64).collect();
        levels.push(LevelResult {
            model: model.clone(),
            m: plan.m[l],
            v: variance(&y),
            w: mean(&w),
            mean_y: mean(&y),
        });
    }
    let means: Vec<f64> = levels.iter().map(|l| l.mean_y).collect();
    let work: Vec<f64> = levels.iter().map(|l| l.w * l.m as f64).collect();
    let work_samples = pairwise_sum(&work);
    Ok(MlmcResult {
        estimate: pairwise_sum(&means),
        levels,
        work_samples,
        work_preprocess,
        work_total: work_samples + work_preprocess,
        master_seed,
    })
}

/// Plain Monte Carlo on one model: `M = ceil(V / TOL^2)` from the pilot variance.
pub fn run_plain_mc(
    eval: &dyn ModelEvaluator,
    model: &ModelSpec,
    pilot: &PilotData,
    tol: f64,
    master_seed: u64,
) -> Result<MlmcResult> {
    if !(tol > 0.0) {
        return Err(Error::InvalidArgument(format!("tolerance {tol} must be positive")));
    }
    let m = allocate_samples(&[variance(&pilot.q)], &[pilot.mean_work().max(1.0)], tol)[0];
    let plan = LevelPlan {
        models: vec![model.clone()],
        positions: vec![0],
        bias_mode: BiasMode::ZeroBias,
        split: split_corrected(tol, 0.0)?,
        v: vec![variance(&pilot.q)],
        w: vec![pilot.mean_work()],
        m: vec![m],
        estimated_cost: 0.0,
    };
    run_mlmc(eval, &plan, master_seed, 0.0, SeedMode::PerLevel)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn tolerance_splits() {
        let s = split_initial(0.01).unwrap();
        assert!((s.tol_bias - 0.007_071_067_811_865_475).abs() < 1e-15);
        assert!((s.tol_stat - 0.002_928_932_188_134_525).abs() < 1e-15);
        assert_eq!(split_corrected(0.01, 0.0).unwrap().tol_stat, 0.01);
        assert!((split_corrected(0.01, 0.004).unwrap().tol_stat - 0.006).abs() < 1e-15);
        assert!(matches!(split_corrected(0.01, 0.01), Err(Error::BiasExceedsTolerance { .. })));
    }

    #[test]
    fn cost_and_allocation_examples() {
        assert!((estimated_cost(&[4.0, 1.0], &[1.0, 4.0], 0.1) - 400.0).abs() < 1e-9);
        assert!((estimated_cost(&[0.0, 1.0], &[1.0, 4.0], 0.1) - 200.0).abs() < 1e-9);
        let m = allocate_samples(&[4.0, 1.0], &[1.0, 4.0], 0.1);
        assert_eq!(m, vec![800, 200]);
        assert!(allocation_feasible(&[4.0, 1.0], &m, 0.1));
        assert_eq!(allocate_samples(&[0.0, 1.0], &[1.0, 1.0], 0.1)[0], 2);
        assert_eq!(allocate_samples(&[2.5], &[7.0], 0.1), vec![250]);
    }

    #[test]
    fn subsets_are_ordered_and_complete() {
        let mut all = Vec::new();
        for_each_subset(4, 2, &mut |s| all.push(s.to_vec()));
        assert_eq!(all.len(), 6);
        assert!(all.iter().all(|s| s[0] < s[1]));
        let mut none = 0;
        for_each_subset(3, 0, &mut |s| {
            assert!(s.is_empty());
            none += 1
        });
        assert_eq!(none, 1);
    }

    proptest! {
        #[test]
        fn allocation_is_feasible(
            v in proptest::collection::vec(0.0f64..10.0, 1..5),
            w in proptest::collection::vec(0.1f64..1e4, 5),
            tol in 1e-3f64..1.0,
        ) {
            let w = &w[..v.len()];
            let m = allocate_samples(&v, w, tol);
            prop_assert!(allocation_feasible(&v, &m, tol));
            prop_assert!(m.iter().all(|&x| x >= 2));
        }

        #[test]
        fn selection_cost_is_scale_invariant(
            v in proptest::collection::vec(0.01f64..10.0, 3),
            w in proptest::collection::vec(0.1f64..100.0, 3),
            c in 0.1f64..100.0,
        ) {
            let base = estimated_cost(&v, &w, 0.1);
            let scaled: Vec<f64> = w.iter().map(|x| x * c).collect();
            let s = estimated_cost(&v, &scaled, 0.1);
            prop_assert!((s - base * c.sqrt()).abs() <= 1e-9 * s);
        }
    }
}
