//! Error-estimator-driven model selection.
//!
//! Starting from the coarsest homogenized model, models are tried in order
//! until the pilot estimate of `E|q(u) - q(u0)|` drops below the bias
//! tolerance. Past the blockwise model, new models are formed by resolving the
//! microstructure in the blocks with the largest averaged indicators.

use std::collections::{BTreeSet, HashMap};
use std::sync::Mutex;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::homogenize::ModelSpec;
use crate::problem::{ModelEvaluator, Sample};
use crate::rng::{derive_seed, PILOT_LEVEL};
use crate::stats::{mean, mean_abs};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SelectionParams {
    pub gamma: f64,
    pub pilot_samples: usize,
    pub tol_bias: f64,
}

impl SelectionParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return Err(Error::InvalidArgument(format!("gamma = {} not in (0, 1)", self.gamma)));
        }
        if self.pilot_samples < 2 {
            return Err(Error::InvalidArgument("at least 2 pilot samples are needed".into()));
        }
        if !(self.tol_bias >= 0.0) {
            return Err(Error::InvalidArgument(format!("negative bias tolerance {}", self.tol_bias)));
        }
        Ok(())
    }
}

/// Pilot data of one model on the shared pilot seeds.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PilotData {
    pub q: Vec<f64>,
    pub work: Vec<u64>,
    /// Averaged indicator magnitudes, present when the model was used for marking.
    pub indicators: Option<Vec<f64>>,
}

impl PilotData {
    pub fn mean_work(&self) -> f64 {
        let w: Vec<f64> = self.work.iter().map(|&w| w as f64).collect();
        mean(&w)
    }
}

/// Pilot evaluations keyed by model, reused across tolerances.
pub struct PilotCache {
    pub master_seed: u64,
    pub samples: usize,
    data: Mutex<HashMap<ModelSpec, PilotData>>,
}

impl PilotCache {
    pub fn new(master_seed: u64, samples: usize) -> Self {
        PilotCache {
            master_seed,
            samples,
            data: Mutex::new(HashMap::new()),
        }
    }

    pub fn seeds(&self) -> Vec<u64> {
        (0..self.samples as u64)
            .map(|i| derive_seed(self.master_seed, PILOT_LEVEL, i))
            .collect()
    }

    /// Pilot data of `model`, evaluated on first use.
    pub fn get_or_eval(&self, eval: &dyn ModelEvaluator, model: &ModelSpec, with_indicators: bool) -> Result<PilotData> {
        if let Some(d) = self.data.lock().unwrap().get(model) {
            if d.indicators.is_some() || !with_indicators {
                return Ok(d.clone());
            }
        }
        let seeds = self.seeds();
        let data = if with_indicators {
            let out: Vec<(Sample, Vec<f64>)> = seeds
                .par_iter()
                .map(|&s| eval.evaluate_with_indicators(model, s))
                .collect::<Result<_>>()?;
            let nb = eval.num_blocks();
            let avg = (0..nb)
                .map(|k| {
                    let xs: Vec<f64> = out.iter().map(|(_, ind)| ind[k].abs()).collect();
                    mean(&xs)
                })
                .collect();
            PilotData {
                q: out.iter().map(|(s, _)| s.q).collect(),
                work: out.iter().map(|(s, _)| s.work).collect(),
                indicators: Some(avg),
            }
        } else {
            let out: Vec<Sample> = seeds
                .par_iter()
                .map(|&s| eval.evaluate(model, s))
                .collect::<Result<_>>()?;
            PilotData {
                q: out.iter().map(|s| s.q).collect(),
                work: out.iter().map(|s| s.work).collect(),
                indicators: None,
            }
        };
        self.data.lock().unwrap().insert(model.clone(), data.clone());
        Ok(data)
    }

    pub fn get(&self, model: &ModelSpec) -> Option<PilotData> {
        self.data.lock().unwrap().get(model).cloned()
    }

    /// Everything cached so far, ordered by model.
    pub fn entries(&self) -> Vec<(ModelSpec, PilotData)> {
        let data = self.data.lock().unwrap();
        let mut out: Vec<(ModelSpec, PilotData)> = data.iter().map(|(m, d)| (m.clone(), d.clone())).collect();
        out.sort_by(|a, b| a.0.cmp(&b.0));
        out
    }

    /// Restores a cache saved with [`PilotCache::entries`].
    pub fn from_entries(master_seed: u64, samples: usize, entries: Vec<(ModelSpec, PilotData)>) -> Result<Self> {
        if let Some((m, _)) = entries.iter().find(|(_, d)| d.q.len() != samples || d.work.len() != samples) {
            return Err(Error::InvalidArgument(format!("pilot data of {m} does not have {samples} samples")));
        }
        Ok(PilotCache {
            master_seed,
            samples,
            data: Mutex::new(entries.into_iter().collect()),
        })
    }

    /// Preprocessing work of everything evaluated so far: twice the dofs per
    /// surrogate sample (primal and adjoint), once per fine-scale sample.
    pub fn preprocessing_work(&self) -> f64 {
        let models: Vec<ModelSpec> = self.entries().into_iter().map(|e| e.0).collect();
        self.preprocessing_work_of(&models)
    }

    /// [`PilotCache::preprocessing_work`] restricted to `models`, each counted once.
    pub fn preprocessing_work_of(&self, models: &[ModelSpec]) -> f64 {
        let data = self.data.lock().unwrap();
        let distinct: BTreeSet<&ModelSpec> = models.iter().collect();
        distinct
            .into_iter()
            .filter_map(|m| data.get(m).map(|d| (m, d)))
            .map(|(m, d)| {
                let w: u64 = d.work.iter().sum();
                let factor = if *m == ModelSpec::FineScale { 1.0 } else { 2.0 };
                factor * w as f64
            })
            .sum()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SelectedModel {
    pub model: ModelSpec,
    pub pilot: PilotData,
    /// `E|q(u) - q(u0)|` over the pilot samples.
    pub pilot_error: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelSequence {
    pub models: Vec<SelectedModel>,
    pub fine: PilotData,
    pub tol_bias: f64,
    /// True when every block had to be resolved: only the fine-scale model
    /// meets the tolerance.
    pub exhausted: bool,
    pub log: Vec<String>,
}

impl ModelSequence {
    pub fn last(&self) -> &SelectedModel {
        self.models.last().expect("model sequence is never empty")
    }
}

/// Blocks whose averaged indicator magnitude reaches `gamma` times the largest.
/// Keys are block ids; the block with the largest indicator is always marked.
pub fn mark_blocks(avg: &[(usize, f64)], gamma: f64) -> BTreeSet<usize> {
    let Some(&(arg, max)) = avg
        .iter()
        .max_by(|a, b| a.1.abs().total_cmp(&b.1.abs()).then(b.0.cmp(&a.0)))
    else {
        return BTreeSet::new();
    };
    let threshold = gamma * max.abs();
    let mut out: BTreeSet<usize> = avg.iter().filter(|(_, v)| v.abs() >= threshold).map(|(k, _)| *k).collect();
    out.insert(arg);
    out
}

/// Runs the selection loop for one bias tolerance.
pub fn select_models(eval: &dyn ModelEvaluator, params: &SelectionParams, cache: &PilotCache) -> Result<ModelSequence> {
    params.validate()?;
    let fine = cache.get_or_eval(eval, &ModelSpec::FineScale, false)?;
    let error_of = |d: &PilotData| {
        let diffs: Vec<f64> = fine.q.iter().zip(&d.q).map(|(f, s)| f - s).collect();
        mean_abs(&diffs)
    };
    let mut seq = ModelSequence {
        models: Vec::new(),
        fine: fine.clone(),
        tol_bias: 0.0,
        exhausted: false,
        log: Vec::new(),
    };
    let push = |seq: &mut ModelSequence, model: ModelSpec, pilot: PilotData| -> bool {
        let err = error_of(&pilot);
        let refined = model.refined_blocks().map_or(String::new(), |r| {
            r.iter().map(|b| b.to_string()).collect::<Vec<_>>().join(" ")
        });
        seq.log.push(format!(
            "model {} [{}] refined={{{}}} pilot_error={:.6e} pilot_work={:.1}",
            seq.models.len(),
            model,
            refined,
            err,
            pilot.mean_work()
        ));
        seq.models.push(SelectedModel {
            model,
            pilot,
            pilot_error: err,
        });
        if err <= params.tol_bias {
            seq.tol_bias = err;
            true
        } else {
            false
        }
    };
    let hierarchy = eval.hierarchy();
    let marking = hierarchy.len() - 1;
    for (k, model) in hierarchy.into_iter().enumerate() {
        let pilot = cache.get_or_eval(eval, &model, k == marking)?;
        if push(&mut seq, model, pilot) {
            return Ok(seq);
        }
    }
    let nb = eval.num_blocks();
    let mut refined: BTreeSet<usize> = BTreeSet::new();
    loop {
        let current = seq.last();
        let ind = current.pilot.indicators.as_ref().expect("marking model has indicators");
        let candidates: Vec<(usize, f64)> =
            (1..=nb).filter(|b| !refined.contains(b)).map(|b| (b, ind[b - 1])).collect();
        let marked = mark_blocks(&candidates, params.gamma);
        refined.extend(marked);
        if refined.len() == nb {
            seq.tol_bias = 0.0;
            seq.exhausted = true;
            seq.log.push("all blocks marked: only the fine-scale model meets the tolerance".into());
            return Ok(seq);
        }
        let model = ModelSpec::refined(refined.clone());
        let pilot = cache.get_or_eval(eval, &model, true)?;
        if push(&mut seq, model, pilot) {
            return Ok(seq);
        }
    }
}
