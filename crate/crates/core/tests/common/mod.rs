//! A deterministic stand-in for a PDE problem: every model returns the
//! fine-scale value plus a prescribed offset, so pilot errors and level
//! statistics are known in closed form.

#![allow(dead_code)]

use std::collections::BTreeMap;

use mbmlmc::homogenize::ModelSpec;
use mbmlmc::problem::{ModelEvaluator, Sample};
use mbmlmc::rng::rng_from_seed;
use mbmlmc::Result;
use rand::Rng;

pub struct Stub {
    pub hierarchy: Vec<(ModelSpec, f64, u64)>,
    /// Offset contributed by each homogenized block, and its work when resolved.
    pub blocks: Vec<f64>,
    pub block_work: u64,
    pub base_work: u64,
    pub mean: f64,
    pub sd: f64,
    /// Extra noise on surrogates, proportional to their offset.
    pub coupled_noise: f64,
}

impl Stub {
    pub fn new(hierarchy: Vec<(ModelSpec, f64, u64)>, blocks: Vec<f64>) -> Stub {
        Stub {
            hierarchy,
            blocks,
            block_work: 50,
            base_work: 100,
            mean: 1.0,
            sd: 0.1,
            coupled_noise: 0.0,
        }
    }

    fn normals(seed: u64) -> (f64, f64) {
        let mut rng = rng_from_seed(seed);
        let (u1, u2): (f64, f64) = (1.0 - rng.gen::<f64>(), rng.gen::<f64>());
        let r = (-2.0 * u1.ln()).sqrt();
        let t = std::f64::consts::TAU * u2;
        (r * t.cos(), r * t.sin())
    }

    pub fn offset(&self, model: &ModelSpec) -> f64 {
        if let Some((_, off, _)) = self.hierarchy.iter().find(|(m, _, _)| m == model) {
            return *off;
        }
        match model {
            ModelSpec::FineScale => 0.0,
            _ => (1..=self.blocks.len())
                .filter(|&b| !model.is_resolved(b))
                .map(|b| self.blocks[b - 1])
                .sum(),
        }
    }

    pub fn work(&self, model: &ModelSpec) -> u64 {
        if let Some((_, _, w)) = self.hierarchy.iter().find(|(m, _, _)| m == model) {
            return *w;
        }
        let resolved = (1..=self.blocks.len()).filter(|&b| model.is_resolved(b)).count() as u64;
        self.base_work + self.block_work * resolved
    }
}

impl ModelEvaluator for Stub {
    fn num_blocks(&self) -> usize {
        self.blocks.len()
    }

    fn hierarchy(&self) -> Vec<ModelSpec> {
        self.hierarchy.iter().map(|h| h.0.clone()).collect()
    }

    fn evaluate(&self, model: &ModelSpec, seed: u64) -> Result<Sample> {
        let (z1, z2) = Self::normals(seed);
        let off = self.offset(model);
        Ok(Sample {
            q: self.mean + self.sd * z1 + off * (1.0 + self.coupled_noise * z2),
            work: self.work(model),
        })
    }

    fn evaluate_with_indicators(&self, model: &ModelSpec, seed: u64) -> Result<(Sample, Vec<f64>)> {
        let s = self.evaluate(model, seed)?;
        let ind = (1..=self.blocks.len())
            .map(|b| if model.is_resolved(b) { 0.0 } else { self.blocks[b - 1] })
            .collect();
        Ok((s, ind))
    }
}

/// Stub returning the same value for every model and seed.
pub struct Constant(pub f64, pub BTreeMap<ModelSpec, u64>);

impl ModelEvaluator for Constant {
    fn num_blocks(&self) -> usize {
        1
    }

    fn hierarchy(&self) -> Vec<ModelSpec> {
        vec![ModelSpec::GlobalHomogenized]
    }

    fn evaluate(&self, model: &ModelSpec, _seed: u64) -> Result<Sample> {
        Ok(Sample { q: self.0, work: self.1.get(model).copied().unwrap_or(1) })
    }

    fn evaluate_with_indicators(&self, model: &ModelSpec, seed: u64) -> Result<(Sample, Vec<f64>)> {
        Ok((self.evaluate(model, seed)?, vec![0.0]))
    }
}
