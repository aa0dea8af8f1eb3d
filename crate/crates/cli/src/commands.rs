//! The subcommands. Every command works inside one output directory and
//! writes the tables read by the plotting scripts.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};

use mbmlmc::adapt::{select_models, ModelSequence, PilotCache, PilotData, SelectionParams};
use mbmlmc::homogenize::ModelSpec;
use mbmlmc::media::partition_blocks;
use mbmlmc::mlmc::{
    run_mlmc, run_plain_mc, select_levels_in_mode, split_initial, BiasMode, LevelPlan, MlmcResult, SeedMode,
    ToleranceSplit,
};
use mbmlmc::problem::{Problem, ProblemConfig};
use mbmlmc::rng::{child_master, derive_seed};
use mbmlmc::stats::{mean, variance};
use mbmlmc::Error;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::config::{self, ExperimentConfig, ReferenceMethod};
use crate::error::{CliError, Result};
use crate::metrics::{qoi_center, refined_centroid_offset, strictly_decreasing};
use crate::output::{self, num, Table};

/// Seed stream tags under the configured master seed.
pub const PILOT_TAG: u64 = 1;
pub const MLMC_TAG: u64 = 2;
pub const MC_TAG: u64 = 3;
pub const REFERENCE_TAG: u64 = 4;

pub const CONFIG_FILE: &str = "config.json";
pub const PILOT_FILE: &str = "pilot.json";
pub const REFERENCE_FILE: &str = "reference.json";

/// A problem, its pilot cache and the directory results go to.
pub struct Session {
    pub config: ExperimentConfig,
    pub problem: Problem,
    pub cache: PilotCache,
    pub out: PathBuf,
}

/// Model sequence and cheapest level plan for one tolerance.
#[derive(Clone, Debug)]
pub struct Selection {
    pub tol: f64,
    pub initial: ToleranceSplit,
    pub seq: ModelSequence,
    pub plan: LevelPlan,
}

#[derive(Serialize, Deserialize)]
struct PilotEntry {
    model: ModelSpec,
    data: PilotData,
}

#[derive(Serialize, Deserialize)]
struct PilotFile {
    problem: ProblemConfig,
    master_seed: u64,
    samples: usize,
    models: Vec<PilotEntry>,
}

impl Session {
    /// Opens `out`, writes the resolved config there and reuses saved pilot
    /// evaluations when they belong to the same problem and seeds.
    pub fn open(config: ExperimentConfig, out: &Path) -> Result<Session> {
        fs::create_dir_all(out).map_err(CliError::io(out))?;
        let problem = Problem::new(config.problem.clone())?;
        let master = child_master(config.master_seed, PILOT_TAG);
        let cache = load_pilot(&out.join(PILOT_FILE), &config.problem, master, config.pilot_samples)
            .unwrap_or_else(|| PilotCache::new(master, config.pilot_samples));
        let path = out.join(CONFIG_FILE);
        fs::write(&path, config.to_json() + "\n").map_err(CliError::io(&path))?;
        Ok(Session {
            config,
            problem,
            cache,
            out: out.to_path_buf(),
        })
    }

    fn save_pilot(&self) -> Result<()> {
        let file = PilotFile {
            problem: self.config.problem.clone(),
            master_seed: self.cache.master_seed,
            samples: self.cache.samples,
            models: self.cache.entries().into_iter().map(|(model, data)| PilotEntry { model, data }).collect(),
        };
        let path = self.out.join(PILOT_FILE);
        let text = serde_json::to_string(&file).expect("pilot data serializes");
        fs::write(&path, text).map_err(CliError::io(&path))
    }

    /// Selects models for `tol` and the cheapest plan over the configured level counts.
    pub fn select(&self, tol: f64, mode: Option<BiasMode>) -> Result<Selection> {
        let initial = split_initial(tol)?;
        let params = SelectionParams {
            gamma: self.config.gamma,
            pilot_samples: self.config.pilot_samples,
            tol_bias: initial.tol_bias,
        };
        let seq = select_models(&self.problem, &params, &self.cache)?;
        self.save_pilot()?;
        for line in &seq.log {
            eprintln!("[TOL={tol}] {line}");
        }
        let plan = cheapest_plan(&seq, &self.config.levels, tol, mode)?;
        eprintln!(
            "[TOL={tol}] L={} {:?} M={:?} estimated cost {:.4e}",
            plan.models.len(),
            plan.bias_mode,
            plan.m,
            plan.estimated_cost
        );
        Ok(Selection { tol, initial, seq, plan })
    }

    fn select_all(&self) -> Result<Vec<Selection>> {
        self.config.tolerances.iter().map(|&t| self.select(t, None)).collect()
    }

    /// Pilot work of the models any of `selections` uses, charged once.
    pub fn preprocessing_work(&self, selections: &[Selection]) -> f64 {
        let models: Vec<ModelSpec> = selections
            .iter()
            .flat_map(|s| s.seq.models.iter().map(|m| m.model.clone()))
            .chain([ModelSpec::FineScale])
            .collect();
        self.cache.preprocessing_work_of(&models)
    }
}

fn load_pilot(path: &Path, problem: &ProblemConfig, master_seed: u64, samples: usize) -> Option<PilotCache> {
    let text = fs::read_to_string(path).ok()?;
    let file: PilotFile = serde_json::from_str(&text).ok()?;
    if file.problem != *problem || file.master_seed != master_seed || file.samples != samples {
        return None;
    }
    let entries = file.models.into_iter().map(|e| (e.model, e.data)).collect();
    PilotCache::from_entries(master_seed, samples, entries).ok()
}

/// Lowest estimated cost over `levels`; ties go to fewer levels.
pub fn cheapest_plan(seq: &ModelSequence, levels: &[usize], tol: f64, mode: Option<BiasMode>) -> Result<LevelPlan> {
    let mut best: Option<LevelPlan> = None;
    let mut last_err = None;
    let mut sorted = levels.to_vec();
    sorted.sort_unstable();
    sorted.dedup();
    for l in sorted {
        match select_levels_in_mode(seq, l, tol, mode) {
            Ok(p) => {
                if best.as_ref().is_none_or(|b| p.estimated_cost < b.estimated_cost) {
                    best = Some(p);
                }
            }
            Err(e @ (Error::NotEnoughModels { .. } | Error::BiasExceedsTolerance { .. })) => last_err = Some(e),
            Err(e) => return Err(e.into()),
        }
    }
    match (best, last_err) {
        (Some(p), _) => Ok(p),
        (None, Some(e)) => Err(e.into()),
        (None, None) => Err(CliError::Config("levels: no level count given".into())),
    }
}

fn blocks_string(model: &ModelSpec) -> String {
    model
        .refined_blocks()
        .map(|r| r.iter().map(|b| b.to_string()).collect::<Vec<_>>().join(" "))
        .unwrap_or_default()
}

fn bias_mode_name(mode: BiasMode) -> &'static str {
    match mode {
        BiasMode::CorrectedBias => "corrected-bias",
        BiasMode::ZeroBias => "zero-bias",
    }
}

fn write_selection_tables(session: &Session, selections: &[Selection]) -> Result<()> {
    let mut models = Table::new(&["tol", "model_id", "model", "kind", "refined_blocks", "pilot_error", "pilot_work"]);
    let mut plans = Table::new(&[
        "tol",
        "L",
        "bias_mode",
        "tol_stat",
        "estimated_cost",
        "level",
        "model_id",
        "M_l",
        "V_l",
        "W_l",
    ]);
    for s in selections {
        for (j, m) in s.seq.models.iter().enumerate() {
            models.push(vec![
                num(s.tol),
                j.to_string(),
                m.model.to_string(),
                m.model.kind().into(),
                blocks_string(&m.model),
                num(m.pilot_error),
                num(m.pilot.mean_work()),
            ]);
        }
        models.push(vec![
            num(s.tol),
            s.seq.models.len().to_string(),
            "fine".into(),
            "fine".into(),
            String::new(),
            num(0.0),
            num(s.seq.fine.mean_work()),
        ]);
        let p = &s.plan;
        for l in 0..p.models.len() {
            plans.push(vec![
                num(s.tol),
                p.models.len().to_string(),
                bias_mode_name(p.bias_mode).into(),
                num(p.split.tol_stat),
                num(p.estimated_cost),
                (l + 1).to_string(),
                p.positions[l].to_string(),
                p.m[l].to_string(),
                num(p.v[l]),
                num(p.w[l]),
            ]);
        }
    }
    models.write(&session.out.join("models.csv"))?;
    plans.write(&session.out.join("plans.csv"))?;
    write_bounds(session, selections)
}

/// Estimate and two-sided bounds of the last surrogate on every pilot sample.
fn write_bounds(session: &Session, selections: &[Selection]) -> Result<()> {
    let mut table = Table::new(&["tol", "model_id", "sample", "eta_est", "eta_low", "eta_upp"]);
    let seeds = session.cache.seeds();
    let mut done: BTreeMap<ModelSpec, Vec<[f64; 3]>> = BTreeMap::new();
    for s in selections {
        let model = &s.seq.last().model;
        if !done.contains_key(model) {
            let rows = seeds
                .par_iter()
                .map(|&seed| {
                    let micro = session.problem.microstructure(seed)?;
                    match session.problem.estimate_micro(model, &micro, Some(session.config.s)) {
                        Ok((_, rep)) => {
                            let (lo, up) = rep.bounds.map_or((f64::NAN, f64::NAN), |b| (b.eta_low, b.eta_upp));
                            Ok([rep.eta_est, lo, up])
                        }
                        Err(Error::DegenerateCombination) => Ok([f64::NAN; 3]),
                        Err(e) => Err(e),
                    }
                })
                .collect::<std::result::Result<Vec<_>, Error>>()?;
            done.insert(model.clone(), rows);
        }
        let id = s.seq.models.len() - 1;
        for (i, r) in done[model].iter().enumerate() {
            table.push(vec![num(s.tol), id.to_string(), i.to_string(), num(r[0]), num(r[1]), num(r[2])]);
        }
    }
    table.write(&session.out.join("bounds.csv"))
}

/// `select-models`: pilot evaluations, model sequences and level plans.
pub fn cmd_select_models(config: ExperimentConfig, out: &Path) -> Result<Vec<Selection>> {
    let session = Session::open(config, out)?;
    let selections = session.select_all()?;
    write_selection_tables(&session, &selections)?;
    Ok(selections)
}

/// Reference value of the QoI mean with its standard error.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Reference {
    pub value: f64,
    /// Standard error from the spread of the repetitions.
    pub se: f64,
    /// Standard error from the per-level sample variances.
    pub se_pooled: f64,
    pub method: ReferenceMethod,
    pub tol: f64,
    pub repetitions: usize,
    pub estimates: Vec<f64>,
    /// Samples drawn per repetition, summed over levels.
    pub samples: Vec<u64>,
    pub master_seed: u64,
    pub pilot_samples: usize,
    pub problem: ProblemConfig,
}

impl Reference {
    fn matches(&self, config: &ExperimentConfig) -> bool {
        self.method == config.reference.method
            && self.repetitions == config.reference.repetitions
            && self.tol == config.smallest_tolerance() * config.reference.tol_factor
            && self.master_seed == config.master_seed
            && self.pilot_samples == config.pilot_samples
            && self.problem == config.problem
    }
}

fn read_reference(path: &Path) -> Result<Reference> {
    let text = fs::read_to_string(path).map_err(CliError::io(path))?;
    serde_json::from_str(&text).map_err(|e| CliError::data(path, e.to_string()))
}

fn compute_reference(session: &Session) -> Result<Reference> {
    let cfg = &session.config;
    let tol = cfg.smallest_tolerance() * cfg.reference.tol_factor;
    let reps = cfg.reference.repetitions;
    let master = child_master(cfg.master_seed, REFERENCE_TAG);
    let seed = |r: usize| derive_seed(master, 0, r as u64);
    let results: Vec<MlmcResult> = match cfg.reference.method {
        ReferenceMethod::PlainMc => {
            let fine = session.cache.get_or_eval(&session.problem, &ModelSpec::FineScale, false)?;
            session.save_pilot()?;
            (0..reps)
                .map(|r| {
                    eprintln!("[reference] plain MC repetition {}/{reps} at TOL={tol}", r + 1);
                    run_plain_mc(&session.problem, &ModelSpec::FineScale, &fine, tol, seed(r))
                })
                .collect::<std::result::Result<_, Error>>()?
        }
        ReferenceMethod::Mlmc => {
            let sel = session.select(tol, Some(BiasMode::ZeroBias))?;
            (0..reps)
                .map(|r| {
                    eprintln!("[reference] MLMC repetition {}/{reps} at TOL={tol}", r + 1);
                    run_mlmc(&session.problem, &sel.plan, seed(r), 0.0, SeedMode::PerLevel)
                })
                .collect::<std::result::Result<_, Error>>()?
        }
    };
    let estimates: Vec<f64> = results.iter().map(|r| r.estimate).collect();
    let n = reps as f64;
    let pooled: f64 = results
        .iter()
        .flat_map(|r| r.levels.iter().map(|l| l.v / l.m as f64))
        .sum();
    Ok(Reference {
        value: mean(&estimates),
        se: (variance(&estimates) / n).sqrt(),
        se_pooled: pooled.sqrt() / n,
        method: cfg.reference.method,
        tol,
        repetitions: reps,
        samples: results.iter().map(|r| r.levels.iter().map(|l| l.m).sum()).collect(),
        estimates,
        master_seed: cfg.master_seed,
        pilot_samples: cfg.pilot_samples,
        problem: cfg.problem.clone(),
    })
}

/// Reuses `reference.json` when it was computed for the same settings.
fn ensure_reference(session: &Session) -> Result<Reference> {
    let path = session.out.join(REFERENCE_FILE);
    if let Ok(r) = read_reference(&path) {
        if r.matches(&session.config) {
            eprintln!("[reference] reusing {}", path.display());
            return Ok(r);
        }
    }
    let r = compute_reference(session)?;
    let text = serde_json::to_string_pretty(&r).expect("reference serializes");
    fs::write(&path, text + "\n").map_err(CliError::io(&path))?;
    Ok(r)
}

/// `reference`: computes (or reuses) the reference value.
pub fn cmd_reference(config: ExperimentConfig, out: &Path) -> Result<Reference> {
    let session = Session::open(config, out)?;
    ensure_reference(&session)
}

/// Per-tolerance outcome of [`cmd_run`].
#[derive(Clone, Debug)]
pub struct RunOutcome {
    pub selections: Vec<Selection>,
    pub runs: Vec<Vec<MlmcResult>>,
    pub baseline: Vec<Vec<MlmcResult>>,
    pub reference: Reference,
    pub preprocessing_work: f64,
}

/// `run`: selection, repeated MLMC and plain Monte Carlo runs, the reference
/// value and the plot tables.
pub fn cmd_run(config: ExperimentConfig, out: &Path) -> Result<RunOutcome> {
    let session = Session::open(config, out)?;
    let cfg = session.config.clone();
    let selections = session.select_all()?;
    write_selection_tables(&session, &selections)?;
    let pre = session.preprocessing_work(&selections);

    let mut runs_t = Table::new(&["tol", "L", "rep", "estimate", "work_total", "work_preprocess"]);
    let mut levels_t = Table::new(&["tol", "L", "rep", "level", "model_id", "M_l", "V_l", "W_l"]);
    let mut base_t = Table::new(&["tol", "rep", "estimate", "work_total", "M"]);
    let mlmc_master = child_master(cfg.master_seed, MLMC_TAG);
    let mc_master = child_master(cfg.master_seed, MC_TAG);
    let mut all_runs = Vec::new();
    let mut all_base = Vec::new();
    for (t, s) in selections.iter().enumerate() {
        let nl = s.plan.models.len();
        let mut runs = Vec::with_capacity(cfg.repetitions);
        for rep in 0..cfg.repetitions {
            eprintln!("[TOL={}] MLMC repetition {}/{}", s.tol, rep + 1, cfg.repetitions);
            let r = run_mlmc(
                &session.problem,
                &s.plan,
                derive_seed(mlmc_master, t as u64, rep as u64),
                pre,
                SeedMode::PerLevel,
            )?;
            runs_t.push(vec![
                num(s.tol),
                nl.to_string(),
                rep.to_string(),
                num(r.estimate),
                num(r.work_total),
                num(r.work_preprocess),
            ]);
            for (l, lv) in r.levels.iter().enumerate() {
                levels_t.push(vec![
                    num(s.tol),
                    nl.to_string(),
                    rep.to_string(),
                    (l + 1).to_string(),
                    s.plan.positions[l].to_string(),
                    lv.m.to_string(),
                    num(lv.v),
                    num(lv.w),
                ]);
            }
            runs.push(r);
        }
        let mut base = Vec::new();
        for rep in 0..cfg.baseline_repetitions() {
            eprintln!("[TOL={}] plain MC repetition {}/{}", s.tol, rep + 1, cfg.baseline_repetitions());
            let r = run_plain_mc(
                &session.problem,
                &ModelSpec::FineScale,
                &s.seq.fine,
                s.tol,
                derive_seed(mc_master, t as u64, rep as u64),
            )?;
            base_t.push(vec![
                num(s.tol),
                rep.to_string(),
                num(r.estimate),
                num(r.work_total),
                r.levels[0].m.to_string(),
            ]);
            base.push(r);
        }
        all_runs.push(runs);
        all_base.push(base);
    }
    runs_t.write(&out.join("runs.csv"))?;
    levels_t.write(&out.join("levels.csv"))?;
    base_t.write(&out.join("baseline.csv"))?;

    let reference = ensure_reference(&session)?;
    write_summary(&session, &selections, pre)?;
    cmd_plot_data(out)?;
    Ok(RunOutcome {
        selections,
        runs: all_runs,
        baseline: all_base,
        reference,
        preprocessing_work: pre,
    })
}

fn write_summary(session: &Session, selections: &[Selection], pre: f64) -> Result<()> {
    let target = qoi_center(&session.config.problem.qoi);
    let per_tol: Vec<_> = selections
        .iter()
        .map(|s| {
            let last = &s.seq.last().model;
            let offset = last
                .refined_blocks()
                .and_then(|r| refined_centroid_offset(&session.problem.partition, r, target));
            json!({
                "tol": s.tol,
                "tol_bias_initial": s.initial.tol_bias,
                "tol_bias": s.seq.tol_bias,
                "exhausted": s.seq.exhausted,
                "sequence": s.seq.models.iter().map(|m| m.model.to_string()).collect::<Vec<_>>(),
                "last_surrogate": last.to_string(),
                "refined_blocks": last.refined_blocks().map(|r| r.iter().copied().collect::<Vec<_>>()).unwrap_or_default(),
                "L": s.plan.models.len(),
                "bias_mode": bias_mode_name(s.plan.bias_mode),
                "tol_stat": s.plan.split.tol_stat,
                "estimated_cost": s.plan.estimated_cost,
                "model_ids": s.plan.positions,
                "M": s.plan.m,
                "m_strictly_decreasing": strictly_decreasing(&s.plan.m),
                "centroid_offset_edges": offset,
            })
        })
        .collect();
    let doc = json!({ "preprocessing_work": pre, "tolerances": per_tol });
    let path = session.out.join("summary.json");
    let text = serde_json::to_string_pretty(&doc).expect("summary serializes");
    fs::write(&path, text + "\n").map_err(CliError::io(&path))
}

fn rmse(estimates: &[f64], reference: f64) -> f64 {
    let sq: Vec<f64> = estimates.iter().map(|e| (e - reference).powi(2)).collect();
    mean(&sq).sqrt()
}

/// `plot-data`: rebuilds `convergence.csv` and `blocks.csv` from the tables
/// of a finished run.
pub fn cmd_plot_data(out: &Path) -> Result<()> {
    let cfg_path = out.join(CONFIG_FILE);
    let text = fs::read_to_string(&cfg_path).map_err(CliError::io(&cfg_path))?;
    let cfg = config::parse(&text, None)?;
    let reference = read_reference(&out.join(REFERENCE_FILE))?;
    let runs = output::read(&out.join("runs.csv"), &["tol", "L", "estimate", "work_total"])?;
    let base = output::read(&out.join("baseline.csv"), &["tol", "estimate", "work_total"])?;
    let models = output::read(&out.join("models.csv"), &["tol", "model_id", "kind", "refined_blocks"])?;

    let mut conv = Table::new(&["method", "L", "tol", "rmse", "mean_work"]);
    for &tol in &cfg.tolerances {
        let rows: Vec<&Vec<String>> = runs.rows.iter().filter(|r| runs.f64(r, "tol") == tol).collect();
        if !rows.is_empty() {
            let est: Vec<f64> = rows.iter().map(|r| runs.f64(r, "estimate")).collect();
            let work: Vec<f64> = rows.iter().map(|r| runs.f64(r, "work_total")).collect();
            conv.push(vec![
                "mlmc".into(),
                runs.get(rows[0], "L").into(),
                num(tol),
                num(rmse(&est, reference.value)),
                num(mean(&work)),
            ]);
        }
        let rows: Vec<&Vec<String>> = base.rows.iter().filter(|r| base.f64(r, "tol") == tol).collect();
        if !rows.is_empty() {
            let est: Vec<f64> = rows.iter().map(|r| base.f64(r, "estimate")).collect();
            let work: Vec<f64> = rows.iter().map(|r| base.f64(r, "work_total")).collect();
            conv.push(vec![
                "mc".into(),
                "1".into(),
                num(tol),
                num(rmse(&est, reference.value)),
                num(mean(&work)),
            ]);
        }
    }
    conv.write(&out.join("convergence.csv"))?;

    let part = partition_blocks(&cfg.problem.domain, cfg.problem.block_edge)?;
    let mut blocks = Table::new(&["tol", "block_id", "x0", "y0", "x1", "y1", "refined"]);
    let models_path = out.join("models.csv");
    for &tol in &cfg.tolerances {
        let last = models
            .rows
            .iter()
            .filter(|r| models.f64(r, "tol") == tol && models.get(r, "kind") != "fine")
            .max_by_key(|r| models.get(r, "model_id").parse::<usize>().unwrap_or(0));
        let Some(last) = last else { continue };
        let refined: BTreeSet<usize> = models
            .get(last, "refined_blocks")
            .split_whitespace()
            .map(|b| b.parse().map_err(|_| CliError::data(&models_path, format!("bad block id {b:?}"))))
            .collect::<Result<_>>()?;
        for b in &part.blocks {
            let r = &b.rect;
            blocks.push(vec![
                num(tol),
                b.id.to_string(),
                num(r.x0),
                num(r.y0),
                num(r.x1),
                num(r.y1),
                u8::from(refined.contains(&b.id)).to_string(),
            ]);
        }
    }
    blocks.write(&out.join("blocks.csv"))
}
