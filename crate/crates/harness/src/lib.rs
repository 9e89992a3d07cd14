// SPDX-License-Identifier: MIT OR Apache-2.0

//! Experiment runner: resolves a recipe or config file into datasets,
//! trained checkpoints, evaluation logs and intervention grids under one
//! output directory with a manifest.
//!
//! Output layout:
//!
//! ```text
//! config.json            resolved configuration
//! data/                  train/dev/test JSONL and vocab.json
//! runs/{run}/            spec.json, checkpoint.json, log.jsonl, record.json
//! registry.jsonl         one record per run, best run of each cell flagged
//! eval.jsonl             dev and test metrics of best runs
//! interventions/{run}.jsonl
//! labels.jsonl           mechanism label per best run
//! mixer_output_query.jsonl
//! summary.csv
//! manifest.json
//! ```

pub mod analyze;
pub mod config;
pub mod data;
pub mod manifest;
pub mod recipes;
pub mod sweep;

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Result};
use mechrecall::tasks::Splits;
use rayon::prelude::*;
use serde_json::json;

use analyze::{EvalLine, LabelLine};
pub use config::{ExperimentConfig, Scale};
pub use manifest::Manifest;
use sweep::SweepSummary;

pub const OUT_ENV: &str = "MECHRECALL_OUT";
pub const CACHE_ENV: &str = "MECHRECALL_CACHE";

pub struct Experiment {
    pub config: ExperimentConfig,
    pub out: PathBuf,
    pub workers: usize,
    /// Shared store of finished runs keyed by content digest.
    pub cache: Option<PathBuf>,
}

impl Experiment {
    /// Output directory from the config, else `$MECHRECALL_OUT/{name}-{scale}`.
    pub fn new(config: ExperimentConfig) -> Self {
        let out = config.output_dir.clone().unwrap_or_else(|| {
            let root =
                std::env::var_os(OUT_ENV).map_or_else(|| PathBuf::from("out"), PathBuf::from);
            let scale = serde_json::to_value(config.scale).expect("scale serializes");
            root.join(format!(
                "{}-{}",
                config.name,
                scale.as_str().unwrap_or("custom")
            ))
        });
        Self {
            config,
            out,
            workers: 1,
            cache: std::env::var_os(CACHE_ENV).map(PathBuf::from),
        }
    }

    fn prepare(&self) -> Result<()> {
        fs::create_dir_all(&self.out)?;
        let mut c = self.config.clone();
        c.output_dir = None;
        fs::write(
            self.out.join("config.json"),
            serde_json::to_string_pretty(&c)? + "\n",
        )?;
        Ok(())
    }

    fn data_dir(&self) -> PathBuf {
        self.out.join("data")
    }

    /// Generate the dataset, or reuse the one on disk if it came from the same task and seed.
    pub fn gen(&self) -> Result<Splits> {
        self.prepare()?;
        let dir = self.data_dir();
        let source = serde_json::to_string_pretty(
            &json!({"task": self.config.task, "seed": self.config.seed}),
        )? + "\n";
        let source_path = dir.join("source.json");
        if fs::read_to_string(&source_path).ok().as_deref() == Some(source.as_str()) {
            return data::load(&dir);
        }
        let splits = data::generate(&self.config.task, self.config.seed)?;
        data::save(&dir, &splits)?;
        fs::write(source_path, source)?;
        Ok(splits)
    }

    pub fn plan(&self, data: &Splits) -> Result<Vec<sweep::RunSpec>> {
        sweep::plan(&self.config, data.vocab.total_size)
    }

    /// Train every run of the grid, skipping finished ones.
    pub fn train(&self) -> Result<SweepSummary> {
        let data = self.gen()?;
        let specs = self.plan(&data)?;
        sweep::sweep(
            &specs,
            &data,
            self.config.task.name(),
            &self.out,
            self.workers,
            self.cache.as_deref(),
        )
    }

    pub fn eval(&self) -> Result<Vec<EvalLine>> {
        let data = self.gen()?;
        let runs = sweep::load_runs(&self.out)?;
        let best = analyze::best_runs(&runs);
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(self.workers.max(1))
            .build()?;
        let lines: Vec<Vec<EvalLine>> = pool.install(|| {
            best.par_iter()
                .map(|(r, _)| analyze::eval_run(&self.out, r, &data))
                .collect::<Result<_>>()
        })?;
        let lines: Vec<EvalLine> = lines.into_iter().flatten().collect();
        analyze::write_jsonl(&self.out.join("eval.jsonl"), &lines)?;
        Ok(lines)
    }

    pub fn intervene(&self) -> Result<Vec<LabelLine>> {
        let data = self.gen()?;
        let runs = sweep::load_runs(&self.out)?;
        let best = analyze::best_runs(&runs);
        let expected = recipes::find(&self.config.name)
            .map(|r| (r.expected)())
            .unwrap_or_default();
        let iv = &self.config.intervention;
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(self.workers.max(1))
            .build()?;
        let results: Vec<analyze::RunAnalysis> = pool.install(|| {
            best.par_iter()
                .map(|(r, s)| {
                    analyze::intervene_run(
                        &self.out,
                        r,
                        s,
                        &data,
                        iv.n_examples,
                        self.config.seed,
                        iv.classify_layer,
                        iv.mixer_output_query,
                        &expected,
                    )
                })
                .collect::<Result<_>>()
        })?;
        let dir = self.out.join("interventions");
        fs::create_dir_all(&dir)?;
        let mut mixer_out = Vec::new();
        for a in &results {
            fs::write(dir.join(format!("{}.jsonl", a.label.run)), &a.grid_jsonl)?;
            mixer_out.extend_from_slice(&a.mixer_output_jsonl);
        }
        if iv.mixer_output_query {
            fs::write(self.out.join("mixer_output_query.jsonl"), mixer_out)?;
        }
        let labels: Vec<LabelLine> = results.into_iter().map(|a| a.label).collect();
        analyze::write_jsonl(&self.out.join("labels.jsonl"), &labels)?;
        Ok(labels)
    }

    /// `summary.csv`: one row per cell with its best run, metrics and label.
    pub fn report(&self) -> Result<String> {
        let runs = sweep::load_runs(&self.out)?;
        let evals: Vec<EvalLine> = read_optional(&self.out.join("eval.jsonl"))?;
        let labels: Vec<LabelLine> = read_optional(&self.out.join("labels.jsonl"))?;
        let metric: BTreeMap<(&str, &str), &EvalLine> = evals
            .iter()
            .map(|e| ((e.run.as_str(), e.split.as_str()), e))
            .collect();
        let label: BTreeMap<&str, &LabelLine> =
            labels.iter().map(|l| (l.run.as_str(), l)).collect();
        let mut csv = String::from(
            "cell,run,mixer,variant,d_model,n_layers,seed,lr,dev_accuracy,dev_likelihood,test_accuracy,test_likelihood,label\n",
        );
        let mut cells: BTreeMap<&str, Option<&(mechrecall::trainer::RunRecord, sweep::RunSpec)>> =
            BTreeMap::new();
        for rs in &runs {
            let e = cells.entry(rs.0.cell.as_str()).or_insert(None);
            if rs.0.best {
                *e = Some(rs);
            }
        }
        let opt = |x: Option<f64>| x.map_or(String::new(), |v| v.to_string());
        for (cell, best) in cells {
            let Some((r, s)) = best else {
                writeln!(csv, "{cell},,,,,,,,,,,,failed")?;
                continue;
            };
            let test = metric.get(&(r.run.as_str(), "test"));
            writeln!(
                csv,
                "{cell},{},{},{},{},{},{},{},{},{},{},{},{}",
                r.run,
                s.mixer,
                s.variant,
                s.d_model,
                s.n_layers,
                r.seed,
                r.lr,
                r.dev_accuracy,
                r.dev_likelihood,
                opt(test.map(|e| e.accuracy)),
                opt(test.map(|e| e.likelihood)),
                label.get(r.run.as_str()).map_or("", |l| l.label.name()),
            )?;
        }
        fs::write(self.out.join("summary.csv"), &csv)?;
        Ok(csv)
    }

    /// Data, training, evaluation, interventions and the summary, in order.
    pub fn sweep(&self) -> Result<SweepSummary> {
        let s = self.train()?;
        if s.records.iter().all(|r| !r.best) {
            bail!("every run failed; nothing to evaluate");
        }
        self.eval()?;
        self.intervene()?;
        self.report()?;
        Ok(s)
    }

    pub fn write_manifest(&self) -> Result<Manifest> {
        manifest::write_manifest(&self.out, &self.config)
    }
}

fn read_optional<S: for<'de> serde::Deserialize<'de>>(path: &Path) -> Result<Vec<S>> {
    if path.exists() {
        analyze::read_jsonl(path)
    } else {
        Ok(Vec::new())
    }
}
