//! Command workflows behind the `saferl` binary. Every command writes its
//! outputs into one directory together with `manifest.json`, which records
//! the configuration, its hash, the seed and the files produced. Nothing
//! time- or host-dependent is written, so reruns are byte-identical.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::agent::{evaluate_greedy, EpisodeMetrics, GreedyPolicy, Trainer};
use crate::config::{Config, SafetyMode};
use crate::error::{Error, Result};
use crate::lookahead::{collect_dataset, make_windows, train_predictor, DrivingDataset, Predictor};
use crate::neural::checkpoint::{load_mlp, load_rnn, save_mlp, save_rnn};
use crate::neural::Mlp;
use crate::seeding::stream;

pub const MANIFEST: &str = "manifest.json";
pub const TRAINING_CSV: &str = "training.csv";
pub const PARTIAL_EVAL_CSV: &str = "partial_eval.csv";
pub const EVAL_CSV: &str = "eval.csv";
pub const DATASET_CSV: &str = "dataset.csv";
pub const PREDICTOR_FILE: &str = "predictor.bin";
pub const ONLINE_FILE: &str = "online.bin";
pub const TARGET_FILE: &str = "target.bin";
pub const LEARNING_CURVES_CSV: &str = "learning_curves.csv";
pub const COLLISIONS_CSV: &str = "collisions.csv";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    /// Variant name for training runs, policy label for evaluations.
    pub label: String,
    pub seed: u64,
    pub config_hash: String,
    pub config: Config,
    /// Input files as given on the command line.
    pub inputs: BTreeMap<String, String>,
    /// Files written next to the manifest.
    pub outputs: Vec<String>,
    pub details: serde_json::Value,
}

impl RunManifest {
    fn new(command: &str, label: &str, seed: u64, cfg: &Config) -> Self {
        Self {
            command: command.into(),
            label: label.into(),
            seed,
            config_hash: cfg.content_hash(),
            config: cfg.clone(),
            inputs: BTreeMap::new(),
            outputs: Vec::new(),
            details: serde_json::Value::Null,
        }
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let path = dir.join(MANIFEST);
        if !path.is_file() {
            return Err(Error::MissingManifest(path));
        }
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        serde_json::from_str(&text).map_err(|source| Error::Json { path, source })
    }

    fn write(&self, dir: &Path) -> Result<()> {
        let path = dir.join(MANIFEST);
        let mut text = serde_json::to_string_pretty(self).map_err(|source| Error::Json {
            path: path.clone(),
            source,
        })?;
        text.push('\n');
        fs::write(&path, text).map_err(|e| Error::io(&path, e))
    }
}

fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn write_rows<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::csv(path, e))?;
    for r in rows {
        w.serialize(r).map_err(|e| Error::csv(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn read_rows<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| Error::csv(path, e))?;
    r.deserialize()
        .collect::<std::result::Result<Vec<T>, _>>()
        .map_err(|e| Error::csv(path, e))
}

fn path_string(p: &Path) -> String {
    p.display().to_string()
}

/// One line of `training.csv`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingRow {
    pub episode: usize,
    pub cumulative_reward: f64,
    pub steps: usize,
    pub collided: bool,
    pub traffic: usize,
    pub safe_buffer: usize,
    pub collision_buffer: usize,
    pub epsilon: f64,
    pub safety: SafetyMode,
    pub handcraft_violations: usize,
    pub dynamic_penalties: usize,
    pub collision_fallback_batches: usize,
    pub gradient_steps: u64,
    pub mean_loss: f64,
}

/// One line of `partial_eval.csv`: greedy rollouts after `episode`
/// training episodes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartialEvalRow {
    pub episode: usize,
    pub episodes_run: usize,
    pub mean_cumulative_reward: f64,
    pub collisions: usize,
    pub mean_steps: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOptions {
    pub variant: SafetyMode,
    pub seed: u64,
    /// Overrides `agent.episodes`.
    pub episodes: Option<usize>,
    /// Predictor checkpoint, required by the `both` variant.
    pub predictor: Option<PathBuf>,
    pub out: PathBuf,
}

#[derive(Debug, Clone)]
pub struct TrainSummary {
    pub partial_evals: Vec<PartialEvalRow>,
    pub online: PathBuf,
    pub manifest: RunManifest,
}

pub fn cmd_train(cfg: &Config, opts: &TrainOptions) -> Result<TrainSummary> {
    let mut cfg = cfg.clone();
    cfg.agent.safety = opts.variant;
    if let Some(n) = opts.episodes {
        cfg.agent.episodes = n;
    }
    cfg.validate()?;
    let mut manifest = RunManifest::new("train", opts.variant.name(), opts.seed, &cfg);
    let predictor = match (&opts.predictor, opts.variant.dynamic()) {
        (Some(p), true) => {
            manifest.inputs.insert("predictor".into(), path_string(p));
            Some(Predictor::new(load_rnn(p)?.0)?)
        }
        (None, true) => {
            return Err(Error::contract("variant `both` needs --predictor"));
        }
        _ => None,
    };
    ensure_dir(&opts.out)?;
    let ckpt_dir = opts.out.join("checkpoints");
    let mut trainer = Trainer::new(&cfg, opts.seed, predictor)?;

    let mut rows = Vec::with_capacity(cfg.agent.episodes);
    let mut partial = Vec::new();
    let mut checkpoints = Vec::new();
    for e in 0..cfg.agent.episodes {
        let m = trainer.run_episode(e)?;
        rows.push(TrainingRow {
            episode: e,
            cumulative_reward: m.cumulative_reward,
            steps: m.steps,
            collided: m.collided,
            traffic: m.traffic,
            safe_buffer: trainer.safe.len(),
            collision_buffer: trainer.collision.len(),
            epsilon: crate::agent::epsilon_at(e, &cfg.agent),
            safety: opts.variant,
            handcraft_violations: m.handcraft_violations,
            dynamic_penalties: m.dynamic_penalties,
            collision_fallback_batches: m.collision_fallback_batches,
            gradient_steps: trainer.gradient_steps,
            mean_loss: m.mean_loss,
        });
        let done = e + 1;
        if done % cfg.agent.partial_eval_period == 0 {
            partial.push(summarize_partial(done, &trainer.partial_evaluation()?));
        }
        if done % cfg.agent.checkpoint_period == 0 {
            let name = format!("checkpoints/online_{done:05}.bin");
            save_mlp(&ckpt_dir.join(format!("online_{done:05}.bin")), &trainer.online, "online")?;
            save_mlp(&ckpt_dir.join(format!("target_{done:05}.bin")), &trainer.target, "target")?;
            checkpoints.push(name);
        }
    }

    let online = opts.out.join(ONLINE_FILE);
    save_mlp(&online, &trainer.online, "online")?;
    save_mlp(&opts.out.join(TARGET_FILE), &trainer.target, "target")?;
    write_rows(&opts.out.join(TRAINING_CSV), &rows)?;
    write_rows(&opts.out.join(PARTIAL_EVAL_CSV), &partial)?;
    manifest.outputs = vec![
        TRAINING_CSV.into(),
        PARTIAL_EVAL_CSV.into(),
        ONLINE_FILE.into(),
        TARGET_FILE.into(),
    ];
    manifest.outputs.extend(checkpoints.iter().flat_map(|c| [c.clone(), c.replace("online_", "target_")]));
    manifest.details = serde_json::json!({
        "episodes": cfg.agent.episodes,
        "gradient_steps": trainer.gradient_steps,
        "target_syncs": trainer.target_syncs,
        "safe_buffer": trainer.safe.len(),
        "collision_buffer": trainer.collision.len(),
        "training_collisions": rows.iter().filter(|r| r.collided).count(),
    });
    manifest.write(&opts.out)?;
    Ok(TrainSummary {
        partial_evals: partial,
        online,
        manifest,
    })
}

fn summarize_partial(episode: usize, ms: &[EpisodeMetrics]) -> PartialEvalRow {
    let n = ms.len().max(1) as f64;
    PartialEvalRow {
        episode,
        episodes_run: ms.len(),
        mean_cumulative_reward: ms.iter().map(|m| m.cumulative_reward).sum::<f64>() / n,
        collisions: ms.iter().filter(|m| m.collided).count(),
        mean_steps: ms.iter().map(|m| m.steps as f64).sum::<f64>() / n,
    }
}

/// One density bucket of an evaluation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRow {
    pub density: usize,
    pub episodes: usize,
    pub collisions: usize,
    pub mean_cumulative_reward: f64,
    pub mean_steps: f64,
    pub handcraft_violations: usize,
    pub vetoes: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub label: String,
    pub rows: Vec<EvalRow>,
}

impl EvalReport {
    pub fn total_collisions(&self) -> usize {
        self.rows.iter().map(|r| r.collisions).sum()
    }

    pub fn collisions_at(&self, density: usize) -> Option<usize> {
        self.rows.iter().find(|r| r.density == density).map(|r| r.collisions)
    }
}

#[derive(Debug, Clone)]
pub struct EvalOptions {
    pub checkpoint: PathBuf,
    pub episodes: Option<usize>,
    pub densities: Option<Vec<usize>>,
    pub seed: u64,
    /// Predictor checkpoint; enables the lookahead veto.
    pub predictor: Option<PathBuf>,
    /// Policy name in reports; defaults to the training run's variant.
    pub label: Option<String>,
    pub out: PathBuf,
}

/// Frozen greedy policy behind the handcrafted filter, swept over traffic
/// densities. Never updates the network.
pub fn cmd_evaluate(cfg: &Config, opts: &EvalOptions) -> Result<EvalReport> {
    let mut cfg = cfg.clone();
    if let Some(n) = opts.episodes {
        cfg.eval.episodes = n;
    }
    if let Some(d) = &opts.densities {
        cfg.eval.densities = d.clone();
    }
    cfg.validate()?;
    let (net, _) = load_mlp(&opts.checkpoint)?;
    let predictor = opts
        .predictor
        .as_ref()
        .map(|p| Predictor::new(load_rnn(p)?.0))
        .transpose()?;
    let label = match &opts.label {
        Some(l) => l.clone(),
        None => default_label(&opts.checkpoint),
    };
    let report = evaluate_policy(&net, predictor.as_ref(), &cfg, opts.seed, &label)?;

    ensure_dir(&opts.out)?;
    write_rows(&opts.out.join(EVAL_CSV), &report.rows)?;
    let mut manifest = RunManifest::new("evaluate", &label, opts.seed, &cfg);
    manifest.inputs.insert("checkpoint".into(), path_string(&opts.checkpoint));
    if let Some(p) = &opts.predictor {
        manifest.inputs.insert("predictor".into(), path_string(p));
    }
    manifest.outputs = vec![EVAL_CSV.into()];
    manifest.details = serde_json::json!({
        "veto": predictor.is_some(),
        "total_collisions": report.total_collisions(),
    });
    manifest.write(&opts.out)?;
    Ok(report)
}

/// The variant recorded next to a training checkpoint, else the file stem.
fn default_label(checkpoint: &Path) -> String {
    let dirs = checkpoint.ancestors().skip(1).take(2);
    for dir in dirs {
        if let Ok(m) = RunManifest::load(dir) {
            if m.command == "train" {
                return m.label;
            }
        }
    }
    checkpoint
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "policy".into())
}

pub fn evaluate_policy(
    net: &Mlp,
    predictor: Option<&Predictor>,
    cfg: &Config,
    seed: u64,
    label: &str,
) -> Result<EvalReport> {
    let policy = GreedyPolicy {
        net,
        filter: true,
        veto: predictor,
    };
    let mut rows = Vec::with_capacity(cfg.eval.densities.len());
    for &d in &cfg.eval.densities {
        let ms = evaluate_greedy(&policy, cfg, Some(d), cfg.eval.episodes, seed, stream::EVAL)?;
        let n = ms.len().max(1) as f64;
        rows.push(EvalRow {
            density: d,
            episodes: ms.len(),
            collisions: ms.iter().filter(|m| m.collided).count(),
            mean_cumulative_reward: ms.iter().map(|m| m.cumulative_reward).sum::<f64>() / n,
            mean_steps: ms.iter().map(|m| m.steps as f64).sum::<f64>() / n,
            handcraft_violations: ms.iter().map(|m| m.handcraft_violations).sum(),
            vetoes: ms.iter().map(|m| m.vetoes).sum(),
        });
    }
    Ok(EvalReport {
        label: label.into(),
        rows,
    })
}

#[derive(Debug, Clone)]
pub struct CollectOptions {
    pub checkpoint: PathBuf,
    pub episodes: Option<usize>,
    pub seed: u64,
    pub out: PathBuf,
}

pub fn cmd_collect(cfg: &Config, opts: &CollectOptions) -> Result<DrivingDataset> {
    let mut cfg = cfg.clone();
    if let Some(n) = opts.episodes {
        cfg.predictor.collect_episodes = n;
    }
    cfg.validate()?;
    let (net, _) = load_mlp(&opts.checkpoint)?;
    let data = collect_dataset(&net, &cfg, cfg.predictor.collect_episodes, opts.seed)?;
    ensure_dir(&opts.out)?;
    data.write_csv(&opts.out.join(DATASET_CSV))?;
    let mut manifest = RunManifest::new("collect", "dataset", opts.seed, &cfg);
    manifest.inputs.insert("checkpoint".into(), path_string(&opts.checkpoint));
    manifest.outputs = vec![DATASET_CSV.into()];
    manifest.details = serde_json::json!({
        "episodes": data.episodes.len(),
        "pairs": data.total_pairs(),
        "episode_lengths": data.episodes.iter().map(|e| e.len()).collect::<Vec<_>>(),
    });
    manifest.write(&opts.out)?;
    Ok(data)
}

#[derive(Debug, Clone)]
pub struct TrainRnnOptions {
    pub data: PathBuf,
    pub seed: u64,
    pub out: PathBuf,
}

pub fn cmd_train_rnn(cfg: &Config, opts: &TrainRnnOptions) -> Result<(Predictor, crate::lookahead::PredictorReport)> {
    cfg.validate()?;
    let data = DrivingDataset::read_csv(&opts.data)?;
    let windows = make_windows(&data, cfg.predictor.history, cfg.predictor.horizon, &cfg.episode);
    let (pred, report) = train_predictor(&windows, &cfg.predictor, opts.seed)?;
    ensure_dir(&opts.out)?;
    save_rnn(&opts.out.join(PREDICTOR_FILE), &pred.rnn, "predictor")?;
    let mut manifest = RunManifest::new("train-rnn", "predictor", opts.seed, cfg);
    manifest.inputs.insert("data".into(), path_string(&opts.data));
    manifest.outputs = vec![PREDICTOR_FILE.into()];
    manifest.details = serde_json::json!({
        "windows": windows.len(),
        "report": report,
    });
    manifest.write(&opts.out)?;
    Ok((pred, report))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveRow {
    pub variant: String,
    pub seed: u64,
    pub run: String,
    pub episode: usize,
    pub mean_cumulative_reward: f64,
    pub collisions: usize,
}

/// Directories holding a manifest: `root` itself, or each of its
/// subdirectories (which must then all carry one).
fn run_dirs(root: &Path) -> Result<Vec<PathBuf>> {
    if root.join(MANIFEST).is_file() {
        return Ok(vec![root.to_path_buf()]);
    }
    let entries = fs::read_dir(root).map_err(|e| Error::io(root, e))?;
    let mut dirs = Vec::new();
    for entry in entries {
        let entry = entry.map_err(|e| Error::io(root, e))?;
        if entry.path().is_dir() {
            dirs.push(entry.path());
        }
    }
    dirs.sort();
    if dirs.is_empty() {
        return Err(Error::MissingManifest(root.join(MANIFEST)));
    }
    for d in &dirs {
        if !d.join(MANIFEST).is_file() {
            return Err(Error::MissingManifest(d.join(MANIFEST)));
        }
    }
    Ok(dirs)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExportSummary {
    pub series: usize,
    pub policies: Vec<String>,
}

/// Merges the runs under `root` into `learning_curves.csv` (one row per
/// partial evaluation, keyed by variant and seed) and `collisions.csv`
/// (one row per density, one column per evaluated policy).
pub fn cmd_export(root: &Path, out: &Path) -> Result<ExportSummary> {
    let mut curves = Vec::new();
    let mut series = 0;
    let mut tables: Vec<(String, Vec<EvalRow>)> = Vec::new();
    for dir in run_dirs(root)? {
        let m = RunManifest::load(&dir)?;
        let run = dir
            .file_name()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default();
        match m.command.as_str() {
            "train" => {
                series += 1;
                let rows: Vec<PartialEvalRow> = read_rows(&dir.join(PARTIAL_EVAL_CSV))?;
                curves.extend(rows.into_iter().map(|r| CurveRow {
                    variant: m.label.clone(),
                    seed: m.seed,
                    run: run.clone(),
                    episode: r.episode,
                    mean_cumulative_reward: r.mean_cumulative_reward,
                    collisions: r.collisions,
                }));
            }
            "evaluate" => {
                let rows: Vec<EvalRow> = read_rows(&dir.join(EVAL_CSV))?;
                let mut label = m.label.clone();
                if tables.iter().any(|(l, _)| *l == label) {
                    label = format!("{label}:{run}");
                }
                tables.push((label, rows));
            }
            _ => {}
        }
    }
    ensure_dir(out)?;
    write_rows(&out.join(LEARNING_CURVES_CSV), &curves)?;

    let mut densities: Vec<usize> = tables.iter().flat_map(|(_, r)| r.iter().map(|r| r.density)).collect();
    densities.sort_unstable();
    densities.dedup();
    let path = out.join(COLLISIONS_CSV);
    let mut w = csv::Writer::from_path(&path).map_err(|e| Error::csv(&path, e))?;
    let mut header = vec!["density".to_string()];
    header.extend(tables.iter().map(|(l, _)| l.clone()));
    w.write_record(&header).map_err(|e| Error::csv(&path, e))?;
    for d in densities {
        let mut row = vec![d.to_string()];
        for (_, rows) in &tables {
            row.push(
                rows.iter()
                    .find(|r| r.density == d)
                    .map(|r| r.collisions.to_string())
                    .unwrap_or_default(),
            );
        }
        w.write_record(&row).map_err(|e| Error::csv(&path, e))?;
    }
    w.flush().map_err(|e| Error::io(&path, e))?;
    Ok(ExportSummary {
        series,
        policies: tables.into_iter().map(|(l, _)| l).collect(),
    })
}
