use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use serde::Serialize;

use semtrack::data::{self, generate_synthetic, plan_dataset, write_results, write_sequence};
use semtrack::eval::{
    attribute_report, curve_csv, default_grid, mean_curve, overlap_series, success_curve, AttributeRow,
};
use semtrack::persist::{load_model, save_model};
use semtrack::seed::{stage_rng, stage_seed};
use semtrack::track::{mean_iou, track_sequence, InitReport, FrameResult, TrackConfig};
use semtrack::train::train_offline;

use crate::config::RunConfig;
use crate::Shared;

pub const MODEL_FILE: &str = "model.bin";
pub const TRAIN_REPORT: &str = "train_report.json";
pub const EVAL_REPORT: &str = "report.json";
pub const CURVE_FILE: &str = "curve.csv";

fn resolve(shared: &Shared) -> Result<RunConfig> {
    let mut cfg = RunConfig::load(shared.config.as_deref())?;
    if let Some(seed) = shared.seed {
        cfg.seed = seed;
    }
    cfg.track.no_adapt |= shared.no_adapt;
    cfg.track.no_netc |= shared.no_netc;
    if shared.branch_override.is_some() {
        cfg.track.branch_override = shared.branch_override.clone();
    }
    cfg.gen.seed = stage_seed(cfg.seed, "gen");
    cfg.train.seed = stage_seed(cfg.seed, "train");
    Ok(cfg)
}

fn out_dir(shared: &Shared) -> Result<PathBuf> {
    let out = shared.out.clone().ok_or_else(|| anyhow!("--out is required"))?;
    fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
    Ok(out)
}

/// `dir/<split>` when it exists, else `dir`.
fn split_dir(dir: &Path, split: &str) -> PathBuf {
    let sub = dir.join(split);
    if sub.is_dir() {
        sub
    } else {
        dir.to_path_buf()
    }
}

fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn seq_name(dir: &Path) -> String {
    dir.file_name().and_then(|n| n.to_str()).unwrap_or_default().to_string()
}

pub fn gen(shared: &Shared) -> Result<usize> {
    let cfg = resolve(shared)?;
    let out = out_dir(shared)?;
    let plan = plan_dataset(&cfg.gen)?;
    for (split, spec) in &plan {
        let seq = generate_synthetic(spec)?;
        write_sequence(&seq, &out.join(split.dir_name()).join(&seq.name))?;
    }
    fs::write(out.join("dataset.json"), serde_json::to_string_pretty(&cfg.gen)?)?;
    log::info!("wrote {} sequences to {}", plan.len(), out.display());
    Ok(0)
}

pub fn train(shared: &Shared, data_dir: &Path) -> Result<usize> {
    let cfg = resolve(shared)?;
    let root = split_dir(data_dir, "train");
    let dirs = data::list_sequences(&root)?;
    if dirs.is_empty() {
        bail!("no sequences under {}", root.display());
    }
    let seqs = dirs
        .iter()
        .map(|d| data::load_sequence(d))
        .collect::<semtrack::Result<Vec<_>>>()?;
    let out = out_dir(shared)?;
    let (model, report) = train_offline(&seqs, &cfg.train)?;
    save_model(&model, &out.join(MODEL_FILE))?;
    write_json(&report, &out.join(TRAIN_REPORT))?;
    log::info!(
        "NetC holdout accuracy {:?}; model written to {}",
        report.netc.holdout_accuracy,
        out.join(MODEL_FILE).display()
    );
    Ok(0)
}

#[derive(Serialize)]
struct TrackDiagnostics<'a> {
    sequence: &'a str,
    config: &'a TrackConfig,
    init: &'a InitReport,
    frames: &'a [FrameResult],
}

pub fn track(shared: &Shared, model_path: &Path, data_dir: &Path) -> Result<usize> {
    let cfg = resolve(shared)?;
    let model = load_model(model_path)?;
    let root = split_dir(data_dir, "test");
    let dirs = data::list_sequences(&root)?;
    if dirs.is_empty() {
        bail!("no sequences under {}", root.display());
    }
    let out = out_dir(shared)?;
    let track_seed = stage_seed(cfg.seed, "track");
    let mut errors = 0;
    for dir in &dirs {
        let name = seq_name(dir);
        let seq = match data::load_sequence(dir) {
            Ok(s) => s,
            Err(e) => {
                log::error!("{name}: {e}");
                errors += 1;
                continue;
            }
        };
        let mut rng = stage_rng(track_seed, &name);
        let run = match track_sequence(&model, &seq.frames, seq.gt[0], &cfg.track, &mut rng) {
            Ok(r) => r,
            Err(e) => {
                log::error!("{name}: initialization failed: {e}");
                errors += 1;
                continue;
            }
        };
        let frame_errors = run.frames.iter().filter(|f| f.error.is_some()).count();
        errors += frame_errors;
        let estimates = run.estimates(seq.gt[0]);
        write_results(&name, &estimates, &out.join(format!("{name}.txt")))?;
        let diag = TrackDiagnostics {
            sequence: &name,
            config: &cfg.track,
            init: &run.init,
            frames: &run.frames,
        };
        write_json(&diag, &out.join(format!("{name}.json")))?;
        log::info!(
            "{name}: branch {}, mean IoU {:.3}, {} lost frames, {frame_errors} frame errors",
            run.init.active_category,
            mean_iou(&estimates, &seq.gt),
            run.frames.iter().filter(|f| f.lost).count()
        );
    }
    Ok(errors)
}

#[derive(Serialize)]
struct SequenceScore {
    frames: usize,
    auc: f64,
    mean_iou: f64,
    tags: Vec<String>,
}

#[derive(Serialize)]
struct EvalReport {
    overall_auc: f64,
    mean_iou: f64,
    sequences: BTreeMap<String, SequenceScore>,
    /// Only tags carried by at least one evaluated sequence.
    attributes: BTreeMap<String, AttributeRow>,
    missing: Vec<String>,
}

pub fn eval(shared: &Shared, results: &Path, data_dir: &Path) -> Result<usize> {
    let root = split_dir(data_dir, "test");
    let dirs = data::list_sequences(&root)?;
    if dirs.is_empty() {
        bail!("no sequences under {}", root.display());
    }
    let tags = data::read_tags(&root)?;
    let grid = default_grid();
    let mut curves = BTreeMap::new();
    let mut sequences = BTreeMap::new();
    let mut missing = Vec::new();
    for dir in &dirs {
        let name = seq_name(dir);
        let result_path = results.join(format!("{name}.txt"));
        if !result_path.is_file() {
            log::error!("{name}: no result file {}", result_path.display());
            missing.push(name);
            continue;
        }
        let gt = data::read_boxes(&dir.join(data::GT_FILE))?;
        let pred = data::read_boxes(&result_path)?;
        let overlaps = overlap_series(&pred, &gt).with_context(|| format!("sequence {name}"))?;
        let curve = success_curve(&overlaps, &grid)?;
        sequences.insert(
            name.clone(),
            SequenceScore {
                frames: gt.len(),
                auc: curve.auc,
                mean_iou: overlaps.iter().sum::<f64>() / overlaps.len() as f64,
                tags: tags.get(&name).cloned().unwrap_or_default(),
            },
        );
        curves.insert(name, curve);
    }
    if curves.is_empty() {
        bail!("no result files found in {}", results.display());
    }
    let attrs = attribute_report(&curves, &tags)?;
    let report = EvalReport {
        overall_auc: attrs.overall_auc,
        mean_iou: sequences.values().map(|s| s.mean_iou).sum::<f64>() / sequences.len() as f64,
        attributes: attrs
            .attributes
            .into_iter()
            .filter(|(_, r)| r.mean_auc.is_some())
            .collect(),
        sequences,
        missing,
    };
    let out = out_dir(shared)?;
    write_json(&report, &out.join(EVAL_REPORT))?;
    fs::write(out.join(CURVE_FILE), curve_csv(&mean_curve(curves.values())?))?;
    log::info!("overall AUC {:.4} over {} sequences", report.overall_auc, curves.len());
    Ok(report.missing.len())
}
