//! Offline training: dataset preparation from labelled sequences, a trunk
//! bootstrap, NetC training and per-category NetT branch training.
//!
//! The trunk learns only during the bootstrap, where it is trained jointly
//! with NetC on category crops. After that it is frozen and every later
//! stage trains on cached trunk features.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::Sequence;
use crate::error::{Error, Result};
use crate::net::{build_model, CategoryLabel, ModelBundle, ModelConfig, BACKGROUND, CATEGORY_X, FOREGROUND};
use crate::nn::{softmax_cross_entropy, Momentum, Sequential};
use crate::regions::{crop_batch, sample_by_overlap, BBox, SampleSpec};
use crate::seed::stage_rng;
use crate::tensor::Tensor;

/// Per-frame sample counts and overlap windows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Recipe {
    /// Boxes with IoU ≥ `positive_min_iou`, used by NetC and as NetT positives.
    pub positives: usize,
    /// Boxes with IoU ≤ `negative_max_iou`, NetT background samples.
    pub negatives: usize,
    /// How many of each frame's negatives NetC also sees, labelled category X.
    pub netc_negatives: usize,
    pub positive_min_iou: f64,
    pub negative_max_iou: f64,
    /// Use every `frame_stride`-th frame.
    pub frame_stride: usize,
}

impl Default for Recipe {
    fn default() -> Self {
        Recipe {
            positives: 50,
            negatives: 200,
            netc_negatives: 0,
            positive_min_iou: 0.8,
            negative_max_iou: 0.2,
            frame_stride: 1,
        }
    }
}

impl Recipe {
    /// Counts small enough to train on one CPU core in minutes.
    pub fn desk() -> Self {
        Recipe {
            positives: 8,
            negatives: 16,
            netc_negatives: 3,
            frame_stride: 4,
            ..Recipe::default()
        }
    }
}

/// A training sample: a box on a frame of one of the input sequences. Crops
/// are cut on demand rather than stored.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainItem {
    pub sequence: usize,
    pub frame: usize,
    pub bbox: BBox,
    /// Label index of the category this item teaches NetC.
    pub category: usize,
    pub foreground: bool,
}

impl TrainItem {
    /// Class index for a NetT branch.
    pub fn fg_label(&self) -> usize {
        if self.foreground {
            FOREGROUND
        } else {
            BACKGROUND
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    /// NetC items: positives with their category, plus any negatives
    /// labelled category X.
    pub netc: Vec<TrainItem>,
    /// NetT items: the same positives as foreground plus all negatives.
    pub nett: Vec<TrainItem>,
    pub skipped_frames: usize,
}

fn category_index(seq: &Sequence, labels: &[CategoryLabel]) -> Result<usize> {
    let name = seq
        .category
        .as_deref()
        .ok_or_else(|| Error::invalid(format!("sequence {} has no category", seq.name)))?;
    labels
        .iter()
        .find(|l| l.name == name)
        .map(|l| l.index)
        .ok_or_else(|| Error::invalid(format!("sequence {} has unknown category {name:?}", seq.name)))
}

/// Samples training boxes on every `frame_stride`-th frame of every sequence
/// and shuffles both item lists. Frames where the overlap windows cannot be
/// filled are skipped with a warning.
pub fn prepare_dataset(
    sequences: &[Sequence],
    labels: &[CategoryLabel],
    recipe: &Recipe,
    rng: &mut ChaCha8Rng,
) -> Result<Dataset> {
    if recipe.positives == 0 && recipe.negatives == 0 {
        return Err(Error::invalid("recipe requests zero samples per frame"));
    }
    if recipe.netc_negatives > recipe.negatives {
        return Err(Error::invalid("netc_negatives exceeds negatives"));
    }
    let x_index = labels
        .iter()
        .find(|l| l.is_category_x)
        .map(|l| l.index)
        .ok_or_else(|| Error::invalid("label set lacks category X"))?;
    let stride = recipe.frame_stride.max(1);
    let mut netc = Vec::new();
    let mut nett = Vec::new();
    let mut skipped = 0;
    for (si, seq) in sequences.iter().enumerate() {
        seq.validate()?;
        let category = category_index(seq, labels)?;
        for fi in (0..seq.frames.len()).step_by(stride) {
            let gt = seq.gt[fi];
            let bounds = seq.frames[fi].bounds();
            let pos = SampleSpec::window(&gt, recipe.positives, recipe.positive_min_iou, 1.0);
            let neg = SampleSpec::window(&gt, recipe.negatives, 0.0, recipe.negative_max_iou);
            let sampled = sample_by_overlap(&gt, &bounds, &pos, rng)
                .and_then(|p| Ok((p, sample_by_overlap(&gt, &bounds, &neg, rng)?)));
            let (pos, neg) = match sampled {
                Ok(v) => v,
                Err(Error::Infeasible(msg)) => {
                    log::warn!("{} frame {fi}: skipped ({msg})", seq.name);
                    skipped += 1;
                    continue;
                }
                Err(e) => return Err(e),
            };
            let item = |bbox: BBox, category: usize, foreground: bool| TrainItem {
                sequence: si,
                frame: fi,
                bbox,
                category,
                foreground,
            };
            for b in pos {
                netc.push(item(b, category, true));
                nett.push(item(b, category, true));
            }
            for (j, b) in neg.into_iter().enumerate() {
                if j < recipe.netc_negatives {
                    netc.push(item(b, x_index, false));
                }
                nett.push(item(b, category, false));
            }
        }
    }
    if netc.is_empty() && nett.is_empty() {
        return Err(Error::invalid("no training items could be sampled"));
    }
    netc.shuffle(rng);
    nett.shuffle(rng);
    Ok(Dataset {
        netc,
        nett,
        skipped_frames: skipped,
    })
}

/// Crops for a list of items, `N × 3 × S × S`.
pub fn item_crops(sequences: &[Sequence], items: &[TrainItem], side: usize) -> Result<Tensor> {
    let len = 3 * side * side;
    let mut data = Vec::with_capacity(items.len() * len);
    for it in items {
        let frame = sequences
            .get(it.sequence)
            .and_then(|s| s.frames.get(it.frame))
            .ok_or_else(|| Error::invalid(format!("item refers to missing frame {}:{}", it.sequence, it.frame)))?;
        data.extend_from_slice(crop_batch(frame, std::slice::from_ref(&it.bbox), side)?.data());
    }
    Tensor::from_vec(&[items.len(), 3, side, side], data)
}

/// Cached trunk features with one class label per row.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSet {
    pub features: Tensor,
    pub labels: Vec<usize>,
}

impl FeatureSet {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

/// Trunk features of every item, paired with `label(item)`.
pub fn extract_features(
    model: &ModelBundle,
    sequences: &[Sequence],
    items: &[TrainItem],
    label: impl Fn(&TrainItem) -> usize,
) -> Result<FeatureSet> {
    const CHUNK: usize = 256;
    let d = model.feature_dim();
    let mut data = Vec::with_capacity(items.len() * d);
    for chunk in items.chunks(CHUNK) {
        let crops = item_crops(sequences, chunk, model.input_side())?;
        data.extend_from_slice(model.forward_shared(&crops)?.data());
    }
    Ok(FeatureSet {
        features: Tensor::from_vec(&[items.len(), d], data)?,
        labels: items.iter().map(label).collect(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SgdConfig {
    pub lr: f64,
    pub batch: usize,
    pub epochs: usize,
    /// Heavy-ball momentum; 0 is plain SGD.
    #[serde(default)]
    pub momentum: f64,
}

impl SgdConfig {
    fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0 && self.lr.is_finite()) || self.batch == 0 || !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::invalid(format!("bad SGD settings {self:?}")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct StageReport {
    /// Mean training loss of each epoch.
    pub epoch_loss: Vec<f64>,
    pub iterations: usize,
    pub holdout_accuracy: Option<f64>,
}

/// One SGD step of a head on a batch; returns the batch loss.
pub(crate) fn head_step(
    net: &mut Sequential,
    x: &Tensor,
    labels: &[usize],
    lr: f64,
    opt: &mut Momentum,
    rng: &mut ChaCha8Rng,
) -> Result<f64> {
    let (logits, tape) = net.forward_train(x, rng)?;
    let (loss, grad) = softmax_cross_entropy(&logits, labels)?;
    net.backward(tape, grad, false)?;
    opt.step(net.params_mut(), lr)?;
    Ok(loss)
}

/// Epoch loop over shuffled mini-batches of cached features.
fn train_head(net: &mut Sequential, data: &FeatureSet, cfg: &SgdConfig, rng: &mut ChaCha8Rng) -> Result<StageReport> {
    cfg.validate()?;
    let mut report = StageReport::default();
    let mut opt = Momentum::new(cfg.momentum);
    let mut order: Vec<usize> = (0..data.len()).collect();
    for _ in 0..cfg.epochs {
        order.shuffle(rng);
        let mut total = 0.0;
        for batch in order.chunks(cfg.batch) {
            let x = data.features.select_rows(batch);
            let y: Vec<usize> = batch.iter().map(|&i| data.labels[i]).collect();
            total += head_step(net, &x, &y, cfg.lr, &mut opt, rng)? * batch.len() as f64;
            report.iterations += 1;
        }
        report.epoch_loss.push(total / data.len() as f64);
    }
    Ok(report)
}

fn distinct(labels: &[usize]) -> usize {
    let mut v = labels.to_vec();
    v.sort_unstable();
    v.dedup();
    v.len()
}

/// Trains NetC on cached features; the trunk and branches are untouched.
pub fn train_netc(
    model: &mut ModelBundle,
    data: &FeatureSet,
    cfg: &SgdConfig,
    rng: &mut ChaCha8Rng,
) -> Result<StageReport> {
    if distinct(&data.labels) < 2 {
        return Err(Error::invalid("NetC training data spans fewer than 2 categories"));
    }
    if let Some(&bad) = data.labels.iter().find(|&&l| l >= model.num_classes()) {
        return Err(Error::invalid(format!("category index {bad} out of range")));
    }
    train_head(&mut model.net_c, data, cfg, rng)
}

/// Trains one NetT branch on cached features labelled foreground (1) or
/// background (0). Only that branch changes.
pub fn train_nett_branch(
    model: &mut ModelBundle,
    branch: &CategoryLabel,
    data: &FeatureSet,
    cfg: &SgdConfig,
    rng: &mut ChaCha8Rng,
) -> Result<StageReport> {
    if data.labels.iter().any(|&l| l > 1) {
        return Err(Error::invalid("branch labels must be 0 (background) or 1 (foreground)"));
    }
    if distinct(&data.labels) < 2 {
        return Err(Error::invalid(format!(
            "branch {} needs both foreground and background items",
            branch.name
        )));
    }
    let net = model.branch_mut(branch)?;
    train_head(net, data, cfg, rng)
}

/// Jointly trains the trunk and NetC on crops of `items` (their `category`
/// labels). This is the only stage in which the trunk learns.
pub fn bootstrap_trunk(
    model: &mut ModelBundle,
    sequences: &[Sequence],
    items: &[TrainItem],
    cfg: &SgdConfig,
    rng: &mut ChaCha8Rng,
) -> Result<StageReport> {
    cfg.validate()?;
    if distinct(&items.iter().map(|i| i.category).collect::<Vec<_>>()) < 2 {
        return Err(Error::invalid("trunk bootstrap needs at least 2 categories"));
    }
    let side = model.input_side();
    let d = model.feature_dim();
    let mut report = StageReport::default();
    let mut opt = Momentum::new(cfg.momentum);
    let mut order: Vec<usize> = (0..items.len()).collect();
    for _ in 0..cfg.epochs {
        order.shuffle(rng);
        let mut total = 0.0;
        for batch in order.chunks(cfg.batch) {
            let chosen: Vec<TrainItem> = batch.iter().map(|&i| items[i]).collect();
            let x = item_crops(sequences, &chosen, side)?;
            let y: Vec<usize> = chosen.iter().map(|i| i.category).collect();
            let (feat, tape_s) = model.net_s.forward_train(&x, rng)?;
            let trunk_shape = feat.shape().to_vec();
            let feat = feat.reshape(&[batch.len(), d])?;
            let (logits, tape_c) = model.net_c.forward_train(&feat, rng)?;
            let (loss, grad) = softmax_cross_entropy(&logits, &y)?;
            let g_feat = model
                .net_c
                .backward(tape_c, grad, true)?
                .expect("input gradient requested");
            model.net_s.backward(tape_s, g_feat.reshape(&trunk_shape)?, false)?;
            opt.step(model.net_s.params_mut().chain(model.net_c.params_mut()), cfg.lr)?;
            total += loss * batch.len() as f64;
            report.iterations += 1;
        }
        report.epoch_loss.push(total / items.len() as f64);
    }
    Ok(report)
}

/// Fraction of rows whose arg-max class equals the label.
pub fn accuracy(scores: &Tensor, labels: &[usize]) -> f64 {
    if labels.is_empty() {
        return 0.0;
    }
    let hits = (0..scores.batch())
        .filter(|&r| argmax(scores.row(r)) == labels[r])
        .count();
    hits as f64 / labels.len() as f64
}

pub(crate) fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = i;
        }
    }
    best
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub seed: u64,
    /// Named categories; empty means every non-X category found in the data,
    /// sorted.
    pub categories: Vec<String>,
    /// `"desk"` or `"full"` layout.
    pub scale: String,
    pub recipe: Recipe,
    pub bootstrap: SgdConfig,
    pub netc: SgdConfig,
    pub nett: SgdConfig,
    /// Sequences per category held out for accuracy measurement.
    pub holdout_per_category: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            seed: 1,
            categories: Vec::new(),
            scale: "desk".into(),
            recipe: Recipe::desk(),
            bootstrap: SgdConfig {
                lr: 0.01,
                batch: 32,
                epochs: 8,
                momentum: 0.9,
            },
            netc: SgdConfig {
                lr: 0.01,
                batch: 32,
                epochs: 10,
                momentum: 0.9,
            },
            nett: SgdConfig {
                lr: 0.01,
                batch: 32,
                epochs: 10,
                momentum: 0.9,
            },
            holdout_per_category: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BranchReport {
    pub stage: StageReport,
    pub final_loss: Option<f64>,
    pub holdout_fg_recall: Option<f64>,
    pub holdout_bg_recall: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub seed: u64,
    pub categories: Vec<String>,
    pub train_sequences: Vec<String>,
    pub holdout_sequences: Vec<String>,
    pub netc_items: usize,
    pub nett_items: usize,
    pub skipped_frames: usize,
    pub bootstrap: StageReport,
    pub netc: StageReport,
    pub branches: BTreeMap<String, BranchReport>,
    pub iterations: usize,
    pub net_s_checksum: String,
}

fn categories_of(sequences: &[Sequence]) -> Result<Vec<String>> {
    let mut names: Vec<String> = Vec::new();
    for s in sequences {
        let c = s
            .category
            .clone()
            .ok_or_else(|| Error::invalid(format!("sequence {} has no category", s.name)))?;
        if c != CATEGORY_X && !names.contains(&c) {
            names.push(c);
        }
    }
    names.sort();
    Ok(names)
}

/// Splits sequences into training and holdout sets: the last
/// `per_category` sequences of each category are held out, provided at
/// least one remains for training.
pub fn holdout_split(sequences: &[Sequence], per_category: usize) -> (Vec<usize>, Vec<usize>) {
    let mut by_cat: BTreeMap<Option<&str>, Vec<usize>> = BTreeMap::new();
    for (i, s) in sequences.iter().enumerate() {
        by_cat.entry(s.category.as_deref()).or_default().push(i);
    }
    let mut train = Vec::new();
    let mut hold = Vec::new();
    for idx in by_cat.values() {
        let keep = if idx.len() > per_category { idx.len() - per_category } else { idx.len() };
        train.extend_from_slice(&idx[..keep]);
        hold.extend_from_slice(&idx[keep..]);
    }
    train.sort_unstable();
    hold.sort_unstable();
    (train, hold)
}

/// The complete offline stage: bootstrap the trunk, freeze it, then train
/// NetC and every NetT branch on cached features. Accuracy is measured on
/// held-out sequences.
pub fn train_offline(sequences: &[Sequence], cfg: &TrainConfig) -> Result<(ModelBundle, TrainReport)> {
    let categories = if cfg.categories.is_empty() {
        categories_of(sequences)?
    } else {
        cfg.categories.clone()
    };
    let mut model_cfg = match cfg.scale.as_str() {
        "desk" => ModelConfig::desk_scale(categories.clone()),
        "full" => ModelConfig::full_scale(categories.clone()),
        other => return Err(Error::invalid(format!("unknown model scale {other:?}"))),
    };
    model_cfg.seed = crate::seed::stage_seed(cfg.seed, "init");
    let mut model = build_model(&model_cfg)?;
    let labels = model.labels().to_vec();

    let (train_idx, hold_idx) = holdout_split(sequences, cfg.holdout_per_category);
    let train_seqs: Vec<Sequence> = train_idx.iter().map(|&i| sequences[i].clone()).collect();
    let hold_seqs: Vec<Sequence> = hold_idx.iter().map(|&i| sequences[i].clone()).collect();

    let mut rng = stage_rng(cfg.seed, "prepare");
    let data = prepare_dataset(&train_seqs, &labels, &cfg.recipe, &mut rng)?;
    let hold = if hold_seqs.is_empty() {
        None
    } else {
        let mut rng = stage_rng(cfg.seed, "prepare-holdout");
        Some(prepare_dataset(&hold_seqs, &labels, &cfg.recipe, &mut rng)?)
    };
    log::info!(
        "{} NetC items, {} NetT items from {} sequences ({} held out)",
        data.netc.len(),
        data.nett.len(),
        train_seqs.len(),
        hold_seqs.len()
    );

    let mut rng = stage_rng(cfg.seed, "bootstrap");
    let bootstrap = bootstrap_trunk(&mut model, &train_seqs, &data.netc, &cfg.bootstrap, &mut rng)?;
    log::info!("trunk bootstrap losses {:?}", bootstrap.epoch_loss);

    let netc_feats = extract_features(&model, &train_seqs, &data.netc, |i| i.category)?;
    let mut rng = stage_rng(cfg.seed, "netc");
    let mut netc = train_netc(&mut model, &netc_feats, &cfg.netc, &mut rng)?;
    drop(netc_feats);
    let hold_feats = match &hold {
        Some(h) => Some((
            extract_features(&model, &hold_seqs, &h.netc, |i| i.category)?,
            extract_features(&model, &hold_seqs, &h.nett, TrainItem::fg_label)?,
        )),
        None => None,
    };
    if let Some((hc, _)) = &hold_feats {
        netc.holdout_accuracy = Some(accuracy(&model.forward_classify(&hc.features)?, &hc.labels));
    }
    log::info!("NetC losses {:?}, holdout {:?}", netc.epoch_loss, netc.holdout_accuracy);

    let nett_feats = extract_features(&model, &train_seqs, &data.nett, TrainItem::fg_label)?;
    let mut branches = BTreeMap::new();
    for label in &labels {
        let rows: Vec<usize> = (0..data.nett.len())
            .filter(|&i| data.nett[i].category == label.index)
            .collect();
        if rows.is_empty() {
            log::warn!("no training sequences for category {}; branch left untrained", label.name);
            continue;
        }
        let subset = FeatureSet {
            features: nett_feats.features.select_rows(&rows),
            labels: rows.iter().map(|&i| nett_feats.labels[i]).collect(),
        };
        let mut rng = stage_rng(cfg.seed, &format!("nett.{}", label.name));
        let mut stage = train_nett_branch(&mut model, label, &subset, &cfg.nett, &mut rng)?;
        let mut fg_recall = None;
        let mut bg_recall = None;
        if let (Some((_, ht)), Some(h)) = (&hold_feats, &hold) {
            let rows: Vec<usize> = (0..h.nett.len()).filter(|&i| h.nett[i].category == label.index).collect();
            if !rows.is_empty() {
                let x = ht.features.select_rows(&rows);
                let y: Vec<usize> = rows.iter().map(|&i| ht.labels[i]).collect();
                let probs = model.branch_probs(label, &x)?;
                stage.holdout_accuracy = Some(accuracy(&probs, &y));
                let recall = |class: usize| {
                    let r: Vec<usize> = (0..y.len()).filter(|&i| y[i] == class).collect();
                    (!r.is_empty()).then(|| {
                        r.iter().filter(|&&i| argmax(probs.row(i)) == class).count() as f64 / r.len() as f64
                    })
                };
                fg_recall = recall(FOREGROUND);
                bg_recall = recall(BACKGROUND);
            }
        }
        log::info!(
            "branch {} losses {:?}, holdout {:?}",
            label.name,
            stage.epoch_loss,
            stage.holdout_accuracy
        );
        branches.insert(
            label.name.clone(),
            BranchReport {
                final_loss: stage.epoch_loss.last().copied(),
                stage,
                holdout_fg_recall: fg_recall,
                holdout_bg_recall: bg_recall,
            },
        );
    }

    let iterations =
        bootstrap.iterations + netc.iterations + branches.values().map(|b| b.stage.iterations).sum::<usize>();
    let report = TrainReport {
        seed: cfg.seed,
        categories,
        train_sequences: train_seqs.iter().map(|s| s.name.clone()).collect(),
        holdout_sequences: hold_seqs.iter().map(|s| s.name.clone()).collect(),
        netc_items: data.netc.len(),
        nett_items: data.nett.len(),
        skipped_frames: data.skipped_frames,
        bootstrap,
        netc,
        branches,
        iterations,
        net_s_checksum: format!("{:016x}", model.net_s_checksum()),
    };
    Ok((model, report))
}
