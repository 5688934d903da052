//! Online tracking: initialization on the first frame, then per frame
//! candidate scoring, target estimation and inter-supervised adaptation of
//! the active NetT branch and NetC.
//!
//! Every candidate gets two opinions. NetC says whether its content is the
//! active category (`f_c ∈ {0, 1}`), the active branch gives a foreground
//! probability `f_t`. Their agreement sorts candidates into four types:
//!
//! | type | `f_c` | `f_t ≥ θ` |
//! |------|-------|-----------|
//! | I    | 1     | yes       |
//! | II   | 1     | no        |
//! | III  | 0     | yes       |
//! | IV   | 0     | no        |
//!
//! Types II and III are ambiguous samples (AS). When too many appear, both
//! networks are fine-tuned on the consistent samples (I as target, IV as
//! background / category X) until the AS ratio is small or stops shrinking.

use std::collections::VecDeque;

use rand::seq::SliceRandom;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::net::{CategoryLabel, ModelBundle, BACKGROUND, FOREGROUND};
use crate::nn::Momentum;
use crate::regions::{crop_batch, iou, sample_by_overlap, sample_gaussian, BBox, FrameImage, Perturbation, SampleSpec};
use crate::regression::{apply_regressors, fit_regressors, regression_targets, RegressorSet, DEFAULT_LAMBDA};
use crate::tensor::Tensor;
use crate::train::{argmax, head_step};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrackConfig {
    /// Candidates drawn per frame (`N_f`).
    pub candidates: usize,
    /// Candidate center spread as a fraction of the smaller box side.
    pub position_factor: f64,
    /// Candidate log-scale standard deviation.
    pub scale_std: f64,
    /// Type I samples averaged into the estimate (`N_top`).
    pub n_top: usize,
    /// Foreground threshold on `f_t`.
    pub theta_fg: f64,
    /// Adaptation runs while the AS ratio exceeds this.
    pub as_threshold: f64,
    pub max_rounds: usize,
    pub adapt_lr: f64,
    pub adapt_iters: usize,
    pub adapt_batch: usize,
    pub pool_capacity: usize,
    /// Tight samples for the category vote.
    pub vote_samples: usize,
    pub init_positives: usize,
    pub init_negatives: usize,
    pub init_iters: usize,
    pub init_lr: f64,
    pub init_batch: usize,
    pub regression_samples: usize,
    pub regression_min_iou: f64,
    /// Log-scale spread of the regression training samples.
    pub regression_scale_std: f64,
    pub lambda: f64,
    /// Skip NetC gating: `f_c ≡ 1` and a manually chosen branch.
    pub no_netc: bool,
    /// Skip the adaptation step.
    pub no_adapt: bool,
    /// Branch to activate instead of the voted category.
    pub branch_override: Option<String>,
}

impl Default for TrackConfig {
    fn default() -> Self {
        TrackConfig {
            candidates: 256,
            position_factor: 0.3,
            scale_std: 0.05,
            n_top: 5,
            theta_fg: 0.5,
            as_threshold: 0.2,
            max_rounds: 5,
            adapt_lr: 0.001,
            adapt_iters: 10,
            adapt_batch: 128,
            pool_capacity: 2000,
            vote_samples: 50,
            init_positives: 500,
            init_negatives: 5000,
            init_iters: 30,
            init_lr: 0.001,
            init_batch: 128,
            regression_samples: 10_000,
            regression_min_iou: 0.6,
            regression_scale_std: 0.05,
            lambda: DEFAULT_LAMBDA,
            no_netc: false,
            no_adapt: false,
            branch_override: None,
        }
    }
}

impl TrackConfig {
    /// Reduced first-frame sample counts for a single CPU core.
    pub fn desk() -> Self {
        TrackConfig {
            init_positives: 100,
            init_negatives: 800,
            regression_samples: 1000,
            ..TrackConfig::default()
        }
    }

    fn validate(&self) -> Result<()> {
        if self.candidates == 0 || self.n_top == 0 {
            return Err(Error::invalid("candidate count and N_top must be positive"));
        }
        if !(0.0..=1.0).contains(&self.theta_fg) || !(0.0..=1.0).contains(&self.as_threshold) {
            return Err(Error::invalid("thresholds must lie in [0, 1]"));
        }
        if self.adapt_batch == 0 || self.init_batch == 0 || self.pool_capacity == 0 {
            return Err(Error::invalid("batch sizes and pool capacity must be positive"));
        }
        if self.init_positives == 0 || self.init_negatives == 0 || self.regression_samples == 0 {
            return Err(Error::invalid("initialization sample counts must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum SampleType {
    I,
    II,
    III,
    IV,
}

impl SampleType {
    pub fn classify(f_c: bool, f_t: f64, theta: f64) -> SampleType {
        match (f_c, f_t >= theta) {
            (true, true) => SampleType::I,
            (true, false) => SampleType::II,
            (false, true) => SampleType::III,
            (false, false) => SampleType::IV,
        }
    }

    pub fn index(&self) -> usize {
        *self as usize
    }

    pub fn is_ambiguous(&self) -> bool {
        matches!(self, SampleType::II | SampleType::III)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SampleRecord {
    pub bbox: BBox,
    pub features: Vec<f64>,
    pub f_c: bool,
    /// NetC class probabilities; empty when NetC is disabled.
    pub f_c_probs: Vec<f64>,
    pub f_t: f64,
    pub sample_type: SampleType,
    pub score: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    BelowThreshold,
    NotDecreasing,
    MaxRounds,
    SkippedEmptyPool,
    Disabled,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameResult {
    pub frame: usize,
    pub estimate: BBox,
    /// Counts of types I, II, III, IV.
    pub n_type: [usize; 4],
    pub lost: bool,
    pub adaptation_rounds: usize,
    pub as_ratio_trace: Vec<f64>,
    pub stop: StopReason,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InitReport {
    pub active_category: String,
    pub votes: Vec<usize>,
    pub low_confidence: bool,
    pub fg_before: f64,
    pub fg_after: f64,
    pub extra_negatives: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct PoolEntry {
    index: usize,
    foreground: bool,
}

/// A bounded FIFO of consistent samples; features live in a flat arena.
#[derive(Debug, Clone, PartialEq)]
struct Pool {
    dim: usize,
    capacity: usize,
    features: VecDeque<Vec<f64>>,
    foreground: VecDeque<bool>,
}

impl Pool {
    fn new(dim: usize, capacity: usize) -> Self {
        Pool {
            dim,
            capacity,
            features: VecDeque::new(),
            foreground: VecDeque::new(),
        }
    }

    fn push(&mut self, features: &[f64], foreground: bool) {
        debug_assert_eq!(features.len(), self.dim);
        if self.features.len() == self.capacity {
            self.features.pop_front();
            self.foreground.pop_front();
        }
        self.features.push_back(features.to_vec());
        self.foreground.push_back(foreground);
    }

    fn len(&self) -> usize {
        self.features.len()
    }

    fn counts(&self) -> (usize, usize) {
        let fg = self.foreground.iter().filter(|&&f| f).count();
        (fg, self.len() - fg)
    }

    fn entries(&self) -> Vec<PoolEntry> {
        self.foreground
            .iter()
            .enumerate()
            .map(|(index, &foreground)| PoolEntry { index, foreground })
            .collect()
    }
}

pub struct TrackerState {
    pub model: ModelBundle,
    pub active: CategoryLabel,
    pub regressors: RegressorSet,
    pub last_estimate: BBox,
    pub frame_index: usize,
    pub config: TrackConfig,
    pool: Pool,
}

impl TrackerState {
    pub fn pool_len(&self) -> usize {
        self.pool.len()
    }
}

fn features_of(model: &ModelBundle, frame: &FrameImage, boxes: &[BBox]) -> Result<Tensor> {
    model.forward_shared(&crop_batch(frame, boxes, model.input_side())?)
}

/// Runs `iters` plain-SGD steps on random batches.
fn fine_tune(
    net: &mut crate::nn::Sequential,
    x: &Tensor,
    y: &[usize],
    iters: usize,
    batch: usize,
    lr: f64,
    rng: &mut ChaCha8Rng,
) -> Result<()> {
    let mut opt = Momentum::new(0.0);
    let mut order: Vec<usize> = (0..y.len()).collect();
    let batch = batch.min(y.len());
    for _ in 0..iters {
        order.shuffle(rng);
        let rows = &order[..batch];
        let yb: Vec<usize> = rows.iter().map(|&i| y[i]).collect();
        head_step(net, &x.select_rows(rows), &yb, lr, &mut opt, rng)?;
    }
    Ok(())
}

/// First-frame setup: category vote, branch activation and fine-tuning,
/// regressor fit, and pool seeding.
pub fn initialize(
    model: &ModelBundle,
    frame: &FrameImage,
    gt: BBox,
    config: &TrackConfig,
    rng: &mut ChaCha8Rng,
) -> Result<(TrackerState, InitReport)> {
    config.validate()?;
    if !gt.is_valid() || gt.right() <= 0.0 || gt.bottom() <= 0.0 {
        return Err(Error::invalid(format!("initial box {gt:?} is not inside the frame")));
    }
    let (fw, fh) = (frame.width() as f64, frame.height() as f64);
    if gt.left() >= fw || gt.top() >= fh {
        return Err(Error::invalid(format!("initial box {gt:?} is not inside the frame")));
    }
    let mut model = model.clone();
    let bounds = frame.bounds();

    // category vote over tight samples
    let tight = sample_by_overlap(&gt, &bounds, &SampleSpec::window(&gt, config.vote_samples, 0.8, 1.0), rng)?;
    let k = model.num_classes();
    let mut votes = vec![0; k];
    let mut vote_labels = Vec::new();
    if !tight.is_empty() {
        let probs = model.forward_classify(&features_of(&model, frame, &tight)?)?;
        for r in 0..probs.batch() {
            let l = argmax(probs.row(r));
            votes[l] += 1;
            vote_labels.push(l);
        }
    }
    let best = votes.iter().copied().max().unwrap_or(0);
    let leaders: Vec<usize> = (0..k).filter(|&i| votes[i] == best).collect();
    let (voted, low_confidence) = if best > 0 && leaders.len() == 1 {
        (leaders[0], false)
    } else {
        let probs = model.forward_classify(&features_of(&model, frame, &[gt])?)?;
        (argmax(probs.row(0)), true)
    };
    let active_index = match (&config.branch_override, config.no_netc) {
        (Some(name), _) => {
            model
                .label_by_name(name)
                .ok_or_else(|| Error::invalid(format!("unknown branch {name:?}")))?
                .index
        }
        (None, true) => 0,
        (None, false) => voted,
    };
    let active = model.labels()[active_index].clone();

    // first-frame fine-tuning of the active branch
    let pos = sample_by_overlap(&gt, &bounds, &SampleSpec::window(&gt, config.init_positives, 0.8, 1.0), rng)?;
    let neg = sample_by_overlap(&gt, &bounds, &SampleSpec::window(&gt, config.init_negatives, 0.0, 0.2), rng)?;
    let extra: Vec<BBox> = if config.no_netc {
        Vec::new()
    } else {
        tight
            .iter()
            .zip(&vote_labels)
            .filter(|(_, &l)| l != active.index)
            .map(|(b, _)| *b)
            .collect()
    };
    let boxes: Vec<BBox> = pos.iter().chain(&neg).chain(&extra).copied().collect();
    let feats = features_of(&model, frame, &boxes)?;
    let labels: Vec<usize> = (0..boxes.len())
        .map(|i| if i < pos.len() { FOREGROUND } else { BACKGROUND })
        .collect();
    let gt_feat = features_of(&model, frame, &[gt])?;
    let fg_before = model.forward_track(&active, &gt_feat)?[0];
    fine_tune(
        model.branch_mut(&active)?,
        &feats,
        &labels,
        config.init_iters,
        config.init_batch,
        config.init_lr,
        rng,
    )?;
    let fg_after = model.forward_track(&active, &gt_feat)?[0];

    // bounding-box regressors
    let reg_spec = SampleSpec {
        count: config.regression_samples,
        overlap_min: config.regression_min_iou,
        overlap_max: 1.0,
        perturbation: Perturbation::relative_to(&gt, config.position_factor, config.regression_scale_std),
    };
    let reg_boxes = sample_by_overlap(&gt, &bounds, &reg_spec, rng)?;
    let reg_feats = features_of(&model, frame, &reg_boxes)?;
    let targets = reg_boxes
        .iter()
        .map(|b| regression_targets(&gt, b))
        .collect::<Result<Vec<_>>>()?;
    let regressors = fit_regressors(&reg_feats, &targets, config.lambda)?;

    let mut pool = Pool::new(model.feature_dim(), config.pool_capacity);
    for (i, &l) in labels.iter().enumerate().take(pos.len() + neg.len()) {
        pool.push(feats.row(i), l == FOREGROUND);
    }

    let report = InitReport {
        active_category: active.name.clone(),
        votes,
        low_confidence,
        fg_before,
        fg_after,
        extra_negatives: extra.len(),
    };
    let state = TrackerState {
        model,
        active,
        regressors,
        last_estimate: gt,
        frame_index: 0,
        config: config.clone(),
        pool,
    };
    Ok((state, report))
}

/// Fills `f_c`, `f_t`, type and score of records from their features.
fn rescore(state: &TrackerState, records: &mut [SampleRecord]) -> Result<()> {
    if records.is_empty() {
        return Ok(());
    }
    let d = state.model.feature_dim();
    let mut data = Vec::with_capacity(records.len() * d);
    for r in records.iter() {
        data.extend_from_slice(&r.features);
    }
    let feats = Tensor::from_vec(&[records.len(), d], data)?;
    let f_t = state.model.forward_track(&state.active, &feats)?;
    let probs = if state.config.no_netc {
        None
    } else {
        Some(state.model.forward_classify(&feats)?)
    };
    for (i, r) in records.iter_mut().enumerate() {
        r.f_t = f_t[i];
        match &probs {
            Some(p) => {
                r.f_c_probs = p.row(i).to_vec();
                r.f_c = argmax(p.row(i)) == state.active.index;
            }
            None => {
                r.f_c_probs.clear();
                r.f_c = true;
            }
        }
        r.sample_type = SampleType::classify(r.f_c, r.f_t, state.config.theta_fg);
        r.score = if r.f_c { r.f_t } else { 0.0 };
    }
    Ok(())
}

/// Draws `N_f` candidates around the last estimate and scores them.
pub fn score_candidates(state: &TrackerState, frame: &FrameImage, rng: &mut ChaCha8Rng) -> Result<Vec<SampleRecord>> {
    let cfg = &state.config;
    let spread = Perturbation::relative_to(&state.last_estimate, cfg.position_factor, cfg.scale_std);
    let boxes = sample_gaussian(&state.last_estimate, &spread, cfg.candidates, &frame.bounds(), rng);
    let feats = features_of(&state.model, frame, &boxes)?;
    let mut records: Vec<SampleRecord> = boxes
        .iter()
        .enumerate()
        .map(|(i, b)| SampleRecord {
            bbox: *b,
            features: feats.row(i).to_vec(),
            f_c: false,
            f_c_probs: Vec::new(),
            f_t: 0.0,
            sample_type: SampleType::IV,
            score: 0.0,
        })
        .collect();
    rescore(state, &mut records)?;
    Ok(records)
}

pub fn type_counts(records: &[SampleRecord]) -> [usize; 4] {
    let mut n = [0; 4];
    for r in records {
        n[r.sample_type.index()] += 1;
    }
    n
}

pub fn as_ratio(records: &[SampleRecord]) -> f64 {
    if records.is_empty() {
        return 0.0;
    }
    records.iter().filter(|r| r.sample_type.is_ambiguous()).count() as f64 / records.len() as f64
}

/// Score-weighted mean of the `n_top` best Type I samples after regression.
/// `None` when there is no Type I sample.
pub fn estimate_target(records: &[SampleRecord], regressors: &RegressorSet, n_top: usize) -> Result<Option<BBox>> {
    let mut top: Vec<&SampleRecord> = records.iter().filter(|r| r.sample_type == SampleType::I).collect();
    if top.is_empty() {
        return Ok(None);
    }
    // stable: equal scores keep candidate order
    top.sort_by(|a, b| b.score.total_cmp(&a.score));
    top.truncate(n_top.max(1));
    let refined = top
        .iter()
        .map(|r| apply_regressors(regressors, &r.features, &r.bbox))
        .collect::<Result<Vec<_>>>()?;
    let total: f64 = top.iter().map(|r| r.score).sum();
    let weights: Vec<f64> = if total > 0.0 {
        top.iter().map(|r| r.score / total).collect()
    } else {
        vec![1.0 / top.len() as f64; top.len()]
    };
    let mut acc = [0.0; 4];
    for (b, w) in refined.iter().zip(&weights) {
        acc[0] += w * b.x;
        acc[1] += w * b.y;
        acc[2] += w * b.w;
        acc[3] += w * b.h;
    }
    Ok(Some(BBox {
        x: acc[0],
        y: acc[1],
        w: acc[2],
        h: acc[3],
    }))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdaptOutcome {
    pub rounds: usize,
    pub as_ratio_trace: Vec<f64>,
    pub stop: StopReason,
}

/// Inter-supervised adaptation on the current frame's records.
///
/// The trace starts with the ratio before any update and gains one entry
/// per round. Records are re-scored in place.
pub fn adapt(state: &mut TrackerState, records: &mut [SampleRecord], rng: &mut ChaCha8Rng) -> Result<AdaptOutcome> {
    let cfg = state.config.clone();
    let mut trace = vec![as_ratio(records)];
    for r in records.iter() {
        match r.sample_type {
            SampleType::I => state.pool.push(&r.features, true),
            SampleType::IV => state.pool.push(&r.features, false),
            _ => {}
        }
    }
    let outcome = |rounds, trace, stop| AdaptOutcome {
        rounds,
        as_ratio_trace: trace,
        stop,
    };
    if trace[0] <= cfg.as_threshold {
        return Ok(outcome(0, trace, StopReason::BelowThreshold));
    }
    let (fg, bg) = state.pool.counts();
    if fg == 0 || bg == 0 {
        log::warn!(
            "frame {}: adaptation skipped, pool has {fg} target and {bg} background samples",
            state.frame_index
        );
        return Ok(outcome(0, trace, StopReason::SkippedEmptyPool));
    }
    let x_index = state.model.category_x().index;
    let mut rounds = 0;
    loop {
        let entries = state.pool.entries();
        let d = state.pool.dim;
        let mut data = Vec::with_capacity(entries.len() * d);
        for e in &entries {
            data.extend_from_slice(&state.pool.features[e.index]);
        }
        let x = Tensor::from_vec(&[entries.len(), d], data)?;
        let y_t: Vec<usize> = entries
            .iter()
            .map(|e| if e.foreground { FOREGROUND } else { BACKGROUND })
            .collect();
        let active = state.active.clone();
        fine_tune(
            state.model.branch_mut(&active)?,
            &x,
            &y_t,
            cfg.adapt_iters,
            cfg.adapt_batch,
            cfg.adapt_lr,
            rng,
        )?;
        if !cfg.no_netc {
            let y_c: Vec<usize> = entries
                .iter()
                .map(|e| if e.foreground { active.index } else { x_index })
                .collect();
            fine_tune(
                &mut state.model.net_c,
                &x,
                &y_c,
                cfg.adapt_iters,
                cfg.adapt_batch,
                cfg.adapt_lr,
                rng,
            )?;
        }
        rounds += 1;
        let before: Vec<bool> = records.iter().map(|r| r.sample_type.is_ambiguous()).collect();
        rescore(state, records)?;
        for (r, was_as) in records.iter().zip(before) {
            if was_as {
                match r.sample_type {
                    SampleType::I => state.pool.push(&r.features, true),
                    SampleType::IV => state.pool.push(&r.features, false),
                    _ => {}
                }
            }
        }
        let ratio = as_ratio(records);
        let prev = *trace.last().expect("trace starts non-empty");
        trace.push(ratio);
        if ratio <= cfg.as_threshold {
            return Ok(outcome(rounds, trace, StopReason::BelowThreshold));
        }
        if ratio >= prev {
            return Ok(outcome(rounds, trace, StopReason::NotDecreasing));
        }
        if rounds >= cfg.max_rounds {
            return Ok(outcome(rounds, trace, StopReason::MaxRounds));
        }
    }
}

/// One tracking step on the next frame: score, estimate, adapt.
pub fn track_frame(state: &mut TrackerState, frame: &FrameImage, rng: &mut ChaCha8Rng) -> Result<FrameResult> {
    Ok(track_frame_records(state, frame, rng)?.0)
}

/// [`track_frame`], also returning the frame's candidate records as scored
/// before adaptation.
pub fn track_frame_records(
    state: &mut TrackerState,
    frame: &FrameImage,
    rng: &mut ChaCha8Rng,
) -> Result<(FrameResult, Vec<SampleRecord>)> {
    state.frame_index += 1;
    let mut records = score_candidates(state, frame, rng)?;
    let scored = records.clone();
    let n_type = type_counts(&records);
    let estimate = estimate_target(&records, &state.regressors, state.config.n_top)?;
    let lost = estimate.is_none();
    let estimate = estimate.map_or(state.last_estimate, |b| frame.bounds().clip(b));
    state.last_estimate = estimate;
    let (rounds, trace, stop) = if state.config.no_adapt {
        (0, vec![as_ratio(&records)], StopReason::Disabled)
    } else {
        let out = adapt(state, &mut records, rng)?;
        (out.rounds, out.as_ratio_trace, out.stop)
    };
    let result = FrameResult {
        frame: state.frame_index,
        estimate,
        n_type,
        lost,
        adaptation_rounds: rounds,
        as_ratio_trace: trace,
        stop,
        error: None,
    };
    Ok((result, scored))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrackRun {
    pub init: InitReport,
    /// Results for frames 1.. (frame 0 is the given box).
    pub frames: Vec<FrameResult>,
}

impl TrackRun {
    /// One box per frame, starting with the initial box.
    pub fn estimates(&self, first: BBox) -> Vec<BBox> {
        std::iter::once(first).chain(self.frames.iter().map(|f| f.estimate)).collect()
    }
}

/// Tracks a whole sequence from the first-frame box.
pub fn track_sequence(
    model: &ModelBundle,
    frames: &[FrameImage],
    gt_first: BBox,
    config: &TrackConfig,
    rng: &mut ChaCha8Rng,
) -> Result<TrackRun> {
    track_sequence_with(model, frames, gt_first, config, rng, |_, _| {})
}

/// [`track_sequence`] with a hook that sees each frame's result and its
/// candidate records.
pub fn track_sequence_with(
    model: &ModelBundle,
    frames: &[FrameImage],
    gt_first: BBox,
    config: &TrackConfig,
    rng: &mut ChaCha8Rng,
    mut inspect: impl FnMut(&FrameResult, &[SampleRecord]),
) -> Result<TrackRun> {
    if frames.len() < 2 {
        return Err(Error::invalid(format!("tracking needs at least 2 frames, got {}", frames.len())));
    }
    let (mut state, init) = initialize(model, &frames[0], gt_first, config, rng)?;
    let mut results = Vec::with_capacity(frames.len() - 1);
    for frame in &frames[1..] {
        match track_frame_records(&mut state, frame, rng) {
            Ok((r, records)) => {
                inspect(&r, &records);
                results.push(r);
            }
            Err(e) => {
                log::warn!("frame {}: {e}", state.frame_index);
                results.push(FrameResult {
                    frame: state.frame_index,
                    estimate: state.last_estimate,
                    n_type: [0; 4],
                    lost: true,
                    adaptation_rounds: 0,
                    as_ratio_trace: Vec::new(),
                    stop: StopReason::Disabled,
                    error: Some(e.to_string()),
                });
            }
        }
    }
    Ok(TrackRun { init, frames: results })
}

/// Mean IoU of a run against ground truth.
pub fn mean_iou(estimates: &[BBox], gt: &[BBox]) -> f64 {
    let n = estimates.len().min(gt.len());
    if n == 0 {
        return 0.0;
    }
    estimates.iter().zip(gt).map(|(a, b)| iou(a, b)).sum::<f64>() / n as f64
}
