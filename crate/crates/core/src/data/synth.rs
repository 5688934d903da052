//! Deterministic synthetic tracking sequences.
//!
//! A target shape moves along a parametric path over a textured background,
//! optionally drifting in scale, under a brightness ramp, among moving
//! distractor shapes and behind a static occluder. Every frame is quantized
//! to 8 bits so that writing and re-reading PPM files is exact.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::Sequence;
use crate::error::{Error, Result};
use crate::eval::AttributeTag;
use crate::net::CATEGORY_X;
use crate::regions::{BBox, FrameImage};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Shape {
    Square,
    Disk,
    Cross,
    Ring,
    HollowSquare,
}

impl Shape {
    pub const ALL: [Shape; 5] = [
        Shape::Square,
        Shape::Disk,
        Shape::Cross,
        Shape::Ring,
        Shape::HollowSquare,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Shape::Square => "square",
            Shape::Disk => "disk",
            Shape::Cross => "cross",
            Shape::Ring => "ring",
            Shape::HollowSquare => "hollow_square",
        }
    }

    /// Category label a target of this shape carries. Ring and hollow square
    /// are category X.
    pub fn category(&self) -> &'static str {
        match self {
            Shape::Ring | Shape::HollowSquare => CATEGORY_X,
            other => other.name(),
        }
    }

    /// Membership test in box-normalized coordinates `u, v ∈ [-1, 1]`.
    /// Every shape touches all four sides of its box.
    pub fn contains(&self, u: f64, v: f64) -> bool {
        if u.abs() > 1.0 || v.abs() > 1.0 {
            return false;
        }
        let r2 = u * u + v * v;
        match self {
            Shape::Square => true,
            Shape::Disk => r2 <= 1.0,
            Shape::Cross => u.abs() <= 0.4 || v.abs() <= 0.4,
            Shape::Ring => (0.2025..=1.0).contains(&r2),
            Shape::HollowSquare => u.abs().max(v.abs()) >= 0.5,
        }
    }
}

/// Center displacement from the start position at frame `k`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Motion {
    Static,
    /// Constant velocity in pixels per frame.
    Linear { vx: f64, vy: f64 },
    /// `dx = ax·sin(2πk/period)`, `dy = ay·(1 − cos(2πk/period))`.
    Sinusoidal { ax: f64, ay: f64, period: f64 },
}

impl Motion {
    pub fn offset(&self, k: usize) -> (f64, f64) {
        let k = k as f64;
        match *self {
            Motion::Static => (0.0, 0.0),
            Motion::Linear { vx, vy } => (vx * k, vy * k),
            Motion::Sinusoidal { ax, ay, period } => {
                let phase = std::f64::consts::TAU * k / period;
                (ax * phase.sin(), ay * (1.0 - phase.cos()))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Background {
    pub base: [f64; 3],
    /// Amplitude of the smooth value-noise texture.
    pub texture: f64,
    /// Texture cell size in pixels.
    pub cell: usize,
    /// Amplitude of static per-pixel grain.
    pub grain: f64,
    /// Amplitude of noise redrawn every frame.
    pub frame_noise: f64,
}

impl Default for Background {
    fn default() -> Self {
        Background {
            base: [0.35, 0.35, 0.35],
            texture: 0.25,
            cell: 12,
            grain: 0.05,
            frame_noise: 0.02,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Distractor {
    pub shape: Shape,
    pub color: [f64; 3],
    pub start: [f64; 2],
    pub size: [f64; 2],
    pub motion: Motion,
}

/// Static rectangle drawn over the target, top-left corner form.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Occluder {
    pub rect: [f64; 4],
    pub color: [f64; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub name: String,
    pub shape: Shape,
    /// Overrides the shape's own category.
    #[serde(default)]
    pub category: Option<String>,
    pub width: usize,
    pub height: usize,
    pub frames: usize,
    pub color: [f64; 3],
    /// Initial target center.
    pub start: [f64; 2],
    /// Initial target extent.
    pub size: [f64; 2],
    pub motion: Motion,
    /// Per-frame log-scale change; the extent at frame `k` is `size·exp(rate·k)`.
    #[serde(default)]
    pub scale_drift: f64,
    /// Relative brightness change reached at the last frame.
    #[serde(default)]
    pub brightness_ramp: f64,
    #[serde(default)]
    pub background: Background,
    #[serde(default)]
    pub distractors: Vec<Distractor>,
    #[serde(default)]
    pub occluder: Option<Occluder>,
    pub seed: u64,
}

/// Smallest rendered target extent.
const MIN_SIDE: f64 = 6.0;

impl SynthSpec {
    pub fn category(&self) -> String {
        self.category.clone().unwrap_or_else(|| self.shape.category().to_string())
    }

    pub fn tags(&self) -> Vec<AttributeTag> {
        let mut tags = Vec::new();
        if self.brightness_ramp != 0.0 {
            tags.push(AttributeTag::IV);
        }
        if self.scale_drift != 0.0 {
            tags.push(AttributeTag::SV);
        }
        if self.occluder.is_some() {
            tags.push(AttributeTag::OCC);
        }
        if !self.distractors.is_empty() {
            tags.push(AttributeTag::BC);
        }
        tags
    }

    /// Pixel-aligned target box at frame `k`.
    pub fn target_box(&self, k: usize) -> BBox {
        let (dx, dy) = self.motion.offset(k);
        aligned_box(
            self.start[0] + dx,
            self.start[1] + dy,
            self.size[0] * (self.scale_drift * k as f64).exp(),
            self.size[1] * (self.scale_drift * k as f64).exp(),
        )
    }

    /// Checks the settings and that the target keeps at least half its area in
    /// view on every frame.
    pub fn validate(&self) -> Result<()> {
        if self.frames < 2 {
            return Err(Error::invalid("synthetic sequence needs at least 2 frames"));
        }
        if self.width < 16 || self.height < 16 {
            return Err(Error::invalid("synthetic frames must be at least 16×16"));
        }
        let colors = std::iter::once(&self.color)
            .chain(self.distractors.iter().map(|d| &d.color))
            .chain(self.occluder.iter().map(|o| &o.color))
            .chain(std::iter::once(&self.background.base));
        for c in colors {
            if c.iter().any(|v| !(0.0..=1.0).contains(v)) {
                return Err(Error::invalid(format!("color {c:?} outside [0, 1]")));
            }
        }
        if self.background.cell == 0 {
            return Err(Error::invalid("texture cell size must be positive"));
        }
        if let Motion::Sinusoidal { period, .. } = self.motion {
            if !(period > 0.0) {
                return Err(Error::invalid("sinusoidal period must be positive"));
            }
        }
        if self.brightness_ramp <= -1.0 {
            return Err(Error::invalid("brightness ramp would make frames black"));
        }
        let frame = BBox::from_corner(0.0, 0.0, self.width as f64, self.height as f64)?;
        for k in 0..self.frames {
            let b = self.target_box(k);
            if !b.is_valid() || b.w > self.width as f64 || b.h > self.height as f64 {
                return Err(Error::Infeasible(format!(
                    "{}: target extent {}×{} at frame {k} does not fit the frame",
                    self.name, b.w, b.h
                )));
            }
            if b.intersection(&frame) < 0.5 * b.area() {
                return Err(Error::Infeasible(format!(
                    "{}: target leaves the frame at frame {k}",
                    self.name
                )));
            }
        }
        Ok(())
    }
}

fn aligned_box(cx: f64, cy: f64, w: f64, h: f64) -> BBox {
    let w = w.round().max(MIN_SIDE);
    let h = h.round().max(MIN_SIDE);
    BBox {
        x: (cx - w / 2.0).round() + w / 2.0,
        y: (cy - h / 2.0).round() + h / 2.0,
        w,
        h,
    }
}

/// Paints `shape` into `layer` (RGB, row-major) wherever a pixel center lies
/// inside `b`'s shape; returns the number of pixels written.
fn paint(layer: &mut [f64], width: usize, height: usize, shape: Shape, b: &BBox, color: [f64; 3]) -> usize {
    let x0 = b.left().floor().max(0.0) as usize;
    let y0 = b.top().floor().max(0.0) as usize;
    let x1 = (b.right().ceil().max(0.0) as usize).min(width);
    let y1 = (b.bottom().ceil().max(0.0) as usize).min(height);
    let mut count = 0;
    for y in y0..y1 {
        let v = (y as f64 + 0.5 - b.y) / (b.h / 2.0);
        for x in x0..x1 {
            let u = (x as f64 + 0.5 - b.x) / (b.w / 2.0);
            if shape.contains(u, v) {
                let i = (y * width + x) * 3;
                layer[i..i + 3].copy_from_slice(&color);
                count += 1;
            }
        }
    }
    count
}

/// Binary mask of target pixels at frame `k`, before occlusion.
pub fn target_mask(spec: &SynthSpec, k: usize) -> Vec<bool> {
    let mut layer = vec![0.0; spec.width * spec.height * 3];
    paint(&mut layer, spec.width, spec.height, spec.shape, &spec.target_box(k), [1.0; 3]);
    layer.chunks_exact(3).map(|p| p[0] > 0.0).collect()
}

fn texture(spec: &SynthSpec, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let bg = &spec.background;
    let (w, h) = (spec.width, spec.height);
    let gw = w / bg.cell + 2;
    let gh = h / bg.cell + 2;
    let grid: Vec<[f64; 3]> = (0..gw * gh)
        .map(|_| std::array::from_fn(|_| rng.gen_range(-1.0..1.0)))
        .collect();
    let mut out = vec![0.0; w * h * 3];
    for y in 0..h {
        let gy = y as f64 / bg.cell as f64;
        let (iy, fy) = (gy.floor() as usize, gy.fract());
        for x in 0..w {
            let gx = x as f64 / bg.cell as f64;
            let (ix, fx) = (gx.floor() as usize, gx.fract());
            for c in 0..3 {
                let g = |i: usize, j: usize| grid[j * gw + i][c];
                let top = g(ix, iy) + (g(ix + 1, iy) - g(ix, iy)) * fx;
                let bot = g(ix, iy + 1) + (g(ix + 1, iy + 1) - g(ix, iy + 1)) * fx;
                let smooth = top + (bot - top) * fy;
                let grain = rng.gen_range(-1.0..1.0);
                out[(y * w + x) * 3 + c] = bg.base[c] + bg.texture * smooth + bg.grain * grain;
            }
        }
    }
    out
}

/// Renders a sequence. The same spec always yields bit-identical frames.
pub fn generate_synthetic(spec: &SynthSpec) -> Result<Sequence> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let background = texture(spec, &mut rng);
    let (w, h) = (spec.width, spec.height);
    let mut frames = Vec::with_capacity(spec.frames);
    let mut gt = Vec::with_capacity(spec.frames);
    for k in 0..spec.frames {
        let mut layer = background.clone();
        for d in &spec.distractors {
            let (dx, dy) = d.motion.offset(k);
            let b = aligned_box(d.start[0] + dx, d.start[1] + dy, d.size[0], d.size[1]);
            paint(&mut layer, w, h, d.shape, &b, d.color);
        }
        let target = spec.target_box(k);
        paint(&mut layer, w, h, spec.shape, &target, spec.color);
        if let Some(occ) = &spec.occluder {
            let b = BBox::from_corner(occ.rect[0], occ.rect[1], occ.rect[2], occ.rect[3])?;
            paint(&mut layer, w, h, Shape::Square, &b, occ.color);
        }
        let gain = 1.0 + spec.brightness_ramp * k as f64 / (spec.frames - 1) as f64;
        let noise = spec.background.frame_noise;
        let data = layer
            .into_iter()
            .map(|v| {
                let n = if noise > 0.0 { rng.gen_range(-noise..noise) } else { 0.0 };
                ((v * gain + n).clamp(0.0, 1.0) * 255.0).round() / 255.0
            })
            .collect();
        frames.push(FrameImage::new(w, h, data)?);
        gt.push(target);
    }
    Ok(Sequence {
        name: spec.name.clone(),
        frames,
        gt,
        category: Some(spec.category()),
        tags: spec.tags(),
    })
}

/// Knobs for a whole generated dataset: a training split with sequences per
/// category (plus category X sequences) and a held-out split whose
/// sequences all carry scale drift and a brightness ramp.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetSpec {
    pub seed: u64,
    pub width: usize,
    pub height: usize,
    pub frames: usize,
    pub categories: Vec<Shape>,
    pub x_shapes: Vec<Shape>,
    pub train_per_category: usize,
    pub train_x_sequences: usize,
    pub test_sequences: usize,
    pub test_frames: usize,
    /// Initial target side range in pixels.
    pub size_range: [f64; 2],
    /// Largest target speed in pixels per frame.
    pub max_speed: f64,
    /// Largest absolute per-frame log-scale drift.
    pub scale_drift: f64,
    /// Largest absolute brightness ramp.
    pub brightness_ramp: f64,
    /// Largest number of distractors per sequence.
    pub distractors: usize,
    /// Probability that a held-out sequence gets an occluder.
    pub occluder_prob: f64,
    /// Object colours. Training sequences of each category cycle through
    /// the palette so colour carries no category information.
    pub palette: Vec<[f64; 3]>,
    /// Per-channel uniform jitter added to palette colours.
    pub color_jitter: f64,
}

impl Default for DatasetSpec {
    fn default() -> Self {
        DatasetSpec {
            seed: 7,
            width: 128,
            height: 96,
            frames: 40,
            categories: vec![Shape::Square, Shape::Disk, Shape::Cross],
            x_shapes: vec![Shape::Ring, Shape::HollowSquare],
            train_per_category: 8,
            train_x_sequences: 6,
            test_sequences: 10,
            test_frames: 40,
            size_range: [18.0, 28.0],
            max_speed: 1.5,
            scale_drift: 0.012,
            brightness_ramp: 0.4,
            distractors: 2,
            occluder_prob: 0.0,
            palette: vec![
                [0.9, 0.15, 0.15],
                [0.15, 0.85, 0.2],
                [0.2, 0.3, 0.95],
                [0.9, 0.85, 0.15],
                [0.85, 0.2, 0.85],
                [0.15, 0.85, 0.85],
            ],
            color_jitter: 0.05,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Test,
}

impl Split {
    pub fn dir_name(&self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Test => "test",
        }
    }
}

const PLAN_ATTEMPTS: usize = 200;

fn jittered(base: [f64; 3], jitter: f64, rng: &mut ChaCha8Rng) -> [f64; 3] {
    base.map(|c| {
        let j = if jitter > 0.0 { rng.gen_range(-jitter..=jitter) } else { 0.0 };
        (c + j).clamp(0.0, 1.0)
    })
}

fn random_motion(rng: &mut ChaCha8Rng, max_speed: f64, frames: usize) -> Motion {
    if rng.gen_bool(0.5) {
        let speed = rng.gen_range(0.3..=1.0) * max_speed;
        let angle = rng.gen_range(0.0..std::f64::consts::TAU);
        Motion::Linear {
            vx: speed * angle.cos(),
            vy: speed * angle.sin(),
        }
    } else {
        let period = rng.gen_range(0.6..1.2) * frames as f64;
        let scale = max_speed * period / std::f64::consts::TAU;
        Motion::Sinusoidal {
            ax: rng.gen_range(-1.0..1.0) * scale,
            ay: rng.gen_range(-0.6..0.6) * scale,
            period,
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn plan_one(
    spec: &DatasetSpec,
    name: String,
    shape: Shape,
    frames: usize,
    color_index: usize,
    drift: bool,
    ramp: bool,
    occluder: bool,
    rng: &mut ChaCha8Rng,
) -> Result<SynthSpec> {
    let palette = &spec.palette;
    let (w, h) = (spec.width as f64, spec.height as f64);
    for _ in 0..PLAN_ATTEMPTS {
        let side = rng.gen_range(spec.size_range[0]..=spec.size_range[1]);
        let aspect: f64 = rng.gen_range(0.8..1.25);
        let size = [side * aspect.sqrt(), side / aspect.sqrt()];
        let start = [
            rng.gen_range(size[0]..w - size[0]),
            rng.gen_range(size[1]..h - size[1]),
        ];
        let scale_drift = if drift {
            let s = if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
            s * rng.gen_range(0.5..=1.0) * spec.scale_drift
        } else {
            0.0
        };
        let brightness_ramp = if ramp {
            let s = if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
            s * rng.gen_range(0.5..=1.0) * spec.brightness_ramp
        } else {
            0.0
        };
        let base = rng.gen_range(0.3..0.5);
        let background = Background {
            base: [base, base + rng.gen_range(-0.05..0.05), base + rng.gen_range(-0.05..0.05)],
            ..Background::default()
        };
        let n_distract = rng.gen_range(0..=spec.distractors);
        let others: Vec<Shape> = spec
            .categories
            .iter()
            .chain(&spec.x_shapes)
            .copied()
            .filter(|s| s.category() != shape.category())
            .collect();
        let distractors = (0..n_distract)
            .filter_map(|_| {
                let ds = *others.choose(rng)?;
                let dside = rng.gen_range(spec.size_range[0]..=spec.size_range[1]);
                Some(Distractor {
                    shape: ds,
                    color: jittered(palette[rng.gen_range(0..palette.len())], spec.color_jitter, rng),
                    start: [rng.gen_range(0.0..w), rng.gen_range(0.0..h)],
                    size: [dside, dside],
                    motion: random_motion(rng, spec.max_speed, frames),
                })
            })
            .collect();
        let occluder = occluder.then(|| Occluder {
            rect: [
                start[0] - size[0] * 0.5,
                start[1] + rng.gen_range(-0.2..0.2) * size[1],
                size[0] * 0.35,
                size[1] * 1.5,
            ],
            color: [0.2, 0.2, 0.2],
        });
        let candidate = SynthSpec {
            name: name.clone(),
            shape,
            category: None,
            width: spec.width,
            height: spec.height,
            frames,
            color: jittered(palette[color_index % palette.len()], spec.color_jitter, rng),
            start,
            size,
            motion: random_motion(rng, spec.max_speed, frames),
            scale_drift,
            brightness_ramp,
            background,
            distractors,
            occluder,
            seed: rng.gen(),
        };
        // keep the target fully in view and away from the border for a clean split
        let fits = (0..frames).all(|k| {
            let b = candidate.target_box(k);
            b.left() >= 2.0 && b.top() >= 2.0 && b.right() <= w - 2.0 && b.bottom() <= h - 2.0
        });
        if fits && candidate.validate().is_ok() {
            return Ok(candidate);
        }
    }
    Err(Error::Infeasible(format!(
        "{name}: no target path fits a {}×{} frame after {PLAN_ATTEMPTS} draws",
        spec.width, spec.height
    )))
}

/// Expands a dataset spec into per-sequence specs, deterministically.
pub fn plan_dataset(spec: &DatasetSpec) -> Result<Vec<(Split, SynthSpec)>> {
    if spec.categories.len() < 2 {
        return Err(Error::invalid("a dataset needs at least 2 target categories"));
    }
    if spec.categories.iter().any(|s| s.category() == CATEGORY_X) {
        return Err(Error::invalid("category X shapes belong in x_shapes"));
    }
    if spec.train_x_sequences > 0 && spec.x_shapes.is_empty() {
        return Err(Error::invalid("category X sequences requested without x_shapes"));
    }
    if spec.palette.is_empty() || spec.palette.iter().flatten().any(|c| !(0.0..=1.0).contains(c)) {
        return Err(Error::invalid("palette must hold at least one colour within [0, 1]"));
    }
    if !(spec.size_range[0] >= MIN_SIDE && spec.size_range[0] <= spec.size_range[1]) {
        return Err(Error::invalid("size_range must be ascending and at least 6 pixels"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut out = Vec::new();
    let n_colors = spec.palette.len();
    for &shape in &spec.categories {
        let offset = rng.gen_range(0..n_colors);
        for i in 0..spec.train_per_category {
            let name = format!("train_{}_{i:02}", shape.name());
            let drift = rng.gen_bool(0.5);
            let ramp = rng.gen_bool(0.5);
            let seq = plan_one(spec, name, shape, spec.frames, offset + i, drift, ramp, false, &mut rng)?;
            out.push((Split::Train, seq));
        }
    }
    let offset = rng.gen_range(0..n_colors);
    for i in 0..spec.train_x_sequences {
        let shape = spec.x_shapes[i % spec.x_shapes.len()];
        let name = format!("train_x_{}_{i:02}", shape.name());
        let seq = plan_one(spec, name, shape, spec.frames, offset + i, false, false, false, &mut rng)?;
        out.push((Split::Train, seq));
    }
    for i in 0..spec.test_sequences {
        let shape = spec.categories[i % spec.categories.len()];
        let name = format!("test_{i:02}_{}", shape.name());
        let occ = rng.gen_bool(spec.occluder_prob.clamp(0.0, 1.0));
        let color = rng.gen_range(0..n_colors);
        let seq = plan_one(spec, name, shape, spec.test_frames, color, true, true, occ, &mut rng)?;
        out.push((Split::Test, seq));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec() -> SynthSpec {
        SynthSpec {
            name: "s".into(),
            shape: Shape::Disk,
            category: None,
            width: 64,
            height: 48,
            frames: 5,
            color: [0.9, 0.1, 0.1],
            start: [30.0, 24.0],
            size: [14.0, 12.0],
            motion: Motion::Static,
            scale_drift: 0.0,
            brightness_ramp: 0.0,
            background: Background::default(),
            distractors: vec![],
            occluder: None,
            seed: 3,
        }
    }

    #[test]
    fn static_spec_has_constant_gt() {
        let seq = generate_synthetic(&spec()).unwrap();
        assert!(seq.gt.windows(2).all(|w| w[0] == w[1]));
        assert_eq!(seq.category.as_deref(), Some("disk"));
        assert!(seq.tags.is_empty());
    }

    #[test]
    fn same_seed_same_frames() {
        let a = generate_synthetic(&spec()).unwrap();
        let b = generate_synthetic(&spec()).unwrap();
        assert_eq!(a, b);
        let c = generate_synthetic(&SynthSpec { seed: 4, ..spec() }).unwrap();
        assert_ne!(a.frames, c.frames);
    }

    #[test]
    fn frames_are_eight_bit() {
        let seq = generate_synthetic(&spec()).unwrap();
        for v in seq.frames[0].data() {
            assert_eq!((v * 255.0).round() / 255.0, *v);
        }
    }

    #[test]
    fn leaving_target_is_infeasible() {
        let s = SynthSpec {
            motion: Motion::Linear { vx: 20.0, vy: 0.0 },
            ..spec()
        };
        assert!(matches!(generate_synthetic(&s), Err(Error::Infeasible(_))));
    }

    #[test]
    fn derived_tags() {
        let s = SynthSpec {
            scale_drift: 0.01,
            brightness_ramp: -0.3,
            ..spec()
        };
        assert_eq!(s.tags(), vec![AttributeTag::IV, AttributeTag::SV]);
    }

    #[test]
    fn plan_is_deterministic_and_sized() {
        let d = DatasetSpec::default();
        let a = plan_dataset(&d).unwrap();
        assert_eq!(a, plan_dataset(&d).unwrap());
        let train = a.iter().filter(|(s, _)| *s == Split::Train).count();
        assert_eq!(train, 3 * 8 + 6);
        let test: Vec<_> = a.iter().filter(|(s, _)| *s == Split::Test).collect();
        assert_eq!(test.len(), 10);
        for (_, t) in test {
            let tags = t.tags();
            assert!(tags.contains(&AttributeTag::SV) && tags.contains(&AttributeTag::IV));
        }
    }
}
