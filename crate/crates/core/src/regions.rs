//! Box geometry, candidate sampling, and crop extraction.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Smallest width or height a sampled box may take, in pixels.
pub const MIN_EXTENT: f64 = 4.0;

/// Axis-aligned box in center form: `(x, y)` is the center, `(w, h)` the
/// extents, all in pixels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BBox {
    pub x: f64,
    pub y: f64,
    pub w: f64,
    pub h: f64,
}

impl BBox {
    pub fn new(x: f64, y: f64, w: f64, h: f64) -> Result<Self> {
        let b = BBox { x, y, w, h };
        if !b.is_valid() {
            return Err(Error::invalid(format!("invalid box {b:?}")));
        }
        Ok(b)
    }

    /// Converts from the top-left corner form used on disk.
    pub fn from_corner(left: f64, top: f64, w: f64, h: f64) -> Result<Self> {
        BBox::new(left + w / 2.0, top + h / 2.0, w, h)
    }

    /// `[left, top, w, h]`.
    pub fn to_corner(&self) -> [f64; 4] {
        [self.left(), self.top(), self.w, self.h]
    }

    pub fn is_valid(&self) -> bool {
        [self.x, self.y, self.w, self.h].iter().all(|v| v.is_finite()) && self.w > 0.0 && self.h > 0.0
    }

    pub fn left(&self) -> f64 {
        self.x - self.w / 2.0
    }

    pub fn right(&self) -> f64 {
        self.x + self.w / 2.0
    }

    pub fn top(&self) -> f64 {
        self.y - self.h / 2.0
    }

    pub fn bottom(&self) -> f64 {
        self.y + self.h / 2.0
    }

    pub fn area(&self) -> f64 {
        self.w * self.h
    }

    /// Area of the intersection with `other`, zero when disjoint.
    pub fn intersection(&self, other: &BBox) -> f64 {
        let iw = self.right().min(other.right()) - self.left().max(other.left());
        let ih = self.bottom().min(other.bottom()) - self.top().max(other.top());
        iw.max(0.0) * ih.max(0.0)
    }
}

/// Intersection over union with continuous areas.
pub fn iou(a: &BBox, b: &BBox) -> f64 {
    let inter = a.intersection(b);
    let union = a.area() + b.area() - inter;
    if union <= 0.0 {
        return 0.0;
    }
    (inter / union).clamp(0.0, 1.0)
}

/// Frame extent used to keep sampled boxes in view.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrameBounds {
    pub width: f64,
    pub height: f64,
}

impl FrameBounds {
    /// Clamps the center into the frame and the extents to
    /// `[MIN_EXTENT, frame extent]`.
    pub fn clip(&self, b: BBox) -> BBox {
        let w = b.w.max(MIN_EXTENT).min(self.width.max(MIN_EXTENT));
        let h = b.h.max(MIN_EXTENT).min(self.height.max(MIN_EXTENT));
        BBox {
            x: b.x.clamp(0.0, self.width),
            y: b.y.clamp(0.0, self.height),
            w,
            h,
        }
    }
}

/// Diagonal perturbation covariance: pixel² variances for the center,
/// log-scale variances for the extents (`w' = w·exp(ε)`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Perturbation {
    pub var_x: f64,
    pub var_y: f64,
    pub var_w: f64,
    pub var_h: f64,
}

impl Perturbation {
    pub const ZERO: Perturbation = Perturbation {
        var_x: 0.0,
        var_y: 0.0,
        var_w: 0.0,
        var_h: 0.0,
    };

    /// Center std `position_factor · min(w, h)`, log-scale std `scale_std`.
    pub fn relative_to(b: &BBox, position_factor: f64, scale_std: f64) -> Self {
        let s = position_factor * b.w.min(b.h);
        Perturbation {
            var_x: s * s,
            var_y: s * s,
            var_w: scale_std * scale_std,
            var_h: scale_std * scale_std,
        }
    }

    /// Default candidate spread: 0.3·min(w, h) on the center, 0.05 on scale.
    pub fn default_for(b: &BBox) -> Self {
        Perturbation::relative_to(b, 0.3, 0.05)
    }

    fn scaled(&self, factor: f64) -> Self {
        let f2 = factor * factor;
        Perturbation {
            var_x: self.var_x * f2,
            var_y: self.var_y * f2,
            var_w: self.var_w * f2,
            var_h: self.var_h * f2,
        }
    }

    fn perturb<R: Rng + ?Sized>(&self, b: &BBox, rng: &mut R) -> BBox {
        let mut draw = |var: f64| {
            if var > 0.0 {
                let z: f64 = StandardNormal.sample(rng);
                var.sqrt() * z
            } else {
                0.0
            }
        };
        let dx: f64 = draw(self.var_x);
        let dy: f64 = draw(self.var_y);
        let dw: f64 = draw(self.var_w);
        let dh: f64 = draw(self.var_h);
        BBox {
            x: b.x + dx,
            y: b.y + dy,
            w: b.w * dw.exp(),
            h: b.h * dh.exp(),
        }
    }
}

/// Draws `count` boxes around `center` from `N(0, R)`, clipped to `bounds`.
pub fn sample_gaussian<R: Rng + ?Sized>(
    center: &BBox,
    perturbation: &Perturbation,
    count: usize,
    bounds: &FrameBounds,
    rng: &mut R,
) -> Vec<BBox> {
    (0..count)
        .map(|_| bounds.clip(perturbation.perturb(center, rng)))
        .collect()
}

/// Request for boxes whose IoU with a reference lies in a window.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SampleSpec {
    pub count: usize,
    pub overlap_min: f64,
    pub overlap_max: f64,
    pub perturbation: Perturbation,
}

impl SampleSpec {
    /// Window `[min, max]` with the default spread around `gt`.
    pub fn window(gt: &BBox, count: usize, overlap_min: f64, overlap_max: f64) -> Self {
        SampleSpec {
            count,
            overlap_min,
            overlap_max,
            perturbation: Perturbation::default_for(gt),
        }
    }
}

/// Rejection attempts allowed per requested sample.
pub const REJECTION_BUDGET: usize = 100;

/// Rejection-samples exactly `spec.count` boxes whose IoU with `gt` falls in
/// `[overlap_min, overlap_max]`.
///
/// Proposals cycle through Gaussian spreads of 0.25×, 0.5×, 1× and 2× the
/// spec perturbation plus a uniform placement anywhere in the frame, so both
/// tight positive windows and low-overlap negative windows are reachable.
pub fn sample_by_overlap<R: Rng + ?Sized>(
    gt: &BBox,
    bounds: &FrameBounds,
    spec: &SampleSpec,
    rng: &mut R,
) -> Result<Vec<BBox>> {
    let SampleSpec {
        count,
        overlap_min: lo,
        overlap_max: hi,
        perturbation,
    } = *spec;
    if !(0.0..=1.0).contains(&lo) || !(0.0..=1.0).contains(&hi) || lo > hi {
        return Err(Error::invalid(format!("overlap window [{lo}, {hi}]")));
    }
    if lo >= 1.0 {
        return Ok(vec![*gt; count]);
    }
    const SPREADS: [f64; 4] = [0.25, 0.5, 1.0, 2.0];
    let mut out = Vec::with_capacity(count);
    let budget = REJECTION_BUDGET * count;
    for attempt in 0..budget {
        if out.len() == count {
            break;
        }
        let slot = attempt % (SPREADS.len() + 1);
        let proposal = if slot < SPREADS.len() {
            perturbation.scaled(SPREADS[slot]).perturb(gt, rng)
        } else {
            let scale = Perturbation {
                var_w: perturbation.var_w,
                var_h: perturbation.var_h,
                ..Perturbation::ZERO
            };
            let moved = BBox {
                x: rng.gen_range(0.0..bounds.width),
                y: rng.gen_range(0.0..bounds.height),
                ..*gt
            };
            scale.perturb(&moved, rng)
        };
        let b = bounds.clip(proposal);
        let o = iou(gt, &b);
        if o >= lo && o <= hi {
            out.push(b);
        }
    }
    if out.len() < count {
        return Err(Error::Infeasible(format!(
            "found {} of {count} boxes with IoU in [{lo}, {hi}] after {budget} attempts",
            out.len()
        )));
    }
    Ok(out)
}

/// An RGB frame with values in `[0, 1]`, stored row-major with interleaved
/// channels.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameImage {
    width: usize,
    height: usize,
    data: Vec<f64>,
    mean: [f64; 3],
}

impl FrameImage {
    pub fn new(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 || data.len() != width * height * 3 {
            return Err(Error::shape(
                "frame",
                format!("{width}×{height}×3 frame with {} values", data.len()),
            ));
        }
        if data.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::invalid("frame pixel outside [0, 1]"));
        }
        let mut mean = [0.0; 3];
        for px in data.chunks_exact(3) {
            for c in 0..3 {
                mean[c] += px[c];
            }
        }
        let n = (width * height) as f64;
        mean.iter_mut().for_each(|m| *m /= n);
        Ok(FrameImage {
            width,
            height,
            data,
            mean,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn channel_mean(&self) -> [f64; 3] {
        self.mean
    }

    pub fn bounds(&self) -> FrameBounds {
        FrameBounds {
            width: self.width as f64,
            height: self.height as f64,
        }
    }

    pub fn pixel(&self, x: usize, y: usize) -> [f64; 3] {
        let i = (y * self.width + x) * 3;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }
}

/// Bilinearly resamples `bbox` to a `3 × side × side` tensor.
///
/// Pixel `j` covers `[j, j+1)`. Sample points falling outside the frame take
/// the frame's per-channel mean.
pub fn crop_resize(frame: &FrameImage, bbox: &BBox, side: usize) -> Result<Tensor> {
    let mut out = Tensor::zeros(&[3, side, side]);
    crop_into(frame, bbox, side, out.data_mut())?;
    Ok(out)
}

/// Crops every box into one `N × 3 × side × side` batch.
pub fn crop_batch(frame: &FrameImage, boxes: &[BBox], side: usize) -> Result<Tensor> {
    let mut out = Tensor::zeros(&[boxes.len(), 3, side, side]);
    let len = 3 * side * side;
    for (i, b) in boxes.iter().enumerate() {
        crop_into(frame, b, side, &mut out.data_mut()[i * len..(i + 1) * len])?;
    }
    Ok(out)
}

fn crop_into(frame: &FrameImage, bbox: &BBox, side: usize, dst: &mut [f64]) -> Result<()> {
    if side == 0 {
        return Err(Error::invalid("crop side must be positive"));
    }
    if !bbox.is_valid() {
        return Err(Error::invalid(format!("invalid crop box {bbox:?}")));
    }
    let (fw, fh) = (frame.width as f64, frame.height as f64);
    if bbox.right() <= 0.0 || bbox.bottom() <= 0.0 || bbox.left() >= fw || bbox.top() >= fh {
        return Err(Error::invalid(format!("crop box {bbox:?} lies outside the frame")));
    }
    let plane = side * side;
    let sx = bbox.w / side as f64;
    let sy = bbox.h / side as f64;
    let (w, h) = (frame.width, frame.height);
    // per-axis (low index, high index, high weight) or None when outside
    let axis = |start: f64, step: f64, i: usize, extent: usize| -> Option<(usize, usize, f64)> {
        let u = start + (i as f64 + 0.5) * step - 0.5;
        if u < -0.5 || u > extent as f64 - 0.5 {
            return None;
        }
        let u = u.clamp(0.0, (extent - 1) as f64);
        let lo = u.floor() as usize;
        let hi = (lo + 1).min(extent - 1);
        Some((lo, hi, u - lo as f64))
    };
    let cols: Vec<_> = (0..side).map(|i| axis(bbox.left(), sx, i, w)).collect();
    for oy in 0..side {
        let row = axis(bbox.top(), sy, oy, h);
        for (ox, col) in cols.iter().enumerate() {
            let o = oy * side + ox;
            match (row, *col) {
                (Some((y0, y1, fy)), Some((x0, x1, fx))) => {
                    let p00 = frame.pixel(x0, y0);
                    let p01 = frame.pixel(x1, y0);
                    let p10 = frame.pixel(x0, y1);
                    let p11 = frame.pixel(x1, y1);
                    for c in 0..3 {
                        let top = p00[c] + (p01[c] - p00[c]) * fx;
                        let bot = p10[c] + (p11[c] - p10[c]) * fx;
                        dst[c * plane + o] = top + (bot - top) * fy;
                    }
                }
                _ => {
                    for c in 0..3 {
                        dst[c * plane + o] = frame.mean[c];
                    }
                }
            }
        }
    }
    Ok(())
}
