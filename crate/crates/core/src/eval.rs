//! One-pass evaluation: per-frame overlap, success curves, and
//! attribute-sliced AUC tables. Nothing here touches the networks, so any
//! tracker's result files can be scored.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::regions::{iou, BBox};

/// Sequence attribute codes of the OTB benchmark.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum AttributeTag {
    /// Illumination variation.
    IV,
    /// Out-of-plane rotation.
    OPR,
    /// Scale variation.
    SV,
    /// Occlusion.
    OCC,
    /// Deformation.
    DEF,
    /// Motion blur.
    MB,
    /// Fast motion.
    FM,
    /// In-plane rotation.
    IPR,
    /// Out of view.
    OV,
    /// Background clutter.
    BC,
    /// Low resolution.
    LR,
}

impl AttributeTag {
    pub const ALL: [AttributeTag; 11] = [
        AttributeTag::IV,
        AttributeTag::OPR,
        AttributeTag::SV,
        AttributeTag::OCC,
        AttributeTag::DEF,
        AttributeTag::MB,
        AttributeTag::FM,
        AttributeTag::IPR,
        AttributeTag::OV,
        AttributeTag::BC,
        AttributeTag::LR,
    ];

    pub fn code(&self) -> &'static str {
        match self {
            AttributeTag::IV => "IV",
            AttributeTag::OPR => "OPR",
            AttributeTag::SV => "SV",
            AttributeTag::OCC => "OCC",
            AttributeTag::DEF => "DEF",
            AttributeTag::MB => "MB",
            AttributeTag::FM => "FM",
            AttributeTag::IPR => "IPR",
            AttributeTag::OV => "OV",
            AttributeTag::BC => "BC",
            AttributeTag::LR => "LR",
        }
    }
}

impl fmt::Display for AttributeTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

impl FromStr for AttributeTag {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        AttributeTag::ALL
            .into_iter()
            .find(|t| t.code() == s.trim())
            .ok_or_else(|| Error::invalid(format!("unknown attribute tag {s:?}")))
    }
}

/// Per-frame IoU between predictions and ground truth.
pub fn overlap_series(pred: &[BBox], gt: &[BBox]) -> Result<Vec<f64>> {
    if pred.len() != gt.len() {
        return Err(Error::shape(
            "overlap_series",
            format!("{} predictions for {} ground-truth frames", pred.len(), gt.len()),
        ));
    }
    Ok(pred.iter().zip(gt).map(|(p, g)| iou(p, g)).collect())
}

/// Thresholds 0, 0.05, ..., 1 (21 points).
pub fn default_grid() -> Vec<f64> {
    (0..=20).map(|i| i as f64 / 20.0).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuccessCurve {
    pub thresholds: Vec<f64>,
    pub ratios: Vec<f64>,
    pub auc: f64,
}

/// Fraction of frames with overlap strictly above each threshold.
///
/// The AUC is the mean ratio over the thresholds below 1. A ratio at
/// `τ = 1` is always zero under the strict inequality, so it is reported in
/// the curve but left out of the area.
pub fn success_curve(overlaps: &[f64], grid: &[f64]) -> Result<SuccessCurve> {
    if overlaps.is_empty() {
        return Err(Error::invalid("success curve of an empty overlap series"));
    }
    if grid.is_empty()
        || grid.iter().any(|t| !(0.0..=1.0).contains(t))
        || grid.windows(2).any(|w| w[0] >= w[1])
    {
        return Err(Error::invalid("threshold grid must be strictly ascending within [0, 1]"));
    }
    let n = overlaps.len() as f64;
    let ratios: Vec<f64> = grid
        .iter()
        .map(|&t| overlaps.iter().filter(|&&o| o > t).count() as f64 / n)
        .collect();
    let below_one: Vec<f64> = grid
        .iter()
        .zip(&ratios)
        .filter(|(&t, _)| t < 1.0)
        .map(|(_, &r)| r)
        .collect();
    let auc = if below_one.is_empty() {
        0.0
    } else {
        below_one.iter().sum::<f64>() / below_one.len() as f64
    };
    Ok(SuccessCurve {
        thresholds: grid.to_vec(),
        ratios,
        auc,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttributeRow {
    pub sequences: usize,
    /// `None` when no sequence carries the tag.
    pub mean_auc: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttributeReport {
    pub overall_auc: f64,
    pub sequences: usize,
    pub attributes: BTreeMap<String, AttributeRow>,
}

impl AttributeReport {
    pub fn present(&self) -> impl Iterator<Item = (&str, f64)> {
        self.attributes
            .iter()
            .filter_map(|(k, r)| r.mean_auc.map(|a| (k.as_str(), a)))
    }
}

/// Mean AUC overall and per attribute code.
pub fn attribute_report(
    curves: &BTreeMap<String, SuccessCurve>,
    tags: &BTreeMap<String, Vec<String>>,
) -> Result<AttributeReport> {
    if curves.is_empty() {
        return Err(Error::invalid("attribute report over zero sequences"));
    }
    let mut sums: BTreeMap<AttributeTag, (f64, usize)> = BTreeMap::new();
    for (name, codes) in tags {
        let parsed = codes
            .iter()
            .map(|c| c.parse::<AttributeTag>())
            .collect::<Result<Vec<_>>>()?;
        let Some(curve) = curves.get(name) else {
            continue;
        };
        let mut unique = parsed;
        unique.sort();
        unique.dedup();
        for tag in unique {
            let e = sums.entry(tag).or_default();
            e.0 += curve.auc;
            e.1 += 1;
        }
    }
    let attributes = AttributeTag::ALL
        .iter()
        .map(|t| {
            let (sum, count) = sums.get(t).copied().unwrap_or((0.0, 0));
            let row = AttributeRow {
                sequences: count,
                mean_auc: (count > 0).then(|| sum / count as f64),
            };
            (t.code().to_string(), row)
        })
        .collect();
    let overall_auc = curves.values().map(|c| c.auc).sum::<f64>() / curves.len() as f64;
    Ok(AttributeReport {
        overall_auc,
        sequences: curves.len(),
        attributes,
    })
}

/// Threshold-wise mean of curves sharing one grid. Its AUC equals the mean
/// of the individual AUCs.
pub fn mean_curve<'a>(curves: impl IntoIterator<Item = &'a SuccessCurve>) -> Result<SuccessCurve> {
    let curves: Vec<&SuccessCurve> = curves.into_iter().collect();
    let first = curves.first().ok_or_else(|| Error::invalid("mean of zero curves"))?;
    if curves.iter().any(|c| c.thresholds != first.thresholds) {
        return Err(Error::invalid("curves use different threshold grids"));
    }
    let n = curves.len() as f64;
    let ratios = (0..first.ratios.len())
        .map(|i| curves.iter().map(|c| c.ratios[i]).sum::<f64>() / n)
        .collect();
    Ok(SuccessCurve {
        thresholds: first.thresholds.clone(),
        ratios,
        auc: curves.iter().map(|c| c.auc).sum::<f64>() / n,
    })
}

/// `threshold,ratio` rows with a header line.
pub fn curve_csv(curve: &SuccessCurve) -> String {
    let mut out = String::from("threshold,ratio\n");
    for (t, r) in curve.thresholds.iter().zip(&curve.ratios) {
        out.push_str(&format!("{t},{r}\n"));
    }
    out
}
