//! Sequence ingestion and result files.
//!
//! A sequence directory follows the OTB convention:
//!
//! ```text
//! <name>/
//!   img/0001.ppm, 0002.ppm, ...   numbered frames (PPM or PNG)
//!   groundtruth_rect.txt          one `x,y,w,h` line per frame, top-left corner form,
//!                                 comma, tab or space separated
//!   meta.toml                     optional: category = "disk", tags = ["SV", "IV"]
//! ```
//!
//! Boxes are converted to center form on load and back to corner form on
//! write.

pub mod synth;

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::AttributeTag;
use crate::regions::{BBox, FrameImage};

pub use synth::{generate_synthetic, plan_dataset, DatasetSpec, Motion, Shape, SynthSpec};

pub const IMAGE_DIR: &str = "img";
pub const GT_FILE: &str = "groundtruth_rect.txt";
pub const META_FILE: &str = "meta.toml";

#[derive(Debug, Clone, PartialEq)]
pub struct Sequence {
    pub name: String,
    pub frames: Vec<FrameImage>,
    /// Center-form ground truth, one box per frame.
    pub gt: Vec<BBox>,
    pub category: Option<String>,
    pub tags: Vec<AttributeTag>,
}

impl Sequence {
    pub fn validate(&self) -> Result<()> {
        if self.frames.len() < 2 {
            return Err(Error::invalid(format!(
                "sequence {} has {} frames, need at least 2",
                self.name,
                self.frames.len()
            )));
        }
        if self.gt.len() != self.frames.len() {
            return Err(Error::invalid(format!(
                "sequence {} has {} frames but {} ground-truth boxes",
                self.name,
                self.frames.len(),
                self.gt.len()
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Default, Serialize, Deserialize)]
struct Meta {
    #[serde(default)]
    category: Option<String>,
    #[serde(default)]
    tags: Vec<String>,
}

/// Parses corner-form box lines. Blank trailing lines are ignored; any other
/// malformed line is an error naming the file and line.
pub fn parse_boxes(text: &str, path: &Path) -> Result<Vec<BBox>> {
    let lines: Vec<&str> = text.lines().collect();
    let last = lines.iter().rposition(|l| !l.trim().is_empty()).map_or(0, |i| i + 1);
    let mut boxes = Vec::with_capacity(last);
    for (i, line) in lines[..last].iter().enumerate() {
        let err = |msg: String| Error::Parse {
            path: path.to_path_buf(),
            line: i + 1,
            msg,
        };
        let fields: Vec<&str> = line
            .split(|c: char| c == ',' || c.is_whitespace())
            .filter(|f| !f.is_empty())
            .collect();
        if fields.len() != 4 {
            return Err(err(format!("expected 4 values, found {}", fields.len())));
        }
        let mut v = [0.0; 4];
        for (slot, f) in v.iter_mut().zip(&fields) {
            *slot = f.parse().map_err(|_| err(format!("cannot parse {f:?} as a number")))?;
        }
        let b = BBox::from_corner(v[0], v[1], v[2], v[3])
            .map_err(|_| err(format!("box {v:?} has non-positive or non-finite extent")))?;
        boxes.push(b);
    }
    Ok(boxes)
}

pub fn read_boxes(path: &Path) -> Result<Vec<BBox>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_boxes(&text, path)
}

/// Corner-form lines, comma separated, shortest exact decimal form.
pub fn format_boxes(boxes: &[BBox]) -> String {
    let mut out = String::new();
    for b in boxes {
        let [l, t, w, h] = b.to_corner();
        out.push_str(&format!("{l},{t},{w},{h}\n"));
    }
    out
}

/// Writes one tracker output file.
pub fn write_results(name: &str, estimates: &[BBox], path: &Path) -> Result<()> {
    if estimates.is_empty() {
        return Err(Error::invalid(format!("no estimates to write for sequence {name}")));
    }
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(path, format_boxes(estimates)).map_err(|e| Error::io(path, e))
}

fn frame_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let entries = fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut numbered = Vec::new();
    for entry in entries {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        let ext = path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase);
        if !matches!(ext.as_deref(), Some("ppm" | "png")) {
            continue;
        }
        let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or_default();
        let index: u64 = stem
            .parse()
            .map_err(|_| Error::invalid(format!("{}: frame file name is not a number", path.display())))?;
        numbered.push((index, path));
    }
    numbered.sort();
    if numbered.windows(2).any(|w| w[0].0 == w[1].0) {
        return Err(Error::invalid(format!("{}: duplicate frame numbers", dir.display())));
    }
    Ok(numbered.into_iter().map(|(_, p)| p).collect())
}

pub fn read_frame(path: &Path) -> Result<FrameImage> {
    let img = image::open(path)
        .map_err(|source| Error::Image {
            path: path.to_path_buf(),
            source,
        })?
        .to_rgb8();
    let (w, h) = img.dimensions();
    let data = img.into_raw().into_iter().map(|v| v as f64 / 255.0).collect();
    FrameImage::new(w as usize, h as usize, data)
}

/// Writes a frame as binary PPM; values are rounded to 8 bits.
pub fn write_frame(frame: &FrameImage, path: &Path) -> Result<()> {
    let bytes: Vec<u8> = frame.data().iter().map(|&v| (v * 255.0).round() as u8).collect();
    let img = image::RgbImage::from_raw(frame.width() as u32, frame.height() as u32, bytes)
        .expect("buffer length matches frame size");
    img.save_with_format(path, image::ImageFormat::Pnm)
        .map_err(|source| Error::Image {
            path: path.to_path_buf(),
            source,
        })
}

/// Loads an OTB-style sequence directory.
pub fn load_sequence(dir: &Path) -> Result<Sequence> {
    let name = dir
        .file_name()
        .and_then(|n| n.to_str())
        .unwrap_or("sequence")
        .to_string();
    let gt_path = dir.join(GT_FILE);
    let gt = read_boxes(&gt_path)?;
    let files = frame_files(&dir.join(IMAGE_DIR))?;
    if files.len() != gt.len() {
        return Err(Error::Parse {
            path: gt_path,
            line: gt.len(),
            msg: format!("{} boxes for {} frames", gt.len(), files.len()),
        });
    }
    let frames = files.iter().map(|p| read_frame(p)).collect::<Result<Vec<_>>>()?;
    let meta_path = dir.join(META_FILE);
    let meta: Meta = if meta_path.exists() {
        let text = fs::read_to_string(&meta_path).map_err(|e| Error::io(&meta_path, e))?;
        toml::from_str(&text).map_err(|e| Error::Parse {
            path: meta_path.clone(),
            line: e.span().map_or(0, |s| text[..s.start].lines().count().max(1)),
            msg: e.message().to_string(),
        })?
    } else {
        Meta::default()
    };
    let tags = meta
        .tags
        .iter()
        .map(|t| t.parse())
        .collect::<Result<Vec<AttributeTag>>>()?;
    let seq = Sequence {
        name,
        frames,
        gt,
        category: meta.category,
        tags,
    };
    seq.validate()?;
    Ok(seq)
}

/// Writes a sequence in the layout [`load_sequence`] reads.
pub fn write_sequence(seq: &Sequence, dir: &Path) -> Result<()> {
    seq.validate()?;
    let img_dir = dir.join(IMAGE_DIR);
    fs::create_dir_all(&img_dir).map_err(|e| Error::io(&img_dir, e))?;
    for (i, frame) in seq.frames.iter().enumerate() {
        write_frame(frame, &img_dir.join(format!("{:04}.ppm", i + 1)))?;
    }
    let gt_path = dir.join(GT_FILE);
    fs::write(&gt_path, format_boxes(&seq.gt)).map_err(|e| Error::io(&gt_path, e))?;
    let meta = Meta {
        category: seq.category.clone(),
        tags: seq.tags.iter().map(|t| t.code().to_string()).collect(),
    };
    let meta_path = dir.join(META_FILE);
    let text = toml::to_string(&meta).map_err(|e| Error::Format(e.to_string()))?;
    fs::write(&meta_path, text).map_err(|e| Error::io(&meta_path, e))
}

/// Sequence directories directly under `root` (those holding a ground-truth
/// file), sorted by name.
pub fn list_sequences(root: &Path) -> Result<Vec<PathBuf>> {
    let mut dirs = Vec::new();
    for entry in fs::read_dir(root).map_err(|e| Error::io(root, e))? {
        let path = entry.map_err(|e| Error::io(root, e))?.path();
        if path.join(GT_FILE).is_file() {
            dirs.push(path);
        }
    }
    dirs.sort();
    Ok(dirs)
}

/// Name → tag codes for every sequence under `root`, read from the meta
/// files only.
pub fn read_tags(root: &Path) -> Result<BTreeMap<String, Vec<String>>> {
    let mut out = BTreeMap::new();
    for dir in list_sequences(root)? {
        let name = dir.file_name().and_then(|n| n.to_str()).unwrap_or_default().to_string();
        let meta_path = dir.join(META_FILE);
        let tags = if meta_path.exists() {
            let text = fs::read_to_string(&meta_path).map_err(|e| Error::io(&meta_path, e))?;
            let meta: Meta = toml::from_str(&text).map_err(|e| Error::Parse {
                path: meta_path.clone(),
                line: 0,
                msg: e.message().to_string(),
            })?;
            meta.tags
        } else {
            Vec::new()
        };
        out.insert(name, tags);
    }
    Ok(out)
}
