//! The tracker networks: a shared convolutional trunk (NetS) feeding a
//! category classifier (NetC) and one foreground/background head per
//! category (the NetT branches).

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{softmax_forward, Init, LayerParams, LayerSpec, LrnParams, Sequential};
use crate::tensor::Tensor;

/// Name of the catch-all category appended after the configured ones.
pub const CATEGORY_X: &str = "X";

/// Column of the foreground probability in a branch's softmax output.
pub const FOREGROUND: usize = 1;
pub const BACKGROUND: usize = 0;

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CategoryLabel {
    pub index: usize,
    pub name: String,
    pub is_category_x: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    /// Named categories, excluding category X which is always appended last.
    pub categories: Vec<String>,
    pub input_side: usize,
    pub trunk: Vec<LayerSpec>,
    pub hidden_c: usize,
    pub hidden_t: usize,
    pub dropout: f64,
    pub trunk_init: Init,
    pub head_init: Init,
    pub seed: u64,
}

fn trunk_block(out_channels: usize, kernel: usize, stride: usize, pad: usize, lrn_pool: bool) -> Vec<LayerSpec> {
    let mut v = vec![
        LayerSpec::Conv {
            out_channels,
            kernel,
            stride,
            pad,
        },
        LayerSpec::Relu,
    ];
    if lrn_pool {
        v.push(LayerSpec::Lrn(LrnParams::default()));
        v.push(LayerSpec::MaxPool { window: 2, stride: 2 });
    }
    v
}

impl ModelConfig {
    /// The full-size layout: 107-pixel input, 64/256/256 conv channels,
    /// 256-wide heads.
    pub fn full_scale(categories: Vec<String>) -> Self {
        let trunk = [
            trunk_block(64, 11, 4, 0, true),
            trunk_block(256, 5, 1, 2, true),
            trunk_block(256, 3, 1, 1, false),
        ]
        .concat();
        ModelConfig {
            categories,
            input_side: 107,
            trunk,
            hidden_c: 256,
            hidden_t: 256,
            dropout: 0.5,
            trunk_init: Init::Gaussian { std: 0.01 },
            head_init: Init::Gaussian { std: 0.01 },
            seed: 0,
        }
    }

    /// A CPU-trainable layout: 51-pixel input, 16/32/32 conv channels,
    /// 64-wide heads, all He-initialized since everything is trained from
    /// scratch.
    pub fn desk_scale(categories: Vec<String>) -> Self {
        let trunk = [
            trunk_block(16, 7, 2, 0, true),
            trunk_block(32, 5, 1, 2, true),
            trunk_block(32, 3, 1, 1, false),
        ]
        .concat();
        ModelConfig {
            categories,
            input_side: 51,
            trunk,
            hidden_c: 64,
            hidden_t: 64,
            dropout: 0.5,
            trunk_init: Init::He,
            head_init: Init::He,
            seed: 0,
        }
    }

    pub fn labels(&self) -> Vec<CategoryLabel> {
        self.categories
            .iter()
            .map(String::as_str)
            .chain(std::iter::once(CATEGORY_X))
            .enumerate()
            .map(|(index, name)| CategoryLabel {
                index,
                name: name.to_string(),
                is_category_x: name == CATEGORY_X,
            })
            .collect()
    }

    pub fn num_classes(&self) -> usize {
        self.categories.len() + 1
    }

    fn head(&self, hidden: usize, outputs: usize) -> Vec<LayerSpec> {
        vec![
            LayerSpec::Linear { out_features: hidden },
            LayerSpec::Relu,
            LayerSpec::Dropout { rate: self.dropout },
            LayerSpec::Linear { out_features: outputs },
        ]
    }

    fn validate(&self) -> Result<()> {
        if self.categories.is_empty() {
            return Err(Error::invalid("at least one named category is required besides X"));
        }
        let mut seen = std::collections::BTreeSet::new();
        for c in &self.categories {
            if c.is_empty() || c == CATEGORY_X || !seen.insert(c) {
                return Err(Error::invalid(format!("bad or duplicate category name {c:?}")));
            }
        }
        if self.hidden_c == 0 || self.hidden_t == 0 {
            return Err(Error::invalid("hidden widths must be positive"));
        }
        if self.input_side == 0 {
            return Err(Error::invalid("input side must be positive"));
        }
        Ok(())
    }
}

/// All learned parameters of the tracker networks.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelBundle {
    config: ModelConfig,
    labels: Vec<CategoryLabel>,
    pub(crate) net_s: Sequential,
    pub(crate) net_c: Sequential,
    /// One head per label, indexed by `CategoryLabel::index`.
    pub(crate) branches: Vec<Sequential>,
}

/// Builds and initializes a model. Every sub-network draws from its own
/// stream derived from `config.seed`, so the same seed gives identical
/// parameters.
pub fn build_model(config: &ModelConfig) -> Result<ModelBundle> {
    config.validate()?;
    let side = config.input_side;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let net_s = Sequential::new(&config.trunk, &[3, side, side], config.trunk_init, &mut rng)?;
    let feat = [net_s.output_len()];
    let k = config.num_classes();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed.wrapping_add(1));
    let net_c = Sequential::new(&config.head(config.hidden_c, k), &feat, config.head_init, &mut rng)?;
    let branches = (0..k)
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(config.seed.wrapping_add(2 + i as u64));
            Sequential::new(&config.head(config.hidden_t, 2), &feat, config.head_init, &mut rng)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ModelBundle {
        config: config.clone(),
        labels: config.labels(),
        net_s,
        net_c,
        branches,
    })
}

/// Rows processed per trunk pass, bounding activation memory.
const TRUNK_CHUNK: usize = 64;

impl ModelBundle {
    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn labels(&self) -> &[CategoryLabel] {
        &self.labels
    }

    pub fn label(&self, index: usize) -> Option<&CategoryLabel> {
        self.labels.get(index)
    }

    pub fn label_by_name(&self, name: &str) -> Option<&CategoryLabel> {
        self.labels.iter().find(|l| l.name == name)
    }

    pub fn category_x(&self) -> &CategoryLabel {
        self.labels.last().expect("category X is always present")
    }

    pub fn num_classes(&self) -> usize {
        self.labels.len()
    }

    pub fn input_side(&self) -> usize {
        self.config.input_side
    }

    /// Flattened trunk output width `D`.
    pub fn feature_dim(&self) -> usize {
        self.net_s.output_len()
    }

    pub fn net_s(&self) -> &Sequential {
        &self.net_s
    }

    pub fn net_c(&self) -> &Sequential {
        &self.net_c
    }

    pub fn branch(&self, label: &CategoryLabel) -> Result<&Sequential> {
        self.branches
            .get(label.index)
            .filter(|_| self.labels.get(label.index) == Some(label))
            .ok_or_else(|| Error::invalid(format!("no branch for category {:?}", label.name)))
    }

    pub(crate) fn branch_mut(&mut self, label: &CategoryLabel) -> Result<&mut Sequential> {
        self.branch(label)?;
        Ok(&mut self.branches[label.index])
    }

    pub fn branches(&self) -> &[Sequential] {
        &self.branches
    }

    /// Trunk features for an `N × 3 × S × S` batch, flattened to `N × D`.
    pub fn forward_shared(&self, batch: &Tensor) -> Result<Tensor> {
        let side = self.config.input_side;
        if batch.ndim() != 4 || batch.shape()[1..] != [3, side, side] {
            return Err(Error::shape(
                "forward_shared",
                format!("batch {:?} is not N×3×{side}×{side}", batch.shape()),
            ));
        }
        let n = batch.batch();
        let d = self.feature_dim();
        let mut out = Vec::with_capacity(n * d);
        let mut start = 0;
        while start < n {
            let end = (start + TRUNK_CHUNK).min(n);
            let rows: Vec<usize> = (start..end).collect();
            let chunk = if start == 0 && end == n {
                self.net_s.forward(batch)?
            } else {
                self.net_s.forward(&batch.select_rows(&rows))?
            };
            out.extend_from_slice(chunk.data());
            start = end;
        }
        Tensor::from_vec(&[n, d], out)
    }

    fn check_features(&self, op: &'static str, features: &Tensor) -> Result<()> {
        if features.ndim() != 2 || features.shape()[1] != self.feature_dim() {
            return Err(Error::shape(
                op,
                format!("features {:?}, expected N×{}", features.shape(), self.feature_dim()),
            ));
        }
        Ok(())
    }

    /// Per-category probabilities, `N × K`.
    pub fn forward_classify(&self, features: &Tensor) -> Result<Tensor> {
        self.check_features("forward_classify", features)?;
        Ok(softmax_forward(&self.net_c.forward(features)?))
    }

    /// Background/foreground probabilities from one branch, `N × 2`.
    pub fn branch_probs(&self, branch: &CategoryLabel, features: &Tensor) -> Result<Tensor> {
        self.check_features("forward_track", features)?;
        Ok(softmax_forward(&self.branch(branch)?.forward(features)?))
    }

    /// Foreground probability per row.
    pub fn forward_track(&self, branch: &CategoryLabel, features: &Tensor) -> Result<Vec<f64>> {
        let p = self.branch_probs(branch, features)?;
        Ok((0..p.batch()).map(|r| p.row(r)[FOREGROUND]).collect())
    }

    /// Fingerprint of the trunk parameters.
    pub fn net_s_checksum(&self) -> u64 {
        checksum(self.net_s.params())
    }

    pub fn net_c_checksum(&self) -> u64 {
        checksum(self.net_c.params())
    }

    pub fn branch_checksum(&self, index: usize) -> u64 {
        checksum(self.branches[index].params())
    }

    fn prefixed(&self) -> Vec<(String, &Sequential)> {
        let mut nets = vec![("net_s".to_string(), &self.net_s), ("net_c".to_string(), &self.net_c)];
        for (label, b) in self.labels.iter().zip(&self.branches) {
            nets.push((format!("net_t.{}", label.name), b));
        }
        nets
    }

    /// Named parameter groups in a fixed order, used by persistence.
    pub(crate) fn named_params(&self) -> Vec<(String, &LayerParams)> {
        let mut out = Vec::new();
        for (prefix, net) in self.prefixed() {
            for (i, layer) in net.layers().iter().enumerate() {
                if let Some(p) = &layer.params {
                    out.push((format!("{prefix}.{i}"), p));
                }
            }
        }
        out
    }

    pub(crate) fn named_params_mut(&mut self) -> Vec<(String, &mut LayerParams)> {
        let names: Vec<String> = self.named_params().into_iter().map(|(n, _)| n).collect();
        let mut params: Vec<&mut LayerParams> = self.net_s.params_mut().collect();
        params.extend(self.net_c.params_mut());
        for b in self.branches.iter_mut() {
            params.extend(b.params_mut());
        }
        names.into_iter().zip(params).collect()
    }
}

/// FNV-1a over the bit patterns of every weight and bias.
fn checksum<'a>(params: impl Iterator<Item = &'a LayerParams>) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for p in params {
        for v in p.weights.data().iter().chain(p.bias.data()) {
            for byte in v.to_bits().to_le_bytes() {
                h ^= byte as u64;
                h = h.wrapping_mul(0x0000_0100_0000_01b3);
            }
        }
    }
    h
}
