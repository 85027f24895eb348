//! The multi-stream interaction scorer.
//!
//! Each active stream maps one view of a human-object proposal to `K`
//! per-class scores; the final score is their sum (plus the optional
//! detection-score offset).

use std::fmt;
use std::io::{Read, Write};
use std::path::Path;
use std::str::FromStr;

use image::RgbImage;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::bbox::BBox;
use crate::error::{Error, Result};
use crate::interaction::{attention_window, encode_ip, encode_vec, PairFeatureMode, DEFAULT_IP_SIZE};
use crate::nn::{Gradients, LayerSpec, Network, Scalar, Trace};
use crate::proposals::Proposal;

pub const DEFAULT_PATCH_SIZE: usize = 64;
pub const HIDDEN: usize = 256;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PairwiseArch {
    Fc,
    Conv,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScoreOffset {
    /// One neuron whose output is added to every class.
    Shared,
    PerClass,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PairwiseConfig {
    pub arch: PairwiseArch,
    pub mode: PairFeatureMode,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StreamKind {
    Human,
    Object,
    /// Patch network on the attention-window crop.
    Union,
    /// Interaction-pattern network.
    Pairwise,
    /// Centre-offset network.
    Vec,
    /// Linear map of (human score, object score).
    DetectionScores,
    /// Affine map of the object score.
    Offset,
}

impl StreamKind {
    pub const ALL: [StreamKind; 7] = [
        StreamKind::Human,
        StreamKind::Object,
        StreamKind::Union,
        StreamKind::Pairwise,
        StreamKind::Vec,
        StreamKind::DetectionScores,
        StreamKind::Offset,
    ];

    pub fn name(self) -> &'static str {
        match self {
            StreamKind::Human => "human",
            StreamKind::Object => "object",
            StreamKind::Union => "union",
            StreamKind::Pairwise => "pairwise",
            StreamKind::Vec => "vec",
            StreamKind::DetectionScores => "detection-scores",
            StreamKind::Offset => "offset",
        }
    }
}

impl fmt::Display for StreamKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for StreamKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        StreamKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown stream `{s}`")))
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct StreamConfig {
    pub human: bool,
    pub object: bool,
    pub union: bool,
    pub detection_scores: bool,
    /// Interaction-pattern (`ip0`/`ip1`) or centre-offset (`vec0`/`vec1`) stream.
    pub pairwise: Option<PairwiseConfig>,
    pub score_offset: Option<ScoreOffset>,
    pub patch_size: usize,
    pub ip_size: usize,
}

impl Default for StreamConfig {
    fn default() -> Self {
        StreamConfig {
            human: true,
            object: true,
            union: false,
            detection_scores: false,
            pairwise: None,
            score_offset: None,
            patch_size: DEFAULT_PATCH_SIZE,
            ip_size: DEFAULT_IP_SIZE,
        }
    }
}

/// Names accepted by [`StreamConfig::preset`].
pub const PRESETS: &[&str] = &[
    "ho",
    "ho-ip0-fc",
    "ho-ip0-conv",
    "ho-ip1-fc",
    "ho-ip1-conv",
    "ho-vec0",
    "ho-vec1",
    "ho-ip1-conv-s",
    "union",
    "score-linear",
];

impl StreamConfig {
    pub fn preset(name: &str) -> Result<Self> {
        let none = StreamConfig {
            human: false,
            object: false,
            ..Default::default()
        };
        let pair = |arch, mode| {
            Some(PairwiseConfig { arch, mode })
        };
        use PairFeatureMode::*;
        use PairwiseArch::*;
        let cfg = match name {
            "ho" => StreamConfig::default(),
            "ho-ip0-fc" => StreamConfig { pairwise: pair(Fc, Ip0), ..Default::default() },
            "ho-ip0-conv" => StreamConfig { pairwise: pair(Conv, Ip0), ..Default::default() },
            "ho-ip1-fc" => StreamConfig { pairwise: pair(Fc, Ip1), ..Default::default() },
            "ho-ip1-conv" => StreamConfig { pairwise: pair(Conv, Ip1), ..Default::default() },
            "ho-vec0" => StreamConfig { pairwise: pair(Fc, Vec0), ..Default::default() },
            "ho-vec1" => StreamConfig { pairwise: pair(Fc, Vec1), ..Default::default() },
            "ho-ip1-conv-s" => StreamConfig {
                pairwise: pair(Conv, Ip1),
                score_offset: Some(ScoreOffset::Shared),
                ..Default::default()
            },
            "union" => StreamConfig { union: true, ..none },
            "score-linear" => StreamConfig { detection_scores: true, ..none },
            _ => {
                return Err(Error::Config(format!(
                    "unknown model preset `{name}` (expected one of {})",
                    PRESETS.join(", ")
                )))
            }
        };
        Ok(cfg)
    }

    pub fn with_sizes(mut self, patch_size: usize, ip_size: usize) -> Self {
        self.patch_size = patch_size;
        self.ip_size = ip_size;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.patch_size == 0 || !self.patch_size.is_multiple_of(4) {
            return Err(Error::Config(format!(
                "patch_size {} must be a positive multiple of 4",
                self.patch_size
            )));
        }
        if let Some(p) = self.pairwise {
            if p.mode.is_pattern() {
                if p.arch == PairwiseArch::Conv && !self.ip_size.is_multiple_of(4) {
                    return Err(Error::Config(format!(
                        "ip_size {} must be a multiple of 4 for the conv pairwise stream",
                        self.ip_size
                    )));
                }
                if self.ip_size < 2 {
                    return Err(Error::Config("ip_size must be at least 2".into()));
                }
            } else if p.arch == PairwiseArch::Conv {
                return Err(Error::Config(format!(
                    "{:?} features need the fc pairwise architecture",
                    p.mode
                )));
            }
        }
        if self.streams().is_empty() {
            return Err(Error::Config("no stream is active".into()));
        }
        Ok(())
    }

    /// Active streams in evaluation order.
    pub fn streams(&self) -> Vec<StreamKind> {
        StreamKind::ALL
            .into_iter()
            .filter(|k| match k {
                StreamKind::Human => self.human,
                StreamKind::Object => self.object,
                StreamKind::Union => self.union,
                StreamKind::Pairwise => self.pairwise.is_some_and(|p| p.mode.is_pattern()),
                StreamKind::Vec => self.pairwise.is_some_and(|p| !p.mode.is_pattern()),
                StreamKind::DetectionScores => self.detection_scores,
                StreamKind::Offset => self.score_offset.is_some(),
            })
            .collect()
    }

    pub fn input_shape(&self, kind: StreamKind) -> Vec<usize> {
        match kind {
            StreamKind::Human | StreamKind::Object | StreamKind::Union => {
                vec![3, self.patch_size, self.patch_size]
            }
            StreamKind::Pairwise => vec![2, self.ip_size, self.ip_size],
            StreamKind::Vec | StreamKind::DetectionScores => vec![2],
            StreamKind::Offset => vec![1],
        }
    }

    pub fn layer_specs(&self, kind: StreamKind, k: usize) -> Vec<LayerSpec> {
        match kind {
            StreamKind::Human | StreamKind::Object | StreamKind::Union => patch_specs(k),
            StreamKind::Pairwise => match self.pairwise.map(|p| p.arch) {
                Some(PairwiseArch::Conv) => pairwise_conv_specs(k),
                _ => pairwise_fc_specs(k),
            },
            StreamKind::Vec => vec![
                LayerSpec::Dense { out: HIDDEN },
                LayerSpec::Relu,
                LayerSpec::Dense { out: k },
            ],
            StreamKind::DetectionScores => vec![LayerSpec::Dense { out: k }],
            StreamKind::Offset => vec![LayerSpec::Dense {
                out: match self.score_offset {
                    Some(ScoreOffset::PerClass) => k,
                    _ => 1,
                },
            }],
        }
    }
}

pub fn patch_specs(k: usize) -> Vec<LayerSpec> {
    vec![
        LayerSpec::Conv { kernel: 5, filters: 32 },
        LayerSpec::Relu,
        LayerSpec::MaxPool,
        LayerSpec::Conv { kernel: 5, filters: 64 },
        LayerSpec::Relu,
        LayerSpec::MaxPool,
        LayerSpec::Flatten,
        LayerSpec::Dense { out: HIDDEN },
        LayerSpec::Relu,
        LayerSpec::Dense { out: k },
    ]
}

pub fn pairwise_conv_specs(k: usize) -> Vec<LayerSpec> {
    vec![
        LayerSpec::Conv { kernel: 5, filters: 16 },
        LayerSpec::Relu,
        LayerSpec::MaxPool,
        LayerSpec::Conv { kernel: 5, filters: 32 },
        LayerSpec::Relu,
        LayerSpec::MaxPool,
        LayerSpec::Flatten,
        LayerSpec::Dense { out: HIDDEN },
        LayerSpec::Relu,
        LayerSpec::Dense { out: k },
    ]
}

pub fn pairwise_fc_specs(k: usize) -> Vec<LayerSpec> {
    vec![
        LayerSpec::Flatten,
        LayerSpec::Dense { out: HIDDEN },
        LayerSpec::Relu,
        LayerSpec::Dense { out: k },
    ]
}

/// Exact parameter count of a layer stack, without allocating it.
pub fn count_params(input: &[usize], specs: &[LayerSpec]) -> Result<usize> {
    let mut shape = input.to_vec();
    let mut total = 0;
    for s in specs {
        total += s.param_count(&shape);
        shape = s.output_shape(&shape)?;
    }
    Ok(total)
}

/// Largest allowed `|conv - fc| / conv` for the two pairwise architectures.
pub const PARITY_TOLERANCE: f64 = 0.10;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Parity {
    pub conv: usize,
    pub fc: usize,
    pub relative_difference: f64,
}

/// Parameter counts of the conv and fc pairwise networks for `k` classes;
/// an error when they differ by more than [`PARITY_TOLERANCE`].
pub fn pairwise_param_parity(k: usize, ip_size: usize) -> Result<Parity> {
    if ip_size == 0 || !ip_size.is_multiple_of(4) {
        return Err(Error::Config(format!(
            "ip_size {ip_size} must be a positive multiple of 4"
        )));
    }
    let input = [2, ip_size, ip_size];
    let conv = count_params(&input, &pairwise_conv_specs(k))?;
    let fc = count_params(&input, &pairwise_fc_specs(k))?;
    let relative_difference = conv.abs_diff(fc) as f64 / conv as f64;
    if relative_difference > PARITY_TOLERANCE {
        return Err(Error::Config(format!(
            "pairwise parity broken: conv {conv} vs fc {fc} parameters ({:.1}% apart) at ip_size {ip_size}",
            100.0 * relative_difference
        )));
    }
    Ok(Parity {
        conv,
        fc,
        relative_difference,
    })
}

/// Bilinear crop of `bbox` resized to `size x size`, channel-major, with
/// values mapped to `[-0.5, 0.5]`.
pub fn crop_resize<T: Scalar>(img: &RgbImage, bbox: &BBox, size: usize) -> Vec<T> {
    let (w, h) = (img.width() as usize, img.height() as usize);
    let sx = bbox.width() / size as f64;
    let sy = bbox.height() / size as f64;
    let sample_axis = |start: f64, step: f64, limit: usize| -> Vec<(usize, usize, f64)> {
        (0..size)
            .map(|i| {
                let c = (start + (i as f64 + 0.5) * step - 0.5).clamp(0.0, (limit - 1) as f64);
                let i0 = c.floor() as usize;
                let i1 = (i0 + 1).min(limit - 1);
                (i0, i1, c - i0 as f64)
            })
            .collect()
    };
    let xs = sample_axis(bbox.x1, sx, w);
    let ys = sample_axis(bbox.y1, sy, h);
    let raw = img.as_raw();
    let px = |x: usize, y: usize, c: usize| raw[(y * w + x) * 3 + c] as f64;
    let mut out = vec![T::zero(); 3 * size * size];
    for (r, &(y0, y1, fy)) in ys.iter().enumerate() {
        for (col, &(x0, x1, fx)) in xs.iter().enumerate() {
            for c in 0..3 {
                let top = px(x0, y0, c) * (1.0 - fx) + px(x1, y0, c) * fx;
                let bottom = px(x0, y1, c) * (1.0 - fx) + px(x1, y1, c) * fx;
                let v = top * (1.0 - fy) + bottom * fy;
                out[(c * size + r) * size + col] = T::of(v / 255.0 - 0.5);
            }
        }
    }
    out
}

/// Per-stream input vectors for one proposal, in [`StreamConfig::streams`] order.
#[derive(Clone, Debug)]
pub struct StreamInputs<T> {
    pub inputs: Vec<Vec<T>>,
}

/// Result of one forward pass.
#[derive(Clone, Debug, PartialEq)]
pub struct Scores<T> {
    /// Final per-class scores; all `-inf` for a degenerate proposal.
    pub total: Vec<T>,
    /// Each active stream's contribution (offset streams keep their own width).
    pub per_stream: Vec<(StreamKind, Vec<T>)>,
    pub degenerate: bool,
}

/// Sum stream outputs into `k` class scores; width-1 outputs are broadcast.
pub fn combine<T: Scalar>(per_stream: &[(StreamKind, Vec<T>)], k: usize) -> Vec<T> {
    let mut s = vec![T::zero(); k];
    for (_, out) in per_stream {
        if out.len() == 1 && k != 1 {
            s.iter_mut().for_each(|v| *v += out[0]);
        } else {
            for (v, o) in s.iter_mut().zip(out) {
                *v += *o;
            }
        }
    }
    s
}

#[derive(Clone, Debug)]
pub struct HoRcnn<T = f32> {
    pub config: StreamConfig,
    pub num_classes: usize,
    streams: Vec<(StreamKind, Network<T>)>,
}

/// Traces of every stream for one proposal.
pub struct ModelTrace<T> {
    traces: Vec<Trace<T>>,
    pub scores: Vec<T>,
}

impl<T: Scalar> HoRcnn<T> {
    /// Each stream draws its initial weights from its own ChaCha stream of
    /// `seed`, so toggling one stream leaves the others' init unchanged.
    pub fn new(config: StreamConfig, num_classes: usize, seed: u64) -> Result<Self> {
        config.validate()?;
        if num_classes == 0 {
            return Err(Error::Config("model needs at least one class".into()));
        }
        let streams = config
            .streams()
            .into_iter()
            .map(|kind| {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_stream(kind as u64 + 1);
                let net = Network::new(
                    &config.input_shape(kind),
                    &config.layer_specs(kind, num_classes),
                    &mut rng,
                )?;
                Ok((kind, net))
            })
            .collect::<Result<_>>()?;
        Ok(HoRcnn {
            config,
            num_classes,
            streams,
        })
    }

    pub fn streams(&self) -> impl Iterator<Item = (StreamKind, &Network<T>)> {
        self.streams.iter().map(|(k, n)| (*k, n))
    }

    pub fn stream_mut(&mut self, kind: StreamKind) -> Option<&mut Network<T>> {
        self.streams.iter_mut().find(|(k, _)| *k == kind).map(|(_, n)| n)
    }

    pub fn has_stream(&self, kind: StreamKind) -> bool {
        self.streams.iter().any(|(k, _)| *k == kind)
    }

    pub fn param_count(&self) -> usize {
        self.streams.iter().map(|(_, n)| n.param_count()).sum()
    }

    pub fn params(&self) -> Vec<&Vec<T>> {
        self.streams.iter().flat_map(|(_, n)| n.params()).collect()
    }

    pub fn params_mut(&mut self) -> Vec<&mut Vec<T>> {
        self.streams.iter_mut().flat_map(|(_, n)| n.params_mut()).collect()
    }

    pub fn flat_params(&self) -> Vec<T> {
        self.params().into_iter().flatten().copied().collect()
    }

    pub fn set_flat_params(&mut self, values: &[T]) -> Result<()> {
        if values.len() != self.param_count() {
            return Err(Error::Config(format!(
                "expected {} parameters, got {}",
                self.param_count(),
                values.len()
            )));
        }
        let mut rest = values;
        for (_, n) in &mut self.streams {
            let (head, tail) = rest.split_at(n.param_count());
            n.set_flat_params(head)?;
            rest = tail;
        }
        Ok(())
    }

    pub fn zero_grads(&self) -> Gradients<T> {
        Gradients {
            tensors: self.params().iter().map(|p| vec![T::zero(); p.len()]).collect(),
        }
    }

    /// Build stream inputs, clipping boxes to the image. `None` when a
    /// clipped box has zero area.
    pub fn prepare(&self, image: &RgbImage, proposal: &Proposal) -> Option<StreamInputs<T>> {
        let (w, h) = (image.width() as f64, image.height() as f64);
        let hb = proposal.human.bbox.clip(w, h)?;
        let ob = proposal.object.bbox.clip(w, h)?;
        let p = self.config.patch_size;
        let inputs = self
            .streams
            .iter()
            .map(|(kind, _)| match kind {
                StreamKind::Human => crop_resize(image, &hb, p),
                StreamKind::Object => crop_resize(image, &ob, p),
                StreamKind::Union => crop_resize(image, &attention_window(&hb, &ob), p),
                StreamKind::Pairwise => {
                    let mode = self.config.pairwise.expect("pairwise config").mode;
                    encode_ip(&hb, &ob, self.config.ip_size, mode.padded(), &[])
                        .cells()
                        .iter()
                        .map(|&c| T::of(c as f64))
                        .collect()
                }
                StreamKind::Vec => {
                    let mode = self.config.pairwise.expect("pairwise config").mode;
                    let (dx, dy) = encode_vec(&hb, &ob, mode.padded());
                    vec![T::of(dx), T::of(dy)]
                }
                // detector scores are centred like the pixel inputs
                StreamKind::DetectionScores => {
                    vec![T::of(proposal.human.score - 0.5), T::of(proposal.object.score - 0.5)]
                }
                StreamKind::Offset => vec![T::of(proposal.object.score - 0.5)],
            })
            .collect();
        Some(StreamInputs { inputs })
    }

    pub fn forward(&self, inputs: &StreamInputs<T>) -> Scores<T> {
        let per_stream: Vec<(StreamKind, Vec<T>)> = self
            .streams
            .iter()
            .zip(&inputs.inputs)
            .map(|((kind, net), x)| (*kind, net.forward(x)))
            .collect();
        Scores {
            total: combine(&per_stream, self.num_classes),
            per_stream,
            degenerate: false,
        }
    }

    /// Forward pass on an image; degenerate proposals get `-inf` scores.
    pub fn score(&self, image: &RgbImage, proposal: &Proposal) -> Scores<T> {
        match self.prepare(image, proposal) {
            Some(inputs) => self.forward(&inputs),
            None => Scores {
                total: vec![T::neg_infinity(); self.num_classes],
                per_stream: Vec::new(),
                degenerate: true,
            },
        }
    }

    pub fn forward_traced(&self, inputs: &StreamInputs<T>) -> ModelTrace<T> {
        let traces: Vec<Trace<T>> = self
            .streams
            .iter()
            .zip(&inputs.inputs)
            .map(|((_, net), x)| net.forward_traced(x))
            .collect();
        let per_stream: Vec<(StreamKind, Vec<T>)> = self
            .streams
            .iter()
            .zip(&traces)
            .map(|((k, _), t)| (*k, t.output.clone()))
            .collect();
        ModelTrace {
            scores: combine(&per_stream, self.num_classes),
            traces,
        }
    }

    /// Accumulate parameter gradients for `ds = dL/ds_total` into `grads`.
    pub fn backward(&self, trace: &ModelTrace<T>, ds: &[T], grads: &mut Gradients<T>) {
        assert_eq!(ds.len(), self.num_classes);
        let mut start = 0;
        for ((_, net), tr) in self.streams.iter().zip(&trace.traces) {
            let n = net.params().len();
            let dy: Vec<T> = if net.output_len() == 1 && self.num_classes != 1 {
                vec![ds.iter().copied().sum()]
            } else {
                ds.to_vec()
            };
            net.backward(tr, &dy, &mut grads.tensors[start..start + n], false);
            start += n;
        }
    }
}

const CHECKPOINT_MAGIC: &[u8; 8] = b"HOIDETCK";
const CHECKPOINT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct CheckpointHeader {
    config: StreamConfig,
    num_classes: usize,
    tensors: Vec<CheckpointTensor>,
}

#[derive(Serialize, Deserialize)]
struct CheckpointTensor {
    stream: StreamKind,
    len: usize,
}

impl HoRcnn<f32> {
    /// Layout: magic, u32 version, u32 header length, JSON header (config and
    /// tensor table), then every tensor as little-endian f32.
    pub fn to_bytes(&self) -> Vec<u8> {
        let header = CheckpointHeader {
            config: self.config.clone(),
            num_classes: self.num_classes,
            tensors: self
                .streams
                .iter()
                .flat_map(|(k, n)| {
                    n.params()
                        .into_iter()
                        .map(|p| CheckpointTensor { stream: *k, len: p.len() })
                })
                .collect(),
        };
        let json = serde_json::to_vec(&header).expect("header serializes");
        let mut out = Vec::with_capacity(16 + json.len() + 4 * self.param_count());
        out.extend_from_slice(CHECKPOINT_MAGIC);
        out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        out.extend_from_slice(&(json.len() as u32).to_le_bytes());
        out.extend_from_slice(&json);
        for p in self.params() {
            for v in p {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(mut bytes: &[u8]) -> Result<Self> {
        let bad = |m: &str| Error::Checkpoint(m.to_string());
        let mut magic = [0u8; 8];
        bytes.read_exact(&mut magic).map_err(|_| bad("truncated header"))?;
        if &magic != CHECKPOINT_MAGIC {
            return Err(bad("not a checkpoint file"));
        }
        let mut word = [0u8; 4];
        bytes.read_exact(&mut word).map_err(|_| bad("truncated header"))?;
        let version = u32::from_le_bytes(word);
        if version != CHECKPOINT_VERSION {
            return Err(Error::Checkpoint(format!("unsupported version {version}")));
        }
        bytes.read_exact(&mut word).map_err(|_| bad("truncated header"))?;
        let len = u32::from_le_bytes(word) as usize;
        if bytes.len() < len {
            return Err(bad("truncated header"));
        }
        let header: CheckpointHeader = serde_json::from_slice(&bytes[..len])
            .map_err(|e| Error::Checkpoint(format!("header: {e}")))?;
        bytes = &bytes[len..];
        let mut model = HoRcnn::<f32>::new(header.config, header.num_classes, 0)?;
        let expected: Vec<(StreamKind, usize)> = model
            .streams
            .iter()
            .flat_map(|(k, n)| n.params().into_iter().map(|p| (*k, p.len())))
            .collect();
        let table: Vec<(StreamKind, usize)> =
            header.tensors.iter().map(|t| (t.stream, t.len)).collect();
        if expected != table {
            return Err(bad("tensor table does not match the configured architecture"));
        }
        let total: usize = table.iter().map(|t| t.1).sum();
        if bytes.len() != 4 * total {
            return Err(Error::Checkpoint(format!(
                "expected {} weight bytes, found {}",
                4 * total,
                bytes.len()
            )));
        }
        let values: Vec<f32> = bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        model.set_flat_params(&values)?;
        Ok(model)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(&self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::Detection;
    use crate::nn::multilabel_loss;
    use crate::oracle::{central_difference, relative_error};

    fn proposal(h: BBox, o: BBox, hs: f64, os: f64) -> Proposal {
        let d = |b, s, c: &str| Detection {
            image_id: "a".into(),
            category: c.into(),
            bbox: b,
            score: s,
        };
        Proposal {
            image_id: "a".into(),
            human: d(h, hs, "person"),
            object: d(o, os, "cup"),
            object_category: "cup".into(),
        }
    }

    fn bx(x1: f64, y1: f64, x2: f64, y2: f64) -> BBox {
        BBox::new(x1, y1, x2, y2).unwrap()
    }

    fn image() -> RgbImage {
        RgbImage::from_fn(32, 24, |x, y| image::Rgb([(x * 7) as u8, (y * 9) as u8, ((x + y) * 3) as u8]))
    }

    #[test]
    fn summation_example() {
        let streams = vec![
            (StreamKind::Human, vec![0.2f64, -0.1]),
            (StreamKind::Object, vec![0.3, 0.0]),
            (StreamKind::Pairwise, vec![-0.1, 0.5]),
            (StreamKind::Offset, vec![0.05]),
        ];
        let s = combine(&streams, 2);
        assert!((s[0] - 0.45).abs() < 1e-12 && (s[1] - 0.45).abs() < 1e-12);
    }

    #[test]
    fn parity_numbers() {
        let p = pairwise_param_parity(12, 64).unwrap();
        assert_eq!((p.conv, p.fc), (2_114_140, 2_100_492));
        for k in [1, 8, 64] {
            assert!(pairwise_param_parity(k, 64).unwrap().relative_difference <= PARITY_TOLERANCE);
        }
        assert!(pairwise_param_parity(8, 8).is_err());
        assert!(pairwise_param_parity(8, 62).is_err());
    }

    #[test]
    fn single_stream_equals_its_output() {
        let cfg = StreamConfig {
            object: false,
            ..StreamConfig::default()
        }
        .with_sizes(8, 8);
        let m = HoRcnn::<f64>::new(cfg, 3, 1).unwrap();
        let p = proposal(bx(1.0, 1.0, 10.0, 20.0), bx(12.0, 4.0, 30.0, 20.0), 0.9, 0.8);
        let s = m.score(&image(), &p);
        assert_eq!(s.per_stream.len(), 1);
        assert_eq!(s.total, s.per_stream[0].1);
    }

    #[test]
    fn stream_additivity_and_seeded_init() {
        let base = StreamConfig::default().with_sizes(8, 8);
        let full = StreamConfig {
            pairwise: Some(PairwiseConfig { arch: PairwiseArch::Conv, mode: PairFeatureMode::Ip1 }),
            score_offset: Some(ScoreOffset::Shared),
            ..base.clone()
        };
        let a = HoRcnn::<f64>::new(base, 2, 5).unwrap();
        let b = HoRcnn::<f64>::new(full, 2, 5).unwrap();
        let p = proposal(bx(1.0, 1.0, 10.0, 20.0), bx(12.0, 4.0, 30.0, 20.0), 0.9, 0.8);
        let sa = a.score(&image(), &p);
        let sb = b.score(&image(), &p);
        // shared streams get identical weights, so removing the extra streams
        // subtracts exactly their contribution
        let extra: Vec<_> = sb.per_stream[2..].to_vec();
        let rest = combine(&extra, 2);
        for ((b, r), a) in sb.total.iter().zip(&rest).zip(&sa.total) {
            assert!((b - r - a).abs() < 1e-12);
        }
    }

    #[test]
    fn degenerate_boxes_are_flagged() {
        let m = HoRcnn::<f32>::new(StreamConfig::default().with_sizes(8, 8), 2, 0).unwrap();
        let p = proposal(bx(40.0, 0.0, 50.0, 10.0), bx(0.0, 0.0, 5.0, 5.0), 1.0, 1.0);
        let s = m.score(&image(), &p);
        assert!(s.degenerate);
        assert!(s.total.iter().all(|v| *v == f32::NEG_INFINITY));
    }

    #[test]
    fn config_validation() {
        let mut c = StreamConfig::preset("ho-vec1").unwrap();
        c.pairwise.as_mut().unwrap().arch = PairwiseArch::Conv;
        assert!(c.validate().is_err());
        assert!(StreamConfig::preset("ho-ip1-conv").unwrap().with_sizes(64, 30).validate().is_err());
        assert!(StreamConfig::preset("nope").is_err());
        for name in PRESETS {
            StreamConfig::preset(name).unwrap().validate().unwrap();
        }
        assert_eq!(StreamConfig::preset("union").unwrap().streams(), vec![StreamKind::Union]);
    }

    #[test]
    fn crop_of_uniform_image_is_uniform() {
        let img = RgbImage::from_pixel(10, 10, image::Rgb([255, 0, 51]));
        let v: Vec<f64> = crop_resize(&img, &bx(2.5, 1.0, 7.0, 9.0), 4);
        assert!(v[..16].iter().all(|&x| (x - 0.5).abs() < 1e-12));
        assert!(v[16..32].iter().all(|&x| (x + 0.5).abs() < 1e-12));
        assert!(v[32..].iter().all(|&x| (x + 0.3).abs() < 1e-12));
    }

    #[test]
    fn model_gradient_matches_finite_differences() {
        let cfg = StreamConfig {
            detection_scores: true,
            pairwise: Some(PairwiseConfig { arch: PairwiseArch::Fc, mode: PairFeatureMode::Vec1 }),
            score_offset: Some(ScoreOffset::Shared),
            human: false,
            object: false,
            ..StreamConfig::default()
        };
        let m = HoRcnn::<f64>::new(cfg, 3, 2).unwrap();
        let p = proposal(bx(1.0, 1.0, 10.0, 20.0), bx(12.0, 4.0, 30.0, 20.0), 0.7, 0.4);
        let x = m.prepare(&image(), &p).unwrap();
        let y = [1.0, 0.0, 1.0];
        let tr = m.forward_traced(&x);
        let (_, ds) = multilabel_loss(&tr.scores, &y);
        let mut g = m.zero_grads();
        m.backward(&tr, &ds, &mut g);
        let num = central_difference(
            |w| {
                let mut mm = m.clone();
                mm.set_flat_params(w).unwrap();
                multilabel_loss(&mm.forward(&x).total, &y).0
            },
            &m.flat_params(),
            1e-6,
        );
        for (a, b) in g.flat().iter().zip(&num) {
            assert!(relative_error(*a, *b, 1e-4) < 1e-5, "{a} vs {b}");
        }
    }

    #[test]
    fn checkpoint_round_trip() {
        let cfg = StreamConfig::preset("ho-ip1-conv-s").unwrap().with_sizes(8, 8);
        let m = HoRcnn::<f32>::new(cfg, 4, 11).unwrap();
        let bytes = m.to_bytes();
        let back = HoRcnn::from_bytes(&bytes).unwrap();
        assert_eq!(back.flat_params(), m.flat_params());
        assert_eq!(back.config, m.config);
        assert!(HoRcnn::from_bytes(&bytes[..bytes.len() - 1]).is_err());
        assert!(HoRcnn::from_bytes(b"NOTACKPT").is_err());
    }
}
